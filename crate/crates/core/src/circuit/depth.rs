use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Circuit, Op};
use crate::sim::GateKind;

/// Depth charged per gate when scheduling.
///
/// The multi-controlled X is charged linearly in the number of qubits it
/// spans, standing in for a linear-depth decomposition the simulator never
/// materializes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub single_qubit: usize,
    pub two_qubit: usize,
    pub mcx_per_qubit: usize,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            single_qubit: 1,
            two_qubit: 1,
            mcx_per_qubit: 1,
        }
    }
}

impl CostModel {
    pub fn cost(&self, op: &Op) -> usize {
        match op.kind {
            k if k.is_single_qubit() => self.single_qubit,
            GateKind::Cnot | GateKind::CPhase | GateKind::Swap => self.two_qubit,
            GateKind::Mcx => self.mcx_per_qubit * (op.targets.len() + op.controls.len()),
            _ => unreachable!("every kind is covered"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub total_depth: usize,
    pub per_layer_depth: BTreeMap<String, usize>,
    pub per_layer_gates: BTreeMap<String, usize>,
    pub gate_count: BTreeMap<GateKind, usize>,
}

/// List scheduling: each gate starts once all of its qubits are free and
/// holds them for its cost.
fn schedule<'a>(num_qubits: usize, ops: impl Iterator<Item = &'a Op>, cost: &CostModel) -> usize {
    let mut free_at = vec![0usize; num_qubits];
    for op in ops {
        let start = op.qubits().map(|q| free_at[q]).max().unwrap_or(0);
        let end = start + cost.cost(op);
        for q in op.qubits() {
            free_at[q] = end;
        }
    }
    free_at.into_iter().max().unwrap_or(0)
}

pub fn count_gates(circuit: &Circuit) -> BTreeMap<GateKind, usize> {
    let mut counts = BTreeMap::new();
    for op in circuit.ops() {
        *counts.entry(op.kind).or_insert(0) += 1;
    }
    counts
}

pub fn analyze_depth(circuit: &Circuit, cost: &CostModel) -> DepthReport {
    let n = circuit.num_qubits();
    let mut per_layer_depth = BTreeMap::new();
    let mut per_layer_gates = BTreeMap::new();
    for tag in circuit.tags() {
        let ops: Vec<&Op> = circuit
            .ops()
            .iter()
            .filter(|op| circuit.tag_of(op) == Some(tag.as_str()))
            .collect();
        if ops.is_empty() {
            continue;
        }
        per_layer_gates.insert(tag.clone(), ops.len());
        per_layer_depth.insert(tag.clone(), schedule(n, ops.into_iter(), cost));
    }
    DepthReport {
        total_depth: schedule(n, circuit.ops().iter(), cost),
        per_layer_depth,
        per_layer_gates,
        gate_count: count_gates(circuit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::GateOp;
    use proptest::prelude::*;

    #[test]
    fn empty_circuit() {
        let c = Circuit::new(3).unwrap();
        assert!(count_gates(&c).is_empty());
        let r = analyze_depth(&c, &CostModel::default());
        assert_eq!(r.total_depth, 0);
        assert!(r.per_layer_depth.is_empty());
    }

    #[test]
    fn parallel_and_serial_gates() {
        let mut c = Circuit::new(3).unwrap();
        c.extend_gates([GateOp::h(0), GateOp::h(1), GateOp::h(2)]).unwrap();
        assert_eq!(analyze_depth(&c, &CostModel::default()).total_depth, 1);
        c.extend_gates([GateOp::cnot(0, 1), GateOp::cnot(1, 2)]).unwrap();
        assert_eq!(analyze_depth(&c, &CostModel::default()).total_depth, 3);
        c.push_gate(GateOp::mcx(vec![0, 1], 2)).unwrap();
        assert_eq!(analyze_depth(&c, &CostModel::default()).total_depth, 6);
    }

    fn build(gates: &[(usize, usize, usize)], n: usize) -> Circuit {
        let mut c = Circuit::new(n).unwrap();
        for &(kind, a, off) in gates {
            let b = (a + off) % n;
            match kind {
                0 => c.push_gate(GateOp::h(a)),
                1 => c.push_gate(GateOp::cnot(b, a)),
                _ => c.push_gate(GateOp::mcx(vec![b], a)),
            }
            .unwrap();
        }
        c
    }

    fn arb_ops() -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
        proptest::collection::vec((0usize..3, 0usize..5, 1usize..5), 0..40)
    }

    proptest! {
        #[test]
        fn commuting_neighbours_keep_depth(gates in arb_ops(), at in 0usize..40) {
            let n = 5;
            let c = build(&gates, n);
            if gates.len() >= 2 {
                let i = at % (gates.len() - 1);
                let a: Vec<usize> = c.ops()[i].qubits().collect();
                let disjoint = c.ops()[i + 1].qubits().all(|q| !a.contains(&q));
                if disjoint {
                    let mut swapped = gates.clone();
                    swapped.swap(i, i + 1);
                    let d1 = analyze_depth(&c, &CostModel::default()).total_depth;
                    let d2 = analyze_depth(&build(&swapped, n), &CostModel::default()).total_depth;
                    prop_assert_eq!(d1, d2);
                }
            }
        }

        #[test]
        fn depth_bounded_below_by_per_qubit_load(gates in arb_ops()) {
            let c = build(&gates, 5);
            let cost = CostModel::default();
            let mut load = [0usize; 5];
            for op in c.ops() {
                for q in op.qubits() {
                    load[q] += cost.cost(op);
                }
            }
            let r = analyze_depth(&c, &cost);
            prop_assert!(r.total_depth >= *load.iter().max().unwrap());
            prop_assert_eq!(r.gate_count.values().sum::<usize>(), c.len());
        }
    }
}
