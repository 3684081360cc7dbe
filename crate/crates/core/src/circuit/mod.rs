//! Circuit IR with symbolic parameter references.
//!
//! A [`Circuit`] is an immutable-after-construction list of gate records.
//! Angles are either constants or [`ParamRef`]s into a flat parameter
//! vector that is bound at execution time, so one circuit can be evaluated
//! for many parameter settings. Records may carry a layer tag (`enc`,
//! `mix[0]`, …) which the depth analyzer aggregates over.

mod depth;
mod dump;

pub use depth::{analyze_depth, count_gates, CostModel, DepthReport};
pub use dump::parse_dump;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::gate::{apply_raw, validate_shape};
use crate::sim::{apply_depolarizing_trajectory, GateKind, GateOp, NoiseSpec, StateVector};

/// Reference to slot `index` of the parameter vector; the bound angle is
/// `scale·params[index] + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRef {
    pub index: usize,
    pub scale: f64,
    pub offset: f64,
}

impl ParamRef {
    pub fn new(index: usize) -> Self {
        Self {
            index,
            scale: 1.0,
            offset: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Const(f64),
    Param(ParamRef),
}

impl Angle {
    pub fn param(index: usize) -> Self {
        Angle::Param(ParamRef::new(index))
    }

    #[inline]
    fn bind(&self, params: &[f64]) -> f64 {
        match *self {
            Angle::Const(v) => v,
            Angle::Param(r) => r.scale * params[r.index] + r.offset,
        }
    }
}

impl From<f64> for Angle {
    fn from(v: f64) -> Self {
        Angle::Const(v)
    }
}

/// One gate record.
#[derive(Clone, Debug, PartialEq)]
pub struct Op {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub controls: Vec<usize>,
    pub angles: Vec<Angle>,
    pub tag: Option<usize>,
}

impl Op {
    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.targets.iter().chain(&self.controls).copied()
    }

    pub fn is_parameterized(&self) -> bool {
        self.angles.iter().any(|a| matches!(a, Angle::Param(_)))
    }

    #[inline]
    fn bound_angles(&self, params: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (slot, angle) in out.iter_mut().zip(&self.angles) {
            *slot = angle.bind(params);
        }
        out
    }
}

/// Shift applied to a single angle slot of a single op, used by the
/// parameter-shift rule.
#[derive(Clone, Copy, Debug)]
pub(crate) struct AngleShift {
    pub op: usize,
    pub slot: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    ops: Vec<Op>,
    tags: Vec<String>,
    current_tag: Option<usize>,
    required_params: usize,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > crate::sim::MAX_QUBITS {
            return Err(Error::Capacity {
                requested: num_qubits,
                limit: crate::sim::MAX_QUBITS,
            });
        }
        Ok(Self {
            num_qubits,
            ops: Vec::new(),
            tags: Vec::new(),
            current_tag: None,
            required_params: 0,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Smallest parameter-vector length that binds every reference.
    pub fn required_params(&self) -> usize {
        self.required_params
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn tag_of(&self, op: &Op) -> Option<&str> {
        op.tag.map(|t| self.tags[t].as_str())
    }

    /// Subsequent pushes carry `tag` (`None` clears it).
    pub fn set_tag(&mut self, tag: Option<&str>) {
        self.current_tag = tag.map(|name| match self.tags.iter().position(|t| t == name) {
            Some(i) => i,
            None => {
                self.tags.push(name.to_string());
                self.tags.len() - 1
            }
        });
    }

    pub fn push(
        &mut self,
        kind: GateKind,
        targets: Vec<usize>,
        controls: Vec<usize>,
        angles: Vec<Angle>,
    ) -> Result<()> {
        validate_shape(kind, &targets, &controls, angles.len(), self.num_qubits)?;
        for angle in &angles {
            if let Angle::Param(r) = angle {
                self.required_params = self.required_params.max(r.index + 1);
            }
        }
        self.ops.push(Op {
            kind,
            targets,
            controls,
            angles,
            tag: self.current_tag,
        });
        Ok(())
    }

    /// Appends a constant-angle gate.
    pub fn push_gate(&mut self, gate: GateOp) -> Result<()> {
        let angles = gate.angles.into_iter().map(Angle::Const).collect();
        self.push(gate.kind, gate.targets, gate.controls, angles)
    }

    pub fn extend_gates(&mut self, gates: impl IntoIterator<Item = GateOp>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.push_gate(g))
    }

    /// Only the records tagged `tag`, as a standalone circuit.
    pub fn segment(&self, tag: &str) -> Circuit {
        self.filtered(|c, op| c.tag_of(op) == Some(tag))
    }

    fn filtered(&self, keep: impl Fn(&Circuit, &Op) -> bool) -> Circuit {
        let mut out = Circuit::new(self.num_qubits).expect("valid qubit count");
        for op in self.ops.iter().filter(|op| keep(self, op)) {
            out.set_tag(self.tag_of(op));
            out.push(op.kind, op.targets.clone(), op.controls.clone(), op.angles.clone())
                .expect("already validated");
        }
        out.set_tag(None);
        out
    }

    /// Resolves every angle against `params`.
    pub fn bind(&self, params: &[f64]) -> Result<Vec<GateOp>> {
        self.check_binding(params)?;
        Ok(self
            .ops
            .iter()
            .map(|op| {
                let angles = op.angles.iter().map(|a| a.bind(params)).collect();
                GateOp::new(op.kind, op.targets.clone(), op.controls.clone(), angles)
            })
            .collect())
    }

    pub(crate) fn check_binding(&self, params: &[f64]) -> Result<()> {
        if params.len() < self.required_params {
            // report the first offending reference in program order
            let index = self
                .ops
                .iter()
                .flat_map(|op| &op.angles)
                .find_map(|a| match a {
                    Angle::Param(r) if r.index >= params.len() => Some(r.index),
                    _ => None,
                })
                .unwrap_or(self.required_params - 1);
            return Err(Error::Binding {
                index,
                len: params.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.num_qubits() != self.num_qubits {
            return Err(Error::argument(format!(
                "circuit acts on {} qubits, state has {}",
                self.num_qubits,
                state.num_qubits()
            )));
        }
        Ok(())
    }

    /// Applies ops `range` with bound angles, unchecked.
    pub(crate) fn run_ops<R: Rng + ?Sized>(
        &self,
        params: &[f64],
        state: &mut StateVector,
        noise: Option<(&NoiseSpec, &mut R)>,
        shift: Option<AngleShift>,
    ) -> Result<()> {
        self.run_op_range(params, state, noise, shift, 0..self.ops.len())
    }

    /// Like `run_ops`, restricted to the ops in `range`.
    pub(crate) fn run_op_range<R: Rng + ?Sized>(
        &self,
        params: &[f64],
        state: &mut StateVector,
        mut noise: Option<(&NoiseSpec, &mut R)>,
        shift: Option<AngleShift>,
        range: std::ops::Range<usize>,
    ) -> Result<()> {
        let mut qubit_buf = Vec::with_capacity(self.num_qubits);
        for (i, op) in self.ops.iter().enumerate().take(range.end).skip(range.start) {
            let mut angles = op.bound_angles(params);
            if let Some(s) = shift {
                if s.op == i {
                    angles[s.slot] += s.delta;
                }
            }
            apply_raw(state, op.kind, &op.targets, &op.controls, &angles);
            if let Some((spec, rng)) = noise.as_mut() {
                qubit_buf.clear();
                qubit_buf.extend(op.qubits());
                apply_depolarizing_trajectory(state, &qubit_buf, spec, &mut **rng)?;
            }
        }
        Ok(())
    }

    /// Executes the circuit noiselessly on `input`.
    pub fn execute(&self, params: &[f64], input: StateVector) -> Result<StateVector> {
        self.check_binding(params)?;
        self.check_state(&input)?;
        let mut state = input;
        self.run_ops::<rand_chacha::ChaCha8Rng>(params, &mut state, None, None)?;
        Ok(state)
    }

    /// One Monte Carlo trajectory: depolarizing noise on each gate's qubits
    /// after the gate.
    pub fn execute_trajectory<R: Rng + ?Sized>(
        &self,
        params: &[f64],
        input: StateVector,
        noise: &NoiseSpec,
        rng: &mut R,
    ) -> Result<StateVector> {
        noise.validate()?;
        self.check_binding(params)?;
        self.check_state(&input)?;
        let mut state = input;
        self.run_ops(params, &mut state, Some((noise, rng)), None)?;
        Ok(state)
    }

    /// Pauli-Z expectations, averaged over `trajectories` noisy runs when
    /// `noise` is given. Trajectory `t` draws from `noise.trajectory_rng(t)`,
    /// so equal seeds give common random numbers across calls.
    pub fn expectations(
        &self,
        params: &[f64],
        input: &StateVector,
        noise: Option<&NoiseSpec>,
        trajectories: usize,
    ) -> Result<Vec<f64>> {
        self.expectations_shifted(params, input, noise, trajectories, None)
    }

    pub(crate) fn expectations_shifted(
        &self,
        params: &[f64],
        input: &StateVector,
        noise: Option<&NoiseSpec>,
        trajectories: usize,
        shift: Option<AngleShift>,
    ) -> Result<Vec<f64>> {
        self.check_binding(params)?;
        self.check_state(input)?;
        match noise {
            Some(spec) if !spec.is_noiseless() => {
                spec.validate()?;
                let count = trajectories.max(1);
                let mut acc = vec![0.0; self.num_qubits];
                for t in 0..count {
                    let mut rng = spec.trajectory_rng(t as u64);
                    let mut state = input.clone();
                    self.run_ops(params, &mut state, Some((spec, &mut rng)), shift)?;
                    for (a, z) in acc.iter_mut().zip(state.z_expectations()) {
                        *a += z;
                    }
                }
                Ok(acc.into_iter().map(|a| a / count as f64).collect())
            }
            _ => {
                let mut state = input.clone();
                self.run_ops::<rand_chacha::ChaCha8Rng>(params, &mut state, None, shift)?;
                Ok(state.z_expectations())
            }
        }
    }

    /// Adjoint circuit with the same parameter references.
    pub fn inverse(&self) -> Circuit {
        let mut out = self.clone();
        out.ops = self
            .ops
            .iter()
            .rev()
            .map(|op| {
                let negate = |a: &Angle| match *a {
                    Angle::Const(v) => Angle::Const(-v),
                    Angle::Param(r) => Angle::Param(ParamRef {
                        index: r.index,
                        scale: -r.scale,
                        offset: -r.offset,
                    }),
                };
                let angles = match op.kind {
                    GateKind::Rot3 => op.angles.iter().rev().map(negate).collect(),
                    _ => op.angles.iter().map(negate).collect(),
                };
                Op {
                    angles,
                    ..op.clone()
                }
            })
            .collect();
        out
    }

    /// Text dump, one gate per line.
    pub fn dump(&self) -> String {
        dump::write_dump(self)
    }
}

/// Binds `params` and runs `circuit` on `input`. With `noise`, a single
/// trajectory is drawn from stream 0 of the noise seed.
pub fn bind_and_execute(
    circuit: &Circuit,
    params: &[f64],
    input: StateVector,
    noise: Option<&NoiseSpec>,
) -> Result<StateVector> {
    match noise {
        Some(spec) => {
            let mut rng = spec.trajectory_rng(0);
            circuit.execute_trajectory(params, input, spec, &mut rng)
        }
        None => circuit.execute(params, input),
    }
}
