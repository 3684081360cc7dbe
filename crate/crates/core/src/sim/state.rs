use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest register the simulator will allocate. 2^26 amplitudes of
/// `Complex64` is 1 GiB.
pub const MAX_QUBITS: usize = 26;

/// Registers at or above this size split single-qubit kernels across the
/// rayon pool.
const PAR_THRESHOLD: usize = 16;

pub type Matrix2 = [[Complex64; 2]; 2];

/// Dense pure state over `num_qubits` qubits.
///
/// Qubit 0 is the least-significant bit of the basis index, so amplitude
/// `k` belongs to the basis state whose bit `q` is `(k >> q) & 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_capacity(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        return Err(Error::Capacity {
            requested: num_qubits,
            limit: MAX_QUBITS,
        });
    }
    Ok(())
}

impl StateVector {
    /// |0…0⟩ on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_capacity(num_qubits)?;
        let len = 1usize << num_qubits;
        if index >= len {
            return Err(Error::argument(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); len];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    /// Wraps raw amplitudes. The length must be a power of two; the caller
    /// is responsible for normalization.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::argument(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        check_capacity(num_qubits)?;
        Ok(Self { num_qubits, amps })
    }

    /// Random normalized state with i.i.d. Gaussian real and imaginary parts
    /// (Haar distributed up to normalization).
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Result<Self> {
        check_capacity(num_qubits)?;
        let amps: Vec<Complex64> = (0..1usize << num_qubits)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let mut state = Self { num_qubits, amps };
        state.normalize();
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            self.amps.iter_mut().for_each(|a| *a *= inv);
        }
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Largest entrywise distance to `other`.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// ⟨Z_q⟩ for every qubit `q`.
    pub fn z_expectations(&self) -> Vec<f64> {
        // ⟨Z_q⟩ = 1 − 2·P(bit q = 1)
        let mut ones = vec![0.0; self.num_qubits];
        for (index, amp) in self.amps.iter().enumerate() {
            let p = amp.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let mut bits = index;
            while bits != 0 {
                let q = bits.trailing_zeros() as usize;
                ones[q] += p;
                bits &= bits - 1;
            }
        }
        let total = self.norm_sqr();
        ones.into_iter().map(|p1| total - 2.0 * p1).collect()
    }

    /// Returns `(Σ_q weights[q]·Z_q)|ψ⟩`, a diagonal (unnormalized) image of
    /// the state.
    pub fn weighted_z_image(&self, weights: &[f64]) -> StateVector {
        debug_assert_eq!(weights.len(), self.num_qubits);
        let total: f64 = weights.iter().sum();
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(index, amp)| {
                let mut value = total;
                let mut bits = index;
                while bits != 0 {
                    let q = bits.trailing_zeros() as usize;
                    value -= 2.0 * weights[q];
                    bits &= bits - 1;
                }
                amp * value
            })
            .collect();
        StateVector {
            num_qubits: self.num_qubits,
            amps,
        }
    }

    pub(crate) fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(Error::Index {
                index: q,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    pub(crate) fn apply_matrix_1q(&mut self, q: usize, m: &Matrix2) {
        let step = 1usize << q;
        let kernel = |chunk: &mut [Complex64]| {
            let (lo, hi) = chunk.split_at_mut(step);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let x = *a;
                let y = *b;
                *a = m[0][0] * x + m[0][1] * y;
                *b = m[1][0] * x + m[1][1] * y;
            }
        };
        if self.num_qubits >= PAR_THRESHOLD {
            self.amps.par_chunks_mut(2 * step).for_each(kernel);
        } else {
            self.amps.chunks_mut(2 * step).for_each(kernel);
        }
    }

    /// Multiplies every amplitude whose index contains all bits of `mask` by
    /// `phase`.
    pub(crate) fn apply_phase_on_mask(&mut self, mask: usize, phase: Complex64) {
        for (index, amp) in self.amps.iter_mut().enumerate() {
            if index & mask == mask {
                *amp *= phase;
            }
        }
    }

    /// Flips `target` on every basis state where all `control_mask` bits are set.
    pub(crate) fn apply_mcx(&mut self, control_mask: usize, target: usize) {
        let tbit = 1usize << target;
        for index in 0..self.amps.len() {
            if index & tbit == 0 && index & control_mask == control_mask {
                self.amps.swap(index, index | tbit);
            }
        }
    }

    pub(crate) fn apply_swap(&mut self, a: usize, b: usize) {
        let abit = 1usize << a;
        let bbit = 1usize << b;
        for index in 0..self.amps.len() {
            if index & abit != 0 && index & bbit == 0 {
                self.amps.swap(index, index ^ abit ^ bbit);
            }
        }
    }

    pub(crate) fn apply_pauli_y(&mut self, q: usize) {
        let i = Complex64::new(0.0, 1.0);
        let zero = Complex64::new(0.0, 0.0);
        self.apply_matrix_1q(q, &[[zero, -i], [i, zero]]);
    }

    pub(crate) fn apply_pauli_z(&mut self, q: usize) {
        self.apply_phase_on_mask(1 << q, Complex64::new(-1.0, 0.0));
    }
}
