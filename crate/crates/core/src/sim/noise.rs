use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::StateVector;
use crate::error::{Error, Result};

/// Single-qubit depolarizing channel strength plus the seed its
/// trajectories are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        let spec = Self { p, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::argument(format!(
                "depolarizing probability {} outside [0, 1]",
                self.p
            )));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.p == 0.0
    }

    /// Independent deterministic stream for trajectory `stream`.
    pub fn trajectory_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Same spec with the seed replaced, used to derive per-example seeds.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self { p: self.p, seed }
    }
}

/// Mixes `salt` into `base` (SplitMix64 finalizer) so per-step and
/// per-example seeds stay decorrelated.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One Monte Carlo draw of the depolarizing channel on each listed qubit:
/// identity with probability `1 − p`, otherwise X, Y or Z with `p/3` each.
pub fn apply_depolarizing_trajectory<R: Rng + ?Sized>(
    state: &mut StateVector,
    qubits: &[usize],
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<()> {
    noise.validate()?;
    for &q in qubits {
        state.check_qubit(q)?;
    }
    if noise.is_noiseless() {
        return Ok(());
    }
    for &q in qubits {
        if rng.random::<f64>() < noise.p {
            match rng.random_range(0..3u8) {
                0 => state.apply_mcx(0, q),
                1 => state.apply_pauli_y(q),
                _ => state.apply_pauli_z(q),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::gate::GateOp;

    fn averaged_z(p: f64, trajectories: u64) -> f64 {
        let noise = NoiseSpec::new(p, 42).unwrap();
        let mut total = 0.0;
        for t in 0..trajectories {
            let mut rng = noise.trajectory_rng(t);
            let mut s = StateVector::zero(1).unwrap();
            apply_depolarizing_trajectory(&mut s, &[0], &noise, &mut rng).unwrap();
            total += s.z_expectations()[0];
        }
        total / trajectories as f64
    }

    #[test]
    fn zero_probability_is_bit_identical() {
        let noise = NoiseSpec::new(0.0, 1).unwrap();
        let mut s = StateVector::zero(2).unwrap();
        s.apply(&GateOp::rot3(0, 0.3, 1.2, -0.4)).unwrap();
        s.apply(&GateOp::rx(1, 0.7)).unwrap();
        let before = s.clone();
        let mut rng = noise.trajectory_rng(0);
        apply_depolarizing_trajectory(&mut s, &[0, 1], &noise, &mut rng).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn channel_average_matches_closed_form() {
        // ⟨Z⟩ → (1 − 4p/3)⟨Z⟩ for the single-qubit depolarizing channel
        for (p, expected) in [(1.0, -1.0 / 3.0), (0.1, 1.0 - 0.4 / 3.0)] {
            let avg = averaged_z(p, 30_000);
            assert!((avg - expected).abs() < 0.02, "p={p}: {avg} vs {expected}");
        }
    }

    #[test]
    fn out_of_range_probability_rejected() {
        assert!(NoiseSpec::new(1.5, 0).is_err());
        assert!(NoiseSpec::new(-0.1, 0).is_err());
        let bad = NoiseSpec { p: 2.0, seed: 0 };
        let mut s = StateVector::zero(1).unwrap();
        let mut rng = bad.trajectory_rng(0);
        assert!(apply_depolarizing_trajectory(&mut s, &[0], &bad, &mut rng).is_err());
    }
}
