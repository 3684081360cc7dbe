//! Runs a fixed QNet under depolarizing noise of growing strength and shows
//! how trajectory averaging converges and how the readout contracts.

use qnet::linalg::Matrix;
use qnet::qnet::{Ablation, QNetCircuit, QNetConfig};
use qnet::sim::NoiseSpec;

fn main() -> qnet::Result<()> {
    let cfg = QNetConfig::new(2, 2, 1)?;
    let qc = QNetCircuit::new(cfg, Ablation::Full)?;
    let params: Vec<f64> = (0..qc.num_params()).map(|i| 0.1 * i as f64).collect();
    let x = Matrix::from_rows(&[vec![0.5, 1.0], vec![-0.4, 0.2]])?;
    let clean = qc.forward(&params, &x, None, 1)?;
    println!("noise-free <Z>: {:.4?}", clean.as_slice());

    for p in [0.01, 0.05, 0.1, 0.5] {
        let noise = NoiseSpec::new(p, 42)?;
        for trajectories in [1, 16, 256] {
            let z = qc.forward(&params, &x, Some(&noise), trajectories)?;
            let gap: f64 = z.as_slice().iter().zip(clean.as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 4.0;
            println!("p={p:<5} trajectories={trajectories:<4} <Z>={:+.3?} mean |Δ| {gap:.3}", z.as_slice());
        }
    }
    Ok(())
}
