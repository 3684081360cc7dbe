//! Builds QNet circuits, prints a text dump, and tabulates depth and gate
//! counts for growing sequence lengths and embedding sizes.

use qnet::circuit::{analyze_depth, parse_dump, CostModel};
use qnet::linalg::Matrix;
use qnet::qnet::{build_qnet, build_qnet_ablated, count_parameters, Ablation, QNetConfig};

fn main() -> qnet::Result<()> {
    let cfg = QNetConfig::new(2, 2, 1)?;
    let x = Matrix::from_rows(&[vec![0.3, -0.2], vec![1.1, 0.4]])?;
    let circuit = build_qnet(&cfg, &x)?;
    let text = circuit.dump();
    println!("QNet n=2 d=2, {} parameters:\n{text}", count_parameters(&cfg));
    assert_eq!(parse_dump(&text)?, circuit);

    let cost = CostModel::default();
    println!("{:>3} {:>3} {:>6} {:>6} {:>6} {:>6}", "n", "d", "enc", "mix", "ff", "gates");
    for (n, d) in [(2, 1), (4, 1), (8, 1), (16, 1), (2, 2), (2, 4), (2, 8)] {
        let cfg = QNetConfig::new(n, d, 1)?;
        let report = analyze_depth(&build_qnet(&cfg, &Matrix::zeros(n, d))?, &cost);
        let layer = |tag: &str| report.per_layer_depth.get(tag).copied().unwrap_or(0);
        let gates: usize = report.gate_count.values().sum();
        println!("{n:>3} {d:>3} {:>6} {:>6} {:>6} {gates:>6}", layer("enc"), layer("mix[0]"), layer("ff[0]"));
    }

    for ablation in [Ablation::Full, Ablation::MixtureOnly, Ablation::FeedforwardOnly] {
        let c = build_qnet_ablated(&cfg, &x, ablation)?;
        println!("{ablation:?}: {} ops, tags {:?}", c.len(), c.tags());
    }
    Ok(())
}
