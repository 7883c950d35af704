//! Whole-pipeline behaviour on the hand-crafted descriptor path at a new-topic
//! propensity where births are reachable (γ = 1e-3).

use seaterra::imageio::Interest;
use seaterra::pipeline::{self, FeaturePath, PipelineConfig};

const MISSION: &str = "
seed = 1
cae.arch = test
run.features = baseline
synth.segments = stripes:50,checker:50,blotches:50
synth.anomalies = 20:bright,75:dark,130:bright
vocab.size = 64
rost.alpha = 0.1
rost.beta = 25
rost.gamma = 1e-3
run.budget = 20
";

#[test]
fn baseline_path_recovers_terrains_and_flags_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::parse(MISSION).unwrap();
    cfg.out = dir.path().to_path_buf();
    assert_eq!(cfg.features, FeaturePath::Baseline);
    let report = pipeline::report(&cfg).unwrap();
    assert!(report.nmi_terrain >= 0.9, "NMI {}", report.nmi_terrain);
    assert!((3..=5).contains(&report.k_discovered), "K {}", report.k_discovered);

    let run = pipeline::run(&cfg).unwrap();
    let series: Vec<f64> = run.perplexity.per_t.iter().map(|p| p.1).collect();
    let bins = seaterra::eval::bin_perplexity(&series).unwrap();
    let flagged = [20, 75, 130].iter().filter(|&&i| bins.bins[i] != Interest::Low).count();
    assert!(flagged >= 2, "{:?}", [20, 75, 130].map(|i| bins.bins[i]));
}
