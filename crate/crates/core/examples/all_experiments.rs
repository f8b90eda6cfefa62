//! Runs every experiment kind with default parameters and prints the fits.
//!
//! cargo run --release --example all_experiments [kind-substring ...]

use std::time::Instant;

use odnmr::dynamics::{NoiseModel, OpticalModel};
use odnmr::experiments::{run_experiment, ExperimentKind, ExperimentSpec};
use odnmr::model::EnsembleConfig;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).collect();
    let cfg = EnsembleConfig::default();
    let noise = NoiseModel::default();
    let optics = OpticalModel::default();
    for kind in ExperimentKind::ALL {
        let name = serde_json::to_string(&kind).unwrap();
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        match run_experiment(&ExperimentSpec::new(kind, 1), &cfg, &noise, &optics, 1.48) {
            Ok(out) => {
                println!("{name}: {} rows in {:.1?}", out.table.rows.len(), start.elapsed());
                for f in &out.fits {
                    println!("  {} {:?}", f.label, f.derived);
                }
            }
            Err(e) => println!("{name}: error: {e}"),
        }
    }
}
