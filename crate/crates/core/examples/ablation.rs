//! Paired-seed comparison of networked and independent duplication rates.
//!
//! Usage: cargo run --release --example ablation [n_seeds]

use episim::backend::SimulationBackend;
use episim::runtime::{analyze, run_with, ExperimentConfig, Mode};
use episim::Scheduling;

fn main() -> episim::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut wins = 0;
    for seed in 0..n {
        let base = ExperimentConfig { seed, ..ExperimentConfig::default() };
        let ind = ExperimentConfig { mode: Mode::Independent, ..base.clone() };
        let a = analyze(&run_with(&base, &SimulationBackend, Scheduling::Parallel)?.log)?;
        let b = analyze(&run_with(&ind, &SimulationBackend, Scheduling::Parallel)?.log)?;
        if b.duplication_rate > a.duplication_rate {
            wins += 1;
        }
        println!(
            "seed {seed:>2}: networked dup {:.3} cov {:.3} | independent dup {:.3} cov {:.3}",
            a.duplication_rate, a.coverage, b.duplication_rate, b.coverage
        );
    }
    println!("independent more duplicated in {wins}/{n} pairs");
    Ok(())
}
