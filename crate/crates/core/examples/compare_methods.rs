//! Runs every scheme on a few channel realizations of the default scenario.
//!
//! `cargo run --release --example compare_methods -- 5`

use cellfree_ris::{generate_channels, run_baseline, MethodId, ScenarioConfig, SolveOptions};

fn main() -> cellfree_ris::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let config = ScenarioConfig::default();
    let opts = SolveOptions::default();
    println!("{:>4} {:>22} {:>10} {:>5} {:>9}", "seed", "method", "bit/s/Hz", "iters", "time [s]");
    for seed in 0..seeds {
        let ch = generate_channels(&config, seed)?;
        for method in MethodId::ALL {
            let (_, report) = run_baseline(method, &config, &ch, &opts)?;
            println!(
                "{seed:>4} {method:>22} {:>10.4} {:>5} {:>9.3}",
                report.final_sum_rate(),
                report.iterations,
                report.wall_time_s
            );
        }
    }
    Ok(())
}
