//! Ten-run linear and nonlinear separation of a synthetic bars mixture.
//!
//! `cargo run --release -p misep-core --example bars_experiment [runs] [seed]`

use std::time::Instant;

use misep::metrics::{evaluate, summarize, EvalParams};
use misep::mixsim::{generate_bars_pair, mix_showthrough, MixParams};
use misep::network::SeparatorKind;
use misep::trainer::{run_series, TrainConfig};

fn main() -> misep::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let runs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let (s1, s2) = generate_bars_pair(25, 500, seed)?;
    let (m1, m2) = mix_showthrough(&s1, &s2, &MixParams { seed, ..Default::default() })?;
    let eval = EvalParams { seed, ..Default::default() };
    let base = evaluate([&m1, &m2], [&s1, &s2], None, eval)?;
    println!("baseline {:?}", base.components);
    for mode in [SeparatorKind::Linear, SeparatorKind::Nonlinear] {
        let t = Instant::now();
        let cfg = TrainConfig { seed, ..TrainConfig::new(mode) };
        let results = run_series([&m1, &m2], [&s1, &s2], &cfg, runs, eval)?;
        let reports: Vec<_> = results.iter().map(|r| r.report.clone()).collect();
        let s = summarize(&reports)?;
        for r in &results {
            let tr = &r.trained.model.meta.objective_trace;
            println!(
                "  {mode} run {} q2 {:.2}/{:.2} q4 {:.3}/{:.3} L0 {:.4} Lend {:.4}",
                r.trained.run,
                r.report.components[0].q2_db,
                r.report.components[1].q2_db,
                r.report.components[0].q4_bits,
                r.report.components[1].q4_bits,
                tr[0],
                tr[tr.len() - 1]
            );
        }
        println!("{mode} mean {:?} ({:.1}s)", s.mean, t.elapsed().as_secs_f64());
    }
    Ok(())
}
