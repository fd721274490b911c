//! Acceptance run: one line per criterion with its wall-clock budget.
//! Exits non-zero when any criterion fails.

use pesin_core::config::RunConfig;
use pesin_core::suite::{fmt17, run_suite};
use std::process::ExitCode;
use std::time::Instant;

const CRITERIA: [(&str, &str, f64); 10] = [
    ("spectral", "spectral closed forms for s^2 and u^2", 1.0),
    ("telescoping", "telescoping identity for S^2 and U^2", 10.0),
    ("reduced", "reduced-derivative bounds", 30.0),
    ("decomposition", "perturbation decomposition budgets", 60.0),
    ("ladder", "ladder function properties", 30.0),
    ("contraction", "graph-transform contraction and seed independence", 120.0),
    ("shadowing", "shadowing, semiconjugacy and separation", 300.0),
    ("inverse", "inverse diagnostics on re-grained chain pairs", 120.0),
    ("coding", "finite-to-one coding fiber bound", 120.0),
    ("continuity", "uniform continuity scale", 60.0),
];

fn main() -> ExitCode {
    let cfg = RunConfig::default();
    let mut failed = 0;
    for (i, (suite, title, budget)) in CRITERIA.iter().enumerate() {
        let start = Instant::now();
        let outcome = run_suite(suite, &cfg);
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match &outcome {
            Ok(r) if !r.passed => {
                let worst: Vec<String> = r
                    .failures()
                    .iter()
                    .map(|c| format!("{} = {} vs {}", c.label, fmt17(c.value), fmt17(c.bound)))
                    .collect();
                (false, worst.join("; "))
            }
            Ok(_) if secs >= *budget => (false, format!("over time budget of {budget} s")),
            Ok(r) => (true, format!("{} checks", r.checks.len())),
            Err(e) => (false, format!("{}: {e}", e.name())),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<52} {} ({:.2} s of {budget} s) {detail}",
            i + 1,
            title,
            if ok { "PASS" } else { "FAIL" },
            secs
        );
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
