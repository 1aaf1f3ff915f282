//! Acceptance suite: runs every registered experiment at its default size
//! and prints one line per criterion.
//!
//! `ACCEPTANCE_ONLY=NAME[,NAME...]` restricts the run to some experiments.
//! Lines go straight to the stdout handle, so they show up without
//! `--nocapture`.

use std::io::Write;
use std::time::Instant;

use skewlevy::experiments::{registry, ExperimentOptions, DEFAULT_SEED};

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| {
        s.split(',')
            .map(|n| n.trim().to_ascii_uppercase())
            .filter(|n| !n.is_empty())
            .collect()
    });
    let opts = ExperimentOptions {
        seed: DEFAULT_SEED,
        paths: None,
        dt: None,
    };
    let mut failures = Vec::new();
    let mut stdout = std::io::stdout();
    macro_rules! line {
        ($($arg:tt)*) => {{
            writeln!(stdout, $($arg)*).unwrap();
            stdout.flush().unwrap();
        }};
    }
    for exp in registry() {
        if only
            .as_ref()
            .is_some_and(|o| !o.iter().any(|n| n == exp.name))
        {
            continue;
        }
        let start = Instant::now();
        let report = exp.run(&opts);
        let secs = start.elapsed().as_secs_f64();
        let in_budget = secs <= exp.budget_secs;
        match report {
            Ok(rep) => {
                let ok = rep.passed && in_budget;
                line!(
                    "{} {:>2} {:<22} checks {}/{} runtime {:.1}s (budget {:.0}s)",
                    if ok { "PASS" } else { "FAIL" },
                    exp.id,
                    exp.name,
                    rep.checks.iter().filter(|c| c.passed).count(),
                    rep.checks.len(),
                    secs,
                    exp.budget_secs,
                );
                for c in &rep.checks {
                    line!(
                        "     {} {:<40} {:.6e} {} {:.3e}  {}",
                        if c.passed { "ok  " } else { "FAIL" },
                        c.name,
                        c.observed,
                        c.relation.symbol(),
                        c.limit,
                        c.detail
                    );
                }
                for n in &rep.notes {
                    line!("     note: {n}");
                }
                if !ok {
                    failures.push(exp.name);
                }
            }
            Err(e) => {
                line!("FAIL {:>2} {:<22} error: {e}", exp.id, exp.name);
                failures.push(exp.name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
