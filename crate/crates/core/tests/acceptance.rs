//! Acceptance run: the full verification suite at production sizes, one
//! verdict line per criterion, then a second run compared byte for byte.

use std::process::ExitCode;
use std::time::Instant;

use seedbank::suite::{run_suite, CheckResult, SuiteLevel, SuiteOptions, SuiteReport};

const SEED: u64 = 20_240_611;

const TITLES: [&str; 10] = [
    "generator criterion residual < 1e-12",
    "exact duality gap < 1e-8 at t = 0.25, 1, 4",
    "single-colony absorption within 1e-10, fixation |z| <= 4",
    "stationary mixed moments within 1e-8",
    "dual one-particle split within 1e-10, MC |z| <= 4",
    "Monte Carlo duality |z| <= 4 on the heterogeneous ring",
    "clustering identity |z| <= 4 at four times",
    "property suites with zero violations",
    "density conservation |z| <= 4 at every site and time",
    "correlation inequality: exact margin >= 0, MC within 4 sigma",
];

fn describe(c: &CheckResult) -> String {
    format!("{}={:.3e} (limit {:.0e})", c.name, c.metric, c.threshold)
}

fn criterion_line(report: &SuiteReport, k: u8) -> bool {
    let checks: Vec<&CheckResult> = report
        .checks
        .iter()
        .filter(|c| c.criterion == Some(k))
        .collect();
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    let summary: Vec<String> = checks.iter().map(|c| describe(c)).collect();
    println!(
        "criterion {k:>2} {}: {}  [{}]",
        if pass { "PASS" } else { "FAIL" },
        TITLES[k as usize - 1],
        summary.join("; ")
    );
    for c in checks.iter().filter(|c| !c.pass) {
        println!("    failed check {}: {}", c.name, c.detail);
    }
    pass
}

fn main() -> ExitCode {
    let opts = SuiteOptions::new(SuiteLevel::Full, SEED);
    let start = Instant::now();
    let first = match run_suite(&opts) {
        Ok(r) => r,
        Err(e) => {
            println!("suite error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let first_secs = start.elapsed().as_secs_f64();
    let mut all = true;
    for k in 1..=10u8 {
        all &= criterion_line(&first, k);
    }
    for c in first.checks.iter().filter(|c| c.criterion.is_none()) {
        println!(
            "supplementary {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            describe(c)
        );
        all &= c.pass;
    }
    let second = run_suite(&opts).map(|r| r.to_json());
    let identical = second.as_deref().ok() == Some(first.to_json().as_str());
    println!(
        "criterion 11 {}: two full-suite reports with seed {SEED} are byte-identical ({} bytes)",
        if identical { "PASS" } else { "FAIL" },
        first.to_json().len()
    );
    all &= identical;
    println!(
        "full suite: {} checks in {first_secs:.1} s; overall {}",
        first.checks.len(),
        if all { "PASS" } else { "FAIL" }
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
