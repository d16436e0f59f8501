//! Acceptance run: eight criteria at fixed tolerances, one PASS/FAIL line each.
//! Built with `harness = false` so the table prints whether or not it passes.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mapfluct::model::{builtin, validate, ValidatedModel};
use mapfluct::verify::{
    ballot_checks, inf_factor_checks, kendall_checks, product_checks, reversal_law_checks, rogozin_checks,
    scalar_reduction, structure_checks, upcrossing_and_sup, Check, VerifyOptions,
};
use mapfluct::Result;

fn model(name: &str) -> ValidatedModel {
    validate(builtin(name).expect("built-in")).expect("built-in validates")
}

fn opts(paths: Option<usize>) -> VerifyOptions {
    VerifyOptions { paths, ..VerifyOptions::default() }
}

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    run: fn() -> Result<Vec<Check>>,
}

fn c1() -> Result<Vec<Check>> {
    scalar_reduction(1e-9)
}

fn c2() -> Result<Vec<Check>> {
    structure_checks(&model("MODEL-A"), &opts(None))
}

fn c3() -> Result<Vec<Check>> {
    upcrossing_and_sup(&model("MODEL-A"), &opts(Some(100_000)))
}

fn c4() -> Result<Vec<Check>> {
    inf_factor_checks(&model("MODEL-A"), &opts(Some(100_000)))
}

fn c5() -> Result<Vec<Check>> {
    product_checks(&model("MODEL-D"), &opts(Some(200_000)))
}

fn c6() -> Result<Vec<Check>> {
    rogozin_checks(&model("MODEL-B"), &opts(None))
}

fn c7() -> Result<Vec<Check>> {
    let mut v = kendall_checks(&model("MODEL-A"), &opts(Some(1_000_000)))?;
    v.extend(ballot_checks(&model("MODEL-C"), &opts(Some(1_000_000)))?);
    Ok(v)
}

fn c8() -> Result<Vec<Check>> {
    reversal_law_checks(&model("MODEL-D"), &opts(Some(100_000)))
}

const CRITERIA: [Criterion; 8] = [
    Criterion { id: 1, title: "scalar reduction", budget: Duration::from_secs(1), run: c1 },
    Criterion { id: 2, title: "structure suite", budget: Duration::from_secs(10), run: c2 },
    Criterion { id: 3, title: "up-crossing and sup factor vs MC", budget: Duration::from_secs(120), run: c3 },
    Criterion { id: 4, title: "inf factor vs MC, key identity", budget: Duration::from_secs(120), run: c4 },
    Criterion { id: 5, title: "general-MAP factorization product", budget: Duration::from_secs(300), run: c5 },
    Criterion { id: 6, title: "Spitzer-Rogozin", budget: Duration::from_secs(60), run: c6 },
    Criterion { id: 7, title: "Kendall and ballot", budget: Duration::from_secs(600), run: c7 },
    Criterion { id: 8, title: "time-reversal law (KS)", budget: Duration::from_secs(600), run: c8 },
];

fn main() -> ExitCode {
    let mut failed = 0;
    for c in &CRITERIA {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let (pass, summary) = match &outcome {
            Ok(checks) => {
                let bad: Vec<&Check> = checks.iter().filter(|k| !k.pass).collect();
                let worst = bad.first().map(|k| format!("; first failure: {k}")).unwrap_or_default();
                (bad.is_empty() && in_time, format!("{}/{} checks pass{worst}", checks.len() - bad.len(), checks.len()))
            }
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "{} criterion {}: {} ({}; {:.2}s of {}s budget)",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            summary,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        if let Ok(checks) = &outcome {
            for k in checks {
                println!("    {k}");
            }
        }
        if !pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria pass", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
