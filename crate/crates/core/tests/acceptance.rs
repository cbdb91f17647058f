//! Acceptance criteria 1–11, one PASS/FAIL line each.
//!
//! `REFLAB_ACCEPTANCE_LEVEL=smoke` runs the reduced scale; the default is full.
//! `REFLAB_ACCEPTANCE_ONLY=3,9` restricts the run to the listed criteria.

use std::process::ExitCode;

use reflab::harness::{verify_criterion, verify_with, Level};

fn main() -> ExitCode {
    let level = match std::env::var("REFLAB_ACCEPTANCE_LEVEL").as_deref() {
        Ok("smoke") => Level::Smoke,
        _ => Level::Full,
    };
    let seed = 20_261_015;
    println!("acceptance level {level:?}, seed {seed}");
    let mut failed = Vec::new();
    let mut report = |line: String, pass: bool, id: u8| {
        println!("{line}");
        if !pass {
            failed.push(id);
        }
    };
    let only: Option<Vec<u8>> = std::env::var("REFLAB_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let outcome = match &only {
        Some(ids) => ids.iter().try_for_each(|&id| {
            let c = verify_criterion(id, level, seed)?;
            report(c.line(), c.pass, c.id);
            Ok(())
        }),
        None => verify_with(level, seed, |c| report(c.line(), c.pass, c.id)).map(|_| ()),
    };
    if let Err(e) = outcome {
        println!("acceptance aborted: {e}");
        return ExitCode::FAILURE;
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
