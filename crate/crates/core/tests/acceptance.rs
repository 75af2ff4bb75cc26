//! Acceptance criteria 1-8, one PASS/FAIL line each.
//!
//! Criterion 6 needs the CIFAR-10 binary archive; point `CIFAR10_DIR` at the
//! directory holding `data_batch_*.bin` and `test_batch.bin`. Without it the
//! criterion reports FAIL as blocked and does not fail the test run.

use std::path::PathBuf;
use std::time::Instant;

use tpnet::data;
use tpnet::verify::{self, Check};

struct Outcome {
    id: usize,
    title: &'static str,
    budget_s: f64,
    seconds: f64,
    checks: Vec<Check>,
    blocked: Option<String>,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.blocked.is_none()
            && !self.checks.is_empty()
            && self.checks.iter().all(|c| c.passed)
            && self.seconds <= self.budget_s
    }

    fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!(
            "{status} criterion {}: {} ({:.1}s, budget {}s)",
            self.id, self.title, self.seconds, self.budget_s
        );
        if let Some(why) = &self.blocked {
            s += &format!(" [blocked: {why}]");
        }
        s
    }
}

fn run(id: usize, title: &'static str, budget_s: f64, f: impl FnOnce() -> Vec<Check>) -> Outcome {
    let start = Instant::now();
    let checks = f();
    Outcome { id, title, budget_s, seconds: start.elapsed().as_secs_f64(), checks, blocked: None }
}

fn cifar_dir() -> Option<PathBuf> {
    std::env::var_os("CIFAR10_DIR").map(PathBuf::from).filter(|p| p.join(data::TEST_FILE).is_file())
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = vec![
        run(1, "parameter counts", 1.0, verify::parameter_counts),
        run(2, "MAC deltas and totals", 1.0, verify::mac_counts),
        run(3, "transform round trips and oracle", 10.0, verify::transform_invariants),
        run(4, "convolution theorems", 10.0, verify::convolution_theorems),
        run(5, "gradient checks", 60.0, verify::gradients),
    ];

    let dir = cifar_dir();
    let mut c6 = run(6, "desk-scale learnability", 1800.0, || {
        verify::learnability(dir.as_deref(), |v, row| {
            eprintln!("  {v} epoch {} test acc {:.4}", row.epoch, row.test_acc)
        })
    });
    if dir.is_none() {
        c6.blocked = Some("CIFAR-10 archive not available; set CIFAR10_DIR".into());
    }
    outcomes.push(c6);

    outcomes.push(run(7, "ablation wiring and overfit smoke", 300.0, verify::ablation_wiring));

    let train_set = data::synthetic(512, 32, 1);
    let test_set = data::synthetic(500, 32, 2);
    outcomes.push(run(8, "determinism and checkpoint persistence", 120.0, || {
        verify::determinism(&train_set, &test_set)
    }));

    println!();
    for o in &outcomes {
        for c in &o.checks {
            println!("    {c}");
        }
        println!("{}", o.line());
    }

    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed() && o.blocked.is_none()).map(Outcome::line).collect();
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}
