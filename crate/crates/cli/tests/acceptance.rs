//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Each criterion runs only its own checks (everything else in the suite is
//! skipped) so the wall-clock budget is measured per criterion.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use heisenberg_cli::config::{Settings, Suite};
use heisenberg_cli::report::{Check, Status};
use heisenberg_cli::suites::{run_suite, CHECK_NAMES};

struct Criterion {
    id: u32,
    title: &'static str,
    suite: Suite,
    checks: &'static [&'static str],
    budget: Option<Duration>,
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "group and gauge axioms",
        suite: Suite::Core,
        checks: &["group_associativity", "group_inverse", "dilation_homomorphism", "gauge_homogeneity", "distance_left_invariance"],
        budget: secs(1),
    },
    Criterion {
        id: 2,
        title: "dilation generator: divergence, commutators, Euler",
        suite: Suite::Calculus,
        checks: &["xi_divergence", "xi_commutators", "xi_euler"],
        budget: secs(10),
    },
    Criterion {
        id: 3,
        title: "fundamental solution",
        suite: Suite::Identities,
        checks: &["fundamental_pointwise", "fundamental_flux", "fundamental_kappa_sign"],
        budget: secs(30),
    },
    Criterion {
        id: 4,
        title: "bubble equation and c1 calibration",
        suite: Suite::Identities,
        checks: &["bubble_residual", "c1_reproducible"],
        budget: secs(30),
    },
    Criterion {
        id: 5,
        title: "Pohozaev identity",
        suite: Suite::Identities,
        checks: &["pohozaev_manufactured", "pohozaev_order", "pohozaev_critical"],
        budget: secs(120),
    },
    Criterion {
        id: 6,
        title: "boundary-term limit and c_n",
        suite: Suite::Identities,
        checks: &[
            "cn_stability",
            "cn_kappa_relation",
            "limit_a_m2",
            "limit_a_0",
            "limit_a_1",
            "limit_fit_intercept",
            "limit_fit_slope",
            "limit_fit_r2",
        ],
        budget: secs(120),
    },
    Criterion {
        id: 7,
        title: "rescaling covariance",
        suite: Suite::Blowup,
        checks: &["rescale_equation", "rescale_semigroup"],
        budget: None,
    },
    Criterion {
        id: 8,
        title: "blow-up diagnostic w̄",
        suite: Suite::Blowup,
        checks: &["wbar_single_critical_point", "wbar_argmax_scaling"],
        budget: None,
    },
    Criterion {
        id: 9,
        title: "solver oracle and concentration sweep",
        suite: Suite::Solver,
        checks: &[
            "solver_bubble_coarse",
            "solver_bubble_refined",
            "solver_consistency_order",
            "sweep_max_monotone",
            "sweep_radius_monotone",
        ],
        // five solves at most five minutes each
        budget: secs(5 * 300),
    },
    Criterion {
        id: 10,
        title: "normal-coordinate order tables",
        suite: Suite::Ordercalc,
        checks: &["orders_first_order", "orders_neumann_square", "orders_sublaplacian", "orders_bound", "orders_second_order"],
        budget: secs(1),
    },
];

fn settings_for(c: &Criterion) -> Settings {
    let skip: Vec<String> = CHECK_NAMES.iter().filter(|n| !c.checks.contains(n)).map(|n| format!("\"{n}\"")).collect();
    let sets = ["seed=7".to_string(), format!("skip=[{}]", skip.join(","))];
    Settings::load(None, &sets).expect("acceptance settings")
}

fn describe(c: &Check) -> String {
    let mut s = format!("{}: residual {:.3e} tolerance {:.3e} {:?}", c.name, c.residual, c.tolerance, c.status);
    if let Some(m) = &c.message {
        s.push_str(&format!(" ({m})"));
    }
    s
}

fn run_criterion(c: &Criterion) -> (bool, Duration, Vec<String>) {
    let start = Instant::now();
    let rows: Vec<Check> = run_suite(c.suite, &settings_for(c)).into_iter().filter(|r| r.status != Status::Skipped).collect();
    let elapsed = start.elapsed();
    let mut notes: Vec<String> = rows.iter().filter(|r| !r.passed()).map(describe).collect();
    if rows.len() != c.checks.len() {
        notes.push(format!("expected {} checks, ran {}", c.checks.len(), rows.len()));
    }
    if let Some(b) = c.budget.filter(|b| elapsed > *b) {
        notes.push(format!("took {:.1}s, budget {:.0}s", elapsed.as_secs_f64(), b.as_secs_f64()));
    }
    (notes.is_empty(), elapsed, notes)
}

/// Two `verify --suite all --seed 7` runs must write identical bytes.
fn determinism() -> (bool, Duration, Vec<String>) {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let mut reports = Vec::new();
    let mut notes = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_heis"))
            .args(["verify", "--suite", "all", "--seed", "7", "--out"])
            .arg(&out)
            .output()
            .expect("spawn heis");
        if !matches!(status.status.code(), Some(0 | 1)) {
            notes.push(format!("{run} run exited with {:?}", status.status.code()));
        }
        match std::fs::read(out.join("report.json")) {
            Ok(b) => reports.push(b),
            Err(e) => notes.push(format!("{run} run wrote no report: {e}")),
        }
    }
    if reports.len() == 2 && reports[0] != reports[1] {
        notes.push("report.json differs between runs".into());
    }
    (notes.is_empty(), start.elapsed(), notes)
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored
    let mut failed = 0;
    let mut line = |id: u32, title: &str, (ok, t, notes): (bool, Duration, Vec<String>)| {
        println!("{} criterion {id:>2} ({:>7.2}s) {title}", if ok { "PASS" } else { "FAIL" }, t.as_secs_f64());
        for n in notes {
            println!("       {n}");
        }
        if !ok {
            failed += 1;
        }
    };
    for c in CRITERIA {
        line(c.id, c.title, run_criterion(c));
    }
    line(11, "determinism of verify --seed 7", determinism());
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
