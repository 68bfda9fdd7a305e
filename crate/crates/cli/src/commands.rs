//! One function per subcommand. Each returns the process exit code.

use std::path::Path;

use heisenberg::blowup::{log_grid, wbar_profile};
use heisenberg::group::HeisPoint;
use heisenberg::identities::{calibrate_c1, compute_cn, flux, pohozaev_check, Bubble, FundamentalSolution, Nonlinearity};
use heisenberg::ordercalc::{verify_tables, DerivativeRule};
use heisenberg::solver::{assemble_operator, concentration_sweep, solve_dirichlet, write_sweep_csv, Bump, DiscreteField, Grid, NewtonConfig, SweepConfig};
use heisenberg::field::ScalarField;
use serde::Serialize;
use serde_json::json;

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::json;
use crate::report::write_atomic;
use crate::suites;

fn write_json(dir: &Path, name: &str, v: &impl Serialize) -> CliResult<()> {
    let text = json::to_string(v).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&dir.join(name), text.as_bytes())
}

fn write_with<F>(dir: &Path, name: &str, f: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> heisenberg::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(&dir.join(name), &buf)
}

fn bubble_center(s: &Settings) -> CliResult<HeisPoint> {
    match s.f64_list("bubble.x0")[..] {
        [x, y, t] => Ok(HeisPoint::h1(x, y, t)),
        _ => Err(CliError::Config("invalid value for key `bubble.x0`: expected [x, y, t]".into())),
    }
}

pub fn verify(s: &Settings) -> CliResult<i32> {
    let report = suites::run(s);
    report.export(&s.out(), s.format())?;
    for sum in &report.suites {
        println!(
            "{:<11} {:>3} checks  {:>3} passed  {:>2} failed  {:>2} skipped  {:>2} errors",
            sum.suite, sum.checks, sum.passed, sum.failed, sum.skipped, sum.errors
        );
    }
    for c in report.checks.iter().filter(|c| !c.passed() && c.status != crate::report::Status::Skipped) {
        println!(
            "  {:?} {}/{}: residual {} tolerance {}{}",
            c.status,
            c.suite,
            c.name,
            json::fmt_f64(c.residual),
            json::fmt_f64(c.tolerance),
            c.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
        );
    }
    println!("{}", if report.pass { "all checks passed" } else { "some checks did not pass" });
    Ok(report.exit_code())
}

pub fn cn(s: &Settings) -> CliResult<i32> {
    let res = s.resolution();
    let cn = compute_cn(res.n_theta, res.n_phi)?;
    let kappa = flux(&FundamentalSolution::default().field(), 1.0, res.n_theta, res.n_phi)?;
    println!("c_n = {}", json::fmt_f64(cn));
    write_json(&s.out(), "cn.json", &json!({ "cn": cn, "kappa": kappa, "resolution": res }))?;
    Ok(0)
}

/// Samples `U_{λ,x0}` and its relative equation residual on a box grid.
pub fn bubble(s: &Settings) -> CliResult<i32> {
    let c1 = calibrate_c1()?.c1;
    let b = Bubble::new(c1, s.f64("bubble.lambda"), bubble_center(s)?)?;
    let u = b.field();
    let grid = Grid::centered(s.f64("bubble.box_xy"), s.f64("bubble.box_t"), s.usize("bubble.n"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "t", "u", "residual"])?;
    for idx in 0..grid.len() {
        let p = grid.point(idx);
        let [x, y, t] = p.xyt();
        let row = [x, y, t, u.eval(&p)?, b.relative_residual(&u, &p)?];
        w.write_record(row.iter().map(|v| json::fmt_f64(*v)))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&s.out().join("bubble.csv"), &bytes)?;
    println!("wrote {} samples (c1 = {})", grid.len(), json::fmt_f64(c1));
    Ok(0)
}

pub fn pohozaev(s: &Settings) -> CliResult<i32> {
    let p = s.f64("pohozaev.p");
    let (nl, u): (Nonlinearity, ScalarField) = match s.str("pohozaev.case") {
        "bubble" => {
            // U solves −Δ_b U = U^3 only for the calibrated constant
            if p != 3.0 {
                return Err(CliError::Config("invalid value for key `pohozaev.p`: the bubble case needs p = 3".into()));
            }
            (Nonlinearity::power(3.0), Bubble::standard(calibrate_c1()?.c1).field())
        }
        "manufactured" => {
            let u = ScalarField::analytic("u", |x, y, t| {
                let q = x * x + y * y * 2.0 + t * t * 0.25 + x * t * 0.3 + 1.0;
                q.recip() + (x * 0.2 - y * 0.1).exp() * 0.5
            });
            (Nonlinearity::manufactured(&u), u)
        }
        other => return Err(CliError::Config(format!("invalid value for key `pohozaev.case`: `{other}` (bubble or manufactured)"))),
    };
    let rep = pohozaev_check(&nl, &u, s.f64("pohozaev.radius"), s.resolution())?;
    println!(
        "lhs {}  rhs {}  relative residual {}",
        json::fmt_f64(rep.lhs),
        json::fmt_f64(rep.rhs),
        json::fmt_f64(rep.relative_residual)
    );
    write_json(&s.out(), "pohozaev.json", &rep)?;
    Ok(0)
}

pub fn profile(s: &Settings) -> CliResult<i32> {
    let u = Bubble::new(1.0, s.f64("profile.lambda"), HeisPoint::identity(1))?.field();
    let grid = log_grid(s.f64("profile.r_min"), s.f64("profile.r_max"), s.usize("profile.points"))?;
    let res = s.resolution();
    let prof = wbar_profile(&u, s.f64("profile.p"), &grid, res.n_theta / 2, res.n_phi / 2)?;
    write_with(&s.out(), "profile.csv", |b| prof.write_csv(b))?;
    println!("argmax of w̄ at r = {}", json::fmt_f64(prof.argmax()));
    Ok(0)
}

/// Dirichlet problem with the exact bubble `2U` as boundary data.
pub fn solve(s: &Settings) -> CliResult<i32> {
    let n = s.scaled_count("solver.n", 8);
    let grid = Grid::centered(s.f64("solver.box_xy"), s.f64("solver.box_t"), n)?;
    let op = assemble_operator(&grid, 0.0);
    let p = s.f64("solver.p");
    let exact = DiscreteField::sample(&grid, &Bubble::standard(2.0).field())?;
    let cfg = NewtonConfig {
        bump: Bump {
            amplitude: s.f64("solver.bump_amplitude"),
            width: s.f64("solver.bump_width"),
        },
        ..NewtonConfig::default()
    };
    let rep = solve_dirichlet(&op, p, &exact.boundary_only(), &cfg)?;
    let out = s.out();
    write_with(&out, "solution.csv", |b| rep.field.write_csv(b))?;
    // the bubble is the exact solution only at the critical exponent
    let error = (p == 3.0).then(|| rep.field.max_abs_diff(&exact) / exact.max().0);
    write_json(
        &out,
        "solve.json",
        &json!({
            "n": n,
            "p": p,
            "iterations": rep.iterations,
            "residual": rep.residual,
            "history": rep.history,
            "relative_error": error,
        }),
    )?;
    println!("{} Newton iterations, residual {}", rep.iterations, json::fmt_f64(rep.residual));
    if let Some(e) = error {
        println!("relative sup error against the bubble {}", json::fmt_f64(e));
    }
    Ok(0)
}

pub fn sweep(s: &Settings) -> CliResult<i32> {
    let grid = Grid::centered(s.f64("solver.box_xy"), s.f64("solver.box_t"), s.scaled_count("sweep.n", 8))?;
    let cfg = SweepConfig {
        bump: Bump {
            amplitude: s.f64("sweep.bump_amplitude"),
            width: s.f64("sweep.bump_width"),
        },
        ..SweepConfig::default()
    };
    let rows = concentration_sweep(&s.f64_list("sweep.p"), &grid, &cfg)?;
    write_with(&s.out(), "sweep.csv", |b| write_sweep_csv(&rows, b))?;
    for r in &rows {
        println!("p {:.3}  max {}  radius {}", r.p, json::fmt_f64(r.max), json::fmt_f64(r.radius));
    }
    Ok(0)
}

pub fn orders(s: &Settings) -> CliResult<i32> {
    let out = s.out();
    let mut all = Vec::new();
    for rule in [DerivativeRule::anisotropic(), DerivativeRule::strict()] {
        let rep = verify_tables(&rule)?;
        let name = rule.name();
        if s.format().csv() {
            write_with(&out, &format!("orders_{name}.csv"), |b| rep.write_csv(b))?;
        }
        println!("{name}: {} entries, {} mismatches", rep.entries.len(), rep.mismatches().len());
        for e in rep.mismatches() {
            println!("  {} [{} | {}]: claimed {}, computed {} ({})", e.table, e.row, e.column, e.claimed, e.computed, e.status);
        }
        all.push(rep);
    }
    if s.format().json() {
        write_json(&out, "orders.json", &all)?;
    }
    Ok(0)
}
