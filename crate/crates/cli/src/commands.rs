//! Subcommand implementations. Exit codes: 0 for success with a passing
//! certificate, 1 for configuration or usage errors (as `Err`), 2 for
//! verification or certificate failures.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;

use impulse_core::dual::{dual_functional, maximize_dual, verify_certificate, DualEngine, DualReport};
use impulse_core::grid::{greedy_strategy, value_iteration, ValueTable};
use impulse_core::inventory::Regime;
use impulse_core::model::{ImpulseAction, ImpulseModel, State};
use impulse_core::occupation::{characteristic_residual, cost_integrals, occupation_of};
use impulse_core::rollout::{evaluate, evaluate_monte_carlo, trajectory, StationaryStrategy};

use crate::config::{EngineKind, ModelConfig, RunConfig};
use crate::report::{CheckResult, SolveReport, VerifyReport};

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

struct Solved {
    report: SolveReport,
    model: ImpulseModel,
    strategy: StationaryStrategy,
    table: Option<ValueTable>,
}

fn solve(cfg: &RunConfig, cert_tol_override: Option<f64>) -> anyhow::Result<Solved> {
    let d = cfg.solve.d;
    match cfg.solve.engine {
        EngineKind::ClosedForm => {
            let p = cfg
                .inventory_params()
                .context("closed-form engine needs the inventory model")?;
            let engine = DualEngine::ClosedForm(&p);
            let dual = maximize_dual(&engine, d, cfg.solve.search_tol)?;
            let sol = p.solve_constrained()?;
            let strategy = p.strategy_of(&sol);
            let report = assemble_report(
                cfg,
                &dual,
                cert_tol_override,
                Some(sol.regime),
                match sol.regime {
                    Regime::NeverOrder => None,
                    _ => Some(sol.order_qty),
                },
                match sol.regime {
                    Regime::DelayedOrder => Some(sol.tau_star),
                    _ => None,
                },
            );
            Ok(Solved {
                report,
                model: p.model(),
                strategy,
                table: None,
            })
        }
        EngineKind::Grid => {
            let model = cfg.build_model()?;
            let spec = cfg.grid.spec_for(&model);
            let engine = DualEngine::Grid {
                model: &model,
                spec,
                vi_tol: cfg.grid.vi_tol,
                max_iter: cfg.grid.max_iter,
                x0: cfg.solve.x0,
            };
            let dual = maximize_dual(&engine, d, cfg.solve.search_tol)?;
            let table = value_iteration(&model, &[dual.g_star], &spec, cfg.grid.vi_tol, cfg.grid.max_iter)?;
            let strategy = greedy_strategy(&model, &[dual.g_star], &table);
            let report = assemble_report(cfg, &dual, cert_tol_override, None, None, None);
            Ok(Solved {
                report,
                model,
                strategy,
                table: Some(table),
            })
        }
    }
}

fn assemble_report(
    cfg: &RunConfig,
    dual: &DualReport,
    cert_tol_override: Option<f64>,
    regime: Option<Regime>,
    order_qty: Option<f64>,
    tau_star: Option<f64>,
) -> SolveReport {
    let cert_tol = cert_tol_override
        .or(cfg.solve.cert_tol)
        .unwrap_or(dual.cert_tol);
    let check = verify_certificate(dual, cert_tol);
    SolveReport {
        model: match cfg.model {
            ModelConfig::Inventory { .. } => "inventory".into(),
            ModelConfig::Custom { .. } => "custom".into(),
        },
        engine: match cfg.solve.engine {
            EngineKind::ClosedForm => "closed-form".into(),
            EngineKind::Grid => "grid".into(),
        },
        d: dual.d,
        regime: regime.map(|r| r.label().to_string()),
        g_star: dual.g_star,
        g_search: dual.g_search,
        g_analytic: dual.g_analytic,
        order_qty,
        tau_star,
        v0: dual.primal_costs.v0(),
        v1: dual.primal_costs.constraint(1),
        h_star: dual.h_star,
        gap: dual.gap,
        slackness: dual.slackness,
        feasible: dual.feasible,
        cert_tol,
        certificate_passed: check.passed,
        violations: check.violations,
        strategy: dual.strategy.clone(),
    }
}

fn value_table_csv(table: &ValueTable) -> String {
    let mut csv = String::from("x,W\n");
    for (x, w) in table.states.iter().zip(&table.values) {
        let _ = writeln!(csv, "{x},{w}");
    }
    csv
}

pub fn cmd_solve(cfg: &RunConfig, out_dir: &Path, tol: Option<f64>) -> anyhow::Result<i32> {
    let solved = solve(cfg, tol)?;
    write_file(
        out_dir,
        "report.json",
        &(serde_json::to_string_pretty(&solved.report)? + "\n"),
    )?;
    write_file(out_dir, "report.txt", &solved.report.render_text())?;
    if let Some(table) = &solved.table {
        write_file(out_dir, "value_table.csv", &value_table_csv(table))?;
    }
    print!("{}", solved.report.render_text());
    Ok(if solved.report.certificate_passed { 0 } else { 2 })
}

pub fn cmd_trajectory(cfg: &RunConfig, out_dir: &Path, horizon: f64) -> anyhow::Result<i32> {
    anyhow::ensure!(horizon > 0.0, "horizon must be positive");
    let solved = solve(cfg, None)?;
    let events = trajectory(&solved.model, &solved.strategy, cfg.solve.x0, horizon)?;
    let mut csv = String::from("t,kind,x_before,x_after,order\n");
    for e in &events {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            e.t,
            e.kind.label(),
            e.x_before,
            e.x_after,
            e.order
        );
    }
    write_file(out_dir, "trajectory.csv", &csv)?;
    println!(
        "trajectory: {} events over horizon {horizon} using {}",
        events.len(),
        solved.report.strategy
    );
    Ok(0)
}

pub fn cmd_dual_scan(cfg: &RunConfig, out_dir: &Path, g_list: &[f64]) -> anyhow::Result<i32> {
    let d = cfg.solve.d;
    let mut csv = String::from("g,h\n");
    match cfg.solve.engine {
        EngineKind::ClosedForm => {
            let p = cfg
                .inventory_params()
                .context("closed-form engine needs the inventory model")?;
            let engine = DualEngine::ClosedForm(&p);
            for &g in g_list {
                let h = dual_functional(&engine, g, d, cfg.solve.x0)
                    .with_context(|| format!("dual functional failed at g = {g}"))?;
                let _ = writeln!(csv, "{g},{h}");
            }
        }
        EngineKind::Grid => {
            let model = cfg.build_model()?;
            let spec = cfg.grid.spec_for(&model);
            let engine = DualEngine::Grid {
                model: &model,
                spec,
                vi_tol: cfg.grid.vi_tol,
                max_iter: cfg.grid.max_iter,
                x0: cfg.solve.x0,
            };
            for &g in g_list {
                let h = dual_functional(&engine, g, d, cfg.solve.x0)
                    .with_context(|| format!("dual functional failed at g = {g}"))?;
                let _ = writeln!(csv, "{g},{h}");
            }
        }
    }
    write_file(out_dir, "dual_scan.csv", &csv)?;
    println!("dual scan: {} multipliers written", g_list.len());
    Ok(0)
}

fn measure_csv(mu: &impulse_core::occupation::AtomicOccupationMeasure) -> String {
    let mut csv = String::from("x,theta,a,weight\n");
    for atom in &mu.atoms {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            atom.x, atom.action.wait, atom.action.action, atom.weight
        );
    }
    csv
}

pub fn cmd_verify(
    cfg: &RunConfig,
    out_dir: &Path,
    seed: u64,
    tol: Option<f64>,
) -> anyhow::Result<i32> {
    let mut checks: Vec<CheckResult> = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(CheckResult {
            name: name.into(),
            passed,
            detail,
        });
    };

    let solved = solve(cfg, tol)?;
    let model = &solved.model;
    let x0 = State::Alive(cfg.solve.x0);

    check(
        "model-spot-checks",
        model.validate_on_samples(10).is_ok(),
        "flow identity, semigroup, jump range, cost signs on a sample grid".into(),
    );

    if let Some(p) = cfg.inventory_params() {
        // closed-form one-step costs against the quadrature route
        let mut worst = 0.0_f64;
        for i in 0..10 {
            let x = p.capacity * i as f64 / 9.0;
            for k in 0..10 {
                let theta = 0.3 * (k as f64 + 0.5);
                for j in 0..2 {
                    for b in [ImpulseAction::after(theta, 1.0), ImpulseAction::never(0.0)] {
                        let closed = model.one_step_cost(j, State::Alive(x), b)?;
                        let quad = model.one_step_cost_quadrature(j, State::Alive(x), b)?;
                        worst = worst.max((closed - quad).abs());
                    }
                }
            }
        }
        check(
            "cost-quadrature-agreement",
            worst <= cfg.verify.quad_tol,
            format!("worst |closed - quadrature| = {worst:.3e}"),
        );

        // grid value iteration against the closed forms
        let spec = cfg.grid.spec_for(model);
        let multipliers: Vec<f64> = if p.alpha * p.setup_cost >= p.demand {
            vec![0.0]
        } else {
            let (g_c, _) = p.critical_g()?;
            vec![0.75 * g_c, 1.5 * g_c]
        };
        for g in multipliers {
            let table = value_iteration(model, &[g], &spec, cfg.grid.vi_tol, cfg.grid.max_iter)?;
            let hi = p.capacity.min(3.0);
            let worst = (0..=1000)
                .map(|i| hi * i as f64 / 1000.0)
                .map(|x| (table.value_at(x) - p.bellman_closed_form(g, x).unwrap()).abs())
                .fold(0.0, f64::max);
            check(
                &format!("grid-vs-closed-form-g{g:.4}"),
                worst <= cfg.verify.grid_tol,
                format!("sup error {worst:.3e} at tolerance {:.1e}", cfg.verify.grid_tol),
            );
        }
    }

    // occupation measure of the solved strategy
    let mu = occupation_of(model, &solved.strategy, x0, 1e-10)?;
    write_file(out_dir, "measure.csv", &measure_csv(&mu))?;
    let residual = characteristic_residual(model, &mu, x0)?;
    check(
        "occupation-balance",
        residual <= 1e-9,
        format!("residual {residual:.3e}"),
    );
    let by_measure = cost_integrals(model, &mu)?;
    let by_rollout = evaluate(model, &solved.strategy, x0, 1e-10)?.costs;
    let cost_diff = by_measure
        .values
        .iter()
        .zip(&by_rollout.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        "occupation-vs-rollout",
        cost_diff <= 1e-9,
        format!("worst objective difference {cost_diff:.3e}"),
    );

    // dual certificate
    check(
        "dual-certificate",
        solved.report.certificate_passed,
        format!(
            "gap {:.3e}, slackness {:.3e}, tolerance {:.1e}",
            solved.report.gap, solved.report.slackness, solved.report.cert_tol
        ),
    );

    // the cycle holding-cost identity, when the strategy orders
    if let (Some(p), Some(qty)) = (cfg.inventory_params(), solved.report.order_qty) {
        let tau = solved.report.tau_star.unwrap_or(0.0);
        let diff = (p.closed_form_v1(tau, qty) - by_rollout.constraint(1)).abs();
        check(
            "cycle-cost-identity",
            diff <= 1e-9,
            format!("|closed form - rollout| = {diff:.3e}"),
        );
    }

    // Monte Carlo cross-check of the killed chain
    let mc = evaluate_monte_carlo(model, &solved.strategy, x0, cfg.verify.mc_paths, seed)?;
    let mut mc_ok = true;
    let mut mc_detail = String::new();
    for j in 0..model.num_costs() {
        let diff = (mc.means.values[j] - by_rollout.values[j]).abs();
        let window = 4.0 * mc.std_errors[j] + 1e-12;
        mc_ok &= diff <= window;
        let _ = write!(mc_detail, "objective {j}: |diff| {diff:.3e} vs {window:.3e}; ");
    }
    check("monte-carlo-consistency", mc_ok, mc_detail);

    let passed = checks.iter().all(|c| c.passed);
    let report = VerifyReport {
        model: solved.report.model.clone(),
        checks,
        passed,
    };
    write_file(
        out_dir,
        "verify.json",
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    print!("{}", report.render_text());
    Ok(if passed { 0 } else { 2 })
}

pub fn parse_g_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let g: f64 = t
                .parse()
                .with_context(|| format!("invalid multiplier {t:?} in --g-list"))?;
            anyhow::ensure!(g >= 0.0, "multiplier {g} in --g-list is negative");
            Ok(g)
        })
        .collect()
}
