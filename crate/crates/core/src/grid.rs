//! Grid value iteration: an oracle for the weighted value function that is
//! independent of any closed form.
//!
//! The decision set is discretized (wait grid per state, including the
//! exact flow kink times and the never-intervene point; uniform action
//! grid), values of off-grid next states come from linear interpolation,
//! and iteration starts from zero so convergence is monotone.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ImpulseAction, ImpulseModel, Wait};
use crate::rollout::StationaryStrategy;

/// Discretization of the decision set and the state interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_states: usize,
    pub n_theta: usize,
    pub n_actions: usize,
    /// Largest finite wait on the grid; the never-intervene point is always
    /// present on top.
    pub theta_max: f64,
}

impl GridSpec {
    /// Default desk-scale grid for a model: enough wait horizon that longer
    /// waits are indistinguishable from never intervening at the tolerances
    /// used here.
    pub fn for_model(model: &ImpulseModel) -> Self {
        GridSpec {
            n_states: 401,
            n_theta: 201,
            n_actions: 101,
            theta_max: 10.0 / model.alpha() + model.traversal_time().unwrap_or(0.0),
        }
    }

    /// Same extents at double the density in every dimension.
    pub fn doubled(&self) -> Self {
        GridSpec {
            n_states: 2 * self.n_states - 1,
            n_theta: 2 * self.n_theta - 1,
            n_actions: 2 * self.n_actions - 1,
            theta_max: self.theta_max,
        }
    }

    fn states(&self, model: &ImpulseModel) -> Vec<f64> {
        let (lo, hi) = model.state_interval();
        linspace(lo, hi, self.n_states)
    }

    fn actions(&self, model: &ImpulseModel) -> Vec<f64> {
        let (lo, hi) = model.action_interval();
        linspace(lo, hi, self.n_actions)
    }

    /// Finite wait candidates for decisions taken at `x`: the uniform grid
    /// plus the declared kink times from `x`.
    fn thetas(&self, model: &ImpulseModel, x: f64) -> Vec<f64> {
        let mut ts = linspace(0.0, self.theta_max, self.n_theta);
        for kink in model.kinks_from(x) {
            if kink > 0.0 && kink <= self.theta_max {
                ts.push(kink);
            }
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup();
        ts
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Converged weighted value function on the state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub spec: GridSpec,
    /// The multipliers the table was computed for.
    pub multipliers: Vec<f64>,
    pub states: Vec<f64>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ValueTable {
    /// Linear interpolation; queries are clamped to the grid range.
    pub fn value_at(&self, x: f64) -> f64 {
        interp(&self.states, &self.values, x)
    }
}

fn interp(states: &[f64], values: &[f64], x: f64) -> f64 {
    let n = states.len();
    let lo = states[0];
    let hi = states[n - 1];
    if x <= lo {
        return values[0];
    }
    if x >= hi {
        return values[n - 1];
    }
    let h = (hi - lo) / (n - 1) as f64;
    let idx = (((x - lo) / h) as usize).min(n - 2);
    let frac = (x - states[idx]) / h;
    values[idx] * (1.0 - frac) + values[idx + 1] * frac
}

/// Everything about a decision grid that does not depend on the value
/// table, precomputed once per state.
struct WaitEntry {
    theta: f64,
    survival: f64,
    drifted: f64,
    /// Weighted gradual-cost integral over the wait.
    base: f64,
}

struct StateSlice {
    waits: Vec<WaitEntry>,
    /// Weighted cost of never intervening from this state.
    never_cost: f64,
}

struct Precomputed {
    states: Vec<f64>,
    actions: Vec<f64>,
    slices: Vec<StateSlice>,
    weights: Vec<f64>,
}

fn weights_of(model: &ImpulseModel, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != model.num_constraints() {
        return Err(Error::InvalidModel(format!(
            "expected {} multipliers, got {}",
            model.num_constraints(),
            g.len()
        )));
    }
    if let Some(bad) = g.iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("multiplier {bad} is negative")));
    }
    let mut w = Vec::with_capacity(g.len() + 1);
    w.push(1.0);
    w.extend_from_slice(g);
    Ok(w)
}

fn precompute(
    model: &ImpulseModel,
    g: &[f64],
    states: Vec<f64>,
    actions: Vec<f64>,
    thetas_for: impl Fn(f64) -> Vec<f64> + Sync,
) -> Result<Precomputed> {
    let weights = weights_of(model, g)?;
    let slices: Vec<StateSlice> = states
        .par_iter()
        .map(|&x| -> Result<StateSlice> {
            let mut waits = Vec::new();
            for theta in thetas_for(x) {
                let wait = Wait::Finite(theta);
                let mut base = 0.0;
                for (j, w) in weights.iter().enumerate() {
                    if *w != 0.0 {
                        base += w * model.gradual_integral(j, x, wait)?;
                    }
                }
                waits.push(WaitEntry {
                    theta,
                    survival: model.survival(wait),
                    drifted: model.flow_at(x, theta),
                    base,
                });
            }
            let mut never_cost = 0.0;
            for (j, w) in weights.iter().enumerate() {
                if *w != 0.0 {
                    never_cost += w * model.gradual_integral(j, x, Wait::Never)?;
                }
            }
            Ok(StateSlice { waits, never_cost })
        })
        .collect::<Result<_>>()?;
    Ok(Precomputed {
        states,
        actions,
        slices,
        weights,
    })
}

/// One-step minimization at a state: the weighted one-step cost plus the
/// survival-discounted interpolated continuation. Ties break toward the
/// smallest wait, then the smallest action; never-intervene is the largest
/// wait.
fn minimize_at(
    model: &ImpulseModel,
    pre: &Precomputed,
    slice: &StateSlice,
    values: &[f64],
) -> Result<(f64, ImpulseAction)> {
    let (lo, hi) = model.state_interval();
    let slack = 1e-9 * (hi - lo).max(1.0);
    let mut best = f64::INFINITY;
    let mut best_b = ImpulseAction::never(pre.actions[0]);
    for entry in &slice.waits {
        for &a in &pre.actions {
            let next = model.jump_at(entry.drifted, a);
            if next < lo - slack || next > hi + slack {
                return Err(Error::CallableRange {
                    callable: "jump",
                    value: next,
                    lo,
                    hi,
                    context: format!("jump({}, {a})", entry.drifted),
                });
            }
            let mut lump = 0.0;
            for (j, w) in pre.weights.iter().enumerate() {
                if *w != 0.0 {
                    lump += w * model.lump_cost(j, entry.drifted, a);
                }
            }
            let bracket =
                entry.base + entry.survival * (lump + interp(&pre.states, values, next));
            if bracket < best {
                best = bracket;
                best_b = ImpulseAction::after(entry.theta, a);
            }
        }
    }
    if slice.never_cost < best {
        best = slice.never_cost;
        best_b = ImpulseAction::never(pre.actions[0]);
    }
    Ok((best, best_b))
}

fn sweep(model: &ImpulseModel, pre: &Precomputed, values: &[f64]) -> Result<(Vec<f64>, f64)> {
    let new: Vec<f64> = pre
        .slices
        .par_iter()
        .map(|slice| minimize_at(model, pre, slice, values).map(|(v, _)| v))
        .collect::<Result<_>>()?;
    let residual = new
        .iter()
        .zip(values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((new, residual))
}

/// Computes the weighted value function at multipliers `g` by value
/// iteration from zero until the sup-norm change drops below `tol`.
pub fn value_iteration(
    model: &ImpulseModel,
    g: &[f64],
    spec: &GridSpec,
    tol: f64,
    max_iter: usize,
) -> Result<ValueTable> {
    assert!(tol > 0.0);
    let pre = precompute(
        model,
        g,
        spec.states(model),
        spec.actions(model),
        |x| spec.thetas(model, x),
    )?;
    let mut values = vec![0.0; pre.states.len()];
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        let (new, res) = sweep(model, &pre, &values)?;
        values = new;
        residual = res;
        if residual < tol {
            return Ok(ValueTable {
                spec: *spec,
                multipliers: g.to_vec(),
                states: pre.states,
                values,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::ValueIterationDiverged {
        sweeps: max_iter,
        residual,
    })
}

/// Worst violation of the one-step optimality inequality on a probe grid
/// at twice the table's density.
#[derive(Debug, Clone, Copy)]
pub struct ResidualReport {
    /// Most negative probe value; zero when the table is feasible
    /// everywhere on the probe grid.
    pub max_violation: f64,
    /// Probe point attaining the minimum.
    pub at: (f64, Wait, f64),
}

/// Probes the inequality "one-step cost plus continuation minus value is
/// non-negative" on a grid at double density in every dimension.
pub fn bellman_residual(
    model: &ImpulseModel,
    g: &[f64],
    table: &ValueTable,
) -> Result<ResidualReport> {
    let probe = table.spec.doubled();
    let pre = precompute(
        model,
        g,
        probe.states(model),
        probe.actions(model),
        |x| probe.thetas(model, x),
    )?;
    let mut worst = f64::INFINITY;
    let mut at = (pre.states[0], Wait::Never, pre.actions[0]);
    for (slice, &x) in pre.slices.iter().zip(&pre.states) {
        let value_here = table.value_at(x);
        for entry in &slice.waits {
            for &a in &pre.actions {
                let next = model.jump_at(entry.drifted, a);
                let mut lump = 0.0;
                for (j, w) in pre.weights.iter().enumerate() {
                    if *w != 0.0 {
                        lump += w * model.lump_cost(j, entry.drifted, a);
                    }
                }
                let lhs = entry.base + entry.survival * (lump + table.value_at(next)) - value_here;
                if lhs < worst {
                    worst = lhs;
                    at = (x, Wait::Finite(entry.theta), a);
                }
            }
        }
        let lhs = slice.never_cost - value_here;
        if lhs < worst {
            worst = lhs;
            at = (x, Wait::Never, pre.actions[0]);
        }
    }
    Ok(ResidualReport {
        max_violation: worst.min(0.0),
        at,
    })
}

/// Extracts the strategy that is greedy with respect to a value table.
///
/// The rule re-minimizes over the gridded decisions at the exact query
/// state (waits include that state's kink times), so it is well defined on
/// the whole interval, not just at grid nodes.
pub fn greedy_strategy(model: &ImpulseModel, g: &[f64], table: &ValueTable) -> StationaryStrategy {
    let model = model.clone();
    let table = table.clone();
    let weights: Vec<f64> = std::iter::once(1.0).chain(g.iter().copied()).collect();
    let spec = table.spec;
    let actions = spec.actions(&model);
    StationaryStrategy::new(
        format!("greedy on {}-state table", table.states.len()),
        move |x| {
            let mut best = f64::INFINITY;
            let mut best_b = ImpulseAction::never(actions[0]);
            for theta in spec.thetas(&model, x) {
                let wait = Wait::Finite(theta);
                let survival = model.survival(wait);
                let drifted = model.flow_at(x, theta);
                let mut base = 0.0;
                for (j, w) in weights.iter().enumerate() {
                    if *w != 0.0 {
                        base += w
                            * model
                                .gradual_integral(j, x, wait)
                                .expect("gradual integral failed in greedy rule");
                    }
                }
                for &a in &actions {
                    let next = model.jump_at(drifted, a);
                    let mut lump = 0.0;
                    for (j, w) in weights.iter().enumerate() {
                        if *w != 0.0 {
                            lump += w * model.lump_cost(j, drifted, a);
                        }
                    }
                    let bracket = base + survival * (lump + table.value_at(next));
                    if bracket < best {
                        best = bracket;
                        best_b = ImpulseAction::after(theta, a);
                    }
                }
            }
            let mut never_cost = 0.0;
            for (j, w) in weights.iter().enumerate() {
                if *w != 0.0 {
                    never_cost += w
                        * model
                            .gradual_integral(j, x, Wait::Never)
                            .expect("gradual integral failed in greedy rule");
                }
            }
            if never_cost < best {
                best_b = ImpulseAction::never(actions[0]);
            }
            best_b
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::InventoryParams;
    use crate::model::State;
    use crate::rollout::evaluate;

    fn p0() -> InventoryParams {
        InventoryParams {
            demand: 1.0,
            setup_cost: 0.5,
            holding_cost: 1.0,
            alpha: 1.0,
            capacity: 10.0,
            d: 0.5,
        }
    }

    fn small_spec(model: &ImpulseModel) -> GridSpec {
        GridSpec {
            n_states: 201,
            n_theta: 101,
            n_actions: 51,
            theta_max: 10.0 / model.alpha() + model.traversal_time().unwrap_or(0.0),
        }
    }

    fn zero_cost_model() -> ImpulseModel {
        ImpulseModel::builder()
            .state_interval(0.0, 1.0)
            .action_interval(0.0, 1.0)
            .discount(1.0)
            .flow(|x, _| x)
            .jump(|x, _| x)
            .cost_pair(|_| 0.0, |_, _| 0.0)
            .gradual_bound(0.0)
            .lump_bound(0.0)
            .build()
            .unwrap()
    }

    #[test]
    fn matches_closed_form_in_tight_regime() {
        let p = p0();
        let m = p.model();
        let table = value_iteration(&m, &[0.3], &small_spec(&m), 1e-8, 500).unwrap();
        let mut worst = 0.0_f64;
        for (&x, &v) in table.states.iter().zip(&table.values) {
            if x > 3.0 {
                continue;
            }
            let w = p.bellman_closed_form(0.3, x).unwrap();
            worst = worst.max((v - w).abs());
        }
        assert!(worst < 2e-3, "sup error {worst}");
    }

    #[test]
    fn matches_never_order_closed_form() {
        let mut p = p0();
        p.setup_cost = 2.0; // ordering never pays off
        let m = p.model();
        let table = value_iteration(&m, &[0.0], &small_spec(&m), 1e-10, 200).unwrap();
        let mut worst = 0.0_f64;
        for (&x, &v) in table.states.iter().zip(&table.values) {
            let w = p.demand / p.alpha * (-p.alpha * x / p.demand).exp();
            worst = worst.max((v - w).abs());
        }
        assert!(worst < 2e-3, "sup error {worst}");
    }

    #[test]
    fn zero_costs_converge_immediately() {
        let m = zero_cost_model();
        let spec = GridSpec {
            n_states: 11,
            n_theta: 11,
            n_actions: 5,
            theta_max: 5.0,
        };
        let table = value_iteration(&m, &[], &spec, 1e-12, 10).unwrap();
        assert_eq!(table.iterations, 1);
        assert!(table.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn iterates_are_monotone_from_zero() {
        let m = p0().model();
        let spec = GridSpec {
            n_states: 41,
            n_theta: 31,
            n_actions: 11,
            theta_max: 12.0,
        };
        let pre = precompute(&m, &[0.3], spec.states(&m), spec.actions(&m), |x| {
            spec.thetas(&m, x)
        })
        .unwrap();
        let mut values = vec![0.0; spec.n_states];
        for _ in 0..10 {
            let (new, _) = sweep(&m, &pre, &values).unwrap();
            for (n, o) in new.iter().zip(&values) {
                assert!(n >= o, "iterates must not decrease");
            }
            values = new;
        }
        assert!(values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn divergence_error_carries_residual() {
        let m = p0().model();
        let spec = GridSpec {
            n_states: 31,
            n_theta: 21,
            n_actions: 11,
            theta_max: 12.0,
        };
        let err = value_iteration(&m, &[0.3], &spec, 1e-12, 2).unwrap_err();
        match err {
            Error::ValueIterationDiverged { sweeps, residual } => {
                assert_eq!(sweeps, 2);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn converged_table_is_feasible_on_probe_grid() {
        let m = p0().model();
        let spec = GridSpec {
            n_states: 201,
            n_theta: 101,
            n_actions: 101,
            theta_max: 12.0,
        };
        let tol = 1e-3;
        let table = value_iteration(&m, &[0.3], &spec, tol, 500).unwrap();
        let report = bellman_residual(&m, &[0.3], &table).unwrap();
        assert!(
            report.max_violation >= -5.0 * tol,
            "violation {} at {:?}",
            report.max_violation,
            report.at
        );
    }

    #[test]
    fn zero_table_is_feasible_with_positive_costs() {
        let m = p0().model();
        let spec = GridSpec {
            n_states: 21,
            n_theta: 11,
            n_actions: 5,
            theta_max: 8.0,
        };
        let table = ValueTable {
            spec,
            multipliers: vec![0.3],
            states: spec.states(&m),
            values: vec![0.0; spec.n_states],
            iterations: 0,
            residual: f64::INFINITY,
        };
        let report = bellman_residual(&m, &[0.3], &table).unwrap();
        assert_eq!(report.max_violation, 0.0);
    }

    #[test]
    fn huge_constant_table_is_infeasible() {
        let m = p0().model();
        let spec = GridSpec {
            n_states: 21,
            n_theta: 11,
            n_actions: 5,
            theta_max: 8.0,
        };
        let table = ValueTable {
            spec,
            multipliers: vec![0.3],
            states: spec.states(&m),
            values: vec![1e6; spec.n_states],
            iterations: 0,
            residual: f64::INFINITY,
        };
        let report = bellman_residual(&m, &[0.3], &table).unwrap();
        assert!(report.max_violation < 0.0);
    }

    #[test]
    fn greedy_recovers_tight_regime_strategy() {
        let p = p0();
        let m = p.model();
        let spec = small_spec(&m);
        let table = value_iteration(&m, &[0.3], &spec, 1e-8, 500).unwrap();
        let f = greedy_strategy(&m, &[0.3], &table);
        let a_g = p.solve_a_g(0.3);
        let action_step = 10.0 / (spec.n_actions - 1) as f64;
        for &x in &[0.0, 0.7, 2.0] {
            let b = f.decide(x);
            assert!(
                (b.wait.as_f64() - x / p.demand).abs() < 1e-9,
                "wait at {x}: {:?}",
                b.wait
            );
            assert!(
                (b.action - a_g).abs() <= 2.0 * action_step,
                "order at {x}: {} vs {a_g}",
                b.action
            );
        }
    }

    #[test]
    fn greedy_never_orders_in_loose_regime() {
        let p = p0();
        let m = p.model();
        let table = value_iteration(&m, &[1.0], &small_spec(&m), 1e-8, 500).unwrap();
        let f = greedy_strategy(&m, &[1.0], &table);
        for &x in &[0.0, 1.0, 5.0, 10.0] {
            assert!(f.decide(x).wait.is_never(), "x = {x}");
        }
    }

    #[test]
    fn greedy_tie_break_on_zero_costs() {
        let m = zero_cost_model();
        let spec = GridSpec {
            n_states: 11,
            n_theta: 11,
            n_actions: 5,
            theta_max: 5.0,
        };
        let table = value_iteration(&m, &[], &spec, 1e-12, 10).unwrap();
        let f = greedy_strategy(&m, &[], &table);
        let b = f.decide(0.5);
        assert_eq!(b.wait, Wait::Finite(0.0));
        assert_eq!(b.action, 0.0);
    }

    #[test]
    fn table_value_sandwiches_greedy_rollout() {
        let p = p0();
        let m = p.model();
        let table = value_iteration(&m, &[0.3], &small_spec(&m), 1e-8, 500).unwrap();
        let f = greedy_strategy(&m, &[0.3], &table);
        let eval = evaluate(&m, &f, State::Alive(0.0), 1e-12).unwrap();
        let weighted = eval.costs.weighted(&[0.3]);
        assert!(
            (table.value_at(0.0) - weighted).abs() < 5e-3,
            "table {} vs rollout {weighted}",
            table.value_at(0.0)
        );
    }

    #[test]
    fn refining_states_and_waits_reduces_error() {
        let p = p0();
        let m = p.model();
        let coarse = GridSpec {
            n_states: 101,
            n_theta: 51,
            n_actions: 101,
            theta_max: 12.0,
        };
        // double the state and wait grids; the action grid is already fine
        // enough that interpolation error dominates
        let fine = GridSpec {
            n_states: 2 * coarse.n_states - 1,
            n_theta: 2 * coarse.n_theta - 1,
            ..coarse
        };
        let sup_err = |table: &ValueTable| {
            (0..=1500)
                .map(|i| 3.0 * i as f64 / 1500.0)
                .map(|x| (table.value_at(x) - p.bellman_closed_form(0.3, x).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let e_coarse = sup_err(&value_iteration(&m, &[0.3], &coarse, 1e-9, 500).unwrap());
        let e_fine = sup_err(&value_iteration(&m, &[0.3], &fine, 1e-9, 500).unwrap());
        assert!(
            e_fine <= 0.5 * e_coarse,
            "coarse {e_coarse} vs fine {e_fine}"
        );
    }
}
