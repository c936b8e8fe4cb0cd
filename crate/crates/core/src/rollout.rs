//! Strategy evaluation: exact discounted recursion with geometric closure
//! on cycles, a seeded Monte Carlo cross-check of the killed chain, and a
//! trajectory emitter for plotting.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ImpulseAction, ImpulseModel, State, Wait};

/// Post-jump states closer than this are treated as the same orbit point.
pub const CYCLE_TOL: f64 = 1e-12;

const EPOCH_CAP: usize = 1_000_000;

/// A deterministic stationary strategy: a rule mapping each state to the
/// decision taken there.
#[derive(Clone)]
pub struct StationaryStrategy {
    rule: Arc<dyn Fn(f64) -> ImpulseAction + Send + Sync>,
    pub description: String,
}

impl StationaryStrategy {
    pub fn new<F>(description: impl Into<String>, rule: F) -> Self
    where
        F: Fn(f64) -> ImpulseAction + Send + Sync + 'static,
    {
        Self {
            rule: Arc::new(rule),
            description: description.into(),
        }
    }

    pub fn decide(&self, x: f64) -> ImpulseAction {
        (self.rule)(x)
    }
}

impl std::fmt::Debug for StationaryStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StationaryStrategy({})", self.description)
    }
}

/// The `J + 1` objective values of a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector {
    pub values: Vec<f64>,
}

impl CostVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn v0(&self) -> f64 {
        self.values[0]
    }

    /// Constraint cost of index `j >= 1`.
    pub fn constraint(&self, j: usize) -> f64 {
        self.values[j]
    }

    /// `v0 + sum_j g_j * v_j`, the multiplier-weighted total.
    pub fn weighted(&self, g: &[f64]) -> f64 {
        assert_eq!(g.len() + 1, self.values.len());
        self.values[0]
            + g.iter()
                .zip(&self.values[1..])
                .map(|(gj, vj)| gj * vj)
                .sum::<f64>()
    }
}

/// How the infinite sum over decision epochs was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// The strategy stopped intervening (never-intervene step reached).
    Terminated,
    /// A revisited post-jump state let the remainder close as a geometric
    /// series, exactly.
    ClosedCycle,
    /// The sum was cut once the discount prefix fell below the tolerance.
    Truncated,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub costs: CostVector,
    /// Upper bound on the dropped tail; zero unless truncated.
    pub truncation_bound: f64,
    pub tail: Tail,
}

/// Discounted objective values of a deterministic stationary strategy from
/// `x0`.
///
/// The recursion follows the orbit of post-jump states; once a state
/// recurs (within [`CYCLE_TOL`]) the remaining sum is a geometric series
/// and is closed in one step. Orbits that neither terminate nor cycle are
/// truncated when the discount prefix drops below `tol`, with the reported
/// bound on the dropped tail.
pub fn evaluate(
    model: &ImpulseModel,
    strategy: &StationaryStrategy,
    x0: State,
    tol: f64,
) -> Result<Evaluation> {
    assert!(tol > 0.0);
    let n = model.num_costs();
    let mut sums = vec![0.0; n];
    let mut x = match x0 {
        State::Alive(x) => x,
        State::Cemetery => {
            return Ok(Evaluation {
                costs: CostVector { values: sums },
                truncation_bound: 0.0,
                tail: Tail::Terminated,
            })
        }
    };
    let alpha = model.alpha();
    let mut t = 0.0;
    let mut anchors: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    for _ in 0..EPOCH_CAP {
        let prefix = (-alpha * t).exp();
        if prefix < tol {
            let bound = model
                .cost_bound()
                .map(|c| tol * n as f64 * c / alpha)
                .unwrap_or(f64::INFINITY);
            return Ok(Evaluation {
                costs: CostVector { values: sums },
                truncation_bound: bound,
                tail: Tail::Truncated,
            });
        }
        let b = strategy.decide(x);
        let mut step_costless = true;
        for (j, sum) in sums.iter_mut().enumerate() {
            let cost = model.one_step_cost(j, State::Alive(x), b)?;
            step_costless &= cost == 0.0;
            *sum += prefix * cost;
        }
        let theta = match b.wait {
            Wait::Never => {
                return Ok(Evaluation {
                    costs: CostVector { values: sums },
                    truncation_bound: 0.0,
                    tail: Tail::Terminated,
                })
            }
            Wait::Finite(theta) => theta,
        };
        let next = model.advance(x, b)?;
        if theta == 0.0 && (next - x).abs() <= CYCLE_TOL {
            // a costless zero-time loop adds nothing and the sum is already
            // exact; a costly one diverges
            if step_costless {
                return Ok(Evaluation {
                    costs: CostVector { values: sums },
                    truncation_bound: 0.0,
                    tail: Tail::ClosedCycle,
                });
            }
            return Err(Error::ZeroProgressLoop { x });
        }
        let t_next = t + theta;
        if let Some((_, t_anchor, sums_anchor)) = anchors
            .iter()
            .find(|(x_anchor, _, _)| (x_anchor - next).abs() <= CYCLE_TOL)
        {
            let cycle_len = t_next - t_anchor;
            if cycle_len <= 0.0 {
                return Err(Error::ZeroProgressLoop { x: next });
            }
            let ratio = (-alpha * cycle_len).exp();
            for (sum, anchor) in sums.iter_mut().zip(sums_anchor) {
                *sum = anchor + (*sum - anchor) / (1.0 - ratio);
            }
            return Ok(Evaluation {
                costs: CostVector { values: sums },
                truncation_bound: 0.0,
                tail: Tail::ClosedCycle,
            });
        }
        anchors.push((next, t_next, sums.clone()));
        x = next;
        t = t_next;
    }
    Err(Error::EpochCap(EPOCH_CAP))
}

#[derive(Debug, Clone)]
pub struct McEvaluation {
    pub means: CostVector,
    pub std_errors: Vec<f64>,
    pub n_paths: usize,
}

/// Monte Carlo estimate of the objective values by simulating the killed
/// chain: each step survives with probability `exp(-alpha * theta)`, and
/// per-step costs enter undiscounted (killing realizes the discounting).
///
/// One independent ChaCha stream per path, derived from `(seed, path
/// index)`, so results are reproducible regardless of scheduling.
pub fn evaluate_monte_carlo(
    model: &ImpulseModel,
    strategy: &StationaryStrategy,
    x0: State,
    n_paths: usize,
    seed: u64,
) -> Result<McEvaluation> {
    assert!(n_paths >= 1);
    let n = model.num_costs();
    let totals: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            simulate_path(model, strategy, x0, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut means = vec![0.0; n];
    for path in &totals {
        for (m, y) in means.iter_mut().zip(path) {
            *m += y;
        }
    }
    for m in means.iter_mut() {
        *m /= n_paths as f64;
    }
    let mut std_errors = vec![0.0; n];
    if n_paths > 1 {
        for path in &totals {
            for ((se, y), m) in std_errors.iter_mut().zip(path).zip(&means) {
                *se += (y - m) * (y - m);
            }
        }
        for se in std_errors.iter_mut() {
            *se = (*se / ((n_paths - 1) as f64 * n_paths as f64)).sqrt();
        }
    }
    Ok(McEvaluation {
        means: CostVector { values: means },
        std_errors,
        n_paths,
    })
}

fn simulate_path(
    model: &ImpulseModel,
    strategy: &StationaryStrategy,
    x0: State,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let n = model.num_costs();
    let mut totals = vec![0.0; n];
    let mut x = match x0 {
        State::Alive(x) => x,
        State::Cemetery => return Ok(totals),
    };
    for _ in 0..EPOCH_CAP {
        let b = strategy.decide(x);
        let mut step_costless = true;
        for (j, total) in totals.iter_mut().enumerate() {
            let cost = model.one_step_cost(j, State::Alive(x), b)?;
            step_costless &= cost == 0.0;
            *total += cost;
        }
        let theta = match b.wait {
            Wait::Never => return Ok(totals),
            Wait::Finite(theta) => theta,
        };
        let next = model.advance(x, b)?;
        if theta == 0.0 && (next - x).abs() <= CYCLE_TOL {
            if step_costless {
                return Ok(totals); // stuck in a costless loop; total is exact
            }
            return Err(Error::ZeroProgressLoop { x });
        }
        if rng.gen::<f64>() >= model.survival(b.wait) {
            return Ok(totals); // killed
        }
        x = next;
    }
    Err(Error::EpochCap(EPOCH_CAP))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    WaitStart,
    Impulse,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::WaitStart => "wait-start",
            EventKind::Impulse => "impulse",
        }
    }
}

/// One event on the deterministic (unkilled) timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEvent {
    pub t: f64,
    pub kind: EventKind,
    pub x_before: f64,
    pub x_after: f64,
    /// Impulse size; zero for wait-start events.
    pub order: f64,
}

/// Deterministic timeline of waits and impulses up to `horizon`.
///
/// Emits a wait-start event at each decision epoch and an impulse event at
/// each jump; the flow between events is the plotting tool's job.
pub fn trajectory(
    model: &ImpulseModel,
    strategy: &StationaryStrategy,
    x0: f64,
    horizon: f64,
) -> Result<Vec<TrajectoryEvent>> {
    assert!(horizon > 0.0);
    let mut events = Vec::new();
    let mut x = x0;
    let mut t = 0.0;
    for _ in 0..EPOCH_CAP {
        events.push(TrajectoryEvent {
            t,
            kind: EventKind::WaitStart,
            x_before: x,
            x_after: x,
            order: 0.0,
        });
        let b = strategy.decide(x);
        let theta = match b.wait {
            Wait::Never => return Ok(events),
            Wait::Finite(theta) => theta,
        };
        if t + theta > horizon {
            return Ok(events);
        }
        let drifted = model.flow_at(x, theta);
        let next = model.advance(x, b)?;
        if theta == 0.0 && (next - x).abs() <= CYCLE_TOL {
            return Err(Error::ZeroProgressLoop { x });
        }
        t += theta;
        events.push(TrajectoryEvent {
            t,
            kind: EventKind::Impulse,
            x_before: drifted,
            x_after: next,
            order: b.action,
        });
        x = next;
    }
    Err(Error::EpochCap(EPOCH_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::InventoryParams;

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

    fn never_order() -> StationaryStrategy {
        StationaryStrategy::new("never order", |_| ImpulseAction::never(0.0))
    }

    /// Order one unit whenever the stock runs out.
    fn order_one_at_zero() -> StationaryStrategy {
        StationaryStrategy::new("order 1 at zero stock", |x| ImpulseAction::after(x, 1.0))
    }

    /// Brute-force partial sum of the discounted cost series, independent
    /// of the evaluator's cycle closure.
    fn brute_force(model: &ImpulseModel, f: &StationaryStrategy, x0: f64, terms: usize) -> Vec<f64> {
        let n = model.num_costs();
        let mut sums = vec![0.0; n];
        let mut x = x0;
        let mut t = 0.0;
        for _ in 0..terms {
            let prefix = (-model.alpha() * t).exp();
            let b = f.decide(x);
            for (j, s) in sums.iter_mut().enumerate() {
                *s += prefix * model.one_step_cost(j, State::Alive(x), b).unwrap();
            }
            match b.wait {
                Wait::Never => break,
                Wait::Finite(theta) => {
                    x = model.advance(x, b).unwrap();
                    t += theta;
                }
            }
        }
        sums
    }

    #[test]
    fn never_order_costs() {
        let m = p0().model();
        let eval = evaluate(&m, &never_order(), State::Alive(0.0), 1e-10).unwrap();
        assert!((eval.costs.v0() - 1.0).abs() < 1e-12);
        assert_eq!(eval.costs.constraint(1), 0.0);
        assert_eq!(eval.tail, Tail::Terminated);
    }

    #[test]
    fn cemetery_start_is_free() {
        let m = p0().model();
        let eval = evaluate(&m, &order_one_at_zero(), State::Cemetery, 1e-10).unwrap();
        assert_eq!(eval.costs.values, vec![0.0, 0.0]);
    }

    #[test]
    fn cyclic_strategy_matches_brute_force() {
        let m = p0().model();
        let eval = evaluate(&m, &order_one_at_zero(), State::Alive(0.0), 1e-10).unwrap();
        assert_eq!(eval.tail, Tail::ClosedCycle);
        let oracle = brute_force(&m, &order_one_at_zero(), 0.0, 500);
        assert!((eval.costs.v0() - oracle[0]).abs() < 1e-10);
        assert!((eval.costs.constraint(1) - oracle[1]).abs() < 1e-10);
        // frozen closed forms: V0 = K / (1 - e^{-1}), V1 = e^{-1} / (1 - e^{-1})
        assert!((eval.costs.v0() - 0.7909883534346632).abs() < 1e-12);
        assert!((eval.costs.constraint(1) - 0.5819767068693264).abs() < 1e-12);
    }

    #[test]
    fn zero_progress_loop_is_rejected() {
        let m = p0().model();
        let stuck = StationaryStrategy::new("stay put", |_| ImpulseAction::after(0.0, 0.0));
        let err = evaluate(&m, &stuck, State::Alive(3.0), 1e-10).unwrap_err();
        assert!(matches!(err, Error::ZeroProgressLoop { .. }));
    }

    #[test]
    fn truncation_bound_is_honored() {
        // contraction toward a fixed point: never exactly cyclic until the
        // orbit collapses below the cycle tolerance, so coarse tolerances
        // truncate
        let m = ImpulseModel::builder()
            .state_interval(0.0, 10.0)
            .action_interval(0.0, 10.0)
            .discount(1.0)
            .flow(|x, _| x)
            .jump(|x, a| 0.5 * x + 0.1 * a + 1.0)
            .cost_pair(|x| x, |_, _| 1.0)
            .gradual_bound(10.0)
            .lump_bound(1.0)
            .build()
            .unwrap();
        let f = StationaryStrategy::new("drift to fixed point", |x| {
            ImpulseAction::after(1.0, (x * 0.37).sin().abs())
        });
        let coarse = evaluate(&m, &f, State::Alive(9.0), 1e-4).unwrap();
        assert_eq!(coarse.tail, Tail::Truncated);
        assert!(coarse.truncation_bound > 0.0);
        let fine = evaluate(&m, &f, State::Alive(9.0), 1e-5).unwrap();
        let drift = (coarse.costs.v0() - fine.costs.v0()).abs();
        assert!(
            drift <= coarse.truncation_bound,
            "drift {drift} exceeds reported bound {}",
            coarse.truncation_bound
        );
    }

    #[test]
    fn monte_carlo_single_deterministic_step() {
        let m = p0().model();
        let mc = evaluate_monte_carlo(&m, &never_order(), State::Alive(0.0), 64, 7).unwrap();
        assert!((mc.means.v0() - 1.0).abs() < 1e-12);
        assert_eq!(mc.std_errors[0], 0.0);
    }

    #[test]
    fn monte_carlo_cemetery_start() {
        let m = p0().model();
        let mc = evaluate_monte_carlo(&m, &order_one_at_zero(), State::Cemetery, 16, 7).unwrap();
        assert_eq!(mc.means.values, vec![0.0, 0.0]);
    }

    #[test]
    fn monte_carlo_agrees_with_exact_evaluation() {
        let m = p0().model();
        let f = order_one_at_zero();
        let exact = evaluate(&m, &f, State::Alive(0.0), 1e-10).unwrap();
        let mc = evaluate_monte_carlo(&m, &f, State::Alive(0.0), 100_000, 42).unwrap();
        for j in 0..2 {
            let diff = (mc.means.values[j] - exact.costs.values[j]).abs();
            assert!(
                diff <= 4.0 * mc.std_errors[j].max(1e-12),
                "objective {j}: diff {diff} vs 4 se {}",
                4.0 * mc.std_errors[j]
            );
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let m = p0().model();
        let f = order_one_at_zero();
        let a = evaluate_monte_carlo(&m, &f, State::Alive(0.0), 500, 11).unwrap();
        let b = evaluate_monte_carlo(&m, &f, State::Alive(0.0), 500, 11).unwrap();
        assert_eq!(a.means.values, b.means.values);
    }

    #[test]
    fn trajectory_sawtooth_events() {
        let m = p0().model();
        // wait tau = 0.3 at zero stock, then order 1.2
        let f = StationaryStrategy::new("delayed order", |x| {
            ImpulseAction::after(x / 1.0 + 0.3, 1.2)
        });
        let ev = trajectory(&m, &f, 0.0, 5.0).unwrap();
        assert_eq!(ev[0].kind, EventKind::WaitStart);
        assert_eq!(ev[0].t, 0.0);
        assert_eq!(ev[1].kind, EventKind::Impulse);
        assert!((ev[1].t - 0.3).abs() < 1e-12);
        assert_eq!(ev[1].x_before, 0.0);
        assert!((ev[1].x_after - 1.2).abs() < 1e-12);
        // next impulse after a full drain plus the wait: 0.3 + 1.2 + 0.3
        assert_eq!(ev[2].kind, EventKind::WaitStart);
        assert_eq!(ev[3].kind, EventKind::Impulse);
        assert!((ev[3].t - 1.8).abs() < 1e-12);
    }

    #[test]
    fn trajectory_short_horizon_has_single_wait() {
        let m = p0().model();
        let f = StationaryStrategy::new("slow", |_| ImpulseAction::after(2.0, 1.0));
        let ev = trajectory(&m, &f, 1.0, 0.5).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::WaitStart);
    }

    #[test]
    fn trajectory_never_order_single_wait() {
        let m = p0().model();
        let ev = trajectory(&m, &never_order(), 2.0, 10.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::WaitStart);
    }
}
