//! Problem datum and its reduction to a killed discrete-stage decision
//! process.
//!
//! Between interventions the state drifts along a deterministic flow; an
//! intervention is a pair `(wait, action)`: let the flow run for `wait` time
//! units, then jump through the jump map. Discounting at rate `alpha` is
//! realized as killing: a step of length `theta` keeps the process alive
//! with probability `exp(-alpha * theta)`, the complementary mass going to
//! an absorbing costless cemetery.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

/// Time to wait before the next intervention. `Never` is the one-point
/// compactification of the half line: no further intervention, ever.
///
/// Kept as a tagged value rather than `f64::INFINITY` so that expressions
/// like `theta * exp(-alpha * theta)` never hit `inf * 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wait {
    Finite(f64),
    Never,
}

impl Wait {
    pub fn as_f64(self) -> f64 {
        match self {
            Wait::Finite(t) => t,
            Wait::Never => f64::INFINITY,
        }
    }

    pub fn is_never(self) -> bool {
        matches!(self, Wait::Never)
    }

    /// Parses the policy used in configs and CSV: `"inf"` means never.
    pub fn parse(s: &str) -> Option<Wait> {
        match s.trim() {
            "inf" | "INF" | "Inf" => Some(Wait::Never),
            other => other.parse::<f64>().ok().filter(|t| *t >= 0.0).map(Wait::Finite),
        }
    }
}

impl fmt::Display for Wait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Wait::Finite(t) => write!(f, "{t}"),
            Wait::Never => write!(f, "inf"),
        }
    }
}

/// A decision `b = (wait, action)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseAction {
    pub wait: Wait,
    pub action: f64,
}

impl ImpulseAction {
    pub fn new(wait: Wait, action: f64) -> Self {
        Self { wait, action }
    }

    pub fn after(theta: f64, action: f64) -> Self {
        Self {
            wait: Wait::Finite(theta),
            action,
        }
    }

    pub fn never(action: f64) -> Self {
        Self {
            wait: Wait::Never,
            action,
        }
    }
}

/// State of the killed chain: a point of the state interval, or the
/// absorbing cemetery. The cemetery is costless; every operation
/// pattern-matches on it rather than encoding it as a magic number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum State {
    Alive(f64),
    Cemetery,
}

impl State {
    pub fn alive(self) -> Option<f64> {
        match self {
            State::Alive(x) => Some(x),
            State::Cemetery => None,
        }
    }
}

/// One-step transition split into its surviving and killed parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionOutcome {
    /// `exp(-alpha * theta)`; zero for a never-intervene step.
    pub survive_prob: f64,
    /// Post-jump state carrying the surviving mass.
    pub next_state: State,
    /// `1 - survive_prob`, the mass sent to the cemetery.
    pub kill_prob: f64,
}

pub type FlowFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
pub type JumpFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
pub type GradualCostFn = dyn Fn(f64) -> f64 + Send + Sync;
pub type LumpCostFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
/// Closed form for the discounted gradual-cost integral
/// `int_0^theta exp(-alpha t) C^g(flow(x, t)) dt`; `Wait::Never` must be
/// handled (the integral over the whole half line).
pub type GradualIntegralFn = dyn Fn(f64, Wait) -> f64 + Send + Sync;
pub type KinkFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;

/// The impulse-control problem datum: intervals, flow, jump map, the
/// `J + 1` cost families and the discount rate.
#[derive(Clone)]
pub struct ImpulseModel {
    state_lo: f64,
    state_hi: f64,
    action_lo: f64,
    action_hi: f64,
    alpha: f64,
    flow: Arc<FlowFn>,
    jump: Arc<JumpFn>,
    gradual_costs: Vec<Arc<GradualCostFn>>,
    lump_costs: Vec<Arc<LumpCostFn>>,
    gradual_integral_forms: Option<Vec<Arc<GradualIntegralFn>>>,
    kink_times: Option<Arc<KinkFn>>,
    gradual_bound: Option<f64>,
    lump_bound: Option<f64>,
    traversal_time: Option<f64>,
    quad_tol: f64,
}

pub struct ImpulseModelBuilder {
    state_lo: f64,
    state_hi: f64,
    action_lo: f64,
    action_hi: f64,
    alpha: f64,
    flow: Option<Arc<FlowFn>>,
    jump: Option<Arc<JumpFn>>,
    gradual_costs: Vec<Arc<GradualCostFn>>,
    lump_costs: Vec<Arc<LumpCostFn>>,
    gradual_integral_forms: Vec<Arc<GradualIntegralFn>>,
    kink_times: Option<Arc<KinkFn>>,
    gradual_bound: Option<f64>,
    lump_bound: Option<f64>,
    traversal_time: Option<f64>,
    quad_tol: f64,
}

impl ImpulseModelBuilder {
    pub fn state_interval(mut self, lo: f64, hi: f64) -> Self {
        self.state_lo = lo;
        self.state_hi = hi;
        self
    }

    pub fn action_interval(mut self, lo: f64, hi: f64) -> Self {
        self.action_lo = lo;
        self.action_hi = hi;
        self
    }

    pub fn discount(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn flow<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.flow = Some(Arc::new(f));
        self
    }

    pub fn jump<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.jump = Some(Arc::new(f));
        self
    }

    /// Appends one cost pair (gradual rate, lump cost); call once per
    /// objective `j = 0, 1, ..., J` in order.
    pub fn cost_pair<G, L>(mut self, gradual: G, lump: L) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        L: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.gradual_costs.push(Arc::new(gradual));
        self.lump_costs.push(Arc::new(lump));
        self
    }

    /// Registers a closed form of the discounted gradual-cost integral for
    /// objective `j`. Quadrature then serves as an independent cross-check
    /// (`one_step_cost_quadrature`).
    pub fn gradual_integral_form<F>(mut self, form: F) -> Self
    where
        F: Fn(f64, Wait) -> f64 + Send + Sync + 'static,
    {
        self.gradual_integral_forms.push(Arc::new(form));
        self
    }

    /// Times at which cost rates may be discontinuous along the flow from
    /// `x`; quadrature splits there.
    pub fn kink_times<F: Fn(f64) -> Vec<f64> + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.kink_times = Some(Arc::new(f));
        self
    }

    /// Upper bound on every gradual cost rate; required for integrating a
    /// never-intervene step.
    pub fn gradual_bound(mut self, bound: f64) -> Self {
        self.gradual_bound = Some(bound);
        self
    }

    /// Upper bound on every lump cost.
    pub fn lump_bound(mut self, bound: f64) -> Self {
        self.lump_bound = Some(bound);
        self
    }

    /// Time for the flow to traverse the state interval; used to size wait
    /// grids.
    pub fn traversal_time(mut self, t: f64) -> Self {
        self.traversal_time = Some(t);
        self
    }

    pub fn quad_tol(mut self, tol: f64) -> Self {
        self.quad_tol = tol;
        self
    }

    pub fn build(self) -> Result<ImpulseModel> {
        // comparisons spelled so that NaN bounds fail them
        let states_ordered = self.state_lo < self.state_hi;
        if !states_ordered {
            return Err(Error::InvalidModel("state interval is empty".into()));
        }
        let actions_ordered = self.action_lo <= self.action_hi;
        if !actions_ordered {
            return Err(Error::InvalidModel("action interval is empty".into()));
        }
        let alpha_positive = self.alpha > 0.0;
        if !alpha_positive {
            return Err(Error::InvalidModel("discount rate must be positive".into()));
        }
        let flow = self
            .flow
            .ok_or_else(|| Error::InvalidModel("flow is missing".into()))?;
        let jump = self
            .jump
            .ok_or_else(|| Error::InvalidModel("jump map is missing".into()))?;
        if self.gradual_costs.is_empty() {
            return Err(Error::InvalidModel("at least one cost pair is required".into()));
        }
        let forms = if self.gradual_integral_forms.is_empty() {
            None
        } else if self.gradual_integral_forms.len() == self.gradual_costs.len() {
            Some(self.gradual_integral_forms)
        } else {
            return Err(Error::InvalidModel(
                "closed-form integrals must cover every objective or none".into(),
            ));
        };
        Ok(ImpulseModel {
            state_lo: self.state_lo,
            state_hi: self.state_hi,
            action_lo: self.action_lo,
            action_hi: self.action_hi,
            alpha: self.alpha,
            flow,
            jump,
            gradual_costs: self.gradual_costs,
            lump_costs: self.lump_costs,
            gradual_integral_forms: forms,
            kink_times: self.kink_times,
            gradual_bound: self.gradual_bound,
            lump_bound: self.lump_bound,
            traversal_time: self.traversal_time,
            quad_tol: self.quad_tol,
        })
    }
}

impl ImpulseModel {
    pub fn builder() -> ImpulseModelBuilder {
        ImpulseModelBuilder {
            state_lo: 0.0,
            state_hi: 1.0,
            action_lo: 0.0,
            action_hi: 1.0,
            alpha: 1.0,
            flow: None,
            jump: None,
            gradual_costs: Vec::new(),
            lump_costs: Vec::new(),
            gradual_integral_forms: Vec::new(),
            kink_times: None,
            gradual_bound: None,
            lump_bound: None,
            traversal_time: None,
            quad_tol: 1e-10,
        }
    }

    pub fn state_interval(&self) -> (f64, f64) {
        (self.state_lo, self.state_hi)
    }

    pub fn action_interval(&self) -> (f64, f64) {
        (self.action_lo, self.action_hi)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of objectives `J + 1` (main cost plus `J` constraints).
    pub fn num_costs(&self) -> usize {
        self.gradual_costs.len()
    }

    /// Number of constraints `J`.
    pub fn num_constraints(&self) -> usize {
        self.num_costs() - 1
    }

    pub fn traversal_time(&self) -> Option<f64> {
        self.traversal_time
    }

    /// Bound on `sup C^g + sup C^I` if both were declared.
    pub fn cost_bound(&self) -> Option<f64> {
        match (self.gradual_bound, self.lump_bound) {
            (Some(g), Some(l)) => Some(g + l),
            _ => None,
        }
    }

    pub fn flow_at(&self, x: f64, t: f64) -> f64 {
        (self.flow)(x, t)
    }

    pub fn jump_at(&self, x: f64, a: f64) -> f64 {
        (self.jump)(x, a)
    }

    pub fn gradual_cost(&self, j: usize, x: f64) -> f64 {
        (self.gradual_costs[j])(x)
    }

    pub fn lump_cost(&self, j: usize, x: f64, a: f64) -> f64 {
        (self.lump_costs[j])(x, a)
    }

    /// `exp(-alpha * theta)`, the per-step survival probability.
    pub fn survival(&self, wait: Wait) -> f64 {
        match wait {
            Wait::Finite(t) => (-self.alpha * t).exp(),
            Wait::Never => 0.0,
        }
    }

    pub fn kinks_from(&self, x: f64) -> Vec<f64> {
        match &self.kink_times {
            Some(f) => f(x),
            None => Vec::new(),
        }
    }

    fn interval_slack(&self) -> f64 {
        1e-9 * (self.state_hi - self.state_lo).max(1.0)
    }

    pub fn contains_state(&self, x: f64) -> bool {
        let eps = self.interval_slack();
        x >= self.state_lo - eps && x <= self.state_hi + eps
    }

    fn check_state(&self, x: f64) -> Result<()> {
        if self.contains_state(x) {
            Ok(())
        } else {
            Err(Error::StateOutOfRange(x))
        }
    }

    /// Post-jump state `jump(flow(x, theta), action)` for a finite wait.
    ///
    /// Out-of-interval flow or jump outputs are reported as errors naming
    /// the offending callable; nothing is clamped on the library side.
    pub fn advance(&self, x: f64, b: ImpulseAction) -> Result<f64> {
        self.check_state(x)?;
        let theta = match b.wait {
            Wait::Finite(t) => t,
            Wait::Never => return Err(Error::AdvanceAfterNever),
        };
        let drifted = self.flow_at(x, theta);
        if !self.contains_state(drifted) {
            return Err(Error::CallableRange {
                callable: "flow",
                value: drifted,
                lo: self.state_lo,
                hi: self.state_hi,
                context: format!("flow({x}, {theta})"),
            });
        }
        let next = self.jump_at(drifted, b.action);
        if !self.contains_state(next) {
            return Err(Error::CallableRange {
                callable: "jump",
                value: next,
                lo: self.state_lo,
                hi: self.state_hi,
                context: format!("jump({drifted}, {})", b.action),
            });
        }
        Ok(next)
    }

    /// Discounted gradual-cost integral of objective `j` over a step from
    /// `x` with the given wait, via the registered closed form when there
    /// is one and adaptive quadrature otherwise.
    pub fn gradual_integral(&self, j: usize, x: f64, wait: Wait) -> Result<f64> {
        if let Some(forms) = &self.gradual_integral_forms {
            return Ok((forms[j])(x, wait));
        }
        self.gradual_integral_quadrature(j, x, wait)
    }

    /// Quadrature route for the gradual-cost integral; independent of any
    /// registered closed form.
    pub fn gradual_integral_quadrature(&self, j: usize, x: f64, wait: Wait) -> Result<f64> {
        let horizon = match wait {
            Wait::Finite(t) => t,
            Wait::Never => {
                let bound = self.gradual_bound.ok_or(Error::MissingGradualBound)?;
                if bound <= 0.0 {
                    return Ok(0.0);
                }
                // exp(-alpha T) * bound <= 1e-12 makes the dropped tail
                // integral at most 1e-12 / alpha.
                (bound / 1e-12).ln() / self.alpha
            }
        };
        if horizon == 0.0 {
            return Ok(0.0);
        }
        let alpha = self.alpha;
        let rate = &self.gradual_costs[j];
        let flow = &self.flow;
        let integrand = move |t: f64| (-alpha * t).exp() * rate(flow(x, t));
        let kinks = self.kinks_from(x);
        quad::adaptive_simpson_split(&integrand, 0.0, horizon, &kinks, self.quad_tol)
    }

    /// One-step cost of objective `j` for the decision `b` taken at `x`:
    /// the discounted gradual cost accrued while waiting plus the
    /// discounted lump cost at the jump. Zero at the cemetery, and the lump
    /// term vanishes for a never-intervene step.
    pub fn one_step_cost(&self, j: usize, x: State, b: ImpulseAction) -> Result<f64> {
        let x = match x {
            State::Alive(x) => x,
            State::Cemetery => return Ok(0.0),
        };
        self.check_state(x)?;
        let integral = self.gradual_integral(j, x, b.wait)?;
        match b.wait {
            Wait::Never => Ok(integral),
            Wait::Finite(theta) => {
                let lump = self.lump_cost(j, self.flow_at(x, theta), b.action);
                Ok(integral + self.survival(b.wait) * lump)
            }
        }
    }

    /// Same as [`one_step_cost`](Self::one_step_cost) but forcing the
    /// quadrature route, for cross-checking registered closed forms.
    pub fn one_step_cost_quadrature(&self, j: usize, x: State, b: ImpulseAction) -> Result<f64> {
        let x = match x {
            State::Alive(x) => x,
            State::Cemetery => return Ok(0.0),
        };
        self.check_state(x)?;
        let integral = self.gradual_integral_quadrature(j, x, b.wait)?;
        match b.wait {
            Wait::Never => Ok(integral),
            Wait::Finite(theta) => {
                let lump = self.lump_cost(j, self.flow_at(x, theta), b.action);
                Ok(integral + self.survival(b.wait) * lump)
            }
        }
    }

    /// One-step transition of the killed chain.
    pub fn transition(&self, x: State, b: ImpulseAction) -> Result<TransitionOutcome> {
        let x = match x {
            State::Alive(x) => x,
            State::Cemetery => {
                return Ok(TransitionOutcome {
                    survive_prob: 0.0,
                    next_state: State::Cemetery,
                    kill_prob: 1.0,
                })
            }
        };
        if b.wait.is_never() {
            return Ok(TransitionOutcome {
                survive_prob: 0.0,
                next_state: State::Cemetery,
                kill_prob: 1.0,
            });
        }
        let survive = self.survival(b.wait);
        let next = self.advance(x, b)?;
        Ok(TransitionOutcome {
            survive_prob: survive,
            next_state: State::Alive(next),
            kill_prob: 1.0 - survive,
        })
    }

    /// Spot-checks the model contract on a sample grid: flow identity at
    /// `t = 0`, the semigroup property, jump range and cost non-negativity.
    pub fn validate_on_samples(&self, points_per_axis: usize) -> Result<()> {
        let n = points_per_axis.max(2);
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                self.state_lo + (self.state_hi - self.state_lo) * i as f64 / (n - 1) as f64
            })
            .collect();
        let horizon = self.traversal_time.unwrap_or(1.0).max(1.0 / self.alpha);
        let ts: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
        let actions: Vec<f64> = (0..n)
            .map(|i| {
                self.action_lo + (self.action_hi - self.action_lo) * i as f64 / (n - 1) as f64
            })
            .collect();
        for &x in &xs {
            let at_zero = self.flow_at(x, 0.0);
            if (at_zero - x).abs() > 1e-12 * x.abs().max(1.0) {
                return Err(Error::InvalidModel(format!(
                    "flow({x}, 0) = {at_zero} differs from {x}"
                )));
            }
            for &s in &ts {
                for &t in &ts {
                    let two_leg = self.flow_at(self.flow_at(x, s), t);
                    let one_leg = self.flow_at(x, s + t);
                    if (two_leg - one_leg).abs() > 1e-12 * one_leg.abs().max(1.0) {
                        return Err(Error::InvalidModel(format!(
                            "semigroup violated at x = {x}, s = {s}, t = {t}"
                        )));
                    }
                }
                let drifted = self.flow_at(x, s);
                for j in 0..self.num_costs() {
                    if self.gradual_cost(j, drifted) < 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "gradual cost {j} is negative at {drifted}"
                        )));
                    }
                }
            }
            for &a in &actions {
                let y = self.jump_at(x, a);
                if !self.contains_state(y) {
                    return Err(Error::CallableRange {
                        callable: "jump",
                        value: y,
                        lo: self.state_lo,
                        hi: self.state_hi,
                        context: format!("jump({x}, {a})"),
                    });
                }
                for j in 0..self.num_costs() {
                    if self.lump_cost(j, x, a) < 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "lump cost {j} is negative at ({x}, {a})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
