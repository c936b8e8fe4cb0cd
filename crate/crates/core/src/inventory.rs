//! Closed-form solution of the discounted single-item inventory model with
//! a holding-cost constraint.
//!
//! Stock drains at the demand rate and is replenished by impulses capped at
//! the storage capacity. The main objective collects setup and shortage
//! costs, the constraint collects holding cost. Everything here is exact:
//! root equations for the optimal order quantity, the critical multiplier
//! and constraint level, the weighted value functions, and the
//! constraint-optimal strategy with its delayed-order regime. This module
//! serves as the oracle for the grid and rollout routes.

use crate::error::{Error, Result};
use crate::model::{ImpulseAction, ImpulseModel, Wait};
use crate::rollout::StationaryStrategy;
use crate::solve::{bisect_newton, expand_upper};

const ROOT_TOL: f64 = 1e-12;

/// Parameters of the inventory problem.
///
/// * `demand` — units sold per unit time while stock lasts;
/// * `setup_cost` — fixed cost per order;
/// * `holding_cost` — cost per unit of stock per unit time;
/// * `alpha` — discount rate;
/// * `capacity` — storage bound (also caps order quantities);
/// * `d` — admissible level of the discounted holding cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InventoryParams {
    pub demand: f64,
    pub setup_cost: f64,
    pub holding_cost: f64,
    pub alpha: f64,
    pub capacity: f64,
    pub d: f64,
}

/// Which branch of the constrained solution applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Ordering never pays off; keep the stock at zero forever.
    NeverOrder,
    /// The constraint binds: stall for `tau_star` at zero stock, then order.
    DelayedOrder,
    /// The constraint is loose enough to order the moment stock runs out.
    ImmediateOrder,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::NeverOrder => "never_order",
            Regime::DelayedOrder => "delayed_order",
            Regime::ImmediateOrder => "immediate_order",
        }
    }
}

/// Constrained-optimal strategy parameters and its two objective values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InventorySolution {
    pub regime: Regime,
    /// Optimal Lagrange multiplier.
    pub g_star: f64,
    /// Order quantity placed at zero stock (zero in the never-order regime).
    pub order_qty: f64,
    /// Stall time at zero stock before ordering.
    pub tau_star: f64,
    pub v0: f64,
    pub v1: f64,
}

impl InventoryParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("demand", self.demand),
            ("setup_cost", self.setup_cost),
            ("holding_cost", self.holding_cost),
            ("alpha", self.alpha),
            ("capacity", self.capacity),
        ];
        for (name, v) in positive {
            let ok = v.is_finite() && v > 0.0;
            if !ok {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        if self.d < 0.0 {
            return Err(Error::NegativeConstraintLevel(self.d));
        }
        Ok(())
    }

    /// Builds the generic impulse-control model for these parameters, with
    /// the exact discounted cost integrals registered (quadrature remains
    /// available as a cross-check).
    pub fn model(&self) -> ImpulseModel {
        let p = *self;
        let (dem, k, h, alpha, cap) = (p.demand, p.setup_cost, p.holding_cost, p.alpha, p.capacity);
        ImpulseModel::builder()
            .state_interval(0.0, cap)
            .action_interval(0.0, cap)
            .discount(alpha)
            .flow(move |x, t| {
                let y = x - dem * t;
                if y >= 0.0 {
                    y
                } else {
                    0.0
                }
            })
            .jump(move |x, a| (x + a).min(cap))
            // shortage cost rate D while the shelf is empty; setup cost per order
            .cost_pair(
                move |x| if x == 0.0 { dem } else { 0.0 },
                move |_, _| k,
            )
            // holding cost rate H x; no lump component
            .cost_pair(move |x| h * x, move |_, _| 0.0)
            .gradual_integral_form(move |x, wait| {
                let drain = x / dem;
                match wait {
                    Wait::Finite(theta) if theta <= drain => 0.0,
                    Wait::Finite(theta) => {
                        dem / alpha * ((-alpha * drain / 1.0).exp() - (-alpha * theta).exp())
                    }
                    Wait::Never => dem / alpha * (-alpha * drain).exp(),
                }
            })
            .gradual_integral_form(move |x, wait| {
                let drain = x / dem;
                let drained = h * x / alpha + h * dem / (alpha * alpha) * ((-alpha * drain).exp() - 1.0);
                match wait {
                    Wait::Finite(theta) if theta <= drain => {
                        h * x / alpha * (1.0 - (-alpha * theta).exp())
                            + h * dem
                                * ((-alpha * theta).exp() * (theta / alpha + 1.0 / (alpha * alpha))
                                    - 1.0 / (alpha * alpha))
                    }
                    _ => drained,
                }
            })
            .kink_times(move |x| if x > 0.0 { vec![x / dem] } else { Vec::new() })
            .gradual_bound(dem.max(h * cap))
            .lump_bound(k)
            .traversal_time(cap / dem)
            .build()
            .expect("inventory model datum is well formed")
    }

    /// The optimal order quantity at multiplier `g > 0`: the unique positive
    /// root of the order-size equation balancing setup, shortage and
    /// holding terms.
    pub fn solve_a_g(&self, g: f64) -> f64 {
        assert!(g > 0.0, "multiplier must be positive");
        let (dem, k, h, alpha) = (self.demand, self.setup_cost, self.holding_cost, self.alpha);
        // f(a) = (gH/alpha)(e^{alpha a / D} - 1) - alpha K / D - (gH/D) a,
        // negative at 0, strictly increasing once e^{alpha a / D} > 1
        let f = |a: f64| {
            g * h / alpha * (alpha * a / dem).exp_m1() - alpha * k / dem - g * h / dem * a
        };
        let df = |a: f64| g * h / dem * ((alpha * a / dem).exp() - 1.0);
        let (lo, hi) = expand_upper(f, dem / alpha);
        bisect_newton(f, Some(df), lo, hi, ROOT_TOL)
    }

    /// Inverse of [`solve_a_g`](Self::solve_a_g): the multiplier whose
    /// optimal order quantity is `a`. Strictly decreasing in `a`.
    pub fn g_from_a(&self, a: f64) -> Result<f64> {
        let ok = a > 0.0; // NaN fails too
        if !ok {
            return Err(Error::Domain(format!("order quantity must be positive, got {a}")));
        }
        let (dem, k, h, alpha) = (self.demand, self.setup_cost, self.holding_cost, self.alpha);
        let y = alpha * a / dem;
        Ok(alpha * alpha * k / (h * dem * (y.exp_m1() - y)))
    }

    /// The critical multiplier: the unique `g_c` with
    /// `alpha K + H g_c a_{g_c} = demand`, together with `a_{g_c}`.
    ///
    /// Exists exactly when `alpha K < demand`; above that ordering never
    /// pays off and the never-order solution applies.
    pub fn critical_g(&self) -> Result<(f64, f64)> {
        let (dem, k, h, alpha) = (self.demand, self.setup_cost, self.holding_cost, self.alpha);
        if alpha * k >= dem {
            return Err(Error::NeverOrderRegime(format!(
                "alpha K = {} >= demand = {dem}",
                alpha * k
            )));
        }
        let target = (dem - alpha * k) / h;
        // g * a_g increases strictly in g from 0 to infinity
        let product = |g: f64| g * self.solve_a_g(g) - target;
        let mut lo = 1.0;
        while product(lo) > 0.0 {
            lo *= 0.5;
            assert!(lo > f64::MIN_POSITIVE, "bracket collapse");
        }
        let mut hi = lo.max(1.0);
        while product(hi) <= 0.0 {
            hi *= 2.0;
            assert!(hi.is_finite(), "bracket expansion diverged");
        }
        let dproduct = |g: f64| {
            let a = self.solve_a_g(g);
            let z = (alpha * a / dem).exp();
            (a * z - dem / alpha * z + dem / alpha) / (z - 1.0)
        };
        let g_c = bisect_newton(product, Some(dproduct), lo, hi, ROOT_TOL * 1e-1);
        Ok((g_c, self.solve_a_g(g_c)))
    }

    /// The critical constraint level: the discounted holding cost of the
    /// immediate cycle with order quantity `a_{g_c}`.
    pub fn critical_d(&self) -> Result<f64> {
        let (_, a_gc) = self.critical_g()?;
        Ok(self.holding_rate_at(a_gc))
    }

    /// Discounted holding cost per immediate cycle of order size `a`,
    /// normalized over the cycle: the left side of the order-size equation
    /// for the loose-constraint regime.
    fn holding_rate_at(&self, a: f64) -> f64 {
        let (dem, h, alpha) = (self.demand, self.holding_cost, self.alpha);
        let z = (alpha * a / dem).exp();
        h * a / alpha * z / (z - 1.0) - dem * h / (alpha * alpha)
    }

    /// The order quantity whose cycle holding cost exactly meets the
    /// constraint level; defined for `d > d_c`.
    pub fn a_star(&self) -> Result<f64> {
        let d_c = self.critical_d()?;
        if self.d <= d_c {
            return Err(Error::BelowCriticalLevel { d: self.d, d_c });
        }
        let (dem, h, alpha) = (self.demand, self.holding_cost, self.alpha);
        let f = |a: f64| self.holding_rate_at(a) - self.d;
        let df = |a: f64| {
            let z = (alpha * a / dem).exp();
            h / alpha * z / (z - 1.0) * (1.0 - alpha * a / dem / (z - 1.0))
        };
        let (_, a_gc) = self.critical_g()?;
        let mut hi = a_gc + dem / alpha;
        while f(hi) <= 0.0 {
            hi *= 2.0;
            assert!(hi.is_finite(), "bracket expansion diverged");
        }
        Ok(bisect_newton(f, Some(df), a_gc, hi, ROOT_TOL))
    }

    /// The weighted value function `inf (V0 + g V1)` as a function of the
    /// initial state, in closed form.
    ///
    /// At `g = 0` a closed form exists only in the never-order regime
    /// (`alpha K >= demand`); otherwise the grid engine must be used.
    pub fn bellman_closed_form(&self, g: f64, x: f64) -> Result<f64> {
        let (dem, k, h, alpha, cap) = (
            self.demand,
            self.setup_cost,
            self.holding_cost,
            self.alpha,
            self.capacity,
        );
        if !(0.0..=cap).contains(&x) {
            return Err(Error::Domain(format!("state {x} outside [0, {cap}]")));
        }
        if g < 0.0 {
            return Err(Error::Domain(format!("multiplier {g} is negative")));
        }
        if g == 0.0 {
            if alpha * k >= dem {
                return Ok(dem / alpha * (-alpha * x / dem).exp());
            }
            return Err(Error::NoClosedForm);
        }
        let a_g = self.solve_a_g(g);
        let weighted = alpha * k + h * g * a_g;
        let slack = 1e-12 * dem.max(1.0);
        if weighted < dem - slack {
            if a_g > cap {
                return Err(Error::OrderExceedsCapacity {
                    order: a_g,
                    capacity: cap,
                });
            }
            // order a_g at zero stock
            Ok(x * g * h / alpha - dem * g * h / (alpha * alpha)
                + dem * g * h / (alpha * alpha) * (alpha * (a_g - x) / dem).exp())
        } else if weighted > dem + slack {
            let best_restock = dem / alpha * (1.0 + alpha / (g * h)).ln();
            if best_restock > cap {
                return Err(Error::OrderExceedsCapacity {
                    order: best_restock,
                    capacity: cap,
                });
            }
            // never order
            Ok(x * g * h / alpha - dem * g * h / (alpha * alpha)
                + (dem * g * h / (alpha * alpha) + dem / alpha) * (-alpha * x / dem).exp())
        } else {
            // boundary: both forms coincide
            if a_g > cap {
                return Err(Error::OrderExceedsCapacity {
                    order: a_g,
                    capacity: cap,
                });
            }
            Ok(x * g * h / alpha - dem * g * h / (alpha * alpha)
                + dem * g * h / (alpha * alpha) * (alpha * (a_g - x) / dem).exp())
        }
    }

    /// Smallest capacity for which the constrained solution is valid.
    pub fn min_capacity(&self) -> Result<f64> {
        if self.alpha * self.setup_cost >= self.demand {
            return Ok(0.0);
        }
        let (_, a_gc) = self.critical_g()?;
        let d_c = self.holding_rate_at(a_gc);
        if self.d > d_c {
            Ok(a_gc.max(self.a_star()?))
        } else {
            Ok(a_gc)
        }
    }

    /// Solves the constrained problem from empty initial stock.
    pub fn solve_constrained(&self) -> Result<InventorySolution> {
        self.validate()?;
        let (dem, k, h, alpha, cap, d) = (
            self.demand,
            self.setup_cost,
            self.holding_cost,
            self.alpha,
            self.capacity,
            self.d,
        );
        if alpha * k >= dem {
            return Ok(InventorySolution {
                regime: Regime::NeverOrder,
                g_star: 0.0,
                order_qty: 0.0,
                tau_star: 0.0,
                v0: dem / alpha,
                v1: 0.0,
            });
        }
        let need = self.min_capacity()?;
        if cap < need {
            return Err(Error::Capacity {
                have: cap,
                need,
            });
        }
        let (g_c, a_gc) = self.critical_g()?;
        let d_c = self.holding_rate_at(a_gc);
        if d == 0.0 {
            // limit of the delayed strategy as the stall time grows without
            // bound: never ordering is feasible and optimal
            return Ok(InventorySolution {
                regime: Regime::NeverOrder,
                g_star: g_c,
                order_qty: 0.0,
                tau_star: 0.0,
                v0: dem / alpha,
                v1: 0.0,
            });
        }
        if d <= d_c {
            let decay = (-alpha * a_gc / dem).exp();
            let tau_star = ((1.0 - decay) * d_c / d + decay).ln() / alpha;
            return Ok(InventorySolution {
                regime: Regime::DelayedOrder,
                g_star: g_c,
                order_qty: a_gc,
                tau_star,
                v0: dem / alpha - g_c * d,
                v1: d,
            });
        }
        let a_star = self.a_star()?;
        let g_hat = self.g_from_a(a_star)?;
        let v0 = dem * g_hat * h / (alpha * alpha) * ((alpha * a_star / dem).exp() - 1.0)
            - g_hat * d;
        Ok(InventorySolution {
            regime: Regime::ImmediateOrder,
            g_star: g_hat,
            order_qty: a_star,
            tau_star: 0.0,
            v0,
            v1: d,
        })
    }

    /// The stationary strategy realizing a constrained solution.
    pub fn strategy_of(&self, sol: &InventorySolution) -> StationaryStrategy {
        let dem = self.demand;
        match sol.regime {
            Regime::NeverOrder => {
                StationaryStrategy::new("never order", |_| ImpulseAction::never(0.0))
            }
            Regime::DelayedOrder => {
                let tau = sol.tau_star;
                let qty = sol.order_qty;
                StationaryStrategy::new(
                    format!("drain, stall {tau:.6}, order {qty:.6}"),
                    move |x| ImpulseAction::after(x / dem + tau, qty),
                )
            }
            Regime::ImmediateOrder => {
                let qty = sol.order_qty;
                StationaryStrategy::new(format!("drain, order {qty:.6}"), move |x| {
                    ImpulseAction::after(x / dem, qty)
                })
            }
        }
    }

    /// Discounted holding cost of the strategy "drain, stall `tau`, order
    /// `a`" started from empty stock, in closed form.
    pub fn closed_form_v1(&self, tau: f64, a: f64) -> f64 {
        let (dem, h, alpha) = (self.demand, self.holding_cost, self.alpha);
        let numer = h * a / alpha + h * dem / (alpha * alpha) * ((-alpha * a / dem).exp() - 1.0);
        numer / ((alpha * tau).exp() - (-alpha * a / dem).exp())
    }

    /// Undiscounted economic-order-quantity limit of the order size,
    /// `sqrt(2 K D / (g H))`; valid as a limit when `sqrt(2 K D H g)` stays
    /// below the demand rate.
    pub fn eoq_limit(&self, g: f64) -> f64 {
        assert!(g > 0.0);
        (2.0 * self.setup_cost * self.demand / (g * self.holding_cost)).sqrt()
    }
}
