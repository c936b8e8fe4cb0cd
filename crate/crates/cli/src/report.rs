//! Report structures written by the solve and verify commands: a
//! machine-readable JSON body plus a short text rendering. Nothing here
//! depends on wall-clock time, so identical runs produce identical bytes.

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub model: String,
    pub engine: String,
    pub d: f64,
    /// Inventory regime label; absent for custom models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    pub g_star: f64,
    pub g_search: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_analytic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order_qty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_star: Option<f64>,
    pub v0: f64,
    pub v1: f64,
    pub h_star: f64,
    pub gap: f64,
    pub slackness: f64,
    pub feasible: bool,
    pub cert_tol: f64,
    pub certificate_passed: bool,
    pub violations: Vec<String>,
    pub strategy: String,
}

impl SolveReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("model: {} (engine {})\n", self.model, self.engine));
        s.push_str(&format!("constraint level d = {}\n", self.d));
        if let Some(regime) = &self.regime {
            s.push_str(&format!("regime: {regime}\n"));
        }
        s.push_str(&format!("strategy: {}\n", self.strategy));
        if let Some(q) = self.order_qty {
            s.push_str(&format!("order quantity: {q}\n"));
        }
        if let Some(tau) = self.tau_star {
            s.push_str(&format!("stall time at zero stock: {tau}\n"));
        }
        s.push_str(&format!("multiplier g* = {} (search {})\n", self.g_star, self.g_search));
        s.push_str(&format!("costs: v0 = {}, v1 = {}\n", self.v0, self.v1));
        s.push_str(&format!(
            "dual value h(g*) = {}, gap = {}, slackness = {}\n",
            self.h_star, self.gap, self.slackness
        ));
        s.push_str(&format!(
            "certificate: {} (tolerance {})\n",
            if self.certificate_passed { "pass" } else { "FAIL" },
            self.cert_tol
        ));
        for v in &self.violations {
            s.push_str(&format!("  violation: {v}\n"));
        }
        s
    }
}

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub model: String,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "check {}: {} ({})\n",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.detail
            ));
        }
        s.push_str(&format!(
            "verification: {}\n",
            if self.passed { "pass" } else { "FAIL" }
        ));
        s
    }
}
