//! Run configuration: a single TOML file with a model section, solver
//! settings, grid overrides and output paths. Unknown keys are rejected.

use anyhow::{bail, Context};
use serde::Deserialize;

use impulse_core::grid::GridSpec;
use impulse_core::inventory::InventoryParams;
use impulse_core::model::ImpulseModel;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub solve: SolveConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// The built-in inventory model.
    Inventory {
        demand: f64,
        setup_cost: f64,
        holding_cost: f64,
        alpha: f64,
        capacity: f64,
    },
    /// A model assembled from named built-in flows, jumps and cost shapes.
    Custom {
        state: [f64; 2],
        actions: [f64; 2],
        alpha: f64,
        flow: FlowSpec,
        jump: JumpSpec,
        costs: Vec<CostPairSpec>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FlowSpec {
    /// Drains toward the lower state bound at a constant rate.
    UniformDecay { rate: f64 },
    /// No drift.
    Frozen,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpSpec {
    /// Adds the action to the state, capped at the upper state bound.
    TopUp,
    /// Ignores the action and keeps the state.
    Keep,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostPairSpec {
    pub gradual: GradualSpec,
    pub lump: LumpSpec,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GradualSpec {
    Zero,
    /// Constant rate everywhere.
    Constant { rate: f64 },
    /// Rate proportional to the state.
    Linear { rate: f64 },
    /// Rate charged only at the lower state bound.
    FloorIndicator { rate: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LumpSpec {
    Zero,
    Constant { value: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Constraint level on the secondary cost.
    pub d: f64,
    #[serde(default)]
    pub engine: EngineKind,
    /// Certificate tolerance; engine default when omitted.
    pub cert_tol: Option<f64>,
    /// Argument tolerance of the dual search.
    #[serde(default = "default_search_tol")]
    pub search_tol: f64,
    /// Initial state for grid-engine solves.
    #[serde(default)]
    pub x0: f64,
}

fn default_search_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    #[default]
    ClosedForm,
    Grid,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_states: Option<usize>,
    pub n_theta: Option<usize>,
    pub n_actions: Option<usize>,
    pub theta_max: Option<f64>,
    #[serde(default = "default_vi_tol")]
    pub vi_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_vi_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    2000
}

impl GridConfig {
    pub fn spec_for(&self, model: &ImpulseModel) -> GridSpec {
        let mut spec = GridSpec::for_model(model);
        if let Some(n) = self.n_states {
            spec.n_states = n;
        }
        if let Some(n) = self.n_theta {
            spec.n_theta = n;
        }
        if let Some(n) = self.n_actions {
            spec.n_actions = n;
        }
        if let Some(t) = self.theta_max {
            spec.theta_max = t;
        }
        spec
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for reports and CSV files; default "out".
    pub dir: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_grid_tol")]
    pub grid_tol: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_mc_paths")]
    pub mc_paths: usize,
}

fn default_grid_tol() -> f64 {
    5e-3
}

fn default_quad_tol() -> f64 {
    1e-9
}

fn default_mc_paths() -> usize {
    20_000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            grid_tol: default_grid_tol(),
            quad_tol: default_quad_tol(),
            mc_paths: default_mc_paths(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.solve.d < 0.0 {
            bail!("solve.d must be non-negative, got {}", self.solve.d);
        }
        match &self.model {
            ModelConfig::Inventory { .. } => {
                self.inventory_params()
                    .expect("inventory kind")
                    .validate()
                    .map_err(anyhow::Error::from)?;
            }
            ModelConfig::Custom {
                state,
                actions,
                alpha,
                costs,
                flow,
                ..
            } => {
                anyhow::ensure!(state[0] < state[1], "model.state must be an increasing pair");
                anyhow::ensure!(
                    actions[0] <= actions[1],
                    "model.actions must be an ordered pair"
                );
                anyhow::ensure!(*alpha > 0.0, "model.alpha must be positive");
                if costs.is_empty() {
                    bail!("model.costs needs at least the main cost pair");
                }
                if let FlowSpec::UniformDecay { rate } = flow {
                    anyhow::ensure!(*rate > 0.0, "flow rate must be positive");
                }
                for (j, pair) in costs.iter().enumerate() {
                    let bad_rate = match pair.gradual {
                        GradualSpec::Constant { rate }
                        | GradualSpec::Linear { rate }
                        | GradualSpec::FloorIndicator { rate } => rate < 0.0,
                        GradualSpec::Zero => false,
                    };
                    if bad_rate {
                        bail!("costs[{j}].gradual rate must be non-negative");
                    }
                    if let LumpSpec::Constant { value } = pair.lump {
                        if value < 0.0 {
                            bail!("costs[{j}].lump value must be non-negative");
                        }
                    }
                }
            }
        }
        if self.solve.engine == EngineKind::ClosedForm
            && !matches!(self.model, ModelConfig::Inventory { .. })
        {
            return Err(impulse_core::Error::UnsupportedEngine(
                "closed-form needs the inventory model".into(),
            )
            .into());
        }
        Ok(())
    }

    pub fn inventory_params(&self) -> Option<InventoryParams> {
        match self.model {
            ModelConfig::Inventory {
                demand,
                setup_cost,
                holding_cost,
                alpha,
                capacity,
            } => Some(InventoryParams {
                demand,
                setup_cost,
                holding_cost,
                alpha,
                capacity,
                d: self.solve.d,
            }),
            ModelConfig::Custom { .. } => None,
        }
    }

    /// Builds the impulse model this config describes.
    pub fn build_model(&self) -> anyhow::Result<ImpulseModel> {
        if let Some(p) = self.inventory_params() {
            return Ok(p.model());
        }
        let ModelConfig::Custom {
            state,
            actions,
            alpha,
            flow,
            jump,
            costs,
        } = &self.model
        else {
            unreachable!()
        };
        let (lo, hi) = (state[0], state[1]);
        let mut builder = ImpulseModel::builder()
            .state_interval(lo, hi)
            .action_interval(actions[0], actions[1])
            .discount(*alpha);
        builder = match *flow {
            FlowSpec::UniformDecay { rate } => builder
                .flow(move |x, t| {
                    let y = x - rate * t;
                    if y >= lo {
                        y
                    } else {
                        lo
                    }
                })
                .kink_times(move |x| {
                    if x > lo {
                        vec![(x - lo) / rate]
                    } else {
                        Vec::new()
                    }
                })
                .traversal_time((hi - lo) / rate),
            FlowSpec::Frozen => builder.flow(|x, _| x),
        };
        builder = match *jump {
            JumpSpec::TopUp => builder.jump(move |x, a| (x + a).min(hi)),
            JumpSpec::Keep => builder.jump(|x, _| x),
        };
        let mut gradual_bound = 0.0_f64;
        let mut lump_bound = 0.0_f64;
        for pair in costs {
            let g = pair.gradual;
            let gradual: Box<dyn Fn(f64) -> f64 + Send + Sync> = match g {
                GradualSpec::Zero => Box::new(|_| 0.0),
                GradualSpec::Constant { rate } => Box::new(move |_| rate),
                GradualSpec::Linear { rate } => Box::new(move |x| rate * x),
                GradualSpec::FloorIndicator { rate } => {
                    Box::new(move |x| if x == lo { rate } else { 0.0 })
                }
            };
            gradual_bound = gradual_bound.max(match g {
                GradualSpec::Zero => 0.0,
                GradualSpec::Constant { rate } => rate,
                GradualSpec::Linear { rate } => rate * hi.abs().max(lo.abs()),
                GradualSpec::FloorIndicator { rate } => rate,
            });
            let l = pair.lump;
            let lump: Box<dyn Fn(f64, f64) -> f64 + Send + Sync> = match l {
                LumpSpec::Zero => Box::new(|_, _| 0.0),
                LumpSpec::Constant { value } => Box::new(move |_, _| value),
            };
            lump_bound = lump_bound.max(match l {
                LumpSpec::Zero => 0.0,
                LumpSpec::Constant { value } => value,
            });
            builder = builder.cost_pair(gradual, lump);
        }
        let model = builder
            .gradual_bound(gradual_bound)
            .lump_bound(lump_bound)
            .build()?;
        model.validate_on_samples(8)?;
        Ok(model)
    }
}
