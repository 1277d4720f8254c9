//! TOML configuration: space selection plus per-check parameter sections.

use serde::Deserialize;
use srflab::flows;
use srflab::space::{DynamicSpace, LocalLogDerivative, LogDerivative};
use std::sync::Arc;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub space: SpaceConfig,
    #[serde(default)]
    pub times: TimesConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub convexity: ConvexityConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub rng: RngConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    /// "grid" or "graph"
    pub kind: String,
    /// named example for grid spaces: static-flat | static-weighted |
    /// wandering-gaussian | homothetic | violating; omit to use tables
    #[serde(default)]
    pub example: Option<String>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    /// horizon override (lo, hi)
    #[serde(default)]
    pub horizon: Option<[f64; 2]>,
    #[serde(default)]
    pub params: ExampleParams,
    /// inline weight f(t, x) sampled on a time grid, linear interpolation
    #[serde(default)]
    pub weight_table: Option<WeightTable>,
    /// inline global log-derivative h(t), linear interpolation
    #[serde(default)]
    pub h_table: Option<HTable>,
    /// graph description when kind = "graph"
    #[serde(default)]
    pub graph: Option<GraphConfig>,
}

fn default_n() -> usize {
    201
}

fn default_half_width() -> f64 {
    4.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleParams {
    /// wandering Gaussian: alpha_t = alpha0 + alpha1 t
    #[serde(default = "one")]
    pub alpha0: f64,
    #[serde(default = "half")]
    pub alpha1: f64,
    /// beta_t = beta_amplitude sin t
    #[serde(default = "one")]
    pub beta_amplitude: f64,
    #[serde(default)]
    pub gamma0: f64,
    /// homothetic rate
    #[serde(default = "one")]
    pub k: f64,
    /// base weight of the homothetic / static-weighted space:
    /// "flat" or "quadratic" (f = x²)
    #[serde(default = "default_base_weight")]
    pub base_weight: String,
    /// violating-flow strength
    #[serde(default = "one")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_base_weight() -> String {
    "quadratic".into()
}

impl Default for ExampleParams {
    fn default() -> Self {
        toml::from_str("").unwrap()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightTable {
    pub times: Vec<f64>,
    /// one row of n vertex values per time
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    /// edges as (x, y, coefficient, length)
    pub edges: Vec<(usize, usize, f64, f64)>,
    pub base_measure: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimesConfig {
    pub s: f64,
    pub t: f64,
    pub steps: usize,
    pub delta: f64,
}

impl Default for TimesConfig {
    fn default() -> Self {
        Self { s: 0.1, t: 0.35, steps: 64, delta: 1e-3 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub alphas: Vec<f64>,
    pub ps: Vec<f64>,
    pub p_infinity: bool,
    pub trials: usize,
    pub pairs: usize,
    pub smoothing: f64,
    pub tolerance_scale: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 0.75, 1.0],
            ps: vec![1.0, 2.0, 4.0],
            p_infinity: true,
            trials: 100,
            pairs: 20,
            smoothing: 0.02,
            tolerance_scale: 0.5,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvexityConfig {
    pub t: f64,
    pub da: Vec<f64>,
    pub dt_step: Vec<f64>,
    pub pair_centers: Vec<[f64; 2]>,
    pub bump_width: f64,
}

impl Default for ConvexityConfig {
    fn default() -> Self {
        Self {
            t: 0.2,
            da: vec![0.1, 0.05, 0.025],
            dt_step: vec![0.02, 0.01],
            pair_centers: vec![[-1.0, 1.0], [-0.5, 1.5]],
            bump_width: 2.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    pub terminal_positions: [f64; 2],
    pub t: f64,
    pub level: u32,
    pub n_paths: usize,
    pub kernel_steps: usize,
    /// winf | wp | independent
    pub mode: String,
    pub wp_exponent: f64,
    pub emit_paths: bool,
    pub scaling_exponents: Vec<f64>,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            terminal_positions: [-1.0, 1.0],
            t: 17.0 / 64.0,
            level: 6,
            n_paths: 10_000,
            kernel_steps: 8,
            mode: "winf".into(),
            wp_exponent: 2.0,
            emit_paths: false,
            scaling_exponents: vec![2.0, 4.0],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RngConfig {
    pub seed: u64,
}

impl Default for RngConfig {
    fn default() -> Self {
        Self { seed: 42 }
    }
}

fn interp(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    if t >= times[times.len() - 1] {
        return values[values.len() - 1];
    }
    let k = times.partition_point(|&x| x <= t).min(times.len() - 1);
    let (t0, t1) = (times[k - 1], times[k]);
    let lambda = (t - t0) / (t1 - t0);
    values[k - 1] * (1.0 - lambda) + values[k] * lambda
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config parse failure: {e}"))
    }

    /// Builds the space, optionally refined: `refine` doublings of the
    /// vertex count (grid spaces only).
    pub fn build_space(&self, refine: u32) -> Result<DynamicSpace<f64>, String> {
        let factor = 1usize << refine;
        let n = if self.space.n >= 2 {
            (self.space.n - 1) * factor + 1
        } else {
            return Err("space.n must be at least 2".into());
        };
        let r = self.space.half_width;
        let p = &self.space.params;
        let mut space = match self.space.kind.as_str() {
            "graph" => {
                if refine > 0 {
                    return Err("--refine applies to grid spaces only".into());
                }
                let g = self
                    .space
                    .graph
                    .as_ref()
                    .ok_or("graph kind needs a [space.graph] section")?;
                DynamicSpace::<f64>::graph(
                    g.base_measure.len(),
                    &g.edges,
                    g.base_measure.clone(),
                    |_, _| 0.0,
                    true,
                    LogDerivative::Zero,
                    LocalLogDerivative::Zero,
                    (0.0, 1.0),
                    0.0,
                )
                .map_err(|e| e.to_string())?
            }
            "grid" => match self.space.example.as_deref() {
                Some("static-flat") => {
                    flows::static_flat_grid::<f64>(r, n).map_err(|e| e.to_string())?
                }
                Some("static-weighted") => {
                    flows::static_weighted_grid::<f64>(r, n, weight_of(&p.base_weight)?)
                        .map_err(|e| e.to_string())?
                }
                Some("wandering-gaussian") => {
                    let (a0, a1, b, g0) = (p.alpha0, p.alpha1, p.beta_amplitude, p.gamma0);
                    flows::wandering_gaussian::<f64>(
                        move |t| a0 + a1 * t,
                        move |t| b * t.sin(),
                        move |_| g0,
                        r,
                        n,
                    )
                    .map_err(|e| e.to_string())?
                }
                Some("homothetic") => {
                    let base =
                        flows::static_weighted_grid::<f64>(r, n, weight_of(&p.base_weight)?)
                            .map_err(|e| e.to_string())?;
                    flows::homothetic(&base, p.k).map_err(|e| e.to_string())?
                }
                Some("violating") => {
                    flows::violating_flow::<f64>(r, n, p.c).map_err(|e| e.to_string())?
                }
                Some(other) => return Err(format!("unknown space example '{other}'")),
                None => {
                    // inline tables
                    let wt = self.space.weight_table.clone();
                    let ht = self.space.h_table.clone();
                    if let Some(w) = &wt {
                        if w.values.iter().any(|row| row.len() != n) {
                            return Err(
                                "weight_table rows must have one value per vertex".into()
                            );
                        }
                    }
                    let weight = move |t: f64, x: usize, _pos: f64| -> f64 {
                        match &wt {
                            None => 0.0,
                            Some(w) => {
                                let col: Vec<f64> =
                                    w.values.iter().map(|row| row[x]).collect();
                                interp(&w.times, &col, t)
                            }
                        }
                    };
                    let weight_static = self.space.weight_table.is_none();
                    let (h, big_h, h_bound) = match ht {
                        None => (LogDerivative::Zero, LocalLogDerivative::Zero, 0.0),
                        Some(table) => {
                            let bound = table
                                .values
                                .iter()
                                .fold(0.0f64, |a, &v| a.max(v.abs()));
                            let t2 = table.clone();
                            (
                                LogDerivative::Global(Arc::new(move |r| {
                                    interp(&table.times, &table.values, r)
                                })),
                                LocalLogDerivative::Global(Arc::new(move |r| {
                                    interp(&t2.times, &t2.values, r)
                                })),
                                bound,
                            )
                        }
                    };
                    DynamicSpace::grid(
                        (-r, r),
                        n,
                        weight,
                        weight_static,
                        h,
                        big_h,
                        (0.0, 1.0),
                        h_bound,
                    )
                    .map_err(|e| e.to_string())?
                }
            },
            other => return Err(format!("unknown space kind '{other}'")),
        };
        if let Some([lo, hi]) = self.space.horizon {
            space = space.with_horizon((lo, hi)).map_err(|e| e.to_string())?;
        }
        Ok(space)
    }
}

fn weight_of(name: &str) -> Result<fn(f64) -> f64, String> {
    match name {
        "flat" => Ok(|_x| 0.0),
        "quadratic" => Ok(|x| x * x),
        other => Err(format!("unknown base weight '{other}' (flat|quadratic)")),
    }
}

/// Template with every numeric default written out.
pub const TEMPLATE: &str = r#"# srflab run configuration

[space]
kind = "grid"                 # grid | graph
example = "wandering-gaussian" # static-flat | static-weighted | wandering-gaussian | homothetic | violating
n = 201
half_width = 4.0
# horizon = [0.0, 1.0]        # optional override; homothetic flows trim it themselves

[space.params]
alpha0 = 1.0                  # wandering Gaussian: alpha_t = alpha0 + alpha1 t
alpha1 = 0.5
beta_amplitude = 1.0          # beta_t = beta_amplitude * sin(t)
gamma0 = 0.0
k = 1.0                       # homothetic rate
base_weight = "quadratic"     # homothetic / static-weighted base: flat | quadratic
c = 1.0                       # violating-flow strength

# Inline coefficient tables replace `example` when it is omitted:
# [space.weight_table]
# times = [0.0, 1.0]
# values = [[0.0, 0.0], [0.0, 0.0]]   # one row of n values per time, linear interpolation
# [space.h_table]
# times = [0.0, 1.0]
# values = [0.0, 0.0]

[times]
s = 0.1
t = 0.35
steps = 64
delta = 0.001

[checks]
alphas = [0.5, 0.75, 1.0]
ps = [1.0, 2.0, 4.0]
p_infinity = true
trials = 100
pairs = 20
smoothing = 0.02
tolerance_scale = 0.5

[convexity]
t = 0.2
da = [0.1, 0.05, 0.025]
dt_step = [0.02, 0.01]
pair_centers = [[-1.0, 1.0], [-0.5, 1.5]]
bump_width = 2.0

[coupling]
terminal_positions = [-1.0, 1.0]
t = 0.265625                  # dyadic
level = 6
n_paths = 10000
kernel_steps = 8
mode = "winf"                 # winf | wp | independent
wp_exponent = 2.0
emit_paths = false
scaling_exponents = [2.0, 4.0]

[rng]
seed = 42
"#;
