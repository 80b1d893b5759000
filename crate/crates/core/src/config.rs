//! Experiment configuration files (TOML) and the built-in reference
//! experiments. See `docs/config.md` for the schema.

use std::path::Path;

use serde::Deserialize;

use crate::blocking::DEFAULT_PN_TOL;
use crate::conditions::DEFAULT_EPS;
use crate::engine::DEFAULT_STATE_CAP;
use crate::error::{Error, Result};
use crate::functional::{bounded_lipschitz_catalog, default_catalog, Functional};
use crate::gnormal::{GParams, PdeGrid, DEFAULT_HALF_WIDTH, DEFAULT_NX};
use crate::laws::{AmbiguitySet, DiscreteLaw};
use crate::model::SequenceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Eval,
    CltSweep,
    GnormalEval,
    Rosenthal,
    BlockingInspect,
    Conditions,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Eval => "eval",
            Mode::CltSweep => "clt_sweep",
            Mode::GnormalEval => "gnormal_eval",
            Mode::Rosenthal => "rosenthal",
            Mode::BlockingInspect => "blocking_inspect",
            Mode::Conditions => "conditions",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    InvSqrtN,
    InvN,
    None,
}

impl Scaling {
    pub fn factor(self, n: usize) -> f64 {
        match self {
            Scaling::InvSqrtN => 1.0 / (n as f64).sqrt(),
            Scaling::InvN => 1.0 / n as f64,
            Scaling::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    Independent,
    MovingWindow,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub laws: Vec<LawSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: KindSpec,
    /// Ambiguity set shared by every index (or innovation).
    #[serde(default)]
    pub laws: Vec<LawSpec>,
    /// Independent arrays only: index `k` uses `sets[(k - 1) mod len]`.
    #[serde(default)]
    pub sets: Vec<SetSpec>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub scaling: Scaling,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnormalSpec {
    pub sigma_lo2: Option<f64>,
    pub sigma_hi2: Option<f64>,
    pub nx: Option<usize>,
    pub half_width: Option<f64>,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "two")]
    pub refinements: usize,
}

impl Default for GnormalSpec {
    fn default() -> Self {
        Self {
            sigma_lo2: None,
            sigma_hi2: None,
            nx: None,
            half_width: None,
            t: 1.0,
            refinements: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    pub m_grid: Option<Vec<usize>>,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    pub tau: Option<f64>,
    #[serde(default = "half")]
    pub mean_unc_threshold: f64,
}

impl Default for ConditionSpec {
    fn default() -> Self {
        Self {
            eps: default_eps(),
            m_grid: None,
            p: default_p(),
            tau: None,
            mean_unc_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Sweep the truncated coordinates `(-tau) v X ^ tau` instead.
    pub tau: Option<f64>,
    /// Level for the Lindeberg and capacity-tail summary columns.
    #[serde(default = "quarter")]
    pub eps: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { tau: None, eps: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosenthalSpec {
    #[serde(default = "rosenthal_p")]
    pub p: Vec<f64>,
    /// When positive, run the random battery instead of the configured model.
    #[serde(default)]
    pub battery_count: usize,
    #[serde(default = "battery_seed")]
    pub seed: u64,
}

impl Default for RosenthalSpec {
    fn default() -> Self {
        Self {
            p: rosenthal_p(),
            battery_count: 0,
            seed: battery_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockingSpec {
    #[serde(default = "pn_tol")]
    pub tol: f64,
    /// Fixed block length instead of the tolerance search.
    pub p_n: Option<usize>,
}

impl Default for BlockingSpec {
    fn default() -> Self {
        Self {
            tol: DEFAULT_PN_TOL,
            p_n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    #[serde(default = "state_cap")]
    pub state_cap: usize,
}

impl Default for EngineSpec {
    fn default() -> Self {
        Self {
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn half() -> f64 {
    0.5
}
fn quarter() -> f64 {
    0.25
}
fn default_eps() -> Vec<f64> {
    DEFAULT_EPS.to_vec()
}
fn default_p() -> Vec<f64> {
    vec![3.0]
}
fn rosenthal_p() -> Vec<f64> {
    vec![2.0, 3.0, 4.0]
}
fn battery_seed() -> u64 {
    2024
}
fn pn_tol() -> f64 {
    DEFAULT_PN_TOL
}
fn state_cap() -> usize {
    DEFAULT_STATE_CAP
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub functionals: Vec<String>,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub gnormal: GnormalSpec,
    #[serde(default)]
    pub conditions: ConditionSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub rosenthal: RosenthalSpec,
    #[serde(default)]
    pub blocking: BlockingSpec,
    #[serde(default)]
    pub engine: EngineSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        if self.n_list.iter().any(|&n| n == 0) {
            return Err(Error::Config("n_list entries must be >= 1".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_list must be strictly increasing".into()));
        }
        for name in &self.functionals {
            Functional::from_name(name)?;
        }
        if let Some(model) = &self.model {
            self.model_at(model, 1)?;
        }
        let g = &self.gnormal;
        if let (Some(lo), Some(hi)) = (g.sigma_lo2, g.sigma_hi2) {
            GParams::new(lo, hi)?;
        }
        if let Some(lo) = g.sigma_lo2 {
            if !(0.0..=1.0).contains(&lo) && g.sigma_hi2.is_none() {
                return Err(Error::Config(format!("sigma_lo2 = {lo} outside [0, 1]")));
            }
        }
        if !(g.t >= 0.0) || !g.t.is_finite() {
            return Err(Error::Config(format!("gnormal.t = {} must be finite and >= 0", g.t)));
        }
        if g.nx.is_some_and(|nx| nx < 3) {
            return Err(Error::Config("gnormal.nx must be >= 3".into()));
        }
        if g.half_width.is_some_and(|l| !(l > 0.0)) {
            return Err(Error::Config("gnormal.half_width must be positive".into()));
        }
        let c = &self.conditions;
        if c.eps.iter().chain([&self.sweep.eps]).any(|e| !(*e > 0.0)) {
            return Err(Error::Config("eps values must be positive".into()));
        }
        if c.p.iter().any(|p| !(*p >= 2.0)) || self.rosenthal.p.iter().any(|p| !(*p >= 2.0)) {
            return Err(Error::Config("moment orders p must be >= 2".into()));
        }
        if c.tau.iter().chain(self.sweep.tau.iter()).any(|t| !(*t > 0.0)) {
            return Err(Error::Config("truncation levels must be positive".into()));
        }
        if c.m_grid.as_ref().is_some_and(|g| g.iter().any(|&m| m == 0)) {
            return Err(Error::Config("m_grid entries must be >= 1".into()));
        }
        if !(self.blocking.tol > 0.0) {
            return Err(Error::Config("blocking.tol must be positive".into()));
        }
        if let Some(p) = self.blocking.p_n {
            if p < 2 || p % 2 != 0 {
                return Err(Error::Config(format!("blocking.p_n = {p} must be even and >= 2")));
            }
        }
        if self.engine.state_cap == 0 {
            return Err(Error::Config("engine.state_cap must be positive".into()));
        }
        Ok(())
    }

    /// Validation for a specific mode.
    pub fn check_mode(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(Error::Config(format!(
                    "config mode {} does not match requested {}",
                    m.name(),
                    mode.name()
                )));
            }
        }
        let needs_model = match mode {
            Mode::GnormalEval => false,
            Mode::Rosenthal => self.rosenthal.battery_count == 0,
            _ => true,
        };
        if needs_model && self.model.is_none() {
            return Err(Error::Config(format!("mode {} needs a [model] section", mode.name())));
        }
        if needs_model && self.n_list.is_empty() {
            return Err(Error::Config(format!("mode {} needs a non-empty n_list", mode.name())));
        }
        if mode == Mode::GnormalEval && (self.gnormal.sigma_lo2.is_none() || self.gnormal.sigma_hi2.is_none()) {
            return Err(Error::Config("gnormal_eval needs gnormal.sigma_lo2 and gnormal.sigma_hi2".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("missing [model] section".into()))
    }

    /// Model with `n` indices, scaled by the configured rule.
    pub fn model(&self, n: usize) -> Result<SequenceModel> {
        self.model_at(self.model_spec()?, n)
    }

    fn model_at(&self, spec: &ModelSpec, n: usize) -> Result<SequenceModel> {
        let scale = spec.scaling.factor(n);
        let shared = if spec.laws.is_empty() {
            None
        } else {
            Some(build_set(&spec.laws)?)
        };
        match spec.kind {
            KindSpec::Independent => {
                if spec.weights.is_some() {
                    return Err(Error::Config("independent models take no weights".into()));
                }
                match (shared, spec.sets.is_empty()) {
                    (Some(set), true) => SequenceModel::iid(set, n, scale),
                    (None, false) => {
                        let sets = spec
                            .sets
                            .iter()
                            .map(|s| build_set(&s.laws))
                            .collect::<Result<Vec<_>>>()?;
                        let per_index = (0..n).map(|k| sets[k % sets.len()].clone()).collect();
                        SequenceModel::independent(per_index, scale)
                    }
                    _ => Err(Error::Config("give exactly one of model.laws and model.sets".into())),
                }
            }
            KindSpec::MovingWindow => {
                let set = shared.ok_or_else(|| Error::Config("moving_window needs model.laws".into()))?;
                if !spec.sets.is_empty() {
                    return Err(Error::Config("moving_window takes model.laws only".into()));
                }
                let weights = spec
                    .weights
                    .clone()
                    .ok_or_else(|| Error::Config("moving_window needs model.weights".into()))?;
                if weights.is_empty() {
                    return Err(Error::Config("model.weights must be non-empty".into()));
                }
                SequenceModel::moving_window(set, weights, n, scale)
            }
        }
    }

    /// Configured catalog names, or `fallback` when none are listed.
    pub fn functionals_or(&self, fallback: fn() -> Vec<Functional>) -> Result<Vec<Functional>> {
        if self.functionals.is_empty() {
            Ok(fallback())
        } else {
            self.functionals.iter().map(|n| Functional::from_name(n)).collect()
        }
    }

    pub fn sweep_functionals(&self) -> Result<Vec<Functional>> {
        self.functionals_or(bounded_lipschitz_catalog)
    }

    pub fn eval_functionals(&self) -> Result<Vec<Functional>> {
        self.functionals_or(default_catalog)
    }

    /// PDE grid for `p` with any configured overrides.
    pub fn grid(&self, p: &GParams) -> PdeGrid {
        PdeGrid::new(
            self.gnormal.half_width.unwrap_or(DEFAULT_HALF_WIDTH),
            self.gnormal.nx.unwrap_or(DEFAULT_NX),
            p,
        )
    }
}

fn build_set(laws: &[LawSpec]) -> Result<AmbiguitySet> {
    let laws = laws
        .iter()
        .map(|l| DiscreteLaw::new(l.values.clone(), l.probs.clone()))
        .collect::<Result<Vec<_>>>()?;
    AmbiguitySet::new(laws)
}

const REFERENCES: [(&str, &str); 4] = [
    ("stationary-1dep", include_str!("../configs/stationary-1dep.toml")),
    ("iid-peng", include_str!("../configs/iid-peng.toml")),
    ("mean-uncertain-fail", include_str!("../configs/mean-uncertain-fail.toml")),
    ("heavy-point-truncated", include_str!("../configs/heavy-point-truncated.toml")),
];

/// Names of the built-in experiments.
pub fn reference_names() -> Vec<&'static str> {
    REFERENCES.iter().map(|(n, _)| *n).collect()
}

pub fn reference_experiment(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = REFERENCES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown reference experiment {name:?}")))?;
    ExperimentConfig::from_toml(text)
}

pub fn reference_experiments() -> Vec<(&'static str, ExperimentConfig)> {
    REFERENCES
        .iter()
        .map(|(n, t)| (*n, ExperimentConfig::from_toml(t).expect("built-in config is valid")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn references_parse() {
        let refs = reference_experiments();
        assert_eq!(refs.len(), 4);
        let s = reference_experiment("stationary-1dep").unwrap();
        let m = s.model(6).unwrap();
        assert_eq!(m.window_m(), Some(1));
        assert!(reference_experiment("nope").is_err());
    }

    #[test]
    fn bad_configs_rejected() {
        let bad_probs = r#"
n_list = [4]
[model]
kind = "independent"
scaling = "none"
[[model.laws]]
values = [-1.0, 1.0]
probs = [0.5, 0.4]
"#;
        let e = ExperimentConfig::from_toml(bad_probs).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(matches!(e, Error::InvalidLaw(_)));

        let unsorted = "n_list = [8, 4]\n";
        assert!(matches!(ExperimentConfig::from_toml(unsorted), Err(Error::Config(_))));
        let unknown = "n_list = [4]\nfunctionals = [\"sin\"]\n";
        assert!(ExperimentConfig::from_toml(unknown).is_err());
        let typo = "n_lst = [4]\n";
        assert!(ExperimentConfig::from_toml(typo).is_err());
    }

    #[test]
    fn mode_checks() {
        let cfg = ExperimentConfig::from_toml("mode = \"rosenthal\"\n[rosenthal]\nbattery_count = 3\n").unwrap();
        cfg.check_mode(Mode::Rosenthal).unwrap();
        assert!(cfg.check_mode(Mode::CltSweep).is_err());
        let g = ExperimentConfig::from_toml("[gnormal]\nsigma_lo2 = 1.0\nsigma_hi2 = 1.0\n").unwrap();
        g.check_mode(Mode::GnormalEval).unwrap();
        assert!(g.check_mode(Mode::Conditions).is_err());
    }

    #[test]
    fn scaling_factors() {
        assert_eq!(Scaling::InvSqrtN.factor(4), 0.5);
        assert_eq!(Scaling::InvN.factor(4), 0.25);
        assert_eq!(Scaling::None.factor(4), 1.0);
    }
}
