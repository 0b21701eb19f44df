//! Scenario files: one TOML document with `[domain]`, `[coefficients]`,
//! `[nonlinearity]`, `[run]`, `[decay]`, `[regularity]` and `[attractor]` sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linearized::ZLevel;
use crate::nonlinearity::{NonlinearitySpec, Profile};
use crate::operator::{build_model, CoefficientField, DomainSpec, Field, SpectralModel, Stencil};
use crate::semiflow::StatePair;

fn d_dimension() -> usize {
    1
}
fn d_lengths() -> Vec<f64> {
    vec![std::f64::consts::PI]
}
fn d_grid() -> usize {
    128
}
fn d_modes() -> usize {
    32
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "d_dimension")]
    pub dimension: usize,
    #[serde(default = "d_lengths")]
    pub lengths: Vec<f64>,
    #[serde(default = "d_grid")]
    pub grid_n: usize,
    #[serde(default = "d_modes", rename = "modes_N")]
    pub modes_n: usize,
    #[serde(default)]
    pub stencil: Stencil,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            dimension: d_dimension(),
            lengths: d_lengths(),
            grid_n: d_grid(),
            modes_n: d_modes(),
            stencil: Stencil::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub a_const: Option<f64>,
    pub a_file: Option<String>,
    pub beta_const: Option<f64>,
    pub beta_file: Option<String>,
    /// Declared ellipticity bounds; default to the range of the samples.
    pub a0: Option<f64>,
    pub a1: Option<f64>,
}

/// A constant or a grid file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Const(f64),
    File { file: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearityKindConfig {
    Polynomial,
    Exponential,
}

fn d_kind() -> NonlinearityKindConfig {
    NonlinearityKindConfig::Polynomial
}
fn d_one() -> f64 {
    1.0
}
fn d_growth_samples() -> usize {
    200
}
fn d_growth_norm() -> f64 {
    4.0
}
fn d_lattice_max() -> f64 {
    10.0
}
fn d_lattice_n() -> usize {
    401
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    #[serde(default = "d_kind")]
    pub kind: NonlinearityKindConfig,
    /// Coefficient of `u^p` at index `p`.
    #[serde(default)]
    pub coefficients: Vec<Value>,
    /// Amplitude `a` of `a e^u`.
    pub amplitude: Option<f64>,
    pub mu: Option<f64>,
    pub c_const: Option<f64>,
    pub c_file: Option<String>,
    #[serde(default = "d_one")]
    pub alpha: f64,
    #[serde(default = "d_one")]
    pub beta_h: f64,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(default = "d_growth_samples")]
    pub growth_samples: usize,
    #[serde(default = "d_growth_norm")]
    pub growth_max_norm: f64,
    #[serde(default = "d_lattice_max")]
    pub lattice_u_max: f64,
    #[serde(default = "d_lattice_n")]
    pub lattice_n: usize,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self {
            kind: d_kind(),
            coefficients: vec![],
            amplitude: None,
            mu: None,
            c_const: None,
            c_file: None,
            alpha: 1.0,
            beta_h: 1.0,
            c: None,
            growth_samples: d_growth_samples(),
            growth_max_norm: d_growth_norm(),
            lattice_u_max: d_lattice_max(),
            lattice_n: d_lattice_n(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialConfig {
    Zero,
    Mode { k: usize, amplitude: f64 },
    /// Grid samples of `u₀` over all nodes; `v₀ = 0`.
    File { file: String },
}

fn d_eps() -> f64 {
    1.0
}
fn d_h() -> f64 {
    0.01
}
fn d_t() -> f64 {
    100.0
}
fn d_t0() -> f64 {
    50.0
}
fn d_record() -> usize {
    5
}
fn d_lags() -> usize {
    200
}
fn d_initial() -> InitialConfig {
    InitialConfig::Mode { k: 1, amplitude: 0.1 }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_eps")]
    pub epsilon: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "d_h")]
    pub h: f64,
    #[serde(default = "d_t", rename = "T")]
    pub t: f64,
    #[serde(default = "d_t0", rename = "transient_T0")]
    pub transient_t0: f64,
    #[serde(default = "d_initial")]
    pub initial: InitialConfig,
    #[serde(default = "d_record")]
    pub record_every: usize,
    #[serde(default = "d_lags")]
    pub omega_lags: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epsilon: d_eps(),
            theta: 0.0,
            h: d_h(),
            t: d_t(),
            transient_t0: d_t0(),
            initial: d_initial(),
            record_every: d_record(),
            omega_lags: d_lags(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelChoice {
    Zm1,
    Z0,
    #[serde(rename = "both")]
    Both,
}

impl LevelChoice {
    pub fn levels(self) -> Vec<ZLevel> {
        match self {
            LevelChoice::Zm1 => vec![ZLevel::Zm1],
            LevelChoice::Z0 => vec![ZLevel::Z0],
            LevelChoice::Both => vec![ZLevel::Zm1, ZLevel::Z0],
        }
    }
}

fn d_rho() -> f64 {
    0.5
}
fn d_delta() -> f64 {
    0.25
}
fn d_level() -> LevelChoice {
    LevelChoice::Both
}
fn d_fit_tol() -> f64 {
    0.02
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_level")]
    pub level: LevelChoice,
    pub basis_size: Option<usize>,
    #[serde(default = "d_fit_tol")]
    pub fit_tol: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            rho: d_rho(),
            delta: d_delta(),
            level: d_level(),
            basis_size: None,
            fit_tol: d_fit_tol(),
        }
    }
}

/// `theta = "auto"` or a number.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ThetaChoice {
    Value(f64),
    Keyword(String),
}

impl ThetaChoice {
    pub fn value(&self) -> Result<Option<f64>> {
        match self {
            ThetaChoice::Value(v) if *v >= 0.0 => Ok(Some(*v)),
            ThetaChoice::Value(v) => Err(Error::Config(format!("regularity.theta = {v} must be nonnegative"))),
            ThetaChoice::Keyword(k) if k == "auto" => Ok(None),
            ThetaChoice::Keyword(k) => Err(Error::Config(format!("regularity.theta = {k:?}; expected \"auto\" or a number"))),
        }
    }
}

fn d_theta_auto() -> ThetaChoice {
    ThetaChoice::Keyword("auto".into())
}
fn d_tw() -> f64 {
    25.0
}
fn d_reg_eps() -> Vec<f64> {
    vec![1.0, 0.5, 0.25, 0.125, 0.0625]
}
fn d_factor() -> f64 {
    2.0
}
fn d_tail_tol() -> f64 {
    1e-3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityConfig {
    #[serde(default = "d_theta_auto")]
    pub theta: ThetaChoice,
    #[serde(default = "d_tw", rename = "tail_Tw")]
    pub tail_tw: f64,
    /// Relative size of the neglected tail `M e^{−rate T_w}`.
    #[serde(default = "d_tail_tol")]
    pub tail_tolerance: f64,
    #[serde(default = "d_reg_eps")]
    pub epsilon_list: Vec<f64>,
    #[serde(default = "d_factor")]
    pub uniformity_factor: f64,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        Self {
            theta: d_theta_auto(),
            tail_tw: d_tw(),
            tail_tolerance: d_tail_tol(),
            epsilon_list: d_reg_eps(),
            uniformity_factor: d_factor(),
        }
    }
}

fn d_ensemble() -> usize {
    32
}
fn d_att_t0() -> f64 {
    30.0
}
fn d_att_ts() -> f64 {
    2.0
}
fn d_att_eps() -> Vec<f64> {
    vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625]
}
fn d_trend() -> f64 {
    -0.9
}
fn d_tol() -> f64 {
    3.0
}
fn d_spacing() -> f64 {
    0.01
}
fn d_manifold_t() -> f64 {
    30.0
}
fn d_offset() -> f64 {
    1e-4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractorConfig {
    /// Ensemble size: `±a φ_k` over the first four modes, amplitudes spread over `(0, 2]`.
    #[serde(default = "d_ensemble")]
    pub ensemble: usize,
    #[serde(default = "d_att_t0", rename = "T_transient")]
    pub t_transient: f64,
    #[serde(default = "d_att_ts", rename = "T_sample")]
    pub t_sample: f64,
    #[serde(default = "d_att_eps")]
    pub epsilon_list: Vec<f64>,
    /// Upper limit on the rank correlation of the semidistance with the list position.
    #[serde(default = "d_trend")]
    pub trend_threshold: f64,
    /// Terminal semidistance allowed as a multiple of the limit cloud's sampling density.
    #[serde(default = "d_tol")]
    pub tolerance: f64,
    #[serde(default = "d_spacing")]
    pub spacing: f64,
    #[serde(default = "d_manifold_t", rename = "T_manifold")]
    pub t_manifold: f64,
    #[serde(default = "d_offset")]
    pub manifold_offset: f64,
    /// Time step; defaults to `[run].h`.
    pub h: Option<f64>,
}

impl Default for AttractorConfig {
    fn default() -> Self {
        Self {
            ensemble: d_ensemble(),
            t_transient: d_att_t0(),
            t_sample: d_att_ts(),
            epsilon_list: d_att_eps(),
            trend_threshold: d_trend(),
            tolerance: d_tol(),
            spacing: d_spacing(),
            t_manifold: d_manifold_t(),
            manifold_offset: d_offset(),
            h: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub regularity: RegularityConfig,
    #[serde(default)]
    pub attractor: AttractorConfig,
    /// Directory that relative file paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Everything a pipeline needs, built once from a scenario.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scenario: Scenario,
    pub model: SpectralModel,
    pub f: NonlinearitySpec,
    pub hash: String,
}

impl Scenario {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.base_dir = base_dir.into();
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, dir)
    }

    /// The reference scenario: `(0, π)`, `a = 1`, `β = 0`, `f = 2u − u³`, `μ = 4`, `c = 1`.
    pub fn reference() -> Self {
        let mut s = Self::from_toml("", PathBuf::new()).expect("defaults parse");
        s.nonlinearity.coefficients = [0.0, 2.0, 0.0, -1.0].into_iter().map(Value::Const).collect();
        s.nonlinearity.mu = Some(4.0);
        s.nonlinearity.c_const = Some(1.0);
        s
    }

    fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn read_grid(&self, file: &str, expected: usize) -> Result<Vec<f64>> {
        let path = self.path(file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Config(format!("{}: {t:?}: {e}", path.display()))))
            .collect::<Result<_>>()?;
        if vals.len() != expected {
            return Err(Error::Config(format!(
                "{} has {} values, the grid has {expected} nodes",
                path.display(),
                vals.len()
            )));
        }
        Ok(vals)
    }

    fn files(&self) -> Vec<&str> {
        let c = &self.coefficients;
        let n = &self.nonlinearity;
        let mut out: Vec<&str> = [&c.a_file, &c.beta_file, &n.c_file].into_iter().flatten().map(String::as_str).collect();
        for v in &n.coefficients {
            if let Value::File { file } = v {
                out.push(file);
            }
        }
        if let InitialConfig::File { file } = &self.run.initial {
            out.push(file);
        }
        out
    }

    /// sha256 over the canonical JSON of the scenario and the bytes of every referenced file.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self)?);
        for f in self.files() {
            let path = self.path(f);
            let bytes = std::fs::read(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            h.update(f.as_bytes());
            h.update(bytes);
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn domain_spec(&self) -> DomainSpec {
        let d = &self.domain;
        DomainSpec {
            dimension: d.dimension,
            lengths: d.lengths.clone(),
            grid_n: d.grid_n,
            modes: d.modes_n,
            stencil: d.stencil,
        }
    }

    fn field_or_const(&self, name: &str, c: Option<f64>, file: &Option<String>, default: f64, n: usize) -> Result<Vec<f64>> {
        match (c, file) {
            (Some(_), Some(_)) => Err(Error::Config(format!("both {name}_const and {name}_file given"))),
            (Some(v), None) => Ok(vec![v; n]),
            (None, Some(f)) => self.read_grid(f, n),
            (None, None) => Ok(vec![default; n]),
        }
    }

    pub fn coefficient_field(&self, domain: &DomainSpec) -> Result<CoefficientField> {
        let n = domain.total_nodes();
        let c = &self.coefficients;
        let a = self.field_or_const("a", c.a_const, &c.a_file, 1.0, n)?;
        let beta = self.field_or_const("beta", c.beta_const, &c.beta_file, 0.0, n)?;
        let mut field = CoefficientField::from_samples(a, beta);
        let (a0, a1) = (c.a0.unwrap_or(field.a0), c.a1.unwrap_or(field.a1));
        field = field.with_bounds(a0, a1);
        Ok(field)
    }

    fn interior(&self, domain: &DomainSpec, full: Vec<f64>) -> Vec<f64> {
        (0..domain.unknowns()).map(|k| full[domain.node_of_interior(k)]).collect()
    }

    fn profile(&self, domain: &DomainSpec, v: &Value) -> Result<Profile> {
        match v {
            Value::Const(c) => Ok(Profile::Const(*c)),
            Value::File { file } => Ok(Profile::Samples(self.interior(domain, self.read_grid(file, domain.total_nodes())?))),
        }
    }

    pub fn nonlinearity(&self, domain: &DomainSpec) -> Result<NonlinearitySpec> {
        let n = &self.nonlinearity;
        let mut f = match n.kind {
            NonlinearityKindConfig::Polynomial => {
                let coeffs = n.coefficients.iter().map(|v| self.profile(domain, v)).collect::<Result<Vec<_>>>()?;
                NonlinearitySpec::polynomial(coeffs)
            }
            NonlinearityKindConfig::Exponential => {
                let a = n
                    .amplitude
                    .ok_or_else(|| Error::Config("nonlinearity.kind = \"exponential\" needs amplitude".into()))?;
                NonlinearitySpec::exponential(a)
            }
        };
        if let Some(mu) = n.mu {
            let c = match (n.c_const, &n.c_file) {
                (Some(_), Some(_)) => return Err(Error::Config("both c_const and c_file given".into())),
                (Some(c), None) => Profile::Const(c),
                (None, Some(file)) => self.profile(domain, &Value::File { file: file.clone() })?,
                (None, None) => Profile::Const(0.0),
            };
            f = f.with_dissipativeness(mu, c);
        }
        let c = n.c.unwrap_or(f.c_const);
        f = f.with_holder(n.alpha, n.beta_h, c);
        f.validate(domain.unknowns())?;
        Ok(f)
    }

    /// Initial state at level `ε` for the `[run]` section.
    pub fn initial_state(&self, model: &SpectralModel, eps: f64) -> Result<StatePair> {
        let n = model.n_modes();
        let u = match &self.run.initial {
            InitialConfig::Zero => model.zero_field(),
            InitialConfig::Mode { k, amplitude } => {
                if *k == 0 || *k > n {
                    return Err(Error::Config(format!("initial mode k = {k} outside 1..={n}")));
                }
                Field::mode(n, *k, *amplitude)
            }
            InitialConfig::File { file } => {
                let full = self.read_grid(file, model.domain.total_nodes())?;
                let g = nalgebra::DVector::from_vec(self.interior(&model.domain, full));
                model.project(&g)
            }
        };
        Ok(StatePair::new(u, model.zero_field(), eps))
    }

    /// Checks every section before any computation starts.
    pub fn validate(&self, needs_mu: bool) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let r = &self.run;
        if !(r.epsilon > 0.0) {
            return cfg(format!("run.epsilon = {} must be positive", r.epsilon));
        }
        if !(r.h > 0.0 && r.t > 0.0 && r.h < r.t) {
            return cfg(format!("run.h = {} and run.T = {} must satisfy 0 < h < T", r.h, r.t));
        }
        if !(r.transient_t0 >= 0.0 && r.transient_t0 < r.t) {
            return cfg(format!("run.transient_T0 = {} must lie in [0, T)", r.transient_t0));
        }
        if r.record_every == 0 || r.omega_lags == 0 {
            return cfg("run.record_every and run.omega_lags must be positive".into());
        }
        if r.theta < 0.0 {
            return cfg(format!("run.theta = {} must be nonnegative", r.theta));
        }
        let d = &self.decay;
        if !(d.rho > 0.0 && d.rho <= 0.5) {
            return cfg(format!("decay.rho = {} outside (0, 1/2]", d.rho));
        }
        if !(d.delta > 0.0 && d.delta <= 0.5) {
            return cfg(format!("decay.delta = {} outside (0, 1/2]", d.delta));
        }
        let g = &self.regularity;
        g.theta.value()?;
        if g.epsilon_list.is_empty() || g.epsilon_list.iter().any(|e| !(*e > 0.0)) {
            return cfg("regularity.epsilon_list must hold positive values".into());
        }
        if !(g.uniformity_factor >= 1.0) || !(g.tail_tw > 0.0) || !(g.tail_tolerance > 0.0) {
            return cfg("regularity.uniformity_factor >= 1, tail_Tw > 0 and tail_tolerance > 0 required".into());
        }
        let a = &self.attractor;
        if a.epsilon_list.is_empty() || a.epsilon_list.iter().any(|e| !(*e > 0.0)) {
            return cfg("attractor.epsilon_list must hold positive values".into());
        }
        if a.epsilon_list.windows(2).any(|w| w[1] >= w[0]) {
            return cfg("attractor.epsilon_list must be strictly descending".into());
        }
        if a.ensemble == 0 || !(a.spacing > 0.0) || !(a.t_sample >= 0.0) || !(a.t_transient >= 0.0) {
            return cfg("attractor.ensemble, spacing must be positive and times nonnegative".into());
        }
        if needs_mu && self.nonlinearity.mu.is_none() {
            return cfg("nonlinearity.mu is required for attractor commands".into());
        }
        if self.nonlinearity.kind == NonlinearityKindConfig::Polynomial && self.nonlinearity.coefficients.is_empty() {
            return cfg("nonlinearity.coefficients is empty".into());
        }
        for f in self.files() {
            if !self.path(f).exists() {
                return cfg(format!("referenced file {} does not exist", self.path(f).display()));
            }
        }
        self.domain_spec().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Validates, builds the spectral model and the nonlinearity, and hashes the scenario.
    pub fn prepare(&self, needs_mu: bool) -> Result<Prepared> {
        self.validate(needs_mu)?;
        let domain = self.domain_spec();
        let coeffs = self.coefficient_field(&domain)?;
        let model = build_model(&domain, &coeffs)?;
        let f = self.nonlinearity(&domain)?;
        Ok(Prepared {
            scenario: self.clone(),
            model,
            f,
            hash: self.hash()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_defaults_and_round_trip() {
        let s = Scenario::reference();
        s.validate(true).unwrap();
        let text = toml::to_string(&s).unwrap();
        let back = Scenario::from_toml(&text, "").unwrap();
        assert_eq!(s.hash().unwrap(), back.hash().unwrap());
        let p = s.prepare(true).unwrap();
        assert_eq!(p.f, NonlinearitySpec::chafee_infante().with_holder(1.0, 1.0, p.f.c_const));
        assert!((p.model.lambda1() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn parses_sections_and_rejects_bad_input() {
        let text = r#"
seed = 3
[domain]
grid_n = 64
modes_N = 8
[nonlinearity]
coefficients = [0.0, 2.0, 0.0, -1.0]
mu = 4.0
c_const = 1.0
[run]
epsilon = 0.5
initial = { kind = "mode", k = 2, amplitude = 0.3 }
[regularity]
theta = 12.0
"#;
        let s = Scenario::from_toml(text, "").unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.domain.modes_n, 8);
        assert_eq!(s.regularity.theta.value().unwrap(), Some(12.0));
        s.validate(true).unwrap();
        let bad = Scenario::from_toml("[domain]\nmodes = 3\n", "");
        assert!(matches!(bad, Err(Error::Config(_))));
        let mut no_mu = s.clone();
        no_mu.nonlinearity.mu = None;
        assert!(no_mu.validate(false).is_ok());
        assert!(matches!(no_mu.validate(true), Err(Error::Config(_))));
        let mut auto = s.clone();
        auto.regularity.theta = ThetaChoice::Keyword("manual".into());
        assert!(auto.validate(false).is_err());
    }

    #[test]
    fn grid_files_and_hash_sensitivity() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = 33;
        let a: Vec<String> = (0..nodes).map(|_| "1.0".to_string()).collect();
        std::fs::write(dir.path().join("a.txt"), a.join(" ")).unwrap();
        let text = "[domain]\ngrid_n = 32\nmodes_N = 4\n[coefficients]\na_file = \"a.txt\"\n[nonlinearity]\ncoefficients = [0.0, 1.0]\n";
        let s = Scenario::from_toml(text, dir.path()).unwrap();
        let p = s.prepare(false).unwrap();
        assert!((p.model.lambda1() - 1.0).abs() < 1e-4);
        let h1 = s.hash().unwrap();
        let a2: Vec<String> = (0..nodes).map(|_| "1.5".to_string()).collect();
        std::fs::write(dir.path().join("a.txt"), a2.join(" ")).unwrap();
        assert_ne!(h1, s.hash().unwrap());
        std::fs::write(dir.path().join("a.txt"), "1 2 3").unwrap();
        assert!(matches!(s.prepare(false), Err(Error::Config(_))));
    }
}
