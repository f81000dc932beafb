//! Run configuration.
//!
//! A configuration is a TOML document. Omitted keys take documented defaults;
//! only `model.A` is required. Overrides are applied to the raw document before
//! it is typed, in this order: file or preset, then `PKS_*` environment
//! variables, then `--set key=value` arguments.
//!
//! Environment overrides use `PKS_<SECTION>__<KEY>`, with `__` separating
//! path segments, e.g. `PKS_MODEL__A=1000` or `PKS_MODEL__SHEAR__NAME=none`.
//! Keys match case-insensitively.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{PksError, Result};
use crate::grid::{mode_split, Field, Grid, TWO_PI};
use crate::hypo::EpsTriple;
use crate::integrator::{Mode, RecordConfig, StepConfig};
use crate::model::{
    chem_elliptic_solve, ModelParams, PksState, Regime, ShearKind, ShearProfile,
};

pub const ENV_PREFIX: &str = "PKS_";

/// Shear names accepted by `model.shear.name`.
pub const SHEAR_NAMES: [&str; 3] = ["couette", "tanh_perturbed", "none"];

/// `8 pi`, the critical mass of the flowless system.
pub const CRITICAL_MASS: f64 = 4.0 * TWO_PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub hypo: HypoConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "Ly", alias = "ly")]
    pub ly: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 257,
            ly: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Flow amplitude. `0` selects the flowless system: it resolves to
    /// `A = 1` (the diffusive time unit) with shear amplitude 0.
    #[serde(rename = "A", alias = "a")]
    pub a: f64,
    #[serde(default = "one_u8")]
    pub epsilon: u8,
    #[serde(default)]
    pub shear: ShearConfig,
}

fn one_u8() -> u8 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShearConfig {
    pub name: String,
    /// Multiplies the profile; 0 switches the flow off.
    pub amplitude: f64,
    /// `a` in `u = y + a tanh(y)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for ShearConfig {
    fn default() -> Self {
        Self {
            name: "couette".into(),
            amplitude: 1.0,
            perturbation: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub density: DensityInit,
    #[serde(default)]
    pub chemical: ChemicalInit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityInit {
    /// Gaussian of total mass `mass` and width `sigma` centred at `center`
    /// (x taken periodically), rescaled so the discrete mass is exact.
    GaussianBlob {
        #[serde(default = "default_mass")]
        mass: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// `background + amplitude cos(k x) exp(-y^2 / (2 width^2))`.
    SingleMode {
        #[serde(default = "one_usize")]
        k: usize,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        background: f64,
    },
}

fn default_mass() -> f64 {
    1.5 * CRITICAL_MASS
}

fn default_sigma() -> f64 {
    0.4
}

fn one_usize() -> usize {
    1
}

impl Default for DensityInit {
    fn default() -> Self {
        DensityInit::GaussianBlob {
            mass: default_mass(),
            sigma: default_sigma(),
            center: [0.0, 0.0],
        }
    }
}

/// Initial chemical. `c_eq` below is the solution of `Lap c + n_in - c = 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChemicalInit {
    #[default]
    ZeroChemical,
    /// x-average of `c_eq`; the x-dependent part is zero.
    MeanEquilibrium,
    /// x-average of `c_eq` plus `A^{-q}` times its x-dependent part.
    ScaledChemical {
        #[serde(default = "default_q")]
        q: f64,
    },
}

fn default_q() -> f64 {
    0.6
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Pks,
    PassiveScalar,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Pks => Mode::Pks,
            ModeName::PassiveScalar => Mode::PassiveScalar,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// Final time; when omitted, `t_end_scaled A^{1/3}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Final time in units of `A^{1/3}`, default 50.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end_scaled: Option<f64>,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl: f64,
    pub blowup_factor: f64,
    /// Largest tolerated `-min n / max|n|`.
    pub negativity_tol: f64,
    pub mode: ModeName,
}

impl Default for TimeConfig {
    fn default() -> Self {
        let s = StepConfig::default();
        Self {
            t_end: None,
            t_end_scaled: None,
            dt_init: s.dt_init,
            dt_min: s.dt_min,
            dt_max: s.dt_max,
            cfl: s.cfl,
            blowup_factor: s.blowup_factor,
            negativity_tol: s.negativity_tol,
            mode: ModeName::Pks,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypoConfig {
    pub eps: EpsTriple,
    pub k_report: usize,
}

impl Default for HypoConfig {
    fn default() -> Self {
        Self {
            eps: EpsTriple::default(),
            k_report: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Rescaled time between records; defaults to `t_end / 400`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<f64>,
    pub formats: Vec<Format>,
    /// Write the final state as `checkpoint.json`.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("pks-out"),
            stride: None,
            formats: vec![Format::Csv],
            checkpoint: true,
        }
    }
}

/// Decay-rate fit reported after a run and used by sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// A CSV column, or `h2` for `nneq_l2^2 + gradc_neq_l2^2`.
    pub column: String,
    pub window: [f64; 2],
    /// Window given in units of `A^{1/3}`.
    pub scaled: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            column: "h2".into(),
            window: [5.0, 50.0],
            scaled: true,
        }
    }
}

/// Everything a run needs, built from a resolved configuration.
#[derive(Clone, Debug)]
pub struct Setup {
    pub grid: Grid,
    pub shear: ShearProfile,
    pub params: ModelParams,
    pub state: PksState,
    pub step: StepConfig,
    pub mode: Mode,
    pub record: RecordConfig,
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_owned(), v.trim().to_owned())),
        _ => Err(PksError::Config(format!(
            "override '{s}' is not of the form key=value"
        ))),
    }
}

/// `PKS_SECTION__KEY=value` pairs as `(section.key, value)`, sorted by key.
pub fn env_overrides<I>(vars: I) -> Vec<(String, String)>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            if !rest.contains("__") {
                return None;
            }
            Some((rest.split("__").collect::<Vec<_>>().join(".").to_lowercase(), v))
        })
        .collect();
    out.sort();
    out
}

/// A TOML literal if `raw` parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// Existing key matching `seg` case-insensitively, else `seg` itself.
fn key_in(table: &Table, seg: &str) -> String {
    table
        .keys()
        .find(|k| k.eq_ignore_ascii_case(seg))
        .cloned()
        .unwrap_or_else(|| seg.to_owned())
}

/// Sets the dotted `path` in `doc` to `raw`, creating tables on the way.
pub fn apply_override(doc: &mut Table, path: &str, raw: &str) -> Result<()> {
    let segs: Vec<&str> = path.split('.').map(str::trim).collect();
    if segs.iter().any(|s| s.is_empty()) {
        return Err(PksError::Config(format!("override path '{path}' is malformed")));
    }
    let (last, parents) = segs.split_last().expect("split yields one segment");
    let mut table = doc;
    for seg in parents {
        let key = key_in(table, seg);
        let slot = table
            .entry(key)
            .or_insert_with(|| Value::Table(Table::new()));
        table = match slot {
            Value::Table(t) => t,
            _ => {
                return Err(PksError::Config(format!(
                    "override path '{path}': '{seg}' is not a table"
                )))
            }
        };
    }
    let key = key_in(table, last);
    table.insert(key, parse_value(raw));
    Ok(())
}

fn has_model_a(doc: &Table) -> bool {
    doc.iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("model"))
        .and_then(|(_, v)| v.as_table())
        .is_some_and(|m| m.keys().any(|k| k.eq_ignore_ascii_case("a")))
}

/// Types and resolves a raw document after applying `overrides` in order.
pub fn from_document(mut doc: Table, overrides: &[(String, String)]) -> Result<RunConfig> {
    for (k, v) in overrides {
        // an override of one end time replaces whichever form the base used
        let other = match k.to_ascii_lowercase().as_str() {
            "time.t_end" => Some("t_end_scaled"),
            "time.t_end_scaled" => Some("t_end"),
            _ => None,
        };
        if let Some(other) = other {
            let tk = key_in(&doc, "time");
            if let Some(Value::Table(time)) = doc.get_mut(&tk) {
                let key = key_in(time, other);
                time.remove(&key);
            }
        }
        apply_override(&mut doc, k, v)?;
    }
    if !has_model_a(&doc) {
        return Err(PksError::Config("missing required key model.A".into()));
    }
    let cfg: RunConfig = Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| PksError::Config(e.to_string()))?;
    cfg.resolve()
}

pub fn parse_document(text: &str, origin: &Path) -> Result<Table> {
    text.parse::<Table>().map_err(|e| PksError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads `path`, applies `overrides` and resolves.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| PksError::io(path, e))?;
    from_document(parse_document(&text, path)?, overrides)
}

impl RunConfig {
    /// Flow amplitude used by the solver (`1` for the flowless shorthand).
    pub fn effective_a(&self) -> f64 {
        if self.model.a == 0.0 {
            1.0
        } else {
            self.model.a
        }
    }

    /// Fills defaults that depend on other keys and validates everything.
    pub fn resolve(mut self) -> Result<Self> {
        let a = self.model.a;
        if !(a.is_finite() && a >= 0.0) {
            return Err(PksError::Config(format!("model.A = {a} must be non-negative")));
        }
        if a == 0.0 {
            self.model.a = 1.0;
            self.model.shear.amplitude = 0.0;
        }
        let a = self.model.a;
        if self.time.t_end.is_some() && self.time.t_end_scaled.is_some() {
            return Err(PksError::Config(
                "give either time.t_end or time.t_end_scaled, not both".into(),
            ));
        }
        let scaled = self.time.t_end_scaled.take().unwrap_or(50.0);
        if !(scaled.is_finite() && scaled > 0.0) {
            return Err(PksError::Config(format!("time.t_end_scaled = {scaled} must be positive")));
        }
        let t_end = *self.time.t_end.get_or_insert(scaled * a.cbrt());
        self.output.stride.get_or_insert(t_end / 400.0);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        Regime::from_epsilon(self.model.epsilon)?;
        let sh = &self.model.shear;
        if !SHEAR_NAMES.contains(&sh.name.as_str()) {
            return Err(PksError::Config(format!(
                "unknown shear '{}'; only strictly monotone profiles are supported, valid names: {}",
                sh.name,
                SHEAR_NAMES.join(", ")
            )));
        }
        if sh.name == "tanh_perturbed" && sh.perturbation.is_none() {
            return Err(PksError::Config(
                "shear tanh_perturbed needs model.shear.perturbation".into(),
            ));
        }
        if sh.name != "tanh_perturbed" && sh.perturbation.is_some() {
            return Err(PksError::Config(format!(
                "model.shear.perturbation only applies to tanh_perturbed, not {}",
                sh.name
            )));
        }
        match &self.initial.density {
            DensityInit::GaussianBlob { mass, sigma, center } => {
                if !(mass.is_finite() && *mass > 0.0) {
                    return Err(PksError::Config(format!("gaussian_blob mass {mass} must be positive")));
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(PksError::Config(format!("gaussian_blob sigma {sigma} must be positive")));
                }
                if !center.iter().all(|c| c.is_finite()) {
                    return Err(PksError::Config("gaussian_blob center must be finite".into()));
                }
            }
            DensityInit::SingleMode { k, amplitude, width, background } => {
                if *k == 0 || *k > self.grid.nx / 2 {
                    return Err(PksError::Config(format!(
                        "single_mode k = {k} must lie in 1..={}",
                        self.grid.nx / 2
                    )));
                }
                if !(width.is_finite() && *width > 0.0) || !amplitude.is_finite() || !background.is_finite() {
                    return Err(PksError::Config("single_mode parameters must be finite, width positive".into()));
                }
            }
        }
        if let ChemicalInit::ScaledChemical { q } = self.initial.chemical {
            if !(q > 0.5) {
                return Err(PksError::Config(format!(
                    "scaled_chemical needs q > 1/2 for a small initial chemical gradient, got q = {q}"
                )));
            }
        }
        self.step_config()?.validate()?;
        self.hypo.eps.validate()?;
        let stride = self.output.stride.unwrap_or(0.0);
        if !(stride.is_finite() && stride > 0.0) {
            return Err(PksError::Config(format!("output.stride = {stride} must be positive")));
        }
        if self.output.formats.is_empty() {
            return Err(PksError::Config("output.formats must name at least one format".into()));
        }
        let [lo, hi] = self.fit.window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(PksError::Config(format!("fit.window [{lo}, {hi}] is empty")));
        }
        Ok(())
    }

    pub fn step_config(&self) -> Result<StepConfig> {
        let t = &self.time;
        let t_end = t
            .t_end
            .ok_or_else(|| PksError::Misuse("configuration is not resolved".into()))?;
        Ok(StepConfig {
            dt_init: t.dt_init,
            dt_min: t.dt_min,
            dt_max: t.dt_max,
            cfl: t.cfl,
            blowup_factor: t.blowup_factor,
            t_end,
            record_interval: self.output.stride.unwrap_or(t_end / 400.0),
            negativity_tol: t.negativity_tol,
        })
    }

    /// Fit window in rescaled time.
    pub fn fit_window(&self) -> (f64, f64) {
        let s = if self.fit.scaled { self.effective_a().cbrt() } else { 1.0 };
        (self.fit.window[0] * s, self.fit.window[1] * s)
    }

    /// Resolved configuration as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PksError::Internal(format!("config serialization: {e}")))
    }

    /// SHA-256 of the resolved configuration without the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output.directory = PathBuf::new();
        Ok(hex::encode(Sha256::digest(c.to_toml()?.as_bytes())))
    }

    pub fn setup(&self) -> Result<Setup> {
        let g = &self.grid;
        let grid = Grid::new(g.nx, g.ny, g.ly)?;
        let regime = Regime::from_epsilon(self.model.epsilon)?;
        let params = ModelParams::new(self.model.a, regime)?;
        let sh = &self.model.shear;
        let kind = match sh.name.as_str() {
            "couette" => ShearKind::Couette,
            "tanh_perturbed" => ShearKind::TanhPerturbed {
                a: sh.perturbation.unwrap_or(0.0),
            },
            "none" => ShearKind::None,
            other => {
                return Err(PksError::Config(format!("unknown shear '{other}'")));
            }
        };
        let shear = ShearProfile::build(kind, &grid)?.scaled(sh.amplitude)?;
        let mode: Mode = self.time.mode.into();
        let n = self.density(grid)?;
        let c = match mode {
            Mode::PassiveScalar => Field::zeros(grid),
            Mode::Pks => self.chemical(&n, params.a())?,
        };
        let params = match (&self.initial.density, mode) {
            (DensityInit::GaussianBlob { mass, .. }, Mode::Pks) => params.with_mass_target(*mass)?,
            _ => params,
        };
        Ok(Setup {
            grid,
            shear,
            params,
            state: PksState::new(0.0, n, c)?,
            step: self.step_config()?,
            mode,
            record: RecordConfig {
                eps: self.hypo.eps,
                k_report: self.hypo.k_report,
            },
        })
    }

    fn density(&self, grid: Grid) -> Result<Field> {
        match self.initial.density {
            DensityInit::GaussianBlob { mass, sigma, center } => {
                let [cx, cy] = center;
                let raw = Field::from_fn(grid, |x, y| {
                    let dx = (x - cx + std::f64::consts::PI).rem_euclid(TWO_PI) - std::f64::consts::PI;
                    let dy = y - cy;
                    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
                });
                let total = crate::grid::integrate(&raw);
                if !(total > 0.0) {
                    return Err(PksError::Config(
                        "gaussian_blob has no mass on the grid; check center and sigma".into(),
                    ));
                }
                Ok(raw.scaled(mass / total))
            }
            DensityInit::SingleMode { k, amplitude, width, background } => {
                let kf = k as f64;
                Ok(Field::from_fn(grid, |x, y| {
                    background + amplitude * (kf * x).cos() * (-y * y / (2.0 * width * width)).exp()
                }))
            }
        }
    }

    fn chemical(&self, n: &Field, a: f64) -> Result<Field> {
        let grid = *n.grid();
        let weight = match self.initial.chemical {
            ChemicalInit::ZeroChemical => return Ok(Field::zeros(grid)),
            ChemicalInit::MeanEquilibrium => 0.0,
            ChemicalInit::ScaledChemical { q } => a.powf(-q),
        };
        let (c0, c_neq) = mode_split(&chem_elliptic_solve(n)?);
        Field::from_profile(grid, &c0)?.add(&c_neq.scaled(weight))
    }
}
