//! Scenario files: TOML with a fixed schema and no unknown keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wsdirac::couplings::{ModulationSpec, Tuning};
use wsdirac::discrete::{ModelKind, WavepacketInit};
use wsdirac::exact::Splitting;
use wsdirac::ws::LatticeParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub lattice: LatticeSection,
    #[serde(default)]
    pub modulation: ModulationSection,
    pub packet: PacketSection,
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    /// Metric name to acceptance band.
    #[serde(default)]
    pub tolerances: BTreeMap<String, Tolerance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub v1: f64,
    pub f: f64,
    #[serde(default = "default_ppw")]
    pub grid_points_per_well: usize,
    /// Sites (discrete) and wells (exact grid) on each side of the origin.
    pub half_width: usize,
    /// Wells on each side of the reference well in the eigensolver box.
    #[serde(default = "default_solver_half_width")]
    pub solver_half_width: usize,
}

fn default_ppw() -> usize {
    32
}

fn default_solver_half_width() -> usize {
    LatticeParams::default().domain_half_width
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSection {
    #[serde(default)]
    pub v1_mod: f64,
    #[serde(default)]
    pub v2_mod: f64,
    #[serde(default)]
    pub vs_amp: f64,
    #[serde(default)]
    pub tune: TuneMode,
    #[serde(default)]
    pub terms: Vec<DriveTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneMode {
    #[default]
    None,
    Dirac,
    Weyl,
}

impl TuneMode {
    pub fn tuning(self) -> Option<Tuning> {
        match self {
            TuneMode::None => None,
            TuneMode::Dirac => Some(Tuning::Dirac),
            TuneMode::Weyl => Some(Tuning::Weyl),
        }
    }
}

/// One Fourier component `A^{(alpha)}_{j,q}`; its conjugate partner is implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveTerm {
    pub alpha: u8,
    pub j: i32,
    pub q: i32,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// A packet weight written either as a real number or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Real(f64),
    Complex([f64; 2]),
}

impl Default for Weight {
    fn default() -> Self {
        Weight::Real(0.0)
    }
}

impl Weight {
    pub fn value(self) -> Complex64 {
        match self {
            Weight::Real(r) => Complex64::new(r, 0.0),
            Weight::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSection {
    #[serde(default)]
    pub a_plus: Weight,
    #[serde(default)]
    pub a_minus: Weight,
    #[serde(default)]
    pub b_plus: Weight,
    #[serde(default)]
    pub b_minus: Weight,
    #[serde(default)]
    pub k0: f64,
    pub sigma: f64,
    /// Rescale the weights to unit norm instead of rejecting them.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// No time evolution; only the ladder, couplings and bands.
    None,
    Discrete,
    Exact,
    Both,
}

impl Engine {
    pub fn discrete(self) -> bool {
        matches!(self, Engine::Discrete | Engine::Both)
    }

    pub fn exact(self) -> bool {
        matches!(self, Engine::Exact | Engine::Both)
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Engine::None),
            "discrete" => Ok(Engine::Discrete),
            "exact" => Ok(Engine::Exact),
            "both" => Ok(Engine::Both),
            _ => Err(format!("unknown engine `{s}` (expected none, discrete, exact or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub model: ModelKind,
    pub engine: Engine,
    pub t_final_tb: f64,
    pub stride_tb: f64,
    /// Discrete step in Bloch periods.
    #[serde(default = "default_dt_tb")]
    pub dt_tb: f64,
    #[serde(default = "default_steps_per_tb")]
    pub steps_per_tb: usize,
    #[serde(default)]
    pub splitting: Splitting,
    #[serde(default)]
    pub absorber: bool,
    /// Drive the exact engine at its own measured `Δ` and project with its energies.
    #[serde(default)]
    pub calibrate: bool,
    /// Recorded in the manifest; no stage of the pipeline is stochastic.
    #[serde(default)]
    pub seed: u64,
}

fn default_dt_tb() -> f64 {
    0.01
}

fn default_steps_per_tb() -> usize {
    wsdirac::exact::DEFAULT_STEPS_PER_TB
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisKind {
    /// Trajectories only.
    #[default]
    None,
    /// Speeds of the two packets of a splitting run.
    Drift,
    /// Damped-oscillation fit of `⟨x⟩(t)`.
    Zitterbewegung,
    /// Band table of the compiled spinor-2 model.
    Bands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub kind: AnalysisKind,
    /// Earlier drift snapshot; defaults to half the run.
    pub drift_from_tb: Option<f64>,
    /// Time of the envelope attenuation, in Zitterbewegung periods.
    #[serde(default = "default_attenuation_at")]
    pub attenuation_at_tzb: f64,
    #[serde(default = "default_band_samples")]
    pub band_samples: usize,
    /// Atom mass in atomic mass units for the dimensioned constants.
    #[serde(default = "default_atom_mass")]
    pub atom_mass_amu: f64,
    #[serde(default = "default_lambda")]
    pub lambda_l_nm: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            kind: AnalysisKind::None,
            drift_from_tb: None,
            attenuation_at_tzb: default_attenuation_at(),
            band_samples: default_band_samples(),
            atom_mass_amu: default_atom_mass(),
            lambda_l_nm: default_lambda(),
        }
    }
}

fn default_attenuation_at() -> f64 {
    5.0
}

fn default_band_samples() -> usize {
    256
}

fn default_atom_mass() -> f64 {
    132.905_451_933
}

fn default_lambda() -> f64 {
    852.35
}

/// Either a band around `expected` (`rel` and/or `abs`) or bounds `min`/`max`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub expected: Option<f64>,
    pub rel: Option<f64>,
    pub abs: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Tolerance {
    pub fn accepts(&self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        if let Some(e) = self.expected {
            let mut width = 0.0f64;
            if let Some(r) = self.rel {
                width = width.max(r * e.abs());
            }
            if let Some(a) = self.abs {
                width = width.max(a);
            }
            if (value - e).abs() > width {
                return false;
            }
        }
        self.min.is_none_or(|m| value >= m) && self.max.is_none_or(|m| value <= m)
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(r) = self.rel {
            parts.push(format!("rel {r}"));
        }
        if let Some(a) = self.abs {
            parts.push(format!("abs {a}"));
        }
        if let Some(m) = self.min {
            parts.push(format!(">= {m}"));
        }
        if let Some(m) = self.max {
            parts.push(format!("<= {m}"));
        }
        write!(f, "{}", parts.join(", "))
    }
}

/// Metrics a run can produce; tolerances must name one of these.
pub const METRICS: &[&str] = &[
    "delta",
    "overlap_g0_cospi_g1",
    "e0",
    "hopping",
    "drift_left_discrete",
    "drift_right_discrete",
    "drift_left_exact",
    "drift_right_exact",
    "l2_density_final",
    "norm_drift_discrete",
    "norm_drift_exact",
    "leakage_max_exact",
    "leakage_monotone_exact",
    "zb_period_tb_discrete",
    "zb_amplitude_discrete",
    "zb_attenuation_discrete",
    "zb_r_squared_discrete",
    "zb_period_tb_exact",
    "zb_amplitude_exact",
    "zb_attenuation_exact",
    "zb_r_squared_exact",
    "xmean_rms_difference",
    "m_bar",
    "c_bar",
    "m_bar_atom_masses",
    "c_bar_recoil",
    "gap_at_zero",
];

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(CliError::Parse {
                line: 1,
                column: 1,
                message: "empty configuration".into(),
            });
        }
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
            CliError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.in_file(path))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(CliError::Validation {
                key: key.into(),
                reason,
            })
        };
        if self.name.trim().is_empty() {
            return bad("name", "must not be empty".into());
        }
        if !(self.lattice.v1 > 0.0) {
            return bad("lattice.v1", format!("must be positive, got {}", self.lattice.v1));
        }
        if !(self.lattice.f > 0.0) {
            return bad("lattice.f", format!("must be positive, got {}", self.lattice.f));
        }
        if self.lattice.grid_points_per_well < 32 || !self.lattice.grid_points_per_well.is_multiple_of(2) {
            return bad(
                "lattice.grid_points_per_well",
                format!(
                    "must be even and at least 32, got {}",
                    self.lattice.grid_points_per_well
                ),
            );
        }
        if self.lattice.half_width < 8 || !self.lattice.half_width.is_multiple_of(2) {
            return bad(
                "lattice.half_width",
                format!("must be even and at least 8, got {}", self.lattice.half_width),
            );
        }
        if self.lattice.solver_half_width < 4 {
            return bad("lattice.solver_half_width", "must be at least 4".into());
        }
        for (i, t) in self.modulation.terms.iter().enumerate() {
            if !(t.alpha == 1 || t.alpha == 2) {
                return bad(
                    &format!("modulation.terms[{i}].alpha"),
                    format!("must be 1 or 2, got {}", t.alpha),
                );
            }
            if !(-1..=1).contains(&t.q) {
                return bad(
                    &format!("modulation.terms[{i}].q"),
                    format!("must be -1, 0 or 1, got {}", t.q),
                );
            }
        }
        let w: f64 = self.packet_weights().iter().map(|z| z.norm_sqr()).sum();
        if w == 0.0 {
            return bad("packet", "all weights are zero".into());
        }
        if !self.packet.normalize && (w - 1.0).abs() > 1e-9 {
            return bad(
                "packet",
                format!("weights must have unit norm, got {w} (set normalize = true)"),
            );
        }
        if !(self.packet.sigma >= 1.0) {
            return bad("packet.sigma", format!("must be at least 1, got {}", self.packet.sigma));
        }
        if 6.0 * self.packet.sigma > 2.0 * self.lattice.half_width as f64 {
            return bad("packet.sigma", "packet does not fit in the lattice".into());
        }
        if self.run.engine != Engine::None {
            if !(self.run.t_final_tb > 0.0) {
                return bad(
                    "run.t_final_tb",
                    format!("must be positive, got {}", self.run.t_final_tb),
                );
            }
            if !(self.run.stride_tb > 0.0) || self.run.stride_tb > self.run.t_final_tb {
                return bad("run.stride_tb", "must be positive and at most t_final_tb".into());
            }
        }
        if !(self.run.dt_tb > 0.0) {
            return bad("run.dt_tb", "must be positive".into());
        }
        if !self.is_whole_multiple(self.run.stride_tb, self.run.dt_tb) {
            return bad("run.stride_tb", "must be a whole number of discrete steps".into());
        }
        if self.run.steps_per_tb < 8 {
            return bad("run.steps_per_tb", "must be at least 8".into());
        }
        if !self.is_whole_multiple(self.run.stride_tb, 1.0 / self.run.steps_per_tb as f64) {
            return bad("run.stride_tb", "must be a whole number of exact steps".into());
        }
        if self.run.model.is_spinor4() && self.analysis.kind == AnalysisKind::Bands {
            return bad("analysis.kind", "band tables are for the spinor-2 model".into());
        }
        if let Some(t) = self.analysis.drift_from_tb {
            if !(t >= 0.0 && t < self.run.t_final_tb) {
                return bad("analysis.drift_from_tb", "must lie inside the run".into());
            }
        }
        for (name, tol) in &self.tolerances {
            let key = format!("tolerances.{name}");
            if !METRICS.contains(&name.as_str()) {
                return bad(&key, "unknown metric".into());
            }
            let band = tol.expected.is_some() && (tol.rel.is_some() || tol.abs.is_some());
            if !band && tol.min.is_none() && tol.max.is_none() {
                return bad(&key, "needs expected with rel/abs, or min/max".into());
            }
        }
        Ok(())
    }

    fn is_whole_multiple(&self, span: f64, step: f64) -> bool {
        let r = span / step;
        (r - r.round()).abs() < 1e-9 * r.max(1.0)
    }

    pub fn lattice_params(&self) -> LatticeParams {
        LatticeParams {
            v1: self.lattice.v1,
            f: self.lattice.f,
            domain_half_width: self.lattice.solver_half_width,
            grid_points_per_well: self.lattice.grid_points_per_well,
        }
    }

    fn packet_weights(&self) -> [Complex64; 4] {
        let p = &self.packet;
        [p.a_plus.value(), p.a_minus.value(), p.b_plus.value(), p.b_minus.value()]
    }

    pub fn wavepacket(&self) -> WavepacketInit {
        let mut w = self.packet_weights();
        if self.packet.normalize {
            let n = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            w.iter_mut().for_each(|z| *z /= n);
        }
        WavepacketInit::spinor4(w, self.packet.k0, self.packet.sigma)
    }

    /// Untuned modulation at the given drive frequencies.
    pub fn modulation(&self, omega_b: f64, delta: f64) -> Result<ModulationSpec> {
        let m = &self.modulation;
        let mut spec = ModulationSpec::new(omega_b, delta).with_depths(m.v1_mod, m.v2_mod, m.vs_amp);
        for (i, t) in m.terms.iter().enumerate() {
            spec.insert(t.alpha, t.j, t.q, Complex64::new(t.re, t.im))
                .map_err(|e| CliError::Validation {
                    key: format!("modulation.terms[{i}]"),
                    reason: e.to_string(),
                })?;
        }
        Ok(spec)
    }

    /// SHA-256 of the canonical JSON form (object keys sorted), hex encoded.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
    }
}

/// Compact JSON with object keys in sorted order at every level.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}
