//! Run configuration: a TOML file, optionally patched by `--override` flags,
//! validated before anything is computed.

use std::path::{Path, PathBuf};

use bragg_core::scattering::{LaserCavitySettings, PulseProfile, DEFAULT_REGIME_THRESHOLD};
use bragg_core::structure_factor::{ChainGeometry, WaveVector, WitnessSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one")]
    pub format_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub units: Units,
    pub state: StateSpec,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub laser: LaserSpec,
    #[serde(default)]
    pub pulse: PulseSpec,
    #[serde(default)]
    pub witness: WitnessConfig,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub regime: RegimeSpec,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Units {
    /// "kappa": frequencies and times in units of the cavity linewidth.
    /// "absolute": any consistent unit.
    pub frequency: String,
}

impl Default for Units {
    fn default() -> Self {
        Units { frequency: "kappa".into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum StateFamily {
    Dicke,
    Ghz,
    W,
    Product,
    RandomPure,
    RandomProduct,
    RandomSeparable,
    File,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub family: StateFamily,
    #[serde(default)]
    pub n_sites: Option<usize>,
    #[serde(default)]
    pub excitations: Option<usize>,
    /// (θ, φ) per site.
    #[serde(default)]
    pub bloch_angles: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub components: Option<usize>,
    /// Defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub spacing: f64,
    pub axis: [f64; 3],
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec { spacing: 1.0, axis: [1.0, 0.0, 0.0] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserSpec {
    pub rabi_0: f64,
    pub rabi_1: f64,
    pub phase: f64,
    pub vacuum_rabi: f64,
    pub detuning: f64,
    pub cavity_detuning: f64,
    pub cavity_linewidth: f64,
    pub atomic_linewidth: f64,
}

impl Default for LaserSpec {
    fn default() -> Self {
        LaserSpec {
            rabi_0: 2.0,
            rabi_1: 2.0,
            phase: 0.0,
            vacuum_rabi: 1.0,
            detuning: 100.0,
            cavity_detuning: 0.0,
            cavity_linewidth: 1.0,
            atomic_linewidth: 0.0,
        }
    }
}

impl LaserSpec {
    pub fn settings(&self) -> LaserCavitySettings {
        LaserCavitySettings {
            rabi_0: self.rabi_0,
            rabi_1: self.rabi_1,
            phase: self.phase,
            vacuum_rabi: self.vacuum_rabi,
            detuning: self.detuning,
            cavity_detuning: self.cavity_detuning,
            cavity_linewidth: self.cavity_linewidth,
            atomic_linewidth: self.atomic_linewidth,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSpec {
    /// square | gaussian_truncated | custom_sampled
    pub shape: String,
    #[serde(default)]
    pub duration: Option<f64>,
    /// (t, ϱ) pairs for custom_sampled.
    #[serde(default)]
    pub samples: Option<Vec<[f64; 2]>>,
    /// Detection time; defaults to the end of the pulse.
    #[serde(default)]
    pub readout_time: Option<f64>,
}

impl Default for PulseSpec {
    fn default() -> Self {
        PulseSpec { shape: "square".into(), duration: Some(10.0), samples: None, readout_time: None }
    }
}

impl PulseSpec {
    pub fn profile(&self) -> Result<PulseProfile, CliError> {
        let duration = || self.duration.ok_or_else(|| CliError::schema("pulse.duration is required for this shape"));
        let p = match self.shape.as_str() {
            "square" => PulseProfile::Square { duration: duration()? },
            "gaussian_truncated" => PulseProfile::GaussianTruncated { duration: duration()? },
            "custom_sampled" => PulseProfile::CustomSampled {
                samples: self
                    .samples
                    .as_ref()
                    .ok_or_else(|| CliError::schema("pulse.samples is required for custom_sampled"))?
                    .iter()
                    .map(|s| (s[0], s[1]))
                    .collect(),
            },
            other => {
                return Err(CliError::schema(format!(
                    "pulse.shape = `{other}`; expected square, gaussian_truncated or custom_sampled"
                )))
            }
        };
        p.validate().map_err(|e| CliError::schema(format!("pulse: {e}")))?;
        Ok(p)
    }

    pub fn readout(&self, profile: &PulseProfile) -> f64 {
        self.readout_time.unwrap_or_else(|| profile.end())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessConfig {
    /// dicke | general
    pub kind: String,
    /// c_x, c_y, c_z for the general witness.
    #[serde(default)]
    pub coefficients: Option<[f64; 3]>,
    /// Phase per site of q^x, q^y, q^z.
    #[serde(default)]
    pub phases: Option<[f64; 3]>,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig { kind: "dicke".into(), coefficients: None, phases: None }
    }
}

impl WitnessConfig {
    pub fn spec(&self, geometry: &ChainGeometry) -> Result<(String, WitnessSpec), CliError> {
        match self.kind.as_str() {
            "dicke" => Ok(("dicke".into(), WitnessSpec::dicke())),
            "general" => {
                let c = self.coefficients.ok_or_else(|| CliError::schema("witness.coefficients is required for kind = general"))?;
                let p = self.phases.unwrap_or([0.0; 3]);
                let q = p.map(|x| WaveVector::along_chain(geometry, x));
                let spec = WitnessSpec::new(c, q).map_err(|e| CliError::schema(format!("witness.coefficients: {e}")))?;
                Ok(("general".into(), spec))
            }
            other => Err(CliError::schema(format!("witness.kind = `{other}`; expected dicke or general"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    /// Phases per site to measure; defaults to jπ/N, j = 0..=N.
    #[serde(default)]
    pub phases: Option<Vec<f64>>,
    pub include_rotations: bool,
    pub condition_cap: f64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec { phases: None, include_rotations: true, condition_cap: 1e6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default)]
    pub phases: Option<Vec<f64>>,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec { phases: None, start: -std::f64::consts::PI, stop: std::f64::consts::PI, points: 65 }
    }
}

impl ScanSpec {
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        if let Some(p) = &self.phases {
            if p.is_empty() {
                return Err(CliError::schema("scan.phases is empty"));
            }
            return Ok(p.clone());
        }
        match self.points {
            0 => Err(CliError::schema("scan.points must be at least 1")),
            1 => Ok(vec![self.start]),
            n => Ok((0..n).map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64).collect()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub efficiency: f64,
    pub window: f64,
    pub shots: u64,
    pub mean_photons_per_shot: f64,
    /// Bootstrap resamples; 0 disables.
    pub bootstrap: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { efficiency: 1.0, window: 1.0, shots: 1000, mean_photons_per_shot: 10.0, bootstrap: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSpec {
    pub threshold: f64,
    pub allow_violation: bool,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        RegimeSpec { threshold: DEFAULT_REGIME_THRESHOLD, allow_violation: false }
    }
}

impl RunConfig {
    pub fn geometry(&self, n_sites: usize) -> Result<ChainGeometry, CliError> {
        ChainGeometry::new(n_sites, self.geometry.spacing, self.geometry.axis)
            .map_err(|e| CliError::schema(format!("geometry: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(CliError::schema(format!(
                "format_version = {}; this build reads version {CONFIG_FORMAT_VERSION}",
                self.format_version
            )));
        }
        match self.units.frequency.as_str() {
            "kappa" => {
                if self.laser.cavity_linewidth != 1.0 {
                    return Err(CliError::schema(format!(
                        "laser.cavity_linewidth = {} but units.frequency = kappa fixes it to 1",
                        self.laser.cavity_linewidth
                    )));
                }
            }
            "absolute" => {}
            other => {
                return Err(CliError::schema(format!("units.frequency = `{other}`; expected kappa or absolute")))
            }
        }
        self.laser.settings().validate().map_err(|e| CliError::schema(format!("laser: {e}")))?;
        self.pulse.profile()?;
        if let Some(t) = self.pulse.readout_time {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CliError::schema(format!("pulse.readout_time = {t} must be non-negative")));
            }
        }
        let s = &self.state;
        let need = |field: &str| CliError::schema(format!("state.{field} is required for this family"));
        match s.family {
            StateFamily::File => {
                s.path.as_ref().ok_or_else(|| need("path"))?;
            }
            StateFamily::Product => {
                let angles = s.bloch_angles.as_ref().ok_or_else(|| need("bloch_angles"))?;
                if let Some(n) = s.n_sites {
                    if n != angles.len() {
                        return Err(CliError::schema(format!(
                            "state.n_sites = {n} but state.bloch_angles has {} entries",
                            angles.len()
                        )));
                    }
                }
            }
            _ => {
                let n = s.n_sites.ok_or_else(|| need("n_sites"))?;
                if !(2..=bragg_core::spin::MAX_SITES).contains(&n) {
                    return Err(CliError::schema(format!(
                        "state.n_sites = {n} outside 2..={}",
                        bragg_core::spin::MAX_SITES
                    )));
                }
                if let StateFamily::Dicke = s.family {
                    let k = s.excitations.ok_or_else(|| need("excitations"))?;
                    if k > n {
                        return Err(CliError::schema(format!("state.excitations = {k} exceeds state.n_sites = {n}")));
                    }
                }
                if let StateFamily::RandomSeparable = s.family {
                    if s.components.unwrap_or(1) == 0 {
                        return Err(CliError::schema("state.components must be at least 1"));
                    }
                }
            }
        }
        if !(self.design.condition_cap > 1.0) {
            return Err(CliError::schema("design.condition_cap must exceed 1"));
        }
        self.scan.grid()?;
        if !(self.regime.threshold > 0.0) {
            return Err(CliError::schema("regime.threshold must be positive"));
        }
        let n = &self.noise;
        if !(n.efficiency > 0.0 && n.efficiency <= 1.0) {
            return Err(CliError::schema(format!("noise.efficiency = {} outside (0, 1]", n.efficiency)));
        }
        if !(n.window > 0.0) {
            return Err(CliError::schema("noise.window must be positive"));
        }
        if n.shots == 0 {
            return Err(CliError::schema("noise.shots must be at least 1"));
        }
        if !(n.mean_photons_per_shot > 0.0) {
            return Err(CliError::schema("noise.mean_photons_per_shot must be positive"));
        }
        if !(self.geometry.spacing > 0.0) {
            return Err(CliError::schema("geometry.spacing must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (fields in declaration order).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::schema(format!("--override `{spec}` is not KEY=VALUE")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::schema(format!("--override key `{path}` is malformed")));
    }
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::schema(format!("--override: `{k}` in `{path}` is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads, patches and validates a configuration.
pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(s) = seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::schema(format!("{}: {}", path.display(), e.message())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = cfg.state.path.as_mut() {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *p = dir.join(&*p);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_values_are_typed() {
        let mut t: toml::Table = toml::from_str("[state]\nfamily = \"dicke\"\n").unwrap();
        apply_override(&mut t, "state.n_sites=4").unwrap();
        apply_override(&mut t, "state.family=ghz").unwrap();
        apply_override(&mut t, "laser.detuning = 50.5").unwrap();
        assert_eq!(t["state"]["n_sites"].as_integer(), Some(4));
        assert_eq!(t["state"]["family"].as_str(), Some("ghz"));
        assert_eq!(t["laser"]["detuning"].as_float(), Some(50.5));
        assert!(apply_override(&mut t, "novalue").is_err());
        assert!(apply_override(&mut t, "state.family.x=1").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t: toml::Table = toml::from_str("[state]\nfamily = \"dicke\"\nn_site = 4\n").unwrap();
        let err = toml::Value::Table(t).try_into::<RunConfig>().unwrap_err();
        assert!(err.to_string().contains("n_site"), "{err}");
    }

    #[test]
    fn scan_grid_endpoints() {
        let s = ScanSpec { phases: None, start: 0.0, stop: 1.0, points: 5 };
        assert_eq!(s.grid().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let s = ScanSpec { points: 1, ..s };
        assert_eq!(s.grid().unwrap(), vec![0.0]);
    }
}
