//! Run configuration: a TOML file with dotted sections, layered over a preset.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slrt_core::billiard::{BoxSpec, BumpSpec};
use slrt_core::network::{DriveShape, DriveSpec};
use slrt_core::pipeline::{
    Preset, Setup, SweepPoint, DEFAULT_BASIS_STATES, DEFAULT_CUTOFF_SPACINGS, DEFAULT_WINDOW_FRACTION,
};
use slrt_core::vrh::ExperimentSi;

pub const DEFAULT_U_VALUES: [f64; 5] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
pub const DEFAULT_BINS: usize = 60;

/// Bad input: unreadable, malformed or out-of-range configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    #[serde(rename = "box", default)]
    bx: RawBox,
    #[serde(default)]
    bump: RawBump,
    #[serde(default)]
    basis: RawBasis,
    #[serde(default)]
    window: RawWindow,
    #[serde(default)]
    drive: RawDrive,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    histogram: RawHistogram,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    length_x: Option<f64>,
    length_y: Option<f64>,
    mass: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBump {
    center_x: Option<f64>,
    center_y: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    states: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    fraction: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    shape: Option<String>,
    cutoff_spacings: Option<f64>,
    rms_velocity: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    u: Option<Vec<f64>>,
    sigma: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHistogram {
    bins: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    emit: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    mass_kg: Option<f64>,
    velocity_m_per_s: Option<f64>,
    length_x_m: Option<f64>,
    length_y_m: Option<f64>,
    rms_wall_velocity_m_per_s: Option<f64>,
    temperature_k: Option<f64>,
}

/// Optional sweep outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Sweep,
    Averages,
    Histogram,
    NetworkDump,
    RmtTwin,
    Vrh,
}

impl FromStr for Emit {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "sweep" => Emit::Sweep,
            "averages" => Emit::Averages,
            "histogram" => Emit::Histogram,
            "network_dump" => Emit::NetworkDump,
            "rmt_twin" => Emit::RmtTwin,
            "vrh" => Emit::Vrh,
            other => {
                return Err(config_error(format!(
                    "output.emit: unknown entry `{other}` (expected sweep, averages, histogram, network_dump, rmt_twin, vrh)"
                )))
            }
        })
    }
}

/// Overrides given on the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
}

/// Fully resolved run configuration. Everything that affects the numbers is
/// serialized into the config hash.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub setup: Setup,
    /// Fixed bump position; drawn per seed when absent.
    pub bump_center: Option<(f64, f64)>,
    /// Sorted by `(u, σ, seed)`, without duplicates.
    pub points: Vec<SweepPoint>,
    pub bins: usize,
    pub experiment: ExperimentSi,
    #[serde(skip)]
    pub emit: BTreeSet<Emit>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let raw = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_error(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
            }
            None => RawConfig::default(),
        };
        Self::resolve(raw, overrides)
    }

    #[cfg(test)]
    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        Self::resolve(toml::from_str(text).map_err(|e| config_error(e.to_string()))?, overrides)
    }

    fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<Self, ConfigError> {
        let core = |e: slrt_core::Error| config_error(e.to_string());
        let preset_name = overrides.preset.clone().or(raw.preset);
        let preset = preset_name.as_deref().map(Preset::from_str).transpose().map_err(core)?;
        let any_box = raw.bx.length_x.is_some() || raw.bx.length_y.is_some();
        let base = match (preset, any_box) {
            (Some(p), _) => p.box_spec(),
            (None, false) => Preset::As1.box_spec(),
            (None, true) => {
                if raw.bx.length_x.is_none() || raw.bx.length_y.is_none() {
                    return Err(config_error("box: length_x and length_y are both required without a preset"));
                }
                BoxSpec::aspect_ratio_1()
            }
        };
        let preset = preset.or((!any_box).then_some(Preset::As1));
        let bx = BoxSpec::new(
            raw.bx.length_x.unwrap_or(base.length_x()),
            raw.bx.length_y.unwrap_or(base.length_y()),
            raw.bx.mass.unwrap_or(base.mass()),
        )
        .map_err(core)?;

        let shape = match raw.drive.shape.as_deref().unwrap_or("rectangular") {
            "rectangular" => DriveShape::Rectangular,
            "exponential" => DriveShape::Exponential,
            other => {
                return Err(config_error(format!(
                    "drive.shape: unknown shape `{other}` (expected rectangular or exponential)"
                )))
            }
        };
        let fraction = raw.window.fraction.map(|[a, b]| (a, b)).unwrap_or(DEFAULT_WINDOW_FRACTION);
        let mut setup = Setup::new(
            bx,
            raw.basis.states.unwrap_or(DEFAULT_BASIS_STATES),
            fraction,
            raw.drive.cutoff_spacings.unwrap_or(DEFAULT_CUTOFF_SPACINGS),
            shape,
        )
        .map_err(core)?;
        if let Some(rms) = raw.drive.rms_velocity {
            setup.drive = DriveSpec::new(shape, setup.drive.cutoff, rms).map_err(core)?;
        }

        let bump_center = match (raw.bump.center_x, raw.bump.center_y) {
            (Some(x), Some(y)) => Some((x, y)),
            (None, None) => None,
            _ => return Err(config_error("bump: center_x and center_y must be given together")),
        };

        let us = raw.sweep.u.unwrap_or_else(|| DEFAULT_U_VALUES.to_vec());
        let sigmas = raw.sweep.sigma.unwrap_or_else(|| vec![0.0]);
        let seeds = match overrides.seed {
            Some(s) => vec![s],
            None => raw.sweep.seeds.unwrap_or_else(|| vec![1]),
        };
        if us.is_empty() || sigmas.is_empty() || seeds.is_empty() {
            return Err(config_error("sweep: u, sigma and seeds must be non-empty"));
        }
        let mut points = Vec::with_capacity(us.len() * sigmas.len() * seeds.len());
        for &u in &us {
            for &s in &sigmas {
                points.extend(seeds.iter().map(|&seed| SweepPoint::new(u, s, seed)));
            }
        }
        points.sort_by(|a, b| a.u.total_cmp(&b.u).then(a.sigma.total_cmp(&b.sigma)).then(a.seed.cmp(&b.seed)));
        points.dedup();

        let bins = raw.histogram.bins.unwrap_or(DEFAULT_BINS);
        if bins == 0 {
            return Err(config_error("histogram.bins: must be at least 1"));
        }

        let quoted = ExperimentSi::rubidium_85_trap();
        let e = raw.experiment;
        let experiment = ExperimentSi {
            mass_kg: e.mass_kg.unwrap_or(quoted.mass_kg),
            velocity_m_per_s: e.velocity_m_per_s.unwrap_or(quoted.velocity_m_per_s),
            length_x_m: e.length_x_m.unwrap_or(quoted.length_x_m),
            length_y_m: e.length_y_m.unwrap_or(quoted.length_y_m),
            rms_wall_velocity_m_per_s: e.rms_wall_velocity_m_per_s.unwrap_or(quoted.rms_wall_velocity_m_per_s),
            temperature_k: e.temperature_k.unwrap_or(quoted.temperature_k),
        };

        let emit = match raw.output.emit {
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<BTreeSet<Emit>, _>>()?,
            None => BTreeSet::from([Emit::Sweep]),
        };

        let config = Self { preset, setup, bump_center, points, bins, experiment, emit };
        for p in &config.points {
            config
                .bump(p)
                .map_err(|e| config_error(format!("sweep point u={} sigma={} seed={}: {e}", p.u, p.sigma, p.seed)))?;
        }
        Ok(config)
    }

    pub fn bump(&self, point: &SweepPoint) -> slrt_core::Result<BumpSpec> {
        match self.bump_center {
            Some((x, y)) => {
                let bump = BumpSpec { center_x: x, center_y: y, ..point.bump(&self.setup.bx)? };
                bump.validate_in(&self.setup.bx)?;
                Ok(bump)
            }
            None => point.bump(&self.setup.bx),
        }
    }

    /// SHA-256 of the canonical JSON form of every physics parameter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}
