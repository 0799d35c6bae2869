//! Evaluation of single sweep points: build the deformed billiard, then
//! collect every band statistic and network average for one `(u, σ, seed)`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::billiard::{
    build_perturbed_system, dos, BasisSpec, BoxSpec, BumpSpec, PerturbedSystem, DEFAULT_BUFFER_FACTOR,
};
use crate::error::{invalid, Result};
use crate::matrixstats::{averages, log_histogram, select_band, untexture_levels, LogHistogram};
use crate::network::{slrt_average, DriveShape, DriveSpec};
use crate::rmt::rmt_twin;
use crate::seeds;
use crate::vrh::{hopping_alpha, vrh_ratio};

pub const DEFAULT_BASIS_STATES: usize = 2000;
/// Statistics window as fractions of the converged levels, by index.
pub const DEFAULT_WINDOW_FRACTION: (f64, f64) = (0.5, 0.8);
pub const DEFAULT_CUTOFF_SPACINGS: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    As1,
    As20,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::As1 => "as1",
            Preset::As20 => "as20",
        }
    }

    pub fn box_spec(self) -> BoxSpec {
        match self {
            Preset::As1 => BoxSpec::aspect_ratio_1(),
            Preset::As20 => BoxSpec::aspect_ratio_20(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as1" => Ok(Preset::As1),
            "as20" => Ok(Preset::As20),
            other => Err(invalid("preset", format!("unknown preset `{other}`, expected as1 or as20"))),
        }
    }
}

/// Everything shared by the points of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Setup {
    pub bx: BoxSpec,
    pub basis: BasisSpec,
    pub window: (f64, f64),
    pub drive: DriveSpec,
}

impl Setup {
    /// Basis of the lowest `basis_states` box modes. Levels below
    /// `E_cut / 1.5` count as converged; the window spans the index fractions
    /// `window_fraction` of those, with edges at midpoints between
    /// unperturbed levels. The drive cutoff is `cutoff_spacings` mean spacings.
    pub fn new(
        bx: BoxSpec,
        basis_states: usize,
        window_fraction: (f64, f64),
        cutoff_spacings: f64,
        shape: DriveShape,
    ) -> Result<Self> {
        if basis_states < 20 {
            return Err(invalid("basis_states", format!("need at least 20 states, got {basis_states}")));
        }
        let (f_lo, f_hi) = window_fraction;
        if !(0.0 < f_lo && f_lo < f_hi && f_hi < 1.0) {
            return Err(invalid("window_fraction", format!("need 0 < lo < hi < 1, got ({f_lo}, {f_hi})")));
        }
        if !(cutoff_spacings > 0.0) {
            return Err(invalid("cutoff_spacings", "must be positive"));
        }
        let rho = dos(&bx);
        let mut guess = 1.5 * basis_states as f64 / rho;
        let mut modes = bx.modes_below(guess);
        while modes.len() < basis_states {
            guess *= 1.5;
            modes = bx.modes_below(guess);
        }
        let cutoff = modes[basis_states - 1].1;
        let energies: Vec<f64> = modes.iter().map(|m| m.1).filter(|&e| e <= cutoff).collect();
        let converged = energies.partition_point(|&e| e <= cutoff / DEFAULT_BUFFER_FACTOR);
        let i_lo = ((f_lo * converged as f64) as usize).max(1);
        let i_hi = ((f_hi * converged as f64) as usize).min(converged - 1);
        if i_hi <= i_lo + 1 {
            return Err(invalid("window_fraction", "window holds fewer than two levels"));
        }
        let window = (0.5 * (energies[i_lo - 1] + energies[i_lo]), 0.5 * (energies[i_hi] + energies[i_hi + 1]));
        let basis = BasisSpec::for_window(&bx, window, cutoff / window.1)?;
        let drive = DriveSpec::new(shape, cutoff_spacings / rho, 1.0)?;
        Ok(Self { bx, basis, window, drive })
    }

    pub fn preset(preset: Preset) -> Self {
        Self::new(
            preset.box_spec(),
            DEFAULT_BASIS_STATES,
            DEFAULT_WINDOW_FRACTION,
            DEFAULT_CUTOFF_SPACINGS,
            DriveShape::Rectangular,
        )
        .expect("preset parameters are valid")
    }

    pub fn dos(&self) -> f64 {
        dos(&self.bx)
    }

    /// `α = ln(ϱ_E ω_c)`.
    pub fn alpha(&self) -> f64 {
        hopping_alpha(self.dos(), self.drive.cutoff)
    }

    /// Mid-window energy.
    pub fn reference_energy(&self) -> f64 {
        0.5 * (self.window.0 + self.window.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub u: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl SweepPoint {
    pub fn new(u: f64, sigma: f64, seed: u64) -> Self {
        Self { u, sigma, seed }
    }

    /// Bump of width `sigma` at a seed-dependent position; independent of `u`.
    pub fn bump(&self, bx: &BoxSpec) -> Result<BumpSpec> {
        if !(self.u >= 0.0 && self.u.is_finite()) {
            return Err(invalid("u", format!("must be finite and >= 0, got {}", self.u)));
        }
        BumpSpec::random_center(bx, self.u, self.sigma, seeds::derive(self.seed, seeds::BUMP_POSITION))
    }
}

pub fn build_point_system(setup: &Setup, point: &SweepPoint) -> Result<PerturbedSystem> {
    build_perturbed_system(&setup.bx, &point.bump(&setup.bx)?, &setup.basis)
}

/// Window-restricted per-diagonal shuffle keyed by the point seed.
pub fn untextured(setup: &Setup, point: &SweepPoint, system: &PerturbedSystem) -> PerturbedSystem {
    untexture_levels(system, system.levels_in(setup.window), seeds::derive(point.seed, seeds::UNTEXTURE))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub u: f64,
    pub sigma: f64,
    pub seed: u64,
    pub alg: f64,
    pub geo: f64,
    pub harm: f64,
    pub slrt: f64,
    pub slrt_untextured: f64,
    pub slrt_rmt_twin: f64,
    pub q: f64,
    pub vrh_ratio: f64,
    pub g_lrt: f64,
    pub g_slrt: f64,
    /// `ok`, or the first failure met; unavailable columns are NaN.
    pub status: String,
}

impl PointResult {
    /// Row for a point whose evaluation stopped early.
    pub fn failed(point: &SweepPoint, reason: String) -> Self {
        Self {
            u: point.u,
            sigma: point.sigma,
            seed: point.seed,
            alg: f64::NAN,
            geo: f64::NAN,
            harm: f64::NAN,
            slrt: f64::NAN,
            slrt_untextured: f64::NAN,
            slrt_rmt_twin: f64::NAN,
            q: f64::NAN,
            vrh_ratio: f64::NAN,
            g_lrt: f64::NAN,
            g_slrt: f64::NAN,
            status: reason,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Statistics of one sweep point. Never fails: errors become the status.
pub fn evaluate_point(setup: &Setup, point: &SweepPoint) -> PointResult {
    match build_point_system(setup, point) {
        Ok(system) => evaluate_system(setup, point, &system),
        Err(e) => PointResult::failed(point, format!("failed: {e}")),
    }
}

pub fn evaluate_system(setup: &Setup, point: &SweepPoint, system: &PerturbedSystem) -> PointResult {
    let band = match select_band(system, setup.window, setup.drive.cutoff) {
        Ok(b) => b,
        Err(e) => return PointResult::failed(point, format!("failed: {e}")),
    };
    let report = averages(&band);
    let mut status = Vec::new();
    let mut network = |sys: &PerturbedSystem, label: &str| match slrt_average(sys, &setup.drive, setup.window) {
        Ok(avg) => avg.value,
        Err(e) => {
            status.push(format!("{label}: {e}"));
            f64::NAN
        }
    };
    let slrt = network(system, "slrt");
    let slrt_untextured = network(&untextured(setup, point, system), "slrt_untextured");
    let slrt_rmt_twin = match rmt_twin(system, &setup.drive, setup.window, seeds::derive(point.seed, seeds::RMT_TWIN)) {
        Ok(twin) => network(&twin, "slrt_rmt_twin"),
        Err(e) => {
            status.push(format!("slrt_rmt_twin: {e}"));
            f64::NAN
        }
    };
    let q = report.sparsity_q;
    let ratio = if q == 0.0 {
        0.0
    } else {
        vrh_ratio(q, setup.alpha()).unwrap_or_else(|e| {
            status.push(format!("vrh_ratio: {e}"));
            f64::NAN
        })
    };
    let rho = system.dos;
    PointResult {
        u: point.u,
        sigma: point.sigma,
        seed: point.seed,
        alg: report.algebraic,
        geo: report.geometric,
        harm: report.harmonic,
        slrt,
        slrt_untextured,
        slrt_rmt_twin,
        q,
        vrh_ratio: ratio,
        g_lrt: std::f64::consts::PI * rho * report.algebraic,
        g_slrt: std::f64::consts::PI * rho * slrt,
        status: if status.is_empty() { "ok".into() } else { format!("partial: {}", status.join("; ")) },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramMarkers {
    pub alg: f64,
    pub geo: f64,
    pub slrt: f64,
    pub slrt_untextured: f64,
}

/// Log-histogram of the band at one point together with its marker values.
pub fn histogram_point(setup: &Setup, point: &SweepPoint, bins: usize) -> Result<(LogHistogram, HistogramMarkers)> {
    let system = build_point_system(setup, point)?;
    let band = select_band(&system, setup.window, setup.drive.cutoff)?;
    let mut hist = log_histogram(&band, bins)?;
    let slrt = slrt_average(&system, &setup.drive, setup.window)?.value;
    let slrt_untextured = slrt_average(&untextured(setup, point, &system), &setup.drive, setup.window)?.value;
    hist.network = Some(slrt);
    let markers = HistogramMarkers { alg: hist.algebraic, geo: hist.geometric, slrt, slrt_untextured };
    Ok((hist, markers))
}
