//! Closed-form estimates: the semiclassical band averages, the 2D wall
//! formula, the generalized variable-range-hopping ratio and heating rates.

use std::f64::consts::PI;

use serde::Serialize;

use crate::billiard::{BoxSpec, BumpSpec};
use crate::error::{invalid, Error, Result};
use crate::network::{DriveShape, DriveSpec};

pub const HBAR_SI: f64 = 1.054_571_817e-34;
pub const BOLTZMANN_SI: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticEstimates {
    /// `v_E = √(2E/m)`
    pub v_e: f64,
    /// Fraction of near-diagonal elements that are non-zero at `u = 0`.
    pub p0: f64,
    pub p0_in_range: bool,
    pub alg_estimate: f64,
    pub geo_estimate: f64,
    pub q_estimate: f64,
    pub g_lrt: f64,
}

/// Semiclassical estimates at `reference_energy` for the bump strength
/// `bump.strength`.
pub fn analytic_estimates(bx: &BoxSpec, bump: &BumpSpec, reference_energy: f64) -> Result<AnalyticEstimates> {
    if !(reference_energy > 0.0) {
        return Err(invalid("reference_energy", format!("must be positive, got {reference_energy}")));
    }
    let m = bx.mass();
    let (lx, ly) = (bx.length_x(), bx.length_y());
    let v = (2.0 * reference_energy / m).sqrt();
    let p0 = 1.0 / (2.0 * PI * m * v * ly);
    let alg = m * v.powi(3) / (2.0 * PI * ly * lx * lx);
    let smoothing = (-2.0 * m * m * v * v * (bump.sigma_x.powi(2) + bump.sigma_y.powi(2))).exp();
    let geo = (m * m * v * v / (2.0 * PI * lx)).powi(2) * smoothing * bump.strength * bump.strength;
    Ok(AnalyticEstimates {
        v_e: v,
        p0,
        p0_in_range: p0 > 0.0 && p0 < 1.0,
        alg_estimate: alg,
        geo_estimate: geo,
        q_estimate: geo / alg,
        g_lrt: wall_formula(m, v, lx),
    })
}

/// 2D wall formula `G_LRT = (4/3π) m² v³ / L_x`. Carries no ħ, so it holds
/// in any consistent unit system.
pub fn wall_formula(mass: f64, velocity: f64, length_x: f64) -> f64 {
    4.0 / (3.0 * PI) * mass * mass * velocity.powi(3) / length_x
}

fn check_q_alpha(function: &'static str, q: f64, alpha: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain { function, reason: format!("need 0 < q <= 1, got {q}") });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain { function, reason: format!("need alpha >= 0, got {alpha}") });
    }
    Ok(())
}

/// `α = ln(ϱ_E ω_c)`.
pub fn hopping_alpha(dos: f64, cutoff: f64) -> f64 {
    (dos * cutoff).ln()
}

/// Typical element of connected hopping sequences,
/// `x_ω = ⟨⟨x⟩⟩_g exp[2√(-α ln q)]`.
pub fn vrh_x_omega(q: f64, alpha: f64, geometric: f64) -> Result<f64> {
    check_q_alpha("vrh_x_omega", q, alpha)?;
    Ok(geometric * (2.0 * (-alpha * q.ln()).sqrt()).exp())
}

/// `G_SLRT / G_LRT = q exp[2√(-α ln q)]` for a rectangular drive spectrum.
///
/// Exceeds one when `q > e^{-4α}`; the formula is returned as is.
pub fn vrh_ratio(q: f64, alpha: f64) -> Result<f64> {
    check_q_alpha("vrh_ratio", q, alpha)?;
    Ok(q * (2.0 * (-alpha * q.ln()).sqrt()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VrhEstimate {
    pub q: f64,
    pub alpha: f64,
    pub x_omega: f64,
    pub ratio: f64,
}

pub fn vrh_estimate(q: f64, geometric: f64, dos: f64, cutoff: f64) -> Result<VrhEstimate> {
    let alpha = hopping_alpha(dos, cutoff);
    Ok(VrhEstimate { q, alpha, x_omega: vrh_x_omega(q, alpha, geometric)?, ratio: vrh_ratio(q, alpha)? })
}

/// Ratio estimate for `F̃(ω) = exp(-|ω/ω_c|)`.
///
/// Maximizes `x_ω F̃(ω)` over the hopping range `ω`, where
/// `x_ω/⟨⟨x⟩⟩_g = exp[2√(-ln q · ln(ϱω))]` for `ϱω > 1` and one below a
/// level spacing. With `t = ln(ϱω)` the log-objective
/// `2√(λt) - e^{t-α}` (`λ = -ln q`) is concave, so its stationary point is
/// found by bisection on the derivative.
pub fn vrh_exponential(q: f64, alpha: f64, drive: &DriveSpec) -> Result<f64> {
    check_q_alpha("vrh_exponential", q, alpha)?;
    if drive.shape != DriveShape::Exponential {
        return Err(Error::Domain { function: "vrh_exponential", reason: "drive shape is not exponential".into() });
    }
    let lambda = -q.ln();
    let objective = |t: f64| 2.0 * (lambda * t).sqrt() - (t - alpha).exp();
    let slope = |t: f64| (lambda / t).sqrt() - (t - alpha).exp();
    let mut best = 0.0f64;
    if lambda > 0.0 {
        let mut lo = 1e-300;
        let mut hi = alpha.max(1.0);
        while slope(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = best.max(objective(0.5 * (lo + hi)));
    }
    Ok(q * best.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatingPrediction {
    pub g_coefficient: f64,
    pub drive: DriveSpec,
    /// `D = G · RMS(Ṙ)²`
    pub diffusion: f64,
    pub temperature: f64,
    /// `Ė = D / T`
    pub heating_rate: f64,
}

pub fn predict_heating(g: f64, drive: &DriveSpec, temperature: f64) -> Result<HeatingPrediction> {
    if !(temperature > 0.0) {
        return Err(invalid("temperature", format!("must be positive, got {temperature}")));
    }
    if !(g >= 0.0) {
        return Err(invalid("g", format!("absorption coefficient must be >= 0, got {g}")));
    }
    let diffusion = g * drive.rms_velocity * drive.rms_velocity;
    Ok(HeatingPrediction {
        g_coefficient: g,
        drive: *drive,
        diffusion,
        temperature,
        heating_rate: diffusion / temperature,
    })
}

/// Cold-atom trap parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentSi {
    pub mass_kg: f64,
    pub velocity_m_per_s: f64,
    pub length_x_m: f64,
    pub length_y_m: f64,
    pub rms_wall_velocity_m_per_s: f64,
    pub temperature_k: f64,
}

impl ExperimentSi {
    /// ⁸⁵Rb cloud at 10 µK in a 200 µm optical billiard with a wall
    /// vibrating at RMS(Ṙ) = 0.015 m/s.
    pub fn rubidium_85_trap() -> Self {
        Self {
            mass_kg: 1.4e-25,
            velocity_m_per_s: 0.05,
            length_x_m: 2e-4,
            length_y_m: 2e-4,
            rms_wall_velocity_m_per_s: 0.015,
            temperature_k: 10e-6,
        }
    }
}

/// Values in units with ħ = 1, m = 1 and a length unit of one micrometre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InternalUnits {
    pub length_unit_m: f64,
    pub energy_unit_j: f64,
    pub time_unit_s: f64,
    pub velocity: f64,
    pub length_x: f64,
    pub g_lrt: f64,
    pub heating_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub input: ExperimentSi,
    /// J·kg/s (energy² · time / length²).
    pub g_lrt_si: f64,
    pub diffusion_si: f64,
    /// J/s
    pub heating_rate_si: f64,
    /// K/s
    pub heating_rate_kelvin_per_s: f64,
    pub mean_level_spacing_j: f64,
    pub internal: InternalUnits,
}

/// Wall-formula heating rate for a trap given in SI units.
pub fn experiment_prediction(exp: &ExperimentSi) -> Result<ExperimentReport> {
    let bx = BoxSpec::new(exp.length_x_m, exp.length_y_m, exp.mass_kg)?;
    let g = wall_formula(bx.mass(), exp.velocity_m_per_s, bx.length_x());
    let drive = DriveSpec::new(DriveShape::Rectangular, 1.0, exp.rms_wall_velocity_m_per_s)?;
    let thermal_energy = BOLTZMANN_SI * exp.temperature_k;
    let heating = predict_heating(g, &drive, thermal_energy)?;

    let length_unit = 1e-6;
    let energy_unit = HBAR_SI * HBAR_SI / (exp.mass_kg * length_unit * length_unit);
    let time_unit = HBAR_SI / energy_unit;
    let velocity_unit = length_unit / time_unit;
    let v_int = exp.velocity_m_per_s / velocity_unit;
    let lx_int = exp.length_x_m / length_unit;
    let dos_si = bx.mass() * bx.area() / (2.0 * PI * HBAR_SI * HBAR_SI);

    Ok(ExperimentReport {
        input: *exp,
        g_lrt_si: g,
        diffusion_si: heating.diffusion,
        heating_rate_si: heating.heating_rate,
        heating_rate_kelvin_per_s: heating.heating_rate / BOLTZMANN_SI,
        mean_level_spacing_j: 1.0 / dos_si,
        internal: InternalUnits {
            length_unit_m: length_unit,
            energy_unit_j: energy_unit,
            time_unit_s: time_unit,
            velocity: v_int,
            length_x: lx_int,
            g_lrt: wall_formula(1.0, v_int, lx_int),
            heating_rate: heating.heating_rate * time_unit / energy_unit,
        },
    })
}
