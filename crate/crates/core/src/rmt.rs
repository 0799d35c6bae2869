//! Banded random matrices with log-normal elements.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::billiard::PerturbedSystem;
use crate::error::{invalid, Error, Result};
use crate::matrix::SymMatrix;
use crate::matrixstats::{algebraic_average, geometric_average, select_band};
use crate::network::DriveSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogNormalSpec {
    /// Mean of `ln x`.
    pub mu: f64,
    /// Variance of `ln x`.
    pub sigma2: f64,
    pub size: usize,
    pub band_cutoff: f64,
    pub seed: u64,
}

impl LogNormalSpec {
    pub fn new(mu: f64, sigma2: f64, size: usize, band_cutoff: f64, seed: u64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) || !mu.is_finite() {
            return Err(invalid("sigma2", format!("need finite mu and sigma2 >= 0, got ({mu}, {sigma2})")));
        }
        if !(band_cutoff > 0.0) {
            return Err(invalid("band_cutoff", "must be positive"));
        }
        Ok(Self { mu, sigma2, size, band_cutoff, seed })
    }

    pub fn geometric(&self) -> f64 {
        self.mu.exp()
    }

    pub fn algebraic(&self) -> f64 {
        (self.mu + 0.5 * self.sigma2).exp()
    }

    pub fn sparsity(&self) -> f64 {
        (-0.5 * self.sigma2).exp()
    }
}

const MOMENT_ROUNDING: f64 = 1e-12;

/// `(ln g, 2 ln(a/g))`: the log-normal parameters reproducing the given
/// algebraic and geometric averages.
pub fn match_moments(algebraic: f64, geometric: f64) -> Result<(f64, f64)> {
    if !(geometric > 0.0) {
        return Err(Error::ZeroGeometricAverage);
    }
    let log_ratio = (algebraic / geometric).ln();
    if log_ratio < -MOMENT_ROUNDING {
        return Err(Error::MomentOrder { algebraic, geometric });
    }
    // Averages of a constant band differ only by summation rounding.
    let sigma2 = if log_ratio < MOMENT_ROUNDING { 0.0 } else { 2.0 * log_ratio };
    Ok((geometric.ln(), sigma2))
}

/// Symmetric matrix over `energies` whose in-band upper-triangle elements
/// (`|E_n - E_m| <= band_cutoff`, `n < m`) are independent log-normal draws.
/// Out-of-band and diagonal entries are zero.
pub fn sample_matrix(spec: &LogNormalSpec, energies: &[f64]) -> Result<SymMatrix> {
    if energies.len() != spec.size {
        return Err(invalid("energies", format!("expected {} levels, got {}", spec.size, energies.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.sigma2.sqrt();
    let mut matrix = SymMatrix::zeros(spec.size);
    for n in 0..spec.size {
        for m in n + 1..spec.size {
            if (energies[m] - energies[n]).abs() > spec.band_cutoff {
                break;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            matrix.set(n, m, (spec.mu + width * z).exp());
        }
    }
    Ok(matrix)
}

/// Log-normal twin of a physical system: same levels, a sampled band whose
/// target algebraic and geometric averages are those of the physical band.
pub fn rmt_twin(system: &PerturbedSystem, drive: &DriveSpec, window: (f64, f64), seed: u64) -> Result<PerturbedSystem> {
    let band = select_band(system, window, drive.cutoff)?;
    let (mu, sigma2) = match_moments(algebraic_average(&band), geometric_average(&band))?;
    let spec = LogNormalSpec::new(mu, sigma2, system.len(), drive.support(), seed)?;
    Ok(system.with_matrix(sample_matrix(&spec, &system.energies)?))
}
