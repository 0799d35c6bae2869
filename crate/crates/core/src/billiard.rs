//! Rectangular billiard with a Gaussian floor bump.
//!
//! Units have ħ = 1. The unperturbed eigenfunctions are
//! `ψ(x, y) = (2/√(L_x L_y)) sin(n_x π x / L_x) sin(n_y π y / L_y)`, the bump
//! is a normalized Gaussian of strength `u`, and the driving perturbation is
//! the displacement of the wall at `x = L_x`.

use std::f64::consts::PI;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::matrix::SymMatrix;
use crate::quadrature;

/// Default multiplier between the top of the energy window and the basis cutoff.
pub const DEFAULT_BUFFER_FACTOR: f64 = 1.5;

const QUAD_ABS_TOL: f64 = 1e-12;
const QUAD_MAX_SEGMENTS: usize = 4000;
/// Gaussian tails beyond this many widths are below double precision.
const GAUSS_SUPPORT: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxSpec {
    length_x: f64,
    length_y: f64,
    mass: f64,
}

impl BoxSpec {
    pub fn new(length_x: f64, length_y: f64, mass: f64) -> Result<Self> {
        for (name, v) in [("length_x", length_x), ("length_y", length_y), ("mass", mass)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(Self { length_x, length_y, mass })
    }

    /// `L_x = L_y = 40`, unit mass.
    pub fn aspect_ratio_1() -> Self {
        Self { length_x: 40.0, length_y: 40.0, mass: 1.0 }
    }

    /// `L_x = 200`, `L_y = 10`, unit mass.
    pub fn aspect_ratio_20() -> Self {
        Self { length_x: 200.0, length_y: 10.0, mass: 1.0 }
    }

    pub fn length_x(&self) -> f64 {
        self.length_x
    }

    pub fn length_y(&self) -> f64 {
        self.length_y
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.length_x / self.length_y
    }

    pub fn area(&self) -> f64 {
        self.length_x * self.length_y
    }

    /// Every mode with energy `<= cutoff`, sorted by energy with ties broken
    /// by `(n_x, n_y)` lexicographic order.
    pub fn modes_below(&self, cutoff: f64) -> Vec<(ModeIndex, f64)> {
        let kmax = (2.0 * self.mass * cutoff.max(0.0)).sqrt();
        let nx_max = (kmax * self.length_x / PI).floor() as u32;
        let ny_max = (kmax * self.length_y / PI).floor() as u32;
        let mut modes = Vec::new();
        for nx in 1..=nx_max {
            for ny in 1..=ny_max {
                let mode = ModeIndex { nx, ny };
                let e = box_energy(mode, self);
                if e <= cutoff {
                    modes.push((mode, e));
                }
            }
        }
        modes.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        modes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ModeIndex {
    pub nx: u32,
    pub ny: u32,
}

impl ModeIndex {
    pub fn new(nx: u32, ny: u32) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid("mode", format!("mode numbers start at 1, got ({nx}, {ny})")));
        }
        Ok(Self { nx, ny })
    }
}

/// Gaussian deformation `u·U(x, y)` of the potential floor.
///
/// `sigma_x = sigma_y = 0` is the point-scatterer limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpSpec {
    pub strength: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub center_x: f64,
    pub center_y: f64,
}

impl BumpSpec {
    pub fn new(strength: f64, sigma_x: f64, sigma_y: f64, center_x: f64, center_y: f64) -> Result<Self> {
        if !strength.is_finite() {
            return Err(invalid("strength", "must be finite"));
        }
        if !(sigma_x >= 0.0 && sigma_x.is_finite()) || !(sigma_y >= 0.0 && sigma_y.is_finite()) {
            return Err(invalid("sigma", format!("widths must be >= 0, got ({sigma_x}, {sigma_y})")));
        }
        Ok(Self { strength, sigma_x, sigma_y, center_x, center_y })
    }

    /// Places an isotropic bump uniformly in `[0.4, 0.6]L_x × [0.4, 0.6]L_y`.
    pub fn random_center(bx: &BoxSpec, strength: f64, sigma: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cx = rng.gen_range(0.4..0.6) * bx.length_x;
        let cy = rng.gen_range(0.4..0.6) * bx.length_y;
        let bump = Self::new(strength, sigma, sigma, cx, cy)?;
        bump.validate_in(bx)?;
        Ok(bump)
    }

    pub fn with_strength(self, strength: f64) -> Self {
        Self { strength, ..self }
    }

    pub fn validate_in(&self, bx: &BoxSpec) -> Result<()> {
        if !(self.center_x > 0.0 && self.center_x < bx.length_x) {
            return Err(invalid("center_x", format!("{} lies outside (0, {})", self.center_x, bx.length_x)));
        }
        if !(self.center_y > 0.0 && self.center_y < bx.length_y) {
            return Err(invalid("center_y", format!("{} lies outside (0, {})", self.center_y, bx.length_y)));
        }
        Ok(())
    }
}

/// Truncated basis: every mode up to `energy_cutoff`, and the energy window
/// whose levels are trusted to have converged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasisSpec {
    pub max_mode_x: u32,
    pub max_mode_y: u32,
    pub energy_cutoff: f64,
    pub energy_window: (f64, f64),
}

impl BasisSpec {
    /// Retains every mode with `E <= buffer_factor * E_hi`.
    pub fn for_window(bx: &BoxSpec, window: (f64, f64), buffer_factor: f64) -> Result<Self> {
        let (lo, hi) = window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("energy_window", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if !(buffer_factor > 1.0) {
            return Err(invalid("buffer_factor", format!("must exceed 1, got {buffer_factor}")));
        }
        let cutoff = buffer_factor * hi;
        let k = (2.0 * bx.mass * cutoff).sqrt();
        let basis = Self {
            max_mode_x: (k * bx.length_x / PI).floor() as u32,
            max_mode_y: (k * bx.length_y / PI).floor() as u32,
            energy_cutoff: cutoff,
            energy_window: window,
        };
        let modes = bx.modes_below(cutoff);
        let min = modes.first().map_or(f64::INFINITY, |m| m.1);
        let max = modes.last().map_or(f64::NEG_INFINITY, |m| m.1);
        if !(lo > min && hi < max) {
            return Err(Error::WindowNotCovered { lo, hi, min, max });
        }
        Ok(basis)
    }

    pub fn modes(&self, bx: &BoxSpec) -> Vec<(ModeIndex, f64)> {
        bx.modes_below(self.energy_cutoff)
    }
}

/// `(π²/2m)(n_x²/L_x² + n_y²/L_y²)`.
pub fn box_energy(mode: ModeIndex, bx: &BoxSpec) -> f64 {
    let kx = mode.nx as f64 / bx.length_x;
    let ky = mode.ny as f64 / bx.length_y;
    PI * PI / (2.0 * bx.mass) * (kx * kx + ky * ky)
}

/// Smooth density of states `m L_x L_y / 2π`.
pub fn dos(bx: &BoxSpec) -> f64 {
    bx.mass * bx.length_x * bx.length_y / (2.0 * PI)
}

/// Prefactor `π²/(m L_x³)` of the wall-displacement matrix.
pub fn wall_coupling(bx: &BoxSpec) -> f64 {
    PI * PI / (bx.mass * bx.length_x.powi(3))
}

/// `V_nm = -δ(n_y, m_y) π² n_x m_x / (m L_x³)`.
pub fn wall_matrix_element(n: ModeIndex, m: ModeIndex, bx: &BoxSpec) -> f64 {
    if n.ny != m.ny {
        return 0.0;
    }
    -wall_coupling(bx) * n.nx as f64 * m.nx as f64
}

/// One Cartesian factor of the bump matrix element.
#[derive(Debug, Clone)]
struct AxisProfile {
    length: f64,
    sigma: f64,
    center: f64,
}

impl AxisProfile {
    /// `∫₀ᴸ cos(kπx/L) g_σ(x - x₀) dx` for the normalized Gaussian `g_σ`.
    fn cosine_moment(&self, k: u32) -> Result<f64> {
        let lo = (self.center - GAUSS_SUPPORT * self.sigma).max(0.0);
        let hi = (self.center + GAUSS_SUPPORT * self.sigma).min(self.length);
        let wave = k as f64 * PI / self.length;
        let norm = 1.0 / ((2.0 * PI).sqrt() * self.sigma);
        let inv_two_var = 1.0 / (2.0 * self.sigma * self.sigma);
        quadrature::integrate(
            |x| {
                let d = x - self.center;
                (wave * x).cos() * norm * (-d * d * inv_two_var).exp()
            },
            lo,
            hi,
            QUAD_ABS_TOL,
            QUAD_MAX_SEGMENTS,
        )
    }

    fn sine(&self, n: u32) -> f64 {
        (n as f64 * PI * self.center / self.length).sin()
    }

    /// `(2/L)∫ sin(aπx/L) sin(bπx/L) g_σ(x - x₀) dx`.
    fn element(&self, a: u32, b: u32) -> Result<f64> {
        if self.sigma == 0.0 {
            return Ok(2.0 / self.length * self.sine(a) * self.sine(b));
        }
        let diff = self.cosine_moment(a.abs_diff(b))?;
        let sum = self.cosine_moment(a + b)?;
        Ok((diff - sum) / self.length)
    }

    /// All elements for `1 <= a, b <= max_mode`, indexed `[a-1][b-1]`.
    fn table(&self, max_mode: u32) -> Result<Vec<Vec<f64>>> {
        let n = max_mode as usize;
        let mut out = vec![vec![0.0; n]; n];
        if self.sigma == 0.0 {
            let s: Vec<f64> = (1..=max_mode).map(|k| self.sine(k)).collect();
            for a in 0..n {
                for b in 0..n {
                    out[a][b] = 2.0 / self.length * s[a] * s[b];
                }
            }
            return Ok(out);
        }
        let moments = (0..=2 * max_mode).map(|k| self.cosine_moment(k)).collect::<Result<Vec<_>>>()?;
        for a in 1..=max_mode {
            for b in a..=max_mode {
                let v = (moments[a.abs_diff(b) as usize] - moments[(a + b) as usize]) / self.length;
                out[a as usize - 1][b as usize - 1] = v;
                out[b as usize - 1][a as usize - 1] = v;
            }
        }
        Ok(out)
    }
}

fn axis_profiles(bump: &BumpSpec, bx: &BoxSpec) -> (AxisProfile, AxisProfile) {
    (
        AxisProfile { length: bx.length_x, sigma: bump.sigma_x, center: bump.center_x },
        AxisProfile { length: bx.length_y, sigma: bump.sigma_y, center: bump.center_y },
    )
}

/// `⟨n|U|m⟩` for the normalized Gaussian (strength not included).
pub fn bump_matrix_element(n: ModeIndex, m: ModeIndex, bump: &BumpSpec, bx: &BoxSpec) -> Result<f64> {
    bump.validate_in(bx)?;
    let (px, py) = axis_profiles(bump, bx);
    Ok(px.element(n.nx, m.nx)? * py.element(n.ny, m.ny)?)
}

/// Eigenvector matrix of the deformed Hamiltonian, `⟨mode a | level n⟩` at
/// row `a`, column `n`.
#[derive(Debug, Clone)]
pub struct Overlaps {
    pub modes: Vec<ModeIndex>,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Overlaps {
    pub fn get(&self, mode: usize, level: usize) -> f64 {
        self.data[mode * self.dim + level]
    }
}

/// Levels `E_n` of the deformed billiard and the squared wall perturbation
/// `|V_nm|²` in that eigenbasis.
#[derive(Debug, Clone)]
pub struct PerturbedSystem {
    pub energies: Vec<f64>,
    pub v_squared: SymMatrix,
    pub dos: f64,
    pub mean_spacing: f64,
    /// Unperturbed mode with the largest weight in each level.
    pub dominant_modes: Vec<ModeIndex>,
    pub overlaps: Option<Overlaps>,
}

impl PerturbedSystem {
    /// Assembles a system from explicit levels and matrix, as used for
    /// synthetic (random-matrix or test) ensembles.
    pub fn from_parts(energies: Vec<f64>, v_squared: SymMatrix, dos: f64) -> Result<Self> {
        if v_squared.dim() != energies.len() {
            return Err(invalid("v_squared", "dimension differs from the number of levels"));
        }
        if energies.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(invalid("energies", "must be sorted ascending"));
        }
        if !v_squared.is_symmetric() || v_squared.min_element() < 0.0 {
            return Err(invalid("v_squared", "must be symmetric and element-wise non-negative"));
        }
        if !(dos > 0.0) {
            return Err(invalid("dos", "must be positive"));
        }
        Ok(Self { energies, v_squared, dos, mean_spacing: 1.0 / dos, dominant_modes: Vec::new(), overlaps: None })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn overlap_matrix_available(&self) -> bool {
        self.overlaps.is_some()
    }

    /// Index range of levels with `lo <= E_n <= hi`.
    pub fn levels_in(&self, window: (f64, f64)) -> std::ops::Range<usize> {
        let start = self.energies.partition_point(|&e| e < window.0);
        let end = self.energies.partition_point(|&e| e <= window.1);
        start..end.max(start)
    }

    /// Same levels, different matrix.
    pub fn with_matrix(&self, v_squared: SymMatrix) -> Self {
        Self { v_squared, overlaps: None, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub keep_overlaps: bool,
}

pub fn build_perturbed_system(bx: &BoxSpec, bump: &BumpSpec, basis: &BasisSpec) -> Result<PerturbedSystem> {
    build_perturbed_system_with(bx, bump, basis, BuildOptions::default())
}

/// Diagonalizes `diag(E_mode) + u·U` and transforms the wall perturbation
/// into the resulting eigenbasis.
pub fn build_perturbed_system_with(
    bx: &BoxSpec,
    bump: &BumpSpec,
    basis: &BasisSpec,
    options: BuildOptions,
) -> Result<PerturbedSystem> {
    bump.validate_in(bx)?;
    let modes = basis.modes(bx);
    let n = modes.len();
    if n < 2 {
        return Err(invalid("basis", format!("only {n} modes below cutoff {}", basis.energy_cutoff)));
    }
    let coupling = wall_coupling(bx);
    let density = dos(bx);
    let channels = modes.iter().map(|m| m.0.ny).max().unwrap_or(0) as usize;

    if bump.strength == 0.0 {
        let mut v_squared = SymMatrix::zeros(n);
        for a in 0..n {
            for b in a..n {
                let v = wall_matrix_element(modes[a].0, modes[b].0, bx);
                v_squared.set(a, b, v * v);
            }
        }
        let overlaps = options.keep_overlaps.then(|| Overlaps {
            modes: modes.iter().map(|m| m.0).collect(),
            dim: n,
            data: (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect(),
        });
        return Ok(PerturbedSystem {
            energies: modes.iter().map(|m| m.1).collect(),
            v_squared,
            dos: density,
            mean_spacing: 1.0 / density,
            dominant_modes: modes.iter().map(|m| m.0).collect(),
            overlaps,
        });
    }

    let max_nx = modes.iter().map(|m| m.0.nx).max().unwrap_or(1);
    let max_ny = channels as u32;
    let (px, py) = axis_profiles(bump, bx);
    let table_x = px.table(max_nx)?;
    let table_y = py.table(max_ny)?;

    let u = bump.strength;
    let hamiltonian = Mat::<f64>::from_fn(n, n, |a, b| {
        let (ma, mb) = (modes[a].0, modes[b].0);
        let elem =
            u * table_x[ma.nx as usize - 1][mb.nx as usize - 1] * table_y[ma.ny as usize - 1][mb.ny as usize - 1];
        if a == b {
            modes[a].1 + elem
        } else {
            elem
        }
    });
    let eigen = hamiltonian.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Diagonalization(format!("{e:?}")))?;
    let values = eigen.S().column_vector();
    let vectors = eigen.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let energies: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // Wall matrix is -c Σ_channels w wᵀ with w_a = n_x(a) on the channel.
    let mut projected = Mat::<f64>::zeros(n, channels);
    for (a, (mode, _)) in modes.iter().enumerate() {
        let ch = mode.ny as usize - 1;
        let weight = mode.nx as f64;
        for (col, &level) in order.iter().enumerate() {
            projected[(col, ch)] += vectors[(a, level)] * weight;
        }
    }
    let gram = &projected * projected.transpose();
    let mut v_squared = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = -coupling * gram[(i, j)];
            v_squared.set(i, j, v * v);
        }
    }

    let dominant_modes = order
        .iter()
        .map(|&level| {
            let best = (0..n)
                .max_by(|&a, &b| vectors[(a, level)].abs().total_cmp(&vectors[(b, level)].abs()).then(b.cmp(&a)))
                .unwrap_or(0);
            modes[best].0
        })
        .collect();

    let overlaps = options.keep_overlaps.then(|| Overlaps {
        modes: modes.iter().map(|m| m.0).collect(),
        dim: n,
        data: (0..n).flat_map(|a| order.iter().map(move |&level| (a, level))).map(|(a, l)| vectors[(a, l)]).collect(),
    });

    Ok(PerturbedSystem { energies, v_squared, dos: density, mean_spacing: 1.0 / density, dominant_modes, overlaps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn box_energy_ground_state() {
        let bx = BoxSpec::aspect_ratio_1();
        let e = box_energy(ModeIndex::new(1, 1).unwrap(), &bx);
        // 2 * π²/(2·1600)
        assert!(close(e, PI * PI / 1600.0, 1e-15));
        assert!((e - 6.1685e-3).abs() < 1e-7);
    }

    #[test]
    fn square_box_symmetry_and_scaling() {
        let bx = BoxSpec::aspect_ratio_1();
        let a = box_energy(ModeIndex { nx: 2, ny: 1 }, &bx);
        let b = box_energy(ModeIndex { nx: 1, ny: 2 }, &bx);
        assert_eq!(a, b);
        let long = BoxSpec::new(80.0, 40.0, 1.0).unwrap();
        let x_part = |b: &BoxSpec| PI * PI / (2.0 * b.mass()) / (b.length_x() * b.length_x());
        assert!(close(x_part(&bx) / x_part(&long), 4.0, 1e-15));
        let m11 = ModeIndex { nx: 1, ny: 1 };
        let y_part = PI * PI / 2.0 / 1600.0;
        assert!(close(box_energy(m11, &long) - y_part, (box_energy(m11, &bx) - y_part) / 4.0, 1e-12));
    }

    #[test]
    fn density_of_states() {
        assert!((dos(&BoxSpec::aspect_ratio_1()) - 254.648).abs() < 1e-3);
        assert!((dos(&BoxSpec::aspect_ratio_20()) - 318.310).abs() < 1e-3);
        let heavy = BoxSpec::new(40.0, 40.0, 2.0).unwrap();
        assert!(close(dos(&heavy), 2.0 * dos(&BoxSpec::aspect_ratio_1()), 1e-15));
    }

    #[test]
    fn rejects_invalid_box_and_modes() {
        assert!(BoxSpec::new(0.0, 1.0, 1.0).is_err());
        assert!(BoxSpec::new(1.0, 1.0, -1.0).is_err());
        assert!(ModeIndex::new(0, 3).is_err());
    }

    #[test]
    fn wall_matrix_selection_rule() {
        let bx = BoxSpec::aspect_ratio_1();
        let n = ModeIndex { nx: 2, ny: 3 };
        let m = ModeIndex { nx: 5, ny: 3 };
        let v = wall_matrix_element(n, m, &bx);
        assert!(close(v, -PI * PI * 10.0 / 64000.0, 1e-15));
        assert!((v + 1.5421e-3).abs() < 1e-7);
        assert_eq!(wall_matrix_element(n, ModeIndex { nx: 5, ny: 4 }, &bx), 0.0);
        assert_eq!(wall_matrix_element(m, n, &bx), v);
    }

    #[test]
    fn point_scatterer_product() {
        let bx = BoxSpec::aspect_ratio_1();
        let bump = BumpSpec::new(1.0, 0.0, 0.0, 20.0, 20.0).unwrap();
        let m11 = ModeIndex { nx: 1, ny: 1 };
        let u = bump_matrix_element(m11, m11, &bump, &bx).unwrap();
        assert!(close(u, 4.0 / 1600.0, 1e-14));
        let node = bump_matrix_element(ModeIndex { nx: 2, ny: 1 }, m11, &bump, &bx).unwrap();
        assert!(node.abs() < 1e-15);
    }

    #[test]
    fn gaussian_matches_free_space_closed_form() {
        // Far from the walls the truncated integral equals the free-space
        // transform cos(kx₀)exp(-k²σ²/2).
        let bx = BoxSpec::aspect_ratio_1();
        let sigma = 1.5;
        let bump = BumpSpec::new(1.0, sigma, sigma, 18.3, 21.7).unwrap();
        let oracle_1d = |a: u32, b: u32, l: f64, x0: f64| {
            let c = |k: u32| {
                let w = k as f64 * PI / l;
                (w * x0).cos() * (-0.5 * w * w * sigma * sigma).exp()
            };
            (c(a.abs_diff(b)) - c(a + b)) / l
        };
        for (n, m) in [((1, 1), (1, 1)), ((3, 7), (4, 2)), ((20, 9), (11, 31)), ((40, 40), (39, 1))] {
            let n = ModeIndex { nx: n.0, ny: n.1 };
            let m = ModeIndex { nx: m.0, ny: m.1 };
            let got = bump_matrix_element(n, m, &bump, &bx).unwrap();
            let want = oracle_1d(n.nx, m.nx, 40.0, 18.3) * oracle_1d(n.ny, m.ny, 40.0, 21.7);
            assert!((got - want).abs() < 1e-12, "{n:?} {m:?}: {got} vs {want}");
        }
    }

    #[test]
    fn narrow_gaussian_converges_to_point_limit() {
        let bx = BoxSpec::aspect_ratio_1();
        let point = BumpSpec::new(1.0, 0.0, 0.0, 17.1, 22.9).unwrap();
        let n = ModeIndex { nx: 3, ny: 5 };
        let m = ModeIndex { nx: 4, ny: 2 };
        let reference = bump_matrix_element(n, m, &point, &bx).unwrap();
        let err = |sigma: f64| {
            let g = BumpSpec::new(1.0, sigma, sigma, 17.1, 22.9).unwrap();
            (bump_matrix_element(n, m, &g, &bx).unwrap() - reference).abs() / reference.abs()
        };
        assert!(err(1e-3 * 40.0) < 1e-3);
        assert!(err(3e-5 * 40.0) < 1e-6);
        // Smoothing error is quadratic in the width.
        let ratio = err(0.2) / err(0.1);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn bump_outside_box_rejected() {
        let bx = BoxSpec::aspect_ratio_1();
        let bump = BumpSpec::new(1.0, 0.0, 0.0, 41.0, 20.0).unwrap();
        let m = ModeIndex { nx: 1, ny: 1 };
        assert!(bump_matrix_element(m, m, &bump, &bx).is_err());
        assert!(BumpSpec::new(1.0, -0.1, 0.0, 20.0, 20.0).is_err());
    }

    #[test]
    fn random_center_stays_in_central_region() {
        let bx = BoxSpec::aspect_ratio_20();
        for seed in 0..50 {
            let b = BumpSpec::random_center(&bx, 1e-3, 0.0, seed).unwrap();
            assert!(b.center_x >= 80.0 && b.center_x <= 120.0);
            assert!(b.center_y >= 4.0 && b.center_y <= 6.0);
        }
        assert_eq!(
            BumpSpec::random_center(&bx, 1.0, 0.0, 9).unwrap(),
            BumpSpec::random_center(&bx, 1.0, 0.0, 9).unwrap()
        );
    }

    #[test]
    fn basis_covers_window() {
        let bx = BoxSpec::aspect_ratio_1();
        let basis = BasisSpec::for_window(&bx, (0.5, 1.0), 1.5).unwrap();
        assert_eq!(basis.energy_cutoff, 1.5);
        let modes = basis.modes(&bx);
        assert!(modes.iter().all(|m| m.1 <= 1.5));
        assert!(modes.iter().all(|m| m.0.nx <= basis.max_mode_x && m.0.ny <= basis.max_mode_y));
        assert!(matches!(BasisSpec::for_window(&bx, (1e-4, 1.0), 1.5), Err(Error::WindowNotCovered { .. })));
        assert!(BasisSpec::for_window(&bx, (1.0, 0.5), 1.5).is_err());
    }

    #[test]
    fn degenerate_modes_sorted_lexicographically() {
        let bx = BoxSpec::aspect_ratio_1();
        let modes = bx.modes_below(0.1);
        for w in modes.windows(2) {
            assert!(w[0].1 < w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
        assert!(modes.windows(2).any(|w| w[0].1 == w[1].1));
    }

    fn small_setup(u: f64) -> (BoxSpec, PerturbedSystem) {
        let bx = BoxSpec::new(12.0, 9.0, 1.0).unwrap();
        let basis = BasisSpec::for_window(&bx, (0.5, 2.0), 1.5).unwrap();
        let bump = BumpSpec::new(u, 0.0, 0.0, 5.3, 4.1).unwrap();
        let sys = build_perturbed_system_with(&bx, &bump, &basis, BuildOptions { keep_overlaps: true }).unwrap();
        (bx, sys)
    }

    #[test]
    fn unperturbed_system_is_box_spectrum() {
        let (bx, sys) = small_setup(0.0);
        let modes = bx.modes_below(3.0);
        assert_eq!(sys.len(), modes.len());
        for (e, m) in sys.energies.iter().zip(&modes) {
            assert_eq!(*e, m.1);
        }
        for i in 0..sys.len() {
            for j in 0..sys.len() {
                if sys.dominant_modes[i].ny != sys.dominant_modes[j].ny {
                    assert_eq!(sys.v_squared.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn perturbed_system_invariants() {
        let (_, sys) = small_setup(0.05);
        assert!(sys.v_squared.is_symmetric());
        assert!(sys.v_squared.min_element() >= 0.0);
        assert!(sys.energies.windows(2).all(|w| w[0] <= w[1]));
        let ov = sys.overlaps.as_ref().unwrap();
        // Columns are orthonormal.
        for (i, j) in [(0, 0), (3, 3), (0, 5), (10, 11)] {
            let dot: f64 = (0..ov.dim).map(|a| ov.get(a, i) * ov.get(a, j)).sum();
            assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }

    #[test]
    fn wall_matrix_matches_dense_transform() {
        let (bx, sys) = small_setup(0.4);
        let ov = sys.overlaps.as_ref().unwrap();
        for (i, j) in [(0, 1), (3, 17), (20, 21), (30, 41), (25, 25)] {
            let mut v = 0.0;
            for a in 0..ov.dim {
                for b in 0..ov.dim {
                    v += ov.get(a, i) * wall_matrix_element(ov.modes[a], ov.modes[b], &bx) * ov.get(b, j);
                }
            }
            assert!(close(sys.v_squared.get(i, j), v * v, 1e-9), "({i}, {j})");
        }
    }

    #[test]
    fn small_elements_follow_first_order_mixing() {
        let bx = BoxSpec::new(12.0, 9.31, 1.0).unwrap();
        let basis = BasisSpec::for_window(&bx, (0.5, 2.0), 1.5).unwrap();
        let modes = basis.modes(&bx);
        let shape = BumpSpec::new(1.0, 0.3, 0.3, 5.3, 4.1).unwrap();
        let spacing = 1.0 / dos(&bx);
        let u = 1e-4 * spacing * bx.area() / 4.0;
        let sys = build_perturbed_system(&bx, &shape.with_strength(u), &basis).unwrap();
        let element = |a: usize, b: usize| bump_matrix_element(modes[a].0, modes[b].0, &shape, &bx).unwrap();
        let gap = |a: usize| {
            modes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != a)
                .map(|(_, m)| (m.1 - modes[a].1).abs())
                .fold(f64::MAX, f64::min)
        };
        let mut checked = 0;
        for n in 0..modes.len() {
            for m in n + 1..modes.len() {
                let (mn, mm) = (modes[n].0, modes[m].0);
                if mn.ny == mm.ny || modes[m].1 > 2.0 || gap(n) < 0.2 * spacing || gap(m) < 0.2 * spacing {
                    continue;
                }
                let mut first = 0.0;
                for k in 0..modes.len() {
                    if k != n {
                        first += element(k, n) * wall_matrix_element(modes[k].0, mm, &bx) / (modes[n].1 - modes[k].1);
                    }
                    if k != m {
                        first += element(k, m) * wall_matrix_element(mn, modes[k].0, &bx) / (modes[m].1 - modes[k].1);
                    }
                }
                let want = (u * first).powi(2);
                if want < 1e-6 * (u * wall_coupling(&bx)).powi(2) {
                    continue;
                }
                assert!(
                    close(sys.v_squared.get(n, m), want, 0.05),
                    "{mn:?} {mm:?}: {} vs {want}",
                    sys.v_squared.get(n, m)
                );
                checked += 1;
            }
        }
        assert!(checked >= 20, "only {checked} pairs checked");
    }

    #[test]
    fn first_order_level_shifts() {
        let bx = BoxSpec::new(12.0, 9.0, 1.0).unwrap();
        let basis = BasisSpec::for_window(&bx, (0.5, 2.0), 1.5).unwrap();
        let modes = basis.modes(&bx);
        let bump = BumpSpec::new(0.0, 0.0, 0.0, 5.3, 4.1).unwrap();
        let spacing = 1.0 / dos(&bx);
        let typical_u = 4.0 / bx.area();
        let u = 0.01 * spacing / typical_u;
        let sys = build_perturbed_system(&bx, &bump.with_strength(u), &basis).unwrap();
        let mut checked = 0;
        for (k, (mode, e0)) in modes.iter().enumerate() {
            // Skip levels with a near neighbour, where degenerate mixing dominates.
            let isolated = modes.iter().enumerate().all(|(j, m)| j == k || (m.1 - e0).abs() > spacing);
            if !isolated || *e0 > 2.0 {
                continue;
            }
            let first_order = u * bump_matrix_element(*mode, *mode, &bump, &bx).unwrap();
            if first_order.abs() < 0.2 * u * typical_u {
                continue;
            }
            let shift = sys.energies[k] - e0;
            assert!((shift - first_order).abs() <= 0.05 * first_order.abs(), "{mode:?}: {shift} vs {first_order}");
            checked += 1;
        }
        assert!(checked >= 3, "only {checked} isolated levels checked");
    }

    #[test]
    fn from_parts_validates() {
        let m = SymMatrix::zeros(2);
        assert!(PerturbedSystem::from_parts(vec![1.0, 0.0], m.clone(), 1.0).is_err());
        let mut neg = m.clone();
        neg.set(0, 1, -1.0);
        assert!(PerturbedSystem::from_parts(vec![0.0, 1.0], neg, 1.0).is_err());
        let sys = PerturbedSystem::from_parts(vec![0.0, 1.0], m, 2.0).unwrap();
        assert_eq!(sys.mean_spacing, 0.5);
        assert_eq!(sys.levels_in((0.5, 2.0)), 1..2);
    }
}
