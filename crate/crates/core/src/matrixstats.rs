//! Statistics of the near-diagonal band of `|V_nm|²`.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::billiard::PerturbedSystem;
use crate::error::{invalid, Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandElement {
    pub n: usize,
    pub m: usize,
    /// `|V_nm|²`
    pub x: f64,
    /// `E_n - E_m`
    pub omega: f64,
}

/// Unordered in-window level pairs `n < m` with `0 < |E_n - E_m| <= cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSelection {
    pub window: (f64, f64),
    pub cutoff: f64,
    pub elements: Vec<BandElement>,
}

impl BandSelection {
    pub fn from_elements(window: (f64, f64), cutoff: f64, elements: Vec<BandElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::EmptyBand { cutoff });
        }
        Ok(Self { window, cutoff, elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.elements.iter().map(|e| e.x)
    }

    pub fn zero_count(&self) -> usize {
        self.values().filter(|&x| x == 0.0).count()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let elements = self.elements.iter().map(|e| BandElement { x: e.x * factor, ..*e }).collect();
        Self { elements, ..self.clone() }
    }
}

pub fn select_band(system: &PerturbedSystem, window: (f64, f64), cutoff: f64) -> Result<BandSelection> {
    if !(cutoff > 0.0) {
        return Err(invalid("cutoff", format!("must be positive, got {cutoff}")));
    }
    let levels = system.levels_in(window);
    let mut elements = Vec::new();
    for n in levels.clone() {
        for m in n + 1..levels.end {
            let omega = system.energies[n] - system.energies[m];
            if -omega > cutoff {
                break;
            }
            if omega != 0.0 {
                elements.push(BandElement { n, m, x: system.v_squared.get(n, m), omega });
            }
        }
    }
    BandSelection::from_elements(window, cutoff, elements)
}

/// Band defined by index distance `1 <= m - n <= max_offset` inside `levels`.
pub fn select_band_by_offset(
    system: &PerturbedSystem,
    levels: Range<usize>,
    max_offset: usize,
) -> Result<BandSelection> {
    let mut elements = Vec::new();
    for n in levels.clone() {
        for m in n + 1..(n + max_offset + 1).min(levels.end) {
            let omega = system.energies[n] - system.energies[m];
            elements.push(BandElement { n, m, x: system.v_squared.get(n, m), omega });
        }
    }
    let window = (
        system.energies.get(levels.start).copied().unwrap_or(f64::NAN),
        system.energies.get(levels.end.saturating_sub(1)).copied().unwrap_or(f64::NAN),
    );
    BandSelection::from_elements(window, f64::NAN, elements)
}

/// `⟨x⟩`
pub fn algebraic_average(band: &BandSelection) -> f64 {
    band.values().sum::<f64>() / band.len() as f64
}

/// `exp⟨ln x⟩`; exactly zero if any element vanishes.
pub fn geometric_average(band: &BandSelection) -> f64 {
    if band.values().any(|x| x == 0.0) {
        return 0.0;
    }
    (band.values().map(f64::ln).sum::<f64>() / band.len() as f64).exp()
}

/// `1/⟨1/x⟩`; exactly zero if any element vanishes.
pub fn harmonic_average(band: &BandSelection) -> f64 {
    if band.values().any(|x| x == 0.0) {
        return 0.0;
    }
    let mean_inverse = band.values().map(|x| 1.0 / x).sum::<f64>() / band.len() as f64;
    1.0 / mean_inverse
}

/// `q = ⟨⟨x⟩⟩_g / ⟨⟨x⟩⟩_a`.
pub fn sparsity(band: &BandSelection) -> Result<f64> {
    let a = algebraic_average(band);
    if !(a > 0.0) {
        return Err(Error::AllZeroBand);
    }
    Ok((geometric_average(band) / a).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragesReport {
    pub algebraic: f64,
    pub geometric: f64,
    pub harmonic: f64,
    /// Resistor-network average, filled in by the network solve.
    pub network: Option<f64>,
    pub sparsity_q: f64,
    pub zero_count: usize,
    pub element_count: usize,
}

pub fn averages(band: &BandSelection) -> AveragesReport {
    AveragesReport {
        algebraic: algebraic_average(band),
        geometric: geometric_average(band),
        harmonic: harmonic_average(band),
        network: None,
        sparsity_q: sparsity(band).unwrap_or(0.0),
        zero_count: band.zero_count(),
        element_count: band.len(),
    }
}

/// Histogram of `ln x` with markers for the band averages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogHistogram {
    /// Bin edges in `ln x`; `counts.len() + 1` entries.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Elements that are exactly zero and therefore outside every bin.
    pub zero_count: usize,
    pub algebraic: f64,
    pub geometric: f64,
    pub network: Option<f64>,
}

impl LogHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.zero_count
    }

    fn centers(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.edges.windows(2).zip(&self.counts).map(|(w, &c)| (0.5 * (w[0] + w[1]), c))
    }

    pub fn mean_log(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        self.centers().map(|(c, k)| c * k as f64).sum::<f64>() / n as f64
    }

    pub fn variance_log(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        let mean = self.mean_log();
        self.centers().map(|(c, k)| (c - mean).powi(2) * k as f64).sum::<f64>() / n as f64
    }

    /// Centre of the most populated bin, in `ln x`.
    pub fn mode_log(&self) -> f64 {
        let (best, _) =
            self.counts.iter().enumerate().fold((0, 0), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc });
        0.5 * (self.edges[best] + self.edges[best + 1])
    }
}

pub fn log_histogram(band: &BandSelection, bins: usize) -> Result<LogHistogram> {
    log_histogram_with_floor(band, bins, None)
}

/// Like [`log_histogram`], but with `zero_floor` set zeros are binned as that
/// value instead of being counted apart. Intended for plotting only.
pub fn log_histogram_with_floor(band: &BandSelection, bins: usize, zero_floor: Option<f64>) -> Result<LogHistogram> {
    if bins == 0 {
        return Err(invalid("bins", "need at least one bin"));
    }
    let floor = zero_floor.filter(|f| *f > 0.0);
    let logs: Vec<f64> =
        band.values().filter_map(|x| if x > 0.0 { Some(x.ln()) } else { floor.map(f64::ln) }).collect();
    if logs.is_empty() {
        return Err(invalid("band", "histogram needs at least one positive element"));
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for l in &logs {
        let idx = (((l - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(LogHistogram {
        edges,
        counts,
        zero_count: band.len() - logs.len(),
        algebraic: algebraic_average(band),
        geometric: geometric_average(band),
        network: None,
    })
}

/// Randomly permutes `|V_nm|²` along every diagonal of the whole matrix.
pub fn untexture(system: &PerturbedSystem, seed: u64) -> PerturbedSystem {
    untexture_levels(system, 0..system.len(), seed)
}

/// Randomly permutes `|V_nm|²` along every diagonal, restricted to the block
/// `levels × levels`. Entries outside the block are untouched.
pub fn untexture_levels(system: &PerturbedSystem, levels: Range<usize>, seed: u64) -> PerturbedSystem {
    let mut matrix = system.v_squared.clone();
    let start = levels.start;
    let len = levels.len();
    let mut diagonal = Vec::with_capacity(len);
    for offset in 1..len {
        diagonal.clear();
        diagonal.extend((0..len - offset).map(|i| matrix.get(start + i, start + i + offset)));
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, offset as u64));
        diagonal.shuffle(&mut rng);
        for (i, &x) in diagonal.iter().enumerate() {
            matrix.set(start + i, start + i + offset, x);
        }
    }
    system.with_matrix(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SymMatrix;

    fn band_of(values: &[f64]) -> BandSelection {
        let elements =
            values.iter().enumerate().map(|(i, &x)| BandElement { n: i, m: i + 1, x, omega: -1.0 }).collect();
        BandSelection::from_elements((0.0, 1.0), 1.0, elements).unwrap()
    }

    fn ladder(n: usize, f: impl FnMut(usize, usize) -> f64) -> PerturbedSystem {
        let energies = (0..n).map(|i| i as f64).collect();
        PerturbedSystem::from_parts(energies, SymMatrix::from_fn(n, f), 1.0).unwrap()
    }

    #[test]
    fn averages_of_simple_sets() {
        let c = band_of(&[2.5; 4]);
        assert_eq!(algebraic_average(&c), 2.5);
        assert!((geometric_average(&c) - 2.5).abs() < 1e-15);
        assert!((harmonic_average(&c) - 2.5).abs() < 1e-15);
        assert_eq!(sparsity(&c).unwrap(), 1.0);
        assert_eq!(algebraic_average(&band_of(&[1.0, 3.0])), 2.0);
        assert!((geometric_average(&band_of(&[1.0, 100.0])) - 10.0).abs() < 1e-13);
        assert!((harmonic_average(&band_of(&[1.0, 1.0 / 3.0])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zeros_force_vanishing_means() {
        let b = band_of(&[0.0, 1.0, 4.0]);
        assert_eq!(geometric_average(&b), 0.0);
        assert_eq!(harmonic_average(&b), 0.0);
        assert_eq!(sparsity(&b).unwrap(), 0.0);
        assert_eq!(averages(&b).zero_count, 1);
        assert_eq!(sparsity(&band_of(&[0.0, 0.0])), Err(Error::AllZeroBand));
    }

    #[test]
    fn band_selection_rules() {
        // Levels 0, 1, 2, ... with unit spacing.
        let sys = ladder(100, |_, _| 1.0);
        let band = select_band(&sys, (0.0, 99.0), 7.0).unwrap();
        assert_eq!(band.len(), (0..100).map(|n: usize| 7.min(99 - n)).sum::<usize>());
        assert!(band.elements.iter().all(|e| e.n < e.m && e.omega.abs() <= 7.0 && e.omega != 0.0));
        assert!(matches!(select_band(&sys, (0.0, 99.0), 0.5), Err(Error::EmptyBand { .. })));
        assert_eq!(select_band(&sys, (10.0, 11.0), 3.0).unwrap().len(), 1);
    }

    #[test]
    fn histogram_counts_and_single_bin() {
        let b = band_of(&[3.0; 10]);
        let h = log_histogram(&b, 5).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.total(), 10);
        let z = band_of(&[0.0, 1.0, 2.0, 0.0]);
        let h = log_histogram(&z, 3).unwrap();
        assert_eq!(h.total(), 4);
        assert_eq!(h.zero_count, 2);
        let floored = log_histogram_with_floor(&z, 3, Some(1e-30)).unwrap();
        assert_eq!(floored.zero_count, 0);
        assert_eq!(floored.counts.iter().sum::<usize>(), 4);
        assert!(log_histogram(&band_of(&[0.0]), 3).is_err());
    }

    #[test]
    fn untexture_preserves_diagonal_multisets() {
        let sys = ladder(40, |i, j| ((i * 31 + j * 17) % 23) as f64 + (i + j) as f64 * 0.01);
        let flat = untexture(&sys, 11);
        assert_eq!(flat.energies, sys.energies);
        assert!(flat.v_squared.is_symmetric());
        let mut moved = false;
        for d in 1..40 {
            let mut before: Vec<f64> = (0..40 - d).map(|i| sys.v_squared.get(i, i + d)).collect();
            let mut after: Vec<f64> = (0..40 - d).map(|i| flat.v_squared.get(i, i + d)).collect();
            moved |= before != after;
            before.sort_by(f64::total_cmp);
            after.sort_by(f64::total_cmp);
            assert_eq!(before, after);
        }
        assert!(moved);
        for i in 0..40 {
            assert_eq!(flat.v_squared.get(i, i), sys.v_squared.get(i, i));
        }
    }

    #[test]
    fn untexture_constant_is_fixed_point() {
        let sys = ladder(20, |_, _| 0.7);
        assert_eq!(untexture(&sys, 3).v_squared, sys.v_squared);
    }

    #[test]
    fn untexture_restricted_to_block() {
        let sys = ladder(30, |i, j| (i * 30 + j) as f64);
        let flat = untexture_levels(&sys, 10..20, 5);
        for i in 0..30 {
            for j in 0..30 {
                let inside = (10..20).contains(&i) && (10..20).contains(&j);
                if !inside {
                    assert_eq!(flat.v_squared.get(i, j), sys.v_squared.get(i, j));
                }
            }
        }
        let b0 = select_band_by_offset(&sys, 10..20, 4).unwrap();
        let b1 = select_band_by_offset(&flat, 10..20, 4).unwrap();
        assert_eq!(b0.len(), b1.len());
        assert_eq!(algebraic_average(&b0), algebraic_average(&b1));
    }
}
