//! Resistor network in energy space.
//!
//! Levels are nodes and Fermi-golden-rule transitions are bonds with inverse
//! resistance `g_nm = 2ϱ⁻³ |V_nm|² F̃(E_m - E_n) / (E_n - E_m)²`. The network
//! average `⟨⟨x⟩⟩` is the ratio of the two-point conductance of the physical
//! network to that of a reference network with every `|V_nm|²` set to one.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{self, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::billiard::PerturbedSystem;
use crate::error::{invalid, Error, Result};
use crate::matrixstats::{algebraic_average, select_band};

/// Exponential line shapes keep bonds out to this many cutoffs (`e^-25 ≈ 1e-11`).
pub const EXPONENTIAL_SUPPORT: f64 = 25.0;

pub const CG_RELATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveShape {
    Rectangular,
    Exponential,
}

/// Power spectrum of the wall velocity, `S̃(ω) = RMS(Ṙ)² F̃(ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriveSpec {
    pub shape: DriveShape,
    pub cutoff: f64,
    pub rms_velocity: f64,
}

impl DriveSpec {
    pub fn new(shape: DriveShape, cutoff: f64, rms_velocity: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(invalid("cutoff", format!("must be positive, got {cutoff}")));
        }
        if !(rms_velocity >= 0.0 && rms_velocity.is_finite()) {
            return Err(invalid("rms_velocity", format!("must be >= 0, got {rms_velocity}")));
        }
        Ok(Self { shape, cutoff, rms_velocity })
    }

    pub fn rectangular(cutoff: f64) -> Result<Self> {
        Self::new(DriveShape::Rectangular, cutoff, 1.0)
    }

    /// Normalized spectral function `F̃(ω)`.
    pub fn spectral_weight(&self, omega: f64) -> f64 {
        match self.shape {
            DriveShape::Rectangular => {
                if omega.abs() <= self.cutoff {
                    1.0
                } else {
                    0.0
                }
            }
            DriveShape::Exponential => (-(omega / self.cutoff).abs()).exp(),
        }
    }

    pub fn power_spectrum(&self, omega: f64) -> f64 {
        self.rms_velocity * self.rms_velocity * self.spectral_weight(omega)
    }

    /// Largest `|ω|` that carries a bond.
    pub fn support(&self) -> f64 {
        match self.shape {
            DriveShape::Rectangular => self.cutoff,
            DriveShape::Exponential => EXPONENTIAL_SUPPORT * self.cutoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bond {
    pub n: usize,
    pub m: usize,
    pub omega: f64,
    pub conductance: f64,
}

/// Nodes are indexed locally from zero. The source electrode is every node
/// within `buffer` of `source_node`, likewise for the sink; each electrode is
/// an ideal contact, so bonds inside it carry no current.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondNetwork {
    pub node_energies: Vec<f64>,
    /// System level index of local node 0.
    pub first_level: usize,
    pub bonds: Vec<Bond>,
    pub source_node: usize,
    pub sink_node: usize,
    pub buffer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Terminal {
    Source,
    Sink,
    Interior,
}

impl BondNetwork {
    pub fn new(
        node_energies: Vec<f64>,
        bonds: Vec<Bond>,
        source_node: usize,
        sink_node: usize,
        buffer: usize,
    ) -> Result<Self> {
        let n = node_energies.len();
        if source_node >= n || sink_node >= n || source_node == sink_node {
            return Err(invalid("terminals", format!("source {source_node} / sink {sink_node} invalid for {n} nodes")));
        }
        if source_node.abs_diff(sink_node) <= 2 * buffer {
            return Err(invalid("buffer", format!("electrodes of width {buffer} overlap in a network of {n} nodes")));
        }
        for b in &bonds {
            if b.n >= n || b.m >= n || b.n == b.m {
                return Err(invalid("bonds", format!("bond ({}, {}) out of range", b.n, b.m)));
            }
            if !(b.conductance >= 0.0 && b.conductance.is_finite()) {
                return Err(invalid("bonds", format!("conductance {} of ({}, {})", b.conductance, b.n, b.m)));
            }
        }
        let bonds = bonds.into_iter().filter(|b| b.conductance > 0.0).collect();
        Ok(Self { node_energies, first_level: 0, bonds, source_node, sink_node, buffer })
    }

    pub fn node_count(&self) -> usize {
        self.node_energies.len()
    }

    fn terminal(&self, node: usize) -> Terminal {
        if node.abs_diff(self.source_node) <= self.buffer {
            Terminal::Source
        } else if node.abs_diff(self.sink_node) <= self.buffer {
            Terminal::Sink
        } else {
            Terminal::Interior
        }
    }

    /// Maps nodes to contracted ids: 0 source, 1 sink, then interior nodes in order.
    fn contracted_ids(&self) -> (Vec<usize>, usize) {
        let mut next = 2;
        let ids = (0..self.node_count())
            .map(|v| match self.terminal(v) {
                Terminal::Source => 0,
                Terminal::Sink => 1,
                Terminal::Interior => {
                    next += 1;
                    next - 1
                }
            })
            .collect();
        (ids, next)
    }

    pub fn components(&self) -> Components {
        let (ids, count) = self.contracted_ids();
        let mut parent: Vec<usize> = (0..count).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for b in &self.bonds {
            let (a, c) = (find(&mut parent, ids[b.n]), find(&mut parent, ids[b.m]));
            if a != c {
                parent[a.max(c)] = a.min(c);
            }
        }
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for &id in &ids {
            *sizes.entry(find(&mut parent, id)).or_default() += 1;
        }
        let source_root = find(&mut parent, 0);
        let sink_root = find(&mut parent, 1);
        Components {
            count: sizes.len(),
            source_size: sizes[&source_root],
            sink_size: sizes[&sink_root],
            connected: source_root == sink_root,
        }
    }

    /// Writes the bond list as CSV with columns `n, m, omega, g`, using
    /// system level indices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,m,omega,g")?;
        for b in &self.bonds {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e}",
                b.n + self.first_level,
                b.m + self.first_level,
                b.omega,
                b.conductance
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Components {
    pub count: usize,
    /// Nodes connected to the source electrode (electrode nodes included).
    pub source_size: usize,
    pub sink_size: usize,
    pub connected: bool,
}

/// `⌈ω_c ϱ_E⌉` levels at each end of the window are merged into the electrodes.
pub fn electrode_buffer(drive: &DriveSpec, dos: f64) -> usize {
    (drive.cutoff * dos - 1e-9).ceil().max(0.0) as usize
}

fn assemble(
    system: &PerturbedSystem,
    drive: &DriveSpec,
    window: (f64, f64),
    weight: impl Fn(usize, usize) -> f64,
) -> Result<BondNetwork> {
    let levels = system.levels_in(window);
    if levels.len() < 2 {
        return Err(Error::EmptyNetwork);
    }
    let prefactor = 2.0 / system.dos.powi(3);
    let support = drive.support();
    let mut bonds = Vec::new();
    for n in levels.clone() {
        for m in n + 1..levels.end {
            let omega = system.energies[n] - system.energies[m];
            if -omega > support {
                break;
            }
            if omega == 0.0 {
                continue;
            }
            let spectral = drive.spectral_weight(-omega);
            let x = weight(n, m);
            if spectral > 0.0 && x > 0.0 {
                bonds.push(Bond {
                    n: n - levels.start,
                    m: m - levels.start,
                    omega,
                    conductance: prefactor * x / (omega * omega) * spectral,
                });
            }
        }
    }
    let nodes = system.energies[levels.clone()].to_vec();
    let count = nodes.len();
    let mut net =
        BondNetwork::new(nodes, bonds, 0, count - 1, electrode_buffer(drive, system.dos).min((count - 2) / 2))?;
    net.first_level = levels.start;
    Ok(net)
}

/// Network of in-window levels with the conductances above.
pub fn assemble_bonds(system: &PerturbedSystem, drive: &DriveSpec, window: (f64, f64)) -> Result<BondNetwork> {
    let net = assemble(system, drive, window, |n, m| system.v_squared.get(n, m))?;
    if net.bonds.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    Ok(net)
}

/// Same topology with every `|V_nm|²` replaced by one.
pub fn assemble_reference(system: &PerturbedSystem, drive: &DriveSpec, window: (f64, f64)) -> Result<BondNetwork> {
    let net = assemble(system, drive, window, |_, _| 1.0)?;
    if net.bonds.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    Ok(net)
}

/// Conductance between the two electrodes by successive star-mesh
/// elimination of interior nodes, in node order.
///
/// Only positive quantities are added, multiplied and divided, so bonds that
/// differ by many orders of magnitude keep full relative precision. Returns
/// exactly zero when the electrodes are disconnected.
pub fn effective_conductance(net: &BondNetwork) -> f64 {
    let (ids, count) = net.contracted_ids();
    let mut adjacency: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
    for b in &net.bonds {
        let (a, c) = (ids[b.n], ids[b.m]);
        if a == c {
            continue;
        }
        *adjacency[a].entry(c).or_default() += b.conductance;
        *adjacency[c].entry(a).or_default() += b.conductance;
    }
    let mut neighbours: Vec<(usize, f64)> = Vec::new();
    for v in 2..count {
        neighbours.clear();
        neighbours.extend(std::mem::take(&mut adjacency[v]));
        let total: f64 = neighbours.iter().map(|(_, g)| g).sum();
        for &(w, _) in &neighbours {
            adjacency[w].remove(&v);
        }
        if neighbours.len() < 2 || total == 0.0 {
            continue;
        }
        for i in 0..neighbours.len() {
            let (a, ga) = neighbours[i];
            for &(c, gc) in &neighbours[i + 1..] {
                let g = ga * gc / total;
                *adjacency[a].entry(c).or_default() += g;
                *adjacency[c].entry(a).or_default() += g;
            }
        }
    }
    adjacency[0].get(&1).copied().unwrap_or(0.0)
}

/// Resistance between the electrodes; `f64::INFINITY` when they are
/// disconnected.
pub fn two_point_resistance(net: &BondNetwork) -> Result<f64> {
    if !net.components().connected {
        return Ok(f64::INFINITY);
    }
    let g = effective_conductance(net);
    if !(g > 0.0 && g.is_finite()) {
        return Err(invalid("network", format!("effective conductance {g} on a connected network")));
    }
    Ok(1.0 / g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub resistance: f64,
    /// Node potentials for unit current from source to grounded sink.
    pub potentials: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients on the grounded Laplacian.
///
/// Independent of [`effective_conductance`]; it is the cross-check path and
/// also yields node potentials. Requires connected electrodes.
pub fn solve_cg(net: &BondNetwork, tolerance: f64, max_iterations: usize) -> Result<CgSolution> {
    if !net.components().connected {
        return Err(invalid("network", "source and sink electrodes are disconnected"));
    }
    let (ids, count) = net.contracted_ids();
    // Unknowns are every contracted node except the grounded sink (id 1).
    let unknown = |id: usize| {
        if id == 0 {
            Some(0)
        } else if id >= 2 {
            Some(id - 1)
        } else {
            None
        }
    };
    let dim = count - 1;
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(net.bonds.len());
    let mut diagonal = vec![0.0; dim];
    for b in &net.bonds {
        let (a, c) = (ids[b.n], ids[b.m]);
        if a == c {
            continue;
        }
        edges.push((a, c, b.conductance));
        if let Some(i) = unknown(a) {
            diagonal[i] += b.conductance;
        }
        if let Some(i) = unknown(c) {
            diagonal[i] += b.conductance;
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(a, c, g) in &edges {
            let xa = unknown(a).map_or(0.0, |i| x[i]);
            let xc = unknown(c).map_or(0.0, |i| x[i]);
            let current = g * (xa - xc);
            if let Some(i) = unknown(a) {
                out[i] += current;
            }
            if let Some(i) = unknown(c) {
                out[i] -= current;
            }
        }
    };
    let precondition = |r: &[f64], z: &mut [f64]| {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&diagonal) {
            *zi = if *di > 0.0 { ri / di } else { 0.0 };
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x = vec![0.0; dim];
    let mut r = vec![0.0; dim];
    r[0] = 1.0;
    let rhs_norm = 1.0;
    let mut z = vec![0.0; dim];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; dim];
    let mut residual = dot(&r, &r).sqrt() / rhs_norm;
    let mut iterations = 0;
    while residual > tolerance {
        if iterations >= max_iterations {
            return Err(Error::SolverNonConvergence { iterations, residual });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverNonConvergence { iterations, residual });
        }
        let alpha = rz / pap;
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..dim {
            p[i] = z[i] + beta * p[i];
        }
        residual = dot(&r, &r).sqrt() / rhs_norm;
        iterations += 1;
    }
    let potentials = ids.iter().map(|&id| unknown(id).map_or(0.0, |i| x[i])).collect();
    Ok(CgSolution { resistance: x[0], potentials, iterations, relative_residual: residual })
}

pub fn two_point_resistance_cg(net: &BondNetwork) -> Result<f64> {
    let max_iterations = 50 * net.node_count();
    Ok(solve_cg(net, CG_RELATIVE_TOLERANCE, max_iterations)?.resistance)
}

/// Electrodes not connected: the network average is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PercolationFailure {
    pub components: Components,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkAverage {
    /// `⟨⟨x⟩⟩ = R_ref / R`.
    pub value: f64,
    pub resistance: f64,
    pub reference_resistance: f64,
    pub node_count: usize,
    pub bond_count: usize,
    /// Bridged stretches of the spectrum that were measured in series.
    pub segments: usize,
    /// In-window levels left out because their stretch was too short.
    pub excluded_nodes: usize,
    pub percolation_failure: Option<PercolationFailure>,
}

/// Maximal runs of consecutive nodes in which every gap between neighbouring
/// nodes is spanned by at least one bond.
pub fn bridged_segments(net: &BondNetwork) -> Vec<Range<usize>> {
    let n = net.node_count();
    let mut crossing = vec![0i64; n + 1];
    for b in &net.bonds {
        let (lo, hi) = (b.n.min(b.m), b.n.max(b.m));
        crossing[lo] += 1;
        crossing[hi] -= 1;
    }
    let mut segments = Vec::new();
    let mut start = 0;
    let mut open = 0;
    for (k, &delta) in crossing[..n].iter().enumerate() {
        open += delta;
        if open == 0 {
            segments.push(start..k + 1);
            start = k + 1;
        }
    }
    segments
}

impl BondNetwork {
    /// Nodes `range` only, with electrodes at its two ends.
    pub fn restrict(&self, range: Range<usize>, buffer: usize) -> Result<Self> {
        let bonds = self
            .bonds
            .iter()
            .filter(|b| range.contains(&b.n) && range.contains(&b.m))
            .map(|b| Bond { n: b.n - range.start, m: b.m - range.start, ..*b })
            .collect();
        let count = range.len();
        let mut net = Self::new(self.node_energies[range.clone()].to_vec(), bonds, 0, count.saturating_sub(1), buffer)?;
        net.first_level = self.first_level + range.start;
        Ok(net)
    }
}

/// Network average of `|V_nm|²` over the window.
///
/// A gap in the spectrum wider than the drive support cuts the reference
/// network as well as the physical one. The bridged stretches on either side
/// are then measured separately and added in series, in both networks, so
/// the gaps drop out of the ratio. Stretches too short to hold both
/// electrodes and one interior level are skipped.
pub fn slrt_average(system: &PerturbedSystem, drive: &DriveSpec, window: (f64, f64)) -> Result<NetworkAverage> {
    let reference = assemble_reference(system, drive, window)?;
    let physical = assemble(system, drive, window, |n, m| system.v_squared.get(n, m))?;
    let count = reference.node_count();
    let full_buffer = electrode_buffer(drive, system.dos);
    let segments: Vec<Range<usize>> = bridged_segments(&reference)
        .into_iter()
        .filter(|r| r.len() == count || r.len() >= 2 * full_buffer + 3)
        .collect();
    if segments.is_empty() {
        return Err(invalid("window", "no bridged stretch of the spectrum is wide enough for the electrodes"));
    }
    let used: usize = segments.iter().map(|r| r.len()).sum();
    let mut reference_resistance = 0.0;
    let mut resistance = 0.0;
    let mut bond_count = 0;
    let mut percolation_failure = None;
    for range in &segments {
        let buffer = full_buffer.min((range.len() - 2) / 2);
        let r_ref = two_point_resistance(&reference.restrict(range.clone(), buffer)?)?;
        if !r_ref.is_finite() {
            return Err(invalid("window", "bridged reference stretch is disconnected"));
        }
        reference_resistance += r_ref;
        let sub = physical.restrict(range.clone(), buffer)?;
        bond_count += sub.bonds.len();
        let components = sub.components();
        if !components.connected {
            percolation_failure.get_or_insert(PercolationFailure { components });
            resistance = f64::INFINITY;
        } else if resistance.is_finite() {
            resistance += two_point_resistance(&sub)?;
        }
    }
    Ok(NetworkAverage {
        value: if percolation_failure.is_some() { 0.0 } else { reference_resistance / resistance },
        resistance,
        reference_resistance,
        node_count: used,
        bond_count,
        segments: segments.len(),
        excluded_nodes: count - used,
        percolation_failure,
    })
}

/// `G_SLRT = π ϱ_E ⟨⟨|V_nm|²⟩⟩`.
pub fn g_slrt(system: &PerturbedSystem, drive: &DriveSpec, window: (f64, f64)) -> Result<f64> {
    Ok(PI * system.dos * slrt_average(system, drive, window)?.value)
}

/// Kubo result `G_LRT = π ϱ_E ⟨⟨|V_nm|²⟩⟩_a` over the band `|ω| <= ω_c`.
pub fn g_lrt_kubo(system: &PerturbedSystem, drive: &DriveSpec, window: (f64, f64)) -> Result<f64> {
    let band = select_band(system, window, drive.cutoff)?;
    Ok(PI * system.dos * algebraic_average(&band))
}
