#![allow(dead_code)]

use faer::{Mat, Side};
use rand::Rng;
use slrt_core::network::{Bond, BondNetwork};

/// Two-point resistance from the Moore-Penrose pseudo-inverse of the full
/// Laplacian, after merging each electrode into a single node.
pub fn dense_resistance(net: &BondNetwork) -> f64 {
    let n = net.node_count();
    let side = |v: usize| {
        if v.abs_diff(net.source_node) <= net.buffer {
            0
        } else if v.abs_diff(net.sink_node) <= net.buffer {
            1
        } else {
            2
        }
    };
    let mut next = 2;
    let ids: Vec<usize> = (0..n)
        .map(|v| match side(v) {
            0 => 0,
            1 => 1,
            _ => {
                next += 1;
                next - 1
            }
        })
        .collect();
    let mut lap = Mat::<f64>::zeros(next, next);
    for b in &net.bonds {
        let (a, c) = (ids[b.n], ids[b.m]);
        if a == c {
            continue;
        }
        lap[(a, a)] += b.conductance;
        lap[(c, c)] += b.conductance;
        lap[(a, c)] -= b.conductance;
        lap[(c, a)] -= b.conductance;
    }
    let eig = lap.self_adjoint_eigen(Side::Lower).expect("dense eigendecomposition");
    let values = eig.S().column_vector();
    let vectors = eig.U();
    let largest = (0..next).map(|i| values[i].abs()).fold(0.0, f64::max);
    let mut r = 0.0;
    for k in 0..next {
        if values[k] > 1e-12 * largest {
            let proj = vectors[(0, k)] - vectors[(1, k)];
            r += proj * proj / values[k];
        }
    }
    r
}

/// Connected random graph: a random spanning tree plus extra bonds, with
/// conductances log-uniform over six decades.
pub fn random_connected_network<R: Rng>(rng: &mut R, nodes: usize, buffer: usize) -> BondNetwork {
    let mut bonds = Vec::new();
    let g = |rng: &mut R| 10f64.powf(rng.gen_range(-3.0..3.0));
    for v in 1..nodes {
        let parent = rng.gen_range(0..v);
        bonds.push(Bond { n: parent, m: v, omega: -1.0, conductance: g(rng) });
    }
    let extra = rng.gen_range(0..=nodes * 2);
    for _ in 0..extra {
        let a = rng.gen_range(0..nodes);
        let b = rng.gen_range(0..nodes);
        if a != b {
            bonds.push(Bond { n: a.min(b), m: a.max(b), omega: -1.0, conductance: g(rng) });
        }
    }
    let energies = (0..nodes).map(|i| i as f64).collect();
    BondNetwork::new(energies, bonds, 0, nodes - 1, buffer).expect("valid random network")
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}
