//! The four subcommands. Results are computed in parallel and written by a
//! single collector in `(u, σ, seed)` order.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use slrt_core::billiard::{build_perturbed_system, PerturbedSystem};
use slrt_core::matrixstats::{averages, log_histogram, select_band, AveragesReport, LogHistogram};
use slrt_core::network::{assemble_bonds, slrt_average, BondNetwork, DriveShape};
use slrt_core::pipeline::{evaluate_system, untextured, PointResult, SweepPoint};
use slrt_core::rmt::match_moments;
use slrt_core::vrh::{
    analytic_estimates, experiment_prediction, hopping_alpha, vrh_exponential, vrh_ratio, vrh_x_omega,
};

use crate::config::{Emit, RunConfig};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// File-name tag of a sweep point.
fn tag(p: &SweepPoint) -> String {
    format!("u{:e}_sigma{:e}_seed{}", p.u, p.sigma, p.seed)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn build(config: &RunConfig, point: &SweepPoint) -> slrt_core::Result<PerturbedSystem> {
    build_perturbed_system(&config.setup.bx, &config.bump(point)?, &config.setup.basis)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().context("cannot start worker pool")
}

/// Levels of every sweep point: index, energy and dominant box mode.
pub fn spectrum(config: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<Vec<PathBuf>> {
    let systems: Vec<slrt_core::Result<PerturbedSystem>> =
        pool(jobs)?.install(|| config.points.par_iter().map(|p| build(config, p)).collect());
    let mut written = Vec::new();
    for (point, system) in config.points.iter().zip(systems) {
        let system = system.with_context(|| format!("spectrum at {}", tag(point)))?;
        let path = out.join(format!("spectrum_{}.csv", tag(point)));
        let mut w = csv_writer(&path)?;
        w.write_record(["index", "energy", "nx", "ny"])?;
        for (i, (e, mode)) in system.energies.iter().zip(&system.dominant_modes).enumerate() {
            w.write_record([i.to_string(), num(*e), mode.nx.to_string(), mode.ny.to_string()])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

struct PointOutputs {
    result: PointResult,
    averages: Option<AveragesReport>,
    /// `(μ, σ²)` of the matched log-normal twin.
    twin: Option<(f64, f64)>,
    vrh: Option<VrhRow>,
    histogram: Option<LogHistogram>,
    bonds: Option<BondNetwork>,
}

struct VrhRow {
    alpha: f64,
    x_omega: f64,
    ratio: f64,
}

fn sweep_point(config: &RunConfig, point: &SweepPoint) -> PointOutputs {
    let setup = &config.setup;
    let system = match build(config, point) {
        Ok(s) => s,
        Err(e) => {
            let result = PointResult::failed(point, format!("failed: {e}"));
            return PointOutputs { result, averages: None, twin: None, vrh: None, histogram: None, bonds: None };
        }
    };
    let mut outputs = PointOutputs {
        result: evaluate_system(setup, point, &system),
        averages: None,
        twin: None,
        vrh: None,
        histogram: None,
        bonds: None,
    };
    if let Ok(band) = select_band(&system, setup.window, setup.drive.cutoff) {
        let report = averages(&band);
        outputs.twin = match_moments(report.algebraic, report.geometric).ok();
        let q = report.sparsity_q;
        let alpha = hopping_alpha(system.dos, setup.drive.cutoff);
        if q > 0.0 {
            let ratio = match setup.drive.shape {
                DriveShape::Rectangular => vrh_ratio(q, alpha),
                DriveShape::Exponential => vrh_exponential(q, alpha, &setup.drive),
            };
            if let (Ok(ratio), Ok(x_omega)) = (ratio, vrh_x_omega(q, alpha, report.geometric)) {
                outputs.vrh = Some(VrhRow { alpha, x_omega, ratio });
            }
        }
        if config.emit.contains(&Emit::Histogram) {
            outputs.histogram = log_histogram(&band, config.bins).ok();
        }
        outputs.averages = Some(report);
    }
    if config.emit.contains(&Emit::NetworkDump) {
        outputs.bonds = assemble_bonds(&system, &setup.drive, setup.window).ok();
    }
    outputs
}

pub const SWEEP_COLUMNS: [&str; 14] = [
    "u",
    "sigma",
    "seed",
    "alg",
    "geo",
    "harm",
    "slrt",
    "slrt_untextured",
    "slrt_rmt_twin",
    "q",
    "vrh_ratio",
    "g_lrt",
    "g_slrt",
    "status",
];

fn point_keys(r: &PointResult) -> [String; 3] {
    [num(r.u), num(r.sigma), r.seed.to_string()]
}

/// Every sweep point; failures become status rows.
pub fn sweep(config: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<Vec<PathBuf>> {
    let results: Vec<PointOutputs> =
        pool(jobs)?.install(|| config.points.par_iter().map(|p| sweep_point(config, p)).collect());
    let mut written = Vec::new();

    let path = out.join("sweep.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(SWEEP_COLUMNS)?;
    for o in &results {
        let r = &o.result;
        let values =
            [r.alg, r.geo, r.harm, r.slrt, r.slrt_untextured, r.slrt_rmt_twin, r.q, r.vrh_ratio, r.g_lrt, r.g_slrt];
        let mut row: Vec<String> = point_keys(r).into();
        row.extend(values.iter().map(|&v| num(v)));
        row.push(r.status.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    written.push(path);

    if config.emit.contains(&Emit::Averages) {
        let path = out.join("averages.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["u", "sigma", "seed", "elements", "zeros", "alg", "geo", "harm", "q"])?;
        for o in &results {
            if let Some(a) = &o.averages {
                let mut row: Vec<String> = point_keys(&o.result).into();
                row.extend([a.element_count.to_string(), a.zero_count.to_string()]);
                row.extend([a.algebraic, a.geometric, a.harmonic, a.sparsity_q].map(num));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    if config.emit.contains(&Emit::RmtTwin) {
        let path = out.join("rmt_twin.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["u", "sigma", "seed", "mu", "sigma2", "slrt_rmt_twin", "slrt_untextured"])?;
        for o in &results {
            if let Some((mu, sigma2)) = o.twin {
                let mut row: Vec<String> = point_keys(&o.result).into();
                row.extend([mu, sigma2, o.result.slrt_rmt_twin, o.result.slrt_untextured].map(num));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    if config.emit.contains(&Emit::Vrh) {
        let path = out.join("vrh.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["u", "sigma", "seed", "q", "alpha", "x_omega", "ratio", "measured_ratio"])?;
        for o in &results {
            if let Some(v) = &o.vrh {
                let r = &o.result;
                let mut row: Vec<String> = point_keys(r).into();
                row.extend([r.q, v.alpha, v.x_omega, v.ratio, r.slrt / r.alg].map(num));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    if config.emit.contains(&Emit::Histogram) {
        let dir = out.join("histograms");
        fs::create_dir_all(&dir)?;
        for (point, o) in config.points.iter().zip(&results) {
            if let Some(h) = &o.histogram {
                let path = dir.join(format!("hist_{}.csv", tag(point)));
                write_histogram(&path, h)?;
                written.push(path);
            }
        }
    }

    if config.emit.contains(&Emit::NetworkDump) {
        let dir = out.join("networks");
        fs::create_dir_all(&dir)?;
        for (point, o) in config.points.iter().zip(&results) {
            if let Some(net) = &o.bonds {
                let path = dir.join(format!("bonds_{}.csv", tag(point)));
                let mut file = BufWriter::new(File::create(&path)?);
                net.write_csv(&mut file)?;
                file.flush()?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

fn write_histogram(path: &Path, h: &LogHistogram) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["ln_lo", "ln_hi", "count"])?;
    for (edge, count) in h.edges.windows(2).zip(&h.counts) {
        w.write_record([num(edge[0]), num(edge[1]), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Log-histogram of the band at every point, with a marker table.
pub fn histogram(config: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<Vec<PathBuf>> {
    let setup = &config.setup;
    let compute = |point: &SweepPoint| -> slrt_core::Result<(LogHistogram, [f64; 4])> {
        let system = build(config, point)?;
        let band = select_band(&system, setup.window, setup.drive.cutoff)?;
        let hist = log_histogram(&band, config.bins)?;
        let slrt = slrt_average(&system, &setup.drive, setup.window)?.value;
        let flat = slrt_average(&untextured(setup, point, &system), &setup.drive, setup.window)?.value;
        Ok((hist.clone(), [hist.algebraic, hist.geometric, slrt, flat]))
    };
    let results: Vec<_> = pool(jobs)?.install(|| config.points.par_iter().map(compute).collect());
    let dir = out.join("histograms");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let markers_path = dir.join("markers.csv");
    let mut markers = csv_writer(&markers_path)?;
    markers.write_record(["u", "sigma", "seed", "alg", "geo", "slrt", "slrt_untextured", "elements", "zeros"])?;
    for (point, result) in config.points.iter().zip(results) {
        let (hist, values) = result.with_context(|| format!("histogram at {}", tag(point)))?;
        let path = dir.join(format!("hist_{}.csv", tag(point)));
        write_histogram(&path, &hist)?;
        written.push(path);
        let mut row = vec![num(point.u), num(point.sigma), point.seed.to_string()];
        row.extend(values.map(num));
        row.extend([hist.total().to_string(), hist.zero_count.to_string()]);
        markers.write_record(&row)?;
    }
    markers.flush()?;
    written.push(markers_path);
    Ok(written)
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Versions {
    slrt_cli: &'static str,
    slrt_core: &'static str,
}

#[derive(Serialize)]
struct Report<'a> {
    config_hash: String,
    config: &'a RunConfig,
    seeds: Vec<u64>,
    versions: Versions,
    dos: f64,
    alpha: f64,
    reference_energy: f64,
    analytic: Vec<serde_json::Value>,
    experiment: slrt_core::vrh::ExperimentReport,
    files: Vec<FileEntry>,
}

fn collect_files(root: &Path, dir: &Path, skip: &Path, files: &mut Vec<FileEntry>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(root, &path, skip, files)?;
        } else if path != skip {
            let data = fs::read(&path)?;
            files.push(FileEntry {
                path: path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/"),
                bytes: data.len() as u64,
                sha256: hex::encode(Sha256::digest(&data)),
            });
        }
    }
    Ok(())
}

/// JSON summary of the run directory: provenance, closed-form estimates, the
/// experiment prediction and a checksum for every emitted file.
pub fn report(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let setup = &config.setup;
    let mut analytic = Vec::new();
    for point in &config.points {
        let estimates = analytic_estimates(&setup.bx, &config.bump(point)?, setup.reference_energy())?;
        analytic.push(
            serde_json::json!({ "u": point.u, "sigma": point.sigma, "seed": point.seed, "estimates": estimates }),
        );
    }
    let experiment = experiment_prediction(&config.experiment)?;
    let path = out.join("report.json");
    let mut files = Vec::new();
    collect_files(out, out, &path, &mut files)?;
    let mut seeds: Vec<u64> = config.points.iter().map(|p| p.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let report = Report {
        config_hash: config.hash(),
        config,
        seeds,
        versions: Versions { slrt_cli: env!("CARGO_PKG_VERSION"), slrt_core: slrt_core::VERSION },
        dos: setup.dos(),
        alpha: setup.alpha(),
        reference_energy: setup.reference_energy(),
        analytic,
        experiment,
        files,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}
