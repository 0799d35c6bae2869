use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
box.length_x = 12.0
box.length_y = 9.31
basis.states = 300
sweep.u = [1e-1, 0.0, 1e-2]
sweep.sigma = [0.5, 0.0]
sweep.seeds = [2, 1]
output.emit = ["sweep", "averages", "histogram", "network_dump", "rmt_twin", "vrh"]
"#;

fn slrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slrt")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) {
    let out = slrt(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut all = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                all.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    all.sort();
    all
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn sweep_outputs_are_byte_identical_across_runs_and_job_counts() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.toml", SMALL);
    let config = config.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for cmd in ["sweep", "spectrum", "histogram", "report"] {
        run_ok(&[cmd, "--config", config, "--out", a.to_str().unwrap(), "--jobs", "1"]);
        run_ok(&[cmd, "--config", config, "--out", b.to_str().unwrap(), "--jobs", "3"]);
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.len() > 20);
    assert_eq!(fa, fb);
}

#[test]
fn sweep_rows_are_sorted_and_formatted() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.toml", SMALL);
    run_ok(&["sweep", "--config", config.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    let (header, rows) = read_csv(&tmp.path().join("sweep.csv"));
    assert_eq!(
        header,
        [
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
            "status"
        ]
    );
    assert_eq!(rows.len(), 12);
    let keys: Vec<(f64, f64, u64)> =
        rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap())).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    assert_eq!(keys, sorted);
    for row in &rows {
        // 17 significant digits in scientific notation.
        let mantissa = row[3].split('e').next().unwrap();
        assert_eq!(mantissa.len(), 18, "{}", row[3]);
        let (u, q, alg, slrt): (f64, f64, f64, f64) =
            (row[0].parse().unwrap(), row[9].parse().unwrap(), row[3].parse().unwrap(), row[6].parse().unwrap());
        if u == 0.0 {
            assert_eq!(q, 0.0);
        } else {
            assert_eq!(row[13], "ok");
            assert!(slrt <= alg * (1.0 + 1e-12));
        }
    }
    // Weak deformations only: u = 0.1 on this small box is no longer weak.
    let alg: Vec<f64> = rows
        .iter()
        .filter(|r| r[0].parse::<f64>().unwrap() <= 1e-2 && r[1].parse::<f64>().unwrap() == 0.0 && r[2] == "1")
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(alg.len(), 2);
    let mean = alg.iter().sum::<f64>() / alg.len() as f64;
    assert!(alg.iter().all(|a| (a - mean).abs() / mean < 0.1), "{alg:?}");
}

#[test]
fn unperturbed_square_spectrum_starts_at_ground_state() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.toml", "sweep.u = [0.0]\n");
    run_ok(&[
        "spectrum",
        "--preset",
        "as1",
        "--config",
        config.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let (header, rows) = read_csv(&tmp.path().join("spectrum_u0e0_sigma0e0_seed1.csv"));
    assert_eq!(header, ["index", "energy", "nx", "ny"]);
    let first: f64 = rows[0][1].parse().unwrap();
    let exact = std::f64::consts::PI.powi(2) / 1600.0;
    assert!((first - exact).abs() <= 1e-15 * exact, "{first} vs {exact}");
    assert_eq!((rows[0][2].as_str(), rows[0][3].as_str()), ("1", "1"));
    // The retained basis: 2000 states plus any modes degenerate with the last.
    assert!(rows.len() >= 2000 && rows.len() < 2010, "{}", rows.len());
}

#[test]
fn histogram_markers_and_counts() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL
        .replace("sweep.u = [1e-1, 0.0, 1e-2]", "sweep.u = [1e-4, 1e-2]")
        .replace("sweep.seeds = [2, 1]", "sweep.seeds = [1]");
    let config = write_config(
        tmp.path(),
        "c.toml",
        &format!("{text}sweep.sigma = [0.0]\n").replace("sweep.sigma = [0.5, 0.0]\n", ""),
    );
    run_ok(&["histogram", "--config", config.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    let (header, rows) = read_csv(&tmp.path().join("histograms/markers.csv"));
    assert_eq!(header, ["u", "sigma", "seed", "alg", "geo", "slrt", "slrt_untextured", "elements", "zeros"]);
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let v: Vec<f64> = row[3..7].iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[2] && v[2] <= v[0], "{row:?}");
        let tag = format!("u{:e}_sigma0e0_seed1", row[0].parse::<f64>().unwrap());
        let (_, bins) = read_csv(&tmp.path().join(format!("histograms/hist_{tag}.csv")));
        let counted: usize = bins.iter().map(|b| b[2].parse::<usize>().unwrap()).sum();
        let zeros: usize = row[8].parse().unwrap();
        assert_eq!(counted + zeros, row[7].parse::<usize>().unwrap());
    }
}

#[test]
fn report_lists_every_file_and_hashes_the_physics() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), "c.toml", SMALL);
    run_ok(&["sweep", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    run_ok(&["report", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let listed: Vec<&str> = report["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    let on_disk: Vec<String> = files(&out).into_iter().map(|f| f.0).filter(|p| p != "report.json").collect();
    assert_eq!(listed, on_disk);
    assert_eq!(report["seeds"], serde_json::json!([1, 2]));
    assert!(report["versions"]["slrt_core"].is_string());

    let exp = &report["experiment"];
    let heating = exp["heating_rate_si"].as_f64().unwrap();
    let kelvin = exp["heating_rate_kelvin_per_s"].as_f64().unwrap();
    assert!((heating / (kelvin * 1.380_649e-23) - 1.0).abs() < 1e-12);

    let hash = report["config_hash"].as_str().unwrap().to_string();
    let changed = write_config(tmp.path(), "d.toml", &SMALL.replace("12.0", "12.5"));
    let other = tmp.path().join("other");
    run_ok(&["report", "--config", changed.to_str().unwrap(), "--out", other.to_str().unwrap()]);
    let report2: serde_json::Value = serde_json::from_slice(&fs::read(other.join("report.json")).unwrap()).unwrap();
    assert_ne!(report2["config_hash"].as_str().unwrap(), hash);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", "box.length_x = 12.0\nbox.length_y = \"wide\"\n");
    let out = slrt(&["sweep", "--config", bad.to_str().unwrap(), "--out", dir]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(slrt(&["sweep", "--config", "/does/not/exist.toml", "--out", dir]).status.code(), Some(2));

    // A drive cutoff far below the level spacing leaves the band empty.
    let empty = write_config(
        tmp.path(),
        "empty.toml",
        "box.length_x = 12.0\nbox.length_y = 9.31\nbasis.states = 300\ndrive.cutoff_spacings = 1e-9\nsweep.u = [1e-2]\n",
    );
    let out = slrt(&["histogram", "--config", empty.to_str().unwrap(), "--out", dir]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out = slrt(&["sweep", "--config", empty.to_str().unwrap(), "--out", dir]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = read_csv(&tmp.path().join("sweep.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0][13].starts_with("failed:"), "{}", rows[0][13]);
}
