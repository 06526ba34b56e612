use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use tptkit::io::{read_field, read_trajectory_binary};
use tptkit_cli::{ExperimentConfig, Pipeline};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tptkit"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

/// A short double-well experiment; `extra` is appended verbatim.
fn small_config(extra: &str) -> String {
    format!(
        r#"
[model]
family = "doublewell1d"
beta = 3.0

[regions]
a = "left"
b = "right"

[[region]]
name = "left"
shape = "interval"
lo = -1.1
hi = -0.9

[[region]]
name = "right"
shape = "interval"
lo = 0.9
hi = 1.1

[grid]
box = [[-2.5, 2.5]]
resolution = [501]
histogram = [101]

[simulate]
dt = 1e-3
steps = 400_000
seed = 11
n_streams = 4
record_trajectory = true

[tpp]
dt_max = 1e-3
n_paths = 200
record_paths = 2
{extra}
"#
    )
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("experiment.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn out_arg(dir: &TempDir, sub: &str) -> PathBuf {
    dir.path().join(sub)
}

#[test]
fn brownian_bundled_config_passes_bessel_row() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "out");
    let cfg = bundled("brownian1d.cfg");
    let o = run(&["report", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    let row = r["rows"].as_array().unwrap().iter().find(|x| x["name"] == "tpp_mean_hitting_time").unwrap();
    assert_eq!(row["pass"], true);
    // Bessel-3 from 0: E[hitting time of 1] = 1/3
    let analytic = row["analytic"].as_f64().unwrap();
    assert!((analytic - 1.0 / 3.0).abs() < 1e-3, "{analytic}");
}

#[test]
fn doublewell_bundled_config_has_all_identity_rows() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(&tmp, "out");
    let cfg = bundled("doublewell1d.cfg");
    let o = run(&["all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    let rows: Vec<&str> = r["rows"].as_array().unwrap().iter().map(|x| x["name"].as_str().unwrap()).collect();
    for name in ["nu_R", "T_AB", "T_BA", "C_AB", "C_BA"] {
        assert!(rows.contains(&name), "missing row {name}");
    }
    let ids: Vec<&str> = r["identities"].as_array().unwrap().iter().map(|x| x["name"].as_str().unwrap()).collect();
    for name in [
        "nu_R = nu",
        "eta_A(dA) = eta_B(dB)",
        "1/nu_R = T_AB + T_BA",
        "rho_R = rho q q~ (L1)",
        "empirical vs analytic eta_A^- (angle moments)",
        "empirical vs analytic eta_B^+ (angle moments)",
    ] {
        assert!(ids.contains(&name), "missing identity {name}");
    }
    assert_eq!(r["all_pass"], true);
    for f in ["fields/q.field", "fields/current.field", "measures.csv", "quadratures.json", "tpp_ensemble.csv"] {
        assert!(out.join(f).exists(), "{f} not written");
    }
}

#[test]
fn overlapping_regions_rejected_before_execution() {
    let tmp = TempDir::new().unwrap();
    let text = small_config("").replace("lo = 0.9\nhi = 1.1", "lo = -1.0\nhi = 1.1");
    let cfg = write_config(&tmp, &text);
    let out = out_arg(&tmp, "out");
    let o = run(&["all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("closures not disjoint"), "{}", stderr(&o));
    assert!(!out.exists(), "nothing may be written for a rejected config");
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let cases = [
        small_config("").replace("[simulate]", "[simulate]\nbogus = 1"),
        small_config("").replace("a = \"left\"", "a = \"nowhere\""),
        small_config("[output]\nfields = [\"q\", \"psi\"]"),
        small_config("").replace("family = \"doublewell1d\"", "family = \"triplewell\""),
        small_config("").replace("beta = 3.0", "beta = -1.0"),
        "[model\nfamily = 1".to_string(),
    ];
    for text in cases {
        let tmp = TempDir::new().unwrap();
        let cfg = write_config(&tmp, &text);
        let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}\n{}", stderr(&o));
    }
    let o = run(&["solve", "--config", "/nonexistent/file.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identity_failure_exits_with_code_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, &small_config("[analyze.tolerances]\nrate = 1e-12"));
    let out = out_arg(&tmp, "out");
    let o = run(&["report", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["all_pass"], false);
    let row = r["rows"].as_array().unwrap().iter().find(|x| x["name"] == "nu_R").unwrap();
    assert_eq!(row["pass"], false);
}

#[test]
fn numerical_failure_exits_with_code_three() {
    let tmp = TempDir::new().unwrap();
    let text = small_config("").replace("n_paths = 200", "n_paths = 200\nmax_steps = 10");
    let cfg = write_config(&tmp, &text);
    let o = run(&["tpp", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage tpp"), "{}", stderr(&o));
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, &small_config(""));
    let cfg = cfg.to_str().unwrap();
    let runs: Vec<_> = [("a", "1"), ("b", "1"), ("c", "4")]
        .iter()
        .map(|(sub, threads)| {
            let out = out_arg(&tmp, sub);
            let o = run(&["all", "--config", cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
            assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
            tree(&out)
        })
        .collect();
    assert!(runs[0].len() > 10);
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2], "thread count changed the output");

    let out = out_arg(&tmp, "d");
    run(&["report", "--config", cfg, "--out", out.to_str().unwrap(), "--seed", "12"]);
    let a = fs::read(out_arg(&tmp, "a").join("report.json")).unwrap();
    assert_ne!(a, fs::read(out.join("report.json")).unwrap());
}

#[test]
fn seed_flag_is_recorded_in_provenance() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, &small_config(""));
    let out = out_arg(&tmp, "out");
    run(&["report", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "99"]);
    let r = report(&out);
    assert_eq!(r["provenance"]["seeds"]["simulate"], 99);
    assert_eq!(r["schema_version"], 1);
    let hash = r["provenance"]["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
}

#[test]
fn binary_trajectory_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, &small_config("").replace("steps = 400_000", "steps = 5_000"));
    let out = out_arg(&tmp, "out");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "binary"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!out.join("trajectory.csv").exists());
    let (t, hash) = read_trajectory_binary(fs::File::open(out.join("trajectory.bin")).unwrap()).unwrap();
    assert_eq!(t.states.len(), 5_001);
    assert_eq!((t.seed, t.stream_id, t.dt), (11, 0, 1e-3));
    assert_eq!(hash.len(), 64);
    assert_eq!(t.states[0], [0.0 - 1.0, 0.0]);
}

#[test]
fn solve_writes_readable_fields() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, &small_config("[output]\nfields = [\"q\", \"rho\", \"current\"]"));
    let out = out_arg(&tmp, "out");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let q = read_field(std::io::BufReader::new(fs::File::open(out.join("fields/q.field")).unwrap())).unwrap();
    assert_eq!(q.name, "q");
    assert_eq!(q.len(), 501);
    // symmetric wells: q(0) = 1/2
    assert!((q.values[250] - 0.5).abs() < 1e-9);
    let j = read_field(std::io::BufReader::new(fs::File::open(out.join("fields/current.field")).unwrap())).unwrap();
    assert_eq!((j.dim, j.components), (1, 1));
    assert!(!out.join("report.json").exists(), "solve writes fields only");
}

#[test]
fn library_pipeline_matches_binary_report() {
    let tmp = TempDir::new().unwrap();
    let text = small_config("");
    let cfg = write_config(&tmp, &text);
    let out = out_arg(&tmp, "out");
    run(&["report", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let config = ExperimentConfig::parse(&text).unwrap();
    let mut p = Pipeline::new(config, text, None, Some(out.clone()), None).unwrap();
    let rep = p.report().unwrap();
    assert_eq!(rep.to_json(), fs::read_to_string(out.join("report.json")).unwrap());
    for row in &rep.rows {
        assert_eq!(row.pass(), (row.empirical - row.analytic).abs() <= row.allowed());
    }
}

#[test]
fn bundled_configs_validate() {
    for name in ["brownian1d.cfg", "doublewell1d.cfg", "doublewell2d.cfg"] {
        let (config, _) = ExperimentConfig::load(&bundled(name)).unwrap();
        let r = config.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!r.grid.is_empty());
    }
}
