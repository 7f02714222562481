use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use colorpa::experiments::campaign::{write_csv, ResultRow};
use colorpa::experiments::fit::{synthetic_points, FitParams};
use colorpa::experiments::Metadata;

fn colorpa(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colorpa"))
        .args(args)
        .env("COLORPA_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("colorpa-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// CSV text with the walltime column blanked.
fn without_walltime(text: &str) -> String {
    text.lines()
        .map(|l| if l.starts_with('#') { l.to_string() } else { l.rsplit_once(',').map(|(a, _)| a.to_string()).unwrap() })
        .collect::<Vec<_>>()
        .join("\n")
}

const SMALL: [&str; 14] = [
    "simulate", "--model", "bitflip", "--d", "5,7", "--p", "0.10,0.108,0.116", "--instances", "40", "--replicas", "60",
    "--steps", "10", "--seed",
];

#[test]
fn simulate_writes_one_row_per_grid_point() {
    let dir = scratch("rows");
    let out = dir.join("rows.csv");
    let mut args = SMALL.to_vec();
    args.extend(["1", "--sweeps", "2", "--out", path_str(&out)]);
    let run = colorpa(&args, &dir);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "model,d,p,instances,failures,p_L,stderr,R,N_T,N_S,seed,walltime_s");
    assert_eq!(data.len(), 7);
    assert!(text.contains("# config_hash: "));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(stdout.lines().count(), 7);
}

#[test]
fn repeated_runs_match_except_walltime() {
    let dir = scratch("determinism");
    let texts: Vec<String> = [("a.csv", "1"), ("b.csv", "2")]
        .iter()
        .map(|(name, workers)| {
            let out = dir.join(name);
            let mut args = SMALL.to_vec();
            args.extend(["3", "--sweeps", "2", "--workers", workers, "--out", path_str(&out)]);
            assert!(colorpa(&args, &dir).status.success());
            std::fs::read_to_string(&out).unwrap()
        })
        .collect();
    assert_eq!(without_walltime(&texts[0]), without_walltime(&texts[1]));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = scratch("config");
    let conf = dir.join("run.conf");
    std::fs::write(&conf, "model = depolarizing\nd = 3\np = 0.1, 0.15\ninstances = 30\nreplicas = 40\nsteps = 5\nsweeps = 1\n").unwrap();
    let run = colorpa(&["simulate", "--config", path_str(&conf), "--instances", "20"], &dir);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(dir.join("simulate.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("depolarizing,3,")).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with("depolarizing,3,0.1") && r.contains(",20,")));
    std::fs::write(&conf, "replica = 40\n").unwrap();
    assert_eq!(colorpa(&["simulate", "--config", path_str(&conf), "--d", "3", "--p", "0.1"], &dir).status.code(), Some(2));
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = scratch("usage");
    for args in [
        vec!["simulate", "--d", "5", "--p", "1.5"],
        vec!["simulate", "--d", "4", "--p", "0.1"],
        vec!["simulate", "--d", "5", "--p", "0.1", "--model", "erasure"],
        vec!["simulate", "--d", "5", "--p", "0.1", "--decoder", "mwpm"],
        vec!["simulate", "--d", "5", "--p", "0.1", "--replicas", "0"],
        vec!["simulate", "--p", "0.1"],
        vec!["oracle-check", "--d", "15"],
    ] {
        let run = colorpa(&args, &dir);
        assert_eq!(run.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&run.stderr));
    }
}

fn synthetic_csv(dir: &Path, distances: &[usize]) -> PathBuf {
    let truth = FitParams { a: 0.155, b: 0.709, c: None, nu: 1.41, p_th: 0.1081 };
    let rates: Vec<f64> = (0..9).map(|k| 0.100 + 0.002 * k as f64).collect();
    let rows: Vec<ResultRow> = synthetic_points(&truth, distances, &rates, 0.003)
        .into_iter()
        .map(|pt| ResultRow {
            model: "bitflip".into(),
            d: pt.d,
            p: pt.p,
            instances: 1000,
            failures: 0,
            p_l: pt.p_l,
            stderr: pt.stderr,
            replicas: 300,
            steps: 60,
            sweeps: 30,
            seed: 0,
            walltime_s: 0.0,
        })
        .collect();
    let path = dir.join(format!("synthetic{}.csv", distances.len()));
    let meta = Metadata::new(&serde_json::json!({ "synthetic": true }), serde_json::json!({}));
    write_csv(std::fs::File::create(&path).unwrap(), &meta, &rows).unwrap();
    path
}

#[test]
fn fit_recovers_synthetic_parameters() {
    let dir = scratch("fit");
    let input = synthetic_csv(&dir, &[5, 7, 9, 11]);
    let out = dir.join("fit.json");
    let run = colorpa(&["fit", "--input", path_str(&input), "--window", "none", "--out", path_str(&out)], &dir);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let fit = &doc["fit"];
    for (key, truth) in [("p_th", 0.1081), ("nu", 1.41), ("a", 0.155), ("b", 0.709)] {
        assert!((fit[key].as_f64().unwrap() - truth).abs() < 1e-6, "{key}: {}", fit[key]);
    }
    assert!(doc["metadata"]["config_hash"].is_string());
    assert!(doc["source"]["config_hash"].is_string());

    let quadratic = colorpa(&["fit", "--input", path_str(&input), "--order", "quadratic", "--out", path_str(&out)], &dir);
    assert!(quadratic.status.success());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(doc["fit"]["c"].is_f64());
}

#[test]
fn fit_needs_two_distances() {
    let dir = scratch("fit-one");
    let input = synthetic_csv(&dir, &[7]);
    let run = colorpa(&["fit", "--input", path_str(&input)], &dir);
    assert_eq!(run.status.code(), Some(2));
}

const STUDY: [&str; 17] = [
    "resource-study", "--d", "5", "--p", "0.108", "--steps", "8", "--budgets", "8x2,30x4", "--instances", "200",
    "--variance-instances", "10", "--repeats", "6", "--bins", "10",
];

#[test]
fn resource_study_json_schema() {
    let dir = scratch("study");
    let out = dir.join("study.json");
    let mut args = STUDY.to_vec();
    args.extend(["--out", path_str(&out)]);
    let run = colorpa(&args, &dir);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["metadata", "model", "d", "p", "instances", "reference", "p_l_reference", "hist_success", "hist_fail", "budgets", "walltime_s"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert!(doc["metadata"]["config_hash"].is_string());
    let counts = |h: &serde_json::Value| h["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>();
    assert_eq!(counts(&doc["hist_success"]) + counts(&doc["hist_fail"]), 200);
    assert_eq!(doc["hist_success"]["edges"].as_array().unwrap().len(), 11);
    let budgets = doc["budgets"].as_array().unwrap();
    assert_eq!(budgets.len(), 2);
    for b in budgets {
        for key in [
            "replicas", "sweeps", "steps", "var_beta_df", "var_beta_df_stderr", "delta_pl_est", "delta_pl_est_stderr", "delta_pl_sim",
            "delta_pl_sim_stderr", "p_l_budget", "z_score",
        ] {
            assert!(b[key].is_number(), "budget missing {key}");
        }
    }
}

#[test]
fn zero_variance_flag_gives_zero_estimate() {
    let dir = scratch("study-zero");
    let out = dir.join("study.json");
    let mut args = STUDY.to_vec();
    args.extend(["--zero-variance", "--out", path_str(&out)]);
    assert!(colorpa(&args, &dir).status.success());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for b in doc["budgets"].as_array().unwrap() {
        assert_eq!(b["delta_pl_est"].as_f64(), Some(0.0));
        assert_eq!(b["var_beta_df"].as_f64(), Some(0.0));
    }
}

#[test]
fn oracle_check_reports_wilson_interval() {
    let dir = scratch("oracle");
    let out = dir.join("oracle.json");
    let run = colorpa(
        &["oracle-check", "--instances", "40", "--replicas", "200", "--steps", "20", "--sweeps", "10", "--out", path_str(&out)],
        &dir,
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("Wilson"), "{stdout}");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let (lo, hi, rate) = (doc["wilson_lower"].as_f64().unwrap(), doc["wilson_upper"].as_f64().unwrap(), doc["rate"].as_f64().unwrap());
    assert!(lo <= rate && rate <= hi);
    assert_eq!(run.status.success(), doc["passed"].as_bool().unwrap());
    let strict = colorpa(&["oracle-check", "--instances", "5", "--replicas", "1", "--steps", "1", "--sweeps", "0", "--threshold", "1.01"], &dir);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn export_lattice_validates() {
    let dir = scratch("lattice");
    let run = colorpa(&["export-lattice", "--d", "7"], &dir);
    assert!(run.status.success());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("lattice_d7.json")).unwrap()).unwrap();
    assert_eq!(doc["lattice"]["num_qubits"], 31);
    assert!(doc["validation"]["checks"].as_array().unwrap().iter().all(|c| c["status"] != "Fail"));
}
