//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero if any
//! fails. Arguments (or `COLORPA_ACCEPTANCE=a,b`) restrict the run to criteria whose names
//! contain one of them. Campaign outputs land in `$CARGO_TARGET_TMPDIR/acceptance`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use colorpa::decoder::{exact_log_partition, ExactDecoder, PaDecoder};
use colorpa::experiments::campaign::{compare_decoders, run_campaign, with_workers, write_csv, CampaignSpec, ResultRow};
use colorpa::experiments::fit::{curve_crossing, synthetic_points, FitParams};
use colorpa::experiments::{
    fit_threshold, logical_error_rate, run_resource_study, Budget, FitOptions, FitOrder, FitPoint, Metadata, ResourceSpec,
};
use colorpa::gf2::{BitMatrix, BitVec};
use colorpa::lattice::build_488_triangular;
use colorpa::noise::{build_noise_model, NoiseModel, NoiseParams};
use colorpa::pa::{run_pa, PaConfig, Population};
use colorpa::rng::{derive_seed, stream};
use colorpa::spin_model::{GaugeStructure, SpinModel, TermKind, WeightRule};
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

type Criterion = fn(&Path) -> Outcome;

fn output_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("output directory");
    dir
}

fn noise(model: &str, d: usize, p: f64) -> Box<dyn NoiseModel> {
    build_noise_model(model, &build_488_triangular(d).unwrap(), &NoiseParams::new(p)).unwrap()
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `H = -σ` on one spin.
fn single_spin(beta: f64) -> SpinModel {
    let structure = GaugeStructure::new(
        BitMatrix::zeros(0, 2),
        vec![vec![0]],
        vec![(TermKind::Qubit, vec![0])],
        vec![BitVec::from_indices(2, [1])],
        vec![BitVec::from_indices(2, [1])],
        WeightRule::Mechanisms,
    );
    SpinModel::new(Arc::new(structure), &BitVec::zeros(0), beta).unwrap()
}

fn free_energy(_: &Path) -> Outcome {
    const RUNS: u64 = 100;
    let config = PaConfig::new(1000, 100, 200, 0);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for k in 0..20u64 {
        let p = 0.04 + 0.008 * k as f64;
        let noise = noise("bitflip", 3, p);
        let sample = noise.sample(&mut stream(&[k, 0xF3EE]));
        let model = noise.spin_model(&noise.syndrome(&sample), None).unwrap();
        assert_eq!(model.num_spins(), 3);
        for class in 0..2 {
            let exact = exact_log_partition(&model, class).unwrap();
            let runs: Vec<f64> =
                (0..RUNS).map(|j| run_pa(&model, class, &config.with_seed(derive_seed(&[k, class as u64, j]))).minus_beta_f).collect();
            let (mean, se) = mean_and_stderr(&runs);
            let z = if se > 0.0 { (mean - exact).abs() / se } else if mean == exact { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
            if z > 3.0 {
                failures.push(format!("syndrome {k} class {class}: {mean:.6} vs {exact:.6} (z={z:.2})"));
            }
        }
    }
    let mut toy_worst: f64 = 0.0;
    for beta in [0.5, 1.0552, 2.0] {
        let model = single_spin(beta);
        let exact = (2.0 * beta.cosh()).ln();
        let runs: Vec<f64> = (0..RUNS).map(|j| run_pa(&model, 0, &config.with_seed(j)).minus_beta_f).collect();
        let (mean, se) = mean_and_stderr(&runs);
        let z = (mean - exact).abs() / se;
        toy_worst = toy_worst.max(z);
        if z > 3.0 {
            failures.push(format!("single spin beta={beta}: {mean:.6} vs {exact:.6} (z={z:.2})"));
        }
    }
    let detail = format!("40 syndrome-class pairs, max |z| {worst:.2}; single spin max |z| {toy_worst:.2}");
    if failures.is_empty() {
        Outcome::new(true, detail)
    } else {
        Outcome::new(false, format!("{detail}; {}", failures.join("; ")))
    }
}

fn resampling(_: &Path) -> Outcome {
    let mut problems = Vec::new();

    // Equal weights: the population is untouched for any offset.
    let model = single_spin(1.0);
    let pop = Population::init(&model, 0, 200, 3);
    for u in [0.0, 0.25, 0.5, 0.999] {
        let mut copy = Population::init(&model, 0, 200, 3);
        copy.resample_with_offset(0.0, u);
        if (0..200).any(|r| copy.spins(r) != pop.spins(r)) {
            problems.push(format!("equal weights changed the population at u={u}"));
        }
    }

    // Two replicas in opposite states with normalized weights (0.75, 0.25). Systematic
    // resampling gives replica 0 the copy count ceil(1.5 - u) - ceil(0 - u) for offset u.
    let seed = (0..).find(|&s| {
        let p = Population::init(&model, 0, 2, s);
        p.spins(0) == [1] && p.spins(1) == [-1]
    });
    let seed = seed.unwrap();
    let delta_beta = 3f64.ln() / 2.0;
    let grid = 10_000;
    let mut two_copies = 0;
    for i in 0..grid {
        let u = (i as f64 + 0.5) / grid as f64;
        let mut p = Population::init(&model, 0, 2, seed);
        p.resample_with_offset(delta_beta, u);
        let copies_of_first = (0..2).filter(|&r| p.spins(r) == [1]).count() as i64;
        let analytic = (1.5 - u).ceil() as i64 - (-u).ceil() as i64;
        if copies_of_first != analytic {
            problems.push(format!("u={u}: {copies_of_first} copies, law gives {analytic}"));
            break;
        }
        two_copies += (copies_of_first == 2) as usize;
    }
    let p_two = two_copies as f64 / grid as f64;
    if (p_two - 0.5).abs() > 1e-12 {
        problems.push(format!("P(2 copies) = {p_two}, expected 0.5"));
    }

    // Population size across many resamplings at a real model.
    let noise = noise("bitflip", 5, 0.1);
    let model = noise.spin_model(&noise.syndrome(&noise.sample(&mut stream(&[4]))), None).unwrap();
    let mut pop = Population::init(&model, 0, 137, 5);
    for step in 0..10_000 {
        pop.resample_systematic(0.05, step);
        if pop.len() != 137 {
            problems.push(format!("size {} after {step} resamplings", pop.len()));
            break;
        }
        if step % 100 == 0 {
            pop.metropolis(&model, 0.5, 1, step, false);
        }
    }

    if problems.is_empty() {
        Outcome::new(true, format!("identity at equal weights; copy law exact on {grid} offsets, P(2,0)={p_two}; size 137 over 10^4 resamplings"))
    } else {
        Outcome::new(false, problems.join("; "))
    }
}

/// Three spins on a triangle with a field on each: `H = -Σ σ_i - Σ σ_i σ_j`. Every spin sits in
/// three terms, so no move has `ΔE = 0`. With even degrees, zero-cost moves can chain into
/// deterministic cycles under ascending-order sweeps (the d=3 code model has one), which would
/// break ergodicity rather than test the acceptance rule.
fn triangle(beta: f64) -> SpinModel {
    let terms: Vec<Vec<usize>> = vec![vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2], vec![0, 2]];
    let generators: Vec<Vec<usize>> =
        (0..3).map(|k| (0..terms.len()).filter(|&t| terms[t].contains(&k)).collect()).collect();
    let m = terms.len() + 1;
    let structure = GaugeStructure::new(
        BitMatrix::zeros(0, m),
        generators,
        (0..terms.len()).map(|t| (TermKind::Qubit, vec![t])).collect(),
        vec![BitVec::from_indices(m, [m - 1])],
        vec![BitVec::from_indices(m, [m - 1])],
        WeightRule::Mechanisms,
    );
    SpinModel::new(Arc::new(structure), &BitVec::zeros(0), beta).unwrap()
}

fn metropolis(_: &Path) -> Outcome {
    let model = triangle(0.4);
    let beta = model.beta_target();
    let states: Vec<Vec<i8>> =
        (0..8u32).map(|bits| (0..3).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }).collect()).collect();
    let weights: Vec<f64> = states.iter().map(|s| (-beta * model.energy(0, s) as f64).exp()).collect();
    let z: f64 = weights.iter().sum();
    let replicas = 20_000;
    let chi2 = ChiSquared::new(7.0).unwrap();
    let mut p_values = Vec::new();
    for seed in 0..10u64 {
        let mut pop = Population::init(&model, 0, replicas, seed);
        pop.metropolis(&model, beta, 50, 0, false);
        let mut counts = [0f64; 8];
        for r in 0..replicas {
            let s = pop.spins(r);
            let idx = (0..3).filter(|&k| s[k] == -1).map(|k| 1 << k).sum::<usize>();
            counts[idx] += 1.0;
        }
        let stat: f64 = counts
            .iter()
            .zip(&weights)
            .map(|(&o, &w)| {
                let e = replicas as f64 * w / z;
                (o - e).powi(2) / e
            })
            .sum();
        p_values.push(1.0 - chi2.cdf(stat));
    }
    let good = p_values.iter().filter(|&&p| p > 0.01).count();
    let shown: Vec<String> = p_values.iter().map(|p| format!("{p:.3}")).collect();
    Outcome::new(good >= 8, format!("{good}/10 seeds with p > 0.01 (p = {})", shown.join(", ")))
}

fn oracle(_: &Path) -> Outcome {
    let noise = noise("bitflip", 5, 0.10);
    let pa = PaDecoder { config: PaConfig::default() };
    let agreement = compare_decoders(noise.as_ref(), 5, &pa, &ExactDecoder::default(), 2000, 2024, 0).unwrap();
    let wilson = logical_error_rate(agreement.agreements, agreement.instances).unwrap();
    Outcome::new(
        agreement.rate() >= 0.995,
        format!(
            "{}/{} = {:.4} agree (95% [{:.4}, {:.4}]), need 0.995",
            agreement.agreements,
            agreement.instances,
            agreement.rate(),
            wilson.lower,
            wilson.upper
        ),
    )
}

fn rate_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| ((start + step * k as f64) * 1e6).round() / 1e6).collect()
}

fn campaign(spec: &CampaignSpec, out: &Path) -> Vec<ResultRow> {
    let start = Instant::now();
    let rows = run_campaign(spec, |row, _| {
        eprintln!(
            "    {} d={} p={} p_L={:.4} +- {:.4} [{:.0}s]",
            row.model,
            row.d,
            row.p,
            row.p_l,
            row.stderr,
            start.elapsed().as_secs_f64()
        );
        Ok(())
    })
    .unwrap();
    write_csv(std::fs::File::create(out).unwrap(), &spec.metadata().unwrap(), &rows).unwrap();
    rows
}

fn threshold(model: &str, distances: Vec<usize>, lower: f64, upper: f64, dir: &Path) -> Outcome {
    let rates = rate_grid(if model == "bitflip" { 0.100 } else { 0.176 }, 0.002, 9);
    let spec = CampaignSpec::new(model, distances, rates, 2000, PaConfig::new(300, 60, 30, 0), 17);
    let rows = campaign(&spec, &dir.join(format!("{model}.csv")));
    let points: Vec<FitPoint> = rows.iter().map(FitPoint::from).collect();
    match fit_threshold(&points, &FitOptions::default()) {
        Ok(fit) => {
            let p_th = fit.params.p_th;
            Outcome::new(
                (lower..=upper).contains(&p_th),
                format!(
                    "p_th = {p_th:.5} +- {:.5}, nu = {:.3}, chi2/dof = {:.2}, need [{lower}, {upper}]",
                    fit.uncertainties.p_th,
                    fit.params.nu,
                    fit.chi2 / fit.dof.max(1) as f64
                ),
            )
        }
        Err(e) => Outcome::new(false, format!("fit failed: {e}")),
    }
}

fn bitflip_threshold(dir: &Path) -> Outcome {
    threshold("bitflip", vec![5, 7, 9, 11], 0.103, 0.113, dir)
}

fn depolarizing_threshold(dir: &Path) -> Outcome {
    threshold("depolarizing", vec![5, 7, 9], 0.180, 0.195, dir)
}

fn phenomenological(dir: &Path) -> Outcome {
    let rates = rate_grid(0.026, 0.003, 7);
    let spec = CampaignSpec::new("phenomenological", vec![5, 7], rates, 1000, PaConfig::new(300, 60, 30, 0), 23);
    let rows = campaign(&spec, &dir.join("phenomenological.csv"));
    let points: Vec<FitPoint> = rows.iter().map(FitPoint::from).collect();
    let crossing = curve_crossing(&points, 5, 7);
    let quadratic = fit_threshold(&points, &FitOptions { order: FitOrder::Quadratic, window: None, ..FitOptions::default() });
    let fit_note = match &quadratic {
        Ok(fit) => format!("quadratic fit p_th = {:.4}, C = {:.2}", fit.params.p_th, fit.params.c.unwrap_or(f64::NAN)),
        Err(e) => format!("quadratic fit failed: {e}"),
    };
    let passed = crossing.is_some_and(|c| (0.030..=0.040).contains(&c)) && quadratic.is_ok();
    let crossing = crossing.map(|c| format!("{c:.5}")).unwrap_or_else(|| "none".into());
    Outcome::new(passed, format!("crossing d=5/7 at {crossing}, need [0.030, 0.040]; {fit_note}"))
}

fn resource_model(dir: &Path) -> Outcome {
    let spec = ResourceSpec {
        model: "bitflip".into(),
        d: 7,
        p: 0.108,
        steps: 30,
        budgets: vec![Budget { replicas: 15, sweeps: 3 }, Budget { replicas: 50, sweeps: 10 }],
        instances: 500_000,
        variance_instances: 200,
        repeats: 100,
        reference: "exact".into(),
        reference_settings: Default::default(),
        bins: 40,
        zero_variance: false,
        seed: 31,
        workers: 0,
    };
    let study = run_resource_study(&spec).unwrap();
    std::fs::write(dir.join("resource_study.json"), serde_json::to_string_pretty(&study).unwrap()).unwrap();
    let parts: Vec<String> = study
        .budgets
        .iter()
        .map(|b| {
            format!(
                "({},{}): est {:.4} +- {:.4} vs sim {:.4} +- {:.4}, z = {:.2}",
                b.replicas, b.sweeps, b.delta_pl_est, b.delta_pl_est_stderr, b.delta_pl_sim, b.delta_pl_sim_stderr, b.z_score
            )
        })
        .collect();
    Outcome::new(study.budgets.iter().all(|b| b.z_score.abs() <= 2.0), parts.join("; "))
}

fn performance(_: &Path) -> Outcome {
    let noise = noise("bitflip", 9, 0.108);
    let model = noise.spin_model(&noise.syndrome(&noise.sample(&mut stream(&[9]))), None).unwrap();
    let (replicas, sweeps) = (1024, 200);
    let ns_per_candidate = with_workers(1, || {
        let mut pop = Population::init(&model, 0, replicas, 1);
        pop.metropolis(&model, model.beta_target(), 5, 0, false);
        let start = Instant::now();
        pop.metropolis(&model, model.beta_target(), sweeps, 1, false);
        start.elapsed().as_nanos() as f64 / (replicas * sweeps * model.num_spins()) as f64
    })
    .unwrap();

    let mut spec = CampaignSpec::new("depolarizing", vec![5, 7], vec![0.15, 0.19], 200, PaConfig::new(100, 20, 5, 0), 3);
    let strip = |mut rows: Vec<ResultRow>| {
        rows.iter_mut().for_each(|r| r.walltime_s = 0.0);
        rows
    };
    spec.workers = 1;
    let single = strip(run_campaign(&spec, |_, _| Ok(())).unwrap());
    spec.workers = 4;
    let multi = strip(run_campaign(&spec, |_, _| Ok(())).unwrap());
    let identical = single == multi;
    Outcome::new(
        ns_per_candidate <= 20.0 && identical,
        format!(
            "{ns_per_candidate:.2} ns per candidate on d=9 ({} spins), need <= 20; 1 vs 4 workers identical: {identical}",
            model.num_spins()
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_colorpa")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

/// File contents with walltime fields removed: the `walltime_s` CSV column and JSON keys.
fn without_walltime(text: &str) -> String {
    let mut column = None;
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"walltime_s\""))
        .map(|l| {
            if l.starts_with('#') {
                return l.to_string();
            }
            let fields: Vec<&str> = l.split(',').collect();
            if column.is_none() {
                column = fields.iter().position(|f| *f == "walltime_s");
            }
            match column {
                Some(c) if fields.len() > c => {
                    fields.iter().enumerate().filter(|&(i, _)| i != c).map(|(_, f)| *f).collect::<Vec<_>>().join(",")
                }
                _ => l.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Noise-free points from a known scaling form, so the fit step always converges.
fn synthetic_input(dir: &Path) -> String {
    let truth = FitParams { a: 0.155, b: 0.709, c: None, nu: 1.41, p_th: 0.1081 };
    let rows: Vec<ResultRow> = synthetic_points(&truth, &[5, 7, 9], &rate_grid(0.100, 0.002, 9), 0.004)
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
    let path = dir.join("synthetic.csv");
    let meta = Metadata::new(&serde_json::json!({ "synthetic": true }), serde_json::json!({}));
    write_csv(std::fs::File::create(&path).unwrap(), &meta, &rows).unwrap();
    path.to_str().unwrap().to_string()
}

fn determinism(dir: &Path) -> Outcome {
    let dir = dir.join("determinism");
    std::fs::create_dir_all(&dir).unwrap();
    let path = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let sim = ["simulate", "--model", "bitflip", "--d", "5,7", "--p", "0.10,0.108,0.116", "--instances", "100", "--seed", "1"];
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("simulate csv", [&sim[..], &["--replicas", "100", "--steps", "20", "--sweeps", "5"]].concat().iter().map(|s| s.to_string()).collect()),
        ("simulate json", [&sim[..], &["--replicas", "100", "--steps", "20", "--sweeps", "5", "--format", "json"]].concat().iter().map(|s| s.to_string()).collect()),
        ("fit", vec!["fit".into(), "--input".into(), synthetic_input(&dir), "--window".into(), "none".into()]),
        (
            "resource-study",
            ["resource-study", "--d", "5", "--steps", "8", "--budgets", "8x2,30x4", "--instances", "300", "--variance-instances", "10", "--repeats", "5"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        ),
        ("oracle-check", ["oracle-check", "--instances", "30", "--replicas", "100", "--steps", "20", "--sweeps", "5"].iter().map(|s| s.to_string()).collect()),
        ("export-lattice", vec!["export-lattice".into(), "--d".into(), "7".into()]),
    ];
    let mut problems = Vec::new();
    for (name, args) in &runs {
        let stem = name.replace([' ', '-'], "_");
        let mut texts = Vec::new();
        for copy in ["a", "b"] {
            let out = path(&format!("{stem}.{copy}"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--out", &out]);
            if let Err(e) = run_cli(&full) {
                problems.push(e);
                continue;
            }
            texts.push(std::fs::read_to_string(&out).unwrap_or_default());
        }
        if texts.len() == 2 && without_walltime(&texts[0]) != without_walltime(&texts[1]) {
            problems.push(format!("{name} differs between runs"));
        }
    }
    if problems.is_empty() {
        Outcome::new(true, format!("{} subcommand runs reproduced byte-for-byte outside walltime", runs.len()))
    } else {
        Outcome::new(false, problems.join("; "))
    }
}

const CRITERIA: [(&str, Criterion); 10] = [
    ("resampling", resampling),
    ("metropolis", metropolis),
    ("performance", performance),
    ("determinism", determinism),
    ("free-energy", free_energy),
    ("oracle", oracle),
    ("resource-model", resource_model),
    ("bitflip-threshold", bitflip_threshold),
    ("phenomenological", phenomenological),
    ("depolarizing-threshold", depolarizing_threshold),
];

fn main() -> ExitCode {
    let mut filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if let Ok(list) = std::env::var("COLORPA_ACCEPTANCE") {
        filters.extend(list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from));
    }
    let dir = output_dir();
    let mut failed = 0;
    let mut ran = 0;
    for (name, criterion) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        eprintln!("running {name}");
        let start = Instant::now();
        let outcome = criterion(&dir);
        ran += 1;
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        failed += !outcome.passed as usize;
        println!("{verdict} {name}: {} ({:.0}s)", outcome.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
