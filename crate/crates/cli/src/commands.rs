use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use colorpa::decoder::{independent_spins, DecodeError, Decoder, ExactDecoder, PaDecoder, EXACT_SPIN_CAP};
use colorpa::experiments::campaign::{
    compare_decoders, read_csv, read_json, run_campaign, sample_instance, to_json, CampaignError, CampaignSpec,
    CsvRowWriter, ResultRow,
};
use colorpa::experiments::fit::curve_crossing;
use colorpa::experiments::resource::ReferenceSettings;
use colorpa::experiments::{
    fit_threshold, logical_error_rate, run_resource_study, Budget, FitError, FitOptions, FitOrder, FitPoint, Metadata,
    ResourceSpec,
};
use colorpa::lattice::{build_488_triangular, validate, LatticeError};
use colorpa::noise::{build_noise_model, NoiseError, NoiseParams};
use colorpa::pa::PaConfig;

use crate::settings::{default_output, ConfigFile, Probability};
use crate::{CliError, ExportArgs, FitArgs, OracleArgs, PaArgs, ResourceArgs, SimulateArgs};

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        let usage = match &e {
            CampaignError::EmptyGrid | CampaignError::NoInstances | CampaignError::Classes(_) => true,
            CampaignError::Lattice(_) => true,
            CampaignError::Noise(n) => is_usage_noise(n),
            CampaignError::Decode(d) => is_usage_decode(d),
            _ => false,
        };
        if usage {
            Self::Usage(e.to_string())
        } else {
            Self::Runtime(e.to_string())
        }
    }
}

fn is_usage_noise(e: &NoiseError) -> bool {
    !matches!(e, NoiseError::Mapping(_))
}

fn is_usage_decode(e: &DecodeError) -> bool {
    matches!(e, DecodeError::TooLarge { .. } | DecodeError::Config(_) | DecodeError::Unknown(_))
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        if is_usage_noise(&e) {
            Self::Usage(e.to_string())
        } else {
            Self::Runtime(e.to_string())
        }
    }
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        Self::Usage(e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| io_error(path, e))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| io_error(path, e))
}

fn pa_config(file: &ConfigFile, args: &PaArgs, prefix: &str) -> Result<PaConfig, CliError> {
    let defaults = PaConfig::default();
    let config = PaConfig::new(
        file.pick(args.replicas, &format!("{prefix}replicas"), defaults.replicas)?,
        file.pick(args.steps, &format!("{prefix}steps"), defaults.steps)?,
        file.pick(args.sweeps, &format!("{prefix}sweeps"), defaults.sweeps)?,
        0,
    );
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Csv,
    Json,
}

pub fn simulate(args: SimulateArgs) -> Result<ExitCode, CliError> {
    let file = ConfigFile::load(args.common.config.as_deref())?;
    let model: String = file.pick(args.model, "model", "bitflip".to_string())?;
    let distances: Vec<usize> = file.pick_list(args.d, "d", vec![])?;
    let rates: Vec<Probability> = file.pick_list(args.p, "p", vec![])?;
    let mut spec = CampaignSpec::new(
        &model,
        distances,
        rates.iter().map(|p| p.0).collect(),
        file.pick(args.instances, "instances", 1000)?,
        pa_config(&file, &args.pa, "")?,
        file.pick(args.common.seed, "seed", 0)?,
    );
    spec.decoder = file.pick(args.decoder, "decoder", spec.decoder)?;
    spec.rounds = file.pick_opt(args.rounds, "rounds")?;
    spec.decode_rate = file.pick_opt(args.decode_p, "decode-p")?.map(|p: Probability| p.0);
    spec.workers = file.pick(args.common.workers, "workers", 0)?;
    let format: Option<String> = file.pick_opt(args.format, "format")?;
    let out: Option<PathBuf> = file.pick_opt(args.common.out, "out")?;
    let dump: Option<PathBuf> = file.pick_opt(args.dump, "dump")?;
    file.finish()?;

    let format = match (format.as_deref(), &out) {
        (Some("csv"), _) => Format::Csv,
        (Some("json"), _) => Format::Json,
        (Some(other), _) => return Err(CliError::Usage(format!("unknown format '{other}' (expected csv or json)"))),
        (None, Some(path)) if path.extension().is_some_and(|e| e == "json") => Format::Json,
        (None, _) => Format::Csv,
    };
    let out = out.unwrap_or_else(|| default_output(if format == Format::Csv { "simulate.csv" } else { "simulate.json" }));

    // Everything that can be rejected up front is, before any output file is touched.
    let metadata = spec.metadata()?;
    for &d in &spec.distances {
        let lattice = build_488_triangular(d)?;
        for &p in &spec.rates {
            build_noise_model(&spec.model, &lattice, &spec.noise_params(p))?;
        }
    }
    colorpa::decoder::build_decoder(&spec.decoder, &spec.settings()).map_err(|e| CliError::Usage(e.to_string()))?;
    if spec.instances == 0 {
        return Err(CliError::Usage("instances must be positive".into()));
    }

    let mut csv_out = match format {
        Format::Csv => Some(CsvRowWriter::new(create(&out)?, &metadata).map_err(|e| io_error(&out, e))?),
        Format::Json => None,
    };
    let mut dump_out = dump.as_deref().map(create).transpose()?;
    let total = spec.distances.len() * spec.rates.len();
    let mut done = 0;
    let rows = run_campaign(&spec, |row, records| {
        done += 1;
        eprintln!(
            "[{done}/{total}] d={} p={} p_L={:.5} +- {:.5} ({} failures, {:.1}s)",
            row.d, row.p, row.p_l, row.stderr, row.failures, row.walltime_s
        );
        if let Some(w) = csv_out.as_mut() {
            w.push(row)?;
        }
        if let Some(w) = dump_out.as_mut() {
            for r in records {
                serde_json::to_writer(&mut *w, r).map_err(std::io::Error::from)?;
                writeln!(w)?;
            }
            w.flush()?;
        }
        Ok(())
    })?;
    if format == Format::Json {
        write_json(&out, &to_json(&metadata, &rows))?;
    }
    print_rows(&rows);
    eprintln!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn print_rows(rows: &[ResultRow]) {
    println!("{:<17} {:>3} {:>8} {:>9} {:>9} {:>9} {:>9}", "model", "d", "p", "instances", "failures", "p_L", "stderr");
    for r in rows {
        println!(
            "{:<17} {:>3} {:>8.5} {:>9} {:>9} {:>9.5} {:>9.5}",
            r.model, r.d, r.p, r.instances, r.failures, r.p_l, r.stderr
        );
    }
}

fn read_rows(path: &Path) -> Result<(Option<Metadata>, Vec<ResultRow>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        read_json(&text).map_err(|e| e.to_string())
    } else {
        read_csv(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn fit(args: FitArgs) -> Result<ExitCode, CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let defaults = FitOptions::default();
    let order: FitOrder = file.pick(args.order.as_deref().map(str::parse).transpose().map_err(CliError::Usage)?, "order", defaults.order)?;
    let d_min = file.pick(args.d_min, "d-min", defaults.d_min)?;
    let window: String = file.pick(args.window, "window", "0.01".to_string())?;
    let out: PathBuf = file.pick(args.out, "out", default_output("fit.json"))?;
    file.finish()?;
    let window = match window.as_str() {
        "none" => None,
        w => Some(w.parse::<f64>().map_err(|e| CliError::Usage(format!("window '{w}': {e}")))?),
    };

    let (source, rows) = read_rows(&args.input)?;
    let points: Vec<FitPoint> = rows.iter().map(FitPoint::from).collect();
    let options = FitOptions { order, d_min, window, ..defaults };
    let result = fit_threshold(&points, &options).map_err(|e| match e {
        FitError::InsufficientData(_) | FitError::BadStderr { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    })?;

    let mut distances: Vec<usize> = points.iter().map(|p| p.d).filter(|&d| d >= d_min).collect();
    distances.sort_unstable();
    distances.dedup();
    let crossings: Vec<serde_json::Value> = distances
        .windows(2)
        .map(|w| serde_json::json!({ "d_small": w[0], "d_large": w[1], "p": curve_crossing(&points, w[0], w[1]) }))
        .collect();

    let config = serde_json::json!({
        "input": args.input.display().to_string(),
        "order": order,
        "d_min": d_min,
        "window": window,
        "source_config_hash": source.as_ref().map(|m| m.config_hash.clone()),
    });
    let metadata = Metadata::new(&config, serde_json::json!({ "ansatz": "p_L = A + B x + C x^2, x = d^(1/nu) (p - p_th)" }));
    let doc = serde_json::json!({ "metadata": metadata, "source": source, "fit": result, "crossings": crossings });
    write_json(&out, &doc)?;

    let u = &result.uncertainties;
    let p = &result.params;
    println!("p_th = {:.5} +- {:.5}", p.p_th, u.p_th);
    println!("nu   = {:.4} +- {:.4}", p.nu, u.nu);
    println!("A    = {:.4} +- {:.4}", p.a, u.a);
    println!("B    = {:.4} +- {:.4}", p.b, u.b);
    if let (Some(c), Some(cu)) = (p.c, u.c) {
        println!("C    = {c:.4} +- {cu:.4}");
    }
    println!("chi2 = {:.3} over {} dof ({} points)", result.chi2, result.dof, result.points);
    for c in &crossings {
        println!("crossing d={} / d={}: {}", c["d_small"], c["d_large"], c["p"]);
    }
    eprintln!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn resource_study(args: ResourceArgs) -> Result<ExitCode, CliError> {
    let file = ConfigFile::load(args.common.config.as_deref())?;
    let reference_defaults = ReferenceSettings::default();
    let reference_pa = PaArgs { replicas: args.ref_replicas, steps: args.ref_steps, sweeps: args.ref_sweeps };
    let spec = ResourceSpec {
        model: file.pick(args.model, "model", "bitflip".to_string())?,
        d: file.pick(args.d, "d", 7)?,
        p: file.pick(args.p, "p", Probability(0.108))?.0,
        steps: file.pick(args.steps, "steps", 30)?,
        budgets: file.pick_list(
            args.budgets.iter().map(|b| b.parse()).collect::<Result<Vec<Budget>, _>>().map_err(CliError::Usage)?,
            "budgets",
            vec![Budget { replicas: 15, sweeps: 3 }, Budget { replicas: 50, sweeps: 10 }],
        )?,
        instances: file.pick(args.instances, "instances", 10_000)?,
        variance_instances: file.pick(args.variance_instances, "variance-instances", 200)?,
        repeats: file.pick(args.repeats, "repeats", 100)?,
        reference: file.pick(args.reference, "reference", "exact".to_string())?,
        reference_settings: ReferenceSettings { pa: pa_config(&file, &reference_pa, "ref-")?, ..reference_defaults },
        bins: file.pick(args.bins, "bins", 40)?,
        zero_variance: file.pick_flag(args.zero_variance, "zero-variance")?,
        seed: file.pick(args.common.seed, "seed", 0)?,
        workers: file.pick(args.common.workers, "workers", 0)?,
    };
    let out: PathBuf = file.pick(args.common.out, "out", default_output("resource_study.json"))?;
    file.finish()?;
    if spec.budgets.iter().any(|b| b.replicas == 0) {
        return Err(CliError::Usage("budgets need at least one replica".into()));
    }
    if spec.steps == 0 {
        return Err(CliError::Usage("steps must be positive".into()));
    }
    if spec.repeats < 2 && !spec.zero_variance {
        return Err(CliError::Usage("repeats must be at least 2 to estimate a variance".into()));
    }
    if spec.bins == 0 {
        return Err(CliError::Usage("bins must be positive".into()));
    }

    eprintln!("resource study: {} d={} p={} over {} instances", spec.model, spec.d, spec.p, spec.instances);
    let study = run_resource_study(&spec)?;
    let doc = serde_json::to_value(&study).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(&out, &doc)?;

    println!("reference {} p_L = {:.5}", study.reference, study.p_l_reference);
    println!(
        "{:>5} {:>4} {:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>7}",
        "R", "N_S", "N_T", "var", "dpL_est", "+-", "dpL_sim", "+-", "z"
    );
    for b in &study.budgets {
        println!(
            "{:>5} {:>4} {:>4} {:>10.4} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>7.2}",
            b.replicas,
            b.sweeps,
            b.steps,
            b.var_beta_df,
            b.delta_pl_est,
            b.delta_pl_est_stderr,
            b.delta_pl_sim,
            b.delta_pl_sim_stderr,
            b.z_score
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn oracle_check(args: OracleArgs) -> Result<ExitCode, CliError> {
    let file = ConfigFile::load(args.common.config.as_deref())?;
    let model: String = file.pick(args.model, "model", "bitflip".to_string())?;
    let d = file.pick(args.d, "d", 3)?;
    let p = file.pick(args.p, "p", Probability(0.1))?.0;
    let instances = file.pick(args.instances, "instances", 500)?;
    let threshold: f64 = file.pick(args.threshold, "threshold", 0.995)?;
    let pa = pa_config(&file, &args.pa, "")?;
    let seed = file.pick(args.common.seed, "seed", 0)?;
    let workers = file.pick(args.common.workers, "workers", 0)?;
    let out: Option<PathBuf> = file.pick_opt(args.common.out, "out")?;
    file.finish()?;
    if instances == 0 {
        return Err(CliError::Usage("instances must be positive".into()));
    }

    let lattice = build_488_triangular(d)?;
    let noise = build_noise_model(&model, &lattice, &NoiseParams::new(p))?;
    let probe = sample_instance(noise.as_ref(), seed, None)?;
    let independent = independent_spins(&probe.model).len();
    if independent > EXACT_SPIN_CAP {
        return Err(CliError::Usage(format!(
            "{model} d={d} has {independent} independent spins, above the exact-enumeration cap of {EXACT_SPIN_CAP}"
        )));
    }

    let pa_decoder = PaDecoder { config: pa };
    let exact = ExactDecoder::default();
    let agreement = compare_decoders(noise.as_ref(), d, &pa_decoder as &dyn Decoder, &exact, instances, seed, workers)?;
    let interval = logical_error_rate(agreement.agreements, agreement.instances).map_err(|e| CliError::Runtime(e.to_string()))?;
    let passed = agreement.rate() >= threshold;
    println!(
        "{model} d={d} p={p}: PA agrees with exact on {}/{} = {:.4} (95% Wilson [{:.4}, {:.4}]), threshold {threshold}: {}",
        agreement.agreements,
        agreement.instances,
        agreement.rate(),
        interval.lower,
        interval.upper,
        if passed { "pass" } else { "fail" }
    );
    if let Some(out) = out {
        let config = serde_json::json!({
            "model": model, "d": d, "p": p, "instances": instances, "threshold": threshold, "pa": pa, "seed": seed,
        });
        let metadata = Metadata::new(&config, colorpa::experiments::metadata::engine_conventions());
        let doc = serde_json::json!({
            "metadata": metadata,
            "agreements": agreement.agreements,
            "instances": agreement.instances,
            "rate": agreement.rate(),
            "wilson_lower": interval.lower,
            "wilson_upper": interval.upper,
            "threshold": threshold,
            "passed": passed,
        });
        write_json(&out, &doc)?;
    }
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn export_lattice(args: ExportArgs) -> Result<ExitCode, CliError> {
    let lattice = build_488_triangular(args.d)?;
    let report = validate(&lattice);
    let out = args.out.unwrap_or_else(|| default_output(&format!("lattice_d{}.json", args.d)));
    let config = serde_json::json!({ "d": args.d });
    let metadata = Metadata::new(&config, serde_json::json!({ "lattice": "4.8.8 triangular" }));
    let doc = serde_json::json!({ "metadata": metadata, "lattice": lattice.to_json(), "validation": report });
    write_json(&out, &doc)?;
    print!("{report}");
    eprintln!("wrote {}", out.display());
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::Runtime(format!("lattice d={} failed validation", args.d)))
    }
}
