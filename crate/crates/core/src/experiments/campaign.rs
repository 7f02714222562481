//! Logical error rate campaigns over a grid of distances and error rates.
//!
//! Instance `i` of row `(d, p)` draws its error from the stream keyed by
//! `(master seed, d, bits of p, i)` and decodes with a seed derived from the same key, so a row
//! is reproducible regardless of how many workers run it.

use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{build_decoder, DecodeError, Decoder, DecoderSettings};
use crate::experiments::metadata::{engine_conventions, Metadata};
use crate::experiments::stats::logical_error_rate;
use crate::gf2::BitVec;
use crate::lattice::{build_488_triangular, LatticeError};
use crate::noise::{build_noise_model, ErrorSample, NoiseError, NoiseModel, NoiseParams};
use crate::pa::PaConfig;
use crate::rng::{derive_seed, stream};
use crate::spin_model::{MappingError, SpinModel};

const TAG_SAMPLE: u64 = 0x5341_4d50;
const TAG_DECODE: u64 = 0x4445_4344;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("empty grid: need at least one distance and one error rate")]
    EmptyGrid,
    #[error("this study needs a two-class model, got {0} classes")]
    Classes(usize),
    #[error("instances must be positive")]
    NoInstances,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("I/O: {0}")]
    Io(#[from] io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// One (model, grid, decoder) campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub model: String,
    pub distances: Vec<usize>,
    pub rates: Vec<f64>,
    pub instances: usize,
    pub decoder: String,
    /// Decoder resources; the seed inside is replaced per instance.
    pub pa: PaConfig,
    pub exact_cap: usize,
    /// Noisy rounds for the phenomenological model; defaults to `d`.
    pub rounds: Option<usize>,
    /// Decode at this rate instead of the sampling rate.
    pub decode_rate: Option<f64>,
    pub seed: u64,
    /// Worker threads, 0 for all cores. Never changes the output.
    #[serde(skip)]
    pub workers: usize,
}

impl CampaignSpec {
    pub fn new(model: &str, distances: Vec<usize>, rates: Vec<f64>, instances: usize, pa: PaConfig, seed: u64) -> Self {
        Self {
            model: model.to_string(),
            distances,
            rates,
            instances,
            decoder: "pa".to_string(),
            pa,
            exact_cap: crate::decoder::EXACT_SPIN_CAP,
            rounds: None,
            decode_rate: None,
            seed,
            workers: 0,
        }
    }

    pub fn settings(&self) -> DecoderSettings {
        DecoderSettings { pa: self.pa, exact_cap: self.exact_cap }
    }

    pub fn noise_params(&self, p: f64) -> NoiseParams {
        NoiseParams { p, q: None, rounds: self.rounds }
    }

    /// Everything that determines the numbers in the output.
    pub fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("spec serializes")
    }

    /// Provenance for output files, including the noise model's conventions at the first grid point.
    pub fn metadata(&self) -> Result<Metadata, CampaignError> {
        let d = *self.distances.first().ok_or(CampaignError::EmptyGrid)?;
        let p = *self.rates.first().ok_or(CampaignError::EmptyGrid)?;
        let lattice = build_488_triangular(d)?;
        let noise = build_noise_model(&self.model, &lattice, &self.noise_params(p))?;
        let mut conventions = engine_conventions();
        conventions["noise"] = noise.conventions();
        conventions["decoder"] = self.decoder.clone().into();
        Ok(Metadata::new(&self.config_json(), conventions))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub d: usize,
    pub p: f64,
    pub instances: u64,
    pub failures: u64,
    #[serde(rename = "p_L")]
    pub p_l: f64,
    /// Wilson 95% half-width over 1.96.
    pub stderr: f64,
    #[serde(rename = "R")]
    pub replicas: usize,
    #[serde(rename = "N_T")]
    pub steps: usize,
    #[serde(rename = "N_S")]
    pub sweeps: usize,
    pub seed: u64,
    pub walltime_s: f64,
}

impl ResultRow {
    fn new(spec: &CampaignSpec, d: usize, p: f64, failures: u64, walltime_s: f64) -> Self {
        let rate = logical_error_rate(failures, spec.instances as u64).expect("failures bounded by instances");
        Self {
            model: spec.model.clone(),
            d,
            p,
            instances: spec.instances as u64,
            failures,
            p_l: rate.estimate,
            stderr: rate.stderr(),
            replicas: spec.pa.replicas,
            steps: spec.pa.steps,
            sweeps: spec.pa.sweeps,
            seed: spec.seed,
            walltime_s,
        }
    }
}

/// Outcome of one decoded instance, written as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub model: String,
    pub d: usize,
    pub p: f64,
    pub index: usize,
    pub seed: u64,
    pub decoder: String,
    /// Per-class `-βF` (or minus the minimum weight for `sa`).
    pub scores: Vec<f64>,
    pub chosen_class: usize,
    pub true_class: usize,
    pub success: bool,
}

/// Sampled error with everything a decoder needs.
pub struct Instance {
    pub seed: u64,
    pub sample: ErrorSample,
    pub syndrome: BitVec,
    pub true_class: usize,
    pub model: SpinModel,
}

impl Instance {
    pub fn decode_seed(&self) -> u64 {
        derive_seed(&[self.seed, TAG_DECODE])
    }
}

pub fn instance_seed(master: u64, d: usize, p: f64, index: usize) -> u64 {
    derive_seed(&[master, d as u64, p.to_bits(), index as u64])
}

pub fn sample_instance(noise: &dyn NoiseModel, seed: u64, decode_rate: Option<f64>) -> Result<Instance, CampaignError> {
    let sample = noise.sample(&mut stream(&[seed, TAG_SAMPLE]));
    let syndrome = noise.syndrome(&sample);
    let true_class = noise.true_class(&sample)?;
    let model = noise.spin_model(&syndrome, decode_rate)?;
    Ok(Instance { seed, sample, syndrome, true_class, model })
}

/// Runs `f` on a pool of `workers` threads (0 for the rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CampaignError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(f))
}

fn decode_row(
    spec: &CampaignSpec,
    noise: &dyn NoiseModel,
    decoder: &dyn Decoder,
    d: usize,
    p: f64,
) -> Result<Vec<InstanceRecord>, CampaignError> {
    (0..spec.instances)
        .into_par_iter()
        .map(|i| {
            let inst = sample_instance(noise, instance_seed(spec.seed, d, p, i), spec.decode_rate)?;
            let outcome = decoder.decode(&inst.model, inst.decode_seed())?.with_truth(inst.true_class);
            Ok(InstanceRecord {
                model: spec.model.clone(),
                d,
                p,
                index: i,
                seed: inst.seed,
                decoder: outcome.decoder.to_string(),
                success: outcome.success() == Some(true),
                scores: outcome.scores,
                chosen_class: outcome.chosen_class,
                true_class: inst.true_class,
            })
        })
        .collect()
}

/// One row per `(d, p)`, distance-major. `on_row` sees each row and its instances as soon as
/// the row finishes, so callers can persist partial results.
pub fn run_campaign(
    spec: &CampaignSpec,
    mut on_row: impl FnMut(&ResultRow, &[InstanceRecord]) -> Result<(), CampaignError>,
) -> Result<Vec<ResultRow>, CampaignError> {
    if spec.distances.is_empty() || spec.rates.is_empty() {
        return Err(CampaignError::EmptyGrid);
    }
    if spec.instances == 0 {
        return Err(CampaignError::NoInstances);
    }
    let decoder = build_decoder(&spec.decoder, &spec.settings())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(spec.workers).build()?;
    let mut rows = Vec::new();
    for &d in &spec.distances {
        let lattice = build_488_triangular(d)?;
        for &p in &spec.rates {
            let noise = build_noise_model(&spec.model, &lattice, &spec.noise_params(p))?;
            let start = Instant::now();
            let records = pool.install(|| decode_row(spec, noise.as_ref(), decoder.as_ref(), d, p))?;
            let failures = records.iter().filter(|r| !r.success).count() as u64;
            let row = ResultRow::new(spec, d, p, failures, start.elapsed().as_secs_f64());
            on_row(&row, &records)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Streams rows to CSV after a `#` metadata block, flushing after every row.
pub struct CsvRowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvRowWriter<W> {
    pub fn new(mut out: W, metadata: &Metadata) -> io::Result<Self> {
        out.write_all(metadata.comment_lines().as_bytes())?;
        Ok(Self { inner: csv::Writer::from_writer(out) })
    }

    pub fn push(&mut self, row: &ResultRow) -> Result<(), CampaignError> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Rows as CSV with the metadata block.
pub fn write_csv<W: Write>(out: W, metadata: &Metadata, rows: &[ResultRow]) -> Result<(), CampaignError> {
    let mut w = CsvRowWriter::new(out, metadata)?;
    for row in rows {
        w.push(row)?;
    }
    Ok(())
}

/// Rows and metadata as one JSON document.
pub fn to_json(metadata: &Metadata, rows: &[ResultRow]) -> serde_json::Value {
    serde_json::json!({ "metadata": metadata, "rows": rows })
}

/// Parses CSV written by [`write_csv`]; the metadata block is optional.
pub fn read_csv(text: &str) -> Result<(Option<Metadata>, Vec<ResultRow>), CampaignError> {
    let metadata = Metadata::parse_comment_lines(text);
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = reader.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok((metadata, rows))
}

/// Parses the JSON document written by [`to_json`].
pub fn read_json(text: &str) -> Result<(Option<Metadata>, Vec<ResultRow>), serde_json::Error> {
    #[derive(Deserialize)]
    struct Doc {
        metadata: Option<Metadata>,
        rows: Vec<ResultRow>,
    }
    let doc: Doc = serde_json::from_str(text)?;
    Ok((doc.metadata, doc.rows))
}

/// How often two decoders pick the same class on the same instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub instances: u64,
    pub agreements: u64,
}

impl Agreement {
    pub fn rate(&self) -> f64 {
        self.agreements as f64 / self.instances as f64
    }
}

/// Decodes `instances` samples of `noise` with both decoders and counts matching choices.
pub fn compare_decoders(
    noise: &dyn NoiseModel,
    d: usize,
    first: &dyn Decoder,
    second: &dyn Decoder,
    instances: usize,
    seed: u64,
    workers: usize,
) -> Result<Agreement, CampaignError> {
    let agree = with_workers(workers, || {
        (0..instances)
            .into_par_iter()
            .map(|i| {
                let inst = sample_instance(noise, instance_seed(seed, d, noise.error_rate(), i), None)?;
                let a = first.decode(&inst.model, inst.decode_seed())?;
                let b = second.decode(&inst.model, inst.decode_seed())?;
                Ok::<_, CampaignError>(a.chosen_class == b.chosen_class)
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(Agreement { instances: instances as u64, agreements: agree.iter().filter(|&&a| a).count() as u64 })
}
