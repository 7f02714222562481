//! Class decoders: population annealing, exact enumeration and minimum-weight annealing.

use std::time::Instant;

use serde::Serialize;

use crate::gf2::SpanBasis;
use crate::pa::{run_pa, run_sa_min_weight, ConfigError, PaConfig};
use crate::registry::{Registry, UnknownName};
use crate::spin_model::SpinModel;

/// Largest number of independent spins the exact decoder will enumerate.
pub const EXACT_SPIN_CAP: usize = 22;

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("model has {independent} independent spins, above the exact-enumeration cap of {cap}")]
    TooLarge { independent: usize, cap: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Unknown(#[from] UnknownName),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeOutcome {
    pub decoder: &'static str,
    /// Per-class score to maximize: `-βF_l` for free-energy decoders, minus the minimum error
    /// weight for the annealing baseline.
    pub scores: Vec<f64>,
    pub chosen_class: usize,
    pub true_class: Option<usize>,
    pub class_seconds: Vec<f64>,
}

impl DecodeOutcome {
    /// Picks the highest score; ties go to the lowest class index.
    pub fn from_scores(decoder: &'static str, scores: Vec<f64>, class_seconds: Vec<f64>) -> Self {
        let mut chosen = 0;
        for (l, &s) in scores.iter().enumerate() {
            if s > scores[chosen] {
                chosen = l;
            }
        }
        Self { decoder, scores, chosen_class: chosen, true_class: None, class_seconds }
    }

    pub fn with_truth(mut self, true_class: usize) -> Self {
        self.true_class = Some(true_class);
        self
    }

    pub fn success(&self) -> Option<bool> {
        self.true_class.map(|t| t == self.chosen_class)
    }

    /// `βF_l - βF_0` for each class `l ≥ 1`; positive values favour class 0.
    pub fn beta_df(&self) -> Vec<f64> {
        self.scores[1..].iter().map(|s| self.scores[0] - s).collect()
    }

    /// Score gap between the chosen class and the best other class.
    pub fn margin(&self) -> f64 {
        let best_other = self
            .scores
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != self.chosen_class)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        self.scores[self.chosen_class] - best_other
    }
}

pub trait Decoder: Send + Sync {
    fn name(&self) -> &'static str;

    fn decode(&self, model: &SpinModel, seed: u64) -> Result<DecodeOutcome, DecodeError>;
}

fn per_class(model: &SpinModel, mut score: impl FnMut(usize) -> Result<f64, DecodeError>) -> Result<(Vec<f64>, Vec<f64>), DecodeError> {
    let mut scores = Vec::with_capacity(model.num_classes());
    let mut seconds = Vec::with_capacity(model.num_classes());
    for class in 0..model.num_classes() {
        let start = Instant::now();
        scores.push(score(class)?);
        seconds.push(start.elapsed().as_secs_f64());
    }
    Ok((scores, seconds))
}

/// Maximum-likelihood class from population-annealing free energies.
pub struct PaDecoder {
    pub config: PaConfig,
}

impl Decoder for PaDecoder {
    fn name(&self) -> &'static str {
        "pa"
    }

    fn decode(&self, model: &SpinModel, seed: u64) -> Result<DecodeOutcome, DecodeError> {
        self.config.validate()?;
        let config = self.config.with_seed(seed);
        let (scores, seconds) = per_class(model, |class| Ok(run_pa(model, class, &config).minus_beta_f))?;
        Ok(DecodeOutcome::from_scores(self.name(), scores, seconds))
    }
}

/// Class whose annealed minimum-weight error is lightest.
pub struct SaDecoder {
    pub config: PaConfig,
}

impl Decoder for SaDecoder {
    fn name(&self) -> &'static str {
        "sa"
    }

    fn decode(&self, model: &SpinModel, seed: u64) -> Result<DecodeOutcome, DecodeError> {
        self.config.validate()?;
        let config = self.config.with_seed(seed);
        let (scores, seconds) =
            per_class(model, |class| Ok(-(run_sa_min_weight(model, class, &config) as f64)))?;
        Ok(DecodeOutcome::from_scores(self.name(), scores, seconds))
    }
}

/// Exact class free energies by enumerating every gauge-equivalent error.
pub struct ExactDecoder {
    pub cap: usize,
}

impl Default for ExactDecoder {
    fn default() -> Self {
        Self { cap: EXACT_SPIN_CAP }
    }
}

impl Decoder for ExactDecoder {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn decode(&self, model: &SpinModel, _seed: u64) -> Result<DecodeOutcome, DecodeError> {
        let spins = independent_spins(model);
        check_cap(spins.len(), self.cap)?;
        let (scores, seconds) = per_class(model, |class| Ok(enumerate(model, class, &spins).log_partition))?;
        Ok(DecodeOutcome::from_scores(self.name(), scores, seconds))
    }
}

fn check_cap(independent: usize, cap: usize) -> Result<(), DecodeError> {
    if independent > cap {
        Err(DecodeError::TooLarge { independent, cap })
    } else {
        Ok(())
    }
}

/// Spins whose generators are linearly independent, chosen greedily in index order.
pub fn independent_spins(model: &SpinModel) -> Vec<usize> {
    let structure = model.structure();
    let mut span = SpanBasis::new(structure.num_mechanisms());
    (0..model.num_spins()).filter(|&k| span.insert(&structure.generator_vector(k))).collect()
}

struct Enumeration {
    log_partition: f64,
    min_energy: i64,
}

/// Visits each configuration of `free` (other spins fixed up) once, in Gray-code order.
/// Dependent spins only repeat configurations, each `2^{n - r}` times.
fn enumerate(model: &SpinModel, class: usize, free: &[usize]) -> Enumeration {
    let n = model.num_spins();
    let structure = model.structure();
    let spins = vec![1i8; n];
    let mut values = model.term_values(class, &spins);
    let mut energy = -values.iter().map(|&v| v as i64).sum::<i64>();
    let offset = model.num_terms() as i64;
    let mut histogram = vec![0u64; 2 * model.num_terms() + 1];
    histogram[(energy + offset) as usize] += 1;
    let mut min_energy = energy;
    for i in 1u64..(1u64 << free.len()) {
        let k = free[i.trailing_zeros() as usize];
        let mut s = 0i64;
        for &t in structure.spin_terms(k) {
            s += values[t as usize] as i64;
            values[t as usize] = -values[t as usize];
        }
        energy += 2 * s;
        min_energy = min_energy.min(energy);
        histogram[(energy + offset) as usize] += 1;
    }
    let beta = model.beta_target();
    let logs: Vec<f64> = histogram
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(e, &c)| (c as f64).ln() - beta * (e as i64 - offset) as f64)
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    let degeneracy = (n - free.len()) as f64 * std::f64::consts::LN_2;
    Enumeration { log_partition: max + sum.ln() + degeneracy, min_energy }
}

/// Exact `ln Z_l = -βF_l` for one class.
pub fn exact_log_partition(model: &SpinModel, class: usize) -> Result<f64, DecodeError> {
    let spins = independent_spins(model);
    check_cap(spins.len(), EXACT_SPIN_CAP)?;
    Ok(enumerate(model, class, &spins).log_partition)
}

/// Posterior class probabilities `Z_l / Σ Z`.
pub fn exact_class_probabilities(model: &SpinModel) -> Result<Vec<f64>, DecodeError> {
    let logs: Vec<f64> =
        (0..model.num_classes()).map(|l| exact_log_partition(model, l)).collect::<Result<_, _>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    Ok(logs.iter().map(|l| (l - max).exp() / total).collect())
}

/// Exact minimum error weight within one class.
pub fn exact_min_weight(model: &SpinModel, class: usize) -> Result<usize, DecodeError> {
    let spins = independent_spins(model);
    check_cap(spins.len(), EXACT_SPIN_CAP)?;
    Ok(model.weight_from_energy(enumerate(model, class, &spins).min_energy))
}

/// Settings shared by the registered decoders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderSettings {
    pub pa: PaConfig,
    pub exact_cap: usize,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        Self { pa: PaConfig::default(), exact_cap: EXACT_SPIN_CAP }
    }
}

pub type DecoderConstructor = fn(&DecoderSettings) -> Box<dyn Decoder>;

pub fn decoders() -> Registry<DecoderConstructor> {
    let mut r: Registry<DecoderConstructor> = Registry::new("decoder");
    r.register("pa", |s| Box::new(PaDecoder { config: s.pa }));
    r.register("exact", |s| Box::new(ExactDecoder { cap: s.exact_cap }));
    r.register("sa", |s| Box::new(SaDecoder { config: s.pa }));
    r
}

pub fn build_decoder(name: &str, settings: &DecoderSettings) -> Result<Box<dyn Decoder>, DecodeError> {
    let ctor = *decoders().get(name)?;
    Ok(ctor(settings))
}
