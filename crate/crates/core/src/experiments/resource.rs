//! Finite-resource study: how much a reduced PA budget raises the logical error rate.
//!
//! The estimate models the budget decoder's `βΔF` as the reference value plus Gaussian noise
//! whose variance is measured from repeated decodes. An instance the reference gets right
//! then flips with probability `Φ(-|βΔF|/σ)`, and so does one it gets wrong, which gives
//! `Δp_L = (1 - p_L) P(s→f) - p_L P(f→s)`. The direct value decodes the same instances with
//! both decoders and averages the paired failure difference.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{build_decoder, Decoder, DecoderSettings, PaDecoder};
use crate::experiments::campaign::{instance_seed, sample_instance, with_workers, CampaignError};
use crate::experiments::metadata::{engine_conventions, Metadata};
use crate::experiments::stats::{mean_stderr, mean_variance, normal_cdf};
use crate::lattice::build_488_triangular;
use crate::noise::{build_noise_model, NoiseModel, NoiseParams};
use crate::pa::PaConfig;
use crate::rng::derive_seed;

const TAG_VARIANCE: u64 = 0x5641_5249;
const TAG_REPEAT: u64 = 0x5245_5045;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub replicas: usize,
    pub sweeps: usize,
}

impl std::str::FromStr for Budget {
    type Err = String;

    /// `RxN_S`, e.g. `15x3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, n) = s.split_once('x').ok_or_else(|| format!("budget '{s}' is not of the form RxN_S"))?;
        let replicas = r.trim().parse().map_err(|_| format!("bad replica count in '{s}'"))?;
        let sweeps = n.trim().parse().map_err(|_| format!("bad sweep count in '{s}'"))?;
        Ok(Self { replicas, sweeps })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub model: String,
    pub d: usize,
    pub p: f64,
    /// Temperature steps shared by every budget.
    pub steps: usize,
    pub budgets: Vec<Budget>,
    /// Instances for the histograms and the direct comparison.
    pub instances: usize,
    /// Instances and repeats per instance for `Var(βΔF)`.
    pub variance_instances: usize,
    pub repeats: usize,
    /// Registered decoder standing in for the optimal one.
    pub reference: String,
    pub reference_settings: ReferenceSettings,
    pub bins: usize,
    /// Replace the measured variance by zero.
    pub zero_variance: bool,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSettings {
    pub pa: PaConfig,
    pub exact_cap: usize,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        let s = DecoderSettings::default();
        Self { pa: s.pa, exact_cap: s.exact_cap }
    }
}

impl ResourceSpec {
    pub fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("spec serializes")
    }
}

/// Fixed-width histogram; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], lower: f64, upper: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let width = if upper > lower { (upper - lower) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|k| lower + width * k as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = (((v - lower) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetResult {
    pub replicas: usize,
    pub sweeps: usize,
    pub steps: usize,
    /// Mean over instances of the sample variance of `βΔF` across repeats.
    pub var_beta_df: f64,
    pub var_beta_df_stderr: f64,
    pub delta_pl_est: f64,
    pub delta_pl_est_stderr: f64,
    pub delta_pl_sim: f64,
    pub delta_pl_sim_stderr: f64,
    pub p_l_budget: f64,
    /// `(est - sim) / sqrt(se_est² + se_sim²)`.
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceStudy {
    pub metadata: Metadata,
    pub model: String,
    pub d: usize,
    pub p: f64,
    pub instances: usize,
    pub reference: String,
    pub p_l_reference: f64,
    /// `|βΔF|` of the reference decoder, split by whether it decoded correctly.
    pub hist_success: Histogram,
    pub hist_fail: Histogram,
    pub budgets: Vec<BudgetResult>,
    pub walltime_s: f64,
}

/// Per-instance contributions to `Δp_L`: `+Φ(-|x|/σ)` for reference successes and
/// `-Φ(-|x|/σ)` for failures. With `σ = 0` nothing flips.
pub fn delta_pl_terms(abs_df_success: &[f64], abs_df_fail: &[f64], var: f64) -> Vec<f64> {
    let sigma = var.max(0.0).sqrt();
    let flip = |x: f64| if sigma == 0.0 { 0.0 } else { normal_cdf(-x.abs() / sigma) };
    abs_df_success.iter().map(|&x| flip(x)).chain(abs_df_fail.iter().map(|&x| -flip(x))).collect()
}

/// `Δp_L = (1 - p_L) P(s→f) - p_L P(f→s)` and its standard error.
pub fn estimate_delta_pl(abs_df_success: &[f64], abs_df_fail: &[f64], var: f64) -> (f64, f64) {
    mean_stderr(&delta_pl_terms(abs_df_success, abs_df_fail, var))
}

/// `βF_1 - βF_0` from per-class `-βF` scores.
fn beta_df(scores: &[f64]) -> f64 {
    scores[0] - scores[1]
}

/// Mean over instances of the sample variance of `βΔF` across `repeats` independent decodes,
/// with the standard error of that mean over instances.
pub fn estimate_df_variance(
    noise: &dyn NoiseModel,
    decoder: &dyn Decoder,
    d: usize,
    instances: usize,
    repeats: usize,
    seed: u64,
) -> Result<(f64, f64), CampaignError> {
    let per_instance = (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = sample_instance(noise, instance_seed(derive_seed(&[seed, TAG_VARIANCE]), d, noise.error_rate(), i), None)?;
            let values = (0..repeats)
                .map(|j| Ok(beta_df(&decoder.decode(&inst.model, derive_seed(&[inst.seed, TAG_REPEAT, j as u64]))?.scores)))
                .collect::<Result<Vec<f64>, CampaignError>>()?;
            Ok(mean_variance(&values).1)
        })
        .collect::<Result<Vec<f64>, CampaignError>>()?;
    Ok(mean_stderr(&per_instance))
}

struct Decoded {
    reference_success: bool,
    abs_df: f64,
    budget_success: Vec<bool>,
}

pub fn run_resource_study(spec: &ResourceSpec) -> Result<ResourceStudy, CampaignError> {
    if spec.instances == 0 || spec.budgets.is_empty() {
        return Err(CampaignError::NoInstances);
    }
    let start = Instant::now();
    let lattice = build_488_triangular(spec.d)?;
    let noise = build_noise_model(&spec.model, &lattice, &NoiseParams::new(spec.p))?;
    if noise.structure().num_classes() != 2 {
        return Err(CampaignError::Classes(noise.structure().num_classes()));
    }
    let reference = build_decoder(
        &spec.reference,
        &DecoderSettings { pa: spec.reference_settings.pa, exact_cap: spec.reference_settings.exact_cap },
    )?;
    let budget_decoders: Vec<PaDecoder> = spec
        .budgets
        .iter()
        .map(|b| PaDecoder { config: PaConfig::new(b.replicas, spec.steps, b.sweeps, 0) })
        .collect();

    let decoded = with_workers(spec.workers, || {
        (0..spec.instances)
            .into_par_iter()
            .map(|i| {
                let inst = sample_instance(noise.as_ref(), instance_seed(spec.seed, spec.d, spec.p, i), None)?;
                let reference_out = reference.decode(&inst.model, inst.decode_seed())?.with_truth(inst.true_class);
                let budget_success = budget_decoders
                    .iter()
                    .map(|dec| Ok(dec.decode(&inst.model, inst.decode_seed())?.chosen_class == inst.true_class))
                    .collect::<Result<Vec<bool>, CampaignError>>()?;
                Ok(Decoded {
                    reference_success: reference_out.success() == Some(true),
                    abs_df: beta_df(&reference_out.scores).abs(),
                    budget_success,
                })
            })
            .collect::<Result<Vec<Decoded>, CampaignError>>()
    })??;

    let success: Vec<f64> = decoded.iter().filter(|x| x.reference_success).map(|x| x.abs_df).collect();
    let fail: Vec<f64> = decoded.iter().filter(|x| !x.reference_success).map(|x| x.abs_df).collect();
    let upper = decoded.iter().map(|x| x.abs_df).fold(0.0, f64::max);
    let n = spec.instances as f64;
    let p_l_reference = fail.len() as f64 / n;

    let mut budgets = Vec::with_capacity(spec.budgets.len());
    for (k, (budget, decoder)) in spec.budgets.iter().zip(&budget_decoders).enumerate() {
        let (var, var_se) = if spec.zero_variance {
            (0.0, 0.0)
        } else {
            with_workers(spec.workers, || {
                estimate_df_variance(noise.as_ref(), decoder, spec.d, spec.variance_instances, spec.repeats, spec.seed)
            })??
        };
        let (est, hist_se) = estimate_delta_pl(&success, &fail, var);
        // The variance is itself measured; carry its error through by central difference.
        let var_effect = if var_se > 0.0 {
            let up = estimate_delta_pl(&success, &fail, var + var_se).0;
            let down = estimate_delta_pl(&success, &fail, (var - var_se).max(0.0)).0;
            (up - down) / 2.0
        } else {
            0.0
        };
        let est_se = (hist_se * hist_se + var_effect * var_effect).sqrt();
        let paired: Vec<f64> = decoded
            .iter()
            .map(|x| (!x.budget_success[k]) as u8 as f64 - (!x.reference_success) as u8 as f64)
            .collect();
        let (sim, sim_se) = mean_stderr(&paired);
        let combined = (est_se * est_se + sim_se * sim_se).sqrt();
        budgets.push(BudgetResult {
            replicas: budget.replicas,
            sweeps: budget.sweeps,
            steps: spec.steps,
            var_beta_df: var,
            var_beta_df_stderr: var_se,
            delta_pl_est: est,
            delta_pl_est_stderr: est_se,
            delta_pl_sim: sim,
            delta_pl_sim_stderr: sim_se,
            p_l_budget: decoded.iter().filter(|x| !x.budget_success[k]).count() as f64 / n,
            z_score: if combined > 0.0 { (est - sim) / combined } else { 0.0 },
        });
    }

    let mut conventions = engine_conventions();
    conventions["noise"] = noise.conventions();
    conventions["error_law"] = "Gaussian on betaDF with measured variance".into();
    Ok(ResourceStudy {
        metadata: Metadata::new(&spec.config_json(), conventions),
        model: spec.model.clone(),
        d: spec.d,
        p: spec.p,
        instances: spec.instances,
        reference: spec.reference.clone(),
        p_l_reference,
        hist_success: Histogram::new(&success, 0.0, upper, spec.bins),
        hist_fail: Histogram::new(&fail, 0.0, upper, spec.bins),
        budgets,
        walltime_s: start.elapsed().as_secs_f64(),
    })
}
