//! Population annealing over a [`SpinModel`], plus a resampling-free annealing mode.
//!
//! Replicas are packed 64 to a block, one bit per replica in each spin word and term word (a set
//! bit is `-1`). Flipping spin `k` changes the energy by `2 Σ_{t ∋ k} v_t`, so a proposal only
//! needs the count of violated adjacent terms, which is computed bit-sliced for all 64 lanes at
//! once. Blocks advance in parallel between resampling barriers. Random streams are keyed by
//! (seed, class, block, step), so results do not depend on the thread count.

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, StreamRng};
use crate::spin_model::SpinModel;

const TAG_INIT: u64 = 0;
const TAG_SWEEP: u64 = 1;
const TAG_RESAMPLE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `β_t = β_target · t / N_T`.
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaConfig {
    pub replicas: usize,
    pub steps: usize,
    pub sweeps: usize,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for PaConfig {
    fn default() -> Self {
        Self { replicas: 1000, steps: 100, sweeps: 200, schedule: Schedule::Linear, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("replica count must be at least 1")]
    Replicas,
    #[error("temperature step count must be at least 1")]
    Steps,
}

impl PaConfig {
    pub fn new(replicas: usize, steps: usize, sweeps: usize, seed: u64) -> Self {
        Self { replicas, steps, sweeps, schedule: Schedule::Linear, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replicas == 0 {
            return Err(ConfigError::Replicas);
        }
        if self.steps == 0 {
            return Err(ConfigError::Steps);
        }
        Ok(())
    }

    /// Inverse temperatures `β_0 = 0, ..., β_{N_T} = β_target`.
    pub fn betas(&self, beta_target: f64) -> Vec<f64> {
        match self.schedule {
            Schedule::Linear => (0..=self.steps)
                .map(|t| if t == self.steps { beta_target } else { beta_target * t as f64 / self.steps as f64 })
                .collect(),
        }
    }
}

/// Outcome of one resampling step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleStep {
    pub ln_q_over_r: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub step: usize,
    pub beta: f64,
    pub mean_energy: f64,
    pub min_energy: i64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaResult {
    /// Estimate of `ln Z(β_target)`, i.e. `-β F`.
    pub minus_beta_f: f64,
    pub min_energy_seen: i64,
    pub steps: Vec<StepStats>,
}

impl PaResult {
    pub fn ess_per_step(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.ess).collect()
    }

    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.steps {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Replicas per block: lane `l` of block `b` is replica `64·b + l`.
const LANES: usize = 64;

/// Bits needed to count up to `max` violated terms.
fn count_planes(max: usize) -> usize {
    (usize::BITS - max.leading_zeros()) as usize
}

/// Multi-spin-coded Metropolis sweeps. Spin and term words hold one bit per replica: a set
/// spin bit means `σ = -1`, a set term bit means the term's signed value is `-1`.
///
/// For spin `k` in `d` terms of which `c` are violated, `ΔE = 2(d - 2c)`. Lanes with
/// `2c ≥ d` flip outright; the rest compare a private uniform `U` against `exp(-2β(d - 2c))`.
/// `U` is revealed one bit-plane at a time, most significant first, and each plane is one
/// 64-bit draw shared by the lanes that are still undecided.
struct Sweeper<'a> {
    offsets: &'a [u32],
    adjacency: &'a [u32],
    /// `exp(-2β j)` as a 64-bit binary fraction; `None` when it rounds to 1.
    thresholds: Vec<Option<u64>>,
    planes: usize,
}

impl<'a> Sweeper<'a> {
    fn new(model: &'a SpinModel, beta: f64) -> Self {
        let structure = model.structure();
        let (offsets, adjacency) = structure.spin_adjacency();
        let max_degree = structure.max_spin_degree();
        let thresholds = (0..=max_degree)
            .map(|j| {
                let p = (-2.0 * beta * j as f64).exp();
                if p >= 1.0 {
                    None
                } else {
                    Some((p * 18_446_744_073_709_551_616.0) as u64)
                }
            })
            .collect();
        Self { offsets, adjacency, thresholds, planes: count_planes(max_degree) }
    }

    fn sweep(&self, spins: &mut [u64], values: &mut [u64], rng: &mut StreamRng) {
        match self.planes {
            0..=3 => self.sweep_with::<3>(spins, values, rng),
            4 => self.sweep_with::<4>(spins, values, rng),
            5 => self.sweep_with::<5>(spins, values, rng),
            _ => self.sweep_with::<8>(spins, values, rng),
        }
    }

    fn sweep_with<const PLANES: usize>(&self, spins: &mut [u64], values: &mut [u64], rng: &mut StreamRng) {
        let mut groups: Vec<(u64, u64)> = Vec::with_capacity(16);
        for k in 0..spins.len() {
            let adj = &self.adjacency[self.offsets[k] as usize..self.offsets[k + 1] as usize];
            let d = adj.len();
            let mut count = [0u64; PLANES];
            for &t in adj {
                let mut carry = values[t as usize];
                for plane in count.iter_mut() {
                    let next = *plane & carry;
                    *plane ^= carry;
                    carry = next;
                }
            }

            let mut uphill = 0u64;
            let mut accept = 0u64;
            groups.clear();
            for c in 0..d.div_ceil(2) {
                let mut lanes = !0u64;
                for (b, plane) in count.iter().enumerate() {
                    lanes &= if c >> b & 1 == 1 { *plane } else { !*plane };
                }
                if lanes == 0 {
                    continue;
                }
                uphill |= lanes;
                match self.thresholds[d - 2 * c] {
                    None => accept |= lanes,
                    Some(threshold) => groups.push((lanes, threshold)),
                }
            }
            accept |= !uphill;

            let mut pending = groups.iter().fold(0, |acc, g| acc | g.0);
            let mut bit = 64;
            while pending != 0 && bit > 0 {
                bit -= 1;
                let u = rng.next_u64();
                pending = 0;
                for (undecided, threshold) in groups.iter_mut() {
                    if threshold.wrapping_shr(bit) & 1 == 1 {
                        accept |= *undecided & !u;
                        *undecided &= u;
                    } else {
                        *undecided &= !u;
                    }
                    pending |= *undecided;
                }
            }

            spins[k] ^= accept;
            for &t in adj {
                values[t as usize] ^= accept;
            }
        }
    }
}

/// Energies `2·(violated terms) - T` of the first `active` lanes of a block.
fn lane_energies(values: &[u64], n_terms: usize, active: usize, out: &mut [i64]) {
    let mut violated = [0i64; LANES];
    for &word in &values[..n_terms] {
        let mut w = word;
        while w != 0 {
            violated[w.trailing_zeros() as usize] += 1;
            w &= w - 1;
        }
    }
    for l in 0..active {
        out[l] = 2 * violated[l] - n_terms as i64;
    }
}

/// Replica population for one (model, class) pair, stored in blocks of 64 replicas.
#[derive(Debug, Clone)]
pub struct Population {
    n_spins: usize,
    n_terms: usize,
    class: usize,
    seed: u64,
    /// Block-major spin words, `spins[b·stride + k]`, stride `max(n, 1)`.
    spins: Vec<u64>,
    values: Vec<u64>,
    energies: Vec<i64>,
    min_energy: Vec<i64>,
    /// Lowest energy among replicas removed by resampling.
    dropped_min: i64,
    ln_z_acc: f64,
}

impl Population {
    /// `replicas` uniformly random spin configurations (the `β = 0` distribution).
    pub fn init(model: &SpinModel, class: usize, replicas: usize, seed: u64) -> Self {
        let n = model.num_spins();
        let t = model.num_terms();
        let (ns, nt) = (n.max(1), t.max(1));
        let blocks = replicas.div_ceil(LANES);
        let mut spins = vec![0u64; blocks * ns];
        let mut values = vec![0u64; blocks * nt];
        let mut energies = vec![0i64; replicas];
        let structure = model.structure();
        let couplings = model.couplings(class);
        spins
            .par_chunks_mut(ns)
            .zip(values.par_chunks_mut(nt))
            .zip(energies.par_chunks_mut(LANES))
            .enumerate()
            .for_each(|(b, ((s, v), e))| {
                let mut rng = stream(&[seed, class as u64, b as u64, TAG_INIT]);
                for word in s.iter_mut().take(n) {
                    *word = rng.next_u64();
                }
                for (j, word) in v.iter_mut().take(t).enumerate() {
                    let base = if couplings[j] < 0 { !0u64 } else { 0 };
                    *word = structure.term_spins(j).iter().fold(base, |acc, &k| acc ^ s[k as usize]);
                }
                let active = e.len();
                lane_energies(v, t, active, e);
            });
        let min_energy = energies.clone();
        Self { n_spins: n, n_terms: t, class, seed, spins, values, energies, min_energy, dropped_min: i64::MAX, ln_z_acc: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Spin configuration of replica `r` as ±1 values.
    pub fn spins(&self, r: usize) -> Vec<i8> {
        let base = (r / LANES) * self.n_spins.max(1);
        let lane = r % LANES;
        (0..self.n_spins).map(|k| if self.spins[base + k] >> lane & 1 == 1 { -1 } else { 1 }).collect()
    }

    pub fn energies(&self) -> &[i64] {
        &self.energies
    }

    /// Lowest energy any replica has been seen at.
    pub fn min_energy_seen(&self) -> i64 {
        self.min_energy.iter().copied().min().unwrap_or(0).min(self.dropped_min)
    }

    /// Accumulated `Σ ln(Q_t / R)`.
    pub fn ln_z_acc(&self) -> f64 {
        self.ln_z_acc
    }

    /// `sweeps` Metropolis sweeps at `beta` on every replica, in ascending spin order. `step`
    /// keys the random streams. With `track_min` the minimum energy is refreshed after every
    /// sweep instead of only at the end.
    pub fn metropolis(&mut self, model: &SpinModel, beta: f64, sweeps: usize, step: usize, track_min: bool) {
        if sweeps == 0 || self.n_spins == 0 {
            return;
        }
        let sweeper = Sweeper::new(model, beta);
        let (ns, nt, t) = (self.n_spins, self.n_terms.max(1), self.n_terms);
        let (seed, class) = (self.seed, self.class as u64);
        self.spins
            .par_chunks_mut(ns)
            .zip(self.values.par_chunks_mut(nt))
            .zip(self.energies.par_chunks_mut(LANES))
            .zip(self.min_energy.par_chunks_mut(LANES))
            .enumerate()
            .for_each(|(b, (((s, v), e), m))| {
                let mut rng = stream(&[seed, class, b as u64, step as u64, TAG_SWEEP]);
                let active = e.len();
                for sweep in 0..sweeps {
                    sweeper.sweep(s, v, &mut rng);
                    if track_min || sweep + 1 == sweeps {
                        lane_energies(v, t, active, e);
                        for (lowest, &energy) in m.iter_mut().zip(e.iter()) {
                            *lowest = (*lowest).min(energy);
                        }
                    }
                }
            });
    }

    /// Systematic resampling with Boltzmann weights `exp(-Δβ E_i)`, using one draw from the
    /// stream keyed by `step`. Adds `ln(Q/R)` to the accumulator and returns it.
    pub fn resample_systematic(&mut self, delta_beta: f64, step: usize) -> ResampleStep {
        let mut rng = stream(&[self.seed, self.class as u64, step as u64, TAG_RESAMPLE]);
        let u = rng.next_u32() as f64 / 4_294_967_296.0;
        self.resample_with_offset(delta_beta, u)
    }

    /// Systematic resampling for a given offset `u ∈ [0, 1)`: replica `i` is selected for each
    /// `k` with `C_{i-1} ≤ u + k < C_i`, where `C` are the cumulative weights scaled to sum to `R`.
    pub fn resample_with_offset(&mut self, delta_beta: f64, u: f64) -> ResampleStep {
        let r = self.len();
        let e_min = *self.energies.iter().min().expect("empty population");
        let weights: Vec<f64> = self.energies.iter().map(|&e| (-delta_beta * (e - e_min) as f64).exp()).collect();
        let q: f64 = weights.iter().sum();
        let q2: f64 = weights.iter().map(|w| w * w).sum();
        let step = ResampleStep {
            ln_q_over_r: -delta_beta * e_min as f64 + (q / r as f64).ln(),
            ess: q * q / q2,
        };
        self.ln_z_acc += step.ln_q_over_r;

        let scale = r as f64 / q;
        let mut selected = Vec::with_capacity(r);
        let mut cum = 0.0;
        for (i, w) in weights.iter().enumerate() {
            cum += w * scale;
            while selected.len() < r && u + (selected.len() as f64) < cum {
                selected.push(i);
            }
        }
        // Rounding can leave the last cumulative weight a hair below R.
        while selected.len() < r {
            selected.push(r - 1);
        }
        if selected.iter().enumerate().all(|(k, &i)| k == i) {
            return step;
        }
        self.dropped_min = self.min_energy_seen();
        self.spins = gather_lanes(&self.spins, self.n_spins.max(1), &selected);
        self.values = gather_lanes(&self.values, self.n_terms.max(1), &selected);
        self.energies = selected.iter().map(|&i| self.energies[i]).collect();
        self.min_energy = selected.iter().map(|&i| self.min_energy[i]).collect();
        step
    }

    #[cfg(test)]
    fn term_values(&self, r: usize) -> Vec<i8> {
        let base = (r / LANES) * self.n_terms.max(1);
        let lane = r % LANES;
        (0..self.n_terms).map(|j| if self.values[base + j] >> lane & 1 == 1 { -1 } else { 1 }).collect()
    }
}

/// New population whose replica `j` is old replica `selected[j]`.
fn gather_lanes(words: &[u64], stride: usize, selected: &[usize]) -> Vec<u64> {
    let mut out = vec![0u64; words.len()];
    for (j, &i) in selected.iter().enumerate() {
        let (src, src_lane) = ((i / LANES) * stride, i % LANES);
        let (dst, dst_lane) = ((j / LANES) * stride, j % LANES);
        for k in 0..stride {
            out[dst + k] |= (words[src + k] >> src_lane & 1) << dst_lane;
        }
    }
    out
}

fn step_stats(pop: &Population, step: usize, beta: f64, ess: f64) -> StepStats {
    let e = pop.energies();
    StepStats {
        step,
        beta,
        mean_energy: e.iter().sum::<i64>() as f64 / e.len() as f64,
        min_energy: e.iter().copied().min().unwrap_or(0),
        ess,
    }
}

/// Population annealing from `β = 0` to the model's target. At each step the population is
/// resampled to the new temperature, then swept `N_S` times there.
/// Returns `Σ_t ln(Q_t/R) + n ln 2`.
pub fn run_pa(model: &SpinModel, class: usize, config: &PaConfig) -> PaResult {
    let betas = config.betas(model.beta_target());
    let mut pop = Population::init(model, class, config.replicas, config.seed);
    let mut steps = Vec::with_capacity(config.steps);
    for t in 0..config.steps {
        let rs = pop.resample_systematic(betas[t + 1] - betas[t], t);
        pop.metropolis(model, betas[t + 1], config.sweeps, t, false);
        steps.push(step_stats(&pop, t + 1, betas[t + 1], rs.ess));
    }
    PaResult {
        minus_beta_f: pop.ln_z_acc() + model.num_spins() as f64 * std::f64::consts::LN_2,
        min_energy_seen: pop.min_energy_seen(),
        steps,
    }
}

/// Same schedule and sweeps as [`run_pa`] without resampling; returns the lowest error weight
/// any replica visited.
pub fn run_sa_min_weight(model: &SpinModel, class: usize, config: &PaConfig) -> usize {
    let betas = config.betas(model.beta_target());
    let mut pop = Population::init(model, class, config.replicas, config.seed);
    for t in 0..config.steps {
        pop.metropolis(model, betas[t + 1], config.sweeps, t, true);
    }
    model.weight_from_energy(pop.min_energy_seen())
}
