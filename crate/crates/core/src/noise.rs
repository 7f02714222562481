//! Noise models: sampling, syndromes, true classes and the matching Ising structure.
//!
//! Mechanism layouts:
//! - bit-flip: bit `i` is an X error on qubit `i`;
//! - depolarizing: bits `0..N` are the X parts and `N..2N` the Z parts (Y sets both);
//! - phenomenological: data error `(i, t)` at `(t-1)·N + i` and measurement error `(k, t)` at
//!   `N·T + (t-1)·F + k`, for noisy rounds `t = 1..=T`.
//!
//! Phenomenological detection event `(k, t)` sits at `(t-1)·F + k` for `t = 1..=T+1`. Round
//! `T+1` is a perfect readout of the final state, so it carries no measurement error.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::gf2::{BitMatrix, BitVec};
use crate::lattice::ColorCodeLattice;
use crate::registry::Registry;
use crate::spin_model::{GaugeStructure, MappingError, SpinModel, TermKind, WeightRule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorSample {
    pub model: &'static str,
    pub mechanisms: BitVec,
}

impl ErrorSample {
    /// One JSON line with the sample, its syndrome and its class.
    pub fn to_json_line(&self, syndrome: &BitVec, class: usize) -> String {
        serde_json::json!({
            "model": self.model,
            "mechanisms": self.mechanisms.ones().collect::<Vec<_>>(),
            "syndrome": syndrome.ones().collect::<Vec<_>>(),
            "class": class,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseParams {
    pub p: f64,
    /// Measurement error rate; defaults to `p`.
    pub q: Option<f64>,
    /// Noisy rounds; defaults to the code distance.
    pub rounds: Option<usize>,
}

impl NoiseParams {
    pub fn new(p: f64) -> Self {
        Self { p, q: None, rounds: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NoiseError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("need at least one noisy round")]
    Rounds,
    #[error("measurement rate q={q} differs from p={p}; only p = q is mapped to an Ising model")]
    UnequalRates { p: f64, q: f64 },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Unknown(#[from] crate::registry::UnknownName),
}

fn check_probability(p: f64) -> Result<f64, NoiseError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(NoiseError::Probability(p))
    }
}

/// Inverse temperature with `exp(-2β) = p / (1 - p)`.
pub fn bitflip_beta(p: f64) -> f64 {
    0.5 * ((1.0 - p) / p).ln()
}

/// Inverse temperature with `exp(-4β) = (p/3) / (1 - p)`.
pub fn depolarizing_beta(p: f64) -> f64 {
    -0.25 * ((p / 3.0) / (1.0 - p)).ln()
}

pub trait NoiseModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn structure(&self) -> &Arc<GaugeStructure>;

    /// Physical error rate the samples are drawn at.
    fn error_rate(&self) -> f64;

    fn sample(&self, rng: &mut dyn RngCore) -> ErrorSample;

    /// Inverse temperature matching the channel at rate `p`.
    fn beta_at(&self, p: f64) -> f64;

    /// Conventions recorded in output metadata.
    fn conventions(&self) -> serde_json::Value {
        serde_json::json!({ "model": self.name() })
    }

    fn syndrome(&self, sample: &ErrorSample) -> BitVec {
        self.structure().syndrome(&sample.mechanisms)
    }

    fn true_class(&self, sample: &ErrorSample) -> Result<usize, MappingError> {
        self.structure().class_of(&sample.mechanisms)
    }

    /// Ising model for `syndrome`, decoded at `decode_rate` or at the sampling rate.
    fn spin_model(&self, syndrome: &BitVec, decode_rate: Option<f64>) -> Result<SpinModel, MappingError> {
        let beta = self.beta_at(decode_rate.unwrap_or(self.error_rate()));
        SpinModel::new(self.structure().clone(), syndrome, beta)
    }
}

fn face_supports(lattice: &ColorCodeLattice) -> Vec<Vec<usize>> {
    lattice.faces.iter().map(|f| f.qubits.clone()).collect()
}

pub struct BitFlip {
    p: f64,
    structure: Arc<GaugeStructure>,
}

impl BitFlip {
    pub fn new(lattice: &ColorCodeLattice, p: f64) -> Result<Self, NoiseError> {
        Ok(Self { p: check_probability(p)?, structure: Arc::new(Self::structure_for(lattice)) })
    }

    /// One spin per face, one term per qubit.
    pub fn structure_for(lattice: &ColorCodeLattice) -> GaugeStructure {
        let n = lattice.num_qubits;
        let faces = face_supports(lattice);
        let check = BitMatrix::from_row_supports(n, &faces);
        let terms = (0..n).map(|i| (TermKind::Qubit, vec![i])).collect();
        let logical = lattice.logical_vector();
        GaugeStructure::new(check, faces, terms, vec![logical.clone()], vec![logical], WeightRule::Mechanisms)
    }
}

impl NoiseModel for BitFlip {
    fn name(&self) -> &'static str {
        "bitflip"
    }

    fn structure(&self) -> &Arc<GaugeStructure> {
        &self.structure
    }

    fn error_rate(&self) -> f64 {
        self.p
    }

    fn sample(&self, rng: &mut dyn RngCore) -> ErrorSample {
        let n = self.structure.num_mechanisms();
        let bits: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < self.p).collect();
        ErrorSample { model: self.name(), mechanisms: BitVec::from_bools(&bits) }
    }

    fn beta_at(&self, p: f64) -> f64 {
        bitflip_beta(p)
    }
}

pub struct Depolarizing {
    p: f64,
    qubits: usize,
    structure: Arc<GaugeStructure>,
}

impl Depolarizing {
    pub fn new(lattice: &ColorCodeLattice, p: f64) -> Result<Self, NoiseError> {
        Ok(Self {
            p: check_probability(p)?,
            qubits: lattice.num_qubits,
            structure: Arc::new(Self::structure_for(lattice)),
        })
    }

    /// Spins `0..F` apply X-type faces to the X parts, spins `F..2F` apply Z-type faces to the
    /// Z parts. Each qubit contributes an X term, a Z term and their product.
    pub fn structure_for(lattice: &ColorCodeLattice) -> GaugeStructure {
        let n = lattice.num_qubits;
        let faces = face_supports(lattice);
        let shifted: Vec<Vec<usize>> = faces.iter().map(|f| f.iter().map(|&q| q + n).collect()).collect();
        let mut rows = faces.clone();
        rows.extend(shifted.iter().cloned());
        let check = BitMatrix::from_row_supports(2 * n, &rows);
        let generators = rows;
        let mut terms = Vec::with_capacity(3 * n);
        for i in 0..n {
            terms.push((TermKind::XPart, vec![i]));
            terms.push((TermKind::ZPart, vec![i + n]));
            terms.push((TermKind::Product, vec![i, i + n]));
        }
        let x_logical = BitVec::from_indices(2 * n, lattice.logical_support.iter().copied());
        let z_logical = BitVec::from_indices(2 * n, lattice.logical_support.iter().map(|&q| q + n));
        GaugeStructure::new(
            check,
            generators,
            terms,
            vec![x_logical.clone(), z_logical.clone()],
            vec![x_logical, z_logical],
            WeightRule::PauliPairs { qubits: n },
        )
    }
}

impl NoiseModel for Depolarizing {
    fn name(&self) -> &'static str {
        "depolarizing"
    }

    fn structure(&self) -> &Arc<GaugeStructure> {
        &self.structure
    }

    fn error_rate(&self) -> f64 {
        self.p
    }

    fn sample(&self, rng: &mut dyn RngCore) -> ErrorSample {
        let n = self.qubits;
        let mut bits = BitVec::zeros(2 * n);
        for i in 0..n {
            if rng.gen::<f64>() < self.p {
                match rng.gen_range(0..3u8) {
                    0 => bits.set(i, true),
                    1 => {
                        bits.set(i, true);
                        bits.set(i + n, true);
                    }
                    _ => bits.set(i + n, true),
                }
            }
        }
        ErrorSample { model: self.name(), mechanisms: bits }
    }

    fn beta_at(&self, p: f64) -> f64 {
        depolarizing_beta(p)
    }
}

pub struct Phenomenological {
    p: f64,
    q: f64,
    rounds: usize,
    qubits: usize,
    faces: usize,
    structure: Arc<GaugeStructure>,
}

impl Phenomenological {
    pub fn new(lattice: &ColorCodeLattice, p: f64, q: f64, rounds: usize) -> Result<Self, NoiseError> {
        check_probability(p)?;
        check_probability(q)?;
        if rounds == 0 {
            return Err(NoiseError::Rounds);
        }
        Ok(Self {
            p,
            q,
            rounds,
            qubits: lattice.num_qubits,
            faces: lattice.num_faces(),
            structure: Arc::new(Self::structure_for(lattice, rounds)),
        })
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Spatial generators apply face `k` in round `t`; cube generators move a data error on
    /// qubit `i` from round `t` to `t+1` while flipping the measurements in between.
    pub fn structure_for(lattice: &ColorCodeLattice, rounds: usize) -> GaugeStructure {
        let n = lattice.num_qubits;
        let f = lattice.num_faces();
        let t_max = rounds;
        let data = |i: usize, t: usize| (t - 1) * n + i;
        let meas = |k: usize, t: usize| n * t_max + (t - 1) * f + k;
        let mechanisms = n * t_max + f * t_max;
        let qubit_faces = lattice.qubit_faces();

        let mut rows = Vec::with_capacity(f * (t_max + 1));
        for t in 1..=t_max + 1 {
            for (k, face) in lattice.faces.iter().enumerate() {
                let mut row = Vec::new();
                if t <= t_max {
                    row.extend(face.qubits.iter().map(|&i| data(i, t)));
                    row.push(meas(k, t));
                }
                if t >= 2 {
                    row.push(meas(k, t - 1));
                }
                rows.push(row);
            }
        }
        let check = BitMatrix::from_row_supports(mechanisms, &rows);

        let mut generators = Vec::new();
        for t in 1..=t_max {
            for face in &lattice.faces {
                generators.push(face.qubits.iter().map(|&i| data(i, t)).collect());
            }
        }
        for t in 1..t_max {
            for i in 0..n {
                let mut g = vec![data(i, t), data(i, t + 1)];
                g.extend(qubit_faces[i].iter().map(|&k| meas(k, t)));
                generators.push(g);
            }
        }

        let mut terms: Vec<(TermKind, Vec<usize>)> = Vec::with_capacity(mechanisms);
        terms.extend((0..n * t_max).map(|m| (TermKind::DataError, vec![m])));
        terms.extend((n * t_max..mechanisms).map(|m| (TermKind::MeasurementError, vec![m])));

        let rep = BitVec::from_indices(mechanisms, lattice.logical_support.iter().map(|&i| data(i, t_max)));
        let detector = BitVec::from_indices(
            mechanisms,
            (1..=t_max).flat_map(|t| lattice.logical_support.iter().map(move |&i| data(i, t))),
        );
        GaugeStructure::new(check, generators, terms, vec![rep], vec![detector], WeightRule::Mechanisms)
    }
}

impl NoiseModel for Phenomenological {
    fn name(&self) -> &'static str {
        "phenomenological"
    }

    fn structure(&self) -> &Arc<GaugeStructure> {
        &self.structure
    }

    fn error_rate(&self) -> f64 {
        self.p
    }

    fn sample(&self, rng: &mut dyn RngCore) -> ErrorSample {
        let data = self.qubits * self.rounds;
        let meas = self.faces * self.rounds;
        let mut bits = Vec::with_capacity(data + meas);
        bits.extend((0..data).map(|_| rng.gen::<f64>() < self.p));
        bits.extend((0..meas).map(|_| rng.gen::<f64>() < self.q));
        ErrorSample { model: self.name(), mechanisms: BitVec::from_bools(&bits) }
    }

    fn beta_at(&self, p: f64) -> f64 {
        bitflip_beta(p)
    }

    fn conventions(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.name(),
            "noisy_rounds": self.rounds,
            "q": self.q,
            "time_boundary": "perfect final readout round",
        })
    }
}

pub type NoiseConstructor = fn(&ColorCodeLattice, &NoiseParams) -> Result<Box<dyn NoiseModel>, NoiseError>;

/// Registry of the built-in noise models.
pub fn noise_models() -> Registry<NoiseConstructor> {
    let mut r: Registry<NoiseConstructor> = Registry::new("noise model");
    r.register("bitflip", |lat, params| Ok(Box::new(BitFlip::new(lat, params.p)?)));
    r.register("depolarizing", |lat, params| Ok(Box::new(Depolarizing::new(lat, params.p)?)));
    r.register("phenomenological", |lat, params| {
        let q = params.q.unwrap_or(params.p);
        if q != params.p {
            return Err(NoiseError::UnequalRates { p: params.p, q });
        }
        let rounds = params.rounds.unwrap_or(lat.distance);
        Ok(Box::new(Phenomenological::new(lat, params.p, q, rounds)?))
    });
    r
}

pub fn build_noise_model(
    name: &str,
    lattice: &ColorCodeLattice,
    params: &NoiseParams,
) -> Result<Box<dyn NoiseModel>, NoiseError> {
    let ctor = *noise_models().get(name)?;
    ctor(lattice, params)
}
