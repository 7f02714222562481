//! Syndrome-conditioned Ising models.
//!
//! A noise model is described by a set of binary error mechanisms, a check matrix mapping
//! mechanisms to syndrome bits, and a set of gauge generators (mechanism subsets with trivial
//! syndrome). Each generator becomes one Ising spin; `σ_k = -1` means generator `k` is applied.
//! Given a syndrome `S` and a class `l`, the error implied by a spin configuration is
//!
//! ```text
//! e(σ, l) = D(S) + L(l) + Σ_{k : σ_k = -1} G_k
//! ```
//!
//! Every term of the energy is a product of mechanism signs `Π_m (1 - 2 e_m)` over a small
//! mechanism set, which in spin language reads `J_t(l) Π_{k ∈ Q_t} σ_k`. The spin set `Q_t` is
//! the set of generators that toggle an odd number of the term's mechanisms.

use std::sync::Arc;

use serde::Serialize;

use crate::gf2::{BitMatrix, BitVec, Infeasible, SolverHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Qubit,
    XPart,
    ZPart,
    Product,
    DataError,
    MeasurementError,
}

#[derive(Debug, Clone, Serialize)]
pub struct Term {
    pub kind: TermKind,
    pub mechanisms: Vec<usize>,
    pub spins: Vec<usize>,
}

/// How the error weight is read off the mechanism vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightRule {
    /// Number of set mechanisms; `H = 2w - M`.
    Mechanisms,
    /// Mechanisms `i` and `i + qubits` are the X and Z parts of one Pauli; weight counts
    /// qubits with either part set. `H = 4w - 3N`.
    PauliPairs { qubits: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("syndrome has length {got}, expected {expected}")]
    SyndromeLength { got: usize, expected: usize },
    #[error("syndrome is not produced by any error: {0}")]
    Infeasible(#[from] Infeasible),
}

/// Everything about the Ising mapping that does not depend on the syndrome.
#[derive(Debug)]
pub struct GaugeStructure {
    num_mechanisms: usize,
    check: BitMatrix,
    solver: SolverHandle,
    generators: Vec<Vec<usize>>,
    terms: Vec<Term>,
    logical_reps: Vec<BitVec>,
    detectors: Vec<BitVec>,
    weight_rule: WeightRule,
    term_offsets: Vec<u32>,
    term_spins: Vec<u32>,
    spin_offsets: Vec<u32>,
    spin_terms: Vec<u32>,
}

impl GaugeStructure {
    /// `logical_reps[b]` and `detectors[b]` describe class bit `b`; the representative of class
    /// `l` is the sum of `logical_reps[b]` over the set bits of `l`.
    ///
    /// Panics if a generator or logical representative has nonzero syndrome, or if the
    /// detectors do not distinguish the representatives; these are construction bugs.
    pub fn new(
        check: BitMatrix,
        generators: Vec<Vec<usize>>,
        terms: Vec<(TermKind, Vec<usize>)>,
        logical_reps: Vec<BitVec>,
        detectors: Vec<BitVec>,
        weight_rule: WeightRule,
    ) -> Self {
        let m = check.cols();
        assert_eq!(logical_reps.len(), detectors.len());
        let gen_vecs: Vec<BitVec> = generators.iter().map(|g| BitVec::from_indices(m, g.iter().copied())).collect();
        for (k, g) in gen_vecs.iter().enumerate() {
            assert!(check.mul_vec(g).is_zero(), "generator {k} has nonzero syndrome");
            for (b, det) in detectors.iter().enumerate() {
                assert!(!g.dot(det), "generator {k} flips class bit {b}");
            }
        }
        for (b, rep) in logical_reps.iter().enumerate() {
            assert!(check.mul_vec(rep).is_zero(), "logical {b} has nonzero syndrome");
            for (c, det) in detectors.iter().enumerate() {
                assert_eq!(rep.dot(det), b == c, "logical {b} against detector {c}");
            }
        }

        let mut mech_gens: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (k, g) in generators.iter().enumerate() {
            for &mech in g {
                mech_gens[mech].push(k);
            }
        }
        let n = generators.len();
        let mut parity = vec![false; n];
        let terms: Vec<Term> = terms
            .into_iter()
            .map(|(kind, mechanisms)| {
                let mut touched = Vec::new();
                for &mech in &mechanisms {
                    for &k in &mech_gens[mech] {
                        if !parity[k] {
                            touched.push(k);
                        }
                        parity[k] = !parity[k];
                    }
                }
                touched.sort_unstable();
                touched.dedup();
                let spins: Vec<usize> = touched.iter().copied().filter(|&k| parity[k]).collect();
                for k in touched {
                    parity[k] = false;
                }
                Term { kind, mechanisms, spins }
            })
            .collect();

        let mut term_offsets = vec![0u32];
        let mut term_spins = Vec::new();
        let mut spin_lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (t, term) in terms.iter().enumerate() {
            for &k in &term.spins {
                term_spins.push(k as u32);
                spin_lists[k].push(t as u32);
            }
            term_offsets.push(term_spins.len() as u32);
        }
        let mut spin_offsets = vec![0u32];
        let mut spin_terms = Vec::new();
        for list in spin_lists {
            spin_terms.extend(list);
            spin_offsets.push(spin_terms.len() as u32);
        }

        let solver = SolverHandle::new(&check);
        Self {
            num_mechanisms: m,
            check,
            solver,
            generators,
            terms,
            logical_reps,
            detectors,
            weight_rule,
            term_offsets,
            term_spins,
            spin_offsets,
            spin_terms,
        }
    }

    pub fn num_mechanisms(&self) -> usize {
        self.num_mechanisms
    }

    pub fn num_spins(&self) -> usize {
        self.generators.len()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn num_classes(&self) -> usize {
        1 << self.logical_reps.len()
    }

    pub fn check(&self) -> &BitMatrix {
        &self.check
    }

    pub fn generators(&self) -> &[Vec<usize>] {
        &self.generators
    }

    pub fn generator_vector(&self, k: usize) -> BitVec {
        BitVec::from_indices(self.num_mechanisms, self.generators[k].iter().copied())
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn weight_rule(&self) -> WeightRule {
        self.weight_rule
    }

    pub fn detectors(&self) -> &[BitVec] {
        &self.detectors
    }

    pub fn syndrome(&self, mechanisms: &BitVec) -> BitVec {
        self.check.mul_vec(mechanisms)
    }

    /// Deterministic particular solution of `check · x = syndrome`.
    pub fn destabilizer(&self, syndrome: &BitVec) -> Result<BitVec, MappingError> {
        if syndrome.len() != self.check.rows() {
            return Err(MappingError::SyndromeLength { got: syndrome.len(), expected: self.check.rows() });
        }
        Ok(self.solver.solve(syndrome)?)
    }

    pub fn logical_rep(&self, class: usize) -> BitVec {
        let mut v = BitVec::zeros(self.num_mechanisms);
        for (b, rep) in self.logical_reps.iter().enumerate() {
            if class >> b & 1 == 1 {
                v.xor_assign(rep);
            }
        }
        v
    }

    /// Class label of a syndrome-free mechanism vector.
    pub fn class_of_residual(&self, residual: &BitVec) -> usize {
        self.detectors.iter().enumerate().map(|(b, det)| (residual.dot(det) as usize) << b).sum()
    }

    /// Class of an error relative to the destabilizer of its own syndrome.
    pub fn class_of(&self, mechanisms: &BitVec) -> Result<usize, MappingError> {
        let d = self.destabilizer(&self.syndrome(mechanisms))?;
        Ok(self.class_of_residual(&mechanisms.xor(&d)))
    }

    pub fn weight(&self, mechanisms: &BitVec) -> usize {
        match self.weight_rule {
            WeightRule::Mechanisms => mechanisms.count_ones(),
            WeightRule::PauliPairs { qubits } => {
                (0..qubits).filter(|&i| mechanisms.get(i) || mechanisms.get(i + qubits)).count()
            }
        }
    }

    #[inline]
    pub fn term_spins(&self, t: usize) -> &[u32] {
        &self.term_spins[self.term_offsets[t] as usize..self.term_offsets[t + 1] as usize]
    }

    #[inline]
    pub fn spin_terms(&self, k: usize) -> &[u32] {
        &self.spin_terms[self.spin_offsets[k] as usize..self.spin_offsets[k + 1] as usize]
    }

    /// CSR arrays `(offsets, term indices)` of the spin-to-term adjacency.
    pub fn spin_adjacency(&self) -> (&[u32], &[u32]) {
        (&self.spin_offsets, &self.spin_terms)
    }

    pub fn max_spin_degree(&self) -> usize {
        self.spin_offsets.windows(2).map(|w| (w[1] - w[0]) as usize).max().unwrap_or(0)
    }
}

/// Ising problem for one syndrome, covering every class.
#[derive(Debug, Clone)]
pub struct SpinModel {
    structure: Arc<GaugeStructure>,
    syndrome: BitVec,
    destabilizer: BitVec,
    /// Class-major coupling signs, `signs[class * num_terms + t]`.
    signs: Vec<i8>,
    beta: f64,
}

impl SpinModel {
    pub fn new(structure: Arc<GaugeStructure>, syndrome: &BitVec, beta: f64) -> Result<Self, MappingError> {
        let destabilizer = structure.destabilizer(syndrome)?;
        Ok(Self::from_destabilizer(structure, syndrome.clone(), destabilizer, beta))
    }

    fn from_destabilizer(structure: Arc<GaugeStructure>, syndrome: BitVec, destabilizer: BitVec, beta: f64) -> Self {
        let mut signs = Vec::with_capacity(structure.num_classes() * structure.num_terms());
        for class in 0..structure.num_classes() {
            let base = destabilizer.xor(&structure.logical_rep(class));
            for term in &structure.terms {
                let odd = term.mechanisms.iter().filter(|&&m| base.get(m)).count() % 2 == 1;
                signs.push(if odd { -1 } else { 1 });
            }
        }
        Self { structure, syndrome, destabilizer, signs, beta }
    }

    /// Same syndrome at a different inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..self.clone() }
    }

    /// Relabels classes so that class `l` of the result is class `l ^ shift` of `self`.
    pub fn shift_classes(&self, shift: usize) -> Self {
        let d = self.destabilizer.xor(&self.structure.logical_rep(shift));
        Self::from_destabilizer(self.structure.clone(), self.syndrome.clone(), d, self.beta)
    }

    pub fn structure(&self) -> &Arc<GaugeStructure> {
        &self.structure
    }

    pub fn num_spins(&self) -> usize {
        self.structure.num_spins()
    }

    pub fn num_terms(&self) -> usize {
        self.structure.num_terms()
    }

    pub fn num_classes(&self) -> usize {
        self.structure.num_classes()
    }

    pub fn beta_target(&self) -> f64 {
        self.beta
    }

    pub fn syndrome(&self) -> &BitVec {
        &self.syndrome
    }

    pub fn destabilizer(&self) -> &BitVec {
        &self.destabilizer
    }

    /// Coupling signs `J_t(l)` for every term.
    pub fn couplings(&self, class: usize) -> &[i8] {
        let t = self.num_terms();
        &self.signs[class * t..(class + 1) * t]
    }

    /// Signed term values `J_t(l) Π σ` for a spin configuration (entries ±1).
    pub fn term_values(&self, class: usize, spins: &[i8]) -> Vec<i8> {
        assert_eq!(spins.len(), self.num_spins());
        self.couplings(class)
            .iter()
            .enumerate()
            .map(|(t, &j)| self.structure.term_spins(t).iter().fold(j, |v, &k| v * spins[k as usize]))
            .collect()
    }

    pub fn energy(&self, class: usize, spins: &[i8]) -> i64 {
        -self.term_values(class, spins).iter().map(|&v| v as i64).sum::<i64>()
    }

    /// Energy change from flipping spin `k`, touching only the terms that contain it.
    pub fn delta_energy(&self, class: usize, spins: &[i8], k: usize) -> i64 {
        let j = self.couplings(class);
        let s: i64 = self
            .structure
            .spin_terms(k)
            .iter()
            .map(|&t| {
                let t = t as usize;
                self.structure.term_spins(t).iter().fold(j[t], |v, &q| v * spins[q as usize]) as i64
            })
            .sum();
        2 * s
    }

    /// Mechanism vector `e(σ, l)`.
    pub fn mechanisms(&self, class: usize, spins: &[i8]) -> BitVec {
        let mut e = self.destabilizer.xor(&self.structure.logical_rep(class));
        for (k, &s) in spins.iter().enumerate() {
            if s < 0 {
                for &m in &self.structure.generators[k] {
                    e.toggle(m);
                }
            }
        }
        e
    }

    pub fn error_weight(&self, class: usize, spins: &[i8]) -> usize {
        self.structure.weight(&self.mechanisms(class, spins))
    }

    /// Error weight of any configuration with energy `energy`.
    pub fn weight_from_energy(&self, energy: i64) -> usize {
        let m = self.num_terms() as i64;
        match self.structure.weight_rule {
            WeightRule::Mechanisms => ((energy + m) / 2) as usize,
            WeightRule::PauliPairs { qubits } => ((energy + 3 * qubits as i64) / 4) as usize,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let classes: Vec<Vec<i8>> = (0..self.num_classes()).map(|c| self.couplings(c).to_vec()).collect();
        serde_json::json!({
            "num_spins": self.num_spins(),
            "num_classes": self.num_classes(),
            "beta_target": self.beta,
            "destabilizer": self.destabilizer.ones().collect::<Vec<_>>(),
            "terms": self.structure.terms,
            "couplings": classes,
        })
    }
}
