//! Properties of the syndrome-conditioned Ising models for all three noise models.

use colorpa::gf2::{kernel_basis, rank, BitMatrix, BitVec};
use colorpa::lattice::build_488_triangular;
use colorpa::noise::{bitflip_beta, build_noise_model, depolarizing_beta, NoiseModel, NoiseParams};
use colorpa::rng::stream;
use colorpa::spin_model::WeightRule;
use proptest::prelude::*;

const MODELS: [&str; 3] = ["bitflip", "depolarizing", "phenomenological"];

fn noise(name: &str, d: usize, p: f64) -> Box<dyn NoiseModel> {
    build_noise_model(name, &build_488_triangular(d).unwrap(), &NoiseParams::new(p)).unwrap()
}

fn spins_from_seed(n: usize, seed: u64) -> Vec<i8> {
    use rand::Rng;
    let mut rng = stream(&[seed, 77]);
    (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spin_flips_are_gauge_moves(model_idx in 0usize..3, d in prop::sample::select(vec![3usize, 5]), seed in any::<u64>()) {
        let noise = noise(MODELS[model_idx], d, 0.1);
        let sample = noise.sample(&mut stream(&[seed]));
        let syndrome = noise.syndrome(&sample);
        let model = noise.spin_model(&syndrome, None).unwrap();
        let s = model.structure().clone();
        let mut spins = spins_from_seed(model.num_spins(), seed);
        for class in 0..model.num_classes() {
            let e = model.mechanisms(class, &spins);
            prop_assert_eq!(s.syndrome(&e), syndrome.clone());
            prop_assert_eq!(s.class_of(&e).unwrap(), class);
            let k = (seed as usize) % model.num_spins();
            let before = model.energy(class, &spins);
            let delta = model.delta_energy(class, &spins, k);
            spins[k] = -spins[k];
            let flipped = model.mechanisms(class, &spins);
            prop_assert_eq!(s.syndrome(&flipped), syndrome.clone());
            prop_assert_eq!(s.class_of(&flipped).unwrap(), class);
            prop_assert_eq!(model.energy(class, &spins) - before, delta);
            spins[k] = -spins[k];
        }
    }

    #[test]
    fn energy_matches_error_weight(model_idx in 0usize..3, seed in any::<u64>()) {
        let noise = noise(MODELS[model_idx], 5, 0.1);
        let sample = noise.sample(&mut stream(&[seed, 1]));
        let model = noise.spin_model(&noise.syndrome(&sample), None).unwrap();
        let spins = spins_from_seed(model.num_spins(), seed);
        for class in 0..model.num_classes() {
            let e = model.mechanisms(class, &spins);
            let energy = model.energy(class, &spins);
            match model.structure().weight_rule() {
                WeightRule::Mechanisms => {
                    prop_assert_eq!(energy, 2 * e.count_ones() as i64 - model.num_terms() as i64);
                }
                WeightRule::PauliPairs { qubits } => {
                    let errored = (0..qubits).filter(|&i| e.get(i) || e.get(qubits + i)).count();
                    prop_assert_eq!(energy, -3 * qubits as i64 + 4 * errored as i64);
                }
            }
            prop_assert_eq!(model.weight_from_energy(energy), model.error_weight(class, &spins));
        }
    }

    #[test]
    fn syndromes_are_linear(model_idx in 0usize..3, a in any::<u64>(), b in any::<u64>()) {
        let noise = noise(MODELS[model_idx], 5, 0.2);
        let ea = noise.sample(&mut stream(&[a]));
        let eb = noise.sample(&mut stream(&[b]));
        let s = noise.structure();
        prop_assert_eq!(s.syndrome(&ea.mechanisms.xor(&eb.mechanisms)), s.syndrome(&ea.mechanisms).xor(&s.syndrome(&eb.mechanisms)));
    }

    #[test]
    fn generators_do_not_change_class(model_idx in 0usize..3, seed in any::<u64>(), g in any::<prop::sample::Index>()) {
        let noise = noise(MODELS[model_idx], 5, 0.15);
        let sample = noise.sample(&mut stream(&[seed]));
        let s = noise.structure();
        let moved = sample.mechanisms.xor(&s.generator_vector(g.index(s.num_spins())));
        prop_assert_eq!(s.class_of(&moved).unwrap(), noise.true_class(&sample).unwrap());
        prop_assert_eq!(s.syndrome(&moved), noise.syndrome(&sample));
    }

    #[test]
    fn beta_is_decreasing_and_antisymmetric(p in 0.001f64..0.499, dp in 0.0001f64..0.1) {
        prop_assert!(bitflip_beta(p) > bitflip_beta((p + dp).min(0.5)) || p + dp >= 0.5);
        prop_assert!((bitflip_beta(p) + bitflip_beta(1.0 - p)).abs() < 1e-12);
        prop_assert!(depolarizing_beta(p) > depolarizing_beta(p + dp));
    }
}

#[test]
fn beta_targets_at_thresholds() {
    assert!((bitflip_beta(0.1081) - 0.5 * (0.8919f64 / 0.1081).ln()).abs() < 1e-15);
    assert!((bitflip_beta(0.1081) - 1.0552).abs() < 1e-4);
    assert!((depolarizing_beta(0.1875) - 0.6412).abs() < 5e-5);
    assert_eq!(bitflip_beta(0.5), 0.0);
    assert!(depolarizing_beta(0.75).abs() < 1e-15);
}

/// Boltzmann weight of a lone depolarizing qubit matches the channel: each Pauli costs `e^{-4β}`.
#[test]
fn depolarizing_single_qubit_weights() {
    let p: f64 = 0.1875;
    let beta = depolarizing_beta(p);
    let per_qubit = |sx: i8, sz: i8| -(sx as i64 + sz as i64 + (sx * sz) as i64);
    assert_eq!(per_qubit(1, 1), -3);
    for (sx, sz) in [(-1, 1), (1, -1), (-1, -1)] {
        assert_eq!(per_qubit(sx, sz), 1);
        let ratio = (-beta * (per_qubit(sx, sz) - per_qubit(1, 1)) as f64).exp();
        assert!((ratio - (p / 3.0) / (1.0 - p)).abs() < 1e-12);
    }
}

/// The gauge generators together with the logical representatives span the whole kernel of
/// the check matrix.
#[test]
fn generators_span_the_kernel() {
    for (name, d) in [("bitflip", 3), ("bitflip", 5), ("depolarizing", 3), ("phenomenological", 3)] {
        let noise = noise(name, d, 0.1);
        let s = noise.structure();
        let check = s.check();
        let kernel_dim = kernel_basis(check).len();
        let mut rows: Vec<BitVec> = (0..s.num_spins()).map(|k| s.generator_vector(k)).collect();
        let generator_rank = rank(&BitMatrix::from_rows(check.cols(), &rows));
        for class in 1..s.num_classes() {
            rows.push(s.logical_rep(class));
        }
        let full = rank(&BitMatrix::from_rows(check.cols(), &rows));
        let logical_bits = s.num_classes().trailing_zeros() as usize;
        assert_eq!(full, kernel_dim, "{name} d={d}");
        assert_eq!(generator_rank + logical_bits, kernel_dim, "{name} d={d}");
    }
}

#[test]
fn trivial_syndrome_ground_state() {
    for name in MODELS {
        let noise = noise(name, 3, 0.1);
        let zero = BitVec::zeros(noise.structure().check().rows());
        let model = noise.spin_model(&zero, None).unwrap();
        let up = vec![1i8; model.num_spins()];
        assert!(model.couplings(0).iter().all(|&j| j == 1));
        assert_eq!(model.energy(0, &up), -(model.num_terms() as i64));
        assert_eq!(model.error_weight(0, &up), 0);
    }
}
