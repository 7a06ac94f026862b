use proptest::prelude::*;

use dicoss::correlation::{LaplacianModel, MixtureWeights};
use dicoss::entropy::{entropy_decode, entropy_encode, SymbolAlphabet};
use dicoss::quantization::{dequantize_midpoint, quantize, reconstruct_multihypothesis, to_bitplanes, QuantizerSpec};
use dicoss::ramis::{prox_weighted_nl1, SiSet, WeightState};
use dicoss::rate_control::rough_si_estimate;
use dicoss::sensing::make_matrix;
use dicoss::slepian_wolf::{build_ladder, sw_encode};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantization_error_is_at_most_half_a_step(
        y in prop::collection::vec(-50.0f64..50.0, 1..200),
        bits in 1u8..=10,
    ) {
        let spec = QuantizerSpec::fit(&y, bits).unwrap();
        let q = quantize(&y, &spec);
        let back = dequantize_midpoint(&q);
        for (a, b) in y.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 0.5 * spec.step() * (1.0 + 1e-9));
        }
        prop_assert_eq!(to_bitplanes(&q).recompose(), q.indices().to_vec());
    }

    #[test]
    fn reconstruction_stays_in_its_interval(
        lo in -5.0f64..5.0,
        width in 1e-3f64..2.0,
        centers in prop::collection::vec((-10.0f64..10.0, 0.01f64..100.0), 1..4),
    ) {
        let sis: Vec<(f64, LaplacianModel)> =
            centers.iter().map(|&(c, a)| (c, LaplacianModel::new(a))).collect();
        let weights = MixtureWeights::uniform(sis.len());
        let interval = dicoss::quantization::QuantInterval { lower: lo, upper: lo + width };
        let v = reconstruct_multihypothesis(interval, &sis, &weights).unwrap();
        prop_assert!(v >= lo && v <= lo + width);
    }

    #[test]
    fn entropy_coder_roundtrips(symbols in prop::collection::vec(0u32..16, 0..400)) {
        let alphabet = SymbolAlphabet::for_bit_depth(4);
        let bs = entropy_encode(&symbols, alphabet).unwrap();
        prop_assert_eq!(entropy_decode(&bs, symbols.len(), alphabet).unwrap(), symbols);
    }

    #[test]
    fn syndromes_are_linear(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let ladder = build_ladder(128, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<u8> = (0..128).map(|_| rng.random_range(0..2u8)).collect();
        let b: Vec<u8> = (0..128).map(|_| rng.random_range(0..2u8)).collect();
        let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let (sa, sb, sab) = (
            sw_encode(&a, &ladder).unwrap().syndromes,
            sw_encode(&b, &ladder).unwrap().syndromes,
            sw_encode(&ab, &ladder).unwrap().syndromes,
        );
        let xor: Vec<u8> = sa.iter().zip(&sb).map(|(x, y)| x ^ y).collect();
        prop_assert_eq!(xor, sab);
    }

    #[test]
    fn prox_with_zero_weights_is_identity(v in prop::collection::vec(-5.0f64..5.0, 1..20), gamma in 0.0f64..3.0) {
        let n = v.len();
        let si = SiSet::with_signals(n, [vec![1.0; n]]).unwrap();
        let weights = WeightState { w: vec![vec![0.0; n]; 2], beta: vec![0.5, 0.5] };
        prop_assert_eq!(prox_weighted_nl1(&v, &si, &weights, gamma), v);
    }

    #[test]
    fn rough_estimate_is_linear(seed in 0u64..1000, scale in -3.0f64..3.0) {
        let n = 40;
        let phi_si = make_matrix(10, n, seed).unwrap();
        let phi = make_matrix(20, n, seed + 1).unwrap();
        let y1: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37 + seed as f64).sin()).collect();
        let y2: Vec<f64> = (0..10).map(|i| (i as f64 * 1.3).cos()).collect();
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + scale * b).collect();
        let (r1, r2, rc) = (
            rough_si_estimate(&y1, &phi_si, &phi).unwrap(),
            rough_si_estimate(&y2, &phi_si, &phi).unwrap(),
            rough_si_estimate(&combo, &phi_si, &phi).unwrap(),
        );
        for i in 0..20 {
            prop_assert!((r1[i] + scale * r2[i] - rc[i]).abs() < 1e-8);
        }
    }
}
