use hybridboot_core::corruptor::{
    corrupt_minibatch, dropout_apply, hybrid_apply, partner_index, sample_level, sample_mask, CorruptionSpec, Mask,
    MaskStructure, Scheme,
};
use hybridboot_core::stats::{ks_critical_1pct, ks_uniform};
use hybridboot_core::{Rng, Tensor};
use proptest::prelude::*;

fn batch(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed, 77);
    Tensor::from_fn(shape, |_| (rng.below(7) as f64) - 3.0).unwrap()
}

/// Every coordinate of every output example equals that coordinate of some
/// input example.
fn supported(input: &Tensor, output: &Tensor) -> bool {
    let n = input.example_len();
    (0..output.batch_len()).all(|i| {
        (0..n).all(|k| (0..input.batch_len()).any(|j| input.example(j)[k] == output.example(i)[k]))
    })
}

fn structure() -> impl Strategy<Value = MaskStructure> {
    prop_oneof![
        Just(MaskStructure::Elementwise),
        Just(MaskStructure::SpatialGrid),
        Just(MaskStructure::Channel),
    ]
}

proptest! {
    #[test]
    fn hybrid_output_is_supported(seed in any::<u64>(), m in 2usize..6, u in 0.0f64..=1.0, ordinal in 0usize..4, s in structure()) {
        let x = batch(&[m, 3, 4, 4], seed);
        let mut rng = Rng::new(seed, 3);
        let out = corrupt_minibatch(&x, &CorruptionSpec::hybrid(u).with_structure(s), &mut rng, ordinal).unwrap();
        prop_assert!(supported(&x, &out.output));
    }

    #[test]
    fn hybrid_of_an_example_with_itself_is_identity(seed in any::<u64>(), p in 0.0f64..=1.0) {
        let x = batch(&[1, 2, 3, 3], seed);
        let mask = sample_mask(&mut Rng::new(seed, 1), &[1, 2, 3, 3], p, MaskStructure::Elementwise).unwrap();
        prop_assert_eq!(hybrid_apply(&x, &x, &mask).unwrap(), x);
    }

    #[test]
    fn structured_masks_broadcast(seed in any::<u64>(), p in 0.0f64..=1.0, c in 1usize..5, h in 1usize..6, w in 1usize..6) {
        let mut rng = Rng::new(seed, 5);
        let grid = sample_mask(&mut rng, &[c, h, w], p, MaskStructure::SpatialGrid).unwrap();
        let chan = sample_mask(&mut rng, &[c, h, w], p, MaskStructure::Channel).unwrap();
        let hw = h * w;
        for ch in 0..c {
            for s in 0..hw {
                prop_assert_eq!(grid.bits()[ch * hw + s], grid.bits()[s]);
                prop_assert_eq!(chan.bits()[ch * hw + s], chan.bits()[ch * hw]);
            }
        }
        prop_assert!(grid.is_consistent() && chan.is_consistent());
    }

    #[test]
    fn spatial_grid_changes_the_same_positions_in_every_channel(seed in any::<u64>()) {
        let x = batch(&[2, 3, 4, 4], seed);
        let spec = CorruptionSpec::hybrid(0.9).with_structure(MaskStructure::SpatialGrid);
        let out = corrupt_minibatch(&x, &spec, &mut Rng::new(seed, 8), 0).unwrap().output;
        for i in 0..2 {
            let mask = |ch: usize| -> Vec<bool> {
                (0..16).map(|s| out.example(i)[ch * 16 + s] != x.example(i)[ch * 16 + s]).collect()
            };
            // A swapped site may coincidentally hold equal values, so only
            // check that differences never appear outside the shared pattern.
            let union: Vec<bool> = (0..16).map(|s| (0..3).any(|ch| mask(ch)[s])).collect();
            let rec = corrupt_minibatch(&x, &spec, &mut Rng::new(seed, 8), 0).unwrap().record;
            for (s, &swapped) in union.iter().enumerate() {
                if swapped {
                    prop_assert!(!rec.masks[i].bits()[s]);
                }
            }
        }
    }

    #[test]
    fn zero_level_is_bit_identical(seed in any::<u64>(), hybrid in any::<bool>()) {
        let x = batch(&[3, 5], seed);
        let spec = if hybrid { CorruptionSpec::hybrid(0.0) } else { CorruptionSpec::dropout(0.0) };
        let out = corrupt_minibatch(&x, &spec, &mut Rng::new(seed, 0), 2).unwrap();
        prop_assert_eq!(out.output, x);
    }

    #[test]
    fn full_swap_takes_the_shifted_partner(seed in any::<u64>(), m in 2usize..7, ordinal in 0usize..5) {
        let x = batch(&[m, 4], seed);
        let spec = CorruptionSpec::hybrid(1.0).with_fixed_p(1.0);
        let out = corrupt_minibatch(&x, &spec, &mut Rng::new(seed, 0), ordinal).unwrap().output;
        for i in 0..m {
            prop_assert_eq!(out.example(i), x.example((i + ordinal + 1) % m));
        }
    }

    #[test]
    fn levels_respect_the_bound(seed in any::<u64>(), u in 0.0f64..=1.0) {
        let mut rng = Rng::new(seed, 0);
        for _ in 0..100 {
            let p = sample_level(&mut rng, &CorruptionSpec::hybrid(u));
            prop_assert!(p >= 0.0 && (p < u || u == 0.0));
        }
    }
}

#[test]
fn operator_arithmetic() {
    let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let partner = Tensor::new(vec![1, 4], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
    let m = |bits: [bool; 4]| Mask::from_bits(&[1, 4], bits.to_vec()).unwrap();
    assert_eq!(dropout_apply(&x, &m([true, true, false, false]), 0.5, true).unwrap().data(), &[2.0, 4.0, 0.0, 0.0]);
    assert_eq!(dropout_apply(&x, &m([true, false, true, false]), 0.5, false).unwrap().data(), &[1.0, 0.0, 3.0, 0.0]);
    assert_eq!(dropout_apply(&x, &Mask::ones(&[1, 4]), 0.0, true).unwrap(), x);
    assert_eq!(hybrid_apply(&x, &partner, &m([true, false, true, false])).unwrap().data(), &[1.0, 6.0, 3.0, 8.0]);
    assert_eq!(hybrid_apply(&x, &partner, &Mask::ones(&[1, 4])).unwrap(), x);
    assert_eq!(hybrid_apply(&x, &partner, &Mask::zeros(&[1, 4])).unwrap(), partner);
}

#[test]
fn partner_shift() {
    assert_eq!(partner_index(0, 0, 4).unwrap(), 1);
    assert_eq!(partner_index(0, 1, 4).unwrap(), 2);
    assert_eq!(partner_index(3, 0, 4).unwrap(), 0);
    assert!(partner_index(0, 0, 1).is_err());
}

#[test]
fn degenerate_levels() {
    let mut rng = Rng::new(1, 1);
    assert_eq!(sample_level(&mut rng, &CorruptionSpec::hybrid(0.0)), 0.0);
    for _ in 0..10 {
        assert_eq!(sample_level(&mut rng, &CorruptionSpec::hybrid(0.9).with_fixed_p(0.5)), 0.5);
    }
    assert!(sample_mask(&mut rng, &[3, 5], 0.0, MaskStructure::Elementwise).unwrap().bits().iter().all(|&b| b));
    assert!(sample_mask(&mut rng, &[3, 5], 1.0, MaskStructure::Elementwise).unwrap().bits().iter().all(|&b| !b));
}

#[test]
fn level_mean_for_u_045() {
    let mut rng = Rng::new(9, 0);
    let spec = CorruptionSpec::hybrid(0.45);
    let mean = (0..100_000).map(|_| sample_level(&mut rng, &spec)).sum::<f64>() / 1e5;
    assert!((mean - 0.225).abs() <= 0.002, "{mean}");
}

#[test]
fn spatial_grid_zero_fraction_on_16x28x28() {
    let mut rng = Rng::new(4, 0);
    let mut zeros = 0usize;
    for _ in 0..1000 {
        let mask = sample_mask(&mut rng, &[16, 28, 28], 0.45, MaskStructure::SpatialGrid).unwrap();
        let first = &mask.bits()[..784];
        for c in 1..16 {
            assert_eq!(&mask.bits()[c * 784..(c + 1) * 784], first);
        }
        zeros += first.iter().filter(|&&b| !b).count();
    }
    let frac = zeros as f64 / (1000.0 * 784.0);
    assert!((frac - 0.45).abs() <= 0.01, "{frac}");
}

#[test]
fn per_example_levels_pass_ks_over_an_epoch() {
    // 20 minibatches of 50, levels from three corruption layers.
    for u in [0.45, 0.65] {
        let spec = CorruptionSpec::hybrid(u);
        let x = batch(&[50, 8], 1);
        let mut levels = Vec::new();
        for b in 0..20u64 {
            let rng = Rng::new(31, 3).derive(&[0, b]);
            for layer in 0..3u64 {
                let out = corrupt_minibatch(&x, &spec, &mut rng.derive(&[layer]), layer as usize).unwrap();
                levels.extend_from_slice(out.levels());
            }
        }
        assert!(ks_uniform(&levels, u) < ks_critical_1pct(levels.len()), "u = {u}");
    }
}

#[test]
fn dropout_scales_survivors_and_keeps_support_of_zero() {
    let x = batch(&[4, 6], 2);
    let out = corrupt_minibatch(&x, &CorruptionSpec::dropout(0.5).with_fixed_p(0.5), &mut Rng::new(2, 0), 0).unwrap();
    for i in 0..4 {
        for k in 0..6 {
            let v = out.output.example(i)[k];
            assert!(v == 0.0 || v == 2.0 * x.example(i)[k]);
        }
    }
    assert_eq!(out.record.scheme, Scheme::Dropout);
}

#[test]
fn hybrid_backward_routes_swapped_gradient_to_partner() {
    // Gradient of sum(w ⊙ out) w.r.t. the input, checked coordinate-wise.
    let x = batch(&[3, 5], 6);
    let out = corrupt_minibatch(&x, &CorruptionSpec::hybrid(0.7), &mut Rng::new(6, 0), 1).unwrap();
    let w = Tensor::from_fn(&[3, 5], |i| i as f64 + 1.0).unwrap();
    let g = out.record.backward(&w);
    for j in 0..3 {
        for k in 0..5 {
            let mut bumped = x.clone().into_data();
            bumped[j * 5 + k] += 1.0;
            let bumped = Tensor::new(vec![3, 5], bumped).unwrap();
            let after = out.record.apply(&bumped).unwrap();
            let delta: f64 = after.data().iter().zip(out.output.data()).zip(w.data()).map(|((a, b), w)| (a - b) * w).sum();
            assert_eq!(g.data()[j * 5 + k], delta);
        }
    }
}
