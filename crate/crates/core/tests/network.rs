use hybridboot_core::corruptor::{CorruptionSpec, MaskStructure};
use hybridboot_core::data::Dataset;
use hybridboot_core::nn::{
    arch, evaluate, gradient_check, sgd_momentum_step, train, Gradients, LayerSpec, Mode, Model, Params, TrainConfig,
};
use hybridboot_core::{Rng, Tensor};
use proptest::prelude::*;

fn inputs(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed, 40);
    Tensor::from_fn(shape, |_| rng.uniform() * 2.0 - 1.0).unwrap()
}

fn labels(m: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = Rng::new(seed, 41);
    (0..m).map(|_| rng.below(k)).collect()
}

fn tiny_conv(corrupt: bool) -> Model {
    let c = |s: CorruptionSpec| if corrupt { vec![LayerSpec::Corruption(s)] } else { vec![] };
    let mut layers = c(CorruptionSpec::hybrid(0.45));
    layers.extend([LayerSpec::conv(4, 3, 1, 0), LayerSpec::Relu]);
    layers.extend(c(CorruptionSpec::hybrid(0.45).with_structure(MaskStructure::SpatialGrid)));
    layers.extend(c(CorruptionSpec::dropout(0.3)));
    layers.extend([LayerSpec::Flatten, LayerSpec::Dense { units: 16 }, LayerSpec::SoftmaxOutput]);
    Model::new(&[2, 5, 5], layers, 17).unwrap()
}

fn dataset(n: usize, shape: &[usize], k: usize, seed: u64) -> Dataset {
    let mut full = vec![n];
    full.extend_from_slice(shape);
    Dataset::new(inputs(&full, seed), labels(n, k, seed), k).unwrap()
}

#[test]
fn identity_dense_layer_passes_inputs_through_as_logits() {
    let mut model = Model::new(&[3], vec![LayerSpec::Dense { units: 3 }, LayerSpec::SoftmaxOutput], 0).unwrap();
    model.set_params(0, Tensor::eye(3), Tensor::zeros(&[3])).unwrap();
    let x = inputs(&[4, 3], 1);
    let pass = model.forward_eval(&x, &[0, 1, 2, 0]).unwrap();
    assert_eq!(pass.activations[1], x);
}

#[test]
fn eval_mode_ignores_corruption_layers() {
    let with = tiny_conv(true);
    let without = with.without_corruption();
    let x = inputs(&[6, 2, 5, 5], 3);
    let y = labels(6, 16, 3);
    let a = with.forward(&x, &y, Mode::Eval, &Rng::new(0, 0)).unwrap();
    let b = without.forward_eval(&x, &y).unwrap();
    assert_eq!(a.probabilities(), b.probabilities());
    assert_eq!(a.loss, b.loss);
}

#[test]
fn uniform_logits_cost_ln_k() {
    let mut model = Model::new(&[5], vec![LayerSpec::Dense { units: 10 }, LayerSpec::SoftmaxOutput], 0).unwrap();
    model.set_params(0, Tensor::zeros(&[10, 5]), Tensor::zeros(&[10])).unwrap();
    let pass = model.forward_eval(&inputs(&[3, 5], 2), &[0, 4, 9]).unwrap();
    for &l in &pass.per_example_loss {
        assert!((l - 10f64.ln()).abs() <= 1e-12);
    }
    assert!((10f64.ln() - core::f64::consts::LN_10).abs() < 1e-15);
}

#[test]
fn zero_weights_at_origin_give_closed_form_gradient() {
    let layers = vec![
        LayerSpec::Dense { units: 4 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 3 },
        LayerSpec::SoftmaxOutput,
    ];
    let model = Model::zeroed(&[2], layers).unwrap();
    let pass = model.forward_eval(&Tensor::zeros(&[1, 2]), &[1]).unwrap();
    let g = model.backward(&pass, &[1]).unwrap();
    let out = g.layers[2].as_ref().unwrap();
    let third = 1.0 / 3.0;
    for (got, want) in out.bias.data().iter().zip([third, third - 1.0, third]) {
        assert!((got - want).abs() <= 1e-15);
    }
    assert!(out.weight.data().iter().all(|&v| v == 0.0));
    let hidden = g.layers[0].as_ref().unwrap();
    assert!(hidden.weight.data().iter().chain(hidden.bias.data()).all(|&v| v == 0.0));
}

#[test]
fn duplicated_example_matches_single_example_gradient() {
    let model = tiny_conv(false);
    let x = inputs(&[1, 2, 5, 5], 8);
    let twice = Tensor::stack(&[x.example(0), x.example(0)], &[2, 5, 5]).unwrap();
    let g1 = model.backward(&model.forward_eval(&x, &[3]).unwrap(), &[3]).unwrap();
    let g2 = model.backward(&model.forward_eval(&twice, &[3, 3]).unwrap(), &[3, 3]).unwrap();
    assert!(g1.max_abs_diff(&g2) <= 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn batch_gradient_is_mean_of_example_gradients(seed in any::<u64>(), m in 1usize..6) {
        let model = Model::new(&[2, 5, 5], arch::stand_in(4, None).into_iter().map(|l| match l {
            LayerSpec::Dense { units: 128 } => LayerSpec::Dense { units: 8 },
            LayerSpec::Conv2d { kernel, stride, pad, .. } => LayerSpec::conv(3, kernel, stride, pad),
            other => other,
        }).collect(), seed).unwrap();
        let x = inputs(&[m, 2, 5, 5], seed);
        let y = labels(m, 4, seed);
        let batch = model.backward(&model.forward_eval(&x, &y).unwrap(), &y).unwrap().flat();
        let mut mean = vec![0.0; batch.len()];
        for i in 0..m {
            let xi = x.gather(&[i]);
            let g = model.backward(&model.forward_eval(&xi, &y[i..=i]).unwrap(), &y[i..=i]).unwrap().flat();
            for (acc, v) in mean.iter_mut().zip(g) {
                *acc += v / m as f64;
            }
        }
        for (a, b) in batch.iter().zip(&mean) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), m in 1usize..8) {
        let model = tiny_conv(true);
        let x = inputs(&[m.max(2), 2, 5, 5], seed);
        let y = labels(m.max(2), 16, seed);
        let pass = model.forward(&x, &y, Mode::Train, &Rng::new(seed, 3)).unwrap();
        for row in pass.probabilities().data().chunks(16) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        prop_assert!(pass.per_example_loss.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn momentum_matches_unrolled_recurrence(g in -2.0f64..2.0, mu in 0.0f64..0.99, lr in 0.001f64..1.0, wd in 0.0f64..0.1, steps in 1usize..12) {
        let mut model = Model::new(&[1], vec![LayerSpec::Dense { units: 2 }, LayerSpec::SoftmaxOutput], 0).unwrap();
        model.set_params(0, Tensor::new(vec![2, 1], vec![0.5, -0.25]).unwrap(), Tensor::zeros(&[2])).unwrap();
        let grads = Gradients { layers: vec![Some(Params {
            weight: Tensor::filled(&[2, 1], g),
            bias: Tensor::filled(&[2], g),
        }), None] };
        let (mut theta, mut v) = (0.5f64, 0.0f64);
        for _ in 0..steps {
            sgd_momentum_step(&mut model, &grads, lr, mu, wd).unwrap();
            v = mu * v - lr * (g + wd * theta);
            theta += v;
        }
        prop_assert!((model.params(0).unwrap().weight.data()[0] - theta).abs() <= 1e-12);
    }
}

#[test]
fn sgd_hand_iteration() {
    let mut model = Model::zeroed(&[1], vec![LayerSpec::Dense { units: 2 }, LayerSpec::SoftmaxOutput]).unwrap();
    let ones = Gradients {
        layers: vec![
            Some(Params {
                weight: Tensor::filled(&[2, 1], 1.0),
                bias: Tensor::filled(&[2], 1.0),
            }),
            None,
        ],
    };
    sgd_momentum_step(&mut model, &ones, 0.1, 0.9, 0.0).unwrap();
    assert!((model.params(0).unwrap().bias.data()[0] + 0.1).abs() < 1e-15);
    sgd_momentum_step(&mut model, &ones, 0.1, 0.9, 0.0).unwrap();
    assert!((model.params(0).unwrap().bias.data()[0] + 0.29).abs() < 1e-15);

    let zero = Gradients {
        layers: vec![
            Some(Params {
                weight: Tensor::zeros(&[2, 1]),
                bias: Tensor::zeros(&[2]),
            }),
            None,
        ],
    };
    let mut fresh = Model::new(&[1], vec![LayerSpec::Dense { units: 2 }, LayerSpec::SoftmaxOutput], 3).unwrap();
    let before = fresh.clone();
    sgd_momentum_step(&mut fresh, &zero, 0.1, 0.9, 0.0).unwrap();
    assert_eq!(fresh, before);

    let mut plain = before.clone();
    sgd_momentum_step(&mut plain, &ones, 0.5, 0.0, 0.0).unwrap();
    let w0 = before.params(0).unwrap().weight.data()[1];
    assert_eq!(plain.params(0).unwrap().weight.data()[1], w0 - 0.5);
}

#[test]
fn gradient_check_tiny_conv_with_corruption() {
    let model = tiny_conv(true);
    let x = inputs(&[8, 2, 5, 5], 12);
    let y = labels(8, 16, 12);
    let report = gradient_check(&model, &x, &y, 1e-6, &Rng::new(12, 3)).unwrap();
    assert!(report.checked as f64 > 0.9 * model.param_count() as f64);
    assert!(report.max_rel_error <= 1e-4, "{report:?}");
}

#[test]
fn gradient_check_linear_model_is_nearly_exact() {
    let model = Model::new(&[6], vec![LayerSpec::Dense { units: 4 }, LayerSpec::SoftmaxOutput], 2).unwrap();
    let x = inputs(&[5, 6], 2);
    let report = gradient_check(&model, &x, &labels(5, 4, 2), 1e-6, &Rng::new(0, 0)).unwrap();
    assert_eq!(report.excluded, 0);
    assert!(report.max_rel_error <= 1e-8, "{report:?}");
}

#[test]
fn relu_kink_parameters_are_excluded() {
    // Zero input and zero first-layer bias put every hidden unit exactly at
    // the kink; perturbing a first-layer bias flips its sign pattern.
    let layers = vec![
        LayerSpec::Dense { units: 3 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 2 },
        LayerSpec::SoftmaxOutput,
    ];
    let model = Model::new(&[2], layers, 4).unwrap();
    let report = gradient_check(&model, &Tensor::zeros(&[1, 2]), &[1], 1e-6, &Rng::new(0, 0)).unwrap();
    assert!(report.excluded >= 3);
    assert!(report.max_rel_error <= 1e-4);
}

#[test]
fn evaluate_matches_brute_force_logloss() {
    let model = tiny_conv(true);
    let ds = dataset(37, &[2, 5, 5], 16, 21);
    let ev = evaluate(&model, &ds).unwrap();
    let mut loss = 0.0;
    let mut wrong = 0;
    for i in 0..ds.len() {
        let x = ds.examples().gather(&[i]);
        let logits_model = model.without_corruption();
        let pass = logits_model.forward_eval(&x, &ds.labels()[i..=i]).unwrap();
        let logits = &pass.activations[pass.activations.len() - 2];
        let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.data().iter().map(|v| (v - max).exp()).sum();
        loss -= logits.data()[ds.labels()[i]] - max - z.ln();
        let best = (0..16).fold(0, |b, c| if logits.data()[c] > logits.data()[b] { c } else { b });
        wrong += (best != ds.labels()[i]) as usize;
    }
    assert!((ev.logloss - loss / ds.len() as f64).abs() <= 1e-12);
    assert_eq!(ev.error_rate, wrong as f64 / ds.len() as f64);
}

#[test]
fn uniform_model_on_balanced_labels_is_at_chance() {
    let mut model = Model::new(&[3], vec![LayerSpec::Dense { units: 10 }, LayerSpec::SoftmaxOutput], 0).unwrap();
    model.set_params(0, Tensor::zeros(&[10, 3]), Tensor::zeros(&[10])).unwrap();
    let ds = Dataset::new(inputs(&[100, 3], 1), (0..100).map(|i| i % 10).collect(), 10).unwrap();
    let ev = evaluate(&model, &ds).unwrap();
    assert!((ev.error_rate - 0.9).abs() < 1e-12);
    assert!((ev.logloss - 10f64.ln()).abs() <= 1e-12);
}

#[test]
fn perfect_one_hot_model_scores_zero() {
    let mut model = Model::new(&[2], vec![LayerSpec::Dense { units: 2 }, LayerSpec::SoftmaxOutput], 0).unwrap();
    model.set_params(0, Tensor::new(vec![2, 2], vec![1e4, 0.0, 0.0, 1e4]).unwrap(), Tensor::zeros(&[2])).unwrap();
    let ds = Dataset::new(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(), vec![0, 1], 2).unwrap();
    let ev = evaluate(&model, &ds).unwrap();
    assert_eq!((ev.error_rate, ev.logloss), (0.0, 0.0));
}

#[test]
fn training_is_deterministic_and_zero_epochs_is_a_no_op() {
    let ds = dataset(40, &[2, 5, 5], 16, 5);
    let config = TrainConfig::new(8, 3, 0.05, 9);
    let run = || {
        let mut m = tiny_conv(true);
        let h = train(&mut m, &ds, &config, Some(&ds)).unwrap();
        (m, h)
    };
    let (m1, h1) = run();
    let (m2, h2) = run();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
    assert_eq!(h1.epochs.len(), 3);

    let mut m = tiny_conv(true);
    let before = m.clone();
    let h = train(&mut m, &ds, &TrainConfig::new(8, 0, 0.05, 9), None).unwrap();
    assert!(h.epochs.is_empty());
    assert_eq!(m, before);
}

#[test]
fn training_reduces_loss_on_a_learnable_problem() {
    let x = inputs(&[64, 4], 6);
    let y: Vec<usize> = (0..64).map(|i| (x.example(i)[0] > 0.0) as usize).collect();
    let ds = Dataset::new(x, y, 2).unwrap();
    let mut model = Model::new(&[4], arch::mlp(&[8], 2, None, Some(CorruptionSpec::hybrid(0.3))), 1).unwrap();
    let mut config = TrainConfig::new(16, 40, 0.1, 1);
    config.momentum_schedule = vec![(0, 0.9)];
    let h = train(&mut model, &ds, &config, Some(&ds)).unwrap();
    assert!(h.epochs.last().unwrap().train_loss < 0.5 * h.epochs[0].train_loss);
    assert!(h.last_eval().unwrap().error_rate < 0.1);
}

#[test]
fn divergence_is_reported_with_partial_history() {
    let ds = dataset(32, &[4], 3, 2);
    let mut model = Model::new(&[4], arch::mlp(&[8], 3, None, None), 1).unwrap();
    let err = train(&mut model, &ds, &TrainConfig::new(8, 50, 1e200, 1), None).unwrap_err();
    assert!(matches!(err.error, hybridboot_core::Error::Divergence { .. }), "{err}");
}
