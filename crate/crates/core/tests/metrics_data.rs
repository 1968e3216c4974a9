use hybridboot_core::data::{complement, standardize, stratified_indices, stratified_subset, Dataset};
use hybridboot_core::expander::{expand, ExpansionScheme, ExpansionSpec, DROPPED};
use hybridboot_core::metrics::filter_correlation;
use hybridboot_core::nn::{LayerSpec, Model};
use hybridboot_core::stats::{median, spearman};
use hybridboot_core::table::{ColumnKind, Table};
use hybridboot_core::{Rng, Tensor};
use proptest::prelude::*;

fn inputs(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed, 50);
    Tensor::from_fn(shape, |_| rng.uniform() * 2.0 - 1.0).unwrap()
}

fn conv_model(seed: u64) -> Model {
    let layers = vec![
        LayerSpec::conv(4, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 3 },
        LayerSpec::SoftmaxOutput,
    ];
    Model::new(&[2, 6, 6], layers, seed).unwrap()
}

/// Post-ReLU responses by direct convolution loops.
fn direct_responses(model: &Model, probe: &Tensor) -> Vec<Vec<f64>> {
    let p = model.params(0).unwrap();
    let (c, h, w, k) = (2usize, 6usize, 6usize, 3usize);
    let mut out = vec![Vec::new(); 4];
    for i in 0..probe.batch_len() {
        let x = probe.example(i);
        for (f, resp) in out.iter_mut().enumerate() {
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = p.bias.data()[f];
                    for ch in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (y, xx) = (oy as isize + ky as isize - 1, ox as isize + kx as isize - 1);
                                if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                    continue;
                                }
                                let wv = p.weight.data()[f * c * k * k + ch * k * k + ky * k + kx];
                                acc += wv * x[ch * h * w + y as usize * w + xx as usize];
                            }
                        }
                    }
                    resp.push(acc.max(0.0));
                }
            }
        }
    }
    out
}

fn two_pass_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn filter_correlation_matches_textbook_oracle() {
    let model = conv_model(3);
    let probe = inputs(&[16, 2, 6, 6], 4);
    let report = filter_correlation(&model, &probe, 0).unwrap();
    let responses = direct_responses(&model, &probe);
    let mut abs = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            let r = two_pass_pearson(&responses[i], &responses[j]);
            assert!((report.corr(i, j).unwrap() - r).abs() <= 1e-10);
            assert_eq!(report.corr(i, j), report.corr(j, i));
            abs.push(r.abs());
        }
    }
    abs.sort_by(f64::total_cmp);
    let oracle = (abs[2] + abs[3]) / 2.0;
    assert!((report.median_abs_corr - oracle).abs() <= 1e-10);
    assert!((0.0..=1.0).contains(&report.median_abs_corr));
}

#[test]
fn identical_and_negated_filters() {
    let mut model = conv_model(5);
    let p = model.params(0).unwrap().clone();
    let mut w = p.weight.clone().into_data();
    let row = 18;
    let first: Vec<f64> = w[..row].to_vec();
    w[row..2 * row].copy_from_slice(&first);
    model.set_params(0, Tensor::new(vec![4, 18], w).unwrap(), Tensor::zeros(&[4])).unwrap();
    let probe = inputs(&[8, 2, 6, 6], 6);
    let report = filter_correlation(&model, &probe, 0).unwrap();
    assert!((report.corr(0, 1).unwrap() - 1.0).abs() <= 1e-12);

    // Without a following ReLU, a negated filter gives correlation −1.
    let linear = Model::new(
        &[2, 6, 6],
        vec![
            LayerSpec::conv(2, 3, 1, 1),
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2 },
            LayerSpec::SoftmaxOutput,
        ],
        1,
    )
    .unwrap();
    let mut linear = linear;
    let mut w = linear.params(0).unwrap().weight.clone().into_data();
    for i in 0..18 {
        w[18 + i] = -w[i];
    }
    linear.set_params(0, Tensor::new(vec![2, 18], w).unwrap(), Tensor::zeros(&[2])).unwrap();
    let report = filter_correlation(&linear, &probe, 0).unwrap();
    assert!((report.corr(0, 1).unwrap() + 1.0).abs() <= 1e-12);
    assert!((report.median_abs_corr - 1.0).abs() <= 1e-12);
}

#[test]
fn constant_filters_are_excluded() {
    let mut model = conv_model(7);
    let mut w = model.params(0).unwrap().weight.clone().into_data();
    w[..18].iter_mut().for_each(|v| *v = 0.0);
    model.set_params(0, Tensor::new(vec![4, 18], w).unwrap(), Tensor::zeros(&[4])).unwrap();
    let report = filter_correlation(&model, &inputs(&[8, 2, 6, 6], 1), 0).unwrap();
    assert_eq!(report.active_filters, vec![1, 2, 3]);
    assert_eq!(report.abs_pairs().len(), 3);
    assert_eq!(report.corr(0, 1), None);
}

#[test]
fn filter_correlation_rejects_bad_layers_and_tiny_probes() {
    let model = conv_model(1);
    assert!(filter_correlation(&model, &inputs(&[4, 2, 6, 6], 1), 1).is_err());
    assert!(filter_correlation(&model, &inputs(&[1, 2, 6, 6], 1), 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn correlation_is_invariant_to_probe_scaling(seed in any::<u64>(), scale in 0.1f64..10.0) {
        // Positive input scaling with zero bias scales every response.
        let mut model = conv_model(seed);
        let w = model.params(0).unwrap().weight.clone();
        model.set_params(0, w, Tensor::zeros(&[4])).unwrap();
        let probe = inputs(&[6, 2, 6, 6], seed);
        let scaled = Tensor::new(probe.shape().to_vec(), probe.data().iter().map(|v| v * scale).collect()).unwrap();
        let a = filter_correlation(&model, &probe, 0).unwrap();
        let b = filter_correlation(&model, &scaled, 0).unwrap();
        prop_assert!((a.median_abs_corr - b.median_abs_corr).abs() <= 1e-10);
    }

    #[test]
    fn stratified_selection_is_reproducible_and_duplicate_free(seed in any::<u64>(), per in 1usize..6) {
        let labels: Vec<usize> = (0..60).map(|i| i % 4).collect();
        let ds = Dataset::new(inputs(&[60, 2], 1), labels, 4).unwrap();
        let n = per * 4 + (seed % 4) as usize;
        let a = stratified_indices(&ds, n, &mut Rng::new(seed, 4)).unwrap();
        let b = stratified_indices(&ds, n, &mut Rng::new(seed, 4)).unwrap();
        prop_assert_eq!(&a, &b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), n);
        let counts = ds.select(&a).class_counts();
        prop_assert!(counts.iter().all(|&c| c == n / 4 || c == n / 4 + 1));
        prop_assert_eq!(complement(60, &a).len(), 60 - n);
    }

    #[test]
    fn standardize_with_own_stats_is_idempotent(seed in any::<u64>()) {
        let ds = Dataset::new(inputs(&[9, 3, 2, 2], seed), vec![0; 9], 1).unwrap();
        let (once, stats) = standardize(&ds, None).unwrap();
        let (again, _) = standardize(&ds, Some(&stats)).unwrap();
        prop_assert_eq!(&once, &again);
        let (twice, s2) = standardize(&once, None).unwrap();
        prop_assert!(twice.examples().max_abs_diff(once.examples()) <= 1e-12);
        for ch in 0..3 {
            prop_assert!(s2.mean[ch].abs() <= 1e-12);
            prop_assert!((s2.std[ch] - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn constant_channel_cannot_be_standardized() {
    let ds = Dataset::new(Tensor::filled(&[4, 2], 1.0), vec![0; 4], 1).unwrap();
    assert!(standardize(&ds, None).is_err());
}

#[test]
fn one_per_class_and_full_permutation() {
    let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
    let ds = Dataset::new(inputs(&[50, 1], 2), labels, 10).unwrap();
    let one = stratified_subset(&ds, 10, &mut Rng::new(1, 4)).unwrap();
    assert_eq!(one.class_counts(), vec![1; 10]);
    let mut all = stratified_indices(&ds, 50, &mut Rng::new(1, 4)).unwrap();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
}

fn fixture() -> Table {
    let rows = vec![
        vec!["1.5", "red", "3", "a"],
        vec!["2", "green", "-1", "b"],
        vec!["0.25", "blue", "4", "a"],
        vec!["7", "red", "0", "c"],
    ];
    let rows = rows.into_iter().map(|r| r.into_iter().map(String::from).collect()).collect();
    let names = ["x", "colour", "z", "y"].map(String::from).to_vec();
    Table::new(names, rows, &[]).unwrap().with_target("y").unwrap()
}

fn scheme() -> impl Strategy<Value = ExpansionScheme> {
    proptest::sample::select(ExpansionScheme::ALL.to_vec())
}

proptest! {
    #[test]
    fn expansion_row_count(s in scheme(), factor in 1usize..5, originals in any::<bool>(), seed in any::<u64>()) {
        let t = fixture();
        let mut spec = ExpansionSpec::new(s, 0.45, factor);
        spec.include_originals = originals;
        let out = expand(&t, &spec, &Rng::new(seed, 5)).unwrap();
        prop_assert_eq!(out.row_count(), factor * 4 + if originals { 4 } else { 0 });
        for (i, row) in out.rows().iter().enumerate() {
            prop_assert_eq!(&row[3], &t.rows()[i / (factor + originals as usize)][3]);
        }
    }

    #[test]
    fn categorical_cells_stay_in_support(s in scheme(), seed in any::<u64>(), u in 0.0f64..1.0) {
        let t = fixture();
        let out = expand(&t, &ExpansionSpec::new(s, u, 3), &Rng::new(seed, 5)).unwrap();
        let support: Vec<&str> = t.rows().iter().map(|r| r[1].as_str()).collect();
        for row in out.rows() {
            let ok = support.contains(&row[1].as_str())
                || (row[1] == DROPPED && matches!(s, ExpansionScheme::Dropout | ExpansionScheme::DropoutNoNorm));
            prop_assert!(ok, "{}", row[1]);
        }
    }

    #[test]
    fn expansion_is_deterministic(s in scheme(), seed in any::<u64>()) {
        let t = fixture();
        let spec = ExpansionSpec::new(s, 0.45, 4);
        prop_assert_eq!(expand(&t, &spec, &Rng::new(seed, 5)).unwrap(), expand(&t, &spec, &Rng::new(seed, 5)).unwrap());
    }
}

#[test]
fn distinct_seeds_give_distinct_expansions() {
    let t = fixture();
    for s in ExpansionScheme::ALL {
        let spec = ExpansionSpec::new(s, 0.45, 8);
        assert_ne!(expand(&t, &spec, &Rng::new(1, 5)).unwrap(), expand(&t, &spec, &Rng::new(2, 5)).unwrap(), "{s:?}");
    }
}

#[test]
fn hb_full_swap_takes_partner_predictors_and_own_target() {
    let t = fixture();
    let mut spec = ExpansionSpec::new(ExpansionScheme::Hb, 1.0, 2);
    spec.fixed_p = Some(1.0);
    let out = expand(&t, &spec, &Rng::new(3, 5)).unwrap();
    for (i, row) in out.rows().iter().enumerate() {
        let base = &t.rows()[i / 2];
        assert_eq!(row[3], base[3]);
        let partner = t.rows().iter().position(|r| r[..3] == row[..3]).expect("predictors from one row");
        assert_ne!(partner, i / 2);
    }
}

#[test]
fn single_row_partner_scheme_fails() {
    let t = Table::new(vec!["x".into(), "y".into()], vec![vec!["1".into(), "a".into()]], &[])
        .unwrap()
        .with_target("y")
        .unwrap();
    assert!(expand(&t, &ExpansionSpec::new(ExpansionScheme::Hb, 0.5, 1), &Rng::new(0, 0)).is_err());
    assert!(expand(&t, &ExpansionSpec::new(ExpansionScheme::NormOnly, 0.5, 1), &Rng::new(0, 0)).is_ok());
    assert_eq!(t.kinds()[1], ColumnKind::Categorical);
}

#[test]
fn stats_helpers() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
}
