use super::*;
use crate::training::{init_params, TaskShape, TrainConfig};

fn t(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

fn v(values: &[f64]) -> Tensor {
    Tensor::vector(values.to_vec()).unwrap()
}

fn dense(w: &[&[f64]], b: &[f64]) -> Dense {
    Dense::new(t(w), v(b)).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn small_params(source_dims: &[usize], target_dim: usize, classes: usize, seed: u64) -> CwanParams {
    let cfg = TrainConfig {
        d_c: 3,
        hidden: 4,
        seed,
        ..TrainConfig::default()
    };
    let shape = TaskShape {
        source_dims: source_dims.to_vec(),
        target_dim,
        classes,
    };
    init_params(&shape, &cfg).unwrap()
}

fn grid(rows: usize, cols: usize, scale: f64, offset: f64) -> Tensor {
    let values = (0..rows * cols)
        .map(|i| ((i as f64 * 0.7 + offset).sin()) * scale)
        .collect();
    Tensor::matrix(rows, cols, values).unwrap()
}

fn toy_batch() -> Batch {
    let sources = vec![
        LabeledSet::new(grid(4, 2, 1.0, 0.1), vec![0, 1, 0, 1], 2).unwrap(),
        LabeledSet::new(grid(3, 5, 1.0, 0.9), vec![1, 0, 1], 2).unwrap(),
    ];
    let labeled = LabeledSet::new(grid(2, 3, 1.0, 2.0), vec![0, 1], 2).unwrap();
    Batch::new(sources, labeled, Some(&grid(3, 3, 1.0, 4.0)), 2).unwrap()
}

#[test]
fn transform_zero_weights_give_zero_embedding() {
    let p = TransformerParams {
        first: Dense::zeros(3, 4),
        second: Some(Dense::zeros(4, 2)),
    };
    let out = transform(&p, &grid(5, 3, 2.0, 0.0), 0.01).unwrap();
    assert_eq!(out.shape(), &[5, 2]);
    assert!(out.values().iter().all(|&x| x == 0.0));
}

#[test]
fn transform_identity_passes_positive_input() {
    let p = TransformerParams {
        first: dense(&[&[1.0]], &[0.0]),
        second: Some(dense(&[&[1.0]], &[0.0])),
    };
    assert_eq!(transform(&p, &t(&[&[2.0]]), 0.01).unwrap().values(), &[2.0]);
}

#[test]
fn transform_matches_hand_composition() {
    let x = grid(3, 4, 1.5, 0.3);
    let w1 = grid(4, 2, 0.8, 1.1);
    let b1 = [0.1, -0.2];
    let w2 = grid(2, 2, 1.2, 2.7);
    let b2 = [-0.05, 0.3];
    let slope = 0.1;
    let leaky = |z: f64| if z > 0.0 { z } else { slope * z };
    let p = TransformerParams {
        first: Dense::new(w1.clone(), v(&b1)).unwrap(),
        second: Some(Dense::new(w2.clone(), v(&b2)).unwrap()),
    };
    let out = transform(&p, &x, slope).unwrap();
    for i in 0..3 {
        let mut h = [0.0; 2];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut z = b1[j];
            for k in 0..4 {
                z += x.get(i, k) * w1.get(k, j);
            }
            *hj = leaky(z);
        }
        for j in 0..2 {
            let z = b2[j] + h[0] * w2.get(0, j) + h[1] * w2.get(1, j);
            assert!(close(out.get(i, j), leaky(z), 1e-14));
        }
    }
    assert!(transform(&p, &grid(3, 5, 1.0, 0.0), slope).is_err());
}

#[test]
fn classify_examples() {
    let zero = ClassifierParams {
        layer: Dense::zeros(2, 3),
    };
    let logits = classify(&zero, &grid(4, 2, 1.0, 0.0)).unwrap();
    assert!(logits.values().iter().all(|&x| x == 0.0));
    let soft = softmax_rows(&logits);
    assert!(soft.values().iter().all(|&p| close(p, 1.0 / 3.0, 1e-15)));

    let one = ClassifierParams {
        layer: dense(&[&[2.0]], &[1.0]),
    };
    assert_eq!(classify(&one, &t(&[&[3.0]])).unwrap().values(), &[7.0]);

    // Zero column sums: shifting every embedding coordinate by a constant
    // leaves the logits unchanged.
    let balanced = ClassifierParams {
        layer: dense(&[&[1.0, -2.0], &[-1.0, 2.0]], &[0.5, 0.0]),
    };
    let emb = t(&[&[0.3, -1.2], &[2.0, 0.7]]);
    let shifted = t(&[&[5.3, 3.8], &[7.0, 5.7]]);
    let a = classify(&balanced, &emb).unwrap();
    let b = classify(&balanced, &shifted).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
    assert!(classify(&balanced, &t(&[&[1.0]])).is_err());
}

#[test]
fn discriminate_examples() {
    let zero = DiscriminatorParams {
        hidden: Dense::zeros(3, 3),
        output: Dense::zeros(3, 2),
    };
    let out = discriminate(&zero, &grid(2, 3, 1.0, 0.0)).unwrap();
    assert!(out.values().iter().all(|&x| x == 0.0));

    let d = DiscriminatorParams {
        hidden: dense(&[&[2.0]], &[-1.0]),
        output: dense(&[&[3.0, -1.0]], &[0.5, 0.0]),
    };
    // 2·1 − 1 = 1 → [3.5, −1]; 2·0 − 1 < 0 is gated to 0 → bias only.
    let out = discriminate(&d, &t(&[&[1.0], &[0.0]])).unwrap();
    assert_eq!(out.values(), &[3.5, -1.0, 0.5, 0.0]);
}

fn lg_params(offset: f64) -> CwanParams {
    let mut p = small_params(&[2], 3, 2, 1);
    let target = Dense::new(grid(4, 3, 1.0, 0.0), v(&[0.1, 0.2, 0.3])).unwrap();
    let mut source = target.clone();
    for (i, w) in source.weight.values_mut().iter_mut().enumerate() {
        if i < 4 {
            *w += offset;
        }
    }
    p.target.second = Some(target);
    p.sources[0].second = Some(source);
    p
}

#[test]
fn loss_lg_examples() {
    let p = lg_params(0.1);
    assert!(close(loss_lg(&p, LgNorm::L1).unwrap(), 0.4, 1e-12));
    assert!(close(loss_lg(&p, LgNorm::L2).unwrap(), 0.04, 1e-12));
    assert_eq!(loss_lg(&p, LgNorm::Off).unwrap(), 0.0);
    assert_eq!(loss_lg(&lg_params(0.0), LgNorm::L1).unwrap(), 0.0);
    let tied = p.tie_second_layers();
    assert_eq!(loss_lg(&tied, LgNorm::L1).unwrap(), 0.0);
    assert_eq!(loss_lg(&tied, LgNorm::Tied).unwrap(), 0.0);
}

fn lab<'a>(embeddings: &'a Tensor, labels: &'a [usize]) -> LabeledEmbeddings<'a> {
    LabeledEmbeddings { embeddings, labels }
}

#[test]
fn conditional_mmd_examples() {
    let target = t(&[&[1.0]]);
    let source = t(&[&[3.0], &[3.0]]);
    let d = conditional_mmd(lab(&source, &[0, 0]), lab(&target, &[0]), None, 1).unwrap();
    assert!(close(d, 4.0, 1e-15));

    // Labeled target: class 0 at 0, class 1 at 2; one unlabeled at 1 split
    // evenly. Blended means: (0 + 0.5)/1.5 = 1/3 and (2 + 0.5)/1.5 = 5/3.
    let target = t(&[&[0.0], &[2.0]]);
    let unl = t(&[&[1.0]]);
    let soft = t(&[&[0.5, 0.5]]);
    let source = t(&[&[1.0 / 3.0], &[5.0 / 3.0]]);
    let d = conditional_mmd(
        lab(&source, &[0, 1]),
        lab(&target, &[0, 1]),
        Some(SoftEmbeddings {
            embeddings: &unl,
            soft_labels: &soft,
        }),
        2,
    )
    .unwrap();
    assert!(close(d, 0.0, 1e-15), "{d}");

    let same = t(&[&[1.0, 2.0], &[-1.0, 0.5]]);
    let d = conditional_mmd(lab(&same, &[0, 1]), lab(&same, &[0, 1]), None, 2).unwrap();
    assert_eq!(d, 0.0);

    let err = conditional_mmd(lab(&same, &[0, 0]), lab(&same, &[0, 1]), None, 2);
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn soft_label_examples() {
    let mut p = small_params(&[2], 3, 4, 2);
    let x = grid(5, 3, 2.0, 0.5);
    let rows = soft_labels(&p, &x, 0.01).unwrap();
    for i in 0..5 {
        let s: f64 = rows.row(i).iter().sum();
        assert!(close(s, 1.0, 1e-12));
    }

    p.classifier.layer = Dense::zeros(3, 4);
    let uniform = soft_labels(&p, &x, 0.01).unwrap();
    assert!(uniform.values().iter().all(|&q| close(q, 0.25, 1e-15)));

    p.classifier.layer.bias = v(&[0.0, 0.0, 800.0, 0.0]);
    let saturated = soft_labels(&p, &x, 0.01).unwrap();
    for i in 0..5 {
        assert_eq!(saturated.row(i), &[0.0, 0.0, 1.0, 0.0]);
    }
}

#[test]
fn loss_fg_w_regularizer_isolation() {
    let p = small_params(&[2, 5], 3, 2, 3);
    let b = toy_batch();
    let w = [0.6, 0.9];
    let base = loss_fg_w(&p, &b, &w, 0.0, 0.01).unwrap();
    let with = loss_fg_w(&p, &b, &w, 0.25, 0.01).unwrap();
    let mut norm = 0.0;
    for tr in p.sources.iter().chain([&p.target]) {
        norm += tr.first.weight.sum_squares();
        norm += tr.second.as_ref().unwrap().weight.sum_squares();
    }
    norm += p.classifier.layer.weight.sum_squares();
    assert!(close(with - base, 0.25 * norm, 1e-12));
}

#[test]
fn loss_fg_w_is_linear_in_the_weights() {
    let mut p = small_params(&[2, 2], 3, 2, 4);
    p.sources[1] = p.sources[0].clone();
    let mut b = toy_batch();
    b.sources[1] = b.sources[0].clone();
    let full = loss_fg_w(&p, &b, &[0.5, 1.0], 0.0, 0.01).unwrap();
    let drop1 = loss_fg_w(&p, &b, &[0.0, 1.0], 0.0, 0.01).unwrap();
    let drop2 = loss_fg_w(&p, &b, &[0.5, 0.0], 0.0, 0.01).unwrap();
    assert!(close(full - drop2, 2.0 * (full - drop1), 1e-12));
}

/// Sources embed to [1, 0], the target to [0, 1], and the discriminator is
/// the identity, so it outputs the true domain labels exactly.
fn perfect_discriminator_setup() -> (CwanParams, Batch) {
    let mut p = small_params(&[2, 5], 3, 2, 5);
    for (tr, bias) in p
        .sources
        .iter_mut()
        .map(|s| (s, [1.0, 0.0]))
        .chain([(&mut p.target, [0.0, 1.0])])
    {
        tr.first = Dense::zeros(tr.first.input_dim(), 2);
        tr.second = Some(dense(&[&[0.0, 0.0], &[0.0, 0.0]], &bias));
    }
    p.classifier.layer = Dense::zeros(2, 2);
    let eye = dense(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
    p.discriminator = DiscriminatorParams {
        hidden: eye.clone(),
        output: eye,
    };
    (p, toy_batch())
}

#[test]
fn loss_dg_w_examples() {
    let (p, b) = perfect_discriminator_setup();
    assert_eq!(loss_dg_w(&p, &b, &[0.5, 1.0], false, 0.01).unwrap(), 0.0);
    assert_eq!(objective_d(&p, &b, &[0.5, 1.0], 0.01).unwrap(), 0.0);
    let inv = loss_dg_w(&p, &b, &[0.5, 1.0], true, 0.01).unwrap();
    assert!(close(inv, 0.5 * 2.0 + 1.0 * 2.0 + 2.0, 1e-15));
    let full = loss_dg_w(&p, &b, &[1.0, 1.0], true, 0.01).unwrap();
    assert!(close(full - inv, 1.0, 1e-15));
}

#[test]
fn objective_fg_term_isolation() {
    let p = small_params(&[2, 5], 3, 2, 6);
    let b = toy_batch();
    let w = [0.7, 0.55];
    let cfg = ObjectiveConfig {
        beta: 0.0,
        ..ObjectiveConfig::default()
    };
    let parts = objective_fg(&p, &b, Weights::Fixed(&w), &cfg).unwrap();
    let fg = loss_fg_w(&p, &b, &w, cfg.tau, cfg.leaky_slope).unwrap();
    let lg = loss_lg(&p, cfg.lg_norm).unwrap();
    assert!(close(parts.total, fg + lg, 1e-12));

    let cfg = ObjectiveConfig {
        beta: 0.0,
        tau: 0.0,
        lg_norm: LgNorm::Tied,
        ..ObjectiveConfig::default()
    };
    let tied = p.clone().tie_second_layers();
    let parts = objective_fg(&tied, &b, Weights::Fixed(&w), &cfg).unwrap();
    assert_eq!(parts.lg, 0.0);
    assert_eq!(parts.total, parts.classification);

    let cfg = ObjectiveConfig {
        beta: 0.4,
        ..ObjectiveConfig::default()
    };
    let parts = objective_fg(&p, &b, Weights::Fixed(&w), &cfg).unwrap();
    let dg = loss_dg_w(&p, &b, &w, true, cfg.leaky_slope).unwrap();
    assert!(close(parts.total, fg + lg + 0.4 * dg, 1e-12));
    assert!(close(parts.domain_inverted, dg, 1e-15));

    let bad = ObjectiveConfig {
        beta: -1.0,
        ..ObjectiveConfig::default()
    };
    assert!(objective_fg(&p, &b, Weights::Fixed(&w), &bad).is_err());
}

#[test]
fn conditional_weights_stay_in_range() {
    let p = small_params(&[2, 5], 3, 2, 7);
    let b = toy_batch();
    let mut g = Graph::new();
    let f = FeatureNodes::register(&mut g, &p, false);
    let pass = forward_pass(&mut g, &f, &b, Weights::Conditional, 0.01, None).unwrap();
    let deltas: Vec<f64> = pass.deltas.iter().map(|&d| g.value(d).item()).collect();
    let weights: Vec<f64> = pass.weights.iter().map(|&w| g.value(w).item()).collect();
    assert_eq!(weights, source_weights(&deltas).unwrap().weights);
    assert!(weights.iter().all(|&w| (0.5..1.0).contains(&w)));
}

#[test]
fn tied_params_have_one_second_layer() {
    let p = small_params(&[2, 5, 7], 3, 2, 8);
    assert_eq!(p.second_layer_count(), 4);
    let tied = p.clone().tie_second_layers();
    assert_eq!(tied.second_layer_count(), 1);
    assert!(tied.is_tied());
    assert_eq!(tied.fg_tensors().len(), p.fg_tensors().len() - 6);
}

#[test]
fn gradients_match_finite_differences() {
    let p = small_params(&[2, 5], 3, 2, 9);
    let b = toy_batch();
    for norm in [LgNorm::L1, LgNorm::L2] {
        let cfg = ObjectiveConfig {
            beta: 0.5,
            tau: 0.01,
            lg_norm: norm,
            leaky_slope: 0.1,
        };
        let r = check_fg_gradients(&p, &b, Weights::Conditional, &cfg, 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-4, "{norm:?}: {r:?}");
    }
    let tied = p.clone().tie_second_layers();
    let cfg = ObjectiveConfig {
        lg_norm: LgNorm::Tied,
        ..ObjectiveConfig::default()
    };
    let r = check_fg_gradients(&tied, &b, Weights::Conditional, &cfg, 1e-5).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
    let r = check_d_gradients(&p, &b, &[0.6, 0.8], 0.01, 1e-5).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}
