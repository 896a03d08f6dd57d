use cwan::data::{
    generate_synthetic_domains, parse_domain, split_target, synthetic_projection, write_domain,
    DomainData, SynthSpec,
};
use cwan::model::{
    check_d_gradients, check_fg_gradients, conditional_mmd, loss_lg, source_weights, Batch,
    CwanParams, Dense, LabeledEmbeddings, LabeledSet, LgNorm, ObjectiveConfig, SoftEmbeddings, Weights,
};
use cwan::numerics::Tensor;
use cwan::training::{accuracy_from_scores, init_params, TaskShape, TrainConfig};
use proptest::prelude::*;
use std::path::Path;

fn distinct_deltas() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..20.0, 2..=6).prop_filter("distinct", |d| {
        let mut s = d.clone();
        s.sort_by(f64::total_cmp);
        s.windows(2).all(|w| w[0] != w[1])
    })
}

fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    idx
}

proptest! {
    #[test]
    fn weights_lie_in_range(deltas in prop::collection::vec(0.0f64..36.0, 2..=8)) {
        let w = source_weights(&deltas).unwrap().weights;
        prop_assert!(w.iter().all(|&x| (0.5..1.0).contains(&x)), "{w:?}");
    }

    #[test]
    fn large_divergences_saturate_to_one(deltas in prop::collection::vec(37.0f64..1e3, 2..=8)) {
        // Beyond ~36.7 the logistic rounds to 1 in f64, so weights hit 1 exactly.
        let w = source_weights(&deltas).unwrap().weights;
        prop_assert!(w.iter().all(|&x| x == 1.0), "{w:?}");
    }

    #[test]
    fn weights_reverse_the_divergence_order(deltas in distinct_deltas()) {
        let w = source_weights(&deltas).unwrap().weights;
        let mut rev = argsort(&deltas);
        rev.reverse();
        prop_assert_eq!(argsort(&w), rev);
    }

    #[test]
    fn own_divergence_does_not_move_own_weight(
        deltas in prop::collection::vec(0.0f64..20.0, 2..=6),
        k in 0usize..6,
        bump in 0.0f64..50.0,
    ) {
        let k = k % deltas.len();
        let mut moved = deltas.clone();
        moved[k] += bump;
        let a = source_weights(&deltas).unwrap().weights;
        let b = source_weights(&moved).unwrap().weights;
        prop_assert_eq!(a[k].to_bits(), b[k].to_bits());
    }
}

/// Direct per-class sums over samples.
fn naive_mmd(
    source: &[Vec<f64>],
    source_labels: &[usize],
    labeled: &[Vec<f64>],
    labeled_labels: &[usize],
    unlabeled: &[Vec<f64>],
    soft: &[Vec<f64>],
    classes: usize,
) -> f64 {
    let d = source[0].len();
    let mut total = 0.0;
    for c in 0..classes {
        let mut t_sum = vec![0.0; d];
        let mut t_den = 0.0;
        for (x, &y) in labeled.iter().zip(labeled_labels) {
            if y == c {
                for j in 0..d {
                    t_sum[j] += x[j];
                }
                t_den += 1.0;
            }
        }
        for (x, p) in unlabeled.iter().zip(soft) {
            for j in 0..d {
                t_sum[j] += p[c] * x[j];
            }
            t_den += p[c];
        }
        let mut s_sum = vec![0.0; d];
        let mut s_den = 0.0;
        for (x, &y) in source.iter().zip(source_labels) {
            if y == c {
                for j in 0..d {
                    s_sum[j] += x[j];
                }
                s_den += 1.0;
            }
        }
        for j in 0..d {
            let diff = t_sum[j] / t_den - s_sum[j] / s_den;
            total += diff * diff;
        }
    }
    total / classes as f64
}

#[derive(Debug, Clone)]
struct MmdCase {
    classes: usize,
    source: Vec<Vec<f64>>,
    source_labels: Vec<usize>,
    labeled: Vec<Vec<f64>>,
    labeled_labels: Vec<usize>,
    unlabeled: Vec<Vec<f64>>,
    soft: Vec<Vec<f64>>,
}

fn rows(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n)
}

/// Labels covering every class, then arbitrary ones.
fn covering_labels(n: usize, classes: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..classes, n - classes).prop_map(move |extra| {
        (0..classes).chain(extra).collect()
    })
}

fn mmd_case() -> impl Strategy<Value = MmdCase> {
    (1usize..=5, 1usize..=8)
        .prop_flat_map(|(c, d)| (Just(c), Just(d), c..=50, c..=50, 0usize..=50))
        .prop_flat_map(|(c, d, ns, nl, nu)| {
            let soft = prop::collection::vec(prop::collection::vec(0.01f64..1.0, c), nu)
                .prop_map(|rows| {
                    rows.into_iter()
                        .map(|r| {
                            let z: f64 = r.iter().sum();
                            r.into_iter().map(|p| p / z).collect()
                        })
                        .collect::<Vec<Vec<f64>>>()
                });
            (
                Just(c),
                rows(ns, d),
                covering_labels(ns, c),
                rows(nl, d),
                covering_labels(nl, c),
                rows(nu, d),
                soft,
            )
        })
        .prop_map(|(classes, source, source_labels, labeled, labeled_labels, unlabeled, soft)| {
            MmdCase {
                classes,
                source,
                source_labels,
                labeled,
                labeled_labels,
                unlabeled,
                soft,
            }
        })
}

fn tensor(rows: &[Vec<f64>], cols: usize) -> Tensor {
    Tensor::matrix(rows.len(), cols, rows.concat()).unwrap()
}

fn vectorized_mmd(case: &MmdCase) -> f64 {
    let d = case.source[0].len();
    let s = tensor(&case.source, d);
    let l = tensor(&case.labeled, d);
    let soft = (!case.unlabeled.is_empty())
        .then(|| (tensor(&case.unlabeled, d), tensor(&case.soft, case.classes)));
    let unlabeled = soft.as_ref().map(|(u, p)| SoftEmbeddings {
        embeddings: u,
        soft_labels: p,
    });
    conditional_mmd(
        LabeledEmbeddings {
            embeddings: &s,
            labels: &case.source_labels,
        },
        LabeledEmbeddings {
            embeddings: &l,
            labels: &case.labeled_labels,
        },
        unlabeled,
        case.classes,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mmd_matches_the_naive_oracle(case in mmd_case()) {
        let fast = vectorized_mmd(&case);
        let slow = naive_mmd(
            &case.source,
            &case.source_labels,
            &case.labeled,
            &case.labeled_labels,
            &case.unlabeled,
            &case.soft,
            case.classes,
        );
        prop_assert!((fast - slow).abs() <= 1e-9, "{fast} vs {slow}");
    }
}

fn toy_batch(seed: u64) -> Batch {
    let val = |i: usize, off: f64| ((i as f64 + 1.0) * 0.73 + off + seed as f64 * 1.3).sin();
    let mat = |r: usize, c: usize, off: f64| {
        Tensor::matrix(r, c, (0..r * c).map(|i| val(i, off)).collect()).unwrap()
    };
    let sources = vec![
        LabeledSet::new(mat(3, 3, 0.0), vec![0, 1, 0], 2).unwrap(),
        LabeledSet::new(mat(3, 4, 1.0), vec![1, 0, 1], 2).unwrap(),
    ];
    let labeled = LabeledSet::new(mat(2, 5, 2.0), vec![0, 1], 2).unwrap();
    Batch::new(sources, labeled, Some(&mat(3, 5, 3.0)), 2).unwrap()
}

fn toy_params(seed: u64, tied: bool) -> cwan::model::CwanParams {
    let cfg = TrainConfig {
        d_c: 4,
        hidden: 4,
        seed,
        lg_norm: if tied { LgNorm::Tied } else { LgNorm::L1 },
        ..TrainConfig::default()
    };
    let shape = TaskShape {
        source_dims: vec![3, 4],
        target_dim: 5,
        classes: 2,
    };
    init_params(&shape, &cfg).unwrap()
}

fn affine(x: &Tensor, d: &Dense) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|i| {
            (0..d.weight.cols())
                .map(|u| {
                    (0..x.cols()).map(|j| x.get(i, j) * d.weight.get(j, u)).sum::<f64>()
                        + d.bias.values()[u]
                })
                .collect()
        })
        .collect()
}

fn rows_tensor(rows: &[Vec<f64>], f: impl Fn(f64) -> f64) -> Tensor {
    let mapped: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect();
    tensor(&mapped, rows[0].len())
}

/// Smallest distance to a kink: |pre-activation| over every rectifier the
/// objectives pass through, and every second-layer source/target difference.
fn kink_distance(p: &CwanParams, b: &Batch) -> f64 {
    let leaky = |v: f64| if v > 0.0 { v } else { 0.2 * v };
    let mut inputs: Vec<(&Tensor, &cwan::model::TransformerParams)> =
        b.sources.iter().map(|s| &s.features).zip(&p.sources).collect();
    inputs.push((b.target_features(), &p.target));
    let mut pre = Vec::new();
    for (x, t) in inputs {
        let h1 = affine(x, &t.first);
        let h2 = affine(&rows_tensor(&h1, leaky), t.second.as_ref().unwrap());
        let hd = affine(&rows_tensor(&h2, leaky), &p.discriminator.hidden);
        pre.extend([h1, h2, hd].into_iter().flatten().flatten());
    }
    // The L1 disagreement has a kink wherever a source entry equals the target's.
    let target = p.target.second.as_ref().unwrap();
    for t in &p.sources {
        let own = t.second.as_ref().unwrap();
        for (a, b) in [(&own.weight, &target.weight), (&own.bias, &target.bias)] {
            // Exact ties are harmless: both the subgradient and the central
            // difference are 0 there.
            pre.extend(
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| x - y)
                    .filter(|&d| d != 0.0),
            );
        }
    }
    pre.into_iter().map(f64::abs).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn objective_gradients_match_finite_differences(
        seed in 0u64..1000,
        beta in 0.0f64..1.0,
        tau in 0.0f64..0.05,
        l2 in any::<bool>(),
    ) {
        let p = toy_params(seed, false);
        let b = toy_batch(seed);
        // Central differences are only meaningful away from activation kinks.
        prop_assume!(kink_distance(&p, &b) > 1e-4);
        let cfg = ObjectiveConfig {
            beta,
            tau,
            lg_norm: if l2 { LgNorm::L2 } else { LgNorm::L1 },
            leaky_slope: 0.2,
        };
        let r = check_fg_gradients(&p, &b, Weights::Conditional, &cfg, 1e-5).unwrap();
        prop_assert!(r.max_relative_error < 1e-4, "{:?}", r);
        let r = check_d_gradients(&p, &b, &[0.55, 0.9], 0.2, 1e-5).unwrap();
        prop_assert!(r.max_relative_error < 1e-4, "{:?}", r);
    }

    #[test]
    fn lg_is_zero_exactly_when_second_layers_agree(seed in 0u64..1000, bump in 1e-6f64..1.0) {
        let mut p = toy_params(seed, false);
        let target = p.target.second.clone();
        for s in &mut p.sources {
            s.second = target.clone();
        }
        prop_assert_eq!(loss_lg(&p, LgNorm::L1).unwrap(), 0.0);
        let mut moved = p.clone();
        let second = moved.sources[1].second.as_mut().unwrap();
        let bias = second.bias.values().to_vec();
        second.bias = Tensor::vector(
            bias.iter().enumerate().map(|(i, &b)| if i == 0 { b + bump } else { b }).collect(),
        ).unwrap();
        prop_assert!(loss_lg(&moved, LgNorm::L1).unwrap() > 0.0);
    }

    #[test]
    fn lg_ignores_source_order(seed in 0u64..1000) {
        let p = toy_params(seed, false);
        let mut swapped = p.clone();
        swapped.sources.swap(0, 1);
        let a = loss_lg(&p, LgNorm::L1).unwrap();
        let b = loss_lg(&swapped, LgNorm::L1).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn accuracy_survives_monotone_rescoring(
        scores in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..20),
        shift in -10.0f64..10.0,
        scale in 0.1f64..10.0,
    ) {
        let labels: Vec<usize> = (0..scores.len()).map(|i| i % 3).collect();
        let base = tensor(&scores, 3);
        let moved: Vec<Vec<f64>> = scores
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&v| (scale * v).exp() + shift + i as f64).collect())
            .collect();
        prop_assert_eq!(
            accuracy_from_scores(&base, &labels).unwrap(),
            accuracy_from_scores(&tensor(&moved, 3), &labels).unwrap()
        );
    }

    #[test]
    fn domain_files_round_trip_bit_exactly(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 1..60),
        labeled in any::<bool>(),
    ) {
        let n = values.len();
        let features = Tensor::matrix(n, 1, values).unwrap();
        let labels = labeled.then(|| (0..n).map(|i| i % 2).collect());
        let d = DomainData::new("x", features, labels, 2).unwrap();
        let back = parse_domain(&write_domain(&d), "x", Path::new("x")).unwrap();
        prop_assert_eq!(back, d);
    }
}

#[test]
fn synthetic_domains_share_their_latent_classes() {
    // Raw (unstandardized) features so the projections map domains exactly.
    let spec = SynthSpec {
        source_dims: vec![40],
        target_dim: 60,
        per_class: 60,
        unlabeled: 150,
        standardize: false,
        seed: 11,
        ..SynthSpec::default()
    };
    let domains = generate_synthetic_domains(&spec).unwrap();
    let (a, b) = (&domains[0], &domains[1]);
    let pa = synthetic_projection(&spec, 0).unwrap();
    let pb = synthetic_projection(&spec, 1).unwrap();
    let latent = spec.latent_dim;

    // Nearest class mean in domain A's latent coordinates.
    let to_latent = |x: &[f64], p: &Tensor| -> Vec<f64> {
        (0..latent)
            .map(|j| x.iter().enumerate().map(|(i, v)| v * p.get(i, j)).sum())
            .collect()
    };
    let la = a.labels().unwrap();
    let mut means = vec![vec![0.0; latent]; spec.classes];
    let counts = a.class_counts();
    for i in 0..a.len() {
        let z = to_latent(a.features().row(i), &pa);
        for j in 0..latent {
            means[la[i]][j] += z[j] / counts[la[i]] as f64;
        }
    }
    let lb = b.labels().unwrap();
    let hits = (0..b.len())
        .filter(|&i| {
            let z = to_latent(b.features().row(i), &pb);
            let dist = |m: &Vec<f64>| m.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..spec.classes)
                .min_by(|&x, &y| dist(&means[x]).total_cmp(&dist(&means[y])))
                .unwrap();
            best == lb[i]
        })
        .count();
    let acc = hits as f64 / b.len() as f64;
    assert!(acc > 1.0 / spec.classes as f64 + 0.2, "transfer accuracy {acc}");
}

#[test]
fn split_is_a_partition_with_exact_labeled_counts() {
    let spec = SynthSpec {
        source_dims: vec![],
        target_dim: 30,
        unlabeled: 40,
        ..SynthSpec::default()
    };
    let target = generate_synthetic_domains(&spec).unwrap().pop().unwrap();
    let (l, u) = split_target(&target, 3, 5).unwrap();
    assert_eq!(l.class_counts(), vec![3, 3, 3]);
    assert_eq!(l.len() + u.len(), target.len());
    let mut rows: Vec<Vec<u64>> = l
        .features()
        .values()
        .chunks(30)
        .chain(u.features().values().chunks(30))
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    let mut orig: Vec<Vec<u64>> = target
        .features()
        .values()
        .chunks(30)
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort();
    orig.sort();
    assert_eq!(rows, orig);
}
