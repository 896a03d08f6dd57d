use super::*;
use crate::data::{synthetic_task, SynthSpec};

fn tiny_spec() -> SynthSpec {
    SynthSpec {
        latent_dim: 3,
        classes: 3,
        source_dims: vec![6, 8],
        target_dim: 10,
        per_class: 12,
        labeled_per_class: 3,
        unlabeled: 30,
        ..SynthSpec::default()
    }
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        d_c: 6,
        hidden: 8,
        iterations: 20,
        ..TrainConfig::default()
    }
}

fn tiny_task() -> MultiSourceTask {
    synthetic_task(&tiny_spec(), 2, 0).unwrap()
}

#[test]
fn init_is_seeded_with_zero_biases() {
    let shape = TaskShape::of(&tiny_task());
    let a = init_params(&shape, &tiny_config()).unwrap();
    let b = init_params(&shape, &tiny_config()).unwrap();
    assert_eq!(a, b);
    let c = init_params(
        &shape,
        &TrainConfig {
            seed: 1,
            ..tiny_config()
        },
    )
    .unwrap();
    assert_ne!(a, c);
    let biases = a
        .sources
        .iter()
        .chain([&a.target])
        .flat_map(|t| [&t.first.bias, &t.second.as_ref().unwrap().bias])
        .chain([&a.classifier.layer.bias])
        .chain([&a.discriminator.hidden.bias, &a.discriminator.output.bias]);
    for b in biases {
        assert!(b.values().iter().all(|&x| x == 0.0));
    }
    let bound = 1.0 / (shape.target_dim as f64).sqrt();
    assert!(a.target.first.weight.values().iter().all(|w| w.abs() <= bound));
}

#[test]
fn tied_init_shares_the_untied_draws() {
    let shape = TaskShape::of(&tiny_task());
    let untied = init_params(&shape, &tiny_config()).unwrap();
    let tied = init_params(
        &shape,
        &TrainConfig {
            lg_norm: LgNorm::Tied,
            ..tiny_config()
        },
    )
    .unwrap();
    assert_eq!(tied, untied.tie_second_layers());
}

#[test]
fn accuracy_examples() {
    let scores = Tensor::from_rows(&[&[0.1, 0.9], &[0.8, 0.2], &[0.5, 0.5], &[0.3, 0.7]]).unwrap();
    assert_eq!(accuracy_from_scores(&scores, &[1, 0, 0, 1]).unwrap(), 1.0);
    assert_eq!(accuracy_from_scores(&scores, &[0, 1, 1, 0]).unwrap(), 0.0);
    assert_eq!(accuracy_from_scores(&scores, &[1, 0, 0, 0]).unwrap(), 0.75);
    assert!(accuracy_from_scores(&Tensor::zeros(&[0, 2]), &[]).is_err());
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
}

#[test]
fn zero_iterations_return_the_init() {
    let task = tiny_task();
    let cfg = TrainConfig {
        iterations: 0,
        ..tiny_config()
    };
    let trace = train(&task, &cfg).unwrap();
    assert!(trace.records.is_empty());
    assert_eq!(trace.final_params, init_params(&TaskShape::of(&task), &cfg).unwrap());
}

#[test]
fn training_is_deterministic() {
    let task = tiny_task();
    let a = train(&task, &tiny_config()).unwrap();
    let b = train(&task, &tiny_config()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.records.len(), 20);
}

#[test]
fn steps_touch_only_their_own_group() {
    let task = tiny_task();
    let cfg = tiny_config();
    let batch = Batch::from_task(&task).unwrap();
    let start = init_params(&TaskShape::of(&task), &cfg).unwrap();

    let mut params = start.clone();
    let mut opt = Optimizers::new(&params, &cfg).unwrap();
    train_step(&mut params, &mut opt, &batch, None, &cfg, 0).unwrap();
    assert_ne!(params.d_tensors(), start.d_tensors());
    assert_ne!(params.fg_tensors(), start.fg_tensors());
    assert_eq!(opt.fg.step(), 1);
    assert_eq!(opt.d.step(), 1);

    // The discriminator half alone reproduces the d tensors exactly and leaves
    // f/g and their optimizer state untouched.
    let mut d_only = start.clone();
    let mut d_opt = Optimizers::new(&d_only, &cfg).unwrap();
    let mut g = Graph::new();
    let feats = FeatureNodes::register(&mut g, &d_only, false);
    let pass = forward_pass(&mut g, &feats, &batch, Weights::Conditional, 0.01, None).unwrap();
    let w: Vec<f64> = pass.weights.iter().map(|&n| g.value(n).item()).collect();
    let embs: Vec<Tensor> = pass
        .source_embeddings
        .iter()
        .map(|&e| g.value(e).clone())
        .collect();
    let mut dg = Graph::new();
    let disc = DiscriminatorNodes::register(&mut dg, &d_only, true);
    let loss = d_objective_nodes(&mut dg, &disc, &embs, g.value(pass.target_embedding), &w).unwrap();
    let grads = dg.backward(loss).unwrap().wrt(&disc.ids());
    d_opt.d.update(&mut d_only.d_tensors_mut(), &grads).unwrap();
    assert_eq!(d_only.d_tensors(), params.d_tensors());
    assert_eq!(d_only.fg_tensors(), start.fg_tensors());
    assert_eq!(d_opt.fg, Optimizers::new(&start, &cfg).unwrap().fg);
}

#[test]
fn conditional_weights_are_recorded_in_range() {
    let trace = train(&tiny_task(), &tiny_config()).unwrap();
    for r in &trace.records {
        assert_eq!(r.weights, crate::model::source_weights(&r.deltas).unwrap().weights);
        assert!(r.weights.iter().all(|&w| (0.5..1.0).contains(&w)));
        assert!((0.0..=1.0).contains(&r.target_accuracy));
    }
}

#[test]
fn plain_supervised_setting_decreases_the_loss() {
    let cfg = TrainConfig {
        beta: 0.0,
        weighting: Weighting::Ones,
        lg_norm: LgNorm::Off,
        iterations: 50,
        ..tiny_config()
    };
    let trace = train(&tiny_task(), &cfg).unwrap();
    let first = trace.records[0].loss_fg;
    let last = trace.records[49].loss_fg;
    assert!(last < first, "{first} -> {last}");
    assert!(trace.records.iter().all(|r| r.weights == vec![1.0, 1.0]));
}

#[test]
fn supervised_all_labeled_matches_the_reduced_objective() {
    let task = tiny_task();
    let cfg = TrainConfig {
        beta: 0.0,
        weighting: Weighting::Ones,
        lg_norm: LgNorm::Off,
        ..tiny_config()
    };
    let cwan = train(&task, &cfg).unwrap();
    let plain = train_supervised(&task, &cfg, SupervisedScope::AllLabeled).unwrap();
    for (a, b) in cwan.records.iter().zip(&plain.records) {
        assert!((a.loss_fg - b.loss_fg).abs() < 1e-12);
    }
    assert_eq!(cwan.final_params.fg_tensors(), plain.final_params.fg_tensors());
}

#[test]
fn target_only_ignores_sources() {
    let task = tiny_task();
    let cfg = tiny_config();
    let a = train_supervised(&task, &cfg, SupervisedScope::TargetOnly).unwrap();
    let no_sources = task.with_sources(Vec::new()).unwrap();
    let b = train_supervised(&no_sources, &cfg, SupervisedScope::TargetOnly).unwrap();
    let acc = |t: &TrainTrace| t.records.iter().map(|r| r.target_accuracy).collect::<Vec<_>>();
    assert_eq!(acc(&a), acc(&b));
    assert!(a.final_params.sources.is_empty());
}

#[test]
fn configuration_errors_surface_before_training() {
    let task = tiny_task();
    let bad = TrainConfig {
        lr_fg: 0.0,
        ..tiny_config()
    };
    assert!(matches!(train(&task, &bad), Err(Error::Config(_))));
    let no_sources = task.with_sources(Vec::new()).unwrap();
    assert!(matches!(train(&no_sources, &tiny_config()), Err(Error::Config(_))));
}

#[test]
fn single_source_gets_unit_weight() {
    let task = synthetic_task(&tiny_spec(), 1, 0).unwrap();
    let trace = train(&task, &tiny_config()).unwrap();
    assert!(trace.records.iter().all(|r| r.weights == vec![1.0]));
}
