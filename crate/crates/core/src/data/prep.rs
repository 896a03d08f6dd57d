use rand::seq::SliceRandom;

use crate::data::{seeded_rng, DomainData, UnlabeledTarget};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Draws `labeled_per_class` samples of every class without replacement for
/// the labeled split; everything else becomes the unlabeled split, whose
/// labels are sealed for evaluation.
pub fn split_target(
    domain: &DomainData,
    labeled_per_class: usize,
    seed: u64,
) -> Result<(DomainData, UnlabeledTarget)> {
    let labels = domain.labels().ok_or_else(|| {
        Error::Config(format!(
            "target `{}` must be fully labeled to split and evaluate",
            domain.name
        ))
    })?;
    if labeled_per_class == 0 {
        return Err(Error::Config("labeled-per-class must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed, 0x5_1177);
    let mut labeled = Vec::new();
    for c in 0..domain.classes() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() <= labeled_per_class {
            return Err(Error::Config(format!(
                "target `{}` class {c} has {} samples, need more than {labeled_per_class}",
                domain.name,
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..labeled_per_class]);
    }
    labeled.sort_unstable();
    let mut is_labeled = vec![false; labels.len()];
    for &i in &labeled {
        is_labeled[i] = true;
    }
    let unlabeled: Vec<usize> = (0..labels.len()).filter(|&i| !is_labeled[i]).collect();

    let take = |idx: &[usize], suffix: &str| -> Result<DomainData> {
        DomainData::new(
            format!("{}_{suffix}", domain.name),
            domain.features().select_rows(idx)?,
            Some(idx.iter().map(|&i| labels[i]).collect()),
            domain.classes(),
        )
    };
    let labeled_data = take(&labeled, "labeled")?;
    let unlabeled_data = UnlabeledTarget::seal(take(&unlabeled, "unlabeled")?)?;
    Ok((labeled_data, unlabeled_data))
}

/// Per-feature z-scores from the domain's own mean and (population)
/// standard deviation. Constant features map to 0.
pub fn standardize(domain: &DomainData) -> Result<DomainData> {
    let x = domain.features();
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::Validation(format!(
            "standardize needs at least 2 samples, `{}` has {n}",
            domain.name
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).collect();

    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for ((v, m), s) in x.row(i).iter().zip(&mean).zip(&std) {
            // Relative threshold: a column of identical floats can still
            // leave rounding-level variance.
            out.push(if *s > 1e-12 * m.abs().max(1.0) {
                (v - m) / s
            } else {
                0.0
            });
        }
    }
    domain.with_features(Tensor::matrix(n, d, out)?)
}
