//! CSV serialization of run summaries.

use std::io::{self, Write};

use crate::experiments::RunSummary;

/// `experiment,variant,seed,final_accuracy`, one row per seed.
pub fn write_per_seed_csv(out: &mut impl Write, summaries: &[RunSummary]) -> io::Result<()> {
    writeln!(out, "experiment,variant,seed,final_accuracy")?;
    for s in summaries {
        for (seed, acc) in s.seeds.iter().zip(&s.accuracies) {
            writeln!(out, "{},{},{seed},{acc}", s.experiment, s.variant)?;
        }
    }
    Ok(())
}

/// `experiment,variant,mean,stderr,n_seeds`, one row per summary.
pub fn write_aggregate_csv(out: &mut impl Write, summaries: &[RunSummary]) -> io::Result<()> {
    writeln!(out, "experiment,variant,mean,stderr,n_seeds")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.experiment,
            s.variant,
            s.mean,
            s.stderr,
            s.seeds.len()
        )?;
    }
    Ok(())
}

/// `seed,w_1..w_K,delta_1..delta_K` from the final iteration of each seed.
pub fn write_noise_csv(out: &mut impl Write, summary: &RunSummary) -> io::Result<()> {
    let k = summary.final_weights.first().map_or(0, Vec::len);
    let mut header = vec!["seed".to_string()];
    header.extend((1..=k).map(|i| format!("w_{i}")));
    header.extend((1..=k).map(|i| format!("delta_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for ((seed, w), d) in summary
        .seeds
        .iter()
        .zip(&summary.final_weights)
        .zip(&summary.final_deltas)
    {
        let cells: Vec<String> = std::iter::once(seed.to_string())
            .chain(w.iter().chain(d).map(f64::to_string))
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
