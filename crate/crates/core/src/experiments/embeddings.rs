//! Embedding export for external visualization.
//!
//! Same layout as a domain file (`n d C` header, one sample per line) with two
//! integer metadata columns after the label: `label domain role e_1 … e_d`.
//! `domain` is the source index `0..K`, or `K` for the target.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::MultiSourceTask;
use crate::error::{Error, ParseErrorKind, Result};
use crate::model::{embed, CwanParams, Domain};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingRole {
    Source = 0,
    TargetLabeled = 1,
    /// Label column holds the held-out evaluation label.
    TargetUnlabeled = 2,
}

impl EmbeddingRole {
    fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(EmbeddingRole::Source),
            1 => Some(EmbeddingRole::TargetLabeled),
            2 => Some(EmbeddingRole::TargetUnlabeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub label: usize,
    pub domain: usize,
    pub role: EmbeddingRole,
    pub embedding: Vec<f64>,
}

fn push_rows(
    out: &mut Vec<EmbeddingRow>,
    emb: &Tensor,
    labels: &[usize],
    domain: usize,
    role: EmbeddingRole,
) {
    for (i, &label) in labels.iter().enumerate() {
        out.push(EmbeddingRow {
            label,
            domain,
            role,
            embedding: emb.row(i).to_vec(),
        });
    }
}

/// Embeds every sample of `task` and writes the result to `path`.
pub fn export_embeddings(
    params: &CwanParams,
    task: &MultiSourceTask,
    slope: f64,
    path: impl AsRef<Path>,
) -> Result<Vec<EmbeddingRow>> {
    let path = path.as_ref();
    let mut rows = Vec::new();
    for (k, s) in task.sources().iter().enumerate() {
        let emb = embed(params, Domain::Source(k), s.features(), slope)?;
        let labels = s.labels().expect("task sources are labeled");
        push_rows(&mut rows, &emb, labels, k, EmbeddingRole::Source);
    }
    let k = task.num_sources();
    let labeled = task.target_labeled();
    let emb = embed(params, Domain::Target, labeled.features(), slope)?;
    let labels = labeled.labels().expect("labeled target split has labels");
    push_rows(&mut rows, &emb, labels, k, EmbeddingRole::TargetLabeled);
    let unlabeled = task.target_unlabeled();
    let emb = embed(params, Domain::Target, unlabeled.features(), slope)?;
    let held_out = unlabeled.held_out().as_slice();
    push_rows(&mut rows, &emb, held_out, k, EmbeddingRole::TargetUnlabeled);

    let dim = params.embedding_dim();
    let mut text = format!("{} {} {}\n", rows.len(), dim, task.classes());
    for r in &rows {
        write!(text, "{} {} {}", r.label, r.domain, r.role as u8).unwrap();
        for v in &r.embedding {
            write!(text, " {v:.16e}").unwrap();
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(rows)
}

/// Reads a file written by [`export_embeddings`]; returns the class count and
/// the rows.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(usize, Vec<EmbeddingRow>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, kind: ParseErrorKind| Error::Parse {
        path: path.to_path_buf(),
        line,
        kind,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, ParseErrorKind::MalformedHeader("empty file".into())))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(hline, ParseErrorKind::MalformedHeader(header.into())))?;
    let [n, dim, classes] = head[..] else {
        return Err(err(hline, ParseErrorKind::MalformedHeader(header.into())));
    };
    let mut rows = Vec::with_capacity(n);
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 3 {
            return Err(err(
                lineno,
                ParseErrorKind::RowWidth {
                    expected: dim + 3,
                    found: fields.len(),
                },
            ));
        }
        let int = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| err(lineno, ParseErrorKind::BadNumber(s.into())))
        };
        let label = int(fields[0])?;
        if label < 0 || label as usize >= classes {
            return Err(err(lineno, ParseErrorKind::LabelOutOfRange { label, classes }));
        }
        let domain = int(fields[1])?;
        let role = EmbeddingRole::from_code(int(fields[2])?)
            .filter(|_| domain >= 0)
            .ok_or_else(|| err(lineno, ParseErrorKind::BadNumber(line.into())))?;
        let embedding = fields[3..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| err(lineno, ParseErrorKind::BadNumber((*s).into())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(EmbeddingRow {
            label: label as usize,
            domain: domain as usize,
            role,
            embedding,
        });
    }
    if rows.len() != n {
        return Err(err(
            hline,
            ParseErrorKind::RowCount {
                expected: n,
                found: rows.len(),
            },
        ));
    }
    Ok((classes, rows))
}
