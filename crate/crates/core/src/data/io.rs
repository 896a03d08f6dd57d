use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::DomainData;
use crate::error::{Error, ParseErrorKind, Result};
use crate::numerics::Tensor;

/// Reads a domain file: a `n d C` header followed by `n` rows of
/// `label f_1 … f_d`, where label `-1` marks an unlabeled sample.
pub fn load_domain_file(path: impl AsRef<Path>) -> Result<DomainData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_domain(&text, &name, path)
}

pub fn parse_domain(text: &str, name: &str, path: &Path) -> Result<DomainData> {
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
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parsed: Vec<usize> = fields.iter().filter_map(|f| f.parse().ok()).collect();
    if fields.len() != 3 || parsed.len() != 3 || parsed.iter().any(|&v| v == 0) {
        return Err(err(hline, ParseErrorKind::MalformedHeader(header.to_string())));
    }
    let (n, d, classes) = (parsed[0], parsed[1], parsed[2]);

    let mut values = Vec::with_capacity(n * d);
    let mut labels: Vec<Option<usize>> = Vec::with_capacity(n);
    for (lineno, line) in lines {
        if labels.len() == n {
            return Err(err(
                lineno,
                ParseErrorKind::RowCount {
                    expected: n,
                    found: n + 1,
                },
            ));
        }
        let mut fields = line.split_whitespace();
        let label_str = fields.next().unwrap_or_default();
        let label: i64 = label_str
            .parse()
            .map_err(|_| err(lineno, ParseErrorKind::BadNumber(label_str.to_string())))?;
        let features: Vec<&str> = fields.collect();
        if features.len() != d {
            return Err(err(
                lineno,
                ParseErrorKind::RowWidth {
                    expected: d,
                    found: features.len(),
                },
            ));
        }
        labels.push(match label {
            -1 => None,
            l if l >= 0 && (l as u64) < classes as u64 => Some(l as usize),
            l => return Err(err(lineno, ParseErrorKind::LabelOutOfRange { label: l, classes })),
        });
        for f in features {
            let v: f64 = f
                .parse()
                .map_err(|_| err(lineno, ParseErrorKind::BadNumber(f.to_string())))?;
            if !v.is_finite() {
                return Err(err(lineno, ParseErrorKind::NonFinite(f.to_string())));
            }
            values.push(v);
        }
    }
    if labels.len() != n {
        let last = text.lines().count();
        return Err(err(
            last,
            ParseErrorKind::RowCount {
                expected: n,
                found: labels.len(),
            },
        ));
    }

    let labeled = labels.iter().filter(|l| l.is_some()).count();
    let labels = match labeled {
        0 => None,
        _ if labeled == n => Some(labels.into_iter().flatten().collect()),
        _ => {
            return Err(Error::Validation(format!(
                "{}: {labeled} of {n} rows labeled; a domain file must be fully labeled or fully unlabeled",
                path.display()
            )))
        }
    };
    DomainData::new(name, Tensor::matrix(n, d, values)?, labels, classes)
}

/// Renders a domain in file format, floats with 17 significant digits.
pub fn write_domain(domain: &DomainData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", domain.len(), domain.dim(), domain.classes());
    for i in 0..domain.len() {
        let label = domain.labels().map_or(-1, |l| l[i] as i64);
        let _ = write!(out, "{label}");
        for v in domain.features().row(i) {
            let _ = write!(out, " {v:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn save_domain_file(path: impl AsRef<Path>, domain: &DomainData) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_domain(domain)).map_err(|e| Error::io(path, e))
}
