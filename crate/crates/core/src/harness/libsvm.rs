//! Reader for the LIBSVM text format: `label index:value ...` per line with
//! 1-based feature indices, densified to the largest index seen.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::Dataset;

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    let mut sparse_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue; // blank line
        };
        let label: f64 = label_tok.parse().map_err(|_| {
            Error::Format(format!("{}: line {lineno}: invalid label '{label_tok}'", path.display()))
        })?;

        let mut row = Vec::new();
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| {
                Error::Format(format!(
                    "{}: line {lineno}: expected index:value, got '{tok}'",
                    path.display()
                ))
            })?;
            let idx: usize = idx_str.parse().map_err(|_| {
                Error::Format(format!(
                    "{}: line {lineno}: invalid feature index '{idx_str}'",
                    path.display()
                ))
            })?;
            if idx == 0 {
                return Err(Error::Format(format!(
                    "{}: line {lineno}: feature indices are 1-based",
                    path.display()
                )));
            }
            let val: f64 = val_str.parse().map_err(|_| {
                Error::Format(format!(
                    "{}: line {lineno}: invalid feature value '{val_str}'",
                    path.display()
                ))
            })?;
            max_index = max_index.max(idx);
            row.push((idx, val));
        }
        row.sort_unstable_by_key(|&(idx, _)| idx);
        if row.windows(2).any(|w| w[0].0 == w[1].0) {
            let dup = row.windows(2).find(|w| w[0].0 == w[1].0).expect("found above")[0].0;
            return Err(Error::Format(format!(
                "{}: line {lineno}: duplicate feature index {dup}",
                path.display()
            )));
        }
        labels.push(label);
        sparse_rows.push(row);
    }

    let features = sparse_rows
        .into_iter()
        .map(|row| {
            let mut dense = vec![0.0; max_index];
            for (idx, val) in row {
                dense[idx - 1] = val;
            }
            dense
        })
        .collect();
    Dataset::with_dim(max_index, features, labels)
}

/// Writes a dataset in LIBSVM text form with dense 1-based indices. Float
/// formatting is shortest-round-trip, so reading the file back reproduces
/// the values bit for bit.
pub fn write_libsvm(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..data.count() {
        out.push_str(&data.label(i).to_string());
        for (j, v) in data.feature(i).iter().enumerate() {
            out.push_str(&format!(" {}:{}", j + 1, v));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
