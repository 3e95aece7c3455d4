//! Weight-magnitude heatmaps as binary PGM plus raw CSV.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

/// Pixel `(i, j)` is `round(255 * |w| / max|w|)`; an all-zero matrix is black.
pub fn render(values: &[f32]) -> Vec<u8> {
    let max = values.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|v| (255.0 * v.abs() / max).round() as u8)
        .collect()
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parse a binary PGM written by `encode_pgm`.
pub fn decode_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    (data.len() == w * h).then(|| (w, h, data.to_vec()))
}

/// Half-open `[start, end)` runs of exact zeros in one row.
pub fn zero_runs(row: &[f32]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (j, &v) in row.iter().enumerate() {
        match (v == 0.0, start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                runs.push((s, j));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, row.len()));
    }
    runs
}

/// Zero runs `(row, start, end)` whose boundaries are not multiples of `group`.
pub fn misaligned_zero_runs(
    values: &[f32],
    cols: usize,
    group: usize,
) -> Vec<(usize, usize, usize)> {
    values
        .chunks(cols)
        .enumerate()
        .flat_map(|(i, row)| {
            zero_runs(row)
                .into_iter()
                .filter(|(s, e)| s % group != 0 || e % group != 0)
                .map(move |(s, e)| (i, s, e))
        })
        .collect()
}

pub fn write_heatmap(
    values: &[f32],
    rows: usize,
    cols: usize,
    pgm: &Path,
    csv_path: &Path,
) -> Result<()> {
    assert_eq!(values.len(), rows * cols);
    fs::write(pgm, encode_pgm(cols, rows, &render(values))).map_err(|e| CliError::io(pgm, e))?;
    let file = fs::File::create(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    for row in values.chunks(cols.max(1)) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(csv_path, e))?;
    Ok(())
}

/// `x.pgm` -> `x.csv`.
pub fn csv_path_for(pgm: &Path) -> std::path::PathBuf {
    pgm.with_extension("csv")
}
