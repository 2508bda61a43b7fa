//! Text tensor dump: header line `rows cols nmaps`, then whitespace-separated
//! values in map-major row-major order, printed with 17 decimal digits of
//! mantissa so `f64` round-trips exactly.

use std::io::Write;

use crate::error::{AppError, Result};

pub fn write_tensor(
    mut w: impl Write,
    rows: usize,
    cols: usize,
    n_maps: usize,
    values: &[f64],
) -> Result<()> {
    if values.len() != rows * cols * n_maps {
        return Err(AppError::internal(format!(
            "tensor dump: {} values for {rows}x{cols}x{n_maps}",
            values.len()
        )));
    }
    let mut out = format!("{rows} {cols} {n_maps}\n");
    let per_line = cols.max(1);
    for chunk in values.chunks(per_line) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    w.write_all(out.as_bytes())
        .map_err(|e| AppError::data(format!("writing tensor dump: {e}")))
}

/// Parse one tensor from a whitespace token stream.
pub fn read_tensor<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut next = |what: &str| -> Result<&'a str> {
        tokens
            .next()
            .ok_or_else(|| AppError::data(format!("tensor dump: missing {what}")))
    };
    let rows: usize = next("rows")?
        .parse()
        .map_err(|_| AppError::data("tensor dump: bad rows"))?;
    let cols: usize = next("cols")?
        .parse()
        .map_err(|_| AppError::data("tensor dump: bad cols"))?;
    let n_maps: usize = next("nmaps")?
        .parse()
        .map_err(|_| AppError::data("tensor dump: bad nmaps"))?;
    let n = rows * cols * n_maps;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let tok = next("value")?;
        values.push(
            tok.parse::<f64>()
                .map_err(|_| AppError::data(format!("tensor dump: bad value '{tok}'")))?,
        );
    }
    Ok((rows, cols, n_maps, values))
}
