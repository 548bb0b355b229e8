//! Parsing of vectors, grids and counts given on the command line.

use crate::error::CliError;

/// Comma-separated reals, e.g. `1,-1`. Negative zero is normalised to zero.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| CliError::Usage(format!("cannot parse vector {text:?}: {e}")))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!("vector {text:?} has non-finite entries")));
    }
    Ok(values.into_iter().map(|v| if v == 0.0 { 0.0 } else { v }).collect())
}

/// `lo:hi:step` or a comma list; the result is finite and strictly increasing.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage(format!("grid {text:?} must look like lo:hi:step")));
        }
        let nums = parse_vector(&parts.join(","))?;
        let (lo, hi, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || hi < lo {
            return Err(CliError::Usage(format!("grid {text:?} is empty: need lo ≤ hi and step > 0")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=count).map(|k| clean(lo + k as f64 * step)).collect()
    } else {
        parse_vector(text)?
    };
    if values.is_empty() {
        return Err(CliError::Usage(format!("grid {text:?} is empty")));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::Usage(format!("grid {text:?} must be strictly increasing")));
    }
    Ok(values)
}

/// Rounds away accumulated grid error so that `4 + 6·0.5` prints as `7`.
fn clean(v: f64) -> f64 {
    let r = (v * 1e12).round() / 1e12;
    if r == 0.0 { 0.0 } else { r }
}

/// A positive count, accepting forms like `2e5`.
pub fn parse_count(text: &str) -> Result<usize, String> {
    let v: f64 = text.trim().parse().map_err(|e| format!("cannot parse count {text:?}: {e}"))?;
    if !(v >= 0.0) || v.fract() != 0.0 || v > 1e15 {
        return Err(format!("count {text:?} must be a non-negative integer"));
    }
    Ok(v as usize)
}

/// Seeds as decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|e| format!("cannot parse seed {text:?}: {e}"))
}
