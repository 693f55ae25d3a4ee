//! Index selection for particle resampling.

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleScheme {
    /// Independent draws proportional to weight.
    #[default]
    Multinomial,
    /// One uniform offset and `count` equally spaced pointers.
    Systematic,
}

impl std::str::FromStr for ResampleScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Self::Multinomial),
            "systematic" => Ok(Self::Systematic),
            other => Err(Error::invalid(format!(
                "unknown resampling scheme {other:?}"
            ))),
        }
    }
}

/// Draw `count` indices with probability proportional to `weights`.
///
/// The returned indices are non-decreasing.
pub fn resample_indices(
    weights: &[f64],
    count: usize,
    scheme: ResampleScheme,
    rng: &mut Stream,
) -> Result<Vec<usize>> {
    let total = checked_total(weights)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    if !(total > 0.0) {
        return Err(Error::ZeroWeight("resampling"));
    }
    let pointers = match scheme {
        ResampleScheme::Multinomial => sorted_uniforms(count, rng),
        ResampleScheme::Systematic => {
            let step = 1.0 / count as f64;
            let offset = rng.uniform() * step;
            (0..count).map(|k| offset + k as f64 * step).collect()
        }
    };

    let mut out = Vec::with_capacity(count);
    let mut cumulative = 0.0;
    let mut j = 0usize;
    let last = weights.len() - 1;
    for u in pointers {
        let target = u * total;
        while j < last && cumulative + weights[j] <= target {
            cumulative += weights[j];
            j += 1;
        }
        // Skip trailing zero-weight entries that the clamp to `last` could land on.
        let mut pick = j;
        while weights[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        out.push(pick);
    }
    Ok(out)
}

fn checked_total(weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite("particle weight"));
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight { index, weight: w });
        }
        total += w;
    }
    Ok(total)
}

/// `count` sorted uniforms on `[0, 1)` via normalized exponential spacings.
fn sorted_uniforms(count: usize, rng: &mut Stream) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        acc += exp1(rng);
        out.push(acc);
    }
    let total = acc + exp1(rng);
    for v in &mut out {
        *v /= total;
    }
    out
}

fn exp1(rng: &mut Stream) -> f64 {
    // 1 - u lies in (0, 1], so the log is finite.
    -(1.0 - rng.uniform()).ln()
}
