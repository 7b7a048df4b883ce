//! Chi-square goodness of fit against a uniform split, Welch's two-sample t test, and
//! group-selection bias tests built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod bias;
pub mod special;

pub use bias::{bias_test, bias_test_counts, BiasTestResult, Comparison, GroupSet, Verdict};

/// Expected counts below this make the chi-square approximation questionable.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub counts: Vec<u64>,
    pub expected: Vec<f64>,
    /// Set when some expected count is below [`MIN_EXPECTED_COUNT`].
    pub low_expected_count: bool,
}

/// Upper tail of the chi-square distribution: `Q(df/2, x/2)`.
pub fn chi_square_sf(x: f64, df: u32) -> f64 {
    assert!(df > 0, "chi-square needs df >= 1");
    if x <= 0.0 {
        return 1.0;
    }
    special::gamma_q(df as f64 / 2.0, x / 2.0)
}

/// Goodness of fit of `counts` against equal expected counts.
pub fn chi_square_uniform(counts: &[u64]) -> Result<ChiSquareResult> {
    if counts.len() < 2 {
        return Err(Error::Domain("chi-square needs at least two groups".into()));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Domain("chi-square needs a positive total".into()));
    }
    let k = counts.len() as f64;
    let expected = total as f64 / k;
    let statistic: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let df = counts.len() as u32 - 1;
    let low = expected < MIN_EXPECTED_COUNT;
    if low {
        log::warn!("chi-square expected count {expected:.2} below {MIN_EXPECTED_COUNT}");
    }
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
        counts: counts.to_vec(),
        expected: vec![expected; counts.len()],
        low_expected_count: low,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Unequal-variance two-sample t test, two-sided.
pub fn welch_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::SampleTooSmall { needed: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let pooled_df = na + nb - 2.0;
        return Ok(if ma == mb {
            WelchResult { t: 0.0, df: pooled_df, p_value: 1.0 }
        } else {
            let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
            WelchResult { t, df: pooled_df, p_value: 0.0 }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult {
        t,
        df,
        p_value: special::t_two_sided(t, df),
    })
}
