//! Screening statistics: arm proportions, percentile thresholds, and odds
//! ratios.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

/// Event proportion for one arm: `n_ae / n_started`.
pub fn arm_proportion(n_ae: u64, n_started: u64) -> Result<f64, AnalyticsError> {
    if n_started == 0 {
        return Err(AnalyticsError::UndefinedDenominator { n_ae });
    }
    Ok(n_ae as f64 / n_started as f64)
}

/// Percentile by linear interpolation between order statistics at rank
/// `h = (n - 1) * p` over the sorted values.
pub fn percentile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty set");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub value: f64,
    /// True when the Haldane-Anscombe 0.5 continuity correction was applied
    /// because some 2x2 cell was zero.
    pub corrected: bool,
}

/// Odds ratio of `a_events/a_n` versus `b_events/b_n` from the 2x2 table
/// `(a, a_n - a, b, b_n - b)`. When any cell is zero, 0.5 is added to every
/// cell and the result is flagged corrected.
pub fn odds_ratio(a_events: u64, a_n: u64, b_events: u64, b_n: u64) -> Result<OddsRatio, AnalyticsError> {
    if a_n == 0 || b_n == 0 || a_events > a_n || b_events > b_n {
        return Err(AnalyticsError::InvalidCounts {
            a_events,
            a_n,
            b_events,
            b_n,
        });
    }
    let cells = [a_events, a_n - a_events, b_events, b_n - b_events];
    if cells.iter().any(|&c| c == 0) {
        let [a, b, c, d] = cells.map(|v| v as f64 + 0.5);
        Ok(OddsRatio {
            value: (a * d) / (b * c),
            corrected: true,
        })
    } else {
        let [a, b, c, d] = cells.map(|v| v as f64);
        Ok(OddsRatio {
            value: (a * d) / (b * c),
            corrected: false,
        })
    }
}
