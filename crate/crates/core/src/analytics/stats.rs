use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{AnalyticsError, Result};

/// The `1 − α/2` quantile of Student's t with `dof` degrees of freedom.
pub fn t_quantile(alpha: f64, dof: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalyticsError::Parameter(format!(
            "significance level {alpha} outside (0, 1)"
        )));
    }
    if dof == 0 {
        return Err(AnalyticsError::Parameter("degrees of freedom must be positive".into()));
    }
    let t = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| AnalyticsError::Parameter(e.to_string()))?;
    Ok(t.inverse_cdf(1.0 - alpha / 2.0))
}

/// Sample statistics of the n-th discovery time across trials.
///
/// Statistics are computed over the trials that discovered at least `n`
/// devices; `censored` counts the others. With fewer than two usable trials
/// the deviation and interval are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderStatRow {
    pub n: usize,
    pub mean_s: Option<f64>,
    pub std_s: Option<f64>,
    pub ci_halfwidth_s: Option<f64>,
    pub censored: usize,
}

impl OrderStatRow {
    pub fn ci(&self) -> Option<(f64, f64)> {
        Some((
            self.mean_s? - self.ci_halfwidth_s?,
            self.mean_s? + self.ci_halfwidth_s?,
        ))
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci().is_some_and(|(lo, hi)| lo <= value && value <= hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStatSummary {
    pub rows: Vec<OrderStatRow>,
    pub trial_count: usize,
    pub alpha: f64,
    /// `t_{α/2, M−1}`; `None` for a single trial.
    pub t_quantile: Option<f64>,
}

impl OrderStatSummary {
    pub fn row(&self, n: usize) -> Option<&OrderStatRow> {
        self.rows.get(n.checked_sub(1)?)
    }

    pub fn last(&self) -> Option<&OrderStatRow> {
        self.rows.last()
    }

    /// Largest confidence half-width over all rows.
    pub fn max_halfwidth(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.ci_halfwidth_s)
            .fold(0.0, f64::max)
    }
}

/// Summarizes `M >= 1` trials, each giving every device's first-seen time
/// (`None` if the device was never found). A single trial yields means only.
pub fn summarize(trials: &[Vec<Option<f64>>], alpha: f64) -> Result<OrderStatSummary> {
    let m = trials.len();
    if m == 0 {
        return Err(AnalyticsError::Parameter("no trials to summarize".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalyticsError::Parameter(format!(
            "significance level {alpha} outside (0, 1)"
        )));
    }
    let big_n = trials[0].len();
    if trials.iter().any(|t| t.len() != big_n) {
        return Err(AnalyticsError::Parameter(
            "trials disagree on the number of devices".into(),
        ));
    }
    let t = if m >= 2 { Some(t_quantile(alpha, m - 1)?) } else { None };
    let sorted: Vec<Vec<f64>> = trials
        .iter()
        .map(|trial| {
            let mut times: Vec<f64> = trial.iter().flatten().copied().collect();
            times.sort_by(f64::total_cmp);
            times
        })
        .collect();

    let rows = (1..=big_n)
        .map(|n| {
            let xs: Vec<f64> = sorted.iter().filter_map(|s| s.get(n - 1).copied()).collect();
            let k = xs.len();
            let mean = (k > 0).then(|| xs.iter().sum::<f64>() / k as f64);
            let (std, half) = match mean {
                Some(mu) if k >= 2 => {
                    let s = (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (k - 1) as f64)
                        .sqrt();
                    // Censored rows fall back to the quantile for their own sample size.
                    let tq = match t {
                        Some(t) if k == m => t,
                        _ => t_quantile(alpha, k - 1)?,
                    };
                    (Some(s), Some(tq * s / (k as f64).sqrt()))
                }
                _ => (None, None),
            };
            Ok(OrderStatRow {
                n,
                mean_s: mean,
                std_s: std,
                ci_halfwidth_s: half,
                censored: m - k,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(OrderStatSummary {
        rows,
        trial_count: m,
        alpha,
        t_quantile: t,
    })
}
