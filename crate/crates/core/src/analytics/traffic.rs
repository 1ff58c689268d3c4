use super::{AnalyticsError, Result};

pub const DEFAULT_DELTA_T_S: f64 = 0.1;
pub const DEFAULT_MULTI_ARRIVAL_THRESHOLD: f64 = 0.01;

/// Mean and (population) standard deviation of one device's inter-arrival times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficStats {
    pub mu_s: f64,
    pub sigma_s: f64,
    pub sample_count: usize,
}

impl TrafficStats {
    pub fn rate(&self) -> f64 {
        1.0 / self.mu_s
    }
}

/// Estimates mean and standard deviation from `K >= 2` inter-arrival samples.
/// The deviation divides by `K`, not `K - 1`.
pub fn traffic_stats(interarrivals: &[f64]) -> Result<TrafficStats> {
    let k = interarrivals.len();
    if k < 2 {
        return Err(AnalyticsError::Parameter(format!(
            "need at least 2 inter-arrival samples, got {k}"
        )));
    }
    if let Some(bad) = interarrivals.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(AnalyticsError::Parameter(format!(
            "inter-arrival time {bad} is not a finite non-negative number"
        )));
    }
    let mu = interarrivals.iter().sum::<f64>() / k as f64;
    if mu <= 0.0 {
        return Err(AnalyticsError::Parameter("mean inter-arrival is zero".into()));
    }
    let var = interarrivals.iter().map(|t| (t - mu).powi(2)).sum::<f64>() / k as f64;
    Ok(TrafficStats {
        mu_s: mu,
        sigma_s: var.sqrt(),
        sample_count: k,
    })
}

/// Probability that a Poisson process of `total_rate` produces two or more
/// arrivals within `delta_t_s`.
pub fn multi_arrival_probability(total_rate: f64, delta_t_s: f64) -> f64 {
    let m = total_rate * delta_t_s;
    // 1 - e^{-m} - m e^{-m}, written to stay accurate for small m.
    let p = -(-m).exp_m1() - m * (-m).exp();
    p.max(0.0)
}

/// Per-step transmit probabilities of N devices plus the null outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    p0: f64,
    p: Vec<f64>,
    delta_t_s: f64,
    channel_count_divisor: f64,
}

impl ProbabilityVector {
    /// Builds a vector from device probabilities; `p0 = 1 - Σp`.
    pub fn new(p: Vec<f64>, delta_t_s: f64) -> Result<Self> {
        Self::with_divisor(p, delta_t_s, 1.0)
    }

    fn with_divisor(p: Vec<f64>, delta_t_s: f64, divisor: f64) -> Result<Self> {
        if p.is_empty() {
            return Err(AnalyticsError::Parameter("probability vector has no devices".into()));
        }
        if !(delta_t_s > 0.0 && delta_t_s.is_finite()) {
            return Err(AnalyticsError::Parameter(format!(
                "time step must be positive, got {delta_t_s}"
            )));
        }
        if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(AnalyticsError::Parameter(format!(
                "device probability {bad} outside [0, 1]"
            )));
        }
        let total: f64 = p.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(AnalyticsError::Parameter(format!(
                "device probabilities sum to {total} > 1"
            )));
        }
        Ok(ProbabilityVector {
            p0: (1.0 - total).max(0.0),
            p,
            delta_t_s,
            channel_count_divisor: divisor,
        })
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn delta_t_s(&self) -> f64 {
        self.delta_t_s
    }

    /// The channel divisor used by [`discretize`]; 1 for hand-built vectors
    /// and for [`discretize_weighted`].
    pub fn channel_count_divisor(&self) -> f64 {
        self.channel_count_divisor
    }

    /// Every device probability multiplied by `s`, null outcome re-normalized.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let p = self.p.iter().map(|x| x * s).collect();
        Self::with_divisor(p, self.delta_t_s, self.channel_count_divisor / s)
    }
}

/// Discretizes Poisson devices of the given rates (per second) into steps of
/// `delta_t_s`, for a scanner that sees each device `1 / channel_count` of the time.
///
/// `p_i = (λ_i Δt) e^{−λ_i Δt} / C` and `p0 = 1 − Σ p_i`. Fails when two or
/// more arrivals per step (aggregate rate, continuous monitoring) are more
/// likely than `threshold`.
pub fn discretize(
    rates: &[f64],
    delta_t_s: f64,
    channel_count: u32,
    threshold: f64,
) -> Result<ProbabilityVector> {
    if channel_count == 0 {
        return Err(AnalyticsError::Parameter("channel count must be at least 1".into()));
    }
    let divisor = channel_count as f64;
    let weighted: Vec<(f64, f64)> = rates.iter().map(|&r| (r, divisor)).collect();
    let mut pv = discretize_weighted(&weighted, delta_t_s, threshold)?;
    pv.channel_count_divisor = divisor;
    Ok(pv)
}

/// Like [`discretize`] with a per-device divisor `(rate, divisor)`; a divisor
/// of `d` means the device's channels are monitored a fraction `1/d` of the time.
pub fn discretize_weighted(
    devices: &[(f64, f64)],
    delta_t_s: f64,
    threshold: f64,
) -> Result<ProbabilityVector> {
    if devices.is_empty() {
        return Err(AnalyticsError::Parameter("no device rates given".into()));
    }
    if !(delta_t_s > 0.0 && delta_t_s.is_finite()) {
        return Err(AnalyticsError::Parameter(format!(
            "time step must be positive, got {delta_t_s}"
        )));
    }
    for &(rate, divisor) in devices {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(AnalyticsError::Parameter(format!(
                "device rate must be positive, got {rate}"
            )));
        }
        if !(divisor >= 1.0 && divisor.is_finite()) {
            return Err(AnalyticsError::Parameter(format!(
                "channel divisor must be at least 1, got {divisor}"
            )));
        }
    }
    let total_rate: f64 = devices.iter().map(|(r, _)| r).sum();
    let probability = multi_arrival_probability(total_rate, delta_t_s);
    if probability > threshold {
        return Err(AnalyticsError::DeltaTooCoarse {
            delta_t_s,
            probability,
            threshold,
        });
    }
    let p = devices
        .iter()
        .map(|&(rate, divisor)| {
            let m = rate * delta_t_s;
            m * (-m).exp() / divisor
        })
        .collect();
    ProbabilityVector::with_divisor(p, delta_t_s, 1.0)
}

/// Expected time to the first arrival of a superposition of Poisson devices
/// on a continuously monitored channel: `1 / Σ λ_i`.
pub fn continuous_min_check(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(AnalyticsError::Parameter("no device rates given".into()));
    }
    let total: f64 = rates.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(AnalyticsError::Parameter("total rate must be positive".into()));
    }
    Ok(1.0 / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn constant_samples() {
        let s = traffic_stats(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.mu_s, 2.0);
        assert_eq!(s.sigma_s, 0.0);
        assert_eq!(s.sample_count, 3);
    }

    #[test]
    fn population_deviation() {
        let s = traffic_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mu_s, 2.0);
        assert!((s.sigma_s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.sigma_s - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn too_few_samples() {
        assert!(traffic_stats(&[1.0]).is_err());
        assert!(traffic_stats(&[]).is_err());
        assert!(traffic_stats(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn exponential_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let exp = Exp::new(1.0 / 5.0).unwrap();
        let samples: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut rng)).collect();
        let s = traffic_stats(&samples).unwrap();
        assert!((s.mu_s - 5.0).abs() / 5.0 < 0.03, "mu {}", s.mu_s);
        assert!((s.sigma_s - 5.0).abs() / 5.0 < 0.03, "sigma {}", s.sigma_s);
    }

    #[test]
    fn single_device_probability() {
        let pv = discretize(&[1.0], 0.1, 1, DEFAULT_MULTI_ARRIVAL_THRESHOLD).unwrap();
        assert!((pv.p()[0] - 0.1 * (-0.1f64).exp()).abs() < 1e-15);
        assert!((pv.p()[0] - 0.0904837).abs() < 1e-7);
        assert!((pv.p0() + pv.p()[0] - 1.0).abs() < 1e-15);

        let pv16 = discretize(&[1.0], 0.1, 16, DEFAULT_MULTI_ARRIVAL_THRESHOLD).unwrap();
        assert!((pv16.p()[0] - 0.0056552).abs() < 1e-7);
        assert_eq!(pv16.channel_count_divisor(), 16.0);
    }

    #[test]
    fn multi_arrival_matches_poisson_terms() {
        // Two unit-rate devices: Pr(Z = 0) = e^{-0.2}.
        let m: f64 = 0.2;
        let pz0 = (-m).exp();
        assert!((pz0 - 0.8187).abs() < 1e-4);
        let pz1 = m * (-m).exp();
        let direct = 1.0 - pz0 - pz1;
        assert!((multi_arrival_probability(2.0, 0.1) - direct).abs() < 1e-15);
        assert!(multi_arrival_probability(0.0, 0.1) == 0.0);
    }

    #[test]
    fn coarse_step_rejected() {
        let err = discretize(&[5.0, 5.0], 0.1, 1, 0.01).unwrap_err();
        match err {
            AnalyticsError::DeltaTooCoarse { probability, .. } => {
                assert!((probability - multi_arrival_probability(10.0, 0.1)).abs() < 1e-15)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(discretize(&[5.0, 5.0], 0.01, 1, 0.01).is_ok());
    }

    #[test]
    fn invalid_inputs() {
        assert!(discretize(&[], 0.1, 1, 0.01).is_err());
        assert!(discretize(&[1.0], 0.0, 1, 0.01).is_err());
        assert!(discretize(&[1.0], 0.1, 0, 0.01).is_err());
        assert!(discretize(&[-1.0], 0.1, 1, 0.01).is_err());
        assert!(ProbabilityVector::new(vec![0.7, 0.6], 1.0).is_err());
        assert!(ProbabilityVector::new(vec![], 1.0).is_err());
    }

    #[test]
    fn continuous_min() {
        assert_eq!(continuous_min_check(&[1.0]).unwrap(), 1.0);
        assert_eq!(continuous_min_check(&[1.0, 1.0]).unwrap(), 0.5);
        assert!(continuous_min_check(&[]).is_err());
    }
}
