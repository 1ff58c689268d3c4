//! Expected order statistics of the non-uniform coupon collector with a null
//! coupon, by exhaustive subset enumeration, and a Monte Carlo oracle for it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use super::{AnalyticsError, ProbabilityVector, Result};

/// Largest N accepted by the subset enumeration (2^24 subsets).
pub const ENUMERATION_CAP: usize = 24;

const MC_BATCH: u64 = 8_192;

/// Neumaier compensated sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.c
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as f64
}

/// Sums of subset probabilities for every mask over `p`.
fn subset_sums(p: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; 1 << p.len()];
    for mask in 1usize..sums.len() {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + p[low];
    }
    sums
}

/// `S_h = Σ_{|J| = h} 1 / (1 − p0 − P_J)` for `h = 0..=max_h`.
///
/// The denominator is evaluated as the probability mass of the devices outside
/// `J`, which avoids cancelling against a `p0` close to 1.
fn inverse_complement_sums(p: &[f64], max_h: usize) -> Result<Vec<f64>> {
    let n = p.len();
    let lo_bits = n / 2;
    let (lo, hi) = p.split_at(lo_bits);
    let lo_sums = subset_sums(lo);
    let hi_sums = subset_sums(hi);
    let lo_mask = (1usize << lo.len()) - 1;
    let hi_mask = (1usize << hi.len()) - 1;

    let mut acc = vec![CompensatedSum::default(); max_h + 1];
    for m_hi in 0..=hi_mask {
        let h_hi = m_hi.count_ones() as usize;
        if h_hi > max_h {
            continue;
        }
        let rest_hi = hi_sums[!m_hi & hi_mask];
        for m_lo in 0..=lo_mask {
            let h = h_hi + m_lo.count_ones() as usize;
            if h > max_h {
                continue;
            }
            let outside = rest_hi + lo_sums[!m_lo & lo_mask];
            if outside.is_nan() || outside <= 0.0 {
                return Err(AnalyticsError::Degenerate(format!(
                    "devices outside a subset of size {h} never transmit"
                )));
            }
            acc[h].add(1.0 / outside);
        }
    }
    Ok(acc.into_iter().map(CompensatedSum::value).collect())
}

fn check_capacity(pv: &ProbabilityVector) -> Result<()> {
    if pv.len() > ENUMERATION_CAP {
        return Err(AnalyticsError::Capacity {
            devices: pv.len(),
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

fn combine(big_n: usize, n: usize, s: &[f64]) -> f64 {
    let mut total = CompensatedSum::default();
    for (h, s_h) in s.iter().enumerate().take(n) {
        let sign = if (n - 1 - h).is_multiple_of(2) { 1.0 } else { -1.0 };
        let r = sign * binomial((big_n - h - 1) as u64, (big_n - n) as u64);
        total.add(r * s_h);
    }
    total.value()
}

/// Expected number of draws until `n` distinct devices have been collected.
pub fn expected_draws(pv: &ProbabilityVector, n: usize) -> Result<f64> {
    check_capacity(pv)?;
    let big_n = pv.len();
    if n == 0 || n > big_n {
        return Err(AnalyticsError::Parameter(format!(
            "order statistic {n} outside 1..={big_n}"
        )));
    }
    let s = inverse_complement_sums(pv.p(), n - 1)?;
    Ok(combine(big_n, n, &s))
}

/// Expected time in seconds until `n` of the N devices are discovered.
pub fn expected_order_statistic(pv: &ProbabilityVector, n: usize) -> Result<f64> {
    Ok(expected_draws(pv, n)? * pv.delta_t_s())
}

/// Expected discovery times in seconds for every `n` in `1..=N`, from one
/// subset enumeration.
pub fn expected_order_statistics(pv: &ProbabilityVector) -> Result<Vec<f64>> {
    check_capacity(pv)?;
    let big_n = pv.len();
    let s = inverse_complement_sums(pv.p(), big_n - 1)?;
    Ok((1..=big_n)
        .map(|n| combine(big_n, n, &s) * pv.delta_t_s())
        .collect())
}

/// Monte Carlo estimate of every order statistic up to `max_n`, in seconds.
///
/// Each episode draws i.i.d. outcomes from `(p0, p_1..p_N)` until `max_n`
/// distinct devices are seen. Runs of null outcomes are drawn in one go from
/// their geometric distribution. Episodes run in fixed-size batches, batch
/// `b` on ChaCha stream `b` of `seed`, so the result does not depend on the
/// thread count.
pub fn mc_order_statistics(
    pv: &ProbabilityVector,
    max_n: usize,
    episodes: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(AnalyticsError::Parameter("episodes must be at least 1".into()));
    }
    if max_n == 0 || max_n > pv.len() {
        return Err(AnalyticsError::Parameter(format!(
            "order statistic {max_n} outside 1..={}",
            pv.len()
        )));
    }
    if pv.len() > 128 {
        return Err(AnalyticsError::Capacity {
            devices: pv.len(),
            cap: 128,
        });
    }
    let reachable = pv.p().iter().filter(|&&x| x > 0.0).count();
    if reachable < max_n {
        return Err(AnalyticsError::Degenerate(format!(
            "only {reachable} devices can ever be drawn, {max_n} requested"
        )));
    }
    let mass: f64 = pv.p().iter().sum();
    let cumulative: Vec<f64> = pv
        .p()
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x / mass;
            Some(*acc)
        })
        .collect();
    let null_run = if mass >= 1.0 {
        None
    } else {
        Some(Geometric::new(mass).map_err(|e| AnalyticsError::Parameter(e.to_string()))?)
    };

    let batches = episodes.div_ceil(MC_BATCH);
    let totals: Vec<Vec<u128>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = MC_BATCH.min(episodes - b * MC_BATCH);
            let mut sums = vec![0u128; max_n];
            for _ in 0..count {
                let mut seen = 0u128;
                let mut distinct = 0usize;
                let mut steps = 0u64;
                while distinct < max_n {
                    steps += 1 + null_run.map_or(0, |g| g.sample(&mut rng));
                    let u: f64 = rng.random();
                    let i = cumulative
                        .iter()
                        .position(|&c| u < c)
                        .unwrap_or(cumulative.len() - 1);
                    if seen & (1 << i) == 0 {
                        seen |= 1 << i;
                        sums[distinct] += steps as u128;
                        distinct += 1;
                    }
                }
            }
            sums
        })
        .collect();

    let mut sums = vec![0u128; max_n];
    for batch in totals {
        for (s, x) in sums.iter_mut().zip(batch) {
            *s += x;
        }
    }
    Ok(sums
        .into_iter()
        .map(|s| s as f64 / episodes as f64 * pv.delta_t_s())
        .collect())
}

/// Monte Carlo estimate of the expected time to collect `n` devices, in seconds.
pub fn mc_order_statistic(
    pv: &ProbabilityVector,
    n: usize,
    episodes: u64,
    seed: u64,
) -> Result<f64> {
    Ok(mc_order_statistics(pv, n, episodes, seed)?[n - 1])
}
