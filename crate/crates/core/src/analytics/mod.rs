//! Traffic statistics, the discrete-time coupon-collector model of device
//! discovery, and the estimators used to summarize repeated scan trials.

mod coupon;
mod stats;
mod traffic;

use thiserror::Error;

pub use coupon::{
    expected_draws, expected_order_statistic, expected_order_statistics, mc_order_statistic,
    mc_order_statistics, ENUMERATION_CAP,
};
pub use stats::{summarize, t_quantile, OrderStatRow, OrderStatSummary};
pub use traffic::{
    continuous_min_check, discretize, discretize_weighted, multi_arrival_probability,
    traffic_stats, ProbabilityVector, TrafficStats, DEFAULT_DELTA_T_S,
    DEFAULT_MULTI_ARRIVAL_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(
        "time step {delta_t_s} s too coarse: Pr(two or more arrivals) = {probability:.5} exceeds {threshold}; \
         use a smaller --delta-t"
    )]
    DeltaTooCoarse {
        delta_t_s: f64,
        probability: f64,
        threshold: f64,
    },
    #[error("degenerate probability vector: {0}")]
    Degenerate(String),
    #[error("{devices} devices exceeds the exhaustive enumeration cap of {cap}")]
    Capacity { devices: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, AnalyticsError>;
