//! Sampling, special functions and goodness-of-fit machinery.

mod gof;
mod sampling;
mod special;
mod wasserstein;

pub use gof::{
    ad_null_calibration, anderson_darling, anderson_darling_statistic, anderson_darling_with,
    bootstrap_quantiles, quantile_sorted, tn_null_calibration, tn_statistic, tn_test, Calibration,
    NullCalibration, TestMethod, TestReport, DEFAULT_LEVELS,
};
pub use sampling::{ln_gamma_variate, sample_beta, sample_dirichlet, sample_gamma};
pub use special::{beta_cdf, ln_beta, reg_inc_beta};
pub use wasserstein::{
    coupled_was_estimate, dirichlet_coupled_pair, dirichlet_was_bound, rationalize,
    wasserstein1_1d, weighted_simplex_distance, CoupledEstimate, DirichletCoupling,
};
