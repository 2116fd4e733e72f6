//! Seedable probability and linear-algebra primitives shared by every model.

pub mod beta;
pub mod linalg;
pub mod normal;
pub mod rng;
pub mod stats;

pub use beta::{beta_cdf, beta_inverse_cdf, beta_sample, fit_beta_mu_mle, LGD_CLAMP};
pub use linalg::{cholesky_psd, repair_psd, sample_correlated_gaussians, CovarianceMatrix, LowerFactor};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};
pub use rng::RngStream;
pub use stats::{ks_statistic, mean, sample_correlation, sample_cov, sample_variance};
