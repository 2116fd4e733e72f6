//! Beta distribution: regularized incomplete beta, its inverse, sampling and
//! the mean-constrained maximum likelihood fit used for LGD calibration.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};

/// Observations are clamped into this interval before entering a beta
/// likelihood; 0 and 1 have zero density for most shapes.
pub const LGD_CLAMP: (f64, f64) = (1e-4, 1.0 - 1e-4);

const MIN_MLE_OBSERVATIONS: usize = 5;
const LOG_MU_BOUNDS: (f64, f64) = (-8.0, 8.0);

fn check_shape(mu: f64, nu: f64) -> Result<()> {
    if mu > 0.0 && nu > 0.0 && mu.is_finite() && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "beta parameters must be positive and finite, got ({mu}, {nu})"
        )))
    }
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Draw from Beta(mu, nu).
pub fn beta_sample<R: Rng + ?Sized>(mu: f64, nu: f64, rng: &mut R) -> Result<f64> {
    check_shape(mu, nu)?;
    let dist = Beta::new(mu, nu).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Density of Beta(a, b) at x in (0, 1).
pub fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(mu, nu)`, the Beta(mu, nu) CDF.
pub fn beta_cdf(x: f64, mu: f64, nu: f64) -> Result<f64> {
    check_shape(mu, nu)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("beta_cdf requires x in [0,1], got {x}")));
    }
    Ok(beta_cdf_unchecked(x, mu, nu))
}

pub(crate) fn beta_cdf_unchecked(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// Inverse of [`beta_cdf`] in `u`. Safeguarded Newton iteration on a shrinking
/// bracket, so it always converges even where the density is unbounded.
pub fn beta_inverse_cdf(u: f64, mu: f64, nu: f64) -> Result<f64> {
    check_shape(mu, nu)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!(
            "beta_inverse_cdf requires u in [0,1], got {u}"
        )));
    }
    Ok(beta_inverse_unchecked(u, mu, nu))
}

pub(crate) fn beta_inverse_unchecked(u: f64, a: f64, b: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = initial_guess(u, a, b);
    for _ in 0..200 {
        let f = beta_cdf_unchecked(x, a, b) - u;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = beta_pdf(x, a, b);
        let mut next = if pdf > 0.0 && pdf.is_finite() {
            x - f / pdf
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

fn initial_guess(u: f64, a: f64, b: f64) -> f64 {
    // Tail approximations from the leading term of the series expansion at
    // each endpoint; fall back to the mean when neither applies.
    let ln_ab = ln_beta(a, b);
    let left = ((u * a).ln() + ln_ab) / a;
    let right = ((1.0 - u) * b).ln() + ln_ab;
    let x = if u < 0.5 {
        left.exp()
    } else {
        1.0 - (right / b).exp()
    };
    if x > 0.0 && x < 1.0 {
        x
    } else {
        a / (a + b)
    }
}

/// Maximum likelihood estimate of the first shape parameter `mu` of a beta law
/// whose mean is pinned to `m`, i.e. Beta(mu, mu(1-m)/m).
///
/// Observations are clamped to [`LGD_CLAMP`]. The log-likelihood is maximized
/// over `log mu` in [-8, 8] by golden-section search to 1e-8.
pub fn fit_beta_mu_mle(observations: &[f64], m: f64) -> Result<f64> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::Domain(format!("mean must lie in (0,1), got {m}")));
    }
    let clamped: Vec<f64> = observations
        .iter()
        .filter(|x| x.is_finite())
        .map(|x| x.clamp(LGD_CLAMP.0, LGD_CLAMP.1))
        .collect();
    if clamped.len() < MIN_MLE_OBSERVATIONS {
        return Err(Error::InsufficientData(format!(
            "beta MLE needs at least {MIN_MLE_OBSERVATIONS} observations, got {}",
            clamped.len()
        )));
    }
    let first = clamped[0];
    if clamped.iter().all(|&x| x == first) {
        return Err(Error::DegenerateData(
            "all LGD observations are equal".into(),
        ));
    }
    let n = clamped.len() as f64;
    let sum_ln_x: f64 = clamped.iter().map(|x| x.ln()).sum();
    let sum_ln_1mx: f64 = clamped.iter().map(|x| (-x).ln_1p()).sum();
    let ratio = (1.0 - m) / m;
    let neg_loglik = |log_mu: f64| {
        let a = log_mu.exp();
        let b = a * ratio;
        -((a - 1.0) * sum_ln_x + (b - 1.0) * sum_ln_1mx - n * ln_beta(a, b))
    };
    Ok(golden_section_min(neg_loglik, LOG_MU_BOUNDS.0, LOG_MU_BOUNDS.1, 1e-8).exp())
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::RngStream;
    use crate::math::stats::ks_statistic;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn arcsine_cdf(x: f64) -> f64 {
        2.0 / PI * x.sqrt().asin()
    }

    #[test]
    fn cdf_examples() {
        assert!((beta_cdf(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((beta_cdf(0.25, 0.5, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(beta_inverse_cdf(0.0, 2.0, 2.0).unwrap(), 0.0);
        assert_eq!(beta_inverse_cdf(1.0, 2.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn cdf_matches_closed_forms() {
        for i in 1..100 {
            let x = i as f64 / 100.0;
            // Beta(2,2): 3x² - 2x³
            let b22 = 3.0 * x * x - 2.0 * x * x * x;
            assert!((beta_cdf(x, 2.0, 2.0).unwrap() - b22).abs() < 1e-12);
            assert!((beta_cdf(x, 0.5, 0.5).unwrap() - arcsine_cdf(x)).abs() < 1e-10);
            // Beta(a,1): x^a
            assert!((beta_cdf(x, 3.7, 1.0).unwrap() - x.powf(3.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(beta_cdf(0.5, 0.0, 1.0).is_err());
        assert!(beta_cdf(1.5, 1.0, 1.0).is_err());
        assert!(beta_inverse_cdf(-0.1, 1.0, 1.0).is_err());
        let mut rng = RngStream::new(0, 0).generator();
        assert!(beta_sample(-1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn sample_mean_beta_2_2() {
        let mut rng = RngStream::new(11, 0).generator();
        let n = 1_000_000;
        let s: f64 = (0..n).map(|_| beta_sample(2.0, 2.0, &mut rng).unwrap()).sum();
        assert!((s / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn sample_law_arcsine_and_uniform() {
        let mut rng = RngStream::new(12, 0).generator();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| beta_sample(0.5, 0.5, &mut rng).unwrap())
            .collect();
        assert!(ks_statistic(&xs, arcsine_cdf) < 0.01);
        let us: Vec<f64> = (0..100_000)
            .map(|_| beta_sample(1.0, 1.0, &mut rng).unwrap())
            .collect();
        assert!(ks_statistic(&us, |x| x.clamp(0.0, 1.0)) < 0.01);
    }

    #[test]
    fn mle_recovers_shape() {
        let mut rng = RngStream::new(13, 0).generator();
        for (mu, tol) in [(3.0, 0.15), (1.0, 0.05)] {
            let xs: Vec<f64> = (0..10_000)
                .map(|_| beta_sample(mu, mu, &mut rng).unwrap())
                .collect();
            let est = fit_beta_mu_mle(&xs, 0.5).unwrap();
            assert!((est - mu).abs() < tol, "mu={mu} est={est}");
        }
    }

    #[test]
    fn mle_errors() {
        assert!(matches!(
            fit_beta_mu_mle(&[0.2, 0.3, 0.4], 0.5),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            fit_beta_mu_mle(&[0.3; 8], 0.5),
            Err(Error::DegenerateData(_))
        ));
        // 0 and 1 are clamped, not rejected
        assert!(fit_beta_mu_mle(&[0.0, 1.0, 0.5, 0.2, 0.7, 0.4], 0.5).is_ok());
        assert!(fit_beta_mu_mle(&[0.1, 0.2, 0.3, 0.4, 0.5], 1.0).is_err());
    }

    #[test]
    fn mle_error_shrinks_with_sample_size() {
        let mut wins = 0;
        for trial in 0..20 {
            let mut rng = RngStream::new(100 + trial, 0).generator();
            let mut err = |n: usize| {
                let xs: Vec<f64> = (0..n)
                    .map(|_| beta_sample(2.0, 3.0, &mut rng).unwrap())
                    .collect();
                (fit_beta_mu_mle(&xs, 0.4).unwrap() - 2.0).abs()
            };
            let small = err(1_000);
            let large = err(100_000);
            if large < small {
                wins += 1;
            }
        }
        assert!(wins >= 18, "wins={wins}");
    }

    proptest! {
        #[test]
        fn inverse_round_trip(u in 1e-6f64..(1.0 - 1e-6), a in 0.3f64..8.0, b in 0.3f64..8.0) {
            let x = beta_inverse_cdf(u, a, b).unwrap();
            prop_assert!((beta_cdf(x, a, b).unwrap() - u).abs() < 1e-8);
        }

        #[test]
        fn cdf_monotone(x in 0.0f64..1.0, d in 0.0f64..0.2, a in 0.3f64..8.0, b in 0.3f64..8.0) {
            let y = (x + d).min(1.0);
            prop_assert!(beta_cdf(x, a, b).unwrap() <= beta_cdf(y, a, b).unwrap() + 1e-15);
        }
    }
}
