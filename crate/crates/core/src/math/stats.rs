//! Sample moments and goodness-of-fit helpers. Missing values are `NaN` and
//! are dropped pairwise.

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample covariance (divisor n-1) over the positions where both
/// series are present.
pub fn sample_cov(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!(
            "sample_cov got series of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "sample covariance needs at least 2 paired observations, got {n}"
        )));
    }
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let s: f64 = pairs.iter().map(|(x, y)| (x - ma) * (y - mb)).sum();
    Ok(s / (n - 1) as f64)
}

pub fn sample_variance(xs: &[f64]) -> Result<f64> {
    sample_cov(xs, xs)
}

pub fn sample_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    let mask: Vec<bool> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let pick = |s: &[f64]| -> Vec<f64> {
        s.iter()
            .zip(&mask)
            .map(|(&v, &keep)| if keep { v } else { f64::NAN })
            .collect()
    };
    let (a, b) = (pick(a), pick(b));
    let cov = sample_cov(&a, &b)?;
    let va = sample_variance(&a)?;
    let vb = sample_variance(&b)?;
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::DegenerateData("zero variance in correlation".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `sample` and `cdf`.
/// Ties are grouped and left limits are taken at the previous representable
/// value, so mass that rounds onto a single float (e.g. Beta draws within an
/// ulp of 1) is compared on the same grid the sample lives on.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let j = i + xs[i..].iter().take_while(|&&y| y == x).count();
        d = d.max(j as f64 / n - cdf(x)).max(cdf(x.next_down()) - i as f64 / n);
        i = j;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cov_examples() {
        assert_eq!(sample_cov(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 2.0);
        assert_eq!(sample_cov(&[5.0; 4], &[1.0, 9.0, 2.0, 3.0]).unwrap(), 0.0);
        let xs = [1.0, 4.0, 2.0, 8.0];
        // hand: mean 3.75, squared deviations sum 28.75, / 3
        assert!((sample_cov(&xs, &xs).unwrap() - 28.75 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cov_pairwise_deletion() {
        let a = [1.0, f64::NAN, 2.0, 3.0];
        let b = [2.0, 100.0, 4.0, 6.0];
        assert_eq!(sample_cov(&a, &b).unwrap(), 2.0);
        assert!(matches!(
            sample_cov(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(Error::InsufficientData(_))
        ));
        assert!(sample_cov(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ks_of_exact_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&xs, |x| x) <= 0.0005 + 1e-12);
    }

    #[test]
    fn ks_groups_ties() {
        // half the mass on an atom at 1 matches a CDF that jumps there
        let xs = [0.25, 0.75, 1.0, 1.0];
        let cdf = |x: f64| if x >= 1.0 { 1.0 } else { 0.5 * x };
        assert!((ks_statistic(&xs, cdf) - 0.125).abs() < 1e-12);
    }
}
