//! Synthetic inputs for demos and tests: a factor model, a portfolio, and
//! histories generated from the model's own assumptions.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::default_model::{default_threshold, CellFactor, FactorHistory, FactorModel, RegionFactor};
use crate::error::Result;
use crate::lgd_a::LgdHistory;
use crate::lgd_b::{lgd_marginal_inverse, lgd_percentile, xi_from_lambda, DefaultRecord, LgdMarginal};
use crate::math::{beta_sample, cholesky_psd, std_normal_quantile, CovarianceMatrix, RngStream};
use crate::portfolio::{CellIndex, Instrument, Portfolio};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub industries: u32,
    pub regions: u32,
    pub firms: u32,
    pub instruments: usize,
    pub rating_classes: u32,
    /// Loading of every cell on its region factor.
    pub b: f64,
    /// Residual scale of every region.
    pub chi: f64,
    /// Correlation between any two region factors.
    pub region_correlation: f64,
    pub tau: f64,
    /// Share of collateralized instruments.
    pub collateral_share: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            industries: 4,
            regions: 3,
            firms: 400,
            instruments: 1000,
            rating_classes: 40,
            b: 0.2,
            chi: 0.1,
            region_correlation: 0.5,
            tau: 0.3,
            collateral_share: 0.4,
        }
    }
}

impl SyntheticSpec {
    fn cells(&self) -> Vec<CellIndex> {
        (1..=self.regions)
            .flat_map(|r| (1..=self.industries).map(move |i| CellIndex::new(i, r)))
            .collect()
    }
}

/// Probability of default for rating `k` of `j` classes: geometric from
/// 0.03% (rating 1) to 30% (rating `j - 1`).
pub fn rating_pd(k: u32, j: u32) -> f64 {
    let top = (j.max(3) - 2) as f64;
    let x = (k.saturating_sub(1)) as f64 / top;
    3e-4 * (1000.0f64).powf(x.min(1.0))
}

/// Homogeneous factor model: loading `b`, residual `χ`, `σ = sqrt(b² + χ²)`.
pub fn factor_model(spec: &SyntheticSpec) -> Result<FactorModel> {
    let sigma = (spec.b * spec.b + spec.chi * spec.chi).sqrt();
    let cells = spec
        .cells()
        .into_iter()
        .map(|c| CellFactor {
            industry: c.industry,
            region: c.region,
            b: spec.b,
            sigma,
        })
        .collect();
    let regions = (1..=spec.regions).map(|r| RegionFactor { region: r, chi: spec.chi }).collect();
    let n = spec.regions as usize;
    let rho = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { spec.region_correlation }).collect())
        .collect();
    FactorModel::new(cells, regions, rho, Vec::new(), spec.tau)
}

/// Firms are spread uniformly over cells; instruments are assigned to firms
/// round-robin so every firm holds at least one. Exposures are in millions.
pub fn portfolio(spec: &SyntheticSpec) -> Result<Portfolio> {
    let mut rng = RngStream::new(spec.seed, 0).generator();
    let cells = spec.cells();
    let firms: Vec<(CellIndex, u32)> = (0..spec.firms)
        .map(|_| {
            let cell = cells[rng.random_range(0..cells.len())];
            // ratings skew towards investment grade
            let u: f64 = rng.random();
            let rating = 1 + ((spec.rating_classes - 2) as f64 * u * u) as u32;
            (cell, rating.min(spec.rating_classes - 1))
        })
        .collect();
    let instruments = (0..spec.instruments)
        .map(|k| {
            let f = k % firms.len();
            let (cell, rating) = firms[f];
            Instrument {
                id: format!("I{k:06}"),
                firm: f as u32 + 1,
                cell,
                rating,
                pd: rating_pd(rating, spec.rating_classes),
                expected_lgd: rng.random_range(0.2..0.8),
                collateralized: rng.random::<f64>() < spec.collateral_share,
                exposure: (rng.random_range(-2.0f64..1.0)).exp(),
            }
        })
        .collect();
    Portfolio::new(instruments, "CHF", spec.rating_classes)
}

/// Cell factor series from the model: `β = b·γ_r + χ·e` with region factors
/// `γ ~ N(0, ρ)`.
pub fn factor_history(model: &FactorModel, periods: usize, seed: u64) -> Result<FactorHistory> {
    let mut rng = RngStream::new(seed, 1).generator();
    let rho = cholesky_psd(&CovarianceMatrix::from_rows(&model.rho)?)?;
    let mut gamma = vec![0.0; model.regions.len()];
    let mut n = vec![0.0; model.regions.len()];
    let mut h = FactorHistory::default();
    for t in 0..periods {
        for x in n.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        rho.apply(&n, &mut gamma);
        for c in &model.cells {
            let r = model.regions.iter().position(|r| r.region == c.region).expect("validated model");
            let e: f64 = StandardNormal.sample(&mut rng);
            h.insert(c.cell(), &time_label(t), c.b * gamma[r] + model.regions[r].chi * e);
        }
    }
    Ok(h)
}

pub fn time_label(t: usize) -> String {
    format!("{t:04}")
}

/// LGD observations whose bucket shape follows `Z = z_mean + ψ·β/sd(β) +
/// noise` with total standard deviation `z_sd`. `loading` in [-1, 1] sets the
/// correlation of `Z` with the cell factor.
pub fn lgd_history(
    history: &FactorHistory,
    m: f64,
    z_mean: f64,
    z_sd: f64,
    loading: f64,
    per_bucket: usize,
    seed: u64,
) -> Result<LgdHistory> {
    let mut rng = RngStream::new(seed, 2).generator();
    let mut out = LgdHistory::default();
    for (cell, series) in &history.series {
        let values: Vec<f64> = series.values().copied().collect();
        let sd = crate::math::sample_variance(&values)?.sqrt().max(1e-12);
        for (t, beta) in series {
            let n: f64 = StandardNormal.sample(&mut rng);
            let z = z_mean + z_sd * (loading * beta / sd + (1.0 - loading * loading).sqrt() * n);
            let mu = z.exp();
            for _ in 0..per_bucket {
                out.insert(*cell, t, beta_sample(mu, mu * (1.0 - m) / m, &mut rng)?);
            }
        }
    }
    Ok(out)
}

/// Default records for the cells of `marginals`, generated with coupling
/// `lambda` (clamped as in calibration).
pub fn default_records(
    marginals: &[(CellIndex, LgdMarginal)],
    per_cell: usize,
    lambda: f64,
    seed: u64,
) -> Result<Vec<DefaultRecord>> {
    let (xi, _) = xi_from_lambda(lambda)?;
    let mut rng = RngStream::new(seed, 3).generator();
    let mut out = Vec::new();
    for (cell, m) in marginals {
        for _ in 0..per_cell {
            let pd = rng.random_range(0.005..0.1);
            let c = default_threshold(pd)?;
            let u: f64 = rng.random_range(1e-9..1.0);
            let g = std_normal_quantile(u * pd)?.min(c - 1e-12);
            let v: f64 = rng.random();
            let lgd = lgd_marginal_inverse(lgd_percentile(u, v, xi), m)?;
            out.push(DefaultRecord { cell: *cell, g, pd, lgd });
        }
    }
    Ok(out)
}

pub fn write_factor_history<W: Write>(w: W, h: &FactorHistory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "industry", "region", "beta"])?;
    for (cell, series) in &h.series {
        for (t, b) in series {
            out.write_record([t.clone(), cell.industry.to_string(), cell.region.to_string(), b.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_lgd_history<W: Write>(w: W, h: &LgdHistory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "industry", "region", "lgd"])?;
    for (cell, buckets) in &h.buckets {
        for (t, obs) in buckets {
            for x in obs {
                out.write_record([t.clone(), cell.industry.to_string(), cell.region.to_string(), x.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_default_records<W: Write>(w: W, records: &[DefaultRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "industry", "region", "g", "pd", "lgd"])?;
    for (k, r) in records.iter().enumerate() {
        out.write_record([
            time_label(k),
            r.cell.industry.to_string(),
            r.cell.region.to_string(),
            r.g.to_string(),
            r.pd.to_string(),
            r.lgd.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
