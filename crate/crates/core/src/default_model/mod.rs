//! Structural correlated-default model.
//!
//! Each firm's standardized return is
//! `G = (β_cell + ε_firm) / sqrt(σ_cell² + τ_firm²)`, where the cell factors
//! `β` share the covariance `ρ[r1][r2]·b1·b2 + χ_r²·[same cell]` and `ε` is
//! idiosyncratic. A firm defaults in a period when `G < Φ⁻¹(pd)`.

pub(crate) mod calibration;

pub use calibration::{decompose_beta_series, BetaDecomposition, FactorHistory, MIN_HISTORY};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{
    repair_psd, sample_correlated_gaussians, std_normal_cdf, std_normal_quantile,
    CovarianceMatrix, LowerFactor,
};
use crate::portfolio::{CellIndex, FirmInfo, Portfolio};

/// Probabilities of default are clamped into this range before inversion.
pub const PD_CLAMP: (f64, f64) = (1e-6, 1.0 - 1e-6);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFactor {
    pub industry: u32,
    pub region: u32,
    /// Loading `b` of the cell on its region factor.
    pub b: f64,
    /// Homoskedastic volatility `σ` of the cell component.
    pub sigma: f64,
}

impl CellFactor {
    pub fn cell(&self) -> CellIndex {
        CellIndex::new(self.industry, self.region)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFactor {
    pub region: u32,
    /// Residual scale `χ` shared by all industries of the region.
    pub chi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmFactor {
    pub firm: u32,
    /// Heteroskedastic (firm-specific) volatility `τ`.
    pub tau: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_equity: Option<f64>,
}

/// Calibrated factor structure. Cells, regions and firms are kept sorted;
/// `rho` is indexed in the order of `regions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub cells: Vec<CellFactor>,
    pub regions: Vec<RegionFactor>,
    pub rho: Vec<Vec<f64>>,
    #[serde(default)]
    pub firms: Vec<FirmFactor>,
    /// `τ` for firms without an explicit entry.
    pub default_tau: f64,
}

impl FactorModel {
    /// Sorts, validates and (if needed) repairs `rho` to the nearest PSD
    /// correlation matrix.
    pub fn new(
        mut cells: Vec<CellFactor>,
        regions: Vec<RegionFactor>,
        rho: Vec<Vec<f64>>,
        mut firms: Vec<FirmFactor>,
        default_tau: f64,
    ) -> Result<Self> {
        cells.sort_by_key(|c| c.cell());
        firms.sort_by_key(|f| f.firm);
        let mut order: Vec<usize> = (0..regions.len()).collect();
        order.sort_by_key(|&i| regions[i].region);
        if rho.len() != regions.len() || rho.iter().any(|r| r.len() != regions.len()) {
            return Err(Error::LengthMismatch(format!(
                "rho must be {0}x{0} to match the regions",
                regions.len()
            )));
        }
        let rho: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| order.iter().map(|&j| rho[i][j]).collect())
            .collect();
        let regions: Vec<RegionFactor> = order.iter().map(|&i| regions[i].clone()).collect();
        let mut model = Self {
            cells,
            regions,
            rho,
            firms,
            default_tau,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks invariants after deserialization; repairs `rho` if it is not PSD.
    pub fn validate(&mut self) -> Result<()> {
        if self.cells.windows(2).any(|w| w[0].cell() >= w[1].cell()) {
            return Err(Error::Validation("cells must be unique and sorted".into()));
        }
        if self.regions.windows(2).any(|w| w[0].region >= w[1].region) {
            return Err(Error::Validation("regions must be unique and sorted".into()));
        }
        if self.firms.windows(2).any(|w| w[0].firm >= w[1].firm) {
            return Err(Error::Validation("firms must be unique and sorted".into()));
        }
        for c in &self.cells {
            if !(c.sigma > 0.0 && c.sigma.is_finite() && c.b.is_finite()) {
                return Err(Error::Validation(format!(
                    "cell {} needs sigma > 0 and finite b",
                    c.cell()
                )));
            }
            if self.region_index(c.region).is_err() {
                return Err(Error::Validation(format!(
                    "cell {} refers to an unknown region",
                    c.cell()
                )));
            }
        }
        for r in &self.regions {
            if !(r.chi >= 0.0 && r.chi.is_finite()) {
                return Err(Error::Validation(format!("region {} needs chi >= 0", r.region)));
            }
        }
        for f in &self.firms {
            if !(f.tau > 0.0 && f.tau.is_finite()) {
                return Err(Error::Validation(format!("firm {} needs tau > 0", f.firm)));
            }
        }
        if !(self.default_tau > 0.0 && self.default_tau.is_finite()) {
            return Err(Error::Validation("default_tau must be > 0".into()));
        }
        let n = self.regions.len();
        if self.rho.len() != n || self.rho.iter().any(|r| r.len() != n) {
            return Err(Error::LengthMismatch("rho does not match regions".into()));
        }
        for i in 0..n {
            if (self.rho[i][i] - 1.0).abs() > 1e-9 {
                return Err(Error::Validation("rho must have a unit diagonal".into()));
            }
        }
        let rho = CovarianceMatrix::from_rows(&self.rho)?;
        if rho.min_eigenvalue() < -1e-12 {
            log::warn!("region correlation matrix is not PSD; repairing");
            self.rho = repair_psd(&rho).to_rows();
        }
        Ok(())
    }

    pub fn cell(&self, cell: CellIndex) -> Result<&CellFactor> {
        self.cells
            .binary_search_by_key(&cell, |c| c.cell())
            .map(|i| &self.cells[i])
            .map_err(|_| Error::UnknownCell {
                industry: cell.industry,
                region: cell.region,
            })
    }

    fn region_index(&self, region: u32) -> Result<usize> {
        self.regions
            .binary_search_by_key(&region, |r| r.region)
            .map_err(|_| Error::Validation(format!("unknown region {region}")))
    }

    pub fn firm(&self, firm: u32) -> Option<&FirmFactor> {
        self.firms
            .binary_search_by_key(&firm, |f| f.firm)
            .ok()
            .map(|i| &self.firms[i])
    }

    pub fn tau(&self, firm: u32) -> f64 {
        self.firm(firm).map_or(self.default_tau, |f| f.tau)
    }

    /// `Cov(β_c1, β_c2) = ρ[r1][r2]·b1·b2 + χ_r²` (second term only when the
    /// cells coincide).
    pub fn beta_cell_covariance(&self, c1: CellIndex, c2: CellIndex) -> Result<f64> {
        let f1 = self.cell(c1)?;
        let f2 = self.cell(c2)?;
        let r1 = self.region_index(c1.region)?;
        let r2 = self.region_index(c2.region)?;
        let mut cov = self.rho[r1][r2] * f1.b * f2.b;
        if c1 == c2 {
            let chi = self.regions[r1].chi;
            cov += chi * chi;
        }
        Ok(cov)
    }

    /// Covariance of the cell factors in the given order.
    pub fn beta_covariance_matrix(&self, cells: &[CellIndex]) -> Result<CovarianceMatrix> {
        let n = cells.len();
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.beta_cell_covariance(cells[i], cells[j])?;
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        CovarianceMatrix::from_rows(&rows)
    }

    /// `sqrt(σ_cell² + τ_firm²)`, the scale that standardizes `β + ε`.
    pub fn total_volatility(&self, firm: u32, cell: CellIndex) -> Result<f64> {
        let sigma = self.cell(cell)?.sigma;
        let tau = self.tau(firm);
        let v = (sigma * sigma + tau * tau).sqrt();
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::ZeroDenominator(format!(
                "sigma² + tau² is zero for firm {firm}"
            )))
        }
    }

    /// Correlation of the standardized returns of two firms; 1 on the
    /// diagonal.
    pub fn g_correlation(&self, f1: (u32, CellIndex), f2: (u32, CellIndex)) -> Result<f64> {
        if f1.0 == f2.0 {
            return Ok(1.0);
        }
        let cov = self.beta_cell_covariance(f1.1, f2.1)?;
        Ok(cov / (self.total_volatility(f1.0, f1.1)? * self.total_volatility(f2.0, f2.1)?))
    }

    /// Correlation matrix of `G` over the portfolio's non-defaulted firms,
    /// in ascending firm order. Not yet repaired; [`crate::math::cholesky_psd`]
    /// does that.
    pub fn build_g_correlation_matrix(&self, portfolio: &Portfolio) -> Result<GCorrelation> {
        let firms: Vec<FirmInfo> = portfolio.firms().into_iter().filter(|f| !f.defaulted).collect();
        let n = firms.len();
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = 1.0;
            for j in 0..i {
                let v = self.g_correlation((firms[i].firm, firms[i].cell), (firms[j].firm, firms[j].cell))?;
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        Ok(GCorrelation {
            firms,
            matrix: CovarianceMatrix::from_rows(&rows)?,
        })
    }

    /// `Φ(g)` with `g = (-log E - μ + ½(σ²+τ²)) / sqrt(σ²+τ²)`.
    pub fn conditional_pd(&self, firm: u32, cell: CellIndex) -> Result<f64> {
        let f = self.firm(firm).ok_or(Error::UnknownFirm(firm))?;
        let log_equity = f.log_equity.ok_or_else(|| {
            Error::Validation(format!("firm {firm} has no log-equity level"))
        })?;
        let s = self.total_volatility(firm, cell)?;
        let g = (-log_equity - f.drift + 0.5 * s * s) / s;
        Ok(std_normal_cdf(g))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

/// Reads `firm,tau[,drift][,log_equity]`.
pub fn load_firm_factors(path: &std::path::Path) -> Result<Vec<FirmFactor>> {
    let table = crate::csvio::CsvTable::from_path(path, &["firm", "tau"])?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for row in table.rows() {
        let firm = row.u32("firm")?;
        if !seen.insert(firm) {
            return Err(row.error(format!("duplicate firm {firm}")));
        }
        let tau = row.f64("tau")?;
        if !(tau > 0.0) {
            return Err(row.error(format!("tau must be positive, got {tau}")));
        }
        out.push(FirmFactor {
            firm,
            tau,
            drift: row.opt_f64("drift")?.unwrap_or(0.0),
            log_equity: row.opt_f64("log_equity")?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GCorrelation {
    pub firms: Vec<FirmInfo>,
    pub matrix: CovarianceMatrix,
}

/// `c = Φ⁻¹(pd)`, with pd first clamped into [`PD_CLAMP`].
pub fn default_threshold(pd: f64) -> Result<f64> {
    if !(pd > 0.0 && pd < 1.0) {
        return Err(Error::Domain(format!("pd must lie in (0,1), got {pd}")));
    }
    std_normal_quantile(clamp_pd(pd))
}

pub fn clamp_pd(pd: f64) -> f64 {
    pd.clamp(PD_CLAMP.0, PD_CLAMP.1)
}

/// One period's standardized returns and default indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultScenario {
    pub g: Vec<f64>,
    pub indicators: Vec<bool>,
}

/// Draws correlated standardized returns and flags `g < c`.
pub fn simulate_defaults<R: Rng + ?Sized>(
    corr_factor: &LowerFactor,
    thresholds: &[f64],
    rng: &mut R,
) -> Result<DefaultScenario> {
    if corr_factor.dim() != thresholds.len() {
        return Err(Error::LengthMismatch(format!(
            "factor dimension {} vs {} thresholds",
            corr_factor.dim(),
            thresholds.len()
        )));
    }
    let g = sample_correlated_gaussians(corr_factor, rng);
    let indicators = g.iter().zip(thresholds).map(|(g, c)| g < c).collect();
    Ok(DefaultScenario { g, indicators })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cholesky_psd, RngStream};
    use crate::portfolio::Instrument;

    fn cell(i: u32, r: u32) -> CellIndex {
        CellIndex::new(i, r)
    }

    /// Two regions; cells (1,1), (2,1), (1,2); b = 0.2 everywhere.
    fn model(rho12: f64, chi: f64) -> FactorModel {
        FactorModel::new(
            vec![
                CellFactor { industry: 1, region: 1, b: 0.2, sigma: 0.2 },
                CellFactor { industry: 2, region: 1, b: 0.2, sigma: 0.2 },
                CellFactor { industry: 1, region: 2, b: 0.2, sigma: 0.2 },
            ],
            vec![RegionFactor { region: 1, chi }, RegionFactor { region: 2, chi }],
            vec![vec![1.0, rho12], vec![rho12, 1.0]],
            vec![],
            0.12f64.sqrt(),
        )
        .unwrap()
    }

    #[test]
    fn beta_covariance_examples() {
        let m = model(0.0, 0.1);
        assert!((m.beta_cell_covariance(cell(1, 1), cell(1, 1)).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(m.beta_cell_covariance(cell(2, 1), cell(1, 2)).unwrap(), 0.0);
        assert!((m.beta_cell_covariance(cell(1, 1), cell(2, 1)).unwrap() - 0.04).abs() < 1e-15);
        assert!(matches!(
            m.beta_cell_covariance(cell(9, 9), cell(1, 1)),
            Err(Error::UnknownCell { .. })
        ));
    }

    #[test]
    fn g_correlation_examples() {
        // same cell, Var(β) = b² = 0.04 = σ², τ² = 0.12
        let m = model(0.0, 0.0);
        let r = m.g_correlation((1, cell(1, 1)), (2, cell(1, 1))).unwrap();
        assert!((r - 0.25).abs() < 1e-12);
        assert_eq!(m.g_correlation((1, cell(1, 1)), (2, cell(1, 2))).unwrap(), 0.0);
        assert_eq!(m.g_correlation((3, cell(1, 1)), (3, cell(1, 1))).unwrap(), 1.0);
    }

    fn portfolio(cells: &[CellIndex]) -> Portfolio {
        let inst = cells
            .iter()
            .enumerate()
            .map(|(k, &c)| Instrument {
                id: format!("i{k}"),
                firm: k as u32 + 1,
                cell: c,
                rating: 5,
                pd: 0.01,
                expected_lgd: 0.5,
                collateralized: false,
                exposure: 1.0,
            })
            .collect();
        Portfolio::new(inst, "CHF", 40).unwrap()
    }

    #[test]
    fn g_matrix_examples() {
        let m = model(0.0, 0.0);
        let one = m.build_g_correlation_matrix(&portfolio(&[cell(1, 1)])).unwrap();
        assert_eq!(one.matrix.to_rows(), vec![vec![1.0]]);
        let indep = m
            .build_g_correlation_matrix(&portfolio(&[cell(1, 1), cell(1, 2)]))
            .unwrap();
        assert_eq!(indep.matrix.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let same = m
            .build_g_correlation_matrix(&portfolio(&[cell(1, 1), cell(1, 1)]))
            .unwrap();
        assert!((same.matrix.get(0, 1) - 0.25).abs() < 1e-12);
        assert!(same.matrix.min_eigenvalue() > 0.0);
    }

    #[test]
    fn thresholds() {
        assert_eq!(default_threshold(0.5).unwrap(), 0.0);
        assert!((default_threshold(0.01).unwrap() + 2.326348).abs() < 1e-5);
        assert!((default_threshold(0.975).unwrap() - 1.959964).abs() < 1e-5);
        assert!(default_threshold(0.0).is_err());
        assert!(default_threshold(1.2).is_err());
        // clamped, so finite
        let c = default_threshold(1e-300).unwrap();
        assert!((c - std_normal_quantile(1e-6).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn conditional_pd_examples() {
        let mut m = model(0.0, 0.0);
        // σ² + τ² = 0.04 + 0.12 = 0.16, so s = 0.4
        m.firms = vec![
            FirmFactor { firm: 1, tau: 0.12f64.sqrt(), drift: 0.0, log_equity: Some(0.08) },
            FirmFactor { firm: 2, tau: 1e-12, drift: 0.0, log_equity: Some(0.1) },
            FirmFactor { firm: 3, tau: 0.12f64.sqrt(), drift: 0.0, log_equity: Some(50.0) },
        ];
        let p = m.conditional_pd(1, cell(1, 1)).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        // σ² + τ² = 0.04 → Φ((-0.1 + 0.02)/0.2) = Φ(-0.4)
        let p2 = m.conditional_pd(2, cell(1, 1)).unwrap();
        assert!((p2 - 0.3446).abs() < 1e-4);
        assert!(m.conditional_pd(3, cell(1, 1)).unwrap() < 1e-12);
        assert!(matches!(m.conditional_pd(9, cell(1, 1)), Err(Error::UnknownFirm(9))));
    }

    #[test]
    fn conditional_pd_monotone_in_log_equity() {
        let mut m = model(0.0, 0.0);
        let mut prev = 1.0;
        for k in -20..20 {
            m.firms = vec![FirmFactor { firm: 1, tau: 0.3, drift: 0.01, log_equity: Some(k as f64 * 0.1) }];
            let p = m.conditional_pd(1, cell(1, 1)).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn rho_is_repaired_and_validated() {
        let bad = FactorModel::new(
            vec![CellFactor { industry: 1, region: 1, b: 0.1, sigma: 0.1 }],
            vec![
                RegionFactor { region: 1, chi: 0.0 },
                RegionFactor { region: 2, chi: 0.0 },
                RegionFactor { region: 3, chi: 0.0 },
            ],
            vec![
                vec![1.0, 0.9, -0.9],
                vec![0.9, 1.0, 0.9],
                vec![-0.9, 0.9, 1.0],
            ],
            vec![],
            0.3,
        )
        .unwrap();
        let rho = CovarianceMatrix::from_rows(&bad.rho).unwrap();
        assert!(rho.min_eigenvalue() >= -1e-10);
        assert!(FactorModel::new(
            vec![CellFactor { industry: 1, region: 1, b: 0.1, sigma: 0.0 }],
            vec![RegionFactor { region: 1, chi: 0.0 }],
            vec![vec![1.0]],
            vec![],
            0.3
        )
        .is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = model(0.3, 0.05);
        let back = FactorModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn certain_and_comonotone_defaults() {
        let mut rng = RngStream::new(3, 0).generator();
        let l = LowerFactor::identity(1);
        let c = default_threshold(1.0 - 1e-15).unwrap();
        let hits = (0..10_000)
            .filter(|_| simulate_defaults(&l, &[c], &mut rng).unwrap().indicators[0])
            .count();
        assert!(hits >= 9_990);

        let co = cholesky_psd(&CovarianceMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap()).unwrap();
        let c = default_threshold(0.3).unwrap();
        for _ in 0..10_000 {
            let s = simulate_defaults(&co, &[c, c], &mut rng).unwrap();
            assert_eq!(s.indicators[0], s.indicators[1]);
        }
        assert!(simulate_defaults(&co, &[c], &mut rng).is_err());
    }

    #[test]
    fn default_frequency_matches_pd() {
        let mut rng = RngStream::new(4, 0).generator();
        let l = LowerFactor::identity(1);
        let c = default_threshold(0.01).unwrap();
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| simulate_defaults(&l, &[c], &mut rng).unwrap().indicators[0])
            .count();
        assert!((hits as f64 / n as f64 - 0.01).abs() < 0.0003);
    }
}
