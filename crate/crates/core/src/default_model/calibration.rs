//! Estimation of loadings, residual scales and region correlations from the
//! history of cell factors `β`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::csvio::CsvTable;
use crate::error::{Error, Result};
use crate::math::{repair_psd, sample_correlation, CovarianceMatrix};
use crate::portfolio::CellIndex;

use super::{CellFactor, FactorModel, FirmFactor, RegionFactor};

/// Minimum number of aligned time points for the decomposition.
pub const MIN_HISTORY: usize = 12;

/// Cell factor observations keyed by cell, then by time label. Time labels are
/// only used to align series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorHistory {
    pub series: BTreeMap<CellIndex, BTreeMap<String, f64>>,
}

impl FactorHistory {
    pub fn load(path: &Path) -> Result<Self> {
        let table = CsvTable::from_path(path, &["time", "industry", "region", "beta"])?;
        Self::from_table(&table)
    }

    pub fn from_reader<R: Read>(reader: R, name: &str) -> Result<Self> {
        let table = CsvTable::from_reader(reader, name, &["time", "industry", "region", "beta"])?;
        Self::from_table(&table)
    }

    fn from_table(table: &CsvTable) -> Result<Self> {
        let mut series: BTreeMap<CellIndex, BTreeMap<String, f64>> = BTreeMap::new();
        for row in table.rows() {
            let cell = CellIndex::new(row.u32("industry")?, row.u32("region")?);
            if cell.industry == 0 || cell.region == 0 {
                return Err(row.error(format!("cell {cell} out of range")));
            }
            let time = row.str("time")?;
            if series
                .entry(cell)
                .or_default()
                .insert(time.clone(), row.f64("beta")?)
                .is_some()
            {
                return Err(row.error(format!("duplicate observation for cell {cell} at time '{time}'")));
            }
        }
        if series.is_empty() {
            return Err(Error::InsufficientData(format!("{}: no factor history", table.name())));
        }
        Ok(Self { series })
    }

    pub fn insert(&mut self, cell: CellIndex, time: &str, beta: f64) {
        self.series.entry(cell).or_default().insert(time.to_string(), beta);
    }
}

/// Output of [`decompose_beta_series`].
#[derive(Debug, Clone)]
pub struct BetaDecomposition {
    pub b: BTreeMap<CellIndex, f64>,
    pub chi: BTreeMap<u32, f64>,
    /// Region factor series, unit sample variance.
    pub gamma: BTreeMap<u32, BTreeMap<String, f64>>,
    /// Regions in the order used by `rho`.
    pub regions: Vec<u32>,
    pub rho: CovarianceMatrix,
}

impl BetaDecomposition {
    /// Assembles a [`FactorModel`], with `σ = sqrt(b² + χ²)` per cell so that
    /// the cell variance implied by the factor structure and `σ` agree.
    pub fn to_factor_model(&self, firms: Vec<FirmFactor>, default_tau: f64) -> Result<FactorModel> {
        let cells = self
            .b
            .iter()
            .map(|(c, &b)| {
                let chi = self.chi[&c.region];
                CellFactor {
                    industry: c.industry,
                    region: c.region,
                    b,
                    sigma: (b * b + chi * chi).sqrt(),
                }
            })
            .collect();
        let regions = self
            .regions
            .iter()
            .map(|&r| RegionFactor {
                region: r,
                chi: self.chi[&r],
            })
            .collect();
        FactorModel::new(cells, regions, self.rho.to_rows(), firms, default_tau)
    }
}

/// Per region: the first principal component of the industry series becomes
/// the region factor `γ` (unit variance, oriented so the mean loading is
/// positive), each cell's loading `b` is its regression coefficient on `γ`,
/// and `χ` is the pooled residual standard deviation. `ρ` is the sample
/// correlation of the region factors.
pub fn decompose_beta_series(history: &FactorHistory) -> Result<BetaDecomposition> {
    let mut by_region: BTreeMap<u32, Vec<CellIndex>> = BTreeMap::new();
    for &cell in history.series.keys() {
        by_region.entry(cell.region).or_default().push(cell);
    }
    if by_region.is_empty() {
        return Err(Error::InsufficientData("empty factor history".into()));
    }

    let mut b = BTreeMap::new();
    let mut chi = BTreeMap::new();
    let mut gamma = BTreeMap::new();
    for (&region, cells) in &by_region {
        let times: BTreeSet<&String> = cells
            .iter()
            .map(|c| history.series[c].keys().collect::<BTreeSet<_>>())
            .reduce(|a, b| a.intersection(&b).cloned().collect())
            .unwrap_or_default();
        let n = times.len();
        if n < MIN_HISTORY {
            return Err(Error::InsufficientData(format!(
                "region {region} has {n} aligned time points; need {MIN_HISTORY}"
            )));
        }
        let k = cells.len();
        // centered data, n × k
        let keys: Vec<&String> = times.iter().cloned().collect();
        let data = DMatrix::from_fn(n, k, |t, i| history.series[&cells[i]][keys[t]]);
        let magnitude = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let means: Vec<f64> = (0..k).map(|i| data.column(i).mean()).collect();
        let centered = DMatrix::from_fn(n, k, |t, i| data[(t, i)] - means[i]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);

        let eig = SymmetricEigen::new(cov.clone());
        let (top, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        if !(lambda > (1e-12 * magnitude).powi(2)) {
            return Err(Error::DegenerateData(format!(
                "factor series of region {region} have zero variance"
            )));
        }
        let mut w: Vec<f64> = eig.eigenvectors.column(top).iter().cloned().collect();
        if w.iter().sum::<f64>() < 0.0 {
            w.iter_mut().for_each(|v| *v = -*v);
        }
        let scale = lambda.sqrt();
        let g: Vec<f64> = (0..n)
            .map(|t| (0..k).map(|i| w[i] * centered[(t, i)]).sum::<f64>() / scale)
            .collect();

        let mut ss = 0.0;
        for (i, cell) in cells.iter().enumerate() {
            // cov(β_i, γ) with var(γ) = 1
            let loading: f64 =
                (0..n).map(|t| centered[(t, i)] * g[t]).sum::<f64>() / (n as f64 - 1.0);
            b.insert(*cell, loading);
            ss += (0..n)
                .map(|t| (centered[(t, i)] - loading * g[t]).powi(2))
                .sum::<f64>();
        }
        let residual_var = ss / (k as f64 * (n as f64 - 1.0));
        // exact-fit cases leave rounding noise only
        let chi_r = if residual_var <= 1e-24 * lambda { 0.0 } else { residual_var.sqrt() };
        chi.insert(region, chi_r);
        gamma.insert(
            region,
            times.iter().zip(&g).map(|(t, &v)| ((*t).clone(), v)).collect(),
        );
    }

    let regions: Vec<u32> = by_region.keys().cloned().collect();
    let r = regions.len();
    let mut rows = vec![vec![0.0; r]; r];
    for i in 0..r {
        rows[i][i] = 1.0;
        for j in 0..i {
            let (a, bb) = align(&gamma[&regions[i]], &gamma[&regions[j]]);
            if a.iter().filter(|v| v.is_finite()).count() < MIN_HISTORY {
                return Err(Error::InsufficientData(format!(
                    "regions {} and {} share fewer than {MIN_HISTORY} time points",
                    regions[i], regions[j]
                )));
            }
            let c = sample_correlation(&a, &bb)?;
            rows[i][j] = c;
            rows[j][i] = c;
        }
    }
    let mut rho = CovarianceMatrix::from_rows(&rows)?;
    if rho.min_eigenvalue() < -1e-12 {
        rho = repair_psd(&rho);
    }
    Ok(BetaDecomposition {
        b,
        chi,
        gamma,
        regions,
        rho,
    })
}

/// Aligns two time-keyed series on the union of their keys; gaps are NaN.
pub(crate) fn align(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> (Vec<f64>, Vec<f64>) {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| {
            (
                a.get(k).copied().unwrap_or(f64::NAN),
                b.get(k).copied().unwrap_or(f64::NAN),
            )
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    fn t(k: usize) -> String {
        format!("{k:05}")
    }

    #[test]
    fn single_industry_region() {
        let mut h = FactorHistory::default();
        let xs = [0.3, -0.1, 0.2, 0.5, -0.4, 0.1, 0.0, 0.25, -0.2, 0.15, 0.05, -0.3, 0.4];
        for (k, &x) in xs.iter().enumerate() {
            h.insert(CellIndex::new(1, 1), &t(k), x);
        }
        let d = decompose_beta_series(&h).unwrap();
        let sd = crate::math::sample_variance(&xs).unwrap().sqrt();
        assert!((d.b[&CellIndex::new(1, 1)] - sd).abs() < 1e-12);
        assert_eq!(d.chi[&1], 0.0);
        let m = crate::math::mean(&xs);
        for (k, &x) in xs.iter().enumerate() {
            assert!((d.gamma[&1][&t(k)] - (x - m) / sd).abs() < 1e-10);
        }
    }

    #[test]
    fn identical_industries() {
        let mut h = FactorHistory::default();
        for k in 0..20 {
            let x = ((k * 7) % 11) as f64 * 0.05 - 0.2;
            h.insert(CellIndex::new(1, 1), &t(k), x);
            h.insert(CellIndex::new(2, 1), &t(k), x);
        }
        let d = decompose_beta_series(&h).unwrap();
        let b1 = d.b[&CellIndex::new(1, 1)];
        let b2 = d.b[&CellIndex::new(2, 1)];
        assert!(b1 > 0.0 && (b1 - b2).abs() < 1e-12);
        assert_eq!(d.chi[&1], 0.0);
    }

    #[test]
    fn errors() {
        let mut h = FactorHistory::default();
        for k in 0..5 {
            h.insert(CellIndex::new(1, 1), &t(k), k as f64);
        }
        assert!(matches!(decompose_beta_series(&h), Err(Error::InsufficientData(_))));
        let mut flat = FactorHistory::default();
        for k in 0..20 {
            flat.insert(CellIndex::new(1, 1), &t(k), 0.1);
        }
        assert!(matches!(decompose_beta_series(&flat), Err(Error::DegenerateData(_))));
        let csv = "time,industry,region,beta\n1,1,1,0.1\n1,1,1,0.2\n";
        let err = FactorHistory::from_reader(csv.as_bytes(), "h.csv").unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }

    /// Plant loadings through β = b·γ + χ·v and recover them.
    #[test]
    fn recovers_planted_structure() {
        let loadings = [(1, 1, 0.30), (2, 1, 0.20), (3, 1, 0.25), (1, 2, 0.15), (2, 2, 0.35)];
        let chi = [0.05, 0.08];
        let rho12 = 0.6f64;
        let mut rng = RngStream::new(21, 0).generator();
        let mut h = FactorHistory::default();
        let n = 500;
        for k in 0..n {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let g = [z1, rho12 * z1 + (1.0 - rho12 * rho12).sqrt() * z2];
            for &(i, r, b) in &loadings {
                let v: f64 = StandardNormal.sample(&mut rng);
                let r_idx = r as usize - 1;
                h.insert(CellIndex::new(i, r), &t(k), b * g[r_idx] + chi[r_idx] * v);
            }
        }
        let d = decompose_beta_series(&h).unwrap();
        for &(i, r, b) in &loadings {
            let est = d.b[&CellIndex::new(i, r)];
            assert!((est - b).abs() / b < 0.10, "cell ({i},{r}) b={b} est={est}");
        }
        assert!((d.chi[&1] - chi[0]).abs() / chi[0] < 0.25, "{:?}", d.chi);
        assert!((d.rho.get(0, 1) - rho12).abs() < 0.1);
        let fm = d.to_factor_model(vec![], 0.3).unwrap();
        assert_eq!(fm.cells.len(), loadings.len());
    }
}
