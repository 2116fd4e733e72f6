//! LGD model A: beta-distributed LGD whose shape is driven by a Gaussian
//! factor `Z` that is jointly normal with the cell factors `β`.
//!
//! `μ = e^Z` and `ν = μ(1-m)/m`, so the conditional mean is `m` for every `Z`
//! while `Z` moves the dispersion.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::csvio::CsvTable;
use crate::default_model::calibration::align;
use crate::default_model::{FactorHistory, MIN_HISTORY};
use crate::error::{Error, Result};
use crate::math::{beta_sample, cholesky_psd, fit_beta_mu_mle, mean, sample_cov, CovarianceMatrix, LowerFactor, LGD_CLAMP};
use crate::portfolio::CellIndex;

/// Minimum observations in one (cell, time) bucket for a μ estimate.
pub const MIN_BUCKET: usize = 5;

type TimeSeries = BTreeMap<String, f64>;

/// Realized LGDs keyed by cell and time label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LgdHistory {
    pub buckets: BTreeMap<CellIndex, BTreeMap<String, Vec<f64>>>,
}

impl LgdHistory {
    const COLUMNS: [&'static str; 4] = ["time", "industry", "region", "lgd"];

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_table(&CsvTable::from_path(path, &Self::COLUMNS)?)
    }

    pub fn from_reader<R: Read>(reader: R, name: &str) -> Result<Self> {
        Self::from_table(&CsvTable::from_reader(reader, name, &Self::COLUMNS)?)
    }

    fn from_table(table: &CsvTable) -> Result<Self> {
        let mut out = Self::default();
        for row in table.rows() {
            let cell = CellIndex::new(row.u32("industry")?, row.u32("region")?);
            let lgd = row.f64("lgd")?;
            if !(0.0..=1.0).contains(&lgd) {
                return Err(row.error(format!("lgd must lie in [0,1], got {lgd}")));
            }
            out.insert(cell, &row.str("time")?, lgd);
        }
        if out.buckets.is_empty() {
            return Err(Error::InsufficientData(format!("{}: no LGD observations", table.name())));
        }
        Ok(out)
    }

    pub fn insert(&mut self, cell: CellIndex, time: &str, lgd: f64) {
        self.buckets
            .entry(cell)
            .or_default()
            .entry(time.to_string())
            .or_default()
            .push(lgd);
    }
}

/// Per-cell output of [`calibrate_cell_mu`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellMu {
    /// Clamped mean over the full history of the cell.
    pub m: f64,
    /// μ̂ per time bucket; buckets that could not be fitted are absent.
    pub mu_series: TimeSeries,
}

/// Fits `μ̂` per (cell, time) bucket with `m` held at the cell's full-history
/// mean. Buckets with fewer than [`MIN_BUCKET`] observations, or with all
/// observations equal, are skipped with a warning.
pub fn calibrate_cell_mu(history: &LgdHistory) -> Result<BTreeMap<CellIndex, CellMu>> {
    let mut out = BTreeMap::new();
    for (cell, buckets) in &history.buckets {
        let all: Vec<f64> = buckets.values().flatten().copied().collect();
        let m = mean(&all).clamp(LGD_CLAMP.0, LGD_CLAMP.1);
        let mut mu_series = TimeSeries::new();
        for (time, obs) in buckets {
            match fit_beta_mu_mle(obs, m) {
                Ok(mu) => {
                    mu_series.insert(time.clone(), mu);
                }
                Err(e @ (Error::InsufficientData(_) | Error::DegenerateData(_))) => {
                    log::warn!("LGD bucket {cell} at '{time}' skipped: {e}");
                }
                Err(e) => return Err(e),
            }
        }
        out.insert(*cell, CellMu { m, mu_series });
    }
    Ok(out)
}

pub fn z_from_mu(mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    Ok(mu.ln())
}

/// `(μ, ν) = (e^z, e^z(1-m)/m)`.
pub fn lgd_params_from_z(z: f64, m: f64) -> Result<(f64, f64)> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::Domain(format!("expected LGD must lie in (0,1), got {m}")));
    }
    let mu = z.exp();
    Ok((mu, mu * (1.0 - m) / m))
}

/// Draws an LGD from `Beta(lgd_params_from_z(z, m))`.
pub fn sample_lgd_a<R: Rng + ?Sized>(z: f64, m: f64, rng: &mut R) -> Result<f64> {
    let (mu, nu) = lgd_params_from_z(z, m)?;
    beta_sample(mu, nu, rng)
}

/// `Z–Z` and `Z–β` sample covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCovariance {
    pub z_cells: Vec<CellIndex>,
    pub beta_cells: Vec<CellIndex>,
    pub theta: DMatrix<f64>,
    pub psi: DMatrix<f64>,
}

fn pairwise_cov(a: &TimeSeries, b: &TimeSeries, what: &str, ca: CellIndex, cb: CellIndex) -> Result<f64> {
    let (x, y) = align(a, b);
    let overlap = x.iter().zip(&y).filter(|(u, v)| u.is_finite() && v.is_finite()).count();
    if overlap < MIN_HISTORY {
        return Err(Error::InsufficientData(format!(
            "{what} covariance for cells {ca} and {cb}: {overlap} overlapping periods, need {MIN_HISTORY}"
        )));
    }
    sample_cov(&x, &y)
}

/// Sample covariances with pairwise deletion; every pair needs at least
/// [`MIN_HISTORY`] overlapping periods.
pub fn estimate_joint_covariance(
    z_series: &BTreeMap<CellIndex, TimeSeries>,
    beta_series: &BTreeMap<CellIndex, TimeSeries>,
) -> Result<JointCovariance> {
    let z_cells: Vec<CellIndex> = z_series.keys().copied().collect();
    let beta_cells: Vec<CellIndex> = beta_series.keys().copied().collect();
    let k = z_cells.len();
    let mut theta = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let c = pairwise_cov(&z_series[&z_cells[i]], &z_series[&z_cells[j]], "Z-Z", z_cells[i], z_cells[j])?;
            theta[(i, j)] = c;
            theta[(j, i)] = c;
        }
    }
    let mut psi = DMatrix::zeros(k, beta_cells.len());
    for (i, zc) in z_cells.iter().enumerate() {
        for (j, bc) in beta_cells.iter().enumerate() {
            psi[(i, j)] = pairwise_cov(&z_series[zc], &beta_series[bc], "Z-beta", *zc, *bc)?;
        }
    }
    Ok(JointCovariance {
        z_cells,
        beta_cells,
        theta,
        psi,
    })
}

/// Calibrated series for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSeries {
    pub industry: u32,
    pub region: u32,
    pub m: f64,
    /// Mean of `z_series`; the location of `Z` in simulation.
    pub z_mean: f64,
    pub mu_series: TimeSeries,
    pub z_series: TimeSeries,
}

impl CellSeries {
    pub fn cell(&self) -> CellIndex {
        CellIndex::new(self.industry, self.region)
    }
}

/// Model A calibration bundle. `theta` is indexed by `cells`; `psi` rows by
/// `cells` and columns by `beta_cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelACalibration {
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub cells: Vec<CellSeries>,
    pub beta_cells: Vec<CellIndex>,
    pub theta: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

impl ModelACalibration {
    /// Placeholder written when model A cannot be calibrated.
    pub fn incomplete(reason: impl Into<String>) -> Self {
        Self {
            complete: false,
            reason: Some(reason.into()),
            cells: Vec::new(),
            beta_cells: Vec::new(),
            theta: Vec::new(),
            psi: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.complete {
            return Ok(());
        }
        let k = self.cells.len();
        if self.theta.len() != k || self.theta.iter().any(|r| r.len() != k) {
            return Err(Error::Validation(format!("model A theta must be {k}x{k}")));
        }
        let kb = self.beta_cells.len();
        if self.psi.len() != k || self.psi.iter().any(|r| r.len() != kb) {
            return Err(Error::Validation(format!("model A psi must be {k}x{kb}")));
        }
        for c in &self.cells {
            if !(c.m > 0.0 && c.m < 1.0) {
                return Err(Error::Validation(format!("model A m for cell {} outside (0,1)", c.cell())));
            }
            for (t, mu) in &c.mu_series {
                let z = c.z_series.get(t).copied().unwrap_or(f64::NAN);
                if (z - z_from_mu(*mu)?).abs() > 1e-9 {
                    return Err(Error::Validation(format!(
                        "model A z_series for cell {} at '{t}' is not log(mu)",
                        c.cell()
                    )));
                }
            }
            if c.z_series.len() != c.mu_series.len() {
                return Err(Error::Validation(format!(
                    "model A z_series and mu_series differ in length for cell {}",
                    c.cell()
                )));
            }
        }
        Ok(())
    }

    /// Mean vector, `Σ_ZZ` and `Σ_Zβ` for the given cells (used for both `Z`
    /// and `β`). Cells without history get `ψ = 0`, the average `θ` variance
    /// and the average `Z` mean.
    pub fn moments_for(&self, cells: &[CellIndex]) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
        if !self.complete {
            return Err(Error::MissingCalibration(format!(
                "model A calibration is incomplete: {}",
                self.reason.as_deref().unwrap_or("no reason recorded")
            )));
        }
        let index: BTreeMap<CellIndex, usize> =
            self.cells.iter().enumerate().map(|(i, c)| (c.cell(), i)).collect();
        let beta_index: BTreeMap<CellIndex, usize> =
            self.beta_cells.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let k = self.cells.len();
        let fallback_mean = self.cells.iter().map(|c| c.z_mean).sum::<f64>() / k as f64;
        let fallback_var = (0..k).map(|i| self.theta[i][i]).sum::<f64>() / k as f64;
        let missing: Vec<String> = cells
            .iter()
            .filter(|c| !index.contains_key(c))
            .map(|c| c.to_string())
            .collect();
        if !missing.is_empty() {
            log::warn!(
                "no LGD history for cells {}; using an independent LGD factor with pooled moments",
                missing.join(", ")
            );
        }
        let n = cells.len();
        let pos: Vec<Option<usize>> = cells.iter().map(|c| index.get(c).copied()).collect();
        let means = pos
            .iter()
            .map(|p| p.map_or(fallback_mean, |i| self.cells[i].z_mean))
            .collect();
        let szz = DMatrix::from_fn(n, n, |a, b| match (pos[a], pos[b]) {
            (Some(i), Some(j)) => self.theta[i][j],
            _ if a == b => fallback_var,
            _ => 0.0,
        });
        let szb = DMatrix::from_fn(n, n, |a, b| match (pos[a], beta_index.get(&cells[b])) {
            (Some(i), Some(&j)) => self.psi[i][j],
            _ => 0.0,
        });
        Ok((means, szz, szb))
    }
}

/// Full calibration pipeline: μ̂ per bucket, `Z = log μ̂`, then `θ` and `ψ`
/// against the factor history.
pub fn calibrate_model_a(history: &LgdHistory, beta: &FactorHistory) -> Result<ModelACalibration> {
    let fitted = calibrate_cell_mu(history)?;
    let mut cells = Vec::new();
    let mut z_map = BTreeMap::new();
    for (cell, cm) in fitted {
        if cm.mu_series.is_empty() {
            log::warn!("cell {cell} has no usable LGD buckets; it is left out of model A");
            continue;
        }
        let z_series: TimeSeries = cm
            .mu_series
            .iter()
            .map(|(t, mu)| Ok((t.clone(), z_from_mu(*mu)?)))
            .collect::<Result<_>>()?;
        let z_mean = z_series.values().sum::<f64>() / z_series.len() as f64;
        z_map.insert(cell, z_series.clone());
        cells.push(CellSeries {
            industry: cell.industry,
            region: cell.region,
            m: cm.m,
            z_mean,
            mu_series: cm.mu_series,
            z_series,
        });
    }
    if cells.is_empty() {
        return Err(Error::InsufficientData(
            "no cell has an LGD bucket with enough observations".into(),
        ));
    }
    let jc = estimate_joint_covariance(&z_map, &beta.series)?;
    let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    Ok(ModelACalibration {
        complete: true,
        reason: None,
        cells,
        beta_cells: jc.beta_cells,
        theta: rows(&jc.theta),
        psi: rows(&jc.psi),
    })
}

/// Lower-triangular factor of the stacked `[β, Z]` covariance, built so that
/// the `β` block is exactly the factor used without model A:
/// `L = [[L_ββ, 0], [A, L_ZZ]]` with `A L_ββᵀ = Σ_Zβ` and
/// `L_ZZ L_ZZᵀ = Σ_ZZ - A Aᵀ` (repaired to PSD if needed).
#[derive(Debug, Clone)]
pub struct JointFactor {
    k: usize,
    z_mean: Vec<f64>,
    factor: LowerFactor,
}

impl JointFactor {
    pub fn new(beta_cov: &CovarianceMatrix, z_mean: Vec<f64>, sigma_zz: &DMatrix<f64>, sigma_zb: &DMatrix<f64>) -> Result<Self> {
        let k = beta_cov.dim();
        if z_mean.len() != k || sigma_zz.shape() != (k, k) || sigma_zb.shape() != (k, k) {
            return Err(Error::LengthMismatch(format!(
                "joint factor blocks must all have dimension {k}"
            )));
        }
        let lbb = cholesky_psd(beta_cov)?.to_dense();
        let pinv = lbb
            .transpose()
            .pseudo_inverse(1e-10)
            .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
        let a = sigma_zb * pinv;
        let mut cond = sigma_zz - &a * a.transpose();
        cond = (&cond + cond.transpose()) * 0.5;
        let lzz = cholesky_psd(&CovarianceMatrix::new(cond)?)?.to_dense();
        let mut full = DMatrix::zeros(2 * k, 2 * k);
        full.view_mut((0, 0), (k, k)).copy_from(&lbb);
        full.view_mut((k, 0), (k, k)).copy_from(&a);
        full.view_mut((k, k), (k, k)).copy_from(&lzz);
        Ok(Self {
            k,
            z_mean,
            factor: LowerFactor::from_dense(&full),
        })
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.k
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    /// `β = L_ββ n_β` and `Z = z̄ + A n_β + L_ZZ n_Z` for standard normal
    /// `n_β`, `n_Z`.
    pub fn apply(&self, n_beta: &[f64], n_z: &[f64], beta: &mut [f64], z: &mut [f64]) {
        let k = self.k;
        for i in 0..k {
            beta[i] = self.factor.row(i).iter().zip(n_beta).map(|(a, b)| a * b).sum();
        }
        for i in 0..k {
            let row = self.factor.row(k + i);
            let s: f64 = row[..k].iter().zip(n_beta).map(|(a, b)| a * b).sum::<f64>()
                + row[k..].iter().zip(n_z).map(|(a, b)| a * b).sum::<f64>();
            z[i] = self.z_mean[i] + s;
        }
    }
}

/// One joint draw of `(β, Z)`.
pub fn simulate_z_with_beta<R: Rng + ?Sized>(joint: &JointFactor, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let k = joint.cells();
    let n: Vec<f64> = (0..2 * k).map(|_| StandardNormal.sample(rng)).collect();
    let mut beta = vec![0.0; k];
    let mut z = vec![0.0; k];
    joint.apply(&n[..k], &n[k..], &mut beta, &mut z);
    (beta, z)
}
