//! LGD model B: symmetric transformed-beta marginals coupled to the default
//! driver through a perturbed percentile.
//!
//! For a defaulted firm with standardized return `g` and default probability
//! `p`, the default severity percentile is `U = Φ(g)/p`. It is perturbed by
//! an independent uniform `V` into `H = U·(1 + ξ(V - ½))`, mapped back to a
//! uniform through the CDF `F_H` of `H`, and pushed through the inverse LGD
//! marginal. The marginal is therefore exact while `Cov(F_H(H), U)` is
//! controlled by `ξ`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csvio::CsvTable;
use crate::error::{Error, Result};
use crate::math::beta::{beta_cdf_unchecked, beta_inverse_unchecked};
use crate::math::{sample_cov, std_normal_cdf, std_normal_quantile};
use crate::portfolio::{CellIndex, Portfolio};

/// Upper bound of `Cov(U, W)` for two uniforms (Cauchy-Schwarz).
pub const LAMBDA_MAX: f64 = 1.0 / 12.0;
/// Estimates below this are raised to it.
pub const LAMBDA_LOWER: f64 = LAMBDA_MAX / 7.0;
/// Estimates above this are lowered to it; it corresponds to `ξ = 2`.
pub const LAMBDA_UPPER: f64 = 2.0 * LAMBDA_MAX / 3.0;
/// Cells with fewer default records than this borrow the pooled estimate.
pub const MIN_CELL_RECORDS: usize = 10;

const COLLATERAL_SHAPE: f64 = 2.0;
const UNSECURED_SHAPE: f64 = 0.5;
const COLLATERAL_WIDTH: f64 = 0.2;

/// The symmetric LGD marginal on `[lbar - delta, lbar + delta]`: a linear image
/// of Beta(shape, shape).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgdMarginal {
    pub lbar: f64,
    pub collateralized: bool,
    pub shape: f64,
    pub delta: f64,
}

impl LgdMarginal {
    pub fn new(lbar: f64, collateralized: bool) -> Result<Self> {
        let (shape, delta) = shape_params(lbar, collateralized)?;
        Ok(Self {
            lbar,
            collateralized,
            shape,
            delta,
        })
    }
}

/// Marginal plus coupling for one instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBParams {
    pub marginal: LgdMarginal,
    /// Coupling covariance after clamping.
    pub lambda: f64,
    pub xi: f64,
}

impl ModelBParams {
    pub fn new(lbar: f64, collateralized: bool, lambda_estimate: f64) -> Result<Self> {
        let marginal = LgdMarginal::new(lbar, collateralized)?;
        let (xi, lambda) = xi_from_lambda(lambda_estimate)?;
        Ok(Self {
            marginal,
            lambda,
            xi,
        })
    }
}

/// `(2, 0.2·min(L̄, 1-L̄))` for collateralized instruments and
/// `(0.5, min(L̄, 1-L̄))` otherwise.
pub fn shape_params(lbar: f64, collateralized: bool) -> Result<(f64, f64)> {
    if !(lbar > 0.0 && lbar < 1.0) {
        return Err(Error::Domain(format!("expected LGD must lie in (0,1), got {lbar}")));
    }
    let half = lbar.min(1.0 - lbar);
    Ok(if collateralized {
        (COLLATERAL_SHAPE, COLLATERAL_WIDTH * half)
    } else {
        (UNSECURED_SHAPE, half)
    })
}

/// CDF of the marginal. With `delta = 0` it is a unit step at `lbar`.
pub fn lgd_marginal_cdf(y: f64, m: &LgdMarginal) -> f64 {
    if m.delta <= 0.0 {
        return if y < m.lbar { 0.0 } else { 1.0 };
    }
    let x = (y - m.lbar + m.delta) / (2.0 * m.delta);
    beta_cdf_unchecked(x.clamp(0.0, 1.0), m.shape, m.shape)
}

/// Inverse of [`lgd_marginal_cdf`]; returns `lbar` for every `u` when
/// `delta = 0`.
pub fn lgd_marginal_inverse(u: f64, m: &LgdMarginal) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("percentile must lie in [0,1], got {u}")));
    }
    if m.delta <= 0.0 {
        return Ok(m.lbar);
    }
    Ok(m.lbar - m.delta + 2.0 * m.delta * beta_inverse_unchecked(u, m.shape, m.shape))
}

/// Beta parameters `((κ-1)L̄, (κ-1)(1-L̄))`; the mean is `L̄` for any `κ > 1`.
/// Kept for comparison with the symmetric marginal; the model B pipeline does
/// not use it.
pub fn prior_beta_mode(lbar: f64, kappa: f64) -> Result<(f64, f64)> {
    if !(lbar > 0.0 && lbar < 1.0) {
        return Err(Error::Domain(format!("expected LGD must lie in (0,1), got {lbar}")));
    }
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::Domain(format!("kappa must exceed 1, got {kappa}")));
    }
    Ok(((kappa - 1.0) * lbar, (kappa - 1.0) * (1.0 - lbar)))
}

/// CDF of `G | G < Φ⁻¹(p)`: `Φ(x)/p` below the threshold, 1 above.
pub fn truncated_gaussian_cdf(x: f64, p: f64) -> Result<f64> {
    let c = std_normal_quantile(p)?;
    Ok(if x < c {
        (std_normal_cdf(x) / p).min(1.0)
    } else {
        1.0
    })
}

/// CDF of `H = U·(1 + ξ(V - ½))` for independent standard uniforms `U`, `V`.
/// Supported on `[1 - ξ/2, 1 + ξ/2]`; `ξ = 2` is accepted as the limiting case.
pub fn f_h(y: f64, xi: f64) -> Result<f64> {
    if !(xi >= 2.0 && xi.is_finite()) {
        return Err(Error::Domain(format!("xi must be at least 2, got {xi}")));
    }
    Ok(f_h_unchecked(y, xi))
}

#[inline]
pub(crate) fn f_h_unchecked(y: f64, xi: f64) -> f64 {
    let lo = 1.0 - 0.5 * xi;
    let hi = 1.0 + 0.5 * xi;
    if y <= lo {
        return 0.0;
    }
    if y >= hi {
        return 1.0;
    }
    let base = 0.5 - 1.0 / xi;
    if y == 0.0 {
        return base;
    }
    let log_edge = if y < 0.0 { (0.5 * xi - 1.0).ln() } else { hi.ln() };
    let v = base + y / xi + y / xi * (log_edge - y.abs().ln());
    v.clamp(0.0, 1.0)
}

/// `Cov(F_H(H), U)` as a function of `ξ`. Integrating the piecewise `F_H`
/// against the uniform square gives exactly `1 / (9ξ)`.
pub fn coupling_covariance(xi: f64) -> f64 {
    1.0 / (9.0 * xi)
}

/// Clamp a coupling estimate into `[λ_max/7, 2λ_max/3]` and return the
/// matching `ξ = 1/(9λ)` together with the clamped value.
///
/// Estimates outside `[-λ_max, λ_max]` by more than 1e-9 are rejected.
pub fn xi_from_lambda(lambda_estimate: f64) -> Result<(f64, f64)> {
    if !lambda_estimate.is_finite() {
        return Err(Error::Domain(format!("lambda must be finite, got {lambda_estimate}")));
    }
    if lambda_estimate.abs() > LAMBDA_MAX + 1e-9 {
        return Err(Error::Domain(format!(
            "lambda estimate {lambda_estimate} exceeds the Cauchy-Schwarz bound 1/12"
        )));
    }
    let lambda = clamp_lambda(lambda_estimate);
    let xi = if lambda >= LAMBDA_UPPER {
        2.0
    } else {
        1.0 / (9.0 * lambda)
    };
    Ok((xi, lambda))
}

pub fn clamp_lambda(lambda: f64) -> f64 {
    lambda.clamp(LAMBDA_LOWER, LAMBDA_UPPER)
}

/// The closed form `(10 + 8·sqrt(1 + 54λ)) / (288λ - 3)` as published.
///
/// It agrees with [`xi_from_lambda`] only at `λ = 1/18`; elsewhere the implied
/// coupling `1/(9ξ)` misses the target (e.g. 0.0409 instead of 1/24). Kept for
/// comparison only.
pub fn xi_from_lambda_published(lambda: f64) -> f64 {
    (10.0 + 8.0 * (1.0 + 54.0 * lambda).sqrt()) / (288.0 * lambda - 3.0)
}

/// `F_H(U·(1 + ξ(V - ½)))`, the LGD percentile for severity percentile `u`
/// and auxiliary uniform `v`.
#[inline]
pub fn lgd_percentile(u: f64, v: f64, xi: f64) -> f64 {
    f_h_unchecked(u * (1.0 + xi * (v - 0.5)), xi)
}

/// Draws an LGD for a defaulted firm (`g < Φ⁻¹(p)`).
pub fn sample_lgd_b<R: Rng + ?Sized>(g: f64, p: f64, params: &ModelBParams, rng: &mut R) -> Result<f64> {
    let c = std_normal_quantile(p)?;
    if !(g < c) {
        return Err(Error::Precondition(format!(
            "sample_lgd_b called for a non-defaulted return g = {g} >= threshold {c}"
        )));
    }
    let u = (std_normal_cdf(g) / p).min(1.0);
    let v: f64 = rng.random();
    lgd_marginal_inverse(lgd_percentile(u, v, params.xi), &params.marginal)
}

/// One historical default: standardized return, probability of default and
/// realized LGD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultRecord {
    pub cell: CellIndex,
    pub g: f64,
    pub pd: f64,
    pub lgd: f64,
}

/// Reads `time,industry,region,g,pd,lgd`. Rows must satisfy `g < Φ⁻¹(pd)`.
pub fn load_default_records(path: &Path) -> Result<Vec<DefaultRecord>> {
    let table = CsvTable::from_path(path, &["time", "industry", "region", "g", "pd", "lgd"])?;
    let mut out = Vec::new();
    for row in table.rows() {
        let pd = row.f64("pd")?;
        if !(pd > 0.0 && pd < 1.0) {
            return Err(row.error(format!("pd must lie in (0,1), got {pd}")));
        }
        let g = row.f64("g")?;
        let c = std_normal_quantile(pd)?;
        if g >= c {
            return Err(row.error(format!("g = {g} is not below the default threshold {c:.6}")));
        }
        let lgd = row.f64("lgd")?;
        if !(0.0..=1.0).contains(&lgd) {
            return Err(row.error(format!("lgd must lie in [0,1], got {lgd}")));
        }
        let cell = CellIndex::new(row.u32("industry")?, row.u32("region")?);
        out.push(DefaultRecord { cell, g, pd, lgd });
    }
    Ok(out)
}

/// Coupling estimate for one cell (or the pool).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCoupling {
    pub lambda_estimate: f64,
    pub lambda: f64,
    pub xi: f64,
    pub records: usize,
    /// False when the cell had too few records and took the pooled value.
    pub own_estimate: bool,
}

impl CellCoupling {
    fn from_estimate(estimate: f64, records: usize, own_estimate: bool) -> Result<Self> {
        // sampling noise can push the covariance of two uniforms past 1/12
        let bounded = estimate.clamp(-LAMBDA_MAX, LAMBDA_MAX);
        let (xi, lambda) = xi_from_lambda(bounded)?;
        Ok(Self {
            lambda_estimate: estimate,
            lambda,
            xi,
            records,
            own_estimate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCouplingEntry {
    pub industry: u32,
    pub region: u32,
    #[serde(flatten)]
    pub coupling: CellCoupling,
}

impl CellCouplingEntry {
    pub fn cell(&self) -> CellIndex {
        CellIndex::new(self.industry, self.region)
    }
}

/// Model B calibration bundle: coupling per cell seen in the default history
/// plus the pooled value used for every other cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBCalibration {
    pub cells: Vec<CellCouplingEntry>,
    pub pooled: CellCoupling,
}

impl ModelBCalibration {
    /// Uniform coupling for every cell; used when no default history exists.
    pub fn uniform(lambda_estimate: f64) -> Result<Self> {
        Ok(Self {
            cells: Vec::new(),
            pooled: CellCoupling::from_estimate(lambda_estimate, 0, false)?,
        })
    }

    pub fn coupling(&self, cell: CellIndex) -> &CellCoupling {
        self.cells
            .binary_search_by(|e| e.cell().cmp(&cell))
            .map(|i| &self.cells[i].coupling)
            .unwrap_or(&self.pooled)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: Self = serde_json::from_str(text)?;
        c.cells.sort_by_key(|e| e.cell());
        for e in c.cells.iter().map(|e| &e.coupling).chain([&c.pooled]) {
            if !(e.xi >= 2.0 && e.xi.is_finite()) || !(LAMBDA_LOWER..=LAMBDA_UPPER).contains(&e.lambda) {
                return Err(Error::Validation(format!(
                    "model B coupling out of range: lambda {} xi {}",
                    e.lambda, e.xi
                )));
            }
        }
        Ok(c)
    }
}

/// Sample covariance of `U = Φ(g)/p` and `W = F_LGD(lgd)` per cell. Cells with
/// fewer than [`MIN_CELL_RECORDS`] records use the pooled estimate over all
/// records. Each record's `W` uses the marginal of its cell.
pub fn estimate_lambda(
    records: &[DefaultRecord],
    marginals: &BTreeMap<CellIndex, LgdMarginal>,
) -> Result<ModelBCalibration> {
    if records.len() < MIN_CELL_RECORDS {
        return Err(Error::InsufficientData(format!(
            "coupling estimation needs at least {MIN_CELL_RECORDS} default records, got {}",
            records.len()
        )));
    }
    let mut per_cell: BTreeMap<CellIndex, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (k, r) in records.iter().enumerate() {
        let m = marginals.get(&r.cell).ok_or(Error::UnknownCell {
            industry: r.cell.industry,
            region: r.cell.region,
        })?;
        let u = truncated_gaussian_cdf(r.g, r.pd)?;
        if u >= 1.0 {
            return Err(Error::Precondition(format!(
                "default record {k} has g at or above its threshold"
            )));
        }
        let w = lgd_marginal_cdf(r.lgd, m);
        let e = per_cell.entry(r.cell).or_default();
        e.0.push(u);
        e.1.push(w);
    }
    let all_u: Vec<f64> = per_cell.values().flat_map(|(u, _)| u.iter().cloned()).collect();
    let all_w: Vec<f64> = per_cell.values().flat_map(|(_, w)| w.iter().cloned()).collect();
    let pooled = CellCoupling::from_estimate(sample_cov(&all_u, &all_w)?, all_u.len(), true)?;
    let mut cells = Vec::new();
    for (cell, (u, w)) in &per_cell {
        let c = if u.len() >= MIN_CELL_RECORDS {
            CellCoupling::from_estimate(sample_cov(u, w)?, u.len(), true)?
        } else {
            log::warn!(
                "cell {cell} has {} default records; using the pooled coupling",
                u.len()
            );
            CellCoupling {
                records: u.len(),
                own_estimate: false,
                ..pooled
            }
        };
        cells.push(CellCouplingEntry {
            industry: cell.industry,
            region: cell.region,
            coupling: c,
        });
    }
    Ok(ModelBCalibration { cells, pooled })
}

/// Marginals used to turn realized LGDs into percentiles: for cells held in
/// the portfolio, the mean expected LGD of the cell and the majority
/// collateral flag; for other cells, the mean realized LGD, uncollateralized.
pub fn calibration_marginals(
    portfolio: &Portfolio,
    records: &[DefaultRecord],
) -> Result<BTreeMap<CellIndex, LgdMarginal>> {
    let mut acc: BTreeMap<CellIndex, (f64, usize, usize)> = BTreeMap::new();
    for inst in portfolio.instruments() {
        let e = acc.entry(inst.cell).or_default();
        e.0 += inst.expected_lgd;
        e.1 += 1;
        e.2 += inst.collateralized as usize;
    }
    let mut out = BTreeMap::new();
    for (cell, (sum, n, coll)) in acc {
        out.insert(cell, LgdMarginal::new(sum / n as f64, 2 * coll > n)?);
    }
    let mut realized: BTreeMap<CellIndex, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| !out.contains_key(&r.cell)) {
        let e = realized.entry(r.cell).or_default();
        e.0 += r.lgd;
        e.1 += 1;
    }
    for (cell, (sum, n)) in realized {
        out.insert(cell, LgdMarginal::new((sum / n as f64).clamp(0.01, 0.99), false)?);
    }
    Ok(out)
}

/// [`estimate_lambda`] with [`calibration_marginals`].
pub fn calibrate_model_b(portfolio: &Portfolio, records: &[DefaultRecord]) -> Result<ModelBCalibration> {
    estimate_lambda(records, &calibration_marginals(portfolio, records)?)
}
