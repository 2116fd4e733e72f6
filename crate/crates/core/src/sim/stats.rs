//! Loss statistics, expected potential-loss breakdowns and the loss dump.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{validate_levels, LgdMode};
use crate::default_model::clamp_pd;
use crate::error::{Error, Result};
use crate::math::{mean, sample_variance};
use crate::portfolio::Portfolio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossStatistics {
    pub el: f64,
    /// Standard error of `el`.
    pub el_std_error: f64,
    /// Keyed by the level as written, e.g. `"0.9995"`.
    pub quantiles: BTreeMap<String, f64>,
    pub etls: BTreeMap<String, f64>,
    pub scenario_count: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<LgdMode>,
}

impl LossStatistics {
    pub fn with_run(mut self, seed: u64, mode: LgdMode) -> Self {
        self.seed = seed;
        self.mode = Some(mode);
        self
    }

    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles.get(&level_key(level)).copied()
    }

    pub fn etl(&self, level: f64) -> Option<f64> {
        self.etls.get(&level_key(level)).copied()
    }
}

pub fn level_key(level: f64) -> String {
    format!("{level}")
}

/// `100·level` without float noise, e.g. `99.95` for 0.9995.
pub(crate) fn level_percent(level: f64) -> String {
    format!("{}", (level * 100.0 * 1e6).round() / 1e6)
}

/// 1-based rank `⌈α·n⌉`, guarded against products like `0.9·100` landing a
/// hair above an integer.
fn quantile_rank(level: f64, n: usize) -> usize {
    let x = level * n as f64;
    ((x - 1e-9 * x.max(1.0)).ceil() as usize).clamp(1, n)
}

/// `max(1, ⌊(1-α)·n⌋)`, guarded the same way.
fn tail_count(level: f64, n: usize) -> usize {
    let x = (1.0 - level) * n as f64;
    ((x + 1e-9 * x.max(1.0)).floor() as usize).clamp(1, n)
}

/// EL is the sample mean; `q_α` is the ascending order statistic of rank
/// `⌈α·n⌉`; `ETL_α` is the mean of the `max(1, ⌊(1-α)·n⌋)` largest losses.
pub fn loss_statistics(losses: &[f64], levels: &[f64]) -> Result<LossStatistics> {
    if losses.is_empty() {
        return Err(Error::InsufficientData("loss statistics need at least one scenario".into()));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("non-finite scenario loss".into()));
    }
    validate_levels(levels)?;
    let n = losses.len();
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut quantiles = BTreeMap::new();
    let mut etls = BTreeMap::new();
    for &a in levels {
        let q = sorted[quantile_rank(a, n) - 1];
        let k = tail_count(a, n);
        let tail = &sorted[n - k..];
        let etl = tail.iter().sum::<f64>() / k as f64;
        quantiles.insert(level_key(a), q);
        // guard against summation rounding in constant tails
        etls.insert(level_key(a), etl.max(q));
    }
    let el_std_error = if n > 1 {
        (sample_variance(losses)? / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(LossStatistics {
        el: mean(losses),
        el_std_error,
        quantiles,
        etls,
        scenario_count: n,
        seed: 0,
        mode: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownDimension {
    Rating,
    Industry,
    Region,
}

impl BreakdownDimension {
    pub const ALL: [BreakdownDimension; 3] = [Self::Rating, Self::Industry, Self::Region];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rating => "rating",
            Self::Industry => "industry",
            Self::Region => "region",
        }
    }
}

/// Expected potential loss `p·m·EXP` summed by rating, industry or region.
/// Instruments of firms already in default are left out, matching the
/// simulation.
pub fn potential_loss_breakdown(portfolio: &Portfolio, dim: BreakdownDimension) -> BTreeMap<u32, f64> {
    let defaulted: std::collections::HashSet<u32> =
        portfolio.firms().iter().filter(|f| f.defaulted).map(|f| f.firm).collect();
    let mut out = BTreeMap::new();
    for inst in portfolio.instruments() {
        if defaulted.contains(&inst.firm) {
            continue;
        }
        let key = match dim {
            BreakdownDimension::Rating => inst.rating,
            BreakdownDimension::Industry => inst.cell.industry,
            BreakdownDimension::Region => inst.cell.region,
        };
        *out.entry(key).or_insert(0.0) += clamp_pd(inst.pd) * inst.expected_lgd * inst.exposure;
    }
    out
}

/// `Σ P(default by horizon)·m·EXP` with `P = 1 - (1-p)^T`; the exact
/// expected loss of every LGD mode.
pub fn analytic_expected_loss(portfolio: &Portfolio, horizon_periods: u32) -> f64 {
    let defaulted: std::collections::HashSet<u32> =
        portfolio.firms().iter().filter(|f| f.defaulted).map(|f| f.firm).collect();
    portfolio
        .instruments()
        .iter()
        .filter(|i| !defaulted.contains(&i.firm))
        .map(|i| {
            let p = 1.0 - (1.0 - clamp_pd(i.pd)).powi(horizon_periods as i32);
            p * i.expected_lgd * i.exposure
        })
        .sum()
}

/// Raw little-endian `f64` values, one per scenario.
pub fn write_losses<W: Write>(mut w: W, losses: &[f64]) -> Result<()> {
    for l in losses {
        w.write_all(&l.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_losses<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() % 8 != 0 {
        return Err(Error::Validation(format!(
            "loss dump length {} is not a multiple of 8",
            buf.len()
        )));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}
