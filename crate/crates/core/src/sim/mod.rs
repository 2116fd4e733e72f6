//! Monte Carlo loss simulation and loss statistics.
//!
//! Every scenario owns two random streams derived from the master seed: one
//! for the default drivers (`β` and the idiosyncratic terms) and one for the
//! LGD draws. Results therefore do not depend on batch size, worker count, or
//! LGD mode as far as default indicators are concerned.

mod compare;
mod stats;

pub use compare::{compare_models, ModelComparison};
pub use stats::{
    analytic_expected_loss, loss_statistics, potential_loss_breakdown, read_losses, write_losses, BreakdownDimension,
    LossStatistics,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::default_model::{clamp_pd, default_threshold, FactorModel};
use crate::error::{Error, Result};
use crate::lgd_a::{sample_lgd_a, JointFactor, ModelACalibration};
use crate::lgd_b::{lgd_marginal_inverse, lgd_percentile, LgdMarginal, ModelBCalibration};
use crate::math::{cholesky_psd, std_normal_cdf, LowerFactor, RngStream};
use crate::portfolio::{CellIndex, Portfolio};

/// Quantile levels reported by default.
pub const DEFAULT_LEVELS: [f64; 5] = [0.90, 0.95, 0.99, 0.9995, 0.9998];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LgdMode {
    Deterministic,
    ModelA,
    ModelB,
}

impl LgdMode {
    pub const ALL: [LgdMode; 3] = [LgdMode::Deterministic, LgdMode::ModelA, LgdMode::ModelB];

    pub fn as_str(self) -> &'static str {
        match self {
            LgdMode::Deterministic => "deterministic",
            LgdMode::ModelA => "model_a",
            LgdMode::ModelB => "model_b",
        }
    }

    /// Row label in comparison reports.
    pub fn label(self) -> &'static str {
        match self {
            LgdMode::Deterministic => "Deterministic LGD",
            LgdMode::ModelA => "Model A",
            LgdMode::ModelB => "Model B",
        }
    }
}

impl fmt::Display for LgdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LgdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(LgdMode::Deterministic),
            "model_a" => Ok(LgdMode::ModelA),
            "model_b" => Ok(LgdMode::ModelB),
            other => Err(Error::Validation(format!(
                "unknown LGD mode '{other}' (expected deterministic, model_a or model_b)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenarios: usize,
    pub horizon_periods: u32,
    pub lgd_mode: LgdMode,
    pub master_seed: u64,
    /// Scenarios per parallel work unit. Has no effect on results.
    pub batch_size: usize,
    pub quantile_levels: Vec<f64>,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenarios: 100_000,
            horizon_periods: 1,
            lgd_mode: LgdMode::Deterministic,
            master_seed: 1,
            batch_size: 1_000,
            quantile_levels: DEFAULT_LEVELS.to_vec(),
            threads: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios == 0 {
            return Err(Error::Validation("scenarios must be positive".into()));
        }
        if self.horizon_periods == 0 {
            return Err(Error::Validation("horizon_periods must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Validation("threads must be positive".into()));
        }
        validate_levels(&self.quantile_levels)
    }
}

/// Levels must be strictly increasing inside (0, 1).
pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Validation("at least one quantile level is required".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::Validation(format!("quantile level {l} outside (0,1)")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("quantile levels must be strictly increasing".into()));
    }
    Ok(())
}

/// Calibrated inputs for a run. The LGD bundles are only needed by their mode.
#[derive(Debug, Clone, Copy)]
pub struct ModelInputs<'a> {
    pub factor: &'a FactorModel,
    pub model_a: Option<&'a ModelACalibration>,
    pub model_b: Option<&'a ModelBCalibration>,
}

struct FirmPlan {
    cell: usize,
    inv_scale: f64,
    idio: f64,
    threshold: f64,
    pd: f64,
    instruments: Vec<usize>,
}

struct InstrumentPlan {
    exposure: f64,
    m: f64,
    marginal: Option<LgdMarginal>,
}

enum LgdPlan {
    Deterministic,
    ModelA(JointFactor),
    ModelB(Vec<f64>),
}

struct Scratch {
    n_beta: Vec<f64>,
    n_z: Vec<f64>,
    beta: Vec<f64>,
    z: Vec<f64>,
    alive: Vec<bool>,
}

/// A portfolio and calibration compiled for repeated scenario evaluation.
pub struct Simulator {
    config: SimulationConfig,
    beta_factor: LowerFactor,
    firms: Vec<FirmPlan>,
    instruments: Vec<InstrumentPlan>,
    lgd: LgdPlan,
    excluded: usize,
}

impl Simulator {
    pub fn new(portfolio: &Portfolio, inputs: ModelInputs<'_>, config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let factor = inputs.factor;
        let active: Vec<_> = portfolio.firms().into_iter().filter(|f| !f.defaulted).collect();
        let cells: Vec<CellIndex> = {
            let set: std::collections::BTreeSet<CellIndex> = active.iter().map(|f| f.cell).collect();
            set.into_iter().collect()
        };
        let beta_cov = factor.beta_covariance_matrix(&cells)?;
        let beta_factor = cholesky_psd(&beta_cov)?;

        let mut firms = Vec::with_capacity(active.len());
        let mut firm_pos = std::collections::HashMap::new();
        for f in &active {
            let k = cells.binary_search(&f.cell).expect("cell collected above");
            let var_beta = beta_cov.get(k, k);
            let mut scale = factor.total_volatility(f.firm, f.cell)?;
            if var_beta > scale * scale {
                log::warn!(
                    "firm {}: cell factor variance {var_beta} exceeds sigma² + tau²; idiosyncratic term dropped",
                    f.firm
                );
                scale = var_beta.sqrt();
            }
            let idio = (1.0 - var_beta / (scale * scale)).max(0.0).sqrt();
            firm_pos.insert(f.firm, firms.len());
            firms.push(FirmPlan {
                cell: k,
                inv_scale: 1.0 / scale,
                idio,
                threshold: default_threshold(f.pd)?,
                pd: clamp_pd(f.pd),
                instruments: Vec::new(),
            });
        }

        let mut instruments = Vec::new();
        let mut excluded = 0;
        for inst in portfolio.instruments() {
            let Some(&fi) = firm_pos.get(&inst.firm) else {
                excluded += 1;
                continue;
            };
            let marginal = match config.lgd_mode {
                LgdMode::ModelB => Some(LgdMarginal::new(inst.expected_lgd, inst.collateralized)?),
                _ => None,
            };
            firms[fi].instruments.push(instruments.len());
            instruments.push(InstrumentPlan {
                exposure: inst.exposure,
                m: inst.expected_lgd,
                marginal,
            });
        }
        if excluded > 0 {
            log::info!("{excluded} instruments of firms already in default are excluded");
        }

        let lgd = match config.lgd_mode {
            LgdMode::Deterministic => LgdPlan::Deterministic,
            LgdMode::ModelA => {
                let cal = inputs.model_a.ok_or_else(|| {
                    Error::MissingCalibration("lgd mode model_a needs a model A calibration".into())
                })?;
                let (mean, szz, szb) = cal.moments_for(&cells)?;
                LgdPlan::ModelA(JointFactor::new(&beta_cov, mean, &szz, &szb)?)
            }
            LgdMode::ModelB => {
                let cal = inputs.model_b.ok_or_else(|| {
                    Error::MissingCalibration("lgd mode model_b needs a model B calibration".into())
                })?;
                LgdPlan::ModelB(cells.iter().map(|c| cal.coupling(*c).xi).collect())
            }
        };

        Ok(Self {
            config: config.clone(),
            beta_factor,
            firms,
            instruments,
            lgd,
            excluded,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    /// Number of firms that can default.
    pub fn active_firms(&self) -> usize {
        self.firms.len()
    }

    /// Instruments left out because their firm is already in default.
    pub fn excluded_instruments(&self) -> usize {
        self.excluded
    }

    fn scratch(&self) -> Scratch {
        let k = self.beta_factor.dim();
        Scratch {
            n_beta: vec![0.0; k],
            n_z: vec![0.0; k],
            beta: vec![0.0; k],
            z: vec![0.0; k],
            alive: vec![true; self.firms.len()],
        }
    }

    fn streams(&self, scenario: usize) -> (ChaCha8Rng, ChaCha8Rng) {
        let s = scenario as u64;
        (
            RngStream::new(self.config.master_seed, 2 * s).generator(),
            RngStream::new(self.config.master_seed, 2 * s + 1).generator(),
        )
    }

    fn run_scenario(&self, scenario: usize, sc: &mut Scratch, mut defaults: Option<&mut Vec<bool>>) -> Result<f64> {
        let (mut rd, mut rl) = self.streams(scenario);
        sc.alive.fill(true);
        let mut loss = 0.0;
        for _ in 0..self.config.horizon_periods {
            for n in sc.n_beta.iter_mut() {
                *n = StandardNormal.sample(&mut rd);
            }
            match &self.lgd {
                LgdPlan::ModelA(joint) => {
                    for n in sc.n_z.iter_mut() {
                        *n = StandardNormal.sample(&mut rl);
                    }
                    joint.apply(&sc.n_beta, &sc.n_z, &mut sc.beta, &mut sc.z);
                }
                _ => self.beta_factor.apply(&sc.n_beta, &mut sc.beta),
            }
            for (fi, f) in self.firms.iter().enumerate() {
                let e: f64 = StandardNormal.sample(&mut rd);
                if !sc.alive[fi] {
                    continue;
                }
                let g = sc.beta[f.cell] * f.inv_scale + f.idio * e;
                if g < f.threshold {
                    sc.alive[fi] = false;
                    loss += self.firm_loss(f, g, &sc.z, &mut rl)?;
                }
            }
        }
        if let Some(d) = defaults.as_deref_mut() {
            d.clear();
            d.extend(sc.alive.iter().map(|a| !a));
        }
        Ok(loss)
    }

    fn firm_loss<R: Rng>(&self, f: &FirmPlan, g: f64, z: &[f64], rl: &mut R) -> Result<f64> {
        let mut loss = 0.0;
        match &self.lgd {
            LgdPlan::Deterministic => {
                for &j in &f.instruments {
                    let inst = &self.instruments[j];
                    loss += inst.exposure * inst.m;
                }
            }
            LgdPlan::ModelA(_) => {
                for &j in &f.instruments {
                    let inst = &self.instruments[j];
                    loss += inst.exposure * sample_lgd_a(z[f.cell], inst.m, rl)?;
                }
            }
            LgdPlan::ModelB(xi) => {
                let u = (std_normal_cdf(g) / f.pd).min(1.0);
                let v: f64 = rl.random();
                let pct = lgd_percentile(u, v, xi[f.cell]);
                for &j in &f.instruments {
                    let inst = &self.instruments[j];
                    let m = inst.marginal.as_ref().expect("model B marginals compiled");
                    loss += inst.exposure * lgd_marginal_inverse(pct, m)?;
                }
            }
        }
        Ok(loss)
    }

    /// Loss of a single scenario.
    pub fn scenario_loss(&self, scenario: usize) -> Result<f64> {
        self.run_scenario(scenario, &mut self.scratch(), None)
    }

    /// Which active firms (ascending firm id) default by the horizon in the
    /// given scenario.
    pub fn scenario_defaults(&self, scenario: usize) -> Result<Vec<bool>> {
        let mut d = Vec::new();
        self.run_scenario(scenario, &mut self.scratch(), Some(&mut d))?;
        Ok(d)
    }

    /// Losses for scenarios `0..config.scenarios`, in scenario order.
    pub fn run(&self) -> Result<Vec<f64>> {
        let n = self.config.scenarios;
        let bs = self.config.batch_size;
        let batches = n.div_ceil(bs);
        let work = || -> Result<Vec<f64>> {
            let parts: Vec<Vec<f64>> = (0..batches)
                .into_par_iter()
                .map(|b| {
                    let mut sc = self.scratch();
                    (b * bs..((b + 1) * bs).min(n))
                        .map(|s| self.run_scenario(s, &mut sc, None))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            Ok(parts.concat())
        };
        match self.config.threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?
                .install(work),
            None => work(),
        }
    }
}

/// Compiles and runs a simulation, returning the per-scenario losses.
pub fn run_simulation(portfolio: &Portfolio, inputs: ModelInputs<'_>, config: &SimulationConfig) -> Result<Vec<f64>> {
    Simulator::new(portfolio, inputs, config)?.run()
}

#[cfg(test)]
mod tests;
