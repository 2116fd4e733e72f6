//! Side-by-side loss statistics for the three LGD modes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::stats::level_percent;
use super::{loss_statistics, run_simulation, LgdMode, LossStatistics, ModelInputs, SimulationConfig};
use crate::error::Result;
use crate::portfolio::Portfolio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub levels: Vec<f64>,
    pub rows: Vec<LossStatistics>,
}

impl ModelComparison {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["model".to_string(), "EL".to_string()];
        h.extend(self.levels.iter().map(|l| format!("q_{}", level_percent(*l))));
        h.extend(self.levels.iter().map(|l| format!("ETL_{}", level_percent(*l))));
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for row in &self.rows {
            let mut rec = vec![row.mode.map_or("", |m| m.label()).to_string(), row.el.to_string()];
            rec.extend(self.levels.iter().map(|l| row.quantile(*l).unwrap_or(f64::NAN).to_string()));
            rec.extend(self.levels.iter().map(|l| row.etl(*l).unwrap_or(f64::NAN).to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn get(&self, mode: LgdMode) -> Option<&LossStatistics> {
        self.rows.iter().find(|r| r.mode == Some(mode))
    }
}

/// Runs all three LGD modes with the same seed, so every mode sees the same
/// default scenarios.
pub fn compare_models(portfolio: &Portfolio, inputs: ModelInputs<'_>, config: &SimulationConfig) -> Result<ModelComparison> {
    let mut rows = Vec::new();
    for mode in LgdMode::ALL {
        let cfg = SimulationConfig {
            lgd_mode: mode,
            ..config.clone()
        };
        let losses = run_simulation(portfolio, inputs, &cfg)?;
        rows.push(loss_statistics(&losses, &cfg.quantile_levels)?.with_run(cfg.master_seed, mode));
    }
    Ok(ModelComparison {
        levels: config.quantile_levels.clone(),
        rows,
    })
}
