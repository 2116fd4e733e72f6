use std::path::{Path, PathBuf};

use creditsim::default_model::{decompose_beta_series, load_firm_factors, FactorHistory, FactorModel};
use creditsim::lgd_a::{calibrate_model_a, LgdHistory, ModelACalibration};
use creditsim::lgd_b::{calibrate_model_b, load_default_records, ModelBCalibration};
use creditsim::portfolio::{LoadOptions, Portfolio};
use creditsim::sim::{
    analytic_expected_loss, compare_models, loss_statistics, potential_loss_breakdown, write_losses,
    BreakdownDimension, LgdMode, LossStatistics, ModelInputs, Simulator,
};
use creditsim::synthetic::{self, SyntheticSpec};
use creditsim::valuation::{CashflowBook, CurveSet};
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write, CliError, CliResult};
use crate::manifest::Manifest;
use crate::provenance::{Bundle, Provenance};

pub const FACTOR_BUNDLE: &str = "factor_model.json";
pub const MODEL_A_BUNDLE: &str = "model_a.json";
pub const MODEL_B_BUNDLE: &str = "model_b.json";

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(creditsim::Error::from)?;
    s.push('\n');
    Ok(s)
}

pub fn load_portfolio(m: &Manifest) -> CliResult<Portfolio> {
    let cashflows = match (&m.inputs.cashflows, &m.inputs.curves) {
        (Some(cf), Some(curves)) => Some(CashflowBook::load(cf, CurveSet::load(curves)?)?),
        _ => None,
    };
    let opts = LoadOptions {
        rating_classes: m.model.rating_classes,
        industries: m.model.industries,
        regions: m.model.regions,
        currency: m.model.currency.clone(),
        cashflows,
    };
    Ok(Portfolio::load(&m.inputs.portfolio, &opts)?)
}

fn write_bundle<T: Serialize>(path: &Path, provenance: Provenance, model: T) -> CliResult<()> {
    write(path, to_json(&Bundle { provenance, model })?)
}

fn bundle_model(path: &Path) -> CliResult<String> {
    if !path.is_file() {
        return Err(creditsim::Error::MissingCalibration(format!(
            "{} not found; run `creditsim calibrate` first",
            path.display()
        ))
        .into());
    }
    let bundle: Bundle<serde_json::Value> =
        serde_json::from_str(&read_to_string(path)?).map_err(creditsim::Error::from)?;
    Ok(bundle.model.to_string())
}

/// Files written by one command, for the summary printed on stdout.
pub type Written = Vec<PathBuf>;

pub fn calibrate(m: &Manifest) -> CliResult<Written> {
    let history_path = m.inputs.factor_history.as_deref().ok_or_else(|| CliError::Manifest {
        path: m.inputs.portfolio.clone(),
        message: "calibration needs inputs.factor_history".into(),
    })?;
    let portfolio = load_portfolio(m)?;
    let history = FactorHistory::load(history_path)?;
    let firms = match &m.inputs.firm_params {
        Some(p) => load_firm_factors(p)?,
        None => Vec::new(),
    };
    let factor = decompose_beta_series(&history)?.to_factor_model(firms, m.model.default_tau)?;
    for cell in portfolio.cells() {
        factor.cell(*cell)?;
    }
    let dir = m.calibration_dir();
    let mut written = Vec::new();

    let mut sources = vec![("factor_history", history_path)];
    sources.extend(m.inputs.firm_params.as_deref().map(|p| ("firm_params", p)));
    let path = dir.join(FACTOR_BUNDLE);
    write_bundle(&path, Provenance::new(sources)?, &factor)?;
    written.push(path);

    let model_a = match &m.inputs.lgd_history {
        None => {
            log::warn!("no LGD history in the manifest; model A is marked incomplete");
            ModelACalibration::incomplete("no lgd_history input")
        }
        Some(p) => match calibrate_model_a(&LgdHistory::load(p)?, &history) {
            Ok(c) => c,
            Err(e @ (creditsim::Error::InsufficientData(_) | creditsim::Error::DegenerateData(_))) => {
                log::warn!("model A calibration failed: {e}");
                ModelACalibration::incomplete(e.to_string())
            }
            Err(e) => return Err(e.into()),
        },
    };
    let mut sources = vec![("factor_history", history_path)];
    sources.extend(m.inputs.lgd_history.as_deref().map(|p| ("lgd_history", p)));
    let path = dir.join(MODEL_A_BUNDLE);
    write_bundle(&path, Provenance::new(sources)?, &model_a)?;
    written.push(path);

    match &m.inputs.default_records {
        Some(p) => {
            let model_b = calibrate_model_b(&portfolio, &load_default_records(p)?)?;
            let path = dir.join(MODEL_B_BUNDLE);
            let sources = [("default_records", p.as_path()), ("portfolio", m.inputs.portfolio.as_path())];
            write_bundle(&path, Provenance::new(sources)?, &model_b)?;
            written.push(path);
        }
        None => log::warn!("no default records in the manifest; model B is not calibrated"),
    }
    Ok(written)
}

struct Calibrations {
    factor: FactorModel,
    model_a: Option<ModelACalibration>,
    model_b: Option<ModelBCalibration>,
}

impl Calibrations {
    fn load(m: &Manifest, modes: &[LgdMode]) -> CliResult<Self> {
        let dir = m.calibration_dir();
        let factor = FactorModel::from_json(&bundle_model(&dir.join(FACTOR_BUNDLE))?)?;
        let model_a = if modes.contains(&LgdMode::ModelA) {
            Some(ModelACalibration::from_json(&bundle_model(&dir.join(MODEL_A_BUNDLE))?)?)
        } else {
            None
        };
        let model_b = if modes.contains(&LgdMode::ModelB) {
            Some(ModelBCalibration::from_json(&bundle_model(&dir.join(MODEL_B_BUNDLE))?)?)
        } else {
            None
        };
        Ok(Self { factor, model_a, model_b })
    }

    fn inputs(&self) -> ModelInputs<'_> {
        ModelInputs {
            factor: &self.factor,
            model_a: self.model_a.as_ref(),
            model_b: self.model_b.as_ref(),
        }
    }
}

/// Results document of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    #[serde(flatten)]
    pub stats: LossStatistics,
    pub currency: String,
    pub horizon_periods: u32,
    pub instruments: usize,
    pub excluded_instruments: usize,
    pub exposure_total: f64,
    pub positive_exposure_total: f64,
    /// `Σ P(default)·m·EXP`, the exact expected loss the simulated EL estimates.
    pub analytic_el: f64,
}

pub fn simulate(m: &Manifest, dump: Option<&Path>) -> CliResult<Written> {
    let portfolio = load_portfolio(m)?;
    let cfg = &m.config;
    let cal = Calibrations::load(m, &[cfg.lgd_mode])?;
    let sim = Simulator::new(&portfolio, cal.inputs(), cfg)?;
    let losses = sim.run()?;
    let stats = loss_statistics(&losses, &cfg.quantile_levels)?.with_run(cfg.master_seed, cfg.lgd_mode);
    let (exposure_total, positive_exposure_total) = portfolio.exposure_totals();
    let report = SimulationReport {
        stats,
        currency: portfolio.currency().to_string(),
        horizon_periods: cfg.horizon_periods,
        instruments: portfolio.len(),
        excluded_instruments: sim.excluded_instruments(),
        exposure_total,
        positive_exposure_total,
        analytic_el: analytic_expected_loss(&portfolio, cfg.horizon_periods),
    };
    let mut written = Vec::new();
    let path = m.output_dir.join(format!("results_{}.json", cfg.lgd_mode));
    write(&path, to_json(&report)?)?;
    written.push(path);
    if let Some(dump) = dump {
        let mut buf = Vec::with_capacity(8 * losses.len());
        write_losses(&mut buf, &losses)?;
        write(dump, buf)?;
        written.push(dump.to_path_buf());
    }
    written.extend(write_breakdowns(m, &portfolio)?);
    Ok(written)
}

pub fn compare(m: &Manifest) -> CliResult<Written> {
    let portfolio = load_portfolio(m)?;
    let cal = Calibrations::load(m, &LgdMode::ALL)?;
    let table = compare_models(&portfolio, cal.inputs(), &m.config)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let csv_path = m.output_dir.join("compare.csv");
    write(&csv_path, csv)?;
    let json_path = m.output_dir.join("compare.json");
    #[derive(Serialize)]
    struct Doc<'a> {
        currency: &'a str,
        #[serde(flatten)]
        table: &'a creditsim::sim::ModelComparison,
    }
    write(&json_path, to_json(&Doc { currency: portfolio.currency(), table: &table })?)?;
    Ok(vec![csv_path, json_path])
}

pub fn histogram(m: &Manifest) -> CliResult<Written> {
    write_breakdowns(m, &load_portfolio(m)?)
}

fn write_breakdowns(m: &Manifest, portfolio: &Portfolio) -> CliResult<Written> {
    let mut written = Vec::new();
    for dim in BreakdownDimension::ALL {
        let mut text = format!("{},expected_ptl,currency\n", dim.as_str());
        for (key, v) in potential_loss_breakdown(portfolio, dim) {
            text.push_str(&format!("{key},{v},{}\n", portfolio.currency()));
        }
        let path = m.output_dir.join(format!("ptl_by_{}.csv", dim.as_str()));
        write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub spec: SyntheticSpec,
    pub periods: usize,
    pub lgd_per_bucket: usize,
    pub records_per_cell: usize,
    pub lambda: f64,
}

/// Writes a self-consistent demo data set and a manifest that uses it.
pub fn generate(dir: &Path, opts: &GenerateOptions) -> CliResult<Written> {
    let spec = &opts.spec;
    let factor = synthetic::factor_model(spec)?;
    let portfolio = synthetic::portfolio(spec)?;
    let history = synthetic::factor_history(&factor, opts.periods, spec.seed)?;
    let lgd = synthetic::lgd_history(&history, 0.45, 1.0, 0.5, 0.4, opts.lgd_per_bucket, spec.seed)?;
    let marginals: Vec<_> = creditsim::lgd_b::calibration_marginals(&portfolio, &[])?.into_iter().collect();
    let records = synthetic::default_records(&marginals, opts.records_per_cell, opts.lambda, spec.seed)?;

    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> CliResult<()> {
        let path = dir.join(name);
        write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    let mut buf = Vec::new();
    portfolio.write_csv(&mut buf)?;
    emit("portfolio.csv", buf)?;
    let mut buf = Vec::new();
    synthetic::write_factor_history(&mut buf, &history)?;
    emit("factor_history.csv", buf)?;
    let mut buf = Vec::new();
    synthetic::write_lgd_history(&mut buf, &lgd)?;
    emit("lgd_history.csv", buf)?;
    let mut buf = Vec::new();
    synthetic::write_default_records(&mut buf, &records)?;
    emit("default_records.csv", buf)?;
    let manifest = format!(
        "output_dir = \"out\"\n\n\
         [inputs]\n\
         portfolio = \"portfolio.csv\"\n\
         factor_history = \"factor_history.csv\"\n\
         lgd_history = \"lgd_history.csv\"\n\
         default_records = \"default_records.csv\"\n\n\
         [model]\n\
         default_tau = {}\n\
         rating_classes = {}\n\
         currency = \"CHF\"\n\n\
         [config]\n\
         scenarios = 100000\n\
         horizon_periods = 1\n\
         lgd_mode = \"deterministic\"\n\
         master_seed = {}\n\
         batch_size = 1000\n\
         quantile_levels = [0.9, 0.95, 0.99, 0.9995, 0.9998]\n",
        spec.tau, spec.rating_classes, spec.seed
    );
    emit("manifest.toml", manifest.into_bytes())?;
    Ok(written)
}
