//! Run manifest: input files, model settings and simulation config in one
//! JSON or TOML document. Relative paths resolve against the manifest's
//! directory.

use std::path::{Path, PathBuf};

use creditsim::sim::SimulationConfig;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub portfolio: PathBuf,
    #[serde(default)]
    pub factor_history: Option<PathBuf>,
    #[serde(default)]
    pub lgd_history: Option<PathBuf>,
    #[serde(default)]
    pub default_records: Option<PathBuf>,
    #[serde(default)]
    pub firm_params: Option<PathBuf>,
    #[serde(default)]
    pub curves: Option<PathBuf>,
    #[serde(default)]
    pub cashflows: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    /// `τ` for firms without an entry in `firm_params`.
    pub default_tau: f64,
    pub rating_classes: u32,
    /// Currency of portfolios without a `currency` column.
    pub currency: String,
    pub industries: Option<u32>,
    pub regions: Option<u32>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            default_tau: 0.3,
            rating_classes: 40,
            currency: "CHF".into(),
            industries: None,
            regions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub inputs: Inputs,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub config: SimulationConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Where calibration bundles are written and read; defaults to
    /// `<output_dir>/calibration`.
    #[serde(default)]
    pub calibration_dir: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_to_string(path)?;
        let err = |message: String| CliError::Manifest {
            path: path.to_path_buf(),
            message,
        };
        let mut m: Manifest = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| err(e.to_string()))?,
            Some("toml") => toml::from_str(&text).map_err(|e| err(e.to_string()))?,
            _ => return Err(err("expected a .json or .toml file".into())),
        };
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve(base);
        m.check_paths().map_err(err)?;
        m.config.validate()?;
        if !(m.model.default_tau > 0.0) {
            return Err(err(format!("default_tau must be positive, got {}", m.model.default_tau)));
        }
        if m.model.rating_classes < 2 {
            return Err(err("rating_classes must be at least 2".into()));
        }
        Ok(m)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        fix(&mut i.portfolio);
        for p in [
            &mut i.factor_history,
            &mut i.lgd_history,
            &mut i.default_records,
            &mut i.firm_params,
            &mut i.curves,
            &mut i.cashflows,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.calibration_dir {
            fix(p);
        }
    }

    fn check_paths(&self) -> Result<(), String> {
        for (role, p) in self.input_files() {
            if !p.is_file() {
                return Err(format!("{role} file {} does not exist", p.display()));
            }
        }
        if self.inputs.cashflows.is_some() && self.inputs.curves.is_none() {
            return Err("cashflows need a curves file".into());
        }
        Ok(())
    }

    /// `(role, path)` for every input present, in a fixed order.
    pub fn input_files(&self) -> Vec<(&'static str, &Path)> {
        let i = &self.inputs;
        let mut out = vec![("portfolio", i.portfolio.as_path())];
        let optional = [
            ("factor_history", &i.factor_history),
            ("lgd_history", &i.lgd_history),
            ("default_records", &i.default_records),
            ("firm_params", &i.firm_params),
            ("curves", &i.curves),
            ("cashflows", &i.cashflows),
        ];
        out.extend(optional.into_iter().filter_map(|(r, p)| p.as_deref().map(|p| (r, p))));
        out
    }

    pub fn calibration_dir(&self) -> PathBuf {
        self.calibration_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("calibration"))
    }

    /// Redirects outputs. With `keep_calibration`, bundles are still read
    /// from the directory the manifest named.
    pub fn set_output_dir(&mut self, out: PathBuf, keep_calibration: bool) {
        if keep_calibration && self.calibration_dir.is_none() {
            self.calibration_dir = Some(self.calibration_dir());
        }
        self.output_dir = out;
    }
}
