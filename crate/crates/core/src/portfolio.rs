//! Portfolio data model: instruments, firms and industry-region cells.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvio::CsvTable;
use crate::error::{Error, Result};
use crate::valuation::CashflowBook;

pub const PORTFOLIO_COLUMNS: [&str; 9] = [
    "id",
    "firm",
    "industry",
    "region",
    "rating",
    "pd",
    "expected_lgd",
    "collateralized",
    "exposure",
];

/// An (industry, region) pair. Both indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub industry: u32,
    pub region: u32,
}

impl CellIndex {
    pub fn new(industry: u32, region: u32) -> Self {
        Self { industry, region }
    }
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.industry, self.region)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub id: String,
    pub firm: u32,
    pub cell: CellIndex,
    /// 1 is the best credit quality; the last class is the default state.
    pub rating: u32,
    pub pd: f64,
    /// Expected loss given default, used as `m` in model A and `L̄` in model B.
    pub expected_lgd: f64,
    pub collateralized: bool,
    /// Signed exposure. Values loaded from the CSV column are nonnegative;
    /// exposures valued from cashflow streams may be negative.
    pub exposure: f64,
}

/// Exposure (and optionally LGD) resolved from cashflow valuation. Fills blank
/// `exposure` / `expected_lgd` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedValuation {
    pub exposure: f64,
    pub lgd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Number of rating classes `J`; rating `J` marks a firm already in default.
    pub rating_classes: u32,
    pub industries: Option<u32>,
    pub regions: Option<u32>,
    /// Currency used when the file has no `currency` column.
    pub currency: String,
    pub cashflows: Option<CashflowBook>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            rating_classes: 40,
            industries: None,
            regions: None,
            currency: "CHF".into(),
            cashflows: None,
        }
    }
}

/// A validated, immutable set of instruments.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    instruments: Vec<Instrument>,
    cells: BTreeSet<CellIndex>,
    currency: String,
    rating_classes: u32,
}

/// One firm's default-relevant data. All instruments of a firm share it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmInfo {
    pub firm: u32,
    pub cell: CellIndex,
    pub pd: f64,
    pub defaulted: bool,
}

impl Portfolio {
    pub fn new(instruments: Vec<Instrument>, currency: &str, rating_classes: u32) -> Result<Self> {
        if instruments.is_empty() {
            return Err(Error::Validation("empty portfolio".into()));
        }
        let mut ids = BTreeSet::new();
        let mut firms: HashMap<u32, (CellIndex, f64)> = HashMap::new();
        for inst in &instruments {
            validate_instrument(inst, rating_classes, true)
                .map_err(|m| Error::Validation(format!("instrument '{}': {m}", inst.id)))?;
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id '{}'", inst.id)));
            }
            check_firm_consistency(&mut firms, inst)
                .map_err(|m| Error::Validation(format!("instrument '{}': {m}", inst.id)))?;
        }
        let cells = instruments.iter().map(|i| i.cell).collect();
        Ok(Self {
            instruments,
            cells,
            currency: currency.to_string(),
            rating_classes,
        })
    }

    pub fn load(path: &Path, opts: &LoadOptions) -> Result<Self> {
        let table = CsvTable::from_path(path, &PORTFOLIO_COLUMNS)?;
        Self::from_table(&table, opts)
    }

    pub fn from_reader<R: Read>(reader: R, name: &str, opts: &LoadOptions) -> Result<Self> {
        let table = CsvTable::from_reader(reader, name, &PORTFOLIO_COLUMNS)?;
        Self::from_table(&table, opts)
    }

    fn from_table(table: &CsvTable, opts: &LoadOptions) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Validation(format!("{}: empty portfolio", table.name())));
        }
        let mut instruments = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut firms: HashMap<u32, (CellIndex, f64)> = HashMap::new();
        let mut currency: Option<String> = None;
        for row in table.rows() {
            let id = row.str("id")?;
            if let Some(first) = ids.get(&id) {
                return Err(row.error(format!("duplicate id '{id}' (first seen on line {first})")));
            }
            ids.insert(id.clone(), row.line);
            let industry = row.u32("industry")?;
            let region = row.u32("region")?;
            if industry == 0 || opts.industries.is_some_and(|n| industry > n) {
                return Err(row.error(format!("industry {industry} out of range")));
            }
            if region == 0 || opts.regions.is_some_and(|n| region > n) {
                return Err(row.error(format!("region {region} out of range")));
            }
            let rating = row.u32("rating")?;
            let resolved = match &opts.cashflows {
                Some(book) => book.resolve(&id, rating).map_err(|e| row.error(e.to_string()))?,
                None => None,
            };
            let from_column = row.raw("exposure").is_some();
            let exposure = match row.opt_f64("exposure")? {
                Some(x) if x < 0.0 => {
                    return Err(row.error(format!("exposure must be >= 0, got {x}")))
                }
                Some(x) => x,
                None => resolved.map(|v| v.exposure).ok_or_else(|| {
                    row.error("exposure is blank and no cashflow valuation is available")
                })?,
            };
            let expected_lgd = match row.opt_f64("expected_lgd")? {
                Some(x) => x,
                None => resolved.and_then(|v| v.lgd).ok_or_else(|| {
                    row.error("expected_lgd is blank and no recovery valuation is available")
                })?,
            };
            if let Some(c) = row.raw("currency") {
                match &currency {
                    None => currency = Some(c.to_string()),
                    Some(prev) if prev != c => {
                        return Err(row.error(format!(
                            "multiple currencies in one portfolio ('{prev}' and '{c}')"
                        )))
                    }
                    _ => {}
                }
            }
            let inst = Instrument {
                id,
                firm: row.u32("firm")?,
                cell: CellIndex::new(industry, region),
                rating,
                pd: row.f64("pd")?,
                expected_lgd,
                collateralized: row.bool("collateralized")?,
                exposure,
            };
            validate_instrument(&inst, opts.rating_classes, !from_column).map_err(|m| row.error(m))?;
            check_firm_consistency(&mut firms, &inst).map_err(|m| row.error(m))?;
            instruments.push(inst);
        }
        let cells = instruments.iter().map(|i| i.cell).collect();
        Ok(Self {
            instruments,
            cells,
            currency: currency.unwrap_or_else(|| opts.currency.clone()),
            rating_classes: opts.rating_classes,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = PORTFOLIO_COLUMNS.to_vec();
        header.push("currency");
        w.write_record(&header)?;
        for i in &self.instruments {
            w.write_record(&[
                i.id.clone(),
                i.firm.to_string(),
                i.cell.industry.to_string(),
                i.cell.region.to_string(),
                i.rating.to_string(),
                format!("{:?}", i.pd),
                format!("{:?}", i.expected_lgd),
                i.collateralized.to_string(),
                format!("{:?}", i.exposure),
                self.currency.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    pub fn len(&self) -> usize {
        self.instruments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instruments.is_empty()
    }

    pub fn cells(&self) -> &BTreeSet<CellIndex> {
        &self.cells
    }

    pub fn currency(&self) -> &str {
        &self.currency
    }

    pub fn rating_classes(&self) -> u32 {
        self.rating_classes
    }

    /// Instruments in the default rating class are excluded from new-default
    /// simulation.
    pub fn is_defaulted(&self, inst: &Instrument) -> bool {
        inst.rating == self.rating_classes
    }

    /// Distinct firms in ascending firm order.
    pub fn firms(&self) -> Vec<FirmInfo> {
        let mut map: BTreeMap<u32, FirmInfo> = BTreeMap::new();
        for inst in &self.instruments {
            let defaulted = self.is_defaulted(inst);
            map.entry(inst.firm)
                .and_modify(|f| f.defaulted |= defaulted)
                .or_insert(FirmInfo {
                    firm: inst.firm,
                    cell: inst.cell,
                    pd: inst.pd,
                    defaulted,
                });
        }
        map.into_values().collect()
    }

    /// Instrument ids grouped by cell. Only occupied cells appear.
    pub fn group_by_cell(&self) -> BTreeMap<CellIndex, Vec<String>> {
        let mut groups: BTreeMap<CellIndex, Vec<String>> = BTreeMap::new();
        for inst in &self.instruments {
            groups.entry(inst.cell).or_default().push(inst.id.clone());
        }
        groups
    }

    /// Σ exposure over all instruments, and Σ max(exposure, 0).
    pub fn exposure_totals(&self) -> (f64, f64) {
        self.instruments.iter().fold((0.0, 0.0), |(s, p), i| {
            (s + i.exposure, p + i.exposure.max(0.0))
        })
    }
}

fn validate_instrument(
    inst: &Instrument,
    rating_classes: u32,
    allow_negative_exposure: bool,
) -> std::result::Result<(), String> {
    if inst.id.is_empty() {
        return Err("empty id".into());
    }
    if inst.firm == 0 {
        return Err("firm must be a positive integer".into());
    }
    if inst.cell.industry == 0 || inst.cell.region == 0 {
        return Err(format!("cell {} out of range", inst.cell));
    }
    if inst.rating == 0 || inst.rating > rating_classes {
        return Err(format!(
            "rating {} outside 1..={rating_classes}",
            inst.rating
        ));
    }
    if !(inst.pd > 0.0 && inst.pd < 1.0) {
        return Err(format!("pd must lie in (0,1), got {}", inst.pd));
    }
    if !(inst.expected_lgd > 0.0 && inst.expected_lgd < 1.0) {
        return Err(format!(
            "expected_lgd must lie in (0,1), got {}",
            inst.expected_lgd
        ));
    }
    if !inst.exposure.is_finite() || (!allow_negative_exposure && inst.exposure < 0.0) {
        return Err(format!("invalid exposure {}", inst.exposure));
    }
    Ok(())
}

fn check_firm_consistency(
    firms: &mut HashMap<u32, (CellIndex, f64)>,
    inst: &Instrument,
) -> std::result::Result<(), String> {
    match firms.get(&inst.firm) {
        Some(&(cell, pd)) if cell != inst.cell || pd != inst.pd => Err(format!(
            "firm {} appears with inconsistent cell or pd across instruments",
            inst.firm
        )),
        Some(_) => Ok(()),
        None => {
            firms.insert(inst.firm, (inst.cell, inst.pd));
            Ok(())
        }
    }
}
