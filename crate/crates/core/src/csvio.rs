//! Header-driven CSV reading with line-numbered errors.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) struct CsvTable {
    name: String,
    columns: HashMap<String, usize>,
    rows: Vec<(usize, csv::StringRecord)>,
}

pub(crate) struct Row<'a> {
    table: &'a CsvTable,
    pub line: usize,
    record: &'a csv::StringRecord,
}

impl CsvTable {
    pub fn from_path(path: &Path, required: &[&str]) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Validation(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::from_reader(file, &path.display().to_string(), required)
    }

    pub fn from_reader<R: Read>(reader: R, name: &str, required: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::row(name, 1, format!("unreadable header: {e}")))?
            .clone();
        let columns: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for col in required {
            if !columns.contains_key(*col) {
                return Err(Error::row(name, 1, format!("missing required column '{col}'")));
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::row(name, line, e.to_string()))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            rows.push((line, rec));
        }
        Ok(Self {
            name: name.to_string(),
            columns,
            rows,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, record)| Row {
            table: self,
            line: *line,
            record,
        })
    }
}

impl Row<'_> {
    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::row(&self.table.name, self.line, message)
    }

    pub fn raw(&self, col: &str) -> Option<&str> {
        self.table
            .columns
            .get(col)
            .and_then(|&i| self.record.get(i))
            .filter(|s| !s.is_empty())
    }

    pub fn str(&self, col: &str) -> Result<String> {
        self.raw(col)
            .map(str::to_string)
            .ok_or_else(|| self.error(format!("missing value for '{col}'")))
    }

    pub fn f64(&self, col: &str) -> Result<f64> {
        let s = self
            .raw(col)
            .ok_or_else(|| self.error(format!("missing value for '{col}'")))?;
        let v: f64 = s
            .parse()
            .map_err(|_| self.error(format!("'{col}' is not a number: '{s}'")))?;
        if !v.is_finite() {
            return Err(self.error(format!("'{col}' must be finite, got '{s}'")));
        }
        Ok(v)
    }

    pub fn opt_f64(&self, col: &str) -> Result<Option<f64>> {
        match self.raw(col) {
            None => Ok(None),
            Some(_) => self.f64(col).map(Some),
        }
    }

    pub fn u32(&self, col: &str) -> Result<u32> {
        let s = self
            .raw(col)
            .ok_or_else(|| self.error(format!("missing value for '{col}'")))?;
        s.parse()
            .map_err(|_| self.error(format!("'{col}' is not a non-negative integer: '{s}'")))
    }

    pub fn bool(&self, col: &str) -> Result<bool> {
        let s = self
            .raw(col)
            .ok_or_else(|| self.error(format!("missing value for '{col}'")))?;
        match s.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "y" | "t" => Ok(true),
            "false" | "0" | "no" | "n" | "f" => Ok(false),
            _ => Err(self.error(format!("'{col}' is not a boolean: '{s}'"))),
        }
    }
}
