//! Raw quarterly panels in the FRED-QD CSV layout.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::transform::Tcode;
use crate::date::Quarter;
use crate::error::{Error, Result};

/// Aligned quarterly series with their transform codes.
///
/// Missing observations are NaN and may only occur at a series' head or tail.
#[derive(Debug, Clone)]
pub struct RawPanel {
    dates: Vec<Quarter>,
    names: Vec<String>,
    values: Vec<Vec<f64>>,
    tcodes: Vec<Tcode>,
    index: HashMap<String, usize>,
}

fn parse_value(cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") || cell == "." {
        return Ok(f64::NAN);
    }
    cell.parse()
        .map_err(|_| Error::Data(format!("cannot parse value `{cell}`")))
}

impl RawPanel {
    pub fn new(dates: Vec<Quarter>) -> Result<Self> {
        for w in dates.windows(2) {
            if w[0].offset(1) != w[1] {
                return Err(Error::Data(format!(
                    "dates are not consecutive quarters: {} followed by {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self {
            dates,
            names: Vec::new(),
            values: Vec::new(),
            tcodes: Vec::new(),
            index: HashMap::new(),
        })
    }

    /// Add (or replace) a series.
    pub fn insert(&mut self, name: &str, values: Vec<f64>, tcode: Tcode) -> Result<()> {
        if values.len() != self.dates.len() {
            return Err(Error::Data(format!(
                "series `{name}` has {} values for {} dates",
                values.len(),
                self.dates.len()
            )));
        }
        check_missing_pattern(name, &values)?;
        if let Some(&i) = self.index.get(name) {
            self.values[i] = values;
            self.tcodes[i] = tcode;
        } else {
            self.index.insert(name.to_string(), self.names.len());
            self.names.push(name.to_string());
            self.values.push(values);
            self.tcodes.push(tcode);
        }
        Ok(())
    }

    pub fn dates(&self) -> &[Quarter] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn series(&self, name: &str) -> Result<&[f64]> {
        self.index
            .get(name)
            .map(|&i| self.values[i].as_slice())
            .ok_or_else(|| Error::MissingMnemonic(name.to_string()))
    }

    pub fn tcode(&self, name: &str) -> Result<Tcode> {
        self.index
            .get(name)
            .map(|&i| self.tcodes[i])
            .ok_or_else(|| Error::MissingMnemonic(name.to_string()))
    }

    pub fn position(&self, q: Quarter) -> Option<usize> {
        let first = *self.dates.first()?;
        let k = first.quarters_until(q);
        (k >= 0 && (k as usize) < self.dates.len()).then_some(k as usize)
    }

    /// Panel restricted to dates ≤ `last`.
    pub fn truncate(&self, last: Quarter) -> RawPanel {
        let n = self
            .dates
            .iter()
            .take_while(|d| **d <= last)
            .count();
        RawPanel {
            dates: self.dates[..n].to_vec(),
            names: self.names.clone(),
            values: self.values.iter().map(|v| v[..n].to_vec()).collect(),
            tcodes: self.tcodes.clone(),
            index: self.index.clone(),
        }
    }

    /// Read the FRED-QD layout: a header of mnemonics, one or more label rows
    /// (the one labelled `transform`, or else the first, carries transform codes),
    /// then one row per quarter.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Data("empty CSV".into()))??;
        let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        if names.is_empty() {
            return Err(Error::Data("CSV header has no series".into()));
        }

        let mut label_rows: Vec<csv::StringRecord> = Vec::new();
        let mut dates = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for rec in records {
            let rec = rec?;
            let label = rec.get(0).unwrap_or("").trim();
            if label.is_empty() && rec.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            match label.parse::<Quarter>() {
                Ok(q) => {
                    dates.push(q);
                    for (j, col) in columns.iter_mut().enumerate() {
                        col.push(parse_value(rec.get(j + 1).unwrap_or(""))?);
                    }
                }
                Err(_) if dates.is_empty() => label_rows.push(rec),
                Err(e) => return Err(e),
            }
        }
        let tcode_row = label_rows
            .iter()
            .find(|r| {
                let l = r.get(0).unwrap_or("").trim().to_ascii_lowercase();
                l.starts_with("transform") || l.starts_with("tcode")
            })
            .or_else(|| label_rows.first())
            .ok_or_else(|| Error::Data("CSV lacks a transform-code row".into()))?;

        let mut panel = RawPanel::new(dates)?;
        for (j, (name, values)) in names.iter().zip(columns).enumerate() {
            let cell = tcode_row.get(j + 1).unwrap_or("").trim();
            let code: i64 = cell
                .parse::<f64>()
                .map(|v| v as i64)
                .map_err(|_| Error::Data(format!("bad transform code `{cell}` for `{name}`")))?;
            let tcode = Tcode::try_from(code).map_err(|_| Error::UnknownTcode {
                mnemonic: name.clone(),
                code,
            })?;
            panel.insert(name, values, tcode)?;
        }
        Ok(panel)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["sasdate".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut tc = vec!["transform".to_string()];
        tc.extend(self.tcodes.iter().map(|t| i64::from(*t).to_string()));
        w.write_record(&tc)?;
        for (t, d) in self.dates.iter().enumerate() {
            let mut row = vec![d.to_string()];
            row.extend(self.values.iter().map(|v| {
                if v[t].is_finite() {
                    v[t].to_string()
                } else {
                    String::new()
                }
            }));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_missing_pattern(name: &str, values: &[f64]) -> Result<()> {
    let first = values.iter().position(|v| v.is_finite());
    let last = values.iter().rposition(|v| v.is_finite());
    if let (Some(a), Some(b)) = (first, last) {
        if let Some(k) = values[a..=b].iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "series `{name}` has an interior missing value at row {}",
                a + k
            )));
        }
    }
    Ok(())
}
