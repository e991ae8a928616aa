use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::date::{Quarter, QuarterRange};
use crate::error::{Error, Result};
use crate::estimate::fmt_num;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub origin: Quarter,
    pub model: String,
    pub horizon: usize,
    pub forecast: f64,
    /// None until the target is observed.
    pub realized: Option<f64>,
    pub volatility: Option<f64>,
}

impl ForecastRecord {
    pub fn error(&self) -> Option<f64> {
        self.realized.map(|r| r - self.forecast)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    pub model: String,
    pub rmse: f64,
    /// RMSE relative to the numeraire on the origins both have scored.
    pub ratio: Option<f64>,
    pub n: usize,
    pub excluded_n: usize,
}

fn excluded(origin: Quarter, exclusions: &[QuarterRange]) -> bool {
    exclusions.iter().any(|r| r.contains(origin))
}

fn scored(
    records: &[ForecastRecord],
    model: &str,
    exclusions: &[QuarterRange],
) -> (BTreeMap<Quarter, f64>, usize) {
    let mut errs = BTreeMap::new();
    let mut dropped = 0;
    for r in records.iter().filter(|r| r.model == model) {
        if let Some(e) = r.error() {
            if excluded(r.origin, exclusions) {
                dropped += 1;
            } else {
                errs.insert(r.origin, e);
            }
        }
    }
    (errs, dropped)
}

fn root_mean_square<'a>(errs: impl Iterator<Item = &'a f64>) -> f64 {
    let (s, n) = errs.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (s / n as f64).sqrt()
}

/// RMSE of `model` over its realized records outside `exclusions`, with the
/// ratio to `numeraire` computed on the common origins.
pub fn rmse(
    records: &[ForecastRecord],
    model: &str,
    exclusions: &[QuarterRange],
    numeraire: Option<&str>,
) -> Result<RmseSummary> {
    let (errs, excluded_n) = scored(records, model, exclusions);
    if errs.is_empty() {
        return Err(Error::Insufficient(format!("no scored forecasts for `{model}`")));
    }
    let ratio = match numeraire {
        Some(num) => {
            let (base, _) = scored(records, num, exclusions);
            let common: BTreeSet<Quarter> =
                errs.keys().filter(|q| base.contains_key(q)).copied().collect();
            if common.is_empty() {
                None
            } else {
                let a = root_mean_square(common.iter().map(|q| &errs[q]));
                let b = root_mean_square(common.iter().map(|q| &base[q]));
                Some(a / b)
            }
        }
        None => None,
    };
    Ok(RmseSummary {
        model: model.to_string(),
        rmse: root_mean_square(errs.values()),
        ratio,
        n: errs.len(),
        excluded_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub target: String,
    pub horizon: usize,
    /// `all` or `excl`.
    pub sample: String,
    #[serde(flatten)]
    pub score: RmseSummary,
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["target", "horizon", "model", "sample", "rmse", "ratio", "n", "excluded_n"])?;
    for r in rows {
        wr.write_record([
            r.target.clone(),
            r.horizon.to_string(),
            r.score.model.clone(),
            r.sample.clone(),
            fmt_num(r.score.rmse),
            r.score.ratio.map_or("NA".into(), fmt_num),
            r.score.n.to_string(),
            r.score.excluded_n.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Forecast paths for plotting: `origin,model,horizon,forecast,realized,volatility`.
pub fn write_records_csv<W: Write>(records: &[ForecastRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["origin", "model", "horizon", "forecast", "realized", "volatility"])?;
    for r in records {
        wr.write_record([
            r.origin.to_string(),
            r.model.clone(),
            r.horizon.to_string(),
            fmt_num(r.forecast),
            r.realized.map_or("NA".into(), fmt_num),
            r.volatility.map_or("NA".into(), fmt_num),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// External forecasts as `origin,value` rows.
pub fn read_external_csv<R: Read>(r: R) -> Result<BTreeMap<Quarter, f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Data(format!("external forecast CSV lacks a `{name}` column")))
    };
    let (oc, vc) = (col("origin")?, col("value")?);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let q: Quarter = rec.get(oc).unwrap_or("").trim().parse()?;
        let raw = rec.get(vc).unwrap_or("").trim();
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::Data(format!("bad forecast value `{raw}` at {q}")))?;
        if out.insert(q, v).is_some() {
            return Err(Error::Data(format!("duplicate external forecast for {q}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(q: &str, model: &str, f: f64, y: Option<f64>) -> ForecastRecord {
        ForecastRecord {
            origin: q.parse().unwrap(),
            model: model.into(),
            horizon: 1,
            forecast: f,
            realized: y,
            volatility: None,
        }
    }

    #[test]
    fn perfect_and_constant_error() {
        let r = vec![rec("2000Q1", "m", 1.0, Some(1.0)), rec("2000Q2", "m", 2.0, Some(2.0))];
        assert_eq!(rmse(&r, "m", &[], None).unwrap().rmse, 0.0);
        let r = vec![rec("2000Q1", "m", 1.0, Some(1.5)), rec("2000Q2", "m", 2.0, Some(1.5))];
        assert_eq!(rmse(&r, "m", &[], None).unwrap().rmse, 0.5);
    }

    #[test]
    fn exclusions_and_missing_realizations() {
        let r = vec![
            rec("2019Q4", "m", 0.0, Some(1.0)),
            rec("2020Q2", "m", 0.0, Some(10.0)),
            rec("2021Q1", "m", 0.0, None),
        ];
        let ex = [QuarterRange { start: "2020Q1".parse().unwrap(), end: "2020Q4".parse().unwrap() }];
        let s = rmse(&r, "m", &ex, None).unwrap();
        assert_eq!((s.rmse, s.n, s.excluded_n), (1.0, 1, 1));
        let only = [QuarterRange { start: "2019Q1".parse().unwrap(), end: "2020Q4".parse().unwrap() }];
        assert!(rmse(&r, "m", &only, None).is_err());
    }

    #[test]
    fn ratio_uses_common_origins() {
        let r = vec![
            rec("2000Q1", "ar4", 0.0, Some(2.0)),
            rec("2000Q1", "m", 0.0, Some(2.0)),
            rec("2000Q2", "m", 0.0, Some(100.0)),
        ];
        let s = rmse(&r, "m", &[], Some("ar4")).unwrap();
        assert_eq!(s.ratio, Some(1.0));
        assert_eq!(rmse(&r, "ar4", &[], Some("ar4")).unwrap().ratio, Some(1.0));
    }

    #[test]
    fn external_import() {
        let m = read_external_csv("origin,value\n2008Q1,2.5\n2008Q2,-1\n".as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[&"2008Q2".parse().unwrap()], -1.0);
        assert!(read_external_csv("origin,value\n2008Q1,x\n".as_bytes()).is_err());
        assert!(read_external_csv("when,value\n2008Q1,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn zero_error_record_never_raises_rmse(errs in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let start: Quarter = "1990Q1".parse().unwrap();
            let mut r: Vec<_> = errs
                .iter()
                .enumerate()
                .map(|(i, e)| rec(&start.offset(i as i64).to_string(), "m", 0.0, Some(*e)))
                .collect();
            let before = rmse(&r, "m", &[], None).unwrap().rmse;
            r.push(rec(&start.offset(errs.len() as i64).to_string(), "m", 3.0, Some(3.0)));
            prop_assert!(rmse(&r, "m", &[], None).unwrap().rmse <= before);
        }
    }
}
