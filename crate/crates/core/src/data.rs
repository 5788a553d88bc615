//! CSV ingestion and summary serialization.
//!
//! Input files are headered CSVs. The default schema is the public California
//! housing file (longitude, latitude, housingMedianAge, totalRooms,
//! totalBedrooms, population, households, medianIncome, medianHouseValue);
//! target attributes may name a column directly or one of the conventional
//! derived attributes (MedInc, HouseAge, AveRooms, AveBedrms, Population,
//! AveOccup, MedValue) which are computed from the raw columns.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::summary::{Dataset, SummarizedData};

/// Column names of the raw California housing CSV.
pub const CALIFORNIA_SCHEMA: [&str; 9] = [
    "longitude",
    "latitude",
    "housingMedianAge",
    "totalRooms",
    "totalBedrooms",
    "population",
    "households",
    "medianIncome",
    "medianHouseValue",
];

/// Default input columns: the latitude/longitude pair.
pub fn default_input_columns() -> Vec<String> {
    vec!["latitude".into(), "longitude".into()]
}

#[derive(Debug, Clone)]
enum TargetPlan {
    Column(usize),
    Scaled(usize, f64),
    Ratio { numerator: usize, denominator: usize },
}

fn find_column(headers: &[String], name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .or_else(|| headers.iter().position(|h| h.eq_ignore_ascii_case(name)))
}

fn plan_target(headers: &[String], name: &str) -> Result<TargetPlan> {
    if let Some(idx) = find_column(headers, name) {
        return Ok(TargetPlan::Column(idx));
    }
    let col = |raw: &str| -> Result<usize> {
        find_column(headers, raw).ok_or_else(|| {
            Error::Data(format!(
                "target {name:?} needs column {raw:?}, which is missing from the header"
            ))
        })
    };
    match name.to_ascii_lowercase().as_str() {
        "medinc" => Ok(TargetPlan::Column(col("medianIncome")?)),
        "houseage" => Ok(TargetPlan::Column(col("housingMedianAge")?)),
        "population" => Ok(TargetPlan::Column(col("population")?)),
        "averooms" => Ok(TargetPlan::Ratio {
            numerator: col("totalRooms")?,
            denominator: col("households")?,
        }),
        "avebedrms" => Ok(TargetPlan::Ratio {
            numerator: col("totalBedrooms")?,
            denominator: col("households")?,
        }),
        "aveoccup" => Ok(TargetPlan::Ratio {
            numerator: col("population")?,
            denominator: col("households")?,
        }),
        "medvalue" | "medhousevalue" => Ok(TargetPlan::Scaled(col("medianHouseValue")?, 1e-5)),
        _ => Err(Error::Data(format!(
            "column {name:?} not found and no derived definition applies"
        ))),
    }
}

/// Load a headered CSV into a dataset. Rows with missing, unparseable, or
/// non-finite values in any used column are dropped; the second return value
/// counts them.
pub fn load_csv(
    path: &Path,
    input_columns: &[String],
    target_column: &str,
) -> Result<(Dataset, usize)> {
    if input_columns.is_empty() {
        return Err(Error::InvalidArgument("no input columns requested".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header of {}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();

    let input_idx: Vec<usize> = input_columns
        .iter()
        .map(|name| {
            find_column(&headers, name)
                .ok_or_else(|| Error::Data(format!("input column {name:?} missing from header")))
        })
        .collect::<Result<_>>()?;
    let plan = plan_target(&headers, target_column)?;

    let parse = |record: &csv::StringRecord, idx: usize| -> Option<f64> {
        record
            .get(idx)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
    };

    let d = input_idx.len();
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut rejected = 0_usize;
    for record in reader.records() {
        let record = record?;
        let mut row = Vec::with_capacity(d);
        let mut ok = true;
        for &idx in &input_idx {
            match parse(&record, idx) {
                Some(v) => row.push(v),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        let y = if ok {
            match &plan {
                TargetPlan::Column(i) => parse(&record, *i),
                TargetPlan::Scaled(i, f) => parse(&record, *i).map(|v| v * f),
                TargetPlan::Ratio {
                    numerator,
                    denominator,
                } => match (parse(&record, *numerator), parse(&record, *denominator)) {
                    (Some(a), Some(b)) if b != 0.0 => {
                        let r = a / b;
                        r.is_finite().then_some(r)
                    }
                    _ => None,
                },
            }
        } else {
            None
        };
        match y {
            Some(v) => {
                xs.extend_from_slice(&row);
                ys.push(v);
            }
            None => rejected += 1,
        }
    }
    if ys.is_empty() {
        return Err(Error::Data(format!(
            "no usable rows in {} ({rejected} rejected)",
            path.display()
        )));
    }
    let n = ys.len();
    let x = Array2::from_shape_vec((n, d), xs)
        .map_err(|e| Error::Data(format!("shape error assembling inputs: {e}")))?;
    let dataset = Dataset::new(x, Array1::from_vec(ys), input_columns.to_vec())?;
    Ok((dataset, rejected))
}

/// Write a summary as CSV with columns `z_1..z_d, ybar, svar, count`.
pub fn write_summary_csv<W: Write>(summary: &SummarizedData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = summary.dim();
    let mut header: Vec<String> = (1..=d).map(|k| format!("z_{k}")).collect();
    header.extend(["ybar".to_string(), "svar".to_string(), "count".to_string()]);
    w.write_record(&header)?;
    for j in 0..summary.len() {
        let mut rec: Vec<String> = summary
            .features
            .row(j)
            .iter()
            .map(|v| v.to_string())
            .collect();
        rec.push(summary.stats[j].to_string());
        rec.push(summary.variances[j].to_string());
        rec.push(summary.counts[j].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
