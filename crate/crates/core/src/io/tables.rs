use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiments::{AttackOutcome, ChannelMode, OutlierOrigin, PercentileRow, PixelFiMap, ScoredCurve, ValueCandidate};
use crate::influence::InfluenceRecord;

pub const RECORD_HEADER: [&str; 9] = [
    "sample_id",
    "target",
    "fi",
    "jacobian_norm",
    "cook_max",
    "y_true",
    "y_pred",
    "p_pred",
    "residual_ratio",
];

/// Shortest decimal text that parses back to the same value.
fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().has_headers(false).from_path(path)?)
}

pub fn write_records(records: &[InfluenceRecord], path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to write".into()));
    }
    let mut w = writer(path.as_ref())?;
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.sample_id.to_string(),
            r.target.clone(),
            opt(r.fi),
            opt(r.jacobian_norm),
            opt(r.cook_max),
            opt(r.y_true),
            r.y_pred.to_string(),
            r.p_pred.to_string(),
            opt(r.residual_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: FromStr>(row: &csv::StringRecord, i: usize, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    row[i].parse().map_err(|e| {
        Error::Format(format!(
            "line {line}, column {}: cannot parse `{}`: {e}",
            RECORD_HEADER[i], &row[i]
        ))
    })
}

fn opt_field<T: FromStr>(row: &csv::StringRecord, i: usize, line: usize) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if row[i].is_empty() {
        Ok(None)
    } else {
        field(row, i, line).map(Some)
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<InfluenceRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(Error::Format(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, row)| {
            let row = row?;
            let line = i + 2;
            if row.len() != RECORD_HEADER.len() {
                return Err(Error::Format(format!("line {line} has {} fields", row.len())));
            }
            Ok(InfluenceRecord {
                sample_id: field(&row, 0, line)?,
                target: row[1].to_string(),
                fi: opt_field(&row, 2, line)?,
                jacobian_norm: opt_field(&row, 3, line)?,
                cook_max: opt_field(&row, 4, line)?,
                y_true: opt_field(&row, 5, line)?,
                y_pred: field(&row, 6, line)?,
                p_pred: field(&row, 7, line)?,
                residual_ratio: opt_field(&row, 8, line)?,
                warning: None,
            })
        })
        .collect()
}

/// One row per point: `curve,threshold,x,y`. The curve's area goes in the
/// run summary.
pub fn write_curve(curve: &ScoredCurve, label: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["curve", "threshold", "x", "y"])?;
    // ROC curves carry one more point (the origin) than PR curves.
    let offset = curve.x.len() - curve.thresholds.len();
    for i in 0..curve.x.len() {
        let threshold = if i < offset {
            String::new()
        } else {
            curve.thresholds[i - offset].to_string()
        };
        w.write_record([label.to_string(), threshold, curve.x[i].to_string(), curve.y[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_percentiles(rows: &[PercentileRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["percentile", "value"])?;
    for r in rows {
        w.write_record([r.percentile.to_string(), r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `scale,channel,row,col,fi`. Averaged maps use channel `avg`.
pub fn write_pixel_map(map: &PixelFiMap, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["scale", "channel", "row", "col", "fi"])?;
    let pixels = map.height * map.width;
    for (scale, values) in &map.maps {
        for (i, v) in values.iter().enumerate() {
            let (channel, q) = (i / pixels, i % pixels);
            let channel = match map.channel_mode {
                ChannelMode::Averaged => "avg".to_string(),
                ChannelMode::PerChannel => channel.to_string(),
            };
            w.write_record([
                scale.to_string(),
                channel,
                (q / map.width).to_string(),
                (q % map.width).to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_origins(origins: &[OutlierOrigin], path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["index", "base_id", "shifted_id", "dx", "dy", "label"])?;
    for (i, o) in origins.iter().enumerate() {
        w.write_record([
            i.to_string(),
            o.base_id.to_string(),
            o.shifted_id.to_string(),
            o.dx.to_string(),
            o.dy.to_string(),
            o.label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One attacked image under one strategy (e.g. `fi` or `random`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub sample_id: usize,
    pub strategy: String,
    pub trial: usize,
    pub outcome: AttackOutcome,
}

pub fn write_attacks(rows: &[AttackRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record([
        "sample_id", "strategy", "trial", "row", "col", "y_pred", "p_before", "p_after", "y_after", "candidate",
    ])?;
    for r in rows {
        let o = &r.outcome;
        let candidate = match o.candidate {
            ValueCandidate::Set(v) => format!("set:{v}"),
            ValueCandidate::Offset(d) => format!("offset:{d}"),
        };
        w.write_record([
            r.sample_id.to_string(),
            r.strategy.clone(),
            r.trial.to_string(),
            o.row.to_string(),
            o.col.to_string(),
            o.y_pred.to_string(),
            o.p_before.to_string(),
            o.p_after.to_string(),
            o.y_after.to_string(),
            candidate,
        ])?;
    }
    w.flush()?;
    Ok(())
}
