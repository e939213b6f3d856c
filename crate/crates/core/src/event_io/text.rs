use std::io::{BufWriter, Read, Write};

use crate::error::{ParseError, Result};
use crate::model::{EstimateFlags, GroundTruthSample, JitterEstimate};

/// Column names of the telemetry CSV. The defaults are this project's
/// schema; other exports can be read by remapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelemetryColumns {
    pub t: String,
    pub x: String,
    pub y: String,
}

impl Default for TelemetryColumns {
    fn default() -> Self {
        Self { t: "t_us".into(), x: "x_mm".into(), y: "y_mm".into() }
    }
}

impl TelemetryColumns {
    /// Parses `t,x,y` column names separated by commas.
    pub fn parse(spec: &str) -> Option<Self> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [t, x, y] if !t.is_empty() && !x.is_empty() && !y.is_empty() => {
                Some(Self { t: t.to_string(), x: x.to_string(), y: y.to_string() })
            }
            _ => None,
        }
    }
}

fn csv_err(e: csv::Error) -> ParseError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    ParseError::at_line(line, e.to_string())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| ParseError::at_line(1, format!("missing column `{name}`")).into())
}

/// Reads actuator telemetry. Timestamps must be strictly increasing; gaps
/// are kept as they are.
pub fn read_telemetry<R: Read>(source: R, columns: &TelemetryColumns) -> Result<Vec<GroundTruthSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_err(e).into()),
    };
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let (it, ix, iy) = (column(&headers, &columns.t)?, column(&headers, &columns.x)?, column(&headers, &columns.y)?);
    let mut out: Vec<GroundTruthSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let t: i64 = rec
            .get(it)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ParseError::at_line(line, format!("`{}` is not an integer", columns.t)))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| ParseError::at_line(line, format!("`{name}` is not a number")).into())
        };
        let x_mm = num(ix, &columns.x)?;
        let y_mm = num(iy, &columns.y)?;
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(ParseError::at_line(line, format!("timestamp {t} not after {}", prev.t)).into());
            }
        }
        out.push(GroundTruthSample { t, x_mm, y_mm });
    }
    Ok(out)
}

pub fn write_telemetry<W: Write>(samples: &[GroundTruthSample], sink: W) -> Result<()> {
    let mut out = BufWriter::new(sink);
    writeln!(out, "t_us,x_mm,y_mm")?;
    for s in samples {
        writeln!(out, "{},{:.9},{:.9}", s.t, s.x_mm, s.y_mm)?;
    }
    out.flush()?;
    Ok(())
}

/// One `label,t_us` line of an acquisition log. Labels are opaque.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub label: String,
    pub t_us: i64,
}

impl LogEntry {
    pub fn new(label: impl Into<String>, t_us: i64) -> Self {
        Self { label: label.into(), t_us }
    }
}

pub fn read_log<R: Read>(source: R) -> Result<Vec<LogEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let (il, it) = (column(&headers, "label")?, column(&headers, "t_us")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let t_us = rec
            .get(it)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ParseError::at_line(line, "`t_us` is not an integer"))?;
        out.push(LogEntry { label: rec.get(il).unwrap_or_default().to_string(), t_us });
    }
    Ok(out)
}

pub fn write_log<W: Write>(entries: &[LogEntry], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["label", "t_us"]).map_err(csv_err)?;
    for e in entries {
        w.write_record([e.label.as_str(), &e.t_us.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Estimate CSV with `# key=value` metadata lines ahead of the table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimatesFile {
    pub meta: Vec<(String, String)>,
    pub estimates: Vec<JitterEstimate>,
}

impl EstimatesFile {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn t_batch_us(&self) -> Option<f64> {
        self.meta_value("t_batch_us").and_then(|v| v.parse().ok())
    }
}

pub fn write_estimates<W: Write>(file: &EstimatesFile, sink: W) -> Result<()> {
    let mut out = BufWriter::new(sink);
    for (k, v) in &file.meta {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "q,t_us,dx_px,dy_px,support,flags")?;
    for e in &file.estimates {
        writeln!(out, "{},{},{},{},{},{}", e.batch_index, e.t_end, e.dx, e.dy, e.support, e.flags.bits())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_estimates<R: Read>(mut source: R) -> Result<EstimatesFile> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let meta = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut estimates = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |name: &str| ParseError::at_line(line, format!("bad `{name}`"));
        let get = |i: usize| rec.get(i).unwrap_or("");
        estimates.push(JitterEstimate {
            batch_index: get(0).parse().map_err(|_| bad("q"))?,
            t_end: get(1).parse().map_err(|_| bad("t_us"))?,
            dx: get(2).parse().map_err(|_| bad("dx_px"))?,
            dy: get(3).parse().map_err(|_| bad("dy_px"))?,
            support: get(4).parse().map_err(|_| bad("support"))?,
            flags: EstimateFlags::from_bits_truncate(get(5).parse().map_err(|_| bad("flags"))?),
        });
    }
    Ok(EstimatesFile { meta, estimates })
}
