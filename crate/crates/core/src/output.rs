//! CSV formats: per-cycle traces, run summaries and aggregate tables.
//!
//! Floats are written with 17 significant digits (`%.17g` style) so every
//! value read back is bit-identical to the one written.

use std::io::{Read, Write};

use crate::dynamics::CycleReport;

/// Formats like C's `%.17g`. NaN is written as `NaN`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let fixed = format!("{x:.*}", (16 - exp) as usize);
    trim_fraction(&fixed).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn parse_float(s: &str) -> Option<f64> {
    match s.trim() {
        "" => None,
        "NaN" | "nan" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}

pub const TRACE_HEADER: [&str; 15] = [
    "run_id",
    "cycle",
    "firm_id",
    "strategy",
    "market_id",
    "cash",
    "red",
    "green",
    "blue",
    "tr",
    "tc",
    "profit",
    "roa",
    "total_perf",
    "alive",
];

/// Streams per-firm, per-cycle rows.
pub struct TraceWriter<W: Write> {
    out: csv::Writer<W>,
    run_id: u32,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(inner: W, run_id: u32) -> csv::Result<Self> {
        let mut out = csv::Writer::from_writer(inner);
        out.write_record(TRACE_HEADER)?;
        Ok(Self { out, run_id })
    }

    pub fn write_report(&mut self, report: &CycleReport) -> csv::Result<()> {
        for f in &report.firms {
            let b = &f.breakdown;
            self.out.write_record([
                self.run_id.to_string(),
                report.cycle.to_string(),
                f.id.to_string(),
                f.strategy.to_string(),
                f.market.map(|m| m.to_string()).unwrap_or_default(),
                format_float(f.cash),
                format_float(f.resources.red),
                format_float(f.resources.green),
                format_float(f.resources.blue),
                format_float(b.total_revenue),
                format_float(b.total_cost),
                format_float(b.profit),
                format_float(f.roa),
                format_float(f.total_perf),
                u8::from(f.alive).to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| e.into_error())
    }
}

/// A numeric table keyed by run: `run_id`, `seed`, then named float columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub columns: Vec<String>,
    pub rows: Vec<RunRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: u32,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl RunTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["run_id".to_string(), "seed".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.run_id.to_string(), row.seed.to_string()];
            rec.extend(row.values.iter().map(|&v| format_float(v)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(|e| e.to_string())?.clone();
        if header.len() < 2 || &header[0] != "run_id" || &header[1] != "seed" {
            return Err("runs table must start with run_id,seed columns".into());
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let bad = |what: &str| format!("row {}: bad {what}", line + 1);
            let run_id = rec[0].parse().map_err(|_| bad("run_id"))?;
            let seed = rec[1].parse().map_err(|_| bad("seed"))?;
            let values = rec
                .iter()
                .skip(2)
                .zip(&columns)
                .map(|(v, c)| parse_float(v).ok_or_else(|| bad(c)))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != columns.len() {
                return Err(bad("column count"));
            }
            rows.push(RunRow {
                run_id,
                seed,
                values,
            });
        }
        Ok(Self { columns, rows })
    }
}
