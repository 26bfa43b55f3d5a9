use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::ViolationRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    FaultActivated,
    FaultCleared,
    Violation(ViolationRecord),
}

/// Something a block reported during a run, stamped with the tick it happened on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub step: usize,
    pub block: String,
    pub kind: EventKind,
}

/// Per-step samples of every monitored signal, plus the events blocks emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    dt: f64,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    events: Vec<Event>,
}

impl TraceLog {
    pub(crate) fn new(dt: f64, names: Vec<String>, columns: Vec<Vec<f64>>, events: Vec<Event>) -> Self {
        Self { dt, names, columns, events }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples per signal.
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn signals(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, signal: &str) -> Option<&[f64]> {
        let idx = self.names.iter().position(|n| n == signal)?;
        Some(&self.columns[idx])
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn violations(&self) -> impl Iterator<Item = &ViolationRecord> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Violation(v) => Some(v),
            _ => None,
        })
    }

    pub fn time_at(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Writes `t,<signal>...` with one row per step, values as C `%.9g`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = String::from("t");
        for name in &self.names {
            line.push(',');
            line.push_str(name);
        }
        writeln!(w, "{line}")?;
        for k in 0..self.len() {
            line.clear();
            line.push_str(&format_g9(self.time_at(k)));
            for col in &self.columns {
                line.push(',');
                line.push_str(&format_g9(col[k]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    /// Reads a trace written by [`TraceLog::write_csv`]. Events are not part
    /// of the CSV form; `dt` is recovered from the first two time stamps.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("t") {
            return Err(Error::Malformed("trace csv must start with a `t` column".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut times = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record?;
            let mut fields = record.iter().map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Malformed(format!("not a number: `{f}`")))
            });
            times.push(fields.next().transpose()?.unwrap_or(f64::NAN));
            for col in columns.iter_mut() {
                let v = fields
                    .next()
                    .transpose()?
                    .ok_or_else(|| Error::Malformed("short trace row".into()))?;
                col.push(v);
            }
        }
        let dt = if times.len() >= 2 { times[1] - times[0] } else { f64::NAN };
        Ok(Self { dt, names, columns, events: Vec::new() })
    }
}

/// Formats like C's `printf("%.9g", x)`.
pub fn format_g9(x: f64) -> String {
    const P: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Rounding to P significant digits decides the exponent.
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
