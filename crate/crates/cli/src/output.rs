use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

/// Result of one command: the JSON payload and its tabular form.
pub struct Output {
    pub result: Value,
    pub table: Table,
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => sig6(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

/// Six significant digits, trailing zeros trimmed; `inf`, `-inf`, `nan`
/// for non-finite values.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // round in scientific form first so a carry (9.999996 -> 10) moves the exponent
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let e: i32 = exp.parse().unwrap();
    if (-5..15).contains(&e) {
        let rounded: f64 = sci.parse().unwrap();
        let decimals = (5 - e).max(0) as usize;
        trim_zeros(format!("{rounded:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn labels(set: &[usize]) -> String {
    set.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";")
}

pub fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serialisable result")
}

pub struct Meta<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub accuracy: f64,
    pub deterministic: bool,
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn envelope(meta: &Meta, result: Value) -> Value {
    let mut v = json!({
        "schema_version": SCHEMA_VERSION,
        "command": meta.command,
        "seed": meta.seed,
        "accuracy": meta.accuracy,
        "result": result,
    });
    if !meta.deterministic {
        v["timestamp"] = json!(timestamp());
    }
    v
}

pub fn write_json(out: &mut dyn Write, meta: &Meta, result: Value) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, &envelope(meta, result))?;
    writeln!(out)
}

/// CSV preceded by `#` comment lines carrying the run metadata.
pub fn write_csv(out: &mut dyn Write, meta: &Meta, table: &Table) -> std::io::Result<()> {
    writeln!(
        out,
        "# schema_version={} command={} seed={} accuracy={}",
        SCHEMA_VERSION,
        meta.command,
        meta.seed,
        sig6(meta.accuracy)
    )?;
    if !meta.deterministic {
        writeln!(out, "# timestamp={}", timestamp())?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()
}
