//! Tables written as CSV (with `#` header comments) or JSON.
//!
//! Reals are printed as `{:.16e}`, i.e. 17 significant digits, which is
//! enough for the reader to recover every value bit for bit. Integers never
//! contain `.` or `e`, so the reader can tell the two apart.

use std::io::{self, Read, Write};

use serde_json::{json, Map, Value};

/// Version of the JSON output layout.
pub const SCHEMA_VERSION: u32 = 1;

/// One table cell.
#[derive(Clone, Debug)]
pub enum Cell {
    /// A real.
    Num(f64),
    /// An integer.
    Int(i64),
    /// Free text.
    Text(String),
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Num(a), Cell::Num(b)) => a.to_bits() == b.to_bits(),
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Text(a), Cell::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn parse(s: &str) -> Cell {
        if !s.contains(['.', 'e', 'E']) {
            if let Ok(i) = s.parse::<i64>() {
                return Cell::Int(i);
            }
        }
        match s.parse::<f64>() {
            Ok(x) => Cell::Num(x),
            Err(_) => Cell::Text(s.to_string()),
        }
    }

    /// Numeric value of a real or integer cell.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            Cell::Text(_) => None,
        }
    }

    /// Text of a text cell.
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

/// Column names, rows, and `key = value` header comments.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// Header comments without the leading `# `.
    pub comments: Vec<String>,
    /// Column names.
    pub columns: Vec<String>,
    /// Rows, each as long as `columns`.
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    /// Empty table with the given columns.
    pub fn new(columns: &[&str]) -> Self {
        Table {
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Append a row.
    ///
    /// # Panics
    /// If the row length differs from the column count.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row length");
        self.rows.push(row);
    }

    /// Index of a column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column (NaN for text cells).
    pub fn f64_column(&self, name: &str) -> Vec<f64> {
        let Some(j) = self.column(name) else {
            return Vec::new();
        };
        self.rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Text values of a column (empty for numeric cells).
    pub fn str_column(&self, name: &str) -> Vec<String> {
        let Some(j) = self.column(name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .map(|r| match &r[j] {
                Cell::Text(s) => s.clone(),
                c => c.render(),
            })
            .collect()
    }

    /// Write as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for c in &self.comments {
            for line in c.lines() {
                writeln!(w, "# {line}")?;
            }
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for r in &self.rows {
            out.write_record(r.iter().map(Cell::render))?;
        }
        out.flush()?;
        Ok(())
    }

    /// CSV text.
    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// Read CSV written by [`Table::write_csv`].
    pub fn read_csv<R: Read>(mut r: R) -> io::Result<Table> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut comments = Vec::new();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            match line.strip_prefix('#') {
                Some(c) => {
                    let c = c.trim_end_matches(['\n', '\r']);
                    comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
                    body_start += line.len();
                }
                None => break,
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text[body_start..].as_bytes());
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "ragged row"));
            }
            rows.push(rec.iter().map(Cell::parse).collect());
        }
        Ok(Table {
            comments,
            columns,
            rows,
        })
    }

    /// JSON document: `schema_version`, `command`, resolved `config`,
    /// free-form `metadata`, `columns` and `rows` (non-finite reals as null).
    pub fn to_json(&self, command: &str, config: &[(String, String)], metadata: &Map<String, Value>) -> Value {
        let config: Map<String, Value> = config.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::to_json).collect()))
            .collect();
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config": config,
            "metadata": metadata,
            "columns": self.columns,
            "rows": rows,
        })
    }
}
