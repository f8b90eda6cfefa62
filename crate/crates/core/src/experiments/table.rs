//! Sweep tables and their byte-stable CSV / JSON encodings.

use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Shortest round-trip decimal, switching to exponent form outside [1e-4, 1e15).
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a numeric column over the rows whose `repetition` is "mean".
    pub fn mean_column(&self, name: &str) -> Vec<f64> {
        let (Some(c), Some(r)) = (self.column_index(name), self.column_index("repetition")) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|row| row[r] == Cell::Text("mean".into()))
            .filter_map(|row| row[c].as_f64())
            .collect()
    }

    /// Header plus one line per row, '\n' terminated.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    /// Array of row objects keyed by column name.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(k, v)| {
                        let val = match v {
                            Cell::Num(x) if !x.is_finite() => serde_json::Value::Null,
                            other => serde_json::to_value(other).unwrap_or(serde_json::Value::Null),
                        };
                        (k.clone(), val)
                    })
                    .collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_plain_and_stable() {
        let mut t = Table::new(&["x", "repetition", "signal"]);
        t.push(vec![0.1.into(), 0usize.into(), 1e-7.into()]);
        t.push(vec![2.0.into(), "mean".into(), f64::NAN.into()]);
        assert_eq!(t.to_csv(), "x,repetition,signal\n0.1,0,1e-7\n2,mean,nan\n");
        assert_eq!(t.mean_column("x"), vec![2.0]);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0 / 3.0, 21.475, -4.4e-9, 6.02e23, 123456.789] {
            let s = format_number(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn quotes_text_with_commas() {
        let mut t = Table::new(&["label"]);
        t.push(vec!["a,b".into()]);
        assert_eq!(t.to_csv(), "label\n\"a,b\"\n");
    }
}
