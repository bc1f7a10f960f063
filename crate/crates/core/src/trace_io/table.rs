//! Plain CSV tables (one header line of column names) and flat `key=value` files.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Parses field `col` of row `row` as a finite real.
    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let raw = &self.rows[row][col];
        match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(self.err(row, format!("non-finite field in column {}", self.columns[col]))),
            Err(_) => Err(self.err(row, format!("malformed number {raw:?} in column {}", self.columns[col]))),
        }
    }

    pub fn usize_at(&self, row: usize, col: usize) -> Result<usize> {
        let raw = &self.rows[row][col];
        raw.trim()
            .parse()
            .map_err(|_| self.err(row, format!("malformed index {raw:?} in column {}", self.columns[col])))
    }

    /// Error attributed to the file line holding data row `row`.
    pub fn err(&self, row: usize, message: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: row + 2,
            message,
        }
    }
}

pub fn parse_table(text: &str, path: &Path, expected: &[&str]) -> Result<Table> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "empty file".into(),
    })?;
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if columns != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected columns {}, found {header}", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 2,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        rows.push(fields);
    }
    Ok(Table {
        path: path.to_path_buf(),
        columns,
        rows,
    })
}

pub fn read_table(path: impl AsRef<Path>, expected: &[&str]) -> Result<Table> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(&text, path, expected)
}

pub fn format_table<I>(columns: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = columns.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table<I>(path: impl AsRef<Path>, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    super::write_file(path.as_ref(), &format_table(columns, rows))
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped. Keys keep file order.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("expected key=value, found {line:?}"),
        })?;
        let k = k.trim().to_string();
        if out.iter().any(|(existing, _)| *existing == k) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("duplicate key {k:?}"),
            });
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_key_values(&text, path)
}

pub fn format_key_values(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

pub fn write_key_values(path: impl AsRef<Path>, pairs: &[(String, String)]) -> Result<()> {
    super::write_file(path.as_ref(), &format_key_values(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_header_checked() {
        let p = Path::new("t.csv");
        assert!(parse_table("a,b\n1,2\n", p, &["a", "b"]).is_ok());
        assert!(parse_table("a,c\n1,2\n", p, &["a", "b"]).is_err());
        let e = parse_table("a,b\n1,2\n3\n", p, &["a", "b"]).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn numeric_errors_carry_line() {
        let t = parse_table("a,b\n1,2\n1,inf\n", Path::new("t.csv"), &["a", "b"]).unwrap();
        assert_eq!(t.f64_at(0, 1).unwrap(), 2.0);
        let e = t.f64_at(1, 1).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("non-finite"), "{e}");
    }

    #[test]
    fn key_values_round_trip() {
        let kv = parse_key_values("# c\na = 1\n\nb=two\n", Path::new("k")).unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "two".into())]);
        assert_eq!(format_key_values(&kv), "a=1\nb=two\n");
        assert!(parse_key_values("a=1\na=2\n", Path::new("k")).is_err());
        assert!(parse_key_values("nokey\n", Path::new("k")).is_err());
    }
}
