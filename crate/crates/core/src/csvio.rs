//! Minimal numeric CSV reading and writing.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Reads `ncols` numeric columns. Blank lines, `#` comments and a leading
/// non-numeric header are skipped.
pub fn read_numeric_columns<R: BufRead>(reader: R, ncols: usize) -> Result<Vec<Vec<f64>>> {
    let mut cols = vec![Vec::new(); ncols];
    let mut seen_data = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) if vals.len() >= ncols => {
                for (c, v) in cols.iter_mut().zip(vals) {
                    c.push(v);
                }
                seen_data = true;
            }
            Ok(vals) => {
                return Err(Error::Parse(format!(
                    "line {}: expected {ncols} columns, found {}",
                    lineno + 1,
                    vals.len()
                )))
            }
            Err(_) if !seen_data => continue,
            Err(e) => {
                return Err(Error::Parse(format!("line {}: {e}", lineno + 1)));
            }
        }
    }
    if !seen_data {
        return Err(Error::Parse("no numeric rows".into()));
    }
    Ok(cols)
}

/// Writes a header and equal-length columns.
pub fn write_columns<W: Write>(mut w: W, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    let n = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != n) || header.len() != cols.len() {
        return Err(Error::InvalidInput("column lengths differ".into()));
    }
    let mut row = String::new();
    for i in 0..n {
        row.clear();
        for (j, c) in cols.iter().enumerate() {
            if j > 0 {
                row.push(',');
            }
            row.push_str(&format!("{}", c[i]));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_columns(&mut buf, &["a", "b"], &[&[1.0, 2.5], &[-3.0, 4.0]]).unwrap();
        let cols = read_numeric_columns(buf.as_slice(), 2).unwrap();
        assert_eq!(cols, vec![vec![1.0, 2.5], vec![-3.0, 4.0]]);
    }

    #[test]
    fn bad_row_reports_line() {
        let err = read_numeric_columns("x,y\n1,2\n3,oops\n".as_bytes(), 2).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
