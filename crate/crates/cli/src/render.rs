//! Plain-text table rendering for shell output.

use neurq_core::catalog::RowSet;
use std::fmt::Write;

pub fn table(rows: &RowSet) -> String {
    let headers: Vec<String> = rows.columns.iter().map(|(n, _)| n.clone()).collect();
    let mut cells: Vec<Vec<String>> = Vec::with_capacity(rows.rows.len());
    for row in &rows.rows {
        cells.push(row.values.iter().map(|v| v.to_string()).collect());
    }
    let mut widths: Vec<usize> = headers.iter().map(String::len).collect();
    for row in &cells {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let rule = |out: &mut String| {
        for w in &widths {
            out.push('+');
            out.push_str(&"-".repeat(w + 2));
        }
        out.push_str("+\n");
    };
    rule(&mut out);
    for (i, h) in headers.iter().enumerate() {
        let _ = write!(out, "| {h:<width$} ", width = widths[i]);
    }
    out.push_str("|\n");
    rule(&mut out);
    for row in &cells {
        for (i, cell) in row.iter().enumerate() {
            let _ = write!(out, "| {cell:<width$} ", width = widths[i]);
        }
        out.push_str("|\n");
    }
    rule(&mut out);
    out
}
