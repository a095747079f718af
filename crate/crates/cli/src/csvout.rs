//! Minimal CSV emission with deterministic number formatting.
//!
//! Cells are written verbatim, so writers must not put separators in them;
//! that is asserted rather than quoted away — every cell this harness emits
//! is a number, an identifier, or a `|`/`;`-joined list.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};

/// Shortest round-trip decimal form; identical input bits give identical
/// strings, which is what makes rerun diffs byte-stable.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        ensure!(row.len() == header.len(), "row width {} != header width {}", row.len(), header.len());
        for cell in row {
            ensure!(
                !cell.contains([',', '"', '\n']),
                "cell {cell:?} needs quoting; fix the writer"
            );
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, to_csv(header, rows)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_and_rejects() {
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_f64(2e-4), "0.0002");
        let csv = to_csv(&["a", "b"], &[vec!["1".into(), "x|y;z".into()]]).unwrap();
        assert_eq!(csv, "a,b\n1,x|y;z\n");
        assert!(to_csv(&["a"], &[vec!["1,2".into()]]).is_err());
        assert!(to_csv(&["a", "b"], &[vec!["1".into()]]).is_err());
    }
}
