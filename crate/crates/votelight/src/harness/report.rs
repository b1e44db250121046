//! Output formatting and atomic file writes.

use std::path::Path;

use super::config::HarnessError;

/// Write a whole file via a temp sibling plus rename, so readers never see
/// a partial file.
pub fn atomic_write(path: impl AsRef<Path>, contents: &[u8]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let io = |source| HarnessError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

/// Fixed-precision float cell; optional metrics render as `n/a`.
pub fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "n/a".to_string(),
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Render a markdown table. `best` marks cells to bold (row, column).
pub fn markdown_table(header: &[String], rows: &[Vec<String>], best: &[(usize, usize)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", " --- |".repeat(header.len())));
    for (r, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if best.contains(&(r, c)) {
                    format!("**{cell}**")
                } else {
                    cell.clone()
                }
            })
            .collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn stats_are_standard() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(std_dev(&[5.0]), 0.0);
        assert!((std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]) - 2.138089935).abs() < 1e-6);
    }

    #[test]
    fn markdown_bolds_best_cells() {
        let md = markdown_table(
            &["m".into(), "att".into()],
            &[vec!["a".into(), "1.0".into()], vec!["b".into(), "2.0".into()]],
            &[(0, 1)],
        );
        assert!(md.contains("| a | **1.0** |"));
        assert!(md.contains("| b | 2.0 |"));
    }
}
