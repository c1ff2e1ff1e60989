use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use g2coflow::coflow::fmt17;
use g2coflow::io::to_json_17;
use g2coflow::multilinear::MultiIndex;
use g2coflow::{KForm, Result};
use serde::Serialize;

pub fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = to_json_17(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// `<output>.footer.json`.
pub fn footer_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".footer.json");
    PathBuf::from(name)
}

/// CSV with a leading block of named columns followed by the coefficients
/// of a form in lexicographic multi-index order.
pub struct FormTable {
    head: Vec<String>,
    prefix: &'static str,
    dim: usize,
    degree: usize,
    rows: Vec<String>,
}

impl FormTable {
    pub fn new(head: &[&str], prefix: &'static str, dim: usize, degree: usize) -> Self {
        FormTable {
            head: head.iter().map(|s| s.to_string()).collect(),
            prefix,
            dim,
            degree,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, values: &[f64], form: &KForm) {
        let mut cells: Vec<String> = values.iter().map(|&v| fmt17(v)).collect();
        cells.extend(MultiIndex::all(self.dim, self.degree).into_iter().map(|mi| fmt17(form.get(mi))));
        self.rows.push(cells.join(","));
    }

    pub fn render(&self) -> String {
        let mut cols = self.head.clone();
        cols.extend(
            MultiIndex::all(self.dim, self.degree)
                .into_iter()
                .map(|mi| format!("{}{mi}", self.prefix)),
        );
        let mut out = cols.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}
