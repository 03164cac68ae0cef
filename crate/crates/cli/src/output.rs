//! Output files. Everything written here is a pure function of the run
//! configuration and seed, so repeated runs are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use oaccomp::{Comparison, ModulationVector};
use serde_json::Value;

use crate::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write(dir, name, &text)
}

/// `re,im` per level, after a `#` header line.
pub fn constellation_csv(x: &ModulationVector) -> String {
    let mut out = String::from("# re,im\n");
    for v in x.as_slice() {
        let _ = writeln!(out, "{},{}", v.re, v.im);
    }
    out
}

pub fn write_constellation(dir: &Path, name: &str, x: &ModulationVector) -> Result<(), CliError> {
    write(dir, name, &constellation_csv(x))
}

/// Whitespace-separated columns: the axis value, then one column per
/// design holding `10 log10` of the headline error (MSE, or MAE when the
/// noise has infinite variance).
pub fn sweep_dat(header: &str, labels: &[String], cmp: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {header}");
    let axis = cmp.sweeps.first().map_or("axis", |s| s.axis.name());
    let _ = writeln!(out, "# {axis} {}", labels.join(" "));
    let heads: Vec<Vec<(f64, f64)>> = cmp.sweeps.iter().map(|s| s.headline()).collect();
    for (i, row) in cmp.rows.iter().enumerate() {
        let _ = write!(out, "{}", row.axis);
        for h in &heads {
            let _ = write!(out, " {}", oaccomp::simulator::to_db(h[i].0));
        }
        out.push('\n');
    }
    out
}

pub fn write_text(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    write(dir, name, body)
}

/// One line per grid point: designs best first, `<` where the next one is
/// worse beyond the significance band and `~` where they overlap.
pub fn ranking_table(labels: &[String], cmp: &Comparison) -> String {
    let axis = cmp.sweeps.first().map_or("axis", |s| s.axis.name());
    let mut out = format!("# {axis} ranking (best first)\n");
    for row in &cmp.rows {
        let _ = write!(out, "{}", row.axis);
        for (n, &d) in row.order.iter().enumerate() {
            if n > 0 {
                out.push_str(if row.separated[n - 1] { " <" } else { " ~" });
            }
            let _ = write!(out, " {}", labels[d]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constellation_round_trips_exactly() {
        let x =
            ModulationVector::from_pairs(&[[0.1, -0.3], [1.0 / 3.0, 0.0], [-0.2, 0.7]]).unwrap();
        let back = ModulationVector::from_columns(&constellation_csv(&x)).unwrap();
        assert_eq!(back, x);
    }
}
