//! CSV series output and companion semi-log plot scripts.
//!
//! The harness stays headless: every run writes its series as CSV plus a
//! small matplotlib script that reproduces the reference presentation
//! (crossed value lines, solid envelope, red/blue/black for
//! alpha = 1e-4/1e-3/1e-2).

use std::fmt::Write as _;
use std::path::Path;

use crate::runner::{CliError, RunnerResult};

/// One named column of a series.
pub struct Column<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Writes a series as CSV: header row, `\n` endings, full-precision
/// floats. Rejects degenerate (single-row) series, non-ascending time and
/// non-finite values.
pub fn write_series_csv(path: &Path, times: &[f64], columns: &[Column]) -> RunnerResult<()> {
    if times.len() < 2 {
        return Err(CliError::Invalid(format!(
            "series for {} is degenerate ({} row{})",
            path.display(),
            times.len(),
            if times.len() == 1 { "" } else { "s" }
        )));
    }
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(CliError::Invalid(format!(
                "series for {} has non-ascending times",
                path.display()
            )));
        }
    }
    let mut text = String::from("t");
    for c in columns {
        if c.values.len() != times.len() {
            return Err(CliError::Invalid(format!(
                "column {} has {} rows, expected {}",
                c.name,
                c.values.len(),
                times.len()
            )));
        }
        text.push(',');
        text.push_str(c.name);
    }
    text.push('\n');
    for (k, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(CliError::Invalid(format!("non-finite time at row {k}")));
        }
        let _ = write!(text, "{t:.15e}");
        for c in columns {
            let v = c.values[k];
            if !v.is_finite() {
                return Err(CliError::Invalid(format!(
                    "non-finite value in column {} at t = {t}",
                    c.name
                )));
            }
            let _ = write!(text, ",{v:.15e}");
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Reference color mapping for the alpha sweep; other values cycle
/// through a fallback palette.
fn color_for_alpha(alpha: f64, index: usize) -> &'static str {
    const FALLBACK: [&str; 4] = ["green", "orange", "purple", "brown"];
    if (alpha - 1e-4).abs() < 1e-18 {
        "red"
    } else if (alpha - 1e-3).abs() < 1e-17 {
        "blue"
    } else if (alpha - 1e-2).abs() < 1e-16 {
        "black"
    } else {
        FALLBACK[index % FALLBACK.len()]
    }
}

/// One plotted series of a sweep: the CSV file name (relative to the
/// script) and the alpha it belongs to.
pub struct PlotEntry {
    pub csv_name: String,
    pub alpha: f64,
}

/// Writes a python script that overlays the sweep on a semi-log plot:
/// crosses for the measured values, solid lines for the envelope.
pub fn write_overlay_plot_script(
    path: &Path,
    entries: &[PlotEntry],
    value_column: &str,
    bound_column: &str,
    ylabel: &str,
) -> RunnerResult<()> {
    if entries.is_empty() {
        return Err(CliError::Invalid("no series to plot".to_string()));
    }
    let mut script = String::new();
    script.push_str("#!/usr/bin/env python3\n");
    script.push_str("\"\"\"Semi-log decay plot for the emitted CSV series.\"\"\"\n");
    script.push_str("import csv\nimport os\n\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n");
    script.push_str("HERE = os.path.dirname(os.path.abspath(__file__))\n\n");
    script.push_str("def load(name):\n");
    script.push_str("    with open(os.path.join(HERE, name), newline=\"\") as f:\n");
    script.push_str("        rows = list(csv.DictReader(f))\n");
    script.push_str("    cols = {k: [float(r[k]) for r in rows] for k in rows[0]}\n");
    script.push_str("    return cols\n\n");
    script.push_str("plt.figure(figsize=(7, 5))\n");
    for (k, entry) in entries.iter().enumerate() {
        let color = color_for_alpha(entry.alpha, k);
        let _ = writeln!(script, "data = load({:?})", entry.csv_name);
        let _ = writeln!(
            script,
            "plt.semilogy(data[\"t\"], data[{value_column:?}], \"x\", color={color:?}, label=\"alpha={:e}\")",
            entry.alpha
        );
        let _ = writeln!(
            script,
            "plt.semilogy(data[\"t\"], data[{bound_column:?}], \"-\", color={color:?})",
        );
    }
    script.push_str("plt.xlabel(\"t\")\n");
    let _ = writeln!(script, "plt.ylabel({ylabel:?})");
    script.push_str("plt.legend()\nplt.grid(True, which=\"both\", alpha=0.3)\n");
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "decay".to_string());
    let _ = writeln!(script, "out = os.path.join(HERE, \"{stem}.png\")");
    script.push_str("plt.savefig(out, dpi=150, bbox_inches=\"tight\")\nprint(out)\n");
    std::fs::write(path, script).map_err(|e| CliError::io(path, e))
}
