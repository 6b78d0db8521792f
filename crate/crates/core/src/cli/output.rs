use std::fs;
use std::path::{Path, PathBuf};

use super::run::{ReportRow, RunReport};
use crate::error::Result;

/// CSV columns in their fixed order. This header is the stability contract.
pub const CSV_COLUMNS: [&str; 15] = [
    "t1",
    "t2",
    "delta_t",
    "closed_form",
    "heisenberg",
    "factorized",
    "binned",
    "unmeasured_bohm",
    "unmeasured_bohm_stderr",
    "measured_quadrature",
    "measured_trajectory",
    "measured_trajectory_stderr",
    "epsilon_actual",
    "dropouts",
    "skipped",
];

/// 17 significant digits, decimal dot, exponent form.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn record(row: &ReportRow) -> [String; 15] {
    [
        format_float(row.t1),
        format_float(row.t2),
        format_float(row.delta_t),
        opt(row.closed_form),
        format_float(row.heisenberg),
        format_float(row.factorized),
        format_float(row.binned),
        opt(row.unmeasured_bohm),
        opt(row.unmeasured_bohm_stderr),
        format_float(row.measured_quadrature),
        opt(row.measured_trajectory),
        opt(row.measured_trajectory_stderr),
        format_float(row.epsilon_actual),
        row.dropouts.to_string(),
        row.skipped.join("; "),
    ]
}

/// The report rows as CSV text. Skipped values are empty cells.
pub fn to_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for row in &report.rows {
        w.write_record(record(row)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn to_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// A matplotlib script that draws the three predictions against `delta_t`.
pub fn plot_script(csv_name: &str, stem: &str) -> String {
    format!(
        r#"import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"


def column(rows, name):
    return [float(r[name]) if r[name] else float("nan") for r in rows]


with open(path, newline="") as f:
    rows = sorted(csv.DictReader(f), key=lambda r: (float(r["t1"]), float(r["delta_t"])))

fig, ax = plt.subplots(figsize=(7, 4.5))
for t1 in sorted({{r["t1"] for r in rows}}, key=float):
    sub = [r for r in rows if r["t1"] == t1]
    dt = column(sub, "delta_t")
    label = f"t1 = {{float(t1):.3g}}"
    ax.plot(dt, column(sub, "closed_form"), "-", color="C0", label="standard QM " + label)
    ax.errorbar(dt, column(sub, "unmeasured_bohm"), yerr=column(sub, "unmeasured_bohm_stderr"),
                fmt="s", color="C1", label="unmeasured Bohm " + label)
    ax.plot(dt, column(sub, "measured_quadrature"), "o", mfc="none", color="C2", label="measured Bohm " + label)
    traj = column(sub, "measured_trajectory")
    if any(v == v for v in traj):
        ax.errorbar(dt, traj, yerr=column(sub, "measured_trajectory_stderr"), fmt="x", color="C3",
                    label="measured Bohm (trajectories) " + label)
ax.set_xlabel("delta t = t2 - t1")
ax.set_ylabel("<x(t1) y(t2)>")
ax.axhline(0.0, color="0.8", lw=0.8)
ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig("{stem}_plot.png", dpi=150)
"#
    )
}

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>_plot.py` into `dir`.
pub fn write_outputs(report: &RunReport, dir: &Path, stem: &str) -> Result<[PathBuf; 3]> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let plot_path = dir.join(format!("{stem}_plot.py"));
    fs::write(&csv_path, to_csv(report))?;
    fs::write(&json_path, to_json(report) + "\n")?;
    fs::write(&plot_path, plot_script(&format!("{stem}.csv"), stem))?;
    Ok([csv_path, json_path, plot_path])
}

/// Human-readable comparison table.
pub fn summary(report: &RunReport) -> String {
    let cell = |v: Option<f64>| v.map(|v| format!("{v:>10.5}")).unwrap_or_else(|| format!("{:>10}", "-"));
    let mut out = format!(
        "{:>8} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "t1", "t2", "closed", "binned", "unmeas", "measured", "traj"
    );
    for r in &report.rows {
        out += &format!(
            "{:>8.4} {:>8.4} {} {} {} {} {}\n",
            r.t1,
            r.t2,
            cell(r.closed_form),
            cell(Some(r.binned)),
            cell(r.unmeasured_bohm),
            cell(Some(r.measured_quadrature)),
            cell(r.measured_trajectory),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let s = format_float(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        let digits = s.split('e').next().unwrap().replace('.', "");
        assert_eq!(digits.len(), 17);
        assert_eq!(format_float(-0.5), "-5.0000000000000000e-1");
    }
}
