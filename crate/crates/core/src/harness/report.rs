//! Run reports and the files written for them: a CSV of trials, a JSON
//! summary with per-cell statistics, and one SVG error-bar chart per swept
//! axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::{Axis, ScenarioConfig, ScenarioKind};
use super::sweep::{metric_names, TrialRecord, TrialStatus};
use super::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub trials: usize,
    pub axes: Vec<Axis>,
    pub metric_names: Vec<&'static str>,
    pub records: Vec<TrialRecord>,
}

/// Mean, minimum and maximum over the ok trials of a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub mean_abs: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stats> {
        // Sorted so the sums do not depend on record order.
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        Some(Stats {
            n: v.len(),
            mean: v.iter().sum::<f64>() / n,
            mean_abs: v.iter().map(|x| x.abs()).sum::<f64>() / n,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: usize,
    pub params: BTreeMap<String, f64>,
    pub ok: usize,
    pub skipped: usize,
    pub failed: usize,
    pub metrics: BTreeMap<String, Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub trials_per_cell: usize,
    pub records: usize,
    pub ok: usize,
    pub skipped: usize,
    pub failed: usize,
    pub cells: Vec<CellSummary>,
}

/// The metric charted per axis.
pub fn headline_metric(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::Touch => "width_error_pct",
        ScenarioKind::Clear => "opening_error_pct",
        ScenarioKind::Jump => "distance_error_pct",
    }
}

impl RunReport {
    pub fn new(cfg: &ScenarioConfig, axes: Vec<Axis>, records: Vec<TrialRecord>) -> Self {
        Self {
            scenario: cfg.scenario,
            seed: cfg.seed,
            trials: cfg.trials,
            axes,
            metric_names: metric_names(cfg.scenario).to_vec(),
            records,
        }
    }

    pub fn count(&self, pred: impl Fn(&TrialStatus) -> bool) -> usize {
        self.records.iter().filter(|r| pred(&r.status)).count()
    }

    pub fn failures(&self) -> usize {
        self.count(|s| matches!(s, TrialStatus::Failed(_)))
    }

    pub fn metric_index(&self, name: &str) -> Option<usize> {
        self.metric_names.iter().position(|m| *m == name)
    }

    /// Values of one metric over the ok records accepted by `filter`.
    pub fn metric_values(&self, name: &str, filter: impl Fn(&TrialRecord) -> bool) -> Vec<f64> {
        let Some(i) = self.metric_index(name) else { return Vec::new() };
        self.records.iter().filter(|r| r.status == TrialStatus::Ok && filter(r)).map(|r| r.metrics[i]).collect()
    }

    /// Per-cell statistics, recomputed from the records.
    pub fn summary(&self) -> Summary {
        let mut by_cell: BTreeMap<usize, Vec<&TrialRecord>> = BTreeMap::new();
        for r in &self.records {
            by_cell.entry(r.cell).or_default().push(r);
        }
        let cells = by_cell
            .into_iter()
            .map(|(cell, recs)| {
                let params = recs[0].params.values.iter().map(|(a, v)| (a.name().to_string(), *v)).collect();
                let ok: Vec<&&TrialRecord> = recs.iter().filter(|r| r.status == TrialStatus::Ok).collect();
                let metrics = self
                    .metric_names
                    .iter()
                    .enumerate()
                    .filter_map(|(i, name)| Stats::of(ok.iter().map(|r| r.metrics[i])).map(|s| (name.to_string(), s)))
                    .collect();
                CellSummary {
                    cell,
                    params,
                    ok: ok.len(),
                    skipped: recs.iter().filter(|r| matches!(r.status, TrialStatus::Skipped(_))).count(),
                    failed: recs.iter().filter(|r| matches!(r.status, TrialStatus::Failed(_))).count(),
                    metrics,
                }
            })
            .collect();
        Summary {
            scenario: self.scenario.name().to_string(),
            seed: self.seed,
            trials_per_cell: self.trials,
            records: self.records.len(),
            ok: self.count(|s| *s == TrialStatus::Ok),
            skipped: self.count(|s| matches!(s, TrialStatus::Skipped(_))),
            failed: self.failures(),
            cells,
        }
    }

    pub fn records_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = vec!["cell".into(), "trial".into(), "seed".into()];
        header.extend(self.axes.iter().map(|a| a.name().to_string()));
        header.push("status".into());
        header.extend(self.metric_names.iter().map(|m| m.to_string()));
        let io = |e: csv::Error| HarnessError::IoFailure(e.to_string());
        w.write_record(&header).map_err(io)?;
        for r in &self.records {
            let mut row = vec![r.cell.to_string(), r.trial.to_string(), r.seed.to_string()];
            row.extend(self.axes.iter().map(|a| r.params.get(*a).map_or(String::new(), |v| v.to_string())));
            row.push(r.status.label());
            row.extend(r.metrics.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::IoFailure(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }

    /// Error-bar chart of the headline metric against `axis`, pooling the
    /// other axes.
    pub fn axis_svg(&self, axis: Axis) -> String {
        let metric = headline_metric(self.scenario);
        let mut values: Vec<f64> = self.records.iter().filter_map(|r| r.params.get(axis)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let points: Vec<(f64, Option<Stats>)> = values
            .iter()
            .map(|&v| (v, Stats::of(self.metric_values(metric, |r| r.params.get(axis) == Some(v)))))
            .collect();
        error_bar_svg(&format!("{metric} vs {}", axis.name()), axis.name(), metric, &points)
    }
}

fn error_bar_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, Option<Stats>)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let stats: Vec<&Stats> = points.iter().filter_map(|(_, s)| s.as_ref()).collect();
    let mut lo = stats.iter().map(|s| s.min).fold(0.0, f64::min);
    let mut hi = stats.iter().map(|s| s.max).fold(0.0, f64::max);
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let x_at = |i: usize| left + plot_w * (i as f64 + 0.5) / points.len().max(1) as f64;
    let y_at = |v: f64| top + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, title);
    let _ =
        writeln!(s, r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#);
    let zero = y_at(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        left + plot_w
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_at(v);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#, left - 6.0, y + 4.0, v);
    }
    for (i, (x, st)) in points.iter().enumerate() {
        let cx = x_at(i);
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#, top + plot_h + 18.0);
        if let Some(st) = st {
            let (y_min, y_max, y_mean) = (y_at(st.min), y_at(st.max), y_at(st.mean));
            let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{y_min:.2}" x2="{cx:.2}" y2="{y_max:.2}" stroke="black"/>"#);
            for y in [y_min, y_max] {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
                    cx - 6.0,
                    cx + 6.0
                );
            }
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{y_mean:.2}" r="4" fill="steelblue"/>"#);
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        left + plot_w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{y_label}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `records.csv`, `summary.json` and `<axis>.svg` into `dir`.
pub fn emit(report: &RunReport, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| HarnessError::IoFailure(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("records.csv"), report.records_csv()?).map_err(io)?;
    std::fs::write(dir.join("summary.json"), report.summary_json()).map_err(io)?;
    for axis in &report.axes {
        std::fs::write(dir.join(format!("{}.svg", axis.name())), report.axis_svg(*axis)).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_ignore_nan() {
        let s = Stats::of([1.0, f64::NAN, -3.0]).unwrap();
        assert_eq!(s.n, 2);
        assert_eq!(s.mean, -1.0);
        assert_eq!(s.mean_abs, 2.0);
        assert_eq!((s.min, s.max), (-3.0, 1.0));
        assert!(Stats::of([f64::NAN]).is_none());
    }

    #[test]
    fn svg_is_well_formed() {
        let pts = vec![(1.0, Stats::of([1.0, 2.0])), (2.0, None)];
        let svg = error_bar_svg("t", "x", "y", &pts);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
