use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::CvReport;
use crate::label::{ClassLabel, NUM_CLASSES};
use crate::{Error, Result};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const REPORT_JSON: &str = "report.json";
pub const CONFUSION_PREFIX: &str = "confusion_";
pub const FIGURES_DIR: &str = "figures";
const REPORT_FORMAT_VERSION: u32 = 1;

/// File-name stem of a report, e.g. `dt_lda8`.
pub fn config_name(r: &CvReport) -> String {
    format!(
        "{}_{}{}",
        r.config.algorithm.to_ascii_lowercase(),
        r.config.dr_method,
        r.config.n_components
    )
}

fn unique_names(reports: &[CvReport]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    reports
        .iter()
        .map(|r| {
            let base = config_name(r);
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                base
            } else {
                format!("{base}_{n}")
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ReportFile<'a> {
    version: u32,
    reports: &'a [CvReport],
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv`, `report.json`, one `confusion_<config>.csv` per report and
/// the SVG figures under `figures/`. Returns the written paths.
pub fn emit_report(reports: &[CvReport], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to emit".into()));
    }
    let out = out_dir.as_ref();
    let fig = out.join(FIGURES_DIR);
    std::fs::create_dir_all(&fig).map_err(|e| Error::io(&fig, e))?;
    let names = unique_names(reports);
    let mut written = Vec::new();
    let mut emit = |path: PathBuf, text: String| -> Result<()> {
        write(path.clone(), &text)?;
        written.push(path);
        Ok(())
    };

    emit(out.join(SUMMARY_CSV), summary_csv(reports))?;
    let json = serde_json::to_string_pretty(&ReportFile {
        version: REPORT_FORMAT_VERSION,
        reports,
    })
    .map_err(|e| Error::json(out.join(REPORT_JSON), e))?;
    emit(out.join(REPORT_JSON), json + "\n")?;
    for (r, name) in reports.iter().zip(&names) {
        emit(out.join(format!("{CONFUSION_PREFIX}{name}.csv")), confusion_csv(r))?;
        emit(fig.join(format!("{CONFUSION_PREFIX}{name}.svg")), heatmap_svg(r, name))?;
    }
    emit(fig.join("accuracy_f1.svg"), bar_chart_svg(reports, &names))?;
    let mut by_dr: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in reports.iter().enumerate() {
        by_dr.entry(r.config.dr_method.as_str()).or_default().push(i);
    }
    for (dr, idx) in by_dr {
        emit(fig.join(format!("radar_{dr}.svg")), radar_svg(reports, &idx, dr))?;
    }
    Ok(written)
}

fn summary_csv(reports: &[CvReport]) -> String {
    let mut s =
        String::from("algorithm,dr_method,n_components,mean_accuracy,mean_macro_f1,std_accuracy,std_macro_f1,seed\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.config.algorithm,
            r.config.dr_method,
            r.config.n_components,
            r.mean_accuracy,
            r.mean_macro_f1,
            r.std_accuracy,
            r.std_macro_f1,
            r.config.seed
        );
    }
    s
}

fn confusion_csv(r: &CvReport) -> String {
    let header: Vec<&str> = ClassLabel::ALL.iter().map(|c| c.as_str()).collect();
    let mut s = header.join(",") + "\n";
    for row in &r.confusion.counts {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn svg_open(w: f64, h: f64, title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<title>{}</title>\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const ACC_COLOR: &str = "#3b6ea5";
const F1_COLOR: &str = "#e07b39";

fn legend(s: &mut String, x: f64, y: f64) {
    let _ = writeln!(
        s,
        "<rect x=\"{x}\" y=\"{y}\" width=\"10\" height=\"10\" fill=\"{ACC_COLOR}\"/><text x=\"{}\" y=\"{}\">accuracy</text>",
        x + 14.0,
        y + 9.0
    );
    let _ = writeln!(
        s,
        "<rect x=\"{}\" y=\"{y}\" width=\"10\" height=\"10\" fill=\"{F1_COLOR}\"/><text x=\"{}\" y=\"{}\">macro-F1</text>",
        x + 80.0,
        x + 94.0,
        y + 9.0
    );
}

/// Grouped bars of mean accuracy and macro-F1, one group per configuration.
fn bar_chart_svg(reports: &[CvReport], names: &[String]) -> String {
    let (left, top, plot_h, group_w) = (50.0, 30.0, 240.0, 56.0);
    let w = left + group_w * reports.len() as f64 + 20.0;
    let h = top + plot_h + 90.0;
    let mut s = svg_open(w, h, "Mean cross-validated accuracy and macro-F1");
    let base = top + plot_h;
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let y = base - v * plot_h;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.1}</text>",
            w - 20.0,
            left - 4.0,
            y + 4.0
        );
    }
    for (i, (r, name)) in reports.iter().zip(names).enumerate() {
        let x0 = left + group_w * i as f64 + 8.0;
        for (j, (v, color)) in [(r.mean_accuracy, ACC_COLOR), (r.mean_macro_f1, F1_COLOR)]
            .into_iter()
            .enumerate()
        {
            let bh = v.clamp(0.0, 1.0) * plot_h;
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"18\" height=\"{bh:.2}\" fill=\"{color}\"><title>{} {v:.4}</title></rect>",
                x0 + 20.0 * j as f64,
                base - bh,
                escape(name)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" transform=\"rotate(45 {:.2} {:.2})\">{}</text>",
            x0 + 4.0,
            base + 14.0,
            x0 + 4.0,
            base + 14.0,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{base}\" x2=\"{:.2}\" y2=\"{base}\" stroke=\"black\"/>",
        w - 20.0
    );
    legend(&mut s, left, 8.0);
    s.push_str("</svg>\n");
    s
}

/// Accuracy and macro-F1 polygons over the classifiers evaluated with one reduction.
fn radar_svg(reports: &[CvReport], idx: &[usize], dr: &str) -> String {
    let (cx, cy, rad) = (200.0, 210.0, 150.0);
    let mut s = svg_open(400.0, 400.0, &format!("Classifier comparison with {dr} features"));
    let n = idx.len().max(1);
    let angle = |i: usize| -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
    for ring in 1..=4 {
        let r = rad * ring as f64 / 4.0;
        let _ = writeln!(
            s,
            "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"{r:.2}\" fill=\"none\" stroke=\"#dddddd\"/>"
        );
    }
    for (i, &k) in idx.iter().enumerate() {
        let (x, y) = (cx + rad * angle(i).cos(), cy + rad * angle(i).sin());
        let _ = writeln!(
            s,
            "<line x1=\"{cx}\" y1=\"{cy}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"#999999\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            cx + (rad + 16.0) * angle(i).cos(),
            cy + (rad + 16.0) * angle(i).sin() + 4.0,
            escape(&reports[k].config.algorithm)
        );
    }
    for (pick, color) in [(0, ACC_COLOR), (1, F1_COLOR)] {
        let pts: Vec<String> = idx
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let v = if pick == 0 {
                    reports[k].mean_accuracy
                } else {
                    reports[k].mean_macro_f1
                };
                let r = rad * v.clamp(0.0, 1.0);
                format!("{:.2},{:.2}", cx + r * angle(i).cos(), cy + r * angle(i).sin())
            })
            .collect();
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
    }
    legend(&mut s, 10.0, 10.0);
    s.push_str("</svg>\n");
    s
}

/// Row-normalized confusion heatmap with raw counts in each cell.
fn heatmap_svg(r: &CvReport, name: &str) -> String {
    let (left, top, cell) = (40.0, 40.0, 30.0);
    let size = left + cell * NUM_CLASSES as f64 + 10.0;
    let mut s = svg_open(size, size, &format!("Confusion matrix {name}"));
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"14\" text-anchor=\"middle\">predicted</text>",
        left + cell * NUM_CLASSES as f64 / 2.0
    );
    for (i, c) in ClassLabel::ALL.iter().enumerate() {
        let p = left + cell * i as f64 + cell / 2.0;
        let _ = writeln!(
            s,
            "<text x=\"{p:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{c}</text>",
            top - 6.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{c}</text>",
            left - 6.0,
            p + 4.0
        );
    }
    for (i, row) in r.confusion.counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (j, &n) in row.iter().enumerate() {
            let frac = if total == 0 { 0.0 } else { n as f64 / total as f64 };
            let shade = (255.0 * (1.0 - 0.8 * frac)).round() as u8;
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"white\"/>"
            );
            if n > 0 {
                let ink = if frac > 0.6 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"{ink}\">{n}</text>",
                    x + cell / 2.0,
                    y + cell / 2.0 + 4.0
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
