use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{degradations, Classifier, ExperimentReport, GridConfig, Variant};
use crate::applog::Scope;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub encoding: Scope,
    pub classifier: Classifier,
    pub best_variant: Variant,
    pub best_macro_f: f64,
    pub dropout_macro_f: f64,
    /// `best_macro_f - dropout_macro_f`.
    pub delta: f64,
    /// `delta / best_macro_f`.
    pub relative: f64,
}

/// Everything needed to rerun a grid: the full configuration with every
/// seed, plus where the data came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub grid: GridConfig,
    pub filter_sizes: Vec<u8>,
    pub data: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub synth: Option<crate::synthgen::SynthConfig>,
}

impl RunManifest {
    pub fn new(command: &str, grid: GridConfig, filter_sizes: Vec<u8>) -> Self {
        RunManifest {
            tool: "appprint".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            grid,
            filter_sizes,
            data: None,
            cache_dir: None,
            synth: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub const REPORT_HEADER: &str = "encoding,variant,classifier,fold,macro_precision,macro_recall,macro_f,micro_f";

/// One row per fold of every report.
pub fn reports_csv<W: Write>(reports: &[ExperimentReport], mut w: W) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        for f in &r.folds {
            let m = &f.metrics;
            writeln!(
                w,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.encoding.name().to_uppercase(),
                r.variant,
                r.classifier,
                f.fold,
                m.macro_precision,
                m.macro_recall,
                m.macro_f,
                m.micro_f
            )?;
        }
    }
    Ok(())
}

pub fn degradation_csv<W: Write>(reports: &[ExperimentReport], mut w: W) -> Result<()> {
    writeln!(w, "encoding,classifier,best_variant,best_macro_f,dropout_macro_f,delta,relative")?;
    for d in degradations(reports) {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            d.encoding.name().to_uppercase(),
            d.classifier,
            d.best_variant,
            d.best_macro_f,
            d.dropout_macro_f,
            d.delta,
            d.relative
        )?;
    }
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f4e79", "#2e75b6", "#9dc3e6", "#5b9bd5", "#843c0c", "#c55a11", "#f4b183", "#ed7d31"];

/// Grouped bars of mean macro-F: one group per encoding, one bar per
/// (variant, classifier) cell inside it.
pub fn reports_svg<W: Write>(reports: &[ExperimentReport], mut w: W) -> Result<()> {
    let mut encodings: Vec<Scope> = Vec::new();
    let mut series: Vec<(Variant, Classifier)> = Vec::new();
    for r in reports {
        if !encodings.contains(&r.encoding) {
            encodings.push(r.encoding);
        }
        if !series.contains(&(r.classifier_key())) {
            series.push(r.classifier_key());
        }
    }
    series.sort_by_key(|&(v, c)| (c, v));
    let (bar, gap, left, top, plot_h) = (18.0, 30.0, 60.0, 40.0, 300.0);
    let group_w = bar * series.len() as f64;
    let plot_w = encodings.len() as f64 * (group_w + gap) + gap;
    let legend_w = 170.0;
    let (width, height) = (left + plot_w + legend_w, top + plot_h + 60.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle">Mean macro F-score per experiment</text>"#, left + plot_w / 2.0);
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(s, r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##, left + plot_w);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, left - 6.0, y + 4.0);
    }
    for (g, enc) in encodings.iter().enumerate() {
        let x0 = left + gap + g as f64 * (group_w + gap);
        let _ = writeln!(s, r#"<g class="encoding" data-encoding="{}">"#, enc.name().to_uppercase());
        for (b, key) in series.iter().enumerate() {
            let Some(r) = reports.iter().find(|r| r.encoding == *enc && r.classifier_key() == *key) else { continue };
            let f = r.mean_macro_f().clamp(0.0, 1.0);
            let h = plot_h * f;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{} {} {}: {f:.4}</title></rect>"#,
                x0 + b as f64 * bar,
                top + plot_h - h,
                bar - 2.0,
                PALETTE[b % PALETTE.len()],
                enc.name().to_uppercase(),
                key.0,
                key.1
            );
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + group_w / 2.0,
            top + plot_h + 20.0,
            enc.name().to_uppercase()
        );
    }
    let _ = writeln!(s, r#"<line x1="{left:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#, top + plot_h, left + plot_w, top + plot_h);
    for (b, (v, c)) in series.iter().enumerate() {
        let (lx, ly) = (left + plot_w + 15.0, top + 14.0 * b as f64);
        let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{ly:.1}" width="10" height="10" fill="{}"/>"#, PALETTE[b % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{c} {v}</text>"#, lx + 14.0, ly + 9.0);
    }
    s.push_str("</svg>\n");
    w.write_all(s.as_bytes())?;
    Ok(())
}

impl ExperimentReport {
    fn classifier_key(&self) -> (Variant, Classifier) {
        (self.variant, self.classifier)
    }
}

/// Writes `report.csv`, `report.svg`, `degradation.csv` and
/// `reports.json` into `dir`; returns their paths.
pub fn write_outputs(dir: &Path, reports: &[ExperimentReport]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> =
        ["report.csv", "report.svg", "degradation.csv", "reports.json"].iter().map(|n| dir.join(n)).collect();
    let mut buf = Vec::new();
    reports_csv(reports, &mut buf)?;
    fs::write(&paths[0], &buf)?;
    buf.clear();
    reports_svg(reports, &mut buf)?;
    fs::write(&paths[1], &buf)?;
    buf.clear();
    degradation_csv(reports, &mut buf)?;
    fs::write(&paths[2], &buf)?;
    let mut json = serde_json::to_string_pretty(reports)?;
    json.push('\n');
    fs::write(&paths[3], json)?;
    Ok(paths)
}
