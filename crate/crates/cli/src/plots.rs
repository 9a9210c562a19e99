//! Correlation and Bland-Altman panels as standalone SVG files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gaitradar::params::Parameter;
use gaitradar::stats;

use crate::report::CycleError;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPlot {
    pub parameter: Parameter,
    /// (reference, estimate)
    pub points: Vec<(f64, f64)>,
    /// Shared axis range; the identity line runs corner to corner.
    pub range: (f64, f64),
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlandAltmanPlot {
    pub parameter: Parameter,
    /// (pair mean, reference - estimate)
    pub points: Vec<(f64, f64)>,
    pub mean_diff: f64,
    pub loa: (f64, f64),
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { 0.05 * lo.abs().max(1e-3) };
    (lo - pad, hi + pad)
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn correlation_plot(parameter: Parameter, pairs: &[(f64, f64)]) -> Option<CorrelationPlot> {
    if pairs.is_empty() {
        return None;
    }
    let (lo, hi) = extent(pairs.iter().flat_map(|&(a, b)| [a, b]));
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Some(CorrelationPlot {
        parameter,
        points: pairs.to_vec(),
        range: padded(lo, hi),
        r: stats::pearson(&x, &y).ok().map(|c| c.0),
    })
}

pub fn bland_altman_plot(parameter: Parameter, pairs: &[(f64, f64)]) -> Option<BlandAltmanPlot> {
    let points = stats::bland_altman_points(pairs);
    let (mean_diff, loa) = match stats::bland_altman(pairs) {
        Ok(s) => (s.mean_diff, (s.loa_lower, s.loa_upper)),
        // A single pair has no spread.
        Err(_) => {
            let d = points.first()?.1;
            (d, (d, d))
        }
    };
    Some(BlandAltmanPlot {
        parameter,
        points,
        mean_diff,
        loa,
    })
}

/// Maps data coordinates into the plotting area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        MARGIN + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 1.5 * MARGIN)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 1.5 * MARGIN)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    if !(raw > 0.0) {
        return vec![lo];
    }
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn open(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{title}</text>"#, WIDTH / 2.0);
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (f.px(f.x.0), f.px(f.x.1));
    let (y0, y1) = (f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(svg, r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    for t in ticks(f.x.0, f.x.1) {
        let x = f.px(t);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 4.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y0 + 16.0, label(t));
    }
    for t in ticks(f.y.0, f.y.1) {
        let y = f.py(t);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, label(t));
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#, (x0 + x1) / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{ylabel}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

fn points(svg: &mut String, f: &Frame, pts: &[(f64, f64)]) {
    let _ = writeln!(svg, r#"<g class="points" fill="steelblue" fill-opacity="0.7">"#);
    for &(x, y) in pts {
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, f.px(x), f.py(y));
    }
    let _ = writeln!(svg, "</g>");
}

fn hline(svg: &mut String, f: &Frame, y: f64, class: &str, dashed: bool, text: &str) {
    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
    let py = f.py(y);
    let _ = writeln!(
        svg,
        r#"<line class="{class}" x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="firebrick"{dash}/>"#,
        f.px(f.x.0),
        f.px(f.x.1)
    );
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="firebrick">{text}</text>"#, f.px(f.x.1) - 4.0, py - 4.0);
}

impl CorrelationPlot {
    pub fn to_svg(&self) -> String {
        let f = Frame {
            x: self.range,
            y: self.range,
        };
        let unit = self.parameter.unit();
        let mut svg = String::new();
        let title = match self.r {
            Some(r) => format!("{} (r = {r:.3}, n = {})", self.parameter, self.points.len()),
            None => format!("{} (n = {})", self.parameter, self.points.len()),
        };
        open(&mut svg, &title);
        axes(&mut svg, &f, &format!("reference ({unit})"), &format!("radar ({unit})"));
        let (lo, hi) = self.range;
        let _ = writeln!(
            svg,
            r#"<line class="identity" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
            f.px(lo),
            f.py(lo),
            f.px(hi),
            f.py(hi)
        );
        points(&mut svg, &f, &self.points);
        svg.push_str("</svg>\n");
        svg
    }
}

impl BlandAltmanPlot {
    pub fn to_svg(&self) -> String {
        let (xlo, xhi) = extent(self.points.iter().map(|p| p.0));
        let (ylo, yhi) = extent(self.points.iter().map(|p| p.1).chain([self.loa.0, self.loa.1, 0.0]));
        let f = Frame {
            x: padded(xlo, xhi),
            y: padded(ylo, yhi),
        };
        let unit = self.parameter.unit();
        let mut svg = String::new();
        open(&mut svg, &format!("{} Bland-Altman (n = {})", self.parameter, self.points.len()));
        axes(
            &mut svg,
            &f,
            &format!("mean of reference and radar ({unit})"),
            &format!("reference - radar ({unit})"),
        );
        hline(&mut svg, &f, self.mean_diff, "mean", false, &format!("mean {}", label(self.mean_diff)));
        hline(&mut svg, &f, self.loa.1, "loa-upper", true, &format!("+1.96 SD {}", label(self.loa.1)));
        hline(&mut svg, &f, self.loa.0, "loa-lower", true, &format!("-1.96 SD {}", label(self.loa.0)));
        points(&mut svg, &f, &self.points);
        svg.push_str("</svg>\n");
        svg
    }
}

/// Writes both panels for every parameter with paired cycles. Returns the
/// files written and a notice for each parameter skipped.
pub fn emit_plots(dir: &Path, rows: &[CycleError]) -> std::io::Result<(Vec<PathBuf>, Vec<String>)> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut notices = Vec::new();
    for p in Parameter::ALL {
        let pairs: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.parameter == p.name())
            .map(|r| (r.reference, r.estimate))
            .collect();
        let (Some(corr), Some(ba)) = (correlation_plot(p, &pairs), bland_altman_plot(p, &pairs)) else {
            notices.push(format!("skipping plots for {p}: no paired cycles"));
            continue;
        };
        for (name, svg) in [
            (format!("{p}_correlation.svg"), corr.to_svg()),
            (format!("{p}_bland_altman.svg"), ba.to_svg()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok((written, notices))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(parameter: Parameter, pairs: &[(f64, f64)]) -> Vec<CycleError> {
        pairs
            .iter()
            .map(|&(reference, estimate)| {
                let (abs_error, rel_error) = stats::error_metrics(reference, estimate);
                CycleError {
                    test: "t".into(),
                    configuration: "C5".into(),
                    parameter: parameter.name().into(),
                    foot: "L".into(),
                    cycle_start_s: 0.0,
                    reference,
                    estimate,
                    abs_error,
                    rel_error,
                }
            })
            .collect()
    }

    #[test]
    fn perfect_agreement_lies_on_the_identity_line() {
        let pairs: Vec<(f64, f64)> = (0..8).map(|i| (1.0 + 0.05 * i as f64, 1.0 + 0.05 * i as f64)).collect();
        let plot = correlation_plot(Parameter::StrideTime, &pairs).unwrap();
        assert!((plot.r.unwrap() - 1.0).abs() < 1e-12);
        let f = Frame {
            x: plot.range,
            y: plot.range,
        };
        // On screen, y + x is constant along the identity for a square range.
        let (lo, hi) = plot.range;
        let slope = (f.py(hi) - f.py(lo)) / (f.px(hi) - f.px(lo));
        for &(a, b) in &plot.points {
            let on_line = f.py(lo) + slope * (f.px(a) - f.px(lo));
            assert!((f.py(b) - on_line).abs() < 1e-9);
        }
        let svg = plot.to_svg();
        assert!(svg.contains(r#"class="identity""#) && svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches("<circle").count(), 8);
    }

    #[test]
    fn constant_bias_gives_flat_limits() {
        let pairs: Vec<(f64, f64)> = [0.9, 1.0, 1.2, 1.3].iter().map(|&v| (v, v - 0.05)).collect();
        let plot = bland_altman_plot(Parameter::StrideVelocity, &pairs).unwrap();
        assert!((plot.mean_diff - 0.05).abs() < 1e-12);
        assert!((plot.loa.1 - plot.loa.0).abs() < 1e-9);
        let svg = plot.to_svg();
        assert!(svg.contains(r#"class="mean""#));
        assert_eq!(svg.matches(r#"stroke-dasharray"#).count(), 2);
    }

    #[test]
    fn full_report_gives_two_files_per_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let mut all = Vec::new();
        for p in Parameter::ALL {
            all.extend(rows(p, &[(1.0, 1.1), (2.0, 1.9), (1.5, 1.5)]));
        }
        let (written, notices) = emit_plots(dir.path(), &all).unwrap();
        assert_eq!(written.len(), 20);
        assert!(notices.is_empty());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 20);
    }

    #[test]
    fn empty_parameters_are_skipped_with_a_notice() {
        let dir = tempfile::tempdir().unwrap();
        let (written, notices) = emit_plots(dir.path(), &rows(Parameter::StepTime, &[(0.5, 0.52)])).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(notices.len(), 9);
        assert!(notices.iter().any(|n| n.contains("foot_max_velocity")));
    }

    #[test]
    fn tick_steps_are_round() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.len(), 6);
        assert!(t.iter().enumerate().all(|(i, v)| (v - 0.2 * i as f64).abs() < 1e-12));
        assert_eq!(ticks(3.0, 3.0), vec![3.0]);
        assert_eq!(label(0.25), "0.25");
        assert_eq!(label(-0.0001), "0");
    }
}
