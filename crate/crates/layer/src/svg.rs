//! Static SVG figures: the saliency annulus and the chorded interaction annulus.

use std::f64::consts::PI;
use std::fmt::Write;

use layer_core::saliency::{layer_pairs, InteractionReport, SaliencyReport};
use layer_core::Layer;

const SIZE: f64 = 440.0;
const C: f64 = SIZE / 2.0;
const INNER: f64 = 90.0;
const BAND: f64 = 100.0;
const MIN_BAND: f64 = 2.0;
const GAP: f64 = 0.04;
const COLORS: [&str; 6] = ["#d95f02", "#e6ab02", "#7570b3", "#66a61e", "#e7298a", "#1b9e77"];

fn polar(r: f64, a: f64) -> (f64, f64) {
    (C + r * a.sin(), C - r * a.cos())
}

fn span(i: usize) -> (f64, f64) {
    let w = 2.0 * PI / 6.0;
    (i as f64 * w + GAP, (i + 1) as f64 * w - GAP)
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n<title>{title}</title>\n"
    )
}

fn sector(r0: f64, r1: f64, a0: f64, a1: f64) -> String {
    let (x0, y0) = polar(r1, a0);
    let (x1, y1) = polar(r1, a1);
    let (x2, y2) = polar(r0, a1);
    let (x3, y3) = polar(r0, a0);
    format!("M{x0:.3},{y0:.3} A{r1:.3},{r1:.3} 0 0 1 {x1:.3},{y1:.3} L{x2:.3},{y2:.3} A{r0:.3},{r0:.3} 0 0 0 {x3:.3},{y3:.3} Z")
}

fn label(out: &mut String, i: usize, r: f64) {
    let (a0, a1) = span(i);
    let (x, y) = polar(r, (a0 + a1) / 2.0);
    let _ = writeln!(out, "<text x=\"{x:.3}\" y=\"{y:.3}\" font-size=\"12\" text-anchor=\"middle\" dominant-baseline=\"middle\">{}</text>", Layer::ALL[i].name());
}

/// Six segments; band thickness is mean SS, opacity is volume-adjusted SS,
/// and a radial bar with end ticks marks the SS confidence interval.
pub fn annulus(report: &SaliencyReport) -> String {
    let max_ss = report.layers.iter().map(|l| l.ss.ci_high.max(l.ss.mean)).fold(0.0, f64::max);
    let max_va = report.layers.iter().filter_map(|l| l.volume_adjusted.as_ref().map(|v| v.ss.mean)).fold(0.0, f64::max);
    let band = |v: f64| if max_ss > 0.0 { MIN_BAND + (BAND - MIN_BAND) * v / max_ss } else { MIN_BAND };
    let mut out = header("Layer saliency annulus");
    let _ = writeln!(out, "<circle cx=\"{C}\" cy=\"{C}\" r=\"{INNER}\" fill=\"none\" stroke=\"#999\" stroke-width=\"0.5\"/>");
    for (i, l) in report.layers.iter().enumerate() {
        let (a0, a1) = span(i);
        let opacity = match (&l.volume_adjusted, max_va > 0.0) {
            (Some(v), true) => 0.15 + 0.85 * v.ss.mean / max_va,
            _ => 0.15,
        };
        let _ = writeln!(
            out,
            "<path class=\"segment\" data-layer=\"{}\" data-ss=\"{}\" d=\"{}\" fill=\"{}\" fill-opacity=\"{opacity:.3}\" stroke=\"#333\" stroke-width=\"0.5\"/>",
            l.layer.name(),
            l.ss.mean,
            sector(INNER, INNER + band(l.ss.mean), a0, a1),
            COLORS[i]
        );
        let mid = (a0 + a1) / 2.0;
        let (lo, hi) = (INNER + band(l.ss.ci_low), INNER + band(l.ss.ci_high));
        let (x0, y0) = polar(lo, mid);
        let (x1, y1) = polar(hi, mid);
        let _ = writeln!(out, "<line class=\"ci\" x1=\"{x0:.3}\" y1=\"{y0:.3}\" x2=\"{x1:.3}\" y2=\"{y1:.3}\" stroke=\"#000\" stroke-width=\"1\"/>");
        for r in [lo, hi] {
            let (xa, ya) = polar(r, mid - 0.03);
            let (xb, yb) = polar(r, mid + 0.03);
            let _ = writeln!(out, "<line class=\"ci-tick\" x1=\"{xa:.3}\" y1=\"{ya:.3}\" x2=\"{xb:.3}\" y2=\"{yb:.3}\" stroke=\"#000\" stroke-width=\"1\"/>");
        }
        label(&mut out, i, INNER - 14.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Which interaction matrix the chords encode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChordValue {
    Correlation,
    Ois,
}

/// Fixed ring with one chord per layer pair; width is |value|, colour class is the sign.
pub fn chords(report: &InteractionReport, value: ChordValue) -> String {
    let m = match value {
        ChordValue::Correlation => &report.rho,
        ChordValue::Ois => &report.ois,
    };
    let max = layer_pairs().filter_map(|(i, j)| m[i.index()][j.index()]).map(f64::abs).fold(0.0, f64::max);
    let title = match value {
        ChordValue::Correlation => "Layer saliency correlation",
        ChordValue::Ois => "Layer occlusion interaction",
    };
    let mut out = header(title);
    for i in 0..6 {
        let (a0, a1) = span(i);
        let _ = writeln!(out, "<path class=\"ring\" d=\"{}\" fill=\"{}\"/>", sector(INNER + 70.0, INNER + 82.0, a0, a1), COLORS[i]);
        label(&mut out, i, INNER + 96.0);
    }
    for (a, b) in layer_pairs() {
        let Some(v) = m[a.index()][b.index()] else { continue };
        let width = if max > 0.0 { 0.5 + 11.5 * v.abs() / max } else { 0.5 };
        let mid = |i: usize| {
            let (a0, a1) = span(i);
            polar(INNER + 68.0, (a0 + a1) / 2.0)
        };
        let (x0, y0) = mid(a.index());
        let (x1, y1) = mid(b.index());
        let (class, colour) = if v >= 0.0 { ("positive", "#b2182b") } else { ("negative", "#2166ac") };
        let _ = writeln!(
            out,
            "<path class=\"chord {class}\" data-pair=\"{}|{}\" data-value=\"{v}\" d=\"M{x0:.3},{y0:.3} Q{C},{C} {x1:.3},{y1:.3}\" fill=\"none\" stroke=\"{colour}\" stroke-opacity=\"0.7\" stroke-width=\"{width:.3}\"/>",
            a.name(),
            b.name()
        );
    }
    out.push_str("</svg>\n");
    out
}
