//! SVG histogram of permuted deltas with a fitted normal curve and the
//! observed delta marked.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{argument, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
const MAX_BINS: usize = 200;
const CURVE_POINTS: usize = 121;

/// Binned data ready to draw. Counts sum to the number of deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPlot {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Normal density scaled to counts; `None` when the deltas have no spread.
    pub curve: Option<Vec<(f64, f64)>>,
    pub observed: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl HistogramPlot {
    /// Horizontal position of `x` inside the plotting area, in [0, 1].
    pub fn x_fraction(&self, x: f64) -> f64 {
        (x - self.x_min) / (self.x_max - self.x_min)
    }

    pub fn marker_fraction(&self) -> f64 {
        self.x_fraction(self.observed)
    }
}

/// Type-7 quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Freedman–Diaconis bin count; Sturges when the IQR is zero.
pub fn freedman_diaconis_bins(sorted: &[f64]) -> usize {
    let n = sorted.len();
    let range = sorted[n - 1] - sorted[0];
    if range <= 0.0 {
        return 1;
    }
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let bins = if iqr > 0.0 {
        let h = 2.0 * iqr / (n as f64).cbrt();
        (range / h).ceil() as usize
    } else {
        (n as f64).log2().ceil() as usize + 1
    };
    bins.clamp(1, MAX_BINS)
}

pub fn build_histogram(deltas: &[f64], observed: f64) -> Result<HistogramPlot> {
    if deltas.is_empty() {
        return Err(argument("histogram needs at least one delta"));
    }
    if deltas.iter().any(|d| !d.is_finite()) || !observed.is_finite() {
        return Err(argument("histogram values must be finite"));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (lo, hi) = (sorted[0], sorted[n - 1]);

    let (edges, counts, curve) = if hi > lo {
        let bins = freedman_diaconis_bins(&sorted);
        let w = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &d in &sorted {
            let b = (((d - lo) / w) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let sd = var.sqrt();
        let curve = (sd > 0.0).then(|| {
            let a = mean - 4.0 * sd;
            let b = mean + 4.0 * sd;
            (0..CURVE_POINTS)
                .map(|i| {
                    let x = a + (b - a) * i as f64 / (CURVE_POINTS - 1) as f64;
                    let z = (x - mean) / sd;
                    let dens = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                    (x, dens * n as f64 * w)
                })
                .collect::<Vec<_>>()
        });
        (edges, counts, curve)
    } else {
        let half = if lo == 0.0 { 0.5 } else { 0.05 * lo.abs() };
        (vec![lo - half, lo + half], vec![n], None)
    };

    let mut x_min = edges[0].min(observed);
    let mut x_max = edges[edges.len() - 1].max(observed);
    if let Some(c) = &curve {
        x_min = x_min.min(c[0].0);
        x_max = x_max.max(c[c.len() - 1].0);
    }
    let pad = 0.02 * (x_max - x_min);
    x_min -= pad;
    x_max += pad;
    let top_bar = *counts.iter().max().unwrap() as f64;
    let top_curve = curve
        .as_ref()
        .map_or(0.0, |c| c.iter().fold(0.0f64, |m, p| m.max(p.1)));
    Ok(HistogramPlot {
        edges,
        counts,
        curve,
        observed,
        x_min,
        x_max,
        y_max: 1.05 * top_bar.max(top_curve),
    })
}

pub fn render_svg(plot: &HistogramPlot) -> String {
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + plot.x_fraction(x) * pw;
    let sy = |y: f64| MARGIN_TOP + ph * (1.0 - y / plot.y_max);
    let base = MARGIN_TOP + ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r##"<g class="bars" fill="#9db4d0" stroke="white" stroke-width="0.5">"##);
    for (i, &c) in plot.counts.iter().enumerate() {
        let x0 = sx(plot.edges[i]);
        let x1 = sx(plot.edges[i + 1]);
        let y = sy(c as f64);
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.3}" y="{y:.3}" width="{:.3}" height="{:.3}"/>"#,
            x1 - x0,
            base - y
        );
    }
    s.push_str("</g>\n");
    if let Some(curve) = &plot.curve {
        let pts: Vec<String> = curve
            .iter()
            .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="density" fill="none" stroke="black" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }
    let mx = sx(plot.observed);
    let _ = writeln!(
        s,
        r#"<line class="observed" x1="{mx:.3}" y1="{MARGIN_TOP:.3}" x2="{mx:.3}" y2="{base:.3}" stroke="red" stroke-width="2"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN_LEFT:.3}" y1="{base:.3}" x2="{:.3}" y2="{base:.3}" stroke="black"/>"#,
        MARGIN_LEFT + pw
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN_LEFT:.3}" y="{:.3}" font-size="11">{:.4}</text>"#,
        base + 16.0,
        plot.x_min
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{:.4}</text>"#,
        MARGIN_LEFT + pw,
        base + 16.0,
        plot.x_max
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">permuted MSE difference (observed {:.4})</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 12.0,
        plot.observed
    );
    s.push_str("</svg>\n");
    s
}

pub fn render_histogram(deltas: &[f64], observed: f64, path: &Path) -> Result<()> {
    let plot = build_histogram(deltas, observed)?;
    std::fs::write(path, render_svg(&plot))?;
    Ok(())
}
