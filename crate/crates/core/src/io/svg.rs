//! Self-contained SVG rendering of p-value plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diagnostics::{DiagnosticReport, PValuePlot};
use crate::error::{Error, Result};
use crate::numerics::FitLine;
use crate::study::Direction;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

struct Frame {
    n: usize,
}

impl Frame {
    fn x(&self, rank: f64) -> f64 {
        LEFT + rank / (self.n as f64 + 1.0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, p: f64) -> f64 {
        HEIGHT - BOTTOM - p * (HEIGHT - TOP - BOTTOM)
    }

    // Fits are in normalized rank r/(n+1); the axis shows raw rank.
    fn fit_y(&self, fit: &FitLine<f64>, rank: f64) -> f64 {
        self.y(fit.predict(rank / (self.n as f64 + 1.0)))
    }

    fn fit_segment(&self, out: &mut String, fit: &FitLine<f64>, from: usize, to: usize, class: &str, dash: Option<&str>) {
        let (a, b) = (from as f64, to as f64);
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            out,
            r#"  <line class="{class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"{dash} clip-path="url(#plot-area)"/>"#,
            self.x(a),
            self.fit_y(fit, a),
            self.x(b),
            self.fit_y(fit, b),
            if class == "fit-single" { "#1f4e79" } else { "#c0504d" },
        );
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders the plot: sorted p against raw rank, the single fit (solid), the
/// two-segment fit (dashed) with its breakpoint, a dotted line at p = 0.05
/// and a green down triangle on the smallest p when it is a decrease.
pub fn render_pvalue_plot_svg_string(
    plot: &PValuePlot<f64>,
    report: &DiagnosticReport<f64>,
    title: &str,
) -> Result<String> {
    let n = plot.n;
    if n == 0 {
        return Err(Error::Empty("render_pvalue_plot_svg"));
    }
    let f = Frame { n };
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, f.y(0.0), f.y(1.0));
    let _ = writeln!(
        s,
        r#"  <defs><clipPath id="plot-area"><rect x="{x0}" y="{y1}" width="{}" height="{}"/></clipPath></defs>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(s, r#"  <rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"  <text class="title" x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // axes and ticks
    let _ = writeln!(s, r#"  <line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"  <line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=5 {
        let p = i as f64 / 5.0;
        let y = f.y(p);
        let _ = writeln!(
            s,
            r#"  <line class="tick" x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{p:.1}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let step = (n as f64 / 10.0).ceil().max(1.0) as usize;
    for rank in (1..=n).filter(|r| r % step == 0 || *r == 1) {
        let x = f.x(rank as f64);
        let _ = writeln!(
            s,
            r#"  <line class="tick" x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{rank}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"  <text x="{}" y="{}" text-anchor="middle">Rank</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">P-value</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    let y05 = f.y(0.05);
    let _ = writeln!(
        s,
        r#"  <line class="reference" x1="{x0}" y1="{y05:.2}" x2="{x1}" y2="{y05:.2}" stroke="gray" stroke-dasharray="2,3"/>"#
    );

    if let Some(fit) = &report.single_fit {
        f.fit_segment(&mut s, fit, 1, n, "fit-single", None);
    }
    if let Some(two) = &report.two_segment {
        let b = two.breakpoint_rank;
        f.fit_segment(&mut s, &two.left_fit, 1, b, "fit-segment", Some("6,4"));
        f.fit_segment(&mut s, &two.right_fit, b + 1, n, "fit-segment", Some("6,4"));
        let xb = f.x(b as f64 + 0.5);
        let _ = writeln!(
            s,
            r##"  <line class="breakpoint" x1="{xb:.2}" y1="{y0}" x2="{xb:.2}" y2="{y1}" stroke="#c0504d" stroke-opacity="0.4"/>"##
        );
    }

    for pt in &plot.points {
        let _ = writeln!(
            s,
            r#"  <circle class="point" cx="{:.2}" cy="{:.2}" r="3.5" fill="none" stroke="black"><title>{} p={}</title></circle>"#,
            f.x(pt.rank as f64),
            f.y(pt.p_sorted),
            escape(&pt.study_id),
            pt.p_sorted
        );
    }

    if report.min_p_direction == Direction::Decrease {
        let pt = &plot.points[0];
        let (cx, cy) = (f.x(pt.rank as f64), f.y(pt.p_sorted));
        let _ = writeln!(
            s,
            r#"  <polygon class="min-p-decrease" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="green"><title>{} (decrease)</title></polygon>"#,
            cx - 6.0,
            cy - 5.0,
            cx + 6.0,
            cy - 5.0,
            cx,
            cy + 6.0,
            escape(&pt.study_id)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_pvalue_plot_svg(
    plot: &PValuePlot<f64>,
    report: &DiagnosticReport<f64>,
    title: &str,
    path: &Path,
) -> Result<()> {
    let svg = render_pvalue_plot_svg_string(plot, report, title)?;
    fs::write(path, svg).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
