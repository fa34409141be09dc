//! Static SVG 1.1 charts of trace ensembles.
//!
//! Every panel draws one `<polyline>` per permutation and layer, including
//! empty ones for traces that failed, so element counts line up with the
//! schedule. Axes auto-scale; CUSUM panels always fit the full boundary.

use crate::cusum::{Boundary, CusumPath};
use crate::engine::TraceEnsemble;
use std::fmt::Write as _;

pub const FULL_COLOR: &str = "red";
pub const REDUCED_COLOR: &str = "black";
pub const SINGLE_COLOR: &str = "#1f4e99";

const WIDTH: f64 = 360.0;
const HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 62.0;
const MARGIN_RIGHT: f64 = 14.0;
const MARGIN_TOP: f64 = 26.0;
const MARGIN_BOTTOM: f64 = 36.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub color: String,
    /// One entry per permutation, possibly empty.
    pub lines: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// File stem, e.g. `beta_x` or `cusum`.
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub layers: Vec<Layer>,
    pub boundary: Option<Boundary>,
}

fn finite_points(points: impl Iterator<Item = (f64, Option<f64>)>) -> Vec<(f64, f64)> {
    points
        .filter_map(|(x, y)| y.filter(|v| v.is_finite()).map(|v| (x, v)))
        .collect()
}

/// Coefficient, variance and R² panels from the exported steps of each trace.
pub fn trace_panels(ens: &TraceEnsemble, labels: &[String], color: &str, layer: &str) -> Vec<Panel> {
    let mk = |name: String, title: String, lines: Vec<Vec<(f64, f64)>>| Panel {
        name,
        title,
        x_label: "subset size".into(),
        layers: vec![Layer {
            name: layer.into(),
            color: color.into(),
            lines,
        }],
        boundary: None,
    };
    let series = |f: &dyn Fn(&crate::engine::TraceStep) -> Option<f64>| -> Vec<Vec<(f64, f64)>> {
        ens.traces
            .iter()
            .map(|t| {
                finite_points(
                    ens.exported_steps(t)
                        .iter()
                        .map(|s| (s.subset_size as f64, f(s))),
                )
            })
            .collect()
    };
    let mut panels: Vec<Panel> = labels
        .iter()
        .enumerate()
        .map(|(j, l)| {
            mk(
                format!("beta_{l}"),
                format!("coefficient {l}"),
                series(&|s| Some(s.beta[j])),
            )
        })
        .collect();
    panels.push(mk("sigma2".into(), "residual variance".into(), series(&|s| s.sigma2)));
    panels.push(mk("r2".into(), "R²".into(), series(&|s| s.r2)));
    panels
}

/// CUSUM panel. `paths` is indexed by permutation; `None` marks a failed trace.
pub fn cusum_panel(
    paths: &[Option<CusumPath>],
    boundary: &Boundary,
    color: &str,
    layer: &str,
) -> Panel {
    Panel {
        name: "cusum".into(),
        title: format!("cusum, alpha = {}", boundary.alpha),
        x_label: "t".into(),
        layers: vec![Layer {
            name: layer.into(),
            color: color.into(),
            lines: paths
                .iter()
                .map(|p| p.as_ref().map(|p| p.knots.clone()).unwrap_or_default())
                .collect(),
        }],
        boundary: Some(*boundary),
    }
}

/// Pairs panels by name and stacks the reduced layers over the full ones.
pub fn overlay(full: &[Panel], reduced: &[Panel]) -> Vec<Panel> {
    full.iter()
        .filter_map(|f| {
            let r = reduced.iter().find(|r| r.name == f.name)?;
            let mut panel = f.clone();
            panel.layers.extend(r.layers.iter().cloned());
            Some(panel)
        })
        .collect()
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

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut r: Option<Range> = None;
        for v in values.filter(|v| v.is_finite()) {
            r = Some(match r {
                None => Range { lo: v, hi: v },
                Some(r) => Range {
                    lo: r.lo.min(v),
                    hi: r.hi.max(v),
                },
            });
        }
        r
    }

    fn padded(self) -> Self {
        let span = self.hi - self.lo;
        let pad = if span > 0.0 {
            0.05 * span
        } else {
            0.5 * self.lo.abs().max(1.0)
        };
        Range {
            lo: self.lo - pad,
            hi: self.hi + pad,
        }
    }

    fn map(self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

fn panel_ranges(panel: &Panel) -> (Range, Range) {
    let points = || panel.layers.iter().flat_map(|l| l.lines.iter().flatten());
    let mut xr = Range::of(points().map(|p| p.0)).unwrap_or(Range { lo: 0.0, hi: 1.0 });
    let mut yr = Range::of(points().map(|p| p.1)).unwrap_or(Range { lo: -1.0, hi: 1.0 });
    if let Some(b) = &panel.boundary {
        xr = Range { lo: 0.0, hi: 1.0 };
        yr.lo = yr.lo.min(b.lower(1.0));
        yr.hi = yr.hi.max(b.upper(1.0));
    }
    (xr, yr.padded())
}

/// Draws `panel` into a `w × h` box at the origin.
fn panel_body(panel: &Panel, w: f64, h: f64) -> String {
    let (xr, yr) = panel_ranges(panel);
    let (x0, x1) = (MARGIN_LEFT, w - MARGIN_RIGHT);
    let (y0, y1) = (h - MARGIN_BOTTOM, MARGIN_TOP);
    let px = |x: f64| xr.map(x, x0, x1);
    let py = |y: f64| yr.map(y, y0, y1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888888" stroke-width="0.8"/>"##,
        num(x0),
        num(y1),
        num(x1 - x0),
        num(y0 - y1)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="16" font-size="12" text-anchor="middle">{}</text>"#,
        num((x0 + x1) / 2.0),
        escape(&panel.title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"#,
        num((x0 + x1) / 2.0),
        num(h - 6.0),
        escape(&panel.x_label)
    );
    for (v, anchor, x, y) in [
        (xr.lo, "start", x0, y0 + 14.0),
        (xr.hi, "end", x1, y0 + 14.0),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="9" text-anchor="{anchor}">{}</text>"#,
            num(x),
            num(y),
            tick_label(v)
        );
    }
    for v in [yr.lo, yr.hi] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="9" text-anchor="end">{}</text>"#,
            num(x0 - 4.0),
            num(py(v) + 3.0),
            tick_label(v)
        );
    }
    if yr.lo < 0.0 && yr.hi > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#cccccc" stroke-width="0.6"/>"##,
            num(x0),
            num(py(0.0)),
            num(x1),
            num(py(0.0))
        );
    }
    if let Some(b) = &panel.boundary {
        for (side, f) in [("upper", 1.0), ("lower", -1.0)] {
            let mut d = String::new();
            for k in 0..=100 {
                let t = k as f64 / 100.0;
                let v = f * b.upper(t);
                let _ = write!(d, "{}{},{} ", if k == 0 { "M" } else { "L" }, num(px(t)), num(py(v)));
            }
            let _ = writeln!(
                s,
                r##"<path class="boundary-{side}" d="{}" fill="none" stroke="#2a9d3a" stroke-width="1.2" stroke-dasharray="4 3"/>"##,
                d.trim_end()
            );
        }
    }
    for layer in &panel.layers {
        let _ = writeln!(
            s,
            r#"<g class="layer" data-layer="{}" stroke="{}" fill="none" stroke-width="0.7" stroke-opacity="0.6">"#,
            escape(&layer.name),
            escape(&layer.color)
        );
        for (perm_id, line) in layer.lines.iter().enumerate() {
            let points: Vec<String> = line
                .iter()
                .map(|&(x, y)| format!("{},{}", num(px(x)), num(py(y))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline data-perm="{perm_id}" points="{}"/>"#,
                points.join(" ")
            );
        }
        s.push_str("</g>\n");
    }
    s
}

fn document(w: f64, h: f64, body: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

pub fn render_panel(panel: &Panel) -> String {
    document(WIDTH, HEIGHT, &panel_body(panel, WIDTH, HEIGHT))
}

/// All panels on one sheet, `cols` per row.
pub fn render_grid(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let mut body = String::new();
    for (i, panel) in panels.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        let _ = writeln!(
            body,
            r#"<g class="panel" data-panel="{}" transform="translate({},{})">"#,
            escape(&panel.name),
            c as f64 * WIDTH,
            r as f64 * HEIGHT
        );
        body.push_str(&panel_body(panel, WIDTH, HEIGHT));
        body.push_str("</g>\n");
    }
    document(cols as f64 * WIDTH, rows as f64 * HEIGHT, &body)
}
