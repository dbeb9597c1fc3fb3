use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSpec {
    pub name: String,
    pub x: String,
    pub y: String,
    /// Column holding a standard deviation drawn as a band around `y`.
    pub std: Option<String>,
}

impl SeriesSpec {
    pub fn new(name: &str, x: &str, y: &str) -> Self {
        SeriesSpec {
            name: name.into(),
            x: x.into(),
            y: y.into(),
            std: None,
        }
    }

    pub fn with_std(mut self, col: &str) -> Self {
        self.std = Some(col.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<SeriesSpec>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn parse(csv_text: &str) -> Result<Table> {
        let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(|f| f.trim().parse::<f64>().ok()).collect());
        }
        Ok(Table { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Plot(format!("missing column `{name}`")))
    }
}

type Points = Vec<(f64, f64, Option<f64>)>;

/// Line chart with one polyline per series and optional ±std bands.
pub fn render_svg_plot(spec: &PlotSpec, csv_text: &str) -> Result<String> {
    let table = Table::parse(csv_text)?;
    if table.rows.is_empty() {
        return Err(Error::Plot("no data rows".into()));
    }
    if spec.series.is_empty() {
        return Err(Error::Plot("no series requested".into()));
    }
    let mut series: Vec<Points> = Vec::new();
    for s in &spec.series {
        let (xi, yi) = (table.column(&s.x)?, table.column(&s.y)?);
        let si = s.std.as_deref().map(|c| table.column(c)).transpose()?;
        series.push(
            table
                .rows
                .iter()
                .filter_map(|r| {
                    let (x, y) = (r.get(xi).copied().flatten()?, r.get(yi).copied().flatten()?);
                    (x.is_finite() && y.is_finite()).then(|| (x, y, si.and_then(|i| r.get(i).copied().flatten())))
                })
                .collect(),
        );
    }
    let all = series.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, sd) in all {
        let sd = sd.unwrap_or(0.0);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y - sd);
        y1 = y1.max(y + sd);
    }
    if !x0.is_finite() {
        return Err(Error::Plot("no finite points to draw".into()));
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&spec.title));
    let (bx, by) = (H - BOTTOM, W - RIGHT);
    let _ = writeln!(svg, r#"<line class="axis" x1="{LEFT}" y1="{bx}" x2="{by}" y2="{bx}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bx}" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(xv), bx + 16.0, tick(xv));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(svg, r#"<text class="x-label" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (LEFT + by) / 2.0, H - 12.0, escape(&spec.x_label));
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (TOP + bx) / 2.0,
        (TOP + bx) / 2.0,
        escape(&spec.y_label)
    );
    for (k, (s, pts)) in spec.series.iter().zip(&series).enumerate() {
        let color = COLORS[k % COLORS.len()];
        if s.std.is_some() && !pts.is_empty() {
            let upper = pts.iter().map(|&(x, y, sd)| format!("{:.2},{:.2}", px(x), py(y + sd.unwrap_or(0.0))));
            let lower = pts.iter().rev().map(|&(x, y, sd)| format!("{:.2},{:.2}", px(x), py(y - sd.unwrap_or(0.0))));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(svg, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.join(" "));
        }
        let line: Vec<String> = pts.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, by + 10.0, by + 30.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, by + 35.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
