//! Line charts of trace columns as standalone SVG.

use std::fmt::Write as _;
use std::io::Read;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("trace has no column {0:?}")]
    MissingColumn(String),
    #[error("malformed value {value:?} in column {column:?}")]
    BadValue { column: String, value: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads two named columns of a headed CSV trace.
pub fn read_series<R: Read>(reader: R, x_column: &str, y_column: &str, label: &str) -> Result<Series, PlotError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PlotError::MissingColumn(name.to_string()))
    };
    let (xi, yi) = (find(x_column)?, find(y_column)?);
    let parse = |rec: &csv::StringRecord, i: usize, column: &str| {
        let raw = rec.get(i).unwrap_or("");
        raw.parse::<f64>().map_err(|_| PlotError::BadValue {
            column: column.to_string(),
            value: raw.to_string(),
        })
    };
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        points.push((parse(&rec, xi, x_column)?, parse(&rec, yi, y_column)?));
    }
    Ok(Series {
        label: label.to_string(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub width: f64,
    pub height: f64,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot `log10(y)`; nonpositive values are dropped.
    pub log_y: bool,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 400.0,
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            log_y: false,
        }
    }
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 45.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Affine map from data coordinates to pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub log_y: bool,
}

impl Frame {
    pub fn new(series: &[Series], spec: &PlotSpec) -> Self {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in series {
            for &(x, y) in &s.points {
                if let Some(y) = transform(y, spec.log_y) {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        let (x_min, x_max) = padded_range(&xs);
        let (y_min, y_max) = padded_range(&ys);
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
            left: MARGIN_LEFT,
            top: MARGIN_TOP,
            width: spec.width - MARGIN_LEFT - MARGIN_RIGHT,
            height: spec.height - MARGIN_TOP - MARGIN_BOTTOM,
            log_y: spec.log_y,
        }
    }

    /// Pixel position of a data point, or `None` if it cannot be shown.
    pub fn map(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let y = transform(y, self.log_y)?;
        let px = self.left + (x - self.x_min) / (self.x_max - self.x_min) * self.width;
        let py = self.top + self.height - (y - self.y_min) / (self.y_max - self.y_min) * self.height;
        Some((px, py))
    }
}

fn transform(y: f64, log_y: bool) -> Option<f64> {
    if !y.is_finite() {
        None
    } else if log_y {
        (y > 0.0).then(|| y.log10())
    } else {
        Some(y)
    }
}

fn padded_range(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders every series as a polyline over shared axes, legend in input order.
pub fn emit_plot(series: &[Series], spec: &PlotSpec) -> String {
    let frame = Frame::new(series, spec);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = spec.width,
        h = spec.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0) = (frame.left, frame.top + frame.height);
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{x0:.3}" y1="{y0:.3}" x2="{:.3}" y2="{y0:.3}" stroke="black"/>"#,
        x0 + frame.width
    );
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{x0:.3}" y1="{y0:.3}" x2="{x0:.3}" y2="{:.3}" stroke="black"/>"#,
        frame.top
    );
    let tick = |v: f64| format!("{v:.3e}");
    let y_tick = |v: f64| if frame.log_y { format!("1e{v:.2}") } else { tick(v) };
    let _ = writeln!(
        svg,
        r#"<text x="{x0:.3}" y="{:.3}" font-size="11">{}</text>"#,
        y0 + 15.0,
        tick(frame.x_min)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{}</text>"#,
        x0 + frame.width,
        y0 + 15.0,
        tick(frame.x_max)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{y0:.3}" font-size="11" text-anchor="end">{}</text>"#,
        x0 - 4.0,
        y_tick(frame.y_min)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{}</text>"#,
        x0 - 4.0,
        frame.top + 10.0,
        y_tick(frame.y_max)
    );
    if !spec.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="18" font-size="14" text-anchor="middle">{}</text>"#,
            spec.width / 2.0,
            escape(&spec.title)
        );
    }
    if !spec.x_label.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">{}</text>"#,
            x0 + frame.width / 2.0,
            spec.height - 8.0,
            escape(&spec.x_label)
        );
    }
    if !spec.y_label.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{:.3}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.3})">{}</text>"#,
            frame.top + frame.height / 2.0,
            frame.top + frame.height / 2.0,
            escape(&spec.y_label)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter_map(|&(x, y)| frame.map(x, y))
            .map(|(px, py)| format!("{px:.3},{py:.3}"))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = frame.top + 14.0 * (k as f64 + 1.0);
        let lx = x0 + frame.width - 150.0;
        let _ = writeln!(
            svg,
            r#"<text class="legend" x="{:.3}" y="{ly:.3}" font-size="11" fill="{color}">{}</text>"#,
            lx,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
