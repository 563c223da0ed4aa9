//! Accuracy-per-round line chart rendered as self-contained SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Global test accuracy per round for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(round, accuracy)` in round order.
    pub points: Vec<(usize, f64)>,
}

/// Parse a telemetry CSV into one point per round.
pub fn parse_telemetry(name: &str, text: &str) -> Result<Series> {
    let malformed = |detail: String| Error::Malformed {
        what: "telemetry",
        detail: format!("{name}: {detail}"),
    };
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |c: &str| {
        headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| malformed(format!("missing column `{c}`")))
    };
    let (round_col, acc_col) = (column("round")?, column("global_accuracy")?);
    let mut points: Vec<(usize, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |c: usize| record.get(c).ok_or_else(|| malformed(format!("line {line}: too few fields")));
        let round: usize = field(round_col)?
            .parse()
            .map_err(|_| malformed(format!("line {line}: bad round")))?;
        let acc: f64 = field(acc_col)?
            .parse()
            .map_err(|_| malformed(format!("line {line}: bad accuracy")))?;
        if !(0.0..=1.0).contains(&acc) {
            return Err(malformed(format!("line {line}: accuracy {acc} outside [0, 1]")));
        }
        match points.last() {
            Some(&(r, _)) if r == round => {}
            Some(&(r, _)) if r > round => return Err(malformed(format!("line {line}: rounds out of order"))),
            _ => points.push((round, acc)),
        }
    }
    if points.is_empty() {
        return Err(malformed("no rows".into()));
    }
    Ok(Series {
        name: name.to_string(),
        points,
    })
}

/// Series name from a telemetry path: the file stem without a `telemetry_`
/// prefix.
pub fn series_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("telemetry_").map(str::to_string).unwrap_or(stem)
}

pub fn read_telemetry(path: impl AsRef<Path>) -> Result<Series> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    parse_telemetry(&series_name(path), &text)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render the chart. The y axis always spans `[0, 1]`; the x axis spans the
/// rounds present.
pub fn render_svg(series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::InvalidArgument("plot needs at least one non-empty series".into()));
    }
    let max_round = series.iter().flat_map(|s| &s.points).map(|p| p.0).max().unwrap_or(1).max(1);
    let min_round = series.iter().flat_map(|s| &s.points).map(|p| p.0).min().unwrap_or(1).min(max_round);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let span = (max_round - min_round).max(1) as f64;
    let x = |r: usize| LEFT + plot_w * (r - min_round) as f64 / span;
    let y = |a: f64| TOP + plot_h * (1.0 - a);

    let mut svg = String::new();
    // Writing to a String cannot fail.
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for i in 0..=10 {
        let a = i as f64 / 10.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#e0e0e0"/><text x="{2:.2}" y="{3:.2}" text-anchor="end">{a:.1}</text>"##,
            y(a),
            LEFT + plot_w,
            LEFT - 6.0,
            y(a) + 4.0
        );
    }
    let step = ((max_round - min_round) / 10).max(1);
    for r in (min_round..=max_round).step_by(step) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{r}</text>"#,
            x(r),
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">global test accuracy</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(r, a)| format!("{:.2},{:.2}", x(r), y(a))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Read telemetry files and write the chart to `out`.
pub fn emit_plot<P: AsRef<Path>>(telemetry: &[P], out: impl AsRef<Path>) -> Result<()> {
    if telemetry.is_empty() {
        return Err(Error::InvalidArgument("plot needs at least one telemetry file".into()));
    }
    let series = telemetry.iter().map(read_telemetry).collect::<Result<Vec<_>>>()?;
    let out = out.as_ref();
    std::fs::write(out, render_svg(&series)?).map_err(|e| Error::io(out, e))
}
