//! Minimal self-contained SVG line plots for the CSV artifacts. Purely
//! presentational: one polyline per plot, linear or log-10 y axis, values
//! at or below the configured floor clamped and called out in the legend.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotKind {
    pub name: &'static str,
    pub x_column: &'static str,
    pub y_column: &'static str,
    pub log_y: bool,
}

pub const PLOT_KINDS: &[PlotKind] = &[
    PlotKind { name: "rn", x_column: "delta", y_column: "r_n", log_y: true },
    PlotKind { name: "series", x_column: "k", y_column: "r_k", log_y: true },
    PlotKind { name: "lambda1", x_column: "delta", y_column: "lambda1", log_y: true },
    PlotKind { name: "gaps", x_column: "alpha", y_column: "g_alpha", log_y: true },
    PlotKind { name: "dynamics", x_column: "t", y_column: "n_r", log_y: false },
    PlotKind { name: "singleshot", x_column: "delta", y_column: "pq_prob", log_y: true },
    PlotKind { name: "transition", x_column: "delta", y_column: "r_n", log_y: true },
];

pub fn plot_kind(name: &str) -> Result<PlotKind> {
    PLOT_KINDS
        .iter()
        .copied()
        .find(|k| k.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = PLOT_KINDS.iter().map(|k| k.name).collect();
            Error::Validation(format!(
                "unknown plot kind `{name}`; expected one of {}",
                names.join(", ")
            ))
        })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

/// Render a CSV artifact to an SVG string. The CSV must carry the kind's
/// x and y columns in its header.
pub fn render_svg(csv_text: &str, kind: PlotKind, floor: f64) -> Result<String> {
    let mut lines = csv_text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Validation("empty CSV".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        columns.iter().position(|c| *c == name).ok_or_else(|| {
            Error::Validation(format!(
                "CSV schema mismatch for plot kind `{}`: missing column `{name}` (have: {})",
                kind.name,
                columns.join(", ")
            ))
        })
    };
    let xi = find(kind.x_column)?;
    let yi = find(kind.y_column)?;

    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut clamped = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Validation(format!(
                "CSV row {}: {} fields, header has {}",
                lineno + 2,
                fields.len(),
                columns.len()
            )));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("CSV row {}: `{s}` is not a number", lineno + 2)))
        };
        let x = parse(fields[xi])?;
        let mut y = parse(fields[yi])?;
        if kind.log_y && (!y.is_finite() || y < floor) {
            y = floor;
            clamped += 1;
        }
        points.push((x, y));
    }
    if points.is_empty() {
        return Err(Error::Validation("CSV has no data rows".into()));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let ymap = |y: f64| if kind.log_y { y.log10() } else { y };
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &points {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(ymap(y));
        y_hi = y_hi.max(ymap(y));
    }
    if x_hi - x_lo < 1e-300 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_hi - y_lo < 1e-300 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (ymap(y) - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut coords = String::new();
    for &(x, y) in &points {
        coords.push_str(&format!("{:.2},{:.2} ", px(x), py(y)));
    }
    let coords = coords.trim_end();

    let y_label = if kind.log_y {
        format!("log10({})", kind.y_column)
    } else {
        kind.y_column.to_string()
    };
    let legend = if clamped > 0 {
        format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"11\" fill=\"#b00\">{} value(s) clamped to floor {floor:e}</text>",
            MARGIN_L,
            MARGIN_T - 10.0,
            clamped
        )
    } else {
        String::new()
    };

    Ok(format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">
<rect width="{w:.0}" height="{h:.0}" fill="white"/>
<line x1="{ml:.0}" y1="{yb:.0}" x2="{xr:.0}" y2="{yb:.0}" stroke="black"/>
<line x1="{ml:.0}" y1="{mt:.0}" x2="{ml:.0}" y2="{yb:.0}" stroke="black"/>
<text x="{xmid:.0}" y="{h2:.0}" font-size="12" text-anchor="middle">{xcol}</text>
<text x="14" y="{ymid:.0}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {ymid:.0})">{ycol}</text>
<text x="{ml:.0}" y="{h2:.0}" font-size="10" text-anchor="middle">{xlo}</text>
<text x="{xr:.0}" y="{h2:.0}" font-size="10" text-anchor="middle">{xhi}</text>
<text x="{mlm:.0}" y="{yb:.0}" font-size="10" text-anchor="end">{ylo:.3}</text>
<text x="{mlm:.0}" y="{mtp:.0}" font-size="10" text-anchor="end">{yhi:.3}</text>
{legend}
<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{coords}"/>
</svg>
"##,
        w = WIDTH,
        h = HEIGHT,
        ml = MARGIN_L,
        mlm = MARGIN_L - 5.0,
        mt = MARGIN_T,
        mtp = MARGIN_T + 4.0,
        yb = HEIGHT - MARGIN_B,
        xr = WIDTH - MARGIN_R,
        xmid = (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        ymid = (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        h2 = HEIGHT - MARGIN_B + 32.0,
        xcol = kind.x_column,
        ycol = y_label,
        xlo = x_lo,
        xhi = x_hi,
        ylo = y_lo,
        yhi = y_hi,
        legend = legend,
        coords = coords,
    ))
}
