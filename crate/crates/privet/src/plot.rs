//! Minimal self-contained SVG charts: line charts with linear or log10 axes
//! and cell heat maps. Output is deterministic for identical input.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const ML: f64 = 70.0;
const MR: f64 = 150.0;
const MT: f64 = 40.0;
const MB: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#808000", "#c000c0", "#00a0c0", "#202020", "#d06000", "#2060d0", "#30a030", "#a0a0a0",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>) -> Series {
        Series {
            label: label.to_string(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Series {
        self.dashed = true;
        self
    }
}

/// A filled band between two curves sharing x values.
#[derive(Clone, Debug)]
pub struct Band {
    pub label: String,
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tr(v: f64, s: Scale) -> Option<f64> {
    match s {
        Scale::Linear => v.is_finite().then_some(v),
        Scale::Log10 => (v > 0.0 && v.is_finite()).then(|| v.log10()),
    }
}

fn nice_ticks(lo: f64, hi: f64, scale: Scale) -> Vec<f64> {
    match scale {
        Scale::Log10 => {
            let a = lo.floor() as i64;
            let b = hi.ceil() as i64;
            let step = ((b - a) as f64 / 8.0).ceil().max(1.0) as i64;
            (a..=b).step_by(step as usize).map(|e| e as f64).collect()
        }
        Scale::Linear => {
            let span = (hi - lo).max(1e-12);
            let raw = span / 6.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| span / s <= 7.0)
                .unwrap_or(10.0 * mag);
            let start = (lo / step).ceil() as i64;
            let end = (hi / step).floor() as i64;
            (start..=end).map(|k| k as f64 * step).collect()
        }
    }
}

fn tick_label(v: f64, scale: Scale) -> String {
    match scale {
        Scale::Log10 => format!("1e{}", v as i64),
        Scale::Linear => {
            let s = format!("{v:.4}");
            let s = s.trim_end_matches('0').trim_end_matches('.');
            if s == "-0" {
                "0".into()
            } else {
                s.into()
            }
        }
    }
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x_scale: Scale, y_scale: Scale) -> LineChart {
        LineChart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale,
            y_scale,
            series: Vec::new(),
            bands: Vec::new(),
        }
    }

    /// Number of curve elements (`polyline`) the chart will contain.
    pub fn curve_count(&self) -> usize {
        self.series.len()
    }

    pub fn to_svg(&self) -> String {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .chain(self.bands.iter().flat_map(|b| b.lower.iter().chain(&b.upper)));
        for &(x, y) in pts {
            if let (Some(a), Some(b)) = (tr(x, self.x_scale), tr(y, self.y_scale)) {
                xs.push(a);
                ys.push(b);
            }
        }
        let bounds = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = bounds(&xs);
        let (y0, y1) = bounds(&ys);
        let pw = W - ML - MR;
        let ph = H - MT - MB;
        let px = |x: f64| ML + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| MT + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            ML + pw / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>"##
        );
        for t in nice_ticks(x0, x1, self.x_scale) {
            if t < x0 - 1e-9 || t > x1 + 1e-9 {
                continue;
            }
            let x = px(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                MT + ph,
                MT + ph + 5.0,
                MT + ph + 18.0,
                tick_label(t, self.x_scale)
            );
        }
        for t in nice_ticks(y0, y1, self.y_scale) {
            if t < y0 - 1e-9 || t > y1 + 1e-9 {
                continue;
            }
            let y = py(t);
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{ML}" y2="{y:.2}" stroke="#000"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                ML - 5.0,
                ML - 8.0,
                y + 4.0,
                tick_label(t, self.y_scale)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            ML + pw / 2.0,
            H - 15.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            MT + ph / 2.0,
            MT + ph / 2.0,
            esc(&self.y_label)
        );
        for (k, b) in self.bands.iter().enumerate() {
            let mut poly = String::new();
            for &(x, y) in b.lower.iter().chain(b.upper.iter().rev()) {
                if let (Some(a), Some(c)) = (tr(x, self.x_scale), tr(y, self.y_scale)) {
                    let _ = write!(poly, "{:.2},{:.2} ", px(a), py(c));
                }
            }
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.25" stroke="none"><title>{}</title></polygon>"#,
                poly.trim_end(),
                PALETTE[(k + 5) % PALETTE.len()],
                esc(&b.label)
            );
        }
        for (k, ser) in self.series.iter().enumerate() {
            let mut poly = String::new();
            for &(x, y) in &ser.points {
                if let (Some(a), Some(c)) = (tr(x, self.x_scale), tr(y, self.y_scale)) {
                    let _ = write!(poly, "{:.2},{:.2} ", px(a), py(c));
                }
            }
            let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let color = PALETTE[k % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                poly.trim_end()
            );
            let ly = MT + 10.0 + 18.0 * k as f64;
            let lx = W - MR + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 20.0,
                lx + 25.0,
                ly + 4.0,
                esc(&ser.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Heat map of values on a grid of row and column labels. `None` cells are
/// drawn white.
pub fn heatmap_svg(
    title: &str,
    row_label: &str,
    col_label: &str,
    rows: &[f64],
    cols: &[f64],
    values: &[Vec<Option<f64>>],
) -> String {
    let finite: Vec<f64> = values.iter().flatten().flatten().cloned().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else if lo.is_finite() {
        (lo - 0.5, lo + 0.5)
    } else {
        (0.0, 1.0)
    };
    let pw = W - ML - MR;
    let ph = H - MT - MB;
    let cw = pw / cols.len().max(1) as f64;
    let rh = ph / rows.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        ML + pw / 2.0,
        esc(title)
    );
    for (i, _) in rows.iter().enumerate() {
        for (j, _) in cols.iter().enumerate() {
            let v = values.get(i).and_then(|r| r.get(j)).cloned().flatten();
            let fill = match v {
                Some(x) if x.is_finite() => {
                    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                    let r = (255.0 * t) as u8;
                    let b = (255.0 * (1.0 - t)) as u8;
                    format!("#{r:02x}40{b:02x}")
                }
                _ => "#ffffff".to_string(),
            };
            let label = v.map_or("nan".to_string(), |x| format!("{x:.3}"));
            // Row 0 at the bottom.
            let y = MT + ph - (i + 1) as f64 * rh;
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="#ccc"><title>{label}</title></rect>"##,
                ML + j as f64 * cw,
                y,
                cw,
                rh
            );
        }
    }
    for (j, c) in cols.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            ML + (j as f64 + 0.5) * cw,
            MT + ph + 16.0,
            tick_label(*c, Scale::Linear)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ML - 6.0,
            MT + ph - (i as f64 + 0.5) * rh + 4.0,
            tick_label(*r, Scale::Linear)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        ML + pw / 2.0,
        H - 15.0,
        esc(col_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        MT + ph / 2.0,
        MT + ph / 2.0,
        esc(row_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">min {lo:.3}</text><text x="{:.1}" y="{:.1}">max {hi:.3}</text>"#,
        W - MR + 10.0,
        MT + 20.0,
        W - MR + 10.0,
        MT + 38.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let mut c = LineChart::new("t", "x", "y", Scale::Log10, Scale::Log10);
        c.series.push(Series::new("a", vec![(1.0, 0.1), (10.0, 1.0)]));
        c.series.push(Series::new("b", vec![(0.0, 0.1), (2.0, 0.5)]).dashed());
        let svg = c.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg, c.to_svg());
    }

    #[test]
    fn heatmap_marks_missing_cells() {
        let svg = heatmap_svg("h", "r", "c", &[0.1, 0.2], &[0.3], &[vec![Some(1.0)], vec![None]]);
        assert!(svg.contains("#ffffff"));
        assert!(svg.contains("<title>nan</title>"));
    }
}
