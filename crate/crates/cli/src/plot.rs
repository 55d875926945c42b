//! Minimal standalone SVG line charts. The plotted data is embedded in a
//! `<metadata>` element as JSON.

use std::fmt::Write as _;

use serde::Serialize;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Serialize)]
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Log scale on y; ignored when any plotted value is not positive.
    pub log_y: bool,
    /// Draw point markers in addition to lines.
    pub markers: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300_f64.max(1e-12 * hi.abs()) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let log_y = self.log_y && self.series.iter().flat_map(|s| &s.ys).all(|&y| y > 0.0);
        let ty = |y: f64| if log_y { y.log10() } else { y };
        let (x0, x1) = span(self.series.iter().flat_map(|s| s.xs.iter().copied()));
        let (y0, y1) = span(self.series.iter().flat_map(|s| s.ys.iter().map(|&y| ty(y))));
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = |y: f64| HEIGHT - MARGIN - (ty(y) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut s = String::new();
        let w = &mut s;
        writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        )
        .unwrap();
        writeln!(w, "<metadata>{}</metadata>", escape(&serde_json::to_string(self).expect("serializable"))).unwrap();
        writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(
            w,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        )
        .unwrap();
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        writeln!(w, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#).unwrap();
        let tick = |v: f64, log: bool| {
            if log {
                format!("1e{v:.1}")
            } else {
                format!("{v:.3e}")
            }
        };
        for (k, frac) in [0.0, 0.5, 1.0].iter().enumerate() {
            let xv = x0 + frac * (x1 - x0);
            let yv = y0 + frac * (y1 - y0);
            let anchor = ["start", "middle", "end"][k];
            writeln!(
                w,
                r#"<text x="{:.2}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{}</text>"#,
                px(xv),
                b + 14.0,
                tick(xv, false)
            )
            .unwrap();
            let yp = b - frac * (b - t);
            writeln!(
                w,
                r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
                l - 4.0,
                yp + 3.0,
                tick(yv, log_y)
            )
            .unwrap();
        }
        writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            w,
            r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        )
        .unwrap();

        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<(f64, f64)> = series
                .xs
                .iter()
                .zip(&series.ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(&x, &y)| (px(x), py(y)))
                .collect();
            let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            writeln!(w, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "))
                .unwrap();
            if self.markers {
                for (x, y) in &pts {
                    writeln!(w, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#).unwrap();
                }
            }
            writeln!(
                w,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                r - 120.0,
                t + 14.0 * (k as f64 + 1.0),
                escape(&series.name)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}
