//! Small fixed-layout SVG plots. Output is a pure function of the data, so
//! repeated runs produce identical files.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            return Self {
                lo: lo - 0.5,
                hi: hi + 0.5,
            };
        }
        let pad = 0.05 * (hi - lo);
        Self {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn union(self, other: Self) -> Self {
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

struct Frame {
    x: Range,
    y: Range,
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        PAD + (v - self.x.lo) / (self.x.hi - self.x.lo) * (W - 2.0 * PAD)
    }

    fn py(&self, v: f64) -> f64 {
        H - PAD - (v - self.y.lo) / (self.y.hi - self.y.lo) * (H - 2.0 * PAD)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        let (x0, x1, y0, y1) = (PAD, W - PAD, H - PAD, PAD);
        let _ = writeln!(
            s,
            r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = self.x.lo + t * (self.x.hi - self.x.lo);
            let yv = self.y.lo + t * (self.y.hi - self.y.lo);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                s,
                r#"<text x="{xp:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                yp + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Line plot of `ys` at x = `x_start`, `x_start + 1`, ..., with an optional
/// marked point given by index.
pub fn line_plot(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    x_start: f64,
    ys: &[f64],
    marker: Option<usize>,
) -> String {
    let frame = Frame {
        x: Range::of([x_start, x_start + ys.len().saturating_sub(1) as f64]),
        y: Range::of(ys.iter().copied()),
    };
    let mut s = frame.open(title, xlabel, ylabel);
    let mut d = String::new();
    for (i, &v) in ys.iter().enumerate() {
        let _ = write!(
            d,
            "{}{:.2},{:.2} ",
            if i == 0 { "M" } else { "L" },
            frame.px(x_start + i as f64),
            frame.py(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
        d.trim_end(),
        PALETTE[0]
    );
    if let Some(m) = marker.filter(|&m| m < ys.len()) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#,
            frame.px(x_start + m as f64),
            frame.py(ys[m]),
            PALETTE[3]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Predicted-vs-real scatter with a dashed y = x reference line.
pub fn prediction_scatter(title: &str, real: &[f64], predicted: &[f64]) -> String {
    let both = Range::of(real.iter().copied()).union(Range::of(predicted.iter().copied()));
    let frame = Frame { x: both, y: both };
    let mut s = frame.open(title, "real", "predicted");
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        frame.px(both.lo),
        frame.py(both.lo),
        frame.px(both.hi),
        frame.py(both.hi)
    );
    for (r, p) in real.iter().zip(predicted) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.7"/>"#,
            frame.px(*r),
            frame.py(*p),
            PALETTE[0]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// 2-D scatter colored by cluster label.
pub fn cluster_scatter(title: &str, xs: &[f64], ys: &[f64], labels: &[usize]) -> String {
    let frame = Frame {
        x: Range::of(xs.iter().copied()),
        y: Range::of(ys.iter().copied()),
    };
    let mut s = frame.open(title, "PC1", "PC2");
    for ((x, y), l) in xs.iter().zip(ys).zip(labels) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            frame.px(*x),
            frame.py(*y),
            PALETTE[l % PALETTE.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}
