//! Static SVG 1.1 charts. Coordinates are printed with fixed decimals so
//! identical inputs give identical bytes.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub categories: Vec<String>,
    /// One bar per series inside every category; `None` leaves a gap.
    pub series: Vec<(String, Vec<Option<f64>>)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let (mut x0, mut x1) = bounds(xs);
        let (mut y0, mut y1) = bounds(ys);
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi { (0.0, 1.0) } else { (lo, hi) }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{W:.0}\" height=\"{H:.0}\" viewBox=\"0 0 {W:.0} {H:.0}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{W:.0}\" height=\"{H:.0}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        (W - RIGHT + LEFT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: Option<&str>, y_label: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        "<path d=\"M{l:.1},{t:.1} L{l:.1},{b:.1} L{r:.1},{b:.1}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..=4 {
        let v = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{v:.3}</text>",
            l - 4.0,
            y + 3.0
        );
    }
    if let Some(x_label) = x_label {
        for k in 0..=4 {
            let v = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{v:.3}</text>",
                f.px(v),
                b + 14.0
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            (l + r) / 2.0,
            H - 10.0,
            escape(x_label)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, names: impl Iterator<Item = String>) {
    for (i, name) in names.enumerate() {
        let y = TOP + 14.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            W - RIGHT + 10.0,
            y,
            colour(i),
            W - RIGHT + 24.0,
            y + 9.0,
            escape(&name)
        );
    }
}

impl LineChart {
    pub fn render(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter().copied());
        let frame = Frame::new(pts.clone().map(|p| p.0), pts.map(|p| p.1));
        let mut out = String::new();
        header(&mut out, &self.title);
        axes(&mut out, &frame, Some(&self.x_label), &self.y_label);
        for (i, s) in self.series.iter().enumerate() {
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
                .collect();
            let _ = writeln!(
                out,
                "<polyline data-series=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
                escape(&s.name),
                colour(i),
                coords.join(" ")
            );
        }
        legend(&mut out, self.series.iter().map(|s| s.name.clone()));
        out.push_str("</svg>\n");
        out
    }
}

impl BarChart {
    pub fn render(&self) -> String {
        let values = self.series.iter().flat_map(|(_, v)| v.iter().flatten().copied());
        let frame = Frame::new([0.0, 1.0].into_iter(), values.chain([0.0]));
        let mut out = String::new();
        header(&mut out, &self.title);
        axes(&mut out, &frame, None, &self.y_label);
        let n_cat = self.categories.len().max(1) as f64;
        let slot = (W - LEFT - RIGHT) / n_cat;
        let bar = slot * 0.8 / self.series.len().max(1) as f64;
        let base = frame.py(0.0);
        for (c, cat) in self.categories.iter().enumerate() {
            let x_slot = LEFT + slot * c as f64;
            for (s, (_, vals)) in self.series.iter().enumerate() {
                let Some(v) = vals.get(c).copied().flatten().filter(|v| v.is_finite()) else {
                    continue;
                };
                let y = frame.py(v);
                let _ = writeln!(
                    out,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{bar:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                    x_slot + slot * 0.1 + bar * s as f64,
                    y.min(base),
                    (base - y).abs(),
                    colour(s)
                );
            }
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
                x_slot + slot / 2.0,
                H - BOTTOM + 14.0,
                escape(cat)
            );
        }
        legend(&mut out, self.series.iter().map(|(n, _)| n.clone()));
        out.push_str("</svg>\n");
        out
    }
}
