//! SVG exports: 2-D descriptors with codewords, and accuracy curves.
//!
//! Every SVG has a CSV twin holding the plotted numbers.

use std::fmt::Write as _;

use crate::encoders::FeatureBag;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::trainer::EpochMetrics;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad_x = ((x1 - x0) * 0.05).max(1e-9);
        let pad_y = ((y1 - y0) * 0.05).max(1e-9);
        Self {
            x0: x0 - pad_x,
            x1: x1 + pad_x,
            y0: y0 - pad_y,
            y1: y1 + pad_y,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>"#,
        WIDTH / 2.0
    );
}

/// Descriptors colored by class with one black cross per codeword.
pub fn codebook_svg(bags: &[FeatureBag], centers: &Matrix) -> Result<String> {
    if centers.cols() != 2 || bags.iter().any(|b| b.dim() != 2) {
        return Err(Error::Shape("codebook plots need 2-D descriptors".into()));
    }
    let frame = Frame::fit(
        bags.iter()
            .flat_map(|b| b.descriptors.iter_rows())
            .chain(centers.iter_rows())
            .map(|r| (r[0], r[1])),
    );
    let mut out = String::new();
    open(&mut out, "descriptors and codewords");
    for bag in bags {
        let color = PALETTE[bag.label % PALETTE.len()];
        for r in bag.descriptors.iter_rows() {
            let _ = writeln!(
                out,
                r#"<circle class="feature" cx="{:.2}" cy="{:.2}" r="1.5" fill="{color}" fill-opacity="0.5"/>"#,
                frame.px(r[0]),
                frame.py(r[1])
            );
        }
    }
    for r in centers.iter_rows() {
        let (x, y) = (frame.px(r[0]), frame.py(r[1]));
        let s = 7.0;
        let _ = writeln!(
            out,
            r#"<path class="codeword" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="black" stroke-width="2.5"/>"#,
            x - s,
            y - s,
            x + s,
            y + s,
            x - s,
            y + s,
            x + s,
            y - s
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// CSV twin of [`codebook_svg`]: `kind,x,y,class`.
pub fn codebook_csv(bags: &[FeatureBag], centers: &Matrix) -> Result<String> {
    if centers.cols() != 2 || bags.iter().any(|b| b.dim() != 2) {
        return Err(Error::Shape("codebook plots need 2-D descriptors".into()));
    }
    let mut out = String::from("kind,x,y,class\n");
    for bag in bags {
        for r in bag.descriptors.iter_rows() {
            let _ = writeln!(out, "feature,{},{},{}", r[0], r[1], bag.label);
        }
    }
    for r in centers.iter_rows() {
        let _ = writeln!(out, "codeword,{},{},", r[0], r[1]);
    }
    Ok(out)
}

/// Accuracy against epoch; one polyline per series (train, and test when recorded).
pub fn metrics_svg(metrics: &[EpochMetrics]) -> Result<String> {
    if metrics.is_empty() {
        return Err(Error::Empty("metrics history".into()));
    }
    let last = metrics.iter().map(|m| m.epoch).max().unwrap_or(0) as f64;
    let frame = Frame {
        x0: 0.0,
        x1: last.max(1.0),
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    open(&mut out, "accuracy per epoch");
    let _ = writeln!(
        out,
        r#"<path class="axes" d="M{MARGIN} {}L{} {}M{MARGIN} {}L{MARGIN} {MARGIN}" stroke="gray" fill="none"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN,
        HEIGHT - MARGIN,
    );
    type Series<'a> = (&'a str, &'a str, Vec<(f64, f64)>);
    let mut series: Vec<Series> = vec![(
        "train_acc",
        PALETTE[0],
        metrics.iter().map(|m| (m.epoch as f64, m.train_accuracy)).collect(),
    )];
    if metrics.iter().all(|m| m.test_accuracy.is_some()) {
        series.push((
            "test_acc",
            PALETTE[1],
            metrics
                .iter()
                .map(|m| (m.epoch as f64, m.test_accuracy.unwrap_or(0.0)))
                .collect(),
        ));
    }
    for (i, (name, color, pts)) in series.iter().enumerate() {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-series="{name}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{name}</text>"#,
            WIDTH - MARGIN - 70.0,
            MARGIN + 16.0 * (i as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
