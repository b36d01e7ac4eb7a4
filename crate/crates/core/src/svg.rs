//! Deterministic SVG rendering: signal overlays, accuracy heatmaps and VCG
//! loops. Fixed canvas sizes and two-decimal coordinates so output can be
//! compared byte for byte.

use std::fmt::Write as _;

use crate::metrics::AccuracyMatrix;
use crate::scalar::Real;
use crate::vcg::VcgSignal;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const FONT: &str = "font-family=\"sans-serif\" font-size=\"12\"";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, width: u32, height: u32) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(out, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        (-1.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

/// Keeps at most `max` points by taking the min and max of each bucket, so
/// QRS spikes survive decimation.
fn envelope(x: &[f64], max: usize) -> Vec<(usize, f64)> {
    if x.len() <= max || max < 2 {
        return x.iter().copied().enumerate().collect();
    }
    let bucket = x.len().div_ceil(max / 2);
    let mut out = Vec::with_capacity(max);
    for (b, chunk) in x.chunks(bucket).enumerate() {
        let base = b * bucket;
        let (imin, imax) = chunk.iter().enumerate().fold((0, 0), |(lo, hi), (k, &v)| {
            (if v < chunk[lo] { k } else { lo }, if v > chunk[hi] { k } else { hi })
        });
        let (a, c) = if imin <= imax { (imin, imax) } else { (imax, imin) };
        out.push((base + a, chunk[a]));
        if c != a {
            out.push((base + c, chunk[c]));
        }
    }
    out
}

/// Time-series overlay of equally sampled signals with a legend.
pub fn overlay_svg<T: Real>(title: &str, fs: f64, series: &[(&str, &[T])]) -> String {
    let (width, height) = (1000u32, 300u32);
    let (left, right, top, bottom) = (50.0, 980.0, 30.0, 270.0);
    let data: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, s)| s.iter().map(|v| v.as_f64()).collect())
        .collect();
    let n = data.iter().map(Vec::len).max().unwrap_or(0).max(2);
    let (lo, hi) = finite_range(data.iter().flatten().copied());
    let sx = |i: usize| left + (right - left) * i as f64 / (n - 1) as f64;
    let sy = |v: f64| bottom - (bottom - top) * (v - lo) / (hi - lo);

    let mut out = String::new();
    header(&mut out, width, height);
    let _ = writeln!(out, "<text x=\"{left}\" y=\"18\" {FONT}>{}</text>", escape(title));
    let _ = writeln!(
        out,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#cccccc\"/>",
        right - left,
        bottom - top
    );
    let _ = writeln!(
        out,
        "<text x=\"{left}\" y=\"290\" {FONT}>0 s</text><text x=\"{:.2}\" y=\"290\" {FONT} text-anchor=\"end\">{:.2} s</text>",
        right,
        (n - 1) as f64 / fs
    );
    let _ = writeln!(
        out,
        "<text x=\"45\" y=\"{top}\" {FONT} text-anchor=\"end\">{hi:.2}</text><text x=\"45\" y=\"{bottom}\" {FONT} text-anchor=\"end\">{lo:.2}</text>"
    );
    for (k, ((name, _), values)) in series.iter().zip(&data).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = envelope(values, 2000)
            .into_iter()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| format!("{:.2},{:.2}", sx(i), sy(v)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\" points=\"{}\"/>",
            pts.join(" ")
        );
        let ly = top + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{colour}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{}</text>",
            right - 150.0,
            right - 130.0,
            right - 125.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn heat_colour(v: f64) -> String {
    // white at 0 (or below) to dark blue at 1
    let t = v.clamp(0.0, 1.0);
    let c = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(255.0, 8.0), c(255.0, 48.0), c(255.0, 107.0))
}

/// Heatmap of `metric` ("r2" or "rho"); rows are synthesized leads,
/// columns current leads.
pub fn heatmap_svg(matrix: &AccuracyMatrix, metric: &str) -> String {
    let n = matrix.leads.len();
    let cell = 50.0;
    let (ox, oy) = (70.0, 60.0);
    let width = (ox + cell * n as f64 + 20.0) as u32;
    let height = (oy + cell * n as f64 + 40.0) as u32;
    let mut out = String::new();
    header(&mut out, width, height);
    let label = if metric == "r2" { "R²" } else { "ρ" };
    let _ = writeln!(
        out,
        "<text x=\"{ox}\" y=\"20\" {FONT}>{label} (rows: synthesized lead, columns: current lead)</text>"
    );
    for (j, l) in matrix.leads.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"middle\">{l}</text>",
            ox + cell * (j as f64 + 0.5),
            oy - 8.0
        );
    }
    for (i, row) in matrix.cells.iter().enumerate() {
        let y = oy + cell * i as f64;
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{}</text>",
            ox - 8.0,
            y + cell / 2.0 + 4.0,
            matrix.leads[i]
        );
        for (j, c) in row.iter().enumerate() {
            let x = ox + cell * j as f64;
            let (fill, text) = match c {
                Some(s) => {
                    let v = if metric == "r2" { s.r2 } else { s.rho };
                    (heat_colour(v), format!("{v:.2}"))
                }
                None => ("#eeeeee".to_string(), "-".to_string()),
            };
            let ink = if text != "-" && text.parse::<f64>().is_ok_and(|v| v > 0.6) {
                "white"
            } else {
                "black"
            };
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"white\"/><text x=\"{:.2}\" y=\"{:.2}\" {FONT} fill=\"{ink}\" text-anchor=\"middle\">{text}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Frontal-plane (X right, Y down) VCG loops, one per series.
pub fn vcg_loop_svg<T: Real>(title: &str, loops: &[(&str, &VcgSignal<T>)]) -> String {
    let size = 500u32;
    let (c, half) = (250.0, 210.0);
    let extent = loops
        .iter()
        .flat_map(|(_, v)| v.x.iter().chain(&v.y).map(|a| a.as_f64().abs()))
        .filter(|a| a.is_finite())
        .fold(0.0f64, f64::max);
    let scale = if extent > 0.0 { half / extent } else { 1.0 };
    let mut out = String::new();
    header(&mut out, size, size);
    let _ = writeln!(out, "<text x=\"10\" y=\"18\" {FONT}>{}</text>", escape(title));
    let _ = writeln!(
        out,
        "<line x1=\"{:.2}\" y1=\"{c:.2}\" x2=\"{:.2}\" y2=\"{c:.2}\" stroke=\"#cccccc\"/><line x1=\"{c:.2}\" y1=\"{:.2}\" x2=\"{c:.2}\" y2=\"{:.2}\" stroke=\"#cccccc\"/>",
        c - half,
        c + half,
        c - half,
        c + half
    );
    for (k, (name, v)) in loops.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> =
            v.x.iter()
                .zip(&v.y)
                .map(|(x, y)| (c + scale * x.as_f64(), c + scale * y.as_f64()))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
        let distinct = pts.windows(2).any(|w| w[0] != w[1]);
        if distinct {
            let s: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\" points=\"{}\"/>",
                s.join(" ")
            );
        } else if let Some((x, y)) = pts.first() {
            let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"{colour}\"/>");
        }
        let ly = 40.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            "<line x1=\"360\" y1=\"{ly:.2}\" x2=\"380\" y2=\"{ly:.2}\" stroke=\"{colour}\" stroke-width=\"2\"/><text x=\"385\" y=\"{:.2}\" {FONT}>{}</text>",
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_has_two_polylines_and_legend() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 / 10.0).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| v * 0.9).collect();
        let svg = overlay_svg("II", 500.0, &[("measured", &a), ("synthesized", &b)]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">measured<") && svg.contains(">synthesized<"));
        assert_eq!(svg, overlay_svg("II", 500.0, &[("measured", &a), ("synthesized", &b)]));
    }

    #[test]
    fn zero_vcg_is_a_point_at_the_origin() {
        let v = VcgSignal::new(vec![0.0f64; 20], vec![0.0; 20], vec![0.0; 20], 500.0).unwrap();
        let svg = vcg_loop_svg("zero", &[("vcg", &v)]);
        assert!(svg.contains("<circle cx=\"250.00\" cy=\"250.00\""));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn envelope_keeps_extremes() {
        let mut x = vec![0.0; 10_000];
        x[5_001] = 3.0;
        x[7_000] = -2.0;
        let e = envelope(&x, 500);
        assert!(e.len() <= 500);
        assert!(e.contains(&(5_001, 3.0)) && e.contains(&(7_000, -2.0)));
    }
}
