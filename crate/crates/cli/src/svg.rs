//! Static SVG plots.

use std::fmt::Write;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn header(width: f64, height: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of `values[j * n + i]`, sampled at `(i, j) / (n - 1)` on the unit
/// square, from white (0) to red (`max`). Negative values are drawn white.
pub fn heatmap(values: &[f64], n: usize, title: &str) -> String {
    assert_eq!(values.len(), n * n);
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut s = header(SIZE + 2.0 * MARGIN, SIZE + 2.0 * MARGIN + 20.0, title);
    let cell = SIZE / n as f64;
    for j in 0..n {
        for i in 0..n {
            let v = values[j * n + i];
            if v.is_nan() || v <= 0.0 {
                continue;
            }
            let t = if max > 0.0 { v / max } else { 0.0 };
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb(255,{shade},{shade})"/>"#,
                MARGIN + i as f64 * cell,
                MARGIN + (n - 1 - j) as f64 * cell,
                cell + 0.05,
                cell + 0.05
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">max = {max:.3e}</text>"#,
        MARGIN + SIZE / 2.0,
        SIZE + MARGIN + 30.0
    );
    s.push_str("</svg>\n");
    s
}

/// Log-log plot of `(x, y)` series. Nonpositive values are skipped.
pub fn loglog(series: &[(&str, Vec<(f64, f64)>)], xlabel: &str, ylabel: &str, title: &str) -> String {
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().copied())
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let mut s = header(SIZE + 2.0 * MARGIN, SIZE + 2.0 * MARGIN, title);
    if points.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min).floor();
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max).ceil();
        (lo, if hi > lo { hi } else { lo + 1.0 })
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * SIZE;
    let py = |y: f64| MARGIN + SIZE - (y - y0) / (y1 - y0) * SIZE;
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    for e in x0 as i32..=x1 as i32 {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">1e{e}</text>"#,
            px(e as f64),
            MARGIN + SIZE + 16.0
        );
    }
    for e in y0 as i32..=y1 as i32 {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            MARGIN - 4.0,
            py(e as f64) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE + 36.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0,
        escape(ylabel)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x.log10()), py(y.log10())))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, coords.join(" "));
        for c in &coords {
            let (cx, cy) = c.split_once(',').unwrap();
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            MARGIN + 10.0,
            MARGIN + 16.0 * (k + 1) as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
