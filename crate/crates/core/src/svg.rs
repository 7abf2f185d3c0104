//! Minimal SVG line charts.

use std::fmt::Write;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One panel of line series at `(x0, y0)` with the given size.
fn panel(out: &mut String, title: &str, series: &[Series<'_>], x0: f64, y0: f64, w: f64, h: f64) {
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="13" font-family="sans-serif">{}</text>"#,
        x0,
        y0 - 6.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10" font-family="sans-serif" text-anchor="end">{:.3}</text>"#,
        x0 - 4.0,
        y0 + 10.0,
        hi
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10" font-family="sans-serif" text-anchor="end">{:.3}</text>"#,
        x0 - 4.0,
        y0 + h,
        lo
    );
    for (i, s) in series.iter().enumerate() {
        let n = s.values.len().max(2);
        let mut pts = String::new();
        for (k, v) in s.values.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            let x = x0 + w * k as f64 / (n - 1) as f64;
            let y = y0 + h - h * (v - lo) / (hi - lo);
            let _ = write!(pts, "{x:.2},{y:.2} ");
        }
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif" fill="{color}">{}</text>"#,
            x0 + w + 8.0,
            y0 + 14.0 * (i + 1) as f64,
            escape(s.label)
        );
    }
}

/// Stacked panels, each a `(title, series)` pair.
pub fn line_chart(title: &str, panels: &[(&str, Vec<Series<'_>>)]) -> String {
    let (w, h, left, top, gap) = (560.0, 200.0, 60.0, 50.0, 50.0);
    let height = top + panels.len() as f64 * (h + gap);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" viewBox="0 0 {} {height}">"#,
        left + w + 160.0,
        left + w + 160.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{left}" y="22" font-size="15" font-family="sans-serif">{}</text>"#,
        escape(title)
    );
    for (i, (t, s)) in panels.iter().enumerate() {
        panel(&mut out, t, s, left, top + i as f64 * (h + gap), w, h);
    }
    out.push_str("</svg>\n");
    out
}
