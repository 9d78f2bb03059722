//! Minimal SVG line chart of `S` and `A` against time.

use std::fmt::Write as _;

use crate::pipeline::TraceRecord;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

pub fn render_chart(records: &[TraceRecord]) -> String {
    let finite = |v: f64| v.is_finite().then_some(v);
    let t_max = records.last().map_or(1.0, |r| r.time).max(1e-9);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in records.iter().flat_map(|r| [finite(r.sil_db), finite(r.a_db)]).flatten() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    lo = (lo / 5.0).floor() * 5.0;
    hi = ((hi / 5.0).ceil() * 5.0).max(lo + 5.0);

    let x = |t: f64| MARGIN + t / t_max * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);
    let polyline = |get: &dyn Fn(&TraceRecord) -> f64| {
        records
            .iter()
            .filter(|r| get(r).is_finite())
            .map(|r| format!("{:.2},{:.2}", x(r.time), y(get(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let mut v = lo;
    while v <= hi + 1e-9 {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v}</text>"#,
            x0 - 6.0,
            y(v) + 4.0
        );
        v += 5.0;
    }
    let step = if t_max > 30.0 { 10.0 } else { 2.0 };
    let mut t = 0.0;
    while t <= t_max + 1e-9 {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#,
            x(t),
            y0 + 16.0
        );
        t += step;
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time (s)</text>"#, WIDTH / 2.0, HEIGHT - 8.0);
    let _ = writeln!(svg, r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">dB</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="red" stroke-width="1" points="{}"/>"#,
        polyline(&|r| r.sil_db)
    );
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="black" stroke-width="2" points="{}"/>"#,
        polyline(&|r| r.a_db)
    );
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" fill="red">S</text>"#, x1 - 40.0, y1 + 4.0);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">A</text>"#, x1 - 20.0, y1 + 4.0);
    svg.push_str("</svg>\n");
    svg
}
