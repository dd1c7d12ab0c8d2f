use std::fmt::Write;

use super::{CartographyRecord, Region};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
/// Variability of values confined to [0, 1] never exceeds 0.5.
const MAX_VARIABILITY: f64 = 0.5;

fn color(region: Option<Region>) -> &'static str {
    match region {
        Some(Region::Easy) => "#1b9e77",
        Some(Region::Ambiguous) => "#d95f02",
        Some(Region::Hard) => "#7570b3",
        None => "#999999",
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Data map as SVG: x = variability, y = confidence, one circle per record,
/// colored by region.
pub fn render_datamap(records: &[CartographyRecord], title: &str) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + (v / MAX_VARIABILITY).clamp(0.0, 1.0) * plot_w;
    let py = |c: f64| HEIGHT - MARGIN - c.clamp(0.0, 1.0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // axes with ticks
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}"/></g>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="11">"#);
    for i in 0..=5 {
        let v = MAX_VARIABILITY * f64::from(i) / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            y0 + 16.0
        );
        let c = f64::from(i) / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{c:.1}</text>"#,
            x0 - 6.0,
            py(c) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">variability</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">confidence</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    svg.push_str("</g>\n");

    let _ = writeln!(svg, r#"<g fill-opacity="0.6">"#);
    for r in records {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"><title>{}</title></circle>"#,
            px(r.variability),
            py(r.confidence),
            color(r.category),
            escape(&r.id)
        );
    }
    svg.push_str("</g>\n");

    // legend uses squares so circles stay one per record
    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="12">"#);
    for (i, region) in [Region::Easy, Region::Ambiguous, Region::Hard]
        .iter()
        .enumerate()
    {
        let y = MARGIN + 18.0 * i as f64;
        let x = WIDTH - MARGIN - 90.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{region}</text>"#,
            y - 9.0,
            color(Some(*region)),
            x + 16.0,
            y
        );
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}
