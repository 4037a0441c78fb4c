use std::fmt::Write;

use super::Landscape;
use crate::scheduler::Phase;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;

fn band_colour(band: usize, bands: usize) -> String {
    let t = if bands > 1 { band as f64 / (bands - 1) as f64 } else { 0.5 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(239.0, 8.0), lerp(243.0, 81.0), lerp(255.0, 156.0))
}

fn star(cx: f64, cy: f64, r: f64) -> String {
    let mut pts = String::new();
    for k in 0..10 {
        let rad = if k % 2 == 0 { r } else { r * 0.45 };
        let ang = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
        write!(pts, "{:.2},{:.2} ", cx + rad * ang.cos(), cy + rad * ang.sin()).unwrap();
    }
    pts.trim_end().to_string()
}

/// Filled bands, contour lines and the projected trajectory (S segments
/// dashed, A segments solid).
pub fn render_svg(land: &Landscape) -> String {
    let [x0, x1, y0, y1] = land.regions.bounds;
    let span = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * span;
    let py = |y: f64| SIZE - MARGIN - (y - y0) / (y1 - y0) * span;
    let bands = land.regions.levels.len() + 1;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    s.push_str("<g id=\"regions\" stroke=\"none\">\n");
    for r in &land.regions.regions {
        let mut d = String::new();
        for ring in &r.rings {
            for (k, p) in ring.iter().enumerate() {
                write!(d, "{}{:.3},{:.3} ", if k == 0 { "M" } else { "L" }, px(p[0]), py(p[1])).unwrap();
            }
            d.push_str("Z ");
        }
        writeln!(
            s,
            r#"<path d="{}" fill="{}" fill-rule="evenodd"><title>band {}</title></path>"#,
            d.trim_end(),
            band_colour(r.band, bands),
            r.band
        )
        .unwrap();
    }
    s.push_str("</g>\n<g id=\"contours\" fill=\"none\" stroke=\"#333\" stroke-width=\"0.8\">\n");
    for c in &land.regions.contours {
        for line in &c.lines {
            let pts: Vec<String> = line.points.iter().map(|p| format!("{:.3},{:.3}", px(p[0]), py(p[1]))).collect();
            let tag = if line.closed { "polygon" } else { "polyline" };
            writeln!(s, r#"<{tag} points="{}"><title>{:.2}</title></{tag}>"#, pts.join(" "), c.level).unwrap();
        }
    }
    s.push_str("</g>\n<g id=\"trajectory\" stroke=\"#c00\" stroke-width=\"1.6\" fill=\"none\">\n");
    for w in land.points.windows(2) {
        let dash = if w[1].phase == Phase::S { r#" stroke-dasharray="5,3""# } else { "" };
        writeln!(
            s,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"{dash}/>"#,
            px(w[0].coords[0]),
            py(w[0].coords[1]),
            px(w[1].coords[0]),
            py(w[1].coords[1])
        )
        .unwrap();
    }
    s.push_str("</g>\n<g id=\"checkpoints\" fill=\"#c00\" stroke=\"#600\" stroke-width=\"0.5\">\n");
    for p in &land.points {
        writeln!(
            s,
            r#"<polygon points="{}"><title>step {} {} BLEU {:.2}</title></polygon>"#,
            star(px(p.coords[0]), py(p.coords[1]), 6.0),
            p.global_step,
            p.phase,
            p.dev_bleu
        )
        .unwrap();
    }
    s.push_str("</g>\n</svg>\n");
    s
}
