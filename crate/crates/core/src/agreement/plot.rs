use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::AblationPoint;
use crate::shots::SelectionMethod;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn color(method: SelectionMethod) -> &'static str {
    match method {
        SelectionMethod::Clustering => "#1f77b4",
        SelectionMethod::Random => "#d62728",
    }
}

/// Line chart of κ against shot count with one series per selection method.
pub fn plot_svg(points: &[AblationPoint]) -> String {
    let mut series: BTreeMap<SelectionMethod, Vec<(usize, f64)>> = BTreeMap::new();
    for p in points {
        series.entry(p.method).or_default().push((p.shots, p.kappa));
    }
    for s in series.values_mut() {
        s.sort_by_key(|(shots, _)| *shots);
    }
    let x_min = points.iter().map(|p| p.shots).min().unwrap_or(0) as f64;
    let x_max = (points.iter().map(|p| p.shots).max().unwrap_or(1) as f64).max(x_min + 1.0);
    let y_min = points.iter().map(|p| p.kappa).fold(0.0_f64, f64::min).max(-1.0);
    let y_min = (y_min * 5.0).floor() / 5.0;
    let y_max = 1.0;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Cohen's kappa by number of shots</text>"#, LEFT + plot_w / 2.0);

    let mut tick = y_min;
    while tick <= y_max + 1e-9 {
        let y = sy(tick);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, LEFT + plot_w);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.1}</text>"#, LEFT - 6.0, y + 4.0);
        tick += 0.2;
    }
    for x in (x_min as usize)..=(x_max as usize) {
        let px = sx(x as f64);
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h, TOP + plot_h + 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#, TOP + plot_h + 18.0);
    }
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h);
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h, LEFT + plot_w, TOP + plot_h);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">shots</text>"#, LEFT + plot_w / 2.0, HEIGHT - 10.0);
    let _ = writeln!(svg, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">kappa</text>"#, TOP + plot_h / 2.0, TOP + plot_h / 2.0);

    for (i, (method, pts)) in series.iter().enumerate() {
        let c = color(*method);
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x as f64), sy(*y))).collect();
        let _ = writeln!(svg, r#"<polyline class="series" data-method="{method}" fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for (x, y) in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{c}"><title>{method} {x}: {y:.4}</title></circle>"#, sx(*x as f64), sy(*y));
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(svg, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{method}</text>"#, lx + 26.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}
