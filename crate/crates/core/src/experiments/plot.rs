//! Minimal SVG chart of position RMSE against fault duration.

use std::fmt::Write;

use super::SweepSummary;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= n as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Mean with a min..max bar per duration, plus the quadratic fit if present.
pub fn render_rmse_svg(summary: &SweepSummary) -> String {
    let pts = &summary.durations;
    let x_max = pts.iter().map(|d| d.duration_s).fold(0.0, f64::max).max(1e-3) * 1.05;
    let y_max = pts.iter().map(|d| d.rmse_pos_rad.max).fold(0.0, f64::max).max(1e-6) * 1.1;
    let sx = |x: f64| LEFT + x / x_max * (W - LEFT - RIGHT);
    let sy = |y: f64| H - BOTTOM - y / y_max * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = LEFT,
        t = TOP,
        b = H - BOTTOM,
        r = W - RIGHT
    );
    for x in nice_ticks(0.0, x_max, 8) {
        let px = sx(x);
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{y1}" stroke="black"/>"#, y0 = H - BOTTOM, y1 = H - BOTTOM + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{y}" text-anchor="middle">{x}</text>"#, y = H - BOTTOM + 18.0);
    }
    for y in nice_ticks(0.0, y_max, 6) {
        let py = sy(y);
        let _ = writeln!(s, r#"<line x1="{x0}" y1="{py:.1}" x2="{LEFT}" y2="{py:.1}" stroke="black"/>"#, x0 = LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{x}" y="{ty:.1}" text-anchor="end">{y:.3}</text>"#, x = LEFT - 8.0, ty = py + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="middle">fault duration (s)</text>"#, x = (LEFT + W - RIGHT) / 2.0, y = H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{j} position RMSE (rad)</text>"#,
        y = (TOP + H - BOTTOM) / 2.0,
        j = summary.observed_joint
    );

    for d in pts {
        let px = sx(d.duration_s);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{a:.1}" x2="{px:.1}" y2="{b:.1}" stroke="steelblue"/>"#,
            a = sy(d.rmse_pos_rad.min),
            b = sy(d.rmse_pos_rad.max)
        );
        let _ = writeln!(s, r#"<circle cx="{px:.1}" cy="{cy:.1}" r="3.5" fill="steelblue"/>"#, cy = sy(d.rmse_pos_rad.mean));
    }

    if let Some(fit) = summary.fit {
        let mut path = String::new();
        for k in 0..=100 {
            let x = x_max * k as f64 / 100.0;
            let y = fit.eval(x).clamp(0.0, y_max);
            let _ = write!(path, "{}{:.1} {:.1} ", if k == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="firebrick" stroke-dasharray="5 3"/>"#, path.trim_end());
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" fill="firebrick">fit: {a:.4} d^2 + {b:.4} d + {c:.4}</text>"#,
            x = LEFT + 10.0,
            y = TOP + 4.0,
            a = fit.a,
            b = fit.b,
            c = fit.c
        );
    }
    s.push_str("</svg>\n");
    s
}
