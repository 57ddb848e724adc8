//! Angle plots as plain SVG markup: one polyline per branch, dashed lines at
//! multiples of 2 pi, and a marker where a branch index `q` changes.

use std::f64::consts::TAU;
use std::fmt::Write;

use osk_core::lidskii::AngleTrace;

const W: f64 = 800.0;
const H: f64 = 420.0;
const PAD: f64 = 50.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Times and angles where branch `j` passes a multiple of `2 pi` with a
/// change of `q`, located by linear interpolation between nodes.
pub fn crossings(trace: &AngleTrace) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for k in 1..trace.nodes.len() {
        for j in 0..trace.n() {
            let (q0, q1) = (trace.q[k - 1][j], trace.q[k][j]);
            if q0 == q1 {
                continue;
            }
            let (t0, t1) = (trace.nodes[k - 1], trace.nodes[k]);
            let (p0, p1) = (trace.angles[k - 1][j], trace.angles[k][j]);
            for m in q0.min(q1) + 1..=q0.max(q1) {
                let level = TAU * m as f64;
                let s = if p1 != p0 { ((level - p0) / (p1 - p0)).clamp(0.0, 1.0) } else { 1.0 };
                out.push((j, t0 + s * (t1 - t0), level));
            }
        }
    }
    out
}

pub fn angle_plot(trace: &AngleTrace) -> String {
    let (t_lo, t_hi) = (trace.nodes[0], *trace.nodes.last().unwrap());
    let all = trace.angles.iter().flatten().copied();
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    lo = lo.min(0.0);
    hi = hi.max(TAU);
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let x = |t: f64| PAD + (t - t_lo) / (t_hi - t_lo).max(f64::MIN_POSITIVE) * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for k in (lo / TAU).ceil() as i64..=(hi / TAU).floor() as i64 {
        let yk = y(TAU * k as f64);
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{PAD}" y1="{yk:.3}" x2="{:.3}" y2="{yk:.3}" stroke="#999" stroke-dasharray="4 3"/>"##,
            W - PAD
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{k}*2pi</text>"#,
            PAD - 4.0,
            yk + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="11">t = {t_lo:.4}</text><text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">t = {t_hi:.4}</text>"#,
        PAD,
        H - PAD + 16.0,
        W - PAD,
        H - PAD + 16.0
    );
    for j in 0..trace.n() {
        let pts: Vec<String> = trace
            .nodes
            .iter()
            .zip(&trace.angles)
            .map(|(&t, a)| format!("{:.3},{:.3}", x(t), y(a[j])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="branch" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLORS[j % COLORS.len()],
            pts.join(" ")
        );
    }
    for (j, t, v) in crossings(trace) {
        let _ = writeln!(
            s,
            r#"<circle class="crossing" cx="{:.3}" cy="{:.3}" r="4" fill="none" stroke="{}"/>"#,
            x(t),
            y(v),
            COLORS[j % COLORS.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}
