//! Stability map as a standalone SVG: `dl` on the horizontal axis, `v_bar`
//! on the vertical, stable cells light, unstable cells dark, Hopf points
//! joined by the boundary curve. Output depends only on the map.

use std::fmt::Write;

use fblin_core::analysis::{StabilityMap, Verdict};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn fill(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "#d7e6f4",
        Verdict::Unstable => "#3b5b7a",
        Verdict::Invalid => "#bdbdbd",
    }
}

/// Cell edges: midpoints between neighbours, half a spacing beyond the ends.
fn edges(values: &[f64], fallback_half: f64) -> Vec<f64> {
    let n = values.len();
    let mut e = Vec::with_capacity(n + 1);
    let half = |i: usize| {
        if n > 1 {
            0.5 * (values[i + 1] - values[i])
        } else {
            fallback_half
        }
    };
    e.push(values[0] - half(0));
    for i in 0..n.saturating_sub(1) {
        e.push(0.5 * (values[i] + values[i + 1]));
    }
    e.push(values[n - 1] + half(n.saturating_sub(2)));
    e
}

/// `physical` is the dashed `[-l_f, l_r]` range.
pub fn stability_svg(map: &StabilityMap, physical: (f64, f64)) -> String {
    let mut order: Vec<usize> = (0..map.v_bar_grid.len()).collect();
    order.sort_by(|&a, &b| map.v_bar_grid[a].total_cmp(&map.v_bar_grid[b]));
    let speeds: Vec<f64> = order.iter().map(|&i| map.v_bar_grid[i]).collect();
    let v_edges = edges(&speeds, 0.05);
    let dl_edges = edges(&map.dl_grid, 0.0005);

    let (x0, x1) = (dl_edges[0], *dl_edges.last().unwrap());
    let (y0, y1) = (v_edges[0], *v_edges.last().unwrap());
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{} law, psi_bar = {:.4} rad</text>"#,
        LEFT + plot_w / 2.0,
        map.law,
        map.psi_bar
    );

    // one rectangle per run of equal verdicts along dl
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for (row, &iv) in order.iter().enumerate() {
        let cells = map.row(iv);
        let (top, bottom) = (sy(v_edges[row + 1]), sy(v_edges[row]));
        let mut start = 0;
        while start < cells.len() {
            let verdict = cells[start].verdict;
            let mut end = start;
            while end + 1 < cells.len() && cells[end + 1].verdict == verdict {
                end += 1;
            }
            let (left, right) = (sx(dl_edges[start]), sx(dl_edges[end + 1]));
            let _ = writeln!(
                s,
                r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                right - left,
                bottom - top,
                fill(verdict)
            );
            start = end + 1;
        }
    }
    let _ = writeln!(s, "</g>");

    for bound in [physical.0, physical.1] {
        if bound > x0 && bound < x1 {
            let x = sx(bound);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444" stroke-dasharray="5,4"/>"##,
                TOP + plot_h
            );
        }
    }

    let mut hopf: Vec<(f64, f64)> = map
        .hopf_points
        .iter()
        .map(|h| (h.v_bar, h.dl_star))
        .collect();
    hopf.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let one_per_speed = hopf.windows(2).all(|w| w[0].0 != w[1].0);
    if hopf.len() > 1 && one_per_speed {
        let pts: Vec<String> = hopf
            .iter()
            .map(|&(v, dl)| format!("{:.2},{:.2}", sx(dl), sy(v)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
            pts.join(" ")
        );
    }
    for &(v, dl) in &hopf {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#c0392b"/>"##,
            sx(dl),
            sy(v)
        );
    }

    // axes and ticks
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let x = x0 + (x1 - x0) * k as f64 / 5.0;
        let y = y0 + (y1 - y0) * k as f64 / 5.0;
        let (px, py) = (sx(x), sy(y));
        let base = TOP + plot_h;
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{base:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            base + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{x:.3}</text>"#,
            base + 19.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT:.2}" y2="{py:.2}" stroke="black"/>"#,
            LEFT - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.2}</text>"#,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">dl [m]</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">v_bar [m/s]</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let lx = WIDTH - RIGHT + 15.0;
    for (k, (label, color)) in [
        ("stable", fill(Verdict::Stable)),
        ("unstable", fill(Verdict::Unstable)),
        ("invalid", fill(Verdict::Invalid)),
    ]
    .into_iter()
    .enumerate()
    {
        let y = TOP + 10.0 + 22.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{y:.2}" width="14" height="14" fill="{color}" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{label}</text>"#,
            lx + 20.0,
            y + 11.0
        );
    }
    let y = TOP + 10.0 + 66.0;
    let _ = writeln!(
        s,
        r##"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c0392b" stroke-width="2"/>"##,
        y + 7.0,
        lx + 14.0,
        y + 7.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}">Hopf boundary</text>"#,
        lx + 20.0,
        y + 11.0
    );
    let y = y + 22.0;
    let _ = writeln!(
        s,
        r##"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#444" stroke-dasharray="5,4"/>"##,
        y + 7.0,
        lx + 14.0,
        y + 7.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}">[-l_f, l_r]</text>"#,
        lx + 20.0,
        y + 11.0
    );
    s.push_str("</svg>\n");
    s
}
