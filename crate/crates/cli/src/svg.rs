//! Minimal line chart for depth sweeps.

use std::fmt::Write;

use gsan_core::train::SweepRow;

const W: f64 = 480.0;
const H: f64 = 320.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Validation and test metric against depth. Depths are spaced evenly in the
/// order given; the y axis spans [0, 1]. `echo` goes into `<desc>`.
pub fn sweep_chart(rows: &[SweepRow], title: &str, echo: &str) -> String {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x = |i: usize| {
        if rows.len() <= 1 {
            LEFT + pw / 2.0
        } else {
            LEFT + pw * i as f64 / (rows.len() - 1) as f64
        }
    };
    let y = |v: f64| TOP + ph * (1.0 - v.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, "<desc>{}</desc>", escape(echo));
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/><line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            LEFT - 4.0,
            LEFT + pw,
            LEFT - 6.0,
            y(v) + 4.0,
            y = y(v)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x(i),
            TOP + ph + 18.0,
            r.depth
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">layers</text>"#,
        LEFT + pw / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">accuracy</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );

    for (name, colour, pick) in [
        ("val", "#1f77b4", (|r: &SweepRow| r.val_acc) as fn(&SweepRow) -> f64),
        ("test", "#d62728", |r: &SweepRow| r.test_acc),
    ] {
        let pts: Vec<String> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{:.2},{:.2}", x(i), y(pick(r))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{name}" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (px, py) = p.split_once(',').expect("x,y");
            let _ = writeln!(s, r#"<circle cx="{px}" cy="{py}" r="3" fill="{colour}"/>"#);
        }
    }
    let lx = LEFT + pw - 70.0;
    let _ = writeln!(
        s,
        r##"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="#1f77b4" stroke-width="2"/><text x="{}" y="{}">val</text>"##,
        TOP + ph - 30.0,
        lx + 16.0,
        TOP + ph - 30.0,
        lx + 20.0,
        TOP + ph - 26.0
    );
    let _ = writeln!(
        s,
        r##"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="#d62728" stroke-width="2"/><text x="{}" y="{}">test</text>"##,
        TOP + ph - 14.0,
        lx + 16.0,
        TOP + ph - 14.0,
        lx + 20.0,
        TOP + ph - 10.0
    );
    s.push_str("</svg>\n");
    s
}
