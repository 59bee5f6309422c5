//! SVG rendering of an evaluated front against the dataset and the oracle front.

use std::fmt::Write as _;

use anyhow::{Context, Result};
use offmorl_core::dataset::load_dataset;
use offmorl_core::envs::Env;
use offmorl_core::Error;

use crate::commands::EvalOutput;
use crate::run::write;
use crate::PlotArgs;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

pub struct Layers<'a> {
    pub data: &'a [Vec<f64>],
    pub oracle: &'a [Vec<f64>],
    /// Evaluated returns with the first preference weight, used for color.
    pub front: &'a [(f64, Vec<f64>)],
    pub reference_point: &'a [f64],
    pub title: &'a str,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn frame(l: &Layers) -> Frame {
    let all = l
        .data
        .iter()
        .chain(l.oracle)
        .chain(l.front.iter().map(|(_, p)| p))
        .chain(std::iter::once(&l.reference_point.to_vec()))
        .map(|p| (p[0], p[1]))
        .collect::<Vec<_>>();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |a: f64, b: f64| {
        let d = if b > a { 0.05 * (b - a) } else { 1.0 };
        (a - d, b + d)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    Frame { x0, x1, y0, y1 }
}

/// Blue at weight 0 through red at weight 1.
fn color(w: f64) -> String {
    format!("hsl({:.0},75%,45%)", 240.0 * (1.0 - w.clamp(0.0, 1.0)))
}

pub fn render(l: &Layers) -> String {
    let f = frame(l);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, l.title);
    let (bx, by) = (f.py(f.y0), f.px(f.x0));
    let _ = writeln!(
        s,
        r#"<g stroke="black"><line x1="{LEFT}" y1="{bx}" x2="{}" y2="{bx}"/><line x1="{by}" y1="{TOP}" x2="{by}" y2="{bx}"/></g>"#,
        W - RIGHT
    );
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.1}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.1}</text>"#,
            f.px(xv),
            bx + 16.0,
            LEFT - 6.0,
            f.py(yv) + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">objective 1</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">objective 2</text>"#,
        H / 2.0,
        H / 2.0
    );

    for p in l.data {
        let _ = writeln!(s, r##"<circle class="data" cx="{:.2}" cy="{:.2}" r="2" fill="#aaaaaa"/>"##, f.px(p[0]), f.py(p[1]));
    }
    if !l.oracle.is_empty() {
        let mut pts = l.oracle.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", f.px(p[0]), f.py(p[1]))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.2"/>"#, path.join(" "));
        // Continuous fronts are dense samples; only sparse ones get markers.
        if pts.len() <= 50 {
            for p in &pts {
                let _ = writeln!(
                    s,
                    r#"<circle class="oracle" cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="black"/>"#,
                    f.px(p[0]),
                    f.py(p[1])
                );
            }
        }
    }
    for (w, p) in l.front {
        let _ = writeln!(
            s,
            r#"<circle class="front" cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"/>"#,
            f.px(p[0]),
            f.py(p[1]),
            color(*w)
        );
    }
    let (rx, ry) = (f.px(l.reference_point[0]), f.py(l.reference_point[1]));
    let _ = writeln!(
        s,
        r#"<g class="r0" stroke="crimson"><line x1="{}" y1="{ry}" x2="{}" y2="{ry}"/><line x1="{rx}" y1="{}" x2="{rx}" y2="{}"/></g>"#,
        rx - 5.0,
        rx + 5.0,
        ry - 5.0,
        ry + 5.0
    );
    let r0: Vec<String> = l.reference_point.iter().map(|v| format!("{v}")).collect();
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" fill="crimson">r0 = ({})</text>"#,
        rx + 8.0,
        ry - 8.0,
        r0.join(", ")
    );
    if l.front.is_empty() {
        let _ = writeln!(
            s,
            r#"<text class="warning" x="{}" y="{}" text-anchor="middle" fill="darkorange" font-size="16">warning: no evaluated points</text>"#,
            W / 2.0,
            H / 2.0
        );
    }
    let lx = W - RIGHT - 150.0;
    let _ = writeln!(
        s,
        r##"<g font-size="11"><circle cx="{lx}" cy="{}" r="2" fill="#aaaaaa"/><text x="{}" y="{}">dataset</text><circle cx="{lx}" cy="{}" r="4" fill="none" stroke="black"/><text x="{}" y="{}">oracle front</text><circle cx="{lx}" cy="{}" r="3.5" fill="{}"/><text x="{}" y="{}">evaluated (by w1)</text></g>"##,
        TOP + 10.0,
        lx + 10.0,
        TOP + 14.0,
        TOP + 26.0,
        lx + 10.0,
        TOP + 30.0,
        TOP + 42.0,
        color(0.5),
        lx + 10.0,
        TOP + 46.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn run(a: PlotArgs) -> Result<()> {
    let path = a.eval.join("metrics.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let ev: EvalOutput = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })?;
    if ev.reference_point.len() != 2 {
        return Err(Error::Unsupported("plots need exactly two objectives".into()).into());
    }
    let oracle: Vec<Vec<f64>> = Env::by_name(&ev.env)?
        .oracle_pareto_front()?
        .iter()
        .map(|p| p.values().to_vec())
        .collect();
    let data: Vec<Vec<f64>> = match &a.data {
        Some(p) => load_dataset(p)?
            .trajectories
            .iter()
            .map(|t| t.episode_return.values().to_vec())
            .collect(),
        None => Vec::new(),
    };
    let front: Vec<(f64, Vec<f64>)> = ev.prefs.iter().map(|p| p[0]).zip(ev.returns.iter().cloned()).collect();
    if front.is_empty() {
        log::warn!("{} holds no evaluated points; drawing axes only", path.display());
    }
    let title = format!("{} (hv {:.2}, {:.3} of oracle)", ev.env, ev.metrics.hv, ev.hv_ratio);
    let svg = render(&Layers {
        data: &data,
        oracle: &oracle,
        front: &front,
        reference_point: &ev.reference_point,
        title: &title,
    });
    let out = a.out.unwrap_or_else(|| a.eval.join("front.svg"));
    write(&out, &svg)?;
    println!("{}", out.display());
    Ok(())
}
