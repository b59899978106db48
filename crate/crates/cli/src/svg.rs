//! Minimal SVG emission: filled cells, polylines and labels.

use std::fmt::Write;

use tipshoot_core::classify::Tag;

pub fn tag_color(t: Tag) -> &'static str {
    match t {
        Tag::A => "#4e79a7",
        Tag::B => "#e15759",
        Tag::XLike => "#59a14f",
        Tag::Undetermined => "#bab0ac",
    }
}

/// Axis-aligned box in data coordinates mapped onto a pixel panel.
#[derive(Debug, Clone, Copy)]
struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Panel {
    fn fit(x0: f64, y0: f64, w: f64, h: f64, pts: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for (x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        if !(xmin < xmax) {
            (xmin, xmax) = (xmin.min(0.0) - 0.5, xmax.max(0.0) + 0.5);
        }
        if !(ymin < ymax) {
            (ymin, ymax) = (ymin.min(0.0) - 0.5, ymax.max(0.0) + 0.5);
        }
        Self {
            x0,
            y0,
            w,
            h,
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    /// Same scale on both axes, centred in the panel.
    fn equal_aspect(mut self) -> Self {
        let sx = self.w / (self.xmax - self.xmin);
        let sy = self.h / (self.ymax - self.ymin);
        let s = sx.min(sy);
        let (cx, cy) = (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax));
        let (hw, hh) = (0.5 * self.w / s, 0.5 * self.h / s);
        (self.xmin, self.xmax, self.ymin, self.ymax) = (cx - hw, cx + hw, cy - hh, cy + hh);
        self
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.w,
            self.y0 + self.h - (y - self.ymin) / (self.ymax - self.ymin) * self.h,
        )
    }
}

fn header(out: &mut String, width: u32, height: u32, hash: &str, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, "<!-- config_hash: {hash} -->");
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn polyline(out: &mut String, p: &Panel, pts: &[(f64, f64)], color: &str, width: f64) {
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| {
            let (a, b) = p.px(x, y);
            format!("{a:.2},{b:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{}"/>"#,
        coords.join(" ")
    );
}

fn frame(out: &mut String, p: &Panel, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        p.x0, p.y0, p.w, p.h
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        p.x0 + 0.5 * p.w,
        p.y0 + p.h + 32.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        p.x0 - 40.0,
        p.y0 + 0.5 * p.h,
        p.x0 - 40.0,
        p.y0 + 0.5 * p.h,
        escape(ylabel)
    );
    for (x, y, anchor, dx, dy) in [
        (p.xmin, p.ymin, "start", 0.0, 16.0),
        (p.xmax, p.ymin, "end", 0.0, 16.0),
    ] {
        let (a, b) = p.px(x, y);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{}</text>"#,
            a + dx,
            b + dy,
            tick(x)
        );
    }
    for y in [p.ymin, p.ymax] {
        let (a, b) = p.px(p.xmin, y);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            a - 4.0,
            b + 4.0,
            tick(y)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(out: &mut String, x: f64, y: f64, tags: &[Tag]) {
    for (i, t) in tags.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{yy:.2}" width="12" height="12" fill="{}"/>"#,
            tag_color(*t)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{t}</text>"#,
            x + 16.0,
            yy + 10.0
        );
    }
}

const ALL_TAGS: [Tag; 4] = [Tag::A, Tag::B, Tag::XLike, Tag::Undetermined];

/// Meridian profile `(±r, z)` beside the `(r, ρ)` portrait.
pub fn profile(hash: &str, title: &str, rz: &[(f64, f64)], r_rho: &[(f64, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, 900, 460, hash, title);
    let mirrored: Vec<(f64, f64)> = rz.iter().map(|&(r, z)| (-r, z)).collect();
    let shape = Panel::fit(
        70.0,
        40.0,
        340.0,
        360.0,
        rz.iter().chain(mirrored.iter()).copied(),
    )
    .equal_aspect();
    frame(&mut out, &shape, "r", "z");
    polyline(&mut out, &shape, rz, "black", 1.5);
    polyline(&mut out, &shape, &mirrored, "black", 1.5);

    let portrait = Panel::fit(520.0, 40.0, 340.0, 360.0, r_rho.iter().copied());
    frame(&mut out, &portrait, "r", "ρ");
    polyline(&mut out, &portrait, r_rho, tag_color(Tag::A), 1.5);
    out.push_str("</svg>\n");
    out
}

/// One cell per β on a log axis, shaded by tag.
pub fn strip(hash: &str, title: &str, betas: &[f64], tags: &[Tag]) -> String {
    let mut out = String::new();
    header(&mut out, 900, 200, hash, title);
    let logs: Vec<f64> = betas
        .iter()
        .map(|b| b.max(f64::MIN_POSITIVE).log10())
        .collect();
    let p = Panel::fit(70.0, 50.0, 700.0, 60.0, logs.iter().map(|&x| (x, 0.0)));
    let p = Panel {
        ymin: 0.0,
        ymax: 1.0,
        ..p
    };
    let n = betas.len();
    for i in 0..n {
        let left = if i == 0 {
            logs[0]
        } else {
            0.5 * (logs[i - 1] + logs[i])
        };
        let right = if i + 1 == n {
            logs[i]
        } else {
            0.5 * (logs[i] + logs[i + 1])
        };
        let (a, top) = p.px(left, 1.0);
        let (b, _) = p.px(right, 0.0);
        let _ = writeln!(
            out,
            r#"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            (b - a).max(1.0),
            p.h,
            tag_color(tags[i])
        );
    }
    frame(&mut out, &p, "log10 β", "");
    legend(&mut out, 800.0, 50.0, &ALL_TAGS);
    out.push_str("</svg>\n");
    out
}

/// `(h₀, |z₀|)` region map on log axes with the boundary polyline.
pub fn region(
    hash: &str,
    title: &str,
    h0: &[f64],
    z0: &[f64],
    tags: &[Tag],
    boundary: &[(f64, f64)],
) -> String {
    let mut out = String::new();
    header(&mut out, 760, 640, hash, title);
    let lx: Vec<f64> = h0.iter().map(|h| h.log10()).collect();
    let ly: Vec<f64> = z0.iter().map(|z| z.abs().log10()).collect();
    let mut ys = ly.clone();
    ys.sort_by(f64::total_cmp);
    let p = Panel::fit(
        80.0,
        40.0,
        520.0,
        520.0,
        lx.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))),
    );
    let edges = |v: &[f64], i: usize| {
        let n = v.len();
        let left = if i == 0 {
            v[0]
        } else {
            0.5 * (v[i - 1] + v[i])
        };
        let right = if i + 1 == n {
            v[i]
        } else {
            0.5 * (v[i] + v[i + 1])
        };
        (left, right)
    };
    let mut order: Vec<usize> = (0..z0.len()).collect();
    order.sort_by(|&a, &b| ly[a].total_cmp(&ly[b]));
    for (k, &row) in order.iter().enumerate() {
        let (yb, yt) = edges(&ys, k);
        for col in 0..h0.len() {
            let (xl, xr) = edges(&lx, col);
            let (a, top) = p.px(xl, yt);
            let (b, bottom) = p.px(xr, yb);
            let _ = writeln!(
                out,
                r#"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                (b - a).max(1.0),
                (bottom - top).max(1.0),
                tag_color(tags[row * h0.len() + col])
            );
        }
    }
    let line: Vec<(f64, f64)> = boundary
        .iter()
        .map(|&(h, z)| (h.log10(), z.abs().log10()))
        .collect();
    polyline(&mut out, &p, &line, "black", 2.0);
    frame(&mut out, &p, "log10 h₀", "log10 |z₀|");
    legend(&mut out, 630.0, 60.0, &ALL_TAGS);
    out.push_str("</svg>\n");
    out
}
