//! Static SVG reports. Layouts depend only on the input, so the same artifact
//! always renders to the same bytes.

use std::fmt::Write;

use specopt_core::function::GraphFunction;
use specopt_core::graph::MetricGraph;
use specopt_core::optimize::ShapeSwitch;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
/// Longest polyline written; denser data is subsampled.
const MAX_POINTS: usize = 2000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("nothing to draw: {0}")]
    EmptyArtifact(&'static str),
}

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, "<!-- specopt {} -->", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps data coordinates into the drawing area.
#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
}

impl Frame {
    fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64, same_scale: bool) -> Self {
        let dx = if xmax > xmin { xmax - xmin } else { 1.0 };
        let dy = if ymax > ymin { ymax - ymin } else { 1.0 };
        let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let (mut sx, mut sy) = (w / dx, h / dy);
        if same_scale {
            sx = sx.min(sy);
            sy = sx;
        }
        // center the data
        let x0 = MARGIN + 0.5 * (w - sx * dx) - sx * xmin;
        let y0 = MARGIN + 0.5 * (h - sy * dy) + sy * ymax;
        Frame { x0, y0, sx, sy }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (self.x0 + self.sx * x, self.y0 - self.sy * y)
    }
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], style: &str) {
    let stride = points.len().div_ceil(MAX_POINTS).max(1);
    let mut coords = String::new();
    let last = points.len().saturating_sub(1);
    for (i, &(x, y)) in points.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        let (px, py) = frame.map(x, y);
        write!(coords, "{px:.2},{py:.2} ").unwrap();
    }
    writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, coords.trim_end()).unwrap();
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64, f64, f64) {
    points.fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), (x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    )
}

fn planar(p: &[f64]) -> [f64; 2] {
    [p[0], p.get(1).copied().unwrap_or(0.0)]
}

/// Positions for every vertex. Known positions come from `hints` or pins;
/// a vertex reached from a placed neighbour is put at its edge length,
/// pointing away from that neighbour's other placed neighbours (or
/// perpendicular to them when they balance out, as for a dangling edge on
/// a straight segment).
pub fn layout(g: &MetricGraph, hints: &[Option<Vec<f64>>]) -> Vec<[f64; 2]> {
    let n = g.vertex_count();
    let mut pos: Vec<Option<[f64; 2]>> = (0..n)
        .map(|v| {
            hints
                .get(v)
                .and_then(|h| h.as_deref())
                .or(g.vertices()[v].pin.as_deref())
                .map(planar)
        })
        .collect();
    if n > 0 && pos.iter().all(|p| p.is_none()) {
        pos[0] = Some([0.0, 0.0]);
    }
    loop {
        let next = (0..n).filter(|&v| pos[v].is_some()).find_map(|v| {
            g.incident_edges(v)
                .iter()
                .map(|&k| (k, g.edges()[k].other(v)))
                .find(|&(_, w)| pos[w].is_none())
                .map(|(k, w)| (v, k, w))
        });
        let Some((v, k, w)) = next else { break };
        let at = pos[v].unwrap();
        let units: Vec<[f64; 2]> = g
            .incident_edges(v)
            .iter()
            .filter_map(|&j| pos[g.edges()[j].other(v)])
            .filter_map(|q| {
                let d = [q[0] - at[0], q[1] - at[1]];
                let r = d[0].hypot(d[1]);
                (r > 1e-12).then(|| [d[0] / r, d[1] / r])
            })
            .collect();
        let mean = units.iter().fold([0.0, 0.0], |m, u| [m[0] + u[0], m[1] + u[1]]);
        let r = mean[0].hypot(mean[1]);
        let dir = if r > 1e-6 {
            [-mean[0] / r, -mean[1] / r]
        } else if let Some(u) = units.first() {
            [-u[1], u[0]]
        } else {
            [1.0, 0.0]
        };
        let l = g.edges()[k].length;
        pos[w] = Some([at[0] + l * dir[0], at[1] + l * dir[1]]);
    }
    pos.into_iter().map(|p| p.unwrap_or([0.0, 0.0])).collect()
}

/// Sketch of a graph: edges labelled with their lengths, pins as filled
/// dots, other Dirichlet vertices as squares, free vertices hollow.
pub fn graph_sketch(g: &MetricGraph, hints: &[Option<Vec<f64>>], title: &str) -> Result<String, RenderError> {
    if g.edge_count() == 0 {
        return Err(RenderError::EmptyArtifact("graph has no edges"));
    }
    let pos = layout(g, hints);
    let (xmin, xmax, ymin, ymax) = bounds(pos.iter().map(|p| (p[0], p[1])));
    let frame = Frame::new(xmin, xmax, ymin, ymax, true);
    let mut out = header(title);
    for e in g.edges() {
        let (ax, ay) = frame.map(pos[e.from][0], pos[e.from][1]);
        let (bx, by) = frame.map(pos[e.to][0], pos[e.to][1]);
        writeln!(
            out,
            r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="black" stroke-width="2"/>"#
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="gray">{:.4}</text>"#,
            0.5 * (ax + bx) + 4.0,
            0.5 * (ay + by) - 4.0,
            e.length
        )
        .unwrap();
    }
    for (v, vx) in g.vertices().iter().enumerate() {
        let (x, y) = frame.map(pos[v][0], pos[v][1]);
        if vx.pin.is_some() {
            writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="6" fill="crimson"/>"#).unwrap();
        } else if vx.dirichlet {
            writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="crimson"/>"#, x - 5.0, y - 5.0).unwrap();
        } else {
            writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="white" stroke="black"/>"#).unwrap();
        }
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            x + 8.0,
            y + 14.0,
            escape(&vx.label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// A function on a graph with its edges laid end to end, one polyline each.
pub fn unrolled_plot(g: &MetricGraph, u: &GraphFunction, samples: usize, title: &str) -> Result<String, RenderError> {
    if g.edge_count() == 0 {
        return Err(RenderError::EmptyArtifact("graph has no edges"));
    }
    let gap = 0.02 * g.total_length();
    let mut curves = Vec::new();
    let mut offset = 0.0;
    for (k, e) in g.edges().iter().enumerate() {
        let values = u.piece(k).sampled(e.length, samples);
        let m = values.len() - 1;
        curves.push(
            values
                .iter()
                .enumerate()
                .map(|(i, v)| (offset + e.length * i as f64 / m as f64, *v))
                .collect::<Vec<_>>(),
        );
        offset += e.length + gap;
    }
    let (xmin, xmax, ymin, ymax) = bounds(curves.iter().flatten().copied());
    let frame = Frame::new(xmin, xmax, ymin.min(0.0), ymax.max(0.0), false);
    let mut out = header(title);
    let (ax, ay) = frame.map(xmin, 0.0);
    let (bx, _) = frame.map(xmax, 0.0);
    writeln!(out, r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{ay:.2}" stroke="lightgray"/>"#).unwrap();
    for c in &curves {
        polyline(&mut out, &frame, c, r#"stroke="steelblue" stroke-width="2""#);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// `V` and `u` over the same abscissa, each scaled to the full height.
pub fn potential_plot(x: &[f64], v: &[f64], u: &[f64], title: &str) -> Result<String, RenderError> {
    if x.is_empty() {
        return Err(RenderError::EmptyArtifact("potential has no nodes"));
    }
    let mut out = header(title);
    let (xmin, xmax) = (x[0], x[x.len() - 1]);
    for (values, name, color, row) in [(v, "V", "crimson", 0), (u, "u", "steelblue", 1)] {
        let (lo, hi) = values.iter().fold((0.0f64, 0.0f64), |(a, b), y| (a.min(*y), b.max(*y)));
        let frame = Frame::new(xmin, xmax, lo, hi, false);
        let points: Vec<(f64, f64)> = x.iter().copied().zip(values.iter().copied()).collect();
        polyline(&mut out, &frame, &points, &format!(r#"stroke="{color}" stroke-width="2""#));
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{name}: max {:.4e}</text>"#,
            MARGIN,
            HEIGHT - 24.0 + 14.0 * row as f64 - 8.0,
            hi
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Energy against budget with the shape switches marked.
pub fn sweep_plot(points: &[(f64, f64)], switches: &[ShapeSwitch], title: &str) -> Result<String, RenderError> {
    if points.is_empty() {
        return Err(RenderError::EmptyArtifact("sweep has no budgets"));
    }
    let (xmin, xmax, ymin, ymax) = bounds(points.iter().copied());
    let frame = Frame::new(xmin, xmax, ymin, ymax, false);
    let mut out = header(title);
    polyline(&mut out, &frame, points, r#"stroke="steelblue" stroke-width="2""#);
    for &(x, y) in points {
        let (px, py) = frame.map(x, y);
        writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="steelblue"/>"#).unwrap();
    }
    for s in switches {
        let (px, top) = frame.map(s.estimate, ymax);
        let (_, bottom) = frame.map(s.estimate, ymin);
        writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{top:.2}" x2="{px:.2}" y2="{bottom:.2}" stroke="crimson" stroke-dasharray="4 3"/>"#
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="crimson">l = {:.4}</text>"#,
            px + 4.0,
            top + 12.0,
            s.estimate
        )
        .unwrap();
    }
    let (lx, ly) = frame.map(xmin, ymin);
    writeln!(
        out,
        r#"<text x="{lx:.2}" y="{:.2}" font-family="sans-serif" font-size="11">budget {xmin:.3} .. {xmax:.3}, energy {ymin:.5} .. {ymax:.5}</text>"#,
        ly + 20.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use specopt_core::graph::GraphBuilder;

    #[test]
    fn dangling_edge_is_drawn_perpendicular() {
        let g = GraphBuilder::new()
            .pinned("a", &[0.0, 0.0])
            .pinned("b", &[1.0, 0.0])
            .vertex("s", false)
            .vertex("n", false)
            .edge("a", "s", 0.5)
            .edge("s", "b", 0.5)
            .edge("s", "n", 1.0)
            .build()
            .unwrap();
        let hints = vec![None, None, Some(vec![0.5, 0.0]), None];
        let pos = layout(&g, &hints);
        assert_eq!(pos[3][0], 0.5);
        assert!((pos[3][1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert_eq!(sweep_plot(&[], &[], "x"), Err(RenderError::EmptyArtifact("sweep has no budgets")));
        assert!(potential_plot(&[], &[], &[], "x").is_err());
    }

    #[test]
    fn potential_plot_has_two_polylines() {
        let x = [0.0, 0.5, 1.0];
        let svg = potential_plot(&x, &[1.0, 2.0, 1.0], &[0.0, 0.1, 0.0], "p").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg, potential_plot(&x, &[1.0, 2.0, 1.0], &[0.0, 0.1, 0.0], "p").unwrap());
    }

    #[test]
    fn free_graph_layout_is_connected_and_deterministic() {
        let g = GraphBuilder::new()
            .vertex("a", true)
            .vertex("b", false)
            .vertex("c", false)
            .edge("a", "b", 1.0)
            .edge("a", "c", 2.0)
            .build()
            .unwrap();
        let pos = layout(&g, &[]);
        let d = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]);
        assert!((d(pos[0], pos[1]) - 1.0).abs() < 1e-12);
        assert!((d(pos[0], pos[2]) - 2.0).abs() < 1e-12);
        assert_eq!(graph_sketch(&g, &[], "t").unwrap(), graph_sketch(&g, &[], "t").unwrap());
    }
}
