//! Self-contained SVG figures: Gaussian position heatmaps, trajectory line
//! plots with controller-activation markers, and arm poses.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;

use crate::arm::{ArmConfig, MotorCommand};
use crate::error::{Error, Result};
use crate::pipeline::experiments::ExperimentReport;

/// Heatmap kernel width as a fraction of the bounding-box diagonal.
pub const HEATMAP_SIGMA_FRACTION: f64 = 0.03;
pub const HEATMAP_GRID: usize = 64;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Axis-aligned plotting window in scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Bounds {
    /// Square window around the points with 10% padding. Empty or
    /// degenerate inputs get a unit half-width.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a Vector2<f64>>) -> Self {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if !lo.x.is_finite() {
            return Self::centered(Vector2::zeros(), 1.0);
        }
        let half = 0.5 * (hi - lo).max();
        Self::centered((lo + hi) * 0.5, if half > 0.0 { half * 1.1 } else { 1.0 })
    }

    pub fn centered(center: Vector2<f64>, half_width: f64) -> Self {
        let h = Vector2::repeat(half_width);
        Self {
            min: center - h,
            max: center + h,
        }
    }

    pub fn span(&self) -> Vector2<f64> {
        self.max - self.min
    }
}

fn bbox_diagonal(points: &[Vector2<f64>]) -> f64 {
    let Some(first) = points.first() else { return 0.0 };
    let (lo, hi) = points.iter().fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    (hi - lo).norm()
}

/// 3% of the bounding-box diagonal of the points, or of the unit square
/// when they have no extent.
pub fn default_sigma(points: &[Vector2<f64>]) -> f64 {
    let d = bbox_diagonal(points);
    HEATMAP_SIGMA_FRACTION * if d > 0.0 { d } else { 2f64.sqrt() }
}

/// Summed isotropic Gaussians on a square grid. `cells` is row-major with
/// row 0 at the top (largest y).
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub bounds: Bounds,
    pub grid: usize,
    pub cells: Vec<f64>,
}

impl Heatmap {
    pub fn new(points: &[Vector2<f64>], sigma: f64, grid: usize, bounds: Bounds) -> Result<Self> {
        if grid == 0 {
            return Err(Error::Config("heatmap grid must be at least 1".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!("heatmap sigma must be > 0, got {sigma}")));
        }
        let cell = bounds.span() / grid as f64;
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut cells = vec![0.0; grid * grid];
        for row in 0..grid {
            let y = bounds.max.y - (row as f64 + 0.5) * cell.y;
            for col in 0..grid {
                let x = bounds.min.x + (col as f64 + 0.5) * cell.x;
                cells[row * grid + col] = points
                    .iter()
                    .map(|p| (-((p.x - x).powi(2) + (p.y - y).powi(2)) * inv).exp())
                    .sum();
            }
        }
        Ok(Self { bounds, grid, cells })
    }

    /// Intensities scaled to `[0, 1]`; an all-zero map stays zero.
    pub fn normalized(&self) -> Vec<f64> {
        let top = self.cells.iter().cloned().fold(0.0, f64::max);
        if top > 0.0 {
            self.cells.iter().map(|v| v / top).collect()
        } else {
            self.cells.clone()
        }
    }

    /// (row, column) of the first maximal cell.
    pub fn peak(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.cells.iter().enumerate() {
            if *v > self.cells[best] {
                best = k;
            }
        }
        (best / self.grid, best % self.grid)
    }

    pub fn to_svg(&self, title: &str) -> String {
        let mut svg = header(title);
        let side = (WIDTH - 2.0 * MARGIN) / self.grid as f64;
        let _ = writeln!(svg, r#"<g class="heatmap" shape-rendering="crispEdges">"#);
        for (k, v) in self.normalized().iter().enumerate() {
            let (row, col) = (k / self.grid, k % self.grid);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN + col as f64 * side,
                MARGIN + row as f64 * side,
                side + 0.01,
                side + 0.01,
                colormap(*v)
            );
        }
        svg.push_str("</g>\n");
        frame_box(&mut svg);
        svg.push_str("</svg>\n");
        svg
    }
}

/// Heatmap SVG of the predicted positions, as in a dense rendering of
/// where a trajectory spends its time. `sigma` defaults to
/// [`default_sigma`].
pub fn plot_heatmap(points: &[Vector2<f64>], sigma: Option<f64>, grid: usize, title: &str) -> Result<String> {
    let sigma = sigma.unwrap_or_else(|| default_sigma(points));
    Ok(Heatmap::new(points, sigma, grid, Bounds::around(points))?.to_svg(title))
}

/// Dark blue to yellow ramp through five anchors.
fn colormap(v: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(title: &str) -> String {
    let mut svg = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        MARGIN * 0.6,
        escape(title)
    );
    svg
}

fn frame_box(svg: &mut String) {
    let _ = writeln!(
        svg,
        r#"<rect class="axes" x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
}

/// Maps scene coordinates into the plotting area, y up.
struct Frame(Bounds);

impl Frame {
    fn px(&self, p: &Vector2<f64>) -> (f64, f64) {
        let span = self.0.span();
        let inner = WIDTH - 2.0 * MARGIN;
        (
            MARGIN + (p.x - self.0.min.x) / span.x * inner,
            HEIGHT - MARGIN - (p.y - self.0.min.y) / span.y * inner,
        )
    }

    fn points_attr(&self, points: &[Vector2<f64>]) -> String {
        points
            .iter()
            .map(|p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Style {
    pub color: String,
    pub width: f64,
    pub dashed: bool,
}

/// One labelled path. `markers[t]` puts a plus at step `t`; `highlight`
/// is a half-open step range drawn bold, e.g. a perturbed segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<Vector2<f64>>,
    pub style: Style,
    pub markers: Vec<bool>,
    pub highlight: Option<(usize, usize)>,
}

impl Series {
    /// Solid line in the `k`-th palette colour.
    pub fn new(label: &str, points: Vec<Vector2<f64>>, k: usize) -> Self {
        Self {
            label: label.to_owned(),
            points,
            style: Style {
                color: PALETTE[k % PALETTE.len()].to_owned(),
                width: 1.5,
                dashed: false,
            },
            markers: Vec::new(),
            highlight: None,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.style.dashed = true;
        self
    }

    pub fn with_markers(mut self, markers: Vec<bool>) -> Self {
        self.markers = markers;
        self
    }

    pub fn with_highlight(mut self, from: usize, to: usize) -> Self {
        self.highlight = Some((from, to));
        self
    }
}

pub fn plot_trajectories(series: &[Series], title: &str) -> String {
    let frame = Frame(Bounds::around(series.iter().flat_map(|s| s.points.iter())));
    let mut svg = header(title);
    frame_box(&mut svg);
    for s in series {
        let dash = if s.style.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline class="trace" points="{}" fill="none" stroke="{}" stroke-width="{}"{dash}/>"#,
            frame.points_attr(&s.points),
            s.style.color,
            s.style.width
        );
        if let Some((from, to)) = s.highlight {
            let to = to.min(s.points.len());
            if from + 1 < to {
                let _ = writeln!(
                    svg,
                    r#"<polyline class="highlight" points="{}" fill="none" stroke="{}" stroke-width="{}" stroke-opacity="0.5"/>"#,
                    frame.points_attr(&s.points[from..to]),
                    s.style.color,
                    s.style.width * 3.0
                );
            }
        }
        for (p, _) in s.points.iter().zip(&s.markers).filter(|(_, m)| **m) {
            let (x, y) = frame.px(p);
            let _ = writeln!(
                svg,
                r#"<path class="marker" d="M{:.2},{y:.2}h8M{x:.2},{:.2}v8" stroke="{}" stroke-width="1"/>"#,
                x - 4.0,
                y - 4.0,
                s.style.color
            );
        }
    }
    for (k, s) in series.iter().enumerate() {
        let y = MARGIN + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text></g>"#,
            MARGIN + 8.0,
            MARGIN + 28.0,
            s.style.color,
            MARGIN + 34.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Stick-figure arm at each pose, oldest faintest, with an optional
/// end-effector path.
pub fn plot_arm(arm: &ArmConfig, poses: &[MotorCommand], path: Option<&[Vector2<f64>]>, title: &str) -> String {
    let reach = arm.reach();
    let frame = Frame(Bounds::centered(arm.shoulder, reach * 1.05));
    let mut svg = header(title);
    frame_box(&mut svg);
    if let Some(path) = path {
        let _ = writeln!(
            svg,
            r##"<polyline class="trace" points="{}" fill="none" stroke="#d62728" stroke-width="1.5"/>"##,
            frame.points_attr(path)
        );
    }
    for (k, m) in poses.iter().enumerate() {
        let opacity = (k + 1) as f64 / poses.len() as f64;
        let joints = arm.joint_positions(m);
        let _ = writeln!(
            svg,
            r##"<polyline class="pose" points="{}" fill="none" stroke="#333333" stroke-width="3" stroke-opacity="{opacity:.3}"/>"##,
            frame.points_attr(&joints)
        );
        for j in &joints {
            let (x, y) = frame.px(j);
            let _ = writeln!(svg, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#333333" fill-opacity="{opacity:.3}"/>"##);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// One trajectory figure per condition from the first seed's traces,
/// written as `<name>_<condition index>.svg`.
pub fn write_report_figures(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let Some(&seed) = report.seeds.first() else { return Ok(Vec::new()) };
    let mut written = Vec::new();
    for (c, value) in report.conditions.iter().enumerate() {
        let mut kinds: Vec<&str> = Vec::new();
        let series: Vec<Series> = report
            .traces
            .iter()
            .filter(|t| t.condition == c && t.seed == seed)
            .map(|t| {
                let k = kinds.iter().position(|x| *x == t.kind).unwrap_or_else(|| {
                    kinds.push(&t.kind);
                    kinds.len() - 1
                });
                let s = Series::new(&format!("{} {}", t.kind, t.label), t.points.clone(), k).with_markers(t.markers.clone());
                if t.kind == "goal" {
                    s.dashed()
                } else {
                    s
                }
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let title = format!("{}: {} = {value}", report.name, report.condition_name);
        let path = dir.join(format!("{}_{c}.svg", report.name));
        fs::write(&path, plot_trajectories(&series, &title)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    fn parse(svg: &str) {
        roxmltree::Document::parse(svg).expect("well-formed SVG");
    }

    #[test]
    fn single_point_peaks_at_the_centre_cell() {
        let map = Heatmap::new(&[pt(0.3, -0.2)], 0.05, 21, Bounds::centered(pt(0.3, -0.2), 1.0)).unwrap();
        assert_eq!(map.peak(), (10, 10));
        assert_eq!(map.normalized()[10 * 21 + 10], 1.0);
    }

    #[test]
    fn empty_input_gives_a_zero_image() {
        let map = Heatmap::new(&[], 0.1, 8, Bounds::around(&[])).unwrap();
        assert!(map.cells.iter().all(|v| *v == 0.0));
        assert!(map.normalized().iter().all(|v| *v == 0.0));
        let svg = plot_heatmap(&[], None, 8, "empty").unwrap();
        parse(&svg);
        assert_eq!(svg.matches("<rect x=").count(), 64);
    }

    #[test]
    fn intensities_add_linearly() {
        let b = Bounds::centered(pt(0.0, 0.0), 1.0);
        let one = Heatmap::new(&[pt(0.1, 0.2)], 0.2, 16, b).unwrap();
        let two = Heatmap::new(&[pt(0.1, 0.2), pt(0.1, 0.2)], 0.2, 16, b).unwrap();
        for (a, b) in one.cells.iter().zip(&two.cells) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn default_kernel_width_tracks_the_bounding_box() {
        assert!((default_sigma(&[pt(0.0, 0.0), pt(3.0, 4.0)]) - 0.15).abs() < 1e-15);
        assert!(default_sigma(&[pt(1.0, 1.0)]) > 0.0);
        assert!(Heatmap::new(&[], 0.0, 4, Bounds::around(&[])).is_err());
        assert!(Heatmap::new(&[], 0.1, 0, Bounds::around(&[])).is_err());
    }

    #[test]
    fn empty_trace_list_is_valid_svg_with_axes() {
        let svg = plot_trajectories(&[], "nothing");
        parse(&svg);
        assert!(svg.contains(r#"class="axes""#));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn one_trace_has_one_polyline_with_every_vertex() {
        let points: Vec<_> = (0..60).map(|t| pt(t as f64, (t as f64 * 0.1).sin())).collect();
        let svg = plot_trajectories(&[Series::new("a & <b>", points, 0)], "line");
        parse(&svg);
        assert_eq!(svg.matches(r#"class="trace""#).count(), 1);
        let attr = svg.split(r#"points=""#).nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(attr.split(' ').count(), 60);
    }

    #[test]
    fn one_marker_per_gate_activation() {
        let points: Vec<_> = (0..10).map(|t| pt(t as f64, 0.0)).collect();
        let markers: Vec<bool> = (0..10).map(|t| t % 3 == 0).collect();
        let s = Series::new("gated", points, 1).with_markers(markers).with_highlight(2, 6);
        let svg = plot_trajectories(&[s], "gate");
        parse(&svg);
        assert_eq!(svg.matches(r#"class="marker""#).count(), 4);
        assert_eq!(svg.matches(r#"class="highlight""#).count(), 1);
    }

    #[test]
    fn arm_figure_has_one_polyline_per_pose() {
        let arm = ArmConfig::default();
        let poses = [MotorCommand::zero(), MotorCommand::new(0.5, 0.5, 0.5)];
        let path: Vec<_> = poses.iter().map(|m| arm.forward_kinematics(m)).collect();
        let svg = plot_arm(&arm, &poses, Some(&path), "arm");
        parse(&svg);
        assert_eq!(svg.matches(r#"class="pose""#).count(), 2);
        assert_eq!(svg.matches("<circle").count(), 8);
    }

    #[test]
    fn figures_are_deterministic() {
        let pts: Vec<_> = (0..30).map(|t| pt((t as f64).cos(), (t as f64).sin())).collect();
        assert_eq!(plot_heatmap(&pts, None, 16, "h").unwrap(), plot_heatmap(&pts, None, 16, "h").unwrap());
        let s = [Series::new("x", pts.clone(), 0)];
        assert_eq!(plot_trajectories(&s, "t"), plot_trajectories(&s, "t"));
    }
}
