//! Handwriting trajectories: CSV ingestion, preprocessing, train/test split,
//! a synthetic letter generator, and geometric transforms.
//!
//! Raw files hold one trajectory each with a `t,x,y` (positions) or
//! `t,vx,vy` (pen velocities) header; velocities are integrated on load.
//! The file name up to the first `_` is the class name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation2, Vector2};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seeding::{rng, stream};

pub const DEFAULT_LENGTH: usize = 60;
pub const DEFAULT_JITTER: f64 = 0.05;

/// Variable-length trajectory as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub class: String,
    pub points: Vec<Vector2<f64>>,
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vector2<f64>>,
    pub label: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub class_names: Vec<String>,
    /// Global scale applied during preprocessing, fitted on the training split.
    pub scale: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn p(&self) -> usize {
        self.class_names.len()
    }

    /// Restricts the dataset to its first `classes` classes.
    pub fn with_classes(&self, classes: usize) -> Dataset {
        let keep = |t: &&Trajectory| t.label < classes;
        Dataset {
            train: self.train.iter().filter(keep).cloned().collect(),
            test: self.test.iter().filter(keep).cloned().collect(),
            class_names: self.class_names.iter().take(classes).cloned().collect(),
            scale: self.scale,
            seed: self.seed,
        }
    }

    pub fn test_of_class(&self, label: usize) -> Vec<&Trajectory> {
        self.test.iter().filter(|t| t.label == label).collect()
    }

    pub fn train_of_class(&self, label: usize) -> Vec<&Trajectory> {
        self.train.iter().filter(|t| t.label == label).collect()
    }

    /// Point-wise mean of the training trajectories of one class.
    pub fn class_mean(&self, label: usize) -> Option<Vec<Vector2<f64>>> {
        let members = self.train_of_class(label);
        let first = members.first()?;
        let mut mean = vec![Vector2::zeros(); first.len()];
        for traj in &members {
            for (acc, p) in mean.iter_mut().zip(&traj.points) {
                *acc += p;
            }
        }
        let k = members.len() as f64;
        mean.iter_mut().for_each(|p| *p /= k);
        Some(mean)
    }

    /// Manifest text: class names, counts, preprocessing scale and seed.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "classes = \"{}\"", self.class_names.join(","));
        let _ = writeln!(out, "train_count = {}", self.train.len());
        let _ = writeln!(out, "test_count = {}", self.test.len());
        let _ = writeln!(out, "length = {}", self.train.first().map_or(0, Trajectory::len));
        let _ = writeln!(out, "scale = {:?}", self.scale);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    /// Writes `manifest.toml` and one CSV per trajectory under `train/` and `test/`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut written = Vec::new();
        for (split, trajs) in [("train", &self.train), ("test", &self.test)] {
            let sub = dir.join(split);
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            let mut counters = vec![0usize; self.p()];
            for traj in trajs.iter() {
                let idx = counters[traj.label];
                counters[traj.label] += 1;
                let path = sub.join(format!("{}_{idx:03}.csv", self.class_names[traj.label]));
                fs::write(&path, positions_csv(&traj.points)).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
        let manifest = dir.join("manifest.toml");
        fs::write(&manifest, self.manifest()).map_err(|e| Error::io(&manifest, e))?;
        Ok(written)
    }

    /// Reads a directory written by [`Dataset::save_dir`].
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.toml");
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::Dataset(format!("{}: {e}", manifest_path.display())))?;
        let get = |key: &str| {
            table
                .get(key)
                .ok_or_else(|| Error::Dataset(format!("{}: missing key {key}", manifest_path.display())))
        };
        let class_names: Vec<String> = get("classes")?
            .as_str()
            .ok_or_else(|| Error::Dataset("classes must be a string".into()))?
            .split(',')
            .map(str::to_owned)
            .collect();
        let scale = get("scale")?
            .as_float()
            .ok_or_else(|| Error::Dataset("scale must be a float".into()))?;
        let seed = get("seed")?
            .as_integer()
            .ok_or_else(|| Error::Dataset("seed must be an integer".into()))? as u64;

        let mut splits = Vec::new();
        for split in ["train", "test"] {
            let raw = load_csv_dir(dir.join(split))?;
            let mut trajs = Vec::with_capacity(raw.len());
            for r in raw {
                let label = class_names.iter().position(|c| *c == r.class).ok_or_else(|| {
                    Error::Dataset(format!("class {:?} is not listed in the manifest", r.class))
                })?;
                trajs.push(Trajectory {
                    points: r.points,
                    label,
                });
            }
            trajs.sort_by_key(|t| t.label);
            splits.push(trajs);
        }
        let test = splits.pop().unwrap_or_default();
        let train = splits.pop().unwrap_or_default();
        Ok(Dataset {
            train,
            test,
            class_names,
            scale,
            seed,
        })
    }
}

pub fn positions_csv(points: &[Vector2<f64>]) -> String {
    let mut out = String::from("t,x,y\n");
    for (t, p) in points.iter().enumerate() {
        let _ = writeln!(out, "{t},{},{}", p.x, p.y);
    }
    out
}

fn class_of(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match stem.split_once('_') {
        Some((prefix, _)) => prefix.to_owned(),
        None => stem,
    }
}

/// Parses one trajectory CSV.
pub fn parse_csv(text: &str, path: &Path) -> Result<RawTrajectory> {
    let data_err = |line: usize, message: String| Error::Data {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| data_err(1, "empty file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let velocity = match columns.as_slice() {
        ["t", "x", "y"] => false,
        ["t", "vx", "vy"] => true,
        _ => return Err(data_err(1, format!("unknown header {header:?}, expected t,x,y or t,vx,vy"))),
    };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(data_err(idx + 1, format!("expected 3 fields, found {}", fields.len())));
        }
        let mut vals = [0.0; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .parse::<f64>()
                .map_err(|e| data_err(idx + 1, format!("bad number {f:?}: {e}")))?;
            if !v.is_finite() {
                return Err(data_err(idx + 1, format!("non-finite value {f:?}")));
            }
        }
        rows.push(vals);
    }
    let points = if velocity {
        let mut pos = Vector2::zeros();
        let mut out = Vec::with_capacity(rows.len());
        for (k, row) in rows.iter().enumerate() {
            if k > 0 {
                let prev = rows[k - 1];
                let dt = row[0] - prev[0];
                pos += Vector2::new(prev[1], prev[2]) * dt;
            }
            out.push(pos);
        }
        out
    } else {
        rows.iter().map(|r| Vector2::new(r[1], r[2])).collect()
    };
    Ok(RawTrajectory {
        class: class_of(path),
        points,
        source: Some(path.to_path_buf()),
    })
}

/// Loads every `*.csv` file in a directory, sorted by file name.
pub fn load_csv_dir(dir: impl AsRef<Path>) -> Result<Vec<RawTrajectory>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_csv(&text, p)
        })
        .collect()
}

/// Linear time resampling to exactly `len` points.
pub fn resample(points: &[Vector2<f64>], len: usize) -> Result<Vec<Vector2<f64>>> {
    if points.len() < 2 {
        return Err(Error::Dataset(format!(
            "trajectory needs at least 2 points, has {}",
            points.len()
        )));
    }
    if len < 2 {
        return Err(Error::Dataset("resampling length must be at least 2".into()));
    }
    let last = points.len() - 1;
    Ok((0..len)
        .map(|i| {
            if i == len - 1 {
                return points[last];
            }
            let u = i as f64 * last as f64 / (len - 1) as f64;
            let k = (u.floor() as usize).min(last - 1);
            let frac = u - k as f64;
            points[k] + (points[k + 1] - points[k]) * frac
        })
        .collect())
}

fn translate_to_origin(points: &mut [Vector2<f64>]) {
    if let Some(&first) = points.first() {
        points.iter_mut().for_each(|p| *p -= first);
    }
}

/// Resamples to `len`, moves the first point to the origin and multiplies by
/// `scale`.
pub fn preprocess(raw: &[Vector2<f64>], len: usize, scale: f64) -> Result<Vec<Vector2<f64>>> {
    let mut pts = resample(raw, len)?;
    translate_to_origin(&mut pts);
    pts.iter_mut().for_each(|p| *p *= scale);
    Ok(pts)
}

/// Scale that brings the root-mean-square point norm of the resampled,
/// origin-anchored trajectories to 1.
pub fn fit_scale(raws: &[&[Vector2<f64>]], len: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for raw in raws {
        for p in preprocess(raw, len, 1.0)? {
            sum += p.norm_squared();
            count += 1;
        }
    }
    let rms = (sum / count.max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        Ok(1.0 / rms)
    } else {
        Err(Error::Dataset("cannot fit a scale to degenerate trajectories".into()))
    }
}

/// Seeded per-class split into disjoint train and test sets, preprocessed to
/// `len` points with a scale fitted on the training data.
pub fn split(
    raws: &[RawTrajectory],
    per_class_train: usize,
    per_class_test: usize,
    len: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut by_class: BTreeMap<&str, Vec<&RawTrajectory>> = BTreeMap::new();
    for r in raws {
        by_class.entry(r.class.as_str()).or_default().push(r);
    }
    let mut shuffle = rng(seed, stream::DATA_SPLIT);
    let mut chosen: Vec<(usize, Vec<&RawTrajectory>, Vec<&RawTrajectory>)> = Vec::new();
    let class_names: Vec<String> = by_class.keys().map(|k| (*k).to_owned()).collect();
    for (label, (class, members)) in by_class.into_iter().enumerate() {
        if members.len() < per_class_train + per_class_test {
            return Err(Error::Dataset(format!(
                "class {class:?} has {} trajectories, needs {}",
                members.len(),
                per_class_train + per_class_test
            )));
        }
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.shuffle(&mut shuffle);
        let train = order[..per_class_train].iter().map(|&i| members[i]).collect();
        let test = order[per_class_train..per_class_train + per_class_test]
            .iter()
            .map(|&i| members[i])
            .collect();
        chosen.push((label, train, test));
    }

    let train_raw: Vec<&[Vector2<f64>]> = chosen
        .iter()
        .flat_map(|(_, train, _)| train.iter().map(|r| r.points.as_slice()))
        .collect();
    if train_raw.is_empty() {
        return Err(Error::Dataset("no training trajectories".into()));
    }
    let scale = fit_scale(&train_raw, len)?;

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, tr, te) in chosen {
        for (dst, src) in [(&mut train, tr), (&mut test, te)] {
            for r in src {
                let points = preprocess(&r.points, len, scale).map_err(|e| match &r.source {
                    Some(path) => Error::Dataset(format!("{}: {e}", path.display())),
                    None => e,
                })?;
                dst.push(Trajectory { points, label });
            }
        }
    }
    Ok(Dataset {
        train,
        test,
        class_names,
        scale,
        seed,
    })
}

/// Rotates by `angle` and then scales by `scale` about the first point.
pub fn transform_points(points: &[Vector2<f64>], scale: f64, angle: f64) -> Vec<Vector2<f64>> {
    let Some(&anchor) = points.first() else {
        return Vec::new();
    };
    let rot = Rotation2::new(angle);
    points.iter().map(|p| anchor + rot * (p - anchor) * scale).collect()
}

pub fn transform(traj: &Trajectory, scale: f64, angle: f64) -> Result<Trajectory> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    Ok(Trajectory {
        points: transform_points(&traj.points, scale, angle),
        label: traj.label,
    })
}

/// Letter-like templates, each a chain of anchor points in a unit box that a
/// Catmull-Rom spline passes through.
const TEMPLATES: [(&str, &[(f64, f64)]); 16] = [
    ("a", &[(0.8, 0.7), (0.5, 0.9), (0.15, 0.6), (0.25, 0.15), (0.6, 0.2), (0.8, 0.6), (0.8, 0.9), (0.85, 0.2), (1.0, 0.05)]),
    ("b", &[(0.2, 1.6), (0.2, 0.8), (0.2, 0.0), (0.6, 0.1), (0.75, 0.45), (0.45, 0.7), (0.2, 0.45)]),
    ("c", &[(0.85, 0.8), (0.5, 0.95), (0.15, 0.6), (0.2, 0.2), (0.5, 0.0), (0.9, 0.15)]),
    ("d", &[(0.75, 0.6), (0.4, 0.85), (0.1, 0.45), (0.35, 0.05), (0.75, 0.35), (0.8, 1.6), (0.8, 0.6), (0.85, 0.0)]),
    ("e", &[(0.15, 0.45), (0.8, 0.55), (0.65, 0.95), (0.2, 0.8), (0.1, 0.3), (0.45, 0.0), (0.9, 0.15)]),
    ("g", &[(0.75, 0.75), (0.4, 0.95), (0.15, 0.6), (0.4, 0.35), (0.75, 0.6), (0.75, -0.3), (0.4, -0.6), (0.1, -0.35)]),
    ("h", &[(0.2, 1.6), (0.2, 0.8), (0.2, 0.0), (0.3, 0.5), (0.6, 0.75), (0.8, 0.45), (0.8, 0.0)]),
    ("l", &[(0.1, 0.3), (0.55, 1.0), (0.5, 1.6), (0.3, 1.2), (0.35, 0.4), (0.5, 0.0), (0.9, 0.2)]),
    ("m", &[(0.0, 0.0), (0.1, 0.8), (0.3, 0.9), (0.4, 0.0), (0.55, 0.85), (0.75, 0.85), (0.85, 0.0)]),
    ("n", &[(0.1, 0.9), (0.15, 0.0), (0.35, 0.75), (0.65, 0.9), (0.8, 0.5), (0.85, 0.0)]),
    ("o", &[(0.5, 0.95), (0.15, 0.7), (0.15, 0.2), (0.5, 0.0), (0.85, 0.25), (0.85, 0.7), (0.5, 0.95), (0.3, 1.05)]),
    ("p", &[(0.2, 0.9), (0.2, 0.2), (0.2, -0.7), (0.2, 0.0), (0.25, 0.7), (0.65, 0.9), (0.8, 0.4), (0.35, 0.1)]),
    ("r", &[(0.2, 0.0), (0.2, 0.5), (0.2, 0.9), (0.3, 0.6), (0.55, 0.9), (0.85, 0.8)]),
    ("s", &[(0.85, 0.85), (0.5, 0.95), (0.2, 0.75), (0.5, 0.5), (0.8, 0.25), (0.5, 0.0), (0.1, 0.1)]),
    ("u", &[(0.1, 0.9), (0.15, 0.25), (0.45, 0.0), (0.8, 0.25), (0.8, 0.9), (0.8, 0.3), (0.95, 0.0)]),
    ("z", &[(0.1, 0.9), (0.5, 0.92), (0.9, 0.9), (0.5, 0.45), (0.1, 0.0), (0.5, 0.02), (0.9, 0.0)]),
];

pub const MAX_SYNTH_CLASSES: usize = TEMPLATES.len();

const SAMPLES_PER_SEGMENT: usize = 16;

fn catmull_rom(anchors: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let n = anchors.len();
    let at = |i: isize| anchors[i.clamp(0, n as isize - 1) as usize];
    let mut out = Vec::with_capacity((n - 1) * SAMPLES_PER_SEGMENT + 1);
    for seg in 0..n - 1 {
        let i = seg as isize;
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        for s in 0..SAMPLES_PER_SEGMENT {
            let t = s as f64 / SAMPLES_PER_SEGMENT as f64;
            let (t2, t3) = (t * t, t * t * t);
            let p = (p1 * 2.0
                + (p2 - p0) * t
                + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
                + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
                * 0.5;
            out.push(p);
        }
    }
    out.push(anchors[n - 1]);
    out
}

/// Raw synthetic letters: `per_class` jittered draws of each of the first
/// `classes` templates. `jitter` is the maximum anchor displacement as a
/// fraction of the template size.
pub fn synth_raw(classes: usize, per_class: usize, jitter: f64, seed: u64) -> Result<Vec<RawTrajectory>> {
    if classes == 0 || classes > MAX_SYNTH_CLASSES {
        return Err(Error::Config(format!(
            "synthetic classes must be in 1..={MAX_SYNTH_CLASSES}, got {classes}"
        )));
    }
    if !(0.0..=DEFAULT_JITTER).contains(&jitter) {
        return Err(Error::Config(format!("jitter must be in [0, {DEFAULT_JITTER}], got {jitter}")));
    }
    let mut r = rng(seed, stream::SYNTH);
    let mut out = Vec::with_capacity(classes * per_class);
    for (name, anchors) in TEMPLATES.iter().take(classes) {
        let base: Vec<Vector2<f64>> = anchors.iter().map(|&(x, y)| Vector2::new(x, y)).collect();
        let (lo, hi) = base.iter().fold(
            (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let size = (hi - lo).max();
        let amp = jitter * size;
        for _ in 0..per_class {
            let jittered: Vec<Vector2<f64>> = base
                .iter()
                .map(|p| {
                    if amp > 0.0 {
                        // uniform in a disc, so the displacement never exceeds amp
                        let radius = amp * r.random::<f64>().sqrt();
                        let theta = r.random_range(0.0..std::f64::consts::TAU);
                        p + Vector2::new(theta.cos(), theta.sin()) * radius
                    } else {
                        *p
                    }
                })
                .collect();
            out.push(RawTrajectory {
                class: (*name).to_owned(),
                points: catmull_rom(&jittered),
                source: None,
            });
        }
    }
    Ok(out)
}

/// Synthetic dataset with half of each class in the training split.
pub fn synth_letters(classes: usize, per_class: usize, seed: u64) -> Result<Dataset> {
    synth_letters_with_jitter(classes, per_class, DEFAULT_JITTER, seed)
}

pub fn synth_letters_with_jitter(classes: usize, per_class: usize, jitter: f64, seed: u64) -> Result<Dataset> {
    let raw = synth_raw(classes, per_class, jitter, seed)?;
    let train = per_class / 2;
    split(&raw, train, per_class - train, DEFAULT_LENGTH, seed)
}
