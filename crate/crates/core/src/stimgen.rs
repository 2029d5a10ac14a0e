//! Synthetic stimulus protocol: 40 parametric objects × 36 poses rendered on a
//! gray background, plus a Poisson population of position- and
//! luminance-tuned units whose spikes stand in for recorded activity.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::csv::{fmt_float, write_file, CsvBuf, Table};
use crate::error::{Error, Result};
use crate::preprocess::SpikeTrainSet;
use crate::rng::stream_rng;
use crate::stimfeat::PhotometricFeatures;

pub const N_OBJECTS: u32 = 40;
pub const POSES_PER_OBJECT: u32 = 36;
pub const BACKGROUND: u8 = 128;
pub const SIZES_DEG: [f64; 3] = [30.0, 35.0, 40.0];
pub const POSITIONS_DEG: [f64; 3] = [-15.0, 0.0, 15.0];
pub const ROTATIONS_DEG: [f64; 4] = [0.0, 90.0, 45.0, -45.0];

/// Salt for the per-object shape streams, independent of the run seed so an
/// object looks the same in every run.
const SHAPE_SALT: u64 = 0x5eed_0b1e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusParams {
    pub stimulus_id: usize,
    pub object_id: u32,
    pub pose_index: u32,
    pub size_deg: f64,
    pub position_deg: f64,
    pub plane_rotation_deg: f64,
    pub foreground_level: u8,
}

/// Draws the full 1440-stimulus protocol. Size, position, in-plane rotation
/// and foreground gray level are sampled independently per stimulus.
pub fn generate_stimulus_set(seed: u64) -> Vec<StimulusParams> {
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity((N_OBJECTS * POSES_PER_OBJECT) as usize);
    for object_id in 0..N_OBJECTS {
        for pose_index in 0..POSES_PER_OBJECT {
            let size_deg = SIZES_DEG[rng.random_range(0..SIZES_DEG.len())];
            let position_deg = POSITIONS_DEG[rng.random_range(0..POSITIONS_DEG.len())];
            let plane_rotation_deg = ROTATIONS_DEG[rng.random_range(0..ROTATIONS_DEG.len())];
            // uniform over 0..=255 without the background level
            let mut level: u8 = rng.random_range(0..255u8);
            if level >= BACKGROUND {
                level += 1;
            }
            out.push(StimulusParams {
                stimulus_id: out.len(),
                object_id,
                pose_index,
                size_deg,
                position_deg,
                plane_rotation_deg,
                foreground_level: level,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub deg_per_px: f64,
}

impl Default for Canvas {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            deg_per_px: 0.4,
        }
    }
}

impl Canvas {
    /// Azimuth in degrees of a (fractional) column index.
    pub fn column_to_deg(&self, col: f64) -> f64 {
        (col + 0.5 - self.width as f64 / 2.0) * self.deg_per_px
    }

    pub fn deg_to_column(&self, deg: f64) -> f64 {
        deg / self.deg_per_px + self.width as f64 / 2.0 - 0.5
    }
}

/// Grayscale image, row-major, `pixels[i * width + j]` is row `i`, column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusImage {
    pub width: usize,
    pub height: usize,
    pub deg_per_px: f64,
    pub pixels: Vec<u8>,
}

impl StimulusImage {
    pub fn blank(canvas: Canvas) -> Self {
        Self {
            width: canvas.width,
            height: canvas.height,
            deg_per_px: canvas.deg_per_px,
            pixels: vec![BACKGROUND; canvas.width * canvas.height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.pixels[row * self.width + col] = v;
    }

    /// Binary PGM (P5, maxval 255) with an optional comment line.
    pub fn to_pgm(&self, comment: Option<&str>) -> Vec<u8> {
        let mut out = b"P5\n".to_vec();
        if let Some(c) = comment {
            for l in c.lines() {
                out.extend_from_slice(format!("# {l}\n").as_bytes());
            }
        }
        out.extend_from_slice(format!("{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        write_file(path, &self.to_pgm(comment))
    }

    /// Parses a binary PGM with maxval 255. `#` comments are allowed between
    /// header tokens.
    pub fn from_pgm(path: &Path, bytes: &[u8], deg_per_px: f64) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 1,
            message,
        };
        let mut pos = 0;
        let mut line = 1;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                line += (bytes[pos] == b'\n') as usize;
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad(line, "truncated PGM header".into()));
            }
            tokens.push((line, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
        }
        if tokens[0].1 != "P5" {
            return Err(bad(tokens[0].0, format!("expected magic P5, found '{}'", tokens[0].1)));
        }
        let num = |(l, t): &(usize, String)| t.parse::<usize>().map_err(|_| bad(*l, format!("invalid number '{t}'")));
        let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
        if maxval != 255 {
            return Err(bad(tokens[3].0, format!("maxval must be 255, found {maxval}")));
        }
        // a single whitespace byte separates the header from the raster
        let pixels = bytes.get(pos + 1..).unwrap_or(&[]);
        if pixels.len() != width * height {
            return Err(bad(
                tokens[3].0 + 1,
                format!("expected {} pixel bytes, found {}", width * height, pixels.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            deg_per_px,
            pixels: pixels.to_vec(),
        })
    }

    pub fn read_pgm(path: &Path, deg_per_px: f64) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(path, &bytes, deg_per_px)
    }
}

#[derive(Debug, Clone)]
enum Part {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        angle: f64,
    },
    Polygon(Vec<(f64, f64)>),
}

impl Part {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Part::Ellipse { cx, cy, rx, ry, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Part::Polygon(vs) => {
                // even-odd rule
                let mut inside = false;
                let mut j = vs.len() - 1;
                for i in 0..vs.len() {
                    let (xi, yi) = vs[i];
                    let (xj, yj) = vs[j];
                    if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                    j = i;
                }
                inside
            }
        }
    }

    fn max_radius(&self) -> f64 {
        match self {
            Part::Ellipse { cx, cy, rx, ry, .. } => cx.hypot(*cy) + rx.max(*ry),
            Part::Polygon(vs) => vs.iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max),
        }
    }

    fn scale(&mut self, f: f64) {
        match self {
            Part::Ellipse { cx, cy, rx, ry, .. } => {
                *cx *= f;
                *cy *= f;
                *rx *= f;
                *ry *= f;
            }
            Part::Polygon(vs) => vs.iter_mut().for_each(|v| *v = (v.0 * f, v.1 * f)),
        }
    }
}

/// Silhouette of one object in normalized coordinates (fits the unit disc).
#[derive(Debug, Clone)]
pub struct ObjectShape {
    parts: Vec<Part>,
}

impl ObjectShape {
    pub fn for_object(object_id: u32) -> Self {
        let mut rng = stream_rng(SHAPE_SALT, object_id as u64);
        let mut parts = Vec::new();
        if object_id.is_multiple_of(2) {
            let nv = rng.random_range(3..=8usize);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let vs = (0..nv)
                .map(|k| {
                    let a = phase + std::f64::consts::TAU * (k as f64 + rng.random_range(-0.2..0.2)) / nv as f64;
                    let r = rng.random_range(0.55..1.0);
                    (r * a.cos(), r * a.sin())
                })
                .collect();
            parts.push(Part::Polygon(vs));
        } else {
            parts.push(Part::Ellipse {
                cx: 0.0,
                cy: 0.0,
                rx: rng.random_range(0.6..1.0),
                ry: rng.random_range(0.35..0.9),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            });
        }
        for _ in 0..rng.random_range(0..=2usize) {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let d = rng.random_range(0.4..0.7);
            parts.push(Part::Ellipse {
                cx: d * a.cos(),
                cy: d * a.sin(),
                rx: rng.random_range(0.15..0.35),
                ry: rng.random_range(0.1..0.25),
                angle: a,
            });
        }
        let r = parts.iter().map(Part::max_radius).fold(0.0, f64::max);
        parts.iter_mut().for_each(|p| p.scale(1.0 / r));
        Self { parts }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.parts.iter().any(|p| p.contains(x, y))
    }
}

/// Pose as an anisotropic squash plus a small in-plane jitter: the four
/// main views are frontal, lateral, top and 45° azimuth/elevation.
fn pose_transform(object_id: u32, pose_index: u32) -> (f64, f64, f64) {
    const VIEWS: [(f64, f64); 4] = [(1.0, 1.0), (0.6, 1.0), (1.0, 0.7), (0.8, 0.85)];
    let mut rng = stream_rng(SHAPE_SALT ^ 0xa5a5, (object_id as u64) << 8 | pose_index as u64);
    let (sx, sy) = VIEWS[(pose_index % 4) as usize];
    let sx = (sx + rng.random_range(-0.05..0.05)).min(1.0);
    let sy = (sy + rng.random_range(-0.05..0.05)).min(1.0);
    let jitter = rng.random_range(-15.0f64..15.0).to_radians();
    (sx, sy, jitter)
}

/// Rasterizes one stimulus. Pixels whose centers fall inside the silhouette
/// take the foreground level; everything else stays at 128.
pub fn render(p: &StimulusParams, canvas: Canvas) -> Result<StimulusImage> {
    let half_w = canvas.width as f64 * canvas.deg_per_px / 2.0;
    let half_h = canvas.height as f64 * canvas.deg_per_px / 2.0;
    let radius = p.size_deg / 2.0;
    if p.position_deg.abs() + radius > half_w || radius > half_h {
        return Err(Error::Clipped {
            object_id: p.object_id,
            pose_index: p.pose_index,
        });
    }
    let shape = ObjectShape::for_object(p.object_id);
    let (sx, sy, jitter) = pose_transform(p.object_id, p.pose_index);
    let theta = p.plane_rotation_deg.to_radians() + jitter;
    let (s, c) = theta.sin_cos();

    let mut img = StimulusImage::blank(canvas);
    let dpp = canvas.deg_per_px;
    let col_lo = (((p.position_deg - radius) + half_w) / dpp).floor().max(0.0) as usize;
    let col_hi = ((((p.position_deg + radius) + half_w) / dpp).ceil() as usize).min(canvas.width);
    let row_lo = ((half_h - radius) / dpp).floor().max(0.0) as usize;
    let row_hi = (((half_h + radius) / dpp).ceil() as usize).min(canvas.height);
    for i in row_lo..row_hi {
        let y = half_h - (i as f64 + 0.5) * dpp;
        for j in col_lo..col_hi {
            let x = (j as f64 + 0.5) * dpp - half_w - p.position_deg;
            // world -> normalized: undo rotation, squash and scale
            let u = (c * x + s * y) / (radius * sx);
            let v = (-s * x + c * y) / (radius * sy);
            if shape.contains(u, v) {
                img.set(i, j, p.foreground_level);
            }
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUnit {
    pub rf_center_deg: f64,
    pub rf_sigma_deg: f64,
    pub luminance_gain: f64,
    /// spikes/s
    pub baseline_rate: f64,
    /// spikes/s
    pub peak_gain: f64,
    pub latency_ms: f64,
}

impl SyntheticUnit {
    /// Firing rate in spikes/s, before clamping at zero.
    pub fn raw_rate(&self, drive: &StimulusDrive) -> f64 {
        let dx = drive.azimuth_deg - self.rf_center_deg;
        let rf = (-(dx * dx) / (2.0 * self.rf_sigma_deg * self.rf_sigma_deg)).exp();
        self.baseline_rate + self.peak_gain * rf * (1.0 + self.luminance_gain * drive.luminance)
    }
}

/// Ranges the unit population is drawn from (uniform within each range).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitPopulation {
    pub rf_center_deg: (f64, f64),
    pub rf_sigma_deg: (f64, f64),
    pub luminance_gain: (f64, f64),
    pub baseline_rate: (f64, f64),
    pub peak_gain: (f64, f64),
    pub latency_ms: (f64, f64),
}

impl Default for UnitPopulation {
    fn default() -> Self {
        Self {
            rf_center_deg: (-30.0, 30.0),
            rf_sigma_deg: (20.0, 40.0),
            luminance_gain: (2.0, 4.0),
            baseline_rate: (0.5, 2.0),
            peak_gain: (10.0, 40.0),
            latency_ms: (30.0, 60.0),
        }
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn sample_units(n: usize, seed: u64, pop: &UnitPopulation) -> Result<Vec<SyntheticUnit>> {
    if pop.rf_sigma_deg.0 <= 0.0 || pop.baseline_rate.0 < 0.0 || pop.peak_gain.0 < 0.0 {
        return Err(Error::InvalidParameter(
            "rf_sigma must be positive; baseline and peak gain nonnegative".into(),
        ));
    }
    let mut rng = stream_rng(seed, 1);
    Ok((0..n)
        .map(|_| SyntheticUnit {
            rf_center_deg: draw(&mut rng, pop.rf_center_deg),
            rf_sigma_deg: draw(&mut rng, pop.rf_sigma_deg),
            luminance_gain: draw(&mut rng, pop.luminance_gain),
            baseline_rate: draw(&mut rng, pop.baseline_rate),
            peak_gain: draw(&mut rng, pop.peak_gain),
            latency_ms: draw(&mut rng, pop.latency_ms),
        })
        .collect())
}

/// What a unit "sees" of a stimulus: horizontal position of the luminance
/// center of mass and normalized total luminosity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusDrive {
    pub azimuth_deg: f64,
    pub luminance: f64,
}

impl StimulusDrive {
    pub fn from_features(f: &PhotometricFeatures, canvas: Canvas, luminance_scale: f64) -> Self {
        Self {
            azimuth_deg: canvas.column_to_deg(f.com_x),
            luminance: f.l_tot / luminance_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    /// Stimulus-driven response window (the presentation time).
    pub window_ms: f64,
    /// Spike times are simulated on `[0, horizon_ms)`.
    pub horizon_ms: f64,
    /// `L_tot` value mapped to unit normalized luminance.
    pub luminance_scale: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        Self {
            window_ms: 150.0,
            horizon_ms: 400.0,
            luminance_scale: 7.5e5,
        }
    }
}

/// Spike counts indexed `(stimulus, unit, repetition)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeCounts {
    pub n_stimuli: usize,
    pub n_units: usize,
    pub repetitions: usize,
    pub counts: Vec<u32>,
    /// (stimulus, unit) pairs whose computed rate was negative and clamped to 0.
    pub clamped: usize,
}

impl SpikeCounts {
    pub fn get(&self, s: usize, u: usize, r: usize) -> u32 {
        self.counts[(s * self.n_units + u) * self.repetitions + r]
    }
}

fn clamped_rate(unit: &SyntheticUnit, drive: &StimulusDrive) -> (f64, bool) {
    let r = unit.raw_rate(drive);
    if r < 0.0 {
        (0.0, true)
    } else {
        (r, false)
    }
}

fn poisson(rng: &mut impl Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive finite lambda").sample(rng) as u32
}

/// Counts drawn for one stimulus in (unit, repetition) order from the
/// stimulus's own stream, so results are independent of scheduling.
fn stimulus_counts(
    s: usize,
    drive: &StimulusDrive,
    units: &[SyntheticUnit],
    reps: usize,
    seed: u64,
    model: &ResponseModel,
) -> (Vec<u32>, usize) {
    let mut rng = stream_rng(seed, 2 * s as u64 + 16);
    let mut counts = Vec::with_capacity(units.len() * reps);
    let mut clamped = 0;
    for unit in units {
        let (rate, c) = clamped_rate(unit, drive);
        clamped += c as usize;
        let lambda = rate * model.window_ms / 1000.0;
        for _ in 0..reps {
            counts.push(poisson(&mut rng, lambda));
        }
    }
    (counts, clamped)
}

pub fn simulate_responses(
    drives: &[StimulusDrive],
    units: &[SyntheticUnit],
    repetitions: usize,
    seed: u64,
    model: &ResponseModel,
) -> Result<SpikeCounts> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    let per: Vec<(Vec<u32>, usize)> = drives
        .par_iter()
        .enumerate()
        .map(|(s, d)| stimulus_counts(s, d, units, repetitions, seed, model))
        .collect();
    let mut counts = Vec::with_capacity(drives.len() * units.len() * repetitions);
    let mut clamped = 0;
    for (c, k) in per {
        counts.extend(c);
        clamped += k;
    }
    Ok(SpikeCounts {
        n_stimuli: drives.len(),
        n_units: units.len(),
        repetitions,
        counts,
        clamped,
    })
}

/// Simulated spike times at 0.1 ms resolution. Within each unit's response
/// window `[latency, latency + window)` the spike count equals the
/// corresponding [`simulate_responses`] count; outside it the unit fires at
/// its baseline rate.
pub fn simulate_spike_trains(
    drives: &[StimulusDrive],
    units: &[SyntheticUnit],
    repetitions: usize,
    seed: u64,
    model: &ResponseModel,
    stimulus_ids: Vec<String>,
    unit_ids: Vec<String>,
) -> Result<(SpikeTrainSet, usize)> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    let window_ticks = (model.window_ms * 10.0).round() as u32;
    let horizon_ticks = (model.horizon_ms * 10.0).round() as u32;
    if units
        .iter()
        .any(|u| (u.latency_ms * 10.0).round() as u32 + window_ticks > horizon_ticks)
    {
        return Err(Error::InvalidParameter(
            "latency + window exceeds the simulation horizon".into(),
        ));
    }
    let per: Vec<(Vec<Vec<f64>>, usize)> = drives
        .par_iter()
        .enumerate()
        .map(|(s, d)| {
            let (counts, clamped) = stimulus_counts(s, d, units, repetitions, seed, model);
            let mut rng = stream_rng(seed, 2 * s as u64 + 17);
            let mut trials = Vec::with_capacity(counts.len());
            for (u, unit) in units.iter().enumerate() {
                let lat = (unit.latency_ms * 10.0).round() as u32;
                let bg_lambda = unit.baseline_rate * (horizon_ticks - window_ticks) as f64 / 10_000.0;
                for r in 0..repetitions {
                    let n_in = counts[u * repetitions + r];
                    let n_bg = poisson(&mut rng, bg_lambda);
                    let mut ticks: Vec<u32> = Vec::with_capacity((n_in + n_bg) as usize);
                    for _ in 0..n_in {
                        ticks.push(lat + rng.random_range(0..window_ticks));
                    }
                    for _ in 0..n_bg {
                        let t = rng.random_range(0..horizon_ticks - window_ticks);
                        ticks.push(if t < lat { t } else { t + window_ticks });
                    }
                    ticks.sort_unstable();
                    trials.push(ticks.into_iter().map(|t| t as f64 / 10.0).collect());
                }
            }
            (trials, clamped)
        })
        .collect();
    let mut clamped = 0;
    let mut all = Vec::with_capacity(drives.len() * units.len() * repetitions);
    for (t, c) in per {
        all.extend(t);
        clamped += c;
    }
    let set = SpikeTrainSet::from_uniform_trials(stimulus_ids, unit_ids, repetitions, all, model.window_ms)?;
    Ok((set, clamped))
}

pub const MANIFEST_HEADER: [&str; 7] = [
    "stimulus_id",
    "object_id",
    "pose",
    "size_deg",
    "position_deg",
    "rotation_deg",
    "foreground_level",
];

pub fn write_manifest(path: &Path, stimuli: &[StimulusParams], comment: Option<&str>) -> Result<()> {
    let mut out = CsvBuf::new(comment, &MANIFEST_HEADER);
    for p in stimuli {
        out.row([
            p.stimulus_id.to_string(),
            p.object_id.to_string(),
            p.pose_index.to_string(),
            fmt_float(p.size_deg),
            fmt_float(p.position_deg),
            fmt_float(p.plane_rotation_deg),
            p.foreground_level.to_string(),
        ]);
    }
    out.write(path)
}

pub fn read_manifest(path: &Path) -> Result<Vec<StimulusParams>> {
    let t = Table::read(path)?;
    t.expect_header(&MANIFEST_HEADER)?;
    (0..t.rows.len())
        .map(|r| {
            Ok(StimulusParams {
                stimulus_id: t.field(r, 0)?,
                object_id: t.field(r, 1)?,
                pose_index: t.field(r, 2)?,
                size_deg: t.finite(r, 3)?,
                position_deg: t.finite(r, 4)?,
                plane_rotation_deg: t.finite(r, 5)?,
                foreground_level: t.field(r, 6)?,
            })
        })
        .collect()
}

pub const UNITS_HEADER: [&str; 7] = [
    "unit_id",
    "rf_center_deg",
    "rf_sigma_deg",
    "luminance_gain",
    "baseline_rate",
    "peak_gain",
    "latency_ms",
];

pub fn write_units(path: &Path, ids: &[String], units: &[SyntheticUnit], comment: Option<&str>) -> Result<()> {
    let mut out = CsvBuf::new(comment, &UNITS_HEADER);
    for (id, u) in ids.iter().zip(units) {
        out.row([
            id.clone(),
            fmt_float(u.rf_center_deg),
            fmt_float(u.rf_sigma_deg),
            fmt_float(u.luminance_gain),
            fmt_float(u.baseline_rate),
            fmt_float(u.peak_gain),
            fmt_float(u.latency_ms),
        ]);
    }
    out.write(path)
}
