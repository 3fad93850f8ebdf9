//! Synthetic ground truth and corrupted detections.
//!
//! Objects move with constant velocity, optionally turning at a fixed rate or
//! changing velocity at scripted frames. Detections are ground-truth boxes
//! with Gaussian noise, random dropout, scripted occlusions (object absent),
//! weak windows (low score, partially hidden box) and uniform clutter. 2D
//! scenarios may include camera jolts that shift the whole image vertically.
//! Everything is drawn from one seeded ChaCha stream, so a spec and a seed
//! always give the same output.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{FrameDetections, TrackRecord};
use crate::model::{
    normalize_heading, BoundingBox, Box2D, Box3D, Camera, Detection, Embedding, Mode, ObjectClass, DEFAULT_EMBEDDING_DIM,
};

fn default_sequence() -> String {
    "sim".to_string()
}

fn default_tp_score() -> [f64; 2] {
    [0.7, 1.0]
}

fn default_fp_score() -> [f64; 2] {
    [0.1, 0.6]
}

fn default_shrink() -> f64 {
    0.7
}

fn default_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

/// A velocity change: from `frame` on the object moves with `velocity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Maneuver {
    pub frame: u64,
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u64,
    pub class: ObjectClass,
    /// First frame the object exists.
    #[serde(default)]
    pub start: u64,
    /// Frame the object disappears; never when absent.
    #[serde(default)]
    pub end: Option<u64>,
    /// Box at `start`: `[cx, cy, w, h]` or `[cx, cy, cz, h, w, l, theta]`.
    pub bbox: Vec<f64>,
    /// Per-frame center velocity: `[vx, vy]` or `[vx, vy, vz]`.
    pub velocity: Vec<f64>,
    /// Rotation of the velocity per frame in the x-y plane, radians.
    #[serde(default)]
    pub turn_rate: f64,
    #[serde(default)]
    pub maneuvers: Vec<Maneuver>,
}

/// Objects placed uniformly in the scenario area with uniformly random
/// heading and speed. Ids continue after the largest scripted id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomObjects {
    pub count: usize,
    pub class: ObjectClass,
    /// Speed range per frame.
    pub speed: [f64; 2],
    /// Standard deviation of a per-object constant turn rate.
    #[serde(default)]
    pub turn_rate_std: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub center_std: f64,
    pub size_std: f64,
    pub heading_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub object: u64,
    pub start: u64,
    pub length: u64,
}

impl Window {
    fn covers(&self, object: u64, frame: u64) -> bool {
        self.object == object && frame >= self.start && frame < self.start + self.length
    }
}

/// Frames in which an object is detected with a low score and a box whose
/// width (2D) or length (3D) is scaled by `shrink`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakWindow {
    pub object: u64,
    pub start: u64,
    pub length: u64,
    pub score: f64,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
}

/// Vertical image shift in 2D, applied to ground truth and detections alike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jolt {
    pub start: u64,
    pub length: u64,
    pub dy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Per-component Gaussian perturbation of the object anchor before
    /// renormalization.
    #[serde(default)]
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub mode: Mode,
    #[serde(default = "default_sequence")]
    pub sequence_id: String,
    pub frames: u64,
    /// Camera of a 2D scenario; front when absent.
    #[serde(default)]
    pub camera: Option<Camera>,
    /// `[x_min, x_max, y_min, y_max]` of the image (2D) or ground region (3D)
    /// used for clutter and random objects.
    pub area: [f64; 4],
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub random_objects: Vec<RandomObjects>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub occlusions: Vec<Window>,
    #[serde(default)]
    pub weak_windows: Vec<WeakWindow>,
    #[serde(default)]
    pub jolts: Vec<Jolt>,
    /// Expected false positives per frame.
    #[serde(default)]
    pub fp_rate: f64,
    /// Class of clutter detections.
    #[serde(default)]
    pub fp_class: Option<ObjectClass>,
    #[serde(default = "default_tp_score")]
    pub tp_score: [f64; 2],
    #[serde(default = "default_fp_score")]
    pub fp_score: [f64; 2],
    #[serde(default)]
    pub embedding: Option<EmbeddingSpec>,
    #[serde(default)]
    pub seed: u64,
}

/// Typical box size of a class: `[w, h]` in pixels or `[h, w, l]` in meters.
pub fn class_size(mode: Mode, class: ObjectClass) -> Vec<f64> {
    match (mode, class) {
        (Mode::D2, ObjectClass::Vehicle) => vec![160.0, 110.0],
        (Mode::D2, ObjectClass::Pedestrian) => vec![40.0, 100.0],
        (Mode::D2, ObjectClass::Cyclist) => vec![60.0, 110.0],
        (Mode::D3, ObjectClass::Vehicle) => vec![1.6, 2.0, 4.5],
        (Mode::D3, ObjectClass::Pedestrian) => vec![1.75, 0.6, 0.8],
        (Mode::D3, ObjectClass::Cyclist) => vec![1.7, 0.7, 1.8],
    }
}

fn invalid(msg: String) -> Error {
    Error::Config(msg)
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(0.0..=1.0).contains(&r[0]) || !(0.0..=1.0).contains(&r[1]) || r[0] > r[1] {
        return Err(invalid(format!("{name} must be an ordered range within [0, 1]")));
    }
    Ok(())
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(invalid(format!("{name} must be finite and non-negative")));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("at '{}': {}", e.path(), e.inner())))?;
        spec.validate()?;
        Ok(spec)
    }

    fn box_len(&self) -> usize {
        match self.mode {
            Mode::D2 => 4,
            Mode::D3 => 7,
        }
    }

    fn vel_len(&self) -> usize {
        match self.mode {
            Mode::D2 => 2,
            Mode::D3 => 3,
        }
    }

    pub fn camera_or_default(&self) -> Option<Camera> {
        match self.mode {
            Mode::D2 => Some(self.camera.unwrap_or(Camera::Front)),
            Mode::D3 => None,
        }
    }

    /// Ids of all objects, scripted first.
    pub fn object_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.objects.iter().map(|o| o.id).collect();
        let mut next = ids.iter().max().map_or(1, |m| m + 1);
        for r in &self.random_objects {
            for _ in 0..r.count {
                ids.push(next);
                next += 1;
            }
        }
        ids
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(invalid("frames must be positive".into()));
        }
        if self.mode == Mode::D3 && self.camera.is_some() {
            return Err(invalid("a 3D scenario takes no camera".into()));
        }
        if self.mode == Mode::D3 && !self.jolts.is_empty() {
            return Err(invalid("camera jolts only exist in 2D".into()));
        }
        let [x0, x1, y0, y1] = self.area;
        if !(x0 < x1 && y0 < y1) || self.area.iter().any(|v| !v.is_finite()) {
            return Err(invalid("area must be [x_min, x_max, y_min, y_max] with min < max".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(invalid("dropout must be a probability".into()));
        }
        nonneg("fp_rate", self.fp_rate)?;
        nonneg("noise.center_std", self.noise.center_std)?;
        nonneg("noise.size_std", self.noise.size_std)?;
        nonneg("noise.heading_std", self.noise.heading_std)?;
        check_range("tp_score", self.tp_score)?;
        check_range("fp_score", self.fp_score)?;
        let mut ids = HashSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return Err(invalid(format!("object id {} repeated", o.id)));
            }
            if o.bbox.len() != self.box_len() || o.velocity.len() != self.vel_len() {
                return Err(invalid(format!(
                    "object {} needs a {}-value box and a {}-value velocity",
                    o.id,
                    self.box_len(),
                    self.vel_len()
                )));
            }
            if o.maneuvers.iter().any(|m| m.velocity.len() != self.vel_len()) {
                return Err(invalid(format!("object {} has a maneuver of the wrong dimension", o.id)));
            }
            if o.bbox.iter().chain(&o.velocity).any(|v| !v.is_finite()) || !o.turn_rate.is_finite() {
                return Err(invalid(format!("object {} has non-finite values", o.id)));
            }
            if o.end.is_some_and(|e| e <= o.start) {
                return Err(invalid(format!("object {} ends before it starts", o.id)));
            }
            object_box(self.mode, &o.bbox, 0.0)?;
        }
        for r in &self.random_objects {
            if !(r.speed[0] >= 0.0 && r.speed[0] <= r.speed[1] && r.speed[1].is_finite()) {
                return Err(invalid("random object speed must be an ordered non-negative range".into()));
            }
            nonneg("turn_rate_std", r.turn_rate_std)?;
        }
        let all: HashSet<u64> = self.object_ids().into_iter().collect();
        let windows = self
            .occlusions
            .iter()
            .map(|w| w.object)
            .chain(self.weak_windows.iter().map(|w| w.object));
        for id in windows {
            if !all.contains(&id) {
                return Err(invalid(format!("window refers to unknown object {id}")));
            }
        }
        for w in &self.weak_windows {
            if !(0.0..=1.0).contains(&w.score) || !(w.shrink > 0.0 && w.shrink <= 1.0) {
                return Err(invalid(format!("weak window of object {} needs score in [0, 1] and shrink in (0, 1]", w.object)));
            }
        }
        if self.jolts.iter().any(|j| !j.dy.is_finite()) {
            return Err(invalid("jolt offsets must be finite".into()));
        }
        if let Some(e) = &self.embedding {
            if e.dim == 0 {
                return Err(invalid("embedding dim must be positive".into()));
            }
            nonneg("embedding.noise_std", e.noise_std)?;
        }
        Ok(())
    }
}

/// Ground truth and detections of one simulated stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub mode: Mode,
    /// Ground-truth boxes as track records (score 1).
    pub ground_truth: Vec<TrackRecord>,
    /// One entry per frame, including frames without detections.
    pub detections: Vec<FrameDetections>,
}

#[derive(Debug, Clone)]
struct Mover {
    id: u64,
    class: ObjectClass,
    start: u64,
    end: Option<u64>,
    /// Box values in file order; the center is `pos[..2 or 3]`.
    bbox: Vec<f64>,
    velocity: Vec<f64>,
    turn_rate: f64,
    maneuvers: Vec<Maneuver>,
    anchor: Option<Vec<f64>>,
}

impl Mover {
    fn alive(&self, f: u64) -> bool {
        f >= self.start && self.end.is_none_or(|e| f < e)
    }

    fn advance(&mut self, frame: u64, mode: Mode) {
        if let Some(m) = self.maneuvers.iter().rev().find(|m| m.frame == frame) {
            self.velocity = m.velocity.clone();
        }
        for (p, v) in self.bbox.iter_mut().zip(&self.velocity) {
            *p += v;
        }
        if self.turn_rate != 0.0 {
            let (s, c) = self.turn_rate.sin_cos();
            let (vx, vy) = (self.velocity[0], self.velocity[1]);
            self.velocity[0] = c * vx - s * vy;
            self.velocity[1] = s * vx + c * vy;
        }
        if mode == Mode::D3 {
            let (vx, vy) = (self.velocity[0], self.velocity[1]);
            if vx.hypot(vy) > 1e-9 {
                self.bbox[6] = vy.atan2(vx);
            }
        }
    }
}

fn object_box(mode: Mode, v: &[f64], dy: f64) -> Result<BoundingBox> {
    Ok(match mode {
        Mode::D2 => BoundingBox::D2(Box2D::new(v[0], v[1] + dy, v[2], v[3])?),
        Mode::D3 => BoundingBox::D3(Box3D::new(v[0], v[1], v[2], v[3], v[4], v[5], normalize_heading(v[6])?)?),
    })
}

fn gaussian(rng: &mut impl Rng, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * std
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn perturbed_embedding(rng: &mut impl Rng, anchor: &[f64], std: f64) -> Result<Embedding> {
    Embedding::normalized(anchor.iter().map(|a| a + gaussian(rng, std)).collect())
}

fn random_movers(spec: &ScenarioSpec, rng: &mut ChaCha8Rng, first_id: u64) -> Vec<Mover> {
    let [x0, x1, y0, y1] = spec.area;
    let mut id = first_id;
    let mut out = Vec::new();
    for r in &spec.random_objects {
        let size = class_size(spec.mode, r.class);
        for _ in 0..r.count {
            let x = uniform(rng, [x0, x1]);
            let y = uniform(rng, [y0, y1]);
            let dir = uniform(rng, [-std::f64::consts::PI, std::f64::consts::PI]);
            let speed = uniform(rng, r.speed);
            let turn_rate = gaussian(rng, r.turn_rate_std);
            let (vx, vy) = (speed * dir.cos(), speed * dir.sin());
            let (bbox, velocity) = match spec.mode {
                Mode::D2 => (vec![x, y, size[0], size[1]], vec![vx, vy]),
                Mode::D3 => (vec![x, y, size[0] / 2.0, size[0], size[1], size[2], dir], vec![vx, vy, 0.0]),
            };
            out.push(Mover {
                id,
                class: r.class,
                start: 0,
                end: None,
                bbox,
                velocity,
                turn_rate,
                maneuvers: Vec::new(),
                anchor: None,
            });
            id += 1;
        }
    }
    out
}

/// Generates ground truth and detections.
pub fn generate(spec: &ScenarioSpec) -> Result<Simulation> {
    spec.validate()?;
    let mode = spec.mode;
    let camera = spec.camera_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut movers: Vec<Mover> = spec
        .objects
        .iter()
        .map(|o| Mover {
            id: o.id,
            class: o.class,
            start: o.start,
            end: o.end,
            bbox: o.bbox.clone(),
            velocity: o.velocity.clone(),
            turn_rate: o.turn_rate,
            maneuvers: o.maneuvers.clone(),
            anchor: None,
        })
        .collect();
    let first_random = movers.iter().map(|m| m.id).max().map_or(1, |m| m + 1);
    movers.extend(random_movers(spec, &mut rng, first_random));
    if let Some(e) = &spec.embedding {
        for m in &mut movers {
            m.anchor = Some(random_unit(&mut rng, e.dim));
        }
    }

    let fp_class = spec
        .fp_class
        .or_else(|| movers.first().map(|m| m.class))
        .unwrap_or(ObjectClass::Pedestrian);
    let fp_size = class_size(mode, fp_class);
    let fp_whole = spec.fp_rate.floor() as usize;
    let fp_frac = spec.fp_rate - spec.fp_rate.floor();

    let mut ground_truth = Vec::new();
    let mut detections = Vec::with_capacity(spec.frames as usize);
    for f in 0..spec.frames {
        let dy: f64 = spec
            .jolts
            .iter()
            .filter(|j| f >= j.start && f < j.start + j.length)
            .map(|j| j.dy)
            .sum();
        let mut dets = Vec::new();
        for m in &movers {
            if !m.alive(f) {
                continue;
            }
            ground_truth.push(TrackRecord {
                sequence_id: spec.sequence_id.clone(),
                frame: f,
                camera,
                track_id: m.id,
                class: m.class,
                bbox: object_box(mode, &m.bbox, dy)?,
                score: 1.0,
            });
            if spec.occlusions.iter().any(|w| w.covers(m.id, f)) {
                continue;
            }
            if rng.random::<f64>() < spec.dropout {
                continue;
            }
            let mut v = m.bbox.clone();
            let n = spec.noise;
            match mode {
                Mode::D2 => {
                    v[0] += gaussian(&mut rng, n.center_std);
                    v[1] += gaussian(&mut rng, n.center_std);
                    v[2] = (v[2] + gaussian(&mut rng, n.size_std)).max(1.0);
                    v[3] = (v[3] + gaussian(&mut rng, n.size_std)).max(1.0);
                }
                Mode::D3 => {
                    for c in &mut v[..3] {
                        *c += gaussian(&mut rng, n.center_std);
                    }
                    for s in &mut v[3..6] {
                        *s = (*s + gaussian(&mut rng, n.size_std)).max(0.05);
                    }
                    v[6] += gaussian(&mut rng, n.heading_std);
                }
            }
            let mut score = uniform(&mut rng, spec.tp_score);
            if let Some(w) = spec
                .weak_windows
                .iter()
                .find(|w| w.object == m.id && f >= w.start && f < w.start + w.length)
            {
                score = w.score;
                match mode {
                    Mode::D2 => v[2] *= w.shrink,
                    Mode::D3 => v[5] *= w.shrink,
                }
            }
            let embedding = match (&spec.embedding, &m.anchor) {
                (Some(e), Some(a)) => Some(perturbed_embedding(&mut rng, a, e.noise_std)?),
                _ => None,
            };
            let mut det = Detection::new(object_box(mode, &v, dy)?, score, m.class, camera, embedding)?;
            det.src_gt = Some(m.id);
            dets.push(det);
        }

        let fp_count = fp_whole + usize::from(rng.random::<f64>() < fp_frac);
        let [x0, x1, y0, y1] = spec.area;
        for _ in 0..fp_count {
            let x = uniform(&mut rng, [x0, x1]);
            let y = uniform(&mut rng, [y0, y1]);
            let v = match mode {
                Mode::D2 => vec![x, y, fp_size[0], fp_size[1]],
                Mode::D3 => {
                    let theta = uniform(&mut rng, [-std::f64::consts::PI, std::f64::consts::PI]);
                    vec![x, y, fp_size[0] / 2.0, fp_size[0], fp_size[1], fp_size[2], theta]
                }
            };
            let score = uniform(&mut rng, spec.fp_score);
            let embedding = match &spec.embedding {
                Some(e) => Some(Embedding::normalized(random_unit(&mut rng, e.dim))?),
                None => None,
            };
            dets.push(Detection::new(object_box(mode, &v, 0.0)?, score, fp_class, camera, embedding)?);
        }
        dets.shuffle(&mut rng);
        detections.push(FrameDetections {
            sequence_id: spec.sequence_id.clone(),
            frame: f,
            camera,
            detections: dets,
        });

        for m in &mut movers {
            if m.alive(f) {
                m.advance(f, mode);
            }
        }
    }
    Ok(Simulation {
        mode,
        ground_truth,
        detections,
    })
}

pub const PRESETS: [&str; 5] = ["clean-2d", "clean-3d", "occlusion", "crossing", "secondary-recovery"];

const IMAGE: [f64; 4] = [0.0, 1920.0, 0.0, 1280.0];

fn embedding(noise_std: f64) -> Option<EmbeddingSpec> {
    Some(EmbeddingSpec {
        dim: DEFAULT_EMBEDDING_DIM,
        noise_std,
    })
}

fn base(mode: Mode, name: &str, frames: u64, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        mode,
        sequence_id: format!("{name}-{seed}"),
        frames,
        camera: (mode == Mode::D2).then_some(Camera::Front),
        area: IMAGE,
        objects: Vec::new(),
        random_objects: Vec::new(),
        noise: NoiseSpec::default(),
        dropout: 0.0,
        occlusions: Vec::new(),
        weak_windows: Vec::new(),
        jolts: Vec::new(),
        fp_rate: 0.0,
        fp_class: None,
        tp_score: default_tp_score(),
        fp_score: default_fp_score(),
        embedding: None,
        seed,
    }
}

fn ped_2d(id: u64, x: f64, y: f64, vx: f64, vy: f64) -> ObjectSpec {
    ObjectSpec {
        id,
        class: ObjectClass::Pedestrian,
        start: 0,
        end: None,
        bbox: vec![x, y, 40.0, 100.0],
        velocity: vec![vx, vy],
        turn_rate: 0.0,
        maneuvers: Vec::new(),
    }
}

/// 100 frames, 20 pedestrians on a 4 x 5 grid, no corruption.
fn clean_2d(seed: u64, rng: &mut ChaCha8Rng) -> ScenarioSpec {
    let mut s = base(Mode::D2, "clean-2d", 100, seed);
    for row in 0..4 {
        for col in 0..5 {
            let id = (row * 5 + col + 1) as u64;
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let vx = dir * uniform(rng, [0.5, 1.4]);
            let vy = uniform(rng, [-0.3, 0.3]);
            s.objects.push(ped_2d(id, 250.0 + 350.0 * col as f64, 200.0 + 280.0 * row as f64, vx, vy));
        }
    }
    s.embedding = embedding(0.0);
    s
}

/// 100 frames, 20 objects of all classes on parallel lanes 8 m apart.
fn clean_3d(seed: u64, rng: &mut ChaCha8Rng) -> ScenarioSpec {
    let mut s = base(Mode::D3, "clean-3d", 100, seed);
    s.area = [-100.0, 100.0, -80.0, 80.0];
    for k in 0..20u64 {
        let class = ObjectClass::ALL[(k % 3) as usize];
        let speed = match class {
            ObjectClass::Vehicle => uniform(rng, [0.5, 1.5]),
            ObjectClass::Pedestrian => uniform(rng, [0.1, 0.2]),
            ObjectClass::Cyclist => uniform(rng, [0.3, 0.6]),
        };
        let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let size = class_size(Mode::D3, class);
        let theta = if dir > 0.0 { 0.0 } else { -std::f64::consts::PI };
        s.objects.push(ObjectSpec {
            id: k + 1,
            class,
            start: 0,
            end: None,
            bbox: vec![uniform(rng, [-40.0, 40.0]), -76.0 + 8.0 * k as f64, size[0] / 2.0, size[0], size[1], size[2], theta],
            velocity: vec![dir * speed, 0.0, 0.0],
            turn_rate: 0.0,
            maneuvers: Vec::new(),
        });
    }
    s
}

/// 120 frames, 10 pedestrians in two rows, with detector noise, dropout,
/// clutter, short occlusions, one weak window per object and two camera jolts.
fn occlusion(seed: u64, rng: &mut ChaCha8Rng) -> ScenarioSpec {
    let mut s = base(Mode::D2, "occlusion", 120, seed);
    s.jolts = vec![
        Jolt { start: 40, length: 5, dy: 250.0 },
        Jolt { start: 80, length: 5, dy: -250.0 },
    ];
    // weak windows stay clear of the jolts
    let calm = [[8u64, 30u64], [55, 72], [95, 112]];
    for row in 0..2 {
        for col in 0..5 {
            let id = (row * 5 + col + 1) as u64;
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let vx = dir * uniform(rng, [0.5, 1.2]);
            s.objects.push(ped_2d(id, 300.0 + 330.0 * col as f64, 400.0 + 500.0 * row as f64, vx, 0.0));
            let span = calm[rng.random_range(0..calm.len())];
            s.weak_windows.push(WeakWindow {
                object: id,
                start: rng.random_range(span[0]..span[1]),
                length: rng.random_range(2..=3),
                score: uniform(rng, [0.3, 0.45]),
                shrink: 0.7,
            });
            if rng.random_bool(0.5) {
                let span = calm[rng.random_range(0..calm.len())];
                s.occlusions.push(Window {
                    object: id,
                    start: rng.random_range(span[0]..span[1]),
                    length: 2,
                });
            }
        }
    }
    s.noise = NoiseSpec {
        center_std: 2.0,
        size_std: 2.0,
        heading_std: 0.0,
    };
    s.dropout = 0.02;
    s.fp_rate = 1.0;
    s.fp_score = [0.05, 0.55];
    s.embedding = embedding(0.01);
    s
}

/// 80 frames, four pairs of pedestrians walking toward each other along the
/// same line. The pair overlaps around frame 30 while the rear one is hidden
/// for three frames; then each pair either passes through or both turn back.
fn crossing(seed: u64, rng: &mut ChaCha8Rng) -> ScenarioSpec {
    let mut s = base(Mode::D2, "crossing", 80, seed);
    let meet = 30u64;
    for k in 0..4u64 {
        let v = uniform(rng, [2.0, 3.0]);
        let y = 250.0 + 280.0 * k as f64;
        let xa = uniform(rng, [200.0, 500.0]);
        let xb = xa + 2.0 * v * meet as f64;
        let (a, b) = (2 * k + 1, 2 * k + 2);
        let mut pa = ped_2d(a, xa, y, v, 0.0);
        let mut pb = ped_2d(b, xb, y + 6.0, -v, 0.0);
        if rng.random_bool(0.5) {
            pa.maneuvers.push(Maneuver { frame: meet, velocity: vec![-v, 0.0] });
            pb.maneuvers.push(Maneuver { frame: meet, velocity: vec![v, 0.0] });
        }
        s.objects.push(pa);
        s.objects.push(pb);
        s.occlusions.push(Window {
            object: a,
            start: meet - 1,
            length: 3,
        });
    }
    s.noise = NoiseSpec {
        center_std: 3.0,
        size_std: 1.0,
        heading_std: 0.0,
    };
    s.tp_score = [0.8, 1.0];
    s.embedding = embedding(0.01);
    s
}

/// 40 frames, two pedestrians; one of them is partially hidden with a
/// low score in frames 15 to 17.
fn secondary_recovery(seed: u64) -> ScenarioSpec {
    let mut s = base(Mode::D2, "secondary-recovery", 40, seed);
    s.objects.push(ped_2d(1, 600.0, 500.0, 2.0, 0.0));
    s.objects.push(ped_2d(2, 1400.0, 900.0, -1.5, 0.0));
    s.weak_windows.push(WeakWindow {
        object: 1,
        start: 15,
        length: 3,
        score: 0.35,
        shrink: 0.7,
    });
    s.tp_score = [0.9, 0.9];
    s.embedding = embedding(0.01);
    s
}

/// A named scenario. The layout is drawn from `seed`, which is also the
/// generation seed.
pub fn preset(name: &str, seed: u64) -> Result<ScenarioSpec> {
    // a separate stream for the layout keeps generation draws independent
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a70_u64);
    let spec = match name {
        "clean-2d" => clean_2d(seed, &mut rng),
        "clean-3d" => clean_3d(seed, &mut rng),
        "occlusion" => occlusion(seed, &mut rng),
        "crossing" => crossing(seed, &mut rng),
        "secondary-recovery" => secondary_recovery(seed),
        other => {
            return Err(Error::Config(format!("unknown preset '{other}', expected one of {}", PRESETS.join(", "))))
        }
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_detections_to;

    fn tiny(mode: Mode) -> ScenarioSpec {
        let mut s = base(mode, "t", 20, 3);
        match mode {
            Mode::D2 => s.objects.push(ped_2d(1, 100.0, 100.0, 1.0, 0.5)),
            Mode::D3 => {
                s.area = [-50.0, 50.0, -50.0, 50.0];
                s.objects.push(ObjectSpec {
                    id: 1,
                    class: ObjectClass::Vehicle,
                    start: 0,
                    end: None,
                    bbox: vec![0.0, 0.0, 0.8, 1.6, 2.0, 4.5, 0.0],
                    velocity: vec![1.0, 0.0, 0.0],
                    turn_rate: 0.0,
                    maneuvers: vec![],
                });
            }
        }
        s
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        for mode in [Mode::D2, Mode::D3] {
            let sim = generate(&tiny(mode)).unwrap();
            assert_eq!(sim.detections.len(), 20);
            for (f, gt) in sim.detections.iter().zip(&sim.ground_truth) {
                assert_eq!(f.detections.len(), 1);
                let d = &f.detections[0];
                assert_eq!(d.bbox, gt.bbox);
                assert_eq!(d.src_gt, Some(gt.track_id));
                assert!((0.7..=1.0).contains(&d.score));
            }
        }
    }

    #[test]
    fn constant_velocity_trajectory() {
        let sim = generate(&tiny(Mode::D2)).unwrap();
        let last = sim.ground_truth.last().unwrap().bbox;
        assert_eq!(last.values(), vec![119.0, 109.5, 40.0, 100.0]);
    }

    #[test]
    fn occlusion_window_removes_detections() {
        let mut s = tiny(Mode::D2);
        s.occlusions.push(Window { object: 1, start: 10, length: 5 });
        let sim = generate(&s).unwrap();
        for f in &sim.detections {
            let expected = usize::from(!(10..15).contains(&f.frame));
            assert_eq!(f.detections.len(), expected, "frame {}", f.frame);
        }
        assert_eq!(sim.ground_truth.len(), 20);
    }

    #[test]
    fn weak_window_and_jolt() {
        let mut s = tiny(Mode::D2);
        s.weak_windows.push(WeakWindow { object: 1, start: 5, length: 2, score: 0.3, shrink: 0.5 });
        s.jolts.push(Jolt { start: 5, length: 1, dy: 100.0 });
        let sim = generate(&s).unwrap();
        let d5 = &sim.detections[5].detections[0];
        assert_eq!(d5.score, 0.3);
        assert_eq!(d5.bbox.values()[2], 20.0);
        assert_eq!(d5.bbox.values()[1], 100.0 + 2.5 + 100.0);
        assert_eq!(sim.ground_truth[5].bbox.values()[1], 202.5);
        assert_eq!(sim.detections[6].detections[0].bbox.values()[1], 103.0);
    }

    #[test]
    fn maneuvers_and_turns() {
        let mut s = tiny(Mode::D3);
        s.objects[0].maneuvers.push(Maneuver { frame: 5, velocity: vec![0.0, 2.0, 0.0] });
        let sim = generate(&s).unwrap();
        let b = sim.ground_truth[6].bbox.as_3d().copied().unwrap();
        assert_eq!((b.cx, b.cy), (5.0, 2.0));
        assert!((b.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        let mut s = tiny(Mode::D2);
        s.objects[0].velocity = vec![1.0, 0.0];
        s.objects[0].turn_rate = std::f64::consts::FRAC_PI_2;
        let sim = generate(&s).unwrap();
        let p: Vec<f64> = sim.ground_truth[4].bbox.values();
        // four quarter turns bring the object back to its start
        assert!((p[0] - 100.0).abs() < 1e-9 && (p[1] - 100.0).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn same_seed_same_bytes() {
        for name in PRESETS {
            let a = generate(&preset(name, 7).unwrap()).unwrap();
            let b = generate(&preset(name, 7).unwrap()).unwrap();
            let (mut ba, mut bb) = (Vec::new(), Vec::new());
            write_detections_to(&mut ba, &a.detections).unwrap();
            write_detections_to(&mut bb, &b.detections).unwrap();
            assert_eq!(ba, bb, "{name}");
            assert_eq!(a.ground_truth, b.ground_truth);
        }
        let a = generate(&preset("occlusion", 1).unwrap()).unwrap();
        let b = generate(&preset("occlusion", 2).unwrap()).unwrap();
        assert_ne!(a.detections, b.detections);
    }

    #[test]
    fn false_positive_rate() {
        let mut s = tiny(Mode::D2);
        s.objects.clear();
        s.fp_rate = 0.3;
        s.frames = 5000;
        let sim = generate(&s).unwrap();
        let n: usize = sim.detections.iter().map(|f| f.detections.len()).sum();
        let (mean, sd) = (0.3 * 5000.0, (5000.0f64 * 0.3 * 0.7).sqrt());
        assert!((n as f64 - mean).abs() < 5.0 * sd, "{n}");
        assert!(sim.detections.iter().flat_map(|f| &f.detections).all(|d| d.src_gt.is_none()));
    }

    #[test]
    fn embeddings_cluster_by_object() {
        let sim = generate(&preset("crossing", 2).unwrap()).unwrap();
        let dets: Vec<&Detection> = sim.detections.iter().flat_map(|f| &f.detections).collect();
        let same = dets.iter().filter(|d| d.src_gt == Some(1)).take(2).collect::<Vec<_>>();
        let other = dets.iter().find(|d| d.src_gt == Some(2)).unwrap();
        let e = |d: &Detection| d.embedding.clone().unwrap();
        assert!(e(same[0]).dot(&e(same[1])) > 0.9);
        assert!(e(same[0]).dot(&e(other)).abs() < 0.3);
    }

    #[test]
    fn crossing_paths_intersect() {
        let sim = generate(&preset("crossing", 4).unwrap()).unwrap();
        let pos = |id: u64, f: u64| {
            sim.ground_truth
                .iter()
                .find(|r| r.track_id == id && r.frame == f)
                .map(|r| r.bbox.values()[0])
                .unwrap()
        };
        // x order of the pair flips or they meet within a box width
        let before = pos(1, 0) - pos(2, 0);
        let at = (pos(1, 30) - pos(2, 30)).abs();
        assert!(before < 0.0 && at < 1e-6);
    }

    #[test]
    fn invalid_specs_report_paths() {
        let err = ScenarioSpec::from_json(r#"{"mode":"2d","frames":10,"area":[0,1,0,1],"noise":{"centre_std":1}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("noise"), "{err}");
        let err = ScenarioSpec::from_json(r#"{"mode":"2d","frames":10,"area":[0,1,0,1],"dropout":2}"#).unwrap_err();
        assert!(err.to_string().contains("dropout"));
        let err = ScenarioSpec::from_json(
            r#"{"mode":"3d","frames":10,"area":[0,1,0,1],"objects":[{"id":1,"class":"vehicle","bbox":[1,2,3,4],"velocity":[0,0,0]}]}"#,
        );
        assert!(err.is_err());
        assert!(preset("nope", 1).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = preset("occlusion", 3).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(ScenarioSpec::from_json(&text).unwrap(), s);
    }
}
