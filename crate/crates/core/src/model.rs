//! Shared domain types: boxes, detections, per-class parameters.
//!
//! Every constructor validates its invariants, so downstream code can assume
//! finite values, positive sizes and unit-norm embeddings.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `‖embedding‖₂ = 1`.
pub const EMBEDDING_NORM_TOLERANCE: f64 = 1e-6;

/// Default embedding dimension of the appearance features.
pub const DEFAULT_EMBEDDING_DIM: usize = 512;

/// Wraps a heading angle into `[-π, π)`.
///
/// Values already inside the interval are returned unchanged, which makes the
/// function exactly idempotent.
pub fn normalize_heading(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::InvalidValue(format!("heading {theta} is not finite")));
    }
    if (-PI..PI).contains(&theta) {
        return Ok(theta);
    }
    let wrapped = (theta + PI).rem_euclid(TAU) - PI;
    // rem_euclid may round up to TAU for inputs just below a multiple of 2π
    Ok(if wrapped >= PI { -PI } else { wrapped })
}

/// Wraps an angle difference into `(-π, π]`.
pub(crate) fn wrap_angle_diff(delta: f64) -> f64 {
    let w = (delta + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("{name} = {v} is not finite")))
    }
}

fn ensure_positive(name: &str, v: f64) -> Result<()> {
    ensure_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateBox(format!("{name} = {v} must be > 0")))
    }
}

/// Axis-aligned image box in center format, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Box2D {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        ensure_finite("cx", cx)?;
        ensure_finite("cy", cy)?;
        ensure_positive("w", w)?;
        ensure_positive("h", h)?;
        Ok(Self { cx, cy, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// `(x1, y1, x2, y2)` corners.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let hw = self.w / 2.0;
        let hh = self.h / 2.0;
        (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)
    }

    /// Width and height multiplied by `factor` about the center.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            w: self.w * factor,
            h: self.h * factor,
            ..*self
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }
}

/// Oriented 3D box: center in meters, dimensions in meters, heading about the
/// vertical axis in radians. `l` runs along the heading, `w` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    pub theta: f64,
}

impl Box3D {
    /// Validates sizes and normalizes the heading.
    #[allow(clippy::too_many_arguments)]
    pub fn new(cx: f64, cy: f64, cz: f64, h: f64, w: f64, l: f64, theta: f64) -> Result<Self> {
        ensure_finite("cx", cx)?;
        ensure_finite("cy", cy)?;
        ensure_finite("cz", cz)?;
        ensure_positive("h", h)?;
        ensure_positive("w", w)?;
        ensure_positive("l", l)?;
        let theta = normalize_heading(theta)?;
        Ok(Self { cx, cy, cz, h, w, l, theta })
    }

    pub fn center(&self) -> [f64; 3] {
        [self.cx, self.cy, self.cz]
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.cx, self.cy, self.cz, self.h, self.w, self.l, self.theta]
    }

    /// Ground-plane rectangle corners, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.theta.sin_cos();
        let hl = self.l / 2.0;
        let hw = self.w / 2.0;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        let mut out = [[0.0; 2]; 4];
        for (o, [x, y]) in out.iter_mut().zip(local) {
            *o = [self.cx + c * x - s * y, self.cy + s * x + c * y];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundingBox {
    D2(Box2D),
    D3(Box3D),
}

impl BoundingBox {
    pub fn mode(&self) -> Mode {
        match self {
            BoundingBox::D2(_) => Mode::D2,
            BoundingBox::D3(_) => Mode::D3,
        }
    }

    pub fn as_2d(&self) -> Option<&Box2D> {
        match self {
            BoundingBox::D2(b) => Some(b),
            BoundingBox::D3(_) => None,
        }
    }

    pub fn as_3d(&self) -> Option<&Box3D> {
        match self {
            BoundingBox::D3(b) => Some(b),
            BoundingBox::D2(_) => None,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            BoundingBox::D2(b) => b.to_array().to_vec(),
            BoundingBox::D3(b) => b.to_array().to_vec(),
        }
    }
}

/// Tracking mode: image-space boxes or world-space boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "2d")]
    D2,
    #[serde(rename = "3d")]
    D3,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::D2 => "2d",
            Mode::D3 => "3d",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2d" => Ok(Mode::D2),
            "3d" => Ok(Mode::D3),
            other => Err(Error::InvalidValue(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [ObjectClass::Vehicle, ObjectClass::Pedestrian, ObjectClass::Cyclist];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::Vehicle => "vehicle",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Cyclist => "cyclist",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            ObjectClass::Vehicle => 0,
            ObjectClass::Pedestrian => 1,
            ObjectClass::Cyclist => 2,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vehicle" => Ok(ObjectClass::Vehicle),
            "pedestrian" => Ok(ObjectClass::Pedestrian),
            "cyclist" => Ok(ObjectClass::Cyclist),
            other => Err(Error::InvalidValue(format!("unknown class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Camera {
    Front,
    FrontLeft,
    FrontRight,
    SideLeft,
    SideRight,
}

/// Cameras sharing one set of IoU gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CameraGroup {
    Front,
    FrontSide,
    Side,
}

impl Camera {
    pub const ALL: [Camera; 5] = [
        Camera::Front,
        Camera::FrontLeft,
        Camera::FrontRight,
        Camera::SideLeft,
        Camera::SideRight,
    ];

    pub fn group(&self) -> CameraGroup {
        match self {
            Camera::Front => CameraGroup::Front,
            Camera::FrontLeft | Camera::FrontRight => CameraGroup::FrontSide,
            Camera::SideLeft | Camera::SideRight => CameraGroup::Side,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Camera::Front => "front",
            Camera::FrontLeft => "front_left",
            Camera::FrontRight => "front_right",
            Camera::SideLeft => "side_left",
            Camera::SideRight => "side_right",
        }
    }
}

impl fmt::Display for Camera {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Camera {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Camera::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidValue(format!("unknown camera '{s}'")))
    }
}

/// Unit-norm appearance feature. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Arc<[f64]>);

impl Embedding {
    /// Accepts a vector whose norm is already 1 within [`EMBEDDING_NORM_TOLERANCE`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidValue("embedding is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("embedding has non-finite entries".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > EMBEDDING_NORM_TOLERANCE {
            return Err(Error::InvalidValue(format!("embedding norm {norm} is not 1")));
        }
        Ok(Self(values.into()))
    }

    /// Scales an arbitrary non-zero vector to unit length.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidValue("cannot normalize a zero or non-finite vector".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Self::new(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        // independent lanes let the compiler vectorize the reduction
        const LANES: usize = 8;
        let (a, b) = (&self.0[..], &other.0[..]);
        let n = a.len().min(b.len());
        let mut acc = [0.0f64; LANES];
        let (ca, cb) = (a[..n].chunks_exact(LANES), b[..n].chunks_exact(LANES));
        let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
        for (x, y) in ca.zip(cb) {
            for i in 0..LANES {
                acc[i] += x[i] * y[i];
            }
        }
        acc.iter().sum::<f64>() + tail
    }
}

/// A per-frame observation from an external detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub class: ObjectClass,
    pub camera: Option<Camera>,
    pub embedding: Option<Embedding>,
    /// Ground-truth id of the simulated object that produced this detection.
    /// Never read by the tracker.
    pub src_gt: Option<u64>,
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        score: f64,
        class: ObjectClass,
        camera: Option<Camera>,
        embedding: Option<Embedding>,
    ) -> Result<Self> {
        let det = Self {
            bbox,
            score,
            class,
            camera,
            embedding,
            src_gt: None,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn new_2d(bbox: Box2D, score: f64, class: ObjectClass, camera: Camera) -> Result<Self> {
        Self::new(BoundingBox::D2(bbox), score, class, Some(camera), None)
    }

    pub fn new_3d(bbox: Box3D, score: f64, class: ObjectClass) -> Result<Self> {
        Self::new(BoundingBox::D3(bbox), score, class, None, None)
    }

    pub fn with_embedding(mut self, embedding: Embedding) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_src_gt(mut self, gt: u64) -> Self {
        self.src_gt = Some(gt);
        self
    }

    /// Re-checks every invariant; fields are public so this is also called on
    /// the tracker boundary.
    pub fn validate(&self) -> Result<()> {
        match &self.bbox {
            BoundingBox::D2(b) => {
                Box2D::new(b.cx, b.cy, b.w, b.h)?;
                if self.camera.is_none() {
                    return Err(Error::InvalidValue("2D detection requires a camera".into()));
                }
            }
            BoundingBox::D3(b) => {
                let checked = Box3D::new(b.cx, b.cy, b.cz, b.h, b.w, b.l, b.theta)?;
                if checked.theta != b.theta {
                    return Err(Error::InvalidValue(format!(
                        "heading {} is outside [-pi, pi)",
                        b.theta
                    )));
                }
                if self.camera.is_some() {
                    return Err(Error::InvalidValue("3D detection must not carry a camera".into()));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidValue(format!("score {} outside [0, 1]", self.score)));
        }
        if let Some(e) = &self.embedding {
            Embedding::new(e.as_slice().to_vec())?;
        }
        Ok(())
    }
}

/// IoU-distance gates of one class, per camera group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IouGates {
    pub front: f64,
    pub front_side: f64,
    pub side: f64,
}

impl IouGates {
    pub fn for_camera(&self, camera: Camera) -> f64 {
        match camera.group() {
            CameraGroup::Front => self.front,
            CameraGroup::FrontSide => self.front_side,
            CameraGroup::Side => self.side,
        }
    }
}

/// Per-class tracking parameters. Holds both the image-space and the
/// world-space gates; the tracker reads the ones matching its mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConfig {
    /// Primary/secondary split threshold `t_s`.
    pub score_threshold: f64,
    /// Frames a track may coast before deletion.
    pub max_age: u32,
    pub min_hits: u32,
    pub gallery_budget: usize,
    /// Cosine-distance gate of the appearance stage.
    pub max_appearance_dist: f64,
    pub max_iou_dist: IouGates,
    pub stage2_enlargement: f64,
    pub stage3_enlargement: f64,
    /// Gaussian kernel width in meters.
    pub sigma: f64,
    pub max_center_dist: f64,
}

impl ClassConfig {
    /// Tuned defaults for one class in one mode.
    pub fn defaults(mode: Mode, class: ObjectClass) -> Self {
        use ObjectClass::*;
        let score_threshold = match (mode, class) {
            (Mode::D2, Vehicle) => 0.4,
            _ => 0.5,
        };
        let (max_appearance_dist, max_iou_dist) = match class {
            Vehicle => (
                0.06,
                IouGates {
                    front: 0.9,
                    front_side: 0.93,
                    side: 0.95,
                },
            ),
            Pedestrian | Cyclist => (
                0.15,
                IouGates {
                    front: 0.95,
                    front_side: 0.97,
                    side: 0.99,
                },
            ),
        };
        let (sigma, max_center_dist) = match class {
            Pedestrian => (1.5, 0.7),
            Vehicle => (5.0, 0.5),
            Cyclist => (3.0, 0.9),
        };
        Self {
            score_threshold,
            max_age: 3,
            min_hits: 1,
            gallery_budget: 100,
            max_appearance_dist,
            max_iou_dist,
            stage2_enlargement: 2.0,
            stage3_enlargement: 3.0,
            sigma,
            max_center_dist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in (0, 1]")))
            }
        };
        unit("score_threshold", self.score_threshold)?;
        unit("max_appearance_dist", self.max_appearance_dist)?;
        unit("max_iou_dist.front", self.max_iou_dist.front)?;
        unit("max_iou_dist.front_side", self.max_iou_dist.front_side)?;
        unit("max_iou_dist.side", self.max_iou_dist.side)?;
        unit("max_center_dist", self.max_center_dist)?;
        if self.max_age < 1 {
            return Err(Error::Config("max_age must be >= 1".into()));
        }
        if self.gallery_budget < 1 {
            return Err(Error::Config("gallery_budget must be >= 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma = {} must be > 0", self.sigma)));
        }
        for (name, f) in [
            ("stage2_enlargement", self.stage2_enlargement),
            ("stage3_enlargement", self.stage3_enlargement),
        ] {
            if !(f.is_finite() && f >= 1.0) {
                return Err(Error::Config(format!("{name} = {f} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// One [`ClassConfig`] per object class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable([ClassConfig; 3]);

impl ClassTable {
    pub fn defaults(mode: Mode) -> Self {
        Self(ObjectClass::ALL.map(|c| ClassConfig::defaults(mode, c)))
    }

    pub fn get(&self, class: ObjectClass) -> &ClassConfig {
        &self.0[class.index()]
    }

    pub fn get_mut(&mut self, class: ObjectClass) -> &mut ClassConfig {
        &mut self.0[class.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn heading_examples() {
        assert_eq!(normalize_heading(0.0).unwrap(), 0.0);
        assert_eq!(normalize_heading(-PI).unwrap(), -PI);
        let w = normalize_heading(3.0 * PI).unwrap();
        assert!((w + PI).abs() < 1e-12, "{w}");
        assert!((-PI..PI).contains(&w));
        assert!((-PI..PI).contains(&normalize_heading(PI).unwrap()));
        assert!(normalize_heading(f64::NAN).is_err());
        assert!(normalize_heading(f64::INFINITY).is_err());
    }

    #[test]
    fn wrap_diff_range() {
        assert_eq!(wrap_angle_diff(PI), PI);
        assert!((wrap_angle_diff(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle_diff(1.5 * PI) + 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn box_validation() {
        assert!(Box2D::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Box2D::new(0.0, f64::NAN, 1.0, 1.0).is_err());
        assert!(Box3D::new(0.0, 0.0, 0.0, 1.0, 1.0, -1.0, 0.0).is_err());
        let b = Box3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 3.0 * PI).unwrap();
        assert!((-PI..PI).contains(&b.theta));
    }

    #[test]
    fn detection_validation() {
        let b2 = Box2D::new(1.0, 1.0, 2.0, 2.0).unwrap();
        assert!(Detection::new_2d(b2, 1.2, ObjectClass::Vehicle, Camera::Front).is_err());
        assert!(Detection::new(BoundingBox::D2(b2), 0.5, ObjectClass::Vehicle, None, None).is_err());
        let b3 = Box3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!(Detection::new(BoundingBox::D3(b3), 0.5, ObjectClass::Vehicle, Some(Camera::Front), None).is_err());
        let mut d = Detection::new_3d(b3, 0.5, ObjectClass::Vehicle).unwrap();
        d.score = f64::NAN;
        assert!(d.validate().is_err());
    }

    #[test]
    fn embedding_norm() {
        assert!(Embedding::new(vec![1.0, 1.0]).is_err());
        assert!(Embedding::new(vec![0.6, 0.8]).is_ok());
        assert!(Embedding::normalized(vec![0.0, 0.0]).is_err());
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert!((e.as_slice()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn camera_groups() {
        assert_eq!(Camera::FrontLeft.group(), Camera::FrontRight.group());
        assert_eq!(Camera::SideLeft.group(), CameraGroup::Side);
        assert_eq!("side_right".parse::<Camera>().unwrap(), Camera::SideRight);
    }

    #[test]
    fn default_table_values() {
        let t = ClassTable::defaults(Mode::D2);
        assert_eq!(t.get(ObjectClass::Vehicle).score_threshold, 0.4);
        assert_eq!(t.get(ObjectClass::Pedestrian).max_iou_dist.front, 0.95);
        let t = ClassTable::defaults(Mode::D3);
        assert_eq!(t.get(ObjectClass::Vehicle).score_threshold, 0.5);
        assert_eq!(t.get(ObjectClass::Cyclist).max_center_dist, 0.9);
        for c in ObjectClass::ALL {
            t.get(c).validate().unwrap();
        }
    }

    proptest! {
        #[test]
        fn heading_is_idempotent(x in -1e4f64..1e4) {
            let once = normalize_heading(x).unwrap();
            prop_assert!((-PI..PI).contains(&once));
            prop_assert_eq!(normalize_heading(once).unwrap(), once);
            let k = ((x - once) / TAU).round();
            prop_assert!((x - once - k * TAU).abs() < 1e-9);
        }
    }
}
