//! The online tracking engine.
//!
//! Each [`Tracker::step`] predicts every live track, splits the frame's
//! detections by score, and associates in three gated stages:
//!
//! 1. a matching cascade over the primary detections, visiting tracks in
//!    order of increasing age `a_k` (appearance distance in 2D, Gaussian
//!    center distance in 3D);
//! 2. recently seen leftover tracks (`a_k < 3`) against the remaining primary
//!    detections with a relaxed metric (boxes doubled in 2D);
//! 3. all remaining tracks against the weak secondary detections (boxes
//!    tripled in 2D).
//!
//! Matched tracks are updated, unmatched ones age and are deleted past
//! `max_age`, and every unmatched primary detection seeds a new track. Only
//! tracks associated in the current frame are emitted, with the raw
//! detection box.

use std::collections::VecDeque;

use log::{debug, warn};

use crate::assignment::{solve_gated_assignment, AssociationResult, CostMatrix, INADMISSIBLE};
use crate::error::{Error, Result};
use crate::kalman::{MotionModel, TrackState, CHI2_95_4DOF, CHI2_95_7DOF};
use crate::metrics::{cosine_gallery_dist, gauss_center_dist, iou_dist_enlarged};
use crate::model::{BoundingBox, Camera, ClassConfig, ClassTable, Detection, Embedding, Mode, ObjectClass};

/// Only tracks younger than this take part in the second stage.
pub const STAGE2_MAX_AGE: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub mode: Mode,
    pub classes: ClassTable,
    pub motion: MotionModel,
    /// Third association stage over the secondary detections.
    pub stage3: bool,
    /// Appearance distance in the first 2D stage; IoU distance otherwise.
    pub reid: bool,
    /// Additionally gate the first stage by the chi-square 95% Mahalanobis bound.
    pub mahalanobis_gating: bool,
}

impl TrackerConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            classes: ClassTable::defaults(mode),
            motion: MotionModel::default(),
            stage3: true,
            reid: true,
            mahalanobis_gating: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in ObjectClass::ALL {
            self.classes.get(c).validate()?;
        }
        self.motion.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    /// Box of the predicted state for the current frame.
    pub predicted: BoundingBox,
    /// Frames since the last association (`a_k`).
    pub age: u32,
    pub hits: u32,
    pub score: f64,
    /// Appearance features of past associations, oldest first.
    pub gallery: VecDeque<Embedding>,
    pub class: ObjectClass,
    pub camera: Option<Camera>,
    /// The detection associated in the current frame.
    pub last_observation: Option<Detection>,
}

impl Track {
    pub fn spawn(id: u64, det: &Detection, motion: &MotionModel) -> Self {
        let state = motion.init_track_state(det);
        Self {
            id,
            state,
            predicted: det.bbox,
            age: 0,
            hits: 1,
            score: det.score,
            gallery: det.embedding.iter().cloned().collect(),
            class: det.class,
            camera: det.camera,
            last_observation: Some(det.clone()),
        }
    }

    fn predict(&mut self, motion: &MotionModel) -> Result<()> {
        self.state = motion.predict(&self.state)?;
        self.predicted = self.state.to_box()?;
        Ok(())
    }

    fn absorb(&mut self, det: &Detection, motion: &MotionModel, gallery_budget: usize) -> Result<()> {
        self.state = motion.update(&self.state, det)?;
        self.age = 0;
        self.hits += 1;
        self.score = det.score;
        if let Some(e) = &det.embedding {
            self.gallery.push_back(e.clone());
            while self.gallery.len() > gallery_budget {
                self.gallery.pop_front();
            }
        }
        self.last_observation = Some(det.clone());
        Ok(())
    }
}

/// One emitted track of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub id: u64,
    pub bbox: BoundingBox,
    pub score: f64,
    pub class: ObjectClass,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameResult {
    pub frame: u64,
    pub tracks: Vec<TrackOutput>,
    /// Matches made by stages one, two and three.
    pub stage_matches: [usize; 3],
    pub created: Vec<u64>,
    pub deleted: Vec<u64>,
}

/// Index partition of a detection list by score.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectionSplit {
    pub primary: Vec<usize>,
    pub secondary: Vec<usize>,
    pub discarded: Vec<usize>,
}

/// Primary: `score > t_s`; secondary: `t_s / 2 <= score <= t_s`; the rest is
/// discarded. A score equal to `t_s` is secondary.
pub fn split_detections(dets: &[Detection], score_threshold: f64) -> DetectionSplit {
    split_indices(dets, 0..dets.len(), score_threshold)
}

fn split_indices(dets: &[Detection], idx: impl IntoIterator<Item = usize>, t_s: f64) -> DetectionSplit {
    let mut split = DetectionSplit::default();
    for i in idx {
        let s = dets[i].score;
        if s > t_s {
            split.primary.push(i);
        } else if s >= t_s / 2.0 {
            split.secondary.push(i);
        } else {
            split.discarded.push(i);
        }
    }
    split
}

/// Everything a stage needs besides tracks and detections.
#[derive(Debug, Clone, Copy)]
pub struct StageContext<'a> {
    pub mode: Mode,
    pub class: &'a ClassConfig,
    /// Camera of the 2D instance; selects the IoU gate.
    pub camera: Option<Camera>,
    pub motion: &'a MotionModel,
    pub reid: bool,
    pub mahalanobis_gating: bool,
}

impl StageContext<'_> {
    fn iou_gate(&self) -> Result<f64> {
        let camera = self
            .camera
            .ok_or_else(|| Error::Config("2D association requires a camera".into()))?;
        Ok(self.class.max_iou_dist.for_camera(camera))
    }

    fn center_cost(&self, t: &Track, d: &Detection) -> f64 {
        match (t.predicted.as_3d(), d.bbox.as_3d()) {
            (Some(a), Some(b)) => gauss_center_dist(a, b, self.class.sigma),
            _ => INADMISSIBLE,
        }
    }

    fn enlarged_iou_cost(&self, t: &Track, d: &Detection, factor: f64) -> f64 {
        match (t.predicted.as_2d(), d.bbox.as_2d()) {
            (Some(a), Some(b)) => iou_dist_enlarged(a, b, factor),
            _ => INADMISSIBLE,
        }
    }

    /// Metric and gate of the first stage.
    fn stage1(&self) -> Result<(f64, CostFn<'_>)> {
        Ok(match self.mode {
            Mode::D3 => (self.class.max_center_dist, Box::new(|t, d| self.center_cost(t, d))),
            Mode::D2 if self.reid => (
                self.class.max_appearance_dist,
                Box::new(|t: &Track, d: &Detection| match &d.embedding {
                    Some(e) => cosine_gallery_dist(&t.gallery, e).unwrap_or(INADMISSIBLE),
                    None => INADMISSIBLE,
                }),
            ),
            Mode::D2 => (self.iou_gate()?, Box::new(|t, d| self.enlarged_iou_cost(t, d, 1.0))),
        })
    }

    fn relaxed(&self, factor: f64) -> Result<(f64, CostFn<'_>)> {
        Ok(match self.mode {
            Mode::D3 => (self.class.max_center_dist, Box::new(|t, d| self.center_cost(t, d))),
            Mode::D2 => (self.iou_gate()?, Box::new(move |t, d| self.enlarged_iou_cost(t, d, factor))),
        })
    }

    fn mahalanobis_admits(&self, t: &Track, d: &Detection) -> bool {
        if !self.mahalanobis_gating {
            return true;
        }
        let bound = match self.mode {
            Mode::D2 => CHI2_95_4DOF,
            Mode::D3 => CHI2_95_7DOF,
        };
        self.motion.mahalanobis(&t.state, d).is_ok_and(|m| m <= bound)
    }
}

/// Pairwise association cost.
type CostFn<'a> = Box<dyn Fn(&Track, &Detection) -> f64 + 'a>;

/// Solves one gated assignment between index subsets and returns global
/// `(track, detection)` pairs.
fn associate(
    tracks: &[Track],
    rows: &[usize],
    dets: &[Detection],
    cols: &[usize],
    gate: f64,
    cost: impl Fn(&Track, &Detection) -> f64,
) -> Result<Vec<(usize, usize)>> {
    if rows.is_empty() || cols.is_empty() {
        return Ok(Vec::new());
    }
    let m = CostMatrix::from_fn(rows.len(), cols.len(), |r, c| cost(&tracks[rows[r]], &dets[cols[c]]));
    let res = solve_gated_assignment(&m, gate)?;
    Ok(res.matches.into_iter().map(|(r, c, _)| (rows[r], cols[c])).collect())
}

fn cascade(
    tracks: &[Track],
    rows: &[usize],
    dets: &[Detection],
    cols: &[usize],
    ctx: &StageContext,
) -> Result<Vec<(usize, usize)>> {
    let (gate, metric) = ctx.stage1()?;
    let cost = |t: &Track, d: &Detection| {
        if ctx.mahalanobis_admits(t, d) {
            metric(t, d)
        } else {
            INADMISSIBLE
        }
    };
    let mut remaining: Vec<usize> = cols.to_vec();
    let mut matches = Vec::new();
    for age in 0..=ctx.class.max_age {
        if remaining.is_empty() {
            break;
        }
        let level: Vec<usize> = rows.iter().copied().filter(|&t| tracks[t].age == age).collect();
        let found = associate(tracks, &level, dets, &remaining, gate, cost)?;
        remaining.retain(|d| !found.iter().any(|m| m.1 == *d));
        matches.extend(found);
    }
    Ok(matches)
}

fn relaxed_stage(
    tracks: &[Track],
    rows: &[usize],
    dets: &[Detection],
    cols: &[usize],
    ctx: &StageContext,
    factor: f64,
) -> Result<Vec<(usize, usize)>> {
    let (gate, metric) = ctx.relaxed(factor)?;
    associate(tracks, rows, dets, cols, gate, metric)
}

fn to_result(pairs: Vec<(usize, usize)>, tracks: usize, dets: usize) -> AssociationResult {
    let mut res = AssociationResult::default();
    let mut det_used = vec![false; dets];
    let mut track_used = vec![false; tracks];
    let mut pairs = pairs;
    pairs.sort_unstable();
    for (t, d) in pairs {
        det_used[d] = true;
        track_used[t] = true;
        res.matches.push((t, d, f64::NAN));
    }
    res.unmatched_rows = (0..tracks).filter(|t| !track_used[*t]).collect();
    res.unmatched_cols = (0..dets).filter(|d| !det_used[*d]).collect();
    res
}

/// First stage: the age-ordered matching cascade. Costs in the returned
/// matches are not reported (NaN).
pub fn stage1_cascade(tracks: &[Track], primary: &[Detection], ctx: &StageContext) -> Result<AssociationResult> {
    let rows: Vec<usize> = (0..tracks.len()).collect();
    let cols: Vec<usize> = (0..primary.len()).collect();
    Ok(to_result(cascade(tracks, &rows, primary, &cols, ctx)?, tracks.len(), primary.len()))
}

/// Second stage: tracks with `a_k < 3` against the leftover primary
/// detections with the relaxed metric.
pub fn stage2_relaxed(tracks: &[Track], primary: &[Detection], ctx: &StageContext) -> Result<AssociationResult> {
    let rows: Vec<usize> = (0..tracks.len()).filter(|&t| tracks[t].age < STAGE2_MAX_AGE).collect();
    let cols: Vec<usize> = (0..primary.len()).collect();
    let pairs = relaxed_stage(tracks, &rows, primary, &cols, ctx, ctx.class.stage2_enlargement)?;
    Ok(to_result(pairs, tracks.len(), primary.len()))
}

/// Third stage: remaining tracks against the secondary detections.
pub fn stage3_secondary(tracks: &[Track], secondary: &[Detection], ctx: &StageContext) -> Result<AssociationResult> {
    let rows: Vec<usize> = (0..tracks.len()).collect();
    let cols: Vec<usize> = (0..secondary.len()).collect();
    let pairs = relaxed_stage(tracks, &rows, secondary, &cols, ctx, ctx.class.stage3_enlargement)?;
    Ok(to_result(pairs, tracks.len(), secondary.len()))
}

/// One tracking stream: a single sequence, and in 2D a single camera.
///
/// `step` calls must be serialized; distinct instances are independent.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    camera: Option<Camera>,
    tracks: Vec<Track>,
    next_id: u64,
    frame: u64,
}

impl Tracker {
    /// 2D instances need the camera they track in; 3D instances take none.
    pub fn new(config: TrackerConfig, camera: Option<Camera>) -> Result<Self> {
        config.validate()?;
        match (config.mode, camera) {
            (Mode::D2, None) => return Err(Error::Config("a 2D tracker needs a camera".into())),
            (Mode::D3, Some(_)) => return Err(Error::Config("a 3D tracker takes no camera".into())),
            _ => {}
        }
        Ok(Self {
            config,
            camera,
            tracks: Vec::new(),
            next_id: 1,
            frame: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn camera(&self) -> Option<Camera> {
        self.camera
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Number of frames processed so far.
    pub fn frame(&self) -> u64 {
        self.frame
    }

    fn check_input(&self, dets: &[Detection]) -> Result<()> {
        for d in dets {
            if d.bbox.mode() != self.config.mode {
                return Err(Error::Config(format!(
                    "{} detection given to a {} tracker",
                    d.bbox.mode(),
                    self.config.mode
                )));
            }
            if d.camera != self.camera {
                return Err(Error::Config("detection camera differs from the tracker camera".into()));
            }
            d.validate()?;
        }
        Ok(())
    }

    /// Processes one frame of detections.
    pub fn step(&mut self, dets: &[Detection]) -> Result<FrameResult> {
        self.check_input(dets)?;
        let mut result = FrameResult {
            frame: self.frame,
            ..Default::default()
        };
        self.frame += 1;

        let motion = self.config.motion;
        let mut failed = Vec::new();
        for t in &mut self.tracks {
            t.last_observation = None;
            if let Err(e) = t.predict(&motion) {
                warn!("track {} dropped at prediction: {e}", t.id);
                failed.push(t.id);
            }
        }
        self.tracks.retain(|t| !failed.contains(&t.id));
        result.deleted.extend(failed);

        let mut matches: Vec<(usize, usize)> = Vec::new();
        let mut unmatched_primary: Vec<usize> = Vec::new();
        for class in ObjectClass::ALL {
            let class_cfg = self.config.classes.get(class);
            let rows: Vec<usize> = (0..self.tracks.len()).filter(|&t| self.tracks[t].class == class).collect();
            let class_dets = (0..dets.len()).filter(|&d| dets[d].class == class);
            let split = split_indices(dets, class_dets, class_cfg.score_threshold);
            if rows.is_empty() {
                unmatched_primary.extend(split.primary);
                continue;
            }
            let ctx = StageContext {
                mode: self.config.mode,
                class: class_cfg,
                camera: self.camera,
                motion: &self.config.motion,
                reid: self.config.reid,
                mahalanobis_gating: self.config.mahalanobis_gating,
            };

            let first = cascade(&self.tracks, &rows, dets, &split.primary, &ctx)?;
            let taken = |pairs: &[(usize, usize)], t: usize| pairs.iter().any(|m| m.0 == t);
            let used = |pairs: &[(usize, usize)], d: usize| pairs.iter().any(|m| m.1 == d);

            let rows2: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&t| !taken(&first, t) && self.tracks[t].age < STAGE2_MAX_AGE)
                .collect();
            let cols2: Vec<usize> = split.primary.iter().copied().filter(|&d| !used(&first, d)).collect();
            let second = relaxed_stage(&self.tracks, &rows2, dets, &cols2, &ctx, class_cfg.stage2_enlargement)?;

            let third = if self.config.stage3 {
                let rows3: Vec<usize> = rows
                    .iter()
                    .copied()
                    .filter(|&t| !taken(&first, t) && !taken(&second, t))
                    .collect();
                relaxed_stage(&self.tracks, &rows3, dets, &split.secondary, &ctx, class_cfg.stage3_enlargement)?
            } else {
                Vec::new()
            };

            result.stage_matches[0] += first.len();
            result.stage_matches[1] += second.len();
            result.stage_matches[2] += third.len();
            unmatched_primary.extend(
                split
                    .primary
                    .iter()
                    .copied()
                    .filter(|&d| !used(&first, d) && !used(&second, d)),
            );
            matches.extend(first);
            matches.extend(second);
            matches.extend(third);
        }

        let mut matched = vec![false; self.tracks.len()];
        let mut failed = vec![false; self.tracks.len()];
        for &(t, d) in &matches {
            matched[t] = true;
            let budget = self.config.classes.get(self.tracks[t].class).gallery_budget;
            if let Err(e) = self.tracks[t].absorb(&dets[d], &motion, budget) {
                warn!("track {} dropped at update: {e}", self.tracks[t].id);
                failed[t] = true;
            }
        }
        for (t, track) in self.tracks.iter_mut().enumerate() {
            if !matched[t] {
                track.age += 1;
            }
        }
        let classes = &self.config.classes;
        let mut keep = Vec::with_capacity(self.tracks.len());
        for (t, track) in self.tracks.iter().enumerate() {
            let expired = track.age > classes.get(track.class).max_age;
            if failed[t] || expired {
                result.deleted.push(track.id);
            }
            keep.push(!(failed[t] || expired));
        }
        let mut k = keep.into_iter();
        self.tracks.retain(|_| k.next().unwrap_or(false));

        unmatched_primary.sort_unstable();
        for d in unmatched_primary {
            let track = Track::spawn(self.next_id, &dets[d], &motion);
            self.next_id += 1;
            result.created.push(track.id);
            self.tracks.push(track);
        }

        for t in &self.tracks {
            if t.age != 0 || t.hits < classes.get(t.class).min_hits {
                continue;
            }
            if let Some(obs) = &t.last_observation {
                result.tracks.push(TrackOutput {
                    id: t.id,
                    bbox: obs.bbox,
                    score: t.score,
                    class: t.class,
                });
            }
        }
        debug!(
            "frame {}: {} dets, matches {:?}, +{} -{} tracks",
            result.frame,
            dets.len(),
            result.stage_matches,
            result.created.len(),
            result.deleted.len()
        );
        Ok(result)
    }
}
