//! File-level pipelines: run one tracker per stream over a detection file and
//! score track records against ground-truth records.
//!
//! A stream is one sequence in 3D and one (sequence, camera) pair in 2D.
//! Streams are processed on the rayon pool; results are sorted so the output
//! never depends on scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, FrameBoxes, LabeledBox, MatchCriterion, MotReport};
use crate::io::{FrameDetections, TrackRecord};
use crate::model::{Camera, Mode};
use crate::tracker::{Tracker, TrackerConfig};

pub type StreamKey = (String, Option<Camera>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamSummary {
    pub frames: usize,
    pub detections: usize,
    pub stage_matches: [usize; 3],
    pub tracks_created: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackingRun {
    /// Sorted by sequence, camera, frame and track id.
    pub records: Vec<TrackRecord>,
    pub streams: BTreeMap<StreamKey, StreamSummary>,
}

impl TrackingRun {
    pub fn stage_matches(&self) -> [usize; 3] {
        let mut total = [0; 3];
        for s in self.streams.values() {
            for (t, v) in total.iter_mut().zip(s.stage_matches) {
                *t += v;
            }
        }
        total
    }
}

/// Groups frames by stream, keeping file order within a stream.
pub fn group_streams(frames: &[FrameDetections]) -> BTreeMap<StreamKey, Vec<&FrameDetections>> {
    let mut groups: BTreeMap<StreamKey, Vec<&FrameDetections>> = BTreeMap::new();
    for f in frames {
        groups.entry((f.sequence_id.clone(), f.camera)).or_default().push(f);
    }
    groups
}

fn run_stream(key: &StreamKey, frames: &[&FrameDetections], config: &TrackerConfig) -> Result<(Vec<TrackRecord>, StreamSummary)> {
    let camera = match config.mode {
        Mode::D2 => Some(key.1.ok_or_else(|| {
            Error::Config(format!("sequence '{}' has 2D frames without a camera", key.0))
        })?),
        Mode::D3 => {
            if key.1.is_some() {
                return Err(Error::Config(format!("sequence '{}' names a camera in 3D mode", key.0)));
            }
            None
        }
    };
    let mut tracker = Tracker::new(config.clone(), camera)?;
    let mut records = Vec::new();
    let mut summary = StreamSummary::default();
    for f in frames {
        let res = tracker.step(&f.detections)?;
        summary.frames += 1;
        summary.detections += f.detections.len();
        summary.tracks_created += res.created.len();
        for (s, v) in summary.stage_matches.iter_mut().zip(res.stage_matches) {
            *s += v;
        }
        records.extend(res.tracks.into_iter().map(|t| TrackRecord {
            sequence_id: key.0.clone(),
            frame: f.frame,
            camera,
            track_id: t.id,
            class: t.class,
            bbox: t.bbox,
            score: t.score,
        }));
    }
    Ok((records, summary))
}

/// Runs an independent tracker on every stream of `frames`.
pub fn run_tracking(frames: &[FrameDetections], config: &TrackerConfig) -> Result<TrackingRun> {
    let groups: Vec<_> = group_streams(frames).into_iter().collect();
    let results: Vec<_> = groups
        .par_iter()
        .map(|(key, fs)| (key.clone(), run_stream(key, fs, config)))
        .collect();
    let mut run = TrackingRun::default();
    for (key, res) in results {
        let (records, summary) = res?;
        run.records.extend(records);
        run.streams.insert(key, summary);
    }
    run.records.sort_by(|a, b| {
        (&a.sequence_id, a.camera, a.frame, a.track_id).cmp(&(&b.sequence_id, b.camera, b.frame, b.track_id))
    });
    Ok(run)
}

fn group_records(records: &[TrackRecord]) -> BTreeMap<StreamKey, BTreeMap<u64, Vec<LabeledBox>>> {
    let mut out: BTreeMap<StreamKey, BTreeMap<u64, Vec<LabeledBox>>> = BTreeMap::new();
    for r in records {
        out.entry((r.sequence_id.clone(), r.camera))
            .or_default()
            .entry(r.frame)
            .or_default()
            .push(LabeledBox {
                id: r.track_id,
                bbox: r.bbox,
                class: r.class,
            });
    }
    out
}

/// Scores track records against ground-truth records stream by stream and
/// sums the counts. Frames are the union of the frames present in either
/// input. A hypothesis stream without ground truth is an input error.
pub fn evaluate_records(gt: &[TrackRecord], hyp: &[TrackRecord], criterion: MatchCriterion) -> Result<MotReport> {
    let gt = group_records(gt);
    let mut hyp = group_records(hyp);
    if let Some((seq, cam)) = hyp.keys().find(|k| !gt.contains_key(*k)) {
        let cam = cam.map(|c| format!(" camera {c}")).unwrap_or_default();
        return Err(Error::Input(format!("hypothesis sequence '{seq}'{cam} has no ground truth")));
    }
    let jobs: Vec<_> = gt
        .into_iter()
        .map(|(key, g)| {
            let h = hyp.remove(&key).unwrap_or_default();
            (g, h)
        })
        .collect();
    let reports: Vec<Result<MotReport>> = jobs
        .into_par_iter()
        .map(|(mut g, mut h)| {
            let frames: Vec<u64> = g.keys().chain(h.keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let gt_frames: Vec<FrameBoxes> = frames
                .iter()
                .map(|f| FrameBoxes { frame: *f, boxes: g.remove(f).unwrap_or_default() })
                .collect();
            let hyp_frames: Vec<FrameBoxes> = frames
                .iter()
                .map(|f| FrameBoxes { frame: *f, boxes: h.remove(f).unwrap_or_default() })
                .collect();
            evaluate(&gt_frames, &hyp_frames, criterion)
        })
        .collect();
    let mut total = MotReport::new(criterion);
    for r in reports {
        total.merge(&r?);
    }
    Ok(total)
}
