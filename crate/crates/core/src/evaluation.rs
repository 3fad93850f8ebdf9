//! CLEAR-MOT scoring: MOTA, MOTP, false positives, misses and mismatches.
//!
//! Correspondences from the previous frame are kept while they stay
//! matchable; the remaining objects are matched by a gated minimum-distance
//! assignment. A mismatch is counted when a ground-truth object is matched to
//! a different hypothesis id than at its last match. MOTP is the mean matched
//! distance (`1 - IoU` in 2D, center distance in meters in 3D), so lower is
//! better.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::assignment::{solve_gated_assignment, CostMatrix, INADMISSIBLE};
use crate::error::{Error, Result};
use crate::metrics::iou_2d;
use crate::model::{BoundingBox, Mode, ObjectClass};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBox {
    pub id: u64,
    pub bbox: BoundingBox,
    pub class: ObjectClass,
}

/// All boxes of one frame, either ground truth or tracker output.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBoxes {
    pub frame: u64,
    pub boxes: Vec<LabeledBox>,
}

pub type GroundTruthFrame = FrameBoxes;
pub type HypothesisFrame = FrameBoxes;

/// When a hypothesis may be matched to a ground-truth object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchCriterion {
    /// 2D: IoU at least the threshold.
    Iou(f64),
    /// 3D: center distance at most the threshold, meters.
    CenterDistance(f64),
}

impl MatchCriterion {
    pub const DEFAULT_IOU: f64 = 0.5;
    pub const DEFAULT_DISTANCE: f64 = 2.0;

    pub fn default_for(mode: Mode) -> Self {
        match mode {
            Mode::D2 => MatchCriterion::Iou(Self::DEFAULT_IOU),
            Mode::D3 => MatchCriterion::CenterDistance(Self::DEFAULT_DISTANCE),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            MatchCriterion::Iou(t) if t > 0.0 && t < 1.0 => Ok(()),
            MatchCriterion::CenterDistance(t) if t > 0.0 && t.is_finite() => Ok(()),
            other => Err(Error::InvalidValue(format!("invalid match criterion {other:?}"))),
        }
    }

    /// Raw distance, or `None` when the pair is not matchable.
    fn distance(&self, gt: &BoundingBox, hyp: &BoundingBox) -> Result<Option<f64>> {
        match (*self, gt, hyp) {
            (MatchCriterion::Iou(t), BoundingBox::D2(a), BoundingBox::D2(b)) => {
                let iou = iou_2d(a, b);
                Ok((iou >= t).then_some(1.0 - iou))
            }
            (MatchCriterion::CenterDistance(t), BoundingBox::D3(a), BoundingBox::D3(b)) => {
                let d = a
                    .center()
                    .iter()
                    .zip(b.center())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                Ok((d <= t).then_some(d))
            }
            _ => Err(Error::Input("box dimensionality does not fit the match criterion".into())),
        }
    }
}

/// Event tallies of one class or of all classes together.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MotCounts {
    pub gt: usize,
    pub matches: usize,
    pub false_positives: usize,
    pub misses: usize,
    pub mismatches: usize,
    pub distance_sum: f64,
}

impl MotCounts {
    /// `1 - (FP + misses + mismatches) / GT`; `NaN` without ground truth.
    pub fn mota(&self) -> f64 {
        if self.gt == 0 {
            return f64::NAN;
        }
        1.0 - (self.false_positives + self.misses + self.mismatches) as f64 / self.gt as f64
    }

    /// Mean matched distance; `NaN` without matches.
    pub fn motp(&self) -> f64 {
        if self.matches == 0 {
            return f64::NAN;
        }
        self.distance_sum / self.matches as f64
    }

    pub fn add(&mut self, o: &MotCounts) {
        self.gt += o.gt;
        self.matches += o.matches;
        self.false_positives += o.false_positives;
        self.misses += o.misses;
        self.mismatches += o.mismatches;
        self.distance_sum += o.distance_sum;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotReport {
    pub criterion: MatchCriterion,
    pub per_class: BTreeMap<ObjectClass, MotCounts>,
}

impl MotReport {
    pub fn new(criterion: MatchCriterion) -> Self {
        Self {
            criterion,
            per_class: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> MotCounts {
        let mut t = MotCounts::default();
        self.per_class.values().for_each(|c| t.add(c));
        t
    }

    /// Sums counts of an independently evaluated sequence.
    pub fn merge(&mut self, other: &MotReport) {
        for (class, counts) in &other.per_class {
            self.per_class.entry(*class).or_default().add(counts);
        }
    }

    fn rows(&self) -> Vec<(String, MotCounts)> {
        let mut rows: Vec<_> = self.per_class.iter().map(|(c, v)| (c.to_string(), *v)).collect();
        rows.push(("all".to_string(), self.total()));
        rows
    }

    pub fn motp_unit(&self) -> &'static str {
        match self.criterion {
            MatchCriterion::Iou(_) => "1-IoU",
            MatchCriterion::CenterDistance(_) => "m",
        }
    }

    /// Human-readable aligned table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<11} {:>8} {:>10} {:>7} {:>7} {:>7} {:>9}",
            "class",
            "MOTA",
            format!("MOTP({})", self.motp_unit()),
            "FP",
            "Miss",
            "IDSW",
            "GT"
        );
        for (name, c) in self.rows() {
            let _ = writeln!(
                out,
                "{:<11} {:>8.3} {:>10.4} {:>7} {:>7} {:>7} {:>9}",
                name,
                c.mota(),
                c.motp(),
                c.false_positives,
                c.misses,
                c.mismatches,
                c.gt
            );
        }
        out
    }

    /// Machine-readable CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,mota,motp,fp,miss,mismatch,gt,matches\n");
        for (name, c) in self.rows() {
            let _ = writeln!(
                out,
                "{name},{:.6},{:.6},{},{},{},{},{}",
                c.mota(),
                c.motp(),
                c.false_positives,
                c.misses,
                c.mismatches,
                c.gt,
                c.matches
            );
        }
        out
    }
}

fn check_unique(frame: &FrameBoxes, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for b in &frame.boxes {
        if !seen.insert((b.class, b.id)) {
            return Err(Error::Input(format!("{what} id {} repeated in frame {}", b.id, frame.frame)));
        }
    }
    Ok(())
}

/// Scores a hypothesis sequence against ground truth. Both sequences must list
/// the same frames in the same order. Objects of different classes never match.
pub fn evaluate(gt: &[GroundTruthFrame], hyp: &[HypothesisFrame], criterion: MatchCriterion) -> Result<MotReport> {
    criterion.validate()?;
    if gt.len() != hyp.len() {
        return Err(Error::Input(format!("{} ground-truth frames vs {} hypothesis frames", gt.len(), hyp.len())));
    }
    let mut report = MotReport::new(criterion);
    // keyed by (class, gt id)
    let mut last_match: HashMap<(ObjectClass, u64), u64> = HashMap::new();
    let mut previous: HashMap<(ObjectClass, u64), u64> = HashMap::new();

    for (g, h) in gt.iter().zip(hyp) {
        if g.frame != h.frame {
            return Err(Error::Input(format!("frame {} is aligned with frame {}", g.frame, h.frame)));
        }
        check_unique(g, "ground-truth")?;
        check_unique(h, "hypothesis")?;
        let mut current = HashMap::new();

        for class in ObjectClass::ALL {
            let gts: Vec<&LabeledBox> = g.boxes.iter().filter(|b| b.class == class).collect();
            let hyps: Vec<&LabeledBox> = h.boxes.iter().filter(|b| b.class == class).collect();
            if gts.is_empty() && hyps.is_empty() {
                continue;
            }
            let counts = report.per_class.entry(class).or_default();
            counts.gt += gts.len();

            let mut gt_pair: Vec<Option<(usize, f64)>> = vec![None; gts.len()];
            let mut hyp_used = vec![false; hyps.len()];

            for (gi, gb) in gts.iter().enumerate() {
                let Some(&prev_id) = previous.get(&(class, gb.id)) else {
                    continue;
                };
                let Some(hi) = hyps.iter().position(|hb| hb.id == prev_id) else {
                    continue;
                };
                if hyp_used[hi] {
                    continue;
                }
                if let Some(d) = criterion.distance(&gb.bbox, &hyps[hi].bbox)? {
                    gt_pair[gi] = Some((hi, d));
                    hyp_used[hi] = true;
                }
            }

            let free_g: Vec<usize> = (0..gts.len()).filter(|&i| gt_pair[i].is_none()).collect();
            let free_h: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_used[i]).collect();
            let mut raw = vec![vec![None; free_h.len()]; free_g.len()];
            for (r, &gi) in free_g.iter().enumerate() {
                for (c, &hi) in free_h.iter().enumerate() {
                    raw[r][c] = criterion.distance(&gts[gi].bbox, &hyps[hi].bbox)?;
                }
            }
            let scale = match criterion {
                MatchCriterion::Iou(_) => 1.0,
                MatchCriterion::CenterDistance(t) => t,
            };
            let costs = CostMatrix::from_fn(free_g.len(), free_h.len(), |r, c| {
                raw[r][c].map_or(INADMISSIBLE, |d| d / scale)
            });
            // gate 1 admits every matchable pair; inadmissible ones carry INADMISSIBLE
            let assigned = solve_gated_assignment(&costs, 1.0)?;
            for (r, c, _) in assigned.matches {
                let d = raw[r][c].expect("assignment only returns matchable pairs");
                gt_pair[free_g[r]] = Some((free_h[c], d));
                hyp_used[free_h[c]] = true;
            }

            for (gi, pair) in gt_pair.iter().enumerate() {
                let gid = gts[gi].id;
                match pair {
                    Some((hi, d)) => {
                        let hid = hyps[*hi].id;
                        if last_match.get(&(class, gid)).is_some_and(|&prev| prev != hid) {
                            counts.mismatches += 1;
                        }
                        last_match.insert((class, gid), hid);
                        current.insert((class, gid), hid);
                        counts.matches += 1;
                        counts.distance_sum += d;
                    }
                    None => counts.misses += 1,
                }
            }
            counts.false_positives += hyp_used.iter().filter(|u| !**u).count();
        }
        previous = current;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Box2D, Box3D};

    fn b(id: u64, x: f64) -> LabeledBox {
        LabeledBox {
            id,
            bbox: BoundingBox::D2(Box2D::new(x, 0.0, 10.0, 10.0).unwrap()),
            class: ObjectClass::Vehicle,
        }
    }

    fn frame(frame: u64, boxes: Vec<LabeledBox>) -> FrameBoxes {
        FrameBoxes { frame, boxes }
    }

    pub(crate) fn three_event_fixture() -> (Vec<FrameBoxes>, Vec<FrameBoxes>) {
        let gt = (0..3).map(|f| frame(f, vec![b(1, 0.0), b(2, 100.0)])).collect();
        let hyp = vec![
            frame(0, vec![b(10, 0.0), b(20, 100.0)]),
            // object 2 missed, one spurious box
            frame(1, vec![b(10, 1.0), b(30, 500.0)]),
            // object 1 picked up by a different id
            frame(2, vec![b(11, 0.0), b(20, 100.0)]),
        ];
        (gt, hyp)
    }

    #[test]
    fn perfect_tracking() {
        let (gt, _) = three_event_fixture();
        let r = evaluate(&gt, &gt, MatchCriterion::Iou(0.5)).unwrap();
        let t = r.total();
        assert_eq!(t.mota(), 1.0);
        assert_eq!((t.false_positives, t.misses, t.mismatches), (0, 0, 0));
        assert_eq!(t.motp(), 0.0);
    }

    #[test]
    fn three_events_give_half() {
        let (gt, hyp) = three_event_fixture();
        let t = evaluate(&gt, &hyp, MatchCriterion::Iou(0.5)).unwrap().total();
        assert_eq!((t.gt, t.false_positives, t.misses, t.mismatches), (6, 1, 1, 1));
        assert_eq!(t.mota(), 0.5);
    }

    #[test]
    fn empty_hypothesis() {
        let (gt, _) = three_event_fixture();
        let hyp: Vec<_> = (0..3).map(|f| frame(f, vec![])).collect();
        let t = evaluate(&gt, &hyp, MatchCriterion::Iou(0.5)).unwrap().total();
        assert_eq!(t.misses, 6);
        assert_eq!(t.mota(), 0.0);
    }

    #[test]
    fn persistence_beats_a_better_newcomer() {
        let gt = vec![frame(0, vec![b(1, 0.0)]), frame(1, vec![b(1, 0.0)])];
        // frame 1: id 10 drifted but is still matchable, id 11 is exact
        let hyp = vec![frame(0, vec![b(10, 0.0)]), frame(1, vec![b(10, 2.0), b(11, 0.0)])];
        let t = evaluate(&gt, &hyp, MatchCriterion::Iou(0.5)).unwrap().total();
        assert_eq!((t.mismatches, t.false_positives), (0, 1));
    }

    #[test]
    fn mismatch_survives_gaps() {
        let gt: Vec<_> = (0..3).map(|f| frame(f, vec![b(1, 0.0)])).collect();
        let hyp = vec![frame(0, vec![b(10, 0.0)]), frame(1, vec![]), frame(2, vec![b(11, 0.0)])];
        let t = evaluate(&gt, &hyp, MatchCriterion::Iou(0.5)).unwrap().total();
        assert_eq!((t.misses, t.mismatches), (1, 1));
    }

    #[test]
    fn distance_mode() {
        let g = |x| LabeledBox {
            id: 1,
            bbox: BoundingBox::D3(Box3D::new(x, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap()),
            class: ObjectClass::Pedestrian,
        };
        let gt = vec![frame(0, vec![g(0.0)])];
        let near = vec![frame(0, vec![g(1.5)])];
        let far = vec![frame(0, vec![g(2.5)])];
        let r = evaluate(&gt, &near, MatchCriterion::CenterDistance(2.0)).unwrap().total();
        assert_eq!(r.matches, 1);
        assert_eq!(r.motp(), 1.5);
        let r = evaluate(&gt, &far, MatchCriterion::CenterDistance(2.0)).unwrap().total();
        assert_eq!((r.misses, r.false_positives), (1, 1));
        assert!(evaluate(&gt, &near, MatchCriterion::Iou(0.5)).is_err());
    }

    #[test]
    fn classes_do_not_match_each_other() {
        let gt = vec![frame(0, vec![b(1, 0.0)])];
        let mut other = b(1, 0.0);
        other.class = ObjectClass::Cyclist;
        let t = evaluate(&gt, &[frame(0, vec![other])], MatchCriterion::Iou(0.5)).unwrap();
        assert_eq!(t.per_class[&ObjectClass::Vehicle].misses, 1);
        assert_eq!(t.per_class[&ObjectClass::Cyclist].false_positives, 1);
    }

    #[test]
    fn misaligned_frames_rejected() {
        let (gt, hyp) = three_event_fixture();
        assert!(evaluate(&gt, &hyp[..2], MatchCriterion::Iou(0.5)).is_err());
        let shifted: Vec<_> = hyp.iter().map(|f| frame(f.frame + 1, f.boxes.clone())).collect();
        assert!(evaluate(&gt, &shifted, MatchCriterion::Iou(0.5)).is_err());
        let dup = vec![frame(0, vec![b(1, 0.0), b(1, 50.0)])];
        assert!(evaluate(&dup, &dup, MatchCriterion::Iou(0.5)).is_err());
    }

    #[test]
    fn report_rendering() {
        let (gt, hyp) = three_event_fixture();
        let r = evaluate(&gt, &hyp, MatchCriterion::Iou(0.5)).unwrap();
        let csv = r.to_csv();
        assert!(csv.lines().any(|l| l.starts_with("all,0.500000,")), "{csv}");
        assert!(r.to_table().contains("0.500"));
        let mut merged = r.clone();
        merged.merge(&r);
        assert_eq!(merged.total().gt, 12);
        assert_eq!(merged.total().mota(), 0.5);
    }
}
