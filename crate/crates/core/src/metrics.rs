//! Association costs between tracks and detections, all in `[0, 1]` with
//! lower meaning more similar (the cosine distance spans `[0, 2]`).

use log::warn;

use crate::error::{Error, Result};
use crate::model::{Box2D, Box3D, Detection, Embedding};

/// Intersection over union of two axis-aligned boxes.
pub fn iou_2d(a: &Box2D, b: &Box2D) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// `1 - IoU` after scaling both boxes by `factor` about their centers.
pub fn iou_dist_enlarged(a: &Box2D, b: &Box2D, factor: f64) -> f64 {
    debug_assert!(factor >= 1.0);
    1.0 - iou_2d(&a.scaled(factor), &b.scaled(factor))
}

/// Gaussian-kernel distance of 3D centers: `1 - exp(-d² / 2σ²)`.
pub fn gauss_center_dist(a: &Box3D, b: &Box3D, sigma: f64) -> f64 {
    let d2: f64 = a
        .center()
        .iter()
        .zip(b.center())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    -(-d2 / (2.0 * sigma * sigma)).exp_m1()
}

/// Smallest cosine distance between `e` and any gallery entry.
pub fn cosine_gallery_dist<'a, I>(gallery: I, e: &Embedding) -> Result<f64>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    gallery
        .into_iter()
        .map(|g| 1.0 - g.dot(e))
        .fold(None, |best: Option<f64>, d| Some(best.map_or(d, |b| b.min(d))))
        .map(|d| d.clamp(0.0, 2.0))
        .ok_or(Error::NoFeature)
}

type Point = [f64; 2];

fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    twice.abs() / 2.0
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segment_line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland–Hodgman clipping of `subject` by the convex counter-clockwise
/// polygon `clip`.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Ground-plane overlap area of two oriented boxes.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners()))
}

/// Bird's-eye-view IoU: rotated-rectangle IoU in the ground plane.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    let area_a = a.l * a.w;
    let area_b = b.l * b.w;
    if !(area_a > 0.0 && area_b > 0.0) {
        warn!("bev_iou on a zero-area rectangle");
        return 0.0;
    }
    let inter = bev_intersection_area(a, b);
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

/// Volumetric IoU: BEV overlap times vertical overlap over the union volume.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let top = (a.cz + a.h / 2.0).min(b.cz + b.h / 2.0);
    let bottom = (a.cz - a.h / 2.0).max(b.cz - b.h / 2.0);
    let dz = (top - bottom).max(0.0);
    if dz == 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    let union = a.l * a.w * a.h + b.l * b.w * b.h - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression over 2D detections of one class.
///
/// Detections are visited by descending score (ties keep input order) and
/// kept while their IoU with every kept detection is at most `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    let boxes = dets
        .iter()
        .map(|d| {
            d.bbox
                .as_2d()
                .copied()
                .ok_or_else(|| Error::InvalidValue("nms expects 2D boxes".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = dets.first() {
        if dets.iter().any(|d| d.class != first.class) {
            return Err(Error::InvalidValue("nms expects detections of one class".into()));
        }
    }
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    Ok(nms_indices(&boxes, &scores, iou_threshold)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect())
}

/// Index form of [`nms`].
pub fn nms_indices(boxes: &[Box2D], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // stable sort keeps input order among equal scores
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| iou_2d(&boxes[k], &boxes[i]) <= iou_threshold) {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Camera, ObjectClass};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn b2(cx: f64, cy: f64, w: f64, h: f64) -> Box2D {
        Box2D::new(cx, cy, w, h).unwrap()
    }

    fn b3(cx: f64, cy: f64, w: f64, l: f64, theta: f64) -> Box3D {
        Box3D::new(cx, cy, 0.0, 1.0, w, l, theta).unwrap()
    }

    fn unit(v: Vec<f64>) -> Embedding {
        Embedding::normalized(v).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = b2(1.0, 1.0, 2.0, 2.0);
        assert_eq!(iou_2d(&a, &a), 1.0);
        assert_eq!(iou_2d(&a, &b2(10.0, 10.0, 2.0, 2.0)), 0.0);
        let b = b2(2.0, 2.0, 2.0, 2.0);
        assert!((iou_2d(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        // touching edges
        assert_eq!(iou_2d(&a, &b2(3.0, 1.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn enlarged_examples() {
        let a = b2(0.0, 0.0, 1.0, 1.0);
        let b = b2(2.0, 0.0, 1.0, 1.0);
        let c = b2(0.3, 0.2, 1.5, 0.8);
        assert_eq!(iou_dist_enlarged(&a, &c, 1.0), 1.0 - iou_2d(&a, &c));
        assert_eq!(iou_dist_enlarged(&a, &b, 1.0), 1.0);
        // 3-unit boxes whose centers are 2 apart overlap by 1: IoU = 3 / 15
        let d3 = iou_dist_enlarged(&a, &b, 3.0);
        assert!((d3 - 0.8).abs() < 1e-12);
        assert!(d3 < 1.0);
    }

    #[test]
    fn gauss_examples() {
        let a = b3(1.0, 2.0, 2.0, 4.0, 0.0);
        assert_eq!(gauss_center_dist(&a, &a, 5.0), 0.0);
        let b = b3(4.0, 6.0, 2.0, 4.0, 1.0);
        let expected = 1.0 - (-0.5f64).exp();
        assert!((gauss_center_dist(&a, &b, 5.0) - expected).abs() < 1e-15);
        assert!((expected - 0.393469).abs() < 1e-6);
        let sigma = 3.0;
        let d = sigma * (2.0 * 2f64.ln()).sqrt();
        let c = b3(1.0 + d, 2.0, 2.0, 4.0, 0.0);
        assert!((gauss_center_dist(&a, &c, sigma) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bev_examples() {
        let a = b3(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!((bev_iou(&a, &a) - 1.0).abs() < 1e-12);
        // regular octagon: area 2(√2 − 1), IoU = 1/√2
        let r = b3(0.0, 0.0, 1.0, 1.0, FRAC_PI_4);
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        assert!((bev_intersection_area(&a, &r) - inter).abs() < 1e-12);
        assert!((bev_iou(&a, &r) - inter / (2.0 - inter)).abs() < 1e-12);
        assert!((bev_iou(&a, &r) - 0.5f64.sqrt()).abs() < 1e-12);
        // axis-aligned: l along x, w along y
        let p = b3(1.0, 2.0, 1.5, 3.0, 0.0);
        let q = b3(2.0, 2.5, 2.0, 2.5, 0.0);
        let expected = iou_2d(&b2(1.0, 2.0, 3.0, 1.5), &b2(2.0, 2.5, 2.5, 2.0));
        assert!((bev_iou(&p, &q) - expected).abs() < 1e-12);
        // a half-turn does not change the rectangle
        let p_flipped = b3(1.0, 2.0, 1.5, 3.0, -PI);
        assert!((bev_iou(&p_flipped, &q) - expected).abs() < 1e-12);
        assert_eq!(bev_iou(&a, &b3(5.0, 5.0, 1.0, 1.0, 0.3)), 0.0);
    }

    #[test]
    fn iou_3d_stacks_vertical_overlap() {
        let a = Box3D::new(0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 0.0).unwrap();
        let b = Box3D::new(0.0, 0.0, 1.0, 2.0, 1.0, 1.0, 0.0).unwrap();
        // half the height overlaps: 1 / (2 + 2 - 1)
        assert!((iou_3d(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        let c = Box3D::new(0.0, 0.0, 5.0, 2.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(iou_3d(&a, &c), 0.0);
    }

    #[test]
    fn cosine_examples() {
        let g1 = unit(vec![1.0, 0.0, 0.0]);
        let g2 = unit(vec![0.0, 1.0, 0.0]);
        let e = unit(vec![0.2, 0.9, 0.1]);
        assert!(cosine_gallery_dist([&g1], &g1).unwrap().abs() < 1e-15);
        assert_eq!(cosine_gallery_dist([&g1], &g2).unwrap(), 1.0);
        let both = cosine_gallery_dist([&g1, &g2], &e).unwrap();
        let d1 = 1.0 - g1.dot(&e);
        let d2 = 1.0 - g2.dot(&e);
        assert!(d2 < d1);
        assert_eq!(both, d2);
        let anti = unit(vec![-1.0, 0.0, 0.0]);
        assert_eq!(cosine_gallery_dist([&g1], &anti).unwrap(), 2.0);
        assert!(matches!(cosine_gallery_dist(std::iter::empty(), &e), Err(Error::NoFeature)));
    }

    fn det(b: Box2D, score: f64) -> Detection {
        Detection::new_2d(b, score, ObjectClass::Vehicle, Camera::Front).unwrap()
    }

    #[test]
    fn nms_examples() {
        let a = det(b2(0.5, 0.5, 1.0, 1.0), 0.9);
        assert_eq!(nms(std::slice::from_ref(&a), 0.5).unwrap(), vec![a.clone()]);

        let dup = det(b2(0.5, 0.5, 1.0, 1.0), 0.8);
        assert_eq!(nms(&[dup.clone(), a.clone()], 0.5).unwrap(), vec![a.clone()]);

        // B overlaps A with IoU 0.6; C overlaps A with IoU 0.3
        let shift_b = 0.25;
        let shift_c = 0.7 / 1.3;
        let b = det(b2(0.5 + shift_b, 0.5, 1.0, 1.0), 0.8);
        let c = det(b2(0.5, 0.5 - shift_c, 1.0, 1.0), 0.7);
        let ba = iou_2d(a.bbox.as_2d().unwrap(), b.bbox.as_2d().unwrap());
        let ca = iou_2d(a.bbox.as_2d().unwrap(), c.bbox.as_2d().unwrap());
        assert!((ba - 0.6).abs() < 1e-12 && (ca - 0.3).abs() < 1e-12);
        let kept = nms(&[c.clone(), b, a.clone()], 0.5).unwrap();
        assert_eq!(kept, vec![a, c]);
    }

    #[test]
    fn nms_ties_keep_input_order() {
        let boxes = [b2(0.0, 0.0, 1.0, 1.0), b2(0.0, 0.0, 1.0, 1.0), b2(9.0, 9.0, 1.0, 1.0)];
        assert_eq!(nms_indices(&boxes, &[0.5, 0.5, 0.5], 0.5), vec![0, 2]);
        assert_eq!(nms_indices(&boxes, &[0.5, 0.5, 0.5], 1.0), vec![0, 1, 2]);
    }

    #[test]
    fn nms_rejects_3d_and_mixed_classes() {
        let d3 = Detection::new_3d(b3(0.0, 0.0, 1.0, 1.0, 0.0), 0.5, ObjectClass::Vehicle).unwrap();
        assert!(nms(&[d3], 0.5).is_err());
        let a = det(b2(0.0, 0.0, 1.0, 1.0), 0.5);
        let mut b = a.clone();
        b.class = ObjectClass::Cyclist;
        assert!(nms(&[a, b], 0.5).is_err());
    }

    fn arb_box() -> impl Strategy<Value = Box2D> {
        (-50.0f64..50.0, -50.0f64..50.0, 0.5f64..30.0, 0.5f64..30.0).prop_map(|(x, y, w, h)| b2(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou_2d(&a, &b);
            prop_assert_eq!(ab, iou_2d(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn costs_translation_invariant(a in arb_box(), b in arb_box(), dx in -8.0f64..8.0, dy in -8.0f64..8.0) {
            let ta = b2(a.cx + dx, a.cy + dy, a.w, a.h);
            let tb = b2(b.cx + dx, b.cy + dy, b.w, b.h);
            prop_assert!((iou_2d(&a, &b) - iou_2d(&ta, &tb)).abs() < 1e-9);
            prop_assert!((iou_dist_enlarged(&a, &b, 2.0) - iou_dist_enlarged(&ta, &tb, 2.0)).abs() < 1e-9);
        }

        #[test]
        fn gauss_translation_invariant_and_symmetric(
            p in prop::array::uniform3(-30.0f64..30.0),
            q in prop::array::uniform3(-30.0f64..30.0),
            t in prop::array::uniform3(-30.0f64..30.0),
            sigma in 0.5f64..6.0,
        ) {
            let a = Box3D::new(p[0], p[1], p[2], 1.0, 1.0, 1.0, 0.0).unwrap();
            let b = Box3D::new(q[0], q[1], q[2], 1.0, 2.0, 3.0, 1.0).unwrap();
            let ta = Box3D::new(p[0] + t[0], p[1] + t[1], p[2] + t[2], 1.0, 1.0, 1.0, 0.0).unwrap();
            let tb = Box3D::new(q[0] + t[0], q[1] + t[1], q[2] + t[2], 1.0, 2.0, 3.0, 1.0).unwrap();
            let d = gauss_center_dist(&a, &b, sigma);
            prop_assert_eq!(d, gauss_center_dist(&b, &a, sigma));
            prop_assert!((d - gauss_center_dist(&ta, &tb, sigma)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn gallery_min_is_a_lower_bound(seed in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 2..6)) {
            let embs: Vec<Embedding> = seed.into_iter().filter_map(|v| Embedding::normalized(v).ok()).collect();
            prop_assume!(embs.len() >= 2);
            let (e, gallery) = embs.split_last().unwrap();
            let d = cosine_gallery_dist(gallery, e).unwrap();
            for g in gallery {
                prop_assert!(d <= 1.0 - g.dot(e) + 1e-15);
            }
        }

        #[test]
        fn nms_output_is_consistent(
            boxes in prop::collection::vec(arb_box(), 0..12),
            thr in 0.1f64..0.9,
        ) {
            let scores: Vec<f64> = (0..boxes.len()).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
            let kept = nms_indices(&boxes, &scores, thr);
            let mut uniq = kept.clone();
            uniq.sort_unstable();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), kept.len());
            for (i, &a) in kept.iter().enumerate() {
                for &b in &kept[i + 1..] {
                    prop_assert!(iou_2d(&boxes[a], &boxes[b]) <= thr);
                    prop_assert!(scores[a] >= scores[b]);
                }
            }
        }
    }
}
