//! Constant-velocity Kalman filtering of image-space and world-space boxes.
//!
//! Image-space state is `(cx, cy, γ, h, vcx, vcy, vγ, vh)` with `γ = w / h`;
//! world-space state is `(cx, cy, cz, h, w, l, θ, vcx, vcy, vcz)`. Velocities
//! are per frame.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_heading, wrap_angle_diff, BoundingBox, Box2D, Box3D, Detection};

pub const DIM_2D: usize = 8;
pub const OBS_2D: usize = 4;
pub const DIM_3D: usize = 10;
pub const OBS_3D: usize = 7;

/// Heading slot in the world-space state.
const HEADING: usize = 6;

/// 0.95 quantiles of the chi-square distribution for 4 and 7 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;
pub const CHI2_95_7DOF: f64 = 14.0671;

const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct State2D {
    pub mean: SVector<f64, DIM_2D>,
    pub covariance: SMatrix<f64, DIM_2D, DIM_2D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State3D {
    pub mean: SVector<f64, DIM_3D>,
    pub covariance: SMatrix<f64, DIM_3D, DIM_3D>,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TrackState {
    D2(State2D),
    D3(State3D),
}

impl State2D {
    /// `(cx, cy, w/h, h)` with zero velocities and zero covariance.
    pub fn from_box(b: &Box2D) -> Self {
        let mut mean = SVector::<f64, DIM_2D>::zeros();
        mean[0] = b.cx;
        mean[1] = b.cy;
        mean[2] = b.w / b.h;
        mean[3] = b.h;
        Self {
            mean,
            covariance: SMatrix::zeros(),
        }
    }

    pub fn to_box(&self) -> Result<Box2D> {
        let m = &self.mean;
        let w = m[2] * m[3];
        if !(w > 0.0 && m[3] > 0.0) {
            return Err(Error::DegenerateBox(format!("aspect {} x height {}", m[2], m[3])));
        }
        Box2D::new(m[0], m[1], w, m[3])
    }
}

impl State3D {
    pub fn from_box(b: &Box3D) -> Self {
        let mut mean = SVector::<f64, DIM_3D>::zeros();
        for (i, v) in b.to_array().into_iter().enumerate() {
            mean[i] = v;
        }
        Self {
            mean,
            covariance: SMatrix::zeros(),
        }
    }

    pub fn to_box(&self) -> Result<Box3D> {
        let m = &self.mean;
        Box3D::new(m[0], m[1], m[2], m[3], m[4], m[5], m[6])
    }
}

impl TrackState {
    pub fn to_box(&self) -> Result<BoundingBox> {
        Ok(match self {
            TrackState::D2(s) => BoundingBox::D2(s.to_box()?),
            TrackState::D3(s) => BoundingBox::D3(s.to_box()?),
        })
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            TrackState::D2(s) => s.mean.as_slice(),
            TrackState::D3(s) => s.mean.as_slice(),
        }
    }

    pub fn covariance_trace(&self) -> f64 {
        match self {
            TrackState::D2(s) => s.covariance.trace(),
            TrackState::D3(s) => s.covariance.trace(),
        }
    }
}

/// Noise of the image-space model. Standard deviations of position, height
/// and their velocities scale with the box height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Noise2D {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    /// Measurement std of `cx, cy, h` as a fraction of `h`.
    pub std_weight_measurement: f64,
    pub std_aspect: f64,
    pub std_aspect_velocity: f64,
    pub std_aspect_measurement: f64,
}

impl Default for Noise2D {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            std_weight_measurement: 1.0 / 20.0,
            std_aspect: 1e-2,
            std_aspect_velocity: 1e-5,
            std_aspect_measurement: 1e-1,
        }
    }
}

/// Fixed diagonal noise of the world-space model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Noise3D {
    pub process_position_std: f64,
    pub process_size_std: f64,
    pub process_heading_std: f64,
    pub process_velocity_std: f64,
    pub measurement_position_std: f64,
    pub measurement_size_std: f64,
    pub measurement_heading_std: f64,
}

impl Default for Noise3D {
    fn default() -> Self {
        Self {
            process_position_std: 1.0,
            process_size_std: 0.1,
            process_heading_std: 0.1,
            process_velocity_std: 0.5,
            measurement_position_std: 0.5,
            measurement_size_std: 0.1,
            measurement_heading_std: 0.1,
        }
    }
}

/// Initial velocity variance as a multiple of the observed-component variance.
pub const INIT_VELOCITY_VARIANCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionModel {
    pub noise_2d: Noise2D,
    pub noise_3d: Noise3D,
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        let n2 = &self.noise_2d;
        let n3 = &self.noise_3d;
        let all = [
            n2.std_weight_position,
            n2.std_weight_velocity,
            n2.std_weight_measurement,
            n2.std_aspect,
            n2.std_aspect_velocity,
            n2.std_aspect_measurement,
            n3.process_position_std,
            n3.process_size_std,
            n3.process_heading_std,
            n3.process_velocity_std,
            n3.measurement_position_std,
            n3.measurement_size_std,
            n3.measurement_heading_std,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("Kalman noise scales must be finite and > 0".into()))
        }
    }

    /// Constant-velocity transition: the first four components advance by
    /// their velocities.
    pub fn transition_2d() -> SMatrix<f64, DIM_2D, DIM_2D> {
        let mut f = SMatrix::identity();
        for i in 0..OBS_2D {
            f[(i, OBS_2D + i)] = 1.0;
        }
        f
    }

    /// Constant-velocity transition: the center advances, sizes and heading stay.
    pub fn transition_3d() -> SMatrix<f64, DIM_3D, DIM_3D> {
        let mut f = SMatrix::identity();
        for i in 0..3 {
            f[(i, OBS_3D + i)] = 1.0;
        }
        f
    }

    pub fn observation_2d() -> SMatrix<f64, OBS_2D, DIM_2D> {
        SMatrix::identity()
    }

    pub fn observation_3d() -> SMatrix<f64, OBS_3D, DIM_3D> {
        SMatrix::identity()
    }

    pub fn process_noise_2d(&self, mean: &SVector<f64, DIM_2D>) -> SMatrix<f64, DIM_2D, DIM_2D> {
        let n = &self.noise_2d;
        let h = mean[3];
        let p = n.std_weight_position * h;
        let v = n.std_weight_velocity * h;
        let std = [p, p, n.std_aspect, p, v, v, n.std_aspect_velocity, v];
        SMatrix::from_diagonal(&SVector::from(std.map(|s| s * s)))
    }

    pub fn measurement_noise_2d(&self, height: f64) -> SMatrix<f64, OBS_2D, OBS_2D> {
        let n = &self.noise_2d;
        let m = n.std_weight_measurement * height;
        let std = [m, m, n.std_aspect_measurement, m];
        SMatrix::from_diagonal(&SVector::from(std.map(|s| s * s)))
    }

    pub fn process_noise_3d(&self) -> SMatrix<f64, DIM_3D, DIM_3D> {
        let n = &self.noise_3d;
        let (p, s, a, v) = (
            n.process_position_std,
            n.process_size_std,
            n.process_heading_std,
            n.process_velocity_std,
        );
        let std = [p, p, p, s, s, s, a, v, v, v];
        SMatrix::from_diagonal(&SVector::from(std.map(|x| x * x)))
    }

    pub fn measurement_noise_3d(&self) -> SMatrix<f64, OBS_3D, OBS_3D> {
        let n = &self.noise_3d;
        let (p, s, a) = (
            n.measurement_position_std,
            n.measurement_size_std,
            n.measurement_heading_std,
        );
        let std = [p, p, p, s, s, s, a];
        SMatrix::from_diagonal(&SVector::from(std.map(|x| x * x)))
    }

    /// Birth state of a new track: observed components from the detection,
    /// zero velocities, diagonal covariance.
    pub fn init_track_state(&self, det: &Detection) -> TrackState {
        match &det.bbox {
            BoundingBox::D2(b) => {
                let mut s = State2D::from_box(b);
                let n = &self.noise_2d;
                let p = 2.0 * n.std_weight_position * b.h;
                let obs_var = [p * p, p * p, n.std_aspect * n.std_aspect, p * p];
                let mut diag = [0.0; DIM_2D];
                for i in 0..OBS_2D {
                    diag[i] = obs_var[i];
                    diag[OBS_2D + i] = INIT_VELOCITY_VARIANCE_FACTOR * obs_var[i];
                }
                s.covariance = SMatrix::from_diagonal(&SVector::from(diag));
                TrackState::D2(s)
            }
            BoundingBox::D3(b) => {
                let mut s = State3D::from_box(b);
                let r = self.measurement_noise_3d();
                let mut diag = [0.0; DIM_3D];
                for i in 0..OBS_3D {
                    diag[i] = r[(i, i)];
                }
                for i in 0..3 {
                    diag[OBS_3D + i] = INIT_VELOCITY_VARIANCE_FACTOR * r[(i, i)];
                }
                s.covariance = SMatrix::from_diagonal(&SVector::from(diag));
                TrackState::D3(s)
            }
        }
    }

    /// One constant-velocity step: `x' = F x`, `P' = F P Fᵀ + Q`.
    pub fn predict(&self, state: &TrackState) -> Result<TrackState> {
        match state {
            TrackState::D2(s) => {
                if s.mean[3].is_nan() || s.mean[3] <= 0.0 {
                    return Err(Error::NumericFailure(format!("box height {} <= 0", s.mean[3])));
                }
                let q = self.process_noise_2d(&s.mean);
                let (mean, covariance) = propagate(&s.mean, &s.covariance, &Self::transition_2d(), &q)?;
                Ok(TrackState::D2(State2D { mean, covariance }))
            }
            TrackState::D3(s) => {
                let (mut mean, covariance) =
                    propagate(&s.mean, &s.covariance, &Self::transition_3d(), &self.process_noise_3d())?;
                mean[HEADING] = normalize_heading(mean[HEADING])?;
                Ok(TrackState::D3(State3D { mean, covariance }))
            }
        }
    }

    /// Measurement update with an associated detection.
    pub fn update(&self, state: &TrackState, det: &Detection) -> Result<TrackState> {
        match (state, &det.bbox) {
            (TrackState::D2(s), BoundingBox::D2(b)) => {
                let r = self.measurement_noise_2d(s.mean[3]);
                let y = innovation_2d(s, b);
                let (mean, covariance) = correct(&s.mean, &s.covariance, &Self::observation_2d(), &r, &y)?;
                Ok(TrackState::D2(State2D { mean, covariance }))
            }
            (TrackState::D3(s), BoundingBox::D3(b)) => {
                let y = innovation_3d(s, b);
                let (mut mean, covariance) = correct(
                    &s.mean,
                    &s.covariance,
                    &Self::observation_3d(),
                    &self.measurement_noise_3d(),
                    &y,
                )?;
                mean[HEADING] = normalize_heading(mean[HEADING])?;
                Ok(TrackState::D3(State3D { mean, covariance }))
            }
            _ => Err(Error::InvalidValue("detection dimensionality differs from track".into())),
        }
    }

    /// Squared Mahalanobis distance between the predicted observation and
    /// the detection.
    pub fn mahalanobis(&self, state: &TrackState, det: &Detection) -> Result<f64> {
        match (state, &det.bbox) {
            (TrackState::D2(s), BoundingBox::D2(b)) => {
                let h = Self::observation_2d();
                let cov = h * s.covariance * h.transpose() + self.measurement_noise_2d(s.mean[3]);
                squared_mahalanobis(&innovation_2d(s, b), &cov)
            }
            (TrackState::D3(s), BoundingBox::D3(b)) => {
                let h = Self::observation_3d();
                let cov = h * s.covariance * h.transpose() + self.measurement_noise_3d();
                squared_mahalanobis(&innovation_3d(s, b), &cov)
            }
            _ => Err(Error::InvalidValue("detection dimensionality differs from track".into())),
        }
    }
}

fn innovation_2d(s: &State2D, b: &Box2D) -> SVector<f64, OBS_2D> {
    let z = State2D::from_box(b).mean;
    SVector::from([z[0] - s.mean[0], z[1] - s.mean[1], z[2] - s.mean[2], z[3] - s.mean[3]])
}

/// Heading residual is wrapped; a residual beyond a quarter turn is taken as
/// a front/back flip of the detector and the detection heading is turned by π.
fn innovation_3d(s: &State3D, b: &Box3D) -> SVector<f64, OBS_3D> {
    let z = b.to_array();
    let mut y = SVector::<f64, OBS_3D>::zeros();
    for i in 0..HEADING {
        y[i] = z[i] - s.mean[i];
    }
    let mut dtheta = wrap_angle_diff(z[HEADING] - s.mean[HEADING]);
    if dtheta.abs() > std::f64::consts::FRAC_PI_2 {
        dtheta = wrap_angle_diff(dtheta + std::f64::consts::PI);
    }
    y[HEADING] = dtheta;
    y
}

/// `yᵀ S⁻¹ y` via a Cholesky factorization of `S`.
pub fn squared_mahalanobis<const M: usize>(y: &SVector<f64, M>, cov: &SMatrix<f64, M, M>) -> Result<f64> {
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::NumericFailure("innovation covariance is not positive definite".into()))?;
    let d = y.dot(&chol.solve(y));
    if d.is_finite() {
        Ok(d.max(0.0))
    } else {
        Err(Error::NumericFailure("non-finite Mahalanobis distance".into()))
    }
}

fn symmetrize<const N: usize>(m: &mut SMatrix<f64, N, N>) {
    let t = m.transpose();
    *m = (*m + t) * 0.5;
}

fn check_finite<const N: usize>(mean: &SVector<f64, N>, cov: &SMatrix<f64, N, N>) -> Result<()> {
    if mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericFailure("non-finite state".into()))
    }
}

fn propagate<const N: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    f: &SMatrix<f64, N, N>,
    q: &SMatrix<f64, N, N>,
) -> Result<(SVector<f64, N>, SMatrix<f64, N, N>)> {
    let mean = f * mean;
    let mut cov = f * cov * f.transpose() + q;
    symmetrize(&mut cov);
    check_finite(&mean, &cov)?;
    Ok((mean, cov))
}

/// Kalman correction with the Joseph-form covariance update.
fn correct<const N: usize, const M: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    h: &SMatrix<f64, M, N>,
    r: &SMatrix<f64, M, M>,
    innovation: &SVector<f64, M>,
) -> Result<(SVector<f64, N>, SMatrix<f64, N, N>)> {
    let mut s = h * cov * h.transpose() + r;
    symmetrize(&mut s);
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::NumericFailure("singular innovation covariance".into()))?;
    // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ for symmetric P and S
    let gain = chol.solve(&(h * cov)).transpose();
    let mean = mean + gain * innovation;
    let i_kh = SMatrix::<f64, N, N>::identity() - gain * h;
    let mut cov = i_kh * cov * i_kh.transpose() + gain * r * gain.transpose();
    symmetrize(&mut cov);
    check_finite(&mean, &cov)?;
    debug_assert!((cov - cov.transpose()).amax() < SYMMETRY_TOLERANCE);
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Camera, ObjectClass};

    fn det2(cx: f64, cy: f64, w: f64, h: f64) -> Detection {
        Detection::new_2d(Box2D::new(cx, cy, w, h).unwrap(), 0.9, ObjectClass::Pedestrian, Camera::Front).unwrap()
    }

    fn det3(cx: f64, cy: f64, theta: f64) -> Detection {
        Detection::new_3d(Box3D::new(cx, cy, 0.0, 1.5, 2.0, 4.0, theta).unwrap(), 0.9, ObjectClass::Vehicle).unwrap()
    }

    fn s2(state: &TrackState) -> &State2D {
        match state {
            TrackState::D2(s) => s,
            _ => panic!("expected 2D"),
        }
    }

    fn s3(state: &TrackState) -> &State3D {
        match state {
            TrackState::D3(s) => s,
            _ => panic!("expected 3D"),
        }
    }

    #[test]
    fn box_from_state_examples() {
        let mut s = State2D::from_box(&Box2D::new(0.0, 0.0, 1.0, 1.0).unwrap());
        s.mean[0] = 10.0;
        s.mean[1] = 20.0;
        s.mean[2] = 0.5;
        s.mean[3] = 100.0;
        assert_eq!(s.to_box().unwrap(), Box2D::new(10.0, 20.0, 50.0, 100.0).unwrap());
        s.mean[2] = 1.0;
        s.mean[3] = 1.0;
        assert_eq!(s.to_box().unwrap().w, 1.0);
        s.mean[2] = 2.0;
        s.mean[3] = 3.0;
        assert_eq!(s.to_box().unwrap().w, 6.0);
        s.mean[2] = -1.0;
        assert!(matches!(s.to_box(), Err(Error::DegenerateBox(_))));
    }

    #[test]
    fn state_box_round_trip() {
        for (cx, cy, g, h) in [(3.25, -7.5, 0.5, 100.0), (1.0, 1.0, 0.41, 180.0), (0.0, 0.0, 2.0, 3.0)] {
            let mut s = State2D::from_box(&Box2D::new(0.0, 0.0, 1.0, 1.0).unwrap());
            s.mean[0] = cx;
            s.mean[1] = cy;
            s.mean[2] = g;
            s.mean[3] = h;
            let back = State2D::from_box(&s.to_box().unwrap());
            assert_eq!(back.mean[0], cx);
            assert_eq!(back.mean[1], cy);
            assert!((back.mean[2] - g).abs() <= f64::EPSILON * g);
            assert_eq!(back.mean[3], h);
        }
    }

    #[test]
    fn init_examples() {
        let m = MotionModel::default();
        let st = m.init_track_state(&det2(5.0, 5.0, 2.0, 4.0));
        assert_eq!(s2(&st).mean.as_slice(), &[5.0, 5.0, 0.5, 4.0, 0.0, 0.0, 0.0, 0.0]);
        let c = &s2(&st).covariance;
        assert_eq!(c, &c.transpose());
        assert!(c.symmetric_eigenvalues().min() > 0.0);
        for i in 0..OBS_2D {
            assert!((c[(OBS_2D + i, OBS_2D + i)] - 10.0 * c[(i, i)]).abs() < 1e-12);
        }

        let st = m.init_track_state(&det3(0.0, 0.0, 0.0));
        let s = s3(&st);
        assert_eq!(&s.mean.as_slice()[..3], &[0.0; 3]);
        assert_eq!(&s.mean.as_slice()[3..6], &[1.5, 2.0, 4.0]);
        assert_eq!(&s.mean.as_slice()[6..], &[0.0; 4]);
        assert!(s.covariance.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn predict_one_step() {
        let m = MotionModel::default();
        let mut st = m.init_track_state(&det2(0.0, 0.0, 10.0, 10.0));
        if let TrackState::D2(s) = &mut st {
            s.mean = SVector::from([0.0, 0.0, 1.0, 10.0, 1.0, 2.0, 0.0, 0.0]);
        }
        let p = m.predict(&st).unwrap();
        assert_eq!(s2(&p).mean.as_slice(), &[1.0, 2.0, 1.0, 10.0, 1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn predict_zero_velocity_grows_covariance() {
        let m = MotionModel::default();
        let st = m.init_track_state(&det3(4.0, -2.0, 0.3));
        let p = m.predict(&st).unwrap();
        assert_eq!(&s3(&p).mean.as_slice()[..3], &[4.0, -2.0, 0.0]);
        assert!(p.covariance_trace() > st.covariance_trace());
    }

    #[test]
    fn predict_k_steps_is_linear() {
        let m = MotionModel::default();
        let mut st = m.init_track_state(&det3(1.5, -4.0, 0.0));
        if let TrackState::D3(s) = &mut st {
            s.mean[7] = 0.75;
            s.mean[8] = -1.25;
            s.mean[9] = 0.5;
        }
        let mut cur = st.clone();
        for k in 1..=16 {
            cur = m.predict(&cur).unwrap();
            let s = s3(&cur);
            let kf = k as f64;
            assert_eq!(s.mean[0], 1.5 + kf * 0.75);
            assert_eq!(s.mean[1], -4.0 - kf * 1.25);
            assert_eq!(s.mean[2], 0.5 * kf);
        }
    }

    #[test]
    fn zero_innovation_is_fixed_point() {
        let m = MotionModel::default();
        let d = det2(50.0, 60.0, 20.0, 40.0);
        let st = m.predict(&m.init_track_state(&d)).unwrap();
        let u = m.update(&st, &d).unwrap();
        for (a, b) in s2(&u).mean.iter().zip(s2(&st).mean.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(m.mahalanobis(&st, &d).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tiny_measurement_noise_snaps_to_detection() {
        let mut m = MotionModel::default();
        m.noise_2d.std_weight_measurement = 1e-8;
        m.noise_2d.std_aspect_measurement = 1e-8;
        m.noise_3d.measurement_position_std = 1e-8;
        m.noise_3d.measurement_size_std = 1e-8;
        m.noise_3d.measurement_heading_std = 1e-8;

        let st = m.predict(&m.init_track_state(&det2(50.0, 60.0, 20.0, 40.0))).unwrap();
        let target = det2(57.0, 52.0, 24.0, 44.0);
        let u = m.update(&st, &target).unwrap();
        let z = State2D::from_box(target.bbox.as_2d().unwrap()).mean;
        for i in 0..OBS_2D {
            assert!((s2(&u).mean[i] - z[i]).abs() < 1e-6, "component {i}");
        }

        let st = m.predict(&m.init_track_state(&det3(0.0, 0.0, 0.1))).unwrap();
        let target = det3(1.0, -0.5, 0.2);
        let u = m.update(&st, &target).unwrap();
        let z = target.bbox.as_3d().unwrap().to_array();
        for i in 0..OBS_3D {
            assert!((s3(&u).mean[i] - z[i]).abs() < 1e-6, "component {i}");
        }
    }

    #[test]
    fn repeated_updates_converge_monotonically() {
        let m = MotionModel::default();
        let target = det3(3.0, 2.0, 0.4);
        let z = target.bbox.as_3d().unwrap().to_array();
        let mut st = m.init_track_state(&det3(0.0, 0.0, 0.0));
        let err = |s: &TrackState| {
            s3(s).mean.as_slice()[..OBS_3D]
                .iter()
                .zip(z)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let initial = err(&st);
        let mut last = initial;
        for _ in 0..20 {
            st = m.update(&st, &target).unwrap();
            let e = err(&st);
            assert!(e <= last, "{e} > {last}");
            last = e;
        }
        // equal prior and measurement variance: error shrinks like 1 / (n + 1)
        assert!(last < initial / 20.0, "{last} vs {initial}");
    }

    #[test]
    fn posterior_diagonal_shrinks() {
        let m = MotionModel::default();
        let st = m.predict(&m.init_track_state(&det2(50.0, 60.0, 20.0, 40.0))).unwrap();
        let u = m.update(&st, &det2(52.0, 61.0, 21.0, 41.0)).unwrap();
        for i in 0..OBS_2D {
            assert!(s2(&u).covariance[(i, i)] <= s2(&st).covariance[(i, i)]);
        }
    }

    #[test]
    fn heading_flip_is_absorbed() {
        let m = MotionModel::default();
        let st = m.predict(&m.init_track_state(&det3(0.0, 0.0, 3.0))).unwrap();
        // detector reports the opposite direction, across the ±π seam
        let flipped = det3(0.0, 0.0, 3.0 - std::f64::consts::PI);
        let u = m.update(&st, &flipped).unwrap();
        let prior = s3(&st).mean[HEADING];
        let post = s3(&u).mean[HEADING];
        assert!(wrap_angle_diff(post - prior).abs() < 1e-9);

        let across = det3(0.0, 0.0, -3.1);
        let u = m.update(&st, &across).unwrap();
        let post = s3(&u).mean[HEADING];
        assert!(wrap_angle_diff(post - prior).abs() <= 0.2);
        assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&post));
    }

    #[test]
    fn mahalanobis_identity_metric() {
        let y = SVector::from([3.0, 4.0, 0.0, 0.0]);
        let d = squared_mahalanobis(&y, &SMatrix::<f64, 4, 4>::identity()).unwrap();
        assert_eq!(d, 25.0);
        let scaled = squared_mahalanobis(&y, &(SMatrix::<f64, 4, 4>::identity() * 4.0)).unwrap();
        assert!((scaled - 25.0 / 4.0).abs() < 1e-12);
        assert!(squared_mahalanobis(&y, &SMatrix::<f64, 4, 4>::zeros()).is_err());
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let m = MotionModel::default();
        let st = m.init_track_state(&det2(1.0, 1.0, 1.0, 1.0));
        assert!(m.update(&st, &det3(0.0, 0.0, 0.0)).is_err());
    }
}
