//! JSON configuration file. Every key is optional; omitted keys take the
//! tuned per-class defaults of the selected mode and unknown keys are
//! rejected.
//!
//! ```json
//! {
//!   "mode": "2d",
//!   "pedestrian": { "score_threshold": 0.6, "max_iou_dist": { "side": 0.98 } },
//!   "kalman": { "noise_3d": { "measurement_position_std": 0.3 } },
//!   "mahalanobis_gating": false
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::MotionModel;
use crate::model::{ClassConfig, Mode, ObjectClass};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IouGatesOverride {
    pub front: Option<f64>,
    pub front_side: Option<f64>,
    pub side: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassOverrides {
    pub score_threshold: Option<f64>,
    pub max_age: Option<u32>,
    pub min_hits: Option<u32>,
    pub gallery_budget: Option<usize>,
    pub max_appearance_dist: Option<f64>,
    pub max_iou_dist: Option<IouGatesOverride>,
    pub stage2_enlargement: Option<f64>,
    pub stage3_enlargement: Option<f64>,
    pub sigma: Option<f64>,
    pub max_center_dist: Option<f64>,
}

impl ClassOverrides {
    fn apply(&self, c: &mut ClassConfig) {
        fn set<T: Copy>(dst: &mut T, src: Option<T>) {
            if let Some(v) = src {
                *dst = v;
            }
        }
        set(&mut c.score_threshold, self.score_threshold);
        set(&mut c.max_age, self.max_age);
        set(&mut c.min_hits, self.min_hits);
        set(&mut c.gallery_budget, self.gallery_budget);
        set(&mut c.max_appearance_dist, self.max_appearance_dist);
        if let Some(g) = &self.max_iou_dist {
            set(&mut c.max_iou_dist.front, g.front);
            set(&mut c.max_iou_dist.front_side, g.front_side);
            set(&mut c.max_iou_dist.side, g.side);
        }
        set(&mut c.stage2_enlargement, self.stage2_enlargement);
        set(&mut c.stage3_enlargement, self.stage3_enlargement);
        set(&mut c.sigma, self.sigma);
        set(&mut c.max_center_dist, self.max_center_dist);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Option<Mode>,
    pub vehicle: Option<ClassOverrides>,
    pub pedestrian: Option<ClassOverrides>,
    pub cyclist: Option<ClassOverrides>,
    pub kalman: Option<MotionModel>,
    pub stage3: Option<bool>,
    pub reid: Option<bool>,
    pub mahalanobis_gating: Option<bool>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("at '{}': {}", e.path(), e.inner())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn overrides(&self, class: ObjectClass) -> Option<&ClassOverrides> {
        match class {
            ObjectClass::Vehicle => self.vehicle.as_ref(),
            ObjectClass::Pedestrian => self.pedestrian.as_ref(),
            ObjectClass::Cyclist => self.cyclist.as_ref(),
        }
    }

    /// Effective tracker configuration for `mode`. A `mode` key in the file
    /// must agree with it.
    pub fn resolve(&self, mode: Mode) -> Result<TrackerConfig> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(Error::Config(format!("config is for {m} but {mode} was requested")));
            }
        }
        let mut cfg = TrackerConfig::new(mode);
        for class in ObjectClass::ALL {
            if let Some(o) = self.overrides(class) {
                o.apply(cfg.classes.get_mut(class));
            }
        }
        if let Some(k) = self.kalman {
            cfg.motion = k;
        }
        if let Some(v) = self.stage3 {
            cfg.stage3 = v;
        }
        if let Some(v) = self.reid {
            cfg.reid = v;
        }
        if let Some(v) = self.mahalanobis_gating {
            cfg.mahalanobis_gating = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_defaults() {
        let cfg = ConfigFile::from_json("{}").unwrap().resolve(Mode::D2).unwrap();
        assert_eq!(cfg, TrackerConfig::new(Mode::D2));
    }

    #[test]
    fn overrides_apply() {
        let text = r#"{"pedestrian": {"score_threshold": 0.6, "max_iou_dist": {"side": 0.98}},
                       "kalman": {"noise_3d": {"measurement_position_std": 0.3}},
                       "stage3": false}"#;
        let cfg = ConfigFile::from_json(text).unwrap().resolve(Mode::D3).unwrap();
        let p = cfg.classes.get(ObjectClass::Pedestrian);
        assert_eq!(p.score_threshold, 0.6);
        assert_eq!(p.max_iou_dist.side, 0.98);
        assert_eq!(p.max_iou_dist.front, 0.95);
        assert_eq!(cfg.motion.noise_3d.measurement_position_std, 0.3);
        assert_eq!(cfg.motion.noise_3d.process_position_std, 1.0);
        assert!(!cfg.stage3);
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = ConfigFile::from_json(r#"{"vehicle": {"sigmaa": 2}}"#).unwrap_err();
        assert!(err.to_string().contains("vehicle"), "{err}");
        assert!(ConfigFile::from_json(r#"{"kalman": {"noise_2d": {"bogus": 1}}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let f = ConfigFile::from_json(r#"{"cyclist": {"max_center_dist": 1.5}}"#).unwrap();
        assert!(f.resolve(Mode::D3).is_err());
        let f = ConfigFile::from_json(r#"{"mode": "3d"}"#).unwrap();
        assert!(f.resolve(Mode::D2).is_err());
    }
}
