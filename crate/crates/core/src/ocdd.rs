//! One-class concept drift detection over a vector stream.
//!
//! A one-class SVM trained on normal vectors scores each incoming
//! observation; the outlier flags feed a bounded trailing window, and drift
//! fires once the window's outlier ratio reaches the configured threshold.
//! A fired state is frozen: the stream produced its one drift event.

use crate::featurize::FeatureVector;
use crate::ocsvm::{fit_ocsvm, OcsvmConfig, OcsvmError, OcsvmModel};
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcddConfig {
    /// Trailing flag window length w.
    pub window_size: usize,
    /// Outlier-ratio trigger in (0, 1).
    pub drift_threshold: f64,
    /// Observations required before drift may fire; at most `window_size`.
    pub min_fill: usize,
    pub svm: OcsvmConfig,
}

impl Default for OcddConfig {
    fn default() -> Self {
        OcddConfig {
            window_size: 25,
            drift_threshold: 0.3,
            min_fill: 3,
            svm: OcsvmConfig::default(),
        }
    }
}

impl OcddConfig {
    pub fn validate(&self) -> Result<(), OcddError> {
        if self.window_size == 0 {
            return Err(OcddError::InvalidConfig("window_size must be positive".into()));
        }
        if self.min_fill == 0 || self.min_fill > self.window_size {
            return Err(OcddError::InvalidConfig(format!(
                "min_fill must be in [1, window_size={}], got {}",
                self.window_size, self.min_fill
            )));
        }
        if !(self.drift_threshold > 0.0 && self.drift_threshold < 1.0) {
            return Err(OcddError::InvalidConfig(format!(
                "drift_threshold must be in (0, 1), got {}",
                self.drift_threshold
            )));
        }
        self.svm.validate()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OcddError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Svm(#[from] OcsvmError),
}

/// Outcome of a single observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserveResult {
    pub outlier: bool,
    /// Outlier fraction of the current flag window, in [0, 1].
    pub ratio: f64,
    pub drift_fired: bool,
}

/// Drift-detection state for one stream. Single-writer; distinct states
/// over a shared model run concurrently without coordination.
#[derive(Debug, Clone)]
pub struct OcddState<'m> {
    model: Cow<'m, OcsvmModel>,
    config: OcddConfig,
    flags: VecDeque<bool>,
    outliers_in_window: usize,
    observed: usize,
    drifted: bool,
    drift_index: Option<usize>,
    fired_result: Option<ObserveResult>,
}

/// Fits the one-class SVM on `training` and returns a fresh monitoring
/// state that owns the model.
pub fn ocdd_init(
    training: &[FeatureVector],
    config: &OcddConfig,
) -> Result<OcddState<'static>, OcddError> {
    config.validate()?;
    let model = fit_ocsvm(training, &config.svm)?;
    Ok(OcddState::new(Cow::Owned(model), config.clone()))
}

impl<'m> OcddState<'m> {
    fn new(model: Cow<'m, OcsvmModel>, config: OcddConfig) -> Self {
        OcddState {
            model,
            config,
            flags: VecDeque::new(),
            outliers_in_window: 0,
            observed: 0,
            drifted: false,
            drift_index: None,
            fired_result: None,
        }
    }

    /// Fresh state over an already-fitted model, e.g. one shared across
    /// many per-conversation streams.
    pub fn from_model(model: &'m OcsvmModel, config: OcddConfig) -> Result<Self, OcddError> {
        config.validate()?;
        Ok(OcddState::new(Cow::Borrowed(model), config))
    }

    pub fn model(&self) -> &OcsvmModel {
        &self.model
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    pub fn drifted(&self) -> bool {
        self.drifted
    }

    /// 1-based ordinal of the observation at which drift fired.
    pub fn drift_index(&self) -> Option<usize> {
        self.drift_index
    }

    /// Scores one observation and updates the flag window. After drift has
    /// fired the state is frozen and the firing record is returned
    /// unchanged for every subsequent call.
    pub fn observe(&mut self, x: &FeatureVector) -> Result<ObserveResult, OcddError> {
        if let Some(fired) = self.fired_result {
            return Ok(fired);
        }

        let outlier = self.model.predict_outlier(x)?;
        self.observed += 1;
        self.flags.push_back(outlier);
        if outlier {
            self.outliers_in_window += 1;
        }
        if self.flags.len() > self.config.window_size && self.flags.pop_front() == Some(true) {
            self.outliers_in_window -= 1;
        }

        let ratio = self.outliers_in_window as f64 / self.flags.len() as f64;
        let drift_fired =
            self.observed >= self.config.min_fill && ratio >= self.config.drift_threshold;
        let result = ObserveResult {
            outlier,
            ratio,
            drift_fired,
        };
        if drift_fired {
            self.drifted = true;
            self.drift_index = Some(self.observed);
            self.fired_result = Some(result);
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocsvm::{KernelConfig, KernelKind};

    fn vec2(x: f64, y: f64) -> FeatureVector {
        FeatureVector::from_values(vec![x, y])
    }

    fn config(window: usize, threshold: f64, min_fill: usize) -> OcddConfig {
        OcddConfig {
            window_size: window,
            drift_threshold: threshold,
            min_fill,
            svm: OcsvmConfig {
                nu: 0.2,
                kernel: KernelConfig {
                    kind: KernelKind::Rbf,
                    gamma: 1.0,
                },
                tol: 1e-8,
                max_iter: 100_000,
            },
        }
    }

    fn cluster(center: (f64, f64), count: usize) -> Vec<FeatureVector> {
        // Deterministic low-discrepancy jitter; no RNG needed here.
        (0..count)
            .map(|i| {
                let a = ((i * 37) % 97) as f64 / 97.0 - 0.5;
                let b = ((i * 61) % 89) as f64 / 89.0 - 0.5;
                vec2(center.0 + 0.2 * a, center.1 + 0.2 * b)
            })
            .collect()
    }

    #[test]
    fn init_produces_clean_state() {
        let state = ocdd_init(&cluster((0.0, 0.0), 50), &config(25, 0.3, 3)).unwrap();
        assert!(!state.drifted());
        assert_eq!(state.observed(), 0);
        assert_eq!(state.drift_index(), None);
    }

    #[test]
    fn init_on_empty_training_fails() {
        assert_eq!(
            ocdd_init(&[], &config(25, 0.3, 3)).unwrap_err(),
            OcddError::Svm(OcsvmError::EmptyTrainingSet)
        );
    }

    #[test]
    fn ratio_matches_window_arithmetic() {
        // Window of 4 holding [true, true, false, false]: ratio 0.5 >= 0.3
        // fires at the first observation where firing is allowed.
        let training = cluster((0.0, 0.0), 30);
        let mut state = ocdd_init(&training, &config(4, 0.3, 4)).unwrap();
        let inlier = vec2(0.0, 0.0);
        let outlier = vec2(50.0, 50.0);
        // Sanity: the probes behave as intended against the fitted model.
        assert!(!state.model().predict_outlier(&inlier).unwrap());
        assert!(state.model().predict_outlier(&outlier).unwrap());

        for (x, expected_ratio) in [(&outlier, 1.0), (&outlier, 1.0), (&inlier, 2.0 / 3.0)] {
            let r = state.observe(x).unwrap();
            assert!((r.ratio - expected_ratio).abs() < 1e-12);
            assert!(!r.drift_fired); // observed < min_fill
        }
        let r = state.observe(&inlier).unwrap();
        assert!((r.ratio - 0.5).abs() < 1e-12);
        assert!(r.drift_fired);
        assert_eq!(state.drift_index(), Some(4));
    }

    // Ring of boundary points with a populated interior: fresh points near
    // the center score strictly positive, so the stream stays outlier-free.
    #[test]
    fn all_inlier_stream_never_fires() {
        let ring: Vec<FeatureVector> = (0..12)
            .map(|i| {
                let theta = i as f64 * std::f64::consts::TAU / 12.0;
                vec2(theta.cos(), theta.sin())
            })
            .collect();
        let mut state = ocdd_init(&ring, &config(25, 0.3, 3)).unwrap();
        for i in 0..100 {
            let r = 0.25 * (((i * 13) % 17) as f64 / 17.0);
            let theta = ((i * 7) % 29) as f64;
            let x = vec2(r * theta.cos(), r * theta.sin());
            let result = state.observe(&x).unwrap();
            assert_eq!(result.ratio, 0.0, "outlier at stream position {i}");
            assert!(!result.drift_fired);
        }
        assert!(!state.drifted());
    }

    #[test]
    fn no_fire_before_min_fill() {
        let training = cluster((0.0, 0.0), 30);
        let mut state = ocdd_init(&training, &config(25, 0.3, 5)).unwrap();
        let outlier = vec2(50.0, 50.0);
        for i in 1..5 {
            let r = state.observe(&outlier).unwrap();
            assert!(!r.drift_fired, "fired early at observation {i}");
            assert_eq!(r.ratio, 1.0);
        }
        let r = state.observe(&outlier).unwrap();
        assert!(r.drift_fired);
        assert_eq!(state.drift_index(), Some(5));
    }

    #[test]
    fn frozen_state_repeats_firing_record() {
        let training = cluster((0.0, 0.0), 30);
        let mut state = ocdd_init(&training, &config(4, 0.3, 3)).unwrap();
        let outlier = vec2(50.0, 50.0);
        let mut fired = None;
        for _ in 0..3 {
            fired = Some(state.observe(&outlier).unwrap());
        }
        let fired = fired.unwrap();
        assert!(fired.drift_fired);
        let observed_at_fire = state.observed();
        // Observing anything further, inlier or outlier, replays the record.
        let again = state.observe(&vec2(0.0, 0.0)).unwrap();
        assert_eq!(again, fired);
        assert_eq!(state.observed(), observed_at_fire);
        assert_eq!(state.drift_index(), Some(3));
    }

    #[test]
    fn shared_model_states_are_independent() {
        let training = cluster((0.0, 0.0), 30);
        let model = fit_ocsvm(&training, &config(4, 0.3, 3).svm).unwrap();
        let mut a = OcddState::from_model(&model, config(4, 0.3, 3)).unwrap();
        let mut b = OcddState::from_model(&model, config(4, 0.3, 3)).unwrap();
        let outlier = vec2(50.0, 50.0);
        for _ in 0..3 {
            a.observe(&outlier).unwrap();
        }
        assert!(a.drifted());
        assert!(!b.drifted());
        b.observe(&vec2(0.0, 0.0)).unwrap();
        assert_eq!(b.observed(), 1);
    }
}
