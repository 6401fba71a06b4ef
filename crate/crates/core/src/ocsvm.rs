//! ν-one-class support vector machine behind the drift detector.
//!
//! Solves the dual problem
//!
//! ```text
//!   minimize   (1/2) αᵀKα
//!   subject to 0 ≤ α_i ≤ 1/(ν·n),  Σ α_i = 1
//! ```
//!
//! with a pairwise (two-coordinate) descent scheme that preserves the
//! simplex constraint. The decision function is
//! `f(x) = Σ α_i k(x_i, x) − ρ`; `f(x) < 0` signals an outlier.

use crate::featurize::FeatureVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub gamma: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: KernelKind::Rbf,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmConfig {
    /// Upper bound on the training outlier fraction and lower bound on the
    /// support-vector fraction; in (0, 1].
    pub nu: f64,
    pub kernel: KernelConfig,
    /// KKT violation tolerance for the solver.
    pub tol: f64,
    /// Maximum number of pairwise update steps.
    pub max_iter: usize,
}

impl Default for OcsvmConfig {
    fn default() -> Self {
        OcsvmConfig {
            nu: 0.1,
            kernel: KernelConfig::default(),
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

impl OcsvmConfig {
    pub fn validate(&self) -> Result<(), OcsvmError> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(OcsvmError::InvalidConfig(format!(
                "nu must be in (0, 1], got {}",
                self.nu
            )));
        }
        if self.kernel.gamma <= 0.0 {
            return Err(OcsvmError::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.kernel.gamma
            )));
        }
        if self.tol <= 0.0 {
            return Err(OcsvmError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(OcsvmError::InvalidConfig("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OcsvmError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model deserialization failed: {0}")]
    Deserialize(String),
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
}

/// Fitted one-class SVM. Immutable after fit; safe for concurrent scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub support_points: Vec<FeatureVector>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub config: OcsvmConfig,
    pub n_train: usize,
    /// False when the solver stopped at max_iter with a KKT violation still
    /// above 10×tol.
    pub converged: bool,
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    config: OcsvmConfig,
    rho: f64,
    alphas: Vec<f64>,
    support_points: Vec<FeatureVector>,
    n_train: usize,
    converged: bool,
}

/// RBF kernel: exp(−gamma·‖x−y‖²).
pub fn kernel_eval(
    kernel: &KernelConfig,
    x: &FeatureVector,
    y: &FeatureVector,
) -> Result<f64, OcsvmError> {
    if x.dim() != y.dim() {
        return Err(OcsvmError::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    match kernel.kind {
        KernelKind::Rbf => Ok((-kernel.gamma * x.sq_dist(y)).exp()),
    }
}

/// Fits the ν-OCSVM dual by pairwise descent from the uniform feasible
/// start α_i = 1/n, stopping when the maximum KKT violation drops to `tol`
/// or `max_iter` pair updates elapse.
pub fn fit_ocsvm(points: &[FeatureVector], config: &OcsvmConfig) -> Result<OcsvmModel, OcsvmError> {
    config.validate()?;
    if points.is_empty() {
        return Err(OcsvmError::EmptyTrainingSet);
    }
    let dim = points[0].dim();
    for p in points {
        if p.dim() != dim {
            return Err(OcsvmError::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
    }

    let n = points.len();
    let box_bound = 1.0 / (config.nu * n as f64);
    if config.nu * (n as f64) < 1.0 {
        log::warn!(
            "nu*n = {:.3} < 1: the box constraint exceeds the simplex and the \
             nu-property bounds are vacuous at this sample size",
            config.nu * n as f64
        );
    }

    // Dense kernel matrix; training sets are desk-scale by design.
    let kernel = |i: usize, j: usize| -> f64 {
        kernel_eval(&config.kernel, &points[i], &points[j]).expect("uniform dims checked")
    };
    let mut k = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(i, j);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }

    let mut alphas = vec![1.0 / n as f64; n];
    // gradient of (1/2)αᵀKα is Kα, maintained incrementally
    let mut grad = vec![0.0f64; n];
    for i in 0..n {
        grad[i] = k[i * n..]
            .iter()
            .take(n)
            .zip(&alphas)
            .map(|(kij, a)| kij * a)
            .sum();
    }

    let mut violation = f64::INFINITY;
    let mut converged = false;
    for _ in 0..config.max_iter {
        // Most-violating pair: mass can flow from the largest gradient
        // among decreasable coordinates to the smallest among increasable.
        let mut up: Option<usize> = None; // argmin grad over {α < C}
        let mut down: Option<usize> = None; // argmax grad over {α > 0}
        for i in 0..n {
            if alphas[i] < box_bound && up.is_none_or(|u| grad[i] < grad[u]) {
                up = Some(i);
            }
            if alphas[i] > 0.0 && down.is_none_or(|d| grad[i] > grad[d]) {
                down = Some(i);
            }
        }
        let (i, j) = match (up, down) {
            (Some(i), Some(j)) => (i, j),
            // All coordinates pinned at the upper bound (ν = 1): optimal.
            _ => {
                violation = 0.0;
                converged = true;
                break;
            }
        };
        violation = grad[j] - grad[i];
        if violation <= config.tol {
            converged = true;
            break;
        }

        // Optimal step for α_i += δ, α_j −= δ along the feasible segment.
        let eta = k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j];
        let max_step = (box_bound - alphas[i]).min(alphas[j]);
        let step = if eta > 0.0 {
            (violation / eta).min(max_step)
        } else {
            max_step
        };
        if step <= 0.0 {
            // Numerically stuck pair; treat as converged at this violation.
            break;
        }

        // Clip to exact bounds so non-SV coordinates end at exactly 0 or C.
        if step >= max_step {
            if box_bound - alphas[i] <= alphas[j] {
                let delta = box_bound - alphas[i];
                alphas[i] = box_bound;
                alphas[j] -= delta;
            } else {
                let delta = alphas[j];
                alphas[j] = 0.0;
                alphas[i] += delta;
            }
        } else {
            alphas[i] += step;
            alphas[j] -= step;
        }
        let applied = step.min(max_step);
        for t in 0..n {
            grad[t] += applied * (k[i * n + t] - k[j * n + t]);
        }
    }
    if !converged {
        converged = violation <= 10.0 * config.tol;
        if !converged {
            log::warn!(
                "ocsvm solver hit max_iter={} with KKT violation {:.3e} > 10*tol",
                config.max_iter,
                violation
            );
        }
    }

    // ρ from margin support vectors, falling back to all support vectors.
    let margin: Vec<usize> = (0..n)
        .filter(|&i| alphas[i] > config.tol && alphas[i] < box_bound - config.tol)
        .collect();
    let support: Vec<usize> = (0..n).filter(|&i| alphas[i] > config.tol).collect();
    let rho_set = if margin.is_empty() { &support } else { &margin };
    let rho = rho_set.iter().map(|&i| grad[i]).sum::<f64>() / rho_set.len() as f64;

    let model = OcsvmModel {
        support_points: support.iter().map(|&i| points[i].clone()).collect(),
        alphas: support.iter().map(|&i| alphas[i]).collect(),
        rho,
        config: config.clone(),
        n_train: n,
        converged,
    };
    Ok(model)
}

impl OcsvmModel {
    /// f(x) = Σ α_i k(x_i, x) − ρ. Negative values signal outliers.
    pub fn decision(&self, x: &FeatureVector) -> Result<f64, OcsvmError> {
        let mut sum = 0.0;
        for (alpha, sv) in self.alphas.iter().zip(&self.support_points) {
            sum += alpha * kernel_eval(&self.config.kernel, sv, x)?;
        }
        Ok(sum - self.rho)
    }

    /// True iff `decision(x) < 0`; the boundary itself counts as inlier.
    pub fn predict_outlier(&self, x: &FeatureVector) -> Result<bool, OcsvmError> {
        Ok(self.decision(x)? < 0.0)
    }

    /// Dual objective (1/2)αᵀKα over the retained support set.
    pub fn dual_objective(&self) -> f64 {
        let m = self.alphas.len();
        let mut obj = 0.0;
        for i in 0..m {
            for j in 0..m {
                let kij = kernel_eval(
                    &self.config.kernel,
                    &self.support_points[i],
                    &self.support_points[j],
                )
                .expect("support points share dimension");
                obj += self.alphas[i] * self.alphas[j] * kij;
            }
        }
        0.5 * obj
    }

    /// Versioned JSON rendering; floats round-trip exactly.
    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            version: MODEL_FORMAT_VERSION,
            config: self.config.clone(),
            rho: self.rho,
            alphas: self.alphas.clone(),
            support_points: self.support_points.clone(),
            n_train: self.n_train,
            converged: self.converged,
        };
        serde_json::to_string(&doc).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, OcsvmError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| OcsvmError::Deserialize(e.to_string()))?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(OcsvmError::UnsupportedVersion(doc.version));
        }
        Ok(OcsvmModel {
            support_points: doc.support_points,
            alphas: doc.alphas,
            rho: doc.rho,
            config: doc.config,
            n_train: doc.n_train,
            converged: doc.converged,
        })
    }
}
