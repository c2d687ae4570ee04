//! Sensitivity measures: the manifold influence measure FI, the Jacobian
//! norm, and Cook's local influence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, ClassifierModel, ScoreGradients};
use crate::error::{Error, Result};
use crate::manifold::{
    build_basis, build_l0, class_scores, grad_nu, perturbed_scores, ManifoldWarning, PerturbationTarget,
    DEFAULT_RESIDUAL_THRESHOLD,
};
use crate::numerics::{dot, norm, sym_eig, DenseMatrix, DEFAULT_RANK_TOL};

/// Largest perturbation dimension for which a Hessian is assembled.
pub const HESSIAN_LIMIT: usize = 2000;

/// Central-difference step for Hessians of the objective.
pub const HESSIAN_STEP: f64 = 1e-4;

/// `f = −log P(y|x, θ, ω)` at a fixed label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Objective {
    CrossEntropyTrue(usize),
    /// Uses `y_pred = argmax P(y|x, θ)` at the unperturbed point.
    CrossEntropyPred,
}

impl Objective {
    /// The label whose log-probability the objective tracks.
    pub fn label(&self, probs: &[f64]) -> Result<usize> {
        match *self {
            Objective::CrossEntropyTrue(y) if y < probs.len() => Ok(y),
            Objective::CrossEntropyTrue(y) => Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                probs.len()
            ))),
            Objective::CrossEntropyPred => Ok(argmax(probs)),
        }
    }
}

/// Dataset-level objective choice, bound to each sample's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    TrueLabel,
    PredLabel,
}

impl ObjectiveKind {
    pub fn bind(self, y_true: Option<usize>) -> Result<Objective> {
        match (self, y_true) {
            (ObjectiveKind::TrueLabel, Some(y)) => Ok(Objective::CrossEntropyTrue(y)),
            (ObjectiveKind::TrueLabel, None) => Err(Error::InvalidArgument(
                "the true-label objective needs a label".into(),
            )),
            (ObjectiveKind::PredLabel, _) => Ok(Objective::CrossEntropyPred),
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::TrueLabel => "true-label",
            ObjectiveKind::PredLabel => "pred-label",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true-label" | "true" => Ok(ObjectiveKind::TrueLabel),
            "pred-label" | "pred" | "predicted" => Ok(ObjectiveKind::PredLabel),
            other => Err(Error::InvalidArgument(format!(
                "unknown objective `{other}` (expected true-label or pred-label)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Fi,
    JacobianNorm,
    CookMax,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fi" => Ok(Measure::Fi),
            "jacobian" | "jacobian-norm" => Ok(Measure::JacobianNorm),
            "cook" | "cook-max" => Ok(Measure::CookMax),
            other => Err(Error::InvalidArgument(format!(
                "unknown measure `{other}` (expected fi, jacobian, cook)"
            ))),
        }
    }
}

/// FI together with the diagnostics of its manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiValue {
    pub fi: f64,
    pub rank: usize,
    pub residual_ratio: f64,
    pub warning: Option<ManifoldWarning>,
}

/// `∇f_ω = −∂_α log P(label)`.
pub fn objective_gradient_from_scores(scores: &ScoreGradients, label: usize) -> Vec<f64> {
    scores.grads.row(label).iter().map(|g| -g).collect()
}

/// FI from precomputed score gradients: `‖∇f_ω U₀ Λ₀^{-1/2}‖²`.
pub fn fi_from_scores(scores: &ScoreGradients, label: usize) -> Result<FiValue> {
    let grad = objective_gradient_from_scores(scores, label);
    let basis = build_basis(&build_l0(scores), DEFAULT_RANK_TOL)?;
    let nu = grad_nu(&grad, &basis, DEFAULT_RESIDUAL_THRESHOLD)?;
    let fi = nu.coords.iter().map(|c| c * c).sum();
    Ok(FiValue {
        fi,
        rank: basis.rank(),
        residual_ratio: nu.residual_ratio,
        warning: nu.warning,
    })
}

pub fn fi_value(
    model: &ClassifierModel,
    x: &[f64],
    target: &PerturbationTarget,
    objective: Objective,
) -> Result<FiValue> {
    let scores = class_scores(model, x, target)?;
    let label = objective.label(&scores.probs)?;
    fi_from_scores(&scores, label)
}

/// The first-order local influence measure of `objective` under `target`.
pub fn fi(model: &ClassifierModel, x: &[f64], target: &PerturbationTarget, objective: Objective) -> Result<f64> {
    Ok(fi_value(model, x, target, objective)?.fi)
}

pub fn objective_gradient(
    model: &ClassifierModel,
    x: &[f64],
    target: &PerturbationTarget,
    objective: Objective,
) -> Result<Vec<f64>> {
    let scores = class_scores(model, x, target)?;
    let label = objective.label(&scores.probs)?;
    Ok(objective_gradient_from_scores(&scores, label))
}

/// `‖∂f/∂α‖` over the target subvector.
pub fn jacobian_norm(
    model: &ClassifierModel,
    x: &[f64],
    target: &PerturbationTarget,
    objective: Objective,
) -> Result<f64> {
    Ok(norm(&objective_gradient(model, x, target, objective)?))
}

/// Hessian of the objective over the target subvector, by central
/// differences of the analytic gradient, symmetrized.
pub fn objective_hessian(
    model: &ClassifierModel,
    x: &[f64],
    target: &PerturbationTarget,
    label: usize,
) -> Result<DenseMatrix> {
    let p = target.dim(model)?;
    if p > HESSIAN_LIMIT {
        return Err(Error::HessianTooLarge { p, limit: HESSIAN_LIMIT });
    }
    let mut h = DenseMatrix::zeros(p, p);
    let mut delta = vec![0.0; p];
    for i in 0..p {
        delta[i] = HESSIAN_STEP;
        let plus = objective_gradient_from_scores(&perturbed_scores(model, x, target, &delta)?, label);
        delta[i] = -HESSIAN_STEP;
        let minus = objective_gradient_from_scores(&perturbed_scores(model, x, target, &delta)?, label);
        delta[i] = 0.0;
        for j in 0..p {
            h[(j, i)] = (plus[j] - minus[j]) / (2.0 * HESSIAN_STEP);
        }
    }
    Ok(DenseMatrix::from_fn(p, p, |i, j| 0.5 * (h[(i, j)] + h[(j, i)])))
}

fn check_cook_parts(grad: &[f64], hessian: &DenseMatrix) -> Result<()> {
    if hessian.rows() != grad.len() || hessian.cols() != grad.len() {
        return Err(Error::Dimension(format!(
            "{}x{} Hessian for a gradient of length {}",
            hessian.rows(),
            hessian.cols(),
            grad.len()
        )));
    }
    Ok(())
}

/// `C_η = (1 + ∇f∇fᵀ)^{-1/2} · ηᵀHη / ηᵀ(I + ∇fᵀ∇f)η`.
pub fn cook_from_parts(grad: &[f64], hessian: &DenseMatrix, eta: &[f64]) -> Result<f64> {
    check_cook_parts(grad, hessian)?;
    if eta.len() != grad.len() {
        return Err(Error::Dimension(format!(
            "direction of length {} for a {}-dimensional perturbation",
            eta.len(),
            grad.len()
        )));
    }
    let eta_sq = dot(eta, eta);
    if eta_sq == 0.0 {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    let lead = (1.0 + dot(grad, grad)).powf(-0.5);
    let curvature = dot(eta, &hessian.matvec(eta)?);
    let proj = dot(grad, eta);
    Ok(lead * curvature / (eta_sq + proj * proj))
}

/// `max_η C_η`: the top eigenvalue of the pencil `(H, I + ∇fᵀ∇f)`, scaled by
/// `(1 + ∇f∇fᵀ)^{-1/2}`.
pub fn cook_max_from_parts(grad: &[f64], hessian: &DenseMatrix) -> Result<f64> {
    check_cook_parts(grad, hessian)?;
    let p = grad.len();
    let g_sq = dot(grad, grad);
    let lead = (1.0 + g_sq).powf(-0.5);
    // (I + ggᵀ)^{-1/2} = I + c ggᵀ / ‖g‖² with c = (1 + ‖g‖²)^{-1/2} − 1
    let c = if g_sq > 0.0 { (lead - 1.0) / g_sq } else { 0.0 };
    let whiten = DenseMatrix::from_fn(p, p, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id + c * grad[i] * grad[j]
    });
    let pencil = whiten.matmul(hessian)?.matmul(&whiten)?;
    let pencil = DenseMatrix::from_fn(p, p, |i, j| 0.5 * (pencil[(i, j)] + pencil[(j, i)]));
    let top = sym_eig(&pencil)?.eigenvalues.first().copied().unwrap_or(0.0);
    Ok(lead * top)
}

pub fn cook_directional(
    model: &ClassifierModel,
    x: &[f64],
    target: &PerturbationTarget,
    objective: Objective,
    eta: &[f64],
) -> Result<f64> {
    let scores = class_scores(model, x, target)?;
    let label = objective.label(&scores.probs)?;
    let hessian = objective_hessian(model, x, target, label)?;
    cook_from_parts(&objective_gradient_from_scores(&scores, label), &hessian, eta)
}

pub fn cook_max(
    model: &ClassifierModel,
    x: &[f64],
    target: &PerturbationTarget,
    objective: Objective,
) -> Result<f64> {
    let scores = class_scores(model, x, target)?;
    let label = objective.label(&scores.probs)?;
    let hessian = objective_hessian(model, x, target, label)?;
    cook_max_from_parts(&objective_gradient_from_scores(&scores, label), &hessian)
}

/// One row of a sensitivity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord {
    pub sample_id: usize,
    pub target: String,
    pub fi: Option<f64>,
    pub jacobian_norm: Option<f64>,
    pub cook_max: Option<f64>,
    pub y_true: Option<usize>,
    pub y_pred: usize,
    pub p_pred: f64,
    pub residual_ratio: Option<f64>,
    #[serde(skip)]
    pub warning: Option<ManifoldWarning>,
}

/// Computes the requested measures for one sample.
pub fn score_sample(
    model: &ClassifierModel,
    x: &[f64],
    sample_id: usize,
    y_true: Option<usize>,
    target: &PerturbationTarget,
    objective: ObjectiveKind,
    measures: &[Measure],
) -> Result<InfluenceRecord> {
    let objective = objective.bind(y_true)?;
    let scores = class_scores(model, x, target)?;
    let label = objective.label(&scores.probs)?;
    let y_pred = argmax(&scores.probs);
    let mut record = InfluenceRecord {
        sample_id,
        target: target.to_string(),
        fi: None,
        jacobian_norm: None,
        cook_max: None,
        y_true,
        y_pred,
        p_pred: scores.probs[y_pred],
        residual_ratio: None,
        warning: None,
    };
    if measures.contains(&Measure::Fi) {
        let value = fi_from_scores(&scores, label)?;
        record.fi = Some(value.fi);
        record.residual_ratio = Some(value.residual_ratio);
        record.warning = value.warning;
        if let Some(w) = value.warning {
            log::warn!("sample {sample_id} ({target}): {w}");
        }
    }
    if measures.contains(&Measure::JacobianNorm) {
        record.jacobian_norm = Some(norm(&objective_gradient_from_scores(&scores, label)));
    }
    if measures.contains(&Measure::CookMax) {
        let hessian = objective_hessian(model, x, target, label)?;
        record.cook_max = Some(cook_max_from_parts(
            &objective_gradient_from_scores(&scores, label),
            &hessian,
        )?);
    }
    Ok(record)
}
