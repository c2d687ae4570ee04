//! The perturbation manifold at the unperturbed point.
//!
//! A perturbation `ω` is an additive change `Δα` to a subvector `α` of the
//! input or of the flattened parameters, with base point `ω₀ = 0`. The
//! metric at `ω₀` is `G = L₀ L₀ᵀ`, where column `y` of the `p × K` factor
//! `L₀` is `√P(y) ∂_α log P(y)`. Its compact eigendecomposition
//! `G = U₀ Λ₀ U₀ᵀ` defines the coordinates `ν = Λ₀^{1/2} U₀ᵀ ω` in which the
//! metric at the base point is the identity.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::classifier::{ClassifierModel, ImageShape, ParamSelection, ScoreGradients};
use crate::error::{Error, Result};
use crate::numerics::{csvd_tall, norm, CompactSvd, DenseMatrix};

/// Residual ratios above this are flagged on [`NuGradient`].
pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 1e-6;

pub const PATCH_SCALES: [usize; 4] = [1, 3, 5, 7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PatchChannels {
    /// Every channel of every pixel in the window.
    All,
    /// A single channel; used to build channel-averaged maps.
    Single(usize),
}

/// A `scale × scale` window centred on `(row, col)`, clipped to the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InputPatch {
    pub row: usize,
    pub col: usize,
    pub scale: usize,
    pub shape: ImageShape,
    pub channels: PatchChannels,
}

impl InputPatch {
    pub fn new(row: usize, col: usize, scale: usize, shape: ImageShape) -> Self {
        Self {
            row,
            col,
            scale,
            shape,
            channels: PatchChannels::All,
        }
    }

    pub fn with_channels(mut self, channels: PatchChannels) -> Self {
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !PATCH_SCALES.contains(&self.scale) {
            return Err(Error::InvalidTarget(format!(
                "patch scale must be one of {PATCH_SCALES:?}, got {}",
                self.scale
            )));
        }
        if self.row >= self.shape.height || self.col >= self.shape.width {
            return Err(Error::InvalidTarget(format!(
                "pixel ({}, {}) outside a {}x{} image",
                self.row, self.col, self.shape.height, self.shape.width
            )));
        }
        if let PatchChannels::Single(c) = self.channels {
            if c >= self.shape.channels {
                return Err(Error::InvalidTarget(format!(
                    "channel {c} out of range for {} channels",
                    self.shape.channels
                )));
            }
        }
        Ok(())
    }

    /// Flat input positions covered by the clipped window, ascending.
    pub fn indices(&self) -> Vec<usize> {
        let half = self.scale / 2;
        let rows = self.row.saturating_sub(half)..=(self.row + half).min(self.shape.height - 1);
        let cols = self.col.saturating_sub(half)..=(self.col + half).min(self.shape.width - 1);
        let channels = match self.channels {
            PatchChannels::All => 0..self.shape.channels,
            PatchChannels::Single(c) => c..c + 1,
        };
        let mut out = Vec::new();
        for ch in channels {
            for r in rows.clone() {
                for c in cols.clone() {
                    out.push(self.shape.index(ch, r, c));
                }
            }
        }
        out
    }
}

/// The subvector `α` of `(x, θ)` that a perturbation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbationTarget {
    Input,
    AllParams,
    /// Zero-based trainable layer index.
    Layer(usize),
    InputPatch(InputPatch),
}

/// Where a resolved target lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedTarget {
    /// Positions in the input vector.
    Input(Vec<usize>),
    /// Positions in the flattened parameter vector.
    Params(Vec<usize>),
}

impl ResolvedTarget {
    pub fn indices(&self) -> &[usize] {
        match self {
            ResolvedTarget::Input(i) | ResolvedTarget::Params(i) => i,
        }
    }

    pub fn dim(&self) -> usize {
        self.indices().len()
    }
}

impl PerturbationTarget {
    pub fn resolve(&self, model: &ClassifierModel) -> Result<ResolvedTarget> {
        match self {
            PerturbationTarget::Input => Ok(ResolvedTarget::Input((0..model.input_dim()).collect())),
            PerturbationTarget::AllParams => Ok(ResolvedTarget::Params((0..model.param_count()).collect())),
            PerturbationTarget::Layer(l) => Ok(ResolvedTarget::Params(model.layer_param_range(*l)?.collect())),
            PerturbationTarget::InputPatch(patch) => {
                patch.validate()?;
                if patch.shape.len() != model.input_dim() {
                    return Err(Error::InvalidTarget(format!(
                        "image shape holds {} values, model expects {}",
                        patch.shape.len(),
                        model.input_dim()
                    )));
                }
                Ok(ResolvedTarget::Input(patch.indices()))
            }
        }
    }

    pub fn dim(&self, model: &ClassifierModel) -> Result<usize> {
        Ok(self.resolve(model)?.dim())
    }
}

impl fmt::Display for PerturbationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationTarget::Input => f.write_str("input"),
            PerturbationTarget::AllParams => f.write_str("all-params"),
            PerturbationTarget::Layer(l) => write!(f, "layer:{l}"),
            PerturbationTarget::InputPatch(p) => {
                write!(f, "patch:{}:{}:k{}", p.row, p.col, p.scale)?;
                if let PatchChannels::Single(c) = p.channels {
                    write!(f, ":c{c}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for PerturbationTarget {
    type Err = Error;

    /// Parses `input`, `all-params` and `layer:<index>`; patches need an
    /// image shape and are built programmatically.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(PerturbationTarget::Input),
            "all-params" | "params" => Ok(PerturbationTarget::AllParams),
            _ => {
                let index = s
                    .strip_prefix("layer:")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::InvalidTarget(format!(
                            "`{s}` is not one of input, all-params, layer:<index>"
                        ))
                    })?;
                Ok(PerturbationTarget::Layer(index))
            }
        }
    }
}

/// Keeps the listed gradient columns.
pub fn restrict_scores(scores: &ScoreGradients, indices: &[usize]) -> ScoreGradients {
    ScoreGradients {
        probs: scores.probs.clone(),
        grads: scores.grads.select_columns(indices),
    }
}

/// Per-class score gradients `∂_α log P(y|x, θ)` over the target subvector.
pub fn class_scores(model: &ClassifierModel, x: &[f64], target: &PerturbationTarget) -> Result<ScoreGradients> {
    match target {
        PerturbationTarget::Input => model.input_score_gradients(x),
        PerturbationTarget::AllParams => model.param_score_gradients(x, ParamSelection::All),
        PerturbationTarget::Layer(l) => model.param_score_gradients(x, ParamSelection::Layer(*l)),
        PerturbationTarget::InputPatch(_) => {
            let indices = target.resolve(model)?;
            let full = model.input_score_gradients(x)?;
            Ok(restrict_scores(&full, indices.indices()))
        }
    }
}

/// Score gradients after adding `delta` to the target subvector.
pub fn perturbed_scores(
    model: &ClassifierModel,
    x: &[f64],
    target: &PerturbationTarget,
    delta: &[f64],
) -> Result<ScoreGradients> {
    let resolved = target.resolve(model)?;
    if delta.len() != resolved.dim() {
        return Err(Error::Dimension(format!(
            "perturbation of length {} for a {}-dimensional target",
            delta.len(),
            resolved.dim()
        )));
    }
    match &resolved {
        ResolvedTarget::Input(indices) => {
            let mut xp = x.to_vec();
            for (&i, d) in indices.iter().zip(delta) {
                xp[i] += d;
            }
            let full = model.input_score_gradients(&xp)?;
            Ok(restrict_scores(&full, indices))
        }
        ResolvedTarget::Params(indices) => {
            let mut params = model.flatten();
            for (&i, d) in indices.iter().zip(delta) {
                params[i] += d;
            }
            class_scores(&model.with_params(&params)?, x, target)
        }
    }
}

/// `L₀`: column `y` is `√P(y) · ∂_α log P(y)`.
pub fn build_l0(scores: &ScoreGradients) -> DenseMatrix {
    let (k, p) = (scores.grads.rows(), scores.grads.cols());
    let weights: Vec<f64> = scores.probs.iter().map(|v| v.sqrt()).collect();
    DenseMatrix::from_fn(p, k, |i, y| weights[y] * scores.grads[(y, i)])
}

pub fn build_l0_for(model: &ClassifierModel, x: &[f64], target: &PerturbationTarget) -> Result<DenseMatrix> {
    Ok(build_l0(&class_scores(model, x, target)?))
}

/// `U₀`, `Λ₀` and the retained rank `r₀` of `G_ω(ω₀)`.
#[derive(Debug, Clone)]
pub struct PerturbationBasis {
    svd: CompactSvd,
}

impl PerturbationBasis {
    pub fn u0(&self) -> &DenseMatrix {
        &self.svd.basis
    }

    pub fn lambda0(&self) -> &[f64] {
        &self.svd.eigenvalues
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    /// Perturbation dimension `p`.
    pub fn dim(&self) -> usize {
        self.svd.dim()
    }

    pub fn compact_svd(&self) -> &CompactSvd {
        &self.svd
    }

    /// `Λ₀^{-1/2} U₀ᵀ v`.
    pub fn to_nu(&self, v: &[f64]) -> Result<Vec<f64>> {
        let coords = self.svd.basis.tr_matvec(v)?;
        Ok(coords
            .iter()
            .zip(&self.svd.eigenvalues)
            .map(|(c, l)| c / l.sqrt())
            .collect())
    }
}

pub fn build_basis(l0: &DenseMatrix, tol: f64) -> Result<PerturbationBasis> {
    let svd = csvd_tall(l0, tol)?;
    // G is a sum of K rank-one terms.
    assert!(
        svd.rank() <= l0.cols(),
        "retained rank {} exceeds class count {}",
        svd.rank(),
        l0.cols()
    );
    Ok(PerturbationBasis { svd })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ManifoldWarning {
    /// `r₀ = 0`: every per-class score vector vanished.
    Degenerate,
    /// The objective gradient has a component outside the retained span.
    OffManifold { residual_ratio: f64 },
}

impl fmt::Display for ManifoldWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldWarning::Degenerate => f.write_str("degenerate manifold (rank 0)"),
            ManifoldWarning::OffManifold { residual_ratio } => {
                write!(f, "gradient residual ratio {residual_ratio:e} outside the manifold tangent span")
            }
        }
    }
}

/// An objective gradient in `ν`-coordinates.
#[derive(Debug, Clone)]
pub struct NuGradient {
    pub coords: Vec<f64>,
    /// `‖(I − U₀U₀ᵀ)∇f‖ / ‖∇f‖`, zero for a zero gradient.
    pub residual_ratio: f64,
    pub warning: Option<ManifoldWarning>,
}

/// `∇f(ν₀) = ∇f_ω U₀ Λ₀^{-1/2}`, with the discarded component measured.
pub fn grad_nu(grad: &[f64], basis: &PerturbationBasis, residual_threshold: f64) -> Result<NuGradient> {
    if grad.len() != basis.dim() {
        return Err(Error::Dimension(format!(
            "gradient of length {} for a {}-dimensional perturbation",
            grad.len(),
            basis.dim()
        )));
    }
    let grad_norm = norm(grad);
    if basis.rank() == 0 {
        return Ok(NuGradient {
            coords: Vec::new(),
            residual_ratio: if grad_norm > 0.0 { 1.0 } else { 0.0 },
            warning: Some(ManifoldWarning::Degenerate),
        });
    }
    let u0 = basis.u0();
    let projected = u0.tr_matvec(grad)?;
    let back = u0.matvec(&projected)?;
    let residual: Vec<f64> = grad.iter().zip(&back).map(|(g, b)| g - b).collect();
    let residual_ratio = if grad_norm > 0.0 { norm(&residual) / grad_norm } else { 0.0 };
    let coords = projected
        .iter()
        .zip(basis.lambda0())
        .map(|(c, l)| c / l.sqrt())
        .collect();
    let warning = (residual_ratio > residual_threshold)
        .then_some(ManifoldWarning::OffManifold { residual_ratio });
    Ok(NuGradient {
        coords,
        residual_ratio,
        warning,
    })
}

/// The metric at `ν₀` re-assembled from the per-class score vectors:
/// `Σ_y P(y) ∂_ν ℓ_yᵀ ∂_ν ℓ_y`. Equals the `r₀ × r₀` identity.
pub fn nu_metric(l0: &DenseMatrix, basis: &PerturbationBasis) -> Result<DenseMatrix> {
    let r = basis.rank();
    let mut transformed = Vec::with_capacity(l0.cols());
    for y in 0..l0.cols() {
        transformed.push(basis.to_nu(&l0.column(y))?);
    }
    Ok(DenseMatrix::from_fn(r, r, |i, j| {
        transformed.iter().map(|t| t[i] * t[j]).sum()
    }))
}
