//! Flat gradient vectors, cosine similarity, and pairwise constraint
//! relations.
//!
//! Every gradient in a run lives in the same d-dimensional policy parameter
//! space. Pairs of constraint gradients are classified as conflicting,
//! redundant, independent, or weak from their cosine similarity against the
//! thresholds in [`ShapingConfig`].

use crate::error::{Error, Result};

/// Dense gradient over the policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatGradient {
    values: Vec<f64>,
}

impl FlatGradient {
    /// Wraps a dense vector, rejecting NaN/Inf entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient entries"));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &FlatGradient) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::dim(self.dim(), other.dim(), "dot product"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Element-wise scaling; the result of `scaled(a)` is exactly `a * g[k]`
    /// per coordinate, which keeps weight-based reconstruction bit-exact.
    pub fn scaled(&self, factor: f64) -> FlatGradient {
        FlatGradient {
            values: self.values.iter().map(|v| factor * v).collect(),
        }
    }

    pub fn add(&self, other: &FlatGradient) -> Result<FlatGradient> {
        if self.dim() != other.dim() {
            return Err(Error::dim(self.dim(), other.dim(), "gradient add"));
        }
        Ok(FlatGradient {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `self += factor * other`, in place.
    pub fn axpy(&mut self, factor: f64, other: &FlatGradient) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::dim(self.dim(), other.dim(), "gradient axpy"));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// How two constraint gradients relate at the current policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    /// similarity <= -sigma
    Conflicting,
    /// similarity >= kappa
    Redundant,
    /// |similarity| <= eta
    Independent,
    /// everything in between
    Weak,
}

/// Classified pair relation plus the raw similarity that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRelation {
    pub kind: RelationKind,
    pub similarity: f64,
}

/// Shaping strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Vanilla,
    Crpo,
    MinMax,
    GradS,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Vanilla,
        Strategy::Crpo,
        Strategy::MinMax,
        Strategy::GradS,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::Crpo => "crpo",
            Strategy::MinMax => "minmax",
            Strategy::GradS => "grads",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "vanilla" => Ok(Strategy::Vanilla),
            "crpo" => Ok(Strategy::Crpo),
            "minmax" | "min-max" => Ok(Strategy::MinMax),
            "grads" => Ok(Strategy::GradS),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected vanilla|crpo|minmax|grads)"
            ))),
        }
    }
}

/// Similarity thresholds and strategy selection for constraint shaping.
///
/// `kappa` marks redundancy, `sigma` marks conflict, `eta` marks
/// independence (diagnostics only; the candidate filter uses the open band
/// `(-sigma, kappa)`).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingConfig {
    pub kappa: f64,
    pub sigma: f64,
    pub eta: f64,
    pub norm_tolerance: f64,
    pub strategy: Strategy,
}

impl ShapingConfig {
    pub const DEFAULT_KAPPA: f64 = 0.7;
    pub const DEFAULT_SIGMA: f64 = 0.7;
    pub const DEFAULT_ETA: f64 = 0.3;
    pub const DEFAULT_NORM_TOLERANCE: f64 = 1e-12;

    pub fn new(
        kappa: f64,
        sigma: f64,
        eta: f64,
        norm_tolerance: f64,
        strategy: Strategy,
    ) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::Config(format!("kappa must be in (0,1], got {kappa}")));
        }
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::Config(format!("sigma must be in (0,1], got {sigma}")));
        }
        if !(eta >= 0.0 && eta < kappa && eta < sigma) {
            return Err(Error::Config(format!(
                "eta must satisfy 0 <= eta < min(kappa, sigma), got {eta}"
            )));
        }
        if !(norm_tolerance > 0.0 && norm_tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "norm_tolerance must be a small positive real, got {norm_tolerance}"
            )));
        }
        Ok(Self {
            kappa,
            sigma,
            eta,
            norm_tolerance,
            strategy,
        })
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            kappa: Self::DEFAULT_KAPPA,
            sigma: Self::DEFAULT_SIGMA,
            eta: Self::DEFAULT_ETA,
            norm_tolerance: Self::DEFAULT_NORM_TOLERANCE,
            strategy: Strategy::GradS,
        }
    }
}

/// Cosine similarity clamped to `[-1, 1]`.
///
/// Returns 0 when either norm is below `norm_tolerance`: a zero gradient
/// constrains nothing, so it is treated as independent of everything.
pub fn cosine_similarity(a: &FlatGradient, b: &FlatGradient, norm_tolerance: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dim(a.dim(), b.dim(), "cosine similarity"));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("cosine similarity input"));
    }
    let na = a.norm();
    let nb = b.norm();
    if na < norm_tolerance || nb < norm_tolerance {
        return Ok(0.0);
    }
    let sim = a.dot(b)? / (na * nb);
    Ok(sim.clamp(-1.0, 1.0))
}

/// Classifies a gradient pair by the threshold rules.
pub fn classify_pair(
    a: &FlatGradient,
    b: &FlatGradient,
    config: &ShapingConfig,
) -> Result<PairRelation> {
    let similarity = cosine_similarity(a, b, config.norm_tolerance)?;
    Ok(PairRelation {
        kind: classify_similarity(similarity, config),
        similarity,
    })
}

/// Threshold rules on a raw similarity value. The four kinds partition
/// `[-1, 1]` because `eta < min(kappa, sigma)` is enforced at construction.
pub fn classify_similarity(similarity: f64, config: &ShapingConfig) -> RelationKind {
    if similarity <= -config.sigma {
        RelationKind::Conflicting
    } else if similarity >= config.kappa {
        RelationKind::Redundant
    } else if similarity.abs() <= config.eta {
        RelationKind::Independent
    } else {
        RelationKind::Weak
    }
}

/// Concatenates parameter blocks into one flat gradient.
pub fn flatten(blocks: &[Vec<f64>]) -> Result<FlatGradient> {
    if blocks.is_empty() {
        return Err(Error::InvalidArgument("flatten: empty block list".into()));
    }
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "flatten: blocks hold no entries".into(),
        ));
    }
    let mut values = Vec::with_capacity(total);
    for block in blocks {
        values.extend_from_slice(block);
    }
    FlatGradient::new(values)
}

/// Splits a flat gradient back into blocks of the given lengths.
pub fn unflatten(grad: &FlatGradient, shapes: &[usize]) -> Result<Vec<Vec<f64>>> {
    let total: usize = shapes.iter().sum();
    if total != grad.dim() {
        return Err(Error::dim(total, grad.dim(), "unflatten shapes"));
    }
    let mut out = Vec::with_capacity(shapes.len());
    let mut offset = 0;
    for &len in shapes {
        out.push(grad.values()[offset..offset + len].to_vec());
        offset += len;
    }
    Ok(out)
}
