//! Lagrange multiplier state and the constraint gradient matrix.
//!
//! Multipliers follow projected dual ascent: after each batch,
//! `lambda_i <- max(0, lambda_i + dual_lr * (V_ci - eps_i))`. The gradient
//! matrix scales each estimated cost gradient by its multiplier, producing
//! the rows the shaping strategies aggregate.

use crate::error::{Error, Result};
use crate::grad::FlatGradient;

/// Nonnegative multipliers plus the dual step size.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeState {
    lambdas: Vec<f64>,
    dual_lr: f64,
}

impl LagrangeState {
    /// All multipliers start at `init` (0 for the standard unconstrained start).
    pub fn new(num_constraints: usize, init: f64, dual_lr: f64) -> Result<Self> {
        if num_constraints == 0 {
            return Err(Error::InvalidArgument(
                "at least one constraint is required".into(),
            ));
        }
        if !(init >= 0.0 && init.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "multiplier init must be nonnegative, got {init}"
            )));
        }
        if !(dual_lr > 0.0 && dual_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dual_lr must be positive, got {dual_lr}"
            )));
        }
        Ok(Self {
            lambdas: vec![init; num_constraints],
            dual_lr,
        })
    }

    pub fn from_lambdas(lambdas: Vec<f64>, dual_lr: f64) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidArgument("empty multiplier vector".into()));
        }
        if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument(
                "multipliers must be finite and nonnegative".into(),
            ));
        }
        if !(dual_lr > 0.0 && dual_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dual_lr must be positive, got {dual_lr}"
            )));
        }
        Ok(Self { lambdas, dual_lr })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn dual_lr(&self) -> f64 {
        self.dual_lr
    }

    pub fn num_constraints(&self) -> usize {
        self.lambdas.len()
    }
}

/// Projected dual ascent step on the batch cost returns.
pub fn update_multipliers(
    state: &LagrangeState,
    cost_returns: &[f64],
    thresholds: &[f64],
) -> Result<LagrangeState> {
    let n = state.num_constraints();
    if cost_returns.len() != n {
        return Err(Error::dim(cost_returns.len(), n, "cost returns"));
    }
    if thresholds.len() != n {
        return Err(Error::dim(thresholds.len(), n, "thresholds"));
    }
    if thresholds.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidArgument(
            "thresholds must be nonnegative".into(),
        ));
    }
    let lambdas = state
        .lambdas
        .iter()
        .zip(cost_returns.iter().zip(thresholds))
        .map(|(l, (v, eps))| (l + state.dual_lr * (v - eps)).max(0.0))
        .collect();
    Ok(LagrangeState {
        lambdas,
        dual_lr: state.dual_lr,
    })
}

/// Ordered multiplier-scaled constraint gradients g_i = lambda_i * grad V_ci.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    grads: Vec<FlatGradient>,
    constraint_ids: Vec<usize>,
}

impl GradientMatrix {
    /// Builds directly from already-scaled rows. Rows must share one dimension.
    pub fn new(grads: Vec<FlatGradient>) -> Result<Self> {
        if grads.is_empty() {
            return Err(Error::InvalidArgument("empty gradient matrix".into()));
        }
        let dim = grads[0].dim();
        for (i, g) in grads.iter().enumerate() {
            if g.dim() != dim {
                return Err(Error::dim(g.dim(), dim, "gradient matrix row"));
            }
            let _ = i;
        }
        let constraint_ids = (0..grads.len()).collect();
        Ok(Self {
            grads,
            constraint_ids,
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.grads.len()
    }

    pub fn dim(&self) -> usize {
        self.grads[0].dim()
    }

    pub fn row(&self, i: usize) -> &FlatGradient {
        &self.grads[i]
    }

    pub fn rows(&self) -> &[FlatGradient] {
        &self.grads
    }

    pub fn constraint_ids(&self) -> &[usize] {
        &self.constraint_ids
    }
}

/// Assembles g_i = lambda_i * cost_grads[i], preserving constraint order.
pub fn build_gradient_matrix(
    state: &LagrangeState,
    cost_grads: &[FlatGradient],
) -> Result<GradientMatrix> {
    if cost_grads.len() != state.num_constraints() {
        return Err(Error::dim(
            cost_grads.len(),
            state.num_constraints(),
            "cost gradients",
        ));
    }
    let grads = state
        .lambdas
        .iter()
        .zip(cost_grads)
        .map(|(l, g)| g.scaled(*l))
        .collect();
    GradientMatrix::new(grads)
}

/// Full policy objective gradient: descend `-grad V_r + grad J_c`.
pub fn total_gradient(
    reward_grad: &FlatGradient,
    shaped_cost_grad: &FlatGradient,
) -> Result<FlatGradient> {
    if reward_grad.dim() != shaped_cost_grad.dim() {
        return Err(Error::dim(
            reward_grad.dim(),
            shaped_cost_grad.dim(),
            "total gradient",
        ));
    }
    let values = reward_grad
        .values()
        .iter()
        .zip(shaped_cost_grad.values())
        .map(|(r, c)| -r + c)
        .collect();
    Ok(FlatGradient::new(values).expect("finite inputs stay finite under -r + c"))
}
