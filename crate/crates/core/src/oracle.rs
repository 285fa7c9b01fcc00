//! Independent ground-truth machinery.
//!
//! Everything here is written as a reference path, separate from the code
//! it checks: exact backward-induction values, central-difference
//! gradients, a standalone greedy candidate filter, brute-force policy
//! search, and the convergence bound calculator.

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::grad::{FlatGradient, ShapingConfig};
use crate::lagrangian::GradientMatrix;
use crate::policy::{Policy, Signal};

/// Exact finite-horizon discounted return of a stochastic policy.
pub fn dp_value(
    spec: &TabularCmdp,
    policy: &Policy,
    gamma: f64,
    signal: Signal,
) -> Result<f64> {
    let probs = policy_table(spec, policy)?;
    let select = |o: &crate::cmdp::Outcome| -> Result<f64> {
        match signal {
            Signal::Reward => Ok(o.reward),
            Signal::Cost(i) => o
                .costs
                .get(i)
                .map(|c| f64::from(*c))
                .ok_or_else(|| Error::InvalidArgument(format!("cost index {i} out of range"))),
        }
    };

    let s_count = spec.num_states();
    let mut value = vec![0.0; s_count];
    for _ in 0..spec.horizon() {
        let mut next = vec![0.0; s_count];
        for s in 0..s_count {
            if spec.is_terminal(s) {
                continue;
            }
            let mut v = 0.0;
            for (a, pa) in probs[s].iter().enumerate() {
                if *pa == 0.0 {
                    continue;
                }
                for o in spec.outcomes(s, a) {
                    v += pa * o.prob * (select(o)? + gamma * value[o.next]);
                }
            }
            next[s] = v;
        }
        value = next;
    }
    Ok(spec
        .initial_distribution()
        .iter()
        .map(|(s, p)| p * value[*s])
        .sum())
}

fn policy_table(spec: &TabularCmdp, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    (0..spec.num_states())
        .map(|s| policy.action_probs(&crate::cmdp::Observation::Index(s)))
        .collect()
}

/// Central-difference gradient of a scalar function of theta.
pub fn fd_gradient(
    value_fn: impl Fn(&[f64]) -> Result<f64>,
    theta: &[f64],
    h: f64,
) -> Result<FlatGradient> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {h}"
        )));
    }
    let mut point = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        point[k] = theta[k] + h;
        let plus = value_fn(&point)?;
        point[k] = theta[k] - h;
        let minus = value_fn(&point)?;
        point[k] = theta[k];
        grad.push((plus - minus) / (2.0 * h));
    }
    FlatGradient::new(grad)
}

/// Reference greedy candidate filter over an explicit visit order.
///
/// Deliberately re-derives cosine similarity from raw dot products so it
/// shares no code with the shaping module it is used to test.
pub fn greedy_candidate_reference(
    matrix: &GradientMatrix,
    order: &[usize],
    config: &ShapingConfig,
) -> Result<Vec<usize>> {
    let n = matrix.num_constraints();
    if order.len() != n {
        return Err(Error::dim(order.len(), n, "visit order"));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::InvalidArgument(format!(
                "visit order is not a permutation of 0..{n}"
            )));
        }
        seen[i] = true;
    }

    let norm = |i: usize| -> f64 {
        matrix.row(i).values().iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let raw_sim = |i: usize, j: usize| -> f64 {
        let dot: f64 = matrix
            .row(i)
            .values()
            .iter()
            .zip(matrix.row(j).values())
            .map(|(a, b)| a * b)
            .sum();
        (dot / (norm(i) * norm(j))).clamp(-1.0, 1.0)
    };

    let mut kept: Vec<usize> = Vec::new();
    let mut skipped = 0usize;
    for &i in order {
        if norm(i) < config.norm_tolerance {
            skipped += 1;
            continue;
        }
        let admitted = kept
            .iter()
            .all(|&j| {
                let s = raw_sim(i, j);
                s > -config.sigma && s < config.kappa
            });
        if admitted {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        let _ = skipped;
        kept.push(order[0]);
    }
    Ok(kept)
}

/// Outcome of brute-force search over deterministic stationary policies.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Feasible {
        best_reward: f64,
        /// Action per state for the best feasible policy.
        policy: Vec<usize>,
        cost_returns: Vec<f64>,
    },
    /// No deterministic policy satisfies all thresholds.
    Infeasible { policies_checked: usize },
}

const SEARCH_GUARD: f64 = 1e7;

/// Enumerates every deterministic stationary policy and returns the best
/// feasible reward. Ties break toward the lexicographically smallest action
/// table.
pub fn exhaustive_policy_search(spec: &TabularCmdp) -> Result<SearchOutcome> {
    let s_count = spec.num_states();
    let a_count = spec.num_actions();
    let total = (a_count as f64).powi(s_count as i32);
    if total > SEARCH_GUARD {
        return Err(Error::Unsupported(format!(
            "{a_count}^{s_count} deterministic policies exceed the search guard"
        )));
    }
    let total = total as usize;

    let n = spec.num_costs();
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut actions = vec![0usize; s_count];
    for idx in 0..total {
        let mut rem = idx;
        for slot in actions.iter_mut() {
            *slot = rem % a_count;
            rem /= a_count;
        }
        let values = evaluate_deterministic(spec, &actions);
        let feasible = values[1..]
            .iter()
            .zip(spec.thresholds())
            .all(|(v, eps)| v <= eps);
        if feasible {
            let reward = values[0];
            let better = match &best {
                None => true,
                Some((r, _, _)) => reward > *r,
            };
            if better {
                best = Some((reward, actions.clone(), values[1..=n].to_vec()));
            }
        }
    }
    Ok(match best {
        Some((best_reward, policy, cost_returns)) => SearchOutcome::Feasible {
            best_reward,
            policy,
            cost_returns,
        },
        None => SearchOutcome::Infeasible {
            policies_checked: total,
        },
    })
}

/// Reward and all cost returns of a deterministic policy in one DP pass.
/// Index 0 is the reward; 1..=N are the costs.
pub fn evaluate_deterministic(spec: &TabularCmdp, actions: &[usize]) -> Vec<f64> {
    let s_count = spec.num_states();
    let n = spec.num_costs();
    let gamma = spec.gamma();
    let mut value = vec![vec![0.0; n + 1]; s_count];
    for _ in 0..spec.horizon() {
        let mut next = vec![vec![0.0; n + 1]; s_count];
        for s in 0..s_count {
            if spec.is_terminal(s) {
                continue;
            }
            for o in spec.outcomes(s, actions[s]) {
                next[s][0] += o.prob * (o.reward + gamma * value[o.next][0]);
                for (k, c) in o.costs.iter().enumerate() {
                    next[s][k + 1] += o.prob * (f64::from(*c) + gamma * value[o.next][k + 1]);
                }
            }
        }
        value = next;
    }
    let mut out = vec![0.0; n + 1];
    for (s, p) in spec.initial_distribution() {
        for k in 0..=n {
            out[k] += p * value[*s][k];
        }
    }
    out
}

/// Inputs to the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Gap between the starting constraint value and its optimum.
    pub v0_gap: f64,
    /// Total optimization steps.
    pub iterations: usize,
    /// Step size.
    pub alpha: f64,
    /// Uniform bound on the constraint gradient norms.
    pub grad_bound: f64,
    /// Smoothness constant.
    pub smoothness: f64,
    /// Mean number of redundant removals per step.
    pub mean_removed_redundant: f64,
    /// Mean number of conflicting removals per step.
    pub mean_removed_conflicting: f64,
}

/// The convergence bound on the mean squared shaped-gradient norm:
/// `gap / (T alpha) + G^2 (N_R + N_C) + alpha G^2 L / 2`.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<f64> {
    if inputs.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be positive".into()));
    }
    if !(inputs.alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {}",
            inputs.alpha
        )));
    }
    let g2 = inputs.grad_bound * inputs.grad_bound;
    Ok(inputs.v0_gap / (inputs.iterations as f64 * inputs.alpha)
        + g2 * (inputs.mean_removed_redundant + inputs.mean_removed_conflicting)
        + inputs.alpha * g2 * inputs.smoothness / 2.0)
}
