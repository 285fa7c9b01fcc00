//! Constraint gradient shaping strategies.
//!
//! All strategies emit a nonnegative weight vector `w` over the constraint
//! gradient matrix and the shaped gradient `w^T G`:
//!
//! * vanilla — uniform weights, sum of all rows;
//! * crpo — one-hot at a uniformly random row;
//! * min-max — one-hot at the most violated constraint;
//! * grads — greedy dedup of redundant/conflicting rows into a candidate
//!   set, then one-hot at a uniform sample from the set, scaled by
//!   `|set| / N`.
//!
//! Outcomes carry enough bookkeeping (candidate ids, removal counts,
//! zero-norm skips) to reconstruct the shaped gradient exactly and to audit
//! the counting identity `removed + skipped + |set| = N`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grad::{cosine_similarity, FlatGradient, ShapingConfig, Strategy};
use crate::lagrangian::GradientMatrix;

/// Result of one shaping step.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingOutcome {
    /// The shaped constraint gradient `w^T G`.
    pub cost_gradient: FlatGradient,
    /// Nonnegative weights, one per constraint; `cost_gradient` equals
    /// `sum_i weights[i] * G[i]` bit-exactly.
    pub weights: Vec<f64>,
    /// Candidate constraint indices (insertion order for grads; the full
    /// index set for the other strategies).
    pub candidate_ids: Vec<usize>,
    /// Constraints rejected because a set member was too similar.
    pub removed_redundant: usize,
    /// Constraints rejected because a set member pointed the opposite way.
    pub removed_conflicting: usize,
    /// Constraints skipped before similarity testing (norm below tolerance).
    pub skipped_zero_norm: usize,
    /// The constraint whose gradient was applied, for one-hot strategies.
    pub selected_id: Option<usize>,
}

impl ShapingOutcome {
    /// `removed + skipped + |candidates| = N` must hold for every outcome.
    pub fn counting_identity_holds(&self, num_constraints: usize) -> bool {
        self.removed_redundant
            + self.removed_conflicting
            + self.skipped_zero_norm
            + self.candidate_ids.len()
            == num_constraints
    }
}

/// Uniform weights over every constraint gradient.
pub fn shape_vanilla(matrix: &GradientMatrix) -> Result<ShapingOutcome> {
    let n = matrix.num_constraints();
    let mut cost_gradient = FlatGradient::zeros(matrix.dim());
    for row in matrix.rows() {
        cost_gradient.axpy(1.0, row)?;
    }
    Ok(ShapingOutcome {
        cost_gradient,
        weights: vec![1.0; n],
        candidate_ids: (0..n).collect(),
        removed_redundant: 0,
        removed_conflicting: 0,
        skipped_zero_norm: 0,
        selected_id: None,
    })
}

/// One-hot weight at a uniformly random constraint.
pub fn shape_crpo<R: Rng + ?Sized>(
    matrix: &GradientMatrix,
    rng: &mut R,
) -> Result<ShapingOutcome> {
    let n = matrix.num_constraints();
    let selected = rng.gen_range(0..n);
    Ok(one_hot_outcome(matrix, selected, 1.0, (0..n).collect(), 0, 0, 0))
}

/// One-hot weight at the most violated constraint (ties to the lowest index).
pub fn shape_minmax(matrix: &GradientMatrix, violations: &[f64]) -> Result<ShapingOutcome> {
    let n = matrix.num_constraints();
    if violations.len() != n {
        return Err(Error::dim(violations.len(), n, "violations"));
    }
    let mut selected = 0;
    for (i, v) in violations.iter().enumerate() {
        if *v > violations[selected] {
            selected = i;
        }
        let _ = v;
    }
    Ok(one_hot_outcome(matrix, selected, 1.0, (0..n).collect(), 0, 0, 0))
}

/// Candidate set plus removal bookkeeping from the greedy filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Admitted constraint indices in insertion (visit) order.
    pub ids: Vec<usize>,
    pub removed_redundant: usize,
    pub removed_conflicting: usize,
    pub skipped_zero_norm: usize,
}

/// Shuffles the constraint indices and runs the greedy pairwise filter.
pub fn build_candidate_set<R: Rng + ?Sized>(
    matrix: &GradientMatrix,
    config: &ShapingConfig,
    rng: &mut R,
) -> Result<CandidateSet> {
    let mut order: Vec<usize> = (0..matrix.num_constraints()).collect();
    order.shuffle(rng);
    build_candidate_set_with_order(matrix, &order, config)
}

/// Greedy filter over an explicit visit order.
///
/// The first non-skipped index is always admitted; each later index joins
/// only if its similarity against every current member lies strictly inside
/// `(-sigma, kappa)`. A rejection is attributed to the first witness in set
/// order. Gradients with norm below `norm_tolerance` are skipped before any
/// similarity test; if that leaves nothing, the first index in visit order
/// is admitted anyway so the set is never empty (its gradient is zero, so
/// sampling it yields a zero step).
pub fn build_candidate_set_with_order(
    matrix: &GradientMatrix,
    order: &[usize],
    config: &ShapingConfig,
) -> Result<CandidateSet> {
    let n = matrix.num_constraints();
    check_permutation(order, n)?;

    let mut ids: Vec<usize> = Vec::new();
    let mut removed_redundant = 0;
    let mut removed_conflicting = 0;
    let mut skipped_zero_norm = 0;

    for &i in order {
        if matrix.row(i).norm() < config.norm_tolerance {
            skipped_zero_norm += 1;
            continue;
        }
        let mut verdict = None;
        for &j in &ids {
            let sim = cosine_similarity(matrix.row(i), matrix.row(j), config.norm_tolerance)?;
            if sim >= config.kappa {
                verdict = Some(true);
                break;
            }
            if sim <= -config.sigma {
                verdict = Some(false);
                break;
            }
        }
        match verdict {
            Some(true) => removed_redundant += 1,
            Some(false) => removed_conflicting += 1,
            None => ids.push(i),
        }
    }

    if ids.is_empty() {
        // Every gradient was zero-norm; keep the set nonempty.
        ids.push(order[0]);
        skipped_zero_norm -= 1;
    }

    Ok(CandidateSet {
        ids,
        removed_redundant,
        removed_conflicting,
        skipped_zero_norm,
    })
}

/// Gradient shaping: sample one candidate uniformly, scale by `|set| / N`.
pub fn shape_grads<R: Rng + ?Sized>(
    matrix: &GradientMatrix,
    config: &ShapingConfig,
    rng: &mut R,
) -> Result<ShapingOutcome> {
    let candidates = build_candidate_set(matrix, config, rng)?;
    let selected = candidates.ids[rng.gen_range(0..candidates.ids.len())];
    let scale = candidates.ids.len() as f64 / matrix.num_constraints() as f64;
    Ok(one_hot_outcome(
        matrix,
        selected,
        scale,
        candidates.ids,
        candidates.removed_redundant,
        candidates.removed_conflicting,
        candidates.skipped_zero_norm,
    ))
}

/// Dispatch over the four strategies. `violations` is only read by min-max.
pub fn shape<R: Rng + ?Sized>(
    strategy: Strategy,
    matrix: &GradientMatrix,
    violations: &[f64],
    config: &ShapingConfig,
    rng: &mut R,
) -> Result<ShapingOutcome> {
    match strategy {
        Strategy::Vanilla => shape_vanilla(matrix),
        Strategy::Crpo => shape_crpo(matrix, rng),
        Strategy::MinMax => shape_minmax(matrix, violations),
        Strategy::GradS => shape_grads(matrix, config, rng),
    }
}

fn one_hot_outcome(
    matrix: &GradientMatrix,
    selected: usize,
    weight: f64,
    candidate_ids: Vec<usize>,
    removed_redundant: usize,
    removed_conflicting: usize,
    skipped_zero_norm: usize,
) -> ShapingOutcome {
    let mut weights = vec![0.0; matrix.num_constraints()];
    weights[selected] = weight;
    ShapingOutcome {
        cost_gradient: matrix.row(selected).scaled(weight),
        weights,
        candidate_ids,
        removed_redundant,
        removed_conflicting,
        skipped_zero_norm,
        selected_id: Some(selected),
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
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
    Ok(())
}
