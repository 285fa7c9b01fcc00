//! Synthetic smooth constraint objectives with known constants.
//!
//! The family is built from Huber-clipped quadratics: quadratic within
//! `radius` of a center, linear outside. Every member has gradient norm at
//! most `radius` and curvature at most 1, so the gradient bound G and
//! smoothness L of the convergence check are exact by construction rather
//! than estimated. A mirrored member (`offset - huber`) has the exactly
//! opposite gradient of its partner everywhere, which pins a conflicting
//! pair into the family.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::{FlatGradient, ShapingConfig};
use crate::lagrangian::GradientMatrix;
use crate::oracle::{theorem1_bound, BoundInputs};
use crate::shaping::shape_grads;

/// One objective in the family.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticObjective {
    /// Huber loss around `center`.
    Huber { center: Vec<f64> },
    /// `offset - huber(theta - center)`: gradient is the exact negation of
    /// the matching `Huber` member.
    MirroredHuber { center: Vec<f64>, offset: f64 },
}

impl SyntheticObjective {
    fn center(&self) -> &[f64] {
        match self {
            SyntheticObjective::Huber { center }
            | SyntheticObjective::MirroredHuber { center, .. } => center,
        }
    }
}

/// A set of synthetic constraint objectives sharing one parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFamily {
    dim: usize,
    radius: f64,
    objectives: Vec<SyntheticObjective>,
}

impl SyntheticFamily {
    pub fn new(dim: usize, radius: f64, objectives: Vec<SyntheticObjective>) -> Result<Self> {
        if objectives.is_empty() {
            return Err(Error::InvalidArgument("empty objective family".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("radius must be positive".into()));
        }
        for o in &objectives {
            if o.center().len() != dim {
                return Err(Error::dim(o.center().len(), dim, "objective center"));
            }
        }
        Ok(Self {
            dim,
            radius,
            objectives,
        })
    }

    /// Default family for the bound check: two nearby free Hubers plus an
    /// exactly conflicting mirrored pair.
    pub fn default_conflicting() -> SyntheticFamily {
        SyntheticFamily::new(
            3,
            1.0,
            vec![
                SyntheticObjective::Huber {
                    center: vec![0.3, 0.0, 0.1],
                },
                SyntheticObjective::Huber {
                    center: vec![0.0, 0.3, -0.1],
                },
                SyntheticObjective::Huber {
                    center: vec![0.1, 0.1, 0.0],
                },
                SyntheticObjective::MirroredHuber {
                    center: vec![0.1, 0.1, 0.0],
                    offset: 2.0,
                },
            ],
        )
        .expect("default family is well-formed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    /// Exact uniform bound on every member's gradient norm.
    pub fn grad_bound(&self) -> f64 {
        self.radius
    }

    /// Exact smoothness constant of every member.
    pub fn smoothness(&self) -> f64 {
        1.0
    }

    fn huber(&self, center: &[f64], theta: &[f64]) -> f64 {
        let r = dist(theta, center);
        if r <= self.radius {
            0.5 * r * r
        } else {
            self.radius * r - 0.5 * self.radius * self.radius
        }
    }

    fn huber_grad(&self, center: &[f64], theta: &[f64]) -> Vec<f64> {
        let r = dist(theta, center);
        let scale = if r <= self.radius || r == 0.0 {
            1.0
        } else {
            self.radius / r
        };
        theta
            .iter()
            .zip(center)
            .map(|(t, c)| scale * (t - c))
            .collect()
    }

    pub fn value(&self, index: usize, theta: &[f64]) -> f64 {
        match &self.objectives[index] {
            SyntheticObjective::Huber { center } => self.huber(center, theta),
            SyntheticObjective::MirroredHuber { center, offset } => {
                offset - self.huber(center, theta)
            }
        }
    }

    pub fn gradient(&self, index: usize, theta: &[f64]) -> FlatGradient {
        let g = match &self.objectives[index] {
            SyntheticObjective::Huber { center } => self.huber_grad(center, theta),
            SyntheticObjective::MirroredHuber { center, .. } => self
                .huber_grad(center, theta)
                .into_iter()
                .map(|v| -v)
                .collect(),
        };
        FlatGradient::new(g).expect("huber gradients are finite")
    }

    /// Mean objective value, the quantity the gap in the bound refers to.
    pub fn mean_value(&self, theta: &[f64]) -> f64 {
        let total: f64 = (0..self.len()).map(|i| self.value(i, theta)).sum();
        total / self.len() as f64
    }

    /// Analytic minimum of the mean objective.
    ///
    /// Mirrored pairs contribute a constant to the sum, so the minimum is
    /// attained at the centroid of the unpaired Huber centers, provided
    /// every such center lies within `radius` of that centroid (all
    /// members quadratic there). Errors if that condition fails or if a
    /// mirrored member lacks its partner.
    pub fn mean_value_minimum(&self) -> Result<f64> {
        let mut free: Vec<&[f64]> = Vec::new();
        let mut constant = 0.0;
        let mut mirrors: Vec<(&[f64], f64)> = Vec::new();
        for o in &self.objectives {
            match o {
                SyntheticObjective::Huber { center } => free.push(center),
                SyntheticObjective::MirroredHuber { center, offset } => {
                    mirrors.push((center, *offset))
                }
            }
        }
        for (center, offset) in mirrors {
            let pos = free
                .iter()
                .position(|c| *c == center)
                .ok_or_else(|| {
                    Error::InvalidArgument(
                        "mirrored member without a matching huber partner".into(),
                    )
                })?;
            free.swap_remove(pos);
            constant += offset;
        }
        if free.is_empty() {
            return Ok(constant / self.len() as f64);
        }
        let mut centroid = vec![0.0; self.dim];
        for c in &free {
            for (acc, v) in centroid.iter_mut().zip(*c) {
                *acc += v;
            }
        }
        for v in &mut centroid {
            *v /= free.len() as f64;
        }
        for c in &free {
            if dist(&centroid, c) > self.radius {
                return Err(Error::Unsupported(
                    "centers spread beyond the quadratic radius; minimum not analytic".into(),
                ));
            }
        }
        let quad: f64 = free.iter().map(|c| 0.5 * dist(&centroid, c).powi(2)).sum();
        Ok((quad + constant) / self.len() as f64)
    }

    /// Gradient matrix of the whole family at `theta` (unit multipliers).
    pub fn gradient_matrix(&self, theta: &[f64]) -> GradientMatrix {
        GradientMatrix::new((0..self.len()).map(|i| self.gradient(i, theta)).collect())
            .expect("family is nonempty")
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One seeded descent run of the shaped gradient on the family.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckRun {
    pub alpha: f64,
    pub seed: u64,
    /// Time average of the squared shaped-gradient norm.
    pub mean_sq_norm: f64,
    pub mean_removed_redundant: f64,
    pub mean_removed_conflicting: f64,
    /// The bound evaluated with the measured removal means.
    pub bound: f64,
}

impl BoundCheckRun {
    pub fn holds(&self) -> bool {
        self.mean_sq_norm <= self.bound
    }
}

/// Runs `steps` shaped-descent iterations from `theta0` and compares the
/// running mean of the squared shaped-gradient norm with the bound.
pub fn bound_check_run(
    family: &SyntheticFamily,
    theta0: &[f64],
    alpha: f64,
    steps: usize,
    config: &ShapingConfig,
    seed: u64,
) -> Result<BoundCheckRun> {
    if theta0.len() != family.dim() {
        return Err(Error::dim(theta0.len(), family.dim(), "theta0"));
    }
    let v0_gap = family.mean_value(theta0) - family.mean_value_minimum()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = theta0.to_vec();
    let mut sq_norm_sum = 0.0;
    let mut nr_sum = 0usize;
    let mut nc_sum = 0usize;
    for _ in 0..steps {
        let matrix = family.gradient_matrix(&theta);
        let outcome = shape_grads(&matrix, config, &mut rng)?;
        sq_norm_sum += outcome.cost_gradient.norm().powi(2);
        nr_sum += outcome.removed_redundant;
        nc_sum += outcome.removed_conflicting;
        for (t, g) in theta.iter_mut().zip(outcome.cost_gradient.values()) {
            *t -= alpha * g;
        }
    }
    let t = steps as f64;
    let mean_removed_redundant = nr_sum as f64 / t;
    let mean_removed_conflicting = nc_sum as f64 / t;
    let bound = theorem1_bound(&BoundInputs {
        v0_gap,
        iterations: steps,
        alpha,
        grad_bound: family.grad_bound(),
        smoothness: family.smoothness(),
        mean_removed_redundant,
        mean_removed_conflicting,
    })?;
    Ok(BoundCheckRun {
        alpha,
        seed,
        mean_sq_norm: sq_norm_sum / t,
        mean_removed_redundant,
        mean_removed_conflicting,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::fd_gradient;

    #[test]
    fn gradient_norm_never_exceeds_bound() {
        let family = SyntheticFamily::default_conflicting();
        for k in 0..family.len() {
            for theta in [[0.0, 0.0, 0.0], [5.0, -3.0, 2.0], [0.31, 0.02, 0.1]] {
                let g = family.gradient(k, &theta);
                assert!(g.norm() <= family.grad_bound() + 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let family = SyntheticFamily::default_conflicting();
        for k in 0..family.len() {
            for theta in [[0.2, 0.1, -0.3], [2.0, 2.0, 2.0]] {
                let analytic = family.gradient(k, &theta);
                let fd = fd_gradient(|t| Ok(family.value(k, t)), &theta, 1e-6).unwrap();
                for (a, b) in analytic.values().iter().zip(fd.values()) {
                    assert!((a - b).abs() < 1e-6, "objective {k}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn mirrored_pair_is_exactly_antiparallel() {
        let family = SyntheticFamily::default_conflicting();
        let theta = [0.7, -0.2, 0.4];
        let g_pos = family.gradient(2, &theta);
        let g_neg = family.gradient(3, &theta);
        for (a, b) in g_pos.values().iter().zip(g_neg.values()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn mean_minimum_matches_numeric_scan() {
        let family = SyntheticFamily::default_conflicting();
        let analytic = family.mean_value_minimum().unwrap();
        // Coarse scan plus local descent should not beat the analytic value.
        let mut best = f64::INFINITY;
        let grid = [-0.2, -0.1, 0.0, 0.1, 0.15, 0.2, 0.3, 0.4];
        for x in grid {
            for y in grid {
                for z in grid {
                    best = best.min(family.mean_value(&[x, y, z]));
                }
            }
        }
        assert!(analytic <= best + 1e-9);
        assert!(best - analytic < 0.02, "scan {best} vs analytic {analytic}");
    }
}
