//! Stochastic softmax policies and REINFORCE gradient estimation.
//!
//! Two parameterizations share one flat parameter vector:
//!
//! * tabular softmax — one logit per (state, action), `d = |S| * |A|`;
//! * linear softmax — per-action weights over a feature vector,
//!   `d = |A| * F`.
//!
//! The gradient estimator is batch REINFORCE with discounted reward-to-go
//! (full discount from episode start, so the estimate targets the value at
//! the initial distribution) and a per-time-step batch-mean baseline.

use rand::Rng;

use crate::cmdp::{step, CmdpSpec, Observation};
use crate::error::{Error, Result};
use crate::grad::FlatGradient;

/// Differentiable softmax policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    TabularSoftmax {
        num_states: usize,
        num_actions: usize,
        theta: Vec<f64>,
    },
    LinearSoftmax {
        num_features: usize,
        num_actions: usize,
        theta: Vec<f64>,
    },
}

impl Policy {
    /// Uniform tabular policy (all logits zero).
    pub fn tabular(num_states: usize, num_actions: usize) -> Policy {
        Policy::TabularSoftmax {
            num_states,
            num_actions,
            theta: vec![0.0; num_states * num_actions],
        }
    }

    /// Uniform linear policy (all weights zero).
    pub fn linear(num_features: usize, num_actions: usize) -> Policy {
        Policy::LinearSoftmax {
            num_features,
            num_actions,
            theta: vec![0.0; num_features * num_actions],
        }
    }

    /// The natural policy for a task family: tabular for tabular state
    /// spaces, linear over the task's feature map otherwise.
    pub fn for_spec(spec: &CmdpSpec) -> Policy {
        match spec {
            CmdpSpec::Grid(g) => Policy::tabular(g.table().num_states(), g.table().num_actions()),
            CmdpSpec::Tabular(t) => Policy::tabular(t.num_states(), t.num_actions()),
            CmdpSpec::Point(p) => {
                Policy::linear(crate::cmdp::POINT_FEATURES, p.num_actions())
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.theta().len()
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Policy::TabularSoftmax { num_actions, .. }
            | Policy::LinearSoftmax { num_actions, .. } => *num_actions,
        }
    }

    pub fn theta(&self) -> &[f64] {
        match self {
            Policy::TabularSoftmax { theta, .. } | Policy::LinearSoftmax { theta, .. } => theta,
        }
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        match self {
            Policy::TabularSoftmax { theta, .. } | Policy::LinearSoftmax { theta, .. } => theta,
        }
    }

    pub fn set_theta(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(Error::dim(values.len(), self.dim(), "theta"));
        }
        self.theta_mut().copy_from_slice(values);
        Ok(())
    }

    fn logits(&self, obs: &Observation) -> Result<Vec<f64>> {
        match (self, obs) {
            (
                Policy::TabularSoftmax {
                    num_states,
                    num_actions,
                    theta,
                },
                Observation::Index(s),
            ) => {
                if *s >= *num_states {
                    return Err(Error::Domain(format!("state index {s} out of range")));
                }
                let base = s * num_actions;
                Ok(theta[base..base + num_actions].to_vec())
            }
            (
                Policy::LinearSoftmax {
                    num_features,
                    num_actions,
                    theta,
                },
                Observation::Features(phi),
            ) => {
                if phi.len() != *num_features {
                    return Err(Error::dim(phi.len(), *num_features, "features"));
                }
                Ok((0..*num_actions)
                    .map(|a| {
                        let base = a * num_features;
                        phi.iter()
                            .zip(&theta[base..base + num_features])
                            .map(|(x, w)| x * w)
                            .sum()
                    })
                    .collect())
            }
            _ => Err(Error::Domain(
                "observation kind does not match policy kind".into(),
            )),
        }
    }

    /// Softmax action distribution at the observation.
    pub fn action_probs(&self, obs: &Observation) -> Result<Vec<f64>> {
        let logits = self.logits(obs)?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / total).collect())
    }

    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        obs: &Observation,
        rng: &mut R,
    ) -> Result<usize> {
        let probs = self.action_probs(obs)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(a);
            }
        }
        Ok(probs.len() - 1)
    }

    /// Score function: gradient of `log pi(action | obs)` in theta.
    pub fn log_prob_grad(&self, obs: &Observation, action: usize) -> Result<FlatGradient> {
        let mut acc = vec![0.0; self.dim()];
        self.accumulate_score(obs, action, 1.0, &mut acc)?;
        FlatGradient::new(acc)
    }

    /// Adds `coeff * grad log pi(action | obs)` into `acc`.
    fn accumulate_score(
        &self,
        obs: &Observation,
        action: usize,
        coeff: f64,
        acc: &mut [f64],
    ) -> Result<()> {
        if action >= self.num_actions() {
            return Err(Error::Domain(format!("action {action} out of range")));
        }
        let probs = self.action_probs(obs)?;
        match (self, obs) {
            (Policy::TabularSoftmax { num_actions, .. }, Observation::Index(s)) => {
                let base = s * num_actions;
                for (a, p) in probs.iter().enumerate() {
                    let indicator = if a == action { 1.0 } else { 0.0 };
                    acc[base + a] += coeff * (indicator - p);
                }
            }
            (Policy::LinearSoftmax { num_features, .. }, Observation::Features(phi)) => {
                for (a, p) in probs.iter().enumerate() {
                    let indicator = if a == action { 1.0 } else { 0.0 };
                    let base = a * num_features;
                    for (f, x) in phi.iter().enumerate() {
                        acc[base + f] += coeff * (indicator - p) * x;
                    }
                }
            }
            _ => {
                return Err(Error::Domain(
                    "observation kind does not match policy kind".into(),
                ))
            }
        }
        Ok(())
    }
}

/// One recorded step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajStep {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub costs: Vec<f64>,
}

/// A full episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Plays one episode to the horizon or an absorbing state.
pub fn rollout<R: Rng + ?Sized>(
    spec: &CmdpSpec,
    policy: &Policy,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut state = spec.initial_state(rng);
    let mut steps = Vec::with_capacity(spec.horizon());
    for _ in 0..spec.horizon() {
        let obs = spec.observe(&state)?;
        let action = policy.sample_action(&obs, rng)?;
        let result = step(spec, &state, action, rng)?;
        steps.push(TrajStep {
            obs,
            action,
            reward: result.reward,
            costs: result.costs,
        });
        if result.done {
            break;
        }
        state = result.next_state;
    }
    Ok(Trajectory { steps })
}

/// Monte Carlo estimates of the discounted reward and cost returns.
pub fn estimate_returns(batch: &[Trajectory], gamma: f64) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory batch".into()));
    }
    let n = batch[0]
        .steps
        .first()
        .map(|s| s.costs.len())
        .unwrap_or(0);
    let mut v_r = 0.0;
    let mut v_c = vec![0.0; n];
    for traj in batch {
        let mut discount = 1.0;
        for step in &traj.steps {
            if step.costs.len() != n {
                return Err(Error::dim(step.costs.len(), n, "cost vector"));
            }
            v_r += discount * step.reward;
            for (vc, c) in v_c.iter_mut().zip(&step.costs) {
                *vc += discount * c;
            }
            discount *= gamma;
        }
    }
    let b = batch.len() as f64;
    v_r /= b;
    for vc in &mut v_c {
        *vc /= b;
    }
    Ok((v_r, v_c))
}

/// Which per-step scalar drives the gradient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Reward,
    Cost(usize),
}

/// Batch REINFORCE with reward-to-go and a batch-mean baseline.
///
/// Returns the estimate of the gradient of the discounted return of
/// `signal` at the initial distribution. The reward-to-go keeps the full
/// `gamma^t` discount from episode start; the baseline at each time step is
/// the batch mean of the returns-to-go of episodes still running there.
pub fn reinforce_gradient(
    batch: &[Trajectory],
    policy: &Policy,
    gamma: f64,
    signal: Signal,
) -> Result<FlatGradient> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory batch".into()));
    }
    let select = |step: &TrajStep| -> Result<f64> {
        match signal {
            Signal::Reward => Ok(step.reward),
            Signal::Cost(i) => step
                .costs
                .get(i)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("cost index {i} out of range"))),
        }
    };

    // Returns-to-go per trajectory, with the gamma^t convention.
    let mut togo: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
    for traj in batch {
        let len = traj.len();
        let mut g = vec![0.0; len];
        let mut acc = 0.0;
        for t in (0..len).rev() {
            acc += gamma.powi(t as i32) * select(&traj.steps[t])?;
            g[t] = acc;
        }
        togo.push(g);
    }

    // Per-time-step batch-mean baseline (only meaningful with two or more
    // episodes; a single episode would cancel itself out).
    let max_len = togo.iter().map(|g| g.len()).max().unwrap_or(0);
    let mut baseline = vec![0.0; max_len];
    if batch.len() >= 2 {
        for (t, b) in baseline.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for g in &togo {
                if t < g.len() {
                    sum += g[t];
                    count += 1;
                }
            }
            if count > 0 {
                *b = sum / count as f64;
            }
        }
    }

    let mut acc = vec![0.0; policy.dim()];
    for (traj, g) in batch.iter().zip(&togo) {
        for (t, step) in traj.steps.iter().enumerate() {
            let coeff = g[t] - baseline[t];
            policy.accumulate_score(&step.obs, step.action, coeff, &mut acc)?;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for v in &mut acc {
        *v *= scale;
    }
    FlatGradient::new(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::{make_grid_env, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_theta_is_uniform() {
        let policy = Policy::tabular(3, 4);
        let probs = policy.action_probs(&Observation::Index(1)).unwrap();
        for p in probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let policy = Policy::tabular(1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[policy.sample_action(&Observation::Index(0), &mut rng).unwrap()] += 1;
        }
        // 3 standard errors of a Bernoulli(0.25) frequency.
        let se = (0.25 * 0.75 / draws as f64).sqrt();
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.25).abs() <= 3.0 * se, "frequency {f}");
        }
    }

    #[test]
    fn large_logit_dominates() {
        let mut policy = Policy::tabular(1, 3);
        policy.theta_mut()[1] = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(
                policy.sample_action(&Observation::Index(0), &mut rng).unwrap(),
                1
            );
        }
    }

    #[test]
    fn fixed_seed_reproduces_actions() {
        let policy = Policy::tabular(1, 4);
        let sample = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32)
                .map(|_| policy.sample_action(&Observation::Index(0), &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(sample(5), sample(5));
    }

    #[test]
    fn tabular_score_closed_form() {
        let policy = Policy::tabular(2, 2);
        let grad = policy.log_prob_grad(&Observation::Index(1), 0).unwrap();
        assert_eq!(grad.values()[0..2], [0.0, 0.0]);
        assert!((grad.values()[2] - 0.5).abs() < 1e-15);
        assert!((grad.values()[3] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn score_identity_sums_to_zero() {
        let mut policy = Policy::tabular(2, 3);
        policy
            .set_theta(&[0.3, -0.7, 1.1, 0.0, 0.4, -0.2])
            .unwrap();
        let obs = Observation::Index(0);
        let probs = policy.action_probs(&obs).unwrap();
        let mut acc = FlatGradient::zeros(policy.dim());
        for (a, p) in probs.iter().enumerate() {
            let g = policy.log_prob_grad(&obs, a).unwrap();
            acc.axpy(*p, &g).unwrap();
        }
        assert!(acc.norm() < 1e-9, "score identity norm {}", acc.norm());
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let mut policy = Policy::tabular(1, 3);
        policy.set_theta(&[0.2, -0.4, 0.9]).unwrap();
        let obs = Observation::Index(0);
        let action = 2;
        let grad = policy.log_prob_grad(&obs, action).unwrap();
        let h = 1e-5;
        for k in 0..policy.dim() {
            let mut plus = policy.clone();
            plus.theta_mut()[k] += h;
            let mut minus = policy.clone();
            minus.theta_mut()[k] -= h;
            let fd = (plus.action_probs(&obs).unwrap()[action].ln()
                - minus.action_probs(&obs).unwrap()[action].ln())
                / (2.0 * h);
            assert!(
                (fd - grad.values()[k]).abs() < 1e-6,
                "coordinate {k}: fd {fd} vs analytic {}",
                grad.values()[k]
            );
        }
    }

    #[test]
    fn rollout_respects_horizon_and_binary_costs() {
        let spec = make_grid_env(Variant::V3, 6).unwrap();
        let policy = Policy::for_spec(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = rollout(&spec, &policy, &mut rng).unwrap();
        assert!(traj.len() <= spec.horizon());
        for step in &traj.steps {
            for c in &step.costs {
                assert!(*c == 0.0 || *c == 1.0);
            }
        }
    }

    #[test]
    fn estimate_returns_geometric_sum() {
        let traj = Trajectory {
            steps: (0..3)
                .map(|_| TrajStep {
                    obs: Observation::Index(0),
                    action: 0,
                    reward: 1.0,
                    costs: vec![0.0],
                })
                .collect(),
        };
        let (v_r, v_c) = estimate_returns(&[traj], 0.5).unwrap();
        assert!((v_r - 1.75).abs() < 1e-15);
        assert_eq!(v_c, vec![0.0]);
    }

    #[test]
    fn zero_signal_gives_zero_gradient() {
        let spec = make_grid_env(Variant::V2, 6).unwrap();
        let policy = Policy::for_spec(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch: Vec<Trajectory> = (0..4)
            .map(|_| rollout(&spec, &policy, &mut rng).unwrap())
            .collect();
        // Scale all rewards to zero and check the estimator vanishes.
        let zeroed: Vec<Trajectory> = batch
            .iter()
            .map(|t| Trajectory {
                steps: t
                    .steps
                    .iter()
                    .map(|s| TrajStep {
                        obs: s.obs.clone(),
                        action: s.action,
                        reward: 0.0,
                        costs: s.costs.clone(),
                    })
                    .collect(),
            })
            .collect();
        let grad = reinforce_gradient(&zeroed, &policy, 0.99, Signal::Reward).unwrap();
        assert_eq!(grad.norm(), 0.0);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let policy = Policy::tabular(2, 2);
        assert!(reinforce_gradient(&[], &policy, 0.9, Signal::Reward).is_err());
        assert!(estimate_returns(&[], 0.9).is_err());
    }
}
