//! Primal-dual training loop and seed sweeps.
//!
//! One iteration rolls out a batch of episodes, estimates returns and
//! gradients, shapes the constraint gradients with the configured strategy,
//! takes a primal descent step, and then a projected dual ascent step on
//! the same batch. The rollout stream and the shaping stream are split from
//! the run seed so that strategies consuming different amounts of shaping
//! randomness still see identical batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cmdp::CmdpSpec;
use crate::error::{Error, Result};
use crate::grad::ShapingConfig;
use crate::lagrangian::{build_gradient_matrix, total_gradient, update_multipliers, LagrangeState};
use crate::policy::{estimate_returns, reinforce_gradient, rollout, Policy, Signal, Trajectory};
use crate::shaping::shape;

/// RNG stream ids derived from the run seed.
const ROLLOUT_STREAM: u64 = 0;
const SHAPING_STREAM: u64 = 1;

/// Knobs of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub primal_lr: f64,
    pub dual_lr: f64,
    pub gamma: f64,
    pub shaping: ShapingConfig,
    pub seed: u64,
    /// Initial value for every Lagrange multiplier.
    pub lambda_init: f64,
    /// Norm cap on the primal step, if any.
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self, spec: &CmdpSpec) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.episodes_per_iter == 0 {
            return Err(Error::Config("episodes_per_iter must be positive".into()));
        }
        if !(self.primal_lr > 0.0) {
            return Err(Error::Config("primal_lr must be positive".into()));
        }
        if !(self.dual_lr > 0.0) {
            return Err(Error::Config("dual_lr must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must be in (0,1)".into()));
        }
        if self.lambda_init < 0.0 {
            return Err(Error::Config("lambda_init must be nonnegative".into()));
        }
        if (self.gamma - spec.gamma()).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "train gamma {} does not match the task's gamma {}",
                self.gamma,
                spec.gamma()
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            episodes_per_iter: 24,
            primal_lr: 0.05,
            dual_lr: 0.02,
            gamma: 0.99,
            shaping: ShapingConfig::default(),
            seed: 0,
            lambda_init: 0.0,
            grad_clip: Some(10.0),
        }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub reward_return: f64,
    pub cost_returns: Vec<f64>,
    /// max_i cost_returns[i] / thresholds[i]
    pub cost_n: f64,
    /// Multipliers after this iteration's dual step.
    pub lambdas: Vec<f64>,
    pub candidate_set_size: usize,
    pub removed_redundant: usize,
    pub removed_conflicting: usize,
    pub skipped_zero_norm: usize,
    pub selected_constraint: Option<usize>,
    /// Norm of the full objective gradient before clipping.
    pub grad_norm: f64,
}

/// A finished (or aborted) training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub records: Vec<IterationRecord>,
    /// True when a non-finite parameter aborted the run early.
    pub aborted: bool,
    pub final_policy: Policy,
}

/// Normalized worst-case constraint violation: `max_i c_i / eps_i`.
pub fn cost_n(cost_returns: &[f64], thresholds: &[f64]) -> Result<f64> {
    if cost_returns.len() != thresholds.len() {
        return Err(Error::dim(
            cost_returns.len(),
            thresholds.len(),
            "cost returns",
        ));
    }
    if thresholds.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument(
            "cost-N needs strictly positive thresholds".into(),
        ));
    }
    Ok(cost_returns
        .iter()
        .zip(thresholds)
        .map(|(c, eps)| c / eps)
        .fold(0.0, f64::max))
}

/// Runs one seeded primal-dual training loop.
pub fn train(spec: &CmdpSpec, config: &TrainConfig) -> Result<TrainRun> {
    config.validate(spec)?;
    let n = spec.num_costs();
    let thresholds = spec.thresholds().to_vec();
    let mut policy = Policy::for_spec(spec);
    let mut lagrange = LagrangeState::new(n, config.lambda_init, config.dual_lr)?;

    let mut rollout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    rollout_rng.set_stream(ROLLOUT_STREAM);
    let mut shaping_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shaping_rng.set_stream(SHAPING_STREAM);

    let mut records = Vec::with_capacity(config.iterations);
    let mut aborted = false;

    for iter in 0..config.iterations {
        let batch: Vec<Trajectory> = (0..config.episodes_per_iter)
            .map(|_| rollout(spec, &policy, &mut rollout_rng))
            .collect::<Result<_>>()?;

        let (v_r, v_c) = estimate_returns(&batch, config.gamma)?;
        let reward_grad = reinforce_gradient(&batch, &policy, config.gamma, Signal::Reward)?;
        let cost_grads: Vec<_> = (0..n)
            .map(|i| reinforce_gradient(&batch, &policy, config.gamma, Signal::Cost(i)))
            .collect::<Result<_>>()?;

        let matrix = build_gradient_matrix(&lagrange, &cost_grads)?;
        let violations: Vec<f64> = v_c
            .iter()
            .zip(&thresholds)
            .map(|(v, eps)| v - eps)
            .collect();
        let outcome = shape(
            config.shaping.strategy,
            &matrix,
            &violations,
            &config.shaping,
            &mut shaping_rng,
        )?;

        let objective = total_gradient(&reward_grad, &outcome.cost_gradient)?;
        let grad_norm = objective.norm();
        let scale = match config.grad_clip {
            Some(cap) if grad_norm > cap => cap / grad_norm,
            _ => 1.0,
        };
        for (t, g) in policy.theta_mut().iter_mut().zip(objective.values()) {
            *t -= config.primal_lr * scale * g;
        }

        lagrange = update_multipliers(&lagrange, &v_c, &thresholds)?;

        records.push(IterationRecord {
            iter,
            reward_return: v_r,
            cost_n: cost_n(&v_c, &thresholds)?,
            cost_returns: v_c,
            lambdas: lagrange.lambdas().to_vec(),
            candidate_set_size: outcome.candidate_ids.len(),
            removed_redundant: outcome.removed_redundant,
            removed_conflicting: outcome.removed_conflicting,
            skipped_zero_norm: outcome.skipped_zero_norm,
            selected_constraint: outcome.selected_id,
            grad_norm,
        });

        if policy.theta().iter().any(|t| !t.is_finite()) {
            aborted = true;
            break;
        }
    }

    Ok(TrainRun {
        records,
        aborted,
        final_policy: policy,
    })
}

/// Final-window statistics of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedStats {
    pub seed: u64,
    pub window_reward: f64,
    pub window_cost_n: f64,
}

/// Results of running one configuration over several seeds.
#[derive(Debug, Clone)]
pub struct SeedSweep {
    pub runs: Vec<(u64, Result<TrainRun>)>,
    pub stats: Vec<SeedStats>,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub cost_n_mean: f64,
    pub cost_n_std: f64,
}

/// Trains once per seed (in parallel) and aggregates the final-window
/// means. A failing seed is reported in `runs` without aborting the rest.
pub fn run_seeds(
    spec: &CmdpSpec,
    config: &TrainConfig,
    seeds: &[u64],
    window: usize,
) -> Result<SeedSweep> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("empty seed list".into()));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let runs: Vec<(u64, Result<TrainRun>)> = seeds
        .par_iter()
        .map(|seed| {
            let mut per_seed = config.clone();
            per_seed.seed = *seed;
            (*seed, train(spec, &per_seed))
        })
        .collect();

    let mut stats = Vec::new();
    for (seed, run) in &runs {
        if let Ok(run) = run {
            if let Some((reward, cost)) = window_means(&run.records, window) {
                stats.push(SeedStats {
                    seed: *seed,
                    window_reward: reward,
                    window_cost_n: cost,
                });
            }
        }
    }
    if stats.is_empty() {
        return Err(Error::InvalidArgument(
            "no seed produced any iteration records".into(),
        ));
    }
    let rewards: Vec<f64> = stats.iter().map(|s| s.window_reward).collect();
    let costs: Vec<f64> = stats.iter().map(|s| s.window_cost_n).collect();
    let (reward_mean, reward_std) = mean_std(&rewards);
    let (cost_n_mean, cost_n_std) = mean_std(&costs);
    Ok(SeedSweep {
        runs,
        stats,
        reward_mean,
        reward_std,
        cost_n_mean,
        cost_n_std,
    })
}

/// Mean reward and cost-N over the last `window` records.
pub fn window_means(records: &[IterationRecord], window: usize) -> Option<(f64, f64)> {
    if records.is_empty() {
        return None;
    }
    let tail = &records[records.len().saturating_sub(window)..];
    let k = tail.len() as f64;
    let reward = tail.iter().map(|r| r.reward_return).sum::<f64>() / k;
    let cost = tail.iter().map(|r| r.cost_n).sum::<f64>() / k;
    Some((reward, cost))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::{make_grid_env, Outcome, TabularCmdp, Variant};
    use crate::grad::Strategy;

    fn quick_config(strategy: Strategy) -> TrainConfig {
        TrainConfig {
            iterations: 12,
            episodes_per_iter: 6,
            shaping: ShapingConfig::default().with_strategy(strategy),
            ..TrainConfig::default()
        }
    }

    fn single_cost_env() -> CmdpSpec {
        // Two states, two actions; action 1 earns reward and cost.
        let outcomes = vec![
            vec![
                vec![Outcome {
                    next: 0,
                    prob: 1.0,
                    reward: 0.0,
                    costs: vec![0],
                }],
                vec![Outcome {
                    next: 1,
                    prob: 1.0,
                    reward: 1.0,
                    costs: vec![1],
                }],
            ],
            vec![
                vec![Outcome {
                    next: 0,
                    prob: 1.0,
                    reward: 0.0,
                    costs: vec![0],
                }],
                vec![Outcome {
                    next: 1,
                    prob: 1.0,
                    reward: 1.0,
                    costs: vec![1],
                }],
            ],
        ];
        CmdpSpec::Tabular(
            TabularCmdp::new(
                2,
                2,
                outcomes,
                vec![false, false],
                vec![(0, 1.0)],
                vec![5.0],
                0.99,
                16,
            )
            .unwrap(),
        )
    }

    #[test]
    fn cost_n_formula() {
        assert_eq!(cost_n(&[0.5, 2.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(cost_n(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cost_n(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(cost_n(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn same_seed_reproduces_records() {
        let spec = make_grid_env(Variant::V2, 6).unwrap();
        let config = quick_config(Strategy::GradS);
        let a = train(&spec, &config).unwrap();
        let b = train(&spec, &config).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn single_constraint_strategies_coincide() {
        let spec = single_cost_env();
        let mut runs = Vec::new();
        for strategy in Strategy::ALL {
            let mut config = quick_config(strategy);
            config.seed = 13;
            runs.push(train(&spec, &config).unwrap());
        }
        let reference = &runs[0];
        for run in &runs[1..] {
            assert_eq!(run.final_policy.theta(), reference.final_policy.theta());
            for (a, b) in run.records.iter().zip(&reference.records) {
                assert_eq!(a.reward_return, b.reward_return);
                assert_eq!(a.lambdas, b.lambdas);
            }
        }
    }

    #[test]
    fn zero_lambda_start_means_pure_reward_ascent() {
        let spec = make_grid_env(Variant::V2, 6).unwrap();
        let config = quick_config(Strategy::Vanilla);
        let run = train(&spec, &config).unwrap();
        let first = &run.records[0];
        // With lambda = 0 the shaped gradient is zero, so the whole step is
        // the reward term.
        assert_eq!(first.skipped_zero_norm, 0);
        assert_eq!(first.candidate_set_size, spec.num_costs());
    }

    #[test]
    fn lambdas_stay_nonnegative() {
        let spec = make_grid_env(Variant::V3, 6).unwrap();
        let config = quick_config(Strategy::GradS);
        let run = train(&spec, &config).unwrap();
        for rec in &run.records {
            assert!(rec.lambdas.iter().all(|l| *l >= 0.0));
        }
    }

    #[test]
    fn records_satisfy_counting_identity_and_cost_n() {
        let spec = make_grid_env(Variant::V3, 6).unwrap();
        for strategy in Strategy::ALL {
            let run = train(&spec, &quick_config(strategy)).unwrap();
            for rec in &run.records {
                assert_eq!(
                    rec.candidate_set_size
                        + rec.removed_redundant
                        + rec.removed_conflicting
                        + rec.skipped_zero_norm,
                    spec.num_costs()
                );
                let expected = cost_n(&rec.cost_returns, spec.thresholds()).unwrap();
                assert_eq!(rec.cost_n, expected);
            }
        }
    }

    #[test]
    fn gamma_mismatch_is_a_config_error() {
        let spec = make_grid_env(Variant::V2, 6).unwrap();
        let mut config = quick_config(Strategy::Vanilla);
        config.gamma = 0.9;
        assert!(matches!(train(&spec, &config), Err(Error::Config(_))));
    }

    #[test]
    fn run_seeds_single_seed_summary() {
        let spec = single_cost_env();
        let config = quick_config(Strategy::GradS);
        let sweep = run_seeds(&spec, &config, &[42], 5).unwrap();
        assert_eq!(sweep.stats.len(), 1);
        assert_eq!(sweep.reward_std, 0.0);
        assert_eq!(sweep.cost_n_std, 0.0);
        let (reward, cost) =
            window_means(&sweep.runs[0].1.as_ref().unwrap().records, 5).unwrap();
        assert_eq!(sweep.reward_mean, reward);
        assert_eq!(sweep.cost_n_mean, cost);
    }

    #[test]
    fn run_seeds_is_deterministic_across_calls() {
        let spec = make_grid_env(Variant::V2, 6).unwrap();
        let config = quick_config(Strategy::Crpo);
        let a = run_seeds(&spec, &config, &[1, 2, 3], 5).unwrap();
        let b = run_seeds(&spec, &config, &[1, 2, 3], 5).unwrap();
        assert_eq!(a.reward_mean, b.reward_mean);
        assert_eq!(a.cost_n_mean, b.cost_n_mean);
        for (x, y) in a.stats.iter().zip(&b.stats) {
            assert_eq!(x.window_reward, y.window_reward);
        }
    }
}
