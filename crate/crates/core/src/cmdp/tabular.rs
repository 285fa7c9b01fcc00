//! Finite-state CMDPs with explicit transition, reward, and cost tables.

use rand::Rng;

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;

/// One possible transition from a (state, action) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
    /// Binary per-step costs, one entry per constraint.
    pub costs: Vec<u8>,
}

/// Tabular CMDP: everything needed for rollouts, exact DP, and policy search.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCmdp {
    num_states: usize,
    num_actions: usize,
    /// outcomes[s][a] lists the support of P(. | s, a).
    outcomes: Vec<Vec<Vec<Outcome>>>,
    terminal: Vec<bool>,
    initial: Vec<(usize, f64)>,
    thresholds: Vec<f64>,
    gamma: f64,
    horizon: usize,
}

impl TabularCmdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        outcomes: Vec<Vec<Vec<Outcome>>>,
        terminal: Vec<bool>,
        initial: Vec<(usize, f64)>,
        thresholds: Vec<f64>,
        gamma: f64,
        horizon: usize,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument(
                "state and action spaces must be nonempty".into(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be in (0,1), got {gamma}"
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if outcomes.len() != num_states || terminal.len() != num_states {
            return Err(Error::dim(outcomes.len(), num_states, "outcome table"));
        }
        if thresholds.iter().any(|t| *t < 0.0) {
            return Err(Error::InvalidArgument(
                "thresholds must be nonnegative".into(),
            ));
        }
        let n = thresholds.len();
        for (s, per_state) in outcomes.iter().enumerate() {
            if per_state.len() != num_actions {
                return Err(Error::dim(per_state.len(), num_actions, "action table"));
            }
            if terminal[s] {
                continue;
            }
            for per_action in per_state {
                let total: f64 = per_action.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "transition probabilities from state {s} sum to {total}, not 1"
                    )));
                }
                for o in per_action {
                    if o.next >= num_states {
                        return Err(Error::InvalidArgument(format!(
                            "next state {} out of range", o.next
                        )));
                    }
                    if o.prob < 0.0 {
                        return Err(Error::InvalidArgument("negative probability".into()));
                    }
                    if o.costs.len() != n {
                        return Err(Error::dim(o.costs.len(), n, "cost vector"));
                    }
                    if o.costs.iter().any(|c| *c > 1) {
                        return Err(Error::InvalidArgument(
                            "costs must be binary".into(),
                        ));
                    }
                }
            }
        }
        let init_total: f64 = initial.iter().map(|(_, p)| *p).sum();
        if (init_total - 1.0).abs() > PROB_TOL || initial.iter().any(|(s, _)| *s >= num_states) {
            return Err(Error::InvalidArgument(
                "initial distribution must be a valid distribution over states".into(),
            ));
        }
        Ok(Self {
            num_states,
            num_actions,
            outcomes,
            terminal,
            initial,
            thresholds,
            gamma,
            horizon,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_costs(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.outcomes[s][a]
    }

    pub fn initial_distribution(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(self.initial.iter().map(|(s, p)| (*s, *p)), rng)
    }

    /// Draws a transition. Terminal states self-loop with zero reward/cost.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<(usize, f64, Vec<u8>, bool)> {
        if state >= self.num_states {
            return Err(Error::Domain(format!("state {state} out of range")));
        }
        if action >= self.num_actions {
            return Err(Error::Domain(format!("action {action} out of range")));
        }
        if self.terminal[state] {
            return Ok((state, 0.0, vec![0; self.num_costs()], true));
        }
        let options = &self.outcomes[state][action];
        let idx = sample_categorical(
            options.iter().enumerate().map(|(i, o)| (i, o.prob)),
            rng,
        );
        let o = &options[idx];
        let done = self.terminal[o.next];
        Ok((o.next, o.reward, o.costs.clone(), done))
    }

    /// Replaces the cost tables and thresholds, keeping dynamics identical.
    /// `map` sends each original cost index to its new cost row.
    pub(crate) fn with_replicated_costs(
        &self,
        new_thresholds: Vec<f64>,
        map: impl Fn(&[u8]) -> Vec<u8>,
    ) -> Result<TabularCmdp> {
        let outcomes = self
            .outcomes
            .iter()
            .map(|per_state| {
                per_state
                    .iter()
                    .map(|per_action| {
                        per_action
                            .iter()
                            .map(|o| Outcome {
                                next: o.next,
                                prob: o.prob,
                                reward: o.reward,
                                costs: map(&o.costs),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        TabularCmdp::new(
            self.num_states,
            self.num_actions,
            outcomes,
            self.terminal.clone(),
            self.initial.clone(),
            new_thresholds,
            self.gamma,
            self.horizon,
        )
    }
}

fn sample_categorical<R: Rng + ?Sized>(
    options: impl Iterator<Item = (usize, f64)>,
    rng: &mut R,
) -> usize {
    let options: Vec<(usize, f64)> = options.collect();
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (value, p) in &options {
        acc += p;
        if u < acc {
            return *value;
        }
    }
    options.last().expect("nonempty distribution").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_chain() -> TabularCmdp {
        // s0 --a0--> s1 (reward 1, cost 1); s1 terminal.
        let outcomes = vec![
            vec![vec![Outcome {
                next: 1,
                prob: 1.0,
                reward: 1.0,
                costs: vec![1],
            }]],
            vec![vec![]],
        ];
        TabularCmdp::new(
            2,
            1,
            outcomes,
            vec![false, true],
            vec![(0, 1.0)],
            vec![1.0],
            0.9,
            10,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_step_is_a_lookup() {
        let env = two_state_chain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, reward, costs, done) = env.sample_step(0, 0, &mut rng).unwrap();
        assert_eq!(next, 1);
        assert_eq!(reward, 1.0);
        assert_eq!(costs, vec![1]);
        assert!(done);
    }

    #[test]
    fn terminal_state_self_loops_with_zero_cost() {
        let env = two_state_chain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, reward, costs, done) = env.sample_step(1, 0, &mut rng).unwrap();
        assert_eq!(next, 1);
        assert_eq!(reward, 0.0);
        assert_eq!(costs, vec![0]);
        assert!(done);
    }

    #[test]
    fn construction_rejects_bad_row_sum() {
        let outcomes = vec![vec![vec![Outcome {
            next: 0,
            prob: 0.5,
            reward: 0.0,
            costs: vec![],
        }]]];
        let err = TabularCmdp::new(
            1,
            1,
            outcomes,
            vec![false],
            vec![(0, 1.0)],
            vec![],
            0.9,
            10,
        );
        assert!(err.is_err());
    }

    #[test]
    fn construction_rejects_non_binary_costs() {
        let outcomes = vec![vec![vec![Outcome {
            next: 0,
            prob: 1.0,
            reward: 0.0,
            costs: vec![2],
        }]]];
        assert!(TabularCmdp::new(
            1,
            1,
            outcomes,
            vec![false],
            vec![(0, 1.0)],
            vec![1.0],
            0.9,
            10,
        )
        .is_err());
    }

    #[test]
    fn invalid_state_or_action_errors() {
        let env = two_state_chain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(env.sample_step(5, 0, &mut rng).is_err());
        assert!(env.sample_step(0, 3, &mut rng).is_err());
    }
}
