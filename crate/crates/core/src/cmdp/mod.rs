//! Constrained MDP task families.
//!
//! Two shipped families: a tabular corridor (`grid-v2`/`grid-v3`) that is
//! small enough for exact DP and exhaustive policy search, and a continuous
//! point-mass circle task (`point-v2`/`point-v3`). Custom tabular CMDPs can
//! be built directly through [`TabularCmdp`] for oracles and tests.

pub mod grid;
pub mod point;
pub mod tabular;

use rand::Rng;

pub use grid::{GridCmdp, GridCost, GridParams};
pub use point::{PointCmdp, PointCost, PointParams, PointState, POINT_FEATURES};
pub use tabular::{Outcome, TabularCmdp};

use crate::error::{Error, Result};

/// Task variant: first two cost types, or all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    V2,
    V3,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "v2" => Ok(Variant::V2),
            "v3" => Ok(Variant::V3),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected v2|v3)"
            ))),
        }
    }
}

/// Environment state, tabular index or continuous point.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Index(usize),
    Point(PointState),
}

/// What a policy sees: a state index for tabular tasks, a feature vector
/// for continuous ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Index(usize),
    Features(Vec<f64>),
}

/// One environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub reward: f64,
    /// Binary costs as 0.0/1.0, one per constraint.
    pub costs: Vec<f64>,
    pub done: bool,
}

/// A constrained task instance of any shipped family.
#[derive(Debug, Clone, PartialEq)]
pub enum CmdpSpec {
    Grid(GridCmdp),
    Point(PointCmdp),
    Tabular(TabularCmdp),
}

impl CmdpSpec {
    pub fn num_costs(&self) -> usize {
        match self {
            CmdpSpec::Grid(g) => g.table().num_costs(),
            CmdpSpec::Point(p) => p.num_costs(),
            CmdpSpec::Tabular(t) => t.num_costs(),
        }
    }

    pub fn thresholds(&self) -> &[f64] {
        match self {
            CmdpSpec::Grid(g) => g.table().thresholds(),
            CmdpSpec::Point(p) => p.thresholds(),
            CmdpSpec::Tabular(t) => t.thresholds(),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            CmdpSpec::Grid(g) => g.table().gamma(),
            CmdpSpec::Point(p) => p.gamma(),
            CmdpSpec::Tabular(t) => t.gamma(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            CmdpSpec::Grid(g) => g.table().horizon(),
            CmdpSpec::Point(p) => p.horizon(),
            CmdpSpec::Tabular(t) => t.horizon(),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            CmdpSpec::Grid(g) => g.table().num_actions(),
            CmdpSpec::Point(p) => p.num_actions(),
            CmdpSpec::Tabular(t) => t.num_actions(),
        }
    }

    /// The tabular model, when this family has one.
    pub fn as_tabular(&self) -> Option<&TabularCmdp> {
        match self {
            CmdpSpec::Grid(g) => Some(g.table()),
            CmdpSpec::Tabular(t) => Some(t),
            CmdpSpec::Point(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CmdpSpec::Grid(g) => g.variant_name(),
            CmdpSpec::Point(p) => p.variant_name(),
            CmdpSpec::Tabular(_) => "tabular",
        }
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            CmdpSpec::Grid(g) => State::Index(g.table().sample_initial(rng)),
            CmdpSpec::Tabular(t) => State::Index(t.sample_initial(rng)),
            CmdpSpec::Point(p) => State::Point(p.initial_state()),
        }
    }

    pub fn observe(&self, state: &State) -> Result<Observation> {
        match (self, state) {
            (CmdpSpec::Grid(_), State::Index(s)) | (CmdpSpec::Tabular(_), State::Index(s)) => {
                Ok(Observation::Index(*s))
            }
            (CmdpSpec::Point(p), State::Point(ps)) => Ok(Observation::Features(p.features(ps))),
            _ => Err(Error::Domain("state kind does not match task family".into())),
        }
    }
}

/// Draws one transition: next state from the transition function, reward
/// and costs on (s, a, s'), done at absorbing states (the horizon cutoff is
/// the rollout's job).
pub fn step<R: Rng + ?Sized>(
    spec: &CmdpSpec,
    state: &State,
    action: usize,
    rng: &mut R,
) -> Result<StepResult> {
    match (spec, state) {
        (CmdpSpec::Grid(g), State::Index(s)) => tabular_step(g.table(), *s, action, rng),
        (CmdpSpec::Tabular(t), State::Index(s)) => tabular_step(t, *s, action, rng),
        (CmdpSpec::Point(p), State::Point(ps)) => {
            let (next, reward, costs) = p.step(ps, action, rng)?;
            Ok(StepResult {
                next_state: State::Point(next),
                reward,
                costs: costs.into_iter().map(f64::from).collect(),
                done: false,
            })
        }
        _ => Err(Error::Domain("state kind does not match task family".into())),
    }
}

fn tabular_step<R: Rng + ?Sized>(
    table: &TabularCmdp,
    state: usize,
    action: usize,
    rng: &mut R,
) -> Result<StepResult> {
    let (next, reward, costs, done) = table.sample_step(state, action, rng)?;
    Ok(StepResult {
        next_state: State::Index(next),
        reward,
        costs: costs.into_iter().map(f64::from).collect(),
        done,
    })
}

/// Builds a corridor task.
pub fn make_grid_env(variant: Variant, size: usize) -> Result<CmdpSpec> {
    let env = match variant {
        Variant::V2 => GridCmdp::new(GridParams::v2(size), "grid-v2")?,
        Variant::V3 => GridCmdp::new(GridParams::v3(size), "grid-v3")?,
    };
    Ok(CmdpSpec::Grid(env))
}

/// Builds a point-mass circle task.
pub fn make_point_env(variant: Variant) -> Result<CmdpSpec> {
    let env = match variant {
        Variant::V2 => PointCmdp::new(PointParams::v2(), "point-v2")?,
        Variant::V3 => PointCmdp::new(PointParams::v3(), "point-v3")?,
    };
    Ok(CmdpSpec::Point(env))
}

/// Duplicates every cost `copies` times, perturbing each copy's defining
/// parameter by a relative factor drawn uniformly from `[1-jitter, 1+jitter]`.
/// Thresholds are copied unchanged, so `N' = N * copies`.
pub fn replicate_constraints<R: Rng + ?Sized>(
    spec: &CmdpSpec,
    copies: usize,
    jitter: f64,
    rng: &mut R,
) -> Result<CmdpSpec> {
    if copies == 0 {
        return Err(Error::InvalidArgument("copies must be at least 1".into()));
    }
    if jitter < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "jitter must be nonnegative, got {jitter}"
        )));
    }
    let total = spec.num_costs() * copies;
    let factors: Vec<f64> = (0..total)
        .map(|_| {
            if jitter == 0.0 {
                1.0
            } else {
                1.0 + rng.gen_range(-jitter..=jitter)
            }
        })
        .collect();
    match spec {
        CmdpSpec::Grid(g) => Ok(CmdpSpec::Grid(g.replicate(copies, &factors)?)),
        CmdpSpec::Point(p) => Ok(CmdpSpec::Point(p.replicate(copies, &factors)?)),
        CmdpSpec::Tabular(t) => {
            if jitter > 0.0 {
                return Err(Error::Unsupported(
                    "raw tabular costs have no jitterable parameter; use jitter = 0".into(),
                ));
            }
            let n = t.num_costs();
            let thresholds = t
                .thresholds()
                .iter()
                .flat_map(|eps| std::iter::repeat(*eps).take(copies))
                .collect();
            let table = t.with_replicated_costs(thresholds, |costs| {
                let mut out = Vec::with_capacity(n * copies);
                for c in costs {
                    for _ in 0..copies {
                        out.push(*c);
                    }
                }
                out
            })?;
            Ok(CmdpSpec::Tabular(table))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_variants_expose_expected_cost_counts() {
        assert_eq!(make_grid_env(Variant::V2, 6).unwrap().num_costs(), 2);
        assert_eq!(make_grid_env(Variant::V3, 6).unwrap().num_costs(), 3);
        assert_eq!(make_point_env(Variant::V2).unwrap().num_costs(), 2);
    }

    #[test]
    fn replicate_identity() {
        let spec = make_grid_env(Variant::V3, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let same = replicate_constraints(&spec, 1, 0.0, &mut rng).unwrap();
        assert_eq!(same, spec);
    }

    #[test]
    fn replicate_multiplies_constraint_count() {
        let spec = make_grid_env(Variant::V3, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let big = replicate_constraints(&spec, 3, 0.05, &mut rng).unwrap();
        assert_eq!(big.num_costs(), 9);
        assert_eq!(big.thresholds().len(), 9);
    }

    #[test]
    fn replicate_rejects_negative_jitter() {
        let spec = make_grid_env(Variant::V2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(replicate_constraints(&spec, 2, -0.1, &mut rng).is_err());
    }

    #[test]
    fn replicated_costs_match_originals_step_for_step() {
        let spec = make_grid_env(Variant::V2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rep = replicate_constraints(&spec, 2, 0.0, &mut rng).unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        let mut sa = spec.initial_state(&mut rng_a);
        let mut sb = rep.initial_state(&mut rng_b);
        for t in 0..30 {
            let action = t % spec.num_actions();
            let ra = step(&spec, &sa, action, &mut rng_a).unwrap();
            let rb = step(&rep, &sb, action, &mut rng_b).unwrap();
            assert_eq!(ra.reward, rb.reward);
            assert_eq!(rb.costs[0], ra.costs[0]);
            assert_eq!(rb.costs[1], ra.costs[0]);
            assert_eq!(rb.costs[2], ra.costs[1]);
            assert_eq!(rb.costs[3], ra.costs[1]);
            sa = ra.next_state;
            sb = rb.next_state;
        }
    }

    #[test]
    fn seeded_trajectories_are_reproducible() {
        let spec = make_point_env(Variant::V2).unwrap();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = spec.initial_state(&mut rng);
            let mut tape = Vec::new();
            for t in 0..50 {
                let r = step(&spec, &s, t % 9, &mut rng).unwrap();
                tape.push((r.reward, r.costs.clone()));
                s = r.next_state;
            }
            tape
        };
        assert_eq!(run(3), run(3));
    }
}
