//! Corridor grid navigation with boundary and velocity costs.
//!
//! The agent walks a 1 x size strip of cells. Actions pair a direction with
//! a speed (slow moves one cell, fast moves two, clipped at the walls). The
//! rightmost cell is the goal: entering it pays `goal_reward`, but the goal
//! sits inside the boundary band, so every visit also incurs the boundary
//! cost. The cell next to the goal is mud with a negative reward, which
//! makes the fast two-cell hop from further left the efficient approach —
//! at the price of the high-velocity cost. The unconstrained optimum
//! therefore oscillates fast in and out of the goal, violating both the
//! boundary and high-velocity budgets; constrained training has to trade
//! visit frequency against both.
//!
//! Cost menu (all binary, evaluated per step):
//!   1. boundary — next cell within `band` of either wall;
//!   2. high velocity — action speed above `high_limit`;
//!   3. low velocity — action speed below `low_limit` (v3 only).
//!
//! With the default limits every action triggers exactly one of the two
//! velocity costs, so the v3 pair is conflicting by construction.

use crate::cmdp::tabular::{Outcome, TabularCmdp};
use crate::error::{Error, Result};

pub const GRID_ACTIONS: usize = 4;

/// Action speeds: slow covers one cell, fast covers two.
fn action_delta(action: usize) -> isize {
    match action {
        0 => -1,
        1 => 1,
        2 => -2,
        _ => 2,
    }
}

fn action_speed(action: usize) -> f64 {
    if action < 2 {
        1.0
    } else {
        2.0
    }
}

/// One binary cost rule, parameterized so replication can jitter it.
#[derive(Debug, Clone, PartialEq)]
pub enum GridCost {
    /// Next cell is within `band` cells of either wall.
    Boundary { band: f64 },
    /// Action speed strictly above `limit`.
    HighVelocity { limit: f64 },
    /// Action speed strictly below `limit`.
    LowVelocity { limit: f64 },
}

impl GridCost {
    fn evaluate(&self, size: usize, action: usize, next: usize) -> u8 {
        match self {
            GridCost::Boundary { band } => {
                let dist = next.min(size - 1 - next) as f64;
                u8::from(dist < *band)
            }
            GridCost::HighVelocity { limit } => u8::from(action_speed(action) > *limit),
            GridCost::LowVelocity { limit } => u8::from(action_speed(action) < *limit),
        }
    }

    pub(crate) fn jittered(&self, factor: f64) -> GridCost {
        match self {
            GridCost::Boundary { band } => GridCost::Boundary {
                band: band * factor,
            },
            GridCost::HighVelocity { limit } => GridCost::HighVelocity {
                limit: limit * factor,
            },
            GridCost::LowVelocity { limit } => GridCost::LowVelocity {
                limit: limit * factor,
            },
        }
    }
}

/// Geometry and budgets for one corridor task.
#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub size: usize,
    pub gamma: f64,
    pub horizon: usize,
    pub goal_reward: f64,
    pub mud_penalty: f64,
    /// Threshold for each cost, as a fraction of the maximal discounted
    /// per-step budget (1 - gamma^H) / (1 - gamma).
    pub threshold_fracs: Vec<f64>,
    pub costs: Vec<GridCost>,
}

impl GridParams {
    pub fn v2(size: usize) -> Self {
        Self {
            size,
            gamma: 0.99,
            horizon: 64,
            goal_reward: 1.0,
            mud_penalty: -0.5,
            threshold_fracs: vec![0.30, 0.55],
            costs: vec![
                GridCost::Boundary { band: 0.5 },
                GridCost::HighVelocity { limit: 1.5 },
            ],
        }
    }

    pub fn v3(size: usize) -> Self {
        Self {
            size,
            gamma: 0.99,
            horizon: 64,
            goal_reward: 1.0,
            mud_penalty: -0.5,
            threshold_fracs: vec![0.30, 0.58, 0.58],
            costs: vec![
                GridCost::Boundary { band: 0.5 },
                GridCost::HighVelocity { limit: 1.5 },
                GridCost::LowVelocity { limit: 1.5 },
            ],
        }
    }
}

/// Corridor task: parameter record plus the compiled tabular model.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCmdp {
    params: GridParams,
    variant_name: &'static str,
    table: TabularCmdp,
}

impl GridCmdp {
    pub fn new(params: GridParams, variant_name: &'static str) -> Result<Self> {
        if params.size < 4 {
            return Err(Error::InvalidArgument(format!(
                "corridor size must be at least 4, got {}",
                params.size
            )));
        }
        if params.threshold_fracs.len() != params.costs.len() {
            return Err(Error::dim(
                params.threshold_fracs.len(),
                params.costs.len(),
                "threshold fractions",
            ));
        }
        let table = compile(&params)?;
        Ok(Self {
            params,
            variant_name,
            table,
        })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn table(&self) -> &TabularCmdp {
        &self.table
    }

    pub fn variant_name(&self) -> &'static str {
        self.variant_name
    }

    /// Duplicates every cost `copies` times with multiplicatively jittered
    /// parameters, keeping dynamics and rewards untouched.
    pub fn replicate(&self, copies: usize, jitter_factors: &[f64]) -> Result<GridCmdp> {
        let mut params = self.params.clone();
        let mut costs = Vec::with_capacity(self.params.costs.len() * copies);
        let mut fracs = Vec::with_capacity(costs.capacity());
        let mut k = 0;
        for (cost, frac) in self.params.costs.iter().zip(&self.params.threshold_fracs) {
            for _ in 0..copies {
                costs.push(cost.jittered(jitter_factors[k]));
                fracs.push(*frac);
                k += 1;
            }
        }
        params.costs = costs;
        params.threshold_fracs = fracs;
        GridCmdp::new(params, self.variant_name)
    }
}

fn compile(params: &GridParams) -> Result<TabularCmdp> {
    let size = params.size;
    let goal = size - 1;
    let mud = size - 2;
    let start = 2.min(size - 3);
    let budget = (1.0 - params.gamma.powi(params.horizon as i32)) / (1.0 - params.gamma);
    let thresholds: Vec<f64> = params.threshold_fracs.iter().map(|f| f * budget).collect();

    let outcomes: Vec<Vec<Vec<Outcome>>> = (0..size)
        .map(|s| {
            (0..GRID_ACTIONS)
                .map(|a| {
                    let raw = s as isize + action_delta(a);
                    let next = raw.clamp(0, size as isize - 1) as usize;
                    let mut reward = 0.0;
                    if next == goal && s != goal {
                        reward += params.goal_reward;
                    }
                    if next == mud {
                        reward += params.mud_penalty;
                    }
                    let costs = params
                        .costs
                        .iter()
                        .map(|c| c.evaluate(size, a, next))
                        .collect();
                    vec![Outcome {
                        next,
                        prob: 1.0,
                        reward,
                        costs,
                    }]
                })
                .collect()
        })
        .collect();

    TabularCmdp::new(
        size,
        GRID_ACTIONS,
        outcomes,
        vec![false; size],
        vec![(start, 1.0)],
        thresholds,
        params.gamma,
        params.horizon,
    )
}
