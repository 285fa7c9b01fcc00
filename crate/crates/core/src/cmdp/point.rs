//! Continuous point-mass circle task with a discrete acceleration menu.
//!
//! The agent is rewarded for tangential progress along a target circle.
//! Vertical walls at `|x| = wall` cut through the circle, so faithfully
//! tracking it eventually crosses the boundary; speed limits squeeze from
//! the other side.

use rand::Rng;

use crate::error::{Error, Result};

/// Position and velocity of the point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

/// One binary cost rule over the continuous state.
#[derive(Debug, Clone, PartialEq)]
pub enum PointCost {
    /// |x| beyond the wall after the step.
    Boundary { wall: f64 },
    /// Speed above the limit after the step.
    HighVelocity { limit: f64 },
    /// Speed below the limit after the step.
    LowVelocity { limit: f64 },
}

impl PointCost {
    fn evaluate(&self, next: &PointState) -> u8 {
        let speed = (next.vel[0].powi(2) + next.vel[1].powi(2)).sqrt();
        match self {
            PointCost::Boundary { wall } => u8::from(next.pos[0].abs() > *wall),
            PointCost::HighVelocity { limit } => u8::from(speed > *limit),
            PointCost::LowVelocity { limit } => u8::from(speed < *limit),
        }
    }

    pub(crate) fn jittered(&self, factor: f64) -> PointCost {
        match self {
            PointCost::Boundary { wall } => PointCost::Boundary {
                wall: wall * factor,
            },
            PointCost::HighVelocity { limit } => PointCost::HighVelocity {
                limit: limit * factor,
            },
            PointCost::LowVelocity { limit } => PointCost::LowVelocity {
                limit: limit * factor,
            },
        }
    }
}

/// Parameters of one circle task instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParams {
    pub radius: f64,
    pub accel: f64,
    pub dt: f64,
    pub drag: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub threshold_fracs: Vec<f64>,
    pub costs: Vec<PointCost>,
}

impl PointParams {
    pub fn v2() -> Self {
        Self {
            radius: 1.0,
            accel: 0.5,
            dt: 0.2,
            drag: 0.1,
            gamma: 0.99,
            horizon: 200,
            threshold_fracs: vec![0.25, 0.50],
            costs: vec![
                PointCost::Boundary { wall: 0.7 },
                PointCost::HighVelocity { limit: 0.6 },
            ],
        }
    }

    pub fn v3() -> Self {
        let mut p = Self::v2();
        p.threshold_fracs = vec![0.25, 0.50, 0.50];
        p.costs.push(PointCost::LowVelocity { limit: 0.1 });
        p
    }
}

/// Compiled circle task: nine acceleration choices, fixed start at the
/// rightmost circle point with zero velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCmdp {
    params: PointParams,
    variant_name: &'static str,
    accels: Vec<[f64; 2]>,
    thresholds: Vec<f64>,
}

pub const POINT_FEATURES: usize = 8;

impl PointCmdp {
    pub fn new(params: PointParams, variant_name: &'static str) -> Result<Self> {
        if params.threshold_fracs.len() != params.costs.len() {
            return Err(Error::dim(
                params.threshold_fracs.len(),
                params.costs.len(),
                "threshold fractions",
            ));
        }
        if !(params.gamma > 0.0 && params.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be in (0,1), got {}",
                params.gamma
            )));
        }
        let budget =
            (1.0 - params.gamma.powi(params.horizon as i32)) / (1.0 - params.gamma);
        let thresholds = params.threshold_fracs.iter().map(|f| f * budget).collect();
        let a = params.accel;
        let mut accels = Vec::with_capacity(9);
        for ax in [-a, 0.0, a] {
            for ay in [-a, 0.0, a] {
                accels.push([ax, ay]);
            }
        }
        Ok(Self {
            params,
            variant_name,
            accels,
            thresholds,
        })
    }

    pub fn params(&self) -> &PointParams {
        &self.params
    }

    pub fn variant_name(&self) -> &'static str {
        self.variant_name
    }

    pub fn num_actions(&self) -> usize {
        self.accels.len()
    }

    pub fn num_costs(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    pub fn initial_state(&self) -> PointState {
        PointState {
            pos: [self.params.radius, 0.0],
            vel: [0.0, 0.0],
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &PointState,
        action: usize,
        _rng: &mut R,
    ) -> Result<(PointState, f64, Vec<u8>)> {
        if action >= self.accels.len() {
            return Err(Error::Domain(format!("action {action} out of range")));
        }
        let p = &self.params;
        let acc = self.accels[action];
        let vel = [
            (state.vel[0] + acc[0] * p.dt) * (1.0 - p.drag),
            (state.vel[1] + acc[1] * p.dt) * (1.0 - p.drag),
        ];
        let pos = [state.pos[0] + vel[0] * p.dt, state.pos[1] + vel[1] * p.dt];
        let next = PointState { pos, vel };
        // Tangential progress, discounted by distance from the circle.
        let dist = (pos[0].powi(2) + pos[1].powi(2)).sqrt() - p.radius;
        let reward = (pos[0] * vel[1] - pos[1] * vel[0]) / (p.radius * (1.0 + dist.abs()));
        let costs = p.costs.iter().map(|c| c.evaluate(&next)).collect();
        Ok((next, reward, costs))
    }

    /// Feature map for linear-softmax policies.
    pub fn features(&self, state: &PointState) -> Vec<f64> {
        let p = &self.params;
        let speed = (state.vel[0].powi(2) + state.vel[1].powi(2)).sqrt();
        let norm = (state.pos[0].powi(2) + state.pos[1].powi(2)).sqrt();
        vec![
            1.0,
            state.pos[0] / p.radius,
            state.pos[1] / p.radius,
            state.vel[0],
            state.vel[1],
            speed,
            (norm - p.radius) / p.radius,
            state.pos[0].abs() / p.radius,
        ]
    }

    pub fn replicate(&self, copies: usize, jitter_factors: &[f64]) -> Result<PointCmdp> {
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
        PointCmdp::new(params, self.variant_name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn v2_exposes_two_costs() {
        let env = PointCmdp::new(PointParams::v2(), "point-v2").unwrap();
        assert_eq!(env.num_costs(), 2);
    }

    #[test]
    fn resting_earns_nothing_and_is_slow() {
        let env = PointCmdp::new(PointParams::v3(), "point-v3").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = env.initial_state();
        for _ in 0..20 {
            // Action 4 is zero acceleration.
            let (next, reward, costs) = env.step(&state, 4, &mut rng).unwrap();
            assert_eq!(reward, 0.0);
            assert_eq!(costs[2], 1, "low-velocity cost fires at rest");
            state = next;
        }
    }

    #[test]
    fn costs_stay_binary_under_random_play() {
        let env = PointCmdp::new(PointParams::v3(), "point-v3").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = env.initial_state();
        for t in 0..200 {
            let action = t % 9;
            let (next, _, costs) = env.step(&state, action, &mut rng).unwrap();
            assert!(costs.iter().all(|c| *c <= 1));
            state = next;
        }
    }

    #[test]
    fn high_speed_fires_high_velocity_cost() {
        let env = PointCmdp::new(PointParams::v2(), "point-v2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = PointState {
            pos: [0.0, 0.0],
            vel: [2.0, 0.0],
        };
        let (_, _, costs) = env.step(&state, 8, &mut rng).unwrap();
        assert_eq!(costs[1], 1);
    }
}
