//! Under-actuated pendulum swing-up and embedding-based value iteration.
//!
//! Angle `theta = 0` is upright. Dynamics are a semi-implicit Euler
//! discretization of
//!
//! ```text
//! theta'' = (g / l) sin(theta) + (u - b omega) / (m l^2)
//! ```
//!
//! with the torque limited to `[-5, 5]` Nm, which cannot hold the pendulum
//! horizontal (`m g l = 9.81`), so it has to be swung up.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{EmbeddingModel, TrainingSet};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub friction: f64,
    pub dt: f64,
    pub torque_min: f64,
    pub torque_max: f64,
    pub omega_max: f64,
    pub discount: f64,
    /// Discrete action set used by value iteration, ascending.
    pub torque_grid: Vec<f64>,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            friction: 0.05,
            dt: 0.1,
            torque_min: -5.0,
            torque_max: 5.0,
            omega_max: 7.0,
            discount: 0.95,
            torque_grid: linspace(-5.0, 5.0, 9),
        }
    }
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("length", self.length),
            ("gravity", self.gravity),
            ("dt", self.dt),
            ("omega_max", self.omega_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("pendulum {name} must be positive, got {v}")));
            }
        }
        if !(self.friction >= 0.0) {
            return Err(Error::input("pendulum friction must be nonnegative"));
        }
        if !(self.torque_min < self.torque_max) {
            return Err(Error::input("torque_min must be below torque_max"));
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return Err(Error::input(format!(
                "discount must lie in [0, 1), got {}",
                self.discount
            )));
        }
        if self.torque_grid.is_empty() {
            return Err(Error::input("torque grid is empty"));
        }
        if self.torque_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::input("torque grid must be strictly ascending"));
        }
        if self
            .torque_grid
            .iter()
            .any(|&u| u < self.torque_min || u > self.torque_max)
        {
            return Err(Error::input("torque grid leaves the torque bounds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    /// Radians in `[-pi, pi]`, zero upright.
    pub theta: f64,
    pub omega: f64,
}

impl State {
    pub fn new(theta: f64, omega: f64) -> Self {
        Self { theta, omega }
    }

    /// `(sin theta, cos theta, omega)`.
    pub fn features(&self) -> [f64; 3] {
        [self.theta.sin(), self.theta.cos(), self.omega]
    }

    /// Inverse of [`State::features`].
    pub fn from_features(f: &[f64]) -> Self {
        Self {
            theta: f[0].atan2(f[1]),
            omega: f[2],
        }
    }
}

/// Map an angle to `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    theta - two_pi * ((theta + PI) / two_pi).floor()
}

/// One semi-implicit Euler step; the torque is clamped to the bounds.
pub fn step(params: &PendulumParams, s: State, u: f64) -> State {
    let u = u.clamp(params.torque_min, params.torque_max);
    let ml2 = params.mass * params.length * params.length;
    let acc = params.gravity / params.length * s.theta.sin() + (u - params.friction * s.omega) / ml2;
    let omega = (s.omega + params.dt * acc).clamp(-params.omega_max, params.omega_max);
    State {
        theta: wrap_angle(s.theta + params.dt * omega),
        omega,
    }
}

/// `exp(-theta^2 - 0.2 omega^2)`.
pub fn reward(s: State) -> f64 {
    (-s.theta * s.theta - 0.2 * s.omega * s.omega).exp()
}

/// Transition sample: inputs `(sin, cos, omega, u)`, outputs `(sin', cos', omega')`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSet {
    pub inputs: Array2<f64>,
    pub outputs: Array2<f64>,
}

impl TransitionSet {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn to_training_set(&self) -> Result<TrainingSet> {
        TrainingSet::new(self.inputs.clone(), self.outputs.clone())
    }
}

/// `(sin theta, cos theta, omega, u)`.
pub fn input_features(s: State, u: f64) -> [f64; 4] {
    let [a, b, c] = s.features();
    [a, b, c, u]
}

fn random_state(params: &PendulumParams, rng: &mut ChaCha8Rng) -> State {
    State {
        theta: rng.gen_range(-PI..=PI),
        omega: rng.gen_range(-params.omega_max..=params.omega_max),
    }
}

/// `n` transitions from states and torques drawn uniformly over their ranges.
pub fn collect_dataset(params: &PendulumParams, n: usize, seed: u64) -> Result<TransitionSet> {
    params.validate()?;
    if n == 0 {
        return Err(Error::input("dataset size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Array2::zeros((n, 4));
    let mut outputs = Array2::zeros((n, 3));
    for i in 0..n {
        let s = random_state(params, &mut rng);
        let u = rng.gen_range(params.torque_min..=params.torque_max);
        let next = step(params, s, u);
        inputs.row_mut(i).assign(&Array1::from(input_features(s, u).to_vec()));
        outputs.row_mut(i).assign(&Array1::from(next.features().to_vec()));
    }
    Ok(TransitionSet { inputs, outputs })
}

/// Anything that picks a torque for a state.
pub trait Controller: Sync {
    fn torque(&self, s: &State, rng: &mut ChaCha8Rng) -> f64;
}

/// Uniformly random torque in the bounds.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub torque_min: f64,
    pub torque_max: f64,
}

impl RandomPolicy {
    pub fn new(params: &PendulumParams) -> Self {
        Self {
            torque_min: params.torque_min,
            torque_max: params.torque_max,
        }
    }
}

impl Controller for RandomPolicy {
    fn torque(&self, _s: &State, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(self.torque_min..=self.torque_max)
    }
}

/// Greedy policy from embedding-backed value iteration.
///
/// Values live on the training next-states `y_i`. The backup is
///
/// ```text
/// V_i <- r(y_i) + discount * max_u sum_j alpha_j(y_i, u) V_j
/// ```
///
/// where `alpha(s, u)` are the embedding weights at input `(s, u)`. Actions
/// are chosen by `argmax_u sum_j alpha_j(s, u) V_j`, ties to the smallest torque.
#[derive(Debug, Clone)]
pub struct Policy {
    model: EmbeddingModel,
    torque_grid: Vec<f64>,
    values: Array1<f64>,
    greedy: Vec<f64>,
    sweep_deltas: Vec<f64>,
}

impl Policy {
    /// Value estimate per support state.
    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    /// Greedy torque per support state.
    pub fn greedy_torques(&self) -> &[f64] {
        &self.greedy
    }

    /// `max_i |V_new - V_old|` for each sweep.
    pub fn sweep_deltas(&self) -> &[f64] {
        &self.sweep_deltas
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    /// Expected next-state value for each torque in the grid.
    pub fn expected_values(&self, s: &State) -> Result<Vec<f64>> {
        let queries = Array2::from_shape_fn((self.torque_grid.len(), 4), |(a, c)| {
            input_features(*s, self.torque_grid[a])[c]
        });
        let alpha = self.model.alpha_batch(queries.view())?;
        Ok(alpha.dot(&self.values).to_vec())
    }

    pub fn action(&self, s: &State) -> Result<f64> {
        let q = self.expected_values(s)?;
        Ok(self.torque_grid[argmax_first(&q)])
    }
}

impl Controller for Policy {
    fn torque(&self, s: &State, _rng: &mut ChaCha8Rng) -> f64 {
        self.action(s).expect("policy inputs have the model's dimension")
    }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Run `sweeps` value-iteration backups through the embedding fitted on transition data.
pub fn policy_iteration(model: &EmbeddingModel, params: &PendulumParams, sweeps: usize) -> Result<Policy> {
    params.validate()?;
    if sweeps == 0 {
        return Err(Error::input("need at least one sweep"));
    }
    if model.kspec().dim() != 4 || model.lspec().dim() != 3 {
        return Err(Error::input("pendulum embedding needs 4-d inputs and 3-d outputs"));
    }
    let support = model.train().ys().to_owned();
    let n = support.nrows();
    let rewards = Array1::from_iter(
        support
            .outer_iter()
            .map(|y| reward(State::from_features(y.as_slice().expect("row-major")))),
    );

    // one n x n transition-weight matrix per action
    let grid = params.torque_grid.clone();
    let backups: Vec<Array2<f64>> = par::try_map(&grid, |&u| {
        let mut q = Array2::zeros((n, 4));
        q.slice_mut(ndarray::s![.., ..3]).assign(&support);
        q.column_mut(3).fill(u);
        model.alpha_batch(q.view())
    })?;

    let bound = 1.0 / (1.0 - params.discount) + 1.0;
    let mut values = Array1::<f64>::zeros(n);
    let mut deltas = Vec::with_capacity(sweeps);
    for sweep in 1..=sweeps {
        let expected: Vec<Array1<f64>> = backups.iter().map(|b| b.dot(&values)).collect();
        let next = Array1::from_shape_fn(n, |i| {
            let best = expected.iter().map(|e| e[i]).fold(f64::NEG_INFINITY, f64::max);
            rewards[i] + params.discount * best
        });
        let magnitude = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= bound) {
            return Err(Error::Instability {
                sweep,
                magnitude,
                bound,
            });
        }
        deltas.push((&next - &values).iter().fold(0.0f64, |m, v| m.max(v.abs())));
        values = next;
    }

    let expected: Vec<Array1<f64>> = backups.iter().map(|b| b.dot(&values)).collect();
    let greedy = (0..n)
        .map(|i| {
            let q: Vec<f64> = expected.iter().map(|e| e[i]).collect();
            grid[argmax_first(&q)]
        })
        .collect();

    Ok(Policy {
        model: model.clone(),
        torque_grid: grid,
        values,
        greedy,
        sweep_deltas: deltas,
    })
}

/// Mean discounted return `sum_{t=0}^{horizon} discount^t r(s_t)` over seeded random starts.
///
/// Episode `e` draws its start state (and any controller randomness) from a
/// ChaCha stream keyed by `(seed, e)`, so different controllers face the same starts.
pub fn evaluate_policy<C: Controller>(
    controller: &C,
    params: &PendulumParams,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    params.validate()?;
    if episodes == 0 {
        return Err(Error::input("need at least one episode"));
    }
    let returns = par::map_range(episodes, |e| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(e as u64);
        let mut s = random_state(params, &mut rng);
        let mut total = reward(s);
        let mut weight = 1.0;
        for _ in 0..horizon {
            let u = controller.torque(&s, &mut rng);
            s = step(params, s, u);
            weight *= params.discount;
            total += weight * reward(s);
        }
        total
    });
    Ok(returns.iter().sum::<f64>() / episodes as f64)
}
