// SPDX-License-Identifier: Apache-2.0

//! Q-learning: a tabular reference, the neural update step, and a
//! value-iteration oracle.
//!
//! The neural step follows the accelerator's state flow for one Q-value:
//!
//! 1. feed forward every action of the current state into the current-state buffer;
//! 2. pick an action (epsilon-greedy) and step the environment;
//! 3. feed forward every action of the next state into the next-state buffer;
//! 4. drain both buffers together, keeping `Q(s, a)` and `max_a' Q(s', a')`,
//!    and form `q_error = alpha * (r + gamma * max - Q(s, a))`;
//! 5. backpropagate `q_error` and update weights and biases.

use crate::datapath::{FifoError, QFifo};
use crate::environments::{EnvError, Environment};
use crate::neural::{apply_update, backprop, feedforward, Backend, NetError, Network, UpdateRule};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest `states * actions` the oracle will enumerate.
pub const MAX_ORACLE_ENTRIES: usize = 1 << 26;

/// Gap under which two oracle Q-values count as tied.
pub const OPTIMAL_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QError {
    #[error("empty Q-value vector")]
    Empty,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("index out of range: state {state}, action {action} for a {states}x{actions} table")]
    IndexOutOfRange {
        state: usize,
        action: usize,
        states: usize,
        actions: usize,
    },
    #[error("environment with {0} state-action pairs is too large to enumerate")]
    NotEnumerable(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Fifo(#[from] FifoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub gamma: f64,
    pub c_rate: f64,
    pub epsilon: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.5,
            gamma: 0.9,
            c_rate: 0.2,
            epsilon: 0.1,
        }
    }
}

impl Hyperparams {
    pub fn new(alpha: f64, gamma: f64, c_rate: f64, epsilon: f64) -> Result<Self, QError> {
        let h = Hyperparams {
            alpha,
            gamma,
            c_rate,
            epsilon,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), QError> {
        let bad = |m: String| Err(QError::InvalidHyperparams(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.c_rate > 0.0 && self.c_rate.is_finite()) {
            return bad(format!("c_rate must be positive, got {}", self.c_rate));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        EpsilonSchedule {
            start: eps,
            end: eps,
            decay_steps: 0,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let t = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * t
    }

    pub fn validate(&self) -> Result<(), QError> {
        for e in [self.start, self.end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(QError::InvalidHyperparams(format!(
                    "epsilon schedule bounds must lie in [0, 1], got {e}"
                )));
            }
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy_action<T: PartialOrd + Copy>(q: &[T]) -> Result<usize, QError> {
    let (first, rest) = q.split_first().ok_or(QError::Empty)?;
    let mut best = (0, *first);
    for (i, &v) in rest.iter().enumerate() {
        if v > best.1 {
            best = (i + 1, v);
        }
    }
    Ok(best.0)
}

/// With probability `epsilon` a uniformly random action, otherwise greedy.
/// Always draws exactly one uniform, plus one index when exploring.
pub fn epsilon_greedy<T: PartialOrd + Copy, R: Rng + ?Sized>(
    q: &[T],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, QError> {
    if q.is_empty() {
        return Err(QError::Empty);
    }
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..q.len()))
    } else {
        greedy_action(q)
    }
}

/// `max_a' Q(s', a')`.
pub fn opt_q<T: PartialOrd + Copy>(q_next: &[T]) -> Result<T, QError> {
    Ok(q_next[greedy_action(q_next)?])
}

/// `alpha * (r + gamma * opt_q_next - q_current)`, bootstrap dropped on terminal transitions.
pub fn q_error(r: f64, opt_q_next: f64, q_current: f64, alpha: f64, gamma: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * opt_q_next };
    alpha * (r + bootstrap - q_current)
}

/// [`q_error`] in a backend's arithmetic.
pub fn q_error_in<B: Backend>(
    backend: &mut B,
    r: f64,
    opt_q_next: B::Scalar,
    q_current: B::Scalar,
    hyper: &Hyperparams,
    terminal: bool,
) -> B::Scalar {
    let mut target = backend.from_f64(r);
    if !terminal {
        let g = backend.from_f64(hyper.gamma);
        let boot = backend.mul(g, opt_q_next);
        target = backend.add(target, boot);
    }
    let diff = backend.sub(target, q_current);
    let a = backend.from_f64(hyper.alpha);
    backend.mul(a, diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        QTable {
            states,
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    fn index(&self, state: usize, action: usize) -> Result<usize, QError> {
        if state >= self.states || action >= self.actions {
            return Err(QError::IndexOutOfRange {
                state,
                action,
                states: self.states,
                actions: self.actions,
            });
        }
        Ok(state * self.actions + action)
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, v: f64) -> Result<(), QError> {
        let k = self.index(state, action)?;
        self.values[k] = v;
        Ok(())
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Actions within `tol` of the row maximum.
    pub fn optimal_actions(&self, state: usize, tol: f64) -> Vec<usize> {
        let row = self.row(state);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.actions).filter(|&a| row[a] >= best - tol).collect()
    }
}

/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
pub fn tabular_update(table: &mut QTable, t: &Transition, hyper: &Hyperparams) -> Result<(), QError> {
    let k = table.index(t.state, t.action)?;
    table.index(t.next_state, 0)?;
    let next_best = opt_q(table.row(t.next_state))?;
    let err = q_error(t.reward, next_best, table.values[k], hyper.alpha, hyper.gamma, t.terminal);
    table.values[k] += err;
    Ok(())
}

/// One in-place pass of [`tabular_update`] over every non-terminal `(s, a)`.
pub fn tabular_sweep(table: &mut QTable, env: &Environment, hyper: &Hyperparams) -> Result<(), QError> {
    for s in env.non_terminal_states() {
        for a in 0..env.actions_per_state() {
            let st = env.step(s, a)?;
            let t = Transition {
                state: s,
                action: a,
                reward: st.reward,
                next_state: st.next_state,
                terminal: st.terminal,
            };
            tabular_update(table, &t, hyper)?;
        }
    }
    Ok(())
}

/// Synchronous Bellman sweeps until no entry moves by more than `tol`.
/// Terminal states keep `Q = 0`.
pub fn value_iteration(env: &Environment, gamma: f64, tol: f64) -> Result<QTable, QError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(QError::InvalidHyperparams(format!(
            "value iteration needs gamma in [0, 1), got {gamma}"
        )));
    }
    if !(tol > 0.0) {
        return Err(QError::InvalidHyperparams(format!("tol must be positive, got {tol}")));
    }
    let (n, a_count) = (env.num_states(), env.actions_per_state());
    let entries = n.saturating_mul(a_count);
    if entries > MAX_ORACLE_ENTRIES {
        return Err(QError::NotEnumerable(entries));
    }
    let mut model = Vec::with_capacity(entries);
    for s in 0..n {
        for a in 0..a_count {
            model.push(env.step(s, a)?);
        }
    }
    let mut q = QTable::zeros(n, a_count);
    let mut v = vec![0.0; n];
    loop {
        let mut change = 0.0f64;
        for s in env.non_terminal_states() {
            for a in 0..a_count {
                let st = &model[s * a_count + a];
                let boot = if st.terminal { 0.0 } else { gamma * v[st.next_state] };
                let new = st.reward + boot;
                let k = s * a_count + a;
                change = change.max((new - q.values[k]).abs());
                q.values[k] = new;
            }
        }
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        if change <= tol {
            return Ok(q);
        }
    }
}

/// Fraction of non-terminal states whose greedy action is oracle-optimal.
pub fn policy_agreement(env: &Environment, greedy: &[usize], oracle: &QTable) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for s in env.non_terminal_states() {
        total += 1;
        if oracle.optimal_actions(s, OPTIMAL_TIE_TOL).contains(&greedy[s]) {
            hits += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Everything observed during one neural Q-update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub step: u64,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
    pub q_error: f64,
    pub q_current: Vec<f64>,
    pub q_next: Vec<f64>,
    pub feedforwards: usize,
}

/// A network, its arithmetic, and the two Q-value buffers.
#[derive(Debug, Clone)]
pub struct NeuralQ<B: Backend> {
    pub net: Network<B::Scalar>,
    pub backend: B,
    pub hyper: Hyperparams,
    pub rule: UpdateRule,
    current: QFifo<B::Scalar>,
    next: QFifo<B::Scalar>,
    steps: u64,
}

impl<B: Backend> NeuralQ<B> {
    pub fn new(net: Network<B::Scalar>, backend: B, hyper: Hyperparams, rule: UpdateRule) -> Self {
        NeuralQ {
            net,
            backend,
            hyper,
            rule,
            current: QFifo::new(0),
            next: QFifo::new(0),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Largest occupancy seen in the (current, next) buffers.
    pub fn buffer_peaks(&self) -> (usize, usize) {
        (self.current.peak(), self.next.peak())
    }

    pub fn q_values(&mut self, env: &Environment, state: usize) -> Result<Vec<f64>, QError> {
        (0..env.actions_per_state())
            .map(|a| {
                let input = env.encode_input(state, a)?;
                let q = feedforward(&self.net, &mut self.backend, &input)?.q();
                Ok(self.backend.to_f64(q))
            })
            .collect()
    }

    pub fn greedy_policy(&mut self, env: &Environment) -> Result<Vec<usize>, QError> {
        (0..env.num_states())
            .map(|s| greedy_action(&self.q_values(env, s)?))
            .collect()
    }

    /// One Q-update from `state`. `epsilon` overrides `hyper.epsilon` so
    /// callers can run a decay schedule.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        env: &Environment,
        state: usize,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<UpdateRecord, QError> {
        let a_count = env.actions_per_state();
        self.current.reset(a_count);
        self.next.reset(a_count);

        let mut traces = Vec::with_capacity(a_count);
        let mut q_current = Vec::with_capacity(a_count);
        for a in 0..a_count {
            let trace = feedforward(&self.net, &mut self.backend, &env.encode_input(state, a)?)?;
            self.current.push(trace.q())?;
            q_current.push(self.backend.to_f64(trace.q()));
            traces.push(trace);
        }

        let action = epsilon_greedy(&q_current, epsilon, rng)?;
        let outcome = env.step(state, action)?;

        let mut q_next = Vec::with_capacity(a_count);
        for a in 0..a_count {
            let input = env.encode_input(outcome.next_state, a)?;
            let q = feedforward(&self.net, &mut self.backend, &input)?.q();
            self.next.push(q)?;
            q_next.push(self.backend.to_f64(q));
        }

        // Parallel drain: pick out Q(s, a_t) and track the next-state maximum.
        let mut q_sa = None;
        let mut best: Option<B::Scalar> = None;
        for a in 0..a_count {
            let c = self.current.pop().expect("current buffer holds every action");
            let n = self.next.pop().expect("next buffer holds every action");
            if a == action {
                q_sa = Some(c);
            }
            if best.is_none_or(|b| self.backend.to_f64(n) > self.backend.to_f64(b)) {
                best = Some(n);
            }
        }
        let q_sa = q_sa.expect("chosen action is in range");
        let best = best.expect("at least one action");

        let err = q_error_in(
            &mut self.backend,
            outcome.reward,
            best,
            q_sa,
            &self.hyper,
            outcome.terminal,
        );
        let trace = &traces[action];
        let deltas = backprop(&self.net, &mut self.backend, trace, err);
        let c = self.backend.from_f64(self.hyper.c_rate);
        apply_update(&mut self.net, &mut self.backend, trace, &deltas, c, self.rule)?;

        let record = UpdateRecord {
            step: self.steps,
            state,
            action,
            reward: outcome.reward,
            next_state: outcome.next_state,
            terminal: outcome.terminal,
            q_error: self.backend.to_f64(err),
            q_current,
            q_next,
            feedforwards: 2 * a_count,
        };
        self.steps += 1;
        Ok(record)
    }
}
