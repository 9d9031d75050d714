// SPDX-License-Identifier: Apache-2.0

//! Deterministic, fully enumerable test environments.
//!
//! Two generators are provided: a line of `n` states with a terminal at the
//! right end ([`Environment::chain`]) and a seeded random-goal grid with the
//! dimensions of the simple and complex presets ([`Environment::grid`]).
//! Every environment pays its only non-zero reward, `1 - gamma_cap`, on
//! entering a terminal state, so discounted returns never exceed 1.
//!
//! Actions are packed as base-2 fixed-width fractions: the index is split
//! into `b`-bit digits, least significant component first, and each digit is
//! written as `digit / (2^b - 1)`. The low and high halves of the action bits
//! are the column and row displacement of the move.
//!
//! Grid states use a piecewise-linear thermometer code instead: the column
//! fills the first half of the state components and the row the rest, and a
//! coordinate `v` out of `max` over `c` components sets component `k` to
//! `clamp(v * c / max - k, 0, 1)`. The components sum to `v * c / max`, so the
//! code is injective and monotone in each coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Bumped whenever the grid generator changes the model for a given seed.
pub const GRID_GENERATOR_VERSION: u32 = 1;

/// Digits wider than this would not stay distinguishable after quantizing
/// features to a typical fixed-point input format.
pub const MAX_BITS_PER_COMPONENT: u32 = 8;

pub const DEFAULT_GAMMA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible environment spec: {0}")]
    Infeasible(String),
    #[error("state {state} out of range (environment has {states} states)")]
    StateOutOfRange { state: usize, states: usize },
    #[error("action {action} out of range ({actions} actions per state)")]
    ActionOutOfRange { action: usize, actions: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub actions_per_state: usize,
    pub state_space_size: usize,
    /// Largest discount the reward scaling supports; terminal reward is `1 - gamma_cap`.
    pub gamma_cap: f64,
    pub seed: u64,
}

impl EnvSpec {
    /// Input width 6 (4 state + 2 action components), 9 actions, 36 states.
    pub fn simple() -> Self {
        EnvSpec {
            state_dim: 4,
            action_dim: 2,
            actions_per_state: 9,
            state_space_size: 36,
            gamma_cap: DEFAULT_GAMMA,
            seed: 0,
        }
    }

    /// Input width 20 (14 state + 6 action components), 40 actions, 1800 states.
    pub fn complex() -> Self {
        EnvSpec {
            state_dim: 14,
            action_dim: 6,
            actions_per_state: 40,
            state_space_size: 1800,
            gamma_cap: DEFAULT_GAMMA,
            seed: 0,
        }
    }

    pub fn input_width(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidSpec(m.to_string()));
        if self.state_dim == 0 || self.action_dim == 0 {
            return bad("state_dim and action_dim must be positive");
        }
        if self.actions_per_state == 0 {
            return bad("actions_per_state must be positive");
        }
        if self.state_space_size < 2 {
            return bad("state_space_size must be at least 2");
        }
        if !(0.0..1.0).contains(&self.gamma_cap) {
            return bad("gamma_cap must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Chain,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub goal: usize,
    /// `(dx, dy)` per action index.
    pub moves: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    kind: EnvKind,
    spec: EnvSpec,
    next: Vec<usize>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
    state_features: Vec<f64>,
    action_features: Vec<f64>,
    layout: Option<GridLayout>,
}

/// Bits needed to write every integer in `0..=max`.
fn bits_for(max: usize) -> u32 {
    (usize::BITS - max.leading_zeros()).max(1)
}

/// Writes `value` as base-2 digits of `bits_per` bits across `out`.
fn pack(value: usize, bits_per: u32, out: &mut [f64]) {
    let mask = (1usize << bits_per) - 1;
    let denom = mask as f64;
    for (k, slot) in out.iter_mut().enumerate() {
        let shift = bits_per as usize * k;
        let digit = if shift >= usize::BITS as usize {
            0
        } else {
            (value >> shift) & mask
        };
        *slot = digit as f64 / denom;
    }
}

/// Thermometer code of `value` in `0..=max` across `out`.
fn thermometer(value: usize, max: usize, out: &mut [f64]) {
    let level = if max == 0 {
        0.0
    } else {
        (value * out.len()) as f64 / max as f64
    };
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = (level - k as f64).clamp(0.0, 1.0);
    }
}

fn digit_width(max: usize, comps: usize) -> Result<u32, EnvError> {
    let b = bits_for(max).div_ceil(comps as u32).max(1);
    if b > MAX_BITS_PER_COMPONENT {
        return Err(EnvError::Infeasible(format!(
            "{} values need {b} bits per component across {comps} components (max {MAX_BITS_PER_COMPONENT})",
            max + 1
        )));
    }
    Ok(b)
}

impl Environment {
    /// States `0..n` on a line, actions `{0: left, 1: right}`. Entering
    /// `n - 1` pays `1 - gamma` and ends the episode; moving left from 0
    /// stays put.
    pub fn chain(n: usize, gamma: f64) -> Result<Self, EnvError> {
        let spec = EnvSpec {
            state_dim: 1,
            action_dim: 1,
            actions_per_state: 2,
            state_space_size: n,
            gamma_cap: gamma,
            seed: 0,
        };
        spec.validate()?;
        let goal = n - 1;
        let reward_value = 1.0 - gamma;
        let mut next = Vec::with_capacity(2 * n);
        let mut reward = Vec::with_capacity(2 * n);
        for s in 0..n {
            for a in 0..2 {
                let s2 = if s == goal {
                    s
                } else if a == 0 {
                    s.saturating_sub(1)
                } else {
                    s + 1
                };
                next.push(s2);
                reward.push(if s != goal && s2 == goal { reward_value } else { 0.0 });
            }
        }
        let mut terminal = vec![false; n];
        terminal[goal] = true;
        Ok(Environment {
            kind: EnvKind::Chain,
            spec,
            next,
            reward,
            terminal,
            state_features: (0..n).map(|s| s as f64 / (n - 1) as f64).collect(),
            action_features: vec![0.0, 1.0],
            layout: None,
        })
    }

    /// Seeded random-goal grid with exactly `state_space_size` cells and
    /// `actions_per_state` moves per cell. Moves are clipped at the walls;
    /// the goal cell, drawn from the seed, is terminal and pays `1 - gamma_cap`
    /// on entry. Fails unless every cell can reach the goal.
    pub fn grid(spec: EnvSpec) -> Result<Self, EnvError> {
        spec.validate()?;
        let s_count = spec.state_space_size;
        let a_count = spec.actions_per_state;
        let width = (1..=s_count)
            .take_while(|w| w * w <= s_count)
            .filter(|w| s_count.is_multiple_of(*w))
            .last()
            .unwrap_or(1);
        let height = s_count / width;

        let x_comps = spec.state_dim.div_ceil(2);
        let y_comps = spec.state_dim - x_comps;
        let mut state_features = vec![0.0; s_count * spec.state_dim];
        for s in 0..s_count {
            let row = &mut state_features[s * spec.state_dim..(s + 1) * spec.state_dim];
            if y_comps == 0 {
                thermometer(s, s_count - 1, row);
            } else {
                let (x_part, y_part) = row.split_at_mut(x_comps);
                thermometer(s % width, width - 1, x_part);
                thermometer(s / width, height - 1, y_part);
            }
        }

        let ab = digit_width(a_count - 1, spec.action_dim)?;
        let mut action_features = vec![0.0; a_count * spec.action_dim];
        for a in 0..a_count {
            pack(a, ab, &mut action_features[a * spec.action_dim..(a + 1) * spec.action_dim]);
        }
        let x_bits = ab * spec.action_dim.div_ceil(2) as u32;
        let split = |a: usize| -> (usize, usize) {
            if x_bits >= usize::BITS {
                (a, 0)
            } else {
                (a & ((1 << x_bits) - 1), a >> x_bits)
            }
        };
        let max_lo = (0..a_count).map(|a| split(a).0).max().unwrap_or(0);
        let max_hi = (0..a_count).map(|a| split(a).1).max().unwrap_or(0);
        let (cx, cy) = ((max_lo / 2) as i64, (max_hi / 2) as i64);
        let moves: Vec<(i64, i64)> = (0..a_count)
            .map(|a| {
                let (lo, hi) = split(a);
                (lo as i64 - cx, hi as i64 - cy)
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(
            spec.seed ^ (u64::from(GRID_GENERATOR_VERSION) << 56),
        );
        let goal = rng.gen_range(0..s_count);
        let reward_value = 1.0 - spec.gamma_cap;

        let mut next = Vec::with_capacity(s_count * a_count);
        let mut reward = Vec::with_capacity(s_count * a_count);
        for s in 0..s_count {
            let (x, y) = ((s % width) as i64, (s / width) as i64);
            for &(dx, dy) in &moves {
                let s2 = if s == goal {
                    s
                } else {
                    let nx = (x + dx).clamp(0, width as i64 - 1) as usize;
                    let ny = (y + dy).clamp(0, height as i64 - 1) as usize;
                    ny * width + nx
                };
                next.push(s2);
                reward.push(if s != goal && s2 == goal { reward_value } else { 0.0 });
            }
        }
        let mut terminal = vec![false; s_count];
        terminal[goal] = true;

        let env = Environment {
            kind: EnvKind::Grid,
            spec,
            next,
            reward,
            terminal,
            state_features,
            action_features,
            layout: Some(GridLayout {
                width,
                height,
                goal,
                moves,
            }),
        };
        let unreachable = env.distances_to_terminal().iter().filter(|d| d.is_none()).count();
        if unreachable > 0 {
            return Err(EnvError::Infeasible(format!(
                "{unreachable} states cannot reach the goal"
            )));
        }
        Ok(env)
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    pub fn num_states(&self) -> usize {
        self.spec.state_space_size
    }

    pub fn actions_per_state(&self) -> usize {
        self.spec.actions_per_state
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    pub fn max_reward(&self) -> f64 {
        1.0 - self.spec.gamma_cap
    }

    fn check(&self, state: usize, action: usize) -> Result<(), EnvError> {
        if state >= self.num_states() {
            return Err(EnvError::StateOutOfRange {
                state,
                states: self.num_states(),
            });
        }
        if action >= self.actions_per_state() {
            return Err(EnvError::ActionOutOfRange {
                action,
                actions: self.actions_per_state(),
            });
        }
        Ok(())
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn non_terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states()).filter(|&s| !self.terminal[s])
    }

    /// Deterministic transition. Acting from a terminal state leaves it in
    /// place with zero reward.
    pub fn step(&self, state: usize, action: usize) -> Result<Step, EnvError> {
        self.check(state, action)?;
        let k = state * self.actions_per_state() + action;
        let next_state = self.next[k];
        Ok(Step {
            next_state,
            reward: self.reward[k],
            terminal: self.terminal[next_state],
        })
    }

    pub fn state_features(&self, state: usize) -> &[f64] {
        let d = self.spec.state_dim;
        &self.state_features[state * d..(state + 1) * d]
    }

    pub fn action_features(&self, action: usize) -> &[f64] {
        let d = self.spec.action_dim;
        &self.action_features[action * d..(action + 1) * d]
    }

    /// State features followed by action features.
    pub fn encode_input(&self, state: usize, action: usize) -> Result<Vec<f64>, EnvError> {
        self.check(state, action)?;
        let mut v = Vec::with_capacity(self.input_width());
        v.extend_from_slice(self.state_features(state));
        v.extend_from_slice(self.action_features(action));
        Ok(v)
    }

    /// Shortest action count from each state to any terminal state
    /// (`Some(0)` for terminals, `None` if unreachable).
    pub fn distances_to_terminal(&self) -> Vec<Option<usize>> {
        let n = self.num_states();
        let a = self.actions_per_state();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in 0..n {
            if self.terminal[s] {
                continue;
            }
            for k in 0..a {
                preds[self.next[s * a + k]].push(s);
            }
        }
        let mut dist = vec![None; n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            if self.terminal[s] {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            let d = dist[s].expect("queued states have a distance");
            for &p in &preds[s] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    pub fn dump(&self) -> EnvDump {
        let a = self.actions_per_state();
        EnvDump {
            version: 1,
            generator_version: GRID_GENERATOR_VERSION,
            kind: self.kind,
            spec: self.spec,
            layout: self.layout.clone(),
            states: (0..self.num_states())
                .map(|s| StateDump {
                    index: s,
                    terminal: self.terminal[s],
                    features: self.state_features(s).to_vec(),
                    next: self.next[s * a..(s + 1) * a].to_vec(),
                    reward: self.reward[s * a..(s + 1) * a].to_vec(),
                })
                .collect(),
            action_features: (0..a).map(|k| self.action_features(k).to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub index: usize,
    pub terminal: bool,
    pub features: Vec<f64>,
    pub next: Vec<usize>,
    pub reward: Vec<f64>,
}

/// Full transition model, as written by `env dump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDump {
    pub version: u32,
    pub generator_version: u32,
    pub kind: EnvKind,
    pub spec: EnvSpec,
    pub layout: Option<GridLayout>,
    pub states: Vec<StateDump>,
    pub action_features: Vec<Vec<f64>>,
}
