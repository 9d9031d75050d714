// SPDX-License-Identifier: Apache-2.0

//! Cycle and throughput model of the Q-learning accelerator.
//!
//! One Q-update runs `2A` feedforward passes (all actions of the current
//! state, then all actions of the next state), drains the two Q-value
//! buffers in parallel to capture the error, and runs one backpropagation
//! pass. The fixed-point perceptron takes `7A + 1` cycles; the stage-cost
//! decomposition below reproduces that count and is calibrated for MLPs.
//!
//! Stage costs (per layer, since each layer's neurons run in parallel):
//!
//! | stage          | default | counted                                   |
//! |----------------|---------|-------------------------------------------|
//! | `mac`          | 2       | per weighted layer per feedforward pass   |
//! | `lut_lookup`   | 1       | per weighted layer per feedforward pass   |
//! | `layer_handoff`| 1       | per layer boundary per feedforward pass   |
//! | `drain`        | 1       | per buffered action during error capture  |
//! | `error_capture`| 0       | once per update                           |
//! | `delta`        | 4       | per hidden layer during backpropagation   |
//! | `weight_update`| 1       | per weighted layer during backpropagation |
//!
//! Floating-point variants scale the arithmetic stages (`mac`, `lut_lookup`,
//! `error_capture`, `delta`, `weight_update`) by `float_op_multiplier`;
//! buffer traffic and layer handoff are not scaled.

use crate::neural::{BackendKind, Topology};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// 150 MHz.
pub const DEFAULT_CLOCK_HZ: f64 = 150e6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FifoError {
    #[error("push to full buffer (capacity {0})")]
    Full(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Perceptron,
    Mlp,
}

impl std::str::FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "perceptron" => Ok(Arch::Perceptron),
            "mlp" => Ok(Arch::Mlp),
            _ => Err(format!("unknown arch {s:?} (expected perceptron or mlp)")),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Perceptron => "perceptron",
            Arch::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCosts {
    pub mac: u64,
    pub lut_lookup: u64,
    pub layer_handoff: u64,
    pub drain: u64,
    pub error_capture: u64,
    pub delta: u64,
    pub weight_update: u64,
    pub float_op_multiplier: f64,
}

impl StageCosts {
    pub const FIXED: StageCosts = StageCosts {
        mac: 2,
        lut_lookup: 1,
        layer_handoff: 1,
        drain: 1,
        error_capture: 0,
        delta: 4,
        weight_update: 1,
        float_op_multiplier: 1.0,
    };

    pub fn zero() -> Self {
        StageCosts {
            mac: 0,
            lut_lookup: 0,
            layer_handoff: 0,
            drain: 0,
            error_capture: 0,
            delta: 0,
            weight_update: 0,
            float_op_multiplier: 1.0,
        }
    }
}

/// Calibrated arithmetic slowdown of the floating-point datapaths.
pub fn default_float_multiplier(arch: Arch) -> f64 {
    match arch {
        Arch::Perceptron => 9.25,
        Arch::Mlp => 1.5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleModel {
    pub arch: Arch,
    pub backend: BackendKind,
    pub costs: StageCosts,
    pub clock_hz: f64,
}

/// Cycle totals split into arithmetic and data-movement work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleBreakdown {
    pub feedforward_pass: u64,
    pub feedforward_total: u64,
    pub error_capture: u64,
    pub backprop: u64,
    pub total: u64,
}

impl CycleModel {
    pub fn new(arch: Arch, backend: BackendKind) -> Self {
        let mut costs = StageCosts::FIXED;
        if backend == BackendKind::Float {
            costs.float_op_multiplier = default_float_multiplier(arch);
        }
        CycleModel {
            arch,
            backend,
            costs,
            clock_hz: DEFAULT_CLOCK_HZ,
        }
    }

    pub fn with_clock(mut self, clock_hz: f64) -> Self {
        self.clock_hz = clock_hz;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return Err(format!("clock_hz must be positive, got {}", self.clock_hz));
        }
        let m = self.costs.float_op_multiplier;
        if !(m >= 1.0 && m.is_finite()) {
            return Err(format!("float_op_multiplier must be >= 1, got {m}"));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        match self.backend {
            BackendKind::Fixed => 1.0,
            BackendKind::Float => self.costs.float_op_multiplier,
        }
    }

    /// Cycle counts for one Q-update of `topology` with `actions` actions per state.
    ///
    /// Timing depends only on shapes, never on weight values.
    pub fn breakdown(&self, topology: &Topology, actions: u64) -> CycleBreakdown {
        let c = &self.costs;
        let layers = topology.weighted_layers() as u64;
        let hidden = topology.hidden_sizes.len() as u64;
        let passes = 2 * actions;
        let k = self.scale();

        let ff_arith = layers * (c.mac + c.lut_lookup);
        let ff_move = (layers - 1) * c.layer_handoff;
        let bp_arith = hidden * c.delta + layers * c.weight_update;
        let arith = passes * ff_arith + c.error_capture + bp_arith;
        let moves = passes * ff_move + actions * c.drain;
        let total = (arith as f64 * k).ceil() as u64 + moves;

        let scaled = |x: u64| (x as f64 * k).ceil() as u64;
        CycleBreakdown {
            feedforward_pass: scaled(ff_arith) + ff_move,
            feedforward_total: scaled(passes * ff_arith) + passes * ff_move,
            error_capture: scaled(c.error_capture) + actions * c.drain,
            backprop: scaled(bp_arith),
            total,
        }
    }

    pub fn cycles(&self, topology: &Topology, actions: u64) -> u64 {
        self.breakdown(topology, actions).total
    }

    pub fn report(&self, topology: &Topology, actions: u64, overflow_count: u64) -> ThroughputReport {
        let cycles = self.cycles(topology, actions).max(1);
        ThroughputReport {
            cycles_per_q_update: cycles,
            q_updates_per_second: self.clock_hz / cycles as f64,
            fifo_peak_occupancy: actions as usize,
            overflow_count,
        }
    }
}

/// Closed-form cycle count of the fixed-point perceptron datapath.
pub fn perceptron_fixed_cycles(actions: u64) -> u64 {
    7 * actions + 1
}

/// Q-updates per second in thousands.
pub fn throughput_kqps(cycles: u64, clock_hz: f64) -> f64 {
    clock_hz / cycles as f64 / 1e3
}

/// Cycle count of an MLP Q-update under `model` (perceptron topologies work too).
pub fn mlp_cycles(topology: &Topology, actions: u64, model: &CycleModel) -> u64 {
    model.cycles(topology, actions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub cycles_per_q_update: u64,
    pub q_updates_per_second: f64,
    pub fifo_peak_occupancy: usize,
    pub overflow_count: u64,
}

impl ThroughputReport {
    pub fn kqps(&self) -> f64 {
        self.q_updates_per_second / 1e3
    }
}

/// Bounded FIFO of Q-values with occupancy tracking.
#[derive(Debug, Clone)]
pub struct QFifo<T> {
    items: VecDeque<T>,
    capacity: usize,
    peak: usize,
}

impl<T> QFifo<T> {
    pub fn new(capacity: usize) -> Self {
        QFifo {
            items: VecDeque::with_capacity(capacity),
            capacity,
            peak: 0,
        }
    }

    pub fn push(&mut self, v: T) -> Result<(), FifoError> {
        if self.items.len() == self.capacity {
            return Err(FifoError::Full(self.capacity));
        }
        self.items.push_back(v);
        self.peak = self.peak.max(self.items.len());
        Ok(())
    }

    pub fn pop(&mut self) -> Option<T> {
        self.items.pop_front()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    /// Empty the buffer and resize it; the peak is kept.
    pub fn reset(&mut self, capacity: usize) {
        self.items.clear();
        self.capacity = capacity;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Buffer {
    Current,
    Next,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FifoEvent {
    Push { cycle: u64, buffer: Buffer, action: usize },
    Pop { cycle: u64, buffer: Buffer, action: usize },
    WeightUpdate { cycle: u64, layer: usize },
}

impl FifoEvent {
    pub fn cycle(&self) -> u64 {
        match *self {
            FifoEvent::Push { cycle, .. }
            | FifoEvent::Pop { cycle, .. }
            | FifoEvent::WeightUpdate { cycle, .. } => cycle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceViolation {
    #[error("pop from empty {0:?} buffer at event {1}")]
    Underflow(Buffer, usize),
    #[error("{0:?} buffer exceeded capacity {1}")]
    Overflow(Buffer, usize),
    #[error("{0:?} buffer popped action {1} out of order")]
    OutOfOrder(Buffer, usize),
    #[error("{0:?} buffer not drained ({1} left)")]
    NotDrained(Buffer, usize),
    #[error("events are not time-ordered")]
    Unordered,
}

/// Time-ordered buffer and weight-update events of one Q-update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FifoTrace {
    pub capacity: usize,
    pub total_cycles: u64,
    pub events: Vec<FifoEvent>,
}

/// Occupancy statistics for one buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BufferStats {
    pub pushes: usize,
    pub pops: usize,
    pub peak: usize,
    pub final_occupancy: usize,
}

impl FifoTrace {
    pub fn stats(&self, buffer: Buffer) -> BufferStats {
        let mut st = BufferStats::default();
        let mut occ = 0usize;
        for e in &self.events {
            match *e {
                FifoEvent::Push { buffer: b, .. } if b == buffer => {
                    st.pushes += 1;
                    occ += 1;
                    st.peak = st.peak.max(occ);
                }
                FifoEvent::Pop { buffer: b, .. } if b == buffer => {
                    st.pops += 1;
                    occ = occ.saturating_sub(1);
                }
                _ => {}
            }
        }
        st.final_occupancy = occ;
        st
    }

    /// Order of actions popped from `buffer`.
    pub fn pop_order(&self, buffer: Buffer) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match *e {
                FifoEvent::Pop { buffer: b, action, .. } if b == buffer => Some(action),
                _ => None,
            })
            .collect()
    }

    pub fn push_order(&self, buffer: Buffer) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match *e {
                FifoEvent::Push { buffer: b, action, .. } if b == buffer => Some(action),
                _ => None,
            })
            .collect()
    }

    /// Checks time order, no underflow, capacity, FIFO order and full drain.
    pub fn validate(&self) -> Result<(), TraceViolation> {
        if self.events.windows(2).any(|w| w[0].cycle() > w[1].cycle()) {
            return Err(TraceViolation::Unordered);
        }
        for buffer in [Buffer::Current, Buffer::Next] {
            let mut q = VecDeque::new();
            for (idx, e) in self.events.iter().enumerate() {
                match *e {
                    FifoEvent::Push { buffer: b, action, .. } if b == buffer => {
                        q.push_back(action);
                        if q.len() > self.capacity {
                            return Err(TraceViolation::Overflow(buffer, self.capacity));
                        }
                    }
                    FifoEvent::Pop { buffer: b, action, .. } if b == buffer => match q.pop_front() {
                        None => return Err(TraceViolation::Underflow(buffer, idx)),
                        Some(a) if a != action => {
                            return Err(TraceViolation::OutOfOrder(buffer, action))
                        }
                        Some(_) => {}
                    },
                    _ => {}
                }
            }
            if !q.is_empty() {
                return Err(TraceViolation::NotDrained(buffer, q.len()));
            }
        }
        Ok(())
    }
}

/// Event schedule of one Q-update under `model`.
///
/// Each feedforward pass pushes its Q-value when it completes; the current
/// state's `A` passes run first, then the next state's. Error capture pops
/// both buffers together, one entry per `drain` cycles (at least one), and
/// backpropagation ends with one weight-update event per layer. The last
/// event lands on `model.cycles(topology, A)`.
pub fn simulate_schedule(model: &CycleModel, topology: &Topology, actions: usize) -> FifoTrace {
    let b = model.breakdown(topology, actions as u64);
    let mut events = Vec::with_capacity(4 * actions + topology.weighted_layers());
    let c = &model.costs;
    let weighted = topology.weighted_layers() as u64;
    let (ff_arith, ff_move) = (weighted * (c.mac + c.lut_lookup), (weighted - 1) * c.layer_handoff);
    // Cumulative scaling, so fractional multipliers do not round up once per pass.
    let k = model.scale();
    let mut pass_index = 0u64;
    for buffer in [Buffer::Current, Buffer::Next] {
        for action in 0..actions {
            pass_index += 1;
            let cycle = (pass_index as f64 * ff_arith as f64 * k).ceil() as u64 + pass_index * ff_move;
            events.push(FifoEvent::Push {
                cycle,
                buffer,
                action,
            });
        }
    }
    let mut t = b.feedforward_total;
    let drain = c.drain;
    for action in 0..actions {
        t += drain;
        for buffer in [Buffer::Current, Buffer::Next] {
            events.push(FifoEvent::Pop {
                cycle: t,
                buffer,
                action,
            });
        }
    }
    let total = b.total;
    let layers = topology.weighted_layers();
    // Backprop runs from the output layer down; updates are spaced evenly
    // over the remaining budget and the last one lands on `total`.
    let budget = total.saturating_sub(t);
    for k in 0..layers {
        let cycle = t + budget * (k as u64 + 1) / layers as u64;
        events.push(FifoEvent::WeightUpdate {
            cycle,
            layer: layers - 1 - k,
        });
    }
    FifoTrace {
        capacity: actions,
        total_cycles: total,
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_mlp() -> Topology {
        Topology::mlp(6, vec![4])
    }

    #[test]
    fn closed_form_cycles() {
        assert_eq!(perceptron_fixed_cycles(9), 64);
        assert_eq!(perceptron_fixed_cycles(1), 8);
        assert_eq!(perceptron_fixed_cycles(40), 281);
    }

    #[test]
    fn stage_model_reproduces_closed_form() {
        let m = CycleModel::new(Arch::Perceptron, BackendKind::Fixed);
        for a in 1..=64 {
            for width in [2, 6, 20] {
                assert_eq!(m.cycles(&Topology::perceptron(width), a), perceptron_fixed_cycles(a));
            }
        }
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput_kqps(64, 150e6), 2343.75);
        assert!((throughput_kqps(281, 150e6) - 533.807_829).abs() < 1e-6);
        assert_eq!(throughput_kqps(1, 1.0), 0.001);
    }

    #[test]
    fn throughput_decreases_with_actions() {
        let mut prev = f64::INFINITY;
        for a in 1..200 {
            let t = throughput_kqps(perceptron_fixed_cycles(a), DEFAULT_CLOCK_HZ);
            assert!(t < prev);
            prev = t;
        }
    }

    #[test]
    fn mlp_defaults() {
        let m = CycleModel::new(Arch::Mlp, BackendKind::Fixed);
        assert_eq!(mlp_cycles(&simple_mlp(), 9, &m), 141);
        assert_eq!(mlp_cycles(&Topology::mlp(20, vec![4]), 40, &m), 606);
    }

    #[test]
    fn degenerate_costs() {
        let mut m = CycleModel::new(Arch::Mlp, BackendKind::Fixed);
        m.costs = StageCosts {
            error_capture: 1,
            ..StageCosts::zero()
        };
        assert_eq!(mlp_cycles(&simple_mlp(), 9, &m), 1);
    }

    #[test]
    fn float_multiplier_only_scales_arithmetic() {
        let fixed = CycleModel::new(Arch::Perceptron, BackendKind::Fixed);
        let float = CycleModel::new(Arch::Perceptron, BackendKind::Float);
        let t = Topology::perceptron(6);
        // 55 arithmetic cycles * 9.25, rounded up, plus 9 drain cycles.
        assert_eq!(float.cycles(&t, 9), 509 + 9);
        assert!(float.cycles(&t, 9) > fixed.cycles(&t, 9));
        assert!(CycleModel { clock_hz: 0.0, ..fixed }.validate().is_err());
    }

    #[test]
    fn report_invariant() {
        let m = CycleModel::new(Arch::Mlp, BackendKind::Fixed).with_clock(75e6);
        let r = m.report(&simple_mlp(), 9, 3);
        assert_eq!(r.q_updates_per_second, 75e6 / r.cycles_per_q_update as f64);
        assert_eq!(r.overflow_count, 3);
        assert_eq!(r.fifo_peak_occupancy, 9);
    }

    #[test]
    fn fifo_capacity_and_order() {
        let mut f = QFifo::new(2);
        f.push(1).unwrap();
        f.push(2).unwrap();
        assert_eq!(f.push(3), Err(FifoError::Full(2)));
        assert_eq!(f.pop(), Some(1));
        assert_eq!(f.pop(), Some(2));
        assert_eq!(f.pop(), None);
        assert_eq!(f.peak(), 2);
    }

    #[test]
    fn schedule_examples() {
        let m = CycleModel::new(Arch::Perceptron, BackendKind::Fixed);
        let t1 = simulate_schedule(&m, &Topology::perceptron(6), 1);
        t1.validate().unwrap();
        assert_eq!(t1.stats(Buffer::Current).peak, 1);
        assert_eq!(t1.stats(Buffer::Next).peak, 1);

        let t9 = simulate_schedule(&m, &Topology::perceptron(6), 9);
        t9.validate().unwrap();
        for b in [Buffer::Current, Buffer::Next] {
            let st = t9.stats(b);
            assert_eq!((st.pushes, st.pops, st.final_occupancy, st.peak), (9, 9, 0, 9));
            assert_eq!(t9.pop_order(b), t9.push_order(b));
        }
        assert_eq!(t9.total_cycles, 64);
        assert_eq!(t9.events.last().unwrap().cycle(), 64);
    }

    #[test]
    fn schedule_ends_on_model_total() {
        for (arch, backend) in [
            (Arch::Mlp, BackendKind::Fixed),
            (Arch::Mlp, BackendKind::Float),
            (Arch::Perceptron, BackendKind::Float),
        ] {
            let m = CycleModel::new(arch, backend);
            let topo = match arch {
                Arch::Mlp => Topology::mlp(20, vec![4]),
                Arch::Perceptron => Topology::perceptron(20),
            };
            let tr = simulate_schedule(&m, &topo, 40);
            tr.validate().unwrap();
            assert_eq!(tr.events.last().unwrap().cycle(), m.cycles(&topo, 40));
        }
    }

    #[test]
    fn validate_catches_violations() {
        let bad = FifoTrace {
            capacity: 1,
            total_cycles: 2,
            events: vec![FifoEvent::Pop {
                cycle: 1,
                buffer: Buffer::Current,
                action: 0,
            }],
        };
        assert!(matches!(bad.validate(), Err(TraceViolation::Underflow(..))));
        let swapped = FifoTrace {
            capacity: 2,
            total_cycles: 4,
            events: vec![
                FifoEvent::Push { cycle: 1, buffer: Buffer::Next, action: 0 },
                FifoEvent::Push { cycle: 2, buffer: Buffer::Next, action: 1 },
                FifoEvent::Pop { cycle: 3, buffer: Buffer::Next, action: 1 },
                FifoEvent::Pop { cycle: 4, buffer: Buffer::Next, action: 0 },
            ],
        };
        assert!(matches!(swapped.validate(), Err(TraceViolation::OutOfOrder(..))));
        let over = FifoTrace {
            capacity: 1,
            total_cycles: 2,
            events: vec![
                FifoEvent::Push { cycle: 1, buffer: Buffer::Current, action: 0 },
                FifoEvent::Push { cycle: 2, buffer: Buffer::Current, action: 1 },
            ],
        };
        assert!(matches!(over.validate(), Err(TraceViolation::Overflow(..))));
    }
}
