//! Pulse-response device models: functional conductance-update laws with
//! device-to-device and cycle-to-cycle variation, response-curve simulation,
//! and a measurement-fitting utility.

mod fit;

pub use fit::{fit_device, DeviceFit, FitProtocol};

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::num::{Matrix, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    #[default]
    ConstantStep,
    LinearStep,
    SoftBounds,
    SoftBoundsReference,
    PowStep,
    ExpStep,
    PiecewiseStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseDirection {
    Up,
    Down,
}

/// Device material description in normalized weight units.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub kind: DeviceKind,
    /// Mean single-pulse step at the zero point.
    pub dw_min: f64,
    /// Cycle-to-cycle std of the step, relative to the realized step.
    pub dw_min_std: f64,
    /// Device-to-device std of the step, relative to the mean.
    pub dw_min_dtod: f64,
    pub w_max: f64,
    pub w_min: f64,
    /// Device-to-device std of the bounds, relative to the mean.
    pub w_max_std: f64,
    pub w_min_std: f64,
    /// Asymmetry of up vs down step: up = dw_min*(1+up_down), down = dw_min*(1-up_down).
    pub up_down: f64,
    /// Shape parameter for LinearStep / PowStep.
    pub gamma: f64,
    /// ExpStep shape parameters.
    pub c0: f64,
    pub c1: f64,
    /// PiecewiseStep nodes: (weight position, relative step scale).
    pub nodes: Vec<(f64, f64)>,
    /// SoftBoundsReference: reference weight subtracted at read.
    pub reference: f64,
    /// SoftBoundsReference: if set, each device's reference is placed at its
    /// realized symmetry point at array construction time.
    pub reference_symmetry: bool,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            kind: DeviceKind::ConstantStep,
            dw_min: 0.001,
            dw_min_std: 0.3,
            dw_min_dtod: 0.3,
            w_max: 1.0,
            w_min: -1.0,
            w_max_std: 0.3,
            w_min_std: 0.3,
            up_down: 0.0,
            gamma: 0.0,
            c0: 0.0,
            c1: 0.0,
            nodes: Vec::new(),
            reference: 0.0,
            reference_symmetry: false,
        }
    }
}

impl DeviceParams {
    /// Noiseless, symmetric variant of the given kind.
    pub fn ideal(kind: DeviceKind, dw_min: f64) -> Self {
        Self {
            kind,
            dw_min,
            dw_min_std: 0.0,
            dw_min_dtod: 0.0,
            w_max_std: 0.0,
            w_min_std: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        if !(self.w_min < 0.0 && 0.0 < self.w_max) {
            return Err(SimError::config(
                &format!("{path}.w_min/w_max"),
                "must satisfy w_min < 0 < w_max",
            ));
        }
        if self.dw_min <= 0.0 {
            return Err(SimError::config(&format!("{path}.dw_min"), "must be > 0"));
        }
        for (name, v) in [
            ("dw_min_std", self.dw_min_std),
            ("dw_min_dtod", self.dw_min_dtod),
            ("w_max_std", self.w_max_std),
            ("w_min_std", self.w_min_std),
        ] {
            if v < 0.0 {
                return Err(SimError::config(&format!("{path}.{name}"), "must be >= 0"));
            }
        }
        if self.up_down.abs() >= 1.0 {
            return Err(SimError::config(&format!("{path}.up_down"), "must be in (-1, 1)"));
        }
        match self.kind {
            DeviceKind::ExpStep => {
                if self.c0 >= 1.0 {
                    return Err(SimError::config(
                        &format!("{path}.c0"),
                        "must be < 1 (step at w=0 would vanish)",
                    ));
                }
            }
            DeviceKind::PiecewiseStep => {
                if self.nodes.len() < 2 {
                    return Err(SimError::config(&format!("{path}.nodes"), "need >= 2 nodes"));
                }
                for pair in self.nodes.windows(2) {
                    if pair[0].0 >= pair[1].0 {
                        return Err(SimError::config(
                            &format!("{path}.nodes"),
                            "node positions must be strictly increasing",
                        ));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Average number of states: conductance range divided by dw_min.
    pub fn num_states(&self) -> f64 {
        (self.w_max - self.w_min) / self.dw_min
    }
}

/// One crossbar array of realized devices plus its current analog weights.
#[derive(Debug, Clone)]
pub struct DeviceArray {
    rows: usize,
    cols: usize,
    params: DeviceParams,
    delta_up: Vec<f64>,
    delta_down: Vec<f64>,
    bound_up: Vec<f64>,
    bound_down: Vec<f64>,
    reference: Vec<f64>,
    /// Raw device weights.
    weights: Matrix,
    /// Read weights: raw minus reference; what every MVM sees.
    effective: Matrix,
    pulse_count: u64,
}

fn floored_draw(mean: f64, rel_std: f64, stream: &mut RandomStream) -> f64 {
    if rel_std == 0.0 {
        return mean;
    }
    let v = mean * (1.0 + rel_std * stream.normal());
    // Non-positive draws are floored at 1% of the mean magnitude.
    if v.abs() < 0.01 * mean.abs() || v.signum() != mean.signum() {
        0.01 * mean
    } else {
        v
    }
}

impl DeviceArray {
    /// Draw per-device parameters (device-to-device variation) once.
    pub fn realize(
        params: &DeviceParams,
        rows: usize,
        cols: usize,
        stream: &mut RandomStream,
    ) -> Result<Self, SimError> {
        if rows == 0 || cols == 0 {
            return Err(SimError::invalid("rows/cols", "must be > 0"));
        }
        params.validate("device")?;
        let n = rows * cols;
        let mut delta_up = Vec::with_capacity(n);
        let mut delta_down = Vec::with_capacity(n);
        let mut bound_up = Vec::with_capacity(n);
        let mut bound_down = Vec::with_capacity(n);
        let mut reference = Vec::with_capacity(n);
        let mean_up = params.dw_min * (1.0 + params.up_down);
        let mean_down = params.dw_min * (1.0 - params.up_down);
        for _ in 0..n {
            delta_up.push(floored_draw(mean_up, params.dw_min_dtod, stream));
            delta_down.push(floored_draw(mean_down, params.dw_min_dtod, stream));
            bound_up.push(floored_draw(params.w_max, params.w_max_std, stream));
            bound_down.push(floored_draw(params.w_min, params.w_min_std, stream));
        }
        for i in 0..n {
            let r = if params.kind == DeviceKind::SoftBoundsReference {
                if params.reference_symmetry {
                    symmetry_point(delta_up[i], delta_down[i], bound_up[i], bound_down[i])
                } else {
                    params.reference
                }
            } else {
                0.0
            };
            reference.push(r);
        }
        let mut array = Self {
            rows,
            cols,
            params: params.clone(),
            delta_up,
            delta_down,
            bound_up,
            bound_down,
            reference,
            weights: Matrix::zeros(rows, cols),
            effective: Matrix::zeros(rows, cols),
            pulse_count: 0,
        };
        array.rebuild_effective();
        Ok(array)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn pulse_count(&self) -> u64 {
        self.pulse_count
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    pub fn delta_up(&self, i: usize, j: usize) -> f64 {
        self.delta_up[self.idx(i, j)]
    }

    pub fn delta_down(&self, i: usize, j: usize) -> f64 {
        self.delta_down[self.idx(i, j)]
    }

    pub fn bound_up(&self, i: usize, j: usize) -> f64 {
        self.bound_up[self.idx(i, j)]
    }

    pub fn bound_down(&self, i: usize, j: usize) -> f64 {
        self.bound_down[self.idx(i, j)]
    }

    /// Read weights (raw minus reference), as seen by every MVM.
    pub fn weights(&self) -> &Matrix {
        &self.effective
    }

    pub fn raw_weights(&self) -> &Matrix {
        &self.weights
    }

    fn rebuild_effective(&mut self) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                let k = self.idx(i, j);
                self.effective.set(i, j, self.weights.get(i, j) - self.reference[k]);
            }
        }
    }

    /// Overwrite raw weights, clipping into each device's realized bounds.
    pub fn set_raw_weights(&mut self, w: &Matrix) -> Result<(), SimError> {
        if w.rows() != self.rows || w.cols() != self.cols {
            return Err(SimError::DimensionMismatch("set_raw_weights".into()));
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                let k = self.idx(i, j);
                let v = w.get(i, j).clamp(self.bound_down[k], self.bound_up[k]);
                self.weights.set(i, j, v);
            }
        }
        self.rebuild_effective();
        Ok(())
    }

    /// Overwrite effective (read) weights; raw = effective + reference.
    pub fn set_effective_weights(&mut self, w: &Matrix) -> Result<(), SimError> {
        if w.rows() != self.rows || w.cols() != self.cols {
            return Err(SimError::DimensionMismatch("set_effective_weights".into()));
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                let k = self.idx(i, j);
                let v = (w.get(i, j) + self.reference[k]).clamp(self.bound_down[k], self.bound_up[k]);
                self.weights.set(i, j, v);
                self.effective.set(i, j, v - self.reference[k]);
            }
        }
        Ok(())
    }

    /// Place every device at its rest state (reference for SoftBoundsReference,
    /// zero otherwise).
    pub fn reset_to_rest(&mut self) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                let k = self.idx(i, j);
                self.weights.set(i, j, self.reference[k]);
                self.effective.set(i, j, 0.0);
            }
        }
    }

    /// Apply one programming pulse to device (i, j).
    pub fn pulse(&mut self, i: usize, j: usize, dir: PulseDirection, stream: &mut RandomStream) {
        let k = self.idx(i, j);
        let w = self.weights.get(i, j);
        // Cycle-to-cycle noise multiplies the step; clamped at zero so a
        // noisy pulse can shrink to nothing but never reverses direction or
        // jumps over a soft bound.
        let c2c = if self.params.dw_min_std > 0.0 {
            (1.0 + self.params.dw_min_std * stream.normal()).max(0.0)
        } else {
            1.0
        };
        let bu = self.bound_up[k];
        let bd = self.bound_down[k];
        let new_w = match dir {
            PulseDirection::Up => {
                let step = self.delta_up[k] * c2c * self.step_scale_up(w, bu, bd);
                (w + step.max(0.0)).min(bu)
            }
            PulseDirection::Down => {
                let step = self.delta_down[k] * c2c * self.step_scale_down(w, bu, bd);
                (w - step.max(0.0)).max(bd)
            }
        };
        self.weights.set(i, j, new_w);
        self.effective.set(i, j, new_w - self.reference[k]);
        self.pulse_count += 1;
    }

    /// Weight-dependent shape factor of the up step (1 at w = 0).
    fn step_scale_up(&self, w: f64, bu: f64, bd: f64) -> f64 {
        match self.params.kind {
            DeviceKind::ConstantStep => 1.0,
            DeviceKind::LinearStep => 1.0 - self.params.gamma * w,
            DeviceKind::SoftBounds | DeviceKind::SoftBoundsReference => 1.0 - w / bu,
            DeviceKind::PowStep => {
                let base = (bu - w) / bu;
                if base <= 0.0 {
                    0.0
                } else {
                    base.powf(self.params.gamma)
                }
            }
            DeviceKind::ExpStep => {
                let f = 1.0 - self.params.c0 * (-self.params.c1 * w).exp();
                f / (1.0 - self.params.c0)
            }
            DeviceKind::PiecewiseStep => self.piecewise_scale(w, bd, bu),
        }
    }

    fn step_scale_down(&self, w: f64, bu: f64, bd: f64) -> f64 {
        match self.params.kind {
            DeviceKind::ConstantStep => 1.0,
            DeviceKind::LinearStep => 1.0 + self.params.gamma * w,
            DeviceKind::SoftBounds | DeviceKind::SoftBoundsReference => 1.0 - w / bd,
            DeviceKind::PowStep => {
                let base = (w - bd) / (-bd);
                if base <= 0.0 {
                    0.0
                } else {
                    base.powf(self.params.gamma)
                }
            }
            DeviceKind::ExpStep => {
                let f = 1.0 - self.params.c0 * (self.params.c1 * w).exp();
                f / (1.0 - self.params.c0)
            }
            DeviceKind::PiecewiseStep => self.piecewise_scale(w, bd, bu),
        }
    }

    fn piecewise_scale(&self, w: f64, _bd: f64, _bu: f64) -> f64 {
        let nodes = &self.params.nodes;
        let scale_at = |w: f64| -> f64 {
            if w <= nodes[0].0 {
                return nodes[0].1;
            }
            if w >= nodes[nodes.len() - 1].0 {
                return nodes[nodes.len() - 1].1;
            }
            for pair in nodes.windows(2) {
                let (p0, v0) = pair[0];
                let (p1, v1) = pair[1];
                if w >= p0 && w <= p1 {
                    let q = (w - p0) / (p1 - p0);
                    return (1.0 - q) * v0 + q * v1;
                }
            }
            unreachable!()
        };
        // Normalized so the step at w = 0 equals the realized dw_min.
        let at_zero = scale_at(0.0);
        if at_zero <= 0.0 {
            0.0
        } else {
            (scale_at(w) / at_zero).max(0.0)
        }
    }
}

/// Weight where the mean up and down steps cancel (SoftBounds law).
pub fn symmetry_point(delta_up: f64, delta_down: f64, bound_up: f64, bound_down: f64) -> f64 {
    // delta_up (1 - w/bu) = delta_down (1 - w/bd)
    let denom = delta_down / bound_down - delta_up / bound_up;
    if denom.abs() < 1e-30 {
        0.0
    } else {
        (delta_down - delta_up) / denom
    }
}

/// Pulse protocol of the response-curve measurement: `n_up` up pulses,
/// `n_down` down pulses, then `n_pairs` repeats of one up / one down.
pub fn standard_protocol(n_up: usize, n_down: usize, n_pairs: usize) -> Vec<PulseDirection> {
    let mut p = Vec::with_capacity(n_up + n_down + 2 * n_pairs);
    p.extend(std::iter::repeat(PulseDirection::Up).take(n_up));
    p.extend(std::iter::repeat(PulseDirection::Down).take(n_down));
    for _ in 0..n_pairs {
        p.push(PulseDirection::Up);
        p.push(PulseDirection::Down);
    }
    p
}

/// Simulate one realized device's conductance trace: the raw weight after
/// each pulse of the protocol, starting from the device's lower bound.
pub fn simulate_response(
    params: &DeviceParams,
    protocol: &[PulseDirection],
    stream: &mut RandomStream,
) -> Result<Vec<f64>, SimError> {
    let mut array = DeviceArray::realize(params, 1, 1, stream)?;
    let start = array.bound_down(0, 0);
    array.set_raw_weights(&Matrix::from_fn(1, 1, |_, _| start))?;
    let mut trace = Vec::with_capacity(protocol.len());
    for &dir in protocol {
        array.pulse(0, 0, dir, stream);
        trace.push(array.raw_weights().get(0, 0));
    }
    Ok(trace)
}
