//! In-memory training optimizers built on the pulsed update: plain in-memory
//! SGD, mixed-precision (digital accumulator chi), Tiki-Taka (gradient
//! crossbar A with slow transfer), and TTv2 (digital low-pass buffer H
//! between A and W).

use serde::{Deserialize, Serialize};

use crate::device::{DeviceArray, DeviceKind, DeviceParams, PulseDirection};
use crate::error::SimError;
use crate::mvm::{analog_forward, IoParams, WeightsView};
use crate::num::{Matrix, RandomStream};
use crate::update::{pulsed_outer_update, UpdateParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompoundKind {
    #[default]
    Single,
    MixedPrecision,
    Transfer,
    BufferedTransfer,
}

impl CompoundKind {
    /// Parse an optimizer selection string. Reserved names of algorithms the
    /// simulator knows about but does not implement are rejected with a
    /// dedicated message.
    pub fn from_name(name: &str) -> Result<Self, SimError> {
        match name {
            "sgd" => Ok(CompoundKind::Single),
            "mixed-precision" | "mp" => Ok(CompoundKind::MixedPrecision),
            "tiki-taka" => Ok(CompoundKind::Transfer),
            "ttv2" => Ok(CompoundKind::BufferedTransfer),
            "c-ttv2" | "chopped-ttv2" | "agad" => Err(SimError::Unsupported(format!(
                "optimizer '{name}' is reserved but not supported"
            ))),
            other => Err(SimError::config(
                "optimizer.name",
                format!("unknown optimizer '{other}' (expected sgd|mixed-precision|tiki-taka|ttv2)"),
            )),
        }
    }
}

/// Compound hyperparameters (part of the tile configuration).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompoundParams {
    /// Learning rate applied to the gradient-accumulation crossbar A.
    pub fast_lr: f64,
    /// Update steps between transfer events; 0 = tile input size.
    pub transfer_every: usize,
    /// Read lines transferred per transfer event.
    pub rows_per_transfer: usize,
    /// Learning rate of the A -> W (Transfer) pulsed write.
    pub transfer_lr: f64,
    /// TTv2 buffer threshold in units of dw_min: granularity = auto_granularity * dw_min.
    pub auto_granularity: f64,
    /// Mixed-precision transfer threshold in units of dw_min.
    pub threshold: f64,
    /// Place the A-matrix references at each device's symmetry point
    /// (SoftBoundsReference devices only).
    pub a_reference_symmetry: bool,
}

impl Default for CompoundParams {
    fn default() -> Self {
        Self {
            fast_lr: 0.1,
            transfer_every: 0,
            rows_per_transfer: 1,
            transfer_lr: 1.0,
            auto_granularity: 1.0,
            threshold: 1.0,
            a_reference_symmetry: true,
        }
    }
}

impl CompoundParams {
    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        for (name, v) in [
            ("fast_lr", self.fast_lr),
            ("transfer_lr", self.transfer_lr),
            ("auto_granularity", self.auto_granularity),
            ("threshold", self.threshold),
        ] {
            if v <= 0.0 {
                return Err(SimError::config(&format!("{path}.{name}"), "must be > 0"));
            }
        }
        if self.rows_per_transfer == 0 {
            return Err(SimError::config(&format!("{path}.rows_per_transfer"), "must be >= 1"));
        }
        Ok(())
    }
}

/// One tile's optimizer state: the W crossbar plus per-kind auxiliaries.
#[derive(Debug, Clone)]
pub struct Compound {
    kind: CompoundKind,
    params: CompoundParams,
    w: DeviceArray,
    /// Gradient crossbar (Transfer / BufferedTransfer).
    a: Option<DeviceArray>,
    /// Digital low-pass buffer (BufferedTransfer).
    h: Option<Matrix>,
    /// Digital gradient accumulator (MixedPrecision).
    chi: Option<Matrix>,
    chi_transferred: Option<Matrix>,
    chi_accumulated: Option<Matrix>,
    transfer_every: usize,
    steps_since_transfer: usize,
    cursor: usize,
    transfer_events: u64,
    sweeps: u64,
}

impl Compound {
    pub fn new(
        kind: CompoundKind,
        params: &CompoundParams,
        device: &DeviceParams,
        rows: usize,
        cols: usize,
        stream: &mut RandomStream,
    ) -> Result<Self, SimError> {
        params.validate("compound")?;
        let w = DeviceArray::realize(device, rows, cols, &mut stream.derive(1))?;
        let needs_a = matches!(kind, CompoundKind::Transfer | CompoundKind::BufferedTransfer);
        let a = if needs_a {
            let mut a_params = device.clone();
            if a_params.kind == DeviceKind::SoftBoundsReference && params.a_reference_symmetry {
                a_params.reference_symmetry = true;
            }
            let mut arr = DeviceArray::realize(&a_params, rows, cols, &mut stream.derive(2))?;
            arr.reset_to_rest();
            Some(arr)
        } else {
            None
        };
        let h = matches!(kind, CompoundKind::BufferedTransfer).then(|| Matrix::zeros(rows, cols));
        let (chi, chi_transferred, chi_accumulated) = if kind == CompoundKind::MixedPrecision {
            (
                Some(Matrix::zeros(rows, cols)),
                Some(Matrix::zeros(rows, cols)),
                Some(Matrix::zeros(rows, cols)),
            )
        } else {
            (None, None, None)
        };
        let transfer_every = if params.transfer_every == 0 { cols } else { params.transfer_every };
        Ok(Self {
            kind,
            params: params.clone(),
            w,
            a,
            h,
            chi,
            chi_transferred,
            chi_accumulated,
            transfer_every,
            steps_since_transfer: 0,
            cursor: 0,
            transfer_events: 0,
            sweeps: 0,
        })
    }

    pub fn kind(&self) -> CompoundKind {
        self.kind
    }

    pub fn params(&self) -> &CompoundParams {
        &self.params
    }

    pub fn rows(&self) -> usize {
        self.w.rows()
    }

    pub fn cols(&self) -> usize {
        self.w.cols()
    }

    /// Effective W read weights for the MVMs.
    pub fn weights(&self) -> &Matrix {
        self.w.weights()
    }

    pub fn w_array(&self) -> &DeviceArray {
        &self.w
    }

    pub fn w_array_mut(&mut self) -> &mut DeviceArray {
        &mut self.w
    }

    pub fn a_array(&self) -> Option<&DeviceArray> {
        self.a.as_ref()
    }

    pub fn a_array_mut(&mut self) -> Option<&mut DeviceArray> {
        self.a.as_mut()
    }

    pub fn h_buffer(&self) -> Option<&Matrix> {
        self.h.as_ref()
    }

    pub fn chi_buffer(&self) -> Option<&Matrix> {
        self.chi.as_ref()
    }

    pub fn chi_transferred(&self) -> Option<&Matrix> {
        self.chi_transferred.as_ref()
    }

    pub fn chi_accumulated(&self) -> Option<&Matrix> {
        self.chi_accumulated.as_ref()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn transfer_events(&self) -> u64 {
        self.transfer_events
    }

    /// Completed round-robin sweeps over all read lines.
    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn transfer_every(&self) -> usize {
        self.transfer_every
    }

    /// One rank-1 training update: `E[delta W_eff] ~ -lr d x^T` routed through
    /// the compound. `transfer_io` is the forward MVM configuration used for
    /// transfer reads of A.
    pub fn step(
        &mut self,
        x: &[f64],
        d: &[f64],
        lr: f64,
        up: &UpdateParams,
        transfer_io: &IoParams,
        stream: &mut RandomStream,
    ) -> Result<(), SimError> {
        match self.kind {
            CompoundKind::Single => pulsed_outer_update(&mut self.w, x, d, lr, up, stream),
            CompoundKind::MixedPrecision => self.mp_step(x, d, lr, stream),
            CompoundKind::Transfer | CompoundKind::BufferedTransfer => {
                self.transfer_step(x, d, lr, up, transfer_io, stream)
            }
        }
    }

    fn mp_step(
        &mut self,
        x: &[f64],
        d: &[f64],
        lr: f64,
        stream: &mut RandomStream,
    ) -> Result<(), SimError> {
        if x.len() != self.w.cols() || d.len() != self.w.rows() {
            return Err(SimError::DimensionMismatch("mp_step".into()));
        }
        let tau = self.params.threshold * self.w.params().dw_min;
        let chi = self.chi.as_mut().expect("mixed-precision state");
        let transferred = self.chi_transferred.as_mut().expect("mixed-precision state");
        let accumulated = self.chi_accumulated.as_mut().expect("mixed-precision state");
        for i in 0..self.w.rows() {
            for j in 0..self.w.cols() {
                let upd = -lr * d[i] * x[j];
                if upd != 0.0 {
                    chi.set(i, j, chi.get(i, j) + upd);
                    accumulated.set(i, j, accumulated.get(i, j) + upd);
                }
                let v = chi.get(i, j);
                if v.abs() >= tau {
                    let n = (v.abs() / tau).floor();
                    let dir = if v > 0.0 { PulseDirection::Up } else { PulseDirection::Down };
                    for _ in 0..n as u64 {
                        self.w.pulse(i, j, dir, stream);
                    }
                    let moved = n * tau * v.signum();
                    chi.set(i, j, v - moved);
                    transferred.set(i, j, transferred.get(i, j) + moved);
                }
            }
        }
        Ok(())
    }

    fn transfer_step(
        &mut self,
        x: &[f64],
        d: &[f64],
        _lr: f64,
        up: &UpdateParams,
        transfer_io: &IoParams,
        stream: &mut RandomStream,
    ) -> Result<(), SimError> {
        {
            let a = self.a.as_mut().expect("transfer state");
            pulsed_outer_update(a, x, d, self.params.fast_lr, up, stream)?;
        }
        self.steps_since_transfer += 1;
        while self.steps_since_transfer >= self.transfer_every {
            self.steps_since_transfer -= self.transfer_every;
            for _ in 0..self.params.rows_per_transfer {
                self.transfer_one_line(up, transfer_io, stream)?;
            }
        }
        Ok(())
    }

    /// Read one line of A with a one-hot input through the (non-ideal)
    /// forward pass and move the result toward W.
    fn transfer_one_line(
        &mut self,
        up: &UpdateParams,
        transfer_io: &IoParams,
        stream: &mut RandomStream,
    ) -> Result<(), SimError> {
        let cols = self.w.cols();
        let r = self.cursor;
        self.cursor = (self.cursor + 1) % cols;
        if self.cursor == 0 {
            self.sweeps += 1;
        }
        self.transfer_events += 1;

        let mut one_hot = vec![0.0; cols];
        one_hot[r] = 1.0;
        let read = {
            let a = self.a.as_ref().expect("transfer state");
            analog_forward(WeightsView::Normal(a.weights()), &one_hot, transfer_io, stream)?
        };

        match self.kind {
            CompoundKind::Transfer => {
                // W column r gets a pulsed update proportional to the read.
                let neg_read: Vec<f64> = read.iter().map(|v| -v).collect();
                pulsed_outer_update(
                    &mut self.w,
                    &one_hot,
                    &neg_read,
                    self.params.transfer_lr,
                    up,
                    stream,
                )?;
            }
            CompoundKind::BufferedTransfer => {
                let granularity = self.params.auto_granularity * self.w.params().dw_min;
                let h = self.h.as_mut().expect("buffered state");
                for i in 0..self.w.rows() {
                    let v = h.get(i, r) + read[i];
                    if v.abs() >= granularity {
                        let n = (v.abs() / granularity).floor();
                        let dir = if v > 0.0 { PulseDirection::Up } else { PulseDirection::Down };
                        for _ in 0..n as u64 {
                            self.w.pulse(i, r, dir, stream);
                        }
                        h.set(i, r, v - n * granularity * v.signum());
                    } else {
                        h.set(i, r, v);
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }
}
