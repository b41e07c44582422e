//! Least-squares fitting of device models to measured response traces.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::num::Matrix;

use super::{DeviceArray, DeviceKind, DeviceParams, PulseDirection};
use crate::num::RandomStream;

/// Pulse protocol of a measurement trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitProtocol {
    pub n_up: usize,
    pub n_down: usize,
    pub n_pairs: usize,
}

impl Default for FitProtocol {
    fn default() -> Self {
        Self { n_up: 200, n_down: 200, n_pairs: 100 }
    }
}

impl FitProtocol {
    pub fn directions(&self) -> Vec<PulseDirection> {
        super::standard_protocol(self.n_up, self.n_down, self.n_pairs)
    }

    pub fn len(&self) -> usize {
        self.n_up + self.n_down + 2 * self.n_pairs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Result of a device fit.
#[derive(Debug, Clone)]
pub struct DeviceFit {
    pub params: DeviceParams,
    /// RMS reconstruction residual in normalized weight units.
    pub residual_rms: f64,
    pub converged: bool,
    /// Conductance (uS) = offset + scale * normalized weight.
    pub g_offset: f64,
    pub g_scale: f64,
}

/// Noiseless trace of the model from the lower realized bound.
fn model_trace(params: &DeviceParams, protocol: &[PulseDirection]) -> Vec<f64> {
    let mut noiseless = params.clone();
    noiseless.dw_min_std = 0.0;
    noiseless.dw_min_dtod = 0.0;
    noiseless.w_max_std = 0.0;
    noiseless.w_min_std = 0.0;
    noiseless.reference_symmetry = false;
    let mut stream = RandomStream::new(0, 0);
    let mut array = DeviceArray::realize(&noiseless, 1, 1, &mut stream)
        .expect("candidate params validated before simulation");
    array
        .set_raw_weights(&Matrix::from_fn(1, 1, |_, _| noiseless.w_min))
        .expect("1x1");
    let mut trace = Vec::with_capacity(protocol.len());
    for &dir in protocol {
        array.pulse(0, 0, dir, &mut stream);
        trace.push(array.raw_weights().get(0, 0));
    }
    trace
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64).sqrt()
}

/// Parameter vector exposed to the optimizer for a given kind.
fn pack(params: &DeviceParams) -> Vec<f64> {
    let mut v = vec![params.dw_min, params.up_down, params.w_max, params.w_min];
    match params.kind {
        DeviceKind::LinearStep | DeviceKind::PowStep => v.push(params.gamma),
        DeviceKind::ExpStep => {
            v.push(params.c0);
            v.push(params.c1);
        }
        _ => {}
    }
    v
}

fn unpack(kind: DeviceKind, v: &[f64], base: &DeviceParams) -> DeviceParams {
    let mut p = base.clone();
    p.kind = kind;
    p.dw_min = v[0].max(1e-6);
    p.up_down = v[1].clamp(-0.95, 0.95);
    p.w_max = v[2].max(1e-3);
    p.w_min = v[3].min(-1e-3);
    match kind {
        DeviceKind::LinearStep | DeviceKind::PowStep => p.gamma = v[4],
        DeviceKind::ExpStep => {
            p.c0 = v[4].min(0.99);
            p.c1 = v[5];
        }
        _ => {}
    }
    p
}

/// Initial estimate from the up/down phases: regress the per-pulse increment
/// against the weight (SoftBounds-family traces are linear in w).
fn initial_guess(kind: DeviceKind, w: &[f64], protocol: &FitProtocol) -> DeviceParams {
    let mut params = DeviceParams::ideal(kind, 0.01);
    let fit_phase = |lo: usize, hi: usize| -> Option<(f64, f64)> {
        // Least squares of dw = a + b*w over the phase.
        let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in lo..hi.min(w.len()).saturating_sub(1) {
            let x = w[t];
            let y = w[t + 1] - w[t];
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            n += 1.0;
        }
        if n < 4.0 {
            return None;
        }
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-12 {
            return None;
        }
        let b = (n * sxy - sx * sy) / denom;
        let a = (sy - b * sx) / n;
        Some((a, b))
    };
    let up = fit_phase(0, protocol.n_up);
    let down = fit_phase(protocol.n_up, protocol.n_up + protocol.n_down);
    let w_max_obs = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w_min_obs = w.iter().cloned().fold(f64::INFINITY, f64::min);
    params.w_max = w_max_obs.max(1e-3);
    params.w_min = w_min_obs.min(-1e-3);
    let mut delta_up = 0.005;
    let mut delta_down = 0.005;
    if let Some((a, b)) = up {
        // dw = delta_up * (1 - w/bu): intercept a = delta_up, slope b = -delta_up/bu.
        delta_up = a.max(1e-6);
        if b < -1e-12 {
            params.w_max = (-a / b).max(w_max_obs * 0.9).max(1e-3);
        }
    }
    if let Some((a, b)) = down {
        // dw = -delta_down * (1 - w/bd): intercept -a = delta_down.
        delta_down = (-a).max(1e-6);
        if b < -1e-12 {
            params.w_min = (a / b).min(w_min_obs * 0.9).min(-1e-3);
        }
    }
    params.dw_min = 0.5 * (delta_up + delta_down);
    params.up_down = ((delta_up - delta_down) / (delta_up + delta_down)).clamp(-0.9, 0.9);
    if kind == DeviceKind::ExpStep {
        params.c0 = 0.3;
        params.c1 = 1.0;
    }
    if kind == DeviceKind::PowStep || kind == DeviceKind::LinearStep {
        params.gamma = 1.0;
    }
    params
}

/// Fit a device model to a measured conductance trace.
///
/// `trace_us` is the conductance in uS after each pulse of `protocol`. The
/// trace is normalized into weight units internally; the returned mapping is
/// `g = g_offset + g_scale * w`.
pub fn fit_device(
    trace_us: &[f64],
    protocol: &FitProtocol,
    kind: DeviceKind,
) -> Result<DeviceFit, SimError> {
    if trace_us.len() != protocol.len() {
        return Err(SimError::DimensionMismatch(format!(
            "trace length {} does not match protocol length {}",
            trace_us.len(),
            protocol.len()
        )));
    }
    match kind {
        DeviceKind::ConstantStep
        | DeviceKind::LinearStep
        | DeviceKind::SoftBounds
        | DeviceKind::SoftBoundsReference
        | DeviceKind::PowStep
        | DeviceKind::ExpStep => {}
        other => {
            return Err(SimError::Unsupported(format!("fitting {other:?} is not supported")));
        }
    }
    let g_max = trace_us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let g_min = trace_us.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(g_max - g_min).is_finite() || g_max - g_min < 1e-12 {
        return Err(SimError::DegenerateInput("constant or non-finite trace".into()));
    }
    let g_offset = 0.5 * (g_max + g_min);
    let g_scale = 0.5 * (g_max - g_min);
    let w: Vec<f64> = trace_us.iter().map(|g| (g - g_offset) / g_scale).collect();

    // Fit in the SoftBounds family for SoftBoundsReference; the reference is
    // set to the fitted symmetry point afterwards.
    let fit_kind = if kind == DeviceKind::SoftBoundsReference {
        DeviceKind::SoftBounds
    } else {
        kind
    };
    let directions = protocol.directions();
    let objective = |v: &[f64], base: &DeviceParams| -> f64 {
        let p = unpack(fit_kind, v, base);
        if p.validate("fit").is_err() {
            return f64::INFINITY;
        }
        rms(&model_trace(&p, &directions), &w)
    };

    let base = initial_guess(fit_kind, &w, protocol);
    let mut v = pack(&base);
    let mut best = objective(&v, &base);

    // Coordinate search with shrinking steps, then a final polish.
    let mut scales: Vec<f64> = v.iter().map(|x| x.abs().max(0.05) * 0.5).collect();
    for _round in 0..60 {
        let mut improved = false;
        for k in 0..v.len() {
            for dir in [-1.0, 1.0] {
                let mut cand = v.clone();
                cand[k] += dir * scales[k];
                let r = objective(&cand, &base);
                if r < best {
                    best = r;
                    v = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            for s in scales.iter_mut() {
                *s *= 0.5;
            }
            if scales.iter().all(|s| *s < 1e-6) {
                break;
            }
        }
    }

    let mut params = unpack(fit_kind, &v, &base);
    let converged = best.is_finite() && best < 0.25;
    if kind == DeviceKind::SoftBoundsReference {
        params.kind = DeviceKind::SoftBoundsReference;
        params.reference = super::symmetry_point(
            params.dw_min * (1.0 + params.up_down),
            params.dw_min * (1.0 - params.up_down),
            params.w_max,
            params.w_min,
        );
    }
    if !converged {
        return Err(SimError::FitNotConverged { residual: best });
    }
    Ok(DeviceFit { params, residual_rms: best, converged, g_offset, g_scale })
}
