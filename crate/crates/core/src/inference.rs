//! Phenomenological long-term weight corruption for inference: conductance
//! conversion, programming error, power-law drift, low-frequency read noise,
//! and global drift compensation.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::mvm::{analog_forward, IoParams, WeightsView};
use crate::num::{Matrix, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModelKind {
    #[default]
    PcmLike,
    Custom,
}

/// Phenomenological noise model acting on conductance pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseModelKind,
    /// Maximum conductance in uS; weight 1.0 maps to g_max.
    pub g_max: f64,
    /// Programming-error std sigma(g) in uS: polynomial in g/g_max.
    pub prog_coeffs: Vec<f64>,
    /// Mean drift exponent.
    pub nu_mean: f64,
    /// Device-to-device std of the drift exponent.
    pub nu_std: f64,
    /// Scale of the low-frequency read noise (relative to conductance).
    pub read_noise_scale: f64,
    /// Drift reference time in seconds.
    pub t0: f64,
    /// Enable the model at all (disabled = exact programming, no drift).
    pub enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        // PCM-like provisional values; the paper cites the calibrated model
        // without printing coefficients, so these ship as editable config.
        Self {
            kind: NoiseModelKind::PcmLike,
            g_max: 25.0,
            prog_coeffs: vec![0.26, 1.97, -1.17],
            nu_mean: 0.05,
            nu_std: 0.01,
            read_noise_scale: 0.012,
            t0: 20.0,
            enabled: true,
        }
    }
}

/// Read-noise reference time in seconds (a single-MVM read duration).
const T_READ: f64 = 250.0e-9;

impl NoiseModel {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        if self.g_max <= 0.0 {
            return Err(SimError::config(&format!("{path}.g_max"), "must be > 0"));
        }
        if self.t0 <= 0.0 {
            return Err(SimError::config(&format!("{path}.t0"), "must be > 0"));
        }
        if self.nu_std < 0.0 || self.read_noise_scale < 0.0 {
            return Err(SimError::config(
                &format!("{path}.nu_std/read_noise_scale"),
                "must be >= 0",
            ));
        }
        // sigma(g) must be non-negative over the whole conductance range.
        for k in 0..=100 {
            let g = self.g_max * k as f64 / 100.0;
            if self.prog_sigma(g) < 0.0 {
                return Err(SimError::config(
                    &format!("{path}.prog_coeffs"),
                    format!("sigma({g:.2} uS) < 0"),
                ));
            }
        }
        Ok(())
    }

    /// Programming-error std in uS at target conductance `g` (uS).
    pub fn prog_sigma(&self, g: f64) -> f64 {
        let x = g / self.g_max;
        let mut sigma = 0.0;
        let mut xp = 1.0;
        for c in &self.prog_coeffs {
            sigma += c * xp;
            xp *= x;
        }
        sigma
    }

    /// Read-noise std in uS at conductance `g` after time `t` seconds.
    pub fn read_noise_sigma(&self, g: f64, t: f64) -> f64 {
        if self.read_noise_scale == 0.0 || t <= 0.0 {
            return 0.0;
        }
        self.read_noise_scale * g * ((t + T_READ) / T_READ).ln().sqrt()
    }
}

/// Split analog weights in [-1, 1] into a non-negative conductance pair.
pub fn to_conductances(w: &Matrix, g_max: f64) -> Result<(Matrix, Matrix), SimError> {
    if w.max_abs() > 1.0 + 1e-12 {
        return Err(SimError::invalid("weights", "must lie in [-1, 1]"));
    }
    let g_plus = w.map(|v| g_max * v.max(0.0));
    let g_minus = w.map(|v| g_max * (-v).max(0.0));
    Ok((g_plus, g_minus))
}

pub fn conductances_to_weights(g_plus: &Matrix, g_minus: &Matrix, g_max: f64) -> Matrix {
    Matrix::from_fn(g_plus.rows(), g_plus.cols(), |i, j| {
        (g_plus.get(i, j) - g_minus.get(i, j)) / g_max
    })
}

/// Mean absolute one-hot readout over all inputs; the drift-compensation
/// strength measure.
pub fn readout_strength(
    w: &Matrix,
    io: &IoParams,
    stream: &mut RandomStream,
) -> Result<f64, SimError> {
    let cols = w.cols();
    let mut one_hot = vec![0.0; cols];
    let mut total = 0.0;
    for r in 0..cols {
        one_hot[r] = 1.0;
        let y = analog_forward(WeightsView::Normal(w), &one_hot, io, stream)?;
        one_hot[r] = 0.0;
        total += y.iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(total / (cols * w.rows()) as f64)
}

/// One tile's programmed state: conductance pairs, per-device drift
/// exponents, and the drift-compensation baseline.
#[derive(Debug, Clone)]
pub struct ProgrammedTile {
    g_plus: Matrix,
    g_minus: Matrix,
    nu_plus: Matrix,
    nu_minus: Matrix,
    s0: f64,
    g_max: f64,
}

impl ProgrammedTile {
    pub fn baseline(&self) -> f64 {
        self.s0
    }

    pub fn conductances(&self) -> (&Matrix, &Matrix) {
        (&self.g_plus, &self.g_minus)
    }

    /// Programmed weights (before drift).
    pub fn weights(&self) -> Matrix {
        conductances_to_weights(&self.g_plus, &self.g_minus, self.g_max)
    }
}

fn map_with(m: &Matrix, mut f: impl FnMut(f64) -> f64) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| f(m.get(i, j)))
}

fn program_matrix(g_target: &Matrix, model: &NoiseModel, stream: &mut RandomStream) -> Matrix {
    map_with(g_target, |g| {
        let sigma = model.prog_sigma(g);
        if sigma <= 0.0 {
            g
        } else {
            (g + sigma * stream.normal()).max(0.0)
        }
    })
}

/// Program analog weights onto conductance pairs with Gaussian programming
/// error, draw per-device drift exponents, and record the compensation
/// baseline readout.
pub fn program(
    weights: &Matrix,
    model: &NoiseModel,
    io: &IoParams,
    stream: &mut RandomStream,
) -> Result<ProgrammedTile, SimError> {
    let (gt_plus, gt_minus) = to_conductances(weights, model.g_max)?;
    let (g_plus, g_minus) = if model.enabled {
        (program_matrix(&gt_plus, model, stream), program_matrix(&gt_minus, model, stream))
    } else {
        (gt_plus, gt_minus)
    };
    let draw_nu = |stream: &mut RandomStream| -> f64 {
        if !model.enabled {
            return 0.0;
        }
        let nu = model.nu_mean + model.nu_std * stream.normal();
        nu.clamp(0.0, 0.2)
    };
    let nu_plus = map_with(&g_plus, |_| draw_nu(stream));
    let nu_minus = map_with(&g_minus, |_| draw_nu(stream));
    let mut tile = ProgrammedTile {
        g_plus,
        g_minus,
        nu_plus,
        nu_minus,
        s0: 0.0,
        g_max: model.g_max,
    };
    tile.s0 = readout_strength(&tile.weights(), io, stream)?;
    Ok(tile)
}

/// Drift the programmed state to inference time `t_inf` seconds and apply
/// low-frequency read noise (resampled once per evaluation time). Returns the
/// corrupted weights; the programmed state itself is unchanged so every time
/// point drifts from the same origin.
pub fn drift_to(
    tile: &ProgrammedTile,
    t_inf: f64,
    model: &NoiseModel,
    stream: &mut RandomStream,
) -> Result<Matrix, SimError> {
    if t_inf < 0.0 {
        return Err(SimError::invalid("t_inf", "must be >= 0"));
    }
    if !model.enabled {
        return Ok(tile.weights());
    }
    let drift_one = |g: &Matrix, nu: &Matrix, stream: &mut RandomStream| -> Matrix {
        Matrix::from_fn(g.rows(), g.cols(), |i, j| {
            let g0 = g.get(i, j);
            let mut gt = if t_inf > model.t0 {
                g0 * (t_inf / model.t0).powf(-nu.get(i, j))
            } else {
                g0
            };
            let sigma = model.read_noise_sigma(g0, t_inf);
            if sigma > 0.0 {
                gt += sigma * stream.normal();
            }
            gt.max(0.0)
        })
    };
    let gp = drift_one(&tile.g_plus, &tile.nu_plus, stream);
    let gm = drift_one(&tile.g_minus, &tile.nu_minus, stream);
    Ok(conductances_to_weights(&gp, &gm, tile.g_max))
}

/// Global drift compensation factor gamma = s0 / s_t.
pub fn compensation_factor(
    drifted_weights: &Matrix,
    s0: f64,
    io: &IoParams,
    stream: &mut RandomStream,
) -> Result<f64, SimError> {
    let s_t = readout_strength(drifted_weights, io, stream)?;
    if s_t < 1e-9 {
        return Err(SimError::DegenerateInput(format!(
            "drift-compensation readout is degenerate (s_t = {s_t})"
        )));
    }
    Ok(s0 / s_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perfect_io() -> IoParams {
        IoParams { is_perfect: true, ..IoParams::default() }
    }

    #[test]
    fn conductance_split_worked_example() {
        let w = Matrix::from_vec(1, 2, vec![-0.5, 1.0]).unwrap();
        let (gp, gm) = to_conductances(&w, 25.0).unwrap();
        assert_eq!(gp.data(), &[0.0, 25.0]);
        assert_eq!(gm.data(), &[12.5, 0.0]);
    }

    #[test]
    fn conductance_round_trip_identity() {
        let mut s = RandomStream::new(1, 0);
        let w = Matrix::from_fn(5, 5, |_, _| s.uniform() * 2.0 - 1.0);
        let (gp, gm) = to_conductances(&w, 25.0).unwrap();
        let back = conductances_to_weights(&gp, &gm, 25.0);
        for (a, b) in w.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_weight_both_zero() {
        let (gp, gm) = to_conductances(&Matrix::zeros(2, 2), 25.0).unwrap();
        assert_eq!(gp.max_abs(), 0.0);
        assert_eq!(gm.max_abs(), 0.0);
    }

    #[test]
    fn out_of_range_weights_rejected() {
        let w = Matrix::from_vec(1, 1, vec![1.5]).unwrap();
        assert!(to_conductances(&w, 25.0).is_err());
    }

    #[test]
    fn exact_programming_when_sigma_zero() {
        let mut model = NoiseModel::default();
        model.prog_coeffs = vec![0.0];
        model.nu_std = 0.0;
        let mut s = RandomStream::new(2, 0);
        let w = Matrix::from_fn(3, 3, |i, j| 0.1 * (i as f64 - j as f64));
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        for (a, b) in w.data().iter().zip(tile.weights().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn programming_noise_statistics() {
        // ghat = 10 uS with sigma(10) = 1 uS: empirical std within 2% at 1e5
        // draws, no negative conductances.
        let mut model = NoiseModel::default();
        model.g_max = 25.0;
        // sigma(g) = 2.5 * (g/25) -> sigma(10) = 1.
        model.prog_coeffs = vec![0.0, 2.5];
        let mut s = RandomStream::new(3, 0);
        let n = 100_000;
        let target = Matrix::from_fn(1, n, |_, _| 10.0);
        let programmed = program_matrix(&target, &model, &mut s);
        let mean = programmed.data().iter().sum::<f64>() / n as f64;
        let var =
            programmed.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        assert!((std - 1.0).abs() < 0.02, "std {std}");
        assert!(programmed.data().iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn programming_spread_grows_with_target() {
        let model = NoiseModel::default();
        assert!(model.prog_sigma(20.0) > model.prog_sigma(5.0));
        assert!(model.prog_sigma(0.0) >= 0.0);
        model.validate("noise_model").unwrap();
    }

    #[test]
    fn drift_closed_form() {
        // g = 10 uS, nu = 0.05, t = 100 s, t0 = 1 s -> 7.9433 uS.
        let mut model = NoiseModel::default();
        model.prog_coeffs = vec![0.0];
        model.nu_mean = 0.05;
        model.nu_std = 0.0;
        model.read_noise_scale = 0.0;
        model.t0 = 1.0;
        let mut s = RandomStream::new(4, 0);
        let w = Matrix::from_vec(1, 1, vec![10.0 / model.g_max]).unwrap();
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        let drifted = drift_to(&tile, 100.0, &model, &mut s).unwrap();
        let g = drifted.get(0, 0) * model.g_max;
        assert!((g - 7.943282347).abs() < 1e-6, "g {g}");
    }

    #[test]
    fn no_drift_when_nu_zero() {
        let mut model = NoiseModel::default();
        model.prog_coeffs = vec![0.0];
        model.nu_mean = 0.0;
        model.nu_std = 0.0;
        model.read_noise_scale = 0.0;
        let mut s = RandomStream::new(5, 0);
        let w = Matrix::from_fn(2, 2, |_, _| 0.5);
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        let drifted = drift_to(&tile, 1e6, &model, &mut s).unwrap();
        for (a, b) in tile.weights().data().iter().zip(drifted.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn no_drift_before_t0() {
        let mut model = NoiseModel::default();
        model.prog_coeffs = vec![0.0];
        model.read_noise_scale = 0.0;
        model.nu_std = 0.0;
        let mut s = RandomStream::new(6, 0);
        let w = Matrix::from_fn(1, 1, |_, _| 0.7);
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        let drifted = drift_to(&tile, model.t0 * 0.5, &model, &mut s).unwrap();
        assert_eq!(drifted.get(0, 0), 0.7);
    }

    #[test]
    fn mean_conductance_non_increasing_over_time_grid() {
        let mut model = NoiseModel::default();
        model.read_noise_scale = 0.0;
        model.prog_coeffs = vec![0.0];
        let mut s = RandomStream::new(7, 0);
        let w = Matrix::from_fn(4, 4, |_, _| 0.6);
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        let mut last = f64::INFINITY;
        for t in [60.0, 3600.0, 86400.0, 31_536_000.0] {
            let drifted = drift_to(&tile, t, &model, &mut s).unwrap();
            let mean = drifted.data().iter().sum::<f64>() / 16.0;
            assert!(mean <= last + 1e-12, "not monotone at t={t}");
            last = mean;
        }
    }

    #[test]
    fn compensation_is_one_right_after_programming() {
        let mut model = NoiseModel::default();
        model.prog_coeffs = vec![0.0];
        model.nu_std = 0.0;
        model.read_noise_scale = 0.0;
        let mut s = RandomStream::new(8, 0);
        let w = Matrix::from_fn(3, 3, |i, j| 0.2 * (i as f64 + 1.0) - 0.15 * j as f64);
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        let gamma =
            compensation_factor(&tile.weights(), tile.baseline(), &perfect_io(), &mut s).unwrap();
        assert!((gamma - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compensation_recovers_common_nu_drift() {
        let mut model = NoiseModel::default();
        model.prog_coeffs = vec![0.0];
        model.nu_mean = 0.06;
        model.nu_std = 0.0;
        model.read_noise_scale = 0.0;
        model.t0 = 1.0;
        let mut s = RandomStream::new(9, 0);
        let w = Matrix::from_fn(4, 6, |i, j| 0.08 * (i as f64 + 1.0) * if j % 2 == 0 { 1.0 } else { -1.0 });
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        let t = 1000.0;
        let drifted = drift_to(&tile, t, &model, &mut s).unwrap();
        let gamma =
            compensation_factor(&drifted, tile.baseline(), &perfect_io(), &mut s).unwrap();
        let expected = (t / model.t0).powf(model.nu_mean);
        assert!((gamma - expected).abs() / expected < 0.01, "gamma {gamma} vs {expected}");
        // Compensated outputs match the baseline within 2%.
        let x = vec![0.5; 6];
        let y0 = crate::num::matmul(&tile.weights(), &x).unwrap();
        let yt = crate::num::matmul(&drifted, &x).unwrap();
        for (a, b) in y0.iter().zip(&yt) {
            let recovered = gamma * b;
            assert!((recovered - a).abs() <= 0.02 * a.abs().max(1e-9), "{recovered} vs {a}");
        }
    }

    #[test]
    fn all_zero_weights_degenerate_compensation() {
        let mut model = NoiseModel::default();
        model.prog_coeffs = vec![0.0];
        let mut s = RandomStream::new(10, 0);
        let w = Matrix::zeros(2, 2);
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        assert!(
            compensation_factor(&tile.weights(), tile.baseline(), &perfect_io(), &mut s).is_err()
        );
    }

    #[test]
    fn conductances_never_negative_with_noise() {
        let model = NoiseModel::default();
        let mut s = RandomStream::new(11, 0);
        let w = Matrix::from_fn(8, 8, |_, _| (s.uniform() * 2.0 - 1.0) * 0.1);
        let tile = program(&w, &model, &perfect_io(), &mut s).unwrap();
        let (gp, gm) = tile.conductances();
        assert!(gp.data().iter().all(|&g| g >= 0.0));
        assert!(gm.data().iter().all(|&g| g >= 0.0));
        // After drift + read noise too.
        let _ = drift_to(&tile, 3600.0, &model, &mut s).unwrap();
    }
}
