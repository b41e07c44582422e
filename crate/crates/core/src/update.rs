//! Stochastic pulse-train outer-product update: coincidence pulsing with
//! update management (word/bit-line load balancing) and dynamic pulse-train
//! length selection.

use serde::{Deserialize, Serialize};

use crate::device::{DeviceArray, PulseDirection};
use crate::error::SimError;
use crate::num::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    #[default]
    StochasticCompressed,
    DeterministicImplicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateParams {
    /// Desired (maximal) pulse-train length.
    pub desired_bl: usize,
    pub pulse_type: PulseKind,
    /// Dynamic selection of the pulse-train length.
    pub update_bl_management: bool,
    /// Rescale row/column pulse probabilities to balance |x| and |d|.
    pub update_management: bool,
    /// Quantization bin width for x / d under DeterministicImplicit (0 = off).
    pub x_res_implicit: f64,
    pub d_res_implicit: f64,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self {
            desired_bl: 31,
            pulse_type: PulseKind::StochasticCompressed,
            update_bl_management: true,
            update_management: true,
            x_res_implicit: 0.0,
            d_res_implicit: 0.0,
        }
    }
}

impl UpdateParams {
    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        if self.desired_bl == 0 {
            return Err(SimError::config(&format!("{path}.desired_bl"), "must be >= 1"));
        }
        if self.desired_bl > 63 {
            return Err(SimError::config(
                &format!("{path}.desired_bl"),
                "pulse trains longer than 63 are not supported",
            ));
        }
        if self.x_res_implicit < 0.0 || self.d_res_implicit < 0.0 {
            return Err(SimError::config(&format!("{path}.x/d_res_implicit"), "must be >= 0"));
        }
        Ok(())
    }
}

/// Row/column pulse probabilities and the chosen train length, such that
/// `bl * px_j * pd_i * dw_min = lr * |x_j| * |d_i|` when feasible.
#[derive(Debug, Clone)]
pub struct PulseProbabilities {
    pub px: Vec<f64>,
    pub pd: Vec<f64>,
    pub bl: usize,
}

pub fn pulse_probabilities(
    x: &[f64],
    d: &[f64],
    lr: f64,
    dw_min: f64,
    up: &UpdateParams,
) -> PulseProbabilities {
    debug_assert!(dw_min > 0.0);
    let mx = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let md = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if lr <= 0.0 || mx == 0.0 || md == 0.0 {
        return PulseProbabilities { px: vec![0.0; x.len()], pd: vec![0.0; d.len()], bl: 0 };
    }
    let max_update = lr * mx * md;
    let bl = if up.update_bl_management {
        ((max_update / dw_min).ceil() as usize).clamp(1, up.desired_bl)
    } else {
        up.desired_bl
    };
    // bl * (|x|/x0) * (|d|/d0) * dw_min = lr |x||d|  =>  x0*d0 = bl*dw_min/lr.
    let total = bl as f64 * dw_min / lr;
    let (x0, d0) = if up.update_management {
        // Balance the peak probabilities on word and bit lines.
        let s = (total).sqrt();
        let ratio = (mx / md).sqrt();
        (s * ratio, s / ratio)
    } else {
        (total.sqrt(), total.sqrt())
    };
    let px = x.iter().map(|v| (v.abs() / x0).min(1.0)).collect();
    let pd = d.iter().map(|v| (v.abs() / d0).min(1.0)).collect();
    PulseProbabilities { px, pd, bl }
}

fn quantize_magnitude(v: f64, res: f64) -> f64 {
    if res <= 0.0 {
        v
    } else {
        (v / res).round() * res
    }
}

/// Parallel outer-product update: `E[delta W] = -lr * d x^T`, realized with at
/// most `bl` coincidence pulses per crosspoint. Signs map to pulse direction
/// via `-sign(x_j d_i)`.
pub fn pulsed_outer_update(
    dev: &mut DeviceArray,
    x: &[f64],
    d: &[f64],
    lr: f64,
    up: &UpdateParams,
    stream: &mut RandomStream,
) -> Result<(), SimError> {
    if x.len() != dev.cols() || d.len() != dev.rows() {
        return Err(SimError::DimensionMismatch(format!(
            "pulsed_outer_update: x {} d {} vs tile {}x{}",
            x.len(),
            d.len(),
            dev.rows(),
            dev.cols()
        )));
    }
    let dw_min = dev.params().dw_min;
    match up.pulse_type {
        PulseKind::StochasticCompressed => {
            let probs = pulse_probabilities(x, d, lr, dw_min, up);
            if probs.bl == 0 {
                return Ok(());
            }
            let x_masks: Vec<u64> =
                probs.px.iter().map(|&p| stream.bernoulli_mask(probs.bl, p)).collect();
            let d_masks: Vec<u64> =
                probs.pd.iter().map(|&p| stream.bernoulli_mask(probs.bl, p)).collect();
            for i in 0..dev.rows() {
                if d_masks[i] == 0 {
                    continue;
                }
                for j in 0..dev.cols() {
                    let n = (x_masks[j] & d_masks[i]).count_ones();
                    if n == 0 {
                        continue;
                    }
                    let dir = if x[j] * d[i] > 0.0 {
                        PulseDirection::Down
                    } else {
                        PulseDirection::Up
                    };
                    for _ in 0..n {
                        dev.pulse(i, j, dir, stream);
                    }
                }
            }
        }
        PulseKind::DeterministicImplicit => {
            let xq: Vec<f64> =
                x.iter().map(|&v| quantize_magnitude(v, up.x_res_implicit)).collect();
            let dq: Vec<f64> =
                d.iter().map(|&v| quantize_magnitude(v, up.d_res_implicit)).collect();
            let probs = pulse_probabilities(&xq, &dq, lr, dw_min, up);
            if probs.bl == 0 {
                return Ok(());
            }
            for i in 0..dev.rows() {
                for j in 0..dev.cols() {
                    let expected = probs.bl as f64 * probs.px[j] * probs.pd[i];
                    // Ties round half away from zero.
                    let n = (expected.abs() + 0.5).floor() as u64;
                    if n == 0 {
                        continue;
                    }
                    let dir = if xq[j] * dq[i] > 0.0 {
                        PulseDirection::Down
                    } else {
                        PulseDirection::Up
                    };
                    for _ in 0..n {
                        dev.pulse(i, j, dir, stream);
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{DeviceKind, DeviceParams};
    use crate::num::Matrix;

    fn ideal_array(dw_min: f64, rows: usize, cols: usize) -> DeviceArray {
        let params = DeviceParams::ideal(DeviceKind::ConstantStep, dw_min);
        let mut s = RandomStream::new(0, 0);
        DeviceArray::realize(&params, rows, cols, &mut s).unwrap()
    }

    #[test]
    fn zero_inputs_give_no_pulses() {
        let mut dev = ideal_array(0.01, 4, 4);
        let mut s = RandomStream::new(1, 0);
        pulsed_outer_update(&mut dev, &[0.0; 4], &[1.0; 4], 0.1, &UpdateParams::default(), &mut s)
            .unwrap();
        pulsed_outer_update(&mut dev, &[1.0; 4], &[0.0; 4], 0.1, &UpdateParams::default(), &mut s)
            .unwrap();
        assert_eq!(dev.pulse_count(), 0);
        assert_eq!(dev.weights().max_abs(), 0.0);
    }

    #[test]
    fn saturation_probabilities_are_one() {
        // lr * |x| * |d| = bl * dw_min at the boundary -> px = pd = 1.
        let up = UpdateParams { update_bl_management: false, ..UpdateParams::default() };
        let p = pulse_probabilities(&[1.0], &[1.0], 31.0 * 0.01, 0.01, &up);
        assert_eq!(p.bl, 31);
        assert!((p.px[0] - 1.0).abs() < 1e-12);
        assert!((p.pd[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn update_management_is_scale_invariant() {
        let up = UpdateParams::default();
        let x = [0.8, -0.2, 0.5];
        let d = [0.1, -0.9];
        let a = pulse_probabilities(&x, &d, 0.05, 0.001, &up);
        let xs: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        let ds: Vec<f64> = d.iter().map(|v| v * 0.1).collect();
        let b = pulse_probabilities(&xs, &ds, 0.05, 0.001, &up);
        assert_eq!(a.bl, b.bl);
        for i in 0..d.len() {
            for j in 0..x.len() {
                let pa = a.px[j] * a.pd[i];
                let pb = b.px[j] * b.pd[i];
                assert!((pa - pb).abs() < 1e-12, "coincidence probability changed");
            }
        }
        // And with management the individual probabilities match too.
        for j in 0..x.len() {
            assert!((a.px[j] - b.px[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_coincidences_match_exhaustive_enumeration() {
        // BL = 4: enumerate all 2^4 x 2^4 mask pairs with their probabilities
        // and compare the coincidence expectation against bl*px*pd.
        let bl = 4usize;
        for &px in &[0.0f64, 0.25, 0.5, 0.75, 1.0] {
            for &pd in &[0.0f64, 0.3, 1.0] {
                let mut expectation = 0.0;
                for mx in 0u64..16 {
                    for md in 0u64..16 {
                        let ones_x = mx.count_ones() as f64;
                        let ones_d = md.count_ones() as f64;
                        let prob = px.powf(ones_x)
                            * (1.0 - px).powf(bl as f64 - ones_x)
                            * pd.powf(ones_d)
                            * (1.0 - pd).powf(bl as f64 - ones_d);
                        expectation += prob * (mx & md).count_ones() as f64;
                    }
                }
                let analytic = bl as f64 * px * pd;
                assert!(
                    (expectation - analytic).abs() < 1e-9,
                    "px={px} pd={pd}: {expectation} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn single_crosspoint_half_step_expectation() {
        // lr*|x*d| = 0.5*dw_min: mean weight change over 1e4 trials within 5%.
        let dw_min = 0.01;
        let up = UpdateParams::default();
        let mut s = RandomStream::new(7, 0);
        let trials = 10_000;
        let mut sum = 0.0;
        let mut dev = ideal_array(dw_min, 1, 1);
        for _ in 0..trials {
            dev.set_raw_weights(&Matrix::zeros(1, 1)).unwrap();
            pulsed_outer_update(&mut dev, &[1.0], &[-0.5 * dw_min], 1.0, &up, &mut s).unwrap();
            sum += dev.weights().get(0, 0);
        }
        let mean = sum / trials as f64;
        let expected = 0.5 * dw_min; // -lr*d*x = +0.5 dw_min
        assert!(
            ((mean - expected) / expected).abs() < 0.05,
            "mean {mean} vs expected {expected}"
        );
    }

    #[test]
    fn deterministic_pulses_are_reproducible() {
        let up = UpdateParams::default();
        let run = |seed: u64| {
            let mut dev = ideal_array(0.001, 6, 6);
            let mut s = RandomStream::new(seed, 0);
            let x: Vec<f64> = (0..6).map(|_| s.uniform() * 2.0 - 1.0).collect();
            let d: Vec<f64> = (0..6).map(|_| s.uniform() * 2.0 - 1.0).collect();
            pulsed_outer_update(&mut dev, &x, &d, 0.05, &up, &mut s).unwrap();
            dev.weights().clone()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn update_saturation_bound() {
        // |delta w| <= desired_bl * step, even for absurd learning rates.
        let mut dev = ideal_array(0.01, 3, 3);
        let mut s = RandomStream::new(3, 0);
        let up = UpdateParams::default();
        pulsed_outer_update(&mut dev, &[1.0; 3], &[1e6; 3], 1.0, &up, &mut s).unwrap();
        assert!(dev.weights().max_abs() <= 31.0 * 0.01 + 1e-12);
    }

    #[test]
    fn deterministic_implicit_matches_expectation_exactly() {
        let dw_min = 0.001;
        let mut dev = ideal_array(dw_min, 2, 2);
        let up = UpdateParams {
            pulse_type: PulseKind::DeterministicImplicit,
            update_bl_management: false,
            update_management: false,
            ..UpdateParams::default()
        };
        let mut s = RandomStream::new(4, 0);
        let x = [1.0, -0.5];
        let d = [-0.4, 0.8];
        let lr = 0.01;
        pulsed_outer_update(&mut dev, &x, &d, lr, &up, &mut s).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let target = -lr * d[i] * x[j];
                let n = (target.abs() / dw_min + 0.5).floor();
                let expected = n * dw_min * target.signum();
                let got = dev.weights().get(i, j);
                assert!(
                    (got - expected).abs() < 1e-12,
                    "({i},{j}): got {got}, expected {expected}"
                );
            }
        }
    }
}
