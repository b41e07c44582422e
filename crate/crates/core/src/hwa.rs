//! Hardware-aware training transforms: per-mini-batch weight modifiers,
//! weight clipping and remapping, input-range learning, and post-training
//! input-range calibration.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::num::{Matrix, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModifierKind {
    #[default]
    None,
    Discretize,
    MultNormal,
    AddNormal,
    Poly,
    ProgNoise,
}

/// Weight-modifier settings (fresh perturbation per mini-batch).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModifierParams {
    #[serde(rename = "type")]
    pub kind: ModifierKind,
    pub std_dev: f64,
    /// Discretization resolution (bin width in weight units).
    pub res: f64,
    pub sto_round: bool,
    /// Drop-connect probability; composable with any type.
    pub pdrop: f64,
    /// Polynomial coefficients c0..cN for Poly / ProgNoise.
    pub coeffs: Vec<f64>,
    pub rel_to_actual_wmax: bool,
    pub assumed_wmax: f64,
    /// Draw independent noise per batch sample.
    pub per_batch_sample: bool,
    pub enable_during_test: bool,
}

impl Default for ModifierParams {
    fn default() -> Self {
        Self {
            kind: ModifierKind::None,
            std_dev: 0.0,
            res: 0.0,
            sto_round: false,
            pdrop: 0.0,
            coeffs: vec![1.0],
            rel_to_actual_wmax: true,
            assumed_wmax: 1.0,
            per_batch_sample: false,
            enable_during_test: false,
        }
    }
}

impl ModifierParams {
    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.pdrop) {
            return Err(SimError::config(&format!("{path}.pdrop"), "must be in [0, 1]"));
        }
        if self.kind == ModifierKind::Discretize && self.res <= 0.0 {
            return Err(SimError::config(&format!("{path}.res"), "must be > 0 for discretize"));
        }
        if self.std_dev < 0.0 {
            return Err(SimError::config(&format!("{path}.std_dev"), "must be >= 0"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.kind == ModifierKind::None && self.pdrop == 0.0
    }
}

/// Apply the configured weight perturbation; returns a fresh matrix.
pub fn modify_weights(w: &Matrix, p: &ModifierParams, stream: &mut RandomStream) -> Matrix {
    let mut out = w.clone();
    match p.kind {
        ModifierKind::None => {}
        ModifierKind::AddNormal => {
            for v in out.data_mut() {
                *v += p.std_dev * stream.normal();
            }
        }
        ModifierKind::MultNormal => {
            for v in out.data_mut() {
                *v *= 1.0 + p.std_dev * stream.normal();
            }
        }
        ModifierKind::Discretize => {
            for v in out.data_mut() {
                let dither = if p.sto_round { stream.uniform() - 0.5 } else { 0.0 };
                *v = (*v / p.res + dither + 0.5).floor() * p.res;
            }
        }
        ModifierKind::Poly | ModifierKind::ProgNoise => {
            let omega = if p.rel_to_actual_wmax { w.max_abs().max(1e-12) } else { p.assumed_wmax };
            for v in out.data_mut() {
                let a = v.abs() / omega;
                let mut poly = 0.0;
                let mut ap = 1.0;
                for c in &p.coeffs {
                    poly += c * ap;
                    ap *= a;
                }
                let sigma = p.std_dev * poly.max(0.0);
                let noisy = *v + sigma * stream.normal();
                *v = if p.kind == ModifierKind::ProgNoise {
                    // Programming to sign-separated conductances: the sign of a
                    // nonzero weight survives.
                    noisy.abs() * v.signum()
                } else {
                    noisy
                };
            }
        }
    }
    if p.pdrop > 0.0 {
        for v in out.data_mut() {
            if stream.uniform() < p.pdrop {
                *v = 0.0;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClipKind {
    #[default]
    None,
    FixedValue,
    LayerGaussian,
}

/// Weight clipping settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipParams {
    #[serde(rename = "type")]
    pub kind: ClipKind,
    /// Symmetric fixed clipping value; 0 disables the fixed clip under
    /// LayerGaussian.
    pub fixed_value: f64,
    /// LayerGaussian: clip at sigma times the std of the weight matrix.
    pub sigma: f64,
}

impl Default for ClipParams {
    fn default() -> Self {
        Self { kind: ClipKind::None, fixed_value: 1.0, sigma: 2.5 }
    }
}

impl ClipParams {
    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        if self.kind == ClipKind::FixedValue && self.fixed_value <= 0.0 {
            return Err(SimError::config(&format!("{path}.fixed_value"), "must be > 0"));
        }
        if self.kind == ClipKind::LayerGaussian && self.sigma <= 0.0 {
            return Err(SimError::config(&format!("{path}.sigma"), "must be > 0"));
        }
        Ok(())
    }
}

pub fn clip_weights(w: &mut Matrix, p: &ClipParams) {
    let bound = match p.kind {
        ClipKind::None => return,
        ClipKind::FixedValue => p.fixed_value,
        ClipKind::LayerGaussian => {
            let b = p.sigma * w.std();
            if p.fixed_value > 0.0 {
                b.min(p.fixed_value)
            } else {
                b
            }
        }
    };
    for v in w.data_mut() {
        *v = v.clamp(-bound, bound);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RemapKind {
    #[default]
    None,
    LayerwiseSymmetric,
    ChannelwiseSymmetric,
}

/// Weight remapping settings (analog weight vs digital output scales).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemapParams {
    #[serde(rename = "type")]
    pub kind: RemapKind,
    pub remapped_wmax: f64,
}

impl Default for RemapParams {
    fn default() -> Self {
        Self { kind: RemapKind::None, remapped_wmax: 1.0 }
    }
}

impl RemapParams {
    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        if self.remapped_wmax <= 0.0 {
            return Err(SimError::config(&format!("{path}.remapped_wmax"), "must be > 0"));
        }
        Ok(())
    }
}

/// Redistribute represented weights between analog weights and digital
/// scales: `scale' * w' = scale * w` exactly. `scales` has one entry per
/// output channel (matrix row) or a single entry for the whole tile.
pub fn remap_weights(w: &mut Matrix, scales: &mut [f64], p: &RemapParams) {
    match p.kind {
        RemapKind::None => {}
        RemapKind::LayerwiseSymmetric => {
            let m = w.max_abs();
            if m == 0.0 {
                return;
            }
            let ratio = m / p.remapped_wmax;
            for v in w.data_mut() {
                *v /= ratio;
            }
            for s in scales.iter_mut() {
                *s *= ratio;
            }
        }
        RemapKind::ChannelwiseSymmetric => {
            assert_eq!(scales.len(), w.rows(), "channelwise remap needs per-channel scales");
            for i in 0..w.rows() {
                let m = w.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                if m == 0.0 {
                    continue;
                }
                let ratio = m / p.remapped_wmax;
                for v in w.row_mut(i) {
                    *v /= ratio;
                }
                scales[i] *= ratio;
            }
        }
    }
}

/// Input-range learning settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputRangeParams {
    pub enabled: bool,
    /// Number of warm-up batches that initialize the range from data.
    pub init_from_data: usize,
    /// Warm-up sets the range toward init_std_alpha * std(inputs).
    pub init_std_alpha: f64,
    /// Tightening term added to the gradient when little clipping occurs.
    pub decay: f64,
    /// Tighten only when the clipped fraction is below 1 - this value.
    pub input_min_percentage: f64,
    /// Scale the range gradient by the current range.
    pub gradient_relative: bool,
    pub learning_rate_scale: f64,
}

impl Default for InputRangeParams {
    fn default() -> Self {
        Self {
            enabled: false,
            init_from_data: 100,
            init_std_alpha: 3.0,
            decay: 0.001,
            input_min_percentage: 0.95,
            gradient_relative: true,
            learning_rate_scale: 1.0,
        }
    }
}

impl InputRangeParams {
    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        if !(0.0 < self.input_min_percentage && self.input_min_percentage <= 1.0) {
            return Err(SimError::config(
                &format!("{path}.input_min_percentage"),
                "must be in (0, 1]",
            ));
        }
        if self.init_std_alpha <= 0.0 || self.learning_rate_scale <= 0.0 {
            return Err(SimError::config(
                &format!("{path}.init_std_alpha/learning_rate_scale"),
                "must be > 0",
            ));
        }
        Ok(())
    }
}

/// Learned per-tile input range state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRange {
    pub value: f64,
    batches_seen: usize,
}

/// Warm-up moving-average factor.
const EMA: f64 = 0.9;

impl InputRange {
    pub fn new(value: f64) -> Self {
        Self { value, batches_seen: 0 }
    }

    /// One training-batch update of the range. `inputs` and `grad_wrt_inputs`
    /// are the flattened batch of pre-clip tile inputs and the loss gradient
    /// at those inputs; `lr` is the layer learning rate.
    pub fn update(
        &mut self,
        inputs: &[f64],
        grad_wrt_inputs: &[f64],
        p: &InputRangeParams,
        lr: f64,
    ) {
        if !p.enabled || inputs.is_empty() {
            return;
        }
        if self.batches_seen < p.init_from_data {
            let n = inputs.len() as f64;
            let mean = inputs.iter().sum::<f64>() / n;
            let std =
                (inputs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            let estimate = (p.init_std_alpha * std).max(1e-6);
            self.value = if self.batches_seen == 0 {
                estimate
            } else {
                EMA * self.value + (1.0 - EMA) * estimate
            };
            self.batches_seen += 1;
            return;
        }
        self.batches_seen += 1;
        let ir = self.value;
        let mut gradient = 0.0;
        let mut clipped = 0usize;
        for (x, g) in inputs.iter().zip(grad_wrt_inputs) {
            if x.abs() >= ir {
                clipped += 1;
                gradient += g * x.signum();
            }
        }
        let clipped_fraction = clipped as f64 / inputs.len() as f64;
        if clipped_fraction < 1.0 - p.input_min_percentage {
            gradient += ir * p.decay;
        }
        if p.gradient_relative {
            gradient *= ir;
        }
        self.value = (ir - lr * p.learning_rate_scale * gradient).max(1e-6);
    }

    pub fn batches_seen(&self) -> usize {
        self.batches_seen
    }
}

/// Reservoir cache of absolute activations for post-training input-range
/// calibration: new samples randomly replace cached ones once full.
#[derive(Debug, Clone)]
pub struct CalibrationCache {
    max_samples: usize,
    seen: usize,
    values: Vec<f64>,
    /// Moving-average mode: exponentially averaged quantile estimate.
    moving_average: bool,
    ema_quantile: f64,
    batches: usize,
}

impl CalibrationCache {
    pub fn new(max_samples: usize, moving_average: bool) -> Self {
        Self {
            max_samples,
            seen: 0,
            values: Vec::new(),
            moving_average,
            ema_quantile: 0.0,
            batches: 0,
        }
    }

    pub fn push_batch(&mut self, abs_activations: &[f64], quantile: f64, stream: &mut RandomStream) {
        if self.moving_average {
            if abs_activations.is_empty() {
                return;
            }
            let q = exact_quantile(abs_activations, quantile);
            self.ema_quantile = if self.batches == 0 {
                q
            } else {
                EMA * self.ema_quantile + (1.0 - EMA) * q
            };
            self.batches += 1;
            return;
        }
        for &v in abs_activations {
            self.seen += 1;
            if self.values.len() < self.max_samples {
                self.values.push(v);
            } else {
                // Uniform random replacement keeps the cache an unbiased
                // sample of everything seen.
                let k = stream.below(self.seen);
                if k < self.max_samples {
                    self.values[k] = v;
                }
            }
        }
        self.batches += 1;
    }

    pub fn quantile(&self, q: f64) -> Result<f64, SimError> {
        if self.batches == 0 {
            return Err(SimError::DegenerateInput("no calibration data provided".into()));
        }
        if self.moving_average {
            return Ok(self.ema_quantile);
        }
        if self.values.is_empty() {
            return Err(SimError::DegenerateInput("no calibration data provided".into()));
        }
        Ok(exact_quantile(&self.values, q))
    }
}

fn exact_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream() -> RandomStream {
        RandomStream::new(31, 0)
    }

    #[test]
    fn modifier_none_is_identity() {
        let mut s = stream();
        let w = Matrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64 * 0.1);
        let out = modify_weights(&w, &ModifierParams::default(), &mut s);
        assert_eq!(out, w);
    }

    #[test]
    fn add_normal_with_pdrop_statistics() {
        // std_dev 0.1, pdrop 0.05 over 1e6 weights: zero fraction 0.05 +- 0.005,
        // residual std of non-dropped entries 0.1 +- 2%.
        let mut s = stream();
        let n = 1_000_000usize;
        let w = Matrix::from_fn(1, n, |_, _| 0.5);
        let p = ModifierParams {
            kind: ModifierKind::AddNormal,
            std_dev: 0.1,
            pdrop: 0.05,
            ..ModifierParams::default()
        };
        let out = modify_weights(&w, &p, &mut s);
        let zeros = out.data().iter().filter(|v| **v == 0.0).count() as f64 / n as f64;
        assert!((zeros - 0.05).abs() < 0.005, "zero fraction {zeros}");
        let kept: Vec<f64> = out.data().iter().copied().filter(|v| *v != 0.0).collect();
        let mean = kept.iter().sum::<f64>() / kept.len() as f64;
        let std = (kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / kept.len() as f64)
            .sqrt();
        assert!((std - 0.1).abs() / 0.1 < 0.02, "residual std {std}");
    }

    #[test]
    fn prog_noise_preserves_sign() {
        let mut s = stream();
        let w = Matrix::from_fn(10, 10, |i, j| if (i + j) % 2 == 0 { 0.02 } else { -0.02 });
        let p = ModifierParams {
            kind: ModifierKind::ProgNoise,
            std_dev: 0.5,
            coeffs: vec![1.0, 1.0],
            ..ModifierParams::default()
        };
        let out = modify_weights(&w, &p, &mut s);
        for (a, b) in w.data().iter().zip(out.data()) {
            assert!(a.signum() == b.signum(), "sign flipped: {a} -> {b}");
        }
    }

    #[test]
    fn mult_normal_scales_with_weight() {
        let mut s = stream();
        let n = 200_000;
        let w = Matrix::from_fn(1, n, |_, _| 2.0);
        let p = ModifierParams {
            kind: ModifierKind::MultNormal,
            std_dev: 0.05,
            ..ModifierParams::default()
        };
        let out = modify_weights(&w, &p, &mut s);
        let mean = out.data().iter().sum::<f64>() / n as f64;
        let std = (out.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64)
            .sqrt();
        assert!((std - 0.1).abs() / 0.1 < 0.03, "std {std}");
    }

    #[test]
    fn discretize_quantizes_to_grid() {
        let mut s = stream();
        let w = Matrix::from_fn(1, 5, |_, j| j as f64 * 0.013);
        let p = ModifierParams {
            kind: ModifierKind::Discretize,
            res: 0.01,
            ..ModifierParams::default()
        };
        let out = modify_weights(&w, &p, &mut s);
        for v in out.data() {
            let steps = v / 0.01;
            assert!((steps - steps.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn clip_fixed_value() {
        let mut w = Matrix::from_vec(1, 2, vec![1.5, -0.2]).unwrap();
        clip_weights(&mut w, &ClipParams { kind: ClipKind::FixedValue, fixed_value: 1.0, sigma: 0.0 });
        assert_eq!(w.data(), &[1.0, -0.2]);
    }

    #[test]
    fn clip_layer_gaussian_bound() {
        let mut s = stream();
        let mut w = Matrix::from_fn(100, 100, |_, _| s.normal());
        let std = w.std();
        clip_weights(
            &mut w,
            &ClipParams { kind: ClipKind::LayerGaussian, fixed_value: 0.0, sigma: 2.0 },
        );
        assert!(w.max_abs() <= 2.0 * std + 1e-12);
    }

    #[test]
    fn clip_none_identity_and_idempotence() {
        let mut s = stream();
        let orig = Matrix::from_fn(8, 8, |_, _| s.normal());
        let mut w = orig.clone();
        clip_weights(&mut w, &ClipParams::default());
        assert_eq!(w, orig);
        let p = ClipParams { kind: ClipKind::FixedValue, fixed_value: 0.5, sigma: 0.0 };
        let mut once = orig.clone();
        clip_weights(&mut once, &p);
        let mut twice = once.clone();
        clip_weights(&mut twice, &p);
        assert_eq!(once, twice);
    }

    #[test]
    fn remap_layerwise_preserves_represented_weights() {
        let mut w = Matrix::from_fn(3, 3, |i, j| 0.05 * (i as f64 + 1.0) * (j as f64 - 1.0));
        let orig = w.clone();
        let mut scales = vec![1.0];
        let p = RemapParams { kind: RemapKind::LayerwiseSymmetric, remapped_wmax: 1.0 };
        remap_weights(&mut w, &mut scales, &p);
        assert!((w.max_abs() - 1.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let repr = scales[0] * w.get(i, j);
                assert!((repr - orig.get(i, j)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn remap_channelwise_zero_row_untouched() {
        let mut w = Matrix::zeros(2, 3);
        w.set(0, 1, 0.5);
        let mut scales = vec![1.0, 1.0];
        let p = RemapParams { kind: RemapKind::ChannelwiseSymmetric, remapped_wmax: 1.0 };
        remap_weights(&mut w, &mut scales, &p);
        assert_eq!(w.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(scales[1], 1.0);
        assert!((w.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((scales[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn remap_random_reconstruction() {
        let mut s = stream();
        let mut w = Matrix::from_fn(16, 16, |_, _| s.normal() * 0.3);
        let orig = w.clone();
        let mut scales = vec![1.0; 16];
        let p = RemapParams { kind: RemapKind::ChannelwiseSymmetric, remapped_wmax: 1.0 };
        remap_weights(&mut w, &mut scales, &p);
        for i in 0..16 {
            for j in 0..16 {
                let repr = scales[i] * w.get(i, j);
                assert!((repr - orig.get(i, j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn input_range_unclipped_no_decay_unchanged() {
        let p = InputRangeParams { enabled: true, init_from_data: 0, decay: 0.0, ..Default::default() };
        let mut ir = InputRange::new(2.0);
        ir.update(&[0.5, -0.7, 1.0], &[0.1, 0.2, -0.3], &p, 0.1);
        assert_eq!(ir.value, 2.0);
    }

    #[test]
    fn input_range_decay_strictly_tightens() {
        let p = InputRangeParams {
            enabled: true,
            init_from_data: 0,
            decay: 0.01,
            ..Default::default()
        };
        let mut ir = InputRange::new(2.0);
        ir.update(&[0.5, -0.7], &[0.1, 0.2], &p, 0.1);
        assert!(ir.value < 2.0, "range did not tighten: {}", ir.value);
    }

    #[test]
    fn input_range_widens_under_heavy_clipping() {
        let p = InputRangeParams {
            enabled: true,
            init_from_data: 0,
            decay: 0.01,
            ..Default::default()
        };
        let mut ir = InputRange::new(0.5);
        // Everything clips and the loss wants larger magnitudes: gradient of
        // clipped positive inputs negative -> range grows.
        ir.update(&[2.0, 3.0, -2.5], &[-0.5, -0.2, 0.4], &p, 0.1);
        assert!(ir.value > 0.5, "range did not widen: {}", ir.value);
    }

    #[test]
    fn input_range_warmup_tracks_std() {
        let p = InputRangeParams {
            enabled: true,
            init_from_data: 5,
            init_std_alpha: 2.0,
            ..Default::default()
        };
        let mut ir = InputRange::new(1.0);
        let mut s = stream();
        for _ in 0..5 {
            let batch: Vec<f64> = (0..2000).map(|_| s.normal() * 0.5).collect();
            ir.update(&batch, &vec![0.0; 2000], &p, 0.1);
        }
        assert!((ir.value - 1.0).abs() < 0.1, "warm-up estimate {}", ir.value);
    }

    #[test]
    fn calibration_quantile_of_uniform() {
        let mut s = stream();
        let mut cache = CalibrationCache::new(100_000, false);
        let data: Vec<f64> = (0..100_000).map(|_| s.uniform()).collect();
        cache.push_batch(&data, 0.995, &mut s);
        let q = cache.quantile(0.995).unwrap();
        assert!((q - 0.995).abs() < 0.01, "quantile {q}");
    }

    #[test]
    fn calibration_full_cache_is_exact_max() {
        let mut s = stream();
        let mut cache = CalibrationCache::new(1000, false);
        let data: Vec<f64> = (0..500).map(|i| i as f64).collect();
        cache.push_batch(&data, 1.0, &mut s);
        assert_eq!(cache.quantile(1.0).unwrap(), 499.0);
    }

    #[test]
    fn calibration_moving_average_close_to_exact() {
        let mut s = stream();
        let mut exact = CalibrationCache::new(1_000_000, false);
        let mut ma = CalibrationCache::new(0, true);
        for _ in 0..50 {
            let batch: Vec<f64> = (0..2000).map(|_| s.uniform()).collect();
            exact.push_batch(&batch, 0.995, &mut s);
            ma.push_batch(&batch, 0.995, &mut s);
        }
        let qe = exact.quantile(0.995).unwrap();
        let qm = ma.quantile(0.995).unwrap();
        assert!((qm - qe).abs() / qe < 0.05, "moving average {qm} vs exact {qe}");
    }

    #[test]
    fn calibration_no_data_errors() {
        let cache = CalibrationCache::new(10, false);
        assert!(cache.quantile(0.99).is_err());
    }

    #[test]
    fn per_batch_sample_variance() {
        // Independent draws per sample: across-sample variance at one weight
        // position matches std_dev^2 within 5%.
        let mut s = stream();
        let w = Matrix::from_fn(1, 1, |_, _| 0.3);
        let p = ModifierParams {
            kind: ModifierKind::AddNormal,
            std_dev: 0.2,
            per_batch_sample: true,
            ..ModifierParams::default()
        };
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| modify_weights(&w, &p, &mut s).get(0, 0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!((var - 0.04).abs() / 0.04 < 0.05, "variance {var}");
    }
}
