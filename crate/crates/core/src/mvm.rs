//! Non-ideal analog matrix-vector multiply: DAC/ADC quantization, input and
//! output noise, weight read noise, IR drop, and dynamic noise/bound
//! management.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::num::{matmul, Matrix, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightNoiseKind {
    None,
    #[default]
    AdditiveConstant,
    PcmRead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseManagement {
    None,
    #[default]
    AbsMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundManagement {
    #[default]
    None,
    Iterative,
}

/// MVM nonideality settings for one pass direction (forward or backward).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoParams {
    /// Debug switch removing all nonidealities.
    pub is_perfect: bool,
    /// DAC clipping bound in normalized input units.
    pub inp_bound: f64,
    /// DAC resolution: in (0,1) = bin width, integer >= 1 = bin count, -1 = clip only.
    pub inp_res: f64,
    pub inp_sto_round: bool,
    /// Std-dev of additive Gaussian input noise (after DAC quantization).
    pub inp_noise: f64,
    /// ADC saturation bound in normalized output units.
    pub out_bound: f64,
    pub out_res: f64,
    pub out_sto_round: bool,
    /// Std-dev of Gaussian output noise.
    pub out_noise: f64,
    /// Scale of MVM-to-MVM weight read noise.
    pub w_noise: f64,
    pub w_noise_type: WeightNoiseKind,
    /// Scale of IR drop along the bit lines.
    pub ir_drop: f64,
    /// Ratio of wire conductance (cell to cell) to max device conductance.
    pub ir_drop_g_ratio: f64,
    pub noise_management: NoiseManagement,
    pub bound_management: BoundManagement,
    /// Maximal total input down-scaling factor for iterative bound management.
    pub max_bm_factor: u64,
    /// S-shaped output non-linearity; only 0 (off) is supported.
    pub out_nonlinearity: f64,
}

impl Default for IoParams {
    fn default() -> Self {
        Self {
            is_perfect: false,
            inp_bound: 1.0,
            inp_res: 254.0,
            inp_sto_round: false,
            inp_noise: 0.0,
            out_bound: 10.0,
            out_res: 254.0,
            out_sto_round: false,
            out_noise: 0.04,
            w_noise: 0.01,
            w_noise_type: WeightNoiseKind::AdditiveConstant,
            ir_drop: 1.0,
            ir_drop_g_ratio: 571_428.57,
            noise_management: NoiseManagement::AbsMax,
            bound_management: BoundManagement::None,
            max_bm_factor: 1000,
            out_nonlinearity: 0.0,
        }
    }
}

impl IoParams {
    /// All nonidealities off, pipeline still exercised.
    pub fn perfect() -> Self {
        Self {
            is_perfect: true,
            inp_res: -1.0,
            out_res: -1.0,
            inp_noise: 0.0,
            out_noise: 0.0,
            w_noise: 0.0,
            w_noise_type: WeightNoiseKind::None,
            ir_drop: 0.0,
            noise_management: NoiseManagement::None,
            bound_management: BoundManagement::None,
            ..Self::default()
        }
    }

    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        let check_res = |name: &str, v: f64| {
            if v == -1.0 || v > 0.0 {
                Ok(())
            } else {
                Err(SimError::config(&format!("{path}.{name}"), "must be -1 (off) or > 0"))
            }
        };
        if self.inp_bound <= 0.0 {
            return Err(SimError::config(&format!("{path}.inp_bound"), "must be > 0"));
        }
        if self.out_bound <= 0.0 {
            return Err(SimError::config(&format!("{path}.out_bound"), "must be > 0"));
        }
        check_res("inp_res", self.inp_res)?;
        check_res("out_res", self.out_res)?;
        for (name, v) in [
            ("inp_noise", self.inp_noise),
            ("out_noise", self.out_noise),
            ("w_noise", self.w_noise),
            ("ir_drop", self.ir_drop),
        ] {
            if v < 0.0 {
                return Err(SimError::config(&format!("{path}.{name}"), "must be >= 0"));
            }
        }
        if self.out_nonlinearity != 0.0 {
            return Err(SimError::config(
                &format!("{path}.out_nonlinearity"),
                "only 0 (off) is supported",
            ));
        }
        if self.max_bm_factor == 0 {
            return Err(SimError::config(&format!("{path}.max_bm_factor"), "must be >= 1"));
        }
        Ok(())
    }
}

/// Borrowed view of tile weights, optionally transposed (backward pass reads
/// the crossbar through the columns).
#[derive(Clone, Copy)]
pub enum WeightsView<'a> {
    Normal(&'a Matrix),
    Transposed(&'a Matrix),
}

impl<'a> WeightsView<'a> {
    pub fn out_dim(&self) -> usize {
        match self {
            WeightsView::Normal(m) => m.rows(),
            WeightsView::Transposed(m) => m.cols(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            WeightsView::Normal(m) => m.cols(),
            WeightsView::Transposed(m) => m.rows(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            WeightsView::Normal(m) => m.get(i, j),
            WeightsView::Transposed(m) => m.get(j, i),
        }
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            WeightsView::Normal(m) => {
                let mut y = Vec::with_capacity(m.rows());
                for i in 0..m.rows() {
                    y.push(m.row(i).iter().zip(x).map(|(w, v)| w * v).sum());
                }
                y
            }
            WeightsView::Transposed(m) => {
                let mut y = vec![0.0; m.cols()];
                for j in 0..m.rows() {
                    let xv = x[j];
                    if xv != 0.0 {
                        for (yi, w) in y.iter_mut().zip(m.row(j)) {
                            *yi += w * xv;
                        }
                    }
                }
                y
            }
        }
    }
}

/// Uniform symmetric quantizer with clipping (the DAC/ADC model).
///
/// `res` in (0,1) is the bin width relative to the full range, an integer
/// value >= 1 is the bin count, and -1 disables quantization (clip only).
/// Rounding is half-up so the bin edges land exactly on the 3-bin worked
/// partition: [-b,-b/2) -> -b, [-b/2,b/2) -> 0, [b/2,b] -> b for res = 1/2.
pub fn quantize(
    z: &[f64],
    bound: f64,
    res: f64,
    stochastic: bool,
    stream: &mut RandomStream,
) -> Vec<f64> {
    let mut out = z.to_vec();
    quantize_in_place(&mut out, bound, res, stochastic, stream);
    out
}

pub fn quantize_in_place(
    z: &mut [f64],
    bound: f64,
    res: f64,
    stochastic: bool,
    stream: &mut RandomStream,
) {
    debug_assert!(bound > 0.0);
    if res == -1.0 {
        for v in z.iter_mut() {
            *v = v.clamp(-bound, bound);
        }
        return;
    }
    let width = if res < 1.0 { res } else { 1.0 / res };
    let step = 2.0 * bound * width;
    for v in z.iter_mut() {
        let dither = if stochastic { stream.uniform() - 0.5 } else { 0.0 };
        let q = (*v / step + dither + 0.5).floor() * step;
        *v = q.clamp(-bound, bound);
    }
}

/// Dynamic input scaling: returns `(x / alpha, alpha)`.
pub fn noise_manage(x: &[f64], mode: NoiseManagement) -> (Vec<f64>, f64) {
    match mode {
        NoiseManagement::None => (x.to_vec(), 1.0),
        NoiseManagement::AbsMax => {
            let alpha = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if alpha == 0.0 {
                (x.to_vec(), 1.0)
            } else {
                (x.iter().map(|v| v / alpha).collect(), alpha)
            }
        }
    }
}

/// Deterministic per-output IR-drop correction (to be subtracted from the
/// ideal output). First-order solution of the discretized bit-line wire
/// network with the quadratic position profile q_k = k*n - k(k-1)/2 and the
/// column's mean absolute conductance; the sense amplifier sits at input
/// position 0.
pub fn ir_drop_correction(w: WeightsView, x_dac: &[f64], io: &IoParams) -> Vec<f64> {
    let n_out = w.out_dim();
    let n_in = w.in_dim();
    if io.ir_drop == 0.0 || n_in == 0 {
        return vec![0.0; n_out];
    }
    let rho = io.ir_drop / io.ir_drop_g_ratio;
    // q_k = sum_{j=1..n} min(j, k) for injection at position k (1-based).
    let profile: Vec<f64> = (1..=n_in)
        .map(|k| {
            let k = k as f64;
            k * n_in as f64 - k * (k - 1.0) / 2.0
        })
        .collect();
    let mut corr = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let mut g_total = 0.0;
        let mut weighted_current = 0.0;
        for k in 0..n_in {
            let wv = w.get(i, k);
            g_total += wv.abs();
            weighted_current += wv * x_dac[k] * profile[k];
        }
        let g_mean = g_total / n_in as f64;
        corr.push(rho * g_mean * weighted_current);
    }
    corr
}

/// Output-referred short-term weight read noise for one MVM.
pub fn weight_read_noise(
    w: WeightsView,
    x_dac: &[f64],
    io: &IoParams,
    stream: &mut RandomStream,
) -> Vec<f64> {
    let n_out = w.out_dim();
    if io.w_noise <= 0.0 || io.w_noise_type == WeightNoiseKind::None {
        return vec![0.0; n_out];
    }
    match io.w_noise_type {
        WeightNoiseKind::None => vec![0.0; n_out],
        WeightNoiseKind::AdditiveConstant => {
            // Equivalent to adding N(0, w_noise) to every weight element:
            // per-output std is w_noise * ||x||_2.
            let xnorm = x_dac.iter().map(|v| v * v).sum::<f64>().sqrt();
            (0..n_out).map(|_| stream.normal() * io.w_noise * xnorm).collect()
        }
        WeightNoiseKind::PcmRead => {
            // Variance scales with the total current sum_j |w_ij| |x_j|.
            (0..n_out)
                .map(|i| {
                    let current: f64 =
                        (0..x_dac.len()).map(|j| w.get(i, j).abs() * x_dac[j].abs()).sum();
                    stream.normal() * io.w_noise * current.sqrt()
                })
                .collect()
        }
    }
}

/// The full non-ideal analog MVM of one crossbar pass.
pub fn analog_forward(
    w: WeightsView,
    x: &[f64],
    io: &IoParams,
    stream: &mut RandomStream,
) -> Result<Vec<f64>, SimError> {
    if x.len() != w.in_dim() {
        return Err(SimError::DimensionMismatch(format!(
            "analog_forward: input length {} vs tile {}x{}",
            x.len(),
            w.out_dim(),
            w.in_dim()
        )));
    }
    if io.is_perfect {
        return Ok(w.matvec(x));
    }

    let (x_nm, alpha_nm) = noise_manage(x, io.noise_management);
    let mut bm_factor = 1.0f64;
    let mut rounds = 0u32;
    loop {
        let mut x_dac: Vec<f64> = x_nm.iter().map(|v| v / bm_factor).collect();
        quantize_in_place(&mut x_dac, io.inp_bound, io.inp_res, io.inp_sto_round, stream);
        if io.inp_noise > 0.0 {
            for v in x_dac.iter_mut() {
                *v += io.inp_noise * stream.normal();
            }
        }

        let mut y = w.matvec(&x_dac);
        let wn = weight_read_noise(w, &x_dac, io, stream);
        let ir = ir_drop_correction(w, &x_dac, io);
        let mut clipped = false;
        for i in 0..y.len() {
            y[i] += wn[i] - ir[i];
            if io.out_noise > 0.0 {
                y[i] += io.out_noise * stream.normal();
            }
            if y[i].abs() > io.out_bound {
                clipped = true;
            }
        }

        if clipped
            && io.bound_management == BoundManagement::Iterative
            && (bm_factor * 2.0) as u64 <= io.max_bm_factor
        {
            bm_factor *= 2.0;
            rounds += 1;
            debug_assert!(u64::from(rounds) <= io.max_bm_factor.ilog2() as u64 + 1);
            continue;
        }

        quantize_in_place(&mut y, io.out_bound, io.out_res, io.out_sto_round, stream);
        let scale = alpha_nm * bm_factor;
        for v in y.iter_mut() {
            *v *= scale;
        }
        return Ok(y);
    }
}

/// Brute-force oracle for the IR-drop model: solves the discretized
/// per-segment wire-resistance network of one column by fixed-point
/// iteration and returns the exact non-ideal outputs. Test-grade code, kept
/// here so the CLI and tests share one implementation.
pub fn ir_drop_line_oracle(w: &Matrix, x: &[f64], io: &IoParams) -> Vec<f64> {
    let n = w.cols();
    let rho = io.ir_drop / io.ir_drop_g_ratio;
    let mut out = Vec::with_capacity(w.rows());
    for i in 0..w.rows() {
        let row = w.row(i);
        // currents[k]: current injected by device at position k (1-based k).
        let mut currents: Vec<f64> = (0..n).map(|k| row[k] * x[k]).collect();
        let mut voltages = vec![0.0f64; n];
        for _ in 0..200 {
            // Voltage at node k: cumulative sum of downstream currents.
            let mut suffix = vec![0.0f64; n + 1];
            for k in (0..n).rev() {
                suffix[k] = suffix[k + 1] + currents[k];
            }
            let mut v = 0.0;
            for k in 0..n {
                v += rho * suffix[k];
                voltages[k] = v;
            }
            let mut max_change = 0.0f64;
            for k in 0..n {
                let new_current = row[k] * x[k] - row[k].abs() * voltages[k];
                max_change = max_change.max((new_current - currents[k]).abs());
                currents[k] = new_current;
            }
            if max_change < 1e-15 {
                break;
            }
        }
        out.push(currents.iter().sum());
    }
    out
}

/// Convenience wrapper: ideal MVM of the same weights.
pub fn ideal_forward(w: WeightsView, x: &[f64]) -> Result<Vec<f64>, SimError> {
    match w {
        WeightsView::Normal(m) => matmul(m, x),
        WeightsView::Transposed(m) => {
            if x.len() != m.rows() {
                return Err(SimError::DimensionMismatch("transposed matvec".into()));
            }
            Ok(w.matvec(x))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream() -> RandomStream {
        RandomStream::new(1234, 0)
    }

    #[test]
    fn quantize_three_bin_worked_example() {
        let mut s = stream();
        let q = quantize(&[0.6], 1.0, 0.5, false, &mut s);
        assert_eq!(q, vec![1.0]);
        let q = quantize(&[0.0], 1.0, 0.5, false, &mut s);
        assert_eq!(q, vec![0.0]);
    }

    #[test]
    fn quantize_clip_only() {
        let mut s = stream();
        assert_eq!(quantize(&[2.0], 1.0, -1.0, false, &mut s), vec![1.0]);
        assert_eq!(quantize(&[-3.5], 1.0, -1.0, false, &mut s), vec![-1.0]);
        assert_eq!(quantize(&[0.37], 1.0, -1.0, false, &mut s), vec![0.37]);
    }

    #[test]
    fn quantize_bin_count_and_width_agree() {
        let mut s = stream();
        let z: Vec<f64> = (-20..=20).map(|i| i as f64 / 20.0).collect();
        let a = quantize(&z, 1.0, 4.0, false, &mut s);
        let b = quantize(&z, 1.0, 0.25, false, &mut s);
        assert_eq!(a, b);
    }

    #[test]
    fn quantize_idempotent() {
        let mut s = stream();
        let z: Vec<f64> = (0..100).map(|_| s.normal()).collect();
        let once = quantize(&z, 1.0, 33.0, false, &mut s);
        let twice = quantize(&once, 1.0, 33.0, false, &mut s);
        assert_eq!(once, twice);
    }

    #[test]
    fn quantize_stochastic_rounding_unbiased() {
        let mut s = stream();
        let n = 200_000;
        let z = vec![0.3f64; n];
        let q = quantize(&z, 1.0, 0.5, true, &mut s);
        let mean = q.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.3).abs() < 0.005, "stochastic rounding biased: {mean}");
    }

    #[test]
    fn noise_manage_abs_max() {
        let (scaled, alpha) = noise_manage(&[0.5, -2.0], NoiseManagement::AbsMax);
        assert_eq!(alpha, 2.0);
        assert_eq!(scaled, vec![0.25, -1.0]);
    }

    #[test]
    fn noise_manage_all_zero_guard() {
        let (scaled, alpha) = noise_manage(&[0.0, 0.0], NoiseManagement::AbsMax);
        assert_eq!(alpha, 1.0);
        assert_eq!(scaled, vec![0.0, 0.0]);
    }

    #[test]
    fn noise_manage_none() {
        let (scaled, alpha) = noise_manage(&[0.3], NoiseManagement::None);
        assert_eq!(alpha, 1.0);
        assert_eq!(scaled, vec![0.3]);
    }

    #[test]
    fn ir_drop_disabled_is_zero() {
        let w = Matrix::from_fn(4, 8, |_, _| 0.7);
        let x = vec![1.0; 8];
        let mut io = IoParams::default();
        io.ir_drop = 0.0;
        let corr = ir_drop_correction(WeightsView::Normal(&w), &x, &io);
        assert!(corr.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn ir_drop_linear_in_scale() {
        let mut s = stream();
        let w = Matrix::from_fn(3, 16, |_, _| s.uniform() * 2.0 - 1.0);
        let x: Vec<f64> = (0..16).map(|_| s.uniform()).collect();
        let mut io = IoParams::default();
        io.ir_drop = 1.0;
        let c1 = ir_drop_correction(WeightsView::Normal(&w), &x, &io);
        io.ir_drop = 2.0;
        let c2 = ir_drop_correction(WeightsView::Normal(&w), &x, &io);
        for (a, b) in c1.iter().zip(&c2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ir_drop_matches_wire_network_oracle_on_small_instances() {
        // The fast model is a first-order approximation; require it to stay
        // within 25% of the exact line solution for the correction itself.
        let mut s = stream();
        let io = IoParams { ir_drop: 1.0, ..IoParams::default() };
        for n in [16usize, 40, 64] {
            let w = Matrix::from_fn(5, n, |_, _| s.uniform() * 2.0 - 1.0);
            let x: Vec<f64> = (0..n).map(|_| if s.bernoulli(0.5) { s.uniform() } else { 0.0 }).collect();
            let exact = ir_drop_line_oracle(&w, &x, &io);
            let ideal = matmul(&w, &x).unwrap();
            let corr = ir_drop_correction(WeightsView::Normal(&w), &x, &io);
            for i in 0..5 {
                let oracle_corr = ideal[i] - exact[i];
                if oracle_corr.abs() > 1e-9 {
                    let rel = (corr[i] - oracle_corr).abs() / oracle_corr.abs();
                    assert!(rel < 0.25, "n={n} i={i}: approx {} vs oracle {}", corr[i], oracle_corr);
                }
            }
        }
    }

    #[test]
    fn ir_drop_512_rows_golden() {
        // All inputs 1, all weights 1, defaults: relative output error frozen
        // from the 64-bit wire-network oracle. First-order estimate is
        // n^2/(3*g_ratio) = 15.29%; the self-consistent solution is lower.
        let n = 512;
        let w = Matrix::from_fn(1, n, |_, _| 1.0);
        let x = vec![1.0; n];
        let io = IoParams { ir_drop: 1.0, ..IoParams::default() };
        let exact = ir_drop_line_oracle(&w, &x, &io)[0];
        let rel_err = (n as f64 - exact) / n as f64;
        assert!((rel_err - 0.1359).abs() < 2e-3, "oracle drifted: {rel_err}");
        let corr = ir_drop_correction(WeightsView::Normal(&w), &x, &io)[0] / n as f64;
        assert!((corr - 0.1529).abs() < 2e-3, "approximation drifted: {corr}");
    }

    #[test]
    fn weight_read_noise_none_and_pcm_zero_input() {
        let mut s = stream();
        let w = Matrix::from_fn(4, 4, |_, _| 0.5);
        let mut io = IoParams::default();
        io.w_noise_type = WeightNoiseKind::None;
        let n = weight_read_noise(WeightsView::Normal(&w), &[1.0; 4], &io, &mut s);
        assert!(n.iter().all(|&v| v == 0.0));

        io.w_noise_type = WeightNoiseKind::PcmRead;
        io.w_noise = 0.0175;
        let n = weight_read_noise(WeightsView::Normal(&w), &[0.0; 4], &io, &mut s);
        assert!(n.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_read_noise_additive_constant_std() {
        // One-hot input: output std equals w_noise. Monte-Carlo at 1e5 trials.
        let mut s = stream();
        let w = Matrix::from_fn(1, 8, |_, _| 0.3);
        let mut io = IoParams::default();
        io.w_noise = 0.1;
        io.w_noise_type = WeightNoiseKind::AdditiveConstant;
        let mut x = vec![0.0; 8];
        x[3] = 1.0;
        let trials = 100_000;
        let mut sum2 = 0.0;
        for _ in 0..trials {
            let n = weight_read_noise(WeightsView::Normal(&w), &x, &io, &mut s);
            sum2 += n[0] * n[0];
        }
        let std = (sum2 / trials as f64).sqrt();
        assert!((std - 0.1).abs() / 0.1 < 0.03, "std {std}");
    }

    #[test]
    fn perfect_equals_matmul() {
        let mut s = stream();
        let w = Matrix::from_fn(6, 10, |_, _| s.uniform() * 2.0 - 1.0);
        let x: Vec<f64> = (0..10).map(|_| s.uniform() * 2.0 - 1.0).collect();
        let io = IoParams { is_perfect: true, ..IoParams::default() };
        let y = analog_forward(WeightsView::Normal(&w), &x, &io, &mut s).unwrap();
        let ideal = matmul(&w, &x).unwrap();
        for (a, b) in y.iter().zip(&ideal) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_input_output_noise_statistics() {
        let mut s = stream();
        let w = Matrix::zeros(4, 4);
        let mut io = IoParams::perfect();
        io.is_perfect = false;
        io.out_noise = 0.04;
        let trials = 100_000 / 4;
        let mut sum2 = 0.0;
        for _ in 0..trials {
            let y = analog_forward(WeightsView::Normal(&w), &[0.0; 4], &io, &mut s).unwrap();
            for v in y {
                sum2 += v * v;
            }
        }
        let std = (sum2 / (trials * 4) as f64).sqrt();
        assert!((std - 0.04).abs() / 0.04 < 0.02, "std {std}");
    }

    #[test]
    fn noise_management_scaling_exactly_undone() {
        let mut s = stream();
        let w = Matrix::from_fn(7, 9, |_, _| s.uniform() * 2.0 - 1.0);
        let x: Vec<f64> = (0..9).map(|_| (s.uniform() * 2.0 - 1.0) * 3.0).collect();
        let mut io = IoParams::perfect();
        io.is_perfect = false;
        io.inp_bound = 1.0;
        let mut io_nm = io.clone();
        io_nm.noise_management = NoiseManagement::AbsMax;
        // Without NM the large inputs clip; with NM they are exactly restored.
        let y_nm = analog_forward(WeightsView::Normal(&w), &x, &io_nm, &mut s).unwrap();
        let ideal = matmul(&w, &x).unwrap();
        // out_bound is 10, outputs can exceed it after rescale; only compare
        // outputs whose pre-rescale value stayed in range.
        let alpha = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (yv, iv) in y_nm.iter().zip(&ideal) {
            if iv.abs() / alpha < 9.9 {
                assert!((yv - iv).abs() < 1e-6, "{yv} vs {iv}");
            }
        }
    }

    #[test]
    fn outputs_clipped_at_out_bound() {
        let mut s = stream();
        let w = Matrix::from_fn(2, 64, |_, _| 1.0);
        let x = vec![1.0; 64];
        let mut io = IoParams::perfect();
        io.is_perfect = false;
        io.ir_drop = 0.0;
        io.noise_management = NoiseManagement::None;
        let y = analog_forward(WeightsView::Normal(&w), &x, &io, &mut s).unwrap();
        for v in y {
            assert!(v.abs() <= 10.0 + 1e-12, "not clipped: {v}");
        }
    }

    #[test]
    fn iterative_bound_management_recovers_clipped_output() {
        let mut s = stream();
        let w = Matrix::from_fn(2, 64, |_, _| 1.0);
        let x = vec![1.0; 64];
        let mut io = IoParams::perfect();
        io.is_perfect = false;
        io.noise_management = NoiseManagement::None;
        io.bound_management = BoundManagement::Iterative;
        io.max_bm_factor = 1000;
        let y = analog_forward(WeightsView::Normal(&w), &x, &io, &mut s).unwrap();
        // 64 = ideal output; needs alpha_bm = 8 to fit under out_bound 10.
        for v in y {
            assert!((v - 64.0).abs() < 1e-9, "bound management failed: {v}");
        }
    }

    #[test]
    fn transposed_view_matches_explicit_transpose() {
        let mut s = stream();
        let w = Matrix::from_fn(5, 8, |_, _| s.normal());
        let d: Vec<f64> = (0..5).map(|_| s.normal()).collect();
        let io = IoParams { is_perfect: true, ..IoParams::default() };
        let via_view = analog_forward(WeightsView::Transposed(&w), &d, &io, &mut s).unwrap();
        let wt = w.transposed();
        let via_mat = matmul(&wt, &d).unwrap();
        for (a, b) in via_view.iter().zip(&via_mat) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let w = Matrix::zeros(3, 4);
        let mut s = stream();
        let io = IoParams::default();
        assert!(analog_forward(WeightsView::Normal(&w), &[0.0; 5], &io, &mut s).is_err());
    }
}
