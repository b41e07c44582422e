//! Dense neural-network layers backed by analog tiles: weight-to-tile
//! mapping, forward/backward through the non-ideal MVMs, digital activations
//! and loss, and the analog optimizer step with post-update transforms.

use serde::{Deserialize, Serialize};

use crate::compound::{Compound, CompoundKind};
use crate::config::{TileConfig, TileMode};
use crate::error::SimError;
use crate::hwa::{self, CalibrationCache, InputRange};
use crate::inference::{self, NoiseModel, ProgrammedTile};
use crate::mvm::{analog_forward, IoParams, WeightsView};
use crate::num::{Matrix, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

impl Activation {
    pub fn from_name(name: &str) -> Result<Self, SimError> {
        match name {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "softmax" => Ok(Activation::Softmax),
            other => Err(SimError::config(
                "network.activations",
                format!("unknown activation '{other}'"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => z.to_vec(),
            Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            Activation::Sigmoid => z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Softmax => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let sum: f64 = exps.iter().sum();
                exps.iter().map(|e| e / sum).collect()
            }
        }
    }

    /// Derivative w.r.t. the pre-activation, expressed through the output
    /// value `a` (and input `z` for relu). Softmax is only valid as the final
    /// activation combined with cross-entropy and never reaches this path.
    pub fn derivative(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Softmax => panic!("softmax derivative is handled by the loss"),
        }
    }
}

/// Softmax cross-entropy over a batch of logits; returns the mean loss and
/// the gradient w.r.t. the logits (already divided by the batch size).
pub fn cross_entropy_with_logits(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let batch = logits.rows();
    let mut grad = Matrix::zeros(batch, logits.cols());
    let mut loss = 0.0;
    for s in 0..batch {
        let probs = Activation::Softmax.apply(logits.row(s));
        loss -= (probs[labels[s]].max(1e-30)).ln();
        for c in 0..logits.cols() {
            let y = if c == labels[s] { 1.0 } else { 0.0 };
            grad.set(s, c, (probs[c] - y) / batch as f64);
        }
    }
    (loss / batch as f64, grad)
}

/// Mean squared error over a batch; gradient w.r.t. the predictions.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> (f64, Matrix) {
    let n = (pred.rows() * pred.cols()) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for i in 0..pred.rows() {
        for j in 0..pred.cols() {
            let d = pred.get(i, j) - target.get(i, j);
            loss += d * d;
            grad.set(i, j, 2.0 * d / n);
        }
    }
    (loss / n, grad)
}

#[derive(Debug, Clone)]
enum TileBackend {
    InMemory(Compound),
    Hwa(Matrix),
}

/// One crossbar covering a slice of the layer's input dimension.
#[derive(Debug, Clone)]
struct AnalogTile {
    in_start: usize,
    in_size: usize,
    backend: TileBackend,
    input_range: InputRange,
    /// Per-batch modified weights (HWA training noise injection); one matrix,
    /// or one per sample with per_batch_sample.
    modified: Option<Vec<Matrix>>,
    /// Drift-compensation output factor (1.0 unless programmed + drifted).
    output_gamma: f64,
    forward_stream: RandomStream,
    backward_stream: RandomStream,
    update_stream: RandomStream,
    modifier_stream: RandomStream,
}

impl AnalogTile {
    fn weights(&self) -> &Matrix {
        match &self.backend {
            TileBackend::InMemory(c) => c.weights(),
            TileBackend::Hwa(w) => w,
        }
    }
}

/// Weights seen by the pass for sample `s` (modifier-injected when present).
fn pass_weights<'a>(
    backend: &'a TileBackend,
    modified: &'a Option<Vec<Matrix>>,
    s: usize,
) -> &'a Matrix {
    match modified {
        Some(mods) => &mods[s.min(mods.len() - 1)],
        None => match backend {
            TileBackend::InMemory(c) => c.weights(),
            TileBackend::Hwa(w) => w,
        },
    }
}

fn safe_scale(s: f64) -> f64 {
    if s.abs() < 1e-12 {
        1e-12
    } else {
        s
    }
}

/// Dense layer with analog tiles, digital output scales and bias.
#[derive(Debug, Clone)]
pub struct AnalogLinearLayer {
    in_features: usize,
    out_features: usize,
    mode: TileMode,
    tiles: Vec<AnalogTile>,
    /// Per-output digital scales.
    out_scales: Vec<f64>,
    bias: Vec<f64>,
    config: TileConfig,
    // Per-batch training caches.
    cache_tile_inputs: Vec<Vec<Vec<f64>>>,
    cache_pre_clip: Vec<Vec<Vec<f64>>>,
    cache_y_analog: Vec<Vec<f64>>,
    cache_z: Vec<Vec<f64>>,
    update_d: Vec<Vec<Vec<f64>>>,
    ir_grads: Vec<Vec<(f64, f64)>>,
}

impl AnalogLinearLayer {
    pub fn new(
        in_features: usize,
        out_features: usize,
        config: &TileConfig,
        mode: TileMode,
        compound_kind: Option<CompoundKind>,
        stream: &mut RandomStream,
    ) -> Result<Self, SimError> {
        if in_features == 0 || out_features == 0 {
            return Err(SimError::invalid("layer dims", "must be > 0"));
        }
        let max_in = config.mapping.max_in_size;
        let mut tiles = Vec::new();
        let mut start = 0;
        let mut tile_idx = 0u64;
        while start < in_features {
            let size = max_in.min(in_features - start);
            let tile_stream = stream.derive(100 + tile_idx);
            let backend = match mode {
                TileMode::InMemory => {
                    let kind = compound_kind.unwrap_or(CompoundKind::Single);
                    let mut realize_stream = tile_stream.derive(1);
                    TileBackend::InMemory(Compound::new(
                        kind,
                        &config.compound,
                        &config.device,
                        out_features,
                        size,
                        &mut realize_stream,
                    )?)
                }
                TileMode::HwaInference => TileBackend::Hwa(Matrix::zeros(out_features, size)),
            };
            tiles.push(AnalogTile {
                in_start: start,
                in_size: size,
                backend,
                input_range: InputRange::new(1.0),
                modified: None,
                output_gamma: 1.0,
                forward_stream: tile_stream.derive(2),
                backward_stream: tile_stream.derive(3),
                update_stream: tile_stream.derive(4),
                modifier_stream: tile_stream.derive(5),
            });
            start += size;
            tile_idx += 1;
        }
        Ok(Self {
            in_features,
            out_features,
            mode,
            tiles,
            out_scales: vec![1.0; out_features],
            bias: vec![0.0; out_features],
            config: config.clone(),
            cache_tile_inputs: Vec::new(),
            cache_pre_clip: Vec::new(),
            cache_y_analog: Vec::new(),
            cache_z: Vec::new(),
            update_d: Vec::new(),
            ir_grads: Vec::new(),
        })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    pub fn tile_in_sizes(&self) -> Vec<usize> {
        self.tiles.iter().map(|t| t.in_size).collect()
    }

    pub fn out_scales(&self) -> &[f64] {
        &self.out_scales
    }

    pub fn out_scales_mut(&mut self) -> &mut [f64] {
        &mut self.out_scales
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn input_ranges(&self) -> Vec<f64> {
        self.tiles.iter().map(|t| t.input_range.value).collect()
    }

    pub fn set_input_ranges(&mut self, values: &[f64]) {
        for (t, v) in self.tiles.iter_mut().zip(values) {
            t.input_range = InputRange::new(*v);
        }
    }

    pub fn compounds(&self) -> Vec<&Compound> {
        self.tiles
            .iter()
            .filter_map(|t| match &t.backend {
                TileBackend::InMemory(c) => Some(c),
                TileBackend::Hwa(_) => None,
            })
            .collect()
    }

    pub fn config(&self) -> &TileConfig {
        &self.config
    }

    /// Fraction of cached tile inputs that hit the input-range clip in the
    /// last backward pass (diagnostics for range learning).
    pub fn last_clipped_fraction(&self) -> f64 {
        let mut clipped = 0usize;
        let mut total = 0usize;
        for (t_idx, tile) in self.tiles.iter().enumerate() {
            for (x, _) in &self.ir_grads[t_idx.min(self.ir_grads.len().saturating_sub(1))] {
                total += 1;
                if x.abs() >= tile.input_range.value {
                    clipped += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            clipped as f64 / total as f64
        }
    }

    /// Map FP weights onto analog weights and output scales.
    pub fn set_weights(&mut self, w: &Matrix, omega: f64) -> Result<(), SimError> {
        if w.rows() != self.out_features || w.cols() != self.in_features {
            return Err(SimError::DimensionMismatch(format!(
                "set_weights: {}x{} vs layer {}x{}",
                w.rows(),
                w.cols(),
                self.out_features,
                self.in_features
            )));
        }
        let columnwise = self.config.mapping.weight_scaling_columnwise;
        let mut analog = w.clone();
        if omega > 0.0 {
            if columnwise {
                for i in 0..self.out_features {
                    let wmax = w.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
                    self.out_scales[i] = wmax / omega;
                    for v in analog.row_mut(i) {
                        *v *= omega / wmax;
                    }
                }
            } else {
                let wmax = w.max_abs().max(1e-12);
                let scale = wmax / omega;
                for s in self.out_scales.iter_mut() {
                    *s = scale;
                }
                for v in analog.data_mut() {
                    *v *= omega / wmax;
                }
            }
        } else {
            if w.max_abs() > 1.0 + 1e-12 {
                return Err(SimError::invalid(
                    "weights",
                    "omega = 0 requires weights within [-1, 1]",
                ));
            }
            for s in self.out_scales.iter_mut() {
                *s = 1.0;
            }
        }
        self.set_analog_weights(&analog)
    }

    /// Write analog weights directly (no rescaling).
    pub fn set_analog_weights(&mut self, analog: &Matrix) -> Result<(), SimError> {
        let out = self.out_features;
        for tile in self.tiles.iter_mut() {
            let slice =
                Matrix::from_fn(out, tile.in_size, |i, j| analog.get(i, tile.in_start + j));
            match &mut tile.backend {
                TileBackend::InMemory(c) => c.w_array_mut().set_effective_weights(&slice)?,
                TileBackend::Hwa(w) => *w = slice,
            }
        }
        Ok(())
    }

    /// Analog weights as one out x in matrix.
    pub fn analog_weights(&self) -> Matrix {
        let mut full = Matrix::zeros(self.out_features, self.in_features);
        for tile in &self.tiles {
            let w = tile.weights();
            for i in 0..self.out_features {
                for j in 0..tile.in_size {
                    full.set(i, tile.in_start + j, w.get(i, j));
                }
            }
        }
        full
    }

    /// Effective FP weights: out_scales x analog weights (tile gammas folded).
    pub fn get_weights(&self) -> Matrix {
        let mut w = Matrix::zeros(self.out_features, self.in_features);
        for tile in &self.tiles {
            let tw = tile.weights();
            for i in 0..self.out_features {
                let s = self.out_scales[i] * tile.output_gamma;
                for j in 0..tile.in_size {
                    w.set(i, tile.in_start + j, s * tw.get(i, j));
                }
            }
        }
        w
    }

    fn modifier_active(&self, training: bool) -> bool {
        let p = &self.config.modifier;
        self.mode == TileMode::HwaInference
            && !p.is_identity()
            && (training || p.enable_during_test)
    }

    fn draw_modified(&mut self, batch: usize, training: bool) {
        let active = self.modifier_active(training);
        let p = self.config.modifier.clone();
        for tile in self.tiles.iter_mut() {
            tile.modified = if active {
                let n = if p.per_batch_sample { batch } else { 1 };
                let base = tile.weights().clone();
                Some(
                    (0..n)
                        .map(|_| hwa::modify_weights(&base, &p, &mut tile.modifier_stream))
                        .collect(),
                )
            } else {
                None
            };
        }
    }

    fn clear_cache(&mut self) {
        self.cache_tile_inputs.clear();
        self.cache_pre_clip.clear();
        self.cache_y_analog.clear();
        self.cache_z.clear();
        self.update_d.clear();
        self.ir_grads = vec![Vec::new(); self.tiles.len()];
    }

    /// Forward one batch; returns pre-activation outputs (batch x out).
    pub fn forward(
        &mut self,
        x: &Matrix,
        training: bool,
        capture: bool,
    ) -> Result<Matrix, SimError> {
        if x.cols() != self.in_features {
            return Err(SimError::DimensionMismatch(format!(
                "layer forward: input width {} vs {}",
                x.cols(),
                self.in_features
            )));
        }
        let batch = x.rows();
        self.clear_cache();
        self.draw_modified(batch, training);
        let ir_enabled = self.config.pre_post.input_range.enabled;
        let io = self.config.forward.clone();
        let mut out = Matrix::zeros(batch, self.out_features);
        for s in 0..batch {
            let mut y_analog = vec![0.0; self.out_features];
            let mut sample_inputs = Vec::with_capacity(self.tiles.len());
            let mut sample_preclip = Vec::with_capacity(self.tiles.len());
            for tile in self.tiles.iter_mut() {
                let xs = &x.row(s)[tile.in_start..tile.in_start + tile.in_size];
                let (x_t, ir) = if ir_enabled {
                    let ir = tile.input_range.value;
                    (xs.iter().map(|v| v.clamp(-ir, ir) / ir).collect::<Vec<f64>>(), ir)
                } else {
                    (xs.to_vec(), 1.0)
                };
                let AnalogTile { backend, modified, forward_stream, output_gamma, .. } = tile;
                let w = pass_weights(backend, modified, s);
                let y_t = analog_forward(WeightsView::Normal(w), &x_t, &io, forward_stream)?;
                let restore = ir * *output_gamma;
                for i in 0..self.out_features {
                    y_analog[i] += restore * y_t[i];
                }
                if capture {
                    sample_inputs.push(x_t);
                    if ir_enabled {
                        sample_preclip.push(xs.to_vec());
                    }
                }
            }
            let mut z = vec![0.0; self.out_features];
            for i in 0..self.out_features {
                z[i] = self.out_scales[i] * y_analog[i] + self.bias[i];
            }
            out.row_mut(s).copy_from_slice(&z);
            if capture {
                self.cache_tile_inputs.push(sample_inputs);
                self.cache_pre_clip.push(sample_preclip);
                self.cache_y_analog.push(y_analog);
                self.cache_z.push(z);
            }
        }
        Ok(out)
    }

    /// Pre-activation `z` cached for sample `s` in the last captured forward.
    pub fn cached_z(&self, s: usize) -> &[f64] {
        &self.cache_z[s]
    }

    /// Backward one batch from gradients w.r.t. this layer's pre-activation.
    /// Returns gradients w.r.t. the layer inputs and stores (x, d) pairs for
    /// the optimizer.
    pub fn backward(&mut self, delta_pre: &Matrix) -> Result<Matrix, SimError> {
        let batch = delta_pre.rows();
        if self.cache_tile_inputs.len() != batch {
            return Err(SimError::DegenerateInput(
                "backward called without a cached forward".into(),
            ));
        }
        let ir_enabled = self.config.pre_post.input_range.enabled;
        let backward_io = self.config.backward.clone();
        let out_features = self.out_features;
        let mut grad_in = Matrix::zeros(batch, self.in_features);
        self.update_d = Vec::with_capacity(batch);
        for s in 0..batch {
            let delta = delta_pre.row(s);
            let d_alpha: Vec<f64> =
                (0..out_features).map(|i| delta[i] * self.out_scales[i]).collect();
            let mut d_tiles = Vec::with_capacity(self.tiles.len());
            for (t_idx, tile) in self.tiles.iter_mut().enumerate() {
                let ir = if ir_enabled { tile.input_range.value } else { 1.0 };
                // Captured for the update: realizes
                // delta W_eff = -lr * delta * clip(x) on the effective weights.
                let d_update: Vec<f64> = (0..out_features)
                    .map(|i| delta[i] * ir / safe_scale(self.out_scales[i]))
                    .collect();
                let in_size = tile.in_size;
                let in_start = tile.in_start;
                let AnalogTile { backend, modified, backward_stream, .. } = tile;
                let w = pass_weights(backend, modified, s);
                let g_clip = match backend {
                    TileBackend::InMemory(_) => analog_forward(
                        WeightsView::Transposed(w),
                        &d_alpha,
                        &backward_io,
                        backward_stream,
                    )?,
                    TileBackend::Hwa(_) => {
                        // Inference-chip designs backpropagate in FP.
                        let mut g = vec![0.0; in_size];
                        for i in 0..out_features {
                            let dv = d_alpha[i];
                            if dv != 0.0 {
                                for (gj, wv) in g.iter_mut().zip(w.row(i)) {
                                    *gj += wv * dv;
                                }
                            }
                        }
                        g
                    }
                };
                if ir_enabled {
                    let pre = &self.cache_pre_clip[s][t_idx];
                    for j in 0..in_size {
                        self.ir_grads[t_idx].push((pre[j], g_clip[j]));
                        if pre[j].abs() < ir {
                            grad_in.set(s, in_start + j, g_clip[j]);
                        }
                    }
                } else {
                    for j in 0..in_size {
                        grad_in.set(s, in_start + j, g_clip[j]);
                    }
                }
                d_tiles.push(d_update);
            }
            self.update_d.push(d_tiles);
        }
        Ok(grad_in)
    }

    /// Gradient-descent direction on the effective weights captured by the
    /// last backward: sum_s d_s (x_t)_s^T, per tile, concatenated.
    pub fn captured_gradient(&self) -> Matrix {
        let mut g = Matrix::zeros(self.out_features, self.in_features);
        for s in 0..self.update_d.len() {
            for (t_idx, tile) in self.tiles.iter().enumerate() {
                let d = &self.update_d[s][t_idx];
                let x_t = &self.cache_tile_inputs[s][t_idx];
                for i in 0..self.out_features {
                    for j in 0..tile.in_size {
                        let v = g.get(i, tile.in_start + j) + d[i] * x_t[j];
                        g.set(i, tile.in_start + j, v);
                    }
                }
            }
        }
        g
    }

    /// Apply the captured updates: analog compound steps or FP SGD with HWA
    /// post-update transforms, plus digital parameters.
    pub fn apply_update(&mut self, delta_pre: &Matrix, lr: f64) -> Result<(), SimError> {
        let batch = delta_pre.rows();
        if self.update_d.len() != batch {
            return Err(SimError::DegenerateInput("apply_update before backward".into()));
        }
        if self.config.mapping.digital_bias {
            for i in 0..self.out_features {
                let g: f64 = (0..batch).map(|s| delta_pre.get(s, i)).sum();
                self.bias[i] -= lr * g;
            }
        }
        if self.config.mapping.learn_out_scaling {
            for i in 0..self.out_features {
                let g: f64 = (0..batch)
                    .map(|s| delta_pre.get(s, i) * self.cache_y_analog[s][i])
                    .sum();
                self.out_scales[i] -= lr * g;
            }
        }
        let update_params = self.config.update.clone();
        let transfer_io = self.config.forward.clone();
        for (t_idx, tile) in self.tiles.iter_mut().enumerate() {
            let AnalogTile { backend, update_stream, .. } = tile;
            match backend {
                TileBackend::InMemory(c) => {
                    for s in 0..batch {
                        c.step(
                            &self.cache_tile_inputs[s][t_idx],
                            &self.update_d[s][t_idx],
                            lr,
                            &update_params,
                            &transfer_io,
                            update_stream,
                        )?;
                    }
                }
                TileBackend::Hwa(w) => {
                    for s in 0..batch {
                        let d = &self.update_d[s][t_idx];
                        let x_t = &self.cache_tile_inputs[s][t_idx];
                        for i in 0..w.rows() {
                            let dv = d[i];
                            if dv != 0.0 {
                                for (wv, xv) in w.row_mut(i).iter_mut().zip(x_t) {
                                    *wv -= lr * dv * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
        if self.mode == TileMode::HwaInference {
            let clip = self.config.clip.clone();
            let remap = self.config.remap.clone();
            for tile in self.tiles.iter_mut() {
                if let TileBackend::Hwa(w) = &mut tile.backend {
                    hwa::clip_weights(w, &clip);
                }
            }
            if remap.kind != hwa::RemapKind::None {
                // Remap operates on the full layer matrix so per-channel
                // scales stay consistent across tiles.
                let mut full = self.analog_weights();
                hwa::remap_weights(&mut full, &mut self.out_scales, &remap);
                self.set_analog_weights(&full)?;
            }
        }
        if self.config.pre_post.input_range.enabled {
            let p = self.config.pre_post.input_range.clone();
            for (t_idx, tile) in self.tiles.iter_mut().enumerate() {
                let pairs = std::mem::take(&mut self.ir_grads[t_idx]);
                if !pairs.is_empty() {
                    let inputs: Vec<f64> = pairs.iter().map(|(x, _)| *x).collect();
                    let grads: Vec<f64> = pairs.iter().map(|(_, g)| *g).collect();
                    tile.input_range.update(&inputs, &grads, &p, lr);
                }
            }
        }
        Ok(())
    }
}

/// Multi-layer perceptron over analog linear layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<AnalogLinearLayer>,
    pub activations: Vec<Activation>,
}

/// Serialized model state: explicit shapes, no opaque binary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub widths: Vec<usize>,
    pub activations: Vec<String>,
    pub layers: Vec<LayerCheckpoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub analog_weights: Matrix,
    pub out_scales: Vec<f64>,
    pub bias: Vec<f64>,
    pub input_ranges: Vec<f64>,
}

impl Mlp {
    pub fn new(
        widths: &[usize],
        activations: &[Activation],
        config: &TileConfig,
        mode: TileMode,
        compound_kind: Option<CompoundKind>,
        stream: &mut RandomStream,
    ) -> Result<Self, SimError> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(SimError::config("network", "widths/activations mismatch"));
        }
        for (k, act) in activations.iter().enumerate() {
            if *act == Activation::Softmax && k + 1 != activations.len() {
                return Err(SimError::config(
                    "network.activations",
                    "softmax is only supported as the final activation",
                ));
            }
        }
        let mut layers = Vec::new();
        for k in 0..widths.len() - 1 {
            let mut layer = AnalogLinearLayer::new(
                widths[k],
                widths[k + 1],
                config,
                mode,
                compound_kind,
                &mut stream.derive(10 + k as u64),
            )?;
            // Torch-style uniform init, mapped with the configured omega.
            let bound = 1.0 / (widths[k] as f64).sqrt();
            let mut init_stream = stream.derive(1000 + k as u64);
            let w = Matrix::from_fn(widths[k + 1], widths[k], |_, _| {
                (init_stream.uniform() * 2.0 - 1.0) * bound
            });
            layer.set_weights(&w, config.mapping.omega(mode))?;
            layers.push(layer);
        }
        Ok(Self { layers, activations: activations.to_vec() })
    }

    pub fn from_network_spec(
        spec: &crate::config::NetworkSpec,
        config: &TileConfig,
        mode: TileMode,
        compound_kind: Option<CompoundKind>,
        stream: &mut RandomStream,
    ) -> Result<Self, SimError> {
        let acts: Result<Vec<Activation>, SimError> =
            spec.activations.iter().map(|a| Activation::from_name(a)).collect();
        Mlp::new(&spec.widths, &acts?, config, mode, compound_kind, stream)
    }

    pub fn in_features(&self) -> usize {
        self.layers[0].in_features()
    }

    pub fn out_features(&self) -> usize {
        self.layers.last().unwrap().out_features()
    }

    /// Forward a batch. When the final activation is softmax the raw logits
    /// are returned (the loss applies softmax; argmax is unaffected).
    pub fn forward(&mut self, x: &Matrix, training: bool) -> Result<Matrix, SimError> {
        let mut a = x.clone();
        for k in 0..self.layers.len() {
            let z = self.layers[k].forward(&a, training, training)?;
            a = if self.activations[k] == Activation::Softmax {
                z
            } else {
                let mut out = Matrix::zeros(z.rows(), z.cols());
                for s in 0..z.rows() {
                    out.row_mut(s).copy_from_slice(&self.activations[k].apply(z.row(s)));
                }
                out
            };
        }
        Ok(a)
    }

    /// One training step on a classification batch; returns the mean loss.
    pub fn train_batch_ce(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        lr: f64,
    ) -> Result<f64, SimError> {
        let logits = self.forward(x, true)?;
        let (loss, grad) = cross_entropy_with_logits(&logits, labels);
        self.backward_and_update(grad, lr)?;
        Ok(loss)
    }

    /// One training step on a regression batch (MSE).
    pub fn train_batch_mse(
        &mut self,
        x: &Matrix,
        target: &Matrix,
        lr: f64,
    ) -> Result<f64, SimError> {
        let pred = self.forward(x, true)?;
        let (loss, grad_a) = mse_loss(&pred, target);
        let last = self.layers.len() - 1;
        let mut delta = grad_a;
        if self.activations[last] != Activation::Identity {
            for s in 0..delta.rows() {
                for c in 0..delta.cols() {
                    let z = self.layers[last].cached_z(s)[c];
                    let a = self.activations[last].apply(&[z])[0];
                    let dv = delta.get(s, c) * self.activations[last].derivative(z, a);
                    delta.set(s, c, dv);
                }
            }
        }
        self.backward_and_update(delta, lr)?;
        Ok(loss)
    }

    /// Backpropagate a gradient w.r.t. the final pre-activation and apply all
    /// layer updates.
    pub fn backward_and_update(&mut self, delta_last: Matrix, lr: f64) -> Result<(), SimError> {
        let deltas = self.backward_only(delta_last)?;
        for (k, delta) in deltas.iter().enumerate().rev() {
            self.layers[k].apply_update(delta, lr)?;
        }
        Ok(())
    }

    /// Backward pass without updates; returns per-layer pre-activation
    /// gradients.
    pub fn backward_only(&mut self, delta_last: Matrix) -> Result<Vec<Matrix>, SimError> {
        let n = self.layers.len();
        let mut deltas = vec![Matrix::zeros(0, 0); n];
        deltas[n - 1] = delta_last;
        for k in (0..n).rev() {
            let delta = deltas[k].clone();
            let grad_in = self.layers[k].backward(&delta)?;
            if k > 0 {
                let act = self.activations[k - 1];
                let mut d_prev = grad_in;
                for s in 0..d_prev.rows() {
                    for c in 0..d_prev.cols() {
                        let z = self.layers[k - 1].cached_z(s)[c];
                        let a = act.apply(&[z])[0];
                        let dv = d_prev.get(s, c) * act.derivative(z, a);
                        d_prev.set(s, c, dv);
                    }
                }
                deltas[k - 1] = d_prev;
            }
        }
        Ok(deltas)
    }

    pub fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>, SimError> {
        let out = self.forward(x, false)?;
        Ok((0..out.rows())
            .map(|s| {
                out.row(s)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect())
    }

    pub fn accuracy(&mut self, x: &Matrix, labels: &[usize]) -> Result<f64, SimError> {
        let pred = self.predict(x)?;
        let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(correct as f64 / labels.len().max(1) as f64)
    }

    /// Post-training input-range calibration: noise-free forward, reservoir
    /// cache of absolute tile inputs, quantile per tile.
    pub fn calibrate_input_ranges(
        &mut self,
        data: &Matrix,
        quantile: f64,
        max_samples: usize,
        moving_average: bool,
        stream: &mut RandomStream,
    ) -> Result<Vec<f64>, SimError> {
        if !(0.5 < quantile && quantile <= 1.0) {
            return Err(SimError::invalid("quantile", "must be in (0.5, 1]"));
        }
        if data.rows() == 0 {
            return Err(SimError::DegenerateInput("no data provided".into()));
        }
        let mut caches: Vec<Vec<CalibrationCache>> = self
            .layers
            .iter()
            .map(|l| {
                (0..l.tile_count())
                    .map(|_| CalibrationCache::new(max_samples, moving_average))
                    .collect()
            })
            .collect();
        for s in 0..data.rows() {
            let mut a: Vec<f64> = data.row(s).to_vec();
            for (k, layer) in self.layers.iter().enumerate() {
                for (t_idx, tile) in layer.tiles.iter().enumerate() {
                    let xs = &a[tile.in_start..tile.in_start + tile.in_size];
                    let abs: Vec<f64> = xs.iter().map(|v| v.abs()).collect();
                    caches[k][t_idx].push_batch(&abs, quantile, stream);
                }
                let w = layer.get_weights();
                let mut z = vec![0.0; layer.out_features()];
                for i in 0..layer.out_features() {
                    z[i] = w.row(i).iter().zip(&a).map(|(wv, av)| wv * av).sum::<f64>()
                        + layer.bias[i];
                }
                a = if self.activations[k] == Activation::Softmax {
                    z
                } else {
                    self.activations[k].apply(&z)
                };
            }
        }
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter_mut().enumerate() {
            for (t_idx, tile) in layer.tiles.iter_mut().enumerate() {
                let ir = caches[k][t_idx].quantile(quantile)?.max(1e-6);
                tile.input_range = InputRange::new(ir);
                out.push(ir);
            }
        }
        Ok(out)
    }

    /// Re-derive all per-tile noise streams from a fresh base; evaluation
    /// repetitions use this so their stochastic forward passes are
    /// independent while remaining reproducible.
    pub fn reseed_noise_streams(&mut self, base: &RandomStream) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            for (t_idx, tile) in layer.tiles.iter_mut().enumerate() {
                let tag = ((k as u64) << 24) | ((t_idx as u64) << 4);
                tile.forward_stream = base.derive(tag | 2);
                tile.backward_stream = base.derive(tag | 3);
                tile.update_stream = base.derive(tag | 4);
                tile.modifier_stream = base.derive(tag | 5);
            }
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut widths = vec![self.layers[0].in_features()];
        for l in &self.layers {
            widths.push(l.out_features());
        }
        Checkpoint {
            widths,
            activations: self.activations.iter().map(|a| a.name().to_string()).collect(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerCheckpoint {
                    analog_weights: l.analog_weights(),
                    out_scales: l.out_scales.clone(),
                    bias: l.bias.clone(),
                    input_ranges: l.input_ranges(),
                })
                .collect(),
        }
    }

    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<(), SimError> {
        if ckpt.layers.len() != self.layers.len() {
            return Err(SimError::DimensionMismatch("checkpoint layer count".into()));
        }
        for (layer, lc) in self.layers.iter_mut().zip(&ckpt.layers) {
            layer.set_analog_weights(&lc.analog_weights)?;
            layer.out_scales = lc.out_scales.clone();
            layer.bias = lc.bias.clone();
            layer.set_input_ranges(&lc.input_ranges);
        }
        Ok(())
    }
}

/// A model whose tiles have been programmed onto conductances once; every
/// inference time drifts from that same programmed state.
pub struct ProgrammedModel {
    base: Mlp,
    tiles: Vec<Vec<ProgrammedTile>>,
    /// Per-tile normalization absorbed into the output at readout.
    norms: Vec<Vec<f64>>,
    io: IoParams,
}

impl ProgrammedModel {
    pub fn program(
        mlp: &Mlp,
        model: &NoiseModel,
        stream: &mut RandomStream,
    ) -> Result<Self, SimError> {
        let io = mlp.layers[0].config.forward.clone();
        let mut tiles = Vec::new();
        let mut norms = Vec::new();
        for (k, layer) in mlp.layers.iter().enumerate() {
            let mut row = Vec::new();
            let mut nrow = Vec::new();
            for (t_idx, tile) in layer.tiles.iter().enumerate() {
                let w = tile.weights();
                // Conductance conversion requires weights in [-1, 1]; fold any
                // excess into the readout normalization.
                let m = w.max_abs().max(1.0);
                let target = w.map(|v| v / m);
                let mut prog_stream = stream.derive((k as u64) << 16 | t_idx as u64);
                let programmed = inference::program(&target, model, &io, &mut prog_stream)?;
                row.push(programmed);
                nrow.push(m);
            }
            tiles.push(row);
            norms.push(nrow);
        }
        Ok(Self { base: mlp.clone(), tiles, norms, io })
    }

    /// Corrupted model at inference time `t_inf` (seconds after programming).
    pub fn at_time(
        &self,
        t_inf: f64,
        model: &NoiseModel,
        compensation: bool,
        stream: &mut RandomStream,
    ) -> Result<Mlp, SimError> {
        let mut mlp = self.base.clone();
        for (k, layer) in mlp.layers.iter_mut().enumerate() {
            for (t_idx, tile) in layer.tiles.iter_mut().enumerate() {
                let programmed = &self.tiles[k][t_idx];
                let drifted = inference::drift_to(programmed, t_inf, model, stream)?;
                let gamma = if compensation && model.enabled {
                    inference::compensation_factor(
                        &drifted,
                        programmed.baseline(),
                        &self.io,
                        stream,
                    )?
                } else {
                    1.0
                };
                let norm = self.norms[k][t_idx];
                let restored = drifted.map(|v| v * norm);
                match &mut tile.backend {
                    TileBackend::Hwa(w) => *w = restored,
                    TileBackend::InMemory(c) => {
                        c.w_array_mut().set_effective_weights(&restored)?;
                    }
                }
                tile.output_gamma = gamma;
            }
        }
        Ok(mlp)
    }
}
