//! TOML-facing configuration: the full tile hardware description
//! (forward/backward IO, update pulsing, device model, mapping, HWA
//! transforms, inference noise model) and the experiment specification.

use serde::{Deserialize, Serialize};

use crate::compound::{CompoundKind, CompoundParams};
use crate::device::DeviceParams;
use crate::error::SimError;
use crate::hwa::{ClipParams, InputRangeParams, ModifierParams, RemapParams};
use crate::inference::NoiseModel;
use crate::mvm::IoParams;
use crate::update::UpdateParams;

/// Weight-to-tile mapping and periphery settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingParams {
    /// Maximal tile input size; larger layers are split across tiles.
    pub max_in_size: usize,
    /// Maximal tile output size; 0 = no output splitting.
    pub max_out_size: usize,
    /// Initial weight mapping target: analog weight used for max |W|.
    /// None = mode default (0.3 for in-memory training, 1.0 for inference).
    pub weight_scaling_omega: Option<f64>,
    pub weight_scaling_columnwise: bool,
    pub learn_out_scaling: bool,
    pub digital_bias: bool,
}

impl Default for MappingParams {
    fn default() -> Self {
        Self {
            max_in_size: 512,
            max_out_size: 0,
            weight_scaling_omega: None,
            weight_scaling_columnwise: false,
            learn_out_scaling: false,
            digital_bias: true,
        }
    }
}

impl MappingParams {
    pub fn validate(&self, path: &str) -> Result<(), SimError> {
        if self.max_in_size == 0 {
            return Err(SimError::config(&format!("{path}.max_in_size"), "must be >= 1"));
        }
        if self.max_out_size != 0 {
            return Err(SimError::config(
                &format!("{path}.max_out_size"),
                "output splitting is not supported; use 0",
            ));
        }
        if let Some(w) = self.weight_scaling_omega {
            if w < 0.0 {
                return Err(SimError::config(
                    &format!("{path}.weight_scaling_omega"),
                    "must be >= 0",
                ));
            }
        }
        Ok(())
    }

    pub fn omega(&self, mode: TileMode) -> f64 {
        self.weight_scaling_omega.unwrap_or(match mode {
            TileMode::InMemory => 0.3,
            TileMode::HwaInference => 1.0,
        })
    }
}

/// Pre/post digital processing around the tile.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrePostParams {
    pub input_range: InputRangeParams,
}

/// Whether a tile supports in-memory training (analog backward + pulsed
/// update) or is an inference-only design trained hardware-aware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TileMode {
    #[default]
    InMemory,
    HwaInference,
}

/// The full hardware description of one analog tile.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileConfig {
    pub forward: IoParams,
    pub backward: IoParams,
    pub update: UpdateParams,
    pub device: DeviceParams,
    pub compound: CompoundParams,
    pub mapping: MappingParams,
    pub modifier: ModifierParams,
    pub clip: ClipParams,
    pub remap: RemapParams,
    pub pre_post: PrePostParams,
    pub noise_model: NoiseModel,
}

impl TileConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.forward.validate("forward")?;
        self.backward.validate("backward")?;
        self.update.validate("update")?;
        self.device.validate("device")?;
        self.compound.validate("compound")?;
        self.mapping.validate("mapping")?;
        self.modifier.validate("modifier")?;
        self.clip.validate("clip")?;
        self.remap.validate("remap")?;
        self.pre_post.input_range.validate("pre_post.input_range")?;
        self.noise_model.validate("noise_model")?;
        Ok(())
    }

    /// Multiply the parameter at a dotted path by `factor` (sweep support).
    pub fn scale_parameter(&mut self, path: &str, factor: f64) -> Result<(), SimError> {
        let target: &mut f64 = match path {
            "device.dw_min" => &mut self.device.dw_min,
            "device.dw_min_std" => &mut self.device.dw_min_std,
            "device.dw_min_dtod" => &mut self.device.dw_min_dtod,
            "device.w_max_std" => &mut self.device.w_max_std,
            "device.w_min_std" => &mut self.device.w_min_std,
            "device.up_down" => &mut self.device.up_down,
            "forward.out_noise" => &mut self.forward.out_noise,
            "forward.w_noise" => &mut self.forward.w_noise,
            "forward.inp_noise" => &mut self.forward.inp_noise,
            "forward.ir_drop" => &mut self.forward.ir_drop,
            "backward.out_noise" => &mut self.backward.out_noise,
            "compound.fast_lr" => &mut self.compound.fast_lr,
            "compound.auto_granularity" => &mut self.compound.auto_granularity,
            "compound.transfer_lr" => &mut self.compound.transfer_lr,
            "modifier.std_dev" => &mut self.modifier.std_dev,
            "noise_model.nu_mean" => &mut self.noise_model.nu_mean,
            "noise_model.nu_std" => &mut self.noise_model.nu_std,
            "noise_model.read_noise_scale" => &mut self.noise_model.read_noise_scale,
            other => {
                return Err(SimError::config(
                    "sweep.parameter",
                    format!("unknown parameter path '{other}'"),
                ))
            }
        };
        *target *= factor;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    TrainInmemory,
    TrainHwa,
    InferEval,
    Sweep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// "synthetic_blobs" or "mnist_idx".
    pub kind: String,
    /// Directory containing the IDX files (mnist_idx).
    pub path: String,
    /// Subset sizes; 0 = all available.
    pub train_size: usize,
    pub test_size: usize,
    /// Synthetic blobs: feature dimension, class count, cluster spread.
    pub features: usize,
    pub classes: usize,
    pub spread: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: "synthetic_blobs".into(),
            path: String::new(),
            train_size: 0,
            test_size: 0,
            features: 8,
            classes: 2,
            spread: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// Layer widths including input, e.g. [64, 128, 64, 10].
    pub widths: Vec<usize>,
    /// One activation per layer: relu | sigmoid | tanh | softmax | identity.
    pub activations: Vec<String>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            widths: vec![64, 128, 64, 10],
            activations: vec!["sigmoid".into(), "sigmoid".into(), "softmax".into()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    /// sgd | mixed-precision | tiki-taka | ttv2 (in-memory), or "fp" /
    /// "hwa" for digital training of inference tiles.
    pub name: String,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs at which the learning rate is multiplied by lr_decay.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            name: "sgd".into(),
            lr: 0.1,
            batch_size: 10,
            epochs: 20,
            lr_decay_epochs: vec![10, 16],
            lr_decay: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Inference times in seconds, ascending.
    pub time_grid: Vec<f64>,
    pub repetitions: usize,
    /// Per-repetition seeds; empty = derived from the base seed.
    pub seeds: Vec<u64>,
    pub drift_compensation: bool,
    /// Optional checkpoint to evaluate instead of training in-run.
    pub checkpoint: String,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            time_grid: vec![60.0, 3600.0, 86400.0, 31_536_000.0],
            repetitions: 10,
            seeds: Vec::new(),
            drift_compensation: true,
            checkpoint: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Single dotted path or several paths all scaled by the same factor.
    pub parameter: Vec<String>,
    pub factors: Vec<f64>,
}

/// Device-fitting job description (fit-device subcommand).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSpec {
    pub trace: String,
    pub kind: String,
    pub protocol: crate::device::FitProtocol,
}

impl Default for FitSpec {
    fn default() -> Self {
        Self {
            trace: String::new(),
            kind: "soft_bounds_reference".into(),
            protocol: crate::device::FitProtocol::default(),
        }
    }
}

/// Response-curve simulation job (plot-response subcommand).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseSpec {
    pub n_up: usize,
    pub n_down: usize,
    pub n_pairs: usize,
}

impl Default for ResponseSpec {
    fn default() -> Self {
        Self { n_up: 200, n_down: 200, n_pairs: 100 }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: RunMode,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub network: NetworkSpec,
    pub optimizer: OptimizerSpec,
    pub eval: EvalSpec,
    pub sweep: SweepSpec,
    pub fit: FitSpec,
    pub response: ResponseSpec,
    pub tile: TileConfig,
    /// Training seeds for multi-seed train/sweep runs; empty = [seed].
    pub train_seeds: Vec<u64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            mode: RunMode::TrainInmemory,
            seed: 42,
            dataset: DatasetSpec::default(),
            network: NetworkSpec::default(),
            optimizer: OptimizerSpec::default(),
            eval: EvalSpec::default(),
            sweep: SweepSpec::default(),
            fit: FitSpec::default(),
            response: ResponseSpec::default(),
            tile: TileConfig::default(),
            train_seeds: Vec::new(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: ExperimentSpec = toml::from_str(text)
            .map_err(|e| SimError::config("<config>", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.tile.validate()?;
        if self.network.widths.len() < 2 {
            return Err(SimError::config("network.widths", "need at least input and output"));
        }
        if self.network.activations.len() != self.network.widths.len() - 1 {
            return Err(SimError::config(
                "network.activations",
                format!(
                    "need exactly {} activations for {} layers",
                    self.network.widths.len() - 1,
                    self.network.widths.len() - 1
                ),
            ));
        }
        if self.optimizer.lr <= 0.0 {
            return Err(SimError::config("optimizer.lr", "must be > 0"));
        }
        if self.optimizer.batch_size == 0 || self.optimizer.epochs == 0 {
            return Err(SimError::config("optimizer.batch_size/epochs", "must be >= 1"));
        }
        if self.eval.repetitions == 0 {
            return Err(SimError::config("eval.repetitions", "must be >= 1"));
        }
        let mut last = 0.0;
        for &t in &self.eval.time_grid {
            if t < last {
                return Err(SimError::config("eval.time_grid", "must be ascending"));
            }
            last = t;
        }
        if self.mode == RunMode::Sweep {
            if self.sweep.parameter.is_empty() || self.sweep.factors.is_empty() {
                return Err(SimError::config("sweep", "needs parameter path(s) and factors"));
            }
            for &f in &self.sweep.factors {
                if f < 0.0 {
                    return Err(SimError::config("sweep.factors", "must be >= 0"));
                }
            }
            // Paths must resolve.
            let mut probe = self.tile.clone();
            for p in &self.sweep.parameter {
                probe.scale_parameter(p, 1.0)?;
            }
        }
        match self.dataset.kind.as_str() {
            "synthetic_blobs" | "mnist_idx" => {}
            other => {
                return Err(SimError::config(
                    "dataset.kind",
                    format!("unknown dataset kind '{other}'"),
                ))
            }
        }
        Ok(())
    }

    /// The tile mode implied by the run mode / optimizer.
    pub fn tile_mode(&self) -> TileMode {
        match self.mode {
            RunMode::TrainInmemory => TileMode::InMemory,
            RunMode::TrainHwa | RunMode::InferEval => TileMode::HwaInference,
            RunMode::Sweep => {
                if matches!(self.optimizer.name.as_str(), "fp" | "hwa") {
                    TileMode::HwaInference
                } else {
                    TileMode::InMemory
                }
            }
        }
    }

    pub fn compound_kind(&self) -> Result<Option<CompoundKind>, SimError> {
        match self.tile_mode() {
            TileMode::HwaInference => Ok(None),
            TileMode::InMemory => CompoundKind::from_name(&self.optimizer.name).map(Some),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_validates() {
        ExperimentSpec::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let spec = ExperimentSpec::default();
        let text = toml::to_string(&spec).unwrap();
        let back = ExperimentSpec::from_toml(&text).unwrap();
        assert_eq!(back.network.widths, spec.network.widths);
    }

    #[test]
    fn unknown_field_rejected_with_path() {
        let text = "[tile.forward]\nout_nois = 0.1\n";
        let err = ExperimentSpec::from_toml(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("out_nois"), "unhelpful message: {msg}");
    }

    #[test]
    fn bad_activation_count_rejected() {
        let mut spec = ExperimentSpec::default();
        spec.network.activations.pop();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sweep_unknown_path_rejected() {
        let mut spec = ExperimentSpec::default();
        spec.mode = RunMode::Sweep;
        spec.sweep.parameter = vec!["device.nope".into()];
        spec.sweep.factors = vec![1.0];
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("unknown parameter path"));
    }

    #[test]
    fn scale_parameter_multiplies() {
        let mut tile = TileConfig::default();
        let before = tile.device.dw_min;
        tile.scale_parameter("device.dw_min", 2.0).unwrap();
        assert_eq!(tile.device.dw_min, before * 2.0);
    }

    #[test]
    fn descending_time_grid_rejected() {
        let mut spec = ExperimentSpec::default();
        spec.eval.time_grid = vec![100.0, 50.0];
        assert!(spec.validate().is_err());
    }
}
