//! Experiment orchestration: training runs, inference evaluation over a time
//! grid with repetitions, parameter sweeps, device fitting, and response
//! traces. All runs are deterministic in (spec, seed) and independent of the
//! worker count.

pub mod data;
pub mod results;

use std::path::Path;

use rayon::prelude::*;

use crate::config::{ExperimentSpec, RunMode, TileConfig};
use crate::device::{fit_device, simulate_response, DeviceKind, DeviceParams, FitProtocol};
use crate::error::SimError;
use crate::nn::{Mlp, ProgrammedModel};
use crate::num::{Matrix, RandomStream};

pub use data::{build_datasets, load_idx_dataset, Dataset};
pub use results::{aggregate, sort_records, write_metrics_csv, write_summary_json, ResultRecord};

/// Outcome of a run: ordered records plus optional trained checkpoints.
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub checkpoints: Vec<(String, crate::nn::Checkpoint)>,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, SimError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::DegenerateInput(format!("worker pool: {e}")))
}

fn train_seeds(spec: &ExperimentSpec) -> Vec<u64> {
    if spec.train_seeds.is_empty() {
        vec![spec.seed]
    } else {
        spec.train_seeds.clone()
    }
}

fn batch_of(dataset: &Dataset, idx: &[usize]) -> (Matrix, Vec<usize>) {
    let mut x = Matrix::zeros(idx.len(), dataset.features());
    let mut labels = Vec::with_capacity(idx.len());
    for (row, &i) in idx.iter().enumerate() {
        x.row_mut(row).copy_from_slice(dataset.x.row(i));
        labels.push(dataset.labels[i]);
    }
    (x, labels)
}

/// Train one model per the optimizer schedule; returns the model and the
/// per-epoch metric records.
pub fn train_model(
    spec: &ExperimentSpec,
    tile: &TileConfig,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
    run_id: &str,
) -> Result<(Mlp, Vec<ResultRecord>), SimError> {
    let mode = spec.tile_mode();
    let kind = spec.compound_kind()?;
    let mut model_stream = RandomStream::new(seed, 0x6d6f_6465);
    let mut mlp = Mlp::from_network_spec(&spec.network, tile, mode, kind, &mut model_stream)?;
    let mut shuffle_stream = model_stream.derive(0x7368_7566);

    let mut records = Vec::new();
    let mut lr = spec.optimizer.lr;
    let mut idx: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..spec.optimizer.epochs {
        if spec.optimizer.lr_decay_epochs.contains(&epoch) {
            lr *= spec.optimizer.lr_decay;
        }
        shuffle_stream.shuffle(&mut idx);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in idx.chunks(spec.optimizer.batch_size) {
            let (x, labels) = batch_of(train, chunk);
            loss_sum += mlp.train_batch_ce(&x, &labels, lr)?;
            batches += 1;
        }
        let acc = mlp.accuracy(&test.x, &test.labels)?;
        let epoch_t = epoch as f64;
        records.push(ResultRecord::new(run_id, seed, epoch_t, "train_loss", loss_sum / batches.max(1) as f64));
        records.push(ResultRecord::new(run_id, seed, epoch_t, "test_accuracy", acc));
    }
    let final_acc = mlp.accuracy(&test.x, &test.labels)?;
    records.push(ResultRecord::new(run_id, seed, spec.optimizer.epochs as f64, "final_test_accuracy", final_acc));
    Ok((mlp, records))
}

fn run_train(spec: &ExperimentSpec, workers: usize) -> Result<RunOutput, SimError> {
    let mut data_stream = RandomStream::new(spec.seed, 0x6461_7461);
    let (train, test) = build_datasets(&spec.dataset, &mut data_stream)?;
    let seeds = train_seeds(spec);
    let jobs: Vec<(u64, String)> = seeds
        .iter()
        .map(|&s| (s, format!("train-{}-s{}", spec.optimizer.name, s)))
        .collect();
    let outputs: Vec<Result<(Vec<ResultRecord>, (String, crate::nn::Checkpoint)), SimError>> =
        pool(workers)?.install(|| {
            jobs.par_iter()
                .map(|(seed, run_id)| {
                    let (mlp, records) =
                        train_model(spec, &spec.tile, &train, &test, *seed, run_id)?;
                    Ok((records, (run_id.clone(), mlp.checkpoint())))
                })
                .collect()
        });
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    for out in outputs {
        let (r, c) = out?;
        records.extend(r);
        checkpoints.push(c);
    }
    sort_records(&mut records);
    Ok(RunOutput { records, checkpoints })
}

/// Evaluate a trained model under programming noise and drift over the time
/// grid; one programming per repetition, all times drifted from it.
pub fn infer_eval_model(
    spec: &ExperimentSpec,
    mlp: &Mlp,
    test: &Dataset,
) -> Result<Vec<ResultRecord>, SimError> {
    let noise = &spec.tile.noise_model;
    let rep_seeds: Vec<u64> = if spec.eval.seeds.is_empty() {
        (0..spec.eval.repetitions as u64).map(|r| spec.seed.wrapping_add(1000 + r)).collect()
    } else {
        spec.eval.seeds.clone()
    };
    let mut records = Vec::new();
    for (rep, &rep_seed) in rep_seeds.iter().enumerate() {
        let rep_stream = RandomStream::new(rep_seed, 0x6576_616c);
        let mut prog_stream = rep_stream.derive(2);
        let programmed = ProgrammedModel::program(mlp, noise, &mut prog_stream)?;
        let run_id = format!("infer-r{rep}");
        for (t_idx, &t) in spec.eval.time_grid.iter().enumerate() {
            let mut drift_stream = rep_stream.derive(100 + t_idx as u64);
            let mut model_t =
                programmed.at_time(t, noise, spec.eval.drift_compensation, &mut drift_stream)?;
            // Identical forward-noise streams at every time point, so a
            // disabled noise model yields identical metrics across the grid.
            model_t.reseed_noise_streams(&rep_stream.derive(7));
            let acc = model_t.accuracy(&test.x, &test.labels)?;
            records.push(ResultRecord::new(&run_id, rep_seed, t, "test_accuracy", acc));
        }
    }
    Ok(records)
}

fn run_infer_eval(spec: &ExperimentSpec, workers: usize) -> Result<RunOutput, SimError> {
    let mut data_stream = RandomStream::new(spec.seed, 0x6461_7461);
    let (train, test) = build_datasets(&spec.dataset, &mut data_stream)?;

    // Obtain the model: from a checkpoint file or trained in-run.
    let mut base_records = Vec::new();
    let mlp = if spec.eval.checkpoint.is_empty() {
        let (mlp, records) =
            train_model(spec, &spec.tile, &train, &test, spec.seed, "pretrain")?;
        base_records = records;
        mlp
    } else {
        let text = std::fs::read_to_string(&spec.eval.checkpoint).map_err(|e| {
            SimError::config("eval.checkpoint", format!("{}: {e}", spec.eval.checkpoint))
        })?;
        let ckpt: crate::nn::Checkpoint = serde_json::from_str(&text)
            .map_err(|e| SimError::config("eval.checkpoint", e.to_string()))?;
        let mut stream = RandomStream::new(spec.seed, 0x6d6f_6465);
        let mut mlp = Mlp::from_network_spec(
            &spec.network,
            &spec.tile,
            spec.tile_mode(),
            spec.compound_kind()?,
            &mut stream,
        )?;
        mlp.restore(&ckpt)?;
        mlp
    };

    // Repetitions are independent work items; chunk them across workers.
    let rep_seeds: Vec<u64> = if spec.eval.seeds.is_empty() {
        (0..spec.eval.repetitions as u64).map(|r| spec.seed.wrapping_add(1000 + r)).collect()
    } else {
        spec.eval.seeds.clone()
    };
    let jobs: Vec<(usize, u64)> = rep_seeds.iter().copied().enumerate().collect();
    let outputs: Vec<Result<Vec<ResultRecord>, SimError>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(rep, rep_seed)| {
                let mut one = spec.clone();
                one.eval.seeds = vec![rep_seed];
                let mut records = infer_eval_model(&one, &mlp, &test)?;
                for r in records.iter_mut() {
                    r.run_id = format!("infer-r{rep}");
                }
                Ok(records)
            })
            .collect()
    });
    let mut records = base_records;
    for out in outputs {
        records.extend(out?);
    }
    sort_records(&mut records);
    let checkpoints = vec![("pretrained".to_string(), mlp.checkpoint())];
    Ok(RunOutput { records, checkpoints })
}

fn run_sweep(spec: &ExperimentSpec, workers: usize) -> Result<RunOutput, SimError> {
    let mut data_stream = RandomStream::new(spec.seed, 0x6461_7461);
    let (train, test) = build_datasets(&spec.dataset, &mut data_stream)?;
    let seeds = train_seeds(spec);
    let mut jobs = Vec::new();
    for &factor in &spec.sweep.factors {
        for &seed in &seeds {
            jobs.push((factor, seed));
        }
    }
    let outputs: Vec<Result<Vec<ResultRecord>, SimError>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(factor, seed)| {
                let mut tile = spec.tile.clone();
                for path in &spec.sweep.parameter {
                    tile.scale_parameter(path, factor)?;
                }
                let run_id = format!("sweep-f{factor}-s{seed}");
                let (_, mut records) = train_model(spec, &tile, &train, &test, seed, &run_id)?;
                // The sweep emits factor vs final metric: time_s carries the
                // factor for the per-factor aggregates.
                let final_acc = records
                    .iter()
                    .find(|r| r.metric == "final_test_accuracy")
                    .map(|r| r.value)
                    .unwrap_or(0.0);
                records.retain(|r| r.metric != "final_test_accuracy");
                records.push(ResultRecord::new(&run_id, seed, factor, "final_test_accuracy", final_acc));
                Ok(records)
            })
            .collect()
    });
    let mut records = Vec::new();
    for out in outputs {
        records.extend(out?);
    }
    sort_records(&mut records);
    Ok(RunOutput { records, checkpoints: Vec::new() })
}

fn parse_device_kind(name: &str) -> Result<DeviceKind, SimError> {
    match name {
        "constant_step" => Ok(DeviceKind::ConstantStep),
        "linear_step" => Ok(DeviceKind::LinearStep),
        "soft_bounds" => Ok(DeviceKind::SoftBounds),
        "soft_bounds_reference" => Ok(DeviceKind::SoftBoundsReference),
        "pow_step" => Ok(DeviceKind::PowStep),
        "exp_step" => Ok(DeviceKind::ExpStep),
        "piecewise_step" => Ok(DeviceKind::PiecewiseStep),
        other => Err(SimError::config("fit.kind", format!("unknown device kind '{other}'"))),
    }
}

/// Parse a measurement trace CSV: header `pulse_index,direction,conductance_uS`.
pub fn read_trace_csv(path: &Path) -> Result<Vec<f64>, SimError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::DataFormat(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SimError::DataFormat("empty trace file".into()))?;
    let expected = "pulse_index,direction,conductance_uS";
    if header.trim() != expected {
        return Err(SimError::DataFormat(format!(
            "bad trace header '{header}' (expected '{expected}')"
        )));
    }
    let mut trace = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(SimError::DataFormat(format!("line {}: need 3 fields", lineno + 2)));
        }
        let g: f64 = fields[2].trim().parse().map_err(|_| {
            SimError::DataFormat(format!("line {}: bad conductance '{}'", lineno + 2, fields[2]))
        })?;
        trace.push(g);
    }
    Ok(trace)
}

/// Write a response trace CSV: header `pulse_index,weight`.
pub fn write_response_csv(trace: &[f64], path: &Path) -> Result<(), SimError> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "pulse_index,weight")?;
    for (i, w) in trace.iter().enumerate() {
        writeln!(f, "{},{}", i, w)?;
    }
    Ok(())
}

/// Serialize fitted device parameters as a `[device]` TOML fragment.
pub fn device_toml_fragment(params: &DeviceParams) -> String {
    #[derive(serde::Serialize)]
    struct Wrapper<'a> {
        device: &'a DeviceParams,
    }
    toml::to_string_pretty(&Wrapper { device: params }).unwrap()
}

fn run_fit_device(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunOutput, SimError> {
    if spec.fit.trace.is_empty() {
        return Err(SimError::config("fit.trace", "no trace file given"));
    }
    let trace = read_trace_csv(Path::new(&spec.fit.trace))?;
    let kind = parse_device_kind(&spec.fit.kind)?;
    let fit = fit_device(&trace, &spec.fit.protocol, kind)?;
    std::fs::write(out_dir.join("device_fit.toml"), device_toml_fragment(&fit.params))?;
    let records = vec![
        ResultRecord::new("fit-device", spec.seed, 0.0, "residual_rms", fit.residual_rms),
        ResultRecord::new("fit-device", spec.seed, 0.0, "dw_min", fit.params.dw_min),
        ResultRecord::new("fit-device", spec.seed, 0.0, "w_max", fit.params.w_max),
        ResultRecord::new("fit-device", spec.seed, 0.0, "w_min", fit.params.w_min),
        ResultRecord::new("fit-device", spec.seed, 0.0, "up_down", fit.params.up_down),
    ];
    Ok(RunOutput { records, checkpoints: Vec::new() })
}

fn run_plot_response(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunOutput, SimError> {
    let protocol = FitProtocol {
        n_up: spec.response.n_up,
        n_down: spec.response.n_down,
        n_pairs: spec.response.n_pairs,
    };
    let mut stream = RandomStream::new(spec.seed, 0x7265_7370);
    let trace = simulate_response(&spec.tile.device, &protocol.directions(), &mut stream)?;
    write_response_csv(&trace, &out_dir.join("response.csv"))?;
    let records = vec![ResultRecord::new(
        "plot-response",
        spec.seed,
        0.0,
        "trace_points",
        trace.len() as f64,
    )];
    Ok(RunOutput { records, checkpoints: Vec::new() })
}

/// Execute a run and write metrics.csv / summary.json (and checkpoints) into
/// `out_dir`.
pub fn execute(
    spec: &ExperimentSpec,
    command: Command,
    out_dir: &Path,
    workers: usize,
) -> Result<RunOutput, SimError> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let output = match command {
        Command::Train => run_train(spec, workers)?,
        Command::InferEval => run_infer_eval(spec, workers)?,
        Command::Sweep => run_sweep(spec, workers)?,
        Command::FitDevice => run_fit_device(spec, out_dir)?,
        Command::PlotResponse => run_plot_response(spec, out_dir)?,
    };
    write_metrics_csv(&output.records, &out_dir.join("metrics.csv"))?;
    write_summary_json(&output.records, &out_dir.join("summary.json"))?;
    for (name, ckpt) in &output.checkpoints {
        let path = out_dir.join(format!("checkpoint-{name}.json"));
        std::fs::write(path, serde_json::to_string_pretty(ckpt).unwrap())?;
    }
    Ok(output)
}

/// CLI subcommands; `Train`/`InferEval`/`Sweep` may override the config mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    InferEval,
    Sweep,
    FitDevice,
    PlotResponse,
}

impl Command {
    /// The run mode this command requires, if any.
    pub fn expected_mode(&self) -> Option<RunMode> {
        match self {
            Command::Train => None, // train_inmemory or train_hwa
            Command::InferEval => Some(RunMode::InferEval),
            Command::Sweep => Some(RunMode::Sweep),
            Command::FitDevice | Command::PlotResponse => None,
        }
    }
}
