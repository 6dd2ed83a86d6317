//! Dataset assembly, the combined L1+Dice loss, the training loop with
//! cosine-annealed Adam, evaluation, and the ablation runner.

use crate::autodiff::{adam_step, cosine_lr, AdamHyper, AdamState, Tape, Var};
use crate::autodiff::Tensor;
use crate::layout::Layout;
use crate::metrics::{self, MetricsReport};
use crate::model::{bind, forward, ModelConfig, ModelParams, Variant};
use crate::oracle::simulate_dynamic;
use crate::pdngraph::{build_graph, tile_grid, PdnGraph, TileGrid};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::Path;

/// One training/evaluation case: the graph, its grid geometry, and the
/// peak drop label min-max normalized to [0,1] (raw volt range kept for
/// back-conversion).
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub graph: PdnGraph,
    pub grid: TileGrid,
    pub label_norm: Tensor,
    pub label_min_v: f64,
    pub label_max_v: f64,
}

impl Sample {
    /// Normalize a raw peak map into a sample.
    pub fn from_parts(id: String, graph: PdnGraph, grid: TileGrid, label_raw: &[f64]) -> Result<Self> {
        if label_raw.len() != graph.n_nodes() {
            return Err(Error::shape(format!(
                "label has {} entries for {} nodes",
                label_raw.len(),
                graph.n_nodes()
            )));
        }
        let lo = label_raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = label_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        let norm: Vec<f64> = if range > 0.0 {
            label_raw.iter().map(|&v| (v - lo) / range).collect()
        } else {
            vec![0.0; label_raw.len()]
        };
        Ok(Sample {
            id,
            label_norm: Tensor::new(vec![graph.n_h, graph.n_w], norm)?,
            graph,
            grid,
            label_min_v: lo,
            label_max_v: hi,
        })
    }
}

/// Run the oracle end to end for one layout: tile, simulate, build the
/// graph, and normalize the peak label.
pub fn make_sample(id: &str, layout: &Layout, dx_um: f64, dy_um: f64) -> Result<Sample> {
    let grid = tile_grid(layout, dx_um, dy_um)?;
    let graph = build_graph(&grid, layout);
    let (_, peak) = simulate_dynamic(layout, &grid)?;
    Sample::from_parts(id.to_string(), graph, grid, &peak.drop_v)
}

/// Load `samples/<id>/{graph.csv,label.csv}` sample directories.
pub fn load_samples(dir: &Path) -> Result<Vec<Sample>> {
    let mut ids: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(Error::invalid(format!(
            "no sample subdirectories under {}",
            dir.display()
        )));
    }
    let samples: Vec<Sample> = ids
        .par_iter()
        .map(|id| -> Result<Sample> {
            let sub = dir.join(id);
            let graph = crate::io::read_graph_csv(&sub.join("graph.csv"))?;
            let (rows, cols, label) = crate::io::read_map_csv(&sub.join("label.csv"))?;
            if (rows, cols) != (graph.n_h, graph.n_w) {
                return Err(Error::shape(format!(
                    "{id}: label {rows}x{cols} vs graph {}x{}",
                    graph.n_h, graph.n_w
                )));
            }
            let grid = TileGrid::bare(graph.n_h, graph.n_w);
            Sample::from_parts(id.clone(), graph, grid, &label)
        })
        .collect::<Result<_>>()?;
    Ok(samples)
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Gradient-accumulation count emulating batches over variable-size
    /// graphs.
    pub batch_size: usize,
    pub rng_seed: u64,
    pub w_l1: f64,
    pub w_dice: f64,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            lr0: 0.0008,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-4,
            epochs: 200,
            batch_size: 4,
            rng_seed: 0,
            w_l1: 1.0,
            w_dice: 1.0,
            model,
        }
    }
}

/// Weighted L1 + Dice objective on normalized maps.
pub fn loss(tape: &mut Tape, pred: Var, label: Var, w_l1: f64, w_dice: f64) -> Result<Var> {
    let l1 = tape.l1_loss(pred, label)?;
    let dice = tape.dice_loss(pred, label)?;
    let l1w = tape.scale(l1, w_l1);
    let dicew = tape.scale(dice, w_dice);
    tape.add(l1w, dicew)
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_nmae: f64,
    pub val_nmae: f64,
}

/// Result of a training run: the best-validation parameters plus the
/// full per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

struct SamplePass {
    loss: f64,
    nmae: f64,
    grads: Option<Vec<Vec<f64>>>,
}

fn run_sample(
    params: &ModelParams,
    config: &TrainConfig,
    sample: &Sample,
    with_grads: bool,
) -> Result<SamplePass> {
    let mut tape = Tape::new();
    let bm = bind(&mut tape, params);
    let pred = forward(&mut tape, &bm, &sample.graph, &config.model)?;
    let label = tape.leaf(sample.label_norm.clone());
    let objective = loss(&mut tape, pred, label, config.w_l1, config.w_dice)?;
    let loss_val = tape.value(objective).item();
    let nmae = metrics::nmae(tape.value(pred).data(), sample.label_norm.data());
    let grads = if with_grads {
        tape.backward(objective)?;
        Some(bm.gradients(&tape))
    } else {
        None
    };
    Ok(SamplePass {
        loss: loss_val,
        nmae,
        grads,
    })
}

/// Predict one sample with fixed parameters.
pub fn predict(params: &ModelParams, model: &ModelConfig, sample: &Sample) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bm = bind(&mut tape, params);
    let pred = forward(&mut tape, &bm, &sample.graph, model)?;
    Ok(tape.value(pred).data().to_vec())
}

/// Train on an 80/20 split of `samples` (shuffled under the run seed).
/// Deterministic given (samples, config); retains the parameters of the
/// epoch with the best validation NMAE.
pub fn train(samples: &[Sample], config: &TrainConfig) -> Result<TrainOutput> {
    if samples.len() < 2 {
        return Err(Error::invalid("training needs at least 2 samples"));
    }
    if config.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    config.model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (samples.len() / 5).max(1);
    let (train_idx, val_idx) = order.split_at(samples.len() - n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let mut params = ModelParams::init(&config.model, config.rng_seed)?;
    let mut adam = AdamState::new(params.tensors());
    let batch = config.batch_size.max(1);
    let steps_per_epoch = train_idx.len().div_ceil(batch);
    let total_steps = config.epochs * steps_per_epoch;

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_nmae = 0.0;
        let mut last_lr = 0.0;
        for chunk in train_idx.chunks(batch) {
            let passes: Vec<SamplePass> = chunk
                .par_iter()
                .map(|&i| run_sample(&params, config, &samples[i], true))
                .collect::<Result<_>>()?;
            let mut grads: Vec<Vec<f64>> = params
                .tensors()
                .iter()
                .map(|t| vec![0.0; t.len()])
                .collect();
            for pass in &passes {
                if !pass.loss.is_finite() {
                    return Err(Error::NanLoss { step });
                }
                epoch_loss += pass.loss;
                epoch_nmae += pass.nmae;
                for (acc, g) in grads.iter_mut().zip(pass.grads.as_ref().unwrap()) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            for g in &mut grads {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            let lr = cosine_lr(step, total_steps, config.lr0)?;
            last_lr = lr;
            let hyper = AdamHyper {
                lr,
                beta1: config.beta1,
                beta2: config.beta2,
                eps: 1e-8,
                weight_decay: config.weight_decay,
            };
            adam_step(params.tensors_mut(), &grads, &mut adam, &hyper)?;
            step += 1;
        }

        let val_passes: Vec<SamplePass> = val_idx
            .par_iter()
            .map(|&i| run_sample(&params, config, &samples[i], false))
            .collect::<Result<_>>()?;
        let val_loss = val_passes.iter().map(|p| p.loss).sum::<f64>() / val_idx.len() as f64;
        let val_nmae = val_passes.iter().map(|p| p.nmae).sum::<f64>() / val_idx.len() as f64;
        let stats = EpochStats {
            epoch,
            lr: last_lr,
            train_loss: epoch_loss / train_idx.len() as f64,
            val_loss,
            train_nmae: epoch_nmae / train_idx.len() as f64,
            val_nmae,
        };
        if best.as_ref().is_none_or(|(b, _, _)| val_nmae < *b) {
            best = Some((val_nmae, epoch, params.clone()));
        }
        history.push(stats);
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutput {
        params: best_params,
        history,
        best_epoch,
        train_ids: train_idx.iter().map(|&i| samples[i].id.clone()).collect(),
        val_ids: val_idx.iter().map(|&i| samples[i].id.clone()).collect(),
    })
}

/// Dataset-level evaluation: per-sample metrics, NaN-excluded means,
/// and the mean-predictor baseline NMAE for context.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_sample: Vec<(String, MetricsReport)>,
    pub mean: [f64; 8],
    pub excluded: [usize; 8],
    pub baseline_nmae: f64,
}

pub fn evaluate(params: &ModelParams, model: &ModelConfig, samples: &[Sample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let per_sample: Vec<(String, MetricsReport)> = samples
        .par_iter()
        .map(|s| -> Result<(String, MetricsReport)> {
            let pred = predict(params, model, s)?;
            let report =
                metrics::compute_all(&pred, s.label_norm.data(), s.graph.n_h, s.graph.n_w);
            Ok((s.id.clone(), report))
        })
        .collect::<Result<_>>()?;
    let (mean, excluded) = crate::io::nan_excluded_mean(per_sample.iter().map(|(_, r)| r.values()));

    let baselines: Vec<f64> = samples
        .iter()
        .map(|s| {
            let label = s.label_norm.data();
            let avg = label.iter().sum::<f64>() / label.len() as f64;
            metrics::nmae(&vec![avg; label.len()], label)
        })
        .filter(|v| !v.is_nan())
        .collect();
    let baseline_nmae = if baselines.is_empty() {
        f64::NAN
    } else {
        baselines.iter().sum::<f64>() / baselines.len() as f64
    };
    Ok(EvalReport {
        per_sample,
        mean,
        excluded,
        baseline_nmae,
    })
}

/// Summary cell of an ablation table.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: String,
    /// Seven cells: nmae, r2, psnr, ssim, pearson, spearman, kendall.
    pub cells: Vec<AblationCell>,
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub variant: String,
    pub seed: u64,
    pub metrics: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub raw: Vec<AblationRun>,
}

impl AblationTable {
    /// Mean NMAE of a variant row (first cell).
    pub fn mean_nmae(&self, variant: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant)
            .map(|r| r.cells[0].mean)
    }
}

/// Train every (variant, seed) pair with identical data and settings,
/// evaluate on the held-out set, and tabulate the seven headline
/// metrics as mean±std across seeds.
pub fn ablation(
    train_samples: &[Sample],
    test_samples: &[Sample],
    base: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<AblationTable> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one variant and seed"));
    }
    let mut raw = Vec::new();
    let mut rows = Vec::new();
    for &variant in variants {
        let mut per_seed: Vec<Vec<f64>> = Vec::new();
        for &seed in seeds {
            let mut config = base.clone();
            config.model.variant = variant;
            config.rng_seed = seed;
            let out = train(train_samples, &config)?;
            let report = evaluate(&out.params, &config.model, test_samples)?;
            // first seven columns of the metric suite (AUC excluded)
            let metrics: Vec<f64> = report.mean[..7].to_vec();
            raw.push(AblationRun {
                variant: variant.name().to_string(),
                seed,
                metrics: metrics.clone(),
            });
            per_seed.push(metrics);
        }
        let n = per_seed.len() as f64;
        let cells: Vec<AblationCell> = (0..7)
            .map(|c| {
                let vals: Vec<f64> = per_seed.iter().map(|m| m[c]).collect();
                let mean = vals.iter().sum::<f64>() / n;
                let std = if vals.len() > 1 {
                    let var =
                        vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                    Some(var.sqrt())
                } else {
                    None
                };
                AblationCell { mean, std }
            })
            .collect();
        rows.push(AblationRow {
            variant: variant.name().to_string(),
            cells,
        });
    }
    Ok(AblationTable { rows, raw })
}
