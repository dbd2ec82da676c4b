//! Gradient training of decoder weights.

pub mod backward;
pub mod loss;
pub mod optim;
pub mod schedule;

use std::io::Write;

use rand::seq::SliceRandom;

use crate::channel::{sample_frame, seed_tag, spawn_stream, ChannelSpec, LlrFrame};
use crate::code::TannerGraph;
use crate::decoder::{Decoder, DecoderConfig, DecoderState};
use crate::error::{Error, Result};
use crate::parallel::{count_failures, map_chunks, CHUNK};
use crate::weights::WeightSet;

pub use backward::backward;
pub use loss::{LossKind, LossSpec};
pub use optim::{AdamConfig, OptimizerState};
pub use schedule::{Block, ScheduleKind, ScheduleSpec};

/// Everything that shapes a training run besides data and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: ScheduleSpec,
    pub loss: LossSpec,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(schedule: ScheduleSpec, loss: LossSpec) -> Self {
        Self {
            schedule,
            loss,
            adam: AdamConfig::default(),
        }
    }
}

/// Where training frames come from.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    /// A fixed dataset, reshuffled every epoch.
    Frames(&'a [LlrFrame]),
    /// Fresh frames every epoch, cycling through `channels`.
    Fresh {
        channels: &'a [ChannelSpec],
        frames_per_epoch: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// Epoch within the current block, from 0.
    pub epoch: usize,
    /// Schedule block, from 1.
    pub stage: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub test_fer: Option<f64>,
}

/// Appends metrics rows to a CSV file, writing the header on creation.
pub struct MetricsCsv {
    file: std::fs::File,
}

impl MetricsCsv {
    pub const HEADER: &'static str = "epoch,stage,lr,mean_loss,test_fer";

    pub fn open(path: &std::path::Path) -> Result<Self> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(file, "{}", Self::HEADER)?;
        }
        Ok(Self { file })
    }

    pub fn row(m: &EpochMetrics) -> String {
        let fer = m.test_fer.map(|f| f.to_string()).unwrap_or_default();
        format!("{},{},{},{},{}", m.epoch, m.stage, m.lr, m.mean_loss, fer)
    }

    pub fn write(&mut self, m: &EpochMetrics) -> Result<()> {
        writeln!(self.file, "{}", Self::row(m))?;
        Ok(())
    }
}

/// Contiguous window of trainable iterations.
pub fn trainable_window(weights: &WeightSet) -> Result<(usize, usize)> {
    let stages: Vec<usize> = (0..weights.stages().len())
        .filter(|&s| weights.stages()[s].trainable)
        .collect();
    let (Some(&a), Some(&b)) = (stages.first(), stages.last()) else {
        return Err(Error::Config("weight set has no trainable stage".into()));
    };
    if b - a + 1 != stages.len() {
        return Err(Error::Config("trainable stages must be contiguous".into()));
    }
    let first = weights.stage_start(a);
    let last = weights.stage_start(b) + weights.stages()[b].iterations - 1;
    if last < first {
        return Err(Error::Config("trainable stages cover no iterations".into()));
    }
    Ok((first, last))
}

/// Trains the trainable stages of `weights` in place. `rule` supplies the
/// check rule and quantizer; its iteration count and early-stop flag are
/// ignored. `test` frames, when given, are decoded after every epoch with
/// the hard success criterion. `on_epoch` sees each metrics row as it is
/// produced.
#[allow(clippy::too_many_arguments)]
pub fn train(
    g: &TannerGraph,
    weights: &mut WeightSet,
    rule: &DecoderConfig,
    data: TrainData<'_>,
    test: Option<&[LlrFrame]>,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    cfg.loss.validate()?;
    let (first, last) = trainable_window(weights)?;
    let blocks = cfg.schedule.blocks(first, last)?;
    match data {
        TrainData::Frames(f) if f.is_empty() => return Err(Error::Dataset("training set is empty".into())),
        TrainData::Frames(f) => {
            if let Some(bad) = f.iter().find(|fr| fr.llr.len() != g.n()) {
                return Err(Error::Dimension {
                    what: "training frame length",
                    expected: g.n(),
                    got: bad.llr.len(),
                });
            }
        }
        TrainData::Fresh {
            channels,
            frames_per_epoch,
        } => {
            if channels.is_empty() || frames_per_epoch == 0 {
                return Err(Error::Dataset("fresh-frame source produces no frames".into()));
            }
            for c in channels {
                c.validate()?;
            }
        }
    }
    let dec = Decoder::new(
        g,
        weights,
        DecoderConfig {
            iterations: weights.total_iterations(),
            early_stop: false,
            ..*rule
        },
    )?;
    let trainable = weights.trainable_mask();
    let mut metrics = Vec::new();
    for (bi, block) in blocks.iter().enumerate() {
        let stage = bi + 1;
        let mut mask = vec![false; weights.num_params()];
        for i in weights.params_of_iterations(block.lo, block.hi) {
            mask[i] = trainable[i];
        }
        let mut opt = OptimizerState::new(cfg.adam, weights.num_params());
        let test_dec = dec.with_iterations(block.hi, true)?;
        // frozen prefix of a fixed dataset, recomputed per block
        let cached: Option<Vec<DecoderState>> = match data {
            TrainData::Frames(frames) => {
                let params = weights.params();
                Some(
                    map_chunks(frames, CHUNK, |chunk| {
                        chunk
                            .iter()
                            .map(|f| {
                                let mut s = dec.initial_state(&f.llr);
                                dec.advance(params, &mut s, block.lo - 1);
                                s
                            })
                            .collect::<Vec<_>>()
                    })
                    .into_iter()
                    .flatten()
                    .collect(),
                )
            }
            TrainData::Fresh { .. } => None,
        };
        for epoch in 0..cfg.schedule.epochs_per_stage {
            let mut rng = spawn_stream(seed, ((stage as u64) << 32) | epoch as u64);
            let fresh: Vec<LlrFrame>;
            let (frames, states): (&[LlrFrame], Option<&[DecoderState]>) = match data {
                TrainData::Frames(f) => (f, cached.as_deref()),
                TrainData::Fresh {
                    channels,
                    frames_per_epoch,
                } => {
                    fresh = (0..frames_per_epoch)
                        .map(|i| {
                            let ch = &channels[i % channels.len()];
                            sample_frame(ch, g, &mut rng, seed_tag(epoch as u64, i as u64))
                        })
                        .collect();
                    (&fresh, None)
                }
            };
            let mut order: Vec<usize> = (0..frames.len()).collect();
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for batch in order.chunks(cfg.schedule.batch_size) {
                let (grad, loss) = batch_gradient(&dec, weights.params(), frames, states, batch, block, &cfg.loss)?;
                loss_sum += loss;
                let scale = 1.0 / batch.len() as f64;
                let grad: Vec<f64> = grad.iter().map(|g| g * scale).collect();
                opt.apply(weights.params_mut(), &grad, &mask, epoch);
            }
            let test_fer = match test {
                Some(t) if !t.is_empty() => {
                    Some(count_failures(&test_dec, weights.params(), t, None) as f64 / t.len() as f64)
                }
                _ => None,
            };
            let m = EpochMetrics {
                epoch,
                stage,
                lr: cfg.adam.lr(epoch),
                mean_loss: loss_sum / frames.len() as f64,
                test_fer,
            };
            log::info!(
                "block {stage} epoch {epoch} loss {:.6} test_fer {:?}",
                m.mean_loss,
                m.test_fer
            );
            on_epoch(&m)?;
            metrics.push(m);
        }
    }
    Ok(metrics)
}

/// Summed gradient and loss over one minibatch, reduced in chunk order.
fn batch_gradient(
    dec: &Decoder<'_>,
    params: &[f64],
    frames: &[LlrFrame],
    states: Option<&[DecoderState]>,
    batch: &[usize],
    block: &Block,
    loss: &LossSpec,
) -> Result<(Vec<f64>, f64)> {
    let g = dec.graph();
    let q = dec.quantizer();
    let parts = map_chunks(batch, CHUNK, |chunk| -> Result<(Vec<f64>, f64)> {
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        for &i in chunk {
            let owned;
            let state = match states {
                Some(s) => &s[i],
                None => {
                    let mut s = dec.initial_state(&frames[i].llr);
                    dec.advance(params, &mut s, block.lo - 1);
                    owned = s;
                    &owned
                }
            };
            let trace = dec.trace_from(params, state, block.hi)?;
            let mut out_grads = Vec::with_capacity(block.loss_at.len());
            for &l in &block.loss_at {
                let o = if l == block.hi {
                    trace.output.clone()
                } else {
                    trace.output_at(g, q, l).0
                };
                let mut go = vec![0.0; o.len()];
                total += loss.accumulate(&o, 1.0, &mut go);
                out_grads.push((l, go));
            }
            backward(dec, params, &trace, &out_grads, block.lo, &mut grad)?;
        }
        Ok((grad, total))
    });
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    for part in parts {
        let (g, l) = part?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        total += l;
    }
    Ok((grad, total))
}
