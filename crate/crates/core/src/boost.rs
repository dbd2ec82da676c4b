//! Boosted training: harvesting frames the base decoder fails on, biasing
//! the channel to produce more of them, and training post stages on them.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{spawn_stream, ChannelKind, ChannelSpec, LlrFrame};
use crate::code::TannerGraph;
use crate::decoder::{CheckRule, Decoder, DecoderConfig};
use crate::error::{Error, Result};
use crate::eval::{drive_chunks, test_fer};
use crate::parallel::count_failures;
use crate::quant::Quantizer;
use crate::train::{self, EpochMetrics, TrainConfig, TrainData};
use crate::weights::{ProtoDims, SharingMode, Stage, WeightSet};

const MAGIC: &[u8; 4] = b"UCV1";

/// One test frame per this many frames.
pub const SPLIT_PERIOD: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSource {
    /// Seed tag of the input frame.
    pub source_tag: u64,
    /// Iteration the error set was read at.
    pub iteration: usize,
    pub error_set: Vec<usize>,
    pub trials: u64,
    /// Position and count of the frames this source produced.
    pub first_frame: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub beta: f64,
    pub per_source: usize,
    pub sources: Vec<AugmentSource>,
}

/// How a dataset was produced; enough to re-verify every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub code_id: String,
    /// Plain channel the frames (or their sources) were drawn from.
    pub channel: ChannelSpec,
    /// Hash of the decoder weights the frames fail on.
    pub base_hash: String,
    pub base_iterations: usize,
    pub rule: CheckRule,
    pub quantizer: Quantizer,
    pub early_stop: bool,
    pub seed: u64,
    pub trials: u64,
    pub fer_estimate: f64,
    pub budget_exceeded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<Augmentation>,
}

impl Provenance {
    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            rule: self.rule,
            quantizer: self.quantizer,
            iterations: self.base_iterations,
            early_stop: self.early_stop,
        }
    }
}

/// Frames a decoder fails on, train split first.
#[derive(Debug, Clone, PartialEq)]
pub struct UcDataset {
    frames: Vec<LlrFrame>,
    train_len: usize,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    frames: usize,
    train: usize,
    frames_sha256: String,
    seed_tags: Vec<u64>,
    provenance: Provenance,
}

impl UcDataset {
    /// Splits `frames` (in collection order) 10:1, every eleventh frame going
    /// to the test side.
    pub fn new(frames: Vec<LlrFrame>, provenance: Provenance) -> Self {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, f) in frames.into_iter().enumerate() {
            if i % SPLIT_PERIOD == SPLIT_PERIOD - 1 {
                test.push(f);
            } else {
                train.push(f);
            }
        }
        let train_len = train.len();
        train.extend(test);
        Self {
            frames: train,
            train_len,
            provenance,
        }
    }

    pub fn frames(&self) -> &[LlrFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn train(&self) -> &[LlrFrame] {
        &self.frames[..self.train_len]
    }

    pub fn test(&self) -> &[LlrFrame] {
        &self.frames[self.train_len..]
    }

    /// Fails with [`Error::BudgetExceeded`] when collection stopped short.
    pub fn require_complete(&self, target: usize) -> Result<()> {
        if self.provenance.budget_exceeded {
            return Err(Error::BudgetExceeded {
                budget: self.provenance.trials,
                found: self.len(),
                target,
            });
        }
        Ok(())
    }

    /// Indices of frames the recorded decoder now decodes correctly; empty
    /// for an intact dataset. `weights` must hash to the recorded base.
    pub fn recheck(&self, g: &TannerGraph, weights: &WeightSet) -> Result<Vec<usize>> {
        let p = &self.provenance;
        let base = weights.truncated(p.base_iterations);
        if base.hash() != p.base_hash {
            return Err(Error::Dataset(format!(
                "weights hash {} differ from the recorded base {}",
                base.hash(),
                p.base_hash
            )));
        }
        let dec = Decoder::new(g, &base, p.decoder_config())?;
        let mut ws = crate::decoder::Workspace::new(g);
        let mut ok = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            dec.decode(base.params(), &f.llr, &mut ws)?;
            if !crate::decoder::frame_error(&ws.hard, None) {
                ok.push(i);
            }
        }
        Ok(ok)
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    fn frame_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.frames.len() * self.n() * 4);
        for f in &self.frames {
            for x in &f.llr {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    fn n(&self) -> usize {
        self.frames.first().map_or(0, |f| f.llr.len())
    }

    /// Writes the binary file and its `<path>.json` provenance sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.n();
        let as_u32 = |x: usize, what: &'static str| {
            u32::try_from(x).map_err(|_| Error::Dataset(format!("{what} {x} does not fit 32 bits")))
        };
        let hash = hex::decode(&self.provenance.base_hash)
            .map_err(|e| Error::Dataset(format!("base hash is not hex: {e}")))?;
        let mut head = Vec::new();
        head.extend_from_slice(MAGIC);
        head.extend_from_slice(&as_u32(n, "frame length")?.to_le_bytes());
        head.extend_from_slice(&as_u32(self.frames.len(), "frame count")?.to_le_bytes());
        head.extend_from_slice(&as_u32(self.train_len, "train count")?.to_le_bytes());
        let ch = &self.provenance.channel;
        let kind: u32 = match ch.kind {
            ChannelKind::Awgn => 0,
            ChannelKind::Rayleigh => 1,
            ChannelKind::AwgnShifted => 2,
        };
        head.extend_from_slice(&kind.to_le_bytes());
        head.extend_from_slice(&(ch.ebno_db as f32).to_le_bytes());
        head.extend_from_slice(&(ch.code_rate as f32).to_le_bytes());
        let beta = self.provenance.augmentation.as_ref().map_or(0.0, |a| a.beta);
        head.extend_from_slice(&(beta as f32).to_le_bytes());
        head.extend_from_slice(&as_u32(hash.len(), "hash length")?.to_le_bytes());
        head.extend_from_slice(&hash);
        let body = self.frame_bytes();
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&head)?;
        file.write_all(&body)?;
        file.flush()?;
        let sidecar = Sidecar {
            format: "UCV1".into(),
            frames: self.frames.len(),
            train: self.train_len,
            frames_sha256: hex::encode(Sha256::digest(&body)),
            seed_tags: self.frames.iter().map(|f| f.seed_tag).collect(),
            provenance: self.provenance.clone(),
        };
        std::fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(Self::sidecar_path(path))?)?;
        let mut at = 0usize;
        let mut take = |len: usize| -> Result<&[u8]> {
            let s = bytes
                .get(at..at + len)
                .ok_or_else(|| Error::Dataset("file truncated".into()))?;
            at += len;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(Error::Dataset("bad magic, expected UCV1".into()));
        }
        let mut word = || -> Result<u32> { Ok(u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"))) };
        let n = word()? as usize;
        let count = word()? as usize;
        let train_len = word()? as usize;
        let _kind = word()?;
        let _ebno = word()?;
        let _rate = word()?;
        let _beta = word()?;
        let hash_len = word()? as usize;
        let hash = hex::encode(take(hash_len)?);
        if n == 0 && count > 0 {
            return Err(Error::Dataset("zero frame length".into()));
        }
        let body = take(n * count * 4)?;
        if at != bytes.len() {
            return Err(Error::Dataset("trailing bytes after frames".into()));
        }
        if count != side.frames || train_len != side.train || side.seed_tags.len() != count {
            return Err(Error::Dataset("frame counts disagree between file and sidecar".into()));
        }
        if hash != side.provenance.base_hash {
            return Err(Error::Dataset("base hash disagrees between file and sidecar".into()));
        }
        if hex::encode(Sha256::digest(body)) != side.frames_sha256 {
            return Err(Error::Dataset("frame checksum mismatch".into()));
        }
        let frames = body
            .chunks_exact((n * 4).max(1))
            .zip(&side.seed_tags)
            .map(|(chunk, &tag)| LlrFrame {
                llr: chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect(),
                seed_tag: tag,
            })
            .collect();
        Ok(Self {
            frames,
            train_len,
            provenance: side.provenance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    /// Failures to gather.
    pub target: usize,
    /// Trial cap.
    pub budget: u64,
    pub chunk_frames: u64,
}

impl CollectConfig {
    pub fn new(target: usize) -> Self {
        Self {
            target,
            budget: 1_000_000_000,
            chunk_frames: 1024,
        }
    }
}

struct Harvest {
    frames: Vec<LlrFrame>,
    trials: u64,
    exhausted: bool,
}

fn harvest(
    dec: &Decoder<'_>,
    params: &[f64],
    channel: &ChannelSpec,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<Harvest> {
    channel.validate()?;
    let mut frames = Vec::with_capacity(cfg.target);
    let mut trials = 0;
    if cfg.target == 0 {
        return Ok(Harvest {
            frames,
            trials,
            exhausted: false,
        });
    }
    let chunk = cfg.chunk_frames.max(1);
    let done = drive_chunks(dec, params, channel, seed, chunk, cfg.budget, None, true, |k, r| {
        for (i, f) in r.failures {
            frames.push(f);
            if frames.len() == cfg.target {
                trials = k * chunk + i + 1;
                return true;
            }
        }
        trials += r.frames;
        false
    });
    Ok(Harvest {
        frames,
        trials,
        exhausted: !done,
    })
}

fn base_decoder<'g>(g: &'g TannerGraph, weights: &WeightSet, cfg: &DecoderConfig) -> Result<(Decoder<'g>, WeightSet)> {
    weights.check_graph(g)?;
    let base = weights.truncated(cfg.iterations);
    let dec = Decoder::new(g, &base, *cfg)?;
    Ok((dec, base))
}

/// Decodes fresh frames until `cfg.target` failures of the decoder given by
/// the first `dec_cfg.iterations` iterations of `weights`. An exhausted
/// budget yields a partial dataset flagged in its provenance.
pub fn collect_uc(
    g: &TannerGraph,
    weights: &WeightSet,
    dec_cfg: &DecoderConfig,
    channel: &ChannelSpec,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<UcDataset> {
    let (dec, base) = base_decoder(g, weights, dec_cfg)?;
    let h = harvest(&dec, base.params(), channel, cfg, seed)?;
    if h.exhausted {
        log::warn!(
            "trial budget {} exhausted with {} of {} failures",
            cfg.budget,
            h.frames.len(),
            cfg.target
        );
    }
    let provenance = Provenance {
        code_id: weights.code_id.clone(),
        channel: channel.clone(),
        base_hash: base.hash(),
        base_iterations: dec_cfg.iterations,
        rule: dec_cfg.rule,
        quantizer: dec_cfg.quantizer,
        early_stop: dec_cfg.early_stop,
        seed,
        trials: h.trials,
        fer_estimate: if h.trials == 0 {
            0.0
        } else {
            h.frames.len() as f64 / h.trials as f64
        },
        budget_exceeded: h.exhausted,
        augmentation: None,
    };
    Ok(UcDataset::new(h.frames, provenance))
}

/// Error positions of a failing frame: wrong hard decisions at the earliest
/// iteration with the fewest unsatisfied checks. Returns the iteration too.
pub fn error_set(dec: &Decoder<'_>, params: &[f64], llr: &[f32]) -> Result<(usize, Vec<usize>)> {
    let trace = dec.decode_trace(params, llr)?;
    let l = trace.min_ucn_iteration;
    let hard = trace.hard_at(dec.graph(), dec.quantizer(), l);
    Ok((
        l,
        hard.iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(v, _)| v)
            .collect(),
    ))
}

/// Importance-sampling augmentation: for each input frame, shifts the
/// channel by `-beta` on its error positions and gathers `per_source`
/// failures there. `channel` is the plain channel of the input frames.
#[allow(clippy::too_many_arguments)]
pub fn augment(
    g: &TannerGraph,
    weights: &WeightSet,
    dec_cfg: &DecoderConfig,
    inputs: &[LlrFrame],
    channel: &ChannelSpec,
    per_source: usize,
    beta: f64,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<UcDataset> {
    if !(beta >= 0.0) {
        return Err(Error::Config(format!("beta {beta} must be non-negative")));
    }
    let (dec, base) = base_decoder(g, weights, dec_cfg)?;
    let tracer = dec.with_iterations(dec_cfg.iterations, false)?;
    let mut frames = Vec::new();
    let mut sources = Vec::with_capacity(inputs.len());
    let mut trials = 0;
    let mut exhausted = false;
    let per = CollectConfig {
        target: per_source,
        ..*cfg
    };
    for (j, input) in inputs.iter().enumerate() {
        let (iteration, errors) = error_set(&tracer, base.params(), &input.llr)?;
        if errors.is_empty() {
            return Err(Error::EmptyErrorSet(j));
        }
        let shifted = ChannelSpec::shifted(channel.ebno_db, channel.code_rate, errors.clone(), beta);
        let sub_seed = spawn_stream(seed, u64::MAX - j as u64).next_u64();
        let h = harvest(&dec, base.params(), &shifted, &per, sub_seed)?;
        exhausted |= h.exhausted;
        trials += h.trials;
        sources.push(AugmentSource {
            source_tag: input.seed_tag,
            iteration,
            error_set: errors,
            trials: h.trials,
            first_frame: frames.len(),
            frames: h.frames.len(),
        });
        frames.extend(h.frames);
    }
    let provenance = Provenance {
        code_id: weights.code_id.clone(),
        channel: channel.clone(),
        base_hash: base.hash(),
        base_iterations: dec_cfg.iterations,
        rule: dec_cfg.rule,
        quantizer: dec_cfg.quantizer,
        early_stop: dec_cfg.early_stop,
        seed,
        trials,
        fer_estimate: if trials == 0 {
            0.0
        } else {
            frames.len() as f64 / trials as f64
        },
        budget_exceeded: exhausted,
        augmentation: Some(Augmentation {
            beta,
            per_source,
            sources,
        }),
    };
    Ok(UcDataset::new(frames, provenance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostStage {
    pub iterations: usize,
    pub mode: SharingMode,
}

/// Base stage followed by post stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub base_iterations: usize,
    pub base_mode: SharingMode,
    #[serde(default)]
    pub post: Vec<PostStage>,
}

impl StagePlan {
    pub fn total_iterations(&self) -> usize {
        self.base_iterations + self.post.iter().map(|p| p.iterations).sum::<usize>()
    }

    pub fn stages(&self) -> Vec<Stage> {
        let mut out = vec![Stage {
            mode: self.base_mode,
            iterations: self.base_iterations,
            trainable: true,
        }];
        out.extend(self.post.iter().map(|p| Stage {
            mode: p.mode,
            iterations: p.iterations,
            trainable: false,
        }));
        out
    }

    /// All-ones weights laid out for this plan; only the base is trainable.
    pub fn template(&self, code_id: &str, dims: ProtoDims) -> WeightSet {
        WeightSet::ones(code_id, dims, self.stages())
    }

    /// Fails unless the stages of `ws` are a prefix of this plan.
    pub fn check_prefix(&self, ws: &WeightSet) -> Result<()> {
        let plan = self.stages();
        if ws.stages().len() > plan.len() {
            return Err(Error::Config(format!(
                "weight set has {} stages, plan has {}",
                ws.stages().len(),
                plan.len()
            )));
        }
        for (i, (a, b)) in ws.stages().iter().zip(&plan).enumerate() {
            if a.mode != b.mode || a.iterations != b.iterations {
                return Err(Error::Config(format!(
                    "stage {i} is {:?} x{} in the weight set, {:?} x{} in the plan",
                    a.mode, a.iterations, b.mode, b.iterations
                )));
            }
        }
        Ok(())
    }
}

/// Copies `source` weights into a copy of `target` wherever both cover the
/// same iteration with a compatible layout. Scalar modes (spatial, dynamic)
/// copy across any codes; per-node modes need identical `(N, E)` (and `M`
/// for per-CN weights). Iterations the source does not cover keep the
/// target's values.
pub fn transfer_init(source: &WeightSet, target: &WeightSet) -> Result<WeightSet> {
    let mut out = target.clone();
    let (sd, td) = (source.dims(), target.dims());
    let mut copied = std::collections::HashSet::new();
    for l in 1..=target.total_iterations().min(source.total_iterations()) {
        let (Some((ss, _)), Some((ts, _))) = (source.locate(l), target.locate(l)) else {
            continue;
        };
        let (sm, tm) = (source.stages()[ss].mode, target.stages()[ts].mode);
        if sm != tm {
            return Err(Error::Transfer(format!(
                "iteration {l}: {sm:?} weights cannot initialise {tm:?} weights"
            )));
        }
        let same_shape = match sm {
            SharingMode::Spatial | SharingMode::Dynamic => true,
            SharingMode::Full | SharingMode::Temporal => sd.vns == td.vns && sd.edges == td.edges,
            SharingMode::DynamicProto => sd.vns == td.vns && sd.cns == td.cns,
        };
        if !same_shape {
            return Err(Error::Transfer(format!(
                "{sm:?} weights need matching sizes: source (N={}, M={}, E={}), target (N={}, M={}, E={})",
                sd.vns, sd.cns, sd.edges, td.vns, td.cns, td.edges
            )));
        }
        if sm == SharingMode::Temporal && !copied.insert(ts) {
            continue;
        }
        let src = source.params_of_iterations(l, l);
        let dst = out.params_of_iterations(l, l);
        debug_assert_eq!(src.len(), dst.len());
        for (d, s) in dst.into_iter().zip(src) {
            out.params_mut()[d] = source.params()[s];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostReport {
    pub weights: WeightSet,
    pub metrics: Vec<EpochMetrics>,
    /// Test FER of the held-out split before and after training.
    pub test_fer_initial: f64,
    pub test_fer: f64,
}

/// Trains post stage `post_index` of `plan` on the train split of `uc`
/// with every other stage frozen. Missing stages of `weights` are appended
/// from the plan with unit weights. Test FER uses all iterations up to the
/// end of the trained stage, with early stopping.
#[allow(clippy::too_many_arguments)]
pub fn train_post(
    g: &TannerGraph,
    weights: &WeightSet,
    plan: &StagePlan,
    post_index: usize,
    uc: &UcDataset,
    rule: &DecoderConfig,
    cfg: &TrainConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<PostReport> {
    if uc.train().is_empty() {
        return Err(Error::Dataset("UC dataset has no training frames".into()));
    }
    if post_index >= plan.post.len() {
        return Err(Error::Config(format!(
            "plan has {} post stages, stage {post_index} requested",
            plan.post.len()
        )));
    }
    plan.check_prefix(weights)?;
    weights.check_graph(g)?;
    let mut ws = weights.clone();
    let plan_stages = plan.stages();
    for st in &plan_stages[ws.stages().len()..] {
        ws.push_stage(st.clone());
    }
    let active = post_index + 1;
    for (s, st) in ws.stages_mut().iter_mut().enumerate() {
        st.trainable = s == active;
    }
    let frozen: Vec<String> = (0..active).map(|s| ws.stage_hash(s)).collect();
    if ws.truncated(uc.provenance.base_iterations).hash() != uc.provenance.base_hash {
        log::warn!("UC dataset was collected with different base weights");
    }
    let end = ws.stage_start(active) + ws.stages()[active].iterations - 1;
    let eval_cfg = DecoderConfig {
        iterations: end,
        early_stop: true,
        ..*rule
    };
    let initial = {
        let dec = Decoder::new(g, &ws, eval_cfg)?;
        test_fer(&dec, ws.params(), uc.test())?
    };
    let metrics = train::train(
        g,
        &mut ws,
        rule,
        TrainData::Frames(uc.train()),
        Some(uc.test()),
        cfg,
        seed,
        on_epoch,
    )?;
    for (s, h) in frozen.iter().enumerate() {
        if &ws.stage_hash(s) != h {
            return Err(Error::Inconsistent(format!("frozen stage {s} changed during training")));
        }
    }
    let dec = Decoder::new(g, &ws, eval_cfg)?;
    let final_fer = test_fer(&dec, ws.params(), uc.test())?;
    Ok(PostReport {
        weights: ws,
        metrics,
        test_fer_initial: initial,
        test_fer: final_fer,
    })
}

/// Fraction of `frames` that `weights` (first `cfg.iterations` iterations)
/// fails on.
pub fn failure_rate(g: &TannerGraph, weights: &WeightSet, cfg: &DecoderConfig, frames: &[LlrFrame]) -> Result<f64> {
    let (dec, base) = base_decoder(g, weights, cfg)?;
    if frames.is_empty() {
        return Ok(0.0);
    }
    Ok(count_failures(&dec, base.params(), frames, None) as f64 / frames.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::Protograph;

    fn toy() -> TannerGraph {
        Protograph::parse("2 4 3\n0 1 - 0\n- 0 2 1\n").unwrap().lift().unwrap()
    }

    fn ms(iters: usize) -> DecoderConfig {
        DecoderConfig::min_sum(Quantizer::five_bit(), iters)
    }

    fn base(g: &TannerGraph) -> WeightSet {
        WeightSet::single("toy", ProtoDims::of(g), SharingMode::Spatial, 5)
    }

    #[test]
    fn collected_frames_fail_and_round_trip() {
        let g = toy();
        let w = base(&g);
        let mut cfg = CollectConfig::new(60);
        cfg.chunk_frames = 50;
        let uc = collect_uc(&g, &w, &ms(5), &ChannelSpec::awgn(2.0, 0.5), &cfg, 4).unwrap();
        assert_eq!(uc.len(), 60);
        assert!(!uc.provenance.budget_exceeded);
        assert_eq!(uc.test().len(), 60 / SPLIT_PERIOD);
        assert!(uc.recheck(&g, &w).unwrap().is_empty());
        assert!(uc.provenance.trials >= 60);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("uc.bin");
        uc.save(&path).unwrap();
        assert_eq!(UcDataset::load(&path).unwrap(), uc);
    }

    #[test]
    fn collection_is_deterministic() {
        let g = toy();
        let w = base(&g);
        let mut cfg = CollectConfig::new(25);
        cfg.chunk_frames = 16;
        let a = collect_uc(&g, &w, &ms(5), &ChannelSpec::awgn(2.0, 0.5), &cfg, 8).unwrap();
        let b = collect_uc(&g, &w, &ms(5), &ChannelSpec::awgn(2.0, 0.5), &cfg, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_exhausts_budget() {
        let g = toy();
        let mut cfg = CollectConfig::new(5);
        cfg.budget = 2000;
        let uc = collect_uc(&g, &base(&g), &ms(5), &ChannelSpec::awgn(60.0, 0.5), &cfg, 1).unwrap();
        assert!(uc.is_empty() && uc.provenance.budget_exceeded);
        assert_eq!(uc.provenance.trials, 2000);
        assert!(matches!(uc.require_complete(5), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn corrupted_file_rejected() {
        let g = toy();
        let uc = collect_uc(
            &g,
            &base(&g),
            &ms(5),
            &ChannelSpec::awgn(2.0, 0.5),
            &CollectConfig::new(10),
            2,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("uc.bin");
        uc.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(UcDataset::load(&path), Err(Error::Dataset(_))));
    }

    #[test]
    fn augmented_frames_fail_too() {
        let g = toy();
        let w = base(&g);
        let uc = collect_uc(&g, &w, &ms(5), &ChannelSpec::awgn(2.0, 0.5), &CollectConfig::new(4), 3).unwrap();
        let aug = augment(
            &g,
            &w,
            &ms(5),
            uc.frames(),
            &ChannelSpec::awgn(2.0, 0.5),
            3,
            0.7,
            &CollectConfig::new(3),
            3,
        )
        .unwrap();
        assert_eq!(aug.len(), 12);
        assert!(aug.recheck(&g, &w).unwrap().is_empty());
        let a = aug.provenance.augmentation.as_ref().unwrap();
        assert!(a.sources.iter().all(|s| !s.error_set.is_empty() && s.frames == 3));
    }

    #[test]
    fn empty_error_set_detected() {
        let g = toy();
        let w = base(&g);
        let clean = LlrFrame {
            llr: vec![5.0; g.n()],
            seed_tag: 0,
        };
        let err = augment(
            &g,
            &w,
            &ms(5),
            &[clean],
            &ChannelSpec::awgn(2.0, 0.5),
            1,
            0.5,
            &CollectConfig::new(1),
            0,
        );
        assert!(matches!(err, Err(Error::EmptyErrorSet(0))));
    }

    #[test]
    fn transfer_rules() {
        let g = toy();
        let plan = StagePlan {
            base_iterations: 3,
            base_mode: SharingMode::Spatial,
            post: vec![PostStage {
                iterations: 4,
                mode: SharingMode::Dynamic,
            }],
        };
        let mut w = plan.template("toy", ProtoDims::of(&g));
        for (i, p) in w.params_mut().iter_mut().enumerate() {
            *p = 0.5 + i as f64 / 100.0;
        }
        assert_eq!(transfer_init(&w, &w).unwrap(), w);
        let mut longer = plan.clone();
        longer.post[0].iterations = 6;
        let t = transfer_init(&w, &longer.template("other", ProtoDims::of(&g))).unwrap();
        assert_eq!(&t.params()[..w.num_params()], w.params());
        assert!(t.params()[w.num_params()..].iter().all(|&x| x == 1.0));
        let full = |e| {
            WeightSet::single(
                "x",
                ProtoDims {
                    vns: 24,
                    cns: 6,
                    edges: e,
                },
                SharingMode::Full,
                2,
            )
        };
        assert!(transfer_init(&full(88), &full(88)).is_ok());
        assert!(matches!(transfer_init(&full(88), &full(90)), Err(Error::Transfer(_))));
        let dynamic = WeightSet::single("x", ProtoDims::of(&g), SharingMode::Dynamic, 2);
        assert!(matches!(transfer_init(&dynamic, &w), Err(Error::Transfer(_))));
    }

    #[test]
    fn post_training_keeps_base() {
        let g = toy();
        let plan = StagePlan {
            base_iterations: 3,
            base_mode: SharingMode::Spatial,
            post: vec![PostStage {
                iterations: 3,
                mode: SharingMode::Dynamic,
            }],
        };
        let mut w = WeightSet::single("toy", ProtoDims::of(&g), SharingMode::Spatial, 3);
        w.params_mut().copy_from_slice(&[0.9, 0.8, 1.0, 0.7, 1.1, 0.75]);
        let uc = collect_uc(&g, &w, &ms(3), &ChannelSpec::awgn(1.5, 0.5), &CollectConfig::new(44), 6).unwrap();
        let mut cfg = TrainConfig::new(
            crate::train::ScheduleSpec::block_wise(2, 1),
            crate::train::LossSpec::fer(),
        );
        cfg.schedule.epochs_per_stage = 2;
        cfg.schedule.batch_size = 10;
        let r = train_post(&g, &w, &plan, 0, &uc, &ms(1), &cfg, 1, |_| Ok(())).unwrap();
        assert_eq!(r.weights.stage_hash(0), w.stage_hash(0));
        assert_eq!(r.weights.stages().len(), 2);
        assert!(r.metrics.iter().all(|m| m.test_fer.is_some()));
        let mut zero = cfg.clone();
        zero.schedule.epochs_per_stage = 0;
        let r0 = train_post(&g, &w, &plan, 0, &uc, &ms(1), &zero, 1, |_| Ok(())).unwrap();
        assert_eq!(r0.test_fer, r0.test_fer_initial);
    }
}
