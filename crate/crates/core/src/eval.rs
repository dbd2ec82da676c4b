//! Monte-Carlo error-rate estimation, test FER on stored failures, residual
//! error histograms and operation counts.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{seed_tag, spawn_stream, ChannelSpec, LlrFrame};
use crate::code::TannerGraph;
use crate::decoder::{bit_errors, frame_error, Decoder, Workspace};
use crate::error::{Error, Result};
use crate::parallel::{count_failures, map_chunks, map_indices, CHUNK};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FerConfig {
    /// Simulation stops once this many frame errors are seen.
    pub stop_errors: u64,
    /// Hard cap on simulated frames.
    pub max_frames: u64,
    /// Frames per deterministic work item.
    pub chunk_frames: u64,
}

impl Default for FerConfig {
    fn default() -> Self {
        Self {
            stop_errors: 100,
            max_frames: 1_000_000_000,
            chunk_frames: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FerPoint {
    pub ebno_db: f64,
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub fer: f64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The frame cap ended the run before `stop_errors` errors.
    pub budget_capped: bool,
}

/// Wilson score interval for `k` successes out of `n` at 95%.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    (lo, (centre + half).min(1.0))
}

/// Outcome of one chunk of Monte-Carlo trials.
#[derive(Debug, Clone, Default)]
pub(crate) struct ChunkResult {
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    /// Failed frames with their trial index inside the chunk.
    pub failures: Vec<(u64, LlrFrame)>,
}

/// Chunk `k` of a Monte-Carlo run: `frames` trials drawn from stream
/// `(seed, k)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_chunk(
    dec: &Decoder<'_>,
    params: &[f64],
    channel: &ChannelSpec,
    seed: u64,
    k: u64,
    frames: u64,
    info_mask: Option<&[bool]>,
    keep_failures: bool,
) -> ChunkResult {
    let g = dec.graph();
    let mut rng = spawn_stream(seed, k);
    let mut ws = Workspace::new(g);
    let (mut noise, mut fading) = (Vec::new(), Vec::new());
    let mut llr = vec![0f32; g.n()];
    let mut out = ChunkResult {
        frames,
        ..ChunkResult::default()
    };
    for i in 0..frames {
        channel.sample_into(g.punctured(), &mut rng, &mut noise, &mut fading, &mut llr);
        dec.decode_unchecked(params, &llr, &mut ws);
        if frame_error(&ws.hard, info_mask) {
            out.frame_errors += 1;
            out.bit_errors += bit_errors(&ws.hard, info_mask) as u64;
            if keep_failures {
                out.failures.push((
                    i,
                    LlrFrame {
                        llr: llr.clone(),
                        seed_tag: seed_tag(k, i),
                    },
                ));
            }
        }
    }
    out
}

/// Feeds chunk results to `consume` in chunk order until it returns true or
/// `max_frames` trials are spent. Chunks are evaluated in parallel rounds;
/// anything past the stopping chunk is discarded, so the outcome does not
/// depend on the worker count. Returns true when `consume` stopped the run.
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive_chunks(
    dec: &Decoder<'_>,
    params: &[f64],
    channel: &ChannelSpec,
    seed: u64,
    chunk_frames: u64,
    max_frames: u64,
    info_mask: Option<&[bool]>,
    keep_failures: bool,
    mut consume: impl FnMut(u64, ChunkResult) -> bool,
) -> bool {
    let chunk_frames = chunk_frames.max(1);
    let total_chunks = max_frames.div_ceil(chunk_frames);
    let per_round = (rayon::current_num_threads() as u64 * 2).max(1);
    let mut next = 0;
    while next < total_chunks {
        let round = per_round.min(total_chunks - next);
        let results = map_indices(round, |i| {
            let k = next + i;
            let frames = chunk_frames.min(max_frames - k * chunk_frames);
            run_chunk(dec, params, channel, seed, k, frames, info_mask, keep_failures)
        });
        for (i, r) in results.into_iter().enumerate() {
            if consume(next + i as u64, r) {
                return true;
            }
        }
        next += round;
    }
    false
}

/// Simulates frames until `cfg.stop_errors` frame errors or the frame cap.
/// With `info_mask`, only information-bit errors count.
pub fn estimate_fer(
    dec: &Decoder<'_>,
    params: &[f64],
    channel: &ChannelSpec,
    cfg: &FerConfig,
    info_mask: Option<&[bool]>,
    seed: u64,
) -> Result<FerPoint> {
    channel.validate()?;
    let g = dec.graph();
    if let Some(m) = info_mask {
        if m.len() != g.n() {
            return Err(Error::Dimension {
                what: "information mask length",
                expected: g.n(),
                got: m.len(),
            });
        }
    }
    let (mut frames, mut errors, mut bits) = (0u64, 0u64, 0u64);
    let stopped = drive_chunks(
        dec,
        params,
        channel,
        seed,
        cfg.chunk_frames,
        cfg.max_frames,
        info_mask,
        false,
        |_, r| {
            frames += r.frames;
            errors += r.frame_errors;
            bits += r.bit_errors;
            errors >= cfg.stop_errors
        },
    );
    let info_bits = info_mask.map_or(g.n(), |m| m.iter().filter(|&&b| b).count()) as f64;
    let (ci_low, ci_high) = wilson_interval(errors, frames);
    let fer = if frames == 0 {
        0.0
    } else {
        errors as f64 / frames as f64
    };
    let ber = if frames == 0 {
        0.0
    } else {
        bits as f64 / (frames as f64 * info_bits)
    };
    Ok(FerPoint {
        ebno_db: channel.ebno_db,
        frames,
        frame_errors: errors,
        bit_errors: bits,
        fer,
        ber,
        ci_low,
        ci_high,
        budget_capped: !stopped && cfg.stop_errors > 0,
    })
}

/// Writes FER points as CSV.
pub fn write_fer_csv(mut w: impl Write, points: &[FerPoint]) -> Result<()> {
    writeln!(w, "ebno_db,frames,frame_errors,fer,ber,ci_low,ci_high")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e}",
            p.ebno_db, p.frames, p.frame_errors, p.fer, p.ber, p.ci_low, p.ci_high
        )?;
    }
    Ok(())
}

fn check_frames(g: &TannerGraph, frames: &[LlrFrame]) -> Result<()> {
    match frames.iter().find(|f| f.llr.len() != g.n()) {
        Some(f) => Err(Error::Dimension {
            what: "frame length",
            expected: g.n(),
            got: f.llr.len(),
        }),
        None => Ok(()),
    }
}

/// Fraction of `frames` the decoder leaves uncorrected. Zero for an empty
/// set.
pub fn test_fer(dec: &Decoder<'_>, params: &[f64], frames: &[LlrFrame]) -> Result<f64> {
    check_frames(dec.graph(), frames)?;
    if frames.is_empty() {
        return Ok(0.0);
    }
    Ok(count_failures(dec, params, frames, None) as f64 / frames.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    /// Residual bit errors per frame → number of frames.
    pub counts: BTreeMap<usize, usize>,
    pub boundary: usize,
    /// Share of frames with at most `boundary` errors.
    pub small_fraction: f64,
}

impl ErrorHistogram {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Residual bit-error multiplicities after decoding each frame.
pub fn error_histogram(
    dec: &Decoder<'_>,
    params: &[f64],
    frames: &[LlrFrame],
    boundary: usize,
) -> Result<ErrorHistogram> {
    check_frames(dec.graph(), frames)?;
    let per_frame: Vec<usize> = map_chunks(frames, CHUNK, |chunk| {
        let mut ws = Workspace::new(dec.graph());
        chunk
            .iter()
            .map(|f| {
                dec.decode_unchecked(params, &f.llr, &mut ws);
                bit_errors(&ws.hard, None)
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let mut counts = BTreeMap::new();
    for &e in &per_frame {
        *counts.entry(e).or_insert(0) += 1;
    }
    let small = per_frame.iter().filter(|&&e| e <= boundary).count();
    Ok(ErrorHistogram {
        counts,
        boundary,
        small_fraction: if per_frame.is_empty() {
            0.0
        } else {
            small as f64 / per_frame.len() as f64
        },
    })
}

/// Arithmetic family for operation counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arithmetic {
    /// Plain min-sum: one sign multiplication per message.
    MinSum,
    /// One shared CN weight.
    Weighted,
    /// Trainable CN and channel weights.
    Neural,
}

/// Logarithm inside the comparison count `d + ⌈log d⌉ − 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    Natural,
    Two,
}

/// Comparisons to find the two smallest of `d` magnitudes.
pub fn comparisons_per_check(d: usize, base: LogBase) -> usize {
    if d < 2 {
        return 0;
    }
    let log = match base {
        LogBase::Natural => (d as f64).ln(),
        LogBase::Two => (d as f64).log2(),
    };
    d + log.ceil() as usize - 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCount {
    pub degree: usize,
    /// Lifted CNs of this degree.
    pub checks: usize,
    pub alpha: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub additions: u64,
    pub comparisons: u64,
    pub multiplications: u64,
    pub per_degree: Vec<DegreeCount>,
    /// Comparisons per CN averaged over the CN degree profile.
    pub alpha_mean: f64,
    pub iterations: usize,
    /// `(A + 2C + Mu) · ℓ̄`.
    pub total: u64,
    pub weight_memory: usize,
}

/// Operation counts per iteration and in total; `weight_memory` is the
/// number of stored weights (0 for plain min-sum).
pub fn complexity_report(
    g: &TannerGraph,
    arithmetic: Arithmetic,
    iterations: usize,
    weight_memory: usize,
    base: LogBase,
) -> ComplexityReport {
    let e = g.num_edges() as u64;
    let n = g.n() as u64;
    let mut by_degree: BTreeMap<usize, usize> = BTreeMap::new();
    for c in 0..g.m() {
        *by_degree.entry(g.cn_edges(c).len()).or_insert(0) += 1;
    }
    let per_degree: Vec<DegreeCount> = by_degree
        .into_iter()
        .map(|(degree, checks)| DegreeCount {
            degree,
            checks,
            alpha: comparisons_per_check(degree, base),
        })
        .collect();
    let comparisons: u64 = per_degree.iter().map(|d| (d.checks * d.alpha) as u64).sum();
    let multiplications = match arithmetic {
        Arithmetic::MinSum => e,
        Arithmetic::Weighted => 2 * e,
        Arithmetic::Neural => 2 * e + n,
    };
    let additions = 2 * e;
    let alpha_mean = if g.m() == 0 {
        0.0
    } else {
        comparisons as f64 / g.m() as f64
    };
    ComplexityReport {
        additions,
        comparisons,
        multiplications,
        per_degree,
        alpha_mean,
        iterations,
        total: (additions + 2 * comparisons + multiplications) * iterations as u64,
        weight_memory,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::Protograph;
    use crate::decoder::DecoderConfig;
    use crate::quant::Quantizer;
    use crate::weights::{ProtoDims, SharingMode, WeightSet};

    fn toy() -> TannerGraph {
        Protograph::parse("2 4 3\n0 1 - 0\n- 0 2 1\n").unwrap().lift().unwrap()
    }

    #[test]
    fn wilson_reference_values() {
        // k=0: upper bound z²/(n+z²)
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!((hi - Z95 * Z95 / (100.0 + Z95 * Z95)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.40383).abs() < 1e-4 && (hi - 0.59617).abs() < 1e-4);
    }

    #[test]
    fn noiseless_run_is_capped() {
        let g = toy();
        let ws = WeightSet::single("toy", ProtoDims::of(&g), SharingMode::Spatial, 5);
        let dec = Decoder::new(&g, &ws, DecoderConfig::min_sum(Quantizer::five_bit(), 5)).unwrap();
        let cfg = FerConfig {
            max_frames: 3000,
            ..FerConfig::default()
        };
        let p = estimate_fer(&dec, ws.params(), &ChannelSpec::awgn(60.0, 0.5), &cfg, None, 1).unwrap();
        assert_eq!((p.frames, p.frame_errors), (3000, 0));
        assert!(p.budget_capped && p.ci_high > 0.0 && p.ci_high < 2e-3);
    }

    #[test]
    fn seeded_runs_repeat() {
        let g = toy();
        let ws = WeightSet::single("toy", ProtoDims::of(&g), SharingMode::Spatial, 5);
        let dec = Decoder::new(&g, &ws, DecoderConfig::min_sum(Quantizer::five_bit(), 5)).unwrap();
        let cfg = FerConfig {
            stop_errors: 50,
            chunk_frames: 64,
            ..FerConfig::default()
        };
        let ch = ChannelSpec::awgn(2.0, 0.5);
        let a = estimate_fer(&dec, ws.params(), &ch, &cfg, None, 9).unwrap();
        let b = estimate_fer(&dec, ws.params(), &ch, &cfg, None, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.frame_errors >= 50 && !a.budget_capped);
        assert_eq!(a.frames % 64, 0);
        let mut csv = Vec::new();
        write_fer_csv(&mut csv, &[a]).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2);
    }

    #[test]
    fn histogram_conserves_frames() {
        let g = toy();
        let ws = WeightSet::single("toy", ProtoDims::of(&g), SharingMode::Spatial, 5);
        let dec = Decoder::new(&g, &ws, DecoderConfig::min_sum(Quantizer::five_bit(), 5)).unwrap();
        let mut rng = spawn_stream(2, 0);
        let frames: Vec<_> = (0..40)
            .map(|i| crate::channel::sample_frame(&ChannelSpec::awgn(1.0, 0.5), &g, &mut rng, i))
            .collect();
        let h = error_histogram(&dec, ws.params(), &frames, 11).unwrap();
        assert_eq!(h.total(), 40);
        let fails = h.counts.iter().filter(|(&k, _)| k > 0).map(|(_, &v)| v).sum::<usize>();
        assert!((test_fer(&dec, ws.params(), &frames).unwrap() - fails as f64 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn comparison_counts() {
        assert_eq!(comparisons_per_check(4, LogBase::Two), 4);
        assert_eq!(comparisons_per_check(4, LogBase::Natural), 4);
        assert_eq!(comparisons_per_check(15, LogBase::Natural), 16);
        assert_eq!(comparisons_per_check(15, LogBase::Two), 17);
        let r = complexity_report(&toy(), Arithmetic::MinSum, 0, 0, LogBase::Natural);
        assert_eq!(r.total, 0);
    }
}
