//! BPSK over AWGN and Rayleigh channels, plus the β-shifted AWGN channel used
//! to manufacture failures cheaply. All-zero codeword, so every VN transmits
//! `+1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::code::TannerGraph;
use crate::error::{Error, Result};

/// Per-worker random stream.
pub type RngStream = ChaCha8Rng;

/// Independent reproducible stream for `(master_seed, worker_index)`.
pub fn spawn_stream(master_seed: u64, worker_index: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(worker_index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
    AwgnShifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub ebno_db: f64,
    pub code_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_set: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl ChannelSpec {
    pub fn awgn(ebno_db: f64, code_rate: f64) -> Self {
        Self {
            kind: ChannelKind::Awgn,
            ebno_db,
            code_rate,
            shift_set: None,
            beta: None,
        }
    }

    pub fn rayleigh(ebno_db: f64, code_rate: f64) -> Self {
        Self {
            kind: ChannelKind::Rayleigh,
            ..Self::awgn(ebno_db, code_rate)
        }
    }

    /// AWGN with received values at `shift_set` moved by `-beta`.
    pub fn shifted(ebno_db: f64, code_rate: f64, shift_set: Vec<usize>, beta: f64) -> Self {
        Self {
            kind: ChannelKind::AwgnShifted,
            ebno_db,
            code_rate,
            shift_set: Some(shift_set),
            beta: Some(beta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.code_rate > 0.0 && self.code_rate <= 1.0) {
            return Err(Error::Config(format!("code rate {} outside (0, 1]", self.code_rate)));
        }
        if !self.ebno_db.is_finite() {
            return Err(Error::Config("Eb/N0 must be finite".into()));
        }
        let shifted = self.kind == ChannelKind::AwgnShifted;
        if shifted != (self.shift_set.is_some() && self.beta.is_some())
            || (!shifted && (self.shift_set.is_some() || self.beta.is_some()))
        {
            return Err(Error::Config(
                "shift_set and beta are required for, and only for, awgn_shifted".into(),
            ));
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0) {
                return Err(Error::Config(format!("beta {b} must be non-negative")));
            }
        }
        Ok(())
    }

    /// `σ² = 1 / (2 R 10^(Eb/N0 / 10))`.
    pub fn noise_variance(&self) -> f64 {
        1.0 / (2.0 * self.code_rate * 10f64.powf(self.ebno_db / 10.0))
    }

    /// Channel LLRs for a given noise realisation and optional fading
    /// magnitudes. Punctured VNs get exactly 0.
    pub fn llr_from_noise(&self, punctured: &[bool], noise: &[f64], fading: Option<&[f64]>, out: &mut [f32]) {
        let sigma2 = self.noise_variance();
        let scale = 2.0 / sigma2;
        for (v, (o, &nz)) in out.iter_mut().zip(noise).enumerate() {
            let h = fading.map_or(1.0, |f| f[v]);
            *o = (scale * h * (h + nz)) as f32;
        }
        if let (Some(set), Some(beta)) = (&self.shift_set, self.beta) {
            for &v in set {
                *out.get_mut(v).expect("shift set index within frame") -= (scale * beta) as f32;
            }
        }
        for (o, &p) in out.iter_mut().zip(punctured) {
            if p {
                *o = 0.0;
            }
        }
    }

    /// Draws one received frame into `out` (length `n`).
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        punctured: &[bool],
        rng: &mut R,
        noise: &mut Vec<f64>,
        fading: &mut Vec<f64>,
        out: &mut [f32],
    ) {
        let n = out.len();
        let sigma = self.noise_variance().sqrt();
        noise.clear();
        noise.extend((0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)));
        match self.kind {
            ChannelKind::Rayleigh => {
                fading.clear();
                fading.extend((0..n).map(|_| {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    ((a * a + b * b) / 2.0).sqrt()
                }));
                self.llr_from_noise(punctured, noise, Some(fading), out);
            }
            _ => self.llr_from_noise(punctured, noise, None, out),
        }
    }
}

/// One channel observation: the training and test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrFrame {
    /// Channel LLRs `m_v^ch`. Stored as `f32` so the binary dataset format
    /// round-trips exactly.
    pub llr: Vec<f32>,
    /// `(stream index << 32) | trial index within the stream`.
    pub seed_tag: u64,
}

pub fn seed_tag(stream: u64, trial: u64) -> u64 {
    (stream << 32) | (trial & 0xFFFF_FFFF)
}

/// Draws one frame for `g` under `spec`.
pub fn sample_frame<R: Rng + ?Sized>(spec: &ChannelSpec, g: &TannerGraph, rng: &mut R, tag: u64) -> LlrFrame {
    let mut llr = vec![0f32; g.n()];
    spec.sample_into(g.punctured(), rng, &mut Vec::new(), &mut Vec::new(), &mut llr);
    LlrFrame { llr, seed_tag: tag }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::Protograph;

    fn toy() -> TannerGraph {
        Protograph::parse("2 4 3\n0 1 - 0\n- 0 2 1\n").unwrap().lift().unwrap()
    }

    #[test]
    fn variance_closed_form() {
        let s = ChannelSpec::awgn(4.5, 0.75);
        // independent scalar evaluation: 10^0.45 = e^(0.45 ln 10)
        let snr = (0.45f64 * std::f64::consts::LN_10).exp();
        let expect = 1.0 / (1.5 * snr);
        assert!((s.noise_variance() - expect).abs() < 1e-15);
        assert!((s.noise_variance() - 0.23655).abs() < 2e-5);
    }

    #[test]
    fn streams_reproducible_and_separate() {
        let mut a = spawn_stream(42, 0);
        let mut b = spawn_stream(42, 0);
        let mut c = spawn_stream(42, 1);
        let xa: Vec<u64> = (0..1000).map(|_| a.random()).collect();
        let xb: Vec<u64> = (0..1000).map(|_| b.random()).collect();
        let xc: Vec<u64> = (0..1000).map(|_| c.random()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn noise_moments() {
        let spec = ChannelSpec::awgn(2.0, 0.5);
        let sigma2 = spec.noise_variance();
        let mut rng = spawn_stream(7, 3);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal);
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se_mean = (sigma2 / n as f64).sqrt();
        let se_var = sigma2 * (2.0 / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean}");
        assert!((var - sigma2).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn noiseless_llrs_positive() {
        let g = toy();
        let f = sample_frame(&ChannelSpec::awgn(60.0, 0.5), &g, &mut spawn_stream(1, 0), 0);
        assert!(f.llr.iter().all(|&l| l > 0.0 && l.is_finite()));
    }

    #[test]
    fn shifted_mean() {
        let spec = ChannelSpec::shifted(4.0, 0.5, vec![2], 0.7);
        spec.validate().unwrap();
        let sigma2 = spec.noise_variance();
        let g = toy();
        let mut rng = spawn_stream(11, 0);
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let f = sample_frame(&spec, &g, &mut rng, 0);
            // y = llr σ² / 2
            sum += f.llr[2] as f64 * sigma2 / 2.0;
        }
        let mean = sum / draws as f64;
        assert!((mean - 0.3).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sign_flip_symmetry() {
        let g = toy();
        let spec = ChannelSpec::awgn(3.0, 0.5);
        let mut rng = spawn_stream(5, 9);
        let noise: Vec<f64> = (0..g.n()).map(|_| rng.sample(StandardNormal)).collect();
        let neg: Vec<f64> = noise.iter().map(|x| -x).collect();
        let mut a = vec![0f32; g.n()];
        let mut b = vec![0f32; g.n()];
        spec.llr_from_noise(g.punctured(), &noise, None, &mut a);
        spec.llr_from_noise(g.punctured(), &neg, None, &mut b);
        let c = 2.0 / spec.noise_variance();
        for (x, y) in a.iter().zip(&b) {
            assert!(((*x as f64 - c) + (*y as f64 - c)).abs() < 1e-4);
        }
    }

    #[test]
    fn punctured_are_zero() {
        let g = Protograph::parse("2 4 3\npunctured: 1\n0 1 - 0\n- 0 2 1\n")
            .unwrap()
            .lift()
            .unwrap();
        let f = sample_frame(&ChannelSpec::rayleigh(3.0, 0.5), &g, &mut spawn_stream(0, 0), 0);
        assert!(f.llr[3..6].iter().all(|&l| l == 0.0));
        assert!(f.llr[..3].iter().all(|&l| l != 0.0));
    }

    #[test]
    fn spec_validation() {
        assert!(ChannelSpec::awgn(1.0, 1.5).validate().is_err());
        let mut s = ChannelSpec::awgn(1.0, 0.5);
        s.beta = Some(0.3);
        assert!(s.validate().is_err());
        assert!(ChannelSpec::shifted(1.0, 0.5, vec![], -0.1).validate().is_err());
    }
}
