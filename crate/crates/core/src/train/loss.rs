//! Frame losses on output LLRs under all-zero transmission, where a negative
//! output marks a wrong bit.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    SoftBer,
    Fer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Temperature `κ` of the FER surrogate `σ(-κ min o)`. Infinity selects
    /// the hard indicator, which has zero gradient.
    #[serde(default = "default_sharpness")]
    pub fer_sharpness: f64,
}

fn default_sharpness() -> f64 {
    10.0
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::fer()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LossSpec {
    pub fn bce() -> Self {
        Self {
            kind: LossKind::Bce,
            fer_sharpness: default_sharpness(),
        }
    }

    pub fn soft_ber() -> Self {
        Self {
            kind: LossKind::SoftBer,
            fer_sharpness: default_sharpness(),
        }
    }

    pub fn fer() -> Self {
        Self {
            kind: LossKind::Fer,
            fer_sharpness: default_sharpness(),
        }
    }

    /// The non-differentiable frame indicator `½[1 - sgn(min o)]`.
    pub fn hard_fer() -> Self {
        Self {
            kind: LossKind::Fer,
            fer_sharpness: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.kind == LossKind::Fer && !(self.fer_sharpness > 0.0) {
            return Err(crate::Error::Config(format!(
                "fer_sharpness {} must be positive",
                self.fer_sharpness
            )));
        }
        Ok(())
    }

    /// Loss value of one frame.
    pub fn value(&self, o: &[f64]) -> f64 {
        let n = o.len() as f64;
        match self.kind {
            LossKind::Bce => o.iter().map(|&x| softplus(-x)).sum::<f64>() / n,
            LossKind::SoftBer => o.iter().map(|&x| sigmoid(-x)).sum::<f64>() / n,
            LossKind::Fer => {
                let (_, m) = argmin(o);
                if self.fer_sharpness.is_infinite() {
                    if m < 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    sigmoid(-self.fer_sharpness * m)
                }
            }
        }
    }

    /// Loss value and its gradient with respect to `o`, added into `grad`
    /// scaled by `scale`.
    pub fn accumulate(&self, o: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let n = o.len() as f64;
        match self.kind {
            LossKind::Bce => {
                for (g, &x) in grad.iter_mut().zip(o) {
                    *g -= scale * sigmoid(-x) / n;
                }
            }
            LossKind::SoftBer => {
                for (g, &x) in grad.iter_mut().zip(o) {
                    let s = sigmoid(-x);
                    *g -= scale * s * (1.0 - s) / n;
                }
            }
            LossKind::Fer => {
                if self.fer_sharpness.is_finite() {
                    let (i, m) = argmin(o);
                    let s = sigmoid(-self.fer_sharpness * m);
                    grad[i] -= scale * self.fer_sharpness * s * (1.0 - s);
                }
            }
        }
        self.value(o)
    }
}

/// Smallest entry, earliest index on ties.
fn argmin(o: &[f64]) -> (usize, f64) {
    o.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(bi, bm), (i, &x)| if x < bm { (i, x) } else { (bi, bm) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::spawn_stream;
    use rand::Rng;

    #[test]
    fn limits() {
        assert!(LossSpec::fer().value(&[10.0; 8]) < 1e-4);
        let z = [0.0; 6];
        assert!((LossSpec::bce().value(&z) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(LossSpec::soft_ber().value(&z), 0.5);
        assert_eq!(LossSpec::hard_fer().value(&[1.0, -0.5]), 1.0);
        assert_eq!(LossSpec::hard_fer().value(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn stable_extremes() {
        assert!(softplus(800.0).is_finite() && softplus(-800.0) == 0.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = spawn_stream(4, 0);
        let h = 1e-4;
        for spec in [LossSpec::bce(), LossSpec::soft_ber(), LossSpec::fer()] {
            for _ in 0..50 {
                let o: Vec<f64> = (0..12).map(|_| rng.random_range(-1.5..3.0)).collect();
                let mut g = vec![0.0; o.len()];
                spec.accumulate(&o, 1.0, &mut g);
                for i in 0..o.len() {
                    let mut p = o.clone();
                    let mut m = o.clone();
                    p[i] += h;
                    m[i] -= h;
                    let fd = (spec.value(&p) - spec.value(&m)) / (2.0 * h);
                    let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
                    // the fer argmin can move inside the stencil; skip those
                    if spec.kind == LossKind::Fer {
                        let mut sorted = o.clone();
                        sorted.sort_by(f64::total_cmp);
                        if sorted[1] - sorted[0] < 2.0 * h {
                            continue;
                        }
                    }
                    assert!(
                        err < 1e-5 || (fd - g[i]).abs() < 1e-10,
                        "{spec:?} {i}: fd {fd} an {}",
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn fer_gradient_goes_to_earliest_min() {
        let mut g = vec![0.0; 4];
        LossSpec::fer().accumulate(&[1.0, -0.5, 2.0, -0.5], 1.0, &mut g);
        assert!(g[1] < 0.0);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[3], 0.0);
        let mut g = vec![0.0; 2];
        LossSpec::hard_fer().accumulate(&[-1.0, 1.0], 1.0, &mut g);
        assert_eq!(g, vec![0.0, 0.0]);
    }
}
