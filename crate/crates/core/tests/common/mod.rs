#![allow(dead_code)]

use std::path::PathBuf;

use boostdec::{Protograph, TannerGraph};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn base_graph(name: &str) -> TannerGraph {
    let text = std::fs::read_to_string(data(name)).unwrap();
    Protograph::parse(&text).unwrap().lift().unwrap()
}

pub fn wimax() -> TannerGraph {
    base_graph("wimax_576_r34b.txt")
}

pub fn wifi() -> TannerGraph {
    base_graph("wifi_648_r56.txt")
}

/// n = 12.
pub fn toy12() -> TannerGraph {
    Protograph::parse("2 4 3\n0 1 - 0\n- 0 2 1\n").unwrap().lift().unwrap()
}

/// n = 24.
pub fn toy24() -> TannerGraph {
    Protograph::parse("3 6 4\n0 1 - 2 - 0\n- 0 3 - 1 2\n1 - 0 2 3 -\n")
        .unwrap()
        .lift()
        .unwrap()
}

/// Textbook flooding min-sum with one CN attenuation factor and an optional
/// `(step, L)` rounding grid. Written against the plain edge list only.
pub struct RefMinSum {
    pub weight: f64,
    pub grid: Option<(f64, f64)>,
    pub iterations: usize,
    pub early_stop: bool,
    vn: Vec<Vec<usize>>,
    cn: Vec<Vec<usize>>,
}

pub struct RefResult {
    pub hard: Vec<u8>,
    pub out: Vec<f64>,
    pub success: bool,
    pub iterations: usize,
}

impl RefMinSum {
    pub fn new(g: &TannerGraph, weight: f64, grid: Option<(f64, f64)>, iterations: usize) -> Self {
        let mut vn = vec![Vec::new(); g.n()];
        let mut cn = vec![Vec::new(); g.m()];
        for e in 0..g.num_edges() {
            vn[g.edge_vn(e)].push(e);
            cn[g.edge_cn(e)].push(e);
        }
        Self {
            weight,
            grid,
            iterations,
            early_stop: true,
            vn,
            cn,
        }
    }

    fn q(&self, x: f64) -> f64 {
        match self.grid {
            None => x,
            Some((step, l)) => ((x / step).round() * step).clamp(-l, l),
        }
    }

    pub fn decode(&self, llr: &[f32]) -> RefResult {
        let n = self.vn.len();
        let ne: usize = self.vn.iter().map(Vec::len).sum();
        let mut owner = vec![0; ne];
        for (v, es) in self.vn.iter().enumerate() {
            for &e in es {
                owner[e] = v;
            }
        }
        let ch: Vec<f64> = llr.iter().map(|&l| self.q(l as f64)).collect();
        let (mut x, mut y) = (vec![0.0; ne], vec![0.0; ne]);
        let (mut out, mut hard) = (vec![0.0; n], vec![0u8; n]);
        let check = |out: &mut [f64], hard: &mut [u8], y: &[f64]| {
            for (v, es) in self.vn.iter().enumerate() {
                let mut s = ch[v];
                for &e in es {
                    s += y[e];
                }
                out[v] = self.q(s);
                hard[v] = u8::from(out[v] < 0.0);
            }
            self.cn
                .iter()
                .all(|es| es.iter().fold(0u8, |p, &e| p ^ hard[owner[e]]) == 0)
        };
        let mut success = false;
        let mut done = 0;
        for l in 1..=self.iterations {
            for (v, es) in self.vn.iter().enumerate() {
                let s: f64 = es.iter().fold(0.0, |a, &e| a + y[e]);
                for &e in es {
                    x[e] = self.q(ch[v] + (s - y[e]));
                }
            }
            for es in &self.cn {
                let neg_count = es.iter().filter(|&&e| x[e] < 0.0).count();
                let mut order: Vec<usize> = es.clone();
                // stable sort keeps the first of equal magnitudes in front
                order.sort_by(|&a, &b| x[a].abs().partial_cmp(&x[b].abs()).unwrap());
                let (first, m1, m2) = (order[0], x[order[0]].abs(), x[order[1]].abs());
                for &e in es {
                    let mag = if e == first { m2 } else { m1 };
                    let others_neg = (neg_count - usize::from(x[e] < 0.0)) % 2 == 1;
                    let signed = if others_neg { -mag } else { mag };
                    y[e] = self.q(self.weight * signed);
                }
            }
            done = l;
            if self.early_stop || l == self.iterations {
                success = check(&mut out, &mut hard, &y);
                if success && self.early_stop {
                    break;
                }
            }
        }
        RefResult {
            hard,
            out,
            success,
            iterations: done,
        }
    }
}

/// Central difference of `f` at `p` along every coordinate, with `None` where
/// the one-sided differences disagree (a kink or jump inside `[p-h, p+h]`).
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<Option<f64>> {
    let f0 = f(p);
    (0..p.len())
        .map(|i| {
            let mut a = p.to_vec();
            let mut b = p.to_vec();
            a[i] += h;
            b[i] -= h;
            let (fa, fb) = (f(&a), f(&b));
            let right = (fa - f0) / h;
            let left = (f0 - fb) / h;
            let scale = right.abs().max(left.abs());
            ((right - left).abs() <= 1e-3 * scale + 1e-6).then_some((fa - fb) / (2.0 * h))
        })
        .collect()
}

/// Relative error with an absolute floor.
pub fn grad_close(analytic: f64, fd: f64, rel: f64, floor: f64) -> bool {
    let err = (analytic - fd).abs();
    err <= floor || err <= rel * analytic.abs().max(fd.abs())
}
