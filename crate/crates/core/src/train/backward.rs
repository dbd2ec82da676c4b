//! Reverse pass through a recorded decode.
//!
//! Local rules: the excluded minimum passes its whole gradient to the edge
//! that attained it, signs are constants, and each quantizer is the identity
//! inside `[-L, L]` and flat outside (straight-through).

use crate::decoder::{CheckRule, DecodeTrace, Decoder, BP_CLAMP};
use crate::error::{Error, Result};

/// Accumulates `d loss / d params` into `grad`.
///
/// `out_grads` holds `(ℓ, d loss / d m^o after iteration ℓ)` pairs. The
/// reverse pass stops at iteration `stop_at`, below which only frozen
/// parameters live.
pub fn backward(
    dec: &Decoder<'_>,
    params: &[f64],
    trace: &DecodeTrace,
    out_grads: &[(usize, Vec<f64>)],
    stop_at: usize,
    grad: &mut [f64],
) -> Result<()> {
    let g = dec.graph();
    let q = dec.quantizer();
    let Some(last) = out_grads.iter().map(|(l, _)| *l).max() else {
        return Ok(());
    };
    if stop_at < trace.first || last > trace.last() || stop_at > last {
        return Err(Error::Config(format!(
            "backward over {stop_at}..={last} outside traced iterations {}..={}",
            trace.first,
            trace.last()
        )));
    }
    if grad.len() != params.len() {
        return Err(Error::Dimension {
            what: "gradient length",
            expected: params.len(),
            got: grad.len(),
        });
    }
    let ne = g.num_edges();
    let proto_vn = &g.proto().vn;
    let proto_edge = &g.proto().edge;
    let mut gy = vec![0.0; ne];
    let mut gx = vec![0.0; ne];
    let mut bp = BpScratch::default();
    for l in (stop_at..=last).rev() {
        for (_, go) in out_grads.iter().filter(|(lo, _)| *lo == l) {
            let (_, pass) = trace.output_at(g, q, l);
            for v in 0..g.n() {
                if pass[v] && go[v] != 0.0 {
                    for &e in g.vn_edges(v) {
                        gy[e as usize] += go[v];
                    }
                }
            }
        }
        let it = trace.iter(l);
        let lay = dec.layout().iter(l);
        gx.fill(0.0);
        for c in 0..g.m() {
            let edges = g.cn_edges(c);
            let ucn = it.ucn[c];
            match dec.config().rule {
                CheckRule::MinSum => {
                    let rec = it.cn[c];
                    for &e in edges {
                        let e = e as usize;
                        if !it.y_pass[e] || gy[e] == 0.0 {
                            continue;
                        }
                        let gp = gy[e];
                        let a = if e as u32 == rec.argmin {
                            rec.argmin2
                        } else {
                            rec.argmin
                        } as usize;
                        let xa = it.x[a];
                        let sgn_e = if rec.negative_parity ^ (it.x[e] < 0.0) {
                            -1.0
                        } else {
                            1.0
                        };
                        let pe = proto_edge[e] as usize;
                        let wi = if ucn { lay.ucw[pe] } else { lay.cw[pe] } as usize;
                        grad[wi] += gp * sgn_e * xa.abs();
                        let sgn_a = if xa < 0.0 { -1.0 } else { 1.0 };
                        gx[a] += gp * params[wi] * sgn_e * sgn_a;
                    }
                }
                CheckRule::SumProduct => {
                    bp.cn(
                        params, lay, proto_edge, edges, ucn, &it.x, &it.y_pass, &gy, &mut gx, grad,
                    );
                }
            }
        }
        for e in 0..ne {
            if !it.x_pass[e] {
                gx[e] = 0.0;
            }
        }
        for v in 0..g.n() {
            let edges = g.vn_edges(v);
            let wi = lay.chw[proto_vn[v] as usize] as usize;
            let mut total = 0.0;
            for &e in edges {
                total += gx[e as usize];
            }
            grad[wi] += total * trace.ch[v];
            if l > stop_at {
                for &e in edges {
                    let e = e as usize;
                    gy[e] = total - gx[e];
                }
            }
        }
    }
    Ok(())
}

#[derive(Default)]
struct BpScratch {
    t: Vec<f64>,
    u: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl BpScratch {
    #[allow(clippy::too_many_arguments)]
    fn cn(
        &mut self,
        params: &[f64],
        lay: &crate::weights::IterLayout,
        proto_edge: &[u32],
        edges: &[u32],
        ucn: bool,
        x: &[f64],
        y_pass: &[bool],
        gy: &[f64],
        gx: &mut [f64],
        grad: &mut [f64],
    ) {
        let d = edges.len();
        self.t.clear();
        self.t.extend(
            edges
                .iter()
                .map(|&e| (x[e as usize].clamp(-BP_CLAMP, BP_CLAMP) / 2.0).tanh()),
        );
        for (k, &e) in edges.iter().enumerate() {
            let e = e as usize;
            if !y_pass[e] || gy[e] == 0.0 {
                continue;
            }
            // products of t over all but positions k and j, via prefix/suffix
            self.u.clear();
            self.u.extend_from_slice(&self.t);
            self.u[k] = 1.0;
            self.prefix.clear();
            self.prefix.push(1.0);
            for j in 0..d {
                let p = self.prefix[j] * self.u[j];
                self.prefix.push(p);
            }
            self.suffix.clear();
            self.suffix.resize(d + 1, 1.0);
            for j in (0..d).rev() {
                self.suffix[j] = self.suffix[j + 1] * self.u[j];
            }
            let prod = self.prefix[d];
            let pe = proto_edge[e] as usize;
            let wi = if ucn { lay.ucw[pe] } else { lay.cw[pe] } as usize;
            let w = params[wi];
            grad[wi] += gy[e] * 2.0 * prod.atanh();
            let outer = gy[e] * w * 2.0 / (1.0 - prod * prod);
            for j in 0..d {
                if j == k {
                    continue;
                }
                let xo = x[edges[j] as usize];
                if xo.abs() > BP_CLAMP {
                    continue;
                }
                let others = self.prefix[j] * self.suffix[j + 1];
                gx[edges[j] as usize] += outer * others * (1.0 - self.t[j] * self.t[j]) / 2.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_frame, spawn_stream, ChannelSpec};
    use crate::code::{Protograph, TannerGraph};
    use crate::decoder::DecoderConfig;
    use crate::quant::Quantizer;
    use crate::train::loss::LossSpec;
    use crate::weights::{ProtoDims, SharingMode, WeightSet};
    use rand::Rng;

    fn loss_at(dec: &Decoder<'_>, params: &[f64], llr: &[f32], loss: &LossSpec) -> f64 {
        let t = dec.decode_trace(params, llr).unwrap();
        loss.value(&t.output)
    }

    fn analytic(dec: &Decoder<'_>, params: &[f64], llr: &[f32], loss: &LossSpec) -> Vec<f64> {
        let t = dec.decode_trace(params, llr).unwrap();
        let mut go = vec![0.0; t.output.len()];
        loss.accumulate(&t.output, 1.0, &mut go);
        let mut grad = vec![0.0; params.len()];
        backward(dec, params, &t, &[(t.last(), go)], 1, &mut grad).unwrap();
        grad
    }

    #[test]
    fn single_edge_network() {
        // two VNs on one CN: o_0 = ch_0 + w·ch_1·w̄, one iteration
        let g = TannerGraph::from_edges(2, 1, &[(0, 0), (1, 0)]).unwrap();
        let mut ws = WeightSet::single("t", ProtoDims::of(&g), SharingMode::Spatial, 1);
        ws.params_mut().copy_from_slice(&[0.9, 0.7]);
        let dec = Decoder::new(&g, &ws, {
            let mut c = DecoderConfig::min_sum(Quantizer::float(), 1);
            c.early_stop = false;
            c
        })
        .unwrap();
        let llr = [0.4f32, -1.2];
        let loss = LossSpec::bce();
        let grad = analytic(&dec, ws.params(), &llr, &loss);
        let h = 1e-6;
        for i in 0..2 {
            let mut p = ws.params().to_vec();
            let mut m = p.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (loss_at(&dec, &p, &llr, &loss) - loss_at(&dec, &m, &llr, &loss)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1e-8),
                "{i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn hard_fer_gives_zero_gradient() {
        let g = Protograph::parse("2 4 3\n0 1 - 0\n- 0 2 1\n").unwrap().lift().unwrap();
        let ws = WeightSet::single("t", ProtoDims::of(&g), SharingMode::Dynamic, 3);
        let mut cfg = DecoderConfig::min_sum(Quantizer::five_bit(), 3);
        cfg.early_stop = false;
        let dec = Decoder::new(&g, &ws, cfg).unwrap();
        let mut rng = spawn_stream(3, 3);
        for t in 0..20 {
            let f = sample_frame(&ChannelSpec::awgn(8.0, 0.5), &g, &mut rng, t);
            let grad = analytic(&dec, ws.params(), &f.llr, &LossSpec::hard_fer());
            assert!(grad.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn sumproduct_gradient() {
        let g = Protograph::parse("2 4 3\n0 1 - 0\n- 0 2 1\n").unwrap().lift().unwrap();
        let mut ws = WeightSet::single("t", ProtoDims::of(&g), SharingMode::Dynamic, 3);
        let mut rng = spawn_stream(8, 1);
        for p in ws.params_mut() {
            *p = rng.random_range(0.5..1.5);
        }
        let cfg = DecoderConfig {
            rule: CheckRule::SumProduct,
            quantizer: Quantizer::float(),
            iterations: 3,
            early_stop: false,
        };
        let dec = Decoder::new(&g, &ws, cfg).unwrap();
        let loss = LossSpec::soft_ber();
        let h = 1e-5;
        for t in 0..10 {
            let f = sample_frame(&ChannelSpec::awgn(1.0, 0.5), &g, &mut rng, t);
            let grad = analytic(&dec, ws.params(), &f.llr, &loss);
            for i in 0..ws.num_params() {
                let mut p = ws.params().to_vec();
                let mut m = p.clone();
                p[i] += h;
                m[i] -= h;
                let fd = (loss_at(&dec, &p, &f.llr, &loss) - loss_at(&dec, &m, &f.llr, &loss)) / (2.0 * h);
                let err = (fd - grad[i]).abs();
                assert!(
                    err <= 1e-5 * fd.abs().max(grad[i].abs()) || err < 1e-8,
                    "{i}: {fd} vs {}",
                    grad[i]
                );
            }
        }
    }
}
