//! Forward message passing: min-sum with trainable weights (MS, WMS and every
//! NMS sharing mode) and weighted sum-product, in floating-point or
//! uniformly quantized arithmetic.
//!
//! One iteration `ℓ` runs
//!
//! ```text
//! x[v→c] = Q( chw(ℓ,v) · ch[v] + Σ_{c'≠c} y[c'→v] )
//! ucn[c] = Π sgn(x[·→c]) < 0
//! y[c→v] = Q( w(ℓ,c→v,ucn[c]) · Π_{v'≠v} sgn(x[v'→c]) · min_{v'≠v} |x[v'→c]| )
//! ```
//!
//! with `sgn(0) = +1` and `y = 0` before the first iteration. The output LLR
//! after iteration `ℓ` is `Q(ch[v] + Σ_c y[c→v])`.

use crate::code::TannerGraph;
use crate::error::{Error, Result};
use crate::quant::{round_half_away, QuantMode, Quantizer};
use crate::weights::{IterLayout, WeightLayout, WeightSet};

/// Magnitude bound applied to sum-product inputs before `tanh`.
pub const BP_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckRule {
    MinSum,
    SumProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecoderConfig {
    pub rule: CheckRule,
    pub quantizer: Quantizer,
    pub iterations: usize,
    /// Stop as soon as the syndrome vanishes. Only meaningful for plain
    /// decoding; traces always cover every iteration.
    pub early_stop: bool,
}

impl DecoderConfig {
    pub fn min_sum(quantizer: Quantizer, iterations: usize) -> Self {
        Self {
            rule: CheckRule::MinSum,
            quantizer,
            iterations,
            early_stop: true,
        }
    }
}

/// Scratch buffers owned by one worker.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub ch: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ucn: Vec<bool>,
    pub out: Vec<f64>,
    pub hard: Vec<u8>,
    tanh: Vec<f64>,
    prefix: Vec<f64>,
    levels: Levels,
}

/// Integer grid levels used by the quantized min-sum fast path.
#[derive(Debug, Clone, Default)]
struct Levels {
    ch: Vec<i32>,
    x: Vec<i32>,
    y: Vec<i32>,
    out: Vec<i32>,
}

impl Workspace {
    pub fn new(g: &TannerGraph) -> Self {
        Self {
            ch: vec![0.0; g.n()],
            x: vec![0.0; g.num_edges()],
            y: vec![0.0; g.num_edges()],
            ucn: vec![false; g.m()],
            out: vec![0.0; g.n()],
            hard: vec![0; g.n()],
            tanh: Vec::new(),
            prefix: Vec::new(),
            levels: Levels::default(),
        }
    }
}

/// Result of a plain decode; decisions are left in the workspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub iterations: usize,
    /// Zero syndrome at termination.
    pub success: bool,
}

/// Per-CN bookkeeping of one min-sum update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CnRecord {
    /// Edge holding the smallest magnitude (lowest index on ties).
    pub argmin: u32,
    /// Edge holding the second smallest magnitude.
    pub argmin2: u32,
    /// Odd number of negative incoming messages.
    pub negative_parity: bool,
}

/// Everything one iteration produced.
#[derive(Debug, Clone, PartialEq)]
pub struct IterTrace {
    pub x: Vec<f64>,
    /// Straight-through mask of the VN→CN quantizer.
    pub x_pass: Vec<bool>,
    pub y: Vec<f64>,
    pub y_pass: Vec<bool>,
    pub ucn: Vec<bool>,
    pub cn: Vec<CnRecord>,
    pub ucn_count: usize,
}

/// Complete record of a decode, sufficient for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    /// First recorded iteration (1-based); earlier ones ran untraced.
    pub first: usize,
    /// Channel LLRs after input quantization.
    pub ch: Vec<f64>,
    pub iters: Vec<IterTrace>,
    /// Output LLRs `m^o` after the last iteration.
    pub output: Vec<f64>,
    pub output_pass: Vec<bool>,
    pub hard: Vec<u8>,
    pub success: bool,
    /// Recorded iteration with the fewest UCNs, earliest on ties.
    pub min_ucn_iteration: usize,
}

impl DecodeTrace {
    pub fn last(&self) -> usize {
        self.first + self.iters.len() - 1
    }

    /// Record of 1-based iteration `l`.
    pub fn iter(&self, l: usize) -> &IterTrace {
        &self.iters[l - self.first]
    }

    /// Output LLRs and straight-through mask had decoding stopped after
    /// 1-based iteration `l`.
    pub fn output_at(&self, g: &TannerGraph, q: &Quantizer, l: usize) -> (Vec<f64>, Vec<bool>) {
        output_llr(g, q, &self.ch, &self.iter(l).y)
    }

    /// Hard decisions of the total belief after iteration `l`.
    pub fn hard_at(&self, g: &TannerGraph, q: &Quantizer, l: usize) -> Vec<u8> {
        self.output_at(g, q, l).0.iter().map(|&o| u8::from(o < 0.0)).collect()
    }
}

/// `m^o_v = Q(ch_v + Σ_c y[c→v])`, with the straight-through mask.
pub fn output_llr(g: &TannerGraph, q: &Quantizer, ch: &[f64], y: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut out = vec![0.0; g.n()];
    let mut pass = vec![true; g.n()];
    for v in 0..g.n() {
        let pre = ch[v] + g.vn_edges(v).iter().map(|&e| y[e as usize]).sum::<f64>();
        out[v] = q.quantize(pre);
        pass[v] = q.passes(pre);
    }
    (out, pass)
}

/// Hard decision: 1 iff the belief is negative.
pub fn hard_decisions(out: &[f64]) -> Vec<u8> {
    out.iter().map(|&o| u8::from(o < 0.0)).collect()
}

/// UCN flags from VN→CN message signs (`sgn(0) = +1`).
pub fn classify_checks(g: &TannerGraph, x: &[f64], flags: &mut [bool]) -> usize {
    let mut count = 0;
    for (c, f) in flags.iter_mut().enumerate() {
        *f = g.cn_edges(c).iter().fold(false, |p, &e| p ^ (x[e as usize] < 0.0));
        count += usize::from(*f);
    }
    count
}

fn level_path(cfg: &DecoderConfig) -> bool {
    let q = &cfg.quantizer;
    cfg.rule == CheckRule::MinSum
        && q.mode == QuantMode::Uniform
        && q.step.log2().fract() == 0.0
        && q.max_magnitude / q.step <= 1e6
}

/// A graph, a weight layout and a configuration. Parameters are passed to
/// each call so a trainer can update them in place.
#[derive(Debug, Clone)]
pub struct Decoder<'g> {
    graph: &'g TannerGraph,
    layout: WeightLayout,
    cfg: DecoderConfig,
    num_params: usize,
    level_path: bool,
    check_major: CheckMajor,
}

/// Edge positions in check-major order: the messages of CN `c` occupy
/// `ptr[c]..ptr[c+1]`, in ascending edge index.
#[derive(Debug, Clone)]
struct CheckMajor {
    ptr: Vec<u32>,
    vn_ptr: Vec<u32>,
    /// Position of each VN's edges, VN-major.
    vn_pos: Vec<u32>,
    /// VN at each position.
    vn_at: Vec<u32>,
    proto_edge: Vec<u32>,
}

impl CheckMajor {
    fn new(g: &TannerGraph) -> Self {
        let mut ptr = vec![0u32];
        let mut pos_of = vec![0u32; g.num_edges()];
        let mut vn_at = Vec::with_capacity(g.num_edges());
        let mut proto_edge = Vec::with_capacity(g.num_edges());
        for c in 0..g.m() {
            for &e in g.cn_edges(c) {
                pos_of[e as usize] = vn_at.len() as u32;
                vn_at.push(g.edge_vn(e as usize) as u32);
                proto_edge.push(g.proto().edge.get(e as usize).copied().unwrap_or(0));
            }
            ptr.push(vn_at.len() as u32);
        }
        let mut vn_ptr = vec![0u32];
        let mut vn_pos = Vec::with_capacity(g.num_edges());
        for v in 0..g.n() {
            vn_pos.extend(g.vn_edges(v).iter().map(|&e| pos_of[e as usize]));
            vn_ptr.push(vn_pos.len() as u32);
        }
        assert!(vn_pos.iter().all(|&p| (p as usize) < g.num_edges()));
        Self {
            ptr,
            vn_ptr,
            vn_pos,
            vn_at,
            proto_edge,
        }
    }

    #[inline(always)]
    fn range(&self, c: usize) -> std::ops::Range<usize> {
        self.ptr[c] as usize..self.ptr[c + 1] as usize
    }

    #[inline(always)]
    fn vn_positions(&self, v: usize) -> &[u32] {
        &self.vn_pos[self.vn_ptr[v] as usize..self.vn_ptr[v + 1] as usize]
    }

    fn is_codeword(&self, hard: &[u8]) -> bool {
        (0..self.ptr.len() - 1).all(|c| {
            self.vn_at[self.range(c)]
                .iter()
                .fold(0u8, |acc, &v| acc ^ hard[v as usize])
                == 0
        })
    }
}

impl<'g> Decoder<'g> {
    pub fn new(graph: &'g TannerGraph, weights: &WeightSet, cfg: DecoderConfig) -> Result<Self> {
        graph.check_decodable()?;
        cfg.quantizer.validate()?;
        if cfg.rule == CheckRule::SumProduct && cfg.quantizer.mode == QuantMode::Uniform {
            return Err(Error::Config("sum-product decoding runs in float mode only".into()));
        }
        if weights.total_iterations() < cfg.iterations {
            return Err(Error::Config(format!(
                "weight set covers {} iterations, {} requested",
                weights.total_iterations(),
                cfg.iterations
            )));
        }
        let layout = WeightLayout::new(weights, graph)?;
        Ok(Self {
            graph,
            layout,
            cfg,
            num_params: weights.num_params(),
            level_path: level_path(&cfg),
            check_major: CheckMajor::new(graph),
        })
    }

    pub fn graph(&self) -> &'g TannerGraph {
        self.graph
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &WeightLayout {
        &self.layout
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.cfg.quantizer
    }

    /// Same decoder with a different iteration count or stopping rule.
    pub fn with_iterations(&self, iterations: usize, early_stop: bool) -> Result<Self> {
        if iterations > self.layout.iterations() {
            return Err(Error::Config(format!(
                "weight set covers {} iterations, {iterations} requested",
                self.layout.iterations()
            )));
        }
        let mut d = self.clone();
        d.cfg.iterations = iterations;
        d.cfg.early_stop = early_stop;
        Ok(d)
    }

    /// Same layout with a different quantizer (e.g. the STE surrogate).
    pub fn with_quantizer(&self, q: Quantizer) -> Self {
        let mut d = self.clone();
        d.cfg.quantizer = q;
        d.level_path = level_path(&d.cfg);
        d
    }

    fn check_dims(&self, params: &[f64], llr: &[f32]) -> Result<()> {
        if llr.len() != self.graph.n() {
            return Err(Error::Dimension {
                what: "channel LLR length",
                expected: self.graph.n(),
                got: llr.len(),
            });
        }
        if params.len() < self.num_params {
            return Err(Error::Dimension {
                what: "parameter vector length",
                expected: self.num_params,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Quantizes the channel input into `ch`.
    pub fn load_channel(&self, llr: &[f32], ch: &mut [f64]) {
        for (c, &l) in ch.iter_mut().zip(llr) {
            *c = self.cfg.quantizer.quantize(l as f64);
        }
    }

    /// VN→CN update of iteration `l` from the previous CN→VN messages `y`.
    pub fn vn_update(
        &self,
        params: &[f64],
        l: usize,
        ch: &[f64],
        y: &[f64],
        x: &mut [f64],
        mut pass: Option<&mut [bool]>,
    ) {
        let g = self.graph;
        let q = &self.cfg.quantizer;
        let lay = self.layout.iter(l);
        let proto_vn = &g.proto().vn;
        let scalar_chw = lay.scalar.then(|| params[lay.chw[0] as usize]);
        for v in 0..g.n() {
            let edges = g.vn_edges(v);
            let w = scalar_chw.unwrap_or_else(|| params[lay.chw[proto_vn[v] as usize] as usize]);
            let a = w * ch[v];
            let mut s = 0.0;
            for &e in edges {
                s += y[e as usize];
            }
            for &e in edges {
                let e = e as usize;
                let pre = a + (s - y[e]);
                x[e] = q.quantize(pre);
                if let Some(p) = pass.as_deref_mut() {
                    p[e] = q.passes(pre);
                }
            }
        }
    }

    #[inline(always)]
    fn cn_weight(&self, params: &[f64], lay: &IterLayout, e: usize, ucn: bool) -> f64 {
        let pe = if lay.scalar {
            0
        } else {
            self.graph.proto().edge[e] as usize
        };
        let idx = if ucn { lay.ucw[pe] } else { lay.cw[pe] };
        params[idx as usize]
    }

    /// Weighted min-sum CN→VN update of iteration `l`. UCN flags must already
    /// reflect `x`.
    pub fn cn_update_minsum(
        &self,
        params: &[f64],
        l: usize,
        x: &[f64],
        ucn: &[bool],
        y: &mut [f64],
        mut record: Option<(&mut [CnRecord], &mut [bool])>,
    ) {
        let g = self.graph;
        let q = &self.cfg.quantizer;
        let lay = self.layout.iter(l);
        let (scalar_cw, scalar_ucw) = if lay.scalar {
            (params[lay.cw[0] as usize], params[lay.ucw[0] as usize])
        } else {
            (0.0, 0.0)
        };
        for c in 0..g.m() {
            let edges = g.cn_edges(c);
            let mut parity = false;
            let (mut min1, mut min2) = (f64::INFINITY, f64::INFINITY);
            let (mut a1, mut a2) = (u32::MAX, u32::MAX);
            for &e in edges {
                let xv = x[e as usize];
                parity ^= xv < 0.0;
                let mag = xv.abs();
                if mag < min1 {
                    min2 = min1;
                    a2 = a1;
                    min1 = mag;
                    a1 = e;
                } else if mag < min2 {
                    min2 = mag;
                    a2 = e;
                }
            }
            let flag = ucn[c];
            for &e in edges {
                let ei = e as usize;
                let w = if lay.scalar {
                    if flag {
                        scalar_ucw
                    } else {
                        scalar_cw
                    }
                } else {
                    self.cn_weight(params, lay, ei, flag)
                };
                let mag = if e == a1 { min2 } else { min1 };
                let neg = parity ^ (x[ei] < 0.0);
                let pre = w * if neg { -mag } else { mag };
                y[ei] = q.quantize(pre);
                if let Some((_, pass)) = record.as_mut() {
                    pass[ei] = q.passes(pre);
                }
            }
            if let Some((recs, _)) = record.as_mut() {
                recs[c] = CnRecord {
                    argmin: a1,
                    argmin2: a2,
                    negative_parity: parity,
                };
            }
        }
    }

    /// Weighted sum-product CN→VN update of iteration `l`.
    pub fn cn_update_sumproduct(
        &self,
        params: &[f64],
        l: usize,
        x: &[f64],
        ucn: &[bool],
        y: &mut [f64],
        scratch: &mut (Vec<f64>, Vec<f64>),
        mut pass: Option<&mut [bool]>,
    ) {
        let g = self.graph;
        let q = &self.cfg.quantizer;
        let lay = self.layout.iter(l);
        let (t, pre_prod) = scratch;
        for c in 0..g.m() {
            let edges = g.cn_edges(c);
            let d = edges.len();
            t.clear();
            t.extend(
                edges
                    .iter()
                    .map(|&e| (x[e as usize].clamp(-BP_CLAMP, BP_CLAMP) / 2.0).tanh()),
            );
            // prefix products, then a running suffix
            pre_prod.clear();
            let mut acc = 1.0;
            for &ti in t.iter() {
                pre_prod.push(acc);
                acc *= ti;
            }
            let mut suffix = 1.0;
            for k in (0..d).rev() {
                let e = edges[k] as usize;
                let prod = pre_prod[k] * suffix;
                suffix *= t[k];
                let w = self.cn_weight(params, lay, e, ucn[c]);
                let pre = w * 2.0 * prod.atanh();
                y[e] = q.quantize(pre);
                if let Some(p) = pass.as_deref_mut() {
                    p[e] = q.passes(pre);
                }
            }
        }
    }

    fn cn_update(&self, params: &[f64], l: usize, ws: &mut Workspace, record: Option<(&mut [CnRecord], &mut [bool])>) {
        match self.cfg.rule {
            CheckRule::MinSum => self.cn_update_minsum(params, l, &ws.x, &ws.ucn, &mut ws.y, record),
            CheckRule::SumProduct => {
                let mut scratch = (std::mem::take(&mut ws.tanh), std::mem::take(&mut ws.prefix));
                let pass = record.map(|(_, p)| p);
                self.cn_update_sumproduct(params, l, &ws.x, &ws.ucn, &mut ws.y, &mut scratch, pass);
                ws.tanh = scratch.0;
                ws.prefix = scratch.1;
            }
        }
    }

    fn decisions(&self, ws: &mut Workspace) -> bool {
        let g = self.graph;
        let q = &self.cfg.quantizer;
        for v in 0..g.n() {
            let mut s = ws.ch[v];
            for &e in g.vn_edges(v) {
                s += ws.y[e as usize];
            }
            let o = q.quantize(s);
            ws.out[v] = o;
            ws.hard[v] = u8::from(o < 0.0);
        }
        g.is_codeword(&ws.hard)
    }

    /// Plain decode for evaluation. Decisions end up in `ws.out` / `ws.hard`.
    pub fn decode(&self, params: &[f64], llr: &[f32], ws: &mut Workspace) -> Result<Outcome> {
        self.check_dims(params, llr)?;
        Ok(self.decode_unchecked(params, llr, ws))
    }

    /// [`Decoder::decode`] without dimension checks, for hot loops.
    pub fn decode_unchecked(&self, params: &[f64], llr: &[f32], ws: &mut Workspace) -> Outcome {
        if self.level_path {
            self.decode_levels(params, llr, ws)
        } else {
            self.decode_generic(params, llr, ws)
        }
    }

    fn decode_generic(&self, params: &[f64], llr: &[f32], ws: &mut Workspace) -> Outcome {
        self.load_channel(llr, &mut ws.ch);
        ws.y.fill(0.0);
        let mut success = false;
        let mut done = 0;
        for l in 1..=self.cfg.iterations {
            self.vn_update(params, l, &ws.ch, &ws.y, &mut ws.x, None);
            classify_checks(self.graph, &ws.x, &mut ws.ucn);
            self.cn_update(params, l, ws, None);
            done = l;
            if self.cfg.early_stop || l == self.cfg.iterations {
                success = self.decisions(ws);
                if success && self.cfg.early_stop {
                    break;
                }
            }
        }
        if done == 0 {
            success = self.decisions(ws);
        }
        Outcome {
            iterations: done,
            success,
        }
    }

    /// Min-sum on integer grid levels. With a power-of-two step, scaling by
    /// the step is exact, so this reproduces [`Self::decode_generic`] bit for
    /// bit while avoiding float rounding on every message. Messages live in
    /// check-major order. Only `ch`, `out`, `hard` and `ucn` of the workspace
    /// are filled in.
    fn decode_levels(&self, params: &[f64], llr: &[f32], ws: &mut Workspace) -> Outcome {
        let g = self.graph;
        let cm = &self.check_major;
        let q = &self.cfg.quantizer;
        let step = q.step;
        let lk = (q.max_magnitude / step).round() as i32;
        let lkf = lk as f64;
        let round_level = |t: f64| round_half_away(t.clamp(-lkf - 1.0, lkf + 1.0)).clamp(-lkf, lkf) as i32;
        let ne = g.num_edges();
        let lv = &mut ws.levels;
        lv.ch.clear();
        lv.ch.extend(llr.iter().map(|&l| round_level(l as f64 / step)));
        lv.x.resize(ne, 0);
        lv.y.clear();
        lv.y.resize(ne, 0);
        lv.out.resize(g.n(), 0);
        ws.hard.resize(g.n(), 0);
        let (x, y) = (&mut lv.x[..ne], &mut lv.y[..ne]);
        let proto_vn = &g.proto().vn;
        let mut tab_c = [0i32; 64];
        let mut tab_u = [0i32; 64];
        let tabulate = (lk as usize) < tab_c.len();
        let mut stopped = false;
        let mut done = 0;
        for l in 1..=self.cfg.iterations {
            let lay = self.layout.iter(l);
            let scalar_chw = lay.scalar.then(|| params[lay.chw[0] as usize]);
            // the VN sums also give the beliefs after iteration l-1
            let check = self.cfg.early_stop && l > 1;
            for v in 0..g.n() {
                let pos = cm.vn_positions(v);
                let w = scalar_chw.unwrap_or_else(|| params[lay.chw[proto_vn[v] as usize] as usize]);
                let chv = lv.ch[v];
                let mut s = 0i32;
                for &p in pos {
                    // SAFETY: positions are < num_edges by construction of CheckMajor
                    s += unsafe { *y.get_unchecked(p as usize) };
                }
                if check {
                    let o = (chv + s).clamp(-lk, lk);
                    lv.out[v] = o;
                    ws.hard[v] = u8::from(o < 0);
                }
                if w == 1.0 {
                    for &p in pos {
                        let p = p as usize;
                        // SAFETY: as above
                        unsafe {
                            *x.get_unchecked_mut(p) = (chv + s - *y.get_unchecked(p)).clamp(-lk, lk);
                        }
                    }
                } else {
                    let a = w * chv as f64;
                    for &p in pos {
                        let p = p as usize;
                        // SAFETY: as above
                        unsafe {
                            *x.get_unchecked_mut(p) = round_level(a + (s - *y.get_unchecked(p)) as f64);
                        }
                    }
                }
            }
            if check && cm.is_codeword(&ws.hard) {
                stopped = true;
                break;
            }
            let scalar_cn = lay.scalar && tabulate;
            if scalar_cn {
                let (wc, wu) = (params[lay.cw[0] as usize], params[lay.ucw[0] as usize]);
                for k in 0..=lk as usize {
                    tab_c[k] = round_level(wc * k as f64);
                    tab_u[k] = round_level(wu * k as f64);
                }
            }
            for c in 0..g.m() {
                let r = cm.range(c);
                let xs = &x[r.clone()];
                let ys = &mut y[r.clone()];
                let mut parity = false;
                let (mut min1, mut min2) = (i32::MAX, i32::MAX);
                let mut a1 = usize::MAX;
                for (k, &xv) in xs.iter().enumerate() {
                    parity ^= xv < 0;
                    let mag = xv.abs();
                    // branch-free: magnitudes are too random to predict
                    let lt = mag < min1;
                    min2 = if lt { min1 } else { min2.min(mag) };
                    a1 = if lt { k } else { a1 };
                    min1 = if lt { mag } else { min1 };
                }
                ws.ucn[c] = parity;
                let sign_of = |xv: i32, val: i32| {
                    let neg = -i32::from(parity ^ (xv < 0));
                    (val ^ neg) - neg
                };
                if scalar_cn {
                    let tab = if parity { &tab_u } else { &tab_c };
                    let (v1, v2) = (tab[min1 as usize], tab[min2 as usize]);
                    for (k, (yo, &xv)) in ys.iter_mut().zip(xs).enumerate() {
                        *yo = sign_of(xv, if k == a1 { v2 } else { v1 });
                    }
                } else {
                    let pe = &cm.proto_edge[r];
                    for (k, ((yo, &xv), &pe)) in ys.iter_mut().zip(xs).zip(pe).enumerate() {
                        let mag = if k == a1 { min2 } else { min1 };
                        let pe = if lay.scalar { 0 } else { pe as usize };
                        let w = params[if parity { lay.ucw[pe] } else { lay.cw[pe] } as usize];
                        *yo = sign_of(xv, round_level(w * mag as f64));
                    }
                }
            }
            done = l;
        }
        let success = if stopped {
            true
        } else {
            for v in 0..g.n() {
                let mut o = lv.ch[v];
                for &p in cm.vn_positions(v) {
                    o += y[p as usize];
                }
                let o = o.clamp(-lk, lk);
                lv.out[v] = o;
                ws.hard[v] = u8::from(o < 0);
            }
            cm.is_codeword(&ws.hard)
        };
        for v in 0..g.n() {
            ws.ch[v] = lv.ch[v] as f64 * step;
            ws.out[v] = lv.out[v] as f64 * step;
        }
        Outcome {
            iterations: done,
            success,
        }
    }

    /// Full trace over the configured iteration count; never stops early.
    pub fn decode_trace(&self, params: &[f64], llr: &[f32]) -> Result<DecodeTrace> {
        self.check_dims(params, llr)?;
        let state = self.initial_state(llr);
        self.trace_from(params, &state, self.cfg.iterations)
    }

    /// State before the first iteration.
    pub fn initial_state(&self, llr: &[f32]) -> DecoderState {
        let mut ch = vec![0.0; self.graph.n()];
        self.load_channel(llr, &mut ch);
        DecoderState {
            ch,
            y: vec![0.0; self.graph.num_edges()],
            iteration: 0,
        }
    }

    /// Runs iterations `state.iteration + 1 ..= upto` without recording.
    pub fn advance(&self, params: &[f64], state: &mut DecoderState, upto: usize) {
        let g = self.graph;
        let mut ws = Workspace::new(g);
        std::mem::swap(&mut ws.y, &mut state.y);
        for l in state.iteration + 1..=upto {
            self.vn_update(params, l, &state.ch, &ws.y, &mut ws.x, None);
            classify_checks(g, &ws.x, &mut ws.ucn);
            self.cn_update(params, l, &mut ws, None);
        }
        std::mem::swap(&mut ws.y, &mut state.y);
        state.iteration = state.iteration.max(upto);
    }

    /// Records iterations `state.iteration + 1 ..= last`.
    pub fn trace_from(&self, params: &[f64], state: &DecoderState, last: usize) -> Result<DecodeTrace> {
        let first = state.iteration + 1;
        if last < first || last > self.layout.iterations() {
            return Err(Error::Config(format!(
                "cannot trace iterations {first}..={last} of a {}-iteration weight set",
                self.layout.iterations()
            )));
        }
        if params.len() < self.num_params {
            return Err(Error::Dimension {
                what: "parameter vector length",
                expected: self.num_params,
                got: params.len(),
            });
        }
        let g = self.graph;
        let mut ws = Workspace::new(g);
        ws.ch.copy_from_slice(&state.ch);
        ws.y.copy_from_slice(&state.y);
        let mut iters = Vec::with_capacity(last + 1 - first);
        let mut best = (usize::MAX, 0);
        for l in first..=last {
            let mut x_pass = vec![true; g.num_edges()];
            let mut y_pass = vec![true; g.num_edges()];
            let mut cn = vec![CnRecord::default(); g.m()];
            self.vn_update(params, l, &ws.ch, &ws.y, &mut ws.x, Some(&mut x_pass));
            let ucn_count = classify_checks(g, &ws.x, &mut ws.ucn);
            if ucn_count < best.0 {
                best = (ucn_count, l);
            }
            self.cn_update(params, l, &mut ws, Some((&mut cn, &mut y_pass)));
            iters.push(IterTrace {
                x: ws.x.clone(),
                x_pass,
                y: ws.y.clone(),
                y_pass,
                ucn: ws.ucn.clone(),
                cn,
                ucn_count,
            });
        }
        let (output, output_pass) = output_llr(g, &self.cfg.quantizer, &ws.ch, &ws.y);
        let hard = hard_decisions(&output);
        let success = g.is_codeword(&hard);
        Ok(DecodeTrace {
            first,
            ch: ws.ch,
            iters,
            output,
            output_pass,
            hard,
            success,
            min_ucn_iteration: best.1,
        })
    }
}

/// Channel input plus the CN→VN messages after `iteration` iterations;
/// enough to resume decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub ch: Vec<f64>,
    pub y: Vec<f64>,
    pub iteration: usize,
}

/// True when any (information) bit of `hard` is wrong under all-zero
/// transmission.
pub fn frame_error(hard: &[u8], info_mask: Option<&[bool]>) -> bool {
    match info_mask {
        None => hard.iter().any(|&b| b != 0),
        Some(mask) => hard.iter().zip(mask).any(|(&b, &m)| m && b != 0),
    }
}

/// Number of wrong (information) bits.
pub fn bit_errors(hard: &[u8], info_mask: Option<&[bool]>) -> usize {
    match info_mask {
        None => hard.iter().filter(|&&b| b != 0).count(),
        Some(mask) => hard.iter().zip(mask).filter(|(&b, &m)| m && b != 0).count(),
    }
}
