//! Trainable decoder weights and their sharing modes.
//!
//! A [`WeightSet`] is a sequence of stages (base, post, optional second post),
//! each covering consecutive iterations under one sharing mode. Parameters
//! live in one flat vector so optimizers and gradients share the same
//! indexing; [`WeightLayout`] resolves, per iteration, which parameter
//! feeds each channel weight (ChW), CN weight (CW) and UCN weight (UCW).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::code::TannerGraph;
use crate::error::{Error, Result};
use crate::quant::Quantizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingMode {
    /// Per proto VN and proto edge, per iteration: `(N + E)` per iteration.
    Full,
    /// One ChW and one CW per iteration.
    Spatial,
    /// Per proto VN and proto edge, shared by all iterations.
    Temporal,
    /// ChW, CW (satisfied CNs) and UCW (unsatisfied CNs) per iteration.
    Dynamic,
    /// ChW per proto VN, CW and UCW per proto CN, per iteration.
    DynamicProto,
}

impl SharingMode {
    pub fn is_iteration_indexed(self) -> bool {
        !matches!(self, SharingMode::Temporal)
    }

    /// Uses separate weights for unsatisfied CNs.
    pub fn is_dynamic(self) -> bool {
        matches!(self, SharingMode::Dynamic | SharingMode::DynamicProto)
    }

    /// Parameters held by one iteration (or the whole stage for temporal).
    fn block(self, dims: &ProtoDims) -> usize {
        match self {
            SharingMode::Full | SharingMode::Temporal => dims.vns + dims.edges,
            SharingMode::Spatial => 2,
            SharingMode::Dynamic => 3,
            SharingMode::DynamicProto => dims.vns + 2 * dims.cns,
        }
    }

    pub fn param_count(self, dims: &ProtoDims, iterations: usize) -> usize {
        match self {
            SharingMode::Temporal => {
                if iterations == 0 {
                    0
                } else {
                    self.block(dims)
                }
            }
            _ => self.block(dims) * iterations,
        }
    }
}

/// Protograph sizes `(N, M, E)` a weight set is laid out for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtoDims {
    pub vns: usize,
    pub cns: usize,
    pub edges: usize,
}

impl ProtoDims {
    pub fn of(g: &TannerGraph) -> Self {
        let p = g.proto();
        Self {
            vns: p.num_vns,
            cns: p.num_cns,
            edges: p.num_edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub mode: SharingMode,
    pub iterations: usize,
    /// Whether the stage receives gradients.
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub code_id: String,
    dims: ProtoDims,
    stages: Vec<Stage>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    pub quantizer: Option<Quantizer>,
}

/// Where one weight is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Chw,
    Cw,
    Ucw,
}

impl WeightSet {
    /// Canonical initialisation: every weight equal to 1 (plain min-sum).
    pub fn ones(code_id: impl Into<String>, dims: ProtoDims, stages: Vec<Stage>) -> Self {
        let mut offsets = Vec::with_capacity(stages.len() + 1);
        let mut total = 0;
        for s in &stages {
            offsets.push(total);
            total += s.mode.param_count(&dims, s.iterations);
        }
        offsets.push(total);
        Self {
            code_id: code_id.into(),
            dims,
            stages,
            offsets,
            params: vec![1.0; total],
            quantizer: None,
        }
    }

    /// Single trainable stage.
    pub fn single(code_id: impl Into<String>, dims: ProtoDims, mode: SharingMode, iterations: usize) -> Self {
        Self::ones(
            code_id,
            dims,
            vec![Stage {
                mode,
                iterations,
                trainable: true,
            }],
        )
    }

    /// Weighted min-sum: ChW 1 and a constant CW `w` in every iteration.
    pub fn wms(code_id: impl Into<String>, dims: ProtoDims, iterations: usize, w: f64) -> Self {
        let mut ws = Self::single(code_id, dims, SharingMode::Spatial, iterations);
        for t in 0..iterations {
            ws.params[2 * t + 1] = w;
        }
        ws.stages[0].trainable = false;
        ws
    }

    pub fn dims(&self) -> ProtoDims {
        self.dims
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [Stage] {
        &mut self.stages
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Total iterations `ℓ̄` covered by all stages.
    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }

    /// First iteration (1-based) of stage `s`.
    pub fn stage_start(&self, s: usize) -> usize {
        1 + self.stages[..s].iter().map(|st| st.iterations).sum::<usize>()
    }

    /// Parameter range owned by stage `s`.
    pub fn stage_range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    /// Stage index and 0-based offset of 1-based iteration `l`.
    pub fn locate(&self, l: usize) -> Option<(usize, usize)> {
        let mut start = 1;
        for (s, st) in self.stages.iter().enumerate() {
            if l >= start && l < start + st.iterations {
                return Some((s, l - start));
            }
            start += st.iterations;
        }
        None
    }

    /// Flat index of a weight at 1-based iteration `l`. `entity` is the proto
    /// VN for ChW, the proto edge for CW/UCW (proto CN for dynamic_proto,
    /// which the caller resolves).
    pub fn index(&self, l: usize, slot: Slot, entity: usize) -> usize {
        let (s, t) = self.locate(l).expect("iteration within weight set");
        let mode = self.stages[s].mode;
        let d = &self.dims;
        let base = self.offsets[s]
            + match mode {
                SharingMode::Temporal => 0,
                _ => t * mode.block(d),
            };
        base + match (mode, slot) {
            (SharingMode::Full | SharingMode::Temporal, Slot::Chw) => entity,
            (SharingMode::Full | SharingMode::Temporal, _) => d.vns + entity,
            (SharingMode::Spatial, Slot::Chw) => 0,
            (SharingMode::Spatial, _) => 1,
            (SharingMode::Dynamic, Slot::Chw) => 0,
            (SharingMode::Dynamic, Slot::Cw) => 1,
            (SharingMode::Dynamic, Slot::Ucw) => 2,
            (SharingMode::DynamicProto, Slot::Chw) => entity,
            (SharingMode::DynamicProto, Slot::Cw) => d.vns + entity,
            (SharingMode::DynamicProto, Slot::Ucw) => d.vns + d.cns + entity,
        }
    }

    /// Parameter indices used by iterations in `lo..=hi`.
    pub fn params_of_iterations(&self, lo: usize, hi: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut seen_temporal = vec![false; self.stages.len()];
        for l in lo..=hi {
            let Some((s, t)) = self.locate(l) else { continue };
            let mode = self.stages[s].mode;
            let block = mode.block(&self.dims);
            if mode == SharingMode::Temporal {
                if !seen_temporal[s] {
                    seen_temporal[s] = true;
                    out.extend(self.stage_range(s));
                }
            } else {
                let b = self.offsets[s] + t * block;
                out.extend(b..b + block);
            }
        }
        out
    }

    /// Boolean mask of parameters belonging to trainable stages.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        for (s, st) in self.stages.iter().enumerate() {
            if st.trainable {
                mask[self.stage_range(s)].fill(true);
            }
        }
        mask
    }

    /// SHA-256 over layout and parameter bits of stage `s`.
    pub fn stage_hash(&self, s: usize) -> String {
        let mut h = Sha256::new();
        let st = &self.stages[s];
        h.update(format!("{:?}:{}", st.mode, st.iterations).as_bytes());
        for p in &self.params[self.stage_range(s)] {
            h.update(p.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// SHA-256 over every stage.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for s in 0..self.stages.len() {
            h.update(self.stage_hash(s).as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Appends a stage initialised to ones.
    pub fn push_stage(&mut self, stage: Stage) {
        let count = stage.mode.param_count(&self.dims, stage.iterations);
        self.params.extend(std::iter::repeat_n(1.0, count));
        self.offsets.push(self.params.len());
        self.stages.push(stage);
    }

    /// Keeps only the first `ℓ` iterations' worth of stages; a stage that
    /// straddles the cut is shortened.
    pub fn truncated(&self, iterations: usize) -> Self {
        let mut stages = Vec::new();
        let mut left = iterations;
        for st in &self.stages {
            if left == 0 {
                break;
            }
            let take = st.iterations.min(left);
            stages.push(Stage {
                iterations: take,
                ..st.clone()
            });
            left -= take;
        }
        let mut out = Self::ones(self.code_id.clone(), self.dims, stages);
        out.quantizer = self.quantizer;
        for s in 0..out.stages.len() {
            let src = self.stage_range(s).start;
            let r = out.stage_range(s);
            let len = r.len();
            out.params[r].copy_from_slice(&self.params[src..src + len]);
        }
        out
    }

    /// Validates against a graph's protograph dimensions.
    pub fn check_graph(&self, g: &TannerGraph) -> Result<()> {
        let d = ProtoDims::of(g);
        if d != self.dims {
            return Err(Error::Config(format!(
                "weight set laid out for (N={}, M={}, E={}), code has (N={}, M={}, E={})",
                self.dims.vns, self.dims.cns, self.dims.edges, d.vns, d.cns, d.edges
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&WeightFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<WeightFile>(text)?.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Per-iteration lookup tables resolving every weight to a parameter index.
#[derive(Debug, Clone)]
pub struct WeightLayout {
    iters: Vec<IterLayout>,
}

#[derive(Debug, Clone)]
pub struct IterLayout {
    /// Single ChW/CW/UCW for the whole graph this iteration.
    pub scalar: bool,
    /// Parameter index of the ChW per proto VN.
    pub chw: Vec<u32>,
    /// Parameter index of the CW per proto edge.
    pub cw: Vec<u32>,
    /// Parameter index of the UCW per proto edge (equal to `cw` for
    /// non-dynamic modes).
    pub ucw: Vec<u32>,
}

impl WeightLayout {
    pub fn new(ws: &WeightSet, g: &TannerGraph) -> Result<Self> {
        ws.check_graph(g)?;
        let d = ws.dims;
        let proto = g.proto();
        // proto edge -> proto CN, from any lifted representative
        let mut edge_cn = vec![0u32; d.edges];
        for e in 0..g.num_edges() {
            edge_cn[proto.edge[e] as usize] = proto.cn[g.edge_cn(e)];
        }
        let mut iters = Vec::with_capacity(ws.total_iterations());
        for l in 1..=ws.total_iterations() {
            let (s, _) = ws.locate(l).unwrap();
            let mode = ws.stages[s].mode;
            let chw = (0..d.vns).map(|v| ws.index(l, Slot::Chw, v) as u32).collect();
            let entity = |pe: usize| match mode {
                SharingMode::DynamicProto => edge_cn[pe] as usize,
                _ => pe,
            };
            let cw = (0..d.edges)
                .map(|pe| ws.index(l, Slot::Cw, entity(pe)) as u32)
                .collect();
            let ucw = if mode.is_dynamic() {
                (0..d.edges)
                    .map(|pe| ws.index(l, Slot::Ucw, entity(pe)) as u32)
                    .collect()
            } else {
                (0..d.edges)
                    .map(|pe| ws.index(l, Slot::Cw, entity(pe)) as u32)
                    .collect()
            };
            iters.push(IterLayout {
                scalar: matches!(mode, SharingMode::Spatial | SharingMode::Dynamic),
                chw,
                cw,
                ucw,
            });
        }
        Ok(Self { iters })
    }

    /// Layout of 1-based iteration `l`.
    #[inline]
    pub fn iter(&self, l: usize) -> &IterLayout {
        &self.iters[l - 1]
    }

    pub fn iterations(&self) -> usize {
        self.iters.len()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightFile {
    code_id: String,
    sharing_mode: SharingMode,
    l1: usize,
    #[serde(default)]
    l2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l2b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quantizer: Option<Quantizer>,
    proto_dims: ProtoDims,
    stages: Vec<StageFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StageFile {
    sharing_mode: SharingMode,
    iterations: usize,
    trainable: bool,
    /// Keyed by 1-based iteration, or `"shared"` for temporal sharing.
    parameters: BTreeMap<String, IterParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IterParams {
    chw: Vec<f64>,
    cw: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ucw: Vec<f64>,
}

fn split_block(mode: SharingMode, d: &ProtoDims, block: &[f64]) -> IterParams {
    let (nc, nw) = match mode {
        SharingMode::Full | SharingMode::Temporal => (d.vns, d.edges),
        SharingMode::Spatial | SharingMode::Dynamic => (1, 1),
        SharingMode::DynamicProto => (d.vns, d.cns),
    };
    IterParams {
        chw: block[..nc].to_vec(),
        cw: block[nc..nc + nw].to_vec(),
        ucw: block[nc + nw..].to_vec(),
    }
}

impl From<&WeightSet> for WeightFile {
    fn from(ws: &WeightSet) -> Self {
        let mut start = 1;
        let stages = ws
            .stages
            .iter()
            .enumerate()
            .map(|(s, st)| {
                let r = ws.stage_range(s);
                let p = &ws.params[r];
                let mut parameters = BTreeMap::new();
                if st.mode == SharingMode::Temporal {
                    if !p.is_empty() {
                        parameters.insert("shared".to_string(), split_block(st.mode, &ws.dims, p));
                    }
                } else {
                    let b = st.mode.block(&ws.dims);
                    for t in 0..st.iterations {
                        parameters.insert(
                            format!("{:04}", start + t),
                            split_block(st.mode, &ws.dims, &p[t * b..(t + 1) * b]),
                        );
                    }
                }
                start += st.iterations;
                StageFile {
                    sharing_mode: st.mode,
                    iterations: st.iterations,
                    trainable: st.trainable,
                    parameters,
                }
            })
            .collect();
        let len = |i: usize| ws.stages.get(i).map_or(0, |s| s.iterations);
        WeightFile {
            code_id: ws.code_id.clone(),
            sharing_mode: ws.stages.last().map_or(SharingMode::Spatial, |s| s.mode),
            l1: len(0),
            l2: len(1),
            l2b: ws.stages.get(2).map(|s| s.iterations),
            quantizer: ws.quantizer,
            proto_dims: ws.dims,
            stages,
        }
    }
}

impl TryFrom<WeightFile> for WeightSet {
    type Error = Error;

    fn try_from(f: WeightFile) -> Result<Self> {
        let stages: Vec<Stage> = f
            .stages
            .iter()
            .map(|s| Stage {
                mode: s.sharing_mode,
                iterations: s.iterations,
                trainable: s.trainable,
            })
            .collect();
        let lens = [f.l1, f.l2, f.l2b.unwrap_or(0)];
        for (i, st) in stages.iter().enumerate().take(3) {
            if st.iterations != lens[i] {
                return Err(Error::Config(format!(
                    "stage {i} has {} iterations but header says {}",
                    st.iterations, lens[i]
                )));
            }
        }
        let mut ws = WeightSet::ones(f.code_id, f.proto_dims, stages);
        ws.quantizer = f.quantizer;
        let mut start = 1;
        for (s, sf) in f.stages.into_iter().enumerate() {
            let mode = sf.sharing_mode;
            let b = mode.block(&ws.dims);
            let r = ws.stage_range(s);
            let expected_keys = if mode == SharingMode::Temporal {
                usize::from(sf.iterations > 0)
            } else {
                sf.iterations
            };
            if sf.parameters.len() != expected_keys {
                return Err(Error::Config(format!(
                    "stage {s}: {} parameter groups, expected {expected_keys}",
                    sf.parameters.len()
                )));
            }
            for (key, ip) in sf.parameters {
                let t = if mode == SharingMode::Temporal {
                    0
                } else {
                    let l: usize = key
                        .parse()
                        .map_err(|_| Error::Config(format!("bad iteration key `{key}`")))?;
                    if l < start || l >= start + sf.iterations {
                        return Err(Error::Config(format!("iteration {l} outside stage {s}")));
                    }
                    l - start
                };
                let block: Vec<f64> = ip.chw.into_iter().chain(ip.cw).chain(ip.ucw).collect();
                if block.len() != b {
                    return Err(Error::Config(format!(
                        "stage {s} iteration group `{key}` holds {} values, expected {b}",
                        block.len()
                    )));
                }
                ws.params[r.start + t * b..r.start + (t + 1) * b].copy_from_slice(&block);
            }
            start += sf.iterations;
        }
        Ok(ws)
    }
}
