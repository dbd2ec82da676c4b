//! Protographs, lifted QC-LDPC Tanner graphs and the two text formats they are
//! read from.
//!
//! Edge indices are stable: for lifted graphs edge `e = entry * z + j`, where
//! `entry` walks the non-null base-matrix cells in row-major order and `j` is
//! the lift offset. Weight tensors are laid out against this indexing, so it
//! must not change between runs.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One non-null cell of a base matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtoEntry {
    pub cn: usize,
    pub vn: usize,
    pub shift: usize,
}

/// A base matrix of circulant shifts together with its lifting factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protograph {
    num_cns: usize,
    num_vns: usize,
    lifting: usize,
    entries: Vec<ProtoEntry>,
    punctured: Vec<usize>,
}

impl Protograph {
    /// Builds a protograph from row-major entries, checking shift range and
    /// duplicate cells.
    pub fn new(
        num_cns: usize,
        num_vns: usize,
        lifting: usize,
        mut entries: Vec<ProtoEntry>,
        punctured: Vec<usize>,
    ) -> Result<Self> {
        if lifting == 0 {
            return Err(Error::Parse {
                line: 1,
                msg: "lifting factor must be at least 1".into(),
            });
        }
        entries.sort_by_key(|e| (e.cn, e.vn));
        for (i, e) in entries.iter().enumerate() {
            if e.cn >= num_cns || e.vn >= num_vns {
                return Err(Error::Inconsistent(format!(
                    "entry ({}, {}) outside {}x{} grid",
                    e.cn, e.vn, num_cns, num_vns
                )));
            }
            if e.shift >= lifting {
                return Err(Error::ShiftOutOfRange {
                    row: e.cn,
                    col: e.vn,
                    shift: e.shift,
                    z: lifting,
                });
            }
            if i > 0 && entries[i - 1].cn == e.cn && entries[i - 1].vn == e.vn {
                return Err(Error::DuplicateCell { row: e.cn, col: e.vn });
            }
        }
        if let Some(&p) = punctured.iter().find(|&&p| p >= num_vns) {
            return Err(Error::Inconsistent(format!("punctured proto VN {p} out of range")));
        }
        Ok(Self {
            num_cns,
            num_vns,
            lifting,
            entries,
            punctured,
        })
    }

    /// Parses the base-matrix text format: a header `M N z`, an optional
    /// `punctured: v1 v2 ...` line naming proto VNs, then `M` rows of `N`
    /// tokens, each a shift or `-`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty base matrix".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| parse_usize(t, hline))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::Parse {
                line: hline,
                msg: format!("header must be `M N z`, got {} fields", dims.len()),
            });
        }
        let (m, n, z) = (dims[0], dims[1], dims[2]);

        let mut punctured = Vec::new();
        let mut entries = Vec::new();
        let mut row = 0;
        for (ln, line) in lines {
            if let Some(rest) = line.strip_prefix("punctured:") {
                if row > 0 {
                    return Err(Error::Parse {
                        line: ln,
                        msg: "punctured list must precede the grid".into(),
                    });
                }
                for t in rest.split_whitespace() {
                    punctured.push(parse_usize(t, ln)?);
                }
                continue;
            }
            if row >= m {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("more than {m} grid rows"),
                });
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != n {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("row {row} has {} columns, expected {n}", tokens.len()),
                });
            }
            for (col, tok) in tokens.into_iter().enumerate() {
                if tok == "-" {
                    continue;
                }
                let shift = parse_usize(tok, ln)?;
                if shift >= z {
                    return Err(Error::ShiftOutOfRange { row, col, shift, z });
                }
                entries.push(ProtoEntry {
                    cn: row,
                    vn: col,
                    shift,
                });
            }
            row += 1;
        }
        if row != m {
            return Err(Error::Parse {
                line: text.lines().count(),
                msg: format!("found {row} grid rows, expected {m}"),
            });
        }
        Self::new(m, n, z, entries, punctured)
    }

    pub fn num_cns(&self) -> usize {
        self.num_cns
    }

    pub fn num_vns(&self) -> usize {
        self.num_vns
    }

    pub fn num_edges(&self) -> usize {
        self.entries.len()
    }

    pub fn lifting(&self) -> usize {
        self.lifting
    }

    pub fn entries(&self) -> &[ProtoEntry] {
        &self.entries
    }

    pub fn punctured(&self) -> &[usize] {
        &self.punctured
    }

    /// Expands every entry into a `z x z` circulant: VN `v_p*z + j` is joined
    /// to CN `c_p*z + (j + s) mod z`.
    pub fn lift(&self) -> Result<TannerGraph> {
        let z = self.lifting;
        let mut edges = Vec::with_capacity(self.entries.len() * z);
        let mut proto_edge = Vec::with_capacity(self.entries.len() * z);
        for (k, e) in self.entries.iter().enumerate() {
            for j in 0..z {
                edges.push((e.vn * z + j, e.cn * z + (j + e.shift) % z));
                proto_edge.push(k as u32);
            }
        }
        let n = self.num_vns * z;
        let m = self.num_cns * z;
        let proto = ProtoMap {
            num_vns: self.num_vns,
            num_cns: self.num_cns,
            num_edges: self.entries.len(),
            vn: (0..n).map(|v| (v / z) as u32).collect(),
            cn: (0..m).map(|c| (c / z) as u32).collect(),
            edge: proto_edge,
        };
        let mut punctured = vec![false; n];
        for &p in &self.punctured {
            punctured[p * z..(p + 1) * z].fill(true);
        }
        TannerGraph::build(n, m, &edges, proto, punctured, Some(z))
    }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a non-negative integer, got `{tok}`"),
    })
}

/// Maps lifted VNs, CNs and edges back to their protograph entities. Graphs
/// read from alist files carry the identity map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtoMap {
    pub num_vns: usize,
    pub num_cns: usize,
    pub num_edges: usize,
    pub vn: Vec<u32>,
    pub cn: Vec<u32>,
    pub edge: Vec<u32>,
}

impl ProtoMap {
    fn identity(n: usize, m: usize, e: usize) -> Self {
        Self {
            num_vns: n,
            num_cns: m,
            num_edges: e,
            vn: (0..n as u32).collect(),
            cn: (0..m as u32).collect(),
            edge: (0..e as u32).collect(),
        }
    }
}

/// Bipartite VN/CN graph with CSR adjacency in both directions. Immutable
/// after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TannerGraph {
    n: usize,
    m: usize,
    edge_vn: Vec<u32>,
    edge_cn: Vec<u32>,
    vn_ptr: Vec<u32>,
    vn_adj: Vec<u32>,
    cn_ptr: Vec<u32>,
    cn_adj: Vec<u32>,
    proto: ProtoMap,
    lifting: Option<usize>,
    punctured: Vec<bool>,
    rate: f64,
}

impl TannerGraph {
    fn build(
        n: usize,
        m: usize,
        edges: &[(usize, usize)],
        proto: ProtoMap,
        punctured: Vec<bool>,
        lifting: Option<usize>,
    ) -> Result<Self> {
        let mut vn_deg = vec![0u32; n];
        let mut cn_deg = vec![0u32; m];
        for &(v, c) in edges {
            if v >= n || c >= m {
                return Err(Error::Inconsistent(format!("edge ({v}, {c}) out of range")));
            }
            vn_deg[v] += 1;
            cn_deg[c] += 1;
        }
        let csr = |deg: &[u32]| {
            let mut ptr = Vec::with_capacity(deg.len() + 1);
            ptr.push(0u32);
            for d in deg {
                ptr.push(ptr.last().unwrap() + d);
            }
            ptr
        };
        let vn_ptr = csr(&vn_deg);
        let cn_ptr = csr(&cn_deg);
        let mut vn_fill = vn_ptr.clone();
        let mut cn_fill = cn_ptr.clone();
        let mut vn_adj = vec![0u32; edges.len()];
        let mut cn_adj = vec![0u32; edges.len()];
        // edges are visited in index order, so every adjacency list is ascending
        for (e, &(v, c)) in edges.iter().enumerate() {
            vn_adj[vn_fill[v] as usize] = e as u32;
            vn_fill[v] += 1;
            cn_adj[cn_fill[c] as usize] = e as u32;
            cn_fill[c] += 1;
        }
        for c in 0..m {
            let adj = &cn_adj[cn_ptr[c] as usize..cn_ptr[c + 1] as usize];
            for w in adj.windows(2) {
                if edges[w[0] as usize].0 == edges[w[1] as usize].0 {
                    return Err(Error::Inconsistent(format!(
                        "parallel edges between VN {} and CN {c}",
                        edges[w[0] as usize].0
                    )));
                }
            }
        }
        let rate = (n - m.min(n)) as f64 / n as f64;
        Ok(Self {
            n,
            m,
            edge_vn: edges.iter().map(|&(v, _)| v as u32).collect(),
            edge_cn: edges.iter().map(|&(_, c)| c as u32).collect(),
            vn_ptr,
            vn_adj,
            cn_ptr,
            cn_adj,
            proto,
            lifting,
            punctured,
            rate,
        })
    }

    /// Builds a graph from an explicit edge list; edges keep their order.
    pub fn from_edges(n: usize, m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let proto = ProtoMap::identity(n, m, edges.len());
        Self::build(n, m, edges, proto, vec![false; n], None)
    }

    /// Builds a graph from a dense parity-check matrix given row by row.
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut edges = Vec::new();
        for (c, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    what: "dense row length",
                    expected: n,
                    got: row.len(),
                });
            }
            edges.extend(row.iter().enumerate().filter(|(_, &b)| b != 0).map(|(v, _)| (v, c)));
        }
        Self::from_edges(n, m, &edges)
    }

    /// Parses the conventional alist format (1-indexed, zero padding
    /// tolerated). Edges are numbered CN-major in the order of the CN lists.
    pub fn parse_alist(text: &str) -> Result<Self> {
        let lines: Vec<(usize, Vec<usize>)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.split_whitespace()
                    .map(|t| parse_usize(t, i + 1))
                    .collect::<Result<Vec<_>>>()
                    .map(|v| (i + 1, v))
            })
            .collect::<Result<_>>()?;
        let get = |idx: usize| {
            lines.get(idx).ok_or(Error::Parse {
                line: lines.last().map_or(1, |l| l.0),
                msg: "truncated alist".into(),
            })
        };
        let (l0, dims) = get(0)?;
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: *l0,
                msg: "first line must be `n m`".into(),
            });
        }
        let (n, m) = (dims[0], dims[1]);
        let (l2, col_deg) = get(2)?;
        let (l3, row_deg) = get(3)?;
        if col_deg.len() != n {
            return Err(Error::Parse {
                line: *l2,
                msg: format!("{} column degrees for n={n}", col_deg.len()),
            });
        }
        if row_deg.len() != m {
            return Err(Error::Parse {
                line: *l3,
                msg: format!("{} row degrees for m={m}", row_deg.len()),
            });
        }
        let read_lists = |start: usize, count: usize, degs: &[usize], bound: usize| {
            let mut out = Vec::with_capacity(count);
            for i in 0..count {
                let (ln, raw) = get(start + i)?;
                let list: Vec<usize> = raw.iter().copied().filter(|&x| x != 0).collect();
                if list.len() != degs[i] {
                    return Err(Error::Inconsistent(format!(
                        "line {ln}: list {i} has {} entries, degree says {}",
                        list.len(),
                        degs[i]
                    )));
                }
                if let Some(&bad) = list.iter().find(|&&x| x > bound) {
                    return Err(Error::Parse {
                        line: *ln,
                        msg: format!("index {bad} out of range 1..={bound}"),
                    });
                }
                out.push(list.into_iter().map(|x| x - 1).collect::<Vec<_>>());
            }
            Ok::<_, Error>(out)
        };
        let vn_lists = read_lists(4, n, col_deg, m)?;
        let cn_lists = read_lists(4 + n, m, row_deg, n)?;

        let mut from_vn: Vec<(usize, usize)> = vn_lists
            .iter()
            .enumerate()
            .flat_map(|(v, l)| l.iter().map(move |&c| (c, v)))
            .collect();
        let mut from_cn: Vec<(usize, usize)> = cn_lists
            .iter()
            .enumerate()
            .flat_map(|(c, l)| l.iter().map(move |&v| (c, v)))
            .collect();
        from_vn.sort_unstable();
        from_cn.sort_unstable();
        if from_vn != from_cn {
            let missing = from_vn
                .iter()
                .find(|p| from_cn.binary_search(p).is_err())
                .or_else(|| from_cn.iter().find(|p| from_vn.binary_search(p).is_err()));
            return Err(Error::Inconsistent(match missing {
                Some((c, v)) => format!("VN {} / CN {} listed on one side only", v + 1, c + 1),
                None => "VN and CN lists disagree".into(),
            }));
        }
        let edges: Vec<(usize, usize)> = cn_lists
            .iter()
            .enumerate()
            .flat_map(|(c, l)| l.iter().map(move |&v| (v, c)))
            .collect();
        Self::from_edges(n, m, &edges)
    }

    /// Renders the graph as alist text (CN lists in edge order).
    pub fn to_alist(&self) -> String {
        let mut s = String::new();
        let vdeg: Vec<usize> = (0..self.n).map(|v| self.vn_edges(v).len()).collect();
        let cdeg: Vec<usize> = (0..self.m).map(|c| self.cn_edges(c).len()).collect();
        let join = |xs: &mut dyn Iterator<Item = usize>| xs.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{} {}", self.n, self.m);
        let _ = writeln!(
            s,
            "{} {}",
            vdeg.iter().max().unwrap_or(&0),
            cdeg.iter().max().unwrap_or(&0)
        );
        let _ = writeln!(s, "{}", join(&mut vdeg.iter().copied()));
        let _ = writeln!(s, "{}", join(&mut cdeg.iter().copied()));
        for v in 0..self.n {
            let mut it = self.vn_edges(v).iter().map(|&e| self.edge_cn(e as usize) + 1);
            let _ = writeln!(s, "{}", join(&mut it));
        }
        for c in 0..self.m {
            let mut it = self.cn_edges(c).iter().map(|&e| self.edge_vn(e as usize) + 1);
            let _ = writeln!(s, "{}", join(&mut it));
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_edges(&self) -> usize {
        self.edge_vn.len()
    }

    pub fn lifting(&self) -> Option<usize> {
        self.lifting
    }

    /// Edge indices incident to VN `v`, ascending.
    #[inline]
    pub fn vn_edges(&self, v: usize) -> &[u32] {
        &self.vn_adj[self.vn_ptr[v] as usize..self.vn_ptr[v + 1] as usize]
    }

    /// Edge indices incident to CN `c`, ascending.
    #[inline]
    pub fn cn_edges(&self, c: usize) -> &[u32] {
        &self.cn_adj[self.cn_ptr[c] as usize..self.cn_ptr[c + 1] as usize]
    }

    #[inline]
    pub fn edge_vn(&self, e: usize) -> usize {
        self.edge_vn[e] as usize
    }

    #[inline]
    pub fn edge_cn(&self, e: usize) -> usize {
        self.edge_cn[e] as usize
    }

    /// `(vn, cn)` pairs in edge-index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edge_vn
            .iter()
            .zip(&self.edge_cn)
            .map(|(&v, &c)| (v as usize, c as usize))
    }

    pub fn proto(&self) -> &ProtoMap {
        &self.proto
    }

    pub fn punctured(&self) -> &[bool] {
        &self.punctured
    }

    /// Design rate `(n - m) / n` unless overridden.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Overrides the code rate, e.g. for codes with punctured VNs.
    pub fn with_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::Config(format!("code rate {rate} outside (0, 1]")));
        }
        self.rate = rate;
        Ok(self)
    }

    /// Min-sum needs an excluded minimum at every CN, so decoders refuse
    /// graphs with a CN of degree below 2.
    pub fn check_decodable(&self) -> Result<()> {
        match (0..self.m).find(|&c| self.cn_edges(c).len() < 2) {
            Some(cn) => Err(Error::DegreeTooSmall {
                cn,
                degree: self.cn_edges(cn).len(),
            }),
            None => Ok(()),
        }
    }

    /// Per-CN parity of `hard`.
    pub fn syndrome(&self, hard: &[u8]) -> Result<SyndromeVector> {
        if hard.len() != self.n {
            return Err(Error::Dimension {
                what: "hard decision length",
                expected: self.n,
                got: hard.len(),
            });
        }
        let bits = (0..self.m)
            .map(|c| {
                self.cn_edges(c)
                    .iter()
                    .fold(0u8, |acc, &e| acc ^ (hard[self.edge_vn(e as usize)] & 1))
            })
            .collect();
        Ok(SyndromeVector { bits })
    }

    /// True when every parity check is satisfied. Panics on length mismatch.
    pub fn is_codeword(&self, hard: &[u8]) -> bool {
        debug_assert_eq!(hard.len(), self.n);
        (0..self.m).all(|c| {
            self.cn_edges(c)
                .iter()
                .fold(0u8, |acc, &e| acc ^ hard[self.edge_vn[e as usize] as usize])
                == 0
        })
    }
}

/// Length-`m` parity vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyndromeVector {
    pub bits: Vec<u8>,
}

impl SyndromeVector {
    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }
}
