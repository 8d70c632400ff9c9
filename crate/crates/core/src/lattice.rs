//! Torus geometry: the graph `Z_n^d` with nearest-neighbour or spread-out
//! edges, mixed-radix vertex indexing and canonical undirected edge ids.
//!
//! Vertex `v` has coordinates `(c_0, .., c_{d-1})` with
//! `v = c_0 + c_1 n + c_2 n^2 + ...` (axis 0 varies fastest). Each undirected
//! edge is identified by its "lower" endpoint together with the rank of a
//! lexicographically positive offset, i.e. `edge = v * (m/2) + rank`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest volume accepted by [`TorusSpec::new`].
pub const DEFAULT_VOLUME_CAP: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeModel {
    /// Edges between vertices at l1 distance exactly 1.
    NearestNeighbor,
    /// Edges between distinct vertices at l-infinity distance at most `L`.
    SpreadOut(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    LInf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusSpec {
    d: usize,
    n: usize,
    model: EdgeModel,
    volume: u64,
    degree: usize,
    strides: Vec<usize>,
    /// Half-space offsets, `degree / 2` rows of length `d`.
    offsets: Vec<Vec<i64>>,
}

impl TorusSpec {
    pub fn new(d: usize, n: usize, model: EdgeModel) -> Result<Self> {
        Self::with_volume_cap(d, n, model, DEFAULT_VOLUME_CAP)
    }

    pub fn nearest_neighbor(d: usize, n: usize) -> Result<Self> {
        Self::new(d, n, EdgeModel::NearestNeighbor)
    }

    pub fn with_volume_cap(d: usize, n: usize, model: EdgeModel, cap: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if n < 2 {
            return Err(Error::InvalidSpec(format!("side length {n} must be at least 2")));
        }
        let reach = match model {
            EdgeModel::NearestNeighbor => 1,
            EdgeModel::SpreadOut(0) => {
                return Err(Error::InvalidSpec("spread-out range L must be positive".into()))
            }
            EdgeModel::SpreadOut(l) => l as usize,
        };
        // +o and -o must be different vertices, otherwise the neighbour list
        // has duplicates and m is no longer the degree.
        if 2 * reach + 1 > n {
            return Err(Error::InvalidSpec(format!(
                "2L+1 = {} exceeds side length {n}",
                2 * reach + 1
            )));
        }
        let mut volume: u64 = 1;
        let mut strides = Vec::with_capacity(d);
        for _ in 0..d {
            strides.push(volume as usize);
            volume = volume
                .checked_mul(n as u64)
                .filter(|&v| v <= cap)
                .ok_or(Error::Resource { what: "torus volume", requested: (n as u128).saturating_pow(d as u32), cap: cap as u128 })?;
        }
        let offsets = half_space_offsets(d, model);
        let degree = 2 * offsets.len();
        Ok(Self { d, n, model, volume, degree, strides, offsets })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn model(&self) -> EdgeModel {
        self.model
    }

    /// `V = n^d`.
    pub fn volume(&self) -> u64 {
        self.volume
    }

    /// Degree `m`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_edges(&self) -> u64 {
        self.volume * (self.degree as u64 / 2)
    }

    /// Number of half-space offsets, `m / 2`.
    pub fn half_degree(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    /// Norm used for distance summaries: l1 for nearest-neighbour, l-infinity
    /// for spread-out.
    pub fn natural_norm(&self) -> Norm {
        match self.model {
            EdgeModel::NearestNeighbor => Norm::L1,
            EdgeModel::SpreadOut(_) => Norm::LInf,
        }
    }

    pub fn coords(&self, v: VertexId) -> Vec<usize> {
        let mut rest = v.0;
        (0..self.d)
            .map(|_| {
                let c = rest % self.n;
                rest /= self.n;
                c
            })
            .collect()
    }

    pub fn vertex(&self, coords: &[usize]) -> VertexId {
        debug_assert_eq!(coords.len(), self.d);
        VertexId(coords.iter().zip(&self.strides).map(|(&c, &s)| (c % self.n) * s).sum())
    }

    /// Vertex reached from `v` by the integer displacement `offset`.
    pub fn translate(&self, v: usize, offset: &[i64]) -> usize {
        let n = self.n as i64;
        let mut out = v;
        for (axis, &o) in offset.iter().enumerate() {
            if o == 0 {
                continue;
            }
            let stride = self.strides[axis];
            let c = ((v / stride) % self.n) as i64;
            let moved = (c + o).rem_euclid(n);
            out = (out as i64 + (moved - c) * stride as i64) as usize;
        }
        out
    }

    #[inline]
    pub fn edge_id(&self, lower: usize, rank: usize) -> EdgeId {
        EdgeId(lower as u64 * self.offsets.len() as u64 + rank as u64)
    }

    #[inline]
    pub fn endpoints(&self, e: EdgeId) -> (VertexId, VertexId) {
        let half = self.offsets.len() as u64;
        let lower = (e.0 / half) as usize;
        let rank = (e.0 % half) as usize;
        (VertexId(lower), VertexId(self.translate(lower, &self.offsets[rank])))
    }

    /// The `m` neighbours of `v`: forward offsets in rank order, then the
    /// reversed ones.
    pub fn neighbors(&self, v: VertexId) -> Vec<VertexId> {
        let mut out = Vec::with_capacity(self.degree);
        out.extend(self.offsets.iter().map(|o| VertexId(self.translate(v.0, o))));
        let mut neg = vec![0i64; self.d];
        for o in &self.offsets {
            for (dst, &x) in neg.iter_mut().zip(o) {
                *dst = -x;
            }
            out.push(VertexId(self.translate(v.0, &neg)));
        }
        out
    }

    /// All `m` edges touching `v`, paired with the opposite endpoint.
    pub fn incident_edges(&self, v: VertexId) -> Vec<(EdgeId, VertexId)> {
        let mut out = Vec::with_capacity(self.degree);
        self.for_each_incident(v.0, |e, u| out.push((EdgeId(e), VertexId(u))));
        out
    }

    /// Allocation-free variant of [`incident_edges`](Self::incident_edges)
    /// for exploration loops.
    pub fn for_each_incident(&self, v: usize, mut f: impl FnMut(u64, usize)) {
        let half = self.offsets.len();
        let mut neg = vec![0i64; self.d];
        for (rank, o) in self.offsets.iter().enumerate() {
            let fwd = self.translate(v, o);
            f(self.edge_id(v, rank).0, fwd);
            for (dst, &x) in neg.iter_mut().zip(o) {
                *dst = -x;
            }
            let back = self.translate(v, &neg);
            f((back * half + rank) as u64, back);
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.num_edges()).map(EdgeId)
    }

    /// Wrap-around distance in the model's natural norm.
    pub fn torus_distance(&self, u: VertexId, v: VertexId) -> u64 {
        self.distance(u, v, self.natural_norm())
    }

    pub fn distance(&self, u: VertexId, v: VertexId, norm: Norm) -> u64 {
        let (mut a, mut b) = (u.0, v.0);
        let mut acc = 0u64;
        for _ in 0..self.d {
            let (ca, cb) = (a % self.n, b % self.n);
            a /= self.n;
            b /= self.n;
            let diff = ca.abs_diff(cb);
            let wrapped = diff.min(self.n - diff) as u64;
            acc = match norm {
                Norm::L1 => acc + wrapped,
                Norm::LInf => acc.max(wrapped),
            };
        }
        acc
    }
}

/// Offsets whose first nonzero coordinate (lowest axis) is positive, in
/// lexicographic order.
fn half_space_offsets(d: usize, model: EdgeModel) -> Vec<Vec<i64>> {
    match model {
        EdgeModel::NearestNeighbor => (0..d)
            .map(|axis| {
                let mut o = vec![0; d];
                o[axis] = 1;
                o
            })
            .collect(),
        EdgeModel::SpreadOut(l) => {
            let l = l as i64;
            let side = (2 * l + 1) as usize;
            let total = side.pow(d as u32);
            let mut out = Vec::with_capacity(total / 2);
            for idx in 0..total {
                let mut rest = idx;
                // Most significant digit is axis 0 so the scan is lexicographic.
                let mut o = vec![0i64; d];
                for axis in (0..d).rev() {
                    o[axis] = (rest % side) as i64 - l;
                    rest /= side;
                }
                if o.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0) {
                    out.push(o);
                }
            }
            out
        }
    }
}
