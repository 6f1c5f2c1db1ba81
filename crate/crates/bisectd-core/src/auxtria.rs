//! The strongly graded auxiliary triangulation around a vertex, its layer
//! decomposition, pre-diamonds, the sharp level chain, and the edge-chain
//! scanners for neighborhoods.
//!
//! The neighborhood `Ω_m(v)` is the open part of the uniform generation `md`
//! vertex patch `ω_m(v)`. Membership is decided combinatorially: the hat
//! function of `v` on the generation `md` mesh is linear on every simplex of
//! that mesh, so a vertex created later lies in `Ω_m(v)` iff one of the two
//! endpoints of the edge it halves does.

use std::collections::VecDeque;

use fixedbitset::FixedBitSet;
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SeedConstants;
use crate::arith::{barycentric, level_of, type_of};
use crate::exec::ExecPolicy;
use crate::forest::{Forest, ForestError, MeshIndex, NodeId, Triangulation, VertexId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuxError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("vertex {0} does not exist")]
    UnknownVertex(u32),
    #[error("need level(v) < m, got level {level} and m = {m}")]
    LevelTooHigh { level: i64, m: i64 },
    #[error("round {round}: leaf {leaf} has hanging vertex {vertex}; boundary refinement needed a closure")]
    ClosureNeeded { round: usize, leaf: u32, vertex: u32 },
    #[error("leaf {leaf}: construction layer {eager} but distance layer {bfs}")]
    LayerMismatch { leaf: u32, eager: u32, bfs: u32 },
    #[error("a chain of length {n} needs depth j >= {required}, got {j}")]
    DepthTooSmall { n: usize, j: usize, required: usize },
    #[error("no chain of length {0} found")]
    NoChain(usize),
}

/// `Ω_m(v)` membership for every forest vertex.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    v: VertexId,
    m: i64,
    md: i64,
    inside: FixedBitSet,
    known: usize,
}

impl Neighborhood {
    pub fn new(forest: &Forest, v: VertexId, m: i64) -> Result<Self, AuxError> {
        if v.idx() >= forest.num_vertices() {
            return Err(AuxError::UnknownVertex(v.0));
        }
        let level = forest.vertex_level(v);
        if level >= m || m < 0 {
            return Err(AuxError::LevelTooHigh { level, m });
        }
        let mut nb = Neighborhood {
            v,
            m,
            md: m * forest.dim() as i64,
            inside: FixedBitSet::new(),
            known: 0,
        };
        nb.refresh(forest);
        Ok(nb)
    }

    pub fn vertex(&self) -> VertexId {
        self.v
    }

    pub fn m(&self) -> i64 {
        self.m
    }

    /// Extends membership to vertices appended to the forest since the last call.
    pub fn refresh(&mut self, forest: &Forest) {
        let n = forest.num_vertices();
        self.inside.grow(n);
        for u in self.known..n {
            let uv = VertexId(u as u32);
            let inside = if forest.vertex_gen(uv) <= self.md {
                uv == self.v
            } else {
                let [a, b] = forest.vertex_origin(uv).expect("young vertex has an origin");
                self.inside.contains(a.idx()) || self.inside.contains(b.idx())
            };
            self.inside.set(u, inside);
        }
        self.known = n;
    }

    /// `u ∈ Ω_m(v)` (open neighborhood).
    pub fn contains(&self, u: VertexId) -> bool {
        self.inside.contains(u.idx())
    }

    /// A node below generation `md` inside `ω_m(v)` has a vertex in `Ω_m(v)`.
    pub fn is_inside(&self, forest: &Forest, n: NodeId) -> bool {
        forest.simplex(n).iter().any(|&u| self.contains(u))
    }

    /// Inside node with a vertex on `∂ω_m(v)`.
    pub fn touches_boundary(&self, forest: &Forest, n: NodeId) -> bool {
        let s = forest.simplex(n);
        s.iter().any(|&u| self.contains(u)) && s.iter().any(|&u| !self.contains(u))
    }

    /// Whether `n` belongs to `forest(T_m^∞(v))`.
    pub fn limit_contains(&self, forest: &Forest, n: NodeId) -> bool {
        if forest.generation(n) <= self.md || !self.is_inside(forest, n) {
            return true;
        }
        let mut a = n;
        while let Some(p) = forest.parent(a) {
            if forest.generation(p) < self.md {
                break;
            }
            if !self.touches_boundary(forest, p) {
                return false;
            }
            a = p;
        }
        true
    }
}

/// Exact check of a point against the patch simplices: `None` outside the
/// closed patch, `Some(true)` on `∂ω`, `Some(false)` in `Ω`.
pub fn locate_exact(forest: &Forest, omega: &[NodeId], v: VertexId, u: VertexId) -> Option<bool> {
    let p = forest.point(u);
    let mut found = None;
    for &t in omega {
        let Ok(b) = barycentric(&forest.simplex_points(t), p) else {
            continue;
        };
        if b.iter().any(Signed::is_negative) {
            continue;
        }
        let k = forest.simplex(t).iter().position(|&w| w == v).expect("patch simplex contains v");
        let on_bd = b[k].is_zero();
        found = Some(found.unwrap_or(false) || !on_bd);
    }
    found.map(|in_open| !in_open)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LeafLayer {
    /// Leaf of `λ^ℓ`.
    Layer(u32),
    /// Inside leaf still touching `∂ω`.
    Boundary,
    /// Leaf outside the patch.
    Outside,
}

impl LeafLayer {
    /// Integer code used for export: layer index, `-1` boundary, `-2` outside.
    pub fn code(self) -> i64 {
        match self {
            LeafLayer::Layer(l) => l as i64,
            LeafLayer::Boundary => -1,
            LeafLayer::Outside => -2,
        }
    }
}

/// `T_m^j(v)` together with the eagerly recorded layer of each leaf.
#[derive(Debug, Clone)]
pub struct AuxTriangulation {
    pub v: VertexId,
    pub m: i64,
    pub j: usize,
    /// The uniform patch `ω_m(v)`.
    pub omega: Vec<NodeId>,
    pub tria: Triangulation,
    pub neighborhood: Neighborhood,
    layers: FxHashMap<NodeId, LeafLayer>,
}

impl AuxTriangulation {
    pub fn layer(&self, n: NodeId) -> Option<LeafLayer> {
        self.layers.get(&n).copied()
    }

    /// Leaf layers in leaf id order.
    pub fn leaf_layers(&self) -> Vec<(NodeId, LeafLayer)> {
        self.tria.leaves().map(|n| (n, self.layers[&n])).collect()
    }

    /// Number of layers that are complete at this depth.
    pub fn complete_layers(&self, d: usize) -> u32 {
        (self.j / d) as u32
    }
}

fn classify(forest: &Forest, nb: &Neighborhood, n: NodeId, md: i64) -> LeafLayer {
    let s = forest.simplex(n);
    let inner = s.iter().filter(|&&u| nb.contains(u)).count();
    if inner == 0 {
        LeafLayer::Outside
    } else if inner < s.len() {
        LeafLayer::Boundary
    } else {
        let d = forest.dim() as i64;
        let round = forest.generation(n) - md;
        LeafLayer::Layer(((round + d - 1) / d) as u32)
    }
}

/// Builds `T_m^j(v)` in `forest`: uniform refinement to generation `md`, then
/// `j` rounds splitting every leaf that touches `∂ω_m(v)` or lies outside the
/// patch. Fails if any round leaves a hanging vertex.
pub fn build_aux(forest: &mut Forest, v: VertexId, m: i64, j: usize) -> Result<AuxTriangulation, AuxError> {
    let mut nb = Neighborhood::new(forest, v, m)?;
    let d = forest.dim();
    let md = m * d as i64;
    let mut leaves: Vec<NodeId> = forest.roots().to_vec();
    for _ in 0..md {
        let mut next = Vec::with_capacity(2 * leaves.len());
        for n in leaves {
            next.extend(forest.bisect(n)?);
        }
        leaves = next;
    }
    nb.refresh(forest);
    let omega: Vec<NodeId> = leaves.iter().copied().filter(|&n| forest.simplex(n).contains(&v)).collect();
    let mut used = FixedBitSet::with_capacity(forest.num_vertices());
    for &n in &leaves {
        for &u in forest.simplex(n) {
            used.insert(u.idx());
        }
    }
    for round in 1..=j {
        let mut next = Vec::with_capacity(leaves.len() * 2);
        for n in leaves {
            if forest.simplex(n).iter().all(|&u| nb.contains(u)) {
                next.push(n);
            } else {
                next.extend(forest.bisect(n)?);
            }
        }
        leaves = next;
        nb.refresh(forest);
        used.grow(forest.num_vertices());
        for &n in &leaves {
            for &u in forest.simplex(n) {
                used.insert(u.idx());
            }
        }
        for &n in &leaves {
            let s = forest.simplex(n);
            for a in 0..=d {
                for b in a + 1..=d {
                    if let Some(mid) = forest.midpoint_of(s[a], s[b]) {
                        if used.contains(mid.idx()) {
                            return Err(AuxError::ClosureNeeded {
                                round,
                                leaf: n.0,
                                vertex: mid.0,
                            });
                        }
                    }
                }
            }
        }
    }
    let layers = leaves.iter().map(|&n| (n, classify(forest, &nb, n, md))).collect();
    let tria = Triangulation::from_leaves(forest, leaves);
    Ok(AuxTriangulation {
        v,
        m,
        j,
        omega,
        tria,
        neighborhood: nb,
        layers,
    })
}

/// Layers from distances: `λ^ℓ` are the settled leaves at distance `ℓ − 1`
/// from the leaves containing `v`, measured through settled leaves only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDecomposition {
    pub layers: Vec<(NodeId, LeafLayer)>,
    pub num_layers: u32,
}

fn restricted_bfs(forest: &Forest, idx: &MeshIndex, sources: &[usize], allowed: &FixedBitSet) -> Vec<u32> {
    let mut dist = vec![u32::MAX; idx.len()];
    let mut seen = FixedBitSet::with_capacity(idx.num_vertices());
    let mut q = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        q.push_back(s);
    }
    while let Some(i) = q.pop_front() {
        for &u in forest.simplex(idx.leaves[i]) {
            if seen.put(u.idx()) {
                continue;
            }
            for &k in idx.vertex_leaves(u) {
                let k = k as usize;
                if allowed.contains(k) && dist[k] == u32::MAX {
                    dist[k] = dist[i] + 1;
                    q.push_back(k);
                }
            }
        }
    }
    dist
}

/// Recomputes layers by BFS and checks them against the construction record.
pub fn decompose_layers(forest: &Forest, aux: &AuxTriangulation) -> Result<LayerDecomposition, AuxError> {
    let idx = MeshIndex::new(forest, &aux.tria)?;
    let mut settled = FixedBitSet::with_capacity(idx.len());
    for (i, &n) in idx.leaves.iter().enumerate() {
        if matches!(aux.layers[&n], LeafLayer::Layer(_)) {
            settled.insert(i);
        }
    }
    let sources: Vec<usize> = idx
        .vertex_leaves(aux.v)
        .iter()
        .map(|&i| i as usize)
        .filter(|&i| settled.contains(i))
        .collect();
    let dist = restricted_bfs(forest, &idx, &sources, &settled);
    let mut layers = Vec::with_capacity(idx.len());
    let mut num_layers = 0;
    for (i, &n) in idx.leaves.iter().enumerate() {
        let eager = aux.layers[&n];
        if let LeafLayer::Layer(l) = eager {
            let bfs = dist[i].saturating_add(1);
            if bfs != l {
                return Err(AuxError::LayerMismatch {
                    leaf: n.0,
                    eager: l,
                    bfs,
                });
            }
            num_layers = num_layers.max(l);
        }
        layers.push((n, eager));
    }
    Ok(LayerDecomposition { layers, num_layers })
}

/// Structural checks on a decomposed aux triangulation; returns descriptions
/// of every violation.
pub fn layer_violations(forest: &Forest, aux: &AuxTriangulation, dec: &LayerDecomposition) -> Vec<String> {
    let d = forest.dim();
    let md = aux.m * d as i64;
    let complete = aux.complete_layers(d);
    let mut out = Vec::new();
    // vertex -> (min, max) layer of the settled leaves containing it; v is in layer 0
    let mut span: FxHashMap<VertexId, (u32, u32)> = FxHashMap::default();
    span.insert(aux.v, (0, 0));
    for &(n, l) in &dec.layers {
        match l {
            LeafLayer::Layer(l) => {
                if forest.level(n) != aux.m + l as i64 {
                    out.push(format!("leaf {} in layer {l} has level {}", n.0, forest.level(n)));
                }
                for &u in forest.simplex(n) {
                    let e = span.entry(u).or_insert((l, l));
                    e.0 = e.0.min(l);
                    e.1 = e.1.max(l);
                }
            }
            LeafLayer::Boundary | LeafLayer::Outside => {
                if forest.generation(n) != md + aux.j as i64 {
                    out.push(format!("unsettled leaf {} has generation {}", n.0, forest.generation(n)));
                }
            }
        }
    }
    for (&u, &(lo, hi)) in &span {
        if hi - lo >= 2 {
            out.push(format!("vertex {} lies in layers {lo} and {hi}", u.0));
        }
        if u != aux.v && aux.neighborhood.contains(u) && forest.vertex_level(u) != aux.m + lo as i64 {
            out.push(format!(
                "interface vertex {} of layer {lo} has level {}",
                u.0,
                forest.vertex_level(u)
            ));
        }
    }
    // u ∈ Λ^l ∩ Λ^{l+1}
    let on_interface = |u: VertexId, l: u32| span.get(&u) == Some(&(l, l + 1));
    for &(n, l) in &dec.layers {
        let LeafLayer::Layer(l) = l else { continue };
        if l + 1 > complete {
            continue;
        }
        let [a, b] = forest.bse(n);
        let ok = if forest.simplex_type(n) != d {
            on_interface(a, l - 1) && on_interface(b, l - 1)
        } else {
            (on_interface(a, l) && on_interface(b, l - 1)) || (on_interface(b, l) && on_interface(a, l - 1))
        };
        if !ok {
            out.push(format!("bisection edge of leaf {} (layer {l}, type {}) misplaced", n.0, forest.simplex_type(n)));
        }
    }
    out
}

/// All edges whose edge patch in `tria` agrees on them as bisection edge.
pub fn find_pre_diamonds(forest: &Forest, tria: &Triangulation) -> Result<Vec<[VertexId; 2]>, ForestError> {
    let idx = MeshIndex::new(forest, tria)?;
    let mut out = Vec::new();
    for (i, &t) in idx.leaves.iter().enumerate() {
        let e = sorted_edge(forest.bse(t));
        let patch = edge_patch(&idx, e);
        if patch[0] as usize != i {
            continue;
        }
        if patch.iter().all(|&k| sorted_edge(forest.bse(idx.leaves[k as usize])) == e) {
            out.push(e);
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn sorted_edge([a, b]: [VertexId; 2]) -> [VertexId; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn edge_patch(idx: &MeshIndex, [a, b]: [VertexId; 2]) -> Vec<u32> {
    let lb = idx.vertex_leaves(b);
    idx.vertex_leaves(a).iter().copied().filter(|k| lb.contains(k)).collect()
}

/// `p` on the closed segment `[a, b]`, exactly.
pub fn on_segment(forest: &Forest, p: VertexId, a: VertexId, b: VertexId) -> bool {
    let k = forest.point(p).exponent().max(forest.point(a).exponent()).max(forest.point(b).exponent());
    let (pp, pa, pb) = (forest.point(p).scaled_to(k), forest.point(a).scaled_to(k), forest.point(b).scaled_to(k));
    let x: Vec<BigInt> = pp.iter().zip(&pa).map(|(p, a)| p - a).collect();
    let y: Vec<BigInt> = pb.iter().zip(&pa).map(|(b, a)| b - a).collect();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if &x[i] * &y[j] != &x[j] * &y[i] {
                return false;
            }
        }
    }
    let dot: BigInt = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let yy: BigInt = y.iter().map(|a| a * a).sum();
    !dot.is_negative() && dot <= yy
}

/// Type-one diagonals of `ω_m(v)`: patch edges `[v, w]` of type one.
pub fn type_one_diagonals(forest: &Forest, aux: &AuxTriangulation) -> Vec<[VertexId; 2]> {
    let d = forest.dim();
    let gv = forest.vertex_gen(aux.v);
    let mut out: Vec<[VertexId; 2]> = aux
        .omega
        .iter()
        .flat_map(|&t| forest.simplex(t).iter().copied())
        .filter(|&w| w != aux.v && type_of(forest.vertex_gen(w).max(gv), d) == 1)
        .map(|w| [aux.v, w])
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Edges of settled leaves whose patch is settled, where being a
/// pre-diamond disagrees with lying on a type-one diagonal.
pub fn pre_diamond_violations(forest: &Forest, aux: &AuxTriangulation) -> Result<(usize, Vec<[VertexId; 2]>), AuxError> {
    let idx = MeshIndex::new(forest, &aux.tria)?;
    let pre: FxHashSet<[VertexId; 2]> = find_pre_diamonds(forest, &aux.tria)?.into_iter().collect();
    let diagonals = type_one_diagonals(forest, aux);
    let settled = |k: u32| matches!(aux.layers[&idx.leaves[k as usize]], LeafLayer::Layer(_));
    let mut seen = FxHashSet::default();
    let mut bad = Vec::new();
    for (i, &t) in idx.leaves.iter().enumerate() {
        if !settled(i as u32) {
            continue;
        }
        let s = forest.simplex(t);
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                let e = sorted_edge([s[a], s[b]]);
                if !seen.insert(e) || !edge_patch(&idx, e).into_iter().all(settled) {
                    continue;
                }
                let diag = diagonals
                    .iter()
                    .any(|&[v, w]| on_segment(forest, e[0], v, w) && on_segment(forest, e[1], v, w));
                if diag != pre.contains(&e) {
                    bad.push(e);
                }
            }
        }
    }
    Ok((seen.len(), bad))
}

/// Intersecting leaves `T₀, …, T_N` with `level(T_k) = level(T₀) + k`,
/// starting in the first layer.
pub fn sharp_chain(forest: &Forest, aux: &AuxTriangulation, n: usize) -> Result<Vec<NodeId>, AuxError> {
    let d = forest.dim();
    let required = d * n + 1;
    if aux.j < required {
        return Err(AuxError::DepthTooSmall { n, j: aux.j, required });
    }
    let idx = MeshIndex::new(forest, &aux.tria)?;
    let levels: Vec<i64> = idx.leaves.iter().map(|&t| forest.level(t)).collect();
    let mut dead = FixedBitSet::with_capacity(idx.len());
    fn extend(
        forest: &Forest,
        idx: &MeshIndex,
        levels: &[i64],
        dead: &mut FixedBitSet,
        path: &mut Vec<usize>,
        n: usize,
    ) -> bool {
        if path.len() == n + 1 {
            return true;
        }
        let last = *path.last().unwrap();
        let want = levels[last] + 1;
        let mut cand: Vec<usize> = forest
            .simplex(idx.leaves[last])
            .iter()
            .flat_map(|&u| idx.vertex_leaves(u).iter().map(|&k| k as usize))
            .filter(|&k| levels[k] == want && !dead.contains(k))
            .collect();
        cand.sort_unstable();
        cand.dedup();
        for k in cand {
            path.push(k);
            if extend(forest, idx, levels, dead, path, n) {
                return true;
            }
            path.pop();
            dead.insert(k);
        }
        false
    }
    let starts: Vec<usize> = idx
        .vertex_leaves(aux.v)
        .iter()
        .map(|&k| k as usize)
        .filter(|&k| aux.layers[&idx.leaves[k]] == LeafLayer::Layer(1))
        .collect();
    for s in starts {
        let mut path = vec![s];
        if extend(forest, &idx, &levels, &mut dead, &mut path, n) {
            return Ok(path.into_iter().map(|k| idx.leaves[k]).collect());
        }
    }
    Err(AuxError::NoChain(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainKind {
    /// Last edge of a chain leaving `Ω_m(v₀)` after `steps` edges: `level < m + steps`.
    Leaving,
    /// Edge `steps` of a chain inside `Ω_m(v₀)`: `level ≤ m + steps`.
    Staying,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainViolation {
    pub kind: ChainKind,
    pub v0: u32,
    pub m: i64,
    pub edge: [u32; 2],
    pub steps: u32,
    pub level: i64,
}

/// Shortest edge-chain lengths from `v₀` through vertices of `Ω_m(v₀)`.
fn inner_distances(forest: &Forest, idx: &MeshIndex, nb: &Neighborhood) -> FxHashMap<VertexId, u32> {
    let mut dist = FxHashMap::default();
    if !idx.is_used(nb.v) {
        return dist;
    }
    dist.insert(nb.v, 0);
    let mut q = VecDeque::from([nb.v]);
    while let Some(u) = q.pop_front() {
        let k = dist[&u];
        for &t in idx.vertex_leaves(u) {
            for &w in forest.simplex(idx.leaves[t as usize]) {
                if nb.contains(w) && !dist.contains_key(&w) {
                    dist.insert(w, k + 1);
                    q.push_back(w);
                }
            }
        }
    }
    dist
}

fn edge_level(forest: &Forest, a: VertexId, b: VertexId) -> i64 {
    level_of(forest.vertex_gen(a).max(forest.vertex_gen(b)), forest.dim())
}

/// Exhaustive check over all edge chains from `v₀`: a chain that leaves
/// `Ω_m(v₀)` with its `N`-th edge has `level(e_N) < m + N`; a chain that stays
/// inside has `level(e_j) ≤ m + j` (the latter only asserted if
/// `check_staying`, which presumes `tria ≤ T_m^∞(v₀)`).
pub fn chain_violations(
    forest: &Forest,
    idx: &MeshIndex,
    nb: &Neighborhood,
    check_staying: bool,
) -> Vec<ChainViolation> {
    let dist = inner_distances(forest, idx, nb);
    let mut out = Vec::new();
    let mut vs: Vec<(&VertexId, &u32)> = dist.iter().collect();
    vs.sort_unstable();
    for (&u, &k) in vs {
        for &t in idx.vertex_leaves(u) {
            for &w in forest.simplex(idx.leaves[t as usize]) {
                if w == u {
                    continue;
                }
                let level = edge_level(forest, u, w);
                let (kind, steps, bad) = match dist.get(&w) {
                    None => (ChainKind::Leaving, k + 1, level > nb.m + k as i64),
                    Some(&kw) if check_staying && u < w => {
                        let steps = k.min(kw) + 1;
                        (ChainKind::Staying, steps, level > nb.m + steps as i64)
                    }
                    Some(_) => continue,
                };
                if bad {
                    out.push(ChainViolation {
                        kind,
                        v0: nb.v.0,
                        m: nb.m,
                        edge: [u.0, w.0],
                        steps,
                        level,
                    });
                }
            }
        }
    }
    out.sort_by_key(|c| (c.edge, c.steps));
    out.dedup();
    out
}

/// First leaf of `tria` outside `forest(T_m^∞(v))`, if any.
pub fn limit_counterexample(forest: &Forest, idx: &MeshIndex, nb: &Neighborhood) -> Option<NodeId> {
    let mut leaves: Vec<usize> = inner_distances(forest, idx, nb)
        .keys()
        .flat_map(|&u| idx.vertex_leaves(u).iter().map(|&k| k as usize))
        .collect();
    leaves.sort_unstable();
    leaves.dedup();
    leaves
        .into_iter()
        .map(|k| idx.leaves[k])
        .find(|&t| !nb.limit_contains(forest, t))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodScan {
    pub vertices: usize,
    /// `(vertex, m, leaf)` where `tria ≤ T_m^∞(v)` was expected but failed.
    pub not_finer: Vec<(u32, i64, u32)>,
    pub chains: Vec<ChainViolation>,
}

impl NeighborhoodScan {
    pub fn is_clean(&self) -> bool {
        self.not_finer.is_empty() && self.chains.is_empty()
    }
}

/// For each sampled vertex: with `m` chosen so that the finer-triangulation
/// hypothesis holds under `jump(v) ≤ 2 + J_n`, asserts `tria ≤ T_m^∞(v)` and
/// scans staying and leaving chains; also scans leaving chains for the
/// smallest admissible `m = level(v) + 1`.
pub fn neighborhood_scan(
    forest: &Forest,
    tria: &Triangulation,
    consts: &SeedConstants,
    sample: &[VertexId],
    exec: ExecPolicy,
) -> Result<NeighborhoodScan, AuxError> {
    let idx = MeshIndex::new(forest, tria)?;
    let per = exec.map(sample, |&v| -> Result<NeighborhoodScan, AuxError> {
        let mut scan = NeighborhoodScan {
            vertices: 1,
            ..Default::default()
        };
        let n = forest.carrier(v).len() - 1;
        let gv = forest.vertex_gen(v);
        let min_level = idx
            .vertex_leaves(v)
            .iter()
            .flat_map(|&t| forest.simplex(idx.leaves[t as usize]).iter())
            .filter(|&&w| w != v)
            .map(|&w| level_of(gv.max(forest.vertex_gen(w)), forest.dim()))
            .min()
            .unwrap_or(0);
        let low = forest.vertex_level(v) + 1;
        let m = low.max(1 + consts.j[n] + min_level).max(0);
        let nb = Neighborhood::new(forest, v, m)?;
        if let Some(t) = limit_counterexample(forest, &idx, &nb) {
            scan.not_finer.push((v.0, m, t.0));
            scan.chains.extend(chain_violations(forest, &idx, &nb, false));
        } else {
            scan.chains.extend(chain_violations(forest, &idx, &nb, true));
        }
        if low.max(0) != m {
            let nb = Neighborhood::new(forest, v, low.max(0))?;
            scan.chains.extend(chain_violations(forest, &idx, &nb, false));
        }
        Ok(scan)
    });
    let mut total = NeighborhoodScan::default();
    for s in per {
        let s = s?;
        total.vertices += s.vertices;
        total.not_finer.extend(s.not_finer);
        total.chains.extend(s.chains);
    }
    Ok(total)
}
