//! Simplex distances, the regularized mesh size function, level-jump
//! statistics, seed constants and level-estimate verification.

pub mod lemmas;

use std::collections::{BTreeMap, VecDeque};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::arith::{barycentric, diameter, level_of, type_of};
use crate::bisect::edge_gensharp;
use crate::exec::ExecPolicy;
use crate::forest::{Forest, ForestError, MeshIndex, NodeId, Refiner, Triangulation, VertexId};
use crate::seed::SeedTriangulation;

/// Distance sentinel for disconnected leaves.
pub const UNREACHABLE: u32 = u32::MAX;

/// BFS over leaves where two leaves are adjacent iff they share a vertex.
/// Returns distances indexed by dense leaf index.
pub fn bfs_distances(forest: &Forest, idx: &MeshIndex, sources: &[usize]) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; idx.len()];
    let mut seen_vertex = FixedBitSet::with_capacity(idx.num_vertices());
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s] == UNREACHABLE {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        let k = dist[i];
        for &v in forest.simplex(idx.leaves[i]) {
            if seen_vertex.put(v.idx()) {
                continue;
            }
            for &j in idx.vertex_leaves(v) {
                let j = j as usize;
                if dist[j] == UNREACHABLE {
                    dist[j] = k + 1;
                    queue.push_back(j);
                }
            }
        }
    }
    dist
}

/// `δ(T, T′)`; `None` when the leaves are not connected.
pub fn simplex_distance(
    forest: &Forest,
    tria: &Triangulation,
    a: NodeId,
    b: NodeId,
) -> Result<Option<u32>, ForestError> {
    let idx = MeshIndex::new(forest, tria)?;
    let (Some(ia), Some(ib)) = (idx.dense(a), idx.dense(b)) else {
        let bad = if idx.dense(a).is_none() { a } else { b };
        return Err(ForestError::NotALeaf(bad.0));
    };
    let d = bfs_distances(forest, &idx, &[ia])[ib];
    Ok((d != UNREACHABLE).then_some(d))
}

/// Distances within an explicit set of simplices where adjacency means
/// sharing at least `min_shared` vertices. Used for 1-neighbor (edge sharing)
/// distances on small patches.
pub fn patch_distances(simplices: &[Vec<VertexId>], min_shared: usize) -> Vec<Vec<u32>> {
    let n = simplices.len();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    j != i && simplices[i].iter().filter(|v| simplices[j].contains(v)).count() >= min_shared
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|s| {
            let mut dist = vec![UNREACHABLE; n];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(i) = q.pop_front() {
                for &j in &adj[i] {
                    if dist[j] == UNREACHABLE {
                        dist[j] = dist[i] + 1;
                        q.push_back(j);
                    }
                }
            }
            dist
        })
        .collect()
}

/// `s(T) = max_{T′} (level(T′) − δ(T, T′))` for every leaf (dense order),
/// plus the maximizing source, by a bucket queue over decreasing potential.
pub fn regularized_exponents(forest: &Forest, idx: &MeshIndex) -> (Vec<i64>, Vec<u32>) {
    let n = idx.len();
    let mut s: Vec<i64> = idx.leaves.iter().map(|&t| forest.level(t)).collect();
    let mut src: Vec<u32> = (0..n as u32).collect();
    if n == 0 {
        return (s, src);
    }
    let max = *s.iter().max().unwrap();
    let min = *s.iter().min().unwrap();
    let width = (max - min + 1) as usize;
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); width];
    for (i, &l) in s.iter().enumerate() {
        buckets[(max - l) as usize].push(i as u32);
    }
    let mut vertex_best = vec![i64::MIN; idx.num_vertices()];
    for b in 0..width {
        let level = max - b as i64;
        let items = std::mem::take(&mut buckets[b]);
        for i in items {
            let i = i as usize;
            if s[i] != level {
                continue;
            }
            for &v in forest.simplex(idx.leaves[i]) {
                if vertex_best[v.idx()] >= level {
                    continue;
                }
                vertex_best[v.idx()] = level;
                for &j in idx.vertex_leaves(v) {
                    let j = j as usize;
                    if s[j] < level - 1 {
                        s[j] = level - 1;
                        src[j] = src[i];
                        buckets[b + 1].push(j as u32);
                    }
                }
            }
        }
    }
    (s, src)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafRow {
    pub id: u32,
    pub gen: i64,
    pub level: i64,
    #[serde(rename = "type")]
    pub simplex_type: usize,
    pub diam: f64,
    pub h_exponent: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingReport {
    pub dim: usize,
    pub leaves: usize,
    /// Mean root diameter.
    pub h0: f64,
    /// `max h(T)/h(T′)` over intersecting leaves (a power of two).
    pub gamma: f64,
    pub gamma_exponent: i64,
    /// `min h/diam` and `max h/diam`.
    pub c1: f64,
    pub c2: f64,
    /// Level-estimate constant the report was checked against.
    pub big_gamma: i64,
    /// `max_T (s(T) − level(T))`; the level estimate holds iff this is ≤ `big_gamma`.
    pub max_excess: i64,
    pub level_estimate_ok: bool,
    pub rows: Vec<LeafRow>,
    pub jumps: LevelJumpStats,
}

impl GradingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,gen,level,type,diam,h_exponent\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.17e},{}\n",
                r.id, r.gen, r.level, r.simplex_type, r.diam, r.h_exponent
            ));
        }
        out
    }
}

fn vertex_coords(forest: &Forest, idx: &MeshIndex, exec: ExecPolicy) -> Vec<Vec<f64>> {
    exec.map_range(forest.num_vertices(), |v| {
        let v = VertexId(v as u32);
        if v.idx() < idx.num_vertices() && idx.is_used(v) {
            forest.point(v).to_f64()
        } else {
            Vec::new()
        }
    })
}

/// Diameters of the leaves in dense order.
pub fn leaf_diameters(forest: &Forest, idx: &MeshIndex, exec: ExecPolicy) -> Vec<f64> {
    let coords = vertex_coords(forest, idx, exec);
    exec.map(&idx.leaves, |&t| {
        let pts: Vec<Vec<f64>> = forest.simplex(t).iter().map(|v| coords[v.idx()].clone()).collect();
        diameter(&pts)
    })
}

/// Mean diameter of the seed simplices.
pub fn mean_root_diameter(seed: &SeedTriangulation) -> f64 {
    let n = seed.simplices().len();
    let total: f64 = (0..n)
        .map(|s| diameter(&seed.simplex_points(s).iter().map(|p| p.to_f64()).collect::<Vec<_>>()))
        .sum();
    total / n as f64
}

/// Builds the report for `h(T) = h₀ 2^{−s(T)}` and checks it against `big_gamma`.
pub fn regularized_mesh_size(
    forest: &Forest,
    tria: &Triangulation,
    big_gamma: i64,
    exec: ExecPolicy,
) -> Result<GradingReport, ForestError> {
    let idx = MeshIndex::new(forest, tria)?;
    let (s, _) = regularized_exponents(forest, &idx);
    let diams = leaf_diameters(forest, &idx, exec);
    let h0 = mean_root_diameter(forest.seed());
    let used: Vec<VertexId> = idx.used_vertices().collect();
    let spread = exec.map(&used, |&v| {
        let ls = idx.vertex_leaves(v);
        let hi = ls.iter().map(|&j| s[j as usize]).max().unwrap();
        let lo = ls.iter().map(|&j| s[j as usize]).min().unwrap();
        hi - lo
    });
    let gamma_exponent = spread.into_iter().max().unwrap_or(0);
    let mut rows = Vec::with_capacity(idx.len());
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    let mut max_excess = i64::MIN;
    for (i, &t) in idx.leaves.iter().enumerate() {
        let h = h0 * (-(s[i] as f64)).exp2();
        let ratio = h / diams[i];
        c1 = c1.min(ratio);
        c2 = c2.max(ratio);
        let level = forest.level(t);
        max_excess = max_excess.max(s[i] - level);
        rows.push(LeafRow {
            id: t.0,
            gen: forest.generation(t),
            level,
            simplex_type: forest.simplex_type(t),
            diam: diams[i],
            h_exponent: s[i],
        });
    }
    let jumps = level_jump_stats_indexed(forest, &idx, None, exec);
    Ok(GradingReport {
        dim: forest.dim(),
        leaves: idx.len(),
        h0,
        gamma: (gamma_exponent as f64).exp2(),
        gamma_exponent,
        c1,
        c2,
        big_gamma,
        max_excess,
        level_estimate_ok: max_excess <= big_gamma,
        rows,
        jumps,
    })
}

/// Smallest `n` such that `v` lies in a closed n-face of a root, by exact
/// barycentric coordinates.
pub fn macro_dimension(forest: &Forest, v: VertexId) -> usize {
    let p = forest.point(v);
    forest
        .roots()
        .iter()
        .filter_map(|&r| {
            let b = barycentric(&forest.simplex_points(r), p).ok()?;
            if b.iter().any(num_traits::Signed::is_negative) {
                return None;
            }
            Some(b.iter().filter(|x| !num_traits::Zero::is_zero(*x)).count() - 1)
        })
        .min()
        .expect("vertex outside every root")
}

/// Macro dimension from the combinatorial carrier tracked by the forest.
pub fn macro_dimension_fast(forest: &Forest, v: VertexId) -> usize {
    forest.carrier(v).len() - 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroClassification {
    /// Macro dimension per forest vertex.
    pub dims: Vec<usize>,
    pub dim: usize,
}

impl MacroClassification {
    pub fn new(forest: &Forest) -> Self {
        MacroClassification {
            dims: (0..forest.num_vertices())
                .map(|v| macro_dimension_fast(forest, VertexId(v as u32)))
                .collect(),
            dim: forest.dim(),
        }
    }

    pub fn is_critical(&self, v: VertexId) -> bool {
        self.dims[v.idx()] + 2 <= self.dim
    }
}

/// Per-vertex edge level jump, bucketed by macro dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelJumpStats {
    /// `histogram[n][jump] = count` of n-macro vertices with that jump.
    pub histogram: BTreeMap<usize, BTreeMap<i64, usize>>,
    pub max_by_macro_dim: BTreeMap<usize, i64>,
    /// Vertices exceeding `2 + J_n` (only when bounds were supplied).
    pub violations: Vec<JumpViolation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpViolation {
    pub vertex: u32,
    pub macro_dim: usize,
    pub jump: i64,
    pub bound: i64,
}

/// Level and #-generation spread of the edges at `v`.
fn vertex_spreads(forest: &Forest, idx: &MeshIndex, v: VertexId) -> (i64, i64) {
    let d = forest.dim();
    let gv = forest.vertex_gen(v);
    let (mut lmin, mut lmax) = (i64::MAX, i64::MIN);
    let (mut gmin, mut gmax) = (i64::MAX, i64::MIN);
    for &j in idx.vertex_leaves(v) {
        for &w in forest.simplex(idx.leaves[j as usize]) {
            if w == v {
                continue;
            }
            let gw = forest.vertex_gen(w);
            let l = level_of(gv.max(gw), d);
            lmin = lmin.min(l);
            lmax = lmax.max(l);
            let gs = edge_gensharp(gv, gw, d);
            gmin = gmin.min(gs);
            gmax = gmax.max(gs);
        }
    }
    (lmax - lmin, gmax - gmin)
}

fn level_jump_stats_indexed(
    forest: &Forest,
    idx: &MeshIndex,
    bounds: Option<&[i64]>,
    exec: ExecPolicy,
) -> LevelJumpStats {
    let used: Vec<VertexId> = idx.used_vertices().collect();
    let per = exec.map(&used, |&v| (v, macro_dimension_fast(forest, v), vertex_spreads(forest, idx, v).0));
    let mut st = LevelJumpStats::default();
    for (v, n, jump) in per {
        *st.histogram.entry(n).or_default().entry(jump).or_default() += 1;
        let m = st.max_by_macro_dim.entry(n).or_insert(jump);
        *m = (*m).max(jump);
        if let Some(b) = bounds {
            let bound = 2 + b[n];
            if jump > bound {
                st.violations.push(JumpViolation {
                    vertex: v.0,
                    macro_dim: n,
                    jump,
                    bound,
                });
            }
        }
    }
    st
}

/// Level-jump statistics; with `j_table` (indexed by macro dimension) also
/// records vertices exceeding `2 + J_n`.
pub fn level_jump_stats(
    forest: &Forest,
    tria: &Triangulation,
    j_table: Option<&[i64]>,
    exec: ExecPolicy,
) -> Result<LevelJumpStats, ForestError> {
    let idx = MeshIndex::new(forest, tria)?;
    Ok(level_jump_stats_indexed(forest, &idx, j_table, exec))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GensharpViolation {
    pub vertex: u32,
    pub macro_dim: usize,
    pub gap: i64,
    pub bound: i64,
}

/// #-generation gaps between edges meeting at a vertex: `≤ 2d` at non-critical
/// vertices, `≤ 4d` at critical n-macro vertices with `n ≥ 1`, `≤ (C+1)(d−1)` at seed vertices.
pub fn gensharp_gap_violations(
    forest: &Forest,
    tria: &Triangulation,
    c: u32,
    exec: ExecPolicy,
) -> Result<Vec<GensharpViolation>, ForestError> {
    let idx = MeshIndex::new(forest, tria)?;
    let d = forest.dim() as i64;
    let used: Vec<VertexId> = idx.used_vertices().collect();
    let found = exec.flat_map(&used, |&v| {
        let n = macro_dimension_fast(forest, v);
        let bound = if n as i64 >= d - 1 {
            2 * d
        } else if n >= 1 {
            4 * d
        } else {
            (c as i64 + 1) * (d - 1)
        };
        let gap = vertex_spreads(forest, &idx, v).1;
        if gap > bound {
            vec![GensharpViolation {
                vertex: v.0,
                macro_dim: n,
                gap,
                bound,
            }]
        } else {
            Vec::new()
        }
    });
    Ok(found)
}

/// `C(T₀)`, `C′(T₀)`, the `J_n` table and `Γ`, `Γ⁺`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedConstants {
    pub dim: usize,
    /// Max 1-neighbor distance inside vertex patches of the once fully refined seed.
    pub c: u32,
    /// Same quantity on the seed itself.
    pub c_prime: u32,
    /// Unclamped `⌈(C+1)(1−1/d)⌉ − 2`.
    pub j0_raw: i64,
    /// `J_n` for `n = 0..=d` (all non-negative).
    pub j: Vec<i64>,
    pub big_gamma: i64,
    pub big_gamma_plus: i64,
}

fn max_patch_distance(forest: &Forest, idx: &MeshIndex, v: VertexId) -> u32 {
    let patch: Vec<Vec<VertexId>> = idx
        .vertex_leaves(v)
        .iter()
        .map(|&j| forest.simplex(idx.leaves[j as usize]).to_vec())
        .collect();
    patch_distances(&patch, 2)
        .into_iter()
        .flatten()
        .filter(|&x| x != UNREACHABLE)
        .max()
        .unwrap_or(0)
}

pub fn c_of_seed(seed: &SeedTriangulation) -> Result<SeedConstants, ForestError> {
    let d = seed.dim();
    let (mut f, t0) = Forest::new(seed)?;
    let idx0 = MeshIndex::new(&f, &t0)?;
    let seed_vertices: Vec<VertexId> = (0..seed.points().len() as u32).map(VertexId).collect();
    let c_prime = seed_vertices
        .iter()
        .map(|&v| max_patch_distance(&f, &idx0, v))
        .max()
        .unwrap_or(0);
    let mut r = Refiner::new(&mut f, &t0)?;
    r.uniform(d)?;
    let plus = r.into_triangulation();
    let idx = MeshIndex::new(&f, &plus)?;
    let c = seed_vertices
        .iter()
        .map(|&v| max_patch_distance(&f, &idx, v))
        .max()
        .unwrap_or(0);
    // ⌈(C+1)(d−1)/d⌉ − 2
    let num = (c as i64 + 1) * (d as i64 - 1);
    let j0_raw = (num + d as i64 - 1) / d as i64 - 2;
    let mut j = vec![0i64; d + 1];
    j[0] = j0_raw.max(0);
    for jn in j.iter_mut().take(d - 1).skip(1) {
        *jn = 2;
    }
    let big_gamma = 1 + j[..=d - 2].iter().sum::<i64>();
    Ok(SeedConstants {
        dim: d,
        c,
        c_prime,
        j0_raw,
        j,
        big_gamma,
        big_gamma_plus: big_gamma + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelEstimateMode {
    /// One multi-source pass: exact for all pairs.
    Exact,
    /// A BFS from every leaf (quadratic; the reference check).
    AllPairs,
    /// A BFS from `k` evenly spaced leaves.
    Sampled(usize),
}

/// `level(T′) − level(T) ≤ δ(T, T′) + Γ` for the checked pairs; first violation `(T, T′)` if any.
pub fn verify_level_estimate(
    forest: &Forest,
    tria: &Triangulation,
    big_gamma: i64,
    mode: LevelEstimateMode,
    exec: ExecPolicy,
) -> Result<Option<(NodeId, NodeId)>, ForestError> {
    let idx = MeshIndex::new(forest, tria)?;
    let levels: Vec<i64> = idx.leaves.iter().map(|&t| forest.level(t)).collect();
    let from_sources = |sources: Vec<usize>| {
        exec.find_map_first(&sources, |&t| {
            let dist = bfs_distances(forest, &idx, &[t]);
            (0..idx.len())
                .find(|&u| dist[u] != UNREACHABLE && levels[u] - levels[t] > dist[u] as i64 + big_gamma)
                .map(|u| (idx.leaves[t], idx.leaves[u]))
        })
    };
    Ok(match mode {
        LevelEstimateMode::Exact => {
            let (s, src) = regularized_exponents(forest, &idx);
            (0..idx.len())
                .find(|&t| s[t] - levels[t] > big_gamma)
                .map(|t| (idx.leaves[t], idx.leaves[src[t] as usize]))
        }
        LevelEstimateMode::AllPairs => from_sources((0..idx.len()).collect()),
        LevelEstimateMode::Sampled(k) => {
            let n = idx.len();
            let k = k.clamp(1, n.max(1));
            from_sources((0..k).map(|i| i * n / k).collect())
        }
    })
}

/// Brute force `s(T)` from a single BFS out of `T` (test oracle / sampling).
pub fn regularized_exponent_at(forest: &Forest, idx: &MeshIndex, t: usize) -> i64 {
    let dist = bfs_distances(forest, idx, &[t]);
    (0..idx.len())
        .filter(|&u| dist[u] != UNREACHABLE)
        .map(|u| forest.level(idx.leaves[u]) - dist[u] as i64)
        .max()
        .unwrap()
}

/// `type` and `level` of an edge given its endpoint generations.
pub fn edge_level_type(a: i64, b: i64, d: usize) -> (i64, usize) {
    let g = a.max(b);
    (level_of(g, d), type_of(g, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::uniform_refine;
    use crate::seed::kuhn_cube;

    #[test]
    fn root_distance_and_uniform_h() {
        let (mut f, t) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        let r = f.roots().to_vec();
        assert_eq!(simplex_distance(&f, &t, r[0], r[0]).unwrap(), Some(0));
        assert_eq!(simplex_distance(&f, &t, r[0], r[1]).unwrap(), Some(1));
        let u = uniform_refine(&mut f, &t, 4).unwrap();
        let rep = regularized_mesh_size(&f, &u, 1, ExecPolicy::Sequential).unwrap();
        assert_eq!(rep.gamma, 1.0);
        assert!(rep.rows.iter().all(|r| r.h_exponent == 2 && r.level == 2));
        assert!(rep.level_estimate_ok);
        let jumps = level_jump_stats(&f, &u, None, ExecPolicy::Sequential).unwrap();
        assert!(jumps.max_by_macro_dim.values().all(|&j| j == 0));
    }

    #[test]
    fn macro_dimensions_kuhn3() {
        let (mut f, t) = Forest::new(&kuhn_cube(3).unwrap()).unwrap();
        let u = uniform_refine(&mut f, &t, 3).unwrap();
        for v in 0..f.num_vertices() {
            let v = VertexId(v as u32);
            assert_eq!(macro_dimension(&f, v), macro_dimension_fast(&f, v), "{:?}", f.point(v));
        }
        let center = f
            .find_vertex(&crate::arith::DyadicPoint::new(vec![1.into(), 1.into(), 1.into()], 1))
            .unwrap();
        assert_eq!(macro_dimension(&f, center), 1);
        assert!(MacroClassification::new(&f).is_critical(center));
        for v in 0..8 {
            assert_eq!(macro_dimension(&f, VertexId(v)), 0);
        }
        assert!(!u.is_empty());
    }

    #[test]
    fn constants_for_kuhn_cubes() {
        let c2 = c_of_seed(&kuhn_cube(2).unwrap()).unwrap();
        assert_eq!(c2.j[1..], [0, 0]);
        assert_eq!(c2.big_gamma, 1 + c2.j[0]);
        let c3 = c_of_seed(&kuhn_cube(3).unwrap()).unwrap();
        assert_eq!(c3.j[1], 2);
        assert_eq!(c3.j[2..], [0, 0]);
        assert_eq!(c3.big_gamma_plus, c3.big_gamma + 1);
    }
}
