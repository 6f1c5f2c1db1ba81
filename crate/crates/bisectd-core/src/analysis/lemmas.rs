//! Falsification scanners for the structural properties of generation sorted
//! simplices and of the #-generation.
//!
//! Every check runs on exact integer generations; a non-empty result means
//! the implementation (or the theory) is wrong.

use serde::{Deserialize, Serialize};

use crate::arith::{level_of, type_of};
use crate::bisect::{
    edge_gensharp, generation_bse, levelsharp, subsimplex_bisection, tail_start, typesharp, SortedSimplex,
};
use crate::exec::ExecPolicy;
use crate::forest::{Forest, ForestError, NodeId, Triangulation, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Check {
    /// Vertex generations strictly decrease.
    SortedGenerations,
    /// The oldest vertex lies on the bisection edge.
    OldestOnBse,
    /// The oldest edge has `gen ≤ gen(T) − d + 1`.
    OldestEdgeGap,
    /// `level(e) ≤ level(T) ≤ level(e) + 1`.
    EdgeLevelRange,
    /// `level(bse) = level(T) − [type(T) < d]`.
    BseLevel,
    /// `type(bse) = 1 ⇔ type(T) = d`.
    BseTypeOne,
    /// `gen(F) ≤ gen(T) ≤ gen(F) + 1` for facets.
    FacetGeneration,
    /// Cached tail start agrees with a fresh computation.
    TailCache,
    /// Exactly `d − type + 1` type-one edges, all of `level(T)`.
    TypeOneEdges,
    /// Every edge lies in a type-d simplex of generation `level(e)·d`.
    TypeDSimplex,
    /// `levelsharp(e) = level(e) + 1`.
    LevelSharp,
    /// The bisection edge of each subsimplex is strictly #-oldest.
    SharpOldestEdge,
    /// `gensharp(bse(T)) = gen(T) + 1`.
    SharpBse,
    /// Halves of a bisected edge have `gensharp + d`, same `typesharp`.
    SharpChildEdges,
    /// Edges meeting at a vertex differ by at most `d − 1` in #-generation.
    SharpSpread,
    /// The subsimplex rule recovers `bse(T)` and `gen(T) + 1` from any face containing it.
    SubsimplexRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaViolation {
    pub check: Check,
    pub node: Option<u32>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub nodes_checked: usize,
    pub edges_checked: usize,
    pub violations: Vec<LemmaViolation>,
}

impl LemmaReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn subsets(n: usize, min_size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..1 << n)
        .filter(move |m| m.count_ones() as usize >= min_size)
        .map(move |m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
}

/// All per-simplex checks on a generation list sorted by decreasing
/// generation. `tail_cached` is compared against a recomputation if given.
pub fn check_generations(gens: &[i64], tail_cached: Option<usize>) -> Vec<(Check, String)> {
    let d = gens.len() - 1;
    let mut out = Vec::new();
    if gens.windows(2).any(|w| w[0] <= w[1]) {
        out.push((Check::SortedGenerations, format!("{gens:?}")));
        return out;
    }
    let g = gens[0];
    let (lt, tt) = (level_of(g, d), type_of(g, d));
    let (i, j) = generation_bse(gens);
    let edge_gen = |a: usize, b: usize| gens[a].max(gens[b]);
    let bse_gen = edge_gen(i, j);

    if j != d {
        out.push((Check::OldestOnBse, format!("bse ({i}, {j}) in {gens:?}")));
    }
    if gens[d - 1] > g - d as i64 + 1 {
        out.push((Check::OldestEdgeGap, format!("{gens:?}")));
    }
    for a in 0..=d {
        for b in a + 1..=d {
            let le = level_of(edge_gen(a, b), d);
            if !(le <= lt && lt <= le + 1) {
                out.push((Check::EdgeLevelRange, format!("edge ({a}, {b}) of {gens:?}")));
            }
            if levelsharp(&[gens[a], gens[b]], d) != le + 1 {
                out.push((Check::LevelSharp, format!("edge ({a}, {b}) of {gens:?}")));
            }
        }
    }
    if level_of(bse_gen, d) != lt - i64::from(tt < d) {
        out.push((Check::BseLevel, format!("{gens:?}")));
    }
    if (type_of(bse_gen, d) == 1) != (tt == d) {
        out.push((Check::BseTypeOne, format!("{gens:?}")));
    }
    for skip in 0..=d {
        let gf = if skip == 0 { gens[1] } else { g };
        if !(gf <= g && g <= gf + 1) {
            out.push((Check::FacetGeneration, format!("facet without {skip} of {gens:?}")));
        }
    }
    if let Some(t) = tail_cached {
        if t != tail_start(gens, d) {
            out.push((Check::TailCache, format!("cached {t} in {gens:?}")));
        }
    }
    let mut type_one = 0;
    for a in 0..=d {
        for b in a + 1..=d {
            let ge = edge_gen(a, b);
            if type_of(ge, d) == 1 {
                type_one += 1;
                if level_of(ge, d) != lt {
                    out.push((Check::TypeOneEdges, format!("edge ({a}, {b}) of {gens:?} has wrong level")));
                }
            }
        }
    }
    if type_one != d - tt + 1 {
        out.push((Check::TypeOneEdges, format!("{type_one} type-one edges in {gens:?}")));
    }

    let (_, _, gs_bse) = subsimplex_bisection(gens, d);
    if gs_bse != g + 1 || edge_gensharp(gens[i], gens[j], d) != g + 1 {
        out.push((Check::SharpBse, format!("{gens:?}")));
    }
    for s in subsets(d + 1, 3) {
        let sg: Vec<i64> = s.iter().map(|&k| gens[k]).collect();
        let (p, q, gs) = subsimplex_bisection(&sg, d);
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                if (a, b) != (p, q) && edge_gensharp(sg[a], sg[b], d) <= gs {
                    out.push((Check::SharpOldestEdge, format!("face {s:?} of {gens:?}")));
                }
            }
        }
    }
    for a in 0..=d {
        for b in a + 1..=d {
            let gs = edge_gensharp(gens[a], gens[b], d);
            let ts = typesharp(&[gens[a], gens[b]], d);
            for &o in &[gens[a], gens[b]] {
                if edge_gensharp(gs, o, d) != gs + d as i64 || typesharp(&[gs, o], d) != ts {
                    out.push((Check::SharpChildEdges, format!("edge ({a}, {b}) of {gens:?}")));
                }
            }
        }
    }
    for v in 0..=d {
        let at_v: Vec<i64> = (0..=d).filter(|&w| w != v).map(|w| edge_gensharp(gens[v], gens[w], d)).collect();
        let spread = at_v.iter().max().unwrap() - at_v.iter().min().unwrap();
        if spread > d as i64 - 1 {
            out.push((Check::SharpSpread, format!("vertex {v} of {gens:?}: spread {spread}")));
        }
    }
    for extra in subsets(d + 1, 0) {
        if extra.contains(&i) || extra.contains(&j) {
            continue;
        }
        let mut s: Vec<usize> = extra.clone();
        s.push(i);
        s.push(j);
        s.sort_unstable();
        let sg: Vec<i64> = s.iter().map(|&k| gens[k]).collect();
        let (p, q, gs) = subsimplex_bisection(&sg, d);
        if (s[p], s[q]) != (i, j) || gs != g + 1 {
            out.push((Check::SubsimplexRule, format!("face {s:?} of {gens:?}")));
        }
    }
    out
}

/// Per-node checks for one forest node.
pub fn check_node(forest: &Forest, n: NodeId) -> Vec<LemmaViolation> {
    check_generations(&forest.simplex_gens(n), Some(forest.tail_start(n)))
        .into_iter()
        .map(|(check, detail)| LemmaViolation {
            check,
            node: Some(n.0),
            detail,
        })
        .collect()
}

/// Walks from `leaf` (which contains `e`) up and, if needed, virtually down
/// looking for a type-d simplex containing `e` with `gen = level(e)·d`.
pub fn type_d_witness(forest: &Forest, leaf: NodeId, e: [VertexId; 2]) -> Result<i64, String> {
    let d = forest.dim();
    let ge = forest.vertex_gen(e[0]).max(forest.vertex_gen(e[1]));
    let target = level_of(ge, d) * d as i64;
    let contains = |n: NodeId| e.iter().all(|v| forest.simplex(n).contains(v));
    let mut n = leaf;
    loop {
        let g = forest.generation(n);
        if g == target {
            return Ok(g);
        }
        if g < target {
            break;
        }
        match forest.parent(n) {
            Some(p) if contains(p) => n = p,
            _ => return Err(format!("no ancestor of {} with generation {target}", leaf.0)),
        }
    }
    // descend past the leaf on generations only
    let mut next = u64::MAX;
    let mut s = SortedSimplex::new(
        forest
            .simplex(n)
            .iter()
            .map(|&v| (v.0 as u64, forest.vertex_gen(v)))
            .collect(),
    )
    .map_err(|err| err.to_string())?;
    let key = [e[0].0 as u64, e[1].0 as u64];
    while s.generation() < target {
        let (bis, kids) = s.bisect(|_, _| {
            next -= 1;
            next
        });
        if key.contains(&bis.bse[0]) && key.contains(&bis.bse[1]) {
            return Err(format!("edge is bisected at generation {} before reaching {target}", s.generation()));
        }
        s = kids
            .into_iter()
            .find(|k| key.iter().all(|v| k.vertices().contains(v)))
            .expect("one child keeps a non-bisection edge");
    }
    if s.generation() == target {
        Ok(target)
    } else {
        Err(format!("overshot generation {target}"))
    }
}

/// Runs every scanner over `forest(tria)` (all ancestors of the leaves) and
/// every edge of the leaves.
pub fn scan_lemmas(forest: &Forest, tria: &Triangulation, exec: ExecPolicy) -> Result<LemmaReport, ForestError> {
    let nodes: Vec<NodeId> = forest.forest_of(tria).ones().map(|n| NodeId(n as u32)).collect();
    let mut violations = exec.flat_map(&nodes, |&n| check_node(forest, n));
    let leaves = tria.leaf_vec();
    let d = forest.dim();
    let per_leaf = exec.map(&leaves, |&t| {
        let vs = forest.simplex(t);
        let mut bad = Vec::new();
        for a in 0..=d {
            for b in a + 1..=d {
                if let Err(detail) = type_d_witness(forest, t, [vs[a], vs[b]]) {
                    bad.push(LemmaViolation {
                        check: Check::TypeDSimplex,
                        node: Some(t.0),
                        detail,
                    });
                }
            }
        }
        bad
    });
    violations.extend(per_leaf.into_iter().flatten());
    Ok(LemmaReport {
        nodes_checked: nodes.len(),
        edges_checked: leaves.len() * d * (d + 1) / 2,
        violations,
    })
}
