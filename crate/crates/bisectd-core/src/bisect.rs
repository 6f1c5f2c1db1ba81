//! Single-simplex bisection rules and the #-generation calculus.
//!
//! Everything here is mesh independent. Vertices are opaque `Copy` handles;
//! the caller supplies a midpoint constructor and, for the generation based
//! rules, the vertex generations.

use smallvec::SmallVec;
use thiserror::Error;

use crate::arith::{level_of, maubach_k, traxler_gamma, type_of};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BisectError {
    #[error("vertex generations are not strictly decreasing: {0:?}")]
    NotSorted(Vec<i64>),
    #[error("need between 2 and {max} vertices, got {got}")]
    BadSize { got: usize, max: usize },
}

/// Result of one bisection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bisection<V> {
    /// Bisection edge. For the generation based rules the younger vertex comes first.
    pub bse: [V; 2],
    pub vertex: V,
    pub children: [Vec<V>; 2],
}

/// Algorithm of Maubach on `t = [v0, …, vd]`.
pub fn bisect_maubach<V: Copy>(t: &[V], gen: i64, midpoint: impl FnOnce(V, V) -> V) -> Bisection<V> {
    let d = t.len() - 1;
    let k = maubach_k(gen, d);
    let b = midpoint(t[0], t[k]);
    let mut c1 = Vec::with_capacity(d + 1);
    c1.extend_from_slice(&t[..k]);
    c1.push(b);
    c1.extend_from_slice(&t[k + 1..]);
    let mut c2 = Vec::with_capacity(d + 1);
    c2.extend_from_slice(&t[1..=k]);
    c2.push(b);
    c2.extend_from_slice(&t[k + 1..]);
    Bisection {
        bse: [t[0], t[k]],
        vertex: b,
        children: [c1, c2],
    }
}

/// Algorithm of Traxler on `t = [v0, …, vd]`.
pub fn bisect_traxler<V: Copy>(t: &[V], gen: i64, midpoint: impl FnOnce(V, V) -> V) -> Bisection<V> {
    let d = t.len() - 1;
    let g = traxler_gamma(gen, d);
    let b = midpoint(t[0], t[d]);
    let mut c1 = Vec::with_capacity(d + 1);
    c1.push(t[0]);
    c1.push(b);
    c1.extend_from_slice(&t[1..d]);
    let mut c2 = Vec::with_capacity(d + 1);
    c2.push(t[d]);
    c2.push(b);
    c2.extend_from_slice(&t[1..=g]);
    c2.extend(t[g + 1..d].iter().rev());
    Bisection {
        bse: [t[0], t[d]],
        vertex: b,
        children: [c1, c2],
    }
}

/// Index of the first tail vertex: the vertices `v_ℓ, …, v_m` share the level of the oldest one.
pub fn tail_start(gens: &[i64], d: usize) -> usize {
    let m = gens.len() - 1;
    let lm = level_of(gens[m], d);
    let mut l = m;
    while l > 0 && level_of(gens[l - 1], d) == lm {
        l -= 1;
    }
    l
}

/// Positions `(i, j)`, `i < j`, of the bisection edge of a generation-sorted d-simplex.
pub fn generation_bse(gens: &[i64]) -> (usize, usize) {
    let d = gens.len() - 1;
    if level_of(gens[d], d) != level_of(gens[d - 1], d) {
        (d - 1, d)
    } else {
        (type_of(gens[0], d), d)
    }
}

/// Same as [`generation_bse`] but from a cached tail start.
pub fn bse_from_tail(tail: usize, d: usize) -> (usize, usize) {
    if tail == d {
        (d - 1, d)
    } else {
        (tail, d)
    }
}

/// Generation based rule on a simplex sorted by strictly decreasing generation.
/// Children come back sorted; the bisection vertex has generation `gens[0] + 1`.
pub fn bisect_generation<V: Copy>(
    t: &[V],
    gens: &[i64],
    midpoint: impl FnOnce(V, V) -> V,
) -> Bisection<V> {
    let (i, j) = generation_bse(gens);
    let b = midpoint(t[i], t[j]);
    let child = |skip: usize| {
        let mut c = Vec::with_capacity(t.len());
        c.push(b);
        c.extend(t.iter().enumerate().filter(|&(p, _)| p != skip).map(|(_, &v)| v));
        c
    };
    Bisection {
        bse: [t[i], t[j]],
        vertex: b,
        children: [child(i), child(j)],
    }
}

/// A simplex with vertices sorted by strictly decreasing generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedSimplex<V> {
    vertices: SmallVec<[V; 9]>,
    gens: SmallVec<[i64; 9]>,
}

impl<V: Copy> SortedSimplex<V> {
    /// Sorts the given vertices; fails on repeated generations.
    pub fn new(mut pairs: Vec<(V, i64)>) -> Result<Self, BisectError> {
        if pairs.len() < 2 {
            return Err(BisectError::BadSize { got: pairs.len(), max: usize::MAX });
        }
        pairs.sort_by_key(|p| std::cmp::Reverse(p.1));
        let gens: SmallVec<[i64; 9]> = pairs.iter().map(|p| p.1).collect();
        if gens.windows(2).any(|w| w[0] == w[1]) {
            return Err(BisectError::NotSorted(gens.to_vec()));
        }
        Ok(SortedSimplex {
            vertices: pairs.iter().map(|p| p.0).collect(),
            gens,
        })
    }

    pub fn vertices(&self) -> &[V] {
        &self.vertices
    }

    pub fn gens(&self) -> &[i64] {
        &self.gens
    }

    pub fn generation(&self) -> i64 {
        self.gens[0]
    }

    /// Alg. 4 bisection; only valid for full d-simplices.
    pub fn bisect(&self, midpoint: impl FnOnce(V, V) -> V) -> (Bisection<V>, [SortedSimplex<V>; 2]) {
        let bis = bisect_generation(&self.vertices, &self.gens, midpoint);
        let (i, j) = generation_bse(&self.gens);
        let g = self.gens[0] + 1;
        let child = |skip: usize, vs: &[V]| {
            let mut gens = SmallVec::new();
            gens.push(g);
            gens.extend(self.gens.iter().enumerate().filter(|&(p, _)| p != skip).map(|(_, &x)| x));
            SortedSimplex {
                vertices: vs.iter().copied().collect(),
                gens,
            }
        };
        let kids = [child(i, &bis.children[0]), child(j, &bis.children[1])];
        (bis, kids)
    }
}

/// Bisection edge positions and bisection vertex generation of a sorted
/// m-subsimplex (`gens.len() == m + 1`) in dimension `d`.
pub fn subsimplex_bisection(gens: &[i64], d: usize) -> (usize, usize, i64) {
    let m = gens.len() - 1;
    debug_assert!((1..=d).contains(&m));
    if level_of(gens[m], d) != level_of(gens[m - 1], d) {
        (m - 1, m, gens[m - 1] + d as i64)
    } else {
        let l = tail_start(gens, d);
        (l, m, gens[m] + 2 * d as i64 + 1 - type_of(gens[l], d) as i64)
    }
}

pub fn gensharp(gens: &[i64], d: usize) -> i64 {
    subsimplex_bisection(gens, d).2
}

pub fn levelsharp(gens: &[i64], d: usize) -> i64 {
    level_of(gensharp(gens, d), d)
}

pub fn typesharp(gens: &[i64], d: usize) -> usize {
    type_of(gensharp(gens, d), d)
}

/// #-generation of the edge with endpoint generations `a`, `b` (any order).
pub fn edge_gensharp(a: i64, b: i64, d: usize) -> i64 {
    gensharp(&[a.max(b), a.min(b)], d)
}
