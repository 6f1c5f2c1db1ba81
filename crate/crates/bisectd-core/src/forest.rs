//! Master forest, triangulations as leaf sets, conforming closure, lattice
//! operations and the conformity checker.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use fixedbitset::FixedBitSet;
use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::arith::{level_of, type_of, DyadicPoint};
use crate::bisect::{bse_from_tail, tail_start};
use crate::exec::ExecPolicy;
use crate::seed::{SeedError, SeedTriangulation};

/// Default closure budget (bisections per closure call).
pub const DEFAULT_BUDGET: u64 = 1 << 24;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(transparent)]
pub struct VertexId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(transparent)]
pub struct NodeId(pub u32);

impl VertexId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl NodeId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForestError {
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error("triangulations belong to different forests")]
    ForestMismatch,
    #[error("node {0} is not a leaf of the triangulation")]
    NotALeaf(u32),
    #[error("node {0} does not exist")]
    UnknownNode(u32),
    #[error(
        "closure exceeded its budget of {budget} bisections; the seed probably violates the \
         initial condition (use a colored seed or onboard it first; the budget itself is an \
         engineering default, raise it with --budget)"
    )]
    BudgetExceeded { budget: u64 },
    #[error("vertex {vertex} already has generation {found}, bisection expected {expected}")]
    GenerationConflict { vertex: u32, expected: i64, found: i64 },
}

static NEXT_FOREST_ID: AtomicU64 = AtomicU64::new(1);

/// Append-only arena of all simplices ever created from one seed.
#[derive(Debug, Clone)]
pub struct Forest {
    id: u64,
    dim: usize,
    seed: SeedTriangulation,
    points: Vec<DyadicPoint>,
    vgen: Vec<i64>,
    origin: Vec<[u32; 2]>,
    carrier: Vec<SmallVec<[u32; 4]>>,
    point_index: FxHashMap<DyadicPoint, u32>,
    midpoints: FxHashMap<u64, u32>,
    verts: Vec<VertexId>,
    parent: Vec<u32>,
    children: Vec<[u32; 2]>,
    tail: Vec<u8>,
    roots: Vec<NodeId>,
}

fn edge_key(a: VertexId, b: VertexId) -> u64 {
    let (lo, hi) = if a.0 < b.0 { (a.0, b.0) } else { (b.0, a.0) };
    ((hi as u64) << 32) | lo as u64
}

fn union_sorted(a: &[u32], b: &[u32]) -> SmallVec<[u32; 4]> {
    let mut out = SmallVec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
            j += 1;
        }
    }
    out
}

impl Forest {
    /// Builds the forest of a colored seed; the returned triangulation is the seed itself.
    pub fn new(seed: &SeedTriangulation) -> Result<(Forest, Triangulation), ForestError> {
        let gens = seed.assign_initial_generations()?;
        let d = seed.dim();
        let mut f = Forest {
            id: NEXT_FOREST_ID.fetch_add(1, Ordering::Relaxed),
            dim: d,
            seed: seed.clone(),
            points: seed.points().to_vec(),
            vgen: gens,
            origin: vec![[NONE; 2]; seed.points().len()],
            carrier: (0..seed.points().len() as u32).map(|v| SmallVec::from_slice(&[v])).collect(),
            point_index: seed
                .points()
                .iter()
                .enumerate()
                .map(|(i, p)| (p.clone(), i as u32))
                .collect(),
            midpoints: FxHashMap::default(),
            verts: Vec::new(),
            parent: Vec::new(),
            children: Vec::new(),
            tail: Vec::new(),
            roots: Vec::new(),
        };
        for s in seed.simplices() {
            let mut vs: SmallVec<[VertexId; 9]> = s.iter().map(|&v| VertexId(v)).collect();
            vs.sort_by(|a, b| f.vgen[b.idx()].cmp(&f.vgen[a.idx()]));
            let id = f.push_node(&vs, NONE);
            f.roots.push(id);
        }
        let tria = Triangulation::from_leaves(&f, f.roots.clone());
        Ok((f, tria))
    }

    fn push_node(&mut self, vs: &[VertexId], parent: u32) -> NodeId {
        let id = NodeId(self.parent.len() as u32);
        let gens: SmallVec<[i64; 9]> = vs.iter().map(|v| self.vgen[v.idx()]).collect();
        self.tail.push(tail_start(&gens, self.dim) as u8);
        self.verts.extend_from_slice(vs);
        self.parent.push(parent);
        self.children.push([NONE; 2]);
        id
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> &SeedTriangulation {
        &self.seed
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.points.len()
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        n.idx() < self.num_nodes()
    }

    /// Vertices of a node sorted by strictly decreasing generation.
    pub fn simplex(&self, n: NodeId) -> &[VertexId] {
        let s = self.dim + 1;
        &self.verts[n.idx() * s..(n.idx() + 1) * s]
    }

    pub fn simplex_gens(&self, n: NodeId) -> SmallVec<[i64; 9]> {
        self.simplex(n).iter().map(|v| self.vgen[v.idx()]).collect()
    }

    pub fn simplex_points(&self, n: NodeId) -> Vec<DyadicPoint> {
        self.simplex(n).iter().map(|v| self.points[v.idx()].clone()).collect()
    }

    pub fn generation(&self, n: NodeId) -> i64 {
        self.vgen[self.simplex(n)[0].idx()]
    }

    pub fn level(&self, n: NodeId) -> i64 {
        level_of(self.generation(n), self.dim)
    }

    pub fn simplex_type(&self, n: NodeId) -> usize {
        type_of(self.generation(n), self.dim)
    }

    /// Cached index of the first tail vertex.
    pub fn tail_start(&self, n: NodeId) -> usize {
        self.tail[n.idx()] as usize
    }

    /// Bisection edge, younger vertex first.
    pub fn bse(&self, n: NodeId) -> [VertexId; 2] {
        let (i, j) = bse_from_tail(self.tail_start(n), self.dim);
        let s = self.simplex(n);
        [s[i], s[j]]
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        let p = self.parent[n.idx()];
        (p != NONE).then_some(NodeId(p))
    }

    pub fn children(&self, n: NodeId) -> Option<[NodeId; 2]> {
        let c = self.children[n.idx()];
        (c[0] != NONE).then_some([NodeId(c[0]), NodeId(c[1])])
    }

    pub fn root_of(&self, mut n: NodeId) -> NodeId {
        while let Some(p) = self.parent(n) {
            n = p;
        }
        n
    }

    pub fn point(&self, v: VertexId) -> &DyadicPoint {
        &self.points[v.idx()]
    }

    pub fn vertex_gen(&self, v: VertexId) -> i64 {
        self.vgen[v.idx()]
    }

    pub fn vertex_level(&self, v: VertexId) -> i64 {
        level_of(self.vgen[v.idx()], self.dim)
    }

    /// Endpoints of the edge whose bisection created `v`; `None` for seed vertices.
    pub fn vertex_origin(&self, v: VertexId) -> Option<[VertexId; 2]> {
        let o = self.origin[v.idx()];
        (o[0] != NONE).then_some([VertexId(o[0]), VertexId(o[1])])
    }

    /// Seed vertices spanning the smallest closed seed face containing `v`.
    pub fn carrier(&self, v: VertexId) -> &[u32] {
        &self.carrier[v.idx()]
    }

    pub fn find_vertex(&self, p: &DyadicPoint) -> Option<VertexId> {
        self.point_index.get(p).map(|&v| VertexId(v))
    }

    /// Midpoint vertex of an edge, if that edge has been bisected.
    pub fn midpoint_of(&self, a: VertexId, b: VertexId) -> Option<VertexId> {
        self.midpoints.get(&edge_key(a, b)).map(|&v| VertexId(v))
    }

    fn midpoint_vertex(&mut self, a: VertexId, b: VertexId, gen: i64) -> Result<VertexId, ForestError> {
        let key = edge_key(a, b);
        let v = match self.midpoints.get(&key) {
            Some(&m) => m,
            None => {
                let p = self.points[a.idx()].midpoint(&self.points[b.idx()]);
                let m = match self.point_index.get(&p) {
                    Some(&m) => m,
                    None => {
                        let m = self.points.len() as u32;
                        let c = union_sorted(&self.carrier[a.idx()], &self.carrier[b.idx()]);
                        self.point_index.insert(p.clone(), m);
                        self.points.push(p);
                        self.vgen.push(gen);
                        self.origin.push([a.0.min(b.0), a.0.max(b.0)]);
                        self.carrier.push(c);
                        m
                    }
                };
                self.midpoints.insert(key, m);
                m
            }
        };
        let found = self.vgen[v as usize];
        if found != gen {
            return Err(ForestError::GenerationConflict {
                vertex: v,
                expected: gen,
                found,
            });
        }
        Ok(VertexId(v))
    }

    /// Children of `n`, creating them on first use.
    pub fn bisect(&mut self, n: NodeId) -> Result<[NodeId; 2], ForestError> {
        if !self.contains_node(n) {
            return Err(ForestError::UnknownNode(n.0));
        }
        if let Some(c) = self.children(n) {
            return Ok(c);
        }
        let d = self.dim;
        let (i, j) = bse_from_tail(self.tail_start(n), d);
        let s: SmallVec<[VertexId; 9]> = self.simplex(n).into();
        debug_assert_eq!((i, j), crate::bisect::generation_bse(&self.simplex_gens(n)));
        let b = self.midpoint_vertex(s[i], s[j], self.generation(n) + 1)?;
        let mut kids = [NodeId(0); 2];
        for (k, skip) in [i, j].into_iter().enumerate() {
            let mut c: SmallVec<[VertexId; 9]> = SmallVec::with_capacity(d + 1);
            c.push(b);
            c.extend(s.iter().enumerate().filter(|&(p, _)| p != skip).map(|(_, &v)| v));
            kids[k] = self.push_node(&c, n.0);
        }
        self.children[n.idx()] = [kids[0].0, kids[1].0];
        Ok(kids)
    }

    fn check_same(&self, t: &Triangulation) -> Result<(), ForestError> {
        if t.forest_id != self.id {
            return Err(ForestError::ForestMismatch);
        }
        Ok(())
    }

    /// Membership bitmap of `forest(T)`: leaves and all their ancestors.
    pub fn forest_of(&self, t: &Triangulation) -> FixedBitSet {
        let mut set = FixedBitSet::with_capacity(self.num_nodes());
        for leaf in t.leaves() {
            let mut n = leaf;
            loop {
                if set.contains(n.idx()) {
                    break;
                }
                set.insert(n.idx());
                match self.parent(n) {
                    Some(p) => n = p,
                    None => break,
                }
            }
        }
        set
    }

    fn leaves_of_forest_set(&self, set: &FixedBitSet) -> Triangulation {
        let leaves: Vec<NodeId> = set
            .ones()
            .filter(|&n| match self.children(NodeId(n as u32)) {
                Some([a, _]) => !set.contains(a.idx()),
                None => true,
            })
            .map(|n| NodeId(n as u32))
            .collect();
        Triangulation::from_leaves(self, leaves)
    }
}

/// A leaf set over one forest.
#[derive(Clone, Debug)]
pub struct Triangulation {
    forest_id: u64,
    leaves: FixedBitSet,
}

impl PartialEq for Triangulation {
    fn eq(&self, other: &Self) -> bool {
        self.forest_id == other.forest_id && self.leaves.ones().eq(other.leaves.ones())
    }
}

impl Eq for Triangulation {}

impl Triangulation {
    pub fn from_leaves(forest: &Forest, leaves: impl IntoIterator<Item = NodeId>) -> Self {
        let mut bits = FixedBitSet::with_capacity(forest.num_nodes());
        for n in leaves {
            bits.grow(n.idx() + 1);
            bits.insert(n.idx());
        }
        Triangulation {
            forest_id: forest.id,
            leaves: bits,
        }
    }

    pub fn forest_id(&self) -> u64 {
        self.forest_id
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.leaves.contains(n.idx())
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.leaves.ones().map(|n| NodeId(n as u32))
    }

    pub fn leaf_vec(&self) -> Vec<NodeId> {
        self.leaves().collect()
    }

    pub fn len(&self) -> usize {
        self.leaves.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `T1 ∨ T2`: leaves of `forest(T1) ∪ forest(T2)`.
pub fn join(forest: &Forest, t1: &Triangulation, t2: &Triangulation) -> Result<Triangulation, ForestError> {
    forest.check_same(t1)?;
    forest.check_same(t2)?;
    let mut a = forest.forest_of(t1);
    a.union_with(&forest.forest_of(t2));
    Ok(forest.leaves_of_forest_set(&a))
}

/// `T1 ∧ T2`: leaves of `forest(T1) ∩ forest(T2)`.
pub fn meet(forest: &Forest, t1: &Triangulation, t2: &Triangulation) -> Result<Triangulation, ForestError> {
    forest.check_same(t1)?;
    forest.check_same(t2)?;
    let mut a = forest.forest_of(t1);
    a.intersect_with(&forest.forest_of(t2));
    Ok(forest.leaves_of_forest_set(&a))
}

/// `t1 ≤ t2`, i.e. `t2` refines `t1`.
pub fn is_refinement(forest: &Forest, t1: &Triangulation, t2: &Triangulation) -> Result<bool, ForestError> {
    forest.check_same(t1)?;
    forest.check_same(t2)?;
    let a = forest.forest_of(t1);
    let b = forest.forest_of(t2);
    Ok(a.is_subset(&b))
}

/// Mutable refinement state: a leaf set plus vertex-to-leaf incidence, for
/// fast closure. One writer per forest.
pub struct Refiner<'a> {
    forest: &'a mut Forest,
    leaves: FixedBitSet,
    leaf_list: Vec<NodeId>,
    leaf_pos: Vec<u32>,
    incidence: Vec<SmallVec<[NodeId; 8]>>,
    budget: u64,
    total_bisections: u64,
}

impl<'a> Refiner<'a> {
    pub fn new(forest: &'a mut Forest, tria: &Triangulation) -> Result<Self, ForestError> {
        forest.check_same(tria)?;
        let mut r = Refiner {
            leaves: FixedBitSet::with_capacity(forest.num_nodes()),
            leaf_list: Vec::new(),
            leaf_pos: vec![NONE; forest.num_nodes()],
            incidence: vec![SmallVec::new(); forest.num_vertices()],
            forest,
            budget: DEFAULT_BUDGET,
            total_bisections: 0,
        };
        for n in tria.leaves() {
            r.add_leaf(n);
        }
        Ok(r)
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn set_budget(&mut self, budget: u64) {
        self.budget = budget;
    }

    pub fn forest(&self) -> &Forest {
        self.forest
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf_list.len()
    }

    /// Leaves in insertion-dependent order; stable for a fixed operation sequence.
    pub fn leaf_list(&self) -> &[NodeId] {
        &self.leaf_list
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        self.leaves.contains(n.idx())
    }

    pub fn total_bisections(&self) -> u64 {
        self.total_bisections
    }

    pub fn triangulation(&self) -> Triangulation {
        Triangulation {
            forest_id: self.forest.id,
            leaves: self.leaves.clone(),
        }
    }

    pub fn into_triangulation(self) -> Triangulation {
        Triangulation {
            forest_id: self.forest.id,
            leaves: self.leaves,
        }
    }

    /// Leaves containing vertex `v`.
    pub fn vertex_patch(&self, v: VertexId) -> &[NodeId] {
        self.incidence.get(v.idx()).map_or(&[], |x| x.as_slice())
    }

    fn add_leaf(&mut self, n: NodeId) {
        if self.leaves.len() <= n.idx() {
            self.leaves.grow(self.forest.num_nodes().max(n.idx() + 1));
        }
        if self.leaf_pos.len() <= n.idx() {
            self.leaf_pos.resize(self.forest.num_nodes().max(n.idx() + 1), NONE);
        }
        if self.incidence.len() < self.forest.num_vertices() {
            self.incidence.resize(self.forest.num_vertices(), SmallVec::new());
        }
        self.leaves.insert(n.idx());
        self.leaf_pos[n.idx()] = self.leaf_list.len() as u32;
        self.leaf_list.push(n);
        for &v in self.forest.simplex(n) {
            self.incidence[v.idx()].push(n);
        }
    }

    fn remove_leaf(&mut self, n: NodeId) {
        self.leaves.set(n.idx(), false);
        let pos = self.leaf_pos[n.idx()] as usize;
        self.leaf_list.swap_remove(pos);
        if pos < self.leaf_list.len() {
            self.leaf_pos[self.leaf_list[pos].idx()] = pos as u32;
        }
        self.leaf_pos[n.idx()] = NONE;
        let d = self.forest.dim;
        for k in 0..=d {
            let v = self.forest.simplex(n)[k];
            let inc = &mut self.incidence[v.idx()];
            let p = inc.iter().position(|&x| x == n).expect("incidence out of sync");
            inc.swap_remove(p);
        }
    }

    /// Replaces a leaf by its children without any closure.
    pub fn split_leaf(&mut self, n: NodeId) -> Result<[NodeId; 2], ForestError> {
        if !self.is_leaf(n) {
            return Err(ForestError::NotALeaf(n.0));
        }
        let kids = self.forest.bisect(n)?;
        self.remove_leaf(n);
        self.add_leaf(kids[0]);
        self.add_leaf(kids[1]);
        self.total_bisections += 1;
        Ok(kids)
    }

    /// A leaf has a hanging vertex iff one of its edges was bisected and the
    /// midpoint is a vertex of the current leaf set.
    pub fn hanging_vertex(&self, n: NodeId) -> Option<VertexId> {
        let s = self.forest.simplex(n);
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                if let Some(m) = self.forest.midpoint_of(s[i], s[j]) {
                    if !self.vertex_patch(m).is_empty() {
                        return Some(m);
                    }
                }
            }
        }
        None
    }

    /// Leaves containing both endpoints of an edge.
    pub fn edge_patch(&self, a: VertexId, b: VertexId) -> SmallVec<[NodeId; 16]> {
        let (a, b) = if self.vertex_patch(a).len() <= self.vertex_patch(b).len() {
            (a, b)
        } else {
            (b, a)
        };
        self.vertex_patch(a)
            .iter()
            .copied()
            .filter(|&t| self.forest.simplex(t).contains(&b))
            .collect()
    }

    /// Bisects `target` and then every leaf that becomes nonconforming, in
    /// `(generation, node id)` order. Returns the number of bisections.
    pub fn bisect_with_closure(&mut self, target: NodeId) -> Result<u64, ForestError> {
        if !self.is_leaf(target) {
            return Err(ForestError::NotALeaf(target.0));
        }
        let mut queue: BTreeSet<(i64, u32)> = BTreeSet::new();
        queue.insert((self.forest.generation(target), target.0));
        let mut count = 0u64;
        while let Some((_, id)) = queue.pop_first() {
            let t = NodeId(id);
            if !self.is_leaf(t) {
                continue;
            }
            if t != target && self.hanging_vertex(t).is_none() {
                continue;
            }
            if count >= self.budget {
                return Err(ForestError::BudgetExceeded { budget: self.budget });
            }
            let [a, b] = self.forest.bse(t);
            let kids = self.split_leaf(t)?;
            count += 1;
            for k in kids {
                queue.insert((self.forest.generation(k), k.0));
            }
            for n in self.edge_patch(a, b) {
                queue.insert((self.forest.generation(n), n.0));
            }
        }
        Ok(count)
    }

    /// Bisects every marked leaf at least once (marks already bisected by an
    /// earlier closure are skipped).
    pub fn refine_marked(&mut self, marks: &[NodeId]) -> Result<(), ForestError> {
        if let Some(m) = marks.iter().find(|m| !self.is_leaf(**m)) {
            return Err(ForestError::NotALeaf(m.0));
        }
        for &m in marks {
            if self.is_leaf(m) {
                self.bisect_with_closure(m)?;
            }
        }
        Ok(())
    }

    /// `steps` rounds of bisecting all leaves of the round's start.
    pub fn uniform(&mut self, steps: usize) -> Result<(), ForestError> {
        for _ in 0..steps {
            let mut marks = self.leaf_list.clone();
            marks.sort_unstable();
            self.refine_marked(&marks)?;
        }
        Ok(())
    }

    /// Uniformly random leaf, drawn as `next_u64() % leaves`.
    pub fn random_leaf<R: Rng>(&self, rng: &mut R) -> NodeId {
        // Leaf list order depends only on the operation history, so this is reproducible.
        let i = (rng.next_u64() % self.leaf_list.len() as u64) as usize;
        self.leaf_list[i]
    }

    /// `k` closures of uniformly drawn random leaves.
    pub fn random_refine<R: Rng>(&mut self, rng: &mut R, k: usize) -> Result<(), ForestError> {
        for _ in 0..k {
            let t = self.random_leaf(rng);
            self.bisect_with_closure(t)?;
        }
        Ok(())
    }
}

/// Bisects `target` with conforming closure.
pub fn bisect_with_closure(
    forest: &mut Forest,
    tria: &Triangulation,
    target: NodeId,
) -> Result<Triangulation, ForestError> {
    let mut r = Refiner::new(forest, tria)?;
    r.bisect_with_closure(target)?;
    Ok(r.into_triangulation())
}

pub fn refine_marked(
    forest: &mut Forest,
    tria: &Triangulation,
    marks: &[NodeId],
) -> Result<Triangulation, ForestError> {
    let mut r = Refiner::new(forest, tria)?;
    r.refine_marked(marks)?;
    Ok(r.into_triangulation())
}

pub fn uniform_refine(forest: &mut Forest, tria: &Triangulation, steps: usize) -> Result<Triangulation, ForestError> {
    let mut r = Refiner::new(forest, tria)?;
    r.uniform(steps)?;
    Ok(r.into_triangulation())
}

/// Dense leaf numbering plus vertex → leaf incidence in CSR form.
#[derive(Debug, Clone)]
pub struct MeshIndex {
    pub leaves: Vec<NodeId>,
    dense: Vec<u32>,
    offsets: Vec<u32>,
    incident: Vec<u32>,
}

impl MeshIndex {
    pub fn new(forest: &Forest, tria: &Triangulation) -> Result<MeshIndex, ForestError> {
        forest.check_same(tria)?;
        let leaves = tria.leaf_vec();
        let mut dense = vec![NONE; forest.num_nodes()];
        let mut counts = vec![0u32; forest.num_vertices() + 1];
        for (i, &n) in leaves.iter().enumerate() {
            if !forest.contains_node(n) {
                return Err(ForestError::UnknownNode(n.0));
            }
            dense[n.idx()] = i as u32;
            for v in forest.simplex(n) {
                counts[v.idx() + 1] += 1;
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut incident = vec![0u32; *counts.last().unwrap() as usize];
        for (i, &n) in leaves.iter().enumerate() {
            for v in forest.simplex(n) {
                incident[fill[v.idx()] as usize] = i as u32;
                fill[v.idx()] += 1;
            }
        }
        Ok(MeshIndex {
            leaves,
            dense,
            offsets: counts,
            incident,
        })
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Dense index of a leaf node.
    pub fn dense(&self, n: NodeId) -> Option<usize> {
        self.dense.get(n.idx()).filter(|&&x| x != NONE).map(|&x| x as usize)
    }

    /// Dense indices of leaves containing `v`.
    pub fn vertex_leaves(&self, v: VertexId) -> &[u32] {
        let (a, b) = (self.offsets[v.idx()] as usize, self.offsets[v.idx() + 1] as usize);
        &self.incident[a..b]
    }

    pub fn is_used(&self, v: VertexId) -> bool {
        self.offsets[v.idx()] != self.offsets[v.idx() + 1]
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Vertices incident to at least one leaf.
    pub fn used_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.num_vertices()).map(|v| VertexId(v as u32)).filter(|&v| self.is_used(v))
    }
}

/// First reason a leaf set is not conforming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConformityViolation {
    /// `vertex` (a vertex of `other`) is the midpoint of an edge of `leaf`.
    HangingVertex { leaf: NodeId, other: NodeId, vertex: VertexId },
    /// A facet shared by more than two leaves.
    OverfullFacet { facet: Vec<VertexId>, count: usize },
    /// An interior facet with no partner on the other side.
    UnmatchedFacet { leaf: NodeId, facet: Vec<VertexId> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformityReport {
    pub conforming: bool,
    pub witness: Option<ConformityViolation>,
}

/// Hanging-midpoint scan plus facet hashing with a seed-boundary test for unmatched facets.
pub fn is_conforming(forest: &Forest, tria: &Triangulation, exec: ExecPolicy) -> Result<ConformityReport, ForestError> {
    let idx = MeshIndex::new(forest, tria)?;
    let hanging = exec.find_map_first(&idx.leaves, |&n| {
        let s = forest.simplex(n);
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                if let Some(m) = forest.midpoint_of(s[i], s[j]) {
                    if m.idx() < idx.num_vertices() && idx.is_used(m) {
                        let other = idx.leaves[idx.vertex_leaves(m)[0] as usize];
                        return Some(ConformityViolation::HangingVertex { leaf: n, other, vertex: m });
                    }
                }
            }
        }
        None
    });
    if let Some(w) = hanging {
        return Ok(ConformityReport {
            conforming: false,
            witness: Some(w),
        });
    }
    let d = forest.dim();
    let mut facets: FxHashMap<SmallVec<[VertexId; 8]>, (u32, NodeId)> = FxHashMap::default();
    for &n in &idx.leaves {
        let s = forest.simplex(n);
        for skip in 0..=d {
            let mut f: SmallVec<[VertexId; 8]> =
                s.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
            f.sort_unstable();
            let e = facets.entry(f).or_insert((0, n));
            e.0 += 1;
        }
    }
    let boundary = seed_boundary_facets(forest.seed());
    let mut witness = None;
    let mut keys: Vec<_> = facets.iter().collect();
    keys.sort_by(|a, b| a.0.cmp(b.0));
    for (f, &(count, leaf)) in keys {
        if count > 2 {
            witness = Some(ConformityViolation::OverfullFacet {
                facet: f.to_vec(),
                count: count as usize,
            });
            break;
        }
        if count == 1 {
            let mut u: SmallVec<[u32; 8]> = SmallVec::new();
            for v in f {
                u = union_sorted(&u, forest.carrier(*v)).into_iter().collect();
            }
            if !boundary.iter().any(|bf| u.iter().all(|x| bf.binary_search(x).is_ok())) {
                witness = Some(ConformityViolation::UnmatchedFacet {
                    leaf,
                    facet: f.to_vec(),
                });
                break;
            }
        }
    }
    Ok(ConformityReport {
        conforming: witness.is_none(),
        witness,
    })
}

/// Facets of the seed that belong to exactly one seed simplex, as sorted vertex lists.
pub fn seed_boundary_facets(seed: &SeedTriangulation) -> Vec<Vec<u32>> {
    let mut count: FxHashMap<Vec<u32>, u32> = FxHashMap::default();
    for s in seed.simplices() {
        for skip in 0..s.len() {
            let mut f: Vec<u32> = s.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
            f.sort_unstable();
            *count.entry(f).or_default() += 1;
        }
    }
    let mut out: Vec<Vec<u32>> = count.into_iter().filter(|(_, c)| *c == 1).map(|(f, _)| f).collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{kuhn_cube, kuhn_simplex};

    #[test]
    fn roots_of_kuhn_cubes() {
        for (d, n) in [(2, 2), (3, 6)] {
            let (f, t) = Forest::new(&kuhn_cube(d).unwrap()).unwrap();
            assert_eq!(t.len(), n);
            for r in t.leaves() {
                assert_eq!(f.generation(r), 0);
                assert_eq!(f.level(r), 0);
                assert_eq!(f.simplex_type(r), d);
                assert_eq!(f.tail_start(r), d);
            }
        }
        let (_, t) = Forest::new(&kuhn_simplex(3).unwrap()).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn closure_on_kuhn_square_bisects_both_roots() {
        let (mut f, t) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        let r0 = f.roots()[0];
        let t2 = bisect_with_closure(&mut f, &t, r0).unwrap();
        // The diagonal is the refinement edge of both roots.
        assert_eq!(t2.len(), 4);
        assert!(is_conforming(&f, &t2, ExecPolicy::Sequential).unwrap().conforming);
        assert_eq!(
            bisect_with_closure(&mut f, &t2, r0),
            Err(ForestError::NotALeaf(r0.0))
        );
    }

    #[test]
    fn hanging_vertex_witness() {
        let (mut f, t) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        let r0 = f.roots()[0];
        let r1 = f.roots()[1];
        let mut r = Refiner::new(&mut f, &t).unwrap();
        r.split_leaf(r0).unwrap();
        let bad = r.into_triangulation();
        let rep = is_conforming(&f, &bad, ExecPolicy::Sequential).unwrap();
        assert!(!rep.conforming);
        match rep.witness {
            Some(ConformityViolation::HangingVertex { leaf, vertex, .. }) => {
                assert_eq!(leaf, r1);
                assert_eq!(*f.point(vertex), DyadicPoint::new(vec![1.into(), 1.into()], 1));
            }
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn uniform_counts() {
        let (mut f, t) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        assert_eq!(uniform_refine(&mut f, &t, 0).unwrap(), t);
        let t2 = uniform_refine(&mut f, &t, 2).unwrap();
        assert_eq!(t2.len(), 8);
        let (mut f3, t3) = Forest::new(&kuhn_cube(3).unwrap()).unwrap();
        let u = uniform_refine(&mut f3, &t3, 3).unwrap();
        assert_eq!(u.len(), 48);
        assert!(u.leaves().all(|n| f3.generation(n) == 3));
    }

    #[test]
    fn lattice_basics() {
        let (mut f, t) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        let a = uniform_refine(&mut f, &t, 1).unwrap();
        let leaf = a.leaf_vec()[0];
        let b = bisect_with_closure(&mut f, &a, leaf).unwrap();
        assert_eq!(join(&f, &b, &b).unwrap(), b);
        assert_eq!(meet(&f, &b, &b).unwrap(), b);
        assert_eq!(meet(&f, &b, &t).unwrap(), t);
        assert_eq!(join(&f, &a, &b).unwrap(), b);
        assert!(is_refinement(&f, &t, &b).unwrap());
        assert!(is_refinement(&f, &a, &b).unwrap());
        assert!(!is_refinement(&f, &b, &a).unwrap());
        let (g, tg) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        assert_ne!(g.id(), f.id());
        assert_eq!(join(&f, &b, &tg), Err(ForestError::ForestMismatch));
    }

    #[test]
    fn carriers_and_origins() {
        let (mut f, t) = Forest::new(&kuhn_cube(3).unwrap()).unwrap();
        let r0 = f.roots()[0];
        let t1 = bisect_with_closure(&mut f, &t, r0).unwrap();
        assert_eq!(t1.len(), 12);
        let c = f.children(r0).unwrap()[0];
        let b = f.simplex(c)[0];
        assert_eq!(f.vertex_gen(b), 1);
        assert_eq!(f.carrier(b), &[0, 7]);
        assert_eq!(f.vertex_origin(b), Some([VertexId(0), VertexId(7)]));
        assert_eq!(f.vertex_origin(VertexId(3)), None);
    }

    #[test]
    fn budget_is_enforced() {
        let (mut f, t) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        let r0 = f.roots()[0];
        let mut r = Refiner::new(&mut f, &t).unwrap().with_budget(1);
        assert_eq!(
            r.bisect_with_closure(r0),
            Err(ForestError::BudgetExceeded { budget: 1 })
        );
    }
}
