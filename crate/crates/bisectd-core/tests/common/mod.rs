//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use bisectd_core::arith::barycentric;
use bisectd_core::bisect::{bisect_maubach, bisect_traxler, SortedSimplex};
use bisectd_core::forest::MeshIndex;
use bisectd_core::{DyadicPoint, Forest, Triangulation};
use num_traits::Signed;
use rand::Rng;

pub type PointSet = BTreeSet<DyadicPoint>;

pub fn corner(bits: &[usize], d: usize) -> DyadicPoint {
    let mut c = vec![0i64; d];
    for &b in bits {
        c[b] = 1;
    }
    DyadicPoint::from_ints(&c)
}

/// Kuhn simplex for permutation `pi` in Maubach order `[0, e_π1, e_π1+e_π2, …]`
/// together with the Kuhn-cube vertex generations.
pub fn kuhn_root(pi: &[usize]) -> (Vec<DyadicPoint>, Vec<i64>) {
    let d = pi.len();
    let mut pts = vec![corner(&[], d)];
    let mut gens = vec![-(d as i64)];
    for k in 1..=d {
        pts.push(corner(&pi[..k], d));
        gens.push(-(k as i64 - 1));
    }
    (pts, gens)
}

/// One simplex tracked by all three rules.
#[derive(Clone)]
pub struct Triple {
    pub gen: i64,
    pub maubach: Vec<DyadicPoint>,
    pub traxler: Vec<DyadicPoint>,
    pub sorted: Sorted,
}

/// Points sorted by strictly decreasing generation.
#[derive(Clone, Debug)]
pub struct Sorted {
    pub points: Vec<DyadicPoint>,
    pub gens: Vec<i64>,
}

impl Sorted {
    pub fn new(pairs: Vec<(DyadicPoint, i64)>) -> Self {
        let order = SortedSimplex::new(pairs.iter().enumerate().map(|(i, p)| (i, p.1)).collect()).unwrap();
        Sorted {
            points: order.vertices().iter().map(|&i| pairs[i].0.clone()).collect(),
            gens: order.gens().to_vec(),
        }
    }

    /// Generation-rule bisection: edge and children.
    pub fn bisect(&self) -> ([DyadicPoint; 2], [Sorted; 2]) {
        let s = SortedSimplex::new((0..self.points.len()).zip(self.gens.iter().copied()).collect()).unwrap();
        let (bis, kids) = s.bisect(|_, _| usize::MAX);
        let b = self.points[bis.bse[0]].midpoint(&self.points[bis.bse[1]]);
        let get = |i: usize| if i == usize::MAX { b.clone() } else { self.points[i].clone() };
        let child = |k: &SortedSimplex<usize>| Sorted {
            points: k.vertices().iter().map(|&i| get(i)).collect(),
            gens: k.gens().to_vec(),
        };
        (bis.bse.map(get), [child(&kids[0]), child(&kids[1])])
    }
}

pub struct StepCheck {
    pub same_edge: bool,
    pub same_children: bool,
}

fn set(v: &[DyadicPoint]) -> PointSet {
    v.iter().cloned().collect()
}

impl Triple {
    pub fn root(pi: &[usize]) -> Self {
        let (pts, gens) = kuhn_root(pi);
        Triple {
            gen: 0,
            maubach: pts.clone(),
            traxler: pts.clone(),
            sorted: Sorted::new(pts.into_iter().zip(gens).collect()),
        }
    }

    /// Bisects with all three rules; returns the comparison and the children
    /// (matched by point set, in the order of the generation rule).
    pub fn bisect(&self) -> (StepCheck, Option<[Triple; 2]>) {
        let (m_bse, m_children) = index_bisect(&self.maubach, |idx, f| bisect_maubach(idx, self.gen, f));
        let (x_bse, x_children) = index_bisect(&self.traxler, |idx, f| bisect_traxler(idx, self.gen, f));
        let m = (m_bse, m_children);
        let (g_bse, kids) = self.sorted.bisect();

        let e = set(&g_bse);
        let same_edge = set(&m.0) == e && set(&x_bse) == e;
        let gk = [set(&kids[0].points), set(&kids[1].points)];
        let find = |cs: &[Vec<DyadicPoint>; 2], s: &PointSet| cs.iter().position(|c| set(c) == *s);
        let mut out = Vec::new();
        let mut same_children = true;
        for (k, s) in gk.iter().enumerate() {
            match (find(&m.1, s), find(&x_children, s)) {
                (Some(a), Some(b)) => out.push(Triple {
                    gen: self.gen + 1,
                    maubach: m.1[a].clone(),
                    traxler: x_children[b].clone(),
                    sorted: kids[k].clone(),
                }),
                _ => same_children = false,
            }
        }
        let check = StepCheck { same_edge, same_children };
        let kids = if out.len() == 2 {
            let b = out.pop().unwrap();
            let a = out.pop().unwrap();
            Some([a, b])
        } else {
            None
        };
        (check, kids)
    }
}

/// Runs an index-based rule on explicit points; returns the edge and the children.
fn index_bisect(
    pts: &[DyadicPoint],
    rule: impl FnOnce(&[usize], &mut dyn FnMut(usize, usize) -> usize) -> bisectd_core::bisect::Bisection<usize>,
) -> ([DyadicPoint; 2], [Vec<DyadicPoint>; 2]) {
    let idx: Vec<usize> = (0..pts.len()).collect();
    let mut f = |_: usize, _: usize| usize::MAX;
    let r = rule(&idx, &mut f);
    let b = pts[r.bse[0]].midpoint(&pts[r.bse[1]]);
    let get = |i: usize| if i == usize::MAX { b.clone() } else { pts[i].clone() };
    (
        r.bse.map(get),
        r.children.map(|c| c.into_iter().map(get).collect()),
    )
}

/// Random descents from the Kuhn roots; calls `visit` on every simplex
/// before it is bisected. Returns `(bisections, edge mismatches, child mismatches)`.
pub fn random_descents<R: Rng>(
    d: usize,
    bisections: usize,
    depth: usize,
    rng: &mut R,
    mut visit: impl FnMut(&Triple),
) -> (usize, usize, usize) {
    let perms = permutations(d);
    let (mut done, mut bad_e, mut bad_c) = (0, 0, 0);
    while done < bisections {
        let mut t = Triple::root(&perms[rng.gen_range(0..perms.len())]);
        for _ in 0..depth {
            if done == bisections {
                break;
            }
            visit(&t);
            let (chk, kids) = t.bisect();
            done += 1;
            bad_e += usize::from(!chk.same_edge);
            bad_c += usize::from(!chk.same_children);
            match kids {
                Some(k) => t = k[rng.gen_range(0..2)].clone(),
                None => break,
            }
        }
    }
    (done, bad_e, bad_c)
}

pub fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(d - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, d - 1);
            out.push(q);
        }
    }
    out
}

/// Literal closure loop on explicit coordinates: bisect `target`, then while
/// some simplex contains a vertex of another simplex that is not one of its
/// own vertices, bisect it. Simplices are generation-sorted point lists.
pub struct ClosureOracle {
    pub simplices: Vec<Sorted>,
}

impl ClosureOracle {
    pub fn from_forest(f: &Forest, t: &Triangulation) -> Self {
        ClosureOracle {
            simplices: t
                .leaves()
                .map(|n| {
                    let pairs = f.simplex(n).iter().map(|&v| (f.point(v).clone(), f.vertex_gen(v))).collect();
                    Sorted::new(pairs)
                })
                .collect(),
        }
    }

    fn split(&mut self, i: usize) {
        let s = self.simplices.swap_remove(i);
        let (_, kids) = s.bisect();
        self.simplices.extend(kids);
    }

    fn hanging(&self) -> Option<usize> {
        let verts: PointSet = self.simplices.iter().flat_map(|s| s.points.iter().cloned()).collect();
        self.simplices.iter().position(|s| {
            let own = set(&s.points);
            verts.iter().any(|p| {
                !own.contains(p)
                    && barycentric(&s.points, p)
                        .map(|l| l.iter().all(|x| !x.is_negative()))
                        .unwrap_or(false)
            })
        })
    }

    pub fn bisect_with_closure(&mut self, target: &PointSet) {
        let i = self
            .simplices
            .iter()
            .position(|s| set(&s.points) == *target)
            .expect("target is a leaf");
        self.split(i);
        while let Some(j) = self.hanging() {
            self.split(j);
        }
    }

    pub fn leaf_sets(&self) -> BTreeSet<PointSet> {
        self.simplices.iter().map(|s| set(&s.points)).collect()
    }
}

pub fn leaf_sets(f: &Forest, t: &Triangulation) -> BTreeSet<PointSet> {
    t.leaves()
        .map(|n| f.simplex(n).iter().map(|&v| f.point(v).clone()).collect())
        .collect()
}

/// All-pairs vertex-sharing distances between the leaves of `idx` (Floyd–Warshall).
#[allow(clippy::needless_range_loop)]
pub fn floyd_warshall(f: &Forest, idx: &MeshIndex) -> Vec<Vec<u32>> {
    let n = idx.len();
    let inf = u32::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    let sets: Vec<BTreeSet<u32>> = idx.leaves.iter().map(|&t| f.simplex(t).iter().map(|v| v.0).collect()).collect();
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if i != j && !sets[i].is_disjoint(&sets[j]) {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i][k];
            if dik == inf {
                continue;
            }
            for j in 0..n {
                let c = dik + d[k][j];
                if c < d[i][j] {
                    d[i][j] = c;
                }
            }
        }
    }
    d
}

/// `s(T) = max_{T′} (level(T′) − δ(T, T′))` by one plain BFS per leaf over an
/// explicitly built leaf adjacency; `sources` selects the leaves evaluated.
pub fn brute_force_exponents(f: &Forest, idx: &MeshIndex, sources: &[usize], exec: bisectd_core::ExecPolicy) -> Vec<i64> {
    let n = idx.len();
    let adj: Vec<Vec<usize>> = exec.map_range(n, |i| {
        let mut a: Vec<usize> = f
            .simplex(idx.leaves[i])
            .iter()
            .flat_map(|&v| idx.vertex_leaves(v).iter().map(|&j| j as usize))
            .filter(|&j| j != i)
            .collect();
        a.sort_unstable();
        a.dedup();
        a
    });
    let levels: Vec<i64> = idx.leaves.iter().map(|&t| f.level(t)).collect();
    exec.map(sources, |&s| {
        let mut dist = vec![u32::MAX; n];
        dist[s] = 0;
        let mut q = std::collections::VecDeque::from([s]);
        let mut best = levels[s];
        while let Some(i) = q.pop_front() {
            best = best.max(levels[i] - dist[i] as i64);
            for &j in &adj[i] {
                if dist[j] == u32::MAX {
                    dist[j] = dist[i] + 1;
                    q.push_back(j);
                }
            }
        }
        best
    })
}
