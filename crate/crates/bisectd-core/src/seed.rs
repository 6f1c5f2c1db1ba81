//! Initial triangulations: Kuhn cubes, coloring checks, initial generations
//! and onboarding of uncolored seeds by `d` uniform refinements.

use rustc_hash::FxHashMap;
use smallvec::SmallVec;
use thiserror::Error;

use crate::arith::{simplex_volume, ArithError, DyadicPoint};
use crate::bisect::bisect_traxler;

pub const MAX_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeedError {
    #[error("unsupported dimension {0} (need 2..={MAX_DIM})")]
    Dimension(usize),
    #[error("vertex {vertex} has dimension {got}, expected {expected}")]
    PointDimension { vertex: usize, got: usize, expected: usize },
    #[error("simplex {simplex} has {got} vertices, expected {expected}")]
    SimplexSize { simplex: usize, got: usize, expected: usize },
    #[error("simplex {simplex} references unknown vertex {vertex}")]
    UnknownVertex { simplex: usize, vertex: u32 },
    #[error("simplex {simplex} repeats vertex {vertex}")]
    RepeatedVertex { simplex: usize, vertex: u32 },
    #[error("vertices {0} and {1} have the same coordinates")]
    DuplicatePoint(usize, usize),
    #[error("simplex {0} is degenerate")]
    Degenerate(usize),
    #[error("face {face:?} is shared by {count} simplices")]
    OverfullFace { face: Vec<u32>, count: usize },
    #[error("vertex {vertex} lies inside simplex {simplex} without being one of its vertices")]
    HangingVertex { vertex: u32, simplex: usize },
    #[error("seed is empty")]
    Empty,
    #[error("seed has no coloring")]
    Uncolored,
    #[error("coloring has {got} entries for {expected} vertices")]
    ColoringLength { got: usize, expected: usize },
    #[error("color {color} of vertex {vertex} is out of range 0..={max}")]
    ColorRange { vertex: usize, color: u8, max: usize },
    #[error("simplex {simplex} misses color {missing}")]
    MissingColor { simplex: usize, missing: usize },
    #[error("seed fails matching neighbor condition: uniform step {step} needs closure at simplex {simplex}")]
    MatchingNeighbor { step: usize, simplex: usize },
    #[error("onboarding produced simplex {simplex} without the full generation range")]
    OnboardingGenerations { simplex: usize },
}

/// Color-order violation witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoringViolation {
    pub simplex: usize,
    pub missing_color: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedTriangulation {
    dim: usize,
    points: Vec<DyadicPoint>,
    simplices: Vec<Vec<u32>>,
    colors: Option<Vec<u8>>,
}

impl SeedTriangulation {
    /// Validates structure and conformity; colors (if given) are only range-checked here.
    pub fn new(
        dim: usize,
        points: Vec<DyadicPoint>,
        simplices: Vec<Vec<u32>>,
        colors: Option<Vec<u8>>,
    ) -> Result<Self, SeedError> {
        let s = SeedTriangulation {
            dim,
            points,
            simplices,
            colors,
        };
        s.check_structure()?;
        s.check_conforming()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[DyadicPoint] {
        &self.points
    }

    pub fn simplices(&self) -> &[Vec<u32>] {
        &self.simplices
    }

    pub fn colors(&self) -> Option<&[u8]> {
        self.colors.as_deref()
    }

    pub fn is_colored(&self) -> bool {
        self.colors.is_some()
    }

    pub fn simplex_points(&self, s: usize) -> Vec<DyadicPoint> {
        self.simplices[s].iter().map(|&v| self.points[v as usize].clone()).collect()
    }

    fn check_structure(&self) -> Result<(), SeedError> {
        let d = self.dim;
        if !(2..=MAX_DIM).contains(&d) {
            return Err(SeedError::Dimension(d));
        }
        if self.simplices.is_empty() {
            return Err(SeedError::Empty);
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.dim() != d {
                return Err(SeedError::PointDimension {
                    vertex: i,
                    got: p.dim(),
                    expected: d,
                });
            }
        }
        let mut seen: FxHashMap<&DyadicPoint, usize> = FxHashMap::default();
        for (i, p) in self.points.iter().enumerate() {
            if let Some(j) = seen.insert(p, i) {
                return Err(SeedError::DuplicatePoint(j, i));
            }
        }
        for (si, s) in self.simplices.iter().enumerate() {
            if s.len() != d + 1 {
                return Err(SeedError::SimplexSize {
                    simplex: si,
                    got: s.len(),
                    expected: d + 1,
                });
            }
            for (k, &v) in s.iter().enumerate() {
                if v as usize >= self.points.len() {
                    return Err(SeedError::UnknownVertex { simplex: si, vertex: v });
                }
                if s[..k].contains(&v) {
                    return Err(SeedError::RepeatedVertex { simplex: si, vertex: v });
                }
            }
            match simplex_volume(&self.simplex_points(si)) {
                Ok(_) => {}
                Err(ArithError::Degenerate) => return Err(SeedError::Degenerate(si)),
                Err(_) => unreachable!("dimensions checked above"),
            }
        }
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(SeedError::ColoringLength {
                    got: c.len(),
                    expected: self.points.len(),
                });
            }
            if let Some((v, &col)) = c.iter().enumerate().find(|(_, &x)| x as usize > d) {
                return Err(SeedError::ColorRange { vertex: v, color: col, max: d });
            }
        }
        Ok(())
    }

    /// Face matching plus a vertex-in-simplex scan. Together these reject
    /// hanging vertices and overlapping simplices for the small seeds we accept.
    fn check_conforming(&self) -> Result<(), SeedError> {
        let mut faces: FxHashMap<SmallVec<[u32; 8]>, usize> = FxHashMap::default();
        for s in &self.simplices {
            for skip in 0..s.len() {
                let mut f: SmallVec<[u32; 8]> =
                    s.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
                f.sort_unstable();
                *faces.entry(f).or_default() += 1;
            }
        }
        if let Some((f, &c)) = faces.iter().find(|(_, &c)| c > 2) {
            return Err(SeedError::OverfullFace {
                face: f.to_vec(),
                count: c,
            });
        }
        let fpts: Vec<Vec<f64>> = self.points.iter().map(DyadicPoint::to_f64).collect();
        for (si, s) in self.simplices.iter().enumerate() {
            let (lo, hi) = bbox(s.iter().map(|&v| &fpts[v as usize]), self.dim);
            let pts = self.simplex_points(si);
            for (v, fp) in fpts.iter().enumerate() {
                if s.contains(&(v as u32)) {
                    continue;
                }
                if (0..self.dim).any(|i| fp[i] < lo[i] - 1e-9 || fp[i] > hi[i] + 1e-9) {
                    continue;
                }
                let bary = crate::arith::barycentric(&pts, &self.points[v])
                    .map_err(|_| SeedError::Degenerate(si))?;
                if bary.iter().all(|x| !num_traits::Signed::is_negative(x)) {
                    return Err(SeedError::HangingVertex {
                        vertex: v as u32,
                        simplex: si,
                    });
                }
            }
        }
        Ok(())
    }

    /// Every simplex must see all `d+1` colors.
    pub fn validate_coloring(&self) -> Result<(), ColoringViolation> {
        let colors = self.colors.as_ref().ok_or(ColoringViolation {
            simplex: 0,
            missing_color: 0,
        })?;
        for (si, s) in self.simplices.iter().enumerate() {
            let mut seen = [false; MAX_DIM + 1];
            for &v in s {
                seen[colors[v as usize] as usize] = true;
            }
            if let Some(missing) = (0..=self.dim).find(|&c| !seen[c]) {
                return Err(ColoringViolation {
                    simplex: si,
                    missing_color: missing,
                });
            }
        }
        Ok(())
    }

    /// Vertices of simplex `s` in the color order `(d, 0, 1, …, d−1)`.
    pub fn color_sorted(&self, s: usize) -> Option<Vec<u32>> {
        let colors = self.colors.as_ref()?;
        let d = self.dim;
        let mut out = vec![u32::MAX; d + 1];
        for &v in &self.simplices[s] {
            let c = colors[v as usize] as usize;
            let pos = if c == d { 0 } else { c + 1 };
            if out[pos] != u32::MAX {
                return None;
            }
            out[pos] = v;
        }
        Some(out)
    }

    /// `gen(v) = −c(v)`.
    pub fn assign_initial_generations(&self) -> Result<Vec<i64>, SeedError> {
        let colors = self.colors.as_ref().ok_or(SeedError::Uncolored)?;
        self.validate_coloring()
            .map_err(|w| SeedError::MissingColor {
                simplex: w.simplex,
                missing: w.missing_color,
            })?;
        Ok(colors.iter().map(|&c| -(c as i64)).collect())
    }

    /// Runs `d` uniform Traxler refinements on the stored vertex orders and
    /// returns the result as a colored seed (`color = −generation`).
    pub fn onboard_matching_neighbor(&self) -> Result<SeedTriangulation, SeedError> {
        let d = self.dim;
        let mut pts: Vec<DyadicPoint> = self.points.clone();
        let mut gens: Vec<i64> = vec![-(d as i64); pts.len()];
        let mut index: FxHashMap<DyadicPoint, u32> =
            pts.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
        let mut mids: FxHashMap<(u32, u32), u32> = FxHashMap::default();
        let mut cur = self.simplices.clone();
        for step in 1..=d {
            let g = -(d as i64) + step as i64;
            let mut next = Vec::with_capacity(cur.len() * 2);
            for s in &cur {
                let bis = bisect_traxler(s, (step - 1) as i64, |a, b| {
                    let key = (a.min(b), a.max(b));
                    if let Some(&m) = mids.get(&key) {
                        return m;
                    }
                    let p = pts[a as usize].midpoint(&pts[b as usize]);
                    let id = *index.entry(p.clone()).or_insert_with(|| {
                        pts.push(p);
                        gens.push(g);
                        (pts.len() - 1) as u32
                    });
                    mids.insert(key, id);
                    id
                });
                let [c1, c2] = bis.children;
                next.push(c1);
                next.push(c2);
            }
            // Every bisected edge has its midpoint in the mesh; any simplex still
            // carrying such an edge has a hanging vertex.
            for (si, s) in next.iter().enumerate() {
                for i in 0..s.len() {
                    for j in i + 1..s.len() {
                        let key = (s[i].min(s[j]), s[i].max(s[j]));
                        if mids.contains_key(&key) {
                            return Err(SeedError::MatchingNeighbor { step, simplex: si / 2 });
                        }
                    }
                }
            }
            cur = next;
        }
        // Compact to the used vertices, in order of first use.
        let mut remap: FxHashMap<u32, u32> = FxHashMap::default();
        let mut new_pts = Vec::new();
        let mut colors = Vec::new();
        let mut simplices = Vec::with_capacity(cur.len());
        for (si, s) in cur.iter().enumerate() {
            let mut seen = vec![false; d + 1];
            let mut out = Vec::with_capacity(d + 1);
            for &v in s {
                let c = (-gens[v as usize]) as usize;
                if c > d || seen[c] {
                    return Err(SeedError::OnboardingGenerations { simplex: si });
                }
                seen[c] = true;
                let id = *remap.entry(v).or_insert_with(|| {
                    new_pts.push(pts[v as usize].clone());
                    colors.push(c as u8);
                    (new_pts.len() - 1) as u32
                });
                out.push(id);
            }
            simplices.push(out);
        }
        SeedTriangulation::new(d, new_pts, simplices, Some(colors))
    }
}

fn bbox<'a>(pts: impl Iterator<Item = &'a Vec<f64>>, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in pts {
        for i in 0..d {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

/// Corner of the unit cube encoded by the bits of `mask` (bit i = coordinate i).
fn corner(mask: usize, d: usize) -> DyadicPoint {
    let c: Vec<i64> = (0..d).map(|i| ((mask >> i) & 1) as i64).collect();
    DyadicPoint::from_ints(&c)
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

/// The `d!` Kuhn simplices `[0, e_π1, e_π1+e_π2, …]` of `[0,1]^d`, colored by
/// `c(0) = d`, `c(v) = ‖v‖₁ − 1`. Vertex `i` is the corner with bit pattern `i`.
pub fn kuhn_cube(d: usize) -> Result<SeedTriangulation, SeedError> {
    if !(2..=MAX_DIM).contains(&d) {
        return Err(SeedError::Dimension(d));
    }
    let points: Vec<DyadicPoint> = (0..1usize << d).map(|m| corner(m, d)).collect();
    let colors: Vec<u8> = (0..1usize << d)
        .map(|m| if m == 0 { d as u8 } else { (m.count_ones() - 1) as u8 })
        .collect();
    let simplices = permutations(d)
        .into_iter()
        .map(|pi| {
            let mut mask = 0usize;
            let mut s = vec![0u32];
            for i in pi {
                mask |= 1 << i;
                s.push(mask as u32);
            }
            s
        })
        .collect();
    SeedTriangulation::new(d, points, simplices, Some(colors))
}

/// The single simplex `[0, e1, e1+e2, …]`, colored like the Kuhn cube.
pub fn kuhn_simplex(d: usize) -> Result<SeedTriangulation, SeedError> {
    if !(2..=MAX_DIM).contains(&d) {
        return Err(SeedError::Dimension(d));
    }
    let points: Vec<DyadicPoint> = (0..=d).map(|k| corner((1 << k) - 1, d)).collect();
    let colors = (0..=d).map(|k| if k == 0 { d as u8 } else { (k - 1) as u8 }).collect();
    SeedTriangulation::new(d, points, vec![(0..=d as u32).collect()], Some(colors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> DyadicPoint {
        DyadicPoint::from_ints(c)
    }

    #[test]
    fn kuhn_counts_and_colors() {
        let k2 = kuhn_cube(2).unwrap();
        assert_eq!(k2.simplices().len(), 2);
        for s in k2.simplices() {
            assert!(s.contains(&0) && s.contains(&3), "diagonal shared");
        }
        let k3 = kuhn_cube(3).unwrap();
        assert_eq!(k3.simplices().len(), 6);
        let c = k3.colors().unwrap();
        // (0,0,0), (1,0,0), (1,1,0), (1,1,1)
        assert_eq!([c[0], c[1], c[3], c[7]], [3, 0, 1, 2]);
        for d in 2..=6 {
            assert!(kuhn_cube(d).unwrap().validate_coloring().is_ok());
        }
        assert_eq!(kuhn_cube(1), Err(SeedError::Dimension(1)));
    }

    #[test]
    fn initial_generations_match_figure() {
        let k3 = kuhn_cube(3).unwrap();
        let g = k3.assign_initial_generations().unwrap();
        assert_eq!([g[0], g[1], g[3], g[7]], [-3, 0, -1, -2]);
        for s in 0..6 {
            let order = k3.color_sorted(s).unwrap();
            let gs: Vec<i64> = order.iter().map(|&v| g[v as usize]).collect();
            assert_eq!(gs, vec![-3, 0, -1, -2]);
            let gen_t = k3.simplices()[s].iter().map(|&v| g[v as usize]).max().unwrap();
            assert_eq!(gen_t, 0);
        }
    }

    #[test]
    fn bad_colorings() {
        let k = kuhn_cube(2).unwrap();
        let zero = SeedTriangulation::new(2, k.points().to_vec(), k.simplices().to_vec(), Some(vec![0; 4])).unwrap();
        assert!(zero.validate_coloring().is_err());
        // Two triangles sharing edge (1,0)-(0,1) with swapped colors across it:
        // the apexes get the same color on one side only.
        let pts = vec![p(&[0, 0]), p(&[1, 0]), p(&[0, 1]), p(&[1, 1])];
        let tris = vec![vec![0, 1, 2], vec![3, 1, 2]];
        let ok = SeedTriangulation::new(2, pts.clone(), tris.clone(), Some(vec![2, 0, 1, 2])).unwrap();
        assert!(ok.validate_coloring().is_ok());
        let swapped = SeedTriangulation::new(2, pts, tris, Some(vec![2, 0, 1, 1])).unwrap();
        assert_eq!(
            swapped.validate_coloring(),
            Err(ColoringViolation { simplex: 1, missing_color: 2 })
        );
    }

    #[test]
    fn structure_errors() {
        let pts = vec![p(&[0, 0]), p(&[1, 0]), p(&[2, 0])];
        assert_eq!(
            SeedTriangulation::new(2, pts, vec![vec![0, 1, 2]], None),
            Err(SeedError::Degenerate(0))
        );
        let pts = vec![p(&[0, 0]), p(&[2, 0]), p(&[0, 2]), p(&[1, 0]), p(&[1, 1])];
        // (1,0) hangs on the edge of the big triangle.
        let r = SeedTriangulation::new(2, pts, vec![vec![0, 1, 2], vec![3, 1, 4]], None);
        assert!(matches!(r, Err(SeedError::HangingVertex { .. })), "{r:?}");
    }

    #[test]
    fn onboarding_square_any_diagonal() {
        // Anti-diagonal square, vertex orders chosen arbitrarily.
        let pts = vec![p(&[0, 0]), p(&[1, 0]), p(&[0, 1]), p(&[1, 1])];
        let s = SeedTriangulation::new(2, pts, vec![vec![1, 0, 2], vec![1, 3, 2]], None).unwrap();
        let on = s.onboard_matching_neighbor().unwrap();
        assert_eq!(on.simplices().len(), 8);
        assert!(on.validate_coloring().is_ok());
    }

    #[test]
    fn onboarding_rejects_incompatible_edges() {
        // Refinement edges [v0,v2]: left triangle bisects the shared edge,
        // right one bisects its own boundary edge.
        let pts = vec![p(&[0, 0]), p(&[1, 0]), p(&[0, 1]), p(&[1, 1])];
        let s = SeedTriangulation::new(2, pts, vec![vec![1, 0, 2], vec![3, 1, 2]], None).unwrap();
        assert!(matches!(
            s.onboard_matching_neighbor(),
            Err(SeedError::MatchingNeighbor { step: 1, .. })
        ));
    }

    #[test]
    fn onboarding_kuhn_gives_tucker_whitney_counts() {
        for d in 2..=4 {
            let on = kuhn_cube(d).unwrap().onboard_matching_neighbor().unwrap();
            let fact: usize = (1..=d).product();
            assert_eq!(on.simplices().len(), fact << d);
            assert!(on.validate_coloring().is_ok());
        }
    }

    #[test]
    fn kuhn_single_simplex() {
        let s = kuhn_simplex(3).unwrap();
        assert_eq!(s.simplices().len(), 1);
        assert!(s.validate_coloring().is_ok());
    }
}
