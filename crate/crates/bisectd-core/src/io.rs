//! Native JSON mesh documents, legacy VTK export and report serialization.
//!
//! Native documents never contain floats: coordinates are dyadic, stored as
//! decimal-string numerators over a power-of-two exponent. A document with a
//! forest section is loaded by replaying every bisection, so a corrupted
//! genealogy surfaces as a named invariant failure.

use std::fmt::Write as _;
use std::path::Path;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::arith::DyadicPoint;
use crate::exec::ExecPolicy;
use crate::forest::{is_conforming, Forest, ForestError, NodeId, Triangulation, VertexId};
use crate::seed::{SeedError, SeedTriangulation};

pub const FORMAT: &str = "bisectd-mesh";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("unsupported format {format:?} version {version}")]
    Version { format: String, version: u64 },
    #[error("vertex {vertex}: coordinate numerators must be decimal integer strings")]
    NonDyadic { vertex: usize },
    #[error("invariant `{name}` violated: {detail}")]
    Invariant { name: &'static str, detail: String },
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

fn invariant(name: &'static str, detail: impl Into<String>) -> IoError {
    IoError::Invariant {
        name,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexDoc {
    pub numerators: Vec<String>,
    pub exponent: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub vertices: Vec<u32>,
    pub parent: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestDoc {
    /// The first `seed_vertices` vertices are the seed points.
    pub seed_vertices: u32,
    /// All nodes in id order; roots have no parent.
    pub nodes: Vec<NodeDoc>,
    /// Node ids of the triangulation.
    pub leaves: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafAttributes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<Vec<i64>>,
}

/// The on-disk document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub format: String,
    pub version: u32,
    pub dimension: usize,
    pub vertices: Vec<VertexDoc>,
    /// Vertex lists of the triangulation's simplices (the seed when there is no forest).
    pub simplices: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest: Option<ForestDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_attributes: Option<LeafAttributes>,
}

fn vertex_doc(p: &DyadicPoint, generation: Option<i64>, color: Option<u8>) -> VertexDoc {
    VertexDoc {
        numerators: p.numerators().iter().map(BigInt::to_string).collect(),
        exponent: p.exponent(),
        generation,
        color,
    }
}

impl MeshDocument {
    pub fn from_seed(seed: &SeedTriangulation) -> Self {
        let gens = seed.assign_initial_generations().ok();
        MeshDocument {
            format: FORMAT.into(),
            version: VERSION,
            dimension: seed.dim(),
            vertices: seed
                .points()
                .iter()
                .enumerate()
                .map(|(i, p)| vertex_doc(p, gens.as_ref().map(|g| g[i]), seed.colors().map(|c| c[i])))
                .collect(),
            simplices: seed.simplices().to_vec(),
            forest: None,
            leaf_attributes: None,
        }
    }

    /// Full genealogy plus the leaves of `tria` (sorted by node id).
    pub fn from_forest(forest: &Forest, tria: &Triangulation, layer: Option<Vec<i64>>) -> Self {
        let seed = forest.seed();
        let k = seed.points().len();
        let vertices = (0..forest.num_vertices())
            .map(|v| {
                let vid = VertexId(v as u32);
                let color = if v < k { seed.colors().map(|c| c[v]) } else { None };
                vertex_doc(forest.point(vid), Some(forest.vertex_gen(vid)), color)
            })
            .collect();
        let nodes = (0..forest.num_nodes())
            .map(|n| {
                let n = NodeId(n as u32);
                NodeDoc {
                    vertices: forest.simplex(n).iter().map(|v| v.0).collect(),
                    parent: forest.parent(n).map(|p| p.0),
                }
            })
            .collect();
        let leaves = tria.leaf_vec();
        MeshDocument {
            format: FORMAT.into(),
            version: VERSION,
            dimension: forest.dim(),
            vertices,
            simplices: leaves
                .iter()
                .map(|&t| forest.simplex(t).iter().map(|v| v.0).collect())
                .collect(),
            forest: Some(ForestDoc {
                seed_vertices: k as u32,
                nodes,
                leaves: leaves.iter().map(|n| n.0).collect(),
            }),
            leaf_attributes: layer.map(|l| LeafAttributes { layer: Some(l) }),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    /// Parses and checks the envelope; rejects non-string coordinates.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let v: Value = serde_json::from_str(text).map_err(|e| IoError::Malformed(e.to_string()))?;
        let format = v.get("format").and_then(Value::as_str).unwrap_or_default();
        let version = v.get("version").and_then(Value::as_u64).unwrap_or(0);
        if format != FORMAT || version != VERSION as u64 {
            return Err(IoError::Version {
                format: format.into(),
                version,
            });
        }
        if let Some(vs) = v.get("vertices").and_then(Value::as_array) {
            for (i, vx) in vs.iter().enumerate() {
                let nums = vx.get("numerators").and_then(Value::as_array);
                if nums.is_some_and(|a| a.iter().any(|x| !x.is_string())) {
                    return Err(IoError::NonDyadic { vertex: i });
                }
            }
        }
        serde_json::from_value(v).map_err(|e| IoError::Malformed(e.to_string()))
    }

    fn points(&self) -> Result<Vec<DyadicPoint>, IoError> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if v.numerators.len() != self.dimension {
                    return Err(IoError::Malformed(format!(
                        "vertex {i} has {} coordinates, expected {}",
                        v.numerators.len(),
                        self.dimension
                    )));
                }
                let nums = v
                    .numerators
                    .iter()
                    .map(|s| s.parse::<BigInt>().map_err(|_| IoError::NonDyadic { vertex: i }))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(DyadicPoint::new(nums, v.exponent))
            })
            .collect()
    }
}

/// A loaded document.
#[derive(Debug)]
pub struct LoadedMesh {
    pub forest: Forest,
    pub tria: Triangulation,
    pub layer: Option<Vec<i64>>,
}

/// Builds the seed part of a document.
pub fn seed_from_document(doc: &MeshDocument) -> Result<SeedTriangulation, IoError> {
    let points = doc.points()?;
    let (k, simplices) = match &doc.forest {
        None => (points.len(), doc.simplices.clone()),
        Some(f) => (
            f.seed_vertices as usize,
            f.nodes
                .iter()
                .filter(|n| n.parent.is_none())
                .map(|n| n.vertices.clone())
                .collect(),
        ),
    };
    if k > points.len() {
        return Err(IoError::Malformed("seed_vertices exceeds vertex count".into()));
    }
    let colors: Vec<Option<u8>> = doc.vertices[..k].iter().map(|v| v.color).collect();
    let colors = if colors.iter().all(Option::is_some) {
        Some(colors.into_iter().map(Option::unwrap).collect())
    } else if colors.iter().all(Option::is_none) {
        None
    } else {
        return Err(IoError::Malformed("colors given for some seed vertices only".into()));
    };
    let seed = SeedTriangulation::new(doc.dimension, points[..k].to_vec(), simplices, colors)?;
    if let Ok(gens) = seed.assign_initial_generations() {
        for (i, g) in gens.iter().enumerate() {
            if let Some(stored) = doc.vertices[i].generation {
                if stored != *g {
                    return Err(invariant(
                        "vertex generation",
                        format!("seed vertex {i} stores {stored}, coloring gives {g}"),
                    ));
                }
            }
        }
    }
    Ok(seed)
}

/// Loads a document: seed-only documents give the seed's root triangulation;
/// documents with a forest are replayed and validated.
pub fn load_document(doc: &MeshDocument) -> Result<LoadedMesh, IoError> {
    let seed = seed_from_document(doc)?;
    let (mut forest, roots) = Forest::new(&seed)?;
    let layer = doc.leaf_attributes.as_ref().and_then(|a| a.layer.clone());
    let Some(fd) = &doc.forest else {
        if let Some(l) = &layer {
            if l.len() != roots.len() {
                return Err(IoError::Malformed("layer attribute length".into()));
            }
        }
        return Ok(LoadedMesh {
            forest,
            tria: roots,
            layer,
        });
    };
    let nroots = forest.roots().len();
    for (i, nd) in fd.nodes.iter().enumerate() {
        let n = NodeId(i as u32);
        if i < nroots {
            if nd.parent.is_some() {
                return Err(invariant("genealogy", format!("node {i} should be a root")));
            }
        } else {
            let p = nd
                .parent
                .filter(|&p| (p as usize) < i)
                .ok_or_else(|| invariant("genealogy", format!("node {i} needs an earlier parent")))?;
            let kids = match forest.bisect(NodeId(p)) {
                Ok(k) => k,
                Err(ForestError::GenerationConflict { .. }) => {
                    return Err(invariant("vertex generation", format!("replaying the bisection of node {p}")))
                }
                Err(e) => return Err(e.into()),
            };
            if !kids.contains(&n) {
                return Err(invariant("genealogy", format!("node {i} is not a child of node {p} on replay")));
            }
        }
        let got: Vec<u32> = forest.simplex(n).iter().map(|v| v.0).collect();
        if got != nd.vertices {
            return Err(invariant(
                "node vertices",
                format!("node {i} stores {:?}, replay gives {got:?}", nd.vertices),
            ));
        }
    }
    if forest.num_nodes() != fd.nodes.len() {
        return Err(invariant("genealogy", "node list is not closed under siblings"));
    }
    if forest.num_vertices() != doc.vertices.len() {
        return Err(invariant(
            "vertex count",
            format!("document has {}, replay creates {}", doc.vertices.len(), forest.num_vertices()),
        ));
    }
    let points = doc.points()?;
    for (i, (p, vd)) in points.iter().zip(&doc.vertices).enumerate() {
        let v = VertexId(i as u32);
        if forest.point(v) != p {
            return Err(invariant("vertex coordinates", format!("vertex {i}")));
        }
        if let Some(g) = vd.generation {
            if g != forest.vertex_gen(v) {
                return Err(invariant(
                    "vertex generation",
                    format!("vertex {i} stores {g}, replay gives {}", forest.vertex_gen(v)),
                ));
            }
        }
    }
    let tria = leaf_set(&forest, &fd.leaves)?;
    let stored: Vec<&Vec<u32>> = doc.simplices.iter().collect();
    let derived: Vec<Vec<u32>> = tria
        .leaves()
        .map(|t| forest.simplex(t).iter().map(|v| v.0).collect())
        .collect();
    if stored.len() != derived.len() || stored.iter().zip(&derived).any(|(a, b)| *a != b) {
        return Err(invariant("leaf simplices", "simplices disagree with forest leaves"));
    }
    let rep = is_conforming(&forest, &tria, ExecPolicy::Sequential)?;
    if let Some(w) = rep.witness {
        return Err(invariant("conformity", format!("{w:?}")));
    }
    if let Some(l) = &layer {
        if l.len() != tria.len() {
            return Err(IoError::Malformed("layer attribute length".into()));
        }
    }
    Ok(LoadedMesh { forest, tria, layer })
}

/// Checks that `ids` is a partition of the domain by forest nodes.
fn leaf_set(forest: &Forest, ids: &[u32]) -> Result<Triangulation, IoError> {
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invariant("leaf set", "leaf ids must be strictly increasing"));
    }
    let n = forest.num_nodes();
    let mut leaf = vec![false; n];
    for &i in ids {
        *leaf
            .get_mut(i as usize)
            .ok_or_else(|| invariant("leaf set", format!("unknown node {i}")))? = true;
    }
    let mut covered = vec![false; n];
    for i in (0..n).rev() {
        let kids = forest.children(NodeId(i as u32));
        let below = kids.is_some_and(|[a, b]| covered[a.idx()] && covered[b.idx()]);
        let any_below = kids.is_some_and(|[a, b]| covered[a.idx()] || covered[b.idx()]);
        if leaf[i] && any_below {
            return Err(invariant("leaf set", format!("leaf {i} overlaps its descendants")));
        }
        if !leaf[i] && any_below && !below {
            return Err(invariant("leaf set", format!("node {i} is only partly covered")));
        }
        covered[i] = leaf[i] || below;
    }
    if let Some(r) = forest.roots().iter().find(|r| !covered[r.idx()]) {
        return Err(invariant("leaf set", format!("root {} is not covered", r.0)));
    }
    Ok(Triangulation::from_leaves(forest, ids.iter().map(|&i| NodeId(i))))
}

pub fn load_mesh_str(text: &str) -> Result<LoadedMesh, IoError> {
    load_document(&MeshDocument::parse(text)?)
}

pub fn load_mesh(path: &Path) -> Result<LoadedMesh, IoError> {
    load_mesh_str(&std::fs::read_to_string(path)?)
}

pub fn save_mesh(forest: &Forest, tria: &Triangulation, layer: Option<Vec<i64>>, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, MeshDocument::from_forest(forest, tria, layer).to_json())?;
    Ok(())
}

pub fn save_seed(seed: &SeedTriangulation, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, MeshDocument::from_seed(seed).to_json())?;
    Ok(())
}

/// Legacy ASCII VTK of the leaves. Always writes `generation`, `level` and
/// `type` cell arrays plus any `extra` (one value per leaf, in leaf order).
/// Coordinates are rounded to `f64`. For `d ≥ 4` only the used vertices are
/// written (as vertex cells) and a warning is returned.
pub fn export_vtk(forest: &Forest, tria: &Triangulation, extra: &[(&str, Vec<i64>)]) -> (String, Option<String>) {
    let d = forest.dim();
    let leaves = tria.leaf_vec();
    let mut dense = vec![u32::MAX; forest.num_vertices()];
    let mut used = Vec::new();
    for &t in &leaves {
        for &v in forest.simplex(t) {
            if dense[v.idx()] == u32::MAX {
                dense[v.idx()] = 0;
                used.push(v);
            }
        }
    }
    used.sort_unstable();
    for (i, v) in used.iter().enumerate() {
        dense[v.idx()] = i as u32;
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\nbisectd mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", used.len());
    for &v in &used {
        let c = forest.point(v).to_f64();
        let xyz: Vec<String> = (0..3).map(|i| format!("{:?}", c.get(i).copied().unwrap_or(0.0))).collect();
        let _ = writeln!(s, "{}", xyz.join(" "));
    }
    let cell_type = match d {
        1 => Some(3),
        2 => Some(5),
        3 => Some(10),
        _ => None,
    };
    let Some(ct) = cell_type else {
        let _ = writeln!(s, "CELLS {} {}", used.len(), 2 * used.len());
        for i in 0..used.len() {
            let _ = writeln!(s, "1 {i}");
        }
        let _ = writeln!(s, "CELL_TYPES {}", used.len());
        for _ in 0..used.len() {
            s.push_str("1\n");
        }
        return (
            s,
            Some(format!("dimension {d} has no VTK cell type; exported the vertex skeleton only")),
        );
    };
    let _ = writeln!(s, "CELLS {} {}", leaves.len(), leaves.len() * (d + 2));
    for &t in &leaves {
        let ids: Vec<String> = forest.simplex(t).iter().map(|v| dense[v.idx()].to_string()).collect();
        let _ = writeln!(s, "{} {}", d + 1, ids.join(" "));
    }
    let _ = writeln!(s, "CELL_TYPES {}", leaves.len());
    for _ in &leaves {
        let _ = writeln!(s, "{ct}");
    }
    let _ = writeln!(s, "CELL_DATA {}", leaves.len());
    let base: [(&str, Vec<i64>); 3] = [
        ("generation", leaves.iter().map(|&t| forest.generation(t)).collect()),
        ("level", leaves.iter().map(|&t| forest.level(t)).collect()),
        ("type", leaves.iter().map(|&t| forest.simplex_type(t) as i64).collect()),
    ];
    for (name, vals) in base.iter().map(|(n, v)| (*n, v)).chain(extra.iter().map(|(n, v)| (*n, v))) {
        let _ = writeln!(s, "SCALARS {name} int 1\nLOOKUP_TABLE default");
        for x in vals {
            let _ = writeln!(s, "{x}");
        }
    }
    (s, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{uniform_refine, Refiner};
    use crate::seed::kuhn_cube;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seed_round_trip() {
        let seed = kuhn_cube(3).unwrap();
        let doc = MeshDocument::from_seed(&seed);
        let text = doc.to_json();
        let back = MeshDocument::parse(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(seed_from_document(&back).unwrap(), seed);
        assert_eq!(load_mesh_str(&text).unwrap().tria.len(), 6);
    }

    #[test]
    fn floats_and_versions_rejected() {
        let text = MeshDocument::from_seed(&kuhn_cube(2).unwrap()).to_json();
        let bad = text.replacen("\"0\"", "0.5", 1);
        assert!(matches!(load_mesh_str(&bad), Err(IoError::NonDyadic { vertex: 0 })));
        let bad = text.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(load_mesh_str(&bad), Err(IoError::Version { version: 2, .. })));
    }

    #[test]
    fn forest_round_trip_and_corruption() {
        let (mut f, t) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        let mut r = Refiner::new(&mut f, &t).unwrap();
        r.random_refine(&mut ChaCha8Rng::seed_from_u64(3), 100).unwrap();
        let u = r.into_triangulation();
        let text = MeshDocument::from_forest(&f, &u, None).to_json();
        let loaded = load_mesh_str(&text).unwrap();
        assert_eq!(loaded.forest.num_nodes(), f.num_nodes());
        assert_eq!(loaded.tria.leaf_vec(), u.leaf_vec());
        for v in 0..f.num_vertices() {
            let v = VertexId(v as u32);
            assert_eq!(loaded.forest.vertex_gen(v), f.vertex_gen(v));
        }
        assert_eq!(MeshDocument::from_forest(&loaded.forest, &loaded.tria, None).to_json(), text);

        let mut doc = MeshDocument::parse(&text).unwrap();
        let last = doc.vertices.len() - 1;
        *doc.vertices[last].generation.as_mut().unwrap() += 1;
        match load_document(&doc) {
            Err(IoError::Invariant { name, .. }) => assert_eq!(name, "vertex generation"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vtk_uniform_square() {
        let (mut f, t) = Forest::new(&kuhn_cube(2).unwrap()).unwrap();
        let u = uniform_refine(&mut f, &t, 2).unwrap();
        let (vtk, warn) = export_vtk(&f, &u, &[("layer", vec![7; 8])]);
        assert!(warn.is_none());
        assert!(vtk.contains("CELLS 8 32"));
        assert!(vtk.contains("CELL_TYPES 8"));
        assert!(vtk.contains("SCALARS layer int 1"));
        let (f4, t4) = Forest::new(&kuhn_cube(4).unwrap()).unwrap();
        let (vtk, warn) = export_vtk(&f4, &t4, &[]);
        assert!(warn.is_some());
        assert!(vtk.contains("CELLS 16 32"));
    }
}
