//! Conforming bisection refinement of d-simplices (Maubach/Traxler family)
//! with exact dyadic coordinates, generation bookkeeping and a grading analyzer.

pub mod analysis;
pub mod arith;
pub mod auxtria;
pub mod bisect;
pub mod exec;
pub mod forest;
pub mod io;
pub mod seed;

pub use arith::{level_of, maubach_k, normm, simplex_volume, type_of, DyadicPoint};
pub use exec::ExecPolicy;
pub use forest::{Forest, NodeId, Refiner, Triangulation, VertexId};
pub use seed::{kuhn_cube, SeedTriangulation};
