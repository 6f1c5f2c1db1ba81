//! Exact dyadic geometry and the generation/level/type arithmetic.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArithError {
    #[error("points have mismatched dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("simplex needs {expected} vertices, got {got}")]
    VertexCount { expected: usize, got: usize },
    #[error("degenerate simplex (zero volume)")]
    Degenerate,
}

/// `⌈gen/d⌉`, correct for negative generations.
pub fn level_of(gen: i64, d: usize) -> i64 {
    let d = d as i64;
    -Integer::div_floor(&(-gen), &d)
}

/// Position of `gen` inside its level cycle, in `1..=d`.
pub fn type_of(gen: i64, d: usize) -> usize {
    (gen - d as i64 * (level_of(gen, d) - 1)) as usize
}

/// Index `k` of the Maubach bisection edge `[v0, vk]`.
pub fn maubach_k(gen: i64, d: usize) -> usize {
    d - gen.rem_euclid(d as i64) as usize
}

/// Traxler's `γ = gen mod d`.
pub fn traxler_gamma(gen: i64, d: usize) -> usize {
    gen.rem_euclid(d as i64) as usize
}

/// A point with coordinates `numerators / 2^exponent`, kept canonical:
/// either `exponent == 0` or some numerator is odd.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicPoint {
    numerators: Vec<BigInt>,
    exponent: u32,
}

impl DyadicPoint {
    pub fn new(numerators: Vec<BigInt>, exponent: u32) -> Self {
        let mut p = DyadicPoint {
            numerators,
            exponent,
        };
        p.canonicalize();
        p
    }

    pub fn from_ints(coords: &[i64]) -> Self {
        DyadicPoint {
            numerators: coords.iter().map(|&c| BigInt::from(c)).collect(),
            exponent: 0,
        }
    }

    pub fn origin(d: usize) -> Self {
        DyadicPoint {
            numerators: vec![BigInt::zero(); d],
            exponent: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.numerators.len()
    }

    pub fn numerators(&self) -> &[BigInt] {
        &self.numerators
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    fn canonicalize(&mut self) {
        if self.exponent == 0 {
            return;
        }
        let tz = self
            .numerators
            .iter()
            .filter_map(|n| n.trailing_zeros())
            .min()
            .unwrap_or(u64::MAX);
        let shift = tz.min(self.exponent as u64);
        if shift > 0 {
            for n in &mut self.numerators {
                *n >>= shift as usize;
            }
            self.exponent -= shift as u32;
        }
        if self.numerators.iter().all(Zero::is_zero) {
            self.exponent = 0;
        }
    }

    /// Numerators rescaled to the (larger) exponent `k`.
    pub fn scaled_to(&self, k: u32) -> Vec<BigInt> {
        debug_assert!(k >= self.exponent);
        let shift = (k - self.exponent) as usize;
        self.numerators.iter().map(|n| n << shift).collect()
    }

    pub fn midpoint(&self, other: &DyadicPoint) -> DyadicPoint {
        assert_eq!(self.dim(), other.dim(), "midpoint of points in different dimensions");
        let k = self.exponent.max(other.exponent);
        let a = self.scaled_to(k);
        let b = other.scaled_to(k);
        DyadicPoint::new(a.into_iter().zip(b).map(|(x, y)| x + y).collect(), k + 1)
    }

    pub fn coord(&self, i: usize) -> BigRational {
        BigRational::new(
            self.numerators[i].clone(),
            BigInt::one() << self.exponent as usize,
        )
    }

    pub fn to_rationals(&self) -> Vec<BigRational> {
        (0..self.dim()).map(|i| self.coord(i)).collect()
    }

    /// Lossy conversion for diameters and exports.
    pub fn to_f64(&self) -> Vec<f64> {
        let scale = (-(self.exponent as f64)).exp2();
        self.numerators
            .iter()
            .map(|n| n.to_f64().unwrap_or(f64::NAN) * scale)
            .collect()
    }
}

impl fmt::Debug for DyadicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.numerators.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if self.exponent == 0 {
                write!(f, "{n}")?;
            } else {
                write!(f, "{n}/2^{}", self.exponent)?;
            }
        }
        write!(f, ")")
    }
}

/// `‖x‖∞ + ‖x‖₁ / d`.
pub fn normm(x: &[BigRational], d: usize) -> BigRational {
    let mut max = BigRational::zero();
    let mut sum = BigRational::zero();
    for xi in x {
        let a = xi.abs();
        if a > max {
            max = a.clone();
        }
        sum += a;
    }
    max + sum / BigRational::from_integer(BigInt::from(d))
}

/// Determinant of an integer matrix by fraction-free (Bareiss) elimination.
pub fn det_bareiss(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut sign = 1;
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&r| !m[r][k].is_zero()) else {
                return BigInt::zero();
            };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = v / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    let det = m[n - 1][n - 1].clone();
    if sign < 0 {
        -det
    } else {
        det
    }
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn check_simplex(vertices: &[DyadicPoint]) -> Result<usize, ArithError> {
    let d = vertices.first().map_or(0, DyadicPoint::dim);
    if vertices.len() != d + 1 {
        return Err(ArithError::VertexCount {
            expected: d + 1,
            got: vertices.len(),
        });
    }
    if let Some(p) = vertices.iter().find(|p| p.dim() != d) {
        return Err(ArithError::DimensionMismatch(d, p.dim()));
    }
    Ok(d)
}

/// Signed `det[v1 - v0, …, vd - v0]` scaled by `2^(k·d)` together with `k`.
fn scaled_det(vertices: &[DyadicPoint]) -> (BigInt, u32) {
    let k = vertices.iter().map(DyadicPoint::exponent).max().unwrap_or(0);
    let scaled: Vec<Vec<BigInt>> = vertices.iter().map(|p| p.scaled_to(k)).collect();
    let rows = scaled[1..]
        .iter()
        .map(|r| r.iter().zip(&scaled[0]).map(|(a, b)| a - b).collect())
        .collect();
    (det_bareiss(rows), k)
}

/// Exact volume `|det| / d!`.
pub fn simplex_volume(vertices: &[DyadicPoint]) -> Result<BigRational, ArithError> {
    let d = check_simplex(vertices)?;
    let (det, k) = scaled_det(vertices);
    if det.is_zero() {
        return Err(ArithError::Degenerate);
    }
    let denom = factorial(d) << (k as usize * d);
    Ok(BigRational::new(det.abs(), denom))
}

/// Barycentric coordinates of `p` with respect to `vertices`, exactly.
#[allow(clippy::needless_range_loop)]
pub fn barycentric(
    vertices: &[DyadicPoint],
    p: &DyadicPoint,
) -> Result<Vec<BigRational>, ArithError> {
    let d = check_simplex(vertices)?;
    if p.dim() != d {
        return Err(ArithError::DimensionMismatch(d, p.dim()));
    }
    let v0 = vertices[0].to_rationals();
    // Solve Σ_{i≥1} λ_i (v_i − v0) = p − v0 by Gaussian elimination.
    let mut a: Vec<Vec<BigRational>> = (0..d)
        .map(|row| {
            let mut r: Vec<BigRational> = vertices[1..]
                .iter()
                .map(|v| v.coord(row) - &v0[row])
                .collect();
            r.push(p.coord(row) - &v0[row]);
            r
        })
        .collect();
    for col in 0..d {
        let piv = (col..d)
            .find(|&r| !a[r][col].is_zero())
            .ok_or(ArithError::Degenerate)?;
        a.swap(col, piv);
        let inv = a[col][col].recip();
        for x in a[col].iter_mut() {
            *x *= &inv;
        }
        for r in 0..d {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..=d {
                    let t = &a[col][c] * &f;
                    a[r][c] -= t;
                }
            }
        }
    }
    let rest: Vec<BigRational> = a.into_iter().map(|r| r[d].clone()).collect();
    let sum: BigRational = rest.iter().fold(BigRational::zero(), |s, x| s + x);
    let mut out = Vec::with_capacity(d + 1);
    out.push(BigRational::one() - sum);
    out.extend(rest);
    Ok(out)
}

/// Euclidean diameter of a point set, in floating point.
pub fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}
