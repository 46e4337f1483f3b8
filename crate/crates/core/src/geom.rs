//! Points, balls and weights in R^5; dyadic squares in [0,1)^2; tangent
//! frames of the surface (s, t, s^2, t^2, st) and subspace ranks.

use nalgebra::{DMatrix, Matrix5x2, SVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Result};

pub type Vec5 = SVector<f64, 5>;

/// Default relative tolerance for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Point5 {
    coords: [f64; 5],
}

impl Point5 {
    pub fn new(coords: [f64; 5]) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return invalid("Point5 coordinates must be finite");
        }
        Ok(Self { coords })
    }

    pub fn origin() -> Self {
        Self { coords: [0.0; 5] }
    }

    pub(crate) fn from_vector(v: &Vec5) -> Self {
        Self {
            coords: [v[0], v[1], v[2], v[3], v[4]],
        }
    }

    pub fn coords(&self) -> &[f64; 5] {
        &self.coords
    }

    pub fn vector(&self) -> Vec5 {
        Vec5::from_row_slice(&self.coords)
    }

    pub fn distance(&self, other: &Point5) -> f64 {
        (self.vector() - other.vector()).norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ball5 {
    center: Point5,
    radius: f64,
}

impl Ball5 {
    pub fn new(center: Point5, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid("ball radius must be positive and finite");
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &Point5 {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Lebesgue measure, 8 pi^2 R^5 / 15.
    pub fn volume(&self) -> f64 {
        8.0 * std::f64::consts::PI.powi(2) / 15.0 * self.radius.powi(5)
    }

    pub fn contains(&self, p: &Point5) -> bool {
        self.center.distance(p) <= self.radius
    }

    /// Uniform point of the ball at radial fraction `u^{1/5}` along a Gaussian direction.
    pub(crate) fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point5 {
        let dir = random_unit_vector(rng);
        let r = self.radius * rng.random::<f64>().powf(0.2);
        Point5::from_vector(&(self.center.vector() + dir * r))
    }
}

pub(crate) fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec5 {
    loop {
        let v = Vec5::from_fn(|_, _| rng.sample(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// w(x) = (1 + |x - c|/R)^{-exponent}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallWeight {
    ball: Ball5,
    exponent: u32,
}

impl BallWeight {
    pub const STANDARD_EXPONENT: u32 = 100;

    pub fn new(ball: Ball5, exponent: u32) -> Result<Self> {
        if exponent == 0 {
            return invalid("weight exponent must be at least 1");
        }
        Ok(Self { ball, exponent })
    }

    pub fn standard(ball: Ball5) -> Self {
        Self {
            ball,
            exponent: Self::STANDARD_EXPONENT,
        }
    }

    pub fn ball(&self) -> &Ball5 {
        &self.ball
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn value(&self, p: &Point5) -> f64 {
        let r = self.ball.center.distance(p) / self.ball.radius;
        (1.0 + r).powi(-(self.exponent as i32))
    }
}

pub fn weight_value(w: &BallWeight, p: &Point5) -> f64 {
    w.value(p)
}

/// Closed axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn square(center: (f64, f64), side: f64) -> Self {
        let h = side / 2.0;
        Self {
            x0: center.0 - h,
            x1: center.0 + h,
            y0: center.1 - h,
            y1: center.1 + h,
        }
    }

    pub fn unit() -> Self {
        Self {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x0, self.y0),
            (self.x1, self.y0),
            (self.x0, self.y1),
            (self.x1, self.y1),
        ]
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.x0 && p.0 <= self.x1 && p.1 >= self.y0 && p.1 <= self.y1
    }
}

/// The half-open square `[i/K, (i+1)/K) x [j/K, (j+1)/K)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DyadicSquare {
    level: u32,
    i: u32,
    j: u32,
}

impl DyadicSquare {
    pub fn new(level: u32, i: u32, j: u32) -> Result<Self> {
        if level == 0 || !level.is_power_of_two() {
            return invalid(format!("dyadic level {level} is not a power of two"));
        }
        if i >= level || j >= level {
            return invalid(format!("indices ({i}, {j}) out of range for level {level}"));
        }
        Ok(Self { level, i, j })
    }

    /// All K^2 squares of level `level` in row-major order (j outer, i inner).
    pub fn all(level: u32) -> Result<Vec<DyadicSquare>> {
        DyadicSquare::new(level, 0, 0)?;
        Ok((0..level)
            .flat_map(|j| (0..level).map(move |i| DyadicSquare { level, i, j }))
            .collect())
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn i(&self) -> u32 {
        self.i
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    pub fn side(&self) -> f64 {
        1.0 / self.level as f64
    }

    pub fn center(&self) -> (f64, f64) {
        let h = self.side();
        ((self.i as f64 + 0.5) * h, (self.j as f64 + 0.5) * h)
    }

    /// Closure of the square.
    pub fn rect(&self) -> Rect {
        Rect::square(self.center(), self.side())
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        let k = self.level as f64;
        (p.0 * k).floor() == self.i as f64 && (p.1 * k).floor() == self.j as f64
    }

    /// Concentric square of side 2/K; may leave the unit square.
    pub fn double_square(&self) -> Rect {
        Rect::square(self.center(), 2.0 * self.side())
    }

    /// Concentric square of side 1/(2K).
    pub fn half_square(&self) -> Rect {
        Rect::square(self.center(), 0.5 * self.side())
    }

    /// Indices of the level-`coarse` square containing this one.
    pub fn ancestor(&self, coarse: u32) -> (u32, u32) {
        debug_assert!(coarse.is_power_of_two() && coarse <= self.level);
        let f = self.level / coarse;
        (self.i / f, self.j / f)
    }
}

pub fn double_square(r: &DyadicSquare) -> Rect {
    r.double_square()
}

/// Tangent plane of the surface at `(x, y)`, spanned by
/// n = (1, 0, 2x, 0, y) and m = (0, 1, 0, 2y, x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TangentFrame {
    x: f64,
    y: f64,
}

impl TangentFrame {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
            return invalid(format!("base point ({x}, {y}) outside [0,1]^2"));
        }
        Ok(Self { x, y })
    }

    pub fn base(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn n(&self) -> Vec5 {
        Vec5::new(1.0, 0.0, 2.0 * self.x, 0.0, self.y)
    }

    pub fn m(&self) -> Vec5 {
        Vec5::new(0.0, 1.0, 0.0, 2.0 * self.y, self.x)
    }

    /// Orthonormal basis (Gram-Schmidt on n, then m) of the tangent plane.
    pub fn orthonormal(&self) -> (Vec5, Vec5) {
        let n = self.n();
        let e1 = n / n.norm();
        let m = self.m();
        let r = m - e1 * e1.dot(&m);
        (e1, r / r.norm())
    }

    pub fn plane_basis(&self) -> Matrix5x2<f64> {
        let (e1, e2) = self.orthonormal();
        Matrix5x2::from_columns(&[e1, e2])
    }
}

/// Singular values of the matrix whose rows are `rows`, in decreasing order.
pub fn singular_values(rows: &[Vec5]) -> Vec<f64> {
    if rows.is_empty() {
        return Vec::new();
    }
    let m = DMatrix::from_fn(rows.len(), 5, |r, c| rows[r][c]);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(sv: &[f64], rel_tol: f64) -> usize {
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// A linear subspace of R^5 held by an orthonormal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace5 {
    basis: Vec<Vec5>,
}

impl Subspace5 {
    /// Span of `vectors`, orthonormalised by SVD; directions with singular value
    /// below `rel_tol` times the largest are discarded.
    pub fn from_spanning(vectors: &[Vec5], rel_tol: f64) -> Result<Self> {
        if vectors.is_empty() {
            return invalid("cannot span a subspace from no vectors");
        }
        let a = DMatrix::from_fn(5, vectors.len(), |r, c| vectors[c][r]);
        let svd = a.svd(true, false);
        let u = svd.u.expect("requested U");
        let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return invalid("spanning vectors are all zero");
        }
        let basis: Vec<Vec5> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > rel_tol * max)
            .map(|(k, _)| Vec5::from_iterator(u.column(k).iter().copied()))
            .collect();
        Ok(Self { basis })
    }

    pub fn full() -> Self {
        Self {
            basis: (0..5).map(|k| Vec5::from_fn(|r, _| (r == k) as u8 as f64)).collect(),
        }
    }

    /// Subspace spanned by a Gaussian `dim x 5` sample.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        if !(1..=5).contains(&dim) {
            return invalid("subspace dimension must be in 1..=5");
        }
        loop {
            let vs: Vec<Vec5> = (0..dim)
                .map(|_| Vec5::from_fn(|_, _| rng.sample(StandardNormal)))
                .collect();
            let s = Self::from_spanning(&vs, DEFAULT_RANK_TOL)?;
            if s.dimension() == dim {
                return Ok(s);
            }
        }
    }

    /// Span of the tangent planes of `frames`.
    pub fn span_of_frames(frames: &[TangentFrame]) -> Result<Self> {
        let vs: Vec<Vec5> = frames.iter().flat_map(|f| [f.n(), f.m()]).collect();
        Self::from_spanning(&vs, DEFAULT_RANK_TOL)
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec5] {
        &self.basis
    }

    /// Orthogonal complement; `None` for the whole space.
    pub fn complement(&self) -> Option<Self> {
        if self.dimension() == 5 {
            return None;
        }
        let mut p = nalgebra::Matrix5::<f64>::identity();
        for b in &self.basis {
            p -= b * b.transpose();
        }
        let cols: Vec<Vec5> = (0..5).map(|k| p.column(k).into_owned()).collect();
        Self::from_spanning(&cols, 1e-6).ok()
    }
}

/// dim of the orthogonal projection of `v` onto the tangent plane of `f`:
/// the number of singular values of the 2 x d matrix of inner products that
/// exceed the absolute tolerance `tol`.
pub fn projection_rank(v: &Subspace5, f: &TangentFrame, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return invalid("projection_rank tolerance must be positive");
    }
    let (e1, e2) = f.orthonormal();
    let k = DMatrix::from_fn(2, v.dimension(), |r, c| {
        let e = if r == 0 { &e1 } else { &e2 };
        e.dot(&v.basis[c])
    });
    Ok(k.singular_values().iter().filter(|&&s| s > tol).count())
}
