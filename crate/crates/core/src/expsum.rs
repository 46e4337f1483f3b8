//! The phase (s, t, s^2, t^2, st), the extension operator on grid densities,
//! discrete Weyl sums and ball-averaged L^p norms by quadrature.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geom::{random_unit_vector, Ball5, BallWeight, Point5, Rect};
use crate::numerics::{block_parallel, Moments};

pub type C64 = Complex64;

/// Weighted integrals are truncated to the ball of this many radii.
pub const WEIGHT_TRUNCATION: f64 = 4.0;

pub fn phase(s: f64, t: f64, x: &Point5) -> f64 {
    let c = x.coords();
    c[0] * s + c[1] * t + c[2] * s * s + c[3] * t * t + c[4] * s * t
}

/// e(z) = exp(2 pi i z), with z reduced mod 1 first.
pub fn e(z: f64) -> C64 {
    let f = z - z.round();
    let (sin, cos) = (std::f64::consts::TAU * f).sin_cos();
    C64::new(cos, sin)
}

/// Midpoint samples of a density on an M x M grid over a square.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction2 {
    square: Rect,
    m: usize,
    /// samples[a * m + b] is the value at (s_a, t_b).
    samples: Vec<C64>,
}

impl GridFunction2 {
    pub fn new(square: Rect, m: usize, samples: Vec<C64>) -> Result<Self> {
        if m == 0 {
            return invalid("grid resolution must be at least 1");
        }
        if samples.len() != m * m {
            return invalid(format!("expected {} samples, got {}", m * m, samples.len()));
        }
        let side = square.width();
        if !(side > 0.0) || (square.height() - side).abs() > 1e-12 * side {
            return invalid("support must be a square of positive side");
        }
        let tol = 1e-12;
        if square.x0 < -tol || square.y0 < -tol || square.x1 > 1.0 + tol || square.y1 > 1.0 + tol {
            return invalid("support must lie in [0,1]^2");
        }
        Ok(Self { square, m, samples })
    }

    pub fn from_fn(square: Rect, m: usize, f: impl Fn(f64, f64) -> C64) -> Result<Self> {
        let h = square.width() / m.max(1) as f64;
        let mut samples = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                let s = square.x0 + (a as f64 + 0.5) * h;
                let t = square.y0 + (b as f64 + 0.5) * h;
                samples.push(f(s, t));
            }
        }
        Self::new(square, m, samples)
    }

    pub fn constant(square: Rect, m: usize, c: C64) -> Result<Self> {
        Self::new(square, m, vec![c; m * m])
    }

    pub fn square(&self) -> &Rect {
        &self.square
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.square.width() / self.m as f64
    }

    pub fn sample(&self, a: usize, b: usize) -> C64 {
        self.samples[a * self.m + b]
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    /// Splits into `k x k` equal sub-squares, ordered with the s-block outer.
    pub fn blocks(&self, k: usize) -> Result<Vec<GridFunction2>> {
        if k == 0 || !self.m.is_multiple_of(k) {
            return invalid(format!("resolution {} is not divisible by {k}", self.m));
        }
        let mb = self.m / k;
        let side = self.square.width() / k as f64;
        let mut out = Vec::with_capacity(k * k);
        for bi in 0..k {
            for bj in 0..k {
                let sq = Rect {
                    x0: self.square.x0 + bi as f64 * side,
                    x1: self.square.x0 + (bi + 1) as f64 * side,
                    y0: self.square.y0 + bj as f64 * side,
                    y1: self.square.y0 + (bj + 1) as f64 * side,
                };
                let mut samples = Vec::with_capacity(mb * mb);
                for a in 0..mb {
                    for b in 0..mb {
                        samples.push(self.sample(bi * mb + a, bj * mb + b));
                    }
                }
                out.push(Self { square: sq, m: mb, samples });
            }
        }
        Ok(out)
    }
}

/// Midpoint rule for the integral over S of g(s,t) e(phase(s,t,x)).
pub fn extension_value(g: &GridFunction2, x: &Point5) -> C64 {
    let c = x.coords();
    let m = g.m;
    let h = g.spacing();
    let s0 = g.square.x0 + 0.5 * h;
    let t0 = g.square.y0 + 0.5 * h;
    let v: Vec<C64> = (0..m)
        .map(|b| {
            let t = t0 + b as f64 * h;
            e(c[1] * t + c[3] * t * t)
        })
        .collect();
    let mut total = C64::new(0.0, 0.0);
    for a in 0..m {
        let s = s0 + a as f64 * h;
        let row = &g.samples[a * m..(a + 1) * m];
        let step = e(c[4] * s * h);
        let mut coupling = e(c[4] * s * t0);
        let mut inner = C64::new(0.0, 0.0);
        for b in 0..m {
            inner += row[b] * v[b] * coupling;
            coupling *= step;
        }
        total += inner * e(c[0] * s + c[2] * s * s);
    }
    total * (h * h)
}

/// Nodes s_i, t_j with s_i, t_i in ((i-1)/N, i/N] and an N x N coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSystem {
    n: usize,
    s: Vec<f64>,
    t: Vec<f64>,
    /// a[i * n + j] multiplies the (s_i, t_j) term.
    a: Vec<C64>,
}

impl NodeSystem {
    pub fn new(s: Vec<f64>, t: Vec<f64>, a: Vec<C64>) -> Result<Self> {
        let n = s.len();
        if n == 0 || t.len() != n || a.len() != n * n {
            return invalid("node system needs N >= 1 nodes per axis and N^2 coefficients");
        }
        let nf = n as f64;
        for (k, (&si, &ti)) in s.iter().zip(&t).enumerate() {
            let lo = k as f64 / nf;
            let hi = (k + 1) as f64 / nf;
            if !(si > lo && si <= hi && ti > lo && ti <= hi) {
                return invalid(format!("node {} is outside ({lo}, {hi}]", k + 1));
            }
        }
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("coefficients must be finite");
        }
        Ok(Self { n, s, t, a })
    }

    /// Right-endpoint nodes i/N with the given coefficients.
    pub fn uniform(n: usize, a: Vec<C64>) -> Result<Self> {
        let nodes: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        Self::new(nodes.clone(), nodes, a)
    }

    pub fn ones(n: usize) -> Result<Self> {
        Self::uniform(n, vec![C64::new(1.0, 0.0); n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn coefficient(&self, i: usize, j: usize) -> C64 {
        self.a[i * self.n + j]
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.a
    }

    /// (sum |a_ij|^p)^{1/p}.
    pub fn coefficient_norm(&self, p: f64) -> f64 {
        self.a.iter().map(|z| z.norm().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    /// sum_ij a_ij e(x1 s_i + x2 t_j + x3 s_i^2 + x4 t_j^2 + x5 s_i t_j).
    pub fn weyl_sum(&self, x: &Point5) -> C64 {
        let c = x.coords();
        let b: Vec<C64> = self.t.iter().map(|&t| e(c[1] * t + c[3] * t * t)).collect();
        let mut total = C64::new(0.0, 0.0);
        for (i, &s) in self.s.iter().enumerate() {
            let row = &self.a[i * self.n..(i + 1) * self.n];
            let mut inner = C64::new(0.0, 0.0);
            for ((&aij, &bj), &t) in row.iter().zip(&b).zip(&self.t) {
                inner += aij * bj * e(c[4] * s * t);
            }
            total += inner * e(c[0] * s + c[2] * s * s);
        }
        total
    }
}

pub fn weyl_sum(ns: &NodeSystem, x: &Point5) -> C64 {
    ns.weyl_sum(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Quadrature {
    MonteCarlo { samples: u64 },
    TensorGrid { per_axis: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub method: Quadrature,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            method: Quadrature::MonteCarlo { samples: 100_000 },
            seed: 42,
        }
    }
}

impl QuadratureSpec {
    pub fn monte_carlo(samples: u64, seed: u64) -> Result<Self> {
        let q = Self {
            method: Quadrature::MonteCarlo { samples },
            seed,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn tensor_grid(per_axis: usize) -> Result<Self> {
        let q = Self {
            method: Quadrature::TensorGrid { per_axis },
            seed: 0,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Quadrature::MonteCarlo { samples: 0 } => invalid("sample count must be at least 1"),
            Quadrature::TensorGrid { per_axis: 0 } => invalid("grid resolution must be at least 1"),
            _ => Ok(()),
        }
    }

    /// Number of integrand evaluations this rule performs (grid: before discarding).
    pub fn evaluations(&self) -> u128 {
        match self.method {
            Quadrature::MonteCarlo { samples } => samples as u128,
            Quadrature::TensorGrid { per_axis } => (per_axis as u128).pow(5),
        }
    }
}

/// Ball-averaged norm (|B|^{-1} integral of |f|^p, optionally times w_B)^{1/p}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    /// Normalised weight mass outside the truncation ball; the neglected part
    /// of the p-th power average is at most this times sup |f|^p.
    pub tail_weight_mass: f64,
}

/// n-th moment estimates of several integrands over a common sample set.
#[derive(Clone, Debug)]
pub(crate) struct SampledMoments<const K: usize> {
    pub moments: [Moments; K],
    /// Multiplier turning a sample mean into the normalised integral.
    pub mass: f64,
    pub deterministic: bool,
    pub tail_weight_mass: f64,
}

impl<const K: usize> SampledMoments<K> {
    pub fn estimate(&self, k: usize) -> f64 {
        self.mass * self.moments[k].mean()
    }

    pub fn std_error(&self, k: usize) -> f64 {
        if self.deterministic {
            0.0
        } else {
            self.mass * self.moments[k].std_error()
        }
    }

    pub fn samples(&self) -> u64 {
        self.moments[0].count
    }

    /// p-th root of the k-th estimate with a delta-method standard error.
    pub fn norm(&self, k: usize, p: f64) -> NormEstimate {
        let mean = self.estimate(k);
        let value = mean.max(0.0).powf(1.0 / p);
        let std_error = if mean > 0.0 {
            value / (p * mean) * self.std_error(k)
        } else {
            0.0
        };
        NormEstimate {
            value,
            std_error,
            samples: self.samples(),
            tail_weight_mass: self.tail_weight_mass,
        }
    }
}

/// Normalised mass 5 * integral_0^T u^4 (1+u)^{-k} du of the weight over the
/// ball of T radii, divided by |B_R|. Composite Simpson rule.
fn weight_mass(exponent: u32, t: f64) -> f64 {
    let n = 20_000;
    let h = t / n as f64;
    let f = |u: f64| u.powi(4) * (1.0 + u).powi(-(exponent as i32));
    let mut acc = f(0.0) + f(t);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    5.0 * acc * h / 3.0
}

/// Upper bound for the normalised weight mass beyond T radii.
fn weight_tail_bound(exponent: u32, t: f64) -> f64 {
    if exponent <= 5 {
        return f64::INFINITY;
    }
    let k = exponent as f64;
    5.0 * (1.0 + t).powf(5.0 - k) / (k - 5.0)
}

/// Samples `f` over `ball` (uniformly) or over the truncated support of `weight`
/// (Monte Carlo importance sampling with radial density proportional to the
/// weight, or a midpoint grid). Integrands receive the sample point and the
/// factor that multiplies |f|^p.
pub(crate) fn sample_moments<const K: usize, F>(
    ball: &Ball5,
    weight: Option<&BallWeight>,
    q: &QuadratureSpec,
    f: F,
) -> Result<SampledMoments<K>>
where
    F: Fn(&Point5) -> [f64; K] + Sync,
{
    q.validate()?;
    let merge_into = |acc: &mut [Moments; K], other: &[Moments; K]| {
        for k in 0..K {
            acc[k].merge(&other[k]);
        }
    };
    let r = ball.radius();
    let c = ball.center().vector();
    match (q.method, weight) {
        (Quadrature::MonteCarlo { samples }, None) => {
            let mut acc = [Moments::default(); K];
            block_parallel(
                samples,
                q.seed,
                |rng, len| {
                    let mut m = [Moments::default(); K];
                    for _ in 0..len {
                        let vals = f(&ball.sample_uniform(rng));
                        for k in 0..K {
                            m[k].push(vals[k]);
                        }
                    }
                    m
                },
                |m| merge_into(&mut acc, m),
            );
            Ok(SampledMoments {
                moments: acc,
                mass: 1.0,
                deterministic: false,
                tail_weight_mass: 0.0,
            })
        }
        (Quadrature::MonteCarlo { samples }, Some(w)) => {
            let k = w.exponent();
            let tmax = WEIGHT_TRUNCATION;
            let mut acc = [Moments::default(); K];
            if k > 5 {
                // u = |x - c| / R has density proportional to u^4 (1+u)^{-k}: a
                // beta-prime(5, k-5) variable, rejected above the truncation.
                let beta = Beta::new(5.0, k as f64 - 5.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
                block_parallel(
                    samples,
                    q.seed,
                    |rng, len| {
                        let mut m = [Moments::default(); K];
                        for _ in 0..len {
                            let u = loop {
                                let y: f64 = beta.sample(rng);
                                let u = y / (1.0 - y);
                                if u <= tmax {
                                    break u;
                                }
                            };
                            let x = c + random_unit_vector(rng) * (u * r);
                            let vals = f(&Point5::from_vector(&x));
                            for j in 0..K {
                                m[j].push(vals[j]);
                            }
                        }
                        m
                    },
                    |m| merge_into(&mut acc, m),
                );
                Ok(SampledMoments {
                    moments: acc,
                    mass: weight_mass(k, tmax),
                    deterministic: false,
                    tail_weight_mass: weight_tail_bound(k, tmax),
                })
            } else {
                let outer = Ball5::new(*ball.center(), tmax * r)?;
                block_parallel(
                    samples,
                    q.seed,
                    |rng, len| {
                        let mut m = [Moments::default(); K];
                        for _ in 0..len {
                            let x = outer.sample_uniform(rng);
                            let wx = w.value(&x);
                            let vals = f(&x);
                            for j in 0..K {
                                m[j].push(vals[j] * wx);
                            }
                        }
                        m
                    },
                    |m| merge_into(&mut acc, m),
                );
                Ok(SampledMoments {
                    moments: acc,
                    mass: tmax.powi(5),
                    deterministic: false,
                    tail_weight_mass: weight_tail_bound(k, tmax),
                })
            }
        }
        (Quadrature::TensorGrid { per_axis }, _) => {
            let reach = if weight.is_some() { WEIGHT_TRUNCATION * r } else { r };
            let m = per_axis;
            let h = 2.0 * reach / m as f64;
            let node = |i: usize| -reach + (i as f64 + 0.5) * h;
            let parts: Vec<[Moments; K]> = (0..m)
                .into_par_iter()
                .map(|i0| {
                    let mut acc = [Moments::default(); K];
                    let mut idx = [i0, 0, 0, 0, 0];
                    let m4 = m.pow(4);
                    for flat in 0..m4 {
                        let mut rem = flat;
                        for d in (1..5).rev() {
                            idx[d] = rem % m;
                            rem /= m;
                        }
                        let off: [f64; 5] = std::array::from_fn(|d| node(idx[d]));
                        let r2: f64 = off.iter().map(|v| v * v).sum();
                        if r2 > reach * reach {
                            continue;
                        }
                        let x = Point5::from_vector(&(c + crate::geom::Vec5::from_row_slice(&off)));
                        let wx = weight.map_or(1.0, |w| w.value(&x));
                        let vals = f(&x);
                        for d in 0..K {
                            acc[d].push(vals[d] * wx);
                        }
                    }
                    acc
                })
                .collect();
            let mut acc = [Moments::default(); K];
            for p in &parts {
                merge_into(&mut acc, p);
            }
            if acc[0].count == 0 {
                return Err(Error::DegenerateQuadrature(format!(
                    "no grid point of a {m}^5 grid lies inside the integration ball"
                )));
            }
            let mass = match weight {
                None => 1.0,
                Some(_) => {
                    // mean over inside points times (inside volume) / |B_R|
                    let cube = (2.0 * reach).powi(5);
                    let inside = acc[0].count as f64 / (m as f64).powi(5);
                    cube * inside / ball.volume()
                }
            };
            Ok(SampledMoments {
                moments: acc,
                mass,
                deterministic: true,
                tail_weight_mass: weight.map_or(0.0, |w| weight_tail_bound(w.exponent(), WEIGHT_TRUNCATION)),
            })
        }
    }
}

/// (|B|^{-1} integral_B |f|^p)^{1/p}, or with the standard weight w_B over the
/// truncated 4R-ball when `weighted`.
pub fn weighted_lp_norm<F>(f: F, ball: &Ball5, p: f64, weighted: bool, q: &QuadratureSpec) -> Result<NormEstimate>
where
    F: Fn(&Point5) -> C64 + Sync,
{
    if !(p >= 1.0 && p.is_finite()) {
        return invalid("p must be finite and at least 1");
    }
    let w = BallWeight::standard(*ball);
    let sm = sample_moments::<1, _>(ball, weighted.then_some(&w), q, |x| [f(x).norm().powf(p)])?;
    Ok(sm.norm(0, p))
}

/// Unit-modulus coefficients with independent uniform phases.
pub fn random_phases<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<C64> {
    (0..count).map(|_| e(rng.random::<f64>())).collect()
}
