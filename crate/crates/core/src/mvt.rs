//! Solution counts for the quadratic Vinogradov system in two variables:
//! exact counts by signature collisions, counts of the perturbed real-node
//! system, the torus orthogonality identity, and log-log exponent fits.

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::expsum::{e, C64};
use crate::numerics::{least_squares_line, NeumaierSum};

/// (sum X, sum Y, sum X^2, sum Y^2, sum XY) of an s-tuple of pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SignatureKey {
    pub z: [i64; 5],
}

pub fn signature(xs: &[i64], ys: &[i64]) -> Result<SignatureKey> {
    if xs.is_empty() || xs.len() != ys.len() {
        return invalid("signature needs two tuples of equal positive length");
    }
    let mut z = [0i64; 5];
    for (&x, &y) in xs.iter().zip(ys) {
        let terms = [
            Some(x),
            Some(y),
            x.checked_mul(x),
            y.checked_mul(y),
            x.checked_mul(y),
        ];
        for (acc, t) in z.iter_mut().zip(terms) {
            *acc = t
                .and_then(|t| acc.checked_add(t))
                .ok_or(Error::Overflow("signature component"))?;
        }
    }
    Ok(SignatureKey { z })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountResult {
    pub n: u64,
    pub s: u32,
    pub count: u64,
    #[serde(skip)]
    pub elapsed: Duration,
    /// |mean - round(mean)| for torus evaluations.
    pub residual: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CountConfig {
    /// Largest number of s-tuples enumerated by `count_exact` and `count_near`.
    pub tuple_budget: u64,
    /// Largest grid size times N^2 evaluated by `torus_mean_value`.
    pub torus_budget: u64,
    /// Number of signature-table shards; a power of two.
    pub shards: usize,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self {
            tuple_budget: 100_000_000,
            torus_budget: 1_000_000_000,
            shards: 64,
        }
    }
}

fn check_ns(n: u64, s: u32) -> Result<()> {
    if n == 0 || s == 0 {
        return invalid("N and s must be at least 1");
    }
    Ok(())
}

fn tuple_count(n: u64, s: u32, budget: u64) -> Result<u64> {
    let required = (n as u128).checked_pow(2 * s).unwrap_or(u128::MAX);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "s-tuple enumeration",
            required,
            limit: budget,
        });
    }
    Ok(required as u64)
}

/// J_{s,2,2}(N): the number of solutions in [1, N] of the five equations
/// matching sum X, sum Y, sum X^2, sum Y^2, sum XY between two s-tuples of
/// pairs, computed as the sum of squared signature multiplicities.
pub fn count_exact(n: u64, s: u32, cfg: &CountConfig) -> Result<CountResult> {
    check_ns(n, s)?;
    if !cfg.shards.is_power_of_two() {
        return invalid("shard count must be a power of two");
    }
    let start = Instant::now();
    tuple_count(n, s, cfg.tuple_budget)?;
    let s64 = s as u64;
    let overflow = Error::Overflow("signature packing");
    // Mixed-radix packing of (Z1..Z5); every digit is below its radix, so the
    // packed key of a tuple is the sum of the keys of its pairs.
    let r1 = s64.checked_mul(n).and_then(|v| v.checked_add(1)).ok_or(overflow.clone())?;
    let r3 = n
        .checked_mul(n)
        .and_then(|v| v.checked_mul(s64))
        .and_then(|v| v.checked_add(1))
        .ok_or(overflow.clone())?;
    let radices = [r1, r1, r3, r3, r3];
    radices
        .iter()
        .try_fold(1u64, |acc, &r| acc.checked_mul(r))
        .ok_or(overflow.clone())?;
    let pack = |z: [u64; 5]| z.iter().zip(&radices).fold(0u64, |acc, (&d, &r)| acc * r + d);
    let pairs = (n * n) as usize;
    let contrib: Vec<u64> = (0..pairs as u64)
        .map(|p| {
            let x = p / n + 1;
            let y = p % n + 1;
            pack([x, y, x * x, y * y, x * y])
        })
        .collect();

    let shards = cfg.shards;
    let shift = 64 - shards.trailing_zeros();
    let shard_of = |key: u64| {
        if shards == 1 {
            0
        } else {
            (key.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> shift) as usize
        }
    };
    let rest = (s - 1) as usize;
    let buckets: Vec<Vec<Vec<u64>>> = (0..pairs)
        .into_par_iter()
        .fold(
            || vec![Vec::new(); shards],
            |mut b, p0| {
                let mut idx = vec![0usize; rest];
                loop {
                    let key = contrib[p0] + idx.iter().map(|&p| contrib[p]).sum::<u64>();
                    b[shard_of(key)].push(key);
                    let mut d = 0;
                    while d < rest {
                        idx[d] += 1;
                        if idx[d] < pairs {
                            break;
                        }
                        idx[d] = 0;
                        d += 1;
                    }
                    if d == rest {
                        break;
                    }
                }
                b
            },
        )
        .collect();
    let count = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut table: FxHashMap<u64, u64> = FxHashMap::default();
            for worker in &buckets {
                for &key in &worker[k] {
                    *table.entry(key).or_insert(0) += 1;
                }
            }
            table
                .values()
                .try_fold(0u64, |acc, &m| m.checked_mul(m).and_then(|m2| acc.checked_add(m2)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .try_fold(0u64, |acc, part| part.and_then(|p| acc.checked_add(p)))
        .ok_or(Error::Overflow("solution count"))?;
    Ok(CountResult {
        n,
        s,
        count,
        elapsed: start.elapsed(),
        residual: None,
    })
}

/// Real nodes X_i, Y_i in (i-1, i].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealNodeSet {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RealNodeSet {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return invalid("node set needs N >= 1 nodes on each axis");
        }
        for (k, (&a, &b)) in x.iter().zip(&y).enumerate() {
            let lo = k as f64;
            let hi = (k + 1) as f64;
            if !(a > lo && a <= hi && b > lo && b <= hi) {
                return invalid(format!("node {} is outside ({lo}, {hi}]", k + 1));
            }
        }
        Ok(Self { x, y })
    }

    pub fn integers(n: usize) -> Result<Self> {
        let v: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        Self::new(v.clone(), v)
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        // 1 - U lies in (0, 1], so i - U lies in (i - 1, i].
        let mut draw = || (1..=n).map(|i| i as f64 - rng.random::<f64>()).collect::<Vec<_>>();
        let x = draw();
        let y = draw();
        Self::new(x, y)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Number of pairs of s-tuples whose real signatures differ by at most 1/N in
/// the two linear coordinates and at most 1 in the three quadratic ones.
pub fn count_near(nodes: &RealNodeSet, s: u32, cfg: &CountConfig) -> Result<CountResult> {
    let n = nodes.n();
    check_ns(n as u64, s)?;
    let start = Instant::now();
    tuple_count(n as u64, s, cfg.tuple_budget)?;
    let nf = n as f64;
    let thresholds = [1.0 / nf, 1.0 / nf, 1.0, 1.0, 1.0];

    // Distinct signatures with multiplicities.
    let mut sigs: FxHashMap<[u64; 5], u64> = FxHashMap::default();
    let s = s as usize;
    let mut xi = vec![0usize; s];
    let mut yi = vec![0usize; s];
    'outer: loop {
        let mut z = [0.0f64; 5];
        for k in 0..s {
            let (x, y) = (nodes.x[xi[k]], nodes.y[yi[k]]);
            z[0] += x;
            z[1] += y;
            z[2] += x * x;
            z[3] += y * y;
            z[4] += x * y;
        }
        *sigs.entry(z.map(f64::to_bits)).or_insert(0) += 1;
        for d in 0..2 * s {
            let slot = if d < s { &mut xi[d] } else { &mut yi[d - s] };
            *slot += 1;
            if *slot < n {
                continue 'outer;
            }
            *slot = 0;
        }
        break;
    }
    let entries: Vec<([f64; 5], u64)> = sigs.into_iter().map(|(k, m)| (k.map(f64::from_bits), m)).collect();

    // Boxes slightly wider than the thresholds, so any admissible pair lies in
    // adjacent boxes despite rounding in the box coordinates.
    let widths = thresholds.map(|t| t * (1.0 + 1e-9));
    let box_of = |z: &[f64; 5]| -> [i64; 5] { std::array::from_fn(|k| (z[k] / widths[k]).floor() as i64) };
    let mut boxes: FxHashMap<[i64; 5], Vec<usize>> = FxHashMap::default();
    for (idx, (z, _)) in entries.iter().enumerate() {
        boxes.entry(box_of(z)).or_default().push(idx);
    }
    let count = entries
        .par_iter()
        .map(|(za, ma)| {
            let b = box_of(za);
            let mut acc = 0u64;
            for off in 0..243usize {
                let mut nb = b;
                let mut o = off;
                for c in nb.iter_mut() {
                    *c += (o % 3) as i64 - 1;
                    o /= 3;
                }
                if let Some(members) = boxes.get(&nb) {
                    for &j in members {
                        let (zb, mb) = &entries[j];
                        if (0..5).all(|k| (za[k] - zb[k]).abs() <= thresholds[k]) {
                            acc += ma * mb;
                        }
                    }
                }
            }
            acc
        })
        .sum::<u64>();
    Ok(CountResult {
        n: n as u64,
        s: s as u32,
        count,
        elapsed: start.elapsed(),
        residual: None,
    })
}

/// Grid mean of |sum_{X,Y <= N} e(a1 X + a2 Y + a3 X^2 + a4 Y^2 + a5 XY)|^{2s}
/// over a_k = j_k / M_k with M_1 = M_2 = 2sN + 1 and M_3 = M_4 = M_5 = 2sN^2 + 1.
/// Every nonzero frequency is smaller than its modulus, so the mean is J_{s,2,2}(N).
pub fn torus_mean_value(n: u64, s: u32, cfg: &CountConfig) -> Result<CountResult> {
    check_ns(n, s)?;
    let start = Instant::now();
    let s64 = s as u64;
    let m1 = (2 * s64 * n + 1) as usize;
    let m3 = (2 * s64 * n * n + 1) as usize;
    let grid = (m1 as u128).pow(2) * (m3 as u128).pow(3);
    let cost = grid * (n as u128) * (n as u128);
    if cost > cfg.torus_budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "torus grid evaluation",
            required: cost,
            limit: cfg.torus_budget,
        });
    }
    let n = n as usize;
    let roots = |m: usize| (0..m).map(|k| e(k as f64 / m as f64)).collect::<Vec<C64>>();
    let w1 = roots(m1);
    let w3 = roots(m3);
    let xy: Vec<usize> = (1..=n).flat_map(|x| (1..=n).map(move |y| (x * y) % m3)).collect();
    let power = 2 * s as i32;

    let partials: Vec<NeumaierSum> = (0..m1 * m3)
        .into_par_iter()
        .map(|task| {
            let (j1, j3) = (task / m3, task % m3);
            let a: Vec<C64> = (1..=n).map(|x| w1[(j1 * x) % m1] * w3[(j3 * x * x) % m3]).collect();
            let mut acc = NeumaierSum::new();
            let mut coef = vec![C64::new(0.0, 0.0); n * n];
            let mut idx = vec![0usize; n * n];
            for j2 in 0..m1 {
                for j4 in 0..m3 {
                    for y in 1..=n {
                        let b = w1[(j2 * y) % m1] * w3[(j4 * y * y) % m3];
                        for x in 1..=n {
                            coef[(x - 1) * n + (y - 1)] = a[x - 1] * b;
                        }
                    }
                    idx.iter_mut().for_each(|v| *v = 0);
                    for _j5 in 0..m3 {
                        let mut total = C64::new(0.0, 0.0);
                        for k in 0..n * n {
                            total += coef[k] * w3[idx[k]];
                            idx[k] += xy[k];
                            if idx[k] >= m3 {
                                idx[k] -= m3;
                            }
                        }
                        acc.add(total.norm_sqr().powi(power / 2));
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = NeumaierSum::new();
    for p in &partials {
        total.merge(p);
    }
    let mean = total.value() / grid as f64;
    let rounded = mean.round();
    let residual = (mean - rounded).abs();
    if residual >= 1e-6 {
        return Err(Error::Aliasing { mean, residual });
    }
    Ok(CountResult {
        n: n as u64,
        s,
        count: rounded as u64,
        elapsed: start.elapsed(),
        residual: Some(residual),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope of log(value) against log(N).
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 2 {
        return invalid("exponent fit needs at least two points");
    }
    if points.iter().any(|&(n, v)| !(n > 0.0 && v > 0.0 && n.is_finite() && v.is_finite())) {
        return invalid("exponent fit needs positive finite N and values");
    }
    for (i, a) in points.iter().enumerate() {
        if points[..i].iter().any(|b| b.0 == a.0) {
            return invalid("exponent fit needs distinct N");
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, residual) = least_squares_line(&xs, &ys);
    Ok(ExponentFit {
        slope,
        intercept,
        residual,
        points: points.to_vec(),
    })
}
