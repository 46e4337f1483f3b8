//! nu-transversality of ten point sets in [0,1]^2: the collinearity condition
//! on triples, the quadratic-form condition on quintuples (certified from above
//! by optimisation over orthonormal 3-frames), and the rank condition
//! dim V <= 1/4 sum_j dim pi_j(V) for the ten tangent planes.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::geom::{projection_rank, singular_values, Subspace5, TangentFrame, Vec5};
use crate::numerics::block_rng;
use crate::stiefel::{minimize_from, random_frame, Frame, PlanePoint};

pub type Point2 = (f64, f64);

/// The pair (u, v) indexing q_{u,v}(x, y) = (n.v)(m.u) - (n.u)(m.v), where
/// n = (1, 0, 2x, 0, y) and m = (0, 1, 0, 2y, x) span the tangent plane at (x, y).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QForm {
    pub u: Vec5,
    pub v: Vec5,
}

impl QForm {
    pub fn new(u: Vec5, v: Vec5) -> Result<Self> {
        if u.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return invalid("QForm vectors must be finite");
        }
        Ok(Self { u, v })
    }

    /// Expanded polynomial; every coefficient is an antisymmetric 2 x 2 minor.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let u = |k: usize| self.u[k - 1];
        let v = |k: usize| self.v[k - 1];
        let minor = |a: usize, b: usize| v(a) * u(b) - v(b) * u(a);
        2.0 * x * x * minor(3, 5)
            + 2.0 * y * y * minor(5, 4)
            + 4.0 * x * y * minor(3, 4)
            + 2.0 * x * minor(3, 2)
            + x * minor(1, 5)
            + y * minor(5, 2)
            + 2.0 * y * minor(1, 4)
            + minor(1, 2)
    }

    /// The shortened polynomial without the x minor(1,5) and 2y minor(1,4)
    /// terms and with 2y minor(5,2). It vanishes identically for (e1, e3) and
    /// (e1, e4), so it cannot separate any configuration.
    pub fn displayed_value(&self, x: f64, y: f64) -> f64 {
        let u = |k: usize| self.u[k - 1];
        let v = |k: usize| self.v[k - 1];
        let minor = |a: usize, b: usize| v(a) * u(b) - v(b) * u(a);
        2.0 * x * x * minor(3, 5)
            + 2.0 * y * y * minor(5, 4)
            + 4.0 * x * y * minor(3, 4)
            + 2.0 * x * minor(3, 2)
            + 2.0 * y * minor(5, 2)
            + minor(1, 2)
    }
}

pub fn q_value(q: &QForm, x: f64, y: f64) -> f64 {
    q.value(x, y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrthonormalTriple {
    pub u: Vec5,
    pub v: Vec5,
    pub w: Vec5,
}

impl OrthonormalTriple {
    pub fn new(u: Vec5, v: Vec5, w: Vec5) -> Result<Self> {
        let t = Self { u, v, w };
        let m = t.matrix();
        let gram = m.transpose() * m;
        if (gram - nalgebra::Matrix3::identity()).abs().max() > 1e-10 {
            return invalid("vectors are not orthonormal to 1e-10");
        }
        Ok(t)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_matrix(&random_frame(rng))
    }

    pub(crate) fn from_matrix(f: &Frame) -> Self {
        Self {
            u: f.column(0).into_owned(),
            v: f.column(1).into_owned(),
            w: f.column(2).into_owned(),
        }
    }

    pub(crate) fn matrix(&self) -> Frame {
        Frame::from_columns(&[self.u, self.v, self.w])
    }

    /// |q_{u,v}(p)| + |q_{u,w}(p)|.
    pub fn separation(&self, p: Point2) -> f64 {
        let a = QForm { u: self.u, v: self.v }.value(p.0, p.1);
        let b = QForm { u: self.u, v: self.w }.value(p.0, p.1);
        a.abs() + b.abs()
    }
}

impl Serialize for OrthonormalTriple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let cols: [[f64; 5]; 3] = [self.u, self.v, self.w].map(|c| std::array::from_fn(|k| c[k]));
        cols.serialize(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TripleCheck {
    pub passes: bool,
    pub value: f64,
    /// Ordering (i, j, k) of the inputs attaining `value`.
    pub permutation: [usize; 3],
}

/// max over orderings of |(y_j - y_i)((x_j - x_i)(y_k - y_i) - (x_k - x_i)(y_j - y_i))|.
pub fn condition_i(points: [Point2; 3], nu: f64) -> TripleCheck {
    let mut best = (f64::NEG_INFINITY, [0, 1, 2]);
    for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
        let [i, j, k] = perm.map(|t| points[t]);
        let cross = (j.0 - i.0) * (k.1 - i.1) - (k.0 - i.0) * (j.1 - i.1);
        let v = ((j.1 - i.1) * cross).abs();
        if v > best.0 {
            best = (v, perm);
        }
    }
    TripleCheck {
        passes: best.0 >= nu,
        value: best.0,
        permutation: best.1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StiefelConfig {
    pub restarts: usize,
    pub max_iterations: u64,
    pub step_tolerance: f64,
    pub seed: u64,
}

impl Default for StiefelConfig {
    fn default() -> Self {
        Self {
            restarts: 64,
            max_iterations: 500,
            step_tolerance: 1e-10,
            seed: 42,
        }
    }
}

impl StiefelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 || !(self.step_tolerance > 0.0) {
            return invalid("optimizer restarts, iterations and step tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadCheck {
    /// Best value of max_j |q_{u,v}| + |q_{u,w}| found: an upper bound on the infimum.
    pub bound: f64,
    pub frame: OrthonormalTriple,
    pub restarts: usize,
    pub iterations: u64,
    /// False when the restart that produced `bound` stopped at the iteration cap.
    pub converged: bool,
}

/// Upper bound for inf over orthonormal (u, v, w) of
/// max_j min_{p in S_j} (|q_{u,v}(p)| + |q_{u,w}(p)|).
pub fn condition_ii_sets(sets: &[Vec<Point2>], cfg: &StiefelConfig) -> Result<QuadCheck> {
    cfg.validate()?;
    if sets.is_empty() || sets.iter().any(|s| s.is_empty()) {
        return invalid("condition (ii) needs non-empty point sets");
    }
    let planes: Vec<Vec<PlanePoint>> = sets.iter().map(|s| s.iter().map(|&p| PlanePoint::new(p)).collect()).collect();
    let mut best: Option<(f64, Frame, bool)> = None;
    let mut iterations = 0;
    for r in 0..cfg.restarts {
        let mut rng = block_rng(cfg.seed, r as u64);
        let start = random_frame(&mut rng);
        let (v, f, it, conv) = minimize_from(&planes, start, cfg.max_iterations, cfg.step_tolerance);
        iterations += it;
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, f, conv));
        }
    }
    let (bound, frame, converged) = best.expect("at least one restart");
    Ok(QuadCheck {
        bound,
        frame: OrthonormalTriple::from_matrix(&frame),
        restarts: cfg.restarts,
        iterations,
        converged,
    })
}

pub fn condition_ii(points: [Point2; 5], cfg: &StiefelConfig) -> Result<QuadCheck> {
    let sets: Vec<Vec<Point2>> = points.iter().map(|&p| vec![p]).collect();
    condition_ii_sets(&sets, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransversalityCertificate {
    pub nu: f64,
    /// Smallest condition-(i) value over triples of points from distinct sets.
    pub condition_i_min: f64,
    pub condition_i_witness: [usize; 3],
    /// Smallest optimiser bound over the 252 five-element subsets of sets.
    pub condition_ii_bound: f64,
    pub condition_ii_witness: [usize; 5],
    pub condition_ii_frame: OrthonormalTriple,
    pub passes: bool,
    /// Slack for points of the sets that are not sampled; `passes_conservative`
    /// requires both values to clear nu by this amount.
    pub lipschitz_slack: f64,
    pub passes_conservative: bool,
    /// Condition (i) holds but the condition-(ii) bound is below nu; the
    /// bound is one-sided, so this does not refute transversality.
    pub inconclusive: bool,
    pub restarts: usize,
    pub iterations: u64,
    pub converged: bool,
}

impl TransversalityCertificate {
    pub fn passes(&self, nu: f64) -> bool {
        self.condition_i_min >= nu && self.condition_ii_bound >= nu
    }
}

pub const SETS: usize = 10;

/// The subsets with the smallest first-pass bounds are re-optimised with
/// this many times the restarts, from an independent seed stream.
pub const REFINE_SUBSETS: usize = 8;
pub const REFINE_FACTOR: usize = 8;
const REFINE_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn certify(sets: &[Vec<Point2>], nu: f64, cfg: &StiefelConfig) -> Result<TransversalityCertificate> {
    certify_with_slack(sets, nu, cfg, 0.0)
}

pub fn certify_with_slack(
    sets: &[Vec<Point2>],
    nu: f64,
    cfg: &StiefelConfig,
    lipschitz_slack: f64,
) -> Result<TransversalityCertificate> {
    if sets.len() != SETS || sets.iter().any(|s| s.is_empty()) {
        return invalid("certification needs exactly ten non-empty point sets");
    }
    if !(nu >= 0.0) || !(lipschitz_slack >= 0.0) {
        return invalid("nu and slack must be nonnegative");
    }
    cfg.validate()?;
    let triples: Vec<Vec<usize>> = (0..SETS).combinations(3).collect();
    let (condition_i_min, ti) = triples
        .par_iter()
        .map(|t| {
            let mut best = f64::INFINITY;
            for &a in &sets[t[0]] {
                for &b in &sets[t[1]] {
                    for &c in &sets[t[2]] {
                        best = best.min(condition_i([a, b, c], 0.0).value);
                    }
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .fold((f64::INFINITY, 0), |acc, (k, v)| if v < acc.0 { (v, k) } else { acc });

    let quints: Vec<Vec<usize>> = (0..SETS).combinations(5).collect();
    let subsets: Vec<Vec<Vec<Point2>>> = quints.iter().map(|q| q.iter().map(|&k| sets[k].clone()).collect()).collect();
    let mut checks: Vec<QuadCheck> = subsets.par_iter().map(|sub| condition_ii_sets(sub, cfg)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..checks.len()).collect();
    order.sort_by(|&a, &b| checks[a].bound.total_cmp(&checks[b].bound));
    let refine = StiefelConfig {
        restarts: cfg.restarts * REFINE_FACTOR,
        seed: cfg.seed ^ REFINE_SEED,
        ..*cfg
    };
    let refined: Vec<(usize, QuadCheck)> = order[..REFINE_SUBSETS.min(order.len())]
        .par_iter()
        .map(|&k| condition_ii_sets(&subsets[k], &refine).map(|c| (k, c)))
        .collect::<Result<_>>()?;
    for (k, mut c) in refined {
        c.iterations += checks[k].iterations;
        if c.bound >= checks[k].bound {
            c.bound = checks[k].bound;
            c.frame = checks[k].frame;
            c.converged = checks[k].converged;
        }
        checks[k] = c;
    }
    let (qi, best) = checks
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.bound.total_cmp(&b.1.bound))
        .expect("252 subsets");
    let passes = condition_i_min >= nu && best.bound >= nu;
    let t = &triples[ti];
    let q = &quints[qi];
    Ok(TransversalityCertificate {
        nu,
        condition_i_min,
        condition_i_witness: [t[0], t[1], t[2]],
        condition_ii_bound: best.bound,
        condition_ii_witness: [q[0], q[1], q[2], q[3], q[4]],
        condition_ii_frame: best.frame,
        passes,
        lipschitz_slack,
        passes_conservative: condition_i_min - lipschitz_slack >= nu && best.bound - lipschitz_slack >= nu,
        inconclusive: condition_i_min >= nu && best.bound < nu,
        restarts: cfg.restarts,
        iterations: checks.iter().map(|c| c.iterations).sum(),
        converged: checks.iter().all(|c| c.converged),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlViolation {
    pub kind: &'static str,
    pub dimension: usize,
    /// 4 dim V, or 5 for a rank-deficient stacked triple.
    pub lhs: usize,
    /// sum_j dim pi_j(V), or the stacked rank.
    pub rhs: usize,
    pub frames: Vec<usize>,
    pub basis: Vec<[f64; 5]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlReport {
    pub subspaces_checked: usize,
    pub triples_checked: usize,
    /// Smallest ratio sigma_min / sigma_max over stacked 6 x 5 triple matrices.
    pub min_stacked_ratio: f64,
    pub violations: Vec<BlViolation>,
}

impl BlReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

fn to_arrays(s: &Subspace5) -> Vec<[f64; 5]> {
    s.basis().iter().map(|b| std::array::from_fn(|k| b[k])).collect()
}

/// Checks 4 dim V <= sum_j dim pi_j(V) on random subspaces of each dimension
/// 1..4, on complements of single planes and of pairwise spans, and on the
/// whole space; and that the three planes of every triple span R^5.
pub fn bl_check(frames: &[TangentFrame], trials: usize, tol: f64, seed: u64) -> Result<BlReport> {
    if frames.len() != SETS {
        return invalid("rank check needs exactly ten frames");
    }
    if trials == 0 || !(tol > 0.0) {
        return invalid("trials and tolerance must be positive");
    }
    let mut violations = Vec::new();
    let mut checked = 0;
    let mut test = |v: &Subspace5, kind: &'static str, witness: Vec<usize>, violations: &mut Vec<BlViolation>| -> Result<()> {
        checked += 1;
        let total: usize = frames.iter().map(|f| projection_rank(v, f, tol)).sum::<Result<usize>>()?;
        if 4 * v.dimension() > total {
            violations.push(BlViolation {
                kind,
                dimension: v.dimension(),
                lhs: 4 * v.dimension(),
                rhs: total,
                frames: witness,
                basis: to_arrays(v),
            });
        }
        Ok(())
    };
    let mut rng = block_rng(seed, 0);
    for dim in 1..=4 {
        for _ in 0..trials {
            let v = Subspace5::random(dim, &mut rng)?;
            test(&v, "random", Vec::new(), &mut violations)?;
        }
    }
    test(&Subspace5::full(), "full", Vec::new(), &mut violations)?;
    for (i, f) in frames.iter().enumerate() {
        if let Some(c) = Subspace5::span_of_frames(&[*f])?.complement() {
            test(&c, "plane-complement", vec![i], &mut violations)?;
        }
    }
    for pair in (0..SETS).combinations(2) {
        let span = Subspace5::span_of_frames(&[frames[pair[0]], frames[pair[1]]])?;
        if let Some(c) = span.complement() {
            test(&c, "pair-complement", pair, &mut violations)?;
        }
    }
    let mut min_ratio = f64::INFINITY;
    let mut triples = 0;
    for t in (0..SETS).combinations(3) {
        triples += 1;
        let rows: Vec<Vec5> = t.iter().flat_map(|&k| [frames[k].n(), frames[k].m()]).collect();
        let sv = singular_values(&rows);
        let ratio = sv[4] / sv[0];
        min_ratio = min_ratio.min(ratio);
        if ratio <= tol {
            let m = DMatrix::from_fn(6, 5, |r, c| rows[r][c]);
            let kernel = m.svd(false, true).v_t.map(|vt| {
                let row = vt.row(4);
                [std::array::from_fn(|k| row[k])]
            });
            violations.push(BlViolation {
                kind: "stacked-rank",
                dimension: 1,
                lhs: 5,
                rhs: sv.iter().filter(|&&s| s > tol * sv[0]).count(),
                frames: t,
                basis: kernel.map(|k| k.to_vec()).unwrap_or_default(),
            });
        }
    }
    Ok(BlReport {
        subspaces_checked: checked,
        triples_checked: triples,
        min_stacked_ratio: min_ratio,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn e(k: usize) -> Vec5 {
        Vec5::from_fn(|r, _| (r == k - 1) as u8 as f64)
    }

    fn rand_vec(rng: &mut impl Rng) -> Vec5 {
        Vec5::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn q_examples() {
        let mut rng = block_rng(1, 0);
        let u = rand_vec(&mut rng);
        assert_eq!(QForm::new(u, u).unwrap().value(0.3, 0.8), 0.0);
        let q = QForm::new(e(3), e(5)).unwrap();
        assert_eq!(q.value(1.0, 0.0), -2.0);
        assert_eq!(q.value(0.5, 0.7), -0.5);
        assert_eq!(q_value(&q, 0.5, 0.7), q.displayed_value(0.5, 0.7));
    }

    #[test]
    fn q_matches_inner_product_form() {
        let mut rng = block_rng(2, 0);
        for _ in 0..1000 {
            let (u, v) = (rand_vec(&mut rng), rand_vec(&mut rng));
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            let f = TangentFrame::new(x, y).unwrap();
            let (n, m) = (f.n(), f.m());
            let want = n.dot(&v) * m.dot(&u) - n.dot(&u) * m.dot(&v);
            assert!((QForm::new(u, v).unwrap().value(x, y) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shortened_polynomial_is_degenerate() {
        for (x, y) in [(0.1, 0.9), (0.5, 0.5), (1.0, 0.3)] {
            let a = QForm::new(e(1), e(3)).unwrap();
            let b = QForm::new(e(1), e(4)).unwrap();
            assert_eq!(a.displayed_value(x, y), 0.0);
            assert_eq!(b.displayed_value(x, y), 0.0);
            assert_eq!(a.value(x, y), 0.0);
            assert_eq!(b.value(x, y), -2.0 * y);
        }
    }

    #[test]
    fn condition_i_examples() {
        let c = condition_i([(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)], 1e-9);
        assert_eq!(c.value, 0.0);
        assert!(!c.passes);
        let c = condition_i([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 1.0);
        assert_eq!(c.value, 1.0);
        assert!(c.passes);
        let pts: [Point2; 3] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let [i, j, _] = c.permutation.map(|k| pts[k]);
        assert_eq!((j.1 - i.1).abs(), 1.0);
        assert_eq!(condition_i([(0.2, 0.3), (0.2, 0.3), (0.9, 0.1)], 0.0).value, 0.0);
    }

    #[test]
    fn condition_i_is_twice_area_times_height_span() {
        let mut rng = block_rng(3, 0);
        for _ in 0..500 {
            let p: [Point2; 3] = std::array::from_fn(|_| (rng.random(), rng.random()));
            let area2 = ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1)).abs();
            let span = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max) - p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
            assert!((condition_i(p, 0.0).value - area2 * span).abs() < 1e-14);
        }
    }

    #[test]
    fn condition_ii_planted_collinear_frame() {
        // Points on a non-horizontal line: z = (b, -b/a, a/2, 1/(2a), -1) is
        // orthogonal to every tangent plane on y = a x + b, so u = z/|z| zeroes
        // both forms for any v, w.
        let (a, b) = (0.7, 0.15);
        let pts: [Point2; 5] = std::array::from_fn(|k| {
            let x = 0.1 + 0.18 * k as f64;
            (x, a * x + b)
        });
        let z = Vec5::new(b, -b / a, a / 2.0, 1.0 / (2.0 * a), -1.0);
        for p in pts {
            let f = TangentFrame::new(p.0, p.1).unwrap();
            assert!(f.n().dot(&z).abs() < 1e-14 && f.m().dot(&z).abs() < 1e-14);
        }
        let cfg = StiefelConfig {
            restarts: 4,
            ..StiefelConfig::default()
        };
        let r = condition_ii(pts, &cfg).unwrap();
        assert!(r.bound >= 0.0);
        assert!(r.bound <= 1e-6, "bound {}", r.bound);
    }

    #[test]
    fn condition_ii_generic_points_are_positive_and_stable() {
        let pts = [(0.1, 0.2), (0.8, 0.3), (0.4, 0.9), (0.6, 0.55), (0.25, 0.7)];
        let mut values = Vec::new();
        for seed in [1, 2, 3] {
            let cfg = StiefelConfig {
                restarts: 16,
                seed,
                ..StiefelConfig::default()
            };
            let r = condition_ii(pts, &cfg).unwrap();
            let t = r.frame;
            let direct = pts.iter().map(|&p| t.separation(p)).fold(0.0, f64::max);
            assert!((direct - r.bound).abs() < 1e-12);
            values.push(r.bound);
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(0.0, f64::max);
        assert!(lo > 0.0);
        assert!(hi <= 1.1 * lo, "{values:?}");
    }

    #[test]
    fn more_restarts_never_increase_the_bound() {
        let pts = [(0.05, 0.1), (0.9, 0.2), (0.5, 0.95), (0.3, 0.4), (0.7, 0.7)];
        let mut last = f64::INFINITY;
        for restarts in [1, 2, 4, 8] {
            let cfg = StiefelConfig {
                restarts,
                max_iterations: 200,
                ..StiefelConfig::default()
            };
            let b = condition_ii(pts, &cfg).unwrap().bound;
            assert!(b <= last);
            last = b;
        }
    }

    fn quick() -> StiefelConfig {
        StiefelConfig {
            restarts: 2,
            max_iterations: 60,
            ..StiefelConfig::default()
        }
    }

    #[test]
    fn certify_rejects_collinear_and_shared_points() {
        let line: Vec<Vec<Point2>> = (0..10).map(|k| vec![(0.05 + 0.1 * k as f64, 0.05 + 0.1 * k as f64)]).collect();
        let c = certify(&line, 1e-9, &quick()).unwrap();
        assert_eq!(c.condition_i_min, 0.0);
        assert!(!c.passes && !c.passes(1e-12));
        let mut rng = block_rng(8, 0);
        let mut sets: Vec<Vec<Point2>> = (0..10).map(|_| vec![(rng.random(), rng.random())]).collect();
        let shared = sets[7][0];
        sets[3].push(shared);
        let c = certify(&sets, 1e-12, &quick()).unwrap();
        assert_eq!(c.condition_i_min, 0.0);
        assert!(!c.passes);
        assert!(certify(&sets[..9], 0.1, &quick()).is_err());
    }

    #[test]
    fn separated_generic_sets_have_positive_condition_i() {
        // Ten points on a parabola: no three collinear and pairwise distinct heights.
        let sets: Vec<Vec<Point2>> = (0..10)
            .map(|k| {
                let x = 0.05 + 0.1 * k as f64;
                vec![(x, x * x), (x + 0.01, (x + 0.01) * (x + 0.01))]
            })
            .collect();
        let c = certify(&sets, 0.0, &quick()).unwrap();
        assert!(c.condition_i_min > 0.0);
        assert!(c.passes(0.0));
    }

    #[test]
    fn bl_check_on_transverse_points() {
        let pts = [(0.1, 0.2), (0.8, 0.3), (0.4, 0.9), (0.6, 0.55), (0.25, 0.7), (0.95, 0.85), (0.5, 0.05), (0.15, 0.5), (0.7, 0.95), (0.35, 0.15)];
        let frames: Vec<TangentFrame> = pts.iter().map(|&(x, y)| TangentFrame::new(x, y).unwrap()).collect();
        let r = bl_check(&frames, 50, 1e-9, 1).unwrap();
        assert!(r.passes(), "{:?}", r.violations);
        assert_eq!(r.triples_checked, 120);
    }

    #[test]
    fn bl_check_flags_collinear_triple() {
        let mut pts = vec![(0.0, 0.0), (0.25, 0.25), (0.5, 0.5)];
        pts.extend([(0.8, 0.3), (0.4, 0.9), (0.6, 0.15), (0.2, 0.7), (0.95, 0.6), (0.1, 0.4), (0.7, 0.85)]);
        let frames: Vec<TangentFrame> = pts.iter().map(|&(x, y)| TangentFrame::new(x, y).unwrap()).collect();
        let r = bl_check(&frames, 5, 1e-9, 1).unwrap();
        let flagged: Vec<&BlViolation> = r.violations.iter().filter(|v| v.kind == "stacked-rank").collect();
        assert!(flagged.iter().any(|v| v.frames == vec![0, 1, 2]));
        // column 5 = (column 3 + column 4) / 2 on y = x
        let f = TangentFrame::new(0.25, 0.25).unwrap();
        for row in [f.n(), f.m()] {
            assert_eq!(row[4], 0.5 * (row[2] + row[3]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn q_is_antisymmetric(u in prop::array::uniform5(-1.0f64..1.0), v in prop::array::uniform5(-1.0f64..1.0), x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let (u, v) = (Vec5::from_row_slice(&u), Vec5::from_row_slice(&v));
            let a = QForm::new(u, v).unwrap().value(x, y);
            let b = QForm::new(v, u).unwrap().value(x, y);
            prop_assert!((a + b).abs() <= 1e-12);
            prop_assert!(QForm::new(u, u).unwrap().value(x, y).abs() <= 1e-14 * u.norm_squared().max(1.0));
        }

        #[test]
        fn condition_i_ignores_labels(p in prop::array::uniform6(0.0f64..1.0)) {
            let pts = [(p[0], p[1]), (p[2], p[3]), (p[4], p[5])];
            let base = condition_i(pts, 0.0).value;
            for perm in [[1, 0, 2], [2, 1, 0], [1, 2, 0]] {
                prop_assert_eq!(condition_i(perm.map(|k| pts[k]), 0.0).value, base);
            }
        }

        #[test]
        fn full_space_meets_rank_condition_with_equality(p in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 10)) {
            let frames: Vec<TangentFrame> = p.iter().map(|&(x, y)| TangentFrame::new(x, y).unwrap()).collect();
            let total: usize = frames.iter().map(|f| projection_rank(&Subspace5::full(), f, 1e-9).unwrap()).sum();
            prop_assert_eq!(total, 20);
            let r = bl_check(&frames, 1, 1e-9, 0).unwrap();
            prop_assert!(r.violations.iter().all(|v| v.kind != "full"));
        }
    }
}
