//! Riemannian descent on orthonormal 3-frames in R^5 for the quadratic-form
//! transversality condition.

use nalgebra::{Matrix3, Matrix5x3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geom::Vec5;

pub(crate) type Frame = Matrix5x3<f64>;

/// Q-form data of one base point: its tangent vectors n and m.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PlanePoint {
    n: Vec5,
    m: Vec5,
}

impl PlanePoint {
    pub fn new(p: (f64, f64)) -> Self {
        let (x, y) = p;
        Self {
            n: Vec5::new(1.0, 0.0, 2.0 * x, 0.0, y),
            m: Vec5::new(0.0, 1.0, 0.0, 2.0 * y, x),
        }
    }

    /// (q(u,v), q(u,w)) with q(u,v) = (n.v)(m.u) - (n.u)(m.v).
    #[inline]
    fn forms(&self, f: &Frame) -> (f64, f64, [f64; 6]) {
        let nu = self.n.dot(&f.column(0));
        let nv = self.n.dot(&f.column(1));
        let nw = self.n.dot(&f.column(2));
        let mu = self.m.dot(&f.column(0));
        let mv = self.m.dot(&f.column(1));
        let mw = self.m.dot(&f.column(2));
        (nv * mu - nu * mv, nw * mu - nu * mw, [nu, nv, nw, mu, mv, mw])
    }

    /// Adds `ca` times the gradient of q(u,v) and `cb` times that of q(u,w).
    #[inline]
    fn add_gradient(&self, dots: &[f64; 6], ca: f64, cb: f64, g: &mut Frame) {
        let [nu, nv, nw, mu, mv, mw] = *dots;
        let n = &self.n;
        let m = &self.m;
        let gu = m * (ca * nv + cb * nw) - n * (ca * mv + cb * mw);
        let gv = (n * mu - m * nu) * ca;
        let gw = (n * mu - m * nu) * cb;
        let mut c = g.column_mut(0);
        c += gu;
        let mut c = g.column_mut(1);
        c += gv;
        let mut c = g.column_mut(2);
        c += gw;
    }
}

/// max_j min_{p in S_j} (|q(u,v)(p)| + |q(u,w)(p)|).
pub(crate) fn objective(sets: &[Vec<PlanePoint>], f: &Frame) -> f64 {
    sets.iter()
        .map(|set| {
            set.iter()
                .map(|p| {
                    let (a, b, _) = p.forms(f);
                    a.abs() + b.abs()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Sum over sets of the smallest a^2 + b^2.
fn squares_objective(sets: &[Vec<PlanePoint>], f: &Frame, grad: Option<&mut Frame>) -> f64 {
    let mut total = 0.0;
    let mut g = Frame::zeros();
    for set in sets {
        let mut best = (f64::INFINITY, 0.0, 0.0, [0.0; 6], 0usize);
        for (k, p) in set.iter().enumerate() {
            let (a, b, dots) = p.forms(f);
            let v = a * a + b * b;
            if v < best.0 {
                best = (v, a, b, dots, k);
            }
        }
        total += best.0;
        set[best.4].add_gradient(&best.3, 2.0 * best.1, 2.0 * best.2, &mut g);
    }
    if let Some(out) = grad {
        *out = g;
    }
    total
}

/// Q factor of the thin QR decomposition with a nonnegative R diagonal.
pub(crate) fn retract(m: &Frame) -> Frame {
    let qr = m.qr();
    let mut q: Frame = qr.q();
    let r = qr.r();
    for k in 0..3 {
        if r[(k, k)] < 0.0 {
            let c = -q.column(k);
            q.set_column(k, &c);
        }
    }
    q
}

pub(crate) fn random_frame<R: Rng + ?Sized>(rng: &mut R) -> Frame {
    loop {
        let m = Frame::from_fn(|_, _| rng.sample(StandardNormal));
        if m.rank(1e-6) == 3 {
            return retract(&m);
        }
    }
}

fn project_tangent(u: &Frame, g: &Frame) -> Frame {
    let utg: Matrix3<f64> = u.transpose() * g;
    let sym = (utg + utg.transpose()) * 0.5;
    g - u * sym
}

pub(crate) struct DescentOutcome {
    pub frame: Frame,
    pub iterations: u64,
    pub converged: bool,
}

/// Riemannian steepest descent with Barzilai-Borwein trial steps and Armijo
/// backtracking; `track` sees every accepted iterate.
fn descend<F, T>(start: Frame, max_iter: u64, step_tol: f64, mut eval: F, mut track: T) -> DescentOutcome
where
    F: FnMut(&Frame, Option<&mut Frame>) -> f64,
    T: FnMut(&Frame),
{
    let mut u = start;
    let mut t = 1.0;
    let mut prev: Option<(Frame, Frame)> = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut g = Frame::zeros();
        let f0 = eval(&u, Some(&mut g));
        let xi = project_tangent(&u, &g);
        let gnorm2 = xi.norm_squared();
        if gnorm2 == 0.0 {
            converged = true;
            break;
        }
        if let Some((pu, pxi)) = &prev {
            let s = u - pu;
            let y = xi - pxi;
            let sy = s.dot(&y);
            if sy > 0.0 {
                t = (s.norm_squared() / sy).clamp(1e-8, 1e3);
            }
        }
        let mut accepted = None;
        for _ in 0..40 {
            let cand = retract(&(u - xi * t));
            if eval(&cand, None) <= f0 - 1e-4 * t * gnorm2 {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            converged = true;
            break;
        };
        let step = (next - u).norm();
        prev = Some((u, xi));
        u = next;
        track(&u);
        if step < step_tol {
            converged = true;
            break;
        }
    }
    DescentOutcome {
        frame: u,
        iterations,
        converged,
    }
}

/// Orthonormal basis of the tangent space at `u`: three rotations within the
/// frame followed by six moves into its orthogonal complement.
fn tangent_basis(u: &Frame) -> [Frame; 9] {
    let mut perp: Vec<Vec5> = Vec::with_capacity(2);
    while perp.len() < 2 {
        let mut best = (0.0, Vec5::zeros());
        for k in 0..5 {
            let mut e = Vec5::zeros();
            e[k] = 1.0;
            for c in 0..3 {
                let col = u.column(c);
                e -= col * col.dot(&e);
            }
            for q in &perp {
                e -= q * q.dot(&e);
            }
            let r = e.norm();
            if r > best.0 {
                best = (r, e / r);
            }
        }
        perp.push(best.1);
    }
    let mut basis = [Frame::zeros(); 9];
    let pairs = [(0, 1), (0, 2), (1, 2)];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let mut e = Frame::zeros();
        e.set_column(j, &(u.column(i) * std::f64::consts::FRAC_1_SQRT_2));
        e.set_column(i, &(-u.column(j) * std::f64::consts::FRAC_1_SQRT_2));
        basis[k] = e;
    }
    for (r, q) in perp.iter().enumerate() {
        for c in 0..3 {
            let mut e = Frame::zeros();
            e.set_column(c, q);
            basis[3 + 3 * r + c] = e;
        }
    }
    basis
}

/// Affine function `constant + slope . d` of the nine tangent coordinates.
#[derive(Clone, Copy, Debug)]
struct AffinePiece {
    constant: f64,
    slope: [f64; 9],
}

const LP_EPS: f64 = 1e-12;

/// Minimizes max_r (c_r + g_r . d) over the box |d_i| <= radius by dense
/// tableau simplex. With z = d + radius the rows read g_r . z - t' <= b_r; the
/// slack basis becomes feasible after one pivot of t' into the row with the
/// smallest b_r. Returns the optimal model value and step.
fn minimax_box_lp(pieces: &[AffinePiece], radius: f64) -> Option<(f64, [f64; 9])> {
    const NV: usize = 10;
    let m = pieces.len() + 9;
    if pieces.is_empty() {
        return None;
    }
    let cols = NV + m + 1;
    let rhs = cols - 1;
    // t = floor + t' with t' >= 0; every piece is at least floor on the box.
    let floor = pieces
        .iter()
        .map(|p| p.constant - radius * p.slope.iter().map(|g| g.abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut tab = vec![0.0; (m + 1) * cols];
    let mut basis: Vec<usize> = (0..m).map(|r| NV + r).collect();
    for (r, p) in pieces.iter().enumerate() {
        let row = &mut tab[r * cols..(r + 1) * cols];
        row[..9].copy_from_slice(&p.slope);
        row[9] = -1.0;
        row[NV + r] = 1.0;
        row[rhs] = floor - p.constant + radius * p.slope.iter().sum::<f64>();
    }
    for i in 0..9 {
        let r = pieces.len() + i;
        let row = &mut tab[r * cols..(r + 1) * cols];
        row[i] = 1.0;
        row[NV + r] = 1.0;
        row[rhs] = 2.0 * radius;
    }
    // Objective row holds reduced costs of min t.
    tab[m * cols + 9] = 1.0;
    let start = (0..pieces.len()).min_by(|&a, &b| tab[a * cols + rhs].total_cmp(&tab[b * cols + rhs]))?;
    pivot(&mut tab, cols, m, start, 9);
    basis[start] = 9;
    for iter in 0..2000 {
        let bland = iter >= 200;
        let mut enter = None;
        let mut most = -LP_EPS;
        for j in 0..rhs {
            let rc = tab[m * cols + j];
            if rc < most {
                enter = Some(j);
                if bland {
                    break;
                }
                most = rc;
            }
        }
        let Some(j) = enter else {
            let mut z = [0.0; 10];
            for (r, &b) in basis.iter().enumerate() {
                if b < NV {
                    z[b] = tab[r * cols + rhs];
                }
            }
            let d: [f64; 9] = std::array::from_fn(|i| (z[i] - radius).clamp(-radius, radius));
            let model = pieces
                .iter()
                .map(|p| p.constant + p.slope.iter().zip(&d).map(|(g, x)| g * x).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            return Some((model, d));
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = tab[r * cols + j];
            if a > LP_EPS {
                let ratio = tab[r * cols + rhs] / a;
                let better = match leave {
                    None => true,
                    Some((l, best)) => ratio < best - LP_EPS || (ratio <= best + LP_EPS && basis[r] < basis[l]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (r, _) = leave?;
        pivot(&mut tab, cols, m, r, j);
        basis[r] = j;
    }
    None
}

fn pivot(tab: &mut [f64], cols: usize, m: usize, r: usize, j: usize) {
    let inv = 1.0 / tab[r * cols + j];
    for x in &mut tab[r * cols..(r + 1) * cols] {
        *x *= inv;
    }
    let (before, rest) = tab.split_at_mut(r * cols);
    let (prow, after) = rest.split_at_mut(cols);
    for row in before.chunks_exact_mut(cols).chain(after.chunks_exact_mut(cols).take(m - r)) {
        let f = row[j];
        if f != 0.0 {
            for (x, p) in row.iter_mut().zip(prow.iter()) {
                *x -= f * p;
            }
        }
    }
}

/// Trust-region sequential linear programming on the max-min objective. Each
/// set is linearized at its currently smallest point; the step minimizes the
/// linearized max over a box of half-width `radius` in tangent coordinates.
fn polish<T: FnMut(&Frame)>(
    sets: &[Vec<PlanePoint>],
    start: Frame,
    max_iter: u64,
    step_tol: f64,
    mut track: T,
) -> DescentOutcome {
    let mut u = start;
    let mut f0 = objective(sets, &u);
    let mut radius = 0.1;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        if radius < step_tol || f0 == 0.0 {
            converged = true;
            break;
        }
        let basis = tangent_basis(&u);
        let mut rows = Vec::with_capacity(4 * sets.len());
        for set in sets {
            let mut best = (f64::INFINITY, 0.0, 0.0, [0.0; 6], 0usize);
            for (k, p) in set.iter().enumerate() {
                let (a, b, dots) = p.forms(&u);
                let v = a.abs() + b.abs();
                if v < best.0 {
                    best = (v, a, b, dots, k);
                }
            }
            let (_, a, b, dots, k) = best;
            let mut ga = Frame::zeros();
            set[k].add_gradient(&dots, 1.0, 0.0, &mut ga);
            let mut gb = Frame::zeros();
            set[k].add_gradient(&dots, 0.0, 1.0, &mut gb);
            let ca: [f64; 9] = std::array::from_fn(|i| ga.dot(&basis[i]));
            let cb: [f64; 9] = std::array::from_fn(|i| gb.dot(&basis[i]));
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                rows.push(AffinePiece {
                    constant: sa * a + sb * b,
                    slope: std::array::from_fn(|i| sa * ca[i] + sb * cb[i]),
                });
            }
        }
        let Some((model, d)) = minimax_box_lp(&rows, radius) else {
            radius *= 0.25;
            continue;
        };
        let predicted = f0 - model;
        if predicted <= 1e-15 * f0 {
            converged = true;
            break;
        }
        let mut step = Frame::zeros();
        let mut longest: f64 = 0.0;
        for (e, di) in basis.iter().zip(d) {
            longest = longest.max(di.abs());
            step += e * di;
        }
        let cand = retract(&(u + step));
        let f1 = objective(sets, &cand);
        let ratio = (f0 - f1) / predicted;
        if ratio > 0.1 {
            u = cand;
            f0 = f1;
            track(&u);
        }
        if ratio > 0.75 && longest >= 0.99 * radius {
            radius = (2.0 * radius).min(1.0);
        } else if ratio < 0.25 {
            radius *= 0.25;
        }
    }
    DescentOutcome {
        frame: u,
        iterations,
        converged,
    }
}

/// One restart: least-squares descent, then trust-region polishing of the
/// max-min objective. Returns the best frame by the true objective among all
/// iterates.
pub(crate) fn minimize_from(
    sets: &[Vec<PlanePoint>],
    start: Frame,
    max_iter: u64,
    step_tol: f64,
) -> (f64, Frame, u64, bool) {
    let mut best = (objective(sets, &start), start);
    let mut track = |f: &Frame| {
        let v = objective(sets, f);
        if v < best.0 {
            best = (v, *f);
        }
    };
    let first = max_iter / 5;
    let a = descend(
        start,
        first,
        step_tol,
        |f, g| squares_objective(sets, f, g),
        &mut track,
    );
    let b = polish(sets, a.frame, max_iter - first, step_tol, &mut track);
    (best.0, best.1, a.iterations + b.iterations, b.converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::block_rng;
    use rand::Rng;

    fn sets_of(points: &[(f64, f64)]) -> Vec<Vec<PlanePoint>> {
        points.iter().map(|&p| vec![PlanePoint::new(p)]).collect()
    }

    fn numeric_gradient(f: impl Fn(&Frame) -> f64, u: &Frame) -> Frame {
        let h = 1e-6;
        Frame::from_fn(|r, c| {
            let mut p = *u;
            p[(r, c)] += h;
            let mut m = *u;
            m[(r, c)] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = block_rng(2, 0);
        let sets: Vec<Vec<PlanePoint>> = (0..5)
            .map(|_| (0..3).map(|_| PlanePoint::new((rng.random(), rng.random()))).collect())
            .collect();
        let u = random_frame(&mut rng);
        let mut g = Frame::zeros();
        squares_objective(&sets, &u, Some(&mut g));
        let num = numeric_gradient(|f| squares_objective(&sets, f, None), &u);
        assert!((g - num).norm() < 1e-6 * (1.0 + g.norm()));
    }

    #[test]
    fn minimax_lp_matches_reference_solver() {
        use microlp::{ComparisonOp, OptimizationDirection, Problem};
        let mut rng = block_rng(9, 0);
        for case in 0..200 {
            let count = 4 + case % 24;
            let radius = 10f64.powf(rng.random_range(-4.0..0.0));
            let pieces: Vec<AffinePiece> = (0..count)
                .map(|_| AffinePiece {
                    constant: rng.random_range(-1.0..1.0),
                    slope: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
                })
                .collect();
            let (value, d) = minimax_box_lp(&pieces, radius).unwrap();
            assert!(d.iter().all(|x| x.abs() <= radius));
            let mut lp = Problem::new(OptimizationDirection::Minimize);
            let vars: Vec<_> = (0..9).map(|_| lp.add_var(0.0, (-radius, radius))).collect();
            let t = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
            for p in &pieces {
                let mut row: Vec<_> = vars.iter().zip(p.slope).map(|(&v, g)| (v, g)).collect();
                row.push((t, -1.0));
                lp.add_constraint(row.as_slice(), ComparisonOp::Le, -p.constant);
            }
            let reference = lp.solve().unwrap().into_solution().unwrap().objective();
            assert!((value - reference).abs() < 1e-9, "case {case}: {value} vs {reference}");
        }
    }

    #[test]
    fn retraction_is_orthonormal() {
        let mut rng = block_rng(4, 0);
        let u = random_frame(&mut rng);
        assert!((u.transpose() * u - Matrix3::identity()).norm() < 1e-13);
        let moved = retract(&(u + Frame::from_fn(|_, _| 0.3 * rng.random::<f64>())));
        assert!((moved.transpose() * moved - Matrix3::identity()).norm() < 1e-13);
    }

    #[test]
    fn descent_reaches_zero_on_collinear_points() {
        let pts: Vec<(f64, f64)> = (0..5).map(|k| {
            let t = 0.1 + 0.2 * k as f64;
            (t, 0.3 + 0.5 * t)
        }).collect();
        let sets = sets_of(&pts);
        let mut rng = block_rng(1, 0);
        let (v, _, _, _) = minimize_from(&sets, random_frame(&mut rng), 500, 1e-12);
        assert!(v < 1e-6, "value {v}");
    }
}
