//! Plates in R^5 and Monte Carlo evaluation of the ten-family
//! multilinear Kakeya-type functional.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::expsum::{sample_moments, Quadrature, QuadratureSpec};
use crate::geom::{Ball5, Point5, TangentFrame, Vec5};
use crate::transversality::{certify, Point2, StiefelConfig, TransversalityCertificate, SETS};

/// Exponent of each family's plate count in the functional.
pub const FAMILY_EXPONENT: f64 = 0.25;

/// W-neighbourhood of a 3-plane whose orthogonal complement is the tangent
/// plane V(x, y). The 3-plane meets V(x, y) at `offset`, given in the
/// Gram-Schmidt frame of (n, m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlateSpec", into = "PlateSpec")]
pub struct Plate {
    base: Point2,
    offset: [f64; 2],
    width: f64,
    e1: Vec5,
    e2: Vec5,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct PlateSpec {
    base: Point2,
    offset: [f64; 2],
    width: f64,
}

impl TryFrom<PlateSpec> for Plate {
    type Error = crate::Error;
    fn try_from(s: PlateSpec) -> Result<Self> {
        Plate::new(s.base, s.offset, s.width)
    }
}

impl From<Plate> for PlateSpec {
    fn from(p: Plate) -> Self {
        PlateSpec {
            base: p.base,
            offset: p.offset,
            width: p.width,
        }
    }
}

impl Plate {
    pub fn new(base: Point2, offset: [f64; 2], width: f64) -> Result<Self> {
        let frame = TangentFrame::new(base.0, base.1)?;
        if !(width > 0.0 && width.is_finite()) || offset.iter().any(|o| !o.is_finite()) {
            return invalid("plate width must be positive and the offset finite");
        }
        let (e1, e2) = frame.orthonormal();
        Ok(Self {
            base,
            offset,
            width,
            e1,
            e2,
        })
    }

    /// The plate of the given width whose 3-plane passes through `q`.
    pub fn through(base: Point2, q: &Point5, width: f64) -> Result<Self> {
        let frame = TangentFrame::new(base.0, base.1)?;
        let (e1, e2) = frame.orthonormal();
        let v = q.vector();
        Self::new(base, [e1.dot(&v), e2.dot(&v)], width)
    }

    pub fn base(&self) -> Point2 {
        self.base
    }

    pub fn offset(&self) -> [f64; 2] {
        self.offset
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Same plate with another width.
    pub fn with_width(&self, width: f64) -> Result<Self> {
        Self::new(self.base, self.offset, width)
    }

    /// Image under x -> factor * x.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return invalid("scale factor must be positive");
        }
        Self::new(self.base, [self.offset[0] * factor, self.offset[1] * factor], self.width * factor)
    }

    /// Distance from the projection of `q` onto V(x, y) to the offset.
    pub fn distance(&self, q: &Point5) -> f64 {
        let v = q.vector();
        let a = self.e1.dot(&v) - self.offset[0];
        let b = self.e2.dot(&v) - self.offset[1];
        a.hypot(b)
    }

    pub fn contains(&self, q: &Point5) -> bool {
        self.distance(q) <= self.width
    }
}

pub fn plate_contains(p: &Plate, q: &Point5) -> bool {
    p.contains(q)
}

/// Plates of one family; repetitions are allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateFamily {
    pub index: usize,
    pub plates: Vec<Plate>,
}

impl PlateFamily {
    pub fn new(index: usize, plates: Vec<Plate>) -> Result<Self> {
        if plates.is_empty() {
            return invalid(format!("plate family {index} is empty"));
        }
        Ok(Self { index, plates })
    }

    /// Distinct base points in order of first appearance.
    pub fn base_points(&self) -> Vec<Point2> {
        let mut out: Vec<Point2> = Vec::new();
        for p in &self.plates {
            if !out.contains(&p.base) {
                out.push(p.base);
            }
        }
        out
    }

    /// All plates share one base point, hence are translates of each other.
    pub fn is_parallel(&self) -> bool {
        self.base_points().len() == 1
    }

    /// Each plate repeated `times` times.
    pub fn duplicated(&self, times: usize) -> Result<Self> {
        let plates = self.plates.iter().flat_map(|p| std::iter::repeat_n(*p, times)).collect();
        Self::new(self.index, plates)
    }
}

fn check_families(families: &[PlateFamily]) -> Result<()> {
    if families.len() != SETS {
        return invalid(format!("expected {SETS} plate families, got {}", families.len()));
    }
    if families.iter().any(|f| f.plates.is_empty()) {
        return invalid("plate families must be non-empty");
    }
    Ok(())
}

/// Certifies the sets of distinct base points of the ten families.
pub fn family_transverse(families: &[PlateFamily], cfg: &StiefelConfig, nu: f64) -> Result<TransversalityCertificate> {
    check_families(families)?;
    let sets: Vec<Vec<Point2>> = families.iter().map(|f| f.base_points()).collect();
    certify(&sets, nu, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KakeyaEstimate {
    /// Estimate of the integral over the ball of prod_j (plate count_j)^{1/4}.
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub ball_volume: f64,
    /// W^5 prod_j N_j^{1/4} when every family is parallel and all widths agree.
    pub parallel_bound: Option<f64>,
}

impl KakeyaEstimate {
    /// value / parallel_bound, the empirical constant of the parallel case.
    pub fn bound_ratio(&self) -> Option<f64> {
        self.parallel_bound.map(|b| self.value / b)
    }
}

/// Plates of one family grouped by base point, sharing one projection.
struct Group {
    e1: Vec5,
    e2: Vec5,
    plates: Vec<([f64; 2], f64)>,
}

fn groups(family: &PlateFamily) -> Vec<Group> {
    let mut out: Vec<(Point2, Group)> = Vec::new();
    for p in &family.plates {
        let entry = (p.offset, p.width * p.width);
        match out.iter_mut().find(|(b, _)| *b == p.base) {
            Some((_, g)) => g.plates.push(entry),
            None => out.push((
                p.base,
                Group {
                    e1: p.e1,
                    e2: p.e2,
                    plates: vec![entry],
                },
            )),
        }
    }
    out.into_iter().map(|(_, g)| g).collect()
}

fn count_containing(groups: &[Group], v: &Vec5) -> usize {
    let mut n = 0;
    for g in groups {
        let a = g.e1.dot(v);
        let b = g.e2.dot(v);
        for (o, w2) in &g.plates {
            let da = a - o[0];
            let db = b - o[1];
            if da * da + db * db <= *w2 {
                n += 1;
            }
        }
    }
    n
}

/// Monte Carlo estimate of the integral over `ball` of
/// prod_j (sum_a T_{j,a})^{1/4}; uniform samples scaled by |B|.
pub fn kakeya_functional(families: &[PlateFamily], ball: &Ball5, q: &QuadratureSpec) -> Result<KakeyaEstimate> {
    check_families(families)?;
    if !matches!(q.method, Quadrature::MonteCarlo { .. }) {
        return invalid("the plate functional is integrated by Monte Carlo only");
    }
    let grouped: Vec<Vec<Group>> = families.iter().map(groups).collect();
    let moments = sample_moments::<1, _>(ball, None, q, |x| {
        let v = x.vector();
        let mut prod = 1.0;
        for g in &grouped {
            let n = count_containing(g, &v);
            if n == 0 {
                return [0.0];
            }
            prod *= (n as f64).powf(FAMILY_EXPONENT);
        }
        [prod]
    })?;
    let volume = ball.volume();
    let width = families[0].plates[0].width;
    let parallel = families.iter().all(|f| f.is_parallel() && f.plates.iter().all(|p| p.width == width));
    let parallel_bound = parallel.then(|| {
        width.powi(5)
            * families
                .iter()
                .map(|f| (f.plates.len() as f64).powf(FAMILY_EXPONENT))
                .product::<f64>()
    });
    Ok(KakeyaEstimate {
        value: volume * moments.estimate(0),
        std_error: volume * moments.std_error(0),
        samples: moments.samples(),
        ball_volume: volume,
        parallel_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::block_rng;
    use nalgebra::{Matrix2, Matrix5x2, Vector2};
    use proptest::prelude::*;
    use rand::Rng;

    const GENERIC: [Point2; 10] = [
        (0.1, 0.2),
        (0.8, 0.3),
        (0.4, 0.9),
        (0.6, 0.55),
        (0.25, 0.7),
        (0.95, 0.85),
        (0.5, 0.05),
        (0.15, 0.5),
        (0.7, 0.95),
        (0.35, 0.15),
    ];

    fn origin_families(width: f64) -> Vec<PlateFamily> {
        GENERIC
            .iter()
            .enumerate()
            .map(|(j, &b)| PlateFamily::new(j, vec![Plate::new(b, [0.0, 0.0], width).unwrap()]).unwrap())
            .collect()
    }

    /// Distance by least squares: solve (A^T A) c = A^T q for A = [n m].
    fn lsq_distance(p: &Plate, q: &Point5) -> f64 {
        let f = TangentFrame::new(p.base().0, p.base().1).unwrap();
        let a = Matrix5x2::from_columns(&[f.n(), f.m()]);
        let ata: Matrix2<f64> = a.transpose() * a;
        let c: Vector2<f64> = ata.lu().solve(&(a.transpose() * q.vector())).unwrap();
        let proj = a * c;
        let (e1, e2) = (f.n().normalize(), {
            let n = f.n().normalize();
            let m = f.m() - n * n.dot(&f.m());
            m.normalize()
        });
        let target = e1 * p.offset()[0] + e2 * p.offset()[1];
        (proj - target).norm()
    }

    fn mc(samples: u64, seed: u64) -> QuadratureSpec {
        QuadratureSpec::monte_carlo(samples, seed).unwrap()
    }

    #[test]
    fn containment_examples() {
        let base = (0.3, 0.7);
        let q = Point5::new([0.4, -1.0, 2.0, 0.5, 3.0]).unwrap();
        let p = Plate::through(base, &q, 1e-9).unwrap();
        assert!(p.contains(&q));
        assert!(p.distance(&q) < 1e-12);
        let (e1, _) = TangentFrame::new(base.0, base.1).unwrap().orthonormal();
        let w = 0.5;
        let moved = Point5::from_vector(&(q.vector() + e1 * (2.0 * w)));
        let p = Plate::through(base, &q, w).unwrap();
        assert!(!p.contains(&moved));
        assert!((p.distance(&moved) - 2.0 * w).abs() < 1e-12);
        assert!(Plate::new(base, [0.0, 0.0], 0.0).is_err());
        assert!(Plate::new((1.5, 0.0), [0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn containment_matches_least_squares_projection() {
        let mut rng = block_rng(31, 0);
        for _ in 0..1000 {
            let base = (rng.random::<f64>(), rng.random::<f64>());
            let p = Plate::new(base, [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)], rng.random_range(0.1..2.0)).unwrap();
            let q = Point5::new(std::array::from_fn(|_| rng.random_range(-3.0..3.0))).unwrap();
            let d = lsq_distance(&p, &q);
            assert!((p.distance(&q) - d).abs() < 1e-10);
            if (d - p.width()).abs() > 1e-9 {
                assert_eq!(p.contains(&q), d <= p.width());
            }
        }
    }

    #[test]
    fn plates_are_unbounded_along_the_complement() {
        let base = (0.2, 0.6);
        let p = Plate::new(base, [0.3, -0.2], 0.1).unwrap();
        let f = TangentFrame::new(base.0, base.1).unwrap();
        let on = Point5::from_vector(&(p.e1 * 0.3 - p.e2 * 0.2));
        assert!(p.contains(&on));
        let mut dir = Vec5::new(0.3, -0.1, 0.7, 0.2, -0.5);
        dir -= f.orthonormal().0 * f.orthonormal().0.dot(&dir);
        dir -= f.orthonormal().1 * f.orthonormal().1.dot(&dir);
        let far = Point5::from_vector(&(on.vector() + dir * 1e6));
        assert!(p.contains(&far));
    }

    #[test]
    fn constant_integrand_returns_ball_volume() {
        let ball = Ball5::new(Point5::origin(), 0.5).unwrap();
        let est = kakeya_functional(&origin_families(1.0), &ball, &mc(100_000, 1)).unwrap();
        assert!((est.value - ball.volume()).abs() < 1e-12 * ball.volume());
        assert_eq!(est.parallel_bound, Some(1.0));
    }

    #[test]
    fn empty_family_gives_zero() {
        let mut fams = origin_families(1.0);
        fams[4] = PlateFamily::new(4, vec![Plate::new(GENERIC[4], [50.0, 0.0], 1.0).unwrap()]).unwrap();
        let ball = Ball5::new(Point5::origin(), 2.0).unwrap();
        let est = kakeya_functional(&fams, &ball, &mc(20_000, 2)).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn ball_inside_the_intersection_is_a_lower_bound() {
        let rho = 0.7;
        let fams = origin_families(rho);
        let inner = Ball5::new(Point5::origin(), rho).unwrap();
        let outer = Ball5::new(Point5::origin(), 2.0 * rho).unwrap();
        let est = kakeya_functional(&fams, &outer, &mc(200_000, 3)).unwrap();
        assert!(est.value + 3.0 * est.std_error >= inner.volume());
    }

    #[test]
    fn grid_quadrature_is_rejected() {
        let ball = Ball5::new(Point5::origin(), 1.0).unwrap();
        let q = QuadratureSpec::tensor_grid(4).unwrap();
        assert!(kakeya_functional(&origin_families(1.0), &ball, &q).is_err());
        assert!(kakeya_functional(&origin_families(1.0)[..9], &ball, &mc(10, 1)).is_err());
    }

    #[test]
    fn base_points_and_transversality() {
        let fams = origin_families(1.0);
        let cfg = StiefelConfig {
            restarts: 4,
            max_iterations: 200,
            ..Default::default()
        };
        assert!(family_transverse(&fams, &cfg, 1e-6).unwrap().passes);
        let mut shared = fams.clone();
        shared[3] = PlateFamily::new(3, vec![Plate::new(GENERIC[0], [1.0, 0.0], 1.0).unwrap()]).unwrap();
        assert!(!family_transverse(&shared, &cfg, 1e-6).unwrap().passes);
        let line: Vec<PlateFamily> = (0..10)
            .map(|j| {
                let t = 0.05 + 0.09 * j as f64;
                PlateFamily::new(j, vec![Plate::new((t, 0.5 * t + 0.2), [0.0, 0.0], 1.0).unwrap()]).unwrap()
            })
            .collect();
        let c = family_transverse(&line, &cfg, 1e-6).unwrap();
        assert!(!c.passes);
        assert!(c.condition_i_min < 1e-12);
        let fam = PlateFamily::new(0, vec![Plate::new((0.1, 0.1), [0.0, 0.0], 1.0).unwrap(), Plate::new((0.1, 0.1), [1.0, 0.0], 1.0).unwrap()]).unwrap();
        assert_eq!(fam.base_points().len(), 1);
        assert!(fam.is_parallel());
    }


    /// Ten parallel families of nine width-w plates on a 3x3 offset grid.
    fn grid_families(w: f64) -> Vec<PlateFamily> {
        GENERIC
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let plates = (-1..=1)
                    .flat_map(|a| (-1..=1).map(move |c| Plate::new(b, [a as f64 * w, c as f64 * w], w).unwrap()))
                    .collect();
                PlateFamily::new(j, plates).unwrap()
            })
            .collect()
    }

    #[test]
    fn rescaling_multiplies_by_n_to_minus_five_halves() {
        let n: f64 = 16.0;
        let f = n.powf(-0.5);
        let fams = grid_families(1.0);
        let scaled: Vec<PlateFamily> = fams
            .iter()
            .map(|fam| PlateFamily::new(fam.index, fam.plates.iter().map(|p| p.scaled(f).unwrap()).collect()).unwrap())
            .collect();
        let q = mc(100_000, 8);
        let a = kakeya_functional(&fams, &Ball5::new(Point5::origin(), 3.0).unwrap(), &q).unwrap();
        let b = kakeya_functional(&scaled, &Ball5::new(Point5::origin(), 3.0 * f).unwrap(), &q).unwrap();
        let expected = a.value * n.powf(-2.5);
        assert!((b.value - expected).abs() <= 3.0 * (b.std_error + a.std_error * n.powf(-2.5)));
        assert!(a.value > 0.0);
    }

    #[test]
    fn doubling_the_ball_grows_the_parallel_case_slowly() {
        let fams = grid_families(1.0);
        let q = mc(100_000, 9);
        let small = kakeya_functional(&fams, &Ball5::new(Point5::origin(), 4.0).unwrap(), &q).unwrap();
        let large = kakeya_functional(&fams, &Ball5::new(Point5::origin(), 8.0).unwrap(), &q).unwrap();
        assert!((small.parallel_bound.unwrap() - 243.0).abs() < 1e-9);
        assert!(large.value < 2f64.sqrt() * small.value);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn wider_plates_never_decrease_the_estimate(w in 0.2f64..1.5, grow in 1.0f64..2.0, seed in 0u64..1000) {
            let ball = Ball5::new(Point5::origin(), 2.0).unwrap();
            let q = mc(4_000, seed);
            let a = kakeya_functional(&origin_families(w), &ball, &q).unwrap();
            let b = kakeya_functional(&origin_families(w * grow), &ball, &q).unwrap();
            prop_assert!(b.value >= a.value);
        }

        #[test]
        fn duplication_scales_by_fourth_root(times in 1usize..6, family in 0usize..10, seed in 0u64..1000) {
            let ball = Ball5::new(Point5::origin(), 1.5).unwrap();
            let q = mc(4_000, seed);
            let fams = origin_families(1.0);
            let mut dup = fams.clone();
            dup[family] = fams[family].duplicated(times).unwrap();
            let a = kakeya_functional(&fams, &ball, &q).unwrap();
            let b = kakeya_functional(&dup, &ball, &q).unwrap();
            let expected = a.value * (times as f64).powf(0.25);
            prop_assert!((b.value - expected).abs() <= 1e-12 * expected.max(1e-300));
        }
    }
}
