//! Lower-bound estimates of the decoupling constant from witness densities,
//! and the exponent iteration driven by kappa_p = (p-5)/(p-2).

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::expsum::{extension_value, random_phases, sample_moments, GridFunction2, NodeSystem, NormEstimate, QuadratureSpec, C64};
use crate::geom::{Ball5, BallWeight, Point5, Rect};
use crate::numerics::block_rng;

/// Slack constant of the trivial bound ratio <= C * M^{1-1/p}.
pub const TRIVIAL_BOUND_SLACK: f64 = 10.0;

/// Default cap on integrand evaluations (samples times grid points) for the
/// continuous ratio.
pub const DEFAULT_CONTINUOUS_BUDGET: u64 = 10_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "witness")]
pub enum Witness {
    /// All coefficients (or the density) equal to 1.
    Ones,
    /// Unimodular coefficients with seeded uniform phases; one phase per block
    /// in the continuous case.
    RandomPhases { seed: u64 },
    /// A single node (discrete) or a single block (continuous) carries 1.
    SingleDelta { index: usize },
    /// A caller-supplied node system or density.
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioKind {
    /// Weyl sum over B_R against the l^p norm of its coefficients.
    Discrete,
    /// Extension of a density over [0,1]^2 against its N^{-1/2}-blocks, on w_{B_N}.
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecouplingRatio {
    pub kind: RatioKind,
    pub n: usize,
    pub p: f64,
    /// Number of decoupling pieces M; the trivial bound is M^{1-1/p}.
    pub scale: f64,
    pub lhs: NormEstimate,
    pub rhs: NormEstimate,
    /// lhs.value / rhs.value.
    pub ratio: f64,
    pub witness: Witness,
}

impl DecouplingRatio {
    fn new(kind: RatioKind, n: usize, p: f64, scale: f64, lhs: NormEstimate, rhs: NormEstimate, witness: Witness) -> Result<Self> {
        if !(rhs.value > 0.0) {
            return Err(Error::DegenerateQuadrature("right-hand side vanished".into()));
        }
        Ok(Self {
            kind,
            n,
            p,
            scale,
            ratio: lhs.value / rhs.value,
            lhs,
            rhs,
            witness,
        })
    }

    pub fn trivial_bound(&self) -> f64 {
        TRIVIAL_BOUND_SLACK * self.scale.powf(1.0 - 1.0 / self.p)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 2.0 && p.is_finite()) {
        return invalid("p must be finite and at least 2");
    }
    Ok(())
}

/// Discrete witness on the nodes i/N.
pub fn discrete_witness(n: usize, witness: Witness) -> Result<NodeSystem> {
    let one = C64::new(1.0, 0.0);
    match witness {
        Witness::Ones => NodeSystem::ones(n),
        Witness::RandomPhases { seed } => NodeSystem::uniform(n, random_phases(n * n, &mut block_rng(seed, 0))),
        Witness::SingleDelta { index } => {
            if index >= n * n {
                return invalid(format!("node index {index} is out of range for N = {n}"));
            }
            let mut a = vec![C64::new(0.0, 0.0); n * n];
            a[index] = one;
            NodeSystem::uniform(n, a)
        }
        Witness::Custom => invalid("a custom witness has no generator"),
    }
}

/// (|B_R|^{-1} integral over B_R of |weyl_sum|^p)^{1/p} against ||a||_p, with
/// B_R centred at the origin.
pub fn decoupling_ratio_discrete(ns: &NodeSystem, p: f64, r: f64, q: &QuadratureSpec, witness: Witness) -> Result<DecouplingRatio> {
    check_p(p)?;
    let n = ns.n();
    let n2 = (n * n) as f64;
    if !(r >= n2 && r.is_finite()) {
        return invalid(format!("ball radius {r} is below N^2 = {n2}"));
    }
    let norm = ns.coefficient_norm(p);
    if !(norm > 0.0) {
        return invalid("coefficients are all zero");
    }
    let ball = Ball5::new(Point5::origin(), r)?;
    let sm = sample_moments::<1, _>(&ball, None, q, |x| [ns.weyl_sum(x).norm().powf(p)])?;
    let rhs = NormEstimate {
        value: norm,
        std_error: 0.0,
        samples: 0,
        tail_weight_mass: 0.0,
    };
    DecouplingRatio::new(RatioKind::Discrete, n, p, n2, sm.norm(0, p), rhs, witness)
}

/// sqrt(N) when N is a power of 4.
fn blocks_per_axis(n: usize) -> Result<usize> {
    if n == 0 || !n.is_power_of_two() || !n.trailing_zeros().is_multiple_of(2) {
        return invalid(format!("N = {n} must be a power of 4"));
    }
    Ok(1 << (n.trailing_zeros() / 2))
}

/// Per-axis grid points inside one block of side N^{-1/2}: eight per cycle of
/// a phase whose range across the block is at most 4 N side.
pub fn block_resolution(n: usize) -> Result<usize> {
    let k = blocks_per_axis(n)?;
    Ok(((8.0 * 4.0 * n as f64 / k as f64).ceil() as usize).max(1))
}

/// Continuous witness on [0,1]^2 at the resolution `block_resolution` asks for.
pub fn continuous_witness(n: usize, witness: Witness) -> Result<GridFunction2> {
    let k = blocks_per_axis(n)?;
    let mb = block_resolution(n)?;
    let m = k * mb;
    let block_of = |a: usize, b: usize| (a / mb) * k + b / mb;
    let one = C64::new(1.0, 0.0);
    let samples: Vec<C64> = match witness {
        Witness::Ones => vec![one; m * m],
        Witness::RandomPhases { seed } => {
            let phases = random_phases(k * k, &mut block_rng(seed, 0));
            (0..m * m).map(|idx| phases[block_of(idx / m, idx % m)]).collect()
        }
        Witness::SingleDelta { index } => {
            if index >= k * k {
                return invalid(format!("block index {index} is out of range for N = {n}"));
            }
            (0..m * m)
                .map(|idx| if block_of(idx / m, idx % m) == index { one } else { C64::new(0.0, 0.0) })
                .collect()
        }
        Witness::Custom => return invalid("a custom witness has no generator"),
    };
    GridFunction2::new(Rect::unit(), m, samples)
}

/// ||E g||_{L^p(w_{B_N})} against (sum over blocks of ||E_Delta g||^p)^{1/p},
/// with B_N centred at the origin and both norms on one sample set.
pub fn decoupling_ratio_continuous(
    g: &GridFunction2,
    n: usize,
    p: f64,
    q: &QuadratureSpec,
    budget: u64,
    witness: Witness,
) -> Result<DecouplingRatio> {
    check_p(p)?;
    let k = blocks_per_axis(n)?;
    let sq = g.square();
    if (sq.x0, sq.x1, sq.y0, sq.y1) != (0.0, 1.0, 0.0, 1.0) {
        return invalid("density must live on [0,1]^2");
    }
    let need = block_resolution(n)?;
    let blocks = g.blocks(k)?;
    let mb = g.resolution() / k;
    if mb < need {
        return invalid(format!("{mb} points per block axis is below the required {need}"));
    }
    let active: Vec<GridFunction2> = blocks.into_iter().filter(|b| !b.is_zero()).collect();
    if active.is_empty() {
        return invalid("density is zero");
    }
    let required = q.evaluations() * (active.len() * mb * mb) as u128;
    if required > budget as u128 {
        return Err(Error::BudgetExceeded {
            what: "continuous decoupling ratio",
            required,
            limit: budget,
        });
    }
    let ball = Ball5::new(Point5::origin(), n as f64)?;
    let w = BallWeight::standard(ball);
    let sm = sample_moments::<2, _>(&ball, Some(&w), q, |x| {
        let mut total = C64::new(0.0, 0.0);
        let mut pieces = 0.0;
        for b in &active {
            let v = extension_value(b, x);
            total += v;
            pieces += v.norm().powf(p);
        }
        [total.norm().powf(p), pieces]
    })?;
    DecouplingRatio::new(RatioKind::Continuous, n, p, (k * k) as f64, sm.norm(0, p), sm.norm(1, p), witness)
}

/// ratio <= 10 M^{1-1/p}; a violation signals a quadrature fault.
pub fn trivial_bound_check(ratio: &DecouplingRatio) -> bool {
    ratio.ratio <= ratio.trivial_bound()
}

/// kappa_p = (p-5)/(p-2).
pub fn kappa(p: f64) -> Result<f64> {
    if !(p > 2.0 && p.is_finite()) {
        return invalid("kappa needs finite p > 2");
    }
    Ok((p - 5.0) / (p - 2.0))
}

/// (2 kappa - 1)/(2 kappa) + 1/2 - 1/p, the value at which the normalised
/// iteration residual vanishes as s grows.
pub fn critical_gamma(p: f64) -> Result<f64> {
    if !(p > 8.0) {
        return invalid("the critical exponent needs p > 8");
    }
    let k = kappa(p)?;
    Ok((2.0 * k - 1.0) / (2.0 * k) + 0.5 - 1.0 / p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentIterationInput {
    pub p: f64,
    pub gamma_hyp: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub s: u32,
    /// Coefficient of the (1 - kappa_p)^s tail; its size is not determined, so it
    /// is an input and defaults to 0 in the tools.
    pub c: f64,
}

impl ExponentIterationInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 8.0 && self.p.is_finite()) {
            return invalid("the iteration needs finite p > 8");
        }
        if !self.gamma_hyp.is_finite() {
            return invalid("gamma hypothesis must be finite");
        }
        if !(self.delta >= 0.0 && self.epsilon >= 0.0 && self.delta.is_finite() && self.epsilon.is_finite()) {
            return invalid("delta and epsilon must be finite and nonnegative");
        }
        if self.s < 2 {
            return invalid("s must be at least 2");
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return invalid("tail constant must be finite and nonnegative");
        }
        Ok(())
    }
}

/// gamma_{p,delta,s,epsilon} with the tail term c (1 - kappa_p)^s.
pub fn gamma_iteration(input: &ExponentIterationInput) -> Result<f64> {
    input.validate()?;
    let p = input.p;
    let k = kappa(p)?;
    let s = input.s as i32;
    let two_s = 2f64.powi(-s);
    let geo = 1.0 - (1.0 - k).powi(s - 1);
    let dbl = 1.0 - (2.0 * (1.0 - k)).powi(s - 1);
    let d = 2.0 * k - 1.0;
    Ok(input.epsilon * (s - 1) as f64
        + two_s
        + k * (input.gamma_hyp + input.delta) * (geo / k - 2.0 * two_s * dbl / d)
        + k * two_s * (1.0 - 2.0 / p) * dbl / d
        + input.c * (1.0 - k).powi(s))
}

/// 2^s (gamma_{p,0,s,0}(g) - g) at g = critical_gamma(p) with c = 0; it tends to 0.
pub fn fixed_point_residual(p: f64, s: u32) -> Result<f64> {
    let g = critical_gamma(p)?;
    let v = gamma_iteration(&ExponentIterationInput {
        p,
        gamma_hyp: g,
        delta: 0.0,
        epsilon: 0.0,
        s,
        c: 0.0,
    })?;
    Ok(2f64.powi(s as i32) * (v - g))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContradictionWitness {
    pub s: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub gamma_hyp: f64,
}

/// Smallest s in [2, s_max], and for it the largest epsilon = delta on the grid
/// eps_max 10^{-k} (k = 0..=6), with gamma_{p,delta,s,epsilon} < gamma_hyp.
pub fn search_contradiction(p: f64, gamma_hyp: f64, c: f64, s_max: u32, eps_max: f64) -> Result<Option<ContradictionWitness>> {
    if !(eps_max > 0.0 && eps_max.is_finite()) {
        return invalid("eps_max must be positive");
    }
    for s in 2..=s_max {
        for k in 0..=6 {
            let eps = eps_max * 10f64.powi(-k);
            let input = ExponentIterationInput {
                p,
                gamma_hyp,
                delta: eps,
                epsilon: eps,
                s,
                c,
            };
            let gamma = gamma_iteration(&input)?;
            if gamma < gamma_hyp {
                return Ok(Some(ContradictionWitness {
                    s,
                    epsilon: eps,
                    delta: eps,
                    gamma,
                    gamma_hyp,
                }));
            }
        }
    }
    Ok(None)
}
