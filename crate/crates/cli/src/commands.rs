use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use quadweyl_core::decoupling::{
    continuous_witness, critical_gamma, decoupling_ratio_continuous, decoupling_ratio_discrete, discrete_witness, gamma_iteration, kappa,
    search_contradiction, trivial_bound_check, DecouplingRatio, ExponentIterationInput, Witness,
};
use quadweyl_core::expsum::QuadratureSpec;
use quadweyl_core::geom::TangentFrame;
use quadweyl_core::kakeya::{family_transverse, kakeya_functional};
use quadweyl_core::mvt::{count_exact, count_near, fit_exponent, torus_mean_value, CountConfig, RealNodeSet};
use quadweyl_core::numerics::block_rng;
use quadweyl_core::select::{select_ten, CandidateOrder, Footprint, SelectionConfig, SquareCollection};
use quadweyl_core::transversality::{bl_check, certify_with_slack, StiefelConfig};

use crate::args::*;
use crate::input::{read_json, FamiliesFile, NodesFile, PointsFile, SquaresFile};

/// Rows written by --csv, with a fixed column order per subcommand.
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub struct Report {
    pub result: Value,
    pub table: Table,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn stiefel(a: &StiefelArgs, seed: u64) -> StiefelConfig {
    StiefelConfig {
        restarts: a.restarts,
        max_iterations: a.iterations,
        seed,
        ..StiefelConfig::default()
    }
}

pub fn count(a: &CountArgs, seed: u64) -> Result<Report> {
    let cfg = CountConfig {
        tuple_budget: a.tuple_budget,
        torus_budget: a.torus_budget,
        ..CountConfig::default()
    };
    let r = match a.mode {
        CountMode::Exact => count_exact(a.n, a.s, &cfg)?,
        CountMode::Torus => torus_mean_value(a.n, a.s, &cfg)?,
        CountMode::Near => {
            let nodes = match &a.nodes {
                Some(path) => read_json::<NodesFile>(path)?.into_nodes()?,
                None => RealNodeSet::random(a.n as usize, &mut block_rng(seed, 0))?,
            };
            if nodes.n() as u64 != a.n {
                bail!("node file has {} nodes but N = {}", nodes.n(), a.n);
            }
            count_near(&nodes, a.s, &cfg)?
        }
    };
    let elapsed = r.elapsed.as_secs_f64();
    let mode = to_value(&a.mode)?;
    let result = json!({
        "N": r.n,
        "s": r.s,
        "mode": mode,
        "count": r.count,
        "residual": r.residual,
        "elapsed_seconds": elapsed,
    });
    let table = Table {
        headers: vec!["N", "s", "mode", "count", "residual", "elapsed_seconds"],
        rows: vec![vec![
            r.n.to_string(),
            r.s.to_string(),
            mode.as_str().unwrap_or_default().to_string(),
            r.count.to_string(),
            opt(r.residual),
            elapsed.to_string(),
        ]],
    };
    Ok(Report { result, table })
}

pub fn decouple(a: &DecoupleArgs, seed: u64) -> Result<Report> {
    if a.scales.is_empty() {
        bail!("--scales needs at least one value");
    }
    let witness = match a.witness {
        WitnessKind::Ones => Witness::Ones,
        WitnessKind::Random => Witness::RandomPhases { seed },
        WitnessKind::SingleDelta => Witness::SingleDelta { index: a.index },
    };
    let q = QuadratureSpec::monte_carlo(a.samples, seed)?;
    let mut ratios: Vec<DecouplingRatio> = Vec::new();
    for &n in &a.scales {
        let r = match a.mode {
            DecoupleMode::Continuous => {
                let g = continuous_witness(n, witness)?;
                decoupling_ratio_continuous(&g, n, a.p, &q, a.budget, witness)?
            }
            DecoupleMode::Discrete => {
                let ns = discrete_witness(n, witness)?;
                decoupling_ratio_discrete(&ns, a.p, a.r_factor * (n * n) as f64, &q, witness)?
            }
        };
        ratios.push(r);
    }
    let rows: Vec<Value> = ratios
        .iter()
        .map(|r| {
            let mut v = to_value(r)?;
            v["trivial_bound"] = json!(r.trivial_bound());
            v["trivial_bound_ok"] = json!(trivial_bound_check(r));
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let fit = if ratios.len() >= 2 {
        let pts: Vec<(f64, f64)> = ratios.iter().map(|r| (r.scale, r.ratio)).collect();
        Some(fit_exponent(&pts)?)
    } else {
        None
    };
    let comparison: Vec<Value> = [("1/2-1/p", 0.5 - 1.0 / a.p), ("1-5/p", 1.0 - 5.0 / a.p)]
        .iter()
        .map(|&(label, exponent)| {
            json!({
                "label": label,
                "exponent": exponent,
                "fitted_slope": fit.as_ref().map(|f| f.slope),
                "difference": fit.as_ref().map(|f| f.slope - exponent),
            })
        })
        .collect();
    let result = json!({
        "p": a.p,
        "mode": to_value(&a.mode)?,
        "witness": to_value(&witness)?,
        "rows": rows,
        "fit": fit.as_ref().map(to_value).transpose()?,
        "comparison": comparison,
    });
    let table = Table {
        headers: vec!["N", "scale", "ratio", "lhs", "lhs_std_error", "rhs", "rhs_std_error", "trivial_bound", "trivial_bound_ok"],
        rows: ratios
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.scale.to_string(),
                    r.ratio.to_string(),
                    r.lhs.value.to_string(),
                    r.lhs.std_error.to_string(),
                    r.rhs.value.to_string(),
                    r.rhs.std_error.to_string(),
                    r.trivial_bound().to_string(),
                    trivial_bound_check(r).to_string(),
                ]
            })
            .collect(),
    };
    Ok(Report { result, table })
}

pub fn select(a: &SelectArgs, seed: u64) -> Result<Report> {
    let level = a.k;
    let col = match (&a.squares, a.row, a.all) {
        (Some(path), None, false) => {
            let c = read_json::<SquaresFile>(path)?.into_collection()?;
            if c.level() != level {
                bail!("square file is at level {} but K = {level}", c.level());
            }
            c
        }
        (None, Some(j), false) => SquareCollection::row(level, j)?,
        (None, None, true) => SquareCollection::full(level)?,
        _ => bail!("give exactly one of --all, --row and --squares"),
    };
    let cfg = SelectionConfig {
        c1: a.c1,
        c2: a.c2,
        lambda: a.lambda,
        epsilon: a.epsilon,
        max_depth: a.max_depth,
        footprint: match a.footprint {
            FootprintKind::HalfSide => Footprint::HalfSide,
            FootprintKind::Dilated => Footprint::Dilated,
        },
        order: match a.order {
            OrderKind::RowMajor => CandidateOrder::RowMajor,
            OrderKind::Shuffled => CandidateOrder::Shuffled { seed },
        },
        node_budget: a.node_budget,
        nu: a.nu,
        stiefel: stiefel(&a.stiefel, seed),
    };
    let r = select_ten(&col, &cfg)?;
    let table = Table {
        headers: vec!["level", "i", "j"],
        rows: r
            .squares()
            .iter()
            .map(|s| vec![s.level().to_string(), s.i().to_string(), s.j().to_string()])
            .collect(),
    };
    Ok(Report {
        result: to_value(&r)?,
        table,
    })
}

pub fn transversality(a: &TransversalityArgs, seed: u64) -> Result<Report> {
    let sets = read_json::<PointsFile>(&a.points)?.into_sets()?;
    let cert = certify_with_slack(&sets, a.nu, &stiefel(&a.stiefel, seed), a.slack)?;
    let bl = if a.bl_trials > 0 {
        let frames = sets
            .iter()
            .map(|s| {
                let k = s.len() as f64;
                let (x, y) = s.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
                TangentFrame::new(x / k, y / k)
            })
            .collect::<quadweyl_core::Result<Vec<_>>>()?;
        Some(bl_check(&frames, a.bl_trials, 1e-9, seed)?)
    } else {
        None
    };
    let table = Table {
        headers: vec!["nu", "condition_i_min", "condition_ii_bound", "passes", "passes_conservative", "inconclusive"],
        rows: vec![vec![
            cert.nu.to_string(),
            cert.condition_i_min.to_string(),
            cert.condition_ii_bound.to_string(),
            cert.passes.to_string(),
            cert.passes_conservative.to_string(),
            cert.inconclusive.to_string(),
        ]],
    };
    let result = json!({
        "certificate": to_value(&cert)?,
        "bl_report": bl.as_ref().map(to_value).transpose()?,
        "bl_passes": bl.as_ref().map(|b| b.passes()),
    });
    Ok(Report { result, table })
}

pub fn kakeya(a: &KakeyaArgs, seed: u64) -> Result<Report> {
    let (ball, families) = read_json::<FamiliesFile>(&a.families)?.into_parts()?;
    let q = QuadratureSpec::monte_carlo(a.samples, seed)?;
    let est = kakeya_functional(&families, &ball, &q)?;
    let cert = if a.certify {
        Some(family_transverse(&families, &stiefel(&a.stiefel, seed), a.nu).context("family transversality")?)
    } else {
        None
    };
    let table = Table {
        headers: vec!["value", "std_error", "samples", "ball_volume", "parallel_bound", "bound_ratio"],
        rows: vec![vec![
            est.value.to_string(),
            est.std_error.to_string(),
            est.samples.to_string(),
            est.ball_volume.to_string(),
            opt(est.parallel_bound),
            opt(est.bound_ratio()),
        ]],
    };
    let result = json!({
        "estimate": to_value(&est)?,
        "bound_ratio": est.bound_ratio(),
        "certificate": cert.as_ref().map(to_value).transpose()?,
    });
    Ok(Report { result, table })
}

fn parse_gamma_hyp(text: &str, p: f64) -> Result<f64> {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("auto") {
        let base = critical_gamma(p)?;
        if rest.is_empty() {
            return Ok(base);
        }
        let shift: f64 = rest.parse().with_context(|| format!("cannot parse the shift in --gamma-hyp {text}"))?;
        return Ok(base + shift);
    }
    t.parse().with_context(|| format!("--gamma-hyp {text} is neither a number nor auto[+-x]"))
}

pub fn gamma(a: &GammaArgs) -> Result<Report> {
    let gamma_hyp = parse_gamma_hyp(&a.gamma_hyp, a.p)?;
    if a.s_max < 2 {
        bail!("--s-max must be at least 2");
    }
    let mut table = Vec::new();
    for s in 2..=a.s_max {
        let input = ExponentIterationInput {
            p: a.p,
            gamma_hyp,
            delta: a.delta,
            epsilon: a.epsilon,
            s,
            c: a.c,
        };
        let g = gamma_iteration(&input)?;
        table.push((s, g, 2f64.powi(s as i32) * (g - gamma_hyp)));
    }
    let search = if a.search {
        Some(search_contradiction(a.p, gamma_hyp, a.c, a.s_max, a.eps_max)?)
    } else {
        None
    };
    let rows: Vec<Value> = table
        .iter()
        .map(|&(s, g, r)| json!({"s": s, "gamma": g, "below_hypothesis": g < gamma_hyp, "normalized_residual": r}))
        .collect();
    let result = json!({
        "p": a.p,
        "kappa": kappa(a.p)?,
        "critical_gamma": critical_gamma(a.p)?,
        "gamma_hyp": gamma_hyp,
        "epsilon": a.epsilon,
        "delta": a.delta,
        "c": a.c,
        "table": rows,
        "search": search.map(|w| json!({"found": w.is_some(), "witness": w})),
    });
    let table = Table {
        headers: vec!["s", "gamma", "below_hypothesis", "normalized_residual"],
        rows: table
            .iter()
            .map(|&(s, g, r)| vec![s.to_string(), g.to_string(), (g < gamma_hyp).to_string(), r.to_string()])
            .collect(),
    };
    Ok(Report { result, table })
}

pub fn version() -> Report {
    let v = env!("CARGO_PKG_VERSION");
    Report {
        result: json!({"name": "quadweyl", "version": v}),
        table: Table {
            headers: vec!["name", "version"],
            rows: vec![vec!["quadweyl".into(), v.into()]],
        },
    }
}
