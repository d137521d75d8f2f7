//! Analytic counterparts of the simulator's estimands.

use mmexit::error::{Error, Result};
use mmexit::factorization::{minus_grid, solve_plus_factor, sup_tail, PlusFactor};
use mmexit::linalg::{self, RealMatrix};
use mmexit::risk::{self, RiskModel};
use mmexit::simulator::{self, EstimandParams, McEstimate};
use mmexit::transforms::InversionConfig;
use mmexit::two_boundary::{bratiichuk_tails, limit_bt, solve_bt, LimitOptions, SolveOptions, TwoBoundarySolution};
use mmexit::Model;

use crate::defaults;

/// What a command runs on: a bare process or a capped-reserve scenario.
#[derive(Debug, Clone)]
pub enum Target {
    Process(Model),
    Risk(RiskModel),
}

impl Target {
    pub fn model(&self) -> &Model {
        match self {
            Target::Process(m) => m,
            Target::Risk(r) => &r.model,
        }
    }

    fn risk(&self, name: &str) -> Result<&RiskModel> {
        match self {
            Target::Risk(r) => Ok(r),
            Target::Process(_) => Err(Error::InvalidArgument(format!(
                "estimand `{name}` needs a risk scenario (--scenario or --risk-preset)"
            ))),
        }
    }

    /// Fills the cap and start from the scenario, if there is one.
    pub fn params(&self, mut p: EstimandParams) -> EstimandParams {
        if let Target::Risk(r) = self {
            p.b = r.spec.b;
            p.u = r.spec.u;
        }
        p
    }
}

pub fn inversion() -> InversionConfig {
    InversionConfig {
        alpha_max: defaults::INVERSION_ALPHA_MAX,
        n_alpha: defaults::INVERSION_TERMS,
        tol: defaults::INVERSION_TOL,
    }
}

pub fn solve_options() -> SolveOptions {
    SolveOptions {
        max_quadrature_error: defaults::QUADRATURE_ERROR,
        inversion: inversion(),
        ..SolveOptions::default()
    }
}

pub fn factor(model: &Model, s: f64) -> Result<PlusFactor> {
    solve_plus_factor(model, s, defaults::FIXED_POINT_TOL)
}

pub fn interval(model: &Model, s: f64, t: f64, grid: usize) -> Result<TwoBoundarySolution> {
    solve_bt(model, &factor(model, s)?, t, grid, &solve_options())
}

fn node(p: &EstimandParams, grid: usize) -> Result<usize> {
    let pos = p.x / p.t * grid as f64;
    let i = pos.round();
    if (pos - i).abs() > 1e-9 || i < 1.0 || i >= grid as f64 {
        return Err(Error::InvalidArgument(format!(
            "x = {} is not an interior node of the {grid}-cell grid on [0, {}]",
            p.x, p.t
        )));
    }
    Ok(i as usize)
}

/// The exact value of an estimand; `grid` sets the interval discretization.
pub fn analytic(target: &Target, name: &str, p: &EstimandParams, grid: usize) -> Result<RealMatrix> {
    let model = target.model();
    let interval_law = || -> Result<_> {
        let sol = interval(model, p.s, p.t, grid)?;
        let i = node(p, grid)?;
        let law = sol.killed_law(sol.x_grid[i])?;
        Ok((sol, i, law))
    };
    let risk_factor = |name: &str| -> Result<(RiskModel, PlusFactor)> {
        let rm = target.risk(name)?.clone();
        let rm = if rm.spec.b == p.b && rm.spec.u == p.u {
            rm
        } else {
            let mut spec = rm.spec.clone();
            spec.b = p.b;
            spec.u = p.u;
            RiskModel::new(spec)?
        };
        let f = factor(&rm.model, p.s)?;
        Ok((rm, f))
    };
    match name {
        "ps" => model.resolvent_ps(p.s),
        "BT" => {
            let (sol, i, _) = interval_law()?;
            Ok(sol.bt[i].clone())
        }
        "BTlow" => {
            let (sol, i, _) = interval_law()?;
            Ok(sol.bt_low[i].clone())
        }
        "B" => {
            let (sol, i, _) = interval_law()?;
            Ok(sol.b[i].clone())
        }
        "nonexit" => Ok(interval_law()?.2.non_exit),
        "killedCdf" => Ok(interval_law()?.2.cdf(p.z)),
        "upperTail" | "lowerTail" => {
            let (_, _, law) = interval_law()?;
            let wrong_side = if name == "upperTail" { p.z <= p.x } else { p.z >= p.x - p.t };
            if wrong_side {
                return Err(Error::InvalidArgument(format!("level z = {} is on the wrong side for {name}", p.z)));
            }
            bratiichuk_tails(model, &law, p.z)
        }
        "upExitProb" => {
            let lb = limit_bt(model, p.t, grid, &LimitOptions::for_model(model))?;
            Ok(lb.direct[node(p, grid)?].clone())
        }
        "pplus" => Ok(factor(model, p.s)?.p_plus),
        "supTail" => sup_tail(&factor(model, p.s)?, p.z),
        "minusCdf" => {
            if !(p.z < 0.0) {
                return Err(Error::InvalidArgument("minusCdf needs z < 0".into()));
            }
            let g = minus_grid(model, &factor(model, p.s)?, &[p.z], &inversion())?;
            Ok(g.cdf[0].clone())
        }
        "etaCfRe" | "etaCfIm" => {
            let (rm, f) = risk_factor(name)?;
            let v = risk::phi_eta(&rm, &f, p.alpha)?;
            Ok(if name == "etaCfRe" { linalg::real_part(&v) } else { v.map(|z| z.im) })
        }
        "etaAtBarrier" => {
            let (rm, f) = risk_factor(name)?;
            risk::eta_atom_at(&rm, &f)
        }
        "dividendLaplace" => {
            let (rm, f) = risk_factor(name)?;
            risk::dividend_transform(&rm, &f, p.mu)
        }
        "dividendMean" => {
            let (rm, f) = risk_factor(name)?;
            risk::dividend_mean(&rm, &f)
        }
        _ => Err(Error::UnknownEstimand {
            name: name.to_string(),
            available: simulator::ESTIMANDS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
        }),
    }
}

/// One comparison row per matrix entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub analytic: RealMatrix,
    pub mc: McEstimate,
}

impl Comparison {
    /// `(mc - analytic) / stderr`; zero when both agree exactly.
    pub fn z_score(&self, k: usize, r: usize) -> f64 {
        let d = self.mc.value[(k, r)] - self.analytic[(k, r)];
        let e = self.mc.std_err[(k, r)];
        if e > 0.0 {
            d / e
        } else if d.abs() <= 1e-12 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }

    pub fn max_abs_z(&self) -> f64 {
        let m = self.analytic.nrows();
        (0..m)
            .flat_map(|k| (0..m).map(move |r| (k, r)))
            .map(|(k, r)| self.z_score(k, r).abs())
            .fold(0.0, f64::max)
    }
}

pub fn compare(target: &Target, name: &str, p: &EstimandParams, grid: usize, paths: usize, seed: u64) -> Result<Comparison> {
    let p = target.params(*p);
    let analytic = analytic(target, name, &p, grid)?;
    let mc = simulator::estimate(target.model(), name, &p, paths, seed)?;
    Ok(Comparison { analytic, mc })
}
