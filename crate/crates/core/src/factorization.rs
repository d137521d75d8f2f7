//! Positive factor of the killed process: the probability that the supremum
//! stays at zero, the exponential tail of the supremum, the factor transforms
//! and the law of the distance below the running supremum.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, RealMatrix};
use crate::model::{Model, TermShape};
use crate::transforms::{HalfLineSeries, InversionConfig};

/// Solution of the positive-factor fixed point at one killing rate.
#[derive(Debug, Clone)]
pub struct PlusFactor {
    pub s: f64,
    /// `P{sup = 0}` at the killing time.
    pub p_plus: RealMatrix,
    /// `P_s - p_plus`.
    pub q_plus: RealMatrix,
    /// `p_plus P_s^{-1}`.
    pub p_star: RealMatrix,
    /// `C p_star`.
    pub r_star: RealMatrix,
    pub residual: f64,
    pub iterations: usize,
    /// `P_s`, kept because every consumer needs it.
    pub ps: RealMatrix,
}

const MAX_ITER: usize = 10_000;
const NEWTON_AFTER: usize = 60;

/// Residual of the fixed point written in `Y = I - p_star`:
/// `(sI + Lambda + N) Y - Lambda Fbar_0 - int dK_0(z) Y e^{C (I - Y) z}`.
fn residual_map(model: &Model, s: f64, y: &RealMatrix) -> Result<RealMatrix> {
    let m = model.m;
    let c = model.c_matrix();
    let r = &c * (linalg::identity(m) - y);
    let lead = linalg::identity(m) * s + model.lambda_matrix() + model.n_matrix();
    Ok(lead * y - model.up_matrix() - model.kernel.right_integral(y, &r)?)
}

fn substitution_step(model: &Model, y: &RealMatrix, lead_inv: &RealMatrix) -> Result<RealMatrix> {
    let m = model.m;
    let r = model.c_matrix() * (linalg::identity(m) - y);
    let rhs = model.up_matrix() + model.kernel.right_integral(y, &r)?;
    Ok(lead_inv * rhs)
}

fn newton_polish(model: &Model, s: f64, start: &RealMatrix, tol: f64) -> Option<(RealMatrix, f64)> {
    let m = model.m;
    let n = m * m;
    let mut y = start.clone();
    let scale = s + linalg::norm_inf(&model.effective_jump_rate()) + 1.0;
    for _ in 0..40 {
        let g = residual_map(model, s, &y).ok()?;
        let res = linalg::max_abs(&g) / scale;
        if res < tol {
            return Some((y, res));
        }
        let mut jac = RealMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * (1.0 + y[j].abs());
            let mut yp = y.clone();
            yp[j] += h;
            let mut ym = y.clone();
            ym[j] -= h;
            let gp = residual_map(model, s, &yp).ok()?;
            let gm = residual_map(model, s, &ym).ok()?;
            for i in 0..n {
                jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let rhs = RealMatrix::from_column_slice(n, 1, g.as_slice());
        let delta = jac.lu().solve(&rhs)?;
        for i in 0..n {
            y[i] -= delta[i];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return None;
        }
    }
    let res = linalg::max_abs(&residual_map(model, s, &y).ok()?) / scale;
    (res < tol).then_some((y, res))
}

/// Solves the positive-factor fixed point by damped substitution from
/// `p_star = s / (s + ||Lambda||) I`, polished by Newton steps when the
/// substitution is slow.
pub fn solve_plus_factor(model: &Model, s: f64, tol: f64) -> Result<PlusFactor> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let ps = model.resolvent_ps(s)?;
    let m = model.m;
    let lam = model.lambda.iter().cloned().fold(0.0, f64::max);
    let mut y = linalg::identity(m) * (1.0 - s / (s + lam));
    let lead = linalg::identity(m) * s + model.lambda_matrix() + model.n_matrix();
    let lead_inv = linalg::inverse_real(&lead)?;
    let scale = s + linalg::norm_inf(&model.effective_jump_rate()) + 1.0;

    let mut step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let next = substitution_step(model, &y, &lead_inv)?;
        let damped = (&y + &next) * 0.5;
        step = linalg::max_abs(&(&damped - &y));
        y = damped;
        if step < tol {
            break;
        }
        if iterations == NEWTON_AFTER {
            if let Some((polished, _)) = newton_polish(model, s, &y, tol) {
                y = polished;
                step = 0.0;
                break;
            }
        }
    }
    let residual = linalg::max_abs(&residual_map(model, s, &y)?) / scale;
    if step >= tol || residual > tol.max(1e-11) {
        return Err(Error::NoConvergence {
            context: "positive factor fixed point".into(),
            iterations,
            residual,
        });
    }
    let p_star = linalg::identity(m) - &y;
    let r_star = model.c_matrix() * &p_star;
    let p_plus = &p_star * &ps;
    let q_plus = &ps - &p_plus;
    Ok(PlusFactor {
        s,
        p_plus,
        q_plus,
        p_star,
        r_star,
        residual,
        iterations,
        ps,
    })
}

/// `P{sup > x} = (I - p_star) e^{-R_star x} P_s` for `x > 0`.
pub fn sup_tail(factor: &PlusFactor, x: f64) -> Result<RealMatrix> {
    let m = factor.p_star.nrows();
    let e = linalg::mat_exp(&(&factor.r_star * (-x)))?;
    Ok((linalg::identity(m) - &factor.p_star) * e * &factor.ps)
}

/// Transform of the supremum at the killing time.
pub fn phi_plus(factor: &PlusFactor, alpha: f64) -> Result<ComplexMatrix> {
    let m = factor.p_star.nrows();
    let i = Complex64::i();
    let r = linalg::to_complex(&factor.r_star);
    let shifted = &r - ComplexMatrix::identity(m, m) * (i * alpha);
    let tail = linalg::to_complex(&(linalg::identity(m) - &factor.p_star)) * &r;
    let tail = linalg::solve_right(&shifted, &tail).map_err(|_| {
        Error::Precondition(format!("R_star - i alpha singular at alpha = {alpha}"))
    })?;
    Ok((linalg::to_complex(&factor.p_star) + tail) * linalg::to_complex(&factor.ps))
}

/// Transform of the distance below the supremum: `P_s Phi_+^{-1} Phi`.
pub fn phi_minus(model: &Model, factor: &PlusFactor, alpha: f64) -> Result<ComplexMatrix> {
    let plus = phi_plus(factor, alpha)?;
    let phi = model.char_function(factor.s, alpha)?;
    let x = linalg::solve(&plus, &phi).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            context: format!("positive factor transform at alpha = {alpha}"),
            condition,
        },
        other => other,
    })?;
    Ok(linalg::to_complex(&factor.ps) * x)
}

/// Mass of the distance below the supremum at zero.
pub fn minus_atom(model: &Model, factor: &PlusFactor) -> Result<RealMatrix> {
    linalg::solve_real(&factor.p_star, &model.no_jump_resolvent(factor.s)?)
}

/// Largest rate appearing in the model; sets the frequency scale.
pub fn rate_scale(model: &Model) -> f64 {
    let mut r = model.c.iter().cloned().fold(1.0, f64::max);
    for t in &model.kernel.terms {
        if let TermShape::Exp(mu) = t.shape {
            r = r.max(mu);
        }
    }
    r
}

/// Continuous part of the law of the distance below the supremum,
/// in cosine-series form, plus its atom at zero.
#[derive(Debug, Clone)]
pub struct MinusLaw {
    pub s: f64,
    pub atom: RealMatrix,
    pub series: HalfLineSeries,
    pub ps: RealMatrix,
}

impl MinusLaw {
    /// Builds the law, doubling the expansion interval (starting at `domain`)
    /// until the folded tail at its left end is below `tol`.
    pub fn build(model: &Model, factor: &PlusFactor, domain: f64, n_terms: usize, tol: f64) -> Result<Self> {
        if model.has_discrete_negative_jumps() {
            return Err(Error::Precondition(
                "inversion of the post-supremum law needs absolutely continuous negative jumps".into(),
            ));
        }
        let atom = minus_atom(model, factor)?;
        let atom_c = linalg::to_complex(&atom);
        let scale = rate_scale(model);
        let cf = |a: f64| -> Result<ComplexMatrix> { Ok(phi_minus(model, factor, a)? - &atom_c) };
        let mut l = domain;
        let mut n = n_terms;
        for _ in 0..8 {
            let series = HalfLineSeries::from_cf(model.m, cf, l, n, scale)?;
            let edge = linalg::max_abs(&series.density(-l));
            if edge * l < tol {
                let law = Self {
                    s: factor.s,
                    atom,
                    series,
                    ps: factor.ps.clone(),
                };
                law.check(tol)?;
                return Ok(law);
            }
            l *= 2.0;
            n *= 2;
        }
        Err(Error::Inversion(format!(
            "post-supremum law not contained in [-{l}, 0]"
        )))
    }

    fn check(&self, tol: f64) -> Result<()> {
        let total = self.series.cdf(0.0) + &self.atom;
        let gap = linalg::max_abs(&(&total - &self.ps));
        if gap > tol {
            return Err(Error::Inversion(format!(
                "post-supremum mass off by {gap:.3e}"
            )));
        }
        Ok(())
    }

    pub fn density(&self, y: f64) -> RealMatrix {
        self.series.density(y)
    }

    /// `P{xi_bar < y}` for `y <= 0`.
    pub fn cdf(&self, y: f64) -> RealMatrix {
        self.series.cdf(y)
    }

    pub fn domain(&self) -> f64 {
        self.series.domain()
    }
}

/// Cdf of the distance below the supremum on a grid.
#[derive(Debug, Clone)]
pub struct MinusGrid {
    pub s: f64,
    pub y_grid: Vec<f64>,
    pub cdf: Vec<RealMatrix>,
    pub atom_at_zero: RealMatrix,
}

const CLIP: f64 = 1e-7;

/// Evaluates the post-supremum cdf on an increasing grid in `(-inf, 0]`,
/// clipping negative increments up to `1e-7`.
pub fn minus_grid(model: &Model, factor: &PlusFactor, y_grid: &[f64], cfg: &InversionConfig) -> Result<MinusGrid> {
    cfg.validate()?;
    if y_grid.iter().any(|y| *y > 0.0) || y_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "y grid must be strictly increasing in (-inf, 0]".into(),
        ));
    }
    let leftmost = y_grid.first().map(|y| -y).unwrap_or(0.0);
    let law = MinusLaw::build(model, factor, cfg.domain().max(leftmost), cfg.n_alpha, cfg.tol)?;
    let mut cdf: Vec<RealMatrix> = y_grid.iter().map(|&y| law.cdf(y)).collect();
    let m = model.m;
    for (j, v) in cdf.iter_mut().enumerate() {
        for x in v.iter_mut() {
            if *x < 0.0 {
                if *x < -CLIP {
                    return Err(Error::Inversion(format!(
                        "negative cdf {x:.3e} at y = {}",
                        y_grid[j]
                    )));
                }
                *x = 0.0;
            }
        }
    }
    for j in 1..cdf.len() {
        for a in 0..m {
            for b in 0..m {
                let prev = cdf[j - 1][(a, b)];
                let d = cdf[j][(a, b)] - prev;
                if d < 0.0 {
                    if d < -CLIP {
                        return Err(Error::Inversion(format!(
                            "cdf decreases by {:.3e} at y = {}",
                            -d, y_grid[j]
                        )));
                    }
                    cdf[j][(a, b)] = prev;
                }
            }
        }
    }
    Ok(MinusGrid {
        s: factor.s,
        y_grid: y_grid.to_vec(),
        cdf,
        atom_at_zero: law.atom,
    })
}
