//! Exit from an interval `(x - T, x)` around the starting level: upward exit
//! transform, overshoot, killed occupation law, exit-side split, jump-kernel
//! tails at exit and the `s -> 0` limits.

mod frame;
mod killed;
mod limits;
mod measure;
mod oracle;

pub use frame::{AffineSolution, Assembly, ExitFrame};
pub use killed::{bratiichuk_tails, exit_split, lower_exit_transform, pecherskii_residual, KilledLaw};
pub use limits::{limit_bt, limit_density, limit_m, LimitBt, LimitDensity, LimitMeasure, LimitOptions};
pub use measure::{exp_convolution, LowerMeasure};
pub use oracle::{volterra_oracle_bt, volterra_oracle_bt_low};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::factorization::{solve_plus_factor, MinusLaw, PlusFactor};
use crate::linalg::{self, ComplexMatrix, RealMatrix};
use crate::model::Model;
use crate::transforms::InversionConfig;

/// Numerical settings of the interval solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// bound on the `C_0^T` consistency residual
    pub tol: f64,
    /// bound on the grid-halving error estimate of `B^T`
    pub max_quadrature_error: f64,
    pub inversion: InversionConfig,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_quadrature_error: 1e-6,
            inversion: InversionConfig::default(),
        }
    }
}

/// Upward-exit transform and the exit split on the nodes `x_i = i T / n`.
/// The end nodes hold the one-sided limits at `0+` and `T-`.
#[derive(Debug, Clone)]
pub struct TwoBoundarySolution {
    pub s: f64,
    pub t: f64,
    pub x_grid: Vec<f64>,
    pub bt: Vec<RealMatrix>,
    pub c0t: RealMatrix,
    pub b: Vec<RealMatrix>,
    pub bt_low: Vec<RealMatrix>,
    pub fixed_point_residual: f64,
    pub quadrature_error: f64,
    pub ps: RealMatrix,
    pub frame: ExitFrame,
    /// frame of the time-reversed process, which carries the killed law
    pub occupation: ExitFrame,
    pub pi: Vec<f64>,
}

/// Builds the measure `s^{-1} p_star dP^-` on the quarter-step grid of an
/// interval solve with `n` cells of length `T`.
pub fn lower_measure(model: &Model, factor: &PlusFactor, t: f64, n: usize, cfg: &InversionConfig) -> Result<LowerMeasure> {
    cfg.validate()?;
    let h = t / n as f64;
    let base = cfg.domain().max(2.0 * t);
    let domain = h * (base / h).ceil();
    let law = MinusLaw::build(model, factor, domain, cfg.n_alpha, cfg.tol)?;
    LowerMeasure::from_minus_law(&law, &factor.p_star, h / 4.0)
}

fn check_interval(t: f64, n: usize) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument("interval length T must be positive".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two grid cells".into()));
    }
    Ok(())
}

fn frame_for(model: &Model, factor: &PlusFactor, t: f64, n: usize, cfg: &InversionConfig) -> Result<ExitFrame> {
    let measure = lower_measure(model, factor, t, n, cfg)?;
    ExitFrame::new(
        factor.s,
        t,
        n,
        factor.p_star.clone(),
        model.c.clone(),
        model.up_rate.clone(),
        measure,
    )
}

/// Solves for `B^T(s, x)` on `n + 1` nodes of `[0, T]` and the exit split at
/// every node.
pub fn solve_bt(model: &Model, factor: &PlusFactor, t: f64, n: usize, opts: &SolveOptions) -> Result<TwoBoundarySolution> {
    check_interval(t, n)?;
    let frame = frame_for(model, factor, t, n, &opts.inversion)?;
    let sol = frame.solve()?;
    if sol.residual > opts.tol {
        return Err(Error::NoConvergence {
            context: "interval constant C_0^T".into(),
            iterations: 1,
            residual: sol.residual,
        });
    }
    let quadrature_error = if n % 2 == 0 && n >= 8 {
        let coarse = ExitFrame::new(
            factor.s,
            t,
            n / 2,
            factor.p_star.clone(),
            model.c.clone(),
            model.up_rate.clone(),
            frame.measure.coarsened(2),
        )?
        .solve()?;
        (0..=n / 2)
            .map(|i| linalg::max_abs(&(&sol.bt[2 * i] - &coarse.bt[i])))
            .fold(0.0, f64::max)
            / 15.0
    } else {
        0.0
    };
    if quadrature_error > opts.max_quadrature_error {
        return Err(Error::InvalidArgument(format!(
            "grid too coarse: estimated quadrature error {quadrature_error:.3e}"
        )));
    }
    let occupation = occupation_frame(model, factor, &frame, t, n, &opts.inversion)?;
    let ps = factor.ps.clone();
    let ps_inv = linalg::inverse_real(&ps)?;
    let h = t / n as f64;
    let mut b = Vec::with_capacity(n + 1);
    let mut bt_low = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let law = KilledLaw::from_reversed(&occupation, &model.pi, i, &sol.bt[i]);
        let bi = linalg::identity(model.m) - &law.non_exit * &ps_inv;
        bt_low.push(&bi - &sol.bt[i]);
        b.push(bi);
    }
    Ok(TwoBoundarySolution {
        s: factor.s,
        t,
        x_grid: (0..=n).map(|i| i as f64 * h).collect(),
        bt: sol.bt,
        c0t: sol.c0,
        b,
        bt_low,
        fixed_point_residual: sol.residual,
        quadrature_error,
        ps,
        frame,
        occupation,
        pi: model.pi.clone(),
    })
}

/// The killed law needs the factorization with the minus factor on the
/// left, which is the transposed factorization of the time-reversed process.
fn occupation_frame(
    model: &Model,
    factor: &PlusFactor,
    frame: &ExitFrame,
    t: f64,
    n: usize,
    cfg: &InversionConfig,
) -> Result<ExitFrame> {
    if model.m == 1 {
        return Ok(frame.clone());
    }
    let rev = model.time_reversed()?;
    let rev_factor = solve_plus_factor(&rev, factor.s, 1e-12)?;
    frame_for(&rev, &rev_factor, t, n, cfg)
}

impl TwoBoundarySolution {
    pub fn n(&self) -> usize {
        self.x_grid.len() - 1
    }

    /// Index of a grid node; `x` must be on the grid.
    pub fn node(&self, x: f64) -> Result<usize> {
        let h = self.t / self.n() as f64;
        let j = x / h;
        let r = j.round();
        if (j - r).abs() > 1e-8 || r < 0.0 || r as usize > self.n() {
            return Err(Error::InvalidArgument(format!(
                "x = {x} is not a node of the grid with step {h}"
            )));
        }
        Ok(r as usize)
    }

    /// `B^T(s, x)` with the conventions `0` for `x >= T` and `I` for `x < 0`.
    pub fn bt_at(&self, x: f64) -> Result<RealMatrix> {
        let m = self.ps.nrows();
        if x >= self.t {
            return Ok(RealMatrix::zeros(m, m));
        }
        if x < 0.0 {
            return Ok(linalg::identity(m));
        }
        Ok(self.bt[self.node(x)?].clone())
    }

    /// Killed law of the process at `x`, which must be an interior node.
    pub fn killed_law(&self, x: f64) -> Result<KilledLaw> {
        let i = self.node(x)?;
        if i == 0 || i == self.n() {
            return Err(Error::InvalidArgument("x must lie strictly inside (0, T)".into()));
        }
        Ok(KilledLaw::from_reversed(&self.occupation, &self.pi, i, &self.bt[i]))
    }
}

/// Transforms of the upward overshoot (`V^+`) and of the exit level (`V_+`).
pub fn overshoot_transform(sol: &TwoBoundarySolution, x: f64, alpha: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let bt = linalg::to_complex(&sol.bt_at(x)?);
    let m = bt.nrows();
    let i = Complex64::i();
    let mut factor = ComplexMatrix::zeros(m, m);
    for k in 0..m {
        let c = sol.frame.c[k];
        factor[(k, k)] = c / (c - i * alpha);
    }
    let v_up = bt * factor;
    let v_level = &v_up * (i * alpha * x).exp();
    Ok((v_up, v_level))
}

#[cfg(test)]
mod tests;
