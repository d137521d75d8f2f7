//! Limits as the killing rate goes to zero: the measure `M`, the upward-exit
//! probability and the rescaled killed density, each obtained directly from
//! the extrapolated inputs and cross-checked against extrapolation of the
//! finite-`s` outputs.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::factorization::{solve_plus_factor, MinusLaw, PlusFactor};
use crate::linalg::{self, RealMatrix};
use crate::model::Model;
use crate::transforms::{extrapolate_to_zero, geometric_s, InversionConfig};

use super::frame::ExitFrame;
use super::killed::conjugate;
use super::measure::LowerMeasure;

/// Settings of the `s -> 0` extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitOptions {
    /// decreasing positive killing rates
    pub s_seq: Vec<f64>,
    pub inversion: InversionConfig,
    /// accepted gap between direct and extrapolated limits
    pub cross_check: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            s_seq: geometric_s(0.04, 5),
            inversion: InversionConfig::default(),
            cross_check: 1e-3,
        }
    }
}

impl LimitOptions {
    /// Killing rates placed well inside the model's analytic radius in `s`,
    /// where the finite-`s` values are smooth enough for extrapolation.
    pub fn for_model(model: &Model) -> Self {
        let s0 = (model.analytic_radius() / 8.0).clamp(1e-5, 0.04);
        Self {
            s_seq: geometric_s(s0, 5),
            ..Self::default()
        }
    }
}

/// The limit measure `M` on the quarter-step grid of an interval solve.
#[derive(Debug, Clone)]
pub struct LimitMeasure {
    pub measure: LowerMeasure,
    pub p_star0: RealMatrix,
    /// extrapolation error estimate of the density
    pub error: f64,
    /// `(r, relative error)` of the exponential-moment identity
    pub transform_checks: Vec<(f64, f64)>,
}

impl LimitMeasure {
    /// `M(y) = int_{-inf}^{y} dM` for `y < 0` (the atom at 0 is added for `y > 0`).
    pub fn cdf(&self, y: f64) -> RealMatrix {
        let mu = &self.measure;
        let m = mu.m;
        let mut acc = RealMatrix::zeros(m, m);
        let upto = y.min(0.0);
        for j in 1..mu.len() {
            let b = -mu.domain + j as f64 * mu.step;
            let a = b - mu.step;
            if a >= upto {
                break;
            }
            let frac = ((upto - a) / mu.step).min(1.0);
            let left = &mu.density[j - 1];
            let right = &mu.density[j];
            let at_end = left * (1.0 - frac) + right * frac;
            acc += (left + at_end) * (0.5 * frac * mu.step);
        }
        if y > 0.0 {
            acc += &mu.atom;
        }
        acc
    }

    /// Right side of the exponential-moment identity,
    /// `-(p*(0) C - r I)(C - r I)^{-1} Psi^{-1}(-i r)`.
    pub fn moment_identity(model: &Model, p_star0: &RealMatrix, r: f64) -> Result<RealMatrix> {
        let m = model.m;
        let c = model.c_matrix();
        let lead = p_star0 * &c - linalg::identity(m) * r;
        let shifted = linalg::inverse_real(&(&c - linalg::identity(m) * r))?;
        let psi = model.cumulant_complex(Complex64::new(0.0, -r));
        let psi = linalg::real_part(&psi);
        let psi_inv = linalg::inverse_real(&psi)?;
        Ok(-(lead * shifted * psi_inv))
    }
}

/// Finite-`s` inputs shared by all limits on one interval grid.
struct Sequence {
    s: Vec<f64>,
    factors: Vec<PlusFactor>,
    measures: Vec<LowerMeasure>,
}

fn build_sequence(model: &Model, t: f64, n: usize, opts: &LimitOptions) -> Result<Sequence> {
    let s_seq = &opts.s_seq;
    if s_seq.len() < 3 || s_seq.windows(2).any(|w| w[1] >= w[0]) || s_seq.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument(
            "need at least three decreasing positive killing rates".into(),
        ));
    }
    let cfg = &opts.inversion;
    cfg.validate()?;
    let h = t / n as f64;
    let factors = s_seq
        .iter()
        .map(|&s| solve_plus_factor(model, s, 1e-12))
        .collect::<Result<Vec<_>>>()?;
    let mut domain = h * (cfg.domain().max(2.0 * t) / h).ceil();
    'outer: for _ in 0..4 {
        let mut laws = Vec::with_capacity(factors.len());
        for f in factors.iter().rev() {
            let law = MinusLaw::build(model, f, domain, cfg.n_alpha, cfg.tol)?;
            if law.domain() > domain * (1.0 + 1e-12) {
                domain = law.domain();
                continue 'outer;
            }
            laws.push(law);
        }
        laws.reverse();
        let measures = laws
            .iter()
            .zip(factors.iter())
            .map(|(l, f)| LowerMeasure::from_minus_law(l, &f.p_star, h / 4.0))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Sequence {
            s: s_seq.clone(),
            factors,
            measures,
        });
    }
    Err(Error::Inversion("no common inversion domain for the killing rates".into()))
}

/// Extrapolates vectors of matrices pointwise; returns values and the largest
/// error estimate relative to `1 + max |value|`.
fn extrapolate_all(s: &[f64], series: &[Vec<RealMatrix>]) -> (Vec<RealMatrix>, f64) {
    let len = series[0].len();
    let mut out = Vec::with_capacity(len);
    let mut err: f64 = 0.0;
    let mut top: f64 = 0.0;
    for j in 0..len {
        let vals: Vec<RealMatrix> = series.iter().map(|v| v[j].clone()).collect();
        let ex = extrapolate_to_zero(s, &vals);
        err = err.max(ex.error);
        top = top.max(linalg::max_abs(&ex.value));
        out.push(ex.value);
    }
    (out, err / (1.0 + top))
}

const EXTRAPOLATION_BOUND: f64 = 1e-4;

fn measure_limit(model: &Model, seq: &Sequence) -> Result<LimitMeasure> {
    let atom = linalg::inverse_real(&model.effective_jump_rate()).map_err(|_| {
        Error::Extrapolation("no effective jumps: the process never leaves its level".into())
    })?;
    let pstars: Vec<RealMatrix> = seq.factors.iter().map(|f| f.p_star.clone()).collect();
    let p0 = extrapolate_to_zero(&seq.s, &pstars);
    let series: Vec<Vec<RealMatrix>> = seq.measures.iter().map(|m| m.density.clone()).collect();
    let (density, error) = extrapolate_all(&seq.s, &series);
    if !(error < EXTRAPOLATION_BOUND) || !(p0.error < EXTRAPOLATION_BOUND * (1.0 + linalg::max_abs(&p0.value))) {
        return Err(Error::Extrapolation(format!(
            "killing-rate sequence does not settle (density {error:.3e}, p* {:.3e})",
            p0.error
        )));
    }
    let first = &seq.measures[0];
    let measure = LowerMeasure {
        m: model.m,
        step: first.step,
        domain: first.domain,
        density,
        atom,
    };
    let cmin = model.c.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut transform_checks = Vec::new();
    for r in [0.5, 1.0, 2.0] {
        if r >= cmin {
            continue;
        }
        let lhs = measure.exponential_moment(r);
        let rhs = LimitMeasure::moment_identity(model, &p0.value, r)?;
        let rel = linalg::max_abs(&(&lhs - &rhs)) / linalg::max_abs(&rhs).max(1e-300);
        transform_checks.push((r, rel));
    }
    Ok(LimitMeasure {
        measure,
        p_star0: p0.value,
        error,
        transform_checks,
    })
}

/// Limit measure `M = lim s^{-1} p_star(s) dP^-(s, .)` on the grid of an
/// interval solve with `n` cells of length `T`; fails when the sequence does
/// not settle or the exponential-moment identity is off by more than `1e-3`.
pub fn limit_m(model: &Model, t: f64, n: usize, opts: &LimitOptions) -> Result<LimitMeasure> {
    let seq = build_sequence(model, t, n, opts)?;
    let lm = measure_limit(model, &seq)?;
    if let Some((r, rel)) = lm.transform_checks.iter().find(|(_, rel)| *rel > 1e-3) {
        return Err(Error::Extrapolation(format!(
            "limit measure misses its moment identity at r = {r} (relative error {rel:.3e})"
        )));
    }
    Ok(lm)
}

/// Limit of the upward-exit transform.
#[derive(Debug, Clone)]
pub struct LimitBt {
    pub x_grid: Vec<f64>,
    /// assembled from `M` and `p*(0)`
    pub direct: Vec<RealMatrix>,
    /// extrapolated from finite killing rates
    pub extrapolated: Vec<RealMatrix>,
    pub c0: RealMatrix,
    pub difference: f64,
    pub limit: LimitMeasure,
}

fn limit_frame(model: &Model, t: f64, n: usize, lm: &LimitMeasure) -> Result<ExitFrame> {
    ExitFrame::new(
        1.0,
        t,
        n,
        lm.p_star0.clone(),
        model.c.clone(),
        model.up_rate.clone(),
        lm.measure.clone(),
    )
}

fn finite_frames(model: &Model, t: f64, n: usize, seq: &Sequence) -> Result<Vec<ExitFrame>> {
    seq.factors
        .iter()
        .zip(seq.measures.iter())
        .map(|(f, mu)| {
            ExitFrame::new(
                f.s,
                t,
                n,
                f.p_star.clone(),
                model.c.clone(),
                model.up_rate.clone(),
                mu.clone(),
            )
        })
        .collect()
}

/// `lim_{s -> 0} B^T(s, x)` on the nodes `x_i = i T / n`.
pub fn limit_bt(model: &Model, t: f64, n: usize, opts: &LimitOptions) -> Result<LimitBt> {
    let seq = build_sequence(model, t, n, opts)?;
    let lm = measure_limit(model, &seq)?;
    let direct = limit_frame(model, t, n, &lm)?.solve()?;
    let finite = finite_frames(model, t, n, &seq)?
        .iter()
        .map(|f| f.solve().map(|s| s.bt))
        .collect::<Result<Vec<_>>>()?;
    let (extrapolated, err) = extrapolate_all(&seq.s, &finite);
    if !(err < EXTRAPOLATION_BOUND) {
        return Err(Error::Extrapolation(format!(
            "upward-exit transform does not settle as s -> 0 ({err:.3e})"
        )));
    }
    let difference = direct
        .bt
        .iter()
        .zip(extrapolated.iter())
        .map(|(a, b)| linalg::max_abs(&(a - b)))
        .fold(0.0, f64::max);
    if difference > opts.cross_check {
        return Err(Error::Extrapolation(format!(
            "direct and extrapolated limits differ by {difference:.3e}"
        )));
    }
    Ok(LimitBt {
        x_grid: (0..=n).map(|i| i as f64 * t / n as f64).collect(),
        direct: direct.bt,
        extrapolated,
        c0: direct.c0,
        difference,
        limit: lm,
    })
}

/// Limit of `s^{-1} h_s(T, x, y)`.
#[derive(Debug, Clone)]
pub struct LimitDensity {
    pub x: f64,
    pub y_grid: Vec<f64>,
    pub direct: Vec<RealMatrix>,
    pub extrapolated: Vec<RealMatrix>,
    pub difference: f64,
}

/// Density nodes of the killed law (divided by the frame scale) without `y = 0`.
fn reversed_density(frame: &ExitFrame, pi: &[f64], i: usize, bt_x: &RealMatrix) -> Vec<RealMatrix> {
    let weight = conjugate(pi, &linalg::scale_cols(bt_x, &frame.c));
    let asm = frame.assemble(i, &weight);
    let nl = asm.lower.len() - 1;
    let mut out: Vec<RealMatrix> = asm.lower[..nl].iter().map(|d| conjugate(pi, d)).collect();
    out.extend(asm.upper[1..].iter().map(|d| conjugate(pi, d)));
    out
}

/// `lim s^{-1} h_s(T, x, y)` on the nodes of `(x - T, x)` without `y = 0`;
/// `x` must be an interior node of the grid with `n` cells.
pub fn limit_density(model: &Model, t: f64, x: f64, n: usize, opts: &LimitOptions) -> Result<LimitDensity> {
    let h = t / n as f64;
    let i = (x / h).round();
    if ((x / h) - i).abs() > 1e-8 || i < 1.0 || i as usize >= n {
        return Err(Error::InvalidArgument(format!("x = {x} is not an interior grid node")));
    }
    let i = i as usize;
    let seq = build_sequence(model, t, n, opts)?;
    let lm = measure_limit(model, &seq)?;
    let bt = limit_frame(model, t, n, &lm)?.solve()?.bt;
    // the density is carried by the time-reversed process
    let rev = model.time_reversed()?;
    let rev_seq = build_sequence(&rev, t, n, opts)?;
    let rev_lm = measure_limit(&rev, &rev_seq)?;
    let occupation = limit_frame(&rev, t, n, &rev_lm)?;
    let direct = reversed_density(&occupation, &model.pi, i, &bt[i]);
    let forward = finite_frames(model, t, n, &seq)?;
    let backward = finite_frames(&rev, t, n, &rev_seq)?;
    let finite = forward
        .iter()
        .zip(backward.iter())
        .map(|(f, b)| {
            let bt = f.solve()?.bt;
            Ok(reversed_density(b, &model.pi, i, &bt[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    let (extrapolated, err) = extrapolate_all(&seq.s, &finite);
    if !(err < EXTRAPOLATION_BOUND) {
        return Err(Error::Extrapolation(format!(
            "rescaled density does not settle as s -> 0 ({err:.3e})"
        )));
    }
    let difference = direct
        .iter()
        .zip(extrapolated.iter())
        .map(|(a, b)| linalg::max_abs(&(a - b)))
        .fold(0.0, f64::max);
    if difference > opts.cross_check {
        return Err(Error::Extrapolation(format!(
            "direct and extrapolated densities differ by {difference:.3e}"
        )));
    }
    let start = x - t;
    let mut y_grid: Vec<f64> = (0..n - i).map(|j| start + j as f64 * h).collect();
    y_grid.extend((1..=i).map(|j| j as f64 * h));
    Ok(LimitDensity {
        x,
        y_grid,
        direct,
        extrapolated,
        difference,
    })
}
