//! Killed occupation law at one starting position, exit-side split,
//! exit-level tails and the Pecherskii-type identity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, RealMatrix};
use crate::model::Model;
use crate::transforms::composite_weights;

use super::frame::ExitFrame;
use super::TwoBoundarySolution;

/// Law of the process at the killing time on the event of no exit.
#[derive(Debug, Clone)]
pub struct KilledLaw {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    /// spacing of the density nodes
    pub h: f64,
    /// density at `x - T + j h` up to `0-`
    pub lower: Vec<RealMatrix>,
    /// density at `j h` from `0+` to `x`
    pub upper: Vec<RealMatrix>,
    pub atom_at_zero: RealMatrix,
    pub non_exit: RealMatrix,
}

impl KilledLaw {
    /// Assembles the law at node `i` from the frame of the time-reversed
    /// process; `pi` is the stationary law linking the two directions.
    pub(crate) fn from_reversed(frame: &ExitFrame, pi: &[f64], i: usize, bt_x: &RealMatrix) -> Self {
        let back = |x: &RealMatrix| conjugate(pi, x);
        let weight = back(&linalg::scale_cols(bt_x, &frame.c));
        let asm = frame.assemble(i, &weight);
        let k = frame.scale;
        let h = frame.h();
        let mut law = Self {
            s: frame.scale,
            t: frame.t,
            x: i as f64 * h,
            h,
            lower: asm.lower.iter().map(|d| back(d) * k).collect(),
            upper: asm.upper.iter().map(|d| back(d) * k).collect(),
            atom_at_zero: back(&frame.measure.atom) * k,
            non_exit: RealMatrix::zeros(frame.m(), frame.m()),
        };
        law.non_exit = law.integrate(|_| linalg::identity(frame.m()));
        law
    }

    pub fn m(&self) -> usize {
        self.atom_at_zero.nrows()
    }

    /// Density nodes without `y = 0` (left pieces then right pieces).
    pub fn y_grid(&self) -> Vec<f64> {
        let start = self.x - self.t;
        let nl = self.lower.len() - 1;
        let mut ys: Vec<f64> = (0..nl).map(|j| start + j as f64 * self.h).collect();
        ys.extend((1..self.upper.len()).map(|j| j as f64 * self.h));
        ys
    }

    /// Density values matching [`KilledLaw::y_grid`].
    pub fn density(&self) -> Vec<RealMatrix> {
        let nl = self.lower.len() - 1;
        let mut out: Vec<RealMatrix> = self.lower[..nl].to_vec();
        out.extend(self.upper[1..].iter().cloned());
        out
    }

    /// Smallest density entry over the grid.
    pub fn min_density(&self) -> f64 {
        self.lower
            .iter()
            .chain(self.upper.iter())
            .flat_map(|d| d.iter().cloned())
            .fold(f64::INFINITY, f64::min)
    }

    /// `int dH(y) f(y)` over `(x - T, x)`, atom included.
    pub fn integrate<F>(&self, f: F) -> RealMatrix
    where
        F: Fn(f64) -> RealMatrix,
    {
        let start = self.x - self.t;
        let wl = composite_weights(self.lower.len() - 1, self.h);
        let wu = composite_weights(self.upper.len() - 1, self.h);
        let mut acc = &self.atom_at_zero * f(0.0);
        for (j, d) in self.lower.iter().enumerate() {
            if wl[j] != 0.0 {
                acc += d * f(start + j as f64 * self.h) * wl[j];
            }
        }
        for (j, d) in self.upper.iter().enumerate() {
            if wu[j] != 0.0 {
                acc += d * f(j as f64 * self.h) * wu[j];
            }
        }
        acc
    }

    /// Complex version of [`KilledLaw::integrate`].
    pub fn integrate_c<F>(&self, f: F) -> ComplexMatrix
    where
        F: Fn(f64) -> ComplexMatrix,
    {
        let start = self.x - self.t;
        let wl = composite_weights(self.lower.len() - 1, self.h);
        let wu = composite_weights(self.upper.len() - 1, self.h);
        let mut acc = linalg::to_complex(&self.atom_at_zero) * f(0.0);
        for (j, d) in self.lower.iter().enumerate() {
            acc += linalg::to_complex(d) * f(start + j as f64 * self.h) * Complex64::new(wl[j], 0.0);
        }
        for (j, d) in self.upper.iter().enumerate() {
            acc += linalg::to_complex(d) * f(j as f64 * self.h) * Complex64::new(wu[j], 0.0);
        }
        acc
    }

    /// `H_s(T, x, y) = P{xi(theta_s) < y, no exit}` for `y` in `[x - T, x]`.
    pub fn cdf(&self, y: f64) -> RealMatrix {
        let start = self.x - self.t;
        let m = self.m();
        let h = self.h;
        let piece = |vals: &[RealMatrix], from: f64, upto: f64| -> RealMatrix {
            // integrate vals (nodes from `from` at step h) over [from, upto]
            let span = ((upto - from) / h).max(0.0);
            let full = span.floor() as usize;
            let full = full.min(vals.len() - 1);
            let w = composite_weights(full, h);
            let mut acc = RealMatrix::zeros(m, m);
            for j in 0..=full {
                acc += &vals[j] * w[j];
            }
            let rest = upto - from - full as f64 * h;
            if rest > 1e-12 && full + 1 < vals.len() {
                let a = &vals[full];
                let b = &vals[full + 1];
                let frac = rest / h;
                acc += (a * (1.0 - 0.5 * frac) + b * (0.5 * frac)) * rest;
            }
            acc
        };
        if y <= 0.0 {
            piece(&self.lower, start, y.min(0.0))
        } else {
            piece(&self.lower, start, 0.0) + &self.atom_at_zero + piece(&self.upper, 0.0, y.min(self.x))
        }
    }

    /// Transform `int e^{i alpha y} dH(y)`.
    pub fn transform(&self, alpha: f64) -> ComplexMatrix {
        let m = self.m();
        self.integrate_c(|y| ComplexMatrix::identity(m, m) * (Complex64::i() * alpha * y).exp())
    }
}

/// `D^{-1} X^T D` with `D = diag(pi)`.
pub(crate) fn conjugate(pi: &[f64], x: &RealMatrix) -> RealMatrix {
    RealMatrix::from_fn(x.nrows(), x.ncols(), |k, r| x[(r, k)] * pi[r] / pi[k])
}

/// `B(s, x, T) = I - P{no exit} P_s^{-1}` and `B_T = B - B^T`.
pub fn exit_split(sol: &TwoBoundarySolution, killed: &KilledLaw) -> Result<(RealMatrix, RealMatrix)> {
    let b = linalg::identity(killed.m()) - linalg::solve_right_real(&sol.ps, &killed.non_exit)?;
    let bt = sol.bt_at(killed.x)?;
    let low = &b - bt;
    Ok((b, low))
}

/// Exit-level tails: `s E[e^{-s tau+}; xi(tau+) > z]` for `z > x` and
/// `s E[e^{-s tau-}; xi(tau-) < z]` for `z < x - T`.
pub fn bratiichuk_tails(model: &Model, killed: &KilledLaw, z: f64) -> Result<RealMatrix> {
    let lo = killed.x - killed.t;
    if z >= lo && z <= killed.x {
        return Err(Error::InvalidArgument(format!(
            "tail level {z} must lie outside [{lo}, {}]",
            killed.x
        )));
    }
    if !z.is_finite() {
        return Err(Error::InvalidArgument("tail level must be finite".into()));
    }
    // z - y never vanishes on the integration range
    Ok(killed.integrate(|y| model.k0_tails(z - y).unwrap_or_else(|_| RealMatrix::zeros(model.m, model.m))))
}

/// Transform of the exit level through the lower barrier,
/// `E[e^{-s tau-} e^{i alpha xi(tau-)}; A_-]`.
pub fn lower_exit_transform(model: &Model, killed: &KilledLaw, alpha: f64) -> ComplexMatrix {
    let lo = killed.x - killed.t;
    let i = Complex64::i();
    // at y = x - T the cut sits at 0-: null jumps there do not leave
    let v = killed.integrate_c(|y| {
        let cut = (lo - y).min(-f64::MIN_POSITIVE);
        model.kernel.truncated_transform(alpha, cut) * (i * alpha * y).exp()
    });
    v / Complex64::new(killed.s, 0.0)
}

/// `max || V - (I - V_+ - V_-) Phi ||` over the given frequencies.
pub fn pecherskii_residual(model: &Model, sol: &TwoBoundarySolution, killed: &KilledLaw, alphas: &[f64]) -> Result<f64> {
    let m = model.m;
    let mut worst: f64 = 0.0;
    for &a in alphas {
        let v = killed.transform(a);
        let (_, v_up) = super::overshoot_transform(sol, killed.x, a)?;
        let v_low = lower_exit_transform(model, killed, a);
        let phi = model.char_function(sol.s, a)?;
        let rhs = (ComplexMatrix::identity(m, m) - v_up - v_low) * phi;
        worst = worst.max(linalg::max_abs_c(&(v - rhs)));
    }
    Ok(worst)
}
