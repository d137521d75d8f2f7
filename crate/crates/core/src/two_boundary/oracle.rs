//! Direct discretization of the renewal equations for the exit transforms
//! through either barrier: unknowns at the nodes of `[0, T]`, trapezoid rule
//! split at the current node, one dense solve.

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::model::{Model, TermShape};

/// `B^T(s, x)` at `x_i = i T / n`, `i = 0..=n` (end nodes are one-sided limits).
pub fn volterra_oracle_bt(model: &Model, s: f64, t: f64, n: usize) -> Result<Vec<RealMatrix>> {
    renewal_solve(model, s, t, n, Side::Upper)
}

/// `B_T(s, x)`, the transform of the exit time through the lower barrier,
/// on the same nodes.
pub fn volterra_oracle_bt_low(model: &Model, s: f64, t: f64, n: usize) -> Result<Vec<RealMatrix>> {
    renewal_solve(model, s, t, n, Side::Lower)
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Upper,
    Lower,
}

fn renewal_solve(model: &Model, s: f64, t: f64, n: usize, side: Side) -> Result<Vec<RealMatrix>> {
    if !(s > 0.0) || !(t > 0.0) || n < 2 {
        return Err(Error::InvalidArgument("need s > 0, T > 0 and n >= 2".into()));
    }
    let m = model.m;
    let h = t / n as f64;
    let dim = (n + 1) * m;
    let mut a = RealMatrix::zeros(dim, dim);
    let mut rhs = RealMatrix::zeros(dim, m);
    let at = |i: usize, k: usize| i * m + k;
    let trap = |j: usize, lo: usize, hi: usize| -> f64 {
        if lo == hi {
            0.0
        } else if j == lo || j == hi {
            0.5 * h
        } else {
            h
        }
    };

    for i in 0..=n {
        let x = i as f64 * h;
        for k in 0..m {
            let row = at(i, k);
            a[(row, row)] += s + model.lambda[k] + model.nu[k];
            if side == Side::Upper {
                rhs[(row, k)] = model.up_rate[k] * (-model.c[k] * x).exp();
            }
            // upward jumps landing inside: int_0^x up c e^{-c (x - w)} B(w) dw
            let (u, c) = (model.up_rate[k], model.c[k]);
            for j in 0..=i {
                let w = trap(j, 0, i);
                if w != 0.0 {
                    a[(row, at(j, k))] -= w * u * c * (-c * (x - j as f64 * h)).exp();
                }
            }
        }
        if side == Side::Lower {
            // negative jumps past the lower barrier; null jumps never leave
            let past = model.kernel.lower_tail((x - t).min(-f64::MIN_POSITIVE));
            for k in 0..m {
                for r in 0..m {
                    rhs[(at(i, k), r)] = past[(k, r)];
                }
            }
        }
        for term in &model.kernel.terms {
            let row = at(i, term.row);
            match term.shape {
                TermShape::Exp(mu) => {
                    // int_x^T mu e^{mu (x - v)} B(v) dv
                    for j in i..=n {
                        let w = trap(j, i, n);
                        if w != 0.0 {
                            a[(row, at(j, term.col))] -=
                                term.weight * w * mu * (mu * (x - j as f64 * h)).exp();
                        }
                    }
                }
                TermShape::Atom(d) if d == 0.0 => {
                    a[(row, at(i, term.col))] -= term.weight;
                }
                TermShape::Atom(d) => {
                    let v = x - d;
                    if v < t {
                        let pos = v / h;
                        let j = (pos.floor() as usize).min(n);
                        let frac = pos - j as f64;
                        a[(row, at(j, term.col))] -= term.weight * (1.0 - frac);
                        if frac > 1e-14 && j < n {
                            a[(row, at(j + 1, term.col))] -= term.weight * frac;
                        }
                    }
                }
            }
        }
    }
    let x = a.lu().solve(&rhs).ok_or_else(|| Error::Singular {
        context: "renewal-equation discretization".into(),
        condition: f64::INFINITY,
    })?;
    Ok((0..=n)
        .map(|i| RealMatrix::from_fn(m, m, |k, r| x[(at(i, k), r)]))
        .collect())
}
