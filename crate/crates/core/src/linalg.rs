//! Small dense real/complex matrix helpers.
//!
//! Everything in this crate works with `m x m` matrices where `m` is the
//! number of chain states, so dense LU and a Pade-13 scaling-and-squaring
//! exponential are all that is needed.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Largest condition estimate accepted by [`solve`].
pub const MAX_CONDITION: f64 = 1e14;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

pub fn identity(m: usize) -> RealMatrix {
    RealMatrix::identity(m, m)
}

pub fn diag(values: &[f64]) -> RealMatrix {
    RealMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values))
}

pub fn to_complex(a: &RealMatrix) -> ComplexMatrix {
    a.map(|v| Complex64::new(v, 0.0))
}

pub fn real_part(a: &ComplexMatrix) -> RealMatrix {
    a.map(|v| v.re)
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf(a: &RealMatrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_inf_c(a: &ComplexMatrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_one(a: &RealMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_one_c(a: &ComplexMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Max absolute entry.
pub fn max_abs(a: &RealMatrix) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_c(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

/// Matrix exponential by scaling and squaring with a degree-13 Pade approximant.
pub fn mat_exp(a: &RealMatrix) -> Result<RealMatrix> {
    let m = a.nrows();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpOverflow { norm: f64::INFINITY });
    }
    let norm = norm_one(a);
    if norm == 0.0 {
        return Ok(identity(m));
    }
    // e^{|A|} must stay representable.
    if norm > 700.0 * (m as f64).max(1.0) {
        return Err(Error::ExpOverflow { norm });
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let eye = identity(m);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5]
        + &a2 * b[3]
        + &eye * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4]
        + &a2 * b[2]
        + &eye * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve_real(&q, &p)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpOverflow { norm });
    }
    Ok(r)
}

/// `X` with `A X = B` for real matrices.
pub fn solve_real(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    let lu = a.clone().lu();
    let inv = lu.try_inverse().ok_or_else(|| Error::Singular {
        context: "real solve".into(),
        condition: f64::INFINITY,
    })?;
    let condition = norm_one(a) * norm_one(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular {
            context: "real solve".into(),
            condition,
        });
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::Singular {
        context: "real solve".into(),
        condition,
    })
}

/// `X` with `A X = B`; fails with the condition estimate when `A` is
/// singular or its 1-norm condition exceeds [`MAX_CONDITION`].
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let inv = a.clone().lu().try_inverse().ok_or_else(|| Error::Singular {
        context: "complex solve".into(),
        condition: f64::INFINITY,
    })?;
    let condition = norm_one_c(a) * norm_one_c(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular {
            context: "complex solve".into(),
            condition,
        });
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::Singular {
        context: "complex solve".into(),
        condition,
    })
}

/// `X` with `X A = B`.
pub fn solve_right_real(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    Ok(solve_real(&a.transpose(), &b.transpose())?.transpose())
}

pub fn solve_right(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(solve(&a.transpose(), &b.transpose())?.transpose())
}

pub fn inverse_real(a: &RealMatrix) -> Result<RealMatrix> {
    solve_real(a, &identity(a.nrows()))
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    solve(a, &ComplexMatrix::identity(a.nrows(), a.ncols()))
}

/// `diag(d) * A` without forming the diagonal matrix.
pub fn scale_rows(d: &[f64], a: &RealMatrix) -> RealMatrix {
    let mut out = a.clone();
    for (k, mut row) in out.row_iter_mut().enumerate() {
        row *= d[k];
    }
    out
}

/// `A * diag(d)`.
pub fn scale_cols(a: &RealMatrix, d: &[f64]) -> RealMatrix {
    let mut out = a.clone();
    for (r, mut col) in out.column_iter_mut().enumerate() {
        col *= d[r];
    }
    out
}
