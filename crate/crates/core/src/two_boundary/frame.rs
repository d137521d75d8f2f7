//! Upward-exit transform and killed density for one interval length, given
//! the positive factor and the measure `mu = s^{-1} p_star dP^-` (or its
//! `s -> 0` limit).

use crate::error::{Error, Result};
use crate::linalg::{self, RealMatrix};
use crate::transforms::composite_weights;

use super::measure::{exp_convolution, LowerMeasure};

/// Everything the upward-exit solve and the density assembly need.
#[derive(Debug, Clone)]
pub struct ExitFrame {
    /// `s`, or 1 for the `s -> 0` limit; densities are `scale` times the assembly.
    pub scale: f64,
    pub t: f64,
    pub n: usize,
    pub p_star: RealMatrix,
    pub r_star: RealMatrix,
    pub c: Vec<f64>,
    /// `Lambda Fbar_0(0)` diagonal.
    pub up: Vec<f64>,
    pub measure: LowerMeasure,
    /// `E_{c_r}` on the half grid (step `h/2`) for each state `r`.
    smoothed: Vec<Vec<RealMatrix>>,
    e_half: RealMatrix,
    e_full: RealMatrix,
}

/// Upward-exit transform on the nodes `x_i = i T / n`.
#[derive(Debug, Clone)]
pub struct AffineSolution {
    pub bt: Vec<RealMatrix>,
    pub c0: RealMatrix,
    pub residual: f64,
}

/// Killed density at one `x`, split at `y = 0`.
#[derive(Debug, Clone)]
pub struct Assembly {
    /// nodes `x - T + j h` up to `0-`
    pub lower: Vec<RealMatrix>,
    /// nodes `j h` from `0+` to `x`
    pub upper: Vec<RealMatrix>,
}

impl ExitFrame {
    pub fn new(
        scale: f64,
        t: f64,
        n: usize,
        p_star: RealMatrix,
        c: Vec<f64>,
        up: Vec<f64>,
        measure: LowerMeasure,
    ) -> Result<Self> {
        let h = t / n as f64;
        if (measure.step * 4.0 - h).abs() > 1e-12 * h {
            return Err(Error::InvalidArgument("measure step must be a quarter of the x step".into()));
        }
        if measure.domain < t {
            return Err(Error::InvalidArgument("measure domain shorter than the interval".into()));
        }
        let r_star = linalg::diag(&c) * &p_star;
        let smoothed = c.iter().map(|&ck| measure.smoothed(ck)).collect();
        let e_half = linalg::mat_exp(&(&r_star * (-h / 2.0)))?;
        let e_full = &e_half * &e_half;
        Ok(Self {
            scale,
            t,
            n,
            p_star,
            r_star,
            c,
            up,
            measure,
            smoothed,
            e_half,
            e_full,
        })
    }

    pub fn m(&self) -> usize {
        self.c.len()
    }

    pub fn h(&self) -> f64 {
        self.t / self.n as f64
    }

    fn one_minus_p(&self) -> RealMatrix {
        linalg::identity(self.m()) - &self.p_star
    }

    /// Half-grid index of a level `u` in `[-L, 0]`.
    fn half_index(&self, u: f64) -> usize {
        ((u + self.measure.domain) / (2.0 * self.measure.step)).round() as usize
    }

    /// `J(u) = int_{-inf}^{u-} dmu(y) e^{-C (u - y)}` at a half-grid level.
    fn j_mu(&self, u: f64) -> RealMatrix {
        let m = self.m();
        let idx = self.half_index(u);
        let mut out = RealMatrix::zeros(m, m);
        for r in 0..m {
            out.set_column(r, &self.smoothed[r][idx].column(r));
        }
        out
    }

    fn exp_powers(&self) -> Vec<RealMatrix> {
        let mut out = Vec::with_capacity(self.n + 1);
        let mut cur = linalg::identity(self.m());
        for _ in 0..=self.n {
            out.push(cur.clone());
            cur = &self.e_full * &cur;
        }
        out
    }

    /// Solves the upward-exit equation; the unknown constant `C_0^T` enters
    /// affinely and is found by one linear solve.
    pub fn solve(&self) -> Result<AffineSolution> {
        let m = self.m();
        let n = self.n;
        let h = self.h();
        let t = self.t;
        let q = self.one_minus_p();
        let powers = self.exp_powers();
        let a: Vec<RealMatrix> = powers.iter().map(|e| &q * e).collect();
        let f: Vec<RealMatrix> = (0..=2 * n).map(|k| self.j_mu(k as f64 * h / 2.0 - t)).collect();
        let conv = exp_convolution(&self.e_half, &self.e_full, &self.c, &f, h);
        let decay: Vec<f64> = self.c.iter().map(|ck| (-ck * t).exp()).collect();
        let b: Vec<RealMatrix> = (0..=n)
            .map(|i| linalg::scale_cols(&(&f[2 * i] + &q * &conv[i]), &decay))
            .collect();

        let w = composite_weights(n, h);
        let grow = |x: f64| -> Vec<f64> { self.c.iter().map(|ck| (ck * x).exp()).collect() };
        let mut ia = RealMatrix::zeros(m, m);
        let mut ib = RealMatrix::zeros(m, m);
        for i in 0..=n {
            let g = grow(i as f64 * h);
            ia += linalg::scale_rows(&g, &a[i]) * w[i];
            ib += linalg::scale_rows(&g, &b[i]) * w[i];
        }
        let uc: Vec<f64> = (0..m).map(|k| self.up[k] * self.c[k]).collect();
        let lhs = linalg::identity(m) + linalg::scale_rows(&uc, &ib);
        let rhs = linalg::diag(&self.up) + linalg::scale_rows(&uc, &ia);
        let c0 = linalg::solve_real(&lhs, &rhs)?;
        let bt: Vec<RealMatrix> = (0..=n).map(|i| &a[i] - &b[i] * &c0).collect();

        let mut check = RealMatrix::zeros(m, m);
        for i in 0..=n {
            check += linalg::scale_rows(&grow(i as f64 * h), &bt[i]) * w[i];
        }
        let c0_again = linalg::diag(&self.up) + linalg::scale_rows(&uc, &check);
        let residual = linalg::max_abs(&(&c0_again - &c0));
        Ok(AffineSolution { bt, c0, residual })
    }

    /// Density (divided by `scale`) at `x = i h` of the killed occupation in
    /// the time-reversed picture: the frame belongs to the reversed process
    /// and `exit_weight` is the reversal conjugate of `B^T(x) C`.
    pub fn assemble(&self, i: usize, exit_weight: &RealMatrix) -> Assembly {
        let n = self.n;
        let h = self.h();
        let x = i as f64 * h;
        let t = self.t;
        let q = self.one_minus_p();
        let j0 = n - i;
        let mm = exit_weight;

        // second term below zero: int_{x-T}^{y} e^{-R (y - z)} C dmu(z)
        let g: Vec<RealMatrix> = (0..=2 * j0)
            .map(|k| self.measure.density_at(x - t + k as f64 * h / 2.0))
            .collect();
        let f2 = exp_convolution(&self.e_half, &self.e_full, &self.c, &g, h);
        let jump = &f2[j0] + linalg::scale_rows(&self.c, &self.measure.atom);

        let fm: Vec<RealMatrix> = (0..=2 * n)
            .map(|k| self.j_mu(k as f64 * h / 2.0 - t) * mm)
            .collect();
        let g4 = exp_convolution(&self.e_half, &self.e_full, &self.c, &fm, h);

        let tail = |j: usize| -> RealMatrix { -(&fm[2 * j]) - &q * &g4[j] };
        let lower = (0..=j0)
            .map(|j| &g[2 * j] + &q * &f2[j] + tail(j))
            .collect();
        let mut upper = Vec::with_capacity(i + 1);
        let mut e = linalg::identity(self.m());
        for l in 0..=i {
            upper.push(&q * &e * &jump + tail(j0 + l));
            e = &self.e_full * &e;
        }
        Assembly { lower, upper }
    }
}
