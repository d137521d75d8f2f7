//! Matrix measures on `(-inf, 0]` sampled on a uniform grid, and the
//! exponential convolutions built from them.

use crate::error::{Error, Result};
use crate::factorization::MinusLaw;
use crate::linalg::{self, RealMatrix};

/// Density on the nodes `-L + j step` (`j = 0..=L/step`) plus an atom at 0.
#[derive(Debug, Clone)]
pub struct LowerMeasure {
    pub m: usize,
    pub step: f64,
    pub domain: f64,
    pub density: Vec<RealMatrix>,
    pub atom: RealMatrix,
}

impl LowerMeasure {
    /// `s^{-1} p_star dP^-` for the post-supremum law `law`.
    pub fn from_minus_law(law: &MinusLaw, p_star: &RealMatrix, step: f64) -> Result<Self> {
        let domain = law.domain();
        let points = (domain / step).round() as usize;
        if ((points as f64) * step - domain).abs() > 1e-9 * domain || points % 2 != 0 {
            return Err(Error::InvalidArgument(
                "measure domain must be an even multiple of the grid step".into(),
            ));
        }
        let (dens, _) = law.series.on_uniform_grid(points);
        let inv_s = 1.0 / law.s;
        let density = dens.iter().map(|d| p_star * d * inv_s).collect();
        Ok(Self {
            m: p_star.nrows(),
            step,
            domain,
            density,
            atom: p_star * &law.atom * inv_s,
        })
    }

    /// Every `k`-th node of this measure.
    pub fn coarsened(&self, k: usize) -> Self {
        Self {
            m: self.m,
            step: self.step * k as f64,
            domain: self.domain,
            density: self.density.iter().step_by(k).cloned().collect(),
            atom: self.atom.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    /// Node index of `u`, which must lie on the grid.
    pub fn index(&self, u: f64) -> usize {
        let j = (u + self.domain) / self.step;
        let r = j.round();
        debug_assert!((j - r).abs() < 1e-6, "level {u} is off the grid");
        r as usize
    }

    /// Density at a grid level `u <= 0` (zero left of the domain).
    pub fn density_at(&self, u: f64) -> RealMatrix {
        if u < -self.domain - 0.5 * self.step {
            return RealMatrix::zeros(self.m, self.m);
        }
        self.density[self.index(u)].clone()
    }

    /// `E_c(u) = int_{-inf}^{u-} e^{-c (u - z)} g(z) dz` at every second node.
    pub fn smoothed(&self, c: f64) -> Vec<RealMatrix> {
        let half = (self.len() - 1) / 2;
        let e1 = (-c * self.step).exp();
        let e2 = e1 * e1;
        let w = self.step / 3.0;
        let mut out = Vec::with_capacity(half + 1);
        let mut acc = RealMatrix::zeros(self.m, self.m);
        out.push(acc.clone());
        for k in 0..half {
            let g = &self.density;
            acc = &acc * e2 + (&g[2 * k] * e2 + &g[2 * k + 1] * (4.0 * e1) + &g[2 * k + 2]) * w;
            out.push(acc.clone());
        }
        out
    }

    /// `int e^{r y} dmu(y)` over `(-inf, 0]`, atom included.
    pub fn exponential_moment(&self, r: f64) -> RealMatrix {
        let n = self.len() - 1;
        let w = crate::transforms::composite_weights(n, self.step);
        let mut acc = self.atom.clone();
        for (j, d) in self.density.iter().enumerate() {
            let y = -self.domain + j as f64 * self.step;
            acc += d * (w[j] * (r * y).exp());
        }
        acc
    }

    pub fn total_mass(&self) -> RealMatrix {
        self.exponential_moment(0.0)
    }
}

/// `out[i] = int_0^{i h} e^{-R (i h - t)} C f(t) dt` for `i = 0..=n`, with `f`
/// sampled at step `h/2` (`2n + 1` values); Simpson on each cell.
pub fn exp_convolution(
    e_half: &RealMatrix,
    e_full: &RealMatrix,
    c: &[f64],
    f: &[RealMatrix],
    h: f64,
) -> Vec<RealMatrix> {
    let m = e_full.nrows();
    let n = (f.len() - 1) / 2;
    let cf = |x: &RealMatrix| linalg::scale_rows(c, x);
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = RealMatrix::zeros(m, m);
    out.push(acc.clone());
    for i in 0..n {
        let inc = e_full * cf(&f[2 * i]) + e_half * cf(&f[2 * i + 1]) * 4.0 + cf(&f[2 * i + 2]);
        acc = e_full * &acc + inc * (h / 6.0);
        out.push(acc.clone());
    }
    out
}
