//! Characteristic-function inversion for matrix laws on `(-inf, 0]`,
//! uniform-grid quadrature weights and small-`s` limit extrapolation.
//!
//! Inversion uses a Fourier-cosine expansion on `[-L, 0]`. Before expanding,
//! the two leading terms of the large-frequency expansion of the transform
//! (the density value and slope at `0-`) are removed with closed-form
//! exponential pieces, so the remainder extends evenly across `0` with a
//! continuous second derivative and its cosine coefficients decay like
//! `k^-4`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, RealMatrix};

/// Frequency truncation and tolerance of a generic inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub alpha_max: f64,
    pub n_alpha: usize,
    pub tol: f64,
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_max > 0.0 && self.alpha_max.is_finite()) {
            return Err(Error::InvalidArgument("alpha_max must be positive".into()));
        }
        if self.n_alpha < 16 || self.n_alpha % 2 != 0 {
            return Err(Error::InvalidArgument(
                "n_alpha must be even and at least 16".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        Ok(())
    }

    /// Length of the expansion interval `[-L, 0]` implied by the frequency step.
    pub fn domain(&self) -> f64 {
        PI * self.n_alpha as f64 / self.alpha_max
    }
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            alpha_max: 1024.0,
            n_alpha: 1 << 14,
            tol: 1e-6,
        }
    }
}

/// Cosine-series representation of a matrix density on `[-L, 0]`.
#[derive(Debug, Clone)]
pub struct HalfLineSeries {
    m: usize,
    domain: f64,
    /// `A_k`, with `A_0` already halved.
    coeffs: Vec<RealMatrix>,
    /// density at `0-`
    lead: RealMatrix,
    /// weight of `(-y) e^{kappa y}`
    slope: RealMatrix,
    kappa: f64,
}

impl HalfLineSeries {
    /// Builds the series from the transform `cf(alpha) = int e^{i alpha y} g(y) dy`
    /// of an absolutely continuous matrix measure on `(-inf, 0]`.
    /// `scale` is a typical rate of the law (used to pick probe frequencies).
    pub fn from_cf<F>(m: usize, cf: F, domain: f64, n_terms: usize, scale: f64) -> Result<Self>
    where
        F: Fn(f64) -> Result<ComplexMatrix>,
    {
        if !(domain > 0.0) || n_terms < 2 {
            return Err(Error::InvalidArgument("inversion domain/terms".into()));
        }
        let kappa = (40.0 / domain).max(1.0);
        let scale = scale.max(1.0);
        let i = Complex64::i();

        // density at 0-: Re(i a G(a)) = g0 + O(a^-2)
        let a0 = 1e6 * scale;
        let lead = linalg::real_part(&(cf(a0)? * (i * a0)));
        // g1 = -a Im(i a G(a)) + O(a^-2); one Richardson step removes the O term
        let g1_at = |a: f64| -> Result<RealMatrix> {
            let v = cf(a)? * (i * a);
            Ok(v.map(|z| -a * z.im))
        };
        let ab = 1e3 * scale;
        let g1 = (g1_at(2.0 * ab)? * 4.0 - g1_at(ab)?) / 3.0;
        let slope = &g1 + &lead * kappa;

        let lead_c = linalg::to_complex(&lead);
        let slope_c = linalg::to_complex(&slope);
        let mut coeffs = Vec::with_capacity(n_terms);
        for k in 0..n_terms {
            let alpha = k as f64 * PI / domain;
            let b1 = Complex64::new(1.0, 0.0) / (kappa + i * alpha);
            let g = cf(alpha)? - &lead_c * b1 - &slope_c * (b1 * b1);
            // shift to [-L, 0]: e^{-i alpha a} with a = -L
            let phase = (i * alpha * domain).exp();
            let mut a = (g * phase).map(|z| z.re) * (2.0 / domain);
            if k == 0 {
                a *= 0.5;
            }
            coeffs.push(a);
        }
        Ok(Self {
            m,
            domain,
            coeffs,
            lead,
            slope,
            kappa,
        })
    }

    pub fn domain(&self) -> f64 {
        self.domain
    }

    pub fn n_terms(&self) -> usize {
        self.coeffs.len()
    }

    fn smooth_density(&self, y: f64) -> RealMatrix {
        let e = (self.kappa * y).exp();
        &self.lead * e + &self.slope * (-y * e)
    }

    fn smooth_cdf(&self, y: f64) -> RealMatrix {
        let k = self.kappa;
        let e = (k * y).exp();
        &self.lead * (e / k) + &self.slope * (e * (1.0 / (k * k) - y / k))
    }

    /// Density at `y < 0`.
    pub fn density(&self, y: f64) -> RealMatrix {
        let mut acc = RealMatrix::zeros(self.m, self.m);
        if y >= -self.domain {
            let t = PI * (y + self.domain) / self.domain;
            for (k, a) in self.coeffs.iter().enumerate() {
                acc += a * (k as f64 * t).cos();
            }
        }
        acc + self.smooth_density(y)
    }

    /// `int_{-inf}^{y} g`, for `y <= 0`.
    pub fn cdf(&self, y: f64) -> RealMatrix {
        let mut acc = RealMatrix::zeros(self.m, self.m);
        if y >= -self.domain {
            acc += &self.coeffs[0] * (y + self.domain);
            let t = PI * (y + self.domain) / self.domain;
            for (k, a) in self.coeffs.iter().enumerate().skip(1) {
                let w = self.domain / (k as f64 * PI);
                acc += a * (w * (k as f64 * t).sin());
            }
        }
        acc + self.smooth_cdf(y)
    }

    /// Density and cdf on the nodes `-L + j L / M`, `j = 0..=M`, with
    /// `M = n_terms`.
    pub fn on_grid(&self) -> (Vec<RealMatrix>, Vec<RealMatrix>) {
        self.on_uniform_grid(self.coeffs.len())
    }

    /// Density and cdf on the nodes `-L + j L / points`, `j = 0..=points`,
    /// by one FFT per matrix entry (on a refined grid when `points` is
    /// smaller than the number of terms).
    pub fn on_uniform_grid(&self, points: usize) -> (Vec<RealMatrix>, Vec<RealMatrix>) {
        let m = self.m;
        let terms = self.coeffs.len();
        let refine = terms.div_ceil(points.max(1));
        let fine = points * refine;
        let len = 2 * fine;
        let mut planner = FftPlanner::<f64>::new();
        let fft: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(len);
        let mut dens = vec![RealMatrix::zeros(m, m); points + 1];
        let mut cdf = vec![RealMatrix::zeros(m, m); points + 1];
        let step = self.domain / points as f64;
        let zero = Complex64::new(0.0, 0.0);
        let mut buf_d = vec![zero; len];
        let mut buf_c = vec![zero; len];
        for a in 0..m {
            for b in 0..m {
                buf_d.iter_mut().for_each(|z| *z = zero);
                buf_c.iter_mut().for_each(|z| *z = zero);
                for k in 0..terms {
                    let v = self.coeffs[k][(a, b)];
                    buf_d[k] = Complex64::new(v, 0.0);
                    if k >= 1 {
                        buf_c[k] = Complex64::new(v * self.domain / (k as f64 * PI), 0.0);
                    }
                }
                fft.process(&mut buf_d);
                fft.process(&mut buf_c);
                for j in 0..=points {
                    let idx = (j * refine) % len;
                    dens[j][(a, b)] = buf_d[idx].re;
                    cdf[j][(a, b)] = self.coeffs[0][(a, b)] * (j as f64 * step) - buf_c[idx].im;
                }
            }
        }
        for j in 0..=points {
            let y = -self.domain + j as f64 * step;
            dens[j] += self.smooth_density(y);
            cdf[j] += self.smooth_cdf(y);
        }
        (dens, cdf)
    }
}

/// Cdf on `y_grid` of a matrix law on `(-inf, 0]` given its characteristic
/// function `cf` and its atoms. The declared atoms are removed from `cf`
/// before inversion and added back as jumps (`cdf(y) = P{X < y}`).
pub fn invert_cf_to_cdf<F>(
    cf: F,
    atoms: &[(f64, RealMatrix)],
    y_grid: &[f64],
    cfg: &InversionConfig,
) -> Result<Vec<RealMatrix>>
where
    F: Fn(f64) -> ComplexMatrix,
{
    cfg.validate()?;
    if atoms.iter().any(|(loc, _)| *loc > 0.0) || y_grid.iter().any(|y| *y > 0.0) {
        return Err(Error::InvalidArgument(
            "law and grid must live on (-inf, 0]".into(),
        ));
    }
    let m = cf(0.0).nrows();
    let i = Complex64::i();
    let continuous = |alpha: f64| -> Result<ComplexMatrix> {
        let mut g = cf(alpha);
        for (loc, w) in atoms {
            g -= linalg::to_complex(w) * (i * alpha * loc).exp();
        }
        Ok(g)
    };
    let series = HalfLineSeries::from_cf(m, continuous, cfg.domain(), cfg.n_alpha, 1.0)?;
    let total = linalg::real_part(&continuous(0.0)?);
    let mass = series.cdf(0.0);
    let mismatch = linalg::max_abs(&(&mass - &total));
    if mismatch > cfg.tol {
        return Err(Error::Inversion(format!(
            "continuous mass {mismatch:.3e} away from the transform at 0"
        )));
    }
    Ok(y_grid
        .iter()
        .map(|&y| {
            let mut v = series.cdf(y);
            for (loc, w) in atoms {
                if *loc < y {
                    v += w;
                }
            }
            v
        })
        .collect())
}

/// 4th-order composite weights for `n` equal intervals of width `h`
/// (Simpson, with a 3/8 panel at the end when `n` is odd; trapezoid for `n = 1`).
pub fn composite_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    match n {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_end = if n % 2 == 0 { n } else { n - 3 };
            let mut j = 0;
            while j + 2 <= simpson_end {
                w[j] += h / 3.0;
                w[j + 1] += 4.0 * h / 3.0;
                w[j + 2] += h / 3.0;
                j += 2;
            }
            if n % 2 == 1 {
                let b = simpson_end;
                w[b] += 3.0 * h / 8.0;
                w[b + 1] += 9.0 * h / 8.0;
                w[b + 2] += 9.0 * h / 8.0;
                w[b + 3] += 3.0 * h / 8.0;
            }
        }
    }
    w
}

/// An extrapolated limit with its error estimate.
#[derive(Debug, Clone)]
pub struct Extrapolation {
    pub value: RealMatrix,
    pub error: f64,
}

/// Polynomial (Neville) extrapolation of `values[i] = f(s[i])` to `s = 0`.
/// The error estimate is the gap between the two highest-order extrapolants.
pub fn extrapolate_to_zero(s: &[f64], values: &[RealMatrix]) -> Extrapolation {
    let n = s.len();
    let mut table: Vec<Vec<RealMatrix>> = vec![values.to_vec()];
    for j in 1..n {
        let prev = &table[j - 1];
        let next = (j..n)
            .map(|i| {
                // prev is indexed from j-1
                let hi = &prev[i - (j - 1)];
                let lo = &prev[i - 1 - (j - 1)];
                (hi * s[i - j] - lo * s[i]) / (s[i - j] - s[i])
            })
            .collect();
        table.push(next);
    }
    let best = table[n - 1][0].clone();
    let second = table[n - 2].last().unwrap().clone();
    let error = linalg::max_abs(&(&best - &second));
    Extrapolation { value: best, error }
}

/// Limit of `f(s)` as `s -> 0` from a decreasing positive sequence, assuming
/// `f(s) = f(0) + c s + o(s)`.
pub fn limit_s_to_zero<F>(f: F, s_seq: &[f64]) -> Result<Extrapolation>
where
    F: Fn(f64) -> Result<RealMatrix>,
{
    if s_seq.len() < 3 {
        return Err(Error::InvalidArgument("need at least three s values".into()));
    }
    if s_seq.iter().any(|s| !(*s > 0.0)) || s_seq.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "s sequence must be positive and strictly decreasing".into(),
        ));
    }
    let values = s_seq.iter().map(|&s| f(s)).collect::<Result<Vec<_>>>()?;
    if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Extrapolation("non-finite value in sequence".into()));
    }
    let ex = extrapolate_to_zero(s_seq, &values);
    let bound = 1e-4 * (1.0 + linalg::max_abs(&ex.value));
    if !(ex.error < bound) {
        return Err(Error::Extrapolation(format!(
            "sequence does not settle: error estimate {:.3e} exceeds {:.3e}",
            ex.error, bound
        )));
    }
    Ok(ex)
}

/// Geometric sequence `s0, s0/2, ...` of `n` values.
pub fn geometric_s(s0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| s0 / 2f64.powi(j as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: Complex64) -> ComplexMatrix {
        ComplexMatrix::from_element(1, 1, v)
    }

    #[test]
    fn point_mass_at_zero() {
        let m = RealMatrix::from_element(1, 1, 0.3);
        let cdf = invert_cf_to_cdf(
            |_| scalar(Complex64::new(0.3, 0.0)),
            &[(0.0, m)],
            &[-1.0, -1e-3, 0.0],
            &InversionConfig::default(),
        )
        .unwrap();
        assert!(cdf[0][(0, 0)].abs() < 1e-12 && cdf[1][(0, 0)].abs() < 1e-12);
        // cdf(y) = P{X < y}: the atom at 0 is not below 0
        assert!(cdf[2][(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn negative_exponential_law() {
        let i = Complex64::i();
        let cfg = InversionConfig { alpha_max: 400.0, n_alpha: 4096, tol: 1e-6 };
        let cdf = invert_cf_to_cdf(|a| scalar(1.0 / (1.0 + i * a)), &[], &[-1.0, -0.01, -5.0], &cfg)
            .unwrap();
        assert!((cdf[0][(0, 0)] - (-1f64).exp()).abs() < 1e-6);
        assert!((cdf[1][(0, 0)] - (-0.01f64).exp()).abs() < 1e-6);
        assert!((cdf[2][(0, 0)] - (-5f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_cf_gives_zero_cdf() {
        let cdf = invert_cf_to_cdf(
            |_| ComplexMatrix::zeros(2, 2),
            &[],
            &[-3.0, -0.5],
            &InversionConfig::default(),
        )
        .unwrap();
        assert!(cdf.iter().all(|c| linalg::max_abs(c) == 0.0));
    }

    #[test]
    fn mixture_reproduced_uniformly() {
        // 0.4 * (-Exp(2)) + 0.35 * (-Exp(0.5)) + atom 0.25 at -1.5
        let i = Complex64::i();
        let cf = |a: f64| {
            scalar(0.4 * 2.0 / (2.0 + i * a) + 0.35 * 0.5 / (0.5 + i * a) + 0.25 * (-1.5 * i * a).exp())
        };
        let cfg = InversionConfig { alpha_max: 800.0, n_alpha: 1 << 14, tol: 1e-6 };
        let ys: Vec<f64> = (1..200).map(|j| -0.05 * j as f64).collect();
        let atom = vec![(-1.5, RealMatrix::from_element(1, 1, 0.25))];
        let cdf = invert_cf_to_cdf(cf, &atom, &ys, &cfg).unwrap();
        for (y, v) in ys.iter().zip(cdf.iter()) {
            let exact = 0.4 * (2.0 * y).exp() + 0.35 * (0.5 * y).exp() + if *y > -1.5 { 0.25 } else { 0.0 };
            assert!((v[(0, 0)] - exact).abs() < 1e-6, "y={y}: {} vs {exact}", v[(0, 0)]);
        }
    }

    #[test]
    fn inversion_is_linear() {
        let i = Complex64::i();
        let f = |a: f64| scalar(0.7 / (1.0 + i * a));
        let g = |a: f64| scalar(0.2 * 3.0 / (3.0 + i * a));
        let ys = [-0.2, -1.0, -2.5];
        let cfg = InversionConfig::default();
        let a = invert_cf_to_cdf(f, &[], &ys, &cfg).unwrap();
        let b = invert_cf_to_cdf(g, &[], &ys, &cfg).unwrap();
        let ab = invert_cf_to_cdf(|x| f(x) * Complex64::new(2.0, 0.0) - g(x), &[], &ys, &cfg).unwrap();
        for j in 0..ys.len() {
            assert!(linalg::max_abs(&(&a[j] * 2.0 - &b[j] - &ab[j])) < 1e-10);
        }
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let i = Complex64::i();
        let series = HalfLineSeries::from_cf(
            1,
            |a| Ok(scalar(0.6 * 1.3 / (1.3 + i * a))),
            40.0,
            2048,
            1.3,
        )
        .unwrap();
        let (dens, cdf) = series.on_grid();
        for j in [0usize, 100, 1500, 2047, 2048] {
            let y = -40.0 + j as f64 * 40.0 / 2048.0;
            assert!((dens[j][(0, 0)] - series.density(y)[(0, 0)]).abs() < 1e-10);
            assert!((cdf[j][(0, 0)] - series.cdf(y)[(0, 0)]).abs() < 1e-10);
            assert!((cdf[j][(0, 0)] - 0.6 * (1.3 * y).exp()).abs() < 1e-8);
            assert!((dens[j][(0, 0)] - 0.6 * 1.3 * (1.3 * y).exp()).abs() < 1e-7);
        }
        // coarser and finer grids than the number of terms
        for points in [300usize, 5000] {
            let (d, c) = series.on_uniform_grid(points);
            for j in [0usize, points / 3, points] {
                let y = -40.0 + j as f64 * 40.0 / points as f64;
                assert!((d[j][(0, 0)] - series.density(y)[(0, 0)]).abs() < 1e-10);
                assert!((c[j][(0, 0)] - series.cdf(y)[(0, 0)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn composite_weights_integrate_cubics_exactly() {
        for n in 1..12 {
            let h = 0.37;
            let w = composite_weights(n, h);
            let sum: f64 = w.iter().sum();
            assert!((sum - n as f64 * h).abs() < 1e-12);
            if n >= 2 {
                let b = n as f64 * h;
                let integral: f64 = w.iter().enumerate().map(|(j, w)| w * (j as f64 * h).powi(3)).sum();
                assert!((integral - b.powi(4) / 4.0).abs() < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn affine_limit_is_exact() {
        let a = RealMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = RealMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, 7.0]);
        let ex = limit_s_to_zero(|s| Ok(&a + &b * s), &geometric_s(0.1, 3)).unwrap();
        assert!(linalg::max_abs(&(ex.value - a)) < 1e-12);
    }

    #[test]
    fn divergent_sequence_rejected() {
        let r = limit_s_to_zero(|s| Ok(RealMatrix::from_element(1, 1, 1.0 / s)), &geometric_s(0.1, 4));
        assert!(matches!(r, Err(Error::Extrapolation(_))));
        let r = limit_s_to_zero(|s| Ok(RealMatrix::from_element(1, 1, s)), &[0.1, 0.2, 0.05]);
        assert!(r.is_err());
    }
}
