//! Risk reserve in a Markov environment: premiums arrive as exponential
//! upward jumps, claims as negative jumps, the reserve is capped at `B` and
//! everything above the cap is paid out as dividends. Transition jumps are
//! absent.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{phi_minus, PlusFactor};
use crate::linalg::{self, ComplexMatrix, RealMatrix};
use crate::model::{Model, ModelSpec, NegJumpDist};
use crate::transforms::limit_s_to_zero;
use crate::two_boundary::LimitOptions;

/// Scenario file: environment, premium and claim streams, cap and start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub nu: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    /// Premium arrival rates.
    pub lambda1: Vec<f64>,
    /// Claim arrival rates.
    pub lambda2: Vec<f64>,
    /// Rates of the exponential premium sizes.
    pub c: Vec<f64>,
    /// Claim laws, written as laws of the negative jump `-claim` (mass 1).
    pub claims: Vec<NegJumpDist>,
    /// Reserve cap.
    #[serde(rename = "B")]
    pub b: f64,
    /// Initial reserve, `0 < u <= B`.
    pub u: f64,
}

impl RiskSpec {
    pub fn m(&self) -> usize {
        self.nu.len()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("risk scenario serializes")
    }

    /// The underlying jump process: `lambda = lambda1 + lambda2` with the
    /// positive share `lambda1 / lambda`.
    pub fn to_model_spec(&self) -> ModelSpec {
        let m = self.m();
        let total: Vec<f64> = (0..m).map(|k| self.lambda1[k] + self.lambda2[k]).collect();
        let share = |k: usize| if total[k] > 0.0 { self.lambda1[k] / total[k] } else { 1.0 };
        ModelSpec {
            nu: self.nu.clone(),
            p: self.p.clone(),
            lambda: total.clone(),
            c: self.c.clone(),
            pos_jump_prob: (0..m).map(share).collect(),
            neg_jump: (0..m).map(|k| self.claims[k].scaled(1.0 - share(k))).collect(),
            trans_jump: None,
        }
    }

    /// Checks beyond those of the underlying model.
    pub fn violations(&self) -> Vec<String> {
        let m = self.m();
        let mut v = Vec::new();
        for (name, len) in [
            ("lambda1", self.lambda1.len()),
            ("lambda2", self.lambda2.len()),
            ("c", self.c.len()),
            ("claims", self.claims.len()),
            ("p", self.p.len()),
        ] {
            if len != m {
                v.push(format!("{name} has length {len}, expected {m}"));
            }
        }
        if !v.is_empty() {
            return v;
        }
        for k in 0..m {
            if !(self.lambda1[k] >= 0.0) || !(self.lambda2[k] >= 0.0) {
                v.push(format!("state {}: rates must be nonnegative", k + 1));
            }
            let mass = self.claims[k].total_mass();
            if (mass - 1.0).abs() > 1e-9 {
                v.push(format!("state {}: claim law has mass {mass}, expected 1", k + 1));
            }
            let mean = self.claims[k].abs_first_moment();
            if !(mean.is_finite() && mean > 0.0) {
                v.push(format!("state {}: claim mean must be finite and positive", k + 1));
            }
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            v.push("cap B must be positive".into());
        }
        if !(self.u > 0.0 && self.u <= self.b) {
            v.push(format!("initial reserve u = {} must lie in (0, B]", self.u));
        }
        v
    }
}

/// A validated risk scenario with its jump process.
#[derive(Debug, Clone)]
pub struct RiskModel {
    pub spec: RiskSpec,
    pub model: Model,
    pub claim_means: Vec<f64>,
}

impl RiskModel {
    pub fn new(spec: RiskSpec) -> Result<Self> {
        let v = spec.violations();
        if !v.is_empty() {
            return Err(Error::InvalidModel(v.join("; ")));
        }
        let model = Model::new(spec.to_model_spec())?;
        let claim_means = spec.claims.iter().map(|c| c.abs_first_moment()).collect();
        Ok(Self {
            spec,
            model,
            claim_means,
        })
    }

    /// Same scenario started from another reserve level.
    pub fn with_start(&self, u: f64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.u = u;
        Self::new(spec)
    }

    pub fn m(&self) -> usize {
        self.model.m
    }

    /// Distance from the start to the cap, `v = B - u`.
    pub fn v(&self) -> f64 {
        self.spec.b - self.spec.u
    }

    /// `Lambda F_0(0)`: claim rates.
    pub fn claim_rates(&self) -> RealMatrix {
        linalg::diag(&self.spec.lambda2)
    }

    /// `diag int e^{i alpha z} dF^1_k(z)`, the claim laws as negative jumps.
    pub fn claim_transform(&self, alpha: f64) -> ComplexMatrix {
        let m = self.m();
        let mut out = ComplexMatrix::zeros(m, m);
        for k in 0..m {
            out[(k, k)] = self.spec.claims[k].transform(Complex64::new(alpha, 0.0));
        }
        out
    }

    /// `int dF^1(z) X e^{R z}` over the claim laws (row `k` uses state `k`'s law).
    pub fn claim_integral(&self, x: &RealMatrix, r: &RealMatrix) -> Result<RealMatrix> {
        let m = self.m();
        let mut out = RealMatrix::zeros(m, m);
        for k in 0..m {
            let law = &self.spec.claims[k];
            let mut factor = RealMatrix::zeros(m, m);
            for c in &law.exp_components {
                let a = linalg::identity(m) * c.rate + r;
                factor += linalg::inverse_real(&a)? * (c.weight * c.rate);
            }
            for a in &law.atoms {
                factor += linalg::mat_exp(&(r * a.location))? * a.weight;
            }
            let row = x.row(k) * factor;
            out.set_row(k, &row);
        }
        Ok(out)
    }

    /// `sI + Lambda F_0(0) - Q`.
    fn claim_resolvent_base(&self, s: f64) -> RealMatrix {
        linalg::identity(self.m()) * s + self.claim_rates() - &self.model.q
    }

    /// `sI + Lambda - Q`.
    fn full_resolvent_base(&self, s: f64) -> RealMatrix {
        linalg::identity(self.m()) * s + self.model.lambda_matrix() - &self.model.q
    }
}

/// Stationary drift of the reserve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    /// `sum_k pi_k (lambda1_k / c_k - lambda2_k m_k)`
    pub m10: f64,
}

pub fn drift(rm: &RiskModel) -> DriftReport {
    let s = &rm.spec;
    let m10 = (0..rm.m())
        .map(|k| rm.model.pi[k] * (s.lambda1[k] / s.c[k] - s.lambda2[k] * rm.claim_means[k]))
        .sum();
    DriftReport { m10 }
}

/// `E e^{-s zeta}` with `zeta` the time of the first claim:
/// `(sI + Lambda F_0(0) - Q)^{-1} Lambda F_0(0)`.
pub fn zeta_star_transform(rm: &RiskModel, s: f64) -> Result<RealMatrix> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate s must be nonnegative, got {s}")));
    }
    linalg::solve_real(&rm.claim_resolvent_base(s), &rm.claim_rates())
}

fn c(x: &RealMatrix) -> ComplexMatrix {
    linalg::to_complex(x)
}

fn check_factor(rm: &RiskModel, factor: &PlusFactor) -> Result<()> {
    if factor.p_star.nrows() != rm.m() {
        return Err(Error::InvalidArgument("factor does not belong to this scenario".into()));
    }
    Ok(())
}

/// Pieces shared by the transforms at one killing rate.
struct Parts {
    m: usize,
    s: f64,
    one_minus_p: RealMatrix,
    /// `E[e^{-s T_1}] = (I - p_star) e^{-R_star v}`
    first_passage: RealMatrix,
    /// `(sI + Lambda F_0(0) - Q)^{-1}`
    claim_res: RealMatrix,
    /// `int dF^1(z) (I - p_star) e^{R_star z}`
    restart: RealMatrix,
}

fn parts(rm: &RiskModel, factor: &PlusFactor) -> Result<Parts> {
    check_factor(rm, factor)?;
    let m = rm.m();
    let one_minus_p = linalg::identity(m) - &factor.p_star;
    let e = linalg::mat_exp(&(&factor.r_star * (-rm.v())))?;
    Ok(Parts {
        m,
        s: factor.s,
        first_passage: &one_minus_p * e,
        claim_res: linalg::inverse_real(&rm.claim_resolvent_base(factor.s))?,
        restart: rm.claim_integral(&one_minus_p, &factor.r_star)?,
        one_minus_p,
    })
}

/// `p_star (R_star - i alpha)^{-1} Phi^-(s, alpha)`.
fn scaled_minus(rm: &RiskModel, factor: &PlusFactor, alpha: f64) -> Result<ComplexMatrix> {
    let m = rm.m();
    let i = Complex64::i();
    let shifted = c(&factor.r_star) - ComplexMatrix::identity(m, m) * (i * alpha);
    let minus = phi_minus(&rm.model, factor, alpha)?;
    Ok(c(&factor.p_star) * linalg::solve(&shifted, &minus)?)
}

fn c_minus_ia(rm: &RiskModel, alpha: f64) -> ComplexMatrix {
    let m = rm.m();
    let mut out = ComplexMatrix::zeros(m, m);
    for k in 0..m {
        out[(k, k)] = Complex64::new(rm.spec.c[k], -alpha);
    }
    out
}

/// Transform of the reserve restarted just below the cap,
/// `int dF^1(z) Phi_{B, B+z}(s, alpha)`, in the form simplified by the
/// positive-factor equation.
pub fn phi_tilde(rm: &RiskModel, factor: &PlusFactor, alpha: f64) -> Result<ComplexMatrix> {
    let pt = parts(rm, factor)?;
    let i = Complex64::i();
    let l = rm.claim_rates();
    let pi_restart = &l * &pt.restart;
    let pi_hat = c(&l) * rm.claim_transform(alpha);
    let inner = c(&pi_restart) * c(&pt.claim_res) * Complex64::new(pt.s, 0.0)
        + (pi_hat * c_minus_ia(rm, alpha) - c(&(&pi_restart * rm.model.c_matrix())))
            * scaled_minus(rm, factor, alpha)?;
    let g = rm.full_resolvent_base(pt.s);
    let a = rm.claim_resolvent_base(pt.s);
    // L^{-1} A p_star^{-1} G^{-1} inner
    let x = linalg::solve(&c(&g), &inner)?;
    let x = linalg::solve(&c(&factor.p_star), &x)?;
    let x = c(&a) * x;
    let x = linalg::solve(&c(&l), &x)?;
    Ok(x * (i * alpha * rm.spec.b).exp())
}

/// The same transform before the simplification: one linear solve of the
/// restart equation.
pub fn phi_tilde_direct(rm: &RiskModel, factor: &PlusFactor, alpha: f64) -> Result<ComplexMatrix> {
    let pt = parts(rm, factor)?;
    let i = Complex64::i();
    let l = rm.claim_rates();
    let lead = linalg::identity(pt.m) - &pt.restart * &pt.claim_res * &l;
    let rhs = (rm.claim_transform(alpha) * c_minus_ia(rm, alpha)
        - c(&(&pt.restart * rm.model.c_matrix())))
        * scaled_minus(rm, factor, alpha)?
        + c(&(&pt.restart * &pt.claim_res)) * Complex64::new(pt.s, 0.0);
    Ok(linalg::solve(&c(&lead), &rhs)? * (i * alpha * rm.spec.b).exp())
}

/// `E e^{i alpha eta_{B,u}(theta_s)}`, the capped reserve at the killing time.
pub fn phi_eta(rm: &RiskModel, factor: &PlusFactor, alpha: f64) -> Result<ComplexMatrix> {
    let pt = parts(rm, factor)?;
    let i = Complex64::i();
    let v = rm.v();
    let at_cap = (i * alpha * rm.spec.b).exp();
    let m = pt.m;
    let shifted = c(&factor.r_star) - ComplexMatrix::identity(m, m) * (i * alpha);
    let lead = c_minus_ia(rm, alpha) * c(&factor.p_star) * (-i * alpha * v).exp()
        - c(&(&pt.first_passage * &factor.r_star));
    let below = lead * linalg::solve(&shifted, &phi_minus(&rm.model, factor, alpha)?)?;
    let tilde = phi_tilde(rm, factor, alpha)?;
    let restart = c(&rm.claim_rates()) * tilde + ComplexMatrix::identity(m, m) * (at_cap * pt.s);
    Ok(below * at_cap + c(&(&pt.first_passage * &pt.claim_res)) * restart)
}

/// `E e^{i alpha eta}` through the one-sided exit identity
/// `E[e^{i alpha xi}; sup < v] = (I - E[e^{-s T_1}] e^{i alpha v} C (C - i alpha)^{-1}) Phi`,
/// which avoids the minus factor altogether.
pub fn phi_eta_by_exit(rm: &RiskModel, factor: &PlusFactor, alpha: f64) -> Result<ComplexMatrix> {
    let pt = parts(rm, factor)?;
    let i = Complex64::i();
    let m = pt.m;
    let (b, u, v) = (rm.spec.b, rm.spec.u, rm.v());
    let phi = rm.model.char_function(pt.s, alpha)?;
    let overshoot = linalg::solve_right(&c_minus_ia(rm, alpha), &c(&rm.model.c_matrix()))?;
    let below = (ComplexMatrix::identity(m, m) - c(&pt.first_passage) * overshoot.clone() * (i * alpha * v).exp())
        * &phi
        * (i * alpha * u).exp();
    // restarted copies: Phi~ = (I - W A^{-1} L)^{-1} e^{i alpha B} [(F^1 - W C (C - i alpha)^{-1}) Phi + s W A^{-1}]
    let l = rm.claim_rates();
    let lead = linalg::identity(m) - &pt.restart * &pt.claim_res * &l;
    let rhs = (rm.claim_transform(alpha) - c(&pt.restart) * overshoot) * &phi
        + c(&(&pt.restart * &pt.claim_res)) * Complex64::new(pt.s, 0.0);
    let at_cap = (i * alpha * b).exp();
    let tilde = linalg::solve(&c(&lead), &rhs)? * at_cap;
    let restart = c(&l) * tilde + ComplexMatrix::identity(m, m) * (at_cap * pt.s);
    Ok(below + c(&(&pt.first_passage * &pt.claim_res)) * restart)
}

/// `P{eta_{B,u}(theta_s) = B}`: time spent at the cap.
///
/// Started at the cap (`u = B`) the process is there at time 0, so the entry
/// factor is `I` rather than the `v -> 0+` limit `I - p_star`: upward passage
/// needs a jump, and the paths with no rise so far sit at `u = B`.
pub fn eta_atom_at(rm: &RiskModel, factor: &PlusFactor) -> Result<RealMatrix> {
    let mut pt = parts(rm, factor)?;
    if rm.v() == 0.0 {
        pt.first_passage = linalg::identity(pt.m);
    }
    let l = rm.claim_rates();
    let sa = &pt.claim_res * pt.s;
    let lead = linalg::identity(pt.m) - &pt.restart * &pt.claim_res * &l;
    let again = linalg::solve_real(&lead, &(&pt.restart * &sa))?;
    Ok(&pt.first_passage * (&sa + &pt.claim_res * &l * again))
}

/// Residual of the positive-factor equation written with the claim laws,
/// `(sI + Lambda - Q)(I - p_star) - Lambda Fbar_0(0) - Lambda F_0(0) int dF^1 (I - p_star) e^{C p_star z}`.
pub fn claim_equation_residual(rm: &RiskModel, factor: &PlusFactor) -> Result<f64> {
    let pt = parts(rm, factor)?;
    let lhs = rm.full_resolvent_base(pt.s) * &pt.one_minus_p;
    let rhs = linalg::diag(&rm.spec.lambda1) + rm.claim_rates() * &pt.restart;
    Ok(linalg::max_abs(&(lhs - rhs)))
}

/// `E e^{-mu Y_{B,u}(theta_s)}` for the dividends `Y = max(0, sup - v)`;
/// `mu = +inf` gives the atom at zero.
pub fn dividend_transform(rm: &RiskModel, factor: &PlusFactor, mu: f64) -> Result<RealMatrix> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be nonnegative, got {mu}")));
    }
    if mu.is_infinite() {
        return dividend_atom(rm, factor);
    }
    let pt = parts(rm, factor)?;
    let shifted = linalg::identity(pt.m) * mu + &factor.r_star;
    let damp = linalg::inverse_real(&shifted)? * mu;
    Ok((linalg::identity(pt.m) - &pt.first_passage * damp) * &factor.ps)
}

/// `P{Y_{B,u}(theta_s) = 0} = P{sup < v} = P_s - (I - p_star) e^{-R_star v} P_s`.
pub fn dividend_atom(rm: &RiskModel, factor: &PlusFactor) -> Result<RealMatrix> {
    let pt = parts(rm, factor)?;
    Ok(&factor.ps - &pt.first_passage * &factor.ps)
}

/// `E Y_{B,u}(theta_s) = (I - p_star) e^{-R_star v} R_star^{-1} P_s`.
pub fn dividend_mean(rm: &RiskModel, factor: &PlusFactor) -> Result<RealMatrix> {
    let pt = parts(rm, factor)?;
    Ok(&pt.first_passage * linalg::solve_real(&factor.r_star, &factor.ps)?)
}

/// Inputs of the `s -> 0` limits of the capped reserve.
#[derive(Debug, Clone)]
pub struct EtaLimit {
    pub p_star0: RealMatrix,
    pub r_star0: RealMatrix,
    /// `lim s p_star(s)^{-1}`
    pub p_inverse_limit: RealMatrix,
    pub extrapolation_error: f64,
}

/// Extrapolates `p_star(0)` and `lim s p_star(s)^{-1}`; requires positive drift.
pub fn eta_limit_inputs(rm: &RiskModel, opts: &LimitOptions) -> Result<EtaLimit> {
    let d = drift(rm).m10;
    if !(d > 0.0) {
        return Err(Error::Precondition(format!(
            "limit theorem hypothesis violated: drift m10 = {d} is not positive"
        )));
    }
    let factor = |s: f64| crate::factorization::solve_plus_factor(&rm.model, s, 1e-12);
    let p0 = limit_s_to_zero(|s| Ok(factor(s)?.p_star), &opts.s_seq)?;
    let inv = limit_s_to_zero(|s| Ok(linalg::inverse_real(&factor(s)?.p_star)? * s), &opts.s_seq)?;
    Ok(EtaLimit {
        r_star0: rm.model.c_matrix() * &p0.value,
        p_star0: p0.value,
        p_inverse_limit: inv.value,
        extrapolation_error: p0.error.max(inv.error),
    })
}

/// Shared prefix `(I - p*(0)) e^{-R*(0) v} lim[s p_star^{-1}] (Lambda - Q)^{-1}`
/// and `int Pi(dz) (I - p*(0)) e^{R*(0) z}`.
fn limit_prefix(rm: &RiskModel, lim: &EtaLimit) -> Result<(RealMatrix, RealMatrix)> {
    let m = rm.m();
    let one_minus = linalg::identity(m) - &lim.p_star0;
    let e = linalg::mat_exp(&(&lim.r_star0 * (-rm.v())))?;
    let base = rm.model.lambda_matrix() - &rm.model.q;
    let prefix = linalg::solve_right_real(&base, &(one_minus.clone() * e * &lim.p_inverse_limit))?;
    let restart = rm.claim_rates() * rm.claim_integral(&one_minus, &lim.r_star0)?;
    Ok((prefix, restart))
}

/// `lim_{s -> 0} E e^{i alpha eta_{B,u}(theta_s)}`; at `alpha = 0` this is
/// the stationary law `1 pi` of the environment.
pub fn eta_limit_cf(rm: &RiskModel, lim: &EtaLimit, alpha: f64) -> Result<ComplexMatrix> {
    let m = rm.m();
    if alpha == 0.0 {
        let pi = &rm.model.pi;
        return Ok(ComplexMatrix::from_fn(m, m, |_, r| Complex64::new(pi[r], 0.0)));
    }
    let i = Complex64::i();
    let (prefix, restart) = limit_prefix(rm, lim)?;
    let psi_inv = linalg::inverse(&rm.model.cumulant(alpha))?;
    let claim_res = linalg::inverse_real(&(rm.claim_rates() - &rm.model.q))?;
    let overshoot = linalg::solve_right(&c_minus_ia(rm, alpha), &c(&rm.model.c_matrix()))?;
    let pi_hat = c(&rm.claim_rates()) * rm.claim_transform(alpha);
    let inner = -(pi_hat * &psi_inv) + c(&restart) * (c(&claim_res) + overshoot * &psi_inv);
    Ok(c(&prefix) * inner * (i * alpha * rm.spec.b).exp())
}

/// `lim_{s -> 0} P{eta_{B,u}(theta_s) = B}`.
pub fn eta_limit_atom(rm: &RiskModel, lim: &EtaLimit) -> Result<RealMatrix> {
    let (prefix, restart) = limit_prefix(rm, lim)?;
    let claim_res = linalg::inverse_real(&(rm.claim_rates() - &rm.model.q))?;
    Ok(prefix * restart * claim_res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::solve_plus_factor;
    use crate::presets::{risk_m2, risk_r1, risk_r2};

    fn factor(rm: &RiskModel, s: f64) -> PlusFactor {
        solve_plus_factor(&rm.model, s, 1e-13).unwrap()
    }

    #[test]
    fn drift_of_presets() {
        assert!(drift(&risk_r1()).m10.abs() < 1e-15);
        assert!((drift(&risk_r2()).m10 - 0.5).abs() < 1e-15);
        // states with drifts +d and -d, equally likely
        let mut spec = risk_m2().spec;
        spec.nu = vec![1.0, 1.0];
        spec.lambda1 = vec![2.0, 1.0];
        spec.lambda2 = vec![1.0, 2.0];
        spec.c = vec![1.0, 1.0];
        spec.claims = vec![NegJumpDist::exponential(1.0, 1.0); 2];
        let rm = RiskModel::new(spec).unwrap();
        assert!(drift(&rm).m10.abs() < 1e-15);
    }

    #[test]
    fn first_claim_time() {
        let rm = risk_m2();
        let z0 = zeta_star_transform(&rm, 0.0).unwrap();
        for k in 0..2 {
            assert!((z0.row(k).sum() - 1.0).abs() < 1e-10);
        }
        let r1 = risk_r1();
        for s in [0.3, 2.0] {
            let z = zeta_star_transform(&r1, s).unwrap()[(0, 0)];
            assert!((z - 1.0 / (s + 1.0)).abs() < 1e-14);
        }
        assert!(linalg::max_abs(&zeta_star_transform(&rm, 1e12).unwrap()) < 1e-10);
        assert!(zeta_star_transform(&rm, -1.0).is_err());
    }

    #[test]
    fn total_mass_is_the_resolvent() {
        for rm in [risk_r1(), risk_r2(), risk_m2()] {
            for s in [0.5, 1.0, 2.0] {
                let f = factor(&rm, s);
                let phi = phi_eta(&rm, &f, 0.0).unwrap();
                assert!(linalg::max_abs_c(&(phi - c(&f.ps))) < 1e-10);
            }
        }
    }

    #[test]
    fn restart_forms_agree() {
        for rm in [risk_r1(), risk_m2()] {
            let f = factor(&rm, 0.7);
            for a in [-1.5, 0.5, 2.0] {
                let x = phi_tilde(&rm, &f, a).unwrap();
                let y = phi_tilde_direct(&rm, &f, a).unwrap();
                assert!(linalg::max_abs_c(&(x - y)) < 1e-10);
            }
        }
    }

    #[test]
    fn minus_factor_and_exit_forms_agree() {
        for rm in [risk_r1(), risk_m2(), risk_m2().with_start(risk_m2().spec.b).unwrap()] {
            let f = factor(&rm, 1.3);
            for a in [-2.0, 0.25, 1.0] {
                let x = phi_eta(&rm, &f, a).unwrap();
                let y = phi_eta_by_exit(&rm, &f, a).unwrap();
                assert!(linalg::max_abs_c(&(x - y)) < 1e-10);
            }
        }
    }

    #[test]
    fn claim_equation_holds() {
        for rm in [risk_r1(), risk_r2(), risk_m2()] {
            for s in [0.2, 1.0, 3.0] {
                let f = factor(&rm, s);
                assert!(claim_equation_residual(&rm, &f).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn dividend_limits() {
        for rm in [risk_r1(), risk_m2()] {
            let f = factor(&rm, 0.8);
            let at0 = dividend_transform(&rm, &f, 0.0).unwrap();
            assert!(linalg::max_abs(&(at0 - &f.ps)) < 1e-10);
            let atom = dividend_atom(&rm, &f).unwrap();
            let far = dividend_transform(&rm, &f, 1e12).unwrap();
            assert!(linalg::max_abs(&(far - &atom)) < 1e-10);
            assert_eq!(dividend_transform(&rm, &f, f64::INFINITY).unwrap(), atom);
            // nonincreasing and convex in mu
            let grid: Vec<RealMatrix> = (0..20).map(|j| dividend_transform(&rm, &f, 0.25 * j as f64).unwrap()).collect();
            for w in grid.windows(3) {
                assert!(w[1].iter().zip(w[0].iter()).all(|(b, a)| *b <= *a + 1e-12));
                let second = &w[2] - &w[1] * 2.0 + &w[0];
                assert!(second.iter().all(|x| *x >= -1e-8));
            }
        }
    }

    #[test]
    fn scalar_dividend_closed_form() {
        // scalar: P{sup > x} = (1 - p) e^{-c p x} with p = p_star
        let rm = risk_r2();
        let f = factor(&rm, 0.5);
        let p = f.p_star[(0, 0)];
        let r = p;
        let v = rm.v();
        for mu in [0.5, 1.0, 2.0] {
            let want = 1.0 - (1.0 - p) * (-r * v).exp() * mu / (mu + r);
            assert!((dividend_transform(&rm, &f, mu).unwrap()[(0, 0)] - want).abs() < 1e-14);
        }
        let mean = (1.0 - p) * (-r * v).exp() / r;
        assert!((dividend_mean(&rm, &f).unwrap()[(0, 0)] - mean).abs() < 1e-12);
    }

    #[test]
    fn limit_requires_positive_drift() {
        let r1 = risk_r1();
        let opts = LimitOptions::for_model(&r1.model);
        assert!(matches!(eta_limit_inputs(&r1, &opts), Err(Error::Precondition(_))));
    }

    #[test]
    fn limit_atom_matches_finite_rates() {
        for rm in [risk_r2(), risk_m2()] {
            let opts = LimitOptions::for_model(&rm.model);
            let lim = eta_limit_inputs(&rm, &opts).unwrap();
            let atom = eta_limit_atom(&rm, &lim).unwrap();
            let ex = limit_s_to_zero(|s| eta_atom_at(&rm, &factor(&rm, s)), &opts.s_seq).unwrap();
            assert!(linalg::max_abs(&(&atom - &ex.value)) < 1e-4, "{atom} vs {}", ex.value);
            // the long-run law does not depend on the start
            let other = eta_limit_atom(&rm.with_start(0.5 * rm.spec.b).unwrap(), &lim).unwrap();
            assert!(linalg::max_abs(&(&atom - &other)) < 1e-6);
        }
    }

    #[test]
    fn limit_cf_matches_finite_rates() {
        for rm in [risk_r2(), risk_m2()] {
            let opts = LimitOptions::for_model(&rm.model);
            let lim = eta_limit_inputs(&rm, &opts).unwrap();
            for a in [0.5, 1.0] {
                let cf = eta_limit_cf(&rm, &lim, a).unwrap();
                let re = limit_s_to_zero(|s| Ok(linalg::real_part(&phi_eta(&rm, &factor(&rm, s), a)?)), &opts.s_seq).unwrap();
                let im = limit_s_to_zero(
                    |s| Ok(phi_eta(&rm, &factor(&rm, s), a)?.map(|z| z.im)),
                    &opts.s_seq,
                )
                .unwrap();
                assert!(linalg::max_abs(&(linalg::real_part(&cf) - re.value)) < 1e-4);
                assert!(linalg::max_abs(&(cf.map(|z| z.im) - im.value)) < 1e-4);
            }
            // continuity at alpha = 0
            let near = eta_limit_cf(&rm, &lim, 1e-5).unwrap();
            let at0 = eta_limit_cf(&rm, &lim, 0.0).unwrap();
            assert!(linalg::max_abs_c(&(near - at0)) < 1e-4);
        }
    }

    #[test]
    fn scenario_file_roundtrip() {
        let spec = risk_m2().spec;
        let text = spec.to_toml_string();
        assert!(text.contains("B = "));
        assert_eq!(RiskSpec::from_toml_str(&text).unwrap(), spec);
    }

    #[test]
    fn scenario_checks() {
        let mut spec = risk_r1().spec;
        spec.u = 3.0;
        assert!(RiskModel::new(spec.clone()).is_err());
        spec.u = 1.0;
        spec.claims[0] = NegJumpDist::exponential(0.5, 1.0);
        assert!(RiskModel::new(spec).is_err());
    }
}
