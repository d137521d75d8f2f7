//! Model declaration for the pair `Z(t) = {xi(t), x(t)}`: a finite Markov
//! chain `x(t)` modulating a compound-Poisson level process `xi(t)` whose
//! upward jumps are exponential and whose downward jumps (and jumps at chain
//! transitions) live on the nonpositive half-line.
//!
//! Negative jump laws are finite mixtures of exponentials plus atoms, so the
//! cumulant, the kernel transform and every kernel tail have closed forms.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, RealMatrix};

const MASS_TOL: f64 = 1e-9;

/// Density `weight * rate * e^{rate x}` on `x < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpComponent {
    pub weight: f64,
    pub rate: f64,
}

/// Point mass `weight` at `location <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub weight: f64,
    pub location: f64,
}

/// Sub-distribution on `(-inf, 0]`: exponential mixture plus atoms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NegJumpDist {
    #[serde(default)]
    pub exp_components: Vec<ExpComponent>,
    #[serde(default)]
    pub atoms: Vec<JumpAtom>,
}

impl NegJumpDist {
    pub fn exponential(weight: f64, rate: f64) -> Self {
        Self {
            exp_components: vec![ExpComponent { weight, rate }],
            atoms: vec![],
        }
    }

    pub fn atom(weight: f64, location: f64) -> Self {
        Self {
            exp_components: vec![],
            atoms: vec![JumpAtom { weight, location }],
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Same shape with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            exp_components: self
                .exp_components
                .iter()
                .map(|c| ExpComponent {
                    weight: c.weight * factor,
                    rate: c.rate,
                })
                .collect(),
            atoms: self
                .atoms
                .iter()
                .map(|a| JumpAtom {
                    weight: a.weight * factor,
                    location: a.location,
                })
                .collect(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.exp_components.iter().map(|c| c.weight).sum::<f64>()
            + self.atoms.iter().map(|a| a.weight).sum::<f64>()
    }

    /// Mass sitting exactly at zero.
    pub fn mass_at_zero(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.location == 0.0)
            .map(|a| a.weight)
            .sum()
    }

    pub fn has_nonzero_atoms(&self) -> bool {
        self.atoms.iter().any(|a| a.location != 0.0 && a.weight > 0.0)
    }

    /// `int e^{i alpha x} dF(x)`, valid for `Im alpha` above `-min rate`.
    pub fn transform(&self, alpha: Complex64) -> Complex64 {
        let i = Complex64::i();
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.exp_components {
            acc += c.weight * c.rate / (c.rate + i * alpha);
        }
        for a in &self.atoms {
            acc += a.weight * (i * alpha * a.location).exp();
        }
        acc
    }

    /// `int_{-inf}^{b} e^{i alpha x} dF(x)` for `b < 0`.
    pub fn truncated_transform(&self, alpha: f64, b: f64) -> Complex64 {
        let i = Complex64::i();
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.exp_components {
            let z = c.rate + i * alpha;
            acc += c.weight * c.rate * (z * b).exp() / z;
        }
        for a in self.atoms.iter().filter(|a| a.location <= b) {
            acc += a.weight * (i * alpha * a.location).exp();
        }
        acc
    }

    /// `F(z) = int_{-inf}^{z} dF` for `z < 0`.
    pub fn lower_tail(&self, z: f64) -> f64 {
        self.exp_components
            .iter()
            .map(|c| c.weight * (c.rate * z).exp())
            .sum::<f64>()
            + self
                .atoms
                .iter()
                .filter(|a| a.location <= z)
                .map(|a| a.weight)
                .sum::<f64>()
    }

    /// `int |x| dF(x)`.
    pub fn abs_first_moment(&self) -> f64 {
        self.exp_components
            .iter()
            .map(|c| c.weight / c.rate)
            .sum::<f64>()
            + self
                .atoms
                .iter()
                .map(|a| a.weight * a.location.abs())
                .sum::<f64>()
    }

    fn violations(&self, label: &str, out: &mut Vec<String>) {
        for (j, c) in self.exp_components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                out.push(format!("{label} component {} has negative or non-finite weight", j + 1));
            }
            if !(c.rate.is_finite() && c.rate > 0.0) {
                out.push(format!("{label} component {} rate must be positive", j + 1));
            }
        }
        for a in &self.atoms {
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                out.push(format!("{label} atom has negative or non-finite weight"));
            }
            if !a.location.is_finite() || a.location > 0.0 {
                out.push(format!(
                    "{label} atom at {} violates upper semicontinuity (support must be <= 0)",
                    a.location
                ));
            }
        }
    }
}

/// Full parameterization of the process. Indices in reports are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Chain sojourn rates.
    pub nu: Vec<f64>,
    /// Embedded-chain transition matrix.
    pub p: Vec<Vec<f64>>,
    /// Jump rates of `xi` per state.
    pub lambda: Vec<f64>,
    /// Rates of the exponential positive jumps.
    pub c: Vec<f64>,
    /// Probability that a `xi` jump is positive.
    pub pos_jump_prob: Vec<f64>,
    /// Negative part of the jump law (mass `1 - pos_jump_prob`).
    pub neg_jump: Vec<NegJumpDist>,
    /// Jumps at chain transitions, sub-distributions of mass `p[k][r]`.
    /// Absent means no jumps at transitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trans_jump: Option<Vec<Vec<NegJumpDist>>>,
}

impl ModelSpec {
    pub fn m(&self) -> usize {
        self.nu.len()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Loads a `.json` or (default) TOML model file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model serializes")
    }

    /// Parameters of the stationary time reversal: the chain runs backwards
    /// under `pi`, transition jumps travel with the reversed transitions and
    /// the in-state jumps stay as they are.
    pub fn time_reversed(&self, pi: &[f64]) -> Self {
        let m = self.m();
        let flow = |k: usize, r: usize| pi[r] * self.nu[r] / (pi[k] * self.nu[k]);
        let p = (0..m)
            .map(|k| {
                (0..m)
                    .map(|r| {
                        if self.nu[k] > 0.0 {
                            flow(k, r) * self.p[r][k]
                        } else {
                            self.p[k][r]
                        }
                    })
                    .collect()
            })
            .collect();
        let trans = (0..m)
            .map(|k| {
                (0..m)
                    .map(|r| {
                        if self.nu[k] > 0.0 {
                            self.trans(r, k).scaled(flow(k, r))
                        } else {
                            self.trans(k, r)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            nu: self.nu.clone(),
            p,
            lambda: self.lambda.clone(),
            c: self.c.clone(),
            pos_jump_prob: self.pos_jump_prob.clone(),
            neg_jump: self.neg_jump.clone(),
            trans_jump: Some(trans),
        }
    }

    /// Transition-jump law for `(k, r)`; zero jumps when none are declared.
    pub fn trans(&self, k: usize, r: usize) -> NegJumpDist {
        match &self.trans_jump {
            Some(t) => t[k][r].clone(),
            None => {
                if self.p[k][r] > 0.0 {
                    NegJumpDist::atom(self.p[k][r], 0.0)
                } else {
                    NegJumpDist::empty()
                }
            }
        }
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub stationary: Option<Vec<f64>>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every model invariant; the stationary law is returned when the
/// chain part is usable.
pub fn validate(spec: &ModelSpec) -> ValidationReport {
    let mut v = Vec::new();
    let m = spec.m();
    if m == 0 {
        v.push("model has no chain states".to_string());
        return ValidationReport { violations: v, stationary: None };
    }
    let lens = [
        ("p", spec.p.len()),
        ("lambda", spec.lambda.len()),
        ("c", spec.c.len()),
        ("pos_jump_prob", spec.pos_jump_prob.len()),
        ("neg_jump", spec.neg_jump.len()),
    ];
    for (name, len) in lens {
        if len != m {
            v.push(format!("{name} has length {len}, expected {m}"));
        }
    }
    if spec.p.iter().any(|row| row.len() != m) {
        v.push(format!("P must be {m}x{m}"));
    }
    if let Some(t) = &spec.trans_jump {
        if t.len() != m || t.iter().any(|row| row.len() != m) {
            v.push(format!("trans_jump must be {m}x{m}"));
        }
    }
    if !v.is_empty() {
        return ValidationReport { violations: v, stationary: None };
    }

    let mut chain_ok = true;
    for k in 0..m {
        if !(spec.nu[k].is_finite() && spec.nu[k] > 0.0) {
            v.push(format!("nu[{}] must be positive", k + 1));
            chain_ok = false;
        }
        let row = &spec.p[k];
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
            v.push(format!("P row {} has negative entries", k + 1));
            chain_ok = false;
        }
        if (row.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
            v.push(format!("P row {} not stochastic", k + 1));
            chain_ok = false;
        }
        if !(spec.lambda[k].is_finite() && spec.lambda[k] >= 0.0) {
            v.push(format!("lambda[{}] must be nonnegative", k + 1));
        }
        if !(spec.c[k].is_finite() && spec.c[k] > 0.0) {
            v.push(format!("c[{}] must be positive", k + 1));
        }
        let pp = spec.pos_jump_prob[k];
        if !(0.0..=1.0).contains(&pp) {
            v.push(format!("pos_jump_prob[{}] outside [0,1]", k + 1));
        }
        let label = format!("neg_jump[{}]", k + 1);
        spec.neg_jump[k].violations(&label, &mut v);
        if (pp + spec.neg_jump[k].total_mass() - 1.0).abs() > MASS_TOL {
            v.push(format!(
                "state {}: pos_jump_prob + neg_jump mass = {} (must be 1)",
                k + 1,
                pp + spec.neg_jump[k].total_mass()
            ));
        }
        if spec.trans_jump.is_some() {
            for r in 0..m {
                let d = spec.trans(k, r);
                let label = format!("trans_jump[{}][{}]", k + 1, r + 1);
                d.violations(&label, &mut v);
                if (d.total_mass() - spec.p[k][r]).abs() > MASS_TOL {
                    v.push(format!(
                        "{label} mass {} differs from P[{}][{}] = {}",
                        d.total_mass(),
                        k + 1,
                        r + 1,
                        spec.p[k][r]
                    ));
                }
            }
        }
    }
    if !chain_ok {
        return ValidationReport { violations: v, stationary: None };
    }

    if !irreducible(&spec.p) {
        v.push("chain is not irreducible".to_string());
        return ValidationReport { violations: v, stationary: None };
    }
    // A continuous-time chain is aperiodic once irreducible; the primitivity
    // test is applied to I + Q / (2 max(nu)), a transition matrix of the same chain.
    let q = generator(spec);
    let numax = spec.nu.iter().cloned().fold(0.0, f64::max);
    let uniformized = linalg::identity(m) + &q / (2.0 * numax);
    if !primitive(&uniformized) {
        v.push("chain is periodic".to_string());
    }
    let stationary = stationary_distribution(&q);
    if stationary.is_none() {
        v.push("stationary distribution is not unique".to_string());
    }
    ValidationReport { violations: v, stationary }
}

fn irreducible(p: &[Vec<f64>]) -> bool {
    let m = p.len();
    (0..m).all(|start| {
        let mut seen = vec![false; m];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            for r in 0..m {
                if p[k][r] > 0.0 && !seen[r] {
                    seen[r] = true;
                    stack.push(r);
                }
            }
        }
        seen.iter().all(|s| *s)
    })
}

fn primitive(a: &RealMatrix) -> bool {
    let m = a.nrows();
    let pattern = a.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    // Wielandt bound on the primitivity exponent.
    let bound = (m - 1) * (m - 1) + 1;
    let mut power = pattern.clone();
    for _ in 1..bound {
        power = (&power * &pattern).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    }
    power.iter().all(|v| *v > 0.0)
}

fn generator(spec: &ModelSpec) -> RealMatrix {
    let m = spec.m();
    RealMatrix::from_fn(m, m, |k, r| {
        spec.nu[k] * (spec.p[k][r] - if k == r { 1.0 } else { 0.0 })
    })
}

fn stationary_distribution(q: &RealMatrix) -> Option<Vec<f64>> {
    let m = q.nrows();
    // pi Q = 0, sum pi = 1  <=>  Q^T pi^T = 0 with one equation replaced.
    let mut a = q.transpose();
    for r in 0..m {
        a[(m - 1, r)] = 1.0;
    }
    let mut b = RealMatrix::zeros(m, 1);
    b[(m - 1, 0)] = 1.0;
    let x = linalg::solve_real(&a, &b).ok()?;
    Some(x.column(0).iter().cloned().collect())
}

/// Where a piece of the kernel `dK_0` sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermShape {
    /// Density `rate e^{rate z}` on `z < 0`.
    Exp(f64),
    /// Point mass at `z <= 0`.
    Atom(f64),
}

/// One scalar piece of `dK_0` at matrix entry `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTerm {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
    pub shape: TermShape,
}

/// View of `dK_0(z) = N dF(z) + Lambda dF_0(z)` restricted to `z <= 0`.
#[derive(Debug, Clone)]
pub struct KernelK0 {
    pub m: usize,
    pub terms: Vec<KernelTerm>,
}

impl KernelK0 {
    fn from_spec(spec: &ModelSpec) -> Self {
        let m = spec.m();
        let mut terms = Vec::new();
        let mut push = |row: usize, col: usize, scale: f64, d: &NegJumpDist| {
            for c in &d.exp_components {
                if c.weight > 0.0 {
                    terms.push(KernelTerm {
                        row,
                        col,
                        weight: scale * c.weight,
                        shape: TermShape::Exp(c.rate),
                    });
                }
            }
            for a in &d.atoms {
                if a.weight > 0.0 {
                    terms.push(KernelTerm {
                        row,
                        col,
                        weight: scale * a.weight,
                        shape: TermShape::Atom(a.location),
                    });
                }
            }
        };
        for k in 0..m {
            for r in 0..m {
                push(k, r, spec.nu[k], &spec.trans(k, r));
            }
            push(k, k, spec.lambda[k], &spec.neg_jump[k]);
        }
        Self { m, terms }
    }

    /// `int e^{i alpha z} dK_0(z)` at complex frequency.
    pub fn transform(&self, alpha: Complex64) -> ComplexMatrix {
        let i = Complex64::i();
        let mut out = ComplexMatrix::zeros(self.m, self.m);
        for t in &self.terms {
            out[(t.row, t.col)] += t.weight
                * match t.shape {
                    TermShape::Exp(mu) => mu / (mu + i * alpha),
                    TermShape::Atom(d) => (i * alpha * d).exp(),
                };
        }
        out
    }

    pub fn total_mass(&self) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.m, self.m);
        for t in &self.terms {
            out[(t.row, t.col)] += t.weight;
        }
        out
    }

    /// `K_0(z) = int_{-inf}^{z} dK_0` for `z < 0`.
    pub fn lower_tail(&self, z: f64) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.m, self.m);
        for t in &self.terms {
            out[(t.row, t.col)] += t.weight
                * match t.shape {
                    TermShape::Exp(mu) => (mu * z).exp(),
                    TermShape::Atom(d) => {
                        if d <= z {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
        }
        out
    }

    /// `int_{-inf}^{b} e^{i alpha z} dK_0(z)` for `b < 0`.
    pub fn truncated_transform(&self, alpha: f64, b: f64) -> ComplexMatrix {
        let i = Complex64::i();
        let mut out = ComplexMatrix::zeros(self.m, self.m);
        for t in &self.terms {
            out[(t.row, t.col)] += t.weight
                * match t.shape {
                    TermShape::Exp(mu) => {
                        let z = mu + i * alpha;
                        mu * (z * b).exp() / z
                    }
                    TermShape::Atom(d) => {
                        if d <= b {
                            (i * alpha * d).exp()
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    }
                };
        }
        out
    }

    /// `int dK_0(z) X e^{R z}` over `z <= 0`; needs `mu I + R` invertible
    /// for every exponential rate `mu` in the kernel.
    pub fn right_integral(&self, x: &RealMatrix, r: &RealMatrix) -> Result<RealMatrix> {
        let m = self.m;
        let mut out = RealMatrix::zeros(m, m);
        let mut cache: Vec<(TermShape, RealMatrix)> = Vec::new();
        for t in &self.terms {
            let factor = match cache.iter().find(|(s, _)| *s == t.shape) {
                Some((_, f)) => f.clone(),
                None => {
                    let f = match t.shape {
                        TermShape::Exp(mu) => {
                            let a = linalg::identity(m) * mu + r;
                            linalg::inverse_real(&a)? * mu
                        }
                        TermShape::Atom(d) => linalg::mat_exp(&(r * d))?,
                    };
                    cache.push((t.shape, f.clone()));
                    f
                }
            };
            let row = x.row(t.col) * &factor * t.weight;
            let mut dst = out.row_mut(t.row);
            dst += row;
        }
        Ok(out)
    }

    pub fn has_nonzero_atoms(&self) -> bool {
        self.terms
            .iter()
            .any(|t| matches!(t.shape, TermShape::Atom(d) if d != 0.0))
    }
}

/// A validated model with its matrices precomputed.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub m: usize,
    pub q: RealMatrix,
    pub nu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub c: Vec<f64>,
    /// `lambda_k * pos_jump_prob_k`, the diagonal of `Lambda Fbar_0(0)`.
    pub up_rate: Vec<f64>,
    pub pi: Vec<f64>,
    pub kernel: KernelK0,
    /// `||P{chi_kr = 0, x(zeta_1) = r}||`.
    pub null_jumps: RealMatrix,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let report = validate(&spec);
        if !report.is_valid() {
            return Err(Error::InvalidModel(report.violations.join("; ")));
        }
        let m = spec.m();
        let q = generator(&spec);
        let up_rate = (0..m)
            .map(|k| spec.lambda[k] * spec.pos_jump_prob[k])
            .collect();
        let null_jumps = RealMatrix::from_fn(m, m, |k, r| spec.trans(k, r).mass_at_zero());
        Ok(Self {
            m,
            q,
            nu: spec.nu.clone(),
            lambda: spec.lambda.clone(),
            c: spec.c.clone(),
            up_rate,
            pi: report.stationary.expect("valid model has pi"),
            kernel: KernelK0::from_spec(&spec),
            null_jumps,
            spec,
        })
    }

    pub fn c_matrix(&self) -> RealMatrix {
        linalg::diag(&self.c)
    }

    pub fn lambda_matrix(&self) -> RealMatrix {
        linalg::diag(&self.lambda)
    }

    pub fn n_matrix(&self) -> RealMatrix {
        linalg::diag(&self.nu)
    }

    /// `Lambda Fbar_0(0)`.
    pub fn up_matrix(&self) -> RealMatrix {
        linalg::diag(&self.up_rate)
    }

    /// Cumulant at a real frequency.
    pub fn cumulant(&self, alpha: f64) -> ComplexMatrix {
        self.cumulant_complex(Complex64::new(alpha, 0.0))
    }

    /// Cumulant continued to complex frequencies inside its strip of analyticity.
    pub fn cumulant_complex(&self, alpha: Complex64) -> ComplexMatrix {
        let i = Complex64::i();
        let mut psi = linalg::to_complex(&self.q);
        for k in 0..self.m {
            let ck = self.c[k];
            psi[(k, k)] += self.up_rate[k] * (ck / (ck - i * alpha) - 1.0);
        }
        for t in &self.kernel.terms {
            let phi = match t.shape {
                TermShape::Exp(mu) => mu / (mu + i * alpha),
                TermShape::Atom(d) => (i * alpha * d).exp(),
            };
            psi[(t.row, t.col)] += t.weight * (phi - 1.0);
        }
        psi
    }

    /// `Phi(s, alpha) = s (sI - Psi(alpha))^{-1}`.
    pub fn char_function(&self, s: f64, alpha: f64) -> Result<ComplexMatrix> {
        check_rate(s)?;
        let a = ComplexMatrix::identity(self.m, self.m) * Complex64::new(s, 0.0)
            - self.cumulant(alpha);
        Ok(linalg::inverse(&a)? * Complex64::new(s, 0.0))
    }

    /// `P_s = s (sI - Q)^{-1}`.
    pub fn resolvent_ps(&self, s: f64) -> Result<RealMatrix> {
        check_rate(s)?;
        let a = linalg::identity(self.m) * s - &self.q;
        Ok(linalg::inverse_real(&a)? * s)
    }

    /// Transform of `dK_0` over its support `(-inf, 0]`.
    pub fn k0_transform(&self, alpha: f64) -> ComplexMatrix {
        self.kernel.transform(Complex64::new(alpha, 0.0))
    }

    /// Jump-kernel tails: `Kbar_0(z)` for `z > 0` (only the exponential
    /// upward jumps live there) and `K_0(z)` for `z < 0`.
    pub fn k0_tails(&self, z: f64) -> Result<RealMatrix> {
        if z == 0.0 || !z.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel tail needs a finite nonzero level, got {z}"
            )));
        }
        if z > 0.0 {
            Ok(linalg::diag(
                &(0..self.m)
                    .map(|k| self.up_rate[k] * (-self.c[k] * z).exp())
                    .collect::<Vec<_>>(),
            ))
        } else {
            Ok(self.kernel.lower_tail(z))
        }
    }

    /// `s (sI + Lambda + N - N A_0)^{-1}`: probability of no effective jump
    /// before the killing time.
    pub fn no_jump_resolvent(&self, s: f64) -> Result<RealMatrix> {
        let a = linalg::identity(self.m) * s + self.lambda_matrix() + self.n_matrix()
            - self.n_matrix() * &self.null_jumps;
        Ok(linalg::inverse_real(&a)? * s)
    }

    /// The stationary time reversal; its cumulant is
    /// `D^{-1} Psi(alpha)^T D` with `D = diag(pi)`.
    pub fn time_reversed(&self) -> Result<Self> {
        Self::new(self.spec.time_reversed(&self.pi))
    }

    /// `D^{-1} X^T D`, which carries matrix transforms between the model and
    /// its time reversal (an involution).
    pub fn reversal_conjugate(&self, x: &RealMatrix) -> RealMatrix {
        RealMatrix::from_fn(self.m, self.m, |k, r| x[(r, k)] * self.pi[r] / self.pi[k])
    }

    /// Perron root `kappa(r)` of the moment cumulant `Psi(-i r)`, the growth
    /// rate of `E e^{r xi(t)}`; `None` where some jump law lacks that moment.
    pub fn moment_exponent(&self, r: f64) -> Option<f64> {
        let (lo, hi) = self.moment_range();
        if !(r > lo && r < hi) {
            return None;
        }
        let psi = linalg::real_part(&self.cumulant_complex(Complex64::new(0.0, -r)));
        // off-diagonal entries are nonnegative, so the Perron root is the
        // eigenvalue with the largest real part
        Some(
            psi.complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max),
        )
    }

    /// Open interval of exponents with finite moments.
    fn moment_range(&self) -> (f64, f64) {
        let hi = (0..self.m)
            .filter(|&k| self.up_rate[k] > 0.0)
            .map(|k| self.c[k])
            .fold(f64::INFINITY, f64::min);
        let lo = self
            .kernel
            .terms
            .iter()
            .filter_map(|t| match t.shape {
                TermShape::Exp(mu) => Some(-mu),
                TermShape::Atom(_) => None,
            })
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Distance from `s = 0` to the nearest singularity of the killed-time
    /// factors in `s`: the depth `-min kappa` of the moment cumulant or the
    /// spectral gap of the chain, whichever is smaller. Functions of `s` are
    /// smooth only well inside this radius.
    pub fn analytic_radius(&self) -> f64 {
        let (lo, hi) = self.moment_range();
        let (mut a, mut b) = (lo.max(-1e3), hi.min(1e3));
        let margin = 1e-9 * (b - a);
        a += margin;
        b -= margin;
        let f = |r: f64| self.moment_exponent(r).unwrap_or(f64::INFINITY);
        // kappa is convex: golden-section search
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..200 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2);
            }
            if b - a < 1e-10 {
                break;
            }
        }
        let depth = -f1.min(f2).min(0.0);
        let gap = self
            .q
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .filter(|v| *v > 1e-12)
            .fold(f64::INFINITY, f64::min);
        depth.min(gap)
    }

    /// `Lambda + N - N A_0`, the total rate of jumps that move `xi`.
    pub fn effective_jump_rate(&self) -> RealMatrix {
        self.lambda_matrix() + self.n_matrix() - self.n_matrix() * &self.null_jumps
    }

    /// True when some negative jump law has an atom away from zero.
    pub fn has_discrete_negative_jumps(&self) -> bool {
        self.kernel.has_nonzero_atoms()
    }

    /// Stationary mean drift `sum_k pi_k (E xi increments per unit time)`.
    pub fn mean_drift(&self) -> f64 {
        (0..self.m)
            .map(|k| {
                let mut d = self.up_rate[k] / self.c[k]
                    - self.lambda[k] * self.spec.neg_jump[k].abs_first_moment();
                for r in 0..self.m {
                    d -= self.nu[k] * self.spec.trans(k, r).abs_first_moment();
                }
                self.pi[k] * d
            })
            .sum()
    }
}

fn check_rate(s: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidArgument(format!("rate s must be positive, got {s}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{model_m2, model_s1, model_s2};

    #[test]
    fn scalar_model_is_valid() {
        let r = validate(&model_s1().spec);
        assert!(r.is_valid(), "{:?}", r.violations);
        assert_eq!(r.stationary.unwrap(), vec![1.0]);
    }

    #[test]
    fn non_stochastic_row_reported() {
        let mut spec = model_m2().spec;
        spec.p[0] = vec![0.0, 0.9];
        spec.trans_jump = None;
        let r = validate(&spec);
        assert!(r.violations.iter().any(|v| v.contains("P row 1 not stochastic")), "{:?}", r.violations);
    }

    #[test]
    fn positive_atom_violates_semicontinuity() {
        let mut spec = model_s2().spec;
        spec.neg_jump[0].atoms.push(JumpAtom { weight: 0.0, location: 0.5 });
        let r = validate(&spec);
        assert!(r.violations.iter().any(|v| v.contains("semicontinuity")));
    }

    #[test]
    fn mass_mismatch_reported() {
        let mut spec = model_s2().spec;
        spec.pos_jump_prob[0] = 0.7;
        assert!(!validate(&spec).is_valid());
        let mut spec = model_m2().spec;
        spec.trans_jump.as_mut().unwrap()[0][1] = NegJumpDist::atom(0.5, 0.0);
        let r = validate(&spec);
        assert!(r.violations.iter().any(|v| v.contains("trans_jump[1][2]")));
    }

    #[test]
    fn reducible_chain_rejected() {
        let mut spec = model_m2().spec;
        spec.p = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        spec.trans_jump = None;
        assert!(validate(&spec).violations.iter().any(|v| v.contains("irreducible")));
    }

    #[test]
    fn stationary_law_solves_balance() {
        let model = model_m2();
        let pi = RealMatrix::from_row_slice(1, 2, &model.pi);
        assert!(linalg::max_abs(&(pi * &model.q)) < 1e-14);
        assert!((model.pi.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cumulant_at_zero_is_generator() {
        for model in [model_s1(), model_s2(), model_m2()] {
            let psi = model.cumulant(0.0);
            assert!(linalg::max_abs_c(&(psi - linalg::to_complex(&model.q))) <= 1e-12);
        }
    }

    #[test]
    fn scalar_cumulant_closed_form() {
        let model = model_s1();
        for alpha in [-3.0, -0.5, 0.7, 4.0] {
            let i = Complex64::i();
            let expected = 2.0 * i * alpha / (1.0 - i * alpha);
            assert!((model.cumulant(alpha)[(0, 0)] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn no_jumps_means_cumulant_is_q() {
        let mut spec = model_m2().spec;
        spec.lambda = vec![0.0, 0.0];
        spec.trans_jump = None;
        let model = Model::new(spec).unwrap();
        for alpha in [-2.0, 1.0, 9.0] {
            assert!(linalg::max_abs_c(&(model.cumulant(alpha) - linalg::to_complex(&model.q))) < 1e-15);
            let phi = model.char_function(1.3, alpha).unwrap();
            let ps = model.resolvent_ps(1.3).unwrap();
            assert!(linalg::max_abs_c(&(phi - linalg::to_complex(&ps))) < 1e-14);
        }
    }

    #[test]
    fn cumulant_conjugate_symmetry() {
        let model = model_m2();
        for alpha in [0.3, 1.0, 7.5] {
            let a = model.cumulant(alpha);
            let b = model.cumulant(-alpha);
            assert!(linalg::max_abs_c(&(a.map(|z| z.conj()) - b)) < 1e-14);
        }
    }

    #[test]
    fn scalar_char_function_closed_form() {
        let model = model_s1();
        let i = Complex64::i();
        for (s, alpha) in [(1.0, 0.5), (0.3, -2.0), (4.0, 3.0)] {
            let expected = s * (1.0 - i * alpha) / (s - i * alpha * (s + 2.0));
            assert!((model.char_function(s, alpha).unwrap()[(0, 0)] - expected).norm() < 1e-13);
        }
        let ps = model.resolvent_ps(0.7).unwrap();
        let phi0 = model.char_function(0.7, 0.0).unwrap();
        assert!(linalg::max_abs_c(&(phi0 - linalg::to_complex(&ps))) < 1e-15);
    }

    #[test]
    fn resolvent_limits() {
        let model = model_m2();
        let ps = model.resolvent_ps(1e8).unwrap();
        assert!(linalg::max_abs(&(ps - linalg::identity(2))) < 1e-7);
        let ps = model_s1().resolvent_ps(2.0).unwrap();
        assert!((ps[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn resolvent_matches_quadrature() {
        // m=2, nu=(1,2), P swaps states, s=1; oracle: s int e^{-st} e^{tQ} dt
        // by composite Simpson on [0, 40].
        let spec = ModelSpec {
            nu: vec![1.0, 2.0],
            p: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            lambda: vec![0.0, 0.0],
            c: vec![1.0, 1.0],
            pos_jump_prob: vec![1.0, 1.0],
            neg_jump: vec![NegJumpDist::empty(), NegJumpDist::empty()],
            trans_jump: None,
        };
        let model = Model::new(spec).unwrap();
        let s = 1.0;
        let n = 40000;
        let h = 40.0 / n as f64;
        let mut acc = RealMatrix::zeros(2, 2);
        for j in 0..=n {
            let t = j as f64 * h;
            let w = if j == 0 || j == n { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            acc += linalg::mat_exp(&(&model.q * t)).unwrap() * ((-s * t).exp() * w * h / 3.0);
        }
        let ps = model.resolvent_ps(s).unwrap();
        assert!(linalg::max_abs(&(ps - acc * s)) < 1e-10);
    }

    #[test]
    fn kernel_transform_and_tails() {
        let model = model_s2();
        // negative jumps 1.5 Exp(1) plus the null transition jump of rate nu = 1
        let k0 = model.k0_transform(0.0);
        assert!((k0[(0, 0)].re - 2.5).abs() < 1e-15);
        let i = Complex64::i();
        for alpha in [0.5, -2.0] {
            let expected = 1.5 / (1.0 + i * alpha) + 1.0;
            assert!((model.k0_transform(alpha)[(0, 0)] - expected).norm() < 1e-15);
        }
        let tail = model.k0_tails(-1.0).unwrap();
        assert!((tail[(0, 0)] - 1.5 * (-1f64).exp()).abs() < 1e-15);
        assert!(model.k0_tails(-1e9).unwrap()[(0, 0)].abs() < 1e-300);
        assert!(model.k0_tails(0.0).is_err());
        // upward jumps: lambda * P{positive} * e^{-c z}
        let up = model.k0_tails(1.0).unwrap();
        assert!((up[(0, 0)] - 1.5 * (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_without_negative_jumps_is_null_only() {
        let mut spec = model_m2().spec;
        spec.pos_jump_prob = vec![1.0, 1.0];
        spec.neg_jump = vec![NegJumpDist::empty(), NegJumpDist::empty()];
        spec.trans_jump = None;
        let model = Model::new(spec).unwrap();
        // only the zero-size transition jumps remain, which carry no level change
        let k0 = model.k0_transform(3.0);
        let expected = linalg::to_complex(&(model.n_matrix() * &model.null_jumps));
        assert!(linalg::max_abs_c(&(k0 - expected)) < 1e-15);
        assert!(linalg::max_abs(&model.k0_tails(-0.1).unwrap()) == 0.0);
    }

    #[test]
    fn kernel_total_mass_matches_rates() {
        let model = model_m2();
        let total = model.kernel.total_mass();
        let mut expected = model.n_matrix() * RealMatrix::from_fn(2, 2, |k, r| model.spec.p[k][r]);
        for k in 0..2 {
            expected[(k, k)] += model.lambda[k] * (1.0 - model.spec.pos_jump_prob[k]);
        }
        assert!(linalg::max_abs(&(total - expected)) < 1e-12);
    }

    #[test]
    fn lower_tail_monotone_and_bounded() {
        let model = model_m2();
        let total = model.kernel.total_mass();
        let mut prev = model.k0_tails(-30.0).unwrap();
        for j in 1..300 {
            let z = -30.0 + 0.1 * j as f64;
            let cur = model.k0_tails(z).unwrap();
            assert!(cur.iter().zip(prev.iter()).all(|(a, b)| *a >= *b - 1e-15));
            assert!(cur.iter().zip(total.iter()).all(|(a, b)| *a <= *b + 1e-12));
            prev = cur;
        }
    }

    #[test]
    fn model_file_roundtrip() {
        let spec = model_m2().spec;
        let text = spec.to_toml_string();
        assert_eq!(ModelSpec::from_toml_str(&text).unwrap(), spec);
    }

    #[test]
    fn time_reversal_transposes_the_cumulant() {
        for model in [model_m2(), crate::presets::model_d2()] {
            let rev = model.time_reversed().unwrap();
            assert!(rev.pi.iter().zip(model.pi.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
            for a in [-3.0, 0.0, 1.5] {
                let fwd = model.cumulant(a);
                let back = rev.cumulant(a);
                for k in 0..model.m {
                    for r in 0..model.m {
                        let want = fwd[(r, k)] * model.pi[r] / model.pi[k];
                        assert!((back[(k, r)] - want).norm() < 1e-12);
                    }
                }
            }
            let twice = rev.time_reversed().unwrap();
            assert!(linalg::max_abs(&(&twice.q - &model.q)) < 1e-12);
        }
    }

    #[test]
    fn moment_exponent_of_scalar_model() {
        // S1: kappa(r) = 2 (1 / (1 - r) - 1), smallest as r -> -inf
        let model = model_s1();
        for r in [-3.0, -0.5, 0.5] {
            let k = model.moment_exponent(r).unwrap();
            assert!((k - 2.0 * (1.0 / (1.0 - r) - 1.0)).abs() < 1e-12);
        }
        assert!(model.moment_exponent(1.0).is_none());
        assert!(model.moment_exponent(0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn analytic_radius_is_positive_off_zero_drift() {
        let model = crate::presets::model_d2();
        let r = model.analytic_radius();
        assert!(r > 0.0 && r < 0.1, "{r}");
    }
}
