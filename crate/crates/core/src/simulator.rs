//! Event-driven Monte Carlo of the process, its exit functionals on an
//! interval, its state at an independent exponential time and the capped
//! reserve built from it.
//!
//! Randomness: every replication owns a ChaCha8 stream. The key is the run
//! seed; the stream id is `(start_state << 40) | replication`, so a run is
//! reproducible bit for bit whatever the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::model::{Model, NegJumpDist};

/// Events allowed per path before giving up.
pub const DEFAULT_EVENT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    ChainSwitch,
    PosJump,
    NegJump,
    Claim,
    BarrierHit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub time: f64,
    pub kind: EventKind,
    /// chain state after the event
    pub state: usize,
    /// process value after the event
    pub xi_value: f64,
}

/// When a path stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    FixedTime(f64),
    /// at an independent `Exp(s)` time
    ExpKill(f64),
    /// first exit from `(x - T, x)`, or the killing time if one is given
    ExitInterval { x: f64, t: f64, kill: Option<f64> },
    /// capped reserve started at `u <= B`, run to an `Exp(s)` time
    RiskBarrier { b: f64, u: f64, s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitSide {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub start_state: usize,
    pub final_state: usize,
    pub stop_time: f64,
    /// process value at the stop time
    pub xi: f64,
    /// running supremum at the stop time
    pub sup: f64,
    pub exit: Option<ExitSide>,
    /// distance past the barrier crossed, zero without exit
    pub overshoot: f64,
    pub events: u64,
}

impl PathSummary {
    /// Dividends paid up to the stop time for cap `b` and start `u`.
    pub fn dividends(&self, b: f64, u: f64) -> f64 {
        (self.sup - (b - u)).max(0.0)
    }

    /// Capped reserve at the stop time.
    pub fn reserve(&self, b: f64, u: f64) -> f64 {
        (u + self.xi - self.dividends(b, u)).min(b)
    }

    /// The reserve sits at the cap: the supremum passed `B - u` and the
    /// process has not moved down since.
    pub fn at_cap(&self, b: f64, u: f64) -> bool {
        self.sup >= b - u && self.xi == self.sup
    }
}

fn check_rule(stop: &StopRule) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidArgument(msg));
    match *stop {
        StopRule::FixedTime(t) if !(t >= 0.0 && t.is_finite()) => bad(format!("time {t} must be finite and nonnegative")),
        StopRule::ExpKill(s) if !(s > 0.0 && s.is_finite()) => bad(format!("rate s = {s} must be positive")),
        StopRule::ExitInterval { x, t, kill } => {
            if !(t > 0.0 && x > 0.0 && x < t) {
                return bad(format!("need 0 < x < T, got x = {x}, T = {t}"));
            }
            match kill {
                Some(s) if !(s > 0.0 && s.is_finite()) => bad(format!("rate s = {s} must be positive")),
                _ => Ok(()),
            }
        }
        StopRule::RiskBarrier { b, u, s } => {
            if !(b > 0.0 && u > 0.0 && u <= b) {
                return bad(format!("need 0 < u <= B, got u = {u}, B = {b}"));
            }
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("rate s = {s} must be positive"));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Draws from a nonnegative-weight law on `(-inf, 0]` normalized to mass 1.
fn sample_neg(dist: &NegJumpDist, rng: &mut ChaCha8Rng) -> f64 {
    let total = dist.total_mass();
    let mut pick = rng.random::<f64>() * total;
    for c in &dist.exp_components {
        if pick < c.weight {
            return -rng.sample(Exp::new(c.rate).expect("validated rate"));
        }
        pick -= c.weight;
    }
    for a in &dist.atoms {
        if pick < a.weight {
            return a.location;
        }
        pick -= a.weight;
    }
    // rounding at the top end of the last weight
    dist.atoms
        .last()
        .map(|a| a.location)
        .or_else(|| {
            dist.exp_components
                .last()
                .map(|c| -rng.sample(Exp::new(c.rate).expect("validated rate")))
        })
        .unwrap_or(0.0)
}

fn pick_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    for (j, w) in weights.iter().enumerate() {
        if pick < *w {
            return j;
        }
        pick -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// The random stream of one replication.
pub fn replication_rng(seed: u64, start_state: usize, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((start_state as u64) << 40) | replication);
    rng
}

/// Runs one path from `(0, start_state)` until the stop rule fires.
pub fn simulate_until(
    model: &Model,
    start_state: usize,
    rng: &mut ChaCha8Rng,
    stop: &StopRule,
    budget: u64,
    mut trace: Option<&mut Vec<PathEvent>>,
) -> Result<PathSummary> {
    check_rule(stop)?;
    let spec = &model.spec;
    let horizon = match *stop {
        StopRule::FixedTime(t) => t,
        StopRule::ExpKill(s) | StopRule::RiskBarrier { s, .. } => rng.sample(Exp::new(s).expect("checked rate")),
        StopRule::ExitInterval { kill: Some(s), .. } => rng.sample(Exp::new(s).expect("checked rate")),
        StopRule::ExitInterval { kill: None, .. } => f64::INFINITY,
    };
    let interval = match *stop {
        StopRule::ExitInterval { x, t, .. } => Some((x - t, x)),
        _ => None,
    };
    let cap_gap = match *stop {
        StopRule::RiskBarrier { b, u, .. } => Some(b - u),
        _ => None,
    };
    let mut state = start_state;
    let (mut time, mut xi, mut sup) = (0.0f64, 0.0f64, 0.0f64);
    let mut events = 0u64;
    let summary = |state, time, xi, sup, exit, overshoot, events| PathSummary {
        start_state,
        final_state: state,
        stop_time: time,
        xi,
        sup,
        exit,
        overshoot,
        events,
    };
    loop {
        let rate = model.nu[state] + model.lambda[state];
        let dt = if rate > 0.0 {
            rng.sample(Exp::new(rate).expect("positive rate"))
        } else {
            f64::INFINITY
        };
        if time + dt >= horizon {
            return Ok(summary(state, horizon, xi, sup, None, 0.0, events));
        }
        if dt.is_infinite() || events >= budget {
            return Err(Error::EventBudget(budget));
        }
        time += dt;
        events += 1;
        let kind;
        if rng.random::<f64>() * rate < model.nu[state] {
            let next = pick_index(&spec.p[state], rng);
            let law = spec.trans(state, next);
            xi += if law.total_mass() > 0.0 { sample_neg(&law, rng) } else { 0.0 };
            state = next;
            kind = EventKind::ChainSwitch;
        } else if rng.random::<f64>() < spec.pos_jump_prob[state] {
            xi += rng.sample(Exp::new(model.c[state]).expect("validated rate"));
            kind = match cap_gap {
                Some(gap) if xi > gap && xi > sup => EventKind::BarrierHit,
                _ => EventKind::PosJump,
            };
        } else {
            xi += sample_neg(&spec.neg_jump[state], rng);
            kind = if cap_gap.is_some() { EventKind::Claim } else { EventKind::NegJump };
        }
        sup = sup.max(xi);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(PathEvent {
                time,
                kind,
                state,
                xi_value: xi,
            });
        }
        if let Some((lo, hi)) = interval {
            if xi >= hi {
                return Ok(summary(state, time, xi, sup, Some(ExitSide::Upper), xi - hi, events));
            }
            if xi <= lo {
                return Ok(summary(state, time, xi, sup, Some(ExitSide::Lower), lo - xi, events));
            }
        }
    }
}

/// Mean and standard error per entry; row `k` starts in state `k`, column
/// `r` is the state at the stop time.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub value: RealMatrix,
    pub std_err: RealMatrix,
    /// replications per starting state
    pub n: usize,
    pub seed: u64,
}

/// Parameters of the named estimands; unused ones are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimandParams {
    pub s: f64,
    pub x: f64,
    pub t: f64,
    /// level for cdfs and tails
    pub z: f64,
    pub alpha: f64,
    pub mu: f64,
    pub b: f64,
    pub u: f64,
}

impl Default for EstimandParams {
    fn default() -> Self {
        Self {
            s: 1.0,
            x: 1.0,
            t: 2.0,
            z: 0.0,
            alpha: 1.0,
            mu: 1.0,
            b: 2.0,
            u: 1.0,
        }
    }
}

/// Names accepted by [`estimate`], with what each one averages.
pub const ESTIMANDS: &[(&str, &str)] = &[
    ("ps", "P{x(theta_s) = r}"),
    ("BT", "E[e^{-s tau}; upper exit]"),
    ("BTlow", "E[e^{-s tau}; lower exit]"),
    ("B", "E[e^{-s tau}]"),
    ("nonexit", "P{tau > theta_s}"),
    ("upExitProb", "P{upper exit}"),
    ("upperTail", "s E[e^{-s tau}; upper exit, xi(tau) > z]"),
    ("lowerTail", "s E[e^{-s tau}; lower exit, xi(tau) < z]"),
    ("killedCdf", "P{xi(theta_s) < z, tau > theta_s}"),
    ("pplus", "P{sup(theta_s) = 0}"),
    ("supTail", "P{sup(theta_s) > z}"),
    ("minusCdf", "P{xi(theta_s) - sup(theta_s) < z}"),
    ("etaCfRe", "E cos(alpha eta(theta_s))"),
    ("etaCfIm", "E sin(alpha eta(theta_s))"),
    ("etaAtBarrier", "P{eta(theta_s) = B}"),
    ("dividendLaplace", "E e^{-mu Y(theta_s)}"),
    ("dividendMean", "E Y(theta_s)"),
];

fn available() -> String {
    ESTIMANDS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
}

type Functional = Box<dyn Fn(&PathSummary) -> f64 + Sync>;

fn functional(name: &str, p: &EstimandParams) -> Result<(StopRule, Functional)> {
    let p = *p;
    let exit = StopRule::ExitInterval { x: p.x, t: p.t, kill: None };
    let killed_exit = StopRule::ExitInterval { x: p.x, t: p.t, kill: Some(p.s) };
    let kill = StopRule::ExpKill(p.s);
    let risk = StopRule::RiskBarrier { b: p.b, u: p.u, s: p.s };
    let disc = move |w: &PathSummary| (-p.s * w.stop_time).exp();
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    let out: (StopRule, Functional) = match name {
        "ps" => (kill, Box::new(|_| 1.0)),
        "BT" => (exit, Box::new(move |w| ind(w.exit == Some(ExitSide::Upper)) * disc(w))),
        "BTlow" => (exit, Box::new(move |w| ind(w.exit == Some(ExitSide::Lower)) * disc(w))),
        "B" => (exit, Box::new(move |w| disc(w))),
        "nonexit" => (killed_exit, Box::new(move |w| ind(w.exit.is_none()))),
        "upExitProb" => (exit, Box::new(move |w| ind(w.exit == Some(ExitSide::Upper)))),
        "upperTail" => (
            exit,
            Box::new(move |w| p.s * disc(w) * ind(w.exit == Some(ExitSide::Upper) && w.xi > p.z)),
        ),
        "lowerTail" => (
            exit,
            Box::new(move |w| p.s * disc(w) * ind(w.exit == Some(ExitSide::Lower) && w.xi < p.z)),
        ),
        "killedCdf" => (killed_exit, Box::new(move |w| ind(w.exit.is_none() && w.xi < p.z))),
        "pplus" => (kill, Box::new(move |w| ind(w.sup == 0.0))),
        "supTail" => (kill, Box::new(move |w| ind(w.sup > p.z))),
        "minusCdf" => (kill, Box::new(move |w| ind(w.xi - w.sup < p.z))),
        "etaCfRe" => (risk, Box::new(move |w| (p.alpha * w.reserve(p.b, p.u)).cos())),
        "etaCfIm" => (risk, Box::new(move |w| (p.alpha * w.reserve(p.b, p.u)).sin())),
        "etaAtBarrier" => (risk, Box::new(move |w| ind(w.at_cap(p.b, p.u)))),
        "dividendLaplace" => (risk, Box::new(move |w| (-p.mu * w.dividends(p.b, p.u)).exp())),
        "dividendMean" => (risk, Box::new(move |w| w.dividends(p.b, p.u))),
        _ => {
            return Err(Error::UnknownEstimand {
                name: name.to_string(),
                available: available(),
            })
        }
    };
    Ok(out)
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.total + v;
        if self.total.abs() >= v.abs() {
            self.carry += (self.total - t) + v;
        } else {
            self.carry += (v - t) + self.total;
        }
        self.total = t;
    }

    fn value(&self) -> f64 {
        self.total + self.carry
    }
}

/// Worker count: `MMEXIT_THREADS` if set to a positive integer, otherwise
/// the rayon default.
pub fn thread_count() -> usize {
    std::env::var("MMEXIT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Path summaries for `n` replications from `start_state`, in replication order.
pub fn sample_paths(model: &Model, start_state: usize, stop: &StopRule, n: usize, seed: u64) -> Result<Vec<PathSummary>> {
    check_rule(stop)?;
    if start_state >= model.m {
        return Err(Error::InvalidArgument(format!("start state {start_state} out of range")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = replication_rng(seed, start_state, i);
                simulate_until(model, start_state, &mut rng, stop, DEFAULT_EVENT_BUDGET, None)
            })
            .collect()
    })
}

/// Mean and standard error of `f(path) 1{final state = r}` per column.
pub fn summarize<F>(m: usize, paths: &[PathSummary], f: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&PathSummary) -> f64,
{
    let n = paths.len() as f64;
    let mut sums = vec![Sum::default(); m];
    let mut squares = vec![Sum::default(); m];
    for w in paths {
        let v = f(w);
        sums[w.final_state].add(v);
        squares[w.final_state].add(v * v);
    }
    let mean: Vec<f64> = sums.iter().map(|s| s.value() / n).collect();
    let err = (0..m)
        .map(|r| {
            if paths.len() < 2 {
                return 0.0;
            }
            let var = (squares[r].value() / n - mean[r] * mean[r]).max(0.0) * n / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    (mean, err)
}

/// Monte Carlo estimate of a named estimand, all starting states.
pub fn estimate(model: &Model, name: &str, params: &EstimandParams, n: usize, seed: u64) -> Result<McEstimate> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let (stop, f) = functional(name, params)?;
    let m = model.m;
    let mut value = RealMatrix::zeros(m, m);
    let mut std_err = RealMatrix::zeros(m, m);
    for k in 0..m {
        let paths = sample_paths(model, k, &stop, n, seed)?;
        let (mean, err) = summarize(m, &paths, &f);
        for r in 0..m {
            value[(k, r)] = mean[r];
            std_err[(k, r)] = err[r];
        }
    }
    Ok(McEstimate { value, std_err, n, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{model_m2, model_s1, model_zero, risk_r1};

    #[test]
    fn chain_only_model_keeps_zero() {
        let model = model_zero();
        let mut rng = replication_rng(3, 0, 0);
        let mut trace = Vec::new();
        let w = simulate_until(&model, 0, &mut rng, &StopRule::FixedTime(5.0), 1000, Some(&mut trace)).unwrap();
        assert_eq!(w.xi, 0.0);
        assert!(trace.iter().all(|e| e.kind == EventKind::ChainSwitch && e.xi_value == 0.0));
        assert!(trace.windows(2).all(|p| p[0].time < p[1].time));
        // alternating chain
        assert!(trace.iter().enumerate().all(|(j, e)| e.state == (j + 1) % 2));
        let est = estimate(&model, "nonexit", &EstimandParams::default(), 1000, 1).unwrap();
        for k in 0..2 {
            assert_eq!(est.value.row(k).sum(), 1.0);
        }
        // exits never happen
        assert!(matches!(
            estimate(&model, "BT", &EstimandParams::default(), 10, 1),
            Err(Error::EventBudget(_))
        ));
    }

    #[test]
    fn nonexit_of_frozen_model_is_exactly_one() {
        // one state, no jumps
        let mut spec = crate::presets::spec_zero();
        spec.nu = vec![1.0];
        spec.p = vec![vec![1.0]];
        spec.lambda = vec![0.0];
        spec.c = vec![1.0];
        spec.pos_jump_prob = vec![1.0];
        spec.neg_jump = vec![NegJumpDist::empty()];
        let model = Model::new(spec).unwrap();
        let est = estimate(&model, "nonexit", &EstimandParams::default(), 1000, 9).unwrap();
        assert_eq!(est.value[(0, 0)], 1.0);
        assert_eq!(est.std_err[(0, 0)], 0.0);
    }

    fn ks_exp(mut xs: Vec<f64>, rate: f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = 1.0 - (-rate * x).exp();
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn scalar_overshoot_is_exponential() {
        let model = model_s1();
        let stop = StopRule::ExitInterval { x: 0.5, t: 1.0, kill: None };
        let paths = sample_paths(&model, 0, &stop, 100_000, 11).unwrap();
        assert!(paths.iter().all(|w| w.exit == Some(ExitSide::Upper) && w.overshoot >= 0.0));
        let d = ks_exp(paths.iter().map(|w| w.overshoot).collect(), 1.0);
        assert!(d <= 0.01, "distance {d}");
    }

    #[test]
    fn killing_time_is_exponential() {
        let model = model_m2();
        let paths = sample_paths(&model, 0, &StopRule::ExpKill(0.7), 100_000, 5).unwrap();
        let d = ks_exp(paths.iter().map(|w| w.stop_time).collect(), 0.7);
        assert!(d <= 0.01, "distance {d}");
    }

    #[test]
    fn scalar_atom_and_exit() {
        let model = model_s1();
        let p = EstimandParams {
            s: 1.0,
            x: 0.5,
            t: 1.0,
            ..Default::default()
        };
        let atom = estimate(&model, "pplus", &p, 100_000, 2).unwrap();
        assert!((atom.value[(0, 0)] - 1.0 / 3.0).abs() <= 3.0 * atom.std_err[(0, 0)]);
        let bt = estimate(&model, "BT", &p, 100_000, 2).unwrap();
        let exact = 2.0 / 3.0 * (-0.5f64 / 3.0).exp();
        assert!((bt.value[(0, 0)] - exact).abs() <= 3.0 * bt.std_err[(0, 0)]);
    }

    #[test]
    fn exit_sides_are_consistent() {
        let model = model_m2();
        let stop = StopRule::ExitInterval { x: 1.0, t: 2.0, kill: None };
        for w in sample_paths(&model, 1, &stop, 20_000, 4).unwrap() {
            match w.exit {
                Some(ExitSide::Upper) => assert!(w.xi >= 1.0 && (w.overshoot - (w.xi - 1.0)).abs() < 1e-15),
                Some(ExitSide::Lower) => assert!(w.xi <= -1.0 && w.overshoot >= 0.0),
                None => panic!("path did not exit"),
            }
        }
    }

    #[test]
    fn chain_occupation_is_stationary() {
        let model = model_m2();
        let paths = sample_paths(&model, 0, &StopRule::FixedTime(30.0), 20_000, 8).unwrap();
        let (mean, err) = summarize(2, &paths, |_| 1.0);
        for r in 0..2 {
            assert!((mean[r] - model.pi[r]).abs() <= 3.0 * err[r], "{mean:?} vs {:?}", model.pi);
        }
    }

    #[test]
    fn dividend_mean_matches_transform_slope() {
        let rm = risk_r1();
        let f = crate::factorization::solve_plus_factor(&rm.model, 1.0, 1e-13).unwrap();
        let h = 1e-4;
        let lap = |mu: f64| crate::risk::dividend_transform(&rm, &f, mu).unwrap()[(0, 0)];
        let slope = -(lap(h) - lap(0.0)) / h;
        let mean = crate::risk::dividend_mean(&rm, &f).unwrap()[(0, 0)];
        assert!((slope - mean).abs() < 1e-3);
        let p = EstimandParams { s: 1.0, b: 2.0, u: 1.0, ..Default::default() };
        let est = estimate(&rm.model, "dividendMean", &p, 100_000, 6).unwrap();
        assert!((est.value[(0, 0)] - mean).abs() <= 3.0 * est.std_err[(0, 0)]);
    }

    #[test]
    fn runs_are_reproducible_and_thread_independent() {
        let model = model_m2();
        let p = EstimandParams::default();
        let a = estimate(&model, "supTail", &p, 5_000, 42).unwrap();
        let b = estimate(&model, "supTail", &p, 5_000, 42).unwrap();
        assert_eq!(a, b);
        let stop = StopRule::ExpKill(1.0);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| {
                (0..500u64)
                    .map(|i| simulate_until(&model, 0, &mut replication_rng(42, 0, i), &stop, 1000, None).unwrap())
                    .collect::<Vec<_>>()
            });
        assert_eq!(one, sample_paths(&model, 0, &stop, 500, 42).unwrap());
    }

    #[test]
    fn unknown_estimand_lists_names() {
        let err = estimate(&model_s1(), "nope", &EstimandParams::default(), 10, 1).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("BT") && text.contains("dividendMean"), "{text}");
    }
}
