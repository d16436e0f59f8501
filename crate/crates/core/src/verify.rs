//! Verification suites: each check carries its residual and the threshold it was held to.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cumulant::{kappa, perron, phi_inverse, Cumulant};
use crate::error::{Error, Result};
use crate::identity::{
    ballot_residual, commute_gate, frullani_expm, kendall_assumption_check, kendall_residual, rogozin_factor_ungated,
    KendallHistogram, QuadratureConfig, Side,
};
use crate::ladder::{ladder_factors, resolvent_i, Conditioning, Ladder, WienerHopf};
use crate::linalg::{self, c, CMatrix, RMatrix};
use crate::model::{validate, LevyComponent, MapSpec, ValidatedModel};
use crate::simulate::{
    estimate_transform, first_passage, fixed_time_stats, killed_stats, ks_two_sample, wh_product_estimate, Epoch,
    EstimateMatrix, Functional, StartLaw,
};
use crate::transform::{reversal_residual, reverse, tilt};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl Check {
    /// Passes when `residual <= threshold`; a NaN residual fails.
    pub fn le(name: impl Into<String>, residual: f64, threshold: f64) -> Self {
        Check { name: name.into(), residual, threshold, pass: residual <= threshold, detail: None }
    }

    pub fn with(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} residual={:.3e} threshold={:.3e}", self.name, self.residual, self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Wh,
    Independence,
    Rogozin,
    Kendall,
    Ballot,
    Structure,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Wh, Suite::Independence, Suite::Rogozin, Suite::Kendall, Suite::Ballot, Suite::Structure];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Wh => "wh",
            Suite::Independence => "independence",
            Suite::Rogozin => "rogozin",
            Suite::Kendall => "kendall",
            Suite::Ballot => "ballot",
            Suite::Structure => "structure",
        }
    }

    /// Built-in model used when none is given.
    pub fn default_model(self) -> &'static str {
        match self {
            Suite::Wh | Suite::Kendall | Suite::Structure => "MODEL-A",
            Suite::Independence => "MODEL-D",
            Suite::Rogozin => "MODEL-B",
            Suite::Ballot => "MODEL-C",
        }
    }

    pub fn default_paths(self) -> usize {
        match self {
            Suite::Wh => 100_000,
            Suite::Independence => 200_000,
            Suite::Kendall | Suite::Ballot => 1_000_000,
            Suite::Rogozin | Suite::Structure => 0,
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::Parse(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Paths per Monte Carlo estimate; the suite default when `None`.
    pub paths: Option<usize>,
    pub seed: u64,
    /// Replaces the threshold of every deterministic check.
    pub tol: Option<f64>,
    /// Monte Carlo checks pass within this many standard errors.
    pub se_mult: f64,
    pub quad: QuadratureConfig,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { paths: None, seed: 1, tol: None, se_mult: 3.0, quad: QuadratureConfig::default() }
    }
}

impl VerifyOptions {
    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn paths(&self, suite: Suite) -> usize {
        self.paths.unwrap_or(suite.default_paths())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub paths: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub fn run_suite(model: &ValidatedModel, suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Structure => {
            let mut v = scalar_reduction(opts.tol(1e-9))?;
            v.extend(structure_checks(model, opts)?);
            v
        }
        Suite::Wh => {
            let mut v = upcrossing_and_sup(model, opts)?;
            v.extend(inf_factor_checks(model, opts)?);
            v
        }
        Suite::Independence => {
            let mut v = product_checks(model, opts)?;
            v.extend(reversal_law_checks(model, opts)?);
            v
        }
        Suite::Rogozin => rogozin_checks(model, opts)?,
        Suite::Kendall => kendall_checks(model, opts)?,
        Suite::Ballot => ballot_checks(model, opts)?,
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport { suite, paths: opts.paths(suite), seed: opts.seed, checks, pass })
}

pub fn matrix_json(m: &RMatrix) -> Value {
    json!((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

pub fn cmatrix_json(m: &CMatrix) -> Value {
    json!({"re": matrix_json(&m.map(|z| z.re)), "im": matrix_json(&m.map(|z| z.im))})
}

fn estimate_json(e: &EstimateMatrix, target: &CMatrix) -> Value {
    json!({
        "estimate": cmatrix_json(&e.value),
        "stderr_re": matrix_json(&e.stderr),
        "stderr_im": matrix_json(&e.stderr_im),
        "analytic": cmatrix_json(target),
        "n_per_start": e.n,
    })
}

fn mc_check(name: String, est: &EstimateMatrix, target: &CMatrix, opts: &VerifyOptions) -> Check {
    Check::le(name, est.max_z(target), opts.se_mult).with(estimate_json(est, target))
}

/// Scalar Brownian models: the sup factor against `Phi(q)/(Phi(q+xi)+alpha)` and the inf
/// factor against `(q/Phi(q)) (Phi(q+xi) - alpha)/(q + xi - psi(alpha))` on 12 points.
pub fn scalar_reduction(tol: f64) -> Result<Vec<Check>> {
    let models = [(1.0, 2.0), (-0.5, 1.0)];
    let points = [(0.5, 0.0, 0.0), (0.5, 0.3, 0.1), (1.0, 0.5, 0.0), (1.0, 0.2, 0.5), (2.0, 1.0, 0.3), (2.0, 0.0, 1.0)];
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (drift, s2) in models {
        let m = validate(MapSpec::scalar(LevyComponent::brownian(drift, s2)))?;
        let wh = WienerHopf::new(&m);
        let psi = |a: f64| drift * a + 0.5 * s2 * a * a;
        for (q, a, xi) in points {
            let (pq, pqx) = (phi_inverse(&m, q)?, phi_inverse(&m, q + xi)?);
            let sup_want = pq / (pqx + a);
            let inf_want = q / pq * (pqx - a) / (q + xi - psi(a));
            for cond in [Conditioning::AtEq, Conditioning::AtG] {
                let s = wh.sup_factor(q, a, xi, cond)?[(0, 0)];
                let i = wh.inf_factor(q, a, xi, cond)?[(0, 0)];
                worst = worst.max((s - sup_want).abs()).max((i - inf_want).abs());
            }
            rows.push(
                json!({"drift": drift, "sigma2": s2, "q": q, "alpha": a, "xi": xi, "sup": sup_want, "inf": inf_want}),
            );
        }
    }
    Ok(vec![Check::le("scalar_reduction", worst, tol).with(json!(rows))])
}

/// Interior points of the cumulant domain used by the analytic checks.
fn alpha_grid(model: &ValidatedModel) -> Vec<f64> {
    let (lo, hi) = model.domain();
    [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5].into_iter().filter(|a| *a > lo + 0.05 && *a < hi - 0.05).collect()
}

pub fn structure_checks(model: &ValidatedModel, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let n = model.n_states();
    let pi = model.pi();
    let mut out = Vec::new();
    let t0 = perron(model, 0.0)?;
    out.push(Check::le("kappa(0) = 0", t0.kappa.abs(), opts.tol(1e-12)));
    out.push(Check::le("h(0) = e", t0.h.iter().map(|h| (h - 1.0).abs()).fold(0.0, f64::max), opts.tol(1e-10)));
    let grid = alpha_grid(model);
    let mut norm = 0.0f64;
    for &a in &grid {
        let t = perron(model, a)?;
        let vh: f64 = t.v.iter().zip(&t.h).map(|(x, y)| x * y).sum();
        let ph: f64 = pi.iter().zip(&t.h).map(|(x, y)| x * y).sum();
        norm = norm.max((vh - 1.0).abs()).max((ph - 1.0).abs());
    }
    out.push(Check::le("v.h = 1, pi.h = 1", norm, opts.tol(1e-10)));

    let (lo, hi) = model.domain();
    let (a0, a1) = (lo.max(-2.0) + 0.05, hi.min(3.0) - 0.05);
    let steps = 60;
    let dx = (a1 - a0) / steps as f64;
    let ks: Vec<f64> = (0..=steps).map(|k| kappa(model, a0 + k as f64 * dx)).collect::<Result<_>>()?;
    let min_second = ks.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::INFINITY, f64::min);
    out.push(Check::le("kappa convex", (-min_second).max(0.0), opts.tol(1e-9)));

    let mut phi_err = 0.0f64;
    for q in [0.5, 1.0, 2.0] {
        phi_err = phi_err.max((kappa(model, phi_inverse(model, q)?)? - q).abs());
    }
    out.push(Check::le("kappa(Phi(q)) = q", phi_err, opts.tol(1e-10)));

    let mut stoch = 0.0f64;
    for q in [0.5, 1.0, 2.0] {
        let r = resolvent_i(model, q)?;
        stoch = stoch.max(linalg::row_sums(&r).iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max));
        stoch = stoch.max(r.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max));
    }
    out.push(Check::le("I(q) stochastic", stoch, opts.tol(1e-12)));

    if model.is_spectrally_negative() {
        let mut shift = 0.0f64;
        let mut gen = 0.0f64;
        for q in [0.5, 1.0, 2.0] {
            let lf = ladder_factors(model, q)?;
            for a in [0.3, 1.0, 2.5] {
                shift = shift.max(linalg::max_abs(&(lf.xi(a) - &lf.xi0 - RMatrix::identity(n, n) * a)));
            }
            gen = gen.max(linalg::row_sums(&lf.lambda).iter().map(|s| s.abs()).fold(0.0, f64::max));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        gen = gen.max((-lf.lambda[(i, j)]).max(0.0));
                    }
                }
            }
        }
        out.push(Check::le("Xi(q, alpha) = Xi(q, 0) + alpha I", shift, opts.tol(1e-12)));
        out.push(Check::le("Lambda(q) is a generator", gen, opts.tol(1e-8)));
    }

    let gamma = 0.5f64.min(0.5 * hi);
    let tilted = tilt(model, gamma)?;
    let kg = kappa(model, gamma)?;
    let mut terr = 0.0f64;
    for &a in grid.iter().filter(|a| **a + gamma < hi - 0.05) {
        terr = terr.max((kappa(&tilted, a)? - kappa(model, a + gamma)? + kg).abs());
    }
    out.push(Check::le("kappa_gamma(alpha) = kappa(alpha + gamma) - kappa(gamma)", terr, opts.tol(1e-9)));

    let rev = reverse(model);
    let (mut ferr, mut kerr, mut herr) = (0.0f64, 0.0f64, 0.0f64);
    for &a in &grid {
        ferr = ferr.max(reversal_residual(model, c(a))?);
        let t = perron(model, a)?;
        let th = perron(&rev, a)?;
        kerr = kerr.max((t.kappa - th.kappa).abs());
        let vsum: f64 = t.v.iter().sum();
        for ((p, h), v) in pi.iter().zip(&th.h).zip(&t.v) {
            herr = herr.max((p * h - v / vsum).abs());
        }
    }
    out.push(Check::le("F^ = D_pi^-1 F^T D_pi", ferr, opts.tol(1e-8)));
    out.push(Check::le("kappa^ = kappa", kerr, opts.tol(1e-8)));
    out.push(Check::le("D_pi h^ = v / (e.v)", herr, opts.tol(1e-8)));

    out.push(frullani_check(100, opts.seed, opts.tol(1e-8))?);
    Ok(out)
}

/// `frullani_expm(A, 1)` against `(I + A)^-1` on random diagonalizable 3x3 matrices
/// with eigenvalues in `(0, 2)`.
pub fn frullani_check(count: usize, seed: u64, tol: f64) -> Result<Check> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let s = RMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.4..0.4));
        let mut eig = [0.0; 3];
        for (k, e) in eig.iter_mut().enumerate() {
            *e = 0.05 + 0.6 * k as f64 + rng.random_range(0.0..0.5);
        }
        let a = &s * linalg::diag(&eig) * linalg::inverse(&s, "S")?;
        let want = linalg::inverse(&(RMatrix::identity(3, 3) + &a), "I + A")?;
        worst = worst.max(linalg::max_abs(&(frullani_expm(&a, 1.0)? - want)));
    }
    Ok(Check::le(format!("Frullani vs linear solve ({count} matrices)"), worst, tol))
}

fn require_sn(model: &ValidatedModel, what: &str) -> Result<()> {
    if model.is_spectrally_negative() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} needs a spectrally negative model")))
    }
}

/// Up-crossing matrix `exp(-Xi(1,0) 0.5)` and the sup factor at `(alpha, xi) = (0.7, 0.3)`
/// against simulation, `q = 1`.
pub fn upcrossing_and_sup(model: &ValidatedModel, opts: &VerifyOptions) -> Result<Vec<Check>> {
    require_sn(model, "the ladder comparison")?;
    let n = opts.paths(Suite::Wh);
    let q = 1.0;
    let ladder = Ladder::new(model);
    let fp = first_passage(model, &[0.5], n, opts.seed, None, 50.0 / q, StartLaw::RoundRobin)?;
    let est = fp.transform(0, q)?;
    let want = linalg::to_complex(&ladder.up_crossing(q, 0.0, 0.5)?);
    let mut first = mc_check("E[e^{-tau_0.5}; J] = exp(-0.5 Xi(1,0))".into(), &est, &want, opts);
    if let Some(Value::Object(d)) = first.detail.as_mut() {
        d.insert("horizon_exhausted".into(), json!(fp.horizon_exhausted));
    }
    let mut out = vec![first];
    let st = killed_stats(model, q, n, opts.seed.wrapping_add(1), StartLaw::RoundRobin);
    let (a, xi) = (0.7, 0.3);
    let est = estimate_transform(&st, &Functional::sup(c(a), xi), Epoch::Eq)?;
    let want = linalg::to_complex(&ladder.sup_factor(q, a, xi, Conditioning::AtEq)?);
    out.push(mc_check(format!("sup factor at e_q, (alpha, xi) = ({a}, {xi})"), &est, &want, opts));
    Ok(out)
}

/// Infimum factors at `(0.4, 0.2)` and `(0.2, 0)`, read at `e_q` and at `G`, against the
/// same killed paths, plus the analytic key identity at `alpha in {0.2, 0.5, 0.8}`.
pub fn inf_factor_checks(model: &ValidatedModel, opts: &VerifyOptions) -> Result<Vec<Check>> {
    require_sn(model, "the ladder comparison")?;
    let n = opts.paths(Suite::Wh);
    let q = 1.0;
    let wh = WienerHopf::new(model);
    let st = killed_stats(model, q, n, opts.seed.wrapping_add(1), StartLaw::RoundRobin);
    let mut out = Vec::new();
    for (a, xi) in [(0.4, 0.2), (0.2, 0.0)] {
        for (cond, epoch, label) in [(Conditioning::AtEq, Epoch::Eq, "e_q"), (Conditioning::AtG, Epoch::G, "G")] {
            let est = estimate_transform(&st, &Functional::inf(c(a), xi), epoch)?;
            let want = linalg::to_complex(&wh.inf_factor(q, a, xi, cond)?);
            out.push(mc_check(format!("inf factor at {label}, (alpha, xi) = ({a}, {xi})"), &est, &want, opts));
        }
    }
    let mut worst = 0.0f64;
    for a in [0.2, 0.5, 0.8] {
        worst = worst.max(wh.key_identity_residual(q, a)?);
    }
    out.push(Check::le("key identity, alpha in {0.2, 0.5, 0.8}", worst, opts.tol(1e-6)));
    Ok(out)
}

pub const PRODUCT_GRID: [(f64, f64); 6] = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (0.5, 0.5), (1.5, 0.25), (2.0, 1.0)];

/// `q((q+xi)I - F(i alpha))^-1` against the simulated product of the sup factor and the
/// reversed inf factor, `q = 1`.
pub fn product_checks(model: &ValidatedModel, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let n = opts.paths(Suite::Independence);
    let q = 1.0;
    let rev = validate(model.reversed_spec()?)?;
    let fw = killed_stats(model, q, n, opts.seed, StartLaw::RoundRobin);
    let rv = killed_stats(&rev, q, n, opts.seed.wrapping_add(1), StartLaw::RoundRobin);
    let dim = model.n_states();
    let mut out = Vec::new();
    for (a, xi) in PRODUCT_GRID {
        let est = wh_product_estimate(&fw, &rv, model.pi(), a, xi)?;
        let f = model.eval(Complex64::new(0.0, a))?;
        let want = linalg::inverse_c(&(CMatrix::identity(dim, dim) * c(q + xi) - f), "(q + xi)I - F(i alpha)")? * c(q);
        out.push(mc_check(format!("factorization product, (alpha, xi) = ({a}, {xi})"), &est, &want, opts));
    }
    Ok(out)
}

/// Two-sample KS between `(e_q - Gbar, X - S)` under `pi` and `(G, I)` of the reversed
/// model, per marginal, against `1.63 / sqrt(n)`.
pub fn reversal_law_checks(model: &ValidatedModel, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let n = opts.paths.unwrap_or(100_000);
    let rev = validate(model.reversed_spec()?)?;
    let fw = killed_stats(model, 1.0, n, opts.seed.wrapping_add(2), StartLaw::Stationary);
    let rv = killed_stats(&rev, 1.0, n, opts.seed.wrapping_add(3), StartLaw::Stationary);
    let thr = 1.63 / (n as f64).sqrt();
    let a: Vec<f64> = fw.records.iter().map(|r| r.e_q - r.g_bar).collect();
    let b: Vec<f64> = rv.records.iter().map(|r| r.g).collect();
    let x: Vec<f64> = fw.records.iter().map(|r| r.x - r.s).collect();
    let y: Vec<f64> = rv.records.iter().map(|r| r.i).collect();
    Ok(vec![
        Check::le("KS(e_q - Gbar, G^)", ks_two_sample(&a, &b), thr),
        Check::le("KS(X - S, I^)", ks_two_sample(&x, &y), thr),
    ])
}

pub const ROGOZIN_POINTS: [(f64, f64); 2] = [(0.5, 0.25), (1.0, 0.0)];

/// Commuting gate and the Spitzer-Rogozin factor against the ladder sup factor, `q = 1`.
/// The factor is evaluated even when the gate fails so the mismatch is on record.
pub fn rogozin_checks(model: &ValidatedModel, opts: &VerifyOptions) -> Result<Vec<Check>> {
    require_sn(model, "the ladder comparison")?;
    let q = 1.0;
    let cfg = &opts.quad;
    let mut out = vec![Check::le("commute gate", commute_gate(model, cfg)?, cfg.gate)];
    let ladder = Ladder::new(model);
    for (a, xi) in ROGOZIN_POINTS {
        let r = rogozin_factor_ungated(model, q, a, xi, Side::Sup, cfg)?;
        let l = ladder.sup_factor(q, a, xi, Conditioning::AtEq)?;
        let rel = linalg::max_abs(&(&r - &l)) / linalg::max_abs(&l);
        out.push(
            Check::le(format!("Spitzer-Rogozin vs ladder, (alpha, xi) = ({a}, {xi})"), rel, opts.tol(1e-3))
                .with(json!({"rogozin": matrix_json(&r), "ladder": matrix_json(&l)})),
        );
    }
    Ok(out)
}

pub const KENDALL_T: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
pub const KENDALL_X: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
pub const KENDALL_HALF_WIDTH: f64 = 0.05;

pub fn kendall_checks(model: &ValidatedModel, opts: &VerifyOptions) -> Result<Vec<Check>> {
    require_sn(model, "the Kendall identity")?;
    let dim = model.n_states();
    let qs: Vec<f64> = if dim == 2 { vec![0.5, 2.0] } else { (0..dim).map(|k| 0.5 * 4f64.powi(k as i32)).collect() };
    let asm = kendall_assumption_check(model, &qs)?;
    let mut out = vec![Check::le("h(Phi(q_k)) independent (condition number)", asm.condition, 1e8)
        .with(json!({"q": qs, "matrix": matrix_json(&asm.matrix), "determinant": asm.determinant}))];
    let n = opts.paths(Suite::Kendall);
    let horizon = KENDALL_T[3] + KENDALL_HALF_WIDTH + 0.05;
    let fp = first_passage(model, &KENDALL_X, n, opts.seed, None, horizon, StartLaw::RoundRobin)?;
    let hist = KendallHistogram::from_passage(&fp, &KENDALL_T, KENDALL_HALF_WIDTH)?;
    let rep = kendall_residual(model, &hist, &opts.quad)?;
    let cells: Vec<Value> = rep
        .cells
        .iter()
        .map(|c| {
            json!({"t": c.t, "x": c.x, "deviation": c.deviation, "max_z": c.max_z, "vacuous": c.vacuous,
                   "mc": matrix_json(&c.mc), "stderr": matrix_json(&c.stderr), "analytic": matrix_json(&c.analytic)})
        })
        .collect();
    out.push(
        Check::le("Kendall max relative deviation", rep.max_deviation, opts.tol(0.05))
            .with(json!({"mean_deviation": rep.mean_deviation, "max_z": rep.max_z, "cells": cells})),
    );
    Ok(out)
}

pub const BALLOT_X: [f64; 3] = [0.5, 1.0, 1.5];

pub fn ballot_checks(model: &ValidatedModel, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let n = opts.paths(Suite::Ballot);
    let t = 1.0;
    let st = fixed_time_stats(model, t, n, opts.seed, StartLaw::RoundRobin);
    let rep = ballot_residual(model, t, &BALLOT_X, &st)?;
    let mut out = Vec::new();
    for x in BALLOT_X {
        let cells: Vec<_> = rep.cells.iter().filter(|c| c.x == x).collect();
        let worst = cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
        let table: Vec<Value> = cells
            .iter()
            .map(|c| json!({"start": c.start, "state": c.state, "lhs": c.lhs, "rhs": c.rhs, "stderr": c.stderr, "z": c.z}))
            .collect();
        out.push(
            Check::le(format!("ballot cell x = {x} (|z|)"), worst, opts.se_mult)
                .with(json!({"half_width": rep.half_width, "cells": table})),
        );
    }
    Ok(out)
}
