//! Non-ladder identities: matrix Frullani, Fourier inversion of the transition
//! density, Spitzer-Rogozin factors, and the Kendall and ballot residuals.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cumulant::{perron, phi_inverse, Cumulant};
use crate::error::{Error, Result};
use crate::ladder::resolvent_i;
use crate::linalg::{self, c, CMatrix, RMatrix};
use crate::model::ValidatedModel;
use crate::simulate::{KilledStats, PassageSamples};

/// Numerical knobs for the Fourier and time quadratures.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct QuadratureConfig {
    /// Time integrals run over `[0, t_max_factor / q]`.
    pub t_max_factor: f64,
    /// Geometric panels (ratio 2) in `s = sqrt(t)`.
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Fourier inversion keeps `|u| <= freq_cutoff / (sigma_min sqrt(t))`.
    pub freq_cutoff: f64,
    /// Target size of neglected density tails and contour truncation.
    pub tail_tol: f64,
    /// Relative change allowed when the time quadrature is refined.
    pub tol: f64,
    /// Largest commutator accepted before a Spitzer-Rogozin evaluation.
    pub gate: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            t_max_factor: 40.0,
            panels: 14,
            nodes_per_panel: 10,
            freq_cutoff: 8.0,
            tail_tol: 1e-12,
            tol: 1e-7,
            gate: 1e-3,
        }
    }
}

/// `exp(int_0^inf (e^{-Ax} - I) x^-1 e^{-qx} dx)`, one scalar Frullani integral
/// `log(q / (q + lambda))` per eigenvalue of `A`.
pub fn frullani_expm(a: &RMatrix, q: f64) -> Result<RMatrix> {
    let n = a.nrows();
    let (lambda, s) = linalg::eig_decompose(&linalg::to_complex(a), 1e-10)?;
    let mut d = Vec::with_capacity(n);
    for &l in &lambda {
        let shift = c(q) + l;
        if shift.norm() < 1e-12 * (1.0 + q.abs()) || shift.re <= 0.0 {
            return Err(Error::SingularShift(shift.norm()));
        }
        let integral = -(shift / q).ln();
        d.push(integral.exp());
    }
    let sinv = linalg::inverse_c(&s, "eigenvector matrix")?;
    linalg::real_part(&(&s * linalg::cdiag(&d) * sinv), 1e-8, "Frullani exponential")
}

fn require_density(model: &ValidatedModel) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in 0..model.n_states() {
        let s = model.levy(i).sigma();
        if !(s > 0.0) {
            return Err(Error::NoDensity { state: i });
        }
        lo = lo.min(s);
        hi = hi.max(s);
    }
    Ok((lo, hi))
}

fn expm_norm(model: &ValidatedModel, z: f64, t: f64) -> Result<f64> {
    let m = linalg::expm(&(model.eval_real(z)? * t));
    Ok(linalg::row_sums(&m.abs()).into_iter().fold(0.0, f64::max))
}

/// Distance beyond which `P(X(t) > y)` (or `P(X(t) < -y)` when `upper` is false)
/// falls below `tol`, from the Chernoff bound over a ladder of exponents.
fn tail_extent(model: &ValidatedModel, t: f64, upper: bool, tol: f64) -> Result<f64> {
    let (lo, hi) = model.domain();
    let limit = if upper { hi } else { -lo };
    let target = -tol.ln();
    let mut best = f64::INFINITY;
    let mut theta: f64 = 1.0 / 64.0;
    while theta < 0.9 * limit && theta <= 4096.0 {
        let z = if upper { theta } else { -theta };
        let norm = expm_norm(model, z, t)?;
        best = best.min((norm.ln() + target) / theta);
        theta *= 1.5;
    }
    Ok(best.max(0.0))
}

/// Transition density on a grid: `values[k][(i, j)] ~ P_i(X(t) in dx, J(t) = j) / dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySlice {
    pub t: f64,
    pub x_grid: Vec<f64>,
    pub values: Vec<RMatrix>,
}

/// `p_t(x) = (1/2pi) int e^{-iux} exp(F(iu) t) du` by the trapezoid rule. The step
/// is set so the periodic images of the density sit beyond its Chernoff tails.
pub fn density_matrix(model: &ValidatedModel, t: f64, x_grid: &[f64], cfg: &QuadratureConfig) -> Result<DensitySlice> {
    let (sigma_min, _) = require_density(model)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("density needs t > 0, got {t}")));
    }
    let n = model.n_states();
    let xmin = x_grid.iter().copied().fold(0.0, f64::min);
    let xmax = x_grid.iter().copied().fold(0.0, f64::max);
    let up = tail_extent(model, t, true, cfg.tail_tol)?;
    let down = tail_extent(model, t, false, cfg.tail_tol)?;
    let period = (up - xmin).max(down + xmax) + 1.0;
    let du = 2.0 * PI / period;
    let umax = cfg.freq_cutoff / (sigma_min * t.sqrt());
    let k_max = (umax / du).ceil() as usize;
    let phis: Vec<CMatrix> = (0..=k_max)
        .into_par_iter()
        .map(|k| model.eval(Complex64::new(0.0, k as f64 * du)).map(|f| linalg::expm_c(&(f * c(t)))))
        .collect::<Result<_>>()?;
    let values = x_grid
        .iter()
        .map(|&x| {
            let mut acc = phis[0].map(|z| z.re) * 0.5;
            for (k, phi) in phis.iter().enumerate().skip(1) {
                let e = Complex64::new(0.0, -(k as f64) * du * x).exp();
                acc += phi.map(|z| (z * e).re);
            }
            acc * (du / PI)
        })
        .collect::<Vec<_>>();
    debug_assert_eq!(values.first().map_or(n, |v| v.nrows()), n);
    Ok(DensitySlice { t, x_grid: x_grid.to_vec(), values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfLine {
    /// `x >= 0`
    NonNeg,
    /// `x < 0`
    Neg,
}

/// `(1/2pi) int exp(F(c + iw) t) k(c + iw) dw` over the vertical line `Re = c`.
/// `gap` is the distance from the line to the nearest pole of `k`.
fn contour<K>(model: &ValidatedModel, t: f64, cre: f64, gap: f64, shift_im: f64, kernel: K) -> Result<CMatrix>
where
    K: Fn(Complex64) -> Complex64 + Sync,
{
    let (sigma_min, _) = require_density(model)?;
    let n = model.n_states();
    let growth = expm_norm(model, cre, t)?.max(1.0).ln();
    let w_max = (2.0 * (36.0 + growth) / (sigma_min * sigma_min * t)).sqrt() + shift_im.abs();
    let h = gap / 4.0;
    let k = (w_max / h).ceil() as i64;
    // collected first so the summation order never depends on scheduling
    let terms = (-k..=k)
        .into_par_iter()
        .map(|m| {
            let s = Complex64::new(cre, m as f64 * h);
            let f = model.eval(s)?;
            Ok(linalg::expm_c(&(f * c(t))) * kernel(s))
        })
        .collect::<Result<Vec<_>>>()?;
    let sum = terms.into_iter().fold(CMatrix::zeros(n, n), |a, b| a + b);
    Ok(sum * c(h / (2.0 * PI)))
}

/// Offset of the integration line from `re_z`, kept inside the cumulant domain.
/// It grows like `1/(sigma sqrt t)` so the node count stays bounded as `t -> 0`,
/// and shrinks for large `t` until `exp(F(c) t)` stays of order one on the line,
/// which keeps the quadrature free of cancellation.
fn contour_offset(model: &ValidatedModel, t: f64, re_z: f64, side: HalfLine) -> Result<f64> {
    let (_, sigma_max) = require_density(model)?;
    let (lo, hi) = model.domain();
    let room = match side {
        HalfLine::NonNeg => hi - re_z,
        HalfLine::Neg => re_z - lo,
    };
    if !(room > 0.0) {
        return Err(Error::Domain(format!("exponent {re_z} is outside the cumulant domain ({lo}, {hi})")));
    }
    let mut d = (1.0 / (sigma_max * t.sqrt())).max(0.5).min(0.5 * room);
    let base = expm_norm(model, re_z, t)?.max(1.0).ln();
    loop {
        let cre = match side {
            HalfLine::NonNeg => re_z + d,
            HalfLine::Neg => re_z - d,
        };
        if expm_norm(model, cre, t)?.max(1.0).ln() <= base + 2.0 || d < 1e-6 {
            return Ok(d);
        }
        d *= 0.5;
    }
}

/// `E[e^{zX(t)} 1{side}; J(t)]` by a shifted inversion contour.
fn half_line_exp(model: &ValidatedModel, t: f64, z: Complex64, side: HalfLine) -> Result<CMatrix> {
    let d = contour_offset(model, t, z.re, side)?;
    let (cre, sign) = match side {
        HalfLine::NonNeg => (z.re + d, 1.0),
        HalfLine::Neg => (z.re - d, -1.0),
    };
    let m = contour(model, t, cre, d, z.im, |s| sign / (s - z))?;
    Ok(m)
}

/// `e^{-xi t} E[e^{i alpha X(t)}; X(t) on the chosen half-line, J(t)]`.
pub fn half_line_transform(
    model: &ValidatedModel,
    t: f64,
    alpha: f64,
    xi: f64,
    side: HalfLine,
    _cfg: &QuadratureConfig,
) -> Result<CMatrix> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("half-line transform needs t > 0, got {t}")));
    }
    Ok(half_line_exp(model, t, Complex64::new(0.0, alpha), side)? * c((-xi * t).exp()))
}

/// Operator norm of `[E[e^{i alpha X(t)}; X(t) >= 0, J(t)], E[e^{i alpha X(s)}; X(s) < 0, J(s)]]`.
pub fn commute_residual(model: &ValidatedModel, alpha: f64, t: f64, s: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let a = half_line_transform(model, t, alpha, 0.0, HalfLine::NonNeg, cfg)?;
    let b = half_line_transform(model, s, alpha, 0.0, HalfLine::Neg, cfg)?;
    Ok(linalg::spectral_norm_c(&(&a * &b - &b * &a)))
}

/// `(alpha, t, s)` points at which the commuting hypothesis is checked.
pub const GATE_POINTS: [(f64, f64, f64); 3] = [(1.0, 0.5, 1.0), (1.0, 1.0, 0.5), (0.5, 1.0, 1.0)];

/// Largest commutator over [`GATE_POINTS`].
pub fn commute_gate(model: &ValidatedModel, cfg: &QuadratureConfig) -> Result<f64> {
    GATE_POINTS
        .iter()
        .map(|&(a, t, s)| commute_residual(model, a, t, s, cfg))
        .try_fold(0.0f64, |m, r| r.map(|r| m.max(r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Sup,
    Inf,
}

/// Integrand of the Spitzer-Rogozin exponent at time `t`, without the `e^{-qt}/t` weight:
/// `E[(e^{-xi t -alpha X} - 1); X >= 0, J]` (sup) or `E[(e^{-xi t + alpha X} - 1); X < 0, J]` (inf).
fn rogozin_kernel(model: &ValidatedModel, t: f64, alpha: f64, xi: f64, side: Side) -> Result<CMatrix> {
    let (z, hl) = match side {
        Side::Sup => (-alpha, HalfLine::NonNeg),
        Side::Inf => (alpha, HalfLine::Neg),
    };
    // poles at z and 0; the line sits beyond both
    let d = contour_offset(model, t, z.max(0.0), hl)?.min(contour_offset(model, t, z.min(0.0), hl)?);
    let (cre, sign) = match hl {
        HalfLine::NonNeg => (z.max(0.0) + d, 1.0),
        HalfLine::Neg => (z.min(0.0) - d, -1.0),
    };
    let em1 = (-xi * t).exp_m1();
    let zc = c(z);
    // e^{-xi t}/(s - z) - 1/s without cancellation
    contour(model, t, cre, d, 0.0, move |s| sign * (s * em1 + zc) / (s * (s - zc)))
}

#[allow(clippy::too_many_arguments)]
fn rogozin_exponent_with(
    model: &ValidatedModel,
    q: f64,
    alpha: f64,
    xi: f64,
    side: Side,
    panels: usize,
    nodes: usize,
    t_max: f64,
) -> Result<RMatrix> {
    let rule = GaussLegendre::new(NonZeroUsize::new(nodes).expect("nodes_per_panel > 0"));
    let s_max = t_max.sqrt();
    let mut edges = vec![0.0];
    for k in (0..panels).rev() {
        edges.push(s_max / 2f64.powi(k as i32));
    }
    let n = model.n_states();
    let mut points = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        for &(x, wt) in rule.as_node_weight_pairs() {
            points.push((0.5 * ((b - a) * x + a + b), 0.5 * (b - a) * wt));
        }
    }
    // int_0^T g(t) e^{-qt} dt / t = int_0^sqrt(T) 2 g(s^2) e^{-q s^2} ds / s
    let terms: Vec<CMatrix> = points
        .par_iter()
        .map(|&(s, wt)| {
            let t = s * s;
            rogozin_kernel(model, t, alpha, xi, side).map(|k| k * c(2.0 * wt * (-q * t).exp() / s))
        })
        .collect::<Result<_>>()?;
    let total = terms.into_iter().fold(CMatrix::zeros(n, n), |a, b| a + b);
    linalg::real_part(&total, 1e-8, "Spitzer-Rogozin exponent")
}

/// `int_0^inf dt t^-1 e^{-qt} int (e^{-xi t -/+ alpha x} - 1) P(X(t) in dx; J(t))` over
/// the half-line of `side`. Checked by halving every panel.
pub fn rogozin_exponent(
    model: &ValidatedModel,
    q: f64,
    alpha: f64,
    xi: f64,
    side: Side,
    cfg: &QuadratureConfig,
) -> Result<RMatrix> {
    if !(q > 0.0 && alpha >= 0.0 && xi >= 0.0) {
        return Err(Error::Domain(format!(
            "Spitzer-Rogozin factor needs q > 0, alpha >= 0, xi >= 0 (got {q}, {alpha}, {xi})"
        )));
    }
    require_density(model)?;
    let t_max = cfg.t_max_factor / q;
    let coarse = rogozin_exponent_with(model, q, alpha, xi, side, cfg.panels, cfg.nodes_per_panel, t_max)?;
    let fine = rogozin_exponent_with(model, q, alpha, xi, side, cfg.panels, 2 * cfg.nodes_per_panel, t_max)?;
    let change = linalg::max_abs(&(&fine - &coarse)) / (1.0 + linalg::max_abs(&fine));
    if change > cfg.tol {
        return Err(Error::QuadratureNonconvergence { change, tol: cfg.tol });
    }
    Ok(fine)
}

/// `exp(rogozin_exponent) I(q)` without checking the commuting hypothesis.
pub fn rogozin_factor_ungated(
    model: &ValidatedModel,
    q: f64,
    alpha: f64,
    xi: f64,
    side: Side,
    cfg: &QuadratureConfig,
) -> Result<RMatrix> {
    let m = rogozin_exponent(model, q, alpha, xi, side, cfg)?;
    Ok(linalg::expm(&m) * resolvent_i(model, q)?)
}

/// Spitzer-Rogozin factor `exp{int int ...} I(q)`, refused with `CommuteGateFailed`
/// when the half-line transforms do not commute to within `cfg.gate`.
pub fn rogozin_factor(
    model: &ValidatedModel,
    q: f64,
    alpha: f64,
    xi: f64,
    side: Side,
    cfg: &QuadratureConfig,
) -> Result<RMatrix> {
    let residual = commute_gate(model, cfg)?;
    if !(residual <= cfg.gate) {
        return Err(Error::CommuteGateFailed { residual, gate: cfg.gate });
    }
    rogozin_factor_ungated(model, q, alpha, xi, side, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KendallAssumption {
    /// Rows `h(Phi(q_k))`.
    pub matrix: RMatrix,
    pub determinant: f64,
    pub condition: f64,
    pub independent: bool,
}

/// Stacks `h(Phi(q_k))` for `N` distinct positive `q_k`; independent iff the
/// condition number is below `1e8`.
pub fn kendall_assumption_check(model: &ValidatedModel, q_list: &[f64]) -> Result<KendallAssumption> {
    let n = model.n_states();
    if q_list.len() != n {
        return Err(Error::Domain(format!("need {n} values of q, got {}", q_list.len())));
    }
    for (k, &q) in q_list.iter().enumerate() {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("q must be positive, got {q}")));
        }
        if q_list[..k].contains(&q) {
            return Err(Error::Domain(format!("q values must be distinct; {q} repeats")));
        }
    }
    let mut matrix = RMatrix::zeros(n, n);
    for (k, &q) in q_list.iter().enumerate() {
        let h = perron(model, phi_inverse(model, q)?)?.h;
        for j in 0..n {
            matrix[(k, j)] = h[j];
        }
    }
    let determinant = matrix.determinant().abs();
    let condition = linalg::condition_number(&matrix);
    Ok(KendallAssumption { independent: condition < 1e8, matrix, determinant, condition })
}

/// Binned first-passage times: for level `x_k` and time cell `[t_m - w, t_m + w]`,
/// the mean of `tau 1{tau in cell, J(tau) = j} / (2w)` over paths started in `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KendallHistogram {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub half_width: f64,
    /// Indexed `[m][k]`.
    pub mean: Vec<Vec<RMatrix>>,
    pub stderr: Vec<Vec<RMatrix>>,
    /// Paths per start state whose passage time falls in the cell.
    pub count: Vec<Vec<Vec<usize>>>,
}

impl KendallHistogram {
    pub fn from_passage(samples: &PassageSamples, t_grid: &[f64], half_width: f64) -> Result<Self> {
        let n = samples.n_states;
        if let Some(&t) = t_grid.iter().find(|&&t| t - half_width <= 0.0 || t + half_width > samples.horizon) {
            return Err(Error::Domain(format!("time cell around {t} leaves (0, horizon]")));
        }
        let mut starts = vec![0usize; n];
        for r in &samples.records {
            starts[r.j0] += 1;
        }
        let mut mean = Vec::new();
        let mut stderr = Vec::new();
        let mut count = Vec::new();
        for &tm in t_grid {
            let (lo, hi) = (tm - half_width, tm + half_width);
            let mut row_m = Vec::new();
            let mut row_s = Vec::new();
            let mut row_c = Vec::new();
            for k in 0..samples.levels.len() {
                let mut sum = RMatrix::zeros(n, n);
                let mut sq = RMatrix::zeros(n, n);
                let mut cnt = vec![0usize; n];
                for r in &samples.records {
                    if let Some((tau, j)) = r.hits[k] {
                        if tau >= lo && tau < hi {
                            let v = tau / (2.0 * half_width);
                            sum[(r.j0, j)] += v;
                            sq[(r.j0, j)] += v * v;
                            cnt[r.j0] += 1;
                        }
                    }
                }
                let m = RMatrix::from_fn(n, n, |i, j| sum[(i, j)] / starts[i].max(1) as f64);
                let s = RMatrix::from_fn(n, n, |i, j| {
                    let ni = starts[i].max(2) as f64;
                    ((sq[(i, j)] / ni - m[(i, j)].powi(2)).max(0.0) * ni / (ni - 1.0) / ni).sqrt()
                });
                row_m.push(m);
                row_s.push(s);
                row_c.push(cnt);
            }
            mean.push(row_m);
            stderr.push(row_s);
            count.push(row_c);
        }
        Ok(KendallHistogram {
            t_grid: t_grid.to_vec(),
            x_grid: samples.levels.clone(),
            half_width,
            mean,
            stderr,
            count,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KendallCell {
    pub t: f64,
    pub x: f64,
    /// `t P(tau_x in dt; J) / dt`, cell-averaged, from simulation.
    pub mc: RMatrix,
    pub stderr: RMatrix,
    /// `x p_t(x)`, cell-averaged.
    pub analytic: RMatrix,
    /// `max |mc - analytic| / max |analytic|`.
    pub deviation: f64,
    /// Largest entrywise `|mc - analytic| / stderr`.
    pub max_z: f64,
    /// Level too close to 0 for either side to carry mass.
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KendallReport {
    pub cells: Vec<KendallCell>,
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub max_z: f64,
}

pub const KENDALL_MIN_COUNT: usize = 100;
const VACUOUS_LEVEL: f64 = 1e-6;

/// Compares both sides of `t P(tau_x in dt; J(t)) dx = x P(X(t) in dx; J(t)) dt`
/// cell by cell. The analytic side needs a diffusion part in every state.
pub fn kendall_residual(
    model: &ValidatedModel,
    hist: &KendallHistogram,
    cfg: &QuadratureConfig,
) -> Result<KendallReport> {
    if !model.is_spectrally_negative() {
        return Err(Error::Domain("Kendall identity needs a spectrally negative model".into()));
    }
    let n = model.n_states();
    let rule = GaussLegendre::new(NonZeroUsize::new(6).unwrap());
    let mut cells = Vec::new();
    for (m, &t) in hist.t_grid.iter().enumerate() {
        for (k, &x) in hist.x_grid.iter().enumerate() {
            let mc = hist.mean[m][k].clone();
            let stderr = hist.stderr[m][k].clone();
            if x <= VACUOUS_LEVEL {
                cells.push(KendallCell {
                    t,
                    x,
                    analytic: RMatrix::zeros(n, n),
                    mc,
                    stderr,
                    deviation: 0.0,
                    max_z: 0.0,
                    vacuous: true,
                });
                continue;
            }
            for (i, &cnt) in hist.count[m][k].iter().enumerate() {
                if cnt < KENDALL_MIN_COUNT {
                    return Err(Error::InsufficientSamples {
                        cell: format!("t={t}, x={x}, start={i}"),
                        count: cnt,
                        need: KENDALL_MIN_COUNT,
                    });
                }
            }
            let (lo, hi) = (t - hist.half_width, t + hist.half_width);
            let mut analytic = RMatrix::zeros(n, n);
            for &(u, w) in rule.as_node_weight_pairs() {
                let s = 0.5 * ((hi - lo) * u + hi + lo);
                let p = density_matrix(model, s, &[x], cfg)?.values.remove(0);
                analytic += p * (x * 0.5 * w);
            }
            let diff = &mc - &analytic;
            let deviation = linalg::max_abs(&diff) / linalg::max_abs(&analytic);
            let max_z = diff.iter().zip(stderr.iter()).fold(0.0f64, |a, (d, s)| {
                a.max(if *s > 0.0 {
                    d.abs() / s
                } else if d.abs() > 1e-12 {
                    f64::INFINITY
                } else {
                    0.0
                })
            });
            cells.push(KendallCell { t, x, mc, stderr, analytic, deviation, max_z, vacuous: false });
        }
    }
    let live: Vec<&KendallCell> = cells.iter().filter(|c| !c.vacuous).collect();
    let max_deviation = live.iter().map(|c| c.deviation).fold(0.0, f64::max);
    let mean_deviation =
        if live.is_empty() { 0.0 } else { live.iter().map(|c| c.deviation).sum::<f64>() / live.len() as f64 };
    let max_z = live.iter().map(|c| c.max_z).fold(0.0, f64::max);
    Ok(KendallReport { cells, max_deviation, mean_deviation, max_z })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallotCell {
    pub x: f64,
    pub start: usize,
    pub state: usize,
    /// `P(X(t) in cell, I(t) = 0; J(t) = state)`
    pub lhs: f64,
    /// `E[X(t)/(ct); X(t) in cell, J(t) = state]`
    pub rhs: f64,
    /// Standard error of the per-path difference.
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallotReport {
    pub c: f64,
    pub t: f64,
    pub half_width: f64,
    pub cells: Vec<BallotCell>,
    pub max_z: f64,
}

/// Drift `c > 0` shared by all states when the model is `ct` minus a Markov additive subordinator.
pub fn ballot_drift(model: &ValidatedModel) -> Result<f64> {
    let c0 = model.levy(0).drift;
    if !(c0 > 0.0) {
        return Err(Error::ShapeViolation(format!("drift {c0} in state 0 is not positive")));
    }
    for i in 0..model.n_states() {
        let l = model.levy(i);
        if l.sigma2 != 0.0 {
            return Err(Error::ShapeViolation(format!("state {i} has a diffusion part")));
        }
        if (l.drift - c0).abs() > 1e-12 * c0 {
            return Err(Error::ShapeViolation(format!("drifts differ: {} in state {i} vs {c0}", l.drift)));
        }
        if l.jumps.iter().any(|j| j.law.has_positive_mass()) || model.trans_jump(i).has_positive_mass() {
            return Err(Error::ShapeViolation(format!("state {i} has upward jumps")));
        }
    }
    Ok(c0)
}

/// Ballot check `P(X(t) in dx, I(t) = 0; J(t)) = (x/(ct)) P(X(t) in dx; J(t))` on cells
/// `[x - w, x + w]` with `w = ct/40`. Both sides use the same paths; the right side
/// integrates `X/(ct)` over the cell, so the comparison carries no binning bias.
pub fn ballot_residual(model: &ValidatedModel, t: f64, x_grid: &[f64], samples: &KilledStats) -> Result<BallotReport> {
    let c0 = ballot_drift(model)?;
    if samples.q.is_some() || samples.records.first().is_some_and(|r| r.e_q != t) {
        return Err(Error::Domain(format!("ballot check needs paths observed at the fixed time {t}")));
    }
    let n = model.n_states();
    let ct = c0 * t;
    let w = ct / 40.0;
    let mut cells = Vec::new();
    for &x in x_grid {
        let (lo, hi) = (x - w, x + w);
        for i in 0..n {
            let mut acc = vec![(0.0f64, 0.0f64, 0.0f64, 0.0f64); n];
            let mut m = 0usize;
            for r in samples.records.iter().filter(|r| r.j0 == i) {
                m += 1;
                // the atom at ct lies inside the closed cell
                if r.x >= lo && (r.x < hi || (r.x <= hi && hi >= ct)) {
                    let l = if r.i >= 0.0 { 1.0 } else { 0.0 };
                    let rr = r.x / ct;
                    let d = l - rr;
                    let a = &mut acc[r.j_eq];
                    a.0 += l;
                    a.1 += rr;
                    a.2 += d;
                    a.3 += d * d;
                }
            }
            if m == 0 {
                return Err(Error::EmptyCell { state: i });
            }
            let mf = m as f64;
            for (j, (l, rr, d, d2)) in acc.into_iter().enumerate() {
                let mean = d / mf;
                let var = if m > 1 { ((d2 - mf * mean * mean) / (mf - 1.0)).max(0.0) } else { 0.0 };
                let stderr = (var / mf).sqrt();
                let z = if stderr > 0.0 {
                    mean / stderr
                } else if mean.abs() > 1e-12 {
                    f64::INFINITY
                } else {
                    0.0
                };
                cells.push(BallotCell { x, start: i, state: j, lhs: l / mf, rhs: rr / mf, stderr, z });
            }
        }
    }
    let max_z = cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    Ok(BallotReport { c: c0, t, half_width: w, cells, max_z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::{sup_factor, Conditioning};
    use crate::model::{builtin, validate, LevyComponent, MapSpec};
    use rand::{Rng, SeedableRng};

    fn model(name: &str) -> ValidatedModel {
        validate(builtin(name).unwrap()).unwrap()
    }

    fn bm(drift: f64, sigma2: f64) -> ValidatedModel {
        validate(MapSpec::scalar(LevyComponent::brownian(drift, sigma2))).unwrap()
    }

    #[test]
    fn frullani_examples() {
        let z = frullani_expm(&RMatrix::zeros(2, 2), 1.0);
        // a zero matrix has a repeated eigenvalue
        assert!(matches!(z, Err(Error::DefectiveMatrix { .. })));
        let one = frullani_expm(&RMatrix::from_element(1, 1, 0.0), 1.0).unwrap();
        assert!((one[(0, 0)] - 1.0).abs() < 1e-15);
        let half = frullani_expm(&RMatrix::from_element(1, 1, 1.0), 1.0).unwrap();
        assert!((half[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(matches!(frullani_expm(&RMatrix::from_element(1, 1, -1.0), 1.0), Err(Error::SingularShift(_))));
    }

    #[test]
    fn frullani_matches_linear_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = RMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3));
            let d = RMatrix::from_diagonal(&nalgebra::DVector::from_fn(3, |k, _| {
                0.2 + 0.6 * k as f64 + rng.random_range(0.0..0.1)
            }));
            let a = &s * d * linalg::inverse(&s, "s").unwrap();
            let want = linalg::inverse(&(RMatrix::identity(3, 3) + &a), "qI+A").unwrap();
            let got = frullani_expm(&a, 1.0).unwrap();
            assert!(linalg::max_abs(&(got * (RMatrix::identity(3, 3) + &a) - RMatrix::identity(3, 3))) < 1e-8);
            assert!(linalg::max_abs(&(frullani_expm(&a, 1.0).unwrap() - want)) < 1e-8);
        }
    }

    #[test]
    fn standard_normal_density() {
        let cfg = QuadratureConfig::default();
        let d = density_matrix(&bm(0.0, 1.0), 1.0, &[0.0, 1.0], &cfg).unwrap();
        assert!((d.values[0][(0, 0)] - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-6);
        assert!((d.values[1][(0, 0)] - (-0.5f64).exp() / (2.0 * PI).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn density_needs_diffusion() {
        let cfg = QuadratureConfig::default();
        assert!(matches!(density_matrix(&model("MODEL-C"), 1.0, &[0.0], &cfg), Err(Error::NoDensity { state: 0 })));
    }

    #[test]
    fn density_rows_integrate_to_one() {
        let cfg = QuadratureConfig::default();
        for name in ["MODEL-A", "MODEL-B", "MODEL-D"] {
            let m = model(name);
            let dx = 0.02;
            let xs: Vec<f64> = (0..=1500).map(|k| -15.0 + k as f64 * dx).collect();
            let d = density_matrix(&m, 1.0, &xs, &cfg).unwrap();
            assert!(d.values.iter().all(|v| v.iter().all(|&p| p >= -1e-9)));
            let total = d.values.iter().fold(RMatrix::zeros(2, 2), |a, b| a + b) * dx;
            for s in linalg::row_sums(&total) {
                assert!((s - 1.0).abs() < 1e-4, "{name}: {s}");
            }
        }
    }

    #[test]
    fn model_b_marginal_is_symmetric() {
        let cfg = QuadratureConfig::default();
        let m = model("MODEL-B");
        let xs = [0.3, 1.0, 2.2];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let a = density_matrix(&m, 0.8, &xs, &cfg).unwrap();
        let b = density_matrix(&m, 0.8, &neg, &cfg).unwrap();
        let pi = m.pi();
        for (p, q) in a.values.iter().zip(&b.values) {
            let f = |v: &RMatrix| (0..2).map(|i| (0..2).map(|j| pi[i] * v[(i, j)]).sum::<f64>()).sum::<f64>();
            assert!((f(p) - f(q)).abs() < 1e-6);
        }
    }

    #[test]
    fn half_line_sides() {
        let cfg = QuadratureConfig::default();
        let b = bm(0.0, 1.0);
        let h = half_line_transform(&b, 1.0, 0.0, 0.0, HalfLine::NonNeg, &cfg).unwrap();
        assert!((h[(0, 0)] - c(0.5)).norm() < 1e-5);
        for (name, alpha, t) in
            [("MODEL-B", 1.0, 0.7), ("MODEL-A", 0.0, 1.0), ("MODEL-D", 2.0, 0.3), ("MODEL-A", -1.5, 2.0)]
        {
            let m = model(name);
            let p = half_line_transform(&m, t, alpha, 0.0, HalfLine::NonNeg, &cfg).unwrap();
            let n = half_line_transform(&m, t, alpha, 0.0, HalfLine::Neg, &cfg).unwrap();
            let full = linalg::expm_c(&(m.eval(Complex64::new(0.0, alpha)).unwrap() * c(t)));
            assert!(linalg::max_abs_c(&(p + n - full)) < 1e-5, "{name}");
        }
    }

    #[test]
    fn commutator_examples() {
        let cfg = QuadratureConfig::default();
        assert_eq!(commute_residual(&bm(0.3, 1.0), 1.0, 0.5, 1.0, &cfg).unwrap(), 0.0);
        let r = commute_residual(&model("MODEL-A"), 1.0, 1.0, 1.0, &cfg).unwrap();
        assert!(r.is_finite() && r >= 0.0);
    }

    #[test]
    fn rogozin_trivial_and_scalar() {
        let cfg = QuadratureConfig::default();
        let m = model("MODEL-A");
        let f = rogozin_factor_ungated(&m, 1.0, 0.0, 0.0, Side::Sup, &cfg).unwrap();
        assert!(linalg::max_abs(&(f - resolvent_i(&m, 1.0).unwrap())) < 1e-12);
        let b = bm(0.0, 1.0);
        let s = rogozin_factor(&b, 0.5, 1.0, 0.0, Side::Sup, &cfg).unwrap();
        assert!((s[(0, 0)] - 0.5).abs() < 1e-3);
        // scalar factors against the Wiener-Hopf formulas, including time weights
        let b = bm(0.4, 1.5);
        for (q, a, xi) in [(1.0, 0.5, 0.25), (0.3, 1.2, 0.0)] {
            let s = rogozin_factor(&b, q, a, xi, Side::Sup, &cfg).unwrap()[(0, 0)];
            let want = sup_factor(&b, q, a, xi, Conditioning::AtEq).unwrap()[(0, 0)];
            assert!((s - want).abs() < 1e-6, "{s} {want}");
            let i = rogozin_factor(&b, q, a, xi, Side::Inf, &cfg).unwrap()[(0, 0)];
            let iwant =
                crate::ladder::WienerHopf::new(&b).inf_factor_continued(q, a, xi, Conditioning::AtEq).unwrap()[(0, 0)];
            assert!((i - iwant).abs() < 1e-6, "{i} {iwant}");
        }
    }

    #[test]
    fn kendall_assumption_examples() {
        let one = kendall_assumption_check(&bm(1.0, 1.0), &[2.0]).unwrap();
        assert!(one.independent && one.determinant > 0.0);
        let a = kendall_assumption_check(&model("MODEL-A"), &[0.5, 2.0]).unwrap();
        assert!(a.independent, "{a:?}");
        assert!(kendall_assumption_check(&model("MODEL-A"), &[1.0, 1.0]).is_err());
        assert!(kendall_assumption_check(&model("MODEL-A"), &[1.0]).is_err());
    }

    #[test]
    fn ballot_shape_check() {
        assert_eq!(ballot_drift(&model("MODEL-C")).unwrap(), 2.0);
        for name in ["MODEL-A", "MODEL-B", "MODEL-D"] {
            assert!(matches!(ballot_drift(&model(name)), Err(Error::ShapeViolation(_))));
        }
    }
}
