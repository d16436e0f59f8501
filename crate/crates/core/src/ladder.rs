//! Ladder matrices of a spectrally negative MAP: the right-half-plane roots of
//! `det(F(z) - qI)`, `Xi(q, alpha)`, `Lambda(q)`, up-crossing transforms and
//! the Wiener-Hopf factors of the killed supremum and infimum.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;

use crate::cumulant::{perron, phi_inverse, Cumulant};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, RMatrix};
use crate::transform::{reverse, tilt, ReversedView};

const ROOT_GAP: f64 = 1e-6;
const NULL_RESIDUAL: f64 = 1e-8;

/// Which epoch the modulating state is read at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Conditioning {
    /// At the time of the extremum (`G-bar` for the supremum, `G` for the infimum).
    AtG,
    /// At the killing time.
    AtEq,
}

/// `I(q) = q (qI - Q)^-1`, the law of `J(e_q)`.
pub fn resolvent_i<C: Cumulant>(model: &C, q: f64) -> Result<RMatrix> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("resolvent needs q > 0, got {q}")));
    }
    let gen = model.generator();
    let n = gen.nrows();
    let a = RMatrix::identity(n, n) * q - gen;
    linalg::solve(&a, &(RMatrix::identity(n, n) * q), "qI - Q")
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhRoot {
    pub zeta: Complex64,
    /// Unit null vector of `F(zeta) - qI`.
    pub u: CVector,
}

#[derive(Debug, Clone)]
pub struct LadderFactors {
    pub q: f64,
    pub phi_q: f64,
    pub roots: Vec<WhRoot>,
    /// `h(Phi(q))`.
    pub h_phi: Vec<f64>,
    pub xi0: RMatrix,
    pub lambda: RMatrix,
    /// Half-width of the square on which the root count was certified.
    pub contour_radius: f64,
}

fn shifted<C: Cumulant>(model: &C, z: Complex64, q: f64) -> Result<CMatrix> {
    let f = model.eval(z)?;
    let n = f.nrows();
    Ok(f - CMatrix::identity(n, n) * c(q))
}

fn det_at<C: Cumulant>(model: &C, z: Complex64, q: f64) -> Result<Complex64> {
    Ok(linalg::determinant_c(&shifted(model, z, q)?))
}

/// `d/dz log det(F(z) - qI) = tr((F(z) - qI)^-1 F'(z))`.
fn log_det_deriv<C: Cumulant>(model: &C, z: Complex64, q: f64) -> Result<Complex64> {
    let m = shifted(model, z, q)?;
    let d = model.eval_deriv(z)?;
    let x = linalg::solve_c(&m, &d, "det(F(z) - qI)")?;
    Ok(x.trace())
}

/// Winding of `det(F(z) - qI)` along the boundary of `[0, r] x [-r, r]`.
fn winding_count<C: Cumulant>(model: &C, q: f64, r: f64) -> Result<i64> {
    let corners = [
        Complex64::new(0.0, -r),
        Complex64::new(r, -r),
        Complex64::new(r, r),
        Complex64::new(0.0, r),
        Complex64::new(0.0, -r),
    ];
    let mut total = 0.0;
    for w in corners.windows(2) {
        let pieces = 64;
        let mut a = w[0];
        let mut da = det_at(model, a, q)?;
        for k in 1..=pieces {
            let b = w[0] + (w[1] - w[0]) * (k as f64 / pieces as f64);
            let db = det_at(model, b, q)?;
            total += arg_change(model, q, a, da, b, db, 0)?;
            a = b;
            da = db;
        }
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

fn arg_change<C: Cumulant>(
    model: &C,
    q: f64,
    a: Complex64,
    da: Complex64,
    b: Complex64,
    db: Complex64,
    depth: u32,
) -> Result<f64> {
    let whole = (db / da).arg();
    let m = (a + b) * 0.5;
    let dm = det_at(model, m, q)?;
    let left = (dm / da).arg();
    let right = (db / dm).arg();
    if depth >= 40 {
        if dm.norm() == 0.0 {
            return Err(Error::Spectral(format!("root on the counting contour near {m}")));
        }
        return Ok(left + right);
    }
    if whole.abs() < 0.5 && (left + right - whole).abs() < 1e-9 {
        return Ok(whole);
    }
    Ok(arg_change(model, q, a, da, m, dm, depth + 1)? + arg_change(model, q, m, dm, b, db, depth + 1)?)
}

/// Newton on `det(F(z) - qI) / prod (z - z_k)` from `seed`, then undeflated polishing.
fn newton_root<C: Cumulant>(model: &C, q: f64, seed: Complex64, known: &[Complex64]) -> Option<Complex64> {
    let (lo, _) = model.domain();
    let mut z = seed;
    let mut converged = false;
    for _ in 0..200 {
        let l = log_det_deriv(model, z, q).ok()?;
        let defl: Complex64 = known.iter().map(|k| 1.0 / (z - k)).sum();
        let g = l - defl;
        if !g.is_finite() || g.norm() == 0.0 {
            return None;
        }
        let mut step = -1.0 / g;
        let cap = 0.5 * (1.0 + z.norm());
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        z += step;
        if !(z.re > lo) || !z.is_finite() {
            return None;
        }
        if step.norm() < 1e-14 * (1.0 + z.norm()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    for _ in 0..3 {
        let l = log_det_deriv(model, z, q).ok()?;
        let step = -1.0 / l;
        if !step.is_finite() {
            break;
        }
        z += step;
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    Some(z)
}

/// Roots of `det(F(z) - qI)` in `Re z > 0` with unit null vectors, certified by
/// an argument-principle count; `Phi(q)` comes first.
pub fn wh_roots<C: Cumulant>(model: &C, q: f64) -> Result<Vec<WhRoot>> {
    Ok(find_roots(model, q)?.0)
}

fn find_roots<C: Cumulant>(model: &C, q: f64) -> Result<(Vec<WhRoot>, f64, f64)> {
    if !model.spectrally_negative() {
        return Err(Error::Domain("ladder matrices need a spectrally negative model".into()));
    }
    if !(q > 0.0) {
        return Err(Error::Domain(format!("ladder matrices need q > 0, got {q}")));
    }
    let n = model.dim();
    let phi = phi_inverse(model, q)?;

    // exactly n roots lie in Re z > 0; grow the box until it holds them all,
    // a stalled count is not enough (one small-variance state can put a root far out)
    let mut r = 2.0 * (phi + 1.0);
    let mut count = winding_count(model, q, r)?;
    while count != n as i64 {
        r *= 2.0;
        if r > 1e6 {
            return Err(Error::RootCountMismatch { expected: n, found: 0, counted: count, radius: r });
        }
        count = winding_count(model, q, r)?;
    }
    let r = 2.0 * r;
    count = winding_count(model, q, r)?;
    if count != n as i64 {
        return Err(Error::RootCountMismatch { expected: n, found: 0, counted: count, radius: r });
    }

    let scale = 1.0 + phi;
    let mut zs: Vec<Complex64> = Vec::with_capacity(n);
    let push = |z: Complex64, zs: &mut Vec<Complex64>| {
        if z.re <= 1e-12 || zs.iter().any(|k| (k - z).norm() < 1e-9 * scale) {
            return;
        }
        if z.im.abs() < 1e-10 * (1.0 + z.norm()) {
            zs.push(c(z.re));
        } else {
            zs.push(z);
            zs.push(z.conj());
        }
    };
    if let Some(z) = newton_root(model, q, c(phi), &[]) {
        push(z, &mut zs);
    }
    let grid = 9;
    'seeds: for a in 1..=grid {
        for b in 0..=grid {
            if zs.len() >= n {
                break 'seeds;
            }
            let seed = Complex64::new(r * a as f64 / grid as f64, r * b as f64 / grid as f64);
            if let Some(z) = newton_root(model, q, seed, &zs) {
                push(z, &mut zs);
            }
        }
    }
    if zs.len() != n {
        return Err(Error::RootCountMismatch { expected: n, found: zs.len(), counted: count, radius: r });
    }
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            min_gap = min_gap.min((zs[i] - zs[j]).norm());
        }
    }
    if min_gap < ROOT_GAP {
        return Err(Error::DefectiveRoots { min_gap });
    }
    let mut roots = Vec::with_capacity(n);
    for z in zs {
        let m = shifted(model, z, q)?;
        let (u, _) = linalg::null_vector_c(&m);
        let res = (&m * &u).iter().fold(0.0f64, |a, x| a.max(x.norm()));
        if res > NULL_RESIDUAL * (1.0 + linalg::max_abs_c(&m)) {
            return Err(Error::DefectiveRoots { min_gap });
        }
        roots.push(WhRoot { zeta: z, u });
    }
    Ok((roots, phi, r))
}

/// Root data, `Xi(q, 0) = U diag(zeta) U^-1` and `Lambda(q)` for one `q`.
pub fn ladder_factors<C: Cumulant>(model: &C, q: f64) -> Result<LadderFactors> {
    let (roots, phi_q, contour_radius) = find_roots(model, q)?;
    let n = roots.len();
    let mut u = CMatrix::zeros(n, n);
    for (k, r) in roots.iter().enumerate() {
        u.set_column(k, &r.u);
    }
    let zeta: Vec<Complex64> = roots.iter().map(|r| r.zeta).collect();
    let uinv = linalg::inverse_c(&u, "matrix of null vectors")?;
    let xi0 = linalg::real_part(&(&u * linalg::cdiag(&zeta) * uinv), 1e-8, "Xi(q, 0)")?;
    let h_phi = perron(model, phi_q)?.h;
    let lambda = RMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { phi_q } else { 0.0 };
        d - xi0[(i, j)] * h_phi[j] / h_phi[i]
    });
    Ok(LadderFactors { q, phi_q, roots, h_phi, xi0, lambda, contour_radius })
}

impl LadderFactors {
    pub fn xi(&self, alpha: f64) -> RMatrix {
        let n = self.xi0.nrows();
        &self.xi0 + RMatrix::identity(n, n) * alpha
    }

    /// `max_k |F_{Phi(q)}(mu_k) r_k|` over eigenpairs `(mu_k, r_k)` of `-Lambda(q)`,
    /// with `r_k` of unit norm.
    pub fn lambda_equation_residual<C: Cumulant>(&self, model: &C) -> Result<f64> {
        let tilted = tilt(model, self.phi_q)?;
        let (mu, r) = linalg::eig_decompose(&linalg::to_complex(&(-&self.lambda)), 1e-12)?;
        let mut worst = 0.0f64;
        for (k, m) in mu.iter().enumerate() {
            let col = r.column(k).into_owned();
            let res = tilted.eval(*m)? * &col;
            worst = worst.max(res.norm() / col.norm());
        }
        Ok(worst)
    }
}

pub fn xi_matrix<C: Cumulant>(model: &C, q: f64, alpha: f64) -> Result<RMatrix> {
    Ok(ladder_factors(model, q)?.xi(alpha))
}

pub fn lambda_matrix<C: Cumulant>(model: &C, q: f64) -> Result<RMatrix> {
    Ok(ladder_factors(model, q)?.lambda)
}

type Slot = Arc<OnceLock<Result<Arc<LadderFactors>>>>;

/// Ladder factors of one model, computed at most once per `q`.
pub struct Ladder<C> {
    model: C,
    cache: RwLock<HashMap<u64, Slot>>,
}

impl<C: Cumulant> Ladder<C> {
    pub fn new(model: C) -> Self {
        Ladder { model, cache: RwLock::new(HashMap::new()) }
    }

    pub fn model(&self) -> &C {
        &self.model
    }

    pub fn factors(&self, q: f64) -> Result<Arc<LadderFactors>> {
        let key = q.to_bits();
        let found = self.cache.read().expect("ladder cache poisoned").get(&key).cloned();
        let slot = match found {
            Some(s) => s,
            None => self.cache.write().expect("ladder cache poisoned").entry(key).or_default().clone(),
        };
        slot.get_or_init(|| ladder_factors(&self.model, q).map(Arc::new)).clone()
    }

    pub fn xi(&self, q: f64, alpha: f64) -> Result<RMatrix> {
        Ok(self.factors(q)?.xi(alpha))
    }

    /// `E[e^{-(q+xi) tau_x}; tau_x < inf, J(tau_x)] = exp(-Xi(q + xi, 0) x)`.
    pub fn up_crossing(&self, q: f64, xi: f64, x: f64) -> Result<RMatrix> {
        if !(xi >= 0.0 && x >= 0.0) {
            return Err(Error::Domain(format!("up-crossing needs xi, x >= 0, got xi={xi}, x={x}")));
        }
        Ok(linalg::expm(&(self.xi(q + xi, 0.0)? * -x)))
    }

    /// `E[e^{-alpha S(e_q) - xi Gbar(e_q)}; J(.)]`.
    pub fn sup_factor(&self, q: f64, alpha: f64, xi: f64, cond: Conditioning) -> Result<RMatrix> {
        if !(alpha >= 0.0 && xi >= 0.0) {
            return Err(Error::Domain(format!("sup factor needs alpha, xi >= 0, got alpha={alpha}, xi={xi}")));
        }
        let xi0 = self.factors(q)?.xi0.clone();
        let lead = self.xi(q + xi, alpha)?;
        let rhs = match cond {
            Conditioning::AtEq => &xi0 * resolvent_i(&self.model, q)?,
            Conditioning::AtG => linalg::diag(&linalg::row_sums(&(&xi0 * resolvent_i(&self.model, q)?))),
        };
        linalg::solve(&lead, &rhs, "Xi(q + xi, alpha)")
    }
}

/// Forward and reversed ladders of one model; the infimum factors need both.
pub struct WienerHopf<C: Cumulant + Clone> {
    forward: Ladder<C>,
    reversed: Ladder<ReversedView<C>>,
}

impl<C: Cumulant + Clone> WienerHopf<C> {
    pub fn new(model: C) -> Self {
        WienerHopf { reversed: Ladder::new(reverse(model.clone())), forward: Ladder::new(model) }
    }

    pub fn forward(&self) -> &Ladder<C> {
        &self.forward
    }

    pub fn reversed(&self) -> &Ladder<ReversedView<C>> {
        &self.reversed
    }

    pub fn sup_factor(&self, q: f64, alpha: f64, xi: f64, cond: Conditioning) -> Result<RMatrix> {
        self.forward.sup_factor(q, alpha, xi, cond)
    }

    /// `E[e^{alpha I(e_q) - xi G(e_q)}; J(.)]` for `0 <= alpha < Phi(q + xi)`.
    ///
    /// Read at `e_q`:
    /// `q ((q+xi)I - F(alpha))^-1 D_pi^-1 Xi^(q+xi, -alpha)^T Xi^(q,0)^-T D_pi`.
    /// Read at `G`, the last factor `Xi^(q,0)^-T D_pi` becomes
    /// `diag(pi Xi^(q,0)^-1)`.
    pub fn inf_factor(&self, q: f64, alpha: f64, xi: f64, cond: Conditioning) -> Result<RMatrix> {
        if !(xi >= 0.0) {
            return Err(Error::Domain(format!("inf factor needs xi >= 0, got {xi}")));
        }
        let phi = self.reversed.factors(q + xi)?.phi_q;
        if !(alpha >= 0.0 && alpha < phi) {
            return Err(Error::DomainViolation { arg: alpha, lo: 0.0, hi: phi, state: 0 });
        }
        self.inf_factor_continued(q, alpha, xi, cond)
    }

    /// The infimum factor formula without the `alpha < Phi(q + xi)` guard. The
    /// transform is analytic in `alpha >= 0` and the formula continues it past the
    /// removable singularity at `kappa(alpha) = q + xi`.
    pub fn inf_factor_continued(&self, q: f64, alpha: f64, xi: f64, cond: Conditioning) -> Result<RMatrix> {
        let model = self.forward.model();
        let n = model.dim();
        let rf = self.reversed.factors(q + xi)?;
        let pi = model.stationary();
        let f = model.eval_real(alpha)?;
        let shiftf = RMatrix::identity(n, n) * (q + xi) - f;
        let xih = rf.xi(-alpha);
        let inner = RMatrix::from_fn(n, n, |i, j| xih[(j, i)] / pi[i]);
        let xih0_inv = linalg::inverse(&self.reversed.factors(q)?.xi0, "Xi^(q, 0)")?;
        let tail = match cond {
            Conditioning::AtEq => RMatrix::from_fn(n, n, |i, j| xih0_inv[(j, i)] * pi[j]),
            Conditioning::AtG => {
                let w: Vec<f64> = (0..n).map(|j| (0..n).map(|i| pi[i] * xih0_inv[(i, j)]).sum()).collect();
                linalg::diag(&w)
            }
        };
        let rhs = inner * tail * q;
        linalg::solve(&shiftf, &rhs, "(q + xi)I - F(alpha)")
    }

    /// Residual of `E(e^{alpha I(e_q)}; J(e_q))^T (F(alpha) - qI)^T =
    /// q D_v [alpha (Phi(q) I - Lambda^(q))^-1 - I] D_v^-1` with `v = v(Phi(q))`.
    pub fn key_identity_residual(&self, q: f64, alpha: f64) -> Result<f64> {
        let model = self.forward.model();
        let n = model.dim();
        let e = self.inf_factor_continued(q, alpha, 0.0, Conditioning::AtEq)?;
        let f = model.eval_real(alpha)?;
        let lhs = e.transpose() * (f - RMatrix::identity(n, n) * q).transpose();
        let rf = self.reversed.factors(q)?;
        let v = perron(model, rf.phi_q)?.v;
        let m = RMatrix::identity(n, n) * rf.phi_q - &rf.lambda;
        let inner = linalg::inverse(&m, "Phi(q) I - Lambda^(q)")? * alpha - RMatrix::identity(n, n);
        let rhs = RMatrix::from_fn(n, n, |i, j| q * v[i] * inner[(i, j)] / v[j]);
        Ok(linalg::max_abs(&(lhs - rhs)))
    }
}

pub fn up_crossing<C: Cumulant>(model: &C, q: f64, xi: f64, x: f64) -> Result<RMatrix> {
    Ladder::new(model).up_crossing(q, xi, x)
}

pub fn sup_factor<C: Cumulant>(model: &C, q: f64, alpha: f64, xi: f64, cond: Conditioning) -> Result<RMatrix> {
    Ladder::new(model).sup_factor(q, alpha, xi, cond)
}

pub fn inf_factor<C: Cumulant>(model: &C, q: f64, alpha: f64, xi: f64, cond: Conditioning) -> Result<RMatrix> {
    WienerHopf::new(model).inf_factor(q, alpha, xi, cond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulant::{kappa, psi_eval};
    use crate::model::{builtin, validate, LevyComponent, MapSpec, ValidatedModel};

    fn model(name: &str) -> ValidatedModel {
        validate(builtin(name).unwrap()).unwrap()
    }

    fn bm(drift: f64, sigma2: f64) -> ValidatedModel {
        validate(MapSpec::scalar(LevyComponent::brownian(drift, sigma2))).unwrap()
    }

    fn close(a: &RMatrix, b: &RMatrix, tol: f64) -> bool {
        linalg::max_abs(&(a - b)) < tol
    }

    #[test]
    fn resolvent_examples() {
        assert_eq!(resolvent_i(&bm(0.0, 1.0), 0.7).unwrap()[(0, 0)], 1.0);
        let r = resolvent_i(&model("MODEL-A"), 1.0).unwrap();
        assert!(close(&r, &RMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.5, 0.5]), 1e-15));
        for q in [0.1, 1.0, 7.0] {
            let r = resolvent_i(&model("MODEL-C"), q).unwrap();
            assert!(linalg::row_sums(&r).iter().all(|s| (s - 1.0).abs() < 1e-12));
            assert!(r.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn scalar_root() {
        let roots = wh_roots(&bm(0.0, 1.0), 2.0).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].zeta - c(2.0)).norm() < 1e-12);
        assert!((roots[0].u[0] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn phi_is_a_root_with_h_as_null_vector() {
        let m = model("MODEL-A");
        let lf = ladder_factors(&m, 1.0).unwrap();
        let phi = lf.phi_q;
        assert!((kappa(&m, phi).unwrap() - 1.0).abs() < 1e-10);
        assert!((phi - 0.7728655578293109).abs() < 1e-10);
        let r = lf.roots.iter().find(|r| (r.zeta - c(phi)).norm() < 1e-9).expect("Phi(q) among roots");
        let h = &lf.h_phi;
        let ratio = r.u[1] / r.u[0];
        assert!((ratio - c(h[1] / h[0])).norm() < 1e-8);
    }

    #[test]
    fn model_c_has_two_certified_roots() {
        let m = model("MODEL-C");
        let lf = ladder_factors(&m, 1.0).unwrap();
        assert_eq!(lf.roots.len(), 2);
        assert_eq!(winding_count(&m, 1.0, lf.contour_radius).unwrap(), 2);
        for r in &lf.roots {
            assert!(r.zeta.re > 0.0);
            let res = shifted(&m, r.zeta, 1.0).unwrap() * &r.u;
            assert!(res.norm() < 1e-8);
        }
    }

    #[test]
    fn xi_matrix_model_a() {
        let m = model("MODEL-A");
        let xi = xi_matrix(&m, 1.0, 0.0).unwrap();
        let want = RMatrix::from_row_slice(2, 2, &[0.92410854, -0.2401394, -0.92410854, 2.2401394]);
        assert!(close(&xi, &want, 1e-7));
        let xa = xi_matrix(&m, 1.0, 0.4).unwrap();
        assert_eq!(xa, &xi + RMatrix::identity(2, 2) * 0.4);
    }

    #[test]
    fn xi_structure_and_eigen() {
        for name in ["MODEL-A", "MODEL-B", "MODEL-C"] {
            let m = model(name);
            for q in [0.3, 1.0, 4.0] {
                let lf = ladder_factors(&m, q).unwrap();
                for r in &lf.roots {
                    let lhs = linalg::to_complex(&lf.xi0) * &r.u;
                    assert!((lhs - &r.u * r.zeta).norm() < 1e-8, "{name} q={q}");
                }
                let h = &lf.h_phi;
                let hv = nalgebra::DVector::from_column_slice(h);
                assert!((&lf.xi0 * &hv - &hv * lf.phi_q).amax() < 1e-8);
                // Xi(q, alpha) = D_h ((Phi + alpha) I - Lambda) D_h^-1
                let alpha = 0.3;
                let rebuilt = RMatrix::from_fn(2, 2, |i, j| {
                    let d = if i == j { lf.phi_q + alpha } else { 0.0 };
                    h[i] * (d - lf.lambda[(i, j)]) / h[j]
                });
                assert!(close(&rebuilt, &lf.xi(alpha), 1e-8));
            }
        }
    }

    #[test]
    fn lambda_is_a_generator() {
        for name in ["MODEL-A", "MODEL-B", "MODEL-C"] {
            let m = model(name);
            for q in [0.2, 1.0, 3.0] {
                let l = lambda_matrix(&m, q).unwrap();
                assert!(linalg::row_sums(&l).iter().all(|s| s.abs() < 1e-8), "{name} q={q}");
                assert!(l[(0, 1)] >= -1e-12 && l[(1, 0)] >= -1e-12);
            }
        }
        assert!(lambda_matrix(&bm(0.5, 1.0), 1.0).unwrap()[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn lambda_equation_model_a() {
        let m = model("MODEL-A");
        let lf = ladder_factors(&m, 1.0).unwrap();
        assert!(lf.lambda_equation_residual(&m).unwrap() < 1e-7);
    }

    #[test]
    fn scalar_xi_and_up_crossing() {
        let b = bm(1.0, 1.0);
        let phi = phi_inverse(&b, 1.5).unwrap();
        assert!((xi_matrix(&b, 1.5, 0.25).unwrap()[(0, 0)] - phi - 0.25).abs() < 1e-12);
        let phi2 = phi_inverse(&b, 2.0).unwrap();
        let u = up_crossing(&b, 1.5, 0.5, 0.8).unwrap()[(0, 0)];
        assert!((u - (-phi2 * 0.8).exp()).abs() < 1e-12);
        assert!(close(&up_crossing(&model("MODEL-A"), 1.0, 0.0, 0.0).unwrap(), &RMatrix::identity(2, 2), 1e-15));
    }

    #[test]
    fn up_crossing_is_monotone() {
        let m = model("MODEL-C");
        let lad = Ladder::new(&m);
        let mut prev = lad.up_crossing(1.0, 0.0, 0.0).unwrap();
        for k in 1..10 {
            let cur = lad.up_crossing(1.0, 0.0, 0.2 * k as f64).unwrap();
            assert!(cur.iter().all(|a| *a >= 0.0));
            // off-diagonal entries start at 0 and rise; the passage probability falls
            let (rc, rp) = (linalg::row_sums(&cur), linalg::row_sums(&prev));
            assert!(rc.iter().zip(&rp).all(|(a, b)| *a <= b + 1e-12));
            let larger_q = lad.up_crossing(2.0, 0.0, 0.2 * k as f64).unwrap();
            assert!(larger_q.iter().zip(cur.iter()).all(|(a, b)| *a <= b + 1e-12));
            prev = cur;
        }
    }

    #[test]
    fn scalar_sup_and_inf_formulas() {
        let b = bm(0.0, 1.0);
        let s = sup_factor(&b, 0.5, 1.0, 0.0, Conditioning::AtEq).unwrap()[(0, 0)];
        assert!((s - 0.5).abs() < 1e-12);
        let b = bm(0.4, 1.5);
        let (q, alpha, xi) = (0.8, 0.3, 0.6);
        let pq = phi_inverse(&b, q).unwrap();
        let pqx = phi_inverse(&b, q + xi).unwrap();
        let psi = psi_eval(b.levy(0), c(alpha)).unwrap().re;
        let want = q * (pqx - alpha) / (pq * (q + xi - psi));
        for cond in [Conditioning::AtEq, Conditioning::AtG] {
            assert!((inf_factor(&b, q, alpha, xi, cond).unwrap()[(0, 0)] - want).abs() < 1e-10);
            let s = sup_factor(&b, q, alpha, xi, cond).unwrap()[(0, 0)];
            assert!((s - pq / (pqx + alpha)).abs() < 1e-10);
        }
    }

    #[test]
    fn transforms_of_one() {
        let m = model("MODEL-A");
        let wh = WienerHopf::new(&m);
        let i = resolvent_i(&m, 1.0).unwrap();
        assert!(close(&wh.sup_factor(1.0, 0.0, 0.0, Conditioning::AtEq).unwrap(), &i, 1e-8));
        assert!(close(&wh.inf_factor(1.0, 0.0, 0.0, Conditioning::AtEq).unwrap(), &i, 1e-8));
        for name in ["MODEL-A", "MODEL-B", "MODEL-C"] {
            let m = model(name);
            let wh = WienerHopf::new(&m);
            let s = wh.sup_factor(1.0, 0.0, 0.0, Conditioning::AtG).unwrap();
            assert!(linalg::row_sums(&s).iter().all(|x| (x - 1.0).abs() < 1e-8));
            let s = wh.inf_factor(1.0, 0.0, 0.0, Conditioning::AtG).unwrap();
            assert!(linalg::row_sums(&s).iter().all(|x| (x - 1.0).abs() < 1e-8), "{name}");
        }
    }

    #[test]
    fn sup_factor_consistency() {
        let m = model("MODEL-C");
        let lad = Ladder::new(&m);
        let (q, a, x) = (1.0, 0.6, 0.4);
        let xi0 = lad.xi(q, 0.0).unwrap();
        let i = resolvent_i(&m, q).unwrap();
        let d = linalg::diag(&linalg::row_sums(&xi0));
        let cmat = linalg::inverse(&d, "diag").unwrap() * &xi0 * &i;
        let at_g = lad.sup_factor(q, a, x, Conditioning::AtG).unwrap();
        let at_eq = lad.sup_factor(q, a, x, Conditioning::AtEq).unwrap();
        assert!(close(&at_eq, &(at_g * cmat), 1e-9));
        assert!(close(&linalg::diag(&linalg::row_sums(&(&xi0 * &i))), &d, 1e-12));
    }

    #[test]
    fn key_identity_model_a() {
        let m = model("MODEL-A");
        let wh = WienerHopf::new(&m);
        for alpha in [0.2, 0.5, 0.8] {
            assert!(wh.key_identity_residual(1.0, alpha).unwrap() < 1e-6);
        }
    }

    #[test]
    fn inf_factor_domain() {
        let m = model("MODEL-A");
        let phi = phi_inverse(&reverse(&m), 1.5).unwrap();
        assert!(matches!(inf_factor(&m, 1.0, phi + 0.01, 0.5, Conditioning::AtEq), Err(Error::DomainViolation { .. })));
        assert!(kappa(&m, phi).unwrap() - 1.5 < 1e-10);
    }

    #[test]
    fn cache_builds_once() {
        let m = model("MODEL-A");
        let lad = Ladder::new(&m);
        let a = lad.factors(1.0).unwrap();
        let b = lad.factors(1.0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        std::thread::scope(|s| {
            let hs: Vec<_> = (0..4).map(|_| s.spawn(|| lad.factors(2.0).unwrap())).collect();
            let got: Vec<_> = hs.into_iter().map(|h| h.join().unwrap()).collect();
            assert!(got.windows(2).all(|w| Arc::ptr_eq(&w[0], &w[1])));
        });
    }

    #[test]
    fn non_spectrally_negative_is_rejected() {
        assert!(wh_roots(&model("MODEL-D"), 1.0).is_err());
    }
}
