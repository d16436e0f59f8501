//! Matrix cumulant `F(alpha)` with `E[e^{alpha X(t)}; J(t)] = exp(F(alpha) t)`, its
//! Perron triple and the right inverse `Phi` of the Perron root.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, RMatrix};
use crate::model::{LevyComponent, ValidatedModel};

/// Anything with a matrix cumulant: a validated model or a lazy view of one.
pub trait Cumulant: Send + Sync {
    fn dim(&self) -> usize;

    /// `F(z)`; fails with `DomainViolation` outside the joint transform domain.
    fn eval(&self, z: Complex64) -> Result<CMatrix>;

    /// Entrywise derivative `F'(z)`.
    fn eval_deriv(&self, z: Complex64) -> Result<CMatrix>;

    /// Stationary law of the modulating chain.
    fn stationary(&self) -> Vec<f64>;

    /// Open interval of `Re z` on which `F` is finite.
    fn domain(&self) -> (f64, f64);

    fn spectrally_negative(&self) -> bool;

    /// Generator of the modulating chain, `F(0)`.
    fn generator(&self) -> RMatrix {
        let f = self.eval(c(0.0)).expect("0 lies in every transform domain");
        f.map(|z| z.re)
    }

    fn eval_real(&self, alpha: f64) -> Result<RMatrix> {
        Ok(self.eval(c(alpha))?.map(|z| z.re))
    }
}

impl<T: Cumulant + ?Sized> Cumulant for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, z: Complex64) -> Result<CMatrix> {
        (**self).eval(z)
    }
    fn eval_deriv(&self, z: Complex64) -> Result<CMatrix> {
        (**self).eval_deriv(z)
    }
    fn stationary(&self) -> Vec<f64> {
        (**self).stationary()
    }
    fn domain(&self) -> (f64, f64) {
        (**self).domain()
    }
    fn spectrally_negative(&self) -> bool {
        (**self).spectrally_negative()
    }
}

impl ValidatedModel {
    fn check_domain(&self, z: Complex64) -> Result<()> {
        for i in 0..self.n_states() {
            let (lo, hi) = self.state_domain(i);
            if !(z.re > lo && z.re < hi) {
                return Err(Error::DomainViolation { arg: z.re, lo, hi, state: i });
            }
        }
        Ok(())
    }
}

impl Cumulant for ValidatedModel {
    fn dim(&self) -> usize {
        self.n_states()
    }

    fn eval(&self, z: Complex64) -> Result<CMatrix> {
        self.check_domain(z)?;
        let n = self.n_states();
        let q = self.q();
        let mut f = CMatrix::zeros(n, n);
        for i in 0..n {
            let g = self.trans_jump(i).mgf(z);
            for j in 0..n {
                f[(i, j)] = if i == j { q[(i, i)] + self.levy(i).psi_unchecked(z) } else { g * q[(i, j)] };
            }
        }
        Ok(f)
    }

    fn eval_deriv(&self, z: Complex64) -> Result<CMatrix> {
        self.check_domain(z)?;
        let n = self.n_states();
        let q = self.q();
        let mut f = CMatrix::zeros(n, n);
        for i in 0..n {
            let g = self.trans_jump(i).mgf_deriv(z);
            for j in 0..n {
                f[(i, j)] = if i == j { self.levy(i).psi_deriv_unchecked(z) } else { g * q[(i, j)] };
            }
        }
        Ok(f)
    }

    fn stationary(&self) -> Vec<f64> {
        self.pi().to_vec()
    }

    fn domain(&self) -> (f64, f64) {
        (0..self.n_states()).fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), i| {
            let (a, b) = self.state_domain(i);
            (lo.max(a), hi.min(b))
        })
    }

    fn spectrally_negative(&self) -> bool {
        self.is_spectrally_negative()
    }

    fn generator(&self) -> RMatrix {
        self.q().clone()
    }
}

/// Laplace exponent of a single Lévy component. For `alpha = i theta` this is
/// the characteristic exponent: `E e^{i theta X(1)} = exp(psi(i theta))`.
pub fn psi_eval(levy: &LevyComponent, alpha: Complex64) -> Result<Complex64> {
    let (lo, hi) = levy.domain();
    if !(alpha.re > lo && alpha.re < hi) {
        return Err(Error::DomainViolation { arg: alpha.re, lo, hi, state: 0 });
    }
    Ok(levy.psi_unchecked(alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantEval {
    pub alpha: Complex64,
    pub value: CMatrix,
}

pub fn cgm_eval<C: Cumulant>(model: &C, alpha: Complex64) -> Result<CumulantEval> {
    Ok(CumulantEval { alpha, value: model.eval(alpha)? })
}

/// Perron root `kappa` of `F(alpha)` with right and left eigenvectors `h`, `v`
/// scaled so that `v . h = 1` and `pi . h = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTriple {
    pub alpha: f64,
    pub kappa: f64,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn perron<C: Cumulant>(model: &C, alpha: f64) -> Result<SpectralTriple> {
    let f = model.eval_real(alpha)?;
    let n = f.nrows();
    if n == 1 {
        return Ok(SpectralTriple { alpha, kappa: f[(0, 0)], h: vec![1.0], v: vec![1.0] });
    }
    let ev = linalg::eigenvalues(&f);
    let top = ev.iter().copied().fold(Complex64::new(f64::NEG_INFINITY, 0.0), |a, z| if z.re > a.re { z } else { a });
    let scale = 1.0 + linalg::max_abs(&f);
    if top.im.abs() > 1e-8 * scale {
        return Err(Error::Spectral(format!("leading eigenvalue of F({alpha}) is not real: {top}")));
    }
    let shifted = &f - RMatrix::identity(n, n) * top.re;
    let (mut h, _) = linalg::null_vector(&shifted);
    let (mut v, _) = linalg::null_vector(&shifted.transpose());
    for w in [&mut h, &mut v] {
        if w.iter().sum::<f64>() < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        let wmax = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if w.iter().any(|x| !(*x > 1e-12 * wmax)) {
            return Err(Error::Spectral(format!("Perron vector of F({alpha}) is not positive: {w:?}")));
        }
    }
    let vh: f64 = v.iter().zip(&h).map(|(a, b)| a * b).sum();
    v.iter_mut().for_each(|x| *x /= vh);
    let pi = model.stationary();
    let ph: f64 = pi.iter().zip(&h).map(|(a, b)| a * b).sum();
    h.iter_mut().for_each(|x| *x /= ph);
    v.iter_mut().for_each(|x| *x *= ph);
    // Rayleigh quotient sharpens the root beyond the eigensolver's accuracy
    let mut kappa = 0.0;
    for i in 0..n {
        for j in 0..n {
            kappa += v[i] * f[(i, j)] * h[j];
        }
    }
    Ok(SpectralTriple { alpha, kappa, h, v })
}

pub fn kappa<C: Cumulant>(model: &C, alpha: f64) -> Result<f64> {
    Ok(perron(model, alpha)?.kappa)
}

/// `kappa'(alpha) = v F'(alpha) h` for the normalized triple.
pub fn kappa_deriv<C: Cumulant>(model: &C, alpha: f64) -> Result<(f64, f64)> {
    let t = perron(model, alpha)?;
    let d = model.eval_deriv(c(alpha))?;
    let n = t.h.len();
    let mut k1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            k1 += t.v[i] * d[(i, j)].re * t.h[j];
        }
    }
    Ok((t.kappa, k1))
}

/// Asymptotic drift `kappa'(0)`: the stationary mean of the per-state drift,
/// the per-state jump means and the transition jump means.
pub fn kappa_derivative0(model: &ValidatedModel) -> f64 {
    let q = model.q();
    (0..model.n_states())
        .map(|i| {
            let out_rate: f64 = (0..model.n_states()).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
            model.pi()[i] * (model.levy(i).mean_rate() + out_rate * model.trans_jump(i).mean())
        })
        .sum()
}

/// Largest root of `kappa(alpha) = q` on `[0, inf)`.
pub fn phi_inverse<C: Cumulant>(model: &C, q: f64) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(Error::Domain(format!("Phi(q) needs q >= 0, got {q}")));
    }
    let (_, dom_hi) = model.domain();
    let (_, d0) = kappa_deriv(model, 0.0)?;
    if q == 0.0 && d0 >= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0f64;
    loop {
        if hi >= dom_hi {
            hi = 0.5 * (lo + dom_hi);
            if dom_hi - hi < 1e-12 * (1.0 + dom_hi.abs()) {
                return Err(Error::NoFiniteRoot { q });
            }
        }
        let k = kappa(model, hi)?;
        if k > q {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoFiniteRoot { q });
        }
    }
    // Newton from the right of the root decreases monotonically for convex kappa
    let mut x = hi;
    let tol = 1e-14 * (1.0 + q);
    for _ in 0..200 {
        let (k, dk) = kappa_deriv(model, x)?;
        let r = k - q;
        if r.abs() <= tol {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - r / dk;
        x = if dk > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * (1.0 + hi) {
            return Ok(x);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, validate, JumpLaw, MapSpec, Sign};

    fn model(name: &str) -> ValidatedModel {
        validate(builtin(name).unwrap()).unwrap()
    }

    fn scalar_bm() -> ValidatedModel {
        validate(MapSpec::scalar(LevyComponent::brownian(0.0, 1.0))).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert!((psi_eval(&LevyComponent::brownian(0.0, 1.0), c(2.0)).unwrap().re - 2.0).abs() < 1e-15);
        assert!((psi_eval(&LevyComponent::brownian(1.0, 2.0), c(1.0)).unwrap().re - 2.0).abs() < 1e-15);
        let cp = LevyComponent::brownian(2.0, 0.0).with_jump(1.0, JumpLaw::exponential(1.0, Sign::Neg));
        assert!((psi_eval(&cp, c(1.0)).unwrap().re - 1.5).abs() < 1e-15);
        assert!(matches!(psi_eval(&cp, c(-1.5)), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn characteristic_exponent_on_imaginary_axis() {
        let l = LevyComponent::brownian(0.3, 2.0);
        let th = 0.8;
        let v = psi_eval(&l, Complex64::new(0.0, th)).unwrap();
        assert!((v - Complex64::new(-th * th, 0.3 * th)).norm() < 1e-15);
    }

    #[test]
    fn cgm_examples() {
        let a = model("MODEL-A");
        let f0 = a.eval_real(0.0).unwrap();
        assert_eq!(f0, a.q().clone());
        let f1 = a.eval_real(1.0).unwrap();
        assert_eq!(f1, RMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, -2.0]));
        let s = scalar_bm();
        assert!((s.eval_real(1.7).unwrap()[(0, 0)] - 1.7 * 1.7 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perron_examples() {
        let a = model("MODEL-A");
        let t0 = perron(&a, 0.0).unwrap();
        assert!(t0.kappa.abs() < 1e-12);
        assert!(t0.h.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!((t0.v[0] - 2.0 / 3.0).abs() < 1e-12 && (t0.v[1] - 1.0 / 3.0).abs() < 1e-12);
        let t1 = perron(&a, 1.0).unwrap();
        assert!((t1.kappa - (17f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
        let s = perron(&scalar_bm(), 3.0).unwrap();
        assert_eq!((s.kappa, s.h.clone(), s.v.clone()), (4.5, vec![1.0], vec![1.0]));
    }

    #[test]
    fn perron_eigen_residuals_and_normalization() {
        for name in ["MODEL-A", "MODEL-B", "MODEL-C", "MODEL-D"] {
            let m = model(name);
            for alpha in [-0.3, 0.0, 0.5, 1.2] {
                let t = perron(&m, alpha).unwrap();
                let f = m.eval_real(alpha).unwrap();
                let h = nalgebra::DVector::from_column_slice(&t.h);
                let v = nalgebra::DVector::from_column_slice(&t.v);
                assert!((&f * &h - &h * t.kappa).amax() < 1e-10, "{name} {alpha}");
                assert!((f.transpose() * &v - &v * t.kappa).amax() < 1e-10, "{name} {alpha}");
                assert!((v.dot(&h) - 1.0).abs() < 1e-10);
                let pi = m.pi();
                assert!((pi[0] * t.h[0] + pi[1] * t.h[1] - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn drift_examples() {
        assert!((kappa_derivative0(&model("MODEL-A")) - 1.0 / 3.0).abs() < 1e-14);
        assert!((kappa_derivative0(&model("MODEL-C")) - 1.0 / 3.0).abs() < 1e-14);
        let bm = validate(MapSpec::scalar(LevyComponent::brownian(-0.7, 1.0))).unwrap();
        assert!((kappa_derivative0(&bm) + 0.7).abs() < 1e-15);
        for name in ["MODEL-A", "MODEL-C", "MODEL-D"] {
            let m = model(name);
            let h = 1e-5;
            let fd = (kappa(&m, h).unwrap() - kappa(&m, -h).unwrap()) / (2.0 * h);
            assert!((fd - kappa_derivative0(&m)).abs() < 1e-6, "{name}");
            assert!((kappa_deriv(&m, 0.0).unwrap().1 - kappa_derivative0(&m)).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_examples() {
        assert!((phi_inverse(&scalar_bm(), 2.0).unwrap() - 2.0).abs() < 1e-12);
        let a = model("MODEL-A");
        assert_eq!(phi_inverse(&a, 0.0).unwrap(), 0.0);
        let q = (17f64.sqrt() - 1.0) / 2.0;
        assert!((phi_inverse(&a, q).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn phi_with_negative_drift_is_the_larger_root() {
        let m = validate(MapSpec::scalar(LevyComponent::brownian(-1.0, 1.0))).unwrap();
        // psi = -a + a^2/2 vanishes at 0 and 2
        assert!((phi_inverse(&m, 0.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_is_convex() {
        for name in ["MODEL-A", "MODEL-B", "MODEL-C"] {
            let m = model(name);
            let k: Vec<f64> = (0..=30).map(|i| kappa(&m, 0.1 * i as f64).unwrap()).collect();
            for w in k.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8, "{name}");
            }
        }
    }

    #[test]
    fn phi_inverts_kappa_on_grid() {
        for name in ["MODEL-A", "MODEL-B", "MODEL-C"] {
            let m = model(name);
            for q in [0.01, 0.3, 1.0, 2.5, 10.0] {
                let p = phi_inverse(&m, q).unwrap();
                assert!((kappa(&m, p).unwrap() - q).abs() < 1e-10, "{name} q={q}");
            }
        }
    }

    #[test]
    fn conservative_at_zero() {
        let m = model("MODEL-D");
        let e = linalg::expm(&(m.eval_real(0.0).unwrap() * 1.3));
        for s in linalg::row_sums(&e) {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn model_d_imaginary_spectrum_is_simple() {
        let m = model("MODEL-D");
        for a in [0.25, 0.5, 1.0, 2.0] {
            let ev = linalg::eigenvalues_c(&m.eval(Complex64::new(0.0, a)).unwrap()).unwrap();
            assert!((ev[0] - ev[1]).norm() > 1e-6);
        }
    }
}
