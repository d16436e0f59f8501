//! Exponential tilting and time reversal, evaluated lazily on top of a base cumulant.

use num_complex::Complex64;

use crate::cumulant::{perron, Cumulant, SpectralTriple};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};

/// The cumulant under the change of measure with `h(gamma)`:
/// `F_gamma(z) = D_h^-1 F(z + gamma) D_h - kappa(gamma) I`.
#[derive(Debug, Clone)]
pub struct TiltedView<C> {
    base: C,
    gamma: f64,
    at_gamma: SpectralTriple,
}

pub fn tilt<C: Cumulant>(base: C, gamma: f64) -> Result<TiltedView<C>> {
    let at_gamma = perron(&base, gamma)?;
    Ok(TiltedView { base, gamma, at_gamma })
}

impl<C: Cumulant> TiltedView<C> {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn base(&self) -> &C {
        &self.base
    }

    pub fn triple_at_gamma(&self) -> &SpectralTriple {
        &self.at_gamma
    }

    fn conjugate(&self, m: CMatrix) -> CMatrix {
        let h = &self.at_gamma.h;
        CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * (h[j] / h[i]))
    }

    fn shifted(&self, z: Complex64) -> Result<Complex64> {
        let w = z + self.gamma;
        let (lo, hi) = self.base.domain();
        if !(w.re > lo && w.re < hi) {
            return Err(Error::Domain(format!(
                "tilted argument {} + {} leaves the base domain ({lo}, {hi})",
                z.re, self.gamma
            )));
        }
        Ok(w)
    }
}

impl<C: Cumulant> Cumulant for TiltedView<C> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, z: Complex64) -> Result<CMatrix> {
        let f = self.base.eval(self.shifted(z)?)?;
        let n = f.nrows();
        Ok(self.conjugate(f) - CMatrix::identity(n, n) * c(self.at_gamma.kappa))
    }

    fn eval_deriv(&self, z: Complex64) -> Result<CMatrix> {
        Ok(self.conjugate(self.base.eval_deriv(self.shifted(z)?)?))
    }

    /// The tilted chain is stationary under `v_i h_i`, which sums to one.
    fn stationary(&self) -> Vec<f64> {
        let t = &self.at_gamma;
        t.v.iter().zip(&t.h).map(|(a, b)| a * b).collect()
    }

    fn domain(&self) -> (f64, f64) {
        let (lo, hi) = self.base.domain();
        (lo - self.gamma, hi - self.gamma)
    }

    fn spectrally_negative(&self) -> bool {
        self.base.spectrally_negative()
    }
}

/// Cumulant of the time-reversed process: `F^(z) = D_pi^-1 F(z)^T D_pi`.
#[derive(Debug, Clone)]
pub struct ReversedView<C> {
    base: C,
    pi: Vec<f64>,
}

pub fn reverse<C: Cumulant>(base: C) -> ReversedView<C> {
    let pi = base.stationary();
    ReversedView { base, pi }
}

impl<C: Cumulant> ReversedView<C> {
    pub fn base(&self) -> &C {
        &self.base
    }
}

impl<C: Cumulant> Cumulant for ReversedView<C> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, z: Complex64) -> Result<CMatrix> {
        let f = self.base.eval(z)?;
        let p = &self.pi;
        Ok(CMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(j, i)] * (p[j] / p[i])))
    }

    fn eval_deriv(&self, z: Complex64) -> Result<CMatrix> {
        let f = self.base.eval_deriv(z)?;
        let p = &self.pi;
        Ok(CMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(j, i)] * (p[j] / p[i])))
    }

    fn stationary(&self) -> Vec<f64> {
        self.pi.clone()
    }

    fn domain(&self) -> (f64, f64) {
        self.base.domain()
    }

    fn spectrally_negative(&self) -> bool {
        self.base.spectrally_negative()
    }
}

/// `max |F^(z) - D_pi^-1 F(z)^T D_pi|`, computed from the base model directly.
pub fn reversal_residual<C: Cumulant>(base: &C, z: Complex64) -> Result<f64> {
    let pi = base.stationary();
    let dp = linalg::cdiag(&pi.iter().map(|&p| c(p)).collect::<Vec<_>>());
    let dpi = linalg::cdiag(&pi.iter().map(|&p| c(1.0 / p)).collect::<Vec<_>>());
    let direct = dpi * base.eval(z)?.transpose() * dp;
    Ok(linalg::max_abs_c(&(reverse(base).eval(z)? - direct)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulant::kappa;
    use crate::linalg::RMatrix;
    use crate::model::{builtin, validate, LevyComponent, MapSpec, ValidatedModel};

    fn model(name: &str) -> ValidatedModel {
        validate(builtin(name).unwrap()).unwrap()
    }

    #[test]
    fn zero_tilt_is_identity() {
        let m = model("MODEL-C");
        let t = tilt(&m, 0.0).unwrap();
        for a in [0.0, 0.4, 1.1] {
            assert!(linalg::max_abs_c(&(t.eval(c(a)).unwrap() - m.eval(c(a)).unwrap())) < 1e-12);
        }
    }

    #[test]
    fn tilted_generator_is_conservative() {
        for name in ["MODEL-A", "MODEL-C", "MODEL-D"] {
            let m = model(name);
            for g in [0.3, 1.0] {
                let q = tilt(&m, g).unwrap().generator();
                assert!(linalg::row_sums(&q).iter().all(|s| s.abs() < 1e-10), "{name}");
                assert!((q[(0, 1)] >= 0.0) && (q[(1, 0)] >= 0.0));
            }
        }
    }

    #[test]
    fn tilted_kappa_example() {
        let m = model("MODEL-A");
        let t = tilt(&m, 1.0).unwrap();
        let lhs = kappa(&t, 0.5).unwrap();
        let rhs = kappa(&m, 1.5).unwrap() - kappa(&m, 1.0).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn tilt_composition() {
        let m = model("MODEL-C");
        let (g1, g2) = (0.4, 0.7);
        let t12 = tilt(&m, g1 + g2).unwrap();
        let t1 = tilt(&m, g1).unwrap();
        for a in [-0.2, 0.0, 0.5, 1.5] {
            let lhs = kappa(&t12, a).unwrap();
            let rhs = kappa(&t1, a + g2).unwrap() - kappa(&t1, g2).unwrap();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn model_a_is_reversible() {
        let m = model("MODEL-A");
        let r = reverse(&m);
        assert!(linalg::max_abs(&(r.generator() - RMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]))) < 1e-15);
        assert!(linalg::max_abs_c(&(r.eval(c(0.7)).unwrap() - m.eval(c(0.7)).unwrap())) < 1e-14);
    }

    #[test]
    fn reversal_of_irreversible_chain() {
        let q = RMatrix::from_row_slice(3, 3, &[-2.0, 2.0, 0.0, 0.0, -1.0, 1.0, 1.5, 0.5, -2.0]);
        let levy = vec![
            LevyComponent::brownian(0.5, 1.0),
            LevyComponent::brownian(-1.0, 0.5),
            LevyComponent::brownian(0.2, 2.0),
        ];
        let m = validate(MapSpec::new(q, levy, true)).unwrap();
        let r = reverse(&m);
        assert!(linalg::row_sums(&r.generator()).iter().all(|s| s.abs() < 1e-12));
        let rr = reverse(reverse(&m));
        for a in [0.0, 0.8, 2.0] {
            assert!(linalg::max_abs_c(&(rr.eval(c(a)).unwrap() - m.eval(c(a)).unwrap())) < 1e-12);
            assert!(reversal_residual(&m, c(a)).unwrap() < 1e-15);
            let t = perron(&m, a).unwrap();
            let th = perron(&r, a).unwrap();
            assert!((t.kappa - th.kappa).abs() < 1e-10);
            let vsum: f64 = t.v.iter().sum();
            for i in 0..3 {
                assert!((m.pi()[i] * th.h[i] - t.v[i] / vsum).abs() < 1e-8);
            }
        }
        let mut ev = linalg::eigenvalues(&m.eval_real(0.9).unwrap());
        let mut evr = linalg::eigenvalues(&r.eval_real(0.9).unwrap());
        for e in [&mut ev, &mut evr] {
            e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        }
        for (a, b) in ev.iter().zip(&evr) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
