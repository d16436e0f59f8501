use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }
}

/// Law of a jump size: a point mass, a signed exponential, or a finite
/// mixture of signed exponentials sharing one sign.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    Degenerate { at: f64 },
    Exponential { rate: f64, sign: Sign },
    Mixture { weights: Vec<f64>, rates: Vec<f64>, sign: Sign },
}

impl JumpLaw {
    pub const ZERO: JumpLaw = JumpLaw::Degenerate { at: 0.0 };

    pub fn exponential(rate: f64, sign: Sign) -> Self {
        JumpLaw::Exponential { rate, sign }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, JumpLaw::Degenerate { at } if *at == 0.0)
    }

    /// True when the law can put mass on `(0, inf)`.
    pub fn has_positive_mass(&self) -> bool {
        match self {
            JumpLaw::Degenerate { at } => *at > 0.0,
            JumpLaw::Exponential { sign, .. } | JumpLaw::Mixture { sign, .. } => *sign == Sign::Pos,
        }
    }

    fn components(&self) -> Vec<(f64, f64)> {
        match self {
            JumpLaw::Degenerate { .. } => Vec::new(),
            JumpLaw::Exponential { rate, .. } => vec![(1.0, *rate)],
            JumpLaw::Mixture { weights, rates, .. } => weights.iter().copied().zip(rates.iter().copied()).collect(),
        }
    }

    /// Open interval of real parts `Re z` on which `E exp(z U)` is finite.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            JumpLaw::Degenerate { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            JumpLaw::Exponential { sign, .. } | JumpLaw::Mixture { sign, .. } => {
                let beta =
                    self.components().iter().filter(|(w, _)| *w > 0.0).fold(f64::INFINITY, |a, &(_, r)| a.min(r));
                match sign {
                    Sign::Neg => (-beta, f64::INFINITY),
                    Sign::Pos => (f64::NEG_INFINITY, beta),
                }
            }
        }
    }

    /// `E exp(z U)`; callers check the domain first.
    pub fn mgf(&self, z: Complex64) -> Complex64 {
        match self {
            JumpLaw::Degenerate { at } => (z * *at).exp(),
            JumpLaw::Exponential { sign, .. } | JumpLaw::Mixture { sign, .. } => {
                let s = sign.factor();
                self.components().iter().map(|&(w, r)| w * r / (r - z * s)).sum()
            }
        }
    }

    pub fn mgf_deriv(&self, z: Complex64) -> Complex64 {
        match self {
            JumpLaw::Degenerate { at } => (z * *at).exp() * *at,
            JumpLaw::Exponential { sign, .. } | JumpLaw::Mixture { sign, .. } => {
                let s = sign.factor();
                self.components().iter().map(|&(w, r)| w * r * s / ((r - z * s) * (r - z * s))).sum()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            JumpLaw::Degenerate { at } => *at,
            JumpLaw::Exponential { sign, .. } | JumpLaw::Mixture { sign, .. } => {
                sign.factor() * self.components().iter().map(|&(w, r)| w / r).sum::<f64>()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::Degenerate { at } => *at,
            JumpLaw::Exponential { rate, sign } => {
                let e: f64 = Exp1.sample(rng);
                sign.factor() * e / rate
            }
            JumpLaw::Mixture { weights, rates, sign } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let e: f64 = Exp1.sample(rng);
                sign.factor() * e / rates[k]
            }
        }
    }

    /// Parameter problems, reported with `path` as prefix.
    pub(crate) fn check(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            JumpLaw::Degenerate { at } => {
                if !at.is_finite() {
                    out.push(format!("{path}: point mass location must be finite"));
                }
            }
            JumpLaw::Exponential { rate, .. } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    out.push(format!("{path}: rate must be positive, got {rate}"));
                }
            }
            JumpLaw::Mixture { weights, rates, .. } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    out.push(format!("{path}: mixture needs matching nonempty weights and rates"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    out.push(format!("{path}: mixture weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    out.push(format!("{path}: mixture weights sum to {total}, not 1"));
                }
                if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                    out.push(format!("{path}: mixture rates must be positive"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn negative_exponential_transform() {
        let law = JumpLaw::exponential(1.0, Sign::Neg);
        assert!((law.mgf(Complex64::new(1.0, 0.0)).re - 0.5).abs() < 1e-15);
        assert_eq!(law.domain(), (-1.0, f64::INFINITY));
        assert_eq!(law.mean(), -1.0);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let law = JumpLaw::Mixture { weights: vec![0.3, 0.7], rates: vec![2.0, 5.0], sign: Sign::Pos };
        let z = Complex64::new(0.4, 0.9);
        let h = 1e-6;
        let fd = (law.mgf(z + h) - law.mgf(z - h)) / (2.0 * h);
        assert!((fd - law.mgf_deriv(z)).norm() < 1e-8);
        assert!((law.mgf_deriv(Complex64::new(0.0, 0.0)).re - law.mean()).abs() < 1e-12);
    }

    #[test]
    fn sample_mean_of_mixture() {
        let law = JumpLaw::Mixture { weights: vec![0.25, 0.75], rates: vec![1.0, 4.0], sign: Sign::Neg };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        // sd of a single draw is below 1.1
        assert!((m - law.mean()).abs() < 4.0 * 1.1 / (n as f64).sqrt());
    }
}
