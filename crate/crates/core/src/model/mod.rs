//! Model primitives of a Markov additive process: the modulating generator,
//! per-state Lévy parts and the jumps attached to chain transitions.

mod file;
mod law;

pub use file::{from_json_str, load, to_json_string};
pub use law::{JumpLaw, Sign};

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::error::{Error, Result, Violation};
use crate::linalg::{self, RMatrix};

const ROW_SUM_TOL: f64 = 1e-12;

/// A compound-Poisson term: jumps of law `law` arriving at rate `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTerm {
    pub rate: f64,
    pub law: JumpLaw,
}

/// Lévy process run while the chain sits in one state: drift, Brownian
/// variance and finitely many compound-Poisson jump streams.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyComponent {
    pub drift: f64,
    pub sigma2: f64,
    pub jumps: Vec<JumpTerm>,
}

impl LevyComponent {
    pub fn brownian(drift: f64, sigma2: f64) -> Self {
        LevyComponent { drift, sigma2, jumps: Vec::new() }
    }

    pub fn with_jump(mut self, rate: f64, law: JumpLaw) -> Self {
        self.jumps.push(JumpTerm { rate, law });
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn jump_rate(&self) -> f64 {
        self.jumps.iter().map(|j| j.rate).sum()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.jumps.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), j| {
            let (a, b) = j.law.domain();
            (lo.max(a), hi.min(b))
        })
    }

    /// Laplace exponent `a z + s^2 z^2 / 2 + sum rate (E e^{zU} - 1)`; at `z = i theta`
    /// this is the characteristic exponent, `E e^{i theta X(1)} = exp(psi(i theta))`.
    pub(crate) fn psi_unchecked(&self, z: Complex64) -> Complex64 {
        let mut v = z * self.drift + z * z * (0.5 * self.sigma2);
        for j in &self.jumps {
            v += (j.law.mgf(z) - 1.0) * j.rate;
        }
        v
    }

    pub(crate) fn psi_deriv_unchecked(&self, z: Complex64) -> Complex64 {
        let mut v = Complex64::new(self.drift, 0.0) + z * self.sigma2;
        for j in &self.jumps {
            v += j.law.mgf_deriv(z) * j.rate;
        }
        v
    }

    pub fn mean_rate(&self) -> f64 {
        self.drift + self.jumps.iter().map(|j| j.rate * j.law.mean()).sum::<f64>()
    }
}

/// Full model primitives. `trans_jump[i]` is the law of the jump added when
/// the chain leaves state `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub n_states: usize,
    pub q: RMatrix,
    pub levy: Vec<LevyComponent>,
    pub trans_jump: Vec<JumpLaw>,
    pub spectrally_negative: bool,
}

impl MapSpec {
    /// Model without transition jumps.
    pub fn new(q: RMatrix, levy: Vec<LevyComponent>, spectrally_negative: bool) -> Self {
        let n = q.nrows();
        MapSpec { n_states: n, q, levy, trans_jump: vec![JumpLaw::ZERO; n], spectrally_negative }
    }

    /// Scalar Lévy process (N = 1).
    pub fn scalar(levy: LevyComponent) -> Self {
        let sn = levy.jumps.iter().all(|j| !j.law.has_positive_mass());
        MapSpec::new(RMatrix::zeros(1, 1), vec![levy], sn)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
}

/// A model that passed every invariant check. Immutable.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    spec: MapSpec,
    pi: Vec<f64>,
}

impl ValidatedModel {
    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn n_states(&self) -> usize {
        self.spec.n_states
    }

    pub fn q(&self) -> &RMatrix {
        &self.spec.q
    }

    pub fn levy(&self, i: usize) -> &LevyComponent {
        &self.spec.levy[i]
    }

    pub fn trans_jump(&self, i: usize) -> &JumpLaw {
        &self.spec.trans_jump[i]
    }

    pub fn is_spectrally_negative(&self) -> bool {
        self.spec.spectrally_negative
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn stationary(&self) -> StationaryDist {
        StationaryDist { pi: self.pi.clone() }
    }

    /// Interval of real arguments on which every transform of state `i` is finite.
    pub fn state_domain(&self, i: usize) -> (f64, f64) {
        let (mut lo, mut hi) = self.spec.levy[i].domain();
        if self.spec.q.ncols() > 1 && self.spec.q[(i, i)] != 0.0 {
            let (a, b) = self.spec.trans_jump[i].domain();
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo, hi)
    }

    /// The time-reversed model as a `MapSpec`, when it is one: the reversed chain
    /// has generator `diag(pi)^-1 Q^T diag(pi)` and carries each transition jump
    /// on the state it enters, which only fits this model class when all
    /// transition jumps share one law.
    pub fn reversed_spec(&self) -> Result<MapSpec> {
        let n = self.n_states();
        let first = &self.spec.trans_jump[0];
        if self.spec.trans_jump.iter().any(|l| l != first) {
            return Err(Error::Domain(
                "reversed model attaches transition jumps to the entered state; \
                 only representable when all transition jump laws coincide"
                    .into(),
            ));
        }
        let dp = linalg::diag(&self.pi);
        let dpi = linalg::diag(&self.pi.iter().map(|p| 1.0 / p).collect::<Vec<_>>());
        let mut qh = dpi * self.spec.q.transpose() * dp;
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| qh[(i, j)]).sum();
            qh[(i, i)] = -off;
        }
        Ok(MapSpec { q: qh, ..self.spec.clone() })
    }
}

/// Checks every invariant and returns the full list of violations on failure.
pub fn validate(spec: MapSpec) -> Result<ValidatedModel> {
    let mut v = Vec::new();
    let n = spec.n_states;
    if n == 0 {
        v.push(Violation::Shape("n_states must be positive".into()));
        return Err(Error::Invalid(v));
    }
    if spec.q.nrows() != n || spec.q.ncols() != n {
        v.push(Violation::Shape(format!("Q must be {n}x{n}")));
    }
    if spec.levy.len() != n {
        v.push(Violation::Shape(format!("expected {n} per-state components, got {}", spec.levy.len())));
    }
    if spec.trans_jump.len() != n {
        v.push(Violation::Shape(format!("expected {n} transition jump laws, got {}", spec.trans_jump.len())));
    }
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }

    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let x = spec.q[(i, j)];
            if !x.is_finite() {
                v.push(Violation::InvalidParameter { path: format!("Q[{i}][{j}]"), reason: "not finite".into() });
            }
            if i != j && x < 0.0 {
                v.push(Violation::NegativeOffDiagonal { row: i, col: j, value: x });
            }
            sum += x;
        }
        if sum.abs() > ROW_SUM_TOL {
            v.push(Violation::RowSumViolation { row: i, sum });
        }
    }
    if let Some(from) = unreachable_from(&spec.q) {
        v.push(Violation::Reducible { unreachable_from: from });
    }

    for (i, c) in spec.levy.iter().enumerate() {
        if !(c.sigma2 >= 0.0 && c.sigma2.is_finite()) {
            v.push(Violation::InvalidParameter {
                path: format!("states[{i}].sigma2"),
                reason: format!("must be finite and >= 0, got {}", c.sigma2),
            });
        }
        if !c.drift.is_finite() {
            v.push(Violation::InvalidParameter { path: format!("states[{i}].drift"), reason: "not finite".into() });
        }
        for (k, j) in c.jumps.iter().enumerate() {
            let path = format!("states[{i}].jumps[{k}]");
            if !(j.rate > 0.0 && j.rate.is_finite()) {
                v.push(Violation::InvalidParameter {
                    path: format!("{path}.rate"),
                    reason: format!("must be > 0, got {}", j.rate),
                });
            }
            for reason in j.law.check(&format!("{path}.law")) {
                v.push(Violation::InvalidParameter { path: path.clone(), reason });
            }
            if spec.spectrally_negative && j.law.has_positive_mass() {
                v.push(Violation::PositiveJumpInSpectrallyNegative { state: i, context: path });
            }
        }
        let has_up_jumps = c.jumps.iter().any(|j| j.law.has_positive_mass());
        if c.sigma2 == 0.0 && c.drift == 0.0 {
            v.push(Violation::DegenerateComponent { state: i, reason: "a compound Poisson process" });
        } else if c.sigma2 == 0.0 && c.drift < 0.0 && !has_up_jumps {
            v.push(Violation::DegenerateComponent { state: i, reason: "a downward subordinator" });
        }
    }
    for (i, law) in spec.trans_jump.iter().enumerate() {
        let path = format!("trans_jumps[{i}]");
        for reason in law.check(&path) {
            v.push(Violation::InvalidParameter { path: path.clone(), reason });
        }
        if spec.spectrally_negative && law.has_positive_mass() {
            v.push(Violation::PositiveJumpInSpectrallyNegative { state: i, context: path });
        }
    }
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    let pi = stationary_of(&spec.q)?;
    Ok(ValidatedModel { spec, pi })
}

/// First state from which some other state cannot be reached, if any.
fn unreachable_from(q: &RMatrix) -> Option<usize> {
    let n = q.nrows();
    for start in 0..n {
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if i != j && q[(i, j)] > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Some(start);
        }
    }
    None
}

/// Solves `pi Q = 0`, `sum pi = 1` with one balance equation replaced by the normalization.
pub(crate) fn stationary_of(q: &RMatrix) -> Result<Vec<f64>> {
    let n = q.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = RMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let x = linalg::solve(&a, &b, "stationary distribution")
        .map_err(|_| Error::Spectral("null space of Q^T is not one-dimensional".into()))?;
    let pi: Vec<f64> = x.column(0).iter().copied().collect();
    if pi.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Spectral(format!("stationary vector has nonpositive entries: {pi:?}")));
    }
    Ok(pi)
}

pub fn stationary(model: &ValidatedModel) -> StationaryDist {
    model.stationary()
}

pub const BUILTIN_NAMES: [&str; 4] = ["MODEL-A", "MODEL-B", "MODEL-C", "MODEL-D"];

fn two_state_q() -> RMatrix {
    RMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0])
}

/// The four reference models.
///
/// * `MODEL-A`: drifts (1, -1), variances (2, 2), no jumps.
/// * `MODEL-B`: Markov-modulated Brownian motion, zero drift, sigma = (1, 2).
/// * `MODEL-C`: drift 2 minus a compound Poisson subordinator with exp(1)
///   jumps at rates (1, 3); no diffusion.
/// * `MODEL-D`: `MODEL-A` plus upward exp(2) jumps at rate 1 in each state.
///
/// All share `Q = [[-1, 1], [2, -2]]`.
pub fn builtin(name: &str) -> Result<MapSpec> {
    let q = two_state_q();
    let spec = match name.to_ascii_uppercase().as_str() {
        "MODEL-A" => MapSpec::new(q, vec![LevyComponent::brownian(1.0, 2.0), LevyComponent::brownian(-1.0, 2.0)], true),
        "MODEL-B" => MapSpec::new(q, vec![LevyComponent::brownian(0.0, 1.0), LevyComponent::brownian(0.0, 4.0)], true),
        "MODEL-C" => {
            let down = JumpLaw::exponential(1.0, Sign::Neg);
            MapSpec::new(
                q,
                vec![
                    LevyComponent::brownian(2.0, 0.0).with_jump(1.0, down.clone()),
                    LevyComponent::brownian(2.0, 0.0).with_jump(3.0, down),
                ],
                true,
            )
        }
        "MODEL-D" => {
            let up = JumpLaw::exponential(2.0, Sign::Pos);
            MapSpec::new(
                q,
                vec![
                    LevyComponent::brownian(1.0, 2.0).with_jump(1.0, up.clone()),
                    LevyComponent::brownian(-1.0, 2.0).with_jump(1.0, up),
                ],
                false,
            )
        }
        _ => return Err(Error::UnknownModel(name.to_string())),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_brownian_motion_is_valid() {
        let m = validate(MapSpec::scalar(LevyComponent::brownian(0.0, 1.0))).unwrap();
        assert_eq!(m.pi(), &[1.0]);
    }

    #[test]
    fn model_a_stationary() {
        let m = validate(builtin("MODEL-A").unwrap()).unwrap();
        assert!((m.pi()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.pi()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_builtins_validate() {
        for name in BUILTIN_NAMES {
            let m = validate(builtin(name).unwrap()).unwrap();
            let pq: Vec<f64> = (0..2).map(|j| (0..2).map(|i| m.pi()[i] * m.q()[(i, j)]).sum()).collect();
            assert!(pq.iter().all(|x| x.abs() < 1e-10), "{name}");
        }
        assert!(!builtin("MODEL-D").unwrap().spectrally_negative);
        assert!(builtin("model-e").is_err());
    }

    #[test]
    fn positive_jump_flag_contradiction() {
        let mut spec = builtin("MODEL-A").unwrap();
        spec.levy[0] = spec.levy[0].clone().with_jump(1.0, JumpLaw::exponential(3.0, Sign::Pos));
        match validate(spec) {
            Err(Error::Invalid(v)) => {
                assert!(v.iter().any(|x| matches!(x, Violation::PositiveJumpInSpectrallyNegative { state: 0, .. })))
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn collects_every_violation() {
        let q = RMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -1.0, 0.0, -0.5, 0.0, 0.3]);
        let spec = MapSpec::new(
            q,
            vec![
                LevyComponent::brownian(0.0, 0.0),
                LevyComponent::brownian(-1.0, 0.0).with_jump(1.0, JumpLaw::exponential(1.0, Sign::Neg)),
                LevyComponent::brownian(1.0, 1.0),
            ],
            true,
        );
        let Err(Error::Invalid(v)) = validate(spec) else { panic!() };
        assert!(v.iter().any(|x| matches!(x, Violation::RowSumViolation { row: 2, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NegativeOffDiagonal { row: 2, col: 0, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::Reducible { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::DegenerateComponent { state: 0, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::DegenerateComponent { state: 1, .. })));
    }

    #[test]
    fn stationary_invariant_under_time_rescaling() {
        let spec = builtin("MODEL-C").unwrap();
        let base = validate(spec.clone()).unwrap();
        for c in [0.1, 3.0, 17.0] {
            let scaled = validate(MapSpec { q: &spec.q * c, ..spec.clone() }).unwrap();
            for (a, b) in base.pi().iter().zip(scaled.pi()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reversed_spec_of_three_state_chain() {
        let q = RMatrix::from_row_slice(3, 3, &[-2.0, 2.0, 0.0, 0.0, -1.0, 1.0, 1.5, 0.5, -2.0]);
        let levy = vec![LevyComponent::brownian(0.5, 1.0); 3];
        let m = validate(MapSpec::new(q, levy, true)).unwrap();
        let r = validate(m.reversed_spec().unwrap()).unwrap();
        for (a, b) in m.pi().iter().zip(r.pi()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.q()[(1, 0)] > 0.0 && r.q()[(0, 1)] == 0.0);
    }
}
