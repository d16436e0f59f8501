//! Exact path simulation of a MAP: chain holding times, compound-Poisson
//! epochs and Brownian segments whose extrema and level crossings are drawn
//! from their exact conditional laws.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, InverseGaussian, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, RMatrix};
use crate::model::ValidatedModel;

/// Independent stream for replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Law of `J(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartLaw {
    State(usize),
    Stationary,
    /// Replication `r` starts in state `r mod N`.
    RoundRobin,
}

fn draw_start<R: Rng + ?Sized>(model: &ValidatedModel, law: StartLaw, rep: usize, rng: &mut R) -> usize {
    match law {
        StartLaw::State(i) => i,
        StartLaw::RoundRobin => rep % model.n_states(),
        StartLaw::Stationary => categorical(rng, model.pi()),
    }
}

fn categorical<R: Rng + ?Sized>(rng: &mut R, w: &[f64]) -> usize {
    let total: f64 = w.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, x) in w.iter().enumerate() {
        acc += x;
        if u < acc {
            return k;
        }
    }
    w.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}

/// Stretch of constant chain state without jumps: `X` moves as Brownian motion with drift.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    pub state: usize,
    pub t0: f64,
    pub x0: f64,
    pub h: f64,
    pub drift: f64,
    pub sigma: f64,
}

impl Segment {
    fn endpoint<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.drift * self.h + self.sigma * self.h.sqrt() * z
    }
}

pub(crate) trait Observer {
    /// Draws the increment over the segment; `None` stops the path.
    fn segment<R: Rng + ?Sized>(&mut self, rng: &mut R, seg: &Segment) -> Option<f64>;

    /// Jump of size `dx` at time `t` from `x_before`; `from != to` at a chain transition.
    /// Returning `false` stops the path.
    fn jump(&mut self, _t: f64, _x_before: f64, _dx: f64, _from: usize, _to: usize) -> bool {
        true
    }

    fn end(&mut self, _t: f64, _x: f64, _state: usize) {}
}

/// Runs one path from `(0, 0, start)` until `horizon` or until the observer stops it.
pub(crate) fn drive<R: Rng + ?Sized, O: Observer>(
    model: &ValidatedModel,
    rng: &mut R,
    start: usize,
    horizon: f64,
    obs: &mut O,
) {
    let q = model.q();
    let n = model.n_states();
    let (mut t, mut x, mut j) = (0.0f64, 0.0f64, start);
    loop {
        let levy = model.levy(j);
        let switch_rate = if n > 1 { -q[(j, j)] } else { 0.0 };
        let total = switch_rate + levy.jump_rate();
        let wait = if total > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / total
        } else {
            f64::INFINITY
        };
        let last = t + wait >= horizon;
        let h = if last { horizon - t } else { wait };
        let seg = Segment { state: j, t0: t, x0: x, h, drift: levy.drift, sigma: levy.sigma() };
        let Some(y) = obs.segment(rng, &seg) else { return };
        x += y;
        if last {
            obs.end(horizon, x, j);
            return;
        }
        t += wait;
        let u = rng.random::<f64>() * total;
        if u < switch_rate {
            let w: Vec<f64> = (0..n).map(|k| if k == j { 0.0 } else { q[(j, k)] }).collect();
            let k = categorical(rng, &w);
            let dx = model.trans_jump(j).sample(rng);
            if !obs.jump(t, x, dx, j, k) {
                return;
            }
            x += dx;
            j = k;
        } else {
            let rates: Vec<f64> = levy.jumps.iter().map(|jt| jt.rate).collect();
            let k = categorical(rng, &rates);
            let dx = levy.jumps[k].law.sample(rng);
            if !obs.jump(t, x, dx, j, j) {
                return;
            }
            x += dx;
        }
    }
}

/// Time of the maximum of a Brownian bridge on `[0, h]` whose maximum lies
/// `a` above the start and `b` above the end, both in units of sigma.
fn argmax_time<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, h: f64) -> f64 {
    if !(a > 0.0) {
        return 0.0;
    }
    if !(b > 0.0) {
        return h;
    }
    let ig = |mean: f64, shape: f64, rng: &mut R| -> f64 {
        InverseGaussian::new(mean, shape).map(|d| d.sample(rng)).unwrap_or(mean)
    };
    let u = if rng.random::<f64>() < b / (a + b) { ig(a / b, a * a / h, rng) } else { 1.0 / ig(b / a, b * b / h, rng) };
    h * u / (1.0 + u)
}

/// Maximum of a Brownian bridge from 0 to `y` over time `h` with variance `sigma^2`.
fn bridge_max<R: Rng + ?Sized>(rng: &mut R, y: f64, sigma: f64, h: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    0.5 * (y + (y * y + 2.0 * sigma * sigma * h * e).sqrt())
}

/// One replication of the killed path functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KilledRecord {
    pub rep: usize,
    pub j0: usize,
    pub e_q: f64,
    pub x: f64,
    pub s: f64,
    pub i: f64,
    pub g_bar: f64,
    pub g: f64,
    pub j_eq: usize,
    pub j_gbar: usize,
    pub j_g: usize,
}

#[derive(Debug, Clone)]
pub struct KilledStats {
    /// Killing rate, or `None` for a fixed horizon.
    pub q: Option<f64>,
    pub seed: u64,
    pub n_states: usize,
    pub records: Vec<KilledRecord>,
}

/// Running extrema. The state at the supremum is the state in which the path
/// arrives there (post-jump state for an upward landing); the state at the
/// infimum is the state in which it departs (post-jump state after a downward
/// landing, pre-jump state before an upward jump). Ties go to the later epoch.
struct Extremes {
    s: f64,
    g_bar: f64,
    j_gbar: usize,
    i: f64,
    g: f64,
    j_g: usize,
    end: (f64, f64, usize),
}

impl Extremes {
    fn new(j0: usize) -> Self {
        Extremes { s: 0.0, g_bar: 0.0, j_gbar: j0, i: 0.0, g: 0.0, j_g: j0, end: (0.0, 0.0, j0) }
    }

    fn max_at(&mut self, x: f64, t: f64, j: usize) {
        if x >= self.s {
            (self.s, self.g_bar, self.j_gbar) = (x, t, j);
        }
    }

    fn min_at(&mut self, x: f64, t: f64, j: usize) {
        if x <= self.i {
            (self.i, self.g, self.j_g) = (x, t, j);
        }
    }
}

impl Observer for Extremes {
    fn segment<R: Rng + ?Sized>(&mut self, rng: &mut R, seg: &Segment) -> Option<f64> {
        let y = seg.endpoint(rng);
        let (x0, t0, h, j) = (seg.x0, seg.t0, seg.h, seg.state);
        if seg.sigma > 0.0 {
            let s = seg.sigma;
            let m = bridge_max(rng, y, s, h);
            let th = argmax_time(rng, m / s, (m - y) / s, h);
            self.max_at(x0 + m, t0 + th, j);
            let mm = bridge_max(rng, -y, s, h);
            let th = argmax_time(rng, mm / s, (mm + y) / s, h);
            self.min_at(x0 - mm, t0 + th, j);
        } else {
            self.min_at(x0, t0, j);
            if y > 0.0 {
                self.max_at(x0 + y, t0 + h, j);
            }
        }
        Some(y)
    }

    fn jump(&mut self, t: f64, x_before: f64, dx: f64, from: usize, to: usize) -> bool {
        if dx > 0.0 {
            self.min_at(x_before, t, from);
            self.max_at(x_before + dx, t, to);
        }
        true
    }

    fn end(&mut self, t: f64, x: f64, state: usize) {
        self.max_at(x, t, state);
        self.min_at(x, t, state);
        self.end = (t, x, state);
    }
}

fn extremes_record(
    model: &ValidatedModel,
    rep: usize,
    seed: u64,
    horizon: Option<f64>,
    q: f64,
    start: StartLaw,
) -> KilledRecord {
    let mut rng = replication_rng(seed, rep as u64);
    let j0 = draw_start(model, start, rep, &mut rng);
    let e_q = horizon.unwrap_or_else(|| {
        let e: f64 = Exp1.sample(&mut rng);
        e / q
    });
    let mut ex = Extremes::new(j0);
    drive(model, &mut rng, j0, e_q, &mut ex);
    let (_, x, j_eq) = ex.end;
    KilledRecord { rep, j0, e_q, x, s: ex.s, i: ex.i, g_bar: ex.g_bar, g: ex.g, j_eq, j_gbar: ex.j_gbar, j_g: ex.j_g }
}

/// `n` independent paths killed at an independent exponential time of rate `q`.
pub fn killed_stats(model: &ValidatedModel, q: f64, n: usize, seed: u64, start: StartLaw) -> KilledStats {
    assert!(q > 0.0, "killing rate must be positive");
    let records = (0..n).into_par_iter().map(|r| extremes_record(model, r, seed, None, q, start)).collect();
    KilledStats { q: Some(q), seed, n_states: model.n_states(), records }
}

/// Same functionals at the fixed time `t` (the `e_q` column then holds `t`).
pub fn fixed_time_stats(model: &ValidatedModel, t: f64, n: usize, seed: u64, start: StartLaw) -> KilledStats {
    assert!(t > 0.0, "horizon must be positive");
    let records = (0..n).into_par_iter().map(|r| extremes_record(model, r, seed, Some(t), 0.0, start)).collect();
    KilledStats { q: None, seed, n_states: model.n_states(), records }
}

impl KilledStats {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rep,start_state,e_q,X,S,I,G_bar,G,j_eq,j_Gbar,j_G")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.rep, r.j0, r.e_q, r.x, r.s, r.i, r.g_bar, r.g, r.j_eq, r.j_gbar, r.j_g
            )?;
        }
        Ok(())
    }
}

/// Hitting time of level `d > 0` by Brownian motion with drift `a` and volatility `s`.
fn hitting_time<R: Rng + ?Sized>(rng: &mut R, a: f64, s: f64, d: f64) -> f64 {
    let shape = d * d / (s * s);
    if a > 0.0 {
        InverseGaussian::new(d / a, shape).map(|ig| ig.sample(rng)).unwrap_or(d / a)
    } else if a == 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        shape / (z * z)
    } else if rng.random::<f64>() < (2.0 * a * d / (s * s)).exp() {
        InverseGaussian::new(d / -a, shape).map(|ig| ig.sample(rng)).unwrap_or(d / -a)
    } else {
        f64::INFINITY
    }
}

struct Passage<'a> {
    levels: &'a [f64],
    next: usize,
    hits: Vec<Option<(f64, usize)>>,
}

impl Passage<'_> {
    fn record_upto(&mut self, x: f64, t: f64, j: usize) {
        while self.next < self.levels.len() && self.levels[self.next] <= x {
            self.hits[self.next] = Some((t, j));
            self.next += 1;
        }
    }

    fn done(&self) -> bool {
        self.next >= self.levels.len()
    }
}

impl Observer for Passage<'_> {
    fn segment<R: Rng + ?Sized>(&mut self, rng: &mut R, seg: &Segment) -> Option<f64> {
        let (mut t0, mut x0, mut rem) = (seg.t0, seg.x0, seg.h);
        let (a, s) = (seg.drift, seg.sigma);
        loop {
            if self.done() {
                return None;
            }
            let d = self.levels[self.next] - x0;
            if s > 0.0 {
                let tau = hitting_time(rng, a, s, d);
                if tau <= rem {
                    t0 += tau;
                    rem -= tau;
                    x0 = self.levels[self.next];
                    self.record_upto(x0, t0, seg.state);
                    continue;
                }
                let var = s * s * rem;
                loop {
                    let z: f64 = StandardNormal.sample(rng);
                    let y = a * rem + var.sqrt() * z;
                    if y < d && rng.random::<f64>() < 1.0 - (-2.0 * d * (d - y) / var).exp() {
                        return Some(x0 + y - seg.x0);
                    }
                }
            } else if a > 0.0 && a * rem >= d {
                let tau = d / a;
                t0 += tau;
                rem -= tau;
                x0 = self.levels[self.next];
                self.record_upto(x0, t0, seg.state);
            } else {
                return Some(x0 + a * rem - seg.x0);
            }
        }
    }

    fn jump(&mut self, t: f64, x_before: f64, dx: f64, _from: usize, to: usize) -> bool {
        if dx > 0.0 {
            self.record_upto(x_before + dx, t, to);
        }
        !self.done()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassageRecord {
    pub rep: usize,
    pub j0: usize,
    /// Killing time, when killing is on.
    pub e_q: Option<f64>,
    /// `(tau_x, J(tau_x))` per level; `None` if killed or capped first.
    pub hits: Vec<Option<(f64, usize)>>,
}

#[derive(Debug, Clone)]
pub struct PassageSamples {
    pub levels: Vec<f64>,
    pub kill_rate: Option<f64>,
    pub horizon: f64,
    pub seed: u64,
    pub n_states: usize,
    pub records: Vec<PassageRecord>,
    /// Paths that reached the time cap (not the killing time) before the last level.
    pub horizon_exhausted: usize,
}

/// First passage above each of the increasing positive `levels`. With `kill_rate`
/// the path stops at an independent exponential time; otherwise at `horizon`.
pub fn first_passage(
    model: &ValidatedModel,
    levels: &[f64],
    n: usize,
    seed: u64,
    kill_rate: Option<f64>,
    horizon: f64,
    start: StartLaw,
) -> Result<PassageSamples> {
    if levels.is_empty() || levels[0] <= 0.0 || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("first-passage levels must be positive and increasing".into()));
    }
    let records: Vec<PassageRecord> = (0..n)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep as u64);
            let j0 = draw_start(model, start, rep, &mut rng);
            let e_q = kill_rate.map(|q| {
                let e: f64 = Exp1.sample(&mut rng);
                e / q
            });
            let cap = e_q.map_or(horizon, |e| e.min(horizon));
            let mut p = Passage { levels, next: 0, hits: vec![None; levels.len()] };
            drive(model, &mut rng, j0, cap, &mut p);
            PassageRecord { rep, j0, e_q, hits: p.hits }
        })
        .collect();
    let horizon_exhausted =
        records.iter().filter(|r| r.hits.last().unwrap().is_none() && r.e_q.is_none_or(|e| e >= horizon)).count();
    Ok(PassageSamples {
        levels: levels.to_vec(),
        kill_rate,
        horizon,
        seed,
        n_states: model.n_states(),
        records,
        horizon_exhausted,
    })
}

impl PassageSamples {
    /// Estimate of `E[e^{-weight tau_x}; tau_x < (killing), J(tau_x)]` for level index `k`.
    /// With killing on, pass `weight = 0` to estimate the transform at the killing rate.
    pub fn transform(&self, k: usize, weight: f64) -> Result<EstimateMatrix> {
        let n = self.n_states;
        let mut acc = Accumulator::new(n);
        for r in &self.records {
            let row = acc.row(r.j0);
            let val = r.hits[k].map(|(t, _)| (-weight * t).exp()).unwrap_or(0.0);
            let col = r.hits[k].map(|(_, j)| j);
            row.add(col, Complex64::new(val, 0.0));
        }
        acc.finish(self.seed)
    }
}

/// A path record for inspection: the value just before and after every event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonNode {
    pub t: f64,
    pub x: f64,
    pub state: usize,
}

struct Skeleton {
    nodes: Vec<SkeletonNode>,
    occupancy: Vec<f64>,
}

impl Observer for Skeleton {
    fn segment<R: Rng + ?Sized>(&mut self, rng: &mut R, seg: &Segment) -> Option<f64> {
        let y = seg.endpoint(rng);
        self.occupancy[seg.state] += seg.h;
        self.nodes.push(SkeletonNode { t: seg.t0 + seg.h, x: seg.x0 + y, state: seg.state });
        Some(y)
    }

    fn jump(&mut self, t: f64, x_before: f64, dx: f64, _from: usize, to: usize) -> bool {
        self.nodes.push(SkeletonNode { t, x: x_before + dx, state: to });
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSkeleton {
    pub nodes: Vec<SkeletonNode>,
    /// Time spent in each state.
    pub occupancy: Vec<f64>,
}

/// The path of replication `rep` up to `horizon`. Bit-identical for fixed `(seed, rep)`.
pub fn sample_path(model: &ValidatedModel, horizon: f64, seed: u64, rep: u64, start: usize) -> PathSkeleton {
    let mut rng = replication_rng(seed, rep);
    let mut sk =
        Skeleton { nodes: vec![SkeletonNode { t: 0.0, x: 0.0, state: start }], occupancy: vec![0.0; model.n_states()] };
    drive(model, &mut rng, start, horizon, &mut sk);
    PathSkeleton { nodes: sk.nodes, occupancy: sk.occupancy }
}

/// Epoch at which the modulating state is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Epoch {
    Eq,
    GBar,
    G,
}

/// Exponent of the functional, `exp(s S + i I + x X - g_bar Gbar - g G - e e_q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functional {
    pub s: Complex64,
    pub i: Complex64,
    pub x: Complex64,
    pub g_bar: f64,
    pub g: f64,
    pub e: f64,
}

impl Functional {
    pub fn one() -> Self {
        let z = Complex64::new(0.0, 0.0);
        Functional { s: z, i: z, x: z, g_bar: 0.0, g: 0.0, e: 0.0 }
    }

    /// `exp(-alpha S - xi Gbar)`.
    pub fn sup(alpha: Complex64, xi: f64) -> Self {
        Functional { s: -alpha, g_bar: xi, ..Functional::one() }
    }

    /// `exp(alpha I - xi G)`.
    pub fn inf(alpha: Complex64, xi: f64) -> Self {
        Functional { i: alpha, g: xi, ..Functional::one() }
    }

    /// `exp(alpha X - xi e_q)`.
    pub fn terminal(alpha: Complex64, xi: f64) -> Self {
        Functional { x: alpha, e: xi, ..Functional::one() }
    }

    pub fn eval(&self, r: &KilledRecord) -> Complex64 {
        (self.s * r.s + self.i * r.i + self.x * r.x - self.g_bar * r.g_bar - self.g * r.g - self.e * r.e_q).exp()
    }
}

/// Entrywise Monte Carlo estimate: `value[(i, j)]` averages over replications
/// started in `i`; standard errors are given separately for real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateMatrix {
    pub value: CMatrix,
    pub stderr: RMatrix,
    pub stderr_im: RMatrix,
    pub n: Vec<usize>,
    pub seed: u64,
}

impl EstimateMatrix {
    pub fn real(&self) -> RMatrix {
        self.value.map(|z| z.re)
    }

    /// Largest `|estimate - target| / stderr` over real and imaginary parts;
    /// zero-variance entries count only if they differ by more than `1e-12`.
    pub fn max_z(&self, target: &CMatrix) -> f64 {
        let mut worst = 0.0f64;
        for ((v, t), (se, se_im)) in
            self.value.iter().zip(target.iter()).zip(self.stderr.iter().zip(self.stderr_im.iter()))
        {
            for (d, s) in [((v.re - t.re).abs(), *se), ((v.im - t.im).abs(), *se_im)] {
                let z = if s > 0.0 {
                    d / s
                } else if d > 1e-12 {
                    f64::INFINITY
                } else {
                    0.0
                };
                worst = worst.max(z);
            }
        }
        worst
    }
}

pub(crate) struct RowAcc {
    n: usize,
    sum: Vec<Complex64>,
    sum_sq_re: Vec<f64>,
    sum_sq_im: Vec<f64>,
}

impl RowAcc {
    /// One replication contributing `val` to column `col` (and 0 elsewhere).
    pub fn add(&mut self, col: Option<usize>, val: Complex64) {
        self.n += 1;
        if let Some(c) = col {
            self.sum[c] += val;
            self.sum_sq_re[c] += val.re * val.re;
            self.sum_sq_im[c] += val.im * val.im;
        }
    }
}

pub(crate) struct Accumulator {
    rows: Vec<RowAcc>,
}

impl Accumulator {
    pub fn new(n: usize) -> Self {
        Accumulator {
            rows: (0..n)
                .map(|_| RowAcc {
                    n: 0,
                    sum: vec![Complex64::new(0.0, 0.0); n],
                    sum_sq_re: vec![0.0; n],
                    sum_sq_im: vec![0.0; n],
                })
                .collect(),
        }
    }

    pub fn row(&mut self, i: usize) -> &mut RowAcc {
        &mut self.rows[i]
    }

    pub fn finish(self, seed: u64) -> Result<EstimateMatrix> {
        let n = self.rows.len();
        let mut value = CMatrix::zeros(n, n);
        let mut stderr = RMatrix::zeros(n, n);
        let mut stderr_im = RMatrix::zeros(n, n);
        let mut counts = Vec::with_capacity(n);
        for (i, r) in self.rows.iter().enumerate() {
            if r.n == 0 {
                return Err(Error::EmptyCell { state: i });
            }
            let m = r.n as f64;
            for j in 0..n {
                let mean = r.sum[j] / m;
                value[(i, j)] = mean;
                let denom = if r.n > 1 { m - 1.0 } else { 1.0 };
                let var_re = ((r.sum_sq_re[j] - m * mean.re * mean.re) / denom).max(0.0);
                let var_im = ((r.sum_sq_im[j] - m * mean.im * mean.im) / denom).max(0.0);
                stderr[(i, j)] = (var_re / m).sqrt();
                stderr_im[(i, j)] = (var_im / m).sqrt();
            }
            counts.push(r.n);
        }
        Ok(EstimateMatrix { value, stderr, stderr_im, n: counts, seed })
    }
}

/// `(1/n_i) sum exp(functional) 1{J(epoch) = j}` over replications started in `i`.
pub fn estimate_transform(stats: &KilledStats, functional: &Functional, epoch: Epoch) -> Result<EstimateMatrix> {
    let mut acc = Accumulator::new(stats.n_states);
    for r in &stats.records {
        let col = match epoch {
            Epoch::Eq => r.j_eq,
            Epoch::GBar => r.j_gbar,
            Epoch::G => r.j_g,
        };
        acc.row(r.j0).add(Some(col), functional.eval(r));
    }
    acc.finish(stats.seed)
}

/// Per-start-state sums of matrix-valued per-path influence terms.
struct Influence {
    n: usize,
    groups: Vec<(usize, CMatrix, RMatrix, RMatrix)>,
}

impl Influence {
    fn new(n: usize) -> Self {
        let z = (0, CMatrix::zeros(n, n), RMatrix::zeros(n, n), RMatrix::zeros(n, n));
        Influence { n, groups: vec![z; n] }
    }

    fn add(&mut self, group: usize, y: &CMatrix) {
        let g = &mut self.groups[group];
        g.0 += 1;
        g.1 += y;
        g.2 += y.map(|z| z.re * z.re);
        g.3 += y.map(|z| z.im * z.im);
    }

    /// Variance of the linearized estimator: the sum over groups of the sample
    /// variance divided by the group size.
    fn variance(&self) -> (RMatrix, RMatrix) {
        let n = self.n;
        let mut vr = RMatrix::zeros(n, n);
        let mut vi = RMatrix::zeros(n, n);
        for (m, sum, sq_re, sq_im) in &self.groups {
            if *m < 2 {
                continue;
            }
            let mf = *m as f64;
            for k in 0..n * n {
                let mean = sum[k] / mf;
                vr[k] += ((sq_re[k] - mf * mean.re * mean.re) / (mf - 1.0)).max(0.0) / mf;
                vi[k] += ((sq_im[k] - mf * mean.im * mean.im) / (mf - 1.0)).max(0.0) / mf;
            }
        }
        (vr, vi)
    }
}

/// Monte Carlo estimate of `E[e^{i alpha X(e_q) - xi e_q}; J(e_q)]` through the
/// path decomposition at the time of the supremum:
/// `A diag(w) B^T D_pi` with `A = E[e^{i alpha S - xi Gbar}; J(Gbar)]` from the
/// forward paths, `B = E^[e^{i alpha I - xi G}; J(G)]` from paths of the reversed
/// model, and `w_k = 1 / P_pi(J(Gbar) = k)`, also estimated from the forward paths.
/// Standard errors linearize the product in all three estimated quantities.
pub fn wh_product_estimate(
    forward: &KilledStats,
    reversed: &KilledStats,
    pi: &[f64],
    alpha: f64,
    xi: f64,
) -> Result<EstimateMatrix> {
    let n = forward.n_states;
    let a_fn = Functional::sup(Complex64::new(0.0, -alpha), xi);
    let b_fn = Functional::inf(Complex64::new(0.0, alpha), xi);
    let a = estimate_transform(forward, &a_fn, Epoch::GBar)?;
    let a0 = estimate_transform(forward, &Functional::one(), Epoch::GBar)?.real();
    let b = estimate_transform(reversed, &b_fn, Epoch::G)?;
    let (a, b) = (a.value, b.value);
    let w: Vec<f64> = (0..n).map(|k| 1.0 / (0..n).map(|m| pi[m] * a0[(m, k)]).sum::<f64>()).collect();
    let value = CMatrix::from_fn(n, n, |i, j| (0..n).map(|k| a[(i, k)] * w[k] * b[(j, k)] * pi[j]).sum());

    let mut inf_f = Influence::new(n);
    for r in &forward.records {
        let (i0, k, f) = (r.j0, r.j_gbar, a_fn.eval(r));
        let y = CMatrix::from_fn(n, n, |i, j| {
            let direct = if i == i0 { f * w[k] * b[(j, k)] * pi[j] } else { Complex64::new(0.0, 0.0) };
            direct - a[(i, k)] * w[k] * w[k] * pi[i0] * b[(j, k)] * pi[j]
        });
        inf_f.add(i0, &y);
    }
    let mut inf_r = Influence::new(n);
    for r in &reversed.records {
        let (j0, k, g) = (r.j0, r.j_g, b_fn.eval(r));
        let y = CMatrix::from_fn(
            n,
            n,
            |i, j| if j == j0 { pi[j] * a[(i, k)] * w[k] * g } else { Complex64::new(0.0, 0.0) },
        );
        inf_r.add(j0, &y);
    }
    let (fr, fi) = inf_f.variance();
    let (rr, ri) = inf_r.variance();
    let stderr = (fr + rr).map(f64::sqrt);
    let stderr_im = (fi + ri).map(f64::sqrt);
    let mut counts = vec![0usize; n];
    for r in &forward.records {
        counts[r.j0] += 1;
    }
    Ok(EstimateMatrix { value, stderr, stderr_im, n: counts, seed: forward.seed })
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov-Smirnov statistic against the CDF `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (k, &x)| {
        let f = cdf(x);
        d.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs())
    })
}
