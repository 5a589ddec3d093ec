//! Monte Carlo oracles.
//!
//! The fluid queue is simulated exactly: between phase changes the level is
//! `clamp(x + c t, 0, b)`. The MMBM is stepped on a time grid with phase
//! changes at exact exponential times (steps are split there). Within each
//! constant-phase substep the two-sided reflection is applied either by
//! projection of the endpoint or, by default, by the Skorokhod map of the
//! Brownian path whose extremum is drawn from its bridge law.
//!
//! Randomness is `ChaCha8Rng` seeded with `seed_from_u64(seed)`; path `k`
//! uses stream `k`, so paths are independent and reproducible on every
//! platform.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::fluid::FiniteBufferSolution;
use crate::limit::MmbmSolution;
use crate::model::{FluidModel, MmbmModel};

/// Number of batches per path used for the batch-means effective sample size.
pub const BATCHES: usize = 100;

/// Boundary treatment of the Euler scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryScheme {
    /// Skorokhod map of the Brownian increment path, with the running
    /// extremum sampled from the bridge law given the endpoint.
    #[default]
    Bridge,
    /// Projection of the Euler endpoint onto `[0, b]`.
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Simulated time per path, burn-in included, for a single path. With
    /// several paths the post-burn-in time is split evenly between them.
    pub horizon: f64,
    pub burn_in: f64,
    /// Euler step (MMBM only).
    pub step: f64,
    pub sample_dt: f64,
    pub seed: u64,
    pub bins: usize,
    pub paths: usize,
    pub scheme: BoundaryScheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 2e5,
            burn_in: 1e3,
            step: 1e-3,
            sample_dt: 1e-2,
            seed: 0,
            bins: 100,
            paths: 1,
            scheme: BoundaryScheme::Bridge,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidConfig(s.into()));
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return bad("burn_in must be finite and >= 0");
        }
        if !(self.horizon > self.burn_in && self.horizon.is_finite()) {
            return bad("horizon must be finite and exceed burn_in");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.sample_dt > 0.0 && self.sample_dt.is_finite()) {
            return bad("sample_dt must be positive");
        }
        if self.bins < 10 {
            return bad("bins must be at least 10");
        }
        if self.paths == 0 {
            return bad("paths must be at least 1");
        }
        Ok(())
    }

    /// Recorded (post-burn-in) time of one path.
    pub fn path_window(&self) -> f64 {
        (self.horizon - self.burn_in) / self.paths as f64
    }

    /// Largest recommended Euler step, `(b/20)^2 / max σ²`.
    pub fn max_recommended_step(model: &MmbmModel) -> f64 {
        let s = model.sigma2().max();
        (model.b() / 20.0) * (model.b() / 20.0) / s
    }

    pub fn step_too_coarse(&self, model: &MmbmModel) -> bool {
        self.step > Self::max_recommended_step(model)
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }
}

/// Local-time totals of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTimes {
    /// Cumulative push at 0.
    pub lower: f64,
    /// Cumulative push at `b`.
    pub upper: f64,
    /// Recorded time over which they accumulated.
    pub time: f64,
}

/// Histogram of sampled (level, phase) pairs with boundary atoms and
/// local-time totals. Merging is associative and order-independent: counts
/// are integers and per-path quantities are kept as sorted lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    pub b: f64,
    pub bins: usize,
    pub phases: usize,
    /// `counts[i * bins + k]`: samples in phase `i`, bin `k`, level in `(0, b)`.
    pub counts: Vec<u64>,
    /// Samples exactly at 0, per phase.
    pub at0: Vec<u64>,
    /// Samples exactly at `b`, per phase.
    pub atb: Vec<u64>,
    /// Batch means of the level, sorted.
    pub batch_means: Vec<f64>,
    /// Per-path local times, sorted.
    pub local_times: Vec<LocalTimes>,
}

fn sort_f64(v: &mut [f64]) {
    v.sort_by(|a, b| a.total_cmp(b));
}

fn sort_local(v: &mut [LocalTimes]) {
    v.sort_by(|a, b| {
        a.lower
            .total_cmp(&b.lower)
            .then(a.upper.total_cmp(&b.upper))
            .then(a.time.total_cmp(&b.time))
    });
}

impl EmpiricalLaw {
    pub fn new(b: f64, bins: usize, phases: usize) -> Self {
        Self {
            b,
            bins,
            phases,
            counts: vec![0; bins * phases],
            at0: vec![0; phases],
            atb: vec![0; phases],
            batch_means: Vec::new(),
            local_times: Vec::new(),
        }
    }

    /// Adds one observation (no batch bookkeeping).
    pub fn record(&mut self, x: f64, phase: usize) {
        if x <= 0.0 {
            self.at0[phase] += 1;
        } else if x >= self.b {
            self.atb[phase] += 1;
        } else {
            let k = ((x / self.b) * self.bins as f64) as usize;
            self.counts[phase * self.bins + k.min(self.bins - 1)] += 1;
        }
    }

    /// Law of i.i.d. observations, batched in arrival order.
    pub fn from_samples<I>(b: f64, bins: usize, phases: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, usize)>,
    {
        let data: Vec<(f64, usize)> = samples.into_iter().collect();
        if data.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut law = Self::new(b, bins, phases);
        let mut batches = Batches::new(data.len() as f64);
        for (i, (x, p)) in data.iter().enumerate() {
            if *p >= phases {
                return Err(Error::DimensionMismatch("sample phase out of range".into()));
            }
            law.record(*x, *p);
            batches.add(i as f64, x.clamp(0.0, b));
        }
        law.batch_means = batches.finish();
        sort_f64(&mut law.batch_means);
        Ok(law)
    }

    fn compatible(&self, other: &Self) -> bool {
        self.b == other.b && self.bins == other.bins && self.phases == other.phases
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if !self.compatible(other) {
            return Err(Error::DimensionMismatch("empirical laws on different grids".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.at0.iter_mut().zip(&other.at0) {
            *a += b;
        }
        for (a, b) in self.atb.iter_mut().zip(&other.atb) {
            *a += b;
        }
        self.batch_means.extend_from_slice(&other.batch_means);
        sort_f64(&mut self.batch_means);
        self.local_times.extend_from_slice(&other.local_times);
        sort_local(&mut self.local_times);
        Ok(())
    }

    /// Sums the two copies of a doubled phase space (`phases = 2m`).
    pub fn collapse(&self) -> Result<Self> {
        if !self.phases.is_multiple_of(2) {
            return Err(Error::DimensionMismatch("odd phase count cannot be collapsed".into()));
        }
        let m = self.phases / 2;
        let mut out = Self::new(self.b, self.bins, m);
        for i in 0..m {
            for k in 0..self.bins {
                out.counts[i * self.bins + k] =
                    self.counts[i * self.bins + k] + self.counts[(m + i) * self.bins + k];
            }
            out.at0[i] = self.at0[i] + self.at0[m + i];
            out.atb[i] = self.atb[i] + self.atb[m + i];
        }
        out.batch_means = self.batch_means.clone();
        out.local_times = self.local_times.clone();
        Ok(out)
    }

    pub fn samples(&self) -> u64 {
        self.counts.iter().chain(&self.at0).chain(&self.atb).sum()
    }

    pub fn bin_width(&self) -> f64 {
        self.b / self.bins as f64
    }

    /// Sample count per phase.
    pub fn phase_counts(&self) -> Vec<u64> {
        (0..self.phases)
            .map(|i| {
                self.counts[i * self.bins..(i + 1) * self.bins].iter().sum::<u64>()
                    + self.at0[i]
                    + self.atb[i]
            })
            .collect()
    }

    /// Fraction of samples in each phase.
    pub fn phase_occupancy(&self) -> Vec<f64> {
        let n = self.samples() as f64;
        self.phase_counts().iter().map(|c| *c as f64 / n).collect()
    }

    /// Fractions of samples at 0 and at `b`, per phase.
    pub fn boundary_fractions(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.samples() as f64;
        (
            self.at0.iter().map(|c| *c as f64 / n).collect(),
            self.atb.iter().map(|c| *c as f64 / n).collect(),
        )
    }

    /// Cumulative pushes per unit recorded time at 0 and at `b`.
    pub fn local_time_rates(&self) -> Option<(f64, f64)> {
        let t: f64 = self.local_times.iter().map(|l| l.time).sum();
        if !(t > 0.0) {
            return None;
        }
        let w: f64 = self.local_times.iter().map(|l| l.lower).sum();
        let m: f64 = self.local_times.iter().map(|l| l.upper).sum();
        Some((w / t, m / t))
    }

    /// Level mean and variance from the histogram (bin midpoints, atoms at
    /// their boundary).
    pub fn level_moments(&self) -> Result<(f64, f64)> {
        let n = self.samples();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let h = self.bin_width();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for k in 0..self.bins {
            let c: u64 = (0..self.phases).map(|i| self.counts[i * self.bins + k]).sum();
            let x = (k as f64 + 0.5) * h;
            s1 += c as f64 * x;
            s2 += c as f64 * x * x;
        }
        let top: u64 = self.atb.iter().sum();
        s1 += top as f64 * self.b;
        s2 += top as f64 * self.b * self.b;
        let n = n as f64;
        let mean = s1 / n;
        Ok((mean, (s2 / n - mean * mean).max(0.0)))
    }

    /// Effective sample size from batch means.
    pub fn n_eff(&self) -> Result<f64> {
        let n = self.samples() as f64;
        let (_, var) = self.level_moments()?;
        let bm = &self.batch_means;
        if bm.len() < 2 || var == 0.0 {
            return Ok(n);
        }
        let k = bm.len() as f64;
        let mean = bm.iter().sum::<f64>() / k;
        let s2 = bm.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
        if s2 == 0.0 {
            return Ok(n);
        }
        Ok((var * k / s2).clamp(1.0, n))
    }

    /// Standard error of the level mean (batch means).
    pub fn mean_standard_error(&self) -> Result<f64> {
        let (_, var) = self.level_moments()?;
        Ok(libm::sqrt(var / self.n_eff()?))
    }

    /// Empirical level CDF `P(level <= x)` at the bin edges `k b / bins`,
    /// `k = 0..=bins` (entry 0 is the atom at 0, entry `bins` is 1).
    pub fn level_cdf_at_edges(&self) -> Vec<f64> {
        let n = self.samples() as f64;
        let mut out = Vec::with_capacity(self.bins + 1);
        let mut acc: u64 = self.at0.iter().sum();
        out.push(acc as f64 / n);
        for k in 0..self.bins {
            acc += (0..self.phases).map(|i| self.counts[i * self.bins + k]).sum::<u64>();
            out.push(acc as f64 / n);
        }
        let last = out.len() - 1;
        out[last] = 1.0;
        out
    }

    /// Joint CDF `P(level <= x, phase = i)` at bin edges, for one phase.
    pub fn phase_cdf_at_edges(&self, phase: usize) -> Vec<f64> {
        let n = self.samples() as f64;
        let mut out = Vec::with_capacity(self.bins + 1);
        let mut acc = self.at0[phase];
        out.push(acc as f64 / n);
        for k in 0..self.bins {
            acc += self.counts[phase * self.bins + k];
            out.push(acc as f64 / n);
        }
        let last = out.len() - 1;
        out[last] += self.atb[phase] as f64 / n;
        out
    }
}

/// Splits a recording window into [`BATCHES`] equal batches and tracks
/// the level mean of each.
struct Batches {
    window: f64,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl Batches {
    fn new(window: f64) -> Self {
        Self {
            window,
            sums: vec![0.0; BATCHES],
            counts: vec![0; BATCHES],
        }
    }

    fn add(&mut self, t: f64, x: f64) {
        let k = ((t / self.window) * BATCHES as f64) as usize;
        let k = k.min(BATCHES - 1);
        self.sums[k] += x;
        self.counts[k] += 1;
    }

    fn finish(self) -> Vec<f64> {
        self.sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, c)| **c > 0)
            .map(|(s, c)| s / *c as f64)
            .collect()
    }
}

/// Jump table for a generator: per state, the total rate and the cumulative
/// off-diagonal rates.
struct JumpTable {
    rates: Vec<f64>,
    cumulative: Vec<Vec<(usize, f64)>>,
}

impl JumpTable {
    fn new(q: &DMatrix<f64>) -> Self {
        let n = q.nrows();
        let mut rates = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = 0.0;
            let mut row = Vec::new();
            for j in 0..n {
                if j != i && q[(i, j)] > 0.0 {
                    acc += q[(i, j)];
                    row.push((j, acc));
                }
            }
            rates.push(acc);
            cumulative.push(row);
        }
        Self { rates, cumulative }
    }

    fn holding<R: Rng>(&self, state: usize, rng: &mut R) -> f64 {
        let r = self.rates[state];
        if r > 0.0 {
            rng.sample::<f64, _>(Exp1) / r
        } else {
            f64::INFINITY
        }
    }

    fn jump<R: Rng>(&self, state: usize, rng: &mut R) -> usize {
        let row = &self.cumulative[state];
        let u = rng.random::<f64>() * self.rates[state];
        row.iter()
            .find(|(_, c)| u < *c)
            .or(row.last())
            .map(|(j, _)| *j)
            .unwrap_or(state)
    }
}

fn initial_phase(alpha: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, a) in alpha.iter().enumerate() {
        acc += a;
        if u < acc {
            return i;
        }
    }
    alpha.len() - 1
}

/// One path of the fluid queue on `[0, b]`, started at level 0 in a phase
/// drawn from the stationary phase law.
pub fn simulate_fluid_path(fluid: &FluidModel, b: f64, cfg: &SimConfig, path: usize) -> Result<EmpiricalLaw> {
    cfg.validate()?;
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::BadBuffer(b));
    }
    let n = fluid.states();
    let table = JumpTable::new(fluid.t());
    let c = fluid.c();
    let mut rng = cfg.rng(path);
    let pi = fluid.phase_distribution()?;
    let pi: Vec<f64> = pi.iter().copied().collect();

    let window = cfg.path_window();
    let end = cfg.burn_in + window;
    let mut law = EmpiricalLaw::new(b, cfg.bins, n);
    let mut batches = Batches::new(window);
    let mut local = LocalTimes { lower: 0.0, upper: 0.0, time: window };

    let mut state = initial_phase(&pi, rng.random::<f64>());
    let mut x = 0.0f64;
    let mut t = 0.0f64;
    let mut next_obs = cfg.burn_in;
    let mut obs_index: u64 = 0;
    while t < end {
        let hold = table.holding(state, &mut rng);
        let t_next = (t + hold).min(end);
        let rate = c[state];
        while next_obs < t_next {
            let level = (x + rate * (next_obs - t)).clamp(0.0, b);
            law.record(level, state);
            batches.add(next_obs - cfg.burn_in, level);
            obs_index += 1;
            next_obs = cfg.burn_in + obs_index as f64 * cfg.sample_dt;
        }
        // Local time over the recorded part of [t, t_next].
        let lo = t.max(cfg.burn_in);
        if t_next > lo {
            let x_lo = (x + rate * (lo - t)).clamp(0.0, b);
            let dt = t_next - lo;
            if rate < 0.0 {
                local.lower += (-rate) * (dt - x_lo / -rate).max(0.0);
            } else if rate > 0.0 {
                local.upper += rate * (dt - (b - x_lo) / rate).max(0.0);
            }
        }
        x = (x + rate * (t_next - t)).clamp(0.0, b);
        t = t_next;
        if t < end {
            state = table.jump(state, &mut rng);
        }
    }
    law.batch_means = batches.finish();
    sort_f64(&mut law.batch_means);
    law.local_times.push(local);
    Ok(law)
}

/// Exact simulation of the fluid queue; paths run in order and are merged.
pub fn simulate_fluid(fluid: &FluidModel, b: f64, cfg: &SimConfig) -> Result<EmpiricalLaw> {
    let mut law = simulate_fluid_path(fluid, b, cfg, 0)?;
    for p in 1..cfg.paths {
        law.merge(&simulate_fluid_path(fluid, b, cfg, p)?)?;
    }
    Ok(law)
}

/// Skip the bridge draw when the boundary is this many standard deviations
/// (plus the drift) away; the push probability is then below `e^{-32}`.
const FAR: f64 = 8.0;

struct Stepper {
    b: f64,
    scheme: BoundaryScheme,
    lower: f64,
    upper: f64,
}

impl Stepper {
    /// Advances the level by one constant-phase substep of length `s`.
    fn advance<R: Rng>(&mut self, y: f64, mu: f64, sigma: f64, s: f64, rng: &mut R) -> f64 {
        let sd = sigma * libm::sqrt(s);
        let inc = mu * s + sd * rng.sample::<f64, _>(StandardNormal);
        let free = y + inc;
        match self.scheme {
            BoundaryScheme::Clamp => {
                if free < 0.0 {
                    self.lower += -free;
                    0.0
                } else if free > self.b {
                    self.upper += free - self.b;
                    self.b
                } else {
                    free
                }
            }
            BoundaryScheme::Bridge => {
                let reach = FAR * sd + libm::fabs(mu) * s;
                let near_lower = y < 0.5 * self.b;
                if (near_lower && y > reach) || (!near_lower && self.b - y > reach) {
                    // Too far from the nearer boundary to touch it; the far
                    // one is out of reach as well because b/2 > reach.
                    if free >= 0.0 && free <= self.b {
                        return free;
                    }
                }
                let u = 1.0 - rng.random::<f64>();
                let r = libm::sqrt(inc * inc - 2.0 * sd * sd * libm::log(u));
                let out = if near_lower {
                    let push = (-(y + 0.5 * (inc - r))).max(0.0);
                    self.lower += push;
                    free + push
                } else {
                    let push = (y + 0.5 * (inc + r) - self.b).max(0.0);
                    self.upper += push;
                    free - push
                };
                out.clamp(0.0, self.b)
            }
        }
    }
}

/// One Euler path of the MMBM on `[0, b]`, started at `b/2`.
pub fn simulate_mmbm_path(model: &MmbmModel, cfg: &SimConfig, path: usize) -> Result<EmpiricalLaw> {
    cfg.validate()?;
    let m = model.phases();
    let b = model.b();
    let table = JumpTable::new(model.q());
    let mu: Vec<f64> = model.mu().iter().copied().collect();
    let sigma: Vec<f64> = model.theta().iter().copied().collect();
    let alpha: Vec<f64> = model.alpha().as_row().iter().copied().collect();
    let mut rng = cfg.rng(path);

    let window = cfg.path_window();
    let end = cfg.burn_in + window;
    let mut law = EmpiricalLaw::new(b, cfg.bins, m);
    let mut batches = Batches::new(window);
    let mut stepper = Stepper { b, scheme: cfg.scheme, lower: 0.0, upper: 0.0 };
    let (mut w_at_burn, mut m_at_burn) = (0.0, 0.0);
    let mut burned = cfg.burn_in == 0.0;

    let mut phase = initial_phase(&alpha, rng.random::<f64>());
    let mut next_switch = table.holding(phase, &mut rng);
    let mut y = 0.5 * b;
    let mut step_index: u64 = 0;
    let mut t = 0.0;
    let mut next_obs = cfg.burn_in;
    let mut obs_index: u64 = 0;
    while t < end {
        step_index += 1;
        let t_end = (step_index as f64 * cfg.step).min(end);
        let mut now = t;
        while next_switch < t_end {
            y = stepper.advance(y, mu[phase], sigma[phase], next_switch - now, &mut rng);
            now = next_switch;
            phase = table.jump(phase, &mut rng);
            next_switch = now + table.holding(phase, &mut rng);
        }
        if t_end > now {
            y = stepper.advance(y, mu[phase], sigma[phase], t_end - now, &mut rng);
        }
        t = t_end;
        if !burned && t >= cfg.burn_in {
            burned = true;
            w_at_burn = stepper.lower;
            m_at_burn = stepper.upper;
        }
        while next_obs <= t && next_obs < end {
            law.record(y, phase);
            batches.add(next_obs - cfg.burn_in, y);
            obs_index += 1;
            next_obs = cfg.burn_in + obs_index as f64 * cfg.sample_dt;
        }
    }
    law.batch_means = batches.finish();
    sort_f64(&mut law.batch_means);
    law.local_times.push(LocalTimes {
        lower: stepper.lower - w_at_burn,
        upper: stepper.upper - m_at_burn,
        time: window,
    });
    Ok(law)
}

/// Euler simulation of the two-sided reflected MMBM; paths run in order and
/// are merged. Logs a warning when the step exceeds the recommendation.
pub fn simulate_mmbm(model: &MmbmModel, cfg: &SimConfig) -> Result<EmpiricalLaw> {
    if cfg.step_too_coarse(model) {
        log::warn!(
            "StepTooCoarse: step {} exceeds recommended {}",
            cfg.step,
            SimConfig::max_recommended_step(model)
        );
    }
    let mut law = simulate_mmbm_path(model, cfg, 0)?;
    for p in 1..cfg.paths {
        law.merge(&simulate_mmbm_path(model, cfg, p)?)?;
    }
    Ok(law)
}

/// An analytic law of the level on `[0, b]`.
pub trait LevelDistribution {
    /// `P(level <= x)`, including any atom at 0.
    fn level_cdf(&self, x: f64) -> Result<f64>;
    /// Mass at `b`.
    fn upper_atom(&self) -> f64 {
        0.0
    }
}

impl LevelDistribution for MmbmSolution {
    fn level_cdf(&self, x: f64) -> Result<f64> {
        MmbmSolution::level_cdf(self, x)
    }
}

impl LevelDistribution for FiniteBufferSolution {
    fn level_cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_full(x)?.sum())
    }

    fn upper_atom(&self) -> f64 {
        self.pb_plus.sum()
    }
}

/// A level law given by a closure CDF and an upper atom.
pub struct CdfFn<F: Fn(f64) -> f64> {
    pub cdf: F,
    pub upper_atom: f64,
}

impl<F: Fn(f64) -> f64> LevelDistribution for CdfFn<F> {
    fn level_cdf(&self, x: f64) -> Result<f64> {
        Ok((self.cdf)(x))
    }

    fn upper_atom(&self) -> f64 {
        self.upper_atom
    }
}

/// Kolmogorov–Smirnov distance between the empirical level law and an
/// analytic one, evaluated at every bin edge and just below `b`.
pub fn ks_distance<D: LevelDistribution + ?Sized>(emp: &EmpiricalLaw, law: &D) -> Result<f64> {
    if emp.samples() == 0 {
        return Err(Error::EmptySample);
    }
    let edges = emp.level_cdf_at_edges();
    let h = emp.bin_width();
    let mut worst = 0.0f64;
    for (k, e) in edges.iter().enumerate().take(emp.bins) {
        let x = k as f64 * h;
        worst = worst.max(libm::fabs(e - law.level_cdf(x)?));
    }
    // Left limit at b.
    let n = emp.samples() as f64;
    let below_b = 1.0 - emp.atb.iter().sum::<u64>() as f64 / n;
    worst = worst.max(libm::fabs(below_b - (1.0 - law.upper_atom())));
    Ok(worst)
}
