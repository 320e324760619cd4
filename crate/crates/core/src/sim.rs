//! Fixed-step simulation of the agent network under either protocol.
//!
//! Integration is classical RK4. White noise of unit power spectral density is
//! approximated by an independent Gaussian sample of variance `1/dt` per
//! channel and step, held over the step. Every run is a pure function of its
//! configuration and seed.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::closedloop::{assemble, error_h2};
use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::linalg::Mat;
use crate::model::AgentModel;
use crate::protocol::ProtocolRealization;

const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Off,
    /// Unit-PSD white noise on every disturbance channel.
    White,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialConditions {
    /// Agent states drawn uniformly from `[-1, 1]ⁿ` with the run's seed;
    /// protocol states zero.
    RandomUniform,
    /// One state vector per agent; protocol states zero.
    Explicit(Vec<DVector<f64>>),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: AgentModel,
    pub graph: CommGraph,
    pub protocol: ProtocolRealization,
    pub t_final: f64,
    pub dt: f64,
    pub noise: Noise,
    pub seed: u64,
    pub initial: InitialConditions,
    /// Trailing fraction of the horizon used for the RMS.
    pub tail_fraction: f64,
    /// Keep every `record_stride`-th step in the stored trajectory.
    pub record_stride: usize,
}

impl SimConfig {
    /// Defaults: `dt = 1e-3`, `t_final = 200`, white noise, random initial
    /// states, RMS over the last half, about 2000 stored samples.
    pub fn new(model: AgentModel, graph: CommGraph, protocol: ProtocolRealization) -> Self {
        Self {
            model,
            graph,
            protocol,
            t_final: 200.0,
            dt: 1e-3,
            noise: Noise::White,
            seed: 0,
            initial: InitialConditions::RandomUniform,
            tail_fraction: 0.5,
            record_stride: 100,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::ConfigInvalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 100.0 * self.dt) || !self.t_final.is_finite() {
            return Err(Error::ConfigInvalid(format!(
                "t_final must be at least 100·dt, got {} with dt = {}",
                self.t_final, self.dt
            )));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "tail_fraction must lie in (0, 1), got {}",
                self.tail_fraction
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::ConfigInvalid("record_stride must be positive".into()));
        }
        let n = self.model.n();
        if self.protocol.p.nrows() != n {
            return Err(Error::ConfigInvalid(format!(
                "protocol synthesized for n = {}, model has n = {n}",
                self.protocol.p.nrows()
            )));
        }
        if let InitialConditions::Explicit(x0) = &self.initial {
            if x0.len() != self.graph.n_agents() || x0.iter().any(|v| v.len() != n) {
                return Err(Error::ConfigInvalid(format!(
                    "expected {} initial states of length {n}",
                    self.graph.n_agents()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Sample times of the stored trajectory (always includes 0 and the end).
    pub times: Vec<f64>,
    /// Per sample: `(x₁, …, x_N)` stacked.
    pub states: Vec<Vec<f64>>,
    /// Per sample: `max_{i,j} ‖xᵢ − xⱼ‖`.
    pub sync_error: Vec<f64>,
    /// RMS of `x̄ = (x₁ − x_N, …, x_{N−1} − x_N)` over the tail window.
    pub rms_sync_error: f64,
    pub rho: f64,
    pub delta: Option<f64>,
    pub seed: u64,
    pub n_agents: usize,
    pub n: usize,
}

/// Row-major dense block for the tiny per-agent products.
#[derive(Debug, Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn from(m: &Mat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    /// `y += M x`
    #[inline]
    fn mul_add(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *yi += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Agent-level right-hand side of the raw network.
struct Network {
    n_agents: usize,
    n: usize,
    nc: usize,
    p: usize,
    w: usize,
    /// `[[A, BF_c], [0, A_c]]`
    agent: Dense,
    c: Dense,
    hc: Dense,
    bc: Dense,
    cc: Dense,
    e: Dense,
    neighbors: Vec<Vec<(usize, f64)>>,
    // scratch
    y: Vec<f64>,
    xi: Vec<f64>,
    zeta: Vec<f64>,
    zeta_hat: Vec<f64>,
}

impl Network {
    fn new(model: &AgentModel, graph: &CommGraph, real: &ProtocolRealization) -> Self {
        let n = model.n();
        let nc = real.controller_state_dim;
        let cm = real.controller_matrices(model);
        let agent = crate::linalg::block(&[
            &[&model.a, &(&model.b * &cm.fc)],
            &[&Mat::zeros(nc, n), &cm.ac],
        ]);
        let big_n = graph.n_agents();
        Self {
            n_agents: big_n,
            n,
            nc,
            p: model.p(),
            w: model.w(),
            agent: Dense::from(&agent),
            c: Dense::from(&model.c),
            hc: Dense::from(&cm.hc),
            bc: Dense::from(&cm.bc),
            cc: Dense::from(&cm.cc),
            e: Dense::from(&model.e),
            neighbors: graph.in_neighbors(),
            y: vec![0.0; big_n * model.p()],
            xi: vec![0.0; big_n * n],
            zeta: vec![0.0; model.p()],
            zeta_hat: vec![0.0; n],
        }
    }

    fn block(&self) -> usize {
        self.n + self.nc
    }

    fn dim(&self) -> usize {
        self.n_agents * self.block()
    }

    fn noise_dim(&self) -> usize {
        self.n_agents * self.w
    }

    fn eval(&mut self, z: &[f64], omega: &[f64], dz: &mut [f64]) {
        let (n, p, blk) = (self.n, self.p, self.block());
        for j in 0..self.n_agents {
            let zj = &z[j * blk..(j + 1) * blk];
            let y = &mut self.y[j * p..(j + 1) * p];
            y.fill(0.0);
            self.c.mul_add(&zj[..n], y);
            let xi = &mut self.xi[j * n..(j + 1) * n];
            xi.fill(0.0);
            self.hc.mul_add(&zj[n..], xi);
        }
        for i in 0..self.n_agents {
            let zi = &z[i * blk..(i + 1) * blk];
            let dzi = &mut dz[i * blk..(i + 1) * blk];
            dzi.fill(0.0);
            self.agent.mul_add(zi, dzi);
            self.zeta.fill(0.0);
            self.zeta_hat.fill(0.0);
            for &(j, a) in &self.neighbors[i] {
                for k in 0..p {
                    self.zeta[k] += a * (self.y[i * p + k] - self.y[j * p + k]);
                }
                for k in 0..n {
                    self.zeta_hat[k] += a * (self.xi[i * n + k] - self.xi[j * n + k]);
                }
            }
            self.bc.mul_add(&self.zeta, &mut dzi[n..]);
            self.cc.mul_add(&self.zeta_hat, &mut dzi[n..]);
            if !omega.is_empty() {
                self.e.mul_add(&omega[i * self.w..(i + 1) * self.w], &mut dzi[..n]);
            }
        }
    }
}

/// One RK4 step of `ż = f(z, ω)` with `ω` held over the step.
fn rk4_step<F>(f: &mut F, z: &mut [f64], omega: &[f64], dt: f64, k: &mut [Vec<f64>; 5])
where
    F: FnMut(&[f64], &[f64], &mut [f64]),
{
    let [k1, k2, k3, k4, tmp] = k;
    f(z, omega, k1);
    for i in 0..z.len() {
        tmp[i] = z[i] + 0.5 * dt * k1[i];
    }
    f(tmp, omega, k2);
    for i in 0..z.len() {
        tmp[i] = z[i] + 0.5 * dt * k2[i];
    }
    f(tmp, omega, k3);
    for i in 0..z.len() {
        tmp[i] = z[i] + dt * k3[i];
    }
    f(tmp, omega, k4);
    for i in 0..z.len() {
        z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Noise samples come from stream 1 so they never alias the initial-state draws.
fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn fill_noise(rng: &mut ChaCha8Rng, noise: Noise, dt: f64, omega: &mut [f64]) {
    if noise == Noise::White {
        let scale = (1.0 / dt).sqrt();
        for w in omega.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *w = scale * g;
        }
    }
}

/// Largest pairwise distance between agent states.
fn max_pairwise(x: &[f64], n_agents: usize, n: usize) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..n_agents {
        for j in i + 1..n_agents {
            let d: f64 = (0..n).map(|k| (x[i * n + k] - x[j * n + k]).powi(2)).sum();
            best = best.max(d);
        }
    }
    best.sqrt()
}

/// `‖x̄‖²` with `x̄ᵢ = xᵢ − x_N`, read from the raw state.
fn xbar_sq(z: &[f64], n_agents: usize, n: usize, blk: usize) -> f64 {
    let last = &z[(n_agents - 1) * blk..(n_agents - 1) * blk + n];
    (0..n_agents - 1)
        .map(|i| {
            let zi = &z[i * blk..i * blk + n];
            zi.iter().zip(last).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Simulates the network described by `cfg`.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let mut net = Network::new(&cfg.model, &cfg.graph, &cfg.protocol);
    let (big_n, n, blk) = (net.n_agents, net.n, net.block());
    let mut z = initial_raw_state(cfg, blk)?;
    debug_assert_eq!(z.len(), net.dim());
    let mut rng = noise_rng(cfg.seed);

    let steps = cfg.steps();
    let tail_start = steps - ((steps as f64 * cfg.tail_fraction).round() as usize).max(1);
    let mut omega = vec![0.0; if cfg.noise == Noise::White { net.noise_dim() } else { 0 }];
    let mut k: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; z.len()]);

    let agent_states = |z: &[f64]| -> Vec<f64> {
        (0..big_n).flat_map(|i| z[i * blk..i * blk + n].iter().cloned()).collect()
    };
    let mut times = vec![0.0];
    let mut states = vec![agent_states(&z)];
    let mut sync_error = vec![max_pairwise(&states[0], big_n, n)];
    let mut sum_sq = 0.0;
    let mut comp = 0.0;

    let mut f = |z: &[f64], w: &[f64], dz: &mut [f64]| net.eval(z, w, dz);
    for step in 1..=steps {
        fill_noise(&mut rng, cfg.noise, cfg.dt, &mut omega);
        rk4_step(&mut f, &mut z, &omega, cfg.dt, &mut k);
        let t = step as f64 * cfg.dt;
        let peak = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(peak <= DIVERGENCE_NORM) {
            return Err(Error::Diverged { t, norm: peak });
        }
        if step > tail_start {
            // Neumaier summation keeps long tails reproducible to the last bit
            let v = xbar_sq(&z, big_n, n, blk);
            let s = sum_sq + v;
            comp += if sum_sq.abs() >= v { (sum_sq - s) + v } else { (v - s) + sum_sq };
            sum_sq = s;
        }
        if step % cfg.record_stride == 0 || step == steps {
            let x = agent_states(&z);
            sync_error.push(max_pairwise(&x, big_n, n));
            states.push(x);
            times.push(t);
        }
    }
    let rms_sync_error = ((sum_sq + comp) / (steps - tail_start) as f64).sqrt();
    Ok(SimResult {
        times,
        states,
        sync_error,
        rms_sync_error,
        rho: cfg.protocol.rho,
        delta: cfg.protocol.delta,
        seed: cfg.seed,
        n_agents: big_n,
        n,
    })
}

/// RMS of a sampled vector signal over its trailing `tail_fraction`.
pub fn rms(signal: &[Vec<f64>], tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::ConfigInvalid(format!("tail_fraction must lie in (0, 1], got {tail_fraction}")));
    }
    if signal.is_empty() {
        return Ok(0.0);
    }
    let count = ((signal.len() as f64 * tail_fraction).round() as usize).clamp(1, signal.len());
    let tail = &signal[signal.len() - count..];
    let total = neumaier_sum(tail.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>()));
    Ok((total / count as f64).sqrt())
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let s = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - s) + v } else { (v - s) + sum };
        sum = s;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consistency {
    /// `sqrt(mean over seeds of rms²)`.
    pub empirical_rms: f64,
    pub predicted_h2: f64,
    /// `None` when the predicted norm is exactly zero.
    pub ratio: Option<f64>,
}

/// Monte-Carlo RMS of `x̄` over `n_seeds` runs (seeds `cfg.seed`,
/// `cfg.seed + 1`, …) against the closed-loop H₂ norm.
pub fn rms_vs_h2_consistency(cfg: &SimConfig, n_seeds: usize) -> Result<Consistency> {
    if cfg.noise != Noise::White {
        return Err(Error::ConfigInvalid("consistency check requires white noise".into()));
    }
    if n_seeds == 0 {
        return Err(Error::ConfigInvalid("n_seeds must be positive".into()));
    }
    let cl = assemble(&cfg.model, &cfg.protocol, &cfg.graph.laplacian())?;
    let predicted_h2 = error_h2(&cl)?;
    let squares = (0..n_seeds as u64)
        .into_par_iter()
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(k);
            c.record_stride = c.steps().max(1);
            simulate(&c).map(|r| r.rms_sync_error.powi(2))
        })
        .collect::<Result<Vec<_>>>()?;
    let empirical_rms = (neumaier_sum(squares.into_iter()) / n_seeds as f64).sqrt();
    Ok(Consistency {
        empirical_rms,
        predicted_h2,
        ratio: (predicted_h2 != 0.0).then(|| empirical_rms / predicted_h2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    /// Exact discretization `Φ = e^{A dt}`, `Γ = ∫₀^{dt} e^{As} ds B`.
    ExactZoh,
}

/// White-noise response of `ẋ = Ax + Bw, y = Cx` from `x(0) = 0`; returns
/// the RMS of `y` over the trailing `tail_fraction`.
pub fn simulate_lti_rms(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    dt: f64,
    t_final: f64,
    tail_fraction: f64,
    seed: u64,
    integrator: Integrator,
) -> Result<f64> {
    let n = a.nrows();
    if b.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch("lti simulation".into()));
    }
    if !(dt > 0.0) || !(t_final >= 100.0 * dt) || !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::ConfigInvalid("need dt > 0, t_final ≥ 100·dt, tail in (0, 1)".into()));
    }
    let steps = (t_final / dt).round() as usize;
    let tail_start = steps - ((steps as f64 * tail_fraction).round() as usize).max(1);
    let mut rng = noise_rng(seed);
    let mut x = DVector::zeros(n);
    let mut w = vec![0.0; b.ncols()];
    let mut acc = Vec::with_capacity(steps - tail_start);
    let (phi, gamma) = match integrator {
        Integrator::ExactZoh => {
            let (phi, gamma) = zoh_discretize(a, b, dt);
            (Some(phi), Some(gamma))
        }
        Integrator::Rk4 => (None, None),
    };
    let mut k: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut f = |x: &[f64], w: &[f64], dx: &mut [f64]| {
        let xv = nalgebra::DVectorView::from_slice(x, n);
        let wv = nalgebra::DVectorView::from_slice(w, w.len());
        let d = a * xv + b * wv;
        dx.copy_from_slice(d.as_slice());
    };
    for step in 1..=steps {
        fill_noise(&mut rng, Noise::White, dt, &mut w);
        match (&phi, &gamma) {
            (Some(phi), Some(gamma)) => {
                x = phi * &x + gamma * DVector::from_column_slice(&w);
            }
            _ => rk4_step(&mut f, x.as_mut_slice(), &w, dt, &mut k),
        }
        if step > tail_start {
            acc.push((c * &x).norm_squared());
        }
    }
    Ok((neumaier_sum(acc.iter().cloned()) / acc.len() as f64).sqrt())
}

/// `(e^{A dt}, ∫₀^{dt} e^{As} ds B)` from the exponential of `[[A, B], [0, 0]]·dt`.
pub fn zoh_discretize(a: &Mat, b: &Mat, dt: f64) -> (Mat, Mat) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Deterministic (noise-free) network trajectory endpoint, for cross-checks
/// against the matrix exponential of the raw network matrix.
pub fn simulate_noise_free_state(cfg: &SimConfig) -> Result<Vec<f64>> {
    let mut c = cfg.clone();
    c.noise = Noise::Off;
    c.validate()?;
    let mut net = Network::new(&c.model, &c.graph, &c.protocol);
    let mut z = initial_raw_state(&c, net.block())?;
    let mut k: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; z.len()]);
    let mut f = |z: &[f64], w: &[f64], dz: &mut [f64]| net.eval(z, w, dz);
    for _ in 0..c.steps() {
        rk4_step(&mut f, &mut z, &[], c.dt, &mut k);
    }
    Ok(z)
}

/// Raw initial state `(x₁, x_{c,1}, …)` implied by the configuration.
pub fn initial_raw_state(cfg: &SimConfig, blk: usize) -> Result<Vec<f64>> {
    let n = cfg.model.n();
    let big_n = cfg.graph.n_agents();
    let mut z = vec![0.0; big_n * blk];
    match &cfg.initial {
        InitialConditions::RandomUniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for i in 0..big_n {
                for k in 0..n {
                    z[i * blk + k] = rng.random_range(-1.0..=1.0);
                }
            }
        }
        InitialConditions::Explicit(x0) => {
            for (i, v) in x0.iter().enumerate() {
                z[i * blk..i * blk + n].copy_from_slice(v.as_slice());
            }
        }
    }
    Ok(z)
}

impl SimResult {
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 1..=self.n_agents {
            for k in 1..=self.n {
                let _ = write!(s, ",x_{i}[{k}]");
            }
        }
        s.push_str(",sync_error\n");
        for ((t, x), e) in self.times.iter().zip(&self.states).zip(&self.sync_error) {
            let _ = write!(s, "{t:e}");
            for v in x {
                let _ = write!(s, ",{v:e}");
            }
            let _ = writeln!(s, ",{e:e}");
        }
        s
    }

    pub fn final_sync_error(&self) -> f64 {
        *self.sync_error.last().expect("trajectory holds at least the initial sample")
    }

    pub fn initial_sync_error(&self) -> f64 {
        self.sync_error[0]
    }
}

pub const SUMMARY_CSV_HEADER: &str = "case,rho,delta,seed,rms_sync_error";

/// One summary line per result, labelled with `case`.
pub fn summary_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a SimResult)>) -> String {
    let mut s = String::from(SUMMARY_CSV_HEADER);
    s.push('\n');
    for (case, r) in rows {
        let delta = r.delta.map_or(String::new(), |d| format!("{d:e}"));
        let _ = writeln!(s, "{case},{:e},{delta},{},{:e}", r.rho, r.seed, r.rms_sync_error);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::closedloop::stacked_network;
    use crate::protocol::{synthesize_p1, synthesize_p2};

    fn case1_p2(rho: f64) -> SimConfig {
        let m = cases::triple_integrator();
        let real = synthesize_p2(&m, rho, Some(cases::DELTA)).unwrap();
        SimConfig::new(m, cases::case1_graph(), real)
    }

    #[test]
    fn rms_basics() {
        assert_eq!(rms(&[vec![0.0], vec![0.0]], 0.5).unwrap(), 0.0);
        let c = vec![vec![-3.0, 4.0]; 10];
        assert!((rms(&c, 0.5).unwrap() - 5.0).abs() < 1e-15);
        // sin over 100 periods
        let dt = 1e-3;
        let s: Vec<Vec<f64>> = (0..(200.0 * std::f64::consts::PI / dt) as usize)
            .map(|k| vec![(k as f64 * dt).sin()])
            .collect();
        assert!((rms(&s, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 0.01 * 0.5f64.sqrt());
    }

    #[test]
    fn config_validation() {
        let mut c = case1_p2(4.0);
        c.dt = 0.0;
        assert!(matches!(simulate(&c), Err(Error::ConfigInvalid(_))));
        let mut c = case1_p2(4.0);
        c.t_final = 50.0 * c.dt;
        assert!(matches!(simulate(&c), Err(Error::ConfigInvalid(_))));
        let mut c = case1_p2(4.0);
        c.tail_fraction = 1.0;
        assert!(matches!(simulate(&c), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn identical_agents_stay_synchronized() {
        let mut c = case1_p2(4.0);
        c.noise = Noise::Off;
        c.t_final = 5.0;
        c.initial = InitialConditions::Explicit(vec![DVector::from_vec(vec![0.3, -0.2, 1.0]); 3]);
        let r = simulate(&c).unwrap();
        assert!(r.sync_error.iter().all(|&e| e == 0.0));
        assert_eq!(r.rms_sync_error, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut c = case1_p2(4.0);
        c.t_final = 2.0;
        c.seed = 7;
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.rms_sync_error.to_bits(), b.rms_sync_error.to_bits());
        c.seed = 8;
        assert_ne!(simulate(&c).unwrap().states, a.states);
    }

    #[test]
    fn rk4_matches_matrix_exponential() {
        let m = cases::triple_integrator().with_full_state();
        let real = synthesize_p1(&m, 4.0).unwrap();
        let g = cases::case1_graph();
        let (a_raw, _) = stacked_network(&m, &real, &g.laplacian()).unwrap();
        let mut cfg = SimConfig::new(m, g, real);
        cfg.seed = 3;
        cfg.t_final = 2.0;
        let z0 = DVector::from_vec(initial_raw_state(&cfg, 6).unwrap());
        let exact = (&a_raw * cfg.t_final).exp() * &z0;
        let mut errs = Vec::new();
        for dt in [0.02, 0.01] {
            cfg.dt = dt;
            let z = DVector::from_vec(simulate_noise_free_state(&cfg).unwrap());
            errs.push((z - &exact).norm());
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 16.0).abs() < 2.0, "{errs:?} ratio {ratio}");
    }

    #[test]
    fn zoh_discretization_of_scalar() {
        let (phi, gamma) = zoh_discretize(&Mat::from_element(1, 1, -1.0), &Mat::from_element(1, 1, 1.0), 0.1);
        assert!((phi[(0, 0)] - (-0.1f64).exp()).abs() < 1e-15);
        assert!((gamma[(0, 0)] - (1.0 - (-0.1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let mut c = case1_p2(4.0);
        c.t_final = 0.1;
        c.record_stride = 50;
        let r = simulate(&c).unwrap();
        let csv = r.trajectory_csv();
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with("t,x_1[1],x_1[2],x_1[3],x_2[1]"));
        assert!(header.ends_with("x_3[3],sync_error"));
        assert_eq!(csv.lines().count(), 1 + 3);
        let summary = summary_csv([("case1", &r)]);
        assert!(summary.starts_with("case,rho,delta,seed,rms_sync_error\ncase1,4e0,4e-4,0,"));
    }
}
