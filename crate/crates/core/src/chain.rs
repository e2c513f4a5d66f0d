//! Exact event-driven Monte Carlo of the thermostatted chain.
//!
//! The state is the spectral wave function on the N-point wavenumber grid of
//! a periodic chain. Between thermostat events every mode rotates by its
//! exact free phase `e^{-i omega(k_j) dt}`; at each event (a Poisson clock of
//! intensity `gamma mu`) the momentum at site 0 receives the jump
//! `p0' = (1 - 1/mu) p0 + rho(mu) xi`, `xi ~ N(0, T)`, which in spectral
//! variables is the uniform kick `psi_hat(k) += i (rho xi - p0/mu)`.
//! There is no time-step discretization anywhere.
//!
//! Reproducibility contract: every trajectory draws from its own
//! counter-based stream (ChaCha, `set_stream(traj)`), consuming randomness in
//! a fixed order (initial data, then alternating event Gaussians and
//! exponential waiting times), and ensembles reduce over fixed-size chunks,
//! so results are bitwise independent of the worker count.

use crate::dispersion::DispersionRelation;
use crate::scattering::ThermostatParams;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ChainError {
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("wave packet would wrap around the periodic box: {0}")]
    WrapAround(String),
}

/// Static description of a simulation: grid, thermostat, dispersion, seed
/// and time horizon.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    /// number of lattice sites (power of two, >= 64)
    pub n: usize,
    pub params: ThermostatParams,
    pub disp: DispersionRelation,
    pub seed: u64,
    /// microscopic end time of a trajectory
    pub t_end: f64,
}

/// Gaussian wave packet in macroscopic coordinates `x = epsilon * y`.
#[derive(Debug, Clone)]
pub struct WavePacketSpec {
    /// carrier wavenumber, kept away from the singular set
    pub k0: f64,
    /// macroscopic center (the thermostat sits at x = 0)
    pub x0: f64,
    /// macroscopic envelope width
    pub sigma: f64,
    pub amplitude: f64,
    /// lattice-to-macro scale; the periodic box is `epsilon * n` wide
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub enum InitialData {
    /// `psi = 0` everywhere (thermostat-driven growth experiments)
    Zero,
    /// i.i.d. complex Gaussians per site with `E|psi_x|^2 = 2T`
    Thermal,
    /// modulated Gaussian envelope with a uniform random global phase
    Packet(WavePacketSpec),
}

/// Dynamic state of one trajectory.
#[derive(Debug, Clone)]
pub struct ChainState {
    /// spectral wave function at `k_j = j/n` (physical convention
    /// `psi_hat(k) = sum_y psi_y e^{-2 pi i k y}` with `y` centered)
    pub psi_hat: Vec<Complex64>,
    /// microscopic time
    pub time: f64,
    rng: ChaCha8Rng,
    next_jump: f64,
    /// number of thermostat events so far
    pub jumps: u64,
    /// running sum of `T - p0^2` sampled just before each jump; the
    /// compensator of the energy exchanged with the thermostat
    pub comp_sum: f64,
    /// energy at creation time
    pub initial_energy: f64,
}

impl ChainState {
    /// Same trajectory bookkeeping with a replaced spectral field (band
    /// projections and the like).
    pub fn with_psi(&self, psi_hat: Vec<Complex64>) -> ChainState {
        ChainState {
            psi_hat,
            ..self.clone()
        }
    }
}

/// Energy observables derived from a state.
#[derive(Debug, Clone)]
pub struct Observables {
    pub p0: f64,
    pub total_energy: f64,
    /// `|psi_y|^2` ordered by ascending position (`y = s - n/2`)
    pub site_energy: Vec<f64>,
    /// `|psi_hat(k_j)|^2 / n` in FFT order
    pub spectral_energy: Vec<f64>,
}

/// Record of a single thermostat event.
#[derive(Debug, Clone, Copy)]
pub struct JumpRecord {
    pub p0_before: f64,
    pub p0_after: f64,
    pub delta: f64,
}

/// Shared, immutable simulation context: dispersion samples and FFT plans.
pub struct ChainSim {
    pub cfg: ChainConfig,
    omega: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl ChainSim {
    pub fn new(cfg: ChainConfig) -> Result<Self, ChainError> {
        if cfg.n < 64 || !cfg.n.is_power_of_two() {
            return Err(ChainError::InvalidConfig(format!(
                "grid size must be a power of two >= 64, got {}",
                cfg.n
            )));
        }
        if cfg.t_end.is_nan() || cfg.t_end < 0.0 {
            return Err(ChainError::InvalidConfig(format!(
                "t_end must be >= 0, got {}",
                cfg.t_end
            )));
        }
        if cfg.params.gamma == 0.0 && cfg.params.temperature > 0.0 {
            return Err(ChainError::InvalidConfig(
                "gamma = 0 with T > 0 never thermalizes; set T = 0 or gamma > 0".into(),
            ));
        }
        cfg.disp
            .checked()
            .map_err(|e| ChainError::InvalidConfig(e.to_string()))?;

        let omega = (0..cfg.n)
            .map(|j| cfg.disp.omega(j as f64 / cfg.n as f64))
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(cfg.n);
        let ifft = planner.plan_fft_inverse(cfg.n);
        Ok(ChainSim {
            cfg,
            omega,
            fft,
            ifft,
        })
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    /// Largest group speed on the grid; bounds signal propagation.
    pub fn max_group_speed(&self) -> f64 {
        let n = self.cfg.n;
        (1..n / 2)
            .map(|j| (self.cfg.disp.omega_prime(j as f64 / n as f64) / (2.0 * PI)).abs())
            .fold(0.0, f64::max)
    }

    /// RNG stream for one trajectory of the configured master seed.
    fn stream(&self, traj: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(traj);
        rng
    }

    /// Build the initial state of trajectory `traj`, consuming the stream's
    /// initial-data draws and the first waiting time.
    pub fn init_state(&self, init: &InitialData, traj: u64) -> Result<ChainState, ChainError> {
        let n = self.cfg.n;
        let mut rng = self.stream(traj);
        let psi_hat = match init {
            InitialData::Zero => vec![Complex64::new(0.0, 0.0); n],
            InitialData::Thermal => {
                let t = self.cfg.params.temperature;
                let s = t.sqrt();
                let mut sites = Vec::with_capacity(n);
                for _ in 0..n {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    sites.push(Complex64::new(s * re, s * im));
                }
                self.sites_to_spectral(&sites)
            }
            InitialData::Packet(spec) => {
                self.check_packet(spec)?;
                let theta: f64 = rng.random_range(0.0..2.0 * PI);
                let phase = Complex64::new(0.0, theta).exp();
                let amp = spec.epsilon.sqrt() * spec.amplitude;
                let mut sites = Vec::with_capacity(n);
                for s in 0..n {
                    let y = s as f64 - (n / 2) as f64;
                    let u = spec.epsilon * y - spec.x0;
                    let env = amp * (-u * u / (2.0 * spec.sigma * spec.sigma)).exp();
                    let carrier = Complex64::new(0.0, 2.0 * PI * spec.k0 * y).exp();
                    sites.push(phase * carrier * env);
                }
                self.sites_to_spectral(&sites)
            }
        };
        let initial_energy = psi_hat.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let mut state = ChainState {
            psi_hat,
            time: 0.0,
            rng,
            next_jump: f64::INFINITY,
            jumps: 0,
            comp_sum: 0.0,
            initial_energy,
        };
        let rate = self.cfg.params.jump_rate();
        if rate > 0.0 {
            let e: f64 = state.rng.sample(Exp1);
            state.next_jump = e / rate;
        }
        Ok(state)
    }

    fn check_packet(&self, spec: &WavePacketSpec) -> Result<(), ChainError> {
        if self.cfg.disp.singular_distance(spec.k0) < 1e-3 {
            return Err(ChainError::InvalidConfig(format!(
                "carrier k0 = {} inside the singular exclusion band",
                spec.k0
            )));
        }
        if !(spec.sigma > 0.0 && spec.epsilon > 0.0 && spec.amplitude > 0.0) {
            return Err(ChainError::InvalidConfig(
                "packet needs positive sigma, epsilon, amplitude".into(),
            ));
        }
        let half_box = 0.5 * spec.epsilon * self.cfg.n as f64;
        // the incident packet travels at its own group velocity; scattered
        // and reflected energy fans out from the interface at x = 0 at most
        // at the top group speed
        let v0 = self.cfg.disp.omega_prime(spec.k0) / (2.0 * PI);
        let horizon = spec.epsilon * self.cfg.t_end;
        let packet_reach = spec.x0.abs().max((spec.x0 + v0 * horizon).abs()) + 6.0 * spec.sigma;
        let fan_reach = self.max_group_speed() * horizon + 2.0 * spec.sigma;
        let reach = packet_reach.max(fan_reach);
        if reach > half_box {
            return Err(ChainError::WrapAround(format!(
                "signal reach {reach:.3} exceeds half box {half_box:.3} before t_end"
            )));
        }
        Ok(())
    }

    /// `sum_y psi_y e^{-2 pi i k_j y}` for sites ordered by position.
    fn sites_to_spectral(&self, sites: &[Complex64]) -> Vec<Complex64> {
        let mut buf = sites.to_vec();
        self.fft.process(&mut buf);
        // centered sites: y = s - n/2 contributes the phase (-1)^j
        for (j, z) in buf.iter_mut().enumerate() {
            if j % 2 == 1 {
                *z = -*z;
            }
        }
        buf
    }

    /// Sites ordered by ascending position (`y = s - n/2`).
    pub fn sites(&self, state: &ChainState) -> Vec<Complex64> {
        let n = self.cfg.n;
        let mut buf = state.psi_hat.clone();
        for (j, z) in buf.iter_mut().enumerate() {
            if j % 2 == 1 {
                *z = -*z;
            }
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
        buf
    }

    /// `p0 = (1/n) sum_j Im psi_hat(k_j)`, the momentum at site 0.
    pub fn p0(&self, state: &ChainState) -> f64 {
        state.psi_hat.iter().map(|z| z.im).sum::<f64>() / self.cfg.n as f64
    }

    /// `(1/n) sum_j |psi_hat(k_j)|^2 = sum_y |psi_y|^2`.
    pub fn total_energy(&self, state: &ChainState) -> f64 {
        state.psi_hat.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.cfg.n as f64
    }

    fn rotate(&self, state: &mut ChainState, dt: f64) {
        if dt == 0.0 {
            return;
        }
        for (z, &w) in state.psi_hat.iter_mut().zip(&self.omega) {
            let (s, c) = (-w * dt).sin_cos();
            *z = Complex64::new(z.re * c - z.im * s, z.re * s + z.im * c);
        }
    }

    /// Apply one thermostat event with the given standard normal draw.
    pub fn apply_jump_with(&self, state: &mut ChainState, xi_std: f64) -> JumpRecord {
        let params = &self.cfg.params;
        let p0 = self.p0(state);
        let xi = params.temperature.sqrt() * xi_std;
        let delta = params.rho() * xi - p0 / params.mu;
        let kick = Complex64::new(0.0, delta);
        for z in state.psi_hat.iter_mut() {
            *z += kick;
        }
        state.jumps += 1;
        state.comp_sum += params.temperature - p0 * p0;
        JumpRecord {
            p0_before: p0,
            p0_after: p0 + delta,
            delta,
        }
    }

    /// Apply one thermostat event, drawing from the trajectory's stream.
    pub fn apply_jump(&self, state: &mut ChainState) -> JumpRecord {
        let xi_std: f64 = state.rng.sample(StandardNormal);
        self.apply_jump_with(state, xi_std)
    }

    /// Evolve exactly to `t_target`: free rotation between events, one kick
    /// per event, waiting times drawn from the trajectory's stream.
    pub fn evolve_to(&self, state: &mut ChainState, t_target: f64) {
        assert!(
            t_target >= state.time,
            "cannot evolve backwards: {} -> {}",
            state.time,
            t_target
        );
        let rate = self.cfg.params.jump_rate();
        while state.next_jump <= t_target {
            let dt = state.next_jump - state.time;
            self.rotate(state, dt);
            state.time = state.next_jump;
            self.apply_jump(state);
            let e: f64 = state.rng.sample(Exp1);
            state.next_jump = state.time + e / rate;
        }
        self.rotate(state, t_target - state.time);
        state.time = t_target;
    }

    /// Full observable set; site energies via the inverse transform.
    pub fn observables(&self, state: &ChainState) -> Observables {
        let n = self.cfg.n;
        let sites = self.sites(state);
        Observables {
            p0: self.p0(state),
            total_energy: self.total_energy(state),
            site_energy: sites.iter().map(|z| z.norm_sqr()).collect(),
            spectral_energy: state
                .psi_hat
                .iter()
                .map(|z| z.norm_sqr() / n as f64)
                .collect(),
        }
    }

    /// The energy-balance compensator: `E(t) - E(0) - (2mu - 1)/mu^2 *
    /// sum(T - p0^2)` has mean zero over the jump measure, trajectory by
    /// trajectory, with no discretization error.
    pub fn energy_balance_residual(&self, state: &ChainState) -> f64 {
        let mu = self.cfg.params.mu;
        let factor = (2.0 * mu - 1.0) / (mu * mu);
        self.total_energy(state) - state.initial_energy - factor * state.comp_sum
    }
}

/// Fold-style consumer of an ensemble; accumulators merge associatively in a
/// fixed chunk order so the result is independent of the worker count.
pub trait EnsembleReducer: Sync {
    type Acc: Send;
    fn new_acc(&self) -> Self::Acc;
    /// Called at each configured checkpoint time, in order.
    fn observe(
        &self,
        acc: &mut Self::Acc,
        traj: usize,
        checkpoint: usize,
        sim: &ChainSim,
        state: &ChainState,
    );
    /// Called once per trajectory after it reaches `t_end`.
    fn finish(&self, acc: &mut Self::Acc, traj: usize, sim: &ChainSim, state: &ChainState);
    fn merge(&self, into: &mut Self::Acc, from: Self::Acc);
}

impl<A: EnsembleReducer, B: EnsembleReducer> EnsembleReducer for (A, B) {
    type Acc = (A::Acc, B::Acc);
    fn new_acc(&self) -> Self::Acc {
        (self.0.new_acc(), self.1.new_acc())
    }
    fn observe(
        &self,
        acc: &mut Self::Acc,
        traj: usize,
        checkpoint: usize,
        sim: &ChainSim,
        state: &ChainState,
    ) {
        self.0.observe(&mut acc.0, traj, checkpoint, sim, state);
        self.1.observe(&mut acc.1, traj, checkpoint, sim, state);
    }
    fn finish(&self, acc: &mut Self::Acc, traj: usize, sim: &ChainSim, state: &ChainState) {
        self.0.finish(&mut acc.0, traj, sim, state);
        self.1.finish(&mut acc.1, traj, sim, state);
    }
    fn merge(&self, into: &mut Self::Acc, from: Self::Acc) {
        self.0.merge(&mut into.0, from.0);
        self.1.merge(&mut into.1, from.1);
    }
}

/// Ensemble driver parameters.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub chain: ChainConfig,
    pub init: InitialData,
    /// number of independent trajectories
    pub m: usize,
    /// observation times, non-decreasing, all <= t_end
    pub checkpoints: Vec<f64>,
    /// fixed reduction chunk; part of the determinism contract, not a
    /// scheduler knob
    pub chunk: usize,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.m == 0 {
            return Err(ChainError::InvalidConfig(
                "need at least 1 trajectory".into(),
            ));
        }
        if self.chunk == 0 {
            return Err(ChainError::InvalidConfig("chunk must be positive".into()));
        }
        let mut prev = 0.0;
        for &c in &self.checkpoints {
            if c < prev || c > self.chain.t_end {
                return Err(ChainError::InvalidConfig(format!(
                    "checkpoints must be non-decreasing and <= t_end, got {c}"
                )));
            }
            prev = c;
        }
        Ok(())
    }
}

/// Run `m` independent trajectories and fold them through `reducer`.
/// Deterministic for fixed `(seed, m, n, chunk)` regardless of thread count.
pub fn run_ensemble<R: EnsembleReducer>(
    cfg: &EnsembleConfig,
    reducer: &R,
) -> Result<R::Acc, ChainError> {
    cfg.validate()?;
    let sim = ChainSim::new(cfg.chain.clone())?;
    // validate the initial data once; trajectories differ only in their draws
    sim.init_state(&cfg.init, 0)?;

    let starts: Vec<usize> = (0..cfg.m).step_by(cfg.chunk).collect();
    let partials: Vec<R::Acc> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + cfg.chunk).min(cfg.m);
            let mut acc = reducer.new_acc();
            for traj in start..end {
                let mut state = sim
                    .init_state(&cfg.init, traj as u64)
                    .expect("validated above");
                for (ci, &t) in cfg.checkpoints.iter().enumerate() {
                    sim.evolve_to(&mut state, t);
                    reducer.observe(&mut acc, traj, ci, &sim, &state);
                }
                sim.evolve_to(&mut state, cfg.chain.t_end);
                reducer.finish(&mut acc, traj, &sim, &state);
            }
            acc
        })
        .collect();

    let mut it = partials.into_iter();
    let mut total = it.next().expect("m >= 1 gives at least one chunk");
    for p in it {
        reducer.merge(&mut total, p);
    }
    Ok(total)
}

/// Streaming mean/variance accumulator with deterministic merges.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2 / (self.n - 1) as f64
    }

    /// standard error of the mean
    pub fn std_err(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Standard series statistics: per-checkpoint moments of `p0`, `p0^2` and
/// total energy, final-state mean profiles, and the exact energy-balance
/// compensator.
pub struct SeriesReducer {
    pub n_checkpoints: usize,
    pub n_modes: usize,
}

#[derive(Debug, Clone)]
pub struct SeriesAcc {
    pub p0: Vec<Welford>,
    pub p0_sq: Vec<Welford>,
    pub energy: Vec<Welford>,
    /// per-trajectory mean of p0^2 over the checkpoint series
    pub p0_sq_time_avg: Welford,
    /// per-trajectory mean site energy over the checkpoint series
    pub site_energy_avg: Welford,
    pub balance_residual: Welford,
    pub final_energy: Welford,
    pub jumps: u64,
    pub max_relative_drift: f64,
    /// mean final spectral energy per mode (FFT order)
    pub spectral_mean: Vec<Welford>,
    /// mean final site energy by position
    pub site_mean: Vec<Welford>,
    /// scratch: running per-trajectory sums over checkpoints
    traj_p0_sq_sum: f64,
    traj_site_sum: f64,
    traj_obs: usize,
}

impl EnsembleReducer for SeriesReducer {
    type Acc = SeriesAcc;

    fn new_acc(&self) -> SeriesAcc {
        SeriesAcc {
            p0: vec![Welford::default(); self.n_checkpoints],
            p0_sq: vec![Welford::default(); self.n_checkpoints],
            energy: vec![Welford::default(); self.n_checkpoints],
            p0_sq_time_avg: Welford::default(),
            site_energy_avg: Welford::default(),
            balance_residual: Welford::default(),
            final_energy: Welford::default(),
            jumps: 0,
            max_relative_drift: 0.0,
            spectral_mean: vec![Welford::default(); self.n_modes],
            site_mean: vec![Welford::default(); self.n_modes],
            traj_p0_sq_sum: 0.0,
            traj_site_sum: 0.0,
            traj_obs: 0,
        }
    }

    fn observe(
        &self,
        acc: &mut SeriesAcc,
        _traj: usize,
        checkpoint: usize,
        sim: &ChainSim,
        state: &ChainState,
    ) {
        let p0 = sim.p0(state);
        acc.p0[checkpoint].push(p0);
        acc.p0_sq[checkpoint].push(p0 * p0);
        acc.energy[checkpoint].push(sim.total_energy(state));
        acc.traj_p0_sq_sum += p0 * p0;
        acc.traj_site_sum += sim.total_energy(state) / sim.n() as f64;
        acc.traj_obs += 1;
    }

    fn finish(&self, acc: &mut SeriesAcc, _traj: usize, sim: &ChainSim, state: &ChainState) {
        let obs = sim.observables(state);
        acc.balance_residual
            .push(sim.energy_balance_residual(state));
        acc.final_energy.push(obs.total_energy);
        acc.jumps += state.jumps;
        if state.initial_energy > 0.0 {
            let drift = (obs.total_energy - state.initial_energy).abs() / state.initial_energy;
            acc.max_relative_drift = acc.max_relative_drift.max(drift);
        }
        for (w, &e) in acc.spectral_mean.iter_mut().zip(&obs.spectral_energy) {
            w.push(e);
        }
        for (w, &e) in acc.site_mean.iter_mut().zip(&obs.site_energy) {
            w.push(e);
        }
        if acc.traj_obs > 0 {
            acc.p0_sq_time_avg
                .push(acc.traj_p0_sq_sum / acc.traj_obs as f64);
            acc.site_energy_avg
                .push(acc.traj_site_sum / acc.traj_obs as f64);
        }
        acc.traj_p0_sq_sum = 0.0;
        acc.traj_site_sum = 0.0;
        acc.traj_obs = 0;
    }

    fn merge(&self, into: &mut SeriesAcc, from: SeriesAcc) {
        for (a, b) in into.p0.iter_mut().zip(from.p0) {
            a.merge(b);
        }
        for (a, b) in into.p0_sq.iter_mut().zip(from.p0_sq) {
            a.merge(b);
        }
        for (a, b) in into.energy.iter_mut().zip(from.energy) {
            a.merge(b);
        }
        into.p0_sq_time_avg.merge(from.p0_sq_time_avg);
        into.site_energy_avg.merge(from.site_energy_avg);
        into.balance_residual.merge(from.balance_residual);
        into.final_energy.merge(from.final_energy);
        into.jumps += from.jumps;
        into.max_relative_drift = into.max_relative_drift.max(from.max_relative_drift);
        for (a, b) in into.spectral_mean.iter_mut().zip(from.spectral_mean) {
            a.merge(b);
        }
        for (a, b) in into.site_mean.iter_mut().zip(from.site_mean) {
            a.merge(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acoustic_cfg(gamma: f64, mu: f64, t: f64, n: usize, t_end: f64, seed: u64) -> ChainConfig {
        ChainConfig {
            n,
            params: ThermostatParams::new(gamma, mu, t).unwrap(),
            disp: DispersionRelation::nearest_neighbor(0.0),
            seed,
            t_end,
        }
    }

    fn packet() -> InitialData {
        InitialData::Packet(WavePacketSpec {
            k0: 0.2,
            x0: -0.4,
            sigma: 0.08,
            amplitude: 1.0,
            epsilon: 4.0 / 256.0,
        })
    }

    /// Sample a packet without the wrap-around guard (long-horizon tests
    /// that only care about spectral invariants on the periodic box).
    fn packet_state_ignoring_wrap(sim: &ChainSim, traj: u64) -> ChainState {
        let short = ChainSim::new(ChainConfig {
            t_end: 0.0,
            ..sim.cfg.clone()
        })
        .unwrap();
        short.init_state(&packet(), traj).unwrap()
    }

    #[test]
    fn same_seed_same_state_bitwise() {
        let sim = ChainSim::new(acoustic_cfg(1.0, 1.0, 0.5, 256, 10.0, 42)).unwrap();
        let mut a = sim.init_state(&packet(), 3).unwrap();
        let mut b = sim.init_state(&packet(), 3).unwrap();
        sim.evolve_to(&mut a, 10.0);
        sim.evolve_to(&mut b, 10.0);
        assert_eq!(a.psi_hat, b.psi_hat);
        assert_eq!(a.jumps, b.jumps);
    }

    #[test]
    fn parseval_consistency() {
        let sim = ChainSim::new(acoustic_cfg(1.0, 1.0, 1.0, 256, 5.0, 7)).unwrap();
        let mut st = sim.init_state(&InitialData::Thermal, 1).unwrap();
        sim.evolve_to(&mut st, 5.0);
        let obs = sim.observables(&st);
        let site_sum: f64 = obs.site_energy.iter().sum();
        assert!(
            (site_sum - obs.total_energy).abs() <= 1e-12 * obs.total_energy,
            "Parseval violated: {site_sum} vs {}",
            obs.total_energy
        );
    }

    #[test]
    fn free_flow_is_unitary_per_mode() {
        let cfg = acoustic_cfg(0.0, 1.0, 0.0, 256, 1000.0, 9);
        let sim = ChainSim::new(cfg).unwrap();
        let st0 = packet_state_ignoring_wrap(&sim, 0);
        let mods0: Vec<f64> = st0.psi_hat.iter().map(|z| z.norm()).collect();
        let mut st = st0.clone();
        sim.evolve_to(&mut st, 1000.0);
        assert_eq!(st.jumps, 0);
        for (a, b) in st.psi_hat.iter().zip(&mods0) {
            assert!((a.norm() - b).abs() <= 1e-14 * (1.0 + b));
        }
    }

    #[test]
    fn forced_jump_matches_hand_computation() {
        let sim = ChainSim::new(acoustic_cfg(1.0, 2.0, 0.25, 256, 1.0, 5)).unwrap();
        let mut st = sim.init_state(&packet(), 0).unwrap();
        let before = st.psi_hat.clone();
        let p0 = sim.p0(&st);
        let xi_std = 1.7;
        let rec = sim.apply_jump_with(&mut st, xi_std);

        // by hand: rho(2) = sqrt(3)/2, xi = sqrt(T) xi_std,
        // delta = rho xi - p0/mu, every mode shifted by i delta
        let rho = (2.0f64 * 2.0 - 1.0).sqrt() / 2.0;
        let delta = rho * 0.25f64.sqrt() * xi_std - p0 / 2.0;
        assert!((rec.delta - delta).abs() < 1e-15);
        for (z, z0) in st.psi_hat.iter().zip(&before) {
            let expect = z0 + Complex64::new(0.0, delta);
            assert!((z - expect).norm() < 1e-15);
        }
        // p0' = (1 - 1/mu) p0 + rho xi
        let p0_after = sim.p0(&st);
        assert!((p0_after - (0.5 * p0 + rho * 0.25f64.sqrt() * xi_std)).abs() < 1e-13);
        // the chain energy moves by exactly (p0')^2 - p0^2
        let de = sim.total_energy(&st) - before.iter().map(|z| z.norm_sqr()).sum::<f64>() / 256.0;
        assert!(
            (de - (p0_after * p0_after - p0 * p0)).abs() < 1e-12,
            "jump energy bookkeeping broken: {de}"
        );
    }

    #[test]
    fn velocity_flip_is_exact_at_mu_half() {
        let sim = ChainSim::new(acoustic_cfg(1.0, 0.5, 1.0, 256, 1.0, 5)).unwrap();
        let mut st = sim.init_state(&packet(), 0).unwrap();
        let p0 = sim.p0(&st);
        let e0 = sim.total_energy(&st);
        let rec = sim.apply_jump_with(&mut st, 0.37);
        assert!((rec.p0_after + p0).abs() < 1e-14, "flip must negate p0");
        assert!((sim.total_energy(&st) - e0).abs() < 1e-13 * e0);
    }

    #[test]
    fn renewal_at_mu_one_and_zero_temperature() {
        let sim = ChainSim::new(acoustic_cfg(1.0, 1.0, 0.0, 256, 1.0, 5)).unwrap();
        let mut st = sim.init_state(&packet(), 0).unwrap();
        sim.apply_jump_with(&mut st, 0.93);
        assert!(
            sim.p0(&st).abs() < 1e-15,
            "T=0, mu=1 must zero the momentum"
        );
    }

    #[test]
    fn renewal_at_mu_one_replaces_p0_with_the_draw() {
        let temp: f64 = 0.49;
        let sim = ChainSim::new(acoustic_cfg(1.0, 1.0, temp, 256, 1.0, 5)).unwrap();
        let mut st = sim.init_state(&packet(), 1).unwrap();
        let xi_std = -1.234;
        let rec = sim.apply_jump_with(&mut st, xi_std);
        // rho(1) = 1, so p0' = xi exactly
        assert!((rec.p0_after - temp.sqrt() * xi_std).abs() < 1e-13);
        assert!((sim.p0(&st) - temp.sqrt() * xi_std).abs() < 1e-13);
    }

    #[test]
    fn jump_counts_follow_the_clock() {
        // mean jump count over [0, t] is gamma mu t
        let cfg = acoustic_cfg(0.8, 1.25, 0.0, 64, 20.0, 11);
        let rate = cfg.params.jump_rate();
        let sim = ChainSim::new(cfg).unwrap();
        let m = 10_000;
        let mut total = 0u64;
        for traj in 0..m {
            let mut st = sim.init_state(&InitialData::Zero, traj).unwrap();
            sim.evolve_to(&mut st, 20.0);
            total += st.jumps;
        }
        let mean = total as f64 / m as f64;
        let expect = rate * 20.0;
        let sigma = (expect / m as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * sigma,
            "jump count {mean} vs Poisson mean {expect} (sigma {sigma})"
        );
    }

    #[test]
    fn thermal_sampling_moments() {
        let cfg = acoustic_cfg(1.0, 1.0, 0.7, 128, 1.0, 23);
        let t = cfg.params.temperature;
        let sim = ChainSim::new(cfg).unwrap();
        let m = 8000usize;
        let mut site_energy = Welford::default();
        let mut unconj = (Welford::default(), Welford::default());
        for traj in 0..m {
            let st = sim.init_state(&InitialData::Thermal, traj as u64).unwrap();
            let sites = sim.sites(&st);
            site_energy.push(sites.iter().map(|z| z.norm_sqr()).sum::<f64>() / 128.0);
            let s: Complex64 = sites.iter().map(|z| z * z).sum::<Complex64>() / 128.0;
            unconj.0.push(s.re);
            unconj.1.push(s.im);
        }
        assert!(
            (site_energy.mean - 2.0 * t).abs() <= 3.0 * site_energy.std_err(),
            "site energy {} vs 2T = {}",
            site_energy.mean,
            2.0 * t
        );
        assert!(unconj.0.mean.abs() <= 3.0 * unconj.0.std_err());
        assert!(unconj.1.mean.abs() <= 3.0 * unconj.1.std_err());
    }

    #[test]
    fn zero_temperature_thermal_state_is_zero() {
        let sim = ChainSim::new(acoustic_cfg(1.0, 1.0, 0.0, 64, 1.0, 1)).unwrap();
        let st = sim.init_state(&InitialData::Thermal, 0).unwrap();
        assert!(st.psi_hat.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn phase_randomization_kills_unconjugated_pairs() {
        // ensemble mean of psi_hat(k) psi_hat(l) vanishes by the random
        // global phase; total energy does not depend on the phase at all
        let sim = ChainSim::new(acoustic_cfg(1.0, 1.0, 0.0, 128, 1.0, 77)).unwrap();
        let m = 2000usize;
        let (j1, j2) = (20usize, 40usize);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut energy_min = f64::INFINITY;
        let mut energy_max = f64::NEG_INFINITY;
        let mut scale = 0.0f64;
        for traj in 0..m {
            let st = sim.init_state(&packet(), traj as u64).unwrap();
            acc += st.psi_hat[j1] * st.psi_hat[j2];
            scale += (st.psi_hat[j1] * st.psi_hat[j2]).norm();
            let e = sim.total_energy(&st);
            energy_min = energy_min.min(e);
            energy_max = energy_max.max(e);
        }
        let mean = acc / m as f64;
        let per_mode = scale / m as f64;
        assert!(
            mean.norm() <= 3.0 * per_mode / (m as f64).sqrt(),
            "unconjugated pair mean {mean} too large vs {per_mode}"
        );
        assert!(energy_max - energy_min <= 1e-12 * energy_max);
    }

    #[test]
    fn wraparound_is_rejected() {
        let cfg = acoustic_cfg(1.0, 1.0, 0.0, 256, 4000.0, 1);
        let sim = ChainSim::new(cfg).unwrap();
        let err = sim.init_state(&packet(), 0);
        assert!(matches!(err, Err(ChainError::WrapAround(_))));
    }

    #[test]
    fn single_member_ensemble_reproduces_stream_zero() {
        let chain = acoustic_cfg(1.0, 1.0, 0.8, 128, 25.0, 77);
        let sim = ChainSim::new(chain.clone()).unwrap();
        let mut manual = sim.init_state(&InitialData::Thermal, 0).unwrap();
        sim.evolve_to(&mut manual, 25.0);
        let cfg = EnsembleConfig {
            chain,
            init: InitialData::Thermal,
            m: 1,
            checkpoints: vec![],
            chunk: 4,
        };
        let reducer = SeriesReducer {
            n_checkpoints: 0,
            n_modes: 128,
        };
        let acc = run_ensemble(&cfg, &reducer).unwrap();
        assert_eq!(
            acc.final_energy.mean.to_bits(),
            sim.total_energy(&manual).to_bits()
        );
    }

    #[test]
    fn ensemble_is_worker_count_invariant() {
        let cfg = EnsembleConfig {
            chain: acoustic_cfg(1.0, 1.0, 0.8, 128, 30.0, 99),
            init: InitialData::Thermal,
            m: 24,
            checkpoints: vec![10.0, 20.0],
            chunk: 4,
        };
        let reducer = SeriesReducer {
            n_checkpoints: 2,
            n_modes: 128,
        };
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = pool1.install(|| run_ensemble(&cfg, &reducer)).unwrap();
        let b = pool4.install(|| run_ensemble(&cfg, &reducer)).unwrap();
        assert_eq!(a.final_energy.mean.to_bits(), b.final_energy.mean.to_bits());
        assert_eq!(
            a.balance_residual.mean.to_bits(),
            b.balance_residual.mean.to_bits()
        );
        for (x, y) in a.spectral_mean.iter().zip(&b.spectral_mean) {
            assert_eq!(x.mean.to_bits(), y.mean.to_bits());
        }
    }

    #[test]
    fn energy_growth_matches_compensated_identity() {
        // zero initial data, T = 1, mu = 1: E[E(t)] grows like
        // gamma (2 - 1/mu) (T - E p0^2) t; the per-trajectory compensator
        // makes this exact, so its ensemble mean is 0 within noise
        let cfg = EnsembleConfig {
            chain: acoustic_cfg(0.5, 1.0, 1.0, 128, 40.0, 1234),
            init: InitialData::Zero,
            m: 600,
            checkpoints: vec![],
            chunk: 8,
        };
        let reducer = SeriesReducer {
            n_checkpoints: 0,
            n_modes: 128,
        };
        let acc = run_ensemble(&cfg, &reducer).unwrap();
        let z = acc.balance_residual.mean / acc.balance_residual.std_err();
        assert!(z.abs() <= 3.0, "balance residual z = {z}");
        // and the energy actually grew towards the thermal value
        assert!(acc.final_energy.mean > 0.0);
        // ensemble bound: E E(t) <= E E(0) + (2 - 1/mu) gamma T t
        let bound = (2.0 - 1.0 / 1.0) * 0.5 * 1.0 * 40.0;
        assert!(
            acc.final_energy.mean <= bound + 3.0 * acc.final_energy.std_err(),
            "mean energy {} above the linear growth bound {bound}",
            acc.final_energy.mean
        );
    }

    #[test]
    fn mu_half_conserves_energy_per_trajectory() {
        let sim = ChainSim::new(acoustic_cfg(2.0, 0.5, 1.0, 256, 1200.0, 4321)).unwrap();
        for traj in 0..4u64 {
            let mut st = packet_state_ignoring_wrap(&sim, traj);
            let e0 = sim.total_energy(&st);
            sim.evolve_to(&mut st, 1200.0);
            assert!(st.jumps >= 1000, "want >= 1000 flips, got {}", st.jumps);
            let drift = (sim.total_energy(&st) - e0).abs() / e0;
            assert!(drift <= 1e-10, "energy drift {drift} at mu = 1/2");
        }
    }
}
