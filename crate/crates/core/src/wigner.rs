//! Ensemble estimators for the macroscopic energy density and the interface
//! energy budget.
//!
//! The position-wavenumber density is estimated by a windowed spectrogram of
//! the site wave function, normalized so that the deterministic identity
//! "k-integrated grid = window-smoothed site energy" holds exactly per
//! realization, and the grid mass equals `(epsilon/2) * chain energy` up to
//! window overlap ripple.
//!
//! Interface fractions classify the final energy of a packet run by spectral
//! band and by side of the thermostat: transmitted (same band, beyond),
//! reflected (mirror band, behind), scattered (out of band), absorbed
//! (missing from the total). Absorption uses exact energy bookkeeping, not
//! spatial windows.

use crate::chain::{ChainSim, ChainState, EnsembleConfig, EnsembleReducer, Welford};
use crate::dispersion::fold_half;
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, thiserror::Error)]
pub enum WignerError {
    #[error("window does not satisfy lattice << width << box: {0}")]
    ResolutionError(String),
    #[error("packet has not cleared the interface: near-interface in-band fraction {fraction:.3e} > {threshold:.3e}")]
    PacketNotCleared { fraction: f64, threshold: f64 },
    #[error(transparent)]
    Chain(#[from] crate::chain::ChainError),
}

/// Gabor window for the spectrogram estimator, in lattice units.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowSpec {
    /// segment length (power of two); spectral resolution is `1/len`
    pub len: usize,
    /// hop between window centers
    pub hop: usize,
    /// Gaussian std of the window; the segment truncates at `len/2`
    pub sigma: f64,
}

impl WindowSpec {
    /// A window of `len` sites with hop `len/4` and std `len/6`.
    pub fn with_len(len: usize) -> Self {
        WindowSpec {
            len,
            hop: (len / 4).max(1),
            sigma: len as f64 / 6.0,
        }
    }
}

/// Ensemble-averaged energy density over a macroscopic (x, k) grid.
#[derive(Debug, Clone, Serialize)]
pub struct WignerGrid {
    /// window centers in macroscopic coordinates
    pub x: Vec<f64>,
    /// wavenumber bin centers, ascending in [-1/2, 1/2)
    pub k: Vec<f64>,
    /// density, row-major `[x][k]`
    pub values: Vec<f64>,
    /// standard error of each cell (zero for a single realization)
    pub std_err: Vec<f64>,
    /// total energy carried by the grid, `(epsilon/2) * mean chain energy`
    pub mass: f64,
    pub dx: f64,
    pub dk: f64,
}

impl WignerGrid {
    pub fn value(&self, ix: usize, ik: usize) -> f64 {
        self.values[ix * self.k.len() + ik]
    }

    pub fn err(&self, ix: usize, ik: usize) -> f64 {
        self.std_err[ix * self.k.len() + ik]
    }

    /// `int W dk` at one window center.
    pub fn k_integrated(&self, ix: usize) -> f64 {
        (0..self.k.len()).map(|ik| self.value(ix, ik)).sum::<f64>() * self.dk
    }

    /// Grid total `sum W dx dk`.
    pub fn sum_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx * self.dk
    }
}

/// Windowed-spectrogram estimator of the energy density.
#[derive(Debug, Clone, Copy)]
pub struct WignerEstimator {
    pub window: WindowSpec,
    /// lattice-to-macro scale of the run
    pub epsilon: f64,
}

impl WignerEstimator {
    pub fn validate(&self, n: usize) -> Result<(), WignerError> {
        let w = &self.window;
        if !w.len.is_power_of_two() || w.len < 16 {
            return Err(WignerError::ResolutionError(format!(
                "window len {} must be a power of two >= 16 lattice spacings",
                w.len
            )));
        }
        if w.len > n / 4 {
            return Err(WignerError::ResolutionError(format!(
                "window len {} too close to the box size {n}",
                w.len
            )));
        }
        if w.hop == 0 || w.hop > w.len {
            return Err(WignerError::ResolutionError(format!(
                "hop {} must be in 1..=len",
                w.hop
            )));
        }
        Ok(())
    }

    fn window_samples(&self) -> (Vec<f64>, f64) {
        let len = self.window.len;
        let mut w = Vec::with_capacity(len);
        let mut w2 = 0.0;
        for u in 0..len {
            let d = u as f64 - len as f64 / 2.0;
            let v = (-d * d / (2.0 * self.window.sigma * self.window.sigma)).exp();
            w.push(v);
            w2 += v * v;
        }
        (w, w2)
    }

    /// Deterministic single-realization spectrogram; the ensemble estimator
    /// averages these cell by cell.
    pub fn single(&self, sim: &ChainSim, state: &ChainState) -> Result<WignerGrid, WignerError> {
        let n = sim.n();
        self.validate(n)?;
        let sites = sim.sites(state);
        let values = self.spectrogram(&sites, n);
        let mass = 0.5 * self.epsilon * sim.total_energy(state);
        Ok(self.assemble_grid(values, n, mass, None))
    }

    /// The windowed site-energy profile the k-integrated grid must match.
    pub fn smoothed_site_energy(&self, sim: &ChainSim, state: &ChainState) -> Vec<f64> {
        let n = sim.n();
        let sites = sim.sites(state);
        let (w, w2) = self.window_samples();
        let len = self.window.len;
        self.centers(n)
            .iter()
            .map(|&c| {
                let mut acc = 0.0;
                for (u, wu) in w.iter().enumerate() {
                    let s = (c + u + n - len / 2) % n;
                    acc += sites[s].norm_sqr() * wu * wu;
                }
                acc / (2.0 * w2)
            })
            .collect()
    }

    /// Raw per-cell densities for one realization, row-major `[x][k]`.
    fn spectrogram(&self, sites: &[Complex64], n: usize) -> Vec<f64> {
        let len = self.window.len;
        let (w, w2) = self.window_samples();
        let centers = self.centers(n);
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let mut values = vec![0.0; centers.len() * len];
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (ci, &c) in centers.iter().enumerate() {
            for (u, b) in buf.iter_mut().enumerate() {
                let s = (c + u + n - len / 2) % n;
                *b = sites[s] * w[u];
            }
            fft.process(&mut buf);
            // reorder bins to ascending folded wavenumber
            for (bi, z) in buf.iter().enumerate() {
                let shifted = (bi + len / 2) % len;
                values[ci * len + shifted] = z.norm_sqr() / (2.0 * w2);
            }
        }
        values
    }

    fn centers(&self, n: usize) -> Vec<usize> {
        (0..n).step_by(self.window.hop).collect()
    }

    fn assemble_grid(
        &self,
        values: Vec<f64>,
        n: usize,
        mass: f64,
        std_err: Option<Vec<f64>>,
    ) -> WignerGrid {
        let len = self.window.len;
        let centers = self.centers(n);
        let x: Vec<f64> = centers
            .iter()
            .map(|&c| self.epsilon * (c as f64 - (n / 2) as f64))
            .collect();
        let k: Vec<f64> = (0..len)
            .map(|b| (b as f64 - (len / 2) as f64) / len as f64)
            .collect();
        let n_cells = values.len();
        WignerGrid {
            x,
            k,
            std_err: std_err.unwrap_or_else(|| vec![0.0; n_cells]),
            values,
            mass,
            dx: self.epsilon * self.window.hop as f64,
            dk: 1.0 / len as f64,
        }
    }
}

/// Reducer that averages spectrograms of the final state over an ensemble.
pub struct WignerReducer {
    pub est: WignerEstimator,
}

pub struct WignerAcc {
    cells: Vec<Welford>,
    energy: Welford,
}

impl EnsembleReducer for WignerReducer {
    type Acc = WignerAcc;

    fn new_acc(&self) -> WignerAcc {
        WignerAcc {
            cells: Vec::new(),
            energy: Welford::default(),
        }
    }

    fn observe(&self, _: &mut WignerAcc, _: usize, _: usize, _: &ChainSim, _: &ChainState) {}

    fn finish(&self, acc: &mut WignerAcc, _traj: usize, sim: &ChainSim, state: &ChainState) {
        let sites = sim.sites(state);
        let values = self.est.spectrogram(&sites, sim.n());
        if acc.cells.is_empty() {
            acc.cells = vec![Welford::default(); values.len()];
        }
        for (wf, v) in acc.cells.iter_mut().zip(values) {
            wf.push(v);
        }
        acc.energy.push(sim.total_energy(state));
    }

    fn merge(&self, into: &mut WignerAcc, from: WignerAcc) {
        if into.cells.is_empty() {
            *into = from;
            return;
        }
        if from.cells.is_empty() {
            return;
        }
        for (a, b) in into.cells.iter_mut().zip(from.cells) {
            a.merge(b);
        }
        into.energy.merge(from.energy);
    }
}

/// Run an ensemble to `t_end` and average the final-state spectrograms.
pub fn empirical_wigner(
    cfg: &EnsembleConfig,
    est: &WignerEstimator,
) -> Result<WignerGrid, WignerError> {
    est.validate(cfg.chain.n)?;
    let reducer = WignerReducer { est: *est };
    let acc = crate::chain::run_ensemble(&cfg_without_checkpoints(cfg), &reducer)?;
    let values: Vec<f64> = acc.cells.iter().map(|w| w.mean).collect();
    let std_err: Vec<f64> = acc.cells.iter().map(|w| w.std_err()).collect();
    let mass = 0.5 * est.epsilon * acc.energy.mean;
    Ok(est.assemble_grid(values, cfg.chain.n, mass, Some(std_err)))
}

fn cfg_without_checkpoints(cfg: &EnsembleConfig) -> EnsembleConfig {
    EnsembleConfig {
        checkpoints: Vec::new(),
        ..cfg.clone()
    }
}

/// Band/side classification parameters for interface fractions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FractionSpec {
    /// incident carrier wavenumber
    pub k0: f64,
    /// half-width of the "same frequency" spectral bands around +-k0
    pub band_half_width: f64,
    /// sites around the interface checked for leftover in-band energy
    pub clear_margin: usize,
    /// max tolerated near-interface in-band energy fraction
    pub clear_threshold: f64,
}

impl FractionSpec {
    /// Default classification for a Gaussian packet: the band covers the
    /// packet bandwidth `epsilon/(2 pi sigma)` five sigma deep, but never
    /// less than six spectral bins.
    pub fn for_packet(k0: f64, sigma: f64, epsilon: f64, n: usize) -> Self {
        let packet_bw = epsilon / (2.0 * std::f64::consts::PI * sigma);
        FractionSpec {
            k0,
            band_half_width: (5.0 * packet_bw).max(6.0 / n as f64),
            clear_margin: n / 16,
            // in-band scattered residue legitimately lingers near the
            // interface at the few-per-mille level; only flag real stragglers
            clear_threshold: 1e-2,
        }
    }
}

/// Interface energy fractions with standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct FractionReport {
    pub transmitted: f64,
    pub reflected: f64,
    pub scattered: f64,
    pub absorbed: f64,
    pub transmitted_err: f64,
    pub reflected_err: f64,
    pub scattered_err: f64,
    pub absorbed_err: f64,
    pub n_traj: u64,
    /// worst near-interface in-band fraction seen in the ensemble
    pub worst_uncleared: f64,
}

impl FractionReport {
    pub fn sum(&self) -> f64 {
        self.transmitted + self.reflected + self.scattered + self.absorbed
    }

    pub fn combined_err(&self) -> f64 {
        (self.transmitted_err.powi(2)
            + self.reflected_err.powi(2)
            + self.scattered_err.powi(2)
            + self.absorbed_err.powi(2))
        .sqrt()
    }
}

/// Per-trajectory fraction classifier.
pub struct FractionReducer {
    pub spec: FractionSpec,
    /// sign of the incident group velocity: the transmitted side
    pub incident_side: f64,
}

impl FractionReducer {
    pub fn new(sim: &ChainSim, spec: FractionSpec) -> Result<Self, WignerError> {
        let v0 = sim
            .cfg
            .disp
            .group_velocity(spec.k0)
            .map_err(|e| WignerError::ResolutionError(e.to_string()))?;
        Ok(FractionReducer {
            spec,
            incident_side: v0.signum(),
        })
    }

    /// Classify one final state into (transmitted, reflected, scattered,
    /// absorbed, near-interface in-band fraction).
    pub fn classify(&self, sim: &ChainSim, state: &ChainState) -> (f64, f64, f64, f64, f64) {
        let n = sim.n();
        let e0 = state.initial_energy;
        let e_fin = sim.total_energy(state);
        let absorbed = 1.0 - e_fin / e0;

        let zero = Complex64::new(0.0, 0.0);
        let mut plus = vec![zero; n];
        let mut minus = vec![zero; n];
        for j in 0..n {
            let k = j as f64 / n as f64;
            if fold_half(k - self.spec.k0).abs() <= self.spec.band_half_width {
                plus[j] = state.psi_hat[j];
            } else if fold_half(k + self.spec.k0).abs() <= self.spec.band_half_width {
                minus[j] = state.psi_hat[j];
            }
        }
        let plus_state = state.with_psi(plus);
        let minus_state = state.with_psi(minus);
        let plus_sites = sim.sites(&plus_state);
        let minus_sites = sim.sites(&minus_state);

        let mut transmitted = 0.0;
        let mut reflected = 0.0;
        let mut near_interface = 0.0;
        let half = n / 2;
        for s in 0..n {
            if s == 0 {
                // the antipode of the interface on the torus belongs to
                // neither side (it has no mirror partner)
                continue;
            }
            let y = s as f64 - half as f64;
            let side = y * self.incident_side;
            let ep = plus_sites[s].norm_sqr();
            let em = minus_sites[s].norm_sqr();
            if side > 0.0 {
                transmitted += ep;
            }
            if side < 0.0 {
                reflected += em;
            }
            if y.abs() <= self.spec.clear_margin as f64 {
                near_interface += ep + em;
            }
        }
        transmitted /= e0;
        reflected /= e0;
        let scattered = e_fin / e0 - transmitted - reflected;
        (
            transmitted,
            reflected,
            scattered,
            absorbed,
            near_interface / e0,
        )
    }
}

pub struct FractionAcc {
    pub transmitted: Welford,
    pub reflected: Welford,
    pub scattered: Welford,
    pub absorbed: Welford,
    pub worst_uncleared: f64,
}

impl EnsembleReducer for FractionReducer {
    type Acc = FractionAcc;

    fn new_acc(&self) -> FractionAcc {
        FractionAcc {
            transmitted: Welford::default(),
            reflected: Welford::default(),
            scattered: Welford::default(),
            absorbed: Welford::default(),
            worst_uncleared: 0.0,
        }
    }

    fn observe(&self, _: &mut FractionAcc, _: usize, _: usize, _: &ChainSim, _: &ChainState) {}

    fn finish(&self, acc: &mut FractionAcc, _traj: usize, sim: &ChainSim, state: &ChainState) {
        let (t, r, s, a, uncleared) = self.classify(sim, state);
        acc.transmitted.push(t);
        acc.reflected.push(r);
        acc.scattered.push(s);
        acc.absorbed.push(a);
        acc.worst_uncleared = acc.worst_uncleared.max(uncleared);
    }

    fn merge(&self, into: &mut FractionAcc, from: FractionAcc) {
        into.transmitted.merge(from.transmitted);
        into.reflected.merge(from.reflected);
        into.scattered.merge(from.scattered);
        into.absorbed.merge(from.absorbed);
        into.worst_uncleared = into.worst_uncleared.max(from.worst_uncleared);
    }
}

impl FractionAcc {
    pub fn report(&self) -> FractionReport {
        FractionReport {
            transmitted: self.transmitted.mean,
            reflected: self.reflected.mean,
            scattered: self.scattered.mean,
            absorbed: self.absorbed.mean,
            transmitted_err: self.transmitted.std_err(),
            reflected_err: self.reflected.std_err(),
            scattered_err: self.scattered.std_err(),
            absorbed_err: self.absorbed.std_err(),
            n_traj: self.transmitted.n,
            worst_uncleared: self.worst_uncleared,
        }
    }
}

/// Run a packet ensemble and classify the final energy budget.
pub fn interface_fractions(
    cfg: &EnsembleConfig,
    spec: FractionSpec,
) -> Result<FractionReport, WignerError> {
    let sim = ChainSim::new(cfg.chain.clone())?;
    let reducer = FractionReducer::new(&sim, spec)?;
    let acc = crate::chain::run_ensemble(&cfg_without_checkpoints(cfg), &reducer)?;
    let report = acc.report();
    if report.worst_uncleared > spec.clear_threshold {
        return Err(WignerError::PacketNotCleared {
            fraction: report.worst_uncleared,
            threshold: spec.clear_threshold,
        });
    }
    Ok(report)
}

/// Out-of-band spectral energy histogram (fractions of the incident energy
/// per wavenumber bin).
#[derive(Debug, Clone, Serialize)]
pub struct ScatteredSpectrum {
    /// bin centers, ascending in [-1/2, 1/2)
    pub k: Vec<f64>,
    /// per-bin energy fraction of the incident energy
    pub mass: Vec<f64>,
    pub std_err: Vec<f64>,
    pub dk: f64,
}

impl ScatteredSpectrum {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

pub struct SpectrumReducer {
    pub spec: FractionSpec,
    pub bins: usize,
}

pub struct SpectrumAcc {
    bins: Vec<Welford>,
}

impl SpectrumAcc {
    pub fn means(&self) -> Vec<f64> {
        self.bins.iter().map(|w| w.mean).collect()
    }

    pub fn std_errs(&self) -> Vec<f64> {
        self.bins.iter().map(|w| w.std_err()).collect()
    }
}

impl EnsembleReducer for SpectrumReducer {
    type Acc = SpectrumAcc;

    fn new_acc(&self) -> SpectrumAcc {
        SpectrumAcc {
            bins: vec![Welford::default(); self.bins],
        }
    }

    fn observe(&self, _: &mut SpectrumAcc, _: usize, _: usize, _: &ChainSim, _: &ChainState) {}

    fn finish(&self, acc: &mut SpectrumAcc, _traj: usize, sim: &ChainSim, state: &ChainState) {
        let n = sim.n();
        let e0 = state.initial_energy;
        let mut hist = vec![0.0; self.bins];
        for j in 0..n {
            let k = j as f64 / n as f64;
            if fold_half(k - self.spec.k0).abs() <= self.spec.band_half_width
                || fold_half(k + self.spec.k0).abs() <= self.spec.band_half_width
            {
                continue;
            }
            let kf = fold_half(k);
            let b = (((kf + 0.5) * self.bins as f64) as usize).min(self.bins - 1);
            hist[b] += state.psi_hat[j].norm_sqr() / (n as f64 * e0);
        }
        for (w, h) in acc.bins.iter_mut().zip(hist) {
            w.push(h);
        }
    }

    fn merge(&self, into: &mut SpectrumAcc, from: SpectrumAcc) {
        for (a, b) in into.bins.iter_mut().zip(from.bins) {
            a.merge(b);
        }
    }
}

/// Histogram the outgoing out-of-band energy over wavenumber bins.
pub fn scattered_spectrum(
    cfg: &EnsembleConfig,
    spec: FractionSpec,
    bins: usize,
) -> Result<ScatteredSpectrum, WignerError> {
    let reducer = SpectrumReducer { spec, bins };
    let acc = crate::chain::run_ensemble(&cfg_without_checkpoints(cfg), &reducer)?;
    let dk = 1.0 / bins as f64;
    Ok(ScatteredSpectrum {
        k: (0..bins).map(|b| -0.5 + (b as f64 + 0.5) * dk).collect(),
        mass: acc.bins.iter().map(|w| w.mean).collect(),
        std_err: acc.bins.iter().map(|w| w.std_err()).collect(),
        dk,
    })
}
