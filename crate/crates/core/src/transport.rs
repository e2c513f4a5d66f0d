//! The closed-form macroscopic energy density and its interface conditions.
//!
//! For initial data `W0(x, k)` the limiting density decomposes into free
//! flight outside the sonic interval `[[0, v(k) t]]`, transmission and
//! reflection inside it, a frequency-scattering integral whose argument is
//! rescaled by the velocity ratio `v(l)/v(k)`, and thermal production
//! `p_abs g(k) T`. Away from the interface the density solves the free
//! transport equation; at `x = 0` the outgoing rays are the stated mixture
//! of the incoming ones. Both facts are checked numerically here rather than
//! assumed.

use crate::dispersion::fold_half;
use crate::quad::{self, Tol};
use crate::scattering::{ScatteringError, ScatteringProblem, ThermostatParams};
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Mutex;

#[derive(Debug, Clone, thiserror::Error)]
pub enum TransportError {
    #[error("wavenumber {k} inside the singular exclusion band")]
    SingularWavenumber { k: f64 },
    #[error("point (t={t}, x={x}) violates the evaluation precondition: {why}")]
    BadPoint { t: f64, x: f64, why: String },
    #[error(transparent)]
    Scattering(#[from] ScatteringError),
}

/// Initial macroscopic energy density; nonnegative and integrable.
#[derive(Debug, Clone)]
pub enum InitialWigner {
    /// spatially and spectrally uniform density (thermal equilibrium data)
    Constant { value: f64 },
    /// product of Gaussians in position and wavenumber carrying `mass`
    Gaussian {
        x0: f64,
        k0: f64,
        sigma_x: f64,
        sigma_k: f64,
        mass: f64,
    },
}

impl InitialWigner {
    pub fn eval(&self, x: f64, k: f64) -> f64 {
        match self {
            InitialWigner::Constant { value } => *value,
            InitialWigner::Gaussian {
                x0,
                k0,
                sigma_x,
                sigma_k,
                mass,
            } => {
                let gx = (-(x - x0) * (x - x0) / (2.0 * sigma_x * sigma_x)).exp()
                    / (sigma_x * (2.0 * std::f64::consts::PI).sqrt());
                let dk = fold_half(k - k0);
                let gk = (-dk * dk / (2.0 * sigma_k * sigma_k)).exp()
                    / (sigma_k * (2.0 * std::f64::consts::PI).sqrt());
                mass * gx * gk
            }
        }
    }

    /// Total mass over one x-line per unit k for constants is infinite; for
    /// packets it is the `mass` parameter.
    pub fn mass(&self) -> Option<f64> {
        match self {
            InitialWigner::Constant { .. } => None,
            InitialWigner::Gaussian { mass, .. } => Some(*mass),
        }
    }
}

/// Numerical knobs for the evaluator.
#[derive(Debug, Clone, Copy)]
pub struct TransportOpts {
    /// absolute tolerance of the scattering-term quadrature
    pub tol: f64,
    /// wavenumber exclusion band shared with the scattering module
    pub delta_excl: f64,
    /// centered-difference step of the transport-equation check
    pub fd_step: f64,
}

impl Default for TransportOpts {
    fn default() -> Self {
        TransportOpts {
            tol: 1e-8,
            delta_excl: 1e-3,
            fd_step: 1e-4,
        }
    }
}

/// Evaluator of the limiting density for one scattering problem, thermostat
/// parameter set and initial condition.
pub struct MacroSolution {
    problem: ScatteringProblem,
    params: ThermostatParams,
    pub w0: InitialWigner,
    pub big_gamma: f64,
    p_abs: f64,
    /// `p_sc(l) = psc_norm |nu(l)|^2`
    psc_norm: f64,
    opts: TransportOpts,
    nu_cache: Mutex<HashMap<u64, Complex64>>,
}

impl MacroSolution {
    pub fn new(
        problem: ScatteringProblem,
        params: ThermostatParams,
        w0: InitialWigner,
    ) -> Result<Self, TransportError> {
        Self::with_opts(problem, params, w0, TransportOpts::default())
    }

    pub fn with_opts(
        problem: ScatteringProblem,
        params: ThermostatParams,
        w0: InitialWigner,
        opts: TransportOpts,
    ) -> Result<Self, TransportError> {
        let big_gamma = problem.gamma_constant()?;
        let mu = params.mu;
        let denom = 1.0 - big_gamma / mu;
        Ok(MacroSolution {
            problem,
            params,
            w0,
            big_gamma,
            p_abs: (1.0 - 1.0 / (2.0 * mu)) / denom,
            psc_norm: 1.0 / (2.0 * mu * denom),
            opts,
            nu_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn p_abs(&self) -> f64 {
        self.p_abs
    }

    fn nu_cached(&self, k: f64) -> Complex64 {
        let q = fold_half(k).abs();
        let key = q.to_bits();
        if let Some(v) = self.nu_cache.lock().unwrap().get(&key) {
            return *v;
        }
        let v = self
            .problem
            .nu_unchecked(q)
            .expect("quadrature nodes stay strictly inside the band");
        self.nu_cache.lock().unwrap().insert(key, v);
        v
    }

    fn group_velocity(&self, k: f64) -> Result<f64, TransportError> {
        if self.problem.dispersion().singular_distance(k) < self.opts.delta_excl {
            return Err(TransportError::SingularWavenumber { k });
        }
        Ok(self
            .problem
            .dispersion()
            .group_velocity(k)
            .expect("checked distance"))
    }

    fn p_sc(&self, l: f64) -> f64 {
        if self.params.gamma == 0.0 {
            return self.psc_norm;
        }
        self.psc_norm * self.nu_cached(l).norm_sqr()
    }

    /// Transmission, reflection and interaction weights at `k`.
    fn interface_weights(&self, k: f64, speed: f64) -> (f64, f64, f64) {
        let gamma = self.params.gamma;
        if gamma == 0.0 {
            return (1.0, 0.0, 0.0);
        }
        let nu = self.nu_cached(k);
        let wp = gamma * nu / (2.0 * speed);
        let p_plus = (1.0 - wp).norm_sqr();
        let p_minus = wp.norm_sqr();
        let g = gamma * nu.norm_sqr() / speed;
        (p_plus, p_minus, g)
    }

    /// Whether `x` lies in the closed sonic interval `[[0, a]]` (empty for
    /// `a = 0`, so the `t = 0` density is the initial one everywhere).
    fn in_sonic_interval(x: f64, a: f64) -> bool {
        if a == 0.0 {
            return false;
        }
        x >= a.min(0.0) && x <= a.max(0.0)
    }

    /// The limiting density `W(t, x, k)`.
    pub fn evaluate(&self, t: f64, x: f64, k: f64) -> Result<f64, TransportError> {
        if t < 0.0 {
            return Err(TransportError::BadPoint {
                t,
                x,
                why: "t must be >= 0".into(),
            });
        }
        let v = self.group_velocity(k)?;
        let front = v * t;
        if !Self::in_sonic_interval(x, front) {
            return Ok(self.w0.eval(x - front, k));
        }
        let speed = v.abs();
        let (p_plus, p_minus, g) = self.interface_weights(k, speed);
        let mut w = p_plus * self.w0.eval(x - front, k) + p_minus * self.w0.eval(front - x, -k);
        if g > 0.0 {
            w += g * self.scattering_term(x - front, v)?;
            w += self.p_abs * g * self.params.temperature;
        }
        Ok(w)
    }

    /// `int_T W0((v(l)/v(k)) (x - v(k) t), l) p_sc(l) dl`, with the argument
    /// expressed through `u = (x - v(k) t)/v(k)`.
    fn scattering_term(&self, x_minus_front: f64, v_k: f64) -> Result<f64, TransportError> {
        let u = x_minus_front / v_k;
        // integrate essentially to the band edges: p_sc vanishes there, but
        // the mass inside the public exclusion band is not negligible at the
        // stationarity tolerance
        let edge = 1e-9;
        let r = quad::integrate(
            |l| {
                let vl = self
                    .problem
                    .dispersion()
                    .group_velocity(l)
                    .expect("integration stays inside the band");
                let w_pair = self.w0.eval(vl * u, l) + self.w0.eval(-vl * u, -l);
                self.p_sc(l) * w_pair
            },
            edge,
            0.5 - edge,
            Tol::absolute(self.opts.tol),
            &[1e-4, 1e-2, 0.1, 0.25, 0.4, 0.49],
            100_000,
        )
        .map_err(ScatteringError::from)?;
        Ok(r.value)
    }

    /// One-sided trace `W(t, 0^side, k)` taken analytically from the branch
    /// structure: the outgoing side of the interface carries the interface
    /// mixture, the incoming side the free flow.
    pub fn trace(&self, t: f64, k: f64, side: f64) -> Result<f64, TransportError> {
        let v = self.group_velocity(k)?;
        self.trace_at(t, k, side, v)
    }

    /// Trace with a caller-supplied group velocity; quadratures use this to
    /// reach wavenumbers inside the public exclusion band.
    fn trace_at(&self, t: f64, k: f64, side: f64, v: f64) -> Result<f64, TransportError> {
        let front = v * t;
        if side * v > 0.0 && t > 0.0 {
            let speed = v.abs();
            let (p_plus, p_minus, g) = self.interface_weights(k, speed);
            let mut w = p_plus * self.w0.eval(-front, k) + p_minus * self.w0.eval(front, -k);
            if g > 0.0 {
                w += g * self.scattering_term(-front, v)?;
                w += self.p_abs * g * self.params.temperature;
            }
            Ok(w)
        } else {
            Ok(self.w0.eval(-front, k))
        }
    }

    /// Residual of the interface condition relating outgoing rays at `x = 0`
    /// to incoming ones, using the analytic one-sided traces.
    pub fn boundary_residual(&self, t: f64, k: f64) -> Result<f64, TransportError> {
        let v = self.group_velocity(k)?;
        let s = v.signum();
        let speed = v.abs();
        let (p_plus, p_minus, g) = self.interface_weights(k, speed);

        let outgoing = self.trace(t, k, s)?;
        let mut rhs = p_plus * self.trace(t, k, -s)?
            + p_minus * self.trace(t, -k, s)?
            + self.p_abs * g * self.params.temperature;
        if g > 0.0 {
            let edge = 1e-9;
            let r = quad::integrate(
                |l| {
                    // l runs over the half-torus of modes moving towards side s
                    let ls = if s > 0.0 { l } else { -l };
                    let vl =
                        self.problem.dispersion().omega_prime(ls) / (2.0 * std::f64::consts::PI);
                    let incoming = self.trace_at(t, ls, -s, vl).expect("inside band")
                        + self.trace_at(t, -ls, s, -vl).expect("inside band");
                    self.p_sc(ls) * incoming
                },
                edge,
                0.5 - edge,
                Tol::absolute(self.opts.tol),
                &[1e-4, 1e-2, 0.1, 0.25, 0.4, 0.49],
                100_000,
            )
            .map_err(ScatteringError::from)?;
            rhs += g * r.value;
        }
        Ok((outgoing - rhs).abs())
    }

    /// Centered-difference residual of `dW/dt + v(k) dW/dx = 0` away from
    /// the interface and the sonic fronts, together with the magnitude of
    /// the drift term for scale.
    pub fn transport_residual(&self, t: f64, x: f64, k: f64) -> Result<(f64, f64), TransportError> {
        let v = self.group_velocity(k)?;
        let h = self.opts.fd_step;
        if t < h {
            return Err(TransportError::BadPoint {
                t,
                x,
                why: format!("need t >= fd step {h}"),
            });
        }
        if x.abs() <= 2.0 * h {
            return Err(TransportError::BadPoint {
                t,
                x,
                why: "point straddles the interface".into(),
            });
        }
        for s in [-1.0, 1.0] {
            let front = v * (t + s * h);
            if (x - front).abs() <= 2.0 * h.max((v * h).abs()) {
                return Err(TransportError::BadPoint {
                    t,
                    x,
                    why: "point straddles the sonic front".into(),
                });
            }
        }
        let dt = (self.evaluate(t + h, x, k)? - self.evaluate(t - h, x, k)?) / (2.0 * h);
        let dx = (self.evaluate(t, x + h, k)? - self.evaluate(t, x - h, k)?) / (2.0 * h);
        Ok(((dt + v * dx).abs(), (v * dx).abs()))
    }
}
