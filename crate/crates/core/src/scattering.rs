//! Interface scattering theory for the thermostatted chain: the memory kernel
//! `J`, its Laplace transform, Hardy-boundary values `nu(k)`, the total
//! scattering weight `Gamma`, and the transmission / reflection / scattering /
//! absorption coefficients at the interface, together with the identity suite
//! that ties them together.
//!
//! Boundary values on the imaginary axis are computed from the analytic
//! decomposition of `J_laplace` rather than by small-epsilon limits: for an
//! in-band frequency `beta = omega(k*)`,
//!
//! ```text
//! J(i beta) = pi / omega'(k*)
//!           - i [ int_0^1/2 dq / (beta + omega(q))
//!               + pv int_0^1/2 dq / (beta - omega(q)) ]
//! ```
//!
//! with the principal value split into a Lipschitz-regularized integral plus
//! an explicit logarithm. The small-epsilon route is kept as a test oracle.

use crate::dispersion::{Branch, DispersionError, DispersionRelation};
use crate::quad::{self, QuadError, Tol};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ScatteringError {
    #[error("Laplace transform requires Re lambda > 0, got {0}")]
    DomainError(Complex64),
    #[error(
        "wavenumber or frequency too close to the singular band (dist {dist:.3e} < {excl:.3e})"
    )]
    NearSingularBand { dist: f64, excl: f64 },
    #[error("quadrature failure: {0}")]
    QuadratureFailure(#[from] QuadError),
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
    #[error("invalid thermostat parameters: {0}")]
    InvalidParams(String),
}

/// Thermostat parameters: coupling strength, Poisson/Gauss interpolation and
/// temperature. `mu = 1/2` is the velocity flip, `mu = 1` the full renewal,
/// `mu -> inf` the Langevin limit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThermostatParams {
    pub gamma: f64,
    pub mu: f64,
    pub temperature: f64,
}

impl ThermostatParams {
    pub fn new(gamma: f64, mu: f64, temperature: f64) -> Result<Self, ScatteringError> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(ScatteringError::InvalidParams(format!(
                "gamma must be finite and >= 0, got {gamma}"
            )));
        }
        if !(mu.is_finite() && mu >= 0.5) {
            return Err(ScatteringError::InvalidParams(format!(
                "mu must be >= 1/2, got {mu}"
            )));
        }
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(ScatteringError::InvalidParams(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        Ok(ThermostatParams {
            gamma,
            mu,
            temperature,
        })
    }

    /// `rho(mu) = sqrt(2 mu - 1)/mu`, the Gaussian admixture of a jump.
    pub fn rho(&self) -> f64 {
        (2.0 * self.mu - 1.0).sqrt() / self.mu
    }

    /// Poisson intensity of the jump clock.
    pub fn jump_rate(&self) -> f64 {
        self.gamma * self.mu
    }
}

/// Quadrature tolerances and exclusion bands for the boundary-value machinery.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScatteringOpts {
    /// k-space exclusion radius around the singular set.
    pub delta_excl: f64,
    /// absolute tolerance for the inner (single-point) quadratures
    pub tol_point: f64,
    /// absolute tolerance for the k- and beta-integrals (Gamma routes)
    pub tol_integral: f64,
    /// absolute tolerance for `j_laplace` / `j_time`
    pub tol_laplace: f64,
    pub max_panels: usize,
}

impl Default for ScatteringOpts {
    fn default() -> Self {
        ScatteringOpts {
            delta_excl: 1e-3,
            tol_point: 1e-12,
            tol_integral: 2e-10,
            tol_laplace: 1e-11,
            max_panels: 200_000,
        }
    }
}

/// A dispersion relation together with a coupling strength; all scattering
/// quantities derive from this pair. Immutable and cheap to share.
#[derive(Debug, Clone)]
pub struct ScatteringProblem {
    disp: DispersionRelation,
    gamma: f64,
    opts: ScatteringOpts,
}

impl ScatteringProblem {
    pub fn new(disp: DispersionRelation, gamma: f64) -> Result<Self, ScatteringError> {
        Self::with_opts(disp, gamma, ScatteringOpts::default())
    }

    pub fn with_opts(
        disp: DispersionRelation,
        gamma: f64,
        opts: ScatteringOpts,
    ) -> Result<Self, ScatteringError> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(ScatteringError::InvalidParams(format!(
                "gamma must be finite and >= 0, got {gamma}"
            )));
        }
        disp.checked()?;
        Ok(ScatteringProblem { disp, gamma, opts })
    }

    pub fn dispersion(&self) -> &DispersionRelation {
        &self.disp
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn opts(&self) -> &ScatteringOpts {
        &self.opts
    }

    /// `J(t) = int_T cos(omega(k) t) dk`.
    pub fn j_time(&self, t: f64) -> Result<f64, ScatteringError> {
        let d = &self.disp;
        let r = quad::integrate(
            |q| (d.omega(q) * t).cos(),
            0.0,
            0.5,
            Tol::absolute(0.5 * self.opts.tol_laplace),
            &[],
            self.opts.max_panels,
        )?;
        Ok(2.0 * r.value)
    }

    /// `J_laplace(lambda) = int_T lambda/(lambda^2 + omega^2) dk`, Re lambda > 0.
    pub fn j_laplace(&self, lambda: Complex64) -> Result<Complex64, ScatteringError> {
        if lambda.re.is_nan() || lambda.re <= 0.0 {
            return Err(ScatteringError::DomainError(lambda));
        }
        let d = &self.disp;
        // the integrand peaks where omega(q) crosses |Im lambda|
        let mut breaks = Vec::new();
        let b = lambda.im.abs();
        if b > d.omega_min() && b < d.omega_max() {
            if let Ok(q) = d.inverse_branch(b, Branch::Plus) {
                breaks.push(q);
            }
        }
        let r = quad::integrate(
            |q| {
                let w = d.omega(q);
                lambda / (lambda * lambda + w * w)
            },
            0.0,
            0.5,
            Tol::absolute(0.5 * self.opts.tol_laplace),
            &breaks,
            self.opts.max_panels,
        )?;
        Ok(2.0 * r.value)
    }

    /// `g_tilde(lambda) = 1/(1 + gamma J_laplace(lambda))`, Re lambda > 0.
    pub fn g_tilde(&self, lambda: Complex64) -> Result<Complex64, ScatteringError> {
        if self.gamma == 0.0 {
            if lambda.re.is_nan() || lambda.re <= 0.0 {
                return Err(ScatteringError::DomainError(lambda));
            }
            return Ok(Complex64::new(1.0, 0.0));
        }
        Ok(1.0 / (1.0 + self.gamma * self.j_laplace(lambda)?))
    }

    /// Boundary value `lim_{eps->0+} J_laplace(eps + i beta)`.
    ///
    /// Inside the band the real part is `pi/omega'(omega_+^{-1}(|beta|))` and
    /// the imaginary part combines a logarithm with a regularized integral;
    /// outside the band the limit is purely imaginary.
    pub fn j_boundary(&self, beta: f64) -> Result<Complex64, ScatteringError> {
        let b = beta.abs();
        let d = &self.disp;
        let excl = self.opts.delta_excl;

        let edge_dist = (b - d.omega_min()).abs().min((b - d.omega_max()).abs());
        if edge_dist < excl {
            return Err(ScatteringError::NearSingularBand {
                dist: edge_dist,
                excl,
            });
        }

        let v = if b > d.omega_min() && b < d.omega_max() {
            let kstar = d.inverse_branch(b, Branch::Plus)?;
            let dist = d.singular_distance(kstar);
            if dist < excl {
                return Err(ScatteringError::NearSingularBand { dist, excl });
            }
            self.j_boundary_in_band(kstar)?
        } else {
            self.j_boundary_out_of_band(b)?
        };
        Ok(if beta < 0.0 { v.conj() } else { v })
    }

    /// In-band boundary value parametrized by the wavenumber `kstar` in
    /// (0, 1/2), i.e. at frequency `beta = omega(kstar)`. No exclusion-band
    /// check: quadratures drive this arbitrarily close to the edges.
    fn j_boundary_in_band(&self, kstar: f64) -> Result<Complex64, ScatteringError> {
        let d = &self.disp;
        let beta = d.omega(kstar);
        let wp = d.omega_prime(kstar);
        debug_assert!(wp > 0.0, "in-band boundary needs 0 < kstar < 1/2");
        // The error estimator cannot certify better than ~eps/rho in relative
        // terms near the band edges (the boundary value itself grows like
        // 1/rho there), while consumers of edge-adjacent values only need
        // them to a relative accuracy that loosens quadratically faster.
        let edge = kstar.min(0.5 - kstar);
        let tol = Tol::mixed(self.opts.tol_point, (2.2e-15 / edge).clamp(1e-11, 1e-3));

        let i1 = quad::integrate(
            |q| 1.0 / (beta + d.omega(q)),
            0.0,
            0.5,
            tol,
            &[],
            self.opts.max_panels,
        )?;

        // pv int_0^1/2 dq/(beta - omega(q)): fold the symmetric neighborhood
        // of the pole onto itself. With rho the distance from kstar to the
        // nearer edge, the paired integrand
        //   S(u) = 1/(omega(kstar+u) - beta) + 1/(omega(kstar-u) - beta)
        // is smooth and even (the 1/u poles cancel analytically), and the
        // leftover far piece contains no pole at all. Both go through the
        // cancellation-free difference of omega, so this stays accurate for
        // kstar arbitrarily close to the band edges.
        let wpp = d.omega_pp(kstar);
        let rho = kstar.min(0.5 - kstar);
        let s_limit = -wpp / (wp * wp);
        // floor at a few ulps of 1/2 so kstar + u never rounds back to kstar
        let window = (1e-9 * rho).max(3e-16);
        let paired = quad::integrate(
            |u| {
                if u < window {
                    s_limit
                } else {
                    let dwp = d.omega_diff(kstar + u, kstar);
                    let dwm = d.omega_diff(kstar - u, kstar);
                    (dwp + dwm) / (dwp * dwm)
                }
            },
            0.0,
            rho,
            tol,
            &[],
            self.opts.max_panels,
        )?;

        let (fa, fb) = if kstar <= 0.25 {
            (2.0 * kstar, 0.5)
        } else {
            (0.0, 2.0 * kstar - 0.5)
        };
        let far = if fb - fa > 0.0 {
            quad::integrate(
                |q| 1.0 / d.omega_diff(q, kstar),
                fa,
                fb,
                tol,
                &[],
                self.opts.max_panels,
            )?
            .value
        } else {
            0.0
        };

        // pv = -(paired + far); Im J = -(i1 + pv)
        Ok(Complex64::new(PI / wp, -(i1.value - paired.value - far)))
    }

    /// Out-of-band boundary value: purely imaginary, no principal value.
    fn j_boundary_out_of_band(&self, b: f64) -> Result<Complex64, ScatteringError> {
        let d = &self.disp;
        let m = if b > d.omega_max() {
            self.m_above((b - d.omega_max()) * (b + d.omega_max()), b)?
        } else {
            self.m_below((d.omega_min() - b) * (d.omega_min() + b), b)?
        };
        Ok(Complex64::new(0.0, m))
    }

    /// `Im J(i beta)` for `beta^2 = omega_max^2 + t`, `t > 0`. The denominator
    /// `omega^2 - beta^2 = -([A(1/2) - A(q)] + t)` goes through the exact
    /// difference identity, so the peak at the band edge stays clean for
    /// arbitrarily small `t`.
    fn m_above(&self, t: f64, beta: f64) -> Result<f64, ScatteringError> {
        let d = &self.disp;
        let a2 = 0.5 * d.omega_max() * d.omega_pp(0.5).abs();
        let peak = 0.5 - (t / a2.max(1e-12)).sqrt().min(0.499);
        let r = quad::integrate(
            |q| 1.0 / (d.alpha_hat_diff(q, 0.5) - t),
            0.0,
            0.5,
            Tol::mixed(1e-14, 1e-10),
            &[peak],
            self.opts.max_panels,
        )?;
        Ok(2.0 * beta * r.value)
    }

    /// `Im J(i beta)` for `beta^2 = omega_min^2 - t`, `0 < t <= omega_min^2`
    /// (gapped chains only).
    fn m_below(&self, t: f64, beta: f64) -> Result<f64, ScatteringError> {
        let d = &self.disp;
        let a0 = 0.5 * d.alpha_hat_pp_at_zero();
        let peak = (t / a0.max(1e-12)).sqrt().min(0.499);
        let r = quad::integrate(
            |q| 1.0 / (d.alpha_hat_diff(q, 0.0) + t),
            0.0,
            0.5,
            Tol::mixed(1e-14, 1e-10),
            &[peak],
            self.opts.max_panels,
        )?;
        Ok(2.0 * beta * r.value)
    }

    /// `nu(k) = lim g_tilde(eps + i omega(k))`, defined away from the
    /// exclusion band around the singular set.
    pub fn nu(&self, k: f64) -> Result<Complex64, ScatteringError> {
        let dist = self.disp.singular_distance(k);
        if dist < self.opts.delta_excl {
            return Err(ScatteringError::NearSingularBand {
                dist,
                excl: self.opts.delta_excl,
            });
        }
        let kstar = crate::dispersion::fold_half(k).abs();
        self.nu_unchecked(kstar)
    }

    /// `nu` without the exclusion-band gate, for quadratures whose
    /// integrands carry their own damping near the singular set.
    pub fn nu_interior(&self, k: f64) -> Result<Complex64, ScatteringError> {
        self.nu_unchecked(crate::dispersion::fold_half(k).abs())
    }

    /// `nu` at a folded wavenumber in (0, 1/2), without the exclusion check.
    pub(crate) fn nu_unchecked(&self, kstar: f64) -> Result<Complex64, ScatteringError> {
        if self.gamma == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let jb = self.j_boundary_in_band(kstar)?;
        Ok(1.0 / (1.0 + self.gamma * jb))
    }

    /// `Gamma = gamma/(2 pi) int_R |J_laplace g_tilde (i beta)|^2 d beta`,
    /// the total scattering weight, by adaptive quadrature over the boundary
    /// with the in-band part parametrized by wavenumber and the tail beyond
    /// the band integrated exactly under `u = 1/beta`.
    pub fn gamma_constant(&self) -> Result<f64, ScatteringError> {
        if self.gamma == 0.0 {
            return Ok(0.0);
        }
        let d = &self.disp;
        let tol = self.opts.tol_integral;
        let max_panels = self.opts.max_panels;

        // in-band: beta = omega(q), |J g|^2 = |1 - nu|^2 / gamma^2
        let in_band = quad::integrate(
            |q| {
                let nu = self.nu_unchecked(q).expect("inner quadrature");
                let one_minus = Complex64::new(1.0 - nu.re, -nu.im);
                one_minus.norm_sqr() * d.omega_prime(q)
            },
            1e-12,
            0.5 - 1e-12,
            Tol::mixed(0.25 * tol * PI * self.gamma, 1e-9),
            &[1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.25, 0.4, 0.49],
            max_panels,
        )?;
        let mut total = in_band.value / (PI * self.gamma);

        // out of band J is purely imaginary: |J g|^2 = m^2/(1 + gamma^2 m^2).
        // Parametrize by t = |beta^2 - omega_edge^2| so the integrals run
        // right up to the band edges with cancellation-free denominators.
        let gg = self.gamma * self.gamma;
        let piece_tol = Tol::mixed(0.25 * tol * PI / self.gamma, 1e-9);

        if d.omega_min() > 0.0 {
            let wmin2 = d.omega_min() * d.omega_min();
            let below = quad::integrate(
                |t| {
                    let beta = (wmin2 - t).sqrt();
                    let m = self.m_below(t, beta).expect("inner quadrature");
                    m * m / (1.0 + gg * m * m) / (2.0 * beta)
                },
                0.0,
                wmin2,
                piece_tol,
                &[1e-8, 1e-4, 1e-2],
                max_panels,
            )?;
            total += self.gamma / PI * below.value;
        }

        let b0 = d.omega_max() + 10.0;
        let wmax2 = d.omega_max() * d.omega_max();
        let above = quad::integrate(
            |t| {
                let beta = (wmax2 + t).sqrt();
                let m = self.m_above(t, beta).expect("inner quadrature");
                m * m / (1.0 + gg * m * m) / (2.0 * beta)
            },
            0.0,
            b0 * b0 - wmax2,
            piece_tol,
            &[1e-8, 1e-4, 1e-2, 1.0],
            max_panels,
        )?;
        let tail = quad::integrate_tail(
            |beta| {
                let m = self
                    .m_above((beta - d.omega_max()) * (beta + d.omega_max()), beta)
                    .expect("inner quadrature");
                m * m / (1.0 + gg * m * m)
            },
            b0,
            piece_tol,
            max_panels,
        )?;
        total += self.gamma / PI * (above.value + tail.value);

        Ok(total)
    }

    /// `int_T |nu(l)|^2 dl` by k-quadrature refined into the band edges.
    pub fn int_nu_sq(&self) -> Result<f64, ScatteringError> {
        if self.gamma == 0.0 {
            return Ok(1.0);
        }
        let r = quad::integrate(
            |q| self.nu_unchecked(q).expect("inner quadrature").norm_sqr(),
            1e-13,
            0.5 - 1e-13,
            Tol::mixed(0.5 * self.opts.tol_integral, 1e-10),
            &[1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.25, 0.4, 0.49, 0.499],
            self.opts.max_panels,
        )?;
        Ok(2.0 * r.value)
    }

    /// `Gamma` through the independent route `1/2 - 1/2 int_T |nu|^2 dl`.
    pub fn gamma_via_identity(&self) -> Result<f64, ScatteringError> {
        Ok(0.5 - 0.5 * self.int_nu_sq()?)
    }

    /// Evaluate every interface coefficient on `k_grid` plus the scalar
    /// weights, keeping the two Gamma routes separate so their disagreement
    /// stays visible in the identity residuals.
    pub fn interface_coefficients(
        &self,
        params: &ThermostatParams,
        k_grid: &[f64],
    ) -> Result<ScatteringCoefficients, ScatteringError> {
        if (params.gamma - self.gamma).abs() > 0.0 {
            return Err(ScatteringError::InvalidParams(format!(
                "params.gamma = {} differs from problem gamma = {}",
                params.gamma, self.gamma
            )));
        }
        let big_gamma = self.gamma_constant()?;
        let int_nu_sq = self.int_nu_sq()?;
        let mut table = ScatteringCoefficients::new(*params, big_gamma, int_nu_sq);
        for &k in k_grid {
            let nu = self.nu(k)?;
            let vbar = self.disp.group_velocity(k)?;
            table.push_row(k, nu, vbar);
        }
        Ok(table)
    }
}

/// Interface coefficients on a wavenumber grid plus the scalar weights.
///
/// `p_plus`/`p_minus` are the same-frequency transmission and reflection
/// probabilities, `g` the interaction weight, `p_sc` the outgoing-frequency
/// scattering kernel and `p_abs` the absorption coefficient; an incident
/// `l`-phonon is absorbed with probability `p_abs * g(l)`.
#[derive(Debug, Clone, Serialize)]
pub struct ScatteringCoefficients {
    pub params: ThermostatParams,
    /// total scattering weight from the boundary beta-integral
    pub big_gamma: f64,
    /// `int_T |nu|^2` from the independent k-quadrature
    pub int_nu_sq: f64,
    pub p_abs: f64,
    /// `int_T p_sc`, derived from `int_nu_sq`
    pub int_p_sc: f64,
    pub k: Vec<f64>,
    pub nu: Vec<Complex64>,
    pub group_vel: Vec<f64>,
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
    pub g: Vec<f64>,
    pub p_sc: Vec<f64>,
}

impl ScatteringCoefficients {
    fn new(params: ThermostatParams, big_gamma: f64, int_nu_sq: f64) -> Self {
        let mu = params.mu;
        let denom = 1.0 - big_gamma / mu;
        ScatteringCoefficients {
            params,
            big_gamma,
            int_nu_sq,
            p_abs: (1.0 - 1.0 / (2.0 * mu)) / denom,
            int_p_sc: int_nu_sq / (2.0 * mu * denom),
            k: Vec::new(),
            nu: Vec::new(),
            group_vel: Vec::new(),
            p_plus: Vec::new(),
            p_minus: Vec::new(),
            g: Vec::new(),
            p_sc: Vec::new(),
        }
    }

    fn push_row(&mut self, k: f64, nu: Complex64, vbar: f64) {
        let gamma = self.params.gamma;
        let mu = self.params.mu;
        let speed = vbar.abs();
        let wp = gamma * nu / (2.0 * speed);
        self.k.push(k);
        self.nu.push(nu);
        self.group_vel.push(vbar);
        self.p_plus.push((1.0 - wp).norm_sqr());
        self.p_minus.push(wp.norm_sqr());
        self.g.push(gamma * nu.norm_sqr() / speed);
        self.p_sc
            .push(nu.norm_sqr() / (2.0 * mu * (1.0 - self.big_gamma / mu)));
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Index of the grid point closest to wavenumber `k0`.
    pub fn nearest_row(&self, k0: f64) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, &k) in self.k.iter().enumerate() {
            let d = (k - k0).abs();
            if d < bd {
                bd = d;
                best = i;
            }
        }
        best
    }

    /// Test hook: rebuild the mu-dependent weights from a perturbed Gamma.
    pub fn with_perturbed_gamma(&self, delta: f64) -> Self {
        let mut out = self.clone();
        let mu = self.params.mu;
        let big_gamma = self.big_gamma + delta;
        let denom = 1.0 - big_gamma / mu;
        out.big_gamma = big_gamma;
        out.p_abs = (1.0 - 1.0 / (2.0 * mu)) / denom;
        out.int_p_sc = self.int_nu_sq / (2.0 * mu * denom);
        for (i, nu) in self.nu.iter().enumerate() {
            out.p_sc[i] = nu.norm_sqr() / (2.0 * mu * denom);
        }
        out
    }

    /// Run the full identity suite at the given tolerances.
    pub fn identity_suite(&self, tols: &IdentityTolerances) -> IdentityReport {
        let gamma = self.params.gamma;
        let mut checks = Vec::new();

        let mut r_nu = 0.0f64;
        let mut r_sum = 0.0f64;
        let mut r_bal = 0.0f64;
        let mut r_even = 0.0f64;
        for i in 0..self.len() {
            let nu = self.nu[i];
            let speed = self.group_vel[i].abs();
            r_nu = r_nu.max((nu.re - (1.0 + gamma / (2.0 * speed)) * nu.norm_sqr()).abs());
            r_sum = r_sum.max((self.p_plus[i] + self.p_minus[i] + self.g[i] - 1.0).abs());
            r_bal = r_bal.max(
                (1.0 - self.p_plus[i]
                    - self.p_minus[i]
                    - self.g[i] * self.int_p_sc
                    - self.p_abs * self.g[i])
                    .abs(),
            );
            // evenness: find the mirrored grid point if present
            for j in 0..self.len() {
                if (self.k[j] + self.k[i]).abs() < 1e-14 {
                    r_even = r_even.max((self.nu[i] - self.nu[j]).norm());
                }
            }
        }

        // flux-level scattering symmetry on a subsampled pair grid
        let stride = (self.len() / 24).max(1);
        let mut r_flux = 0.0f64;
        for i in (0..self.len()).step_by(stride) {
            for j in (0..self.len()).step_by(stride) {
                let lhs = gamma * self.nu[i].norm_sqr() * self.p_sc[j] / self.group_vel[j].abs();
                let rhs = self.g[j] * self.p_sc[i];
                r_flux = r_flux.max((lhs - rhs).abs());
            }
        }

        let r_gamma = (self.big_gamma + 0.5 * self.int_nu_sq - 0.5).abs();
        let r_fund = (self.p_abs + self.int_p_sc - 1.0).abs();

        checks.push(IdentityCheck::new("re_nu_vs_speed", r_nu, tols.pointwise));
        checks.push(IdentityCheck::new(
            "transmission_reflection_sum",
            r_sum,
            tols.exact_pointwise,
        ));
        checks.push(IdentityCheck::new(
            "gamma_plus_half_int_nu_sq",
            r_gamma,
            tols.gamma_identity,
        ));
        checks.push(IdentityCheck::new(
            "absorption_plus_scattering",
            r_fund,
            tols.fund_identity,
        ));
        checks.push(IdentityCheck::new("balance", r_bal, tols.fund_identity));
        checks.push(IdentityCheck::new(
            "flux_symmetry",
            r_flux,
            tols.exact_pointwise,
        ));
        checks.push(IdentityCheck::new("evenness", r_even, tols.exact_pointwise));

        let mut range_viol = 0.0f64;
        for i in 0..self.len() {
            range_viol = range_viol.max((-self.g[i]).max(self.g[i] - 1.0));
            range_viol = range_viol.max(-self.p_plus[i]);
            range_viol = range_viol.max(-self.p_minus[i]);
            range_viol = range_viol.max(-self.p_sc[i]);
        }
        range_viol = range_viol.max(self.big_gamma - 0.5);
        checks.push(IdentityCheck::new(
            "coefficient_ranges",
            range_viol.max(0.0),
            tols.exact_pointwise,
        ));

        IdentityReport { checks }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityTolerances {
    /// identities limited by boundary-value quadrature (1e-6)
    pub pointwise: f64,
    /// identities that are algebraically exact given the rows (1e-8)
    pub exact_pointwise: f64,
    /// two-route Gamma agreement (1e-6)
    pub gamma_identity: f64,
    /// scalar absorption + scattering balance (1e-8)
    pub fund_identity: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        IdentityTolerances {
            pointwise: 1e-6,
            exact_pointwise: 1e-8,
            gamma_identity: 1e-6,
            fund_identity: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        IdentityCheck {
            name: name.to_string(),
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Uniform symmetric wavenumber grid avoiding the exclusion band.
pub fn uniform_k_grid(disp: &DispersionRelation, n: usize, delta_excl: f64) -> Vec<f64> {
    let mut grid = Vec::with_capacity(n);
    for i in 0..n {
        let k = -0.5 + (i as f64 + 0.5) / n as f64;
        if disp.singular_distance(k) >= delta_excl {
            grid.push(k);
        }
    }
    grid
}
