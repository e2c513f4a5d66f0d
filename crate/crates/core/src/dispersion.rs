//! Lattice dispersion relations and the geometry derived from them: group
//! velocity, inverse branches, extrema and the singular wavenumber set.
//!
//! A dispersion relation is `omega(k) = sqrt(alpha_hat(k))` on the unit torus,
//! where `alpha_hat` is the Fourier transform of the (even, exponentially
//! decaying) coupling sequence. Everything downstream assumes `omega` is
//! unimodal: even, increasing on [0, 1/2], minimum `omega_min` at k = 0 and
//! maximum `omega_max` at k = 1/2.

use serde::Serialize;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

/// Wavenumbers within this distance of the singular set are rejected by
/// operations that are undefined there.
pub const SINGULAR_MATCH_TOL: f64 = 1e-12;

/// Grid density used by [`DispersionRelation::validate`].
const VALIDATION_SAMPLES: usize = 20_001;

#[derive(Debug, Clone, thiserror::Error)]
pub enum DispersionError {
    #[error("wavenumber {k} lies in the singular set (omega'(k) = 0 or omega(k) = 0)")]
    SingularWavenumber { k: f64 },
    #[error("frequency {w} outside the band [{min}, {max}]")]
    OutOfBand { w: f64, min: f64, max: f64 },
    #[error("dispersion relation failed validation: {0}")]
    Invalid(String),
    #[error("coupling file error: {0}")]
    CouplingFile(String),
}

/// Which inverse branch of a unimodal dispersion to select.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `omega_+ : [omega_min, omega_max] -> [0, 1/2]`
    Plus,
    /// `omega_- = -omega_+`
    Minus,
}

/// Side from which a one-sided limit is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

#[derive(Debug, Clone, Serialize)]
pub enum DispersionModel {
    /// `alpha_hat(k) = omega_min^2 + 4 sin^2(pi k)`; acoustic for
    /// `omega_min = 0`, optical (gapped) otherwise.
    NearestNeighbor { omega_min: f64 },
    /// Even coupling sequence `alpha[y]`, `y = 0..=radius`, so
    /// `alpha_hat(k) = alpha[0] + 2 sum_{y>=1} alpha[y] cos(2 pi k y)`.
    Tabulated { alpha: Vec<f64>, radius: usize },
}

/// Classification of the band bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BandKind {
    /// `omega_min = 0`, `omega(k) ~ |k|` near zero.
    Acoustic,
    /// `omega_min > 0`, `omega'(k) ~ k` near zero.
    Optical,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub failures: Vec<String>,
    pub kind: BandKind,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Singular set restricted to [0, 1/2]; mirrored points are implied.
    pub singular_set: Vec<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            write!(
                f,
                "valid {:?} dispersion, band [{:.6}, {:.6}]",
                self.kind, self.omega_min, self.omega_max
            )
        } else {
            write!(f, "invalid dispersion: {}", self.failures.join("; "))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionRelation {
    model: DispersionModel,
    omega_min: f64,
    omega_max: f64,
    /// Critical points detected in the open interval (0, 1/2).
    interior_critical: Vec<f64>,
}

impl DispersionRelation {
    /// Nearest-neighbor chain with an optical gap `omega_min >= 0`.
    pub fn nearest_neighbor(omega_min: f64) -> Self {
        assert!(
            omega_min.is_finite() && omega_min >= 0.0,
            "omega_min must be a finite non-negative frequency"
        );
        let omega_max = (omega_min * omega_min + 4.0).sqrt();
        DispersionRelation {
            model: DispersionModel::NearestNeighbor { omega_min },
            omega_min,
            omega_max,
            interior_critical: Vec::new(),
        }
    }

    /// Build from a symmetrized coupling sequence `alpha[y]`, `y = 0..=radius`.
    pub fn from_couplings(alpha: Vec<f64>, radius: usize) -> Self {
        assert!(!alpha.is_empty(), "need at least alpha[0]");
        let mut alpha = alpha;
        alpha.truncate(radius + 1);
        let mut d = DispersionRelation {
            model: DispersionModel::Tabulated { alpha, radius },
            omega_min: 0.0,
            omega_max: 0.0,
            interior_critical: Vec::new(),
        };
        d.omega_min = d.alpha_hat(0.0).max(0.0).sqrt();
        d.omega_max = d.alpha_hat(0.5).max(0.0).sqrt();
        d.interior_critical = d.detect_interior_critical();
        d
    }

    /// Read couplings from a two-column text file of `y alpha_y` pairs.
    /// Rows with negative `y` must mirror the positive ones; entries beyond
    /// `radius` are dropped.
    pub fn from_coupling_file(path: &Path, radius: usize) -> Result<Self, DispersionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DispersionError::CouplingFile(format!("{}: {e}", path.display())))?;
        let mut alpha = vec![0.0f64; radius + 1];
        let mut seen = vec![false; radius + 1];
        let mut dropped_max = 0.0f64;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (ys, vs) = match (it.next(), it.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(DispersionError::CouplingFile(format!(
                        "line {}: expected `y alpha_y`",
                        lineno + 1
                    )))
                }
            };
            let y: i64 = ys.parse().map_err(|_| {
                DispersionError::CouplingFile(format!("line {}: bad site index", lineno + 1))
            })?;
            let v: f64 = vs.parse().map_err(|_| {
                DispersionError::CouplingFile(format!("line {}: bad coupling value", lineno + 1))
            })?;
            let yu = y.unsigned_abs() as usize;
            if yu > radius {
                dropped_max = dropped_max.max(v.abs());
                continue;
            }
            if seen[yu] && (alpha[yu] - v).abs() > 1e-12 * (1.0 + v.abs()) {
                return Err(DispersionError::CouplingFile(format!(
                    "couplings not even: alpha[{yu}] given twice with different values"
                )));
            }
            alpha[yu] = v;
            seen[yu] = true;
        }
        if !seen[0] {
            return Err(DispersionError::CouplingFile("missing alpha[0]".into()));
        }
        let kept_max = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if dropped_max > 1e-12 * kept_max {
            return Err(DispersionError::CouplingFile(format!(
                "couplings beyond radius {radius} are not negligible (max |alpha| = {dropped_max:.3e}): exponential decay check failed"
            )));
        }
        Ok(Self::from_couplings(alpha, radius))
    }

    pub fn model(&self) -> &DispersionModel {
        &self.model
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn kind(&self) -> BandKind {
        if self.omega_min == 0.0 {
            BandKind::Acoustic
        } else {
            BandKind::Optical
        }
    }

    /// `alpha_hat(k)`, the radicand of the dispersion relation.
    pub fn alpha_hat(&self, k: f64) -> f64 {
        let k = fold_half(k);
        match &self.model {
            DispersionModel::NearestNeighbor { omega_min } => {
                let s = (PI * k).sin();
                omega_min * omega_min + 4.0 * s * s
            }
            DispersionModel::Tabulated { alpha, .. } => {
                let mut v = alpha[0];
                for (y, &a) in alpha.iter().enumerate().skip(1) {
                    v += 2.0 * a * (2.0 * PI * k * y as f64).cos();
                }
                v
            }
        }
    }

    /// `d/dk alpha_hat(k)` on [0, 1/2], extended oddly.
    fn alpha_hat_prime_folded(&self, k: f64) -> f64 {
        match &self.model {
            DispersionModel::NearestNeighbor { .. } => 4.0 * PI * (2.0 * PI * k).sin(),
            DispersionModel::Tabulated { alpha, .. } => {
                let mut v = 0.0;
                for (y, &a) in alpha.iter().enumerate().skip(1) {
                    v -= 4.0 * PI * a * (y as f64) * (2.0 * PI * k * y as f64).sin();
                }
                v
            }
        }
    }

    /// The dispersion relation `omega(k) = sqrt(alpha_hat(k))`. Even and
    /// 1-periodic; evenness is exact because the argument is folded first.
    pub fn omega(&self, k: f64) -> f64 {
        self.alpha_hat(k).max(0.0).sqrt()
    }

    /// `omega'(k)` for `k` in the open interval `(0, 1/2)`, extended oddly;
    /// not meaningful on the singular set.
    pub fn omega_prime(&self, k: f64) -> f64 {
        let folded = fold_half(k);
        let sign = if folded < 0.0 { -1.0 } else { 1.0 };
        let kf = folded.abs();
        let w = self.omega(kf);
        if w == 0.0 {
            return f64::NAN;
        }
        sign * self.alpha_hat_prime_folded(kf) / (2.0 * w)
    }

    /// `d^2/dk^2 alpha_hat` (even in k).
    fn alpha_hat_pp(&self, k: f64) -> f64 {
        let k = fold_half(k).abs();
        match &self.model {
            DispersionModel::NearestNeighbor { .. } => 8.0 * PI * PI * (2.0 * PI * k).cos(),
            DispersionModel::Tabulated { alpha, .. } => {
                let mut v = 0.0;
                for (y, &a) in alpha.iter().enumerate().skip(1) {
                    let y = y as f64;
                    v -= 8.0 * PI * PI * a * y * y * (2.0 * PI * k * y).cos();
                }
                v
            }
        }
    }

    /// `d^3/dk^3 alpha_hat` on [0, 1/2], extended oddly.
    fn alpha_hat_ppp_folded(&self, k: f64) -> f64 {
        match &self.model {
            DispersionModel::NearestNeighbor { .. } => -16.0 * PI * PI * PI * (2.0 * PI * k).sin(),
            DispersionModel::Tabulated { alpha, .. } => {
                let mut v = 0.0;
                for (y, &a) in alpha.iter().enumerate().skip(1) {
                    let y = y as f64;
                    v += 16.0 * PI * PI * PI * a * y * y * y * (2.0 * PI * k * y).sin();
                }
                v
            }
        }
    }

    /// `alpha_hat(q) - alpha_hat(k)` via the exact product identity
    /// `cos(2 pi q y) - cos(2 pi k y) = -2 sin(pi y (q+k)) sin(pi y (q-k))`,
    /// cancellation-free for `q` near `k`.
    pub fn alpha_hat_diff(&self, q: f64, k: f64) -> f64 {
        match &self.model {
            DispersionModel::NearestNeighbor { .. } => {
                4.0 * (PI * (q - k)).sin() * (PI * (q + k)).sin()
            }
            DispersionModel::Tabulated { alpha, .. } => {
                let mut v = 0.0;
                for (y, &a) in alpha.iter().enumerate().skip(1) {
                    let y = y as f64;
                    v -= 4.0 * a * (PI * y * (q + k)).sin() * (PI * y * (q - k)).sin();
                }
                v
            }
        }
    }

    /// `omega(q) - omega(k)`, cancellation-free for `q` near `k`.
    pub fn omega_diff(&self, q: f64, k: f64) -> f64 {
        self.alpha_hat_diff(q, k) / (self.omega(q) + self.omega(k))
    }

    /// Curvature of the radicand at the band bottom, `alpha_hat''(0)`.
    pub fn alpha_hat_pp_at_zero(&self) -> f64 {
        self.alpha_hat_pp(0.0)
    }

    /// `omega''(k)`, even in k; meaningful away from the singular set.
    pub fn omega_pp(&self, k: f64) -> f64 {
        let kf = fold_half(k).abs();
        let w = self.omega(kf);
        let wp = self.alpha_hat_prime_folded(kf) / (2.0 * w);
        self.alpha_hat_pp(kf) / (2.0 * w) - wp * wp / w
    }

    /// `omega'''(k)`, odd in k; meaningful away from the singular set.
    pub fn omega_ppp(&self, k: f64) -> f64 {
        let folded = fold_half(k);
        let sign = if folded < 0.0 { -1.0 } else { 1.0 };
        let kf = folded.abs();
        let w = self.omega(kf);
        let wp = self.alpha_hat_prime_folded(kf) / (2.0 * w);
        let wpp = self.alpha_hat_pp(kf) / (2.0 * w) - wp * wp / w;
        sign * (self.alpha_hat_ppp_folded(kf) / (2.0 * w)
            - self.alpha_hat_pp(kf) * wp / (2.0 * w * w)
            - 2.0 * wp * wpp / w
            + wp * wp * wp / (w * w))
    }

    /// Group velocity `omega'(k) / (2 pi)`.
    pub fn group_velocity(&self, k: f64) -> Result<f64, DispersionError> {
        if self.is_singular(k) {
            return Err(DispersionError::SingularWavenumber { k });
        }
        Ok(self.omega_prime(k) / (2.0 * PI))
    }

    /// One-sided limit of the group velocity at a singular point. At the band
    /// extrema the limit is 0; at the acoustic bottom it is the sound speed
    /// with the sign of the approach direction.
    pub fn group_velocity_one_sided(&self, k: f64, side: Side) -> f64 {
        if !self.is_singular(k) {
            return self.omega_prime(k) / (2.0 * PI);
        }
        let folded = fold_half(k);
        if folded.abs() < SINGULAR_MATCH_TOL && self.kind() == BandKind::Acoustic {
            // omega ~ sqrt(alpha_hat''(0)/2) |k| near an acoustic bottom
            let h = 1e-6;
            let slope = self.omega(h) / h / (2.0 * PI);
            return match side {
                Side::Above => slope,
                Side::Below => -slope,
            };
        }
        0.0
    }

    /// Whether `k` lies (to within [`SINGULAR_MATCH_TOL`]) in the singular set
    /// `Omega_* = {k : omega'(k) = 0 or omega(k) = 0}`.
    pub fn is_singular(&self, k: f64) -> bool {
        let folded = fold_half(k).abs();
        if folded < SINGULAR_MATCH_TOL || (folded - 0.5).abs() < SINGULAR_MATCH_TOL {
            return true;
        }
        self.interior_critical
            .iter()
            .any(|&c| (folded - c).abs() < SINGULAR_MATCH_TOL)
    }

    /// Distance from `k` to the singular set, measured on the folded torus.
    pub fn singular_distance(&self, k: f64) -> f64 {
        let folded = fold_half(k).abs();
        let mut d = folded.min(0.5 - folded);
        for &c in &self.interior_critical {
            d = d.min((folded - c).abs());
        }
        d
    }

    /// Singular set restricted to [0, 1/2].
    pub fn singular_set(&self) -> Vec<f64> {
        let mut s = vec![0.0, 0.5];
        s.extend_from_slice(&self.interior_critical);
        s.sort_by(f64::total_cmp);
        s
    }

    /// Inverse branch `omega_+` (or its mirror) of the unimodal dispersion.
    pub fn inverse_branch(&self, w: f64, branch: Branch) -> Result<f64, DispersionError> {
        if !w.is_finite() || w < self.omega_min - 1e-12 || w > self.omega_max + 1e-12 {
            return Err(DispersionError::OutOfBand {
                w,
                min: self.omega_min,
                max: self.omega_max,
            });
        }
        let w = w.clamp(self.omega_min, self.omega_max);
        let k = match &self.model {
            DispersionModel::NearestNeighbor { omega_min } => {
                let r = ((w * w - omega_min * omega_min) / 4.0).clamp(0.0, 1.0);
                r.sqrt().asin() / PI
            }
            DispersionModel::Tabulated { .. } => {
                // omega is strictly increasing on [0, 1/2]: bisect
                let mut lo = 0.0f64;
                let mut hi = 0.5f64;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.omega(mid) < w {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        };
        Ok(match branch {
            Branch::Plus => k,
            Branch::Minus => -k,
        })
    }

    fn detect_interior_critical(&self) -> Vec<f64> {
        let n = VALIDATION_SAMPLES;
        let mut crit = Vec::new();
        let mut prev = self.alpha_hat_prime_folded(0.5 / n as f64);
        for i in 2..n {
            let k = 0.5 * i as f64 / n as f64;
            if k >= 0.5 - 1e-9 {
                break;
            }
            let cur = self.alpha_hat_prime_folded(k);
            let critical = prev.signum() != cur.signum() || cur.abs() < 1e-10;
            if critical && crit.last().is_none_or(|&c: &f64| (k - c) > 1e-3) {
                crit.push(k);
            }
            prev = cur;
        }
        crit
    }

    /// Sampled validation of the standing assumptions: positivity of the
    /// radicand off k = 0, unimodality, consistency of the cached extrema.
    pub fn validate(&self) -> ValidationReport {
        let mut failures = Vec::new();
        let n = VALIDATION_SAMPLES;

        let mut min_alpha = f64::INFINITY;
        let mut min_alpha_at = 0.0;
        for i in 1..=n {
            let k = 0.5 * i as f64 / n as f64;
            let a = self.alpha_hat(k);
            if a < min_alpha {
                min_alpha = a;
                min_alpha_at = k;
            }
        }
        if min_alpha <= 0.0 {
            failures.push(format!(
                "alpha_hat({min_alpha_at:.6}) = {min_alpha:.3e} <= 0: radicand not positive off k = 0"
            ));
        }
        if self.alpha_hat(0.0) < -1e-12 {
            failures.push(format!(
                "alpha_hat(0) = {:.3e} < 0: energy not bounded below",
                self.alpha_hat(0.0)
            ));
        }

        if min_alpha > 0.0 {
            let mut prev = self.omega(0.0);
            let mut monotone = true;
            for i in 1..=n {
                let k = 0.5 * i as f64 / n as f64;
                let w = self.omega(k);
                if w < prev - 1e-12 {
                    monotone = false;
                    failures.push(format!(
                        "omega not increasing on [0, 1/2]: decreases near k = {k:.6}"
                    ));
                    break;
                }
                prev = w;
            }
            if monotone && !self.interior_critical.is_empty() {
                failures.push(format!(
                    "degenerate interior critical points of omega at {:?}",
                    self.interior_critical
                ));
            }
        }

        let w0 = self.omega(0.0);
        let wh = self.omega(0.5);
        if (w0 - self.omega_min).abs() > 1e-12 * (1.0 + w0) {
            failures.push("cached omega_min inconsistent with omega(0)".into());
        }
        if (wh - self.omega_max).abs() > 1e-12 * (1.0 + wh) {
            failures.push("cached omega_max inconsistent with omega(1/2)".into());
        }

        ValidationReport {
            failures,
            kind: self.kind(),
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            singular_set: self.singular_set(),
        }
    }

    /// Validate and convert failures into an error.
    pub fn checked(&self) -> Result<&Self, DispersionError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(DispersionError::Invalid(report.failures.join("; ")))
        }
    }
}

/// Fold a wavenumber into the fundamental domain [-1/2, 1/2).
pub fn fold_half(k: f64) -> f64 {
    let mut r = k - k.round();
    if r >= 0.5 {
        r -= 1.0;
    }
    r
}
