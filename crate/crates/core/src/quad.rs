//! Adaptive Gauss-Kronrod quadrature used by the scattering and transport
//! modules.
//!
//! The integrands here are smooth away from isolated points (band edges,
//! resonances, removable singularities), so a 7/15 Kronrod pair with
//! bisection of the worst panel is enough. Panels never evaluate the
//! integrand at their endpoints, which lets callers integrate right up to
//! integrable edge singularities.

use num_complex::Complex64;
use std::collections::BinaryHeap;

/// 15-point Kronrod abscissae on [0, 1] (positive half; node 0 included).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// 7-point Gauss weights for the odd-index Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Values that can be integrated: real or complex samples.
pub trait IntegrandValue: Copy + Send {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn sub(self, other: Self) -> Self;
    fn scale(self, s: f64) -> Self;
    fn norm(self) -> f64;
}

impl IntegrandValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn norm(self) -> f64 {
        self.abs()
    }
}

impl IntegrandValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn norm(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum QuadError {
    #[error("quadrature failed to reach abs tol {requested:.3e}: estimated error {achieved:.3e} after {panels} panels")]
    ToleranceNotMet {
        requested: f64,
        achieved: f64,
        panels: usize,
    },
    #[error("quadrature integrand produced a non-finite value near x = {at}")]
    NonFinite { at: f64 },
    #[error("invalid quadrature interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome<V> {
    pub value: V,
    pub abs_err: f64,
    pub evals: usize,
}

/// Mixed absolute/relative stopping tolerance: refinement stops once the
/// error estimate drops below `abs + rel * |integral|`.
#[derive(Debug, Clone, Copy)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Tol {
    pub fn absolute(abs: f64) -> Self {
        Tol { abs, rel: 0.0 }
    }

    pub fn mixed(abs: f64, rel: f64) -> Self {
        Tol { abs, rel }
    }
}

struct Panel<V> {
    a: f64,
    b: f64,
    value: V,
    err: f64,
    seq: u64,
}

struct HeapKey {
    err: f64,
    seq: u64,
    idx: usize,
}

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.seq == other.seq
    }
}
impl Eq for HeapKey {}
impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // total order: larger error wins, ties broken by creation sequence
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn kronrod_panel<V: IntegrandValue, F: Fn(f64) -> V>(
    f: &F,
    a: f64,
    b: f64,
    seq: u64,
) -> Result<(Panel<V>, usize), QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    let mut kronrod = fc.scale(WGK[7]);
    let mut gauss = fc.scale(WG[3]);
    let mut res_abs = fc.norm() * WGK[7];

    for (i, &x) in XGK.iter().enumerate().take(7) {
        let x1 = center - half * x;
        let x2 = center + half * x;
        let f1 = f(x1);
        let f2 = f(x2);
        if !f1.norm().is_finite() {
            return Err(QuadError::NonFinite { at: x1 });
        }
        if !f2.norm().is_finite() {
            return Err(QuadError::NonFinite { at: x2 });
        }
        let sum = f1.add(f2);
        kronrod = kronrod.add(sum.scale(WGK[i]));
        res_abs += WGK[i] * (f1.norm() + f2.norm());
        if i % 2 == 1 {
            gauss = gauss.add(sum.scale(WG[i / 2]));
        }
    }
    if !fc.norm().is_finite() {
        return Err(QuadError::NonFinite { at: center });
    }

    let value = kronrod.scale(half);
    let raw = kronrod.add(gauss.scale(-1.0)).norm() * half.abs();
    // QUADPACK-style error rescaling keeps the estimate honest on rough panels
    let res_abs = res_abs * half.abs();
    let mut err = raw;
    if res_abs > 0.0 && raw > 0.0 {
        let scale = (200.0 * raw / res_abs).powf(1.5);
        if scale < 1.0 {
            err = res_abs * scale;
        }
    }
    err = err.max(50.0 * f64::EPSILON * res_abs);

    Ok((
        Panel {
            a,
            b,
            value,
            err,
            seq,
        },
        15,
    ))
}

/// Adaptively integrate `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// `breakpoints` are interior abscissae where the integrand is known to be
/// non-smooth (resonances, removable singularities); the initial subdivision
/// is split there so no quadrature node lands on them.
pub fn integrate<V, F>(
    f: F,
    a: f64,
    b: f64,
    tol: Tol,
    breakpoints: &[f64],
    max_panels: usize,
) -> Result<QuadOutcome<V>, QuadError>
where
    V: IntegrandValue,
    F: Fn(f64) -> V,
{
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(QuadError::BadInterval { a, b });
    }

    let mut edges: Vec<f64> = vec![a, b];
    for &x in breakpoints {
        if x > a && x < b {
            edges.push(x);
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut panels: Vec<Panel<V>> = Vec::new();
    let mut heap: BinaryHeap<HeapKey> = BinaryHeap::new();
    let mut seq: u64 = 0;
    let mut evals = 0usize;
    let mut running = V::zero();

    for w in edges.windows(2) {
        let (p, n) = kronrod_panel(&f, w[0], w[1], seq)?;
        evals += n;
        running = running.add(p.value);
        heap.push(HeapKey {
            err: p.err,
            seq,
            idx: panels.len(),
        });
        panels.push(p);
        seq += 1;
    }

    let min_width = (b - a) * 1e-15;
    let mut frozen_err = 0.0f64;
    loop {
        let live_err: f64 = panels.iter().map(|p| p.err).sum();
        let goal = tol.abs + tol.rel * running.norm();
        if live_err <= goal {
            break;
        }
        if panels.len() >= max_panels {
            return Err(QuadError::ToleranceNotMet {
                requested: goal,
                achieved: live_err + frozen_err,
                panels: panels.len(),
            });
        }
        let worst = heap.pop().expect("heap tracks all live panels");
        let (pa, pb) = (panels[worst.idx].a, panels[worst.idx].b);
        if pb - pa < min_width {
            // cannot refine further: freeze this panel's error so the loop
            // does not livelock; it still counts toward the reported error
            frozen_err += panels[worst.idx].err;
            panels[worst.idx].err = 0.0;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let mid = 0.5 * (pa + pb);
        let (left, n1) = kronrod_panel(&f, pa, mid, seq)?;
        seq += 1;
        let (right, n2) = kronrod_panel(&f, mid, pb, seq)?;
        seq += 1;
        evals += n1 + n2;

        running = running
            .sub(panels[worst.idx].value)
            .add(left.value)
            .add(right.value);
        heap.push(HeapKey {
            err: left.err,
            seq: left.seq,
            idx: worst.idx,
        });
        panels[worst.idx] = left;
        heap.push(HeapKey {
            err: right.err,
            seq: right.seq,
            idx: panels.len(),
        });
        panels.push(right);
    }

    // deterministic summation order: by left endpoint
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = V::zero();
    let mut abs_err = frozen_err;
    for p in &panels {
        value = value.add(p.value);
        abs_err += p.err;
    }
    Ok(QuadOutcome {
        value,
        abs_err,
        evals,
    })
}

/// Integrate `f` over `[a, +inf)` for integrands decaying like `1/x^2` or
/// faster, via the substitution `u = 1/x`. Requires `a > 0`.
pub fn integrate_tail<V, F>(
    f: F,
    a: f64,
    tol: Tol,
    max_panels: usize,
) -> Result<QuadOutcome<V>, QuadError>
where
    V: IntegrandValue,
    F: Fn(f64) -> V,
{
    assert!(
        a > 0.0,
        "tail integration requires a positive left endpoint"
    );
    integrate(
        |u| f(1.0 / u).scale(1.0 / (u * u)),
        0.0,
        1.0 / a,
        tol,
        &[],
        max_panels,
    )
}
