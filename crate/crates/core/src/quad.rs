//! Quadrature building blocks: an adaptive Gauss–Kronrod (7/15) rule for
//! complex-valued integrands, and a Filon-type Gauss–Legendre panel rule for
//! ∫ f(y)e^{iay} dy used on the tensor lattices of the likelihood integral.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncation radii, tolerances and budgets shared by every quadrature in
/// the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadConfig {
    /// Truncation radius R of the y-integral in each dimension; `None`
    /// grows R until the tail estimate is below `tol`.
    pub radius: Option<f64>,
    /// Largest radius the automatic search may reach.
    pub max_radius: f64,
    /// Absolute tolerance of the y-integral on the density scale.
    pub tol: f64,
    /// Absolute tolerance for Laplace-functional quadratures.
    pub lambda_tol: f64,
    /// Budget on integrand evaluations (lattice nodes or adaptive calls).
    pub max_evals: usize,
    /// Minimum admissible |b + K(s)| in the exponential-mark reduction.
    pub pole_tol: f64,
    /// Upper bound on the panel width of the y-lattice near the origin.
    pub panel_width: f64,
    /// Away from the origin panels are `panel_growth·|y|` wide.
    pub panel_growth: f64,
    /// Gauss–Legendre nodes per panel.
    pub lattice_order: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            radius: None,
            max_radius: 1e6,
            tol: 1e-8,
            lambda_tol: 1e-11,
            max_evals: 20_000_000,
            pole_tol: 1e-12,
            panel_width: 1.0,
            panel_growth: 0.2,
            lattice_order: 10,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self, field: &str) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{field}.{name}"), format!("must be > 0, got {v}")))
            }
        };
        if let Some(r) = self.radius {
            positive("radius", r)?;
        }
        positive("max_radius", self.max_radius)?;
        positive("tol", self.tol)?;
        positive("lambda_tol", self.lambda_tol)?;
        positive("pole_tol", self.pole_tol)?;
        positive("panel_width", self.panel_width)?;
        positive("panel_growth", self.panel_growth)?;
        if self.lattice_order < 2 {
            return Err(Error::invalid(format!("{field}.lattice_order"), "must be ≥ 2"));
        }
        if self.max_evals == 0 {
            return Err(Error::invalid(format!("{field}.max_evals"), "must be ≥ 1"));
        }
        Ok(())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Value of a quadrature together with its error estimate and cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: Complex64,
    pub abs_err: f64,
    pub evals: usize,
}

/// Tolerances and budget for one adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    let kronrod = kronrod * half;
    let gauss = gauss * half;
    (kronrod, (kronrod - gauss).norm())
}

/// Globally adaptive Gauss–Kronrod integration over the union of the
/// intervals delimited by `breaks` (sorted, at least two entries).
///
/// The segment with the largest error estimate is bisected until the summed
/// estimate meets `max(tol.abs, tol.rel·|I|)`. Segments that shrink below
/// machine resolution are frozen rather than refined further.
pub fn adaptive<F: FnMut(f64) -> Complex64>(
    mut f: F,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    assert!(breaks.len() >= 2, "need at least one interval");
    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    let mut evals = 0usize;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, e) = gk15(&mut f, w[0], w[1]);
        evals += 15;
        total += value;
        err += e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value,
            err: e,
        });
    }
    let mut frozen_err = 0.0;
    loop {
        let target = tol.abs.max(tol.rel * total.norm());
        if err <= target || heap.is_empty() {
            return Ok(Integral {
                value: total,
                abs_err: err,
                evals,
            });
        }
        if evals + 30 > tol.max_evals {
            return Err(Error::BudgetExceeded {
                evals,
                err_estimate: err,
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) < 1e-13 * worst.a.abs().max(1.0) {
            // Unrefinable segment: keep its contribution and error as they are.
            frozen_err += worst.err;
            if heap.is_empty() || frozen_err > target {
                return Ok(Integral {
                    value: total,
                    abs_err: err,
                    evals,
                });
            }
            continue;
        }
        let (lv, le) = gk15(&mut f, worst.a, mid);
        let (rv, re) = gk15(&mut f, mid, worst.b);
        evals += 30;
        total += lv + rv - worst.value;
        err += le + re - worst.err;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: lv,
            err: le,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: rv,
            err: re,
        });
    }
}

/// Nodes and weights of the `m`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = mf * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

/// Panel boundaries on [−radius, radius], symmetric about 0: `core` wide
/// near the origin and `growth·|y|` wide once that is larger.
pub fn graded_breaks(radius: f64, core: f64, growth: f64) -> Vec<f64> {
    let mut right = vec![0.0];
    let mut x: f64 = 0.0;
    while x < radius {
        let next = x + core.max(growth * x);
        // Avoid a sliver as the last panel.
        x = if radius - next < 0.5 * core.max(growth * next) { radius } else { next };
        right.push(x);
    }
    let mut out: Vec<f64> = right[1..].iter().rev().map(|v| -v).collect();
    out.extend(right);
    out
}

/// j_0..j_{m−1}(x), the spherical Bessel functions of the first kind.
pub fn spherical_bessel(x: f64, out: &mut [f64]) {
    let m = out.len();
    if m == 0 {
        return;
    }
    let ax = x.abs();
    if ax == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    if ax > m as f64 {
        // Upward recurrence is stable while l < x.
        out[0] = ax.sin() / ax;
        if m > 1 {
            out[1] = ax.sin() / (ax * ax) - ax.cos() / ax;
        }
        for l in 1..m - 1 {
            out[l + 1] = (2 * l + 1) as f64 / ax * out[l] - out[l - 1];
        }
    } else {
        // Downward ratios r_l = j_l / j_{l−1} pick out the minimal solution.
        let top = m + 40;
        let mut r = 0.0;
        let mut ratios = vec![0.0; m];
        for l in (1..=top).rev() {
            r = ax / ((2 * l + 1) as f64 - ax * r);
            if l < m {
                ratios[l] = r;
            }
        }
        out[0] = ax.sin() / ax;
        for l in 1..m {
            out[l] = out[l - 1] * ratios[l];
        }
    }
    if x < 0.0 {
        for v in out.iter_mut().skip(1).step_by(2) {
            *v = -*v;
        }
    }
}

/// Gauss–Legendre panels whose weights for ∫ f(y)e^{iay} dy are exact when f
/// is a polynomial of degree < order on every panel, whatever a is.
///
/// On a panel y = c + ht, ∫ℓ_j(t)e^{iωt} dt = w_j Σ_{l<m} (2l+1) i^l j_l(ω) P_l(t_j)
/// with ω = ah: the plane-wave expansion of e^{iωt} truncates because ℓ_j
/// has degree m − 1. So panel widths need to resolve f only, not the phase.
#[derive(Debug, Clone)]
pub struct OscillatoryRule {
    order: usize,
    centers: Vec<f64>,
    half_widths: Vec<f64>,
    nodes: Vec<f64>,
    // table[j·m + l] = w_j (2l+1) P_l(t_j)
    table: Vec<f64>,
}

impl OscillatoryRule {
    pub fn new(breaks: &[f64], order: usize) -> Self {
        let (t, w) = gauss_legendre(order);
        let mut table = vec![0.0; order * order];
        for j in 0..order {
            let (mut p0, mut p1) = (1.0, t[j]);
            for l in 0..order {
                let pl = match l {
                    0 => 1.0,
                    1 => t[j],
                    _ => {
                        let lf = l as f64;
                        let p2 = ((2.0 * lf - 1.0) * t[j] * p1 - (lf - 1.0) * p0) / lf;
                        p0 = p1;
                        p1 = p2;
                        p2
                    }
                };
                table[j * order + l] = w[j] * (2 * l + 1) as f64 * pl;
            }
        }
        let mut centers = Vec::with_capacity(breaks.len());
        let mut half_widths = Vec::with_capacity(breaks.len());
        let mut nodes = Vec::with_capacity(breaks.len() * order);
        for b in breaks.windows(2) {
            let (c, h) = (0.5 * (b[0] + b[1]), 0.5 * (b[1] - b[0]));
            centers.push(c);
            half_widths.push(h);
            nodes.extend(t.iter().map(|t| c + h * t));
        }
        OscillatoryRule {
            order,
            centers,
            half_widths,
            nodes,
            table,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights W_j(a) with ∫ f(y)e^{iay} dy ≈ Σ_j W_j f(y_j).
    pub fn weights(&self, a: f64) -> Vec<Complex64> {
        let m = self.order;
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut jl = vec![0.0; m];
        let mut coef = vec![Complex64::new(0.0, 0.0); m];
        let i_pow = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        for (&c, &h) in self.centers.iter().zip(&self.half_widths) {
            spherical_bessel(a * h, &mut jl);
            for l in 0..m {
                coef[l] = i_pow[l % 4] * jl[l];
            }
            let outer = Complex64::from_polar(h, a * c);
            for j in 0..m {
                let row = &self.table[j * m..(j + 1) * m];
                let s: Complex64 = row.iter().zip(&coef).map(|(t, c)| c * *t).sum();
                out.push(outer * s);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol(abs: f64) -> Tolerance {
        Tolerance {
            abs,
            rel: 0.0,
            max_evals: 200_000,
        }
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for m in 1..12 {
            let (x, w) = gauss_legendre(m);
            for deg in 0..(2 * m) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "m={m} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn adaptive_handles_oscillation() {
        // ∫_0^{20} cos(5x) e^{-x} dx = Re[(1 - e^{-(1-5i)20}) / (1 - 5i)]
        let r = adaptive(
            |x| Complex64::new((5.0 * x).cos() * (-x).exp(), 0.0),
            &[0.0, 20.0],
            tol(1e-12),
        )
        .unwrap();
        let z = Complex64::new(1.0, -5.0);
        let exact = ((Complex64::new(1.0, 0.0) - (-z * 20.0).exp()) / z).re;
        assert!((r.value.re - exact).abs() < 1e-11);
    }

    #[test]
    fn adaptive_reports_budget_exhaustion() {
        let r = adaptive(
            |x| Complex64::new((1.0 / x).sin(), 0.0),
            &[1e-6, 1.0],
            Tolerance {
                abs: 1e-14,
                rel: 0.0,
                max_evals: 300,
            },
        );
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn spherical_bessel_closed_forms() {
        let mut out = vec![0.0; 12];
        for x in [1e-6, 0.3, 1.0, 2.5, 7.0, 11.9, 12.5, 40.0, 1e3, -3.0] {
            spherical_bessel(x, &mut out);
            let (s, c) = (x.sin(), x.cos());
            let j0 = s / x;
            let j1 = s / (x * x) - c / x;
            let j2 = (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
            assert!((out[0] - j0).abs() < 1e-14, "x={x}");
            // the closed forms cancel badly near 0; the series check covers that
            if x.abs() > 1e-3 {
                assert!((out[1] - j1).abs() < 1e-12, "x={x}");
                assert!((out[2] - j2).abs() < 1e-12, "x={x}");
            }
        }
        // series j_l(x) ≈ x^l/(2l+1)!! for small x
        spherical_bessel(1e-3, &mut out);
        let mut dfact = 1.0;
        for l in 0..12 {
            dfact *= (2 * l + 1) as f64;
            let expect = 1e-3f64.powi(l as i32) / dfact;
            assert!((out[l] / expect - 1.0).abs() < 1e-6, "l={l}");
        }
        // j_11(11.99) computed both ways must agree with the Miller branch
        let mut up = vec![0.0; 12];
        let mut down = vec![0.0; 12];
        spherical_bessel(12.0 + 1e-9, &mut up);
        spherical_bessel(12.0, &mut down);
        for l in 0..12 {
            assert!((up[l] - down[l]).abs() < 1e-10, "l={l}");
        }
    }

    #[test]
    fn graded_breaks_cover_the_box() {
        let b = graded_breaks(1000.0, 0.25, 0.2);
        assert_eq!(b[0], -1000.0);
        assert_eq!(*b.last().unwrap(), 1000.0);
        assert!(b.windows(2).all(|w| w[1] > w[0]));
        for (lo, hi) in b.iter().zip(b.iter().rev()) {
            assert_eq!(*lo, -hi);
        }
        assert!(b.len() < 120);
    }

    #[test]
    fn oscillatory_rule_is_exact_for_polynomial_amplitudes() {
        let breaks = [-1.0, 0.5, 2.0];
        let rule = OscillatoryRule::new(&breaks, 6);
        for a in [0.0, 1e-4, 0.7, 13.0, 500.0, -3.3] {
            let w = rule.weights(a);
            let q: Complex64 = rule.nodes().iter().zip(&w).map(|(y, w)| w * (y * y)).sum();
            let r = adaptive(
                |y| Complex64::from_polar(y * y, a * y),
                &breaks,
                Tolerance {
                    abs: 1e-14,
                    rel: 0.0,
                    max_evals: 10_000_000,
                },
            )
            .unwrap();
            assert!((q - r.value).norm() < 1e-11, "a={a}: {q} vs {}", r.value);
        }
    }

    #[test]
    fn oscillatory_rule_on_gaussian() {
        let rule = OscillatoryRule::new(&graded_breaks(14.0, 0.5, 0.2), 12);
        for a in [0.0, 1.0, 3.0, 6.0] {
            let w = rule.weights(a);
            let q: Complex64 = rule.nodes().iter().zip(&w).map(|(y, w)| w * (-0.5 * y * y).exp()).sum();
            let exact = (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * a * a).exp();
            assert!((q - exact).norm() < 1e-11, "a={a}: {q}");
        }
    }
}
