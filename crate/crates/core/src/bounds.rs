//! Arithmetic bounds: Radon–Hurwitz numbers, the leaf diameter bound, the
//! constants of the local Toponogov-type theorem, and the Ferus-type blow-up
//! scenario.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::almost_product::WeightedAlmostProduct;
use crate::error::Error;
use crate::geodesic::{integrate_geodesic, riccati_flow, hypothesis_x1, RiccatiOptions, TraceCurvature};
use crate::linalg::{sphere_directions, Mat, Vector};
use crate::weighted::weighted_jacobi_perp_in;
use crate::Result;

/// `ρ(odd · 2^{4b+c}) = 8b + 2^c`, `0 ≤ c ≤ 3`.
pub fn radon_hurwitz(n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::invalid("radon_hurwitz needs n >= 1"));
    }
    let m = n.trailing_zeros() as u64;
    let (b, c) = (m / 4, m % 4);
    Ok(8 * b + (1 << c))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RhoCheck {
    pub n_max: u64,
    /// `ρ(n) ≤ 2 log₂ n + 2` for every `1 ≤ n ≤ n_max`.
    pub log_bound_holds: bool,
    /// `ρ(n) ≤ n` for every `n`.
    pub rho_le_n: bool,
    /// The `n` for which the chained `2 log₂ n + 2 ≤ n` fails.
    pub chain_failures: Vec<u64>,
}

pub fn rho_bound_check(n_max: u64) -> RhoCheck {
    let mut out = RhoCheck { n_max, log_bound_holds: true, rho_le_n: true, chain_failures: Vec::new() };
    for n in 1..=n_max {
        let r = radon_hurwitz(n).unwrap_or(0) as f64;
        let lb = 2.0 * libm::log2(n as f64) + 2.0;
        if r > lb + 1e-12 {
            out.log_bound_holds = false;
        }
        if r > n as f64 {
            out.rho_le_n = false;
        }
        if n >= 2 && lb > n as f64 + 1e-12 {
            out.chain_failures.push(n);
        }
    }
    out
}

/// `ν(n) = max { t : t < ρ(n − t) }`, by brute force over `1 ≤ t ≤ n − 1`;
/// zero when no `t` qualifies.
pub fn nullity_threshold(n: u64) -> Result<u64> {
    if n < 2 {
        return Err(Error::invalid("nullity_threshold needs n >= 2"));
    }
    let mut best = 0;
    for t in 1..n {
        if t < radon_hurwitz(n - t)? {
            best = t;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiameterInput {
    pub c: f64,
    pub q: usize,
    pub n: usize,
    pub nu: usize,
    /// `‖X⊥‖` (sup norm).
    pub x_perp: f64,
    /// `‖h_𝔉‖` (sup norm).
    pub h_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DiameterBound {
    pub case: u8,
    pub diam_sq: f64,
    pub diam: f64,
}

/// Upper bound for the maximal distance between leaves under `CD⊤(c, 𝒩, q)`:
///
/// ```text
/// diam² ≤ 2q‖X⊥‖/(c + q‖X⊥‖²) + 2q‖h‖/c + { π²/4                  ν ≤ n − 1
///                                          { (q − ν + n − 1)π²/(4c) n − 1 < ν < n + q − 1
///                                          { 0                     ν ≥ n + q − 1
/// ```
///
/// The first branch's `π²/4` is deliberately not divided by `c`, unlike the second.
pub fn diameter_bound(d: &DiameterInput) -> Result<DiameterBound> {
    if !(d.c > 0.0) || d.x_perp < 0.0 || d.h_norm < 0.0 || d.n == 0 || d.nu == 0 {
        return Err(Error::invalid("need c > 0, n, nu >= 1 and nonnegative norms"));
    }
    if d.q == 0 || d.q > d.nu {
        return Err(Error::invalid(alloc::format!("q = {} not in 1..={}", d.q, d.nu)));
    }
    let q = d.q as f64;
    let denom = d.c + q * d.x_perp * d.x_perp;
    if !(denom > 0.0) {
        return Err(Error::invalid("c + q|X_perp|^2 must be positive"));
    }
    let base = 2.0 * q * d.x_perp / denom + 2.0 * q * d.h_norm / d.c;
    let (nu, n, qi) = (d.nu as i64, d.n as i64, d.q as i64);
    let (case, extra) = if nu <= n - 1 {
        (1, PI * PI / 4.0)
    } else if nu < n + qi - 1 {
        (2, (qi - nu + n - 1) as f64 * PI * PI / (4.0 * d.c))
    } else {
        (3, 0.0)
    };
    let diam_sq = base + extra;
    Ok(DiameterBound { case, diam_sq, diam: libm::sqrt(diam_sq) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PinchingVariant {
    /// Local theorem, constant `0.3`, `k₁ > 0`.
    Local,
    /// Decomposition theorem, constant `0.337`, `k₁ ≥ 0`.
    Decomposition,
}

impl PinchingVariant {
    pub fn constant(self) -> f64 {
        match self {
            PinchingVariant::Local => 0.3,
            PinchingVariant::Decomposition => 0.337,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PinchingParams {
    pub k1: f64,
    pub k2: f64,
    pub eps: f64,
    /// Turbulence `a(L)`.
    pub a: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PinchingCheck {
    pub k: f64,
    pub delta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `(k₂ − k₁ + 2ε) max{a², k} ≤ C k (k₂ + ε)` with `k = (k₁ + k₂)/2`.
pub fn pinching_hypothesis(p: &PinchingParams, variant: PinchingVariant) -> Result<PinchingCheck> {
    let k1_ok = match variant {
        PinchingVariant::Local => p.k1 > 0.0,
        PinchingVariant::Decomposition => p.k1 >= 0.0,
    };
    if !k1_ok || p.k2 < p.k1 || p.eps < 0.0 || p.a < 0.0 {
        return Err(Error::invalid("need 0 < k1 <= k2 (0 <= k1 for decomposition), eps >= 0, a >= 0"));
    }
    if p.eps >= p.k1 {
        return Err(Error::Hypothesis(alloc::format!("eps = {} must be below k1 = {}", p.eps, p.k1)));
    }
    let k = 0.5 * (p.k1 + p.k2);
    let lhs = (p.k2 - p.k1 + 2.0 * p.eps) * (p.a * p.a).max(k);
    let rhs = variant.constant() * k * (p.k2 + p.eps);
    Ok(PinchingCheck { k, delta: (p.k1 - p.eps) / (p.k2 + p.eps), lhs, rhs, holds: lhs <= rhs })
}

/// Scan of `δ = k₁/k₂` on `[lo, hi]` for fixed `k₂`, `ε`, `a`; returns the
/// grid with the outcome and the smallest feasible `δ`.
pub fn pinching_scan(k2: f64, eps: f64, a: f64, variant: PinchingVariant, lo: f64, hi: f64, steps: usize) -> (Vec<(f64, bool)>, Option<f64>) {
    let mut grid = Vec::with_capacity(steps + 1);
    let mut first = None;
    for j in 0..=steps {
        let delta = lo + (hi - lo) * j as f64 / steps.max(1) as f64;
        let k1 = delta * k2;
        let ok = pinching_hypothesis(&PinchingParams { k1, k2, eps, a }, variant).is_ok_and(|c| c.holds);
        if ok && first.is_none() {
            first = Some(delta);
        }
        grid.push((delta, ok));
    }
    (grid, first)
}

fn require_delta(delta: f64) -> Result<()> {
    if !(delta > 1.0 / 3.0) {
        return Err(Error::invalid(alloc::format!("delta = {delta} must exceed 1/3")));
    }
    Ok(())
}

/// `f(δ) = ((3δ − 1)/(1 + δ))² √(2δ(1 + δ))`.
pub fn f_delta(delta: f64) -> Result<f64> {
    require_delta(delta)?;
    let r = (3.0 * delta - 1.0) / (1.0 + delta);
    Ok(r * r * libm::sqrt(2.0 * delta * (1.0 + delta)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `0.3(π/2 + τ)((1 + δ)/(3δ − 1))² < √(2δ(1 + δ))`.
pub fn check_minimum_time(tau: f64, delta: f64) -> Result<Inequality> {
    require_delta(delta)?;
    let r = (1.0 + delta) / (3.0 * delta - 1.0);
    let lhs = 0.3 * (FRAC_PI_2 + tau) * r * r;
    let rhs = libm::sqrt(2.0 * delta * (1.0 + delta));
    Ok(Inequality { lhs, rhs, holds: lhs < rhs })
}

/// `(π/2 + τ)(1 − δ)((1 + δ)/(3δ − 1))² max{a²/k, 1} ≥ √(2δ(1 + δ))`.
pub fn check_area_growth(tau: f64, delta: f64, a_sq_over_k: f64) -> Result<Inequality> {
    require_delta(delta)?;
    let r = (1.0 + delta) / (3.0 * delta - 1.0);
    let lhs = (FRAC_PI_2 + tau) * (1.0 - delta) * r * r * a_sq_over_k.max(1.0);
    let rhs = libm::sqrt(2.0 * delta * (1.0 + delta));
    Ok(Inequality { lhs, rhs, holds: lhs >= rhs })
}

/// A vector-valued symmetric bilinear form on `ℝᵐ` with values in `ℝᵖ`
/// (orthonormal coordinates on both sides): `h(u, v)_k = uᵀ comps[k] v`.
#[derive(Clone, Debug)]
pub struct SecondForm {
    pub comps: Vec<Mat>,
}

impl SecondForm {
    pub fn new(comps: Vec<Mat>) -> Result<Self> {
        let m = comps.first().map_or(0, |c| c.nrows());
        for c in &comps {
            if c.nrows() != m || c.ncols() != m {
                return Err(Error::Dimension { expected: m, got: c.ncols() });
            }
        }
        Ok(Self { comps })
    }

    pub fn dim(&self) -> usize {
        self.comps.first().map_or(0, |c| c.nrows())
    }

    pub fn eval(&self, u: &Vector, v: &Vector) -> Vector {
        Vector::from_iterator(self.comps.len(), self.comps.iter().map(|c| (u.transpose() * c * v)[0]))
    }
}

/// `Ric^q_h(x₀; x₁..x_q) = Σᵢ [⟨h(x₀,x₀), h(xᵢ,xᵢ)⟩ − |h(x₀,xᵢ)|²]`.
pub fn extrinsic_q_ricci(h: &SecondForm, x0: &Vector, xs: &[Vector]) -> Result<f64> {
    let m = h.dim();
    for v in core::iter::once(x0).chain(xs) {
        if v.len() != m {
            return Err(Error::Dimension { expected: m, got: v.len() });
        }
    }
    let all: Vec<&Vector> = core::iter::once(x0).chain(xs).collect();
    let mut worst = 0.0f64;
    for (i, a) in all.iter().enumerate() {
        for (j, b) in all.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dot(b) - want).abs());
        }
    }
    if worst > 1e-10 {
        return Err(Error::NotOrthonormal(worst));
    }
    let h00 = h.eval(x0, x0);
    Ok(xs.iter().map(|x| h00.dot(&h.eval(x, x)) - h.eval(x0, x).norm_squared()).sum())
}

/// One scalar branch of the Ferus-type scenario.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FerusBranch {
    pub direction: usize,
    pub lambda0: f64,
    /// True when `λ₀` is a real eigenvalue of `Bˣ_x` at the base point;
    /// otherwise the branch is the hypothetical initialisation `Bˣ = λ₀ id`.
    pub from_operator: bool,
    pub blow_up: Option<f64>,
    pub before_end: bool,
}

#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FerusReport {
    pub k: f64,
    pub t_end: f64,
    /// `max ‖R⊥_{X,γ̇} − k id‖` over all traces.
    pub jacobi_deviation: f64,
    /// `max g(X/n, γ̇)²`.
    pub x1_max: f64,
    pub hypotheses_hold: bool,
    pub real_eigenvalues: usize,
    pub branches: Vec<FerusBranch>,
    pub all_blow_up: bool,
    pub nu: usize,
    pub n: usize,
    pub rho_n: u64,
    pub nu_below_rho: bool,
}

/// Tolerance on `‖R⊥_{X,γ̇} − k id‖` for the scenario hypotheses.
pub const FERUS_TOL: f64 = 1e-3;

/// Runs the blow-up mechanism along leaf geodesics from `m` in `directions`
/// sampled unit directions of `D⊤`, on `[0, π/√k]`.
pub fn ferus_scenario(w: &WeightedAlmostProduct, m: &[f64], k: f64, directions: usize, steps: usize) -> Result<FerusReport> {
    if !(k > 0.0) {
        return Err(Error::Hypothesis(alloc::format!("k = {k} must be positive")));
    }
    let pk = w.pack(m)?;
    let t_end = PI / libm::sqrt(k);
    let dt = t_end / steps.max(10) as f64;
    let n = w.n();
    let mut out = FerusReport {
        k,
        t_end,
        jacobi_deviation: 0.0,
        x1_max: 0.0,
        hypotheses_hold: true,
        real_eigenvalues: 0,
        branches: Vec::new(),
        all_blow_up: true,
        nu: w.nu(),
        n,
        rho_n: radon_hurwitz(n as u64)?,
        nu_below_rho: (w.nu() as u64) < radon_hurwitz(n as u64)?,
    };
    for (di, c) in sphere_directions(w.nu(), directions, 0x6665_7275).iter().enumerate() {
        let x = pk.from_top(c.as_slice());
        let tr = integrate_geodesic(w, m, &x, t_end, dt)?;
        for (kk, p) in tr.points.iter().enumerate() {
            let here = w.pack(p)?;
            let r = weighted_jacobi_perp_in(&here, &tr.velocities[kk], &tr.normal_basis(kk));
            out.jacobi_deviation = out.jacobi_deviation.max((r - Mat::identity(n, n) * k).abs().max());
        }
        let (x1, _) = hypothesis_x1(w, &tr, k)?;
        out.x1_max = out.x1_max.max(x1);
        let bx = pk.co_nullity_in(&x, &tr.normal_basis(0))?.weighted;
        let eig = bx.complex_eigenvalues();
        let mut lambdas: Vec<(f64, bool)> = Vec::new();
        for e in eig.iter() {
            if e.im.abs() < 1e-9 && e.re <= 0.0 {
                lambdas.push((e.re, true));
                out.real_eigenvalues += 1;
            }
        }
        for l in [0.0, -0.5, -2.0] {
            lambdas.push((l, false));
        }
        let src = TraceCurvature { w, trace: &tr, weighted: true };
        for (l0, from_operator) in lambdas {
            let b0 = Mat::identity(n, n) * l0;
            let ric = riccati_flow(&src, &b0, RiccatiOptions::new(t_end, dt))?;
            let before = ric.blow_up.is_some_and(|t| t < t_end);
            out.all_blow_up &= before;
            out.branches.push(FerusBranch { direction: di, lambda0: l0, from_operator, blow_up: ric.blow_up, before_end: before });
        }
    }
    out.hypotheses_hold = out.jacobi_deviation <= FERUS_TOL && out.x1_max <= k;
    Ok(out)
}
