//! Weighted mixed curvatures and the mixed curvature-dimension condition.
//!
//! With weight field `X`, ranks `ν = rank D⊤`, `n = rank D⊥` and synthetic
//! dimensions `𝒩` (for `D⊤`) and `N` (for `D⊥`):
//!
//! ```text
//! w⊤(y) = ½ 𝓛_{X/ν} g(y,y) + (ν/𝒩) g(X/ν, y)²        y ∈ D⊥
//! w⊥(x) = ½ 𝓛_{X/n} g(x,x) + (n/N) g(X/n, x)²        x ∈ D⊤
//! Ric^{⊤,𝒩}_{q,X}(y; W) = Σ_i K(y, x_i) + q w⊤(y)
//! K^{⊤,𝒩}_X(y, x)      = K(y, x) + w⊤(y) |x|²
//! R⊥_{X,x}             = (R(·, x)x)⊥ + (½ 𝓛_{X/n} g(x,x) + g(X/n, x)²) id
//! ```
//!
//! The unsubscripted weighted quantities (`Ric⊤_{q,X}`, `K⊤_X`) take
//! `𝒩 = ν`, respectively `N = n`.

use alloc::vec::Vec;

use crate::almost_product::{refine_on_sphere, ExtrinsicPack, WeightedAlmostProduct};
use crate::error::Error;
use crate::linalg::{sphere_directions, sym_eigen, Mat, Vector};
use crate::Result;

/// Unit-length tolerance for direction arguments.
pub const UNIT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Side {
    /// Curvature of `D⊤`-directions against a unit `y ∈ D⊥` (weight uses `ν`, `𝒩`).
    Top,
    /// Dual version: `D⊥`-directions against a unit `x ∈ D⊤` (uses `n`, `N`).
    Perp,
}

fn require_unit(pk: &ExtrinsicPack, v: &Vector) -> Result<()> {
    let r = (pk.inner(v, v) - 1.0).abs();
    if r > UNIT_TOL {
        return Err(Error::NotOrthonormal(r));
    }
    Ok(())
}

fn require_orthonormal(pk: &ExtrinsicPack, w: &[Vector]) -> Result<()> {
    let mut worst = 0.0f64;
    for (i, a) in w.iter().enumerate() {
        for (j, b) in w.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((pk.inner(a, b) - want).abs());
        }
    }
    if worst > UNIT_TOL {
        return Err(Error::NotOrthonormal(worst));
    }
    Ok(())
}

fn lie(pk: &ExtrinsicPack, u: &Vector) -> f64 {
    (u.transpose() * &pk.lie_x * u)[0]
}

/// `w⊤(y)` with synthetic dimension `cal_n` in place of `𝒩`.
pub fn w_top_with(pk: &ExtrinsicPack, y: &Vector, cal_n: f64) -> f64 {
    let nu = pk.nu() as f64;
    let gxy = pk.inner(&pk.x, y);
    lie(pk, y) / (2.0 * nu) + gxy * gxy / (nu * cal_n)
}

/// `w⊥(x)` with synthetic dimension `big_n` in place of `N`.
pub fn w_perp_with(pk: &ExtrinsicPack, x: &Vector, big_n: f64) -> f64 {
    let n = pk.n() as f64;
    let gxx = pk.inner(&pk.x, x);
    lie(pk, x) / (2.0 * n) + gxx * gxx / (n * big_n)
}

pub fn w_top(pk: &ExtrinsicPack, y: &Vector) -> f64 {
    w_top_with(pk, y, pk.cal_n)
}

pub fn w_perp(pk: &ExtrinsicPack, x: &Vector) -> f64 {
    w_perp_with(pk, x, pk.big_n)
}

/// `K^{⊤,𝒩}_X(y, x)` for unit `y ∈ D⊥`, unit `x ∈ D⊤`.
pub fn mixed_sectional_weighted(pk: &ExtrinsicPack, y: &Vector, x: &Vector) -> Result<f64> {
    pk.require_perp(y)?;
    pk.require_top(x)?;
    require_unit(pk, y)?;
    require_unit(pk, x)?;
    Ok(pk.geo.sectional(y, x)? + w_top(pk, y) * pk.inner(x, x))
}

/// `K^{⊥,N}_X(x, y)` for unit `x ∈ D⊤`, unit `y ∈ D⊥`.
pub fn mixed_sectional_weighted_perp(pk: &ExtrinsicPack, x: &Vector, y: &Vector) -> Result<f64> {
    pk.require_top(x)?;
    pk.require_perp(y)?;
    require_unit(pk, y)?;
    require_unit(pk, x)?;
    Ok(pk.geo.sectional(x, y)? + w_perp(pk, x) * pk.inner(y, y))
}

/// The three flavours of the mixed `q`th Ricci curvature at one `(y; W)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PartialRicci {
    /// `Σ K(y, x_i)`.
    pub plain: f64,
    /// Weighted with the synthetic dimension equal to the rank.
    pub weighted_rank: f64,
    /// Weighted with the structure's synthetic dimension.
    pub weighted: f64,
}

/// `Ric⊤_q(y; W)`, `Ric⊤_{q,X}(y; W)` and `Ric^{⊤,𝒩}_{q,X}(y; W)`.
pub fn partial_ricci_q(pk: &ExtrinsicPack, y: &Vector, w: &[Vector]) -> Result<PartialRicci> {
    let q = w.len();
    if q == 0 || q > pk.nu() {
        return Err(Error::invalid(alloc::format!("q = {q} not in 1..={}", pk.nu())));
    }
    pk.require_perp(y)?;
    require_unit(pk, y)?;
    for x in w {
        pk.require_top(x)?;
    }
    require_orthonormal(pk, w)?;
    let mut plain = 0.0;
    for x in w {
        plain += pk.geo.sectional(y, x)?;
    }
    let qf = q as f64;
    Ok(PartialRicci {
        plain,
        weighted_rank: plain + qf * w_top_with(pk, y, pk.nu() as f64),
        weighted: plain + qf * w_top(pk, y),
    })
}

/// Dual `Ric⊥_q(x; W)` family for unit `x ∈ D⊤`, `W ⊂ D⊥`.
pub fn partial_ricci_q_perp(pk: &ExtrinsicPack, x: &Vector, w: &[Vector]) -> Result<PartialRicci> {
    let q = w.len();
    if q == 0 || q > pk.n() {
        return Err(Error::invalid(alloc::format!("q = {q} not in 1..={}", pk.n())));
    }
    pk.require_top(x)?;
    require_unit(pk, x)?;
    for y in w {
        pk.require_perp(y)?;
    }
    require_orthonormal(pk, w)?;
    let mut plain = 0.0;
    for y in w {
        plain += pk.geo.sectional(x, y)?;
    }
    let qf = q as f64;
    Ok(PartialRicci {
        plain,
        weighted_rank: plain + qf * w_perp_with(pk, x, pk.n() as f64),
        weighted: plain + qf * w_perp(pk, x),
    })
}

/// `Ric^{⊤,𝒩}_{q,X} − Ric⊤_{q,X}` as it follows from the definition:
/// `q (ν − 𝒩) / (ν² 𝒩) · g(X, y)²`.
pub fn ricci_shift(q: usize, nu: usize, cal_n: f64, gxy: f64) -> f64 {
    let nu = nu as f64;
    q as f64 * (nu - cal_n) / (nu * nu * cal_n) * gxy * gxy
}

/// Symmetric matrix `M_ab = R(E_a, y, y, E_b)` on the given basis.
pub fn curvature_form(pk: &ExtrinsicPack, basis: &[Vector], y: &Vector) -> Mat {
    let k = basis.len();
    Mat::from_fn(k, k, |a, b| pk.geo.riemann_uvwz(&basis[a], y, y, &basis[b]))
}

/// Exact minimum over orthonormal `q`-frames (Ky Fan): the sum of the `q`
/// smallest eigenvalues of `m`, with a minimising frame as columns.
pub fn ky_fan_min(m: &Mat, q: usize) -> (f64, Mat) {
    let (vals, vecs) = sym_eigen(m);
    let sum = vals.iter().take(q).sum();
    (sum, vecs.columns(0, q).into_owned())
}

/// Minimiser of the weighted `q`th Ricci curvature at one point.
#[derive(Clone, Debug)]
pub struct MinRicci {
    pub value: f64,
    /// Unit direction in the fixed distribution (coordinates).
    pub direction: Vector,
    /// Minimising orthonormal `q`-frame in the other distribution.
    pub frame: Vec<Vector>,
    pub samples: usize,
}

/// Inner minimum over `W` for a fixed unit direction.
pub fn min_partial_ricci_at(pk: &ExtrinsicPack, q: usize, side: Side, dir: &Vector) -> (f64, Vec<Vector>) {
    let (basis, weight) = match side {
        Side::Top => (pk.top_basis(), w_top(pk, dir)),
        Side::Perp => (pk.perp_basis(), w_perp(pk, dir)),
    };
    let m = curvature_form(pk, &basis, dir);
    let (s, cols) = ky_fan_min(&m, q);
    let frame = (0..q)
        .map(|c| {
            let mut v = Vector::zeros(pk.dim());
            for (a, e) in basis.iter().enumerate() {
                v += e * cols[(a, c)];
            }
            v
        })
        .collect();
    (s + q as f64 * weight, frame)
}

/// `min_{y, W} Ric^{⊤,𝒩}_{q,X}(y; W)` at a point (or the dual for
/// [`Side::Perp`]). The inner minimum is exact; the outer one samples the
/// unit sphere of the fixed distribution and refines the best samples.
pub fn min_partial_ricci(pk: &ExtrinsicPack, q: usize, side: Side) -> Result<MinRicci> {
    let (outer, inner) = match side {
        Side::Top => (pk.n(), pk.nu()),
        Side::Perp => (pk.nu(), pk.n()),
    };
    if q == 0 || q > inner {
        return Err(Error::invalid(alloc::format!("q = {q} not in 1..={inner}")));
    }
    let to_vec = |c: &Vector| match side {
        Side::Top => pk.from_perp(c.as_slice()),
        Side::Perp => pk.from_top(c.as_slice()),
    };
    let f = |c: &Vector| min_partial_ricci_at(pk, q, side, &to_vec(c)).0;
    let count = if outer <= 3 { 512 } else { 4096 };
    let dirs = sphere_directions(outer, count, 0x6364_7368);
    let mut scored: Vec<(f64, usize)> = dirs.iter().enumerate().map(|(i, c)| (f(c), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best_val = scored[0].0;
    let mut best = dirs[scored[0].1].clone();
    if outer > 1 {
        for &(_, i) in scored.iter().take(4) {
            let (v, c) = refine_on_sphere(f, dirs[i].clone(), 20);
            if v < best_val {
                best_val = v;
                best = c;
            }
        }
    }
    let direction = to_vec(&best);
    let (value, frame) = min_partial_ricci_at(pk, q, side, &direction);
    Ok(MinRicci { value, direction, frame, samples: dirs.len() })
}

/// Outcome of a sampled curvature-dimension check.
#[derive(Clone, Debug)]
pub struct CdCheck {
    pub holds: bool,
    /// `min − c` over the sample grid.
    pub margin: f64,
    pub minimum: f64,
    pub witness_point: Vec<f64>,
    pub witness_direction: Vector,
    pub witness_frame: Vec<Vector>,
    pub points: usize,
}

/// Sampled `CD⊤(c, 𝒩, q)` (or `CD⊥(c, N, q)`): holds iff the minimum of the
/// weighted `q`th Ricci curvature over `points` is at least `c`.
pub fn cd_check(w: &WeightedAlmostProduct, points: &[Vec<f64>], c: f64, q: usize, side: Side) -> Result<CdCheck> {
    let mins: Result<Vec<(usize, MinRicci)>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((i, min_partial_ricci(&w.pack(p)?, q, side)?)))
        .collect();
    merge_cd(points, mins?, c)
}

/// Min-reduction of per-point minima, in grid order (deterministic).
pub fn merge_cd(points: &[Vec<f64>], mins: Vec<(usize, MinRicci)>, c: f64) -> Result<CdCheck> {
    let mut best: Option<(usize, MinRicci)> = None;
    for (i, m) in mins {
        let better = match &best {
            None => true,
            Some((j, b)) => m.value < b.value || (m.value == b.value && i < *j),
        };
        if better {
            best = Some((i, m));
        }
    }
    let (i, m) = best.ok_or_else(|| Error::invalid("empty sample grid"))?;
    Ok(CdCheck {
        holds: m.value - c >= 0.0,
        margin: m.value - c,
        minimum: m.value,
        witness_point: points[i].clone(),
        witness_direction: m.direction,
        witness_frame: m.frame,
        points: points.len(),
    })
}

/// Mixed scalar curvature and its weighted versions.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MixedScalar {
    /// `Σ_{a,i} K(E_a, ℰ_i)`.
    pub s_mix: f64,
    /// `tr_g Ric⊤`, summed over `D⊥`.
    pub trace_top: f64,
    /// `tr_g Ric⊥`, summed over `D⊤`.
    pub trace_perp: f64,
    /// `S_mix + ½ Div X + (1/2N)‖X⊤‖² + (1/2𝒩)‖X⊥‖²`.
    pub weighted: f64,
    /// `½ tr_g(Ric^{⊥,N}_X + Ric^{⊤,𝒩}_X)`, assembled from the weighted Ricci traces.
    pub weighted_from_traces: f64,
    /// `S_{mix,X}`: the weighted value with `N = n`, `𝒩 = ν`.
    pub weighted_rank: f64,
}

pub fn mixed_scalar(pk: &ExtrinsicPack) -> MixedScalar {
    let top = pk.top_basis();
    let perp = pk.perp_basis();
    let mut s_mix = 0.0;
    let mut trace_top = 0.0;
    let mut trace_perp = 0.0;
    for a in &top {
        for y in &perp {
            // unit orthogonal pair: K is the bare curvature value
            s_mix += pk.geo.riemann_uvwz(a, y, y, a);
            trace_top += pk.geo.riemann_uvwz(y, a, a, y);
            trace_perp += pk.geo.riemann_uvwz(a, y, y, a);
        }
    }
    let mut w_top_sum = 0.0;
    for y in &perp {
        w_top_sum += pk.nu() as f64 * w_top(pk, y);
    }
    let mut w_perp_sum = 0.0;
    for x in &top {
        w_perp_sum += pk.n() as f64 * w_perp(pk, x);
    }
    let xt = pk.top(&pk.x);
    let xp = pk.perp(&pk.x);
    let x_top = pk.inner(&xt, &xt);
    let x_perp = pk.inner(&xp, &xp);
    let (nu, n) = (pk.nu() as f64, pk.n() as f64);
    let weighted = s_mix + 0.5 * pk.div_x + x_top / (2.0 * pk.big_n) + x_perp / (2.0 * pk.cal_n);
    let weighted_rank = s_mix + 0.5 * pk.div_x + x_top / (2.0 * n) + x_perp / (2.0 * nu);
    MixedScalar {
        s_mix,
        trace_top,
        trace_perp,
        weighted,
        weighted_from_traces: 0.5 * ((trace_perp + w_perp_sum) + (trace_top + w_top_sum)),
        weighted_rank,
    }
}

/// `S^{N,𝒩}_{mix,X} − S_{mix,X}` as it follows from the definition:
/// `(ν − 𝒩)/(2ν𝒩) ‖X⊥‖² + (n − N)/(2nN) ‖X⊤‖²`.
pub fn mixed_scalar_shift(nu: usize, n: usize, big_n: f64, cal_n: f64, x_top: f64, x_perp: f64) -> f64 {
    let (nu, n) = (nu as f64, n as f64);
    (nu - cal_n) / (2.0 * nu * cal_n) * x_perp + (n - big_n) / (2.0 * n * big_n) * x_top
}

/// `R⊥_{X,x}` in the given orthonormal basis of `D⊥`, unit `x ∈ D⊤`.
pub fn weighted_jacobi_perp_in(pk: &ExtrinsicPack, x: &Vector, basis: &[Vector]) -> Mat {
    let n = pk.n() as f64;
    let gxx = pk.inner(&pk.x, x) / n;
    let shift = lie(pk, x) / (2.0 * n) + gxx * gxx;
    let k = basis.len();
    let mut m = curvature_form(pk, basis, x);
    for i in 0..k {
        m[(i, i)] += shift;
    }
    (&m + m.transpose()) * 0.5
}

pub fn weighted_jacobi_perp(pk: &ExtrinsicPack, x: &Vector) -> Result<Mat> {
    pk.require_top(x)?;
    require_unit(pk, x)?;
    Ok(weighted_jacobi_perp_in(pk, x, &pk.perp_basis()))
}

/// Dual operator `R⊤_{X,y}` on `D⊤` for unit `y ∈ D⊥`.
pub fn weighted_jacobi_top(pk: &ExtrinsicPack, y: &Vector) -> Result<Mat> {
    pk.require_perp(y)?;
    require_unit(pk, y)?;
    let nu = pk.nu() as f64;
    let gxy = pk.inner(&pk.x, y) / nu;
    let shift = lie(pk, y) / (2.0 * nu) + gxy * gxy;
    let mut m = curvature_form(pk, &pk.top_basis(), y);
    for i in 0..pk.nu() {
        m[(i, i)] += shift;
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// Extreme eigenvalues of `R⊥_{X,x}` over sampled unit `x ∈ D⊤` at the given
/// points: the `(k₁, k₂)` bracket used by the local Toponogov-type theorem.
pub fn jacobi_bracket(w: &WeightedAlmostProduct, points: &[Vec<f64>], dirs_per_point: usize) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points {
        let pk = w.pack(p)?;
        for c in sphere_directions(pk.nu(), dirs_per_point, 0x6b31) {
            let x = pk.from_top(c.as_slice());
            let (ev, _) = sym_eigen(&weighted_jacobi_perp_in(&pk, &x, &pk.perp_basis()));
            lo = lo.min(ev[0]);
            hi = hi.max(ev[ev.len() - 1]);
        }
    }
    Ok((lo, hi))
}
