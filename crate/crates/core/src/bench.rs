//! Numerical checks of the pointwise divergence identities and the integral
//! formulas of an almost-product structure.
//!
//! The divergence side of every identity differentiates the mean-curvature
//! fields with 4th-order central differences of the full extrinsic
//! construction; the algebraic side is assembled from curvature jets and
//! tensor norms at the point. The two paths share no code beyond the metric.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::almost_product::{ExtrinsicPack, WeightedAlmostProduct};
use crate::error::Error;
use crate::linalg::{pairwise_sum, Mat, Vector};
use crate::manifold::{ChartedManifold, Coordinate, FieldJet, VectorField};
use crate::weighted::mixed_scalar;
use crate::Result;

/// Pointwise identity tolerance.
pub const POINTWISE_TOL: f64 = 1e-6;
/// Integral formula tolerance.
pub const INTEGRAL_TOL: f64 = 1e-6;
/// Tolerance for hypotheses such as `H⊤ = 0` or umbilicity.
pub const HYPOTHESIS_TOL: f64 = 1e-8;
/// Quadrature values below this are treated as converged roundoff when
/// judging monotone decrease under grid doubling.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ResidualReport {
    pub identity: String,
    pub samples: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub worst_point: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn from_samples<'a>(
        identity: impl Into<String>,
        tolerance: f64,
        samples: impl IntoIterator<Item = (&'a [f64], f64)>,
    ) -> Self {
        let mut max_abs = 0.0f64;
        let mut worst_point = Vec::new();
        let mut abs = Vec::new();
        for (p, r) in samples {
            let a = r.abs();
            // NaN sticks as the worst value
            if a.is_nan() || a > max_abs || worst_point.is_empty() {
                if !max_abs.is_nan() {
                    max_abs = a;
                    worst_point = p.to_vec();
                }
            }
            abs.push(a);
        }
        let samples = abs.len();
        let mean_abs = if samples == 0 { 0.0 } else { pairwise_sum(&abs) / samples as f64 };
        Self { identity: identity.into(), samples, max_abs, mean_abs, worst_point, tolerance, pass: max_abs <= tolerance }
    }
}

/// Finite-difference step at `p`: `min(1e-3, boundary distance / 10)`.
pub fn fd_step(m: &ChartedManifold, p: &[f64]) -> f64 {
    (m.boundary_distance(p) / 10.0).min(1e-3)
}

/// First derivatives of vector-valued functions by 4th-order central
/// differences, packaged as field jets (`d[(i, j)] = ∂_j ξ^i`).
pub fn fd_jets<F>(m: &ChartedManifold, p: &[f64], f: F) -> Result<Vec<FieldJet>>
where
    F: Fn(&[f64]) -> Result<Vec<Vector>>,
{
    let d = m.dim();
    let h = fd_step(m, p);
    let center = f(p)?;
    let mut jets: Vec<FieldJet> =
        center.into_iter().map(|value| FieldJet { value, d: Mat::zeros(d, d) }).collect();
    let mut q = p.to_vec();
    for j in 0..d {
        let mut at = |s: f64| {
            q[j] = p[j] + s * h;
            f(&q)
        };
        let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
        q[j] = p[j];
        for (c, jet) in jets.iter_mut().enumerate() {
            let col = (&m2[c] - &p2[c] + (&p1[c] - &m1[c]) * 8.0) / (12.0 * h);
            jet.d.set_column(j, &col);
        }
    }
    Ok(jets)
}

fn trace_on(pk: &ExtrinsicPack, cov: &Mat, basis: &[Vector]) -> f64 {
    basis.iter().map(|e| pk.inner(&(cov * e), e)).sum()
}

/// `Div⊤ ξ = Σ_a g(∇_{E_a} ξ, E_a)` from the covariant derivative matrix.
pub fn div_top(pk: &ExtrinsicPack, cov: &Mat) -> f64 {
    trace_on(pk, cov, &pk.top_basis())
}

/// `Div⊥ ξ = Σ_i g(∇_{ℰ_i} ξ, ℰ_i)`.
pub fn div_perp(pk: &ExtrinsicPack, cov: &Mat) -> f64 {
    trace_on(pk, cov, &pk.perp_basis())
}

/// Residuals of the pointwise identities at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PointResiduals {
    /// `Div(H⊤+H⊥) − (S_mix − ‖T⊤‖² − ‖T⊥‖² + ‖h⊤‖² + ‖h⊥‖² − ‖H⊤‖² − ‖H⊥‖²)`
    pub pw_if: f64,
    /// `Div⊤H⊥ + Div⊥H⊤ − (S_mix + ‖h⊥‖² + ‖h⊤‖² − ‖T⊥‖² − ‖T⊤‖²)`
    pub div_if2: f64,
    /// `Div⊤(ξ⊤) − (Div ξ⊤ + g(ξ, H⊥))`
    pub div_dd_top: f64,
    /// `Div⊥(ξ⊥) − (Div ξ⊥ + g(ξ, H⊤))`
    pub div_dd_perp: f64,
}

impl PointResiduals {
    pub const NAMES: [&'static str; 4] = ["pw_if", "div_if2", "div_dd_top", "div_dd_perp"];

    pub fn values(&self) -> [f64; 4] {
        [self.pw_if, self.div_if2, self.div_dd_top, self.div_dd_perp]
    }
}

/// All pointwise identities at `p`, with `ξ` the test field of the
/// two splitting identities for divergences.
pub fn point_residuals(w: &WeightedAlmostProduct, xi: &VectorField, p: &[f64]) -> Result<PointResiduals> {
    let pk = w.pack(p)?;
    let jets = fd_jets(&w.manifold, p, |q| {
        let pq = w.pack(q)?;
        let x = xi.value(q)?;
        Ok(alloc::vec![pq.mean_top(), pq.mean_perp(), pq.top(&x), pq.perp(&x)])
    })?;
    let cov: Vec<Mat> = jets.iter().map(|j| pk.geo.covariant(j)).collect();
    let (c_ht, c_hp, c_xt, c_xp) = (&cov[0], &cov[1], &cov[2], &cov[3]);
    let (ht, hp) = (&jets[0].value, &jets[1].value);
    let xv = xi.value(p)?;

    let nm = pk.norms();
    let s = mixed_scalar(&pk).s_mix;
    let pw_rhs = s - nm.t_top - nm.t_perp + nm.h_top + nm.h_perp - nm.mean_top - nm.mean_perp;
    let if2_rhs = s + nm.h_perp + nm.h_top - nm.t_perp - nm.t_top;
    Ok(PointResiduals {
        pw_if: c_ht.trace() + c_hp.trace() - pw_rhs,
        div_if2: div_top(&pk, c_hp) + div_perp(&pk, c_ht) - if2_rhs,
        div_dd_top: div_top(&pk, c_xt) - (c_xt.trace() + pk.inner(&xv, hp)),
        div_dd_perp: div_perp(&pk, c_xp) - (c_xp.trace() + pk.inner(&xv, ht)),
    })
}

/// Residuals `[top, perp]` of the two divergence-splitting identities.
pub fn check_div_dd(w: &WeightedAlmostProduct, xi: &VectorField, p: &[f64]) -> Result<[f64; 2]> {
    let r = point_residuals(w, xi, p)?;
    Ok([r.div_dd_top, r.div_dd_perp])
}

pub fn check_pw_identity(w: &WeightedAlmostProduct, p: &[f64]) -> Result<f64> {
    Ok(point_residuals(w, &w.x, p)?.pw_if)
}

pub fn check_div_if2(w: &WeightedAlmostProduct, p: &[f64]) -> Result<f64> {
    Ok(point_residuals(w, &w.x, p)?.div_if2)
}

/// One report per identity from per-point residuals.
pub fn reports_from(samples: &[(Vec<f64>, PointResiduals)], tolerance: f64) -> Vec<ResidualReport> {
    (0..4)
        .map(|k| {
            ResidualReport::from_samples(
                PointResiduals::NAMES[k],
                tolerance,
                samples.iter().map(|(p, r)| (p.as_slice(), r.values()[k])),
            )
        })
        .collect()
}

pub fn pointwise_reports(
    w: &WeightedAlmostProduct,
    xi: &VectorField,
    points: &[Vec<f64>],
    tolerance: f64,
) -> Result<Vec<ResidualReport>> {
    let samples = points
        .iter()
        .map(|p| Ok((p.clone(), point_residuals(w, xi, p)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(reports_from(&samples, tolerance))
}

fn periods(m: &ChartedManifold, coords: core::ops::Range<usize>) -> Result<Vec<f64>> {
    coords
        .map(|i| match m.coordinates()[i] {
            Coordinate::Periodic { period } => Ok(period),
            Coordinate::Interval { .. } => Err(Error::NotClosed(i)),
        })
        .collect()
}

fn tensor_grid(periods: &[f64], nodes: usize, fixed: &[f64]) -> Vec<Vec<f64>> {
    let k = periods.len();
    let total = nodes.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = Vec::with_capacity(k + fixed.len());
            for per in periods {
                p.push(per * (idx % nodes) as f64 / nodes as f64);
                idx /= nodes;
            }
            p.extend_from_slice(fixed);
            p
        })
        .collect()
}

/// Nodes of the tensor-product periodic trapezoid rule on a closed chart.
pub fn grid_points(m: &ChartedManifold, nodes: usize) -> Result<Vec<Vec<f64>>> {
    if nodes == 0 {
        return Err(Error::invalid("grid needs at least one node per circle"));
    }
    Ok(tensor_grid(&periods(m, 0..m.dim())?, nodes, &[]))
}

/// Coordinate volume of one grid cell.
pub fn cell_volume(m: &ChartedManifold, nodes: usize) -> Result<f64> {
    Ok(periods(m, 0..m.dim())?.iter().map(|p| p / nodes as f64).product())
}

/// Riemannian volume density `√det g`.
pub fn density(m: &ChartedManifold, p: &[f64]) -> Result<f64> {
    Ok(libm::sqrt(m.metric_at(p)?.g.determinant()))
}

/// Periodic trapezoid rule for `∫ f dvol_g`.
pub fn quadrature_integral<F>(m: &ChartedManifold, f: F, nodes: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let cell = cell_volume(m, nodes)?;
    let vals = grid_points(m, nodes)?
        .iter()
        .map(|p| Ok(f(p)? * density(m, p)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&vals) * cell)
}

/// `∫ Div ξ dvol_g`, which vanishes on a closed manifold.
pub fn divergence_integral(m: &ChartedManifold, xi: &VectorField, nodes: usize) -> Result<f64> {
    quadrature_integral(m, |p| Ok(m.geometry(p)?.divergence(&xi.jet(p)?)), nodes)
}

/// Integrand of the first integral formula:
/// `S^{N,𝒩} − ‖T⊤‖² − ‖T⊥‖² + ‖h⊤‖² + ‖h⊥‖² − ‖H⊤‖² − ‖H⊥‖² − ‖X⊤‖²/2N − ‖X⊥‖²/2𝒩`.
pub fn integrand_1(w: &WeightedAlmostProduct, p: &[f64]) -> Result<f64> {
    let pk = w.pack(p)?;
    let nm = pk.norms();
    Ok(mixed_scalar(&pk).weighted - nm.t_top - nm.t_perp + nm.h_top + nm.h_perp
        - nm.mean_top
        - nm.mean_perp
        - nm.x_top / (2.0 * pk.big_n)
        - nm.x_perp / (2.0 * pk.cal_n))
}

pub fn integral_formula_1(w: &WeightedAlmostProduct, nodes: usize) -> Result<f64> {
    quadrature_integral(&w.manifold, |p| integrand_1(w, p), nodes)
}

/// Leaf of `D⊤` through the point with `D⊥` coordinates `base`, assuming
/// `D⊤ = span(∂_0..∂_{ν−1})`.
pub fn leaf_grid(w: &WeightedAlmostProduct, base: &[f64], nodes: usize) -> Result<Vec<Vec<f64>>> {
    let nu = w.nu();
    if base.len() != w.n() {
        return Err(Error::Dimension { expected: w.n(), got: base.len() });
    }
    if nodes == 0 {
        return Err(Error::invalid("grid needs at least one node per circle"));
    }
    Ok(tensor_grid(&periods(&w.manifold, 0..nu)?, nodes, base))
}

/// Integrand of the leafwise formula with the leaf volume density:
/// `S^{N,𝒩} − ‖T⊥‖² + ‖h⊤‖² + ‖h⊥‖² + ½g(X, H⊥) − ‖X‖²/2N`.
/// Fails when `D⊤` is not the coordinate distribution, `H⊤ ≠ 0` or `X ∉ D⊤`.
pub fn leaf_integrand(w: &WeightedAlmostProduct, p: &[f64]) -> Result<(f64, f64)> {
    let pk = w.pack(p)?;
    let nu = w.nu();
    for a in 0..nu {
        let e = Vector::from_fn(w.dim(), |r, _| if r == a { 1.0 } else { 0.0 });
        let r = pk.top_residual(&e);
        if r > HYPOTHESIS_TOL {
            return Err(Error::Hypothesis(alloc::format!("D⊤ is not spanned by the leaf coordinates (residual {r:e})")));
        }
    }
    let ht = pk.mean_top();
    let ht_norm = libm::sqrt(pk.inner(&ht, &ht));
    if ht_norm > HYPOTHESIS_TOL {
        return Err(Error::Hypothesis(alloc::format!("‖H⊤‖ = {ht_norm:e} on the leaf")));
    }
    let xp = pk.perp(&pk.x);
    let xp_norm = libm::sqrt(pk.inner(&xp, &xp));
    if xp_norm > HYPOTHESIS_TOL {
        return Err(Error::Hypothesis(alloc::format!("X is not tangent to the leaf (‖X⊥‖ = {xp_norm:e})")));
    }
    let nm = pk.norms();
    let hp = pk.mean_perp();
    let f = mixed_scalar(&pk).weighted - nm.t_perp + nm.h_top + nm.h_perp + 0.5 * pk.inner(&pk.x, &hp)
        - pk.inner(&pk.x, &pk.x) / (2.0 * pk.big_n);
    let g = pk.g();
    let leaf_density = libm::sqrt(g.view((0, 0), (nu, nu)).determinant());
    Ok((f, leaf_density))
}

pub fn integral_formula_2_leafwise(w: &WeightedAlmostProduct, base: &[f64], nodes: usize) -> Result<f64> {
    let cell: f64 = periods(&w.manifold, 0..w.nu())?.iter().map(|p| p / nodes as f64).product();
    let vals = leaf_grid(w, base, nodes)?
        .iter()
        .map(|p| leaf_integrand(w, p).map(|(f, dv)| f * dv))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&vals) * cell)
}

/// Quadrature values along a sequence of doubled grids.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GridStudy {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    /// Each refinement reduces `|value|`, or both values are roundoff.
    pub decreasing: bool,
    pub finest: f64,
    pub pass: bool,
}

impl GridStudy {
    pub fn new(nodes: Vec<usize>, values: Vec<f64>, tolerance: f64) -> Self {
        let decreasing = values
            .windows(2)
            .all(|v| v[1].abs() <= v[0].abs() || v[1].abs().max(v[0].abs()) <= ROUNDOFF_FLOOR);
        let finest = values.last().copied().unwrap_or(f64::NAN);
        let pass = decreasing && finest.abs() <= tolerance;
        Self { nodes, values, decreasing, finest, pass }
    }
}

pub fn grid_study<F>(nodes: &[usize], tolerance: f64, f: F) -> Result<GridStudy>
where
    F: Fn(usize) -> Result<f64>,
{
    let values = nodes.iter().map(|&k| f(k)).collect::<Result<Vec<_>>>()?;
    Ok(GridStudy::new(nodes.to_vec(), values, tolerance))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Splitting {
    /// Both distributions integrable, `H⊤ = 0`, `X ∈ D⊤`, `g(X, H⊥) = 0`.
    Harmonic,
    /// Both distributions totally umbilical.
    Umbilic,
}

/// Signed terms of a splitting display at a point.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SplittingTerms {
    pub variant: Splitting,
    /// Divergence side, by finite differences.
    pub divergence: f64,
    pub terms: Vec<(String, f64)>,
    /// `divergence − Σ terms`.
    pub residual: f64,
}

impl SplittingTerms {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|t| t.1)
    }
}

fn require_small(what: &str, v: f64) -> Result<()> {
    if v > HYPOTHESIS_TOL {
        return Err(Error::Hypothesis(alloc::format!("{what} = {v:e}")));
    }
    Ok(())
}

/// Norm of the traceless part of `h⊤` (or `h⊥`).
fn umbilic_defect(pk: &ExtrinsicPack, top: bool) -> f64 {
    let (basis, mean, k) = if top {
        (pk.top_basis(), pk.mean_top(), pk.nu())
    } else {
        (pk.perp_basis(), pk.mean_perp(), pk.n())
    };
    let mut s = 0.0;
    for (a, u) in basis.iter().enumerate() {
        for (b, v) in basis.iter().enumerate() {
            let mut h = if top { pk.h_top(u, v) } else { pk.h_perp(u, v) };
            if a == b {
                h -= &mean / k as f64;
            }
            s += pk.inner(&h, &h);
        }
    }
    libm::sqrt(s)
}

pub fn splitting_integrands(w: &WeightedAlmostProduct, p: &[f64], variant: Splitting) -> Result<SplittingTerms> {
    let pk = w.pack(p)?;
    let nm = pk.norms();
    let sw = mixed_scalar(&pk).weighted;
    let jets = fd_jets(&w.manifold, p, |q| {
        let pq = w.pack(q)?;
        Ok(alloc::vec![pq.mean_top(), pq.mean_perp()])
    })?;
    let c_ht = pk.geo.covariant(&jets[0]);
    let c_hp = pk.geo.covariant(&jets[1]);
    let (nu, n) = (pk.nu() as f64, pk.n() as f64);
    let (divergence, terms): (f64, Vec<(&str, f64)>) = match variant {
        Splitting::Harmonic => {
            require_small("‖T⊤‖", libm::sqrt(nm.t_top))?;
            require_small("‖T⊥‖", libm::sqrt(nm.t_perp))?;
            require_small("‖H⊤‖", libm::sqrt(nm.mean_top))?;
            require_small("‖X⊥‖", libm::sqrt(nm.x_perp))?;
            require_small("|g(X, H⊥)|", pk.inner(&pk.x, &jets[1].value).abs())?;
            let cov = &c_hp + &pk.cov_x * 0.5;
            (
                div_top(&pk, &cov),
                alloc::vec![
                    ("S_weighted", sw),
                    ("h_perp", nm.h_perp),
                    ("h_top", nm.h_top),
                    ("x", -(nm.x_top + nm.x_perp) / (2.0 * pk.big_n)),
                ],
            )
        }
        Splitting::Umbilic => {
            require_small("umbilic defect of D⊤", umbilic_defect(&pk, true))?;
            require_small("umbilic defect of D⊥", umbilic_defect(&pk, false))?;
            (
                c_ht.trace() + c_hp.trace() + 0.5 * pk.div_x,
                alloc::vec![
                    ("S_weighted", sw),
                    ("t_top", -nm.t_top),
                    ("t_perp", -nm.t_perp),
                    ("mean_perp", -(n - 1.0) / n * nm.mean_perp),
                    ("mean_top", -(nu - 1.0) / nu * nm.mean_top),
                    ("x_top", -nm.x_top / (2.0 * pk.big_n)),
                    ("x_perp", -nm.x_perp / (2.0 * pk.cal_n)),
                ],
            )
        }
    };
    let sum: f64 = terms.iter().map(|t| t.1).sum();
    Ok(SplittingTerms {
        variant,
        divergence,
        terms: terms.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        residual: divergence - sum,
    })
}
