//! Chart-level Riemannian calculus: metric jets, Christoffel symbols,
//! curvature, covariant and Lie derivatives, divergence.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::expr::{self, Expr};
use crate::jet::{Jet2, MAX_DIM};
use crate::linalg::{inner, spd_inverse, Mat, Vector};
use crate::Result;

/// Gram determinants below this are treated as degenerate planes.
pub const DEGENERACY_TOL: f64 = 1e-14;

/// One chart coordinate: either periodic with a period, or ranging over an
/// open interval (possibly unbounded).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Coordinate {
    Periodic { period: f64 },
    Interval { lo: f64, hi: f64 },
}

impl Coordinate {
    pub const LINE: Coordinate = Coordinate::Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn periodic(period: f64) -> Self {
        Coordinate::Periodic { period }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Coordinate::Interval { lo, hi }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Coordinate::Periodic { .. })
    }
}

/// A smooth vector field given by component expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub components: Vec<Expr>,
    pub label: String,
}

/// Value and first derivatives of a vector field: `d[(i, j)] = ∂_j X^i`.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub value: Vector,
    pub d: Mat,
}

impl VectorField {
    pub fn new(label: impl Into<String>, components: Vec<Expr>) -> Self {
        Self { components, label: label.into() }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("0", vec![Expr::Num(0.0); dim])
    }

    /// Parses one expression per component.
    pub fn parse(label: impl Into<String>, sources: &[&str], dim: usize) -> Result<Self> {
        let label = label.into();
        let mut comps = Vec::with_capacity(sources.len());
        for (i, s) in sources.iter().enumerate() {
            let e = expr::parse(s, dim)
                .map_err(|e| Error::parse(alloc::format!("{label}[{i}]"), e))?;
            comps.push(e);
        }
        Ok(Self::new(label, comps))
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Expr::is_zero)
    }

    pub fn value(&self, p: &[f64]) -> Result<Vector> {
        let mut v = Vector::zeros(self.dim());
        for (i, c) in self.components.iter().enumerate() {
            v[i] = c.eval_f64(p)?;
        }
        Ok(v)
    }

    pub fn jet(&self, p: &[f64]) -> Result<FieldJet> {
        let d = self.dim();
        let seeds = Jet2::seed(p);
        let mut value = Vector::zeros(d);
        let mut dm = Mat::zeros(d, d);
        for (i, c) in self.components.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let j = c.eval(&seeds)?;
            value[i] = j.val();
            for k in 0..d {
                dm[(i, k)] = j.d(k);
            }
        }
        Ok(FieldJet { value, d: dm })
    }
}

/// A single coordinate chart with a metric given by expressions.
#[derive(Clone, Debug)]
pub struct ChartedManifold {
    dim: usize,
    metric: Vec<Expr>,
    coords: Vec<Coordinate>,
    pub label: String,
}

impl ChartedManifold {
    /// `metric` is the full `d×d` matrix in row-major order. Only the upper
    /// triangle is evaluated; [`ChartedManifold::symmetry_residual`] checks
    /// the lower one.
    pub fn new(label: impl Into<String>, coords: Vec<Coordinate>, metric: Vec<Expr>) -> Result<Self> {
        let dim = coords.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid(alloc::format!("chart dimension {dim} not in 1..={MAX_DIM}")));
        }
        if metric.len() != dim * dim {
            return Err(Error::Dimension { expected: dim * dim, got: metric.len() });
        }
        for e in &metric {
            if let Some(m) = e.max_coord() {
                if m >= dim {
                    return Err(Error::Dimension { expected: dim, got: m + 1 });
                }
            }
        }
        for c in &coords {
            match *c {
                Coordinate::Periodic { period } if !(period > 0.0 && period.is_finite()) => {
                    return Err(Error::invalid("period must be positive and finite"))
                }
                Coordinate::Interval { lo, hi } if !(lo < hi) => {
                    return Err(Error::invalid("interval must satisfy lo < hi"))
                }
                _ => {}
            }
        }
        Ok(Self { dim, metric, coords, label: label.into() })
    }

    /// Diagonal metric from expressions for `g_00, g_11, …`.
    pub fn diagonal(label: impl Into<String>, coords: Vec<Coordinate>, diag: Vec<Expr>) -> Result<Self> {
        let d = coords.len();
        let mut m = vec![Expr::Num(0.0); d * d];
        for (i, e) in diag.into_iter().enumerate() {
            if i < d {
                m[i * d + i] = e;
            }
        }
        Self::new(label, coords, m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn metric_entry(&self, i: usize, j: usize) -> &Expr {
        &self.metric[i * self.dim + j]
    }

    pub fn metric_exprs(&self) -> &[Expr] {
        &self.metric
    }

    pub fn is_closed(&self) -> bool {
        self.coords.iter().all(Coordinate::is_periodic)
    }

    /// Validates `p` against the chart box and reduces periodic coordinates
    /// into `[0, period)`.
    pub fn reduce(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: p.len() });
        }
        let mut q = p.to_vec();
        for (i, c) in self.coords.iter().enumerate() {
            let x = q[i];
            if !x.is_finite() {
                return Err(Error::NonFinite("point coordinate"));
            }
            match *c {
                Coordinate::Periodic { period } => {
                    let r = x - period * libm::floor(x / period);
                    q[i] = if r >= period { 0.0 } else { r };
                }
                Coordinate::Interval { lo, hi } => {
                    if !(x > lo && x < hi) {
                        return Err(Error::OutsideDomain { index: i, value: x, lo, hi });
                    }
                }
            }
        }
        Ok(q)
    }

    /// Distance from `p` to the nearest finite interval endpoint.
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        let mut d = f64::INFINITY;
        for (i, c) in self.coords.iter().enumerate() {
            if let Coordinate::Interval { lo, hi } = *c {
                d = d.min(p[i] - lo).min(hi - p[i]);
            }
        }
        d
    }

    /// `g`, `∂g`, `∂²g` at `p`.
    pub fn metric_at(&self, p: &[f64]) -> Result<MetricJet> {
        let q = self.reduce(p)?;
        let d = self.dim;
        let seeds = Jet2::seed(&q);
        let mut g = Mat::zeros(d, d);
        let mut dg = vec![0.0; d * d * d];
        let mut ddg = vec![0.0; d * d * d * d];
        for i in 0..d {
            for j in i..d {
                let e = &self.metric[i * d + j];
                if e.is_zero() {
                    continue;
                }
                let jt = e.eval(&seeds)?;
                g[(i, j)] = jt.val();
                g[(j, i)] = jt.val();
                for k in 0..d {
                    let v = jt.d(k);
                    dg[(k * d + i) * d + j] = v;
                    dg[(k * d + j) * d + i] = v;
                    for l in 0..d {
                        let w = jt.dd(k, l);
                        ddg[((k * d + l) * d + i) * d + j] = w;
                        ddg[((k * d + l) * d + j) * d + i] = w;
                    }
                }
            }
        }
        let ginv = spd_inverse(&g).ok_or(Error::NotPositiveDefinite)?;
        Ok(MetricJet { dim: d, point: q, g, ginv, dg, ddg })
    }

    /// `max |g_ij(p) − g_ji(p)|` from evaluating both triangles.
    pub fn symmetry_residual(&self, p: &[f64]) -> Result<f64> {
        let q = self.reduce(p)?;
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                let a = self.metric[i * d + j].eval_f64(&q)?;
                let b = self.metric[j * d + i].eval_f64(&q)?;
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// Full pointwise geometry: Christoffel symbols, their derivatives and the
    /// curvature tensor.
    pub fn geometry(&self, p: &[f64]) -> Result<Geometry> {
        Ok(Geometry::from_metric(self.metric_at(p)?))
    }
}

/// Metric 2-jet at a point. `dg[k][i][j] = ∂_k g_ij`,
/// `ddg[k][l][i][j] = ∂_k ∂_l g_ij`.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub dim: usize,
    pub point: Vec<f64>,
    pub g: Mat,
    pub ginv: Mat,
    dg: Vec<f64>,
    ddg: Vec<f64>,
}

impl MetricJet {
    #[inline]
    pub fn dg(&self, k: usize, i: usize, j: usize) -> f64 {
        let d = self.dim;
        self.dg[(k * d + i) * d + j]
    }

    #[inline]
    pub fn ddg(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        let d = self.dim;
        self.ddg[((k * d + l) * d + i) * d + j]
    }
}

/// Pointwise Levi-Civita data.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub metric: MetricJet,
    /// `gamma[(k*d + i)*d + j] = Γ^k_ij`
    gamma: Vec<f64>,
    /// `dgamma[((m*d + k)*d + i)*d + j] = ∂_m Γ^k_ij`
    dgamma: Vec<f64>,
    /// `riem[((i*d + j)*d + k)*d + l] = R_ijkl = g(R(∂_i,∂_j)∂_k, ∂_l)`
    riem: Vec<f64>,
}

impl Geometry {
    pub fn from_metric(metric: MetricJet) -> Self {
        let d = metric.dim;
        let gi = &metric.ginv;
        // first-kind symbols Γ_ijl = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
        let mut first = vec![0.0; d * d * d];
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    first[(i * d + j) * d + l] =
                        0.5 * (metric.dg(i, j, l) + metric.dg(j, i, l) - metric.dg(l, i, j));
                }
            }
        }
        let mut gamma = vec![0.0; d * d * d];
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += gi[(k, l)] * first[(i * d + j) * d + l];
                    }
                    gamma[(k * d + i) * d + j] = s;
                    gamma[(k * d + j) * d + i] = s;
                }
            }
        }
        // ∂_m Γ^k_ij = −g^{ka} ∂_m g_ab Γ^b_ij + ½ g^{kl} ∂_m(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
        let mut dgamma = vec![0.0; d * d * d * d];
        for m in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut a_l = [0.0; MAX_DIM];
                    for (l, slot) in a_l.iter_mut().enumerate().take(d) {
                        *slot = 0.5
                            * (metric.ddg(m, i, j, l) + metric.ddg(m, j, i, l) - metric.ddg(m, l, i, j));
                    }
                    let mut c_a = [0.0; MAX_DIM];
                    for (a, slot) in c_a.iter_mut().enumerate().take(d) {
                        let mut s = 0.0;
                        for b in 0..d {
                            s += metric.dg(m, a, b) * gamma[(b * d + i) * d + j];
                        }
                        *slot = s;
                    }
                    for k in 0..d {
                        let mut s = 0.0;
                        for a in 0..d {
                            s += gi[(k, a)] * (a_l[a] - c_a[a]);
                        }
                        dgamma[((m * d + k) * d + i) * d + j] = s;
                        dgamma[((m * d + k) * d + j) * d + i] = s;
                    }
                }
            }
        }
        // R^l_ijk = ∂_iΓ^l_jk − ∂_jΓ^l_ik + Γ^m_jk Γ^l_im − Γ^m_ik Γ^l_jm, then lower l
        let gam = |k: usize, i: usize, j: usize| gamma[(k * d + i) * d + j];
        let dgam = |m: usize, k: usize, i: usize, j: usize| dgamma[((m * d + k) * d + i) * d + j];
        let mut up = vec![0.0; d * d * d * d];
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                for k in 0..d {
                    for l in 0..d {
                        let mut s = dgam(i, l, j, k) - dgam(j, l, i, k);
                        for m in 0..d {
                            s += gam(m, j, k) * gam(l, i, m) - gam(m, i, k) * gam(l, j, m);
                        }
                        up[((i * d + j) * d + k) * d + l] = s;
                    }
                }
            }
        }
        let mut riem = vec![0.0; d * d * d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut s = 0.0;
                        for m in 0..d {
                            s += metric.g[(l, m)] * up[((i * d + j) * d + k) * d + m];
                        }
                        riem[((i * d + j) * d + k) * d + l] = s;
                    }
                }
            }
        }
        Self { metric, gamma, dgamma, riem }
    }

    pub fn dim(&self) -> usize {
        self.metric.dim
    }

    pub fn point(&self) -> &[f64] {
        &self.metric.point
    }

    pub fn g(&self) -> &Mat {
        &self.metric.g
    }

    pub fn ginv(&self) -> &Mat {
        &self.metric.ginv
    }

    #[inline]
    pub fn christoffel(&self, k: usize, i: usize, j: usize) -> f64 {
        let d = self.dim();
        self.gamma[(k * d + i) * d + j]
    }

    #[inline]
    pub fn christoffel_derivative(&self, m: usize, k: usize, i: usize, j: usize) -> f64 {
        let d = self.dim();
        self.dgamma[((m * d + k) * d + i) * d + j]
    }

    /// `R_ijkl = g(R(∂_i, ∂_j)∂_k, ∂_l)`.
    #[inline]
    pub fn riemann(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim();
        self.riem[((i * d + j) * d + k) * d + l]
    }

    pub fn inner(&self, u: &Vector, v: &Vector) -> f64 {
        inner(self.g(), u, v)
    }

    pub fn norm(&self, u: &Vector) -> f64 {
        libm::sqrt(self.inner(u, u).max(0.0))
    }

    /// Index-lowered vector `g u`.
    pub fn lower(&self, u: &Vector) -> Vector {
        self.g() * u
    }

    /// `Γ(u, v)^k = Γ^k_ij u^i v^j`.
    pub fn gamma_uv(&self, u: &Vector, v: &Vector) -> Vector {
        let d = self.dim();
        let mut out = Vector::zeros(d);
        for k in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                if u[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    s += self.christoffel(k, i, j) * u[i] * v[j];
                }
            }
            out[k] = s;
        }
        out
    }

    /// `R(u, v, w, z) = g(R(u,v)w, z)`.
    pub fn riemann_uvwz(&self, u: &Vector, v: &Vector, w: &Vector, z: &Vector) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                if v[j] == 0.0 {
                    continue;
                }
                let uv = u[i] * v[j];
                for k in 0..d {
                    if w[k] == 0.0 {
                        continue;
                    }
                    for l in 0..d {
                        s += self.riemann(i, j, k, l) * uv * w[k] * z[l];
                    }
                }
            }
        }
        s
    }

    /// The vector `R(u, v)w`.
    pub fn curvature_operator(&self, u: &Vector, v: &Vector, w: &Vector) -> Vector {
        let d = self.dim();
        let mut low = Vector::zeros(d);
        for l in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let uv = u[i] * v[j];
                    if uv == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        s += self.riemann(i, j, k, l) * uv * w[k];
                    }
                }
            }
            low[l] = s;
        }
        self.ginv() * low
    }

    /// Sectional curvature of the plane spanned by `u, v`.
    pub fn sectional(&self, u: &Vector, v: &Vector) -> Result<f64> {
        let gram = self.inner(u, u) * self.inner(v, v) - self.inner(u, v).powi(2);
        if gram < DEGENERACY_TOL {
            return Err(Error::DegeneratePlane(gram));
        }
        Ok(self.riemann_uvwz(u, v, v, u) / gram)
    }

    /// `Ric(u, v) = Σ_ij g^{ij} R(∂_i, u, v, ∂_j)`.
    pub fn ricci(&self, u: &Vector, v: &Vector) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let gij = self.ginv()[(i, j)];
                if gij == 0.0 {
                    continue;
                }
                let ei = Vector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 });
                let ej = Vector::from_fn(d, |r, _| if r == j { 1.0 } else { 0.0 });
                s += gij * self.riemann_uvwz(&ei, u, v, &ej);
            }
        }
        s
    }

    /// Covariant derivative matrix `(∇X)^i_j = ∂_j X^i + Γ^i_jk X^k`, so that
    /// `∇_u X = (∇X) u`.
    pub fn covariant(&self, x: &FieldJet) -> Mat {
        let d = self.dim();
        let mut m = x.d.clone();
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.christoffel(i, j, k) * x.value[k];
                }
                m[(i, j)] += s;
            }
        }
        m
    }

    /// `(𝓛_X g)_ij = X^k ∂_k g_ij + g_kj ∂_i X^k + g_ik ∂_j X^k`.
    pub fn lie_derivative_metric(&self, x: &FieldJet) -> Mat {
        let d = self.dim();
        let g = self.g();
        let mut out = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += x.value[k] * self.metric.dg(k, i, j)
                        + g[(k, j)] * x.d[(k, i)]
                        + g[(i, k)] * x.d[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// `Div X = ∂_i X^i + Γ^i_ik X^k`.
    pub fn divergence(&self, x: &FieldJet) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            s += x.d[(i, i)];
            for k in 0..d {
                s += self.christoffel(i, i, k) * x.value[k];
            }
        }
        s
    }
}
