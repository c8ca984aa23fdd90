//! Extrinsic geometry of an orthogonal pair of distributions `(D⊤, D⊥)`.
//!
//! `D⊤` is given by spanning vector fields `S_1..S_ν`; `D⊥` is its
//! orthogonal complement. All extrinsic tensors are computed from the
//! spanning fields and their covariant derivatives. Derivatives of the
//! expansion coefficients of an extension always land back in the
//! distribution being differentiated and drop out under projection, so no
//! derivative of the adapted frame is needed:
//!
//! ```text
//! h⊤(S_a,S_b) = ½ P⊥(∇_a S_b + ∇_b S_a)      T⊤(S_a,S_b) = ½ P⊥(∇_a S_b − ∇_b S_a)
//! g(h⊥(y,z),S_a) = −½(g(z,∇_y S_a) + g(y,∇_z S_a))
//! g(T⊥(y,z),S_a) = −½(g(z,∇_y S_a) − g(y,∇_z S_a))
//! B_x y = (∇_y x)⊥                            (co-nullity, x ∈ D⊤, y ∈ D⊥)
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::expr::{BinOp, Expr};
use crate::linalg::{condition_number, gram_schmidt_pivoted, inner, spd_inverse, Mat, Vector};
use crate::manifold::{ChartedManifold, Geometry, VectorField};
use crate::Result;

/// Condition number of the spanning Gram matrix above which the
/// distribution is reported as rank deficient.
pub const RANK_CONDITION_MAX: f64 = 1e8;
/// Residual of `‖h⊤‖` below which the `D⊤` foliation counts as totally
/// geodesic at a point.
pub const TOTALLY_GEODESIC_TOL: f64 = 1e-8;
/// Allowed residual for "vector lies in the distribution".
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// `D⊤` given by spanning fields; `D⊥` is the orthogonal complement.
#[derive(Clone, Debug)]
pub struct Distribution {
    pub spanning: Vec<VectorField>,
}

impl Distribution {
    pub fn new(spanning: Vec<VectorField>) -> Self {
        Self { spanning }
    }

    /// Spanned by the coordinate fields `∂_i` for `i` in `indices`.
    pub fn coordinate(dim: usize, indices: &[usize]) -> Self {
        let spanning = indices
            .iter()
            .map(|&i| {
                let comps = (0..dim).map(|k| Expr::Num(if k == i { 1.0 } else { 0.0 })).collect();
                VectorField::new(alloc::format!("d{i}"), comps)
            })
            .collect();
        Self { spanning }
    }

    pub fn rank(&self) -> usize {
        self.spanning.len()
    }

    /// New spanning fields `S'_a = Σ_b c[a][b] S_b` with coefficient
    /// expressions `c`. The span is unchanged wherever `c` is invertible.
    pub fn respan(&self, c: &[Vec<Expr>]) -> Self {
        let nu = self.rank();
        let dim = self.spanning.first().map_or(0, VectorField::dim);
        let spanning = (0..nu)
            .map(|a| {
                let comps = (0..dim)
                    .map(|i| {
                        let mut acc: Option<Expr> = None;
                        for b in 0..nu {
                            if c[a][b].is_zero() || self.spanning[b].components[i].is_zero() {
                                continue;
                            }
                            let term = Expr::Bin(
                                BinOp::Mul,
                                alloc::boxed::Box::new(c[a][b].clone()),
                                alloc::boxed::Box::new(self.spanning[b].components[i].clone()),
                            );
                            acc = Some(match acc {
                                None => term,
                                Some(s) => Expr::Bin(
                                    BinOp::Add,
                                    alloc::boxed::Box::new(s),
                                    alloc::boxed::Box::new(term),
                                ),
                            });
                        }
                        acc.unwrap_or(Expr::Num(0.0))
                    })
                    .collect();
                VectorField::new(alloc::format!("S'{a}"), comps)
            })
            .collect();
        Self { spanning }
    }
}

/// Manifold with a distribution pair, a weight field `X` and synthetic
/// dimensions `N` (for `D⊥`) and `𝒩` (for `D⊤`).
#[derive(Clone, Debug)]
pub struct WeightedAlmostProduct {
    pub manifold: ChartedManifold,
    pub dist: Distribution,
    pub x: VectorField,
    /// Synthetic dimension of `D⊥`.
    pub big_n: f64,
    /// Synthetic dimension of `D⊤`.
    pub cal_n: f64,
    pub label: String,
}

impl WeightedAlmostProduct {
    pub fn new(
        label: impl Into<String>,
        manifold: ChartedManifold,
        dist: Distribution,
        x: VectorField,
        big_n: f64,
        cal_n: f64,
    ) -> Result<Self> {
        let d = manifold.dim();
        let nu = dist.rank();
        if nu == 0 || nu >= d {
            return Err(Error::invalid(alloc::format!("rank of D⊤ must be in 1..{d}, got {nu}")));
        }
        for f in dist.spanning.iter().chain(core::iter::once(&x)) {
            if f.dim() != d {
                return Err(Error::Dimension { expected: d, got: f.dim() });
            }
            if let Some(m) = f.components.iter().filter_map(Expr::max_coord).max() {
                if m >= d {
                    return Err(Error::Dimension { expected: d, got: m + 1 });
                }
            }
        }
        for (name, v) in [("N", big_n), ("𝒩", cal_n)] {
            if v == 0.0 || !v.is_finite() {
                return Err(Error::invalid(alloc::format!("synthetic dimension {name} must be finite and nonzero")));
            }
        }
        Ok(Self { manifold, dist, x, big_n, cal_n, label: label.into() })
    }

    /// Unweighted structure: `X = 0`, `N = n`, `𝒩 = ν`.
    pub fn unweighted(label: impl Into<String>, manifold: ChartedManifold, dist: Distribution) -> Result<Self> {
        let d = manifold.dim();
        let nu = dist.rank() as f64;
        Self::new(label, manifold, dist, VectorField::zero(d), d as f64 - nu, nu)
    }

    pub fn with_weight(&self, x: VectorField, big_n: f64, cal_n: f64) -> Result<Self> {
        Self::new(self.label.clone(), self.manifold.clone(), self.dist.clone(), x, big_n, cal_n)
    }

    pub fn with_synthetic(&self, big_n: f64, cal_n: f64) -> Result<Self> {
        self.with_weight(self.x.clone(), big_n, cal_n)
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn nu(&self) -> usize {
        self.dist.rank()
    }

    pub fn n(&self) -> usize {
        self.dim() - self.nu()
    }

    /// Everything pointwise: geometry, adapted frame, extrinsic data, weight.
    pub fn pack(&self, p: &[f64]) -> Result<ExtrinsicPack> {
        let geo = self.manifold.geometry(p)?;
        let q = geo.point().to_vec();
        let mut span = Vec::with_capacity(self.nu());
        let mut cov_span = Vec::with_capacity(self.nu());
        for s in &self.dist.spanning {
            let j = s.jet(&q)?;
            cov_span.push(geo.covariant(&j));
            span.push(j.value);
        }
        let xj = self.x.jet(&q)?;
        let cov_x = geo.covariant(&xj);
        let lie_x = geo.lie_derivative_metric(&xj);
        let div_x = geo.divergence(&xj);
        ExtrinsicPack::build(geo, span, cov_span, xj.value, cov_x, lie_x, div_x, self.big_n, self.cal_n)
    }

    /// The adapted orthonormal frame at `p` (first `ν` columns span `D⊤`).
    pub fn adapted_frame(&self, p: &[f64]) -> Result<Mat> {
        Ok(self.pack(p)?.frame.clone())
    }
}

/// Pointwise extrinsic data of a weighted almost-product structure.
#[derive(Clone, Debug)]
pub struct ExtrinsicPack {
    pub geo: Geometry,
    nu: usize,
    n: usize,
    span: Vec<Vector>,
    cov_span: Vec<Mat>,
    /// `nabla[a][b] = ∇_{S_a} S_b`
    nabla: Vec<Vec<Vector>>,
    gram_inv: Mat,
    /// Condition number of the spanning Gram matrix.
    pub condition: f64,
    pub p_top: Mat,
    pub p_perp: Mat,
    /// Adapted orthonormal frame; columns `0..ν` span `D⊤`, the rest `D⊥`.
    pub frame: Mat,
    /// Weight field value, `∇X`, `𝓛_X g` and `Div X`.
    pub x: Vector,
    pub cov_x: Mat,
    pub lie_x: Mat,
    pub div_x: f64,
    pub big_n: f64,
    pub cal_n: f64,
}

/// Squared norms of the extrinsic tensors, summed over ordered frame pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Norms {
    pub h_top: f64,
    pub h_perp: f64,
    pub t_top: f64,
    pub t_perp: f64,
    pub mean_top: f64,
    pub mean_perp: f64,
    pub x_top: f64,
    pub x_perp: f64,
}

/// Co-nullity operator `B_x` on `D⊥` and its weighted shift, as matrices in
/// an orthonormal basis of `D⊥`.
#[derive(Clone, Debug)]
pub struct CoNullity {
    pub b: Mat,
    pub weighted: Mat,
    /// `‖h⊤‖` at the point; the Riccati equation assumes it vanishes.
    pub h_top_norm: f64,
    pub not_totally_geodesic: bool,
}

impl ExtrinsicPack {
    #[allow(clippy::too_many_arguments)]
    fn build(
        geo: Geometry,
        span: Vec<Vector>,
        cov_span: Vec<Mat>,
        x: Vector,
        cov_x: Mat,
        lie_x: Mat,
        div_x: f64,
        big_n: f64,
        cal_n: f64,
    ) -> Result<Self> {
        let d = geo.dim();
        let nu = span.len();
        let n = d - nu;
        let g = geo.g().clone();
        let gram = Mat::from_fn(nu, nu, |a, b| inner(&g, &span[a], &span[b]));
        let condition = condition_number(&gram);
        if !(condition <= RANK_CONDITION_MAX) {
            return Err(Error::RankDeficient(condition));
        }
        let gram_inv = spd_inverse(&gram).ok_or(Error::RankDeficient(condition))?;
        let mut s = Mat::zeros(d, nu);
        for (a, v) in span.iter().enumerate() {
            s.set_column(a, v);
        }
        // P⊤ = S G⁻¹ Sᵀ g
        let p_top = &s * &gram_inv * s.transpose() * &g;
        let p_perp = Mat::identity(d, d) - &p_top;

        let (top, _) = gram_schmidt_pivoted(&g, &span, nu, 1e-10);
        let coords: Vec<Vector> =
            (0..d).map(|k| &p_perp * Vector::from_fn(d, |r, _| if r == k { 1.0 } else { 0.0 })).collect();
        let (perp, _) = gram_schmidt_pivoted(&g, &coords, n, 1e-10);
        if top.len() != nu || perp.len() != n {
            return Err(Error::RankDeficient(condition));
        }
        let mut frame = Mat::zeros(d, d);
        for (c, v) in top.iter().chain(perp.iter()).enumerate() {
            frame.set_column(c, v);
        }
        let nabla = (0..nu)
            .map(|a| (0..nu).map(|b| &cov_span[b] * &span[a]).collect())
            .collect();
        Ok(Self {
            geo,
            nu,
            n,
            span,
            cov_span,
            nabla,
            gram_inv,
            condition,
            p_top,
            p_perp,
            frame,
            x,
            cov_x,
            lie_x,
            div_x,
            big_n,
            cal_n,
        })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.nu + self.n
    }

    pub fn g(&self) -> &Mat {
        self.geo.g()
    }

    pub fn inner(&self, u: &Vector, v: &Vector) -> f64 {
        self.geo.inner(u, v)
    }

    /// Frame vector `E_a` of `D⊤`.
    pub fn e_top(&self, a: usize) -> Vector {
        self.frame.column(a).into_owned()
    }

    /// Frame vector `ℰ_i` of `D⊥`.
    pub fn e_perp(&self, i: usize) -> Vector {
        self.frame.column(self.nu + i).into_owned()
    }

    pub fn top_basis(&self) -> Vec<Vector> {
        (0..self.nu).map(|a| self.e_top(a)).collect()
    }

    pub fn perp_basis(&self) -> Vec<Vector> {
        (0..self.n).map(|i| self.e_perp(i)).collect()
    }

    /// Vector with components `c` in the `D⊤` frame.
    pub fn from_top(&self, c: &[f64]) -> Vector {
        let mut v = Vector::zeros(self.dim());
        for (a, &ca) in c.iter().enumerate() {
            v += self.e_top(a) * ca;
        }
        v
    }

    /// Vector with components `c` in the `D⊥` frame.
    pub fn from_perp(&self, c: &[f64]) -> Vector {
        let mut v = Vector::zeros(self.dim());
        for (i, &ci) in c.iter().enumerate() {
            v += self.e_perp(i) * ci;
        }
        v
    }

    pub fn top(&self, u: &Vector) -> Vector {
        &self.p_top * u
    }

    pub fn perp(&self, u: &Vector) -> Vector {
        &self.p_perp * u
    }

    /// Residual `|P⊥u|` relative to `max(1, |u|)`.
    pub fn top_residual(&self, u: &Vector) -> f64 {
        self.geo.norm(&self.perp(u)) / self.geo.norm(u).max(1.0)
    }

    pub fn perp_residual(&self, u: &Vector) -> f64 {
        self.geo.norm(&self.top(u)) / self.geo.norm(u).max(1.0)
    }

    pub fn require_top(&self, u: &Vector) -> Result<()> {
        let r = self.top_residual(u);
        if r > MEMBERSHIP_TOL {
            return Err(Error::WrongDistribution { which: "D⊤", residual: r });
        }
        Ok(())
    }

    pub fn require_perp(&self, u: &Vector) -> Result<()> {
        let r = self.perp_residual(u);
        if r > MEMBERSHIP_TOL {
            return Err(Error::WrongDistribution { which: "D⊥", residual: r });
        }
        Ok(())
    }

    /// Expansion `u⊤ = Σ α_a S_a`.
    fn coefficients(&self, u: &Vector) -> Vector {
        let d = self.dim();
        let gu = self.g() * u;
        let mut st_gu = Vector::zeros(self.nu);
        for a in 0..self.nu {
            let mut s = 0.0;
            for i in 0..d {
                s += self.span[a][i] * gu[i];
            }
            st_gu[a] = s;
        }
        &self.gram_inv * st_gu
    }

    fn from_coefficients(&self, c: &Vector) -> Vector {
        let mut v = Vector::zeros(self.dim());
        for a in 0..self.nu {
            v += &self.span[a] * c[a];
        }
        v
    }

    fn top_pair(&self, u: &Vector, v: &Vector, sign: f64) -> Vector {
        let al = self.coefficients(u);
        let be = self.coefficients(v);
        let mut w = Vector::zeros(self.dim());
        for a in 0..self.nu {
            for b in 0..self.nu {
                let c = al[a] * be[b];
                if c != 0.0 {
                    w += (&self.nabla[a][b] + &self.nabla[b][a] * sign) * (0.5 * c);
                }
            }
        }
        self.perp(&w)
    }

    /// `h⊤(u, v)`, evaluated on the `D⊤` components of `u, v`.
    pub fn h_top(&self, u: &Vector, v: &Vector) -> Vector {
        self.top_pair(u, v, 1.0)
    }

    /// `T⊤(u, v) = ½[u, v]⊥`.
    pub fn t_top(&self, u: &Vector, v: &Vector) -> Vector {
        self.top_pair(u, v, -1.0)
    }

    fn perp_pair(&self, y: &Vector, z: &Vector, sign: f64) -> Vector {
        let y = self.perp(y);
        let z = self.perp(z);
        let c = Vector::from_fn(self.nu, |a, _| {
            let dy = &self.cov_span[a] * &y;
            let dz = &self.cov_span[a] * &z;
            -0.5 * (self.inner(&z, &dy) + sign * self.inner(&y, &dz))
        });
        self.from_coefficients(&(&self.gram_inv * c))
    }

    /// `h⊥(y, z)`, evaluated on the `D⊥` components of `y, z`.
    pub fn h_perp(&self, y: &Vector, z: &Vector) -> Vector {
        self.perp_pair(y, z, 1.0)
    }

    /// `T⊥(y, z) = ½[y, z]⊤`.
    pub fn t_perp(&self, y: &Vector, z: &Vector) -> Vector {
        self.perp_pair(y, z, -1.0)
    }

    /// `H⊤ = Σ_a h⊤(E_a, E_a)`.
    pub fn mean_top(&self) -> Vector {
        let mut h = Vector::zeros(self.dim());
        for a in 0..self.nu {
            let e = self.e_top(a);
            h += self.h_top(&e, &e);
        }
        h
    }

    /// `H⊥ = Σ_i h⊥(ℰ_i, ℰ_i)`.
    pub fn mean_perp(&self) -> Vector {
        let mut h = Vector::zeros(self.dim());
        for i in 0..self.n {
            let e = self.e_perp(i);
            h += self.h_perp(&e, &e);
        }
        h
    }

    pub fn norms(&self) -> Norms {
        let top = self.top_basis();
        let perp = self.perp_basis();
        let mut out = Norms::default();
        for a in &top {
            for b in &top {
                let h = self.h_top(a, b);
                let t = self.t_top(a, b);
                out.h_top += self.inner(&h, &h);
                out.t_top += self.inner(&t, &t);
            }
        }
        for y in &perp {
            for z in &perp {
                let h = self.h_perp(y, z);
                let t = self.t_perp(y, z);
                out.h_perp += self.inner(&h, &h);
                out.t_perp += self.inner(&t, &t);
            }
        }
        let ht = self.mean_top();
        let hp = self.mean_perp();
        out.mean_top = self.inner(&ht, &ht);
        out.mean_perp = self.inner(&hp, &hp);
        let xt = self.top(&self.x);
        let xp = self.perp(&self.x);
        out.x_top = self.inner(&xt, &xt);
        out.x_perp = self.inner(&xp, &xp);
        out
    }

    /// Matrix of `A⊤_Z` in the `D⊤` frame: `g(A⊤_Z u, v) = g(h⊤(u, v), Z)`.
    pub fn weingarten_top(&self, z: &Vector) -> Result<Mat> {
        self.require_perp(z)?;
        let top = self.top_basis();
        Ok(Mat::from_fn(self.nu, self.nu, |b, a| self.inner(&self.h_top(&top[a], &top[b]), z)))
    }

    /// Matrix of `T⊤♯_w`: `g(T⊤♯_w u, v) = g(T⊤(u, v), w)`.
    pub fn t_sharp_top(&self, w: &Vector) -> Result<Mat> {
        self.require_perp(w)?;
        let top = self.top_basis();
        Ok(Mat::from_fn(self.nu, self.nu, |b, a| self.inner(&self.t_top(&top[a], &top[b]), w)))
    }

    /// Matrix of `A⊥_Z` in the `D⊥` frame, `Z ∈ D⊤`.
    pub fn weingarten_perp(&self, z: &Vector) -> Result<Mat> {
        self.require_top(z)?;
        let perp = self.perp_basis();
        Ok(Mat::from_fn(self.n, self.n, |j, i| self.inner(&self.h_perp(&perp[i], &perp[j]), z)))
    }

    pub fn t_sharp_perp(&self, w: &Vector) -> Result<Mat> {
        self.require_top(w)?;
        let perp = self.perp_basis();
        Ok(Mat::from_fn(self.n, self.n, |j, i| self.inner(&self.t_perp(&perp[i], &perp[j]), w)))
    }

    /// `B_x` as a linear map on coordinate vectors: `y ↦ (∇_{y⊥} x)⊥` with
    /// `x` extended by constant coefficients in the spanning fields.
    pub fn co_nullity_operator(&self, x: &Vector) -> Mat {
        let al = self.coefficients(x);
        let mut m = Mat::zeros(self.dim(), self.dim());
        for a in 0..self.nu {
            m += &self.cov_span[a] * al[a];
        }
        &self.p_perp * m * &self.p_perp
    }

    /// `B_x` and `Bˣ_x = B_x − g(X/n, x) id` in the orthonormal basis `basis`
    /// of `D⊥`.
    pub fn co_nullity_in(&self, x: &Vector, basis: &[Vector]) -> Result<CoNullity> {
        self.require_top(x)?;
        let op = self.co_nullity_operator(x);
        let k = basis.len();
        let b = Mat::from_fn(k, k, |i, j| self.inner(&basis[i], &(&op * &basis[j])));
        let shift = self.inner(&self.x, x) / self.n as f64;
        let weighted = &b - Mat::identity(k, k) * shift;
        let h = libm::sqrt(self.norms_h_top());
        Ok(CoNullity { b, weighted, h_top_norm: h, not_totally_geodesic: h >= TOTALLY_GEODESIC_TOL })
    }

    pub fn co_nullity(&self, x: &Vector) -> Result<CoNullity> {
        self.co_nullity_in(x, &self.perp_basis())
    }

    fn norms_h_top(&self) -> f64 {
        let top = self.top_basis();
        let mut s = 0.0;
        for a in &top {
            for b in &top {
                let h = self.h_top(a, b);
                s += self.inner(&h, &h);
            }
        }
        s
    }

    /// Turbulence at this point for a unit `x ∈ D⊤`:
    /// `sup { g(B_x y, z) : y ⊥ z unit in D⊥ } = sup_y |B_x y − g(B_x y, y) y|`.
    ///
    /// For `n = 2` this is the largest `|eigenvalue|` of `sym(Jᵀ B)` with
    /// `J` the quarter rotation, which is exact. For `n ≥ 3` the unit sphere
    /// of `D⊥` is sampled and the best samples refined.
    pub fn turbulence_at(&self, x: &Vector) -> Result<Turbulence> {
        let c = self.co_nullity(x)?;
        Ok(turbulence_of(&c.b))
    }
}

/// Result of the inner turbulence maximisation for one operator.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Turbulence {
    pub value: f64,
    /// Spectral norm of the antisymmetric part; never exceeds `value`.
    pub antisymmetric_norm: f64,
    pub exact: bool,
}

/// `sup_{|y|=1} |By − ⟨By, y⟩y|` for a matrix in an orthonormal basis.
pub fn turbulence_of(b: &Mat) -> Turbulence {
    let n = b.nrows();
    let anti = (b - b.transpose()) * 0.5;
    let antisymmetric_norm = if n == 0 { 0.0 } else { anti.singular_values().max() };
    let off = |y: &Vector| {
        let by = b * y;
        let c = by.dot(y);
        (by - y * c).norm()
    };
    match n {
        0 | 1 => Turbulence { value: 0.0, antisymmetric_norm, exact: true },
        2 => {
            let j = Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
            let q = j.transpose() * b;
            let ev = crate::linalg::sym_eigenvalues(&q);
            let value = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Turbulence { value, antisymmetric_norm, exact: true }
        }
        _ => {
            let count = if n <= 3 { 2048 } else { 8192 };
            let dirs = crate::linalg::sphere_directions(n, count, 0x7475_7262);
            let mut scored: Vec<(f64, &Vector)> = dirs.iter().map(|y| (off(y), y)).collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut best = scored.first().map_or(0.0, |s| s.0);
            for (_, y0) in scored.iter().take(8) {
                let (v, _) = refine_on_sphere(|y| -off(y), (*y0).clone(), 60);
                best = best.max(-v);
            }
            Turbulence { value: best.max(antisymmetric_norm), antisymmetric_norm, exact: false }
        }
    }
}

/// Projected gradient descent on the unit sphere with finite-difference
/// gradients and backtracking. Returns the best value and point found.
pub fn refine_on_sphere<F: Fn(&Vector) -> f64>(f: F, start: Vector, steps: usize) -> (f64, Vector) {
    let n = start.len();
    let mut y = start.normalize();
    let mut fy = f(&y);
    let mut step = 0.2;
    let h = 1e-6;
    for _ in 0..steps {
        let mut grad = Vector::zeros(n);
        for k in 0..n {
            let mut a = y.clone();
            let mut b = y.clone();
            a[k] += h;
            b[k] -= h;
            grad[k] = (f(&a.normalize()) - f(&b.normalize())) / (2.0 * h);
        }
        let tangent = &grad - &y * grad.dot(&y);
        let gn = tangent.norm();
        if gn < 1e-12 {
            break;
        }
        let mut improved = false;
        while step > 1e-10 {
            let cand = (&y - &tangent * (step / gn)).normalize();
            let fc = f(&cand);
            if fc < fy {
                y = cand;
                fy = fc;
                improved = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (fy, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::manifold::Coordinate;
    use alloc::vec;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};

    fn e(s: &str, d: usize) -> Expr {
        parse(s, d).unwrap()
    }

    fn product() -> WeightedAlmostProduct {
        // S² × S¹ with the round factor as D⊥ and the circle as D⊤
        let m = ChartedManifold::diagonal(
            "S2xS1",
            vec![Coordinate::periodic(1.0), Coordinate::interval(0.0, PI), Coordinate::periodic(2.0 * PI)],
            vec![Expr::Num(1.0), Expr::Num(1.0), e("sin(x1)^2", 3)],
        )
        .unwrap();
        WeightedAlmostProduct::unweighted("prod", m, Distribution::coordinate(3, &[0])).unwrap()
    }

    fn twisted() -> WeightedAlmostProduct {
        // g = v² dx0² + u²(dx1² + dx2²), D⊤ = span ∂0
        let u = "exp(0.2*sin(x0) + 0.1*cos(x1))";
        let v = "exp(0.15*cos(x2) + 0.1*sin(x0 + x1))";
        let m = ChartedManifold::diagonal(
            "twisted",
            vec![Coordinate::periodic(2.0 * PI); 3],
            vec![e(&alloc::format!("({v})^2"), 3), e(&alloc::format!("({u})^2"), 3), e(&alloc::format!("({u})^2"), 3)],
        )
        .unwrap();
        WeightedAlmostProduct::unweighted("tw", m, Distribution::coordinate(3, &[0])).unwrap()
    }

    fn hopf() -> WeightedAlmostProduct {
        let m = ChartedManifold::diagonal(
            "S3",
            vec![Coordinate::interval(0.0, PI / 2.0), Coordinate::periodic(2.0 * PI), Coordinate::periodic(2.0 * PI)],
            vec![Expr::Num(1.0), e("sin(x0)^2", 3), e("cos(x0)^2", 3)],
        )
        .unwrap();
        let fiber = VectorField::parse("hopf", &["0", "1", "1"], 3).unwrap();
        WeightedAlmostProduct::unweighted("hopf", m, Distribution::new(vec![fiber])).unwrap()
    }

    fn max_abs_vec(v: &Vector) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn coordinate_frame_on_diagonal_metric() {
        let w = product();
        let pk = w.pack(&[0.2, 1.0, 0.3]).unwrap();
        let s = libm::sin(1.0);
        let f = &pk.frame;
        assert!((f[(0, 0)] - 1.0).abs() < 1e-14);
        let perp = pk.perp_basis();
        // normalized ∂1 and ∂2 / sin(x1) in some pivot order
        let mut got: Vec<(usize, f64)> = perp
            .iter()
            .map(|v| {
                let k = if v[1].abs() > 0.5 { 1 } else { 2 };
                (k, v[k].abs())
            })
            .collect();
        got.sort_by_key(|x| x.0);
        assert!((got[0].1 - 1.0).abs() < 1e-14);
        assert!((got[1].1 - 1.0 / s).abs() < 1e-14);
    }

    #[test]
    fn frames_are_orthonormal_and_adapted() {
        let w = hopf();
        let pk = w.pack(&[0.6, 1.0, 2.0]).unwrap();
        let gram = pk.frame.transpose() * pk.g() * &pk.frame;
        assert!((gram - Mat::identity(3, 3)).norm() < 1e-10);
        assert!(pk.top_residual(&pk.e_top(0)) < 1e-12);
        assert!(pk.perp_residual(&pk.e_perp(0)) < 1e-12);
    }

    #[test]
    fn respanning_keeps_projectors_and_norms() {
        let w = twisted();
        // two-dimensional D⊤ for a nontrivial re-spanning
        let w2 = WeightedAlmostProduct::unweighted(
            "tw2",
            w.manifold.clone(),
            Distribution::coordinate(3, &[0, 1]),
        )
        .unwrap();
        let c = vec![
            vec![e("2 + sin(x2)", 3), e("0.5*cos(x0)", 3)],
            vec![e("0.3*sin(x1)", 3), e("1.5 + 0.2*cos(x0 + x2)", 3)],
        ];
        let w3 = WeightedAlmostProduct::unweighted("tw3", w.manifold.clone(), w2.dist.respan(&c)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let a = w2.pack(&p).unwrap();
            let b = w3.pack(&p).unwrap();
            assert!((&a.p_top - &b.p_top).norm() < 1e-9);
            let (na, nb) = (a.norms(), b.norms());
            for (x, y) in [
                (na.h_top, nb.h_top),
                (na.h_perp, nb.h_perp),
                (na.t_top, nb.t_top),
                (na.t_perp, nb.t_perp),
                (na.mean_top, nb.mean_top),
                (na.mean_perp, nb.mean_perp),
            ] {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
            // tensoriality: h⊤ and T⊤ on the same vectors from different extensions
            let u = a.from_top(&[0.3, -1.1]);
            let v = a.from_top(&[0.8, 0.4]);
            assert!((a.h_top(&u, &v) - b.h_top(&u, &v)).norm() < 1e-9);
            assert!((a.t_top(&u, &v) - b.t_top(&u, &v)).norm() < 1e-9);
        }
    }

    #[test]
    fn product_has_vanishing_extrinsic_tensors() {
        let w = product();
        let pk = w.pack(&[0.1, 0.9, 2.0]).unwrap();
        let nm = pk.norms();
        assert!(nm.h_top < 1e-24 && nm.h_perp < 1e-24 && nm.t_top < 1e-24 && nm.t_perp < 1e-24);
        assert!(pk.weingarten_top(&pk.e_perp(0)).unwrap().norm() < 1e-12);
        let x = pk.e_top(0);
        let c = pk.co_nullity(&x).unwrap();
        assert!(c.b.norm() < 1e-12);
        assert!(!c.not_totally_geodesic);
    }

    #[test]
    fn twisted_h_matches_closed_forms() {
        let w = twisted();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let pk = w.pack(&p).unwrap();
            // ∇⊤ log u: gradient of log u projected on D⊤ = span ∂0
            let (x0, x1, x2) = (p[0], p[1], p[2]);
            let dlogu = Vector::from_vec(vec![0.2 * libm::cos(x0), -0.1 * libm::sin(x1), 0.0]);
            let grad = pk.geo.ginv() * dlogu;
            let grad_top = pk.top(&grad);
            let y = pk.e_perp(0);
            let z = pk.e_perp(1);
            for (a, b) in [(&y, &y), (&y, &z), (&z, &z)] {
                let want = &grad_top * -pk.inner(a, b);
                assert!(max_abs_vec(&(pk.h_perp(a, b) - want)) < 1e-8);
            }
            let want_h = &grad_top * -2.0;
            assert!(max_abs_vec(&(pk.mean_perp() - want_h)) < 1e-8);
            let dlogv = Vector::from_vec(vec![0.1 * libm::cos(x0 + x1), 0.1 * libm::cos(x0 + x1), -0.15 * libm::sin(x2)]);
            let gv = pk.perp(&(pk.geo.ginv() * dlogv));
            let ex = pk.e_top(0);
            assert!(max_abs_vec(&(pk.h_top(&ex, &ex) + &gv)) < 1e-8);
            // umbilical D⊥: ‖h⊥‖² − ‖H⊥‖² = −((n−1)/n)‖H⊥‖²
            let nm = pk.norms();
            assert!((nm.h_perp - nm.mean_perp + 0.5 * nm.mean_perp).abs() < 1e-8);
            // Weingarten of D⊥ is a multiple of the identity
            let a = pk.weingarten_perp(&ex).unwrap();
            let s = -pk.inner(&grad_top, &ex);
            assert!((a - Mat::identity(2, 2) * s).norm() < 1e-9);
            assert!(nm.t_top < 1e-20 && nm.t_perp < 1e-20);
        }
    }

    #[test]
    fn hopf_fibers_are_geodesic_and_twisted() {
        let w = hopf();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let p = [rng.random_range(0.05..1.5), rng.random_range(0.0..6.2), rng.random_range(0.0..6.2)];
            let pk = w.pack(&p).unwrap();
            let nm = pk.norms();
            assert!(nm.h_top < 1e-20);
            assert!(nm.h_perp < 1e-18);
            // O'Neill tensor of the Hopf fibration: |T⊥(y, z)| = 1 for orthonormal y, z
            assert!((nm.t_perp - 2.0).abs() < 1e-10, "{}", nm.t_perp);
            let x = pk.e_top(0);
            let c = pk.co_nullity(&x).unwrap();
            assert!((&c.b + c.b.transpose()).norm() < 1e-10);
            assert!((c.b.norm() - libm::sqrt(2.0)).abs() < 1e-10);
            let t = pk.turbulence_at(&x).unwrap();
            assert!((t.value - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn co_nullity_tensoriality_and_shift() {
        let w = hopf();
        let w_alt = WeightedAlmostProduct::unweighted(
            "alt",
            w.manifold.clone(),
            w.dist.respan(&[vec![e("2 + sin(x0)*cos(x1)", 3)]]),
        )
        .unwrap();
        let p = [0.7, 0.3, 1.9];
        let a = w.pack(&p).unwrap();
        let b = w_alt.pack(&p).unwrap();
        let x = a.e_top(0);
        let basis = a.perp_basis();
        let ba = a.co_nullity_in(&x, &basis).unwrap();
        let bb = b.co_nullity_in(&x, &basis).unwrap();
        assert!((&ba.b - &bb.b).norm() < 1e-9);
        // product weight shift
        let pr = product();
        let pw = pr
            .with_weight(VectorField::parse("X", &["1 + 0.5*sin(x1)", "0", "0"], 3).unwrap(), 2.0, 1.0)
            .unwrap();
        let q = [0.4, 1.2, 0.0];
        let pk = pw.pack(&q).unwrap();
        let x = pk.e_top(0);
        let c = pk.co_nullity(&x).unwrap();
        let s = (1.0 + 0.5 * libm::sin(1.2)) / 2.0;
        assert!((c.weighted + Mat::identity(2, 2) * s).norm() < 1e-12);
    }

    #[test]
    fn weingarten_trace_is_mean_curvature() {
        let w = twisted();
        let pk = w.pack(&[0.5, 1.0, 2.5]).unwrap();
        for i in 0..2 {
            let z = pk.e_perp(i);
            let a = pk.weingarten_top(&z).unwrap();
            assert!((a.trace() - pk.inner(&pk.mean_top(), &z)).abs() < 1e-9);
            assert!((&a - a.transpose()).norm() < 1e-10);
        }
        assert!(matches!(pk.weingarten_top(&pk.e_top(0)), Err(Error::WrongDistribution { .. })));
    }

    #[test]
    fn values_lie_in_the_other_distribution() {
        let m = ChartedManifold::diagonal(
            "contact",
            vec![Coordinate::periodic(2.0 * PI); 3],
            vec![e("exp(0.4*sin(x1))", 3), e("exp(0.4*sin(x1))", 3), e("exp(0.4*sin(x1))", 3)],
        )
        .unwrap();
        let d = Distribution::new(vec![
            VectorField::parse("a", &["1", "0", "0"], 3).unwrap(),
            VectorField::parse("b", &["0", "1", "0.5*sin(x0)"], 3).unwrap(),
        ]);
        let w = WeightedAlmostProduct::unweighted("c", m, d).unwrap();
        let pk = w.pack(&[0.3, 0.8, 1.1]).unwrap();
        let (u, v) = (pk.e_top(0), pk.e_top(1));
        assert!(pk.perp_residual(&pk.h_top(&u, &v)) < 1e-10);
        assert!(pk.perp_residual(&pk.t_top(&u, &v)) < 1e-10);
        assert!((pk.h_top(&u, &v) - pk.h_top(&v, &u)).norm() < 1e-10);
        assert!((pk.t_top(&u, &v) + pk.t_top(&v, &u)).norm() < 1e-10);
        assert!(pk.norms().t_top > 1e-3);
        let y = pk.e_perp(0);
        assert!(pk.top_residual(&pk.h_perp(&y, &y)) < 1e-10);
        let nm = pk.norms();
        let x2 = nm.x_top + nm.x_perp;
        assert!((x2 - pk.inner(&pk.x, &pk.x)).abs() < 1e-12);
    }

    #[test]
    fn turbulence_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for n in [2usize, 3] {
            for _ in 0..5 {
                let b = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let t = turbulence_of(&b);
                let mut brute = 0.0f64;
                for _ in 0..10_000 {
                    let y = crate::linalg::random_unit(n, &mut rng);
                    let mut z = crate::linalg::random_unit(n, &mut rng);
                    z -= &y * z.dot(&y);
                    if z.norm() < 1e-6 {
                        continue;
                    }
                    let z = z.normalize();
                    brute = brute.max((&b * &y).dot(&z));
                }
                assert!(brute <= t.value + 1e-6, "n={n}: brute {brute} > {}", t.value);
                assert!(t.value - brute < 0.05, "n={n}: {} vs brute {brute}", t.value);
                assert!(t.antisymmetric_norm <= t.value + 1e-12);
            }
        }
        // symmetric traceless operator: antisymmetric part vanishes, turbulence does not
        let b = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let t = turbulence_of(&b);
        assert!((t.value - 1.0).abs() < 1e-12 && t.antisymmetric_norm == 0.0);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let m = ChartedManifold::diagonal("R3", vec![Coordinate::periodic(1.0); 3], vec![Expr::Num(1.0); 3]).unwrap();
        let d = Distribution::new(vec![
            VectorField::parse("a", &["1", "0", "0"], 3).unwrap(),
            VectorField::parse("b", &["1", "1e-9", "0"], 3).unwrap(),
        ]);
        let w = WeightedAlmostProduct::unweighted("bad", m, d).unwrap();
        assert!(matches!(w.pack(&[0.1, 0.1, 0.1]), Err(Error::RankDeficient(_))));
    }
}
