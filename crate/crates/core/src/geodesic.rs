//! Geodesics, parallel frames, and the Riccati and Jacobi flows along them.
//!
//! Along a leaf geodesic `γ` of a totally geodesic foliation the co-nullity
//! operator `B_γ̇` (in a parallel orthonormal frame of `D⊥`) solves
//!
//! ```text
//! Ḃ + B² + R⊥_γ̇ = 0                          unweighted
//! Ḃˣ + (Bˣ)² + 2 g(X/n, γ̇) Bˣ + R⊥_{X,γ̇} = 0     weighted, Bˣ = B − g(X/n, γ̇) id
//! ```
//!
//! and a Jacobi tensor solves `Ÿ + R Y = 0` with `B = Ẏ Y⁻¹`. All flows use
//! classical fixed-step RK4; the Riccati flow additionally compares each step
//! against two half steps to bracket a blow-up time.

use alloc::vec::Vec;

use crate::almost_product::{turbulence_of, WeightedAlmostProduct};
use crate::error::Error;
use crate::linalg::{sphere_directions, Mat, Vector};
use crate::manifold::ChartedManifold;
use crate::weighted::{curvature_form, w_top_with, weighted_jacobi_perp_in};
use crate::Result;

/// Relative speed drift at which geodesic integration aborts.
pub const SPEED_DRIFT_MAX: f64 = 1e-5;
/// `‖B‖_F` above which a Riccati solution counts as escaped.
pub const BLOW_UP_THRESHOLD: f64 = 1e8;

#[derive(Clone, Debug)]
struct State {
    x: Vec<f64>,
    v: Vector,
    f: Mat,
}

fn rhs(m: &ChartedManifold, s: &State) -> Result<(Vector, Vector, Mat)> {
    let geo = m.geometry(&s.x)?;
    let acc = -geo.gamma_uv(&s.v, &s.v);
    let mut df = Mat::zeros(s.f.nrows(), s.f.ncols());
    for c in 0..s.f.ncols() {
        let col = s.f.column(c).into_owned();
        df.set_column(c, &(-geo.gamma_uv(&s.v, &col)));
    }
    Ok((s.v.clone(), acc, df))
}

fn advance(s: &State, h: f64, k: &(Vector, Vector, Mat)) -> State {
    State {
        x: s.x.iter().zip(k.0.iter()).map(|(a, b)| a + h * b).collect(),
        v: &s.v + &k.1 * h,
        f: &s.f + &k.2 * h,
    }
}

fn rk4_geodesic(m: &ChartedManifold, s: &State, h: f64) -> Result<State> {
    let k1 = rhs(m, s)?;
    let k2 = rhs(m, &advance(s, h / 2.0, &k1))?;
    let k3 = rhs(m, &advance(s, h / 2.0, &k2))?;
    let k4 = rhs(m, &advance(s, h, &k3))?;
    let comb = |a: &Vector, b: &Vector, c: &Vector, d: &Vector| (a + b * 2.0 + c * 2.0 + d) * (h / 6.0);
    let dx = comb(&k1.0, &k2.0, &k3.0, &k4.0);
    Ok(State {
        x: s.x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect(),
        v: &s.v + comb(&k1.1, &k2.1, &k3.1, &k4.1),
        f: &s.f + (&k1.2 + &k2.2 * 2.0 + &k3.2 * 2.0 + &k4.2) * (h / 6.0),
    })
}

fn chart_exit(e: Error, t: f64) -> Error {
    match e {
        Error::OutsideDomain { .. } => Error::ChartExit { t },
        other => other,
    }
}

/// Geodesic with a parallel frame, sampled on a uniform grid.
#[derive(Clone, Debug)]
pub struct GeodesicTrace {
    pub dt: f64,
    pub times: Vec<f64>,
    /// Chart coordinates, not reduced modulo periods.
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vector>,
    /// Transported frame; columns `0..nu` started in `D⊤`, the rest in `D⊥`.
    pub frames: Vec<Mat>,
    pub nu: usize,
    /// Maximum relative deviation of `|γ̇|` from its initial value.
    pub speed_drift: f64,
    /// Maximum `|γ̇⊥|` (leaf geodesics) or `|γ̇⊤|` (normal geodesics).
    pub tangency_drift: f64,
    /// Maximum `|Fᵀ g F − id|`.
    pub frame_defect: f64,
}

impl GeodesicTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Parallel orthonormal frame of `D⊥` at node `k` (as columns).
    pub fn normal_frame(&self, k: usize) -> Mat {
        let f = &self.frames[k];
        f.columns(self.nu, f.ncols() - self.nu).into_owned()
    }

    pub fn normal_basis(&self, k: usize) -> Vec<Vector> {
        let f = &self.frames[k];
        (self.nu..f.ncols()).map(|c| f.column(c).into_owned()).collect()
    }

    fn state(&self, k: usize) -> State {
        State { x: self.points[k].clone(), v: self.velocities[k].clone(), f: self.frames[k].clone() }
    }
}

/// Which distribution the initial velocity must lie in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Leaf,
    Normal,
    Any,
}

/// Leaf geodesic from `p` with unit initial velocity `v ∈ D⊤`, on `[0, t_end]`.
pub fn integrate_geodesic(w: &WeightedAlmostProduct, p: &[f64], v: &Vector, t_end: f64, dt: f64) -> Result<GeodesicTrace> {
    integrate_geodesic_from(w, p, v, t_end, dt, Direction::Leaf)
}

/// Geodesic with the adapted frame at `p` transported along it.
pub fn integrate_geodesic_from(
    w: &WeightedAlmostProduct,
    p: &[f64],
    v: &Vector,
    t_end: f64,
    dt: f64,
    dir: Direction,
) -> Result<GeodesicTrace> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::invalid("need t_end > 0 and dt > 0"));
    }
    let pk = w.pack(p)?;
    match dir {
        Direction::Leaf => pk.require_top(v)?,
        Direction::Normal => pk.require_perp(v)?,
        Direction::Any => {}
    }
    let speed = libm::sqrt(pk.inner(v, v));
    if (speed - 1.0).abs() > 1e-10 {
        return Err(Error::NotOrthonormal((speed - 1.0).abs()));
    }
    let steps = libm::ceil(t_end / dt - 1e-9).max(1.0) as usize;
    let h = t_end / steps as f64;
    let m = &w.manifold;
    let mut s = State { x: p.to_vec(), v: v.clone(), f: pk.frame.clone() };
    let mut tr = GeodesicTrace {
        dt: h,
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        velocities: Vec::with_capacity(steps + 1),
        frames: Vec::with_capacity(steps + 1),
        nu: w.nu(),
        speed_drift: 0.0,
        tangency_drift: 0.0,
        frame_defect: 0.0,
    };
    for k in 0..=steps {
        let t = k as f64 * h;
        if k > 0 {
            s = rk4_geodesic(m, &s, h).map_err(|e| chart_exit(e, t))?;
        }
        let here = w.pack(&s.x).map_err(|e| chart_exit(e, t))?;
        let g = here.g();
        let sp = libm::sqrt((s.v.transpose() * g * &s.v)[0]);
        let drift = (sp - speed).abs() / speed;
        if drift > SPEED_DRIFT_MAX {
            return Err(Error::SpeedDrift { t, drift });
        }
        tr.speed_drift = tr.speed_drift.max(drift);
        let off = match dir {
            Direction::Leaf => here.top_residual(&s.v),
            Direction::Normal => here.perp_residual(&s.v),
            Direction::Any => 0.0,
        };
        tr.tangency_drift = tr.tangency_drift.max(off);
        let gram = s.f.transpose() * g * &s.f;
        let defect = (gram - Mat::identity(s.f.ncols(), s.f.ncols())).abs().max();
        tr.frame_defect = tr.frame_defect.max(defect);
        tr.times.push(t);
        tr.points.push(s.x.clone());
        tr.velocities.push(s.v.clone());
        tr.frames.push(s.f.clone());
    }
    Ok(tr)
}

/// `g(X/n, γ̇)² ≤ k` along a trace; returns the maximum of the left side.
pub fn hypothesis_x1(w: &WeightedAlmostProduct, trace: &GeodesicTrace, k: f64) -> Result<(f64, bool)> {
    let n = w.n() as f64;
    let mut worst = 0.0f64;
    for (p, v) in trace.points.iter().zip(&trace.velocities) {
        let pk = w.pack(p)?;
        let s = pk.inner(&pk.x, v) / n;
        worst = worst.max(s * s);
    }
    Ok((worst, worst <= k))
}

/// Normal curvature along a path: the symmetric matrix `r(t)` acting in a
/// parallel orthonormal frame, and the drift `s(t)` of the weighted Riccati
/// equation (zero for the unweighted one).
#[derive(Clone, Debug)]
pub struct CurvatureSample {
    pub r: Mat,
    pub s: f64,
}

pub trait NormalCurvature {
    fn dim(&self) -> usize;
    fn sample(&self, t: f64) -> Result<CurvatureSample>;
}

/// `r ≡ k·id`, `s ≡ s`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantCurvature {
    pub n: usize,
    pub k: f64,
    pub s: f64,
}

impl NormalCurvature for ConstantCurvature {
    fn dim(&self) -> usize {
        self.n
    }
    fn sample(&self, _t: f64) -> Result<CurvatureSample> {
        Ok(CurvatureSample { r: Mat::identity(self.n, self.n) * self.k, s: self.s })
    }
}

/// Curvature given by a closure of `t`.
pub struct CurvatureProfile<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(f64) -> CurvatureSample> NormalCurvature for CurvatureProfile<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn sample(&self, t: f64) -> Result<CurvatureSample> {
        Ok((self.f)(t))
    }
}

/// `R⊥_γ̇` (or `R⊥_{X,γ̇}` with `s = g(X/n, γ̇)`) along a leaf geodesic trace,
/// evaluated in the transported frame. Off-node times are reached by one RK4
/// step from the preceding node, so no interpolation error enters.
pub struct TraceCurvature<'a> {
    pub w: &'a WeightedAlmostProduct,
    pub trace: &'a GeodesicTrace,
    pub weighted: bool,
}

impl TraceCurvature<'_> {
    fn state_at(&self, t: f64) -> Result<State> {
        let tr = self.trace;
        let last = tr.len() - 1;
        let k = (libm::floor(t / tr.dt + 1e-9).max(0.0) as usize).min(last);
        let tau = t - tr.times[k];
        let s = tr.state(k);
        if tau.abs() < 1e-14 {
            return Ok(s);
        }
        rk4_geodesic(&self.w.manifold, &s, tau).map_err(|e| chart_exit(e, t))
    }
}

impl NormalCurvature for TraceCurvature<'_> {
    fn dim(&self) -> usize {
        self.w.n()
    }
    fn sample(&self, t: f64) -> Result<CurvatureSample> {
        let st = self.state_at(t)?;
        let pk = self.w.pack(&st.x)?;
        let nu = self.trace.nu;
        let basis: Vec<Vector> = (nu..st.f.ncols()).map(|c| st.f.column(c).into_owned()).collect();
        if self.weighted {
            let s = pk.inner(&pk.x, &st.v) / pk.n() as f64;
            Ok(CurvatureSample { r: weighted_jacobi_perp_in(&pk, &st.v, &basis), s })
        } else {
            let r = curvature_form(&pk, &basis, &st.v);
            Ok(CurvatureSample { r: (&r + r.transpose()) * 0.5, s: 0.0 })
        }
    }
}

/// Step control for [`riccati_flow`].
#[derive(Clone, Copy, Debug)]
pub struct RiccatiOptions {
    pub t_end: f64,
    pub dt: f64,
    pub threshold: f64,
    /// Smallest substep before a blow-up is declared.
    pub min_step: f64,
    /// Allowed step-doubling discrepancy per unit time, relative to
    /// `1 + ‖B‖_F²`. The flow carries `δB/‖B‖²` along unchanged near a
    /// blow-up, so this bounds the error at every later time.
    pub tol: f64,
}

impl RiccatiOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self { t_end, dt, threshold: BLOW_UP_THRESHOLD, min_step: 1e-7, tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct RiccatiTrace {
    pub times: Vec<f64>,
    pub b: Vec<Mat>,
    /// First time at which the solution could not be continued.
    pub blow_up: Option<f64>,
    pub max_asymmetry: f64,
}

fn riccati_rhs(b: &Mat, c: &CurvatureSample) -> Mat {
    -(b * b) - b * (2.0 * c.s) - &c.r
}

/// RK4 increment over one step.
fn rk4_matrix(b: &Mat, h: f64, c0: &CurvatureSample, c1: &CurvatureSample, c2: &CurvatureSample) -> Mat {
    let k1 = riccati_rhs(b, c0);
    let k2 = riccati_rhs(&(b + &k1 * (h / 2.0)), c1);
    let k3 = riccati_rhs(&(b + &k2 * (h / 2.0)), c1);
    let k4 = riccati_rhs(&(b + &k3 * h), c2);
    (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Integrates `Ḃ + B² + 2sB + r = 0` from `B(0) = b0`.
pub fn riccati_flow<C: NormalCurvature>(src: &C, b0: &Mat, opts: RiccatiOptions) -> Result<RiccatiTrace> {
    let n = src.dim();
    if b0.nrows() != n || b0.ncols() != n {
        return Err(Error::Dimension { expected: n, got: b0.nrows() });
    }
    let steps = libm::ceil(opts.t_end / opts.dt - 1e-9).max(1.0) as usize;
    let dt = opts.t_end / steps as f64;
    let mut b = b0.clone();
    let mut comp = Mat::zeros(n, n);
    let mut out = RiccatiTrace {
        times: alloc::vec![0.0],
        b: alloc::vec![b.clone()],
        blow_up: None,
        max_asymmetry: (b0 - b0.transpose()).abs().max(),
    };
    // Elapsed time is summed with compensation too: near a blow-up an
    // error δt in the integrated duration shifts B by about ‖B‖²δt.
    let (mut t, mut tc) = (0.0, 0.0);
    let mut h = dt;
    'nodes: for k in 1..=steps {
        let target = k as f64 * dt;
        while (target - t) + tc > 0.0 {
            let rem = (target - t) + tc;
            let last = h >= rem;
            let h_trial = h;
            if last {
                h = rem;
            }
            let c0 = src.sample(t)?;
            let c1 = src.sample(t + h / 4.0)?;
            let c2 = src.sample(t + h / 2.0)?;
            let c3 = src.sample(t + 3.0 * h / 4.0)?;
            let c4 = src.sample(t + h)?;
            let full = rk4_matrix(&b, h, &c0, &c2, &c4);
            let d1 = rk4_matrix(&b, h / 2.0, &c0, &c1, &c2);
            let d2 = rk4_matrix(&(&b + &d1), h / 2.0, &c2, &c3, &c4);
            let half = &b + &d1 + &d2;
            let nh = half.norm();
            let ok = finite(&full)
                && finite(&half)
                && nh <= opts.threshold
                && (&full - &d1 - &d2).norm() <= opts.tol * (1.0 + nh * nh) * h;
            if ok {
                kahan_add(&mut b, &mut comp, d1);
                kahan_add(&mut b, &mut comp, d2);
                if last {
                    (t, tc) = (target, 0.0);
                    h = h_trial;
                } else {
                    kahan_step(&mut t, &mut tc, h);
                    h = (2.0 * h).min(dt);
                }
            } else {
                h = h.min(h_trial) / 2.0;
                if h < opts.min_step {
                    out.blow_up = Some(t);
                    break 'nodes;
                }
            }
        }
        (t, tc) = (target, 0.0);
        out.max_asymmetry = out.max_asymmetry.max((&b - b.transpose()).abs().max());
        out.times.push(t);
        out.b.push(b.clone());
    }
    Ok(out)
}

/// Escape time of `λ̇ + λ² + 2sλ + k = 0` with constant `s`, `k > s²`:
/// `(π/2 + arctan((λ₀ + s)/√(k − s²)))/√(k − s²)`. `None` when `k ≤ s²`.
pub fn scalar_escape_time(k: f64, s: f64, lambda0: f64) -> Option<f64> {
    let kk = k - s * s;
    if kk <= 0.0 {
        return None;
    }
    let r = libm::sqrt(kk);
    Some((core::f64::consts::FRAC_PI_2 + libm::atan((lambda0 + s) / r)) / r)
}

#[derive(Clone, Debug)]
pub struct JacobiTrace {
    pub times: Vec<f64>,
    pub y: Vec<Mat>,
    pub ydot: Vec<Mat>,
    /// Smallest singular value of `[Y; Ẏ]` at each node.
    pub sigma_min: Vec<f64>,
}

impl JacobiTrace {
    /// Column `c` of the Jacobi tensor as a vector solution `(y, ẏ)`.
    pub fn column(&self, c: usize) -> (Vec<Vector>, Vec<Vector>) {
        (
            self.y.iter().map(|m| m.column(c).into_owned()).collect(),
            self.ydot.iter().map(|m| m.column(c).into_owned()).collect(),
        )
    }
}

fn stacked_sigma_min(y: &Mat, yd: &Mat) -> f64 {
    let (n, m) = (y.nrows(), y.ncols());
    let s = Mat::from_fn(2 * n, m, |i, j| if i < n { y[(i, j)] } else { yd[(i - n, j)] });
    s.singular_values().min()
}

// Compensated `acc += inc`. Near a conjugate point both flows magnify the
// accumulated rounding of the state by about ‖B‖².
fn kahan_add(acc: &mut Mat, c: &mut Mat, inc: Mat) {
    for ((a, c), d) in acc.iter_mut().zip(c.iter_mut()).zip(inc.iter()) {
        kahan_step(a, c, *d);
    }
}

fn kahan_step(a: &mut f64, c: &mut f64, d: f64) {
    let y = d - *c;
    let t = *a + y;
    *c = (t - *a) - y;
    *a = t;
}

/// RK4 on `Ÿ + r(t) Y = 0` on `[0, t_end]`.
pub fn jacobi_flow<C: NormalCurvature>(src: &C, y0: &Mat, yd0: &Mat, t_end: f64, dt: f64) -> Result<JacobiTrace> {
    let n = src.dim();
    if y0.nrows() != n || yd0.nrows() != n || y0.ncols() != yd0.ncols() {
        return Err(Error::Dimension { expected: n, got: y0.nrows() });
    }
    let s0 = stacked_sigma_min(y0, yd0);
    if s0 < 1e-12 {
        return Err(Error::RankDeficient(s0));
    }
    let steps = libm::ceil(t_end / dt - 1e-9).max(1.0) as usize;
    let h = t_end / steps as f64;
    let (mut y, mut yd) = (y0.clone(), yd0.clone());
    let (mut cy, mut cyd) = (Mat::zeros(y.nrows(), y.ncols()), Mat::zeros(y.nrows(), y.ncols()));
    let mut out = JacobiTrace {
        times: alloc::vec![0.0],
        y: alloc::vec![y.clone()],
        ydot: alloc::vec![yd.clone()],
        sigma_min: alloc::vec![s0],
    };
    for k in 1..=steps {
        let t = (k - 1) as f64 * h;
        let r0 = src.sample(t)?.r;
        let r1 = src.sample(t + h / 2.0)?.r;
        let r2 = src.sample(t + h)?.r;
        let (a1, v1) = (yd.clone(), -(&r0 * &y));
        let (a2, v2) = (&yd + &v1 * (h / 2.0), -(&r1 * (&y + &a1 * (h / 2.0))));
        let (a3, v3) = (&yd + &v2 * (h / 2.0), -(&r1 * (&y + &a2 * (h / 2.0))));
        let (a4, v4) = (&yd + &v3 * h, -(&r2 * (&y + &a3 * h)));
        kahan_add(&mut y, &mut cy, (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0));
        kahan_add(&mut yd, &mut cyd, (v1 + v2 * 2.0 + v3 * 2.0 + v4) * (h / 6.0));
        out.times.push(k as f64 * h);
        out.sigma_min.push(stacked_sigma_min(&y, &yd));
        out.y.push(y.clone());
        out.ydot.push(yd.clone());
    }
    Ok(out)
}

/// Composite Simpson rule on uniform samples; an odd interval count closes
/// with the 3/8 rule.
pub fn simpson(h: f64, ys: &[f64]) -> f64 {
    let m = ys.len().saturating_sub(1);
    match m {
        0 => 0.0,
        1 => 0.5 * h * (ys[0] + ys[1]),
        _ => {
            let even = if m % 2 == 0 { m } else { m - 3 };
            let mut s = 0.0;
            let mut k = 0;
            while k < even {
                s += h / 3.0 * (ys[k] + 4.0 * ys[k + 1] + ys[k + 2]);
                k += 2;
            }
            if even < m {
                s += 3.0 * h / 8.0 * (ys[k] + 3.0 * ys[k + 1] + 3.0 * ys[k + 2] + ys[k + 3]);
            }
            s
        }
    }
}

/// Second-order finite-difference derivative of uniformly sampled vectors.
pub fn differentiate(h: f64, xs: &[Vector]) -> Vec<Vector> {
    let m = xs.len();
    (0..m)
        .map(|k| match k {
            0 => (&xs[1] * 4.0 - &xs[0] * 3.0 - &xs[2]) / (2.0 * h),
            _ if k == m - 1 => (&xs[k] * 3.0 - &xs[k - 1] * 4.0 + &xs[k - 2]) / (2.0 * h),
            _ => (&xs[k + 1] - &xs[k - 1]) / (2.0 * h),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IndexForm {
    pub value: f64,
    pub integral: f64,
    /// `g(γ̇, X)|x|²` evaluated between the endpoints, plus any explicit
    /// endpoint contributions.
    pub boundary: f64,
}

/// Weighted index form of a variation `x(t) ∈ D⊤` along a geodesic:
///
/// ```text
/// I(x, x) = ∫ |ẋ − g(γ̇,X) x|² − K⊤_X(γ̇, x)|x|² dt + g(γ̇,X)|x|² |_a^b
/// ```
///
/// `coeffs[k]` holds the coefficients of `x(t_k)` in the transported frame,
/// so `ẋ` has coefficients `ċ`. Without `dcoeffs` these are obtained by
/// finite differences.
pub fn index_form(
    w: &WeightedAlmostProduct,
    trace: &GeodesicTrace,
    coeffs: &[Vector],
    dcoeffs: Option<&[Vector]>,
) -> Result<IndexForm> {
    index_form_with_endpoints(w, trace, coeffs, dcoeffs, 0.0)
}

/// [`index_form`] plus explicit endpoint contributions, for variations whose
/// ends move along leaves (second fundamental form terms of the end leaves).
pub fn index_form_with_endpoints(
    w: &WeightedAlmostProduct,
    trace: &GeodesicTrace,
    coeffs: &[Vector],
    dcoeffs: Option<&[Vector]>,
    endpoints: f64,
) -> Result<IndexForm> {
    let m = trace.len();
    if coeffs.len() != m {
        return Err(Error::Dimension { expected: m, got: coeffs.len() });
    }
    if m < 3 {
        return Err(Error::invalid("index form needs at least three nodes"));
    }
    let owned;
    let dc = match dcoeffs {
        Some(d) => {
            if d.len() != m {
                return Err(Error::Dimension { expected: m, got: d.len() });
            }
            d
        }
        None => {
            owned = differentiate(trace.dt, coeffs);
            &owned[..]
        }
    };
    let nu = w.nu() as f64;
    let mut vals = Vec::with_capacity(m);
    let mut edge = [0.0; 2];
    for k in 0..m {
        let pk = w.pack(&trace.points[k])?;
        let f = &trace.frames[k];
        let v = &trace.velocities[k];
        let x = f * &coeffs[k];
        if x.norm() > 0.0 {
            pk.require_top(&x)?;
        }
        let s = pk.inner(v, &pk.x);
        let xx = pk.inner(&x, &x);
        let kin = (&dc[k] - &coeffs[k] * s).norm_squared();
        let curv = pk.geo.riemann_uvwz(&x, v, v, &x) + w_top_with(&pk, v, nu) * xx;
        vals.push(kin - curv);
        if k == 0 {
            edge[0] = s * xx;
        }
        if k == m - 1 {
            edge[1] = s * xx;
        }
    }
    let integral = simpson(trace.dt, &vals);
    let boundary = edge[1] - edge[0] + endpoints;
    Ok(IndexForm { value: integral + boundary, integral, boundary })
}

/// Comparison of a perturbed Jacobi solution with its constant-curvature model.
#[derive(Clone, Debug)]
pub struct JacobiEnvelope {
    pub times: Vec<f64>,
    /// `|u(t)| = |y(t) − ȳ(t)|`.
    pub deviation: Vec<f64>,
    pub bound: Vec<f64>,
    pub holds: bool,
    /// `min (bound − |u|)` over the nodes after `t = 0`, where both vanish.
    pub worst_margin: f64,
    /// Largest sampled `‖R(t) − k id‖`.
    pub perturbation: f64,
}

/// Integrates `ÿ + R(t) y = 0` on `[0, π/√k]` and compares `u = y − ȳ` with
/// `ε₁/(k − (1 − cos √k t) ε₁) · ∫₀ᵗ √k |ȳ(s)| sin(√k (t − s)) ds`.
pub fn jacobi_envelope<F: Fn(f64) -> Mat>(
    k: f64,
    eps1: f64,
    r: F,
    y0: &Vector,
    yd0: &Vector,
    steps: usize,
) -> Result<JacobiEnvelope> {
    if !(k > 0.0) {
        return Err(Error::invalid("k must be positive"));
    }
    if !(eps1 >= 0.0 && eps1 < k / 2.0) {
        return Err(Error::Hypothesis(alloc::format!("need 0 <= eps1 < k/2, got eps1 = {eps1}, k = {k}")));
    }
    let n = y0.len();
    let rk = libm::sqrt(k);
    let t_end = core::f64::consts::PI / rk;
    let steps = steps.max(2);
    let h = t_end / steps as f64;
    let ybar = |t: f64| y0 * libm::cos(rk * t) + yd0 * (libm::sin(rk * t) / rk);
    let mut perturbation = 0.0f64;
    let mut sample = |t: f64| -> Result<Mat> {
        let m = r(t);
        let e = crate::linalg::sym_eigenvalues(&((&m + m.transpose()) * 0.5 - Mat::identity(n, n) * k));
        let nrm = e.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        perturbation = perturbation.max(nrm);
        if nrm > eps1 * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Hypothesis(alloc::format!("|R(t) - k id| = {nrm} exceeds eps1 at t = {t}")));
        }
        Ok(m)
    };
    let mut y = y0.clone();
    let mut yd = yd0.clone();
    let (mut c, mut s) = (0.0, 0.0);
    let mut out = JacobiEnvelope {
        times: alloc::vec![0.0],
        deviation: alloc::vec![0.0],
        bound: alloc::vec![0.0],
        holds: true,
        worst_margin: f64::INFINITY,
        perturbation: 0.0,
    };
    let mut r0 = sample(0.0)?;
    for j in 1..=steps {
        let t = (j - 1) as f64 * h;
        let r1 = sample(t + h / 2.0)?;
        let r2 = sample(t + h)?;
        let (a1, v1) = (yd.clone(), -(&r0 * &y));
        let (a2, v2) = (&yd + &v1 * (h / 2.0), -(&r1 * (&y + &a1 * (h / 2.0))));
        let (a3, v3) = (&yd + &v2 * (h / 2.0), -(&r1 * (&y + &a2 * (h / 2.0))));
        let (a4, v4) = (&yd + &v3 * h, -(&r2 * (&y + &a3 * h)));
        y += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        yd += (v1 + v2 * 2.0 + v3 * 2.0 + v4) * (h / 6.0);
        // cumulative ∫|ȳ| cos(√k s), ∫|ȳ| sin(√k s) by Simpson on the step
        let fc = |u: f64| ybar(u).norm() * libm::cos(rk * u);
        let fs = |u: f64| ybar(u).norm() * libm::sin(rk * u);
        c += h / 6.0 * (fc(t) + 4.0 * fc(t + h / 2.0) + fc(t + h));
        s += h / 6.0 * (fs(t) + 4.0 * fs(t + h / 2.0) + fs(t + h));
        r0 = r2;
        let tn = j as f64 * h;
        let conv = rk * (libm::sin(rk * tn) * c - libm::cos(rk * tn) * s);
        let factor = eps1 / (k - (1.0 - libm::cos(rk * tn)) * eps1);
        let bound = factor * conv;
        let dev = (&y - ybar(tn)).norm();
        let margin = bound - dev;
        out.worst_margin = out.worst_margin.min(margin);
        if dev > bound + 1e-8 {
            out.holds = false;
        }
        out.times.push(tn);
        out.deviation.push(dev);
        out.bound.push(bound);
    }
    out.perturbation = perturbation;
    Ok(out)
}

/// Sampled turbulence of a leaf.
#[derive(Clone, Debug)]
pub struct LeafTurbulence {
    pub value: f64,
    pub antisymmetric_norm: f64,
    pub exact: bool,
    /// Largest `‖h⊤‖` seen; the turbulence is meaningful for totally
    /// geodesic leaves only.
    pub h_top_max: f64,
    pub not_totally_geodesic: bool,
    pub witness_point: Vec<f64>,
    pub witness_direction: Vector,
}

/// `a(L) = sup g(B_x y, z)` over sampled points of a leaf and sampled unit
/// `x ∈ D⊤`; the inner sup over `y ⊥ z` is computed per operator.
pub fn leaf_turbulence(w: &WeightedAlmostProduct, points: &[Vec<f64>], dirs_per_point: usize) -> Result<LeafTurbulence> {
    let mut out: Option<LeafTurbulence> = None;
    let mut h_max = 0.0f64;
    for p in points {
        let pk = w.pack(p)?;
        for c in sphere_directions(pk.nu(), dirs_per_point, 0x6c65_6166) {
            let x = pk.from_top(c.as_slice());
            let cn = pk.co_nullity(&x)?;
            h_max = h_max.max(cn.h_top_norm);
            let t = turbulence_of(&cn.b);
            let better = out.as_ref().is_none_or(|o| t.value > o.value);
            if better {
                out = Some(LeafTurbulence {
                    value: t.value,
                    antisymmetric_norm: t.antisymmetric_norm,
                    exact: t.exact,
                    h_top_max: 0.0,
                    not_totally_geodesic: false,
                    witness_point: pk.geo.point().to_vec(),
                    witness_direction: x,
                });
            }
        }
    }
    let mut out = out.ok_or_else(|| Error::invalid("empty leaf sample"))?;
    out.h_top_max = h_max;
    out.not_totally_geodesic = h_max >= crate::almost_product::TOTALLY_GEODESIC_TOL;
    Ok(out)
}

/// Nodewise `V(t) = |y||ỹ'|` with the slow-variation check.
#[derive(Clone, Debug)]
pub struct VtReport {
    pub v: Vec<f64>,
    pub v_prime: Vec<f64>,
    /// `(½(k₂ − k₁) + ε)|y|²`.
    pub bound: Vec<f64>,
    pub holds: bool,
    pub worst_margin: f64,
    /// First interior local minimum of `|y(t)|`, refined by a parabola.
    pub first_min: Option<f64>,
}

/// Slack allowed for the finite-difference `V′` in [`vt_machinery`].
pub const VT_TOL: f64 = 1e-7;

pub fn vt_machinery(times: &[f64], y: &[Vector], yd: &[Vector], k1: f64, k2: f64, eps: f64) -> Result<VtReport> {
    let m = times.len();
    if y.len() != m || yd.len() != m {
        return Err(Error::Dimension { expected: m, got: y.len().min(yd.len()) });
    }
    if m < 3 {
        return Err(Error::invalid("need at least three nodes"));
    }
    let h = times[1] - times[0];
    // |y|²|y'|² − (y·y')² = (|y| |ỹ'|)²
    let v: Vec<f64> = y
        .iter()
        .zip(yd)
        .map(|(a, b)| {
            let d = a.dot(b);
            libm::sqrt((a.norm_squared() * b.norm_squared() - d * d).max(0.0))
        })
        .collect();
    let rate = 0.5 * (k2 - k1) + eps;
    let mut out = VtReport {
        v_prime: alloc::vec![0.0; m],
        bound: y.iter().map(|a| rate * a.norm_squared()).collect(),
        v,
        holds: true,
        worst_margin: f64::INFINITY,
        first_min: None,
    };
    for k in 1..m - 1 {
        let d = (out.v[k + 1] - out.v[k - 1]) / (2.0 * h);
        out.v_prime[k] = d;
        let margin = out.bound[k] - d.abs();
        out.worst_margin = out.worst_margin.min(margin);
        if margin < -(VT_TOL + 1e-6 * out.bound[k]) {
            out.holds = false;
        }
    }
    let norms: Vec<f64> = y.iter().map(|a| a.norm()).collect();
    for k in 1..m - 1 {
        if norms[k] < norms[k - 1] && norms[k] <= norms[k + 1] {
            let (a, b, c) = (norms[k - 1], norms[k], norms[k + 1]);
            let den = a - 2.0 * b + c;
            let off = if den > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            out.first_min = Some(times[k] + off * h);
            break;
        }
    }
    Ok(out)
}

/// Paired orthonormal bases of two equal-dimensional subspaces.
#[derive(Clone, Debug)]
pub struct AngleBases {
    pub a: Mat,
    pub b: Mat,
    /// Cosines of the principal angles, descending.
    pub cosines: Vec<f64>,
    /// `max |⟨aᵢ, bⱼ⟩|` over `i ≠ j`.
    pub pairing_residual: f64,
}

fn orthonormal_columns(v: &Mat) -> Result<Mat> {
    let svd = v.clone().svd(true, false);
    let sv = &svd.singular_values;
    let top = sv.max();
    if sv.min() <= 1e-10 * top.max(1e-300) {
        return Err(Error::RankDeficient(sv.min()));
    }
    Ok(svd.u.ok_or_else(|| Error::invalid("svd failed"))?)
}

/// Bases `{aᵢ} ⊂ V₁`, `{bᵢ} ⊂ V₂` with `aᵢ ⊥ bⱼ` for `i ≠ j`, from the SVD of
/// the cross-Gram matrix. Subspaces are given by spanning columns.
pub fn extremal_angle_bases(v1: &Mat, v2: &Mat) -> Result<AngleBases> {
    if v1.ncols() != v2.ncols() {
        return Err(Error::Dimension { expected: v1.ncols(), got: v2.ncols() });
    }
    if v1.nrows() != v2.nrows() {
        return Err(Error::Dimension { expected: v1.nrows(), got: v2.nrows() });
    }
    let q1 = orthonormal_columns(v1)?;
    let q2 = orthonormal_columns(v2)?;
    let cross = q1.transpose() * &q2;
    let svd = cross.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::invalid("svd failed"))?;
    let vt = svd.v_t.ok_or_else(|| Error::invalid("svd failed"))?;
    let a = &q1 * u;
    let b = &q2 * vt.transpose();
    let g = a.transpose() * &b;
    let mut res = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j {
                res = res.max(g[(i, j)].abs());
            }
        }
    }
    Ok(AngleBases { a, b, cosines: svd.singular_values.iter().copied().collect(), pairing_residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::almost_product::Distribution;
    use crate::expr::{parse, Expr};
    use crate::linalg::random_orthogonal;
    use crate::manifold::{Coordinate, VectorField};
    use alloc::vec;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};

    fn e(s: &str, d: usize) -> Expr {
        parse(s, d).unwrap()
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

    /// dx0² + u(x0)²(dx1² + dx2²), leaves along x0.
    fn warped() -> WeightedAlmostProduct {
        let u2 = e("exp(0.6*sin(x0))", 3);
        let m = ChartedManifold::diagonal("warped", vec![Coordinate::periodic(2.0 * PI); 3], vec![Expr::Num(1.0), u2.clone(), u2])
            .unwrap();
        WeightedAlmostProduct::unweighted("warped", m, Distribution::coordinate(3, &[0])).unwrap()
    }

    fn sym<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Mat {
        let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * (0.5 * scale)
    }

    #[test]
    fn flat_straight_line() {
        let m = ChartedManifold::diagonal("T2", vec![Coordinate::periodic(2.0 * PI); 2], vec![Expr::Num(1.0); 2]).unwrap();
        let w = WeightedAlmostProduct::unweighted("t", m, Distribution::coordinate(2, &[0])).unwrap();
        let tr = integrate_geodesic(&w, &[0.5, 0.5], &Vector::from_vec(vec![1.0, 0.0]), 3.0, 0.01).unwrap();
        let last = tr.len() - 1;
        assert!((tr.points[last][0] - 3.5).abs() < 1e-12);
        assert!((tr.frames[last].clone() - &tr.frames[0]).norm() < 1e-14);
    }

    #[test]
    fn hopf_fiber_closes() {
        let w = hopf();
        let p = [0.6, 0.3, 1.0];
        let v = Vector::from_vec(vec![0.0, 1.0, 1.0]);
        let tr = integrate_geodesic(&w, &p, &v, 2.0 * PI, 2.0 * PI / 2000.0).unwrap();
        let m = &w.manifold;
        let end = m.reduce(&tr.points[tr.len() - 1]).unwrap();
        let start = m.reduce(&p).unwrap();
        for i in 0..3 {
            let mut d = (end[i] - start[i]).abs();
            d = d.min(2.0 * PI - d);
            assert!(d < 1e-5);
        }
        assert!(tr.frame_defect < 1e-8);
        assert!(tr.tangency_drift < 1e-6);
        assert!(tr.speed_drift < 1e-7);
    }

    #[test]
    fn chart_exit_is_reported() {
        let w = hopf();
        let m = &w.manifold;
        let w2 = WeightedAlmostProduct::unweighted("h", m.clone(), Distribution::coordinate(3, &[0])).unwrap();
        let r = integrate_geodesic(&w2, &[1.2, 0.0, 0.0], &Vector::from_vec(vec![1.0, 0.0, 0.0]), 2.0, 0.01);
        assert!(matches!(r, Err(Error::ChartExit { .. })));
    }

    #[test]
    fn constant_curvature_blow_up() {
        let src = ConstantCurvature { n: 2, k: 1.0, s: 0.0 };
        let tr = riccati_flow(&src, &Mat::zeros(2, 2), RiccatiOptions::new(3.0, 3.0 / 2000.0)).unwrap();
        let t = tr.blow_up.unwrap();
        assert!((t - PI / 2.0).abs() < 1e-4);
        // λ(t) = −tan t at a node before the escape
        let k = 500;
        let lam = tr.b[k][(0, 0)];
        assert!((lam + libm::tan(tr.times[k])).abs() < 1e-8);
        for (k, l0) in [(0.5, -0.3), (2.0, 0.0), (4.0, -2.0)] {
            let src = ConstantCurvature { n: 1, k, s: 0.0 };
            let b0 = Mat::from_element(1, 1, l0);
            let tr = riccati_flow(&src, &b0, RiccatiOptions::new(8.0, 8.0 / 4000.0)).unwrap();
            let want = (PI / 2.0 + libm::atan(l0 / libm::sqrt(k))) / libm::sqrt(k);
            assert!((tr.blow_up.unwrap() - want).abs() < 1e-4, "k={k}");
        }
    }

    #[test]
    fn weighted_escape_time() {
        let (k, s, l0) = (2.0, 0.6, -0.4);
        let src = ConstantCurvature { n: 1, k, s };
        let tr = riccati_flow(&src, &Mat::from_element(1, 1, l0), RiccatiOptions::new(6.0, 0.002)).unwrap();
        assert!((tr.blow_up.unwrap() - scalar_escape_time(k, s, l0).unwrap()).abs() < 1e-4);
        assert!(scalar_escape_time(1.0, 1.0, 0.0).is_none());
    }

    #[test]
    fn flat_riccati_decays() {
        let b = 0.7;
        let src = ConstantCurvature { n: 3, k: 0.0, s: 0.0 };
        let tr = riccati_flow(&src, &(Mat::identity(3, 3) * b), RiccatiOptions::new(20.0, 0.01)).unwrap();
        assert!(tr.blow_up.is_none());
        for (t, m) in tr.times.iter().zip(&tr.b).step_by(97) {
            assert!((m[(1, 1)] - b / (1.0 + b * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn riccati_matches_jacobi() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 3;
        let r0 = sym(n, 0.5, &mut rng);
        let r1 = sym(n, 0.5, &mut rng);
        let src = CurvatureProfile {
            n,
            f: |t: f64| CurvatureSample { r: Mat::identity(n, n) + &r0 * libm::cos(t) + &r1 * libm::sin(2.0 * t), s: 0.0 },
        };
        let b0 = sym(n, 0.3, &mut rng);
        let ric = riccati_flow(&src, &b0, RiccatiOptions::new(1.0, 0.001)).unwrap();
        let jac = jacobi_flow(&src, &Mat::identity(n, n), &b0, 1.0, 0.001).unwrap();
        assert!(ric.max_asymmetry < 1e-6);
        for k in (0..jac.times.len()).step_by(50) {
            let y = &jac.y[k];
            if y.singular_values().min() > 1e-4 {
                let inv = y.clone().try_inverse().unwrap();
                assert!((&jac.ydot[k] * inv - &ric.b[k]).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn jacobi_closed_forms() {
        let src = ConstantCurvature { n: 2, k: 1.0, s: 0.0 };
        let jac = jacobi_flow(&src, &Mat::identity(2, 2), &Mat::zeros(2, 2), PI, PI / 2000.0).unwrap();
        for (t, y) in jac.times.iter().zip(&jac.y) {
            assert!((y - Mat::identity(2, 2) * libm::cos(*t)).norm() < 1e-7);
        }
        let flat = ConstantCurvature { n: 2, k: 0.0, s: 0.0 };
        let y0 = Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let yd0 = Mat::from_row_slice(2, 2, &[0.5, 0.0, -1.0, 0.25]);
        let jac = jacobi_flow(&flat, &y0, &yd0, 2.0, 0.01).unwrap();
        for (t, y) in jac.times.iter().zip(&jac.y) {
            assert!((y - (&y0 + &yd0 * *t)).norm() < 1e-12);
        }
        assert!(jacobi_flow(&flat, &Mat::zeros(2, 1), &Mat::zeros(2, 1), 1.0, 0.1).is_err());
    }

    #[test]
    fn ellipse_area_is_constant() {
        let k = 2.5;
        let src = ConstantCurvature { n: 3, k, s: 0.0 };
        let y0 = Mat::from_column_slice(3, 1, &[1.0, 0.2, -0.3]);
        let yd0 = Mat::from_column_slice(3, 1, &[0.1, 1.5, 0.4]);
        let jac = jacobi_flow(&src, &y0, &yd0, PI / libm::sqrt(k), 1e-3).unwrap();
        let (y, yd) = jac.column(0);
        let area = |a: &Vector, b: &Vector| libm::sqrt(a.norm_squared() * b.norm_squared() - a.dot(b) * a.dot(b));
        let a0 = area(&y[0], &yd[0]);
        for (a, b) in y.iter().zip(&yd) {
            assert!((area(a, b) - a0).abs() < 1e-7);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let src = ConstantCurvature { n: 1, k: 1.0, s: 0.0 };
        let err = |dt: f64| {
            let j = jacobi_flow(&src, &Mat::identity(1, 1), &Mat::zeros(1, 1), 2.0, dt).unwrap();
            (j.y.last().unwrap()[(0, 0)] - libm::cos(2.0)).abs()
        };
        let ratio = err(0.04) / err(0.02);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    fn compare_with_co_nullity(w: &WeightedAlmostProduct, p: &[f64], v: &Vector, t_end: f64) {
        let tr = integrate_geodesic(w, p, v, t_end, t_end / 400.0).unwrap();
        let pk = w.pack(p).unwrap();
        let b0 = pk.co_nullity_in(v, &tr.normal_basis(0)).unwrap().b;
        let src = TraceCurvature { w, trace: &tr, weighted: false };
        let ric = riccati_flow(&src, &b0, RiccatiOptions::new(t_end, t_end / 400.0)).unwrap();
        assert!(ric.blow_up.is_none());
        for k in (0..tr.len()).step_by(40) {
            let pk = w.pack(&tr.points[k]).unwrap();
            let b = pk.co_nullity_in(&tr.velocities[k], &tr.normal_basis(k)).unwrap().b;
            assert!((&b - &ric.b[k]).norm() < 1e-7, "node {k}");
        }
    }

    #[test]
    fn co_nullity_solves_riccati_along_leaves() {
        compare_with_co_nullity(&hopf(), &[0.7, 0.1, 0.2], &Vector::from_vec(vec![0.0, 1.0, 1.0]), 3.0);
        compare_with_co_nullity(&warped(), &[0.3, 1.0, 2.0], &Vector::from_vec(vec![1.0, 0.0, 0.0]), 4.0);
    }

    #[test]
    fn weighted_riccati_shifts_by_drift() {
        let w = warped()
            .with_weight(VectorField::parse("X", &["0.4*cos(x0)", "0.3", "0"], 3).unwrap(), 2.0, 1.0)
            .unwrap();
        let p = [0.3, 1.0, 2.0];
        let v = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let tr = integrate_geodesic(&w, &p, &v, 2.0, 0.01).unwrap();
        let pk = w.pack(&p).unwrap();
        let c = pk.co_nullity_in(&v, &tr.normal_basis(0)).unwrap();
        let plain = riccati_flow(&TraceCurvature { w: &w, trace: &tr, weighted: false }, &c.b, RiccatiOptions::new(2.0, 0.01)).unwrap();
        let wtd = riccati_flow(&TraceCurvature { w: &w, trace: &tr, weighted: true }, &c.weighted, RiccatiOptions::new(2.0, 0.01))
            .unwrap();
        for k in (0..tr.len()).step_by(20) {
            let pk = w.pack(&tr.points[k]).unwrap();
            let s = pk.inner(&pk.x, &tr.velocities[k]) / 2.0;
            assert!((&plain.b[k] - Mat::identity(2, 2) * s - &wtd.b[k]).norm() < 1e-7);
        }
        let (worst, ok) = hypothesis_x1(&w, &tr, 1.0).unwrap();
        assert!(ok && (worst - 0.04 * libm::cos(0.3).powi(2)).abs() < 1e-9);
        // X ≡ 0: the weighted flow is the plain one
        let w0 = warped();
        let tr0 = integrate_geodesic(&w0, &p, &v, 1.0, 0.01).unwrap();
        let a = riccati_flow(&TraceCurvature { w: &w0, trace: &tr0, weighted: false }, &Mat::zeros(2, 2), RiccatiOptions::new(1.0, 0.01))
            .unwrap();
        let b = riccati_flow(&TraceCurvature { w: &w0, trace: &tr0, weighted: true }, &Mat::zeros(2, 2), RiccatiOptions::new(1.0, 0.01))
            .unwrap();
        for (x, y) in a.b.iter().zip(&b.b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn flat_index_form() {
        let m = ChartedManifold::diagonal("T2", vec![Coordinate::periodic(2.0 * PI); 2], vec![Expr::Num(1.0); 2]).unwrap();
        let w = WeightedAlmostProduct::unweighted("t", m, Distribution::coordinate(2, &[0])).unwrap();
        let t_end = 2.0;
        let tr = integrate_geodesic_from(&w, &[0.0, 0.0], &Vector::from_vec(vec![0.0, 1.0]), t_end, 0.001, Direction::Normal)
            .unwrap();
        let c: Vec<Vector> = tr.times.iter().map(|t| Vector::from_vec(vec![libm::sin(PI * t / t_end), 0.0])).collect();
        let dc: Vec<Vector> =
            tr.times.iter().map(|t| Vector::from_vec(vec![PI / t_end * libm::cos(PI * t / t_end), 0.0])).collect();
        let i = index_form(&w, &tr, &c, Some(&dc)).unwrap();
        assert!((i.value - PI * PI / (2.0 * t_end)).abs() < 1e-6);
        let fd = index_form(&w, &tr, &c, None).unwrap();
        assert!((fd.value - i.value).abs() < 1e-5);
        let c3: Vec<Vector> = c.iter().map(|v| v * 3.0).collect();
        let dc3: Vec<Vector> = dc.iter().map(|v| v * 3.0).collect();
        let i3 = index_form(&w, &tr, &c3, Some(&dc3)).unwrap();
        assert!((i3.value - 9.0 * i.value).abs() < 1e-10);
        let bumped = index_form_with_endpoints(&w, &tr, &c, Some(&dc), 0.25).unwrap();
        assert!((bumped.value - i.value - 0.25).abs() < 1e-14);
    }

    #[test]
    fn index_form_is_second_variation_on_the_sphere() {
        // meridian of the unit sphere, varied along the parallels by f(t)
        let m = ChartedManifold::diagonal(
            "S2",
            vec![Coordinate::interval(0.0, PI), Coordinate::periodic(2.0 * PI)],
            vec![Expr::Num(1.0), e("sin(x0)^2", 2)],
        )
        .unwrap();
        let w = WeightedAlmostProduct::unweighted("s2", m, Distribution::coordinate(2, &[1])).unwrap();
        let (th0, ph0, t_end) = (0.4, 0.3, 2.0);
        let tr = integrate_geodesic_from(&w, &[th0, ph0], &Vector::from_vec(vec![1.0, 0.0]), t_end, 0.002, Direction::Normal)
            .unwrap();
        let f = |t: f64| libm::sin(PI * t / t_end) + 0.3 * libm::sin(2.0 * PI * t / t_end);
        let df = |t: f64| PI / t_end * libm::cos(PI * t / t_end) + 0.6 * PI / t_end * libm::cos(2.0 * PI * t / t_end);
        let c: Vec<Vector> = tr.times.iter().map(|&t| Vector::from_vec(vec![f(t), 0.0])).collect();
        let dc: Vec<Vector> = tr.times.iter().map(|&t| Vector::from_vec(vec![df(t), 0.0])).collect();
        let i = index_form(&w, &tr, &c, Some(&dc)).unwrap();
        // energy of s ↦ exp_γ(t)(s f(t) e) computed on embedded curves in ℝ³
        let curve = |s: f64, t: f64| {
            let th = th0 + t;
            let p = [libm::sin(th) * libm::cos(ph0), libm::sin(th) * libm::sin(ph0), libm::cos(th)];
            let ev = [-libm::sin(ph0), libm::cos(ph0), 0.0];
            let a = s * f(t);
            [0, 1, 2].map(|k| libm::cos(a) * p[k] + libm::sin(a) * ev[k])
        };
        let energy = |s: f64| {
            let n = 4000;
            let h = t_end / n as f64;
            let vals: Vec<f64> = (0..=n)
                .map(|j| {
                    let t = j as f64 * h;
                    let d = 1e-5;
                    let (a, b) = (curve(s, (t - d).max(0.0)), curve(s, (t + d).min(t_end)));
                    let span = (t + d).min(t_end) - (t - d).max(0.0);
                    0.5 * (0..3).map(|k| ((b[k] - a[k]) / span).powi(2)).sum::<f64>()
                })
                .collect();
            simpson(h, &vals)
        };
        let ds = 1e-3;
        let second = (energy(ds) - 2.0 * energy(0.0) + energy(-ds)) / (ds * ds);
        assert!((second - i.value).abs() < 1e-4, "{second} vs {}", i.value);
    }

    #[test]
    fn envelope_trivial_and_sinusoidal() {
        let y0 = Vector::from_vec(vec![1.0, 0.0]);
        let yd0 = Vector::from_vec(vec![0.0, 0.5]);
        let r = jacobi_envelope(1.0, 0.0, |_| Mat::identity(2, 2), &y0, &yd0, 1000).unwrap();
        assert!(r.deviation.iter().all(|d| *d < 1e-9) && r.bound.iter().all(|b| *b == 0.0));
        let r = jacobi_envelope(1.0, 0.3, |t| Mat::identity(2, 2) * (1.0 + 0.3 * libm::sin(t)), &y0, &yd0, 2000).unwrap();
        assert!(r.holds);
        assert!(r.deviation.iter().any(|d| *d > 1e-3));
        assert!(jacobi_envelope(1.0, 0.5, |_| Mat::identity(2, 2), &y0, &yd0, 10).is_err());
        assert!(jacobi_envelope(1.0, 0.1, |_| Mat::identity(2, 2) * 1.2, &y0, &yd0, 10).is_err());
    }

    #[test]
    fn envelope_random_perturbations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(47);
        for _ in 0..100 {
            let n = rng.random_range(1..=4usize);
            let k = rng.random_range(0.5..3.0);
            let eps1 = rng.random_range(0.0..0.49) * k;
            let (a, b) = (sym(n, 1.0, &mut rng), sym(n, 1.0, &mut rng));
            let omega = rng.random_range(0.2..3.0);
            let scale = {
                let na = a.norm().max(1e-12);
                let nb = b.norm().max(1e-12);
                eps1 / (na + nb)
            };
            let r = |t: f64| Mat::identity(n, n) * k + (&a * libm::cos(omega * t) + &b * libm::sin(omega * t)) * scale;
            let y0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let yd0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let rep = jacobi_envelope(k, eps1, r, &y0, &yd0, 800).unwrap();
            assert!(rep.holds, "margin {}", rep.worst_margin);
        }
    }

    #[test]
    fn leaf_turbulence_values() {
        let h = hopf();
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![0.3 + 0.2 * i as f64, 0.1 * i as f64, 0.5]).collect();
        let t = leaf_turbulence(&h, &pts, 4).unwrap();
        assert!((t.value - 1.0).abs() < 1e-3);
        assert!(!t.not_totally_geodesic);
        let m = ChartedManifold::diagonal("T3", vec![Coordinate::periodic(2.0 * PI); 3], vec![Expr::Num(1.0); 3]).unwrap();
        let flat = WeightedAlmostProduct::unweighted("f", m, Distribution::coordinate(3, &[0])).unwrap();
        assert_eq!(leaf_turbulence(&flat, &pts, 4).unwrap().value, 0.0);
    }

    /// `max g(B y, z)` over orthonormal pairs: random pairs, then a
    /// shrinking random search on the best pair's first vector (for fixed
    /// `y` the best `z` is the normalised component of `By` orthogonal to `y`).
    fn brute_force_pairs<R: Rng>(b: &Mat, rng: &mut R) -> f64 {
        let n = b.nrows();
        let pair = |y: &Vector| {
            let by = b * y;
            let rest = &by - y * by.dot(y);
            let nz = rest.norm();
            if nz == 0.0 { 0.0 } else { (&rest / nz).dot(&by) }
        };
        let mut best = (f64::NEG_INFINITY, Vector::zeros(n));
        for _ in 0..10_000 {
            let q = random_orthogonal(n, rng);
            let (y, z) = (q.column(0).into_owned(), q.column(1).into_owned());
            let v = z.dot(&(b * &y));
            if v > best.0 {
                best = (v, y);
            }
        }
        let (mut fy, mut y) = (pair(&best.1), best.1);
        let mut step = 0.1;
        let mut fails = 0;
        while step > 1e-9 {
            let cand = (&y + Vector::from_fn(n, |_, _| crate::linalg::gaussian(rng)) * step).normalize();
            let fc = pair(&cand);
            if fc > fy {
                y = cand;
                fy = fc;
                fails = 0;
            } else {
                fails += 1;
                if fails > 40 {
                    step *= 0.5;
                    fails = 0;
                }
            }
        }
        fy.max(best.0)
    }

    #[test]
    fn turbulence_matches_brute_force_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for n in [2usize, 2, 3, 3, 4, 4] {
            let b = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let t = turbulence_of(&b);
            let best = brute_force_pairs(&b, &mut rng);
            assert!((t.value - best).abs() < 1e-6, "n={n}: {} vs {best}", t.value);
            assert!(t.antisymmetric_norm <= t.value + 1e-12);
        }
    }

    #[test]
    fn vt_constant_and_perturbed() {
        let k = 1.5;
        let src = ConstantCurvature { n: 2, k, s: 0.0 };
        let y0 = Mat::from_column_slice(2, 1, &[1.0, 0.0]);
        let yd0 = Mat::from_column_slice(2, 1, &[0.3, 0.9]);
        let jac = jacobi_flow(&src, &y0, &yd0, PI / libm::sqrt(k), 1e-3).unwrap();
        let (y, yd) = jac.column(0);
        let rep = vt_machinery(&jac.times, &y, &yd, k, k, 0.0).unwrap();
        assert!(rep.holds);
        assert!(rep.v.iter().all(|v| (v - rep.v[0]).abs() < 1e-9));
        assert!(rep.first_min.is_some());
        // y(0) ⊥ y'(0)
        let yd0 = Mat::from_column_slice(2, 1, &[0.0, 0.7]);
        let jac = jacobi_flow(&src, &y0, &yd0, 1.0, 1e-3).unwrap();
        let (y, yd) = jac.column(0);
        let rep = vt_machinery(&jac.times, &y, &yd, k, k, 0.0).unwrap();
        assert!((rep.v[0] - 0.7).abs() < 1e-10);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(24);
        for _ in 0..50 {
            let n = rng.random_range(2..=3usize);
            let (k1, k2) = (rng.random_range(0.5..1.0), rng.random_range(1.0..2.0));
            let (a, b) = (sym(n, 1.0, &mut rng), sym(n, 1.0, &mut rng));
            let w = rng.random_range(0.5..2.0);
            let mid = 0.5 * (k1 + k2);
            let half = 0.5 * (k2 - k1);
            let src = CurvatureProfile {
                n,
                f: move |t: f64| {
                    let p = &a * libm::cos(w * t) + &b * libm::sin(w * t);
                    let ev = crate::linalg::sym_eigenvalues(&p);
                    let sc = ev.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
                    CurvatureSample { r: Mat::identity(n, n) * mid + p * (half / sc), s: 0.0 }
                },
            };
            let y0 = Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
            let yd0 = Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
            let jac = jacobi_flow(&src, &y0, &yd0, PI / libm::sqrt(mid), 1e-3).unwrap();
            let (y, yd) = jac.column(0);
            assert!(vt_machinery(&jac.times, &y, &yd, k1, k2, 0.0).unwrap().holds);
        }
    }

    #[test]
    fn angle_bases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v = Mat::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let same = extremal_angle_bases(&v, &v).unwrap();
        assert!(same.cosines.iter().all(|c| (c - 1.0).abs() < 1e-10));
        for _ in 0..20 {
            let a = Mat::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
            let b = Mat::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
            let r = extremal_angle_bases(&a, &b).unwrap();
            assert!(r.pairing_residual < 1e-10);
            assert!((r.a.transpose() * &r.a - Mat::identity(2, 2)).norm() < 1e-10);
        }
        let e1 = Mat::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let e2 = Mat::from_column_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let r = extremal_angle_bases(&e1, &e2).unwrap();
        assert!(r.cosines.iter().all(|c| c.abs() < 1e-12));
        assert!(extremal_angle_bases(&e1, &Mat::zeros(4, 3)).is_err());
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        for m in [2usize, 3, 6, 7] {
            let ys: Vec<f64> = (0..=m).map(|k| (k as f64 * h).powi(3)).collect();
            let want = (m as f64 * h).powi(4) / 4.0;
            assert!((simpson(h, &ys) - want).abs() < 1e-14);
        }
    }
}
