//! Built-in example structures with known ground truth.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};

use crate::almost_product::{Distribution, WeightedAlmostProduct};
use crate::error::Error;
use crate::expr::{parse, Expr};
use crate::jet::Jet2;
use crate::linalg::Vector;
use crate::manifold::{ChartedManifold, Coordinate, VectorField};
use crate::Result;

/// Distance kept from finite chart endpoints when sampling.
pub const EXCLUSION: f64 = 1e-2;

/// Facts known in closed form for a gallery item.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct KnownFacts {
    /// Constant mixed sectional curvature.
    pub mixed_sectional: Option<f64>,
    /// Constant `S_mix`.
    pub s_mix: Option<f64>,
    /// Turbulence of every leaf.
    pub turbulence: Option<f64>,
    pub integrable_top: bool,
    pub totally_geodesic_top: bool,
    /// Both distributions totally umbilical.
    pub umbilic: bool,
    /// `H⊤ = 0` and `X ∈ D⊤`, so the leafwise integral formula applies.
    pub leafwise_formula: bool,
}

/// Warping data of `g = v² δ⊤ ⊕ u² δ⊥` (first `ν` coordinates in `D⊤`).
#[derive(Clone, Debug)]
pub struct Twisted {
    pub nu: usize,
    pub n: usize,
    pub u: Expr,
    pub v: Expr,
}

/// Closed forms of the doubly-twisted extrinsic geometry at a point:
/// `h⊤ = −∇⊥(log v) g⊤`, `h⊥ = −∇⊤(log u) g⊥`, `H⊤ = −ν∇⊥(log v)`,
/// `H⊥ = −n∇⊤(log u)` (coordinate components).
#[derive(Clone, Debug)]
pub struct TwistedForms {
    pub h_top: Vector,
    pub h_perp: Vector,
    pub mean_top: Vector,
    pub mean_perp: Vector,
}

impl Twisted {
    pub fn forms(&self, p: &[f64]) -> Result<TwistedForms> {
        let d = self.nu + self.n;
        let seeds = Jet2::seed(p);
        let u = self.u.eval(&seeds)?;
        let v = self.v.eval(&seeds)?;
        let (uu, vv) = (u.val() * u.val(), v.val() * v.val());
        // gradient of log w: g^{ii} ∂_i w / w
        let h_top = Vector::from_fn(d, |i, _| if i < self.nu { 0.0 } else { -v.d(i) / v.val() / uu });
        let h_perp = Vector::from_fn(d, |i, _| if i < self.nu { -u.d(i) / u.val() / vv } else { 0.0 });
        Ok(TwistedForms {
            mean_top: &h_top * self.nu as f64,
            mean_perp: &h_perp * self.n as f64,
            h_top,
            h_perp,
        })
    }
}

#[derive(Clone, Debug)]
pub struct GalleryItem {
    pub name: String,
    pub description: String,
    pub structure: WeightedAlmostProduct,
    pub facts: KnownFacts,
    pub twisted: Option<Twisted>,
}

impl GalleryItem {
    /// Uniform samples in the chart box, `EXCLUSION` away from finite ends.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        sample_points(&self.structure.manifold, count, seed)
    }
}

pub fn sample_points(m: &ChartedManifold, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            m.coordinates()
                .iter()
                .map(|c| match *c {
                    Coordinate::Periodic { period } => rng.random_range(0.0..period),
                    Coordinate::Interval { lo, hi } => {
                        let (a, b) = (
                            if lo.is_finite() { lo + EXCLUSION } else { -10.0 },
                            if hi.is_finite() { hi - EXCLUSION } else { 10.0 },
                        );
                        rng.random_range(a..b)
                    }
                })
                .collect()
        })
        .collect()
}

fn ex(s: &str, d: usize) -> Result<Expr> {
    parse(s, d).map_err(|e| Error::parse(s, e))
}

fn torus(d: usize) -> Vec<Coordinate> {
    alloc::vec![Coordinate::periodic(2.0 * PI); d]
}

/// Flat `T^d` with `D⊤ = span(∂_0..∂_{ν−1})`.
pub fn flat_torus(d: usize, nu: usize) -> Result<GalleryItem> {
    check_split(d, nu)?;
    let m = ChartedManifold::diagonal("flat_torus", torus(d), alloc::vec![Expr::Num(1.0); d])?;
    let idx: Vec<usize> = (0..nu).collect();
    Ok(GalleryItem {
        name: "flat_torus".into(),
        description: alloc::format!("flat T^{d}, coordinate split {nu}+{}", d - nu),
        structure: WeightedAlmostProduct::unweighted("flat_torus", m, Distribution::coordinate(d, &idx))?,
        facts: KnownFacts {
            mixed_sectional: Some(0.0),
            s_mix: Some(0.0),
            turbulence: Some(0.0),
            integrable_top: true,
            totally_geodesic_top: true,
            umbilic: true,
            leafwise_formula: true,
        },
        twisted: None,
    })
}

fn check_split(d: usize, nu: usize) -> Result<()> {
    if nu == 0 || nu >= d || d > crate::jet::MAX_DIM {
        return Err(Error::invalid(alloc::format!("need 1 <= nu < d <= {}", crate::jet::MAX_DIM)));
    }
    Ok(())
}

/// `g = e^{2φ} δ` on `T^d`, coordinate split.
pub fn conformal_torus(d: usize, nu: usize, phi: &str) -> Result<GalleryItem> {
    check_split(d, nu)?;
    let phi_e = ex(phi, d)?;
    let conf = ex(&alloc::format!("exp(2*({phi_e}))"), d)?;
    let m = ChartedManifold::diagonal("conformal_torus", torus(d), alloc::vec![conf; d])?;
    let idx: Vec<usize> = (0..nu).collect();
    Ok(GalleryItem {
        name: "conformal_torus".into(),
        description: alloc::format!("T^{d} with metric exp(2 phi) delta, phi = {phi_e}, split {nu}+{}", d - nu),
        structure: WeightedAlmostProduct::unweighted("conformal_torus", m, Distribution::coordinate(d, &idx))?,
        facts: KnownFacts { integrable_top: true, umbilic: true, ..KnownFacts::default() },
        twisted: None,
    })
}

/// `g = v² δ⊤ ⊕ u² δ⊥` on `T^{ν+n}`.
pub fn doubly_twisted_torus(nu: usize, n: usize, u: &str, v: &str) -> Result<GalleryItem> {
    let d = nu + n;
    check_split(d, nu)?;
    let (ue, ve) = (ex(u, d)?, ex(v, d)?);
    let mut diag = Vec::with_capacity(d);
    for i in 0..d {
        let w = if i < nu { &ve } else { &ue };
        diag.push(ex(&alloc::format!("({w})^2"), d)?);
    }
    let m = ChartedManifold::diagonal("doubly_twisted_torus", torus(d), diag)?;
    let idx: Vec<usize> = (0..nu).collect();
    // v independent of the D⊥ coordinates makes D⊤ totally geodesic
    let v_top_only = (nu..d).all(|i| !mentions(&ve, i));
    Ok(GalleryItem {
        name: "doubly_twisted_torus".into(),
        description: alloc::format!("T^{d}, g = v^2 delta_top + u^2 delta_perp, u = {ue}, v = {ve}"),
        structure: WeightedAlmostProduct::unweighted("doubly_twisted_torus", m, Distribution::coordinate(d, &idx))?,
        facts: KnownFacts {
            integrable_top: true,
            umbilic: true,
            totally_geodesic_top: v_top_only,
            leafwise_formula: v_top_only,
            ..KnownFacts::default()
        },
        twisted: Some(Twisted { nu, n, u: ue, v: ve }),
    })
}

fn mentions(e: &Expr, i: usize) -> bool {
    match e {
        Expr::Num(_) => false,
        Expr::Coord(j) => *j == i,
        Expr::Neg(a) => mentions(a, i),
        Expr::Bin(_, a, b) => mentions(a, i) || mentions(b, i),
        Expr::Call(_, a) => mentions(a, i),
    }
}

/// Unit `S³` in the chart `(η, ξ₁, ξ₂) ↦ (sin η e^{iξ₁}, cos η e^{iξ₂})`,
/// `g = dη² + sin²η dξ₁² + cos²η dξ₂²`, with `D⊤` spanned by the Hopf field
/// `∂_{ξ₁} + ∂_{ξ₂}`.
pub fn hopf_s3() -> Result<GalleryItem> {
    let m = ChartedManifold::diagonal(
        "hopf_s3",
        alloc::vec![Coordinate::interval(0.0, PI / 2.0), Coordinate::periodic(2.0 * PI), Coordinate::periodic(2.0 * PI)],
        alloc::vec![Expr::Num(1.0), ex("sin(x0)^2", 3)?, ex("cos(x0)^2", 3)?],
    )?;
    let fiber = VectorField::parse("hopf", &["0", "1", "1"], 3)?;
    Ok(GalleryItem {
        name: "hopf_s3".into(),
        description: "unit S^3 with the Hopf fibration, chart minus the polar circles".into(),
        structure: WeightedAlmostProduct::unweighted("hopf_s3", m, Distribution::new(alloc::vec![fiber]))?,
        facts: KnownFacts {
            mixed_sectional: Some(1.0),
            s_mix: Some(2.0),
            turbulence: Some(1.0),
            integrable_top: true,
            totally_geodesic_top: true,
            umbilic: false,
            leafwise_formula: false,
        },
        twisted: None,
    })
}

/// Hopf fibration with the Killing weight `X = c (∂_{ξ₁} + ∂_{ξ₂})`; the
/// weighted Jacobi operator is `(1 + c²/4) id` along the fibres.
pub fn weighted_hopf_s3(c: f64) -> Result<GalleryItem> {
    let mut it = hopf_s3()?;
    let x = VectorField::new("killing", alloc::vec![Expr::Num(0.0), Expr::Num(c), Expr::Num(c)]);
    it.structure = it.structure.with_weight(x, 2.0, 1.0)?;
    it.structure.label = "weighted_hopf_s3".into();
    it.name = "weighted_hopf_s3".into();
    it.description = alloc::format!("Hopf S^3 with Killing weight X = {c} * Hopf field");
    it.facts.mixed_sectional = None;
    it.facts.s_mix = None;
    Ok(it)
}

/// Conformally flat `T³` with the contact-type distribution
/// `D⊤ = span(∂_0, ∂_1 + ½ sin x₀ ∂_2)`, which is not integrable.
pub fn contact_torus() -> Result<GalleryItem> {
    let conf = ex("exp(2*(0.2*sin(x1) + 0.15*cos(x0 + x2)))", 3)?;
    let m = ChartedManifold::diagonal("contact_torus", torus(3), alloc::vec![conf; 3])?;
    let s0 = VectorField::parse("e0", &["1", "0", "0"], 3)?;
    let s1 = VectorField::parse("e1", &["0", "1", "0.5*sin(x0)"], 3)?;
    Ok(GalleryItem {
        name: "contact_torus".into(),
        description: "conformally flat T^3 with a non-integrable 2-plane field".into(),
        structure: WeightedAlmostProduct::unweighted("contact_torus", m, Distribution::new(alloc::vec![s0, s1]))?,
        facts: KnownFacts::default(),
        twisted: None,
    })
}

fn weighted(mut it: GalleryItem, name: &str, x: &[&str], big_n: f64, cal_n: f64) -> Result<GalleryItem> {
    let d = it.structure.dim();
    let field = VectorField::parse("X", x, d)?;
    let tangent = (it.structure.nu()..d).all(|i| field.components[i].is_zero());
    it.structure = it.structure.with_weight(field, big_n, cal_n)?;
    it.structure.label = name.to_string();
    it.name = name.to_string();
    it.description = alloc::format!("{} with weight X = ({})", it.description, x.join(", "));
    it.facts.leafwise_formula &= tangent;
    it.facts.mixed_sectional = None;
    it.facts.s_mix = None;
    Ok(it)
}

pub const CONFORMAL_PHI: &str = "0.3*sin(x0)*cos(x2) + 0.2*cos(x1)";
pub const TWISTED_U: &str = "exp(0.2*sin(x0) + 0.1*cos(x1 + x2))";
pub const TWISTED_V: &str = "exp(0.15*cos(x2) + 0.1*sin(x0 - x1))";

/// Catalog names, in listing order.
pub const CATALOG: &[&str] = &[
    "flat_torus",
    "conformal_torus",
    "doubly_twisted_torus",
    "hopf_s3",
    "contact_torus",
    "weighted_conformal_torus",
    "weighted_twisted_torus",
    "harmonic_twisted_torus",
    "weighted_hopf_s3",
];

/// A catalog item with its default parameters.
pub fn builtin(name: &str) -> Result<GalleryItem> {
    match name {
        "flat_torus" => flat_torus(3, 1),
        "conformal_torus" => conformal_torus(3, 1, CONFORMAL_PHI),
        "doubly_twisted_torus" => doubly_twisted_torus(2, 1, TWISTED_U, TWISTED_V),
        "hopf_s3" => hopf_s3(),
        "contact_torus" => contact_torus(),
        "weighted_conformal_torus" => weighted(
            conformal_torus(3, 1, CONFORMAL_PHI)?,
            "weighted_conformal_torus",
            &["0.4*sin(x1)", "0.3*cos(x0 + x2)", "0.2*sin(x2) - 0.1*cos(x0)"],
            3.0,
            -2.0,
        ),
        "weighted_twisted_torus" => weighted(
            doubly_twisted_torus(2, 1, TWISTED_U, TWISTED_V)?,
            "weighted_twisted_torus",
            &["0.3*cos(x2)", "0.2*sin(x0)", "0.25*sin(x1 + x2)"],
            -1.5,
            2.5,
        ),
        "harmonic_twisted_torus" => weighted(
            doubly_twisted_torus(2, 1, TWISTED_U, "exp(0.2*cos(x0) + 0.1*sin(x1))")?,
            "harmonic_twisted_torus",
            &["0.3*cos(x2) + 0.1*sin(x1)", "0.2*sin(x0 + x2)", "0"],
            -2.0,
            1.5,
        ),
        "weighted_hopf_s3" => weighted_hopf_s3(0.2),
        other => Err(Error::UnknownItem(other.to_string())),
    }
}

/// The Hopf chart point in `ℂ² ≅ ℝ⁴`.
pub fn hopf_embedding(p: &[f64]) -> [f64; 4] {
    let (s, c) = (libm::sin(p[0]), libm::cos(p[0]));
    [s * libm::cos(p[1]), s * libm::sin(p[1]), c * libm::cos(p[2]), c * libm::sin(p[2])]
}

/// Distance between the Hopf fibres through two embedded points:
/// `arccos |⟨p, q⟩_ℂ|`.
pub fn hopf_fiber_distance(p: &[f64; 4], q: &[f64; 4]) -> f64 {
    // ⟨p, q⟩_ℂ = Σ p_k conj(q_k)
    let re = p[0] * q[0] + p[1] * q[1] + p[2] * q[2] + p[3] * q[3];
    let im = p[1] * q[0] - p[0] * q[1] + p[3] * q[2] - p[2] * q[3];
    libm::acos(libm::sqrt(re * re + im * im).min(1.0))
}
