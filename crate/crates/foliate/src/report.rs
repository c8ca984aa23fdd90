//! Pointwise curvature report.

use serde::Serialize;

use foliate_core::almost_product::{turbulence_of, Norms, WeightedAlmostProduct};
use foliate_core::linalg::sym_eigenvalues;
use foliate_core::weighted::{mixed_scalar, weighted_jacobi_perp, weighted_jacobi_top, MixedScalar};

use crate::error::CliResult;

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub label: String,
    pub point: Vec<f64>,
    pub dim: usize,
    pub nu: usize,
    pub n: usize,
    pub big_n: f64,
    pub cal_n: f64,
    pub christoffel_max: f64,
    pub metric_symmetry_residual: f64,
    pub distribution_condition: f64,
    pub scalar_curvature: f64,
    /// `K(E_a, ℰ_i)` over the adapted frame, row per `E_a`.
    pub mixed_sectional: Vec<Vec<f64>>,
    pub mixed_scalar: MixedScalar,
    pub norms: Norms,
    /// Spectrum of `R⊥_{X,E_a}` on `D⊥` for each `E_a`.
    pub jacobi_perp_spectra: Vec<Vec<f64>>,
    /// Spectrum of `R⊤_{X,ℰ_i}` on `D⊤` for each `ℰ_i`.
    pub jacobi_top_spectra: Vec<Vec<f64>>,
    /// Largest pointwise turbulence `sup g(B_x y, z)` over `x = E_a`.
    pub turbulence: f64,
    pub h_top_norm: f64,
}

pub fn curvature_report(w: &WeightedAlmostProduct, p: &[f64]) -> CliResult<CurvatureReport> {
    let q = w.manifold.reduce(p)?;
    let pk = w.pack(&q)?;
    let d = pk.dim();
    let mut gmax = 0.0f64;
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                gmax = gmax.max(pk.geo.christoffel(k, i, j).abs());
            }
        }
    }
    let mut scal = 0.0;
    let ginv = pk.geo.ginv();
    for i in 0..d {
        for j in 0..d {
            let e = |k: usize| foliate_core::linalg::Vector::from_fn(d, |r, _| if r == k { 1.0 } else { 0.0 });
            scal += ginv[(i, j)] * pk.geo.ricci(&e(i), &e(j));
        }
    }
    let top = pk.top_basis();
    let perp = pk.perp_basis();
    let mut sect = Vec::new();
    let mut jp = Vec::new();
    let mut turbulence = 0.0f64;
    let mut h_top_norm = 0.0f64;
    for x in &top {
        let row = perp.iter().map(|y| pk.geo.sectional(x, y)).collect::<Result<Vec<_>, _>>()?;
        sect.push(row);
        jp.push(sym_eigenvalues(&weighted_jacobi_perp(&pk, x)?));
        let cn = pk.co_nullity(x)?;
        turbulence = turbulence.max(turbulence_of(&cn.b).value);
        h_top_norm = cn.h_top_norm;
    }
    let jt = perp.iter().map(|y| weighted_jacobi_top(&pk, y).map(|m| sym_eigenvalues(&m))).collect::<Result<Vec<_>, _>>()?;
    Ok(CurvatureReport {
        label: w.label.clone(),
        point: q.clone(),
        dim: d,
        nu: pk.nu(),
        n: pk.n(),
        big_n: w.big_n,
        cal_n: w.cal_n,
        christoffel_max: gmax,
        metric_symmetry_residual: w.manifold.symmetry_residual(&q)?,
        distribution_condition: pk.condition,
        scalar_curvature: scal,
        mixed_sectional: sect,
        mixed_scalar: mixed_scalar(&pk),
        norms: pk.norms(),
        jacobi_perp_spectra: jp,
        jacobi_top_spectra: jt,
        turbulence,
        h_top_norm,
    })
}
