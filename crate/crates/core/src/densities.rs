//! Local heat invariants of twisted operators on flat models, pointwise and
//! integrated.

use crate::error::{Error, Result};
use crate::laplace::{a0, a2, a4, canonicalize, dolbeault_a2, twisted_de_rham_coefficients};
use crate::models::{integrate, ModelManifold, TwistForm};
use crate::tensor::{CurvaturePack, MetricJet};
use crate::trig::TrigPoly;

/// Jet order of the twist used for densities up to `a_4`.
const JET_ORDER: usize = 5;

/// `a_n(x, Δ_Θ^p)` for `n ∈ {0, 2, 4}` on the flat torus carrying `twist`.
pub fn de_rham_density(twist: &TwistForm, p: usize, n: usize, x: &[f64]) -> Result<f64> {
    let m = twist.dim();
    let op = twisted_de_rham_coefficients(&twist.jets(x, JET_ORDER), p)?;
    let jet = MetricJet::euclidean(m, 4);
    let can = canonicalize(&op, &jet)?;
    let flat = CurvaturePack::flat(m);
    match n {
        0 => Ok(a0(&can)),
        2 => a2(&can, &flat),
        4 => a4(&can, &flat),
        _ => Err(Error::Unsupported(format!("interior invariant a_{n}: only n = 0, 2, 4 are available"))),
    }
}

/// `Σ_p (−1)^p a_n(x, Δ_Θ^p)`.
pub fn de_rham_super_density(twist: &TwistForm, n: usize, x: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for p in 0..=twist.dim() {
        let v = de_rham_density(twist, p, n, x)?;
        s += if p % 2 == 0 { v } else { -v };
    }
    Ok(s)
}

/// Trapezoid nodes per axis integrating the densities of a bandwidth-`b` twist exactly.
pub fn exact_nodes(bandwidth: usize) -> usize {
    (6 * bandwidth + 8).max(16)
}

fn torus_model(periods: &[f64], bandwidth: usize) -> Result<ModelManifold> {
    let model = if periods.len() == 1 {
        ModelManifold::circle(periods[0])
    } else {
        ModelManifold::flat_torus(periods.to_vec())
    };
    model.with_nodes(vec![exact_nodes(bandwidth); periods.len()])
}

/// `∫ a_n(Δ_Θ^p)` (`degree = Some(p)`) or the supertraced integral (`None`).
pub fn integrated_de_rham(twist: &TwistForm, degree: Option<usize>, n: usize) -> Result<f64> {
    let model = torus_model(twist.periods(), twist.bandwidth())?;
    match degree {
        Some(p) => integrate(&model, &|x| de_rham_density(twist, p, n, x)),
        None => integrate(&model, &|x| de_rham_super_density(twist, n, x)),
    }
}

/// Supertraced `a_2` density of the twisted Dolbeault complex on the unit square torus.
pub fn dolbeault_density(theta: &TrigPoly, x: &[f64]) -> Result<f64> {
    dolbeault_a2(&CurvaturePack::flat(2), &MetricJet::euclidean(2, 2), &theta.jet(x, 2))
}

pub fn integrated_dolbeault(theta: &TrigPoly) -> Result<f64> {
    let model = ModelManifold::complex_torus().with_nodes(vec![exact_nodes(theta.bandwidth()); 2])?;
    integrate(&model, &|x| dolbeault_density(theta, x))
}
