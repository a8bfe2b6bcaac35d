//! The end-to-end verification suite: each check assembles, solves and
//! compares against an independent closed form or structural identity.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::complexes::{
    assemble_circle, assemble_dolbeault_torus, assemble_interval, assemble_torus, product_complex, BoundaryFlavor,
};
use crate::densities::{de_rham_super_density, integrated_de_rham, integrated_dolbeault};
use crate::error::Result;
use crate::invariance::{enumerate_brute_force, enumerate_monomials, kernel_scan, JetContext};
use crate::laplace::{boundary_a, canonicalize, euler_form, twisted_de_rham_coefficients, BoundaryData};
use crate::models::{integrate, integrate_boundary, ModelManifold, TwistForm};
use crate::spectral::{eigensolve, fit_spectrum, geometric_grid, FitOptions, SpectrumSet, TraceSelection};
use crate::tensor::{curvature, CurvaturePack, MetricJet};
use crate::trig::TrigPoly;

const TAU: f64 = 2.0 * PI;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub tolerance: &'static str,
    pub measured: Value,
    pub error: Option<String>,
    pub seconds: f64,
}

type Check = fn() -> Result<(bool, Value)>;

/// `(id, name, tolerance, check)` for every criterion.
pub const CRITERIA: [(usize, &str, &str, Check); 10] = [
    (1, "interval index", "supertrace = -1 (relative), +1 (absolute) within 1e-10", interval_index),
    (2, "Gauss-Bonnet quadrature", "S^2: 2 within 1e-8; S^4: 2 within 1e-6", gauss_bonnet),
    (3, "interval boundary coefficients", "(c0..c3) within 1e-5; c1 equals integrated a0bd", interval_coefficients),
    (
        4,
        "supertrace coefficients below top order",
        "|c_n| < 1e-5 (n < m), c_m = 0 within 1e-4",
        supertrace_coefficients,
    ),
    (
        5,
        "twist dependence of a4",
        "c4 vs integrated a4 within 1%; > 100 sigma from 0; integral < 1e-12",
        twist_dependence,
    ),
    (6, "twisted Betti numbers on T^2", "(1,2,1) and (0,0,0), gap ratio >= 100", torus_betti),
    (7, "gauge and duality", "kernels invariant; beta_p = beta_{2-p}(-Θ); spectra within 1e-8", gauge_and_duality),
    (8, "product complexes", "spectra within 1e-9; traces multiply within 1e-10", products),
    (9, "Dolbeault index", "index 0; nonzero spectra within 1e-9; integrated a2 within 1e-10", dolbeault),
    (
        10,
        "restriction kernel scans",
        "empty below the critical order; structure at it; enumerators agree",
        invariance_scans,
    ),
];

/// Runs one criterion, converting errors into a failed report.
pub fn run(id: usize) -> Option<CriterionReport> {
    let &(id, name, tolerance, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, measured, error) = match check() {
        Ok((p, v)) => (p, v, None),
        Err(e) => (false, Value::Null, Some(e.to_string())),
    };
    Some(CriterionReport { id, name, passed, tolerance, measured, error, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all() -> Vec<CriterionReport> {
    CRITERIA.iter().filter_map(|c| run(c.0)).collect()
}

fn max_dev(values: impl IntoIterator<Item = f64>, target: f64) -> f64 {
    values.into_iter().map(|v| (v - target).abs()).fold(0.0, f64::max)
}

fn supertraces(spec: &SpectrumSet, ts: &[f64]) -> Result<Vec<f64>> {
    ts.iter().map(|&t| spec.supertrace(t)).collect()
}

fn circle(src: &str) -> Result<TwistForm> {
    TwistForm::parse(&[TAU], &[src])
}

fn torus(x: &str, y: &str) -> Result<TwistForm> {
    TwistForm::parse(&[TAU, TAU], &[x, y])
}

fn interval_index() -> Result<(bool, Value)> {
    let ts = geometric_grid(0.1, 2.0, 24);
    let rel = eigensolve(&assemble_interval(PI, BoundaryFlavor::Relative, 2000)?)?;
    let abs = eigensolve(&assemble_interval(PI, BoundaryFlavor::Absolute, 2000)?)?;
    let dr = max_dev(supertraces(&rel, &ts)?, -1.0);
    let da = max_dev(supertraces(&abs, &ts)?, 1.0);
    // χ([0, π]) = 1, m = 1: relative gives (−1)^m χ
    Ok((dr <= 1e-10 && da <= 1e-10, json!({"relative_max_dev": dr, "absolute_max_dev": da, "points": ts.len()})))
}

fn gauss_bonnet() -> Result<(bool, Value)> {
    let mut out = Vec::new();
    for dim in [2usize, 4] {
        let model = ModelManifold::round_sphere(dim, 1.0);
        let chart = model.chart()?;
        let chi = integrate(&model, &|x| Ok(euler_form(&curvature(&chart.metric_jet(x, 2)?)?)))?;
        out.push(chi);
    }
    let pass = (out[0] - 2.0).abs() <= 1e-8 && (out[1] - 2.0).abs() <= 1e-6;
    Ok((pass, json!({"S2": out[0], "S4": out[1]})))
}

fn interval_coefficients() -> Result<(bool, Value)> {
    let spec = eigensolve(&assemble_interval(PI, BoundaryFlavor::Relative, 2000)?)?;
    let fit = fit_spectrum(&spec, TraceSelection::Degree(0), 1, &FitOptions::new(3, (0.005, 0.5))?)?;
    let want = [PI.sqrt() / 2.0, -0.5, 0.0, 0.0];
    let dev = fit.coefficients.iter().zip(want).map(|(c, w)| (c - w).abs()).fold(0.0, f64::max);
    // a0bd of the Dirichlet Laplacian, summed over both endpoints
    let model = ModelManifold::interval(PI);
    let zero = TwistForm::zero(&[TAU]);
    let bd = BoundaryData::uniform(Vec::new(), 1, false, 0.0);
    let a0bd = integrate_boundary(&model, &|x, _| {
        let op = twisted_de_rham_coefficients(&zero.jets(x, 2), 0)?;
        let can = canonicalize(&op, &MetricJet::euclidean(1, 2))?;
        Ok(boundary_a(0, &bd, &can, &CurvaturePack::flat(1))?.value)
    })?;
    let c1_dev = (fit.coefficients[1] - a0bd).abs();
    Ok((
        dev <= 1e-5 && c1_dev <= 1e-5,
        json!({"coefficients": fit.coefficients, "max_dev": dev, "integrated_a0bd": a0bd, "c1_vs_a0bd": c1_dev}),
    ))
}

fn supertrace_coefficients() -> Result<(bool, Value)> {
    let circles = [
        circle("0")?,
        circle("0.7")?,
        circle("0.5*sin(x)")?,
        circle("0.3 + 0.4*cos(2*x)")?,
        circle("0.2 + 0.6*sin(x) + 0.3*cos(3*x)")?,
    ];
    let tori = [
        torus("0", "0")?,
        torus("0.7", "0")?,
        torus("0.7 + 0.3*cos(x)", "0")?,
        torus("-0.4 - 0.2*sin(x)", "0.5 + 0.2*cos(2*y)")?,
        torus("0.25*cos(x + y)", "0.3 + 0.25*cos(x + y)")?,
    ];
    let mut pass = true;
    let mut rows = Vec::new();
    for (m, twists, n) in [(1usize, &circles, 64usize), (2, &tori, 8)] {
        let mut tops = Vec::new();
        for tw in twists.iter() {
            let ops = if m == 1 { assemble_circle(tw, n)? } else { assemble_torus(tw, n)? };
            let spec = eigensolve(&ops)?;
            let t0 = (1.1 * spec.t_min()).max(0.01);
            let fit = fit_spectrum(&spec, TraceSelection::Super, m, &FitOptions::new(m, (t0, 20.0 * t0))?)?;
            let low = fit.coefficients[..m].iter().map(|c| c.abs()).fold(0.0, f64::max);
            let top = fit.coefficients[m];
            pass &= low < 1e-5 && top.abs() <= 1e-4;
            tops.push(top);
            rows.push(json!({"m": m, "twist": tw.to_json(), "below_top_max": low, "c_m": top}));
        }
        let spread = tops.iter().cloned().fold(f64::MIN, f64::max) - tops.iter().cloned().fold(f64::MAX, f64::min);
        pass &= spread <= 1e-4;
    }
    Ok((pass, json!(rows)))
}

fn twist_dependence() -> Result<(bool, Value)> {
    let theta = circle("0.7*sin(x)")?;
    let fit_for = |tw: &TwistForm| -> Result<crate::spectral::HeatFit> {
        let spec = eigensolve(&assemble_circle(tw, 256)?)?;
        let opts = FitOptions::even(4, (1.1 * spec.t_min(), 0.05))?.with_guard(1);
        fit_spectrum(&spec, TraceSelection::Degree(0), 1, &opts)
    };
    let fit = fit_for(&theta)?;
    let flat = fit_for(&TwistForm::zero(&[TAU]))?;
    let c4 = fit.coefficient(4).unwrap_or(f64::NAN);
    let sigma = fit.std_error(4).unwrap_or(f64::NAN);
    let a4 = integrated_de_rham(&theta, Some(0), 4)?;
    let a2 = integrated_de_rham(&theta, Some(0), 2)?;
    let rel = ((c4 - a4) / a4).abs();
    // supertraced a4 density: (4π)^{−1/2}(θ'''/3 − 2θ'θ²), at x = 0 θ = 0, θ' = 0.7, θ''' = −0.7
    let at0 = de_rham_super_density(&theta, 4, &[0.0])?;
    let closed = (-0.7 / 3.0) / (4.0 * PI).sqrt();
    let integral = integrated_de_rham(&theta, None, 4)?;
    let pass = rel <= 0.01
        && c4.abs() > 100.0 * sigma
        && (at0 - closed).abs() < 1e-12
        && at0.abs() > 1e-3
        && integral.abs() < 1e-12;
    Ok((
        pass,
        json!({
            "c2": fit.coefficient(2), "integrated_a2": a2,
            "c4": c4, "integrated_a4": a4, "relative_error": rel, "c4_std_error": sigma,
            "c4_untwisted": flat.coefficient(4), "relative_residual": fit.relative_residual,
            "super_a4_at_0": at0, "closed_form_at_0": closed, "super_a4_integral": integral,
        }),
    ))
}

fn torus_betti() -> Result<(bool, Value)> {
    let k0 = eigensolve(&assemble_torus(&torus("0", "0")?, 48)?)?.kernel()?;
    let k1 = eigensolve(&assemble_torus(&torus("0.7", "0")?, 48)?)?.kernel()?;
    let pass = k0.betti == [1, 2, 1] && k1.betti == [0, 0, 0] && k0.gap_ratio >= 100.0 && k1.gap_ratio >= 100.0;
    Ok((pass, json!({"untwisted": k0, "twisted": k1})))
}

fn gauge_and_duality() -> Result<(bool, Value)> {
    let mut pass = true;
    // cohomologous twists share kernel dimensions
    let mut gauge = Vec::new();
    for base in ["0", "0.7"] {
        let reference = eigensolve(&assemble_torus(&torus(base, "0")?, 16)?)?.betti()?;
        for eps in [0.1, 0.5] {
            let tw = torus(&format!("{base} + {eps}*cos(x)"), "0")?;
            let b = eigensolve(&assemble_torus(&tw, 16)?)?.betti()?;
            pass &= b == reference;
            gauge.push(json!({"class": base, "eps": eps, "betti": b, "reference": reference}));
        }
    }
    // duality β_p(Θ) = β_{2−p}(−Θ) for random closed twists
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut duality = Vec::new();
    for _ in 0..10 {
        let class: Vec<f64> = (0..2)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    0.0
                } else {
                    let v = rng.gen_range(0.3..=0.8);
                    if rng.gen_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                }
            })
            .collect();
        let tw = TwistForm::random_closed(&mut rng, &[TAU, TAU], &class, 1, 0.15)?;
        let b = eigensolve(&assemble_torus(&tw, 6)?)?.betti()?;
        let bm = eigensolve(&assemble_torus(&tw.neg(), 6)?)?.betti()?;
        let ok = (0..3).all(|p| b[p] == bm[2 - p]);
        pass &= ok;
        duality.push(json!({"class": class, "betti": b, "betti_negated": bm, "dual": ok}));
    }
    // Θ = i·dh is unitarily equivalent to the untwisted complex
    let h = TrigPoly::parse("0.3*sin(x) + 0.2*cos(y)", &[TAU, TAU])?;
    let imag = TwistForm::exact(&h).scale(Complex64::new(0.0, 1.0));
    let a = eigensolve(&assemble_torus(&imag, 10)?)?;
    let b = eigensolve(&assemble_torus(&TwistForm::zero(&[TAU, TAU]), 10)?)?;
    let mut gauge_dev: f64 = 0.0;
    // largest eigenvalue below which every degree agrees to 1e-8
    let mut agrees_below = f64::INFINITY;
    let cut = a.lambda_max.min(b.lambda_max);
    for p in 0..3 {
        let (x, y) = (&a.degree(p).eigenvalues, &b.degree(p).eigenvalues);
        for (u, v) in x.iter().zip(y).take_while(|(u, v)| **u <= cut && **v <= cut) {
            let d = (u - v).abs();
            gauge_dev = gauge_dev.max(d);
            if d > 1e-8 {
                agrees_below = agrees_below.min(v.min(*u));
            }
        }
    }
    pass &= gauge_dev <= 1e-8;
    Ok((
        pass,
        json!({"cohomologous": gauge, "duality": duality, "imaginary_gauge_max_dev": gauge_dev, "imaginary_gauge_lambda_max": cut, "imaginary_gauge_agrees_below": agrees_below.min(cut)}),
    ))
}

fn products() -> Result<(bool, Value)> {
    let n = 12;
    let c1 = assemble_circle(&circle("0.5 + 0.3*sin(x)")?, n)?;
    let c2 = assemble_circle(&TwistForm::zero(&[TAU]), n)?;
    let prod = eigensolve(&product_complex(&c1, &c2)?)?;
    let direct = eigensolve(&assemble_torus(&torus("0.5 + 0.3*sin(x)", "0")?, n)?)?;
    let mut spec_dev: f64 = 0.0;
    for p in 0..3 {
        let (x, y) = (&prod.degree(p).eigenvalues, &direct.degree(p).eigenvalues);
        if x.len() != y.len() {
            return Ok((false, json!({"error": "degree sizes differ"})));
        }
        spec_dev = x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(spec_dev, f64::max);
    }
    let (s1, s2) = (eigensolve(&c1)?, eigensolve(&c2)?);
    let mut trace_dev: f64 = 0.0;
    let mut super_dev: f64 = 0.0;
    for t in geometric_grid(0.05, 2.0, 12) {
        let (tp, t1, t2) = (prod.full_heat_trace(t), s1.full_heat_trace(t), s2.full_heat_trace(t));
        for (deg, v) in tp.iter().enumerate() {
            let want: f64 = (0..2).filter(|&p| deg >= p && deg - p < 2).map(|p| t1[p] * t2[deg - p]).sum();
            trace_dev = trace_dev.max((v - want).abs() / want.abs().max(1.0));
        }
        let sup = |v: &[f64]| v.iter().enumerate().map(|(p, x)| if p % 2 == 0 { *x } else { -*x }).sum::<f64>();
        super_dev = super_dev.max((sup(&tp) - sup(&t1) * sup(&t2)).abs());
    }
    let pass = spec_dev <= 1e-9 && trace_dev <= 1e-10 && super_dev <= 1e-10;
    Ok((
        pass,
        json!({"spectrum_max_dev": spec_dev, "kunneth_trace_rel_dev": trace_dev, "supertrace_product_dev": super_dev}),
    ))
}

fn dolbeault() -> Result<(bool, Value)> {
    let per = [1.0, 1.0];
    let thetas = [
        ("0", TrigPoly::zero(&per)),
        ("0.3", TrigPoly::constant(&per, Complex64::new(0.3, 0.0))),
        ("0.3+0.2i", TrigPoly::constant(&per, Complex64::new(0.3, 0.2))),
        ("0.5*sin(2*pi*x)", TrigPoly::parse("0.5*sin(2*pi*x)", &per)?),
    ];
    let mut pass = true;
    let mut rows = Vec::new();
    for (name, th) in &thetas {
        let spec = eigensolve(&assemble_dolbeault_torus(th, 12)?)?;
        let k = spec.kernel()?;
        let nz = |p: usize| -> Vec<f64> {
            spec.degree(p).eigenvalues.iter().copied().filter(|&v| v >= k.threshold).collect()
        };
        let (a, b) = (nz(0), nz(1));
        let dev = if a.len() == b.len() {
            a.iter().zip(&b).map(|(u, v)| (u - v).abs() / u.abs().max(1.0)).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        let integral = integrated_dolbeault(th)?;
        pass &= k.index == 0 && dev <= 1e-9 && integral.abs() <= 1e-10;
        rows.push(json!({"theta": name, "betti": k.betti, "index": k.index, "nonzero_spectrum_dev": dev, "integrated_a2": integral}));
    }
    Ok((pass, json!(rows)))
}

fn invariance_scans() -> Result<(bool, Value)> {
    let mut pass = true;
    let mut empty = Vec::new();
    for (m, n) in [(2usize, 1usize), (3, 2), (4, 2), (5, 4)] {
        let s = kernel_scan(JetContext::new(m, true, false), n)?;
        pass &= s.survivors.is_empty();
        empty.push(json!({"m": m, "n": n, "boundary": false, "monomials": s.total, "survivors": s.survivors.len()}));
    }
    for m in 2..=4usize {
        for n in 0..m - 1 {
            let s = kernel_scan(JetContext::new(m, true, true), n)?;
            pass &= s.survivors.is_empty();
            empty.push(json!({"m": m, "n": n, "boundary": true, "monomials": s.total, "survivors": s.survivors.len()}));
        }
    }
    let mut critical = Vec::new();
    for m in [2usize, 4] {
        let s = kernel_scan(JetContext::new(m, true, false), m)?;
        let ok = !s.survivors.is_empty()
            && s.survivors.iter().all(|v| v.theta_free && v.second_order_metric_only && v.equality);
        pass &= ok;
        critical.push(json!({"m": m, "n": m, "boundary": false, "survivors": s.survivors.len(), "structure_ok": ok}));
    }
    for m in 2..=4usize {
        let s = kernel_scan(JetContext::new(m, true, true), m - 1)?;
        // Θ-free, built from g_{ab/m} and tangential second derivatives; pure g_{ab/m} when m = 2
        let ok = !s.survivors.is_empty()
            && s.survivors.iter().all(|v| v.theta_free && v.second_order_metric_only && v.equality)
            && (m > 2 || s.survivors.iter().all(|v| v.l_type_only));
        pass &= ok;
        critical
            .push(json!({"m": m, "n": m - 1, "boundary": true, "survivors": s.survivors.len(), "structure_ok": ok}));
    }
    let mut agreement = Vec::new();
    for (m, n) in [(2usize, 2usize), (2, 3), (3, 2), (3, 3), (4, 4)] {
        for boundary in [false, true] {
            let ctx = JetContext::new(m, true, boundary);
            let a = enumerate_monomials(ctx, n)?;
            let b = enumerate_brute_force(ctx, n)?;
            pass &= a == b;
            agreement.push(json!({"m": m, "n": n, "boundary": boundary, "count": a.len(), "agree": a == b}));
        }
    }
    Ok((pass, json!({"below_critical": empty, "critical": critical, "brute_force": agreement})))
}
