//! Multivariate trigonometric polynomials on a flat torus.
//!
//! `f(x) = Σ_k c_k exp(i ω_k · x)` with `ω_k = 2π k_j / L_j` per axis.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::{Expr, Func};
use crate::taylor::{factorial, Taylor};

const TAU: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    periods: Vec<f64>,
    coeffs: BTreeMap<Vec<i64>, Complex64>,
}

// Affine function Σ a_j x_j + b, used for trigonometric arguments.
struct Affine {
    a: Vec<f64>,
    b: f64,
}

fn affine(e: &Expr, m: usize) -> Option<Affine> {
    match e {
        Expr::Num(v) => Some(Affine { a: vec![0.0; m], b: *v }),
        Expr::Var(i) if *i < m => {
            let mut a = vec![0.0; m];
            a[*i] = 1.0;
            Some(Affine { a, b: 0.0 })
        }
        Expr::Var(_) => None,
        Expr::Neg(x) => affine(x, m).map(|f| Affine { a: f.a.iter().map(|v| -v).collect(), b: -f.b }),
        Expr::Add(x, y) | Expr::Sub(x, y) => {
            let (f, g) = (affine(x, m)?, affine(y, m)?);
            let s = if matches!(e, Expr::Sub(..)) { -1.0 } else { 1.0 };
            Some(Affine { a: f.a.iter().zip(&g.a).map(|(p, q)| p + s * q).collect(), b: f.b + s * g.b })
        }
        Expr::Mul(x, y) => {
            if let Some(c) = x.constant_value() {
                affine(y, m).map(|f| Affine { a: f.a.iter().map(|v| c * v).collect(), b: c * f.b })
            } else if let Some(c) = y.constant_value() {
                affine(x, m).map(|f| Affine { a: f.a.iter().map(|v| c * v).collect(), b: c * f.b })
            } else {
                None
            }
        }
        Expr::Div(x, y) => {
            let c = y.constant_value()?;
            affine(x, m).map(|f| Affine { a: f.a.iter().map(|v| v / c).collect(), b: f.b / c })
        }
        _ => e.constant_value().map(|v| Affine { a: vec![0.0; m], b: v }),
    }
}

impl TrigPoly {
    pub fn zero(periods: &[f64]) -> TrigPoly {
        TrigPoly { periods: periods.to_vec(), coeffs: BTreeMap::new() }
    }

    pub fn constant(periods: &[f64], c: Complex64) -> TrigPoly {
        let mut t = TrigPoly::zero(periods);
        t.set(vec![0; periods.len()], c);
        t
    }

    /// Single mode `c · exp(i ω_k · x)`.
    pub fn mode(periods: &[f64], k: Vec<i64>, c: Complex64) -> TrigPoly {
        let mut t = TrigPoly::zero(periods);
        t.set(k, c);
        t
    }

    pub fn from_coeffs(periods: &[f64], coeffs: BTreeMap<Vec<i64>, Complex64>) -> TrigPoly {
        let mut t = TrigPoly::zero(periods);
        for (k, c) in coeffs {
            t.set(k, c);
        }
        t
    }

    fn set(&mut self, k: Vec<i64>, c: Complex64) {
        assert_eq!(k.len(), self.periods.len(), "mode index has wrong dimension");
        if c.norm() == 0.0 {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, c);
        }
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i64>, Complex64> {
        &self.coeffs
    }

    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn constant_part(&self) -> Complex64 {
        self.coeff(&vec![0; self.dim()])
    }

    pub fn frequency(&self, k: &[i64]) -> Vec<f64> {
        k.iter().zip(&self.periods).map(|(&kj, &l)| TAU * kj as f64 / l).collect()
    }

    /// Largest `|k_j|` over all modes and axes.
    pub fn bandwidth(&self) -> usize {
        self.coeffs.keys().flat_map(|k| k.iter().map(|x| x.unsigned_abs() as usize)).max().unwrap_or(0)
    }

    pub fn axis_bandwidth(&self, j: usize) -> usize {
        self.coeffs.keys().map(|k| k[j].unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(k, c)| {
                let ph: f64 = self.frequency(k).iter().zip(x).map(|(w, xi)| w * xi).sum();
                c * Complex64::from_polar(1.0, ph)
            })
            .sum()
    }

    pub fn add(&self, o: &TrigPoly) -> TrigPoly {
        let mut t = self.clone();
        for (k, c) in &o.coeffs {
            let v = t.coeff(k) + c;
            t.set(k.clone(), v);
        }
        t
    }

    pub fn sub(&self, o: &TrigPoly) -> TrigPoly {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> TrigPoly {
        let mut t = TrigPoly::zero(&self.periods);
        for (k, c) in &self.coeffs {
            t.set(k.clone(), c * s);
        }
        t
    }

    pub fn mul(&self, o: &TrigPoly) -> TrigPoly {
        let mut t = TrigPoly::zero(&self.periods);
        for (k1, c1) in &self.coeffs {
            for (k2, c2) in &o.coeffs {
                let k: Vec<i64> = k1.iter().zip(k2).map(|(a, b)| a + b).collect();
                let v = t.coeff(&k) + c1 * c2;
                t.set(k, v);
            }
        }
        t
    }

    pub fn powi(&self, n: u32) -> TrigPoly {
        let mut acc = TrigPoly::constant(&self.periods, Complex64::new(1.0, 0.0));
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Complex conjugate function.
    pub fn conj(&self) -> TrigPoly {
        let mut t = TrigPoly::zero(&self.periods);
        for (k, c) in &self.coeffs {
            t.set(k.iter().map(|x| -x).collect(), c.conj());
        }
        t
    }

    /// `∂/∂x_j`.
    pub fn d(&self, j: usize) -> TrigPoly {
        let mut t = TrigPoly::zero(&self.periods);
        for (k, c) in &self.coeffs {
            let w = TAU * k[j] as f64 / self.periods[j];
            t.set(k.clone(), c * Complex64::new(0.0, w));
        }
        t
    }

    /// Largest deviation from being a real-valued function.
    pub fn imaginary_residual(&self) -> f64 {
        self.sub(&self.conj()).coeffs.values().map(|c| c.norm()).fold(0.0, f64::max) / 2.0
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drops coefficients below `tol`.
    pub fn prune(&self, tol: f64) -> TrigPoly {
        let mut t = self.clone();
        t.coeffs.retain(|_, c| c.norm() > tol);
        t
    }

    /// Embeds into a larger torus: this polynomial's axes become `offset..offset+dim`.
    pub fn embed(&self, periods: &[f64], offset: usize) -> TrigPoly {
        let mut t = TrigPoly::zero(periods);
        for (k, c) in &self.coeffs {
            let mut kk = vec![0; periods.len()];
            kk[offset..offset + k.len()].copy_from_slice(k);
            t.set(kk, *c);
        }
        t
    }

    /// Taylor jet of the function at `x` to the given order.
    pub fn jet(&self, x: &[f64], order: usize) -> Taylor<Complex64> {
        let m = self.dim();
        let mut t = Taylor::<Complex64>::zeros(m, order);
        let exps: Vec<Vec<u8>> = t.space().exponents().to_vec();
        let mut c = vec![Complex64::default(); exps.len()];
        for (k, ck) in &self.coeffs {
            let w = self.frequency(k);
            let ph: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let base = ck * Complex64::from_polar(1.0, ph);
            for (slot, e) in c.iter_mut().zip(&exps) {
                let mut f = base;
                for (j, &p) in e.iter().enumerate() {
                    f *= Complex64::new(0.0, w[j]).powu(p as u32) / factorial(p as usize);
                }
                *slot += f;
            }
        }
        t = Taylor::from_coeffs(m, order, c);
        t
    }

    /// Converts an expression to a trigonometric polynomial on the torus with
    /// the given periods. Arguments of `sin`/`cos` must be affine with
    /// frequencies that are integer multiples of `2π/L_j`.
    pub fn from_expr(e: &Expr, periods: &[f64]) -> Result<TrigPoly> {
        let m = periods.len();
        let bad = |msg: String| Error::Invalid(format!("'{e}' is not a trigonometric polynomial: {msg}"));
        if let Some(c) = e.constant_value() {
            return Ok(TrigPoly::constant(periods, Complex64::new(c, 0.0)));
        }
        Ok(match e {
            Expr::Num(_) => unreachable!("constants handled above"),
            Expr::Var(i) => return Err(bad(format!("bare coordinate x{} is not periodic", i + 1))),
            Expr::Neg(a) => TrigPoly::from_expr(a, periods)?.scale(Complex64::new(-1.0, 0.0)),
            Expr::Add(a, b) => TrigPoly::from_expr(a, periods)?.add(&TrigPoly::from_expr(b, periods)?),
            Expr::Sub(a, b) => TrigPoly::from_expr(a, periods)?.sub(&TrigPoly::from_expr(b, periods)?),
            Expr::Mul(a, b) => TrigPoly::from_expr(a, periods)?.mul(&TrigPoly::from_expr(b, periods)?),
            Expr::Div(a, b) => {
                let c = b.constant_value().ok_or_else(|| bad("division by a non-constant".into()))?;
                TrigPoly::from_expr(a, periods)?.scale(Complex64::new(1.0 / c, 0.0))
            }
            Expr::Pow(a, b) => {
                let p = b.constant_value().ok_or_else(|| bad("non-constant exponent".into()))?;
                if p < 0.0 || p.fract() != 0.0 || p > 64.0 {
                    return Err(bad("exponent must be a small non-negative integer".into()));
                }
                TrigPoly::from_expr(a, periods)?.powi(p as u32)
            }
            Expr::Call(f @ (Func::Sin | Func::Cos), arg) => {
                let af = affine(arg, m).ok_or_else(|| bad("trigonometric argument must be affine".into()))?;
                let mut k = vec![0i64; m];
                for j in 0..m {
                    let kj = af.a[j] * periods[j] / TAU;
                    if (kj - kj.round()).abs() > 1e-9 {
                        return Err(bad(format!(
                            "frequency {} along x{} is not a multiple of 2π/{}",
                            af.a[j],
                            j + 1,
                            periods[j]
                        )));
                    }
                    k[j] = kj.round() as i64;
                }
                let plus = Complex64::from_polar(1.0, af.b);
                let minus = Complex64::from_polar(1.0, -af.b);
                let neg: Vec<i64> = k.iter().map(|x| -x).collect();
                let (cp, cm) = if *f == Func::Cos {
                    (plus * 0.5, minus * 0.5)
                } else {
                    (plus / Complex64::new(0.0, 2.0), -minus / Complex64::new(0.0, 2.0))
                };
                if k.iter().all(|&x| x == 0) {
                    TrigPoly::constant(periods, cp + cm)
                } else {
                    TrigPoly::mode(periods, k, cp).add(&TrigPoly::mode(periods, neg, cm))
                }
            }
            Expr::Call(f, _) => return Err(bad(format!("{f:?} of a non-constant is not supported"))),
        }
        .prune(1e-15))
    }

    pub fn parse(src: &str, periods: &[f64]) -> Result<TrigPoly> {
        TrigPoly::from_expr(&Expr::parse(src)?, periods)
    }
}
