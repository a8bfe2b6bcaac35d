//! Multivariate truncated Taylor series.
//!
//! A [`Taylor`] holds the coefficients of a polynomial in `nvars` displacement
//! variables around a base point, truncated at total degree `order`. Monomials
//! are stored in graded order so a lower-order space is always a prefix of a
//! higher-order one, which makes truncation a slice operation.

use std::collections::HashMap;
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

/// Coefficient field for Taylor series.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
}

/// Monomial bookkeeping shared by all series with the same shape.
#[derive(Debug)]
pub struct Space {
    pub nvars: usize,
    pub order: usize,
    exps: Vec<Vec<u8>>,
    degree: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    mul: Vec<(u32, u32, u32)>,
    raise: Vec<Vec<u32>>,
}

impl Space {
    fn build(nvars: usize, order: usize) -> Space {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        for d in 0..=order {
            let mut cur = vec![0u8; nvars];
            push_compositions(&mut exps, &mut cur, 0, d);
        }
        let degree: Vec<usize> = exps.iter().map(|e| e.iter().map(|&x| x as usize).sum()).collect();
        let index: HashMap<Vec<u8>, usize> = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let mut mul = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u32, j as u32, index[&s] as u32));
            }
        }
        let raise = (0..nvars)
            .map(|k| {
                exps.iter()
                    .map(|e| {
                        let mut f = e.clone();
                        f[k] += 1;
                        index.get(&f).map_or(u32::MAX, |&i| i as u32)
                    })
                    .collect()
            })
            .collect();
        Space { nvars, order, exps, degree, index, mul, raise }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exps
    }

    /// Number of monomials of total degree at most `d`.
    fn prefix_len(&self, d: usize) -> usize {
        self.degree.iter().take_while(|&&x| x <= d).count()
    }

    pub fn index_of(&self, exp: &[u8]) -> Option<usize> {
        self.index.get(exp).copied()
    }
}

// Compositions of `d` into `nvars` parts, in reverse-lexicographic order.
fn push_compositions(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, d: usize) {
    if cur.is_empty() {
        if d == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == cur.len() - 1 {
        cur[pos] = d as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=d).rev() {
        cur[pos] = k as u8;
        push_compositions(out, cur, pos + 1, d - k);
    }
    cur[pos] = 0;
}

/// Returns the cached monomial space for `(nvars, order)`.
pub fn space(nvars: usize, order: usize) -> Arc<Space> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Space>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("taylor space cache poisoned");
    guard.entry((nvars, order)).or_insert_with(|| Arc::new(Space::build(nvars, order))).clone()
}

/// Truncated multivariate Taylor series with coefficients in `T`.
#[derive(Clone, Debug)]
pub struct Taylor<T: Scalar> {
    space: Arc<Space>,
    c: Vec<T>,
}

impl<T: Scalar> PartialEq for Taylor<T> {
    fn eq(&self, other: &Self) -> bool {
        self.nvars() == other.nvars() && self.order() == other.order() && self.c == other.c
    }
}

impl<T: Scalar> Taylor<T> {
    pub fn zeros(nvars: usize, order: usize) -> Self {
        let space = space(nvars, order);
        let c = vec![T::zero(); space.len()];
        Taylor { space, c }
    }

    pub fn constant(nvars: usize, order: usize, value: T) -> Self {
        let mut t = Self::zeros(nvars, order);
        t.c[0] = value;
        t
    }

    /// The coordinate function `x_k = base + h_k`.
    pub fn variable(nvars: usize, order: usize, k: usize, base: T) -> Self {
        let mut t = Self::constant(nvars, order, base);
        if order >= 1 {
            let mut e = vec![0u8; nvars];
            e[k] = 1;
            let i = t.space.index_of(&e).expect("degree-one monomial");
            t.c[i] = T::from_f64(1.0);
        }
        t
    }

    pub fn from_coeffs(nvars: usize, order: usize, c: Vec<T>) -> Self {
        let space = space(nvars, order);
        assert_eq!(c.len(), space.len(), "coefficient count does not match space");
        Taylor { space, c }
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn coeffs(&self) -> &[T] {
        &self.c
    }

    pub fn value(&self) -> T {
        self.c[0]
    }

    pub fn coeff(&self, exp: &[u8]) -> T {
        self.space.index_of(exp).map_or(T::zero(), |i| self.c[i])
    }

    pub fn set_coeff(&mut self, exp: &[u8], v: T) {
        let i = self.space.index_of(exp).expect("exponent within truncation order");
        self.c[i] = v;
    }

    /// Partial derivative `∂^α f` at the base point (coefficient times `α!`).
    pub fn partial(&self, exp: &[u8]) -> T {
        let fact: f64 = exp.iter().map(|&k| factorial(k as usize)).product();
        self.coeff(exp) * T::from_f64(fact)
    }

    pub fn truncate(&self, order: usize) -> Self {
        if order >= self.order() {
            return self.clone();
        }
        let space = space(self.nvars(), order);
        let n = self.space.prefix_len(order);
        Taylor { space, c: self.c[..n].to_vec() }
    }

    /// `∂/∂x_k`; the result has order one less. Panics on an order-0 input.
    pub fn d(&self, k: usize) -> Self {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let target = space(self.nvars(), self.order() - 1);
        let raise = &self.space.raise[k];
        let c = (0..target.len())
            .map(|i| {
                let j = raise[i] as usize;
                let mult = target.exps[i][k] as f64 + 1.0;
                self.c[j] * T::from_f64(mult)
            })
            .collect();
        Taylor { space: target, c }
    }

    pub fn scale(&self, s: T) -> Self {
        Taylor { space: self.space.clone(), c: self.c.iter().map(|&x| x * s).collect() }
    }

    pub fn add_scalar(&self, s: T) -> Self {
        let mut r = self.clone();
        r.c[0] = r.c[0] + s;
        r
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Taylor<U> {
        Taylor { space: self.space.clone(), c: self.c.iter().map(|&x| f(x)).collect() }
    }

    pub fn conj(&self) -> Self {
        self.map(|x| x.conj())
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs() <= tol
    }

    fn binary(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let order = self.order().min(other.order());
        let a = self.truncate(order);
        let b = other.truncate(order);
        let c = a.c.iter().zip(&b.c).map(|(&x, &y)| f(x, y)).collect();
        Taylor { space: a.space, c }
    }

    pub fn mul_ref(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        let sp = space(self.nvars(), order);
        let mut out = vec![T::zero(); sp.len()];
        for &(i, j, k) in &sp.mul {
            out[k as usize] = out[k as usize] + self.c[i as usize] * other.c[j as usize];
        }
        Taylor { space: sp, c: out }
    }

    /// Composes with a scalar function given its derivatives at the base value.
    pub fn compose(&self, derivs: &[T]) -> Self {
        let order = self.order();
        assert!(derivs.len() > order, "need derivatives up to the series order");
        let mut h = self.clone();
        h.c[0] = T::zero();
        let mut out = Taylor::constant(self.nvars(), order, derivs[0]);
        let mut pow = Taylor::constant(self.nvars(), order, T::from_f64(1.0));
        for (k, &dk) in derivs.iter().enumerate().take(order + 1).skip(1) {
            pow = pow.mul_ref(&h);
            out = &out + &pow.scale(dk * T::from_f64(1.0 / factorial(k)));
        }
        out
    }

    /// Substitutes `h_k = sum_j a[k][j] y_j` (row-major `a`, square).
    pub fn linear_substitute(&self, a: &[f64]) -> Self {
        let n = self.nvars();
        let order = self.order();
        assert_eq!(a.len(), n * n, "substitution matrix must be square");
        let h: Vec<Self> = (0..n)
            .map(|k| {
                let mut t = Self::zeros(n, order);
                for j in 0..n {
                    if order >= 1 {
                        let mut e = vec![0u8; n];
                        e[j] = 1;
                        t.set_coeff(&e, T::from_f64(a[k * n + j]));
                    }
                }
                t
            })
            .collect();
        // powers[k][p] = h_k^p
        let powers: Vec<Vec<Self>> = h
            .iter()
            .map(|hk| {
                let mut v = vec![Self::constant(n, order, T::from_f64(1.0))];
                for p in 1..=order {
                    let next = v[p - 1].mul_ref(hk);
                    v.push(next);
                }
                v
            })
            .collect();
        let mut out = Self::zeros(n, order);
        for (e, &c) in self.space.exps.iter().zip(&self.c) {
            if c.modulus() == 0.0 {
                continue;
            }
            let mut term = Self::constant(n, order, c);
            for (k, &p) in e.iter().enumerate() {
                if p > 0 {
                    term = term.mul_ref(&powers[k][p as usize]);
                }
            }
            out = &out + &term;
        }
        out
    }

    /// Evaluates the truncated polynomial at displacement `h`.
    pub fn eval(&self, h: &[f64]) -> T {
        self.space.exps.iter().zip(&self.c).fold(T::zero(), |acc, (e, &c)| {
            let m: f64 = e.iter().zip(h).map(|(&k, &x)| x.powi(k as i32)).product();
            acc + c * T::from_f64(m)
        })
    }
}

impl Taylor<f64> {
    pub fn to_complex(&self) -> Taylor<Complex64> {
        self.map(|x| Complex64::new(x, 0.0))
    }

    pub fn recip(&self) -> Self {
        let a = self.value();
        let derivs: Vec<f64> = (0..=self.order())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * factorial(k) / a.powi(k as i32 + 1)
            })
            .collect();
        self.compose(&derivs)
    }

    pub fn powf(&self, p: f64) -> Self {
        let a = self.value();
        let mut derivs = Vec::with_capacity(self.order() + 1);
        let mut coef = 1.0;
        for k in 0..=self.order() {
            derivs.push(coef * a.powf(p - k as f64));
            coef *= p - k as f64;
        }
        self.compose(&derivs)
    }

    pub fn powi(&self, n: i32) -> Self {
        if n >= 0 {
            let mut r = Taylor::constant(self.nvars(), self.order(), 1.0);
            for _ in 0..n {
                r = r.mul_ref(self);
            }
            r
        } else {
            self.powi(-n).recip()
        }
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose(&vec![e; self.order() + 1])
    }

    pub fn ln(&self) -> Self {
        let a = self.value();
        let mut derivs = vec![a.ln()];
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            derivs.push(sign * factorial(k - 1) / a.powi(k as i32));
        }
        self.compose(&derivs)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cyc = [s, c, -s, -c];
        self.compose(&(0..=self.order()).map(|k| cyc[k % 4]).collect::<Vec<_>>())
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cyc = [c, -s, -c, s];
        self.compose(&(0..=self.order()).map(|k| cyc[k % 4]).collect::<Vec<_>>())
    }
}

impl Taylor<Complex64> {
    pub fn re(&self) -> Taylor<f64> {
        self.map(|z| z.re)
    }

    pub fn im(&self) -> Taylor<f64> {
        self.map(|z| z.im)
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl<T: Scalar> Add for &Taylor<T> {
    type Output = Taylor<T>;
    fn add(self, rhs: Self) -> Taylor<T> {
        self.binary(rhs, |a, b| a + b)
    }
}

impl<T: Scalar> Sub for &Taylor<T> {
    type Output = Taylor<T>;
    fn sub(self, rhs: Self) -> Taylor<T> {
        self.binary(rhs, |a, b| a - b)
    }
}

impl<T: Scalar> Mul for &Taylor<T> {
    type Output = Taylor<T>;
    fn mul(self, rhs: Self) -> Taylor<T> {
        self.mul_ref(rhs)
    }
}

impl<T: Scalar> Neg for &Taylor<T> {
    type Output = Taylor<T>;
    fn neg(self) -> Taylor<T> {
        self.map(|x| -x)
    }
}

impl<T: Scalar> Add for Taylor<T> {
    type Output = Taylor<T>;
    fn add(self, rhs: Self) -> Taylor<T> {
        &self + &rhs
    }
}

impl<T: Scalar> Sub for Taylor<T> {
    type Output = Taylor<T>;
    fn sub(self, rhs: Self) -> Taylor<T> {
        &self - &rhs
    }
}

impl<T: Scalar> Mul for Taylor<T> {
    type Output = Taylor<T>;
    fn mul(self, rhs: Self) -> Taylor<T> {
        self.mul_ref(&rhs)
    }
}

impl<T: Scalar> Neg for Taylor<T> {
    type Output = Taylor<T>;
    fn neg(self) -> Taylor<T> {
        -&self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn space_sizes_are_binomial() {
        assert_eq!(space(2, 2).len(), 6);
        assert_eq!(space(4, 4).len(), 70);
        assert_eq!(space(5, 4).len(), 126);
        assert_eq!(space(0, 3).len(), 1);
    }

    #[test]
    fn lower_order_space_is_prefix() {
        let hi = space(3, 4);
        let lo = space(3, 2);
        assert_eq!(&hi.exponents()[..lo.len()], lo.exponents());
    }

    #[test]
    fn sin_squared_plus_cos_squared() {
        let x = Taylor::variable(2, 4, 0, 0.7);
        let y = Taylor::variable(2, 4, 1, -0.2);
        let arg = &x + &y.scale(3.0);
        let s = arg.sin();
        let c = arg.cos();
        let one = &(&s * &s) + &(&c * &c);
        assert!(close(one.value(), 1.0, 1e-15));
        assert!(one.coeffs()[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn derivatives_of_product_match_closed_form() {
        // f = x^2 y sin(x); ∂x∂y f = 2x sin x + x^2 cos x
        let (x0, y0) = (0.3_f64, 1.1_f64);
        let x = Taylor::variable(2, 3, 0, x0);
        let y = Taylor::variable(2, 3, 1, y0);
        let f = &(&x * &x) * &(&y * &x.sin());
        let fxy = f.partial(&[1, 1]);
        let expect = 2.0 * x0 * x0.sin() + x0 * x0 * x0.cos();
        assert!(close(fxy, expect, 1e-14));
        let dxd = f.d(0).d(1);
        assert!(close(dxd.value(), expect, 1e-14));
    }

    #[test]
    fn recip_sqrt_ln_exp_are_consistent() {
        let x = Taylor::variable(1, 4, 0, 2.0);
        let r = &x.recip() * &x;
        assert!(close(r.value(), 1.0, 1e-15) && r.coeffs()[1..].iter().all(|v| v.abs() < 1e-14));
        let s = x.sqrt();
        let back = &s * &s;
        assert!((0..5).all(|i| close(back.coeffs()[i], x.coeffs()[i], 1e-14)));
        let e = x.ln().exp();
        assert!((0..5).all(|i| close(e.coeffs()[i], x.coeffs()[i], 1e-13)));
    }

    #[test]
    fn truncation_and_mixed_order_arithmetic() {
        let a = Taylor::variable(2, 4, 0, 1.0);
        let b = Taylor::variable(2, 2, 1, 1.0);
        assert_eq!((&a * &b).order(), 2);
        assert_eq!(a.truncate(1).coeffs().len(), 3);
    }
}
