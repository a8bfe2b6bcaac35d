//! Laplace-type operators `D = −(g^{ij} ∂_i∂_j + A^k ∂_k + B)`: canonical
//! connection/endomorphism and closed-form local heat invariants.
//!
//! All densities are per unit Riemannian measure. Orthonormal-frame
//! contractions follow the conventions in [`crate::tensor`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior;
use crate::taylor::{factorial, Taylor};
use crate::tensor::{CurvaturePack, Geometry, MetricJet};

type CJet = Taylor<Complex64>;
type RJet = Taylor<f64>;

const PI: f64 = std::f64::consts::PI;

/// Square matrix whose entries are complex jets at a point.
#[derive(Clone, Debug)]
pub struct MatJet {
    n: usize,
    e: Vec<CJet>,
}

impl MatJet {
    pub fn zeros(n: usize, nvars: usize, order: usize) -> MatJet {
        MatJet { n, e: vec![CJet::zeros(nvars, order); n * n] }
    }

    pub fn identity(n: usize, nvars: usize, order: usize) -> MatJet {
        let mut z = MatJet::zeros(n, nvars, order);
        for i in 0..n {
            z.e[i * n + i] = CJet::constant(nvars, order, Complex64::new(1.0, 0.0));
        }
        z
    }

    /// Row-major entries.
    pub fn from_entries(n: usize, e: Vec<CJet>) -> Result<MatJet> {
        if e.len() != n * n {
            return Err(Error::DimensionMismatch(format!("expected {} matrix entries", n * n)));
        }
        let order = e.iter().map(|c| c.order()).min().unwrap_or(0);
        Ok(MatJet { n, e: e.into_iter().map(|c| c.truncate(order)).collect() })
    }

    /// `f · id` for a scalar jet.
    pub fn scalar(n: usize, f: &CJet) -> MatJet {
        let mut z = MatJet::zeros(n, f.nvars(), f.order());
        for i in 0..n {
            z.e[i * n + i] = f.clone();
        }
        z
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.e.first().map_or(0, |c| c.order())
    }

    pub fn nvars(&self) -> usize {
        self.e.first().map_or(0, |c| c.nvars())
    }

    pub fn entry(&self, i: usize, j: usize) -> &CJet {
        &self.e[i * self.n + j]
    }

    pub fn value(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.e[i * self.n + j].value())
    }

    pub fn d(&self, k: usize) -> MatJet {
        MatJet { n: self.n, e: self.e.iter().map(|c| c.d(k)).collect() }
    }

    pub fn truncate(&self, order: usize) -> MatJet {
        MatJet { n: self.n, e: self.e.iter().map(|c| c.truncate(order)).collect() }
    }

    pub fn add(&self, o: &MatJet) -> MatJet {
        MatJet { n: self.n, e: self.e.iter().zip(&o.e).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &MatJet) -> MatJet {
        MatJet { n: self.n, e: self.e.iter().zip(&o.e).map(|(a, b)| a - b).collect() }
    }

    pub fn mul(&self, o: &MatJet) -> MatJet {
        let n = self.n;
        let mut e = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = self.e[i * n].mul_ref(&o.e[j]);
                for k in 1..n {
                    acc = &acc + &self.e[i * n + k].mul_ref(&o.e[k * n + j]);
                }
                e.push(acc);
            }
        }
        MatJet { n, e }
    }

    pub fn commutator(&self, o: &MatJet) -> MatJet {
        self.mul(o).sub(&o.mul(self))
    }

    pub fn scale(&self, s: Complex64) -> MatJet {
        MatJet { n: self.n, e: self.e.iter().map(|c| c.scale(s)).collect() }
    }

    /// Entrywise product with a real scalar jet.
    pub fn times(&self, f: &RJet) -> MatJet {
        let f = f.to_complex();
        MatJet { n: self.n, e: self.e.iter().map(|c| c.mul_ref(&f)).collect() }
    }

    pub fn trace(&self) -> CJet {
        let mut acc = self.e[0].clone();
        for i in 1..self.n {
            acc = &acc + &self.e[i * self.n + i];
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.e.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }
}

/// Coefficients of `D = −(g^{ij} ∂_i∂_j + A^k ∂_k + B)` at a point.
#[derive(Clone, Debug)]
pub struct LaplaceCoefficients {
    pub dim: usize,
    pub fiber: usize,
    /// `g^{ij}` jets, row-major.
    pub ginv: Vec<RJet>,
    pub a: Vec<MatJet>,
    pub b: MatJet,
}

impl LaplaceCoefficients {
    pub fn new(jet: &MetricJet, a: Vec<MatJet>, b: MatJet) -> Result<LaplaceCoefficients> {
        let m = jet.dim();
        if a.len() != m {
            return Err(Error::DimensionMismatch(format!("need {m} first-order coefficients, got {}", a.len())));
        }
        let fiber = b.n();
        if a.iter().any(|x| x.n() != fiber || x.nvars() != m) || b.nvars() != m {
            return Err(Error::DimensionMismatch("coefficient matrices disagree on fiber size or variables".into()));
        }
        Ok(LaplaceCoefficients { dim: m, fiber, ginv: jet.inverse()?, a, b })
    }
}

/// Canonical connection 1-form `ω`, endomorphism `E` and curvature `Ω`.
#[derive(Clone, Debug)]
pub struct CanonicalData {
    pub dim: usize,
    pub fiber: usize,
    pub geometry: Geometry,
    pub omega: Vec<MatJet>,
    pub e: MatJet,
    /// `Ω_ij` at the point in coordinate components, index `i*m + j`.
    pub curvature: Vec<DMatrix<Complex64>>,
}

fn rj_c(x: &RJet) -> CJet {
    x.to_complex()
}

/// Splits a Laplace-type operator into `(∇, E)` with `D = −(Tr ∇² + E)`.
pub fn canonicalize(op: &LaplaceCoefficients, jet: &MetricJet) -> Result<CanonicalData> {
    let m = jet.dim();
    if op.dim != m {
        return Err(Error::DimensionMismatch(format!("operator dim {} vs metric dim {m}", op.dim)));
    }
    let geo = Geometry::new(jet)?;
    let scale = geo.ginv.iter().map(|c| c.value().abs()).fold(1.0, f64::max);
    for (x, y) in op.ginv.iter().zip(&geo.ginv) {
        if (x.value() - y.value()).abs() > 1e-10 * scale {
            return Err(Error::Invalid("operator leading symbol does not match the metric".into()));
        }
    }
    let n = op.fiber;
    let order_a = op.a.iter().map(|x| x.order()).min().unwrap_or(0);
    let order_omega = order_a.min(jet.order() - 1);
    if order_omega < 1 {
        return Err(Error::MissingJet { needed: 2, available: jet.order().min(order_a + 1) });
    }
    // ω_i = ½ g_ij (A^j + g^{kl} Γ_kl^j id)
    let mut contracted = Vec::with_capacity(m);
    for j in 0..m {
        let mut acc = RJet::zeros(m, order_omega);
        for k in 0..m {
            for l in 0..m {
                acc = &acc + &geo.ginv[k * m + l].mul_ref(geo.gamma(k, l, j));
            }
        }
        contracted.push(op.a[j].truncate(order_omega).add(&MatJet::scalar(n, &rj_c(&acc))));
    }
    let mut omega = Vec::with_capacity(m);
    for i in 0..m {
        let mut acc = MatJet::zeros(n, m, order_omega);
        for (j, c) in contracted.iter().enumerate() {
            acc = acc.add(&c.times(jet.component(i, j)));
        }
        omega.push(acc.scale(Complex64::new(0.5, 0.0)));
    }
    // E = B − g^{ij}(∂_i ω_j + ω_i ω_j − ω_k Γ_ij^k)
    let order_e = op.b.order().min(order_omega - 1);
    let mut e = op.b.truncate(order_e);
    for i in 0..m {
        for j in 0..m {
            let mut t = omega[j].d(i).add(&omega[i].mul(&omega[j]));
            for (k, ok) in omega.iter().enumerate() {
                t = t.sub(&ok.times(geo.gamma(i, j, k)));
            }
            e = e.sub(&t.truncate(order_e).times(&geo.ginv[i * m + j]));
        }
    }
    let mut curvature = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let om = omega[j].d(i).sub(&omega[i].d(j)).add(&omega[i].truncate(0).commutator(&omega[j].truncate(0)));
            curvature.push(om.value());
        }
    }
    Ok(CanonicalData { dim: m, fiber: n, geometry: geo, omega, e, curvature })
}

/// Rebuilds `(A, B)` from `(g, ω, E)`; inverse of [`canonicalize`].
pub fn recompose(can: &CanonicalData) -> Result<LaplaceCoefficients> {
    let m = can.dim;
    let n = can.fiber;
    let geo = &can.geometry;
    let order_omega = can.omega.iter().map(|x| x.order()).min().unwrap_or(0);
    // A^k = 2 g^{ik} ω_i − g^{ij} Γ_ij^k id
    let mut a = Vec::with_capacity(m);
    for k in 0..m {
        let mut acc = MatJet::zeros(n, m, order_omega);
        for (i, oi) in can.omega.iter().enumerate() {
            acc = acc.add(&oi.times(&geo.ginv[i * m + k]).scale(Complex64::new(2.0, 0.0)));
        }
        let mut s = RJet::zeros(m, order_omega);
        for i in 0..m {
            for j in 0..m {
                s = &s + &geo.ginv[i * m + j].mul_ref(geo.gamma(i, j, k));
            }
        }
        a.push(acc.sub(&MatJet::scalar(n, &rj_c(&s))).truncate(order_omega));
    }
    // B = g^{ij}(∂_i ω_j + ω_i ω_j − Γ_ij^k ω_k) + E
    let mut b = can.e.clone();
    for i in 0..m {
        for j in 0..m {
            let mut t = can.omega[j].d(i).add(&can.omega[i].mul(&can.omega[j]));
            for (k, ok) in can.omega.iter().enumerate() {
                t = t.sub(&ok.times(geo.gamma(i, j, k)));
            }
            b = b.add(&t.times(&geo.ginv[i * m + j]));
        }
    }
    let b = b.truncate(can.e.order());
    Ok(LaplaceCoefficients { dim: m, fiber: n, ginv: geo.ginv.clone(), a, b })
}

impl CanonicalData {
    /// `E_{;kk}` at the point.
    pub fn e_laplacian(&self) -> Result<DMatrix<Complex64>> {
        let m = self.dim;
        if self.e.order() < 2 {
            return Err(Error::MissingJet { needed: 2, available: self.e.order() });
        }
        let geo = &self.geometry;
        // E_{;k} as jets of order 1
        let ek: Vec<MatJet> = (0..m)
            .map(|k| self.e.d(k).add(&self.omega[k].truncate(1).commutator(&self.e.truncate(1))).truncate(1))
            .collect();
        let mut out = DMatrix::<Complex64>::zeros(self.fiber, self.fiber);
        for k in 0..m {
            for l in 0..m {
                let gkl = geo.ginv_value(k, l);
                if gkl == 0.0 {
                    continue;
                }
                // E_{;kl} = ∂_l E_{;k} + [ω_l, E_{;k}] − Γ_lk^j E_{;j}
                let mut v = ek[k].d(l).value() + commutator(&self.omega[l].value(), &ek[k].value());
                for (j, ej) in ek.iter().enumerate() {
                    v -= ej.value() * Complex64::new(geo.gamma(l, k, j).value(), 0.0);
                }
                out += v * Complex64::new(gkl, 0.0);
            }
        }
        Ok(out)
    }

    /// `Ω_ij Ω_ij` summed in an orthonormal frame.
    pub fn curvature_square(&self) -> DMatrix<Complex64> {
        let m = self.dim;
        let geo = &self.geometry;
        let mut out = DMatrix::<Complex64>::zeros(self.fiber, self.fiber);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let w = geo.ginv_value(i, k) * geo.ginv_value(j, l);
                        if w != 0.0 {
                            out += &self.curvature[i * m + j] * &self.curvature[k * m + l] * Complex64::new(w, 0.0);
                        }
                    }
                }
            }
        }
        out
    }

    /// Largest entry of `Ω_ij + Ω_ji`.
    pub fn curvature_antisymmetry_residual(&self) -> f64 {
        let m = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let s = &self.curvature[i * m + j] + &self.curvature[j * m + i];
                worst = worst.max(s.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
        worst
    }
}

fn commutator(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a * b - b * a
}

fn trace(a: &DMatrix<Complex64>) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Real part of a traced density; a visible imaginary part means the
/// operator was not formally self-adjoint and the density is rejected.
fn real_density(z: Complex64) -> Result<f64> {
    if z.im.abs() > 1e-9 * z.re.abs().max(1.0) {
        return Err(Error::Invalid(format!(
            "density has imaginary part {:.3e}; operator is not formally self-adjoint",
            z.im
        )));
    }
    Ok(z.re)
}

fn heat_prefactor(m: usize) -> f64 {
    (4.0 * PI).powf(-(m as f64) / 2.0)
}

/// `a_0 = (4π)^{−m/2} · fiber dimension`.
pub fn a0(can: &CanonicalData) -> f64 {
    heat_prefactor(can.dim) * can.fiber as f64
}

/// `a_2 = (4π)^{−m/2} · Tr(6E + τ) / 6`.
pub fn a2(can: &CanonicalData, pack: &CurvaturePack) -> Result<f64> {
    let e = can.e.value();
    let tr = trace(&e) * 6.0 + Complex64::new(pack.tau * can.fiber as f64, 0.0);
    real_density(tr * (heat_prefactor(can.dim) / 6.0))
}

/// `a_4 = (4π)^{−m/2}/360 · Tr{60E_{;kk} + 60τE + 180E² + 12τ_{;kk} + 5τ² − 2|ρ|² + 2|R|² + 30ΩΩ}`.
pub fn a4(can: &CanonicalData, pack: &CurvaturePack) -> Result<f64> {
    let tau_lap = pack.tau_laplacian.ok_or(Error::MissingJet { needed: 4, available: 2 })?;
    let e = can.e.value();
    let elap = can.e_laplacian()?;
    let oo = can.curvature_square();
    let n = can.fiber as f64;
    let tr = trace(&elap) * 60.0
        + trace(&e) * (60.0 * pack.tau)
        + trace(&(&e * &e)) * 180.0
        + trace(&oo) * 30.0
        + Complex64::new(
            n * (12.0 * tau_lap + 5.0 * pack.tau * pack.tau - 2.0 * pack.norm_rho2 + 2.0 * pack.norm_r2),
            0.0,
        );
    real_density(tr * (heat_prefactor(can.dim) / 360.0))
}

fn double_factorial_odd(n: usize) -> f64 {
    // (2n+1)!!
    (0..=n).map(|k| (2 * k + 1) as f64).product()
}

/// Leading (highest-derivative) part of `a_{2n}` on a flat chart:
/// `(4π)^{−m/2} / (2^{n+1}(2n+1)!!) · Δ^{n−1} Tr{(8n+4)E + 2nτ}` with `τ = 0`.
pub fn a2n_leading(can: &CanonicalData, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid("a2n_leading needs n ≥ 1".into()));
    }
    let m = can.dim;
    let metric = &can.geometry.metric;
    let curved = metric.components().iter().any(|c| c.coeffs().iter().skip(1).any(|&x| x != 0.0));
    if curved {
        return Err(Error::Unsupported("a2n_leading is defined for flat (constant-metric) charts only".into()));
    }
    let need = 2 * n - 2;
    if can.e.order() < need {
        return Err(Error::MissingJet { needed: need, available: can.e.order() });
    }
    let mut tr = can.e.trace().truncate(need);
    for _ in 0..n - 1 {
        let mut next = CJet::zeros(m, tr.order() - 2);
        for k in 0..m {
            for l in 0..m {
                let gkl = can.geometry.ginv_value(k, l);
                if gkl != 0.0 {
                    next = &next + &tr.d(k).d(l).scale(Complex64::new(gkl, 0.0));
                }
            }
        }
        tr = next;
    }
    let c = heat_prefactor(m) * (8 * n + 4) as f64 / (2f64.powi(n as i32 + 1) * double_factorial_odd(n));
    real_density(tr.value() * c)
}

// Permutations of 0..n with their signs (Heap's algorithm).
fn signed_permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut sign = 1.0;
    out.push((a.clone(), sign));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            sign = -sign;
            out.push((a.clone(), sign));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Euler form `𝓔_m`: the normalized sum over permutations `I`, `J` of
/// `sgn(I)sgn(J) R_{i_1 i_2 j_1 j_2} ⋯`; zero in odd dimension.
pub fn euler_form(pack: &CurvaturePack) -> f64 {
    let m = pack.dim;
    if m % 2 == 1 {
        return 0.0;
    }
    if m == 0 {
        return 1.0;
    }
    let mbar = m / 2;
    let perms = signed_permutations(m);
    let mut sum = 0.0;
    for (i, si) in &perms {
        for (j, sj) in &perms {
            let mut prod = si * sj;
            for k in 0..mbar {
                prod *= pack.r(i[2 * k], i[2 * k + 1], j[2 * k], j[2 * k + 1]);
                if prod == 0.0 {
                    break;
                }
            }
            sum += prod;
        }
    }
    let sign = if mbar.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * sum / (8f64.powi(mbar as i32) * PI.powi(mbar as i32) * factorial(mbar))
}

/// Volume of the unit round sphere `S^n`.
pub fn sphere_volume(n: usize) -> f64 {
    if n % 2 == 1 {
        let j = n.div_ceil(2);
        2.0 * PI.powi(j as i32) / factorial(j - 1)
    } else {
        let j = n / 2;
        factorial(j) * PI.powi(j as i32) * 2f64.powi(2 * j as i32 + 1) / factorial(2 * j)
    }
}

/// Boundary Chern–Gauss–Bonnet integrand `Q_{k,m}`. Tangential frame indices
/// are `0..m−1`; `l` is the `(m−1)×(m−1)` second fundamental form, row-major.
pub fn boundary_q(pack: &CurvaturePack, l: &[f64], k: usize, m: usize) -> Result<f64> {
    if m == 0 || 2 * k > m - 1 {
        return Err(Error::Invalid(format!("Q_{{k,m}} needs 0 ≤ 2k ≤ m−1 (k = {k}, m = {m})")));
    }
    if pack.dim != m {
        return Err(Error::DimensionMismatch(format!("curvature dim {} vs m = {m}", pack.dim)));
    }
    let t = m - 1;
    if l.len() != t * t {
        return Err(Error::DimensionMismatch("second fundamental form must be (m−1)×(m−1)".into()));
    }
    let perms = signed_permutations(t);
    let mut sum = 0.0;
    for (a, sa) in &perms {
        for (b, sb) in &perms {
            let mut prod = sa * sb;
            for q in 0..k {
                prod *= pack.r(a[2 * q], a[2 * q + 1], b[2 * q], b[2 * q + 1]);
            }
            for q in 2 * k..t {
                prod *= l[a[q] * t + b[q]];
            }
            sum += prod;
        }
    }
    let denom = (-8.0 * PI).powi(k as i32) * factorial(k) * factorial(t - 2 * k) * sphere_volume(t - 2 * k);
    Ok(sum / denom)
}

/// Boundary geometry and the mixed (Dirichlet/Robin) boundary operator.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    /// Second fundamental form `L_ab`, `(m−1)×(m−1)` row-major.
    pub l: Vec<f64>,
    pub pi_d: DMatrix<Complex64>,
    pub pi_n: DMatrix<Complex64>,
    /// Robin endomorphism on the Neumann part.
    pub s: DMatrix<Complex64>,
    /// `ψ_{:a}` for tangential `a`, when ψ varies along the boundary.
    pub psi_tangential: Option<Vec<DMatrix<Complex64>>>,
}

impl BoundaryData {
    pub fn new(
        l: Vec<f64>,
        pi_d: DMatrix<Complex64>,
        s: DMatrix<Complex64>,
        psi_tangential: Option<Vec<DMatrix<Complex64>>>,
    ) -> Result<BoundaryData> {
        let n = pi_d.nrows();
        if pi_d.ncols() != n || s.nrows() != n || s.ncols() != n {
            return Err(Error::DimensionMismatch("boundary projections must be square fiber matrices".into()));
        }
        let id = DMatrix::<Complex64>::identity(n, n);
        let pi_n = &id - &pi_d;
        let resid = |m: DMatrix<Complex64>| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if resid(&pi_d * &pi_d - &pi_d) > 1e-12 || resid(pi_d.adjoint() - &pi_d) > 1e-12 {
            return Err(Error::Invalid("π_D must be a self-adjoint projection".into()));
        }
        if resid(&pi_d * &s) > 1e-12 || resid(&s * &pi_d) > 1e-12 {
            return Err(Error::Invalid("Robin endomorphism must act on the Neumann part only".into()));
        }
        Ok(BoundaryData { l, pi_d, pi_n, s, psi_tangential })
    }

    /// Pure Dirichlet (`neumann = false`) or pure Neumann/Robin with `S = s·id`.
    pub fn uniform(l: Vec<f64>, fiber: usize, neumann: bool, s: f64) -> BoundaryData {
        let id = DMatrix::<Complex64>::identity(fiber, fiber);
        let zero = DMatrix::<Complex64>::zeros(fiber, fiber);
        let (pi_d, pi_n, s) =
            if neumann { (zero, id.clone(), id * Complex64::new(s, 0.0)) } else { (id, zero.clone(), zero) };
        BoundaryData { l, pi_d, pi_n, s, psi_tangential: None }
    }

    pub fn psi(&self) -> DMatrix<Complex64> {
        &self.pi_n - &self.pi_d
    }

    pub fn fiber(&self) -> usize {
        self.pi_d.nrows()
    }
}

/// Boundary density together with any caveats about defaulted terms.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryDensity {
    pub value: f64,
    pub warnings: Vec<String>,
}

/// Boundary heat invariants `a_ℓ^bd` for `ℓ ∈ {0, 1, 2}`. Frame index
/// `m − 1` (zero-based) is the inward normal.
pub fn boundary_a(ell: usize, bd: &BoundaryData, can: &CanonicalData, pack: &CurvaturePack) -> Result<BoundaryDensity> {
    let m = can.dim;
    let t = m - 1;
    if bd.fiber() != can.fiber {
        return Err(Error::DimensionMismatch("boundary data and operator disagree on fiber size".into()));
    }
    if bd.l.len() != t * t {
        return Err(Error::DimensionMismatch("second fundamental form must be (m−1)×(m−1)".into()));
    }
    let psi = bd.psi();
    let laa: f64 = (0..t).map(|a| bd.l[a * t + a]).sum();
    let labab: f64 = bd.l.iter().map(|x| x * x).sum();
    let mut warnings = Vec::new();
    let pre_bd = (4.0 * PI).powf(-(t as f64) / 2.0);
    let value = match ell {
        0 => real_density(trace(&psi) * (0.25 * pre_bd))?,
        1 => {
            let tr = Complex64::new(2.0 * laa * can.fiber as f64, 0.0) + trace(&bd.s) * 12.0;
            real_density(tr * (heat_prefactor(m) / 6.0))?
        }
        2 => {
            let e = can.e.value();
            let ramam: f64 = (0..t).map(|a| pack.r(a, t, a, t)).sum();
            let c = |x: f64| Complex64::new(x, 0.0);
            let mut tr = trace(&(&psi * &e)) * 96.0
                + trace(&psi) * (16.0 * pack.tau + 8.0 * ramam)
                + (trace(&bd.pi_n) * 13.0 - trace(&bd.pi_d) * 7.0) * c(laa * laa)
                + (trace(&bd.pi_n) * 2.0 + trace(&bd.pi_d) * 10.0) * c(labab)
                + trace(&bd.s) * (96.0 * laa)
                + trace(&(&bd.s * &bd.s)) * 192.0;
            match &bd.psi_tangential {
                Some(dpsi) => {
                    for d in dpsi {
                        tr -= trace(&(d * d)) * 12.0;
                    }
                }
                None => {
                    warnings.push("ψ assumed tangentially constant: the ψ_{:a}ψ_{:a} term was set to 0".to_string())
                }
            }
            real_density(tr * (pre_bd / 384.0))?
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "boundary invariant of order {ell}: only orders 0, 1, 2 are available"
            )))
        }
    };
    Ok(BoundaryDensity { value, warnings })
}

/// Twisted Dolbeault density `τ/(8π) − δ(Re Θ)/π` for `Θ = θ dz̄`, `z = x + iy`.
/// `Re Θ = Re θ dx + Im θ dy`.
pub fn dolbeault_a2(pack: &CurvaturePack, jet: &MetricJet, theta: &CJet) -> Result<f64> {
    if pack.dim != 2 || jet.dim() != 2 || theta.nvars() != 2 {
        return Err(Error::Unsupported("the Dolbeault density is implemented for real dimension 2".into()));
    }
    if theta.order() < 1 {
        return Err(Error::MissingJet { needed: 1, available: 0 });
    }
    let re = theta.re();
    let im = theta.im();
    let form = crate::tensor::OneFormJet::new(2, vec![re, im], false)?;
    let cov = crate::tensor::covariant_derivatives(&form, &jet.truncate(1), 1)?;
    Ok(pack.tau / (8.0 * PI) - cov.delta / PI)
}

/// Coefficients of the twisted de Rham Laplacian `Δ_Θ^p` on a flat chart with
/// the standard coframe; `theta[j]` are the (possibly complex) components.
/// Fiber basis: degree-`p` forms in increasing bitmask order.
pub fn twisted_de_rham_coefficients(theta: &[CJet], p: usize) -> Result<LaplaceCoefficients> {
    let m = theta.len();
    if m == 0 || p > m {
        return Err(Error::Invalid(format!("form degree {p} out of range for dimension {m}")));
    }
    let order = theta.iter().map(|t| t.order()).min().unwrap_or(0);
    if order < 1 {
        return Err(Error::MissingJet { needed: 1, available: 0 });
    }
    let full = 1usize << m;
    let dense = |v: Vec<f64>| -> MatJet {
        let e = v.iter().map(|&x| CJet::constant(m, order, Complex64::new(x, 0.0))).collect();
        MatJet { n: full, e }
    };
    let ext: Vec<MatJet> = (0..m).map(|j| dense(exterior::ext_matrix(m, j))).collect();
    let int: Vec<MatJet> = (0..m).map(|j| dense(exterior::int_matrix(m, j))).collect();
    let gamma: Vec<MatJet> = (0..m).map(|j| ext[j].sub(&int[j])).collect();
    let mut v = MatJet::zeros(full, m, order);
    for j in 0..m {
        let tj = MatJet::scalar(full, &theta[j].truncate(order));
        let tjc = MatJet::scalar(full, &theta[j].truncate(order).conj());
        v = v.add(&tj.mul(&ext[j])).add(&tjc.mul(&int[j]));
    }
    let mut a = Vec::with_capacity(m);
    for g in &gamma {
        a.push(g.mul(&v).add(&v.mul(g)).scale(Complex64::new(-1.0, 0.0)).truncate(order - 1));
    }
    let mut b = v.mul(&v).truncate(order - 1);
    for (j, g) in gamma.iter().enumerate() {
        b = b.add(&g.truncate(order - 1).mul(&v.d(j)));
    }
    let b = b.scale(Complex64::new(-1.0, 0.0));
    let idx: Vec<usize> = exterior::basis(m, p).into_iter().map(|s| s as usize).collect();
    let restrict = |x: &MatJet| -> MatJet {
        let k = idx.len();
        let mut e = Vec::with_capacity(k * k);
        for &r in &idx {
            for &c in &idx {
                e.push(x.e[r * full + c].clone());
            }
        }
        MatJet { n: k, e }
    };
    let a: Vec<MatJet> = a.iter().map(restrict).collect();
    let b = restrict(&b);
    let jet = MetricJet::euclidean(m, order);
    LaplaceCoefficients::new(&jet, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::tensor::{curvature, Chart};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn circle_theta(src: &str, x: f64, order: usize) -> CJet {
        Expr::parse(src).unwrap().eval_taylor(&[x], order).to_complex()
    }

    #[test]
    fn free_laplacian_on_circle() {
        let jet = MetricJet::euclidean(1, 4);
        let z = MatJet::zeros(1, 1, 4);
        let op = LaplaceCoefficients::new(&jet, vec![z.clone()], z).unwrap();
        let can = canonicalize(&op, &jet).unwrap();
        assert!(can.omega[0].max_abs() == 0.0);
        assert!(can.e.max_abs() == 0.0);
        let flat = CurvaturePack::flat(1);
        assert_eq!(a2(&can, &flat).unwrap(), 0.0);
        assert_eq!(a4(&can, &flat).unwrap(), 0.0);
        assert!((a0(&can) - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn twisted_circle_endomorphism_and_a2() {
        let x = 0.37;
        let th = circle_theta("0.7*sin(x) + 0.2*cos(3*x)", x, 5);
        let theta = |x: f64| 0.7 * x.sin() + 0.2 * (3.0 * x).cos();
        let dtheta = |x: f64| 0.7 * x.cos() - 0.6 * (3.0 * x).sin();
        let jet = MetricJet::euclidean(1, 4);
        let flat = CurvaturePack::flat(1);
        for (p, sign) in [(0usize, 1.0), (1, -1.0)] {
            let op = twisted_de_rham_coefficients(std::slice::from_ref(&th), p).unwrap();
            assert!(op.a[0].max_abs() < 1e-15);
            let can = canonicalize(&op, &jet).unwrap();
            let e = can.e.value()[(0, 0)];
            let want = sign * dtheta(x) - theta(x).powi(2);
            assert!((e.re - want).abs() < 1e-14 && e.im.abs() < 1e-15);
            let a2v = a2(&can, &flat).unwrap();
            assert!((a2v - want / (4.0 * PI).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn supertraced_a4_on_circle() {
        // (4π)^{−1/2}(θ'''/3 − 2θ'θ²) for θ = sin x + 0.5 cos 2x
        let x = 0.81;
        let th = circle_theta("sin(x) + 0.5*cos(2*x)", x, 7);
        let t = x.sin() + 0.5 * (2.0 * x).cos();
        let t1 = x.cos() - (2.0 * x).sin();
        let t3 = -x.cos() + 4.0 * (2.0 * x).sin();
        let jet = MetricJet::euclidean(1, 4);
        let flat = CurvaturePack::flat(1);
        let mut st = 0.0;
        for (p, sign) in [(0usize, 1.0), (1, -1.0)] {
            let can = canonicalize(&twisted_de_rham_coefficients(std::slice::from_ref(&th), p).unwrap(), &jet).unwrap();
            st += sign * a4(&can, &flat).unwrap();
        }
        let want = (t3 / 3.0 - 2.0 * t1 * t * t) / (4.0 * PI).sqrt();
        assert!((st - want).abs() < 1e-13, "{st} vs {want}");
    }

    #[test]
    fn a2n_leading_constants() {
        let x = 0.4;
        let th = circle_theta("0.3*sin(2*x)", x, 8);
        let jet = MetricJet::euclidean(1, 8);
        // degree 0 with E = θ' − θ²; n = 2 leading term is (4π)^{-1/2}·20/(8·15)·(E)''
        let can = canonicalize(&twisted_de_rham_coefficients(&[th], 0).unwrap(), &jet).unwrap();
        let e2 = can.e.trace().partial(&[2]).re;
        let v = a2n_leading(&can, 2).unwrap();
        assert!((v - e2 * 20.0 / 120.0 / (4.0 * PI).sqrt()).abs() < 1e-14);
        let v1 = a2n_leading(&can, 1).unwrap();
        assert!((v1 - a2(&can, &CurvaturePack::flat(1)).unwrap()).abs() < 1e-15);
        // constant E: higher leading terms vanish
        let th = circle_theta("0.5", x, 6);
        let can = canonicalize(&twisted_de_rham_coefficients(&[th], 0).unwrap(), &jet).unwrap();
        assert_eq!(a2n_leading(&can, 3).unwrap(), 0.0);
    }

    #[test]
    fn a2n_leading_rejects_curved_metric() {
        let jet = Chart::round_sphere(2, 1.0).unwrap().metric_jet(&[1.0, 0.0], 3).unwrap();
        let z = MatJet::zeros(1, 2, 3);
        let op = LaplaceCoefficients::new(&jet, vec![z.clone(), z.clone()], z).unwrap();
        // A must carry Γ-terms for a genuine Laplacian, but canonicalize accepts any A
        let can = canonicalize(&op, &jet).unwrap();
        assert!(matches!(a2n_leading(&can, 2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dolbeault_blocks_canonicalize_to_expected_e() {
        // Δ00 = A*A and Δ01 = AA* for A = 2(∂_z̄ + θ) on the flat torus.
        let p = [0.21, 0.63];
        let src_re = "0.3 + 0.5*sin(2*pi*x)";
        let src_im = "0.2*cos(2*pi*y) + 0.1*sin(2*pi*x)";
        let order = 4;
        let tr = Expr::parse(src_re).unwrap().eval_taylor(&p, order);
        let ti = Expr::parse(src_im).unwrap().eval_taylor(&p, order);
        let i = Complex64::new(0.0, 1.0);
        let th = &tr.to_complex() + &ti.to_complex().scale(i);
        let thb = th.conj();
        let dz = |f: &CJet| (&f.d(0) - &f.d(1).scale(i)).scale(c(0.5));
        let dzb = |f: &CJet| (&f.d(0) + &f.d(1).scale(i)).scale(c(0.5));
        let ax = (&th - &thb).scale(c(2.0)).truncate(order - 1);
        let ay = (&th + &thb).scale(-2.0 * i).truncate(order - 1);
        let mod2 = th.mul_ref(&thb).truncate(order - 1);
        let b00 = (&dz(&th).scale(c(4.0)) - &mod2.scale(c(4.0))).truncate(order - 1);
        let b01 = (&dzb(&thb).scale(c(-4.0)) - &mod2.scale(c(4.0))).truncate(order - 1);
        let jet = MetricJet::euclidean(2, order);
        let one = |f: CJet| MatJet::from_entries(1, vec![f]).unwrap();
        let mk = |b: CJet| {
            let op = LaplaceCoefficients::new(&jet, vec![one(ax.clone()), one(ay.clone())], one(b)).unwrap();
            canonicalize(&op, &jet).unwrap()
        };
        let c00 = mk(b00);
        let c01 = mk(b01);
        assert!(c00.omega[0].max_abs() > 0.1);
        let s = dz(&th).value() + dzb(&thb).value();
        let e00 = c00.e.value()[(0, 0)];
        let e01 = c01.e.value()[(0, 0)];
        assert!((e00 - s * 2.0).norm() < 1e-13);
        assert!((e01 + s * 2.0).norm() < 1e-13);
        assert!(((e00 - e01) - s * 4.0).norm() < 1e-13);
        // supertraced a2 agrees with the Dolbeault density
        let flat = CurvaturePack::flat(2);
        let st = a2(&c00, &flat).unwrap() - a2(&c01, &flat).unwrap();
        let dens = dolbeault_a2(&flat, &jet, &th).unwrap();
        assert!((st - dens).abs() < 1e-13);
    }

    #[test]
    fn euler_form_low_dimensions() {
        let jet = Chart::round_sphere(2, 1.0).unwrap().metric_jet(&[0.7, 0.0], 2).unwrap();
        let p = curvature(&jet).unwrap();
        assert!((euler_form(&p) - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let jet = Chart::round_sphere(4, 1.0).unwrap().metric_jet(&[0.7, 1.1, 0.5, 0.0], 2).unwrap();
        let p = curvature(&jet).unwrap();
        let display = (p.tau * p.tau - 4.0 * p.norm_rho2 + p.norm_r2) / (32.0 * PI * PI);
        assert!((euler_form(&p) - display).abs() < 1e-13);
        assert_eq!(euler_form(&CurvaturePack::flat(2)), 0.0);
        assert_eq!(euler_form(&CurvaturePack::flat(3)), 0.0);
    }

    #[test]
    fn sphere_volumes() {
        assert_eq!(sphere_volume(0), 2.0);
        assert!((sphere_volume(1) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_volume(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_volume(4) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn boundary_q_low_dimensions() {
        let flat2 = CurvaturePack::flat(2);
        assert!((boundary_q(&flat2, &[0.8], 0, 2).unwrap() - 0.8 / (2.0 * PI)).abs() < 1e-15);
        assert!(boundary_q(&flat2, &[0.8], 1, 2).is_err());
        // m = 3 display: (8π)^{-1}(R_{a1a2a2a1} + L_aaL_bb − L_abL_ab)
        let jet = Chart::round_sphere(2, 1.0).unwrap().metric_jet(&[0.7, 0.0], 2).unwrap();
        let s2 = curvature(&jet).unwrap();
        let mut r = vec![0.0; 81];
        for a in 0..2 {
            for b in 0..2 {
                for cc in 0..2 {
                    for d in 0..2 {
                        r[((a * 3 + b) * 3 + cc) * 3 + d] = 0.6 * s2.r(a, b, cc, d);
                    }
                }
            }
        }
        let pack3 = CurvaturePack::from_riemann(3, r);
        let l = [0.3, 0.1, 0.1, -0.7];
        let sum: f64 = (0..=1).map(|k| boundary_q(&pack3, &l, k, 3).unwrap()).sum();
        let rr = 2.0 * pack3.r(0, 1, 1, 0);
        let want = (rr + (l[0] + l[3]).powi(2) - l.iter().map(|x| x * x).sum::<f64>()) / (8.0 * PI);
        assert!((sum - want).abs() < 1e-14);
    }

    #[test]
    fn boundary_a_examples() {
        let jet = MetricJet::euclidean(1, 2);
        let z = MatJet::zeros(1, 1, 2);
        let op = LaplaceCoefficients::new(&jet, vec![z.clone()], z).unwrap();
        let can = canonicalize(&op, &jet).unwrap();
        let flat = CurvaturePack::flat(1);
        let dir = BoundaryData::uniform(vec![], 1, false, 0.0);
        assert_eq!(boundary_a(0, &dir, &can, &flat).unwrap().value, -0.25);
        let neu = BoundaryData::uniform(vec![], 1, true, 0.0);
        assert_eq!(boundary_a(1, &neu, &can, &flat).unwrap().value, 0.0);
        assert!(matches!(boundary_a(3, &neu, &can, &flat), Err(Error::Unsupported(_))));
        // Robin S = s on a flat half-space, fiber 2, m = 3
        let jet = MetricJet::euclidean(3, 2);
        let z = MatJet::zeros(2, 3, 2);
        let op = LaplaceCoefficients::new(&jet, vec![z.clone(), z.clone(), z.clone()], z).unwrap();
        let can = canonicalize(&op, &jet).unwrap();
        let s = 0.7;
        let rob = BoundaryData::uniform(vec![0.0; 4], 2, true, s);
        let got = boundary_a(2, &rob, &can, &CurvaturePack::flat(3)).unwrap();
        let want = 192.0 * s * s * 2.0 / 384.0 / (4.0 * PI);
        assert!((got.value - want).abs() < 1e-15);
        assert_eq!(got.warnings.len(), 1);
    }

    #[test]
    fn boundary_data_validation() {
        let id = DMatrix::<Complex64>::identity(2, 2);
        let half = id.clone() * c(0.5);
        assert!(BoundaryData::new(vec![], half, DMatrix::zeros(2, 2), None).is_err());
        let mut pd = DMatrix::<Complex64>::zeros(2, 2);
        pd[(0, 0)] = c(1.0);
        let mut s = DMatrix::<Complex64>::zeros(2, 2);
        s[(1, 1)] = c(0.4);
        let bd = BoundaryData::new(vec![], pd, s, None).unwrap();
        let psi = bd.psi();
        assert!((&psi * &psi - id).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn dolbeault_density_flat_and_errors() {
        let jet = MetricJet::euclidean(2, 2);
        let flat = CurvaturePack::flat(2);
        let th = CJet::constant(2, 2, Complex64::new(0.3, 0.2));
        assert_eq!(dolbeault_a2(&flat, &jet, &th).unwrap(), 0.0);
        let p = [0.1, 0.0];
        let th = Expr::parse("sin(2*pi*x)").unwrap().eval_taylor(&p, 2).to_complex();
        let v = dolbeault_a2(&flat, &jet, &th).unwrap();
        assert!((v - 2.0 * (2.0 * PI * 0.1).cos()).abs() < 1e-13);
        let j1 = MetricJet::euclidean(1, 2);
        assert!(dolbeault_a2(&CurvaturePack::flat(1), &j1, &th).is_err());
    }
}
