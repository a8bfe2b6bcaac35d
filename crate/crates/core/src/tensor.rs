//! Metric jets, Christoffel symbols, curvature and covariant derivatives.
//!
//! Jets are stored as truncated Taylor series of the metric components at a
//! point, so derivatives of derived tensors (Christoffel symbols, curvature,
//! scalar curvature) come out of the same arithmetic without extra stencils.
//!
//! Curvature convention: `R_ijk^l = ∂_i Γ_jk^l − ∂_j Γ_ik^l + Γ_im^l Γ_jk^m − Γ_jm^l Γ_ik^m`,
//! `R_ijkl = R_ijk^n g_nl`, which gives `R_1221 = +1` on the unit 2-sphere.
//! Ricci is `ρ_ij = R_ikkj` and scalar curvature `τ = ρ_ii = R_ijji`.
//! Pointwise outputs are expressed in the orthonormal frame obtained by
//! Gram–Schmidt on the coordinate vectors in order, so the last frame vector
//! is normal to the span of the first `m − 1` coordinate directions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::taylor::Taylor;

/// Highest metric derivative order carried by a jet.
pub const MAX_JET_ORDER: usize = 4;

type Jet = Taylor<f64>;

/// Metric components `g_ij` with all partial derivatives up to `order` at a point.
#[derive(Clone, Debug)]
pub struct MetricJet {
    dim: usize,
    order: usize,
    g: Vec<Jet>,
}

fn sorted_exponent(m: usize, ks: &[usize]) -> Vec<u8> {
    let mut e = vec![0u8; m];
    for &k in ks {
        e[k] += 1;
    }
    e
}

// Iterates over all index tuples of length `r` in `0..m`.
fn for_each_tuple(m: usize, r: usize, mut f: impl FnMut(&[usize])) {
    let mut t = vec![0usize; r];
    loop {
        f(&t);
        let mut pos = r;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            t[pos] += 1;
            if t[pos] < m {
                break;
            }
            t[pos] = 0;
        }
    }
}

impl MetricJet {
    /// Builds a jet from per-component Taylor series (row-major, `m × m`).
    pub fn new(dim: usize, g: Vec<Jet>) -> Result<MetricJet> {
        if dim == 0 {
            return Err(Error::Invalid("metric jet needs dimension at least 1".into()));
        }
        if g.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!("expected {} metric components, got {}", dim * dim, g.len())));
        }
        let order = g.iter().map(|c| c.order()).min().unwrap_or(0);
        if order > MAX_JET_ORDER {
            return Err(Error::OrderTooHigh(order));
        }
        let g: Vec<Jet> = g.into_iter().map(|c| c.truncate(order)).collect();
        for c in &g {
            if c.nvars() != dim {
                return Err(Error::DimensionMismatch("metric component has wrong variable count".into()));
            }
        }
        let scale = g.iter().map(|c| c.max_abs()).fold(1.0, f64::max);
        for i in 0..dim {
            for j in 0..i {
                let diff = (&g[i * dim + j] - &g[j * dim + i]).max_abs();
                if diff > 1e-12 * scale {
                    return Err(Error::Invalid(format!("metric jet not symmetric in ({i},{j})")));
                }
            }
        }
        let jet = MetricJet { dim, order, g };
        jet.cholesky()?;
        Ok(jet)
    }

    /// Flat metric `δ_ij` with vanishing derivatives. Flat jets carry no
    /// derivative data, so the order cap does not apply here.
    pub fn euclidean(dim: usize, order: usize) -> MetricJet {
        let g = (0..dim * dim).map(|k| Jet::constant(dim, order, if k / dim == k % dim { 1.0 } else { 0.0 })).collect();
        MetricJet { dim, order, g }
    }

    /// Builds a jet from dense arrays: `g` is `m×m`, `derivs[r]` holds the
    /// `(r+1)`-th partials laid out as `[i][j][k_1]..[k_{r+1}]`.
    pub fn from_arrays(dim: usize, g: &[f64], derivs: &[Vec<f64>]) -> Result<MetricJet> {
        let order = derivs.len();
        if order > MAX_JET_ORDER {
            return Err(Error::OrderTooHigh(order));
        }
        if g.len() != dim * dim {
            return Err(Error::DimensionMismatch("g must be m×m".into()));
        }
        let mut comps: Vec<Jet> = g.iter().map(|&v| Jet::constant(dim, order, v)).collect();
        for (r, arr) in derivs.iter().enumerate() {
            let nk = r + 1;
            let block = dim.pow(nk as u32);
            if arr.len() != dim * dim * block {
                return Err(Error::DimensionMismatch(format!("derivative array of order {nk} has wrong length")));
            }
            let scale = arr.iter().fold(1.0f64, |a, x| a.max(x.abs()));
            for i in 0..dim {
                for j in 0..dim {
                    let base = (i * dim + j) * block;
                    let mut bad = false;
                    for_each_tuple(dim, nk, |ks| {
                        let flat = ks.iter().fold(0, |acc, &k| acc * dim + k);
                        let mut sorted = ks.to_vec();
                        sorted.sort_unstable();
                        let sflat = sorted.iter().fold(0, |acc, &k| acc * dim + k);
                        if (arr[base + flat] - arr[base + sflat]).abs() > 1e-10 * scale {
                            bad = true;
                        }
                        if ks == sorted.as_slice() {
                            let e = sorted_exponent(dim, ks);
                            let fact: f64 = e.iter().map(|&x| crate::taylor::factorial(x as usize)).product();
                            comps[i * dim + j].set_coeff(&e, arr[base + flat] / fact);
                        }
                    });
                    if bad {
                        return Err(Error::Invalid(format!(
                            "derivative array of order {nk} is not symmetric in the derivative slots"
                        )));
                    }
                }
            }
        }
        MetricJet::new(dim, comps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn component(&self, i: usize, j: usize) -> &Jet {
        &self.g[i * self.dim + j]
    }

    pub fn components(&self) -> &[Jet] {
        &self.g
    }

    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.dim + j].value()
    }

    /// `∂_{k_1} … ∂_{k_r} g_ij` at the point.
    pub fn partial(&self, i: usize, j: usize, ks: &[usize]) -> Result<f64> {
        if ks.len() > self.order {
            return Err(Error::MissingJet { needed: ks.len(), available: self.order });
        }
        Ok(self.component(i, j).partial(&sorted_exponent(self.dim, ks)))
    }

    pub fn dg(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.partial(i, j, &[k])
    }

    pub fn d2g(&self, i: usize, j: usize, k: usize, l: usize) -> Result<f64> {
        self.partial(i, j, &[k, l])
    }

    /// Dense array of all `r`-th partials, layout `[i][j][k_1]..[k_r]`.
    pub fn dense(&self, r: usize) -> Result<Vec<f64>> {
        if r > self.order {
            return Err(Error::MissingJet { needed: r, available: self.order });
        }
        let m = self.dim;
        let mut out = Vec::with_capacity(m * m * m.pow(r as u32));
        for i in 0..m {
            for j in 0..m {
                for_each_tuple(m, r, |ks| out.push(self.component(i, j).partial(&sorted_exponent(m, ks))));
            }
        }
        Ok(out)
    }

    pub fn truncate(&self, order: usize) -> MetricJet {
        let order = order.min(self.order);
        MetricJet { dim: self.dim, order, g: self.g.iter().map(|c| c.truncate(order)).collect() }
    }

    fn value_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.g(i, j))
    }

    /// Lower Cholesky factor of `g` at the point.
    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        let g = self.value_matrix();
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(0));
        }
        g.cholesky().map(|c| c.l()).ok_or(Error::SingularMetric)
    }

    /// Orthonormal frame `F` with `Fᵀ g F = I`, upper triangular; column `a` is `e_a`.
    pub fn frame(&self) -> Result<DMatrix<f64>> {
        let l = self.cholesky()?;
        let linv = l.try_inverse().ok_or(Error::SingularMetric)?;
        Ok(linv.transpose())
    }

    /// Jet of the inverse metric `g^ij`.
    pub fn inverse(&self) -> Result<Vec<Jet>> {
        let m = self.dim;
        let g0 = self.value_matrix();
        let g0inv = g0.clone().try_inverse().ok_or(Error::SingularMetric)?;
        self.cholesky()?;
        let order = self.order;
        let c = |v: f64| Jet::constant(m, order, v);
        let g0inv_t: Vec<Jet> = (0..m * m).map(|k| c(g0inv[(k / m, k % m)])).collect();
        // N = G - G0 is nilpotent in the truncated algebra: G^{-1} = Σ (−G0^{-1} N)^k G0^{-1}
        let nmat: Vec<Jet> = (0..m * m).map(|k| self.g[k].add_scalar(-self.g[k].value())).collect();
        let x = mat_mul(m, &g0inv_t, &nmat).into_iter().map(|t| t.scale(-1.0)).collect::<Vec<_>>();
        let mut term = g0inv_t.clone();
        let mut sum = g0inv_t;
        for _ in 0..order {
            term = mat_mul(m, &x, &term);
            sum = sum.iter().zip(&term).map(|(a, b)| a + b).collect();
        }
        Ok(sum)
    }

    /// Pulls the jet back along `x = A y` (row-major `A`): `g'_ab = A_ia A_jb g_ij(Ay)`.
    pub fn linear_change(&self, a: &[f64]) -> Result<MetricJet> {
        let m = self.dim;
        if a.len() != m * m {
            return Err(Error::DimensionMismatch("change matrix must be m×m".into()));
        }
        let sub: Vec<Jet> = self.g.iter().map(|c| c.linear_substitute(a)).collect();
        let mut out = Vec::with_capacity(m * m);
        for p in 0..m {
            for q in 0..m {
                let mut acc = Jet::zeros(m, self.order);
                for i in 0..m {
                    for j in 0..m {
                        let w = a[i * m + p] * a[j * m + q];
                        if w != 0.0 {
                            acc = &acc + &sub[i * m + j].scale(w);
                        }
                    }
                }
                out.push(acc);
            }
        }
        MetricJet::new(m, out)
    }

    /// Block-diagonal product jet; the second factor's coordinates follow the first's.
    pub fn block_diag(&self, other: &MetricJet) -> MetricJet {
        let (m1, m2) = (self.dim, other.dim);
        let m = m1 + m2;
        let order = self.order.min(other.order);
        let embed = |t: &Jet, offset: usize| -> Jet {
            let mut out = Jet::zeros(m, order);
            let t = t.truncate(order);
            for (e, &c) in t.space().exponents().iter().zip(t.coeffs()) {
                let mut f = vec![0u8; m];
                f[offset..offset + e.len()].copy_from_slice(e);
                out.set_coeff(&f, c);
            }
            out
        };
        let mut g = vec![Jet::zeros(m, order); m * m];
        for i in 0..m1 {
            for j in 0..m1 {
                g[i * m + j] = embed(self.component(i, j), 0);
            }
        }
        for i in 0..m2 {
            for j in 0..m2 {
                g[(m1 + i) * m + m1 + j] = embed(other.component(i, j), m1);
            }
        }
        MetricJet { dim: m, order, g }
    }
}

fn mat_mul(m: usize, a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let mut acc = a[i * m].mul_ref(&b[j]);
            for k in 1..m {
                acc = &acc + &a[i * m + k].mul_ref(&b[k * m + j]);
            }
            out.push(acc);
        }
    }
    out
}

/// Derived jets shared by curvature and operator computations.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub metric: MetricJet,
    /// `g^ij` (order = metric order).
    pub ginv: Vec<Jet>,
    /// `Γ_ij^k` at index `(i*m + j)*m + k` (order = metric order − 1).
    pub gamma: Vec<Jet>,
    /// Orthonormal frame, column `a` is `e_a` in coordinates.
    pub frame: DMatrix<f64>,
}

impl Geometry {
    pub fn new(jet: &MetricJet) -> Result<Geometry> {
        if jet.order < 1 {
            return Err(Error::MissingJet { needed: 1, available: jet.order });
        }
        let m = jet.dim;
        let ginv = jet.inverse()?;
        let frame = jet.frame()?;
        let dg: Vec<Vec<Jet>> = jet.g.iter().map(|c| (0..m).map(|k| c.d(k)).collect()).collect();
        // first-kind symbols [ij,l] = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
        let mut first = Vec::with_capacity(m * m * m);
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    let t = &(&dg[j * m + l][i] + &dg[i * m + l][j]) - &dg[i * m + j][l];
                    first.push(t.scale(0.5));
                }
            }
        }
        let mut gamma = Vec::with_capacity(m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let mut acc = Jet::zeros(m, jet.order - 1);
                    for l in 0..m {
                        acc = &acc + &ginv[k * m + l].mul_ref(&first[(i * m + j) * m + l]);
                    }
                    gamma.push(acc);
                }
            }
        }
        Ok(Geometry { metric: jet.clone(), ginv, gamma, frame })
    }

    pub fn dim(&self) -> usize {
        self.metric.dim
    }

    pub fn gamma(&self, i: usize, j: usize, k: usize) -> &Jet {
        let m = self.dim();
        &self.gamma[(i * m + j) * m + k]
    }

    pub fn ginv_value(&self, i: usize, j: usize) -> f64 {
        self.ginv[i * self.dim() + j].value()
    }

    /// `R_ijk^l` as jets of order `metric order − 2`, index `((i*m+j)*m+k)*m+l`.
    pub fn riemann_up(&self) -> Result<Vec<Jet>> {
        let m = self.dim();
        if self.metric.order < 2 {
            return Err(Error::MissingJet { needed: 2, available: self.metric.order });
        }
        let dgam: Vec<Vec<Jet>> = self.gamma.iter().map(|c| (0..m).map(|k| c.d(k)).collect()).collect();
        let idx = |i: usize, j: usize, k: usize| (i * m + j) * m + k;
        let mut out = Vec::with_capacity(m.pow(4));
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let mut acc = &dgam[idx(j, k, l)][i] - &dgam[idx(i, k, l)][j];
                        for n in 0..m {
                            acc = &acc + &self.gamma[idx(i, n, l)].mul_ref(&self.gamma[idx(j, k, n)]);
                            acc = &acc - &self.gamma[idx(j, n, l)].mul_ref(&self.gamma[idx(i, k, n)]);
                        }
                        out.push(acc);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Scalar curvature as a jet of order `metric order − 2`.
    pub fn scalar_curvature(&self, riemann_up: &[Jet]) -> Jet {
        let m = self.dim();
        let mut acc = Jet::zeros(m, self.metric.order - 2);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    acc = &acc + &self.ginv[j * m + k].mul_ref(&riemann_up[((i * m + j) * m + k) * m + i]);
                }
            }
        }
        acc
    }

    /// `f_{;kk}` for a scalar jet of order ≥ 2.
    pub fn laplacian_scalar(&self, f: &Jet) -> Result<f64> {
        if f.order() < 2 {
            return Err(Error::MissingJet { needed: 2, available: f.order() });
        }
        let m = self.dim();
        let mut acc = 0.0;
        for k in 0..m {
            for l in 0..m {
                let gkl = self.ginv_value(k, l);
                if gkl == 0.0 {
                    continue;
                }
                let mut e = vec![0u8; m];
                e[k] += 1;
                e[l] += 1;
                let mut v = f.partial(&e);
                for j in 0..m {
                    let mut ej = vec![0u8; m];
                    ej[j] = 1;
                    v -= self.gamma(k, l, j).value() * f.partial(&ej);
                }
                acc += gkl * v;
            }
        }
        Ok(acc)
    }
}

/// Christoffel symbols `Γ_ij^k` at the point, index `(i*m + j)*m + k`.
pub fn christoffel(jet: &MetricJet) -> Result<Vec<f64>> {
    Ok(Geometry::new(jet)?.gamma.iter().map(|c| c.value()).collect())
}

/// Curvature data at a point, in the orthonormal frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvaturePack {
    pub dim: usize,
    /// `R_abcd`, index `((a*m+b)*m+c)*m+d`.
    pub riemann: Vec<f64>,
    /// `ρ_ab = R_acca`.
    pub ricci: Vec<f64>,
    pub tau: f64,
    pub norm_rho2: f64,
    pub norm_r2: f64,
    /// `τ_{;kk}`, present when the metric jet has order ≥ 4.
    pub tau_laplacian: Option<f64>,
}

impl CurvaturePack {
    pub fn flat(dim: usize) -> CurvaturePack {
        CurvaturePack {
            dim,
            riemann: vec![0.0; dim.pow(4)],
            ricci: vec![0.0; dim * dim],
            tau: 0.0,
            norm_rho2: 0.0,
            norm_r2: 0.0,
            tau_laplacian: Some(0.0),
        }
    }

    /// Builds a pack from a frame Riemann tensor, deriving the contractions.
    pub fn from_riemann(dim: usize, riemann: Vec<f64>) -> CurvaturePack {
        let m = dim;
        let r = |a: usize, b: usize, c: usize, d: usize| riemann[((a * m + b) * m + c) * m + d];
        let mut ricci = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                ricci[a * m + b] = (0..m).map(|c| r(a, c, c, b)).sum();
            }
        }
        let tau = (0..m).map(|a| ricci[a * m + a]).sum();
        let norm_rho2 = ricci.iter().map(|x| x * x).sum();
        let norm_r2 = riemann.iter().map(|x| x * x).sum();
        CurvaturePack { dim, riemann, ricci, tau, norm_rho2, norm_r2, tau_laplacian: None }
    }

    pub fn r(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let m = self.dim;
        self.riemann[((a * m + b) * m + c) * m + d]
    }

    /// Largest violation of the pair symmetries and the first Bianchi identity.
    pub fn symmetry_residual(&self) -> f64 {
        let m = self.dim;
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let v = self.r(a, b, c, d);
                        worst = worst
                            .max((v + self.r(b, a, c, d)).abs())
                            .max((v + self.r(a, b, d, c)).abs())
                            .max((v - self.r(c, d, a, b)).abs())
                            .max((v + self.r(b, c, a, d) + self.r(c, a, b, d)).abs());
                    }
                }
            }
        }
        worst
    }
}

// Applies the frame to one slot of a 4-tensor stored row-major.
fn transform_slot(m: usize, t: &[f64], f: &DMatrix<f64>, slot: usize) -> Vec<f64> {
    let stride = m.pow(3 - slot as u32);
    let mut out = vec![0.0; t.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let a = (idx / stride) % m;
        let base = idx - a * stride;
        *o = (0..m).map(|i| f[(i, a)] * t[base + i * stride]).sum();
    }
    out
}

/// Curvature pack at the jet's base point.
pub fn curvature(jet: &MetricJet) -> Result<CurvaturePack> {
    if jet.order < 2 {
        return Err(Error::MissingJet { needed: 2, available: jet.order });
    }
    let geo = Geometry::new(jet)?;
    curvature_from_geometry(&geo)
}

pub fn curvature_from_geometry(geo: &Geometry) -> Result<CurvaturePack> {
    let m = geo.dim();
    let up = geo.riemann_up()?;
    let mut low = vec![0.0; m.pow(4)];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    low[((i * m + j) * m + k) * m + l] =
                        (0..m).map(|n| up[((i * m + j) * m + k) * m + n].value() * geo.metric.g(n, l)).sum();
                }
            }
        }
    }
    let mut t = low;
    for slot in 0..4 {
        t = transform_slot(m, &t, &geo.frame, slot);
    }
    let mut pack = CurvaturePack::from_riemann(m, t);
    if geo.metric.order >= 4 {
        let tau = geo.scalar_curvature(&up);
        pack.tau_laplacian = Some(geo.laplacian_scalar(&tau)?);
    }
    Ok(pack)
}

/// A 1-form `Θ = Θ_i dx^i` given by component jets.
#[derive(Clone, Debug)]
pub struct OneFormJet {
    dim: usize,
    comps: Vec<Jet>,
    closed: bool,
}

impl OneFormJet {
    /// When `closed` is set, `∂_jΘ_i = ∂_iΘ_j` is checked on the whole jet.
    pub fn new(dim: usize, comps: Vec<Jet>, closed: bool) -> Result<OneFormJet> {
        if comps.len() != dim || comps.iter().any(|c| c.nvars() != dim) {
            return Err(Error::DimensionMismatch("1-form needs one component per coordinate".into()));
        }
        let order = comps.iter().map(|c| c.order()).min().unwrap_or(0);
        let comps: Vec<Jet> = comps.into_iter().map(|c| c.truncate(order)).collect();
        let form = OneFormJet { dim, comps, closed };
        if closed {
            let res = form.closedness_residual();
            let scale = form.comps.iter().map(|c| c.max_abs()).fold(1.0, f64::max);
            if res > 1e-10 * scale {
                return Err(Error::NotClosed(res));
            }
        }
        Ok(form)
    }

    pub fn zero(dim: usize, order: usize) -> OneFormJet {
        OneFormJet { dim, comps: vec![Jet::zeros(dim, order); dim], closed: true }
    }

    pub fn from_exprs(exprs: &[Expr], point: &[f64], order: usize, closed: bool) -> Result<OneFormJet> {
        let comps = exprs.iter().map(|e| e.eval_taylor(point, order)).collect();
        OneFormJet::new(point.len(), comps, closed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.comps.first().map_or(0, |c| c.order())
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn component(&self, i: usize) -> &Jet {
        &self.comps[i]
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.comps[i].value()
    }

    /// `∂_jΘ_i`.
    pub fn dtheta(&self, i: usize, j: usize) -> Result<f64> {
        if self.order() < 1 {
            return Err(Error::MissingJet { needed: 1, available: 0 });
        }
        let mut e = vec![0u8; self.dim];
        e[j] = 1;
        Ok(self.comps[i].partial(&e))
    }

    /// Largest coefficient of `∂_jΘ_i − ∂_iΘ_j` over the jet.
    pub fn closedness_residual(&self) -> f64 {
        if self.order() == 0 {
            return 0.0;
        }
        let m = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..i {
                let d = &self.comps[i].d(j) - &self.comps[j].d(i);
                worst = worst.max(d.max_abs());
            }
        }
        worst
    }
}

/// Iterated covariant derivatives of a 1-form at the point.
#[derive(Clone, Debug, Serialize)]
pub struct CovariantJets {
    /// `levels[r-1]` holds `Θ_{i;j_1…j_r}` at index `i*m^r + (j_1…j_r)` (coordinate components).
    pub levels: Vec<Vec<f64>>,
    /// `δΘ = −g^{ij} Θ_{i;j}`.
    pub delta: f64,
}

/// `Θ_{i;j}`, `Θ_{i;jk}`, … up to `order` (at most 3).
pub fn covariant_derivatives(theta: &OneFormJet, jet: &MetricJet, order: usize) -> Result<CovariantJets> {
    if order == 0 || order > 3 {
        return Err(Error::Invalid(format!("covariant derivative order {order} outside 1..=3")));
    }
    if theta.order() < order {
        return Err(Error::MissingJet { needed: order, available: theta.order() });
    }
    if jet.order < order {
        return Err(Error::MissingJet { needed: order, available: jet.order });
    }
    if theta.dim != jet.dim {
        return Err(Error::DimensionMismatch("1-form and metric dimensions differ".into()));
    }
    let m = jet.dim;
    let geo = Geometry::new(jet)?;
    // tensor with `rank` lower indices stored as jets, row-major
    let mut cur: Vec<Jet> = theta.comps.clone();
    let mut rank = 1usize;
    let mut levels = Vec::new();
    for _ in 0..order {
        let size = m.pow(rank as u32);
        let mut next = Vec::with_capacity(size * m);
        for idx in 0..size {
            for k in 0..m {
                let mut acc = cur[idx].d(k);
                for slot in 0..rank {
                    let stride = m.pow((rank - 1 - slot) as u32);
                    let s = (idx / stride) % m;
                    for l in 0..m {
                        let other = idx - s * stride + l * stride;
                        acc = &acc - &geo.gamma(k, s, l).mul_ref(&cur[other]);
                    }
                }
                next.push(acc);
            }
        }
        levels.push(next.iter().map(|c| c.value()).collect::<Vec<f64>>());
        cur = next;
        rank += 1;
    }
    let first = &levels[0];
    let mut delta = 0.0;
    for i in 0..m {
        for j in 0..m {
            delta -= geo.ginv_value(i, j) * first[i * m + j];
        }
    }
    Ok(CovariantJets { levels, delta })
}

/// Central-difference metric jet (4th-order stencils, `h = 1e-4`) for charts
/// given only as evaluators; supports first and second derivatives.
pub fn fd_metric_jet(dim: usize, f: &dyn Fn(&[f64]) -> Vec<f64>, point: &[f64], order: usize) -> Result<MetricJet> {
    const H: f64 = 1e-4;
    if order > 2 {
        return Err(Error::Unsupported(format!("finite-difference jets stop at order 2 (requested {order})")));
    }
    if point.len() != dim {
        return Err(Error::DimensionMismatch("point has wrong dimension".into()));
    }
    let eval = |shift: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut p = point.to_vec();
        for &(k, s) in shift {
            p[k] += s;
        }
        let v = f(&p);
        if v.len() != dim * dim {
            return Err(Error::DimensionMismatch("evaluator must return m×m values".into()));
        }
        Ok(v)
    };
    let c1 = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
    let c2 = [(-2.0, -1.0 / 12.0), (-1.0, 16.0 / 12.0), (0.0, -30.0 / 12.0), (1.0, 16.0 / 12.0), (2.0, -1.0 / 12.0)];
    let g0 = eval(&[])?;
    let mut comps: Vec<Jet> = g0.iter().map(|&v| Jet::constant(dim, order, v)).collect();
    let add = |comps: &mut [Jet], e: &[u8], vals: &[f64], scale: f64| {
        for (c, v) in comps.iter_mut().zip(vals) {
            let cur = c.coeff(e);
            c.set_coeff(e, cur + v * scale);
        }
    };
    if order >= 1 {
        for k in 0..dim {
            let mut e = vec![0u8; dim];
            e[k] = 1;
            for &(s, w) in &c1 {
                let v = eval(&[(k, s * H)])?;
                add(&mut comps, &e, &v, w / H);
            }
        }
    }
    if order >= 2 {
        for k in 0..dim {
            for l in k..dim {
                let mut e = vec![0u8; dim];
                e[k] += 1;
                e[l] += 1;
                if k == l {
                    for &(s, w) in &c2 {
                        let v = eval(&[(k, s * H)])?;
                        // Taylor coefficient of h_k² is ∂²/2
                        add(&mut comps, &e, &v, w / (H * H) / 2.0);
                    }
                } else {
                    for &(s, w) in &c1 {
                        for &(t, u) in &c1 {
                            let v = eval(&[(k, s * H), (l, t * H)])?;
                            add(&mut comps, &e, &v, w * u / (H * H));
                        }
                    }
                }
            }
        }
    }
    // symmetrize to remove round-off asymmetry
    let mut sym = comps.clone();
    for i in 0..dim {
        for j in 0..dim {
            sym[i * dim + j] = (&comps[i * dim + j] + &comps[j * dim + i]).scale(0.5);
        }
    }
    MetricJet::new(dim, sym)
}

/// Named metrics available to chart documents.
pub const BUILTIN_METRICS: &[&str] = &["euclidean", "round_sphere_2", "round_sphere_4", "flat_torus"];

/// A coordinate chart: metric expression table plus optional 1-form.
#[derive(Clone, Debug)]
pub struct Chart {
    pub dim: usize,
    /// `m × m` row-major expression table.
    pub metric: Vec<Expr>,
    pub theta: Option<Vec<Expr>>,
    pub builtin: Option<String>,
}

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn mul(a: Expr, b: Expr) -> Expr {
    Expr::Mul(Box::new(a), Box::new(b))
}

fn sin_sq(k: usize) -> Expr {
    Expr::Pow(Box::new(Expr::Call(crate::expr::Func::Sin, Box::new(Expr::Var(k)))), Box::new(num(2.0)))
}

impl Chart {
    pub fn euclidean(dim: usize) -> Chart {
        let metric = (0..dim * dim).map(|k| num(if k / dim == k % dim { 1.0 } else { 0.0 })).collect();
        Chart { dim, metric, theta: None, builtin: Some("euclidean".into()) }
    }

    /// Round `m`-sphere of radius `r` in iterated polar coordinates
    /// `g = r²(dx1² + sin²x1 dx2² + sin²x1 sin²x2 dx3² + …)`.
    pub fn round_sphere(dim: usize, radius: f64) -> Result<Chart> {
        if dim == 0 || radius <= 0.0 || !radius.is_finite() {
            return Err(Error::Invalid("round sphere needs dim ≥ 1 and positive radius".into()));
        }
        let mut metric = vec![num(0.0); dim * dim];
        for k in 0..dim {
            let mut e = num(radius * radius);
            for j in 0..k {
                e = mul(e, sin_sq(j));
            }
            metric[k * dim + k] = e;
        }
        let name = format!("round_sphere_{dim}");
        Ok(Chart { dim, metric, theta: None, builtin: Some(name) })
    }

    pub fn builtin(name: &str, dim: Option<usize>, radius: Option<f64>) -> Result<Chart> {
        match name {
            "euclidean" | "flat_torus" => {
                let d = dim.ok_or_else(|| Error::Invalid(format!("builtin '{name}' needs 'dim'")))?;
                let mut c = Chart::euclidean(d);
                c.builtin = Some(name.to_string());
                Ok(c)
            }
            "round_sphere_2" => Chart::round_sphere(2, radius.unwrap_or(1.0)),
            "round_sphere_4" => Chart::round_sphere(4, radius.unwrap_or(1.0)),
            _ => Err(Error::Invalid(format!(
                "unknown builtin metric '{name}' (expected one of {})",
                BUILTIN_METRICS.join(", ")
            ))),
        }
    }

    pub fn with_theta(mut self, theta: Vec<Expr>) -> Result<Chart> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("theta needs {} components, got {}", self.dim, theta.len())));
        }
        self.theta = Some(theta);
        Ok(self)
    }

    pub fn metric_at(&self, x: &[f64]) -> Vec<f64> {
        self.metric.iter().map(|e| e.eval(x)).collect()
    }

    pub fn metric_jet(&self, point: &[f64], order: usize) -> Result<MetricJet> {
        if order > MAX_JET_ORDER {
            return Err(Error::OrderTooHigh(order));
        }
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch("point has wrong dimension".into()));
        }
        let comps: Vec<Jet> = self.metric.iter().map(|e| e.eval_taylor(point, order)).collect();
        if comps.iter().any(|c| c.coeffs().iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(0));
        }
        MetricJet::new(self.dim, comps)
    }

    pub fn theta_jet(&self, point: &[f64], order: usize, closed: bool) -> Result<OneFormJet> {
        match &self.theta {
            Some(t) => OneFormJet::from_exprs(t, point, order, closed),
            None => Ok(OneFormJet::zero(self.dim, order)),
        }
    }

    /// Parses `{dim, metric: builtin | [[expr]], theta?: [expr], radius?}`.
    pub fn from_json(doc: &Value) -> Result<Chart> {
        #[derive(Deserialize)]
        struct ChartDoc {
            dim: Option<usize>,
            metric: Value,
            theta: Option<Vec<String>>,
            radius: Option<f64>,
        }
        let d: ChartDoc = serde_json::from_value(doc.clone())?;
        let chart = match &d.metric {
            Value::String(name) => Chart::builtin(name, d.dim, d.radius)?,
            Value::Array(rows) => {
                let m = rows.len();
                if let Some(dim) = d.dim {
                    if dim != m {
                        return Err(Error::DimensionMismatch(format!("dim {dim} but metric has {m} rows")));
                    }
                }
                let mut metric = Vec::with_capacity(m * m);
                for row in rows {
                    let row = row
                        .as_array()
                        .filter(|r| r.len() == m)
                        .ok_or_else(|| Error::Invalid("metric rows must be arrays of length dim".into()))?;
                    for cell in row {
                        metric.push(match cell {
                            Value::String(s) => Expr::parse(s)?,
                            Value::Number(n) => Expr::Num(n.as_f64().unwrap_or(f64::NAN)),
                            _ => return Err(Error::Invalid("metric entries must be strings or numbers".into())),
                        });
                    }
                }
                Chart { dim: m, metric, theta: None, builtin: None }
            }
            _ => return Err(Error::Invalid("'metric' must be a builtin name or an expression table".into())),
        };
        match d.theta {
            Some(t) => {
                let exprs = t.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
                chart.with_theta(exprs)
            }
            None => Ok(chart),
        }
    }

    pub fn to_json(&self) -> Value {
        let m = self.dim;
        let metric = match &self.builtin {
            Some(name) => Value::String(name.clone()),
            None => Value::Array(
                (0..m)
                    .map(|i| Value::Array((0..m).map(|j| Value::String(self.metric[i * m + j].to_string())).collect()))
                    .collect(),
            ),
        };
        let mut obj = serde_json::json!({ "dim": m, "metric": metric });
        if let Some(t) = &self.theta {
            obj["theta"] = Value::Array(t.iter().map(|e| Value::String(e.to_string())).collect());
        }
        obj
    }
}
