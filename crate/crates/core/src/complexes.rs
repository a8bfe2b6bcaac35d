//! Truncated elliptic complexes: twisted de Rham on flat tori, the interval
//! with relative/absolute conditions, the twisted Dolbeault complex on the
//! square complex torus, and products.
//!
//! Bases are the exact eigenbases of the untwisted operators (Fourier modes,
//! sines, cosines), so the untwisted parts are diagonal and a trigonometric
//! twist enters as a banded convolution. Fourier modes run over
//! `k ∈ [−N, N]^m`; flat index `Σ_j (k_j + N)(2N+1)^{m−1−j}`. A degree-`p`
//! basis element `(k, I)` sits at `mode · C(m, p) + position of I` with `I`
//! ordered as in [`crate::exterior::basis`], so on the torus the 1-forms come
//! as `(dx, dy)`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exterior::{basis, ext};
use crate::linalg::SparseMat;
use crate::models::TwistForm;
use crate::par;
use crate::trig::TrigPoly;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Per-degree size cap for [`product_complex`].
pub const DEFAULT_PRODUCT_CAP: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeInfo {
    pub p: usize,
    pub label: String,
    pub size: usize,
}

/// Elliptic boundary conditions for the de Rham complex of the interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryFlavor {
    /// Dirichlet on functions, Neumann on 1-forms.
    Relative,
    /// Neumann on functions, Dirichlet on 1-forms.
    Absolute,
}

impl std::str::FromStr for BoundaryFlavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(BoundaryFlavor::Relative),
            "absolute" => Ok(BoundaryFlavor::Absolute),
            _ => Err(Error::Invalid(format!("unknown boundary condition '{s}' (relative|absolute)"))),
        }
    }
}

impl BoundaryFlavor {
    /// Scalar condition induced on degree `p` of the interval complex.
    pub fn scalar_condition(self, p: usize) -> &'static str {
        match (self, p) {
            (BoundaryFlavor::Relative, 0) | (BoundaryFlavor::Absolute, 1) => "Dirichlet",
            _ => "Neumann",
        }
    }
}

/// Galerkin truncation of an elliptic complex: chain maps `d^p` and Laplacians
/// `Δ^p`, all in orthonormal bases.
#[derive(Clone, Debug)]
pub struct GradedOperatorSet {
    name: String,
    n: usize,
    degrees: Vec<DegreeInfo>,
    laplacians: Vec<SparseMat>,
    chains: Vec<SparseMat>,
    resolved: Vec<Vec<bool>>,
    boundaryless: bool,
}

impl GradedOperatorSet {
    /// Builds `Δ^p = d^{p*} d^p + d^{p−1} d^{p−1*}` from the chain maps.
    ///
    /// `resolved[p][i]` marks basis elements far enough from the truncation
    /// edge that the truncated chain maps agree with the exact ones there.
    pub fn from_chains(
        name: &str,
        n: usize,
        labels: Vec<String>,
        chains: Vec<SparseMat>,
        resolved: Vec<Vec<bool>>,
        boundaryless: bool,
    ) -> Result<GradedOperatorSet> {
        let sizes: Vec<usize> = resolved.iter().map(|r| r.len()).collect();
        if labels.len() != sizes.len() || chains.len() + 1 != sizes.len() {
            return Err(Error::DimensionMismatch(
                "need one label and mask per degree, one chain map between degrees".into(),
            ));
        }
        for (p, d) in chains.iter().enumerate() {
            if d.cols() != sizes[p] || d.rows() != sizes[p + 1] {
                return Err(Error::DimensionMismatch(format!("chain map {p} has shape {}x{}", d.rows(), d.cols())));
            }
        }
        let adj: Vec<SparseMat> = chains.iter().map(|d| d.adjoint()).collect();
        let laplacians = (0..sizes.len())
            .map(|p| {
                let mut lap = SparseMat::zeros(sizes[p], sizes[p]);
                if p < chains.len() {
                    lap = lap.add(&adj[p].matmul(&chains[p]));
                }
                if p > 0 {
                    lap = lap.add(&chains[p - 1].matmul(&adj[p - 1]));
                }
                lap
            })
            .collect();
        let degrees =
            labels.into_iter().enumerate().map(|(p, label)| DegreeInfo { p, label, size: sizes[p] }).collect();
        Ok(GradedOperatorSet { name: name.into(), n, degrees, laplacians, chains, resolved, boundaryless })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Truncation parameter `N`.
    pub fn truncation(&self) -> usize {
        self.n
    }

    pub fn degrees(&self) -> &[DegreeInfo] {
        &self.degrees
    }

    /// Number of degrees (`top degree + 1`).
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn laplacian(&self, p: usize) -> &SparseMat {
        &self.laplacians[p]
    }

    pub fn laplacians(&self) -> &[SparseMat] {
        &self.laplacians
    }

    /// `d^p`, mapping degree `p` to `p + 1`.
    pub fn chain(&self, p: usize) -> &SparseMat {
        &self.chains[p]
    }

    pub fn chains(&self) -> &[SparseMat] {
        &self.chains
    }

    pub fn resolved(&self, p: usize) -> &[bool] {
        &self.resolved[p]
    }

    pub fn is_boundaryless(&self) -> bool {
        self.boundaryless
    }

    /// `max_p ‖d^{p+1} d^p‖_max` on columns in the resolved subspace.
    pub fn chain_residual(&self) -> f64 {
        (0..self.chains.len().saturating_sub(1))
            .map(|p| self.chains[p + 1].matmul(&self.chains[p]).max_abs_on_columns(&self.resolved[p]))
            .fold(0.0, f64::max)
    }

    /// Largest Hermitian symmetry residual over the Laplacians.
    pub fn hermitian_residual(&self) -> f64 {
        self.laplacians.iter().map(|l| l.hermitian_residual()).fold(0.0, f64::max)
    }

    /// Writes a matrix bundle: one JSON header line, then every matrix as
    /// dense column-major little-endian `(re, im)` f64 pairs, Laplacians first
    /// then chain maps, in the order listed in the header.
    pub fn export_bundle(&self, w: &mut dyn Write) -> Result<()> {
        let mut entries = Vec::new();
        let mut offset = 0usize;
        let all: Vec<(String, &SparseMat)> = self
            .laplacians
            .iter()
            .enumerate()
            .map(|(p, m)| (format!("laplacian_{p}"), m))
            .chain(self.chains.iter().enumerate().map(|(p, m)| (format!("d_{p}"), m)))
            .collect();
        for (name, m) in &all {
            entries.push(json!({"name": name, "rows": m.rows(), "cols": m.cols(), "offset": offset}));
            offset += m.rows() * m.cols() * 16;
        }
        let header = json!({
            "format": "heatlab-matrix-bundle",
            "version": 1,
            "complex": self.name,
            "N": self.n,
            "degrees": self.degrees,
            "layout": "column-major, little-endian f64 pairs (re, im)",
            "matrices": entries,
        });
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (_, m) in &all {
            let d = m.to_dense();
            let mut buf = Vec::with_capacity(d.len() * 16);
            for v in d.iter() {
                buf.extend_from_slice(&v.re.to_le_bytes());
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }
}

/// Reads a bundle written by [`GradedOperatorSet::export_bundle`].
pub fn import_bundle(r: &mut dyn Read) -> Result<(Value, Vec<(String, DMatrix<Complex64>)>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl =
        bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Invalid("bundle has no header line".into()))?;
    let header: Value = serde_json::from_slice(&bytes[..nl])?;
    let body = &bytes[nl + 1..];
    let mut out = Vec::new();
    let mats = header["matrices"].as_array().ok_or_else(|| Error::Invalid("bundle header lacks matrices".into()))?;
    for m in mats {
        let get = |k: &str| {
            m[k].as_u64().map(|v| v as usize).ok_or_else(|| Error::Invalid(format!("matrix entry lacks {k}")))
        };
        let (rows, cols, off) = (get("rows")?, get("cols")?, get("offset")?);
        let end = off + rows * cols * 16;
        if end > body.len() {
            return Err(Error::Invalid("bundle truncated".into()));
        }
        let f = |i: usize| f64::from_le_bytes(body[i..i + 8].try_into().unwrap());
        let vals: Vec<Complex64> =
            (0..rows * cols).map(|i| Complex64::new(f(off + 16 * i), f(off + 16 * i + 8))).collect();
        out.push((m["name"].as_str().unwrap_or("").to_string(), DMatrix::from_vec(rows, cols, vals)));
    }
    Ok((header, out))
}

/// Fourier mode lattice `[−N, N]^m`.
struct Lattice {
    m: usize,
    n: usize,
    side: usize,
}

impl Lattice {
    fn new(m: usize, n: usize) -> Lattice {
        Lattice { m, n, side: 2 * n + 1 }
    }

    fn count(&self) -> usize {
        self.side.pow(self.m as u32)
    }

    fn mode(&self, mut idx: usize) -> Vec<i64> {
        let mut k = vec![0i64; self.m];
        for j in (0..self.m).rev() {
            k[j] = (idx % self.side) as i64 - self.n as i64;
            idx /= self.side;
        }
        k
    }

    fn index(&self, k: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for &kj in k {
            if kj.unsigned_abs() as usize > self.n {
                return None;
            }
            idx = idx * self.side + (kj + self.n as i64) as usize;
        }
        Some(idx)
    }

    fn within(&self, k: &[i64], margin: usize) -> bool {
        k.iter().all(|kj| kj.unsigned_abs() as usize + margin <= self.n)
    }
}

fn check_truncation(n: usize, bandwidth: usize) -> Result<()> {
    if n < bandwidth.max(1) {
        return Err(Error::Aliasing { n, bandwidth });
    }
    Ok(())
}

/// Twisted de Rham complex `d_Θ = d + ext(Θ)` on a flat torus of any dimension.
pub fn assemble_flat(twist: &TwistForm, n: usize) -> Result<GradedOperatorSet> {
    if !twist.is_closed() {
        return Err(Error::NotClosed(twist.closedness_residual()));
    }
    let m = twist.dim();
    let b = twist.bandwidth();
    check_truncation(n, b)?;
    let lat = Lattice::new(m, n);
    let modes = lat.count();
    let bases: Vec<Vec<u32>> = (0..=m).map(|p| basis(m, p)).collect();
    let pos = |p: usize, set: u32| bases[p].iter().position(|&s| s == set).expect("basis element");
    let periods = twist.periods().to_vec();
    let comps: Vec<Vec<(Vec<i64>, Complex64)>> =
        twist.components().iter().map(|c| c.coeffs().iter().map(|(k, v)| (k.clone(), *v)).collect()).collect();

    let mut chains = Vec::with_capacity(m);
    for p in 0..m {
        let (src, dst) = (&bases[p], &bases[p + 1]);
        let per_mode = par::map_range(modes, |mi| {
            let k = lat.mode(mi);
            let mut trip = Vec::new();
            for (ii, &set) in src.iter().enumerate() {
                let col = mi * src.len() + ii;
                for j in 0..m {
                    let Some((sign, to)) = ext(j, set) else { continue };
                    let jj = pos(p + 1, to);
                    let w = TAU * k[j] as f64 / periods[j];
                    if w != 0.0 {
                        trip.push((mi * dst.len() + jj, col, Complex64::new(0.0, sign * w)));
                    }
                    for (q, c) in &comps[j] {
                        let kq: Vec<i64> = k.iter().zip(q).map(|(a, b)| a + b).collect();
                        if let Some(row_mode) = lat.index(&kq) {
                            trip.push((row_mode * dst.len() + jj, col, c * sign));
                        }
                    }
                }
            }
            trip
        });
        chains.push(SparseMat::from_triplets(modes * dst.len(), modes * src.len(), per_mode.into_iter().flatten()));
    }
    let resolved = (0..=m)
        .map(|p| (0..modes).flat_map(|mi| std::iter::repeat_n(lat.within(&lat.mode(mi), b), bases[p].len())).collect())
        .collect();
    let labels = (0..=m).map(|p| format!("Λ^{p}")).collect();
    let name = match m {
        1 => "circle",
        2 => "torus",
        _ => "flat_torus",
    };
    GradedOperatorSet::from_chains(name, n, labels, chains, resolved, true)
}

/// Circle of circumference `2π` (or the twist's period) with `Θ = θ dx`.
pub fn assemble_circle(theta: &TwistForm, n: usize) -> Result<GradedOperatorSet> {
    if theta.dim() != 1 {
        return Err(Error::DimensionMismatch(format!("circle twist must be 1-dimensional, got {}", theta.dim())));
    }
    assemble_flat(theta, n)
}

/// Two-torus with `Θ = θ₁ dx + θ₂ dy`; `Θ` must be closed.
pub fn assemble_torus(theta: &TwistForm, n: usize) -> Result<GradedOperatorSet> {
    if theta.dim() != 2 {
        return Err(Error::DimensionMismatch(format!("torus twist must be 2-dimensional, got {}", theta.dim())));
    }
    assemble_flat(theta, n)
}

/// Untwisted interval `[0, L]`, `N` sine modes and `N + 1` cosine modes.
pub fn assemble_interval(length: f64, flavor: BoundaryFlavor, n: usize) -> Result<GradedOperatorSet> {
    if !(length > 0.0) || n == 0 {
        return Err(Error::Invalid("interval needs positive length and N >= 1".into()));
    }
    let w = |k: usize| k as f64 * std::f64::consts::PI / length;
    let (chain, sizes) = match flavor {
        // d sin_k = w_k cos_k; cos_0 spans the cokernel
        BoundaryFlavor::Relative => {
            (SparseMat::from_triplets(n + 1, n, (1..=n).map(|k| (k, k - 1, Complex64::new(w(k), 0.0)))), [n, n + 1])
        }
        // d cos_k = −w_k sin_k; cos_0 spans the kernel
        BoundaryFlavor::Absolute => {
            (SparseMat::from_triplets(n, n + 1, (1..=n).map(|k| (k - 1, k, Complex64::new(-w(k), 0.0)))), [n + 1, n])
        }
    };
    let labels = (0..2).map(|p| format!("Λ^{p} ({})", flavor.scalar_condition(p))).collect();
    let name = match flavor {
        BoundaryFlavor::Relative => "interval_relative",
        BoundaryFlavor::Absolute => "interval_absolute",
    };
    GradedOperatorSet::from_chains(name, n, labels, vec![chain], sizes.iter().map(|&s| vec![true; s]).collect(), false)
}

/// Twisted Dolbeault complex `A = 2(∂_z̄ + θ)` on `ℂ/(ℤ + iℤ)`; `θ` has unit periods.
///
/// `Λ^{0,1}` is represented by the coefficient of `dz̄`, so both degrees use
/// the same Fourier basis.
pub fn assemble_dolbeault_torus(theta: &TrigPoly, n: usize) -> Result<GradedOperatorSet> {
    if theta.periods() != [1.0, 1.0] {
        return Err(Error::Invalid("Dolbeault twist must live on the unit square torus".into()));
    }
    let b = theta.bandwidth();
    check_truncation(n, b)?;
    let lat = Lattice::new(2, n);
    let modes = lat.count();
    let coeffs: Vec<(Vec<i64>, Complex64)> = theta.coeffs().iter().map(|(k, v)| (k.clone(), *v)).collect();
    let pi = std::f64::consts::PI;
    let per_mode = par::map_range(modes, |mi| {
        let k = lat.mode(mi);
        // ∂_z̄ e^{2πi(k₁x + k₂y)} = (πi k₁ − π k₂) e^{…}
        let mut trip = vec![(mi, mi, Complex64::new(-2.0 * pi * k[1] as f64, 2.0 * pi * k[0] as f64))];
        for (q, c) in &coeffs {
            if let Some(r) = lat.index(&[k[0] + q[0], k[1] + q[1]]) {
                trip.push((r, mi, c * 2.0));
            }
        }
        trip
    });
    let a = SparseMat::from_triplets(modes, modes, per_mode.into_iter().flatten());
    let mask: Vec<bool> = (0..modes).map(|mi| lat.within(&lat.mode(mi), b)).collect();
    GradedOperatorSet::from_chains(
        "dolbeault_torus",
        n,
        vec!["Λ^(0,0)".into(), "Λ^(0,1)".into()],
        vec![a],
        vec![mask.clone(), mask],
        true,
    )
}

/// Product complex with the default per-degree size cap.
pub fn product_complex(c1: &GradedOperatorSet, c2: &GradedOperatorSet) -> Result<GradedOperatorSet> {
    product_complex_capped(c1, c2, DEFAULT_PRODUCT_CAP)
}

/// Product complex: `d = d₁ ⊗ 1 + (−1)^p 1 ⊗ d₂` and
/// `Δ^n = ⊕_{p+q=n} (Δ₁^p ⊗ 1 + 1 ⊗ Δ₂^q)`, blocks ordered by increasing `p`.
pub fn product_complex_capped(c1: &GradedOperatorSet, c2: &GradedOperatorSet, cap: usize) -> Result<GradedOperatorSet> {
    if !c1.boundaryless || !c2.boundaryless {
        return Err(Error::Unsupported("product complexes need boundaryless factors".into()));
    }
    let (l1, l2) = (c1.len(), c2.len());
    let top = l1 + l2 - 2;
    let s1: Vec<usize> = c1.degrees.iter().map(|d| d.size).collect();
    let s2: Vec<usize> = c2.degrees.iter().map(|d| d.size).collect();
    // block (p, q) of degree p + q starts at offsets[p + q][p]
    let mut offsets = vec![vec![usize::MAX; l1]; top + 1];
    let mut sizes = vec![0usize; top + 1];
    for (deg, offs) in offsets.iter_mut().enumerate() {
        for p in 0..l1 {
            if deg >= p && deg - p < l2 {
                offs[p] = sizes[deg];
                sizes[deg] += s1[p] * s2[deg - p];
            }
        }
    }
    if let Some(&big) = sizes.iter().max().filter(|&&s| s > cap) {
        return Err(Error::SizeCap { size: big, cap });
    }
    let id1: Vec<SparseMat> = s1.iter().map(|&s| SparseMat::identity(s)).collect();
    let id2: Vec<SparseMat> = s2.iter().map(|&s| SparseMat::identity(s)).collect();

    let mut laplacians = Vec::with_capacity(top + 1);
    let mut resolved = Vec::with_capacity(top + 1);
    for deg in 0..=top {
        let mut lap = SparseMat::zeros(sizes[deg], sizes[deg]);
        let mut mask = vec![false; sizes[deg]];
        for p in 0..l1 {
            if offsets[deg][p] == usize::MAX {
                continue;
            }
            let q = deg - p;
            let o = offsets[deg][p];
            lap.place(o, o, &c1.laplacians[p].kron(&id2[q]).add(&id1[p].kron(&c2.laplacians[q])));
            for (i, &r1) in c1.resolved[p].iter().enumerate() {
                for (j, &r2) in c2.resolved[q].iter().enumerate() {
                    mask[o + i * s2[q] + j] = r1 && r2;
                }
            }
        }
        laplacians.push(lap);
        resolved.push(mask);
    }
    let mut chains = Vec::with_capacity(top);
    for deg in 0..top {
        let mut d = SparseMat::zeros(sizes[deg + 1], sizes[deg]);
        for p in 0..l1 {
            if offsets[deg][p] == usize::MAX {
                continue;
            }
            let q = deg - p;
            let col = offsets[deg][p];
            if p + 1 < l1 && offsets[deg + 1][p + 1] != usize::MAX {
                d.place(offsets[deg + 1][p + 1], col, &c1.chains[p].kron(&id2[q]));
            }
            if q + 1 < l2 && offsets[deg + 1][p] != usize::MAX {
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                d.place(offsets[deg + 1][p], col, &id1[p].kron(&c2.chains[q]).scale(Complex64::new(sign, 0.0)));
            }
        }
        chains.push(d);
    }
    let degrees = (0..=top).map(|p| DegreeInfo { p, label: format!("Λ^{p}"), size: sizes[p] }).collect();
    Ok(GradedOperatorSet {
        name: format!("{}x{}", c1.name, c2.name),
        n: c1.n.max(c2.n),
        degrees,
        laplacians,
        chains,
        resolved,
        boundaryless: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigenvalues;

    fn circle_twist(src: &str) -> TwistForm {
        TwistForm::parse(&[TAU], &[src]).unwrap()
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    #[test]
    fn constant_circle_twist_shifts_spectrum() {
        let ops = assemble_circle(&circle_twist("0.3"), 6).unwrap();
        let want = sorted((-6i64..=6).map(|k| (k * k) as f64 + 0.09).collect());
        for p in 0..2 {
            let ev = hermitian_eigenvalues(ops.laplacian(p)).unwrap();
            for (a, b) in ev.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn circle_degree_swap_flips_twist_sign() {
        let plus = assemble_circle(&circle_twist("0.8*sin(x)"), 24).unwrap();
        let minus = assemble_circle(&circle_twist("-0.8*sin(x)"), 24).unwrap();
        let a = hermitian_eigenvalues(plus.laplacian(1)).unwrap();
        let b = hermitian_eigenvalues(minus.laplacian(0)).unwrap();
        for (x, y) in a.iter().zip(&b).take(20) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn aliasing_and_open_twists_are_rejected() {
        assert!(matches!(assemble_circle(&circle_twist("sin(3*x)"), 2), Err(Error::Aliasing { .. })));
        let open = TwistForm::parse(&[TAU, TAU], &["sin(y)", "0"]).unwrap();
        assert!(matches!(assemble_torus(&open, 4), Err(Error::NotClosed(_))));
    }

    #[test]
    fn torus_chain_property_on_resolved_modes() {
        let h = TrigPoly::parse("0.4*sin(x)*cos(y) + 0.2*cos(2*y)", &[TAU, TAU]).unwrap();
        let t =
            TwistForm::exact(&h).add(&TwistForm::constant(&[TAU, TAU], &[0.3.into(), (-0.2).into()]).unwrap()).unwrap();
        let ops = assemble_torus(&t, 6).unwrap();
        assert!(ops.chain_residual() < 1e-12);
        assert!(ops.hermitian_residual() < 1e-14);
        assert_eq!(ops.degrees().iter().map(|d| d.size).collect::<Vec<_>>(), vec![169, 338, 169]);
    }

    #[test]
    fn interval_spectra() {
        let rel = assemble_interval(std::f64::consts::PI, BoundaryFlavor::Relative, 5).unwrap();
        let e0 = hermitian_eigenvalues(rel.laplacian(0)).unwrap();
        let e1 = hermitian_eigenvalues(rel.laplacian(1)).unwrap();
        assert_eq!(e0, vec![1.0, 4.0, 9.0, 16.0, 25.0]);
        assert_eq!(e1, vec![0.0, 1.0, 4.0, 9.0, 16.0, 25.0]);
        let abs = assemble_interval(TAU, BoundaryFlavor::Absolute, 3).unwrap();
        assert_eq!(hermitian_eigenvalues(abs.laplacian(0)).unwrap(), vec![0.0, 0.25, 1.0, 2.25]);
        assert_eq!(rel.degrees()[0].label, "Λ^0 (Dirichlet)");
    }

    #[test]
    fn dolbeault_untwisted_spectrum() {
        let ops = assemble_dolbeault_torus(&TrigPoly::zero(&[1.0, 1.0]), 2).unwrap();
        let ev = hermitian_eigenvalues(ops.laplacian(0)).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        let want =
            sorted((-2i64..=2).flat_map(|a| (-2i64..=2).map(move |b| 4.0 * pi2 * (a * a + b * b) as f64)).collect());
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(hermitian_eigenvalues(ops.laplacian(1)).unwrap().len(), 25);
    }

    #[test]
    fn product_matches_torus() {
        let c1 = assemble_circle(&circle_twist("0.5 + 0.3*cos(x)"), 5).unwrap();
        let c2 = assemble_circle(&TwistForm::zero(&[TAU]), 5).unwrap();
        let prod = product_complex(&c1, &c2).unwrap();
        let torus = assemble_torus(&TwistForm::parse(&[TAU, TAU], &["0.5 + 0.3*cos(x)", "0"]).unwrap(), 5).unwrap();
        assert!(prod.chain_residual() < 1e-12);
        for p in 0..3 {
            let a = hermitian_eigenvalues(prod.laplacian(p)).unwrap();
            let b = hermitian_eigenvalues(torus.laplacian(p)).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        assert!(matches!(product_complex_capped(&c1, &c2, 100), Err(Error::SizeCap { .. })));
        let iv = assemble_interval(1.0, BoundaryFlavor::Relative, 3).unwrap();
        assert!(matches!(product_complex(&iv, &c2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn bundle_round_trip() {
        let ops = assemble_circle(&circle_twist("0.2*sin(x)"), 3).unwrap();
        let mut buf = Vec::new();
        ops.export_bundle(&mut buf).unwrap();
        let (header, mats) = import_bundle(&mut buf.as_slice()).unwrap();
        assert_eq!(header["N"], 3);
        assert_eq!(mats.len(), 3);
        assert_eq!(mats[0].1, ops.laplacian(0).to_dense());
        assert_eq!(mats[2].0, "d_0");
        assert_eq!(mats[2].1, ops.chain(0).to_dense());
    }
}
