//! Spectra of graded operator sets, heat traces, kernel dimensions and
//! least-squares fits of short-time heat-trace expansions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complexes::GradedOperatorSet;
use crate::error::{Error, Result};
use crate::linalg::hermitian_eigenvalues;
use crate::par;

/// Fraction of each degree's spectrum treated as resolved by the truncation.
pub const RELIABLE_FRACTION: f64 = 0.6;
/// Budget for the heat-trace mass of discarded modes.
pub const TAIL_BUDGET: f64 = 1e-12;
/// Required ratio between the kernel threshold and the nearest eigenvalue on either side.
pub const GAP_RATIO: f64 = 100.0;
/// Relative kernel threshold, scaled by `max(1, Λ_max)`.
pub const KERNEL_TOLERANCE: f64 = 1e-8;
/// Highest expansion order accepted by [`fit_asymptotics`].
pub const MAX_FIT_ORDER: usize = 5;
/// Upper end of the default fit window.
pub const T_MAX: f64 = 2.0;
/// Largest accepted condition number of the column-scaled design matrix.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeSpectrum {
    pub p: usize,
    pub label: String,
    pub size: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

impl DegreeSpectrum {
    /// Distinct eigenvalues up to `limit` with multiplicities, grouping values
    /// that agree to `rel_tol · max(1, |λ|)`.
    pub fn degeneracies(&self, limit: f64, rel_tol: f64) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &v in self.eigenvalues.iter().take_while(|&&v| v <= limit) {
            match out.last_mut() {
                Some((w, k)) if (v - *w).abs() <= rel_tol * w.abs().max(1.0) => *k += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }
}

/// Per-degree spectra with the truncation metadata needed to use them safely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSet {
    pub complex: String,
    #[serde(rename = "N")]
    pub n: usize,
    /// Eigenvalues above this are treated as truncation-polluted and dropped.
    pub lambda_max: f64,
    /// Largest eigenvalue magnitude over all degrees.
    pub scale: f64,
    pub degrees: Vec<DegreeSpectrum>,
}

/// Kernel dimensions with the threshold and gap evidence behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub betti: Vec<usize>,
    pub index: i64,
    pub threshold: f64,
    /// Smallest over degrees of `min(λ_above / τ, τ / λ_below)`.
    pub gap_ratio: f64,
}

/// Which trace a fit or curve refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceSelection {
    Degree(usize),
    Super,
}

fn reliable_cutoff(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return f64::INFINITY;
    }
    let idx = ((RELIABLE_FRACTION * sorted.len() as f64) as usize).min(sorted.len() - 1);
    sorted[idx]
}

impl SpectrumSet {
    /// Wraps externally computed spectra (sorted on entry).
    pub fn from_eigenvalues(complex: &str, n: usize, degrees: Vec<(String, Vec<f64>)>) -> Result<SpectrumSet> {
        let degrees: Vec<DegreeSpectrum> = degrees
            .into_iter()
            .enumerate()
            .map(|(p, (label, mut ev))| {
                ev.sort_by(|a, b| a.total_cmp(b));
                DegreeSpectrum { p, label, size: ev.len(), eigenvalues: ev }
            })
            .collect();
        let scale = degrees.iter().flat_map(|d| d.eigenvalues.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        for d in &degrees {
            if let Some(&lo) = d.eigenvalues.first() {
                if !lo.is_finite() {
                    return Err(Error::NonFinite(0));
                }
                if lo < -1e-9 * scale.max(1.0) {
                    return Err(Error::Indefinite(lo));
                }
            }
        }
        let lambda_max = degrees.iter().map(|d| reliable_cutoff(&d.eigenvalues)).fold(f64::INFINITY, f64::min);
        Ok(SpectrumSet { complex: complex.into(), n, lambda_max, scale, degrees })
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn degree(&self, p: usize) -> &DegreeSpectrum {
        &self.degrees[p]
    }

    /// Number of eigenvalues above `Λ_max`, summed over degrees.
    pub fn discarded(&self) -> usize {
        self.degrees.iter().map(|d| d.eigenvalues.iter().filter(|&&v| v > self.lambda_max).count()).sum()
    }

    /// Smallest `t` with `discarded · e^{−t Λ_max} < 1e-12`.
    pub fn t_min(&self) -> f64 {
        let k = self.discarded();
        if k == 0 {
            return 0.0;
        }
        if self.lambda_max <= 0.0 {
            return f64::INFINITY;
        }
        (k as f64 / TAIL_BUDGET).ln().max(0.0) / self.lambda_max
    }

    /// Bound on the trace mass of the discarded modes at time `t`.
    pub fn tail_bound(&self, t: f64) -> f64 {
        self.discarded() as f64 * (-t * self.lambda_max).exp()
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Invalid(format!("heat time must be positive, got {t}")));
        }
        let t_min = self.t_min();
        if t < t_min {
            return Err(Error::BelowReliability { t, t_min });
        }
        Ok(())
    }

    /// `Tr e^{−tΔ^p}` over the resolved eigenvalues, one entry per degree.
    pub fn heat_trace(&self, t: f64) -> Result<Vec<f64>> {
        self.check_t(t)?;
        Ok(self
            .degrees
            .iter()
            .map(|d| d.eigenvalues.iter().take_while(|&&v| v <= self.lambda_max).map(|&v| (-t * v).exp()).sum())
            .collect())
    }

    /// Traces of the truncated operators themselves: every eigenvalue, no
    /// reliability cut and no window check.
    pub fn full_heat_trace(&self, t: f64) -> Vec<f64> {
        self.degrees.iter().map(|d| d.eigenvalues.iter().map(|&v| (-t * v).exp()).sum()).collect()
    }

    /// `Σ_p (−1)^p Tr e^{−tΔ^p}`.
    pub fn supertrace(&self, t: f64) -> Result<f64> {
        Ok(self.heat_trace(t)?.iter().enumerate().map(|(p, v)| if p % 2 == 0 { *v } else { -*v }).sum())
    }

    pub fn trace(&self, sel: TraceSelection, t: f64) -> Result<f64> {
        match sel {
            TraceSelection::Super => self.supertrace(t),
            TraceSelection::Degree(p) => {
                if p >= self.len() {
                    return Err(Error::Invalid(format!("degree {p} out of range 0..{}", self.len())));
                }
                Ok(self.heat_trace(t)?[p])
            }
        }
    }

    /// Kernel dimensions; fails with an ambiguous-kernel error when the gap
    /// around the threshold is narrower than [`GAP_RATIO`].
    pub fn kernel(&self) -> Result<KernelReport> {
        let tau = KERNEL_TOLERANCE * self.lambda_max.max(1.0);
        let mut betti = Vec::with_capacity(self.len());
        let mut worst = f64::INFINITY;
        for d in &self.degrees {
            let k = d.eigenvalues.iter().take_while(|&&v| v < tau).count();
            let above = d.eigenvalues.get(k).map_or(f64::INFINITY, |&v| v / tau);
            let below = if k == 0 { f64::INFINITY } else { tau / d.eigenvalues[k - 1].abs().max(f64::MIN_POSITIVE) };
            let ratio = above.min(below);
            if ratio < GAP_RATIO {
                return Err(Error::AmbiguousKernel { degree: d.p, ratio, required: GAP_RATIO });
            }
            worst = worst.min(ratio);
            betti.push(k);
        }
        let index = betti.iter().enumerate().map(|(p, &b)| if p % 2 == 0 { b as i64 } else { -(b as i64) }).sum();
        Ok(KernelReport { betti, index, threshold: tau, gap_ratio: worst })
    }

    pub fn betti(&self) -> Result<Vec<usize>> {
        Ok(self.kernel()?.betti)
    }

    pub fn index(&self) -> Result<i64> {
        Ok(self.kernel()?.index)
    }

    /// CSV rows `t, Tr^0, …, Tr^top, supertrace`.
    pub fn trace_csv(&self, ts: &[f64]) -> Result<String> {
        let mut out = String::from("t");
        for d in &self.degrees {
            out.push_str(&format!(",trace_{}", d.p));
        }
        out.push_str(",supertrace\n");
        for &t in ts {
            let tr = self.heat_trace(t)?;
            let st: f64 = tr.iter().enumerate().map(|(p, v)| if p % 2 == 0 { *v } else { -*v }).sum();
            out.push_str(&format!("{t:.17e}"));
            for v in &tr {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push_str(&format!(",{st:.17e}\n"));
        }
        Ok(out)
    }
}

/// Full spectrum of every degree.
pub fn eigensolve(ops: &GradedOperatorSet) -> Result<SpectrumSet> {
    let degrees = par::map(ops.laplacians(), hermitian_eigenvalues).into_iter().collect::<Result<Vec<_>>>()?;
    SpectrumSet::from_eigenvalues(
        ops.name(),
        ops.truncation(),
        ops.degrees().iter().map(|d| d.label.clone()).zip(degrees).collect(),
    )
}

/// `n` points spaced geometrically over `[a, b]`, endpoints included.
pub fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let r = (b / a).ln() / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { b } else { a * (r * i as f64).exp() }).collect()
}

/// Expansion orders and sampling for [`fit_asymptotics`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Reported orders `n`; the fitted power of `t` is `(n − m)/2`.
    pub orders: Vec<usize>,
    /// Extra higher orders fitted to absorb the truncated tail, not reported as results.
    pub guard: Vec<usize>,
    pub window: (f64, f64),
    pub points: usize,
    /// Bound on the weighted relative residual.
    pub tolerance: f64,
}

impl FitOptions {
    /// All orders `0..=k`.
    pub fn new(k: usize, window: (f64, f64)) -> Result<FitOptions> {
        if k > MAX_FIT_ORDER {
            return Err(Error::Invalid(format!("fit order {k} exceeds {MAX_FIT_ORDER}")));
        }
        Ok(FitOptions { orders: (0..=k).collect(), guard: Vec::new(), window, points: 24, tolerance: 1e-6 })
    }

    /// Even orders `0, 2, …, ≤ k`: closed manifolds have no odd terms.
    pub fn even(k: usize, window: (f64, f64)) -> Result<FitOptions> {
        let mut o = FitOptions::new(k, window)?;
        o.orders.retain(|n| n % 2 == 0);
        Ok(o)
    }

    /// Appends `extra` guard orders continuing the step of the reported ones.
    pub fn with_guard(mut self, extra: usize) -> FitOptions {
        let step = if self.orders.iter().all(|n| n % 2 == 0) { 2 } else { 1 };
        let mut next = self.orders.last().map_or(0, |n| n + step);
        for _ in 0..extra {
            self.guard.push(next);
            next += step;
        }
        self
    }

    pub fn with_points(mut self, points: usize) -> FitOptions {
        self.points = points;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> FitOptions {
        self.tolerance = tol;
        self
    }
}

/// Fitted coefficients `c_n` of `Tr ≈ Σ c_n t^{(n−m)/2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatFit {
    pub dim: usize,
    pub orders: Vec<usize>,
    pub powers: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// One-sigma uncertainty from the residual (zero for an exact fit).
    pub std_errors: Vec<f64>,
    pub guard_orders: Vec<usize>,
    pub guard_coefficients: Vec<f64>,
    /// Weighted residual norm `‖t^{m/2}(fit − trace)‖₂`.
    pub residual: f64,
    pub relative_residual: f64,
    pub tolerance: f64,
    pub t_grid: Vec<f64>,
    /// Bound on the discarded-mode contribution over the grid.
    pub truncation_bound: f64,
    pub condition: f64,
}

impl HeatFit {
    pub fn coefficient(&self, n: usize) -> Option<f64> {
        self.orders.iter().position(|&o| o == n).map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, n: usize) -> Option<f64> {
        self.orders.iter().position(|&o| o == n).map(|i| self.std_errors[i])
    }

    /// Evaluates the fitted series including guard terms.
    pub fn eval(&self, t: f64) -> f64 {
        let m = self.dim as f64;
        self.orders
            .iter()
            .zip(&self.coefficients)
            .chain(self.guard_orders.iter().zip(&self.guard_coefficients))
            .map(|(&n, c)| c * t.powf((n as f64 - m) / 2.0))
            .sum()
    }
}

/// Weighted least-squares fit of a trace evaluator on a geometric grid.
///
/// Rows are multiplied by `t^{m/2}` so the leading column is constant and the
/// residual is relative to the leading behaviour; columns are then scaled to
/// unit max norm before the SVD solve. `tail_bound` is recorded as the
/// truncation bound.
pub fn fit_asymptotics(
    trace: &(dyn Fn(f64) -> Result<f64> + Sync),
    m: usize,
    opts: &FitOptions,
    tail_bound: f64,
) -> Result<HeatFit> {
    let (a, b) = opts.window;
    if !(a > 0.0 && b > a && b.is_finite()) {
        return Err(Error::Invalid(format!("fit window ({a}, {b}) must satisfy 0 < t0 < t1")));
    }
    if opts.orders.is_empty() || opts.points < opts.orders.len() + opts.guard.len() {
        return Err(Error::Invalid("fit needs at least as many points as unknowns".into()));
    }
    let all: Vec<usize> = opts.orders.iter().chain(&opts.guard).copied().collect();
    let cols = all.len();
    let ts = geometric_grid(a, b, opts.points);
    let values = par::map(&ts, |&t| trace(t)).into_iter().collect::<Result<Vec<f64>>>()?;
    let half_m = m as f64 / 2.0;
    let mut design = DMatrix::<f64>::from_fn(ts.len(), cols, |i, j| ts[i].powf((all[j] as f64) / 2.0));
    let rhs = DVector::from_iterator(ts.len(), ts.iter().zip(&values).map(|(t, v)| v * t.powf(half_m)));
    let scales: Vec<f64> = (0..cols).map(|j| design.column(j).amax()).collect();
    for (j, s) in scales.iter().enumerate() {
        design.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition >= MAX_CONDITION {
        return Err(Error::IllConditioned { cond: condition });
    }
    let x = svd.solve(&rhs, 0.0).map_err(|e| Error::Invalid(e.to_string()))?;
    let resid = &design * &x - &rhs;
    let residual = resid.norm();
    // floor at unit RMS so identically vanishing supertraces are not judged on roundoff
    let relative_residual = residual / rhs.norm().max((ts.len() as f64).sqrt());
    let coeffs: Vec<f64> = (0..cols).map(|j| x[j] / scales[j]).collect();

    // covariance of the scaled unknowns: σ² V Σ⁻² Vᵀ
    let dof = ts.len().saturating_sub(cols).max(1) as f64;
    let sigma2 = residual * residual / dof;
    let v_t = svd.v_t.as_ref().expect("svd computed with V");
    let std_errors: Vec<f64> = (0..cols)
        .map(|j| {
            let var: f64 = (0..cols).map(|k| (v_t[(k, j)] / svd.singular_values[k]).powi(2)).sum();
            (sigma2 * var).sqrt() / scales[j]
        })
        .collect();
    if relative_residual > opts.tolerance {
        return Err(Error::FitResidual { residual: relative_residual, tolerance: opts.tolerance });
    }
    let k = opts.orders.len();
    Ok(HeatFit {
        dim: m,
        orders: opts.orders.clone(),
        powers: opts.orders.iter().map(|&n| (n as f64 - m as f64) / 2.0).collect(),
        coefficients: coeffs[..k].to_vec(),
        std_errors: std_errors[..k].to_vec(),
        guard_orders: opts.guard.clone(),
        guard_coefficients: coeffs[k..].to_vec(),
        residual,
        relative_residual,
        tolerance: opts.tolerance,
        t_grid: ts,
        truncation_bound: tail_bound,
        condition,
    })
}

/// Fits a per-degree trace or the supertrace of a spectrum set.
pub fn fit_spectrum(spec: &SpectrumSet, sel: TraceSelection, m: usize, opts: &FitOptions) -> Result<HeatFit> {
    let tail = spec.tail_bound(opts.window.0);
    fit_asymptotics(&|t| spec.trace(sel, t), m, opts, tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexes::{assemble_circle, assemble_interval, BoundaryFlavor};
    use crate::models::TwistForm;

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    #[test]
    fn circle_trace_matches_theta_identity() {
        let spec = eigensolve(&assemble_circle(&TwistForm::zero(&[TAU]), 32).unwrap()).unwrap();
        assert_eq!(&spec.degree(0).eigenvalues[..5], &[0.0, 1.0, 1.0, 4.0, 4.0]);
        let tr = spec.heat_trace(1.0).unwrap();
        // Σ e^{−n²} = √π Σ e^{−π²k²}
        let pi = std::f64::consts::PI;
        let dual: f64 = pi.sqrt() * (-3i32..=3).map(|k| (-pi * pi * (k * k) as f64).exp()).sum::<f64>();
        assert!((tr[0] - dual).abs() < 1e-13);
        assert!((tr[0] - 1.772637).abs() < 1e-6);
        assert!(spec.supertrace(1.0).unwrap().abs() < 1e-13);
    }

    #[test]
    fn reliability_window_is_enforced() {
        let spec = eigensolve(&assemble_circle(&TwistForm::zero(&[TAU]), 8).unwrap()).unwrap();
        assert_eq!(spec.lambda_max, 25.0);
        match spec.heat_trace(1e-3) {
            Err(Error::BelowReliability { t_min, .. }) => assert!((t_min - spec.t_min()).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!(spec.tail_bound(spec.t_min()) <= TAIL_BUDGET * (1.0 + 1e-12));
    }

    #[test]
    fn interval_kernel_and_fit() {
        let spec =
            eigensolve(&assemble_interval(std::f64::consts::PI, BoundaryFlavor::Relative, 200).unwrap()).unwrap();
        let k = spec.kernel().unwrap();
        assert_eq!(k.betti, vec![0, 1]);
        assert_eq!(k.index, -1);
        let fit =
            fit_spectrum(&spec, TraceSelection::Degree(0), 1, &FitOptions::new(3, (0.005, 0.5)).unwrap()).unwrap();
        let want = [std::f64::consts::PI.sqrt() / 2.0, -0.5, 0.0, 0.0];
        for (c, w) in fit.coefficients.iter().zip(want) {
            assert!((c - w).abs() < 1e-6, "{:?}", fit.coefficients);
        }
    }

    #[test]
    fn ambiguous_kernel_is_reported() {
        let spec = SpectrumSet::from_eigenvalues("toy", 0, vec![("a".into(), vec![1e-9, 1.0, 2.0])]).unwrap();
        assert!(matches!(spec.kernel(), Err(Error::AmbiguousKernel { degree: 0, .. })));
        let bad = SpectrumSet::from_eigenvalues("toy", 0, vec![("a".into(), vec![-1.0, 1.0])]);
        assert!(matches!(bad, Err(Error::Indefinite(_))));
    }

    #[test]
    fn ill_conditioned_design_is_rejected() {
        let opts = FitOptions::new(5, (0.999, 1.0)).unwrap();
        let r = fit_asymptotics(&|t| Ok(t.sqrt()), 1, &opts, 0.0);
        assert!(matches!(r, Err(Error::IllConditioned { .. })));
        assert!(FitOptions::new(6, (0.1, 1.0)).is_err());
    }

    #[test]
    fn guard_orders_follow_parity() {
        let o = FitOptions::even(4, (0.01, 0.1)).unwrap().with_guard(2);
        assert_eq!(o.orders, vec![0, 2, 4]);
        assert_eq!(o.guard, vec![6, 8]);
    }
}
