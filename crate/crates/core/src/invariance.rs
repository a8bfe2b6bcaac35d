//! Monomials in jet variables of a metric and a 1-form, and the degree
//! counting that bounds the kernel of the dimension-restriction map.
//!
//! Variables are the coordinate jets `g_{ij/α}` (`|α| ≥ 2` in the interior,
//! first derivatives being normalized away) and `Θ_{i/β}`, with
//! `order(g_{ij/α}) = |α|` and `order(Θ_{i/β}) = |β| + 1`. In boundary mode the
//! last index is the inward normal, only tangential metric components occur,
//! and the order-1 variables `g_{ab/m}` (the second fundamental form up to a
//! factor −½) are added.
//!
//! Indices are stored 0-based and printed 1-based.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;

pub const MAX_DIM: usize = 5;
pub const MAX_ORDER: usize = 6;
/// Cap on the number of monomials materialized by one enumeration.
pub const MAX_MONOMIALS: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum JetVariable {
    /// `g_{ij/α}` with `i ≤ j` and `α` sorted.
    Metric { i: usize, j: usize, alpha: Vec<usize> },
    /// `Θ_{i/β}` with `β` sorted.
    Theta { i: usize, beta: Vec<usize> },
}

impl JetVariable {
    pub fn metric(i: usize, j: usize, mut alpha: Vec<usize>) -> JetVariable {
        alpha.sort_unstable();
        JetVariable::Metric { i: i.min(j), j: i.max(j), alpha }
    }

    pub fn theta(i: usize, mut beta: Vec<usize>) -> JetVariable {
        beta.sort_unstable();
        JetVariable::Theta { i, beta }
    }

    pub fn order(&self) -> usize {
        match self {
            JetVariable::Metric { alpha, .. } => alpha.len(),
            JetVariable::Theta { beta, .. } => beta.len() + 1,
        }
    }

    /// Number of occurrences of index `mu`.
    pub fn deg(&self, mu: usize) -> usize {
        let count = |v: &[usize]| v.iter().filter(|&&x| x == mu).count();
        match self {
            JetVariable::Metric { i, j, alpha } => (*i == mu) as usize + (*j == mu) as usize + count(alpha),
            JetVariable::Theta { i, beta } => (*i == mu) as usize + count(beta),
        }
    }

    pub fn is_theta(&self) -> bool {
        matches!(self, JetVariable::Theta { .. })
    }

    fn indices(&self) -> Vec<usize> {
        match self {
            JetVariable::Metric { i, j, alpha } => [*i, *j].into_iter().chain(alpha.iter().copied()).collect(),
            JetVariable::Theta { i, beta } => std::iter::once(*i).chain(beta.iter().copied()).collect(),
        }
    }

    fn map_indices(&self, f: impl Fn(usize) -> usize) -> JetVariable {
        match self {
            JetVariable::Metric { i, j, alpha } => {
                JetVariable::metric(f(*i), f(*j), alpha.iter().map(|&a| f(a)).collect())
            }
            JetVariable::Theta { i, beta } => JetVariable::theta(f(*i), beta.iter().map(|&b| f(b)).collect()),
        }
    }
}

impl fmt::Display for JetVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = |v: &[usize]| v.iter().map(|x| (x + 1).to_string()).collect::<String>();
        match self {
            JetVariable::Metric { i, j, alpha } => write!(f, "g_{{{}{}/{}}}", i + 1, j + 1, digits(alpha)),
            JetVariable::Theta { i, beta } if beta.is_empty() => write!(f, "Θ_{{{}}}", i + 1),
            JetVariable::Theta { i, beta } => write!(f, "Θ_{{{}/{}}}", i + 1, digits(beta)),
        }
    }
}

/// Where an enumeration lives: dimension, boundary flag, whether Θ occurs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct JetContext {
    pub m: usize,
    pub with_theta: bool,
    pub boundary: bool,
}

impl JetContext {
    pub fn new(m: usize, with_theta: bool, boundary: bool) -> JetContext {
        JetContext { m, with_theta, boundary }
    }

    /// The inward normal index in boundary mode.
    pub fn normal(&self) -> Option<usize> {
        self.boundary.then(|| self.m - 1)
    }

    /// Indices whose degree the counting argument constrains.
    pub fn constrained(&self) -> std::ops::Range<usize> {
        if self.boundary {
            0..self.m - 1
        } else {
            0..self.m
        }
    }

    /// Index removed by the restriction map.
    pub fn removed_index(&self) -> usize {
        if self.boundary {
            0
        } else {
            self.m - 1
        }
    }

    /// Whether `v` is an admissible variable in this context.
    pub fn admits(&self, v: &JetVariable) -> bool {
        let m = self.m;
        if v.indices().iter().any(|&x| x >= m) {
            return false;
        }
        match v {
            JetVariable::Theta { .. } => self.with_theta,
            JetVariable::Metric { i, j, alpha } => match self.normal() {
                None => alpha.len() >= 2,
                Some(nu) => *i != nu && *j != nu && (alpha.len() >= 2 || alpha.as_slice() == [nu]),
            },
        }
    }

    /// Second-fundamental-form variable `g_{ab/m}`.
    pub fn is_l_type(&self, v: &JetVariable) -> bool {
        matches!((v, self.normal()), (JetVariable::Metric { alpha, .. }, Some(nu)) if alpha.as_slice() == [nu])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JetMonomial {
    pub context: JetContext,
    pub vars: Vec<JetVariable>,
}

impl JetMonomial {
    pub fn new(ctx: JetContext, mut vars: Vec<JetVariable>) -> JetMonomial {
        vars.sort();
        JetMonomial { context: ctx, vars }
    }

    pub fn ctx(&self) -> JetContext {
        self.context
    }

    pub fn order(&self) -> usize {
        self.vars.iter().map(|v| v.order()).sum()
    }

    /// `deg_μ` for `μ = 0..m`.
    pub fn deg(&self) -> Vec<usize> {
        (0..self.context.m).map(|mu| self.vars.iter().map(|v| v.deg(mu)).sum()).collect()
    }

    pub fn theta_count(&self) -> usize {
        self.vars.iter().filter(|v| v.is_theta()).count()
    }

    /// Every constrained index occurs an even number of times.
    pub fn is_reflection_even(&self) -> bool {
        let d = self.deg();
        self.ctx().constrained().all(|mu| d[mu].is_multiple_of(2))
    }
}

impl fmt::Display for JetMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.vars.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.vars.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("·"))
    }
}

fn check_budget(ctx: JetContext, n: usize) -> Result<()> {
    if ctx.m == 0 || ctx.m > MAX_DIM || n > MAX_ORDER || (ctx.boundary && ctx.m < 2) {
        return Err(Error::BudgetExceeded(format!(
            "enumeration needs 1 <= m <= {MAX_DIM} (m >= 2 with boundary) and n <= {MAX_ORDER}, got m = {}, n = {n}",
            ctx.m
        )));
    }
    Ok(())
}

fn multisets(m: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for x in start..m {
            cur.push(x);
            rec(m, size, x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, size, 0, &mut Vec::with_capacity(size), &mut out);
    out
}

/// Canonical admissible variables of exactly order `k`, sorted.
pub fn variables(ctx: JetContext, k: usize) -> Vec<JetVariable> {
    let m = ctx.m;
    let mut out = Vec::new();
    if k >= 1 {
        for i in 0..m {
            for j in i..m {
                for alpha in multisets(m, k) {
                    let v = JetVariable::Metric { i, j, alpha };
                    if ctx.admits(&v) {
                        out.push(v);
                    }
                }
            }
        }
        if ctx.with_theta {
            for i in 0..m {
                for beta in multisets(m, k - 1) {
                    out.push(JetVariable::Theta { i, beta });
                }
            }
        }
    }
    out.sort();
    out
}

/// Number of monomials of total order `n` without materializing them.
pub fn count_monomials(ctx: JetContext, n: usize) -> u128 {
    // coefficient of x^n in Π_k (1 − x^k)^{−c_k}
    let mut poly = vec![0u128; n + 1];
    poly[0] = 1;
    for k in 1..=n {
        let c = variables(ctx, k).len();
        for _ in 0..c {
            for d in k..=n {
                poly[d] += poly[d - k];
            }
        }
    }
    poly[n]
}

/// All canonical monomials of total order `n`, sorted and duplicate-free.
pub fn enumerate_monomials(ctx: JetContext, n: usize) -> Result<Vec<JetMonomial>> {
    check_budget(ctx, n)?;
    let count = count_monomials(ctx, n);
    if count > MAX_MONOMIALS as u128 {
        return Err(Error::BudgetExceeded(format!("{count} monomials exceed the cap {MAX_MONOMIALS}")));
    }
    if n == 0 {
        return Ok(vec![JetMonomial::new(ctx, Vec::new())]);
    }
    let all: Vec<JetVariable> = (1..=n).flat_map(|k| variables(ctx, k)).collect::<BTreeSet<_>>().into_iter().collect();
    let orders: Vec<usize> = all.iter().map(|v| v.order()).collect();

    fn rec(orders: &[usize], start: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for idx in start..orders.len() {
            if orders[idx] <= left {
                cur.push(idx);
                rec(orders, idx, left - orders[idx], cur, out);
                cur.pop();
            }
        }
    }
    // one task per leading variable; results concatenate in sorted order
    let parts = par::map_range(all.len(), |first| {
        let mut out = Vec::new();
        if orders[first] <= n {
            rec(&orders, first, n - orders[first], &mut vec![first], &mut out);
        }
        out
    });
    Ok(parts
        .into_iter()
        .flatten()
        .map(|ix| JetMonomial { context: ctx, vars: ix.into_iter().map(|i| all[i].clone()).collect() })
        .collect())
}

/// Independent enumerator: every raw index assignment for every ordered
/// sequence of variable orders, canonicalized and deduplicated.
pub fn enumerate_brute_force(ctx: JetContext, n: usize) -> Result<Vec<JetMonomial>> {
    check_budget(ctx, n)?;
    let m = ctx.m;
    let tuples = |len: usize| -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for _ in 0..len {
            out = out.into_iter().flat_map(|t| (0..m).map(move |x| [t.clone(), vec![x]].concat())).collect();
        }
        out
    };
    let raw = |k: usize| -> Vec<JetVariable> {
        let mut out = Vec::new();
        for i in 0..m {
            for j in 0..m {
                for alpha in tuples(k) {
                    out.push(JetVariable::metric(i, j, alpha));
                }
            }
            if k >= 1 {
                for beta in tuples(k - 1) {
                    out.push(JetVariable::theta(i, beta));
                }
            }
        }
        out.retain(|v| ctx.admits(v));
        out
    };
    let raws: Vec<Vec<JetVariable>> = (0..=n).map(raw).collect();
    let mut seen: BTreeSet<Vec<JetVariable>> = BTreeSet::new();
    fn compositions(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        (1..=n).flat_map(|k| compositions(n - k).into_iter().map(move |c| [vec![k], c].concat())).collect()
    }
    for comp in compositions(n) {
        let mut partial: Vec<Vec<JetVariable>> = vec![Vec::new()];
        for &k in &comp {
            partial = partial
                .into_iter()
                .flat_map(|p| raws[k].iter().map(move |v| [p.clone(), vec![v.clone()]].concat()))
                .collect();
        }
        for mut vars in partial {
            vars.sort();
            seen.insert(vars);
        }
    }
    Ok(seen.into_iter().map(|vars| JetMonomial { context: ctx, vars }).collect())
}

/// Restriction to dimension `m − 1`: zero (`None`) if the monomial touches the
/// removed index; otherwise the same monomial in the smaller context (with the
/// index shift `i → i − 1` in boundary mode, where index 1 is removed).
pub fn restriction(mono: &JetMonomial) -> Option<JetMonomial> {
    let ctx = mono.ctx();
    let removed = ctx.removed_index();
    if mono.vars.iter().any(|v| v.deg(removed) > 0) {
        return None;
    }
    let lower = JetContext { m: ctx.m - 1, ..ctx };
    let vars =
        if ctx.boundary { mono.vars.iter().map(|v| v.map_indices(|x| x - 1)).collect() } else { mono.vars.clone() };
    Some(JetMonomial::new(lower, vars))
}

/// Monomials whose constrained degrees are all even; only these can occur in
/// polynomials invariant under coordinate reflections.
pub fn reflection_even(ctx: JetContext, n: usize) -> Result<Vec<JetMonomial>> {
    Ok(enumerate_monomials(ctx, n)?.into_iter().filter(|m| m.is_reflection_even()).collect())
}

/// Elimination rules of the kernel scan, applied in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Restriction,
    Permutation,
    Reflection,
}

impl Filter {
    pub const ALL: [Filter; 3] = [Filter::Restriction, Filter::Permutation, Filter::Reflection];

    pub fn rule(self) -> &'static str {
        match self {
            Filter::Restriction => {
                "survives restriction: a kernel element has every monomial touching the removed index"
            }
            Filter::Permutation => {
                "misses a constrained index: permuting coordinates moves the removed index onto any constrained one"
            }
            Filter::Reflection => "odd degree in a constrained index: x^μ → −x^μ changes the sign of the monomial",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub monomial: String,
    pub order: usize,
    pub deg: Vec<usize>,
    pub survives: bool,
    pub eliminated_by: Option<Filter>,
}

/// Degree bookkeeping for a survivor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Survivor {
    pub monomial: String,
    pub deg: Vec<usize>,
    /// Sum of constrained degrees, at least `2 · (number of constrained indices)`.
    pub constrained_degree: usize,
    /// Twice the order: the upper end of the degree chain.
    pub bound: usize,
    /// Whether the chain is tight (lower end equals upper end).
    pub equality: bool,
    pub theta_free: bool,
    /// Every metric variable is a tangential second derivative (`|α| = 2`, no normal index).
    pub second_order_metric_only: bool,
    /// Every variable is a second-fundamental-form variable `g_{ab/m}`.
    pub l_type_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelScan {
    pub m: usize,
    pub n: usize,
    pub with_theta: bool,
    pub boundary: bool,
    pub total: usize,
    pub eliminated: Vec<(Filter, usize)>,
    pub survivors: Vec<Survivor>,
    pub rows: Vec<ScanRow>,
    pub note: &'static str,
}

pub const SCAN_NOTE: &str = "filters act monomial by monomial, so survivors bound the kernel generators from above";

/// First filter eliminating `mono`, if any.
pub fn classify(mono: &JetMonomial) -> Option<Filter> {
    let ctx = mono.ctx();
    if restriction(mono).is_some() {
        return Some(Filter::Restriction);
    }
    let d = mono.deg();
    if ctx.constrained().any(|mu| d[mu] == 0) {
        return Some(Filter::Permutation);
    }
    if ctx.constrained().any(|mu| d[mu] % 2 == 1) {
        return Some(Filter::Reflection);
    }
    None
}

fn survivor(mono: &JetMonomial) -> Survivor {
    let ctx = mono.ctx();
    let d = mono.deg();
    let constrained_degree: usize = ctx.constrained().map(|mu| d[mu]).sum();
    let bound = 2 * mono.order();
    let nu = ctx.normal();
    let second_order_metric_only = mono.vars.iter().all(|v| match v {
        JetVariable::Metric { alpha, .. } => {
            ctx.is_l_type(v) || (alpha.len() == 2 && nu.is_none_or(|nu| !alpha.contains(&nu)))
        }
        JetVariable::Theta { .. } => true,
    });
    Survivor {
        monomial: mono.to_string(),
        deg: d,
        constrained_degree,
        bound,
        equality: 2 * ctx.constrained().len() == bound,
        theta_free: mono.theta_count() == 0,
        second_order_metric_only,
        l_type_only: !mono.vars.is_empty() && mono.vars.iter().all(|v| ctx.is_l_type(v)),
    }
}

/// Applies the restriction, permutation and reflection filters to every
/// monomial of order `n` and reports the survivors.
pub fn kernel_scan(ctx: JetContext, n: usize) -> Result<KernelScan> {
    let monos = enumerate_monomials(ctx, n)?;
    let verdicts = par::map(&monos, classify);
    let mut eliminated = vec![(Filter::Restriction, 0), (Filter::Permutation, 0), (Filter::Reflection, 0)];
    let mut rows = Vec::with_capacity(monos.len());
    let mut survivors = Vec::new();
    for (mono, v) in monos.iter().zip(verdicts) {
        match v {
            Some(f) => eliminated.iter_mut().find(|e| e.0 == f).expect("known filter").1 += 1,
            None => survivors.push(survivor(mono)),
        }
        rows.push(ScanRow {
            monomial: mono.to_string(),
            order: n,
            deg: mono.deg(),
            survives: v.is_none(),
            eliminated_by: v,
        });
    }
    Ok(KernelScan {
        m: ctx.m,
        n,
        with_theta: ctx.with_theta,
        boundary: ctx.boundary,
        total: monos.len(),
        eliminated,
        survivors,
        rows,
        note: SCAN_NOTE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interior(m: usize, theta: bool) -> JetContext {
        JetContext::new(m, theta, false)
    }

    fn boundary(m: usize, theta: bool) -> JetContext {
        JetContext::new(m, theta, true)
    }

    #[test]
    fn no_first_order_metric_variables() {
        assert!(enumerate_monomials(interior(2, false), 1).unwrap().is_empty());
        assert_eq!(enumerate_monomials(interior(2, true), 1).unwrap().len(), 2);
    }

    #[test]
    fn boundary_order_one_candidates() {
        let even = reflection_even(boundary(2, true), 1).unwrap();
        let names: Vec<String> = even.iter().map(|m| m.to_string()).collect();
        assert_eq!(names, vec!["g_{11/2}", "Θ_{2}"]);
    }

    #[test]
    fn order_two_interior_kinds() {
        let even = reflection_even(interior(2, true), 2).unwrap();
        let mut kinds = BTreeSet::new();
        for mono in &even {
            let kind: Vec<(bool, usize)> = mono.vars.iter().map(|v| (v.is_theta(), v.order())).collect();
            kinds.insert(kind);
        }
        let want: BTreeSet<Vec<(bool, usize)>> =
            [vec![(false, 2)], vec![(true, 1), (true, 1)], vec![(true, 2)]].into_iter().collect();
        assert_eq!(kinds, want);
    }

    #[test]
    fn restriction_examples() {
        let m2 = JetMonomial::new(interior(2, false), vec![JetVariable::metric(0, 0, vec![1, 1])]);
        assert!(restriction(&m2).is_none());
        let m3 = JetMonomial::new(interior(3, false), vec![JetVariable::metric(0, 0, vec![0, 0])]);
        let r = restriction(&m3).unwrap();
        assert_eq!(r.context.m, 2);
        assert_eq!(r.to_string(), "g_{11/11}");
        let b = JetMonomial::new(boundary(3, true), vec![JetVariable::theta(1, vec![2])]);
        assert_eq!(restriction(&b).unwrap().to_string(), "Θ_{1/2}");
        let b0 = JetMonomial::new(boundary(3, true), vec![JetVariable::theta(0, vec![2])]);
        assert!(restriction(&b0).is_none());
        let g = JetMonomial::new(boundary(4, false), vec![JetVariable::metric(1, 2, vec![2, 3])]);
        assert_eq!(restriction(&g).unwrap().to_string(), "g_{12/23}");
    }

    #[test]
    fn counts_match_enumeration() {
        for (m, n, b) in [(2, 3, false), (3, 2, true), (3, 4, false)] {
            let ctx = JetContext::new(m, true, b);
            assert_eq!(count_monomials(ctx, n), enumerate_monomials(ctx, n).unwrap().len() as u128);
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(enumerate_monomials(interior(6, false), 2), Err(Error::BudgetExceeded(_))));
        assert!(matches!(enumerate_monomials(interior(2, false), 7), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn scans_below_dimension_are_empty() {
        assert!(kernel_scan(interior(3, true), 2).unwrap().survivors.is_empty());
        let s = kernel_scan(interior(2, true), 2).unwrap();
        assert!(!s.survivors.is_empty());
        assert!(s.survivors.iter().all(|v| v.theta_free && v.second_order_metric_only && v.equality));
        assert!(kernel_scan(boundary(2, true), 0).unwrap().survivors.is_empty());
        let b = kernel_scan(boundary(2, true), 1).unwrap();
        assert!(!b.survivors.is_empty() && b.survivors.iter().all(|v| v.l_type_only));
    }
}
