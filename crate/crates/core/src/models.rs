//! Model geometries with charts, quadrature and twist forms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::par;
use crate::tensor::{Chart, OneFormJet};
use crate::trig::TrigPoly;

const TAU: f64 = 2.0 * std::f64::consts::PI;
const PI: f64 = std::f64::consts::PI;

/// Default trapezoid nodes per periodic direction.
pub const DEFAULT_CIRCLE_NODES: usize = 256;
/// Default Gauss–Legendre nodes on an interval.
pub const DEFAULT_INTERVAL_NODES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Point,
    Circle {
        length: f64,
    },
    FlatTorus {
        lengths: Vec<f64>,
    },
    Interval {
        length: f64,
    },
    RoundSphere {
        dim: usize,
        radius: f64,
    },
    /// `C / Z²` with the flat metric, period 1 in `x` and `y`.
    ComplexTorus,
    Product {
        factors: Vec<ModelManifold>,
    },
}

/// One-dimensional quadrature rule along a coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule1D {
    Trapezoid { nodes: usize, period: f64 },
    GaussLegendre { nodes: usize, a: f64, b: f64 },
}

/// A boundary component `x_coord = value`; `inward` is ±1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub coord: usize,
    pub value: f64,
    pub inward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifold {
    #[serde(flatten)]
    pub kind: ModelKind,
    /// Per-coordinate rule overrides; `None` uses the defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<usize>>,
}

/// Tensor-product quadrature with Riemannian weights.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub dim: usize,
    /// Row-major node coordinates (`len = dim × count`).
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 0 {
                break;
            }
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn rule_nodes(rule: &Rule1D) -> (Vec<f64>, Vec<f64>) {
    match *rule {
        Rule1D::Trapezoid { nodes, period } => {
            let h = period / nodes as f64;
            ((0..nodes).map(|i| i as f64 * h).collect(), vec![h; nodes])
        }
        Rule1D::GaussLegendre { nodes, a, b } => {
            let (x, w) = gauss_legendre(nodes);
            let half = (b - a) / 2.0;
            (x.iter().map(|t| a + half * (t + 1.0)).collect(), w.iter().map(|v| v * half).collect())
        }
    }
}

impl ModelManifold {
    pub fn new(kind: ModelKind) -> ModelManifold {
        ModelManifold { kind, nodes: None }
    }

    pub fn point() -> ModelManifold {
        ModelManifold::new(ModelKind::Point)
    }

    pub fn circle(length: f64) -> ModelManifold {
        ModelManifold::new(ModelKind::Circle { length })
    }

    pub fn flat_torus(lengths: Vec<f64>) -> ModelManifold {
        ModelManifold::new(ModelKind::FlatTorus { lengths })
    }

    pub fn interval(length: f64) -> ModelManifold {
        ModelManifold::new(ModelKind::Interval { length })
    }

    pub fn round_sphere(dim: usize, radius: f64) -> ModelManifold {
        ModelManifold::new(ModelKind::RoundSphere { dim, radius })
    }

    pub fn complex_torus() -> ModelManifold {
        ModelManifold::new(ModelKind::ComplexTorus)
    }

    /// Overrides the per-coordinate node counts.
    pub fn with_nodes(mut self, nodes: Vec<usize>) -> Result<ModelManifold> {
        if nodes.len() != self.dim() || nodes.contains(&0) {
            return Err(Error::Invalid(format!("need {} positive node counts", self.dim())));
        }
        self.nodes = Some(nodes);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{what} must be positive and finite")))
            }
        };
        match &self.kind {
            ModelKind::Point | ModelKind::ComplexTorus => Ok(()),
            ModelKind::Circle { length } | ModelKind::Interval { length } => pos(*length, "length"),
            ModelKind::FlatTorus { lengths } => {
                if lengths.is_empty() {
                    return Err(Error::Invalid("flat torus needs at least one circumference".into()));
                }
                lengths.iter().try_for_each(|&l| pos(l, "circumference"))
            }
            ModelKind::RoundSphere { dim, radius } => {
                if *dim != 2 && *dim != 4 {
                    return Err(Error::Unsupported(format!("round sphere of dimension {dim} (2 and 4 are available)")));
                }
                pos(*radius, "radius")
            }
            ModelKind::Product { factors } => factors.iter().try_for_each(|f| f.validate()),
        }?;
        if let Some(n) = &self.nodes {
            if n.len() != self.dim() {
                return Err(Error::Invalid(format!("need {} node counts, got {}", self.dim(), n.len())));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::Point => 0,
            ModelKind::Circle { .. } | ModelKind::Interval { .. } => 1,
            ModelKind::FlatTorus { lengths } => lengths.len(),
            ModelKind::RoundSphere { dim, .. } => *dim,
            ModelKind::ComplexTorus => 2,
            ModelKind::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
        }
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            ModelKind::Point => "point",
            ModelKind::Circle { .. } => "circle",
            ModelKind::FlatTorus { .. } => "flat_torus",
            ModelKind::Interval { .. } => "interval",
            ModelKind::RoundSphere { .. } => "round_sphere",
            ModelKind::ComplexTorus => "complex_torus",
            ModelKind::Product { .. } => "product",
        }
    }

    /// Circumferences if the model is a flat torus (circle, torus, complex torus, point).
    pub fn periods(&self) -> Option<Vec<f64>> {
        match &self.kind {
            ModelKind::Point => Some(vec![]),
            ModelKind::Circle { length } => Some(vec![*length]),
            ModelKind::FlatTorus { lengths } => Some(lengths.clone()),
            ModelKind::ComplexTorus => Some(vec![1.0, 1.0]),
            ModelKind::Product { factors } => {
                let mut out = Vec::new();
                for f in factors {
                    out.extend(f.periods()?);
                }
                Some(out)
            }
            _ => None,
        }
    }

    pub fn has_boundary(&self) -> bool {
        !self.boundary_faces().is_empty()
    }

    /// Boundary components as coordinate hyperplanes.
    pub fn boundary_faces(&self) -> Vec<Face> {
        match &self.kind {
            ModelKind::Interval { length } => {
                vec![Face { coord: 0, value: 0.0, inward: 1.0 }, Face { coord: 0, value: *length, inward: -1.0 }]
            }
            ModelKind::Product { factors } => {
                let mut out = Vec::new();
                let mut offset = 0;
                for f in factors {
                    out.extend(f.boundary_faces().into_iter().map(|face| Face { coord: face.coord + offset, ..face }));
                    offset += f.dim();
                }
                out
            }
            _ => vec![],
        }
    }

    fn default_rules(&self) -> Vec<Rule1D> {
        match &self.kind {
            ModelKind::Point => vec![],
            ModelKind::Circle { length } => vec![Rule1D::Trapezoid { nodes: DEFAULT_CIRCLE_NODES, period: *length }],
            ModelKind::FlatTorus { lengths } => {
                lengths.iter().map(|&l| Rule1D::Trapezoid { nodes: DEFAULT_CIRCLE_NODES, period: l }).collect()
            }
            ModelKind::ComplexTorus => vec![Rule1D::Trapezoid { nodes: DEFAULT_CIRCLE_NODES, period: 1.0 }; 2],
            ModelKind::Interval { length } => {
                vec![Rule1D::GaussLegendre { nodes: DEFAULT_INTERVAL_NODES, a: 0.0, b: *length }]
            }
            ModelKind::RoundSphere { dim, .. } => {
                let polar = if *dim == 2 { 128 } else { 16 };
                let azim = if *dim == 2 { 256 } else { 8 };
                let mut r = vec![Rule1D::GaussLegendre { nodes: polar, a: 0.0, b: PI }; dim - 1];
                r.push(Rule1D::Trapezoid { nodes: azim, period: TAU });
                r
            }
            ModelKind::Product { factors } => factors.iter().flat_map(|f| f.rules()).collect(),
        }
    }

    /// Per-coordinate quadrature rules (defaults with any overrides applied).
    pub fn rules(&self) -> Vec<Rule1D> {
        let mut rules = self.default_rules();
        if let Some(n) = &self.nodes {
            for (r, &k) in rules.iter_mut().zip(n) {
                match r {
                    Rule1D::Trapezoid { nodes, .. } | Rule1D::GaussLegendre { nodes, .. } => *nodes = k,
                }
            }
        }
        rules
    }

    /// Coordinate chart carrying the metric.
    pub fn chart(&self) -> Result<Chart> {
        match &self.kind {
            ModelKind::Point => Err(Error::Unsupported("a point has no chart".into())),
            ModelKind::Circle { .. } | ModelKind::Interval { .. } => Ok(Chart::euclidean(1)),
            ModelKind::FlatTorus { lengths } => Chart::builtin("flat_torus", Some(lengths.len()), None),
            ModelKind::ComplexTorus => Chart::builtin("flat_torus", Some(2), None),
            ModelKind::RoundSphere { dim, radius } => Chart::round_sphere(*dim, *radius),
            ModelKind::Product { factors } => {
                let m = self.dim();
                let mut metric = vec![Expr::Num(0.0); m * m];
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    if d == 0 {
                        continue;
                    }
                    let c = f.chart()?;
                    for i in 0..d {
                        for j in 0..d {
                            metric[(offset + i) * m + offset + j] = c.metric[i * d + j].shift_vars(offset);
                        }
                    }
                    offset += d;
                }
                Ok(Chart { dim: m, metric, theta: None, builtin: None })
            }
        }
    }

    /// `√det g` at a point of the chart.
    fn volume_density(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::RoundSphere { dim, radius } => {
                let mut v = radius.powi(*dim as i32);
                for (j, xj) in x.iter().enumerate().take(dim - 1) {
                    v *= xj.sin().powi((dim - 1 - j) as i32);
                }
                v
            }
            ModelKind::Product { factors } => {
                let mut v = 1.0;
                let mut offset = 0;
                for f in factors {
                    v *= f.volume_density(&x[offset..offset + f.dim()]);
                    offset += f.dim();
                }
                v
            }
            _ => 1.0,
        }
    }

    /// Quadrature nodes with weights for the Riemannian measure.
    pub fn quadrature(&self) -> Quadrature {
        let m = self.dim();
        let rules: Vec<(Vec<f64>, Vec<f64>)> = self.rules().iter().map(rule_nodes).collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; m];
        let total: usize = rules.iter().map(|r| r.0.len()).product();
        let mut x = vec![0.0; m];
        for _ in 0..total {
            let mut w = 1.0;
            for j in 0..m {
                x[j] = rules[j].0[idx[j]];
                w *= rules[j].1[idx[j]];
            }
            points.extend_from_slice(&x);
            weights.push(w * self.volume_density(&x));
            for j in (0..m).rev() {
                idx[j] += 1;
                if idx[j] < rules[j].0.len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        Quadrature { dim: m, points, weights }
    }

    /// Riemannian volume by quadrature (exact for flat models).
    pub fn volume(&self) -> Result<f64> {
        match &self.kind {
            ModelKind::Point => Ok(1.0),
            ModelKind::Circle { length } | ModelKind::Interval { length } => Ok(*length),
            ModelKind::FlatTorus { lengths } => Ok(lengths.iter().product()),
            ModelKind::ComplexTorus => Ok(1.0),
            ModelKind::Product { factors } => factors.iter().map(|f| f.volume()).product(),
            ModelKind::RoundSphere { .. } => integrate(self, &|_: &[f64]| Ok(1.0)),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("model serializes");
        v["dim"] = json!(self.dim());
        if let Ok(chart) = self.chart() {
            v["metric"] = chart.to_json()["metric"].clone();
        }
        v
    }

    /// Parses a model document. Accepts `{"kind": ...}` or a chart document
    /// with a builtin metric (`round_sphere_2`, `round_sphere_4`, `flat_torus`).
    pub fn from_json(doc: &Value) -> Result<ModelManifold> {
        let model = if doc.get("kind").is_some() {
            let mut d = doc.clone();
            if let Some(obj) = d.as_object_mut() {
                // chart-format fields are informational on input
                if obj.get("kind").and_then(|k| k.as_str()) != Some("round_sphere") {
                    obj.remove("dim");
                }
                obj.remove("metric");
                obj.remove("theta");
            }
            fill_defaults(&mut d);
            serde_json::from_value::<ModelManifold>(d)?
        } else {
            let name = doc
                .get("metric")
                .and_then(|m| m.as_str())
                .ok_or_else(|| Error::Invalid("model document needs 'kind' or a builtin 'metric'".into()))?;
            let radius = doc.get("radius").and_then(|r| r.as_f64()).unwrap_or(1.0);
            match name {
                "round_sphere_2" => ModelManifold::round_sphere(2, radius),
                "round_sphere_4" => ModelManifold::round_sphere(4, radius),
                "flat_torus" => {
                    let dim = doc.get("dim").and_then(|d| d.as_u64()).unwrap_or(2) as usize;
                    ModelManifold::flat_torus(vec![TAU; dim])
                }
                other => {
                    return Err(Error::Invalid(format!(
                        "builtin metric '{other}' does not determine a model; add a 'kind' field"
                    )))
                }
            }
        };
        model.validate()?;
        Ok(model)
    }
}

fn fill_defaults(d: &mut Value) {
    let Some(obj) = d.as_object_mut() else { return };
    match obj.get("kind").and_then(|k| k.as_str()) {
        Some("circle") => {
            obj.entry("length").or_insert(json!(TAU));
        }
        Some("interval") => {
            obj.entry("length").or_insert(json!(PI));
        }
        Some("flat_torus") => {
            obj.entry("lengths").or_insert(json!([TAU, TAU]));
        }
        Some("round_sphere") => {
            obj.entry("radius").or_insert(json!(1.0));
        }
        Some("product") => {
            if let Some(Value::Array(fs)) = obj.get_mut("factors") {
                for f in fs {
                    if let Some(fo) = f.as_object_mut() {
                        if fo.get("kind").and_then(|k| k.as_str()) != Some("round_sphere") {
                            fo.remove("dim");
                        }
                        fo.remove("metric");
                    }
                    fill_defaults(f);
                }
            }
        }
        _ => {}
    }
}

/// Integrates a density (per unit Riemannian measure) over the model.
pub fn integrate(model: &ModelManifold, density: &(dyn Fn(&[f64]) -> Result<f64> + Sync)) -> Result<f64> {
    let q = model.quadrature();
    let vals = par::try_map_range(q.len(), |i| {
        let v = density(q.point(i))?;
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
        Ok(v * q.weights[i])
    })?;
    Ok(vals.iter().sum())
}

/// Integrates over the boundary; the density also receives the face.
pub fn integrate_boundary(
    model: &ModelManifold,
    density: &(dyn Fn(&[f64], &Face) -> Result<f64> + Sync),
) -> Result<f64> {
    let faces = model.boundary_faces();
    if faces.is_empty() {
        return Ok(0.0);
    }
    let q = model.quadrature();
    let mut total = 0.0;
    for face in &faces {
        // collapse the normal coordinate: sum over nodes sharing the first
        // node of that coordinate, with the normal weight removed
        let rules = model.rules();
        let (nodes_n, weights_n) = rule_nodes(&rules[face.coord]);
        let first = nodes_n[0];
        let wn = weights_n[0];
        let picks: Vec<usize> = (0..q.len()).filter(|&i| q.point(i)[face.coord] == first).collect();
        let vals = par::try_map_range(picks.len(), |k| {
            let i = picks[k];
            let mut p = q.point(i).to_vec();
            p[face.coord] = face.value;
            let v = density(&p, face)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
            Ok(v * q.weights[i] / wn)
        })?;
        total += vals.iter().sum::<f64>();
    }
    Ok(total)
}

/// Riemannian product; both factors must be closed manifolds.
pub fn product(m1: &ModelManifold, m2: &ModelManifold) -> Result<ModelManifold> {
    if m1.has_boundary() || m2.has_boundary() {
        return Err(Error::Unsupported("products are formed from boundaryless models only".into()));
    }
    product_unchecked(m1, m2)
}

fn product_unchecked(m1: &ModelManifold, m2: &ModelManifold) -> Result<ModelManifold> {
    m1.validate()?;
    m2.validate()?;
    let nodes = match (&m1.nodes, &m2.nodes) {
        (None, None) => None,
        _ => {
            let pick = |m: &ModelManifold| -> Vec<usize> {
                m.rules()
                    .iter()
                    .map(|r| match r {
                        Rule1D::Trapezoid { nodes, .. } | Rule1D::GaussLegendre { nodes, .. } => *nodes,
                    })
                    .collect()
            };
            let mut n = pick(m1);
            n.extend(pick(m2));
            Some(n)
        }
    };
    let flat = |m: &ModelManifold| matches!(m.kind, ModelKind::Circle { .. } | ModelKind::FlatTorus { .. });
    let kind = if m1.kind == ModelKind::Point {
        m2.kind.clone()
    } else if m2.kind == ModelKind::Point {
        m1.kind.clone()
    } else if flat(m1) && flat(m2) {
        let mut lengths = m1.periods().expect("flat");
        lengths.extend(m2.periods().expect("flat"));
        ModelKind::FlatTorus { lengths }
    } else {
        let mut factors = Vec::new();
        for m in [m1, m2] {
            match &m.kind {
                ModelKind::Product { factors: f } => factors.extend(f.iter().cloned()),
                _ => factors.push(ModelManifold { kind: m.kind.clone(), nodes: None }),
            }
        }
        ModelKind::Product { factors }
    };
    let mut out = ModelManifold::new(kind);
    out.nodes = nodes;
    Ok(out)
}

/// `M × S¹` with the flat circle of circumference 2π; boundary of `M` is kept.
pub fn restrict_by_circle(model: &ModelManifold) -> Result<ModelManifold> {
    product_unchecked(model, &ModelManifold::circle(TAU))
}

/// A closed (or flagged non-closed) 1-form on a flat torus, one trigonometric
/// polynomial per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct TwistForm {
    periods: Vec<f64>,
    comps: Vec<TrigPoly>,
    closed: bool,
}

impl TwistForm {
    /// Builds the form and records whether `dΘ = 0` holds coefficientwise.
    pub fn new(periods: &[f64], comps: Vec<TrigPoly>) -> Result<TwistForm> {
        if comps.len() != periods.len() || comps.iter().any(|c| c.periods() != periods) {
            return Err(Error::DimensionMismatch("twist needs one component per periodic coordinate".into()));
        }
        let mut t = TwistForm { periods: periods.to_vec(), comps, closed: false };
        t.closed = t.closedness_residual() <= 1e-12 * t.max_coeff().max(1.0);
        Ok(t)
    }

    pub fn zero(periods: &[f64]) -> TwistForm {
        TwistForm { periods: periods.to_vec(), comps: vec![TrigPoly::zero(periods); periods.len()], closed: true }
    }

    pub fn constant(periods: &[f64], c: &[Complex64]) -> Result<TwistForm> {
        let comps = c.iter().map(|&v| TrigPoly::constant(periods, v)).collect();
        TwistForm::new(periods, comps)
    }

    /// Parses one expression per coordinate.
    pub fn parse(periods: &[f64], srcs: &[&str]) -> Result<TwistForm> {
        if srcs.len() != periods.len() {
            return Err(Error::DimensionMismatch(format!(
                "twist needs {} components, got {}",
                periods.len(),
                srcs.len()
            )));
        }
        let comps = srcs.iter().map(|s| TrigPoly::parse(s, periods)).collect::<Result<Vec<_>>>()?;
        TwistForm::new(periods, comps)
    }

    /// The exact form `dh`.
    pub fn exact(h: &TrigPoly) -> TwistForm {
        let comps = (0..h.dim()).map(|j| h.d(j)).collect();
        TwistForm { periods: h.periods().to_vec(), comps, closed: true }
    }

    /// Harmonic part `class` plus `dh` for a random real trigonometric `h`
    /// with modes `0 < max|k_j| ≤ bandwidth` and coefficients in `[−amplitude, amplitude]`.
    pub fn random_closed<R: rand::Rng>(
        rng: &mut R,
        periods: &[f64],
        class: &[f64],
        bandwidth: usize,
        amplitude: f64,
    ) -> Result<TwistForm> {
        let m = periods.len();
        let b = bandwidth as i64;
        let mut coeffs = std::collections::BTreeMap::new();
        let mut k = vec![-b; m];
        loop {
            // fill one representative of each ±k pair, then mirror
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            if k.iter().any(|&x| x != 0) && !coeffs.contains_key(&neg) {
                let c = Complex64::new(rng.gen_range(-amplitude..=amplitude), rng.gen_range(-amplitude..=amplitude));
                coeffs.insert(neg, c.conj());
                coeffs.insert(k.clone(), c);
            }
            let mut j = 0;
            while j < m && k[j] == b {
                k[j] = -b;
                j += 1;
            }
            if j == m {
                break;
            }
            k[j] += 1;
        }
        let h = TrigPoly::from_coeffs(periods, coeffs);
        let c: Vec<Complex64> = class.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        TwistForm::exact(&h).add(&TwistForm::constant(periods, &c)?)
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn component(&self, j: usize) -> &TrigPoly {
        &self.comps[j]
    }

    pub fn components(&self) -> &[TrigPoly] {
        &self.comps
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn is_real(&self) -> bool {
        self.comps.iter().all(|c| c.imaginary_residual() <= 1e-14 * c.max_coeff().max(1.0))
    }

    pub fn max_coeff(&self) -> f64 {
        self.comps.iter().map(|c| c.max_coeff()).fold(0.0, f64::max)
    }

    pub fn bandwidth(&self) -> usize {
        self.comps.iter().map(|c| c.bandwidth()).max().unwrap_or(0)
    }

    /// Largest Fourier coefficient of `∂_iΘ_j − ∂_jΘ_i`.
    pub fn closedness_residual(&self) -> f64 {
        let m = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..i {
                let r = self.comps[j].d(i).sub(&self.comps[i].d(j));
                worst = worst.max(r.max_coeff());
            }
        }
        worst
    }

    /// Harmonic part: the constant Fourier coefficient of each component.
    pub fn cohomology_class(&self) -> Vec<Complex64> {
        self.comps.iter().map(|c| c.constant_part()).collect()
    }

    pub fn add(&self, o: &TwistForm) -> Result<TwistForm> {
        if o.periods != self.periods {
            return Err(Error::DimensionMismatch("twists live on different tori".into()));
        }
        TwistForm::new(&self.periods, self.comps.iter().zip(&o.comps).map(|(a, b)| a.add(b)).collect())
    }

    pub fn scale(&self, s: Complex64) -> TwistForm {
        TwistForm {
            periods: self.periods.clone(),
            comps: self.comps.iter().map(|c| c.scale(s)).collect(),
            closed: self.closed,
        }
    }

    pub fn neg(&self) -> TwistForm {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn eval(&self, x: &[f64]) -> Vec<Complex64> {
        self.comps.iter().map(|c| c.eval(x)).collect()
    }

    /// Complex component jets at `x`.
    pub fn jets(&self, x: &[f64], order: usize) -> Vec<crate::taylor::Taylor<Complex64>> {
        self.comps.iter().map(|c| c.jet(x, order)).collect()
    }

    /// Real 1-form jet (requires a real twist).
    pub fn one_form_jet(&self, x: &[f64], order: usize) -> Result<OneFormJet> {
        if !self.is_real() {
            return Err(Error::Invalid("twist has an imaginary part; use complex jets".into()));
        }
        OneFormJet::new(self.dim(), self.jets(x, order).iter().map(|j| j.re()).collect(), self.closed)
    }

    pub fn to_json(&self) -> Value {
        let comps: Vec<Value> = self
            .comps
            .iter()
            .map(|c| Value::Array(c.coeffs().iter().map(|(k, v)| json!({"k": k, "re": v.re, "im": v.im})).collect()))
            .collect();
        json!({"periods": self.periods, "components": comps, "closed": self.closed})
    }
}

/// Twist on the product: `Θ(x¹, x²) = Θ₁(x¹) + Θ₂(x²)`.
pub fn product_twist(t1: &TwistForm, t2: &TwistForm) -> Result<TwistForm> {
    let mut periods = t1.periods.clone();
    periods.extend_from_slice(&t2.periods);
    let mut comps: Vec<TrigPoly> = t1.comps.iter().map(|c| c.embed(&periods, 0)).collect();
    comps.extend(t2.comps.iter().map(|c| c.embed(&periods, t1.dim())));
    TwistForm::new(&periods, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::euler_form;
    use crate::tensor::curvature;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1usize, 2, 5, 16, 64, 128] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n = {n}");
            let deg = 2 * n - 1;
            let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let want = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((s - want).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn volumes() {
        assert_eq!(ModelManifold::circle(TAU).volume().unwrap(), TAU);
        let s2 = ModelManifold::round_sphere(2, 1.0);
        assert!((integrate(&s2, &|_: &[f64]| Ok(1.0)).unwrap() - 4.0 * PI).abs() < 1e-10);
        let s4 = ModelManifold::round_sphere(4, 1.0);
        assert!((s4.volume().unwrap() - 8.0 * PI * PI / 3.0).abs() < 1e-10);
        let t = product(&ModelManifold::circle(TAU), &ModelManifold::circle(3.0)).unwrap();
        assert_eq!(t.kind, ModelKind::FlatTorus { lengths: vec![TAU, 3.0] });
        assert_eq!(t.volume().unwrap(), TAU * 3.0);
        assert!((integrate(&ModelManifold::circle(TAU), &|_: &[f64]| Ok(1.0)).unwrap() - TAU).abs() < 1e-13);
    }

    #[test]
    fn euler_form_on_two_sphere() {
        let s2 = ModelManifold::round_sphere(2, 1.0);
        let chart = s2.chart().unwrap();
        let chi = integrate(&s2, &|x: &[f64]| Ok(euler_form(&curvature(&chart.metric_jet(x, 2)?)?))).unwrap();
        assert!((chi - 2.0).abs() < 1e-10);
    }

    #[test]
    fn boundary_and_restriction() {
        let i = ModelManifold::interval(PI);
        assert!(product(&i, &ModelManifold::circle(TAU)).is_err());
        let cyl = restrict_by_circle(&i).unwrap();
        assert_eq!(cyl.dim(), 2);
        assert_eq!(cyl.boundary_faces().len(), 2);
        let len = integrate_boundary(&cyl, &|_: &[f64], _: &Face| Ok(1.0)).unwrap();
        assert!((len - 2.0 * TAU).abs() < 1e-12);
        assert_eq!(restrict_by_circle(&ModelManifold::point()).unwrap().kind, ModelKind::Circle { length: TAU });
        assert_eq!(restrict_by_circle(&ModelManifold::circle(TAU)).unwrap().dim(), 2);
        let pts = integrate_boundary(&i, &|_: &[f64], _: &Face| Ok(1.0)).unwrap();
        assert_eq!(pts, 2.0);
    }

    #[test]
    fn non_finite_density_is_reported() {
        let c = ModelManifold::circle(TAU);
        assert!(matches!(integrate(&c, &|_: &[f64]| Ok(f64::NAN)), Err(Error::NonFinite(_))));
    }

    #[test]
    fn json_round_trip() {
        for m in [
            ModelManifold::circle(TAU),
            ModelManifold::interval(PI),
            ModelManifold::round_sphere(2, 1.5),
            ModelManifold::complex_torus(),
            restrict_by_circle(&ModelManifold::interval(2.0)).unwrap(),
            ModelManifold::flat_torus(vec![1.0, 2.0]).with_nodes(vec![8, 16]).unwrap(),
        ] {
            let back = ModelManifold::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
        let s = ModelManifold::from_json(&json!({"metric": "round_sphere_4"})).unwrap();
        assert_eq!(s.dim(), 4);
        assert!(ModelManifold::from_json(&json!({"kind": "round_sphere", "dim": 3})).is_err());
        let c = ModelManifold::from_json(&json!({"kind": "circle"})).unwrap();
        assert_eq!(c.kind, ModelKind::Circle { length: TAU });
    }

    #[test]
    fn twist_closedness_and_products() {
        let p = [TAU, TAU];
        let t = TwistForm::parse(&p, &["0.7 + cos(x)", "0.2"]).unwrap();
        assert!(t.is_closed());
        let bad = TwistForm::parse(&p, &["sin(y)", "0"]).unwrap();
        assert!(!bad.is_closed());
        let h = TrigPoly::parse("0.5*sin(x)*cos(y)", &p).unwrap();
        let dh = TwistForm::exact(&h);
        assert!(dh.closedness_residual() < 1e-15);
        assert_eq!(dh.cohomology_class(), vec![Complex64::default(); 2]);
        let t1 = TwistForm::parse(&[TAU], &["0.3*sin(x)"]).unwrap();
        let t2 = TwistForm::zero(&[TAU]);
        let tt = product_twist(&t1, &t2).unwrap();
        assert!(tt.is_closed());
        let v = tt.eval(&[0.5, 1.3]);
        assert!((v[0].re - 0.3 * 0.5f64.sin()).abs() < 1e-15 && v[1].norm() == 0.0);
    }
}
