use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Value};

use heatlab::acceptance;
use heatlab::complexes::{
    assemble_circle, assemble_dolbeault_torus, assemble_interval, assemble_torus, BoundaryFlavor, GradedOperatorSet,
};
use heatlab::densities::{de_rham_density, de_rham_super_density, integrated_de_rham, integrated_dolbeault};
use heatlab::invariance::{
    classify, count_monomials, enumerate_monomials, kernel_scan, restriction, Filter, JetContext, SCAN_NOTE,
};
use heatlab::laplace::{boundary_a, canonicalize, euler_form, twisted_de_rham_coefficients, BoundaryData};
use heatlab::models::{integrate, integrate_boundary, ModelManifold, TwistForm};
use heatlab::spectral::{eigensolve, fit_spectrum, geometric_grid, FitOptions, SpectrumSet, TraceSelection};
use heatlab::tensor::{curvature, CurvaturePack, MetricJet};
use heatlab::trig::TrigPoly;
use heatlab::{par, Error};

const TAU: f64 = 2.0 * PI;

#[derive(Parser, Debug)]
#[command(name = "heatlab", version, about = "Heat-trace and index experiments on twisted complexes")]
struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    Circle,
    Torus,
    Interval,
    Dolbeault,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Model::Circle)]
    model: Model,
    /// Twist component; repeat once per coordinate on the torus.
    #[arg(long, allow_hyphen_values = true)]
    theta: Vec<String>,
    /// Imaginary part of the Dolbeault twist.
    #[arg(long, allow_hyphen_values = true)]
    theta_imag: Option<String>,
    #[arg(long, default_value = "relative")]
    bc: String,
    /// Interval length.
    #[arg(long, default_value_t = PI)]
    length: f64,
    /// Fourier or eigenbasis truncation.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Local heat invariants a_0, a_2, a_4 of the twisted de Rham complex.
    Coeffs {
        #[command(flatten)]
        model: ModelArgs,
        /// Also evaluate the densities at this point (comma separated).
        #[arg(long)]
        at: Option<String>,
    },
    /// Eigenvalues below the reliability cutoff, per degree.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        /// Export the dense operator bundle to this path.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Heat traces and supertrace on a geometric t grid.
    Heattrace {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.1)]
        t0: f64,
        #[arg(long, default_value_t = 2.0)]
        t1: f64,
        #[arg(long, default_value_t = 24)]
        points: usize,
    },
    /// Fit small-t asymptotic coefficients.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        /// Form degree; omit for the supertrace.
        #[arg(long)]
        degree: Option<usize>,
        /// Highest coefficient index K.
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        t1: Option<f64>,
    },
    /// Spectral index (alternating sum of kernel dimensions).
    Index {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Kernel dimensions with the gap diagnostic.
    Betti {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Integrated Euler form of the round sphere.
    Gaussbonnet {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Interval coefficients against integrated boundary invariants.
    Boundary {
        #[arg(long, default_value = "relative")]
        bc: String,
        #[arg(long, default_value_t = PI)]
        length: f64,
        #[arg(long, default_value_t = 2000)]
        n: usize,
    },
    /// Twisted Dolbeault complex on the unit square torus.
    Dolbeault {
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        theta: String,
        #[arg(long, allow_hyphen_values = true)]
        theta_imag: Option<String>,
        #[arg(long, default_value_t = 12)]
        n: usize,
    },
    /// Jet monomial enumeration and restriction kernel scans.
    Invariance {
        #[command(subcommand)]
        action: InvarianceAction,
    },
    /// Run verification criteria and report pass/fail.
    Accept {
        /// Run only this criterion.
        #[arg(long)]
        id: Option<usize>,
    },
    /// Run an experiment described by a JSON config file.
    Run { config: PathBuf },
}

#[derive(Args, Debug, Clone, Copy)]
struct JetArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    boundary: bool,
    /// Leave the twist out of the jet variables.
    #[arg(long)]
    no_theta: bool,
}

impl JetArgs {
    fn ctx(self) -> JetContext {
        JetContext::new(self.m, !self.no_theta, self.boundary)
    }
}

#[derive(Subcommand, Debug)]
enum InvarianceAction {
    Enumerate(JetArgs),
    Restriction(JetArgs),
    Scan {
        #[command(flatten)]
        jet: JetArgs,
        /// Include every monomial with its verdict.
        #[arg(long)]
        rows: bool,
    },
}

/// File form of a command line. Every field is optional; an empty object runs
/// the acceptance suite.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    command: Option<String>,
    model: Option<String>,
    #[serde(default)]
    theta: Vec<String>,
    theta_imag: Option<String>,
    bc: Option<String>,
    n: Option<usize>,
    window: Option<[f64; 2]>,
    order: Option<usize>,
    degree: Option<usize>,
    output: Option<PathBuf>,
    format: Option<Format>,
}

impl ExperimentConfig {
    fn argv(&self) -> Vec<String> {
        let mut a = vec!["heatlab".to_string(), self.command.clone().unwrap_or_else(|| "accept".into())];
        let mut push = |k: &str, v: String| {
            a.push(format!("--{k}"));
            a.push(v);
        };
        if let Some(v) = &self.model {
            push("model", v.clone());
        }
        for t in &self.theta {
            push("theta", t.clone());
        }
        if let Some(v) = &self.theta_imag {
            push("theta-imag", v.clone());
        }
        if let Some(v) = &self.bc {
            push("bc", v.clone());
        }
        if let Some(v) = self.n {
            push("n", v.to_string());
        }
        if let Some([t0, t1]) = self.window {
            push("t0", t0.to_string());
            push("t1", t1.to_string());
        }
        if let Some(v) = self.order {
            push("order", v.to_string());
        }
        if let Some(v) = self.degree {
            push("degree", v.to_string());
        }
        if let Some(v) = &self.output {
            push("output", v.display().to_string());
        }
        if let Some(v) = self.format {
            push("format", if v == Format::Csv { "csv".into() } else { "json".into() });
        }
        a
    }
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<Output, Failure>;

enum Output {
    Json(Value),
    Csv(String),
    /// Output plus a flag that the numerical contract was not met.
    Verdict(Value, bool),
}

fn twist(model: &ModelArgs) -> Result<TwistForm, Failure> {
    let (periods, default): (&[f64], usize) = match model.model {
        Model::Circle => (&[TAU], 1),
        Model::Torus => (&[TAU, TAU], 2),
        _ => return Err(Failure::Usage("this model carries no de Rham twist".into())),
    };
    let srcs: Vec<&str> =
        if model.theta.is_empty() { vec!["0"; default] } else { model.theta.iter().map(String::as_str).collect() };
    Ok(TwistForm::parse(periods, &srcs)?)
}

fn dolbeault_theta(re: &str, im: Option<&str>) -> Result<TrigPoly, Failure> {
    let per = [1.0, 1.0];
    let mut th = TrigPoly::parse(re, &per)?;
    if let Some(im) = im {
        th = th.add(&TrigPoly::parse(im, &per)?.scale(Complex64::new(0.0, 1.0)));
    }
    Ok(th)
}

fn flavor(bc: &str) -> Result<BoundaryFlavor, Failure> {
    bc.parse::<BoundaryFlavor>().map_err(Failure::from)
}

fn assemble(model: &ModelArgs) -> Result<GradedOperatorSet, Failure> {
    Ok(match model.model {
        Model::Circle => assemble_circle(&twist(model)?, model.n.unwrap_or(64))?,
        Model::Torus => assemble_torus(&twist(model)?, model.n.unwrap_or(16))?,
        Model::Interval => {
            if !model.theta.is_empty() {
                return Err(Failure::Usage("twisted interval complexes are not supported".into()));
            }
            assemble_interval(model.length, flavor(&model.bc)?, model.n.unwrap_or(200))?
        }
        Model::Dolbeault => {
            let th = dolbeault_theta(model.theta.first().map_or("0", String::as_str), model.theta_imag.as_deref())?;
            assemble_dolbeault_torus(&th, model.n.unwrap_or(12))?
        }
    })
}

fn spectrum(model: &ModelArgs) -> Result<SpectrumSet, Failure> {
    Ok(eigensolve(&assemble(model)?)?)
}

fn cmd_coeffs(model: &ModelArgs, at: Option<&str>) -> Outcome {
    if model.model == Model::Dolbeault {
        let th = dolbeault_theta(model.theta.first().map_or("0", String::as_str), model.theta_imag.as_deref())?;
        return Ok(Output::Json(json!({"model": "dolbeault", "integrated_super_a2": integrated_dolbeault(&th)?})));
    }
    let tw = twist(model)?;
    let mut degrees = Vec::new();
    for p in 0..=tw.dim() {
        let mut row = json!({"degree": p});
        for n in [0, 2, 4] {
            row[format!("a{n}")] = json!(integrated_de_rham(&tw, Some(p), n)?);
        }
        degrees.push(row);
    }
    let mut sup = json!({});
    for n in [0, 2, 4] {
        sup[format!("a{n}")] = json!(integrated_de_rham(&tw, None, n)?);
    }
    let mut out = json!({"twist": tw.to_json(), "integrated": degrees, "integrated_super": sup});
    if let Some(at) = at {
        let x = at
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Failure::Usage(format!("--at: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if x.len() != tw.dim() {
            return Err(Failure::Usage(format!("--at needs {} coordinates", tw.dim())));
        }
        let mut local = Vec::new();
        for p in 0..=tw.dim() {
            let mut row = json!({"degree": p});
            for n in [0, 2, 4] {
                row[format!("a{n}")] = json!(de_rham_density(&tw, p, n, &x)?);
            }
            local.push(row);
        }
        let mut s = json!({});
        for n in [0, 2, 4] {
            s[format!("a{n}")] = json!(de_rham_super_density(&tw, n, &x)?);
        }
        out["point"] = json!(x);
        out["local"] = json!(local);
        out["local_super"] = s;
    }
    Ok(Output::Json(out))
}

fn cmd_spectrum(model: &ModelArgs, bundle: Option<&Path>, format: Format) -> Outcome {
    let ops = assemble(model)?;
    if let Some(path) = bundle {
        ops.export_bundle(&mut File::create(path)?)?;
    }
    let spec = eigensolve(&ops)?;
    if format == Format::Csv {
        let mut s = String::from("degree,index,eigenvalue\n");
        for d in &spec.degrees {
            for (i, v) in d.eigenvalues.iter().take_while(|&&v| v <= spec.lambda_max).enumerate() {
                s.push_str(&format!("{},{i},{v:.17e}\n", d.p));
            }
        }
        return Ok(Output::Csv(s));
    }
    let degrees: Vec<Value> = spec
        .degrees
        .iter()
        .map(|d| {
            let kept: Vec<f64> = d.eigenvalues.iter().copied().take_while(|&v| v <= spec.lambda_max).collect();
            json!({"degree": d.p, "label": d.label, "size": d.size, "eigenvalues": kept})
        })
        .collect();
    Ok(Output::Json(json!({
        "complex": spec.complex, "N": spec.n, "lambda_max": spec.lambda_max, "t_min": spec.t_min(),
        "degrees": degrees,
    })))
}

fn cmd_heattrace(model: &ModelArgs, t0: f64, t1: f64, points: usize, format: Format) -> Outcome {
    if !(t0 > 0.0 && t1 > t0) || points < 2 {
        return Err(Failure::Usage("need 0 < t0 < t1 and at least 2 points".into()));
    }
    let spec = spectrum(model)?;
    let ts = geometric_grid(t0, t1, points);
    if format == Format::Csv {
        return Ok(Output::Csv(spec.trace_csv(&ts)?));
    }
    let mut rows = Vec::new();
    for &t in &ts {
        rows.push(json!({"t": t, "traces": spec.heat_trace(t)?, "supertrace": spec.supertrace(t)?}));
    }
    Ok(Output::Json(json!({"complex": spec.complex, "N": spec.n, "t_min": spec.t_min(), "curve": rows})))
}

fn cmd_fit(model: &ModelArgs, degree: Option<usize>, order: usize, t0: Option<f64>, t1: Option<f64>) -> Outcome {
    let spec = spectrum(model)?;
    let boundary = model.model == Model::Interval;
    let dim = match model.model {
        Model::Circle | Model::Interval => 1,
        _ => 2,
    };
    let lo = 1.1 * spec.t_min();
    let window = if boundary {
        (t0.unwrap_or(lo.max(0.005)), t1.unwrap_or(0.5))
    } else {
        (t0.unwrap_or(lo), t1.unwrap_or(0.05))
    };
    let opts = if boundary { FitOptions::new(order, window)? } else { FitOptions::even(order, window)?.with_guard(1) };
    let sel = degree.map_or(TraceSelection::Super, TraceSelection::Degree);
    let fit = fit_spectrum(&spec, sel, dim, &opts)?;
    let mut out = json!({"complex": spec.complex, "N": spec.n, "selection": degree.map_or(json!("super"), |p| json!(p)), "fit": fit});
    if matches!(model.model, Model::Circle | Model::Torus) {
        let tw = twist(model)?;
        let mut table = Vec::new();
        for (i, &n) in fit.orders.iter().enumerate() {
            let closed = if n % 2 == 0 && n <= 4 { Some(integrated_de_rham(&tw, degree, n)?) } else { None };
            table.push(
                json!({"n": n, "c": fit.coefficients[i], "std_error": fit.std_errors[i], "integrated_a": closed}),
            );
        }
        out["table"] = json!(table);
    }
    Ok(Output::Json(out))
}

fn cmd_kernel(model: &ModelArgs, index_only: bool) -> Outcome {
    let k = spectrum(model)?.kernel()?;
    Ok(Output::Json(if index_only { json!({"index": k.index}) } else { json!(k) }))
}

fn cmd_gaussbonnet(dim: usize, radius: f64) -> Outcome {
    let model = ModelManifold::round_sphere(dim, radius);
    let chart = model.chart()?;
    let chi = integrate(&model, &|x| Ok(euler_form(&curvature(&chart.metric_jet(x, 2)?)?)))?;
    Ok(Output::Json(json!({"model": model.to_json(), "integrated_euler_form": chi})))
}

fn cmd_boundary(bc: &str, length: f64, n: usize) -> Outcome {
    let fl = flavor(bc)?;
    let spec = eigensolve(&assemble_interval(length, fl, n)?)?;
    let model = ModelManifold::interval(length);
    let zero = TwistForm::zero(&[TAU]);
    let window = ((1.1 * spec.t_min()).max(0.005), 0.5);
    let mut degrees = Vec::new();
    for p in 0..2 {
        let neumann = fl.scalar_condition(p) != "Dirichlet";
        let bd = BoundaryData::uniform(Vec::new(), 1, neumann, 0.0);
        let mut predicted = vec![length / (4.0 * PI).sqrt()];
        let mut warnings = Vec::new();
        for ell in 0..3 {
            let v = integrate_boundary(&model, &|x, _| {
                let op = twisted_de_rham_coefficients(&zero.jets(x, 4), 0)?;
                let can = canonicalize(&op, &MetricJet::euclidean(1, 4))?;
                Ok(boundary_a(ell, &bd, &can, &CurvaturePack::flat(1))?.value)
            })?;
            predicted.push(v);
        }
        let x0 = [0.0];
        let op = twisted_de_rham_coefficients(&zero.jets(&x0, 4), 0)?;
        let can = canonicalize(&op, &MetricJet::euclidean(1, 4))?;
        warnings.extend(boundary_a(2, &bd, &can, &CurvaturePack::flat(1))?.warnings);
        let fit = fit_spectrum(&spec, TraceSelection::Degree(p), 1, &FitOptions::new(3, window)?)?;
        degrees.push(json!({
            "degree": p, "condition": fl.scalar_condition(p), "coefficients": fit.coefficients,
            "std_errors": fit.std_errors, "predicted": predicted, "warnings": warnings,
        }));
    }
    Ok(Output::Json(json!({"complex": spec.complex, "N": n, "window": [window.0, window.1], "degrees": degrees})))
}

fn cmd_dolbeault(re: &str, im: Option<&str>, n: usize) -> Outcome {
    let th = dolbeault_theta(re, im)?;
    let spec = eigensolve(&assemble_dolbeault_torus(&th, n)?)?;
    let k = spec.kernel()?;
    let nz =
        |p: usize| -> Vec<f64> { spec.degree(p).eigenvalues.iter().copied().filter(|&v| v >= k.threshold).collect() };
    let (a, b) = (nz(0), nz(1));
    let dev = if a.len() == b.len() {
        a.iter().zip(&b).map(|(u, v)| (u - v).abs() / u.abs().max(1.0)).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(Output::Json(json!({
        "N": n, "kernel": k, "nonzero_spectrum_dev": dev, "integrated_super_a2": integrated_dolbeault(&th)?,
    })))
}

fn cmd_invariance(action: &InvarianceAction, format: Format) -> Outcome {
    match action {
        InvarianceAction::Enumerate(j) => {
            let ctx = j.ctx();
            let monos = enumerate_monomials(ctx, j.n)?;
            if format == Format::Csv {
                let mut s = String::from("monomial,order,deg\n");
                for mo in &monos {
                    let deg: Vec<String> = mo.deg().iter().map(|d| d.to_string()).collect();
                    s.push_str(&format!("\"{mo}\",{},{}\n", mo.order(), deg.join(" ")));
                }
                return Ok(Output::Csv(s));
            }
            let rows: Vec<Value> = monos
                .iter()
                .map(|mo| json!({"monomial": mo.to_string(), "order": mo.order(), "deg": mo.deg()}))
                .collect();
            Ok(Output::Json(
                json!({"context": ctx, "n": j.n, "count": count_monomials(ctx, j.n).to_string(), "monomials": rows}),
            ))
        }
        InvarianceAction::Restriction(j) => {
            let ctx = j.ctx();
            let rows: Vec<Value> = enumerate_monomials(ctx, j.n)?
                .iter()
                .map(|mo| {
                    let r = restriction(mo);
                    json!({"monomial": mo.to_string(), "restricted": r.as_ref().map(|r| r.to_string()), "filter": classify(mo)})
                })
                .collect();
            Ok(Output::Json(json!({"context": ctx, "n": j.n, "rows": rows})))
        }
        InvarianceAction::Scan { jet, rows } => {
            let mut scan = kernel_scan(jet.ctx(), jet.n)?;
            if format == Format::Csv {
                let mut s = String::from("monomial,order,deg,survives,eliminated_by\n");
                for r in &scan.rows {
                    let deg: Vec<String> = r.deg.iter().map(|d| d.to_string()).collect();
                    let by = r.eliminated_by.map_or(String::new(), |f| format!("{f:?}"));
                    s.push_str(&format!("\"{}\",{},{},{},{by}\n", r.monomial, r.order, deg.join(" "), r.survives));
                }
                return Ok(Output::Csv(s));
            }
            if !rows {
                scan.rows.clear();
            }
            let mut v = json!(scan);
            v["note"] = json!(SCAN_NOTE);
            v["filters"] =
                json!(Filter::ALL.iter().map(|f| json!({"filter": f, "rule": f.rule()})).collect::<Vec<_>>());
            Ok(Output::Json(v))
        }
    }
}

fn cmd_accept(id: Option<usize>) -> Outcome {
    let reports = match id {
        Some(i) => vec![acceptance::run(i).ok_or_else(|| Failure::Usage(format!("no criterion {i}")))?],
        None => acceptance::run_all(),
    };
    for r in &reports {
        eprintln!("[{}] {:>2} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.id, r.name, r.tolerance);
    }
    let all = reports.iter().all(|r| r.passed);
    Ok(Output::Verdict(json!({"passed": all, "criteria": reports}), !all))
}

fn dispatch(cmd: &Command, format: Format) -> Outcome {
    match cmd {
        Command::Coeffs { model, at } => cmd_coeffs(model, at.as_deref()),
        Command::Spectrum { model, bundle } => cmd_spectrum(model, bundle.as_deref(), format),
        Command::Heattrace { model, t0, t1, points } => cmd_heattrace(model, *t0, *t1, *points, format),
        Command::Fit { model, degree, order, t0, t1 } => cmd_fit(model, *degree, *order, *t0, *t1),
        Command::Index { model } => cmd_kernel(model, true),
        Command::Betti { model } => cmd_kernel(model, false),
        Command::Gaussbonnet { dim, radius } => cmd_gaussbonnet(*dim, *radius),
        Command::Boundary { bc, length, n } => cmd_boundary(bc, *length, *n),
        Command::Dolbeault { theta, theta_imag, n } => cmd_dolbeault(theta, theta_imag.as_deref(), *n),
        Command::Invariance { action } => cmd_invariance(action, format),
        Command::Accept { id } => cmd_accept(*id),
        Command::Run { .. } => Err(Failure::Usage("run cannot be nested".into())),
    }
}

fn emit(out: &Output, path: Option<&Path>) -> std::io::Result<()> {
    let text = match out {
        Output::Json(v) | Output::Verdict(v, _) => {
            serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
        }
        Output::Csv(s) => s.clone(),
    };
    match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn load_config(path: &Path) -> Result<Cli, Failure> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Cli::try_parse_from(cfg.argv()).map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    par::configure_from_env();
    let mut cli = Cli::parse();
    if let Some(Command::Run { config }) = &cli.command {
        match load_config(config) {
            Ok(c) => cli = c,
            Err(Failure::Usage(e) | Failure::Numerical(e)) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    }
    let cmd = cli.command.unwrap_or(Command::Accept { id: None });
    let result = dispatch(&cmd, cli.format);
    let (out, code) = match result {
        Ok(Output::Verdict(v, failed)) => (Output::Json(v), if failed { 3 } else { 0 }),
        Ok(out) => (out, 0),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical contract violated: {e}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = emit(&out, cli.output.as_deref()) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
