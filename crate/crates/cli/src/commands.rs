//! One function per subcommand. Each returns the `outputs` and
//! `diagnostics` parts of the envelope plus an optional CSV table.

use serde::Serialize;
use serde_json::{json, Map, Value};
use suskit_core::branching::{mc_susceptibility, modified_susceptibility, rho_k_pointwise, DENSE_SOLVE_LIMIT};
use suskit_core::closedform::{self, chkns_rhok_recursion, Closed, ODE_STEP};
use suskit_core::graphs::{
    components, mean_se, replicate, sample_chkns_family, sample_graph, scan, ChknsVariant, EdgeRule, ScanRow, Strategy,
    VertexSpec,
};
use suskit_core::kernels::Shape;
use suskit_core::operator::{critical_lambda_norm, critical_lambda_solvability};
use suskit_core::rng::child_seed;
use suskit_core::typespace::MeshSpec;
use suskit_core::{DiscreteOperator, Error, Kernel, TypeSpace};

use crate::config::{ExperimentConfig, InvalidInput};

#[derive(Debug)]
pub enum Failure {
    Input(InvalidInput),
    Core(Error),
    Io(std::io::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(e) => e.fmt(f),
            Failure::Core(e) => e.fmt(f),
            Failure::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl Failure {
    /// Bad input exits with 2, everything else with 1.
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) | Failure::Core(Error::InvalidArgument { .. } | Error::Parse { .. }) => 2,
            _ => 1,
        }
    }
}

impl From<InvalidInput> for Failure {
    fn from(e: InvalidInput) -> Self {
        Failure::Input(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Debug, Default)]
pub struct Report {
    pub outputs: Value,
    pub diagnostics: Map<String, Value>,
    pub table: Option<String>,
    /// `false` only when `verify` found a failing check.
    pub passed: bool,
}

impl Report {
    fn new(outputs: Value, diagnostics: Map<String, Value>) -> Self {
        Report {
            outputs,
            diagnostics,
            table: None,
            passed: true,
        }
    }

    fn with_table(mut self, table: String) -> Self {
        self.table = Some(table);
        self
    }
}

/// Numerical outcomes that are reported as a status, not as a failure.
fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::Diverged { .. } | Error::NoConvergence { .. } | Error::NotSubcritical { .. } | Error::Singular
    )
}

fn unavailable(e: &Error) -> Value {
    json!({ "value": null, "status": "unavailable", "reason": e.to_string() })
}

fn to_value(x: impl Serialize) -> Value {
    serde_json::to_value(x).expect("serializable")
}

struct Setup {
    kernel: Kernel,
    spec: MeshSpec,
    ts: TypeSpace,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let kernel = cfg.kernel()?;
        let spec = cfg.mesh_spec(&kernel)?;
        let ts = spec.build().map_err(|e| InvalidInput::new("mesh", e.to_string()))?;
        Ok(Setup { kernel, spec, ts })
    }

    fn operator(&self) -> Result<DiscreteOperator> {
        Ok(DiscreteOperator::discretize(&self.kernel, &self.ts)?)
    }

    fn diagnostics(&self) -> Map<String, Value> {
        let mut d = Map::new();
        d.insert(
            "mesh".into(),
            json!({
                "spec": self.spec.to_string(),
                "description": self.ts.description(),
                "m": self.ts.len(),
                "total_mass": self.ts.total_mass(),
            }),
        );
        d.insert("kernel".into(), json!(self.kernel.name()));
        d.insert("flags".into(), json!([]));
        d
    }

    fn vertices(&self, cfg: &ExperimentConfig) -> Result<VertexSpec> {
        match cfg.vertices.as_str() {
            "iid" => Ok(VertexSpec::Iid(self.ts.clone())),
            "grid" => Ok(VertexSpec::Grid),
            other => Err(InvalidInput::new("vertices", format!("expected iid | grid, got {other:?}")).into()),
        }
    }
}

fn edge_rule(cfg: &ExperimentConfig) -> Result<EdgeRule> {
    cfg.edge_rule
        .parse()
        .map_err(|e: Error| InvalidInput::new("edge-rule", e.to_string()).into())
}

fn strategy(cfg: &ExperimentConfig) -> Result<Strategy> {
    match cfg.strategy.as_str() {
        "auto" => Ok(Strategy::Auto),
        "skip" => Ok(Strategy::Skip),
        "naive" => Ok(Strategy::Naive),
        other => Err(InvalidInput::new("strategy", format!("expected auto | skip | naive, got {other:?}")).into()),
    }
}

fn set_flags(d: &mut Map<String, Value>, flags: Value) {
    d.insert("flags".into(), flags);
}

pub fn norm(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let op = setup.operator()?;
    let outputs = match op.operator_norm(cfg.tol) {
        Ok(norm) => json!({ "norm": norm, "lambda_c": 1.0 / norm, "status": "converged" }),
        Err(e) if is_numerical(&e) => unavailable(&e),
        Err(e) => return Err(e.into()),
    };
    Ok(Report::new(outputs, setup.diagnostics()))
}

pub fn chi(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let lambda = cfg.lambda()?;
    let op = setup.operator()?.scaled(lambda);
    let series = op.susceptibility_series(cfg.tol, cfg.j_max);
    let solve_value = if op.len() <= DENSE_SOLVE_LIMIT && series.is_subcritical() {
        op.solve_linear().ok().map(|f| op.integrate(&f) / op.total_mass())
    } else {
        None
    };
    let outputs = json!({
        "value": series.value.filter(|_| series.status() != "diverged"),
        "status": series.status(),
        "j_stop": series.j_stop,
        "last_ratio": series.last_ratio,
        "tail": series.tail,
        "solve_value": solve_value,
    });
    let mut d = setup.diagnostics();
    if series.near_critical {
        set_flags(&mut d, json!(["at_criticality_mesh_limited"]));
    }
    Ok(Report::new(outputs, d))
}

pub fn chihat(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let lambda = cfg.lambda()?;
    let op = setup.operator()?.scaled(lambda);
    let mut d = setup.diagnostics();
    let outputs = match modified_susceptibility(&op, cfg.tol) {
        Ok(r) => {
            set_flags(&mut d, to_value(&r.flags));
            json!({
                "value": r.chi_hat,
                "status": if r.chi_hat.is_some() { "converged" } else { "unavailable" },
                "chi": r.chi,
                "chi_hat_series": r.chi_hat_series,
                "lsusq_gap": r.lsusq_gap,
                "rho_total": r.rho_total,
                "norm": r.norm,
                "dual_norm": r.dual_norm,
                "iterations": r.iterations,
            })
        }
        Err(e) if is_numerical(&e) => unavailable(&e),
        Err(e) => return Err(e.into()),
    };
    Ok(Report::new(outputs, d))
}

pub fn rhok(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let lambda = cfg.lambda()?;
    let op = setup.operator()?.scaled(lambda);
    let table = rho_k_pointwise(&op, cfg.k_max)?;
    let mut csv = String::from("k,rho_k_total\n");
    for (k, total) in table.totals.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", k + 1, total));
    }
    let outputs = json!({ "k_max": table.k_max, "totals": table.totals });
    Ok(Report::new(outputs, setup.diagnostics()).with_table(csv))
}

pub fn mc_bp(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let lambda = cfg.lambda()?;
    let op = setup.operator()?.scaled(lambda);
    let estimate = mc_susceptibility(&op, cfg.runs, cfg.cap, cfg.seed)?;
    Ok(Report::new(to_value(&estimate), setup.diagnostics()))
}

pub fn sample(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let lambda = cfg.lambda()?;
    let &[n] = cfg.n_list()? else {
        return Err(InvalidInput::new("n", "sample takes a single vertex count").into());
    };
    let vs = setup.vertices(cfg)?;
    let g = sample_graph(&setup.kernel, &vs, n, lambda, edge_rule(cfg)?, cfg.seed, strategy(cfg)?)?;
    let c = components(&g);
    let mut csv = Vec::new();
    g.write_edges_csv(&mut csv)?;
    let outputs = json!({
        "n": n,
        "edges": g.edges.len(),
        "components": c.sizes.len(),
        "chi": c.chi,
        "chi_hat": c.chi_hat,
        "largest_size": c.largest_size,
        "largest_root": c.largest_root,
        "sampler": g.sampler,
        "vertices": vs.describe(),
    });
    Ok(Report::new(outputs, setup.diagnostics()).with_table(String::from_utf8(csv).expect("ascii")))
}

pub fn scan_cmd(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let grid = cfg.lambda_grid()?;
    let vs = setup.vertices(cfg)?;
    let rule = edge_rule(cfg)?;
    let mut rows: Vec<ScanRow> = Vec::new();
    for (i, &n) in cfg.n_list()?.iter().enumerate() {
        rows.extend(scan(&setup.kernel, &vs, &setup.ts, &grid, n, cfg.reps, child_seed(cfg.seed, i as u64), rule)?);
    }
    let mut csv = format!("{}\n", ScanRow::CSV_HEADER);
    for row in &rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    Ok(Report::new(json!({ "rows": rows }), setup.diagnostics()).with_table(csv))
}

pub fn threshold(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let (by_norm, by_solvability) = match cfg.method.as_str() {
        "norm" => (true, false),
        "solvability" => (false, true),
        "both" => (true, true),
        other => return Err(InvalidInput::new("method", format!("expected norm | solvability | both, got {other:?}")).into()),
    };
    let mut outputs = Map::new();
    let mut norm_route = None;
    if by_norm {
        let v = match critical_lambda_norm(&setup.kernel, &setup.ts) {
            Ok(v) => Some(v),
            Err(e) if is_numerical(&e) => None,
            Err(e) => return Err(e.into()),
        };
        norm_route = v;
        outputs.insert("norm_route".into(), json!(v));
    }
    if by_solvability {
        let lo = cfg.lo.unwrap_or(1e-3);
        let hi = cfg.hi.unwrap_or(1e3);
        let v = critical_lambda_solvability(&setup.kernel, &setup.ts, lo, hi, cfg.bracket_tol)?;
        outputs.insert("solvability_route".into(), json!(v));
        outputs.insert("bracket".into(), json!([lo, hi]));
        if let Some(n) = norm_route {
            outputs.insert("relative_gap".into(), json!((v - n).abs() / n));
        }
    }
    Ok(Report::new(Value::Object(outputs), setup.diagnostics()))
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: Option<f64>,
    reference: Option<f64>,
    /// Relative gap, or the z-score for Monte Carlo checks.
    gap: Option<f64>,
    tolerance: f64,
    pass: bool,
}

impl Check {
    fn relative(name: &'static str, value: Option<f64>, reference: Option<f64>, tolerance: f64) -> Self {
        let gap = value.zip(reference).map(|(v, r)| (v - r).abs() / r.abs().max(f64::MIN_POSITIVE));
        Check {
            name,
            value,
            reference,
            gap,
            tolerance,
            pass: gap.is_some_and(|g| g <= tolerance),
        }
    }
}

/// Closed-form `(χ, χ̂)` for the kernel at `λ`, where one is known for the
/// given mesh.
fn closed_forms(setup: &Setup, lambda: f64, tol: f64) -> Result<(Option<f64>, Option<f64>)> {
    let mass = setup.ts.total_mass();
    if (mass - 1.0).abs() > 1e-9 && !matches!(setup.kernel.shape(), Shape::Constant(_)) {
        return Ok((None, None));
    }
    let on_unit_interval = matches!(setup.spec, MeshSpec::Uniform { .. } | MeshSpec::Graded { .. });
    let scale = setup.kernel.scale() * lambda;
    Ok(match setup.kernel.shape() {
        Shape::Constant(c) => {
            let l = c * scale * mass;
            (closedform::er_chi(l).value(), closedform::er_chi_hat(l).value())
        }
        Shape::Rank1(psi) => {
            let m1 = setup.ts.integrate(|x| psi.eval(x))?;
            let m2 = setup.ts.integrate(|x| psi.eval(x).powi(2))?;
            let chi = closedform::rank1_chi_sub(m1, m2, scale).value();
            let chi_hat = match chi {
                Some(v) => Some(v),
                None => closedform::rank1_chi_hat(psi, &setup.ts, scale, tol).ok(),
            };
            (chi, chi_hat)
        }
        Shape::Chkns if on_unit_interval => (closedform::chkns_chi(scale).value(), Some(closedform::chkns_chi_hat(scale))),
        Shape::Dubins if on_unit_interval => (closedform::dubins_chi(scale).value(), None),
        Shape::Max(phi) if on_unit_interval => {
            let chi = closedform::maxkernel_chi_ode(phi, scale, ODE_STEP).ok().and_then(|r| r.chi);
            (chi, None)
        }
        _ => (None, None),
    })
}

pub fn verify(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = Setup::new(cfg)?;
    let lambda = cfg.lambda()?;
    let op = setup.operator()?.scaled(lambda);
    let (closed_chi, closed_chi_hat) = closed_forms(&setup, lambda, cfg.tol)?;
    let series = op.susceptibility_series(cfg.tol, cfg.j_max);
    let mut checks = Vec::new();
    let mut d = setup.diagnostics();
    if series.is_subcritical() {
        let chi = series.value;
        if op.len() <= DENSE_SOLVE_LIMIT {
            let solve = op.solve_linear().ok().map(|f| op.integrate(&f) / op.total_mass());
            checks.push(Check::relative("series vs linear solve", chi, solve, cfg.rel_tol));
        }
        let pointwise = op.susceptibility_pointwise(cfg.tol, cfg.j_max).ok().map(|f| op.integrate(&f) / op.total_mass());
        checks.push(Check::relative("series vs pointwise iteration", chi, pointwise, cfg.rel_tol));
        if closed_chi.is_some() {
            checks.push(Check::relative("series vs closed form", chi, closed_chi, cfg.rel_tol));
        }
        let mc = mc_susceptibility(&op, cfg.runs, cfg.cap, cfg.seed)?;
        let z = chi.map(|c| (mc.mean_capped - c).abs() / mc.se_capped);
        checks.push(Check {
            name: "Monte Carlo branching vs series",
            value: Some(mc.mean_capped),
            reference: chi,
            gap: z,
            tolerance: 4.0,
            pass: z.is_some_and(|z| z <= 4.0),
        });
    } else {
        let r = modified_susceptibility(&op, cfg.tol)?;
        set_flags(&mut d, to_value(&r.flags));
        checks.push(Check::relative("dual solve vs renormalized dual series", r.chi_hat, r.chi_hat_series, cfg.rel_tol));
        if closed_chi_hat.is_some() {
            checks.push(Check::relative("dual route vs closed form", r.chi_hat, closed_chi_hat, cfg.rel_tol));
        }
    }
    let passed = checks.iter().all(|c| c.pass);
    let outputs = json!({
        "regime": if series.is_subcritical() { "subcritical" } else { "supercritical" },
        "checks": checks,
        "passed": passed,
    });
    Ok(Report {
        passed,
        ..Report::new(outputs, d)
    })
}

pub fn chkns(cfg: &ExperimentConfig) -> Result<Report> {
    let lambda = cfg.lambda()?;
    let variant: ChknsVariant = cfg
        .variant
        .parse()
        .map_err(|e: Error| InvalidInput::new("variant", e.to_string()))?;
    let k_max = cfg.k_max;
    let pred_chi = closedform::chkns_chi(lambda);
    let pred_chi_hat = closedform::chkns_chi_hat(lambda);
    let rho_k = chkns_rhok_recursion(lambda, k_max);
    let mut rows = Vec::new();
    let mut csv = String::from("n,rep_count,mean_chi,se_chi,mean_chi_hat,se_chi_hat,pred_chi,pred_chi_hat\n");
    for (i, &n) in cfg.n_list()?.iter().enumerate() {
        let stats = replicate(cfg.reps, child_seed(cfg.seed, i as u64), |s| {
            let c = components(&sample_chkns_family(variant, lambda, n, s)?);
            let fractions: Vec<f64> = (1..=k_max).map(|k| c.fraction_in_size(k)).collect();
            Ok((c.chi, c.chi_hat, fractions))
        })?;
        let (mean_chi, se_chi) = mean_se(&stats.iter().map(|s| s.0).collect::<Vec<_>>());
        let (mean_chi_hat, se_chi_hat) = mean_se(&stats.iter().map(|s| s.1).collect::<Vec<_>>());
        let fractions: Vec<f64> = (0..k_max)
            .map(|k| stats.iter().map(|s| s.2[k]).sum::<f64>() / stats.len() as f64)
            .collect();
        let pred = match pred_chi {
            Closed::Value(v) => v.to_string(),
            _ => "inf".to_owned(),
        };
        csv.push_str(&format!(
            "{n},{},{mean_chi},{se_chi},{mean_chi_hat},{se_chi_hat},{pred},{pred_chi_hat}\n",
            cfg.reps
        ));
        rows.push(json!({
            "n": n,
            "rep_count": cfg.reps,
            "mean_chi": mean_chi,
            "se_chi": se_chi,
            "mean_chi_hat": mean_chi_hat,
            "se_chi_hat": se_chi_hat,
            "mean_fraction_in_size": fractions,
        }));
    }
    let outputs = json!({
        "variant": format!("{variant:?}"),
        "rows": rows,
        "pred_chi": pred_chi.value(),
        "pred_chi_status": pred_chi.status(),
        "pred_chi_hat": pred_chi_hat,
        "rho_k": rho_k,
    });
    let mut d = Map::new();
    d.insert("flags".into(), json!(if (lambda - 0.25).abs() < 1e-6 { vec!["at_criticality"] } else { vec![] }));
    Ok(Report::new(outputs, d).with_table(csv))
}
