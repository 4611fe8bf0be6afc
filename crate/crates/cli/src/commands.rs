//! One function per subcommand. Each loads the configuration, builds what it
//! needs on the configured mesh and writes JSON (or CSV) to the output.

use std::cell::OnceCell;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};

use dtnlab_core::assembly::{assemble_config, FormMatrices};
use dtnlab_core::coeff::{CoefficientConfig, RealEntry, ScalarEntry};
use dtnlab_core::convex::ConvexSetId;
use dtnlab_core::dtn::{build_dtn, eigenvalues, spectrum, spectrum_json, DtnOperator};
use dtnlab_core::linalg::CVector;
use dtnlab_core::mesh::Mesh;
use dtnlab_core::semigroup::SemigroupAction;
use dtnlab_core::verify::{
    check_domination_form, check_invariance_criterion, check_trace_hypotheses, diamagnetic_refinement,
    domination_form_refinement, fit_poisson_constant, fit_trace_exponent, poisson_envelope, poisson_stability,
    positivity_threshold_scan, verify_diamagnetic, verify_gauge_convergence, verify_linf_contractivity,
    verify_semigroup_positivity, CheckRecord, DiscreteForm, PairForm, Report, Verdict,
};
use dtnlab_core::{Complex64, Error};

use crate::config::{RunConfig, SuiteParams};
use crate::{CliError, Command, Common, SpaceArg, SuiteArg};

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_POISSON_TIMES: [f64; 10] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0];
const DEFAULT_TRACE_WINDOW: [f64; 2] = [0.01, 1.0];
const DEFAULT_THRESHOLD_LAMBDAS: [f64; 5] = [0.0, -0.5, -0.9, -1.1, -1.5];
const DEFAULT_GAUGE_COUNT: usize = 10;

/// Order of `verify --suite all`: algebraic checks before semigroup ones.
pub const SUITE_ORDER: [SuiteArg; 7] = [
    SuiteArg::TraceHypotheses,
    SuiteArg::Invariance,
    SuiteArg::DominationForm,
    SuiteArg::Positivity,
    SuiteArg::Contractivity,
    SuiteArg::Diamagnetic,
    SuiteArg::Gauge,
];

struct Context {
    config: RunConfig,
    hash: String,
    mesh: Arc<Mesh>,
    out: Option<PathBuf>,
    form: OnceCell<Arc<FormMatrices>>,
    zero_form: OnceCell<Arc<FormMatrices>>,
    dtn: OnceCell<DtnOperator>,
    zero_dtn: OnceCell<DtnOperator>,
}

impl Context {
    fn load(common: &Common) -> Result<Self> {
        let config = RunConfig::load(&common.config)?;
        let mesh = Arc::new(
            config
                .domain
                .build()
                .map_err(|e| CliError::Config(format!("domain: {e}")))?,
        );
        let out = common.out.clone().or_else(|| config.output.as_ref().map(PathBuf::from));
        Ok(Self {
            hash: config.hash(),
            config,
            mesh,
            out,
            form: OnceCell::new(),
            zero_form: OnceCell::new(),
            dtn: OnceCell::new(),
            zero_dtn: OnceCell::new(),
        })
    }

    fn has_field(&self) -> bool {
        self.config.coefficients != self.config.coefficients.without_field()
    }

    fn assemble(&self, config: &CoefficientConfig) -> Result<Arc<FormMatrices>> {
        Ok(Arc::new(assemble_config(self.mesh.clone(), config)?))
    }

    fn form(&self) -> Result<&Arc<FormMatrices>> {
        cached(&self.form, || self.assemble(&self.config.coefficients))
    }

    fn zero_form(&self) -> Result<&Arc<FormMatrices>> {
        cached(&self.zero_form, || {
            self.assemble(&self.config.coefficients.without_field())
        })
    }

    fn dtn(&self) -> Result<&DtnOperator> {
        cached(&self.dtn, || Ok(build_dtn(self.form()?)?))
    }

    fn zero_dtn(&self) -> Result<&DtnOperator> {
        cached(&self.zero_dtn, || Ok(build_dtn(self.zero_form()?)?))
    }

    fn semigroup(&self, space: SpaceArg, zero: bool) -> Result<SemigroupAction> {
        Ok(match (space, zero) {
            (SpaceArg::Boundary, false) => SemigroupAction::boundary(self.dtn()?)?,
            (SpaceArg::Boundary, true) => SemigroupAction::boundary(self.zero_dtn()?)?,
            (SpaceArg::Domain, false) => SemigroupAction::domain(self.form()?)?,
            (SpaceArg::Domain, true) => SemigroupAction::domain(self.zero_form()?)?,
        })
    }

    fn emit(&self, text: &str, stdout: &mut dyn Write) -> Result<()> {
        match &self.out {
            Some(path) => write_file(path, text),
            None => stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("cannot write output: {e}"))),
        }
    }

    fn emit_json(&self, value: &impl serde::Serialize, stdout: &mut dyn Write) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.emit(&text, stdout)
    }

    fn report(&self, checks: Vec<CheckRecord>) -> Report {
        Report {
            checks,
            config_hash: self.hash.clone(),
            mesh_h: self.mesh.h(),
        }
    }
}

fn cached<T>(cell: &OnceCell<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = init()?;
    Ok(cell.get_or_init(|| v))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn space_name(space: SpaceArg) -> &'static str {
    match space {
        SpaceArg::Boundary => "boundary",
        SpaceArg::Domain => "domain",
    }
}

fn core_space(space: SpaceArg) -> dtnlab_core::semigroup::Space {
    match space {
        SpaceArg::Boundary => dtnlab_core::semigroup::Space::Boundary,
        SpaceArg::Domain => dtnlab_core::semigroup::Space::Domain,
    }
}

/// Unmet hypotheses become report-only records; other errors abort the run.
fn is_refusal(e: &Error) -> bool {
    matches!(
        e,
        Error::Hypothesis(_) | Error::ObtuseMesh { .. } | Error::Refused(_) | Error::NotHermitian(_)
    )
}

fn guarded(name: &str, result: dtnlab_core::Result<CheckRecord>) -> Result<CheckRecord> {
    match result {
        Ok(r) => Ok(r),
        Err(e) if is_refusal(&e) => Ok(CheckRecord::new(name).report_only(format!("refused: {e}"))),
        Err(e) => Err(e.into()),
    }
}

/// Re-judges pass/fail records against a configured tolerance.
fn retune(records: Vec<CheckRecord>, params: &SuiteParams) -> Vec<CheckRecord> {
    let Some(tol) = params.tolerance else {
        return records;
    };
    records
        .into_iter()
        .map(|r| {
            if r.verdict == Verdict::ReportOnly {
                r
            } else {
                let witness = r.witness.clone();
                let worst = r.worst_violation;
                r.judge(worst, tol, witness).note("tolerance set by configuration")
            }
        })
        .collect()
}

fn summarize(report: &Report, stderr: &mut dyn Write) {
    for r in &report.checks {
        let verdict = match r.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::ReportOnly => "report-only",
        };
        let _ = writeln!(
            stderr,
            "{:<28} {:<12} worst {:.3e} (tolerance {:.1e})",
            r.name, verdict, r.worst_violation, r.tolerance
        );
    }
}

fn exit_code(report: &Report) -> i32 {
    i32::from(report.any_failed())
}

pub fn execute(command: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::MeshInfo { common } => mesh_info(&Context::load(common)?, stdout),
        Command::Spectrum { common, count } => spectrum_cmd(&Context::load(common)?, *count, stdout),
        Command::SemigroupApply {
            common,
            t,
            space,
            input,
        } => semigroup_apply(&Context::load(common)?, *t, *space, input.as_deref(), stdout),
        Command::KernelExport { common, t, space } => kernel_export(&Context::load(common)?, *t, *space, stdout),
        Command::Verify { common, suite } => {
            let ctx = Context::load(common)?;
            let suites: &[SuiteArg] = if *suite == SuiteArg::All {
                &SUITE_ORDER
            } else {
                std::slice::from_ref(suite)
            };
            let mut checks = Vec::new();
            for &s in suites {
                checks.extend(run_suite(&ctx, s)?);
            }
            finish(&ctx, checks, stdout, stderr)
        }
        Command::ScanThreshold { common } => {
            let ctx = Context::load(common)?;
            let checks = scan_threshold(&ctx)?;
            finish(&ctx, checks, stdout, stderr)
        }
        Command::FitTrace { common } => {
            let ctx = Context::load(common)?;
            let checks = fit_trace(&ctx)?;
            finish(&ctx, checks, stdout, stderr)
        }
        Command::FitPoisson { common } => {
            let ctx = Context::load(common)?;
            let checks = fit_poisson(&ctx)?;
            finish(&ctx, checks, stdout, stderr)
        }
    }
}

fn finish(ctx: &Context, checks: Vec<CheckRecord>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let report = ctx.report(checks);
    ctx.emit_json(&report, stdout)?;
    summarize(&report, stderr);
    Ok(exit_code(&report))
}

fn mesh_info(ctx: &Context, stdout: &mut dyn Write) -> Result<i32> {
    let m = &ctx.mesh;
    let value = json!({
        "domain": ctx.config.domain,
        "vertices": m.num_vertices(),
        "triangles": m.triangles().len(),
        "edges": m.num_edges(),
        "boundary_nodes": m.boundary_nodes().len(),
        "interior_nodes": m.interior_nodes().len(),
        "area": m.area(),
        "boundary_length": m.boundary_length(),
        "quality": m.quality(),
        "mesh_h": m.h(),
        "config_hash": ctx.hash,
    });
    ctx.emit_json(&value, stdout)?;
    Ok(0)
}

fn spectrum_cmd(ctx: &Context, count: usize, stdout: &mut dyn Write) -> Result<i32> {
    let es = spectrum(ctx.dtn()?, count)?;
    ctx.emit_json(&spectrum_json(&es, ctx.mesh.h(), &ctx.hash), stdout)?;
    Ok(0)
}

fn read_vector(path: &Path, n: usize) -> Result<CVector> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read input {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("input {}: {e}", path.display())))?;
    let bad = |i: usize| CliError::Config(format!("input[{i}]: expected a number or [re, im]"));
    let items = value
        .as_array()
        .ok_or_else(|| CliError::Config("input: expected a JSON array".into()))?;
    if items.len() != n {
        return Err(CliError::Config(format!(
            "input: expected {n} entries, got {}",
            items.len()
        )));
    }
    let entries = items
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Value::Number(x) => x.as_f64().map(|re| Complex64::new(re, 0.0)).ok_or_else(|| bad(i)),
            Value::Array(p) if p.len() == 2 => match (p[0].as_f64(), p[1].as_f64()) {
                (Some(re), Some(im)) => Ok(Complex64::new(re, im)),
                _ => Err(bad(i)),
            },
            _ => Err(bad(i)),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CVector::from_vec(entries))
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--t must be finite and >= 0, got {t}")))
    }
}

fn semigroup_apply(
    ctx: &Context,
    t: f64,
    space: SpaceArg,
    input: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    check_time(t)?;
    let sa = ctx.semigroup(space, false)?;
    let v = match input {
        Some(path) => read_vector(path, sa.dim())?,
        None => CVector::from_element(sa.dim(), Complex64::new(1.0, 0.0)),
    };
    let w = sa.apply(t, &v)?;
    let value = json!({
        "t": t,
        "space": space_name(space),
        "mode": sa.mode(),
        "coords": sa.coords(),
        "values": w.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "mesh_h": ctx.mesh.h(),
        "config_hash": ctx.hash,
    });
    ctx.emit_json(&value, stdout)?;
    Ok(0)
}

fn kernel_export(ctx: &Context, t: f64, space: SpaceArg, stdout: &mut dyn Write) -> Result<i32> {
    check_time(t)?;
    let kernel = ctx.semigroup(space, false)?.kernel(t)?;
    ctx.emit(&kernel.to_csv(), stdout)?;
    Ok(0)
}

fn run_suite(ctx: &Context, suite: SuiteArg) -> Result<Vec<CheckRecord>> {
    let suites = &ctx.config.suites;
    let (params, records) = match suite {
        SuiteArg::TraceHypotheses => {
            let p = &suites.trace_hypotheses;
            (p, vec![check_trace_hypotheses(ctx.form()?, &p.sample_spec())])
        }
        SuiteArg::Invariance => (&suites.invariance, invariance(ctx, &suites.invariance)?),
        SuiteArg::DominationForm => {
            let p = &suites.domination_form;
            let spec = p.sample_spec();
            let single = check_domination_form(ctx.form()?, ctx.zero_form()?, &spec);
            let refinement = domination_form_refinement(&ctx.config.refinement(p), &ctx.config.coefficients, &spec);
            (
                p,
                vec![
                    guarded("domination-form", single)?,
                    guarded("domination-form-refinement", refinement)?,
                ],
            )
        }
        SuiteArg::Positivity => (
            &suites.positivity,
            semigroup_suite(ctx, &suites.positivity, "semigroup-positivity", false)?,
        ),
        SuiteArg::Contractivity => (
            &suites.contractivity,
            semigroup_suite(ctx, &suites.contractivity, "linf-contractivity", true)?,
        ),
        SuiteArg::Diamagnetic => (&suites.diamagnetic, diamagnetic(ctx, &suites.diamagnetic)?),
        SuiteArg::Gauge => (&suites.gauge, vec![gauge(ctx, &suites.gauge)?]),
        SuiteArg::All => unreachable!("expanded by the caller"),
    };
    Ok(retune(records, params))
}

fn invariance(ctx: &Context, p: &SuiteParams) -> Result<Vec<CheckRecord>> {
    let spec = p.sample_spec();
    // A magnetic potential makes the off-diagonal entries complex, so the
    // positive cone is only checked by default for field-free data.
    let sets = p.sets.clone().unwrap_or_else(|| {
        let mut sets = vec![ConvexSetId::SupUnitBall, ConvexSetId::DominationPair];
        if !ctx.has_field() {
            sets.insert(0, ConvexSetId::PositiveCone);
        }
        sets
    });
    let mut records = Vec::new();
    for (label, form, zero) in [
        (
            "domain",
            &**ctx.form()? as &dyn DiscreteForm,
            &**ctx.zero_form()? as &dyn DiscreteForm,
        ),
        (
            "boundary",
            ctx.dtn()? as &dyn DiscreteForm,
            ctx.zero_dtn()? as &dyn DiscreteForm,
        ),
    ] {
        for &set in &sets {
            let result = if set == ConvexSetId::DominationPair {
                PairForm::new(form, zero).and_then(|pair| check_invariance_criterion(&pair, set, &spec))
            } else {
                check_invariance_criterion(form, set, &spec)
            };
            records.push(
                guarded("invariance-criterion", result)?
                    .param("form", label)
                    .param("set", set),
            );
        }
    }
    Ok(records)
}

fn semigroup_suite(ctx: &Context, p: &SuiteParams, name: &str, linf: bool) -> Result<Vec<CheckRecord>> {
    let spec = p.sample_spec();
    let times = p.grid().points()?;
    let mut records = Vec::new();
    for space in [SpaceArg::Boundary, SpaceArg::Domain] {
        let sa = ctx.semigroup(space, false)?;
        let result = if linf {
            verify_linf_contractivity(&sa, &times, &spec)
        } else {
            verify_semigroup_positivity(&sa, &times, &spec)
        };
        records.push(guarded(name, result)?.param("space", space_name(space)));
    }
    Ok(records)
}

fn diamagnetic(ctx: &Context, p: &SuiteParams) -> Result<Vec<CheckRecord>> {
    let spec = p.sample_spec();
    let times = p.grid().points()?;
    let family = ctx.config.refinement(p);
    let mut records = Vec::new();
    for space in [SpaceArg::Boundary, SpaceArg::Domain] {
        let mag = ctx.semigroup(space, false)?;
        let zero = ctx.semigroup(space, true)?;
        let single = verify_diamagnetic(&mag, &zero, &times, &spec);
        records.push(guarded("diamagnetic", single)?.param("space", space_name(space)));
        let refinement = diamagnetic_refinement(&family, &ctx.config.coefficients, core_space(space), &times, &spec);
        records.push(guarded("diamagnetic-refinement", refinement)?);
    }
    Ok(records)
}

fn gauge(ctx: &Context, p: &SuiteParams) -> Result<CheckRecord> {
    let meshes = ctx
        .config
        .refinement(p)
        .into_iter()
        .map(|d| d.build().map(Arc::new))
        .collect::<dtnlab_core::Result<Vec<_>>>()?;
    let chi = p.chi.clone().unwrap_or_else(|| "x*y".into());
    let grad = p.grad.clone().unwrap_or_else(|| ["y".into(), "x".into()]);
    let base = ctx.config.coefficients.without_field();
    let count = p.count.unwrap_or(DEFAULT_GAUGE_COUNT);
    let result = verify_gauge_convergence(&meshes, &base, &chi, [grad[0].as_str(), grad[1].as_str()], count);
    match result {
        Err(Error::Expression { field, source }) => Err(CliError::Config(format!("suites.gauge.{field}: {source}"))),
        other => guarded("gauge-convergence", other),
    }
}

/// The constant real entries of `C`, which the threshold scan requires.
fn constant_c(config: &CoefficientConfig) -> Result<[[f64; 2]; 2]> {
    let mut c = [[0.0; 2]; 2];
    for (k, row) in config.c_matrix.iter().enumerate() {
        for (l, entry) in row.iter().enumerate() {
            c[k][l] = match entry {
                ScalarEntry::Real(RealEntry::Number(v)) => *v,
                _ => {
                    return Err(CliError::Config(format!(
                        "coefficients.C[{k}][{l}]: the threshold scan needs constant real entries"
                    )))
                }
            };
        }
    }
    Ok(c)
}

fn scan_threshold(ctx: &Context) -> Result<Vec<CheckRecord>> {
    let p = &ctx.config.suites.scan_threshold;
    let c = constant_c(&ctx.config.coefficients)?;
    let lambdas = p.lambdas.clone().unwrap_or_else(|| DEFAULT_THRESHOLD_LAMBDAS.to_vec());
    let times = p.grid().points()?;
    let records = match positivity_threshold_scan(ctx.mesh.clone(), c, &lambdas, p.relative.unwrap_or(true), &times) {
        Ok(records) => records,
        Err(e) if is_refusal(&e) => {
            vec![CheckRecord::new("positivity-threshold").report_only(format!("refused: {e}"))]
        }
        Err(e) => return Err(e.into()),
    };
    Ok(retune(records, p))
}

fn fit_trace(ctx: &Context) -> Result<Vec<CheckRecord>> {
    let p = &ctx.config.suites.fit_trace;
    let [t_min, t_max] = p.window.unwrap_or(DEFAULT_TRACE_WINDOW);
    let result = eigenvalues(ctx.dtn()?).and_then(|eig| fit_trace_exponent(&eig, t_min, t_max));
    Ok(retune(vec![guarded("trace-exponent", result)?], p))
}

fn fit_poisson(ctx: &Context) -> Result<Vec<CheckRecord>> {
    let p = &ctx.config.suites.fit_poisson;
    let times = p.times.clone().unwrap_or_else(|| DEFAULT_POISSON_TIMES.to_vec());
    let kernels = |op: &DtnOperator| -> dtnlab_core::Result<Vec<_>> {
        let sa = SemigroupAction::boundary(op)?;
        times.iter().map(|&t| sa.kernel(t)).collect()
    };
    let zero = ctx.config.coefficients.without_field();
    let fine_mesh = Arc::new(ctx.config.domain.refined().build()?);
    let fine_op = build_dtn(&Arc::new(assemble_config(fine_mesh.clone(), &zero)?))?;
    let lambda1 = spectrum(&fine_op, 1)?.eigenvalues[0].max(0.0);
    let coarse = guarded(
        "poisson-constant",
        fit_poisson_constant(&kernels(ctx.zero_dtn()?)?, lambda1),
    )?
    .param("resolution", "configured");
    let fine =
        guarded("poisson-constant", fit_poisson_constant(&kernels(&fine_op)?, lambda1))?.param("resolution", "refined");
    let mut records = Vec::new();
    if coarse.verdict != Verdict::ReportOnly && fine.verdict != Verdict::ReportOnly {
        records.push(guarded("poisson-stability", poisson_stability(&coarse, &fine))?);
        if ctx.has_field() {
            let magnetic = build_dtn(&Arc::new(assemble_config(fine_mesh, &ctx.config.coefficients)?))?;
            let c_star = fine.fitted["c_star"];
            records.push(guarded(
                "poisson-envelope",
                poisson_envelope(&kernels(&magnetic)?, c_star, lambda1),
            )?);
        }
    }
    records.insert(0, fine);
    records.insert(0, coarse);
    Ok(retune(records, p))
}
