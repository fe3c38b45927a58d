use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use qchi2::gof::{required_samples_for_rate, upper_bound_matrix};
use qchi2::io::{
    read_json, to_json_pretty, DesignFile, PlanFile, PovmFile, RecordFile, RunManifest, StateFile,
};
use qchi2::oracle::{
    least_favorable_direction, random_density, random_povm, verify_lemma1, verify_split_dominance, verify_xi,
    OracleReport, SweepConfig,
};
use qchi2::povm::OptimalConstruction;
use qchi2::simulator::{power_curve, sample_record, Seed};
use qchi2::{divergence_rate, optimal_povm, run_test, tolerance, validate_density, DensityMatrix, TestReport};
use serde::Serialize;

use crate::{Cli, Command, VerifyArgs};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ORACLE: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Core(qchi2::Error),
    Io(PathBuf, std::io::Error),
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<qchi2::Error> for CliError {
    fn from(e: qchi2::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Six significant digits for human-readable summaries.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    if !(1e-4..1e6).contains(&x.abs()) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - x.abs().log10().floor() as i32).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}

struct Context {
    overrides: BTreeMap<String, f64>,
}

impl Context {
    fn manifest(&self, command: &str, inputs: &[&Path], seed: Option<u64>) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            seed,
            version: format!("qchi2 {}", env!("CARGO_PKG_VERSION")),
            tolerance_overrides: self.overrides.clone(),
        }
    }
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    payload: &'a T,
}

fn write_output<T: Serialize>(out: Option<&Path>, manifest: &RunManifest, payload: &T) -> CliResult<()> {
    let text = to_json_pretty(&WithManifest { manifest, payload })?;
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn read_state(path: &Path) -> CliResult<DensityMatrix> {
    Ok(read_json::<StateFile>(path)?.to_state()?)
}

pub fn run(cli: Cli) -> CliResult<ExitCode> {
    let mut overrides = BTreeMap::new();
    if let Some(tol) = cli.tol_psd {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(CliError::Usage(format!("--tol-psd must be positive, got {tol}")));
        }
        tolerance::set_psd_override(tol);
    }
    if tolerance::psd() != tolerance::PSD_DEFAULT {
        overrides.insert("psd".to_string(), tolerance::psd());
    }
    let ctx = Context { overrides };
    match cli.command {
        Command::Xi { state, out } => xi(&ctx, &state, out.as_deref()),
        Command::OptimalPovm { state, out } => optimal(&ctx, &state, out.as_deref()),
        Command::Simulate { plan, out } => simulate(&ctx, &plan, out.as_deref()),
        Command::Test {
            record,
            state,
            alpha,
            two_sided,
            out,
        } => test(&ctx, &record, &state, alpha, two_sided, out.as_deref()),
        Command::Verify(args) => verify(&ctx, &args),
        Command::PaperExamples {
            out,
            trials,
            seed,
            alpha,
        } => paper_examples(out.as_deref(), trials, seed, alpha),
        Command::Validate { file } => validate(&file),
    }
}

#[derive(Serialize)]
struct XiOutput {
    xi: f64,
    mu_s: f64,
    spectrum: Vec<f64>,
    rank_deficient: bool,
    upper_bound_xi: f64,
}

fn xi(ctx: &Context, state: &Path, out: Option<&Path>) -> CliResult<ExitCode> {
    let sigma = read_state(state)?;
    let rate = divergence_rate(&sigma)?;
    let ub = upper_bound_matrix(&sigma)?;
    println!("xi      = {}", sig6(rate.xi));
    println!("mu(S)   = {}", sig6(rate.mu_s));
    if rate.rank_deficient {
        println!("note: state is rank deficient; xi uses its exact spectrum, measurement design and test use a regularized state");
    }
    if let Some(out) = out {
        let payload = XiOutput {
            xi: rate.xi,
            mu_s: rate.mu_s,
            spectrum: rate.spectrum,
            rank_deficient: rate.rank_deficient,
            upper_bound_xi: ub.smallest_nonzero,
        };
        write_output(Some(out), &ctx.manifest("xi", &[state], None), &payload)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct OptimalOutput {
    dim: usize,
    xi: f64,
    mu_s: f64,
    degrees_of_freedom: usize,
    regularized: bool,
    construction: OptimalConstruction,
    groups: Vec<qchi2::io::DesignGroupFile>,
    flattened: PovmFile,
}

fn optimal(ctx: &Context, state: &Path, out: Option<&Path>) -> CliResult<ExitCode> {
    let sigma = read_state(state)?;
    let opt = optimal_povm(&sigma)?;
    let payload = OptimalOutput {
        dim: sigma.dim(),
        xi: opt.xi(),
        mu_s: opt.rate.mu_s,
        degrees_of_freedom: opt.degrees_of_freedom(),
        regularized: opt.regularized,
        construction: opt.construction,
        groups: DesignFile::from_design(&opt.design).groups,
        flattened: PovmFile::from_povm(&opt.flattened),
    };
    let manifest = ctx.manifest("optimal-povm", &[state], None);
    write_output(out, &manifest, &payload)?;
    if out.is_some() {
        println!("xi = {}", sig6(opt.xi()));
        println!("groups = {}, elements = {}, df = {}", opt.design.groups().len(), opt.flattened.len(), opt.degrees_of_freedom());
        if opt.regularized {
            println!("note: rank-deficient state was regularized for the eigenbasis");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(ctx: &Context, plan_path: &Path, out: Option<&Path>) -> CliResult<ExitCode> {
    let plan_file: PlanFile = read_json(plan_path)?;
    let plan = plan_file.to_plan(base_dir(plan_path))?;
    let record = sample_record(&plan)?;
    let manifest = ctx.manifest("simulate", &[plan_path], Some(plan_file.seed));
    let file = RecordFile::from_record(&record, Some(plan_file.seed), None);
    write_output(out, &manifest, &file)?;
    if out.is_some() {
        for (g, counts) in record.groups().iter().enumerate() {
            println!("group {g}: k = {}", counts.n);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn test(
    ctx: &Context,
    record_path: &Path,
    state: &Path,
    alpha: f64,
    two_sided: bool,
    out: Option<&Path>,
) -> CliResult<ExitCode> {
    let record = read_json::<RecordFile>(record_path)?.to_record(base_dir(record_path))?;
    let sigma = read_state(state)?;
    let report: TestReport = run_test(&record, &sigma, alpha, two_sided)?;
    println!("statistic   = {}", sig6(report.statistic));
    println!("df          = {}", report.df);
    println!("critical    = {}", sig6(report.critical_value));
    if let Some(low) = report.critical_value_low {
        println!("critical lo = {}", sig6(low));
    }
    println!("p-value     = {}", sig6(report.p_value));
    println!("decision    = {}", serde_json::to_value(report.decision).unwrap_or_default().as_str().unwrap_or("?"));
    if report.small_count_warning {
        println!("warning: some expected counts n*p_i are below 5; the chi-squared approximation may be poor");
    }
    if report.regularized {
        println!("note: rank-deficient hypothesis was regularized");
    }
    if let Some(out) = out {
        write_output(Some(out), &ctx.manifest("test", &[record_path, state], None), &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct VerifyOutput {
    reports: Vec<OracleReport>,
}

fn verify(ctx: &Context, args: &VerifyArgs) -> CliResult<ExitCode> {
    let (lemma1, xi, split) = if args.all {
        (true, true, true)
    } else {
        (args.lemma1, args.xi, args.split)
    };
    if !(lemma1 || xi || split) {
        return Err(CliError::Usage("select --lemma1, --xi, --split or --all".into()));
    }
    if args.dim < 2 {
        return Err(CliError::Usage("--dim must be at least 2".into()));
    }
    let config = SweepConfig::new(args.trials, args.seed, args.dim)?;
    let d = args.dim;
    let mut reports = Vec::new();
    if lemma1 {
        let sigma = random_density(d, args.seed);
        let rho = random_density(d, args.seed.wrapping_add(1));
        reports.push(("lemma1", verify_lemma1(&sigma, &rho, &config)?.to_report()));
    }
    if xi {
        let sigma = random_density(d, args.seed);
        reports.push(("xi", verify_xi(&sigma, &config)?.to_report()));
    }
    if split {
        let povm = random_povm(d, d + 1, args.seed)?;
        let sigma = random_density(d, args.seed.wrapping_add(2));
        reports.push(("split", verify_split_dominance(&povm, 0, &sigma, &config)?.to_report()));
    }
    for (name, r) in &reports {
        println!(
            "{name:<7} {} closed_form={} empirical={} gap={:.3e}",
            if r.verdict { "PASS" } else { "FAIL" },
            sig6(r.closed_form),
            sig6(r.empirical),
            r.gap
        );
    }
    let all_pass = reports.iter().all(|(_, r)| r.verdict);
    if let Some(out) = &args.out {
        let payload = VerifyOutput {
            reports: reports.into_iter().map(|(_, r)| r).collect(),
        };
        write_output(Some(out), &ctx.manifest("verify", &[], Some(args.seed)), &payload)?;
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ORACLE)
    })
}

struct XiRow {
    family: &'static str,
    parameter: String,
    closed_form: f64,
    computed: f64,
    upper_bound: f64,
}

fn xi_rows() -> CliResult<Vec<XiRow>> {
    let mut rows = Vec::new();
    let mut push = |family, parameter: String, spectrum: Vec<f64>, closed_form: f64| -> CliResult<()> {
        let sigma = DensityMatrix::diagonal(&spectrum)?;
        rows.push(XiRow {
            family,
            parameter,
            closed_form,
            computed: divergence_rate(&sigma)?.xi,
            upper_bound: upper_bound_matrix(&sigma)?.smallest_nonzero,
        });
        Ok(())
    };
    for d in 2..=8 {
        let mut l = vec![0.0; d];
        l[0] = 1.0;
        push("pure", format!("D={d}"), l, 1.0)?;
    }
    for d in 2..=8 {
        let mut l = vec![0.0; d];
        l[0] = 0.5;
        l[1] = 0.5;
        push("rank2", format!("D={d}"), l, 2.0 / 3.0)?;
    }
    for d in 2..=8 {
        let df = d as f64;
        push("maximally_mixed", format!("D={d}"), vec![1.0 / df; d], df / (df + 1.0))?;
    }
    for k in 5..=10 {
        let l1 = k as f64 / 10.0;
        let l2 = 1.0 - l1;
        push("qubit", format!("lambda1={l1}"), vec![l1, l2], 1.0 / (1.0 + 2.0 * l1 * l2))?;
    }
    Ok(rows)
}

fn paper_examples(out: Option<&Path>, trials: u64, seed: u64, alpha: f64) -> CliResult<ExitCode> {
    let rows = xi_rows()?;
    let mut xi_csv = String::from("family,parameter,closed_form,computed,upper_bound,abs_error\n");
    println!("{:<16} {:<12} {:>10} {:>10} {:>10}", "family", "parameter", "closed", "computed", "abs_error");
    for r in &rows {
        let err = (r.closed_form - r.computed).abs().max((r.closed_form - r.upper_bound).abs());
        xi_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.family, r.parameter, r.closed_form, r.computed, r.upper_bound, err
        ));
        println!(
            "{:<16} {:<12} {:>10} {:>10} {:>10.1e}",
            r.family,
            r.parameter,
            sig6(r.closed_form),
            sig6(r.computed),
            err
        );
    }

    let epsilon = 0.1;
    let sigma = DensityMatrix::diagonal(&[0.7, 0.3])?;
    let opt = optimal_povm(&sigma)?;
    let (_, direction) = least_favorable_direction(&opt.flattened, &sigma)?;
    let rho = validate_density(&sigma.as_hermitian().add(&direction.scale(epsilon))?)?;
    let predicted = required_samples_for_rate(opt.xi(), opt.degrees_of_freedom(), epsilon, alpha)?;
    let grid: Vec<u64> = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|f| ((predicted.n as f64 * f).round() as u64).max(1))
        .collect();
    let curve = power_curve(&sigma, &rho, &opt.design, alpha, &grid, trials, Seed(seed))?;
    let mut power_csv = String::from("n,rejection_rate,trials,predicted_n\n");
    println!();
    println!(
        "qubit power curve: sigma=diag(0.7,0.3), epsilon={epsilon}, alpha={alpha}, predicted n={}",
        predicted.n
    );
    for p in &curve {
        power_csv.push_str(&format!("{},{},{},{}\n", p.n, p.rejection_rate, p.trials, predicted.n));
        println!("n={:<8} rejection_rate={}", p.n, sig6(p.rejection_rate));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
        for (name, body) in [("xi_examples.csv", &xi_csv), ("power_curve.csv", &power_csv)] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| CliError::Io(path.clone(), e))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(path: &Path) -> CliResult<ExitCode> {
    let value: serde_json::Value = read_json(path)?;
    let Some(obj) = value.as_object() else {
        return Err(qchi2::Error::Format("top level is not a JSON object".into()).into());
    };
    let has = |k: &str| obj.contains_key(k);
    let is_record = obj
        .get("groups")
        .and_then(|g| g.as_array())
        .and_then(|g| g.first())
        .is_some_and(|g| g.get("counts").is_some());
    let (plan, state, povm, design) = (has("rho"), has("matrix"), has("elements"), has("groups"));
    let base = base_dir(path);
    let kind = if plan {
        let p = from_value::<PlanFile>(value)?.to_plan(base)?;
        format!("plan (D={}, n={}, {} groups)", p.design.dim(), p.n_total, p.design.groups().len())
    } else if state {
        let s = from_value::<StateFile>(value)?.to_state()?;
        format!("state (D={}, rank deficient: {})", s.dim(), s.is_rank_deficient())
    } else if povm {
        let p = from_value::<PovmFile>(value)?.to_povm()?;
        format!("povm (D={}, {} elements)", p.dim(), p.len())
    } else if is_record {
        let r = from_value::<RecordFile>(value)?.to_record(base)?;
        format!("record ({} shots, {} groups)", r.total_shots(), r.groups().len())
    } else if design {
        let d = from_value::<DesignFile>(value)?.to_design()?;
        format!("design (D={}, {} groups, df={})", d.dim(), d.groups().len(), qchi2::degrees_of_freedom(&d))
    } else {
        return Err(qchi2::Error::Format("unrecognized file: expected a state, povm, design, plan or record".into()).into());
    };
    println!("valid {kind}");
    Ok(ExitCode::SUCCESS)
}

fn from_value<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| CliError::Core(qchi2::Error::Format(e.to_string())))
}
