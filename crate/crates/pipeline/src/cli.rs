//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use creditline_core::ingest::{ingest_panel, write_panel, Panel};
use serde_json::{json, Value};

use crate::config::{merge_json, PipelineConfig};
use crate::error::PipelineError;
use crate::models::{Estimator, ModelSpec};
use crate::output::{directory_checksums, Bundle};
use crate::run::{run_id, run_pipeline, Prepared, SourceRecord};
use crate::synth::{describe, generate_synthetic, SynthDiagnostics};
use crate::tables as render;

#[derive(Parser, Debug)]
#[command(name = "creditline", version, about = "Credit-line pricing, returns and risk-premium estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic panel bundle.
    Generate {
        #[command(flatten)]
        opts: Options,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a panel bundle and print a summary.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Resolve quarterly spreads and fees into pricing.csv.
    Price(Common),
    /// Compute facility-quarter returns into returns.csv.
    Returns(Common),
    /// Risk-quintile expected returns into table3.csv.
    Univariate(Common),
    /// Clustered least squares into regress.csv (default: the Table 4 models).
    Regress(ModelArgs),
    /// Clustered probits into probit.csv (default: the Table 7 panel A models).
    Probit(ModelArgs),
    /// Every table, figure and record with a manifest.
    Pipeline(Common),
}

/// Options shared by the commands that read a config.
#[derive(Args, Debug, Clone, Default)]
struct Options {
    /// JSON configuration; its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// gt12m_half_else_zero, gt14m_half_else_zero or always_half.
    #[arg(long)]
    ccf_rule: Option<String>,
    /// straight_line_stated_maturity, settle_to_min_maturity_or_path_end or while_unamended.
    #[arg(long)]
    amortization: Option<String>,
    /// times4 or geometric.
    #[arg(long)]
    annualization: Option<String>,
    /// Committed returns: no default-probability markdown.
    #[arg(long)]
    committed: bool,
    /// Subtract letters of credit from the unused commitment.
    #[arg(long)]
    unused_excludes_lc: bool,
    /// rolling_avg or annualized_flows.
    #[arg(long)]
    smoothing: Option<String>,
    /// quarter_of_year or calendar.
    #[arg(long)]
    quarter_effect: Option<String>,
    /// First return quarter kept, e.g. 2006Q2.
    #[arg(long)]
    window_start: Option<String>,
    /// Last return quarter kept.
    #[arg(long)]
    window_end: Option<String>,
}

#[derive(Args, Debug)]
struct Common {
    #[command(flatten)]
    opts: Options,
    /// Panel bundle directory; a synthetic panel is generated when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[command(flatten)]
    common: Common,
    /// JSON model spec or array of specs.
    #[arg(long)]
    spec: Option<PathBuf>,
}

fn read_json(path: &Path) -> Result<Value, PipelineError> {
    let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

/// Flags as a JSON overlay, then the config file on top.
fn resolve_config(o: &Options) -> Result<PipelineConfig, PipelineError> {
    let mut v = json!({});
    let mut set = |path: &[&str], val: Value| {
        let mut over = val;
        for k in path.iter().rev() {
            over = json!({ *k: over });
        }
        merge_json(&mut v, &over);
    };
    if let Some(s) = o.seed {
        set(&["synthetic", "seed"], json!(s));
    }
    for (flag, key) in [
        (&o.ccf_rule, "ccf_rule"),
        (&o.amortization, "upfront_amortization"),
        (&o.annualization, "annualization"),
    ] {
        if let Some(s) = flag {
            set(&["run", "policy", key], json!(s));
        }
    }
    if o.committed {
        set(&["run", "policy", "pd_markdown"], json!(false));
    }
    if o.unused_excludes_lc {
        set(&["run", "policy", "unused_excludes_lc"], json!(true));
    }
    if let Some(s) = &o.smoothing {
        set(&["run", "smoothing"], json!(s));
    }
    if let Some(s) = &o.quarter_effect {
        set(&["run", "quarter_effect"], json!(s));
    }
    match (&o.window_start, &o.window_end) {
        (Some(a), Some(b)) => set(&["run", "window"], json!([a, b])),
        (None, None) => {}
        _ => return Err(PipelineError::Usage("--window-start and --window-end go together".into())),
    }
    if let Some(path) = &o.config {
        merge_json(&mut v, &read_json(path)?);
    }
    let cfg: PipelineConfig = serde_json::from_value(v).map_err(|e| PipelineError::Config(e.to_string()))?;
    cfg.synthetic.validate()?;
    cfg.run.validate()?;
    Ok(cfg)
}

/// Panel from `input`, or generated from the config.
fn load(input: Option<&Path>, cfg: &PipelineConfig) -> Result<(Panel, SourceRecord, Option<SynthDiagnostics>), PipelineError> {
    match input {
        Some(dir) => {
            let panel = ingest_panel(dir)?;
            let checksums = directory_checksums(dir)?;
            Ok((panel, SourceRecord::Directory { path: dir.display().to_string(), checksums }, None))
        }
        None => {
            let b = generate_synthetic(&cfg.synthetic)?;
            Ok((b.panel, SourceRecord::Synthetic { config: cfg.synthetic.clone() }, Some(b.diagnostics)))
        }
    }
}

fn single(out: &Path, name: &str, bytes: Vec<u8>) -> Result<(), PipelineError> {
    let mut b = Bundle::default();
    b.add(name, bytes);
    b.write(out)
}

fn generate(opts: &Options, out: &Path) -> Result<(), PipelineError> {
    let cfg = resolve_config(opts)?;
    let bundle = generate_synthetic(&cfg.synthetic)?;
    let tmp = out.join(".generate");
    let res = (|| {
        write_panel(&tmp, &bundle.panel)?;
        let mut files = Bundle::default();
        let mut names: Vec<PathBuf> =
            fs::read_dir(&tmp).map_err(PipelineError::io(&tmp))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        names.sort();
        for p in names {
            let bytes = fs::read(&p).map_err(PipelineError::io(&p))?;
            files.add(p.file_name().expect("file").to_string_lossy().into_owned(), bytes);
        }
        let manifest = json!({
            "version": crate::run::VERSION,
            "config": cfg.synthetic,
            "data_generating_process": describe(&cfg.synthetic),
            "diagnostics": bundle.diagnostics,
            "files": files.checksums(),
        });
        let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        text.push(b'\n');
        files.add("generator_manifest.json", text);
        files.write(out)
    })();
    let _ = fs::remove_dir_all(&tmp);
    res
}

fn ingest(input: &Path) -> Result<(), PipelineError> {
    let panel = ingest_panel(input)?;
    let summary = json!({
        "facilities": panel.facilities.len(),
        "firm_quarters": panel.firms.len(),
        "facility_quarters": panel.states.len(),
        "rate_quarters": panel.rates.len(),
        "lender_quarters": panel.lenders.len(),
        "orphans": panel.orphans,
    });
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn read_specs(path: Option<&Path>, default: Vec<ModelSpec>, estimator: Estimator) -> Result<Vec<ModelSpec>, PipelineError> {
    let mut specs = match path {
        None => default,
        Some(p) => {
            let v = read_json(p)?;
            let parsed = if v.is_array() {
                serde_json::from_value::<Vec<ModelSpec>>(v)
            } else {
                serde_json::from_value::<ModelSpec>(v).map(|s| vec![s])
            };
            parsed.map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?
        }
    };
    for s in &mut specs {
        s.estimator = estimator;
    }
    Ok(specs)
}

fn models(args: &ModelArgs, estimator: Estimator) -> Result<(), PipelineError> {
    let c = &args.common;
    let cfg = resolve_config(&c.opts)?;
    let (panel, source, _) = load(c.input.as_deref(), &cfg)?;
    let (default, file) = match estimator {
        Estimator::Ols => (crate::models::tables::table4(), "regress.csv"),
        Estimator::Probit => (crate::models::tables::table7(false), "probit.csv"),
    };
    let specs = read_specs(args.spec.as_deref(), default, estimator)?;
    let id = run_id(&source, &cfg.run);
    let prep = Prepared::new(&panel)?;
    let data = prep.dataset(&prep.returns(&cfg.run.policy), &prep.controls(cfg.run.smoothing), &cfg.run);
    let outcomes = crate::run::estimate_all(&specs, &data)?;
    let mut b = Bundle::default();
    b.add(
        file,
        match estimator {
            Estimator::Ols => render::coefficient_table(&id, &outcomes),
            Estimator::Probit => render::probit_table(&id, &outcomes),
        },
    );
    b.add("exclusions.csv", render::exclusions_table(&id, &outcomes.iter().collect::<Vec<_>>()));
    b.write(&c.out)
}

fn dispatch(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Generate { opts, out } => generate(&opts, &out),
        Command::Ingest { input } => ingest(&input),
        Command::Price(c) => {
            let cfg = resolve_config(&c.opts)?;
            let (panel, source, _) = load(c.input.as_deref(), &cfg)?;
            let prep = Prepared::new(&panel)?;
            single(&c.out, "pricing.csv", render::pricing_csv(&run_id(&source, &cfg.run), &prep.priced.pricing))
        }
        Command::Returns(c) => {
            let cfg = resolve_config(&c.opts)?;
            let (panel, source, _) = load(c.input.as_deref(), &cfg)?;
            let prep = Prepared::new(&panel)?;
            let rs = prep.returns(&cfg.run.policy);
            single(&c.out, "returns.csv", render::returns_csv(&run_id(&source, &cfg.run), &rs))
        }
        Command::Univariate(c) => {
            let cfg = resolve_config(&c.opts)?;
            let (panel, source, _) = load(c.input.as_deref(), &cfg)?;
            let prep = Prepared::new(&panel)?;
            let data = prep.dataset(&prep.returns(&cfg.run.policy), &prep.controls(cfg.run.smoothing), &cfg.run);
            let table = render::univariate_table(&run_id(&source, &cfg.run), &data)
                .map_err(|source| PipelineError::Estimation { stage: "univariate".into(), source })?;
            single(&c.out, "table3.csv", table)
        }
        Command::Regress(a) => models(&a, Estimator::Ols),
        Command::Probit(a) => models(&a, Estimator::Probit),
        Command::Pipeline(c) => {
            let cfg = resolve_config(&c.opts)?;
            let (panel, source, diag) = load(c.input.as_deref(), &cfg)?;
            let bundle = run_pipeline(&panel, source, &cfg.run, diag.as_ref())?;
            bundle.write(&c.out)
        }
    }
}

/// Parses `args` and runs the command. Help and version requests print and
/// return `Ok`.
pub fn run_cli<I, T>(args: I) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                // A closed pipe (e.g. `| head`) is not an error worth reporting.
                let _ = write!(std::io::stdout(), "{e}");
                return Ok(());
            }
            return Err(PipelineError::Usage(e.to_string()));
        }
    };
    dispatch(cli.command)
}
