use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use thermoforge::composer::{
    compose_estimate, estimate_via_merge, percentile_score, reduced_options, ModelSet,
};
use thermoforge::config::{ComplexSystemSpec, ConfigFamily, ConfigGraph, SplitMode};
use thermoforge::fsio::write_atomic;
use thermoforge::knowledge::{
    design_matrix, evaluate, logistic_baseline_accuracy, train_size,
    train_test_split, FeatureSpec, KnnModel, DEFAULT_K, TRAIN_FRACTION,
};
use thermoforge::oloc::{solve, verify_feasibility, SolveOptions};
use thermoforge::study::{read_dataset, run_study, write_dataset, StudySpec};
use thermoforge::thermal::{
    simulate, write_trajectory_csv, ConstantFlows, LoadVector, PhysicsGraph, ThermalParams,
};
use thermoforge::Error;

mod plot;

#[derive(Parser, Debug)]
#[command(name = "thermoforge", version, about = "Coolant-loop configuration design")]
struct Cli {
    /// Worker threads for batch solves.
    #[arg(long, global = true, env = "THERMOFORGE_WORKERS")]
    workers: Option<usize>,

    /// Thermal constants as JSON; built-in defaults otherwise.
    #[arg(long, global = true)]
    params: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write every configuration of a family plus an index.
    Enumerate {
        #[arg(long)]
        nodes: usize,
        #[arg(long, value_enum, default_value = "single")]
        mode: Mode,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a configuration under constant flows.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        loads: LoadsArg,
        /// Independent flows in kg/s; an even split by default.
        #[arg(long, value_delimiter = ',')]
        flows: Option<Vec<f64>>,
        #[arg(long, default_value_t = 60.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximize endurance for one configuration.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        loads: LoadsArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also write the fine-step trajectory of the solution as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve every configuration for sampled loads and label the samples.
    Study {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        n_pop: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a k-NN model on the training part of a dataset.
    Train {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        /// Plain load fractions up to three nodes, fractions plus magnitude
        /// beyond, unless set.
        #[arg(long, value_enum)]
        features: Option<Features>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on the test part of a dataset.
    Eval {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        model: PathBuf,
        /// Write the report as JSON here; the table goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the configuration for one load vector.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        loads: LoadsArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compose a design for a multi-junction system from per-group models.
    Compose {
        #[arg(long)]
        system: PathBuf,
        /// Directory of model files; each covers the group size it was
        /// trained on.
        #[arg(long)]
        models: PathBuf,
        /// Score the design against this many sampled composites.
        #[arg(long)]
        percentile: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a four-node design through a three-node model.
    MergeEstimate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        loads: LoadsArg,
        /// Also solve all four-node configurations and report the regret.
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit CSV tables for plotting.
    PlotData {
        #[arg(long, value_enum)]
        kind: plot::Kind,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Merge estimates (JSON object or array) for the regret histogram.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct LoadsArg {
    /// Heat loads in kW, comma separated, in node order.
    #[arg(long, value_delimiter = ',', required = true)]
    loads: Vec<f64>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        let mut o = SolveOptions::default();
        if let Some(s) = self.segments {
            o.segments = s;
        }
        if let Some(s) = self.seed {
            o.seed = s;
        }
        o
    }
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = TRAIN_FRACTION)]
    train_fraction: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Single,
    Multi,
    All,
}

impl From<Mode> for SplitMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Single => SplitMode::Single,
            Mode::Multi => SplitMode::Multi,
            Mode::All => SplitMode::All,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Features {
    Normalized,
    Magnitude,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonConvergence(_) | Error::Divergence { .. } => 2,
            Error::Io(_) => 3,
            Error::Csv(c) if c.is_io_error() => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e).into()
    }
}

type CmdResult = Result<Vec<PathBuf>, Failure>;

fn validation(msg: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: msg.into(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes to `out` atomically, or prints when no path is given.
fn emit(out: Option<&Path>, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(p) => {
            ensure_parent(p)?;
            write_atomic(p, bytes)?;
            written.push(p.to_path_buf());
        }
        None => {
            use std::io::Write;
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            if !bytes.ends_with(b"\n") {
                so.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn load_params(path: Option<&Path>) -> Result<ThermalParams<f64>, Failure> {
    let p: ThermalParams<f64> = match path {
        Some(p) => read_json(p)?,
        None => ThermalParams::default(),
    };
    p.validate()?;
    Ok(p)
}

fn load_graph(path: &Path) -> Result<ConfigGraph, Failure> {
    read_json(path)
}

fn load_model(path: &Path) -> Result<KnnModel<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(KnnModel::from_json(&text)?)
}

fn model_nodes(m: &KnnModel<f64>) -> usize {
    m.family
        .map(|f| f.n_nodes)
        .unwrap_or_else(|| m.spec.nodes_for_dimension(m.dimension()))
}

fn run(cli: Cli) -> CmdResult {
    let params = load_params(cli.params.as_deref())?;
    let mut written = Vec::new();
    match cli.command {
        Command::Enumerate {
            nodes,
            mode,
            depth,
            out,
        } => {
            let family = ConfigFamily {
                n_nodes: nodes,
                split_mode: mode.into(),
                max_depth: depth.unwrap_or(nodes.max(1)),
            };
            let configs = family.enumerate()?;
            std::fs::create_dir_all(&out)?;
            #[derive(Serialize)]
            struct Entry {
                index: usize,
                canonical: String,
                file: String,
            }
            let mut index = Vec::with_capacity(configs.len());
            for (i, g) in configs.iter().enumerate() {
                let name = format!("config_{i:04}.json");
                let path = out.join(&name);
                write_atomic(&path, format!("{}\n", g.to_json()).as_bytes())?;
                written.push(path);
                index.push(Entry {
                    index: i,
                    canonical: g.canonical_string(),
                    file: name,
                });
            }
            #[derive(Serialize)]
            struct Index {
                family: ConfigFamily,
                count: usize,
                configs: Vec<Entry>,
            }
            let path = out.join("index.json");
            write_atomic(
                &path,
                &pretty(&Index {
                    family,
                    count: configs.len(),
                    configs: index,
                })?,
            )?;
            written.push(path);
            println!("{} configurations", configs.len());
        }
        Command::Simulate {
            config,
            loads,
            flows,
            t_max,
            dt,
            out,
        } => {
            let g = load_graph(&config)?;
            let pg = PhysicsGraph::build(&g, &params)?;
            let loads = LoadVector::new(loads.loads)?;
            let flows = match flows {
                Some(f) => {
                    pg.layout().validate_indp(&f)?;
                    if pg.layout().bound_violation(params.pump_flow, &f) > 0.0 {
                        return Err(validation("flows leave a branch outside [0, pump flow]"));
                    }
                    f
                }
                None => pg.layout().equal_split(&g, params.pump_flow),
            };
            let traj = simulate(&pg, &loads, &ConstantFlows(flows), t_max, dt)?;
            let end = thermoforge::thermal::endurance_from_trajectory(&traj, &pg.upper_bounds());
            let mut buf = Vec::new();
            write_trajectory_csv(&traj, &pg, &mut buf)?;
            emit(out.as_deref(), &buf, &mut written)?;
            match end {
                Some(t) => eprintln!("endurance {t:.4} s"),
                None => eprintln!("no bound reached within {t_max} s"),
            }
        }
        Command::Solve {
            config,
            loads,
            solver,
            trajectory,
            out,
        } => {
            let g = load_graph(&config)?;
            let loads = LoadVector::new(loads.loads)?;
            let sol = solve(&g, &params, &loads, &solver.options())?;
            if !sol.converged {
                return Err(Failure {
                    code: 2,
                    message: format!(
                        "solver did not converge (best t_end {:.4} s, defect {:.3e}, path {:.3e})",
                        sol.t_end, sol.violations.max_defect, sol.violations.max_path
                    ),
                });
            }
            if let Some(tp) = trajectory {
                let pg = PhysicsGraph::build(&g, &params)?;
                let traj = simulate(&pg, &loads, &sol.policy(), sol.t_end, 0.001)?;
                let mut buf = Vec::new();
                write_trajectory_csv(&traj, &pg, &mut buf)?;
                ensure_parent(&tp)?;
                write_atomic(&tp, &buf)?;
                written.push(tp);
                let check = verify_feasibility(&sol, &pg, &loads)?;
                if check.mismatch_flag {
                    eprintln!("warning: re-simulation differs by {:.2}%", 100.0 * check.mismatch);
                }
            }
            emit(out.as_deref(), sol.to_json()?.as_bytes(), &mut written)?;
            eprintln!("t_end {:.4} s ({})", sol.t_end, g.canonical_string());
        }
        Command::Study {
            spec,
            nodes,
            n_pop,
            mode,
            depth,
            seed,
            segments,
            out,
        } => {
            let mut s = match (&spec, nodes) {
                (Some(p), _) => read_json::<StudySpec>(p)?,
                (None, Some(n)) => StudySpec::new(n, 100, 0),
                (None, None) => return Err(validation("study needs --spec or --nodes")),
            };
            if let Some(n) = nodes {
                s.n_nodes = n;
            }
            if let Some(n) = n_pop {
                s.n_pop = n;
            }
            if let Some(m) = mode {
                s.split_mode = m.into();
            }
            if depth.is_some() {
                s.max_depth = depth;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = segments {
                s.solver.segments = v;
            }
            let ds = run_study(&s, &params)?;
            ensure_parent(&out)?;
            write_dataset(&ds, &out)?;
            written.push(out.clone());
            written.push(thermoforge::study::sidecar_path(&out));
            eprintln!(
                "{} samples x {} configurations, {} invalid",
                ds.records.len(),
                ds.n_conf(),
                ds.n_invalid()
            );
        }
        Command::Train {
            split,
            k,
            features,
            out,
        } => {
            let ds = read_dataset(&split.dataset)?;
            let sp = make_split(&ds, &split)?;
            let spec = feature_spec(features, ds.spec.n_nodes);
            let (x, y) = design_matrix(&ds, &sp.train, &spec)?;
            let model = thermoforge::knowledge::train_knn(&x, &y, k, spec)?
                .with_family(ds.spec.family());
            ensure_parent(&out)?;
            model.save(&out)?;
            written.push(out);
            eprintln!("trained on {} samples, k = {k}", sp.train.len());
        }
        Command::Eval { split, model, out } => {
            let ds = read_dataset(&split.dataset)?;
            let sp = make_split(&ds, &split)?;
            let m = load_model(&model)?;
            let mut report = evaluate(&m, &ds, &sp)?;
            report.logistic_accuracy = Some(logistic_baseline_accuracy(&ds, &sp, &m.spec)?);
            print!("{}", report.table());
            if let Some(p) = out {
                ensure_parent(&p)?;
                write_atomic(&p, &pretty(&report)?)?;
                written.push(p);
            }
        }
        Command::Predict { model, loads, out } => {
            let m = load_model(&model)?;
            let label = m.predict_loads(&loads.loads)?;
            let family = m
                .family
                .unwrap_or_else(|| ConfigFamily::single(loads.loads.len()));
            let configs = family.enumerate()?;
            let g = configs
                .get(label)
                .ok_or_else(|| validation(format!("label {label} outside the model's family")))?;
            #[derive(Serialize)]
            struct Prediction<'a> {
                label: usize,
                canonical: String,
                config: &'a ConfigGraph,
            }
            emit(
                out.as_deref(),
                &pretty(&Prediction {
                    label,
                    canonical: g.canonical_string(),
                    config: g,
                })?,
                &mut written,
            )?;
        }
        Command::Compose {
            system,
            models,
            percentile,
            seed,
            segments,
            report,
            out,
        } => {
            let spec: ComplexSystemSpec = read_json(&system)?;
            let set = load_model_dir(&models)?;
            let g = compose_estimate(&spec, &set)?;
            emit(out.as_deref(), format!("{}\n", g.to_json()).as_bytes(), &mut written)?;
            eprintln!("design {}", g.canonical_string());
            if let Some(n) = percentile {
                let mut opts = reduced_options();
                if let Some(s) = segments {
                    opts.segments = s;
                }
                let r = percentile_score(&g, &spec, n, seed, &opts, &params)?;
                eprintln!(
                    "objective {:.4} s, percentile {:.1} over {} composites",
                    r.design_objective,
                    r.percentile,
                    r.sampled.len()
                );
                match report {
                    Some(p) => {
                        ensure_parent(&p)?;
                        write_atomic(&p, &pretty(&r)?)?;
                        written.push(p);
                    }
                    None => print!("{}", String::from_utf8_lossy(&pretty(&r)?)),
                }
            }
        }
        Command::MergeEstimate {
            model,
            loads,
            reference,
            segments,
            out,
        } => {
            let m = load_model(&model)?;
            if model_nodes(&m) != 3 {
                return Err(validation("merge estimation needs a three-node model"));
            }
            let mut opts = reduced_options();
            if let Some(s) = segments {
                opts.segments = s;
            }
            let (_, est) = estimate_via_merge(&loads.loads, &m, &params, &opts, reference)?;
            emit(out.as_deref(), &pretty(&est)?, &mut written)?;
            if let Some(r) = &est.reference {
                eprintln!("estimate {} regret {:.4}", est.estimate, r.regret);
            }
        }
        Command::PlotData {
            kind,
            dataset,
            model,
            report,
            bins,
            out,
        } => {
            let ds = match &dataset {
                Some(p) => Some(read_dataset(p)?),
                None => None,
            };
            let m = match &model {
                Some(p) => Some(load_model(p)?),
                None => None,
            };
            let regrets = match &report {
                Some(p) => Some(plot::read_regrets(p)?),
                None => None,
            };
            let csv =
                plot::emit_plot_data(kind, ds.as_ref(), m.as_ref(), regrets.as_deref(), bins)?;
            emit(out.as_deref(), &csv, &mut written)?;
        }
    }
    Ok(written)
}

fn feature_spec(f: Option<Features>, n_nodes: usize) -> FeatureSpec {
    match f {
        Some(Features::Normalized) => FeatureSpec::normalized(),
        Some(Features::Magnitude) => FeatureSpec::with_magnitude(),
        None => FeatureSpec::for_nodes(n_nodes),
    }
}

fn make_split(
    ds: &thermoforge::study::Dataset,
    a: &SplitArgs,
) -> Result<thermoforge::knowledge::Split, Failure> {
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(validation("--train-fraction must lie in (0, 1)"));
    }
    let n_valid = ds.valid().count();
    Ok(train_test_split(ds, train_size(n_valid, a.train_fraction), a.seed)?)
}

fn load_model_dir(dir: &Path) -> Result<ModelSet, Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut set = ModelSet::new();
    for p in paths {
        let m = load_model(&p)?;
        let n = model_nodes(&m);
        if set.insert(n, m).is_some() {
            return Err(validation(format!(
                "two models for groups of {n} nodes in {}",
                dir.display()
            )));
        }
    }
    Ok(set)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
