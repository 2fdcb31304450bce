//! Sample, train, evaluate, and write artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use elastic_pinn::checkpoint::{atomic_write, load_checkpoint, save_state};
use elastic_pinn::collocation::{extend_collocation, sample_collocation, CollocationSet};
use elastic_pinn::eval::{evaluate_on_grid, predict, FieldError, GridEvaluation};
use elastic_pinn::loss::{BeamProblem, FieldSource, LossReport, PlateProblem, Problem};
use elastic_pinn::trainer::{TrainConfig, TrainReport, TrainState, Trainer};
use elastic_pinn::{Error, FieldBundle};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig, Loaded, ProblemKind};

/// Failure of a command, mapped to an exit code by `main`.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    /// Training hit a non-finite value; the last finite state was saved when possible.
    Numeric(String),
    Other(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e}"),
            Failure::Numeric(m) => write!(f, "numeric abort: {m}"),
            Failure::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite { .. } => Failure::Numeric(e.to_string()),
            Error::Config(_) => Failure::Config(ConfigError { line: None, message: e.to_string() }),
            e => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

/// Validated problem with everything needed to train it.
pub struct Prepared {
    pub problem: Box<dyn Problem>,
    pub warnings: Vec<String>,
}

pub fn prepare(loaded: &Loaded) -> Result<Prepared, Failure> {
    let c = &loaded.config;
    match c.problem {
        ProblemKind::Beam => {
            let spec = loaded.beam_spec()?;
            let warnings = spec.validate()?;
            let problem =
                BeamProblem::new(&spec, &c.loss).map_err(|e| loaded.config_error("loss", "", e.to_string()))?;
            Ok(Prepared { problem: Box::new(problem), warnings })
        }
        ProblemKind::Plate => {
            let spec = loaded.plate_spec()?;
            let mut warnings = spec.validate()?;
            let problem = PlateProblem::new(&spec, &c.loss, c.plate.residual_mode, c.network.activation)
                .map_err(|e| loaded.config_error("plate", "", e.to_string()))?;
            warnings.extend(problem.warnings().iter().cloned());
            Ok(Prepared { problem: Box::new(problem), warnings })
        }
    }
}

pub fn sample(loaded: &Loaded, prepared: &Prepared) -> Result<CollocationSet, Failure> {
    let c = &loaded.config.collocation;
    sample_collocation(prepared.problem.domain(), c.total, &c.fractions(), c.seed)
        .map_err(|e| Failure::Config(loaded.config_error("collocation", "", e.to_string())))
}

#[derive(Serialize)]
pub struct RunSummary {
    pub label: String,
    pub problem: ProblemKind,
    pub command: String,
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
    pub collocation_points: usize,
    pub parameter_count: usize,
    pub term_names: Vec<String>,
    pub epochs_recorded: usize,
    pub final_loss: LossReport,
    pub train_seconds: f64,
    pub checksum: String,
    pub field_errors: Vec<FieldError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_deflection: Option<f64>,
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> elastic_pinn::Result<()>) -> Result<(), Failure> {
    atomic_write(path, |w| f(w)).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(e.into()))?;
        writeln!(w)?;
        Ok(())
    })
}

pub struct Artifacts<'a> {
    pub dir: &'a Path,
}

impl Artifacts<'_> {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn points(&self, set: &CollocationSet) -> Result<(), Failure> {
        write_file(&self.path("points.csv"), |w| set.write_csv(w))
    }

    pub fn history(&self, report: &TrainReport) -> Result<(), Failure> {
        write_file(&self.path("loss_history.csv"), |w| report.write_history_csv(w))
    }

    pub fn grid(&self, grid: &GridEvaluation) -> Result<(), Failure> {
        write_file(&self.path("fields.csv"), |w| grid.write_fields_csv(w))?;
        write_file(&self.path("errors.csv"), |w| grid.write_errors_csv(w))
    }

    pub fn state(&self, state: &TrainState) -> Result<(), Failure> {
        save_state(state, self.path("checkpoint.ckpt")).map_err(Failure::from)
    }

    pub fn report(&self, summary: &RunSummary) -> Result<(), Failure> {
        write_json(&self.path("report.json"), summary)
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("cannot create {}: {e}", dir.display())))
}

/// Trains from `bundle`, saving the last finite state on a numeric abort.
fn train_with_abort_checkpoint(
    problem: &dyn Problem,
    bundle: FieldBundle,
    set: &CollocationSet,
    config: &TrainConfig,
    artifacts: &Artifacts,
) -> Result<(TrainReport, TrainState), Failure> {
    let points = set.tagged_points();
    let mut trainer = Trainer::new(problem, bundle, &points, config)?;
    if let Err(e) = trainer.run_until(config.epochs) {
        let saved = artifacts.state(trainer.state());
        let mut message = e.to_string();
        match saved {
            Ok(()) => message
                .push_str(&format!("; last finite state saved to {}", artifacts.path("checkpoint.ckpt").display())),
            Err(s) => message.push_str(&format!("; saving the last finite state failed: {s}")),
        }
        return Err(match e {
            Error::NonFinite { .. } => Failure::Numeric(message),
            _ => Failure::Other(message),
        });
    }
    trainer.finish().map_err(Failure::from)
}

fn grid_for(loaded: &Loaded, problem: &dyn Problem, bundle: &FieldBundle) -> Result<GridEvaluation, Failure> {
    evaluate_on_grid(
        FieldSource::Networks(bundle),
        problem.exact(),
        problem.domain(),
        problem.scaling(),
        loaded.config.eval.grid_resolution,
    )
    .map_err(Failure::from)
}

fn center_deflection(loaded: &Loaded, problem: &dyn Problem, bundle: &FieldBundle) -> Option<f64> {
    (loaded.config.problem == ProblemKind::Plate).then(|| {
        let d = problem.domain();
        let c = [(d.x_min + d.x_max) / 2.0, (d.y_min + d.y_max) / 2.0];
        predict(bundle, problem.scaling(), &[c])[0][0]
    })
}

#[allow(clippy::too_many_arguments)]
fn finish_run(
    loaded: &Loaded,
    prepared: &Prepared,
    command: &str,
    set: &CollocationSet,
    report: &TrainReport,
    state: &TrainState,
    artifacts: &Artifacts,
) -> Result<RunSummary, Failure> {
    let problem = prepared.problem.as_ref();
    let grid = grid_for(loaded, problem, &state.bundle)?;
    artifacts.points(set)?;
    artifacts.history(report)?;
    artifacts.grid(&grid)?;
    artifacts.state(state)?;
    let summary = RunSummary {
        label: loaded.config.label.clone(),
        problem: loaded.config.problem,
        command: command.to_string(),
        config: loaded.config.clone(),
        warnings: prepared.warnings.clone(),
        collocation_points: set.total(),
        parameter_count: state.bundle.param_len(),
        term_names: report.term_names.clone(),
        epochs_recorded: report.history.len(),
        final_loss: report.final_report.clone(),
        train_seconds: report.train_seconds,
        checksum: format!("{:016x}", report.checksum),
        field_errors: grid.errors(),
        center_deflection: center_deflection(loaded, problem, &state.bundle),
    };
    artifacts.report(&summary)?;
    Ok(summary)
}

fn print_warnings(prepared: &Prepared) {
    for w in &prepared.warnings {
        eprintln!("warning: {w}");
    }
}

/// `run`: sample, initialize, train, evaluate, write artifacts.
pub fn run(loaded: &Loaded) -> Result<RunSummary, Failure> {
    let prepared = prepare(loaded)?;
    let set = sample(loaded, &prepared)?;
    let bundle = FieldBundle::uniform(prepared.problem.field_names(), &loaded.network_spec())?;
    print_warnings(&prepared);
    let dir = loaded.config.out_dir.clone();
    create_dir(&dir)?;
    let artifacts = Artifacts { dir: &dir };
    let (report, state) =
        train_with_abort_checkpoint(prepared.problem.as_ref(), bundle, &set, &loaded.config.train, &artifacts)?;
    finish_run(loaded, &prepared, "run", &set, &report, &state, &artifacts)
}

/// `warm-start`: continue pretrained weights on an enlarged point set with a fresh optimizer.
pub fn warm_start(loaded: &Loaded, checkpoint: &Path) -> Result<RunSummary, Failure> {
    let prepared = prepare(loaded)?;
    let base = sample(loaded, &prepared)?;
    let ws = &loaded.config.warm_start;
    let set = extend_collocation(&base, ws.total, ws.seed)
        .map_err(|e| Failure::Config(loaded.config_error("warm_start", "total", e.to_string())))?;
    let mut config = loaded.config.train.clone();
    config.epochs = ws.epochs;
    config.validate(set.total()).map_err(|e| loaded.config_error("train", "batch_size", e.to_string()))?;
    let bundle = load_checkpoint(checkpoint)?;
    let expected = loaded.network_spec();
    if bundle.names() != prepared.problem.field_names()
        || bundle.nets().iter().any(|n| {
            let s = n.spec();
            (s.hidden_width, s.hidden_layers, s.activation)
                != (expected.hidden_width, expected.hidden_layers, expected.activation)
        })
    {
        return Err(Failure::Other(format!(
            "checkpoint {} does not match the configured {} network ({}x{} {})",
            checkpoint.display(),
            loaded.config.problem,
            expected.hidden_width,
            expected.hidden_layers,
            expected.activation
        )));
    }
    print_warnings(&prepared);
    let dir = loaded.config.out_dir.clone();
    create_dir(&dir)?;
    let artifacts = Artifacts { dir: &dir };
    let (report, state) = train_with_abort_checkpoint(prepared.problem.as_ref(), bundle, &set, &config, &artifacts)?;
    finish_run(loaded, &prepared, "warm-start", &set, &report, &state, &artifacts)
}

/// `eval`: grid export of a saved model.
pub fn eval(loaded: &Loaded, checkpoint: &Path) -> Result<Vec<FieldError>, Failure> {
    let prepared = prepare(loaded)?;
    let bundle = load_checkpoint(checkpoint)?;
    if bundle.names() != prepared.problem.field_names() {
        return Err(Failure::Other(format!(
            "checkpoint fields {:?} do not match the {} benchmark",
            bundle.names(),
            loaded.config.problem
        )));
    }
    let grid = grid_for(loaded, prepared.problem.as_ref(), &bundle)?;
    let dir = loaded.config.out_dir.clone();
    create_dir(&dir)?;
    Artifacts { dir: &dir }.grid(&grid)?;
    Ok(grid.errors())
}
