//! Minibatch Adam training over a [`Problem`] loss.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{ExecConfig, ExecMode};
use crate::loss::{check_regions, evaluate, loss_and_gradient, FieldSource, LossReport, Problem, TaggedPoint};
use crate::network::{FieldBundle, NetworkSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub deterministic_reduction: bool,
    pub exec_mode: ExecMode,
    pub chunk_size: usize,
    /// Full-set loss is recorded at the start of every `eval_every`-th epoch (always at epoch 0).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            deterministic_reduction: true,
            exec_mode: ExecMode::Parallel,
            chunk_size: 64,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n_points {
            return Err(Error::config(format!(
                "batch_size must be in 1..={n_points} (collocation count), got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("adam betas must lie in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config("adam epsilon must be positive"));
        }
        if self.chunk_size == 0 {
            return Err(Error::config("chunk_size must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be positive"));
        }
        Ok(())
    }

    pub fn exec(&self) -> ExecConfig {
        ExecConfig { mode: self.exec_mode, deterministic: self.deterministic_reduction, chunk_size: self.chunk_size }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// Bias-corrected Adam update in place. Parameters are untouched when the gradient is not finite.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "adam: {n} parameters, {} gradients, {}/{} moments",
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { epoch: 0, detail: format!("gradient component {k} is {}", grads[k]) });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// Everything needed to continue a run bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub bundle: FieldBundle,
    pub adam: AdamState,
    /// Number of completed epochs.
    pub epoch: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub term_names: Vec<String>,
    /// Full-set loss at the start of each recorded epoch.
    pub history: Vec<LossReport>,
    /// Full-set loss after the last epoch.
    pub final_report: LossReport,
    pub train_seconds: f64,
    pub checksum: u64,
    pub config: TrainConfig,
}

impl TrainReport {
    /// One row per history entry plus the final report: `epoch,<terms...>,total`.
    pub fn write_history_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["epoch".to_string()];
        header.extend(self.term_names.iter().cloned());
        header.push("total".into());
        w.write_record(&header).map_err(crate::collocation::csv_err)?;
        for r in self.history.iter().chain(std::iter::once(&self.final_report)) {
            let mut row = vec![r.epoch.to_string()];
            row.extend(r.terms.iter().map(|t| format!("{t:e}")));
            row.push(format!("{:e}", r.total));
            w.write_record(&row).map_err(crate::collocation::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Epoch-by-epoch driver; [`train`] and [`warm_start`] wrap it.
pub struct Trainer<'a, P: Problem + ?Sized> {
    problem: &'a P,
    points: Vec<TaggedPoint>,
    config: TrainConfig,
    state: TrainState,
    history: Vec<LossReport>,
    seconds: f64,
}

impl<'a, P: Problem + ?Sized> Trainer<'a, P> {
    pub fn new(problem: &'a P, bundle: FieldBundle, points: &[TaggedPoint], config: &TrainConfig) -> Result<Self> {
        let n = bundle.param_len();
        Self::resume(problem, TrainState { bundle, adam: AdamState::new(n), epoch: 0 }, points, config)
    }

    /// Continues from a saved state; the shuffle of epoch `e` depends only on `(seed, e)`.
    pub fn resume(problem: &'a P, state: TrainState, points: &[TaggedPoint], config: &TrainConfig) -> Result<Self> {
        config.validate(points.len())?;
        check_regions(problem, points)?;
        if state.bundle.names() != problem.field_names() {
            return Err(Error::ShapeMismatch(format!(
                "bundle fields {:?} do not match problem fields {:?}",
                state.bundle.names(),
                problem.field_names()
            )));
        }
        if state.adam.m.len() != state.bundle.param_len() {
            return Err(Error::ShapeMismatch("optimizer state does not match the parameter count".into()));
        }
        Ok(Trainer {
            problem,
            points: points.to_vec(),
            config: config.clone(),
            state,
            history: Vec::new(),
            seconds: 0.0,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn history(&self) -> &[LossReport] {
        &self.history
    }

    pub fn evaluate(&self) -> Result<LossReport> {
        let r = evaluate(
            self.problem,
            FieldSource::Networks(&self.state.bundle),
            &self.points,
            &self.config.exec(),
            self.state.epoch,
        )?;
        if !r.is_finite() {
            return Err(self.non_finite("full-set loss", &r));
        }
        Ok(r)
    }

    fn non_finite(&self, what: &str, r: &LossReport) -> Error {
        let terms: Vec<String> =
            self.problem.term_names().iter().zip(&r.terms).map(|(n, t)| format!("{n}={t:e}")).collect();
        Error::NonFinite {
            epoch: self.state.epoch,
            detail: format!("{what}: total={:e} [{}]", r.total, terms.join(", ")),
        }
    }

    /// Records the full-set loss when due, then runs one shuffled pass of minibatch steps.
    /// On error the bundle keeps its last finite parameters.
    pub fn run_epoch(&mut self) -> Result<()> {
        let start = Instant::now();
        if self.state.epoch.is_multiple_of(self.config.eval_every) {
            let report = self.evaluate()?;
            self.history.push(report);
        }

        let mut order: Vec<usize> = (0..self.points.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.state.epoch as u64);
        order.shuffle(&mut rng);

        let exec = self.config.exec();
        let mut params = self.state.bundle.flat_params();
        let mut batch = Vec::with_capacity(self.config.batch_size);
        for idx in order.chunks(self.config.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| self.points[i]));
            let (r, g) = loss_and_gradient(self.problem, &self.state.bundle, &batch, &exec)?;
            if !r.is_finite() {
                return Err(self.non_finite("minibatch loss", &r));
            }
            let c = &self.config;
            adam_step(&mut params, &g, &mut self.state.adam, c.learning_rate, c.beta1, c.beta2, c.epsilon).map_err(
                |e| match e {
                    Error::NonFinite { detail, .. } => self.non_finite(&detail, &r),
                    e => e,
                },
            )?;
            self.state.bundle.set_flat_params(&params)?;
        }
        self.state.epoch += 1;
        self.seconds += start.elapsed().as_secs_f64();
        Ok(())
    }

    /// Runs epochs until `epoch` have completed in total.
    pub fn run_until(&mut self, epoch: usize) -> Result<()> {
        while self.state.epoch < epoch {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(TrainReport, TrainState)> {
        let final_report = self.evaluate()?;
        let report = TrainReport {
            term_names: self.problem.term_names().iter().map(|s| s.to_string()).collect(),
            history: self.history,
            final_report,
            train_seconds: self.seconds.max(f64::MIN_POSITIVE),
            checksum: self.state.bundle.checksum(),
            config: self.config,
        };
        Ok((report, self.state))
    }
}

/// Trains `bundle` in place for `config.epochs` epochs.
/// On a numeric abort `bundle` holds the last finite parameters.
pub fn train<P: Problem + ?Sized>(
    problem: &P,
    bundle: &mut FieldBundle,
    points: &[TaggedPoint],
    config: &TrainConfig,
) -> Result<TrainReport> {
    let mut trainer = Trainer::new(problem, bundle.clone(), points, config)?;
    let outcome = trainer.run_until(config.epochs);
    *bundle = trainer.state().bundle.clone();
    outcome?;
    let (report, state) = trainer.finish()?;
    *bundle = state.bundle;
    Ok(report)
}

/// Continues training pretrained weights with a fresh optimizer on a new point set.
pub fn warm_start<P: Problem + ?Sized>(
    problem: &P,
    pretrained: &FieldBundle,
    expected: &NetworkSpec,
    points: &[TaggedPoint],
    config: &TrainConfig,
) -> Result<(TrainReport, FieldBundle)> {
    for (name, net) in pretrained.names().iter().zip(pretrained.nets()) {
        let s = net.spec();
        if s.hidden_width != expected.hidden_width
            || s.hidden_layers != expected.hidden_layers
            || s.activation != expected.activation
        {
            return Err(Error::ShapeMismatch(format!(
                "pretrained network '{name}' is {}x{} {}, expected {}x{} {}",
                s.hidden_width,
                s.hidden_layers,
                s.activation,
                expected.hidden_width,
                expected.hidden_layers,
                expected.activation
            )));
        }
    }
    let mut bundle = pretrained.clone();
    let report = train(problem, &mut bundle, points, config)?;
    Ok((report, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::beam::{BeamSpec, BEAM_FIELDS};
    use crate::collocation::{sample_collocation, Fractions};
    use crate::loss::{BeamProblem, LossWeights};

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut p = vec![0.5];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        // m̂ = v̂ = 1 at t = 1, so the step is lr / (1 + eps).
        let expect = 1e-3 / (1.0 + 1e-8);
        assert!((0.5 - p[0] - expect).abs() < 1e-15);
        assert!((expect - 9.99999e-4).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState { m: vec![0.5, 0.5], v: vec![0.25, 0.25], step: 3 };
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.0, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.m, vec![0.45, 0.45]);
        assert!(s.v[0] < 0.25);
    }

    #[test]
    fn non_finite_gradient_leaves_params() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        let err = adam_step(&mut p, &[f64::NAN], &mut s, 1e-3, 0.9, 0.999, 1e-8).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(p, vec![1.0]);
        assert_eq!(s.step, 0);
    }

    fn setup() -> (BeamProblem, FieldBundle, Vec<TaggedPoint>) {
        let spec = BeamSpec::default();
        let problem = BeamProblem::new(&spec, &LossWeights::default()).unwrap();
        let bundle = FieldBundle::uniform(&BEAM_FIELDS, &NetworkSpec::new(4, 1, ActivationKind::Tanh, 3)).unwrap();
        let pts = sample_collocation(&spec.domain(), 64, &Fractions::default(), 1).unwrap().tagged_points();
        (problem, bundle, pts)
    }

    #[test]
    fn history_starts_with_untrained_loss() {
        let (problem, mut bundle, pts) = setup();
        let before = evaluate(&problem, FieldSource::Networks(&bundle), &pts, &ExecConfig::default(), 0).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 16, ..Default::default() };
        let report = train(&problem, &mut bundle, &pts, &cfg).unwrap();
        assert_eq!(report.history.len(), 3);
        assert_eq!(report.history[0], before);
        assert!(report.final_report.total < before.total);
        assert_eq!(report.checksum, bundle.checksum());
    }

    #[test]
    fn resume_reproduces_trace() {
        let (problem, bundle, pts) = setup();
        let cfg = TrainConfig { epochs: 4, batch_size: 20, ..Default::default() };
        let mut full = Trainer::new(&problem, bundle.clone(), &pts, &cfg).unwrap();
        full.run_until(4).unwrap();
        let (full, _) = full.finish().unwrap();

        let mut first = Trainer::new(&problem, bundle, &pts, &cfg).unwrap();
        first.run_until(2).unwrap();
        let mut second = Trainer::resume(&problem, first.state().clone(), &pts, &cfg).unwrap();
        second.run_until(4).unwrap();
        let (tail, _) = second.finish().unwrap();
        assert_eq!(&full.history[2..], &tail.history[..]);
        assert_eq!(full.final_report, tail.final_report);
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let (problem, mut bundle, pts) = setup();
        let cfg = TrainConfig { batch_size: 65, ..Default::default() };
        assert!(matches!(train(&problem, &mut bundle, &pts, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_aborts_with_finite_parameters() {
        let (problem, mut bundle, pts) = setup();
        let cfg = TrainConfig { epochs: 2, batch_size: 16, learning_rate: 1e300, ..Default::default() };
        let out = train(&problem, &mut bundle, &pts, &cfg);
        assert!(matches!(out, Err(Error::NonFinite { .. })), "{out:?}");
        assert!(bundle.flat_params().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn warm_start_rejects_other_architecture() {
        let (problem, bundle, pts) = setup();
        let cfg = TrainConfig { epochs: 1, batch_size: 16, ..Default::default() };
        let other = NetworkSpec::new(5, 1, ActivationKind::Tanh, 0);
        assert!(warm_start(&problem, &bundle, &other, &pts, &cfg).is_err());
    }
}
