//! End-to-end acceptance checks. Runs as a plain binary so every criterion prints one line.
//!
//! Criteria 3 to 6 train at full size and take roughly an hour on one core.
//! Set `ACCEPTANCE_ONLY=1,2,7` to run a subset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use elastic_pinn::beam::{BeamSpec, BEAM_FIELDS};
use elastic_pinn::checkpoint::{load_checkpoint, load_state, save_checkpoint, save_state};
use elastic_pinn::collocation::{extend_collocation, sample_collocation, CollocationSet, Fractions, Region};
use elastic_pinn::eval::{evaluate_on_grid, predict};
use elastic_pinn::exec::ExecConfig;
use elastic_pinn::loss::{
    evaluate, loss_and_gradient, BeamProblem, FieldSource, LossWeights, PlateMode, PlateProblem, Problem, TaggedPoint,
};
use elastic_pinn::oracle::ExactFields;
use elastic_pinn::plate::{flexural_rigidity, sinusoidal_load, PlateSpec, PLATE_FIELDS};
use elastic_pinn::trainer::{train, warm_start, TrainConfig, TrainReport, Trainer};
use elastic_pinn::{ActivationKind, DenseNetwork, FieldBundle, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CENTER_DEFLECTION: f64 = 4.299e-3;
const QUOTED_RIGIDITY: f64 = 17957.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, minutes: f64) -> bool {
    elapsed.as_secs_f64() <= minutes * 60.0
}

/// Relative error with a floor at `1e-3` of the largest partial of the same order.
fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Fourth-order central difference of `f` along `axis`.
fn central(f: &dyn Fn([f64; 2]) -> f64, p: [f64; 2], axis: usize, h: f64) -> f64 {
    let at = |d: f64| {
        let mut q = p;
        q[axis] += d;
        f(q)
    };
    (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

fn derivative_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_low, mut worst_high) = (0.0f64, 0.0f64);
    for n in 0..20 {
        let width = rng.gen_range(2..=40);
        let layers = rng.gen_range(1..=10);
        let net = DenseNetwork::new(&NetworkSpec::new(width, layers, ActivationKind::Tanh, 100 + n)).unwrap();
        let net = &net;
        for _ in 0..3 {
            let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let jet = &net.jets(&[p], 4)[0];
            let partial_at = |i: usize, j: usize| move |q: [f64; 2]| net.jets(&[q], 4)[0].partial(i, j);
            for order in 1..=4 {
                let floor = 1e-3 * (0..=order).map(|j| jet.partial(order - j, j).abs()).fold(0.0, f64::max);
                let h = if order <= 2 { 1e-4 } else { 1e-3 };
                for j in 0..=order {
                    let i = order - j;
                    // Differentiate the lower-order jet partial once along an axis it can absorb.
                    let (base, axis) = if i > 0 { ((i - 1, j), 0) } else { ((i, j - 1), 1) };
                    let f = partial_at(base.0, base.1);
                    let fd = central(&f, p, axis, h);
                    let e = rel(jet.partial(i, j), fd, floor);
                    if order <= 2 {
                        worst_low = worst_low.max(e);
                    } else {
                        worst_high = worst_high.max(e);
                    }
                }
            }
        }
    }

    let spec = BeamSpec::default();
    let problem = BeamProblem::new(&spec, &LossWeights::default()).unwrap();
    let bundle = FieldBundle::uniform(&BEAM_FIELDS, &NetworkSpec::new(8, 2, ActivationKind::Tanh, 3)).unwrap();
    let pts = sample_collocation(&spec.domain(), 10, &Fractions::default(), 5).unwrap().tagged_points();
    let exec = ExecConfig::sequential();
    let (_, grad) = loss_and_gradient(&problem, &bundle, &pts, &exec).unwrap();
    let theta = bundle.flat_params();
    let mut probe = bundle.clone();
    let mut total_at = |k: usize, d: f64| {
        let mut t = theta.clone();
        t[k] += d;
        probe.set_flat_params(&t).unwrap();
        evaluate(&problem, FieldSource::Networks(&probe), &pts, &exec, 0).unwrap().total
    };
    let gfloor = 1e-3 * grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut worst_grad = 0.0f64;
    for (k, &g) in grad.iter().enumerate() {
        let h = 1e-4;
        let fd =
            (8.0 * (total_at(k, h) - total_at(k, -h)) - (total_at(k, 2.0 * h) - total_at(k, -2.0 * h))) / (12.0 * h);
        worst_grad = worst_grad.max(rel(g, fd, gfloor));
    }
    outcome(
        worst_low <= 1e-6 && worst_high <= 1e-4 && worst_grad <= 1e-5,
        format!("orders<=2 {worst_low:.2e} (<=1e-6), orders 3-4 {worst_high:.2e} (<=1e-4), loss gradient {worst_grad:.2e} (<=1e-5)"),
    )
}

fn oracle_identities() -> Outcome {
    let spec = BeamSpec::default();
    let weights = LossWeights { beta_u: 0.0, beta_t: 0.0, alpha: [0.0; 3], ..Default::default() };
    let problem = BeamProblem::new(&spec, &weights).unwrap();
    let set = sample_collocation(&spec.domain(), 1250, &Fractions::default(), 77).unwrap();
    let exec = ExecConfig::sequential();
    let mut worst_airy = 0.0f64;
    for p in set.interior().iter().take(1000) {
        let r = evaluate(&problem, FieldSource::Exact(&spec), &[(Region::Interior, *p)], &exec, 0).unwrap();
        worst_airy = r.terms[..3].iter().fold(worst_airy, |m, t| m.max(t.sqrt()));
    }

    let plate = PlateSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let mut worst_navier = 0.0f64;
    for _ in 0..1000 {
        let (x, y) = (rng.gen_range(0.0..plate.a), rng.gen_range(0.0..plate.b));
        let w = &plate.jets([x, y], 4)[0];
        let r = (plate.rigidity * w.biharmonic() - sinusoidal_load(&plate, x, y)).abs() / plate.q0;
        worst_navier = worst_navier.max(r);
    }
    let d = flexural_rigidity(plate.material.e, plate.thickness, plate.material.nu);
    let d_err = (d - QUOTED_RIGIDITY).abs() / QUOTED_RIGIDITY;
    outcome(
        worst_airy <= 1e-10 && worst_navier <= 1e-8 && d_err <= 1e-3,
        format!("airy residual {worst_airy:.2e} (<=1e-10), navier {worst_navier:.2e}·q0 (<=1e-8), D={d:.1} err {d_err:.2e} (<=1e-3)"),
    )
}

fn beam_run(activation: ActivationKind, seed: u64) -> (TrainReport, FieldBundle, BeamSpec) {
    let spec = BeamSpec::default();
    let problem = BeamProblem::new(&spec, &LossWeights::default()).unwrap();
    let mut bundle = FieldBundle::uniform(&BEAM_FIELDS, &NetworkSpec::new(20, 5, activation, seed)).unwrap();
    let pts = sample_collocation(&spec.domain(), 5000, &Fractions::default(), seed).unwrap().tagged_points();
    let config =
        TrainConfig { epochs: 500, batch_size: 32, learning_rate: 1e-3, seed, eval_every: 25, ..Default::default() };
    let report = train(&problem, &mut bundle, &pts, &config).unwrap();
    (report, bundle, spec)
}

fn beam_convergence() -> (Outcome, f64) {
    let start = Instant::now();
    let (report, bundle, spec) = beam_run(ActivationKind::Tanh, 1);
    let elapsed = start.elapsed();
    let problem = BeamProblem::new(&spec, &LossWeights::default()).unwrap();
    let grid = evaluate_on_grid(FieldSource::Networks(&bundle), &spec, &spec.domain(), problem.scaling(), 100).unwrap();
    let (worst_field, worst_l2) = grid
        .errors()
        .into_iter()
        .map(|e| (e.field, e.relative_l2))
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let total = report.final_report.total;
    (
        outcome(
            total <= 1e-4 && worst_l2 <= 0.02 && within(elapsed, 30.0),
            format!(
                "final loss {total:.3e} (<=1e-4), worst rel L2 {worst_l2:.4} on {worst_field} (<=0.02), {:.1} min (<=30)",
                elapsed.as_secs_f64() / 60.0
            ),
        ),
        total,
    )
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

fn activation_ordering(tanh_seed1: f64) -> Outcome {
    let tanh = [
        tanh_seed1,
        beam_run(ActivationKind::Tanh, 2).0.final_report.total,
        beam_run(ActivationKind::Tanh, 3).0.final_report.total,
    ];
    let sigmoid = [1, 2, 3].map(|s| beam_run(ActivationKind::Sigmoid, s).0.final_report.total);
    let (mt, ms) = (median3(tanh), median3(sigmoid));
    outcome(mt < ms, format!("median final loss tanh {mt:.3e} < sigmoid {ms:.3e}"))
}

fn plate_points(total: usize, seed: u64) -> CollocationSet {
    sample_collocation(&PlateSpec::default().domain(), total, &Fractions::default(), seed).unwrap()
}

fn plate_problem(activation: ActivationKind) -> PlateProblem {
    PlateProblem::new(&PlateSpec::default(), &LossWeights::default(), PlateMode::Auto, activation).unwrap()
}

fn plate_config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 50, learning_rate: 1e-3, seed: 11, eval_every: 50, ..Default::default() }
}

fn plate_train(width: usize, layers: usize, set: &CollocationSet) -> (TrainReport, FieldBundle) {
    let problem = plate_problem(ActivationKind::Tanh);
    let mut bundle =
        FieldBundle::uniform(&PLATE_FIELDS, &NetworkSpec::new(width, layers, ActivationKind::Tanh, 11)).unwrap();
    let report = train(&problem, &mut bundle, &set.tagged_points(), &plate_config(1000)).unwrap();
    (report, bundle)
}

fn plate_convergence(set: &CollocationSet) -> (Outcome, Option<(TrainReport, FieldBundle)>) {
    let start = Instant::now();
    let (n4, bundle) = plate_train(40, 10, set);
    let (n1, _) = plate_train(20, 5, set);
    let elapsed = start.elapsed();
    let spec = PlateSpec::default();
    let problem = plate_problem(ActivationKind::Tanh);
    let center = predict(&bundle, problem.scaling(), &[[spec.a / 2.0, spec.b / 2.0]])[0][0];
    let center_err = (center - CENTER_DEFLECTION).abs() / CENTER_DEFLECTION;
    let grid = evaluate_on_grid(FieldSource::Networks(&bundle), &spec, &spec.domain(), problem.scaling(), 100).unwrap();
    let w_l2 = grid.errors()[0].relative_l2;
    let (l4, l1) = (n4.final_report.total, n1.final_report.total);
    let pass = center_err <= 0.02 && w_l2 <= 0.05 && l4 < l1 && within(elapsed, 60.0);
    (
        outcome(
            pass,
            format!(
                "center w {center:.4e} err {center_err:.4} (<=0.02), w rel L2 {w_l2:.4} (<=0.05), loss 40x10 {l4:.3e} < 20x5 {l1:.3e}, {:.1} min (<=60)",
                elapsed.as_secs_f64() / 60.0
            ),
        ),
        Some((n4, bundle)),
    )
}

fn warm_start_check(pretrained: Option<(TrainReport, FieldBundle)>, base: &CollocationSet) -> Outcome {
    let (pre_report, pre_bundle) = match pretrained {
        Some(p) => p,
        None => plate_train(40, 10, base),
    };
    let start = Instant::now();
    let problem = plate_problem(ActivationKind::Tanh);
    let enlarged = extend_collocation(base, 15_000, 12).unwrap().tagged_points();
    let expected = NetworkSpec::new(40, 10, ActivationKind::Tanh, 11);
    let (report, _) = warm_start(&problem, &pre_bundle, &expected, &enlarged, &plate_config(250)).unwrap();
    let elapsed = start.elapsed();
    let on_new = evaluate(&problem, FieldSource::Networks(&pre_bundle), &enlarged, &ExecConfig::default(), 0).unwrap();
    let epoch0 = report.history[0].total;
    let (pre, post) = (pre_report.final_report.total, report.final_report.total);
    outcome(
        post < pre && epoch0.to_bits() == on_new.total.to_bits() && within(elapsed, 20.0),
        format!(
            "warm final {post:.3e} < pretrained {pre:.3e}, epoch-0 {epoch0:.6e} == pretrained on new set {:.6e}, {:.1} min (<=20)",
            on_new.total,
            elapsed.as_secs_f64() / 60.0
        ),
    )
}

fn determinism_and_persistence() -> Outcome {
    let spec = BeamSpec::default();
    let problem = BeamProblem::new(&spec, &LossWeights::default()).unwrap();
    let pts: Vec<TaggedPoint> =
        sample_collocation(&spec.domain(), 400, &Fractions::default(), 3).unwrap().tagged_points();
    let config = TrainConfig { epochs: 6, batch_size: 32, seed: 5, ..Default::default() };
    let init = FieldBundle::uniform(&BEAM_FIELDS, &NetworkSpec::new(8, 2, ActivationKind::Tanh, 4)).unwrap();
    let trace = |r: &TrainReport| -> Vec<u64> {
        r.history
            .iter()
            .chain([&r.final_report])
            .flat_map(|l| l.terms.iter().chain([&l.total]).map(|v| v.to_bits()))
            .collect()
    };

    let run = || {
        let mut t = Trainer::new(&problem, init.clone(), &pts, &config).unwrap();
        t.run_until(config.epochs).unwrap();
        t.finish().unwrap()
    };
    let (a, a_state) = run();
    let (b, _) = run();
    let repeat = trace(&a) == trace(&b);

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(&problem, init.clone(), &pts, &config).unwrap();
    first.run_until(3).unwrap();
    save_state(first.state(), dir.path().join("state.ckpt")).unwrap();
    let restored = load_state(dir.path().join("state.ckpt")).unwrap();
    let state_exact = &restored == first.state();
    let mut second = Trainer::resume(&problem, restored, &pts, &config).unwrap();
    second.run_until(config.epochs).unwrap();
    let (resumed, _) = second.finish().unwrap();
    let tail = TrainReport { history: a.history[3..].to_vec(), ..a.clone() };
    let resume_exact = trace(&resumed) == trace(&tail);

    save_checkpoint(&a_state.bundle, dir.path().join("weights.ckpt")).unwrap();
    let loaded = load_checkpoint(dir.path().join("weights.ckpt")).unwrap();
    let weights_exact =
        loaded.flat_params().iter().map(|v| v.to_bits()).eq(a_state.bundle.flat_params().iter().map(|v| v.to_bits()));

    outcome(
        repeat && state_exact && resume_exact && weights_exact,
        format!("repeat run {repeat}, state round-trip {state_exact}, resume trace {resume_exact}, weights round-trip {weights_exact}"),
    )
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--nocapture`; a filter argument selects nothing here.
    if std::env::args().skip(1).any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));

    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut timed = |n: u32, f: &mut dyn FnMut() -> Outcome| {
        if !want(n) {
            return;
        }
        let start = Instant::now();
        let o = f();
        let line = format!(
            "criterion {n}: {} [{:.1} s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        println!("{line}");
        results.push((n, o));
    };

    timed(1, &mut || {
        let start = Instant::now();
        let o = derivative_correctness();
        outcome(o.pass && within(start.elapsed(), 1.0), o.detail)
    });
    timed(2, &mut || {
        let start = Instant::now();
        let o = oracle_identities();
        outcome(o.pass && within(start.elapsed(), 1.0), o.detail)
    });
    let mut tanh_seed1 = None;
    timed(3, &mut || {
        let (o, total) = beam_convergence();
        tanh_seed1 = Some(total);
        o
    });
    timed(4, &mut || {
        let first = tanh_seed1.unwrap_or_else(|| beam_run(ActivationKind::Tanh, 1).0.final_report.total);
        activation_ordering(first)
    });
    let base = plate_points(10_000, 11);
    let mut pretrained = None;
    timed(5, &mut || {
        let (o, p) = plate_convergence(&base);
        pretrained = p;
        o
    });
    timed(6, &mut || warm_start_check(pretrained.take(), &base));
    timed(7, &mut determinism_and_persistence);

    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {} run, {} failed {:?}", results.len(), failed.len(), failed);
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
