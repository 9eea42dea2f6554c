//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use secest_core::benchmark::config::ExperimentConfig;
use secest_core::benchmark::montecarlo::{fused_errors, map_replications, replication_seeds, ErrorStats};
use secest_core::benchmark::output::write_trace;
use secest_core::benchmark::sim::{Experiment, SimulationTrace};
use secest_core::bounds::{compute_n, theorem2_bounds, theorem3_bound};
use secest_core::estimator::{estimate_l_bar, gap_grid, synthesize_gain, GainPolicy};
use secest_core::{CMatrix, CVector, SensorDecomposition, SystemModel, C64};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::from_path(&configs_dir().join(name)).expect("bundled config parses")
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn re(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// Random Jordan matrix with n ≤ 6, mixing real and complex eigenvalues and
/// blocks of size 1 to 3, plus a sparse random output matrix.
fn random_system(rng: &mut ChaCha8Rng) -> SystemModel {
    let n_target = rng.gen_range(1..=6usize);
    let mut eigs: Vec<(C64, usize)> = Vec::new();
    let mut n = 0;
    while n < n_target {
        let size = rng.gen_range(1..=3usize).min(n_target - n);
        let lambda = loop {
            let re_part = rng.gen_range(-2.0..0.5);
            let im_part = if rng.gen_bool(0.5) { rng.gen_range(-3.0..3.0) } else { 0.0 };
            let z = C64::new(re_part, im_part);
            if eigs.iter().all(|(w, _)| (w - z).norm() > 0.3) {
                break z;
            }
        };
        eigs.push((lambda, size));
        n += size;
    }
    let mut a = CMatrix::zeros(n, n);
    let mut start = 0;
    for &(lambda, size) in &eigs {
        for k in 0..size {
            a[(start + k, start + k)] = lambda;
            if k + 1 < size {
                a[(start + k, start + k + 1)] = re(1.0);
            }
        }
        start += size;
    }
    let m = rng.gen_range(1..=4usize);
    let c = CMatrix::from_fn(m, n, |_, _| if rng.gen_bool(0.4) { re(0.0) } else { re(rng.sample(StandardNormal)) });
    let q = CMatrix::identity(n, n) * re(0.01);
    SystemModel::new(a, c, q, 0.01, 1.0).expect("generated matrix is in Jordan form")
}

fn random_systems() -> Vec<SystemModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50).map(|_| random_system(&mut rng)).collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_h: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for model in random_systems() {
        let decomp = SensorDecomposition::build(&model);
        for _ in 0..100 {
            let dt = 1.0 - rng.gen_range(0.0..1.0);
            let lambda = model.state_transition(dt);
            for (i, sub) in decomp.sensors().iter().enumerate() {
                let a_red = sub.restrict(&lambda);
                worst_h = worst_h.max(max_abs(&(&sub.h * &lambda - &a_red * &sub.h)));
                let lhs = model.c_row(i) * &lambda;
                worst_c = worst_c.max(max_abs(&(lhs - &sub.c_tilde * &a_red * &sub.h)));
            }
        }
    }
    outcome(
        worst_h <= 1e-9 && worst_c <= 1e-9,
        format!("max ‖HΛ − ÃH‖ = {worst_h:.2e}, max ‖CΛ − C̃ÃH‖ = {worst_c:.2e} (tol 1e-9)"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for model in random_systems() {
        let n = model.n();
        for sub in SensorDecomposition::build(&model).sensors() {
            let p = sub.h.transpose() * &sub.h;
            let mut expected = CMatrix::zeros(n, n);
            for &j in &sub.qset {
                expected[(j, j)] = re(1.0);
            }
            worst = worst.max(max_abs(&(p - expected)));
            checked += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{checked} projections, max deviation {worst:.2e} (tol 1e-12)"))
}

fn criterion_3() -> Outcome {
    const RHO_BAR: f64 = 0.6;
    const T_MIN: f64 = 0.05;
    let policy = GainPolicy::default();
    let systems = random_systems();
    let mut prepared = Vec::new();
    for model in &systems {
        let decomp = SensorDecomposition::build(model);
        let grid = gap_grid(T_MIN, model.t_max(), 200);
        match estimate_l_bar(model, &decomp, RHO_BAR, policy, &grid) {
            Ok(l_bar) => prepared.push((model, decomp, l_bar)),
            Err(e) => return outcome(false, format!("l_bar estimation failed: {e}")),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_radius, mut worst_ratio) = (0.0f64, 0.0f64);
    let mut pairs = 0;
    while pairs < 1000 {
        let (model, decomp, l_bar) = &prepared[rng.gen_range(0..prepared.len())];
        let observing: Vec<usize> = (0..model.m()).filter(|&i| decomp.sensor(i).dim() > 0).collect();
        if observing.is_empty() {
            continue;
        }
        let sub = decomp.sensor(observing[rng.gen_range(0..observing.len())]);
        let gap = rng.gen_range(T_MIN..=model.t_max());
        let a_gap = sub.restrict(&model.state_transition(gap));
        let design = match synthesize_gain(&a_gap, &sub.c_tilde, RHO_BAR, policy) {
            Ok(d) => d,
            Err(e) => return outcome(false, format!("synthesis failed at gap {gap}: {e}")),
        };
        let k = sub.dim();
        let closed = (CMatrix::identity(k, k) - &design.gain * &sub.c_tilde) * &a_gap;
        let radius = closed.complex_eigenvalues_oracle();
        let norm_sq: f64 = design.gain.iter().map(|z| z.norm_sqr()).sum();
        worst_radius = worst_radius.max(radius);
        worst_ratio = worst_ratio.max(norm_sq / l_bar);
        pairs += 1;
    }
    outcome(
        worst_radius <= RHO_BAR + 1e-9 && worst_ratio <= 1.0,
        format!("1000 pairs, max ρ = {worst_radius:.6} (≤ {RHO_BAR} + 1e-9), max ‖L‖²/l̄ = {worst_ratio:.4} (≤ 1)"),
    )
}

/// Spectral radius from a complex Schur form computed here, independent of
/// the library's eigenvalue routine.
trait EigOracle {
    fn complex_eigenvalues_oracle(&self) -> f64;
}

impl EigOracle for CMatrix {
    fn complex_eigenvalues_oracle(&self) -> f64 {
        let schur = self.clone().schur();
        let (_, t) = schur.unpack();
        (0..t.nrows()).map(|i| t[(i, i)].norm()).fold(0.0, f64::max)
    }
}

fn three_state(c: &str, attack: &str, horizon: f64) -> ExperimentConfig {
    let text = format!(
        r#"{{
        "system": {{"kind": "jordan", "a": [[-1, 0, 0], [0, -0.2, 1], [0, 0, -0.2]], "c": {c}}},
        "sampling": {{"interval_min": 0.1, "interval_max": 0.5, "success_prob": 0.6, "t_max": 1.5}},
        "noise": {{"q_scale": 0.001, "r_scale": 0.01, "x0_mean": [1.0, 1.0, 1.0], "p0_scale": 0.1}},
        "estimator": {{"rho_bar": 0.6}},
        "attack": {attack},
        "buffer": {{"window": 0.2, "max_delay": 0.05}},
        "run": {{"horizon": {horizon}, "seed": 0, "record_locals": true}}
    }}"#
    );
    ExperimentConfig::from_json_str(&text).expect("criterion config parses")
}

fn local_errors(exp: &Experiment, trace: &SimulationTrace, sensor: usize, stamps: usize) -> Vec<CVector> {
    let sub = exp.decomposition.sensor(sensor);
    trace.records.iter().take(stamps).map(|r| &r.locals[sensor] - sub.project(&r.truth)).collect()
}

fn criterion_4() -> Outcome {
    const M: usize = 2000;
    const STAMPS: usize = 201;
    let exp = Experiment::prepare(three_state("[[1, 0, 0], [0, 1, 0]]", "{}", 110.0)).expect("prepare");
    let seeds = replication_seeds(40_000, M);
    let per_run = map_replications(&exp, &seeds, None, |t| {
        (local_errors(&exp, &t, 0, STAMPS), local_errors(&exp, &t, 1, STAMPS))
    })
    .expect("replications run");
    let (s1, s2): (Vec<_>, Vec<_>) = per_run.into_iter().unzip();
    let mut worst_mean: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    let mut short = false;
    for samples in [s1, s2] {
        let stats = ErrorStats::from_samples(&samples).expect("stats");
        short |= stats.len() < STAMPS;
        for k in (0..stats.len()).step_by(10) {
            for (j, z) in stats.mean[k].iter().enumerate() {
                let se = stats.variance[k][j].sqrt() / (M as f64).sqrt();
                worst_mean = worst_mean.max(z.norm() / (4.0 * se));
            }
            worst_cov = worst_cov.max(stats.cov_radius[k] / (1.05 * theorem3_bound(k, &exp.constants)));
        }
    }
    outcome(
        !short && worst_mean <= 1.0 && worst_cov <= 1.0,
        format!(
            "M = {M}, 200 stamps: max |mean|/(4σ̂/√M) = {worst_mean:.3}, max ρ(cov)/(1.05·bound) = {worst_cov:.2e} (both ≤ 1)"
        ),
    )
}

const REDUNDANT_C: &str = "[[1, 1, 0], [1, 0.5, 0.5], [0.5, 1, 1]]";
const CYCLING_ATTACK: &str = r#"{"p": 1, "sensors": {"3": {"mode": "mixed", "modes": [
    {"mode": "inject", "offset": 2.0, "spread": 1.0},
    {"mode": "timeshift", "max_shift": 0.2},
    {"mode": "dos", "drop_prob": 0.5},
    {"mode": "fabricate", "rate": 0.5, "value_min": -3.0, "value_max": 3.0, "stamp_spread": 0.2}]}}}"#;

fn criteria_5_and_6() -> (Outcome, Outcome) {
    const M: usize = 1000;
    const STAMPS: usize = 201;
    let mut cfg = three_state(REDUNDANT_C, CYCLING_ATTACK, 110.0);
    cfg.run.record_locals = false;
    cfg.run.check_sparsity = Some(2);
    let exp = Experiment::prepare(cfg).expect("prepare");
    let seeds = replication_seeds(50_000, M);
    let per_run = map_replications(&exp, &seeds, None, |t| {
        let errs: Vec<CVector> = fused_errors(&t).into_iter().take(STAMPS).collect();
        let tampered: usize = t.records.iter().map(|r| r.tampered.len()).sum();
        (errs, t.sandwich_violations(), tampered)
    })
    .expect("replications run");
    let violations: usize = per_run.iter().map(|r| r.1).sum();
    let tampered: usize = per_run.iter().map(|r| r.2).sum();
    let samples: Vec<Vec<CVector>> = per_run.into_iter().map(|r| r.0).collect();
    let stats = ErrorStats::from_samples(&samples).expect("stats");
    let (mut worst_e, mut worst_c) = (0.0f64, 0.0f64);
    for k in (0..stats.len()).step_by(10) {
        let (be, bc) = theorem2_bounds(k, &exp.constants);
        worst_e = worst_e.max(stats.mean_inf(k) / be);
        worst_c = worst_c.max(stats.cov_radius[k] / bc);
    }
    let c5 = outcome(
        stats.len() >= STAMPS && worst_e <= 1.0 && worst_c <= 1.0,
        format!("M = {M}, p = 1: max ‖mean‖∞/bound_e = {worst_e:.2e}, max ρ(cov)/bound_cov = {worst_c:.2e} (both ≤ 1)"),
    );
    let c6 = outcome(
        violations == 0 && tampered > 0,
        format!("{violations} sandwich violations over {M} attacked runs ({tampered} tampered triples consumed)"),
    );
    (c5, c6)
}

fn criterion_7() -> Outcome {
    let n11 = compute_n(1, 1);
    let n12 = compute_n(1, 2);
    let exact = (n11 - 0.3989423).abs() <= 1e-6 && (n12 - 0.5).abs() <= 1e-6;
    const DRAWS: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..20 {
        let m = rng.gen_range(2..=10usize);
        let sigmas: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..2.0)).collect();
        let s_max = sigmas.iter().cloned().fold(0.0, f64::max);
        let (n1, n2) = (compute_n(m as u32, 1), compute_n(m as u32, 2));
        // Running sums of max, max², min, min² and their squares.
        let mut acc = [0.0f64; 8];
        for _ in 0..DRAWS {
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for &s in &sigmas {
                let x = s * rng.sample::<f64, _>(StandardNormal);
                hi = hi.max(x);
                lo = lo.min(x);
            }
            for (i, v) in [hi, hi * hi, lo, lo * lo].into_iter().enumerate() {
                acc[2 * i] += v;
                acc[2 * i + 1] += v * v;
            }
        }
        let d = DRAWS as f64;
        let est = |i: usize| {
            let mean = acc[2 * i] / d;
            let se = ((acc[2 * i + 1] / d - mean * mean).max(0.0) / d).sqrt();
            (mean, se)
        };
        let (e_max, se_max) = est(0);
        let (e_max2, se_max2) = est(1);
        let (e_min, se_min) = est(2);
        let (e_min2, se_min2) = est(3);
        // Positive margin means a bound is exceeded beyond the slack.
        let margins = [
            e_max - 3.0 * se_max - s_max * n1,
            -s_max * n1 - (e_min + 3.0 * se_min),
            e_max2 - 3.0 * se_max2 - s_max * s_max * n2,
            e_min2 - 3.0 * se_min2 - s_max * s_max * n2,
        ];
        worst = margins.iter().cloned().fold(worst, f64::max);
    }
    outcome(
        exact && worst <= 0.0,
        format!("N(1,1) = {n11:.9}, N(1,2) = {n12:.9}; 20 σ-vectors × 1e6 draws, worst margin {worst:.4} (≤ 0)"),
    )
}

fn criterion_8() -> Outcome {
    let exp = Experiment::prepare(load("rotation_pathological.json")).expect("prepare");
    let trace = exp.run(1).expect("run");
    let c = trace.counters;
    let pi = std::f64::consts::PI;
    let bad: Vec<f64> = (1..=3).map(|k| k as f64 * pi).collect();
    let ingested = trace.records.iter().any(|r| bad.iter().any(|b| (r.t - b).abs() < 1e-9));
    let stamps: Vec<f64> = trace.records.iter().skip(1).map(|r| r.t).collect();
    outcome(
        c.pathological_batches == 3 && c.pathological == 6 && !ingested && c.consumed == 8 && c.balanced(),
        format!(
            "{} batches ({} triples) dropped at multiples of π, processed stamps {:?}, {} triples consumed",
            c.pathological_batches, c.pathological, stamps, c.consumed
        ),
    )
}

struct GridRun {
    final_avg: f64,
    bins: [f64; 4],
    csv_hash: u64,
}

fn grid_runs(exp: &Experiment, seeds: &[u64]) -> Vec<GridRun> {
    map_replications(exp, seeds, None, |trace| {
        let mut err = Vec::with_capacity(trace.records.len());
        for r in &trace.records {
            let x = exp.plant.report(&r.truth);
            let xh = exp.plant.report(&r.fused);
            let e = x.iter().zip(&xh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            err.push((r.t, e));
        }
        let window: Vec<f64> = err.iter().filter(|(t, _)| *t >= 5.0).map(|p| p.1).collect();
        let final_avg = window.iter().sum::<f64>() / window.len() as f64;
        let mut bins = [0.0; 4];
        for (b, bin) in bins.iter_mut().enumerate() {
            let lo = 8.0 + 0.5 * b as f64;
            let vals: Vec<f64> = err.iter().filter(|(t, _)| *t >= lo && *t < lo + 0.5).map(|p| p.1).collect();
            *bin = vals.iter().sum::<f64>() / vals.len() as f64;
        }
        let mut csv = Vec::new();
        write_trace(&mut csv, exp, &trace).expect("in-memory write");
        let mut h = DefaultHasher::new();
        csv.hash(&mut h);
        GridRun { final_avg, bins, csv_hash: h.finish() }
    })
    .expect("grid runs")
}

fn criteria_9_and_10(limit_9: Duration) -> (Outcome, Outcome, Duration, Duration) {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=50).collect();
    let attack = Experiment::prepare(load("ieee14_attack.json")).expect("prepare attack");
    let clean = Experiment::prepare(load("ieee14_clean.json")).expect("prepare clean");
    let a_runs = grid_runs(&attack, &seeds);
    let c_runs = grid_runs(&clean, &seeds);
    let elapsed_9 = start.elapsed();
    let mean = |runs: &[GridRun]| runs.iter().map(|r| r.final_avg).sum::<f64>() / runs.len() as f64;
    let finite = a_runs.iter().chain(&c_runs).all(|r| r.final_avg.is_finite() && r.bins.iter().all(|b| b.is_finite()));
    let (a_avg, c_avg) = (mean(&a_runs), mean(&c_runs));
    let mut bins = [0.0; 4];
    for r in &a_runs {
        for (acc, b) in bins.iter_mut().zip(r.bins) {
            *acc += b / a_runs.len() as f64;
        }
    }
    let increasing = bins.windows(2).all(|w| w[1] > w[0]);
    let diverging = increasing && bins[3] / bins[0] > 1.1;
    let ratio = a_avg / c_avg;
    let c9 = outcome(
        finite && !diverging && ratio <= 3.0 && elapsed_9 < limit_9,
        format!(
            "50 seeds, final-5 s mean ‖e‖∞: attack {a_avg:.4}, clean {c_avg:.4}, ratio {ratio:.3} (≤ 3); last-2 s bins {:?}, diverging: {diverging}",
            bins.map(|b| (b * 1e4).round() / 1e4)
        ),
    );
    let start = Instant::now();
    let a_again = grid_runs(&attack, &seeds);
    let c_again = grid_runs(&clean, &seeds);
    let elapsed_10 = start.elapsed();
    let same = a_runs.iter().zip(&a_again).chain(c_runs.iter().zip(&c_again)).all(|(x, y)| x.csv_hash == y.csv_hash);
    let c10 = outcome(same, format!("{} trace CSVs rehashed, identical: {same}", a_again.len() + c_again.len()));
    (c9, c10, elapsed_9, elapsed_10)
}

fn report(id: &str, name: &str, result: Outcome, elapsed: Duration, limit: Option<Duration>) -> bool {
    let within = limit.is_none_or(|l| elapsed < l);
    let pass = result.pass && within;
    let budget = limit.map_or(String::new(), |l| format!(", limit {} s", l.as_secs()));
    println!(
        "criterion {id:>2} {name}: {} | {} | {:.1} s{budget}",
        if pass { "PASS" } else { "FAIL" },
        result.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() {
    // Positional arguments select criteria by number, e.g. `-- 7 8`.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let filters: Vec<&str> = args.iter().map(String::as_str).filter(|a| !a.starts_with('-')).collect();
    let wanted = |ids: &[&str]| filters.is_empty() || ids.iter().any(|id| filters.contains(id));
    let suite = Instant::now();
    let mut all = true;
    let s = Duration::from_secs;
    if wanted(&["1"]) {
        let (r, t) = timed(criterion_1);
        all &= report("1", "subspace identities", r, t, Some(s(10)));
    }
    if wanted(&["2"]) {
        let (r, t) = timed(criterion_2);
        all &= report("2", "projection", r, t, None);
    }
    if wanted(&["3"]) {
        let (r, t) = timed(criterion_3);
        all &= report("3", "gain contract", r, t, Some(s(30)));
    }
    if wanted(&["4"]) {
        let (r, t) = timed(criterion_4);
        all &= report("4", "local unbiasedness and covariance", r, t, Some(s(120)));
    }
    if wanted(&["5", "6"]) {
        let ((r5, r6), t) = timed(criteria_5_and_6);
        all &= report("5", "fused bounds", r5, t, Some(s(180)));
        all &= report("6", "median sandwich", r6, t, None);
    }
    if wanted(&["7"]) {
        let (r, t) = timed(criterion_7);
        all &= report("7", "order statistics", r, t, Some(s(30)));
    }
    if wanted(&["8"]) {
        let (r, t) = timed(criterion_8);
        all &= report("8", "pathological filtering", r, t, None);
    }
    if wanted(&["9", "10"]) {
        let (r9, r10, t9, t10) = criteria_9_and_10(s(180));
        all &= report("9", "IEEE 14-bus reproduction", r9, t9, Some(s(180)));
        all &= report("10", "determinism", r10, t10, None);
    }
    let total = suite.elapsed();
    let in_budget = total < s(600);
    println!(
        "acceptance: {} in {:.1} s (limit 600 s)",
        if all && in_budget { "all selected criteria PASS" } else { "FAILURES" },
        total.as_secs_f64()
    );
    if !(all && in_budget) {
        std::process::exit(1);
    }
}
