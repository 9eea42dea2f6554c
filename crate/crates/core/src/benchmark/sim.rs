//! Event-driven simulation of the full estimation loop.
//!
//! Each run draws global stamps, samples sensors, pushes triples through
//! the attacker, the channel delay and the reordering buffer, then feeds
//! every released batch to the local observers and the median fuser.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{ExperimentConfig, Plant};
use crate::bounds::{compute_constants, BoundConstants};
use crate::error::{Error, Result};
use crate::estimator::{estimate_l_bar, gap_grid, LocalEstimator, UpdateKind};
use crate::fusion::{sandwich_violations, Fuser};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::observability::{check_sparse_observability, SensorDecomposition, SparseCertificate, DEFAULT_SUBSET_CAP};
use crate::system::TrueState;
use crate::threat::{attack_batch, AttackConfig, DelayBuffer, MeasurementTriple, SampleBatch, Tamper};

const STREAM_PLANT: u64 = 1;
const STREAM_SAMPLING: u64 = 2;
const STREAM_ATTACK: u64 = 3;
const STREAM_PAST: u64 = 4;
const STREAM_CHANNEL: u64 = 5;

/// A validated configuration with everything derived from it that does
/// not depend on the seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub plant: Plant,
    pub decomposition: SensorDecomposition,
    pub attack: AttackConfig,
    pub fuser: Fuser,
    pub l_bar: f64,
    pub constants: BoundConstants,
    pub certificate: Option<SparseCertificate>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        let plant = config.build_plant()?;
        let model = &plant.model;
        let decomposition = SensorDecomposition::build(model);
        decomposition.fusion_sets()?;
        let attack = config.attack.to_attack_config();
        attack.validate(model.m())?;
        let certificate = match config.run.check_sparsity {
            Some(s) => {
                let cert = check_sparse_observability(model, s, DEFAULT_SUBSET_CAP)?;
                if !cert.observable {
                    return Err(Error::Model(cert.to_string()));
                }
                Some(cert)
            }
            None => None,
        };
        let fuser = Fuser::new(&decomposition, attack.p)?;
        let est = &config.estimator;
        let l_bar = match est.l_bar {
            Some(l) => l,
            None => {
                let t_min = match &config.sampling.stamps {
                    Some(stamps) => min_gap(stamps).min(model.t_max()),
                    None => config.sampling.interval_min,
                };
                let grid = gap_grid(t_min, model.t_max(), est.l_bar_grid);
                estimate_l_bar(model, &decomposition, est.rho_bar, est.policy, &grid)?
            }
        };
        let constants = compute_constants(model, &decomposition, l_bar, est.rho_bar, plant.sigma_0)?;
        Ok(Experiment { config, plant, decomposition, attack, fuser, l_bar, constants, certificate })
    }

    /// One seeded run of the estimation loop.
    pub fn run(&self, seed: u64) -> Result<SimulationTrace> {
        Simulation::new(self, seed)?.run()
    }

    fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

fn min_gap(stamps: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut best = f64::INFINITY;
    for &t in stamps {
        best = best.min(t - prev);
        prev = t;
    }
    best
}

/// Where every triple went. The totals balance:
/// `generated − dos_dropped + fabricated = late + accepted` and
/// `accepted = stale + duplicate + pending_end + emitted`, with
/// `emitted = pathological + consumed + rejected_gap + rejected_pathological + rejected_gain`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub stamps: u64,
    pub generated: u64,
    pub dos_dropped: u64,
    pub fabricated: u64,
    pub late: u64,
    pub accepted: u64,
    pub stale: u64,
    pub duplicate: u64,
    pub pending_end: u64,
    pub emitted: u64,
    pub pathological_batches: u64,
    pub pathological: u64,
    pub consumed: u64,
    pub rejected_gap: u64,
    pub rejected_pathological: u64,
    pub rejected_gain: u64,
}

impl Counters {
    pub fn balanced(&self) -> bool {
        self.generated - self.dos_dropped + self.fabricated == self.late + self.accepted
            && self.accepted == self.stale + self.duplicate + self.pending_end + self.emitted
            && self.emitted
                == self.pathological + self.consumed + self.rejected_gap + self.rejected_pathological + self.rejected_gain
    }
}

/// One processed stamp. Vectors are in estimator coordinates.
#[derive(Debug, Clone)]
pub struct StampRecord {
    pub k: usize,
    pub t: f64,
    pub truth: CVector,
    pub fused: CVector,
    /// `η_i[k]` per sensor, empty unless locals are recorded.
    pub locals: Vec<CVector>,
    /// Tampered triples consumed at this stamp.
    pub tampered: Vec<(usize, Tamper, f64)>,
    pub sandwich_violations: usize,
}

impl StampRecord {
    pub fn error(&self) -> CVector {
        &self.fused - &self.truth
    }

    pub fn error_inf(&self) -> f64 {
        linalg::vec_max_abs(&self.error())
    }
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub seed: u64,
    /// Starts with the initialization record `k = 0`.
    pub records: Vec<StampRecord>,
    pub counters: Counters,
}

impl SimulationTrace {
    pub fn sandwich_violations(&self) -> usize {
        self.records.iter().map(|r| r.sandwich_violations).sum()
    }
}

/// Truth on demand. The frontier moves forward with the plant stream;
/// earlier times are filled in from the closest known state before them.
struct Truth<'a> {
    plant: &'a Plant,
    known: BTreeMap<u64, CVector>,
    frontier: TrueState,
    past_rng: ChaCha8Rng,
}

impl<'a> Truth<'a> {
    fn new(plant: &'a Plant, x0: CVector, past_rng: ChaCha8Rng) -> Self {
        let mut known = BTreeMap::new();
        known.insert(0f64.to_bits(), x0.clone());
        Truth { plant, known, frontier: TrueState { t: 0.0, x: x0 }, past_rng }
    }

    fn propagate<R: Rng>(plant: &Plant, from: &TrueState, to: f64, rng: &mut R) -> Result<TrueState> {
        let t_max = plant.model.t_max();
        let mut state = from.clone();
        while to - state.t > 0.0 {
            let dt = (to - state.t).min(t_max);
            state = plant.model.propagate_state(&state, dt, rng)?;
        }
        state.t = to;
        Ok(state)
    }

    fn advance<R: Rng>(&mut self, t: f64, rng: &mut R) -> Result<&CVector> {
        if t > self.frontier.t {
            self.frontier = Self::propagate(self.plant, &self.frontier, t, rng)?;
            self.known.insert(t.to_bits(), self.frontier.x.clone());
        }
        Ok(&self.frontier.x)
    }

    fn at<R: Rng>(&mut self, t: f64, plant_rng: &mut R) -> Result<CVector> {
        if t > self.frontier.t {
            return self.advance(t, plant_rng).cloned();
        }
        if let Some(x) = self.known.get(&t.to_bits()) {
            return Ok(x.clone());
        }
        let (&t0, x0) = self.known.range(..t.to_bits()).next_back().expect("time 0 is always known");
        let start = TrueState { t: f64::from_bits(t0), x: x0.clone() };
        let state = Self::propagate(self.plant, &start, t, &mut self.past_rng)?;
        self.known.insert(t.to_bits(), state.x.clone());
        Ok(state.x)
    }

    /// Forgets states strictly before the last known state at or before `t`.
    fn prune(&mut self, t: f64) {
        if let Some((&keep, _)) = self.known.range(..=t.to_bits()).next_back() {
            self.known = self.known.split_off(&keep);
        }
    }
}

struct Simulation<'a> {
    exp: &'a Experiment,
    seed: u64,
    plant_rng: ChaCha8Rng,
    sampling_rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
    truth: Truth<'a>,
    estimators: Vec<LocalEstimator>,
    buffer: DelayBuffer<Tamper>,
    counters: Counters,
    records: Vec<StampRecord>,
    k: usize,
    last_t: f64,
}

impl<'a> Simulation<'a> {
    fn new(exp: &'a Experiment, seed: u64) -> Result<Self> {
        let plant = &exp.plant;
        let model = &plant.model;
        let mut plant_rng = Experiment::stream(seed, STREAM_PLANT);
        let xi = CVector::from_fn(plant.p0_factor.ncols(), |_, _| C64::new(plant_rng.sample(StandardNormal), 0.0));
        let x0 = &plant.x0_mean + &plant.p0_factor * xi;
        let est = &exp.config.estimator;
        let estimators = exp
            .decomposition
            .sensors()
            .iter()
            .map(|s| LocalEstimator::initialize(s, &plant.initial_estimate, est.rho_bar, exp.l_bar, model.t_max(), est.policy))
            .collect::<Result<Vec<_>>>()?;
        let etas: Vec<CVector> = estimators.iter().map(|e| e.eta().clone()).collect();
        let fused = exp.fuser.fuse(0, 0.0, &etas)?;
        let record = StampRecord {
            k: 0,
            t: 0.0,
            truth: x0.clone(),
            fused: fused.x_hat,
            locals: if exp.config.run.record_locals { etas } else { Vec::new() },
            tampered: Vec::new(),
            sandwich_violations: 0,
        };
        Ok(Simulation {
            exp,
            seed,
            plant_rng,
            sampling_rng: Experiment::stream(seed, STREAM_SAMPLING),
            attack_rng: Experiment::stream(seed, STREAM_ATTACK),
            channel_rng: Experiment::stream(seed, STREAM_CHANNEL),
            truth: Truth::new(plant, x0, Experiment::stream(seed, STREAM_PAST)),
            estimators,
            buffer: DelayBuffer::new(exp.config.buffer.window),
            counters: Counters::default(),
            records: vec![record],
            k: 0,
            last_t: 0.0,
        })
    }

    fn run(mut self) -> Result<SimulationTrace> {
        let cfg = &self.exp.config;
        let horizon = cfg.run.horizon;
        let window = cfg.buffer.window;
        let mut t = 0.0;
        let mut explicit = cfg.sampling.stamps.as_ref().map(|s| s.iter().copied());
        let mut index: u64 = 0;
        loop {
            t = match explicit.as_mut() {
                Some(it) => match it.next() {
                    Some(s) => s,
                    None => break,
                },
                None => t + self.sampling_rng.gen_range(cfg.sampling.interval_min..=cfg.sampling.interval_max),
            };
            if t > horizon {
                break;
            }
            self.sample(t, index)?;
            index += 1;
            for released in self.buffer.flush(t) {
                self.process(released.stamp, released.entries)?;
            }
        }
        for released in self.buffer.flush(horizon + window) {
            self.process(released.stamp, released.entries)?;
        }
        let stats = self.buffer.stats();
        self.counters.late = stats.late;
        self.counters.accepted = stats.accepted;
        self.counters.stale = stats.stale;
        self.counters.duplicate = stats.duplicate;
        self.counters.emitted = stats.emitted;
        self.counters.pending_end = self.buffer.pending_len() as u64;
        debug_assert!(self.counters.balanced(), "{:?}", self.counters);
        Ok(SimulationTrace { seed: self.seed, records: self.records, counters: self.counters })
    }

    /// Samples all sensors at a global stamp and sends the triples.
    fn sample(&mut self, t: f64, index: u64) -> Result<()> {
        let plant = &self.exp.plant;
        let cfg = &self.exp.config;
        self.counters.stamps += 1;
        let x = self.truth.advance(t, &mut self.plant_rng)?.clone();
        let state = TrueState { t, x };
        let mut triples = Vec::new();
        for i in 0..plant.model.m() {
            if self.sampling_rng.gen_bool(cfg.sampling.success_prob) {
                let value = plant.model.measure(i, &state, plant.r[i], &mut self.plant_rng)?;
                triples.push(MeasurementTriple { sensor: i, stamp: t, value });
            }
        }
        self.counters.generated += triples.len() as u64;
        let attacked = attack_batch(&SampleBatch::new(t, triples), &self.exp.attack, index, &mut self.attack_rng);
        self.counters.dos_dropped += attacked.dropped.len() as u64;
        for (triple, label) in attacked.triples {
            if label == Tamper::Fabricated {
                self.counters.fabricated += 1;
            }
            let delay = match cfg.buffer.max_delay {
                d if d > 0.0 => self.channel_rng.gen_range(0.0..=d),
                _ => 0.0,
            };
            self.buffer.ingest(triple, label, t + delay);
        }
        Ok(())
    }

    /// Runs one stamp of the estimator on a released batch.
    fn process(&mut self, stamp: f64, entries: Vec<(MeasurementTriple, Tamper)>) -> Result<()> {
        let exp = self.exp;
        let model = &exp.plant.model;
        if model.is_pathological_default(stamp) {
            log::debug!("dropping batch at pathological time {stamp}");
            self.counters.pathological_batches += 1;
            self.counters.pathological += entries.len() as u64;
            return Ok(());
        }
        let k = self.k + 1;
        let step = model.state_transition(stamp - self.last_t);
        let mut by_sensor: HashMap<usize, f64> = HashMap::with_capacity(entries.len());
        let mut tampered = Vec::new();
        for (triple, label) in &entries {
            by_sensor.insert(triple.sensor, triple.value);
            if label.is_tampered() {
                tampered.push((triple.sensor, *label, triple.value));
            }
        }
        let mut gap_cache: HashMap<u64, CMatrix> = HashMap::new();
        for (i, est) in self.estimators.iter_mut().enumerate() {
            let sub = exp.decomposition.sensor(i);
            let a_step = sub.restrict(&step);
            let Some(&y) = by_sensor.get(&i) else {
                est.update(k, stamp, &a_step, None)?;
                continue;
            };
            if sub.dim() == 0 {
                self.counters.consumed += 1;
                continue;
            }
            let gap = stamp - est.last_stamp_time();
            let rejected = if gap > model.t_max() {
                Some(&mut self.counters.rejected_gap)
            } else if model.is_pathological_default(gap) {
                Some(&mut self.counters.rejected_pathological)
            } else {
                None
            };
            if let Some(counter) = rejected {
                *counter += 1;
                est.update(k, stamp, &a_step, None)?;
                continue;
            }
            let lambda_gap = gap_cache.entry(est.last_stamp_time().to_bits()).or_insert_with(|| model.state_transition(gap));
            let a_gap = sub.restrict(lambda_gap);
            match est.update(k, stamp, &a_step, Some((y, &a_gap))) {
                Ok(UpdateKind::Corrected { .. }) => self.counters.consumed += 1,
                Ok(UpdateKind::Predicted) => unreachable!("measurement supplied"),
                Err(Error::GainAboveBudget { .. } | Error::NumericallyUnobservable { .. }) => {
                    self.counters.rejected_gain += 1;
                    est.update(k, stamp, &a_step, None)?;
                }
                Err(e) => return Err(e),
            }
        }
        let etas: Vec<CVector> = self.estimators.iter().map(|e| e.eta().clone()).collect();
        let fused = exp.fuser.fuse(k, stamp, &etas)?;
        let violations = sandwich_violations(&fused, |s| !exp.attack.is_corrupted(s)).len();
        let truth = self.truth.at(stamp, &mut self.plant_rng)?;
        self.truth.prune(stamp);
        self.records.push(StampRecord {
            k,
            t: stamp,
            truth,
            fused: fused.x_hat,
            locals: if exp.config.run.record_locals { etas } else { Vec::new() },
            tampered,
            sandwich_violations: violations,
        });
        self.k = k;
        self.last_t = stamp;
        Ok(())
    }
}
