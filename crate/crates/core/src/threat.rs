//! Adversarial measurement channel and the reordering buffer in front of
//! the estimator.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(i, t, y)` as transmitted by a sensor. `sensor` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementTriple {
    pub sensor: usize,
    pub stamp: f64,
    pub value: f64,
}

/// Triples sharing one stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub stamp: f64,
    pub triples: Vec<MeasurementTriple>,
}

impl SampleBatch {
    pub fn new(stamp: f64, triples: Vec<MeasurementTriple>) -> Self {
        SampleBatch { stamp, triples }
    }

    /// Sensors present, ascending.
    pub fn psi(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.triples.iter().map(|t| t.sensor).collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackMode {
    /// `y ← y + offset + spread·U(−1, 1)`.
    Inject {
        offset: f64,
        #[serde(default)]
        spread: f64,
    },
    /// `t ← t + U(−max_shift, max_shift)`.
    Timeshift { max_shift: f64 },
    /// Each triple is removed with probability `drop_prob`.
    Dos { drop_prob: f64 },
    /// With probability `rate` per batch a fake triple is added with stamp
    /// `t − U(0, stamp_spread)` and value `U(value_min, value_max)`.
    Fabricate {
        rate: f64,
        value_min: f64,
        value_max: f64,
        stamp_spread: f64,
    },
    /// Cycles through `modes`, one per batch.
    Mixed { modes: Vec<AttackMode> },
}

impl AttackMode {
    fn validate(&self, path: &str) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("{path}.{field}"), msg));
        match self {
            AttackMode::Inject { offset, spread } => {
                if !offset.is_finite() {
                    return bad("offset", "must be finite".into());
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return bad("spread", format!("must be finite and nonnegative, got {spread}"));
                }
            }
            AttackMode::Timeshift { max_shift } => {
                if !(max_shift.is_finite() && *max_shift >= 0.0) {
                    return bad("max_shift", format!("must be finite and nonnegative, got {max_shift}"));
                }
            }
            AttackMode::Dos { drop_prob } => {
                if !(0.0..=1.0).contains(drop_prob) {
                    return bad("drop_prob", format!("must lie in [0, 1], got {drop_prob}"));
                }
            }
            AttackMode::Fabricate { rate, value_min, value_max, stamp_spread } => {
                if !(0.0..=1.0).contains(rate) {
                    return bad("rate", format!("must lie in [0, 1], got {rate}"));
                }
                if !(value_min.is_finite() && value_max.is_finite() && value_min <= value_max) {
                    return bad("value_max", format!("value range [{value_min}, {value_max}] is empty or non-finite"));
                }
                if !(stamp_spread.is_finite() && *stamp_spread >= 0.0) {
                    return bad("stamp_spread", format!("must be finite and nonnegative, got {stamp_spread}"));
                }
            }
            AttackMode::Mixed { modes } => {
                if modes.is_empty() {
                    return bad("modes", "must list at least one mode".into());
                }
                for (k, m) in modes.iter().enumerate() {
                    if matches!(m, AttackMode::Mixed { .. }) {
                        return bad(&format!("modes[{k}]"), "mixed modes cannot nest".into());
                    }
                    m.validate(&format!("{path}.modes[{k}]"))?;
                }
            }
        }
        Ok(())
    }

    /// The primitive mode active for batch number `index`.
    pub fn active(&self, index: u64) -> &AttackMode {
        match self {
            AttackMode::Mixed { modes } => &modes[(index % modes.len() as u64) as usize],
            other => other,
        }
    }
}

/// Fixed corrupted set `C` (0-based keys) with its per-sensor behaviour.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackConfig {
    pub p: usize,
    pub sensors: BTreeMap<usize, AttackMode>,
}

impl AttackConfig {
    pub fn none() -> Self {
        AttackConfig::default()
    }

    pub fn corrupted(&self) -> impl Iterator<Item = usize> + '_ {
        self.sensors.keys().copied()
    }

    pub fn is_corrupted(&self, sensor: usize) -> bool {
        self.sensors.contains_key(&sensor)
    }

    /// Checks `|C| ≤ p`, sensor range and mode parameters.
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.sensors.len() > self.p {
            return Err(Error::config(
                "attack.sensors",
                format!("{} corrupted sensors exceed p = {}", self.sensors.len(), self.p),
            ));
        }
        for (&i, mode) in &self.sensors {
            if i >= m {
                return Err(Error::config("attack.sensors", format!("sensor {} out of range 1..={m}", i + 1)));
            }
            mode.validate(&format!("attack.sensors[{}]", i + 1))?;
        }
        Ok(())
    }
}

/// Ground-truth tampering label carried alongside a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tamper {
    Genuine,
    Injected,
    Shifted,
    Fabricated,
}

impl Tamper {
    pub fn is_tampered(self) -> bool {
        self != Tamper::Genuine
    }
}

/// `S^a(t)` with labels, plus the sensors whose triples were suppressed.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackedBatch {
    pub stamp: f64,
    pub triples: Vec<(MeasurementTriple, Tamper)>,
    pub dropped: Vec<usize>,
}

impl AttackedBatch {
    pub fn to_batch(&self) -> SampleBatch {
        SampleBatch::new(self.stamp, self.triples.iter().map(|(t, _)| *t).collect())
    }
}

/// Applies the configured attacks to one pre-attack batch. Only sensors in
/// `C` are touched; `index` selects the active mode for mixed attackers.
pub fn attack_batch<R: Rng + ?Sized>(
    batch: &SampleBatch,
    config: &AttackConfig,
    index: u64,
    rng: &mut R,
) -> AttackedBatch {
    let mut out = AttackedBatch { stamp: batch.stamp, triples: Vec::with_capacity(batch.triples.len()), dropped: Vec::new() };
    for triple in &batch.triples {
        let Some(mode) = config.sensors.get(&triple.sensor) else {
            out.triples.push((*triple, Tamper::Genuine));
            continue;
        };
        let mut t = *triple;
        match mode.active(index) {
            AttackMode::Inject { offset, spread } => {
                let noise = if *spread > 0.0 { spread * rng.gen_range(-1.0..=1.0) } else { 0.0 };
                t.value += offset + noise;
                out.triples.push((t, Tamper::Injected));
            }
            AttackMode::Timeshift { max_shift } => {
                if *max_shift > 0.0 {
                    t.stamp += rng.gen_range(-max_shift..=*max_shift);
                }
                out.triples.push((t, Tamper::Shifted));
            }
            AttackMode::Dos { drop_prob } => {
                if rng.gen_bool(*drop_prob) {
                    out.dropped.push(t.sensor);
                } else {
                    out.triples.push((t, Tamper::Genuine));
                }
            }
            AttackMode::Fabricate { .. } | AttackMode::Mixed { .. } => out.triples.push((t, Tamper::Genuine)),
        }
    }
    for (&sensor, mode) in &config.sensors {
        if let AttackMode::Fabricate { rate, value_min, value_max, stamp_spread } = mode.active(index) {
            if rng.gen_bool(*rate) {
                let lag = if *stamp_spread > 0.0 { rng.gen_range(0.0..*stamp_spread) } else { 0.0 };
                let value = if value_max > value_min { rng.gen_range(*value_min..*value_max) } else { *value_min };
                out.triples.push((MeasurementTriple { sensor, stamp: batch.stamp - lag, value }, Tamper::Fabricated));
            }
        }
    }
    out
}

/// True iff every tampered triple comes from a set of at most `p` sensors.
pub fn validate_attack_sparsity(labels: impl IntoIterator<Item = (usize, Tamper)>, p: usize) -> bool {
    let sensors: BTreeSet<usize> = labels.into_iter().filter(|(_, t)| t.is_tampered()).map(|(s, _)| s).collect();
    sensors.len() <= p
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BufferStats {
    pub accepted: u64,
    pub late: u64,
    pub stale: u64,
    pub duplicate: u64,
    pub emitted: u64,
}

/// A flushed batch; each triple carries the payload it was ingested with.
#[derive(Debug, Clone, PartialEq)]
pub struct Released<L> {
    pub stamp: f64,
    pub entries: Vec<(MeasurementTriple, L)>,
}

#[derive(Debug, Clone)]
struct Pending<L> {
    triple: MeasurementTriple,
    label: L,
    seq: u64,
}

/// Holds triples for a window `d` and releases them in strictly increasing
/// stamp order.
///
/// Stamps at or below the high-water mark (initially 0, the initialization
/// stamp) are discarded as stale, and a second triple from the same sensor
/// at one stamp is discarded as a duplicate.
#[derive(Debug, Clone)]
pub struct DelayBuffer<L = ()> {
    window: f64,
    pending: Vec<Pending<L>>,
    high_water: f64,
    seq: u64,
    stats: BufferStats,
}

impl<L: Clone> DelayBuffer<L> {
    pub fn new(window: f64) -> Self {
        assert!(window >= 0.0 && window.is_finite(), "buffer window must be finite and nonnegative");
        DelayBuffer { window, pending: Vec::new(), high_water: 0.0, seq: 0, stats: BufferStats::default() }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn high_water(&self) -> f64 {
        self.high_water
    }

    pub fn stats(&self) -> BufferStats {
        self.stats
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Stores the triple unless it arrived more than `d` after its stamp.
    pub fn ingest(&mut self, triple: MeasurementTriple, label: L, arrival: f64) -> bool {
        if arrival - triple.stamp > self.window || !triple.stamp.is_finite() || !triple.value.is_finite() {
            self.stats.late += 1;
            return false;
        }
        self.stats.accepted += 1;
        self.pending.push(Pending { triple, label, seq: self.seq });
        self.seq += 1;
        true
    }

    /// Releases every triple with stamp `≤ now − d`.
    pub fn flush(&mut self, now: f64) -> Vec<Released<L>> {
        let cutoff = now - self.window;
        let (mut ripe, rest): (Vec<_>, Vec<_>) = self.pending.drain(..).partition(|p| p.triple.stamp <= cutoff);
        self.pending = rest;
        ripe.sort_by(|a, b| a.triple.stamp.partial_cmp(&b.triple.stamp).unwrap().then(a.seq.cmp(&b.seq)));
        let mut out: Vec<Released<L>> = Vec::new();
        let mut i = 0;
        while i < ripe.len() {
            let stamp = ripe[i].triple.stamp;
            let mut j = i;
            while j < ripe.len() && ripe[j].triple.stamp == stamp {
                j += 1;
            }
            if stamp <= self.high_water {
                log::debug!("stale stamp {stamp} at or below high-water mark {}", self.high_water);
                self.stats.stale += (j - i) as u64;
            } else {
                let mut seen = BTreeSet::new();
                let mut entries = Vec::with_capacity(j - i);
                for p in &ripe[i..j] {
                    if seen.insert(p.triple.sensor) {
                        entries.push((p.triple, p.label.clone()));
                    } else {
                        log::debug!("duplicate triple from sensor {} at stamp {stamp}", p.triple.sensor + 1);
                        self.stats.duplicate += 1;
                    }
                }
                self.stats.emitted += entries.len() as u64;
                self.high_water = stamp;
                out.push(Released { stamp, entries });
            }
            i = j;
        }
        out
    }
}
