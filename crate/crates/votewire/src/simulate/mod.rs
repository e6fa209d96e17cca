//! Synthetic election and transmission generator.
//!
//! Produces ground-truth-labelled datasets exercising both transmission
//! regimes (per-vote octet growth vs fixed-size tally uploads), the
//! received-byte subgroups of High Traffic machines, retransmission offset
//! lines, regional blocking, and linked 1998/2000/2004 electoral
//! histories. A fixed seed reproduces the dataset byte for byte; see
//! [`rng`] for the counter-based generator that makes this hold across
//! platforms.

pub mod rng;

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{PatternPoint, Subgroup};
use crate::ingest::{terminate_cause_name, NasMap};
use crate::model::{
    ElectionId, Medium, TallySheet, TerminateCause, TrafficClass, TransmissionRecord, VotingCenter,
};
use rng::{fnv1a64, CounterRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> SimulateError {
    SimulateError::InvalidConfig {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Mean and standard deviation of a normal draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn new(mean: f64, std: f64) -> Self {
        MeanStd { mean, std }
    }
}

/// One value per traffic class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub high: T,
    pub low: T,
    pub cellular: T,
}

impl<T: Copy> PerClass<T> {
    pub fn get(&self, class: TrafficClass) -> T {
        match class {
            TrafficClass::HighWire => self.high,
            TrafficClass::LowWire => self.low,
            _ => self.cellular,
        }
    }
}

/// One retransmission offset line and its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetStep {
    pub offset: f64,
    pub probability: f64,
}

/// Octet model of one transmission direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DirectionModel {
    /// Octets grow with the vote count: `intercept + slope * votes`, plus a
    /// per-machine offset line and Gaussian noise.
    PerVote {
        slope: f64,
        intercept: f64,
        noise_sigma: f64,
        offsets: Vec<OffsetStep>,
    },
    /// Octets independent of votes, as fixed-size tally uploads would be.
    FixedTally { base: f64, noise_sigma: f64 },
}

impl DirectionModel {
    fn validate(&self, field: &str) -> Result<(), SimulateError> {
        match self {
            DirectionModel::PerVote {
                noise_sigma,
                offsets,
                ..
            } => {
                if *noise_sigma < 0.0 {
                    return Err(invalid(field, "noise_sigma must be >= 0"));
                }
                if offsets.is_empty() {
                    return Err(invalid(field, "offsets must not be empty"));
                }
                let total: f64 = offsets.iter().map(|o| o.probability).sum();
                if offsets.iter().any(|o| o.probability < 0.0) || (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(field, "offset probabilities must sum to 1"));
                }
            }
            DirectionModel::FixedTally { noise_sigma, .. } => {
                if *noise_sigma < 0.0 {
                    return Err(invalid(field, "noise_sigma must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// (octets, offset index) for one machine.
    fn sample(&self, votes: f64, rng: &mut CounterRng) -> (u64, usize) {
        match self {
            DirectionModel::PerVote {
                slope,
                intercept,
                noise_sigma,
                offsets,
            } => {
                let idx = if offsets.len() == 1 {
                    0
                } else {
                    let probs: Vec<f64> = offsets.iter().map(|o| o.probability).collect();
                    rng.weighted_index_f64(&probs)
                };
                let mean = intercept + slope * votes + offsets[idx].offset;
                let value = mean + rng.normal(0.0, *noise_sigma);
                (value.max(1.0).round() as u64, idx)
            }
            DirectionModel::FixedTally { base, noise_sigma } => {
                let value = base + rng.normal(0.0, *noise_sigma);
                (value.max(1.0).round() as u64, 0)
            }
        }
    }
}

/// Octet models of one machine kind, both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineProfile {
    /// Server to machine (`output_octets`).
    pub incoming: DirectionModel,
    /// Machine to server (`input_octets`).
    pub outgoing: DirectionModel,
}

/// Mixture component for per-vote pattern injection inside a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMix {
    /// Fraction of the class drawing the alternate profile.
    pub fraction: f64,
    pub profile: MachineProfile,
}

/// How many machines a class has and how they transmit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub centers: usize,
    /// Exact machine budget dealt across the centers; when `None` the
    /// center-size profile alone decides the total.
    pub machines: Option<usize>,
    pub registered_range: (u64, u64),
    pub primary: MachineProfile,
    /// Superior-subgroup profile and its probability (High Traffic only).
    pub superior: Option<(f64, MachineProfile)>,
    /// Optional per-vote pattern mixture (used for Low Traffic scenarios).
    pub pattern: Option<PatternMix>,
    /// Mean votes drift: scales drawn registries to steer per-class vote
    /// volume; 1.0 leaves the range untouched.
    #[serde(default = "one")]
    pub registered_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Vote-share and turnout models of one electoral event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionSpec {
    pub id: ElectionId,
    /// Abstention percent per center, per class.
    pub abstention: PerClass<MeanStd>,
    /// Pro-government share percent per machine, per class.
    pub progov_share: PerClass<MeanStd>,
    /// Option receiving the pro-government share: `NO` maps onto the
    /// referendum fields, anything else onto `candidate_votes`.
    pub progov_option: String,
    /// Remaining options and their weights for the remainder split.
    pub other_options: Vec<(String, f64)>,
    /// Null-vote fraction of the total (0 for the referendum).
    pub null_share: f64,
}

/// Regional blocking layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub centers_per_municipality: usize,
    pub municipalities_per_state: usize,
    pub parishes_per_municipality: usize,
    /// Probability a center stays in its class-blocked municipality;
    /// 1.0 reproduces fully blocked geography.
    pub block: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec {
            centers_per_municipality: 8,
            municipalities_per_state: 6,
            parishes_per_municipality: 2,
            block: 1.0,
        }
    }
}

/// Test-file calibration model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CalibrationSpec {
    pub overhead_sigma: f64,
    /// Extra per-machine overhead injected on top of the class baseline.
    #[serde(default)]
    pub injected: BTreeMap<String, f64>,
}

/// Full scenario description; serializes to the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub poll_close: i64,
    pub high_wire: ClassSpec,
    pub low_wire: ClassSpec,
    pub cellular: ClassSpec,
    /// Weights of center sizes 1..=len.
    pub machines_per_center: Vec<u32>,
    /// Fractions of the cellular fleet relocated into wire centers, and of
    /// the High Traffic fleet relocated into cellular centers.
    pub cellular_share_in_high: f64,
    pub cellular_share_in_low: f64,
    pub high_share_in_cellular: f64,
    pub elections: Vec<ElectionSpec>,
    /// Registry growth factor from the 2000 registry to the 2004 one.
    pub electorate_growth: f64,
    /// Loading of the shared center latent in abstention draws.
    pub abstention_center_loading: f64,
    /// Loading of the shared center latent in vote-share draws.
    pub share_center_loading: f64,
    /// Share of vote-share variance that is per-machine.
    pub share_within_center_fraction: f64,
    pub region: RegionSpec,
    /// Fraction of machines that dial more than once.
    pub retry_fraction: f64,
    pub retry_max_extra_calls: u32,
    /// Retries carry zero octets instead of partial payloads.
    pub retry_zero_octets: bool,
    /// Fraction of machines whose final session starts before poll close
    /// (an injected anomaly; 0 in the default packs).
    pub pre_close_fraction: f64,
    #[serde(default)]
    pub calibration: CalibrationSpec,
}

/// Poll close of the 2004 referendum, 2004-08-15T20:00:00Z.
pub const POLL_CLOSE_2004: i64 = 1_092_600_000;

/// Default center-size weights, sizes 1..=18, mode 4.
pub const DEFAULT_SIZE_WEIGHTS: [u32; 18] =
    [7, 12, 16, 17, 12, 8, 5, 3, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1];

/// Center-size weights (sizes 1..=5) under which an i.i.d. 0.33 chance of
/// the superior subgroup reproduces the observed 56:35:9 split of mixed /
/// all-inferior / all-superior High Traffic centers.
pub const SUBGROUP_SIZE_WEIGHTS: [u32; 5] = [964, 5207, 0, 0, 3829];

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::pack_2004(0.1, 20_040_815)
    }
}

impl ScenarioConfig {
    /// The 2004 referendum parameter pack at a machine-count scale.
    ///
    /// Bundles the published regression coefficients, class sizes, NO-share
    /// and abstention moments, receive-offset lines and the 32.6% registry
    /// growth, so one call reconstructs a full country shape.
    pub fn pack_2004(scale: f64, seed: u64) -> Self {
        let n = |count: f64| ((count * scale).round() as usize).max(1);
        let offsets = vec![
            OffsetStep { offset: 0.0, probability: 0.80 },
            OffsetStep { offset: 2_000.0, probability: 0.15 },
            OffsetStep { offset: 4_000.0, probability: 0.05 },
        ];
        let no_offset = vec![OffsetStep { offset: 0.0, probability: 1.0 }];
        let g1 = MachineProfile {
            incoming: DirectionModel::PerVote {
                slope: 47.11,
                intercept: 5_606.0,
                noise_sigma: 300.0,
                offsets: offsets.clone(),
            },
            outgoing: DirectionModel::PerVote {
                slope: 1.28,
                intercept: 5_498.0,
                noise_sigma: 150.0,
                offsets: no_offset.clone(),
            },
        };
        let g2 = MachineProfile {
            incoming: DirectionModel::PerVote {
                slope: 47.11,
                intercept: 15_606.0,
                noise_sigma: 300.0,
                offsets,
            },
            outgoing: DirectionModel::PerVote {
                slope: 1.28,
                intercept: 5_998.0,
                noise_sigma: 150.0,
                offsets: no_offset.clone(),
            },
        };
        let low = MachineProfile {
            incoming: DirectionModel::FixedTally { base: 3_600.0, noise_sigma: 250.0 },
            outgoing: DirectionModel::FixedTally { base: 1_900.0, noise_sigma: 200.0 },
        };
        let cell = MachineProfile {
            incoming: DirectionModel::PerVote {
                slope: 53.25,
                intercept: 8_461.0,
                noise_sigma: 350.0,
                offsets: no_offset.clone(),
            },
            outgoing: DirectionModel::PerVote {
                slope: 1.28,
                intercept: 6_304.0,
                noise_sigma: 200.0,
                offsets: no_offset,
            },
        };
        ScenarioConfig {
            seed,
            poll_close: POLL_CLOSE_2004,
            high_wire: ClassSpec {
                centers: n(1_876.0),
                machines: Some(n(7_535.0)),
                registered_range: (500, 860),
                primary: g1,
                superior: Some((0.33, g2)),
                pattern: None,
                registered_scale: 1.0,
            },
            low_wire: ClassSpec {
                centers: n(1_573.0),
                machines: Some(n(6_702.0)),
                registered_range: (520, 880),
                primary: low,
                superior: None,
                pattern: None,
                registered_scale: 1.0,
            },
            cellular: ClassSpec {
                centers: n(972.0),
                machines: Some(n(4_455.0)),
                registered_range: (300, 550),
                primary: cell,
                superior: None,
                pattern: None,
                registered_scale: 1.0,
            },
            machines_per_center: DEFAULT_SIZE_WEIGHTS.to_vec(),
            cellular_share_in_high: 0.150,
            cellular_share_in_low: 0.153,
            high_share_in_cellular: 0.0023,
            elections: vec![
                ElectionSpec {
                    id: ElectionId::E1998,
                    abstention: PerClass {
                        high: MeanStd::new(35.69, 6.23),
                        low: MeanStd::new(35.05, 7.83),
                        cellular: MeanStd::new(38.32, 8.99),
                    },
                    progov_share: PerClass {
                        high: MeanStd::new(58.36, 9.90),
                        low: MeanStd::new(51.62, 13.84),
                        cellular: MeanStd::new(51.46, 11.80),
                    },
                    progov_option: "CHAVEZ".into(),
                    other_options: vec![
                        ("OPP_1".into(), 0.45),
                        ("OPP_2".into(), 0.30),
                        ("OPP_3".into(), 0.15),
                        ("OPP_4".into(), 0.10),
                    ],
                    null_share: 0.03,
                },
                ElectionSpec {
                    id: ElectionId::E2000,
                    abstention: PerClass {
                        high: MeanStd::new(42.43, 6.70),
                        low: MeanStd::new(43.94, 8.25),
                        cellular: MeanStd::new(42.99, 8.63),
                    },
                    progov_share: PerClass {
                        high: MeanStd::new(64.11, 13.10),
                        low: MeanStd::new(54.55, 18.53),
                        cellular: MeanStd::new(60.39, 13.38),
                    },
                    progov_option: "CHAVEZ".into(),
                    other_options: vec![
                        ("OPP_1".into(), 0.50),
                        ("OPP_2".into(), 0.30),
                        ("OPP_3".into(), 0.20),
                    ],
                    null_share: 0.02,
                },
                ElectionSpec {
                    id: ElectionId::Prr2004,
                    abstention: PerClass {
                        high: MeanStd::new(28.35, 5.45),
                        low: MeanStd::new(29.71, 6.34),
                        cellular: MeanStd::new(28.41, 6.16),
                    },
                    progov_share: PerClass {
                        high: MeanStd::new(62.0384, 14.6481),
                        low: MeanStd::new(51.8259, 19.2504),
                        cellular: MeanStd::new(62.3028, 15.9224),
                    },
                    progov_option: "NO".into(),
                    other_options: Vec::new(),
                    null_share: 0.0,
                },
            ],
            electorate_growth: 1.326,
            abstention_center_loading: 0.785,
            share_center_loading: 0.8,
            share_within_center_fraction: 0.36,
            region: RegionSpec::default(),
            retry_fraction: 0.12,
            retry_max_extra_calls: 2,
            retry_zero_octets: false,
            pre_close_fraction: 0.0,
            calibration: CalibrationSpec {
                overhead_sigma: 100.0,
                injected: BTreeMap::new(),
            },
        }
    }

    /// High Traffic subgroup scenario: center sizes follow the weights that
    /// reproduce the 56:35:9 mixed/inferior/superior center split under a
    /// 0.33 superior-machine probability.
    pub fn subgroup_scenario(seed: u64) -> Self {
        let mut config = ScenarioConfig::pack_2004(1.0, seed);
        config.low_wire.centers = 0;
        config.low_wire.machines = Some(0);
        config.cellular.centers = 0;
        config.cellular.machines = Some(0);
        config.high_wire.machines = None;
        config.machines_per_center = SUBGROUP_SIZE_WEIGHTS.to_vec();
        config.cellular_share_in_high = 0.0;
        config.cellular_share_in_low = 0.0;
        config.high_share_in_cellular = 0.0;
        config.retry_fraction = 0.0;
        config
    }

    /// Low Traffic per-vote pattern scenario: `fraction` of the machines
    /// sit on a 44 bytes/vote received-octet line, the rest in a flat
    /// cloud. Classification bands do not apply here.
    pub fn pattern_scenario(fraction: f64, machines: usize, seed: u64) -> Self {
        let mut config = ScenarioConfig::pack_2004(0.05, seed);
        config.high_wire.centers = 0;
        config.high_wire.machines = Some(0);
        config.cellular.centers = 0;
        config.cellular.machines = Some(0);
        config.low_wire.centers = (machines / 4).max(1);
        config.low_wire.machines = Some(machines);
        config.low_wire.registered_range = (300, 800);
        config.low_wire.pattern = Some(PatternMix {
            fraction,
            profile: MachineProfile {
                incoming: DirectionModel::PerVote {
                    slope: 44.0,
                    intercept: 21_000.0,
                    noise_sigma: 150.0,
                    offsets: vec![OffsetStep { offset: 0.0, probability: 1.0 }],
                },
                outgoing: DirectionModel::FixedTally { base: 1_900.0, noise_sigma: 200.0 },
            },
        });
        config.cellular_share_in_high = 0.0;
        config.cellular_share_in_low = 0.0;
        config.high_share_in_cellular = 0.0;
        config.retry_fraction = 0.0;
        config.elections.retain(|e| e.id == ElectionId::Prr2004);
        config
    }

    fn class_spec(&self, class: TrafficClass) -> &ClassSpec {
        match class {
            TrafficClass::HighWire => &self.high_wire,
            TrafficClass::LowWire => &self.low_wire,
            _ => &self.cellular,
        }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        for (name, value) in [
            ("cellular_share_in_high", self.cellular_share_in_high),
            ("cellular_share_in_low", self.cellular_share_in_low),
            ("high_share_in_cellular", self.high_share_in_cellular),
            ("retry_fraction", self.retry_fraction),
            ("pre_close_fraction", self.pre_close_fraction),
            ("region.block", self.region.block),
            ("abstention_center_loading", self.abstention_center_loading),
            ("share_center_loading", self.share_center_loading),
            ("share_within_center_fraction", self.share_within_center_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(name, "must lie in [0, 1]"));
            }
        }
        let l = self.abstention_center_loading;
        if l * l > 1.0 {
            return Err(invalid("abstention_center_loading", "loading^2 exceeds 1"));
        }
        if self.share_center_loading.powi(2) + self.share_within_center_fraction > 1.0 + 1e-9 {
            return Err(invalid(
                "share_center_loading",
                "loading^2 + within fraction exceeds 1",
            ));
        }
        if self.electorate_growth <= 0.0 {
            return Err(invalid("electorate_growth", "must be positive"));
        }
        if self.machines_per_center.is_empty()
            || self.machines_per_center.iter().all(|&w| w == 0)
        {
            return Err(invalid("machines_per_center", "weights must not all be zero"));
        }
        if !self.elections.iter().any(|e| e.id == ElectionId::Prr2004) {
            return Err(invalid("elections", "the 2004 referendum must be present"));
        }
        for e in &self.elections {
            if !(0.0..1.0).contains(&e.null_share) {
                return Err(invalid("elections.null_share", "must lie in [0, 1)"));
            }
            if e.id == ElectionId::Prr2004 && e.progov_option != "NO" {
                return Err(invalid(
                    "elections.progov_option",
                    "the referendum share must target NO",
                ));
            }
        }
        for (label, class) in [
            ("high_wire", &self.high_wire),
            ("low_wire", &self.low_wire),
            ("cellular", &self.cellular),
        ] {
            let machines = class.machines.unwrap_or(class.centers);
            if class.centers == 0 && machines > 0 {
                return Err(invalid(label, "machines without centers"));
            }
            if let Some(m) = class.machines {
                if m > 0 && m < class.centers {
                    return Err(invalid(label, "fewer machines than centers"));
                }
            }
            if class.centers > 0 {
                let (lo, hi) = class.registered_range;
                if lo == 0 || lo > hi {
                    return Err(invalid(label, "registered_range must satisfy 0 < lo <= hi"));
                }
                class.primary.incoming.validate(label)?;
                class.primary.outgoing.validate(label)?;
                if let Some((p, profile)) = &class.superior {
                    if !(0.0..=1.0).contains(p) {
                        return Err(invalid(label, "superior probability must lie in [0, 1]"));
                    }
                    profile.incoming.validate(label)?;
                    profile.outgoing.validate(label)?;
                }
                if let Some(pattern) = &class.pattern {
                    if !(0.0..=1.0).contains(&pattern.fraction) {
                        return Err(invalid(label, "pattern fraction must lie in [0, 1]"));
                    }
                    pattern.profile.incoming.validate(label)?;
                    pattern.profile.outgoing.validate(label)?;
                }
            }
        }
        if self.calibration.overhead_sigma < 0.0 {
            return Err(invalid("calibration.overhead_sigma", "must be >= 0"));
        }
        Ok(())
    }
}

/// Everything the generator knows about one machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineTruth {
    pub center_id: String,
    pub class: TrafficClass,
    pub subgroup: Option<Subgroup>,
    /// Index of the received-byte offset line the machine fell on
    /// (0 = lowest line).
    pub incoming_offset_index: usize,
    /// Machine drew the per-vote pattern profile of its class mixture.
    pub patterned: bool,
    pub votes_2004: u64,
}

/// Ground truth of a generated scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub machines: BTreeMap<String, MachineTruth>,
    pub centers: BTreeMap<String, TrafficClass>,
}

/// A generated scenario: evidence files plus the truth behind them.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: ScenarioConfig,
    pub records: Vec<TransmissionRecord>,
    pub tallies: Vec<TallySheet>,
    pub centers: Vec<VotingCenter>,
    pub nas_map: NasMap,
    pub truth: GroundTruth,
}

impl SyntheticDataset {
    /// (votes, received octets) of each machine's final 2004 session, for
    /// the per-vote pattern detector.
    pub fn pattern_points(&self) -> Vec<PatternPoint> {
        let votes: BTreeMap<&str, u64> = self
            .tallies
            .iter()
            .filter(|t| t.election_id == ElectionId::Prr2004)
            .map(|t| (t.machine_id.as_str(), t.total_votes))
            .collect();
        let mut finals: BTreeMap<&str, &TransmissionRecord> = BTreeMap::new();
        for r in &self.records {
            finals
                .entry(r.machine_id.as_str())
                .and_modify(|cur| {
                    if (r.session_stop, r.call_index) > (cur.session_stop, cur.call_index) {
                        *cur = r;
                    }
                })
                .or_insert(r);
        }
        finals
            .into_iter()
            .filter_map(|(id, r)| {
                votes.get(id).map(|&v| PatternPoint {
                    machine_id: id.to_string(),
                    votes: v as f64,
                    output_octets: r.output_octets as f64,
                })
            })
            .collect()
    }
}

struct CenterSkeleton {
    center_id: String,
    class: TrafficClass,
    native_size: usize,
    /// Machine slots: (class to generate with, true when relocated here).
    slots: Vec<TrafficClass>,
}

/// Deterministic scenario generation; identical seeds give byte-identical
/// datasets.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<SyntheticDataset, SimulateError> {
    config.validate()?;
    let mut layout_rng = CounterRng::for_label(config.seed, "layout");
    let mut skeletons = Vec::new();

    // Native machine slots per center.
    for class in [TrafficClass::HighWire, TrafficClass::LowWire, TrafficClass::Cellular] {
        let spec = config.class_spec(class);
        if spec.centers == 0 {
            continue;
        }
        let mut sizes: Vec<usize> = (0..spec.centers)
            .map(|_| layout_rng.weighted_index(&config.machines_per_center) + 1)
            .collect();
        if let Some(target) = spec.machines {
            balance_sizes(&mut sizes, target, config.machines_per_center.len());
        }
        for size in sizes {
            let center_id = format!("VC{:05}", skeletons.len() + 1);
            skeletons.push(CenterSkeleton {
                center_id,
                class,
                native_size: size,
                slots: vec![class; size],
            });
        }
    }

    // Relocations: cellular machines into wire centers and High Traffic
    // machines into cellular centers, never outnumbering the natives.
    let cellular_total: usize = skeletons
        .iter()
        .filter(|s| s.class == TrafficClass::Cellular)
        .map(|s| s.native_size)
        .sum();
    let high_total: usize = skeletons
        .iter()
        .filter(|s| s.class == TrafficClass::HighWire)
        .map(|s| s.native_size)
        .sum();
    let moves = [
        (TrafficClass::Cellular, TrafficClass::HighWire,
         (config.cellular_share_in_high * cellular_total as f64).round() as usize),
        (TrafficClass::Cellular, TrafficClass::LowWire,
         (config.cellular_share_in_low * cellular_total as f64).round() as usize),
        (TrafficClass::HighWire, TrafficClass::Cellular,
         (config.high_share_in_cellular * high_total as f64).round() as usize),
    ];
    for (machine_class, dest_class, count) in moves {
        relocate(&mut skeletons, machine_class, dest_class, count, &mut layout_rng);
    }

    // Regional blocking: municipalities are runs of same-class centers.
    let regions = assign_regions(&skeletons, &config.region, config.seed);

    let mut dataset = SyntheticDataset {
        config: config.clone(),
        records: Vec::new(),
        tallies: Vec::new(),
        centers: Vec::new(),
        nas_map: default_nas_map(),
        truth: GroundTruth::default(),
    };

    let election_order = {
        let mut elections = config.elections.clone();
        elections.sort_by_key(|e| e.id);
        elections
    };

    let mut machine_seq = 0usize;
    for skeleton in &skeletons {
        let (parish, municipality, state) = regions[&skeleton.center_id].clone();
        let mut center_rng = CounterRng::for_label(config.seed, &skeleton.center_id);
        let z_share = center_rng.standard_normal();
        let z_abst = center_rng.standard_normal();
        // Per-(center, election) abstention residuals.
        let mut abstention_eps = BTreeMap::new();
        for e in &election_order {
            abstention_eps.insert(e.id, center_rng.standard_normal());
        }
        let mut machine_ids = Vec::new();
        for &slot_class in &skeleton.slots {
            machine_seq += 1;
            let machine_id = format!("M{machine_seq:05}");
            machine_ids.push(machine_id.clone());
            generate_machine(
                config,
                &election_order,
                skeleton,
                slot_class,
                &machine_id,
                z_share,
                z_abst,
                &abstention_eps,
                &mut center_rng,
                &mut dataset,
            );
        }
        dataset.centers.push(VotingCenter {
            center_id: skeleton.center_id.clone(),
            parish,
            municipality,
            state,
            machine_ids,
        });
        dataset
            .truth
            .centers
            .insert(skeleton.center_id.clone(), skeleton.class);
    }
    Ok(dataset)
}

/// Adjusts drawn center sizes until they sum to `target`, round-robin and
/// bounded by [1, max_size].
fn balance_sizes(sizes: &mut [usize], target: usize, max_size: usize) {
    let mut total: usize = sizes.iter().sum();
    let mut i = 0;
    while total < target {
        if sizes[i % sizes.len()] < max_size {
            sizes[i % sizes.len()] += 1;
            total += 1;
        }
        i += 1;
    }
    while total > target {
        if sizes[i % sizes.len()] > 1 {
            sizes[i % sizes.len()] -= 1;
            total -= 1;
        }
        i += 1;
    }
}

/// Moves `count` machine slots of `machine_class` out of their native
/// centers into centers of `dest_class`, keeping natives in strict
/// majority everywhere.
fn relocate(
    skeletons: &mut [CenterSkeleton],
    machine_class: TrafficClass,
    dest_class: TrafficClass,
    count: usize,
    rng: &mut CounterRng,
) {
    if count == 0 {
        return;
    }
    let mut moved = 0usize;
    // Shrink donors round-robin, largest centers first so none empties.
    let mut donors: Vec<usize> = (0..skeletons.len())
        .filter(|&i| skeletons[i].class == machine_class)
        .collect();
    donors.sort_by_key(|&i| std::cmp::Reverse(skeletons[i].slots.len()));
    let mut donor_pos = 0usize;
    let dest: Vec<usize> = (0..skeletons.len())
        .filter(|&i| skeletons[i].class == dest_class && skeletons[i].native_size >= 2)
        .collect();
    if donors.is_empty() || dest.is_empty() {
        return;
    }
    let mut extra: BTreeMap<usize, usize> = BTreeMap::new();
    while moved < count {
        // Take one native slot from the next donor with more than one left.
        let mut found = None;
        for _ in 0..donors.len() {
            let d = donors[donor_pos % donors.len()];
            donor_pos += 1;
            if skeletons[d].slots.len() > 1 {
                found = Some(d);
                break;
            }
        }
        let Some(d) = found else { break };
        skeletons[d].slots.pop();
        // Drop it into a destination with foreign headroom.
        let mut placed = false;
        for _ in 0..dest.len() * 2 {
            let t = dest[rng.below(dest.len() as u64) as usize];
            let used = extra.get(&t).copied().unwrap_or(0);
            if used + 1 < skeletons[t].native_size {
                skeletons[t].slots.push(machine_class);
                *extra.entry(t).or_default() += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            // No headroom anywhere; put the slot back and stop.
            skeletons[d].slots.push(machine_class);
            break;
        }
        moved += 1;
    }
}

fn assign_regions(
    skeletons: &[CenterSkeleton],
    region: &RegionSpec,
    seed: u64,
) -> BTreeMap<String, (String, String, String)> {
    let mut rng = CounterRng::new(seed, fnv1a64(b"regions"));
    // Municipalities as runs of same-class centers, in center order.
    let mut runs: Vec<Vec<&CenterSkeleton>> = Vec::new();
    for class in [TrafficClass::HighWire, TrafficClass::LowWire, TrafficClass::Cellular] {
        let of_class: Vec<&CenterSkeleton> =
            skeletons.iter().filter(|s| s.class == class).collect();
        for chunk in of_class.chunks(region.centers_per_municipality.max(1)) {
            runs.push(chunk.to_vec());
        }
    }
    let mut out = BTreeMap::new();
    let parishes = region.parishes_per_municipality.max(1);
    for (mu_idx, run) in runs.iter().enumerate() {
        let state_idx = mu_idx / region.municipalities_per_state.max(1);
        let state = format!("ST{:02}", state_idx + 1);
        let municipality = format!("{}-MU{:03}", state, mu_idx + 1);
        for (ci, skeleton) in run.iter().enumerate() {
            let parish = format!("{}-P{:02}", municipality, ci % parishes + 1);
            out.insert(
                skeleton.center_id.clone(),
                (parish, municipality.clone(), state.clone()),
            );
        }
    }
    // Partial blocking: some centers swap into a random other municipality.
    if region.block < 1.0 {
        let all_regions: Vec<(String, String, String)> = out.values().cloned().collect();
        let ids: Vec<String> = out.keys().cloned().collect();
        for id in ids {
            if !rng.bernoulli(region.block) {
                let pick = all_regions[rng.below(all_regions.len() as u64) as usize].clone();
                out.insert(id, pick);
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn generate_machine(
    config: &ScenarioConfig,
    elections: &[ElectionSpec],
    skeleton: &CenterSkeleton,
    slot_class: TrafficClass,
    machine_id: &str,
    z_share: f64,
    z_abst: f64,
    abstention_eps: &BTreeMap<ElectionId, f64>,
    rng: &mut CounterRng,
    dataset: &mut SyntheticDataset,
) {
    let spec = config.class_spec(slot_class);
    let (lo, hi) = spec.registered_range;
    let scaled = |v: u64| ((v as f64) * spec.registered_scale).round() as u64;
    let registered_2004 = scaled(rng.range_u64(lo, hi)).max(1);

    // Subgroup / pattern membership.
    let mut subgroup = None;
    let mut patterned = false;
    let profile = if let Some((p_superior, superior)) = &spec.superior {
        if rng.bernoulli(*p_superior) {
            subgroup = Some(Subgroup::G2);
            superior
        } else {
            subgroup = Some(Subgroup::G1);
            &spec.primary
        }
    } else if let Some(pattern) = &spec.pattern {
        if rng.bernoulli(pattern.fraction) {
            patterned = true;
            &pattern.profile
        } else {
            &spec.primary
        }
    } else {
        &spec.primary
    };

    // Tallies per election.
    let share_lambda = config.share_center_loading;
    let share_within = config.share_within_center_fraction.sqrt();
    let share_between_resid =
        (1.0 - share_lambda * share_lambda - share_within * share_within).max(0.0).sqrt();
    let abst_lambda = config.abstention_center_loading;
    let abst_resid = (1.0 - abst_lambda * abst_lambda).max(0.0).sqrt();
    let mut votes_2004 = 0u64;
    for election in elections {
        let registered = if election.id == ElectionId::Prr2004 {
            registered_2004
        } else {
            ((registered_2004 as f64) / config.electorate_growth).round().max(1.0) as u64
        };
        let abst_model = election.abstention.get(slot_class);
        let abstention = (abst_model.mean
            + abst_model.std * (abst_lambda * z_abst + abst_resid * abstention_eps[&election.id]))
            .clamp(2.0, 90.0);
        let total = ((registered as f64) * (1.0 - abstention / 100.0)).round() as u64;
        let total = total.min(registered).max(1);

        let share_model = election.progov_share.get(slot_class);
        let machine_eps = rng.standard_normal();
        let center_eps = rng.standard_normal();
        let share = (share_model.mean
            + share_model.std
                * (share_lambda * z_share
                    + share_between_resid * center_eps
                    + share_within * machine_eps))
            .clamp(1.0, 99.0);

        let sheet = if election.id == ElectionId::Prr2004 {
            votes_2004 = total;
            let no = ((total as f64) * share / 100.0).round() as u64;
            let no = no.min(total);
            TallySheet {
                machine_id: machine_id.to_string(),
                center_id: skeleton.center_id.clone(),
                registered_voters: registered,
                yes_votes: total - no,
                no_votes: no,
                null_votes: 0,
                total_votes: total,
                election_id: election.id,
                candidate_votes: BTreeMap::new(),
            }
        } else {
            let null = ((total as f64) * election.null_share).round() as u64;
            let null = null.min(total.saturating_sub(1));
            let valid = total - null;
            let progov = (((valid as f64) * share / 100.0).round() as u64).min(valid);
            let mut remainder = valid - progov;
            let mut candidate_votes = BTreeMap::new();
            candidate_votes.insert(election.progov_option.clone(), progov);
            let weight_total: f64 = election.other_options.iter().map(|(_, w)| w).sum();
            for (i, (name, weight)) in election.other_options.iter().enumerate() {
                let count = if i + 1 == election.other_options.len() {
                    remainder
                } else {
                    ((valid.saturating_sub(progov) as f64) * weight / weight_total).round()
                        as u64
                };
                let count = count.min(remainder);
                remainder -= count;
                candidate_votes.insert(name.clone(), count);
            }
            TallySheet {
                machine_id: machine_id.to_string(),
                center_id: skeleton.center_id.clone(),
                registered_voters: registered,
                yes_votes: 0,
                no_votes: 0,
                null_votes: null + remainder,
                total_votes: total,
                election_id: election.id,
                candidate_votes,
            }
        };
        dataset.tallies.push(sheet);
    }

    // 2004 transmissions.
    let medium = if slot_class == TrafficClass::Cellular {
        Medium::Cellular
    } else {
        Medium::Wire
    };
    let votes = votes_2004 as f64;
    let (output_octets, incoming_offset_index) = profile.incoming.sample(votes, rng);
    let (input_octets, _) = profile.outgoing.sample(votes, rng);

    let pre_close = config.pre_close_fraction > 0.0 && rng.bernoulli(config.pre_close_fraction);
    let final_start = if pre_close {
        config.poll_close - rng.range_u64(60, 3_600) as i64
    } else {
        config.poll_close + rng.range_u64(300, 14_400) as i64
    };
    let total_octets = input_octets + output_octets;
    let final_duration = (60 + total_octets / 256).min(3_600) as i64;

    let retries = if config.retry_fraction > 0.0 && rng.bernoulli(config.retry_fraction) {
        rng.range_u64(1, config.retry_max_extra_calls.max(1) as u64) as u32
    } else {
        0
    };
    let cause = match slot_class {
        TrafficClass::LowWire => TerminateCause::MachineRequest,
        _ => TerminateCause::ServerRequest,
    };
    let packets = |octets: u64, per_packet: u64| octets / per_packet + 1;
    let (in_per_pkt, out_per_pkt) = match slot_class {
        // Asymmetric traffic: few packets sent, many received.
        TrafficClass::LowWire => (475, 60),
        _ => (520, 520),
    };

    let mut calls = Vec::new();
    for k in 0..retries {
        let gap = rng.range_u64(300, 1_200) as i64;
        let start = final_start - (retries - k) as i64 * gap;
        let frac = rng.range_u64(10, 60) as f64 / 100.0;
        let (r_in, r_out) = if config.retry_zero_octets {
            (0, 0)
        } else {
            (
                ((input_octets as f64) * frac) as u64,
                ((output_octets as f64) * frac) as u64,
            )
        };
        let duration = (30 + (r_in + r_out) / 256).min(1_800) as i64;
        calls.push(TransmissionRecord {
            machine_id: machine_id.to_string(),
            center_id: skeleton.center_id.clone(),
            medium,
            session_start: start,
            session_stop: start + duration,
            input_octets: r_in,
            output_octets: r_out,
            input_packets: packets(r_in, in_per_pkt),
            output_packets: packets(r_out, out_per_pkt),
            terminate_cause: TerminateCause::Error,
            call_index: k + 1,
        });
    }
    calls.push(TransmissionRecord {
        machine_id: machine_id.to_string(),
        center_id: skeleton.center_id.clone(),
        medium,
        session_start: final_start,
        session_stop: final_start + final_duration,
        input_octets,
        output_octets,
        input_packets: packets(input_octets, in_per_pkt),
        output_packets: packets(output_octets, out_per_pkt),
        terminate_cause: cause,
        call_index: retries + 1,
    });
    dataset.records.extend(calls);

    dataset.truth.machines.insert(
        machine_id.to_string(),
        MachineTruth {
            center_id: skeleton.center_id.clone(),
            class: slot_class,
            subgroup,
            incoming_offset_index,
            patterned,
            votes_2004,
        },
    );
}

/// Address pools of the two access networks.
pub fn default_nas_map() -> NasMap {
    let mut entries = BTreeMap::new();
    for i in 1..=8 {
        entries.insert(format!("10.1.0.{i}"), Medium::Wire);
    }
    for i in 1..=4 {
        entries.insert(format!("10.2.0.{i}"), Medium::Cellular);
    }
    NasMap::new(entries)
}

/// Deterministic NAS address for a machine, drawn from its medium's pool.
fn nas_address(nas_map: &NasMap, medium: Medium, machine_id: &str) -> String {
    let pool = nas_map.addresses_for(medium);
    debug_assert!(!pool.is_empty());
    pool[(fnv1a64(machine_id.as_bytes()) % pool.len() as u64) as usize].to_string()
}

fn calling_station(machine_id: &str) -> String {
    let h = fnv1a64(machine_id.as_bytes());
    format!("0{}-{:07}", 200 + (h % 100), h % 10_000_000)
}

/// Writes records as an accounting detail stream; the exact format
/// [`crate::ingest::parse_radius_detail`] consumes. Records of one machine
/// must appear in call order for the parse to reproduce call indices.
pub fn write_radius_detail(
    records: &[TransmissionRecord],
    nas_map: &NasMap,
    mut w: impl Write,
) -> std::io::Result<()> {
    for r in records {
        let stamp = Utc
            .timestamp_opt(r.session_stop, 0)
            .single()
            .expect("valid epoch second")
            .to_rfc3339_opts(SecondsFormat::Secs, true);
        writeln!(w, "{stamp}")?;
        writeln!(w, "\tUser-Name = \"{}@{}\"", r.machine_id, r.center_id)?;
        writeln!(
            w,
            "\tNAS-IP-Address = {}",
            nas_address(nas_map, r.medium, &r.machine_id)
        )?;
        writeln!(w, "\tAcct-Session-Time = {}", r.duration_secs())?;
        writeln!(w, "\tAcct-Input-Octets = {}", r.input_octets)?;
        writeln!(w, "\tAcct-Output-Octets = {}", r.output_octets)?;
        writeln!(w, "\tAcct-Input-Packets = {}", r.input_packets)?;
        writeln!(w, "\tAcct-Output-Packets = {}", r.output_packets)?;
        writeln!(
            w,
            "\tAcct-Terminate-Cause = {}",
            terminate_cause_name(r.terminate_cause)
        )?;
        writeln!(w, "\tCalling-Station-Id = \"{}\"", calling_station(&r.machine_id))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Writes tallies as the CSV [`crate::ingest::parse_tally_csv`] consumes.
/// Candidate columns are the sorted union over the rows; mixing elections
/// with different option sets in one file breaks the round trip, so the
/// CLI writes one file per election.
pub fn write_tally_csv(sheets: &[TallySheet], mut w: impl Write) -> std::io::Result<()> {
    let mut options: Vec<String> = Vec::new();
    for s in sheets {
        for name in s.candidate_votes.keys() {
            if !options.contains(name) {
                options.push(name.clone());
            }
        }
    }
    options.sort();
    write!(w, "machine_id,center_id,registered,yes,no,null,total,election_id")?;
    for o in &options {
        write!(w, ",{o}")?;
    }
    writeln!(w)?;
    for s in sheets {
        write!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.machine_id,
            s.center_id,
            s.registered_voters,
            s.yes_votes,
            s.no_votes,
            s.null_votes,
            s.total_votes,
            s.election_id
        )?;
        for o in &options {
            write!(w, ",{}", s.candidate_votes.get(o).copied().unwrap_or(0))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes the center registry CSV.
pub fn write_registry_csv(centers: &[VotingCenter], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "center_id,parish,municipality,state")?;
    for c in centers {
        writeln!(w, "{},{},{},{}", c.center_id, c.parish, c.municipality, c.state)?;
    }
    Ok(())
}

/// Writes the `nas_ip,medium` mapping CSV.
pub fn write_nas_map_csv(nas_map: &NasMap, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "nas_ip,medium")?;
    for (ip, medium) in nas_map.iter() {
        let m = match medium {
            Medium::Wire => "wire",
            Medium::Cellular => "cellular",
        };
        writeln!(w, "{ip},{m}")?;
    }
    Ok(())
}

/// Per-machine outcome of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub machine_id: String,
    pub class: TrafficClass,
    pub mean_octets: f64,
    pub overhead: f64,
    pub flagged: bool,
}

/// Fleet-wide calibration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub file_size: u64,
    pub repetitions: u32,
    pub fleet_median_overhead: f64,
    pub fleet_std_overhead: f64,
    pub machines: Vec<CalibrationEntry>,
}

/// Simulates repeatedly transmitting a test file of known size from every
/// machine, estimating each machine's protocol overhead as
/// `mean(octets) - file_size` and flagging machines more than three fleet
/// standard deviations away from the fleet median.
pub fn calibration_run(
    config: &ScenarioConfig,
    file_size: u64,
    repetitions: u32,
) -> Result<CalibrationReport, SimulateError> {
    config.validate()?;
    if repetitions == 0 {
        return Err(invalid("repetitions", "must be at least 1"));
    }
    let dataset_shape = generate_scenario(config)?;
    let mut machines = Vec::new();
    for (machine_id, truth) in &dataset_shape.truth.machines {
        let spec = config.class_spec(truth.class);
        let base_overhead = match &spec.primary.outgoing {
            DirectionModel::PerVote { intercept, .. } => *intercept,
            DirectionModel::FixedTally { base, .. } => *base,
        };
        let injected = config
            .calibration
            .injected
            .get(machine_id)
            .copied()
            .unwrap_or(0.0);
        let mut rng = CounterRng::for_label(config.seed, &format!("calibration/{machine_id}"));
        let mut sum = 0.0;
        for _ in 0..repetitions {
            let octets = file_size as f64
                + base_overhead
                + injected
                + rng.normal(0.0, config.calibration.overhead_sigma);
            sum += octets.max(0.0);
        }
        let mean_octets = sum / repetitions as f64;
        machines.push(CalibrationEntry {
            machine_id: machine_id.clone(),
            class: truth.class,
            mean_octets,
            overhead: mean_octets - file_size as f64,
            flagged: false,
        });
    }
    let mut overheads: Vec<f64> = machines.iter().map(|m| m.overhead).collect();
    overheads.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = crate::stats::quantile_sorted(&overheads, 0.5);
    let mean = overheads.iter().sum::<f64>() / overheads.len() as f64;
    let std = if overheads.len() > 1 {
        (overheads.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>()
            / (overheads.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    if std > 0.0 {
        for m in &mut machines {
            m.flagged = (m.overhead - median).abs() > 3.0 * std;
        }
    }
    Ok(CalibrationReport {
        file_size,
        repetitions,
        fleet_median_overhead: median,
        fleet_std_overhead: std,
        machines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(seed: u64) -> ScenarioConfig {
        ScenarioConfig::pack_2004(0.01, seed)
    }

    #[test]
    fn determinism_same_seed() {
        let config = tiny_config(77);
        let a = generate_scenario(&config).unwrap();
        let b = generate_scenario(&config).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.tallies, b.tallies);
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn different_seed_differs() {
        let a = generate_scenario(&tiny_config(1)).unwrap();
        let b = generate_scenario(&tiny_config(2)).unwrap();
        assert_ne!(a.records, b.records);
    }

    #[test]
    fn class_budgets_respected() {
        let config = tiny_config(5);
        let dataset = generate_scenario(&config).unwrap();
        let count = |class: TrafficClass| {
            dataset
                .truth
                .machines
                .values()
                .filter(|t| t.class == class)
                .count()
        };
        assert_eq!(count(TrafficClass::HighWire), config.high_wire.machines.unwrap());
        assert_eq!(count(TrafficClass::LowWire), config.low_wire.machines.unwrap());
        assert_eq!(count(TrafficClass::Cellular), config.cellular.machines.unwrap());
        let total_centers = config.high_wire.centers + config.low_wire.centers
            + config.cellular.centers;
        assert_eq!(dataset.centers.len(), total_centers);
    }

    #[test]
    fn tallies_are_consistent_and_linked() {
        let dataset = generate_scenario(&tiny_config(9)).unwrap();
        assert!(!dataset.tallies.is_empty());
        for t in &dataset.tallies {
            assert!(t.total_consistent(), "machine {} election {}", t.machine_id, t.election_id);
            assert!(t.total_votes <= t.registered_voters);
        }
        // Every machine has one tally per election.
        let machines = dataset.truth.machines.len();
        assert_eq!(dataset.tallies.len(), machines * 3);
    }

    #[test]
    fn final_call_has_highest_index_and_latest_stop() {
        let mut config = tiny_config(13);
        config.retry_fraction = 0.5;
        let dataset = generate_scenario(&config).unwrap();
        let mut by_machine: BTreeMap<&str, Vec<&TransmissionRecord>> = BTreeMap::new();
        for r in &dataset.records {
            by_machine.entry(r.machine_id.as_str()).or_default().push(r);
        }
        let mut saw_retry = false;
        for recs in by_machine.values() {
            if recs.len() > 1 {
                saw_retry = true;
            }
            let last = recs.iter().max_by_key(|r| r.call_index).unwrap();
            for r in recs.iter() {
                if r.call_index != last.call_index {
                    assert!(r.session_stop < last.session_stop);
                    assert_eq!(r.terminate_cause, TerminateCause::Error);
                }
            }
            // Indices are 1..=k in file order.
            for (i, r) in recs.iter().enumerate() {
                assert_eq!(r.call_index as usize, i + 1);
            }
        }
        assert!(saw_retry);
    }

    #[test]
    fn sessions_start_after_poll_close_by_default() {
        let config = tiny_config(21);
        let dataset = generate_scenario(&config).unwrap();
        for r in &dataset.records {
            assert!(r.session_stop >= r.session_start);
        }
        // Final sessions never precede the close when no anomaly is injected.
        let mut finals: BTreeMap<&str, &TransmissionRecord> = BTreeMap::new();
        for r in &dataset.records {
            finals
                .entry(r.machine_id.as_str())
                .and_modify(|cur| {
                    if r.call_index > cur.call_index {
                        *cur = r;
                    }
                })
                .or_insert(r);
        }
        for r in finals.values() {
            assert!(r.session_start >= config.poll_close);
        }
    }

    #[test]
    fn pre_close_injection_creates_anomalies() {
        let mut config = tiny_config(23);
        config.pre_close_fraction = 0.3;
        config.retry_fraction = 0.0;
        let dataset = generate_scenario(&config).unwrap();
        let before = dataset
            .records
            .iter()
            .filter(|r| r.session_start < config.poll_close)
            .count();
        assert!(before > 0);
    }

    #[test]
    fn subgroup_scenario_share_shape() {
        let dataset = generate_scenario(&ScenarioConfig::subgroup_scenario(31)).unwrap();
        let with_subgroup = dataset
            .truth
            .machines
            .values()
            .filter(|t| t.subgroup.is_some())
            .count();
        assert_eq!(with_subgroup, dataset.truth.machines.len());
        // Center sizes come from the subgroup profile: only 1, 2 or 5.
        for c in &dataset.centers {
            assert!(matches!(c.machine_ids.len(), 1 | 2 | 5));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut config = tiny_config(1);
        config.retry_fraction = 1.5;
        assert!(matches!(
            generate_scenario(&config),
            Err(SimulateError::InvalidConfig { .. })
        ));

        let mut config = tiny_config(1);
        config.elections.retain(|e| e.id != ElectionId::Prr2004);
        assert!(generate_scenario(&config).is_err());

        let mut config = tiny_config(1);
        config.high_wire.registered_range = (100, 50);
        assert!(generate_scenario(&config).is_err());
    }

    #[test]
    fn calibration_zero_noise_no_flags() {
        let mut config = tiny_config(41);
        config.calibration.overhead_sigma = 0.0;
        let report = calibration_run(&config, 50_000, 3).unwrap();
        assert!(report.machines.iter().all(|m| !m.flagged));
        // Zero noise: every machine of one class reports the identical
        // overhead.
        let low: Vec<f64> = report
            .machines
            .iter()
            .filter(|m| m.class == TrafficClass::LowWire)
            .map(|m| m.overhead)
            .collect();
        assert!(low.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn calibration_flags_injected_outlier() {
        let mut config = tiny_config(43);
        config.calibration.overhead_sigma = 100.0;
        let target = "M00007".to_string();
        config.calibration.injected.insert(target.clone(), 10_000.0);
        let report = calibration_run(&config, 50_000, 5).unwrap();
        let flagged: Vec<&str> = report
            .machines
            .iter()
            .filter(|m| m.flagged)
            .map(|m| m.machine_id.as_str())
            .collect();
        assert_eq!(flagged, vec![target.as_str()]);
    }

    #[test]
    fn calibration_zero_file_size() {
        let mut config = tiny_config(47);
        config.calibration.overhead_sigma = 0.0;
        let report = calibration_run(&config, 0, 1).unwrap();
        for m in &report.machines {
            assert_eq!(m.overhead, m.mean_octets);
        }
    }
}
