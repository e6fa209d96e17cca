//! Machine and center taxonomy: final-session selection, traffic-volume
//! classes A/B/C, the G1/G2 received-byte subgroups of High Traffic
//! machines, per-vote pattern detection, regional composition, and the
//! mixed-center proportions test.
//!
//! Every operation here is a pure function over immutable inputs; drivers
//! sort their output by id so results never depend on evaluation order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Medium, TestResult, TrafficClass, TransmissionRecord, VotingCenter};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("machine has no sessions")]
    NoSessions,
    #[error("subgroup split degenerate: cluster means differ by {gap:.1} bytes (< {min:.1})")]
    Degenerate { gap: f64, min: f64 },
    #[error("no centers supplied")]
    EmptyInput,
    #[error("expected count for the {0} category is zero but it was observed")]
    DegenerateExpected(&'static str),
    #[error("need at least {needed} machines, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("center {0} missing from the registry")]
    UnknownCenter(String),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

/// Octet thresholds of the wire traffic bands, total (sent + received)
/// octets of the final session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyThresholds {
    pub high_min: u64,
    pub high_max: u64,
    pub low_min: u64,
    pub low_max: u64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            high_min: 23_000,
            high_max: 63_000,
            low_min: 1_500,
            low_max: 7_500,
        }
    }
}

/// Why a wire machine fell outside both traffic bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnclassifiedReason {
    BelowLowBand,
    BetweenBands,
    AboveHighBand,
}

/// Received-byte subgroup of a High Traffic machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subgroup {
    /// Inferior cloud, received bytes around 27,000.
    G1,
    /// Superior cloud, received bytes around 37,000.
    G2,
}

impl Subgroup {
    pub fn as_str(self) -> &'static str {
        match self {
            Subgroup::G1 => "G1",
            Subgroup::G2 => "G2",
        }
    }
}

/// Classification of one machine from its final session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineClassification {
    pub machine_id: String,
    pub final_session: TransmissionRecord,
    pub traffic_class: TrafficClass,
    /// Present only for High Traffic wire machines once subgroups are split.
    pub subgroup: Option<Subgroup>,
    pub total_octets: u64,
    pub unclassified_reason: Option<UnclassifiedReason>,
}

/// Center anomaly flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CenterFlag {
    /// Both High and Low Traffic wire machines present; the source data
    /// never exhibited this, so it marks an anomaly.
    MixedAB,
    AllUnclassified,
}

/// Classification of one center from its member machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterClassification {
    pub center_id: String,
    pub center_class: TrafficClass,
    /// Member machine counts per class: (high, low, cellular, unclassified).
    pub composition: [usize; 4],
    pub flags: BTreeSet<CenterFlag>,
}

/// The last successful connection: maximal `session_stop`, ties broken by
/// maximal `call_index`, then by input order (last occurrence wins).
pub fn select_final_session(
    records: &[TransmissionRecord],
) -> Result<TransmissionRecord, ClassifyError> {
    records
        .iter()
        .enumerate()
        .max_by_key(|(pos, r)| (r.session_stop, r.call_index, *pos))
        .map(|(_, r)| r.clone())
        .ok_or(ClassifyError::NoSessions)
}

/// Class of a machine given its final session: Cellular by medium, else by
/// total octets against the wire bands. Totals in the gap between bands or
/// above the high band stay `Unclassified` so they cannot contaminate the
/// group statistics.
pub fn classify_machine(
    final_session: &TransmissionRecord,
    thresholds: &ClassifyThresholds,
) -> (TrafficClass, Option<UnclassifiedReason>) {
    if final_session.medium == Medium::Cellular {
        return (TrafficClass::Cellular, None);
    }
    let total = final_session.total_octets();
    if (thresholds.high_min..=thresholds.high_max).contains(&total) {
        (TrafficClass::HighWire, None)
    } else if (thresholds.low_min..=thresholds.low_max).contains(&total) {
        (TrafficClass::LowWire, None)
    } else if total < thresholds.low_min {
        (TrafficClass::Unclassified, Some(UnclassifiedReason::BelowLowBand))
    } else if total > thresholds.high_max {
        (TrafficClass::Unclassified, Some(UnclassifiedReason::AboveHighBand))
    } else {
        (TrafficClass::Unclassified, Some(UnclassifiedReason::BetweenBands))
    }
}

/// Groups records by machine, selects final sessions and classifies each
/// machine. Output is sorted by machine id. Subgroups are left unset; call
/// [`assign_subgroups`] afterwards.
pub fn classify_machines(
    records: &[TransmissionRecord],
    thresholds: &ClassifyThresholds,
) -> Result<Vec<MachineClassification>, ClassifyError> {
    let mut by_machine: BTreeMap<&str, Vec<&TransmissionRecord>> = BTreeMap::new();
    for r in records {
        by_machine.entry(&r.machine_id).or_default().push(r);
    }
    let mut out = Vec::with_capacity(by_machine.len());
    for (machine_id, recs) in by_machine {
        let owned: Vec<TransmissionRecord> = recs.into_iter().cloned().collect();
        let final_session = select_final_session(&owned)?;
        let (traffic_class, unclassified_reason) =
            classify_machine(&final_session, thresholds);
        out.push(MachineClassification {
            machine_id: machine_id.to_string(),
            total_octets: final_session.total_octets(),
            final_session,
            traffic_class,
            subgroup: None,
            unclassified_reason,
        });
    }
    Ok(out)
}

/// Plurality class of a center's machines.
///
/// Ties prefer wire classes over Cellular and High over Low; `Unclassified`
/// wins only when no machine was classified, raising `AllUnclassified`.
/// `MixedAB` is raised whenever both wire bands appear together.
pub fn classify_center(
    center_id: &str,
    members: &[MachineClassification],
) -> Result<CenterClassification, ClassifyError> {
    if members.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    let mut composition = [0usize; 4];
    for m in members {
        let idx = match m.traffic_class {
            TrafficClass::HighWire => 0,
            TrafficClass::LowWire => 1,
            TrafficClass::Cellular => 2,
            TrafficClass::Unclassified => 3,
        };
        composition[idx] += 1;
    }
    let mut flags = BTreeSet::new();
    if composition[0] > 0 && composition[1] > 0 {
        flags.insert(CenterFlag::MixedAB);
    }
    // Tie-break order: High over Low over Cellular.
    let ordered = [
        (TrafficClass::HighWire, composition[0]),
        (TrafficClass::LowWire, composition[1]),
        (TrafficClass::Cellular, composition[2]),
    ];
    let center_class = match ordered.iter().filter(|(_, c)| *c > 0).max_by_key(|(_, c)| *c) {
        Some(&(class, count)) => {
            // max_by_key returns the last maximum; scan in preference order
            // to make ties deterministic.
            ordered
                .iter()
                .find(|(_, c)| *c == count)
                .map(|&(cl, _)| cl)
                .unwrap_or(class)
        }
        None => {
            flags.insert(CenterFlag::AllUnclassified);
            TrafficClass::Unclassified
        }
    };
    Ok(CenterClassification {
        center_id: center_id.to_string(),
        center_class,
        composition,
        flags,
    })
}

/// Classifies every center appearing among the machines' final sessions.
/// Output sorted by center id.
pub fn classify_centers(
    machines: &[MachineClassification],
) -> Result<Vec<CenterClassification>, ClassifyError> {
    let mut by_center: BTreeMap<&str, Vec<&MachineClassification>> = BTreeMap::new();
    for m in machines {
        by_center
            .entry(&m.final_session.center_id)
            .or_default()
            .push(m);
    }
    by_center
        .into_iter()
        .map(|(cid, members)| {
            let owned: Vec<MachineClassification> = members.into_iter().cloned().collect();
            classify_center(cid, &owned)
        })
        .collect()
}

/// Result of the two-cluster split of High Traffic received bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSplit {
    pub labels: BTreeMap<String, Subgroup>,
    pub g1_mean: f64,
    pub g2_mean: f64,
    pub g1_count: usize,
    pub g2_count: usize,
}

/// Default deterministic initial centers for the subgroup split, bytes.
pub const SUBGROUP_INIT_CENTERS: (f64, f64) = (27_000.0, 37_000.0);
/// Splits closer than this gap are reported degenerate.
pub const SUBGROUP_MIN_GAP: f64 = 1_000.0;

/// Two-means split of High Traffic machines by received bytes
/// (`output_octets` of the final session), deterministic initial centers
/// at 27,000 and 37,000 bytes.
pub fn split_high_subgroups(
    machines: &[MachineClassification],
) -> Result<SubgroupSplit, ClassifyError> {
    split_high_subgroups_with_centers(machines, SUBGROUP_INIT_CENTERS)
}

/// Same as [`split_high_subgroups`] but with caller-chosen initial centers;
/// shifting all values and both centers by a constant yields identical
/// labels.
pub fn split_high_subgroups_with_centers(
    machines: &[MachineClassification],
    init: (f64, f64),
) -> Result<SubgroupSplit, ClassifyError> {
    let values: Vec<(&str, f64)> = machines
        .iter()
        .filter(|m| m.traffic_class == TrafficClass::HighWire)
        .map(|m| (m.machine_id.as_str(), m.final_session.output_octets as f64))
        .collect();
    if values.len() < 2 {
        return Err(ClassifyError::TooFewPoints {
            needed: 2,
            got: values.len(),
        });
    }
    let (mut c1, mut c2) = (init.0.min(init.1), init.0.max(init.1));
    let mut assignment = vec![false; values.len()]; // true = upper cluster
    for _ in 0..200 {
        let mut changed = false;
        for (i, &(_, v)) in values.iter().enumerate() {
            // Ties to the lower cluster for determinism.
            let upper = (v - c2).abs() < (v - c1).abs();
            if upper != assignment[i] {
                assignment[i] = upper;
                changed = true;
            }
        }
        let (mut s1, mut n1, mut s2, mut n2) = (0.0, 0usize, 0.0, 0usize);
        for (i, &(_, v)) in values.iter().enumerate() {
            if assignment[i] {
                s2 += v;
                n2 += 1;
            } else {
                s1 += v;
                n1 += 1;
            }
        }
        // A cluster that empties keeps its previous center.
        if n1 > 0 {
            c1 = s1 / n1 as f64;
        }
        if n2 > 0 {
            c2 = s2 / n2 as f64;
        }
        if !changed {
            break;
        }
    }
    let gap = (c2 - c1).abs();
    if gap < SUBGROUP_MIN_GAP
        || !assignment.iter().any(|&a| a)
        || !assignment.iter().any(|&a| !a)
    {
        return Err(ClassifyError::Degenerate {
            gap,
            min: SUBGROUP_MIN_GAP,
        });
    }
    let mut labels = BTreeMap::new();
    let (mut g1_count, mut g2_count) = (0usize, 0usize);
    for (i, &(id, _)) in values.iter().enumerate() {
        let g = if assignment[i] { Subgroup::G2 } else { Subgroup::G1 };
        if assignment[i] {
            g2_count += 1;
        } else {
            g1_count += 1;
        }
        labels.insert(id.to_string(), g);
    }
    Ok(SubgroupSplit {
        labels,
        g1_mean: c1,
        g2_mean: c2,
        g1_count,
        g2_count,
    })
}

/// Runs the subgroup split and writes the labels back onto the machine
/// classifications. Degenerate splits leave every subgroup unset.
pub fn assign_subgroups(machines: &mut [MachineClassification]) -> Option<SubgroupSplit> {
    match split_high_subgroups(machines) {
        Ok(split) => {
            for m in machines.iter_mut() {
                m.subgroup = split.labels.get(&m.machine_id).copied();
            }
            Some(split)
        }
        Err(_) => None,
    }
}

/// Subgroup composition of one High Traffic center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSubgroups {
    pub center_id: String,
    pub g1: usize,
    pub g2: usize,
}

impl CenterSubgroups {
    pub fn machines(&self) -> usize {
        self.g1 + self.g2
    }
}

/// Groups labelled High Traffic machines into per-center subgroup counts.
pub fn center_subgroup_counts(machines: &[MachineClassification]) -> Vec<CenterSubgroups> {
    let mut by_center: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for m in machines {
        let Some(g) = m.subgroup else { continue };
        let entry = by_center.entry(&m.final_session.center_id).or_default();
        match g {
            Subgroup::G1 => entry.0 += 1,
            Subgroup::G2 => entry.1 += 1,
        }
    }
    by_center
        .into_iter()
        .map(|(cid, (g1, g2))| CenterSubgroups {
            center_id: cid.to_string(),
            g1,
            g2,
        })
        .collect()
}

/// Observed and expected mixed / all-G1 / all-G2 center counts under the
/// per-center binomial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionsBreakdown {
    /// (mixed, all-G1, all-G2)
    pub observed: [f64; 3],
    pub expected: [f64; 3],
}

/// Expected category probabilities for each center are
/// Binomial(n_machines, p_superior): P(all G1) = (1-p)^n, P(all G2) = p^n,
/// P(mixed) the remainder; aggregated expectations are tested against the
/// observed category counts with a chi-square goodness of fit.
pub fn mixed_center_proportions_test(
    centers: &[CenterSubgroups],
    p_superior: f64,
) -> Result<(TestResult, ProportionsBreakdown), ClassifyError> {
    if centers.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    let q = 1.0 - p_superior;
    let mut observed = [0.0f64; 3];
    let mut expected = [0.0f64; 3];
    for c in centers {
        let n = c.machines() as i32;
        if n == 0 {
            continue;
        }
        let all_g1 = q.powi(n);
        let all_g2 = p_superior.powi(n);
        expected[0] += 1.0 - all_g1 - all_g2;
        expected[1] += all_g1;
        expected[2] += all_g2;
        let cat = if c.g1 > 0 && c.g2 > 0 {
            0
        } else if c.g2 == 0 {
            1
        } else {
            2
        };
        observed[cat] += 1.0;
    }
    // Single-machine-only inputs leave the mixed category impossible; the
    // test degrades to the remaining cells, or fails if mixed was observed.
    let names = ["mixed", "all-G1", "all-G2"];
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    for i in 0..3 {
        if expected[i] == 0.0 {
            if observed[i] > 0.0 {
                return Err(ClassifyError::DegenerateExpected(names[i]));
            }
            continue;
        }
        obs.push(observed[i]);
        exp.push(expected[i]);
    }
    let mut result = stats::chi_square_gof(&obs, &exp)?;
    result.test_name = "mixed-center-proportions".into();
    Ok((result, ProportionsBreakdown { observed, expected }))
}

/// Tunables of the per-vote pattern detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternParams {
    /// Candidate slope band, bytes per vote.
    pub slope_min: f64,
    pub slope_max: f64,
    pub slope_step: f64,
    /// A point within this many bytes of a candidate line is an inlier.
    pub tolerance: f64,
    /// A line only counts as a per-vote pattern when its inliers span at
    /// least this multiple of the vote window a flat cloud could fake
    /// (2 * tolerance / slope_min).
    pub min_span_factor: f64,
    /// Minimum inliers for an accepted line.
    pub min_inliers: usize,
}

impl Default for PatternParams {
    fn default() -> Self {
        PatternParams {
            slope_min: 41.0,
            slope_max: 46.0,
            slope_step: 0.5,
            tolerance: 500.0,
            min_span_factor: 3.0,
            min_inliers: 5,
        }
    }
}

/// One (votes, received-bytes) observation for the pattern detector.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternPoint {
    pub machine_id: String,
    pub votes: f64,
    pub output_octets: f64,
}

/// An accepted per-vote line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternLine {
    pub slope: f64,
    pub intercept: f64,
    pub inliers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternShare {
    pub fraction: f64,
    pub flagged: BTreeSet<String>,
    pub lines: Vec<PatternLine>,
}

/// Flags machines whose received bytes sit on a line with slope inside the
/// per-vote band.
///
/// Deterministic Hough-style vote: every remaining point anchors a
/// candidate line at each slope of the grid; the line with the most inliers
/// within `tolerance` wins, is accepted if its inliers cover a wide enough
/// vote span, and the search repeats on the remaining points until no line
/// qualifies. The span requirement is what keeps a flat cloud (which any
/// sloped line crosses over a narrow vote window) from producing spurious
/// flags.
pub fn per_vote_pattern_share(
    points: &[PatternPoint],
    params: &PatternParams,
) -> Result<PatternShare, ClassifyError> {
    if points.len() < 10 {
        return Err(ClassifyError::TooFewPoints {
            needed: 10,
            got: points.len(),
        });
    }
    let mut active: Vec<usize> = (0..points.len()).collect();
    let mut flagged: BTreeSet<String> = BTreeSet::new();
    let mut lines = Vec::new();
    let min_span = params.min_span_factor * 2.0 * params.tolerance / params.slope_min;
    loop {
        // (inliers, abs-residual sum, slope, intercept); most inliers win,
        // least absolute residuals break ties.
        let mut best: Option<(usize, f64, f64, f64)> = None;
        let mut slope = params.slope_min;
        while slope <= params.slope_max + 1e-9 {
            for &anchor in &active {
                let intercept =
                    points[anchor].output_octets - slope * points[anchor].votes;
                let mut count = 0usize;
                let mut lad = 0.0f64;
                for &i in &active {
                    let residual =
                        points[i].output_octets - (intercept + slope * points[i].votes);
                    if residual.abs() <= params.tolerance {
                        count += 1;
                        lad += residual.abs();
                    }
                }
                let better = match best {
                    None => true,
                    Some((c, l, ..)) => count > c || (count == c && lad < l),
                };
                if better {
                    best = Some((count, lad, slope, intercept));
                }
            }
            slope += params.slope_step;
        }
        let Some((count, _, slope, intercept)) = best else { break };
        if count < params.min_inliers {
            break;
        }
        let inliers: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| {
                let predicted = intercept + slope * points[i].votes;
                (points[i].output_octets - predicted).abs() <= params.tolerance
            })
            .collect();
        let span = inliers
            .iter()
            .map(|&i| points[i].votes)
            .fold(f64::NEG_INFINITY, f64::max)
            - inliers
                .iter()
                .map(|&i| points[i].votes)
                .fold(f64::INFINITY, f64::min);
        if span < min_span {
            break;
        }
        for &i in &inliers {
            flagged.insert(points[i].machine_id.clone());
        }
        lines.push(PatternLine {
            slope,
            intercept,
            inliers: inliers.len(),
        });
        active.retain(|i| !inliers.contains(i));
        if active.len() < params.min_inliers {
            break;
        }
    }
    Ok(PatternShare {
        fraction: flagged.len() as f64 / points.len() as f64,
        flagged,
        lines,
    })
}

/// Class counts and mixing index of one municipality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub state: String,
    pub municipality: String,
    /// Center counts per class: (high, low, cellular, unclassified).
    pub counts: [usize; 4],
    /// Fraction of centers belonging to the plurality class.
    pub mixing_index: f64,
}

/// Groups center classifications by municipality with a mixing index,
/// sorted by (state, municipality) and ready for CSV emission.
pub fn regional_composition(
    centers: &[CenterClassification],
    registry: &[VotingCenter],
) -> Result<Vec<RegionRow>, ClassifyError> {
    let by_id: BTreeMap<&str, &VotingCenter> = registry
        .iter()
        .map(|c| (c.center_id.as_str(), c))
        .collect();
    let mut rows: BTreeMap<(String, String), [usize; 4]> = BTreeMap::new();
    for c in centers {
        let Some(reg) = by_id.get(c.center_id.as_str()) else {
            return Err(ClassifyError::UnknownCenter(c.center_id.clone()));
        };
        let counts = rows
            .entry((reg.state.clone(), reg.municipality.clone()))
            .or_default();
        let idx = match c.center_class {
            TrafficClass::HighWire => 0,
            TrafficClass::LowWire => 1,
            TrafficClass::Cellular => 2,
            TrafficClass::Unclassified => 3,
        };
        counts[idx] += 1;
    }
    Ok(rows
        .into_iter()
        .map(|((state, municipality), counts)| {
            let total: usize = counts.iter().sum();
            let plurality = *counts.iter().max().unwrap_or(&0);
            RegionRow {
                state,
                municipality,
                counts,
                mixing_index: plurality as f64 / total as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TerminateCause;

    fn record(machine: &str, stop: i64, call: u32, input: u64, output: u64) -> TransmissionRecord {
        TransmissionRecord {
            machine_id: machine.into(),
            center_id: "C001".into(),
            medium: Medium::Wire,
            session_start: stop - 120,
            session_stop: stop,
            input_octets: input,
            output_octets: output,
            input_packets: 10,
            output_packets: 10,
            terminate_cause: TerminateCause::ServerRequest,
            call_index: call,
        }
    }

    fn classified(machine: &str, class: TrafficClass, output: u64) -> MachineClassification {
        let mut r = record(machine, 1000, 1, 6000, output);
        if class == TrafficClass::Cellular {
            r.medium = Medium::Cellular;
        }
        MachineClassification {
            machine_id: machine.into(),
            total_octets: r.total_octets(),
            final_session: r,
            traffic_class: class,
            subgroup: None,
            unclassified_reason: None,
        }
    }

    #[test]
    fn final_session_selection() {
        let single = vec![record("M1", 100, 1, 0, 0)];
        assert_eq!(select_final_session(&single).unwrap().session_stop, 100);

        let multi = vec![
            record("M1", 100, 1, 0, 0),
            record("M1", 200, 2, 0, 0),
            record("M1", 150, 3, 0, 0),
        ];
        assert_eq!(select_final_session(&multi).unwrap().session_stop, 200);

        let tied = vec![record("M1", 100, 1, 1, 0), record("M1", 100, 2, 2, 0)];
        assert_eq!(select_final_session(&tied).unwrap().call_index, 2);

        assert!(matches!(select_final_session(&[]), Err(ClassifyError::NoSessions)));
    }

    #[test]
    fn machine_classes() {
        let th = ClassifyThresholds::default();
        let wire_high = record("M1", 100, 1, 10_000, 20_000);
        assert_eq!(classify_machine(&wire_high, &th).0, TrafficClass::HighWire);

        let wire_low = record("M1", 100, 1, 2_000, 3_000);
        assert_eq!(classify_machine(&wire_low, &th).0, TrafficClass::LowWire);

        let mut cellular = record("M1", 100, 1, 2_000, 3_000);
        cellular.medium = Medium::Cellular;
        assert_eq!(classify_machine(&cellular, &th).0, TrafficClass::Cellular);

        let gap = record("M1", 100, 1, 5_000, 5_000);
        let (class, reason) = classify_machine(&gap, &th);
        assert_eq!(class, TrafficClass::Unclassified);
        assert_eq!(reason, Some(UnclassifiedReason::BetweenBands));

        let above = record("M1", 100, 1, 40_000, 30_000);
        assert_eq!(
            classify_machine(&above, &th).1,
            Some(UnclassifiedReason::AboveHighBand)
        );
        let below = record("M1", 100, 1, 500, 500);
        assert_eq!(
            classify_machine(&below, &th).1,
            Some(UnclassifiedReason::BelowLowBand)
        );
    }

    #[test]
    fn center_plurality_and_flags() {
        let members = vec![
            classified("M1", TrafficClass::HighWire, 27_000),
            classified("M2", TrafficClass::HighWire, 27_000),
            classified("M3", TrafficClass::HighWire, 27_000),
            classified("M4", TrafficClass::Cellular, 27_000),
        ];
        let c = classify_center("C1", &members).unwrap();
        assert_eq!(c.center_class, TrafficClass::HighWire);
        assert!(c.flags.is_empty());

        let cellular_only = vec![
            classified("M1", TrafficClass::Cellular, 30_000),
            classified("M2", TrafficClass::Cellular, 30_000),
            classified("M3", TrafficClass::Cellular, 30_000),
            classified("M4", TrafficClass::Cellular, 30_000),
        ];
        let c = classify_center("C2", &cellular_only).unwrap();
        assert_eq!(c.center_class, TrafficClass::Cellular);

        let mixed = vec![
            classified("M1", TrafficClass::HighWire, 27_000),
            classified("M2", TrafficClass::HighWire, 27_000),
            classified("M3", TrafficClass::LowWire, 3_000),
            classified("M4", TrafficClass::LowWire, 3_000),
        ];
        let c = classify_center("C3", &mixed).unwrap();
        assert!(c.flags.contains(&CenterFlag::MixedAB));
        assert_eq!(c.center_class, TrafficClass::HighWire);

        let unclassified = vec![classified("M1", TrafficClass::Unclassified, 10_000)];
        let c = classify_center("C4", &unclassified).unwrap();
        assert_eq!(c.center_class, TrafficClass::Unclassified);
        assert!(c.flags.contains(&CenterFlag::AllUnclassified));
    }

    fn high(machine: &str, output: u64) -> MachineClassification {
        let mut m = classified(machine, TrafficClass::HighWire, output);
        m.final_session.input_octets = 6_000;
        m
    }

    #[test]
    fn subgroup_split_separated() {
        let machines = vec![
            high("M1", 26_000),
            high("M2", 28_000),
            high("M3", 36_000),
            high("M4", 38_000),
        ];
        let split = split_high_subgroups(&machines).unwrap();
        assert_eq!(split.labels["M1"], Subgroup::G1);
        assert_eq!(split.labels["M2"], Subgroup::G1);
        assert_eq!(split.labels["M3"], Subgroup::G2);
        assert_eq!(split.labels["M4"], Subgroup::G2);
        assert!((split.g1_mean - 27_000.0).abs() < 1.0);
        assert!((split.g2_mean - 37_000.0).abs() < 1.0);
    }

    #[test]
    fn subgroup_split_degenerate() {
        let machines = vec![
            high("M1", 30_000),
            high("M2", 30_200),
            high("M3", 30_400),
            high("M4", 30_500),
        ];
        assert!(matches!(
            split_high_subgroups(&machines),
            Err(ClassifyError::Degenerate { .. })
        ));
    }

    #[test]
    fn subgroup_split_fixed_point() {
        let machines = vec![high("M1", 27_000), high("M2", 37_000)];
        let split = split_high_subgroups(&machines).unwrap();
        assert_eq!(split.g1_count, 1);
        assert_eq!(split.g2_count, 1);
        assert_eq!(split.labels["M1"], Subgroup::G1);
        assert_eq!(split.labels["M2"], Subgroup::G2);
    }

    #[test]
    fn subgroup_split_shift_equivariant() {
        let base = vec![
            high("M1", 25_500),
            high("M2", 27_400),
            high("M3", 29_000),
            high("M4", 35_800),
            high("M5", 38_200),
        ];
        let split = split_high_subgroups(&base).unwrap();
        let shift = 5_000u64;
        let shifted: Vec<MachineClassification> = base
            .iter()
            .map(|m| {
                let mut s = m.clone();
                s.final_session.output_octets += shift;
                s
            })
            .collect();
        let shifted_split = split_high_subgroups_with_centers(
            &shifted,
            (
                SUBGROUP_INIT_CENTERS.0 + shift as f64,
                SUBGROUP_INIT_CENTERS.1 + shift as f64,
            ),
        )
        .unwrap();
        assert_eq!(split.labels, shifted_split.labels);
    }

    #[test]
    fn proportions_test_exact_match_is_null() {
        // Observed categories drawn to match the binomial expectation
        // exactly: statistic 0, p = 1.
        let mut centers = Vec::new();
        // 100 centers of size 1 with p = 0.5: expected 50 all-G1, 50 all-G2.
        for i in 0..50 {
            centers.push(CenterSubgroups {
                center_id: format!("C{i:03}"),
                g1: 1,
                g2: 0,
            });
        }
        for i in 50..100 {
            centers.push(CenterSubgroups {
                center_id: format!("C{i:03}"),
                g1: 0,
                g2: 1,
            });
        }
        let (result, breakdown) = mixed_center_proportions_test(&centers, 0.5).unwrap();
        assert_eq!(result.statistic, 0.0);
        assert_eq!(result.p_value, 1.0);
        assert_eq!(breakdown.observed[0], 0.0);
    }

    #[test]
    fn proportions_test_single_machine_centers() {
        // Size-one centers leave zero mass on the mixed category; the cell
        // is dropped and df falls to 1.
        let singles = vec![
            CenterSubgroups {
                center_id: "C1".into(),
                g1: 1,
                g2: 0,
            },
            CenterSubgroups {
                center_id: "C2".into(),
                g1: 0,
                g2: 1,
            },
        ];
        let (result, breakdown) = mixed_center_proportions_test(&singles, 0.5).unwrap();
        assert_eq!(result.df, crate::model::DegreesOfFreedom::One(1.0));
        assert_eq!(breakdown.expected[0], 0.0);
        assert!(mixed_center_proportions_test(&[], 0.5).is_err());
    }

    fn pattern_points(flat: usize, on_line: usize) -> Vec<PatternPoint> {
        let mut pts = Vec::new();
        for i in 0..flat {
            pts.push(PatternPoint {
                machine_id: format!("F{i:04}"),
                votes: 100.0 + (i as f64 * 37.0) % 400.0,
                output_octets: 5_000.0,
            });
        }
        for i in 0..on_line {
            let votes = 120.0 + (i as f64 * 53.0) % 380.0;
            pts.push(PatternPoint {
                machine_id: format!("L{i:04}"),
                votes,
                output_octets: 20_000.0 + 43.0 * votes,
            });
        }
        pts
    }

    #[test]
    fn pattern_share_flat_cloud_is_zero() {
        let share =
            per_vote_pattern_share(&pattern_points(60, 0), &PatternParams::default()).unwrap();
        assert_eq!(share.fraction, 0.0);
    }

    #[test]
    fn pattern_share_pure_line_is_one() {
        let share =
            per_vote_pattern_share(&pattern_points(0, 60), &PatternParams::default()).unwrap();
        assert_eq!(share.fraction, 1.0);
        assert_eq!(share.lines.len(), 1);
        assert!((share.lines[0].slope - 43.0).abs() < 1e-9);
    }

    #[test]
    fn pattern_share_too_few() {
        assert!(matches!(
            per_vote_pattern_share(&pattern_points(4, 0), &PatternParams::default()),
            Err(ClassifyError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn regional_rows() {
        let registry = vec![
            VotingCenter {
                center_id: "C1".into(),
                parish: "P1".into(),
                municipality: "MU1".into(),
                state: "ST1".into(),
                machine_ids: vec!["M1".into()],
            },
            VotingCenter {
                center_id: "C2".into(),
                parish: "P2".into(),
                municipality: "MU1".into(),
                state: "ST1".into(),
                machine_ids: vec!["M2".into()],
            },
            VotingCenter {
                center_id: "C3".into(),
                parish: "P3".into(),
                municipality: "MU2".into(),
                state: "ST1".into(),
                machine_ids: vec!["M3".into()],
            },
        ];
        let centers = vec![
            CenterClassification {
                center_id: "C1".into(),
                center_class: TrafficClass::HighWire,
                composition: [1, 0, 0, 0],
                flags: BTreeSet::new(),
            },
            CenterClassification {
                center_id: "C2".into(),
                center_class: TrafficClass::LowWire,
                composition: [0, 1, 0, 0],
                flags: BTreeSet::new(),
            },
            CenterClassification {
                center_id: "C3".into(),
                center_class: TrafficClass::LowWire,
                composition: [0, 1, 0, 0],
                flags: BTreeSet::new(),
            },
        ];
        let rows = regional_composition(&centers, &registry).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mixing_index, 0.5);
        assert_eq!(rows[1].mixing_index, 1.0);

        let missing = vec![CenterClassification {
            center_id: "CX".into(),
            center_class: TrafficClass::HighWire,
            composition: [1, 0, 0, 0],
            flags: BTreeSet::new(),
        }];
        assert!(matches!(
            regional_composition(&missing, &registry),
            Err(ClassifyError::UnknownCenter(_))
        ));
    }
}
