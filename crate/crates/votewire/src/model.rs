//! Shared domain types and the elementary electoral metrics every other
//! module consumes.
//!
//! Everything here is an immutable value after construction; types are
//! `Clone + Send + Sync` and safe to share across threads.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical transmission medium of a voting machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Medium {
    Wire,
    Cellular,
}

/// Which party ended an accounting session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminateCause {
    /// The totalizing-server side closed the call.
    ServerRequest,
    /// The voting machine closed the call.
    MachineRequest,
    /// Carrier/port failure or another error condition.
    Error,
    Other,
}

/// Electoral event a tally sheet belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElectionId {
    E1998,
    E2000,
    Prr2004,
}

impl ElectionId {
    pub fn as_str(self) -> &'static str {
        match self {
            ElectionId::E1998 => "E1998",
            ElectionId::E2000 => "E2000",
            ElectionId::Prr2004 => "PRR2004",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "E1998" | "1998" => Some(ElectionId::E1998),
            "E2000" | "2000" => Some(ElectionId::E2000),
            "PRR2004" | "2004" => Some(ElectionId::Prr2004),
            _ => None,
        }
    }
}

impl fmt::Display for ElectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Traffic-volume class of a machine or a voting center.
///
/// Wire machines split into High Traffic (A) and Low Traffic (B) by the
/// total octets of their final session; machines on mobile telephony are
/// Cellular (C) regardless of volume. Wire totals outside both bands are
/// deliberately left `Unclassified` so they cannot contaminate group
/// statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrafficClass {
    HighWire,
    LowWire,
    Cellular,
    Unclassified,
}

impl TrafficClass {
    /// Single-letter label used in tables (A/B/C, `-` for unclassified).
    pub fn letter(self) -> &'static str {
        match self {
            TrafficClass::HighWire => "A",
            TrafficClass::LowWire => "B",
            TrafficClass::Cellular => "C",
            TrafficClass::Unclassified => "-",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "A" | "HighWire" | "high" => Some(TrafficClass::HighWire),
            "B" | "LowWire" | "low" => Some(TrafficClass::LowWire),
            "C" | "Cellular" | "cellular" => Some(TrafficClass::Cellular),
            "-" | "Unclassified" => Some(TrafficClass::Unclassified),
            _ => None,
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// One RADIUS accounting session between a voting machine and the
/// totalizing servers.
///
/// Octet direction follows accounting semantics seen from the server:
/// `input_octets` are bytes the machine sent (its Outgoing data),
/// `output_octets` are bytes the machine received (its Incoming data).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub machine_id: String,
    pub center_id: String,
    pub medium: Medium,
    /// Session start, seconds since the Unix epoch, UTC.
    pub session_start: i64,
    /// Session stop, seconds since the Unix epoch, UTC.
    pub session_stop: i64,
    pub input_octets: u64,
    pub output_octets: u64,
    pub input_packets: u64,
    pub output_packets: u64,
    pub terminate_cause: TerminateCause,
    /// 1-based ordinal of this machine's calls in log order.
    pub call_index: u32,
}

impl TransmissionRecord {
    /// Octets moved in both directions during the session.
    pub fn total_octets(&self) -> u64 {
        self.input_octets + self.output_octets
    }

    pub fn duration_secs(&self) -> i64 {
        self.session_stop - self.session_start
    }
}

/// One machine's official results for one electoral event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallySheet {
    pub machine_id: String,
    pub center_id: String,
    pub registered_voters: u64,
    pub yes_votes: u64,
    pub no_votes: u64,
    /// Always 0 for the 2004 referendum, which had no null option.
    pub null_votes: u64,
    pub total_votes: u64,
    pub election_id: ElectionId,
    /// Option counts for multi-option elections, keyed by option name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub candidate_votes: BTreeMap<String, u64>,
}

impl TallySheet {
    /// Count recorded for a named option. `YES`/`NO` resolve to the
    /// referendum fields; anything else is looked up in `candidate_votes`.
    pub fn option_count(&self, option: &str) -> u64 {
        match option {
            "YES" => self.yes_votes,
            "NO" => self.no_votes,
            _ => self.candidate_votes.get(option).copied().unwrap_or(0),
        }
    }

    /// Sum of all option counts, nulls excluded.
    pub fn valid_votes(&self) -> u64 {
        self.yes_votes + self.no_votes + self.candidate_votes.values().sum::<u64>()
    }

    /// Whether the trusted `total_votes` field agrees with the option sums.
    /// A mismatch is a flagged anomaly, never a fatal error: forensic
    /// pipelines must not discard suspicious rows.
    pub fn total_consistent(&self) -> bool {
        self.total_votes == self.valid_votes() + self.null_votes
    }
}

/// A voting center and its place in the regional hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotingCenter {
    pub center_id: String,
    pub parish: String,
    pub municipality: String,
    pub state: String,
    #[serde(default)]
    pub machine_ids: Vec<String>,
}

impl VotingCenter {
    /// Centers housed between 1 and 18 machines; anything else is suspect.
    pub fn machine_count_in_range(&self) -> bool {
        (1..=18).contains(&self.machine_ids.len())
    }
}

/// Degrees of freedom of a test statistic; one or two components as the
/// test requires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreesOfFreedom {
    One(f64),
    Two(f64, f64),
}

impl fmt::Display for DegreesOfFreedom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegreesOfFreedom::One(d) => write!(f, "{d}"),
            DegreesOfFreedom::Two(a, b) => write!(f, "({a}, {b})"),
        }
    }
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub df: DegreesOfFreedom,
    pub p_value: f64,
}

/// Location/scale/quantile summary of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator); 0 for singletons,
    /// with `std_degenerate` raised.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub q10: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
    /// True when n < 2 and the standard deviation is undefined.
    pub std_degenerate: bool,
}

/// Denominator convention for option percentages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteBasis {
    /// Valid votes only: option sums, nulls excluded.
    ValidOnly,
    /// Total votes including nulls.
    TotalWithNulls,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("machine {0} recorded zero ballots for the requested basis")]
    ZeroBallots(String),
    #[error("machine {0} has zero registered voters")]
    ZeroRegistry(String),
}

/// Percentage of NO votes per machine, on the yes+no basis (the 2004
/// referendum had no null option).
pub fn no_percentage(tally: &TallySheet) -> Result<f64, ModelError> {
    let ballots = tally.yes_votes + tally.no_votes;
    if ballots == 0 {
        return Err(ModelError::ZeroBallots(tally.machine_id.clone()));
    }
    Ok(100.0 * tally.no_votes as f64 / ballots as f64)
}

/// Percentage of YES votes per machine; complements [`no_percentage`].
pub fn yes_percentage(tally: &TallySheet) -> Result<f64, ModelError> {
    let ballots = tally.yes_votes + tally.no_votes;
    if ballots == 0 {
        return Err(ModelError::ZeroBallots(tally.machine_id.clone()));
    }
    Ok(100.0 * tally.yes_votes as f64 / ballots as f64)
}

/// Percentage of registered voters who did not cast a ballot:
/// `100 * (registered - total) / registered`.
pub fn abstention_percentage(tally: &TallySheet) -> Result<f64, ModelError> {
    if tally.registered_voters == 0 {
        return Err(ModelError::ZeroRegistry(tally.machine_id.clone()));
    }
    let registered = tally.registered_voters as f64;
    let cast = tally.total_votes as f64;
    Ok(100.0 * (registered - cast) / registered)
}

/// Share of one option under the chosen denominator basis.
pub fn candidate_percentage(
    tally: &TallySheet,
    option: &str,
    basis: VoteBasis,
) -> Result<f64, ModelError> {
    let denominator = match basis {
        VoteBasis::ValidOnly => tally.valid_votes(),
        VoteBasis::TotalWithNulls => tally.valid_votes() + tally.null_votes,
    };
    if denominator == 0 {
        return Err(ModelError::ZeroBallots(tally.machine_id.clone()));
    }
    Ok(100.0 * tally.option_count(option) as f64 / denominator as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prr_tally(yes: u64, no: u64) -> TallySheet {
        TallySheet {
            machine_id: "M001".into(),
            center_id: "C001".into(),
            registered_voters: 1000,
            yes_votes: yes,
            no_votes: no,
            null_votes: 0,
            total_votes: yes + no,
            election_id: ElectionId::Prr2004,
            candidate_votes: BTreeMap::new(),
        }
    }

    #[test]
    fn no_percentage_symmetry() {
        assert_eq!(no_percentage(&prr_tally(155, 155)).unwrap(), 50.0);
    }

    #[test]
    fn no_percentage_boundary() {
        assert_eq!(no_percentage(&prr_tally(0, 7)).unwrap(), 100.0);
    }

    #[test]
    fn no_percentage_zero_ballots() {
        assert!(matches!(
            no_percentage(&prr_tally(0, 0)),
            Err(ModelError::ZeroBallots(_))
        ));
    }

    #[test]
    fn yes_no_sum_to_hundred() {
        let t = prr_tally(312, 188);
        let sum = no_percentage(&t).unwrap() + yes_percentage(&t).unwrap();
        assert!((sum - 100.0).abs() <= f64::EPSILON * 100.0);
    }

    #[test]
    fn abstention_cases() {
        let mut t = prr_tally(400, 300);
        assert_eq!(abstention_percentage(&t).unwrap(), 30.0);
        t.yes_votes = 600;
        t.no_votes = 400;
        t.total_votes = 1000;
        assert_eq!(abstention_percentage(&t).unwrap(), 0.0);
        t.registered_voters = 0;
        assert!(matches!(
            abstention_percentage(&t),
            Err(ModelError::ZeroRegistry(_))
        ));
    }

    #[test]
    fn candidate_percentage_bases() {
        let mut t = prr_tally(0, 0);
        t.candidate_votes.insert("CHAVEZ".into(), 50);
        t.candidate_votes.insert("OPP_1".into(), 30);
        t.null_votes = 20;
        t.total_votes = 100;
        t.election_id = ElectionId::E2000;
        assert_eq!(
            candidate_percentage(&t, "CHAVEZ", VoteBasis::ValidOnly).unwrap(),
            62.5
        );
        assert_eq!(
            candidate_percentage(&t, "CHAVEZ", VoteBasis::TotalWithNulls).unwrap(),
            50.0
        );
        t.candidate_votes.insert("CHAVEZ".into(), 0);
        t.candidate_votes.insert("OPP_1".into(), 10);
        t.null_votes = 0;
        t.total_votes = 10;
        assert_eq!(
            candidate_percentage(&t, "CHAVEZ", VoteBasis::ValidOnly).unwrap(),
            0.0
        );
        assert_eq!(
            candidate_percentage(&t, "CHAVEZ", VoteBasis::TotalWithNulls).unwrap(),
            0.0
        );
    }

    #[test]
    fn bases_agree_without_nulls() {
        let t = prr_tally(194, 306);
        for option in ["YES", "NO"] {
            let valid = candidate_percentage(&t, option, VoteBasis::ValidOnly).unwrap();
            let total = candidate_percentage(&t, option, VoteBasis::TotalWithNulls).unwrap();
            assert_eq!(valid, total);
        }
    }

    #[test]
    fn tally_consistency_check() {
        let mut t = prr_tally(194, 306);
        assert!(t.total_consistent());
        t.total_votes = 499;
        assert!(!t.total_consistent());
    }
}
