//! Ingestion of the evidence files: RADIUS accounting detail logs, tally
//! CSVs and the center registry, plus the cross-check that plays the two
//! evidence sources against each other.
//!
//! The detail format is the classic server-side accounting log: blank-line
//! separated blocks, each a timestamp header followed by indented
//! `Attribute = Value` pairs. Timestamps are accepted as epoch seconds or
//! RFC 3339 and normalized to UTC.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read};

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::select_final_session;
use crate::model::{
    ElectionId, Medium, TallySheet, TerminateCause, TransmissionRecord, VotingCenter,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column `{col}`: {value:?}")]
    NonNumericCell { row: usize, col: String, value: String },
    #[error("bad cell at row {row}, column `{col}`: {value:?}")]
    BadCell { row: usize, col: String, value: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How to react to malformed detail blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// First malformed block aborts the parse.
    Strict,
    /// Malformed blocks are skipped and reported with the same diagnostics.
    Lenient,
}

/// NAS address to medium mapping, loaded from a `nas_ip,medium` CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NasMap {
    entries: BTreeMap<String, Medium>,
}

impl NasMap {
    pub fn new(entries: BTreeMap<String, Medium>) -> Self {
        NasMap { entries }
    }

    pub fn medium_of(&self, nas_ip: &str) -> Option<Medium> {
        self.entries.get(nas_ip).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Medium)> {
        self.entries.iter()
    }

    /// Addresses mapped to one medium, in sorted order.
    pub fn addresses_for(&self, medium: Medium) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, m)| **m == medium)
            .map(|(ip, _)| ip.as_str())
            .collect()
    }
}

/// Diagnostic for one skipped or rejected detail block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDiagnostic {
    pub line: usize,
    pub reason: String,
}

/// Outcome of a detail-file parse.
#[derive(Debug, Clone, Default)]
pub struct RadiusParse {
    pub records: Vec<TransmissionRecord>,
    pub skipped: Vec<BlockDiagnostic>,
}

/// Attribute names every well-formed block must carry.
pub const REQUIRED_ATTRIBUTES: [&str; 9] = [
    "User-Name",
    "NAS-IP-Address",
    "Acct-Session-Time",
    "Acct-Input-Octets",
    "Acct-Output-Octets",
    "Acct-Input-Packets",
    "Acct-Output-Packets",
    "Acct-Terminate-Cause",
    "Calling-Station-Id",
];

/// Parses a RADIUS accounting detail stream into transmission records.
///
/// `User-Name` carries `machine@center` (realm-style); the block header
/// timestamp is the session stop, with `Acct-Session-Time` giving the
/// duration; the medium comes from the NAS mapping. The call index is the
/// 1-based ordinal of the machine's blocks in file order.
pub fn parse_radius_detail(
    reader: impl BufRead,
    nas_map: &NasMap,
    mode: ParseMode,
) -> Result<RadiusParse, IngestError> {
    let mut out = RadiusParse::default();
    let mut call_counters: BTreeMap<String, u32> = BTreeMap::new();
    let mut block: Vec<(usize, String)> = Vec::new();
    let mut line_no = 0usize;

    let flush = |block: &mut Vec<(usize, String)>,
                     out: &mut RadiusParse,
                     call_counters: &mut BTreeMap<String, u32>|
     -> Result<(), IngestError> {
        if block.is_empty() {
            return Ok(());
        }
        match parse_block(block, nas_map) {
            Ok(partial) => {
                let counter = call_counters.entry(partial.machine_id.clone()).or_insert(0);
                *counter += 1;
                out.records.push(partial.into_record(*counter));
            }
            Err((line, reason)) => match mode {
                ParseMode::Strict => {
                    block.clear();
                    return Err(IngestError::MalformedRecord { line, reason });
                }
                ParseMode::Lenient => out.skipped.push(BlockDiagnostic { line, reason }),
            },
        }
        block.clear();
        Ok(())
    };

    for line in reader.lines() {
        let line = line?;
        line_no += 1;
        if line.trim().is_empty() {
            flush(&mut block, &mut out, &mut call_counters)?;
        } else {
            block.push((line_no, line));
        }
    }
    flush(&mut block, &mut out, &mut call_counters)?;
    Ok(out)
}

struct PartialRecord {
    machine_id: String,
    center_id: String,
    medium: Medium,
    session_start: i64,
    session_stop: i64,
    input_octets: u64,
    output_octets: u64,
    input_packets: u64,
    output_packets: u64,
    terminate_cause: TerminateCause,
}

impl PartialRecord {
    fn into_record(self, call_index: u32) -> TransmissionRecord {
        TransmissionRecord {
            machine_id: self.machine_id,
            center_id: self.center_id,
            medium: self.medium,
            session_start: self.session_start,
            session_stop: self.session_stop,
            input_octets: self.input_octets,
            output_octets: self.output_octets,
            input_packets: self.input_packets,
            output_packets: self.output_packets,
            terminate_cause: self.terminate_cause,
            call_index,
        }
    }
}

fn parse_block(
    lines: &[(usize, String)],
    nas_map: &NasMap,
) -> Result<PartialRecord, (usize, String)> {
    let (header_line, header) = &lines[0];
    let stop = parse_timestamp(header.trim())
        .ok_or_else(|| (*header_line, format!("unparseable timestamp header {header:?}")))?;

    let mut attrs: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (ln, raw) in &lines[1..] {
        let trimmed = raw.trim_start();
        let Some((name, value)) = trimmed.split_once('=') else {
            return Err((*ln, format!("attribute line without `=`: {raw:?}")));
        };
        attrs.insert(name.trim(), (*ln, value.trim()));
    }
    let get = |name: &str| -> Result<(usize, &str), (usize, String)> {
        attrs
            .get(name)
            .copied()
            .ok_or_else(|| (*header_line, format!("missing attribute {name}")))
    };
    for required in REQUIRED_ATTRIBUTES {
        get(required)?;
    }

    let (ln, user) = get("User-Name")?;
    let user = unquote(user);
    let (machine_id, center_id) = user
        .split_once('@')
        .ok_or_else(|| (ln, format!("User-Name {user:?} missing @center realm")))?;
    if machine_id.is_empty() || center_id.is_empty() {
        return Err((ln, format!("User-Name {user:?} has empty machine or realm")));
    }

    let (ln, nas_ip) = get("NAS-IP-Address")?;
    let medium = nas_map
        .medium_of(nas_ip)
        .ok_or_else(|| (ln, format!("NAS address {nas_ip} not in the medium map")))?;

    let parse_u64 = |name: &str| -> Result<u64, (usize, String)> {
        let (ln, v) = get(name)?;
        v.parse::<u64>()
            .map_err(|_| (ln, format!("{name} is not a non-negative integer: {v:?}")))
    };
    let session_time = parse_u64("Acct-Session-Time")? as i64;
    let input_octets = parse_u64("Acct-Input-Octets")?;
    let output_octets = parse_u64("Acct-Output-Octets")?;
    let input_packets = parse_u64("Acct-Input-Packets")?;
    let output_packets = parse_u64("Acct-Output-Packets")?;

    let (_, cause) = get("Acct-Terminate-Cause")?;
    let terminate_cause = parse_terminate_cause(cause);

    Ok(PartialRecord {
        machine_id: machine_id.to_string(),
        center_id: center_id.to_string(),
        medium,
        session_start: stop - session_time,
        session_stop: stop,
        input_octets,
        output_octets,
        input_packets,
        output_packets,
        terminate_cause,
    })
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(s)
}

/// Epoch seconds or RFC 3339, normalized to UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_digit()) {
        return s.parse().ok();
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.timestamp())
}

/// Accounting cause names mapped onto who ended the session. `NAS-Request`
/// is the totalizing-server side; `User-Request` is the machine.
pub fn parse_terminate_cause(s: &str) -> TerminateCause {
    match s {
        "NAS-Request" | "NAS-Reboot" | "Admin-Reset" => TerminateCause::ServerRequest,
        "User-Request" => TerminateCause::MachineRequest,
        "Lost-Carrier" | "Lost-Service" | "Port-Error" | "NAS-Error" => TerminateCause::Error,
        _ => TerminateCause::Other,
    }
}

/// Canonical attribute string for a cause; inverse of
/// [`parse_terminate_cause`].
pub fn terminate_cause_name(cause: TerminateCause) -> &'static str {
    match cause {
        TerminateCause::ServerRequest => "NAS-Request",
        TerminateCause::MachineRequest => "User-Request",
        TerminateCause::Error => "Lost-Carrier",
        TerminateCause::Other => "Unknown",
    }
}

/// Anomaly attached to one parsed tally row; the row itself is retained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyAnomaly {
    pub row: usize,
    pub machine_id: String,
    pub reason: String,
}

/// Outcome of a tally CSV parse.
#[derive(Debug, Clone, Default)]
pub struct TallyParse {
    pub sheets: Vec<TallySheet>,
    pub anomalies: Vec<TallyAnomaly>,
}

const TALLY_COLUMNS: [&str; 8] = [
    "machine_id",
    "center_id",
    "registered",
    "yes",
    "no",
    "null",
    "total",
    "election_id",
];

/// Parses a tally CSV. The eight required columns are fixed; any further
/// column is treated as a candidate option and lands in `candidate_votes`.
/// Rows whose declared total disagrees with the option sums are kept and
/// flagged, never dropped.
pub fn parse_tally_csv(reader: impl Read) -> Result<TallyParse, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let mut col_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        col_index.insert(h, i);
    }
    for required in TALLY_COLUMNS {
        if !col_index.contains_key(required) {
            return Err(IngestError::MissingColumn(required.to_string()));
        }
    }
    let extra_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !TALLY_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut out = TallyParse::default();
    for (row_no, row) in csv_reader.records().enumerate() {
        let row = row?;
        let row_display = row_no + 2; // 1-based, after the header
        let cell = |name: &str| -> &str { row.get(col_index[name]).unwrap_or("") };
        let numeric = |name: &str| -> Result<u64, IngestError> {
            let v = cell(name);
            v.parse::<u64>().map_err(|_| IngestError::NonNumericCell {
                row: row_display,
                col: name.to_string(),
                value: v.to_string(),
            })
        };
        let election_raw = cell("election_id");
        let election_id = ElectionId::parse(election_raw).ok_or_else(|| IngestError::BadCell {
            row: row_display,
            col: "election_id".to_string(),
            value: election_raw.to_string(),
        })?;
        let mut candidate_votes = BTreeMap::new();
        for (i, name) in &extra_cols {
            let v = row.get(*i).unwrap_or("");
            if v.is_empty() {
                continue;
            }
            let count = v.parse::<u64>().map_err(|_| IngestError::NonNumericCell {
                row: row_display,
                col: name.clone(),
                value: v.to_string(),
            })?;
            candidate_votes.insert(name.clone(), count);
        }
        let sheet = TallySheet {
            machine_id: cell("machine_id").to_string(),
            center_id: cell("center_id").to_string(),
            registered_voters: numeric("registered")?,
            yes_votes: numeric("yes")?,
            no_votes: numeric("no")?,
            null_votes: numeric("null")?,
            total_votes: numeric("total")?,
            election_id,
            candidate_votes,
        };
        if !sheet.total_consistent() {
            out.anomalies.push(TallyAnomaly {
                row: row_display,
                machine_id: sheet.machine_id.clone(),
                reason: format!(
                    "declared total {} != option sum {} + nulls {}",
                    sheet.total_votes,
                    sheet.valid_votes(),
                    sheet.null_votes
                ),
            });
        }
        out.sheets.push(sheet);
    }
    Ok(out)
}

/// Parses the center registry CSV:
/// `center_id,parish,municipality,state`. Machine membership is joined in
/// later from tallies or records.
pub fn parse_registry_csv(reader: impl Read) -> Result<Vec<VotingCenter>, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    for required in ["center_id", "parish", "municipality", "state"] {
        if !headers.iter().any(|h| h == required) {
            return Err(IngestError::MissingColumn(required.to_string()));
        }
    }
    let idx = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ci, pi, mi, si) = (
        idx("center_id"),
        idx("parish"),
        idx("municipality"),
        idx("state"),
    );
    let mut centers = Vec::new();
    for row in csv_reader.records() {
        let row = row?;
        centers.push(VotingCenter {
            center_id: row.get(ci).unwrap_or("").to_string(),
            parish: row.get(pi).unwrap_or("").to_string(),
            municipality: row.get(mi).unwrap_or("").to_string(),
            state: row.get(si).unwrap_or("").to_string(),
            machine_ids: Vec::new(),
        });
    }
    Ok(centers)
}

/// Parses a `nas_ip,medium` CSV into a [`NasMap`].
pub fn parse_nas_map_csv(reader: impl Read) -> Result<NasMap, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    for required in ["nas_ip", "medium"] {
        if !headers.iter().any(|h| h == required) {
            return Err(IngestError::MissingColumn(required.to_string()));
        }
    }
    let ip_idx = headers.iter().position(|h| h == "nas_ip").unwrap();
    let medium_idx = headers.iter().position(|h| h == "medium").unwrap();
    let mut entries = BTreeMap::new();
    for (row_no, row) in csv_reader.records().enumerate() {
        let row = row?;
        let raw = row.get(medium_idx).unwrap_or("");
        let medium = match raw.to_ascii_lowercase().as_str() {
            "wire" => Medium::Wire,
            "cellular" => Medium::Cellular,
            _ => {
                return Err(IngestError::BadCell {
                    row: row_no + 2,
                    col: "medium".to_string(),
                    value: raw.to_string(),
                })
            }
        };
        entries.insert(row.get(ip_idx).unwrap_or("").to_string(), medium);
    }
    Ok(NasMap::new(entries))
}

/// A final session that began before polls closed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAnomaly {
    pub machine_id: String,
    pub session_start: i64,
    pub poll_close: i64,
}

/// A session with suspicious counters or indexing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterAnomaly {
    pub machine_id: String,
    pub reason: String,
}

/// What the transmission logs and the tally files say about each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    /// Machines present in both sources.
    pub matched: usize,
    /// Machines only the logs know.
    pub log_only: Vec<String>,
    /// Machines only the tallies know.
    pub tally_only: Vec<String>,
    pub time_anomalies: Vec<TimeAnomaly>,
    pub counter_anomalies: Vec<CounterAnomaly>,
}

/// Plays the two evidence sources against each other: machine id set
/// differences, final sessions that started strictly before `poll_close`,
/// zero-octet sessions, and duplicated (machine, call) pairs.
pub fn cross_check(
    records: &[TransmissionRecord],
    tallies: &[TallySheet],
    poll_close: i64,
) -> CrossCheckReport {
    let log_machines: BTreeSet<&str> = records.iter().map(|r| r.machine_id.as_str()).collect();
    let tally_machines: BTreeSet<&str> = tallies.iter().map(|t| t.machine_id.as_str()).collect();
    let log_only: Vec<String> = log_machines
        .difference(&tally_machines)
        .map(|s| s.to_string())
        .collect();
    let tally_only: Vec<String> = tally_machines
        .difference(&log_machines)
        .map(|s| s.to_string())
        .collect();
    let matched = log_machines.intersection(&tally_machines).count();

    let mut by_machine: BTreeMap<&str, Vec<&TransmissionRecord>> = BTreeMap::new();
    for r in records {
        by_machine.entry(&r.machine_id).or_default().push(r);
    }
    let mut time_anomalies = Vec::new();
    for (machine, recs) in &by_machine {
        let owned: Vec<TransmissionRecord> = recs.iter().map(|r| (*r).clone()).collect();
        if let Ok(final_session) = select_final_session(&owned) {
            if final_session.session_start < poll_close {
                time_anomalies.push(TimeAnomaly {
                    machine_id: machine.to_string(),
                    session_start: final_session.session_start,
                    poll_close,
                });
            }
        }
    }

    let mut counter_anomalies = Vec::new();
    let mut seen: BTreeSet<(&str, u32)> = BTreeSet::new();
    for r in records {
        if r.input_octets == 0 && r.output_octets == 0 {
            counter_anomalies.push(CounterAnomaly {
                machine_id: r.machine_id.clone(),
                reason: format!("zero octets in both directions (call {})", r.call_index),
            });
        }
        if !seen.insert((&r.machine_id, r.call_index)) {
            counter_anomalies.push(CounterAnomaly {
                machine_id: r.machine_id.clone(),
                reason: format!("duplicate call index {}", r.call_index),
            });
        }
    }

    CrossCheckReport {
        matched,
        log_only,
        tally_only,
        time_anomalies,
        counter_anomalies,
    }
}

/// Drops duplicated (machine, call) pairs keeping the last occurrence, and
/// reports each duplication. Relative order of the kept records is
/// preserved.
pub fn dedup_records(
    records: Vec<TransmissionRecord>,
) -> (Vec<TransmissionRecord>, Vec<CounterAnomaly>) {
    let mut last_index: BTreeMap<(String, u32), usize> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        last_index.insert((r.machine_id.clone(), r.call_index), i);
    }
    let mut anomalies = Vec::new();
    let mut kept = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        if last_index[&(r.machine_id.clone(), r.call_index)] == i {
            kept.push(r);
        } else {
            anomalies.push(CounterAnomaly {
                machine_id: r.machine_id.clone(),
                reason: format!(
                    "duplicate (machine, call {}) pair; keeping the last occurrence",
                    r.call_index
                ),
            });
        }
    }
    (kept, anomalies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn nas_map() -> NasMap {
        let mut m = BTreeMap::new();
        m.insert("10.1.0.1".to_string(), Medium::Wire);
        m.insert("10.2.0.1".to_string(), Medium::Cellular);
        NasMap::new(m)
    }

    fn detail_block(machine: &str, input: u64, output: u64) -> String {
        format!(
            "2004-08-15T22:15:00Z\n\
             \tUser-Name = \"{machine}@C001\"\n\
             \tNAS-IP-Address = 10.1.0.1\n\
             \tAcct-Session-Time = 180\n\
             \tAcct-Input-Octets = {input}\n\
             \tAcct-Output-Octets = {output}\n\
             \tAcct-Input-Packets = 12\n\
             \tAcct-Output-Packets = 52\n\
             \tAcct-Terminate-Cause = NAS-Request\n\
             \tCalling-Station-Id = \"0212-5550101\"\n\n"
        )
    }

    #[test]
    fn parse_detail_block_maps_fields() {
        let text = detail_block("M0001", 6200, 27431);
        let parsed =
            parse_radius_detail(Cursor::new(text), &nas_map(), ParseMode::Strict).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let r = &parsed.records[0];
        assert_eq!(r.machine_id, "M0001");
        assert_eq!(r.center_id, "C001");
        assert_eq!(r.input_octets, 6200);
        assert_eq!(r.output_octets, 27431);
        assert_eq!(r.medium, Medium::Wire);
        assert_eq!(r.session_stop - r.session_start, 180);
        assert_eq!(r.call_index, 1);
        assert_eq!(r.terminate_cause, TerminateCause::ServerRequest);
    }

    #[test]
    fn missing_attribute_strict_vs_lenient() {
        let text = detail_block("M0001", 6200, 27431).replace(
            "\tAcct-Output-Octets = 27431\n",
            "",
        );
        let err =
            parse_radius_detail(Cursor::new(text.clone()), &nas_map(), ParseMode::Strict)
                .unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { .. }));

        let lenient =
            parse_radius_detail(Cursor::new(text), &nas_map(), ParseMode::Lenient).unwrap();
        assert!(lenient.records.is_empty());
        assert_eq!(lenient.skipped.len(), 1);
        assert!(lenient.skipped[0].reason.contains("Acct-Output-Octets"));
    }

    #[test]
    fn call_index_counts_per_machine() {
        let text = format!(
            "{}{}{}",
            detail_block("M0001", 1, 1),
            detail_block("M0002", 2, 2),
            detail_block("M0001", 3, 3)
        );
        let parsed =
            parse_radius_detail(Cursor::new(text), &nas_map(), ParseMode::Strict).unwrap();
        let indices: Vec<(String, u32)> = parsed
            .records
            .iter()
            .map(|r| (r.machine_id.clone(), r.call_index))
            .collect();
        assert_eq!(
            indices,
            vec![
                ("M0001".to_string(), 1),
                ("M0002".to_string(), 1),
                ("M0001".to_string(), 2)
            ]
        );
    }

    #[test]
    fn epoch_header_accepted() {
        let text = detail_block("M0001", 1, 1).replace("2004-08-15T22:15:00Z", "1092608100");
        let parsed =
            parse_radius_detail(Cursor::new(text), &nas_map(), ParseMode::Strict).unwrap();
        assert_eq!(parsed.records[0].session_stop, 1092608100);
    }

    #[test]
    fn unknown_nas_rejected() {
        let text = detail_block("M0001", 1, 1).replace("10.1.0.1", "10.9.9.9");
        let err = parse_radius_detail(Cursor::new(text), &nas_map(), ParseMode::Strict)
            .unwrap_err();
        assert!(err.to_string().contains("10.9.9.9"));
    }

    #[test]
    fn tally_rows() {
        let csv = "machine_id,center_id,registered,yes,no,null,total,election_id\n\
                   M001,C01,520,194,306,0,500,PRR2004\n";
        let parsed = parse_tally_csv(Cursor::new(csv)).unwrap();
        assert_eq!(parsed.sheets.len(), 1);
        assert!(parsed.anomalies.is_empty());
        assert_eq!(parsed.sheets[0].total_votes, 500);
    }

    #[test]
    fn tally_total_mismatch_is_flagged_not_dropped() {
        let csv = "machine_id,center_id,registered,yes,no,null,total,election_id\n\
                   M001,C01,520,194,306,0,490,PRR2004\n";
        let parsed = parse_tally_csv(Cursor::new(csv)).unwrap();
        assert_eq!(parsed.sheets.len(), 1);
        assert_eq!(parsed.anomalies.len(), 1);
        assert_eq!(parsed.anomalies[0].machine_id, "M001");
    }

    #[test]
    fn tally_header_only() {
        let csv = "machine_id,center_id,registered,yes,no,null,total,election_id\n";
        let parsed = parse_tally_csv(Cursor::new(csv)).unwrap();
        assert!(parsed.sheets.is_empty());
    }

    #[test]
    fn tally_missing_column() {
        let csv = "machine_id,center_id,registered,yes,no,null,election_id\nM,C,1,1,0,0,PRR2004\n";
        assert!(matches!(
            parse_tally_csv(Cursor::new(csv)),
            Err(IngestError::MissingColumn(c)) if c == "total"
        ));
    }

    #[test]
    fn tally_non_numeric_cell() {
        let csv = "machine_id,center_id,registered,yes,no,null,total,election_id\n\
                   M001,C01,520,abc,306,0,500,PRR2004\n";
        assert!(matches!(
            parse_tally_csv(Cursor::new(csv)),
            Err(IngestError::NonNumericCell { row: 2, .. })
        ));
    }

    #[test]
    fn tally_candidate_columns() {
        let csv = "machine_id,center_id,registered,yes,no,null,total,election_id,CHAVEZ,OPP_1\n\
                   M001,C01,800,0,0,10,510,E2000,300,200\n";
        let parsed = parse_tally_csv(Cursor::new(csv)).unwrap();
        let sheet = &parsed.sheets[0];
        assert_eq!(sheet.candidate_votes["CHAVEZ"], 300);
        assert_eq!(sheet.candidate_votes["OPP_1"], 200);
        assert!(sheet.total_consistent());
    }

    fn quick_record(machine: &str, start: i64, call: u32, octets: u64) -> TransmissionRecord {
        TransmissionRecord {
            machine_id: machine.into(),
            center_id: "C001".into(),
            medium: Medium::Wire,
            session_start: start,
            session_stop: start + 100,
            input_octets: octets,
            output_octets: octets,
            input_packets: 1,
            output_packets: 1,
            terminate_cause: TerminateCause::ServerRequest,
            call_index: call,
        }
    }

    fn quick_tally(machine: &str) -> TallySheet {
        TallySheet {
            machine_id: machine.into(),
            center_id: "C001".into(),
            registered_voters: 100,
            yes_votes: 40,
            no_votes: 50,
            null_votes: 0,
            total_votes: 90,
            election_id: ElectionId::Prr2004,
            candidate_votes: BTreeMap::new(),
        }
    }

    #[test]
    fn cross_check_clean() {
        let records = vec![quick_record("M1", 2000, 1, 5), quick_record("M2", 2100, 1, 5)];
        let tallies = vec![quick_tally("M1"), quick_tally("M2")];
        let report = cross_check(&records, &tallies, 1000);
        assert_eq!(report.matched, 2);
        assert!(report.log_only.is_empty());
        assert!(report.tally_only.is_empty());
        assert!(report.time_anomalies.is_empty());
        assert!(report.counter_anomalies.is_empty());
    }

    #[test]
    fn cross_check_set_differences_swap() {
        let records = vec![quick_record("A", 2000, 1, 5), quick_record("B", 2000, 1, 5)];
        let tallies = vec![quick_tally("B"), quick_tally("C")];
        let report = cross_check(&records, &tallies, 1000);
        assert_eq!(report.log_only, vec!["A".to_string()]);
        assert_eq!(report.tally_only, vec!["C".to_string()]);
        assert_eq!(report.matched, 1);
        assert_eq!(report.matched + report.log_only.len(), 2);
    }

    #[test]
    fn cross_check_pre_close_session() {
        // Final session starting 60 s before close: one anomaly; the bound
        // is strict, so starting exactly at close is clean.
        let records = vec![quick_record("M1", 940, 1, 5)];
        let tallies = vec![quick_tally("M1")];
        let report = cross_check(&records, &tallies, 1000);
        assert_eq!(report.time_anomalies.len(), 1);
        assert_eq!(report.time_anomalies[0].session_start, 940);

        let at_close = vec![quick_record("M1", 1000, 1, 5)];
        assert!(cross_check(&at_close, &tallies, 1000).time_anomalies.is_empty());
    }

    #[test]
    fn cross_check_zero_octets_and_duplicates() {
        let records = vec![
            quick_record("M1", 2000, 1, 0),
            quick_record("M1", 2100, 1, 5),
        ];
        let report = cross_check(&records, &[quick_tally("M1")], 1000);
        assert_eq!(report.counter_anomalies.len(), 2);
    }

    #[test]
    fn dedup_keeps_last() {
        let records = vec![
            quick_record("M1", 2000, 1, 1),
            quick_record("M1", 2100, 1, 2),
            quick_record("M2", 2000, 1, 3),
        ];
        let (kept, anomalies) = dedup_records(records);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].input_octets, 2);
        assert_eq!(anomalies.len(), 1);
    }
}
