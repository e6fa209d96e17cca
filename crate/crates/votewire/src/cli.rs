//! The `votewire` command line: ingest, classify, regress, compare,
//! simulate and report subcommands gluing the pipeline together.
//!
//! Exit codes: 0 success, 2 data error (parsing, validation, empty
//! selections), 3 I/O error. Every command writes its artifacts plus a
//! `manifest.json` of content hashes; re-running on unchanged inputs
//! reproduces the manifest bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::classify::{
    self, assign_subgroups, center_subgroup_counts, classify_centers, classify_machines,
    ClassifyThresholds, MachineClassification,
};
use crate::ingest::{self, ParseMode};
use crate::model::{
    abstention_percentage, candidate_percentage, no_percentage, ElectionId, TallySheet,
    TestResult, TrafficClass, TransmissionRecord, VoteBasis, VotingCenter,
};
use crate::regression::{group_regression, Direction, GroupSelector};
use crate::report::{self, Manifest, MeansSeries};
use crate::simulate::{
    self, calibration_run, generate_scenario, write_nas_map_csv, write_radius_detail,
    write_registry_csv, write_tally_csv, ScenarioConfig,
};
use crate::stats::{self, Sample};

pub const DEFAULT_SEED: u64 = 20_040_815;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ingest::IngestError> for CliError {
    fn from(e: ingest::IngestError) -> Self {
        match e {
            ingest::IngestError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<classify::ClassifyError> for CliError {
    fn from(e: classify::ClassifyError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::regression::RegressionError> for CliError {
    fn from(e: crate::regression::RegressionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<stats::StatsError> for CliError {
    fn from(e: stats::StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<simulate::SimulateError> for CliError {
    fn from(e: simulate::SimulateError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "votewire",
    version,
    about = "Forensic analysis of electronic-voting transmission logs and tallies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse accounting detail logs, tallies and the registry; cross-check
    /// the evidence sources and persist a normalized dataset.
    Ingest(IngestArgs),
    /// Classify machines and centers by traffic volume.
    Classify(ClassifyArgs),
    /// Fit bytes-versus-votes regressions for one group.
    Regress(RegressArgs),
    /// Compare a metric's distributions across groups and elections.
    Compare(CompareArgs),
    /// Generate a synthetic scenario and write its evidence files.
    Simulate(SimulateArgs),
    /// Build the full markdown + SVG report from an ingested run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Accounting detail files.
    #[arg(long = "radius", required = true, num_args = 1..)]
    pub radius: Vec<PathBuf>,
    /// Tally CSV files (one or more; multiple elections allowed).
    #[arg(long = "tally", required = true, num_args = 1..)]
    pub tally: Vec<PathBuf>,
    /// NAS address to medium mapping CSV.
    #[arg(long = "nas-map")]
    pub nas_map: PathBuf,
    /// Center registry CSV.
    #[arg(long = "registry")]
    pub registry: Option<PathBuf>,
    /// Abort on the first malformed block instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Poll closing time, epoch seconds or RFC 3339.
    #[arg(long = "poll-close", default_value = "1092600000")]
    pub poll_close: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Run directory holding dataset.jsonl.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Group selector: A, B, C, G1 or G2.
    #[arg(long)]
    pub group: String,
    /// Octet direction: incoming or outgoing.
    #[arg(long)]
    pub direction: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Metric: no-pct (per machine), abstention (per center) or
    /// candidate-pct (per center).
    #[arg(long)]
    pub metric: String,
    /// Elections to include, comma separated (default: PRR2004).
    #[arg(long, default_value = "PRR2004")]
    pub elections: String,
    /// Denominator basis for candidate-pct: valid or total.
    #[arg(long, default_value = "valid")]
    pub basis: String,
    /// Bins of the two-sample chi-square test.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario config JSON; omit to use the built-in 2004 pack.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scale of the built-in pack (fraction of the full fleet).
    #[arg(long, default_value_t = 0.1)]
    pub scale: f64,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also run a transmission calibration with this test-file size.
    #[arg(long = "calibrate-file-size")]
    pub calibrate_file_size: Option<u64>,
    #[arg(long = "calibrate-reps", default_value_t = 5)]
    pub calibrate_reps: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory holding dataset.jsonl (from `ingest` or `simulate`).
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses argv and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Ingest(args) => cmd_ingest(&args),
        Command::Classify(args) => cmd_classify(&args),
        Command::Regress(args) => cmd_regress(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Report(args) => cmd_report(&args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("votewire: error: {e}");
            e.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// Normalized dataset (JSON-lines)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DatasetLine {
    Record(TransmissionRecord),
    Tally(TallySheet),
    Center(VotingCenter),
}

/// The normalized evidence a run operates on.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<TransmissionRecord>,
    pub tallies: Vec<TallySheet>,
    pub centers: Vec<VotingCenter>,
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    for r in &dataset.records {
        serde_json::to_writer(&mut buf, &DatasetLine::Record(r.clone()))?;
        buf.push(b'\n');
    }
    for t in &dataset.tallies {
        serde_json::to_writer(&mut buf, &DatasetLine::Tally(t.clone()))?;
        buf.push(b'\n');
    }
    for c in &dataset.centers {
        serde_json::to_writer(&mut buf, &DatasetLine::Center(c.clone()))?;
        buf.push(b'\n');
    }
    fs::write(path, &buf)?;
    Ok(buf)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let mut dataset = Dataset::default();
    for (no, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DatasetLine = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("dataset line {}: {e}", no + 1)))?;
        match parsed {
            DatasetLine::Record(r) => dataset.records.push(r),
            DatasetLine::Tally(t) => dataset.tallies.push(t),
            DatasetLine::Center(c) => dataset.centers.push(c),
        }
    }
    // Registry rows arrive without membership; rebuild it from the tallies.
    let mut members: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for t in &dataset.tallies {
        if t.election_id == ElectionId::Prr2004 {
            members
                .entry(t.center_id.clone())
                .or_default()
                .push(t.machine_id.clone());
        }
    }
    for c in &mut dataset.centers {
        if c.machine_ids.is_empty() {
            if let Some(m) = members.remove(&c.center_id) {
                c.machine_ids = m;
            }
        }
    }
    Ok(dataset)
}

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct IngestReport {
    radius_files: usize,
    tally_files: usize,
    records: usize,
    skipped_blocks: usize,
    skipped: Vec<ingest::BlockDiagnostic>,
    tally_rows: usize,
    tally_anomalies: Vec<ingest::TallyAnomaly>,
    duplicate_records: Vec<ingest::CounterAnomaly>,
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let poll_close = ingest::parse_timestamp(&args.poll_close)
        .ok_or_else(|| CliError::Data(format!("unparseable --poll-close {:?}", args.poll_close)))?;
    let mode = if args.strict { ParseMode::Strict } else { ParseMode::Lenient };
    let nas_file = fs::File::open(&args.nas_map)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", args.nas_map.display())))?;
    let nas_map = ingest::parse_nas_map_csv(nas_file)?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for path in &args.radius {
        let file = fs::File::open(path)
            .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
        let parsed = ingest::parse_radius_detail(BufReader::new(file), &nas_map, mode)?;
        records.extend(parsed.records);
        skipped.extend(parsed.skipped);
    }
    let (records, duplicates) = ingest::dedup_records(records);

    let mut tallies = Vec::new();
    let mut tally_anomalies = Vec::new();
    for path in &args.tally {
        let file = fs::File::open(path)
            .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
        let parsed = ingest::parse_tally_csv(file)?;
        tallies.extend(parsed.sheets);
        tally_anomalies.extend(parsed.anomalies);
    }

    let centers = match &args.registry {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
            ingest::parse_registry_csv(file)?
        }
        None => Vec::new(),
    };

    let crosscheck = ingest::cross_check(&records, &tallies, poll_close);
    let dataset = Dataset { records, tallies, centers };

    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::default();
    let dataset_bytes = save_dataset(&dataset, &args.out.join("dataset.jsonl"))?;
    manifest.record("dataset.jsonl", &dataset_bytes);
    manifest.write_file(
        &args.out,
        "crosscheck.json",
        serde_json::to_string_pretty(&crosscheck)?.as_bytes(),
    )?;
    let report = IngestReport {
        radius_files: args.radius.len(),
        tally_files: args.tally.len(),
        records: dataset.records.len(),
        skipped_blocks: skipped.len(),
        skipped,
        tally_rows: dataset.tallies.len(),
        tally_anomalies,
        duplicate_records: duplicates,
    };
    manifest.write_file(
        &args.out,
        "ingest_report.json",
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    manifest.save(&args.out)?;
    println!(
        "ingested {} records, {} tallies ({} matched machines, {} skipped blocks)",
        dataset.records.len(),
        dataset.tallies.len(),
        crosscheck.matched,
        report.skipped_blocks
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

fn classified_machines(dataset: &Dataset) -> Result<Vec<MachineClassification>, CliError> {
    let mut machines = classify_machines(&dataset.records, &ClassifyThresholds::default())?;
    assign_subgroups(&mut machines);
    Ok(machines)
}

pub fn cmd_classify(args: &ClassifyArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset.join("dataset.jsonl"))?;
    if dataset.records.is_empty() {
        return Err(CliError::Data("dataset holds no transmission records".into()));
    }
    let machines = classified_machines(&dataset)?;
    let centers = classify_centers(&machines)?;
    let partition = report::class_partition(&machines, &centers, &dataset.tallies);

    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::default();
    manifest.write_file(
        &args.out,
        "classification.csv",
        report::classification_csv(&machines).as_bytes(),
    )?;
    manifest.write_file(&args.out, "centers.csv", report::centers_csv(&centers).as_bytes())?;
    manifest.write_file(
        &args.out,
        "partition.csv",
        report::partition_csv(&partition).as_bytes(),
    )?;
    // Subgroup proportions of High Traffic centers, when a split exists.
    let subgroup_centers = center_subgroup_counts(&machines);
    if !subgroup_centers.is_empty() {
        if let Ok((test, breakdown)) =
            classify::mixed_center_proportions_test(&subgroup_centers, 0.33)
        {
            let body = serde_json::json!({
                "observed": breakdown.observed,
                "expected": breakdown.expected,
                "test": test,
            });
            manifest.write_file(
                &args.out,
                "subgroup_proportions.json",
                serde_json::to_string_pretty(&body)?.as_bytes(),
            )?;
        }
    }
    if !dataset.centers.is_empty() {
        if let Ok(rows) = classify::regional_composition(&centers, &dataset.centers) {
            manifest.write_file(&args.out, "regions.csv", report::region_csv(&rows).as_bytes())?;
        }
    }
    manifest.save(&args.out)?;
    for row in &partition {
        println!(
            "{}: {} centers, {} machines, {} votes ({}%)",
            row.class,
            row.centers,
            row.machines,
            row.votes,
            report::fmt2(row.vote_share_percent)
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// regress
// ---------------------------------------------------------------------------

pub fn cmd_regress(args: &RegressArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset.join("dataset.jsonl"))?;
    let selector = GroupSelector::parse(&args.group)
        .ok_or_else(|| CliError::Data(format!("unknown group {:?}", args.group)))?;
    let direction = Direction::parse(&args.direction)
        .ok_or_else(|| CliError::Data(format!("unknown direction {:?}", args.direction)))?;
    let machines = classified_machines(&dataset)?;
    let (fit, scatter) = group_regression(&machines, &dataset.tallies, selector, direction)?;

    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::default();
    let stem = format!("{}_{}", selector.label().to_lowercase(), direction.as_str());
    manifest.write_file(
        &args.out,
        &format!("fit_{stem}.json"),
        serde_json::to_string_pretty(&fit)?.as_bytes(),
    )?;
    manifest.write_file(
        &args.out,
        &format!("scatter_{stem}.csv"),
        report::scatter_csv(&scatter).as_bytes(),
    )?;
    manifest.save(&args.out)?;
    println!(
        "{} {}: bytes = {} (+/- {}) + {} (+/- {}) * votes   [n={}, r2={}]",
        selector.label(),
        direction.as_str(),
        report::fmt2(fit.intercept),
        report::fmt2(fit.intercept_se),
        report::fmt2(fit.slope),
        report::fmt2(fit.slope_se),
        fit.n,
        report::fmt2(fit.r_squared)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    NoPct,
    Abstention,
    CandidatePct,
}

impl Metric {
    fn parse(s: &str) -> Option<Metric> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no-pct" | "no" => Some(Metric::NoPct),
            "abstention" => Some(Metric::Abstention),
            "candidate-pct" | "candidate" => Some(Metric::CandidatePct),
            _ => None,
        }
    }

    fn is_center_level(self) -> bool {
        matches!(self, Metric::Abstention | Metric::CandidatePct)
    }
}

/// Pro-government option of an election: the referendum counts NO votes,
/// the earlier presidential events the incumbent's column.
fn progov_option(election: ElectionId) -> &'static str {
    match election {
        ElectionId::Prr2004 => "NO",
        _ => "CHAVEZ",
    }
}

/// Aggregates tallies of one center for one election.
fn center_tally(center_id: &str, election: ElectionId, tallies: &[TallySheet]) -> TallySheet {
    let mut agg = TallySheet {
        machine_id: String::new(),
        center_id: center_id.to_string(),
        registered_voters: 0,
        yes_votes: 0,
        no_votes: 0,
        null_votes: 0,
        total_votes: 0,
        election_id: election,
        candidate_votes: BTreeMap::new(),
    };
    for t in tallies {
        if t.center_id == center_id && t.election_id == election {
            agg.registered_voters += t.registered_voters;
            agg.yes_votes += t.yes_votes;
            agg.no_votes += t.no_votes;
            agg.null_votes += t.null_votes;
            agg.total_votes += t.total_votes;
            for (name, count) in &t.candidate_votes {
                *agg.candidate_votes.entry(name.clone()).or_insert(0) += count;
            }
        }
    }
    agg
}

/// Builds the comparison groups for a metric over classes and elections.
/// Group labels are `A`, `B`, `C` for single-election runs and
/// `A-1998`-style for multi-election runs.
pub fn build_groups(
    dataset: &Dataset,
    machines: &[MachineClassification],
    metric: Metric,
    elections: &[ElectionId],
    basis: VoteBasis,
) -> Result<Vec<Sample>, CliError> {
    let class_of_machine: BTreeMap<&str, TrafficClass> = machines
        .iter()
        .map(|m| (m.machine_id.as_str(), m.traffic_class))
        .collect();
    let class_of_center: BTreeMap<String, TrafficClass> = classify_centers(machines)?
        .into_iter()
        .map(|c| (c.center_id, c.center_class))
        .collect();
    let classes = [TrafficClass::HighWire, TrafficClass::LowWire, TrafficClass::Cellular];
    let mut groups = Vec::new();
    for &class in &classes {
        for &election in elections {
            let label = if elections.len() == 1 {
                class.letter().to_string()
            } else {
                format!("{}-{}", class.letter(), election)
            };
            let values: Vec<f64> = match metric {
                Metric::NoPct => dataset
                    .tallies
                    .iter()
                    .filter(|t| {
                        t.election_id == election
                            && class_of_machine.get(t.machine_id.as_str()) == Some(&class)
                    })
                    .filter_map(|t| no_percentage(t).ok())
                    .collect(),
                Metric::Abstention | Metric::CandidatePct => {
                    let center_ids: Vec<&str> = class_of_center
                        .iter()
                        .filter(|(_, &c)| c == class)
                        .map(|(id, _)| id.as_str())
                        .collect();
                    center_ids
                        .iter()
                        .filter_map(|cid| {
                            let agg = center_tally(cid, election, &dataset.tallies);
                            if agg.total_votes == 0 && agg.registered_voters == 0 {
                                return None;
                            }
                            match metric {
                                Metric::Abstention => abstention_percentage(&agg).ok(),
                                _ => candidate_percentage(&agg, progov_option(election), basis)
                                    .ok(),
                            }
                        })
                        .collect()
                }
            };
            if !values.is_empty() {
                groups.push(Sample::new(label, values)?);
            }
        }
    }
    if groups.len() < 2 {
        return Err(CliError::Data(
            "comparison needs at least two nonempty groups".into(),
        ));
    }
    Ok(groups)
}

/// The full battery over k groups: one ANOVA, one Van der Waerden, one
/// pooled t and one binned chi-square (the latter two over the two largest
/// groups when k > 2).
pub fn run_battery(groups: &[Sample], bins: usize) -> Result<Vec<TestResult>, CliError> {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(groups[i].len()));
    let (first, second) = (&groups[order[0].min(order[1])], &groups[order[0].max(order[1])]);
    Ok(vec![
        stats::anova_f(groups)?,
        stats::van_der_waerden(groups)?,
        stats::t_test_two_sample(first, second, true)?,
        stats::chi_square_independence(first, second, bins)?,
    ])
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset.join("dataset.jsonl"))?;
    let metric = Metric::parse(&args.metric)
        .ok_or_else(|| CliError::Data(format!("unknown metric {:?}", args.metric)))?;
    let basis = match args.basis.trim().to_ascii_lowercase().as_str() {
        "valid" => VoteBasis::ValidOnly,
        "total" => VoteBasis::TotalWithNulls,
        other => return Err(CliError::Data(format!("unknown basis {other:?}"))),
    };
    let mut elections = Vec::new();
    for part in args.elections.split(',') {
        let id = ElectionId::parse(part)
            .ok_or_else(|| CliError::Data(format!("unknown election {part:?}")))?;
        if !elections.contains(&id) {
            elections.push(id);
        }
    }
    elections.sort();
    if metric == Metric::NoPct && elections != vec![ElectionId::Prr2004] {
        return Err(CliError::Data(
            "no-pct is a referendum metric; use --elections PRR2004".into(),
        ));
    }

    let machines = classified_machines(&dataset)?;
    let groups = build_groups(&dataset, &machines, metric, &elections, basis)?;
    let tests = run_battery(&groups, args.bins)?;
    let summaries: Vec<(String, crate::model::DistributionSummary)> = groups
        .iter()
        .map(|g| Ok((g.label.clone(), stats::summarize(g)?)))
        .collect::<Result<_, stats::StatsError>>()?;

    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::default();
    manifest.write_file(&args.out, "summaries.csv", report::summaries_csv(&summaries).as_bytes())?;
    manifest.write_file(&args.out, "tests.json", report::tests_json(&tests).as_bytes())?;

    // Q-Q pairs: every pair for small k, adjacent pairs otherwise.
    let pairs: Vec<(usize, usize)> = if groups.len() <= 4 {
        (0..groups.len())
            .flat_map(|i| ((i + 1)..groups.len()).map(move |j| (i, j)))
            .collect()
    } else {
        (0..groups.len() - 1).map(|i| (i, i + 1)).collect()
    };
    for (i, j) in pairs {
        let points = stats::qq_points(&groups[i], &groups[j], 99)?;
        let name = format!(
            "qq_{}_vs_{}.csv",
            groups[i].label.to_lowercase(),
            groups[j].label.to_lowercase()
        );
        manifest.write_file(&args.out, &name, report::qq_csv(&points).as_bytes())?;
    }

    // Cross-election artifacts for center-level metrics.
    if metric.is_center_level() && elections.len() >= 2 {
        let diff_rows = difference_rows(&dataset, &machines, metric, &elections, basis)?;
        manifest.write_file(
            &args.out,
            "differences.csv",
            report::differences_csv(&diff_rows).as_bytes(),
        )?;
        let chi = chi_matrix(&dataset, &machines, metric, &elections, basis, args.bins)?;
        manifest.write_file(&args.out, "chi_matrix.csv", chi.as_bytes())?;
    }
    manifest.save(&args.out)?;

    for t in &tests {
        println!(
            "{}: statistic {} (df {}), p = {}",
            t.test_name,
            report::fmt2(t.statistic),
            t.df,
            report::fmt_p(t.p_value)
        );
    }
    Ok(())
}

/// Per-class mean/std of per-center metric differences between consecutive
/// elections.
fn difference_rows(
    dataset: &Dataset,
    machines: &[MachineClassification],
    metric: Metric,
    elections: &[ElectionId],
    basis: VoteBasis,
) -> Result<Vec<report::DifferenceRow>, CliError> {
    let class_of_center: BTreeMap<String, TrafficClass> = classify_centers(machines)?
        .into_iter()
        .map(|c| (c.center_id, c.center_class))
        .collect();
    let mut rows = Vec::new();
    for &class in &[TrafficClass::HighWire, TrafficClass::LowWire, TrafficClass::Cellular] {
        let centers: Vec<&String> = class_of_center
            .iter()
            .filter(|(_, &c)| c == class)
            .map(|(id, _)| id)
            .collect();
        for pair in elections.windows(2) {
            let (ea, eb) = (pair[0], pair[1]);
            let mut diffs = Vec::new();
            for cid in &centers {
                let value = |e: ElectionId| {
                    let agg = center_tally(cid, e, &dataset.tallies);
                    if agg.registered_voters == 0 {
                        return None;
                    }
                    match metric {
                        Metric::Abstention => abstention_percentage(&agg).ok(),
                        _ => candidate_percentage(&agg, progov_option(e), basis).ok(),
                    }
                };
                if let (Some(a), Some(b)) = (value(ea), value(eb)) {
                    diffs.push(b - a);
                }
            }
            if diffs.len() >= 2 {
                let sample = Sample::new(format!("{}-{}to{}", class.letter(), ea, eb), diffs)?;
                rows.push(report::DifferenceRow {
                    level: sample.label.clone(),
                    n: sample.len(),
                    mean: sample.mean(),
                    std: sample.std(),
                });
            }
        }
    }
    Ok(rows)
}

/// Chi-square matrix of per-center distributions between election pairs,
/// one row per pair per class.
fn chi_matrix(
    dataset: &Dataset,
    machines: &[MachineClassification],
    metric: Metric,
    elections: &[ElectionId],
    basis: VoteBasis,
    bins: usize,
) -> Result<String, CliError> {
    use std::fmt::Write as _;
    let mut out = String::from("class,election_a,election_b,chisq,df,p\n");
    for &class in &[TrafficClass::HighWire, TrafficClass::LowWire, TrafficClass::Cellular] {
        let groups = build_groups(dataset, machines, metric, elections, basis)?;
        for i in 0..elections.len() {
            for j in (i + 1)..elections.len() {
                let la = format!("{}-{}", class.letter(), elections[i]);
                let lb = format!("{}-{}", class.letter(), elections[j]);
                let (Some(a), Some(b)) = (
                    groups.iter().find(|g| g.label == la),
                    groups.iter().find(|g| g.label == lb),
                ) else {
                    continue;
                };
                let r = stats::chi_square_independence(a, b, bins)?;
                let df = match r.df {
                    crate::model::DegreesOfFreedom::One(d) => d,
                    crate::model::DegreesOfFreedom::Two(d, _) => d,
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    class.letter(),
                    elections[i],
                    elections[j],
                    report::fmt2(r.statistic),
                    df,
                    report::fmt_p(r.p_value)
                );
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let body = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<ScenarioConfig>(&body)
                .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?
        }
        None => ScenarioConfig::pack_2004(args.scale, DEFAULT_SEED),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dataset = generate_scenario(&config)?;

    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::default();

    let wire: Vec<TransmissionRecord> = dataset
        .records
        .iter()
        .filter(|r| r.medium == crate::model::Medium::Wire)
        .cloned()
        .collect();
    let cellular: Vec<TransmissionRecord> = dataset
        .records
        .iter()
        .filter(|r| r.medium == crate::model::Medium::Cellular)
        .cloned()
        .collect();
    for (name, records) in [("wire.detail", &wire), ("cellular.detail", &cellular)] {
        let mut buf = Vec::new();
        write_radius_detail(records, &dataset.nas_map, &mut buf)?;
        manifest.write_file(&args.out, name, &buf)?;
    }
    let mut elections: Vec<ElectionId> =
        dataset.tallies.iter().map(|t| t.election_id).collect();
    elections.sort();
    elections.dedup();
    for election in elections {
        let sheets: Vec<TallySheet> = dataset
            .tallies
            .iter()
            .filter(|t| t.election_id == election)
            .cloned()
            .collect();
        let mut buf = Vec::new();
        write_tally_csv(&sheets, &mut buf)?;
        let name = format!("tallies_{}.csv", election.as_str().to_lowercase());
        manifest.write_file(&args.out, &name, &buf)?;
    }
    let mut buf = Vec::new();
    write_registry_csv(&dataset.centers, &mut buf)?;
    manifest.write_file(&args.out, "registry.csv", &buf)?;
    let mut buf = Vec::new();
    write_nas_map_csv(&dataset.nas_map, &mut buf)?;
    manifest.write_file(&args.out, "nas_map.csv", &buf)?;
    manifest.write_file(
        &args.out,
        "ground_truth.json",
        serde_json::to_string_pretty(&dataset.truth)?.as_bytes(),
    )?;
    manifest.write_file(
        &args.out,
        "scenario_config.json",
        serde_json::to_string_pretty(&config)?.as_bytes(),
    )?;
    if let Some(file_size) = args.calibrate_file_size {
        let report = calibration_run(&config, file_size, args.calibrate_reps)?;
        manifest.write_file(
            &args.out,
            "calibration.json",
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?;
    }
    manifest.save(&args.out)?;
    println!(
        "simulated {} machines in {} centers ({} records, {} tallies)",
        dataset.truth.machines.len(),
        dataset.centers.len(),
        dataset.records.len(),
        dataset.tallies.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let dataset_path = args.run.join("dataset.jsonl");
    if !dataset_path.exists() {
        // A simulate directory can also serve as a run: ingest it in place.
        let alt = ingest_run_dir(&args.run)?;
        return build_report(&alt, args);
    }
    let dataset = load_dataset(&dataset_path)?;
    build_report(&dataset, args)
}

/// Loads a `simulate` output directory as a dataset.
fn ingest_run_dir(dir: &Path) -> Result<Dataset, CliError> {
    let nas_path = dir.join("nas_map.csv");
    if !nas_path.exists() {
        return Err(CliError::Io(format!(
            "{} holds neither dataset.jsonl nor simulator output",
            dir.display()
        )));
    }
    let nas_map = ingest::parse_nas_map_csv(fs::File::open(&nas_path)?)?;
    let mut records = Vec::new();
    for name in ["wire.detail", "cellular.detail"] {
        let path = dir.join(name);
        if path.exists() {
            let parsed = ingest::parse_radius_detail(
                BufReader::new(fs::File::open(path)?),
                &nas_map,
                ParseMode::Strict,
            )?;
            records.extend(parsed.records);
        }
    }
    let mut tallies = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name.starts_with("tallies_") && name.ends_with(".csv") {
            let parsed = ingest::parse_tally_csv(fs::File::open(entry.path())?)?;
            tallies.extend(parsed.sheets);
        }
    }
    let centers = match fs::File::open(dir.join("registry.csv")) {
        Ok(f) => ingest::parse_registry_csv(f)?,
        Err(_) => Vec::new(),
    };
    if records.is_empty() {
        return Err(CliError::Io("run directory holds no transmission records".into()));
    }
    Ok(Dataset { records, tallies, centers })
}

fn build_report(dataset: &Dataset, args: &ReportArgs) -> Result<(), CliError> {
    if dataset.records.is_empty() {
        return Err(CliError::Data("dataset holds no transmission records".into()));
    }
    ensure_out_dir(&args.out)?;
    let mut manifest = Manifest::default();
    let mut md = String::new();
    md.push_str("# Transmission forensics report\n\n");

    let machines = classified_machines(dataset)?;
    let centers = classify_centers(&machines)?;
    let partition = report::class_partition(&machines, &centers, &dataset.tallies);
    md.push_str("## Class partition\n\n");
    md.push_str(&report::md_table(
        &["class", "centers", "machines", "votes", "share %"],
        &partition
            .iter()
            .map(|r| {
                vec![
                    r.class.to_string(),
                    r.centers.to_string(),
                    r.machines.to_string(),
                    r.votes.to_string(),
                    report::fmt2(r.vote_share_percent),
                ]
            })
            .collect::<Vec<_>>(),
    ));
    md.push('\n');

    // Bytes-versus-votes scatter and fits per class and direction.
    md.push_str("## Bytes versus votes\n\n");
    for selector in [
        GroupSelector::Class(TrafficClass::HighWire),
        GroupSelector::Class(TrafficClass::LowWire),
        GroupSelector::Class(TrafficClass::Cellular),
        GroupSelector::Subgroup(classify::Subgroup::G1),
        GroupSelector::Subgroup(classify::Subgroup::G2),
    ] {
        for direction in [Direction::Incoming, Direction::Outgoing] {
            let Ok((fit, scatter)) =
                group_regression(&machines, &dataset.tallies, selector, direction)
            else {
                continue;
            };
            let stem = format!("{}_{}", selector.label().to_lowercase(), direction.as_str());
            let points: Vec<(f64, f64)> = scatter.iter().map(|p| (p.votes, p.bytes)).collect();
            let svg = report::scatter_svg(
                &format!("{} {} bytes vs votes", selector.label(), direction.as_str()),
                &points,
                Some(&fit),
                "votes per machine",
                "bytes",
            );
            manifest.write_file(&args.out, &format!("scatter_{stem}.svg"), svg.as_bytes())?;
            manifest.write_file(
                &args.out,
                &format!("fit_{stem}.json"),
                serde_json::to_string_pretty(&fit)?.as_bytes(),
            )?;
            md.push_str(&format!(
                "- `{}` {}: slope {} +/- {} bytes/vote (r2 {}, n {}) — ![scatter](scatter_{stem}.svg)\n",
                selector.label(),
                direction.as_str(),
                report::fmt2(fit.slope),
                report::fmt2(fit.slope_se),
                report::fmt2(fit.r_squared),
                fit.n
            ));
        }
    }
    md.push('\n');

    // NO share per machine across classes.
    if let Ok(groups) = build_groups(
        dataset,
        &machines,
        Metric::NoPct,
        &[ElectionId::Prr2004],
        VoteBasis::ValidOnly,
    ) {
        md.push_str("## NO share per machine\n\n");
        let summaries: Vec<(String, crate::model::DistributionSummary)> = groups
            .iter()
            .map(|g| Ok((g.label.clone(), stats::summarize(g)?)))
            .collect::<Result<_, stats::StatsError>>()?;
        manifest.write_file(
            &args.out,
            "no_pct_summaries.csv",
            report::summaries_csv(&summaries).as_bytes(),
        )?;
        let svg = report::box_plot_svg("NO share per machine", &summaries, "NO %");
        manifest.write_file(&args.out, "no_pct_box.svg", svg.as_bytes())?;
        md.push_str("![box plot](no_pct_box.svg)\n\n");
        if let Ok(tests) = run_battery(&groups, 20) {
            manifest.write_file(
                &args.out,
                "no_pct_tests.json",
                report::tests_json(&tests).as_bytes(),
            )?;
            md.push_str(&report::md_table(
                &["test", "statistic", "df", "p"],
                &tests
                    .iter()
                    .map(|t| {
                        vec![
                            t.test_name.clone(),
                            report::fmt2(t.statistic),
                            t.df.to_string(),
                            report::fmt_p(t.p_value),
                        ]
                    })
                    .collect::<Vec<_>>(),
            ));
            md.push('\n');
        }
        for i in 0..groups.len() {
            for j in (i + 1)..groups.len() {
                let points = stats::qq_points(&groups[i], &groups[j], 99)?;
                let name = format!(
                    "qq_{}_vs_{}.svg",
                    groups[i].label.to_lowercase(),
                    groups[j].label.to_lowercase()
                );
                let svg = report::qq_svg(
                    &format!("Q-Q {} vs {}", groups[i].label, groups[j].label),
                    &points,
                    &groups[i].label,
                    &groups[j].label,
                );
                manifest.write_file(&args.out, &name, svg.as_bytes())?;
                md.push_str(&format!("![qq](./{name})\n"));
            }
        }
        md.push('\n');
    }

    // Abstention across elections, when history is present.
    let mut elections: Vec<ElectionId> = dataset.tallies.iter().map(|t| t.election_id).collect();
    elections.sort();
    elections.dedup();
    if elections.len() >= 2 {
        md.push_str("## Abstention per center across elections\n\n");
        if let Ok(groups) = build_groups(
            dataset,
            &machines,
            Metric::Abstention,
            &elections,
            VoteBasis::ValidOnly,
        ) {
            let summaries: Vec<(String, crate::model::DistributionSummary)> = groups
                .iter()
                .map(|g| Ok((g.label.clone(), stats::summarize(g)?)))
                .collect::<Result<_, stats::StatsError>>()?;
            manifest.write_file(
                &args.out,
                "abstention_summaries.csv",
                report::summaries_csv(&summaries).as_bytes(),
            )?;
            let mut series = Vec::new();
            for class in ["A", "B", "C"] {
                let points: Vec<(String, f64, f64)> = summaries
                    .iter()
                    .filter(|(label, _)| label.starts_with(&format!("{class}-")))
                    .map(|(label, s)| {
                        (label.split('-').nth(1).unwrap_or("").to_string(), s.mean, s.std)
                    })
                    .collect();
                if !points.is_empty() {
                    series.push(MeansSeries { name: class.to_string(), points });
                }
            }
            let svg = report::means_chart_svg("Abstention per center", &series, "abstention %");
            manifest.write_file(&args.out, "abstention_means.svg", svg.as_bytes())?;
            md.push_str("![abstention](abstention_means.svg)\n\n");
            let diffs = difference_rows(
                dataset,
                &machines,
                Metric::Abstention,
                &elections,
                VoteBasis::ValidOnly,
            )?;
            manifest.write_file(
                &args.out,
                "abstention_differences.csv",
                report::differences_csv(&diffs).as_bytes(),
            )?;
        }
        let chi = chi_matrix(
            dataset,
            &machines,
            Metric::CandidatePct,
            &elections,
            VoteBasis::ValidOnly,
            20,
        )?;
        manifest.write_file(&args.out, "share_chi_matrix.csv", chi.as_bytes())?;
        md.push_str("Cross-election dependence of pro-government share per center: see `share_chi_matrix.csv`.\n\n");
    }

    // Regional composition, when a registry is present.
    if !dataset.centers.is_empty() {
        if let Ok(rows) = classify::regional_composition(&centers, &dataset.centers) {
            manifest.write_file(&args.out, "regions.csv", report::region_csv(&rows).as_bytes())?;
            md.push_str("## Regional composition\n\nSee `regions.csv` for per-municipality class counts and mixing indices.\n");
        }
    }

    manifest.write_file(&args.out, "report.md", md.as_bytes())?;
    manifest.save(&args.out)?;
    println!("report written to {} ({} artifacts)", args.out.display(), manifest.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_roundtrip_via_jsonl() {
        let dataset = generate_scenario(&ScenarioConfig::pack_2004(0.005, 3)).unwrap();
        let dir = std::env::temp_dir().join("votewire-test-jsonl");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dataset.jsonl");
        let source = Dataset {
            records: dataset.records.clone(),
            tallies: dataset.tallies.clone(),
            centers: dataset.centers.clone(),
        };
        save_dataset(&source, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.records, dataset.records);
        assert_eq!(loaded.tallies, dataset.tallies);
        assert_eq!(loaded.centers, dataset.centers);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn metric_parsing() {
        assert_eq!(Metric::parse("no-pct"), Some(Metric::NoPct));
        assert_eq!(Metric::parse("abstention"), Some(Metric::Abstention));
        assert_eq!(Metric::parse("candidate-pct"), Some(Metric::CandidatePct));
        assert_eq!(Metric::parse("bogus"), None);
    }
}
