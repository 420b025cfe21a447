//! `qdna`: sessions, verification, drift reports and classification.

mod keys;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use qdna_core::circuits::Seed;
use qdna_core::classify::{
    classification_report_csv, model_summary_csv, run_classification, ClassifyParams, CvConfig,
    ForestParams, LogRegParams,
};
use qdna_core::features::{features_csv, FeatureFile, Metric, FEATURE_FILE_SUFFIX};
use qdna_core::provenance::{redact, verify_file_bytes, VerificationReport, ARTIFACT_EXTENSION};
use qdna_core::report::{
    aggregate_csv, delta_table_csv, device_report, distance_matrix_csv, drift_series,
    drift_totals_csv, series_csv,
};
use qdna_core::session::{feature_file_of, record_session, SessionConfig, DEFAULT_SHOTS};
use qdna_core::sim::DeviceProfile;
use qdna_core::store::Store;

/// Fixed RFC 3339 timestamp for every record written by this process.
pub const FIXED_CLOCK_ENV: &str = "QDNA_FIXED_CLOCK";

pub mod exit {
    pub const OK: u8 = 0;
    /// Verification, audit or store admission failed.
    pub const CHECK_FAILED: u8 = 1;
    pub const BAD_ARGS: u8 = 2;
    pub const IO: u8 = 3;
    /// Too few sessions or no shared circuits.
    pub const INSUFFICIENT_DATA: u8 = 4;
}

#[derive(Debug)]
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn new(code: u8, err: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            err: err.into(),
        }
    }
}

impl From<qdna_core::Error> for Failure {
    fn from(e: qdna_core::Error) -> Self {
        use qdna_core::Error as E;
        let code = match &e {
            E::Rejected(_) | E::ChainLink { .. } | E::DuplicateSession { .. } => exit::CHECK_FAILED,
            E::InvalidArgument(_) | E::UnknownMetric(_) => exit::BAD_ARGS,
            E::InsufficientData(_) | E::NoSharedCircuits => exit::INSUFFICIENT_DATA,
            _ => exit::IO,
        };
        Failure::new(code, e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        match err.downcast::<qdna_core::Error>() {
            Ok(e) => e.into(),
            Err(err) => Failure::new(exit::IO, err),
        }
    }
}

type CmdResult = Result<u8, Failure>;

#[derive(Parser)]
#[command(name = "qdna", version, about = "Device fingerprinting with signed, hash-chained session records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create an HMAC secret and an RSA signing keypair.
    Keygen(KeygenArgs),
    /// Run probing sessions, seal them and append them to the store.
    Session(SessionArgs),
    /// Verify one artifact file locally or against a remote endpoint.
    Verify(VerifyArgs),
    /// Drift between consecutive sessions of one device.
    Drift(DriftArgs),
    /// Per-device report tables: series, drift, distances, correlations.
    Report(ReportArgs),
    /// Cross-validated two-device classification with a permutation test.
    Classify(ClassifyArgs),
    /// Walk stored chains and recompute every hash.
    Audit(AuditArgs),
    /// Serve the read-only verification endpoint.
    Serve(ServeArgs),
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2048)]
    bits: usize,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    store: PathBuf,
    /// Directory holding `hmac.key` and `signing_key.pem`.
    #[arg(long)]
    keys: PathBuf,
    /// Device profile TOML.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    profile: Option<PathBuf>,
    /// Built-in profile name (`sim_torino`, `sim_brisbane`).
    #[arg(long)]
    fixture: Option<String>,
    /// Session id, or the id prefix when `--count` is given.
    #[arg(long)]
    session_id: String,
    /// Run this many sessions named `<session-id><NNN>`.
    #[arg(long)]
    count: Option<usize>,
    /// First index used with `--count`.
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    shots: u64,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    chsh_shots: u64,
    /// Cadence label stored in the record metadata, e.g. `8h`.
    #[arg(long)]
    interval: Option<String>,
    /// Also write `<session>.features.json` files here.
    #[arg(long)]
    features_dir: Option<PathBuf>,
    /// Also write redacted public copies `<session>.qdna.json` here.
    #[arg(long)]
    redacted_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    artifact: PathBuf,
    #[arg(long, required_unless_present = "remote")]
    pubkey: Option<PathBuf>,
    #[arg(long)]
    hmac_key: Option<PathBuf>,
    /// Base URL of a `qdna serve` endpoint; the server's keys are used.
    #[arg(long, conflicts_with_all = ["pubkey", "hmac_key"])]
    remote: Option<String>,
}

/// Feature source: a store (chain order) or a directory of feature files.
#[derive(Args, Clone)]
struct Source {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, conflicts_with = "store")]
    features: Option<PathBuf>,
}

#[derive(Args)]
struct DriftArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    device: Option<String>,
    #[arg(long, default_value = "entropy")]
    metric: String,
    /// Write drift_totals.csv, delta_table.csv, series.csv and aggregate.csv here
    /// instead of printing drift totals.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    /// Devices to report on; all stored devices when omitted.
    #[arg(long = "device")]
    devices: Vec<String>,
    /// Feature-file directories, one device each.
    #[arg(long = "features", conflicts_with = "store")]
    feature_dirs: Vec<PathBuf>,
    #[arg(long, default_value = "entropy")]
    metric: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Feature-file directory of the first device.
    #[arg(long, requires = "b", conflicts_with = "store")]
    a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
    #[arg(long, requires_all = ["device_a", "device_b"])]
    store: Option<PathBuf>,
    #[arg(long)]
    device_a: Option<String>,
    #[arg(long)]
    device_b: Option<String>,
    /// Comma-separated metric names.
    #[arg(long, value_delimiter = ',', default_values_t = Metric::CLASSIFY_DEFAULT.map(|m| m.name().to_string()))]
    metrics: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    min_presence: f64,
    #[arg(long, default_value_t = 6)]
    folds: usize,
    #[arg(long, default_value_t = 999)]
    n_perm: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Choose the decision threshold on each test fold (optimistic).
    #[arg(long)]
    opt_threshold: bool,
    #[arg(long, default_value_t = 1.0)]
    l2_lambda: f64,
    #[arg(long)]
    class_weight: bool,
    #[arg(long, default_value_t = 200)]
    trees: usize,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    /// Write cv_report.json, cv_folds.csv and cv_summary.csv here instead of
    /// printing the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, required_unless_present = "remote")]
    store: Option<PathBuf>,
    /// Devices to audit; all stored devices when omitted.
    #[arg(long = "device")]
    devices: Vec<String>,
    /// Also check signatures.
    #[arg(long)]
    pubkey: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["store", "pubkey"])]
    remote: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    pubkey: PathBuf,
    /// Enables HMAC checks on uploaded artifacts.
    #[arg(long)]
    hmac_key: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
}

fn bad_args(msg: impl std::fmt::Display) -> Failure {
    Failure::new(exit::BAD_ARGS, anyhow!("{msg}"))
}

fn parse_metric(name: &str) -> Result<Metric, Failure> {
    name.parse().map_err(Failure::from)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
}

fn timestamp_now() -> Result<String, Failure> {
    match std::env::var(FIXED_CLOCK_ENV) {
        Ok(fixed) => {
            let t = chrono::DateTime::parse_from_rfc3339(&fixed)
                .map_err(|e| bad_args(format!("{FIXED_CLOCK_ENV}=`{fixed}`: {e}")))?;
            Ok(t.with_timezone(&chrono::Utc)
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        }
        Err(_) => Ok(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    }
}

fn cmd_keygen(args: KeygenArgs) -> CmdResult {
    let written = keys::generate(&args.out, args.bits)?;
    print_json(&written);
    Ok(exit::OK)
}

fn cmd_session(args: SessionArgs) -> CmdResult {
    let profile = match (&args.profile, &args.fixture) {
        (Some(path), _) => DeviceProfile::load(path)?,
        (None, Some(name)) => DeviceProfile::fixture(name)?,
        (None, None) => unreachable!("clap requires one"),
    };
    if args.shots == 0 || args.chsh_shots == 0 {
        return Err(bad_args("shots must be >= 1"));
    }
    let (hmac, sk) = keys::load_signing(&args.keys)?;
    let store = Store::open(&args.store)?;
    let ids: Vec<String> = match args.count {
        None => vec![args.session_id.clone()],
        Some(n) => (args.start..args.start + n)
            .map(|i| format!("{}{i:03}", args.session_id))
            .collect(),
    };
    let timestamp = timestamp_now()?;

    let mut out = csv::Writer::from_writer(std::io::stdout());
    out.write_record(["device_id", "session_id", "position", "record_hash", "chsh_s", "chsh_pass"])
        .context("stdout")?;
    for id in &ids {
        let cfg = SessionConfig {
            shots: args.shots,
            chsh_shots: args.chsh_shots,
            interval_label: args.interval.clone(),
            ..SessionConfig::new(id, Seed(args.seed), &timestamp)
        };
        let (artifact, pos) = record_session(&store, &profile, &cfg, &hmac, &sk)?;
        if let Some(dir) = &args.features_dir {
            let ff = feature_file_of(&artifact.record);
            write_file(&dir.join(format!("{id}{FEATURE_FILE_SUFFIX}")), &ff.to_json())?;
        }
        if let Some(dir) = &args.redacted_dir {
            let public = redact(&artifact)?;
            let bytes = String::from_utf8(public.to_bytes()).expect("artifact json is utf-8");
            write_file(&dir.join(format!("{id}.{ARTIFACT_EXTENSION}")), &bytes)?;
        }
        out.write_record([
            profile.device_id.clone(),
            id.clone(),
            pos.to_string(),
            artifact.record_hash.to_string(),
            artifact.record.chsh.s.to_string(),
            artifact.record.chsh.pass.to_string(),
        ])
        .context("stdout")?;
        out.flush().context("stdout")?;
    }
    Ok(exit::OK)
}

fn report_verdict(report: &VerificationReport) -> u8 {
    print_json(report);
    if report.passed {
        exit::OK
    } else {
        eprintln!("verification failed: {}", report.failed_checks().join(", "));
        exit::CHECK_FAILED
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new(exit::IO, e))
}

fn client_failure(e: qdna_client::ClientError) -> Failure {
    match e.status() {
        // the server could not parse the upload
        Some(422) => Failure::new(exit::IO, e),
        Some(400) => Failure::new(exit::BAD_ARGS, e),
        _ => Failure::new(exit::IO, e),
    }
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let bytes = fs::read(&args.artifact)
        .with_context(|| format!("reading {}", args.artifact.display()))?;
    if let Some(base) = &args.remote {
        let client = qdna_client::Client::new(base).map_err(|e| Failure::new(exit::BAD_ARGS, e))?;
        let report = runtime()?
            .block_on(client.verify(bytes))
            .map_err(client_failure)?;
        return Ok(report_verdict(&report));
    }
    let pk = keys::load_public(args.pubkey.as_deref().expect("clap requires pubkey"))?;
    let hmac = args.hmac_key.as_deref().map(keys::load_hmac).transpose()?;
    let report = verify_file_bytes(&bytes, &pk, hmac.as_ref())?;
    Ok(report_verdict(&report))
}

fn metric_arg(name: &str) -> Result<Metric, Failure> {
    let m = parse_metric(name)?;
    if m == Metric::Support {
        return Err(bad_args("support is an integer count, not a drift metric"));
    }
    Ok(m)
}

/// Feature files of one device, in chain order for a store.
fn load_device(store: &Store, device: &str) -> Result<Vec<FeatureFile>, Failure> {
    let chain = store.load_chain(device)?;
    if chain.is_empty() {
        return Err(Failure::new(
            exit::INSUFFICIENT_DATA,
            anyhow!("no sessions stored for device `{device}`"),
        ));
    }
    Ok(chain.iter().map(|a| feature_file_of(&a.record)).collect())
}

fn load_feature_dir(dir: &Path) -> Result<Vec<FeatureFile>, Failure> {
    let files = FeatureFile::load_dir(dir)?;
    if files.is_empty() {
        return Err(Failure::new(
            exit::INSUFFICIENT_DATA,
            anyhow!("no *{FEATURE_FILE_SUFFIX} files in {}", dir.display()),
        ));
    }
    Ok(files)
}

fn cmd_drift(args: DriftArgs) -> CmdResult {
    let metric = metric_arg(&args.metric)?;
    let files = match (&args.source.store, &args.source.features) {
        (Some(root), _) => {
            let device = args
                .device
                .as_deref()
                .ok_or_else(|| bad_args("--device is required with --store"))?;
            load_device(&Store::open_existing(root)?, device)?
        }
        (None, Some(dir)) => load_feature_dir(dir)?,
        (None, None) => return Err(bad_args("one of --store or --features is required")),
    };
    let steps = drift_series(&files, metric)?;
    match &args.out {
        None => print!("{}", drift_totals_csv(&steps)),
        Some(dir) => {
            write_file(&dir.join("drift_totals.csv"), &drift_totals_csv(&steps))?;
            write_file(&dir.join("delta_table.csv"), &delta_table_csv(&steps))?;
            write_file(&dir.join("series.csv"), &series_csv(&files, metric))?;
            write_file(&dir.join("aggregate.csv"), &aggregate_csv(&files, metric))?;
        }
    }
    Ok(exit::OK)
}

fn cmd_report(args: ReportArgs) -> CmdResult {
    let metric = metric_arg(&args.metric)?;
    let mut per_device: Vec<Vec<FeatureFile>> = Vec::new();
    if let Some(root) = &args.store {
        let store = Store::open_existing(root)?;
        let devices = if args.devices.is_empty() { store.devices()? } else { args.devices.clone() };
        if devices.is_empty() {
            return Err(Failure::new(exit::INSUFFICIENT_DATA, anyhow!("store has no devices")));
        }
        for d in &devices {
            per_device.push(load_device(&store, d)?);
        }
    } else if !args.feature_dirs.is_empty() {
        for dir in &args.feature_dirs {
            per_device.push(load_feature_dir(dir)?);
        }
    } else {
        return Err(bad_args("one of --store or --features is required"));
    }

    let mut reports = Vec::new();
    for files in &per_device {
        let r = device_report(files, metric)?;
        if let Some(out) = &args.out {
            let dir = out.join(&r.device_id);
            let mut json = serde_json::to_string_pretty(&r).expect("report serializes");
            json.push('\n');
            write_file(&dir.join("report.json"), &json)?;
            write_file(&dir.join("drift_totals.csv"), &drift_totals_csv(&r.drift))?;
            write_file(&dir.join("delta_table.csv"), &delta_table_csv(&r.drift))?;
            write_file(&dir.join("series.csv"), &series_csv(files, metric))?;
            write_file(&dir.join("aggregate.csv"), &aggregate_csv(files, metric))?;
            write_file(&dir.join("distance.csv"), &distance_matrix_csv(&r.distance))?;
            write_file(&dir.join("features.csv"), &features_csv(files))?;
        }
        reports.push(r);
    }
    if args.out.is_none() {
        print_json(&reports);
    }
    Ok(exit::OK)
}

fn cmd_classify(args: ClassifyArgs) -> CmdResult {
    let (files_a, files_b) = match (&args.a, &args.b, &args.store) {
        (Some(a), Some(b), _) => (load_feature_dir(a)?, load_feature_dir(b)?),
        (_, _, Some(root)) => {
            let store = Store::open_existing(root)?;
            let (da, db) = (args.device_a.as_deref().unwrap(), args.device_b.as_deref().unwrap());
            (load_device(&store, da)?, load_device(&store, db)?)
        }
        _ => return Err(bad_args("give --a/--b feature directories or --store with --device-a/--device-b")),
    };
    if args.folds < 2 {
        return Err(bad_args("--folds must be >= 2"));
    }
    let metrics = args
        .metrics
        .iter()
        .map(|m| parse_metric(m.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let params = ClassifyParams {
        metrics,
        min_presence: args.min_presence,
        cv: CvConfig {
            folds: args.folds,
            opt_threshold: args.opt_threshold,
            seed: args.seed,
        },
        n_perm: args.n_perm,
        logreg: LogRegParams {
            l2_lambda: args.l2_lambda,
            class_weight: args.class_weight,
            ..LogRegParams::default()
        },
        forest: ForestParams {
            n_trees: args.trees,
            max_depth: args.max_depth,
            seed: args.seed,
            ..ForestParams::default()
        },
    };
    let report = run_classification(&files_a, &files_b, &params)?;
    match &args.out {
        None => print!("{}", report.to_json()),
        Some(dir) => {
            write_file(&dir.join("cv_report.json"), &report.to_json())?;
            write_file(&dir.join("cv_folds.csv"), &classification_report_csv(&report))?;
            let summary = model_summary_csv(&report);
            write_file(&dir.join("cv_summary.csv"), &summary)?;
            print!("{summary}");
        }
    }
    Ok(exit::OK)
}

fn cmd_audit(args: AuditArgs) -> CmdResult {
    let reports = if let Some(base) = &args.remote {
        let client = qdna_client::Client::new(base).map_err(|e| Failure::new(exit::BAD_ARGS, e))?;
        runtime()?.block_on(async {
            let devices = if args.devices.is_empty() {
                client.devices().await.map_err(client_failure)?
            } else {
                args.devices.clone()
            };
            let mut out = Vec::new();
            for d in &devices {
                out.push(client.audit(d).await.map_err(client_failure)?);
            }
            Ok::<_, Failure>(out)
        })?
    } else {
        let store = Store::open_existing(args.store.as_ref().expect("clap requires store"))?;
        let pk = args.pubkey.as_deref().map(keys::load_public).transpose()?;
        let devices = if args.devices.is_empty() { store.devices()? } else { args.devices.clone() };
        devices
            .iter()
            .map(|d| store.audit_chain(d, pk.as_ref()))
            .collect::<Result<Vec<_>, _>>()?
    };
    print_json(&reports);
    let broken: Vec<&str> = reports.iter().filter(|r| !r.clean).map(|r| r.device_id.as_str()).collect();
    if broken.is_empty() {
        Ok(exit::OK)
    } else {
        eprintln!("audit found problems in: {}", broken.join(", "));
        Ok(exit::CHECK_FAILED)
    }
}

fn cmd_serve(args: ServeArgs) -> CmdResult {
    let state = qdna_server::AppState {
        store: Store::open_existing(&args.store)?,
        public_key: keys::load_public(&args.pubkey)?,
        hmac_key: args.hmac_key.as_deref().map(keys::load_hmac).transpose()?,
    };
    runtime()?.block_on(async {
        let listener = qdna_server::bind(&args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))?;
        eprintln!("listening on {}", listener.local_addr().context("local addr")?);
        qdna_server::serve(listener, state).await.context("serving")?;
        Ok::<_, Failure>(())
    })?;
    Ok(exit::OK)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::BAD_ARGS } else { exit::OK });
        }
    };
    let result = match cli.command {
        Command::Keygen(a) => cmd_keygen(a),
        Command::Session(a) => cmd_session(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Drift(a) => cmd_drift(a),
        Command::Report(a) => cmd_report(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
