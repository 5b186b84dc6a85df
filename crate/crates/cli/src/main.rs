use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use consent_audit::capture::{load_session, validate};
use consent_audit::config::{grace_window_from_seconds, AuditConfig, ConfigError};
use consent_audit::consent::PurposeTable;
use consent_audit::onetrust::{parse_active_groups, parse_optanon_cookie};
use consent_audit::report::{aggregate_corpus, analyze_site, SiteReport};
use consent_audit::tcs::{decode_tc_string, sniff_tcs};

/// Audits consent revocation in recorded browsing sessions.
#[derive(Debug, Parser)]
#[command(name = "consent-audit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// parsed once per run; boxing the large variant buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
enum Command {
    /// Pretty-print a TC string or a OneTrust consent value.
    Decode {
        value: String,
        /// Purpose legal-basis overrides (`purpose_id,true|false` per line).
        #[arg(long)]
        purpose_overrides: Option<PathBuf>,
    },
    /// Analyze capture sessions and emit one site report each.
    ///
    /// Directories are searched (not recursively) for `*.json` files,
    /// skipping `manifest.json` and `*.report.json`.
    Scan {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Write `<stem>.report.json` files here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        fail_on_violation: bool,
    },
    /// Aggregate site reports into corpus-level prevalence.
    ///
    /// Directories are searched for `*.report.json` files.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        fail_on_violation: bool,
    },
    /// Check a capture session against the schema and its invariants.
    Validate { session: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Seconds after a stage event during which stale consent in traffic
    /// is only reported as a delayed update.
    #[arg(long, value_name = "SECONDS")]
    grace_window: Option<f64>,
    /// Cookie classes (`name,domain_pattern,class` per line).
    #[arg(long)]
    cookie_classes: Option<PathBuf>,
    /// Per-site cookie reclassifications (`site,name,domain_pattern,class`).
    #[arg(long)]
    cookie_overrides: Option<PathBuf>,
    /// CMP id to name list (`id,name` per line).
    #[arg(long)]
    cmp_list: Option<PathBuf>,
    /// Public suffix list in the usual format.
    #[arg(long)]
    suffix_list: Option<PathBuf>,
    /// Known tracking domains, one per line.
    #[arg(long)]
    tracking_domains: Option<PathBuf>,
    /// Domains owned by a site (`site,alias[,alias...]` per line).
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    purpose_overrides: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
}

type Loader = fn(&mut AuditConfig, &Path) -> Result<(), ConfigError>;

impl ConfigArgs {
    fn load(&self) -> Result<AuditConfig> {
        let mut config = AuditConfig::default();
        if let Some(secs) = self.grace_window {
            config.grace_window = grace_window_from_seconds(secs)?;
        }
        let loaders: [(&Option<PathBuf>, Loader); 7] = [
            (&self.cookie_classes, AuditConfig::load_cookie_classes),
            (&self.cookie_overrides, AuditConfig::load_cookie_overrides),
            (&self.cmp_list, AuditConfig::load_cmp_list),
            (&self.suffix_list, AuditConfig::load_suffix_list),
            (&self.tracking_domains, AuditConfig::load_tracking_domains),
            (&self.aliases, AuditConfig::load_first_party_aliases),
            (&self.purpose_overrides, AuditConfig::load_purpose_overrides),
        ];
        for (path, load) in loaders {
            if let Some(path) = path {
                load(&mut config, path)?;
            }
        }
        Ok(config)
    }
}

/// Files given directly, plus matching files of given directories, sorted
/// per directory.
fn expand(inputs: &[PathBuf], keep: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if !input.is_dir() {
            files.push(input.clone());
            continue;
        }
        let mut found = Vec::new();
        for entry in fs::read_dir(input).with_context(|| format!("cannot list {}", input.display()))? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if path.is_file() && keep(name) {
                found.push(path);
            }
        }
        found.sort();
        files.extend(found);
    }
    Ok(files)
}

fn decode(value: &str, overrides: Option<&Path>) -> Result<serde_json::Value> {
    let table = match overrides {
        Some(path) => PurposeTable::default()
            .with_overrides(&fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?)?,
        None => PurposeTable::default(),
    };
    let value = value.trim();
    let tcs = decode_tc_string(value).ok().or_else(|| sniff_tcs(value));
    if let Some(tcs) = tcs {
        let class = table.classify(&tcs.core.projection());
        return Ok(json!({ "kind": "tcf", "class": class, "value": tcs }));
    }
    if value.contains("groups=") {
        let consent = parse_optanon_cookie(value)?;
        return Ok(json!({ "kind": "optanon_cookie", "value": consent }));
    }
    if value.starts_with(',') || value.split(',').all(|g| g.trim().starts_with('C')) {
        return Ok(json!({ "kind": "onetrust_active_groups", "value": parse_active_groups(value) }));
    }
    bail!("not a TC string or OneTrust value: {value:?}")
}

/// Writes to stdout. A reader that went away (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn report_name(session_path: &Path) -> String {
    let stem = session_path.file_stem().and_then(|s| s.to_str()).unwrap_or("session");
    format!("{stem}.report.json")
}

fn scan(inputs: &[PathBuf], out: Option<&Path>, config: &AuditConfig) -> Result<Vec<SiteReport>> {
    let files = expand(inputs, |name| {
        name.ends_with(".json") && !name.ends_with(".report.json") && name != "manifest.json"
    })?;
    if files.is_empty() {
        bail!("no session files found");
    }
    let reports = files
        .par_iter()
        .map(|path| {
            let session = load_session(path).with_context(|| format!("{}", path.display()))?;
            validate(&session).with_context(|| format!("{}", path.display()))?;
            Ok(analyze_site(&session, config))
        })
        .collect::<Result<Vec<_>>>()?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            for (path, report) in files.iter().zip(&reports) {
                let target = dir.join(report_name(path));
                fs::write(&target, report.to_json()).with_context(|| format!("cannot write {}", target.display()))?;
            }
            eprintln!("wrote {} reports to {}", reports.len(), dir.display());
        }
        None if reports.len() == 1 => emit(&reports[0].to_json())?,
        None => emit(&format!("{}\n", serde_json::to_string_pretty(&reports)?))?,
    }
    Ok(reports)
}

/// Reads report files; a file may hold one report or an array of them.
fn load_reports(inputs: &[PathBuf]) -> Result<Vec<SiteReport>> {
    let files = expand(inputs, |name| name.ends_with(".report.json"))?;
    let mut reports = Vec::new();
    for path in files {
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
        let context = || format!("{} is not a site report", path.display());
        match value {
            serde_json::Value::Array(items) => {
                for item in items {
                    reports.push(serde_json::from_value(item).with_context(context)?);
                }
            }
            other => reports.push(serde_json::from_value(other).with_context(context)?),
        }
    }
    if reports.is_empty() {
        bail!("no site reports found");
    }
    Ok(reports)
}

/// Ok(true) when violations were found.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Decode {
            value,
            purpose_overrides,
        } => {
            let decoded = decode(&value, purpose_overrides.as_deref())?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&decoded)?))?;
            Ok(false)
        }
        Command::Scan {
            inputs,
            out,
            config,
            fail_on_violation,
        } => {
            let audit = config.load()?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(jobs) = config.jobs {
                pool = pool.num_threads(jobs);
            }
            let reports = pool.build()?.install(|| scan(&inputs, out.as_deref(), &audit))?;
            Ok(fail_on_violation && reports.iter().any(|r| r.violations().next().is_some()))
        }
        Command::Report {
            reports,
            format,
            fail_on_violation,
        } => {
            let summary = aggregate_corpus(&load_reports(&reports)?);
            match format {
                Format::Json => emit(&summary.to_json())?,
                Format::Csv => emit(&summary.rows_csv())?,
            }
            Ok(fail_on_violation && summary.rows.iter().any(|r| r.count > 0))
        }
        Command::Validate { session } => {
            let s = load_session(&session).with_context(|| format!("{}", session.display()))?;
            validate(&s).with_context(|| format!("{}", session.display()))?;
            emit(&format!("{}: valid session for {} ({} stages)\n", session.display(), s.site, s.stages.len()))?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
