use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use tcf_core::calibration::fit_temperature;
use tcf_core::compare::{compare, Statistic};
use tcf_core::config::RunConfig;
use tcf_core::corpus::{
    lexical_similarity, perturb_gated, preprocess, split_corpus, undersample, EmailRecord, IdentityLemmatizer,
    Lexicon,
};
use tcf_core::evaluate::{evaluate, EvalOptions, TrustReport};
use tcf_core::exec::Executor;
use tcf_core::records::{group, validate_log};
use tcf_core::synth::{paper_like_profiles, simulate, DetectorProfile, PairRuns, SimOptions, PAPER_DATASETS};
use tcf_core::Error;

use crate::cli::{Cli, Command, Common, Format, SimulateArgs};
use crate::error::{CliError, Result};
use crate::exec::Pool;
use crate::io::{self, digest, to_canonical_json, write_bytes, write_jsonl};
use crate::report;

#[derive(Serialize)]
struct InputFile {
    path: String,
    fnv1a64: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    inputs: BTreeMap<&'a str, InputFile>,
    outputs: Vec<String>,
    counts: serde_json::Value,
    warnings: &'a [String],
}

struct Ctx {
    cfg: RunConfig,
    common: Common,
    pool: Pool,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path> {
        self.common
            .out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out DIR is required for this command".into()))
    }

    fn wants(&self, f: Format) -> bool {
        self.common.format.map_or(true, |g| g == f)
    }

    /// Writes `files` into the output directory followed by `manifest.json`.
    fn emit(
        &self,
        command: &str,
        inputs: BTreeMap<&str, InputFile>,
        files: Vec<(&str, Vec<u8>)>,
        counts: serde_json::Value,
        warnings: &[String],
    ) -> Result<()> {
        let dir = self.out_dir()?;
        let mut outputs = Vec::with_capacity(files.len());
        for (name, bytes) in files {
            write_bytes(&dir.join(name), &bytes)?;
            outputs.push(name.to_string());
        }
        self.manifest(command, inputs, outputs, counts, warnings)
    }

    fn manifest(
        &self,
        command: &str,
        inputs: BTreeMap<&str, InputFile>,
        outputs: Vec<String>,
        counts: serde_json::Value,
        warnings: &[String],
    ) -> Result<()> {
        let dir = self.out_dir()?;
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.cfg,
            inputs,
            outputs,
            counts,
            warnings,
        };
        write_bytes(&dir.join("manifest.json"), to_canonical_json(&manifest).as_bytes())
    }
}

fn input(path: &Path, hash: String) -> InputFile {
    InputFile {
        path: path.display().to_string(),
        fnv1a64: hash,
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8> {
    let cfg = io::load_config(cli.common.config.as_deref(), cli.common.seed)?;
    let pool = Pool::new(cli.common.threads)?;
    let ctx = Ctx {
        cfg,
        common: cli.common,
        pool,
    };
    match cli.command {
        Command::Validate { log } => cmd_validate(&log),
        Command::Preprocess { corpus } => cmd_preprocess(&ctx, &corpus),
        Command::Split { corpus } => cmd_split(&ctx, &corpus),
        Command::Perturb { corpus, lexicon } => cmd_perturb(&ctx, &corpus, lexicon.as_deref()),
        Command::Calibrate { log } => cmd_calibrate(&ctx, &log),
        Command::Evaluate {
            log,
            allow_missing_robustness,
            allow_single_run,
            no_ci,
        } => cmd_evaluate(
            &ctx,
            &log,
            EvalOptions {
                allow_missing_robustness,
                allow_single_run,
                confidence_intervals: !no_ci,
            },
        ),
        Command::Compare {
            log,
            model_a,
            model_b,
            statistic,
        } => cmd_compare(&ctx, &log, &model_a, &model_b, &statistic),
        Command::Simulate(args) => cmd_simulate(&ctx, &args),
        Command::Report { report } => cmd_report(&ctx, &report),
    }
}

fn cmd_validate(log: &Path) -> Result<u8> {
    let (records, _) = io::read_log(log)?;
    let report = validate_log(&records);
    for f in &report.findings {
        match f.index() {
            Some(i) => println!("{}:{}: {f}", log.display(), i + 1),
            None => println!("{}: {f}", log.display()),
        }
    }
    if report.is_clean() {
        println!("{}: {} records, no findings", log.display(), records.len());
        Ok(0)
    } else {
        eprintln!("{} finding(s)", report.findings.len());
        Ok(1)
    }
}

fn read_corpus(path: &Path) -> Result<(Vec<EmailRecord>, InputFile)> {
    let text = io::read_text(path)?;
    let records = io::parse_jsonl(&text, path)?;
    Ok((records, input(path, digest(text.as_bytes()))))
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("serializable record");
        out.push(b'\n');
    }
    out
}

fn cmd_preprocess(ctx: &Ctx, corpus: &Path) -> Result<u8> {
    let (records, file) = read_corpus(corpus)?;
    let (kept, tally) = preprocess(&records, &IdentityLemmatizer);
    ctx.emit(
        "preprocess",
        BTreeMap::from([("corpus", file)]),
        vec![("preprocessed.jsonl", jsonl_bytes(&kept))],
        serde_json::to_value(&tally).expect("serializable tally"),
        &[],
    )?;
    println!(
        "kept {} of {} ({} too short, {} duplicate text, {} duplicate id)",
        tally.kept, tally.input, tally.too_short, tally.duplicate_text, tally.duplicate_id
    );
    Ok(0)
}

fn cmd_split(ctx: &Ctx, corpus: &Path) -> Result<u8> {
    let (records, file) = read_corpus(corpus)?;
    let spec = ctx.cfg.split_spec();
    let split = split_corpus(&records, &spec)?;
    let mut warnings = Vec::new();
    let train = if ctx.cfg.split.undersample {
        match undersample(&split.train, spec.undersample_threshold, spec.seed) {
            Ok(t) => t,
            Err(Error::SingleClass) => {
                warnings.push("training split has a single class, undersampling skipped".to_string());
                split.train.clone()
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        split.train.clone()
    };
    warn_all(&warnings);
    let counts = json!({
        "input": records.len(),
        "train_before_undersampling": split.train.len(),
        "train": train.len(),
        "val": split.val.len(),
        "test": split.test.len(),
    });
    ctx.emit(
        "split",
        BTreeMap::from([("corpus", file)]),
        vec![
            ("train.jsonl", jsonl_bytes(&train)),
            ("val.jsonl", jsonl_bytes(&split.val)),
            ("test.jsonl", jsonl_bytes(&split.test)),
        ],
        counts,
        &warnings,
    )?;
    println!("train {} / val {} / test {}", train.len(), split.val.len(), split.test.len());
    Ok(0)
}

#[derive(Debug, Serialize, Deserialize)]
struct PerturbedEmail {
    id: String,
    perturbed_of: String,
    email_text: String,
    label: tcf_core::Label,
    similarity: f64,
    attempt: usize,
}

fn cmd_perturb(ctx: &Ctx, corpus: &Path, lexicon: Option<&Path>) -> Result<u8> {
    let (records, file) = read_corpus(corpus)?;
    let mut inputs = BTreeMap::from([("corpus", file)]);
    let lex = match lexicon {
        Some(p) => {
            let text = io::read_text(p)?;
            inputs.insert("lexicon", input(p, digest(text.as_bytes())));
            Lexicon::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
        }
        None => Lexicon::default(),
    };
    let p = ctx.cfg.perturbation;
    let results = ctx.pool.map(records.len(), |i| {
        let r = &records[i];
        perturb_gated(
            &r.id,
            &r.email_text,
            ctx.cfg.seed,
            &lex,
            p.min_similarity,
            p.max_attempts,
            lexical_similarity,
        )
    });
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(Some(g)) => out.push(PerturbedEmail {
                id: format!("{}~p", r.id),
                perturbed_of: r.id.clone(),
                email_text: g.text,
                label: r.label,
                similarity: g.similarity,
                attempt: g.attempt,
            }),
            Ok(None) => warnings.push(format!(
                "{}: no perturbation reached similarity {} in {} attempts, skipped",
                r.id, p.min_similarity, p.max_attempts
            )),
            Err(e) => warnings.push(format!("{}: {e}, skipped", r.id)),
        }
    }
    warn_all(&warnings);
    ctx.emit(
        "perturb",
        inputs,
        vec![("perturbed.jsonl", jsonl_bytes(&out))],
        json!({"input": records.len(), "perturbed": out.len(), "skipped": warnings.len()}),
        &warnings,
    )?;
    println!("perturbed {} of {}, {} skipped", out.len(), records.len(), warnings.len());
    Ok(0)
}

#[derive(Serialize)]
struct Calibration<'a> {
    model: &'a str,
    dataset: &'a str,
    validation_records: usize,
    temperature: f64,
    nll: f64,
}

fn cmd_calibrate(ctx: &Ctx, log: &Path) -> Result<u8> {
    let (records, hash) = io::read_log(log)?;
    let grouping = group(&records);
    let mut rows = Vec::new();
    for g in &grouping.groups {
        if g.validation.is_empty() {
            eprintln!("warning: {}/{}: no validation records", g.model, g.dataset);
            continue;
        }
        let m = fit_temperature(g.validation.iter().copied(), &ctx.cfg.temperature_grid)?;
        rows.push(Calibration {
            model: g.model,
            dataset: g.dataset,
            validation_records: g.validation.len(),
            temperature: m.temperature,
            nll: m.fitted_nll,
        });
    }
    println!("model\tdataset\tn_val\tT\tnll");
    for r in &rows {
        println!("{}\t{}\t{}\t{}\t{:.6}", r.model, r.dataset, r.validation_records, r.temperature, r.nll);
    }
    if ctx.common.out.is_some() {
        let mut files = Vec::new();
        if ctx.wants(Format::Json) {
            files.push(("calibration.json", to_canonical_json(&rows).into_bytes()));
        }
        if ctx.wants(Format::Csv) {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["model", "dataset", "validation_records", "temperature", "nll"])
                .expect("in-memory write");
            for r in &rows {
                w.write_record([
                    r.model.to_string(),
                    r.dataset.to_string(),
                    r.validation_records.to_string(),
                    r.temperature.to_string(),
                    r.nll.to_string(),
                ])
                .expect("in-memory write");
            }
            files.push(("calibration.csv", w.into_inner().expect("in-memory write")));
        }
        ctx.emit(
            "calibrate",
            BTreeMap::from([("log", input(log, hash))]),
            files,
            json!({"groups": rows.len()}),
            &[],
        )?;
    }
    Ok(0)
}

fn report_files(ctx: &Ctx, report: &TrustReport) -> Vec<(&'static str, Vec<u8>)> {
    let mut files = Vec::new();
    if ctx.wants(Format::Json) {
        files.push(("report.json", to_canonical_json(report).into_bytes()));
    }
    if ctx.wants(Format::Md) {
        files.push(("report.md", report::markdown(report).into_bytes()));
    }
    if ctx.wants(Format::Csv) {
        files.push(("reliability.csv", report::reliability_csv(report)));
        files.push(("robustness_by_level.csv", report::robustness_csv(report)));
        files.push(("tci_by_dataset.csv", report::tci_csv(report)));
    }
    files
}

fn cmd_evaluate(ctx: &Ctx, log: &Path, opts: EvalOptions) -> Result<u8> {
    ctx.out_dir()?;
    let (records, hash) = io::read_log(log)?;
    let clean = validate_log(&records).is_clean();
    let report = evaluate(&records, &ctx.cfg, &opts, &ctx.pool)?;
    warn_all(&report.warnings);
    let counts = json!({
        "records": records.len(),
        "groups": report.groups.len(),
        "models": report.models.len(),
    });
    ctx.emit(
        "evaluate",
        BTreeMap::from([("log", input(log, hash))]),
        report_files(ctx, &report),
        counts,
        &report.warnings,
    )?;
    for m in &report.models {
        println!(
            "{}: mean TCI {:.4}, CDS {:.4} over {} dataset(s)",
            m.model,
            m.mean_tci.value,
            m.cds.value,
            m.datasets.len()
        );
    }
    Ok(if clean { 0 } else { 1 })
}

fn cmd_compare(ctx: &Ctx, log: &Path, a: &str, b: &str, statistic: &str) -> Result<u8> {
    let statistic: Statistic = statistic.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    ctx.out_dir()?;
    let (records, hash) = io::read_log(log)?;
    let rows = compare(&records, a, b, statistic, &ctx.cfg, &ctx.pool)?;
    let mut files = Vec::new();
    if ctx.wants(Format::Csv) {
        files.push(("comparison.csv", report::comparison_csv(&rows)));
    }
    if ctx.wants(Format::Json) {
        files.push(("comparison.json", to_canonical_json(&rows).into_bytes()));
    }
    if ctx.wants(Format::Md) {
        files.push(("comparison.md", report::comparison_markdown(&rows).into_bytes()));
    }
    ctx.emit(
        "compare",
        BTreeMap::from([("log", input(log, hash))]),
        files,
        json!({"rows": rows.len()}),
        &[],
    )?;
    for r in &rows {
        println!(
            "{}: {} {} - {} = {:.4} [{:.4}, {:.4}], p = {:.4}",
            r.dataset, r.statistic, a, b, r.diff, r.ci_lo, r.ci_hi, r.p_value
        );
    }
    Ok(0)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProfileFile {
    One(DetectorProfile),
    Many(Vec<DetectorProfile>),
}

fn load_profiles(path: &Path) -> Result<Vec<DetectorProfile>> {
    let text = io::read_text(path)?;
    let parsed: ProfileFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: invalid profile: {e}", path.display())))?;
    let profiles = match parsed {
        ProfileFile::One(p) => vec![p],
        ProfileFile::Many(ps) => ps,
    };
    for p in &profiles {
        p.validate()
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(profiles)
}

fn cmd_simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<u8> {
    let dir = ctx.out_dir()?;
    let (profiles, inputs) = match &args.profile {
        Some(p) => {
            let profiles = load_profiles(p)?;
            let hash = digest(&io::read_bytes(p)?);
            (profiles, BTreeMap::from([("profile", input(p, hash))]))
        }
        None => (paper_like_profiles(), BTreeMap::new()),
    };
    let datasets = if args.paper_datasets {
        PAPER_DATASETS.iter().map(|d| d.to_string()).collect()
    } else if args.datasets.is_empty() {
        vec!["synthetic".to_string()]
    } else {
        args.datasets.clone()
    };
    let opts = SimOptions {
        n_samples: args.n,
        k_runs: args.k,
        datasets,
        seed: ctx.cfg.seed,
        val_fraction: args.val_fraction,
        pair_runs: if args.perturb_all_runs {
            PairRuns::All
        } else {
            PairRuns::First
        },
    };
    opts.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let path: PathBuf = dir.join("predictions.jsonl");
    let mut counts = BTreeMap::new();
    let logs: Vec<Vec<tcf_core::PredictionRecord>> = profiles
        .iter()
        .map(|p| simulate(p, &opts, &ctx.pool))
        .collect::<std::result::Result<_, _>>()?;
    for (p, log) in profiles.iter().zip(&logs) {
        counts.insert(p.name.clone(), log.len());
        println!("{}: {} records", p.name, log.len());
    }
    write_jsonl(&path, logs.iter().flatten())?;
    drop(logs);
    let manifest_counts = json!({
        "records_by_profile": counts,
        "profiles": profiles,
        "options": opts,
    });
    ctx.manifest(
        "simulate",
        inputs,
        vec!["predictions.jsonl".to_string()],
        manifest_counts,
        &[],
    )?;
    Ok(0)
}

fn cmd_report(ctx: &Ctx, path: &Path) -> Result<u8> {
    let text = io::read_text(path)?;
    let report: TrustReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: invalid report: {e}", path.display())))?;
    let files = report_files(ctx, &report);
    ctx.emit(
        "report",
        BTreeMap::from([("report", input(path, digest(text.as_bytes())))]),
        files,
        json!({"groups": report.groups.len(), "models": report.models.len()}),
        &report.warnings,
    )?;
    Ok(0)
}
