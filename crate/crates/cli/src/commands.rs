use std::fs;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use streamvr::corpus::{attach_examples, convert_asqa, convert_quotesum, load_corpus, to_jsonl as corpus_jsonl};
use streamvr::datagen::{self, build_corpus, check_corpus, load_sources, DatagenConfig, ParaphraseCount};
use streamvr::latency_sim::{run_sweep, write_sweep_csv, ParamRange, SweepConfig, SweepKind};
use streamvr::metrics::{aggregate, write_csv};
use streamvr::pipeline::{run_batch, to_jsonl, BatchOptions};
use streamvr::templates::Templates;
use streamvr::{Backends, PipelineConfig};

use crate::backend::BackendSpec;
use crate::config::resolve;
use crate::output::write_atomic;
use crate::{runtime, usage, ConvertArgs, ConvertFormat, DatagenArgs, Failure, RunArgs, SimulateArgs};

fn templates(dir: Option<&std::path::Path>) -> Result<Templates, Failure> {
    match dir {
        Some(d) => Templates::load_dir(d)
            .with_context(|| format!("loading templates from {}", d.display()))
            .map_err(usage),
        None => Ok(Templates::default()),
    }
}

pub fn run(args: RunArgs) -> Result<(), Failure> {
    let config = resolve(&args, |k| std::env::var(k).ok()).map_err(usage)?;
    let records = load_corpus(&config.corpus).map_err(runtime)?;
    let templates = templates(config.templates.as_deref())?;
    let generator = config.generator.build(&config.model, config.seed).map_err(runtime)?;
    let verifier = config.verifier.build(&config.model, config.seed).map_err(runtime)?;
    let refiner = config.refiner.build(&config.model, config.seed).map_err(runtime)?;
    let backends = Backends {
        generator: generator.as_ref(),
        verifier: verifier.as_ref(),
        refiner: refiner.as_ref(),
    };
    let pipeline = PipelineConfig {
        templates: Arc::new(templates),
        ..PipelineConfig::default()
    };
    let options = BatchOptions {
        modes: config.modes.clone(),
        prompt_mode: config.prompt_mode,
        full_verdict_source: config.full_verdict,
        jobs: config.jobs,
        feedback: config.feedback,
    };

    let outcomes = run_batch(&records, backends, &pipeline, &options);
    let report = aggregate(&outcomes);
    let mut csv = Vec::new();
    write_csv(&outcomes, &mut csv).map_err(runtime)?;
    let report_json = serde_json::to_string_pretty(&report).map_err(runtime)? + "\n";
    write_atomic(&config.out.join("answers.jsonl"), to_jsonl(&outcomes).as_bytes()).map_err(runtime)?;
    write_atomic(&config.out.join("answers.csv"), &csv).map_err(runtime)?;
    write_atomic(&config.out.join("report.json"), report_json.as_bytes()).map_err(runtime)?;

    let efficiency = report
        .efficiency
        .map_or_else(|| "n/a".to_string(), |e| format!("{:.1}%", 100.0 * e));
    println!(
        "{} answers, {} failed ({} unscored), efficiency {efficiency}; wrote {}",
        report.answers,
        report.errored,
        report.unscored,
        config.out.display()
    );
    for o in outcomes.iter().filter(|o| o.error.is_some()) {
        let e = o.error.as_ref().expect("filtered");
        eprintln!("answer {} failed in {} at step {}: {}", o.id, e.stage, e.step, e.message);
    }
    if config.strict && report.errored > 0 {
        return Err(Failure::Strict(format!("{} of {} answers failed", report.errored, report.answers)));
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut config = match (&args.config, &args.point) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading sweep file {}", path.display()))
                .map_err(usage)?;
            SweepConfig::from_toml(&text).map_err(usage)?
        }
        (None, Some(p)) if p.len() != 5 => {
            return Err(usage(anyhow!("--point takes five values t_ver,t_ref,n,T_S,T_F, got {}", p.len())))
        }
        (None, Some(p)) => SweepConfig {
            kind: SweepKind::Grid,
            restrict_to_precondition: false,
            t_ver: ParamRange::fixed(p[0]),
            t_ref: ParamRange::fixed(p[1]),
            n: ParamRange::fixed(p[2]),
            tokens_ref_streaming: ParamRange::fixed(p[3]),
            tokens_ref_full: ParamRange::fixed(p[4]),
            ..SweepConfig::default()
        },
        (None, None) => SweepConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(samples) = args.samples {
        config.samples = samples;
    }
    let (rows, summary) = run_sweep(&config).map_err(usage)?;
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).map_err(runtime)?;

    let boundary = rows.iter().filter(|r| r.boundary).count();
    let line = match summary.fraction() {
        Some(f) => format!(
            "{} points, {} in the precondition region, ordering holds on {} ({:.2}%), {boundary} on the boundary",
            summary.rows,
            summary.in_region,
            summary.satisfied,
            100.0 * f
        ),
        None => format!("{} points, none in the precondition region, {boundary} on the boundary", summary.rows),
    };
    match &args.out {
        Some(path) => {
            write_atomic(path, &csv).map_err(runtime)?;
            println!("{line}");
        }
        None => {
            print!("{}", String::from_utf8_lossy(&csv));
            eprintln!("{line}");
        }
    }
    Ok(())
}

pub fn datagen(args: DatagenArgs) -> Result<(), Failure> {
    let spec = args
        .backend
        .clone()
        .or_else(|| std::env::var(streamvr::providers::BASE_URL_ENV).ok().filter(|u| !u.is_empty()))
        .ok_or_else(|| usage(anyhow!("no backend; pass --backend or set {}", streamvr::providers::BASE_URL_ENV)))?;
    let spec = BackendSpec::parse(&spec).map_err(usage)?;
    spec.validate().map_err(usage)?;
    if !args.source.is_file() {
        return Err(usage(anyhow!("source file {} does not exist", args.source.display())));
    }
    let sources = load_sources(&args.source).map_err(runtime)?;
    if sources.is_empty() {
        return Err(runtime(anyhow!("source file {} has no records", args.source.display())));
    }
    let backend = spec
        .build(args.model.as_deref().unwrap_or("default"), args.seed)
        .map_err(runtime)?;
    let mut config = DatagenConfig {
        templates: templates(args.templates.as_deref())?,
        jobs: args.jobs.unwrap_or(0),
        ..DatagenConfig::default()
    };
    if let Some(t) = args.temperatures {
        config.temperatures = t;
    }
    if let Some(n) = args.paraphrases {
        config.paraphrases = ParaphraseCount::Fixed(n);
    }

    let build = build_corpus(&sources, backend.as_ref(), &config);
    for f in &build.failures {
        eprintln!("record {} skipped: {}", f.record + 1, f.message);
    }
    if build.examples.is_empty() {
        return Err(runtime(anyhow!("no examples were produced from {} records", sources.len())));
    }
    let check = check_corpus(&build.examples);
    if !check.passed() {
        for v in check.violations.iter().take(10) {
            eprintln!("{v}");
        }
        return Err(runtime(anyhow!("self-check failed with {} violations; nothing written", check.violations.len())));
    }
    write_atomic(&args.out, datagen::to_jsonl(&build.examples).as_bytes()).map_err(runtime)?;

    println!(
        "{} examples: {} true, {} false; {} of {} records used, {} rewrites skipped",
        check.examples,
        check.true_examples,
        check.false_examples,
        sources.len() - build.failures.len(),
        sources.len(),
        build.skipped.len()
    );
    for (stage, (t, f)) in &check.stages {
        println!("stage {stage}: {t} true, {f} false");
    }
    Ok(())
}

pub fn convert(args: ConvertArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))
        .map_err(usage)?;
    let mut records = match args.format {
        ConvertFormat::Asqa => convert_asqa(&text, args.split.as_deref()),
        ConvertFormat::Quotesum => convert_quotesum(&text),
    }
    .map_err(runtime)?;
    if let Some(k) = args.shots {
        let pool = records.clone();
        attach_examples(&mut records, &pool, k);
    }
    write_atomic(&args.out, corpus_jsonl(&records).as_bytes()).map_err(runtime)?;
    println!("{} records written to {}", records.len(), args.out.display());
    Ok(())
}
