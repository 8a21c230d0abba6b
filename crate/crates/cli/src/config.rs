//! Run configuration: command-line flags over environment variables over
//! the TOML config file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use streamvr::pipeline::{RunMode, VerdictSource};
use streamvr::providers::BASE_URL_ENV;
use streamvr::PromptMode;

use crate::backend::BackendSpec;
use crate::{ModeArg, PromptModeArg, RunArgs, VerdictSourceArg};

const DEFAULT_K: usize = 5;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBackends {
    /// Used for every role that has no entry of its own.
    all: Option<String>,
    generator: Option<String>,
    verifier: Option<String>,
    refiner: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    corpus: Option<PathBuf>,
    modes: Option<Vec<ModeArg>>,
    prompt_mode: Option<PromptModeArg>,
    passages: Option<usize>,
    shots: Option<usize>,
    model: Option<String>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    seed: Option<u64>,
    strict: Option<bool>,
    feedback: Option<bool>,
    full_verdict: Option<VerdictSourceArg>,
    templates: Option<PathBuf>,
    #[serde(default)]
    backends: FileBackends,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub modes: Vec<RunMode>,
    pub prompt_mode: PromptMode,
    pub generator: BackendSpec,
    pub verifier: BackendSpec,
    pub refiner: BackendSpec,
    pub model: String,
    pub out: PathBuf,
    pub jobs: usize,
    pub seed: Option<u64>,
    pub strict: bool,
    pub feedback: bool,
    pub full_verdict: VerdictSource,
    pub templates: Option<PathBuf>,
}

fn mode(m: ModeArg) -> RunMode {
    match m {
        ModeArg::None => RunMode::None,
        ModeArg::Full => RunMode::Full,
        ModeArg::Streaming => RunMode::Streaming,
        ModeArg::Compare => RunMode::Compare,
    }
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
}

/// Merges flags, environment (through `env`) and the config file, then
/// checks that every referenced path exists.
pub fn resolve(args: &RunArgs, env: impl Fn(&str) -> Option<String>) -> Result<RunConfig> {
    let (file, base) = match &args.config {
        Some(path) => (load_file(path)?, path.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (FileConfig::default(), PathBuf::new()),
    };
    let from_file = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));

    let corpus = args
        .corpus
        .clone()
        .or_else(|| from_file(&file.corpus))
        .ok_or_else(|| anyhow!("no corpus given; pass --corpus or set `corpus` in the config file"))?;
    if !corpus.is_file() {
        bail!("corpus file {} does not exist", corpus.display());
    }

    let mut modes: Vec<RunMode> = if args.modes.is_empty() {
        file.modes.clone().unwrap_or_default().into_iter().map(mode).collect()
    } else {
        args.modes.iter().copied().map(mode).collect()
    };
    if modes.is_empty() {
        modes.push(RunMode::Compare);
    }

    let passages = args.passages.or(file.passages).unwrap_or(DEFAULT_K);
    let shots = args.shots.or(file.shots).unwrap_or(DEFAULT_K);
    let prompt_mode = match args.prompt_mode.or(file.prompt_mode).unwrap_or(PromptModeArg::ClosedBook) {
        PromptModeArg::ClosedBook => PromptMode::ClosedBook,
        PromptModeArg::OpenBook => PromptMode::OpenBook(passages),
        PromptModeArg::FewShot => PromptMode::FewShot(shots),
    };

    let env_url = env(BASE_URL_ENV).filter(|u| !u.is_empty());
    let role = |flag: &Option<String>, own: &Option<String>, name: &str, option: &str| -> Result<BackendSpec> {
        if let Some(text) = flag {
            return BackendSpec::parse(text);
        }
        if let Some(url) = &env_url {
            return BackendSpec::parse(url).with_context(|| format!("{BASE_URL_ENV} is not usable"));
        }
        match own.as_ref().or(file.backends.all.as_ref()) {
            Some(text) => Ok(BackendSpec::parse(text)?.relative_to(&base)),
            None => bail!("no {name} backend; pass {option}, set {BASE_URL_ENV} or add it under [backends] in the config file"),
        }
    };
    let generator = role(&args.backend_gen, &file.backends.generator, "generator", "--backend-gen")?;
    let verifier = role(&args.backend_ver, &file.backends.verifier, "verifier", "--backend-ver")?;
    let refiner = role(&args.backend_ref, &file.backends.refiner, "refiner", "--backend-ref")?;
    for spec in [&generator, &verifier, &refiner] {
        spec.validate()?;
    }

    let templates = args.templates.clone().or_else(|| from_file(&file.templates));
    if let Some(dir) = &templates {
        if !dir.is_dir() {
            bail!("template directory {} does not exist", dir.display());
        }
    }

    Ok(RunConfig {
        corpus,
        modes,
        prompt_mode,
        generator,
        verifier,
        refiner,
        model: args.model.clone().or(file.model).unwrap_or_else(|| "default".into()),
        out: args.out.clone().or_else(|| from_file(&file.out)).unwrap_or_else(|| PathBuf::from("streamvr-out")),
        jobs: args.jobs.or(file.jobs).unwrap_or(0),
        seed: args.seed.or(file.seed),
        strict: args.strict || file.strict.unwrap_or(false),
        feedback: args.feedback || file.feedback.unwrap_or(false),
        full_verdict: match args.full_verdict.or(file.full_verdict).unwrap_or(VerdictSourceArg::Sentences) {
            VerdictSourceArg::Independent => VerdictSource::Independent,
            VerdictSourceArg::Sentences => VerdictSource::FromSentenceVerdicts,
        },
        templates,
    })
}
