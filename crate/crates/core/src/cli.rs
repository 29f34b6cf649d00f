//! The `sgbseg` command line.
//!
//! Exit codes: 0 on success, 1 on runtime or numeric failure, 2 on usage or
//! path errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{build_vocab, corpus_stats, load_corpus, read_text, sentences_from_text, Setting};
use crate::error::Error;
use crate::evaluator::{ambiguity_analysis, evaluate_lines, lexicon_from, parse_segmented, SegmentedLine};
use crate::lattice::Decoder;
use crate::model::{Model, RunConfig, CHECKPOINT_FILE, CONFIG_FILE, MANIFEST_FILE, REPORT_FILE, VOCAB_FILE};
use crate::slm::checkpoint;
use crate::trainer::{train_with, EpochStat};

#[derive(Debug, Parser)]
#[command(name = "sgbseg", version, about = "Unsupervised word segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on raw text.
    Train(TrainArgs),
    /// Segment raw text with a trained model.
    Segment(SegmentArgs),
    /// Word precision, recall and F1 against a gold file.
    Eval(CompareArgs),
    /// Count combination and overlap ambiguity errors.
    Analyze(CompareArgs),
    /// Word and character counts of a segmented file.
    Stats(StatsArgs),
    /// Full-scale runs on user-supplied benchmark corpora.
    Repro(ReproArgs),
}

/// Flags that override values from `--config`.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preprocessing setting: 1 (raw), 3 (punctuation), 4 (special symbols).
    #[arg(long)]
    pub setting: Option<Setting>,
    /// Maximum word length.
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => {
                require_file(p)?;
                RunConfig::from_file(p)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.setting {
            cfg.setting = s;
        }
        let t = &mut cfg.train;
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { t.$f = v; })* };
        }
        apply!(t_max, seed, epochs, lr, batch_size, embed_dim, hidden_dim);
        t.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Raw training text, one sentence per line.
    pub corpus: PathBuf,
    /// Output directory for the checkpoint, vocabulary, report and manifest.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Do not reserve an UNK row for characters unseen in training.
    #[arg(long)]
    pub no_unk: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Checkpoint file, or the directory written by `train`.
    #[arg(short, long)]
    pub model: PathBuf,
    /// Raw text to segment, one sentence per line.
    pub input: PathBuf,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "sgb-a")]
    pub decoder: Decoder,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Gold segmentation, space-delimited.
    pub gold: PathBuf,
    /// Predicted segmentation of the same text.
    pub pred: PathBuf,
    /// Directory for CSV, text and JSON-lines reports.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub gold: PathBuf,
    /// Print CSV instead of text.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// Confirms a full-scale run; full-size training takes hours.
    #[arg(long)]
    pub full_repro: bool,
    /// Directory holding `<corpus>/train.txt` and `<corpus>/test_gold.txt`
    /// for any of cityu, msr, pku, as and thai.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Preprocessing settings to run.
    #[arg(long, value_delimiter = ',', default_value = "1,3,4")]
    pub settings: Vec<Setting>,
    /// Maximum word lengths to run for Chinese corpora.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    pub t_values: Vec<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => CliError::Usage(e.to_string()),
            Error::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Run(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

fn require_file(p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such file", p.display())))
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::Run(Error::Io { path: path.into(), source: e }))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))
}

/// Everything needed to rerun the command that produced an output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub seed: Option<u64>,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    fn new(argv: &[String], started_at: String) -> Self {
        RunManifest {
            command: argv.to_vec(),
            config: BTreeMap::new(),
            inputs: Vec::new(),
            checkpoint: None,
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            finished_at: String::new(),
        }
    }

    fn with_config(mut self, cfg: &RunConfig) -> Self {
        self.config = cfg.pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        self.seed = Some(cfg.train.seed);
        self
    }

    fn write(mut self, path: &Path) -> Result<(), CliError> {
        self.finished_at = now();
        let body = serde_json::to_string_pretty(&self).expect("plain struct");
        write_file(path, &(body + "\n"))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Parses `args` and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(command: Command, argv: &[String]) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(&a, argv),
        Command::Segment(a) => cmd_segment(&a, argv),
        Command::Eval(a) => cmd_eval(&a, argv),
        Command::Analyze(a) => cmd_analyze(&a, argv),
        Command::Stats(a) => cmd_stats(&a),
        Command::Repro(a) => cmd_repro(&a, argv),
    }
}

fn cmd_train(a: &TrainArgs, argv: &[String]) -> Result<(), CliError> {
    let started = now();
    require_file(&a.corpus)?;
    let cfg = a.overrides.resolve()?;
    create_dir(&a.out)?;
    let ckpt = a.out.join(CHECKPOINT_FILE);
    let mut manifest = RunManifest::new(argv, started).with_config(&cfg);
    manifest.inputs.push(a.corpus.clone());
    if let Some(c) = &a.overrides.config {
        manifest.inputs.push(c.clone());
    }
    manifest.checkpoint = Some(ckpt.clone());

    let report = train_model(&a.corpus, &cfg, !a.no_unk, &a.out, |stat| {
        eprintln!("epoch {:>3}  loss {:.4}  {:.1}s", stat.epoch, stat.mean_loss, stat.seconds)
    });
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    let report = report?;
    write_file(&a.out.join(REPORT_FILE), &report)
}

/// Trains on `corpus` and writes the checkpoint (every epoch), vocabulary
/// and config into `out`. Returns the report CSV. A diverged run keeps the
/// last finite checkpoint.
fn train_model(
    corpus: &Path,
    cfg: &RunConfig,
    with_unk: bool,
    out: &Path,
    mut progress: impl FnMut(&EpochStat),
) -> Result<String, CliError> {
    let sentences = load_corpus(corpus, &cfg.preprocess())?;
    train_sentences(&sentences, cfg, with_unk, out, &mut progress)
}

fn train_sentences(
    sentences: &[crate::corpus::RawSentence],
    cfg: &RunConfig,
    with_unk: bool,
    out: &Path,
    progress: &mut impl FnMut(&EpochStat),
) -> Result<String, CliError> {
    if sentences.is_empty() {
        return Err(CliError::Usage("training corpus has no text".into()));
    }
    let vocab = build_vocab(sentences, with_unk);
    let ids = sentences
        .iter()
        .map(|s| vocab.encode(s).map(|c| c.ids))
        .collect::<Result<Vec<_>, _>>()?;
    vocab.save(&out.join(VOCAB_FILE))?;
    write_file(&out.join(CONFIG_FILE), &cfg.to_text())?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let result = train_with(&ids, vocab.len(), &cfg.train, |stat, params| {
        progress(stat);
        checkpoint::save(params, &ckpt)
    });
    match result {
        Ok((_, report)) => Ok(report.to_csv()),
        Err(Error::Diverged { epoch, last_good }) => {
            checkpoint::save(&last_good, &ckpt)?;
            Err(CliError::Run(Error::Diverged { epoch, last_good }))
        }
        Err(e) => Err(e.into()),
    }
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    if path.is_dir() {
        Ok(Model::load_dir(path)?)
    } else {
        require_file(path)?;
        Ok(Model::load(path)?)
    }
}

fn cmd_segment(a: &SegmentArgs, argv: &[String]) -> Result<(), CliError> {
    let started = now();
    require_file(&a.input)?;
    let model = load_model(&a.model)?;
    let text = read_text(&a.input)?;
    let lines: Vec<&str> = text.lines().collect();
    let out = model.segment_lines(&lines, a.decoder)?;
    let mut body = out.join("\n");
    body.push('\n');
    match &a.output {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .map_err(|e| CliError::Run(Error::Io { path: "<stdout>".into(), source: e }))?;
        }
        Some(p) => {
            write_file(p, &body)?;
            let mut manifest = RunManifest::new(argv, started).with_config(&model.config);
            manifest.inputs = vec![a.input.clone()];
            manifest.checkpoint = Some(a.model.clone());
            manifest.config.insert("decoder".into(), a.decoder.to_string());
            manifest.write(&manifest_path_for(p))?;
        }
    }
    Ok(())
}

/// `out.txt` gets `out.txt.manifest.json` beside it.
fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn read_pair(a: &CompareArgs) -> Result<(Vec<SegmentedLine>, Vec<SegmentedLine>), CliError> {
    require_file(&a.gold)?;
    require_file(&a.pred)?;
    Ok((
        parse_segmented(&read_text(&a.gold)?),
        parse_segmented(&read_text(&a.pred)?),
    ))
}

fn write_reports(
    a: &CompareArgs,
    argv: &[String],
    started: String,
    files: &[(&str, &str)],
) -> Result<(), CliError> {
    let Some(dir) = &a.out else { return Ok(()) };
    create_dir(dir)?;
    for (name, body) in files {
        write_file(&dir.join(name), body)?;
    }
    let mut manifest = RunManifest::new(argv, started);
    manifest.inputs = vec![a.gold.clone(), a.pred.clone()];
    manifest.write(&dir.join(MANIFEST_FILE))
}

fn cmd_eval(a: &CompareArgs, argv: &[String]) -> Result<(), CliError> {
    let started = now();
    let (gold, pred) = read_pair(a)?;
    let report = evaluate_lines(&gold, &pred)?;
    print!("{}", report.to_text());
    write_reports(
        a,
        argv,
        started,
        &[("eval.csv", &report.to_csv()), ("eval.txt", &report.to_text())],
    )
}

fn cmd_analyze(a: &CompareArgs, argv: &[String]) -> Result<(), CliError> {
    let started = now();
    let (gold, pred) = read_pair(a)?;
    let report = ambiguity_analysis(&gold, &pred, &lexicon_from(&gold))?;
    print!("{}", report.to_text());
    write_reports(
        a,
        argv,
        started,
        &[
            ("ambiguity.csv", &report.to_csv()),
            ("ambiguity.txt", &report.to_text()),
            ("ambiguity.jsonl", &report.to_jsonl()),
        ],
    )
}

fn cmd_stats(a: &StatsArgs) -> Result<(), CliError> {
    require_file(&a.gold)?;
    let s = corpus_stats(&a.gold)?;
    if a.csv {
        println!("word_types,word_tokens,char_types,char_tokens");
        println!("{},{},{},{}", s.word_types, s.word_tokens, s.char_types, s.char_tokens);
    } else {
        println!("word types:  {}", s.word_types);
        println!("word tokens: {}", s.word_tokens);
        println!("char types:  {}", s.char_types);
        println!("char tokens: {}", s.char_tokens);
    }
    Ok(())
}

/// Published F1 (%) by setting, decoder and maximum word length, in the
/// corpus order cityu, msr, pku, as.
const PUBLISHED: &[(u8, &str, usize, [f64; 4])] = &[
    (1, "sgb-a", 3, [78.7, 79.4, 78.4, 79.4]),
    (1, "sgb-c", 3, [77.4, 80.2, 79.6, 78.6]),
    (1, "sgb-a", 4, [79.2, 80.5, 77.9, 80.2]),
    (1, "sgb-c", 4, [80.0, 74.0, 80.0, 81.0]),
    (1, "sgb-a", 5, [72.5, 72.8, 75.4, 64.5]),
    (1, "sgb-c", 5, [78.5, 80.4, 78.4, 82.4]),
    (3, "sgb-a", 3, [79.5, 80.6, 80.4, 81.9]),
    (3, "sgb-c", 3, [77.6, 81.1, 80.4, 79.7]),
    (3, "sgb-a", 4, [80.3, 80.6, 80.3, 82.7]),
    (3, "sgb-c", 4, [80.5, 81.7, 81.0, 82.3]),
    (3, "sgb-a", 5, [78.3, 80.1, 79.1, 82.8]),
    (3, "sgb-c", 5, [80.2, 82.3, 81.2, 83.5]),
    (4, "sgb-a", 3, [79.5, 82.7, 80.9, 81.7]),
    (4, "sgb-c", 3, [80.7, 83.1, 81.6, 82.0]),
    (4, "sgb-a", 4, [80.5, 81.7, 79.4, 83.0]),
    (4, "sgb-c", 4, [81.2, 83.6, 81.5, 83.9]),
    (4, "sgb-a", 5, [78.7, 82.6, 79.9, 82.3]),
    (4, "sgb-c", 5, [79.8, 83.7, 80.8, 83.8]),
];
const CHINESE: [&str; 4] = ["cityu", "msr", "pku", "as"];
const THAI_PUBLISHED: [(&str, f64); 2] = [("sgb-a", 80.1), ("sgb-c", 79.2)];

pub fn published_f1(corpus: &str, setting: Setting, decoder: Decoder, t_max: usize) -> Option<f64> {
    if corpus == "thai" {
        return (setting == Setting::Raw && t_max == 12)
            .then(|| THAI_PUBLISHED.iter().find(|(d, _)| *d == decoder.name()).map(|p| p.1))
            .flatten();
    }
    let col = CHINESE.iter().position(|c| *c == corpus)?;
    PUBLISHED
        .iter()
        .find(|(s, d, t, _)| *s == setting.number() && *d == decoder.name() && *t == t_max)
        .map(|row| row.3[col])
}

fn cmd_repro(a: &ReproArgs, argv: &[String]) -> Result<(), CliError> {
    if !a.full_repro {
        return Err(CliError::Usage(
            "repro trains at full scale on benchmark corpora; pass --full-repro to run it".into(),
        ));
    }
    if !a.data.is_dir() {
        return Err(CliError::Usage(format!("{}: no such directory", a.data.display())));
    }
    let started = now();
    let base = a.overrides.resolve()?;
    create_dir(&a.out)?;
    let mut manifest = RunManifest::new(argv, started).with_config(&base);
    let mut csv = String::from("corpus,setting,t_max,decoder,f1,published_f1\n");
    let mut ran = 0;
    for corpus in CHINESE.iter().copied().chain(["thai"]) {
        let train_path = a.data.join(corpus).join("train.txt");
        let gold_path = a.data.join(corpus).join("test_gold.txt");
        if !train_path.is_file() || !gold_path.is_file() {
            continue;
        }
        manifest.inputs.extend([train_path.clone(), gold_path.clone()]);
        let runs: Vec<(Setting, usize)> = if corpus == "thai" {
            vec![(Setting::Raw, 12)]
        } else {
            a.settings
                .iter()
                .flat_map(|&s| a.t_values.iter().map(move |&t| (s, t)))
                .collect()
        };
        let train_text = read_text(&train_path)?;
        let gold_text = read_text(&gold_path)?;
        let gold = parse_segmented(&gold_text);
        let gold_raw: Vec<String> = gold.iter().map(|l| l.chars.iter().collect()).collect();
        for (setting, t_max) in runs {
            let mut cfg = base.clone();
            cfg.setting = setting;
            cfg.train.t_max = t_max;
            if corpus == "thai" {
                cfg.native = "thai".into();
            }
            let dir = a.out.join(format!("{corpus}-s{}-t{t_max}", setting.number()));
            create_dir(&dir)?;
            // trained on train and test text together, without gold boundaries
            let pre = cfg.preprocess();
            let mut sentences = sentences_from_text(&train_text, &pre);
            sentences.extend(sentences_from_text(&gold_raw.join("\n"), &pre));
            eprintln!("== {corpus} setting {} T={t_max}: {} sentences", setting.number(), sentences.len());
            train_sentences(&sentences, &cfg, true, &dir, &mut |s: &EpochStat| {
                eprintln!("epoch {:>3}  loss {:.4}  {:.1}s", s.epoch, s.mean_loss, s.seconds)
            })?;
            let model = Model::load_dir(&dir)?;
            for decoder in [Decoder::SgbA, Decoder::SgbC] {
                let out = model.segment_lines(&gold_raw, decoder)?;
                let pred: Vec<SegmentedLine> = out.iter().filter_map(|l| SegmentedLine::parse(l)).collect();
                let f1 = evaluate_lines(&gold, &pred)?.f1 * 100.0;
                let published = published_f1(corpus, setting, decoder, t_max);
                let shown = published.map_or("-".to_string(), |p| format!("{p:.1}"));
                println!(
                    "{corpus:<6} setting {} T={t_max:<2} {decoder:<5}  F1 {f1:5.1}  published {shown}",
                    setting.number()
                );
                csv += &format!("{corpus},{},{t_max},{decoder},{f1:.2},{shown}\n", setting.number());
                write_file(&dir.join(format!("{decoder}.txt")), &(out.join("\n") + "\n"))?;
            }
            ran += 1;
        }
    }
    if ran == 0 {
        return Err(CliError::Usage(format!(
            "{}: no corpus directory with train.txt and test_gold.txt",
            a.data.display()
        )));
    }
    write_file(&a.out.join("repro.csv"), &csv)?;
    manifest.write(&a.out.join(MANIFEST_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_train_flags() {
        let cli = Cli::try_parse_from([
            "sgbseg", "train", "c.txt", "-o", "out", "--setting", "4", "--t-max", "5", "--lr", "0.01",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        let cfg = a.overrides.resolve().unwrap();
        assert_eq!(cfg.setting, Setting::Special);
        assert_eq!(cfg.train.t_max, 5);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.train.embed_dim, 300);
    }

    #[test]
    fn bad_decoder_is_usage_error() {
        let e = Cli::try_parse_from(["sgbseg", "segment", "-m", "m", "in.txt", "--decoder", "nope"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn published_lookup() {
        assert_eq!(published_f1("msr", Setting::Special, Decoder::SgbC, 5), Some(83.7));
        assert_eq!(published_f1("pku", Setting::Raw, Decoder::SgbA, 3), Some(78.4));
        assert_eq!(published_f1("thai", Setting::Raw, Decoder::SgbA, 12), Some(80.1));
        assert_eq!(published_f1("msr", Setting::Raw, Decoder::Forward, 3), None);
    }

    #[test]
    fn repro_requires_flag() {
        let cli = Cli::try_parse_from(["sgbseg", "repro", "--data", ".", "-o", "x"]).unwrap();
        let err = execute(cli.command, &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_override_is_usage_error() {
        let o = Overrides {
            epochs: Some(0),
            ..Overrides::default()
        };
        assert_eq!(o.resolve().unwrap_err().exit_code(), 2);
    }
}
