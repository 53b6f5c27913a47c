use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tweetcnn::config::{run_to_dir, RunConfig, Settings};
use tweetcnn::embed::{cosine, pca_project_2d, train_skipgram, EmbeddingTable, SkipGramConfig};
use tweetcnn::metrics::ConfusionMatrix;
use tweetcnn::pipeline::read_supervised;
use tweetcnn::synth::{write_bundle, SynthConfig};
use tweetcnn::textprep::{preprocess, weak_label, TokenSequence, WeakLabel};
use tweetcnn::{Model, Vocabulary};

#[derive(Parser)]
#[command(name = "tweetcnn", version, about = "Convolutional sentiment classifier for tweets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize and tokenize raw tweets, one per line.
    Preprocess {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Split preprocessed tweets by emoticon polarity, stripping emoticons.
    WeakLabel {
        input: PathBuf,
        out_pos: PathBuf,
        out_neg: PathBuf,
    },
    /// Build a vocabulary from preprocessed text.
    BuildVocab {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 15)]
        min_count: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train skip-gram embeddings on preprocessed text.
    TrainEmbeddings(EmbeddingArgs),
    /// Train embeddings and run the distant phase only.
    Pretrain(TrainArgs),
    /// Run all three training phases.
    Train(TrainArgs),
    /// Score a model on a gold TSV and print the metrics report.
    Evaluate { model: PathBuf, gold: PathBuf },
    /// Classify raw tweets, one per line (stdin when no input is given).
    Predict { model: PathBuf, input: Option<PathBuf> },
    /// Project token embeddings onto two principal axes.
    ProjectEmbeddings {
        /// A model directory or an `embeddings/` directory.
        model: PathBuf,
        /// One token per line.
        tokens: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print the cosine similarity of `a,b`; may be repeated.
        #[arg(long, value_name = "A,B")]
        pair: Vec<String>,
    },
    /// Write a synthetic corpus bundle and its training config.
    Synth {
        dir: PathBuf,
        /// Comma-separated language codes.
        #[arg(long, default_value = "en")]
        languages: String,
        #[arg(long)]
        distant_lines: Option<usize>,
        #[arg(long)]
        gold_train: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override applied after the config file; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Above 1, skip-gram runs in parallel and is no longer deterministic.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EmbeddingArgs {
    input: PathBuf,
    /// Output directory for vocab.tsv, embeddings.bin and embeddings.txt.
    #[arg(short, long)]
    output: PathBuf,
    /// Existing vocabulary; built from the input when absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    min_count: u64,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr0: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<tweetcnn::Error> for Failure {
    fn from(e: tweetcnn::Error) -> Self {
        Failure {
            code: if e.is_input_error() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_err(path: &Path, e: io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text).map_err(|e| io_err(path, e))?;
    } else {
        text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    }
    Ok(text.lines().map(str::to_owned).collect())
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

/// Writes to `path`, or stdout when `None`.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w).map_err(|e| Failure {
                code: 1,
                message: format!("stdout: {e}"),
            })
        }
    }
}

fn preprocess_cmd(input: &Path, output: Option<&Path>) -> CliResult {
    let lines = read_lines(input)?;
    with_output(output, |w| {
        for l in &lines {
            writeln!(w, "{}", preprocess(l).joined())?;
        }
        Ok(())
    })
}

fn weak_label_cmd(input: &Path, out_pos: &Path, out_neg: &Path) -> CliResult {
    let lines = read_lines(input)?;
    let (mut pos, mut neg) = (create(out_pos)?, create(out_neg)?);
    let (mut n_pos, mut n_neg, mut discarded) = (0usize, 0usize, 0usize);
    for l in &lines {
        match weak_label(&TokenSequence::from_joined(l)) {
            Some((label, tokens)) if !tokens.is_empty() => {
                let (w, path, n) = match label {
                    WeakLabel::Positive => (&mut pos, out_pos, &mut n_pos),
                    WeakLabel::Negative => (&mut neg, out_neg, &mut n_neg),
                };
                writeln!(w, "{}", tokens.joined()).map_err(|e| io_err(path, e))?;
                *n += 1;
            }
            _ => discarded += 1,
        }
    }
    pos.flush().map_err(|e| io_err(out_pos, e))?;
    neg.flush().map_err(|e| io_err(out_neg, e))?;
    println!("positive\t{n_pos}\nnegative\t{n_neg}\ndiscarded\t{discarded}");
    Ok(())
}

fn token_corpus(paths: &[PathBuf]) -> CliResult<Vec<TokenSequence>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(
            read_lines(p)?
                .iter()
                .map(|l| TokenSequence::from_joined(l))
                .filter(|t| !t.is_empty()),
        );
    }
    Ok(out)
}

fn build_vocab_cmd(inputs: &[PathBuf], min_count: u64, output: Option<&Path>) -> CliResult {
    let corpus = token_corpus(inputs)?;
    let vocab = Vocabulary::build(corpus.iter(), min_count)?;
    eprintln!("{} tokens kept at min_count {min_count}", vocab.len());
    with_output(output, |w| w.write_all(vocab.to_tsv().as_bytes()))
}

fn train_embeddings_cmd(a: &EmbeddingArgs) -> CliResult {
    let corpus = token_corpus(std::slice::from_ref(&a.input))?;
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::build(corpus.iter(), a.min_count)?,
    };
    let d = SkipGramConfig::default();
    let cfg = SkipGramConfig {
        window: a.window.unwrap_or(d.window),
        dim: a.dim.unwrap_or(d.dim),
        negatives: a.negatives.unwrap_or(d.negatives),
        subsample_t: a.subsample.unwrap_or(d.subsample_t),
        epochs: a.epochs.unwrap_or(d.epochs),
        lr0: a.lr0.unwrap_or(d.lr0),
        seed: a.seed.unwrap_or(d.seed),
        threads: a.threads.unwrap_or(d.threads),
    };
    let ids: Vec<Vec<u32>> = corpus.iter().map(|t| vocab.ids(t)).collect();
    let table = train_skipgram(&ids, &vocab, &cfg)?;
    fs::create_dir_all(&a.output).map_err(|e| io_err(&a.output, e))?;
    vocab.save(&a.output.join("vocab.tsv"))?;
    table.save_bin(&a.output.join("embeddings.bin"))?;
    table.save_text(&vocab, &a.output.join("embeddings.txt"))?;
    eprintln!("{} x {} embeddings written to {}", table.vocab_size(), table.dim(), a.output.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs, distant_only: bool) -> CliResult {
    let mut s = Settings::new();
    if let Some(p) = &a.config {
        s.merge_file(p)?;
    }
    for o in &a.overrides {
        s.merge_override(o)?;
    }
    if distant_only {
        s.set("supervised.epochs", "0")?;
    }
    if let Some(seed) = a.seed {
        s.set("seed", seed.to_string())?;
    }
    if let Some(t) = a.threads {
        s.set("threads", t.to_string())?;
    }
    if let Some(o) = &a.output {
        s.set("output", o.to_string_lossy())?;
    }
    let cfg = RunConfig::from_settings(&s)?;
    let dir = cfg.output.clone().ok_or_else(|| Failure::input("no output directory (use --output or output=)"))?;
    let report = run_to_dir(&cfg)?;
    let tm = report.timings;
    eprintln!(
        "skipgram {:.1}s, distant {:.1}s, supervised {:.1}s",
        tm.skipgram.as_secs_f64(),
        tm.distant.as_secs_f64(),
        tm.supervised.as_secs_f64()
    );
    println!("validation_f1\t{:.4}", report.validation_f1);
    println!("model\t{}", dir.join("model").display());
    Ok(())
}

fn evaluate_cmd(model: &Path, gold: &Path) -> CliResult {
    let model = Model::load(model)?;
    let mut cm = ConfusionMatrix::default();
    for (_, label, tokens) in read_supervised(gold)? {
        cm.add(label.index(), model.predict_tokens(&tokens)?.label.index())?;
    }
    print!("{}", cm.report());
    Ok(())
}

fn predict_cmd(model: &Path, input: Option<&Path>) -> CliResult {
    let model = Model::load(model)?;
    let lines = match input {
        Some(p) => read_lines(p)?,
        None => io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<_>>()
            .map_err(|e| io_err(Path::new("-"), e))?,
    };
    let mut out = Vec::with_capacity(lines.len());
    for l in &lines {
        out.push(model.predict_text(l)?.to_tsv());
    }
    with_output(None, |w| out.iter().try_for_each(|l| writeln!(w, "{l}")))
}

/// Loads either a model directory or a directory holding `embeddings.bin`.
fn load_table(dir: &Path) -> CliResult<(Vocabulary, EmbeddingTable)> {
    let bin = dir.join("embeddings.bin");
    if bin.exists() {
        Ok((Vocabulary::load(&dir.join("vocab.tsv"))?, EmbeddingTable::load_bin(&bin)?))
    } else {
        let model = Model::load(dir)?;
        let table = model.params.embedding_table();
        Ok((model.vocab, table))
    }
}

fn lookup(vocab: &Vocabulary, token: &str) -> CliResult<u32> {
    vocab
        .id(token)
        .ok_or_else(|| Failure::input(format!("unknown token {token:?}")))
}

fn project_cmd(model: &Path, tokens: &Path, output: Option<&Path>, pairs: &[String]) -> CliResult {
    let (vocab, table) = load_table(model)?;
    let tokens: Vec<String> = read_lines(tokens)?
        .iter()
        .map(|l| l.trim().to_owned())
        .filter(|l| !l.is_empty())
        .collect();
    let ids = tokens.iter().map(|t| lookup(&vocab, t)).collect::<CliResult<Vec<_>>>()?;
    let mut similarities = Vec::new();
    for p in pairs {
        let Some((a, b)) = p.split_once(',') else {
            return Err(Failure::input(format!("--pair {p:?} is not a,b")));
        };
        let (ia, ib) = (lookup(&vocab, a.trim())?, lookup(&vocab, b.trim())?);
        similarities.push(format!("cosine\t{}\t{}\t{:.4}", a.trim(), b.trim(), cosine(table.row(ia), table.row(ib))?));
    }
    let projection = pca_project_2d(&table, &ids)?;
    with_output(output, |w| {
        for (t, (x, y)) in tokens.iter().zip(&projection.points) {
            writeln!(w, "{t}\t{x:.6}\t{y:.6}")?;
        }
        Ok(())
    })?;
    for line in similarities {
        println!("{line}");
    }
    Ok(())
}

fn synth_cmd(dir: &Path, languages: &str, distant_lines: Option<usize>, gold_train: Option<usize>, seed: Option<u64>) -> CliResult {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        languages: languages.split(',').map(|l| l.trim().to_owned()).filter(|l| !l.is_empty()).collect(),
        distant_lines: distant_lines.unwrap_or(d.distant_lines),
        gold_train: gold_train.unwrap_or(d.gold_train),
        seed: seed.unwrap_or(d.seed),
        ..d
    };
    for f in write_bundle(dir, &cfg)? {
        println!("{}\tpositive marker {}\tnegative marker {}", f.language, f.positive_marker, f.negative_marker);
    }
    println!("config\t{}", dir.join("bundle.conf").display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Preprocess { input, output } => preprocess_cmd(&input, output.as_deref()),
        Command::WeakLabel { input, out_pos, out_neg } => weak_label_cmd(&input, &out_pos, &out_neg),
        Command::BuildVocab {
            inputs,
            min_count,
            output,
        } => build_vocab_cmd(&inputs, min_count, output.as_deref()),
        Command::TrainEmbeddings(a) => train_embeddings_cmd(&a),
        Command::Pretrain(a) => train_cmd(&a, true),
        Command::Train(a) => train_cmd(&a, false),
        Command::Evaluate { model, gold } => evaluate_cmd(&model, &gold),
        Command::Predict { model, input } => predict_cmd(&model, input.as_deref()),
        Command::ProjectEmbeddings {
            model,
            tokens,
            output,
            pair,
        } => project_cmd(&model, &tokens, output.as_deref(), &pair),
        Command::Synth {
            dir,
            languages,
            distant_lines,
            gold_train,
            seed,
        } => synth_cmd(&dir, &languages, distant_lines, gold_train, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tweetcnn: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
