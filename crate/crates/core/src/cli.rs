//! The `rolegraph` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::context::{self, StopwordList, WindowStyle};
use crate::corpus::{self, LabelArray, PartitionSpec};
use crate::diffusion::{self, DiffusionConfig};
use crate::eval;
use crate::gcn::{self, GcnModel, TrainConfig};
use crate::graph::{self, NormMode};
use crate::prediction::{self, Prediction};
use crate::synth;

#[derive(Parser, Debug)]
#[command(name = "rolegraph", version, about = "Graph-based rhetorical role labeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the thresholded cosine graph from an EMB1 embedding file.
    BuildGraph {
        embeddings: PathBuf,
        #[arg(long, default_value_t = graph::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Combine a corpus and a partition into a masked label file.
    Split {
        corpus: PathBuf,
        partition: PathBuf,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Label diffusion over a graph; writes predictions JSONL.
    Diffuse {
        graph: PathBuf,
        labels: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Solve the linear system directly.
        #[arg(long, conflicts_with = "iterative")]
        closed_form: bool,
        /// Fixed-point iteration (default).
        #[arg(long)]
        iterative: bool,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Train the two-layer GCN and write a GCN1 checkpoint.
    GcnTrain {
        graph: PathBuf,
        embeddings: PathBuf,
        labels: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write per-epoch loss as CSV.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Predict masked sentences with a trained checkpoint.
    GcnPredict {
        graph: PathBuf,
        embeddings: PathBuf,
        checkpoint: PathBuf,
        labels: PathBuf,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Turn a corpus into 5-sentence context windows (JSONL).
    Window {
        corpus: PathBuf,
        #[arg(long, default_value = context::DEFAULT_PAD)]
        pad_token: String,
        #[arg(long, default_value = context::DEFAULT_SEPARATOR)]
        separator: String,
        /// Stopword file, one word per line. Defaults to the bundled English list.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Skip stopword removal.
        #[arg(long, conflicts_with = "stopwords")]
        no_clean: bool,
        #[command(flatten)]
        out: OutputArg,
    },
    /// Score prediction files against the masked gold labels.
    Evaluate {
        labels: PathBuf,
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
        /// Model names, one per prediction file (defaults to file stems).
        #[arg(long = "name")]
        names: Vec<String>,
        /// Write one JSON report per line to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write the seeded synthetic fixture (corpus, embeddings, partition).
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct OutputArg {
    /// Output file (stdout if omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

/// Parses `argv` (including the program name) and runs one subcommand.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
        Err(Failure::Data(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
    }
}

fn emit(out: &OutputArg, stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), Failure> {
    match &out.output {
        Some(p) => fs::write(p, bytes).map_err(|e| data(format!("{}: {e}", p.display()))),
        None => stdout.write_all(bytes).map_err(data),
    }
}

fn predictions_bytes(preds: &[Prediction]) -> Vec<u8> {
    let mut buf = Vec::new();
    prediction::write_predictions(&mut buf, preds).expect("write to memory");
    buf
}

fn load_graph_inputs(
    graph_path: &Path,
    labels_path: &Path,
) -> Result<(graph::SentenceGraph, LabelArray), Failure> {
    let g = graph::read_graph(graph_path).map_err(data)?;
    let labels = LabelArray::read(labels_path).map_err(data)?;
    if labels.len() != g.n() {
        return Err(data(format!(
            "graph has {} nodes but label file has {} sentences",
            g.n(),
            labels.len()
        )));
    }
    Ok((g, labels))
}

fn load_features(path: &Path, n: usize) -> Result<corpus::EmbeddingMatrix, Failure> {
    let m = corpus::read_embeddings(path).map_err(data)?;
    if m.rows() != n {
        return Err(data(format!(
            "embedding file has {} rows but the graph has {n} nodes",
            m.rows()
        )));
    }
    Ok(m)
}

fn execute(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::BuildGraph {
            embeddings,
            threshold,
            out,
        } => {
            if !(0.0..1.0).contains(&threshold) {
                return Err(usage(format!("--threshold must lie in [0, 1), got {threshold}")));
            }
            let m = corpus::read_embeddings(&embeddings).map_err(data)?;
            let g = graph::build_graph(&m, threshold).map_err(data)?;
            emit(&out, stdout, g.to_sgraph().as_bytes())
        }
        Command::Split {
            corpus: corpus_path,
            partition,
            out,
        } => {
            let records = corpus::read_corpus(&corpus_path).map_err(data)?;
            let spec = PartitionSpec::read(&partition).map_err(data)?;
            let (labels, _) = corpus::split_mask(&records, &spec).map_err(data)?;
            emit(&out, stdout, format!("{}\n", labels.to_json()).as_bytes())
        }
        Command::Diffuse {
            graph: graph_path,
            labels,
            alpha,
            closed_form,
            iterative: _,
            tol,
            max_iters,
            out,
        } => {
            let cfg = DiffusionConfig {
                alpha,
                max_iters,
                tol,
            };
            cfg.validate().map_err(usage)?;
            let (g, labels) = load_graph_inputs(&graph_path, &labels)?;
            let p = graph::normalize(&g, NormMode::Diffusion);
            if !p.isolated().is_empty() {
                let _ = writeln!(
                    stderr,
                    "warning: {} isolated node(s) receive no propagated scores",
                    p.isolated().len()
                );
            }
            let y = labels.onehot();
            let result = if closed_form {
                diffusion::diffuse_closed_form(&p, &y, &cfg)
            } else {
                diffusion::diffuse_iterative(&p, &y, &cfg)
            }
            .map_err(data)?;
            if !result.converged {
                let _ = writeln!(
                    stderr,
                    "warning: not converged after {} iterations",
                    result.iterations_run
                );
            }
            let preds = diffusion::predict(&result, &labels.masked_indices());
            let undecided = preds.iter().filter(|p| p.undecided).count();
            if undecided > 0 {
                let _ = writeln!(stderr, "warning: {undecided} masked sentence(s) undecided, labeled NONE");
            }
            emit(&out, stdout, &predictions_bytes(&preds))
        }
        Command::GcnTrain {
            graph: graph_path,
            embeddings,
            labels,
            output,
            hidden,
            lr,
            epochs,
            seed,
            loss_csv,
        } => {
            let cfg = TrainConfig {
                learning_rate: lr,
                epochs,
                ..TrainConfig::default()
            };
            cfg.validate().map_err(usage)?;
            if hidden == 0 {
                return Err(usage("--hidden must be at least 1"));
            }
            let (g, labels) = load_graph_inputs(&graph_path, &labels)?;
            let m = load_features(&embeddings, g.n())?;
            let ahat = graph::normalize(&g, NormMode::Gcn);
            let model = GcnModel::new(m.dims(), hidden, labels.num_classes(), seed);
            let (model, history) =
                gcn::train(model, &ahat, &m.to_dense(), &labels.train_targets(), &cfg).map_err(data)?;
            model.save(&output).map_err(data)?;
            if let Some(path) = loss_csv {
                let file = File::create(&path).map_err(|e| data(format!("{}: {e}", path.display())))?;
                gcn::write_loss_csv(BufWriter::new(file), &history).map_err(data)?;
            }
            let _ = writeln!(
                stderr,
                "trained {epochs} epochs: loss {:.6} -> {:.6}",
                history[0],
                history[history.len() - 1]
            );
            Ok(())
        }
        Command::GcnPredict {
            graph: graph_path,
            embeddings,
            checkpoint,
            labels,
            out,
        } => {
            let (g, labels) = load_graph_inputs(&graph_path, &labels)?;
            let m = load_features(&embeddings, g.n())?;
            let model = GcnModel::load(&checkpoint).map_err(data)?;
            let ahat = graph::normalize(&g, NormMode::Gcn);
            let preds =
                gcn::predict(&model, &ahat, &m.to_dense(), &labels.masked_indices()).map_err(data)?;
            emit(&out, stdout, &predictions_bytes(&preds))
        }
        Command::Window {
            corpus: corpus_path,
            pad_token,
            separator,
            stopwords,
            no_clean,
            out,
        } => {
            let sw = match (no_clean, stopwords) {
                (true, _) => None,
                (false, Some(p)) => Some(StopwordList::from_file(&p).map_err(data)?),
                (false, None) => Some(StopwordList::english()),
            };
            let records = corpus::read_corpus(&corpus_path).map_err(data)?;
            let style = WindowStyle {
                pad_token,
                separator,
            };
            let windows = context::windowize_corpus(&records, sw.as_ref(), &style).map_err(data)?;
            let mut buf = Vec::new();
            for w in &windows {
                buf.extend_from_slice(serde_json::to_string(w).expect("serializes").as_bytes());
                buf.push(b'\n');
            }
            emit(&out, stdout, &buf)
        }
        Command::Evaluate {
            labels,
            predictions,
            names,
            json,
        } => {
            if !names.is_empty() && names.len() != predictions.len() {
                return Err(usage(format!(
                    "{} --name values for {} prediction files",
                    names.len(),
                    predictions.len()
                )));
            }
            let gold = LabelArray::read(&labels).map_err(data)?;
            let masked = gold.masked_indices();
            let mut reports = Vec::with_capacity(predictions.len());
            for (i, path) in predictions.iter().enumerate() {
                let name = names.get(i).cloned().unwrap_or_else(|| {
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| path.display().to_string())
                });
                let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
                let preds = prediction::read_predictions(BufReader::new(file))
                    .map_err(|e| data(format!("{}: {e}", path.display())))?;
                let report = eval::evaluate(&name, &preds, &gold, &masked)
                    .map_err(|e| data(format!("{}: {e}", path.display())))?;
                reports.push(report);
            }
            let mut text = eval::render_summary(&reports);
            for r in &reports {
                text.push('\n');
                text.push_str(&eval::render_detail(r));
            }
            stdout.write_all(text.as_bytes()).map_err(data)?;
            if let Some(path) = json {
                let body: String = reports
                    .iter()
                    .map(|r| format!("{}\n", eval::report_json(r)))
                    .collect();
                fs::write(&path, body).map_err(|e| data(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Synth { seed, out_dir } => {
            fs::create_dir_all(&out_dir).map_err(data)?;
            let f = synth::fixture(seed);
            corpus::write_corpus(&f.records, out_dir.join("corpus.jsonl")).map_err(data)?;
            corpus::write_embeddings(&f.embeddings, out_dir.join("embeddings.emb")).map_err(data)?;
            let part = serde_json::to_string_pretty(&f.partition).expect("serializes");
            fs::write(out_dir.join("partition.json"), format!("{part}\n")).map_err(data)?;
            Ok(())
        }
    }
}
