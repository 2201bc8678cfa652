#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rolegraph::cli;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn golden_dir() -> PathBuf {
    fixture_dir().join("golden")
}

/// Output of one in-process CLI invocation.
pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run<S: AsRef<str>>(args: &[S]) -> Run {
    let argv: Vec<String> = std::iter::once("rolegraph".to_string())
        .chain(args.iter().map(|a| a.as_ref().to_string()))
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).expect("utf-8 stdout"),
        stderr: String::from_utf8(err).expect("utf-8 stderr"),
    }
}

/// Like [`run`] but panics unless the exit code is 0.
pub fn run_ok<S: AsRef<str>>(args: &[S]) -> Run {
    let r = run(args);
    assert_eq!(
        r.code,
        0,
        "rolegraph {:?} failed:\n{}",
        args.iter().map(AsRef::as_ref).collect::<Vec<_>>(),
        r.stderr
    );
    r
}

pub fn p(path: &Path) -> String {
    path.to_str().expect("utf-8 path").to_string()
}

/// Text and JSON reports of both fixture pipelines.
pub struct PipelineReports {
    pub diffusion_txt: String,
    pub diffusion_json: String,
    pub gcn_txt: String,
    pub gcn_json: String,
}

/// Runs `build-graph → diffuse → evaluate` and
/// `build-graph → gcn-train → gcn-predict → evaluate` on the bundled fixture.
pub fn run_fixture_pipelines(work: &Path) -> PipelineReports {
    let fx = fixture_dir();
    let emb = p(&fx.join("embeddings.emb"));
    let graph = p(&work.join("fixture.sgraph"));
    let labels = p(&work.join("labels.json"));
    run_ok(&["build-graph", &emb, "-o", &graph]);
    run_ok(&[
        "split",
        &p(&fx.join("corpus.jsonl")),
        &p(&fx.join("partition.json")),
        "-o",
        &labels,
    ]);

    let diff_pred = p(&work.join("diffusion.jsonl"));
    let diff_json = work.join("diffusion.report.json");
    run_ok(&["diffuse", &graph, &labels, "-o", &diff_pred]);
    let diffusion_txt = run_ok(&[
        "evaluate",
        &labels,
        &diff_pred,
        "--name",
        "Label Diffusion",
        "--json",
        &p(&diff_json),
    ])
    .stdout;

    let ckpt = p(&work.join("model.gcn"));
    let gcn_pred = p(&work.join("gcn.jsonl"));
    let gcn_json = work.join("gcn.report.json");
    run_ok(&["gcn-train", &graph, &emb, &labels, "-o", &ckpt]);
    run_ok(&["gcn-predict", &graph, &emb, &ckpt, &labels, "-o", &gcn_pred]);
    let gcn_txt = run_ok(&[
        "evaluate",
        &labels,
        &gcn_pred,
        "--name",
        "GCN",
        "--json",
        &p(&gcn_json),
    ])
    .stdout;

    PipelineReports {
        diffusion_txt,
        diffusion_json: std::fs::read_to_string(diff_json).unwrap(),
        gcn_txt,
        gcn_json: std::fs::read_to_string(gcn_json).unwrap(),
    }
}
