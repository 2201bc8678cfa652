//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs with `harness = false` so the lines are always printed.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rolegraph::context::{build_window, windowize_corpus, StopwordList, WindowStyle};
use rolegraph::corpus::{EmbeddingMatrix, SentenceRecord, NUM_CLASSES};
use rolegraph::diffusion::{diffuse_closed_form, diffuse_iterative, DiffusionConfig};
use rolegraph::gcn::{self, GcnModel, TrainConfig};
use rolegraph::graph::{build_graph, normalize, NormMode, SentenceGraph};
use rolegraph::linalg::Dense;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_s), || {
        format!("took {elapsed:.2?}, limit {limit_s} s")
    })
}

fn random_embeddings(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
    // A shared offset pulls vectors together so a fair share of pairs clear 0.5.
    let offset: Vec<f32> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
    loop {
        let data: Vec<f32> = (0..n * d)
            .map(|k| offset[k % d] + rng.random_range(-1.0f32..1.0))
            .collect();
        let norms_ok = data.chunks(d).all(|r| r.iter().any(|&v| v != 0.0));
        if norms_ok {
            return EmbeddingMatrix::new(n, d, data).unwrap();
        }
    }
}

/// Random graph with i.i.d. edges, weights in (threshold, 1].
fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64, threshold: f64) -> SentenceGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                let w = 1.0 - rng.random_range(0.0..(1.0 - threshold));
                edges.push((i, j, w));
            }
        }
    }
    SentenceGraph::from_edges(n, threshold, edges).unwrap()
}

fn graph_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut total_edges = 0;
    for case in 0..50 {
        let n = rng.random_range(2..=200);
        let d = rng.random_range(1..=32);
        let m = random_embeddings(&mut rng, n, d);
        let g = build_graph(&m, 0.5).map_err(|e| e.to_string())?;

        // Brute force over unit-normalized rows.
        let unit: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let r: Vec<f64> = m.row(i).iter().map(|&v| f64::from(v)).collect();
                let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.iter().map(|v| v / norm).collect()
            })
            .collect();
        let mut expected = BTreeMap::new();
        for i in 0..n {
            for j in i + 1..n {
                let c: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
                if c > 0.5 {
                    expected.insert((i, j), c.min(1.0));
                }
            }
        }
        let got: BTreeMap<(usize, usize), f64> =
            g.edges().iter().map(|&(i, j, w)| ((i, j), w)).collect();
        ensure(got.keys().eq(expected.keys()), || {
            format!("case {case}: edge sets differ ({} vs {})", got.len(), expected.len())
        })?;
        for (key, w) in &got {
            let e = expected[key];
            ensure((w - e).abs() <= 1e-12, || {
                format!("case {case}: edge {key:?} weight {w} vs {e}")
            })?;
        }
        total_edges += got.len();
    }
    let elapsed = start.elapsed();
    within(elapsed, 10)?;
    Ok(format!("50 matrices, {total_edges} edges matched, {elapsed:.2?}"))
}

fn random_prior(rng: &mut ChaCha8Rng, n: usize) -> Dense {
    let mut y = Dense::zeros(n, NUM_CLASSES);
    for i in 0..n {
        if rng.random_bool(0.4) {
            y.set(i, rng.random_range(0..NUM_CLASSES), 1.0);
        }
    }
    y
}

fn diffusion_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = DiffusionConfig {
        alpha: 0.5,
        ..DiffusionConfig::default()
    };
    let start = Instant::now();
    let (mut worst_gap, mut worst_res) = (0.0f64, 0.0f64);
    for case in 0..20 {
        let n = rng.random_range(2..=100);
        let density = rng.random_range(0.02..0.3);
        let g = random_graph(&mut rng, n, density, 0.5);
        let p = normalize(&g, NormMode::Diffusion);
        let y = random_prior(&mut rng, n);
        let closed = diffuse_closed_form(&p, &y, &cfg).map_err(|e| e.to_string())?;
        let iter = diffuse_iterative(&p, &y, &cfg).map_err(|e| e.to_string())?;
        ensure(iter.converged, || format!("case {case}: iteration did not converge"))?;
        let gap = closed.scores.max_abs_diff(&iter.scores);
        let res = closed
            .fixed_point_residual(&p, &y, cfg.alpha)
            .max(iter.fixed_point_residual(&p, &y, cfg.alpha));
        ensure(gap <= 1e-6, || format!("case {case}: routes differ by {gap:e}"))?;
        ensure(res <= 1e-7, || format!("case {case}: residual {res:e}"))?;
        worst_gap = worst_gap.max(gap);
        worst_res = worst_res.max(res);
    }
    let elapsed = start.elapsed();
    within(elapsed, 10)?;
    Ok(format!(
        "20 graphs, max gap {worst_gap:.1e}, max residual {worst_res:.1e}, {elapsed:.2?}"
    ))
}

fn two_node_instance() -> Outcome {
    let g = SentenceGraph::from_edges(2, 0.5, vec![(0, 1, 1.0)]).unwrap();
    let p = normalize(&g, NormMode::Diffusion);
    let mut y = Dense::zeros(2, NUM_CLASSES);
    y.set(0, 0, 1.0);
    let alpha: f64 = 0.5;

    // (1 − α)(I − αP)^-1 via the 2×2 adjugate, P = [[0, 1], [1, 0]].
    let (a, b, c, d) = (1.0f64, -alpha, -alpha, 1.0f64);
    let det = a * d - b * c;
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let oracle = [(1.0 - alpha) * inv[0][0], (1.0 - alpha) * inv[1][0]];
    ensure(
        (oracle[0] - 2.0 / 3.0).abs() < 1e-15 && (oracle[1] - 1.0 / 3.0).abs() < 1e-15,
        || format!("oracle gives {oracle:?}"),
    )?;

    let closed = diffuse_closed_form(&p, &y, &DiffusionConfig::default()).map_err(|e| e.to_string())?;
    let tight = DiffusionConfig {
        tol: 1e-12,
        ..DiffusionConfig::default()
    };
    let iter = diffuse_iterative(&p, &y, &tight).map_err(|e| e.to_string())?;
    for (route, r) in [("closed form", &closed), ("iterative", &iter)] {
        let got = [r.scores.get(0, 0), r.scores.get(1, 0)];
        let err = (got[0] - oracle[0]).abs().max((got[1] - oracle[1]).abs());
        ensure(err <= 1e-9, || format!("{route}: {got:?}, error {err:e}"))?;
    }
    Ok(format!(
        "F*[:, 0] = ({:.12}, {:.12})",
        closed.scores.get(0, 0),
        closed.scores.get(1, 0)
    ))
}

fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Dense {
    Dense::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect(),
    )
}

fn gradient_check() -> Outcome {
    const STEP: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (d, h, k) = (5, 4, 3);
    let start = Instant::now();
    let (mut accepted, mut rejected, mut worst) = (0, 0, 0.0f64);
    while accepted < 25 {
        let n = rng.random_range(3..=8);
        let g = random_graph(&mut rng, n, 0.5, 0.5);
        let ahat = normalize(&g, NormMode::Gcn);
        let x = random_dense(&mut rng, n, d, 1.0);
        let model = GcnModel::from_weights(
            random_dense(&mut rng, d, h, 1.0),
            random_dense(&mut rng, h, k, 1.0),
        )
        .unwrap();
        let mut targets: Vec<Option<usize>> = (0..n)
            .map(|_| rng.random_bool(0.6).then(|| rng.random_range(0..k)))
            .collect();
        targets[0] = Some(rng.random_range(0..k));

        // A finite-difference step must not cross a ReLU kink: every
        // pre-activation has to stay clear of zero by more than the step can
        // move it.
        let ax = ahat.matrix().mul_dense(&x);
        let reach = 2.0 * STEP * ax.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pre = ahat.matrix().mul_dense(&x.matmul(&model.w0));
        if pre.as_slice().iter().any(|v| v.abs() <= reach) {
            rejected += 1;
            continue;
        }

        let grads = gcn::loss_and_grads(&model, &ahat, &x, &targets).map_err(|e| e.to_string())?;
        let loss_at = |m: &GcnModel| gcn::loss_and_grads(m, &ahat, &x, &targets).unwrap().loss;
        for layer in 0..2 {
            let len = if layer == 0 { d * h } else { h * k };
            for e in 0..len {
                let mut plus = model.clone();
                let mut minus = model.clone();
                let (wp, wm, analytic) = if layer == 0 {
                    (plus.w0.as_mut_slice(), minus.w0.as_mut_slice(), grads.w0.as_slice()[e])
                } else {
                    (plus.w1.as_mut_slice(), minus.w1.as_mut_slice(), grads.w1.as_slice()[e])
                };
                wp[e] += STEP;
                wm[e] -= STEP;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * STEP);
                let scale = analytic.abs().max(numeric.abs());
                // Both sides vanish for dead hidden units.
                let rel = if scale < 1e-10 { 0.0 } else { (analytic - numeric).abs() / scale };
                ensure(rel < 1e-4, || {
                    format!("instance {accepted}: W{layer}[{e}] analytic {analytic:e} numeric {numeric:e} rel {rel:e}")
                })?;
                worst = worst.max(rel);
            }
        }
        accepted += 1;
    }
    let elapsed = start.elapsed();
    within(elapsed, 30)?;
    Ok(format!(
        "{accepted} instances ({rejected} near a ReLU kink redrawn), max rel error {worst:.1e}, {elapsed:.2?}"
    ))
}

fn gcn_forward_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (d, h) = (6, 8);

    // Row-stochastic output and exact permutation equivariance.
    let mut worst_row = 0.0f64;
    for case in 0..20 {
        let n = rng.random_range(2..=40);
        let g = random_graph(&mut rng, n, 0.2, 0.5);
        let x = random_dense(&mut rng, n, d, 1.0);
        let model = GcnModel::new(d, h, NUM_CLASSES, case);
        let z = gcn::forward(&model, &normalize(&g, NormMode::Gcn), &x).map_err(|e| e.to_string())?;
        for i in 0..n {
            let s: f64 = z.row(i).iter().sum();
            worst_row = worst_row.max((s - 1.0).abs());
        }

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let edges = g
            .edges()
            .iter()
            .map(|&(i, j, w)| (perm[i].min(perm[j]), perm[i].max(perm[j]), w))
            .collect();
        let gp = SentenceGraph::from_edges(n, 0.5, edges).unwrap();
        let mut xp = Dense::zeros(n, d);
        for i in 0..n {
            xp.row_mut(perm[i]).copy_from_slice(x.row(i));
        }
        let zp = gcn::forward(&model, &normalize(&gp, NormMode::Gcn), &xp).map_err(|e| e.to_string())?;
        for i in 0..n {
            let same = z.row(i).iter().zip(zp.row(perm[i])).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, || format!("case {case}: node {i} not equivariant bit for bit"))?;
        }
    }
    ensure(worst_row <= 1e-9, || format!("row sum off by {worst_row:e}"))?;

    // Two-hop receptive field on the path 0-1-2-3-4-5-6.
    let path = SentenceGraph::from_edges(7, 0.5, (0..6).map(|i| (i, i + 1, 0.9)).collect()).unwrap();
    let ahat = normalize(&path, NormMode::Gcn);
    let model = GcnModel::new(d, h, NUM_CLASSES, 7);
    let x = random_dense(&mut rng, 7, d, 1.0);
    let z = gcn::forward(&model, &ahat, &x).map_err(|e| e.to_string())?;
    let mut changed_near = 0;
    for j in 0..7 {
        let mut xe = x.clone();
        xe.row_mut(j).iter_mut().for_each(|v| *v += 5.0);
        let ze = gcn::forward(&model, &ahat, &xe).map_err(|e| e.to_string())?;
        for i in 0..7 {
            let same = z.row(i) == ze.row(i);
            if i.abs_diff(j) >= 3 {
                ensure(same, || format!("editing node {j} changed Z row {i}"))?;
            } else if !same {
                changed_near += 1;
            }
        }
    }
    Ok(format!(
        "max |row sum - 1| {worst_row:.1e}, 20 permutations bit-exact, path locality holds ({changed_near} in-range rows moved)"
    ))
}

fn gcn_learning_sanity() -> Outcome {
    let (emb, gold, masked) = rolegraph::synth::two_cliques(10, 3, 42);
    let g = build_graph(&emb, 0.5).map_err(|e| e.to_string())?;
    let n = emb.rows();
    for i in 0..n {
        for j in i + 1..n {
            let linked = g.weight(i, j) > 0.0;
            ensure(linked == (gold[i] == gold[j]), || {
                format!("pair ({i}, {j}) breaks the two-clique structure")
            })?;
        }
    }
    let ahat = normalize(&g, NormMode::Gcn);
    let x = emb.to_dense();
    let targets: Vec<Option<usize>> = (0..n)
        .map(|i| (!masked.contains(&i)).then_some(gold[i]))
        .collect();
    let model = GcnModel::new(emb.dims(), 64, NUM_CLASSES, 42);
    let (model, history) =
        gcn::train(model, &ahat, &x, &targets, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let labeled: Vec<usize> = (0..n).filter(|i| !masked.contains(i)).collect();
    let acc = |idx: &[usize]| -> Result<f64, String> {
        let preds = gcn::predict(&model, &ahat, &x, idx).map_err(|e| e.to_string())?;
        let hits = preds.iter().filter(|p| p.label.code() == gold[p.index]).count();
        Ok(hits as f64 / idx.len() as f64)
    };
    let (train_acc, masked_acc) = (acc(&labeled)?, acc(&masked)?);
    ensure(train_acc == 1.0, || format!("labeled accuracy {train_acc}"))?;
    ensure(masked_acc >= 0.9, || format!("masked accuracy {masked_acc}"))?;
    Ok(format!(
        "labeled acc {train_acc:.2}, masked acc {masked_acc:.2}, loss {:.4} -> {:.6}",
        history[0],
        history[history.len() - 1]
    ))
}

fn context_windows() -> Outcome {
    let style = WindowStyle::default();
    let doc = ["Facts were stated.", "Arguments were heard.", "Appeal dismissed."];
    let expected = [
        ["<pad>", "<pad>", doc[0], doc[1], doc[2]],
        ["<pad>", doc[0], doc[1], doc[2], "<pad>"],
        [doc[0], doc[1], doc[2], "<pad>", "<pad>"],
    ];
    for (i, slots) in expected.iter().enumerate() {
        let w = build_window("doc", &doc, i, &style).map_err(|e| e.to_string())?;
        ensure(w.slots.iter().map(String::as_str).eq(slots.iter().copied()), || {
            format!("target {i}: slots {:?}", w.slots)
        })?;
        let pads = slots.iter().enumerate().filter(|&(s, v)| s != 2 && *v == "<pad>").count();
        ensure(w.pad_count("<pad>") == pads, || format!("target {i}: pad count"))?;
        ensure(w.rendered.matches(" </s> ").count() == 4, || {
            format!("target {i}: separators in {:?}", w.rendered)
        })?;
        ensure(w.rendered == slots.join(" </s> "), || format!("target {i}: {:?}", w.rendered))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let words = ["the", "court", "held", "that", "appeal", "is", "of", "a", "fact", "Section"];
    let sw = StopwordList::english();
    let mut total = 0;
    for _ in 0..30 {
        let mut records = Vec::new();
        for d in 0..rng.random_range(1..6) {
            for s in 0..rng.random_range(1..12) {
                let text: Vec<&str> = (0..rng.random_range(0..8))
                    .map(|_| *words.choose(&mut rng).unwrap())
                    .collect();
                records.push(SentenceRecord {
                    doc_id: format!("doc{d}"),
                    sent_index: s,
                    text: text.join(" "),
                    label: None,
                });
            }
        }
        for stop in [Some(&sw), None] {
            let out = windowize_corpus(&records, stop, &style).map_err(|e| e.to_string())?;
            ensure(out.len() == records.len(), || {
                format!("{} windows for {} sentences", out.len(), records.len())
            })?;
        }
        total += records.len();
    }
    Ok(format!("3-sentence document exact, {total} randomized sentences windowed one-to-one"))
}

fn format_round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for case in 0..100 {
        let (rows, dims) = (rng.random_range(0..40), rng.random_range(1..40));
        let data: Vec<f32> = (0..rows * dims)
            .map(|_| rng.random_range(-1e3f32..1e3) * 10f32.powi(rng.random_range(-6..3)))
            .collect();
        let m = EmbeddingMatrix::new(rows, dims, data).unwrap();
        let path = dir.path().join(format!("m{case}.emb"));
        rolegraph::corpus::write_embeddings(&m, &path).map_err(|e| e.to_string())?;
        let back = rolegraph::corpus::read_embeddings(&path).map_err(|e| e.to_string())?;
        ensure(back == m, || format!("EMB1 case {case}: values differ"))?;
        let bytes = std::fs::read(&path).unwrap();
        ensure(back.to_bytes() == bytes, || format!("EMB1 case {case}: bytes differ"))?;

        let threshold = [0.5, 0.0, 0.25, 0.7, 0.9][case % 5];
        let n = rng.random_range(0..60);
        let density = rng.random_range(0.0..0.5);
        let g = random_graph(&mut rng, n, density, threshold);
        let gpath = dir.path().join(format!("g{case}.sgraph"));
        rolegraph::graph::write_graph(&g, &gpath).map_err(|e| e.to_string())?;
        let gback = rolegraph::graph::read_graph(&gpath).map_err(|e| e.to_string())?;
        let bitwise = gback.n() == g.n()
            && gback.threshold().to_bits() == g.threshold().to_bits()
            && gback.edges().len() == g.edges().len()
            && gback
                .edges()
                .iter()
                .zip(g.edges())
                .all(|(a, b)| (a.0, a.1, a.2.to_bits()) == (b.0, b.1, b.2.to_bits()));
        ensure(bitwise, || format!("SGRAPH1 case {case}: values differ"))?;
        let text = std::fs::read_to_string(&gpath).unwrap();
        ensure(gback.to_sgraph() == text, || format!("SGRAPH1 case {case}: bytes differ"))?;
    }
    Ok("100 EMB1 and 100 SGRAPH1 instances".to_string())
}

fn end_to_end_golden() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    let synth_dir = dir.path().join("synth");
    common::run_ok(&["synth", "--seed", "42", "--out-dir", &common::p(&synth_dir)]);
    for name in ["corpus.jsonl", "embeddings.emb", "partition.json"] {
        let fresh = std::fs::read(synth_dir.join(name)).unwrap();
        let shipped = std::fs::read(common::fixture_dir().join(name)).unwrap();
        ensure(fresh == shipped, || format!("synth no longer reproduces fixture {name}"))?;
    }

    let start = Instant::now();
    let reports = common::run_fixture_pipelines(dir.path());
    let elapsed = start.elapsed();

    let golden = common::golden_dir();
    let files = [
        ("diffusion.report.txt", &reports.diffusion_txt),
        ("diffusion.report.json", &reports.diffusion_json),
        ("gcn.report.txt", &reports.gcn_txt),
        ("gcn.report.json", &reports.gcn_json),
    ];
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(&golden).unwrap();
        for (name, body) in files {
            std::fs::write(golden.join(name), body).unwrap();
        }
    }
    for (name, body) in files {
        let want = std::fs::read_to_string(golden.join(name))
            .map_err(|e| format!("golden {name}: {e}"))?;
        ensure(&want == body, || format!("{name} differs from golden"))?;
    }
    within(elapsed, 60)?;
    let summary = |txt: &str| txt.lines().nth(2).unwrap_or("").split_whitespace().collect::<Vec<_>>().join(" ");
    Ok(format!(
        "4 reports byte-identical [{} | {}], {elapsed:.2?}",
        summary(&reports.diffusion_txt),
        summary(&reports.gcn_txt)
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("graph oracle equivalence", graph_oracle),
        ("diffusion route consistency", diffusion_consistency),
        ("hand-verified two-node diffusion", two_node_instance),
        ("GCN gradient check", gradient_check),
        ("GCN forward properties", gcn_forward_properties),
        ("GCN learning sanity", gcn_learning_sanity),
        ("context windows", context_windows),
        ("format round-trips", format_round_trips),
        ("end-to-end golden run", end_to_end_golden),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check)
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
