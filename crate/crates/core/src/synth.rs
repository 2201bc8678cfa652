//! Seeded synthetic fixtures.
//!
//! The real judgment corpus is not redistributable, so tests and the bundled
//! example run on generated data: per-class prototype vectors plus Gaussian
//! noise, and short template sentences.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::corpus::{EmbeddingMatrix, Partition, PartitionSpec, RoleLabel, SentenceRecord, NUM_CLASSES};

pub const FIXTURE_DOCS: usize = 3;
pub const FIXTURE_SENTENCES_PER_DOC: usize = 20;
pub const FIXTURE_DIMS: usize = 32;
pub const FIXTURE_NOISE: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub records: Vec<SentenceRecord>,
    pub embeddings: EmbeddingMatrix,
    pub partition: PartitionSpec,
}

fn phrases(label: RoleLabel) -> &'static [&'static str] {
    match label {
        RoleLabel::Preamble => &["IN THE SUPREME COURT OF INDIA", "Civil Appeal No. 1123 of 2019", "Between the appellant and the State"],
        RoleLabel::Fac => &["The appellant purchased the land in 1998.", "A complaint was lodged at the police station.", "The deceased was found near the canal."],
        RoleLabel::Rlc => &["The High Court dismissed the writ petition.", "The trial court convicted the accused.", "The tribunal rejected the claim."],
        RoleLabel::Issue => &["The question is whether the sale deed is valid.", "The issue is whether limitation applies."],
        RoleLabel::ArgPetitioner => &["Counsel for the appellant submitted that the order is perverse.", "It was urged on behalf of the petitioner that notice was never served."],
        RoleLabel::ArgRespondent => &["Learned counsel for the respondent contended that the appeal is barred.", "The State argued that the evidence is sufficient."],
        RoleLabel::Analysis => &["We have carefully perused the record.", "The evidence of the witnesses is consistent.", "There is no infirmity in the finding."],
        RoleLabel::Sta => &["Section 302 of the Penal Code provides the punishment.", "Article 136 of the Constitution confers the power."],
        RoleLabel::PreRelied => &["This Court in Sharma held that the bar applies.", "The ratio in Kumar squarely covers the case."],
        RoleLabel::PreNotRelied => &["The decision in Rao is distinguishable on facts.", "Reliance on Singh is misplaced."],
        RoleLabel::Ratio => &["Therefore the limitation period did not begin to run.", "Hence the presumption stands rebutted."],
        RoleLabel::Rpc => &["The appeal is allowed.", "The appeal is dismissed with costs."],
        RoleLabel::None => &["Ordered accordingly.", "Heard."],
    }
}

/// Label of sentence `j` in a document of `len` sentences: roles appear in
/// taxonomy order, each covering a contiguous stretch.
fn role_at(j: usize, len: usize) -> RoleLabel {
    RoleLabel::from_code(j * NUM_CLASSES / len).expect("code in range")
}

/// The bundled fixture: 3 documents of 20 sentences, 32-dim embeddings,
/// documents `d1`, `d2` for training and `d3` held out.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|_| (0..FIXTURE_DIMS).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let noise = Normal::new(0.0, FIXTURE_NOISE).expect("valid noise");

    let mut records = Vec::new();
    let mut data = Vec::new();
    for d in 0..FIXTURE_DOCS {
        let doc_id = format!("d{}", d + 1);
        for j in 0..FIXTURE_SENTENCES_PER_DOC {
            let label = role_at(j, FIXTURE_SENTENCES_PER_DOC);
            let text = phrases(label).choose(&mut rng).expect("non-empty").to_string();
            records.push(SentenceRecord {
                doc_id: doc_id.clone(),
                sent_index: j,
                text,
                label: Some(label),
            });
            for &p in &prototypes[label.code()] {
                data.push((p + noise.sample(&mut rng)) as f32);
            }
        }
    }
    let embeddings = EmbeddingMatrix::new(records.len(), FIXTURE_DIMS, data).expect("finite");
    let partition = PartitionSpec(BTreeMap::from([
        ("d1".to_string(), Partition::Train),
        ("d2".to_string(), Partition::Train),
        ("d3".to_string(), Partition::Eval),
    ]));
    Fixture {
        records,
        embeddings,
        partition,
    }
}

/// Two well-separated groups of `size` nodes each (classes FAC and RPC).
/// Returns the features, per-node gold class codes, and the indices of the
/// nodes left unlabeled (all but the first `labeled` of each group).
pub fn two_cliques(size: usize, labeled: usize, seed: u64) -> (EmbeddingMatrix, Vec<usize>, Vec<usize>) {
    let dims = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = [RoleLabel::Fac.code(), RoleLabel::Rpc.code()];
    let mut data = Vec::with_capacity(2 * size * dims);
    let mut gold = Vec::with_capacity(2 * size);
    let mut masked = Vec::new();
    for (group, &class) in classes.iter().enumerate() {
        for m in 0..size {
            for c in 0..dims {
                // Group 0 lives on the first half of the axes, group 1 on the second.
                let base = if (c < dims / 2) == (group == 0) { 1.0 } else { 0.0 };
                data.push(base + rng.random_range(-0.1f32..0.1));
            }
            if m >= labeled {
                masked.push(gold.len());
            }
            gold.push(class);
        }
    }
    let emb = EmbeddingMatrix::new(2 * size, dims, data).expect("finite");
    (emb, gold, masked)
}
