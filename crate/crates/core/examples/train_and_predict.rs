//! Trains both memory modules on the fixture corpus with the two-phase
//! schedule, then predicts frames for the held-out set.
//!
//! ```bash
//! cargo run -p framespa --example train_and_predict
//! ```

use std::path::{Path, PathBuf};

use framespa::embedding::load_embeddings;
use framespa::ontology::load_ontology;
use framespa::pipeline::{load_dataset, predict_frame, train, Phase, TrainConfig};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn run_example() -> framespa::Result<()> {
    let store = load_ontology(fixture("ontology.json"))?;
    let table = load_embeddings(fixture("embeddings.txt"))?;
    let train_set = load_dataset(fixture("train.jsonl"))?;
    let test_set = load_dataset(fixture("test.jsonl"))?;

    let cfg = TrainConfig {
        pretrain_epochs: 20,
        finetune_epochs: 180,
        lr_pretrain: 0.1,
        lr_finetune: 0.1,
        ..TrainConfig::default()
    };
    let (model, report) = train(&store, &table, &train_set, &cfg)?;
    for phase in [Phase::Pretrain, Phase::Finetune] {
        let p = report.phase(phase).unwrap();
        let first = p.epochs.first().and_then(|e| e.frame_id);
        let last = p.epochs.last().and_then(|e| e.frame_id);
        println!(
            "{phase:?}: {} instances, frame loss {:.4} -> {:.4}",
            p.instances,
            first.unwrap_or(f64::NAN),
            last.unwrap_or(f64::NAN)
        );
    }

    for (name, data) in [("train", &train_set), ("test", &test_set)] {
        let mut correct = 0;
        for sentence in data.iter() {
            let pred = predict_frame(&store, &table, &model.frame_id, sentence, cfg.fallback_k)?;
            if Some(&pred.frame) == sentence.gold_frame.as_ref() {
                correct += 1;
            } else {
                println!(
                    "  miss: {:?} -> {} (gold {})",
                    sentence.tokens.join(" "),
                    pred.frame,
                    sentence.gold_frame.as_deref().unwrap_or("?")
                );
            }
        }
        println!("{name} frame accuracy: {correct}/{}", data.len());
    }

    let sentence = &test_set[3];
    let pred = predict_frame(&store, &table, &model.frame_id, sentence, cfg.fallback_k)?;
    println!("\n{}", sentence.tokens.join(" "));
    for (frame, w) in pred.candidates.iter().zip(&pred.weights) {
        println!("  {frame:<12} {w:.4}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> framespa::Result<()> {
    run_example()
}
