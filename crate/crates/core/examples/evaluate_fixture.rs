//! Trains a checkpoint, then scores it on the held-out fixture with the
//! builtin similarity backend and with the oracle backend.
//!
//! ```bash
//! cargo run -p framespa --example evaluate_fixture
//! ```

use std::path::{Path, PathBuf};

use framespa::cli::{eval, BackendSpec, RunConfig};
use framespa::embedding::load_embeddings;
use framespa::ontology::load_ontology;
use framespa::pipeline::{load_dataset, save_checkpoint, train, TrainConfig};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn run_example() -> framespa::Result<()> {
    let store = load_ontology(fixture("ontology.json"))?;
    let table = load_embeddings(fixture("embeddings.txt"))?;
    let data = load_dataset(fixture("train.jsonl"))?;
    let cfg = TrainConfig {
        pretrain_epochs: 20,
        finetune_epochs: 180,
        lr_pretrain: 0.1,
        lr_finetune: 0.1,
        ..TrainConfig::default()
    };
    let (model, _) = train(&store, &table, &data, &cfg)?;

    let dir = tempfile::tempdir().map_err(|e| framespa::Error::Validation(e.to_string()))?;
    let checkpoint = dir.path().join("ckpt");
    save_checkpoint(&checkpoint, &model, &cfg)?;

    let test = fixture("test.jsonl");
    for backend in [BackendSpec::Builtin, BackendSpec::Oracle(test.clone())] {
        let run = RunConfig {
            ontology: Some(fixture("ontology.json")),
            embeddings: Some(fixture("embeddings.txt")),
            test: Some(test.clone()),
            checkpoint: Some(checkpoint.clone()),
            backend: backend.clone(),
            pipeline: true,
            ..RunConfig::default()
        };
        println!("backend {backend:?}");
        print!("{}", eval(&run)?.to_table(true));
        println!();
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> framespa::Result<()> {
    run_example()
}
