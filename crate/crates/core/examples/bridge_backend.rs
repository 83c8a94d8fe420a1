//! Talks to an external generator over the line-delimited JSON bridge.
//! The child here is a small shell loop that labels the first token of
//! every sentence as `Client`; a real deployment would run a seq2seq model.
//!
//! ```bash
//! cargo run -p framespa --example bridge_backend
//! ```

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::Duration;

use framespa::embedding::load_embeddings;
use framespa::mkem::init_params;
use framespa::ontology::load_ontology;
use framespa::pipeline::{load_dataset, predict_args, serve, BridgeBackend, OracleBackend};

const CHILD: &str = r#"while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/^{"id":\([0-9]*\).*/\1/')
  printf '{"id":%s,"output":"I = Client"}\n' "$id"
done"#;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn run_example() -> framespa::Result<()> {
    let store = load_ontology(fixture("ontology.json"))?;
    let table = load_embeddings(fixture("embeddings.txt"))?;
    let train = load_dataset(fixture("train.jsonl"))?;
    let params = init_params(table.dim(), 7);

    let mut bridge = BridgeBackend::spawn(CHILD, Duration::from_secs(10))?;
    let sentence = &train[4];
    let pred = predict_args(
        &store,
        &table,
        &params,
        sentence,
        "Reserving",
        &mut bridge,
        1,
    )?;
    println!("{}", sentence.tokens.join(" "));
    println!("  generator said {:?} -> {:?}", pred.raw, pred.spans);

    // The same protocol served in process by the oracle backend.
    let mut oracle = OracleBackend::from_dataset(&train)?;
    let request = format!(
        "{{\"id\":9,\"task\":\"arg_id\",\"continuous\":[],\"discrete\":{:?}}}\n",
        framespa::pipeline::arg_discrete_prompt(sentence, "Reserving")?.full()
    );
    let mut reply = Vec::new();
    serve(&mut oracle, Cursor::new(request), &mut reply)?;
    print!("oracle reply: {}", String::from_utf8_lossy(&reply));
    Ok(())
}

#[allow(dead_code)]
fn main() -> framespa::Result<()> {
    run_example()
}
