//! Attention over candidate definitions and the continuous prompt it
//! produces, with untrained parameters.
//!
//! ```bash
//! cargo run -p framespa --example memory_attention
//! ```

use std::path::Path;

use framespa::embedding::load_embeddings;
use framespa::mkem::{attend, init_params, nll_loss};
use framespa::ontology::load_ontology;
use framespa::retrieval::candidates_for_lemma;

pub fn run_example() -> framespa::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let store = load_ontology(dir.join("ontology.json"))?;
    let table = load_embeddings(dir.join("embeddings.txt"))?;
    let params = init_params(table.dim(), 42);

    let sentence = ["I", "want", "to", "book", "a", "ticket", "."];
    let mut candidates = candidates_for_lemma(&store, &table, "book", 3)?;
    candidates.attach_gold("Reserving");
    let result = attend(&params, &table, &sentence, &candidates)?;

    for ((key, score), weight) in candidates.keys().zip(&result.scores).zip(&result.weights) {
        println!("{key:<10} score={score:+.4} weight={weight:.4}");
    }
    let gold = candidates.gold_index.expect("gold among candidates");
    println!("loss for gold Reserving: {:.4}", nll_loss(&result, gold)?);
    let p_c: Vec<String> = result.p_c.iter().map(|x| format!("{x:+.3}")).collect();
    println!("P_C = [{}]", p_c.join(", "));
    Ok(())
}

#[allow(dead_code)]
fn main() -> framespa::Result<()> {
    run_example()
}
