//! Candidate frame retrieval, including the cosine fallback for a lemma
//! that no lexical unit covers.
//!
//! ```bash
//! cargo run -p framespa --example retrieval_fallback
//! ```

use std::path::Path;

use framespa::embedding::load_embeddings;
use framespa::ontology::load_ontology;
use framespa::retrieval::{candidates_for_arg_id, candidates_for_lemma};

pub fn run_example() -> framespa::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let store = load_ontology(dir.join("ontology.json"))?;
    let table = load_embeddings(dir.join("embeddings.txt"))?;

    for lemma in ["book", "reserve", "sprint"] {
        let set = candidates_for_lemma(&store, &table, lemma, 2)?;
        println!("{lemma}: {:?}", set.keys().collect::<Vec<_>>());
        if let Some(matches) = &set.fallback {
            for m in matches {
                println!(
                    "    via {:<12} cos={:.4} -> {:?}",
                    m.lemma, m.cosine, m.frames
                );
            }
        }
    }

    let roles = candidates_for_arg_id(&store, "Reserving")?;
    for span in &roles.spans {
        println!("Reserving role {:<8} tokens={:?}", span.key, span.tokens);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> framespa::Result<()> {
    run_example()
}
