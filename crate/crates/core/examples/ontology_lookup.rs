//! Loads the fixture ontology and walks its lemma index.
//!
//! ```bash
//! cargo run -p framespa --example ontology_lookup
//! ```

use std::path::Path;

use framespa::ontology::load_ontology;

pub fn run_example() -> framespa::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/ontology.json");
    let store = load_ontology(&path)?;
    println!("{} frames loaded from {}", store.len(), path.display());

    for lemma in ["book", "run", "walk", "xylophone"] {
        println!(
            "{lemma:<10} frames={:?} ambiguous={}",
            store.frames_for_lemma(lemma),
            store.is_ambiguous(lemma)
        );
    }

    for role in store.roles_for_frame("Reserving")? {
        let kind = if role.core { "core" } else { "non-core" };
        println!("  Reserving.{:<8} ({kind}) {}", role.name, role.definition);
    }
    let ambiguous: Vec<&str> = store.lemmas().filter(|l| store.is_ambiguous(l)).collect();
    println!("ambiguous lemmas: {ambiguous:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> framespa::Result<()> {
    run_example()
}
