//! Discrete prompts and the span-role target grammar, including escaping
//! and tolerant parsing of generator output.
//!
//! ```bash
//! cargo run -p framespa --example prompt_grammar
//! ```

use framespa::ontology::RoleDef;
use framespa::prompting::{
    arg_id_head, frame_id_head, mark_target, parse_arguments, serialize_arguments, ArgumentSpan,
    DiscretePrompt,
};

pub fn run_example() -> framespa::Result<()> {
    let tokens = ["I", "want", "to", "book", "a", "ticket", "."];
    let body = mark_target(&tokens, 3, 4)?;
    println!(
        "{}",
        DiscretePrompt::new(frame_id_head(), body.clone()).full()
    );
    println!(
        "{}",
        DiscretePrompt::new(arg_id_head("Reserving")?, body).full()
    );

    let spans = [
        ArgumentSpan::new(0, 1, "Client"),
        ArgumentSpan::new(4, 6, "Goods"),
    ];
    let target = serialize_arguments(&tokens, &spans)?;
    println!("target: {target}");

    let roles: Vec<RoleDef> = ["Client", "Goods", "Time"]
        .iter()
        .map(|name| RoleDef {
            name: name.to_string(),
            definition: String::from("-"),
            core: true,
        })
        .collect();
    let parsed = parse_arguments(&target, &tokens, &roles);
    assert_eq!(parsed.spans, spans);

    let noisy = "I = Client | a ticket = Price | seat = Goods";
    let parsed = parse_arguments(noisy, &tokens, &roles);
    println!("parsed {:?}, malformed {}", parsed.spans, parsed.malformed);

    let odd = ["a=b", "|", "c\\d"];
    let escaped = serialize_arguments(&odd, &[ArgumentSpan::new(0, 3, "Goods")])?;
    println!("escaped: {escaped}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> framespa::Result<()> {
    run_example()
}
