//! Compares the analytic attention gradient with central finite
//! differences on random instances.
//!
//! ```bash
//! cargo run -p framespa --example gradient_check
//! ```

use framespa::mkem::{attend_input, grad_input, init_params, nll_loss, MemoryInput, MemoryParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn numeric(
    params: &MemoryParams,
    input: &MemoryInput,
    gold: usize,
    i: usize,
    j: usize,
    h: f64,
) -> f64 {
    let loss_at = |delta: f64| {
        let mut p = params.clone();
        p.w_in[(i, j)] += delta;
        nll_loss(&attend_input(&p, input).unwrap(), gold).unwrap()
    };
    (loss_at(h) - loss_at(-h)) / (2.0 * h)
}

pub fn run_example() -> framespa::Result<()> {
    let dim = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let params = init_params(dim, trial);
        let n = rng.gen_range(2..=6);
        let mut vector = || {
            (0..dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        let input = MemoryInput {
            sentence: vector(),
            slots: (0..n).map(|_| vector()).collect(),
        };
        let gold = trial as usize % n;
        let (analytic, loss) = grad_input(&params, &input, gold)?;
        let mut trial_worst: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let a = analytic[(i, j)];
                let f = numeric(&params, &input, gold, i, j, 1e-5);
                let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-6);
                trial_worst = trial_worst.max(rel);
            }
        }
        println!("trial {trial}: {n} slots, loss {loss:.4}, max rel err {trial_worst:.2e}");
        worst = worst.max(trial_worst);
    }
    println!("worst relative error: {worst:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> framespa::Result<()> {
    run_example()
}
