//! How alpha trades the judgment token against the interpretation tokens.

use spoofvqa::loss::{lopsided_loss, standard_lm_loss};
use spoofvqa::tensor::Tensor;

fn main() -> spoofvqa::Result<()> {
    // one judgment row and four interpretation rows over a 6-token vocabulary
    let logits = Tensor::from_rows(&[
        vec![2.0, -1.0, 0.0, 0.5, 0.0, 0.0],
        vec![0.1, 0.2, 1.5, 0.0, -0.3, 0.0],
        vec![0.0, 0.0, 0.0, 2.5, 0.0, 0.1],
        vec![-0.5, 0.0, 0.3, 0.0, 0.0, 0.9],
        vec![0.0, 1.2, 0.0, 0.0, 0.4, 0.0],
    ])?;
    let targets = [0, 2, 3, 1, 4];
    println!("alpha  judgment  interpretation  total");
    for alpha in [0.0, 0.25, 0.5, 0.7, 1.0] {
        let b = lopsided_loss(&logits, &targets, 0..1, 1..5, alpha)?;
        println!("{alpha:5.2}  {:8.4}  {:14.4}  {:5.4}", b.judgment_loss, b.interpretation_loss, b.total);
    }
    let uniform = standard_lm_loss(&logits, &targets)?;
    let b = lopsided_loss(&logits, &targets, 0..1, 1..5, 0.2)?;
    println!("standard LM loss {uniform:.4} = lopsided at alpha 1/5 {:.4}", b.total);
    Ok(())
}
