//! WA / UA on a hand-made confusion matrix and the fold layout for 100
//! labelled samples.

use mscnn_spu::evaluation::{make_folds, ConfusionMatrix};

fn main() -> mscnn_spu::Result<()> {
    let cm = ConfusionMatrix::from_rows(&[
        vec![40, 5, 3, 2],
        vec![6, 30, 2, 12],
        vec![1, 2, 45, 2],
        vec![3, 9, 4, 34],
    ])?;
    print!("{}", cm.to_table());
    println!("WA {:.4}  UA {:.4}", cm.weighted_accuracy()?, cm.unweighted_accuracy()?);

    let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
    let plan = make_folds(&labels, 4, 42)?;
    for (i, f) in plan.folds.iter().enumerate().take(3) {
        println!(
            "fold {i}: train {} dev {} test {}  test ids {:?}",
            f.train.len(),
            f.dev.len(),
            f.test.len(),
            f.test
        );
    }
    Ok(())
}
