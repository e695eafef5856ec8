//! A softmax regression step on the tape: forward, backward, and a
//! finite-difference comparison for one weight.

use mscnn_spu::autodiff::{central_difference, relative_error, Graph, Tensor, FD_STEP};

fn loss_of(w: &[f64], x: &Tensor) -> mscnn_spu::Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let w = g.param(Tensor::new(vec![3, 4], w.to_vec())?);
    let b = g.param(Tensor::zeros(vec![3]));
    let x = g.constant(x.clone());
    let z = g.affine(x, w, b)?;
    let p = g.softmax(z)?;
    let loss = g.cross_entropy_class(p, 2)?;
    g.backward(loss)?;
    Ok((g.value(loss).item(), g.grad(w).expect("param grad").to_vec()))
}

fn main() -> mscnn_spu::Result<()> {
    let x = Tensor::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
    let mut w: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.1).collect();
    let (loss, grad) = loss_of(&w, &x)?;
    println!("loss {loss:.6}");
    for i in [0, 5, 11] {
        let numeric = central_difference(&mut w, i, FD_STEP, |v| loss_of(v, &x).expect("forward").0);
        println!(
            "dL/dw[{i}]  analytic {:+.9}  numeric {:+.9}  rel err {:.2e}",
            grad[i],
            numeric,
            relative_error(grad[i], numeric)
        );
    }
    Ok(())
}
