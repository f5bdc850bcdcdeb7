//! Compares tape gradients of a small tanh network against central
//! differences.

use lsg::numerics::{finite_diff_gradient, relative_error, NumericsError, Tape, Tensor};

fn loss(w: &Tensor, x: &Tensor, tape: &mut Tape, trainable: bool) -> Result<(f32, Option<Tensor>), NumericsError> {
    let wv = tape.leaf(w.clone(), trainable);
    let xv = tape.constant(x.clone());
    let h = tape.matmul(wv, xv)?;
    let h = tape.tanh(h)?;
    let out = tape.sum(h)?;
    let value = tape.value(out).item();
    let grad = if trainable { tape.backward(out)?.get(wv).cloned() } else { None };
    Ok((value, grad))
}

fn main() -> Result<(), NumericsError> {
    let w = Tensor::new(vec![3, 4], (0..12).map(|i| (i as f32 * 0.37).sin()).collect())?;
    let x = Tensor::new(vec![4, 2], (0..8).map(|i| (i as f32 * 0.91).cos()).collect())?;

    let (value, analytic) = loss(&w, &x, &mut Tape::new(), true)?;
    let analytic = analytic.expect("weight gradient");
    let numeric = finite_diff_gradient(|p| loss(p, &x, &mut Tape::new(), false).map(|(v, _)| v), &w, 1e-3)?;

    println!("loss {value:.5}");
    println!("analytic  {:?}", &analytic.data()[..4]);
    println!("numerical {:?}", &numeric.data()[..4]);
    println!("relative error {:.2e}", relative_error(analytic.data(), numeric.data()));
    Ok(())
}
