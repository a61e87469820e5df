//! Reverse-mode gradients of a small two-layer expression, compared with
//! central differences.
//!
//!     cargo run --release --example autodiff

use rectiflow::numerics::{Rng, Tape, Tensor};

fn loss(x: &Tensor, w: &Tensor) -> f64 {
    let tape = Tape::new();
    let (x, w) = (tape.constant(x.clone()), tape.leaf(w.clone()));
    let h = tape.tanh(tape.matmul(x, w).unwrap()).unwrap();
    let s = tape.softplus(h).unwrap();
    tape.value(tape.mean(s).unwrap()).item().unwrap()
}

fn main() -> rectiflow::Result<()> {
    let mut rng = Rng::new(7);
    let x = rng.gaussian(&[4, 3]);
    let w = rng.gaussian(&[3, 2]);

    let tape = Tape::new();
    let (xv, wv) = (tape.constant(x.clone()), tape.leaf(w.clone()));
    let h = tape.tanh(tape.matmul(xv, wv)?)?;
    let out = tape.mean(tape.softplus(h)?)?;
    let grads = tape.backward(out)?;
    let analytic = grads.get(wv);

    println!("loss {:.6}", tape.value(out).item()?);
    println!("{:>5} {:>14} {:>14} {:>10}", "w[j]", "analytic", "numeric", "abs diff");
    let step = 1e-6;
    for j in 0..w.numel() {
        let (mut plus, mut minus) = (w.clone(), w.clone());
        plus.data_mut()[j] += step;
        minus.data_mut()[j] -= step;
        let numeric = (loss(&x, &plus) - loss(&x, &minus)) / (2.0 * step);
        let a = analytic.data()[j];
        println!("{j:>5} {a:>14.8} {numeric:>14.8} {:>10.1e}", (a - numeric).abs());
    }
    Ok(())
}
