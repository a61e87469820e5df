//! Accuracy, ROC curve and rank-statistic AUC on a small scored set with
//! tied scores.
//!
//!     cargo run --release --example roc_auc

use rectiflow::evalharness::{accuracy, roc_auc, roc_curve, trapezoid_area, Confusion};

fn main() -> rectiflow::Result<()> {
    let scores = [-1.2, -0.4, -0.4, 0.0, 0.3, 0.3, 0.3, 0.9, 1.5, -0.8];
    let labels = [false, false, true, false, true, false, true, true, true, false];

    let c = Confusion::at_zero(&scores, &labels)?;
    println!("threshold 0: tp {} fp {} tn {} fn {}", c.tp, c.fp, c.tn, c.fn_);
    println!("accuracy {:.3}", accuracy(&scores, &labels)?);

    let curve = roc_curve(&scores, &labels)?;
    println!("\n{:>6} {:>6}", "fpr", "tpr");
    for (fpr, tpr) in &curve {
        println!("{fpr:>6.2} {tpr:>6.2}");
    }
    println!("\nAUC (ranks)     {:.6}", roc_auc(&scores, &labels)?);
    println!("AUC (trapezoid) {:.6}", trapezoid_area(&curve));
    Ok(())
}
