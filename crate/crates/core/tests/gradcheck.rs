//! Central-difference checks of every differentiable tape op and of the
//! flow-matching loss.

mod common;

use common::{flow_loss_check, op_checks, INSTANCES, TOLERANCE};

#[test]
fn every_op_matches_finite_differences() {
    for check in op_checks(INSTANCES, 11) {
        assert!(check.instances >= 20, "{}: only {} instances", check.op, check.instances);
        assert!(check.worst < TOLERANCE, "{}: relative error {:.3e}", check.op, check.worst);
    }
}

#[test]
fn flow_loss_gradient_matches_finite_differences() {
    for adapters in [false, true] {
        let worst = flow_loss_check(INSTANCES, 3, adapters);
        assert!(worst < TOLERANCE, "adapters={adapters}: relative error {worst:.3e}");
    }
}
