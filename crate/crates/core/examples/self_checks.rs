//! The shipped verification suites: finite-difference gradients and the
//! brute-force oracles.

use duoseg::verify::{all_passed, gradient_suite, oracle_suite};

fn main() {
    let grads = gradient_suite();
    let oracles = oracle_suite();
    for r in grads.iter().chain(&oracles) {
        println!("{r}");
    }
    let ok = all_passed(&grads) && all_passed(&oracles);
    std::process::exit(if ok { 0 } else { 1 });
}
