//! Strong convergence of Euler-Maruyama and the Platen scheme on
//! geometric Brownian motion.

use shem::sde::{geometric_strong_errors, Scheme};
use shem::validation::strong_order_slopes;

fn main() {
    let powers = [4, 5, 6, 7, 8];
    for scheme in [Scheme::EulerMaruyama, Scheme::Platen] {
        println!("{scheme:?}");
        for (dt, err) in geometric_strong_errors(scheme, &powers, 2000, 17) {
            println!("  dt {dt:.5}  error {err:.4e}");
        }
    }
    let (em, platen) = strong_order_slopes(2000, 17);
    println!("fitted orders: Euler-Maruyama {em:.3}, Platen {platen:.3}");
}
