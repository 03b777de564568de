//! Matsubara expansion of a Drude-Lorentz bath: coefficients, terminator,
//! and how the truncated correlation function converges.

use shem::bath::{choose_l, correlation_function, matsubara_expansion, total_weight, BathSpec};

fn main() -> shem::Result<()> {
    let spec = BathSpec { lambda: 0.05, gamma: 10.0, beta: 0.05, l: 3 };
    let exp = matsubara_expansion(&spec)?;
    for (a, t) in exp.terms.iter().enumerate() {
        println!("a = {a}: c = {:+.6e}{:+.6e}i, rate {:.4}", t.c.re, t.c.im, t.gamma);
    }
    println!("terminator {:.6e}{:+.6e}i", exp.terminator.re, exp.terminator.im);
    let w = total_weight(&spec);
    println!("sum c/gamma over all terms {:.6e}{:+.6e}i", w.re, w.im);

    println!("\n   L   C(0.01) real part");
    for l in [0, 1, 2, 5, 20, 100] {
        let e = matsubara_expansion(&BathSpec { l, ..spec })?;
        println!("{l:>4}   {:.8e}", correlation_function(&e, 0.01)?.re);
    }
    println!("\nsuggested L for omega_max = 3: {}", choose_l(&spec, 3.0));
    Ok(())
}
