//! Dispersive-frame operators of a qubit coupled to a far-detuned cavity,
//! compared with the closed-form dispersive shift.

use shem::algebra::pauli;
use shem::dispersive::build_frame;

fn main() -> shem::Result<()> {
    let (g, omega, omega_c) = (0.1, 1.0, 10.0);
    let h = pauli::sigma_z().scale_real(omega / 2.0);
    let mu = pauli::sigma_x().scale_real(g);
    let frame = build_frame(&h, &mu, &[pauli::sigma_z()], omega_c, 4.0)?;

    println!("X =\n{}", shem::io::format_matrix(&frame.x));
    println!("O_S =\n{}", shem::io::format_matrix(&frame.o_s));
    println!("Lambda =\n{}", shem::io::format_matrix(&frame.lambda));
    println!("F~ (|alpha|^2 = 4) =\n{}", shem::io::format_matrix(&frame.f_tilde[0]));

    let chi = -2.0 * g * g * omega / (omega_c * omega_c - omega * omega);
    println!("closed-form shift {chi:.6e}, frame value {:.6e}", frame.o_s[(1, 1)].re);
    println!("dispersive ratio {:.3e}", frame.dispersive_ratio);
    Ok(())
}
