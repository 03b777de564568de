//! Fast bath: the hierarchy reduces to Lindblad dephasing. Flipping the
//! terminator sign breaks the agreement.

use shem::hierarchy::TerminatorForm;
use shem::validation::markov_limit_check;

fn main() -> shem::Result<()> {
    for form in
        [TerminatorForm::DoubleCommutator, TerminatorForm::Dissipator, TerminatorForm::Off, TerminatorForm::FlippedSign]
    {
        let c = markov_limit_check(form)?;
        println!(
            "{form:?}: relative deviation {:.3e} ({})",
            c.value,
            if c.passed { "within 2%" } else { "outside 2%" }
        );
    }
    Ok(())
}
