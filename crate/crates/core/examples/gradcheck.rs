//! Compare the network's reverse-mode gradients with central differences.

use degrade_mt::sr_model::gradcheck::{check_f32, check_f64};

fn main() -> degrade_mt::Result<()> {
    for report in [check_f32(0, 20)?, check_f64(0, 20)?] {
        println!("{} backward pass", report.precision);
        for p in &report.probes {
            println!(
                "  param {:>5}: analytic {:+.6e}  numeric {:+.6e}  rel err {:.2e}",
                p.index, p.analytic, p.numeric, p.rel_err
            );
        }
        println!("  max rel err {:.3e}", report.max_rel_err());
    }
    Ok(())
}
