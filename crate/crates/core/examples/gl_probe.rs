use gl_core::domain::*;
use gl_core::grid::GridSpec;

fn main() {
    let kappa = 8.0;
    let b = 0.8;
    let p = GlParams::new(kappa, kappa * b).unwrap();
    let g = GridSpec::new(1.0, 48).unwrap();
    let opts = GlOptions {
        psi_inner: 400,
        xi_inner: 60,
        max_outer: 4000,
        ..GlOptions::default()
    };
    let t0 = std::time::Instant::now();
    match minimize_gl(p, g, GlInit::Noise { seed: 1 }, &opts) {
        Ok(out) => println!(
            "OK E={:.8e} grad={:.3e} outers={} t={:?}",
            out.energy.total, out.grad_norm, out.outer_blocks, t0.elapsed()
        ),
        Err(e) => println!("FAIL after {:?}: {e}", t0.elapsed()),
    }
}
