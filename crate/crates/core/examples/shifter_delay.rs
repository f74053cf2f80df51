//! Propagates a 1 µs probe through the frequency-shifter structure and
//! prints the timing and the output peak delay.

use std::time::Instant;

use slowlight::ensemble::{DetuningGrid, IonEnsemble, Medium, ShifterRecipe};
use slowlight::solver::{propagate, PulseSpec, SolverConfig};
use slowlight::stark::StarkDrive;

fn main() -> slowlight::Result<()> {
    let grid = DetuningGrid::new(45.6, 0.02)?;
    let ens = IonEnsemble::prepare_frequency_shifter(grid, Medium::with_alpha0(4.0), &ShifterRecipe::default())?;
    let pulse = PulseSpec::gaussian(1.0, 2.5);
    let mut cfg = SolverConfig::with_duration(9.5);
    cfg.dz_mm = 10.0 / 202.0;
    cfg.check_window = false;
    let t = Instant::now();
    let r = propagate(&ens, &pulse, &StarkDrive::off(10.0), &cfg)?;
    let el = t.elapsed();
    let (imax, _) = r
        .transmitted
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .unwrap();
    println!(
        "elapsed {:.1} s, peak delay {:.3} µs, energy ratio {:.4}",
        el.as_secs_f64(),
        imax as f64 * r.dt_us - 2.5,
        r.transmitted_energy() / r.input_energy()
    );
    Ok(())
}
