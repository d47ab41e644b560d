//! Re-derives the parasite calibration factor for the default aircraft.
use skyreserve::powerplant::{best_range_speed, calibrate_parasite_factor, AircraftConfig};
use skyreserve::units::{knots, to_knots};

fn main() -> skyreserve::Result<()> {
    let cfg = AircraftConfig::default();
    let rho = cfg.cruise_density()?;
    let k = calibrate_parasite_factor(&cfg, rho, knots(157.0))?;
    let mut tuned = cfg.clone();
    tuned.parasite_calibration_factor = k;
    println!("parasite_calibration_factor = {k:.7}");
    println!("best-range speed = {:.3} kt", to_knots(best_range_speed(&tuned, rho)));
    Ok(())
}
