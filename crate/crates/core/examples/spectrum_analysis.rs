// Reads a measurement CSV (gaps are forward-filled), then looks at each band
// through its periodogram and its fractional concentration profile.

use std::error::Error;

use num_complex::Complex64;
use sffp::data::{periodogram, read_csv};
use sffp::fracfourier::{most_concentrated_order, order_grid};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut csv = String::from("timestamp,ch1,ch2\n");
    for t in 0..256 {
        let tone = (2.0 * std::f64::consts::PI * 0.125 * t as f64).sin();
        let ramp = -90.0 + 0.02 * t as f64;
        if t == 17 {
            csv.push_str(&format!("2024-01-01T00:{:02}:{:02}Z,{tone},\n", t / 60, t % 60));
        } else {
            csv.push_str(&format!("2024-01-01T00:{:02}:{:02}Z,{tone},{ramp}\n", t / 60, t % 60));
        }
    }
    let (panel, report) = read_csv(csv.as_bytes())?;
    println!("{} rows, {} repaired cells, interval {}s", report.rows, report.repaired_cells, panel.sample_interval);

    let orders = order_grid(-2.0, 2.0, 0.05);
    for b in 0..panel.bands() {
        let gram = periodogram(&panel, b)?;
        let k = gram.peak_bin();
        let window: Vec<Complex64> = (0..64).map(|t| Complex64::new(panel.values[(t, b)], 0.0)).collect();
        println!(
            "{}: peak at {:.4} Hz, power {:.2} (median {:.2e}), most concentrated order {:.2}",
            panel.band_labels[b],
            gram.frequencies[k],
            gram.power[k],
            gram.median_power(),
            most_concentrated_order(&window, &orders)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
