// Fractional Fourier transform basics: special orders, unitarity, order
// additivity and locating the order at which a chirp is most concentrated.

use std::error::Error;

use num_complex::Complex64;
use sffp::fracfourier::{build_operator, dft_matrix, frft, ifrft, most_concentrated_order, order_grid, FrftOperator};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let n = 24;
    let x: Vec<Complex64> = (0..n)
        .map(|t| Complex64::new((t as f64 * 0.7).sin(), (t as f64 * 0.3).cos()))
        .collect();

    let energy = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let op = build_operator(n, 0.37)?;
    let y = frft(&x, &op)?;
    println!("|x| = {:.12}  |F^0.37 x| = {:.12}", energy(&x), energy(&y));

    let back = ifrft(&y, &op)?;
    let err = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("inverse round-trip error {err:.2e}");

    let f1 = FrftOperator::new(n, 1.0)?;
    let dft = dft_matrix(n);
    println!("max |F^1 - DFT| = {:.2e}", (f1.kernel() - &dft).camax());

    let a = FrftOperator::new(n, 0.4)?;
    let b = FrftOperator::new(n, 0.9)?;
    let ab = FrftOperator::new(n, 1.3)?;
    println!(
        "max |F^0.4 F^0.9 - F^1.3| = {:.2e}",
        (a.kernel() * b.kernel() - ab.kernel()).camax()
    );

    let m = 64;
    let rate = 0.004;
    let chirp: Vec<Complex64> = (0..m)
        .map(|t| {
            let t = t as f64 - m as f64 / 2.0;
            Complex64::from_polar(1.0, std::f64::consts::PI * rate * t * t)
        })
        .collect();
    let best = most_concentrated_order(&chirp, &order_grid(-2.0, 2.0, 0.01))?;
    println!("chirp with rate {rate} is most concentrated at order {best:.2}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
