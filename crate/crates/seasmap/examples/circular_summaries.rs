//! Circular month statistics: medians and deviations that respect the
//! December-to-January wrap.

use seasmap::numerics::{
    angle_to_month, circular_deviation, circular_median, month_angle, MONTHS_PER_RADIAN,
};

fn main() {
    // Peak months straddling the year boundary: December, January, February.
    let months = [12usize, 1, 2];
    let angles: Vec<_> = months.iter().map(|&m| month_angle(m)).collect();
    let median = circular_median(&angles).expect("non-empty");
    let deviation = circular_deviation(&angles, median) * MONTHS_PER_RADIAN;
    println!(
        "months {:?}: circular median month {} with deviation {:.3} months",
        months,
        angle_to_month(median),
        deviation
    );

    // A linear mean would land mid-year; the circular median stays put.
    let naive = months.iter().sum::<usize>() as f64 / months.len() as f64;
    println!("naive linear mean month would be {naive:.1}");
}
