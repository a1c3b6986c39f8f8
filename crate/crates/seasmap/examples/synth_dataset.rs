//! Generate a synthetic dataset and compare the observable monthly
//! proportions against the truth record.

use seasmap::ingest::{load_facilities_from, reduce_to_series};
use seasmap::synth::{generate, SynthSpec};

fn main() -> seasmap::Result<()> {
    let spec = SynthSpec { n_locations: 6, years: 4, seed: 9, ..SynthSpec::default() };
    let out = generate(&spec)?;
    println!(
        "generated {} facility rows and {} covariate rows",
        out.facilities_csv.lines().count() - 1,
        out.covariates_csv.lines().count() - 1
    );

    let records = load_facilities_from(out.facilities_csv.as_bytes(), "synth")?;
    let reduced = reduce_to_series(&records);
    for series in &reduced.series {
        let idx = out
            .truth
            .facility_ids
            .iter()
            .position(|id| *id == series.facility_id)
            .expect("known facility");
        let truth = &out.truth.proportions[idx];
        let observed = series.proportions.as_slice();
        let max_err = truth
            .iter()
            .zip(observed)
            .map(|(t, o)| (t - o).abs())
            .fold(0.0f64, f64::max)
            ;
        println!(
            "{}: api {:.0}, largest |observed - true| proportion = {:.3}",
            series.facility_id, out.truth.api[idx], max_err
        );
    }
    Ok(())
}
