//! Render a feature scatter map and a monthly curve plot to SVG files in
//! target/examples/render_svg.

use std::fs;

use seasmap::render::{curve_plot, render_feature_map, RenderStyle};

fn main() -> seasmap::Result<()> {
    let outdir = std::path::PathBuf::from("target/examples/render_svg");
    fs::create_dir_all(&outdir).expect("create output directory");
    let style = RenderStyle::default();

    let features = "lon,lat,index,category\n\
        44.2,-18.1,0.12,Low\n\
        45.0,-19.4,0.55,Medium\n\
        46.3,-17.2,0.91,High\n\
        47.1,-20.8,0.00,Non-seasonal\n";
    let map = render_feature_map(features, "index", &style)?;
    fs::write(outdir.join("map_index.svg"), &map).expect("write map");

    let median = [
        0.05, 0.07, 0.14, 0.20, 0.16, 0.10, 0.06, 0.04, 0.03, 0.04, 0.05, 0.06,
    ];
    let lo = median.map(|v| v * 0.7);
    let hi = median.map(|v| v * 1.3);
    let plot = curve_plot(&median, &lo, &hi, "example facility", &style);
    fs::write(outdir.join("curve_example.svg"), &plot).expect("write curve");

    println!("wrote map_index.svg and curve_example.svg to {}", outdir.display());
    Ok(())
}
