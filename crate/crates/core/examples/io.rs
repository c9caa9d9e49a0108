//! File formats: float32 images, sinogram CSV, raw scanner data with a
//! sidecar, and the key-value spec files.
//!
//! cargo run --release --example io -- [dir]

use std::path::PathBuf;

use deformrecon::experiment::ExperimentSpec;
use deformrecon::io::{read_image, read_raw_sinogram, read_sinogram_csv, write_image, write_sinogram_csv};
use deformrecon::phantom::{make_phantom, Phantom};
use deformrecon::radon::{radon_forward, SinogramGeometry};
use deformrecon::Result;

fn main() -> Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/io".into()));
    std::fs::create_dir_all(&dir)?;

    let f = make_phantom(Phantom::SheppLogan, 64)?;
    write_image(&dir.join("phantom.img"), &f)?;
    let back = read_image(&dir.join("phantom.img"))?;
    let diff = f.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("image round trip: max difference {diff:.1e} (float32 storage), range hint {:?}", back.range_hint);

    let g = radon_forward(&f, &SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(10), 6)?)?;
    write_sinogram_csv(&dir.join("sinogram.csv"), &g)?;
    let csv = read_sinogram_csv(&dir.join("sinogram.csv"))?;
    println!("csv round trip: {} values, geometry equal: {}", csv.data.len(), csv.geometry == g.geometry);

    let bytes: Vec<u8> = g.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    std::fs::write(dir.join("scan.raw"), bytes)?;
    let angles: Vec<String> = g.geometry.angles_deg.iter().map(|a| a.to_string()).collect();
    std::fs::write(dir.join("scan.txt"), format!("angles = {}\nq = {}\nlevel = 6\n", angles.join(", "), g.geometry.detectors))?;
    let raw = read_raw_sinogram(&dir.join("scan.raw"), &dir.join("scan.txt"))?;
    println!("raw scan: {} angles x {} detectors", raw.geometry.num_angles(), raw.geometry.detectors);

    let spec = ExperimentSpec::parse("[data]\ntemplate = disk\nm = 32\n[model]\nlambda2 = 0.5\n", &dir)?;
    println!("spec: m = {}, lambda2 = {}, output {}", spec.data.m, spec.objective.lambda2, spec.output_dir.display());
    match ExperimentSpec::parse("[data]\nm = 32\nangels = 4\n", &dir) {
        Err(e) => println!("typo rejected: {e}"),
        Ok(_) => println!("typo accepted"),
    }
    Ok(())
}
