//! Rasterizes the built-in phantoms, deforms Shepp-Logan with each preset
//! and writes `.img` files with PNG previews.
//!
//! cargo run --release --example phantoms -- [out_dir]

use std::path::PathBuf;

use deformrecon::io::{write_image, write_png};
use deformrecon::phantom::{add_square, make_phantom, synth_deform, DeformPreset, Phantom};
use deformrecon::Result;

fn main() -> Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/phantoms".into()));
    std::fs::create_dir_all(&out)?;
    let m = 128;
    for name in ["shepp-logan", "shepp-logan-square", "gauss-bump", "disk"] {
        let f = make_phantom(name.parse::<Phantom>()?, m)?;
        let (lo, hi) = f.values().iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!("{name:<20} range [{lo:.3}, {hi:.3}]");
        write_image(&out.join(format!("{name}.img")), &f)?;
        write_png(&out.join(format!("{name}.png")), &f, Some((0.0, 1.0)))?;
    }

    let template = make_phantom(Phantom::SheppLogan, m)?;
    for preset in ["swirl", "bend", "translate", "translate-bump"] {
        let warped = synth_deform(&template, preset.parse::<DeformPreset>()?)?;
        let moved: f64 = warped.values().iter().zip(template.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() / (m * m) as f64;
        println!("{preset:<20} mean |change| {moved:.4}");
        write_png(&out.join(format!("deformed-{preset}.png")), &warped, Some((0.0, 1.0)))?;
    }

    let target = add_square(&synth_deform(&template, DeformPreset::Bend { amp: 0.02 })?)?;
    write_png(&out.join("target.png"), &target, Some((0.0, 1.0)))?;
    println!("wrote {}", out.display());
    Ok(())
}
