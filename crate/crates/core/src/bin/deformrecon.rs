use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deformrecon::experiment::{
    baseline_search, prepare, run_reconstruction, run_sweep, simulation_geometry, sweep_csv, write_artifacts,
    write_measurements, ExperimentSpec,
};
use deformrecon::io::{read_image, write_image, write_png, write_sinogram_csv};
use deformrecon::metrics::{metric_ssd, metric_ssim};
use deformrecon::phantom::{add_noise, add_square, make_phantom, synth_deform, DeformPreset, Phantom};
use deformrecon::radon::radon_forward;
use deformrecon::{Error, Result};

/// Template-based sparse-angle tomography with deformation and source.
#[derive(Parser)]
#[command(name = "deformrecon", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a built-in phantom, optionally deformed and with the square.
    Phantom {
        /// shepp-logan, shepp-logan-square, gauss-bump or disk
        #[arg(long, default_value = "shepp-logan")]
        name: String,
        #[arg(long, default_value_t = 64)]
        m: usize,
        /// Deformation preset: swirl, bend, translate, translate-bump
        #[arg(long)]
        deform: Option<String>,
        #[arg(long)]
        square: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parallel-beam projection of an image, with optional noise.
    Project {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 10)]
        angles: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the multi-level reconstruction of a spec file.
    Reconstruct(RunArgs),
    /// Grid-searched L2-TV reconstruction of the spec's data.
    Baseline(RunArgs),
    /// Image SSD and SSIM between two images.
    Metrics { a: PathBuf, b: PathBuf },
    /// Reconstruct for every combination of the spec's sweep grid.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory (overrides the spec).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed (overrides the spec).
    #[arg(long)]
    seed: Option<u64>,
    /// Grid size of the coarsest pyramid level.
    #[arg(long)]
    level_coarsest: Option<usize>,
    /// Directory for per-level iteration logs.
    #[arg(long)]
    log: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::read(&self.spec)?;
        if let Some(o) = &self.out {
            spec.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            spec.data.seed = s;
        }
        if let Some(m) = self.level_coarsest {
            spec.pipeline.coarsest_m = m;
        }
        spec.pipeline.log_dir = self.log.clone();
        Ok(spec)
    }
}

fn save_image(path: &Path, f: &deformrecon::ScalarField) -> Result<()> {
    write_image(path, f)?;
    write_png(&path.with_extension("png"), f, None)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    match cli.command {
        Command::Phantom { name, m, deform, square, out } => {
            let mut f = make_phantom(name.parse::<Phantom>()?, m)?;
            if let Some(d) = deform {
                f = synth_deform(&f, d.parse::<DeformPreset>()?)?;
            }
            if square {
                f = add_square(&f)?;
            }
            save_image(&out, &f)?;
            println!("wrote {}", out.display());
        }
        Command::Project { image, angles, noise, seed, out } => {
            let f = read_image(&image)?;
            let geom = simulation_geometry(f.grid(), angles)?;
            let g = add_noise(&radon_forward(&f, &geom)?, noise, seed)?;
            write_sinogram_csv(&out, &g)?;
            println!("wrote {} ({} angles x {} detectors)", out.display(), angles, geom.detectors);
        }
        Command::Reconstruct(args) => {
            let spec = args.load()?;
            let data = prepare(&spec.data)?;
            let result = run_reconstruction(&spec, &data)?;
            let files = write_artifacts(&spec.output_dir, &result, data.truth.as_ref())?;
            if data.truth.is_some() {
                write_measurements(&spec.output_dir, &data)?;
            }
            print!("{}", result.reconstruction.report.to_text());
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Baseline(args) => {
            let spec = args.load()?;
            let data = prepare(&spec.data)?;
            let search = baseline_search(&spec, &data)?;
            std::fs::create_dir_all(&spec.output_dir)?;
            for (l, ssd) in &search.scores {
                println!("lambda = {l}  ssd = {ssd:.6e}");
            }
            let b = &search.best;
            if !b.converged {
                eprintln!("warning: baseline stopped at {} iterations with gap {:.3e}", b.iterations, b.gap);
            }
            println!("best lambda = {}", search.best_lambda);
            if let Some(t) = &data.truth {
                println!("ssd = {:.6e}", metric_ssd(&b.image, t)?);
                println!("ssim = {:.6}", metric_ssim(&b.image, t)?);
            }
            let out = spec.output_dir.join("baseline.img");
            save_image(&out, &b.image)?;
            println!("wrote {}", out.display());
        }
        Command::Metrics { a, b } => {
            let (a, b) = (read_image(&a)?, read_image(&b)?);
            println!("ssd = {:.6e}", metric_ssd(&a, &b)?);
            match metric_ssim(&a, &b) {
                Ok(s) => println!("ssim = {s:.6}"),
                Err(e) => eprintln!("ssim unavailable: {e}"),
            }
        }
        Command::Sweep(args) => {
            let spec = args.load()?;
            let data = prepare(&spec.data)?;
            let rows = run_sweep(&spec, &data)?;
            let csv = sweep_csv(&rows);
            std::fs::create_dir_all(&spec.output_dir)?;
            let out = spec.output_dir.join("sweep.csv");
            std::fs::write(&out, &csv)?;
            print!("{csv}");
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
