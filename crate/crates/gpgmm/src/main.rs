use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpgmm::commands;
use gpgmm::config::{parse_method_list, Settings};
use gpgmm::core::pipeline::Method;
use gpgmm::core::{Aabb, Vector3};
use gpgmm::{scene, Error, Result};

/// Continuous signed distance mapping with uncertainty from point clouds.
#[derive(Parser)]
#[command(name = "gpgmm", version)]
struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic cloud with analytic normals and a truth manifest.
    Synth {
        /// Preset (sphere, box, plane, corner) or a shape TOML file.
        #[arg(long, default_value = "sphere")]
        shape: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a point cloud (.xyz or .ply).
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "gpgmm")]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict distance and variance at the points of a cloud file.
    Query {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the zero level set as a PLY mesh.
    Mesh {
        #[arg(long)]
        model: PathBuf,
        /// xmin,ymin,zmin,xmax,ymax,zmax
        #[arg(long)]
        bounds: Option<String>,
        #[arg(long)]
        spacing: Option<f64>,
        /// Also write the sampled grid.
        #[arg(long)]
        grid_out: Option<PathBuf>,
        /// Cloud of observed hits; space farther than mesh_support_radius
        /// from all of them is not meshed.
        #[arg(long)]
        support: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the synthetic benchmark and write metrics.csv and timings.csv.
    Bench {
        /// Comma-separated subset of gmm,gpgmm,gpis,loggpis.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_bounds(s: &str) -> Result<Aabb> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bounds: cannot parse '{s}'")))?;
    if v.len() != 6 {
        return Err(Error::Config("bounds: expected six comma-separated numbers".into()));
    }
    let b = Aabb::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]));
    if !b.is_valid() {
        return Err(Error::Config("bounds: min must be below max on every axis".into()));
    }
    Ok(b)
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        settings = settings.with_seed(seed);
    }
    match cli.command {
        Command::Synth { shape, n, noise, out } => {
            let shape = scene::resolve_shape(&shape)?;
            commands::synth(&shape, n, noise, cli.seed.unwrap_or(0), &out)?;
            eprintln!("wrote {n} points to {}", out.display());
        }
        Command::Fit { input, method, out } => {
            let method = Method::parse(&method).map_err(|e| Error::Config(e.to_string()))?;
            let run = commands::fit(&input, method, &settings, &out)?;
            eprint!("{}", commands::fit_log(&run));
        }
        Command::Query { model, points, out } => {
            let n = commands::query(&model, &points, &out)?;
            eprintln!("wrote {n} predictions to {}", out.display());
        }
        Command::Mesh {
            model,
            bounds,
            spacing,
            grid_out,
            support,
            out,
        } => {
            if let Some(b) = bounds {
                settings.grid.bounds = Some(parse_bounds(&b)?);
            }
            if let Some(s) = spacing {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::Config("spacing must be positive".into()));
                }
                settings.grid.spacing = s;
            }
            let mesh = commands::mesh(&model, &settings, support.as_deref(), &out, grid_out.as_deref())?;
            eprintln!(
                "wrote {} vertices, {} triangles to {}",
                mesh.vertices.len(),
                mesh.triangles.len(),
                out.display()
            );
        }
        Command::Bench {
            method,
            scene: scene_arg,
            n_train,
            n_test,
            noise,
            out,
        } => {
            let b = &mut settings.bench;
            if let Some(m) = method {
                b.methods = parse_method_list(&m)?;
            }
            if let Some(s) = scene_arg {
                b.scene = scene::resolve_shape(&s)?;
            }
            b.n_train = n_train.unwrap_or(b.n_train);
            b.n_test = n_test.unwrap_or(b.n_test);
            b.noise = noise.unwrap_or(b.noise);
            b.check()?;
            let output = commands::bench(&settings, &out)?;
            for (m, e) in &output.report.failures {
                eprintln!("{} failed: {e}", m.as_str());
            }
            eprintln!("wrote report to {}", out.display());
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
