//! `meshforge`: batch geometry pipeline and one-shot wrappers around the
//! library operations.
//!
//! Exit codes: 0 success, 1 processing failures (rejected filter, failed
//! pipeline assets), 2 configuration or usage errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use meshforge::codec;
use meshforge::field::{sphere_field, torus_field, GridField, ScalarField};
use meshforge::isosurface::{extract, verify_watertight, ExtractionConfig};
use meshforge::meshkit;
use meshforge::pipeline::{self, PipelineConfig};
use meshforge::sampling;
use meshforge::watertight::{make_watertight, TsdfVolume, WatertightConfig};

#[derive(Parser)]
#[command(name = "meshforge", version, about = "Geometry processing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the batch pipeline from a JSON config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Extract an isosurface mesh from an analytic or grid-backed field.
    Extract(ExtractArgs),
    /// Quantize and encode a mesh into a token stream.
    Tokenize(TokenizeArgs),
    /// Decode a token stream back into a mesh.
    Detokenize {
        input: PathBuf,
        output: PathBuf,
    },
    /// Convert a mesh into a watertight envelope.
    Watertight(WatertightArgs),
    /// Sample SPACE / SURFACE / NEAR-SURFACE point groups.
    Sample(SampleArgs),
    /// Normalize a mesh to the unit bounding sphere.
    Normalize {
        input: PathBuf,
        output: PathBuf,
    },
    /// Apply the dataset filter rules; exit 1 on rejection.
    Filter {
        input: PathBuf,
    },
    /// Print mesh statistics as JSON.
    Stats {
        input: PathBuf,
    },
}

#[derive(Args)]
struct ExtractArgs {
    /// Field spec: `sphere:<r>[@cx,cy,cz]` | `torus:<R>,<r>` | `volume:<file.p3vl>`
    #[arg(long)]
    field: String,
    /// Final grid resolution (power of two, >= 32).
    #[arg(long, default_value_t = 256)]
    res: u32,
    /// Coarse starting resolution (power of two, <= res/4).
    #[arg(long)]
    coarse: Option<u32>,
    /// Activity margin multiplier on the cell diagonal.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Active-set dilation radius at the final level.
    #[arg(long, default_value_t = 1)]
    expand: u32,
    /// Write the extraction stats JSON here instead of stdout.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    output: PathBuf,
}

#[derive(Args)]
struct TokenizeArgs {
    /// Blocks per axis.
    #[arg(long = "B", visible_alias = "blocks", default_value_t = 16)]
    blocks: u32,
    /// Block side length.
    #[arg(long = "O", visible_alias = "block-size", default_value_t = 8)]
    block_size: u32,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct WatertightArgs {
    input: PathBuf,
    output: PathBuf,
    /// Number of depth views.
    #[arg(long, default_value_t = 42)]
    views: usize,
    /// TSDF volume resolution (power of two).
    #[arg(long, default_value_t = 256)]
    vres: u32,
    /// Depth image resolution.
    #[arg(long, default_value_t = 512)]
    dres: u32,
    /// Morphological closing window (odd).
    #[arg(long, default_value_t = 3)]
    window: u32,
    /// Truncation distance in voxels.
    #[arg(long, default_value_t = 3.0)]
    truncation: f64,
    /// Normalize the input first instead of requiring it.
    #[arg(long)]
    normalize: bool,
    /// Also write the fused TSDF volume here.
    #[arg(long)]
    volume_out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    input: PathBuf,
    outdir: PathBuf,
    /// Points per group.
    #[arg(long, default_value_t = 500_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Near-surface displacement sigma.
    #[arg(long, default_value_t = 0.01)]
    bias: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("meshforge: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Pipeline { config } => cmd_pipeline(config),
        Command::Extract(args) => cmd_extract(args),
        Command::Tokenize(args) => cmd_tokenize(args),
        Command::Detokenize { input, output } => cmd_detokenize(input, output),
        Command::Watertight(args) => cmd_watertight(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Normalize { input, output } => cmd_normalize(input, output),
        Command::Filter { input } => cmd_filter(input),
        Command::Stats { input } => cmd_stats(input),
    }
}

fn read_mesh(path: &PathBuf) -> Result<(meshforge::TriangleMesh, meshkit::MeshStats)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    meshkit::parse_obj(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn write_mesh(path: &PathBuf, mesh: &meshforge::TriangleMesh) -> Result<()> {
    fs::write(path, meshkit::write_obj(mesh))
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_pipeline(config_path: PathBuf) -> Result<ExitCode> {
    let bytes = fs::read(&config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let config: PipelineConfig =
        serde_json::from_slice(&bytes).context("parsing pipeline config")?;
    let (_, summary) = pipeline::run(&config)?;
    println!(
        "{}",
        serde_json::json!({
            "total": summary.total,
            "done": summary.done,
            "failed": summary.failed,
        })
    );
    Ok(ExitCode::from(summary.exit_code() as u8))
}

fn parse_field(spec: &str) -> Result<(Box<dyn ScalarField>, Option<meshforge::Aabb>)> {
    let (kind, rest) = spec
        .split_once(':')
        .with_context(|| format!("field spec `{spec}` missing `:`"))?;
    match kind {
        "sphere" => {
            let (r_str, center) = match rest.split_once('@') {
                Some((r, c)) => (r, Some(c)),
                None => (rest, None),
            };
            let r: f64 = r_str.parse().context("sphere radius")?;
            let c = match center {
                Some(c) => {
                    let parts: Vec<f64> = c
                        .split(',')
                        .map(|p| p.parse())
                        .collect::<std::result::Result<_, _>>()
                        .context("sphere center")?;
                    if parts.len() != 3 {
                        bail!("sphere center needs 3 coordinates");
                    }
                    [parts[0], parts[1], parts[2]]
                }
                None => [0.0; 3],
            };
            Ok((Box::new(sphere_field(c, r)?), None))
        }
        "torus" => {
            let (major, minor) = rest
                .split_once(',')
                .with_context(|| "torus needs major,minor radii")?;
            Ok((
                Box::new(torus_field(
                    major.parse().context("major radius")?,
                    minor.parse().context("minor radius")?,
                )?),
                None,
            ))
        }
        "volume" => {
            let volume = TsdfVolume::load(&PathBuf::from(rest))
                .with_context(|| format!("loading volume {rest}"))?;
            let grid = GridField::from_volume(&volume)?;
            let bounds = grid.bounds();
            Ok((Box::new(grid), Some(bounds)))
        }
        other => bail!("unknown field kind `{other}` (sphere | torus | volume)"),
    }
}

fn cmd_extract(args: ExtractArgs) -> Result<ExitCode> {
    let (field, bounds) = parse_field(&args.field)?;
    let mut cfg = ExtractionConfig::new(args.res);
    if let Some(coarse) = args.coarse {
        cfg.coarse_resolution = coarse;
    }
    cfg.activity_margin = args.tau;
    cfg.expansion_radius = args.expand;
    if let Some(bounds) = bounds {
        cfg.bounds = bounds;
    }
    let (mesh, stats) = extract(field.as_ref(), &cfg)?;
    write_mesh(&args.output, &mesh)?;
    let json = stats.to_json();
    match args.stats_out {
        Some(path) => fs::write(&path, json)?,
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_tokenize(args: TokenizeArgs) -> Result<ExitCode> {
    let (mesh, _) = read_mesh(&args.input)?;
    let (normalized, transform) = meshkit::normalize_to_unit_sphere(&mesh)?;
    let config = codec::CodecConfig::new(args.blocks, args.block_size)?;
    let (qm, report) = codec::quantize(&normalized, config, Some(transform))?;
    let ts = codec::encode(&qm)?;
    let stats = codec::token_stats(&ts)?;
    let file = fs::File::create(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    codec::write_tokens(&ts, std::io::BufWriter::new(file))?;
    println!(
        "{}",
        serde_json::json!({
            "tokens": stats.token_count,
            "patches": stats.patch_count,
            "triangles": stats.triangle_count,
            "compression_ratio": stats.compression_ratio,
            "merged_vertices": report.merged_vertices,
            "dropped_triangles": report.dropped_triangles,
        })
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_detokenize(input: PathBuf, output: PathBuf) -> Result<ExitCode> {
    let file = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
    let ts = codec::read_tokens(std::io::BufReader::new(file))?;
    let qm = codec::decode(&ts)?;
    let mesh = codec::dequantize(&qm);
    write_mesh(&output, &mesh)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_watertight(args: WatertightArgs) -> Result<ExitCode> {
    let (mesh, _) = read_mesh(&args.input)?;
    let mesh = if args.normalize {
        meshkit::normalize_to_unit_sphere(&mesh)?.0
    } else {
        mesh
    };
    let cfg = WatertightConfig {
        views: args.views,
        depth_resolution: args.dres,
        volume_resolution: args.vres,
        closing_window: args.window,
        truncation_voxels: args.truncation,
    };
    let envelope = if let Some(volume_path) = &args.volume_out {
        let (envelope, volume) = meshforge::watertight::watertight_volume(&mesh, &cfg)?;
        volume
            .save(volume_path)
            .with_context(|| format!("writing volume {}", volume_path.display()))?;
        envelope
    } else {
        make_watertight(&mesh, &cfg)?
    };
    write_mesh(&args.output, &envelope)?;
    let report = verify_watertight(&envelope);
    println!("{}", serde_json::to_string(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(args: SampleArgs) -> Result<ExitCode> {
    let (mesh, _) = read_mesh(&args.input)?;
    fs::create_dir_all(&args.outdir)
        .with_context(|| format!("creating {}", args.outdir.display()))?;
    let weights = sampling::compute_curvature(&mesh);
    let space = sampling::sample_space(&mesh, args.n, args.seed)?;
    let surface = sampling::sample_surface(&mesh, &weights, args.n, args.seed)?;
    let near = sampling::sample_near_surface(&mesh, args.n, args.bias, args.seed)?;
    let to_cloud = |set: &sampling::PointSampleSet| meshkit::PointCloud {
        points: set
            .points
            .iter()
            .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
            .collect(),
        normals: set.normals.as_ref().map(|ns| {
            ns.iter()
                .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
                .collect()
        }),
        inside: set.inside.clone(),
    };
    for (name, set, bias, weights) in [
        ("space", &space, None, None),
        ("surface", &surface, None, Some(&weights.triangle_weight[..])),
        ("near_surface", &near, Some(args.bias), None),
    ] {
        fs::write(
            args.outdir.join(format!("{name}.ply")),
            meshkit::write_ply(&to_cloud(set)),
        )?;
        let sidecar = sampling::SampleSidecar::describe(set, bias, weights);
        fs::write(
            args.outdir.join(format!("{name}.json")),
            serde_json::to_vec_pretty(&sidecar)?,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_normalize(input: PathBuf, output: PathBuf) -> Result<ExitCode> {
    let (mesh, _) = read_mesh(&input)?;
    let (normalized, transform) = meshkit::normalize_to_unit_sphere(&mesh)?;
    write_mesh(&output, &normalized)?;
    println!("{}", serde_json::to_string(&transform)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_filter(input: PathBuf) -> Result<ExitCode> {
    let (_, stats) = read_mesh(&input)?;
    let verdict = meshkit::filter_mesh(&stats);
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    Ok(if verdict.accepted {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_stats(input: PathBuf) -> Result<ExitCode> {
    let (_, stats) = read_mesh(&input)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(ExitCode::SUCCESS)
}
