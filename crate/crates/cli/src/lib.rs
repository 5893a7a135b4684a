//! The `nsv` command line: support simulation of single meshes and manifests,
//! preference pair export, dataset comparison, the toy alignment run and the
//! voxel cross-check.
//!
//! Exit statuses: 0 success, 2 input error, 3 geometric precondition failure,
//! 4 numeric divergence.

pub mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use nsv_core::mesh::{
    parse_obj, parse_stl, transform_to_print_frame, validate, write_ply_colored, BedPlane, MeshError, PrintSetup,
    TriangleMesh, ValidationReport,
};
use nsv_core::metrics::{sec, MetricsError, DEFAULT_TIE_THRESHOLD};
use nsv_core::preference::toy::{evaluate_heldout, run_toy_alignment, ToyConfig, ToyError};
use nsv_core::preference::{enumerate_pairs, AlignmentConfig, OffsetFn, SampleRecord};
use nsv_core::records::{
    read_report_csv, scores_from_rows, write_pairs, write_report_csv, write_trajectory, RecordError, ReportRow,
};
use nsv_core::support::{simulate_detailed, voxel_support_oracle, Simulation, SupportError, SupportReport};

use manifest::{parse_manifest, ManifestRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Geometry(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Geometry(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SupportError> for CliError {
    fn from(e: SupportError) -> Self {
        match e {
            SupportError::Resolution(_) => CliError::Input(e.to_string()),
            _ => CliError::Geometry(e.to_string()),
        }
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ToyError> for CliError {
    fn from(e: ToyError) -> Self {
        match e {
            ToyError::Divergence { .. } => CliError::Divergence(e.to_string()),
            ToyError::Config(_) => CliError::Input(e.to_string()),
            ToyError::Simulation(_) => CliError::Geometry(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "nsv", version, about = "Support-volume simulation and support-aware preference tools")]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate support for one mesh and print the report.
    Analyze(AnalyzeArgs),
    /// Simulate every mesh in a manifest and write the report CSV.
    Batch(BatchArgs),
    /// Build preference pairs from a report CSV.
    Pairs(PairsArgs),
    /// Compare two report CSVs by NSV and SEC.
    Compare(CompareArgs),
    /// Run the toy alignment experiment on the tabletop family.
    ToyAlign(ToyAlignArgs),
    /// Cross-check the column method against the voxel estimate.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SetupArgs {
    /// Print direction as x,y,z.
    #[arg(long = "dir", value_parser = parse_direction, default_value = "0,0,1")]
    pub direction: Vector3<f64>,
    /// Maximal self-supporting overhang angle in degrees.
    #[arg(long, default_value_t = 45.0)]
    pub alpha_max: f64,
    /// Keep the model where it is and put the bed at this height along the
    /// print direction, instead of dropping the model onto the bed.
    #[arg(long, allow_hyphen_values = true)]
    pub bed_z: Option<f64>,
}

impl SetupArgs {
    pub fn setup(&self) -> Result<PrintSetup, CliError> {
        let bed = self.bed_z.map_or(BedPlane::Grounded, BedPlane::At);
        Ok(PrintSetup::new(self.direction, self.alpha_max)?.with_bed(bed))
    }
}

fn parse_direction(s: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vector3::new(x, y, z)),
        _ => Err(format!("expected three comma-separated numbers, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub mesh: PathBuf,
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the print-frame mesh as a PLY with risky faces in red.
    #[arg(long)]
    pub ply: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    pub manifest: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub parallel: u16,
    #[command(flatten)]
    pub setup: SetupArgs,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    pub report: PathBuf,
    /// Offset scale.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// NSV differences at or below this are ties and produce no pair.
    #[arg(long, default_value_t = DEFAULT_TIE_THRESHOLD)]
    pub tie: f64,
    #[arg(long, default_value_t = OffsetFn::Log1p)]
    pub offset: OffsetFn,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub ours: PathBuf,
    pub baseline: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TIE_THRESHOLD)]
    pub tie: f64,
}

#[derive(Debug, Args)]
pub struct ToyAlignArgs {
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = OffsetFn::Log1p)]
    pub offset: OffsetFn,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = ToyConfig::default().learning_rate)]
    pub lr: f64,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also compare final and initial policies on this many held-out prompts.
    #[arg(long, default_value_t = 0)]
    pub heldout: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub mesh: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    #[command(flatten)]
    pub setup: SetupArgs,
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Batch(a) => cmd_batch(a, out, err),
        Command::Pairs(a) => cmd_pairs(a, out, err),
        Command::Compare(a) => cmd_compare(a, out),
        Command::ToyAlign(a) => cmd_toy_align(a, out),
        Command::Oracle(a) => cmd_oracle(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Reads STL or OBJ, chosen by extension; anything else is tried as STL.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh, CliError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mesh = if ext == "obj" {
        let text = String::from_utf8(bytes).map_err(|_| CliError::Input(format!("{}: not UTF-8", path.display())))?;
        parse_obj(&text)
    } else {
        parse_stl(&bytes)
    }
    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(mesh.with_source_name(path.display().to_string()))
}

/// Moves the mesh into its print frame and runs the column simulation.
pub fn analyze_mesh(mesh: &TriangleMesh, setup: &PrintSetup) -> Result<(TriangleMesh, Simulation), CliError> {
    let framed = transform_to_print_frame(mesh, setup);
    let sim = simulate_detailed(&framed, &setup.in_print_frame())?;
    Ok((framed, sim))
}

fn write_output(path: &Option<PathBuf>, out: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| io_error(p, e)),
        None => out.write_all(bytes).map_err(|e| CliError::Input(e.to_string())),
    }
}

#[derive(Serialize)]
struct AnalyzeJson<'a> {
    file: String,
    vertex_count: usize,
    face_count: usize,
    validation: ValidationReport,
    report: &'a SupportReport,
}

fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let setup = args.setup.setup()?;
    let mesh = load_mesh(&args.mesh)?;
    let (framed, sim) = analyze_mesh(&mesh, &setup)?;
    let r = &sim.report;
    let validation = validate(&mesh);
    let lines = [
        format!("file            {}", args.mesh.display()),
        format!("faces           {} ({} degenerate)", mesh.face_count(), validation.degenerate_face_count),
        format!("watertight      {}", r.watertight),
        format!("mesh volume     {:.6}", r.mesh_volume),
        format!("risky faces     {} (area {:.6})", r.risky_count, r.risky_area),
        format!("support volume  {:.6}", r.support_volume),
        format!("NSV             {:.6}", r.nsv),
    ];
    writeln!(out, "{}", lines.join("\n")).map_err(|e| CliError::Input(e.to_string()))?;

    if let Some(path) = &args.json {
        let doc = AnalyzeJson {
            file: args.mesh.display().to_string(),
            vertex_count: mesh.vertices().len(),
            face_count: mesh.face_count(),
            validation,
            report: r,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Input(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| io_error(path, e))?;
    }
    if let Some(path) = &args.ply {
        let bytes = write_ply_colored(&framed, &sim.classification.risky_flags)?;
        fs::write(path, bytes).map_err(|e| io_error(path, e))?;
    }
    Ok(())
}

fn process_record(record: &ManifestRecord, base: &Path, setup: &PrintSetup) -> Result<ReportRow, CliError> {
    let mesh = load_mesh(&record.resolve(base))?;
    let (_, sim) = analyze_mesh(&mesh, setup)?;
    let r = sim.report;
    Ok(ReportRow {
        prompt_id: record.prompt_id.clone(),
        sample_id: record.sample_id.clone(),
        file: record.mesh_path.clone(),
        mesh_volume: r.mesh_volume,
        support_volume: r.support_volume,
        nsv: r.nsv,
        risky_count: r.risky_count,
        risky_area: r.risky_area,
        watertight: r.watertight,
    })
}

fn cmd_batch(args: &BatchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let setup = args.setup.setup()?;
    let text = fs::read_to_string(&args.manifest).map_err(|e| io_error(&args.manifest, e))?;
    let records = parse_manifest(&text)?;
    let base = args.manifest.parent().map(Path::to_path_buf).unwrap_or_default();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.parallel as usize)
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    // collect keeps manifest order whatever the scheduling
    let results: Vec<Result<ReportRow, CliError>> =
        pool.install(|| records.par_iter().map(|r| process_record(r, &base, &setup)).collect());

    let mut rows = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                writeln!(err, "manifest line {}: {}: {e}", record.line, record.mesh_path)
                    .map_err(|e| CliError::Input(e.to_string()))?;
            }
        }
    }
    let mut buf = Vec::new();
    write_report_csv(&mut buf, &rows)?;
    write_output(&args.out, out, &buf)?;
    if let Some(path) = &args.out {
        writeln!(out, "wrote {} rows to {} ({failed} failed)", rows.len(), path.display())
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    read_report_csv(file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_pairs(args: &PairsArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let config = AlignmentConfig {
        alpha: args.alpha,
        offset_fn: args.offset,
        tie_threshold: args.tie,
        ..Default::default()
    };
    config.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let rows = read_report(&args.report)?;
    let samples: Vec<SampleRecord> = rows.iter().map(ReportRow::sample).collect();
    let set = enumerate_pairs(&samples, &config);
    let mut buf = Vec::new();
    write_pairs(&mut buf, &set.pairs)?;
    write_output(&args.out, out, &buf)?;
    let summary = format!("pairs {} skipped prompts {}", set.pairs.len(), set.skipped_prompts);
    let sink: &mut dyn Write = if args.out.is_some() { out } else { err };
    writeln!(sink, "{summary}").map_err(|e| CliError::Input(e.to_string()))
}

fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ours = scores_from_rows(&read_report(&args.ours)?);
    let baseline = scores_from_rows(&read_report(&args.baseline)?);
    let r = sec(&ours, &baseline, args.tie)?;
    let table = [
        format!("{:<16}{:>14}{:>14}", "metric", "ours", "baseline"),
        format!("{:<16}{:>14.6}{:>14.6}", "NSV (weighted)", r.nsv_weighted_a, r.nsv_weighted_b),
        format!("{:<16}{:>14.6}{:>14.6}", "NSV*", r.nsv_star_a, r.nsv_star_b),
        format!("{:<16}{:>14.3}", "SEC", r.sec),
        format!("{:<16}{:>14}", "wins", r.wins),
        format!("{:<16}{:>14}", "ties", r.ties),
        format!("{:<16}{:>14}", "losses", r.losses),
    ];
    let json = serde_json::to_string(&r).map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(out, "{}\n{json}", table.join("\n")).map_err(|e| CliError::Input(e.to_string()))
}

fn cmd_toy_align(args: &ToyAlignArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = AlignmentConfig {
        alpha: args.alpha,
        offset_fn: args.offset,
        beta: args.beta,
        ..Default::default()
    };
    let toy = ToyConfig {
        steps: args.steps,
        seed: args.seed,
        learning_rate: args.lr,
        ..Default::default()
    };
    let run = run_toy_alignment(&config, &toy)?;
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &run.trajectory)?;
        fs::write(path, buf).map_err(|e| io_error(path, e))?;
    }
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(|e| CliError::Input(e.to_string()));
    w(out, format!("initial mean NSV  {:.6}", run.initial_mean_nsv()))?;
    if args.steps > 0 {
        w(out, format!("final mean NSV    {:.6}", run.final_mean_nsv()))?;
        w(out, format!("policy mean       [{:.6}, {:.6}]", run.final_mean[0], run.final_mean[1]))?;
    }
    if args.heldout > 0 {
        let (trained, initial) = evaluate_heldout(run.final_mean, run.initial_mean, &toy, args.heldout)?;
        let r = sec(&trained, &initial, DEFAULT_TIE_THRESHOLD)?;
        w(out, format!("held-out SEC      {:.3} ({} prompts)", r.sec, r.compared()))?;
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let setup = args.setup.setup()?;
    let mesh = load_mesh(&args.mesh)?;
    let (framed, sim) = analyze_mesh(&mesh, &setup)?;
    let voxels = voxel_support_oracle(&framed, &setup.in_print_frame(), args.resolution)?;
    let columns = sim.report.support_volume;
    let gap = if voxels > 0.0 { (columns - voxels).abs() / voxels } else { (columns - voxels).abs() };
    writeln!(
        out,
        "tetrahedra  {columns:.6}\nvoxel       {voxels:.6} (resolution {})\ngap         {:.4}%",
        args.resolution,
        gap * 100.0
    )
    .map_err(|e| CliError::Input(e.to_string()))
}
