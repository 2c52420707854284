//! Batch processing pipeline: filter -> normalize -> watertight -> check ->
//! sample -> tokenize, over a corpus of OBJ assets.
//!
//! Assets are identified by the content hash of their input bytes. A JSON
//! manifest in the output directory records per-stage status and output
//! hashes; it is rewritten atomically after every asset, and a re-run skips
//! any stage whose outputs still verify, so interrupting and restarting a
//! batch never redoes finished work and never rewrites finished bytes. One
//! bad asset never aborts the batch: its entry fails with a reason and the
//! remaining assets proceed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec;
use crate::isosurface::verify_watertight;
use crate::mesh::TriangleMesh;
use crate::meshkit;
use crate::sampling;
use crate::watertight::{self, WatertightConfig};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";
pub const WORKERS_ENV: &str = "MESHFORGE_WORKERS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Stage toggles; everything on by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StageToggles {
    pub filter: bool,
    pub normalize: bool,
    pub watertight: bool,
    pub check: bool,
    pub sample: bool,
    pub tokenize: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            filter: true,
            normalize: true,
            watertight: true,
            check: true,
            sample: true,
            tokenize: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WatertightParams {
    pub views: usize,
    pub depth_resolution: u32,
    pub volume_resolution: u32,
    pub closing_window: u32,
    pub truncation_voxels: f64,
}

impl Default for WatertightParams {
    fn default() -> Self {
        let d = WatertightConfig::default();
        Self {
            views: d.views,
            depth_resolution: d.depth_resolution,
            volume_resolution: d.volume_resolution,
            closing_window: d.closing_window,
            truncation_voxels: d.truncation_voxels,
        }
    }
}

impl WatertightParams {
    fn to_config(&self) -> WatertightConfig {
        WatertightConfig {
            views: self.views,
            depth_resolution: self.depth_resolution,
            volume_resolution: self.volume_resolution,
            closing_window: self.closing_window,
            truncation_voxels: self.truncation_voxels,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleParams {
    pub points_per_group: usize,
    pub near_surface_bias: f64,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            points_per_group: 500_000,
            near_surface_bias: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizeParams {
    pub blocks: u32,
    pub block_size: u32,
}

impl Default for TokenizeParams {
    fn default() -> Self {
        Self {
            blocks: 16,
            block_size: 8,
        }
    }
}

/// Pipeline configuration; deserializable from the CLI's JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Directory to scan for `.obj` files, or explicit file list in
    /// `inputs`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker thread count; 0 means one per CPU. The MESHFORGE_WORKERS
    /// environment variable overrides this.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub stages: StageToggles,
    #[serde(default)]
    pub watertight: WatertightParams,
    #[serde(default)]
    pub sample: SampleParams,
    #[serde(default)]
    pub tokenize: TokenizeParams,
}

impl PipelineConfig {
    pub fn new(output: PathBuf) -> Self {
        Self {
            input: None,
            inputs: Vec::new(),
            output,
            seed: 0,
            workers: 0,
            stages: StageToggles::default(),
            watertight: WatertightParams::default(),
            sample: SampleParams::default(),
            tokenize: TokenizeParams::default(),
        }
    }

    /// Resolve the asset list, sorted for determinism.
    fn resolve_inputs(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let mut files = self.inputs.clone();
        if let Some(dir) = &self.input {
            if dir.is_dir() {
                for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
                    let entry = entry.map_err(io_err(dir))?;
                    let path = entry.path();
                    if path.extension().is_some_and(|e| e == "obj") {
                        files.push(path);
                    }
                }
            } else if dir.is_file() {
                files.push(dir.clone());
            } else {
                return Err(PipelineError::Config(format!(
                    "input path {} does not exist",
                    dir.display()
                )));
            }
        }
        for f in &files {
            if !f.is_file() {
                return Err(PipelineError::Config(format!(
                    "input file {} does not exist",
                    f.display()
                )));
            }
        }
        if files.is_empty() {
            return Err(PipelineError::Config("no input assets".into()));
        }
        files.sort();
        files.dedup();
        Ok(files)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Done,
    Failed { reason: String },
    Skipped { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ManifestEntry {
    pub input: String,
    pub stages: BTreeMap<String, StageStatus>,
    pub outputs: BTreeMap<String, OutputRecord>,
    pub stats: BTreeMap<String, serde_json::Value>,
}

impl ManifestEntry {
    pub fn failed(&self) -> bool {
        self.stages
            .values()
            .any(|s| matches!(s, StageStatus::Failed { .. }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub schema: u32,
    pub seed: u64,
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    fn new(seed: u64) -> Self {
        Self {
            schema: MANIFEST_SCHEMA,
            seed,
            entries: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Option<Self>, PipelineError> {
        if !path.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let manifest: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| PipelineError::Config(format!("corrupt manifest: {e}")))?;
        Ok(Some(manifest))
    }

    /// Serialize and atomically replace the file; no-op when unchanged.
    fn store(&self, path: &Path) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        if let Ok(existing) = std::fs::read(path) {
            if existing == bytes {
                return Ok(());
            }
        }
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, &bytes).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io_err(path))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunSummary {
    pub total: usize,
    pub done: usize,
    pub failed: usize,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failed > 0 {
            1
        } else {
            0
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

fn file_hash_matches(dir: &Path, rec: &OutputRecord) -> bool {
    let path = dir.join(&rec.path);
    match std::fs::read(&path) {
        Ok(bytes) => sha256_hex(&bytes) == rec.sha256,
        Err(_) => false,
    }
}

/// Run the pipeline over the configured corpus.
///
/// Startup problems (unreadable inputs, unwritable output) fail fast with an
/// error; per-asset problems are recorded in the manifest and reflected in
/// the summary's exit code.
pub fn run(config: &PipelineConfig) -> Result<(Manifest, RunSummary), PipelineError> {
    let inputs = config.resolve_inputs()?;
    std::fs::create_dir_all(&config.output).map_err(io_err(&config.output))?;
    // Probe writability early.
    let probe = config.output.join(".meshforge-write-probe");
    std::fs::write(&probe, b"").map_err(io_err(&config.output))?;
    std::fs::remove_file(&probe).ok();

    let manifest_path = config.output.join(MANIFEST_NAME);
    let previous = Manifest::load(&manifest_path)?.unwrap_or_else(|| Manifest::new(config.seed));

    // Hash inputs up front so prior entries for the current corpus carry
    // over; an unchanged re-run then never writes a differing manifest.
    let mut ids = Vec::with_capacity(inputs.len());
    for path in &inputs {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        ids.push(sha256_hex(&bytes));
    }
    let mut manifest = Manifest::new(config.seed);
    for id in &ids {
        if let Some(entry) = previous.entries.get(id) {
            manifest.entries.insert(id.clone(), entry.clone());
        }
    }

    let workers = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .or(if config.workers >= 1 {
            Some(config.workers)
        } else {
            None
        })
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(inputs.len().max(1));

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(String, ManifestEntry)>();
    std::thread::scope(|scope| -> Result<(), PipelineError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let inputs = &inputs;
            let previous = &previous;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= inputs.len() {
                    break;
                }
                let (id, entry) = process_asset(config, &inputs[i], previous);
                if tx.send((id, entry)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single-writer manifest updates, flushed after every asset.
        while let Ok((id, entry)) = rx.recv() {
            manifest.entries.insert(id, entry);
            manifest.store(&manifest_path)?;
        }
        Ok(())
    })?;

    manifest.store(&manifest_path)?;
    let summary = RunSummary {
        total: manifest.entries.len(),
        done: manifest.entries.values().filter(|e| !e.failed()).count(),
        failed: manifest.entries.values().filter(|e| e.failed()).count(),
    };
    Ok((manifest, summary))
}

const STAGE_ORDER: [&str; 6] = [
    "filter",
    "normalize",
    "watertight",
    "check",
    "sample",
    "tokenize",
];

struct AssetCtx<'a> {
    config: &'a PipelineConfig,
    asset_dir: PathBuf,
    entry: ManifestEntry,
    prior: Option<&'a ManifestEntry>,
    /// Meshes materialized so far, keyed by artifact name.
    normalized: Option<TriangleMesh>,
    watertight: Option<TriangleMesh>,
}

impl AssetCtx<'_> {
    /// A stage is reusable when the prior run finished it and all its
    /// recorded outputs still hash-verify.
    fn reuse(&mut self, stage: &str, outputs: &[&str]) -> bool {
        let Some(prior) = self.prior else {
            return false;
        };
        if !matches!(prior.stages.get(stage), Some(StageStatus::Done)) {
            return false;
        }
        for name in outputs {
            match prior.outputs.get(*name) {
                Some(rec) if file_hash_matches(&self.asset_dir, rec) => {}
                _ => return false,
            }
        }
        self.entry
            .stages
            .insert(stage.to_string(), StageStatus::Done);
        for name in outputs {
            self.entry
                .outputs
                .insert(name.to_string(), prior.outputs[*name].clone());
        }
        for (k, v) in &prior.stats {
            if k == stage || k.starts_with(&format!("{stage}.")) {
                self.entry.stats.insert(k.clone(), v.clone());
            }
        }
        true
    }

    fn write_output(&mut self, name: &str, file: &str, bytes: &[u8]) -> Result<(), String> {
        let path = self.asset_dir.join(file);
        std::fs::write(&path, bytes).map_err(|e| format!("write {}: {e}", path.display()))?;
        self.entry.outputs.insert(
            name.to_string(),
            OutputRecord {
                path: file.to_string(),
                sha256: sha256_hex(bytes),
            },
        );
        Ok(())
    }

    fn load_mesh(&self, name: &str) -> Result<TriangleMesh, String> {
        let rec = self
            .entry
            .outputs
            .get(name)
            .ok_or_else(|| format!("missing {name} artifact"))?;
        let bytes = std::fs::read(self.asset_dir.join(&rec.path))
            .map_err(|e| format!("read {name}: {e}"))?;
        let (mesh, _) = meshkit::parse_obj(&bytes).map_err(|e| format!("parse {name}: {e}"))?;
        Ok(mesh)
    }

    fn record_stat<T: Serialize>(&mut self, key: &str, value: &T) {
        self.entry.stats.insert(
            key.to_string(),
            serde_json::to_value(value).expect("stat serializes"),
        );
    }

    fn fail(&mut self, stage: &str, reason: String) {
        self.entry
            .stages
            .insert(stage.to_string(), StageStatus::Failed { reason });
    }

    fn skip_rest(&mut self, from: usize, reason: &str) {
        for stage in &STAGE_ORDER[from..] {
            if self.enabled(stage) {
                self.entry.stages.insert(
                    stage.to_string(),
                    StageStatus::Skipped {
                        reason: reason.to_string(),
                    },
                );
            }
        }
    }

    fn enabled(&self, stage: &str) -> bool {
        let s = &self.config.stages;
        match stage {
            "filter" => s.filter,
            "normalize" => s.normalize,
            "watertight" => s.watertight,
            "check" => s.check,
            "sample" => s.sample,
            "tokenize" => s.tokenize,
            _ => false,
        }
    }
}

fn process_asset(
    config: &PipelineConfig,
    input: &Path,
    previous: &Manifest,
) -> (String, ManifestEntry) {
    let bytes = match std::fs::read(input) {
        Ok(b) => b,
        Err(e) => {
            let mut entry = ManifestEntry {
                input: input.display().to_string(),
                ..Default::default()
            };
            entry.stages.insert(
                "filter".into(),
                StageStatus::Failed {
                    reason: format!("unreadable input: {e}"),
                },
            );
            return (format!("unreadable:{}", input.display()), entry);
        }
    };
    let id = sha256_hex(&bytes);
    let asset_dir = config.output.join(&id[..16]);
    let mut ctx = AssetCtx {
        config,
        asset_dir,
        entry: ManifestEntry {
            input: input.display().to_string(),
            ..Default::default()
        },
        prior: previous.entries.get(&id),
        normalized: None,
        watertight: None,
    };
    if let Err(e) = std::fs::create_dir_all(&ctx.asset_dir) {
        ctx.fail("filter", format!("cannot create asset dir: {e}"));
        return (id, ctx.entry);
    }
    run_stages(&mut ctx, &bytes);
    (id, ctx.entry)
}

fn run_stages(ctx: &mut AssetCtx, input_bytes: &[u8]) {
    // Parse once; a parse failure fails the first enabled stage.
    let parsed = meshkit::parse_obj(input_bytes);
    let (mesh, stats) = match parsed {
        Ok(ok) => ok,
        Err(e) => {
            ctx.fail("filter", format!("parse error: {e}"));
            ctx.skip_rest(1, "input did not parse");
            return;
        }
    };

    // filter
    if ctx.enabled("filter") {
        let verdict = meshkit::filter_mesh(&stats);
        ctx.record_stat("filter", &verdict);
        ctx.record_stat("filter.mesh_stats", &stats);
        if !verdict.accepted {
            let reasons: Vec<String> = verdict
                .reasons
                .iter()
                .map(|r| {
                    let name = match r.rule {
                        meshkit::FilterRule::FaceCountBelowMin
                        | meshkit::FilterRule::FaceCountAboveMax => "face_count",
                        meshkit::FilterRule::MaterialCountAboveMax => "material_count",
                    };
                    format!("{name}={}", r.measured)
                })
                .collect();
            ctx.fail("filter", reasons.join(", "));
            ctx.skip_rest(1, "rejected by filter");
            return;
        }
        ctx.entry.stages.insert("filter".into(), StageStatus::Done);
    }

    // normalize
    if ctx.enabled("normalize") {
        if ctx.reuse("normalize", &["normalized"]) {
            // Mesh loaded lazily if a later stage needs it.
        } else {
            match meshkit::normalize_to_unit_sphere(&mesh) {
                Ok((normalized, transform)) => {
                    let bytes = meshkit::write_obj(&normalized);
                    if let Err(e) = ctx.write_output("normalized", "normalized.obj", &bytes) {
                        ctx.fail("normalize", e);
                        ctx.skip_rest(2, "normalize failed");
                        return;
                    }
                    ctx.record_stat("normalize", &transform);
                    ctx.entry
                        .stages
                        .insert("normalize".into(), StageStatus::Done);
                    ctx.normalized = Some(normalized);
                }
                Err(e) => {
                    ctx.fail("normalize", e.to_string());
                    ctx.skip_rest(2, "normalize failed");
                    return;
                }
            }
        }
    }

    // watertight
    if ctx.enabled("watertight")
        && !ctx.reuse("watertight", &["watertight"]) {
            let normalized = match ctx.normalized.take() {
                Some(m) => Ok(m),
                None => ctx.load_mesh("normalized"),
            };
            match normalized {
                Ok(normalized) => {
                    let cfg = ctx.config.watertight.to_config();
                    match watertight::make_watertight(&normalized, &cfg) {
                        Ok(envelope) => {
                            let bytes = meshkit::write_obj(&envelope);
                            if let Err(e) = ctx.write_output("watertight", "watertight.obj", &bytes)
                            {
                                ctx.fail("watertight", e);
                                ctx.skip_rest(3, "watertight failed");
                                return;
                            }
                            ctx.entry
                                .stages
                                .insert("watertight".into(), StageStatus::Done);
                            ctx.watertight = Some(envelope);
                        }
                        Err(e) => {
                            ctx.fail("watertight", e.to_string());
                            ctx.skip_rest(3, "watertight failed");
                            return;
                        }
                    }
                    ctx.normalized = Some(normalized);
                }
                Err(e) => {
                    ctx.fail("watertight", e);
                    ctx.skip_rest(3, "watertight failed");
                    return;
                }
            }
        }

    // check
    if ctx.enabled("check") {
        let envelope = match ctx.watertight.take() {
            Some(m) => Ok(m),
            None => ctx.load_mesh("watertight"),
        };
        match envelope {
            Ok(envelope) => {
                let report = verify_watertight(&envelope);
                ctx.record_stat("check", &report);
                if report.is_closed {
                    ctx.entry.stages.insert("check".into(), StageStatus::Done);
                } else {
                    ctx.fail(
                        "check",
                        format!(
                            "envelope not closed: {} boundary, {} non-manifold edges",
                            report.boundary_edge_count, report.non_manifold_edge_count
                        ),
                    );
                    ctx.skip_rest(4, "check failed");
                    return;
                }
                ctx.watertight = Some(envelope);
            }
            Err(e) => {
                ctx.fail("check", e);
                ctx.skip_rest(4, "check failed");
                return;
            }
        }
    }

    // sample
    if ctx.enabled("sample") {
        let outputs = [
            "space",
            "surface",
            "near_surface",
            "space_sidecar",
            "surface_sidecar",
            "near_surface_sidecar",
        ];
        if !ctx.reuse("sample", &outputs) {
            let envelope = match ctx.watertight.take() {
                Some(m) => Ok(m),
                None => ctx.load_mesh("watertight"),
            };
            match envelope.and_then(|m| sample_stage(ctx, &m).map(|_| m)) {
                Ok(m) => {
                    ctx.entry.stages.insert("sample".into(), StageStatus::Done);
                    ctx.watertight = Some(m);
                }
                Err(e) => {
                    ctx.fail("sample", e);
                    ctx.skip_rest(5, "sample failed");
                    return;
                }
            }
        }
    }

    // tokenize
    if ctx.enabled("tokenize")
        && !ctx.reuse("tokenize", &["tokens"]) {
            let normalized = match ctx.normalized.take() {
                Some(m) => Ok(m),
                None => ctx.load_mesh("normalized"),
            };
            match normalized.and_then(|m| tokenize_stage(ctx, &m)) {
                Ok(()) => {
                    ctx.entry
                        .stages
                        .insert("tokenize".into(), StageStatus::Done);
                }
                Err(e) => {
                    ctx.fail("tokenize", e);
                }
            }
        }
}

fn sample_stage(ctx: &mut AssetCtx, mesh: &TriangleMesh) -> Result<(), String> {
    let params = &ctx.config.sample;
    let seed = ctx.config.seed;
    let n = params.points_per_group;
    let err = |e: sampling::SamplingError| e.to_string();

    let space = sampling::sample_space(mesh, n, seed).map_err(err)?;
    let weights = sampling::compute_curvature(mesh);
    let surface = sampling::sample_surface(mesh, &weights, n, seed).map_err(err)?;
    let near = sampling::sample_near_surface(mesh, n, params.near_surface_bias, seed).map_err(err)?;

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
    let groups = [
        ("space", &space, None, None::<&[f64]>),
        ("surface", &surface, None, Some(&weights.triangle_weight[..])),
        (
            "near_surface",
            &near,
            Some(ctx.config.sample.near_surface_bias),
            None,
        ),
    ];
    for (name, set, bias, wstats) in groups {
        let ply = meshkit::write_ply(&to_cloud(set));
        ctx.write_output(name, &format!("{name}.ply"), &ply)?;
        let sidecar = sampling::SampleSidecar::describe(set, bias, wstats);
        let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
        ctx.write_output(&format!("{name}_sidecar"), &format!("{name}.json"), &json)?;
        ctx.record_stat(&format!("sample.{name}"), &sidecar);
    }
    Ok(())
}

fn tokenize_stage(ctx: &mut AssetCtx, normalized: &TriangleMesh) -> Result<(), String> {
    let params = &ctx.config.tokenize;
    let config = codec::CodecConfig::new(params.blocks, params.block_size)
        .map_err(|e| e.to_string())?;
    let (qm, report) = codec::quantize(normalized, config, None).map_err(|e| e.to_string())?;
    let ts = codec::encode(&qm).map_err(|e| e.to_string())?;
    let stats = codec::token_stats(&ts).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    codec::write_tokens(&ts, &mut bytes).map_err(|e| e.to_string())?;
    ctx.write_output("tokens", "tokens.p3tk", &bytes)?;
    ctx.record_stat("tokenize", &stats);
    ctx.record_stat("tokenize.quantize", &report);
    Ok(())
}
