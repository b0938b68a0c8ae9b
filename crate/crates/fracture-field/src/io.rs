//! Run persistence: trace CSV, VTK snapshots, manifest, and locking.
//!
//! Numbers are written with 17 significant digits so parsing them back
//! reproduces the doubles bit for bit; determinism tests compare the trace
//! files byte for byte. Snapshots use the legacy ASCII VTK unstructured-grid
//! dialect so standard viewers open them directly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::evolution::{EvolutionResult, StepRecord};
use crate::fem::NodalField;
use crate::mesh::Mesh;
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Environment variable capping optional parallelism.
pub const THREADS_ENV: &str = "FRACTURE_FIELD_THREADS";

/// Formats a double with 17 significant digits (exact round trip).
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the per-step records as `trace.csv` under `dir`.
pub fn write_trace_csv(dir: &Path, records: &[StepRecord]) -> Result<PathBuf> {
    let path = dir.join("trace.csv");
    let mut text = String::new();
    text.push_str(&StepRecord::COLUMNS.join(","));
    text.push('\n');
    for r in records {
        let row = [
            r.step.to_string(),
            fmt_f64(r.time),
            r.altmin_iters.to_string(),
            r.newton_iters.to_string(),
            fmt_f64(r.elastic),
            fmt_f64(r.dissipation),
            fmt_f64(r.penalty),
            fmt_f64(r.total),
            fmt_f64(r.crack_length),
            fmt_f64(r.irrev_violation),
            fmt_f64(r.energy_slack),
        ];
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(&path, text)?;
    Ok(path)
}

/// Parses a trace file written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Vec<StepRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedArtifact(format!("{}: empty", path.display())))?;
    if header != StepRecord::COLUMNS.join(",") {
        return Err(Error::MalformedArtifact(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut records = Vec::new();
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != StepRecord::COLUMNS.len() {
            return Err(Error::MalformedArtifact(format!(
                "{}: row {} has {} fields",
                path.display(),
                k + 2,
                fields.len()
            )));
        }
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::MalformedArtifact(format!("bad count {s:?}")))
        };
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::MalformedArtifact(format!("bad number {s:?}")))
        };
        records.push(StepRecord {
            step: int(fields[0])?,
            time: num(fields[1])?,
            altmin_iters: int(fields[2])?,
            newton_iters: int(fields[3])?,
            elastic: num(fields[4])?,
            dissipation: num(fields[5])?,
            penalty: num(fields[6])?,
            total: num(fields[7])?,
            crack_length: num(fields[8])?,
            irrev_violation: num(fields[9])?,
            energy_slack: num(fields[10])?,
        });
    }
    Ok(records)
}

/// Snapshot filename for a step, zero-padded for stable sorting.
pub fn snapshot_filename(step: usize) -> String {
    format!("snap_{step:06}.vtk")
}

/// Writes the fields at one step as a legacy ASCII VTK unstructured grid.
///
/// Points are the active vertices in ascending index order (compact
/// renumbering); cells are the active triangles; two point-data scalars
/// carry the displacement and the phase.
pub fn write_snapshot(
    dir: &Path,
    step: usize,
    t: f64,
    mesh: &Mesh,
    u: &NodalField,
    v: &NodalField,
) -> Result<PathBuf> {
    crate::fem::check_field(mesh, u)?;
    crate::fem::check_field(mesh, v)?;
    let active = mesh.active_vertices();
    let mut compact = vec![usize::MAX; mesh.n_vertices()];
    for (new, &old) in active.iter().enumerate() {
        compact[old] = new;
    }
    let cells: Vec<[usize; 3]> = mesh
        .triangles()
        .iter()
        .map(|tri| {
            let [a, b, c] = tri.vertices;
            [compact[a], compact[b], compact[c]]
        })
        .collect();
    let mut text = String::new();
    text.push_str("# vtk DataFile Version 3.0\n");
    text.push_str(&format!("fracture-field step={step} t={}\n", fmt_f64(t)));
    text.push_str("ASCII\n");
    text.push_str("DATASET UNSTRUCTURED_GRID\n");
    text.push_str(&format!("POINTS {} double\n", active.len()));
    for &l in &active {
        let [x, y] = mesh.vertex(l);
        text.push_str(&format!("{} {} 0\n", fmt_f64(x), fmt_f64(y)));
    }
    text.push_str(&format!("CELLS {} {}\n", cells.len(), 4 * cells.len()));
    for [a, b, c] in &cells {
        text.push_str(&format!("3 {a} {b} {c}\n"));
    }
    text.push_str(&format!("CELL_TYPES {}\n", cells.len()));
    for _ in &cells {
        text.push_str("5\n");
    }
    text.push_str(&format!("POINT_DATA {}\n", active.len()));
    for (name, field) in [("displacement", u), ("phase", v)] {
        text.push_str(&format!("SCALARS {name} double 1\n"));
        text.push_str("LOOKUP_TABLE default\n");
        for &l in &active {
            text.push_str(&fmt_f64(field.get(l)));
            text.push('\n');
        }
    }
    let path = dir.join(snapshot_filename(step));
    fs::write(&path, text)?;
    Ok(path)
}

/// In-memory form of a snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub points: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub displacement: Vec<f64>,
    pub phase: Vec<f64>,
}

impl Snapshot {
    /// Scatters the compact point arrays back onto full nodal fields.
    ///
    /// The mesh must be the one the snapshot was written from; point count
    /// and coordinates are cross-checked.
    pub fn to_fields(&self, mesh: &Mesh) -> Result<(NodalField, NodalField)> {
        let active = mesh.active_vertices();
        if active.len() != self.points.len() {
            return Err(Error::MalformedArtifact(format!(
                "snapshot has {} points, mesh has {} active vertices",
                self.points.len(),
                active.len()
            )));
        }
        for (&l, p) in active.iter().zip(&self.points) {
            let [x, y] = mesh.vertex(l);
            if (x - p[0]).abs() > 1e-12 || (y - p[1]).abs() > 1e-12 {
                return Err(Error::MalformedArtifact(format!(
                    "snapshot point ({}, {}) does not match vertex {l} at ({x}, {y})",
                    p[0], p[1]
                )));
            }
        }
        // Points can coincide while the triangulations differ (a carved
        // hole may only remove triangles), so cross-check the cells too.
        if self.cells.len() != mesh.triangles().len() {
            return Err(Error::MalformedArtifact(format!(
                "snapshot has {} cells, mesh has {} triangles",
                self.cells.len(),
                mesh.triangles().len()
            )));
        }
        let mut compact = vec![usize::MAX; mesh.n_vertices()];
        for (new, &old) in active.iter().enumerate() {
            compact[old] = new;
        }
        for (k, (cell, tri)) in self.cells.iter().zip(mesh.triangles()).enumerate() {
            let [a, b, c] = tri.vertices;
            if *cell != [compact[a], compact[b], compact[c]] {
                return Err(Error::MalformedArtifact(format!(
                    "snapshot cell {k} does not match the mesh triangulation"
                )));
            }
        }
        let mut u = vec![0.0; mesh.n_vertices()];
        let mut v = vec![0.0; mesh.n_vertices()];
        for ((&l, &du), &dv) in active.iter().zip(&self.displacement).zip(&self.phase) {
            u[l] = du;
            v[l] = dv;
        }
        Ok((
            NodalField::from_values(mesh, u)?,
            NodalField::from_values(mesh, v)?,
        ))
    }
}

fn vtk_line<'t>(lines: &mut std::str::Lines<'t>, prefix: &str, path: &Path) -> Result<&'t str> {
    let line = lines.next().ok_or_else(|| {
        Error::MalformedArtifact(format!("{}: truncated at {prefix:?}", path.display()))
    })?;
    if !line.starts_with(prefix) {
        return Err(Error::MalformedArtifact(format!(
            "{}: expected {prefix:?}, found {line:?}",
            path.display()
        )));
    }
    Ok(line)
}

/// Parses a snapshot written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path)?;
    let bad = |what: &str| Error::MalformedArtifact(format!("{}: {what}", path.display()));
    let mut lines = text.lines();
    vtk_line(&mut lines, "# vtk DataFile Version 3.0", path)?;
    vtk_line(&mut lines, "", path)?; // title line, free-form
    vtk_line(&mut lines, "ASCII", path)?;
    vtk_line(&mut lines, "DATASET UNSTRUCTURED_GRID", path)?;
    let n: usize = vtk_line(&mut lines, "POINTS ", path)?
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad POINTS header"))?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines.next().ok_or_else(|| bad("truncated points"))?;
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        let x = it.next().and_then(|r| r.ok());
        let y = it.next().and_then(|r| r.ok());
        match (x, y) {
            (Some(x), Some(y)) => points.push([x, y]),
            _ => return Err(bad("bad point line")),
        }
    }
    let m: usize = vtk_line(&mut lines, "CELLS ", path)?
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad CELLS header"))?;
    let mut cells = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines.next().ok_or_else(|| bad("truncated cells"))?;
        let ids: Vec<usize> = line
            .split_whitespace()
            .filter_map(|s| s.parse().ok())
            .collect();
        if ids.len() != 4 || ids[0] != 3 {
            return Err(bad("bad cell line"));
        }
        cells.push([ids[1], ids[2], ids[3]]);
    }
    vtk_line(&mut lines, "CELL_TYPES ", path)?;
    for _ in 0..m {
        let line = lines.next().ok_or_else(|| bad("truncated cell types"))?;
        if line.trim() != "5" {
            return Err(bad("non-triangle cell type"));
        }
    }
    vtk_line(&mut lines, "POINT_DATA ", path)?;
    let mut arrays = Vec::new();
    for name in ["displacement", "phase"] {
        let header = vtk_line(&mut lines, "SCALARS ", path)?;
        if header.split_whitespace().nth(1) != Some(name) {
            return Err(bad(&format!("expected scalar array {name:?}")));
        }
        vtk_line(&mut lines, "LOOKUP_TABLE", path)?;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad("truncated scalars"))?;
            vals.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| bad("bad scalar line"))?,
            );
        }
        arrays.push(vals);
    }
    let phase = arrays.pop().expect("two arrays pushed");
    let displacement = arrays.pop().expect("two arrays pushed");
    Ok(Snapshot {
        points,
        cells,
        displacement,
        phase,
    })
}

/// Compact description of the mesh a run used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSummary {
    pub h: usize,
    pub n_vertices: usize,
    pub n_active_vertices: usize,
    pub n_active_triangles: usize,
    pub total_area: f64,
}

impl MeshSummary {
    pub fn of(mesh: &Mesh) -> Self {
        MeshSummary {
            h: mesh.h(),
            n_vertices: mesh.n_vertices(),
            n_active_vertices: mesh.n_active(),
            n_active_triangles: mesh.active().iter().filter(|&&a| a).count(),
            total_area: mesh.total_area(),
        }
    }
}

/// Metadata written next to each run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenario: Scenario,
    pub fingerprint: String,
    pub mesh: MeshSummary,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Snapshot filenames in step order; empty when snapshots are off.
    pub snapshots: Vec<String>,
    /// Checksum of trace.csv, recomputable from the file.
    pub trace_sha256: String,
    pub threads: usize,
    pub stopped_early: bool,
    pub aborted: Option<String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Err(Error::MissingArtifact(format!("{}", path.display())));
        }
        let text = fs::read_to_string(&path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// SHA-256 of a file, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

/// Exclusive ownership of an output directory, held via a lock file.
///
/// The lock file is created atomically and removed on drop; a second run
/// into the same directory fails fast instead of interleaving writes.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<OutputLock> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::OutputLocked(format!(
                    "{} exists; another run owns this directory (delete the file if it is stale)",
                    path.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Thread cap from the environment; the current solvers are sequential, so
/// the value is recorded in the manifest rather than consumed.
pub fn configured_threads() -> Result<usize> {
    threads_from(std::env::var_os(THREADS_ENV))
}

fn threads_from(raw: Option<std::ffi::OsString>) -> Result<usize> {
    match raw {
        None => Ok(1),
        Some(os) => {
            let s = os
                .to_str()
                .ok_or_else(|| Error::InvalidEnvironment(format!("{THREADS_ENV}: not UTF-8")))?;
            match s.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(Error::InvalidEnvironment(format!(
                    "{THREADS_ENV}={s:?} (want a positive integer)"
                ))),
            }
        }
    }
}

/// Writes a completed run into `dir`: trace, optional snapshots, manifest.
///
/// Snapshots cover step 0 and every `snapshot_every`-th step, plus the last
/// completed step so the final fields are always on disk.
pub fn write_run(dir: &Path, scenario: &Scenario, result: &EvolutionResult) -> Result<PathBuf> {
    let started = unix_now();
    let _lock = OutputLock::acquire(dir)?;
    let trace_path = write_trace_csv(dir, &result.trace.records)?;
    let mut snapshots = Vec::new();
    let every = scenario.output.snapshot_every;
    if every > 0 {
        let last = result.states.len() - 1;
        for (i, (u, v)) in result.states.iter().enumerate() {
            if i % every == 0 || i == last {
                let t = i as f64 * scenario.tau;
                write_snapshot(dir, i, t, &result.mesh, u, v)?;
                snapshots.push(snapshot_filename(i));
            }
        }
    }
    let manifest = RunManifest {
        scenario: scenario.clone(),
        fingerprint: result.trace.fingerprint.clone(),
        mesh: MeshSummary::of(&result.mesh),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        snapshots,
        trace_sha256: file_sha256(&trace_path)?,
        threads: configured_threads()?,
        stopped_early: result.trace.stopped_early,
        aborted: result.trace.aborted.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest_path)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
