//! End-to-end runs: load or simulate data, compute the trace ensemble, CUSUM
//! paths and diagnostics, then write every artifact from a single thread.
//!
//! All computation finishes before the output directory is touched, so a
//! failing run leaves no partial artifacts behind.

use crate::cusum::{cusum_path, detect_crossing, Boundary, CrossingReport, CusumError, CusumPath};
use crate::diagnostics::{classical_diagnostics, DiagnosticsReport};
use crate::engine::{trace_ensemble, EngineError, Method, TraceEnsemble};
use crate::export::{self, DeltaRow, ExportError};
use crate::io::{dataset_to_csv, load_csv, CsvOptions, IoError};
use crate::linalg::{fit_ols, Dataset, LinalgError, OlsFit};
use crate::permute::{PermutationSchedule, ScheduleRule};
use crate::plot::{self, Panel};
use crate::simgen::{simulate, ScenarioSpec, SimError};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const THREADS_ENV: &str = "RECDIAG_THREADS";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_CUSUM_ALPHA: f64 = 0.01;
const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cusum: {0}")]
    Cusum(#[from] CusumError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("export: {0}")]
    Export(#[from] ExportError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown row id `{0}`")]
    UnknownRowId(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
}

impl Error {
    /// 2 parse, 3 rank deficiency, 4 configuration, 5 numerical failure.
    pub fn exit_code(&self) -> i32 {
        fn engine(e: &EngineError) -> i32 {
            match e {
                EngineError::PrefixRankDeficient { .. } => 3,
                EngineError::InvalidTrim { .. }
                | EngineError::Schedule(_)
                | EngineError::InvalidPermutation { .. } => 4,
                EngineError::SingularInformation | EngineError::DimensionMismatch(_) => 5,
                EngineError::InPermutation { source, .. } => engine(source),
            }
        }
        fn linalg(e: &LinalgError) -> i32 {
            match e {
                LinalgError::RankDeficient { .. } => 3,
                _ => 5,
            }
        }
        match self {
            Error::Io(IoError::Read { .. }) => 4,
            Error::Io(IoError::Design(e)) => linalg(e),
            Error::Io(_) => 2,
            Error::Engine(e) => engine(e),
            Error::Cusum(CusumError::NoRoot { .. }) => 4,
            Error::Cusum(_) => 5,
            Error::Sim(SimError::Parse(_)) => 2,
            Error::Sim(SimError::Linalg(e)) | Error::Linalg(e) => linalg(e),
            Error::Sim(_) => 4,
            Error::Export(_) => 5,
            Error::Manifest(_) => 2,
            Error::Config(_) | Error::UnknownRowId(_) | Error::Write { .. } => 4,
        }
    }
}

/// Which artifact families to write. The manifest is always written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            csv: true,
            json: true,
            svg: true,
        }
    }
}

impl FromStr for Formats {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let mut f = Formats {
            csv: false,
            json: false,
            svg: false,
        };
        for part in s.split(',').map(str::trim) {
            match part {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => return Err(Error::Config(format!("unknown format `{other}`"))),
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Csv { path: PathBuf, options: CsvOptions },
    Scenario { spec: ScenarioSpec },
}

/// Everything about a run except where its data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub schedule: ScheduleRule,
    /// Seed for random permutation schedules.
    pub seed: u64,
    pub trim_alpha: f64,
    pub cusum_alpha: f64,
    pub method: Method,
    pub formats: Formats,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            schedule: ScheduleRule::Auto,
            seed: 0,
            trim_alpha: 0.0,
            cusum_alpha: DEFAULT_CUSUM_ALPHA,
            method: Method::Resolve,
            formats: Formats::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: Source,
    pub settings: RunSettings,
}

impl RunConfig {
    pub fn csv(path: impl Into<PathBuf>, options: CsvOptions) -> Self {
        RunConfig {
            source: Source::Csv {
                path: path.into(),
                options,
            },
            settings: RunSettings::default(),
        }
    }

    pub fn load(&self) -> Result<Dataset, Error> {
        Ok(match &self.source {
            Source::Csv { path, options } => load_csv(path, options)?,
            Source::Scenario { spec } => simulate(spec)?,
        })
    }
}

/// What was asked for; enough to redo it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Run {
        config: RunConfig,
    },
    Compare {
        config: RunConfig,
        drops: Vec<Vec<String>>,
    },
    Simulate {
        settings: RunSettings,
        specs: Vec<ScenarioSpec>,
    },
}

/// Resolved parameters of one analysed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Subdirectory of the output directory, empty for the root.
    pub dir: String,
    pub n: usize,
    pub p: usize,
    pub labels: Vec<String>,
    pub schedule: PermutationSchedule,
    pub permutations: usize,
    pub valid_traces: usize,
    pub first_plotted_step: usize,
    pub boundary: Boundary,
    pub leverage_threshold: Option<f64>,
    pub crossings: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub format: u32,
    pub job: Job,
    pub runs: Vec<RunRecord>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Manifest(format!(
                "unsupported manifest format {}",
                m.format
            )));
        }
        Ok(m)
    }
}

/// In-memory results for one dataset.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub data: Dataset,
    pub fit: OlsFit,
    pub ensemble: TraceEnsemble,
    pub boundary: Boundary,
    /// Indexed by `perm_id`; `None` for failed traces or when σ̂ is zero.
    pub paths: Vec<Option<CusumPath>>,
    pub crossings: Vec<CrossingReport>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub warnings: Vec<String>,
}

pub fn analyze(data: Dataset, settings: &RunSettings) -> Result<Analysis, Error> {
    let boundary = Boundary::new(settings.cusum_alpha)?;
    let schedule = settings.schedule.resolve(data.n(), settings.seed);
    let ensemble = trace_ensemble(&data, &schedule, settings.method, settings.trim_alpha)?;
    let fit = fit_ols(&data)?;
    let mut warnings = Vec::new();
    for t in ensemble.traces.iter().filter(|t| !t.is_valid()) {
        if let Some(e) = &t.failure {
            warnings.push(format!("permutation {}: {e}", t.perm_id));
        }
    }
    let sigma_hat = fit.sigma2_hat.map(f64::sqrt).filter(|s| *s > 0.0);
    if sigma_hat.is_none() {
        warnings.push("residual variance is zero or undefined; cusum paths skipped".into());
    }
    let mut paths = Vec::with_capacity(ensemble.traces.len());
    let mut crossings = Vec::new();
    for trace in &ensemble.traces {
        let path = match sigma_hat {
            Some(s) if trace.is_valid() => {
                let mut path = cusum_path(&trace.recursive_residuals(), s, data.n(), 1)?;
                path.perm_id = trace.perm_id;
                crossings.push(detect_crossing(&path, &boundary));
                Some(path)
            }
            _ => None,
        };
        paths.push(path);
    }
    let diagnostics = match classical_diagnostics(&data) {
        Ok(d) => Some(d),
        Err(e) => {
            warnings.push(format!("diagnostics skipped: {e}"));
            None
        }
    };
    Ok(Analysis {
        data,
        fit,
        ensemble,
        boundary,
        paths,
        crossings,
        diagnostics,
        warnings,
    })
}

impl Analysis {
    fn record(&self, dir: &str) -> RunRecord {
        RunRecord {
            dir: dir.into(),
            n: self.data.n(),
            p: self.data.p(),
            labels: self.data.labels().to_vec(),
            schedule: self.ensemble.schedule,
            permutations: self.ensemble.traces.len(),
            valid_traces: self.ensemble.valid_traces().count(),
            first_plotted_step: self.ensemble.first_step,
            boundary: self.boundary,
            leverage_threshold: self.diagnostics.as_ref().map(|d| d.leverage_threshold),
            crossings: self.crossings.iter().filter(|c| c.crossed).count(),
            warnings: self.warnings.clone(),
        }
    }

    fn panels(&self, color: &str, layer: &str) -> Vec<Panel> {
        let mut panels = plot::trace_panels(&self.ensemble, self.data.labels(), color, layer);
        panels.push(plot::cusum_panel(&self.paths, &self.boundary, color, layer));
        panels
    }

    fn present_paths(&self) -> Vec<CusumPath> {
        self.paths.iter().flatten().cloned().collect()
    }
}

/// File name for the `index`-th panel of a trace panel list.
fn panel_file(panel: &Panel, index: usize, p: usize, prefix: &str) -> String {
    if index < p {
        let label: String = panel.name["beta_".len()..]
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{prefix}beta{index}_{label}.svg")
    } else {
        format!("{prefix}{}.svg", panel.name)
    }
}

/// Pending output files, written together once everything is computed.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, String)>,
}

impl Outputs {
    fn add(&mut self, name: String, contents: String) {
        self.files.push((name, contents));
    }

    fn add_svgs(&mut self, dir: &str, panels: &[Panel], p: usize, prefix: &str) {
        for (i, panel) in panels.iter().enumerate() {
            self.add(join(dir, &panel_file(panel, i, p, prefix)), plot::render_panel(panel));
        }
        self.add(
            join(dir, &format!("{prefix}figure.svg")),
            plot::render_grid(panels, 2),
        );
    }

    fn add_analysis(&mut self, dir: &str, a: &Analysis, formats: Formats, color: &str, layer: &str) -> Result<(), Error> {
        let labels = a.data.labels();
        let paths = a.present_paths();
        if formats.csv {
            self.add(join(dir, "traces.csv"), export::trace_table(&a.ensemble, labels)?);
            self.add(
                join(dir, "cusum.csv"),
                export::cusum_table(&paths, &a.crossings, &a.boundary)?,
            );
            self.add(join(dir, "crossings.csv"), export::crossing_table(&a.crossings)?);
            if let Some(d) = &a.diagnostics {
                self.add(join(dir, "diagnostics.csv"), export::diagnostics_table(d)?);
            }
        }
        if formats.json {
            self.add(join(dir, "traces.json"), export::traces_json(&a.ensemble, labels)?);
            self.add(
                join(dir, "cusum.json"),
                export::cusum_json(&paths, &a.crossings, &a.boundary)?,
            );
            if let Some(d) = &a.diagnostics {
                self.add(
                    join(dir, "diagnostics.json"),
                    serde_json::to_string_pretty(d).map_err(ExportError::from)?,
                );
            }
        }
        if formats.svg {
            self.add_svgs(dir, &a.panels(color, layer), a.data.p(), "");
        }
        Ok(())
    }

    fn write(self, out: &Path, job: Job, runs: Vec<RunRecord>) -> Result<Manifest, Error> {
        let mut names: Vec<String> = self.files.iter().map(|f| f.0.clone()).collect();
        names.push(MANIFEST_FILE.into());
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            format: MANIFEST_FORMAT,
            job,
            runs,
            files: names,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(ExportError::from)? + "\n";
        for (name, contents) in self.files.iter().chain([&(MANIFEST_FILE.to_string(), text)]) {
            let path = out.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|source| Error::Write {
                    path: parent.display().to_string(),
                    source,
                })?;
            }
            fs::write(&path, contents).map_err(|source| Error::Write {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(manifest)
    }
}

fn join(dir: &str, name: &str) -> String {
    if dir.is_empty() {
        name.to_string()
    } else {
        format!("{dir}/{name}")
    }
}

/// Single dataset run.
pub fn run_pipeline(config: &RunConfig, out: &Path) -> Result<Manifest, Error> {
    let analysis = analyze(config.load()?, &config.settings)?;
    let mut outputs = Outputs::default();
    outputs.add_analysis("", &analysis, config.settings.formats, plot::SINGLE_COLOR, "full")?;
    let runs = vec![analysis.record("")];
    outputs.write(
        out,
        Job::Run {
            config: config.clone(),
        },
        runs,
    )
}

fn drop_dir(k: usize, ids: &[String]) -> String {
    let tag: String = if ids.is_empty() {
        "none".into()
    } else {
        ids.join("+")
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '+' { c } else { '_' })
            .collect()
    };
    format!("drop{}_{tag}", k + 1)
}

/// Final-fit coefficients, σ̂² and R² of two fits.
pub fn delta_rows(labels: &[String], full: &OlsFit, reduced: &OlsFit) -> Vec<DeltaRow> {
    let mut rows: Vec<DeltaRow> = labels
        .iter()
        .enumerate()
        .map(|(j, l)| DeltaRow {
            quantity: format!("beta_{l}"),
            full: Some(full.beta_hat[j]),
            reduced: Some(reduced.beta_hat[j]),
        })
        .collect();
    rows.push(DeltaRow {
        quantity: "sigma2".into(),
        full: full.sigma2_hat,
        reduced: reduced.sigma2_hat,
    });
    rows.push(DeltaRow {
        quantity: "r2".into(),
        full: full.r2,
        reduced: reduced.r2,
    });
    rows
}

/// Full-data run plus one reduced run per entry of `drops`, each with
/// overlay plots (full in red, reduced in black) and a delta table.
pub fn run_compare(config: &RunConfig, drops: &[Vec<String>], out: &Path) -> Result<Manifest, Error> {
    if drops.is_empty() {
        return Err(Error::Config("compare needs at least one drop set".into()));
    }
    let data = config.load()?;
    let mut reduced_sets = Vec::with_capacity(drops.len());
    for ids in drops {
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let i = data
                .position_of(id)
                .ok_or_else(|| Error::UnknownRowId(id.clone()))?;
            if rows.contains(&i) {
                return Err(Error::Config(format!("row id `{id}` listed twice")));
            }
            rows.push(i);
        }
        reduced_sets.push(data.without_rows(&rows)?);
    }
    let full = analyze(data, &config.settings)?;
    let reduced: Vec<Analysis> = reduced_sets
        .into_iter()
        .map(|d| analyze(d, &config.settings))
        .collect::<Result<_, _>>()?;

    let formats = config.settings.formats;
    let mut outputs = Outputs::default();
    outputs.add_analysis("full", &full, formats, plot::FULL_COLOR, "full")?;
    let mut runs = vec![full.record("full")];
    let full_panels = full.panels(plot::FULL_COLOR, "full");
    for (k, (ids, red)) in drops.iter().zip(&reduced).enumerate() {
        let dir = drop_dir(k, ids);
        outputs.add_analysis(&dir, red, formats, plot::REDUCED_COLOR, "reduced")?;
        let rows = delta_rows(full.data.labels(), &full.fit, &red.fit);
        if formats.csv {
            outputs.add(join(&dir, "delta.csv"), export::delta_table(&rows)?);
        }
        if formats.json {
            outputs.add(
                join(&dir, "delta.json"),
                serde_json::to_string_pretty(&rows).map_err(ExportError::from)?,
            );
        }
        if formats.svg {
            let merged = plot::overlay(&full_panels, &red.panels(plot::REDUCED_COLOR, "reduced"));
            outputs.add_svgs(&dir, &merged, full.data.p(), "overlay_");
        }
        runs.push(red.record(&dir));
    }
    outputs.write(
        out,
        Job::Compare {
            config: config.clone(),
            drops: drops.to_vec(),
        },
        runs,
    )
}

/// One run per scenario, each in a subdirectory named after its outlier
/// target, plus a combined figure with one column per scenario.
pub fn run_simulate(settings: &RunSettings, specs: &[ScenarioSpec], out: &Path) -> Result<Manifest, Error> {
    if specs.is_empty() {
        return Err(Error::Config("no scenarios to simulate".into()));
    }
    let mut dirs: Vec<String> = Vec::with_capacity(specs.len());
    for spec in specs {
        let base = spec.target.name().to_string();
        let mut dir = base.clone();
        let mut k = 2;
        while dirs.contains(&dir) {
            dir = format!("{base}_{k}");
            k += 1;
        }
        dirs.push(dir);
    }
    let analyses: Vec<Analysis> = specs
        .iter()
        .map(|spec| analyze(simulate(spec)?, settings))
        .collect::<Result<_, Error>>()?;

    let mut outputs = Outputs::default();
    let mut runs = Vec::new();
    let mut columns = Vec::new();
    for (dir, a) in dirs.iter().zip(&analyses) {
        outputs.add(join(dir, "data.csv"), dataset_to_csv(&a.data, "y"));
        outputs.add_analysis(dir, a, settings.formats, plot::SINGLE_COLOR, dir)?;
        runs.push(a.record(dir));
        let mut panels = plot::trace_panels(&a.ensemble, a.data.labels(), plot::SINGLE_COLOR, dir);
        for panel in &mut panels {
            panel.title = format!("{dir}: {}", panel.title);
        }
        columns.push(panels);
    }
    if settings.formats.svg {
        // rows: coefficients, then R², then σ̂²; one column per scenario
        let p = analyses[0].data.p();
        let row_order: Vec<usize> = (0..p).chain([p + 1, p]).collect();
        let grid: Vec<Panel> = row_order
            .iter()
            .flat_map(|&r| columns.iter().map(move |c| c[r].clone()))
            .collect();
        outputs.add("figure.svg".into(), plot::render_grid(&grid, columns.len()));
    }
    outputs.write(
        out,
        Job::Simulate {
            settings: settings.clone(),
            specs: specs.to_vec(),
        },
        runs,
    )
}

/// Repeats the job recorded in a manifest, writing into `out`.
pub fn rerun(manifest_path: &Path, out: &Path) -> Result<Manifest, Error> {
    let text = fs::read_to_string(manifest_path).map_err(|source| {
        Error::Io(IoError::Read {
            path: manifest_path.display().to_string(),
            source,
        })
    })?;
    match Manifest::parse(&text)?.job {
        Job::Run { config } => run_pipeline(&config, out),
        Job::Compare { config, drops } => run_compare(&config, &drops, out),
        Job::Simulate { settings, specs } => run_simulate(&settings, &specs, out),
    }
}

/// Thread cap from `RECDIAG_THREADS`; `None` when unset or empty.
pub fn thread_cap_from_env() -> Result<Option<usize>, Error> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("{THREADS_ENV}: {e}"))),
    }
}

/// Runs `f` on a pool of at most `cap` threads, or on the global pool.
pub fn with_threads<T: Send>(cap: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    match cap {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
