use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use chgrow_core::{
    convergence_study, estimate_report, holder_modulus_space, inner_product, record, run, validate_coefficient,
    CoefficientSpec, ConvergenceReport, DiagnosticsRecord, EstimateReport, Field, RunStatus, ValidationReport,
};
use serde::Serialize;

use crate::config::{RunConfig, StudyConfig, SweepConfig, VALIDATION_SAMPLES};
use crate::error::{CliError, Result};
use crate::io::{self, Failure, Manifest, OutputDir};
use crate::plot::{Chart, Series};

/// Largest tolerated `modulus - ||Du||` for the space Hölder check.
pub const HOLDER_SPACE_TOL: f64 = 1e-6;
/// Relative agreement expected between resolutions in comparisons.
pub const GRID_STABILITY_TOL: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    /// Last finite diagnostics record, also for aborted runs.
    pub final_record: Option<DiagnosticsRecord>,
    pub files: BTreeMap<String, String>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

fn mass(u: &Field) -> f64 {
    inner_product(u, &Field::pinned(u.grid(), vec![1.0; u.values().len()]).expect("same grid")).expect("same grid")
}

/// Runs one config into `out`. A numerical abort still persists the partial
/// trajectory and the forensics; it is reported through the outcome status.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let validation = cfg.gate()?;
    let u0 = cfg.initial_field()?;
    let traj = run(&u0, cfg.t_final, cfg.scheme_config(), &cfg.coefficient, cfg.variant, cfg.cadence)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut dir = OutputDir::create(out)?;
    dir.write_json(io::CONFIG_FILE, cfg)?;
    dir.write(io::DIAGNOSTICS_FILE, io::diagnostics_csv(&traj.records).as_bytes())?;
    for (k, s) in traj.states.iter().enumerate() {
        dir.write(&io::snapshot_name(k), io::snapshot_csv(&s.u).as_bytes())?;
    }
    if let Ok(report) = estimate_report(&traj) {
        dir.write_json(io::REPORT_FILE, &report)?;
    }

    let status_name = if traj.completed() { "completed" } else { "failed" };
    let mut manifest = Manifest::new("run", cfg, status_name);
    manifest.hypotheses_overridden = cfg.override_hypotheses && !validation.passed;
    manifest.hypothesis_violations = validation.violation_messages();
    manifest.initial_mass = Some(mass(&u0));
    manifest.warnings = traj.warnings.clone();

    let mut final_record = traj.records.last().copied();
    if let RunStatus::Failed { step, t, error } = &traj.status {
        let last = match &traj.last_finite {
            Some(s) => {
                dir.write(&format!("{}/last_finite.csv", io::SNAPSHOT_DIR), io::snapshot_csv(&s.u).as_bytes())?;
                Some(record(s, None, &cfg.coefficient, cfg.variant))
            }
            None => traj.records.last().copied(),
        };
        final_record = last;
        log::error!("run aborted at step {step} (t = {t}): {error}");
        manifest.failure = Some(Failure { step: *step, t: *t, error: error.to_string(), last_finite_record: last });
    }
    let files = dir.finish(manifest)?;
    Ok(RunOutcome { status: traj.status, final_record, files })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub dir: String,
    pub status: String,
    pub exit_code: i32,
    pub message: Option<String>,
    pub final_record: Option<DiagnosticsRecord>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
}

impl SweepOutcome {
    /// Worst point exit code; 0 when every point completed.
    pub fn exit_code(&self) -> i32 {
        self.points.iter().map(|p| p.exit_code).max().unwrap_or(0)
    }
}

fn run_point(sweep: &SweepConfig, index: usize, out: &Path) -> (SweepPoint, BTreeMap<String, String>) {
    let value = sweep.values[index];
    let dir = format!("point_{index:03}");
    let result = sweep.point(value).and_then(|cfg| cmd_run(&cfg, &out.join(&dir)));
    let mut point = SweepPoint {
        index,
        value,
        dir,
        status: String::new(),
        exit_code: 0,
        message: None,
        final_record: None,
    };
    match result {
        Ok(o) => {
            point.final_record = o.final_record;
            if let RunStatus::Failed { error, .. } = &o.status {
                point.status = "failed".into();
                point.exit_code = 3;
                point.message = Some(error.to_string());
            } else {
                point.status = "completed".into();
            }
            (point, o.files)
        }
        Err(e) => {
            point.status = match e {
                CliError::Config(_) | CliError::Hypothesis(_) => "rejected",
                CliError::Numerical(_) => "failed",
                CliError::Io { .. } | CliError::Data { .. } => "io_error",
            }
            .into();
            point.exit_code = e.exit_code();
            point.message = Some(e.to_string());
            (point, BTreeMap::new())
        }
    }
}

fn sweep_summary_csv(sweep: &SweepConfig, points: &[SweepPoint]) -> String {
    let param = serde_json::to_value(sweep.parameter).expect("serializable");
    let param = param.as_str().unwrap_or("value");
    let mut out = format!("point,parameter,value,status,exit_code,{}\n", DiagnosticsRecord::COLUMNS.join(","));
    for p in points {
        let tail: Vec<String> = match &p.final_record {
            Some(r) => r.as_row().iter().map(|&v| io::fmt_f64(v)).collect(),
            None => vec![String::new(); DiagnosticsRecord::COLUMNS.len()],
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.index,
            param,
            io::fmt_f64(p.value),
            p.status,
            p.exit_code,
            tail.join(",")
        ));
    }
    out
}

/// Runs every sweep point in its own directory on at most `workers`
/// threads, then collates the final records.
pub fn cmd_sweep(sweep: &SweepConfig, out: &Path, workers: usize) -> Result<SweepOutcome> {
    let mut dir = OutputDir::create(out)?;
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, sweep.values.len());
    let mut done: Vec<(SweepPoint, BTreeMap<String, String>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut mine = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        if k >= sweep.values.len() {
                            break mine;
                        }
                        mine.push(run_point(sweep, k, out));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    done.sort_by_key(|(p, _)| p.index);
    for (p, files) in &done {
        dir.adopt(&p.dir, files);
    }
    let points: Vec<SweepPoint> = done.into_iter().map(|(p, _)| p).collect();
    dir.write("summary.csv", sweep_summary_csv(sweep, &points).as_bytes())?;
    dir.write_json("points.json", &points)?;
    let failed = points.iter().any(|p| p.exit_code != 0);
    let manifest = Manifest::new("sweep", sweep, if failed { "partial" } else { "completed" });
    dir.finish(manifest)?;
    Ok(SweepOutcome { points })
}

pub fn cmd_mms(study: &StudyConfig, out: &Path) -> Result<ConvergenceReport> {
    let report = convergence_study(
        &study.manufactured,
        &study.coefficient,
        study.variant,
        &study.resolutions,
        study.t_final,
        study.forcing,
        study.scheme,
    )
    .map_err(|e| match e {
        chgrow_core::MmsError::Run { .. } | chgrow_core::MmsError::Aborted { .. } => CliError::Numerical(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    let mut dir = OutputDir::create(out)?;
    dir.write_json("convergence_report.json", &report)?;
    let mut csv = String::from("n,h,dt,error\n");
    for (r, e) in report.resolutions.iter().zip(&report.errors) {
        csv.push_str(&format!("{},{},{},{}\n", r.n, io::fmt_f64(1.0 / (r.n as f64 + 1.0)), io::fmt_f64(r.dt), io::fmt_f64(*e)));
    }
    dir.write("convergence.csv", csv.as_bytes())?;
    dir.finish(Manifest::new("mms", study, "completed"))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "WARN" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub coarse: f64,
    pub fine: f64,
    pub relative_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub runs: Vec<String>,
    pub reports: Vec<EstimateReport>,
    pub checks: Vec<Vec<Check>>,
    pub comparisons: Vec<Comparison>,
}

impl CheckSummary {
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (run, checks) in self.runs.iter().zip(&self.checks) {
            out.push(format!("run {run}"));
            out.extend(checks.iter().map(Check::line));
        }
        for c in &self.comparisons {
            let ok = c.relative_difference <= GRID_STABILITY_TOL;
            out.push(format!(
                "{} grid stability {}: {:.6e} vs {:.6e} (relative difference {:.3e})",
                if ok { "PASS" } else { "WARN" },
                c.quantity,
                c.coarse,
                c.fine,
                c.relative_difference
            ));
        }
        out
    }
}

fn estimate_checks(traj: &chgrow_core::Trajectory, r: &EstimateReport) -> Vec<Check> {
    let finite = traj.records.iter().all(DiagnosticsRecord::is_finite);
    let y0 = traj.records.first().map_or(0.0, |r| r.norm_hm1.powi(2) + r.norm_l2.powi(2));
    let mut checks = vec![
        Check::new("finite diagnostics", finite, format!("{} records", traj.records.len())),
        Check::new(
            "sup norm bounded",
            r.sup_norm_linf.is_finite(),
            format!("sup_t ||u||_inf = {:.6e}, sup_t ||Du|| = {:.6e}", r.sup_norm_linf, r.sup_grad_l2),
        ),
        Check::new(
            "space Hölder modulus <= ||Du||",
            r.holder_space_excess <= HOLDER_SPACE_TOL,
            format!("modulus {:.6e}, largest excess {:.3e}", r.holder_space_modulus, r.holder_space_excess),
        ),
        Check::new(
            "interpolation ratios bounded",
            r.nirenberg_ratio_l8.is_finite() && r.nirenberg_ratio_dl4.is_finite(),
            format!("L8 {:.6e}, DL4 {:.6e}", r.nirenberg_ratio_l8, r.nirenberg_ratio_dl4),
        ),
    ];
    match r.gronwall_margin {
        Some(m) => checks.push(Check::new(
            "Grönwall margin",
            m >= -1e-8 * y0,
            format!("fitted C2 {:.6e}, min margin {:.3e}", r.fitted_c2.unwrap_or(0.0), m),
        )),
        None => checks.push(Check::new("Grönwall margin", true, "not enough records, skipped".into())),
    }
    checks
}

fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn compare(a: &EstimateReport, b: &EstimateReport) -> Vec<Comparison> {
    let mut q = vec![
        ("sup_norm_linf", a.sup_norm_linf, b.sup_norm_linf),
        ("sup_grad_l2", a.sup_grad_l2, b.sup_grad_l2),
        ("nirenberg_ratio_L8", a.nirenberg_ratio_l8, b.nirenberg_ratio_l8),
        ("nirenberg_ratio_DL4", a.nirenberg_ratio_dl4, b.nirenberg_ratio_dl4),
        ("holder_space_modulus", a.holder_space_modulus, b.holder_space_modulus),
    ];
    if let (Some(x), Some(y)) = (a.holder_time_modulus, b.holder_time_modulus) {
        q.push(("holder_time_modulus", x, y));
    }
    if let (Some(x), Some(y)) = (a.fitted_c2, b.fitted_c2) {
        q.push(("fitted_C2", x, y));
    }
    for (k, x) in &a.integrated_dissipation {
        if let Some(y) = b.integrated_dissipation.get(k) {
            q.push((k.as_str(), *x, *y));
        }
    }
    q.into_iter()
        .map(|(name, x, y)| Comparison {
            quantity: name.to_string(),
            coarse: x,
            fine: y,
            relative_difference: relative_difference(x, y),
        })
        .collect()
}

/// Recomputes the estimate report of each run directory; with two or more
/// runs, consecutive pairs are compared.
pub fn cmd_check_estimates(dirs: &[PathBuf], out: &Path) -> Result<CheckSummary> {
    let mut summary = CheckSummary { runs: Vec::new(), reports: Vec::new(), checks: Vec::new(), comparisons: Vec::new() };
    for d in dirs {
        let (_, traj) = io::load_run(d)?;
        let report = estimate_report(&traj).map_err(|e| CliError::data(d, e.to_string()))?;
        summary.checks.push(estimate_checks(&traj, &report));
        summary.runs.push(d.display().to_string());
        summary.reports.push(report);
    }
    for w in summary.reports.windows(2) {
        summary.comparisons.extend(compare(&w[0], &w[1]));
    }
    let mut dir = OutputDir::create(out)?;
    for (k, r) in summary.reports.iter().enumerate() {
        dir.write_json(&format!("estimate_report_{k:02}.json"), r)?;
    }
    dir.write_json("checks.json", &summary.checks)?;
    if !summary.comparisons.is_empty() {
        dir.write_json("comparison.json", &summary.comparisons)?;
    }
    dir.write("summary.txt", (summary.lines().join("\n") + "\n").as_bytes())?;
    dir.finish(Manifest::new("check-estimates", &summary.runs, "completed"))?;
    Ok(summary)
}

/// Norm time series and final profile of the first run directory, plus the
/// largest space Hölder modulus against `h` over all given runs.
pub fn cmd_plot(dirs: &[PathBuf], out: &Path) -> Result<Vec<String>> {
    let first = dirs.first().ok_or_else(|| CliError::Config("plot needs at least one run directory".into()))?;
    let records = io::read_diagnostics(&first.join(io::DIAGNOSTICS_FILE))?;
    if records.is_empty() {
        return Err(CliError::data(&first.join(io::DIAGNOSTICS_FILE), "no recorded states"));
    }
    let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
    let series = |name: &str, f: fn(&DiagnosticsRecord) -> f64| Series {
        name: name.into(),
        xs: ts.clone(),
        ys: records.iter().map(f).collect(),
    };
    let norms = Chart {
        title: "Norms".into(),
        x_label: "t".into(),
        y_label: "norm".into(),
        log_y: true,
        markers: false,
        series: vec![
            series("L2", |r| r.norm_l2),
            series("Linf", |r| r.norm_linf),
            series("H-1", |r| r.norm_hm1),
            series("grad L2", |r| r.grad_l2),
        ],
    };

    let snaps = io::snapshot_paths(first)?;
    let last = snaps.last().ok_or_else(|| CliError::data(&first.join(io::SNAPSHOT_DIR), "no snapshots"))?;
    let profile_vals = io::read_snapshot(last)?;
    let n = profile_vals.len();
    let h = 1.0 / (n as f64 + 1.0);
    let mut xs = vec![0.0];
    xs.extend((1..=n).map(|i| i as f64 * h));
    xs.push(1.0);
    let mut ys = vec![0.0];
    ys.extend(&profile_vals);
    ys.push(0.0);
    let profile = Chart {
        title: format!("Profile at t = {:.6e}", records.last().map_or(0.0, |r| r.t)),
        x_label: "x".into(),
        y_label: "u".into(),
        log_y: false,
        markers: false,
        series: vec![Series { name: "u".into(), xs, ys }],
    };

    let mut hs = Vec::new();
    let mut moduli = Vec::new();
    for d in dirs {
        let (_, traj) = io::load_run(d)?;
        let m = traj
            .states
            .iter()
            .map(|s| holder_modulus_space(&s.u, 0.5))
            .try_fold(0.0_f64, |acc, m| m.map(|m| acc.max(m)))
            .map_err(|e| CliError::data(d, e.to_string()))?;
        hs.push(traj.grid().h());
        moduli.push(m);
    }
    let holder = Chart {
        title: "Space Hölder modulus (exponent 1/2) vs h".into(),
        x_label: "h".into(),
        y_label: "max over snapshots".into(),
        log_y: false,
        markers: true,
        series: vec![Series { name: "modulus".into(), xs: hs, ys: moduli }],
    };

    let mut dir = OutputDir::create(out)?;
    let mut written = Vec::new();
    for (name, chart) in [("norms.svg", norms), ("profile.svg", profile), ("holder_refinement.svg", holder)] {
        dir.write(name, chart.to_svg().as_bytes())?;
        written.push(name.to_string());
    }
    let runs: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
    dir.finish(Manifest::new("plot", &runs, "completed"))?;
    Ok(written)
}

/// Validates a coefficient given either as a bare spec or inside a run
/// config.
pub fn cmd_validate_coeff(path: &Path, range: Option<[f64; 2]>, samples: Option<usize>) -> Result<ValidationReport> {
    let value: serde_json::Value = crate::config::read_json(path)?;
    let (spec_value, doc_range) = match value.get("coefficient") {
        Some(c) => {
            let r = value.get("validation_range").and_then(|r| serde_json::from_value::<[f64; 2]>(r.clone()).ok());
            (c.clone(), r)
        }
        None => (value, None),
    };
    let spec: CoefficientSpec =
        serde_json::from_value(spec_value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let [lo, hi] = range.or(doc_range).unwrap_or([-10.0, 10.0]);
    validate_coefficient(&spec, (lo, hi), samples.unwrap_or(VALIDATION_SAMPLES)).map_err(|e| CliError::Config(e.to_string()))
}
