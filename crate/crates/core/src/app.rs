//! Batch execution: trajectory files, run summaries, trajectory comparison
//! and the inertia report.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydro::gamma_factors;
use crate::lgvi::Lgvi;
use crate::liegroup::{Configuration, Mat3, Vec3, Velocity};
use crate::model::{angular_momentum, SystemParams, SystemState};
use crate::rk::Rk;
use crate::scenario::{IntegratorSettings, Method, Scenario};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const AXES: [&str; 3] = ["x", "y", "z"];

/// Per-record solver progress: Newton iterations of the last LGVI step or
/// the last accepted RK step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Progress {
    NewtonIterations(usize),
    StepSize(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub velocity: Velocity,
    pub energy: f64,
    pub px: Vec3,
    pub p_omega_deviation: Vec3,
    pub orthogonality: Vec<f64>,
    pub progress: Progress,
    pub config: Configuration,
}

pub fn trajectory_header(num_peripherals: usize, method: Method) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    let vec3 = |h: &mut Vec<String>, name: &str| h.extend(AXES.iter().map(|a| format!("{name}_{a}")));
    vec3(&mut h, "omega0");
    vec3(&mut h, "xdot");
    for i in 1..=num_peripherals {
        vec3(&mut h, &format!("omega{i}"));
    }
    h.push("energy".into());
    vec3(&mut h, "px");
    vec3(&mut h, "dpomega");
    h.extend((0..=num_peripherals).map(|i| format!("orth{i}")));
    h.push(match method {
        Method::Lgvi => "newton_iters".into(),
        _ => "step_size".into(),
    });
    vec3(&mut h, "pos");
    for i in 0..=num_peripherals {
        for r in 1..=3 {
            for c in 1..=3 {
                h.push(format!("R{i}_{r}{c}"));
            }
        }
    }
    h
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

impl DiagnosticsRecord {
    pub fn fields(&self) -> Vec<String> {
        let mut f = vec![num(self.time)];
        f.extend(self.velocity.components().flat_map(|v| v.iter().map(|x| num(*x)).collect::<Vec<_>>()));
        f.push(num(self.energy));
        f.extend(self.px.iter().map(|x| num(*x)));
        f.extend(self.p_omega_deviation.iter().map(|x| num(*x)));
        f.extend(self.orthogonality.iter().map(|x| num(*x)));
        f.push(match self.progress {
            Progress::NewtonIterations(n) => n.to_string(),
            Progress::StepSize(h) => num(h),
        });
        f.extend(self.config.x.iter().map(|x| num(*x)));
        for r in self.config.rotations() {
            let m = r.matrix();
            for i in 0..3 {
                for j in 0..3 {
                    f.push(num(m[(i, j)]));
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub integrator: Method,
    pub steps: usize,
    pub records: usize,
    pub final_time: f64,
    pub initial_energy: f64,
    pub max_energy_deviation: f64,
    /// Largest componentwise `|p_x(t) − p_x(0)|`.
    pub max_abs_delta_px: f64,
    pub max_delta_p_omega: f64,
    pub max_orthogonality_error: f64,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_newton_iterations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejected_steps: Option<usize>,
}

/// Running maxima of the conservation diagnostics.
struct Tracker<'a> {
    params: &'a SystemParams,
    e0: f64,
    px0: Vec3,
    l0: Vec3,
    max_de: f64,
    max_dpx: f64,
    max_dl: f64,
    max_orth: f64,
}

impl<'a> Tracker<'a> {
    fn new(params: &'a SystemParams, initial: &SystemState) -> Result<Self> {
        let xi = initial.velocity(params)?;
        Ok(Tracker {
            params,
            e0: 0.5 * initial.momentum.to_vector().dot(&xi.to_vector()),
            px0: initial.momentum.px,
            l0: angular_momentum(&initial.config, &initial.momentum),
            max_de: 0.0,
            max_dpx: 0.0,
            max_dl: 0.0,
            max_orth: initial.config.max_orthogonality_error(),
        })
    }

    fn observe(&mut self, state: &SystemState, progress: Progress) -> Result<DiagnosticsRecord> {
        let velocity = state.velocity(self.params)?;
        let energy = 0.5 * state.momentum.to_vector().dot(&velocity.to_vector());
        let dl = angular_momentum(&state.config, &state.momentum) - self.l0;
        let orthogonality: Vec<f64> = state.config.rotations().map(|r| r.orthogonality_error()).collect();
        self.max_de = self.max_de.max((energy - self.e0).abs());
        self.max_dpx = self.max_dpx.max((state.momentum.px - self.px0).amax());
        self.max_dl = self.max_dl.max(dl.norm());
        self.max_orth = orthogonality.iter().fold(self.max_orth, |a, b| a.max(*b));
        Ok(DiagnosticsRecord {
            time: state.time,
            velocity,
            energy,
            px: state.momentum.px,
            p_omega_deviation: dl,
            orthogonality,
            progress,
            config: state.config.clone(),
        })
    }
}

/// Runs the scenario, streaming one CSV record per cadence tick into `sink`.
pub fn run_scenario<W: Write>(scenario: &Scenario, sink: W) -> Result<RunSummary> {
    let start = Instant::now();
    let params = &scenario.params;
    let p = params.num_peripherals();
    let h = scenario.step_size();
    let n = scenario.num_steps();
    let cadence = scenario.file.cadence;
    let method = scenario.method();

    let mut out = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(trajectory_header(p, method)).map_err(csv_err)?;

    let mut tracker = Tracker::new(params, &scenario.initial)?;
    let initial_progress = match method {
        Method::Lgvi => Progress::NewtonIterations(0),
        _ => Progress::StepSize(0.0),
    };
    let first = tracker.observe(&scenario.initial, initial_progress)?;
    out.write_record(first.fields()).map_err(csv_err)?;
    let mut records = 1;
    let mut newton_total = 0u64;
    let mut rejected = None;
    let tick = |k: usize| k % cadence == 0 || k == n;

    match scenario.settings() {
        IntegratorSettings::Lgvi(settings) => {
            let mut lgvi = Lgvi::new(params, scenario.initial.clone(), settings)?;
            for k in 1..=n {
                let mut step = lgvi.advance()?;
                newton_total += step.iterations as u64;
                // time from the step index keeps output grids identical across integrators
                step.state.time = k as f64 * h;
                let rec = tracker.observe(&step.state, Progress::NewtonIterations(step.iterations))?;
                if tick(k) {
                    out.write_record(rec.fields()).map_err(csv_err)?;
                    records += 1;
                }
            }
        }
        IntegratorSettings::Rk(settings) => {
            let mut rk = Rk::new(params, &scenario.initial, settings)?;
            for k in (1..=n).filter(|&k| tick(k)) {
                let target = k as f64 * h;
                while rk.time() < target {
                    rk.step(target)?;
                    tracker.observe(&rk.state()?, Progress::StepSize(rk.last_step_size()))?;
                }
                let rec = tracker.observe(&rk.state()?, Progress::StepSize(rk.last_step_size()))?;
                out.write_record(rec.fields()).map_err(csv_err)?;
                records += 1;
            }
            rejected = Some(rk.rejected_steps());
        }
    }
    out.flush()?;

    Ok(RunSummary {
        integrator: method,
        steps: n,
        records,
        final_time: n as f64 * h,
        initial_energy: tracker.e0,
        max_energy_deviation: tracker.max_de,
        max_abs_delta_px: tracker.max_dpx,
        max_delta_p_omega: tracker.max_dl,
        max_orthogonality_error: tracker.max_orth,
        wall_time_s: start.elapsed().as_secs_f64(),
        total_newton_iterations: (method == Method::Lgvi).then_some(newton_total),
        rejected_steps: rejected,
    })
}

/// Runs the scenario and writes `trajectory.csv` and `summary.json` into `dir`.
pub fn run_to_dir(scenario: &Scenario, dir: impl AsRef<Path>) -> Result<RunSummary> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join(TRAJECTORY_FILE))?;
    let summary = run_scenario(scenario, std::io::BufWriter::new(file))?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(dir.join(SUMMARY_FILE), json + "\n")?;
    Ok(summary)
}

/// The velocity columns of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub time: Vec<f64>,
    pub names: Vec<String>,
    /// One row of velocity components per record.
    pub rows: Vec<Vec<f64>>,
}

fn is_velocity_column(name: &str) -> bool {
    name.starts_with("omega") || name.starts_with("xdot")
}

pub fn read_trajectory<R: Read>(source: R) -> Result<TrajectoryTable> {
    let mut reader = csv::Reader::from_reader(source);
    let parse_err = |e: csv::Error| Error::Parse(e.to_string());
    let header = reader.headers().map_err(parse_err)?.clone();
    if header.get(0) != Some("time") {
        return Err(Error::Parse("trajectory must start with a 'time' column".into()));
    }
    let cols: Vec<usize> = (0..header.len()).filter(|&i| is_velocity_column(&header[i])).collect();
    let mut table = TrajectoryTable {
        time: Vec::new(),
        names: cols.iter().map(|&i| header[i].to_string()).collect(),
        rows: Vec::new(),
    };
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("record {}: bad value in column {}", line + 1, header[i].to_owned())))
        };
        table.time.push(field(0)?);
        table.rows.push(cols.iter().map(|&i| field(i)).collect::<Result<_>>()?);
    }
    Ok(table)
}

pub fn read_trajectory_file(path: impl AsRef<Path>) -> Result<TrajectoryTable> {
    let path = path.as_ref();
    read_trajectory(fs::File::open(path)?).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    /// Relative velocity difference that marks divergence.
    pub threshold: f64,
    /// Window length in seconds for the windowed statistics.
    pub window: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            threshold: 1e-3,
            window: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub name: String,
    pub max_abs: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub t_start: f64,
    pub t_end: f64,
    pub max_relative: f64,
    pub components: Vec<ComponentStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub samples: usize,
    pub threshold: f64,
    /// First time at which `‖ξ_a − ξ_b‖ / ‖ξ_b‖` exceeds the threshold.
    pub divergence_time: Option<f64>,
    pub max_relative: f64,
    pub overall: Vec<ComponentStats>,
    pub windows: Vec<WindowStats>,
    pub warnings: Vec<String>,
}

fn stats(names: &[String], diffs: &[Vec<f64>]) -> Vec<ComponentStats> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let n = diffs.len().max(1) as f64;
            ComponentStats {
                name: name.clone(),
                max_abs: diffs.iter().map(|d| d[j].abs()).fold(0.0, f64::max),
                rms: (diffs.iter().map(|d| d[j] * d[j]).sum::<f64>() / n).sqrt(),
            }
        })
        .collect()
}

fn relative(diff: &[f64], reference: &[f64]) -> f64 {
    let d = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = reference.iter().map(|x| x * x).sum::<f64>().sqrt();
    if d == 0.0 {
        0.0
    } else {
        d / r.max(f64::MIN_POSITIVE)
    }
}

/// Velocity differences `a − b` over the common prefix of two trajectories
/// written on the same output grid.
pub fn compare(a: &TrajectoryTable, b: &TrajectoryTable, options: &CompareOptions) -> Result<CompareReport> {
    if a.names != b.names {
        return Err(Error::Parse(format!(
            "trajectories have different velocity columns ({} vs {})",
            a.names.len(),
            b.names.len()
        )));
    }
    let n = a.time.len().min(b.time.len());
    let mut warnings = Vec::new();
    if a.time.len() != b.time.len() {
        warnings.push(format!(
            "trajectory lengths differ ({} vs {} records); comparing the first {n}",
            a.time.len(),
            b.time.len()
        ));
    }
    for k in 0..n {
        let (ta, tb) = (a.time[k], b.time[k]);
        if (ta - tb).abs() > 1e-9 * (1.0 + ta.abs().max(tb.abs())) {
            return Err(Error::CadenceMismatch(format!("record {k} is at t = {ta} in one file and t = {tb} in the other")));
        }
    }

    let diffs: Vec<Vec<f64>> =
        (0..n).map(|k| a.rows[k].iter().zip(&b.rows[k]).map(|(x, y)| x - y).collect()).collect();
    let rel: Vec<f64> = (0..n).map(|k| relative(&diffs[k], &b.rows[k])).collect();
    let divergence_time = (0..n).find(|&k| rel[k] > options.threshold).map(|k| a.time[k]);

    let mut windows = Vec::new();
    let mut k = 0;
    while k < n {
        let t0 = a.time[k];
        let end = (k..n).find(|&j| a.time[j] >= t0 + options.window).unwrap_or(n);
        let end = end.max(k + 1);
        windows.push(WindowStats {
            t_start: t0,
            t_end: a.time[end - 1],
            max_relative: rel[k..end].iter().fold(0.0, |m, r| m.max(*r)),
            components: stats(&a.names, &diffs[k..end]),
        });
        k = end;
    }

    Ok(CompareReport {
        samples: n,
        threshold: options.threshold,
        divergence_time,
        max_relative: rel.iter().fold(0.0, |m, r| m.max(*r)),
        overall: stats(&a.names, &diffs),
        windows,
        warnings,
    })
}

/// Per-record velocity differences `a − b`, one CSV row per common record.
pub fn write_differences<W: Write>(a: &TrajectoryTable, b: &TrajectoryTable, sink: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header = vec!["time".to_string()];
    header.extend(a.names.iter().map(|n| format!("d_{n}")));
    header.push("relative".into());
    out.write_record(&header).map_err(csv_err)?;
    for k in 0..a.time.len().min(b.time.len()) {
        let d: Vec<f64> = a.rows[k].iter().zip(&b.rows[k]).map(|(x, y)| x - y).collect();
        let mut row = vec![num(a.time[k])];
        row.extend(d.iter().map(|x| num(*x)));
        row.push(num(relative(&d, &b.rows[k])));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyInertia {
    pub name: String,
    pub semi_axes: [f64; 3],
    pub mass: f64,
    pub gamma: [f64; 3],
    pub added_mass: [[f64; 3]; 3],
    pub added_inertia: [[f64; 3]; 3],
    /// `M_i = m I + M^f`.
    pub total_mass: [[f64; 3]; 3],
    /// `J_i = J^b + J^f`.
    pub total_inertia: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaReport {
    pub bodies: Vec<BodyInertia>,
    pub jd0: [[f64; 3]; 3],
    pub jprime: Vec<[[f64; 3]; 3]>,
    pub jdi: Vec<[[f64; 3]; 3]>,
}

pub fn inertia_report(scenario: &Scenario) -> Result<InertiaReport> {
    let params = &scenario.params;
    let all = std::iter::once(&params.central).chain(&params.peripherals);
    let bodies = all
        .enumerate()
        .map(|(i, b)| {
            let name = scenario.file.bodies.get(i).and_then(|s| s.name.clone()).unwrap_or_else(|| format!("body{i}"));
            Ok(BodyInertia {
                name,
                semi_axes: b.geometry.semi_axes(),
                mass: b.mass,
                gamma: gamma_factors(&b.geometry)?,
                added_mass: rows(&b.added_mass),
                added_inertia: rows(&b.added_inertia),
                total_mass: rows(&b.total_mass_matrix),
                total_inertia: rows(&b.total_inertia),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ns = &params.nonstandard;
    Ok(InertiaReport {
        bodies,
        jd0: rows(&ns.jd0),
        jprime: ns.jprime.iter().map(rows).collect(),
        jdi: ns.jdi.iter().map(rows).collect(),
    })
}

fn write_matrix(f: &mut fmt::Formatter<'_>, label: &str, m: &[[f64; 3]; 3]) -> fmt::Result {
    for (r, row) in m.iter().enumerate() {
        let tag = if r == 0 { label } else { "" };
        writeln!(f, "  {tag:<8}[{:>11.4} {:>11.4} {:>11.4} ]", row[0], row[1], row[2])?;
    }
    Ok(())
}

impl fmt::Display for InertiaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.bodies.iter().enumerate() {
            writeln!(
                f,
                "{} (semi-axes {:?}, mass {})",
                b.name, b.semi_axes, b.mass
            )?;
            writeln!(f, "  gamma   {:.6} {:.6} {:.6}", b.gamma[0], b.gamma[1], b.gamma[2])?;
            write_matrix(f, &format!("M_{i}"), &b.total_mass)?;
            write_matrix(f, &format!("J_{i}"), &b.total_inertia)?;
            if i == 0 {
                write_matrix(f, "J_d0", &self.jd0)?;
            } else {
                write_matrix(f, &format!("J'_{i}"), &self.jprime[i - 1])?;
                write_matrix(f, &format!("J'_d{i}"), &self.jdi[i - 1])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn sphere(method: &str) -> Scenario {
        let text = format!(
            r#"{{
                "schema": "fluidchain.scenario/1",
                "bodies": [{{"semi_axes": [1, 1, 1], "mass": 2}}],
                "initial": {{"velocity": {{"omega0": [0, 0, 0], "xdot": [0, 0, 0]}}}},
                "integrator": {{"method": "{method}", "h": 0.01}},
                "duration": 0.25,
                "cadence": 10
            }}"#
        );
        parse_scenario(&text).unwrap()
    }

    #[test]
    fn header_layout() {
        let h = trajectory_header(1, Method::Lgvi);
        assert_eq!(h[0], "time");
        assert_eq!(&h[1..4], ["omega0_x", "omega0_y", "omega0_z"]);
        assert_eq!(h[10], "energy");
        assert_eq!(h[17], "orth0");
        assert_eq!(h[19], "newton_iters");
        assert_eq!(h.last().unwrap(), "R1_33");
        assert_eq!(h.len(), 1 + 9 + 1 + 3 + 3 + 2 + 1 + 3 + 18);
        assert!(trajectory_header(0, Method::Rk45).contains(&"step_size".to_string()));
    }

    #[test]
    fn zero_momentum_run_has_zero_deviations() {
        for method in ["lgvi", "rk4", "rk45"] {
            let mut buf = Vec::new();
            let s = run_scenario(&sphere(method), &mut buf).unwrap();
            assert_eq!(s.max_energy_deviation, 0.0);
            assert_eq!(s.max_abs_delta_px, 0.0);
            assert_eq!(s.max_delta_p_omega, 0.0);
            assert_eq!(s.max_orthogonality_error, 0.0);
            // ticks at steps 0, 10, 20 plus the final step 25
            assert_eq!(s.records, 4);
            let table = read_trajectory(buf.as_slice()).unwrap();
            assert_eq!(table.time, vec![0.0, 0.1, 0.2, 0.25]);
            assert!(table.rows.iter().flatten().all(|v| *v == 0.0));
        }
    }

    fn table(times: &[f64], rows: Vec<Vec<f64>>) -> TrajectoryTable {
        TrajectoryTable {
            time: times.to_vec(),
            names: vec!["omega0_x".into(), "xdot_x".into()],
            rows,
        }
    }

    #[test]
    fn identical_trajectories_compare_to_zero() {
        let a = table(&[0.0, 0.1, 0.2], vec![vec![1.0, 2.0], vec![1.5, 2.0], vec![1.0, 0.0]]);
        let r = compare(&a, &a, &CompareOptions::default()).unwrap();
        assert_eq!(r.divergence_time, None);
        assert_eq!(r.max_relative, 0.0);
        assert!(r.overall.iter().all(|c| c.max_abs == 0.0 && c.rms == 0.0));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn compare_reports_divergence_and_prefix() {
        let a = table(&[0.0, 1.0, 2.0, 3.0], vec![vec![1.0, 0.0]; 4]);
        let b = table(&[0.0, 1.0, 2.0], vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.1, 0.0]]);
        let r = compare(&a, &b, &CompareOptions { threshold: 0.01, window: 2.0 }).unwrap();
        assert_eq!(r.samples, 3);
        assert_eq!(r.divergence_time, Some(2.0));
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.windows.len(), 2);
        assert!((r.overall[0].max_abs - 0.1).abs() < 1e-12);
        assert!((r.overall[0].rms - 0.1 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cadence_mismatch_is_detected() {
        let a = table(&[0.0, 0.1], vec![vec![0.0, 0.0]; 2]);
        let b = table(&[0.0, 0.2], vec![vec![0.0, 0.0]; 2]);
        assert!(matches!(compare(&a, &b, &CompareOptions::default()), Err(Error::CadenceMismatch(_))));
    }

    #[test]
    fn inertia_report_for_a_sphere() {
        let r = inertia_report(&sphere("lgvi")).unwrap();
        assert_eq!(r.bodies.len(), 1);
        assert!((r.bodies[0].total_mass[1][1] - 3.0).abs() < 1e-10);
        let text = r.to_string();
        assert!(text.contains("M_0") && text.contains("J_d0"));
    }
}
