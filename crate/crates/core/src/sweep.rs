//! Subcommand orchestration: resolve the configuration, fan sweep points
//! out over the worker pool, write CSV/SVG artifacts atomically, and close
//! every run with a digest-carrying manifest.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::detection::{
    assemble, free_dynamics, no_detection_series, single_shot_probability, survival_series,
    transition_point, DetectionConfig,
};
use crate::error::{Error, Result};
use crate::fock::FockSector;
use crate::krylov::{arnoldi_leading, ArnoldiOptions, SpectralEstimate};
use crate::operators::{
    build_h1, build_hamiltonian, projector_mask, HamiltonianParams, SparseOperator,
};
use crate::plot::{plot_kind, render_svg};
use crate::spectra::{diagonalize_sector, vvpt_gap, FilterSpec, VvptGapTable, DEGENERACY_THRESHOLD};
use crate::trajectories::trajectory_ensemble;

/// Where a run writes and which seed drives it.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub threads: usize,
}

#[derive(Serialize)]
struct OutputNote {
    file: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct FailureNote {
    point: String,
    error: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    master_seed: u64,
    threads: usize,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    config: BTreeMap<String, String>,
    results: BTreeMap<String, String>,
    failures: Vec<FailureNote>,
    outputs: Vec<OutputNote>,
}

/// Collects artifacts and closes the run with a manifest.
struct Sink {
    out_dir: PathBuf,
    started_unix_ms: u128,
    outputs: Vec<OutputNote>,
    failures: Vec<FailureNote>,
    results: BTreeMap<String, String>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl Sink {
    fn new(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            started_unix_ms: now_ms(),
            outputs: Vec::new(),
            failures: Vec::new(),
            results: BTreeMap::new(),
        })
    }

    /// Atomic write: temp file in the same directory, then rename.
    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        let tmp = self.out_dir.join(format!(".{name}.tmp"));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(content.as_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
        self.outputs.push(OutputNote {
            file: name.to_string(),
            sha256: hex_digest(content.as_bytes()),
            bytes: content.len() as u64,
        });
        Ok(())
    }

    fn note_failure(&mut self, point: String, error: &Error) {
        self.failures.push(FailureNote {
            point,
            error: error.to_string(),
        });
    }

    fn finish(mut self, subcommand: &str, config: &Config, ctx: &RunContext) -> Result<()> {
        let failed = self.failures.len();
        let total_points = self.results.remove("__points__");
        let manifest = Manifest {
            tool: "qmbdp",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            master_seed: ctx.master_seed,
            threads: ctx.threads,
            started_unix_ms: self.started_unix_ms,
            finished_unix_ms: now_ms(),
            config: config.manifest_view(),
            results: self.results.clone(),
            failures: std::mem::take(&mut self.failures),
            outputs: std::mem::take(&mut self.outputs),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.out_dir.join("manifest.json");
        let tmp = self.out_dir.join(".manifest.json.tmp");
        std::fs::write(&tmp, format!("{json}\n"))?;
        std::fs::rename(&tmp, &path)?;
        if failed > 0 {
            let total = total_points
                .and_then(|s| s.parse::<usize>().ok())
                .unwrap_or(failed);
            return Err(Error::SweepFailures { failed, total });
        }
        Ok(())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Detection configuration shared by all sweep points; Δ is substituted per
/// point.
fn detection_template(config: &Config, master_seed: u64) -> Result<DetectionConfig> {
    let n_sites = config.get_usize("system.sites", 14)?;
    let j = config.get_f64("ham.j", 1.0)?;
    if j != 1.0 {
        return Err(Error::Validation(
            "all energies are expressed in units of the hopping J; ham.j documents that \
             convention and must stay 1.0"
                .into(),
        ));
    }
    let template = DetectionConfig {
        n_sites,
        params: HamiltonianParams {
            hopping: 1.0,
            interaction: config.get_f64("ham.delta", 1.0)?,
            impurity: config.get_f64("ham.epsilon0", 0.5)?,
            boundary_hop: true,
        },
        detector_p: config.get_i64("detect.p", 3)?,
        detector_q: config.get_i64("detect.q", 5)?,
        tau: config.get_f64("detect.tau", 2.0)?,
        steps: config.get_usize("detect.steps", 1000)?,
        filter: FilterSpec {
            energy: config.get_filter_energy("filter.energy")?,
            sigma: config.get_f64("filter.sigma", 0.1)?,
            seed: config.get_u64("filter.seed", master_seed)?,
        },
        cheb_tol: config.get_f64("cheb.tol", 1e-12)?,
    };
    template.validate()?;
    Ok(template)
}

fn arnoldi_options(config: &Config, master_seed: u64) -> Result<ArnoldiOptions> {
    Ok(ArnoldiOptions {
        krylov_dim: config.get_usize("arnoldi.dim", 30)?,
        max_restarts: config.get_usize("arnoldi.restarts", 50)?,
        tol: config.get_f64("arnoldi.tol", 1e-8)?,
        stall_cycles: config.get_usize("arnoldi.stall", 5)?,
        seed: master_seed,
    })
}

fn with_delta(template: &DetectionConfig, delta: f64) -> DetectionConfig {
    let mut c = template.clone();
    c.params.interaction = delta;
    c
}

fn sweep_deltas(config: &Config) -> Result<Vec<f64>> {
    config.get_f64_list("sweep.deltas", "0.5,0.75,0.9,1.0,1.1,1.25,1.5,2.0")
}

/// Run one closure per Δ on the worker pool, preserving grid order.
fn sweep_map<T, F>(deltas: &[f64], f: F) -> Vec<(f64, Result<T>)>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
{
    deltas
        .par_iter()
        .map(|&delta| (delta, f(delta)))
        .collect()
}

fn lambda1_for(config: &DetectionConfig, opts: &ArnoldiOptions) -> Result<SpectralEstimate> {
    let run = assemble(config)?;
    arnoldi_leading(
        |psi| crate::detection::apply_mq(&run.plan, &run.hamiltonian, &run.q_mask, psi),
        run.sector.dim(),
        &run.q_mask,
        opts,
    )
}

pub fn execute(subcommand: &str, config: &Config, ctx: &RunContext) -> Result<()> {
    config.reject_unknown_keys()?;
    let mut sink = Sink::new(&ctx.out_dir)?;
    match subcommand {
        "gaps" => cmd_gaps(config, ctx, &mut sink)?,
        "lambda1" => cmd_lambda1(config, ctx, &mut sink)?,
        "rn" => cmd_rn(config, ctx, &mut sink)?,
        "dynamics" => cmd_dynamics(config, ctx, &mut sink)?,
        "trajectory" => cmd_trajectory(config, ctx, &mut sink)?,
        "singleshot" => cmd_singleshot(config, ctx, &mut sink)?,
        "transition" => cmd_transition(config, ctx, &mut sink)?,
        "opdump" => cmd_opdump(config, ctx, &mut sink)?,
        other => {
            return Err(Error::Validation(format!(
                "unknown subcommand `{other}`"
            )))
        }
    }
    sink.finish(subcommand, config, ctx)
}

/// Standalone plot entry: CSV in, SVG out, with its own manifest.
pub fn execute_plot(
    input: &Path,
    kind_name: &str,
    out_file: Option<&Path>,
    config: &Config,
    ctx: &RunContext,
) -> Result<()> {
    config.reject_unknown_keys()?;
    let kind = plot_kind(kind_name)?;
    let floor = config.get_f64("plot.floor", 1e-30)?;
    let csv = std::fs::read_to_string(input)?;
    let svg = render_svg(&csv, kind, floor)?;
    let name = match out_file {
        Some(p) => p
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Validation("output path has no file name".into()))?,
        None => {
            let stem = input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "plot".into());
            format!("{stem}.svg")
        }
    };
    let mut sink = Sink::new(&ctx.out_dir)?;
    sink.write(&name, &svg)?;
    sink.finish("plot", config, ctx)
}

fn record_points(sink: &mut Sink, n: usize) {
    sink.results.insert("__points__".into(), n.to_string());
}

fn cmd_gaps(config: &Config, ctx: &RunContext, sink: &mut Sink) -> Result<()> {
    let template = detection_template(config, ctx.master_seed)?;
    let deltas = sweep_deltas(config)?;
    record_points(sink, deltas.len());
    let n_sites = template.n_sites;
    let sector = FockSector::half_filling(n_sites)?;
    let rc = sector.right_count();
    let results = sweep_map(&deltas, |delta| -> Result<VvptGapTable> {
        let params = with_delta(&template, delta).params;
        let h0 = build_hamiltonian(&sector, &params.without_boundary_hop())?;
        let h1 = build_h1(&sector, &params)?;
        let r0 = diagonalize_sector(&h0, &rc, 0)?;
        let r1 = diagonalize_sector(&h0, &rc, 1)?;
        let r2 = diagonalize_sector(&h0, &rc, 2)?;
        vvpt_gap(&r0, &r1, &r2, &h1, DEGENERACY_THRESHOLD * params.hopping)
    });
    let mut summary = String::from("delta,g_alpha1,g_alpha_mid,alpha_mid,flagged_count\n");
    for (delta, result) in results {
        match result {
            Ok(table) => {
                let mut csv = Vec::new();
                table.write_csv(&mut csv)?;
                sink.write(
                    &format!("gaps_delta_{delta}.csv"),
                    &String::from_utf8(csv).expect("ascii"),
                )?;
                let flagged = table.flagged.iter().filter(|&&f| f).count();
                summary.push_str(&format!(
                    "{},{},{},{},{}\n",
                    delta, table.gaps[1], table.gaps[table.alpha_mid], table.alpha_mid, flagged
                ));
            }
            Err(e) => sink.note_failure(format!("delta={delta}"), &e),
        }
    }
    sink.write("gaps_summary.csv", &summary)
}

fn cmd_lambda1(config: &Config, ctx: &RunContext, sink: &mut Sink) -> Result<()> {
    let template = detection_template(config, ctx.master_seed)?;
    let opts = arnoldi_options(config, ctx.master_seed)?;
    let deltas = sweep_deltas(config)?;
    record_points(sink, deltas.len());
    let results = sweep_map(&deltas, |delta| {
        lambda1_for(&with_delta(&template, delta), &opts)
    });
    let mut csv = String::from("delta,tau,lambda1,theta1,converged,restarts,residual\n");
    for (delta, result) in results {
        match result {
            Ok(est) => csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                delta, template.tau, est.lambda1, est.theta1, est.converged, est.restarts,
                est.residual
            )),
            Err(e) => sink.note_failure(format!("delta={delta}"), &e),
        }
    }
    sink.write("lambda1.csv", &csv)
}

fn cmd_rn(config: &Config, ctx: &RunContext, sink: &mut Sink) -> Result<()> {
    let template = detection_template(config, ctx.master_seed)?;
    let with_lambda = config.get_bool("rn.with_lambda1", false)?;
    let opts = arnoldi_options(config, ctx.master_seed)?;
    let deltas = sweep_deltas(config)?;
    record_points(sink, deltas.len());
    type RnPoint = (crate::detection::DetectionSeries, Option<SpectralEstimate>);
    let results = sweep_map(&deltas, |delta| -> Result<RnPoint> {
        let point = with_delta(&template, delta);
        let run = assemble(&point)?;
        let series = survival_series(
            &run.plan,
            &run.hamiltonian,
            &run.q_mask,
            &run.initial,
            point.steps,
        )?;
        let est = if with_lambda {
            Some(arnoldi_leading(
                |psi| crate::detection::apply_mq(&run.plan, &run.hamiltonian, &run.q_mask, psi),
                run.sector.dim(),
                &run.q_mask,
                &opts,
            )?)
        } else {
            None
        };
        Ok((series, est))
    });
    let mut summary = String::from(if with_lambda {
        "delta,r_n,log10_r_n,t_n,lambda1,lambda1_converged\n"
    } else {
        "delta,r_n,log10_r_n,t_n\n"
    });
    for (delta, result) in results {
        match result {
            Ok((series, est)) => {
                let mut rows = String::from("k,r_k,t_k,log10_r_k\n");
                for k in 0..series.len() {
                    rows.push_str(&format!(
                        "{},{},{},{}\n",
                        k,
                        series.r(k),
                        series.t(k),
                        series.log10_r(k)
                    ));
                }
                sink.write(&format!("rn_series_delta_{delta}.csv"), &rows)?;
                let n = series.len() - 1;
                match est {
                    Some(est) => summary.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        delta,
                        series.r(n),
                        series.log10_r(n),
                        series.t(n),
                        est.lambda1,
                        est.converged
                    )),
                    None => summary.push_str(&format!(
                        "{},{},{},{}\n",
                        delta,
                        series.r(n),
                        series.log10_r(n),
                        series.t(n)
                    )),
                }
            }
            Err(e) => sink.note_failure(format!("delta={delta}"), &e),
        }
    }
    sink.write("rn_sweep.csv", &summary)
}

fn cmd_dynamics(config: &Config, ctx: &RunContext, sink: &mut Sink) -> Result<()> {
    let template = detection_template(config, ctx.master_seed)?;
    let t_max = config.get_f64("dynamics.t_max", 2000.0)?;
    let samples = config.get_usize("dynamics.samples", 100)?;
    let site = config.get_i64("dynamics.site", template.detector_p)?;
    if !(t_max > 0.0) || samples < 2 {
        return Err(Error::Validation(
            "dynamics needs t_max > 0 and at least 2 samples".into(),
        ));
    }
    let times: Vec<f64> = (0..samples)
        .map(|k| t_max * k as f64 / (samples - 1) as f64)
        .collect();
    let deltas = sweep_deltas(config)?;
    record_points(sink, deltas.len());
    let results = sweep_map(&deltas, |delta| {
        free_dynamics(&with_delta(&template, delta), &times, &[site])
    });
    for (delta, result) in results {
        match result {
            Ok(dynamics) => {
                let mut rows = String::from("t,n_r,n_site,pq_prob\n");
                for (k, &t) in dynamics.times.iter().enumerate() {
                    rows.push_str(&format!(
                        "{},{},{},{}\n",
                        t,
                        dynamics.right_count[k],
                        dynamics.site_occupation[0][k],
                        dynamics.joint_detector[k]
                    ));
                }
                sink.write(&format!("dynamics_delta_{delta}.csv"), &rows)?;
            }
            Err(e) => sink.note_failure(format!("delta={delta}"), &e),
        }
    }
    Ok(())
}

fn cmd_trajectory(config: &Config, ctx: &RunContext, sink: &mut Sink) -> Result<()> {
    let template = detection_template(config, ctx.master_seed)?;
    let count = config.get_usize("trajectory.count", 4)?;
    let click_times = config.get_bool("trajectory.click_times", false)?;
    let deltas = sweep_deltas(config)?;
    record_points(sink, deltas.len());
    let results = sweep_map(&deltas, |delta| {
        trajectory_ensemble(&with_delta(&template, delta), count, ctx.master_seed)
    });
    let mut rows = String::from("delta,trajectory_index,stream,clicks\n");
    let mut clicks_rows = String::from("delta,trajectory_index,step\n");
    for (delta, result) in results {
        match result {
            Ok((records, summary)) => {
                for record in &records {
                    match record {
                        Ok(r) => {
                            rows.push_str(&format!(
                                "{},{},{},{}\n",
                                delta, r.index, r.stream, r.clicks
                            ));
                            for &step in &r.click_steps {
                                clicks_rows.push_str(&format!("{},{},{}\n", delta, r.index, step));
                            }
                        }
                        Err(e) => sink.note_failure(format!("delta={delta}"), e),
                    }
                }
                println!(
                    "delta={delta}: mean C = {}, P(C=0) = {}",
                    summary.mean_clicks, summary.p_no_click
                );
            }
            Err(e) => sink.note_failure(format!("delta={delta}"), &e),
        }
    }
    sink.write("trajectories.csv", &rows)?;
    if click_times {
        sink.write("click_times.csv", &clicks_rows)?;
    }
    Ok(())
}

fn cmd_singleshot(config: &Config, ctx: &RunContext, sink: &mut Sink) -> Result<()> {
    let template = detection_template(config, ctx.master_seed)?;
    let t = config.get_f64("singleshot.time", 2000.0)?;
    let deltas = sweep_deltas(config)?;
    record_points(sink, deltas.len());
    let results = sweep_map(&deltas, |delta| {
        single_shot_probability(&with_delta(&template, delta), t)
    });
    let mut csv = String::from("delta,pq_prob\n");
    for (delta, result) in results {
        match result {
            Ok(v) => csv.push_str(&format!("{delta},{v}\n")),
            Err(e) => sink.note_failure(format!("delta={delta}"), &e),
        }
    }
    sink.write("singleshot.csv", &csv)
}

fn cmd_transition(config: &Config, ctx: &RunContext, sink: &mut Sink) -> Result<()> {
    let template = detection_template(config, ctx.master_seed)?;
    let epsilon = config.get_f64("transition.epsilon", 1e-5)?;
    let deltas = sweep_deltas(config)?;
    record_points(sink, deltas.len());
    let results = sweep_map(&deltas, |delta| {
        no_detection_series(&with_delta(&template, delta))
    });
    let mut csv = String::from("delta,r_n,log10_r_n,above_epsilon\n");
    let mut sweep: Vec<(f64, f64)> = Vec::new();
    for (delta, result) in results {
        match result {
            Ok(series) => {
                let r_n = series.r_final();
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    delta,
                    r_n,
                    series.log10_r_final(),
                    r_n > epsilon
                ));
                sweep.push((delta, r_n));
            }
            Err(e) => sink.note_failure(format!("delta={delta}"), &e),
        }
    }
    sink.write("transition.csv", &csv)?;
    if !sweep.is_empty() {
        let star = transition_point(&sweep, epsilon)?;
        let value = match star {
            Some(delta) => format!("{delta}"),
            None => "none".to_string(),
        };
        println!("delta_star = {value} (epsilon = {epsilon})");
        sink.results.insert("delta_star".into(), value);
        sink.results.insert("epsilon".into(), format!("{epsilon}"));
    }
    Ok(())
}

fn cmd_opdump(config: &Config, ctx: &RunContext, sink: &mut Sink) -> Result<()> {
    let template = detection_template(config, ctx.master_seed)?;
    let kind = config.get_str("opdump.kind", "h");
    let sector = FockSector::half_filling(template.n_sites)?;
    let op: SparseOperator = match kind.as_str() {
        "h" => build_hamiltonian(&sector, &template.params)?,
        "h0" => build_hamiltonian(&sector, &template.params.without_boundary_hop())?,
        "h1" => build_h1(&sector, &template.params)?,
        "spin" => crate::operators::build_spin_equivalent(&sector, &template.params)?,
        other => {
            return Err(Error::Validation(format!(
                "opdump.kind must be h, h0, h1 or spin, got `{other}`"
            )))
        }
    };
    let mut buf = Vec::new();
    op.write_triplets(&mut buf)?;
    record_points(sink, 1);
    sink.write(
        &format!("operator_{kind}.txt"),
        &String::from_utf8(buf).expect("ascii"),
    )?;
    // the projector masks document which states the detectors select
    let p_mask = projector_mask(&sector, &[template.detector_p, template.detector_q])?;
    sink.results
        .insert("signal_subspace_dim".into(), p_mask.ones().to_string());
    sink.results
        .insert("dimension".into(), sector.dim().to_string());
    Ok(())
}
