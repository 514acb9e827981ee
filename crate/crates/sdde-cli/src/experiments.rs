//! Experiment drivers: each takes a validated config, runs the library, and
//! leaves artifacts in the output directory. Drivers return the list of
//! files they wrote so the manifest can record it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sdde_core::diagnostics::{absorbing_radius, fit_decay, pair_separation, DecayFit, Quantity};
use sdde_core::dimension::{box_counting, default_eps_ladder, sample_attractor, CloudMeta, PointCloud};
use sdde_core::history::{format_g17, HistorySegment};
use sdde_core::integrator::{integrate, integrate_from, TrajectoryRecord};
use sdde_core::SpectralState;

use crate::config::{ExperimentBlock, ExperimentConfig, InitialBlock};

pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out: &'a Path,
}

impl RunContext<'_> {
    fn wants_csv(&self) -> bool {
        self.cfg.output.wants("csv")
    }

    fn wants_json(&self) -> bool {
        self.cfg.output.wants("json")
    }
}

/// History of the form `phi(theta) = a + b theta`, the shape every
/// config-described initial condition reduces to.
pub struct AffineInitial {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl AffineInitial {
    pub fn eval(&self, theta: f64) -> SpectralState {
        let coeffs = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(x, y)| x + y * theta)
            .collect();
        SpectralState::new(coeffs, theta)
    }
}

pub fn build_initial(
    block: &InitialBlock,
    m: usize,
    rng: &mut Option<ChaCha8Rng>,
) -> Result<AffineInitial> {
    let padded = |v: &[f64]| {
        let mut out = v.to_vec();
        out.resize(m, 0.0);
        out
    };
    Ok(match block {
        InitialBlock::Zero => AffineInitial {
            a: vec![0.0; m],
            b: vec![0.0; m],
        },
        InitialBlock::Modes { coeffs, slope } => AffineInitial {
            a: padded(coeffs),
            b: padded(slope),
        },
        InitialBlock::Random { amplitude } => {
            let rng = rng
                .as_mut()
                .context("random initial data need a seed (validated earlier)")?;
            let amp = *amplitude;
            AffineInitial {
                a: (0..m).map(|_| rng.gen_range(-amp..amp)).collect(),
                b: vec![0.0; m],
            }
        }
    })
}

fn create(out: &Path, name: &str, artifacts: &mut Vec<String>) -> Result<BufWriter<File>> {
    let path = out.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    artifacts.push(name.to_string());
    Ok(BufWriter::new(file))
}

fn write_json(out: &Path, name: &str, value: &impl Serialize, artifacts: &mut Vec<String>) -> Result<()> {
    let mut w = create(out, name, artifacts)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn write_trajectory(
    ctx: &RunContext,
    traj: &TrajectoryRecord,
    stem: &str,
    artifacts: &mut Vec<String>,
) -> Result<()> {
    if ctx.wants_csv() {
        let name = format!("{stem}.csv");
        traj.write_diag_csv(create(ctx.out, &name, artifacts)?)?;
        if traj.states.is_some() {
            let name = format!("{stem}_states.csv");
            traj.write_states_csv(create(ctx.out, &name, artifacts)?)?;
        }
    }
    Ok(())
}

/// The restart dump is plumbing, not a report, so it ignores the format
/// toggles: without it a run cannot be resumed.
fn write_checkpoint(ctx: &RunContext, traj: &TrajectoryRecord, artifacts: &mut Vec<String>) -> Result<()> {
    traj.final_history
        .write_csv(create(ctx.out, "checkpoint.csv", artifacts)?)?;
    Ok(())
}

pub fn run_experiment(ctx: &RunContext) -> Result<Vec<String>> {
    match &ctx.cfg.experiment {
        ExperimentBlock::Simulate { .. } => simulate(ctx),
        ExperimentBlock::Pair { .. } => pair(ctx),
        ExperimentBlock::Dissipativity { .. } => dissipativity(ctx),
        ExperimentBlock::Dimension { .. } => dimension(ctx),
        ExperimentBlock::Validate { .. } => validate(ctx),
    }
}

fn simulate(ctx: &RunContext) -> Result<Vec<String>> {
    let ExperimentBlock::Simulate { initial, seed } = &ctx.cfg.experiment else {
        unreachable!()
    };
    let spec = ctx.cfg.build_model()?;
    let icfg = ctx.cfg.build_integrator()?;
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let init = build_initial(initial, spec.order(), &mut rng)?;

    let traj = integrate(&spec, |th| init.eval(th), &icfg)?;

    let mut artifacts = Vec::new();
    write_trajectory(ctx, &traj, "trajectory", &mut artifacts)?;
    write_checkpoint(ctx, &traj, &mut artifacts)?;
    let last = traj.rows.last().context("empty trajectory")?;
    println!(
        "simulate: reached t = {} in {} recorded rows, |u|_H = {:.6e}",
        last.t,
        traj.rows.len(),
        last.norm_h
    );
    Ok(artifacts)
}

fn pair(ctx: &RunContext) -> Result<Vec<String>> {
    let ExperimentBlock::Pair {
        initial,
        direction,
        delta,
        beta,
        seed,
    } = &ctx.cfg.experiment
    else {
        unreachable!()
    };
    let spec = ctx.cfg.build_model()?;
    let icfg = ctx.cfg.build_integrator()?;
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let init = build_initial(initial, spec.order(), &mut rng)?;

    let mut unit = direction.clone();
    unit.resize(spec.order(), 0.0);
    let scale = unit.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in &mut unit {
        *c /= scale;
    }
    let report = pair_separation(
        &spec,
        |th| init.eval(th),
        |th| init.eval(th).add_scaled(&SpectralState::new(unit.clone(), th), *delta),
        &icfg,
        *beta,
    )?;

    let mut artifacts = Vec::new();
    if ctx.wants_csv() {
        let mut w = create(ctx.out, "separation.csv", &mut artifacts)?;
        writeln!(w, "t,cl_dist,weak_term,h12_dist")?;
        for i in 0..report.times.len() {
            writeln!(
                w,
                "{},{},{},{}",
                format_g17(report.times[i]),
                format_g17(report.cl_dist[i]),
                format_g17(report.weak_term[i]),
                format_g17(report.h12_dist[i]),
            )?;
        }
    }
    if ctx.wants_json() {
        write_json(ctx.out, "separation.json", &report, &mut artifacts)?;
    }
    println!(
        "pair: delta = {delta:.3e}, fitted C = {:.6e}, rate = {:.6e}",
        report.fitted_c, report.fitted_rate
    );
    Ok(artifacts)
}

#[derive(Serialize)]
struct DissipativityRun {
    initial_index: usize,
    r_star: f64,
    t_entry: f64,
    fit: Option<DecayFit>,
    fit_error: Option<String>,
}

#[derive(Serialize)]
struct DissipativityReport<'a> {
    quantity: &'a str,
    tail_fraction: f64,
    tol: f64,
    runs: Vec<DissipativityRun>,
}

fn dissipativity(ctx: &RunContext) -> Result<Vec<String>> {
    let ExperimentBlock::Dissipativity {
        initials,
        quantity,
        tail_fraction,
        tol,
        fit_window,
        seed,
    } = &ctx.cfg.experiment
    else {
        unreachable!()
    };
    let spec = ctx.cfg.build_model()?;
    let icfg = ctx.cfg.build_integrator()?;
    let q = Quantity::parse(quantity)?;
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);

    let mut artifacts = Vec::new();
    let mut runs = Vec::new();
    for (i, block) in initials.iter().enumerate() {
        let init = build_initial(block, spec.order(), &mut rng)?;
        let traj = integrate(&spec, |th| init.eval(th), &icfg)
            .with_context(|| format!("initials[{i}]"))?;
        write_trajectory(ctx, &traj, &format!("trajectory_{:02}", i + 1), &mut artifacts)?;

        let ball = absorbing_radius(&traj, q, *tail_fraction, *tol)?;
        let (fit, fit_error) = match fit_window {
            None => (None, None),
            Some([a, b]) => match fit_decay(&traj.times(), &q.extract(&traj), *a, *b) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            },
        };
        println!(
            "dissipativity: run {} enters {} <= {:.6e} at t = {:.3}{}",
            i + 1,
            q.name(),
            ball.r_star,
            ball.t_entry,
            match &fit {
                Some(f) => format!(", decay rate {:.4e}", f.gamma),
                None => String::new(),
            }
        );
        runs.push(DissipativityRun {
            initial_index: i,
            r_star: ball.r_star,
            t_entry: ball.t_entry,
            fit,
            fit_error,
        });
    }
    if ctx.wants_json() {
        let report = DissipativityReport {
            quantity: q.name(),
            tail_fraction: *tail_fraction,
            tol: *tol,
            runs,
        };
        write_json(ctx.out, "dissipativity.json", &report, &mut artifacts)?;
    }
    Ok(artifacts)
}

#[derive(Serialize)]
struct DimensionReport {
    meta: CloudMeta,
    points: usize,
    estimate: sdde_core::dimension::DimensionEstimate,
}

fn dimension(ctx: &RunContext) -> Result<Vec<String>> {
    let ExperimentBlock::Dimension {
        cloud_csv,
        n_traj,
        transient,
        sample_dt,
        embed_modes,
        eps_ladder,
        seed,
    } = &ctx.cfg.experiment
    else {
        unreachable!()
    };
    let cloud = match cloud_csv {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {path}"))?;
            let meta = CloudMeta::synthetic(format!("loaded from {path}"));
            PointCloud::read_csv(BufReader::new(file), meta)?
        }
        None => {
            let spec = ctx.cfg.build_model()?;
            let icfg = ctx.cfg.build_integrator()?;
            // Presence validated against the config schema already.
            sample_attractor(
                &spec,
                &icfg,
                n_traj.unwrap(),
                transient.unwrap(),
                sample_dt.unwrap(),
                embed_modes.unwrap(),
                seed.unwrap(),
            )?
        }
    };
    let ladder = match eps_ladder {
        Some(l) => l.clone(),
        None => default_eps_ladder(&cloud),
    };
    let estimate = box_counting(&cloud, &ladder)?;

    let mut artifacts = Vec::new();
    if ctx.wants_csv() {
        cloud.write_csv(create(ctx.out, "cloud.csv", &mut artifacts)?)?;
    }
    println!(
        "dimension: {} points, box-counting slope {:.4} (stderr {:.4})",
        cloud.len(),
        estimate.slope,
        estimate.stderr
    );
    if ctx.wants_json() {
        let report = DimensionReport {
            meta: cloud.meta.clone(),
            points: cloud.len(),
            estimate,
        };
        write_json(ctx.out, "dimension.json", &report, &mut artifacts)?;
    }
    Ok(artifacts)
}

fn validate(ctx: &RunContext) -> Result<Vec<String>> {
    let reports = sdde_core::validate::run_all();
    for report in &reports {
        println!("{}", report.line());
    }
    let mut artifacts = Vec::new();
    if ctx.wants_json() {
        write_json(ctx.out, "validate.json", &reports, &mut artifacts)?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", reports.len());
    }
    println!("validate: all {} checks passed", reports.len());
    Ok(artifacts)
}

/// Continues a finished run from its checkpoint for `additional_t` more
/// time units. The caller has already read the manifest and re-validated
/// the echoed config.
pub fn run_resume(ctx: &RunContext, from: &Path, additional_t: f64) -> Result<Vec<String>> {
    let spec = ctx.cfg.build_model()?;
    let mut icfg = ctx.cfg.build_integrator()?;
    icfg.t_final = additional_t;

    let dump = from.join("checkpoint.csv");
    let file = File::open(&dump).with_context(|| format!("opening {}", dump.display()))?;
    let history = HistorySegment::read_csv(BufReader::new(file))?;
    let r = spec.r;
    if (history.r() - r).abs() > 1e-9 * r.max(1.0) {
        bail!(
            "checkpoint {} spans {} time units but the model delay horizon \
             is r = {r}; the dump must cover one full horizon",
            dump.display(),
            history.r()
        );
    }
    // Rebuild the dump on the exact configured grid. The sample times in
    // the file round-trip exactly, but a horizon or step inferred from
    // them can be an ulp off the config's, and the continued run must be
    // bit-identical to one that never stopped.
    let states: Vec<_> = history.states().cloned().collect();
    let derivs = history
        .has_derivs()
        .then(|| (0..states.len()).filter_map(|i| history.deriv_at(i).cloned()).collect());
    let history = HistorySegment::from_parts(states, derivs, r, icfg.dt)?;

    let traj = integrate_from(&spec, history, &icfg)?;

    let mut artifacts = Vec::new();
    write_trajectory(ctx, &traj, "trajectory", &mut artifacts)?;
    write_checkpoint(ctx, &traj, &mut artifacts)?;
    let last = traj.rows.last().context("empty continuation")?;
    println!(
        "resume: continued to t = {} ({} recorded rows)",
        last.t,
        traj.rows.len()
    );
    Ok(artifacts)
}
