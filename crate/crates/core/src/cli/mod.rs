//! Command-line front end: configuration loading, orchestration of the
//! subcommands and report emission.

mod config;
mod report;

pub use config::{load_config, Command, ContourOverrides, LoadedConfig, RunConfig, SweepConfig, Tolerances, UcpConfig};
pub use report::{num, write_report, RunReport, Table, Timing, Verdict, SCHEMA, TABLE_FILES};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde_json::json;

use crate::analysis::{
    cauchy_space_direct, continuity_sweep, lagrangian_and_cobordism, projection_invariants,
    ucp_defect_profile, DoubleSummary, SymplecticForm,
};
use crate::double::{
    assemble_double, correction_formula_check, ghost_solutions, kernel_ghost_angle,
    profile_slope, CalderonTolerances,
};
use crate::error::{Error, Result};
use crate::geometry::{build_discretization, trace_and_dual, SIDES};
use crate::linalg::{eigenvalues, spectral_norm};
use crate::operator::{assemble_operator, check_ellipticity_and_sl, Operator};
use crate::oracle::{compare_to_oracle, constant_coeff_ucp, mode_oracle_cauchy};
use crate::pipeline::Pipeline;
use crate::sectorial::{sectorial_projection, SectorialContour, SpectralClass};

#[derive(Debug, Parser)]
#[command(name = "calderonlab", version, about = "Calderón projections of first-order elliptic operators on a cylinder")]
pub struct Cli {
    /// Subcommand to run.
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "./out")]
    pub out: PathBuf,
    /// Tolerance override, e.g. `--tol compl=1e-9` (repeatable).
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    pub tol: Vec<String>,
    /// Largest |n| reported per mode and used for oracle comparisons.
    #[arg(long)]
    pub modes: Option<i64>,
    /// Worker threads (falls back to CALDERONLAB_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

pub const THREADS_ENV: &str = "CALDERONLAB_THREADS";

/// Outcome of a run: the report and the tables written next to it.
pub struct RunOutput {
    pub report: RunReport,
    pub tables: BTreeMap<&'static str, Table>,
}

struct Runner {
    command: Command,
    loaded: LoadedConfig,
    tol: Tolerances,
    mode_limit: i64,
    blocks: BTreeMap<String, serde_json::Value>,
    verdicts: Vec<Verdict>,
    tables: BTreeMap<&'static str, Table>,
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn class_name(c: &SpectralClass) -> &'static str {
    match c {
        SpectralClass::Plus => "plus",
        SpectralClass::Minus => "minus",
        SpectralClass::Imaginary => "imaginary",
    }
}

impl Runner {
    fn calderon_tolerances(&self) -> CalderonTolerances {
        CalderonTolerances {
            idem: self.tol.idem,
            compl: self.tol.compl,
            sym: self.tol.sym,
            ker: self.tol.ker,
        }
    }

    fn contour_for(&self, b0: &crate::scalar::CMat<f64>) -> SectorialContour<f64> {
        let o = &self.loaded.config.contour;
        let mut c = SectorialContour::default_for(b0);
        c.quad_tol = self.tol.quad;
        c.imag_tol = self.tol.imag * spectral_norm(b0).max(1.0);
        if let Some(r) = o.cut_radius {
            c = c.with_cut_radius(r);
        }
        if let Some(a) = o.leg_angle {
            c.leg_angle = a;
        }
        if let Some(r) = o.truncation_radius {
            c.truncation_radius = r;
        }
        if let Some(n) = o.n_quad {
            c.n_quad = n;
        }
        c
    }

    fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    fn pipeline(&self) -> Result<Pipeline<f64>> {
        Pipeline::run(&self.loaded.spec, self.tol.rank, &self.calderon_tolerances())
    }

    fn spectrum_table(&mut self, op: &crate::operator::AssembledOperator<f64>) -> Result<()> {
        let mut t = Table::new(&["side", "index", "re", "im", "class"]);
        for side in SIDES {
            let b0 = &op.collar[side].b0_h;
            let contour = self.contour_for(b0);
            let mut eigs = eigenvalues(b0);
            eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            for (i, z) in eigs.iter().enumerate() {
                let class = contour.classify(*z).map(|c| class_name(&c)).unwrap_or("on_contour");
                t.push(vec![side.to_string(), i.to_string(), num(z.re), num(z.im), class.into()]);
            }
        }
        self.tables.insert("spectrum.csv", t);
        Ok(())
    }

    fn check(&mut self) -> Result<()> {
        let disc = build_discretization::<f64>(&self.loaded.spec.geometry)?;
        let op = assemble_operator(&Operator::from_spec(&self.loaded.spec)?, &disc)?;
        let sl = check_ellipticity_and_sl(&op.collar, &disc.theta_nodes)?;
        self.blocks.insert(
            "operator".into(),
            json!({
                "green_defect": op.green_defect_bound,
                "ellipticity_margin": op.ellipticity_margin,
                "max_j_condition": op.max_j_condition,
                "self_adjoint_defect": op.self_adjoint_defect,
                "theta_coupled": op.is_coupled(),
            }),
        );
        self.blocks.insert("ellipticity_sl".into(), to_value(&sl));
        self.verdict(Verdict::at_most("green_defect", op.green_defect_bound, self.tol.green));
        self.verdict(Verdict::equals("positivity", sl.positivity as u8 as f64, 1.0));
        self.verdict(Verdict::equals("shapiro_lopatinskii", sl.sl_pass as u8 as f64, 1.0));
        self.spectrum_table(&op)
    }

    fn double(&mut self) -> Result<()> {
        let disc = build_discretization::<f64>(&self.loaded.spec.geometry)?;
        let op = assemble_operator(&Operator::from_spec(&self.loaded.spec)?, &disc)?;
        let traces = trace_and_dual(&disc);
        let dbl = assemble_double(&op, &traces, self.tol.rank)?;
        let ghosts = ghost_solutions(&op, &traces, self.tol.rank)?;
        let (zp, zm) = ghosts.dims();
        let angle = kernel_ghost_angle(&dbl.kernel_basis, &ghosts, disc.n_slots(), disc.n_x() * disc.rank());
        let summary = DoubleSummary::of(&dbl, &op);
        self.blocks.insert(
            "double".into(),
            json!({
                "summary": summary,
                "ghost_dim_A": zp,
                "ghost_dim_At": zm,
                "ghost_gap_A": ghosts.gap_plus,
                "ghost_gap_At": ghosts.gap_minus,
                "kernel_ghost_angle_sin": angle,
                "positivity_warning": !dbl.positivity,
            }),
        );
        self.verdict(Verdict::at_least("double.gap_ratio", summary.gap_ratio, self.tol.gap_ratio));
        self.verdict(Verdict::equals("double.kernel_dim", summary.kernel_dim as f64, (zp + zm) as f64));
        self.verdict(Verdict::at_most("double.kernel_ghost_angle", angle, self.tol.angle));
        self.spectrum_table(&op)
    }

    fn calderon_blocks(&mut self, p: &Pipeline<f64>) {
        let d = &p.bundle.diagnostics;
        self.blocks.insert("calderon".into(), to_value(d));
        self.blocks.insert("double".into(), to_value(&DoubleSummary::of(&p.dbl, &p.op)));
        self.verdict(Verdict::at_most("calderon.idem_residual", d.idem_residual, self.tol.idem));
        self.verdict(Verdict::at_most("calderon.compl_residual", d.compl_residual, self.tol.compl));
        if d.orthogonal_expected {
            self.verdict(Verdict::at_most("calderon.sym_residual", d.sym_residual, self.tol.sym));
        }
        self.verdict(Verdict::at_most("calderon.kernel_residual", d.kernel_residual, self.tol.ker));
        let mut t = Table::new(&["mode", "c_plus_norm", "c_plus_trace_re", "c_plus_trace_im", "c_plus_asymmetry"]);
        let mut slots: Vec<usize> = (0..p.disc.n_slots())
            .filter(|&s| p.disc.modes[s].abs() <= self.mode_limit)
            .collect();
        slots.sort_by_key(|&s| p.disc.modes[s]);
        for s in slots {
            let b = p.bundle.c_plus_mode(s);
            let tr = b.trace();
            t.push(vec![
                p.disc.modes[s].to_string(),
                num(spectral_norm(&b)),
                num(tr.re),
                num(tr.im),
                num(spectral_norm(&(&b - b.adjoint()))),
            ]);
        }
        self.tables.insert("modes.csv", t);
    }

    fn calderon(&mut self) -> Result<()> {
        let p = self.pipeline()?;
        self.calderon_blocks(&p);
        self.spectrum_table(&p.op)
    }

    fn invariants(&mut self) -> Result<()> {
        let p = self.pipeline()?;
        self.calderon_blocks(&p);
        let direct = cauchy_space_direct(&p.op, &p.traces, self.tol.rank)?;
        let inv = projection_invariants(&p.bundle, Some(&direct));
        self.blocks.insert("projection_invariants".into(), to_value(&inv));
        self.verdict(Verdict::at_most(
            "invariants.direct_cauchy_angle",
            inv.direct_cauchy_angle_sin.unwrap_or(f64::NAN),
            self.tol.angle,
        ));
        let mut sectorial = Vec::new();
        let mut contours = Vec::new();
        for side in SIDES {
            let b0 = &p.op.collar[side].b0_h;
            let contour = self.contour_for(b0);
            let split = sectorial_projection(b0, &contour)?;
            let completeness = split.completeness_defect();
            sectorial.push(json!({
                "side": side,
                "rank_plus": split.rank_plus,
                "rank_minus": split.rank_minus,
                "dim_w0": split.dim_w0(),
                "idempotency_defect": split.idempotency_defect(),
                "completeness_defect": completeness,
                "commutator_defect": split.commutator_defect(b0),
                "quadrature_oracle_mismatch": split.oracle_mismatch,
                "cut_radius": contour.cut_radius,
                "leg_angle": contour.leg_angle,
                "truncation_radius": contour.truncation_radius,
                "n_quad": contour.n_quad,
            }));
            self.verdict(Verdict::at_most(
                &format!("sectorial.side{side}.completeness"),
                completeness,
                self.tol.compl,
            ));
            contours.push(contour);
        }
        self.blocks.insert("sectorial".into(), json!(sectorial));
        let sobolev: Vec<serde_json::Value> = [-0.5, 0.0, 0.5]
            .iter()
            .map(|&s| json!({"s": s, "c_plus_norm": c_plus_sobolev_norm(&p, s)}))
            .collect();
        self.blocks.insert("c_plus_sobolev_norms".into(), json!(sobolev));

        let limit = (p.disc.cfg.n_theta / 4) as i64;
        let contours: [SectorialContour<f64>; 2] = [contours[0].clone(), contours[1].clone()];
        match correction_formula_check(&p.dbl, &p.op, &p.disc, &p.bundle, Some(contours), limit) {
            Ok(r) => {
                let slope = profile_slope(&r.profile, 4, 16);
                let length = p.disc.length;
                self.verdict(Verdict::at_most("correction.residual", r.residual, self.tol.correction));
                self.verdict(Verdict::at_most(
                    "correction.slope_relative_error",
                    (slope + length).abs() / length,
                    0.2,
                ));
                self.blocks.insert("correction".into(), json!({"report": r, "slope": slope, "expected_slope": -length}));
                let mut t = self.tables.remove("modes.csv").unwrap_or_default();
                t.header.push("c_plus_minus_p_plus".into());
                for row in t.rows.iter_mut() {
                    let m: i64 = row[0].parse().unwrap_or(i64::MAX);
                    let v = r.profile.iter().find(|e| e.mode == m).map(|e| num(e.norm)).unwrap_or_else(|| "nan".into());
                    row.push(v);
                }
                self.tables.insert("modes.csv", t);
            }
            Err(Error::Domain(msg)) => {
                self.blocks.insert("correction".into(), json!({"skipped": msg}));
            }
            Err(e) => return Err(e),
        }
        self.spectrum_table(&p.op)
    }

    fn sweep(&mut self) -> Result<()> {
        let sweep = self
            .loaded
            .config
            .sweep
            .clone()
            .ok_or_else(|| Error::Config("sweep: missing `sweep` block in the configuration".into()))?;
        if sweep.grid.is_empty() {
            return Err(Error::Config("sweep.grid: empty".into()));
        }
        let base = self.loaded.spec.clone();
        sweep.member(&base, sweep.grid[0])?;
        let family = |s: f64| sweep.member(&base, s).expect("validated sweep parameter");
        let r = continuity_sweep(
            &family,
            &sweep.grid,
            sweep.sobolev_s,
            sweep.cut_radius,
            self.tol.rank,
            &self.calderon_tolerances(),
        )?;
        let mut t = Table::new(&[
            "s",
            "c_plus_norm",
            "distance_from_start",
            "step_c_plus",
            "step_p_plus",
            "step_d0",
            "step_d_str",
            "step_ratio",
            "step_resolvent",
            "resolvent_ratio",
            "jump_c_plus",
            "jump_p_plus",
        ]);
        for p in &r.points {
            t.push(vec![
                num(p.s),
                num(p.c_plus_norm),
                num(p.distance_from_start),
                num(p.step_c_plus),
                num(p.step_p_plus),
                num(p.step_d0),
                num(p.step_d_str),
                num(p.step_ratio),
                num(p.step_resolvent),
                num(p.resolvent_ratio),
                (p.jump_c_plus as u8).to_string(),
                (p.jump_p_plus as u8).to_string(),
            ]);
        }
        self.tables.insert("sweep.csv", t);
        self.verdict(Verdict::equals("sweep.members", r.points.len() as f64, sweep.grid.len() as f64));
        self.verdict(Verdict::at_most("sweep.max_c_plus_norm", r.max_c_plus_norm, f64::MAX));
        self.blocks.insert(
            "sweep".into(),
            json!({
                "parameter": sweep.parameter,
                "sobolev_s": r.sobolev_s,
                "cut_radius": r.cut_radius,
                "jumps_c_plus": r.jumps_c_plus,
                "jumps_p_plus": r.jumps_p_plus,
                "max_step_ratio": r.max_step_ratio,
                "step_ratio_spread": r.step_ratio_spread,
                "max_resolvent_ratio": r.max_resolvent_ratio,
                "resolvent_ratio_spread": r.resolvent_ratio_spread,
                "max_c_plus_norm": r.max_c_plus_norm,
            }),
        );
        Ok(())
    }

    fn ucp(&mut self) -> Result<()> {
        let spec = &self.loaded.spec;
        let length = spec.geometry.length;
        let xs: Vec<f64> = match &self.loaded.config.ucp {
            Some(u) => u.x_samples.clone(),
            None => [0.0, 0.125, 0.25, 0.5, 0.75].iter().map(|f| f * length).collect(),
        };
        let disc = build_discretization::<f64>(&spec.geometry)?;
        let operator = Operator::from_spec(spec)?;
        let op = assemble_operator(&operator, &disc)?;
        let prof = ucp_defect_profile(&op, &disc, &xs, self.tol.rank)?;
        let mut t = Table::new(&["x", "d", "d_adjoint", "gap_ratio", "gap_ratio_adjoint", "conclusive"]);
        for s in &prof.samples {
            t.push(vec![
                num(s.x),
                s.d.to_string(),
                s.d_adjoint.to_string(),
                num(s.gap_ratio),
                num(s.gap_ratio_adjoint),
                (s.conclusive as u8).to_string(),
            ]);
        }
        self.tables.insert("ucp.csv", t);
        self.verdict(Verdict::equals("ucp.monotone", prof.monotone as u8 as f64, 1.0));
        let oracle = match constant_coeff_ucp(&operator, &disc, &xs) {
            Ok(v) => {
                let discrete_zero = prof.samples.iter().all(|s| s.d == 0);
                self.verdict(Verdict::equals(
                    "ucp.matches_constant_coefficient_oracle",
                    (discrete_zero == v.d_identically_zero) as u8 as f64,
                    1.0,
                ));
                to_value(&v)
            }
            Err(e) => json!({"inapplicable": e.to_string()}),
        };
        self.blocks.insert("ucp".into(), json!({"profile": prof, "oracle": oracle}));
        self.spectrum_table(&op)
    }

    fn cobordism(&mut self) -> Result<()> {
        let disc = build_discretization::<f64>(&self.loaded.spec.geometry)?;
        let operator = Operator::from_spec(&self.loaded.spec)?;
        let defect = operator.self_adjoint_defect(&disc);
        if defect > 1e-10 {
            return Err(Error::NotSelfAdjoint(defect));
        }
        let p = self.pipeline()?;
        let form = SymplecticForm::from_collar(&p.op)?;
        let imag_tol = self.tol.imag
            * p.op.collar.iter().map(|c| spectral_norm(&c.b0_h)).fold(1.0, f64::max);
        let r = lagrangian_and_cobordism(&p.bundle, &p.op, &p.disc, &form, imag_tol, self.tol.rank)?;
        self.verdict(Verdict::at_most("cobordism.isotropy", r.isotropy_residual, self.tol.isotropy));
        self.verdict(Verdict::at_least("cobordism.transversality", r.transversality_angle, self.tol.transversality));
        self.verdict(Verdict::equals("cobordism.dimensions", (r.dim_plus + r.dim_minus) as f64, r.boundary_dim as f64));
        self.verdict(Verdict::equals("cobordism.signature", r.signature as f64, 0.0));
        if let Some(ind) = r.index_b_plus {
            self.verdict(Verdict::equals("cobordism.index_b_plus", ind as f64, 0.0));
        }
        self.blocks.insert("cobordism".into(), to_value(&r));
        self.blocks.insert("unitary_part_T".into(), json!(crate::analysis::is_unitary_part(&p.op)));
        self.spectrum_table(&p.op)
    }

    fn oracle_compare(&mut self) -> Result<()> {
        let p = self.pipeline()?;
        let oracle = mode_oracle_cauchy(&p.op.operator, &p.disc, self.tol.ode)?;
        let cmp = compare_to_oracle(&p.bundle.c_plus, &p.op, &oracle)?;
        let limit = self.mode_limit;
        let worst = cmp.max_angle_within(limit);
        self.verdict(Verdict::at_most("oracle.max_angle", worst, self.tol.angle));
        self.verdict(Verdict::at_most("oracle.mode_coupling", cmp.mode_coupling, self.tol.compl));
        let mut t = Table::new(&["mode", "angle_sin", "aps_angle_sin"]);
        let mut rows: Vec<_> = cmp.per_mode.iter().filter(|m| m.mode.abs() <= limit).collect();
        rows.sort_by_key(|m| m.mode);
        for m in rows {
            t.push(vec![m.mode.to_string(), num(m.angle_sin), num(m.aps_angle_sin)]);
        }
        self.tables.insert("modes.csv", t);
        self.blocks.insert(
            "oracle".into(),
            json!({"max_angle_sin": worst, "mode_limit": limit, "mode_coupling": cmp.mode_coupling}),
        );
        self.blocks.insert("calderon".into(), to_value(&p.bundle.diagnostics));
        self.spectrum_table(&p.op)
    }
}

/// `‖C₊‖` as an operator on `L²_s` boundary data.
fn c_plus_sobolev_norm(p: &Pipeline<f64>, s: f64) -> f64 {
    let k = p.disc.rank();
    let w: Vec<f64> = (0..2 * k * p.disc.n_slots())
        .map(|i| (1.0 + (p.disc.modes[i / (2 * k)].pow(2)) as f64).powf(s / 2.0))
        .collect();
    let c = p.bundle.c_plus.to_dense();
    spectral_norm(&crate::scalar::CMat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| {
        c[(i, j)] * crate::scalar::creal(w[i] / w[j])
    }))
}

/// Runs one subcommand without touching the disk.
pub fn execute(command: Command, loaded: LoadedConfig, tol_overrides: &[String], modes: Option<i64>) -> Result<RunOutput> {
    if let Some(c) = loaded.config.command {
        if c != command {
            return Err(Error::Config(format!(
                "command: configuration is for `{}` but `{}` was requested",
                c.name(),
                command.name()
            )));
        }
    }
    let mut tol = loaded.config.tolerances.clone();
    for t in tol_overrides {
        tol.set(t)?;
    }
    let mode_limit = modes.or(loaded.config.mode_limit).unwrap_or(20);
    if mode_limit < 0 {
        return Err(Error::Config("--modes must be nonnegative".into()));
    }
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let config_echo = json!({
        "path": loaded.path.display().to_string(),
        "file": loaded.config,
        "operator_spec": loaded.spec,
        "tolerances": tol,
        "mode_limit": mode_limit,
    });
    let mut runner = Runner {
        command,
        loaded,
        tol,
        mode_limit,
        blocks: BTreeMap::new(),
        verdicts: Vec::new(),
        tables: BTreeMap::new(),
    };
    match runner.command {
        Command::Check => runner.check()?,
        Command::Double => runner.double()?,
        Command::Calderon => runner.calderon()?,
        Command::Invariants => runner.invariants()?,
        Command::Sweep => runner.sweep()?,
        Command::Ucp => runner.ucp()?,
        Command::Cobordism => runner.cobordism()?,
        Command::OracleCompare => runner.oracle_compare()?,
    }
    let all_pass = runner.verdicts.iter().all(|v| v.pass);
    let report = RunReport {
        schema: SCHEMA.into(),
        command: command.name().into(),
        config: config_echo,
        blocks: runner.blocks,
        verdicts: runner.verdicts,
        all_pass,
        files: Vec::new(),
        omitted: Vec::new(),
        timing: Timing {
            started_unix_seconds: started,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
        },
    };
    Ok(RunOutput {
        report,
        tables: runner.tables,
    })
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::Config(format!("{THREADS_ENV}: `{v}` is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Full CLI run; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = (|| -> Result<RunReport> {
        configure_threads(cli.threads)?;
        let loaded = load_config(&cli.config)?;
        let mut out = execute(cli.command, loaded, &cli.tol, cli.modes)?;
        write_report(&mut out.report, &out.tables, &cli.out)?;
        Ok(out.report)
    })();
    match result {
        Ok(report) => {
            for v in report.verdicts.iter().filter(|v| !v.pass) {
                eprintln!(
                    "verdict failed: {} = {:e} ({} {:e})",
                    v.name, v.value, v.relation, v.tolerance
                );
            }
            if report.all_pass {
                println!("{}: all {} verdicts pass ({})", report.command, report.verdicts.len(), cli.out.display());
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
