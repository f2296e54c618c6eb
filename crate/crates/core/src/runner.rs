//! Configuration documents and the command pipelines behind the CLI: solve,
//! inf-sup study, convergence study and sparsity study.

use crate::assembly::{
    assemble_all, assemble_load, assemble_system, Discretization,
};
use crate::error::{Error, Result};
use crate::infsup::{compute_beta, lower_bound, write_infsup_csv, InfSupResult};
use crate::postprocess::{
    error_norms, fit_order, moment_mass, moments, sparsity_stats, write_error_table,
    write_moments_csv, write_sparsity_csv, ErrorReport, OrderFit, SolutionField, SparsityStats,
    MOMENT_GRID_N,
};
use crate::problems::{manufactured_u, manufactured_u_dphi, ProblemKind, ProblemSpec};
use crate::sparse::{
    solve_linear_with_blocks, CsrMatrix, EigOptions, PrecondKind, SolveMethod, SolverOptions,
};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

/// Refuse to build systems beyond this many unknowns: the dense velocity
/// coupling makes larger systems exceed the memory of a workstation.
pub const MAX_TEST_DOFS: usize = 2_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    #[serde(default = "d_dense_threshold")]
    pub dense_threshold: usize,
    #[serde(default = "d_eig_tol")]
    pub tol: f64,
    #[serde(default = "d_eig_max_iter")]
    pub max_iter: usize,
}

fn d_dense_threshold() -> usize {
    6000
}

fn d_eig_tol() -> f64 {
    1e-6
}

fn d_eig_max_iter() -> usize {
    2000
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            dense_threshold: d_dense_threshold(),
            tol: d_eig_tol(),
            max_iter: d_eig_max_iter(),
        }
    }
}

impl EigenConfig {
    pub fn to_options(&self) -> EigOptions {
        EigOptions {
            dense_threshold: self.dense_threshold,
            tol: self.tol,
            max_iter: self.max_iter,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeParams {
    pub n_x_list: Vec<usize>,
    pub n_v_list: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionList {
    pub n_list: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    /// Time slices for moment grids (time-dependent problems).
    #[serde(default)]
    pub time_slices: Option<Vec<f64>>,
    /// Velocity angles for solution-slice grids.
    #[serde(default)]
    pub phi_slices: Option<Vec<f64>>,
    /// Time at which field slices are sampled (time-dependent problems).
    #[serde(default)]
    pub slice_time: Option<f64>,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            time_slices: None,
            phi_slices: None,
            slice_time: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// Linear solver; omitted = choose automatically by system size.
    #[serde(default)]
    pub solver: Option<SolverOptions>,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub solve: SolveParams,
    #[serde(default)]
    pub converge: Option<ConvergeParams>,
    #[serde(default)]
    pub infsup: Option<ResolutionList>,
    #[serde(default)]
    pub sparsity: Option<ResolutionList>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.problem.validate()?;
        if let Some(s) = &cfg.solver {
            s.validate()?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Default solver choice: sparse direct up to moderate sizes, restarted
/// GMRES with ILU(0) beyond, block-Jacobi once a second matrix copy would
/// not fit in memory.
pub fn auto_solver(n_unknowns: usize, nnz: usize) -> SolverOptions {
    if n_unknowns <= 200_000 && nnz <= 30_000_000 {
        SolverOptions {
            method: SolveMethod::DirectLu,
            ..Default::default()
        }
    } else if nnz <= 150_000_000 {
        SolverOptions {
            method: SolveMethod::Gmres,
            preconditioner: PrecondKind::Ilu0,
            rel_tol: 1e-10,
            max_iter: 2000,
            gmres_restart: 50,
        }
    } else {
        SolverOptions {
            method: SolveMethod::Gmres,
            preconditioner: PrecondKind::BlockJacobi,
            rel_tol: 1e-10,
            max_iter: 4000,
            gmres_restart: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    /// Space and velocity matrix assembly including the lifted-basis solves.
    pub assembly_secs: f64,
    pub solve_secs: f64,
    pub postprocess_secs: f64,
    /// Assembly share of the total, for comparison with reported figures.
    pub assembly_share: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub n_unknowns: usize,
    pub nnz: usize,
    pub rel_residual: f64,
    pub solver_iterations: usize,
    pub timings: Timings,
    /// Errors against the manufactured solution (stationary problems).
    pub l2_error: Option<f64>,
    pub x_error: Option<f64>,
    /// Total mass of the angular moment at t = 0 (time-dependent problems).
    pub mass_t0: Option<f64>,
    pub moment_min: Option<f64>,
    pub moment_max: Option<f64>,
}

fn check_feasible(problem: &ProblemSpec) -> Result<()> {
    // estimated test-space dimension before building anything big
    let st_dofs: usize = match problem.kind {
        ProblemKind::TimeDependentFp { .. } => {
            (2 * problem.n_t + 1) * (2 * problem.n_x + 1).pow(2)
        }
        ProblemKind::Stationary { .. } => (2 * problem.n_x + 1).pow(2),
    };
    let est = st_dofs.saturating_mul(problem.n_v);
    if est > MAX_TEST_DOFS {
        return Err(Error::invalid(format!(
            "estimated {est} test dofs exceed the supported maximum {MAX_TEST_DOFS}"
        )));
    }
    Ok(())
}

fn solve_system(
    disc: &Discretization,
    b: &CsrMatrix,
    load: &[f64],
    solver: &Option<SolverOptions>,
) -> Result<crate::sparse::SolveOutcome> {
    let opts = solver
        .clone()
        .unwrap_or_else(|| auto_solver(b.n_rows, b.nnz()));
    solve_linear_with_blocks(b, load, &opts, Some(disc.velocity_block_partition()))
}

/// The `solve` command: assemble, solve, post-process, write artifacts.
pub fn run_solve(cfg: &RunConfig, out_dir: &Path) -> Result<SolveSummary> {
    check_feasible(&cfg.problem)?;
    let t_total = Instant::now();
    let t0 = Instant::now();
    let disc = Discretization::build(&cfg.problem)?;
    let b = assemble_system(&disc)?;
    let load = assemble_load(&disc)?;
    let assembly_secs = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let out = solve_system(&disc, &b, &load, &cfg.solver)?;
    let solve_secs = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut summary = SolveSummary {
        n_unknowns: disc.n_unknowns(),
        nnz: b.nnz(),
        rel_residual: out.rel_residual,
        solver_iterations: out.iterations,
        timings: Timings {
            assembly_secs,
            solve_secs,
            postprocess_secs: 0.0,
            assembly_share: 0.0,
        },
        l2_error: None,
        x_error: None,
        mass_t0: None,
        moment_min: None,
        moment_max: None,
    };
    match cfg.problem.kind {
        ProblemKind::Stationary { .. } => {
            let exact = |p: &[f64], phi: f64| {
                (
                    manufactured_u(p[0], p[1], phi),
                    manufactured_u_dphi(p[0], p[1], phi),
                )
            };
            let rep = error_norms(&disc, &out.x, &exact)?;
            summary.l2_error = Some(rep.l2_error);
            summary.x_error = Some(rep.x_error);
            let phis = cfg
                .solve
                .phi_slices
                .clone()
                .unwrap_or_else(|| vec![0.0, 0.5 * std::f64::consts::PI]);
            write_field_slices(&disc, &out.x, &phis, None, out_dir)?;
        }
        ProblemKind::TimeDependentFp { t_final, .. } => {
            let times = cfg.solve.time_slices.clone().unwrap_or_else(|| {
                (0..5).map(|k| t_final * k as f64 / 4.0).collect()
            });
            let grids = moments(&disc, &out.x, &times)?;
            let mut mmin = f64::INFINITY;
            let mut mmax = f64::NEG_INFINITY;
            for g in &grids {
                for &v in &g.values {
                    mmin = mmin.min(v);
                    mmax = mmax.max(v);
                }
                write_moments_csv(&out_dir.join(format!("moments_t{:.4}.csv", g.t)), g)?;
            }
            summary.moment_min = Some(mmin);
            summary.moment_max = Some(mmax);
            summary.mass_t0 = Some(moment_mass(&disc, &out.x, 0.0)?);
            let phis = cfg
                .solve
                .phi_slices
                .clone()
                .unwrap_or_else(|| vec![0.0, 1.75 * std::f64::consts::PI]);
            let slice_t = cfg.solve.slice_time.unwrap_or(t_final / 2.0);
            write_field_slices(&disc, &out.x, &phis, Some(slice_t), out_dir)?;
        }
    }
    summary.timings.postprocess_secs = t0.elapsed().as_secs_f64();
    let total = t_total.elapsed().as_secs_f64();
    summary.timings.assembly_share = if total > 0.0 {
        assembly_secs / total
    } else {
        0.0
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("timings.csv"))?);
    writeln!(f, "stage,seconds")?;
    writeln!(f, "assembly_incl_lifted_basis,{assembly_secs:.4}")?;
    writeln!(f, "solve,{solve_secs:.4}")?;
    writeln!(
        f,
        "postprocess,{:.4}",
        summary.timings.postprocess_secs
    )?;
    writeln!(f, "assembly_share,{:.4}", summary.timings.assembly_share)?;
    Ok(summary)
}

/// Solution slices u(., ., phi) (optionally at a fixed time) on the moment
/// grid, one CSV per angle.
fn write_field_slices(
    disc: &Discretization,
    coeffs: &[f64],
    phis: &[f64],
    slice_time: Option<f64>,
    out_dir: &Path,
) -> Result<()> {
    let field = SolutionField::new(disc, coeffs)?;
    let gn = MOMENT_GRID_N;
    let untransform = match (slice_time, disc.problem.kind) {
        (Some(t), ProblemKind::TimeDependentFp { q_inv, .. }) => (q_inv * t).exp(),
        _ => 1.0,
    };
    for &phi in phis {
        let mut values = vec![0.0; gn * gn];
        for gy in 0..gn {
            let x2 = gy as f64 / (gn - 1) as f64;
            for gx in 0..gn {
                let x1 = gx as f64 / (gn - 1) as f64;
                let v = match slice_time {
                    Some(t) => field.value(&[t, x1, x2], phi),
                    None => field.value(&[x1, x2], phi),
                };
                values[gy * gn + gx] = v * untransform;
            }
        }
        let name = match slice_time {
            Some(t) => format!("field_t{t:.4}_phi{phi:.4}.csv"),
            None => format!("field_phi{phi:.4}.csv"),
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join(name))?);
        for gy in 0..gn {
            let row: Vec<String> = (0..gn)
                .map(|gx| format!("{:.10e}", values[gy * gn + gx]))
                .collect();
            writeln!(f, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// The `infsup` command: computed beta against the closed-form bound over a
/// list of table resolutions.
pub fn run_infsup(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<InfSupResult>> {
    let list = cfg
        .infsup
        .as_ref()
        .ok_or_else(|| Error::Config("missing \"infsup\" section".into()))?;
    let mut rows = Vec::new();
    for &n in &list.n_list {
        let problem = ProblemSpec::with_table_resolution(cfg.problem.kind, n)?;
        check_feasible(&problem)?;
        let disc = Discretization::build(&problem)?;
        let sys = assemble_all(&disc)?;
        let beta = compute_beta(&sys.b, &sys.m_x, &sys.m_y, &cfg.eigen.to_options())?;
        let lb = lower_bound(&problem);
        rows.push(InfSupResult {
            n,
            beta_delta: beta.beta,
            beta_lb: lb,
            ratio: beta.beta / lb,
            problem: problem.kind,
        });
    }
    std::fs::create_dir_all(out_dir)?;
    write_infsup_csv(&out_dir.join("infsup.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeSummary {
    pub n_x_list: Vec<usize>,
    pub n_v_list: Vec<usize>,
    /// l2_table[ix][iv], x_table[ix][iv].
    pub l2_table: Vec<Vec<f64>>,
    pub x_table: Vec<Vec<f64>>,
    /// Fitted orders in n_x per n_v column (l2, x) and in n_v per n_x row.
    pub orders_in_nx: Vec<(usize, OrderFit, OrderFit)>,
    pub orders_in_nv: Vec<(usize, OrderFit, OrderFit)>,
}

/// The `converge` command: manufactured-solution error tables over a
/// resolution grid with fitted convergence orders.
pub fn run_converge(cfg: &RunConfig, out_dir: &Path) -> Result<ConvergeSummary> {
    let params = cfg
        .converge
        .as_ref()
        .ok_or_else(|| Error::Config("missing \"converge\" section".into()))?;
    let ProblemKind::Stationary { .. } = cfg.problem.kind else {
        return Err(Error::Config(
            "convergence study needs the stationary manufactured problem".into(),
        ));
    };
    if params.n_x_list.is_empty() || params.n_v_list.is_empty() {
        return Err(Error::Config("empty resolution lists".into()));
    }
    let exact = |p: &[f64], phi: f64| {
        (
            manufactured_u(p[0], p[1], phi),
            manufactured_u_dphi(p[0], p[1], phi),
        )
    };
    let mut l2_table = vec![vec![0.0; params.n_v_list.len()]; params.n_x_list.len()];
    let mut x_table = l2_table.clone();
    for (ix, &n_x) in params.n_x_list.iter().enumerate() {
        for (iv, &n_v) in params.n_v_list.iter().enumerate() {
            let mut problem = cfg.problem;
            problem.n_x = n_x;
            problem.n_v = n_v;
            check_feasible(&problem)?;
            let disc = Discretization::build(&problem)?;
            let b = assemble_system(&disc)?;
            let load = assemble_load(&disc)?;
            let out = solve_system(&disc, &b, &load, &cfg.solver)?;
            drop(b);
            let rep: ErrorReport = error_norms(&disc, &out.x, &exact)?;
            l2_table[ix][iv] = rep.l2_error;
            x_table[ix][iv] = rep.x_error;
        }
    }
    let nxf: Vec<f64> = params.n_x_list.iter().map(|&n| n as f64).collect();
    let nvf: Vec<f64> = params.n_v_list.iter().map(|&n| n as f64).collect();
    let mut orders_in_nx = Vec::new();
    if params.n_x_list.len() >= 2 {
        for (iv, &n_v) in params.n_v_list.iter().enumerate() {
            let l2col: Vec<f64> = (0..params.n_x_list.len()).map(|ix| l2_table[ix][iv]).collect();
            let xcol: Vec<f64> = (0..params.n_x_list.len()).map(|ix| x_table[ix][iv]).collect();
            orders_in_nx.push((n_v, fit_order(&nxf, &l2col), fit_order(&nxf, &xcol)));
        }
    }
    let mut orders_in_nv = Vec::new();
    if params.n_v_list.len() >= 2 {
        for (ix, &n_x) in params.n_x_list.iter().enumerate() {
            orders_in_nv.push((
                n_x,
                fit_order(&nvf, &l2_table[ix]),
                fit_order(&nvf, &x_table[ix]),
            ));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    write_error_table(
        &out_dir.join("L2_errors.csv"),
        &params.n_x_list,
        &params.n_v_list,
        &l2_table,
    )?;
    write_error_table(
        &out_dir.join("X_errors.csv"),
        &params.n_x_list,
        &params.n_v_list,
        &x_table,
    )?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("slopes.csv"))?);
    writeln!(f, "sweep,fixed,norm,order,ls_slope,floor")?;
    for (n_v, l2fit, xfit) in &orders_in_nx {
        writeln!(
            f,
            "n_x,{n_v},l2,{:.4},{:.4},{:.6e}",
            l2fit.order, l2fit.ls_slope, l2fit.floor
        )?;
        writeln!(
            f,
            "n_x,{n_v},x,{:.4},{:.4},{:.6e}",
            xfit.order, xfit.ls_slope, xfit.floor
        )?;
    }
    for (n_x, l2fit, xfit) in &orders_in_nv {
        writeln!(
            f,
            "n_v,{n_x},l2,{:.4},{:.4},{:.6e}",
            l2fit.order, l2fit.ls_slope, l2fit.floor
        )?;
        writeln!(
            f,
            "n_v,{n_x},x,{:.4},{:.4},{:.6e}",
            xfit.order, xfit.ls_slope, xfit.floor
        )?;
    }
    Ok(ConvergeSummary {
        n_x_list: params.n_x_list.clone(),
        n_v_list: params.n_v_list.clone(),
        l2_table,
        x_table,
        orders_in_nx,
        orders_in_nv,
    })
}

/// The `sparsity` command: nonzero statistics of the system matrix over a
/// list of table resolutions.
pub fn run_sparsity(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<(usize, SparsityStats)>> {
    let list = cfg
        .sparsity
        .as_ref()
        .ok_or_else(|| Error::Config("missing \"sparsity\" section".into()))?;
    let mut rows = Vec::new();
    for &n in &list.n_list {
        let problem = ProblemSpec::with_table_resolution(cfg.problem.kind, n)?;
        check_feasible(&problem)?;
        let disc = Discretization::build(&problem)?;
        let b = assemble_system(&disc)?;
        rows.push((n, sparsity_stats(&b, problem.n_x, problem.n_v)));
    }
    std::fs::create_dir_all(out_dir)?;
    write_sparsity_csv(&out_dir.join("sparsity.csv"), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"problem": {"kind": "stationary", "c": 0.1, "d": 0.1, "n_x": 4, "n_v": 8}}"#,
        )
        .unwrap();
        assert!(cfg.solver.is_none());
        assert_eq!(cfg.eigen.dense_threshold, 6000);
        assert!(matches!(
            cfg.problem.kind,
            ProblemKind::Stationary { .. }
        ));
    }

    #[test]
    fn malformed_configs_are_rejected() {
        assert!(RunConfig::from_json("{").is_err());
        // unknown fields
        assert!(RunConfig::from_json(
            r#"{"problem": {"kind": "stationary", "c": 0.1, "d": 0.1, "n_x": 4, "n_v": 8}, "bogus": 1}"#
        )
        .is_err());
        // invalid problem constants
        assert!(RunConfig::from_json(
            r#"{"problem": {"kind": "stationary", "c": -0.1, "d": 0.1, "n_x": 4, "n_v": 8}}"#
        )
        .is_err());
        assert!(RunConfig::from_json(
            r#"{"problem": {"kind": "time_dependent_fp", "q_inv": 2.0, "n_t": 3, "n_x": 4, "n_v": 8}}"#
        )
        .is_err());
    }

    #[test]
    fn infeasible_sizes_error_out() {
        let p = ProblemSpec::stationary(0.1, 0.1, 700, 700);
        assert!(check_feasible(&p).is_err());
    }

    #[test]
    fn sparsity_pipeline_round_trip() {
        let dir = std::env::temp_dir().join("kfp_runner_sparsity");
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = RunConfig::from_json(
            r#"{"problem": {"kind": "stationary", "c": 0.1, "d": 0.1, "n_x": 4, "n_v": 4},
                "sparsity": {"n_list": [4]}}"#,
        )
        .unwrap();
        let rows = run_sparsity(&cfg, &dir).unwrap();
        assert_eq!(rows.len(), 1);
        // Table-derived reference: ratio ~ 20.05%, scaled ~ 39.3
        let s = rows[0].1;
        assert!((s.ratio_entries - 0.2005).abs() < 0.01, "{:?}", s);
        assert!((s.scaled - 39.3).abs() < 2.0, "{:?}", s);
        assert!(dir.join("sparsity.csv").exists());
    }
}
