//! One function per subcommand. Replicates run on the rayon pool; results
//! are collected in task order so output bytes do not depend on scheduling.

use std::path::Path;

use critperc::coalescent::{couple_edges, merged_sizes, q_lambda_leading, WeightedIndex};
use critperc::components::{build_components, locate_window, sweep, sweep_chi, ThresholdRule};
use critperc::coupling::CoupledConfiguration;
use critperc::delta::{
    build_delta_from, norms, omega_good_report, q_system, spectrum, w_direct, w_functional, DeltaMatrix, DeltaReport,
    OmegaConstants,
};
use critperc::diagrams::{
    convolve_power, estimate_constants, estimate_tau, plateau_fit, rw_bound_check, square_diagram, triangle_diagram,
    write_field, RwSpectrum, SusceptibilityPoint,
};
use critperc::lattice::TorusSpec;
use critperc::oracle::{exact_stats, exact_two_level, TinyGraph};
use critperc::rng::derive_seed;
use critperc::stats::{mean_se, median, quantile};
use critperc::zlambda::sample_zlambda_capped;
use critperc::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{cells, top_n, OutputDir, SCHEMA_VERSION};
use crate::{CliError, ExperimentConfig, Subcommand};

const TOP: usize = 10;

pub fn run(sub: Subcommand, cfg: &ExperimentConfig, config_text: &str, out: &Path) -> Result<(), CliError> {
    let mut dir = OutputDir::create(out)?;
    match sub {
        Subcommand::Sweep => run_sweep(cfg, &mut dir)?,
        Subcommand::Window => run_window(cfg, &mut dir)?,
        Subcommand::Spectra => run_spectra(cfg, &mut dir)?,
        Subcommand::Couple => run_couple(cfg, &mut dir)?,
        Subcommand::Zlambda => run_zlambda(cfg, &mut dir)?,
        Subcommand::Diagrams => run_diagrams(cfg, &mut dir)?,
        Subcommand::OracleCheck => run_oracle_check(&mut dir)?,
    }
    dir.finish(sub.name(), cfg, config_text)
}

fn replicate_configs(spec: &TorusSpec, cfg: &ExperimentConfig) -> Vec<CoupledConfiguration> {
    (0..cfg.replicates).map(|r| CoupledConfiguration::new(spec.clone(), derive_seed(cfg.master_seed, r))).collect()
}

fn par_try<T: Send, F>(items: &[CoupledConfiguration], f: F) -> Result<Vec<T>, CliError>
where
    F: Fn(&CoupledConfiguration) -> Result<T, CliError> + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Columns: seed, p, num_components, c1, c2, c3, chi_hat, S2_M, S3_M,
/// max_size, M. One row per (replicate, level), replicate-major.
pub fn run_sweep(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let grid = cfg.levels(spec.volume())?;
    let rule = cfg.threshold_rule();
    let reps = replicate_configs(&spec, cfg);
    let tables = par_try(&reps, |c| Ok(sweep(c, &grid, rule)?))?;
    let header = cells(["seed", "p", "num_components", "c1", "c2", "c3", "chi_hat", "S2_M", "S3_M", "max_size", "M"]);
    let mut rows = Vec::new();
    for (c, table) in reps.iter().zip(tables) {
        for s in table {
            rows.push(vec![
                c.seed().to_string(),
                s.p.to_string(),
                s.num_components.to_string(),
                s.c1.to_string(),
                s.c2.to_string(),
                s.c3.to_string(),
                s.chi_hat.to_string(),
                s.s2_m.to_string(),
                s.s3_m.to_string(),
                s.max_size.to_string(),
                s.m.to_string(),
            ]);
        }
    }
    dir.csv("sweep.csv", &header, &rows)
}

#[derive(Serialize)]
struct WindowSummary {
    schema_version: u32,
    seed: String,
    volume: u64,
    target_chi: f64,
    center_p: f64,
    locate_replicates: u64,
    unresolved: usize,
    crossings: Vec<f64>,
    median_chi_hat: f64,
    median_c1: f64,
    scaled_c1_quartiles: [f64; 3],
}

/// Locates the level where `chi_hat` reaches `kappa V^{1/3}` (median over
/// `locate_replicates` crossing levels), then samples `replicates` fresh
/// configurations there. Columns: seed, p, chi_hat, c1, c2, c3, scaled_c1.
pub fn run_window(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let v = spec.volume();
    let target = cfg.kappa * (v as f64).cbrt();
    let p_max = cfg.p_max.or(cfg.p_c.map(|pc| (2.0 * pc).min(1.0))).unwrap_or(1.0);
    let center = locate_window(&spec, target, p_max, cfg.locate_replicates, cfg.master_seed)?;
    let reps: Vec<CoupledConfiguration> = (0..cfg.replicates)
        .map(|r| CoupledConfiguration::new(spec.clone(), derive_seed(cfg.master_seed, cfg.locate_replicates + r)))
        .collect();
    let parts = par_try(&reps, |c| {
        let part = build_components(c, center.p);
        let s = top_n(part.sorted_sizes(), 3);
        Ok((part.chi_hat(), s))
    })?;
    let scale = (v as f64).powf(2.0 / 3.0);
    let header = cells(["seed", "p", "chi_hat", "c1", "c2", "c3", "scaled_c1"]);
    let rows: Vec<Vec<String>> = reps
        .iter()
        .zip(&parts)
        .map(|(c, (chi, s))| {
            let mut r = cells([c.seed().to_string(), center.p.to_string(), chi.to_string()]);
            r.extend(cells(s.iter()));
            r.push((s[0] as f64 / scale).to_string());
            r
        })
        .collect();
    dir.csv("window.csv", &header, &rows)?;
    let chis: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let c1: Vec<f64> = parts.iter().map(|p| p.1[0] as f64).collect();
    let scaled: Vec<f64> = c1.iter().map(|x| x / scale).collect();
    dir.json(
        "window.json",
        &WindowSummary {
            schema_version: SCHEMA_VERSION,
            seed: cfg.seed.clone(),
            volume: v,
            target_chi: target,
            center_p: center.p,
            locate_replicates: cfg.locate_replicates,
            unresolved: center.unresolved,
            crossings: center.crossings,
            median_chi_hat: median(&chis),
            median_c1: median(&c1),
            scaled_c1_quartiles: [quantile(&scaled, 0.25), quantile(&scaled, 0.5), quantile(&scaled, 0.75)],
        },
    )
}

/// Degenerate-index errors become notes; everything else propagates.
fn soft<T>(r: critperc::Result<T>, what: &str, notes: &mut Vec<String>) -> Result<Option<T>, CliError> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(Error::DegenerateIndex(m)) => {
            notes.push(format!("{what}: {m}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn delta_at(c: &CoupledConfiguration, p: f64, rule: ThresholdRule) -> Result<(DeltaMatrix, f64), CliError> {
    if p >= 1.0 {
        return Err(CliError::Config("Delta needs a level below 1".into()));
    }
    let part = build_components(c, p);
    let chi = part.chi_hat();
    let m = rule.resolve(c.spec().volume(), chi);
    Ok((build_delta_from(c, &part, m), chi))
}

#[derive(Serialize)]
struct SpectraOutput {
    schema_version: u32,
    seed: String,
    degree: usize,
    volume: u64,
    reports: Vec<DeltaReport>,
}

/// Per replicate at level `p`: Delta norms, the fitted functional, top
/// eigenvalues, the sprinkling matrix and the realization-level inequality
/// table.
pub fn run_spectra(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let p = cfg.require(cfg.p, "p")?;
    let (v, degree) = (spec.volume(), spec.degree());
    let consts = OmegaConstants { c_dl: cfg.c_dl, o_m: cfg.o_m };
    let reps = replicate_configs(&spec, cfg);
    let reports = par_try(&reps, |c| {
        let (dm, chi) = delta_at(c, p, cfg.threshold_rule())?;
        let nm = norms(&dm);
        let mut notes = Vec::new();
        let w = soft(w_functional(&dm, v, degree), "w_functional", &mut notes)?;
        let spec_vals = if dm.k() > 0 {
            soft(spectrum(&dm, cfg.eigen_k.min(dm.k())), "spectrum", &mut notes)?
        } else {
            notes.push("spectrum: no indexed components".into());
            None
        };
        let qs = soft(q_system(&dm, p, cfg.eps1, cfg.eps2, degree, v), "q_system", &mut notes)?;
        let omega_good = omega_good_report(&dm, &nm, w.as_ref(), degree, chi, consts);
        Ok(DeltaReport {
            seed: c.seed(),
            p,
            m: dm.threshold(),
            k: dm.k(),
            frob2: nm.frob2,
            max_entry: nm.max_entry,
            max_row_sq: nm.max_row_sq,
            trace4: nm.trace4,
            trace4_is_estimate: nm.trace4_is_estimate,
            trace4_se: nm.trace4_se,
            lambda1: spec_vals.as_ref().map(|s| s.values[0]),
            lambda2: spec_vals.as_ref().and_then(|s| s.values.get(1).copied()),
            t_min: w.map(|w| w.t_min),
            w_value: w.map(|w| w.w_value),
            s1: w.map(|w| w.s1),
            s2: w.map(|w| w.s2),
            t_min_boundary: w.map(|w| w.boundary),
            p2_star: qs.as_ref().map(|q| q.p2_star),
            lambda1_q: qs.as_ref().map(|q| q.lambda1_q),
            c_star: qs.as_ref().map(|q| q.c_star),
            omega_good,
            notes,
        })
    })?;
    dir.json("spectra.json", &SpectraOutput { schema_version: SCHEMA_VERSION, seed: cfg.seed.clone(), degree, volume: v, reports })
}

#[derive(Serialize)]
struct CoupleRecord {
    seed: u64,
    #[serde(rename = "M")]
    m: u64,
    #[serde(rename = "K")]
    k: usize,
    chi_hat: f64,
    q: f64,
    /// Whether `q` came from the config or from the leading-order formula.
    q_source: &'static str,
    t_min: Option<f64>,
    w_value: Option<f64>,
    disagreements: u64,
    pairs: u64,
    sum_abs_diff: f64,
    sum_sq_diff: f64,
    alpha: f64,
    t_eff: f64,
    lipschitz_bound: f64,
    gtimes_top: Vec<u64>,
    gcomp_top: Vec<u64>,
    notes: Vec<String>,
}

/// Maximal coupling of the multiplicative and sprinkled component graphs on
/// the large `p1`-clusters. Columns of couple.csv: seed, K, q, disagreements,
/// sum_abs_diff, sum_sq_diff, gtimes_1..10, gcomp_1..10.
pub fn run_couple(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let p1 = cfg.require(cfg.p1, "p1")?;
    let p2 = cfg.require(cfg.p2, "p2")?;
    if !(p1 <= p2 && p2 < 1.0) {
        return Err(CliError::Config(format!("need p1 <= p2 < 1, got {p1}, {p2}")));
    }
    let (v, degree) = (spec.volume(), spec.degree());
    let reps = replicate_configs(&spec, cfg);
    let records = par_try(&reps, |c| {
        let (dm, chi) = delta_at(c, p1, cfg.threshold_rule())?;
        let mut notes = Vec::new();
        let w = soft(w_functional(&dm, v, degree), "w_functional", &mut notes)?;
        let (q, q_source) = match (cfg.q, w) {
            (Some(q), _) => (q, "config"),
            (None, Some(w)) if p1 > 0.0 => {
                // Realization-level central difference of chi_hat.
                let h = 0.02 * p1.min(1.0 - p1);
                let chis = sweep_chi(c, &[p1 - h, p1 + h])?;
                let chi_prime = (chis[1] - chis[0]) / (2.0 * h);
                let q = q_lambda_leading(degree, chi, chi_prime, w.t_min, p1, cfg.c2, v, cfg.lambda);
                if q.is_finite() && q >= 0.0 {
                    (q, "leading_term")
                } else {
                    notes.push(format!("leading-term q = {q} unusable; q set to 0"));
                    (0.0, "fallback_zero")
                }
            }
            _ => {
                notes.push("no q in config and no functional to derive it; q set to 0".into());
                (0.0, "fallback_zero")
            }
        };
        let idx = WeightedIndex::new(dm.sizes().to_vec(), cfg.c2, v, q)?;
        let (rep, gx, gc) = couple_edges(&idx, &dm, p1, p2, degree, derive_seed(c.seed(), 1))?;
        Ok(CoupleRecord {
            seed: c.seed(),
            m: dm.threshold(),
            k: dm.k(),
            chi_hat: chi,
            q,
            q_source,
            t_min: w.map(|w| w.t_min),
            w_value: w.map(|w| w.w_value),
            disagreements: rep.disagreements,
            pairs: rep.pairs,
            sum_abs_diff: rep.sum_abs,
            sum_sq_diff: rep.sum_sq,
            alpha: rep.alpha,
            t_eff: rep.t_eff,
            lipschitz_bound: rep.lipschitz_bound,
            gtimes_top: top_n(&merged_sizes(&gx).sizes, TOP),
            gcomp_top: top_n(&merged_sizes(&gc).sizes, TOP),
            notes,
        })
    })?;
    let mut header = cells(["seed", "K", "q", "disagreements", "sum_abs_diff", "sum_sq_diff"]);
    header.extend((1..=TOP).map(|i| format!("gtimes_{i}")));
    header.extend((1..=TOP).map(|i| format!("gcomp_{i}")));
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = cells([r.seed.to_string(), r.k.to_string(), r.q.to_string(), r.disagreements.to_string()]);
            row.extend(cells([r.sum_abs_diff, r.sum_sq_diff]));
            row.extend(cells(&r.gtimes_top));
            row.extend(cells(&r.gcomp_top));
            row
        })
        .collect();
    dir.csv("couple.csv", &header, &rows)?;
    #[derive(Serialize)]
    struct CoupleOutput<'a> {
        schema_version: u32,
        seed: &'a str,
        p1: f64,
        p2: f64,
        c2: f64,
        lambda: f64,
        records: &'a [CoupleRecord],
    }
    dir.json(
        "couple.json",
        &CoupleOutput { schema_version: SCHEMA_VERSION, seed: &cfg.seed, p1, p2, c2: cfg.c2, lambda: cfg.lambda, records: &records },
    )
}

/// Columns: seed, lambda, dt, T, len_1..len_10, l2_norm. Task `i` (lambda
/// major, replicate minor) uses seed `derive_seed(master, i)`.
pub fn run_zlambda(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(), CliError> {
    let tasks: Vec<(u64, f64)> = cfg
        .lambdas
        .iter()
        .flat_map(|&l| (0..cfg.replicates).map(move |_| l))
        .enumerate()
        .map(|(i, l)| (derive_seed(cfg.master_seed, i as u64), l))
        .collect();
    let samples: Vec<_> = tasks
        .par_iter()
        .map(|&(seed, l)| sample_zlambda_capped(l, cfg.dt, seed, cfg.tol, cfg.max_horizon).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    let mut header = cells(["seed", "lambda", "dt", "T"]);
    header.extend((1..=TOP).map(|i| format!("len_{i}")));
    header.push("l2_norm".into());
    let rows: Vec<Vec<String>> = tasks
        .iter()
        .zip(&samples)
        .map(|(&(seed, l), z)| {
            let mut row = cells([seed.to_string(), l.to_string(), z.dt.to_string(), z.horizon.to_string()]);
            row.extend(cells(top_n(&z.lengths, TOP)));
            row.push(z.l2_norm().to_string());
            row
        })
        .collect();
    dir.csv("zlambda.csv", &header, &rows)
}

/// Two-point field at `p` from `replicates` origin clusters, diagram values,
/// plateau fit, random-walk bound table and, when `p_grid` (or `p_c` with
/// `lambda_grid`) is given along with `p_c`, the susceptibility constants.
pub fn run_diagrams(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let p = cfg.require(cfg.p, "p")?;
    let field = estimate_tau(&spec, p, cfg.replicates, cfg.master_seed)?;
    let chi = field.mass();
    let triangle = triangle_diagram(&field)?;
    let square = square_diagram(&field)?;
    let plateau = plateau_fit(&field, chi);
    let rw = rw_bound_check(&spec, cfg.j_max.max(4))?;
    let mut buf = Vec::new();
    write_field(&field, &mut buf).expect("in-memory write");
    dir.bytes("field.bin", &buf)?;

    let constants = match (cfg.p_c, cfg.p_grid.is_some() || cfg.lambda_grid.is_some()) {
        (Some(pc), true) => {
            let grid = cfg.levels(spec.volume())?;
            let v = spec.volume() as f64;
            let reps: Vec<CoupledConfiguration> = (0..cfg.replicates)
                .map(|r| CoupledConfiguration::new(spec.clone(), derive_seed(derive_seed(cfg.master_seed, u64::MAX), r)))
                .collect();
            let tables = par_try(&reps, |c| Ok(sweep(c, &grid, ThresholdRule::Absolute(1))?))?;
            let points: Vec<SusceptibilityPoint> = grid
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let chis: Vec<f64> = tables.iter().map(|t| t[i].chi_hat).collect();
                    let third: Vec<f64> = tables.iter().map(|t| t[i].s3_m / v).collect();
                    let (chi, chi_se) = mean_se(&chis);
                    SusceptibilityPoint { p, chi, chi_se, second_moment: mean_se(&third).0 }
                })
                .collect();
            match estimate_constants(&points, pc) {
                Ok(r) => serde_json::to_value(r).expect("serializable"),
                Err(Error::Fit(m)) => serde_json::json!({ "error": m }),
                Err(e) => return Err(e.into()),
            }
        }
        _ => serde_json::Value::Null,
    };

    #[derive(Serialize)]
    struct DiagramsOutput<'a> {
        schema_version: u32,
        seed: &'a str,
        p: f64,
        replicates: u64,
        chi_hat: f64,
        triangle: critperc::diagrams::DiagramValue,
        square: critperc::diagrams::DiagramValue,
        plateau: critperc::diagrams::PlateauReport,
        rw_bound: critperc::diagrams::RwBoundReport,
        constants: serde_json::Value,
    }
    dir.json(
        "diagrams.json",
        &DiagramsOutput {
            schema_version: SCHEMA_VERSION,
            seed: &cfg.seed,
            p,
            replicates: cfg.replicates,
            chi_hat: chi,
            triangle,
            square,
            plateau,
            rw_bound: rw,
            constants,
        },
    )
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub expected: f64,
    pub actual: f64,
    pub pass: bool,
}

fn check(name: &'static str, expected: f64, actual: f64, tol: f64) -> Check {
    let pass = (expected - actual).abs() <= tol * expected.abs().max(1.0);
    Check { name, expected, actual, pass }
}

/// Fixed suite of exact assertions against hand-derived values.
pub fn oracle_suite() -> critperc::Result<Vec<Check>> {
    let tri = TinyGraph::new(3, vec![(0, 1), (1, 2), (0, 2)])?;
    let cyc4 = TinyGraph::new(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)])?;
    let k4 = TinyGraph::complete(4)?;
    let edge = TinyGraph::new(2, vec![(0, 1)])?;
    let half = exact_stats(&tri, 0.5, 1)?;
    let two = exact_two_level(&cyc4, 0.3, 0.6, 2)?;
    let same = exact_two_level(&tri, 0.4, 0.4, 1)?;
    let single = exact_two_level(&edge, 0.0, 0.3, 2)?;

    let dm = DeltaMatrix::from_entries(vec![1, 2, 3], &[(0, 1, 1), (0, 2, 2)], 10)?;
    let w = w_functional(&dm, 10, 4)?;

    let small = TorusSpec::nearest_neighbor(2, 4)?;
    let v = small.volume() as usize;
    let mut delta = vec![0.0; v];
    delta[0] = 1.0;
    let t3 = convolve_power(&small, &delta, 3)?;
    let ones = convolve_power(&small, &vec![1.0; v], 4)?;
    let rw1 = RwSpectrum::new(&TorusSpec::nearest_neighbor(1, 4)?)?;
    let rw3 = RwSpectrum::new(&TorusSpec::nearest_neighbor(3, 5)?)?;

    Ok(vec![
        check("triangle_chi_half", 2.25, half.chi[0], 1e-12),
        check("triangle_connect_half", 0.625, half.connect[0][1], 1e-12),
        check("k4_chi_p0", 1.0, exact_stats(&k4, 0.0, 1)?.chi[0], 1e-12),
        check("k4_chi_p1", 4.0, exact_stats(&k4, 1.0, 1)?.chi[0], 1e-12),
        check("cycle4_two_level_configurations", 81.0, two.configurations as f64, 0.0),
        check("cycle4_two_level_mismatches", 0.0, two.mismatches as f64, 0.0),
        check("cycle4_joined_pairs_law", two.joined_pairs_formula, two.joined_pairs, 1e-12),
        check("equal_levels_n_zero", 0.0, same.expected_n, 1e-12),
        check("single_edge_mismatches", 0.0, single.mismatches as f64, 0.0),
        check("w_instance_t_min", 20.0 / 49.0, w.t_min, 1e-12),
        check("w_instance_direct", w_direct(&dm, w.t_min, 10, 4), w.w_value, 1e-9),
        check("fft_delta_cubed", 1.0, t3[0], 1e-12),
        check("fft_delta_cubed_mass", 1.0, t3.iter().sum(), 1e-12),
        check("fft_ones_fourth", (v as f64).powi(3), ones[5], 1e-10),
        check("rw_p0", 1.0, rw3.p(0), 1e-12),
        check("rw_p1_nn", 0.0, rw3.p(1), 1e-12),
        check("rw_cycle4_p2", 0.5, rw1.p(2), 1e-12),
        check("rw_cycle4_p3", 0.0, rw1.p(3), 1e-12),
    ])
}

pub fn run_oracle_check(dir: &mut OutputDir) -> Result<(), CliError> {
    let checks = oracle_suite()?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    #[derive(Serialize)]
    struct OracleOutput<'a> {
        schema_version: u32,
        passed: usize,
        failed: usize,
        checks: &'a [Check],
    }
    dir.json(
        "oracle.json",
        &OracleOutput { schema_version: SCHEMA_VERSION, passed: checks.len() - failed.len(), failed: failed.len(), checks: &checks },
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}
