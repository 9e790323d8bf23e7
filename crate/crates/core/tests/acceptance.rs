//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{correlation, iid_scenario, randn, signatures, CARRIER};
use noncobf::array_channel::{PhaseModel, SignatureSet};
use noncobf::eval::{cdf_study, empirical_cdf, evaluate_su, ArrayConfig, Design, LosMode, PathCount, ScenarioConfig};
use noncobf::mu::{rzf_slnr_bf_with_regularization, zf_stationary_bf, zf_worst_case_bf, MultiUserScenario};
use noncobf::spectral::alignment;
use noncobf::su::{
    dc_run, stationary_bf, stationary_power_bounds, worst_case_bf, worst_case_power, WorstCaseOptions,
};
use noncobf::{CMatrix, CVector, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit_s: f64, msg: String) -> Outcome {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("{msg}, {:.2} s (limit {limit_s} s)", elapsed.as_secs_f64()),
    )
}

fn unit_probe(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    let x = randn(rng, n, 1).column(0).into_owned();
    let norm = x.norm();
    x / C64::from(norm)
}

fn eigen_solution() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 16;
    let (mut worst_residual, mut worst_probe, mut worst_slack) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..500 {
        let l = rng.random_range(1..=6);
        let a = signatures(&mut rng, n, l);
        let rank = rng.random_range(1..=l);
        let r = correlation(&mut rng, l, rank);
        let bf = stationary_bf(&a, &r).map_err(|e| e.to_string())?;
        let lambda = bf.objective_value;
        let m = a.covariance(&r).unwrap();
        let residual = (&m * &bf.g - &bf.g * C64::from(lambda)).norm() / lambda;
        worst_residual = worst_residual.max(residual);
        for _ in 0..1000 {
            let p = unit_probe(&mut rng, n);
            let q = p.dotc(&(&m * &p)).re;
            worst_probe = worst_probe.max((q - lambda) / lambda);
        }
        let b = stationary_power_bounds(&a, &r).map_err(|e| e.to_string())?;
        worst_slack = worst_slack.min((lambda - b.lower) / lambda).min((b.upper - lambda) / lambda);
    }
    let ok = worst_residual <= 1e-9 && worst_probe <= 0.0 && worst_slack >= -1e-9;
    let msg = format!(
        "max residual/lambda {worst_residual:.2e}, max (probe-lambda)/lambda {worst_probe:.2e}, min bound slack {worst_slack:.2e}"
    );
    if !ok {
        return Err(msg);
    }
    within(start.elapsed(), 10.0, msg)
}

fn orthogonal_anchor() -> Outcome {
    let a = SignatureSet::new(CMatrix::identity(8, 3), CARRIER).unwrap();
    let r = CMatrix::identity(3, 3);
    let bf = stationary_bf(&a, &r).map_err(|e| e.to_string())?;
    let trace = a.covariance(&r).unwrap().trace().re;
    // Coherent stationary power: |A v|^2 = tr(A^H A) for every phase vector.
    let gap_db = 10.0 * (trace / bf.objective_value).log10();
    let expected = 10.0 * 3f64.log10();
    check(
        (gap_db - expected).abs() <= 1e-6 && (bf.objective_value - trace / 3.0).abs() <= 1e-12,
        format!("gap {gap_db:.9} dB, expected {expected:.9} dB"),
    )
}

/// Minimum of `|sum_l z_l e^{j theta_l}|^2` on a 64-point grid per phase,
/// the first phase fixed at zero.
fn grid_minimum(z: &[C64]) -> f64 {
    let steps = 64;
    let phasor = |i: usize| C64::from_polar(1.0, 2.0 * PI * i as f64 / steps as f64);
    let mut best = f64::INFINITY;
    match z.len() {
        2 => {
            for i in 0..steps {
                best = best.min((z[0] + z[1] * phasor(i)).norm_sqr());
            }
        }
        3 => {
            for i in 0..steps {
                let partial = z[0] + z[1] * phasor(i);
                for j in 0..steps {
                    best = best.min((partial + z[2] * phasor(j)).norm_sqr());
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

fn worst_case_closed_form() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let n = 6;
    let mut worst_excess = 0.0f64;
    for _ in 0..200 {
        let l = rng.random_range(2..=3);
        let a = signatures(&mut rng, n, l);
        let g = unit_probe(&mut rng, n);
        let z: Vec<C64> = (0..l).map(|i| g.dotc(&a.matrix().column(i))).collect();
        let closed = worst_case_power(&g, &a);
        let grid = grid_minimum(&z);
        // Each grid phase is within pi/64 of any target phase.
        let delta: f64 = z[1..].iter().map(|x| x.norm()).sum::<f64>() * PI / 64.0;
        let scale: f64 = z.iter().map(|x| x.norm()).sum::<f64>().powi(2);
        if grid < closed - 1e-12 * scale {
            return Err(format!("grid {grid} below closed form {closed}"));
        }
        if grid > (closed.sqrt() + delta).powi(2) + 1e-12 * scale {
            return Err(format!("grid {grid} above resolution bound of closed form {closed}"));
        }
        worst_excess = worst_excess.max((grid - closed) / scale);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let col = randn(&mut rng, n, 1);
    let pair = SignatureSet::new(CMatrix::from_columns(&[col.column(0), col.column(0)]), CARRIER).unwrap();
    let g = unit_probe(&mut rng, n);
    let equal = worst_case_power(&g, &pair);
    if equal != 0.0 {
        return Err(format!("equal pair gives {equal:e}, expected exactly 0"));
    }
    within(
        start.elapsed(),
        30.0,
        format!("200 instances within grid resolution (max relative excess {worst_excess:.2e}), equal pair exactly 0"),
    )
}

fn dc_behavior() -> Outcome {
    let opts = WorstCaseOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_drop = 0.0f64;
    for _ in 0..30 {
        let l = rng.random_range(2..=5);
        let a = randn(&mut rng, 8, l);
        for main in 0..l {
            let start = unit_probe(&mut rng, 8);
            let run = dc_run(&a, main, &start, &opts);
            for w in run.objective_trace.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
        }
    }
    if worst_drop > 1e-10 {
        return Err(format!("DC objective dropped by {worst_drop:e}"));
    }

    let n = 4;
    let mut m = CMatrix::zeros(n, 2);
    m[(0, 0)] = C64::new(2.0, 0.0);
    m[(1, 1)] = C64::new(1.0, 0.0);
    let a = SignatureSet::new(m, CARRIER).unwrap();
    let bf = worst_case_bf(&a, &opts).map_err(|e| e.to_string())?;
    let e1 = CVector::from_fn(n, |i, _| C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
    let align = alignment(&bf.g, &e1);

    // Oracle: within span{a1, a2} only the split angle matters.
    let steps = (PI / 2.0 / 1e-3).ceil() as usize;
    let (mut best, mut best_t) = (f64::NEG_INFINITY, 0.0);
    for i in 0..=steps {
        let t = (i as f64 * 1e-3).min(PI / 2.0);
        let v = (2.0 * t.cos() - t.sin()).max(0.0).powi(2);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let ok = (bf.objective_value - 4.0).abs() <= 1e-4 && align >= 1.0 - 1e-6 && (best - 4.0).abs() <= 1e-4 && best_t == 0.0;
    check(
        ok,
        format!(
            "max per-step drop {worst_drop:.1e}; orthogonal (2,1): gain {:.9}, alignment {align:.12}, sweep optimum {best:.6} at angle {best_t}",
            bf.objective_value
        ),
    )
}

fn zf_guarantee() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let opts = WorstCaseOptions::default();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let paths: Vec<usize> = (0..4).map(|_| rng.random_range(1..=3)).collect();
        let s = iid_scenario(&mut rng, 16, &paths, 0.1);
        for k in 0..4 {
            for g in [
                zf_stationary_bf(&s, k).map_err(|e| e.to_string())?.g,
                zf_worst_case_bf(&s, k, &opts).map_err(|e| e.to_string())?.g,
            ] {
                for kp in (0..4).filter(|&kp| kp != k) {
                    let user = s.user(kp).unwrap();
                    for _ in 0..1000 {
                        let v = user.phase_model.sample(paths[kp], &mut rng).unwrap();
                        let h = user.signatures.matrix() * v;
                        worst = worst.max(g.dotc(&h).norm_sqr() / h.norm_squared());
                    }
                }
            }
        }
    }
    check(worst <= 1e-14, format!("max normalized leakage {worst:.2e} over 10 scenarios"))
}

/// `(B B^H + rho I)^{-1}` directly and through the Woodbury identity.
fn woodbury_error(b: &CMatrix, rho: f64) -> f64 {
    let n = b.nrows();
    let m = b.ncols();
    let direct = (b * b.adjoint() + CMatrix::identity(n, n) * C64::from(rho))
        .try_inverse()
        .expect("positive definite");
    let inner = (CMatrix::identity(m, m) * C64::from(rho) + b.adjoint() * b)
        .try_inverse()
        .expect("positive definite");
    let woodbury = (CMatrix::identity(n, n) - b * inner * b.adjoint()) / C64::from(rho);
    (&direct - &woodbury).norm() / direct.norm()
}

fn rzf_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut min_su, mut min_zf, mut max_wood) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for _ in 0..50 {
        let k_total = rng.random_range(2..=4);
        let paths: Vec<usize> = (0..k_total).map(|_| rng.random_range(1..=3)).collect();
        let s: MultiUserScenario = iid_scenario(&mut rng, 16, &paths, 0.1);
        for k in 0..k_total {
            let user = s.user(k).unwrap();
            let su = stationary_bf(&user.signatures, &CMatrix::identity(paths[k], paths[k])).unwrap();
            let zf = zf_stationary_bf(&s, k).map_err(|e| e.to_string())?;
            let big = rzf_slnr_bf_with_regularization(&s, k, 1e6).map_err(|e| e.to_string())?;
            let small = rzf_slnr_bf_with_regularization(&s, k, 1e-8).map_err(|e| e.to_string())?;
            min_su = min_su.min(alignment(&big.g, &su.g));
            min_zf = min_zf.min(alignment(&small.g, &zf.g));
            let b = noncobf::mu::interference_matrix(&s, k).unwrap();
            for rho in [1e-2, 1.0, 1e2] {
                max_wood = max_wood.max(woodbury_error(&b, rho));
            }
        }
    }
    check(
        min_su >= 1.0 - 1e-4 && min_zf >= 1.0 - 1e-3 && max_wood <= 1e-8,
        format!("min alignment rho=1e6 vs SU {min_su:.9}, rho=1e-8 vs ZF {min_zf:.9}, max Woodbury error {max_wood:.2e}"),
    )
}

fn monte_carlo_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (mut worst_rel, mut worst_min_gap) = (0.0f64, f64::INFINITY);
    for _ in 0..5 {
        let l = rng.random_range(2..=5);
        let a = signatures(&mut rng, 16, l);
        let bf = stationary_bf(&a, &CMatrix::identity(l, l)).unwrap();
        let rec = evaluate_su(&bf, &a, &PhaseModel::IidUniform, 100_000, &mut rng).map_err(|e| e.to_string())?;
        let mean = rec.samples.iter().sum::<f64>() / rec.samples.len() as f64;
        worst_rel = worst_rel.max((mean - rec.stationary_gain).abs() / rec.stationary_gain);
        let min = rec.samples.iter().copied().fold(f64::INFINITY, f64::min);
        worst_min_gap = worst_min_gap.min(min - rec.worst_case_gain);
    }
    check(
        worst_rel <= 0.02 && worst_min_gap >= -1e-9,
        format!("max |mean - stationary|/stationary {worst_rel:.4}, min (sample min - worst case) {worst_min_gap:.3e}"),
    )
}

fn regime_gaps(mode: LosMode) -> Result<(f64, f64, f64), String> {
    let config = ScenarioConfig {
        num_users: 1,
        paths_per_user: PathCount::Fixed(20),
        array: ArrayConfig {
            n_horizontal: 8,
            n_vertical: 8,
            spacing_in_wavelengths: 0.5,
        },
        los_mode: mode,
        rician_factor_db: 10.0,
        num_locations: 100,
        ..Default::default()
    };
    let study = cdf_study(&config, &[Design::Coherent, Design::Uniform, Design::Stationary], 11)
        .map_err(|e| e.to_string())?;
    let medians: Vec<f64> = study
        .designs
        .iter()
        .map(|d| empirical_cdf(&d.values_db()).map(|c| c.median()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    Ok((medians[0], medians[1], medians[2]))
}

fn regimes() -> Outcome {
    let start = Instant::now();
    let (coh, uni, sta) = regime_gaps(LosMode::Nlos)?;
    let nlos_ok = uni < sta && sta < coh && coh - sta >= 3.0;
    let (lcoh, _, lsta) = regime_gaps(LosMode::Los)?;
    let los_ok = lcoh - lsta <= 2.0;
    let msg = format!(
        "NLOS medians uniform {uni:.2} < stationary {sta:.2} < coherent {coh:.2} dB (gap {:.2} dB); LOS gap {:.2} dB",
        coh - sta,
        lcoh - lsta
    );
    if !(nlos_ok && los_ok) {
        return Err(msg);
    }
    within(start.elapsed(), 300.0, msg)
}

fn run_cli(out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_noncobf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited with {status}"))
    }
}

fn determinism() -> Outcome {
    let small = [
        "--seed", "7", "--set", "array.n_horizontal=4", "--set", "array.n_vertical=4",
        "--set", "num_users=3", "--set", "paths_per_user=3", "--set", "num_locations=8",
        "--set", "num_selections=4",
    ];
    let commands: [&[&str]; 5] = [
        &["design-su", "--draws", "50"],
        &["design-mu", "--draws", "50"],
        &["sweep", "--freq-points", "9"],
        &["cdf-study", "--freq-points", "5"],
        &["cdf-study", "--freq-points", "5", "--set", "num_users=1"],
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (i, cmd) in commands.iter().enumerate() {
        let args: Vec<&str> = cmd.iter().chain(small.iter()).copied().collect();
        let a = dir.path().join(format!("{i}a"));
        let b = dir.path().join(format!("{i}b"));
        run_cli(&a, &args)?;
        run_cli(&b, &args)?;
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(format!("{} wrote nothing", cmd[0]));
        }
        for name in names {
            let x = std::fs::read(a.join(&name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.join(&name)).map_err(|e| format!("{name:?}: {e}"))?;
            if x != y {
                return Err(format!("{} output {name:?} differs between runs", cmd[0]));
            }
            files += 1;
        }
    }
    Ok(format!("{files} output files byte-identical across reruns"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("eigen-solution correctness", eigen_solution),
        ("orthogonal equal-power anchor", orthogonal_anchor),
        ("worst-case closed form vs phase grid", worst_case_closed_form),
        ("DC iteration behavior", dc_behavior),
        ("zero-forcing leakage", zf_guarantee),
        ("regularized ZF limits", rzf_limits),
        ("Monte-Carlo consistency", monte_carlo_consistency),
        ("LOS/NLOS regime reproduction", regimes),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("PASS [{}] {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{}] {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
