//! Single-user beamformers.
//!
//! All designs return a unit-norm weight vector `g`. The received useful
//! amplitude is `g^H h` with `h = A v`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array_channel::SignatureSet;
use crate::spectral::{dominant_eigpair, hermitian_eigen, HermitianMatrix};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Relative eigenvalue threshold for the numerical rank of `A R A^H`.
pub const EIG_RANK_TOL: f64 = 1e-10;

const INNER_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Coherent,
    Uniform,
    Stationary,
    WorstCase,
    ZfStationary,
    ZfWorstCase,
    RzfStationary,
}

/// Iterative-design bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Outer DC iterations summed over all runs.
    pub iterations: usize,
    /// Every run met the tolerance before the iteration cap.
    pub converged: bool,
    /// No beamformer achieves a positive worst-case power.
    pub zero_worst_case: bool,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub g: CVector,
    pub criterion: Criterion,
    /// Criterion-specific: beamforming power, stationary power, worst-case
    /// power or SLNR.
    pub objective_value: f64,
    pub diagnostics: Option<Diagnostics>,
}

impl Beamformer {
    /// `|g^H h|^2`.
    pub fn power_on(&self, h: &CVector) -> f64 {
        self.g.dotc(h).norm_sqr()
    }

    pub fn num_antennas(&self) -> usize {
        self.g.len()
    }
}

fn normalized(v: &CVector) -> Option<CVector> {
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| v / C64::from(n))
}

/// Matched filter `h / |h|`.
pub fn coherent_bf(h: &CVector) -> Result<Beamformer> {
    let g = normalized(h).ok_or_else(|| Error::DegenerateChannel("channel vector is zero".into()))?;
    Ok(Beamformer {
        g,
        criterion: Criterion::Coherent,
        objective_value: h.norm_squared(),
        diagnostics: None,
    })
}

/// `1 / sqrt(N)` on every antenna. The objective is left at zero since it
/// depends on the channel.
pub fn uniform_bf(n: usize) -> Result<Beamformer> {
    if n == 0 {
        return Err(Error::invalid("uniform beamformer needs N >= 1"));
    }
    Ok(Beamformer {
        g: CVector::from_element(n, C64::new(1.0 / (n as f64).sqrt(), 0.0)),
        criterion: Criterion::Uniform,
        objective_value: 0.0,
        diagnostics: None,
    })
}

/// Dominant eigenvector of `A R A^H` and its eigenvalue.
pub(crate) fn stationary_from_matrix(a: &CMatrix, r: &CMatrix) -> Result<(CVector, f64)> {
    let l = a.ncols();
    if r.nrows() != l || r.ncols() != l {
        return Err(Error::invalid(format!(
            "phase correlation is {}x{}, expected {l}x{l}",
            r.nrows(),
            r.ncols()
        )));
    }
    let cov = HermitianMatrix::new(a * r * a.adjoint())?;
    let pair = dominant_eigpair(&cov)?;
    if pair.degenerate || pair.value <= 0.0 {
        return Err(Error::DegenerateChannel(
            "stationary channel covariance is numerically zero".into(),
        ));
    }
    Ok((pair.vector, pair.value))
}

/// Maximizes `E|g^H h|^2 = g^H A R A^H g` over unit `g`.
pub fn stationary_bf(a: &SignatureSet, r: &CMatrix) -> Result<Beamformer> {
    let (g, value) = stationary_from_matrix(a.matrix(), r)?;
    Ok(Beamformer {
        g,
        criterion: Criterion::Stationary,
        objective_value: value,
        diagnostics: None,
    })
}

/// `g^H A R A^H g`.
pub fn stationary_power(g: &CVector, a: &SignatureSet, r: &CMatrix) -> Result<f64> {
    let cov = a.covariance(r)?;
    Ok(g.dotc(&(cov * g)).re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBounds {
    pub lower: f64,
    pub upper: f64,
    pub rank: usize,
}

/// `tr / rank <= lambda_max(A R A^H) <= tr`.
pub fn stationary_power_bounds(a: &SignatureSet, r: &CMatrix) -> Result<PowerBounds> {
    let cov = HermitianMatrix::new(a.covariance(r)?)?;
    let upper = (0..cov.dim()).map(|i| cov.matrix()[(i, i)].re).sum::<f64>();
    let (values, _) = hermitian_eigen(&cov);
    let top = values[0];
    let rank = if top > 0.0 {
        values.iter().filter(|&&x| x > EIG_RANK_TOL * top).count()
    } else {
        0
    };
    let lower = if rank == 0 { 0.0 } else { upper / rank as f64 };
    Ok(PowerBounds { lower, upper, rank })
}

/// `|g^H a_l|` for every column.
pub fn path_amplitudes(g: &CVector, a: &CMatrix) -> Vec<f64> {
    a.column_iter().map(|c| g.dotc(&c).norm()).collect()
}

/// Strongest amplitude minus the sum of all others.
fn polygon_deficit(z: &[f64]) -> f64 {
    let Some(strongest) = argmax(z) else {
        return 0.0;
    };
    let others: f64 = z
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != strongest)
        .map(|(_, x)| x)
        .sum();
    z[strongest] - others
}

fn argmax(z: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in z.iter().enumerate() {
        if best.is_none_or(|b| x > z[b]) {
            best = Some(i);
        }
    }
    best
}

pub(crate) fn worst_case_power_matrix(g: &CVector, a: &CMatrix) -> f64 {
    polygon_deficit(&path_amplitudes(g, a)).max(0.0).powi(2)
}

/// `min over independent path phases of |g^H A v|^2`, in closed form.
///
/// With `z_l = |g^H a_l|`, the phasors `z_l e^{j eps_l}` can close a polygon
/// unless the longest side exceeds the sum of the rest, so the minimum is
/// `max(0, z_max - sum_others)^2`.
pub fn worst_case_power(g: &CVector, a: &SignatureSet) -> f64 {
    worst_case_power_matrix(g, a.matrix())
}

/// A phase vector attaining [`worst_case_power`].
pub fn worst_case_phases(g: &CVector, a: &SignatureSet) -> CVector {
    let coeffs: Vec<C64> = a.matrix().column_iter().map(|c| g.dotc(&c)).collect();
    let z: Vec<f64> = coeffs.iter().map(|c| c.norm()).collect();
    let angles = closing_angles(&z);
    // g^H a_l v_l = z_l e^{j angle_l}
    DVector::from_iterator(
        z.len(),
        coeffs.iter().zip(&angles).map(|(c, &theta)| {
            let undo = if c.norm() > 0.0 { c.conj() / c.norm() } else { C64::new(1.0, 0.0) };
            undo * C64::from_polar(1.0, theta)
        }),
    )
}

/// Directions for sides of lengths `z` that minimize the modulus of their
/// sum: the strongest side against all others when it dominates, otherwise
/// a closed triangle built from three groups of collinear sides.
fn closing_angles(z: &[f64]) -> Vec<f64> {
    let l = z.len();
    let mut angles = vec![0.0; l];
    let Some(strongest) = argmax(z) else {
        return angles;
    };
    if polygon_deficit(z) >= 0.0 {
        for (i, a) in angles.iter_mut().enumerate() {
            *a = if i == strongest { 0.0 } else { std::f64::consts::PI };
        }
        return angles;
    }
    let total: f64 = z.iter().sum();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&i, &j| z[j].total_cmp(&z[i]));
    // Group 1 is the longest prefix with sum <= total / 2; the next side is
    // group 2 on its own and the remainder is group 3. All three satisfy the
    // triangle inequality because no side exceeds total / 2.
    let mut s1 = 0.0;
    let mut split = 0;
    while split < l && s1 + z[order[split]] <= total / 2.0 {
        s1 += z[order[split]];
        split += 1;
    }
    let pivot = order[split.min(l - 1)];
    let s2 = z[pivot];
    let s3 = total - s1 - s2;
    let cos_b = if s1 > 0.0 && s2 > 0.0 {
        ((s3 * s3 - s1 * s1 - s2 * s2) / (2.0 * s1 * s2)).clamp(-1.0, 1.0)
    } else {
        -1.0
    };
    let beta = cos_b.acos();
    let partial = C64::new(s1, 0.0) + C64::from_polar(s2, beta);
    let gamma = (-partial).arg();
    for (rank, &i) in order.iter().enumerate() {
        angles[i] = if rank < split {
            0.0
        } else if i == pivot {
            beta
        } else {
            gamma
        };
    }
    angles
}

/// Knobs for the DC (difference of convex) worst-case design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorstCaseOptions {
    pub max_outer_iters: usize,
    /// Starting points per strongest-path hypothesis: matched filter,
    /// stationary, uniform, then random.
    pub restarts: usize,
    /// Absolute change of the DC objective that ends a run.
    pub tol: f64,
    /// Iteration cap of the convex subproblem solver.
    pub inner_max_iters: usize,
    /// Seed for the random starting points.
    pub seed: u64,
}

impl Default for WorstCaseOptions {
    fn default() -> Self {
        Self {
            max_outer_iters: 100,
            restarts: 4,
            tol: 1e-8,
            inner_max_iters: 10_000,
            seed: 0,
        }
    }
}

/// DC objective `|g^H a_main| - sum_{l != main} |g^H a_l|`.
pub fn dc_objective(g: &CVector, a: &CMatrix, main: usize) -> f64 {
    let z = path_amplitudes(g, a);
    let others: f64 = z
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != main)
        .map(|(_, x)| x)
        .sum();
    z[main] - others
}

/// The convexified subproblem around a reference point.
///
/// Its value at `g` is `-Re(c^H g) + sum_l |a_l^H g|` with
/// `c = a_main (a_main^H g_ref) / |a_main^H g_ref|`, a linear minorant of
/// `|g^H a_main|` that is tight at `g_ref`. At a kink (`a_main^H g_ref = 0`)
/// the coefficient is taken as 1.
struct ConvexSurrogate {
    a_main: CVector,
    others: CMatrix,
    gram: CMatrix,
    cross: CVector,
    lipschitz: f64,
}

impl ConvexSurrogate {
    fn new(a_main: CVector, others: CMatrix) -> Self {
        let gram = others.adjoint() * &others;
        let cross = others.adjoint() * &a_main;
        let lipschitz = if gram.nrows() == 0 {
            0.0
        } else {
            gram.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max)
        };
        Self {
            a_main,
            others,
            gram,
            cross,
            lipschitz,
        }
    }

    fn coefficient(&self, g_ref: &CVector) -> C64 {
        let w = self.a_main.dotc(g_ref);
        if w.norm() > 0.0 {
            w / w.norm()
        } else {
            C64::new(1.0, 0.0)
        }
    }

    fn value(&self, coef: C64, g: &CVector) -> f64 {
        let c = &self.a_main * coef;
        let penalty: f64 = self.others.column_iter().map(|a| a.dotc(g).norm()).sum();
        -c.dotc(g).re + penalty
    }

    /// Minimizes the surrogate over the unit ball.
    ///
    /// By minimax duality the minimum equals `-min |c - B u|` over the
    /// polydisc `|u_l| <= 1` (B = other signatures); the dual is solved with
    /// accelerated projected gradient on the small Gram system, and the
    /// primal minimizer is `d / |d|` with `d = c - B u*` (or `0` when
    /// `d = 0`). The result is never worse than `g_ref`.
    fn minimize(&self, g_ref: &CVector, warm: &mut CVector, max_iters: usize) -> CVector {
        let coef = self.coefficient(g_ref);
        let c = &self.a_main * coef;
        let m = self.others.ncols();
        if m > 0 && self.lipschitz > 0.0 {
            let b = &self.cross * coef;
            let step = 1.0 / self.lipschitz;
            let mut u = warm.clone();
            let mut y = u.clone();
            let mut t = 1.0f64;
            for _ in 0..max_iters {
                let grad = &self.gram * &y - &b;
                let mut next = &y - grad * C64::from(step);
                next.iter_mut().for_each(|z| {
                    let r = z.norm();
                    if r > 1.0 {
                        *z /= r;
                    }
                });
                let delta = &next - &u;
                let moved = delta.norm();
                let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                // restart momentum when it points uphill
                if (&y - &next).dotc(&delta).re > 0.0 {
                    t = 1.0;
                    y = next.clone();
                } else {
                    y = &next + delta * C64::from((t - 1.0) / t_next);
                    t = t_next;
                }
                u = next;
                if moved <= INNER_TOL * (1.0 + u.norm()) {
                    break;
                }
            }
            *warm = u;
        }
        let d = if m > 0 { &c - &self.others * &*warm } else { c.clone() };
        let candidate = if d.norm() <= 1e-12 * c.norm() {
            CVector::zeros(c.len())
        } else {
            &d / C64::from(d.norm())
        };
        if self.value(coef, &candidate) <= self.value(coef, g_ref) {
            candidate
        } else {
            g_ref.clone()
        }
    }
}

fn split_columns(a: &CMatrix, main: usize) -> (CVector, CMatrix) {
    let others: Vec<CVector> = a
        .column_iter()
        .enumerate()
        .filter(|&(l, _)| l != main)
        .map(|(_, c)| c.into_owned())
        .collect();
    let others = if others.is_empty() {
        CMatrix::zeros(a.nrows(), 0)
    } else {
        CMatrix::from_columns(&others)
    };
    (a.column(main).into_owned(), others)
}

/// Value of the convex surrogate built at `g_ref`, evaluated at `g`.
pub fn dc_surrogate_value(a_main: &CVector, a_others: &CMatrix, g_ref: &CVector, g: &CVector) -> f64 {
    let s = ConvexSurrogate::new(a_main.clone(), a_others.clone());
    s.value(s.coefficient(g_ref), g)
}

/// One DC step: minimizes `-Re(c^H g) + sum_l |g^H a_l|` over `|g| <= 1`,
/// with `c` the subgradient coefficient of `|g^H a_main|` at `g_init`.
///
/// `tol` bounds the relative movement of the dual iterate at which the
/// subproblem solver stops; the returned point never has a larger surrogate
/// value than `g_init`.
pub fn dc_inner_solve(a_main: &CVector, a_others: &CMatrix, g_init: &CVector, tol: f64) -> Result<CVector> {
    if a_others.ncols() > 0 && a_others.nrows() != a_main.len() {
        return Err(Error::invalid("signature dimensions differ"));
    }
    if g_init.len() != a_main.len() {
        return Err(Error::invalid("initial point has the wrong dimension"));
    }
    if g_init.norm() > 1.0 + 1e-12 {
        return Err(Error::invalid("initial point must lie in the unit ball"));
    }
    let s = ConvexSurrogate::new(a_main.clone(), a_others.clone());
    let mut warm = CVector::zeros(a_others.ncols());
    let iters = if tol > 0.0 { ((1.0 / tol).log10() * 2000.0) as usize } else { 10_000 };
    Ok(s.minimize(g_init, &mut warm, iters.clamp(1_000, 50_000)))
}

/// Trace of one DC run for a fixed strongest-path hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct DcRun {
    pub g: CVector,
    /// DC objective at the start point and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates the DC linearization for `max |g^H a_main| - sum |g^H a_l|`.
pub fn dc_run(a: &CMatrix, main: usize, g_init: &CVector, opts: &WorstCaseOptions) -> DcRun {
    let (a_main, others) = split_columns(a, main);
    let surrogate = ConvexSurrogate::new(a_main, others);
    let mut g = g_init.clone();
    let n0 = g.norm();
    if n0 > 1.0 {
        g /= C64::from(n0);
    }
    let mut warm = CVector::zeros(a.ncols() - 1);
    let mut f = dc_objective(&g, a, main);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_outer_iters {
        let g_next = surrogate.minimize(&g, &mut warm, opts.inner_max_iters);
        let f_next = dc_objective(&g_next, a, main);
        trace.push(f_next);
        iterations = it + 1;
        let change = (f_next - f).abs();
        g = g_next;
        f = f_next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    DcRun {
        g,
        objective_trace: trace,
        iterations,
        converged,
    }
}

pub(crate) fn worst_case_from_matrix(a: &CMatrix, opts: &WorstCaseOptions) -> Result<(CVector, f64, Diagnostics)> {
    let n = a.nrows();
    let l = a.ncols();
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    if l == 0 || max_norm <= 0.0 {
        return Err(Error::DegenerateChannel("all spatial signatures are zero".into()));
    }
    let stationary = stationary_from_matrix(a, &CMatrix::identity(l, l))?.0;
    let uniform = uniform_bf(n)?.g;
    let restarts = opts.restarts.max(1);
    let mut diag = Diagnostics {
        converged: true,
        ..Default::default()
    };
    let mut best: Option<(CVector, f64)> = None;
    for main in 0..l {
        // a vanished column (e.g. after ZF deflation) cannot be the strongest path
        if norms[main] <= 1e-12 * max_norm {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(main as u64);
        for start in 0..restarts {
            let init = match start {
                0 => a.column(main) / C64::from(norms[main]),
                1 => stationary.clone(),
                2 => uniform.clone(),
                _ => {
                    let v = CVector::from_fn(n, |_, _| {
                        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                    });
                    normalized(&v).unwrap_or_else(|| uniform.clone())
                }
            };
            let run = dc_run(a, main, &init, opts);
            diag.iterations += run.iterations;
            diag.runs += 1;
            diag.converged &= run.converged;
            let g = normalized(&run.g).unwrap_or(init);
            let power = worst_case_power_matrix(&g, a);
            if best.as_ref().is_none_or(|(_, p)| power > *p) {
                best = Some((g, power));
            }
        }
    }
    let (mut g, power) = best.expect("at least one non-zero column");
    crate::spectral::canonical_phase(&mut g);
    let scale: f64 = norms.iter().sum();
    diag.zero_worst_case = power <= 1e-20 * scale * scale;
    Ok((g, power, diag))
}

/// Maximizes the worst-case beamforming power by running the DC iteration
/// once per strongest-path hypothesis and several starting points, keeping
/// the best result. DC is a local method; the answer is not certified
/// globally optimal.
pub fn worst_case_bf(a: &SignatureSet, opts: &WorstCaseOptions) -> Result<Beamformer> {
    let (g, power, diagnostics) = worst_case_from_matrix(a.matrix(), opts)?;
    Ok(Beamformer {
        g,
        criterion: Criterion::WorstCase,
        objective_value: power,
        diagnostics: Some(diagnostics),
    })
}
