//! Multi-user beamformers: zero forcing through a per-user pre-beamforming
//! projector, and the regularized (SLNR-maximizing) design.

use serde::Serialize;

use crate::array_channel::{PhaseModel, SignatureSet};
use crate::spectral::{
    generalized_dominant_eigvec, null_space_projector, HermitianMatrix, Projector, DEFAULT_RANK_TOL,
};
use crate::su::{self, Beamformer, Criterion, WorstCaseOptions};
use crate::{CMatrix, CVector, Error, Result, C64};

/// `|P_k A_k|_F <= ZF_INFEASIBLE_TOL * |A_k|_F` means ZF leaves user `k`
/// nothing to work with.
pub const ZF_INFEASIBLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub signatures: SignatureSet,
    pub phase_model: PhaseModel,
}

impl UserChannel {
    pub fn correlation(&self) -> Result<CMatrix> {
        self.phase_model.correlation(self.signatures.num_paths())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserScenario {
    users: Vec<UserChannel>,
    symbol_powers: Vec<f64>,
    noise_variance: f64,
    rank_tolerance: f64,
}

impl MultiUserScenario {
    pub fn new(users: Vec<UserChannel>, symbol_powers: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::invalid("scenario needs at least one user"));
        }
        if symbol_powers.len() != users.len() {
            return Err(Error::invalid("one symbol power per user is required"));
        }
        let n = users[0].signatures.num_antennas();
        if users.iter().any(|u| u.signatures.num_antennas() != n) {
            return Err(Error::invalid("all users must share the antenna count"));
        }
        if symbol_powers.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid("symbol powers must be positive"));
        }
        if !(noise_variance.is_finite() && noise_variance > 0.0) {
            return Err(Error::invalid("noise variance must be positive"));
        }
        for u in &users {
            u.correlation()?;
        }
        Ok(Self {
            users,
            symbol_powers,
            noise_variance,
            rank_tolerance: DEFAULT_RANK_TOL,
        })
    }

    /// Relative singular-value threshold used by the ZF projectors.
    pub fn with_rank_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid("rank tolerance must be positive"));
        }
        self.rank_tolerance = tol;
        Ok(self)
    }

    pub fn users(&self) -> &[UserChannel] {
        &self.users
    }

    pub fn user(&self, k: usize) -> Result<&UserChannel> {
        self.users
            .get(k)
            .ok_or_else(|| Error::invalid(format!("user index {k} out of range (K = {})", self.users.len())))
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.users[0].signatures.num_antennas()
    }

    pub fn symbol_powers(&self) -> &[f64] {
        &self.symbol_powers
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    /// `rho_k = sigma^2 / p_k`.
    pub fn regularization(&self, k: usize) -> f64 {
        self.noise_variance / self.symbol_powers[k]
    }
}

/// Signatures of every other user side by side; `N x 0` when `K = 1`.
pub fn interference_matrix(scenario: &MultiUserScenario, k: usize) -> Result<CMatrix> {
    scenario.user(k)?;
    let cols: Vec<CVector> = scenario
        .users
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .flat_map(|(_, u)| u.signatures.matrix().column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
        .collect();
    Ok(if cols.is_empty() {
        CMatrix::zeros(scenario.num_antennas(), 0)
    } else {
        CMatrix::from_columns(&cols)
    })
}

/// Block-diagonal phase correlation of every other user.
pub fn interference_correlation(scenario: &MultiUserScenario, k: usize) -> Result<CMatrix> {
    scenario.user(k)?;
    let blocks: Vec<CMatrix> = scenario
        .users
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, u)| u.correlation())
        .collect::<Result<_>>()?;
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(total, total);
    let mut at = 0;
    for b in &blocks {
        out.view_mut((at, at), (b.nrows(), b.ncols())).copy_from(b);
        at += b.nrows();
    }
    Ok(out)
}

/// Projector onto the orthogonal complement of all other users' signatures.
pub fn zf_prebeamformer(scenario: &MultiUserScenario, k: usize) -> Result<Projector> {
    let interference = interference_matrix(scenario, k)?;
    null_space_projector(&interference, scenario.rank_tolerance)
}

/// `P_k A_k`, or [`Error::ZfInfeasible`] when it vanishes.
fn deflated_signatures(scenario: &MultiUserScenario, k: usize) -> Result<(Projector, CMatrix)> {
    let p = zf_prebeamformer(scenario, k)?;
    let a = scenario.user(k)?.signatures.matrix();
    let pa = p.apply_matrix(a);
    if pa.norm() <= ZF_INFEASIBLE_TOL * a.norm() {
        return Err(Error::ZfInfeasible { user: k });
    }
    Ok((p, pa))
}

fn finish_zf(p: &Projector, g_tilde: &CVector) -> Result<CVector> {
    let g = p.apply(g_tilde);
    let n = g.norm();
    if n == 0.0 {
        return Err(Error::DegenerateChannel("projected beamformer vanished".into()));
    }
    let mut g = g / C64::from(n);
    crate::spectral::canonical_phase(&mut g);
    Ok(g)
}

/// Stationary design on the equivalent channel `P_k A_k`, lifted back
/// through `P_k`.
pub fn zf_stationary_bf(scenario: &MultiUserScenario, k: usize) -> Result<Beamformer> {
    let (p, pa) = deflated_signatures(scenario, k)?;
    let r = scenario.user(k)?.correlation()?;
    let (g_tilde, value) = su::stationary_from_matrix(&pa, &r)?;
    Ok(Beamformer {
        g: finish_zf(&p, &g_tilde)?,
        criterion: Criterion::ZfStationary,
        objective_value: value,
        diagnostics: None,
    })
}

/// Worst-case design on the deflated signatures `P_k a_{k,l}`.
pub fn zf_worst_case_bf(scenario: &MultiUserScenario, k: usize, opts: &WorstCaseOptions) -> Result<Beamformer> {
    let (p, pa) = deflated_signatures(scenario, k)?;
    let (g_tilde, _, diagnostics) = su::worst_case_from_matrix(&pa, opts)?;
    let g = finish_zf(&p, &g_tilde)?;
    // g and g_tilde see the same deflated signatures; report on the original
    // ones, which only differ by components the projector removes.
    let objective_value = su::worst_case_power_matrix(&g, scenario.user(k)?.signatures.matrix());
    Ok(Beamformer {
        g,
        criterion: Criterion::ZfWorstCase,
        objective_value,
        diagnostics: Some(diagnostics),
    })
}

/// Numerator `A_k R_k A_k^H` and denominator `Å R̊ Å^H + rho I` of the
/// stationary SLNR.
pub fn slnr_matrices(scenario: &MultiUserScenario, k: usize, rho: f64) -> Result<(HermitianMatrix, HermitianMatrix)> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid("regularization must be positive"));
    }
    let user = scenario.user(k)?;
    let num = HermitianMatrix::new(user.signatures.covariance(&user.correlation()?)?)?;
    let b = interference_matrix(scenario, k)?;
    let rb = interference_correlation(scenario, k)?;
    let n = scenario.num_antennas();
    let den = &b * rb * b.adjoint() + CMatrix::identity(n, n) * C64::from(rho);
    Ok((num, HermitianMatrix::new(den)?))
}

/// Stationary signal-to-leakage-and-noise ratio of `g` for user `k`.
pub fn stationary_slnr(scenario: &MultiUserScenario, k: usize, g: &CVector) -> Result<f64> {
    let (num, den) = slnr_matrices(scenario, k, scenario.regularization(k))?;
    Ok(num.quadratic_form(g) / den.quadratic_form(g))
}

/// SLNR-optimal beamformer with an explicit regularization `rho`.
pub fn rzf_slnr_bf_with_regularization(scenario: &MultiUserScenario, k: usize, rho: f64) -> Result<Beamformer> {
    let (num, den) = slnr_matrices(scenario, k, rho)?;
    let g = generalized_dominant_eigvec(&num, &den)?;
    let objective_value = num.quadratic_form(&g) / den.quadratic_form(&g);
    Ok(Beamformer {
        g,
        criterion: Criterion::RzfStationary,
        objective_value,
        diagnostics: None,
    })
}

/// Regularized ZF: maximizes the stationary SLNR with `rho_k = sigma^2 / p_k`.
pub fn rzf_slnr_bf(scenario: &MultiUserScenario, k: usize) -> Result<Beamformer> {
    rzf_slnr_bf_with_regularization(scenario, k, scenario.regularization(k))
}

/// What ZF pre-beamforming leaves for one user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZfFeasibility {
    /// One-based user label.
    pub user: usize,
    pub rank_deflated: usize,
    /// `|P_k A_k|_F^2 / |A_k|_F^2`.
    pub retained_power_fraction: f64,
    pub feasible: bool,
}

pub fn zf_feasibility(scenario: &MultiUserScenario) -> Result<Vec<ZfFeasibility>> {
    (0..scenario.num_users())
        .map(|k| {
            let p = zf_prebeamformer(scenario, k)?;
            let a = scenario.users[k].signatures.matrix();
            let pa = p.apply_matrix(a);
            let ratio = pa.norm() / a.norm();
            Ok(ZfFeasibility {
                user: k + 1,
                rank_deflated: p.rank_deflated,
                retained_power_fraction: ratio * ratio,
                feasible: ratio > ZF_INFEASIBLE_TOL,
            })
        })
        .collect()
}
