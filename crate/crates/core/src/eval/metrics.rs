//! Per-draw gain and SINR evaluation, dB conversion and empirical CDFs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::array_channel::{PhaseModel, SignatureSet};
use crate::mu::MultiUserScenario;
use crate::su::{stationary_power, worst_case_power, Beamformer};
use crate::{CVector, Error, Result};

/// `10 log10(x)`; zero power maps to `-inf`.
pub fn to_db(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * x.log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuRecord {
    /// `g^H A R A^H g`.
    pub stationary_gain: f64,
    /// Minimum of `|g^H A v|^2` over all phase vectors.
    pub worst_case_gain: f64,
    /// `|g^H A v_i|^2` for each phase draw.
    pub samples: Vec<f64>,
}

/// Analytic and sampled gains of one beamformer.
pub fn evaluate_su<R: Rng + ?Sized>(
    bf: &Beamformer,
    signatures: &SignatureSet,
    model: &PhaseModel,
    num_draws: usize,
    rng: &mut R,
) -> Result<SuRecord> {
    if bf.num_antennas() != signatures.num_antennas() {
        return Err(Error::invalid(format!(
            "beamformer has {} antennas, signatures have {}",
            bf.num_antennas(),
            signatures.num_antennas()
        )));
    }
    let l = signatures.num_paths();
    let r = model.correlation(l)?;
    if num_draws > 0 && !model.supports_sampling() {
        return Err(Error::UnsupportedSampling(
            "Monte-Carlo samples need a phase distribution, not just R".into(),
        ));
    }
    // g^H A, reused by every draw.
    let ga = bf.g.adjoint() * signatures.matrix();
    let mut samples = Vec::with_capacity(num_draws);
    for _ in 0..num_draws {
        let v = model.sample(l, rng)?;
        samples.push((&ga * v)[(0, 0)].norm_sqr());
    }
    Ok(SuRecord {
        stationary_gain: stationary_power(&bf.g, signatures, &r)?,
        worst_case_gain: worst_case_power(&bf.g, signatures),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuRecord {
    /// 0-based.
    pub user: usize,
    /// SINR with `R_k` replacing the instantaneous channel in the signal and
    /// interference terms, linear.
    pub stationary_sinr: f64,
    /// `p_k |g_k^H h_k|^2` per draw.
    pub signal: Vec<f64>,
    /// `sum_{k' != k} p_k' |g_k'^H h_k|^2` per draw.
    pub interference: Vec<f64>,
    /// Linear SINR per draw.
    pub sinr: Vec<f64>,
}

/// `sum_k' p_k' |g_k'^H h|^2` split into the own term and the rest.
pub fn signal_and_interference(
    scenario: &MultiUserScenario,
    beamformers: &[CVector],
    k: usize,
    h: &CVector,
) -> (f64, f64) {
    let p = scenario.symbol_powers();
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (j, g) in beamformers.iter().enumerate() {
        let term = p[j] * g.dotc(h).norm_sqr();
        if j == k {
            signal = term;
        } else {
            interference += term;
        }
    }
    (signal, interference)
}

fn check_beamformers(scenario: &MultiUserScenario, beamformers: &[CVector]) -> Result<()> {
    if beamformers.len() != scenario.num_users() {
        return Err(Error::invalid(format!(
            "{} beamformers for {} users",
            beamformers.len(),
            scenario.num_users()
        )));
    }
    let n = scenario.num_antennas();
    if beamformers.iter().any(|g| g.len() != n) {
        return Err(Error::invalid(format!("beamformers must have {n} entries")));
    }
    Ok(())
}

/// Stationary SINR of user `k`: every `|g^H h_k|^2` replaced by its mean
/// `g^H A_k R_k A_k^H g`.
pub fn stationary_sinr(scenario: &MultiUserScenario, beamformers: &[CVector], k: usize) -> Result<f64> {
    check_beamformers(scenario, beamformers)?;
    let user = scenario.user(k)?;
    let cov = user.signatures.covariance(&user.correlation()?)?;
    let p = scenario.symbol_powers();
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (j, g) in beamformers.iter().enumerate() {
        let term = p[j] * g.dotc(&(&cov * g)).re.max(0.0);
        if j == k {
            signal = term;
        } else {
            interference += term;
        }
    }
    Ok(signal / (interference + scenario.noise_variance()))
}

/// Monte-Carlo SINR of every user. Draw `i` of user `k` uses its own RNG
/// stream so results do not depend on evaluation order.
pub fn evaluate_mu(
    scenario: &MultiUserScenario,
    beamformers: &[CVector],
    num_draws: usize,
    seed: u64,
) -> Result<Vec<MuRecord>> {
    check_beamformers(scenario, beamformers)?;
    let sigma2 = scenario.noise_variance();
    (0..scenario.num_users())
        .map(|k| {
            let user = scenario.user(k)?;
            let l = user.signatures.num_paths();
            if num_draws > 0 && !user.phase_model.supports_sampling() {
                return Err(Error::UnsupportedSampling(format!(
                    "user {} has no phase distribution",
                    k + 1
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut rec = MuRecord {
                user: k,
                stationary_sinr: stationary_sinr(scenario, beamformers, k)?,
                signal: Vec::with_capacity(num_draws),
                interference: Vec::with_capacity(num_draws),
                sinr: Vec::with_capacity(num_draws),
            };
            for _ in 0..num_draws {
                let v = user.phase_model.sample(l, &mut rng)?;
                let h = user.signatures.matrix() * v;
                let (s, i) = signal_and_interference(scenario, beamformers, k, &h);
                rec.signal.push(s);
                rec.interference.push(i);
                rec.sinr.push(s / (i + sigma2));
            }
            Ok(rec)
        })
        .collect()
}

/// Monte-Carlo SINR when every user is served by the matched filter of its
/// own drawn channel. Uses the same draws as [`evaluate_mu`] with equal
/// `seed`. `stationary_sinr` is left at zero: there is no fixed beamformer.
pub fn evaluate_mu_coherent(scenario: &MultiUserScenario, num_draws: usize, seed: u64) -> Result<Vec<MuRecord>> {
    let k_total = scenario.num_users();
    let mut draws: Vec<Vec<CVector>> = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let user = scenario.user(k)?;
        if num_draws > 0 && !user.phase_model.supports_sampling() {
            return Err(Error::UnsupportedSampling(format!(
                "user {} has no phase distribution",
                k + 1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let l = user.signatures.num_paths();
        draws.push(
            (0..num_draws)
                .map(|_| Ok(user.signatures.matrix() * user.phase_model.sample(l, &mut rng)?))
                .collect::<Result<_>>()?,
        );
    }
    let sigma2 = scenario.noise_variance();
    let mut records: Vec<MuRecord> = (0..k_total)
        .map(|k| MuRecord {
            user: k,
            stationary_sinr: 0.0,
            signal: Vec::with_capacity(num_draws),
            interference: Vec::with_capacity(num_draws),
            sinr: Vec::with_capacity(num_draws),
        })
        .collect();
    for i in 0..num_draws {
        let gs: Vec<CVector> = draws
            .iter()
            .map(|d| {
                let n = d[i].norm();
                if n > 0.0 {
                    &d[i] / crate::C64::from(n)
                } else {
                    CVector::zeros(d[i].len())
                }
            })
            .collect();
        for (k, rec) in records.iter_mut().enumerate() {
            let (s, int) = signal_and_interference(scenario, &gs, k, &draws[k][i]);
            rec.signal.push(s);
            rec.interference.push(int);
            rec.sinr.push(s / (int + sigma2));
        }
    }
    Ok(records)
}

/// Sorted samples with probabilities `i / n`, `i = 1..n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCdf {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// `-inf` entries are kept (zero power in dB); at least one sample must be
/// finite and none may be NaN.
pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    if samples.is_empty() {
        return Err(Error::invalid("empirical CDF needs at least one sample"));
    }
    if samples.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::invalid("CDF samples must not be NaN or +inf"));
    }
    if !samples.iter().any(|x| x.is_finite()) {
        return Err(Error::invalid("CDF needs at least one finite sample"));
    }
    let mut values = samples.to_vec();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let probabilities = (1..=values.len()).map(|i| i as f64 / n).collect();
    Ok(EmpiricalCdf {
        values,
        probabilities,
    })
}

impl EmpiricalCdf {
    /// Linear interpolation between order statistics at `p (n - 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi {
            return self.values[lo];
        }
        let (a, b) = (self.values[lo], self.values[hi]);
        if a == b {
            return a;
        }
        a + (b - a) * (pos - lo as f64)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Fraction of samples `<= x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let count = self.values.partition_point(|v| *v <= x);
        count as f64 / self.values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_channel::{realize_channel, ArrayGeometry, PathComponent, synthesize_signatures};
    use crate::mu::{zf_stationary_bf, UserChannel};
    use crate::su::{coherent_bf, stationary_bf, uniform_bf};
    use crate::{CMatrix, C64};
    use rand::SeedableRng;

    fn random_sigs(n: usize, l: usize, seed: u64) -> SignatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(n, l, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        SignatureSet::new(m, 3.5e9).unwrap()
    }

    #[test]
    fn db_conversion() {
        assert_eq!(to_db(0.0), f64::NEG_INFINITY);
        assert!((to_db(100.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_on_own_realization() {
        let a = random_sigs(8, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = PhaseModel::IidUniform.sample(3, &mut rng).unwrap();
        let h = realize_channel(&a, &v).unwrap().h;
        let bf = coherent_bf(&h).unwrap();
        let rec = evaluate_su(&bf, &a, &PhaseModel::Known(v.iter().map(|z| z.arg()).collect()), 1, &mut rng).unwrap();
        assert!((rec.samples[0] - h.norm_squared()).abs() <= 1e-12 * h.norm_squared());
    }

    #[test]
    fn stationary_mean_matches_and_min_bounds() {
        let a = random_sigs(8, 4, 3);
        let r = CMatrix::identity(4, 4);
        let bf = stationary_bf(&a, &r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rec = evaluate_su(&bf, &a, &PhaseModel::IidUniform, 100_000, &mut rng).unwrap();
        let mean = rec.samples.iter().sum::<f64>() / rec.samples.len() as f64;
        assert!((mean - rec.stationary_gain).abs() <= 0.02 * rec.stationary_gain);
        let min = rec.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= rec.worst_case_gain - 1e-9);
    }

    #[test]
    fn explicit_r_rejects_sampling() {
        let a = random_sigs(4, 2, 5);
        let bf = uniform_bf(4).unwrap();
        let model = PhaseModel::ExplicitR(CMatrix::identity(2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            evaluate_su(&bf, &a, &model, 10, &mut rng),
            Err(Error::UnsupportedSampling(_))
        ));
        let rec = evaluate_su(&bf, &a, &model, 0, &mut rng).unwrap();
        assert!(rec.samples.is_empty());
    }

    fn two_user_scenario(sigma2: f64) -> MultiUserScenario {
        let geom = ArrayGeometry::half_wavelength_rectangular(4, 2, 3.5e9).unwrap();
        let path = |az: f64| PathComponent {
            gain_magnitude: 1.0,
            delay: 0.0,
            doppler: 0.0,
            azimuth: az,
            elevation: 0.0,
            nominal_phase: 0.0,
            phase_spread: 0.0,
        };
        let users = [[0.1, 0.9], [-0.7, 0.4]]
            .iter()
            .map(|azs| UserChannel {
                signatures: synthesize_signatures(&[path(azs[0]), path(azs[1])], &geom, 3.5e9).unwrap(),
                phase_model: PhaseModel::IidUniform,
            })
            .collect();
        MultiUserScenario::new(users, vec![1.0, 1.0], sigma2).unwrap()
    }

    #[test]
    fn single_user_sinr_is_gain_over_noise() {
        let a = random_sigs(6, 2, 8);
        let s = MultiUserScenario::new(
            vec![UserChannel {
                signatures: a.clone(),
                phase_model: PhaseModel::IidUniform,
            }],
            vec![2.0],
            0.5,
        )
        .unwrap();
        let bf = stationary_bf(&a, &CMatrix::identity(2, 2)).unwrap();
        let rec = &evaluate_mu(&s, &[bf.g.clone()], 50, 1).unwrap()[0];
        for i in 0..50 {
            assert_eq!(rec.interference[i], 0.0);
            assert!((rec.sinr[i] - rec.signal[i] / 0.5).abs() <= 1e-12 * rec.sinr[i]);
        }
        assert!((rec.stationary_sinr - 2.0 * bf.objective_value / 0.5).abs() <= 1e-9 * rec.stationary_sinr);
    }

    #[test]
    fn zf_draws_have_no_interference() {
        let s = two_user_scenario(0.1);
        let gs: Vec<CVector> = (0..2).map(|k| zf_stationary_bf(&s, k).unwrap().g).collect();
        for rec in evaluate_mu(&s, &gs, 1000, 7).unwrap() {
            assert!(rec.interference.iter().all(|&x| x <= 1e-16));
        }
    }

    #[test]
    fn sinr_decreases_with_noise() {
        let gs: Vec<CVector> = (0..2)
            .map(|k| zf_stationary_bf(&two_user_scenario(1.0), k).unwrap().g)
            .collect();
        let mut prev: Option<Vec<f64>> = None;
        for sigma2 in [0.1, 1.0, 10.0, 1e3, 1e9] {
            let recs = evaluate_mu(&two_user_scenario(sigma2), &gs, 100, 3).unwrap();
            let cur: Vec<f64> = recs.iter().flat_map(|r| r.sinr.clone()).collect();
            if let Some(p) = &prev {
                assert!(cur.iter().zip(p).all(|(c, p)| c <= p));
            }
            prev = Some(cur);
        }
        assert!(prev.unwrap().iter().all(|&x| x < 1e-6));
    }

    #[test]
    fn coherent_mu_dominates_signal_of_fixed_designs() {
        let s = two_user_scenario(0.1);
        let coh = evaluate_mu_coherent(&s, 200, 9).unwrap();
        let gs: Vec<CVector> = (0..2).map(|k| zf_stationary_bf(&s, k).unwrap().g).collect();
        let zf = evaluate_mu(&s, &gs, 200, 9).unwrap();
        for k in 0..2 {
            for i in 0..200 {
                // Same draw: the matched filter collects the whole channel.
                assert!(zf[k].signal[i] <= coh[k].signal[i] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn mu_dimension_mismatch() {
        let s = two_user_scenario(1.0);
        assert!(evaluate_mu(&s, &[CVector::zeros(8)], 1, 0).is_err());
        assert!(evaluate_mu(&s, &[CVector::zeros(8), CVector::zeros(3)], 1, 0).is_err());
    }

    #[test]
    fn cdf_examples() {
        let c = empirical_cdf(&[5.0]).unwrap();
        assert_eq!(c.values, vec![5.0]);
        assert_eq!(c.probabilities, vec![1.0]);
        let c = empirical_cdf(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(c.median(), 2.5);
        assert_eq!(c.probabilities, vec![0.25, 0.5, 0.75, 1.0]);
        assert!(empirical_cdf(&[]).is_err());
        assert!(empirical_cdf(&[f64::NAN]).is_err());
        assert!(empirical_cdf(&[f64::NEG_INFINITY]).is_err());
        let c = empirical_cdf(&[f64::NEG_INFINITY, 1.0]).unwrap();
        assert_eq!(c.values[0], f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_cdf_ks_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let c = empirical_cdf(&s).unwrap();
        let n = c.values.len() as f64;
        let d = c
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(d < 0.01, "KS distance {d}");
    }
}
