//! Monte-Carlo ensembles of the deterministic model.
//!
//! Each replicate redraws the flagged parameters from a normal distribution
//! centred on the base value, integrates the ODE and resamples to weeks.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::params::{EnsembleResult, SirParams};
use crate::rng::{stream_rng, Stream};
use crate::sd::run_sd;

pub const DEFAULT_SIGMA_FRACTION: f64 = 0.1;
pub const DEFAULT_REPLICATES: usize = 100;
/// Redraws allowed before an out-of-domain sample is clamped.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

/// Smallest illness duration a clamped draw may take.
const MIN_ILLNESS_DURATION: f64 = 1e-6;

/// Which parameters a Monte-Carlo experiment perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Illness,
    Contact,
    Infection,
    All,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Illness, Scenario::Contact, Scenario::Infection, Scenario::All];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Illness => "illness",
            Scenario::Contact => "contact",
            Scenario::Infection => "infection",
            Scenario::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationSpec {
    vary_illness: bool,
    vary_contact: bool,
    vary_infection: bool,
    sigma_fraction: f64,
    replicates: usize,
    master_seed: u64,
}

impl VariationSpec {
    pub fn new(
        vary_illness: bool,
        vary_contact: bool,
        vary_infection: bool,
        sigma_fraction: f64,
        replicates: usize,
        master_seed: u64,
    ) -> Result<Self> {
        if !(vary_illness || vary_contact || vary_infection) {
            return Err(SimError::invalid("vary", "at least one parameter must be varied"));
        }
        if !(sigma_fraction.is_finite() && sigma_fraction > 0.0) {
            return Err(SimError::invalid(
                "sigma_fraction",
                format!("must be positive, got {sigma_fraction}"),
            ));
        }
        if replicates == 0 {
            return Err(SimError::invalid("replicates", "must be at least 1"));
        }
        Ok(VariationSpec {
            vary_illness,
            vary_contact,
            vary_infection,
            sigma_fraction,
            replicates,
            master_seed,
        })
    }

    pub fn for_scenario(scenario: Scenario, sigma_fraction: f64, replicates: usize, master_seed: u64) -> Result<Self> {
        let (i, c, p) = match scenario {
            Scenario::Illness => (true, false, false),
            Scenario::Contact => (false, true, false),
            Scenario::Infection => (false, false, true),
            Scenario::All => (true, true, true),
        };
        Self::new(i, c, p, sigma_fraction, replicates, master_seed)
    }

    pub fn vary_illness(&self) -> bool {
        self.vary_illness
    }

    pub fn vary_contact(&self) -> bool {
        self.vary_contact
    }

    pub fn vary_infection(&self) -> bool {
        self.vary_infection
    }

    pub fn sigma_fraction(&self) -> f64 {
        self.sigma_fraction
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }
}

/// One replicate's parameters and how many of its draws had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDraw {
    pub params: SirParams,
    pub clamped: usize,
}

/// Draws `Normal(mean, sigma_fraction·mean)` restricted to `[lo, hi]`:
/// rejection first, then clamping.
fn draw_in_domain<R: Rng>(rng: &mut R, mean: f64, sigma_fraction: f64, lo: f64, hi: f64) -> (f64, bool) {
    let sd = sigma_fraction * mean.abs();
    if sd == 0.0 || !sd.is_finite() {
        return (mean.clamp(lo, hi), false);
    }
    let normal = Normal::new(mean, sd).expect("sd is finite and positive");
    let mut last = mean;
    for _ in 0..MAX_RESAMPLE_ATTEMPTS {
        last = normal.sample(rng);
        if (lo..=hi).contains(&last) {
            return (last, false);
        }
    }
    (last.clamp(lo, hi), true)
}

/// Parameters for replicate `replicate_index`.
///
/// Every flagged parameter uses its own stream keyed by
/// `(master_seed, replicate_index, parameter)`; unflagged ones are copied.
pub fn sample_params(base: &SirParams, spec: &VariationSpec, replicate_index: usize) -> ParamDraw {
    let seed = spec.master_seed;
    let r = replicate_index as u64;
    let mut clamped = 0;
    let mut params = *base;

    if spec.vary_illness {
        let mut rng = stream_rng(seed, r, Stream::IllnessDuration);
        let (d, c) = draw_in_domain(&mut rng, base.illness_duration(), spec.sigma_fraction, MIN_ILLNESS_DURATION, f64::MAX);
        clamped += c as usize;
        params = params.with_illness_duration(d).expect("draw lies in domain");
    }
    if spec.vary_contact {
        let mut rng = stream_rng(seed, r, Stream::ContactRate);
        let (x, c) = draw_in_domain(&mut rng, base.contact_rate(), spec.sigma_fraction, 0.0, f64::MAX);
        clamped += c as usize;
        params = params.with_contact_rate(x).expect("draw lies in domain");
    }
    if spec.vary_infection {
        let mut rng = stream_rng(seed, r, Stream::InfectionProb);
        let (x, c) = draw_in_domain(&mut rng, base.infection_prob(), spec.sigma_fraction, 0.0, 1.0);
        clamped += c as usize;
        params = params.with_infection_prob(x).expect("draw lies in domain");
    }
    ParamDraw { params, clamped }
}

/// Monte-Carlo ensemble with the per-replicate parameter draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SdEnsemble {
    pub ensemble: EnsembleResult,
    pub draws: Vec<SirParams>,
    /// Draws clamped after exhausting the resampling budget.
    pub clamped_draws: usize,
}

/// Runs every replicate, in parallel on the current rayon pool. The result
/// is ordered by replicate index and independent of the pool size.
pub fn run_sd_ensemble(base: &SirParams, spec: &VariationSpec, weeks: usize, dt: f64) -> Result<SdEnsemble> {
    let runs = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let draw = sample_params(base, spec, r);
            run_sd(&draw.params, weeks, dt)
                .map(|series| (series, draw))
                .map_err(|e| e.in_replicate(r))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let clamped_draws = runs.iter().map(|(_, d)| d.clamped).sum();
    let draws = runs.iter().map(|(_, d)| d.params).collect();
    let ensemble = EnsembleResult::new(runs.into_iter().map(|(s, _)| s).collect())?;
    Ok(SdEnsemble {
        ensemble,
        draws,
        clamped_draws,
    })
}
