//! Domain types shared by the ODE model, the agent-based model and the
//! statistics pipeline.
//!
//! All types validate on construction and are immutable afterwards, so they
//! can be shared freely between worker threads.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Population of the Österlövsta parishes.
pub const DEFAULT_POPULATION: usize = 52_910;
pub const DEFAULT_INFECTION_PROB: f64 = 0.065;
pub const DEFAULT_ILLNESS_DURATION: f64 = 4.2;
/// Fraction of the population ever infected over the whole epidemic.
pub const TARGET_ATTACK_RATE: f64 = 0.61;
pub const DEFAULT_WEEKS: usize = 15;

/// Epidemiological parameters common to both simulation paradigms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSirParams")]
pub struct SirParams {
    population: usize,
    contact_rate: f64,
    infection_prob: f64,
    illness_duration: f64,
    initial_infected: usize,
}

#[derive(Deserialize)]
struct RawSirParams {
    population: usize,
    contact_rate: f64,
    infection_prob: f64,
    illness_duration: f64,
    initial_infected: usize,
}

impl TryFrom<RawSirParams> for SirParams {
    type Error = SimError;

    fn try_from(raw: RawSirParams) -> Result<Self> {
        SirParams::new(
            raw.population,
            raw.contact_rate,
            raw.infection_prob,
            raw.illness_duration,
            raw.initial_infected,
        )
    }
}

impl SirParams {
    pub fn new(
        population: usize,
        contact_rate: f64,
        infection_prob: f64,
        illness_duration: f64,
        initial_infected: usize,
    ) -> Result<Self> {
        if population == 0 {
            return Err(SimError::invalid("population", "must be at least 1"));
        }
        if !(contact_rate.is_finite() && contact_rate >= 0.0) {
            return Err(SimError::invalid(
                "contact_rate",
                format!("must be finite and non-negative, got {contact_rate}"),
            ));
        }
        if !(0.0..=1.0).contains(&infection_prob) {
            return Err(SimError::invalid(
                "infection_prob",
                format!("must lie in [0, 1], got {infection_prob}"),
            ));
        }
        if !(illness_duration.is_finite() && illness_duration > 0.0) {
            return Err(SimError::invalid(
                "illness_duration",
                format!("must be finite and positive, got {illness_duration}"),
            ));
        }
        if initial_infected > population {
            return Err(SimError::invalid(
                "initial_infected",
                format!("{initial_infected} exceeds population {population}"),
            ));
        }
        Ok(SirParams {
            population,
            contact_rate,
            infection_prob,
            illness_duration,
            initial_infected,
        })
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn contact_rate(&self) -> f64 {
        self.contact_rate
    }

    pub fn infection_prob(&self) -> f64 {
        self.infection_prob
    }

    pub fn illness_duration(&self) -> f64 {
        self.illness_duration
    }

    pub fn initial_infected(&self) -> usize {
        self.initial_infected
    }

    pub fn with_population(self, population: usize) -> Result<Self> {
        Self::new(
            population,
            self.contact_rate,
            self.infection_prob,
            self.illness_duration,
            self.initial_infected,
        )
    }

    pub fn with_contact_rate(self, contact_rate: f64) -> Result<Self> {
        Self::new(
            self.population,
            contact_rate,
            self.infection_prob,
            self.illness_duration,
            self.initial_infected,
        )
    }

    pub fn with_infection_prob(self, infection_prob: f64) -> Result<Self> {
        Self::new(
            self.population,
            self.contact_rate,
            infection_prob,
            self.illness_duration,
            self.initial_infected,
        )
    }

    pub fn with_illness_duration(self, illness_duration: f64) -> Result<Self> {
        Self::new(
            self.population,
            self.contact_rate,
            self.infection_prob,
            illness_duration,
            self.initial_infected,
        )
    }

    pub fn with_initial_infected(self, initial_infected: usize) -> Result<Self> {
        Self::new(
            self.population,
            self.contact_rate,
            self.infection_prob,
            self.illness_duration,
            initial_infected,
        )
    }

    /// ODE coefficients for these parameters.
    pub fn rates(&self) -> Rates {
        derived_rates(self)
    }
}

impl Default for SirParams {
    /// Österlövsta configuration with the contact rate calibrated to the
    /// observed attack rate and a single index case.
    fn default() -> Self {
        let contact_rate = contact_rate_for_attack_rate(
            TARGET_ATTACK_RATE,
            DEFAULT_INFECTION_PROB,
            DEFAULT_ILLNESS_DURATION,
        )
        .expect("default calibration target is valid");
        SirParams::new(
            DEFAULT_POPULATION,
            contact_rate,
            DEFAULT_INFECTION_PROB,
            DEFAULT_ILLNESS_DURATION,
            1,
        )
        .expect("default parameters are valid")
    }
}

/// Coefficients of the SIR equations `dS/dt = -aSI`, `dI/dt = aSI - bI`,
/// `dR/dt = bI`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// `a`, per individual per day.
    pub transmission: f64,
    /// `b`, per day.
    pub recovery: f64,
}

impl Rates {
    /// Basic reproduction number `a·N/b`.
    pub fn r0(&self, population: usize) -> f64 {
        self.transmission * population as f64 / self.recovery
    }
}

/// Frequency-dependent transmission: `a = c·p/N`, `b = 1/D`.
pub fn derived_rates(params: &SirParams) -> Rates {
    Rates {
        transmission: params.contact_rate * params.infection_prob / params.population as f64,
        recovery: 1.0 / params.illness_duration,
    }
}

/// Reproduction number whose deterministic final size equals `attack_rate`.
///
/// Inverts `z = 1 - exp(-R0·z)`, which is explicit in `R0`.
pub fn r0_for_attack_rate(attack_rate: f64) -> Result<f64> {
    if !(attack_rate > 0.0 && attack_rate < 1.0) {
        return Err(SimError::invalid(
            "attack_rate",
            format!("must lie in (0, 1), got {attack_rate}"),
        ));
    }
    Ok(-(1.0 - attack_rate).ln() / attack_rate)
}

/// Contact rate giving the requested final size for fixed `p` and `D`.
pub fn contact_rate_for_attack_rate(
    attack_rate: f64,
    infection_prob: f64,
    illness_duration: f64,
) -> Result<f64> {
    if !(infection_prob > 0.0 && infection_prob <= 1.0) {
        return Err(SimError::invalid(
            "infection_prob",
            "calibration needs a positive transmission probability",
        ));
    }
    if illness_duration.is_nan() || illness_duration <= 0.0 {
        return Err(SimError::invalid("illness_duration", "must be positive"));
    }
    let r0 = r0_for_attack_rate(attack_rate)?;
    Ok(r0 / (infection_prob * illness_duration))
}

/// Final epidemic size `z` solving `z = 1 - exp(-R0·z)` by Newton's method.
///
/// Returns 0 when `R0 <= 1`.
pub fn final_size(r0: f64) -> f64 {
    if r0 <= 1.0 {
        return 0.0;
    }
    // Start near 1; the non-trivial root lies in (0, 1) and the iteration
    // approaches it monotonically from above.
    let mut z = 1.0 - (-r0).exp() * 0.5;
    for _ in 0..100 {
        let e = (-r0 * z).exp();
        let f = z - 1.0 + e;
        let df = 1.0 - r0 * e;
        let next = z - f / df;
        if (next - z).abs() < 1e-15 {
            return next;
        }
        z = next;
    }
    z
}

/// Compartment sizes at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl CompartmentState {
    pub fn new(s: f64, i: f64, r: f64) -> Result<Self> {
        for (name, v) in [("s", s), ("i", i), ("r", r)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        Ok(CompartmentState { s, i, r })
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r
    }
}

/// Fixed-step solution of the SIR equations; index 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    states: Vec<CompartmentState>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<CompartmentState>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::invalid("dt", format!("must be positive, got {dt}")));
        }
        if states.is_empty() {
            return Err(SimError::invalid("states", "trajectory must be non-empty"));
        }
        Ok(Trajectory { dt, states })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn states(&self) -> &[CompartmentState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Time of the last state, in days.
    pub fn span_days(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.dt
    }

    pub fn last(&self) -> &CompartmentState {
        self.states.last().expect("trajectory is non-empty")
    }

    /// Largest infected count and the day it occurs.
    pub fn peak_infected(&self) -> (f64, f64) {
        let (idx, st) = self
            .states
            .iter()
            .enumerate()
            .fold((0, &self.states[0]), |best, cur| if cur.1.i > best.1.i { cur } else { best });
        (st.i, idx as f64 * self.dt)
    }
}

/// Infected counts on the weekly reporting grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeeklySeries {
    infected: Vec<f64>,
}

impl WeeklySeries {
    pub fn new(infected: Vec<f64>) -> Result<Self> {
        if infected.is_empty() {
            return Err(SimError::invalid("weeks", "series must cover at least one week"));
        }
        if let Some((w, v)) = infected
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(SimError::invalid(
                "infected",
                format!("week {} has invalid count {v}", w + 1),
            ));
        }
        Ok(WeeklySeries { infected })
    }

    pub fn weeks(&self) -> usize {
        self.infected.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.infected
    }

    /// Largest weekly value and its 0-based week index.
    pub fn peak(&self) -> (f64, usize) {
        self.infected
            .iter()
            .enumerate()
            .fold((f64::NEG_INFINITY, 0), |(bv, bw), (w, &v)| if v > bv { (v, w) } else { (bv, bw) })
    }
}

impl TryFrom<Vec<f64>> for WeeklySeries {
    type Error = SimError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeeklySeries::new(v)
    }
}

impl From<WeeklySeries> for Vec<f64> {
    fn from(s: WeeklySeries) -> Self {
        s.infected
    }
}

/// Replicate × week matrix of infected counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<WeeklySeries>", into = "Vec<WeeklySeries>")]
pub struct EnsembleResult {
    series: Vec<WeeklySeries>,
}

impl EnsembleResult {
    pub fn new(series: Vec<WeeklySeries>) -> Result<Self> {
        let Some(first) = series.first() else {
            return Err(SimError::EmptyEnsemble);
        };
        let weeks = first.weeks();
        if let Some(bad) = series.iter().find(|s| s.weeks() != weeks) {
            return Err(SimError::LengthMismatch {
                left: weeks,
                right: bad.weeks(),
            });
        }
        Ok(EnsembleResult { series })
    }

    pub fn replicates(&self) -> usize {
        self.series.len()
    }

    pub fn weeks(&self) -> usize {
        self.series[0].weeks()
    }

    pub fn series(&self) -> &[WeeklySeries] {
        &self.series
    }

    /// Values of all replicates in one week.
    pub fn week_column(&self, week: usize) -> Vec<f64> {
        self.series.iter().map(|s| s.values()[week]).collect()
    }

    /// Mean across replicates, week by week.
    pub fn mean_series(&self) -> WeeklySeries {
        let n = self.replicates() as f64;
        let means = (0..self.weeks())
            .map(|w| self.series.iter().map(|s| s.values()[w]).sum::<f64>() / n)
            .collect();
        WeeklySeries { infected: means }
    }
}

impl TryFrom<Vec<WeeklySeries>> for EnsembleResult {
    type Error = SimError;

    fn try_from(v: Vec<WeeklySeries>) -> Result<Self> {
        EnsembleResult::new(v)
    }
}

impl From<EnsembleResult> for Vec<WeeklySeries> {
    fn from(e: EnsembleResult) -> Self {
        e.series
    }
}
