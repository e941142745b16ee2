//! Deterministic SIR model integrated with classical fixed-step RK4.

use crate::error::{Result, SimError};
use crate::params::{derived_rates, CompartmentState, SirParams, Trajectory, WeeklySeries};

pub const DEFAULT_DT: f64 = 0.1;
pub const DAYS_PER_WEEK: f64 = 7.0;

/// Right-hand side of the SIR equations.
pub fn sir_derivatives(state: &CompartmentState, a: f64, b: f64) -> (f64, f64, f64) {
    let infection = a * state.s * state.i;
    let recovery = b * state.i;
    (-infection, infection - recovery, recovery)
}

fn rk4_step(y: [f64; 3], a: f64, b: f64, dt: f64) -> [f64; 3] {
    let f = |y: [f64; 3]| {
        let inf = a * y[0] * y[1];
        let rec = b * y[1];
        [-inf, inf - rec, rec]
    };
    let add = |y: [f64; 3], k: [f64; 3], h: f64| [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]];

    let k1 = f(y);
    let k2 = f(add(y, k1, dt / 2.0));
    let k3 = f(add(y, k2, dt / 2.0));
    let k4 = f(add(y, k3, dt));
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = y[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    out
}

/// Number of whole steps of size `dt` in `horizon`, tolerant of the
/// representation error in e.g. `105.0 / 0.1`.
fn step_count(horizon: f64, dt: f64) -> usize {
    let ratio = horizon / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        nearest as usize
    } else {
        ratio.floor() as usize
    }
}

/// Integrates from `(N - I0, I0, 0)` over `horizon_days`.
///
/// Returns `floor(horizon_days/dt) + 1` states. Fails with
/// [`SimError::StepTooLarge`] when a step leaves the non-negative orthant,
/// raises S, lowers R or breaks conservation by more than `1e-6·N`.
pub fn integrate(params: &SirParams, horizon_days: f64, dt: f64) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::invalid("dt", format!("must be positive, got {dt}")));
    }
    if !(horizon_days.is_finite() && horizon_days >= dt) {
        return Err(SimError::invalid(
            "horizon_days",
            format!("must be at least dt={dt}, got {horizon_days}"),
        ));
    }
    let rates = derived_rates(params);
    let (a, b) = (rates.transmission, rates.recovery);
    let n = params.population() as f64;
    let tol = 1e-6 * n;
    let steps = step_count(horizon_days, dt);

    let i0 = params.initial_infected() as f64;
    let mut y = [n - i0, i0, 0.0];
    let mut states = Vec::with_capacity(steps + 1);
    states.push(CompartmentState { s: y[0], i: y[1], r: y[2] });

    for step in 1..=steps {
        let prev = y;
        y = rk4_step(y, a, b, dt);
        let drift = (y[0] + y[1] + y[2] - n).abs();
        let reversed = y[0] > prev[0] + tol || y[2] < prev[2] - tol;
        if y.iter().any(|v| !v.is_finite() || *v < -tol) || drift > tol || reversed {
            return Err(SimError::StepTooLarge { step, dt });
        }
        for v in y.iter_mut() {
            *v = v.max(0.0);
        }
        states.push(CompartmentState { s: y[0], i: y[1], r: y[2] });
    }
    Trajectory::new(dt, states)
}

/// Sum of squared differences between a run at `dt` and one at `dt/2`,
/// compared on the coarse grid.
pub fn convergence_residual(params: &SirParams, horizon_days: f64, dt: f64) -> Result<f64> {
    let coarse = integrate(params, horizon_days, dt)?;
    let fine = integrate(params, horizon_days, dt / 2.0)?;
    Ok(coarse
        .states()
        .iter()
        .zip(fine.states().iter().step_by(2))
        .map(|(c, f)| (c.s - f.s).powi(2) + (c.i - f.i).powi(2) + (c.r - f.r).powi(2))
        .sum())
}

fn state_at_day(traj: &Trajectory, day: f64) -> Result<CompartmentState> {
    let span = traj.span_days();
    let pos = day / traj.dt();
    let nearest = pos.round();
    // Exact grid hit, the normal case when dt divides a week.
    if (pos - nearest).abs() <= 1e-9 * pos.max(1.0) {
        let idx = nearest as usize;
        return traj.states().get(idx).copied().ok_or(SimError::HorizonTooShort {
            available_days: span,
            required_days: day,
        });
    }
    let lo = pos.floor() as usize;
    if lo + 1 >= traj.len() {
        return Err(SimError::HorizonTooShort {
            available_days: span,
            required_days: day,
        });
    }
    let frac = pos - lo as f64;
    let (x, y) = (traj.states()[lo], traj.states()[lo + 1]);
    let lerp = |u: f64, v: f64| u + frac * (v - u);
    Ok(CompartmentState {
        s: lerp(x.s, y.s),
        i: lerp(x.i, y.i),
        r: lerp(x.r, y.r),
    })
}

/// Infected count at the end of each week: entry `w` is `I(7·(w+1))`.
///
/// Days that fall between grid points are linearly interpolated.
pub fn weekly_sample(traj: &Trajectory, weeks: usize) -> Result<WeeklySeries> {
    if weeks == 0 {
        return Err(SimError::invalid("weeks", "must be at least 1"));
    }
    let required = weeks as f64 * DAYS_PER_WEEK;
    if traj.span_days() + 1e-9 < required {
        return Err(SimError::HorizonTooShort {
            available_days: traj.span_days(),
            required_days: required,
        });
    }
    let infected = (1..=weeks)
        .map(|w| state_at_day(traj, w as f64 * DAYS_PER_WEEK).map(|st| st.i))
        .collect::<Result<Vec<_>>>()?;
    WeeklySeries::new(infected)
}

/// Integrate over exactly `weeks` weeks and resample.
pub fn run_sd(params: &SirParams, weeks: usize, dt: f64) -> Result<WeeklySeries> {
    let traj = integrate(params, weeks as f64 * DAYS_PER_WEEK, dt)?;
    weekly_sample(&traj, weeks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(n: usize, c: f64, p: f64, d: f64, i0: usize) -> SirParams {
        SirParams::new(n, c, p, d, i0).unwrap()
    }

    #[test]
    fn derivatives_examples() {
        let st = CompartmentState::new(1000.0, 0.0, 0.0).unwrap();
        assert_eq!(sir_derivatives(&st, 0.01, 0.2), (-0.0, 0.0, 0.0));

        let st = CompartmentState::new(100.0, 10.0, 0.0).unwrap();
        let (ds, di, dr) = sir_derivatives(&st, 0.0, 0.2);
        assert_eq!(ds, 0.0);
        assert_relative_eq!(di, -2.0);
        assert_relative_eq!(dr, 2.0);

        let (ds, di, dr) = sir_derivatives(&st, 0.001, 0.2);
        assert_relative_eq!(ds, -1.0, max_relative = 1e-12);
        assert_relative_eq!(di, -1.0, max_relative = 1e-12);
        assert_relative_eq!(dr, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn disease_free_equilibrium_is_constant() {
        let p = params(500, 3.0, 0.2, 4.0, 0);
        let t = integrate(&p, 50.0, 0.1).unwrap();
        assert_eq!(t.len(), 501);
        assert!(t.states().iter().all(|s| *s == CompartmentState { s: 500.0, i: 0.0, r: 0.0 }));
    }

    #[test]
    fn trajectory_length() {
        let p = SirParams::default();
        assert_eq!(integrate(&p, 105.0, 0.1).unwrap().len(), 1051);
        assert_eq!(integrate(&p, 10.0, 3.0).unwrap().len(), 4);
    }

    #[test]
    fn no_recovery_drives_susceptibles_out() {
        // D huge makes b negligible; with b -> 0 every S ends up infected.
        let p = params(1000, 2.0, 0.5, 1e12, 1);
        let t = integrate(&p, 200.0, 0.1).unwrap();
        let st = t.states();
        assert!(st.windows(2).all(|w| w[1].s <= w[0].s));
        assert!(t.last().s < 1e-3);
        assert!(st.iter().all(|x| x.r < 1e-6));
    }

    #[test]
    fn threshold_property() {
        // R0 = c p D = 0.8
        let sub = params(10_000, 2.0, 0.1, 4.0, 5);
        let (peak, _) = integrate(&sub, 200.0, 0.1).unwrap().peak_infected();
        assert_eq!(peak, 5.0);
        // R0 = 2
        let sup = params(10_000, 5.0, 0.1, 4.0, 5);
        let (peak, _) = integrate(&sup, 200.0, 0.1).unwrap().peak_infected();
        assert!(peak > 5.0);
    }

    #[test]
    fn step_too_large_detected() {
        let p = params(1000, 50.0, 1.0, 0.05, 10);
        assert!(matches!(integrate(&p, 10.0, 1.0), Err(SimError::StepTooLarge { .. })));
    }

    #[test]
    fn weekly_sample_indexes_end_of_week() {
        let states: Vec<_> = (0..=14)
            .map(|d| CompartmentState {
                s: 0.0,
                i: match d {
                    7 => 10.0,
                    14 => 20.0,
                    _ => 1.0,
                },
                r: 0.0,
            })
            .collect();
        let t = Trajectory::new(1.0, states).unwrap();
        assert_eq!(weekly_sample(&t, 2).unwrap().values(), &[10.0, 20.0]);
        assert!(matches!(weekly_sample(&t, 3), Err(SimError::HorizonTooShort { .. })));
    }

    #[test]
    fn weekly_sample_constant() {
        let states = vec![CompartmentState { s: 0.0, i: 5.0, r: 0.0 }; 1051];
        let t = Trajectory::new(0.1, states).unwrap();
        assert_eq!(weekly_sample(&t, 15).unwrap().values(), &[5.0; 15]);
    }

    #[test]
    fn weekly_sample_interpolates_off_grid() {
        let states: Vec<_> = (0..=5)
            .map(|k| CompartmentState { s: 0.0, i: k as f64 * 3.0, r: 0.0 })
            .collect();
        // dt=3: day 7 lies between 6 and 9
        let t = Trajectory::new(3.0, states).unwrap();
        assert_relative_eq!(weekly_sample(&t, 2).unwrap().values()[0], 7.0, max_relative = 1e-12);
    }

    #[test]
    fn weekly_peak_tracks_full_resolution_peak() {
        let p = SirParams::default();
        let t = integrate(&p, 105.0, 0.1).unwrap();
        let w = weekly_sample(&t, 15).unwrap();
        let (peak_i, peak_day) = t.peak_infected();
        let (wk_peak, wk) = w.peak();
        assert!(wk_peak <= peak_i);
        // the weekly maximum is one of the two week ends bracketing the true peak
        let bracket = ((peak_day / 7.0).floor() as usize).saturating_sub(1)..=(peak_day / 7.0).ceil() as usize - 1;
        assert!(bracket.contains(&wk), "week {wk}, peak day {peak_day}");
    }

    #[test]
    fn halving_dt_is_converged() {
        let p = SirParams::default();
        let r1 = integrate(&p, 105.0, 0.1).unwrap().last().r;
        let r2 = integrate(&p, 105.0, 0.05).unwrap().last().r;
        assert!(((r1 - r2) / r2).abs() < 1e-4);
        assert!(convergence_residual(&p, 105.0, 0.1).unwrap() < 1e-3);
    }
}
