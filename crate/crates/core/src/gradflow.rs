//! Gradient-flow dynamics of a symmetric softmax classifier.
//!
//! A `K`-class softmax model trained on `N` interchangeable samples stays on
//! a symmetric manifold where one logit gap `mu` (correct-class logit minus
//! shared incorrect-class logit) determines everything. The correct-class
//! probability is `q = 1 / (1 + (K-1) e^{-mu})`, and gradient flow reduces
//! to one scalar ODE per objective:
//!
//! ```text
//! reward maximization:  dmu/dt = 2K / (N * (e^mu + 2(K-1) + (K-1)^2 e^{-mu}))
//! cross-entropy:        dmu/dt =  K / (N * (e^mu + (K-1)))
//! ```
//!
//! Both flows admit closed-form times for `mu` to reach 0 (the point where
//! the correct class overtakes each incorrect one), and each conserves an
//! explicit first integral that doubles as an integration-accuracy monitor.
//! The separation sweep compares how the two crossing times scale with the
//! initial reward standard deviation `sigma_0`: the reward flow's time grows
//! like `1/sigma_0^2` while the cross-entropy flow's grows like
//! `ln(1/sigma_0)`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("no crossing found before t = {t_max}")]
    NoCrossing { t_max: f64 },
    #[error("regression needs at least two points with distinct x, got {0}")]
    DegenerateFit(String),
}

/// Which objective drives the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    /// Gradient ascent on the expected reward (+1 correct / -1 incorrect).
    Reward,
    /// Gradient descent on the cross-entropy to the correct label.
    CrossEntropy,
}

/// Class count, sample count, and initial logit gap of the symmetric model.
#[derive(Debug, Clone, Copy)]
pub struct LinearSetting {
    k: usize,
    n: usize,
    mu0: f64,
}

impl LinearSetting {
    pub fn new(k: usize, n: usize, mu0: f64) -> Result<Self, FlowError> {
        if k < 2 {
            return Err(FlowError::InvalidSetting(format!("need at least 2 classes, got {k}")));
        }
        if n < 1 {
            return Err(FlowError::InvalidSetting("need at least 1 sample".into()));
        }
        if !(mu0.is_finite() && mu0 <= 0.0) {
            return Err(FlowError::InvalidSetting(format!(
                "initial gap must be finite and nonpositive, got {mu0}"
            )));
        }
        Ok(Self { k, n, mu0 })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    /// Correct-class probability at gap `mu`.
    pub fn q(&self, mu: f64) -> f64 {
        1.0 / (1.0 + (self.k as f64 - 1.0) * (-mu).exp())
    }

    /// Reward standard deviation at the initial gap.
    pub fn sigma0(&self) -> f64 {
        sigma_from_mu(self.k, self.mu0)
    }
}

/// Reward standard deviation of the symmetric model at gap `mu`:
/// `sqrt(4 (K-1) / (e^mu + 2(K-1) + (K-1)^2 e^{-mu}))`, which equals
/// `2 sqrt(q (1-q))`.
pub fn sigma_from_mu(k: usize, mu: f64) -> f64 {
    let km1 = k as f64 - 1.0;
    (4.0 * km1 / (mu.exp() + 2.0 * km1 + km1 * km1 * (-mu).exp())).sqrt()
}

/// Right-hand side of the scalar gap ODE.
pub fn mu_rhs(kind: FlowKind, setting: &LinearSetting, mu: f64) -> f64 {
    let k = setting.k as f64;
    let n = setting.n as f64;
    let km1 = k - 1.0;
    match kind {
        FlowKind::Reward => 2.0 * k / (n * (mu.exp() + 2.0 * km1 + km1 * km1 * (-mu).exp())),
        FlowKind::CrossEntropy => k / (n * (mu.exp() + km1)),
    }
}

/// Right-hand side of the two-logit system `(w, v)` whose difference is the
/// gap. `w` is the correct-class logit; `v` the shared incorrect one. The
/// difference of the two components depends on `(w, v)` only through
/// `w - v`, which is why the scalar ODE is exact and not an approximation.
pub fn pair_rhs(kind: FlowKind, setting: &LinearSetting, w: f64, v: f64) -> (f64, f64) {
    let km1 = setting.k as f64 - 1.0;
    let n = setting.n as f64;
    let q = setting.q(w - v);
    match kind {
        FlowKind::Reward => {
            let s = 2.0 * q * (1.0 - q) / n;
            (s, -s / km1)
        }
        FlowKind::CrossEntropy => {
            let s = (1.0 - q) / n;
            (s, -s / km1)
        }
    }
}

/// First integral of the flow: constant along exact trajectories, so its
/// drift measures integration error.
pub fn conserved_quantity(kind: FlowKind, setting: &LinearSetting, mu: f64, t: f64) -> f64 {
    let k = setting.k as f64;
    let n = setting.n as f64;
    let km1 = k - 1.0;
    match kind {
        FlowKind::Reward => {
            mu.exp() + 2.0 * km1 * mu - km1 * km1 * (-mu).exp() - 2.0 * k / n * t
        }
        FlowKind::CrossEntropy => km1 * mu + mu.exp() - k / n * t,
    }
}

/// Closed-form time for the gap to reach zero from `mu0`.
pub fn closed_form_crossing(kind: FlowKind, setting: &LinearSetting) -> f64 {
    let k = setting.k as f64;
    let n = setting.n as f64;
    let km1 = k - 1.0;
    let mu0 = setting.mu0;
    match kind {
        // Integrate dt = N (e^mu + 2(K-1) + (K-1)^2 e^{-mu}) / (2K) dmu
        // from mu0 to 0.
        FlowKind::Reward => {
            n / (2.0 * k)
                * (1.0 - km1 * km1 - mu0.exp() - 2.0 * km1 * mu0 + km1 * km1 * (-mu0).exp())
        }
        // Integrate dt = N (e^mu + (K-1)) / K dmu from mu0 to 0.
        FlowKind::CrossEntropy => n / k * (1.0 - mu0.exp() - km1 * mu0),
    }
}

fn rk4_step(f: impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// A recorded scalar trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub ts: Vec<f64>,
    pub mus: Vec<f64>,
}

/// Integrate the gap ODE with classical fourth-order Runge-Kutta at a fixed
/// step, recording every point including the start.
pub fn integrate_mu(
    kind: FlowKind,
    setting: &LinearSetting,
    t_max: f64,
    step: f64,
) -> Result<Trajectory, FlowError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(FlowError::InvalidStep(step));
    }
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(FlowError::InvalidSetting(format!("t_max must be nonnegative, got {t_max}")));
    }
    let f = |mu: f64| mu_rhs(kind, setting, mu);
    let steps = (t_max / step).ceil() as usize;
    let mut ts = Vec::with_capacity(steps + 1);
    let mut mus = Vec::with_capacity(steps + 1);
    let mut mu = setting.mu0;
    ts.push(0.0);
    mus.push(mu);
    for i in 1..=steps {
        mu = rk4_step(f, mu, step);
        ts.push(i as f64 * step);
        mus.push(mu);
    }
    Ok(Trajectory { ts, mus })
}

/// A recorded two-logit trajectory.
#[derive(Debug, Clone)]
pub struct PairTrajectory {
    pub ts: Vec<f64>,
    pub ws: Vec<f64>,
    pub vs: Vec<f64>,
}

impl PairTrajectory {
    pub fn gaps(&self) -> Vec<f64> {
        self.ws.iter().zip(&self.vs).map(|(w, v)| w - v).collect()
    }
}

/// Integrate the two-logit system with the same RK4 scheme. Used to confirm
/// that the scalar reduction is exact: the recorded gaps match a scalar
/// integration from `w0 - v0` to rounding error.
pub fn integrate_pair(
    kind: FlowKind,
    setting: &LinearSetting,
    w0: f64,
    v0: f64,
    t_max: f64,
    step: f64,
) -> Result<PairTrajectory, FlowError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(FlowError::InvalidStep(step));
    }
    let steps = (t_max / step).ceil() as usize;
    let mut ts = Vec::with_capacity(steps + 1);
    let mut ws = Vec::with_capacity(steps + 1);
    let mut vs = Vec::with_capacity(steps + 1);
    let (mut w, mut v) = (w0, v0);
    ts.push(0.0);
    ws.push(w);
    vs.push(v);
    for i in 1..=steps {
        let f = |w: f64, v: f64| pair_rhs(kind, setting, w, v);
        let (k1w, k1v) = f(w, v);
        let (k2w, k2v) = f(w + 0.5 * step * k1w, v + 0.5 * step * k1v);
        let (k3w, k3v) = f(w + 0.5 * step * k2w, v + 0.5 * step * k2v);
        let (k4w, k4v) = f(w + step * k3w, v + step * k3v);
        w += step / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        v += step / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        ts.push(i as f64 * step);
        ws.push(w);
        vs.push(v);
    }
    Ok(PairTrajectory { ts, ws, vs })
}

/// Numeric crossing result.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub t: f64,
    /// Coarse RK4 steps taken before the bracketing step.
    pub steps: usize,
    pub step: f64,
}

/// Default substep count used to refine the bracketing step.
pub const CROSSING_SUBSTEPS: usize = 4096;

/// Integrate until the gap reaches zero and return the crossing time.
///
/// The coarse integration runs at the given step until the gap turns
/// nonnegative; the bracketing step is then re-integrated at
/// `step / substeps` and the crossing is interpolated linearly inside the
/// final substep. The interpolation interval is so short that the result
/// inherits the fourth-order accuracy of the coarse trajectory.
pub fn crossing_time_with(
    kind: FlowKind,
    setting: &LinearSetting,
    step: f64,
    substeps: usize,
) -> Result<Crossing, FlowError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(FlowError::InvalidStep(step));
    }
    if substeps == 0 {
        return Err(FlowError::InvalidSetting("substeps must be positive".into()));
    }
    if setting.mu0 == 0.0 {
        return Ok(Crossing { t: 0.0, steps: 0, step });
    }
    let f = |mu: f64| mu_rhs(kind, setting, mu);
    let t_max = 2.0 * closed_form_crossing(kind, setting).max(step);
    let mut mu = setting.mu0;
    let mut t = 0.0;
    let mut steps = 0usize;
    loop {
        let next = rk4_step(f, mu, step);
        if next >= 0.0 {
            break;
        }
        mu = next;
        t += step;
        steps += 1;
        if t > t_max {
            return Err(FlowError::NoCrossing { t_max });
        }
    }
    // Refine inside the bracketing step. The fine trajectory may cross
    // slightly before or after the coarse prediction, so allow it to run a
    // little past the coarse step boundary.
    let sub = step / substeps as f64;
    let mut fine_mu = mu;
    let mut fine_t = t;
    for _ in 0..(2 * substeps) {
        let next = rk4_step(f, fine_mu, sub);
        if next >= 0.0 {
            let frac = if next == fine_mu { 1.0 } else { (0.0 - fine_mu) / (next - fine_mu) };
            return Ok(Crossing { t: fine_t + frac * sub, steps, step });
        }
        fine_mu = next;
        fine_t += sub;
    }
    Err(FlowError::NoCrossing { t_max })
}

/// [`crossing_time_with`] at the default resolution: step
/// `min(0.01, t_closed / 1e4)` and 4096 refinement substeps.
pub fn crossing_time(kind: FlowKind, setting: &LinearSetting) -> Result<Crossing, FlowError> {
    let t_closed = closed_form_crossing(kind, setting);
    if t_closed == 0.0 {
        return Ok(Crossing { t: 0.0, steps: 0, step: 0.01 });
    }
    let step = (t_closed / 1e4).min(0.01);
    crossing_time_with(kind, setting, step, CROSSING_SUBSTEPS)
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit, FlowError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(FlowError::DegenerateFit(format!("{} points", xs.len().min(ys.len()))));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let syy: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    if sxx == 0.0 {
        return Err(FlowError::DegenerateFit("x has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LineFit { intercept, slope, r2, n: xs.len() })
}

/// One grid point of the separation sweep.
#[derive(Debug, Clone, Copy)]
pub struct SeparationRow {
    pub mu0: f64,
    pub sigma0: f64,
    pub t_reward_closed: f64,
    pub t_reward_numeric: f64,
    pub t_ce_closed: f64,
    pub t_ce_numeric: f64,
}

/// Configuration of the separation sweep.
#[derive(Debug, Clone)]
pub struct SeparationConfig {
    pub k: usize,
    pub n: usize,
    /// Initial gaps, typically descending from -1.
    pub mu0_grid: Vec<f64>,
    /// Rows with `sigma0` at or below this form the asymptotic tail used
    /// for the scaling fits.
    pub tail_sigma_max: f64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self { k: 2, n: 1, mu0_grid: mu0_grid(-1.0, -12.0, -0.5), tail_sigma_max: 0.05 }
    }
}

/// Build an inclusive grid from `start` toward `end` at the given (negative)
/// increment.
pub fn mu0_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    assert!(step < 0.0 && end < start, "grid must descend");
    let count = ((end - start) / step).round() as usize;
    (0..=count).map(|i| start + i as f64 * step).collect()
}

/// Sweep result: per-row times plus the two asymptotic fits.
#[derive(Debug, Clone)]
pub struct SeparationReport {
    pub rows: Vec<SeparationRow>,
    /// Fit of `ln t_reward` against `ln(1 / sigma0)` over the tail; the
    /// slope approaches 2.
    pub reward_fit: LineFit,
    /// Fit of `t_ce` against `ln(1 / sigma0)` over the tail; close to linear.
    pub ce_fit: LineFit,
    pub tail_rows: usize,
}

impl SeparationReport {
    /// Crossing-time ratios `t_reward / t_ce`, in grid order.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t_reward_numeric / r.t_ce_numeric).collect()
    }
}

/// Run the sweep: numeric and closed-form crossing times on every grid
/// point, then the two tail fits.
pub fn separation_sweep(config: &SeparationConfig) -> Result<SeparationReport, FlowError> {
    if config.mu0_grid.is_empty() {
        return Err(FlowError::InvalidSetting("empty grid".into()));
    }
    let mut rows = Vec::with_capacity(config.mu0_grid.len());
    for &mu0 in &config.mu0_grid {
        let setting = LinearSetting::new(config.k, config.n, mu0)?;
        let row = SeparationRow {
            mu0,
            sigma0: setting.sigma0(),
            t_reward_closed: closed_form_crossing(FlowKind::Reward, &setting),
            t_reward_numeric: crossing_time(FlowKind::Reward, &setting)?.t,
            t_ce_closed: closed_form_crossing(FlowKind::CrossEntropy, &setting),
            t_ce_numeric: crossing_time(FlowKind::CrossEntropy, &setting)?.t,
        };
        rows.push(row);
    }
    let tail: Vec<&SeparationRow> =
        rows.iter().filter(|r| r.sigma0 <= config.tail_sigma_max).collect();
    if tail.len() < 2 {
        return Err(FlowError::DegenerateFit(format!(
            "only {} rows with sigma0 <= {}",
            tail.len(),
            config.tail_sigma_max
        )));
    }
    let xs: Vec<f64> = tail.iter().map(|r| (1.0 / r.sigma0).ln()).collect();
    let reward_ys: Vec<f64> = tail.iter().map(|r| r.t_reward_numeric.ln()).collect();
    let ce_ys: Vec<f64> = tail.iter().map(|r| r.t_ce_numeric).collect();
    let tail_rows = tail.len();
    let reward_fit = linear_fit(&xs, &reward_ys)?;
    let ce_fit = linear_fit(&xs, &ce_ys)?;
    Ok(SeparationReport { rows, reward_fit, ce_fit, tail_rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setting(k: usize, n: usize, mu0: f64) -> LinearSetting {
        LinearSetting::new(k, n, mu0).unwrap()
    }

    #[test]
    fn closed_forms_match_spot_values() {
        let s = setting(2, 1, -1.0);
        let e = std::f64::consts::E;
        let want_reward = (e - 1.0 / e + 2.0) / 4.0;
        assert!((closed_form_crossing(FlowKind::Reward, &s) - want_reward).abs() <= 1e-15);
        assert!((closed_form_crossing(FlowKind::Reward, &s) - 1.087600596821901).abs() <= 1e-12);
        let want_ce = (2.0 - 1.0 / e) / 2.0;
        assert!((closed_form_crossing(FlowKind::CrossEntropy, &s) - want_ce).abs() <= 1e-15);
        assert!(
            (closed_form_crossing(FlowKind::CrossEntropy, &s) - 0.816060279414279).abs() <= 1e-12
        );
    }

    #[test]
    fn initial_spread_matches_spot_value_and_dual_route() {
        let s = setting(2, 1, -1.0);
        assert!((s.sigma0() - 0.886819).abs() <= 1e-6);
        // Independent route: sigma = 2 sqrt(q (1 - q)).
        for &(k, mu) in &[(2usize, -1.0f64), (3, -2.5), (5, -0.3), (7, 0.0)] {
            let st = setting(k, 1, mu.min(0.0));
            let q = st.q(mu);
            let direct = 2.0 * (q * (1.0 - q)).sqrt();
            assert!((sigma_from_mu(k, mu) - direct).abs() <= 1e-12, "k={k} mu={mu}");
        }
    }

    #[test]
    fn crossing_times_are_independent_of_closed_forms() {
        // The numeric route never evaluates the antiderivative; agreement is
        // evidence for both.
        for kind in [FlowKind::Reward, FlowKind::CrossEntropy] {
            for &(k, n, mu0) in &[(2usize, 1usize, -1.0f64), (3, 2, -2.0), (4, 1, -0.5)] {
                let s = setting(k, n, mu0);
                let closed = closed_form_crossing(kind, &s);
                let numeric = crossing_time(kind, &s).unwrap().t;
                assert!(
                    (closed - numeric).abs() <= 1e-9,
                    "kind={kind:?} k={k} n={n} mu0={mu0}: {closed} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn crossing_refinement_is_fourth_order() {
        // Richardson: halving the coarse step should shrink the crossing
        // error by roughly 2^4.
        let s = setting(2, 1, -2.0);
        for kind in [FlowKind::Reward, FlowKind::CrossEntropy] {
            let exact = closed_form_crossing(kind, &s);
            let err = |h: f64| {
                (crossing_time_with(kind, &s, h, 8192).unwrap().t - exact).abs()
            };
            let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
            for (coarse, fine) in [(e1, e2), (e2, e3)] {
                assert!(fine > 0.0, "error underflowed; pick larger steps");
                let order = (coarse / fine).log2();
                assert!(
                    (3.4..=4.6).contains(&order),
                    "kind={kind:?}: observed order {order} from errors {coarse} {fine}"
                );
            }
        }
    }

    #[test]
    fn first_integrals_stay_constant_along_numeric_trajectories() {
        let s = setting(3, 2, -1.5);
        for kind in [FlowKind::Reward, FlowKind::CrossEntropy] {
            let traj = integrate_mu(kind, &s, 1.0, 1e-3).unwrap();
            let c0 = conserved_quantity(kind, &s, traj.mus[0], traj.ts[0]);
            for (t, mu) in traj.ts.iter().zip(&traj.mus) {
                let drift = (conserved_quantity(kind, &s, *mu, *t) - c0).abs();
                assert!(drift <= 1e-6, "kind={kind:?} t={t}: drift {drift}");
            }
        }
    }

    #[test]
    fn two_logit_system_reduces_to_the_scalar_gap() {
        let s = setting(4, 1, -1.0);
        for kind in [FlowKind::Reward, FlowKind::CrossEntropy] {
            let pair = integrate_pair(kind, &s, -0.3, 0.7, 2.0, 1e-3).unwrap();
            let scalar = integrate_mu(kind, &s, 2.0, 1e-3).unwrap();
            for (g, m) in pair.gaps().iter().zip(&scalar.mus) {
                assert!((g - m).abs() <= 1e-12, "{g} vs {m}");
            }
        }
    }

    #[test]
    fn gap_rhs_is_positive_and_flows_forward() {
        let s = setting(5, 3, -4.0);
        for kind in [FlowKind::Reward, FlowKind::CrossEntropy] {
            for mu in [-6.0, -1.0, 0.0, 2.0] {
                assert!(mu_rhs(kind, &s, mu) > 0.0);
            }
            let traj = integrate_mu(kind, &s, 3.0, 1e-2).unwrap();
            for pair in traj.mus.windows(2) {
                assert!(pair[1] > pair[0]);
            }
        }
    }

    #[test]
    fn small_sweep_has_expected_shape() {
        let config = SeparationConfig {
            mu0_grid: mu0_grid(-4.0, -9.0, -1.0),
            tail_sigma_max: 0.3,
            ..Default::default()
        };
        let report = separation_sweep(&config).unwrap();
        assert_eq!(report.rows.len(), 6);
        for row in &report.rows {
            assert!((row.t_reward_numeric - row.t_reward_closed).abs() <= 1e-6);
            assert!((row.t_ce_numeric - row.t_ce_closed).abs() <= 1e-6);
        }
        let ratios = report.ratios();
        for pair in ratios.windows(2) {
            assert!(pair[1] > pair[0], "reward/ce ratio should grow: {ratios:?}");
        }
        assert!(report.reward_fit.slope > 1.5 && report.reward_fit.slope < 2.5);
    }

    #[test]
    fn grid_builder_is_inclusive() {
        let grid = mu0_grid(-1.0, -12.0, -0.5);
        assert_eq!(grid.len(), 23);
        assert!((grid[0] + 1.0).abs() <= 1e-12);
        assert!((grid[22] + 12.0).abs() <= 1e-12);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        assert!(LinearSetting::new(1, 1, -1.0).is_err());
        assert!(LinearSetting::new(2, 0, -1.0).is_err());
        assert!(LinearSetting::new(2, 1, 0.5).is_err());
        assert!(LinearSetting::new(2, 1, f64::NAN).is_err());
        let s = setting(2, 1, -1.0);
        assert!(integrate_mu(FlowKind::Reward, &s, 1.0, 0.0).is_err());
        assert!(crossing_time_with(FlowKind::Reward, &s, -0.1, 64).is_err());
    }

    #[test]
    fn zero_gap_crosses_immediately() {
        let s = setting(2, 1, 0.0);
        assert_eq!(crossing_time(FlowKind::Reward, &s).unwrap().t, 0.0);
        assert_eq!(closed_form_crossing(FlowKind::Reward, &s), 0.0);
        assert_eq!(closed_form_crossing(FlowKind::CrossEntropy, &s), 0.0);
    }
}
