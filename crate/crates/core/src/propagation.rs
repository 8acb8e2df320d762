//! Block propagation: the closed-form logistic (SI) model and a seeded
//! gossip simulator with inv-before-block messaging.
//!
//! Time to reach all but one node: solving
//! `i(t) = 1 / (1 + (1/i0 - 1) e^(-λt)) = (N-1)/N` gives
//! `t* = ln((N-1)(1-i0)/i0) / λ`. Each round costs `2pλ` (λ contacts, two
//! calls of latency `p` each), so the total time is
//! `T = (t* + 1)·2pλ = 2p·ln((N-1)(1-i0)/i0) + 2pλ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GossipMode {
    /// Nodes act in a fresh random order each round, and a node informed
    /// earlier in the same round already relays.
    #[default]
    Relay,
    /// Only nodes informed before the round starts make contacts.
    Synchronous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GossipConfig {
    pub n: usize,
    pub lambda: u32,
    pub i0: f64,
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: GossipMode,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("closed form undefined: {0}")]
    DomainError(&'static str),
}

impl GossipConfig {
    pub fn new(n: usize, lambda: u32, i0: f64, p: f64, seed: u64) -> Self {
        GossipConfig { n, lambda, i0, p, seed, mode: GossipMode::default() }
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        if self.n == 0 {
            return Err(PropagationError::InvalidConfig("N must be at least 1"));
        }
        if self.lambda == 0 {
            return Err(PropagationError::InvalidConfig("lambda must be at least 1"));
        }
        if !(self.i0 > 0.0 && self.i0 <= 1.0) {
            return Err(PropagationError::InvalidConfig("i0 must lie in (0, 1]"));
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(PropagationError::InvalidConfig("p must be a non-negative real"));
        }
        Ok(())
    }

    /// Wall time of one round: λ contacts of two calls each.
    pub fn round_delay(&self) -> f64 {
        2.0 * self.p * self.lambda as f64
    }

    /// Initially informed nodes: `max(1, round(i0·N))`, at most N.
    pub fn initial_informed(&self) -> usize {
        ((self.i0 * self.n as f64).round() as usize).clamp(1, self.n)
    }
}

/// `i(t) = 1 / (1 + (1/i0 - 1) e^(-λt))`.
pub fn analytic_fraction(t: f64, cfg: &GossipConfig) -> f64 {
    1.0 / (1.0 + (1.0 / cfg.i0 - 1.0) * (-(cfg.lambda as f64) * t).exp())
}

/// `t*`, the time at which all but one node are informed.
pub fn analytic_rounds(cfg: &GossipConfig) -> Result<f64, PropagationError> {
    if cfg.n < 2 {
        return Err(PropagationError::DomainError("N must be at least 2"));
    }
    if !(cfg.i0 > 0.0 && cfg.i0 < 1.0) {
        return Err(PropagationError::DomainError("i0 must lie strictly between 0 and 1"));
    }
    let arg = (cfg.n as f64 - 1.0) * (1.0 - cfg.i0) / cfg.i0;
    Ok(arg.ln() / cfg.lambda as f64)
}

/// `T = (t* + 1)·2pλ`.
pub fn analytic_total_time(cfg: &GossipConfig) -> Result<f64, PropagationError> {
    Ok((analytic_rounds(cfg)? + 1.0) * cfg.round_delay())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationCurve {
    /// Informed count after each round, starting with round 0.
    pub informed: Vec<usize>,
    pub n: usize,
    pub rounds_to_full: usize,
    /// Calls made: 2 per contact with an uninformed peer, 1 otherwise.
    pub api_calls: u64,
    /// `rounds_to_full · 2pλ`.
    pub total_time: f64,
}

impl PropagationCurve {
    pub fn fraction(&self, round: usize) -> f64 {
        let i = self.informed.get(round).copied().unwrap_or(self.n);
        i as f64 / self.n as f64
    }

    pub fn susceptible(&self, round: usize) -> usize {
        self.n - self.informed.get(round).copied().unwrap_or(self.n)
    }
}

/// Hard stop for pathological configurations; never reached when every
/// node can be contacted.
const MAX_ROUNDS: usize = 100_000;

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs trial 0 of `cfg`.
pub fn simulate(cfg: &GossipConfig) -> Result<PropagationCurve, PropagationError> {
    simulate_trial(cfg, 0)
}

/// Runs one trial on its own RNG stream `(seed, trial)`.
pub fn simulate_trial(cfg: &GossipConfig, trial: u64) -> Result<PropagationCurve, PropagationError> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = trial_rng(cfg.seed, trial);
    let mut informed = vec![false; n];
    let start = cfg.initial_informed();
    // initial holders are a uniform random subset
    for idx in rand::seq::index::sample(&mut rng, n, start) {
        informed[idx] = true;
    }
    let mut count = start;
    let mut curve = vec![count];
    let mut calls = 0u64;
    let mut order: Vec<usize> = (0..n).collect();

    while count < n && curve.len() <= MAX_ROUNDS {
        match cfg.mode {
            GossipMode::Relay => {
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                for &node in &order {
                    if informed[node] {
                        contact(node, cfg.lambda, &mut informed, &mut count, &mut calls, &mut rng);
                    }
                }
            }
            GossipMode::Synchronous => {
                let senders: Vec<usize> = (0..n).filter(|i| informed[*i]).collect();
                let mut next = informed.clone();
                let mut next_count = count;
                for node in senders {
                    for _ in 0..cfg.lambda {
                        let peer = pick_peer(node, n, &mut rng);
                        if next[peer] || informed[peer] {
                            calls += 1;
                        } else {
                            next[peer] = true;
                            next_count += 1;
                            calls += 2;
                        }
                    }
                }
                informed = next;
                count = next_count;
            }
        }
        curve.push(count);
    }
    let rounds_to_full = curve.len() - 1;
    Ok(PropagationCurve {
        informed: curve,
        n,
        rounds_to_full,
        api_calls: calls,
        total_time: rounds_to_full as f64 * cfg.round_delay(),
    })
}

/// Uniform peer other than `node`.
fn pick_peer(node: usize, n: usize, rng: &mut impl Rng) -> usize {
    let r = rng.random_range(0..n - 1);
    if r >= node {
        r + 1
    } else {
        r
    }
}

fn contact(node: usize, lambda: u32, informed: &mut [bool], count: &mut usize, calls: &mut u64, rng: &mut impl Rng) {
    let n = informed.len();
    for _ in 0..lambda {
        let peer = pick_peer(node, n, rng);
        if informed[peer] {
            *calls += 1;
        } else {
            informed[peer] = true;
            *count += 1;
            *calls += 2;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub lambda: u32,
    pub i0: f64,
    pub p: f64,
    pub trials: usize,
    pub t_analytic: f64,
    pub t_emp_mean: f64,
    pub t_emp_std: f64,
    pub rel_err: f64,
    pub rounds_analytic: f64,
    pub rounds_emp_mean: f64,
}

pub const COMPARISON_HEADER: &str = "N,lambda,i0,p,T_analytic,T_emp_mean,T_emp_std,rel_err";

impl ComparisonReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.n, self.lambda, self.i0, self.p, self.t_analytic, self.t_emp_mean, self.t_emp_std, self.rel_err
        )
    }

    pub fn to_csv(reports: &[ComparisonReport]) -> String {
        let mut out = String::from(COMPARISON_HEADER);
        out.push('\n');
        for r in reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `trials` independent trials and sets them against the closed form.
pub fn compare(cfg: &GossipConfig, trials: usize) -> Result<ComparisonReport, PropagationError> {
    if trials == 0 {
        return Err(PropagationError::InvalidConfig("at least one trial is required"));
    }
    let t_analytic = analytic_total_time(cfg)?;
    let mut times = Vec::with_capacity(trials);
    let mut rounds = Vec::with_capacity(trials);
    for trial in 0..trials {
        let c = simulate_trial(cfg, trial as u64)?;
        times.push(c.total_time);
        rounds.push(c.rounds_to_full as f64);
    }
    let (t_emp_mean, t_emp_std) = mean_std(&times);
    let rel_err = if t_analytic == 0.0 { 0.0 } else { (t_emp_mean - t_analytic) / t_analytic };
    Ok(ComparisonReport {
        n: cfg.n,
        lambda: cfg.lambda,
        i0: cfg.i0,
        p: cfg.p,
        trials,
        t_analytic,
        t_emp_mean,
        t_emp_std,
        rel_err,
        rounds_analytic: analytic_rounds(cfg)? + 1.0,
        rounds_emp_mean: mean_std(&rounds).0,
    })
}

/// Mean informed fraction per round over `trials`, padded with 1.0 after
/// a trial completes; `rounds + 1` entries.
pub fn mean_curve(cfg: &GossipConfig, trials: usize, rounds: usize) -> Result<Vec<f64>, PropagationError> {
    let mut acc = vec![0.0; rounds + 1];
    for trial in 0..trials {
        let c = simulate_trial(cfg, trial as u64)?;
        for (r, a) in acc.iter_mut().enumerate() {
            *a += c.fraction(r);
        }
    }
    Ok(acc.into_iter().map(|a| a / trials as f64).collect())
}

/// Largest gap between the empirical mean curve and the logistic, sampled
/// at whole rounds.
pub fn kolmogorov_distance(cfg: &GossipConfig, trials: usize, rounds: usize) -> Result<f64, PropagationError> {
    let emp = mean_curve(cfg, trials, rounds)?;
    Ok(emp
        .iter()
        .enumerate()
        .map(|(t, e)| (e - analytic_fraction(t as f64, cfg)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> GossipConfig {
        GossipConfig::new(n, 2, 0.01, 1.0, 7)
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(analytic_fraction(3.0, &GossipConfig::new(10, 2, 1.0, 1.0, 0)), 1.0);
        assert!((analytic_fraction(0.0, &cfg(100)) - 0.01).abs() < 1e-15);
        let at = analytic_fraction(4.595, &cfg(100));
        assert!((at - 0.99).abs() < 1e-3, "{at}");
        let t_star = analytic_rounds(&cfg(100)).unwrap();
        assert!((t_star - 0.5 * 9801f64.ln()).abs() < 1e-12);
        let total = analytic_total_time(&cfg(100)).unwrap();
        assert!((total - 22.38).abs() < 0.005, "{total}");
    }

    #[test]
    fn total_time_is_linear_in_p() {
        let mut c = cfg(100);
        c.p = 0.0;
        assert_eq!(analytic_total_time(&c).unwrap(), 0.0);
        c.p = 1.5;
        let a = analytic_total_time(&c).unwrap();
        c.p = 3.0;
        assert!((analytic_total_time(&c).unwrap() - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let mut c = cfg(100);
        c.i0 = 1.0;
        assert!(matches!(analytic_total_time(&c), Err(PropagationError::DomainError(_))));
        assert!(matches!(analytic_total_time(&cfg(1)), Err(PropagationError::DomainError(_))));
        c.i0 = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ode_residual_is_small() {
        let c = cfg(100);
        let h = 1e-5;
        for k in 0..100 {
            let t = k as f64 * 0.1;
            let i = analytic_fraction(t, &c);
            let di = (analytic_fraction(t + h, &c) - analytic_fraction(t - h, &c)) / (2.0 * h);
            assert!((di - c.lambda as f64 * (1.0 - i) * i).abs() < 1e-6);
        }
    }

    #[test]
    fn single_node_is_already_full() {
        let c = simulate(&cfg(1)).unwrap();
        assert_eq!(c.rounds_to_full, 0);
        assert_eq!(c.informed, vec![1]);
    }

    #[test]
    fn same_seed_same_curve() {
        for mode in [GossipMode::Relay, GossipMode::Synchronous] {
            let mut c = cfg(200);
            c.mode = mode;
            assert_eq!(simulate(&c).unwrap(), simulate(&c).unwrap());
            let other = GossipConfig { seed: 8, ..c.clone() };
            assert_ne!(simulate(&c).unwrap().informed, simulate(&other).unwrap().informed);
        }
    }

    #[test]
    fn curve_bookkeeping() {
        for mode in [GossipMode::Relay, GossipMode::Synchronous] {
            let mut c = cfg(300);
            c.mode = mode;
            let curve = simulate(&c).unwrap();
            assert!(curve.informed.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*curve.informed.last().unwrap(), 300);
            for r in 0..curve.informed.len() {
                assert_eq!(curve.informed[r] + curve.susceptible(r), 300);
                assert_eq!(curve.fraction(r), curve.informed[r] as f64 / 300.0);
            }
            // every newly informed node cost one block call on top of its inv
            let contacts = curve.api_calls - (300 - curve.informed[0]) as u64;
            assert!(contacts >= (300 - curve.informed[0]) as u64);
        }
    }

    #[test]
    fn compare_single_trial_echoes_run() {
        let c = cfg(100);
        let r = compare(&c, 1).unwrap();
        let run = simulate(&c).unwrap();
        assert_eq!(r.t_emp_mean, run.total_time);
        assert_eq!(r.t_emp_std, 0.0);
        assert!(ComparisonReport::to_csv(&[r]).starts_with(COMPARISON_HEADER));
    }

    #[test]
    fn larger_networks_take_longer() {
        let small = compare(&cfg(100), 20).unwrap();
        let large = compare(&GossipConfig::new(1000, 2, 0.001, 1.0, 7), 20).unwrap();
        assert!(large.t_analytic > small.t_analytic);
        assert!(large.t_emp_mean > small.t_emp_mean);
    }
}
