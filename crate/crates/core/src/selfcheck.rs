//! Seeded oracle suites run by `ctc-headline selfcheck`.
//!
//! Each suite draws small random instances, one seed per instance, and
//! compares the production routine against an exhaustive or independent
//! computation. A failure reports the suite, the instance seed and what
//! differed.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;

use crate::ctc::{
    collapsed_distribution_bruteforce, ctc_log_prob, ctc_log_prob_bruteforce, ctc_log_prob_with_rule,
    ctc_loss_and_grad, EmissionMatrix, LabelId, TargetSequence, TransitionRule,
};
use crate::decode::beam_decode;
use crate::error::Result;
use crate::metrics::lcs_len;
use crate::numerics::{seeded_rng, LogProb, Matrix, Rng};

pub type CtcLogProbFn = fn(&EmissionMatrix, &TargetSequence) -> Result<LogProb>;

/// Forward recursion with the repeat-skip guard removed. Only for
/// demonstrating that the CTC suite catches a wrong transition rule.
#[doc(hidden)]
pub fn faulty_ctc_log_prob(y: &EmissionMatrix, target: &TargetSequence) -> Result<LogProb> {
    ctc_log_prob_with_rule(y, target, TransitionRule::SkipBetweenRepeats)
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub instances: usize,
    pub failure: Option<Failure>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelfCheckConfig {
    pub seed: u64,
    pub ctc_instances: usize,
    pub gradient_instances: usize,
    pub lcs_instances: usize,
    pub beam_instances: usize,
    pub ctc_impl: CtcLogProbFn,
}

impl Default for SelfCheckConfig {
    fn default() -> Self {
        SelfCheckConfig {
            seed: 0x5eed,
            ctc_instances: 500,
            gradient_instances: 100,
            lcs_instances: 1000,
            beam_instances: 500,
            ctc_impl: ctc_log_prob,
        }
    }
}

/// Normalized random emission rows.
pub fn random_emissions(rng: &mut Rng, frames: usize, labels: usize) -> EmissionMatrix {
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let raw: Vec<f64> = (0..labels).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    EmissionMatrix::from_rows(&rows).expect("normalized rows")
}

pub fn random_target(rng: &mut Rng, max_len: usize, real_labels: usize) -> TargetSequence {
    let len = rng.gen_range(0..=max_len);
    TargetSequence::new((0..len).map(|_| rng.gen_range(1..=real_labels as LabelId)).collect())
        .expect("no blanks drawn")
}

pub fn random_logits(rng: &mut Rng, frames: usize, labels: usize, scale: f64) -> Matrix {
    let data = (0..frames * labels).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(frames, labels, data).expect("sized")
}

/// Log-domain agreement where two `-inf` values agree.
pub fn log_close(a: f64, b: f64, tol: f64) -> bool {
    (a == f64::NEG_INFINITY && b == f64::NEG_INFINITY) || (a - b).abs() <= tol
}

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn run_suite(
    name: &'static str,
    instances: usize,
    base_seed: u64,
    mut check: impl FnMut(&mut Rng) -> std::result::Result<(), String>,
) -> SuiteReport {
    let started = Instant::now();
    let mut failure = None;
    for i in 0..instances {
        let seed = base_seed.wrapping_add(i as u64);
        if let Err(detail) = check(&mut seeded_rng(seed)) {
            failure = Some(Failure { seed, detail });
            break;
        }
    }
    SuiteReport {
        name,
        instances,
        failure,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// DP log-probability against path enumeration, `T ≤ 6`, `L ≤ 3`, `U ≤ 3`.
pub fn ctc_oracle_suite(instances: usize, seed: u64, ctc_impl: CtcLogProbFn) -> SuiteReport {
    run_suite("ctc-bruteforce", instances, seed, |rng| {
        let frames = rng.gen_range(1..=6);
        let real = rng.gen_range(1..=3);
        let y = random_emissions(rng, frames, real + 1);
        let target = random_target(rng, 3, real);
        let dp = ctc_impl(&y, &target).map_err(|e| e.to_string())?.value();
        let bf = ctc_log_prob_bruteforce(&y, &target).map_err(|e| e.to_string())?.value();
        if log_close(dp, bf, 1e-9) {
            Ok(())
        } else {
            Err(format!("T={frames} target={:?}: dp {dp} vs enumeration {bf}", target.labels()))
        }
    })
}

/// Analytic logit gradient against central differences with step `1e-5`.
pub fn gradient_suite(instances: usize, seed: u64) -> SuiteReport {
    run_suite("ctc-gradient", instances, seed, |rng| {
        let frames = rng.gen_range(2..=5);
        let labels = rng.gen_range(2..=4);
        let logits = random_logits(rng, frames, labels, 2.0);
        let mut target = random_target(rng, 3, labels - 1);
        while target.required_frames() > frames {
            target = random_target(rng, 3, labels - 1);
        }
        let loss = |m: &Matrix| ctc_loss_and_grad(m, &target).map(|r| r.loss);
        let r = ctc_loss_and_grad(&logits, &target).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for i in 0..logits.data().len() {
            let mut plus = logits.clone();
            plus.data_mut()[i] += h;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= h;
            let fd = (loss(&plus).map_err(|e| e.to_string())? - loss(&minus).map_err(|e| e.to_string())?) / (2.0 * h);
            let an = r.grad_logits.data()[i];
            if relative_error(fd, an) > 1e-5 {
                return Err(format!("logit {i}: analytic {an} vs finite difference {fd}"));
            }
        }
        for (t, row) in r.grad_logits.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if s.abs() > 1e-9 {
                return Err(format!("gradient row {t} sums to {s}"));
            }
        }
        Ok(())
    })
}

/// Recursive memoized LCS, kept separate from the row-based DP it checks.
pub fn lcs_memoized<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn lcs_suite(instances: usize, seed: u64) -> SuiteReport {
    run_suite("lcs-oracle", instances, seed, |rng| {
        let alphabet = rng.gen_range(2..=6u8);
        let draw = |rng: &mut Rng| -> Vec<u8> {
            let n = rng.gen_range(0..=12);
            (0..n).map(|_| rng.gen_range(0..alphabet)).collect()
        };
        let a = draw(rng);
        let b = draw(rng);
        let (fast, slow) = (lcs_len(&a, &b), lcs_memoized(&a, &b));
        if fast == slow {
            Ok(())
        } else {
            Err(format!("{a:?} / {b:?}: dp {fast} vs memoized {slow}"))
        }
    })
}

/// Beam search (width 64) against the exhaustive best collapsed sequence,
/// `T ≤ 4`, `L′ ≤ 3`. Ties within `1e-12` accept either sequence.
pub fn beam_suite(instances: usize, seed: u64) -> SuiteReport {
    run_suite("beam-exhaustive", instances, seed, |rng| {
        let frames = rng.gen_range(1..=4);
        let labels = rng.gen_range(2..=3);
        let y = random_emissions(rng, frames, labels);
        let oracle = collapsed_distribution_bruteforce(&y).map_err(|e| e.to_string())?;
        let best = oracle.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let got = beam_decode(&y, 64).map_err(|e| e.to_string())?;
        let got_lp = oracle.get(&got.labels).copied().unwrap_or(f64::NEG_INFINITY);
        if (got_lp - best).abs() <= 1e-12 && (got.score.value() - got_lp).abs() <= 1e-9 {
            Ok(())
        } else {
            Err(format!("beam chose {:?} ({got_lp}), best mass {best}", got.labels.labels()))
        }
    })
}

pub fn run_all(cfg: &SelfCheckConfig) -> Vec<SuiteReport> {
    vec![
        ctc_oracle_suite(cfg.ctc_instances, cfg.seed, cfg.ctc_impl),
        gradient_suite(cfg.gradient_instances, cfg.seed),
        lcs_suite(cfg.lcs_instances, cfg.seed),
        beam_suite(cfg.beam_instances, cfg.seed),
    ]
}
