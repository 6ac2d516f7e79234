//! CTC loss over a blank-extended target.
//!
//! Label 0 is the blank. The forward and backward recursions run in log
//! domain; `-inf` is probability zero. The gradient is taken with respect to
//! the pre-softmax logits.

use crate::decode::collapse;
use crate::error::{Error, Result};
use crate::numerics::{log_add, log_softmax_rows, LogProb, Matrix};

/// Index into the output label set. `0` is [`BLANK`].
pub type LabelId = u32;

pub const BLANK: LabelId = 0;

/// Largest `L′^T` the brute-force oracle will enumerate.
pub const BRUTEFORCE_LIMIT: u128 = 10_000_000;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Per-frame output distributions: `T` rows of `L′` probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionMatrix(Matrix);

impl EmissionMatrix {
    pub fn new(probs: Matrix) -> Result<Self> {
        if probs.rows() == 0 {
            return Err(Error::Emission("no frames".into()));
        }
        if probs.cols() < 1 {
            return Err(Error::Emission("no labels".into()));
        }
        for (t, row) in probs.row_iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Emission(format!("frame {t} has an invalid probability")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Emission(format!("frame {t} sums to {sum}")));
            }
        }
        Ok(EmissionMatrix(probs))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        EmissionMatrix::new(Matrix::from_rows(rows)?)
    }

    /// Normalizes logits with a row softmax.
    pub fn from_logits(logits: &Matrix) -> Self {
        EmissionMatrix(crate::numerics::softmax_rows(logits))
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn labels(&self) -> usize {
        self.0.cols()
    }

    pub fn prob(&self, t: usize, label: LabelId) -> f64 {
        self.0[(t, label as usize)]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn log_matrix(&self) -> Matrix {
        let mut m = self.0.clone();
        m.data_mut().iter_mut().for_each(|p| *p = p.ln());
        m
    }
}

/// A label sequence `[z₁…z_U]` that contains no blank.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TargetSequence(Vec<LabelId>);

impl TargetSequence {
    pub fn new(labels: Vec<LabelId>) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|&l| l == BLANK) {
            return Err(Error::InvalidTarget(format!("blank at position {pos}")));
        }
        Ok(TargetSequence(labels))
    }

    pub fn empty() -> Self {
        TargetSequence(Vec::new())
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<LabelId> {
        self.0
    }

    /// Minimum number of frames any path collapsing to this target needs:
    /// one per label plus one separating blank per adjacent repeat.
    pub fn required_frames(&self) -> usize {
        required_frames(&self.0)
    }
}

/// Frames needed to emit `labels` under CTC.
pub fn required_frames(labels: &[LabelId]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// `[−, z₁, −, z₂, …, z_U, −]`, length `2U + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedTarget(Vec<LabelId>);

impl ExtendedTarget {
    pub fn slots(&self) -> &[LabelId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn extend_target(labels: &[LabelId]) -> Result<ExtendedTarget> {
    let target = TargetSequence::new(labels.to_vec())?;
    let mut slots = Vec::with_capacity(2 * target.len() + 1);
    slots.push(BLANK);
    for &label in target.labels() {
        slots.push(label);
        slots.push(BLANK);
    }
    Ok(ExtendedTarget(slots))
}

/// Loss, logit gradient and log-probability for one `(logits, target)` pair.
#[derive(Clone, Debug)]
pub struct CtcResult {
    pub loss: f64,
    pub grad_logits: Matrix,
    pub log_prob: LogProb,
}

/// Which skip transitions the forward recursion permits.
///
/// Only [`TransitionRule::Standard`] is CTC. The other variant exists so the
/// self-check harness can demonstrate it catches a broken recursion.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitionRule {
    Standard,
    /// Also allows skipping the blank between two equal labels.
    SkipBetweenRepeats,
}

impl TransitionRule {
    #[inline]
    fn allows_skip(self, slots: &[LabelId], s: usize) -> bool {
        s >= 2
            && slots[s] != BLANK
            && (self == TransitionRule::SkipBetweenRepeats || slots[s] != slots[s - 2])
    }
}

fn check_labels(labels: &[LabelId], label_count: usize) -> Result<()> {
    match labels.iter().find(|&&l| l as usize >= label_count) {
        Some(&id) => Err(Error::OutOfVocabulary {
            id: id as usize,
            size: label_count,
        }),
        None => Ok(()),
    }
}

/// α table, `T × S`, in log domain.
fn forward_table(log_y: &Matrix, slots: &[LabelId], rule: TransitionRule) -> Matrix {
    let frames = log_y.rows();
    let s_len = slots.len();
    let mut alpha = Matrix::from_vec(frames, s_len, vec![f64::NEG_INFINITY; frames * s_len])
        .expect("sized");
    alpha[(0, 0)] = log_y[(0, slots[0] as usize)];
    if s_len > 1 {
        alpha[(0, 1)] = log_y[(0, slots[1] as usize)];
    }
    for t in 1..frames {
        for s in 0..s_len {
            let mut acc = alpha[(t - 1, s)];
            if s >= 1 {
                acc = log_add(acc, alpha[(t - 1, s - 1)]);
            }
            if rule.allows_skip(slots, s) {
                acc = log_add(acc, alpha[(t - 1, s - 2)]);
            }
            if acc != f64::NEG_INFINITY {
                alpha[(t, s)] = acc + log_y[(t, slots[s] as usize)];
            }
        }
    }
    alpha
}

/// β table, `T × S`, in log domain. Like α it includes the emission at `t`.
fn backward_table(log_y: &Matrix, slots: &[LabelId]) -> Matrix {
    let frames = log_y.rows();
    let s_len = slots.len();
    let mut beta = Matrix::from_vec(frames, s_len, vec![f64::NEG_INFINITY; frames * s_len])
        .expect("sized");
    let last = frames - 1;
    beta[(last, s_len - 1)] = log_y[(last, slots[s_len - 1] as usize)];
    if s_len > 1 {
        beta[(last, s_len - 2)] = log_y[(last, slots[s_len - 2] as usize)];
    }
    for t in (0..last).rev() {
        for s in 0..s_len {
            let mut acc = beta[(t + 1, s)];
            if s + 1 < s_len {
                acc = log_add(acc, beta[(t + 1, s + 1)]);
            }
            if s + 2 < s_len && TransitionRule::Standard.allows_skip(slots, s + 2) {
                acc = log_add(acc, beta[(t + 1, s + 2)]);
            }
            if acc != f64::NEG_INFINITY {
                beta[(t, s)] = acc + log_y[(t, slots[s] as usize)];
            }
        }
    }
    beta
}

fn final_log_prob(alpha: &Matrix, s_len: usize) -> f64 {
    let last = alpha.rows() - 1;
    if s_len > 1 {
        log_add(alpha[(last, s_len - 1)], alpha[(last, s_len - 2)])
    } else {
        alpha[(last, 0)]
    }
}

/// `ln P(target | y)` by the forward recursion. Infeasible targets give `-inf`.
pub fn ctc_log_prob(y: &EmissionMatrix, target: &TargetSequence) -> Result<LogProb> {
    ctc_log_prob_with_rule(y, target, TransitionRule::Standard)
}

#[doc(hidden)]
pub fn ctc_log_prob_with_rule(
    y: &EmissionMatrix,
    target: &TargetSequence,
    rule: TransitionRule,
) -> Result<LogProb> {
    check_labels(target.labels(), y.labels())?;
    if target.required_frames() > y.frames() && rule == TransitionRule::Standard {
        return Ok(LogProb::ZERO);
    }
    let ext = extend_target(target.labels())?;
    let alpha = forward_table(&y.log_matrix(), ext.slots(), rule);
    Ok(LogProb::clamped(final_log_prob(&alpha, ext.len())))
}

/// CTC loss `−ln P(target | softmax(logits))` and its exact gradient with
/// respect to `logits`.
pub fn ctc_loss_and_grad(logits: &Matrix, target: &TargetSequence) -> Result<CtcResult> {
    let frames = logits.rows();
    let label_count = logits.cols();
    if frames == 0 || label_count == 0 {
        return Err(Error::Emission(format!("logits are {frames}x{label_count}")));
    }
    if !logits.is_finite() {
        return Err(Error::Emission("non-finite logit".into()));
    }
    check_labels(target.labels(), label_count)?;
    let required = target.required_frames();
    if required > frames {
        return Err(Error::Infeasible { frames, required });
    }

    let log_y = log_softmax_rows(logits);
    let ext = extend_target(target.labels())?;
    let slots = ext.slots();
    let alpha = forward_table(&log_y, slots, TransitionRule::Standard);
    let beta = backward_table(&log_y, slots);
    let log_p = final_log_prob(&alpha, slots.len());
    if !log_p.is_finite() {
        // Feasible target but probability underflowed to zero.
        return Err(Error::Infeasible { frames, required });
    }

    let mut grad = Matrix::zeros(frames, label_count);
    let mut occupancy = vec![f64::NEG_INFINITY; label_count];
    for t in 0..frames {
        occupancy.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for (s, &label) in slots.iter().enumerate() {
            let ab = alpha[(t, s)] + beta[(t, s)];
            if ab != f64::NEG_INFINITY {
                let k = label as usize;
                occupancy[k] = log_add(occupancy[k], ab - log_y[(t, k)]);
            }
        }
        let row = grad.row_mut(t);
        for k in 0..label_count {
            row[k] = log_y[(t, k)].exp() - (occupancy[k] - log_p).exp();
        }
    }

    Ok(CtcResult {
        loss: -log_p,
        grad_logits: grad,
        log_prob: LogProb::clamped(log_p),
    })
}

/// Exhaustive `ln Σ_{Δ: B(Δ) = target} Π_t y_t^{δ_t}` over all `L′^T` paths.
pub fn ctc_log_prob_bruteforce(y: &EmissionMatrix, target: &TargetSequence) -> Result<LogProb> {
    check_labels(target.labels(), y.labels())?;
    let frames = y.frames();
    let labels = y.labels();
    let paths = (labels as u128).checked_pow(frames as u32).unwrap_or(u128::MAX);
    if paths > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge {
            paths,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let mut total = 0.0;
    for_each_path(frames, labels, |path| {
        if collapse(path).labels() == target.labels() {
            total += path
                .iter()
                .enumerate()
                .map(|(t, &l)| y.prob(t, l))
                .product::<f64>();
        }
    });
    Ok(LogProb::clamped(total.ln()))
}

/// Calls `visit` with every path in `{0..labels}^frames`, in lexicographic order.
pub(crate) fn for_each_path(frames: usize, labels: usize, mut visit: impl FnMut(&[LabelId])) {
    let mut path = vec![0 as LabelId; frames];
    loop {
        visit(&path);
        let mut i = frames;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            path[i] += 1;
            if (path[i] as usize) < labels {
                break;
            }
            path[i] = 0;
        }
    }
}

/// Log-probabilities of every collapsed sequence reachable from `y`, keyed
/// by sequence, computed by path enumeration.
pub fn collapsed_distribution_bruteforce(
    y: &EmissionMatrix,
) -> Result<std::collections::BTreeMap<TargetSequence, f64>> {
    let frames = y.frames();
    let labels = y.labels();
    let paths = (labels as u128).checked_pow(frames as u32).unwrap_or(u128::MAX);
    if paths > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge {
            paths,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let mut mass = std::collections::BTreeMap::new();
    for_each_path(frames, labels, |path| {
        let p: f64 = path.iter().enumerate().map(|(t, &l)| y.prob(t, l)).product();
        *mass.entry(collapse(path)).or_insert(0.0) += p;
    });
    Ok(mass.into_iter().map(|(k, p): (TargetSequence, f64)| (k, p.ln())).collect())
}
