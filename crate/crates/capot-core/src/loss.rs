//! Alignment losses for post-training a query encoder against a frozen
//! snapshot of itself.
//!
//! Three hinged terms, each with closed-form gradients:
//!
//! * contrastive: pull an embedding toward its positive, push it from a
//!   negative, with separate pull/push weights inside the hinge;
//! * anchor: penalize drift of the trainable embedding away from the
//!   frozen encoder's embedding of the same text;
//! * ranking: require the positive to score higher against the moving
//!   embedding than the frozen placement does.
//!
//! A hinge is active iff its pre-activation is strictly positive; at the
//! kink the zero branch is chosen. All math is f64 so finite-difference
//! checks resolve gradients to 1e-4 relative error at h = 1e-5.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Pull strength toward the positive inside the contrastive hinge.
    pub tau_positive: f64,
    /// Push strength from the negative inside the contrastive hinge.
    pub tau_negative: f64,
    /// Mix weights of the three terms in the total.
    pub tau_contrastive: f64,
    pub tau_anchor: f64,
    pub tau_ranking: f64,
    pub eps_contrastive: f64,
    pub eps_anchor: f64,
    pub eps_ranking: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            tau_positive: 1.0,
            tau_negative: 0.1,
            tau_contrastive: 1.0,
            tau_anchor: 2.0,
            tau_ranking: 1.0,
            eps_contrastive: 0.5,
            eps_anchor: 0.0,
            eps_ranking: 0.1,
        }
    }
}

impl LossWeights {
    pub fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("tau_positive", self.tau_positive),
            ("tau_negative", self.tau_negative),
            ("tau_contrastive", self.tau_contrastive),
            ("tau_anchor", self.tau_anchor),
            ("tau_ranking", self.tau_ranking),
            ("eps_contrastive", self.eps_contrastive),
            ("eps_anchor", self.eps_anchor),
            ("eps_ranking", self.eps_ranking),
        ]
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), CoreError> {
        let slot = match key {
            "tau_positive" => &mut self.tau_positive,
            "tau_negative" => &mut self.tau_negative,
            "tau_contrastive" => &mut self.tau_contrastive,
            "tau_anchor" => &mut self.tau_anchor,
            "tau_ranking" => &mut self.tau_ranking,
            "eps_contrastive" => &mut self.eps_contrastive,
            "eps_anchor" => &mut self.eps_anchor,
            "eps_ranking" => &mut self.eps_ranking,
            _ => return Err(CoreError::InvalidInput(alloc::format!("unknown loss weight {key:?}"))),
        };
        *slot = value;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        for (name, v) in self.fields() {
            if !v.is_finite() || v < 0.0 {
                return Err(CoreError::InvalidInput(alloc::format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub anchor: f64,
    pub ranking: f64,
    /// tau_contrastive * contrastive + tau_anchor * anchor
    /// + tau_ranking * ranking.
    pub total: f64,
}

/// Gradients wrt the three embeddings produced by the trainable encoder.
/// The frozen embedding carries no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub x: Vec<f64>,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize, CoreError> {
    let d = dims[0];
    if d == 0 || dims.iter().any(|x| *x != d) {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "embedding dims {dims:?} must be equal and non-zero"
        )));
    }
    Ok(d)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hinge over weighted squared distances:
/// max(0, tau_positive d(x,pos)^2 - tau_negative d(x,neg)^2 + eps).
/// Returns the loss and its gradients wrt all three embeddings.
pub fn contrastive_loss(
    e_x: &[f64],
    e_pos: &[f64],
    e_neg: &[f64],
    w: &LossWeights,
) -> Result<(f64, Grads), CoreError> {
    let d = check_dims(&[e_x.len(), e_pos.len(), e_neg.len()])?;
    let pre = w.tau_positive * sq_dist(e_x, e_pos) - w.tau_negative * sq_dist(e_x, e_neg)
        + w.eps_contrastive;
    if pre <= 0.0 {
        return Ok((0.0, Grads { x: vec![0.0; d], pos: vec![0.0; d], neg: vec![0.0; d] }));
    }
    let x = (0..d)
        .map(|i| {
            2.0 * w.tau_positive * (e_x[i] - e_pos[i]) - 2.0 * w.tau_negative * (e_x[i] - e_neg[i])
        })
        .collect();
    let pos = (0..d).map(|i| -2.0 * w.tau_positive * (e_x[i] - e_pos[i])).collect();
    let neg = (0..d).map(|i| 2.0 * w.tau_negative * (e_x[i] - e_neg[i])).collect();
    Ok((pre, Grads { x, pos, neg }))
}

/// Hinge over drift from the frozen placement of the same text:
/// max(0, d(trainable, frozen)^2 + eps_anchor). The gradient is wrt the
/// trainable embedding only.
pub fn anchor_loss(
    e_x_trainable: &[f64],
    e_x_frozen: &[f64],
    w: &LossWeights,
) -> Result<(f64, Vec<f64>), CoreError> {
    let d = check_dims(&[e_x_trainable.len(), e_x_frozen.len()])?;
    let pre = sq_dist(e_x_trainable, e_x_frozen) + w.eps_anchor;
    if pre <= 0.0 {
        return Ok((0.0, vec![0.0; d]));
    }
    Ok((pre, (0..d).map(|i| 2.0 * (e_x_trainable[i] - e_x_frozen[i])).collect()))
}

/// Hinge over a scalar score gap with fixed direction +1:
/// max(0, -(score_pos - score_anchor) + eps_ranking). Returns the loss
/// and (d/d score_pos, d/d score_anchor).
pub fn ranking_loss(
    score_pos: f64,
    score_anchor: f64,
    w: &LossWeights,
) -> Result<(f64, (f64, f64)), CoreError> {
    if !score_pos.is_finite() || !score_anchor.is_finite() {
        return Err(CoreError::InvalidInput("ranking scores must be finite".to_string()));
    }
    let pre = -(score_pos - score_anchor) + w.eps_ranking;
    if pre <= 0.0 {
        return Ok((0.0, (0.0, 0.0)));
    }
    Ok((pre, (-1.0, 1.0)))
}

/// Full objective for one alignment example.
///
/// * `e_x`: trainable embedding of the query being aligned.
/// * `e_pos`: trainable embedding of its positive.
/// * `e_neg`: trainable embedding of a negative.
/// * `e_x_frozen`: the frozen encoder's embedding of the same query.
///
/// Ranking scores are score_pos = <e_pos, e_x> and
/// score_anchor = <e_x_frozen, e_x>. The batch loss is the sum of
/// per-example totals.
pub fn capot_loss(
    e_x: &[f64],
    e_pos: &[f64],
    e_neg: &[f64],
    e_x_frozen: &[f64],
    w: &LossWeights,
) -> Result<(LossBreakdown, Grads), CoreError> {
    w.validate()?;
    let d = check_dims(&[e_x.len(), e_pos.len(), e_neg.len(), e_x_frozen.len()])?;
    let (l_c, g_c) = contrastive_loss(e_x, e_pos, e_neg, w)?;
    let (l_a, g_a) = anchor_loss(e_x, e_x_frozen, w)?;
    let (l_r, (g_r_pos, g_r_anchor)) =
        ranking_loss(dot(e_pos, e_x), dot(e_x_frozen, e_x), w)?;
    let mut grads = Grads {
        x: vec![0.0; d],
        pos: vec![0.0; d],
        neg: vec![0.0; d],
    };
    for i in 0..d {
        // chain rule through the two scores: d score_pos / d e_x = e_pos,
        // d score_pos / d e_pos = e_x, d score_anchor / d e_x = e_x_frozen
        let rank_x = g_r_pos * e_pos[i] + g_r_anchor * e_x_frozen[i];
        let rank_pos = g_r_pos * e_x[i];
        grads.x[i] =
            w.tau_contrastive * g_c.x[i] + w.tau_anchor * g_a[i] + w.tau_ranking * rank_x;
        grads.pos[i] = w.tau_contrastive * g_c.pos[i] + w.tau_ranking * rank_pos;
        grads.neg[i] = w.tau_contrastive * g_c.neg[i];
    }
    let total = w.tau_contrastive * l_c + w.tau_anchor * l_a + w.tau_ranking * l_r;
    Ok((LossBreakdown { contrastive: l_c, anchor: l_a, ranking: l_r, total }, grads))
}
