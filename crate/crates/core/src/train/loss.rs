use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DistillLevel, DistillParts, MtlScheme};
use crate::autodiff::{Graph, Tensor, Var};
use crate::model::{align_attention, align_frames, ForwardOut};
use crate::{Error, Result};

/// `(a, b)` for one optimizer step.
pub fn mtl_weights(scheme: MtlScheme, rng: &mut impl Rng) -> (f64, f64) {
    match scheme {
        MtlScheme::Fixed { a, b } => (a, b),
        MtlScheme::RandomPerStep => {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            let m = x.max(y);
            let (ex, ey) = ((x - m).exp(), (y - m).exp());
            (ex / (ex + ey), ey / (ex + ey))
        }
    }
}

/// Loss components of one utterance or the mean over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_attn: f64,
    pub l_feat: f64,
    pub l_dis: f64,
    pub a: f64,
    pub b: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    /// Checks `l_total == a*l_cls + b*l_dis` (1e-6 relative),
    /// `l_dis == l_attn + l_feat` and non-negativity.
    pub fn check(&self) -> Result<()> {
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-6 * x.abs().max(y.abs()).max(1e-12);
        let combined = self.a * self.l_cls + self.b * self.l_dis;
        if !close(self.l_total, combined) {
            return Err(Error::Invariant(format!(
                "l_total {} != a*l_cls + b*l_dis = {combined}",
                self.l_total
            )));
        }
        if !close(self.l_dis, self.l_attn + self.l_feat) {
            return Err(Error::Invariant(format!(
                "l_dis {} != l_attn + l_feat = {}",
                self.l_dis,
                self.l_attn + self.l_feat
            )));
        }
        let parts = [self.l_cls, self.l_attn, self.l_feat, self.l_dis, self.a, self.b, self.l_total];
        if parts.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Invariant(format!("negative or NaN loss component in {self:?}")));
        }
        Ok(())
    }

    /// Component-wise mean.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut m = LossBreakdown::default();
        for x in items {
            m.l_cls += x.l_cls;
            m.l_attn += x.l_attn;
            m.l_feat += x.l_feat;
            m.l_dis += x.l_dis;
            m.a += x.a;
            m.b += x.b;
            m.l_total += x.l_total;
        }
        m.l_cls /= n;
        m.l_attn /= n;
        m.l_feat /= n;
        m.l_dis /= n;
        m.a /= n;
        m.b /= n;
        m.l_total /= n;
        m
    }
}

/// Teacher outputs for one utterance, already aligned to the student's
/// frame rate. Always enters the student graph as constants.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTargets {
    /// `T' x H`
    pub frame_features: Tensor,
    /// `T' x 1`
    pub alpha: Tensor,
    /// `1 x H`
    pub pooled: Tensor,
}

impl TeacherTargets {
    /// Aligns raw teacher outputs (`T` frames) to `student_frames`.
    pub fn aligned(frame_features: &Tensor, alpha: &Tensor, pooled: &Tensor, student_frames: usize) -> Result<Self> {
        let z = align_frames(&frame_features.to_matrix()?, student_frames)?;
        let a = align_attention(alpha.data(), student_frames)?;
        Ok(Self {
            frame_features: Tensor::from_matrix(&z),
            alpha: Tensor::new(vec![student_frames, 1], a)?,
            pooled: pooled.clone(),
        })
    }
}

/// `(l_attn, l_feat)` as graph scalars; a disabled part is the constant 0.
pub fn distillation_loss(
    g: &mut Graph,
    student: &ForwardOut,
    teacher: &TeacherTargets,
    parts: DistillParts,
    level: DistillLevel,
) -> Result<(Var, Var)> {
    let l_attn = if parts.attention() {
        let t = g.constant(teacher.alpha.clone())?;
        g.mse(student.alpha, t)?
    } else {
        g.constant(Tensor::scalar(0.0))?
    };
    let l_feat = if parts.features() {
        match level {
            DistillLevel::FrameLevel => {
                let t = g.constant(teacher.frame_features.clone())?;
                g.mse(student.frame_features, t)?
            }
            DistillLevel::Global => {
                let t = g.constant(teacher.pooled.clone())?;
                g.mse(student.pooled, t)?
            }
        }
    } else {
        g.constant(Tensor::scalar(0.0))?
    };
    Ok((l_attn, l_feat))
}
