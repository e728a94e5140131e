use crate::dsp::Matrix;
use crate::{Error, Result};

/// Source rows pooled into output row `j`, or an error when the frame ratio
/// is neither 1 nor 2.
fn pairs(from: usize, to: usize) -> Result<Vec<(usize, Option<usize>)>> {
    if from == to {
        return Ok((0..to).map(|j| (j, None)).collect());
    }
    // 2x pooling; a trailing odd frame is dropped (from = 2to + 1) and a
    // ceil-divided target keeps its last frame unpaired (from = 2to - 1).
    if to == 0 || !(2 * to - 1..=2 * to + 1).contains(&from) {
        return Err(Error::Alignment { from, to });
    }
    Ok((0..to)
        .map(|j| {
            let a = 2 * j;
            let b = (2 * j + 1 < from).then_some(2 * j + 1);
            (a, b)
        })
        .collect())
}

/// Mean-pools consecutive frame pairs down to `target` rows. Identity when
/// the counts already match.
pub fn align_frames(x: &Matrix, target: usize) -> Result<Matrix> {
    let map = pairs(x.rows(), target)?;
    let mut out = Matrix::zeros(target, x.cols());
    for (j, (a, b)) in map.into_iter().enumerate() {
        let row = out.row_mut(j);
        match b {
            Some(b) => {
                for ((o, p), q) in row.iter_mut().zip(x.row(a)).zip(x.row(b)) {
                    *o = 0.5 * (p + q);
                }
            }
            None => row.copy_from_slice(x.row(a)),
        }
    }
    Ok(out)
}

/// Attention weights pooled to `target` frames by summing pairs, then
/// renormalized so the result is again a distribution.
pub fn align_attention(alpha: &[f64], target: usize) -> Result<Vec<f64>> {
    let map = pairs(alpha.len(), target)?;
    let pooled: Vec<f64> = map
        .into_iter()
        .map(|(a, b)| alpha[a] + b.map_or(0.0, |b| alpha[b]))
        .collect();
    let z: f64 = pooled.iter().sum();
    if z <= 0.0 {
        return Err(Error::Invariant("attention mass vanished during alignment".into()));
    }
    Ok(pooled.into_iter().map(|v| v / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_equal() {
        let x = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(align_frames(&x, 3).unwrap(), x);
    }

    #[test]
    fn pairwise_means() {
        let x = Matrix::from_vec(4, 1, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(align_frames(&x, 2).unwrap().data(), &[2.0, 6.0]);
    }

    #[test]
    fn odd_tail_is_dropped() {
        let x = Matrix::from_vec(499, 1, (0..499).map(|i| i as f64).collect()).unwrap();
        let y = align_frames(&x, 249).unwrap();
        assert_eq!(y.rows(), 249);
        assert_eq!(y.get(248, 0), 496.5);
    }

    #[test]
    fn ceil_target_keeps_last_frame() {
        let x = Matrix::from_vec(5, 1, vec![1.0, 3.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(align_frames(&x, 3).unwrap().data(), &[2.0, 6.0, 9.0]);
    }

    #[test]
    fn bad_ratios_fail() {
        let x = Matrix::zeros(10, 1);
        assert!(align_frames(&x, 3).is_err());
        assert!(align_frames(&x, 11).is_err());
        assert!(align_frames(&x, 7).is_err());
    }

    #[test]
    fn attention_stays_a_distribution() {
        let a = [0.1, 0.2, 0.3, 0.15, 0.25];
        let p = align_attention(&a, 2).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.3 / 0.75).abs() < 1e-12);
    }
}
