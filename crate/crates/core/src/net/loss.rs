//! Focal loss on softmax outputs.

/// Lower bound applied to the true-class probability before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-(1 - p_t)^gamma * ln(p_t)` for the true class `t`.
pub fn focal_loss(probabilities: &[f64], true_class: usize, gamma: f64) -> f64 {
    let pt = probabilities[true_class];
    let weight = if gamma == 0.0 { 1.0 } else { (1.0 - pt).max(0.0).powf(gamma) };
    -weight * pt.max(PROB_FLOOR).ln()
}

/// Mean focal loss over a batch of probability rows.
pub fn batch_focal_loss(rows: &[Vec<f64>], classes: &[usize], gamma: f64) -> f64 {
    let total: f64 = rows
        .iter()
        .zip(classes)
        .map(|(p, &t)| focal_loss(p, t, gamma))
        .sum();
    total / rows.len() as f64
}

/// Writes `scale * dL/dlogits` into `grad` and returns the loss.
#[inline]
pub(crate) fn focal_loss_and_logit_grad(
    probabilities: &[f64],
    true_class: usize,
    gamma: f64,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let pt = probabilities[true_class];
    let log_pt = pt.max(PROB_FLOOR).ln();
    let one_minus = (1.0 - pt).max(0.0);
    let (weight, dweight) = if gamma == 0.0 {
        (1.0, 0.0)
    } else if one_minus == 0.0 {
        (0.0, 0.0)
    } else {
        let w = one_minus.powf(gamma);
        (w, gamma * w / one_minus)
    };
    // dL/dp_t = gamma (1-p)^(gamma-1) ln p - (1-p)^gamma / p
    let dl_dpt = dweight * log_pt - weight / pt.max(PROB_FLOOR);
    // dp_t/dz_j = p_t (delta_tj - p_j)
    for (j, (g, &pj)) in grad.iter_mut().zip(probabilities).enumerate() {
        let delta = if j == true_class { 1.0 } else { 0.0 };
        *g = scale * dl_dpt * pt * (delta - pj);
    }
    -weight * log_pt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_prediction_has_zero_loss() {
        assert_eq!(focal_loss(&[0.0, 1.0, 0.0], 1, 2.0), 0.0);
    }

    #[test]
    fn half_probability() {
        let l = focal_loss(&[0.5, 0.25, 0.25], 0, 2.0);
        assert!((l - 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((l - 0.173_286_795_139_986_3).abs() < 1e-15);
    }

    #[test]
    fn gamma_zero_is_cross_entropy() {
        let p = [0.2, 0.7, 0.1];
        for t in 0..3 {
            assert_eq!(focal_loss(&p, t, 0.0), -p[t].ln());
        }
    }

    #[test]
    fn floor_keeps_loss_finite() {
        let l = focal_loss(&[1.0, 0.0, 0.0], 2, 2.0);
        assert!((l - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn logit_gradient_matches_finite_difference() {
        let logits = [0.3, -1.2, 0.8];
        let softmax = |z: &[f64; 3]| {
            let m = z.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        for gamma in [0.0, 0.5, 2.0] {
            for t in 0..3 {
                let mut g = [0.0; 3];
                focal_loss_and_logit_grad(&softmax(&logits), t, gamma, 1.0, &mut g);
                for j in 0..3 {
                    let h = 1e-6;
                    let mut a = logits;
                    a[j] += h;
                    let mut b = logits;
                    b[j] -= h;
                    let fd = (focal_loss(&softmax(&a), t, gamma) - focal_loss(&softmax(&b), t, gamma)) / (2.0 * h);
                    assert!((fd - g[j]).abs() < 1e-8, "gamma {gamma} t {t} j {j}: {fd} vs {}", g[j]);
                }
            }
        }
    }
}
