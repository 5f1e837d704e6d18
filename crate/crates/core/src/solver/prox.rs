/// `sign(xi) · max(|xi| − iota, 0)`
#[inline]
pub fn soft_threshold(xi: f64, iota: f64) -> f64 {
    debug_assert!(iota >= 0.0);
    if xi > iota {
        xi - iota
    } else if xi < -iota {
        xi + iota
    } else {
        0.0
    }
}

/// Elastic-net prox for the temporal-difference split variable:
///
/// `h = SoftThr((s − ν) / (1 + λW2/ρ2); λW1 / (ρ2 (1 + λW2/ρ2)))`
pub fn update_h(s: &[f64], nu: &[f64], h: &mut [f64], lambda_w1: f64, lambda_w2: f64, rho2: f64) {
    let scale = 1.0 + lambda_w2 / rho2;
    let threshold = lambda_w1 / (rho2 * scale);
    for ((h, &s), &nu) in h.iter_mut().zip(s).zip(nu) {
        *h = soft_threshold((s - nu) / scale, threshold);
    }
}
