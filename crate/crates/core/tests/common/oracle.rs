//! Straight-line evaluation of the infinite-data key rate for exact sources,
//! written in count form and sharing no code with the library pipeline.

use mdiqkd_core::channel_sim::PairObservables;
use mdiqkd_core::source_model::{Source, SourceEnsemble};

fn poisson(mu: f64, k: i32) -> f64 {
    let mut v = (-mu).exp();
    for i in 1..=k {
        v *= mu / i as f64;
    }
    v
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

pub struct Asymptotic {
    pub h_lower: f64,
    pub h_upper: f64,
    eval: Box<dyn Fn(f64) -> f64>,
}

impl Asymptotic {
    pub fn rate_at(&self, h: f64) -> f64 {
        (self.eval)(h)
    }

    /// `min_H R(H)` by a dense scan and ternary refinement.
    pub fn min_rate(&self) -> f64 {
        let n = 4000;
        let (lo, hi) = (self.h_lower, self.h_upper);
        if hi <= lo {
            return self.rate_at(lo);
        }
        let at = |i: usize| lo + (hi - lo) * i as f64 / n as f64;
        let mut best_i = 0;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let r = self.rate_at(at(i));
            if r < best {
                best = r;
                best_i = i;
            }
        }
        let (mut a, mut b) = (at(best_i.saturating_sub(1)), at((best_i + 1).min(n)));
        for _ in 0..200 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if self.rate_at(m1) <= self.rate_at(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        best.min(self.rate_at(0.5 * (a + b)))
    }
}

/// Requires symmetric probabilities, `δ₁ = δ₂ = 0`.
pub fn asymptotic(ensemble: &SourceEnsemble, obs: &PairObservables, f: f64) -> Asymptotic {
    let (al, bo) = (&ensemble.alice, &ensemble.bob);
    assert_eq!(
        (al.p_v, al.p_x, al.p_y, al.p_z),
        (bo.p_v, bo.p_x, bo.p_y, bo.p_z)
    );
    assert_eq!(
        al.vacuum_cap + bo.vacuum_cap + al.fluctuation + bo.fluctuation,
        0.0
    );
    let (pv, px, py, pz) = (al.p_v, al.p_x, al.p_y, al.p_z);
    let nt = obs.total_pairs;
    let n = |l, r| obs.get(l, r).counts as f64;
    let m = |l, r| obs.get(l, r).errors as f64;
    use Source::*;
    let a = |mu: f64, k| poisson(mu, k);
    let (a0x, a1x) = (a(al.mu_x, 0), a(al.mu_x, 1));
    let (a0y, a1y) = (a(al.mu_y, 0), a(al.mu_y, 1));
    let (b0x, b1x, b2x) = (a(bo.mu_x, 0), a(bo.mu_x, 1), a(bo.mu_x, 2));
    let (b0y, b1y, b2y) = (a(bo.mu_y, 0), a(bo.mu_y, 1), a(bo.mu_y, 2));
    let a1z = a(al.mu_z, 1);
    let b1z = a(bo.mu_z, 1);

    // Multi-photon yy counts with vacuum contributions removed.
    let ntilde_yy = n(Y, Y) - py * a0y / pv * n(V, Y) - py * b0y / pv * n(Y, V)
        + py * py * a0y * b0y / (pv * pv) * n(V, V);
    let mtilde_xx = m(X, X) - px * a0x / pv * m(V, X) - px * b0x / pv * m(X, V)
        + px * px * a0x * b0x / (pv * pv) * m(V, V);
    let den = a1x * a1y * (b1x * b2y - b2x * b1y);
    let h_upper = 2.0 * m(X, X) / (px * px * nt);
    let h_lower = (2.0 * (m(X, X) - mtilde_xx) / (px * px * nt)).max(0.0);

    let n_xx = n(X, X);
    let m_xx = m(X, X);
    let n_zz = n(Z, Z);
    let e_zz = if n_zz > 0.0 { m(Z, Z) / n_zz } else { 0.0 };
    let leak = f * n_zz / (pz * pz * nt) * h2(e_zz);
    let eval = move |h: f64| {
        let ntilde_xx = n_xx - h * px * px * nt;
        let d11 = (a1y * b2y * ntilde_xx / (px * px) - a1x * b2x * ntilde_yy / (py * py)) / den;
        let s11 = (d11 / nt).max(0.0);
        let privacy = if s11 > 0.0 {
            let e11 = ((m_xx - 0.5 * h * px * px * nt) / (nt * px * px * a1x * b1x * s11))
                .clamp(0.0, 1.0);
            if e11 < 0.5 {
                s11 * (1.0 - h2(e11))
            } else {
                0.0
            }
        } else {
            0.0
        };
        pz * pz * (a1z * b1z * privacy - leak)
    };
    Asymptotic {
        h_lower,
        h_upper,
        eval: Box::new(eval),
    }
}
