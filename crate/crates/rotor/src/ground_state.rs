//! Single-site effective potential of the conditioned system and its
//! maximizers.
//!
//! Under the all-π conditioning, constant configurations reduce the
//! ground-state problem to maximizing
//!
//! ```text
//! g(θ) = βh cos θ + c1 cos θ + c2 cos²θ + c3 cos³θ
//! ```
//!
//! (or the full-log variant `βh cos θ + log p_t(θ, π)`).  Writing
//! `c = cos θ` and `δ = βh − 2h_t`, interior stationary points solve the
//! quadratic `8 h_t³ c² + 4 h_t² c = δ`.  When the relevant root sits in
//! `(−1, 1)` the potential has two reflection-symmetric global maxima
//! `{θ*, 2π − θ*}`, the spin-flop pair; `ε_t = π/2 − θ*` measures their
//! deviation from the axis.  The window of times where this degeneracy
//! holds is located both by scanning and from the closed-form bifurcation
//! boundaries `βh = 2h_t ∓ 4h_t² + 8h_t³`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::kernel::{self, ExpansionCoeffs, EXPANSION_T_MIN, SERIES_CROSSOVER_T};

/// The single-site potential `g(θ)` of the conditioned system.
#[derive(Clone, Copy, Debug)]
pub struct SitePotential {
    pub beta_h: f64,
    pub t: f64,
    pub coeffs: ExpansionCoeffs,
    /// Evaluate `log p_t(θ, π)` exactly instead of the three-term form.
    pub use_full_log: bool,
}

impl SitePotential {
    pub fn three_term(beta_h: f64, t: f64) -> Result<Self> {
        Ok(SitePotential {
            beta_h,
            t,
            coeffs: kernel::expansion(t)?,
            use_full_log: false,
        })
    }

    pub fn full_log(beta_h: f64, t: f64) -> Result<Self> {
        Ok(SitePotential {
            beta_h,
            t,
            coeffs: kernel::expansion(t)?,
            use_full_log: true,
        })
    }

    pub fn value(&self, theta: f64) -> f64 {
        if self.use_full_log {
            self.beta_h * theta.cos()
                + kernel::log_kernel_delta(theta - PI, self.t, 1e-13)
                    .expect("log kernel in site potential")
                    .value
        } else {
            self.beta_h * theta.cos() + self.coeffs.eval(theta)
        }
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        if self.use_full_log {
            if self.t < SERIES_CROSSOVER_T {
                // central difference fallback; full-log is only used at t ≥ t_min
                let eps = 1e-6;
                return (self.value(theta + eps) - self.value(theta - eps)) / (2.0 * eps);
            }
            let mut p = 1.0;
            let mut dp = 0.0;
            for n in 1..=64u32 {
                let nf = n as f64;
                let w = (-nf * nf * self.t).exp();
                if w < 1e-18 {
                    break;
                }
                p += 2.0 * w * (nf * (theta - PI)).cos();
                dp += -2.0 * nf * w * (nf * (theta - PI)).sin();
            }
            -self.beta_h * theta.sin() + dp / p
        } else {
            let c = theta.cos();
            let poly = self.beta_h + self.coeffs.c1 + (2.0 * self.coeffs.c2 + 3.0 * self.coeffs.c3 * c) * c;
            -theta.sin() * poly
        }
    }
}

/// Result of a maximizer search.
#[derive(Clone, Debug)]
pub struct GroundStateReport {
    /// Global maximizers of `g` over `[0, 2π)`.
    pub maximizers: Vec<Angle>,
    /// `π/2 − θ*` for the maximizer `θ*` in `(0, π)`, else 0.
    pub epsilon_t: f64,
    /// Two reflection-related global maximizers of equal value.
    pub degenerate: bool,
    /// Potential value at the maximum.
    pub g_at_max: f64,
    /// False when the refinement tolerance could not be reached.
    pub refined: bool,
}

const GOLDEN_INV: f64 = 0.618_033_988_749_894_9;
const GOLDEN_MAX_ITERS: usize = 200;

/// Golden-section maximum of `f` on `[lo, hi]`, to bracket width `tol`.
fn golden_section_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, bool) {
    let mut a = hi - GOLDEN_INV * (hi - lo);
    let mut b = lo + GOLDEN_INV * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..GOLDEN_MAX_ITERS {
        if hi - lo <= tol {
            return (0.5 * (lo + hi), true);
        }
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN_INV * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN_INV * (hi - lo);
            fa = f(a);
        }
    }
    (0.5 * (lo + hi), hi - lo <= tol)
}

/// Bisection on `g'` to polish a bracketed interior maximum; golden
/// section alone only resolves an argmax to √ε.
fn derivative_polish(sp: &SitePotential, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut dlo = sp.derivative(lo);
    let dhi = sp.derivative(hi);
    if !(dlo > 0.0 && dhi < 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dm = sp.derivative(mid);
        if dm > 0.0 {
            lo = mid;
            dlo = dm;
        } else {
            hi = mid;
        }
    }
    let _ = dlo;
    Some(0.5 * (lo + hi))
}

/// Global maximizers of the site potential, by grid scan, golden-section
/// refinement and derivative polishing.
pub fn find_maximizers(sp: &SitePotential, grid_n: usize, refine_tol: f64) -> Result<GroundStateReport> {
    if grid_n < 256 {
        return Err(Error::InvalidParams(format!(
            "grid_n must be >= 256, got {grid_n}"
        )));
    }
    if !(refine_tol > 0.0) {
        return Err(Error::NonPositiveTolerance(refine_tol));
    }
    let g = |theta: f64| sp.value(theta);
    let vals: Vec<f64> = (0..grid_n).map(|i| g(TAU * i as f64 / grid_n as f64)).collect();

    // Local maxima on the cyclic grid, refined inside their brackets.
    let mut candidates: Vec<(f64, f64, bool)> = Vec::new();
    for i in 0..grid_n {
        let prev = vals[(i + grid_n - 1) % grid_n];
        let next = vals[(i + 1) % grid_n];
        if vals[i] >= prev && vals[i] >= next && (vals[i] > prev || vals[i] > next) {
            let center = TAU * i as f64 / grid_n as f64;
            let span = TAU / grid_n as f64;
            let (mut theta, ok) = golden_section_max(&g, center - span, center + span, refine_tol.max(1e-12));
            if let Some(polished) = derivative_polish(sp, theta - span, theta + span) {
                theta = polished;
            }
            candidates.push((theta, g(theta), ok));
        }
    }
    if candidates.is_empty() {
        // flat potential: every point maximizes; report θ = 0
        return Ok(GroundStateReport {
            maximizers: vec![Angle::zero()],
            epsilon_t: 0.0,
            degenerate: false,
            g_at_max: vals[0],
            refined: true,
        });
    }

    let best = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let mut refined = true;
    let mut maxima: Vec<(f64, f64)> = Vec::new();
    for (theta, val, ok) in candidates {
        if best - val <= 1e-12 {
            refined &= ok;
            let th = Angle::new(theta).radians();
            // dedupe cyclically
            if !maxima.iter().any(|&(m, _)| {
                let d = (m - th).abs();
                d < 1e-7 || (TAU - d) < 1e-7
            }) {
                maxima.push((th, val));
            }
        }
    }
    maxima.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let degenerate = maxima.len() == 2 && {
        let (a, b) = (maxima[0].0, maxima[1].0);
        a > 1e-9 && a < PI - 1e-9 && ((a + b) - TAU).abs() < 1e-6
    };
    let epsilon_t = maxima
        .iter()
        .find(|&&(m, _)| m > 1e-9 && m < PI - 1e-9)
        .map(|&(m, _)| FRAC_PI_2 - m)
        .unwrap_or(0.0);

    Ok(GroundStateReport {
        maximizers: maxima.iter().map(|&(m, _)| Angle::new(m)).collect(),
        epsilon_t,
        degenerate,
        g_at_max: best,
        refined,
    })
}

/// Degeneracy predicate used by the window scan.
fn degenerate_at(beta_h: f64, t: f64) -> Result<bool> {
    let sp = SitePotential::three_term(beta_h, t)?;
    Ok(find_maximizers(&sp, 4096, 1e-10)?.degenerate)
}

/// Scan resolution of [`transition_window`] before bisection refinement.
pub const WINDOW_SCAN_STEP: f64 = 1e-3;

/// Maximal interval of times in `[t_lo, t_hi]` with degenerate
/// ground-state maximizers, located by scanning at [`WINDOW_SCAN_STEP`]
/// and bisecting each endpoint to 1e−6.
pub fn transition_window(beta: f64, h: f64, t_lo: f64, t_hi: f64) -> Result<Option<(f64, f64)>> {
    if !(beta > 0.0) || !(h >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "need beta > 0 and h >= 0, got beta={beta}, h={h}"
        )));
    }
    let beta_h = beta * h;
    let lo = t_lo.max(EXPANSION_T_MIN);
    if lo >= t_hi {
        return Ok(None);
    }
    let n = ((t_hi - lo) / WINDOW_SCAN_STEP).ceil() as usize;
    let ts: Vec<f64> = (0..=n).map(|i| lo + (t_hi - lo) * i as f64 / n as f64).collect();
    let flags: Vec<bool> = ts.iter().map(|&t| degenerate_at(beta_h, t)).collect::<Result<_>>()?;

    // longest run of true
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.map_or(true, |(a, b)| i - s > b - a) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if best.map_or(true, |(a, b)| n + 1 - s > b - a + 1) {
            best = Some((s, n));
        }
    }
    let Some((s, e)) = best else { return Ok(None) };

    let mut t0 = ts[s];
    if s > 0 {
        t0 = bisect_flag(beta_h, ts[s - 1], ts[s], true)?;
    }
    let mut t1 = ts[e];
    if e < n {
        t1 = bisect_flag(beta_h, ts[e], ts[e + 1], false)?;
    }
    Ok(Some((t0, t1)))
}

/// Bisect the degeneracy flag between `lo` (flag `!target_hi`… ) and `hi`.
/// `rising`: flag goes false→true across the bracket.
fn bisect_flag(beta_h: f64, mut lo: f64, mut hi: f64, rising: bool) -> Result<f64> {
    for _ in 0..40 {
        if hi - lo < 1e-6 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f = degenerate_at(beta_h, mid)?;
        if f == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form bifurcation boundaries from the stationarity quadratic:
/// the interior maximizer exists while
/// `2h_t − 4h_t² + 8h_t³ < βh < 2h_t + 4h_t² + 8h_t³`.
pub fn window_closed_form(beta_h: f64, t_lo: f64, t_hi: f64) -> Option<(f64, f64)> {
    let lo = t_lo.max(EXPANSION_T_MIN);
    if lo >= t_hi {
        return None;
    }
    // Both boundary curves are decreasing in t, so βh − curve is increasing.
    let entry = |t: f64| {
        let h = (-t).exp();
        beta_h - (2.0 * h - 4.0 * h * h + 8.0 * h * h * h)
    };
    let exit = |t: f64| {
        let h = (-t).exp();
        beta_h - (2.0 * h + 4.0 * h * h + 8.0 * h * h * h)
    };
    let root = |f: &dyn Fn(f64) -> f64| -> Option<f64> {
        let (mut a, mut b) = (lo, t_hi);
        let (fa, fb) = (f(a), f(b));
        if fa >= 0.0 {
            return Some(lo); // already past the boundary at the range start
        }
        if fb < 0.0 {
            return None;
        }
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    };
    let t0 = root(&entry)?;
    let t1 = match root(&exit) {
        Some(t) => t,
        None => t_hi, // still degenerate at the end of the range
    };
    if t1 <= t0 {
        return None;
    }
    Some((t0, t1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn compensated_field_gives_symmetric_pair() {
        // βh = 2 h_t: g'(θ) = sin θ (4h_t² cos θ + 8h_t³ cos²θ); the
        // cos θ = 0 stationary points win since g(π/2) = 0 > g(0), g(π).
        let t = 10f64.ln(); // h_t = 0.1
        let sp = SitePotential::three_term(0.2, t).unwrap();
        let rep = find_maximizers(&sp, 4096, 1e-12).unwrap();
        assert!(rep.degenerate);
        assert_eq!(rep.maximizers.len(), 2);
        assert_abs_diff_eq!(rep.maximizers[0].radians(), FRAC_PI_2, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.maximizers[1].radians(), 3.0 * FRAC_PI_2, epsilon = 1e-9);
        assert!(rep.epsilon_t.abs() < 1e-9);
    }

    #[test]
    fn small_detuning_matches_linearized_epsilon() {
        let h_t: f64 = 0.3;
        let t = -h_t.ln();
        for delta in [1e-3, 1e-4] {
            let sp = SitePotential::three_term(2.0 * h_t + delta, t).unwrap();
            let rep = find_maximizers(&sp, 4096, 1e-12).unwrap();
            assert!(rep.degenerate);
            let predicted = delta / (4.0 * h_t * h_t);
            assert!(
                (rep.epsilon_t - predicted).abs() <= 10.0 * delta * delta,
                "delta={delta}: eps={} vs {predicted}",
                rep.epsilon_t
            );
        }
    }

    #[test]
    fn strong_field_has_unique_up_maximizer() {
        let t = 100f64.ln(); // h_t = 0.01
        let sp = SitePotential::three_term(1.0, t).unwrap();
        let rep = find_maximizers(&sp, 4096, 1e-10).unwrap();
        assert!(!rep.degenerate);
        assert_eq!(rep.maximizers.len(), 1);
        assert!(rep.maximizers[0].radians() < 1e-6 || rep.maximizers[0].radians() > TAU - 1e-6);
        assert_eq!(rep.epsilon_t, 0.0);
    }

    #[test]
    fn strong_conditioning_has_unique_down_maximizer() {
        // βh far below 2h_t: the dynamical field wins and the maximum sits
        // at π itself, which is not a reflection pair.
        let sp = SitePotential::three_term(0.0, 1.0).unwrap();
        let rep = find_maximizers(&sp, 4096, 1e-10).unwrap();
        assert!(!rep.degenerate);
        assert_eq!(rep.maximizers.len(), 1);
        assert_abs_diff_eq!(rep.maximizers[0].radians(), PI, epsilon = 1e-8);
    }

    #[test]
    fn potential_is_even_in_cos() {
        let sp = SitePotential::three_term(0.17, 2.0).unwrap();
        for i in 0..1024 {
            let theta = TAU * i as f64 / 1024.0;
            assert!((sp.value(theta) - sp.value(TAU - theta)).abs() < 1e-15);
        }
    }

    #[test]
    fn full_log_and_three_term_maximizers_agree_within_perturbation_bound() {
        let t = 2.0f64;
        let h_t = (-t).exp();
        let beta_h = 2.0 * h_t + 5e-3;
        let sp3 = SitePotential::three_term(beta_h, t).unwrap();
        let spf = SitePotential::full_log(beta_h, t).unwrap();
        let r3 = find_maximizers(&sp3, 4096, 1e-12).unwrap();
        let rf = find_maximizers(&spf, 4096, 1e-12).unwrap();
        assert_eq!(r3.degenerate, rf.degenerate);
        // curvature at the maximizer, numerically
        let th = r3.maximizers[0].radians();
        let eps = 1e-4;
        let curv = ((sp3.value(th + eps) + sp3.value(th - eps) - 2.0 * sp3.value(th)) / (eps * eps)).abs();
        let bound = (sp3.coeffs.rest_bound / curv).sqrt() + 1e-10;
        assert!(
            (r3.maximizers[0].radians() - rf.maximizers[0].radians()).abs() <= bound,
            "maximizers differ by more than {bound}"
        );
    }

    #[test]
    fn window_contains_exact_compensation_time() {
        let (t0, t1) = transition_window(1.0, 0.2, 1.0, 5.0).unwrap().unwrap();
        let t_star = 10f64.ln();
        assert!(t0 < t_star && t_star < t1, "({t0}, {t1}) misses {t_star}");
        // scan endpoints vs closed-form bifurcation roots
        let (c0, c1) = window_closed_form(0.2, 1.0, 5.0).unwrap();
        assert!((t0 - c0).abs() < 1e-4, "t0={t0} vs closed form {c0}");
        assert!((t1 - c1).abs() < 1e-4, "t1={t1} vs closed form {c1}");
    }

    #[test]
    fn dominant_field_has_no_window() {
        // βh = 2 with h_t ≤ e^{−1}: δ ≥ 2 − 2e^{−1} ≈ 1.26 exceeds
        // 4h_t² + 8h_t³ ≈ 0.94, and the margin only grows with t.
        assert!(transition_window(1.0, 2.0, 1.0, 10.0).unwrap().is_none());
        assert!(window_closed_form(2.0, 1.0, 10.0).is_none());
    }

    #[test]
    fn scan_agrees_with_dense_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let t = rng.gen_range(1.0..4.0);
            let beta_h = rng.gen_range(0.0..0.8);
            let sp = SitePotential::three_term(beta_h, t).unwrap();
            let rep = find_maximizers(&sp, 4096, 1e-10).unwrap();
            // brute force over a dense grid
            let n = 1_000_000;
            let (mut best_i, mut best_v) = (0, f64::NEG_INFINITY);
            for i in 0..n {
                let v = sp.value(TAU * i as f64 / n as f64);
                if v > best_v {
                    best_v = v;
                    best_i = i;
                }
            }
            let brute = TAU * best_i as f64 / n as f64;
            let close = rep.maximizers.iter().any(|m| {
                let d = (m.radians() - brute).abs();
                d < TAU / n as f64 + 1e-5 || TAU - d < TAU / n as f64 + 1e-5
            });
            assert!(close, "t={t} beta_h={beta_h}: brute {brute} vs {:?}", rep.maximizers);
            assert!(rep.g_at_max >= best_v - 1e-10);
        }
    }

    #[test]
    fn degenerate_pair_values_match_to_tolerance() {
        let sp = SitePotential::three_term(0.21, 2.2).unwrap();
        let rep = find_maximizers(&sp, 4096, 1e-12).unwrap();
        if rep.degenerate {
            let a = sp.value(rep.maximizers[0].radians());
            let b = sp.value(rep.maximizers[1].radians());
            assert!((a - b).abs() <= 1e-12);
            assert_abs_diff_eq!(
                rep.maximizers[0].radians() + rep.maximizers[1].radians(),
                TAU,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn monotone_exit_for_positive_field() {
        // for fixed βh > 0 the degeneracy disappears at large t
        for t in [6.0, 8.0, 10.0] {
            assert!(!degenerate_at(0.2, t).unwrap(), "still degenerate at t={t}");
        }
    }

    #[test]
    fn grid_too_coarse_is_rejected() {
        let sp = SitePotential::three_term(0.2, 2.0).unwrap();
        assert!(find_maximizers(&sp, 64, 1e-10).is_err());
    }
}
