//! Bad-configuration probe: single-site conditional densities of the
//! evolved measure under competing far boundaries.
//!
//! The evolved measure's conditional density of the centre spin `y₀`,
//! given the all-π configuration around it, is estimated by sampling the
//! x-layer over the box `Γ` with weight
//! `exp(−β H̃_Γ(x)) · Π_{i∈Γ∖{0}} p_t(x_i, π)` — the centre's kernel
//! factor deliberately excluded — with the x-layer frozen to a fixed
//! angle on `∂Γ`.  Then `f(y₀) = ⟨p_t(x₀, y₀)⟩`.  The discontinuity gap
//! is the total-variation distance between the densities obtained under
//! the two symmetry-selecting boundaries.  One-dimensional instances are
//! cross-checked against an exact transfer-matrix contraction over the
//! discretized circle.

use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::kernel::{self, KernelTable};
use crate::lattice::{Boundary, LatticeConfig, ModelParams};
use crate::mc::{
    boundary_pair, derive_seed, equilibrated, ChainMode, ChainSpec, MarkovChain, KERNEL_TABLE_BINS,
};

/// Resolution of reported conditional densities.
pub const DENSITY_BINS: usize = 64;

/// Nested conditioning regions: the annulus `Γ∖Λ` carries the boundary
/// surrogate, `Λ∖{0}` the all-π conditioning.
#[derive(Clone, Copy, Debug)]
pub struct Region {
    pub r_in: usize,
    pub r_out: usize,
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        if self.r_in < 1 || self.r_out <= self.r_in {
            return Err(Error::InvalidParams(format!(
                "need r_out > r_in >= 1, got r_in={}, r_out={}",
                self.r_in, self.r_out
            )));
        }
        Ok(())
    }
}

/// Monte Carlo settings of a probe cell.
#[derive(Clone, Copy, Debug)]
pub struct ProbeMcParams {
    pub sweeps: usize,
    pub burn_in: usize,
    /// Sweeps between recorded kernel rows.
    pub record_stride: usize,
    pub proposal_width: f64,
    pub seed: u64,
}

/// A conditional density on the [`DENSITY_BINS`]-bin circle grid,
/// normalized to integrate to 1 against `dθ/2π`.
#[derive(Clone, Debug)]
pub struct DensityEstimate {
    pub bins: Vec<f64>,
    pub err: Vec<f64>,
    pub equilibrated: bool,
}

/// One row of a badness scan.
#[derive(Clone, Debug)]
pub struct ProbeRow {
    pub r_in: usize,
    pub r_out: usize,
    /// TV distance between the two boundary-conditioned densities.
    pub gap: f64,
    pub gap_err: f64,
    /// Bins where the first density exceeds the second; these certify
    /// the witnessed discrepancy as a concrete event.
    pub witness_bins: usize,
    pub equilibrated: bool,
}

/// Bin-centre angle of the reported density grid.
pub fn bin_center(bin: usize, n_bins: usize) -> f64 {
    TAU * (bin as f64 + 0.5) / n_bins as f64
}

/// Half the mean absolute difference of two densities w.r.t. `dθ/2π`.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// MC estimate of the conditional density of the centre spin of the
/// evolved measure, on the box of radius `r_out` with the x-layer frozen
/// to `x_boundary` on `∂Γ`.
pub fn conditional_density(
    params: &ModelParams,
    r_out: usize,
    x_boundary: Angle,
    mc: &ProbeMcParams,
) -> Result<DensityEstimate> {
    if r_out < 1 {
        return Err(Error::InvalidParams("r_out must be >= 1".into()));
    }
    let side = 2 * r_out + 1;
    let p = params.with_side(side);
    p.validate()?;
    if mc.record_stride == 0 || mc.burn_in + mc.record_stride > mc.sweeps {
        return Err(Error::InvalidChainSpec(
            "probe needs record_stride >= 1 and room for at least one record".into(),
        ));
    }
    let y = LatticeConfig::y_spec(p.dim, side);
    let mut spec = ChainSpec::new(
        p,
        ChainMode::Conditioned {
            y,
            exclude_site: Some(LatticeConfig::constant(p.dim, side, Angle::zero(), Boundary::Free).center_site()),
        },
        Boundary::Fixed(x_boundary),
        mc.sweeps,
        mc.burn_in,
        mc.seed,
    );
    spec.proposal_width = mc.proposal_width;
    let mut chain = MarkovChain::new(spec)?;
    let center = chain.config().center_site();

    let value_table = KernelTable::value_table(p.t, KERNEL_TABLE_BINS, 1e-12)?;
    for _ in 0..mc.burn_in {
        chain.sweep();
    }
    let n_records = (mc.sweeps - mc.burn_in) / mc.record_stride;
    let n_blocks = 16usize;
    let mut block_sums = vec![vec![0.0f64; DENSITY_BINS]; n_blocks];
    let mut block_counts = vec![0usize; n_blocks];
    let mut msin_trace = Vec::with_capacity(n_records);
    for rec in 0..n_records {
        for _ in 0..mc.record_stride {
            chain.sweep();
        }
        let x0 = chain.config().get(center).radians();
        let block = rec * n_blocks / n_records;
        for b in 0..DENSITY_BINS {
            block_sums[block][b] += value_table.lookup(x0 - bin_center(b, DENSITY_BINS));
        }
        block_counts[block] += 1;
        let ms: f64 = chain.config().angles().iter().map(|a| a.sin()).sum();
        msin_trace.push(ms / chain.config().n_sites() as f64);
    }

    let mut bins = vec![0.0f64; DENSITY_BINS];
    let mut err = vec![0.0f64; DENSITY_BINS];
    for b in 0..DENSITY_BINS {
        let means: Vec<f64> = (0..n_blocks)
            .filter(|&k| block_counts[k] > 0)
            .map(|k| block_sums[k][b] / block_counts[k] as f64)
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        bins[b] = m;
        if means.len() > 1 {
            let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (means.len() - 1) as f64;
            err[b] = (var / means.len() as f64).sqrt();
        }
    }
    // ⟨p_t(x₀,·)⟩ integrates to 1 exactly; renormalize the residual
    // quadrature/MC error away.
    let norm = bins.iter().sum::<f64>() / DENSITY_BINS as f64;
    for b in 0..DENSITY_BINS {
        bins[b] /= norm;
        err[b] /= norm;
    }
    Ok(DensityEstimate {
        bins,
        err,
        equilibrated: equilibrated(&msin_trace),
    })
}

/// Gap trend over nested regions (`r_out = 2 r_in`) under the
/// symmetry-selecting boundary pair.
pub fn badness_scan(params: &ModelParams, r_in_list: &[usize], mc: &ProbeMcParams) -> Result<Vec<ProbeRow>> {
    let (right, left) = boundary_pair(params)?;
    r_in_list
        .par_iter()
        .enumerate()
        .map(|(idx, &r_in)| {
            let region = Region { r_in, r_out: 2 * r_in };
            region.validate()?;
            let mut mc_r = *mc;
            mc_r.seed = derive_seed(mc.seed, 2 * idx as u64);
            let mut mc_l = *mc;
            mc_l.seed = derive_seed(mc.seed, 2 * idx as u64 + 1);
            let fr = conditional_density(params, region.r_out, right, &mc_r)?;
            let fl = conditional_density(params, region.r_out, left, &mc_l)?;
            let gap = tv_distance(&fr.bins, &fl.bins);
            let var: f64 = fr
                .err
                .iter()
                .zip(&fl.err)
                .map(|(a, b)| a * a + b * b)
                .sum();
            let gap_err = 0.5 * var.sqrt() / DENSITY_BINS as f64;
            let witness_bins = fr.bins.iter().zip(&fl.bins).filter(|(a, b)| a > b).count();
            Ok(ProbeRow {
                r_in: region.r_in,
                r_out: region.r_out,
                gap,
                gap_err,
                witness_bins,
                equilibrated: fr.equilibrated && fl.equilibrated,
            })
        })
        .collect()
}

fn check_oracle_geometry(params: &ModelParams, n_bins: usize, sites: usize) -> Result<()> {
    if params.dim != 1 {
        return Err(Error::OracleRefused(format!(
            "transfer-matrix oracle supports d=1 chains only, got d={}",
            params.dim
        )));
    }
    if !n_bins.is_power_of_two() || n_bins < 16 || n_bins > 1024 {
        return Err(Error::OracleRefused(format!(
            "n_bins must be a power of two in [16, 1024], got {n_bins}"
        )));
    }
    if sites > 129 {
        return Err(Error::OracleRefused(format!("region too large: {sites} sites")));
    }
    Ok(())
}

/// Transfer matrix `B[a][b] = s(a) · e^{βJ cos(θ_a−θ_b)}`.
fn transfer_rows(params: &ModelParams, site_factor: &[f64], n_bins: usize) -> Vec<f64> {
    let mut rows = vec![0.0f64; n_bins * n_bins];
    for a in 0..n_bins {
        let ta = bin_center(a, n_bins);
        for b in 0..n_bins {
            rows[a * n_bins + b] =
                site_factor[a] * (params.beta * params.j * (ta - bin_center(b, n_bins)).cos()).exp();
        }
    }
    rows
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let row = &b[k * n..(k + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aik * row[j];
            }
        }
    }
    out
}

/// Conditioned-layer site factor `exp(βh cos θ) · p_t(θ, π)`.
fn conditioned_site_factor(params: &ModelParams, n_bins: usize, with_kernel: bool) -> Result<Vec<f64>> {
    (0..n_bins)
        .map(|a| {
            let th = bin_center(a, n_bins);
            let mut s = (params.beta * params.h * th.cos()).exp();
            if with_kernel {
                s *= kernel::kernel_delta(th - PI, params.t, 1e-12)?.value;
            }
            Ok(s)
        })
        .collect()
}

/// Exact marginal of site 0 of the conditioned two-layer measure on a
/// periodic ring of `params.side` sites, as probabilities over `n_bins`.
pub fn oracle_ring_marginal(params: &ModelParams, n_bins: usize) -> Result<Vec<f64>> {
    params.validate()?;
    check_oracle_geometry(params, n_bins, params.side)?;
    let s = conditioned_site_factor(params, n_bins, true)?;
    let b = transfer_rows(params, &s, n_bins);
    let mut m = b.clone();
    for _ in 1..params.side {
        m = mat_mul(&m, &b, n_bins);
    }
    let mut marg: Vec<f64> = (0..n_bins).map(|a| m[a * n_bins + a]).collect();
    let z: f64 = marg.iter().sum();
    for v in &mut marg {
        *v /= z;
    }
    Ok(marg)
}

/// Exact conditional density `f(y₀)` of the probe's d=1 instance: a chain
/// of `2 r_out + 1` sites with both ends bonded to walls at `x_boundary`,
/// contracted over `n_bins` circle states; output on `out_bins` bins,
/// normalized to mean 1.
pub fn oracle_conditional_density(
    params: &ModelParams,
    r_out: usize,
    x_boundary: Angle,
    n_bins: usize,
    out_bins: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    check_oracle_geometry(params, n_bins, 2 * r_out + 1)?;
    if r_out < 1 {
        return Err(Error::InvalidParams("r_out must be >= 1".into()));
    }
    let s_with = conditioned_site_factor(params, n_bins, true)?;
    let s_center = conditioned_site_factor(params, n_bins, false)?;
    let bond = |a: f64, b: f64| (params.beta * params.j * (a - b).cos()).exp();

    // propagate from the wall through r_out conditioned sites
    let mut v: Vec<f64> = (0..n_bins)
        .map(|a| bond(x_boundary.radians(), bin_center(a, n_bins)) * s_with[a])
        .collect();
    for _ in 1..r_out {
        let mut next = vec![0.0f64; n_bins];
        for (b, n) in next.iter_mut().enumerate() {
            let tb = bin_center(b, n_bins);
            let mut acc = 0.0;
            for (a, &va) in v.iter().enumerate() {
                acc += va * bond(bin_center(a, n_bins), tb);
            }
            *n = acc * s_with[b];
        }
        // rescale to dodge overflow on long chains
        let scale: f64 = next.iter().sum::<f64>() / n_bins as f64;
        for x in &mut next {
            *x /= scale;
        }
        v = next;
    }
    // arrive at the centre from the left half-chain; the right half-chain
    // is the identical contraction, so the centre weight is
    // L(c)² · s_center(c) with the kernel factor excluded there
    let mut arrive = vec![0.0f64; n_bins];
    for (c, ac) in arrive.iter_mut().enumerate() {
        let tc = bin_center(c, n_bins);
        *ac = v
            .iter()
            .enumerate()
            .map(|(a, &va)| va * bond(bin_center(a, n_bins), tc))
            .sum();
    }
    let full: Vec<f64> = (0..n_bins)
        .map(|c| arrive[c] * arrive[c] * s_center[c])
        .collect();

    // smear the centre-spin distribution through the kernel
    let mut f = vec![0.0f64; out_bins];
    for (j, fj) in f.iter_mut().enumerate() {
        let yj = bin_center(j, out_bins);
        let mut acc = 0.0;
        for (c, &w) in full.iter().enumerate() {
            acc += w * kernel::kernel_delta(bin_center(c, n_bins) - yj, params.t, 1e-12)?.value;
        }
        *fj = acc;
    }
    let norm = f.iter().sum::<f64>() / out_bins as f64;
    for x in &mut f {
        *x /= norm;
    }
    Ok(f)
}

/// Aggregate fine-grid probabilities onto a coarser grid (sizes must divide).
pub fn aggregate_bins(fine: &[f64], coarse_n: usize) -> Vec<f64> {
    let k = fine.len() / coarse_n;
    (0..coarse_n)
        .map(|i| fine[i * k..(i + 1) * k].iter().sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chain_params() -> ModelParams {
        ModelParams { beta: 1.0, j: 1.0, h: 0.5, t: 1.0, dim: 1, side: 3 }
    }

    #[test]
    fn ring_oracle_decouples_at_zero_coupling() {
        let mut p = chain_params();
        p.j = 0.0;
        let marg = oracle_ring_marginal(&p, 256).unwrap();
        // decoupled: marginal ∝ e^{βh cos θ} p_t(θ, π)
        let direct: Vec<f64> = (0..256)
            .map(|a| {
                let th = bin_center(a, 256);
                (p.beta * p.h * th.cos()).exp() * kernel::kernel_delta(th - PI, p.t, 1e-12).unwrap().value
            })
            .collect();
        let z: f64 = direct.iter().sum();
        for (m, d) in marg.iter().zip(&direct) {
            assert_abs_diff_eq!(*m, d / z, epsilon = 1e-10);
        }
    }

    #[test]
    fn ring_oracle_discretization_converges() {
        let p = chain_params();
        let a = aggregate_bins(&oracle_ring_marginal(&p, 128).unwrap(), 64);
        let b = aggregate_bins(&oracle_ring_marginal(&p, 256).unwrap(), 64);
        let worst = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-6, "128→256 shift {worst}");
    }

    #[test]
    fn conditional_oracle_is_reflection_symmetric_for_symmetric_walls() {
        let p = chain_params();
        for wall in [0.0, PI] {
            let f = oracle_conditional_density(&p, 2, Angle::new(wall), 128, 64).unwrap();
            for j in 0..64 {
                assert!(
                    (f[j] - f[63 - j]).abs() < 1e-12,
                    "wall {wall}: asymmetry at bin {j}: {} vs {}",
                    f[j],
                    f[63 - j]
                );
            }
        }
    }

    #[test]
    fn conditional_oracle_boundary_swap_reflects_density() {
        let p = chain_params();
        let a = oracle_conditional_density(&p, 2, Angle::new(1.0), 128, 64).unwrap();
        let b = oracle_conditional_density(&p, 2, Angle::new(TAU - 1.0), 128, 64).unwrap();
        for j in 0..64 {
            assert!((a[j] - b[63 - j]).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_refuses_higher_dimensions() {
        let mut p = chain_params();
        p.dim = 2;
        p.side = 3;
        assert!(matches!(
            oracle_ring_marginal(&p, 256),
            Err(Error::OracleRefused(_))
        ));
    }

    #[test]
    fn flat_kernel_limit_forgets_the_conditioning() {
        let mut p = chain_params();
        p.t = 50.0;
        let mc = ProbeMcParams {
            sweeps: 400,
            burn_in: 100,
            record_stride: 1,
            proposal_width: 1.0,
            seed: 5,
        };
        for wall in [1.0, 4.0] {
            let f = conditional_density(&p, 2, Angle::new(wall), &mc).unwrap();
            for b in f.bins {
                assert!((b - 1.0).abs() < 1e-8, "bin {b} not flat");
            }
        }
    }

    #[test]
    fn mc_density_matches_quadrature_when_decoupled() {
        let mut p = chain_params();
        p.j = 0.0;
        let mc = ProbeMcParams {
            sweeps: 40_000,
            burn_in: 2_000,
            record_stride: 1,
            proposal_width: 2.0,
            seed: 9,
        };
        let est = conditional_density(&p, 2, Angle::new(1.0), &mc).unwrap();
        // x₀ decoupled with density ∝ e^{βh cos x} (no kernel factor);
        // f(y₀) = ∫ e^{βh cos x} p_t(x, y₀) dν₀(x) / Z
        let n = 4096;
        let mut f = vec![0.0f64; DENSITY_BINS];
        let mut z = 0.0;
        for i in 0..n {
            let x = TAU * (i as f64 + 0.5) / n as f64;
            let w = (p.beta * p.h * x.cos()).exp();
            z += w;
            for (j, fj) in f.iter_mut().enumerate() {
                *fj += w * kernel::kernel_delta(x - bin_center(j, DENSITY_BINS), p.t, 1e-12).unwrap().value;
            }
        }
        for fj in &mut f {
            *fj /= z;
        }
        for j in 0..DENSITY_BINS {
            let tol = 3.0 * est.err[j].max(3e-3);
            assert!(
                (est.bins[j] - f[j]).abs() < tol,
                "bin {j}: {} vs {} (tol {tol})",
                est.bins[j],
                f[j]
            );
        }
    }

    #[test]
    fn mc_density_matches_transfer_matrix() {
        let p = chain_params();
        let mc = ProbeMcParams {
            sweeps: 60_000,
            burn_in: 5_000,
            record_stride: 1,
            proposal_width: 2.0,
            seed: 3,
        };
        let est = conditional_density(&p, 2, Angle::new(1.0), &mc).unwrap();
        let oracle = oracle_conditional_density(&p, 2, Angle::new(1.0), 256, DENSITY_BINS).unwrap();
        assert!(
            tv_distance(&est.bins, &oracle) < 0.01,
            "TV {} too large",
            tv_distance(&est.bins, &oracle)
        );
    }

    #[test]
    fn density_normalization() {
        let p = chain_params();
        let mc = ProbeMcParams {
            sweeps: 2000,
            burn_in: 200,
            record_stride: 1,
            proposal_width: 2.0,
            seed: 1,
        };
        let est = conditional_density(&p, 2, Angle::new(0.5), &mc).unwrap();
        let mean: f64 = est.bins.iter().sum::<f64>() / DENSITY_BINS as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
    }
}
