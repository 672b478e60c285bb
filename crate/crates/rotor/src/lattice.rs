//! Lattice geometry, spin configurations and the three Hamiltonians.
//!
//! Finite boxes `{0..L−1}^d` stand in for `Z^d`, with periodic, free or
//! fixed boundaries.  All energy functions return the energy `H` to be
//! minimized, i.e. Boltzmann weight `e^{−H}`:
//!
//! - initial:    `H̃(x) = −J Σ_{i∼k} cos(x_i−x_k) − h Σ_i cos x_i`
//! - dynamical:  `H^t_β(x,y) = β H̃(x) − Σ_i log p_t(x_i, y_i)`
//! - restricted: three-term truncation of the dynamical Hamiltonian at
//!   the all-π conditioning, with `β` on the `J` and `h` terms only.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::kernel::{self, ExpansionCoeffs};

/// Model parameters shared by all experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    /// Inverse temperature.
    pub beta: f64,
    /// Ferromagnetic nearest-neighbour coupling `J ≥ 0`.
    pub j: f64,
    /// External field `h ≥ 0`.
    pub h: f64,
    /// Evolution time `t > 0`.
    pub t: f64,
    /// Lattice dimension, 1–3.
    pub dim: usize,
    /// Side length `L ≥ 2`.
    pub side: usize,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParams(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.j >= 0.0) {
            return Err(Error::InvalidParams(format!("J must be >= 0, got {}", self.j)));
        }
        if !(self.h >= 0.0) {
            return Err(Error::InvalidParams(format!("h must be >= 0, got {}", self.h)));
        }
        if !(self.t > 0.0) {
            return Err(Error::InvalidParams(format!("t must be > 0, got {}", self.t)));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidParams(format!("d must be 1, 2 or 3, got {}", self.dim)));
        }
        if self.side < 2 {
            return Err(Error::InvalidParams(format!("L must be >= 2, got {}", self.side)));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn with_side(&self, side: usize) -> ModelParams {
        ModelParams { side, ..*self }
    }
}

/// Boundary condition of a finite box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    Periodic,
    Free,
    /// All sites outside the box frozen to one angle.
    Fixed(Angle),
}

/// What sits across a lattice edge from a given site.
#[derive(Clone, Copy, Debug)]
pub enum Neighbor {
    Site(usize),
    Wall(Angle),
    None,
}

/// A box of circle-valued spins.
#[derive(Clone, Debug)]
pub struct LatticeConfig {
    dim: usize,
    side: usize,
    pub boundary: Boundary,
    angles: Vec<Angle>,
}

impl LatticeConfig {
    pub fn constant(dim: usize, side: usize, theta: Angle, boundary: Boundary) -> Self {
        LatticeConfig {
            dim,
            side,
            boundary,
            angles: vec![theta; side.pow(dim as u32)],
        }
    }

    /// The all-π conditioning configuration.
    pub fn y_spec(dim: usize, side: usize) -> Self {
        Self::constant(dim, side, Angle::new(PI), Boundary::Free)
    }

    pub fn random<R: Rng + ?Sized>(dim: usize, side: usize, boundary: Boundary, rng: &mut R) -> Self {
        let n = side.pow(dim as u32);
        let angles = (0..n)
            .map(|_| Angle::new(rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect();
        LatticeConfig { dim, side, boundary, angles }
    }

    pub fn from_angles(dim: usize, side: usize, boundary: Boundary, angles: Vec<Angle>) -> Result<Self> {
        if angles.len() != side.pow(dim as u32) {
            return Err(Error::GeometryMismatch(format!(
                "expected {} angles for d={dim}, L={side}, got {}",
                side.pow(dim as u32),
                angles.len()
            )));
        }
        Ok(LatticeConfig { dim, side, boundary, angles })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.angles.len()
    }

    pub fn get(&self, site: usize) -> Angle {
        self.angles[site]
    }

    pub fn set(&mut self, site: usize, theta: Angle) {
        self.angles[site] = theta;
    }

    pub fn angles(&self) -> &[Angle] {
        &self.angles
    }

    /// Row-major stride of the given axis.
    pub fn stride(&self, axis: usize) -> usize {
        self.side.pow((self.dim - 1 - axis) as u32)
    }

    pub fn coords(&self, site: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut rem = site;
        for axis in (0..self.dim).rev() {
            c[axis] = rem % self.side;
            rem /= self.side;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for axis in 0..self.dim {
            idx = idx * self.side + coords[axis];
        }
        idx
    }

    /// Site at the centre of the box.
    pub fn center_site(&self) -> usize {
        let mid = self.side / 2;
        let coords = [mid; 3];
        self.index(&coords[..self.dim])
    }

    /// Neighbour across the edge `(site, axis, dir)`, `dir ∈ {−1, +1}`.
    pub fn neighbor(&self, site: usize, axis: usize, dir: i64) -> Neighbor {
        let c = self.coords(site)[axis];
        let stride = self.stride(axis);
        if dir > 0 {
            if c + 1 < self.side {
                Neighbor::Site(site + stride)
            } else {
                match self.boundary {
                    Boundary::Periodic => Neighbor::Site(site - (self.side - 1) * stride),
                    Boundary::Free => Neighbor::None,
                    Boundary::Fixed(b) => Neighbor::Wall(b),
                }
            }
        } else if c > 0 {
            Neighbor::Site(site - stride)
        } else {
            match self.boundary {
                Boundary::Periodic => Neighbor::Site(site + (self.side - 1) * stride),
                Boundary::Free => Neighbor::None,
                Boundary::Fixed(b) => Neighbor::Wall(b),
            }
        }
    }

    /// Angles of all existing neighbours of `site`.
    pub fn neighbor_angles(&self, site: usize) -> Vec<Angle> {
        let mut out = Vec::with_capacity(2 * self.dim);
        for axis in 0..self.dim {
            for dir in [-1i64, 1] {
                match self.neighbor(site, axis, dir) {
                    Neighbor::Site(j) => out.push(self.angles[j]),
                    Neighbor::Wall(b) => out.push(b),
                    Neighbor::None => {}
                }
            }
        }
        out
    }

    fn same_geometry(&self, other: &LatticeConfig) -> bool {
        self.dim == other.dim && self.side == other.side
    }

    /// Snapshot as CSV with columns `site_index, angle`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "site_index,angle")?;
        for (i, a) in self.angles.iter().enumerate() {
            writeln!(w, "{},{}", i, a.radians())?;
        }
        Ok(())
    }

    /// Read a snapshot written by [`write_csv`]; geometry and boundary are
    /// supplied by the caller.
    pub fn read_csv<R: BufRead>(dim: usize, side: usize, boundary: Boundary, r: R) -> Result<Self> {
        let n = side.pow(dim as u32);
        let mut angles = vec![Angle::zero(); n];
        let mut seen = 0usize;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::GeometryMismatch(format!("read error: {e}")))?;
            if lineno == 0 {
                continue; // header
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let idx: usize = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::GeometryMismatch(format!("bad site index on line {}", lineno + 1)))?;
            let theta: f64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::GeometryMismatch(format!("bad angle on line {}", lineno + 1)))?;
            if idx >= n {
                return Err(Error::GeometryMismatch(format!("site index {idx} out of range")));
            }
            angles[idx] = Angle::new(theta);
            seen += 1;
        }
        if seen != n {
            return Err(Error::GeometryMismatch(format!("expected {n} rows, got {seen}")));
        }
        LatticeConfig::from_angles(dim, side, boundary, angles)
    }
}

fn check_geometry(x: &LatticeConfig, p: &ModelParams) -> Result<()> {
    p.validate()?;
    if x.dim != p.dim || x.side != p.side {
        return Err(Error::GeometryMismatch(format!(
            "config is d={}, L={} but params say d={}, L={}",
            x.dim, x.side, p.dim, p.side
        )));
    }
    Ok(())
}

/// `Σ_bonds cos(θ_i − θ_j)`, each bond counted once, boundary bonds
/// included for fixed boundaries.
pub fn bond_cos_sum(x: &LatticeConfig) -> f64 {
    let mut acc = 0.0;
    for site in 0..x.n_sites() {
        let a = x.get(site);
        for axis in 0..x.dim() {
            match x.neighbor(site, axis, 1) {
                Neighbor::Site(j) => acc += (a.minus(x.get(j))).cos(),
                Neighbor::Wall(b) => acc += (a.minus(b)).cos(),
                Neighbor::None => {}
            }
            // The minus face touches the wall too; interior minus-bonds
            // were already counted from the other side.
            if x.coords(site)[axis] == 0 {
                if let Boundary::Fixed(b) = x.boundary {
                    if matches!(x.neighbor(site, axis, -1), Neighbor::Wall(_)) {
                        acc += (a.minus(b)).cos();
                    }
                }
            }
        }
    }
    acc
}

/// `Σ_i cos θ_i`.
pub fn field_cos_sum(x: &LatticeConfig) -> f64 {
    x.angles().iter().map(|a| a.cos()).sum()
}

/// Number of bonds (interior plus boundary) of the box.
pub fn n_bonds(x: &LatticeConfig) -> usize {
    let mut n = 0usize;
    for site in 0..x.n_sites() {
        for axis in 0..x.dim() {
            if !matches!(x.neighbor(site, axis, 1), Neighbor::None) {
                n += 1;
            }
            if x.coords(site)[axis] == 0 && matches!(x.boundary, Boundary::Fixed(_)) {
                n += 1;
            }
        }
    }
    n
}

/// Initial Hamiltonian `H̃(x)`.
pub fn initial_energy(x: &LatticeConfig, p: &ModelParams) -> Result<f64> {
    check_geometry(x, p)?;
    Ok(-p.j * bond_cos_sum(x) - p.h * field_cos_sum(x))
}

/// Two-layer dynamical Hamiltonian `H^t_β(x, y) = β H̃(x) − Σ_i log p_t(x_i, y_i)`.
pub fn dynamical_energy(x: &LatticeConfig, y: &LatticeConfig, p: &ModelParams, tol: f64) -> Result<f64> {
    check_geometry(x, p)?;
    if !x.same_geometry(y) {
        return Err(Error::GeometryMismatch(
            "x and y layers have different geometry".into(),
        ));
    }
    let mut acc = p.beta * initial_energy(x, p)?;
    for i in 0..x.n_sites() {
        acc -= kernel::log_kernel(x.get(i), y.get(i), p.t, tol)?.value;
    }
    Ok(acc)
}

/// Restricted three-term Hamiltonian at the all-π conditioning:
/// `−[βJ Σ cos(x_i−x_k) + βh Σ cos x_i + Σ_i (c1 cos x_i + c2 cos²x_i + c3 cos³x_i)]`.
pub fn restricted_energy(x: &LatticeConfig, p: &ModelParams) -> Result<f64> {
    check_geometry(x, p)?;
    let coeffs = kernel::expansion(p.t)?;
    let mut site_terms = 0.0;
    for a in x.angles() {
        site_terms += coeffs.eval(a.radians());
    }
    Ok(-p.beta * p.j * bond_cos_sum(x) - p.beta * p.h * field_cos_sum(x) - site_terms)
}

/// Which energy a single-site update difference refers to.
///
/// `Initial` differences are in units of `H̃` (no `β`), matching
/// [`initial_energy`]; the sampler multiplies by `β` itself.  The other
/// two modes carry `β` exactly as their global counterparts do.
#[derive(Clone, Copy, Debug)]
pub enum EnergyMode<'a> {
    Initial,
    Dynamical { y: &'a LatticeConfig, tol: f64 },
    Restricted { coeffs: &'a ExpansionCoeffs },
}

/// `E(x with site ↦ new_angle) − E(x)`, from the site's neighbourhood only.
pub fn local_energy_delta(
    x: &LatticeConfig,
    site: usize,
    new_angle: Angle,
    p: &ModelParams,
    mode: EnergyMode<'_>,
) -> Result<f64> {
    check_geometry(x, p)?;
    if site >= x.n_sites() {
        return Err(Error::GeometryMismatch(format!("site {site} out of range")));
    }
    let old = x.get(site);
    let mut dbond = 0.0;
    for nb in x.neighbor_angles(site) {
        dbond += (new_angle.minus(nb)).cos() - (old.minus(nb)).cos();
    }
    let dfield = new_angle.cos() - old.cos();
    match mode {
        EnergyMode::Initial => Ok(-p.j * dbond - p.h * dfield),
        EnergyMode::Dynamical { y, tol } => {
            if !x.same_geometry(y) {
                return Err(Error::GeometryMismatch("x/y geometry mismatch".into()));
            }
            let dlog = kernel::log_kernel(new_angle, y.get(site), p.t, tol)?.value
                - kernel::log_kernel(old, y.get(site), p.t, tol)?.value;
            Ok(p.beta * (-p.j * dbond - p.h * dfield) - dlog)
        }
        EnergyMode::Restricted { coeffs } => {
            let dsite = coeffs.eval(new_angle.radians()) - coeffs.eval(old.radians());
            Ok(p.beta * (-p.j * dbond - p.h * dfield) - dsite)
        }
    }
}
