//! Manifold descriptors, reference domains and their discretizations.
//!
//! Two grid layouts cover all six geometries: uniform Cartesian boxes (euclid,
//! hyperbolic, cylinder, and the annulus of a Hopf manifold cut out of a box) and
//! latitude-longitude grids on `S^2` (sphere caps and the hemisphere for `RP^2`).
//! Resolution counts cells per unit length on boxes and cells across the polar
//! extent on spherical grids.

use crate::clifford::{check_dim, CliffordError, Multivector, Paravector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error("invalid manifold spec: {0}")]
    InvalidSpec(String),
    #[error("domain {domain} is not compatible with {kind:?}")]
    IncompatibleDomain { kind: Kind, domain: String },
    #[error("resolution {0} is too small (minimum 4)")]
    ResolutionTooSmall(usize),
    #[error("point is outside the sampled fundamental domain")]
    OutsideDomain,
    #[error("the origin has no representative on a Hopf manifold")]
    HopfOrigin,
    #[error("hyperbolic cell with x_n <= 0")]
    BelowHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Euclid,
    Sphere,
    Rp,
    Cylinder,
    Hopf,
    Hyperbolic,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Euclid,
        Kind::Sphere,
        Kind::Rp,
        Kind::Cylinder,
        Kind::Hopf,
        Kind::Hyperbolic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Euclid => "euclid",
            Kind::Sphere => "sphere",
            Kind::Rp => "rp",
            Kind::Cylinder => "cylinder",
            Kind::Hopf => "hopf",
            Kind::Hyperbolic => "hyperbolic",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Geometries whose points live on `S^n` rather than in `R^{n+1}`.
    pub fn is_spherical(self) -> bool {
        matches!(self, Kind::Sphere | Kind::Rp)
    }
}

pub const DEFAULT_CYLINDER_TRUNCATION: usize = 10;
pub const DEFAULT_HOPF_TRUNCATION: usize = 20;

/// Geometry descriptor: kind, Clifford dimension `n`, bundle index, lattice rank
/// and series truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: Kind,
    pub n: usize,
    #[serde(default)]
    pub bundle: usize,
    #[serde(default)]
    pub k: usize,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
}

fn default_truncation() -> usize {
    1
}

impl ManifoldSpec {
    pub fn euclid(n: usize) -> Self {
        Self { kind: Kind::Euclid, n, bundle: 0, k: 0, truncation: 1 }
    }

    pub fn sphere(n: usize) -> Self {
        Self { kind: Kind::Sphere, n, bundle: 0, k: 0, truncation: 1 }
    }

    pub fn rp(n: usize, bundle: usize) -> Self {
        Self { kind: Kind::Rp, n, bundle, k: 0, truncation: 1 }
    }

    pub fn cylinder(n: usize, k: usize, l: usize) -> Self {
        Self {
            kind: Kind::Cylinder,
            n,
            bundle: l,
            k,
            truncation: DEFAULT_CYLINDER_TRUNCATION,
        }
    }

    pub fn hopf(n: usize) -> Self {
        Self {
            kind: Kind::Hopf,
            n,
            bundle: 0,
            k: 0,
            truncation: DEFAULT_HOPF_TRUNCATION,
        }
    }

    pub fn hyperbolic(n: usize) -> Self {
        Self { kind: Kind::Hyperbolic, n, bundle: 0, k: 0, truncation: 1 }
    }

    pub fn with_truncation(mut self, truncation: usize) -> Self {
        self.truncation = truncation;
        self
    }

    /// Default spec of a kind at dimension `n` (rp bundle 1, cylinder k = 1, l = 0).
    pub fn default_for(kind: Kind, n: usize) -> Self {
        match kind {
            Kind::Euclid => Self::euclid(n),
            Kind::Sphere => Self::sphere(n),
            Kind::Rp => Self::rp(n, 1),
            Kind::Cylinder => Self::cylinder(n, 1, 0),
            Kind::Hopf => Self::hopf(n),
            Kind::Hyperbolic => Self::hyperbolic(n),
        }
    }

    /// Dimension of the ambient space `R^{n+1}`.
    pub fn ambient(&self) -> usize {
        self.n + 1
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        check_dim(self.n)?;
        let bad = |m: String| Err(GeometryError::InvalidSpec(m));
        match self.kind {
            Kind::Rp if !(self.bundle == 1 || self.bundle == 2) => {
                bad(format!("rp bundle must be 1 or 2, got {}", self.bundle))
            }
            Kind::Cylinder if self.k < 1 || self.k + 1 >= self.n => bad(format!(
                "cylinder needs 1 <= k < n-1 for the lattice sum to converge (k = {}, n = {})",
                self.k, self.n
            )),
            Kind::Cylinder if self.bundle > self.k => {
                bad(format!("cylinder bundle l = {} exceeds k = {}", self.bundle, self.k))
            }
            Kind::Cylinder | Kind::Hopf if self.truncation < 1 => {
                bad("truncation must be at least 1".into())
            }
            Kind::Sphere | Kind::Rp if self.n != 2 => bad(format!(
                "spherical grids are latitude-longitude grids on S^2; n = {} is not supported",
                self.n
            )),
            _ => Ok(()),
        }
    }

    /// Sign picked up by a section when moved by the deck transformation that
    /// shifts by the lattice vector `m` (cylinder) or by the antipodal map (rp).
    pub fn lattice_sign(&self, m: &[i64]) -> f64 {
        let s: i64 = m.iter().take(self.bundle).sum();
        if s.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Parity of rp sections: +1 for bundle 1, -1 for bundle 2.
    pub fn rp_parity(&self) -> f64 {
        if self.bundle == 2 {
            -1.0
        } else {
            1.0
        }
    }
}

/// Reference domain descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum ReferenceDomain {
    /// Axis-aligned box in `R^{n+1}`. On a cylinder the first `k` axes must be `[0, 1)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Spherical cap `theta <= theta_max` around `e_n`; `theta_max = pi` is the whole sphere.
    Cap { theta_max: f64 },
    /// Closed northern hemisphere `x_n >= 0`, the fundamental domain of `RP^n`.
    Hemisphere,
    /// Shell `inner <= |x| < outer`, the fundamental domain of a Hopf manifold.
    Annulus { inner: f64, outer: f64 },
}

impl ReferenceDomain {
    /// Default domain for a spec.
    ///
    /// euclid: unit box centered at 0. hyperbolic: `[-1/2, 1/2]^n x [1/2, 3/2]`.
    /// cylinder: `[0,1)^k x [-1/2, 1/2]^{n+1-k}`. sphere: whole sphere.
    pub fn default_for(spec: &ManifoldSpec) -> Self {
        let d = spec.ambient();
        match spec.kind {
            Kind::Euclid => ReferenceDomain::Box { lo: vec![-0.5; d], hi: vec![0.5; d] },
            Kind::Hyperbolic => {
                let mut lo = vec![-0.5; d];
                let mut hi = vec![0.5; d];
                lo[d - 1] = 0.5;
                hi[d - 1] = 1.5;
                ReferenceDomain::Box { lo, hi }
            }
            Kind::Cylinder => {
                let mut lo = vec![-0.5; d];
                let mut hi = vec![0.5; d];
                for a in 0..spec.k {
                    lo[a] = 0.0;
                    hi[a] = 1.0;
                }
                ReferenceDomain::Box { lo, hi }
            }
            Kind::Sphere => ReferenceDomain::Cap { theta_max: PI },
            Kind::Rp => ReferenceDomain::Hemisphere,
            Kind::Hopf => ReferenceDomain::Annulus { inner: 1.0, outer: 2.0 },
        }
    }

    fn label(&self) -> String {
        match self {
            ReferenceDomain::Box { .. } => "box".into(),
            ReferenceDomain::Cap { theta_max } => format!("cap(theta_max={theta_max})"),
            ReferenceDomain::Hemisphere => "hemisphere".into(),
            ReferenceDomain::Annulus { inner, outer } => format!("annulus({inner},{outer})"),
        }
    }
}

/// Uniform box lattice. Cells are indexed row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianLayout {
    pub dims: Vec<usize>,
    pub lo: Vec<f64>,
    pub h: f64,
    /// Per axis: `Some(sign)` when the axis is a lattice direction with period 1,
    /// the sign being the bundle factor picked up on wrapping.
    pub periodic: Vec<Option<f64>>,
    /// Box index of each domain cell (identity unless the domain is masked).
    pub box_of_cell: Vec<usize>,
    /// Domain cell of each box index, if any.
    pub cell_of_box: Vec<Option<usize>>,
}

impl CartesianLayout {
    pub fn box_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for a in (0..self.dims.len().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.dims[a + 1];
        }
        s
    }

    pub fn is_masked(&self) -> bool {
        self.box_of_cell.len() != self.box_len()
    }

    pub fn center_of(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .zip(&self.lo)
            .map(|(&i, &lo)| lo + (i as f64 + 0.5) * self.h)
            .collect()
    }

    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for a in (0..self.dims.len()).rev() {
            out[a] = idx % self.dims[a];
            idx /= self.dims[a];
        }
        out
    }

    pub fn box_center(&self, idx: usize) -> Vec<f64> {
        self.center_of(&self.unravel(idx))
    }
}

/// Latitude-longitude grid on `S^2` with pole `e_2`:
/// `x = (sin t cos p, sin t sin p, cos t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatLongLayout {
    pub n_theta: usize,
    pub n_phi: usize,
    pub dtheta: f64,
    pub dphi: f64,
    pub theta_max: f64,
    /// `Some(parity)` on the rp hemisphere: rows beyond the equator are read from
    /// the antipode with this sign.
    pub antipodal: Option<f64>,
}

impl LatLongLayout {
    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dtheta
    }

    pub fn phi(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dphi
    }

    pub fn is_closed(&self) -> bool {
        self.antipodal.is_some() || (self.theta_max - PI).abs() < 1e-12
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Cartesian(CartesianLayout),
    LatLong(LatLongLayout),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryFace {
    pub center: Vec<f64>,
    pub normal: Vec<f64>,
    pub weight: f64,
}

/// Discretized domain: cell centers with flat measures, boundary faces with
/// outward unit normals, spacing `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    pub spec: ManifoldSpec,
    pub domain: ReferenceDomain,
    pub resolution: usize,
    pub h: f64,
    pub layout: Layout,
    centers: Vec<f64>,
    weights: Vec<f64>,
    pub faces: Vec<BoundaryFace>,
}

impl DomainGrid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.ambient()
    }

    pub fn center(&self, cell: usize) -> &[f64] {
        let d = self.dim();
        &self.centers[cell * d..(cell + 1) * d]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Flat cell measure (area on spherical grids, with the pushforward factor 2 on rp).
    pub fn weight(&self, cell: usize) -> f64 {
        self.weights[cell]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn cartesian(&self) -> Option<&CartesianLayout> {
        match &self.layout {
            Layout::Cartesian(c) => Some(c),
            _ => None,
        }
    }

    pub fn latlong(&self) -> Option<&LatLongLayout> {
        match &self.layout {
            Layout::LatLong(l) => Some(l),
            _ => None,
        }
    }

    /// Distance from a cell center to the nearest boundary of the reference
    /// domain; infinite for closed manifolds.
    pub fn boundary_distance(&self, cell: usize) -> f64 {
        let x = self.center(cell);
        match (&self.domain, &self.layout) {
            (ReferenceDomain::Box { lo, hi }, Layout::Cartesian(c)) => {
                let mut dmin = f64::INFINITY;
                for a in 0..x.len() {
                    if c.periodic[a].is_none() {
                        dmin = dmin.min(x[a] - lo[a]).min(hi[a] - x[a]);
                    }
                }
                dmin
            }
            (ReferenceDomain::Cap { theta_max }, _) if (*theta_max - PI).abs() > 1e-12 => {
                let theta = x[2].clamp(-1.0, 1.0).acos();
                theta_max - theta
            }
            _ => f64::INFINITY,
        }
    }

    /// Cells at distance at least `k h` from the boundary.
    pub fn interior_cells(&self, k: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&c| self.boundary_distance(c) >= k * self.h - 1e-12)
            .collect()
    }

    /// Domain cell containing `x`, assumed to be already in the fundamental domain.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        match &self.layout {
            Layout::Cartesian(c) => {
                let mut idx = 0;
                let strides = c.strides();
                for a in 0..x.len() {
                    let t = ((x[a] - c.lo[a]) / c.h).floor();
                    if t < 0.0 || t >= c.dims[a] as f64 {
                        return None;
                    }
                    idx += t as usize * strides[a];
                }
                c.cell_of_box[idx]
            }
            Layout::LatLong(l) => {
                let theta = x[2].clamp(-1.0, 1.0).acos();
                let phi = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
                let i = (theta / l.dtheta).floor() as usize;
                let j = ((phi / l.dphi).floor() as usize).min(l.n_phi - 1);
                if i >= l.n_theta {
                    return None;
                }
                Some(i * l.n_phi + j)
            }
        }
    }
}

/// Build a grid for `spec` on `domain` at `resolution`.
pub fn build_grid(
    spec: &ManifoldSpec,
    domain: &ReferenceDomain,
    resolution: usize,
) -> Result<DomainGrid, GeometryError> {
    spec.validate()?;
    if resolution < 4 {
        return Err(GeometryError::ResolutionTooSmall(resolution));
    }
    let incompatible = || GeometryError::IncompatibleDomain {
        kind: spec.kind,
        domain: domain.label(),
    };
    match (spec.kind, domain) {
        (Kind::Euclid | Kind::Hyperbolic | Kind::Cylinder, ReferenceDomain::Box { lo, hi }) => {
            box_grid(spec, domain, lo, hi, resolution).ok_or_else(incompatible)
        }
        (Kind::Hopf, ReferenceDomain::Annulus { inner, outer }) => {
            if !(0.0 < *inner && inner < outer) {
                return Err(incompatible());
            }
            Ok(annulus_grid(spec, domain, *inner, *outer, resolution))
        }
        (Kind::Sphere, ReferenceDomain::Cap { theta_max }) => {
            if !(*theta_max > 0.0 && *theta_max <= PI + 1e-12) {
                return Err(incompatible());
            }
            Ok(latlong_grid(spec, domain, theta_max.min(PI), resolution, None))
        }
        (Kind::Rp, ReferenceDomain::Hemisphere) => Ok(latlong_grid(
            spec,
            domain,
            PI / 2.0,
            resolution,
            Some(spec.rp_parity()),
        )),
        _ => Err(incompatible()),
    }
}

/// Grid on the default reference domain of `spec`.
pub fn default_grid(spec: &ManifoldSpec, resolution: usize) -> Result<DomainGrid, GeometryError> {
    build_grid(spec, &ReferenceDomain::default_for(spec), resolution)
}

fn box_grid(
    spec: &ManifoldSpec,
    domain: &ReferenceDomain,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
) -> Option<DomainGrid> {
    let d = spec.ambient();
    if lo.len() != d || hi.len() != d {
        return None;
    }
    let h = 1.0 / resolution as f64;
    let mut dims = Vec::with_capacity(d);
    for a in 0..d {
        let cells = (hi[a] - lo[a]) * resolution as f64;
        if cells < 0.5 || (cells - cells.round()).abs() > 1e-9 {
            return None;
        }
        dims.push(cells.round() as usize);
    }
    let mut periodic = vec![None; d];
    if spec.kind == Kind::Cylinder {
        for (a, p) in periodic.iter_mut().enumerate().take(spec.k) {
            if lo[a] != 0.0 || hi[a] != 1.0 {
                return None;
            }
            *p = Some(if a < spec.bundle { -1.0 } else { 1.0 });
        }
    }
    if spec.kind == Kind::Hyperbolic && lo[d - 1] < 0.5 * h {
        return None;
    }
    let total: usize = dims.iter().product();
    let layout = CartesianLayout {
        dims: dims.clone(),
        lo: lo.to_vec(),
        h,
        periodic: periodic.clone(),
        box_of_cell: (0..total).collect(),
        cell_of_box: (0..total).map(Some).collect(),
    };
    let mut centers = Vec::with_capacity(total * d);
    for idx in 0..total {
        centers.extend(layout.box_center(idx));
    }
    let weights = vec![h.powi(d as i32); total];
    let faces = box_faces(&layout, hi);
    Some(DomainGrid {
        spec: *spec,
        domain: domain.clone(),
        resolution,
        h,
        layout: Layout::Cartesian(layout),
        centers,
        weights,
        faces,
    })
}

/// One face per boundary cell face on every non-periodic axis.
fn box_faces(layout: &CartesianLayout, hi: &[f64]) -> Vec<BoundaryFace> {
    let d = layout.dims.len();
    let h = layout.h;
    let mut faces = Vec::new();
    for a in 0..d {
        if layout.periodic[a].is_some() {
            continue;
        }
        let other: Vec<usize> = (0..d).filter(|&b| b != a).collect();
        let count: usize = other.iter().map(|&b| layout.dims[b]).product();
        for side in [-1.0, 1.0] {
            for t in 0..count {
                let mut rem = t;
                let mut center = vec![0.0; d];
                for &b in other.iter().rev() {
                    let i = rem % layout.dims[b];
                    rem /= layout.dims[b];
                    center[b] = layout.lo[b] + (i as f64 + 0.5) * h;
                }
                center[a] = if side < 0.0 { layout.lo[a] } else { hi[a] };
                let mut normal = vec![0.0; d];
                normal[a] = side;
                faces.push(BoundaryFace { center, normal, weight: h.powi(d as i32 - 1) });
            }
        }
    }
    faces
}

fn annulus_grid(
    spec: &ManifoldSpec,
    domain: &ReferenceDomain,
    inner: f64,
    outer: f64,
    resolution: usize,
) -> DomainGrid {
    let d = spec.ambient();
    let h = 1.0 / resolution as f64;
    let per_axis = (2.0 * outer * resolution as f64).ceil() as usize;
    let half = per_axis as f64 * h / 2.0;
    let dims = vec![per_axis; d];
    let total: usize = dims.iter().product();
    let mut layout = CartesianLayout {
        dims,
        lo: vec![-half; d],
        h,
        periodic: vec![None; d],
        box_of_cell: Vec::new(),
        cell_of_box: vec![None; total],
    };
    let mut centers = Vec::new();
    for idx in 0..total {
        let x = layout.box_center(idx);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r >= inner && r < outer {
            layout.cell_of_box[idx] = Some(layout.box_of_cell.len());
            layout.box_of_cell.push(idx);
            centers.extend(x);
        }
    }
    let cells = layout.box_of_cell.len();
    DomainGrid {
        spec: *spec,
        domain: domain.clone(),
        resolution,
        h,
        layout: Layout::Cartesian(layout),
        centers,
        weights: vec![h.powi(d as i32); cells],
        // The two boundary spheres are glued by the dilation: no boundary.
        faces: Vec::new(),
    }
}

fn latlong_grid(
    spec: &ManifoldSpec,
    domain: &ReferenceDomain,
    theta_max: f64,
    resolution: usize,
    antipodal: Option<f64>,
) -> DomainGrid {
    let n_theta = resolution;
    let dtheta = theta_max / n_theta as f64;
    let n_phi = 2 * ((PI / dtheta).round() as usize).max(2);
    let dphi = 2.0 * PI / n_phi as f64;
    let layout = LatLongLayout { n_theta, n_phi, dtheta, dphi, theta_max, antipodal };
    let factor = if antipodal.is_some() { 2.0 } else { 1.0 };
    let mut centers = Vec::with_capacity(n_theta * n_phi * 3);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let t = layout.theta(i);
        for j in 0..n_phi {
            let p = layout.phi(j);
            centers.extend([t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]);
            weights.push(factor * t.sin() * dtheta * dphi);
        }
    }
    let mut faces = Vec::new();
    if antipodal.is_none() && theta_max < PI - 1e-12 {
        let (st, ct) = theta_max.sin_cos();
        for j in 0..n_phi {
            let p = layout.phi(j);
            faces.push(BoundaryFace {
                center: vec![st * p.cos(), st * p.sin(), ct],
                normal: vec![ct * p.cos(), ct * p.sin(), -st],
                weight: st * dphi,
            });
        }
    }
    DomainGrid {
        spec: *spec,
        domain: domain.clone(),
        resolution,
        h: dtheta,
        layout: Layout::LatLong(layout),
        centers,
        weights,
        faces,
    }
}

/// Cell measure entering inner products: flat measure, times `x_n^{1-n}` on the
/// hyperbolic half-space.
pub fn volume_weight(grid: &DomainGrid, cell: usize) -> Result<f64, GeometryError> {
    let w = grid.weight(cell);
    if grid.spec.kind != Kind::Hyperbolic {
        return Ok(w);
    }
    let xn = grid.center(cell)[grid.spec.n];
    if xn <= 0.0 {
        return Err(GeometryError::BelowHorizon);
    }
    Ok(w * xn.powi(1 - grid.spec.n as i32))
}

/// All inner-product weights of a grid.
pub fn volume_weights(grid: &DomainGrid) -> Vec<f64> {
    (0..grid.len())
        .map(|c| volume_weight(grid, c).expect("grid cells lie above the horizon"))
        .collect()
}

/// Canonical fundamental-domain representative of a point of the cover.
pub fn project(spec: &ManifoldSpec, x: &Paravector) -> Result<Paravector, GeometryError> {
    Ok(project_with_sign(spec, x)?.0)
}

/// Representative plus the bundle sign relating a section's value at `x` to
/// its value at the representative.
pub fn project_with_sign(
    spec: &ManifoldSpec,
    x: &Paravector,
) -> Result<(Paravector, f64), GeometryError> {
    let mut c = x.components().to_vec();
    match spec.kind {
        Kind::Rp => {
            let n = c.len() - 1;
            let flip = if c[n] != 0.0 {
                c[n] < 0.0
            } else {
                c.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0)
            };
            if flip {
                c.iter_mut().for_each(|v| *v = -*v);
                return Ok((Paravector(c), spec.rp_parity()));
            }
            Ok((Paravector(c), 1.0))
        }
        Kind::Cylinder => {
            let mut m = vec![0i64; spec.k];
            for a in 0..spec.k {
                let f = c[a].floor();
                m[a] = f as i64;
                c[a] -= f;
                if c[a] >= 1.0 {
                    c[a] -= 1.0;
                    m[a] += 1;
                }
            }
            Ok((Paravector(c), spec.lattice_sign(&m)))
        }
        Kind::Hopf => {
            let r = x.norm();
            if r == 0.0 {
                return Err(GeometryError::HopfOrigin);
            }
            let mut j = r.log2().floor() as i32;
            let mut scale = 2f64.powi(-j);
            if r * scale >= 2.0 {
                j += 1;
                scale = 2f64.powi(-j);
            } else if r * scale < 1.0 {
                j -= 1;
                scale = 2f64.powi(-j);
            }
            c.iter_mut().for_each(|v| *v *= scale);
            Ok((Paravector(c), 1.0))
        }
        _ => Ok((Paravector(c), 1.0)),
    }
}

/// Evaluator of a fundamental-domain sample over the whole cover.
pub struct Lift<'a> {
    grid: &'a DomainGrid,
    values: &'a [f64],
}

impl<'a> Lift<'a> {
    pub fn new(grid: &'a DomainGrid, values: &'a [f64]) -> Self {
        Self { grid, values }
    }

    /// Value at `x` (nearest sampled cell, times the bundle sign).
    pub fn eval(&self, x: &Paravector) -> Result<Multivector, GeometryError> {
        let (rep, sign) = project_with_sign(&self.grid.spec, x)?;
        let cell = self.grid.locate(rep.components()).ok_or(GeometryError::OutsideDomain)?;
        let dim = 1 << self.grid.spec.n;
        let v = self.values[cell * dim..(cell + 1) * dim].iter().map(|c| c * sign).collect();
        Ok(Multivector::new(self.grid.spec.n, v)?)
    }
}

/// Surface area of the unit sphere `S^m`.
pub fn sphere_area(m: usize) -> f64 {
    // |S^m| = 2 pi^{(m+1)/2} / Gamma((m+1)/2)
    let a = (m as f64 + 1.0) / 2.0;
    2.0 * PI.powf(a) / statrs::function::gamma::gamma(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_box_cell_count() {
        let g = build_grid(&ManifoldSpec::euclid(2), &ReferenceDomain::default_for(&ManifoldSpec::euclid(2)), 8).unwrap();
        assert_eq!(g.len(), 512);
        assert!(g.weights().iter().all(|&w| (w - 1.0 / 512.0).abs() < 1e-15));
        assert_eq!(g.faces.len(), 6 * 64);
        for f in &g.faces {
            assert!((f.normal.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_area_matches_closed_form() {
        let g = build_grid(&ManifoldSpec::sphere(2), &ReferenceDomain::Cap { theta_max: PI / 3.0 }, 16).unwrap();
        let exact = 2.0 * PI * (1.0 - (PI / 3.0).cos());
        assert!((g.total_measure() - exact).abs() / exact < 0.02);
    }

    #[test]
    fn hyperbolic_weight_integral() {
        let spec = ManifoldSpec::hyperbolic(2);
        let dom = ReferenceDomain::Box { lo: vec![0.0, 0.0, 1.0], hi: vec![1.0, 1.0, 2.0] };
        let g = build_grid(&spec, &dom, 8).unwrap();
        let s: f64 = volume_weights(&g).iter().sum();
        assert!((s - 2f64.ln()).abs() / 2f64.ln() < 0.02);
        assert!((0..g.len()).all(|c| g.center(c)[2] >= g.h));
    }

    #[test]
    fn volume_weight_examples() {
        let spec = ManifoldSpec::hyperbolic(3);
        let dom = ReferenceDomain::Box { lo: vec![0.0, 0.0, 0.0, 1.5], hi: vec![1.0, 1.0, 1.0, 2.5] };
        let g = build_grid(&spec, &dom, 4).unwrap();
        let cell = (0..g.len()).find(|&c| (g.center(c)[3] - 2.125).abs() < 1e-12).unwrap();
        assert_relative_eq!(volume_weight(&g, cell).unwrap(), g.weight(cell) / 2.125f64.powi(2), max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            default_grid(&ManifoldSpec::euclid(2), 3),
            Err(GeometryError::ResolutionTooSmall(3))
        ));
        assert!(ManifoldSpec::cylinder(2, 1, 0).validate().is_err());
        assert!(ManifoldSpec::rp(2, 3).validate().is_err());
        assert!(ManifoldSpec::cylinder(4, 1, 2).validate().is_err());
        assert!(build_grid(&ManifoldSpec::hopf(2), &ReferenceDomain::Hemisphere, 8).is_err());
        let below = ReferenceDomain::Box { lo: vec![0.0, 0.0, 0.0], hi: vec![1.0, 1.0, 1.0] };
        assert!(build_grid(&ManifoldSpec::hyperbolic(2), &below, 8).is_err());
    }

    #[test]
    fn projection_examples() {
        let rp = ManifoldSpec::rp(2, 1);
        let p = project(&rp, &Paravector(vec![0.0, 0.0, -1.0])).unwrap();
        assert_eq!(p.components(), &[0.0, 0.0, 1.0]);
        let cyl = ManifoldSpec::cylinder(4, 1, 0);
        let p = project(&cyl, &Paravector(vec![2.25, 0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(p.components(), &[0.25, 0.0, 1.0, 0.0, 0.0]);
        let hopf = ManifoldSpec::hopf(2);
        let p = project(&hopf, &Paravector(vec![0.0, 5.0, 0.0])).unwrap();
        assert_eq!(p.components(), &[0.0, 1.25, 0.0]);
        assert!(project(&hopf, &Paravector(vec![0.0; 3])).is_err());
    }

    #[test]
    fn lift_bundle_signs() {
        for (bundle, expected) in [(1, 1.0), (2, -1.0)] {
            let spec = ManifoldSpec::rp(2, bundle);
            let g = default_grid(&spec, 8).unwrap();
            let vals: Vec<f64> = (0..g.len()).flat_map(|_| [0.0, 1.0, 0.0, 0.0]).collect();
            let lift = Lift::new(&g, &vals);
            let x = Paravector(vec![0.3, 0.4, (1.0f64 - 0.25).sqrt()]);
            let a = lift.eval(&x).unwrap();
            let b = lift.eval(&x.scale(-1.0)).unwrap();
            assert_eq!(b.get(1), expected * a.get(1));
        }
        let spec = ManifoldSpec::cylinder(4, 1, 1);
        let g = default_grid(&spec, 4).unwrap();
        let vals: Vec<f64> = (0..g.len()).flat_map(|c| {
            let mut v = vec![0.0; 16];
            v[0] = 1.0 + c as f64;
            v
        }).collect();
        let lift = Lift::new(&g, &vals);
        let x = Paravector(vec![0.3, 0.1, -0.2, 0.05, 0.3]);
        let a = lift.eval(&x).unwrap();
        let b = lift.eval(&Paravector(vec![1.3, 0.1, -0.2, 0.05, 0.3])).unwrap();
        assert_eq!(b.get(0), -a.get(0));
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(1), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(2), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(3), 2.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(4), 8.0 * PI * PI / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn measure_converges_under_refinement() {
        // Midpoint sin(theta) rule on a cap: error vs the exact area shrinks with h.
        let exact = 2.0 * PI * (1.0 - (PI / 3.0).cos());
        let errs: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&r| {
                let g = build_grid(&ManifoldSpec::sphere(2), &ReferenceDomain::Cap { theta_max: PI / 3.0 }, r).unwrap();
                (g.total_measure() - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.0, "{errs:?}");
        }
    }

    fn orbit_point(spec: ManifoldSpec) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0..3.0f64, spec.ambient())
    }

    proptest! {
        #[test]
        fn rp_projection_is_idempotent_on_orbits(x in orbit_point(ManifoldSpec::rp(2, 1))) {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(r > 1e-3);
            let spec = ManifoldSpec::rp(2, 1);
            let u = Paravector(x.iter().map(|v| v / r).collect());
            let p = project(&spec, &u).unwrap();
            prop_assert_eq!(project(&spec, &p).unwrap(), p.clone());
            prop_assert_eq!(project(&spec, &u.scale(-1.0)).unwrap(), p);
        }

        #[test]
        fn cylinder_projection_collapses_orbits(x in orbit_point(ManifoldSpec::cylinder(4, 1, 0)), m in -3i64..=3) {
            let spec = ManifoldSpec::cylinder(4, 1, 0);
            let p = project(&spec, &Paravector(x.clone())).unwrap();
            let mut shifted = x.clone();
            shifted[0] += m as f64;
            let q = project(&spec, &Paravector(shifted)).unwrap();
            prop_assert!((p.components()[0] - q.components()[0]).abs() < 1e-12);
            prop_assert_eq!(project(&spec, &p).unwrap(), p.clone());
            prop_assert!(p.components()[0] >= 0.0 && p.components()[0] < 1.0);
        }

        #[test]
        fn hopf_projection_collapses_orbits(x in orbit_point(ManifoldSpec::hopf(2)), j in -3i32..=3) {
            let spec = ManifoldSpec::hopf(2);
            let px = Paravector(x.clone());
            prop_assume!(px.norm() > 1e-3);
            let p = project(&spec, &px).unwrap();
            let q = project(&spec, &px.scale(2f64.powi(j))).unwrap();
            prop_assert!(p.sub(&q).norm() < 1e-12);
            let r = p.norm();
            prop_assert!((1.0..2.0).contains(&r));
            prop_assert_eq!(project(&spec, &p).unwrap(), p);
        }
    }
}
