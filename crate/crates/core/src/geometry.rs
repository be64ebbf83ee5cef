//! Array architectures and the geometric primitives shared by the channel
//! and gain models.
//!
//! Frame: origin at the platform center, `+z` up, ground plane at
//! `z = -altitude`. Polar angles `theta` are measured from the downward
//! (nadir) axis, so nadir has `theta = 0` and the horizon `theta = 90`.
//! Elevation above the horizon is `90 - theta`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half a wavelength at 2 GHz with c = 3e8 m/s.
pub const DEFAULT_ELEMENT_SPACING_M: f64 = 0.075;
pub const DEFAULT_ALTITUDE_M: f64 = 20_000.0;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    /// Direction with polar angle `theta_deg` from nadir and azimuth `phi_deg`.
    pub fn from_nadir_polar(theta_deg: f64, phi_deg: f64) -> Vec3 {
        let (st, ct) = theta_deg.to_radians().sin_cos();
        let (sp, cp) = phi_deg.to_radians().sin_cos();
        Vec3::new(st * cp, st * sp, -ct)
    }

    pub fn rotated_about_z(self, angle_rad: f64) -> Vec3 {
        let (s, c) = angle_rad.sin_cos();
        Vec3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Spherical coordinates of a point relative to the array origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Polar {
    pub distance: f64,
    /// Degrees from the downward axis.
    pub theta_deg: f64,
    /// Degrees, in `(-180, 180]`.
    pub phi_deg: f64,
}

impl Polar {
    pub fn from_cartesian(p: Vec3) -> Polar {
        let distance = p.norm();
        if distance == 0.0 {
            return Polar {
                distance,
                theta_deg: 0.0,
                phi_deg: 0.0,
            };
        }
        let theta_deg = (-p.z / distance).clamp(-1.0, 1.0).acos().to_degrees();
        let phi_deg = p.y.atan2(p.x).to_degrees();
        Polar {
            distance,
            theta_deg,
            phi_deg,
        }
    }

    pub fn to_cartesian(self) -> Vec3 {
        Vec3::from_nadir_polar(self.theta_deg, self.phi_deg) * self.distance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Hemispherical,
    Cylindrical,
    Rectangular,
    Hybrid,
}

impl Architecture {
    pub fn short_name(self) -> &'static str {
        match self {
            Architecture::Hemispherical => "HAA",
            Architecture::Cylindrical => "CAA",
            Architecture::Rectangular => "RAA",
            Architecture::Hybrid => "HRCAA",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementPose {
    pub position: Vec3,
    pub boresight: Vec3,
    pub polar: Polar,
}

impl ElementPose {
    fn new(position: Vec3, boresight: Vec3) -> Self {
        ElementPose {
            position,
            boresight: boresight.normalized(),
            polar: Polar::from_cartesian(position),
        }
    }
}

/// Shape parameters for every architecture. Only the fields relevant to the
/// selected architecture are read.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayParams {
    pub architecture: Architecture,
    /// Total element count `M`.
    pub elements: usize,
    pub hemisphere_radius_m: f64,
    /// Ring pitch for cylinders and grid pitch for rectangular panels.
    pub element_spacing_m: f64,
    pub cyl_rings: usize,
    /// Cylinder radius; `None` picks the radius that gives `element_spacing_m`
    /// between neighbours on a ring.
    pub cyl_radius_m: Option<f64>,
    pub rect_rows: usize,
    pub m_cyl: usize,
    pub m_rect: usize,
}

impl Default for ArrayParams {
    fn default() -> Self {
        ArrayParams {
            architecture: Architecture::Hemispherical,
            elements: 2650,
            hemisphere_radius_m: 3.0,
            element_spacing_m: DEFAULT_ELEMENT_SPACING_M,
            cyl_rings: 50,
            cyl_radius_m: None,
            rect_rows: 50,
            m_cyl: 2000,
            m_rect: 650,
        }
    }
}

impl ArrayParams {
    pub fn with_architecture(architecture: Architecture) -> Self {
        ArrayParams {
            architecture,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub architecture: Architecture,
    pub elements: Vec<ElementPose>,
    /// Radius of the design envelope (hemisphere radius, cylinder
    /// half-diagonal, panel half-diagonal).
    pub nominal_radius: f64,
}

impl ArrayGeometry {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn rotated_about_z(&self, angle_rad: f64) -> ArrayGeometry {
        ArrayGeometry {
            architecture: self.architecture,
            elements: self
                .elements
                .iter()
                .map(|e| {
                    ElementPose::new(
                        e.position.rotated_about_z(angle_rad),
                        e.boresight.rotated_about_z(angle_rad),
                    )
                })
                .collect(),
            nominal_radius: self.nominal_radius,
        }
    }
}

fn require_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive, got {v}")))
    }
}

fn require_divides(field: &str, total: usize, by: usize) -> Result<usize> {
    if by == 0 || !total.is_multiple_of(by) {
        return Err(Error::invalid(
            field,
            format!("{total} elements cannot be split into {by} equal rows/rings"),
        ));
    }
    Ok(total / by)
}

/// Deterministic Fibonacci lattice on the lower hemisphere, equal-area in
/// `cos(theta)`; boresights are the outward radials.
fn hemisphere(count: usize, radius: f64) -> Vec<ElementPose> {
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let cos_t = 1.0 - (i as f64 + 0.5) / count as f64;
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let phi = (i as f64 * golden_angle).rem_euclid(2.0 * PI);
            let dir = Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), -cos_t);
            ElementPose::new(dir * radius, dir)
        })
        .collect()
}

/// Stacked rings centred on the origin, horizontal outward boresights.
fn cylinder(rings: usize, per_ring: usize, radius: f64, pitch: f64) -> Vec<ElementPose> {
    let mut out = Vec::with_capacity(rings * per_ring);
    for r in 0..rings {
        let z = -(r as f64 - (rings as f64 - 1.0) / 2.0) * pitch;
        for i in 0..per_ring {
            let a = 2.0 * PI * i as f64 / per_ring as f64;
            let radial = Vec3::new(a.cos(), a.sin(), 0.0);
            out.push(ElementPose::new(
                radial * radius + Vec3::new(0.0, 0.0, z),
                radial,
            ));
        }
    }
    out
}

/// Row-major grid at height `z`, downward boresights. The last row may be
/// partial when `count < rows * cols`.
fn panel(count: usize, rows: usize, cols: usize, pitch: f64, z: f64) -> Vec<ElementPose> {
    let down = Vec3::new(0.0, 0.0, -1.0);
    (0..count)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let x = (r as f64 - (rows as f64 - 1.0) / 2.0) * pitch;
            let y = (c as f64 - (cols as f64 - 1.0) / 2.0) * pitch;
            ElementPose::new(Vec3::new(x, y, z), down)
        })
        .collect()
}

fn half_diagonal(rows: usize, cols: usize, pitch: f64) -> f64 {
    let w = (rows.max(1) - 1) as f64 * pitch;
    let h = (cols.max(1) - 1) as f64 * pitch;
    0.5 * (w * w + h * h).sqrt()
}

/// Builds one of the four array architectures.
///
/// Element ordering is a pure function of `params`: hemisphere elements in
/// lattice order, cylinders ring by ring from the top, panels row-major, and
/// hybrids with the cylinder first.
pub fn build_array(params: &ArrayParams) -> Result<ArrayGeometry> {
    let m = params.elements;
    if m == 0 {
        return Err(Error::invalid(
            "elements",
            "array needs at least one element",
        ));
    }
    let pitch = params.element_spacing_m;
    let ring_radius = |per_ring: usize| -> Result<f64> {
        match params.cyl_radius_m {
            Some(r) => {
                require_positive("cyl_radius_m", r)?;
                Ok(r)
            }
            None => Ok(per_ring as f64 * pitch / (2.0 * PI)),
        }
    };

    let (elements, nominal_radius) = match params.architecture {
        Architecture::Hemispherical => {
            let r = params.hemisphere_radius_m;
            require_positive("hemisphere_radius_m", r)?;
            (hemisphere(m, r), r)
        }
        Architecture::Cylindrical => {
            require_positive("element_spacing_m", pitch)?;
            let per_ring = require_divides("cyl_rings", m, params.cyl_rings)?;
            let radius = ring_radius(per_ring)?;
            let half_h = 0.5 * (params.cyl_rings - 1) as f64 * pitch;
            (
                cylinder(params.cyl_rings, per_ring, radius, pitch),
                radius.hypot(half_h),
            )
        }
        Architecture::Rectangular => {
            require_positive("element_spacing_m", pitch)?;
            let cols = require_divides("rect_rows", m, params.rect_rows)?;
            (
                panel(m, params.rect_rows, cols, pitch, 0.0),
                half_diagonal(params.rect_rows, cols, pitch).max(pitch),
            )
        }
        Architecture::Hybrid => {
            require_positive("element_spacing_m", pitch)?;
            if params.m_cyl + params.m_rect != m {
                return Err(Error::invalid(
                    "m_cyl",
                    format!(
                        "m_cyl ({}) + m_rect ({}) must equal elements ({m})",
                        params.m_cyl, params.m_rect
                    ),
                ));
            }
            if params.m_cyl == 0 || params.m_rect == 0 {
                return Err(Error::invalid(
                    "m_cyl",
                    "hybrid needs both a cylinder and a panel",
                ));
            }
            let per_ring = require_divides("cyl_rings", params.m_cyl, params.cyl_rings)?;
            let radius = ring_radius(per_ring)?;
            let half_h = 0.5 * (params.cyl_rings - 1) as f64 * pitch;
            let cols = (params.m_rect as f64).sqrt().ceil() as usize;
            let rows = params.m_rect.div_ceil(cols);
            let z = -half_h - pitch;
            let mut elements = cylinder(params.cyl_rings, per_ring, radius, pitch);
            elements.extend(panel(params.m_rect, rows, cols, pitch, z));
            let panel_r = half_diagonal(rows, cols, pitch).hypot(z);
            (elements, radius.hypot(half_h).max(panel_r))
        }
    };

    Ok(ArrayGeometry {
        architecture: params.architecture,
        elements,
        nominal_radius,
    })
}

/// One terrestrial user with its coordinates relative to the platform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserPose {
    pub x: f64,
    pub y: f64,
    /// Slant range to the array origin.
    pub distance: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub elevation_deg: f64,
    /// Unit vector from the array origin toward the user.
    pub direction: Vec3,
}

impl UserPose {
    pub fn new(x: f64, y: f64, altitude: f64) -> Self {
        let rel = Vec3::new(x, y, -altitude);
        let polar = Polar::from_cartesian(rel);
        UserPose {
            x,
            y,
            distance: polar.distance,
            theta_deg: polar.theta_deg,
            phi_deg: polar.phi_deg,
            elevation_deg: 90.0 - polar.theta_deg,
            direction: rel.normalized(),
        }
    }

    pub fn position(&self, altitude: f64) -> Vec3 {
        Vec3::new(self.x, self.y, -altitude)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserField {
    pub altitude: f64,
    pub users: Vec<UserPose>,
}

impl UserField {
    pub fn new(points: &[(f64, f64)], altitude: f64) -> Result<Self> {
        require_positive("altitude_m", altitude)?;
        if let Some(bad) = points
            .iter()
            .find(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::invalid(
                "users",
                format!("non-finite position {bad:?}"),
            ));
        }
        Ok(UserField {
            altitude,
            users: points
                .iter()
                .map(|&(x, y)| UserPose::new(x, y, altitude))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn rotated_about_z(&self, angle_rad: f64) -> UserField {
        let pts: Vec<(f64, f64)> = self
            .users
            .iter()
            .map(|u| {
                let v = Vec3::new(u.x, u.y, 0.0).rotated_about_z(angle_rad);
                (v.x, v.y)
            })
            .collect();
        UserField::new(&pts, self.altitude).expect("rotation preserves validity")
    }
}

/// Angle in degrees between the element boresight and the direction from
/// the array origin toward the user (far-field convention).
pub fn angle_element_user(element: &ElementPose, user: &UserPose) -> f64 {
    element
        .boresight
        .dot(user.direction)
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

/// `sqrt(d_k^2 + d_m^2 - 2 d_k d_m cos(angle))`.
pub fn triangle_law_distance(user_distance: f64, element_distance: f64, angle_deg: f64) -> f64 {
    let (dk, dm) = (user_distance, element_distance);
    (dk * dk + dm * dm - 2.0 * dk * dm * angle_deg.to_radians().cos())
        .max(0.0)
        .sqrt()
}

/// Element-to-user distance by the triangle law, using the angle between the
/// element's position vector and the user direction. For hemispherical
/// elements that angle is exactly [`angle_element_user`].
pub fn distance_element_user(element: &ElementPose, user: &UserPose) -> f64 {
    let dm = element.polar.distance;
    if dm == 0.0 {
        return user.distance;
    }
    let cos_psi = (element.position * (1.0 / dm))
        .dot(user.direction)
        .clamp(-1.0, 1.0);
    triangle_law_distance(user.distance, dm, cos_psi.acos().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn user_at(theta_deg: f64, phi_deg: f64) -> UserPose {
        let h = DEFAULT_ALTITUDE_M;
        let r = h * theta_deg.to_radians().tan();
        let (s, c) = phi_deg.to_radians().sin_cos();
        UserPose::new(r * c, r * s, h)
    }

    fn element_at(theta_deg: f64, phi_deg: f64, radius: f64) -> ElementPose {
        let d = Vec3::from_nadir_polar(theta_deg, phi_deg);
        ElementPose::new(d * radius, d)
    }

    #[test]
    fn angle_examples() {
        let u = user_at(45.0, 0.0);
        let e = ElementPose::new(u.direction * 3.0, u.direction);
        assert!(angle_element_user(&e, &u) < 1e-6);

        let e = element_at(45.0, 180.0, 3.0);
        assert_relative_eq!(angle_element_user(&e, &u), 90.0, epsilon = 1e-9);

        let u = user_at(30.0, 0.0);
        let e = element_at(30.0, 0.0, 3.0);
        assert!(angle_element_user(&e, &u) < 1e-6);
    }

    #[test]
    fn triangle_law_examples() {
        assert_relative_eq!(
            triangle_law_distance(20000.0, 3.0, 0.0),
            19997.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            triangle_law_distance(20000.0, 3.0, 180.0),
            20003.0,
            epsilon = 1e-9
        );
        // sqrt(20000^2 + 9) = 20000 + 9/40000 - ...
        let d = triangle_law_distance(20000.0, 3.0, 90.0);
        assert_relative_eq!(d, 20000.000225, epsilon = 1e-6);
    }

    #[test]
    fn distance_matches_euclidean() {
        let g = build_array(&ArrayParams::with_architecture(Architecture::Hybrid)).unwrap();
        let u = UserPose::new(12_000.0, -7_000.0, DEFAULT_ALTITUDE_M);
        for e in g.elements.iter().step_by(97) {
            let exact = (u.position(DEFAULT_ALTITUDE_M) - e.position).norm();
            assert_relative_eq!(distance_element_user(e, &u), exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn hemisphere_invariants() {
        let g = build_array(&ArrayParams::default()).unwrap();
        assert_eq!(g.len(), 2650);
        for e in &g.elements {
            assert!((e.position.norm() - 3.0).abs() < 1e-9);
            assert!(e.position.z < 0.0);
            assert!((e.boresight.norm() - 1.0).abs() < 1e-12);
            let radial = e.position.normalized();
            assert!((radial - e.boresight).norm() < 1e-12);
        }
    }

    #[test]
    fn baseline_architectures() {
        let rect = build_array(&ArrayParams::with_architecture(Architecture::Rectangular)).unwrap();
        assert_eq!(rect.len(), 2650);
        assert!(rect
            .elements
            .iter()
            .all(|e| e.boresight == Vec3::new(0.0, 0.0, -1.0)));

        let cyl = build_array(&ArrayParams::with_architecture(Architecture::Cylindrical)).unwrap();
        assert_eq!(cyl.len(), 2650);
        for e in &cyl.elements {
            assert!(e.boresight.z.abs() < 1e-15);
            let radial = Vec3::new(e.position.x, e.position.y, 0.0).normalized();
            assert!((radial - e.boresight).norm() < 1e-12);
        }

        let hyb = build_array(&ArrayParams::with_architecture(Architecture::Hybrid)).unwrap();
        assert_eq!(hyb.len(), 2650);
        let down = hyb.elements.iter().filter(|e| e.boresight.z < -0.5).count();
        assert_eq!(down, 650);

        for g in [&rect, &cyl, &hyb] {
            assert!(g
                .elements
                .iter()
                .all(|e| e.position.norm() <= 2.0 * g.nominal_radius));
        }
    }

    #[test]
    fn build_rejects_bad_params() {
        let mut p = ArrayParams {
            elements: 0,
            ..Default::default()
        };
        assert!(build_array(&p).is_err());

        p = ArrayParams::with_architecture(Architecture::Hybrid);
        p.m_rect = 600;
        let err = build_array(&p).unwrap_err().to_string();
        assert!(err.contains("m_cyl"), "{err}");

        p = ArrayParams {
            hemisphere_radius_m: -1.0,
            ..Default::default()
        };
        assert!(build_array(&p).is_err());

        p = ArrayParams::with_architecture(Architecture::Rectangular);
        p.element_spacing_m = 0.0;
        assert!(build_array(&p).is_err());

        p = ArrayParams::with_architecture(Architecture::Cylindrical);
        p.elements = 2651;
        assert!(build_array(&p).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        for arch in [
            Architecture::Hemispherical,
            Architecture::Cylindrical,
            Architecture::Rectangular,
            Architecture::Hybrid,
        ] {
            let p = ArrayParams::with_architecture(arch);
            assert_eq!(build_array(&p).unwrap(), build_array(&p).unwrap());
        }
    }

    #[test]
    fn user_field_derived_quantities() {
        let f = UserField::new(&[(0.0, 0.0), (20_000.0, 0.0)], DEFAULT_ALTITUDE_M).unwrap();
        assert_eq!(f.users[0].distance, DEFAULT_ALTITUDE_M);
        assert_eq!(f.users[0].elevation_deg, 90.0);
        assert_relative_eq!(f.users[1].theta_deg, 45.0, epsilon = 1e-12);
        assert_relative_eq!(f.users[1].elevation_deg, 45.0, epsilon = 1e-12);
        assert!(UserField::new(&[(0.0, 0.0)], 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn polar_round_trip(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
                let p = Vec3::new(x, y, z);
                let back = Polar::from_cartesian(p).to_cartesian();
                prop_assert!((back - p).norm() < 1e-9);
            }

            #[test]
            fn triangle_bounds(dk in 20_000.0..120_000.0f64, dm in 0.0..10.0f64, a in 0.0..180.0f64) {
                let d = triangle_law_distance(dk, dm, a);
                prop_assert!(d >= dk - dm - 1e-9 && d <= dk + dm + 1e-9);
            }

            #[test]
            fn rotation_invariance(angle in -PI..PI, x in -30_000.0..30_000.0f64, y in -30_000.0..30_000.0f64) {
                let g = build_array(&ArrayParams { elements: 300, ..Default::default() }).unwrap();
                let f = UserField::new(&[(x, y)], DEFAULT_ALTITUDE_M).unwrap();
                let (gr, fr) = (g.rotated_about_z(angle), f.rotated_about_z(angle));
                for (e, er) in g.elements.iter().zip(&gr.elements) {
                    let a0 = angle_element_user(e, &f.users[0]);
                    let a1 = angle_element_user(er, &fr.users[0]);
                    prop_assert!((a0 - a1).abs() < 1e-9);
                    let d0 = distance_element_user(e, &f.users[0]);
                    let d1 = distance_element_user(er, &fr.users[0]);
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
        }
    }
}
