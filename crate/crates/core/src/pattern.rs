//! Directional element pattern and the user-by-element gain matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{angle_element_user, ArrayGeometry, UserField, UserPose};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainPattern {
    pub theta_3db: f64,
    pub gamma_max_db: f64,
}

impl Default for GainPattern {
    fn default() -> Self {
        GainPattern {
            theta_3db: 25.0,
            gamma_max_db: 30.0,
        }
    }
}

impl GainPattern {
    pub fn new(theta_3db: f64, gamma_max_db: f64) -> Result<Self> {
        let p = GainPattern {
            theta_3db,
            gamma_max_db,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_3db > 0.0 && self.theta_3db <= 180.0) {
            return Err(Error::invalid(
                "theta_3db",
                format!("must be in (0, 180], got {}", self.theta_3db),
            ));
        }
        if !(self.gamma_max_db.is_finite() && self.gamma_max_db >= 0.0) {
            return Err(Error::invalid(
                "gamma_max_db",
                format!("must be >= 0, got {}", self.gamma_max_db),
            ));
        }
        Ok(())
    }

    /// Peak gain `32400 / theta_3db^2`, linear.
    pub fn g_e_max_linear(&self) -> f64 {
        32400.0 / (self.theta_3db * self.theta_3db)
    }

    /// Smallest front-region gain, after the front-to-back clamp.
    pub fn g_floor_linear(&self) -> f64 {
        self.g_e_max_linear() * 10f64.powf(-self.gamma_max_db / 10.0)
    }

    /// Attenuation below peak in dB for the front region, `theta < 90`.
    pub fn attenuation_db(&self, theta_deg: f64) -> f64 {
        let t = theta_deg / self.theta_3db;
        (12.0 * t * t).min(self.gamma_max_db)
    }

    pub fn front_gain_db(&self, theta_deg: f64) -> f64 {
        10.0 * self.g_e_max_linear().log10() - self.attenuation_db(theta_deg)
    }
}

/// Linear gain of one element toward a direction `theta_deg` off boresight.
/// The back hemisphere (`theta >= 90`) radiates nothing.
pub fn element_gain_linear(theta_deg: f64, pattern: &GainPattern) -> Result<f64> {
    if !(0.0..=180.0).contains(&theta_deg) {
        return Err(Error::invalid(
            "theta",
            format!("must be in [0, 180], got {theta_deg}"),
        ));
    }
    Ok(gain_unchecked(theta_deg, pattern))
}

fn gain_unchecked(theta_deg: f64, pattern: &GainPattern) -> f64 {
    if theta_deg >= 90.0 {
        0.0
    } else {
        pattern.g_e_max_linear() * 10f64.powf(-pattern.attenuation_db(theta_deg) / 10.0)
    }
}

/// Row-major `K x M` matrix of linear power gains.
#[derive(Clone, Debug, PartialEq)]
pub struct GainMatrix {
    users: usize,
    elements: usize,
    data: Vec<f64>,
}

impl GainMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let users = rows.len();
        let elements = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != elements) {
            return Err(Error::invalid("gains", "rows have different lengths"));
        }
        if rows.iter().flatten().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::invalid(
                "gains",
                "gains must be finite and non-negative",
            ));
        }
        Ok(GainMatrix {
            users,
            elements,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn filled(users: usize, elements: usize, value: f64) -> Self {
        GainMatrix {
            users,
            elements,
            data: vec![value; users * elements],
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.data[k * self.elements + m]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.elements..(k + 1) * self.elements]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.elements.max(1)).take(self.users)
    }
}

/// Gains of every element toward one user.
pub fn gain_row(geometry: &ArrayGeometry, user: &UserPose, pattern: &GainPattern) -> Vec<f64> {
    geometry
        .elements
        .iter()
        .map(|e| gain_unchecked(angle_element_user(e, user), pattern))
        .collect()
}

pub fn gain_matrix(
    geometry: &ArrayGeometry,
    users: &UserField,
    pattern: &GainPattern,
) -> GainMatrix {
    let elements = geometry.len();
    let data: Vec<f64> = users
        .users
        .par_iter()
        .flat_map_iter(|u| {
            geometry
                .elements
                .iter()
                .map(move |e| gain_unchecked(angle_element_user(e, u), pattern))
        })
        .collect();
    GainMatrix {
        users: users.len(),
        elements,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_array, Architecture, ArrayParams, DEFAULT_ALTITUDE_M};
    use approx::assert_relative_eq;

    #[test]
    fn peak_and_half_power() {
        let p = GainPattern::default();
        assert_eq!(p.g_e_max_linear(), 51.84);
        assert_relative_eq!(10.0 * 51.84f64.log10(), 17.1466, epsilon = 1e-4);
        assert_eq!(element_gain_linear(0.0, &p).unwrap(), 51.84);
        let half = element_gain_linear(12.5, &p).unwrap();
        assert_relative_eq!(10.0 * (half / 51.84).log10(), -3.0, epsilon = 1e-12);
        assert_relative_eq!(half, 25.98, epsilon = 0.01);
        assert_eq!(element_gain_linear(120.0, &p).unwrap(), 0.0);
        assert_eq!(element_gain_linear(90.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = GainPattern::default();
        assert!(element_gain_linear(-1.0, &p).is_err());
        assert!(element_gain_linear(180.5, &p).is_err());
        assert!(element_gain_linear(f64::NAN, &p).is_err());
        let err = GainPattern::new(-5.0, 30.0).unwrap_err().to_string();
        assert!(err.contains("theta_3db"));
    }

    #[test]
    fn clamp_and_beamwidth_ratio() {
        let p = GainPattern::default();
        let edge = p.theta_3db * (p.gamma_max_db / 12.0).sqrt();
        for t in [edge, edge + 1.0, 89.9] {
            assert_eq!(element_gain_linear(t, &p).unwrap(), p.g_floor_linear());
        }
        let narrow = GainPattern::new(10.0, 30.0).unwrap();
        assert_relative_eq!(
            narrow.g_e_max_linear() / p.g_e_max_linear(),
            6.25,
            max_relative = 1e-15
        );
    }

    #[test]
    fn matrix_examples() {
        let nadir = UserField::new(&[(0.0, 0.0)], DEFAULT_ALTITUDE_M).unwrap();
        let p = GainPattern::default();

        let rect = build_array(&ArrayParams::with_architecture(Architecture::Rectangular)).unwrap();
        let g = gain_matrix(&rect, &nadir, &p);
        assert!(g.row(0).iter().all(|&v| v == p.g_e_max_linear()));

        let cyl = build_array(&ArrayParams::with_architecture(Architecture::Cylindrical)).unwrap();
        let g = gain_matrix(&cyl, &nadir, &p);
        assert!(g.row(0).iter().all(|&v| v == 0.0));

        let hemi = build_array(&ArrayParams::default()).unwrap();
        let users = UserField::new(
            &[(30_000.0, 30_000.0), (-30_000.0, 0.0)],
            DEFAULT_ALTITUDE_M,
        )
        .unwrap();
        let g = gain_matrix(&hemi, &users, &p);
        assert_eq!((g.users(), g.elements()), (2, 2650));
        for row in g.rows() {
            assert!(row.iter().filter(|&&v| v > 0.0).count() >= 64);
            for &v in row {
                assert!(v == 0.0 || (v >= p.g_floor_linear() && v <= p.g_e_max_linear()));
            }
        }
    }

    #[test]
    fn from_rows_validates() {
        assert!(GainMatrix::from_rows(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(GainMatrix::from_rows(vec![vec![-1.0]]).is_err());
        let g = GainMatrix::from_rows(vec![vec![0.9, 0.5, 0.8]]).unwrap();
        assert_eq!(g.get(0, 2), 0.8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn non_increasing_in_front(t3 in 1.0..90.0f64, a in 0.0..89.9f64, b in 0.0..89.9f64) {
                let p = GainPattern::new(t3, 30.0).unwrap();
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(element_gain_linear(lo, &p).unwrap() >= element_gain_linear(hi, &p).unwrap());
            }
        }
    }
}
