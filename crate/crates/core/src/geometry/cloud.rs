use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Tolerance on `|n| = 1` for stored normals.
pub const UNIT_NORMAL_TOL: f64 = 1e-9;

/// Unordered set of 3-D points.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        check_finite(&points, "point cloud")?;
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Points paired with unit normals.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OrientedPointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl OrientedPointCloud {
    /// Validates equal lengths, finiteness and unit normals.
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::contract(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        check_finite(&points, "points")?;
        check_finite(&normals, "normals")?;
        if let Some((i, n)) = normals
            .iter()
            .enumerate()
            .find(|(_, n)| (vec3::norm(**n) - 1.0).abs() > UNIT_NORMAL_TOL)
        {
            return Err(Error::contract(format!(
                "normal {i} has length {} (not unit)",
                vec3::norm(*n)
            )));
        }
        Ok(Self { points, normals })
    }

    /// Normalizes each normal; zero-length normals are an error.
    pub fn from_unnormalized(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                vec3::normalized(n, 1e-12)
                    .ok_or_else(|| Error::domain(format!("normal {i} has zero length")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, normals)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
        }
    }

    /// First `n` entries (or all, if fewer).
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            points: self.points[..n].to_vec(),
            normals: self.normals[..n].to_vec(),
        }
    }
}

/// A point on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint(Vec3);

impl SpherePoint {
    pub const TOL: f64 = 1e-12;

    pub fn new(coords: Vec3) -> Result<Self> {
        let n = vec3::norm(coords);
        if !n.is_finite() || (n - 1.0).abs() > Self::TOL {
            return Err(Error::contract(format!(
                "sphere point {coords:?} has norm {n}"
            )));
        }
        Ok(Self(coords))
    }

    /// Projects a non-zero vector onto the sphere.
    pub fn from_direction(v: Vec3) -> Result<Self> {
        vec3::normalized(v, 1e-300)
            .map(Self)
            .ok_or_else(|| Error::domain("zero vector has no direction"))
    }

    pub fn coords(&self) -> Vec3 {
        self.0
    }
}

fn check_finite(v: &[Vec3], what: &str) -> Result<()> {
    match v.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        Some(i) => Err(Error::NonFinite(format!("{what} entry {i}"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oriented_cloud_validates() {
        assert!(OrientedPointCloud::new(vec![[0.0; 3]], vec![]).is_err());
        assert!(OrientedPointCloud::new(vec![[0.0; 3]], vec![[0.0, 0.0, 2.0]]).is_err());
        let c = OrientedPointCloud::from_unnormalized(vec![[0.0; 3]], vec![[0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(c.normals[0], [0.0, 0.0, 1.0]);
        assert!(OrientedPointCloud::from_unnormalized(vec![[0.0; 3]], vec![[0.0; 3]]).is_err());
        assert!(PointCloud::new(vec![[f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn sphere_point_requires_unit_norm() {
        assert!(SpherePoint::new([1.0, 0.0, 0.0]).is_ok());
        assert!(SpherePoint::new([1.0, 1e-3, 0.0]).is_err());
        let p = SpherePoint::from_direction([3.0, 4.0, 0.0]).unwrap();
        assert!((vec3::norm(p.coords()) - 1.0).abs() < 1e-15);
    }
}
