//! Spherical head surrogate: electrode montage, random source grids, an
//! analytic infinite-medium dipole kernel and noisy measurement simulation.
//!
//! True sources and inverse candidates come from two independently seeded
//! grids so that data are never produced by the exact discrete model that is
//! later inverted.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ColumnLayout, DipoleSource, LeadField};

/// Default homogeneous conductivity, S/mm.
pub const DEFAULT_CONDUCTIVITY: f64 = 3.3e-4;
pub const DEFAULT_SCALP_RADIUS: f64 = 90.0;
pub const DEFAULT_SOURCE_SHELL_FRACTION: f64 = 0.85;
/// Minimum spacing between grid positions, mm.
pub const DEFAULT_MIN_SEPARATION: f64 = 2.0;
/// Minimum clearance between a true source and the nearest electrode, mm.
pub const DEFAULT_MIN_ELECTRODE_DISTANCE: f64 = 15.0;
pub const DEFAULT_MAX_ATTEMPTS: usize = 1_000_000;

const SINGULARITY_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadGeometry {
    pub scalp_radius: f64,
    pub source_shell_fraction: f64,
    pub conductivity: f64,
    pub min_separation: f64,
    pub electrode_positions: Vec<Vector3<f64>>,
    pub source_positions: Vec<Vector3<f64>>,
}

impl HeadGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.scalp_radius > 0.0) {
            return invalid("scalp radius must be positive");
        }
        if !(self.conductivity > 0.0) {
            return invalid("conductivity must be positive");
        }
        if !(self.source_shell_fraction > 0.0 && self.source_shell_fraction < 1.0) {
            return invalid("source shell fraction must lie in (0, 1)");
        }
        for (i, e) in self.electrode_positions.iter().enumerate() {
            if ((e.norm() - self.scalp_radius) / self.scalp_radius).abs() > 1e-9 {
                return invalid(format!("electrode {i} is not on the scalp sphere"));
            }
        }
        for (i, s) in self.source_positions.iter().enumerate() {
            if s.norm() >= self.scalp_radius {
                return invalid(format!("source position {i} lies outside the scalp"));
            }
        }
        if self.min_separation > 0.0 {
            let d = min_pairwise_distance(&self.source_positions);
            // Allow rounding slack from JSON round trips.
            if d < self.min_separation * (1.0 - 1e-12) {
                return invalid(format!(
                    "source positions closer than min separation ({d} < {})",
                    self.min_separation
                ));
            }
        }
        Ok(())
    }

    /// Same head and montage with a different candidate grid.
    pub fn with_sources(&self, source_positions: Vec<Vector3<f64>>) -> Self {
        Self {
            source_positions,
            ..self.clone()
        }
    }

    pub fn source_ball_radius(&self) -> f64 {
        self.scalp_radius * self.source_shell_fraction
    }
}

/// Deterministic Fibonacci-spiral lattice of `count` points on a sphere.
pub fn place_electrodes(count: usize, radius: f64) -> Result<Vec<Vector3<f64>>> {
    if count < 4 {
        return invalid(format!("need at least 4 electrodes, got {count}"));
    }
    if !(radius > 0.0) {
        return invalid("electrode radius must be positive");
    }
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    Ok((0..count)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Vector3::new(rho * phi.cos(), rho * phi.sin(), z) * radius
        })
        .collect())
}

/// Constraints for [`sample_source_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSampling {
    pub count: usize,
    pub ball_radius: f64,
    pub min_separation: f64,
    pub min_electrode_distance: f64,
    pub seed: u64,
    pub max_attempts: usize,
}

/// Uniform spatial hash for separation queries.
struct SpatialHash {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<Vector3<f64>>>,
}

impl SpatialHash {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: &Vector3<f64>) -> (i64, i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    fn has_neighbor_within(&self, p: &Vector3<f64>, dist: f64) -> bool {
        let (i, j, k) = self.key(p);
        for di in -1..=1 {
            for dj in -1..=1 {
                for dk in -1..=1 {
                    if let Some(pts) = self.cells.get(&(i + di, j + dj, k + dk)) {
                        if pts.iter().any(|q| (q - p).norm() < dist) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn insert(&mut self, p: Vector3<f64>) {
        let key = self.key(&p);
        self.cells.entry(key).or_default().push(p);
    }
}

/// Rejection-samples `count` uniform points in the source ball.
pub fn sample_source_grid(
    spec: &GridSampling,
    electrodes: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    if spec.count == 0 {
        return invalid("grid count must be at least 1");
    }
    if !(spec.min_separation >= 0.0) || !(spec.min_electrode_distance >= 0.0) {
        return invalid("distance constraints must be non-negative");
    }
    if !(spec.ball_radius > 0.0) {
        return invalid("ball radius must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = spec.ball_radius;
    let mut hash = (spec.min_separation > 0.0).then(|| SpatialHash::new(spec.min_separation));
    let mut out = Vec::with_capacity(spec.count);
    let mut sep_rejections = 0usize;
    let mut electrode_rejections = 0usize;
    let mut attempts = 0usize;
    while out.len() < spec.count {
        if attempts >= spec.max_attempts {
            let constraint = if electrode_rejections > sep_rejections {
                format!("min_electrode_distance = {} mm", spec.min_electrode_distance)
            } else {
                format!("min_separation = {} mm", spec.min_separation)
            };
            return Err(Error::Capacity {
                constraint,
                attempts,
            });
        }
        attempts += 1;
        let p = Vector3::new(
            rng.gen_range(-r..r),
            rng.gen_range(-r..r),
            rng.gen_range(-r..r),
        );
        if p.norm() >= r {
            continue;
        }
        if spec.min_electrode_distance > 0.0
            && electrodes
                .iter()
                .any(|e| (e - p).norm() < spec.min_electrode_distance)
        {
            electrode_rejections += 1;
            continue;
        }
        if let Some(h) = hash.as_mut() {
            if h.has_neighbor_within(&p, spec.min_separation) {
                sep_rejections += 1;
                continue;
            }
            h.insert(p);
        }
        out.push(p);
    }
    Ok(out)
}

pub fn min_pairwise_distance(points: &[Vector3<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

/// Smallest distance between a point of `a` and a point of `b`.
pub fn min_cross_distance(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter()
        .flat_map(|p| b.iter().map(move |q| (p - q).norm()))
        .fold(f64::INFINITY, f64::min)
}

fn kernel_block(electrodes: &[Vector3<f64>], r0: &Vector3<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    let mut block = DMatrix::zeros(electrodes.len(), 3);
    for (e, pos) in electrodes.iter().enumerate() {
        let d = pos - r0;
        let dist = d.norm();
        if dist < SINGULARITY_DISTANCE {
            return Err(Error::Singularity {
                electrode: e,
                distance: dist,
            });
        }
        let scale = 1.0 / (4.0 * PI * sigma * dist.powi(3));
        for c in 0..3 {
            block[(e, c)] = d[c] * scale;
        }
    }
    Ok(block)
}

/// Unreferenced potentials of the three unit dipoles at `r0`.
pub fn dipole_kernel(electrodes: &[Vector3<f64>], r0: &Vector3<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    kernel_block(electrodes, r0, sigma)
}

/// Average-referenced `m × 3` lead-field block of a dipole at `r0`.
pub fn dipole_lead_columns(
    electrodes: &[Vector3<f64>],
    r0: &Vector3<f64>,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    let mut block = kernel_block(electrodes, r0, sigma)?;
    let m = electrodes.len() as f64;
    for mut col in block.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
    }
    Ok(block)
}

/// Component-major lead field over the geometry's source positions.
pub fn build_lead_field(geometry: &HeadGeometry) -> Result<LeadField> {
    let m = geometry.electrode_positions.len();
    let p = geometry.source_positions.len();
    let mut a = DMatrix::zeros(m, 3 * p);
    for (j, r0) in geometry.source_positions.iter().enumerate() {
        let block = dipole_lead_columns(&geometry.electrode_positions, r0, geometry.conductivity)?;
        a.view_mut((0, 3 * j), (m, 3)).copy_from(&block);
    }
    LeadField::new(a, ColumnLayout::ComponentMajor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub noise_level: f64,
    pub noise_seed: u64,
}

impl MeasurementSet {
    pub fn clean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.clean)
    }

    pub fn noisy_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.noisy)
    }

    /// `‖noisy − clean‖`.
    pub fn noise_norm(&self) -> f64 {
        (self.noisy_vector() - self.clean_vector()).norm()
    }
}

/// Superposes the planted dipoles and adds white Gaussian noise with standard
/// deviation `noise_level · ‖clean‖ / √m`.
pub fn simulate_measurement(
    lead_field: &LeadField,
    sources: &[DipoleSource],
    noise_level: f64,
    rng_seed: u64,
) -> Result<MeasurementSet> {
    if sources.is_empty() {
        return invalid("at least one source is required");
    }
    if !(noise_level >= 0.0) {
        return invalid("noise level must be non-negative");
    }
    let groups = lead_field.groups();
    let m = lead_field.rows();
    let mut clean = DVector::zeros(m);
    for s in sources {
        if s.group_id >= groups.len() {
            return invalid(format!("source group {} not on the grid", s.group_id));
        }
        if s.moment.norm() == 0.0 {
            return invalid("planted dipole moment must be nonzero");
        }
        for (c, &col) in groups.group(s.group_id).iter().enumerate() {
            clean.axpy(s.moment[c], &lead_field.matrix.column(col), 1.0);
        }
    }
    let mut noisy = clean.clone();
    if noise_level > 0.0 {
        let std = noise_level * clean.norm() / (m as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for v in noisy.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += std * z;
        }
    }
    Ok(MeasurementSet {
        clean: clean.as_slice().to_vec(),
        noisy: noisy.as_slice().to_vec(),
        noise_level,
        noise_seed: rng_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(sources: Vec<Vector3<f64>>, electrodes: usize) -> HeadGeometry {
        HeadGeometry {
            scalp_radius: DEFAULT_SCALP_RADIUS,
            source_shell_fraction: DEFAULT_SOURCE_SHELL_FRACTION,
            conductivity: DEFAULT_CONDUCTIVITY,
            min_separation: DEFAULT_MIN_SEPARATION,
            electrode_positions: place_electrodes(electrodes, DEFAULT_SCALP_RADIUS).unwrap(),
            source_positions: sources,
        }
    }

    #[test]
    fn electrodes_on_sphere() {
        let pts = place_electrodes(4, 1.0).unwrap();
        assert_eq!(pts.len(), 4);
        for p in &pts {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        let pts = place_electrodes(64, 90.0).unwrap();
        assert!(min_pairwise_distance(&pts) > 0.0);
        assert_eq!(pts, place_electrodes(64, 90.0).unwrap());
        assert!(place_electrodes(3, 1.0).is_err());
    }

    #[test]
    fn grid_sampling() {
        let spec = GridSampling {
            count: 1,
            ball_radius: 10.0,
            min_separation: 0.0,
            min_electrode_distance: 0.0,
            seed: 1,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        };
        let one = sample_source_grid(&spec, &[]).unwrap();
        assert!(one[0].norm() < 10.0);

        let impossible = GridSampling {
            count: 2,
            min_separation: 40.0,
            max_attempts: 10_000,
            ..spec.clone()
        };
        match sample_source_grid(&impossible, &[]) {
            Err(Error::Capacity { constraint, .. }) => assert!(constraint.contains("min_separation")),
            other => panic!("expected capacity error, got {other:?}"),
        }

        let hundred = GridSampling {
            count: 100,
            ball_radius: 76.5,
            min_separation: 2.0,
            seed: 7,
            ..spec
        };
        let a = sample_source_grid(&hundred, &[]).unwrap();
        let b = sample_source_grid(&hundred, &[]).unwrap();
        assert_eq!(a, b);
        assert!(min_pairwise_distance(&a) >= 2.0);
    }

    #[test]
    fn electrode_clearance_respected() {
        let electrodes = place_electrodes(32, 90.0).unwrap();
        let spec = GridSampling {
            count: 200,
            ball_radius: 85.0,
            min_separation: 2.0,
            min_electrode_distance: 15.0,
            seed: 3,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        };
        let pts = sample_source_grid(&spec, &electrodes).unwrap();
        assert!(min_cross_distance(&pts, &electrodes) >= 15.0);
    }

    #[test]
    fn kernel_single_electrode() {
        let e = [Vector3::new(1.0, 0.0, 0.0)];
        let sigma = 1.0 / (4.0 * PI);
        let raw = dipole_kernel(&e, &Vector3::zeros(), sigma).unwrap();
        assert!((raw[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(raw[(0, 1)], 0.0);
        assert_eq!(raw[(0, 2)], 0.0);
        let referenced = dipole_lead_columns(&e, &Vector3::zeros(), sigma).unwrap();
        assert_eq!(referenced, DMatrix::zeros(1, 3));
    }

    #[test]
    fn kernel_radial_decay() {
        let sigma = DEFAULT_CONDUCTIVITY;
        let dir = Vector3::new(1.0, 2.0, -2.0).normalize();
        let near = dipole_kernel(&[dir * 10.0], &Vector3::zeros(), sigma).unwrap();
        let far = dipole_kernel(&[dir * 20.0], &Vector3::zeros(), sigma).unwrap();
        for c in 0..3 {
            assert!((far[(0, c)] - near[(0, c)] / 4.0).abs() <= 1e-15 * near[(0, c)].abs().max(1e-300));
        }
    }

    #[test]
    fn kernel_singularity() {
        let e = [Vector3::new(1.0, 0.0, 0.0)];
        assert!(matches!(
            dipole_lead_columns(&e, &e[0], 1.0),
            Err(Error::Singularity { electrode: 0, .. })
        ));
    }

    #[test]
    fn lead_field_shape_and_reference() {
        let g = geometry(vec![Vector3::new(0.0, 0.0, 10.0), Vector3::new(20.0, 0.0, 0.0)], 8);
        let lf = build_lead_field(&g).unwrap();
        assert_eq!((lf.rows(), lf.cols()), (8, 6));
        for col in lf.matrix.column_iter() {
            assert!(col.sum().abs() < 1e-12 * col.norm());
        }
    }

    #[test]
    fn noiseless_measurement_is_clean() {
        let g = geometry(vec![Vector3::new(0.0, 0.0, 30.0)], 16);
        let lf = build_lead_field(&g).unwrap();
        let s = DipoleSource::new(g.source_positions[0], Vector3::new(0.0, 1.0, 0.0), 0).unwrap();
        let meas = simulate_measurement(&lf, &[s], 0.0, 5).unwrap();
        assert_eq!(meas.clean, meas.noisy);
        assert!(simulate_measurement(&lf, &[], 0.0, 5).is_err());
    }
}
