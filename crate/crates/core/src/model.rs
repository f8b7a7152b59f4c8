//! Constellations, measurements and random scenario generation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on station re-draws in [`generate_scenario`].
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

/// A position in 2-D or 3-D space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("a point needs at least one coordinate"));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {c}")));
        }
        Ok(Point(coords))
    }

    /// Builds a point without validation. Callers guarantee finite coordinates.
    pub(crate) fn from_vec(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Point(vec![x, y])
    }

    pub fn xyz(x: f64, y: f64, z: f64) -> Self {
        Point(vec![x, y, z])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// Returns `self + offset`, component-wise.
    pub fn translated(&self, offset: &[f64]) -> Point {
        Point(self.0.iter().zip(offset).map(|(a, b)| a + b).collect())
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

/// Squared Euclidean distance between two coordinate slices of equal length.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean_distance(p: &Point, q: &Point) -> Result<f64> {
    q.check_dim(p.dim())?;
    Ok(squared_distance(p.coords(), q.coords()).sqrt())
}

/// Known base stations plus the ground-truth transponder position.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    dim: usize,
    stations: Vec<Point>,
    truth: Point,
}

impl Scenario {
    pub fn new(dim: usize, stations: Vec<Point>, truth: Point) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::invalid(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if stations.len() < 3 {
            return Err(Error::invalid(format!(
                "at least 3 stations are required, got {}",
                stations.len()
            )));
        }
        for p in stations.iter().chain(std::iter::once(&truth)) {
            p.check_dim(dim)?;
        }
        Ok(Scenario {
            dim,
            stations,
            truth,
        })
    }

    /// The three-station constellation with stations at (0.5, 0), (0, 2),
    /// (0, -2) and the transponder at (1, 0). Plain range minimisation from
    /// (2, -1) gets stuck in the local minimum at the origin.
    pub fn demo_2d() -> Self {
        Scenario {
            dim: 2,
            stations: vec![
                Point::xy(0.5, 0.0),
                Point::xy(0.0, 2.0),
                Point::xy(0.0, -2.0),
            ],
            truth: Point::xy(1.0, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stations(&self) -> &[Point] {
        &self.stations
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn truth(&self) -> &Point {
        &self.truth
    }

    /// Shifts every station and the truth by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Scenario> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: offset.len(),
            });
        }
        Ok(Scenario {
            dim: self.dim,
            stations: self.stations.iter().map(|s| s.translated(offset)).collect(),
            truth: self.truth.translated(offset),
        })
    }
}

/// Distances from the truth to every station, in station order.
pub fn true_ranges(s: &Scenario) -> Vec<f64> {
    s.stations
        .iter()
        .map(|b| squared_distance(s.truth.coords(), b.coords()).sqrt())
        .collect()
}

/// Measured ranges `d_i + e_i` together with the noise-free ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    ranges: Vec<f64>,
    sigma: f64,
    true_ranges: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(ranges: Vec<f64>, true_ranges: Vec<f64>, sigma: f64) -> Result<Self> {
        if ranges.len() != true_ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: true_ranges.len(),
                actual: ranges.len(),
            });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        if true_ranges.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid("true ranges must be finite and >= 0"));
        }
        if ranges.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("measured ranges must be finite"));
        }
        Ok(MeasurementSet {
            ranges,
            sigma,
            true_ranges,
        })
    }

    /// Noise-free measurements of `s`.
    pub fn exact(s: &Scenario) -> Self {
        let d = true_ranges(s);
        MeasurementSet {
            ranges: d.clone(),
            sigma: 0.0,
            true_ranges: d,
        }
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn true_ranges(&self) -> &[f64] {
        &self.true_ranges
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Adds `offset` to every measured range. Used to probe the curvature
    /// indicator with inflated or shrunk measurements.
    pub fn with_range_offset(&self, offset: f64) -> Self {
        MeasurementSet {
            ranges: self.ranges.iter().map(|d| d + offset).collect(),
            sigma: self.sigma,
            true_ranges: self.true_ranges.clone(),
        }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.ranges.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.ranges.len(),
            });
        }
        Ok(())
    }
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma` to each range.
///
/// One standard normal draw is consumed per range regardless of `sigma`, so
/// the same random stream yields the same noise pattern scaled by `sigma`.
/// Ranges are not truncated at zero.
pub fn apply_noise<R: Rng + ?Sized>(
    true_ranges: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<MeasurementSet> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let ranges = true_ranges
        .iter()
        .map(|d| {
            let z: f64 = rng.sample(StandardNormal);
            d + sigma * z
        })
        .collect();
    MeasurementSet::new(ranges, true_ranges.to_vec(), sigma)
}

/// Rejects near-collinear (or near-coplanar) station constellations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFilter {
    pub min_normalized_singular_value: f64,
}

impl GeometryFilter {
    pub fn new(min_normalized_singular_value: f64) -> Result<Self> {
        let t = min_normalized_singular_value;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::invalid(format!(
                "geometry threshold must lie in (0, 1), got {t}"
            )));
        }
        Ok(GeometryFilter {
            min_normalized_singular_value: t,
        })
    }
}

impl Default for GeometryFilter {
    fn default() -> Self {
        GeometryFilter {
            min_normalized_singular_value: 0.1,
        }
    }
}

/// Singular values of the population covariance of the station coordinates,
/// divided by the largest one and sorted in descending order.
///
/// Returns `None` for fewer than two stations, mixed dimensions, or a zero
/// covariance (all stations identical).
pub fn normalized_singular_values(stations: &[Point]) -> Option<Vec<f64>> {
    let n = stations.len();
    if n < 2 {
        return None;
    }
    let dim = stations[0].dim();
    if stations.iter().any(|p| p.dim() != dim) {
        return None;
    }
    let mut mean = vec![0.0; dim];
    for p in stations {
        for (m, c) in mean.iter_mut().zip(p.coords()) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for p in stations {
        for i in 0..dim {
            let di = p.coords()[i] - mean[i];
            for j in 0..dim {
                cov[(i, j)] += di * (p.coords()[j] - mean[j]);
            }
        }
    }
    cov /= n as f64;

    let mut sv: Vec<f64> = cov.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let largest = sv[0];
    if largest.is_nan() || largest <= 0.0 {
        return None;
    }
    Some(sv.into_iter().map(|s| s / largest).collect())
}

/// True iff every normalized singular value of the station covariance
/// exceeds the filter threshold.
pub fn geometry_ok(stations: &[Point], filter: &GeometryFilter) -> bool {
    match normalized_singular_values(stations) {
        Some(sv) => sv.iter().all(|&s| s > filter.min_normalized_singular_value),
        None => false,
    }
}

/// Random scenario generator: truth and stations uniform in `[0, cube_side]^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGenerator {
    pub dim: usize,
    pub n_stations: usize,
    pub cube_side: f64,
    pub filter: Option<GeometryFilter>,
    pub max_attempts: usize,
}

impl ScenarioGenerator {
    pub fn new(dim: usize, n_stations: usize, cube_side: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::invalid(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if n_stations < dim + 1 || n_stations < 3 {
            return Err(Error::invalid(format!(
                "need at least {} stations in {dim}-D, got {n_stations}",
                (dim + 1).max(3)
            )));
        }
        if !(cube_side.is_finite() && cube_side > 0.0) {
            return Err(Error::invalid(format!(
                "cube side must be > 0, got {cube_side}"
            )));
        }
        Ok(ScenarioGenerator {
            dim,
            n_stations,
            cube_side,
            filter: Some(GeometryFilter::default()),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        })
    }

    pub fn with_filter(mut self, filter: Option<GeometryFilter>) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_max_attempts(mut self, max_attempts: usize) -> Self {
        self.max_attempts = max_attempts;
        self
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::from_vec(
            (0..self.dim)
                .map(|_| rng.random_range(0.0..=self.cube_side))
                .collect(),
        )
    }

    /// Draws the truth once, then re-draws the station set until it passes
    /// the filter or `max_attempts` sets have been rejected.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Scenario> {
        let truth = self.uniform_point(rng);
        for _ in 0..self.max_attempts.max(1) {
            let stations: Vec<Point> = (0..self.n_stations)
                .map(|_| self.uniform_point(rng))
                .collect();
            let accepted = match &self.filter {
                Some(f) => geometry_ok(&stations, f),
                None => true,
            };
            if accepted {
                return Scenario::new(self.dim, stations, truth);
            }
        }
        Err(Error::GenerationFailed {
            attempts: self.max_attempts.max(1),
        })
    }
}

/// Convenience wrapper around [`ScenarioGenerator`] with the default attempt cap.
pub fn generate_scenario<R: Rng + ?Sized>(
    dim: usize,
    n_stations: usize,
    cube_side: f64,
    filter: &GeometryFilter,
    rng: &mut R,
) -> Result<Scenario> {
    ScenarioGenerator::new(dim, n_stations, cube_side)?
        .with_filter(Some(*filter))
        .generate(rng)
}

/// Flat JSON document holding a scenario and its measurements, sufficient to
/// replay a solve bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub dim: usize,
    pub stations: Vec<Point>,
    pub truth: Point,
    pub ranges: Vec<f64>,
    pub true_ranges: Vec<f64>,
    pub sigma: f64,
}

impl ScenarioRecord {
    pub fn new(s: &Scenario, m: &MeasurementSet) -> Self {
        ScenarioRecord {
            dim: s.dim,
            stations: s.stations.clone(),
            truth: s.truth.clone(),
            ranges: m.ranges.clone(),
            true_ranges: m.true_ranges.clone(),
            sigma: m.sigma,
        }
    }

    /// Validates the record and splits it into scenario and measurements.
    pub fn into_parts(self) -> Result<(Scenario, MeasurementSet)> {
        for p in self.stations.iter().chain(std::iter::once(&self.truth)) {
            Point::new(p.coords().to_vec())?;
        }
        let s = Scenario::new(self.dim, self.stations, self.truth)?;
        let m = MeasurementSet::new(self.ranges, self.true_ranges, self.sigma)?;
        m.check_len(s.n_stations())?;
        Ok((s, m))
    }
}
