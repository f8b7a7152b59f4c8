//! Fixtures shared by the benchmarks in `benches/`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use toalift::model::ScenarioGenerator;
use toalift::{apply_noise, true_ranges, GeometryFilter, MeasurementSet, Point, Scenario};

pub struct Fixture {
    pub scenario: Scenario,
    pub measurement: MeasurementSet,
    pub x0: Point,
}

/// The three-station demo, noiseless, started at (2, -1).
pub fn demo() -> Fixture {
    let scenario = Scenario::demo_2d();
    let measurement = MeasurementSet::exact(&scenario);
    Fixture {
        scenario,
        measurement,
        x0: Point::xy(2.0, -1.0),
    }
}

/// Filtered 2-D constellations in a cube of side 10 with noisy ranges and a
/// uniform initial estimate.
pub fn random(count: usize, n_stations: usize, sigma: f64, seed: u64) -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = ScenarioGenerator::new(2, n_stations, 10.0)
        .expect("valid generator")
        .with_filter(Some(GeometryFilter::default()));
    (0..count)
        .map(|_| {
            let scenario = generator.generate(&mut rng).expect("constellation");
            let measurement =
                apply_noise(&true_ranges(&scenario), sigma, &mut rng).expect("sigma >= 0");
            let x0 = generator.uniform_point(&mut rng);
            Fixture {
                scenario,
                measurement,
                x0,
            }
        })
        .collect()
}
