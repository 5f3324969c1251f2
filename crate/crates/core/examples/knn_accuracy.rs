//! Plane-fit accuracy of a noisy cloud against a reference surface, before
//! and after DEM filtering of injected outliers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sarstereo::eval::{cloud_accuracy, srtm_filter, Dem, Octree, DEFAULT_K, DEFAULT_LEAF_CAPACITY};
use sarstereo::geometry::GroundPoint;
use sarstereo::triangulate::PointCloud;

fn surface(x: f64, y: f64) -> f64 {
    500.0 + 0.05 * x + if x.abs() < 20.0 && y.abs() < 15.0 { 12.0 } else { 0.0 }
}

fn main() -> sarstereo::Result<()> {
    let reference = PointCloud::from_positions(
        (0..200)
            .flat_map(|i| (0..200).map(move |j| (i as f64 * 0.5 - 50.0, j as f64 * 0.5 - 50.0)))
            .map(|(x, y)| GroundPoint::new(x, y, surface(x, y))),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let cloud = PointCloud::from_positions((0..20_000).map(|_| {
        let (x, y) = (rng.random_range(-48.0..48.0), rng.random_range(-48.0..48.0));
        let lift = if rng.random_bool(0.1) { 50.0 } else { 0.0 };
        GroundPoint::new(x, y, surface(x, y) + noise.sample(&mut rng) + lift)
    }));

    let tree = Octree::new(&reference.positions(), DEFAULT_LEAF_CAPACITY)?;
    let near = tree.knn(&GroundPoint::new(0.3, 0.2, 512.4), DEFAULT_K)?;
    println!(
        "{} leaves; nearest reference point to the roof center at {:.3} m",
        tree.leaves().len(),
        near[0].distance
    );

    let raw = cloud_accuracy(&cloud, &reference, DEFAULT_K)?;
    let heights: Vec<f64> = (0..21)
        .flat_map(|j| (0..21).map(move |i| (i as f64 * 5.0 - 50.0, j as f64 * 5.0 - 50.0)))
        .map(|(x, y)| surface(x, y))
        .collect();
    let dem = Dem::new(-50.0, -50.0, 5.0, 21, 21, heights)?;
    let (kept, report) = srtm_filter(&cloud, &dem, 5.0);
    let filtered = cloud_accuracy(&kept, &reference, DEFAULT_K)?;
    for (name, r) in [("raw", &raw), ("filtered", &filtered)] {
        println!(
            "{name:>8}: n {:>5} median {:.3} m q25 {:.3} m q75 {:.3} m",
            r.n_points, r.median, r.q25, r.q75
        );
    }
    println!(
        "filter kept {} removed {} outside {}",
        report.kept, report.removed, report.outside
    );
    Ok(())
}
