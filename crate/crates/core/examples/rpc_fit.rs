//! Fit terrain-independent RPCs to both rigorous models and report the
//! checkpoint accuracy for a few grid densities.

use std::time::Instant;

use sarstereo::rpc::{fit_rpc, GroundExtent, VgcpGrid, DEFAULT_RIDGE};
use sarstereo::simulate::{make_sensors_for, Footprint, SensorPairSpec};

fn main() -> sarstereo::Result<()> {
    let area = Footprint {
        half_extent: 2500.0,
        ground_height: 500.0,
        h_min: 0.0,
        h_max: 1200.0,
    };
    let extent = GroundExtent {
        x_min: -2500.0,
        x_max: 2500.0,
        y_min: -2500.0,
        y_max: 2500.0,
        h_min: 0.0,
        h_max: 1200.0,
    };
    for (name, spec) in [
        ("munich", SensorPairSpec::munich()),
        ("berlin", SensorPairSpec::berlin()),
    ] {
        let sensors = make_sensors_for(&spec, &area)?;
        for n in [6, 10, 20] {
            let grid = VgcpGrid::new(n, n, 5, extent)?;
            let t = Instant::now();
            let (sar, rs) = fit_rpc(&sensors.sar, &grid, DEFAULT_RIDGE)?;
            let (opt, ro) = fit_rpc(&sensors.optical, &grid, DEFAULT_RIDGE)?;
            println!(
                "{name} {n:>2}x{n:<2}x5  SAR chk {:.1e}/{:.1e} px  optical chk {:.1e}/{:.1e} px  \
                 min denominator {:.3}/{:.3}  ({:.0?})",
                rs.chk_std_row,
                rs.chk_std_col,
                ro.chk_std_row,
                ro.chk_std_col,
                sar.min_forward_denominator(21),
                opt.min_forward_denominator(21),
                t.elapsed()
            );
        }
    }
    Ok(())
}
