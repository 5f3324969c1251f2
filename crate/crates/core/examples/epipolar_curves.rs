//! Sweep the epipolar curve of a SAR pixel through the optical image, check
//! how straight it is and compare the optical-to-SAR direction with the
//! closed form.

use sarstereo::epipolar::{
    closed_form_deviation, closed_form_for_optical_pixel, conjugacy, straightness, sweep_curve, SourceImage,
};
use sarstereo::geometry::ImagePoint;
use sarstereo::simulate::{make_sensors_for, Footprint, SensorPairSpec};

fn main() -> sarstereo::Result<()> {
    let area = Footprint {
        half_extent: 2500.0,
        ground_height: 500.0,
        h_min: 0.0,
        h_max: 1200.0,
    };
    let s = make_sensors_for(&SensorPairSpec::munich(), &area)?;
    let p = ImagePoint::new(0.5 * s.sar.lines as f64, 0.5 * s.sar.samples as f64);
    let curve = sweep_curve(&s.sar, &s.optical, &p, 0.0, 1200.0, 100.0, SourceImage::Sar)?;
    println!("SAR pixel ({:.1}, {:.1}) in the optical image:", p.row, p.col);
    println!("{:>6} {:>10} {:>10}", "h", "row", "col");
    for c in &curve.samples {
        println!("{:>6.0} {:>10.3} {:>10.3}", c.h, c.row, c.col);
    }
    let dense = sweep_curve(&s.sar, &s.optical, &p, 0.0, 1200.0, 10.0, SourceImage::Sar)?;
    let st = straightness(&dense)?;
    println!(
        "line fit max residual {:.4} px, parabola {:.2e} px",
        st.linear_max_abs, st.quadratic_max_abs
    );

    let q1 = dense.samples[20].point();
    let q2 = dense.samples[100].point();
    let conj = conjugacy(&s.sar, &s.optical, &dense, &q1, &q2, 0.0, 1200.0, 10.0)?;
    println!(
        "back-curves of two conjugates: offset {:.4} px, slope difference {:.2e}",
        conj.max_col_diff, conj.max_gradient_diff
    );

    let po = ImagePoint::new(0.5 * s.optical.lines as f64, 0.5 * s.optical.samples as f64);
    let cf = closed_form_for_optical_pixel(&s.optical, &s.sar, &po)?;
    let back = sweep_curve(&s.optical, &s.sar, &po, 0.0, 1200.0, 10.0, SourceImage::Optical)?;
    println!(
        "optical pixel into SAR: closed form vs sweep {:.2e} px, vertex at row {:.1}",
        closed_form_deviation(&cf, &back)?,
        cf.vertex_row()
    );
    Ok(())
}
