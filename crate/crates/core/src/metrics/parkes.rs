//! Parkes (consensus) error grid for type 1 diabetes.
//!
//! Zone boundaries are polylines in (reference, predicted) mg/dL space. A
//! point belongs to the innermost zone whose lower and upper boundaries
//! enclose it; points on a boundary belong to the inner zone. Segments are
//! extended linearly past their last vertex. There is no zone E below the
//! diagonal in the type 1 grid.

use super::Zone;

type Polyline = &'static [(f64, f64)];

const A_UPPER: Polyline = &[(0.0, 50.0), (30.0, 50.0), (140.0, 170.0), (280.0, 380.0), (430.0, 550.0)];
const A_LOWER: Polyline = &[(50.0, 0.0), (50.0, 30.0), (170.0, 145.0), (385.0, 300.0), (550.0, 450.0)];
const B_UPPER: Polyline = &[(0.0, 60.0), (30.0, 60.0), (50.0, 80.0), (70.0, 110.0), (260.0, 550.0)];
const B_LOWER: Polyline = &[(120.0, 0.0), (120.0, 30.0), (260.0, 130.0), (550.0, 250.0)];
const C_UPPER: Polyline = &[(0.0, 100.0), (25.0, 100.0), (50.0, 125.0), (80.0, 215.0), (125.0, 550.0)];
const C_LOWER: Polyline = &[(250.0, 0.0), (250.0, 40.0), (550.0, 150.0)];
const D_UPPER: Polyline = &[(0.0, 150.0), (35.0, 155.0), (50.0, 550.0)];

/// Boundary height at `x`; `None` left of the first vertex.
fn height(line: Polyline, x: f64) -> Option<f64> {
    let (x0, y0) = line[0];
    if x < x0 {
        return None;
    }
    if x == x0 {
        // on a leading vertical segment the whole segment is boundary
        return Some(line.iter().take_while(|(vx, _)| *vx == x0).map(|v| v.1).fold(y0, f64::min));
    }
    for w in line.windows(2) {
        let ((xa, ya), (xb, yb)) = (w[0], w[1]);
        if xb > xa && x <= xb {
            return Some(ya + (yb - ya) * (x - xa) / (xb - xa));
        }
    }
    let ((xa, ya), (xb, yb)) = (line[line.len() - 2], line[line.len() - 1]);
    Some(yb + (yb - ya) * (x - xb) / (xb - xa))
}

fn inside(lower: Option<Polyline>, upper: Polyline, r: f64, p: f64) -> bool {
    let below_upper = height(upper, r).map_or(true, |u| p <= u);
    let above_lower = match lower {
        None => true,
        Some(l) => height(l, r).map_or(true, |h| p >= h),
    };
    below_upper && above_lower
}

pub fn parkes_zone(reference: f64, predicted: f64) -> Zone {
    let (r, p) = (reference, predicted);
    if inside(Some(A_LOWER), A_UPPER, r, p) {
        Zone::A
    } else if inside(Some(B_LOWER), B_UPPER, r, p) {
        Zone::B
    } else if inside(Some(C_LOWER), C_UPPER, r, p) {
        Zone::C
    } else if inside(None, D_UPPER, r, p) {
        Zone::D
    } else {
        Zone::E
    }
}
