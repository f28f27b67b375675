//! Clarke error grid, rule-set operationalization. Rules are checked in
//! order and the first match wins.

use super::Zone;

pub fn clarke_zone(reference: f64, predicted: f64) -> Zone {
    let (r, p) = (reference, predicted);
    if 5.0 * (p - r).abs() <= r || (r < 70.0 && p < 70.0) {
        Zone::A
    } else if (r >= 180.0 && p <= 70.0) || (r <= 70.0 && p >= 180.0) {
        Zone::E
    } else if ((70.0..=290.0).contains(&r) && p >= r + 110.0)
        || ((130.0..=180.0).contains(&r) && p <= 7.0 * r / 5.0 - 182.0)
    {
        Zone::C
    } else if (r >= 240.0 && (70.0..=180.0).contains(&p)) || (r <= 70.0 && (70.0..=180.0).contains(&p)) {
        Zone::D
    } else {
        Zone::B
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_checks() {
        assert_eq!(clarke_zone(100.0, 100.0), Zone::A);
        assert_eq!(clarke_zone(100.0, 115.0), Zone::A);
        assert_eq!(clarke_zone(200.0, 60.0), Zone::E);
        assert_eq!(clarke_zone(60.0, 200.0), Zone::E);
        assert_eq!(clarke_zone(100.0, 250.0), Zone::C);
        assert_eq!(clarke_zone(300.0, 120.0), Zone::D);
        assert_eq!(clarke_zone(50.0, 100.0), Zone::D);
        assert_eq!(clarke_zone(100.0, 140.0), Zone::B);
    }
}
