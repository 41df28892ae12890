const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance between two `(lat, lon)` points in degrees.
pub fn haversine_km(p: (f64, f64), q: (f64, f64)) -> f64 {
    let (lat1, lon1) = (p.0.to_radians(), p.1.to_radians());
    let (lat2, lon2) = (q.0.to_radians(), q.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: chord length between unit vectors, then arc.
    fn chord_oracle(p: (f64, f64), q: (f64, f64)) -> f64 {
        let v = |(lat, lon): (f64, f64)| {
            let (la, lo) = (f64::to_radians(lat), f64::to_radians(lon));
            [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
        };
        let (a, b) = (v(p), v(q));
        let chord = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        2.0 * EARTH_RADIUS_KM * (chord / 2.0).asin()
    }

    #[test]
    fn identity_is_zero() {
        assert_eq!(haversine_km((39.9, 116.4), (39.9, 116.4)), 0.0);
    }

    #[test]
    fn beijing_tianjin() {
        let p = (39.9042, 116.4074);
        let q = (39.3434, 117.3616);
        let oracle = chord_oracle(p, q);
        assert!((oracle - 103.0).abs() <= 1.0, "oracle {oracle}");
        assert!((haversine_km(p, q) - 103.0).abs() <= 1.0);
        assert!((haversine_km(p, q) - oracle).abs() < 1e-6);
    }

    #[test]
    fn antipodal() {
        let d = haversine_km((10.0, 20.0), (-10.0, -160.0));
        assert!((d - std::f64::consts::PI * 6371.0).abs() < 0.1, "{d}");
        assert!((d - 20015.1).abs() < 0.1);
    }

    fn coord() -> impl Strategy<Value = (f64, f64)> {
        (-90.0..=90.0f64, -180.0..=180.0f64)
    }

    proptest! {
        #[test]
        fn symmetric_and_triangle(p in coord(), q in coord(), r in coord()) {
            let pq = haversine_km(p, q);
            prop_assert!((pq - haversine_km(q, p)).abs() <= 1e-9);
            prop_assert!(pq <= haversine_km(p, r) + haversine_km(r, q) + 1e-9);
        }
    }
}
