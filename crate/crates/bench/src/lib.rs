//! Fixtures shared by the criterion benches.

use refloc::instances::{embedded_dataset, generate_random};
use refloc::{DemandPoint, Hyperplane, LocationInstance, NormSpec, PathQuery};

/// The bundled 18-point planar instance, with `1/4 linf` on the line.
pub fn parlar18() -> LocationInstance {
    embedded_dataset("parlar18")
        .and_then(|f| f.to_instance())
        .expect("bundled data set")
        .with_transit(NormSpec::linf().with_scale(0.25).expect("positive scale"))
}

pub fn random(n: usize, d: usize, seed: u64) -> LocationInstance {
    generate_random(n, d, seed)
        .and_then(|f| f.to_instance())
        .expect("random instance")
}

/// A point pair across `y = 1.5x` with l2 above and l3 below.
pub fn cross_query() -> PathQuery {
    let h = Hyperplane::line_through_origin(1.5).expect("finite slope");
    PathQuery::new(
        h,
        DemandPoint::unit(vec![2.0, 8.0]),
        DemandPoint::unit(vec![14.0, 4.0]),
        NormSpec::l2(),
        NormSpec::lp(3, 1).expect("valid exponent"),
    )
}
