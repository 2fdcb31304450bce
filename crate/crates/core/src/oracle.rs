use crate::jet::Jet2;

/// Closed-form solution of a benchmark, field by field.
///
/// Jets are taken with respect to physical coordinates and carry physical units.
pub trait ExactFields: Sync {
    fn field_names(&self) -> &'static [&'static str];

    /// Jets of every field at `point`; any order in `0..=4`.
    fn jets(&self, point: [f64; 2], order: usize) -> Vec<Jet2>;

    fn values(&self, point: [f64; 2]) -> Vec<f64> {
        self.jets(point, 0).iter().map(Jet2::value).collect()
    }
}

/// Coordinate seed jets for internal oracle evaluation (orders 0 through 4).
pub(crate) fn seeds(point: [f64; 2], order: usize) -> (Jet2, Jet2) {
    (Jet2::seed_unchecked(point[0], 0, order), Jet2::seed_unchecked(point[1], 1, order))
}

pub(crate) fn constant(value: f64, order: usize) -> Jet2 {
    Jet2::constant_unchecked(value, order)
}
