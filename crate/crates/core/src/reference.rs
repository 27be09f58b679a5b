//! Published reference numbers: theoretical violations, the top of the
//! `d = 11` spectrum, measured `S_d` series and the measured filter.

/// `(d, <psi|S_d|psi> for the maximally entangled state, largest eigenvalue)`.
pub const MAX_ENTANGLED_AND_MAXIMAL: [(usize, f64, f64); 13] = [
    (2, 2.8284, 2.8284),
    (3, 2.8729, 2.9149),
    (4, 2.8962, 2.9727),
    (5, 2.9105, 3.0157),
    (6, 2.9202, 3.0497),
    (7, 2.9272, 3.0776),
    (8, 2.9324, 3.1013),
    (9, 2.9365, 3.1217),
    (10, 2.9398, 3.1396),
    (11, 2.9425, 3.1555),
    (12, 2.9448, 3.1698),
    (13, 2.9467, 3.1827),
    (14, 2.9483, 3.1946),
];

/// Five largest eigenvalues of the `d = 11` operator.
pub const TOP_EIGENVALUES_D11: [f64; 5] = [3.1555, 2.4107, 2.4107, 1.9709, 1.9709];

/// A measured `S_d` series for `d = 2..=14`: `(d, S_d, sigma)`.
pub type MeasuredSeries = [(usize, f64, f64); 13];

/// All radial modes, with Procrustean filtering.
pub const MEASURED_ALL_P_FILTERED: MeasuredSeries = [
    (2, 2.79, 0.03),
    (3, 2.78, 0.04),
    (4, 2.87, 0.04),
    (5, 2.73, 0.05),
    (6, 2.76, 0.06),
    (7, 2.62, 0.07),
    (8, 2.56, 0.07),
    (9, 2.46, 0.07),
    (10, 2.47, 0.07),
    (11, 2.39, 0.07),
    (12, 2.24, 0.08),
    (13, 2.07, 0.08),
    (14, 1.89, 0.08),
];

/// Radial index `p = 0` only, with Procrustean filtering.
pub const MEASURED_P0_FILTERED: MeasuredSeries = [
    (2, 2.45, 0.09),
    (3, 2.4, 0.1),
    (4, 2.67, 0.11),
    (5, 2.46, 0.12),
    (6, 2.79, 0.14),
    (7, 2.71, 0.14),
    (8, 2.65, 0.16),
    (9, 2.7, 0.2),
    (10, 2.54, 0.21),
    (11, 2.67, 0.22),
    (12, 2.1, 0.2),
    (13, 2.11, 0.22),
    (14, 1.69, 0.24),
];

/// All radial modes, no filtering.
pub const MEASURED_ALL_P_UNFILTERED: MeasuredSeries = [
    (2, 2.76, 0.03),
    (3, 2.77, 0.04),
    (4, 2.71, 0.04),
    (5, 2.69, 0.05),
    (6, 2.53, 0.05),
    (7, 2.49, 0.06),
    (8, 2.31, 0.06),
    (9, 2.19, 0.07),
    (10, 1.95, 0.07),
    (11, 2.05, 0.07),
    (12, 1.75, 0.07),
    (13, 1.65, 0.07),
    (14, 1.32, 0.07),
];

/// Spiral bandwidth (HWHM of the amplitude Lorentzian) of the source.
pub const SOURCE_GAMMA: f64 = 7.58;

/// Per-arm filter diagonal used in the `d = 11` experiments, `l = -5..=5`.
pub const MEASURED_FILTER_D11: [f64; 11] = [
    1.00, 0.97, 0.94, 0.92, 0.91, 0.90, 0.91, 0.92, 0.93, 0.95, 0.97,
];

/// Upper bound on `S_11` for at most 10-dimensional entanglement, as published.
pub const PUBLISHED_WITNESS_BOUND: f64 = 2.14;

/// Measured `S_11` with all radial modes.
pub const MEASURED_S11_ALL_P: (f64, f64) = (2.39, 0.07);
/// Measured `S_11` with `p = 0` only.
pub const MEASURED_S11_P0: (f64, f64) = (2.67, 0.22);

/// Integration time per setting, seconds.
pub const INTEGRATION_TIME_S: f64 = 20.0;

/// Fraction of coincidences landing on neighbouring, non-conserving modes.
pub const CROSSTALK_FRACTION: f64 = 0.08;

pub fn measured_entry(series: &MeasuredSeries, d: usize) -> Option<(f64, f64)> {
    series
        .iter()
        .find(|(dd, _, _)| *dd == d)
        .map(|&(_, s, sigma)| (s, sigma))
}
