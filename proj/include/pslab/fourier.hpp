#pragma once

// Fourier side: transforms of atomic measures, envelope decay fits, oscillatory integrals,
// Hopf coordinates on T^1 H^d, the product form of the equilibrium state and the
// chart / phase estimators of lower Fourier dimensions.

#include "pslab/potential.hpp"
#include "pslab/psdensity.hpp"

#include "json.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace pslab {

using Complex = std::complex<double>;

/// Atomic measure on R^k, k = 1, 2 or 3.
struct PointMeasure {
    int dim = 1;
    std::vector<double> coords;  // dim entries per atom
    std::vector<double> weights;
    std::string provenance;

    std::size_t size() const { return weights.size(); }
    double total_mass() const;
    Vec point(std::size_t i) const;
    void add(const Vec& x, double w);
};

/// Boundary atoms as points of R^d (the sphere sits in its ambient space).
PointMeasure embed(const DiscreteBoundaryMeasure& mu);

/// sum_j w_j exp(-2 pi i xi . x_j).
Complex fourier_transform(const PointMeasure& mu, const Vec& xi);
Complex fourier_transform(const DiscreteBoundaryMeasure& mu, const Vec& xi);

struct DecayBand {
    double lo, hi;    // |xi| range of the band
    double center;    // geometric mean, the abscissa of the fit
    double envelope;  // max |transform| over the band's samples
};

struct DecayReport {
    std::vector<DecayBand> bands;  // bands entering the fit
    double fitted_exponent = 0.0;  // alpha with envelope ~ |xi|^(-alpha/2)
    double exponent_stderr = 0.0;
    double fit_residual = 0.0;     // rms of the log-envelope residuals
    double intercept = 0.0;        // of log envelope against log |xi|
    double xi_min = 0.0, xi_max = 0.0;
    double resolution_limit = 0.0;  // atomic cutoff when known, 0 otherwise
    int dim = 1;
    int directions = 0;
    int radii_per_band = 0;
    bool truncated = false;
    std::vector<std::string> warnings;

    /// Two standard errors of the exponent plus the fit residual.
    double slack() const { return 2.0 * exponent_stderr + fit_residual; }
};

struct DecayOptions {
    int directions = 32;      // half circle in R^2, Fibonacci sphere in R^3; R uses +-1
    int radii_per_band = 8;   // geometric within each dyadic band
    double noise_floor = 1e-13;
};

using Transform = std::function<Complex(const Vec&)>;

/// Sample directions for a dyadic shell.
std::vector<Vec> frequency_directions(int dim, int count);

/// Envelope fit on the dyadic bands [xi_min 2^b, xi_min 2^(b+1)) inside [xi_min, xi_max].
/// Requires xi_max / xi_min >= 64. Bands whose envelope falls below the noise floor end the
/// fitted range (warning). Throws InsufficientDataError when fewer than three bands remain.
DecayReport decay_fit(const Transform& f, int dim, double xi_min, double xi_max, const DecayOptions& o = {});
DecayReport decay_fit(const PointMeasure& mu, double xi_min, double xi_max, const DecayOptions& o = {});
DecayReport decay_fit(const DiscreteBoundaryMeasure& mu, double xi_min, double xi_max, const DecayOptions& o = {});

struct AtomicScale {
    double min_gap;            // smallest nearest-neighbour chord
    double max_gap;            // largest nearest-neighbour chord
    double cutoff;             // 1 / (2 pi max_gap): below it the atoms resolve the measure
    double stall_frequency;    // 1 / min_gap: beyond it an atomic transform cannot decay
    double random_phase_floor; // sqrt(sum w^2)
};

/// Nearest-neighbour gaps by angle sorting (d = 2) or brute force (d = 3, up to 20000 atoms).
AtomicScale atomic_scale(const DiscreteBoundaryMeasure& mu);
/// decay_fit over [xi_min, atomic cutoff], the cutoff recorded in the report.
DecayReport resolved_decay_fit(const DiscreteBoundaryMeasure& mu, double xi_min, const DecayOptions& o = {});

using BoundaryFunction = std::function<double(const BoundaryPoint&)>;

struct OscillatoryValue {
    Complex value;
    double min_phase_derivative;  // inf over the bump support of the tangential gradient
    bool hypothesis_ok;
    std::string warning;
};

/// sum_j w_j chi(x_j) exp(i s phi(x_j)). The phase derivative is checked by central
/// differences at every atom where chi != 0.
OscillatoryValue oscillatory_integral(const DiscreteBoundaryMeasure& mu, const BoundaryFunction& phase,
                                      const BoundaryFunction& bump, double s, double min_derivative = 1e-3);
/// Envelope decay of s -> oscillatory_integral over +-[s_min, s_max]; a failed derivative
/// check becomes a warning of the report.
DecayReport oscillatory_decay(const DiscreteBoundaryMeasure& mu, const BoundaryFunction& phase,
                              const BoundaryFunction& bump, double s_min, double s_max, const DecayOptions& o = {},
                              double min_derivative = 1e-3);
/// Counterclockwise angle from cut, in [0, 2 pi); smooth away from cut (d = 2).
BoundaryFunction angle_phase(const BoundaryPoint& cut);

// Hopf coordinates.

struct HopfPoint {
    BoundaryPoint v_plus;
    BoundaryPoint v_minus;
    double t;
};

struct TangentVector {
    BallPoint base;
    Vec direction;  // Euclidean unit vector
};

/// The unit vector on the geodesic (v_minus, v_plus), pointing to v_plus, at signed distance t
/// from the point of the geodesic closest to o. Throws DomainError when v_plus = v_minus.
TangentVector hopf_to_tangent(const HopfPoint& h);
HopfPoint tangent_to_hopf(const TangentVector& v);

// Equilibrium state.

struct EquilibriumOptions {
    double half_window = 1.0;       // t in [-a, a]
    int time_steps = 256;           // midpoint grid
    double time_shift = 0.0;        // added to every node
    double diagonal_cutoff = 0.1;   // pairs need d_o(v+, v-) >= cutoff
    double mass_cut = 0.0;          // the lightest atoms of each density carrying this much mass are dropped
    CocycleOptions cocycle{};
};

/// Product atoms (v+_i, v-_j, t_k) with weight w_i w_j dt / D_{F,o}(v+_i, v-_j)^2, normalized.
/// Stored as off-diagonal pairs times the time grid.
struct DiscretePhaseSpaceMeasure {
    struct Pair {
        int i, j;       // indices into v_plus / v_minus
        double weight;  // normalized, summed over the time grid it gives the pair mass
        double log_gap; // log D_{F,o}(v+, v-)
    };

    std::vector<BoundaryPoint> v_plus, v_minus;
    std::vector<double> w_plus, w_minus;  // input weights of the kept atoms
    std::vector<Pair> pairs;
    std::vector<double> times;
    double dt = 0.0;
    double raw_total = 0.0;  // sum over pairs of w_i w_j (2a) / D^2 before normalizing
    double diagonal_cutoff = 0.0;
    std::size_t excluded_pairs = 0;
    double excluded_product_mass = 0.0;  // sum of w_i w_j over excluded pairs
    double dropped_mass_plus = 0.0, dropped_mass_minus = 0.0;
    std::string provenance;

    std::size_t size() const { return pairs.size() * times.size(); }
    HopfPoint atom(std::size_t k) const;
    double atom_weight(std::size_t k) const { return pairs[k / times.size()].weight * dt; }
    /// Image on the v+ (or v-) factor.
    DiscreteBoundaryMeasure marginal_plus() const;
    DiscreteBoundaryMeasure marginal_minus() const;
};

/// Both densities must share the basepoint o (d = 2 or 3).
DiscretePhaseSpaceMeasure equilibrium_measure(const DiscreteBoundaryMeasure& mu_F, const DiscreteBoundaryMeasure& mu_F_flip,
                                              const Potential& F, const EquilibriumOptions& o = {});

using HopfChart = std::function<Vec(const HopfPoint&)>;  // into R^3
using HopfFunction = std::function<double(const HopfPoint&)>;

/// (x1, x2, angle of the direction from reference) with the angle in (-pi, pi]; d = 2.
HopfChart tangent_chart(const Vec& reference);
/// (angle of v+ from ref_plus, angle of v- from ref_minus, t); d = 2.
HopfChart hopf_angle_chart(const BoundaryPoint& ref_plus, const BoundaryPoint& ref_minus);
/// (1 - |chart(v) - center| / radius)_+^alpha, Hoelder of exponent alpha.
HopfFunction chart_bump(const HopfChart& chart, const Vec& center, double radius, double alpha);

struct DirectionDecay {
    Vec direction;
    double exponent;
    double residual;
    std::array<double, 3> min_partial;  // inf over sampled support of |d(u.chart)(e)|, e = d/dv+, d/dv-, d/dt
    int dominant;                       // index of the largest min_partial
};

struct PhaseSpaceDecayReport {
    DecayReport sphere;  // envelope = max over the whole sphere, the worst case
    std::vector<DirectionDecay> per_direction;
    Complex integral_at_zero;  // int chi dm
    double min_jacobian;       // min |det d(chart)| over sampled support, Hopf angle coordinates
    std::size_t support_atoms;
    double min_direction_exponent;
};

struct PhaseSpaceDecayOptions {
    std::vector<Vec> directions;  // empty: 64 Fibonacci directions
    int radii_per_band = 2;
    int jacobian_samples = 256;
    double min_jacobian = 1e-8;
};

/// |sum w chi e^{i zeta . chart}| for zeta on dyadic spheres in [zeta_min, zeta_max]. Throws
/// PreconditionError when the chart differential degenerates on the bump support (d = 2).
PhaseSpaceDecayReport equilibrium_decay_check(const DiscretePhaseSpaceMeasure& m, const HopfChart& chart,
                                              const HopfFunction& bump, double zeta_min, double zeta_max,
                                              const PhaseSpaceDecayOptions& o = {});

/// Slope of log max |f(x + h) - f(x)| against log h over dyadic h in [h_min, h_max], x on a
/// grid of [a, b].
double sampled_holder_exponent(const std::function<double(double)>& f, double a, double b, double h_min = 1e-5,
                               double h_max = 1e-2);

// Localization and dimension estimators.

using PointFunction = std::function<double(const Vec&)>;

/// Smooth partition of unity on the circle by angle: count bumps of angular support
/// 4 pi / count, normalized to sum to one.
std::vector<PointFunction> angular_partition(int count);

struct LocalizationReport {
    DecayReport global;
    std::vector<DecayReport> local;  // one per bump with mass
    std::vector<int> bump_index;
    double min_local_exponent;
    int argmin;
    double tolerance;  // 2 (slack(global) + slack(argmin))
    bool consistent;   // |min_local - global| <= tolerance
};

LocalizationReport localization_check(const PointMeasure& mu, const std::vector<PointFunction>& bumps, double xi_min,
                                      double xi_max, const DecayOptions& o = {});

struct NamedChart {
    std::string name;
    std::function<Vec(const Vec&)> map;  // R^d -> R^d
};

struct NamedPhase {
    std::string name;
    PointFunction map;  // R^d -> R
};

struct EstimatorMember {
    std::string chart;
    int bump;
    bool skipped;
    double exponent;
    double slack;
};

/// Minimum of the fitted exponents over the admitted (member, bump) pairs, capped at d.
/// It is an estimate of the infimum from above.
struct DimensionEstimate {
    double value;
    double slack;  // slack of the minimizing fit
    std::vector<EstimatorMember> members;
    int skipped;
};

/// Charts whose Jacobian determinant drops below min_jacobian on the bump support are skipped.
DimensionEstimate lower_dim_estimate(const PointMeasure& mu, const std::vector<NamedChart>& charts,
                                     const std::vector<PointFunction>& bumps, double xi_min, double xi_max,
                                     const DecayOptions& o = {}, double min_jacobian = 1e-6);
/// Phases whose gradient drops below min_gradient on the bump support are skipped.
DimensionEstimate real_phase_dim_estimate(const PointMeasure& mu, const std::vector<NamedPhase>& phases,
                                          const std::vector<PointFunction>& bumps, double xi_min, double xi_max,
                                          const DecayOptions& o = {}, double min_gradient = 1e-6);

/// The identity followed by count charts x + size * q(x) with random quadratic q (fixed seed).
std::vector<NamedChart> polynomial_charts(int dim, int count, double size, std::uint64_t seed);
/// u . chart for every chart and each of the given unit vectors.
std::vector<NamedPhase> chart_phases(const std::vector<NamedChart>& charts, const std::vector<Vec>& units);

nlohmann::json to_json(const DecayReport& r);
nlohmann::json to_json(const PhaseSpaceDecayReport& r);
nlohmann::json to_json(const DimensionEstimate& r);
/// Columns band_lo, band_hi, center, envelope, fit.
void write_decay_csv(const DecayReport& r, const std::string& path);
/// Log-log plot of the envelope with the fitted line.
void write_decay_svg(const DecayReport& r, const std::string& path);

}  // namespace pslab
