#pragma once

// Discrete Patterson-Sullivan densities: Patterson sums, transport between basepoints,
// shadows, the shadow lemma and the mass regularity exponent.

#include "pslab/group.hpp"
#include "pslab/potential.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pslab {

struct DiscreteBoundaryMeasure {
    std::vector<BoundaryPoint> atoms;
    std::vector<double> weights;
    std::vector<std::string> labels;  // word of the atom, may be empty
    BallPoint basepoint = BallPoint::origin(2);
    std::string provenance;

    int dim() const { return atoms.empty() ? basepoint.dim() : atoms.front().dim(); }
    std::size_t size() const { return atoms.size(); }
    double total_mass() const;
    DiscreteBoundaryMeasure normalized() const;
    /// Mass of the closed chord ball {xi : |xi - center| <= radius}.
    double mass_in_ball(const BoundaryPoint& center, double chord_radius) const;
    /// Merge atoms closer than tol (chord), summing weights; ordering by label then position.
    void deduplicate(double tol = 1e-10);
};

/// Precomputed cap-mass queries (angles sorted with prefix sums in d = 2, scan in d = 3).
class CapMassIndex {
public:
    explicit CapMassIndex(const DiscreteBoundaryMeasure& mu);
    double mass(const BoundaryPoint& center, double chord_radius) const;

private:
    const DiscreteBoundaryMeasure* mu_;
    std::vector<double> angles_;
    std::vector<double> prefix_;  // prefix_[i] = sum of the first i sorted weights
};

/// Patterson sum over the reduced words of length exactly depth: atoms at gamma(o)/|gamma(o)| with
/// weight exp(int_o^{gamma o} F - s_offset kappa(gamma)), normalized to a probability.
/// The tables must carry the normalized potential.
DiscreteBoundaryMeasure patterson_measure(const CocycleTables& tables, int depth, double s_offset = 0.0);

/// dmu_y(xi) = exp(-C_{F,xi}(y, x)) dmu_x(xi) for the normalized potential F.
DiscreteBoundaryMeasure transport_density(const DiscreteBoundaryMeasure& mu, const BallPoint& y, const Potential& F,
                                          const CocycleOptions& o = {});

/// Atoms moved by gamma, weights unchanged, basepoint moved to gamma(basepoint).
DiscreteBoundaryMeasure pushforward(const MoebiusMap& gamma, const DiscreteBoundaryMeasure& mu);
/// Same, applying a reduced word letter by letter.
DiscreteBoundaryMeasure pushforward(const SchottkySystem& G, const std::string& word, const DiscreteBoundaryMeasure& mu);

struct ShadowCap {
    BoundaryPoint center;
    double visual_radius;  // in d_x, x the basepoint
    BallPoint basepoint = BallPoint::origin(2);
    bool whole_sphere = false;

    /// Chord radius of the cap when the basepoint is o (d_o = chord / 2).
    double chord_radius() const { return whole_sphere ? 2.0 : std::min(2.0, 2.0 * visual_radius); }
    bool contains(const BoundaryPoint& xi) const;
};

/// Shadow of B(y, R) seen from x: centred at the endpoint of the ray x -> y with visual radius
/// sinh(R) / (2 sinh d(x, y)). For d(x, y) <= R the whole sphere is returned and flagged.
ShadowCap shadow_cap(const BallPoint& x, const BallPoint& y, double R);
/// B_gamma = O_o B(gamma o, C_Gamma).
ShadowCap element_shadow(const GroupElement& g, double c_gamma);
/// Whether the ray from x to xi passes within R of y.
bool ray_meets_ball(const BallPoint& x, const BoundaryPoint& xi, const BallPoint& y, double R);

struct ShadowRatio {
    std::string word;
    int length;
    double mass;
    double weight;  // w_gamma = exp(int_o^{gamma o} F), F normalized
    double ratio;
};

struct ShadowLemmaReport {
    std::vector<ShadowRatio> ratios;
    double min_ratio, max_ratio, spread;
    double band_short, band_long;  // max/min ratio over lengths [2, 4] and [4, 6]
    int empty_caps;
    bool pass;  // spread <= factor and band_long <= band_short
};

/// Ratios mu(B_gamma) / w_gamma for the given elements (log weights taken from log_weight_F).
ShadowLemmaReport shadow_lemma_report(const DiscreteBoundaryMeasure& mu, const std::vector<GroupElement>& elements,
                                      double c_gamma, double factor = 100.0);

struct RegularityFit {
    double exponent;  // delta_reg
    double constant;  // C with sup mu(B(xi, r)) <= C r^delta_reg on the fitted scales
    double residual;
    std::vector<double> radii;
    std::vector<double> sup_mass;
};

/// Least-squares slope of log sup_xi mu(B(xi, r)) against log r over dyadic chord radii
/// from 1/2 down to four median nearest-atom gaps. Centres are up to max_centres atoms.
RegularityFit regularity_exponent(const DiscreteBoundaryMeasure& mu, std::size_t max_centres = 2048);

struct CoveringLevel {
    int n;
    std::size_t elements;
    std::size_t uncovered;
    int min_multiplicity;
    int max_multiplicity;
};

struct CoveringReport {
    double c_gamma;
    std::vector<CoveringLevel> levels;
    bool covered;  // every sample covered at every level
    int max_multiplicity;
};

/// For each annulus, how many shadows B_gamma (gamma in S_n) contain each limit sample.
CoveringReport covering_report(const Enumeration& E, const Annuli& annuli, const std::vector<BoundaryPoint>& samples);

/// Fixed family of 128 centres x 4 dyadic chord radii (1/2 .. 1/16).
struct CapFamily {
    std::vector<BoundaryPoint> centers;
    std::vector<double> radii;
};
CapFamily test_caps(int dim);
/// max over the test caps of |mu(cap) - nu(cap)|.
double cap_mass_distance(const DiscreteBoundaryMeasure& a, const DiscreteBoundaryMeasure& b);

/// Fraction of mass within chord distance r of some sample.
double support_fraction(const DiscreteBoundaryMeasure& mu, const std::vector<BoundaryPoint>& samples, double r);

void write_csv(const DiscreteBoundaryMeasure& mu, const std::string& path);
DiscreteBoundaryMeasure read_csv(const std::string& path);
nlohmann::json to_json(const DiscreteBoundaryMeasure& mu);

}  // namespace pslab
