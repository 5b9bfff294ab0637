#pragma once

// Schottky groups: ping-pong generators, reduced-word enumeration, annuli,
// limit-set sampling and critical exponents.

#include "pslab/moebius.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pslab {

/// Boundary cap stored as (center, chord radius).
struct Cap {
    BoundaryPoint center;
    double radius;

    bool contains(const BoundaryPoint& xi, double slack = 0.0) const
    {
        return chord(center, xi) <= radius + slack;
    }
    /// Half opening angle of the cap seen from o.
    double half_angle() const;
};

/// Angular gap between two caps (negative when they overlap).
double cap_gap(const Cap& a, const Cap& b);

/// Letter k of a system with n generators: 'a'+k for k < n, 'A'+(k-n) for the inverses.
struct Letter {
    char name;
    MoebiusMap map;
    Cap cap;  // attracting cap: map(complement of inverse's cap) lies inside it
    int inverse;
};

struct SchottkySystem {
    int dim = 2;
    std::vector<Letter> letters;
    double gap = 0.0;  // smallest angular gap between distinct caps

    int generator_count() const { return static_cast<int>(letters.size()) / 2; }
    int letter_index(char name) const;
    /// Map of a word, composed left to right; "" is the identity.
    MoebiusMap word_map(const std::string& word) const;
    /// gamma(xi) applied letter by letter from the right (well conditioned on the boundary).
    BoundaryPoint apply_word(const std::string& word, const BoundaryPoint& xi) const;
    static std::string inverse_word(const std::string& word);
};

struct TranslationGenerator {
    Vec axis;
    double radius;
    double rotation_angle = 0.0;  // d = 2 only: gamma = tau_{radius axis} o R(angle)
};

struct CapPairGenerator {
    BoundaryPoint repelling;
    BoundaryPoint attracting;
    double radius;  // chord radius of both caps
};

struct SchottkySpec {
    int dim = 2;
    std::vector<TranslationGenerator> translations;
    std::vector<CapPairGenerator> cap_pairs;
    double min_gap = 1e-3;  // required angular gap between caps
    int check_samples = 2048;
    std::size_t budget = 5'000'000;
    std::optional<double> c_gamma;
};

SchottkySpec parse_schottky_spec(const nlohmann::json& j);
nlohmann::json to_json(const SchottkySpec& spec);

/// Two translations along e1, e2 with |gamma_i(o)| = 0.9.
SchottkySpec reference_spec();

/// Builds and validates a ping-pong system. Caps come from the isometric spheres:
/// the attracting cap of gamma is { xi : xi . gamma(o)/|gamma(o)| >= |gamma(o)| }.
SchottkySystem build_schottky(const SchottkySpec& spec);

struct GroupElement {
    std::string word;
    MoebiusMap map;
    double kappa;
    double r_gamma;
    double log_weight_F = 0.0;       // int_o^{gamma o} F
    double log_weight_F_flip = 0.0;  // the same for F o iota
    int parent = -1;                 // index of word minus its last letter, -1 if absent
    int last_letter = -1;

    double weight_F() const { return std::exp(log_weight_F); }
    double weight_F_flip() const { return std::exp(log_weight_F_flip); }
    int length() const { return static_cast<int>(word.size()); }
};

GroupElement make_element(const SchottkySystem& G, const std::string& word);

struct Enumeration {
    std::vector<GroupElement> elements;  // breadth-first order
    double kappa_max = 0.0;
    int max_length = 0;
};

/// All nonidentity reduced words with kappa <= kappa_max. Words are extended while
/// kappa <= kappa_max + (largest letter displacement), which is exact for ping-pong systems.
Enumeration enumerate_elements(const SchottkySystem& G, double kappa_max, std::size_t budget = 5'000'000);
/// All reduced words of length 1..L (no displacement cut).
Enumeration enumerate_words(const SchottkySystem& G, int max_length, std::size_t budget = 5'000'000);

struct AnnulusIndex {
    int n;
    double r_n;
    std::vector<int> members;  // indices into the enumeration
};

struct Annuli {
    double c_gamma;
    std::vector<AnnulusIndex> annuli;  // n = 1..n_max
    std::vector<int> between;          // r_gamma < r_1 but in no S_n
    std::vector<int> shallow;          // r_gamma >= r_1
    std::vector<int> deeper;           // beyond S_{n_max}

    const AnnulusIndex& at(int n) const { return annuli.at(n - 1); }
};

/// S_n = { e^{-2C} r_n <= r_gamma < r_n }, r_n = e^{-4 C n}.
Annuli stratify_annuli(const Enumeration& E, double c_gamma, int n_max);

/// The boundary point maximizing the angular distance to every cap.
BoundaryPoint base_boundary_point(const SchottkySystem& G);

/// gamma(xi_0) for reduced words of exactly the given length, in word order;
/// when there are more words than count, an evenly strided subset is returned.
std::vector<BoundaryPoint> sample_limit_set(const SchottkySystem& G, int depth, std::size_t count);
std::vector<std::string> words_of_length(const SchottkySystem& G, int length);

/// Points on geodesics between random pairs of limit samples, at arclength |t| <= spread
/// from the point closest to o.
std::vector<BallPoint> sample_hull(const std::vector<BoundaryPoint>& limit_samples, std::size_t count,
                                   std::uint64_t seed, double spread = 3.0);

struct CriticalExponent {
    double delta;
    double ci;  // half width
    std::vector<double> window_ends;
    std::vector<double> log_sums;
};

/// Slope of log sum_{n-c < kappa <= n} exp(log_weights) over integer n in the upper
/// two thirds of [c, kappa_max].
CriticalExponent critical_exponent(const Enumeration& E, const std::vector<double>& log_weights, double window_c);
CriticalExponent critical_exponent(const Enumeration& E, double window_c);

struct BoxCounting {
    double dimension;
    double residual;
    std::vector<double> scales;
    std::vector<double> counts;
};

/// Least-squares slope of log N(eps) against log(1/eps) over dyadic chord scales
/// in [eps_min, eps_max]. Points are binned in angle (d = 2) or in a cube grid (d = 3).
BoxCounting box_counting_dimension(const std::vector<BoundaryPoint>& points, double eps_max, double eps_min);

struct ConditionR {
    double sup_F;
    double delta;
    double margin;
    double slack;
    bool pass;
};

ConditionR check_condition_R(double sup_F_on_hull, double delta_hat, double slack);

}  // namespace pslab
