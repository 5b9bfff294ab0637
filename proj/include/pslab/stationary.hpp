#pragma once

// Explicit construction of a probability measure nu on a Schottky group whose
// convolution with the Patterson-Sullivan density mu_o gives back mu_o:
// densities f_gamma, anchor points eta_gamma, the operators P_n, the iteration
// R_{n+1} = R_n - (beta/A) P_{n+1} R_n and the checks on the resulting nu.

#include "pslab/group.hpp"
#include "pslab/potential.hpp"
#include "pslab/psdensity.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pslab {

struct LimitGrid {
    std::vector<BoundaryPoint> points;
    double resolution = 0.0;  // max chord from a depth+2 proxy sample to the nearest grid point
    double diameter = 0.0;    // visual diameter (max chord / 2)
    int depth = 0;
};

/// gamma'(x_l^+) for every reduced word gamma = gamma' l of the given length, x_l^+ the
/// attracting fixed point of l: one exact limit point per cylinder (strided when count is smaller).
std::vector<BoundaryPoint> limit_points(const SchottkySystem& G, int depth, std::size_t count = 0);
/// Grid of limit_points with its resolution and diameter.
LimitGrid make_limit_grid(const SchottkySystem& G, int depth, std::size_t max_points = 0);
/// Smallest depth with depth * (min letter displacement) >= n_max * 4 C_Gamma.
int grid_depth_for(const SchottkySystem& G, double c_gamma, int n_max);

/// f_gamma(xi) = exp(C_{F,xi}(o, gamma o)) through the letter product of the tables.
double f_gamma(const CocycleTables& tables, const std::string& word, const BoundaryPoint& xi);
/// The same from a single cocycle evaluation between o and gamma(o).
double f_gamma_direct(const Potential& F, const GroupElement& g, const BoundaryPoint& xi, const CocycleOptions& o = {});

struct EtaPoint {
    BoundaryPoint eta;       // gamma(eta_hat)
    BoundaryPoint eta_hat;   // grid point farthest from A_gamma
    double hat_distance;     // visual distance from eta_hat to the cap A_gamma
    double limit_diameter;   // visual diameter of the grid
};

/// Throws ValidationError when no grid point is farther than diam/3 from A_gamma or
/// when gamma(eta_hat) falls outside B_gamma.
EtaPoint eta_point(const GroupElement& g, const SchottkySystem& G, const LimitGrid& grid, double c_gamma);

/// Everything the iteration needs for one (group, potential, C_Gamma, n_max).
struct StationaryContext {
    const CocycleTables* tables = nullptr;
    double c_gamma = 0.0;
    int n_max = 0;
    LimitGrid grid;
    Enumeration elements;  // weights from the tables
    Annuli annuli;
    // members of S_1 .. S_{n_max}, annulus by annulus, shortlex inside an annulus
    std::vector<int> members;
    std::vector<int> member_annulus;
    std::vector<BoundaryPoint> eta;
    std::vector<double> log_w;  // log r_gamma^F
    std::vector<ShadowCap> shadow;

    const GroupElement& element(std::size_t m) const { return elements.elements[members[m]]; }
    std::size_t size() const { return members.size(); }
    /// Index range [begin, end) of S_n inside members.
    std::pair<std::size_t, std::size_t> annulus_range(int n) const;

    // prefix tree of the member words, parents before children
    struct Node {
        int parent;
        int letter;
        int member;    // -1 for pure prefixes
        int min_n;     // smallest annulus below this node
    };
    std::vector<Node> tree;
};

/// Enumerates S_1..S_{n_max}, computes eta points and weights. Throws PreconditionError
/// on an empty annulus.
StationaryContext make_context(const CocycleTables& tables, double c_gamma, int n_max, LimitGrid grid);

/// log f_gamma(xi) for every member in S_1..S_{n_upto} (other entries left at 0).
std::vector<double> member_log_f(const StationaryContext& ctx, const BoundaryPoint& xi, int n_upto);
/// sum_{gamma in S_n} c_gamma f_gamma(xi) for n = 1..n_upto (entry n-1).
std::vector<double> annulus_sums(const StationaryContext& ctx, const std::vector<double>& coeff, const BoundaryPoint& xi,
                                 int n_upto);

/// Element of S_n whose shadow contains eta with d(eta, eta_gamma) minimal (shortlex on ties).
/// Returns the member index. Throws ValidationError when S_n does not cover eta.
std::size_t covering_element(const StationaryContext& ctx, const BoundaryPoint& eta, int n);

/// P_n R(xi) = sum_{gamma in S_n} R(eta_gamma) r_gamma^F f_gamma(xi) at each point.
std::vector<double> approx_operator(const StationaryContext& ctx, int n,
                                    const std::function<double(const BoundaryPoint&)>& R,
                                    const std::vector<BoundaryPoint>& points);
/// Same with R given on the grid; R(eta_gamma) is read at the nearest grid point.
std::vector<double> approx_operator(const StationaryContext& ctx, int n, const std::vector<double>& R_on_grid);

struct AMeasurement {
    double A;
    std::vector<double> max_P1;  // per n
    std::vector<double> min_P1;
    std::vector<double> A_n;     // max(max_P1, 1 / min_P1) per n

    /// max A_n / min A_n - 1
    double spread() const;
};

/// A = max over n in [n_lo, n_hi] and grid points of max(P_n 1, 1 / P_n 1).
AMeasurement measure_A(const StationaryContext& ctx, int n_lo, int n_hi);

struct ApproxState {
    int n;
    std::vector<double> R_values;  // on the grid
    double sup_norm;
    double min_value;
    double beta, A, c_gamma;
};

struct NuEntry {
    std::string word;
    double weight;
    int n;
    double kappa;
};

struct NuMeasure {
    std::vector<NuEntry> entries;
    double beta = 0.0, A = 1.0, c_gamma = 0.0, alpha = 0.0, eps0 = 0.0;
    double truncation_defect = 0.0;  // sup R_{n_max} on the grid
    int n_max = 0;
    int dim = 2;

    double total() const;
    std::vector<double> weights() const;
    static NuMeasure dirac_identity(int dim);
};

struct NuBuild {
    NuMeasure nu;
    std::vector<ApproxState> history;  // R_0 .. R_{n_max}
    std::vector<double> R_at_eta;      // R_{n-1}(eta_gamma) per member
};

/// Runs the iteration. Throws ValidationError naming (n, eta) when an iterate is not positive.
NuBuild build_nu(const StationaryContext& ctx, double beta, double A);

/// Explicit sum_gamma nu(gamma) gamma_* mu, renormalized by 1 / sum nu.
DiscreteBoundaryMeasure convolve(const NuMeasure& nu, const DiscreteBoundaryMeasure& mu, const SchottkySystem& G);

struct ResidualReport {
    double cap_distance;   // max over the test caps
    double tent_distance;  // max over the tent functions
    double value;          // max of the two
};

/// Fixed Lipschitz tents max(0, 1 - |xi - c| / h) used by the residual.
struct TentFamily {
    std::vector<BoundaryPoint> centers;
    std::vector<double> widths;
};
TentFamily test_tents(const SchottkySystem& G);

/// Distance between (nu * mu) / sum nu and mu on the test caps and tents. In d = 2 the caps
/// are pulled back by each gamma (arcs map to arcs) and a tent of width h is integrated as the
/// average of 32 cap masses at radii (k - 1/2) h / 32, which is within 1/64 of the tent
/// uniformly. In d = 3 the convolution is formed explicitly.
ResidualReport stationarity_residual(const NuMeasure& nu, const DiscreteBoundaryMeasure& mu, const SchottkySystem& G);
/// One report per weight vector, all on the support of nu (entries in the same order).
std::vector<ResidualReport> stationarity_residuals(const NuMeasure& nu, const std::vector<std::vector<double>>& weight_sets,
                                                   const DiscreteBoundaryMeasure& mu, const SchottkySystem& G);

/// The same support with the weights permuted (count controls, fixed seed).
std::vector<NuMeasure> shuffled_controls(const NuMeasure& nu, int count, std::uint64_t seed);

struct MomentReport {
    double eps;
    std::vector<double> annulus_sums;  // sum_{S_n} ||gamma||^eps nu(gamma)
    double total;
    double ratio;     // (1 - beta/A^2) e^{4 C eps}
    double eps_star;  // -log(1 - beta/A^2) / (4 C)
    bool converges;   // ratio < 1
    bool monotone;    // annulus sums strictly decreasing
};

/// ||gamma|| is the Frobenius norm of the Lorentz matrix, sqrt(2 cosh^2 k + 2 sinh^2 k + d - 1).
MomentReport exponential_moment(const NuMeasure& nu, double eps);

struct GenerationReport {
    bool generates;   // the support generates the whole free group
    bool witnessed;   // every letter is s^{+-1} or s1^{+-1} s2^{+-1} for support elements s, s1, s2
    std::vector<std::string> letters;
    std::vector<std::string> witnesses;  // "" when none found
    int folded_vertices;
};

/// Witness search over pairs of support elements plus an exact subgroup check (the support
/// words are folded into a core graph; the subgroup is everything iff one vertex remains).
GenerationReport support_generates(const NuMeasure& nu, const SchottkySystem& G);

struct StationaryConstants {
    double alpha;
    double delta_reg;
    double eps0;
    double beta;
    bool beta_capped;  // the eps0 choice violated 1 - beta >= e^{-4 C alpha} + beta
};

/// beta = 1 - e^{-4 C eps0} for eps0 = eps0_fraction * delta_reg, capped at
/// (1 - e^{-4 C alpha}) / 2; eps0 is then recomputed from r_n^{eps0} = (1 - beta)^n.
StationaryConstants choose_constants(double c_gamma, double alpha, double delta_reg, double eps0_fraction = 0.5);

struct CGammaSearch {
    double c_gamma = 0.0;
    std::vector<double> tried;
    std::vector<std::string> reasons;  // why each rejected value failed
    std::optional<StationaryContext> context;
    std::optional<AMeasurement> A;
};

/// First C_Gamma = start + k * step <= stop for which S_1..S_{n_max} cover the limit grid
/// (depth from grid_depth_for) and the per-annulus constants A_n agree within a_spread.
/// The context and A of the accepted value are kept.
CGammaSearch search_c_gamma(const CocycleTables& tables, int n_max, double start, double step = 0.25,
                            double stop = 3.0, double a_spread = 0.2);

nlohmann::json to_json(const NuMeasure& nu);
NuMeasure nu_from_json(const nlohmann::json& j);
void write_history_csv(const std::vector<ApproxState>& history, const std::string& path);

}  // namespace pslab
