#pragma once

// Potentials on the unit tangent bundle, line integrals, Gibbs cocycles and the gap map.

#include "pslab/group.hpp"
#include "pslab/moebius.hpp"

#include "json.hpp"

#include <memory>
#include <string>
#include <vector>

namespace pslab {

/// Gamma-invariant radial bumps around the orbit of o:
///   F(x, v) = sum_g (a + b <v, g o>) phi(d(x, g o)),  phi(d) = exp(-d^2) - exp(-R^2) for d < R,
/// where <v, g o> is the Minkowski pairing of the tangent with the hyperboloid point g o.
/// Evaluation reduces x into the Dirichlet domain of o and sums over a fixed neighbour list.
class OrbitBump {
public:
    OrbitBump(const SchottkySystem& G, double amplitude, double drift, double cutoff);

    double evaluate(LorentzVec X, LorentzVec V) const;
    /// The same sum over every orbit point with kappa <= kappa_max, without reduction.
    double brute_force(const LorentzVec& X, const LorentzVec& V, double kappa_max) const;

    /// Index of a letter l with d(X, l o) < d(X, o), or -1 when X lies in the Dirichlet domain of o.
    int reducing_letter(const LorentzVec& X) const;
    const LorentzMat& inverse_letter(int l) const { return inverses_[l]; }

    double amplitude() const { return a_; }
    double drift() const { return b_; }
    double cutoff() const { return R_; }

private:
    const SchottkySystem* group_;
    std::vector<LorentzMat> letters_;      // letter matrices
    std::vector<LorentzMat> inverses_;     // inverse letter matrices
    std::vector<LorentzVec> letter_orbit_; // l o
    std::vector<LorentzVec> neighbours_;   // h o with kappa(h) <= 2R + 1, including o
    double a_, b_, R_, cosh_R_, floor_;
    int dim_;
};

/// A Hoelder potential F on T^1 H^d, with an optional constant shift and flip.
/// The value is  base - shift + variable(x, +-v).
class Potential {
public:
    static Potential constant(int dim, double value);
    static Potential orbit_bump(const SchottkySystem& G, double base, double amplitude, double drift = 0.0,
                                double cutoff = 4.0);

    int dim() const { return dim_; }
    /// F at the hyperboloid point X with unit tangent V.
    double evaluate(const LorentzVec& X, const LorentzVec& V) const;
    /// F at a ball point with Euclidean unit direction v.
    double evaluate(const BallPoint& x, const Vec& v) const;

    bool is_constant() const { return !bump_; }
    /// Constant part base - shift; the whole value when is_constant().
    double constant_part() const { return base_ - shift_; }
    /// Evaluate only the non-constant part (zero for constant potentials).
    double variable(const LorentzVec& X, const LorentzVec& V) const;

    double normalization_shift() const { return shift_; }
    bool flipped() const { return flip_; }
    double holder_exponent() const { return 1.0; }

    /// F - delta.
    Potential shifted(double delta) const;
    /// F o iota.
    Potential flip() const;

    const OrbitBump* bump() const { return bump_.get(); }
    std::string describe() const;

private:
    int dim_ = 2;
    double base_ = 0.0;
    double shift_ = 0.0;
    bool flip_ = false;
    std::shared_ptr<const OrbitBump> bump_;
};

struct PotentialConfig {
    std::string family = "constant";  // "constant" | "bump"
    double value = 0.0;               // constant value or bump base
    double amplitude = 0.0;
    double drift = 0.0;
    double cutoff = 4.0;
    std::string normalization = "auto";  // "auto" | "none" | numeric string
};

PotentialConfig parse_potential_config(const nlohmann::json& j);
nlohmann::json to_json(const PotentialConfig& c);
Potential make_potential(const PotentialConfig& c, const SchottkySystem& G);

/// Sup of F over hull samples and 8 tangent directions per sample (d = 2) or 14 (d = 3).
double sup_on_hull(const Potential& F, const std::vector<BallPoint>& hull);
/// Largest sampled |F(x) - F(y)| / d(x, y) over nearby hull pairs.
double measured_lipschitz(const Potential& F, const std::vector<BallPoint>& hull);

struct QuadratureOptions {
    double h = 0.01;
    double tol = 1e-4;  // allowed |S_h - S_2h| relative to 1 + |S|
};

/// int_{s0}^{s1} F(c(s), c'(s)) ds along c(s) = cosh(s) X + sinh(s) V, composite Simpson at
/// step <= h with one Richardson step against 2h.
double geodesic_integral(const Potential& F, const LorentzVec& X, const LorentzVec& V, double s0, double s1,
                         const QuadratureOptions& q = {});

/// int_x^y F along the unit-speed geodesic from x to y.
double line_integral(const Potential& F, const BallPoint& x, const BallPoint& y, const QuadratureOptions& q = {});

/// Busemann function normalized at o: b_xi(x) = log(|xi - x|^2 / (1 - |x|^2)).
double busemann(const BoundaryPoint& xi, const BallPoint& x);
/// Same, in hyperboloid coordinates: log(-<X, (1, xi)>).
double busemann(const BoundaryPoint& xi, const LorentzVec& X);

struct CocycleValue {
    double value;
    double truncation_time;
    double convergence_defect;
};

struct CocycleOptions {
    QuadratureOptions quad{};
    double tol = 1e-7;
    double first_horizon = 4.0;
    double max_horizon = 64.0;
    /// Run every horizon up to max_horizon instead of stopping at tol.
    bool full_horizon = false;
};

/// C_{F,xi}(x, y) = lim_t ( int_y^{xi_t} F - int_x^{xi_t} F ), xi_t at distance t from x on the
/// ray to xi; the segment from y to xi_t is integrated as a geodesic segment.
CocycleValue gibbs_cocycle(const Potential& F, const BoundaryPoint& xi, const BallPoint& x, const BallPoint& y,
                           const CocycleOptions& o = {});

/// The same limit evaluated on the rays from x and y toward xi, aligned on a common
/// horosphere (the constant part is handled exactly through the Busemann function).
CocycleValue gibbs_cocycle_rays(const Potential& F, const BoundaryPoint& xi, const LorentzVec& X,
                                const LorentzVec& Y, const CocycleOptions& o = {});

struct GapValue {
    double value;  // D_{F,x}(eta, xi)
    double log_value;
    double convergence_defect;
};

/// D_{F,x}(eta, xi) = exp( (C_{F,xi}(p,x) + C_{F o iota,eta}(p,x)) / 2 ), p the point of the
/// geodesic (eta, xi) closest to x.
GapValue gap_map(const Potential& F, const BallPoint& x, const BoundaryPoint& eta, const BoundaryPoint& xi,
                 const CocycleOptions& o = {});

/// log f_gamma(xi) = C_{F,xi}(o, gamma o) for the elements of a Schottky system, computed
/// letter by letter: C_{F,xi}(o, g l o) = C_{F,xi}(o, g o) + C_{F, g^{-1} xi}(o, l o).
/// The constant part of F uses the closed-form Busemann function; the variable part of each
/// letter is tabulated (d = 2) against the angle of tau_{-m}(xi), m the midpoint of [o, l o],
/// or evaluated directly (d = 3 or table_size = 0).
/// The letter cocycle is only Hoelder in xi near the limit set, so the tables carry an
/// interpolation error of about 1e-3 at 2048 nodes and 5e-4 at 4096.
class CocycleTables {
public:
    CocycleTables(const SchottkySystem& G, const Potential& F, int table_size = 4096, const CocycleOptions& o = {});

    const Potential& potential() const { return F_; }
    const SchottkySystem& group() const { return *G_; }

    /// C_{F,xi}(o, l o).
    double letter(int l, const BoundaryPoint& xi) const;
    /// C_{F,xi}(o, gamma o) for a reduced word.
    double log_f(const std::string& word, const BoundaryPoint& xi) const;
    /// int_o^{gamma o} F = -C_{F, x^m}(o, gamma o).
    double log_weight(const GroupElement& g) const;
    /// Fill log_weight_F (or log_weight_F_flip) for every element.
    void assign_weights(Enumeration& E, bool flip_slot = false) const;

    /// Largest |table - direct cocycle| over the midpoints between table nodes (interpolation check).
    double interpolation_error(int samples_per_letter = 16) const;
    /// Tables for F - delta; the variable part is shared.
    CocycleTables shifted(double delta) const;

private:
    const SchottkySystem* G_;
    Potential F_;
    CocycleOptions opts_;
    int n_ = 0;
    std::vector<MoebiusMap> to_mid_;    // tau_{-m_l}
    std::vector<MoebiusMap> from_mid_;  // tau_{m_l}
    std::vector<std::vector<double>> table_;
    std::vector<BallPoint> letter_orbit_;

    double variable_direct(int l, const BoundaryPoint& xi) const;
};

struct NormalizedPotential {
    Potential F;          // raw F shifted by delta
    double delta;         // critical exponent of the raw F
    double delta_ci;
    ConditionR condition;  // sup of the raw F on hull samples against delta
};

/// "auto" normalization: delta from the Poincare slope of exp(int_o^{gamma o} F) over
/// kappa <= kappa_max (windows of width 2), condition (R) on 4000 hull samples.
NormalizedPotential normalize_potential(const CocycleTables& raw, double kappa_max = 30.0, double slack = 0.02);

}  // namespace pslab
