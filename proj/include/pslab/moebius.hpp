#pragma once

// Moebius geometry of the ball model B^d (d = 2 or 3).
//
// Isometries are stored as matrices of SO_0(d,1) acting on the hyperboloid
// H = { (t, w) : -t^2 + |w|^2 = -1, t > 0 }. Ball points are lifted with the
// stereographic map x -> ((1+|x|^2)/(1-|x|^2), 2x/(1-|x|^2)) and boundary
// points with the light ray xi -> (1, xi).

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace pslab {

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using LorentzVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
using LorentzMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;

inline constexpr double kLorentzTolerance = 1e-9;

/// A point of the open unit ball, |x| < 1.
class BallPoint {
public:
    explicit BallPoint(Vec coords);
    static BallPoint origin(int dim);

    const Vec& coords() const { return x_; }
    int dim() const { return static_cast<int>(x_.size()); }
    double norm() const { return x_.norm(); }
    double operator[](int i) const { return x_[i]; }

private:
    Vec x_;
};

/// A point of the ideal boundary S^{d-1}. Coordinates are renormalized on construction.
class BoundaryPoint {
public:
    explicit BoundaryPoint(Vec coords);
    static BoundaryPoint from_angle(double theta);

    const Vec& coords() const { return xi_; }
    int dim() const { return static_cast<int>(xi_.size()); }
    double operator[](int i) const { return xi_[i]; }
    /// Polar angle in (-pi, pi]; only meaningful for d = 2.
    double angle() const;

private:
    Vec xi_;
};

double chord(const BoundaryPoint& a, const BoundaryPoint& b);

// Hyperboloid helpers.
double minkowski(const LorentzVec& a, const LorentzVec& b);
LorentzVec lift(const BallPoint& x);
LorentzVec light_ray(const BoundaryPoint& xi);
BallPoint project(const LorentzVec& X);
/// Distance between two hyperboloid points, stable for both small and large separations.
double lorentz_distance(const LorentzVec& X, const LorentzVec& Y);

/// An orientation-preserving isometry of B^d in its Lorentz representation.
class MoebiusMap {
public:
    /// Validates q-preservation, det = 1 and the identity component; renormalizes
    /// a mildly defective matrix before validating.
    explicit MoebiusMap(LorentzMat lorentz);
    static MoebiusMap identity(int dim);

    int dim() const { return static_cast<int>(L_.rows()) - 1; }
    const LorentzMat& lorentz() const { return L_; }
    const BallPoint& image_of_origin() const { return origin_image_; }

    /// kappa = d(o, gamma o), read off the (0,0) entry.
    double displacement() const;
    /// eps = 1 - |gamma(o)| without cancellation.
    double epsilon() const;
    /// |gamma(o)|.
    double origin_radius() const;

    BallPoint apply(const BallPoint& x) const;
    BoundaryPoint apply(const BoundaryPoint& xi) const;
    LorentzVec apply(const LorentzVec& X) const { return L_ * X; }

    double q_defect() const;

private:
    LorentzMat L_;
    BallPoint origin_image_;
    // L = boost(axis_, kappa_) diag(1, rot_)
    Vec axis_;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3> rot_;
    double kappa_ = 0.0;
    double one_minus_tanh_ = 1.0;
};

MoebiusMap compose(const MoebiusMap& g1, const MoebiusMap& g2);
MoebiusMap inverse(const MoebiusMap& g);

/// Max entrywise |L^T J L - J|, relative to max(1, max|L_ij|)^2. Entries of a word of
/// length 12 reach 1e15, so the absolute defect is dominated by roundoff of the check itself.
double q_defect(const LorentzMat& L);
/// Polar-type (Newton-Schulz) projection back onto SO(d,1).
LorentzMat renormalize_lorentz(const LorentzMat& L);

/// tau_b(x) = ((1-|b|^2)x + (|x|^2 + 2x.b + 1)b) / (|b|^2|x|^2 + 2x.b + 1).
MoebiusMap hyperbolic_translation(const BallPoint& b);
/// Translation with |gamma(o)| = radius along a unit axis.
MoebiusMap hyperbolic_translation(const Vec& axis, double radius);
/// Rotation block diag(1, R) for R in SO(d).
MoebiusMap rotation(const Eigen::MatrixXd& R);
MoebiusMap rotation_2d(double angle);

/// Closed form of tau_b on a ball point (used as an independent oracle).
Vec translation_formula(const Vec& b, const Vec& x);

double hyperbolic_distance(const BallPoint& x, const BallPoint& y);

/// d_o(xi, eta) = sin(angle/2) = |xi - eta| / 2.
double visual_distance_origin(const BoundaryPoint& xi, const BoundaryPoint& eta);
/// d_x by isometry invariance: d_o(tau_x^{-1} xi, tau_x^{-1} eta).
double visual_distance_exact(const BallPoint& x, const BoundaryPoint& xi, const BoundaryPoint& eta);

struct VisualDistanceResult {
    double value;
    double horizon;
    double last_increment;
};

/// Truncated limit of exp(-(d(x,xi_t) + d(x,eta_t) - d(xi_t,eta_t))/2) along
/// geodesic rays from x; horizon doubles from 4 until the increment drops below tol.
VisualDistanceResult visual_distance(const BallPoint& x, const BoundaryPoint& xi, const BoundaryPoint& eta,
                                     double tol = 1e-10, double max_horizon = 64.0);

// Geodesics on the hyperboloid.

/// Unit tangent at X pointing to the boundary point xi.
LorentzVec ray_tangent(const LorentzVec& X, const BoundaryPoint& xi);
/// Unit tangent at X pointing to Y (X != Y).
LorentzVec segment_tangent(const LorentzVec& X, const LorentzVec& Y);
inline LorentzVec geodesic_point(const LorentzVec& X, const LorentzVec& V, double s)
{
    return std::cosh(s) * X + std::sinh(s) * V;
}
inline LorentzVec geodesic_velocity(const LorentzVec& X, const LorentzVec& V, double s)
{
    return std::sinh(s) * X + std::cosh(s) * V;
}
/// Euclidean unit direction in the ball of the hyperboloid tangent V at X.
Vec ball_direction(const LorentzVec& X, const LorentzVec& V);
/// Hyperboloid tangent at X whose ball direction is the Euclidean unit vector u.
LorentzVec hyperboloid_tangent(const LorentzVec& X, const Vec& u);

/// Point of the bi-infinite geodesic (eta, xi) at signed arclength t from the
/// point closest to o, oriented toward xi.
struct GeodesicFrame {
    LorentzVec point;    // closest point to o
    LorentzVec tangent;  // unit, toward xi
};
GeodesicFrame geodesic_between(const BoundaryPoint& eta, const BoundaryPoint& xi);

/// Boundary contraction data for gamma with |gamma(o)| >= 1/2.
///
/// Distances on the sphere are measured in the gauge g(x, y) = 1 - x.y = |x - y|^2 / 2,
/// which is the axial coordinate of the one-dimensional reduction of a translation.
/// In this gauge every point outside the cap A_gamma lands within c * eps of the
/// attractor and A_gamma has diameter <= C * eps with C ~ 4/c. (In the plain chord
/// metric the image of the complement of an eps-sized cap has size of order one.)
struct ContractionProfile {
    BoundaryPoint attractor;               // x_gamma^m
    double epsilon;                        // 1 - |gamma(o)|
    BoundaryPoint exceptional_cap_center;  // direction of gamma^{-1}(o)
    double exceptional_cap_radius;         // chord radius of A_gamma
    double contraction_bound;              // c * epsilon, gauge
    double cap_diameter;                   // gauge diameter of A_gamma
    double cap_constant;                   // cap_diameter / epsilon
    double max_sampled_deviation;          // max g(gamma x, x^m) over samples outside A_gamma
    double max_sampled_chord;              // the same maximum as a chord
    int samples_outside;
};

inline double gauge(const BoundaryPoint& a, const BoundaryPoint& b)
{
    return 0.5 * (a.coords() - b.coords()).squaredNorm();
}

ContractionProfile contraction_profile(const MoebiusMap& g, double c, int samples = 2048);

/// Measured c2 for threshold c1 * eps^2 (gauge): min chord |g^{-1}x - g^{-1}x^m| over
/// sampled x with g(x, x^m) >= c1 eps^2.
double first_contraction_constant(const MoebiusMap& g, double c1, int samples = 2048);

/// Frobenius norm of the Lorentz matrix.
double operator_norm(const MoebiusMap& g);

/// Deterministic near-uniform boundary grid: equispaced angles for d = 2, Fibonacci sphere for d = 3.
std::vector<BoundaryPoint> boundary_grid(int dim, int count);

}  // namespace pslab
