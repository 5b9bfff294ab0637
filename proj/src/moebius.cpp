#include "pslab/moebius.hpp"

#include "pslab/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace pslab {

namespace {

LorentzMat form_J(int n)
{
    LorentzMat J = LorentzMat::Identity(n, n);
    J(0, 0) = -1.0;
    return J;
}

double origin_radius_from_entry(double t)
{
    if (t <= 1.0) return 0.0;
    return std::sqrt((t - 1.0) / (t + 1.0));
}

}  // namespace

BallPoint::BallPoint(Vec coords) : x_(std::move(coords))
{
    if (x_.size() < 2 || x_.size() > 3) throw DomainError("ball point must have dimension 2 or 3");
    if (!x_.allFinite()) throw DomainError("ball point has non-finite coordinates");
    if (x_.squaredNorm() >= 1.0) {
        std::ostringstream os;
        os << "point outside the open ball, |x| = " << x_.norm();
        throw DomainError(os.str());
    }
}

BallPoint BallPoint::origin(int dim)
{
    return BallPoint(Vec::Zero(dim));
}

BoundaryPoint::BoundaryPoint(Vec coords) : xi_(std::move(coords))
{
    if (xi_.size() < 2 || xi_.size() > 3) throw DomainError("boundary point must have dimension 2 or 3");
    double n = xi_.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("boundary point has zero or non-finite norm");
    xi_ /= n;
}

BoundaryPoint BoundaryPoint::from_angle(double theta)
{
    Vec v(2);
    v << std::cos(theta), std::sin(theta);
    return BoundaryPoint(v);
}

double BoundaryPoint::angle() const
{
    return std::atan2(xi_[1], xi_[0]);
}

double chord(const BoundaryPoint& a, const BoundaryPoint& b)
{
    return (a.coords() - b.coords()).norm();
}

double minkowski(const LorentzVec& a, const LorentzVec& b)
{
    return -a[0] * b[0] + a.tail(a.size() - 1).dot(b.tail(b.size() - 1));
}

LorentzVec lift(const BallPoint& x)
{
    const int d = x.dim();
    const double r2 = x.coords().squaredNorm();
    const double den = 1.0 - r2;
    LorentzVec X(d + 1);
    X[0] = (1.0 + r2) / den;
    X.tail(d) = 2.0 * x.coords() / den;
    return X;
}

LorentzVec light_ray(const BoundaryPoint& xi)
{
    LorentzVec l(xi.dim() + 1);
    l[0] = 1.0;
    l.tail(xi.dim()) = xi.coords();
    return l;
}

BallPoint project(const LorentzVec& X)
{
    const int d = static_cast<int>(X.size()) - 1;
    Vec x = X.tail(d) / (1.0 + X[0]);
    // Far out, take the radius from X[0] alone: |x| = sqrt((t - 1) / (t + 1)).
    if (X[0] > 2.0) x *= std::sqrt((X[0] - 1.0) / (X[0] + 1.0)) / x.norm();
    // Points extremely far out can round onto the sphere; pull them back inside.
    double n2 = x.squaredNorm();
    if (n2 >= 1.0) x *= (1.0 - 4e-16) / std::sqrt(n2);
    return BallPoint(x);
}

double lorentz_distance(const LorentzVec& X, const LorentzVec& Y)
{
    LorentzVec D = X - Y;
    double q = std::max(0.0, minkowski(D, D));
    return 2.0 * std::asinh(std::sqrt(q) / 2.0);
}

double q_defect(const LorentzMat& L)
{
    const int n = static_cast<int>(L.rows());
    LorentzMat J = form_J(n);
    const double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
    return (L.transpose() * J * L - J).cwiseAbs().maxCoeff() / (scale * scale);
}

LorentzMat renormalize_lorentz(const LorentzMat& L)
{
    const int n = static_cast<int>(L.rows());
    LorentzMat J = form_J(n);
    LorentzMat I = LorentzMat::Identity(n, n);
    LorentzMat M = L;
    const double scale = std::max(1.0, L.cwiseAbs().maxCoeff());
    for (int it = 0; it < 8; ++it) {
        LorentzMat E = J * M.transpose() * J * M - I;
        if (E.cwiseAbs().maxCoeff() < 1e-14 * scale * scale) break;
        M = M * (I - 0.5 * E);
    }
    return M;
}

MoebiusMap::MoebiusMap(LorentzMat lorentz) : L_(std::move(lorentz)), origin_image_(Vec::Zero(2))
{
    const int n = static_cast<int>(L_.rows());
    if (n != L_.cols() || n < 3 || n > 4) throw ValidationError("Lorentz matrix must be 3x3 or 4x4");
    if (!L_.allFinite()) throw ValidationError("Lorentz matrix has non-finite entries");
    double defect = pslab::q_defect(L_);
    if (defect > kLorentzTolerance) {
        if (defect > 1e-3) {
            std::ostringstream os;
            os << "matrix does not preserve the Lorentz form (defect " << defect << ")";
            throw ValidationError(os.str());
        }
        L_ = renormalize_lorentz(L_);
        defect = pslab::q_defect(L_);
        if (defect > kLorentzTolerance) throw NumericError("Lorentz renormalization failed to converge");
    }
    if (L_(0, 0) <= 0.0) throw ValidationError("Lorentz matrix is not in the identity component");
    // For orthochronous maps in O(d,1) the determinant is the sign of the spatial block's
    // determinant; the full determinant is only numerically meaningful for small entries.
    const double scale = L_.cwiseAbs().maxCoeff();
    const double det = scale <= 10.0 ? L_.determinant() : 1.0;
    if (std::abs(det - 1.0) > 1e-6 || L_.bottomRightCorner(n - 1, n - 1).determinant() <= 0.0) {
        std::ostringstream os;
        os << "Lorentz matrix is not orientation preserving (det " << L_.determinant() << ")";
        throw ValidationError(os.str());
    }
    LorentzVec col = L_.col(0);
    origin_image_ = project(col);

    // Split L = boost(axis, kappa) * diag(1, R) for the boundary action.
    const int d = n - 1;
    const double sh = L_.col(0).tail(d).norm();
    kappa_ = std::asinh(sh);
    one_minus_tanh_ = 2.0 / (std::exp(2.0 * kappa_) + 1.0);
    if (sh < 1e-14) {
        axis_ = Vec::Unit(d, 0);
        rot_ = L_.bottomRightCorner(d, d);
        kappa_ = 0.0;
        one_minus_tanh_ = 1.0;
    } else {
        axis_ = L_.col(0).tail(d) / sh;
        if (d == 2) {
            const Vec v = L_.row(0).tail(d).transpose() / sh;  // R^T axis
            const double a = std::atan2(axis_[1], axis_[0]) - std::atan2(v[1], v[0]);
            rot_.resize(2, 2);
            rot_ << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
        } else {
            const double ch = L_(0, 0);
            Eigen::MatrixXd P = Eigen::MatrixXd::Identity(d, d) - (1.0 - 1.0 / ch) * axis_ * axis_.transpose();
            Eigen::MatrixXd R = P * Eigen::MatrixXd(L_.bottomRightCorner(d, d));
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
            rot_ = svd.matrixU() * svd.matrixV().transpose();
        }
    }
}

MoebiusMap MoebiusMap::identity(int dim)
{
    return MoebiusMap(LorentzMat::Identity(dim + 1, dim + 1));
}

double MoebiusMap::displacement() const
{
    return std::acosh(std::max(1.0, L_(0, 0)));
}

double MoebiusMap::origin_radius() const
{
    return origin_radius_from_entry(L_(0, 0));
}

double MoebiusMap::epsilon() const
{
    const double t = std::max(1.0, L_(0, 0));
    return (2.0 / (t + 1.0)) / (1.0 + origin_radius_from_entry(t));
}

BallPoint MoebiusMap::apply(const BallPoint& x) const
{
    if (x.dim() != dim()) throw DomainError("dimension mismatch in apply");
    return project(L_ * lift(x));
}

BoundaryPoint MoebiusMap::apply(const BoundaryPoint& xi) const
{
    if (xi.dim() != dim()) throw DomainError("dimension mismatch in apply");
    // Boost of R xi along the axis, written without cancellation near the repelling point:
    // with c = <R xi, u> and t = tanh(kappa) the image is
    //   ((1 + c - (1 - t)) u + (R xi - c u) / cosh(kappa)) / (1 + c - (1 - t) c).
    if (kappa_ == 0.0) return BoundaryPoint(Vec(rot_ * xi.coords()));
    const Vec r = rot_ * xi.coords();
    const double c = r.dot(axis_);
    const double one_plus_c = 0.5 * (r + axis_).squaredNorm();
    const Vec perp = r - c * axis_;
    const double q = one_minus_tanh_;
    // 1 / cosh = sech, written through 1 - tanh: sech^2 = (1 - t)(1 + t)
    const double sech = std::sqrt(q * (2.0 - q));
    const Vec out = ((one_plus_c - q) * axis_ + sech * perp) / (one_plus_c - q * c);
    return BoundaryPoint(out);
}

double MoebiusMap::q_defect() const
{
    return pslab::q_defect(L_);
}

MoebiusMap compose(const MoebiusMap& g1, const MoebiusMap& g2)
{
    if (g1.dim() != g2.dim()) throw DomainError("dimension mismatch in compose");
    return MoebiusMap(g1.lorentz() * g2.lorentz());
}

MoebiusMap inverse(const MoebiusMap& g)
{
    LorentzMat J = form_J(g.dim() + 1);
    return MoebiusMap(J * g.lorentz().transpose() * J);
}

MoebiusMap hyperbolic_translation(const BallPoint& b)
{
    const int d = b.dim();
    const double beta = b.norm();
    LorentzMat L = LorentzMat::Identity(d + 1, d + 1);
    if (beta == 0.0) return MoebiusMap(L);
    Vec u = b.coords() / beta;
    const double den = (1.0 - beta) * (1.0 + beta);
    const double c = (1.0 + beta * beta) / den;
    const double s = 2.0 * beta / den;
    L(0, 0) = c;
    for (int i = 0; i < d; ++i) {
        L(0, i + 1) = s * u[i];
        L(i + 1, 0) = s * u[i];
        for (int j = 0; j < d; ++j) L(i + 1, j + 1) += (c - 1.0) * u[i] * u[j];
    }
    return MoebiusMap(L);
}

MoebiusMap hyperbolic_translation(const Vec& axis, double radius)
{
    double n = axis.norm();
    if (!(n > 0.0)) throw DomainError("translation axis must be nonzero");
    if (!(radius >= 0.0 && radius < 1.0)) throw DomainError("translation radius must lie in [0,1)");
    return hyperbolic_translation(BallPoint(axis / n * radius));
}

MoebiusMap rotation(const Eigen::MatrixXd& R)
{
    const int d = static_cast<int>(R.rows());
    if (R.cols() != d || d < 2 || d > 3) throw DomainError("rotation must be 2x2 or 3x3");
    if ((R.transpose() * R - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-9)
        throw DomainError("rotation matrix is not orthogonal");
    LorentzMat L = LorentzMat::Identity(d + 1, d + 1);
    L.bottomRightCorner(d, d) = R;
    return MoebiusMap(L);
}

MoebiusMap rotation_2d(double angle)
{
    Eigen::MatrixXd R(2, 2);
    R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return rotation(R);
}

Vec translation_formula(const Vec& b, const Vec& x)
{
    const double b2 = b.squaredNorm();
    const double x2 = x.squaredNorm();
    const double xb = x.dot(b);
    return ((1.0 - b2) * x + (x2 + 2.0 * xb + 1.0) * b) / (b2 * x2 + 2.0 * xb + 1.0);
}

double hyperbolic_distance(const BallPoint& x, const BallPoint& y)
{
    const double num = (x.coords() - y.coords()).norm();
    if (num == 0.0) return 0.0;
    const double den = std::sqrt((1.0 - x.coords().squaredNorm()) * (1.0 - y.coords().squaredNorm()));
    return 2.0 * std::asinh(num / den);
}

double visual_distance_origin(const BoundaryPoint& xi, const BoundaryPoint& eta)
{
    return 0.5 * chord(xi, eta);
}

double visual_distance_exact(const BallPoint& x, const BoundaryPoint& xi, const BoundaryPoint& eta)
{
    MoebiusMap back = hyperbolic_translation(BallPoint(-x.coords()));
    return visual_distance_origin(back.apply(xi), back.apply(eta));
}

VisualDistanceResult visual_distance(const BallPoint& x, const BoundaryPoint& xi, const BoundaryPoint& eta,
                                     double tol, double max_horizon)
{
    if (chord(xi, eta) == 0.0) return {0.0, 0.0, 0.0};
    LorentzVec X = lift(x);
    LorentzVec V1 = ray_tangent(X, xi);
    LorentzVec V2 = ray_tangent(X, eta);
    auto at = [&](double t) {
        double d12 = lorentz_distance(geodesic_point(X, V1, t), geodesic_point(X, V2, t));
        return std::exp(-(2.0 * t - d12) / 2.0);
    };
    double t = 4.0;
    double prev = at(t);
    double inc = std::numeric_limits<double>::infinity();
    while (t < max_horizon) {
        t *= 2.0;
        double cur = at(t);
        inc = std::abs(cur - prev);
        prev = cur;
        if (inc < tol) return {cur, t, inc};
    }
    if (inc < std::max(tol, 1e-8)) return {prev, t, inc};
    std::ostringstream os;
    os << "visual distance did not converge by horizon " << t << " (last increment " << inc << ")";
    throw NumericError(os.str());
}

LorentzVec ray_tangent(const LorentzVec& X, const BoundaryPoint& xi)
{
    LorentzVec l = light_ray(xi);
    const double lambda = -1.0 / minkowski(X, l);
    return lambda * l - X;
}

LorentzVec segment_tangent(const LorentzVec& X, const LorentzVec& Y)
{
    const double d = lorentz_distance(X, Y);
    if (d == 0.0) throw DomainError("segment tangent of coincident points");
    return (Y - std::cosh(d) * X) / std::sinh(d);
}

Vec ball_direction(const LorentzVec& X, const LorentzVec& V)
{
    const int d = static_cast<int>(X.size()) - 1;
    const double den = 1.0 + X[0];
    Vec dx = V.tail(d) / den - X.tail(d) * V[0] / (den * den);
    return dx / dx.norm();
}

LorentzVec hyperboloid_tangent(const LorentzVec& X, const Vec& u)
{
    const int d = static_cast<int>(X.size()) - 1;
    Vec x = X.tail(d) / (1.0 + X[0]);
    const double r2 = x.squaredNorm();
    const double den = 1.0 - r2;
    const double xu = x.dot(u);
    LorentzVec V(d + 1);
    V[0] = 4.0 * xu / (den * den);
    V.tail(d) = 2.0 * u / den + 4.0 * xu * x / (den * den);
    return V / std::sqrt(minkowski(V, V));
}

GeodesicFrame geodesic_between(const BoundaryPoint& eta, const BoundaryPoint& xi)
{
    const double gap = 1.0 - xi.coords().dot(eta.coords());
    if (!(gap > 1e-14)) throw DomainError("geodesic endpoints coincide");
    const double norm = std::sqrt(2.0 * gap);
    LorentzVec lp = light_ray(xi), lm = light_ray(eta);
    return {(lp + lm) / norm, (lp - lm) / norm};
}

std::vector<BoundaryPoint> boundary_grid(int dim, int count)
{
    std::vector<BoundaryPoint> out;
    out.reserve(count);
    if (dim == 2) {
        for (int k = 0; k < count; ++k) out.push_back(BoundaryPoint::from_angle(2.0 * std::numbers::pi * k / count));
    } else if (dim == 3) {
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int k = 0; k < count; ++k) {
            double z = 1.0 - (2.0 * k + 1.0) / count;
            double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            Vec v(3);
            v << r * std::cos(golden * k), r * std::sin(golden * k), z;
            out.emplace_back(v);
        }
    } else {
        throw DomainError("boundary grid supports d = 2 or 3");
    }
    return out;
}

ContractionProfile contraction_profile(const MoebiusMap& g, double c, int samples)
{
    if (!(c > 0.0 && c < 1.0)) throw PreconditionError("contraction constant c must lie in (0,1)");
    const double beta = g.origin_radius();
    if (beta < 0.5) throw PreconditionError("contraction profile needs |gamma(o)| >= 1/2");
    const double eps = g.epsilon();
    BoundaryPoint attractor(g.image_of_origin().coords());
    MoebiusMap ginv = inverse(g);
    BoundaryPoint rep_center(ginv.image_of_origin().coords());

    // g = tau_{beta u} o R. Along the axis, tau acts on s = xi.u by
    // phi_beta(s) = ((1+b^2)s + 2b)/(2bs + 1+b^2), and g(tau xi, u) = 1 - phi(s).
    // The threshold s* solves 1 - phi(s*) = c eps. With 1 - beta = eps the gauge radius
    // 1 + s* = (2 - c eps)(1 - beta)^2 / ((1 - beta)^2 + 2 beta c eps) is written without the
    // cancellation of s* ~ -1, which loses every digit once eps^2 drops below rounding.
    const double rho = (2.0 - c * eps) * eps / (eps + 2.0 * beta * c);
    // Exceptional set {R xi . u < s*} = {g(xi, rep_center) < 1 + s*}.
    const double cap_radius = std::sqrt(std::max(0.0, 2.0 * rho));
    const double diam = rho >= 1.0 ? 2.0 : 2.0 * rho * (2.0 - rho);

    ContractionProfile p{attractor, eps, rep_center, cap_radius, c * eps, diam, diam / eps, 0.0, 0.0, 0};
    for (const auto& xi : boundary_grid(g.dim(), samples)) {
        if (gauge(xi, rep_center) < rho) continue;
        ++p.samples_outside;
        BoundaryPoint img = g.apply(xi);
        p.max_sampled_deviation = std::max(p.max_sampled_deviation, gauge(img, attractor));
        p.max_sampled_chord = std::max(p.max_sampled_chord, chord(img, attractor));
    }
    return p;
}

double first_contraction_constant(const MoebiusMap& g, double c1, int samples)
{
    const double eps = g.epsilon();
    BoundaryPoint xm(g.image_of_origin().coords());
    MoebiusMap ginv = inverse(g);
    BoundaryPoint pulled = ginv.apply(xm);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& xi : boundary_grid(g.dim(), samples)) {
        if (gauge(xi, xm) < c1 * eps * eps) continue;
        best = std::min(best, chord(ginv.apply(xi), pulled));
    }
    return best;
}

double operator_norm(const MoebiusMap& g)
{
    return g.lorentz().norm();
}

}  // namespace pslab
