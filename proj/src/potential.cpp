#include "pslab/potential.hpp"

#include "pslab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace pslab {

namespace {

LorentzVec origin_lift(int dim)
{
    LorentzVec O = LorentzVec::Zero(dim + 1);
    O[0] = 1.0;
    return O;
}

// Composite Simpson on [a, b] with step <= h, plus one Richardson step against 2h.
template <class G>
double simpson(G&& g, double a, double b, const QuadratureOptions& q)
{
    if (b <= a) return 0.0;
    const int n = 4 * std::max(1, static_cast<int>(std::ceil((b - a) / (4.0 * q.h))));
    const double step = (b - a) / n;
    double ends = 0.0, odd = 0.0, even_odd = 0.0, even_even = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double v = g(a + i * step);
        if (i == 0 || i == n) ends += v;
        else if (i % 2 == 1) odd += v;
        else if (i % 4 == 2) even_odd += v;
        else even_even += v;
    }
    const double fine = step / 3.0 * (ends + 4.0 * odd + 2.0 * (even_odd + even_even));
    const double coarse = 2.0 * step / 3.0 * (ends + 4.0 * even_odd + 2.0 * even_even);
    if (!(std::abs(fine - coarse) <= q.tol * (1.0 + std::abs(fine))))
        throw NumericError("quadrature did not converge under refinement");
    return fine + (fine - coarse) / 15.0;
}

}  // namespace

// ---------------------------------------------------------------- OrbitBump

OrbitBump::OrbitBump(const SchottkySystem& G, double amplitude, double drift, double cutoff)
    : group_(&G), a_(amplitude), b_(drift), R_(cutoff), dim_(G.dim)
{
    if (!(cutoff > 0.0) || !std::isfinite(cutoff)) throw ConfigError("bump cutoff must be positive");
    if (!std::isfinite(amplitude) || !std::isfinite(drift)) throw ConfigError("bump parameters must be finite");
    cosh_R_ = std::cosh(R_);
    floor_ = std::exp(-R_ * R_);
    const LorentzVec O = origin_lift(dim_);
    for (const auto& l : G.letters) {
        letters_.push_back(l.map.lorentz());
        inverses_.push_back(inverse(l.map).lorentz());
        letter_orbit_.push_back(l.map.lorentz() * O);
    }
    neighbours_.push_back(O);
    for (const auto& e : enumerate_elements(G, 2.0 * R_ + 1.0).elements) neighbours_.push_back(e.map.lorentz() * O);
}

int OrbitBump::reducing_letter(const LorentzVec& X) const
{
    const double own = X[0];
    int best = -1;
    double best_val = own * (1.0 - 1e-14);
    for (std::size_t l = 0; l < letter_orbit_.size(); ++l) {
        const double v = -minkowski(X, letter_orbit_[l]);
        if (v < best_val) {
            best_val = v;
            best = static_cast<int>(l);
        }
    }
    return best;
}

double OrbitBump::evaluate(LorentzVec X, LorentzVec V) const
{
    for (int it = 0; it < 100000; ++it) {
        const int l = reducing_letter(X);
        if (l < 0) break;
        X = inverses_[l] * X;
        V = inverses_[l] * V;
    }
    if (X[0] >= cosh_R_) return 0.0;
    double sum = 0.0;
    for (const auto& H : neighbours_) {
        const double ch = -minkowski(X, H);
        if (ch >= cosh_R_) continue;
        const double d = std::acosh(std::max(1.0, ch));
        sum += (a_ + b_ * minkowski(V, H)) * (std::exp(-d * d) - floor_);
    }
    return sum;
}

double OrbitBump::brute_force(const LorentzVec& X, const LorentzVec& V, double kappa_max) const
{
    const LorentzVec O = origin_lift(dim_);
    std::vector<LorentzVec> pts{O};
    for (const auto& e : enumerate_elements(*group_, kappa_max).elements) pts.push_back(e.map.lorentz() * O);
    double sum = 0.0;
    for (const auto& H : pts) {
        const double ch = -minkowski(X, H);
        if (ch >= cosh_R_) continue;
        const double d = std::acosh(std::max(1.0, ch));
        sum += (a_ + b_ * minkowski(V, H)) * (std::exp(-d * d) - floor_);
    }
    return sum;
}

// ---------------------------------------------------------------- Potential

Potential Potential::constant(int dim, double value)
{
    if (dim != 2 && dim != 3) throw DomainError("potential dimension must be 2 or 3");
    if (!std::isfinite(value)) throw ConfigError("constant potential must be finite");
    Potential p;
    p.dim_ = dim;
    p.base_ = value;
    return p;
}

Potential Potential::orbit_bump(const SchottkySystem& G, double base, double amplitude, double drift, double cutoff)
{
    if (!std::isfinite(base)) throw ConfigError("bump base must be finite");
    Potential p;
    p.dim_ = G.dim;
    p.base_ = base;
    p.bump_ = std::make_shared<OrbitBump>(G, amplitude, drift, cutoff);
    return p;
}

double Potential::variable(const LorentzVec& X, const LorentzVec& V) const
{
    if (!bump_) return 0.0;
    return flip_ ? bump_->evaluate(X, -V) : bump_->evaluate(X, V);
}

double Potential::evaluate(const LorentzVec& X, const LorentzVec& V) const
{
    return constant_part() + variable(X, V);
}

double Potential::evaluate(const BallPoint& x, const Vec& v) const
{
    const LorentzVec X = lift(x);
    return evaluate(X, hyperboloid_tangent(X, v.normalized()));
}

Potential Potential::shifted(double delta) const
{
    Potential p = *this;
    p.shift_ += delta;
    return p;
}

Potential Potential::flip() const
{
    Potential p = *this;
    p.flip_ = !p.flip_;
    return p;
}

std::string Potential::describe() const
{
    std::ostringstream os;
    if (bump_)
        os << "bump(base=" << base_ << ", amplitude=" << bump_->amplitude() << ", drift=" << bump_->drift()
           << ", cutoff=" << bump_->cutoff() << ")";
    else
        os << "constant(" << base_ << ")";
    if (shift_ != 0.0) os << " - " << shift_;
    if (flip_) os << " o flip";
    return os.str();
}

PotentialConfig parse_potential_config(const nlohmann::json& j)
{
    PotentialConfig c;
    try {
        c.family = j.value("family", std::string("constant"));
        if (c.family == "constant") {
            c.value = j.value("value", 0.0);
        } else if (c.family == "bump") {
            c.value = j.value("base", 0.0);
            c.amplitude = j.value("amplitude", 0.5);
            c.drift = j.value("drift", 0.0);
            c.cutoff = j.value("cutoff", 4.0);
        } else {
            throw ConfigError("unknown potential family '" + c.family + "'");
        }
        if (j.contains("normalization")) {
            const auto& n = j.at("normalization");
            if (n.is_number()) c.normalization = std::to_string(n.get<double>());
            else c.normalization = n.get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("potential config: ") + e.what());
    }
    if (c.normalization != "auto" && c.normalization != "none") {
        char* end = nullptr;
        std::strtod(c.normalization.c_str(), &end);
        if (end == c.normalization.c_str() || *end != '\0')
            throw ConfigError("potential normalization must be \"auto\", \"none\" or a number");
    }
    if (!(c.cutoff > 0.0)) throw ConfigError("bump cutoff must be positive");
    return c;
}

nlohmann::json to_json(const PotentialConfig& c)
{
    nlohmann::json j;
    j["family"] = c.family;
    if (c.family == "constant") {
        j["value"] = c.value;
    } else {
        j["base"] = c.value;
        j["amplitude"] = c.amplitude;
        j["drift"] = c.drift;
        j["cutoff"] = c.cutoff;
    }
    if (c.normalization == "auto" || c.normalization == "none") j["normalization"] = c.normalization;
    else j["normalization"] = std::stod(c.normalization);
    return j;
}

Potential make_potential(const PotentialConfig& c, const SchottkySystem& G)
{
    Potential p = c.family == "bump" ? Potential::orbit_bump(G, c.value, c.amplitude, c.drift, c.cutoff)
                                     : Potential::constant(G.dim, c.value);
    if (c.normalization != "auto" && c.normalization != "none") p = p.shifted(std::stod(c.normalization));
    return p;
}

namespace {

std::vector<Vec> tangent_directions(int dim)
{
    std::vector<Vec> dirs;
    if (dim == 2) {
        for (int k = 0; k < 8; ++k) {
            Vec v(2);
            v << std::cos(k * std::numbers::pi / 4), std::sin(k * std::numbers::pi / 4);
            dirs.push_back(v);
        }
    } else {
        for (int i = 0; i < 3; ++i)
            for (double s : {-1.0, 1.0}) {
                Vec v = Vec::Zero(3);
                v[i] = s;
                dirs.push_back(v);
            }
        for (double a : {-1.0, 1.0})
            for (double b : {-1.0, 1.0})
                for (double c : {-1.0, 1.0}) {
                    Vec v(3);
                    v << a, b, c;
                    dirs.push_back(v.normalized());
                }
    }
    return dirs;
}

}  // namespace

double sup_on_hull(const Potential& F, const std::vector<BallPoint>& hull)
{
    if (F.is_constant()) return F.constant_part();
    double sup = -std::numeric_limits<double>::infinity();
    const auto dirs = tangent_directions(F.dim());
    for (const auto& x : hull)
        for (const auto& v : dirs) sup = std::max(sup, F.evaluate(x, v));
    return sup;
}

double measured_lipschitz(const Potential& F, const std::vector<BallPoint>& hull)
{
    if (F.is_constant()) return 0.0;
    const double step = 1e-3;
    double lip = 0.0;
    const auto dirs = tangent_directions(F.dim());
    for (const auto& x : hull) {
        const LorentzVec X = lift(x);
        for (const auto& u : dirs) {
            const LorentzVec V = hyperboloid_tangent(X, u);
            const double f0 = F.evaluate(X, V);
            // along the geodesic flow
            const double f1 = F.evaluate(geodesic_point(X, V, step), geodesic_velocity(X, V, step));
            lip = std::max(lip, std::abs(f1 - f0) / step);
            // rotating the tangent in place
            const LorentzVec W = hyperboloid_tangent(X, dirs[(&u - dirs.data() + 1) % dirs.size()]);
            LorentzVec Wp = W - minkowski(W, V) * V;
            if (minkowski(Wp, Wp) > 1e-12) {
                Wp /= std::sqrt(minkowski(Wp, Wp));
                const double f2 = F.evaluate(X, std::cos(step) * V + std::sin(step) * Wp);
                lip = std::max(lip, std::abs(f2 - f0) / step);
            }
        }
    }
    return lip;
}

// ---------------------------------------------------------------- horospherical frames

namespace {

// Horospherical coordinates (w, h) centred at a boundary point xi and normalized at X:
//   P(w, h) = (h/2 + |w|^2/(2h)) l + m/(2h) + (w/h) . E,
// with l = X + V (null, toward xi), m = X - V and E an orthonormal basis of span(X, V)^perp.
// X sits at (0, 1); rays toward xi are vertical lines. Points far up are evaluated through
// checkpoint frames at heights e^k that are pulled back into the Dirichlet domain of o, so the
// hyperboloid coordinates handed to the potential stay of order one.
class HoroFrame {
public:
    HoroFrame(const OrbitBump* bump, bool flip, const LorentzVec& X, const BoundaryPoint& xi) : bump_(bump), flip_(flip)
    {
        const int n = static_cast<int>(X.size());
        dim_ = n - 1;
        if (bump_) far_ = std::cosh(bump_->cutoff());
        LorentzVec L = light_ray(xi);
        LorentzVec l = L * (-1.0 / minkowski(X, L));
        Frame f;
        f.l = l;
        f.m = 2.0 * X - l;
        f.E = normals(X, l - X);
        orthonormalize(f);
        base_ = f;
        if (bump_) reduce(f);
        cp_.emplace(0, f);
    }

    /// Global coordinates of a hyperboloid point.
    void coords(const LorentzVec& Y, Vec& w, double& h) const
    {
        h = -1.0 / minkowski(Y, base_.l);
        w.resize(dim_ - 1);
        for (int j = 0; j < dim_ - 1; ++j) w[j] = h * minkowski(Y, base_.E[j]);
    }

    const LorentzVec& base_m() const { return base_.m; }
    const LorentzVec& base_normal(int j) const { return base_.E[j]; }

    /// Variable part of the potential at (w, h) with coordinate velocity (wd, hd).
    double variable(const Vec& w, double h, const Vec& wd, double hd)
    {
        if (!bump_) return 0.0;
        const int k = static_cast<int>(std::lround(std::log(h)));
        const Frame& f = checkpoint(k);
        const double h0 = std::exp(static_cast<double>(k));
        const double hp = h / h0;
        const Vec wp = w / h0;
        const Vec wdp = wd / h0;
        const double hdp = hd / h0;
        const double w2 = wp.squaredNorm();
        // The checkpoint centre lies in the Dirichlet domain of o, so every orbit point is at least
        // d(o, centre) away from it; far outside the hull the bumps vanish.
        const double centre = 0.5 * (f.l[0] + f.m[0]);
        if (centre > far_) {
            const double offset = std::acosh(1.0 + (w2 + (hp - 1.0) * (hp - 1.0)) / (2.0 * hp));
            if (std::acosh(centre) - offset > bump_->cutoff()) return 0.0;
        }
        LorentzVec P = (hp / 2.0 + w2 / (2.0 * hp)) * f.l + f.m / (2.0 * hp);
        const double A_h = 0.5 - w2 / (2.0 * hp * hp);
        const double B_h = -1.0 / (2.0 * hp * hp);
        LorentzVec T = (A_h * hdp + wp.dot(wdp) / hp) * f.l + B_h * hdp * f.m;
        for (int j = 0; j < dim_ - 1; ++j) {
            P += (wp[j] / hp) * f.E[j];
            T += (-wp[j] / (hp * hp) * hdp + wdp[j] / hp) * f.E[j];
        }
        T *= hp / std::sqrt(wdp.squaredNorm() + hdp * hdp);  // hyperbolic speed of the coordinate velocity
        return bump_->evaluate(P, flip_ ? LorentzVec(-T) : T);
    }

private:
    struct Frame {
        LorentzVec l, m;
        std::vector<LorentzVec> E;
    };

    const OrbitBump* bump_;
    bool flip_;
    int dim_;
    double far_ = 0.0;
    Frame base_;
    std::map<int, Frame> cp_;

    std::vector<LorentzVec> normals(const LorentzVec& X, const LorentzVec& V) const
    {
        std::vector<LorentzVec> E;
        const int n = static_cast<int>(X.size());
        for (int i = 1; i < n && static_cast<int>(E.size()) < dim_ - 1; ++i) {
            LorentzVec e = LorentzVec::Zero(n);
            e[i] = 1.0;
            e += minkowski(e, X) * X - minkowski(e, V) * V;
            for (const auto& p : E) e -= minkowski(e, p) * p;
            const double nn = minkowski(e, e);
            if (nn > 0.05) E.push_back(e / std::sqrt(nn));
        }
        if (static_cast<int>(E.size()) != dim_ - 1) throw NumericError("could not complete a horospherical frame");
        return E;
    }

    static void orthonormalize(Frame& f)
    {
        LorentzVec X = (f.l + f.m) / 2.0;
        // far from o the pairings lose their digits; such frames only ever see F = 0
        if (X[0] > 1e4) return;
        X /= std::sqrt(-minkowski(X, X));
        LorentzVec V = (f.l - f.m) / 2.0;
        V += minkowski(V, X) * X;
        V /= std::sqrt(minkowski(V, V));
        for (std::size_t j = 0; j < f.E.size(); ++j) {
            LorentzVec& e = f.E[j];
            e += minkowski(e, X) * X - minkowski(e, V) * V;
            for (std::size_t i = 0; i < j; ++i) e -= minkowski(e, f.E[i]) * f.E[i];
            e /= std::sqrt(minkowski(e, e));
        }
        f.l = X + V;
        f.m = X - V;
    }

    void reduce(Frame& f) const
    {
        for (int it = 0; it < 100000; ++it) {
            const LorentzVec X = (f.l + f.m) / 2.0;
            const int l = bump_->reducing_letter(X);
            if (l < 0) return;
            const LorentzMat& M = bump_->inverse_letter(l);
            f.l = M * f.l;
            f.m = M * f.m;
            for (auto& e : f.E) e = M * e;
        }
        throw NumericError("frame reduction did not terminate");
    }

    const Frame& checkpoint(int k)
    {
        auto it = cp_.find(k);
        if (it != cp_.end()) return it->second;
        if (k > 0) {
            Frame f = checkpoint(k - 1);
            f.l *= std::numbers::e;
            f.m /= std::numbers::e;
            reduce(f);
            orthonormalize(f);
            return cp_.emplace(k, f).first->second;
        }
        Frame f = checkpoint(k + 1);
        f.l /= std::numbers::e;
        f.m *= std::numbers::e;
        reduce(f);
        orthonormalize(f);
        return cp_.emplace(k, f).first->second;
    }
};

// Horospherical frames toward the same xi based at X and at Y. Both charts differ by a
// similarity, w' = (M w + c) / h_Y, h' = h / h_Y. A point far from the vertical axis of X
// would be assembled from a distant checkpoint with large cancellations, so it is evaluated
// in the chart of Y whenever it sits closer to that axis.
class PairFrame {
public:
    PairFrame(const Potential& F, const LorentzVec& X, const LorentzVec& Y, const BoundaryPoint& xi)
        : fx_(F.bump(), F.flipped(), X, xi), fy_(F.bump(), F.flipped(), Y, xi)
    {
        fx_.coords(Y, wy, hy);
        const int k = static_cast<int>(X.size()) - 2;
        M_.resize(k, k);
        c_.resize(k);
        for (int j = 0; j < k; ++j) {
            c_[j] = 0.5 * minkowski(fx_.base_m(), fy_.base_normal(j));
            for (int i = 0; i < k; ++i) M_(j, i) = minkowski(fx_.base_normal(i), fy_.base_normal(j));
        }
    }

    double variable(const Vec& w, double h, const Vec& wd, double hd)
    {
        const double ox = w.norm() / h;
        if (ox > 1.0) {
            const Vec wp = (M_ * w + c_) / hy;
            const double hp = h / hy;
            if (wp.norm() / hp < ox) return fy_.variable(wp, hp, Vec(M_ * wd / hy), hd / hy);
        }
        return fx_.variable(w, h, wd, hd);
    }

    Vec wy;
    double hy;

private:
    HoroFrame fx_, fy_;
    Eigen::MatrixXd M_;
    Eigen::VectorXd c_;
};

// Geodesic of the upper half space from p1 = (w1, h1) toward p2 = (w2, h2).
struct HalfSpaceSegment {
    Vec w1, u;
    double h1, sin_phi, half_vers, length;

    HalfSpaceSegment(const Vec& w1_, double h1_, const Vec& w2, double h2) : w1(w1_), h1(h1_)
    {
        Vec dw = w2 - w1;
        const double A = dw.norm() / h1;
        const double H = h2 / h1;
        u = A > 0 ? Vec(dw / dw.norm()) : Vec(Vec::Zero(dw.size()));
        const double phi = std::atan2(2.0 * A, A * A + H * H - 1.0);
        sin_phi = std::sin(phi);
        half_vers = 2.0 * std::sin(phi / 2.0) * std::sin(phi / 2.0);  // 1 - cos(phi)
        length = 2.0 * std::asinh(std::sqrt(A * A + (H - 1.0) * (H - 1.0)) / (2.0 * std::sqrt(H)));
    }

    void at(double s, Vec& w, double& h, Vec& wd, double& hd) const
    {
        const double sh = std::sinh(s), ch = std::cosh(s);
        const double D = std::exp(-s) + half_vers * sh;
        const double Dp = -std::exp(-s) + half_vers * ch;
        const double a = sin_phi * sh / D;
        const double ap = sin_phi * (ch * D - sh * Dp) / (D * D);
        w = w1 + (h1 * a) * u;
        h = h1 / D;
        wd = (h1 * ap) * u;
        hd = -h1 * Dp / (D * D);
    }
};

}  // namespace

double geodesic_integral(const Potential& F, const LorentzVec& X, const LorentzVec& V, double s0, double s1,
                         const QuadratureOptions& q)
{
    if (s1 < s0) throw PreconditionError("geodesic integral bounds out of order");
    double total = F.constant_part() * (s1 - s0);
    if (F.is_constant() || s1 == s0) return total;
    const LorentzVec l = X + V;
    BoundaryPoint xi(Vec(l.tail(l.size() - 1) / l[0]));
    HoroFrame frame(F.bump(), F.flipped(), X, xi);
    const Vec w0 = Vec::Zero(X.size() - 2);
    const Vec wd = Vec::Zero(X.size() - 2);
    total += simpson([&](double s) { return frame.variable(w0, std::exp(s), wd, std::exp(s)); }, s0, s1, q);
    return total;
}

double line_integral(const Potential& F, const BallPoint& x, const BallPoint& y, const QuadratureOptions& q)
{
    if (x.dim() != y.dim() || x.dim() != F.dim()) throw DomainError("line integral dimension mismatch");
    const LorentzVec X = lift(x), Y = lift(y);
    const double d = lorentz_distance(X, Y);
    if (d == 0.0) return 0.0;
    return geodesic_integral(F, X, segment_tangent(X, Y), 0.0, d, q);
}

double busemann(const BoundaryPoint& xi, const BallPoint& x)
{
    return std::log((xi.coords() - x.coords()).squaredNorm() / (1.0 - x.coords().squaredNorm()));
}

double busemann(const BoundaryPoint& xi, const LorentzVec& X)
{
    return std::log(-minkowski(X, light_ray(xi)));
}

namespace {

void check_horizon(const CocycleOptions& o)
{
    if (!(o.first_horizon > 0.0) || !(o.max_horizon >= o.first_horizon))
        throw PreconditionError("cocycle horizons must satisfy 0 < first <= max");
}

[[noreturn]] void diverged(const BoundaryPoint& xi, double defect)
{
    std::ostringstream os;
    os << "Gibbs cocycle diverges toward xi = (" << xi.coords().transpose() << "), last increment " << defect;
    throw NumericError(os.str());
}

}  // namespace

CocycleValue gibbs_cocycle(const Potential& F, const BoundaryPoint& xi, const BallPoint& x, const BallPoint& y,
                           const CocycleOptions& o)
{
    if (xi.dim() != x.dim() || x.dim() != y.dim() || x.dim() != F.dim())
        throw DomainError("cocycle dimension mismatch");
    check_horizon(o);
    if ((x.coords() - y.coords()).norm() == 0.0) return {0.0, 0.0, 0.0};
    const LorentzVec X = lift(x), Y = lift(y);
    PairFrame frame(F, X, Y, xi);
    const Vec wy = frame.wy;
    const double hy = frame.hy;
    const int k = X.size() - 2;
    const Vec zero = Vec::Zero(k);

    auto value_at = [&](double t) {
        HalfSpaceSegment seg(wy, hy, zero, std::exp(t));
        double v = F.constant_part() * (seg.length - t);
        if (!F.is_constant()) {
            Vec w(k), wd(k);
            double h, hd;
            const double on_segment = simpson(
                [&](double s) {
                    seg.at(s, w, h, wd, hd);
                    return frame.variable(w, h, wd, hd);
                },
                0.0, seg.length, o.quad);
            const double on_ray =
                simpson([&](double s) { return frame.variable(zero, std::exp(s), zero, std::exp(s)); }, 0.0, t, o.quad);
            v += on_segment - on_ray;
        }
        return v;
    };

    double t = o.first_horizon;
    double prev = value_at(t);
    double inc = std::numeric_limits<double>::infinity(), prev_inc = inc;
    while (t * 2.0 <= o.max_horizon * (1.0 + 1e-12)) {
        t *= 2.0;
        const double cur = value_at(t);
        prev_inc = inc;
        inc = std::abs(cur - prev);
        prev = cur;
        if (inc < o.tol && !o.full_horizon) break;
    }
    if (!(inc < o.tol) && std::isfinite(prev_inc) && inc >= prev_inc) diverged(xi, inc);
    return {prev, t, std::isfinite(inc) ? inc : 0.0};
}

namespace {

// Variable part of C_{F,xi}(x, y) along the rays from x and y to xi aligned by height.
CocycleValue rays_variable(const Potential& F, const BoundaryPoint& xi, const LorentzVec& X, const LorentzVec& Y,
                           const CocycleOptions& o)
{
    PairFrame frame(F, X, Y, xi);
    const Vec wy = frame.wy;
    const double hy = frame.hy;
    const int k = X.size() - 2;
    const Vec zero = Vec::Zero(k);
    auto fx = [&](double s) { return frame.variable(zero, std::exp(s), zero, std::exp(s)); };
    auto fy = [&](double s) { return frame.variable(wy, std::exp(s), zero, std::exp(s)); };
    const double sy = std::log(hy);
    const double s0 = std::max(0.0, sy);
    double value = simpson(fy, sy, s0, o.quad) - simpson(fx, 0.0, s0, o.quad);
    auto diff = [&](double s) { return fy(s) - fx(s); };
    double a = s0, b = s0 + o.first_horizon;
    double inc = std::numeric_limits<double>::infinity(), prev_inc = inc;
    while (true) {
        const double piece = simpson(diff, a, b, o.quad);
        value += piece;
        prev_inc = inc;
        inc = std::abs(piece);
        if ((inc < o.tol && !o.full_horizon) || b - s0 >= o.max_horizon * (1.0 - 1e-12)) break;
        a = b;
        b = s0 + 2.0 * (b - s0);
    }
    if (!(inc < o.tol) && std::isfinite(prev_inc) && inc >= prev_inc) diverged(xi, inc);
    return {value, b - s0, inc};
}

}  // namespace

CocycleValue gibbs_cocycle_rays(const Potential& F, const BoundaryPoint& xi, const LorentzVec& X, const LorentzVec& Y,
                                const CocycleOptions& o)
{
    check_horizon(o);
    const double delta = busemann(xi, Y) - busemann(xi, X);
    if (F.is_constant()) return {F.constant_part() * delta, 0.0, 0.0};
    CocycleValue v = rays_variable(F, xi, X, Y, o);
    v.value += F.constant_part() * delta;
    return v;
}

GapValue gap_map(const Potential& F, const BallPoint& x, const BoundaryPoint& eta, const BoundaryPoint& xi,
                 const CocycleOptions& o)
{
    if (eta.dim() != xi.dim() || x.dim() != xi.dim()) throw DomainError("gap map dimension mismatch");
    if (chord(eta, xi) < 1e-12) throw DomainError("gap map needs distinct boundary points");
    const LorentzVec X = lift(x);
    const LorentzVec lp = light_ray(xi), lm = light_ray(eta);
    // p(t) proportional to e^t lp + e^-t lm; the point closest to X balances the two pairings
    const double a = -minkowski(X, lp), b = -minkowski(X, lm);
    const double t = 0.5 * std::log(b / a);
    LorentzVec P = std::exp(t) * lp + std::exp(-t) * lm;
    P /= std::sqrt(-minkowski(P, P));
    const BallPoint p = project(P);
    const CocycleValue c1 = gibbs_cocycle(F, xi, p, x, o);
    const CocycleValue c2 = gibbs_cocycle(F.flip(), eta, p, x, o);
    const double lv = 0.5 * (c1.value + c2.value);
    return {std::exp(lv), lv, std::max(c1.convergence_defect, c2.convergence_defect)};
}

// ---------------------------------------------------------------- CocycleTables

CocycleTables::CocycleTables(const SchottkySystem& G, const Potential& F, int table_size, const CocycleOptions& o)
    : G_(&G), F_(F), opts_(o)
{
    if (F.dim() != G.dim) throw DomainError("potential and group dimensions differ");
    if (table_size != 0 && table_size < 16) throw PreconditionError("cocycle table needs at least 16 nodes");
    const BallPoint origin = BallPoint::origin(G.dim);
    for (const auto& l : G.letters) {
        const BallPoint lo = l.map.image_of_origin();
        letter_orbit_.push_back(lo);
        const Vec dir = lo.coords() / lo.norm();
        const double rm = std::tanh(l.map.displacement() / 4.0);
        to_mid_.push_back(hyperbolic_translation(Vec(-dir), rm));
        from_mid_.push_back(hyperbolic_translation(dir, rm));
    }
    if (F.is_constant() || G.dim != 2 || table_size == 0) return;
    n_ = table_size;
    table_.assign(G.letters.size(), std::vector<double>(n_));
    const LorentzVec O = lift(origin);
    for (std::size_t l = 0; l < G.letters.size(); ++l) {
        const LorentzVec LO = lift(letter_orbit_[l]);
        for (int k = 0; k < n_; ++k) {
            const BoundaryPoint xi = from_mid_[l].apply(BoundaryPoint::from_angle(2.0 * std::numbers::pi * k / n_));
            table_[l][k] = rays_variable(F_, xi, O, LO, opts_).value;
        }
    }
}

double CocycleTables::variable_direct(int l, const BoundaryPoint& xi) const
{
    return rays_variable(F_, xi, lift(BallPoint::origin(G_->dim)), lift(letter_orbit_[l]), opts_).value;
}

double CocycleTables::letter(int l, const BoundaryPoint& xi) const
{
    const double c = F_.constant_part();
    double v = c == 0.0 ? 0.0 : c * busemann(xi, letter_orbit_[l]);  // b_xi(o) = 0
    if (F_.is_constant()) return v;
    if (n_ == 0) return v + variable_direct(l, xi);
    double u = to_mid_[l].apply(xi).angle() / (2.0 * std::numbers::pi) * n_;
    u -= std::floor(u / n_) * n_;
    const int i = static_cast<int>(std::floor(u));
    const double f = u - i;
    const auto& T = table_[l];
    auto at = [&](int j) { return T[((j % n_) + n_) % n_]; };
    // cubic Lagrange through nodes i-1 .. i+2
    const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
    const double interp = p0 * (-f * (f - 1) * (f - 2) / 6.0) + p1 * ((f + 1) * (f - 1) * (f - 2) / 2.0) +
                          p2 * (-(f + 1) * f * (f - 2) / 2.0) + p3 * ((f + 1) * f * (f - 1) / 6.0);
    return v + interp;
}

double CocycleTables::log_f(const std::string& word, const BoundaryPoint& xi) const
{
    double total = 0.0;
    BoundaryPoint eta = xi;
    for (char c : word) {
        const int l = G_->letter_index(c);
        total += letter(l, eta);
        eta = G_->letters[G_->letters[l].inverse].map.apply(eta);
    }
    return total;
}

double CocycleTables::log_weight(const GroupElement& g) const
{
    if (g.word.empty()) return 0.0;
    const BallPoint& go = g.map.image_of_origin();
    const BoundaryPoint xm(Vec(go.coords() / go.norm()));
    return -log_f(g.word, xm);
}

void CocycleTables::assign_weights(Enumeration& E, bool flip_slot) const
{
    for (auto& g : E.elements) {
        const double w = log_weight(g);
        if (flip_slot) g.log_weight_F_flip = w;
        else g.log_weight_F = w;
    }
}

double CocycleTables::interpolation_error(int samples_per_letter) const
{
    if (n_ == 0) return 0.0;
    double err = 0.0;
    for (std::size_t l = 0; l < table_.size(); ++l) {
        for (int s = 0; s < samples_per_letter; ++s) {
            const int k = (s * n_) / samples_per_letter;
            const BoundaryPoint xi =
                from_mid_[l].apply(BoundaryPoint::from_angle(2.0 * std::numbers::pi * (k + 0.5) / n_));
            const double c = F_.constant_part() * busemann(xi, letter_orbit_[l]);
            err = std::max(err, std::abs(letter(static_cast<int>(l), xi) - c - variable_direct(static_cast<int>(l), xi)));
        }
    }
    return err;
}

CocycleTables CocycleTables::shifted(double delta) const
{
    CocycleTables t = *this;
    t.F_ = F_.shifted(delta);
    return t;
}

NormalizedPotential normalize_potential(const CocycleTables& raw, double kappa_max, double slack)
{
    const SchottkySystem& G = raw.group();
    Enumeration E = enumerate_elements(G, kappa_max);
    raw.assign_weights(E);
    std::vector<double> lw;
    lw.reserve(E.elements.size());
    for (const auto& g : E.elements) lw.push_back(g.log_weight_F);
    const CriticalExponent ce = critical_exponent(E, lw, 2.0);
    const auto hull = sample_hull(sample_limit_set(G, 6, 512), 4000, 5);
    const double sup = sup_on_hull(raw.potential(), hull);
    return {raw.potential().shifted(ce.delta), ce.delta, ce.ci, check_condition_R(sup, ce.delta, slack)};
}

}  // namespace pslab
