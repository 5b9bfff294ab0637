#include "pslab/fourier.hpp"

#include "pslab/errors.hpp"
#include "pslab/fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace pslab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_pi(double a)
{
    return std::remainder(a, kTwoPi);  // (-pi, pi]
}

// Counterclockwise angle from ref to x in (-pi, pi].
double relative_angle(const Vec& ref, const Vec& x)
{
    return std::atan2(ref[0] * x[1] - ref[1] * x[0], ref[0] * x[0] + ref[1] * x[1]);
}

BoundaryPoint rotate2(const BoundaryPoint& xi, double a)
{
    const double c = std::cos(a), s = std::sin(a);
    Vec v(2);
    v << c * xi[0] - s * xi[1], s * xi[0] + c * xi[1];
    return BoundaryPoint(v);
}

// Two unit tangent vectors at a point of S^2.
std::pair<Vec, Vec> sphere_tangents(const Vec& x)
{
    Vec a = std::abs(x[0]) < 0.9 ? Vec(Vec::Unit(3, 0)) : Vec(Vec::Unit(3, 1));
    Vec t1 = a - a.dot(x) * x;
    t1.normalize();
    Vec t2(3);
    t2 << x[1] * t1[2] - x[2] * t1[1], x[2] * t1[0] - x[0] * t1[2], x[0] * t1[1] - x[1] * t1[0];
    return {t1, t2};
}

// Fill fitted_exponent and friends from the bands.
void fit_bands(DecayReport& r)
{
    std::vector<double> x, y;
    for (const auto& b : r.bands) {
        x.push_back(std::log(b.center));
        y.push_back(std::log(b.envelope));
    }
    const LinearFit f = linear_fit(x, y);
    r.fitted_exponent = -2.0 * f.slope;
    r.exponent_stderr = 2.0 * f.slope_stderr;
    r.fit_residual = f.residual;
    r.intercept = f.intercept;
    if (!r.bands.empty()) {
        r.xi_min = r.bands.front().lo;
        r.xi_max = r.bands.back().hi;
    }
}

int band_count(double xi_min, double xi_max)
{
    if (!(xi_min > 0.0) || !(xi_max / xi_min >= 64.0 * (1.0 - 1e-12)))
        throw PreconditionError("decay fit needs xi_max / xi_min >= 64");
    return static_cast<int>(std::floor(std::log2(xi_max / xi_min) + 1e-9));
}

// sample(u, r) = |transform(r u)|; bands stop at the noise floor.
DecayReport dyadic_envelope(int dim, double xi_min, double xi_max, const DecayOptions& o,
                            const std::function<double(const Vec&, double)>& sample)
{
    const int nb = band_count(xi_min, xi_max);
    if (o.radii_per_band < 1) throw PreconditionError("decay fit needs at least one radius per band");
    DecayReport r;
    r.dim = dim;
    const std::vector<Vec> dirs = frequency_directions(dim, o.directions);
    r.directions = static_cast<int>(dirs.size());
    r.radii_per_band = o.radii_per_band;
    for (int b = 0; b < nb; ++b) {
        const double lo = xi_min * std::ldexp(1.0, b);
        double env = 0.0;
        for (int k = 0; k < o.radii_per_band; ++k) {
            const double rad = lo * std::exp2((k + 0.5) / o.radii_per_band);
            for (const auto& u : dirs) env = std::max(env, sample(u, rad));
        }
        if (env < o.noise_floor) {
            r.truncated = true;
            std::ostringstream os;
            os << "envelope below noise floor from |xi| = " << lo << "; range truncated";
            r.warnings.push_back(os.str());
            break;
        }
        r.bands.push_back({lo, 2.0 * lo, lo * std::numbers::sqrt2, env});
    }
    if (r.bands.size() < 3) throw InsufficientDataError("fewer than three bands above the noise floor");
    fit_bands(r);
    return r;
}

Complex weighted_sum(const std::vector<double>& proj, const std::vector<double>& a, double scale)
{
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < proj.size(); ++k) {
        const double p = scale * proj[k];
        re += a[k] * std::cos(p);
        im += a[k] * std::sin(p);
    }
    return {re, im};
}

double min_tangential_gradient(const DiscreteBoundaryMeasure& mu, const BoundaryFunction& phase,
                               const BoundaryFunction& bump)
{
    constexpr double h = 1e-6;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : mu.atoms) {
        if (bump(x) == 0.0) continue;
        double g2 = 0.0;
        if (x.dim() == 2) {
            const double d = (phase(rotate2(x, h)) - phase(rotate2(x, -h))) / (2.0 * h);
            g2 = d * d;
        } else {
            const auto [t1, t2] = sphere_tangents(x.coords());
            for (const Vec& t : {t1, t2}) {
                const double d = (phase(BoundaryPoint(Vec(x.coords() + h * t))) -
                                  phase(BoundaryPoint(Vec(x.coords() - h * t)))) /
                                 (2.0 * h);
                g2 += d * d;
            }
        }
        best = std::min(best, std::sqrt(g2));
    }
    return best;
}

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------- transforms

double PointMeasure::total_mass() const
{
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

Vec PointMeasure::point(std::size_t i) const
{
    Vec v(dim);
    for (int k = 0; k < dim; ++k) v[k] = coords[i * dim + k];
    return v;
}

void PointMeasure::add(const Vec& x, double w)
{
    if (x.size() != dim) throw DomainError("point dimension differs from the measure");
    for (int k = 0; k < dim; ++k) coords.push_back(x[k]);
    weights.push_back(w);
}

PointMeasure embed(const DiscreteBoundaryMeasure& mu)
{
    PointMeasure p;
    p.dim = mu.dim();
    p.provenance = mu.provenance;
    for (std::size_t i = 0; i < mu.size(); ++i) p.add(mu.atoms[i].coords(), mu.weights[i]);
    return p;
}

Complex fourier_transform(const PointMeasure& mu, const Vec& xi)
{
    if (xi.size() != mu.dim) throw DomainError("frequency dimension differs from the measure");
    double re = 0.0, im = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        double p = 0.0;
        for (int k = 0; k < mu.dim; ++k) p += xi[k] * mu.coords[j * mu.dim + k];
        p *= -kTwoPi;
        re += mu.weights[j] * std::cos(p);
        im += mu.weights[j] * std::sin(p);
    }
    return {re, im};
}

Complex fourier_transform(const DiscreteBoundaryMeasure& mu, const Vec& xi)
{
    return fourier_transform(embed(mu), xi);
}

std::vector<Vec> frequency_directions(int dim, int count)
{
    std::vector<Vec> out;
    if (dim == 1) {
        out.push_back(Vec::Constant(1, 1.0));
        out.push_back(Vec::Constant(1, -1.0));
    } else if (dim == 2) {
        // |transform(-xi)| = |transform(xi)| for real weights: half the circle suffices
        for (int k = 0; k < count; ++k) {
            Vec u(2);
            u << std::cos(std::numbers::pi * k / count), std::sin(std::numbers::pi * k / count);
            out.push_back(u);
        }
    } else if (dim == 3) {
        for (const auto& p : boundary_grid(3, count)) out.push_back(p.coords());
    } else {
        throw DomainError("frequency directions exist for dimensions 1 to 3");
    }
    return out;
}

DecayReport decay_fit(const Transform& f, int dim, double xi_min, double xi_max, const DecayOptions& o)
{
    return dyadic_envelope(dim, xi_min, xi_max, o, [&](const Vec& u, double r) { return std::abs(f(Vec(r * u))); });
}

DecayReport decay_fit(const PointMeasure& mu, double xi_min, double xi_max, const DecayOptions& o)
{
    std::vector<double> proj(mu.size());
    return dyadic_envelope(mu.dim, xi_min, xi_max, o, [&](const Vec& u, double r) {
        for (std::size_t j = 0; j < mu.size(); ++j) {
            double p = 0.0;
            for (int k = 0; k < mu.dim; ++k) p += u[k] * mu.coords[j * mu.dim + k];
            proj[j] = p;
        }
        return std::abs(weighted_sum(proj, mu.weights, -kTwoPi * r));
    });
}

DecayReport decay_fit(const DiscreteBoundaryMeasure& mu, double xi_min, double xi_max, const DecayOptions& o)
{
    return decay_fit(embed(mu), xi_min, xi_max, o);
}

AtomicScale atomic_scale(const DiscreteBoundaryMeasure& mu)
{
    const std::size_t n = mu.size();
    if (n < 2) throw InsufficientDataError("atomic scale needs two atoms");
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    if (mu.dim() == 2) {
        std::vector<std::pair<double, std::size_t>> a(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = {mu.atoms[i].angle(), i};
        std::sort(a.begin(), a.end());
        for (std::size_t k = 0; k < n; ++k) {
            const auto& next = a[(k + 1) % n];
            const double g = chord(mu.atoms[a[k].second], mu.atoms[next.second]);
            nearest[a[k].second] = std::min(nearest[a[k].second], g);
            nearest[next.second] = std::min(nearest[next.second], g);
        }
    } else {
        if (n > 20000) throw ResourceError("brute-force gaps are limited to 20000 atoms");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double g = chord(mu.atoms[i], mu.atoms[j]);
                nearest[i] = std::min(nearest[i], g);
                nearest[j] = std::min(nearest[j], g);
            }
    }
    AtomicScale s;
    s.min_gap = *std::min_element(nearest.begin(), nearest.end());
    s.max_gap = *std::max_element(nearest.begin(), nearest.end());
    s.cutoff = 1.0 / (kTwoPi * s.max_gap);
    s.stall_frequency = s.min_gap > 0.0 ? 1.0 / s.min_gap : std::numeric_limits<double>::infinity();
    double w2 = 0.0;
    for (double w : mu.weights) w2 += w * w;
    s.random_phase_floor = std::sqrt(w2);
    return s;
}

DecayReport resolved_decay_fit(const DiscreteBoundaryMeasure& mu, double xi_min, const DecayOptions& o)
{
    const AtomicScale s = atomic_scale(mu);
    if (s.cutoff < 64.0 * xi_min) {
        std::ostringstream os;
        os << "atomic cutoff " << s.cutoff << " leaves less than six bands above " << xi_min;
        throw PreconditionError(os.str());
    }
    DecayReport r = decay_fit(mu, xi_min, s.cutoff, o);
    r.resolution_limit = s.cutoff;
    return r;
}

// ---------------------------------------------------------------- oscillatory integrals

OscillatoryValue oscillatory_integral(const DiscreteBoundaryMeasure& mu, const BoundaryFunction& phase,
                                      const BoundaryFunction& bump, double s, double min_derivative)
{
    OscillatoryValue out{};
    double re = 0.0, im = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const double c = bump(mu.atoms[j]);
        if (c == 0.0) continue;
        const double p = s * phase(mu.atoms[j]);
        re += mu.weights[j] * c * std::cos(p);
        im += mu.weights[j] * c * std::sin(p);
    }
    out.value = {re, im};
    out.min_phase_derivative = min_tangential_gradient(mu, phase, bump);
    out.hypothesis_ok = out.min_phase_derivative >= min_derivative;
    if (!out.hypothesis_ok)
        out.warning = "phase derivative " + fmt(out.min_phase_derivative) + " on the bump support is below " +
                      fmt(min_derivative);
    return out;
}

DecayReport oscillatory_decay(const DiscreteBoundaryMeasure& mu, const BoundaryFunction& phase,
                              const BoundaryFunction& bump, double s_min, double s_max, const DecayOptions& o,
                              double min_derivative)
{
    std::vector<double> phi, a;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const double c = bump(mu.atoms[j]);
        if (c == 0.0) continue;
        phi.push_back(phase(mu.atoms[j]));
        a.push_back(mu.weights[j] * c);
    }
    DecayReport r = dyadic_envelope(1, s_min, s_max, o,
                                    [&](const Vec& u, double s) { return std::abs(weighted_sum(phi, a, s * u[0])); });
    const double g = min_tangential_gradient(mu, phase, bump);
    if (g < min_derivative)
        r.warnings.push_back("phase derivative " + fmt(g) + " on the bump support is below " + fmt(min_derivative));
    return r;
}

BoundaryFunction angle_phase(const BoundaryPoint& cut)
{
    if (cut.dim() != 2) throw DomainError("angle phase is defined on the circle");
    const Vec ref = cut.coords();
    return [ref](const BoundaryPoint& x) {
        const double a = relative_angle(ref, x.coords());
        return a < 0.0 ? a + kTwoPi : a;
    };
}

// ---------------------------------------------------------------- Hopf coordinates

TangentVector hopf_to_tangent(const HopfPoint& h)
{
    if (h.v_plus.dim() != h.v_minus.dim()) throw DomainError("Hopf endpoints differ in dimension");
    if (chord(h.v_plus, h.v_minus) < 1e-12) throw DomainError("Hopf coordinates need distinct endpoints");
    const GeodesicFrame f = geodesic_between(h.v_minus, h.v_plus);
    const LorentzVec X = geodesic_point(f.point, f.tangent, h.t);
    const LorentzVec V = geodesic_velocity(f.point, f.tangent, h.t);
    return {project(X), ball_direction(X, V)};
}

HopfPoint tangent_to_hopf(const TangentVector& v)
{
    const int d = v.base.dim();
    if (v.direction.size() != d) throw DomainError("tangent direction dimension differs from the base point");
    const LorentzVec X = lift(v.base);
    const LorentzVec V = hyperboloid_tangent(X, v.direction);
    const LorentzVec P = X + V, M = X - V;
    BoundaryPoint vp(Vec(P.tail(d) / P[0])), vm(Vec(M.tail(d) / M[0]));
    const GeodesicFrame f = geodesic_between(vm, vp);
    return {vp, vm, std::asinh(minkowski(X, f.tangent))};
}

// ---------------------------------------------------------------- equilibrium state

HopfPoint DiscretePhaseSpaceMeasure::atom(std::size_t k) const
{
    const Pair& p = pairs[k / times.size()];
    return {v_plus[p.i], v_minus[p.j], times[k % times.size()]};
}

DiscreteBoundaryMeasure DiscretePhaseSpaceMeasure::marginal_plus() const
{
    DiscreteBoundaryMeasure m;
    m.atoms = v_plus;
    m.weights.assign(v_plus.size(), 0.0);
    const double span = dt * static_cast<double>(times.size());
    for (const auto& p : pairs) m.weights[p.i] += p.weight * span;
    m.basepoint = BallPoint::origin(v_plus.front().dim());
    m.provenance = "v+ marginal of " + provenance;
    return m;
}

DiscreteBoundaryMeasure DiscretePhaseSpaceMeasure::marginal_minus() const
{
    DiscreteBoundaryMeasure m;
    m.atoms = v_minus;
    m.weights.assign(v_minus.size(), 0.0);
    const double span = dt * static_cast<double>(times.size());
    for (const auto& p : pairs) m.weights[p.j] += p.weight * span;
    m.basepoint = BallPoint::origin(v_minus.front().dim());
    m.provenance = "v- marginal of " + provenance;
    return m;
}

namespace {

// Drop the lightest atoms while their mass stays within the cut; original order kept.
double keep_heavy(const DiscreteBoundaryMeasure& mu, double cut, std::vector<BoundaryPoint>& atoms,
                  std::vector<double>& weights)
{
    std::vector<std::size_t> order(mu.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mu.weights[a] < mu.weights[b]; });
    const double budget = cut * mu.total_mass();
    std::vector<bool> drop(mu.size(), false);
    double dropped = 0.0;
    for (auto i : order) {
        if (dropped + mu.weights[i] > budget) break;
        dropped += mu.weights[i];
        drop[i] = true;
    }
    for (std::size_t i = 0; i < mu.size(); ++i)
        if (!drop[i]) {
            atoms.push_back(mu.atoms[i]);
            weights.push_back(mu.weights[i]);
        }
    return dropped;
}

}  // namespace

DiscretePhaseSpaceMeasure equilibrium_measure(const DiscreteBoundaryMeasure& mu_F, const DiscreteBoundaryMeasure& mu_F_flip,
                                              const Potential& F, const EquilibriumOptions& o)
{
    if (mu_F.size() == 0 || mu_F_flip.size() == 0) throw PreconditionError("equilibrium measure needs two nonempty densities");
    if (mu_F.dim() != mu_F_flip.dim() || mu_F.dim() != F.dim()) throw DomainError("density and potential dimensions differ");
    if (mu_F.basepoint.norm() > 1e-12 || mu_F_flip.basepoint.norm() > 1e-12)
        throw PreconditionError("both densities must be based at o");
    if (!(o.half_window > 0.0) || o.time_steps < 1) throw PreconditionError("time window must be nonempty");

    DiscretePhaseSpaceMeasure m;
    m.dropped_mass_plus = keep_heavy(mu_F, o.mass_cut, m.v_plus, m.w_plus);
    m.dropped_mass_minus = keep_heavy(mu_F_flip, o.mass_cut, m.v_minus, m.w_minus);
    m.dt = 2.0 * o.half_window / o.time_steps;
    for (int k = 0; k < o.time_steps; ++k) m.times.push_back(-o.half_window + (k + 0.5) * m.dt + o.time_shift);
    m.diagonal_cutoff = o.diagonal_cutoff;

    const BallPoint origin = BallPoint::origin(F.dim());
    double sum = 0.0;
    for (std::size_t i = 0; i < m.v_plus.size(); ++i) {
        for (std::size_t j = 0; j < m.v_minus.size(); ++j) {
            const double dvis = 0.5 * chord(m.v_plus[i], m.v_minus[j]);
            const double ww = m.w_plus[i] * m.w_minus[j];
            if (dvis < o.diagonal_cutoff) {
                ++m.excluded_pairs;
                m.excluded_product_mass += ww;
                continue;
            }
            // constant F = c: the Busemann functions at the closest point are both log d_o
            const double lg = F.is_constant() ? -F.constant_part() * std::log(dvis)
                                              : gap_map(F, origin, m.v_minus[j], m.v_plus[i], o.cocycle).log_value;
            const double w = ww * std::exp(-2.0 * lg);
            m.pairs.push_back({static_cast<int>(i), static_cast<int>(j), w, lg});
            sum += w;
        }
    }
    if (m.pairs.empty()) throw PreconditionError("no pair survives the diagonal cutoff");
    const double span = m.dt * o.time_steps;
    m.raw_total = sum * span;
    for (auto& p : m.pairs) p.weight /= m.raw_total;
    std::ostringstream os;
    os << "product of " << m.v_plus.size() << " x " << m.v_minus.size() << " atoms, " << o.time_steps
       << " times in [" << -o.half_window << ", " << o.half_window << "], cutoff " << o.diagonal_cutoff << ", "
       << F.describe();
    m.provenance = os.str();
    return m;
}

HopfChart tangent_chart(const Vec& reference)
{
    if (reference.size() != 2) throw DomainError("tangent chart is defined on T^1 H^2");
    const Vec ref = reference.normalized();
    return [ref](const HopfPoint& h) {
        const TangentVector v = hopf_to_tangent(h);
        Vec c(3);
        c << v.base[0], v.base[1], relative_angle(ref, v.direction);
        return c;
    };
}

HopfChart hopf_angle_chart(const BoundaryPoint& ref_plus, const BoundaryPoint& ref_minus)
{
    if (ref_plus.dim() != 2 || ref_minus.dim() != 2) throw DomainError("Hopf angle chart is defined on T^1 H^2");
    const Vec rp = ref_plus.coords(), rm = ref_minus.coords();
    return [rp, rm](const HopfPoint& h) {
        Vec c(3);
        c << relative_angle(rp, h.v_plus.coords()), relative_angle(rm, h.v_minus.coords()), h.t;
        return c;
    };
}

HopfFunction chart_bump(const HopfChart& chart, const Vec& center, double radius, double alpha)
{
    if (!(radius > 0.0) || !(alpha > 0.0)) throw PreconditionError("bump needs positive radius and exponent");
    return [chart, center, radius, alpha](const HopfPoint& h) {
        const double u = 1.0 - (chart(h) - center).norm() / radius;
        return u > 0.0 ? std::pow(u, alpha) : 0.0;
    };
}

PhaseSpaceDecayReport equilibrium_decay_check(const DiscretePhaseSpaceMeasure& m, const HopfChart& chart,
                                              const HopfFunction& bump, double zeta_min, double zeta_max,
                                              const PhaseSpaceDecayOptions& o)
{
    if (m.v_plus.empty() || m.v_plus.front().dim() != 2) throw DomainError("phase-space decay check is for d = 2");
    const int nb = band_count(zeta_min, zeta_max);

    // support atoms: chart values and bump-weighted masses
    std::vector<double> cx, cy, cz, a;
    std::vector<std::size_t> which;
    for (std::size_t k = 0; k < m.size(); ++k) {
        const HopfPoint h = m.atom(k);
        const double b = bump(h);
        if (b == 0.0) continue;
        const Vec c = chart(h);
        cx.push_back(c[0]);
        cy.push_back(c[1]);
        cz.push_back(c[2]);
        a.push_back(m.atom_weight(k) * b);
        which.push_back(k);
    }
    if (a.empty()) throw PreconditionError("the bump vanishes on every atom");

    PhaseSpaceDecayReport rep;
    rep.support_atoms = a.size();
    double mass = 0.0;
    for (double v : a) mass += v;
    rep.integral_at_zero = {mass, 0.0};

    // Jacobian of the chart in the coordinates (angle v+, angle v-, t)
    constexpr double h = 1e-6;
    const std::size_t ns = std::min<std::size_t>(which.size(), std::max(1, o.jacobian_samples));
    std::vector<Eigen::Matrix3d> jac;
    rep.min_jacobian = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < ns; ++s) {
        const HopfPoint p = m.atom(which[s * which.size() / ns]);
        Eigen::Matrix3d J;
        for (int e = 0; e < 3; ++e) {
            HopfPoint lo = p, hi = p;
            if (e == 0) {
                lo.v_plus = rotate2(p.v_plus, -h);
                hi.v_plus = rotate2(p.v_plus, h);
            } else if (e == 1) {
                lo.v_minus = rotate2(p.v_minus, -h);
                hi.v_minus = rotate2(p.v_minus, h);
            } else {
                lo.t -= h;
                hi.t += h;
            }
            const Vec d = (chart(hi) - chart(lo)) / (2.0 * h);
            for (int r = 0; r < 3; ++r) {
                // angle charts jump by 2 pi across their cut; such samples are not differentiable
                J(r, e) = std::abs(d[r]) > 1e3 ? std::numeric_limits<double>::quiet_NaN() : d[r];
            }
        }
        const double det = std::abs(J.determinant());
        if (std::isnan(det)) continue;
        rep.min_jacobian = std::min(rep.min_jacobian, det);
        jac.push_back(J);
    }
    if (!(rep.min_jacobian >= o.min_jacobian))
        throw PreconditionError("chart differential degenerates on the bump support (|det| = " + fmt(rep.min_jacobian) + ")");

    std::vector<Vec> dirs = o.directions;
    if (dirs.empty()) dirs = frequency_directions(3, 64);
    const int R = std::max(1, o.radii_per_band);
    std::vector<double> sphere_env(nb, 0.0), proj(a.size());
    rep.min_direction_exponent = std::numeric_limits<double>::infinity();
    for (const Vec& u : dirs) {
        for (std::size_t k = 0; k < a.size(); ++k) proj[k] = u[0] * cx[k] + u[1] * cy[k] + u[2] * cz[k];
        DecayReport d;
        d.dim = 3;
        for (int b = 0; b < nb; ++b) {
            const double lo = zeta_min * std::ldexp(1.0, b);
            double env = 0.0;
            for (int r = 0; r < R; ++r) env = std::max(env, std::abs(weighted_sum(proj, a, lo * std::exp2((r + 0.5) / R))));
            sphere_env[b] = std::max(sphere_env[b], env);
            if (env >= 1e-13 && d.bands.size() == static_cast<std::size_t>(b))
                d.bands.push_back({lo, 2.0 * lo, lo * std::numbers::sqrt2, env});
        }
        DirectionDecay dd{u, std::numeric_limits<double>::infinity(), 0.0, {0.0, 0.0, 0.0}, 0};
        if (d.bands.size() >= 3) {
            fit_bands(d);
            dd.exponent = d.fitted_exponent;
            dd.residual = d.fit_residual;
        }
        for (int e = 0; e < 3; ++e) {
            double lo = std::numeric_limits<double>::infinity();
            for (const auto& J : jac) lo = std::min(lo, std::abs(J(0, e) * u[0] + J(1, e) * u[1] + J(2, e) * u[2]));
            dd.min_partial[e] = lo;
        }
        dd.dominant = static_cast<int>(std::max_element(dd.min_partial.begin(), dd.min_partial.end()) -
                                       dd.min_partial.begin());
        rep.min_direction_exponent = std::min(rep.min_direction_exponent, dd.exponent);
        rep.per_direction.push_back(dd);
    }

    DecayReport& s = rep.sphere;
    s.dim = 3;
    s.directions = static_cast<int>(dirs.size());
    s.radii_per_band = R;
    for (int b = 0; b < nb; ++b) {
        const double lo = zeta_min * std::ldexp(1.0, b);
        if (sphere_env[b] < 1e-13) {
            s.truncated = true;
            s.warnings.push_back("sphere envelope below noise floor from |zeta| = " + fmt(lo));
            break;
        }
        s.bands.push_back({lo, 2.0 * lo, lo * std::numbers::sqrt2, sphere_env[b]});
    }
    if (s.bands.size() < 3) throw InsufficientDataError("fewer than three bands above the noise floor");
    fit_bands(s);
    return rep;
}

double sampled_holder_exponent(const std::function<double(double)>& f, double a, double b, double h_min, double h_max)
{
    if (!(b > a) || !(h_max > h_min) || !(h_min > 0.0)) throw PreconditionError("bad Hoelder sampling range");
    constexpr int kGrid = 4000;
    std::vector<double> lx, ly;
    for (double h = h_max; h >= h_min * (1.0 - 1e-12); h *= 0.5) {
        double m = 0.0;
        for (int i = 0; i <= kGrid; ++i) {
            const double x = a + (b - a) * i / kGrid;
            m = std::max(m, std::abs(f(x + h) - f(x)));
        }
        if (m > 0.0) {
            lx.push_back(std::log(h));
            ly.push_back(std::log(m));
        }
    }
    if (lx.size() < 3) throw InsufficientDataError("function is flat on the sampled scales");
    return linear_fit(lx, ly).slope;
}

// ---------------------------------------------------------------- localization and estimators

std::vector<PointFunction> angular_partition(int count)
{
    if (count < 1) throw PreconditionError("partition needs at least one bump");
    if (count == 1) return {[](const Vec&) { return 1.0; }};
    const double half = kTwoPi / count;
    auto raw = [half](double theta, int k) {
        const double u = wrap_pi(theta - k * half) / half;
        return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0;
    };
    std::vector<PointFunction> out;
    for (int k = 0; k < count; ++k) {
        out.push_back([raw, k, count](const Vec& x) {
            const double theta = std::atan2(x[1], x[0]);
            double total = 0.0;
            for (int m = 0; m < count; ++m) total += raw(theta, m);
            return raw(theta, k) / total;
        });
    }
    return out;
}

namespace {

PointMeasure localized(const PointMeasure& mu, const PointFunction& chi)
{
    PointMeasure out;
    out.dim = mu.dim;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const Vec x = mu.point(j);
        const double c = chi(x);
        if (c != 0.0) out.add(x, mu.weights[j] * c);
    }
    return out;
}

}  // namespace

LocalizationReport localization_check(const PointMeasure& mu, const std::vector<PointFunction>& bumps, double xi_min,
                                      double xi_max, const DecayOptions& o)
{
    LocalizationReport r;
    r.global = decay_fit(mu, xi_min, xi_max, o);
    r.min_local_exponent = std::numeric_limits<double>::infinity();
    r.argmin = -1;
    for (std::size_t b = 0; b < bumps.size(); ++b) {
        const PointMeasure part = localized(mu, bumps[b]);
        if (part.size() == 0 || part.total_mass() <= 0.0) continue;
        r.local.push_back(decay_fit(part, xi_min, xi_max, o));
        r.bump_index.push_back(static_cast<int>(b));
        if (r.local.back().fitted_exponent < r.min_local_exponent) {
            r.min_local_exponent = r.local.back().fitted_exponent;
            r.argmin = static_cast<int>(r.local.size()) - 1;
        }
    }
    if (r.local.empty()) throw PreconditionError("no bump carries mass");
    r.tolerance = 2.0 * (r.global.slack() + r.local[r.argmin].slack());
    r.consistent = std::abs(r.min_local_exponent - r.global.fitted_exponent) <= r.tolerance;
    return r;
}

namespace {

DimensionEstimate finish_estimate(DimensionEstimate e)
{
    e.value = std::numeric_limits<double>::infinity();
    e.slack = 0.0;
    for (const auto& m : e.members)
        if (!m.skipped && m.exponent < e.value) {
            e.value = m.exponent;
            e.slack = m.slack;
        }
    if (!std::isfinite(e.value)) throw PreconditionError("every family member was skipped");
    return e;
}

}  // namespace

DimensionEstimate lower_dim_estimate(const PointMeasure& mu, const std::vector<NamedChart>& charts,
                                     const std::vector<PointFunction>& bumps, double xi_min, double xi_max,
                                     const DecayOptions& o, double min_jacobian)
{
    constexpr double h = 1e-6;
    const int d = mu.dim;
    DimensionEstimate e{};
    for (const auto& c : charts) {
        for (std::size_t b = 0; b < bumps.size(); ++b) {
            const PointMeasure part = localized(mu, bumps[b]);
            if (part.size() == 0) continue;
            EstimatorMember mem{c.name, static_cast<int>(b), false, 0.0, 0.0};
            // Jacobian determinant at up to 256 support points
            const std::size_t ns = std::min<std::size_t>(part.size(), 256);
            for (std::size_t s = 0; s < ns && !mem.skipped; ++s) {
                const Vec x = part.point(s * part.size() / ns);
                Eigen::MatrixXd J(d, d);
                for (int k = 0; k < d; ++k) {
                    Vec xp = x, xm = x;
                    xp[k] += h;
                    xm[k] -= h;
                    const Vec col = (c.map(xp) - c.map(xm)) / (2.0 * h);
                    for (int r = 0; r < d; ++r) J(r, k) = col[r];
                }
                if (!(std::abs(J.determinant()) >= min_jacobian)) mem.skipped = true;
            }
            if (mem.skipped) {
                ++e.skipped;
                e.members.push_back(mem);
                continue;
            }
            PointMeasure image;
            image.dim = d;
            for (std::size_t j = 0; j < part.size(); ++j) image.add(c.map(part.point(j)), part.weights[j]);
            const DecayReport r = decay_fit(image, xi_min, xi_max, o);
            mem.exponent = std::min<double>(d, r.fitted_exponent);
            mem.slack = r.slack();
            e.members.push_back(mem);
        }
    }
    return finish_estimate(std::move(e));
}

DimensionEstimate real_phase_dim_estimate(const PointMeasure& mu, const std::vector<NamedPhase>& phases,
                                          const std::vector<PointFunction>& bumps, double xi_min, double xi_max,
                                          const DecayOptions& o, double min_gradient)
{
    constexpr double h = 1e-6;
    const int d = mu.dim;
    DimensionEstimate e{};
    for (const auto& p : phases) {
        for (std::size_t b = 0; b < bumps.size(); ++b) {
            const PointMeasure part = localized(mu, bumps[b]);
            if (part.size() == 0) continue;
            EstimatorMember mem{p.name, static_cast<int>(b), false, 0.0, 0.0};
            const std::size_t ns = std::min<std::size_t>(part.size(), 256);
            for (std::size_t s = 0; s < ns && !mem.skipped; ++s) {
                const Vec x = part.point(s * part.size() / ns);
                double g2 = 0.0;
                for (int k = 0; k < d; ++k) {
                    Vec xp = x, xm = x;
                    xp[k] += h;
                    xm[k] -= h;
                    const double g = (p.map(xp) - p.map(xm)) / (2.0 * h);
                    g2 += g * g;
                }
                if (!(std::sqrt(g2) >= min_gradient)) mem.skipped = true;
            }
            if (mem.skipped) {
                ++e.skipped;
                e.members.push_back(mem);
                continue;
            }
            PointMeasure image;
            image.dim = 1;
            for (std::size_t j = 0; j < part.size(); ++j)
                image.add(Vec::Constant(1, p.map(part.point(j))), part.weights[j]);
            const DecayReport r = decay_fit(image, xi_min, xi_max, o);
            mem.exponent = std::min<double>(d, r.fitted_exponent);
            mem.slack = r.slack();
            e.members.push_back(mem);
        }
    }
    return finish_estimate(std::move(e));
}

std::vector<NamedChart> polynomial_charts(int dim, int count, double size, std::uint64_t seed)
{
    if (dim < 1 || dim > 3) throw DomainError("charts exist for dimensions 1 to 3");
    std::vector<NamedChart> out;
    out.push_back({"identity", [](const Vec& x) { return x; }});
    std::mt19937_64 gen(seed);
    auto uniform = [&gen] { return 2.0 * std::ldexp(static_cast<double>(gen() >> 11), -53) - 1.0; };
    for (int c = 0; c < count; ++c) {
        // coefficient of x_a x_b (a <= b) in component k
        std::vector<double> q(dim * dim * dim, 0.0);
        for (int k = 0; k < dim; ++k)
            for (int a = 0; a < dim; ++a)
                for (int b = a; b < dim; ++b) q[(k * dim + a) * dim + b] = size * uniform();
        out.push_back({"quadratic-" + std::to_string(c + 1), [q, dim](const Vec& x) {
                           Vec y = x;
                           for (int k = 0; k < dim; ++k)
                               for (int a = 0; a < dim; ++a)
                                   for (int b = a; b < dim; ++b) y[k] += q[(k * dim + a) * dim + b] * x[a] * x[b];
                           return y;
                       }});
    }
    return out;
}

std::vector<NamedPhase> chart_phases(const std::vector<NamedChart>& charts, const std::vector<Vec>& units)
{
    std::vector<NamedPhase> out;
    for (const auto& c : charts)
        for (std::size_t k = 0; k < units.size(); ++k) {
            const Vec u = units[k];
            auto map = c.map;
            out.push_back({c.name + ".u" + std::to_string(k), [map, u](const Vec& x) { return u.dot(map(x)); }});
        }
    return out;
}

// ---------------------------------------------------------------- output

nlohmann::json to_json(const DecayReport& r)
{
    nlohmann::json j;
    j["fitted_exponent"] = r.fitted_exponent;
    j["exponent_stderr"] = r.exponent_stderr;
    j["fit_residual"] = r.fit_residual;
    j["intercept"] = r.intercept;
    j["range"] = {r.xi_min, r.xi_max};
    j["resolution_limit"] = r.resolution_limit;
    j["dim"] = r.dim;
    j["directions"] = r.directions;
    j["radii_per_band"] = r.radii_per_band;
    j["truncated"] = r.truncated;
    j["warnings"] = r.warnings;
    nlohmann::json bands = nlohmann::json::array();
    for (const auto& b : r.bands) bands.push_back({{"lo", b.lo}, {"hi", b.hi}, {"center", b.center}, {"envelope", b.envelope}});
    j["bands"] = bands;
    return j;
}

nlohmann::json to_json(const PhaseSpaceDecayReport& r)
{
    nlohmann::json j;
    j["sphere"] = to_json(r.sphere);
    j["integral_at_zero"] = {r.integral_at_zero.real(), r.integral_at_zero.imag()};
    j["min_jacobian"] = r.min_jacobian;
    j["support_atoms"] = r.support_atoms;
    j["min_direction_exponent"] = r.min_direction_exponent;
    static const char* names[] = {"v_plus", "v_minus", "t"};
    nlohmann::json dirs = nlohmann::json::array();
    for (const auto& d : r.per_direction)
        dirs.push_back({{"direction", {d.direction[0], d.direction[1], d.direction[2]}},
                        {"exponent", d.exponent},
                        {"residual", d.residual},
                        {"min_partial", d.min_partial},
                        {"dominant", names[d.dominant]}});
    j["per_direction"] = dirs;
    return j;
}

nlohmann::json to_json(const DimensionEstimate& r)
{
    nlohmann::json j;
    j["value"] = r.value;
    j["slack"] = r.slack;
    j["skipped"] = r.skipped;
    nlohmann::json m = nlohmann::json::array();
    for (const auto& e : r.members)
        m.push_back({{"member", e.chart}, {"bump", e.bump}, {"skipped", e.skipped}, {"exponent", e.exponent}, {"slack", e.slack}});
    j["members"] = m;
    return j;
}

void write_decay_csv(const DecayReport& r, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f.precision(12);
    f << "band_lo,band_hi,center,envelope,fit\n";
    for (const auto& b : r.bands)
        f << b.lo << ',' << b.hi << ',' << b.center << ',' << b.envelope << ','
          << std::exp(r.intercept - 0.5 * r.fitted_exponent * std::log(b.center)) << '\n';
}

void write_decay_svg(const DecayReport& r, const std::string& path)
{
    if (r.bands.empty()) throw PreconditionError("nothing to plot");
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    constexpr double W = 480, H = 320, M = 40;
    double x0 = std::log10(r.bands.front().center), x1 = std::log10(r.bands.back().center);
    double y0 = 1e300, y1 = -1e300;
    for (const auto& b : r.bands) {
        y0 = std::min(y0, std::log10(b.envelope));
        y1 = std::max(y1, std::log10(b.envelope));
    }
    if (x1 - x0 < 1e-9) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-9) y1 = y0 + 1.0;
    auto X = [&](double v) { return M + (W - 2 * M) * (v - x0) / (x1 - x0); };
    auto Y = [&](double v) { return H - M - (H - 2 * M) * (v - y0) / (y1 - y0); };
    auto fit = [&](double c) { return (r.intercept - 0.5 * r.fitted_exponent * std::log(c)) / std::log(10.0); };
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    f << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    f << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
    const double c0 = r.bands.front().center, c1 = r.bands.back().center;
    f << "<line x1=\"" << X(std::log10(c0)) << "\" y1=\"" << Y(fit(c0)) << "\" x2=\"" << X(std::log10(c1)) << "\" y2=\""
      << Y(fit(c1)) << "\" stroke=\"steelblue\"/>\n";
    for (const auto& b : r.bands)
        f << "<circle cx=\"" << X(std::log10(b.center)) << "\" cy=\"" << Y(std::log10(b.envelope))
          << "\" r=\"3\" fill=\"black\"/>\n";
    f << "<text x=\"" << M << "\" y=\"" << M - 10 << "\" font-size=\"12\">log10 envelope vs log10 |xi|, exponent "
      << fmt(r.fitted_exponent) << "</text>\n";
    f << "</svg>\n";
}

}  // namespace pslab
