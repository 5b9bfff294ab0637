#include "pslab/psdensity.hpp"

#include "pslab/errors.hpp"
#include "pslab/fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace pslab {

namespace {

constexpr double kPi = std::numbers::pi;

// Half opening angle of a chord ball on S^1.
double chord_to_angle(double r) { return 2.0 * std::asin(std::min(1.0, r / 2.0)); }

bool label_less(const std::string& a, const std::string& b)
{
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

std::vector<std::size_t> angle_order(const std::vector<BoundaryPoint>& pts)
{
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> a(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) a[i] = pts[i].angle();
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
    return idx;
}

}  // namespace

double DiscreteBoundaryMeasure::total_mass() const
{
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

DiscreteBoundaryMeasure DiscreteBoundaryMeasure::normalized() const
{
    const double m = total_mass();
    if (!(m > 0.0)) throw NumericError("cannot normalize a measure of zero mass");
    DiscreteBoundaryMeasure out = *this;
    for (double& w : out.weights) w /= m;
    return out;
}

double DiscreteBoundaryMeasure::mass_in_ball(const BoundaryPoint& center, double chord_radius) const
{
    double s = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i)
        if (chord(atoms[i], center) <= chord_radius) s += weights[i];
    return s;
}

void DiscreteBoundaryMeasure::deduplicate(double tol)
{
    const std::size_t n = atoms.size();
    if (n == 0) return;
    if (labels.size() != n) labels.assign(n, "");
    std::vector<std::size_t> order;
    if (dim() == 2) {
        order = angle_order(atoms);
    } else {
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return atoms[i][0] < atoms[j][0]; });
    }
    // representative of each atom: first atom in sort order within tol
    std::vector<std::size_t> rep(n);
    std::vector<std::size_t> reps;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        rep[i] = i;
        // scan back over atoms whose sort key is within tol
        for (std::size_t b = reps.size(); b-- > 0;) {
            const std::size_t r = reps[b];
            const double key_gap = dim() == 2 ? atoms[i].angle() - atoms[r].angle() : atoms[i][0] - atoms[r][0];
            if (key_gap > 4.0 * tol) break;
            if (chord(atoms[i], atoms[r]) < tol) {
                rep[i] = r;
                break;
            }
        }
        if (rep[i] == i) reps.push_back(i);
    }
    // wrap-around on the circle
    if (dim() == 2 && reps.size() > 1) {
        const std::size_t first = reps.front(), last = reps.back();
        if (chord(atoms[first], atoms[last]) < tol) {
            for (auto& r : rep)
                if (r == last) r = first;
            reps.pop_back();
        }
    }
    std::vector<double> mass(n, 0.0);
    std::vector<std::string> best(labels);
    for (std::size_t i = 0; i < n; ++i) {
        mass[rep[i]] += weights[i];
        if (label_less(labels[i], best[rep[i]])) best[rep[i]] = labels[i];
    }
    std::sort(reps.begin(), reps.end(), [&](std::size_t i, std::size_t j) {
        if (best[i] != best[j]) return label_less(best[i], best[j]);
        return i < j;
    });
    DiscreteBoundaryMeasure out;
    out.basepoint = basepoint;
    out.provenance = provenance;
    for (std::size_t r : reps) {
        out.atoms.push_back(atoms[r]);
        out.weights.push_back(mass[r]);
        out.labels.push_back(best[r]);
    }
    *this = std::move(out);
}

CapMassIndex::CapMassIndex(const DiscreteBoundaryMeasure& mu) : mu_(&mu)
{
    if (mu.dim() != 2) return;
    const auto order = angle_order(mu.atoms);
    angles_.reserve(order.size());
    prefix_.assign(order.size() + 1, 0.0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        angles_.push_back(mu.atoms[order[k]].angle());
        prefix_[k + 1] = prefix_[k] + mu.weights[order[k]];
    }
}

double CapMassIndex::mass(const BoundaryPoint& center, double chord_radius) const
{
    if (mu_->dim() != 2) return mu_->mass_in_ball(center, chord_radius);
    if (chord_radius >= 2.0) return prefix_.back();
    const double a = chord_to_angle(chord_radius);
    const double c = center.angle();
    auto range = [&](double lo, double hi) {
        auto i = std::lower_bound(angles_.begin(), angles_.end(), lo) - angles_.begin();
        auto j = std::upper_bound(angles_.begin(), angles_.end(), hi) - angles_.begin();
        return j > i ? prefix_[j] - prefix_[i] : 0.0;
    };
    double lo = c - a, hi = c + a;
    double m = range(std::max(lo, -kPi), std::min(hi, kPi));
    if (lo < -kPi) m += range(lo + 2 * kPi, kPi);
    if (hi > kPi) m += range(-kPi, hi - 2 * kPi);
    return m;
}

DiscreteBoundaryMeasure patterson_measure(const CocycleTables& tables, int depth, double s_offset)
{
    if (depth < 3) throw PreconditionError("patterson depth must be at least 3");
    if (!(s_offset >= 0.0)) throw PreconditionError("s_offset must be nonnegative");
    const SchottkySystem& G = tables.group();
    const Potential& F = tables.potential();
    const int dim = G.dim;
    const int nl = static_cast<int>(G.letters.size());

    DiscreteBoundaryMeasure mu;
    mu.basepoint = BallPoint::origin(dim);
    std::vector<double> logw;

    struct Frame {
        std::string word;
        LorentzMat L;
        int last;
    };
    std::vector<Frame> stack;
    for (int l = nl - 1; l >= 0; --l) stack.push_back({std::string(1, G.letters[l].name), G.letters[l].map.lorentz(), l});
    while (!stack.empty()) {
        Frame f = std::move(stack.back());
        stack.pop_back();
        const double kappa = std::acosh(std::max(1.0, f.L(0, 0)));
        const BoundaryPoint xm(Vec(f.L.col(0).tail(dim)));
        const double integral = static_cast<int>(f.word.size()) < depth ? 0.0
                                : F.is_constant()                        ? F.constant_part() * kappa
                                                                         : -tables.log_f(f.word, xm);
        if (static_cast<int>(f.word.size()) == depth) {
            mu.atoms.push_back(xm);
            mu.labels.push_back(f.word);
            logw.push_back(integral - s_offset * kappa);
        } else {
            for (int l = nl - 1; l >= 0; --l) {
                if (l == G.letters[f.last].inverse) continue;
                stack.push_back({f.word + G.letters[l].name, f.L * G.letters[l].map.lorentz(), l});
            }
        }
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    if (!std::isfinite(top)) throw NumericError("Patterson weights are not finite; try a larger s_offset");
    mu.weights.resize(logw.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logw.size(); ++i) total += (mu.weights[i] = std::exp(logw[i] - top));
    if (!(total > 0.0) || !std::isfinite(total))
        throw NumericError("all Patterson weights underflow; try a larger s_offset");
    for (double& w : mu.weights) w /= total;
    std::ostringstream p;
    p << "patterson depth=" << depth << " s_offset=" << s_offset;
    mu.provenance = p.str();
    mu.deduplicate();
    return mu;
}

DiscreteBoundaryMeasure transport_density(const DiscreteBoundaryMeasure& mu, const BallPoint& y, const Potential& F,
                                          const CocycleOptions& o)
{
    DiscreteBoundaryMeasure out = mu;
    out.basepoint = y;
    out.provenance = mu.provenance + " transported";
    if ((y.coords() - mu.basepoint.coords()).norm() == 0.0) return out;
    const LorentzVec X = lift(mu.basepoint), Y = lift(y);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const BoundaryPoint& xi = mu.atoms[i];
        double c;  // C_{F,xi}(y, x)
        if (F.is_constant()) {
            c = F.constant_part() * (busemann(xi, X) - busemann(xi, Y));
        } else {
            try {
                c = gibbs_cocycle_rays(F, xi, Y, X, o).value;
            } catch (const NumericError& e) {
                std::ostringstream m;
                m << "cocycle diverged at atom " << i << " (" << xi.coords().transpose() << "): " << e.what();
                throw NumericError(m.str());
            }
        }
        out.weights[i] = mu.weights[i] * std::exp(-c);
    }
    return out;
}

DiscreteBoundaryMeasure pushforward(const MoebiusMap& gamma, const DiscreteBoundaryMeasure& mu)
{
    DiscreteBoundaryMeasure out = mu;
    for (auto& a : out.atoms) a = gamma.apply(a);
    out.basepoint = gamma.apply(mu.basepoint);
    out.provenance = mu.provenance + " pushed";
    return out;
}

DiscreteBoundaryMeasure pushforward(const SchottkySystem& G, const std::string& word, const DiscreteBoundaryMeasure& mu)
{
    DiscreteBoundaryMeasure out = mu;
    for (auto& a : out.atoms) a = G.apply_word(word, a);
    out.basepoint = G.word_map(word).apply(mu.basepoint);
    out.provenance = mu.provenance + " pushed by " + word;
    return out;
}

bool ShadowCap::contains(const BoundaryPoint& xi) const
{
    if (whole_sphere) return true;
    if (basepoint.norm() == 0.0) return visual_distance_origin(xi, center) <= visual_radius;
    return visual_distance_exact(basepoint, xi, center) <= visual_radius;
}

ShadowCap shadow_cap(const BallPoint& x, const BallPoint& y, double R)
{
    const LorentzVec X = lift(x), Y = lift(y);
    const double d = lorentz_distance(X, Y);
    if (d <= R) return ShadowCap{BoundaryPoint(Vec::Unit(x.dim(), 0)), 1.0, x, true};
    const LorentzVec V = segment_tangent(X, Y);
    const LorentzVec ell = X + V;
    const BoundaryPoint center(Vec(ell.tail(x.dim()) / ell(0)));
    return ShadowCap{center, std::min(1.0, 0.5 * std::sinh(R) / std::sinh(d)), x, false};
}

ShadowCap element_shadow(const GroupElement& g, double c_gamma)
{
    const int dim = g.map.dim();
    if (g.word.empty() || g.kappa <= c_gamma) return ShadowCap{BoundaryPoint(Vec::Unit(dim, 0)), 1.0, BallPoint::origin(dim), true};
    const BoundaryPoint center(Vec(g.map.lorentz().col(0).tail(dim)));
    return ShadowCap{center, std::min(1.0, 0.5 * std::sinh(c_gamma) / std::sinh(g.kappa)), BallPoint::origin(dim), false};
}

bool ray_meets_ball(const BallPoint& x, const BoundaryPoint& xi, const BallPoint& y, double R)
{
    const LorentzVec X = lift(x), Y = lift(y);
    const LorentzVec V = ray_tangent(X, xi);
    // cosh d(Y, c(s)) = A cosh s + B sinh s, minimized over s >= 0
    const double A = -minkowski(Y, X), B = -minkowski(Y, V);
    const double ch = B < 0.0 ? std::sqrt(std::max(1.0, A * A - B * B)) : A;
    return ch <= std::cosh(R);
}

ShadowLemmaReport shadow_lemma_report(const DiscreteBoundaryMeasure& mu, const std::vector<GroupElement>& elements,
                                      double c_gamma, double factor)
{
    if (mu.basepoint.norm() != 0.0) throw PreconditionError("shadow lemma needs the density at o");
    std::size_t mu_depth = 0, el_depth = 0;
    for (const auto& l : mu.labels) mu_depth = std::max(mu_depth, l.size());
    for (const auto& g : elements) el_depth = std::max(el_depth, g.word.size());
    if (mu_depth > 0 && mu_depth < el_depth + 2)
        throw PreconditionError("density depth must exceed the element depth by at least 2");
    CapMassIndex index(mu);
    ShadowLemmaReport rep{};
    rep.min_ratio = INFINITY;
    rep.max_ratio = 0.0;
    double lo_s = INFINITY, hi_s = 0.0, lo_l = INFINITY, hi_l = 0.0;
    for (const auto& g : elements) {
        const ShadowCap cap = element_shadow(g, c_gamma);
        const double m = index.mass(cap.center, cap.chord_radius());
        const double w = std::exp(g.log_weight_F);
        ShadowRatio r{g.word, g.length(), m, w, m / w};
        rep.ratios.push_back(r);
        if (m <= 0.0) {
            ++rep.empty_caps;
            continue;
        }
        rep.min_ratio = std::min(rep.min_ratio, r.ratio);
        rep.max_ratio = std::max(rep.max_ratio, r.ratio);
        if (r.length >= 2 && r.length <= 4) lo_s = std::min(lo_s, r.ratio), hi_s = std::max(hi_s, r.ratio);
        if (r.length >= 4 && r.length <= 6) lo_l = std::min(lo_l, r.ratio), hi_l = std::max(hi_l, r.ratio);
    }
    if (rep.empty_caps > 0) {
        std::ostringstream m;
        m << rep.empty_caps << " shadow caps carry no mass; the density is too shallow for these elements";
        throw InsufficientDataError(m.str());
    }
    rep.spread = rep.max_ratio / rep.min_ratio;
    rep.band_short = hi_s > 0 ? hi_s / lo_s : 1.0;
    rep.band_long = hi_l > 0 ? hi_l / lo_l : 1.0;
    rep.pass = rep.spread <= factor && rep.band_long <= rep.band_short;
    return rep;
}

namespace {

// Median over atoms of the chord distance to the nearest other atom (0 for one atom).
double median_gap(const DiscreteBoundaryMeasure& mu)
{
    const std::size_t n = mu.size();
    if (n < 2) return 0.0;
    std::vector<double> gaps;
    if (mu.dim() == 2) {
        const auto order = angle_order(mu.atoms);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& a = mu.atoms[order[k]];
            const double l = chord(a, mu.atoms[order[(k + n - 1) % n]]);
            const double r = chord(a, mu.atoms[order[(k + 1) % n]]);
            gaps.push_back(std::min(l, r));
        }
    } else {
        const std::size_t stride = std::max<std::size_t>(1, n / 1000);
        for (std::size_t i = 0; i < n; i += stride) {
            double g = INFINITY;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) g = std::min(g, chord(mu.atoms[i], mu.atoms[j]));
            gaps.push_back(g);
        }
    }
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    return gaps[gaps.size() / 2];
}

}  // namespace

RegularityFit regularity_exponent(const DiscreteBoundaryMeasure& mu, std::size_t max_centres)
{
    if (mu.size() == 0) throw InsufficientDataError("empty measure");
    const double floor = 4.0 * median_gap(mu);
    CapMassIndex index(mu);
    const std::size_t stride = std::max<std::size_t>(1, mu.size() / std::max<std::size_t>(1, max_centres));
    RegularityFit fit{};
    std::vector<double> lx, ly;
    for (int k = 1; k <= 40; ++k) {
        const double r = std::ldexp(1.0, -k);
        if (r < floor) break;
        double sup = 0.0;
        for (std::size_t i = 0; i < mu.size(); i += stride) sup = std::max(sup, index.mass(mu.atoms[i], r));
        fit.radii.push_back(r);
        fit.sup_mass.push_back(sup);
        lx.push_back(std::log(r));
        ly.push_back(std::log(sup));
    }
    if (lx.size() < 4) throw InsufficientDataError("fewer than 4 populated scales in the regularity fit");
    const LinearFit f = linear_fit(lx, ly);
    fit.exponent = f.slope;
    fit.residual = f.residual;
    fit.constant = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k)
        fit.constant = std::max(fit.constant, fit.sup_mass[k] / std::pow(fit.radii[k], fit.exponent));
    return fit;
}

CoveringReport covering_report(const Enumeration& E, const Annuli& annuli, const std::vector<BoundaryPoint>& samples)
{
    CoveringReport rep{annuli.c_gamma, {}, true, 0};
    const std::size_t ns = samples.size();
    const bool circle = !samples.empty() && samples.front().dim() == 2;
    std::vector<std::size_t> order;
    std::vector<double> ang;
    if (circle) {
        order = angle_order(samples);
        for (auto i : order) ang.push_back(samples[i].angle());
    }
    for (const auto& A : annuli.annuli) {
        std::vector<int> count(ns + 1, 0);  // difference array over the angle order (d = 2) or direct counts
        for (int idx : A.members) {
            const ShadowCap cap = element_shadow(E.elements[idx], annuli.c_gamma);
            if (circle) {
                const double a = chord_to_angle(cap.chord_radius()), c = cap.center.angle();
                auto add = [&](double lo, double hi) {
                    auto i = std::lower_bound(ang.begin(), ang.end(), lo) - ang.begin();
                    auto j = std::upper_bound(ang.begin(), ang.end(), hi) - ang.begin();
                    if (j > i) ++count[i], --count[j];
                };
                if (cap.whole_sphere || a >= kPi) {
                    add(-kPi, kPi);
                    continue;
                }
                add(std::max(c - a, -kPi), std::min(c + a, kPi));
                if (c - a < -kPi) add(c - a + 2 * kPi, kPi);
                if (c + a > kPi) add(-kPi, c + a - 2 * kPi);
            } else {
                for (std::size_t s = 0; s < ns; ++s)
                    if (cap.contains(samples[s])) ++count[s];
            }
        }
        if (circle)
            for (std::size_t s = 1; s <= ns; ++s) count[s] += count[s - 1];
        CoveringLevel L{A.n, A.members.size(), 0, ns ? INT32_MAX : 0, 0};
        for (std::size_t s = 0; s < ns; ++s) {
            const int c = count[s];
            if (c == 0) ++L.uncovered;
            L.min_multiplicity = std::min(L.min_multiplicity, c);
            L.max_multiplicity = std::max(L.max_multiplicity, c);
        }
        rep.covered = rep.covered && L.uncovered == 0;
        rep.max_multiplicity = std::max(rep.max_multiplicity, L.max_multiplicity);
        rep.levels.push_back(L);
    }
    return rep;
}

CapFamily test_caps(int dim)
{
    return CapFamily{boundary_grid(dim, 128), {0.5, 0.25, 0.125, 0.0625}};
}

double cap_mass_distance(const DiscreteBoundaryMeasure& a, const DiscreteBoundaryMeasure& b)
{
    if (a.dim() != b.dim()) throw PreconditionError("measures live on spheres of different dimension");
    const CapFamily caps = test_caps(a.dim());
    CapMassIndex ia(a), ib(b);
    double d = 0.0;
    for (const auto& c : caps.centers)
        for (double r : caps.radii) d = std::max(d, std::abs(ia.mass(c, r) - ib.mass(c, r)));
    return d;
}

double support_fraction(const DiscreteBoundaryMeasure& mu, const std::vector<BoundaryPoint>& samples, double r)
{
    if (samples.empty()) return 0.0;
    double inside = 0.0;
    if (mu.dim() == 2) {
        const auto order = angle_order(samples);
        std::vector<double> ang;
        for (auto i : order) ang.push_back(samples[i].angle());
        const std::size_t n = ang.size();
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const double a = mu.atoms[i].angle();
            const std::size_t j = std::lower_bound(ang.begin(), ang.end(), a) - ang.begin();
            const double d = std::min(chord(mu.atoms[i], samples[order[j % n]]),
                                      chord(mu.atoms[i], samples[order[(j + n - 1) % n]]));
            if (d <= r) inside += mu.weights[i];
        }
    } else {
        for (std::size_t i = 0; i < mu.size(); ++i)
            for (const auto& s : samples)
                if (chord(mu.atoms[i], s) <= r) {
                    inside += mu.weights[i];
                    break;
                }
    }
    return inside / mu.total_mass();
}

void write_csv(const DiscreteBoundaryMeasure& mu, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << (mu.dim() == 2 ? "x,y,weight\n" : "x,y,z,weight\n");
    f.precision(17);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (int k = 0; k < mu.dim(); ++k) f << mu.atoms[i][k] << ',';
        f << mu.weights[i] << '\n';
    }
}

DiscreteBoundaryMeasure read_csv(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw Error("cannot read " + path);
    std::string line;
    std::getline(f, line);
    const int cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    if (cols != 3 && cols != 4) throw ConfigError("unexpected measure CSV header: " + line);
    DiscreteBoundaryMeasure mu;
    mu.basepoint = BallPoint::origin(cols - 1);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream s(line);
        Vec x(cols - 1);
        for (int k = 0; k < cols - 1; ++k) s >> x[k];
        double w;
        s >> w;
        if (!s) throw ConfigError("malformed measure CSV row in " + path);
        mu.atoms.emplace_back(x);
        mu.weights.push_back(w);
        mu.labels.emplace_back();
    }
    mu.provenance = "csv " + path;
    return mu;
}

nlohmann::json to_json(const DiscreteBoundaryMeasure& mu)
{
    nlohmann::json j;
    j["provenance"] = mu.provenance;
    j["basepoint"] = std::vector<double>(mu.basepoint.coords().begin(), mu.basepoint.coords().end());
    j["total_mass"] = mu.total_mass();
    auto& atoms = j["atoms"] = nlohmann::json::array();
    for (std::size_t i = 0; i < mu.size(); ++i) {
        nlohmann::json a;
        if (i < mu.labels.size() && !mu.labels[i].empty()) a["word"] = mu.labels[i];
        a["xi"] = std::vector<double>(mu.atoms[i].coords().begin(), mu.atoms[i].coords().end());
        a["weight"] = mu.weights[i];
        atoms.push_back(std::move(a));
    }
    return j;
}

}  // namespace pslab
