#include "pslab/stationary.hpp"

#include "pslab/errors.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

namespace pslab {

namespace {

std::string describe(const BoundaryPoint& xi)
{
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < xi.dim(); ++i) os << (i ? ", " : "") << xi[i];
    os << ")";
    return os.str();
}

bool shortlex_less(const std::string& a, const std::string& b)
{
    return a.size() != b.size() ? a.size() < b.size() : a < b;
}

double wrap_angle(double a)
{
    const double tau = 2.0 * std::numbers::pi;
    a = std::fmod(a, tau);
    return a < 0.0 ? a + tau : a;
}

std::size_t nearest_index(const std::vector<BoundaryPoint>& pts, const BoundaryPoint& xi)
{
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = (pts[i].coords() - xi.coords()).squaredNorm();
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    return best;
}

std::string reduce_word(const SchottkySystem& G, const std::string& w)
{
    std::string out;
    for (char c : w) {
        if (!out.empty() && G.letters[G.letter_index(out.back())].inverse == G.letter_index(c)) out.pop_back();
        else out.push_back(c);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- grid

std::vector<BoundaryPoint> limit_points(const SchottkySystem& G, int depth, std::size_t count)
{
    if (depth < 1) throw PreconditionError("limit grid depth must be at least 1");
    // attracting fixed point of each letter
    std::vector<BoundaryPoint> fixed;
    for (const auto& L : G.letters) {
        BoundaryPoint x = L.cap.center;
        for (int k = 0; k < 200; ++k) {
            BoundaryPoint y = L.map.apply(x);
            const double moved = chord(x, y);
            x = y;
            if (moved < 1e-15) break;
        }
        fixed.push_back(x);
    }
    const auto words = words_of_length(G, depth);
    const std::size_t take = count == 0 ? words.size() : std::min(count, words.size());
    std::vector<BoundaryPoint> out;
    out.reserve(take);
    for (std::size_t k = 0; k < take; ++k) {
        const std::string& w = words[take == words.size() ? k : (k * words.size()) / take];
        out.push_back(G.apply_word(w.substr(0, w.size() - 1), fixed[G.letter_index(w.back())]));
    }
    return out;
}

LimitGrid make_limit_grid(const SchottkySystem& G, int depth, std::size_t max_points)
{
    LimitGrid grid;
    grid.depth = depth;
    grid.points = limit_points(G, depth, max_points);

    // Hausdorff distance from a finer sample to the grid
    const auto proxy = limit_points(G, depth + 2, 4 * grid.points.size());
    if (G.dim == 2) {
        std::vector<double> ang;
        ang.reserve(grid.points.size());
        for (const auto& p : grid.points) ang.push_back(wrap_angle(p.angle()));
        std::sort(ang.begin(), ang.end());
        const double tau = 2.0 * std::numbers::pi;
        for (const auto& p : proxy) {
            const double a = wrap_angle(p.angle());
            auto it = std::lower_bound(ang.begin(), ang.end(), a);
            const double hi = it == ang.end() ? ang.front() + tau : *it;
            const double lo = it == ang.begin() ? ang.back() - tau : *(it - 1);
            const double gap = std::min(hi - a, a - lo);
            grid.resolution = std::max(grid.resolution, 2.0 * std::sin(0.5 * gap));
        }
        // the diameter is attained between points; the angular span is enough for d = 2
        double far = 0.0;
        for (const auto& p : grid.points) {
            const double a = wrap_angle(p.angle()) + std::numbers::pi;
            auto it = std::lower_bound(ang.begin(), ang.end(), wrap_angle(a));
            for (int k = -1; k <= 0; ++k) {
                auto jt = it;
                if (k == -1) jt = it == ang.begin() ? ang.end() - 1 : it - 1;
                else if (jt == ang.end()) jt = ang.begin();
                far = std::max(far, 2.0 * std::abs(std::sin(0.5 * (*jt - a + std::numbers::pi))));
            }
        }
        grid.diameter = 0.5 * far;
    } else {
        for (const auto& p : proxy) {
            double m = std::numeric_limits<double>::infinity();
            for (const auto& g : grid.points) m = std::min(m, chord(p, g));
            grid.resolution = std::max(grid.resolution, m);
        }
        double far = 0.0;
        for (std::size_t i = 0; i < grid.points.size(); ++i)
            for (std::size_t j = i + 1; j < grid.points.size(); ++j) far = std::max(far, chord(grid.points[i], grid.points[j]));
        grid.diameter = 0.5 * far;
    }
    return grid;
}

int grid_depth_for(const SchottkySystem& G, double c_gamma, int n_max)
{
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& l : G.letters) dmin = std::min(dmin, l.map.displacement());
    return std::max(1, static_cast<int>(std::ceil(n_max * 4.0 * c_gamma / dmin - 1e-12)));
}

// ---------------------------------------------------------------- f_gamma, eta

double f_gamma(const CocycleTables& tables, const std::string& word, const BoundaryPoint& xi)
{
    if (word.empty()) return 1.0;
    return std::exp(tables.log_f(word, xi));
}

double f_gamma_direct(const Potential& F, const GroupElement& g, const BoundaryPoint& xi, const CocycleOptions& o)
{
    if (g.word.empty()) return 1.0;
    const int d = g.map.dim();
    const LorentzVec O = lift(BallPoint::origin(d));
    const LorentzVec GO = g.map.lorentz().col(0);
    return std::exp(gibbs_cocycle_rays(F, xi, O, GO, o).value);
}

EtaPoint eta_point(const GroupElement& g, const SchottkySystem& G, const LimitGrid& grid, double c_gamma)
{
    if (grid.points.empty()) throw PreconditionError("eta point needs a nonempty limit grid");
    const LorentzMat& L = g.map.lorentz();
    const int d = g.map.dim();
    // A_gamma is centred at the direction of gamma^{-1}(o); its chord radius solves
    // g(gamma xi, x^m) = eps / 2 along the axis (see contraction_profile).
    const Vec back = -L.row(0).tail(d).transpose();
    const BoundaryPoint rep(Vec(back / back.norm()));
    const double beta = g.map.origin_radius();
    const double eps = g.map.epsilon();
    const double target = 1.0 - 0.5 * eps;
    const double b2 = 1.0 + beta * beta;
    const double s_star = (b2 * target - 2.0 * beta) / (b2 - 2.0 * beta * target);
    const double cap_radius = std::sqrt(std::max(0.0, 2.0 * (1.0 + s_star)));

    std::size_t arg = 0;
    double low = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        const double dot = grid.points[i].coords().dot(rep.coords());
        if (dot < low) {
            low = dot;
            arg = i;
        }
    }
    const BoundaryPoint& hat = grid.points[arg];
    const double hat_distance = std::max(0.0, 0.5 * (chord(hat, rep) - cap_radius));
    if (hat_distance <= grid.diameter / 3.0)
        throw ValidationError("eta point for " + g.word + ": no grid point farther than diam/3 from A_gamma (grid too coarse)");
    BoundaryPoint eta = G.apply_word(g.word, hat);
    if (!element_shadow(g, c_gamma).contains(eta))
        throw ValidationError("eta point for " + g.word + " falls outside B_gamma at " + describe(eta));
    return EtaPoint{eta, hat, hat_distance, grid.diameter};
}

// ---------------------------------------------------------------- context

std::pair<std::size_t, std::size_t> StationaryContext::annulus_range(int n) const
{
    if (n < 1 || n > n_max) throw PreconditionError("annulus index out of range");
    auto lo = std::lower_bound(member_annulus.begin(), member_annulus.end(), n);
    auto hi = std::upper_bound(member_annulus.begin(), member_annulus.end(), n);
    return {static_cast<std::size_t>(lo - member_annulus.begin()), static_cast<std::size_t>(hi - member_annulus.begin())};
}

StationaryContext make_context(const CocycleTables& tables, double c_gamma, int n_max, LimitGrid grid)
{
    if (!(c_gamma > 0.0)) throw PreconditionError("C_Gamma must be positive");
    if (n_max < 1) throw PreconditionError("n_max must be at least 1");
    const SchottkySystem& G = tables.group();
    StationaryContext ctx;
    ctx.tables = &tables;
    ctx.c_gamma = c_gamma;
    ctx.n_max = n_max;
    ctx.grid = std::move(grid);
    ctx.elements = enumerate_elements(G, 4.0 * c_gamma * n_max + 2.0 * c_gamma + 1e-9);
    tables.assign_weights(ctx.elements);
    ctx.annuli = stratify_annuli(ctx.elements, c_gamma, n_max);

    for (int n = 1; n <= n_max; ++n) {
        auto idx = ctx.annuli.at(n).members;
        if (idx.empty()) throw PreconditionError("annulus S_" + std::to_string(n) + " is empty");
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            return shortlex_less(ctx.elements.elements[a].word, ctx.elements.elements[b].word);
        });
        for (int i : idx) {
            ctx.members.push_back(i);
            ctx.member_annulus.push_back(n);
        }
    }
    for (std::size_t m = 0; m < ctx.members.size(); ++m) {
        const GroupElement& g = ctx.element(m);
        ctx.eta.push_back(eta_point(g, G, ctx.grid, c_gamma).eta);
        ctx.log_w.push_back(g.log_weight_F);
        ctx.shadow.push_back(element_shadow(g, c_gamma));
    }

    // prefix tree
    const int nl = static_cast<int>(G.letters.size());
    std::vector<std::vector<int>> child(1, std::vector<int>(nl, -1));
    ctx.tree.push_back({-1, -1, -1, INT_MAX});
    for (std::size_t m = 0; m < ctx.members.size(); ++m) {
        int node = 0;
        for (char c : ctx.element(m).word) {
            const int l = G.letter_index(c);
            if (child[node][l] < 0) {
                child[node][l] = static_cast<int>(ctx.tree.size());
                ctx.tree.push_back({node, l, -1, INT_MAX});
                child.emplace_back(nl, -1);
            }
            node = child[node][l];
        }
        ctx.tree[node].member = static_cast<int>(m);
        ctx.tree[node].min_n = std::min(ctx.tree[node].min_n, ctx.member_annulus[m]);
    }
    for (std::size_t i = ctx.tree.size(); i-- > 1;) {
        auto& p = ctx.tree[ctx.tree[i].parent];
        p.min_n = std::min(p.min_n, ctx.tree[i].min_n);
    }
    return ctx;
}

std::vector<double> member_log_f(const StationaryContext& ctx, const BoundaryPoint& xi, int n_upto)
{
    const SchottkySystem& G = ctx.tables->group();
    std::vector<double> out(ctx.size(), 0.0);
    thread_local std::vector<double> val;
    thread_local std::vector<BoundaryPoint> pulled;
    val.assign(ctx.tree.size(), 0.0);
    pulled.clear();
    pulled.reserve(ctx.tree.size());
    pulled.push_back(xi);
    for (std::size_t i = 1; i < ctx.tree.size(); ++i) {
        const auto& node = ctx.tree[i];
        if (node.min_n > n_upto) {
            pulled.push_back(xi);  // placeholder, never read
            continue;
        }
        const BoundaryPoint& p = pulled[node.parent];
        val[i] = val[node.parent] + ctx.tables->letter(node.letter, p);
        pulled.push_back(G.letters[G.letters[node.letter].inverse].map.apply(p));
        if (node.member >= 0 && ctx.member_annulus[node.member] <= n_upto) out[node.member] = val[i];
    }
    return out;
}

std::vector<double> annulus_sums(const StationaryContext& ctx, const std::vector<double>& coeff, const BoundaryPoint& xi,
                                 int n_upto)
{
    n_upto = std::min(n_upto, ctx.n_max);
    std::vector<double> sums(std::max(n_upto, 0), 0.0);
    if (n_upto < 1) return sums;
    const auto lf = member_log_f(ctx, xi, n_upto);
    for (std::size_t m = 0; m < ctx.size(); ++m) {
        const int n = ctx.member_annulus[m];
        if (n > n_upto) break;
        if (coeff[m] != 0.0) sums[n - 1] += coeff[m] * std::exp(lf[m]);
    }
    return sums;
}

std::size_t covering_element(const StationaryContext& ctx, const BoundaryPoint& eta, int n)
{
    auto [lo, hi] = ctx.annulus_range(n);
    if (lo == hi) throw PreconditionError("annulus S_" + std::to_string(n) + " is empty");
    std::size_t best = hi;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t m = lo; m < hi; ++m) {
        if (!ctx.shadow[m].contains(eta)) continue;
        const double d = chord(eta, ctx.eta[m]);
        if (d < bd) {
            bd = d;
            best = m;
        }
    }
    if (best == hi)
        throw ValidationError("no element of S_" + std::to_string(n) + " covers " + describe(eta) + "; increase C_Gamma");
    return best;
}

std::vector<double> approx_operator(const StationaryContext& ctx, int n,
                                    const std::function<double(const BoundaryPoint&)>& R,
                                    const std::vector<BoundaryPoint>& points)
{
    auto [lo, hi] = ctx.annulus_range(n);
    std::vector<double> coeff(ctx.size(), 0.0);
    for (std::size_t m = lo; m < hi; ++m) coeff[m] = R(ctx.eta[m]) * std::exp(ctx.log_w[m]);
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(annulus_sums(ctx, coeff, p, n)[n - 1]);
    return out;
}

std::vector<double> approx_operator(const StationaryContext& ctx, int n, const std::vector<double>& R_on_grid)
{
    if (R_on_grid.size() != ctx.grid.points.size()) throw PreconditionError("R must be given on every grid point");
    return approx_operator(
        ctx, n, [&](const BoundaryPoint& xi) { return R_on_grid[nearest_index(ctx.grid.points, xi)]; }, ctx.grid.points);
}

AMeasurement measure_A(const StationaryContext& ctx, int n_lo, int n_hi)
{
    if (n_lo < 1 || n_hi > ctx.n_max || n_lo > n_hi) throw PreconditionError("measure_A: bad annulus range");
    std::vector<double> w(ctx.size());
    for (std::size_t m = 0; m < ctx.size(); ++m) w[m] = std::exp(ctx.log_w[m]);
    AMeasurement a{1.0, std::vector<double>(n_hi - n_lo + 1, 0.0),
                   std::vector<double>(n_hi - n_lo + 1, std::numeric_limits<double>::infinity())};
    for (const auto& p : ctx.grid.points) {
        const auto s = annulus_sums(ctx, w, p, n_hi);
        for (int n = n_lo; n <= n_hi; ++n) {
            const double v = s[n - 1];
            a.max_P1[n - n_lo] = std::max(a.max_P1[n - n_lo], v);
            a.min_P1[n - n_lo] = std::min(a.min_P1[n - n_lo], v);
            a.A = std::max({a.A, v, 1.0 / v});
        }
    }
    for (std::size_t k = 0; k < a.max_P1.size(); ++k) a.A_n.push_back(std::max(a.max_P1[k], 1.0 / a.min_P1[k]));
    return a;
}

double AMeasurement::spread() const
{
    auto [lo, hi] = std::minmax_element(A_n.begin(), A_n.end());
    return *hi / *lo - 1.0;
}

// ---------------------------------------------------------------- nu

double NuMeasure::total() const
{
    double t = 0.0;
    for (const auto& e : entries) t += e.weight;
    return t;
}

std::vector<double> NuMeasure::weights() const
{
    std::vector<double> w;
    w.reserve(entries.size());
    for (const auto& e : entries) w.push_back(e.weight);
    return w;
}

NuMeasure NuMeasure::dirac_identity(int dim)
{
    NuMeasure nu;
    nu.entries.push_back({"", 1.0, 0, 0.0});
    nu.dim = dim;
    return nu;
}

NuBuild build_nu(const StationaryContext& ctx, double beta, double A)
{
    if (!(beta > 0.0 && beta < 1.0)) throw PreconditionError("beta must lie in (0,1)");
    if (!(A >= 1.0)) throw PreconditionError("A must be at least 1");
    const double step = beta / A;
    NuBuild out;
    out.R_at_eta.assign(ctx.size(), 0.0);
    std::vector<double> nu(ctx.size(), 0.0);

    for (int n = 1; n <= ctx.n_max; ++n) {
        auto [lo, hi] = ctx.annulus_range(n);
        for (std::size_t m = lo; m < hi; ++m) {
            double R = 1.0;
            if (n > 1)
                for (double s : annulus_sums(ctx, nu, ctx.eta[m], n - 1)) R -= s;
            if (!(R > 0.0))
                throw ValidationError("R_" + std::to_string(n - 1) + " is not positive at eta = " + describe(ctx.eta[m]) +
                                      " (A underestimated)");
            out.R_at_eta[m] = R;
            nu[m] = step * R * std::exp(ctx.log_w[m]);
        }
    }

    const std::size_t N = ctx.grid.points.size();
    for (int k = 0; k <= ctx.n_max; ++k)
        out.history.push_back({k, std::vector<double>(N, 1.0), 1.0, 1.0, beta, A, ctx.c_gamma});
    for (std::size_t i = 0; i < N; ++i) {
        const auto s = annulus_sums(ctx, nu, ctx.grid.points[i], ctx.n_max);
        double R = 1.0;
        for (int k = 1; k <= ctx.n_max; ++k) {
            R -= s[k - 1];
            out.history[k].R_values[i] = R;
        }
    }
    for (auto& st : out.history) {
        auto [mn, mx] = std::minmax_element(st.R_values.begin(), st.R_values.end());
        st.sup_norm = *mx;
        st.min_value = *mn;
        if (!(*mn > 0.0)) {
            const auto i = static_cast<std::size_t>(mn - st.R_values.begin());
            throw ValidationError("R_" + std::to_string(st.n) + " is not positive at grid point " +
                                  describe(ctx.grid.points[i]) + " (A underestimated)");
        }
    }

    NuMeasure& res = out.nu;
    res.beta = beta;
    res.A = A;
    res.c_gamma = ctx.c_gamma;
    res.n_max = ctx.n_max;
    res.dim = ctx.tables->group().dim;
    res.truncation_defect = out.history.back().sup_norm;
    for (std::size_t m = 0; m < ctx.size(); ++m)
        res.entries.push_back({ctx.element(m).word, nu[m], ctx.member_annulus[m], ctx.element(m).kappa});
    return out;
}

DiscreteBoundaryMeasure convolve(const NuMeasure& nu, const DiscreteBoundaryMeasure& mu, const SchottkySystem& G)
{
    const double total = nu.total();
    if (!(total > 0.0)) throw PreconditionError("nu has no mass");
    DiscreteBoundaryMeasure out;
    out.basepoint = mu.basepoint;
    out.provenance = "convolution of " + std::to_string(nu.entries.size()) + " elements with " + mu.provenance;
    for (const auto& e : nu.entries) {
        if (e.weight == 0.0) continue;
        const auto pushed = pushforward(G, e.word, mu);
        for (std::size_t i = 0; i < pushed.size(); ++i) {
            out.atoms.push_back(pushed.atoms[i]);
            out.weights.push_back(e.weight / total * pushed.weights[i]);
            out.labels.push_back(pushed.labels[i].empty() ? std::string() : reduce_word(G, e.word + pushed.labels[i]));
        }
    }
    return out;
}

// ---------------------------------------------------------------- residual

TentFamily test_tents(const SchottkySystem& G)
{
    TentFamily t;
    t.centers = sample_limit_set(G, 3, 20);
    const double widths[] = {0.1, 0.2, 0.4};
    for (std::size_t i = 0; i < t.centers.size(); ++i) t.widths.push_back(widths[i % 3]);
    return t;
}

namespace {

constexpr int kTentSteps = 32;

double tent(const BoundaryPoint& xi, const BoundaryPoint& c, double h)
{
    return std::max(0.0, 1.0 - chord(xi, c) / h);
}

// Angle-sorted prefix sums of a circle measure with ccw arc queries.
struct ArcIndex {
    std::vector<double> ang, prefix;

    explicit ArcIndex(const DiscreteBoundaryMeasure& mu)
    {
        std::vector<std::size_t> order(mu.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> a(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) a[i] = wrap_angle(mu.atoms[i].angle());
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x] < a[y]; });
        prefix.push_back(0.0);
        for (std::size_t i : order) {
            ang.push_back(a[i]);
            prefix.push_back(prefix.back() + mu.weights[i]);
        }
    }
    // mass of angles in [0, t]
    double upto(double t) const
    {
        return prefix[std::upper_bound(ang.begin(), ang.end(), t) - ang.begin()];
    }
    // mass of angles strictly below t
    double below(double t) const
    {
        return prefix[std::lower_bound(ang.begin(), ang.end(), t) - ang.begin()];
    }
    // closed ccw arc from a to b
    double arc(double a, double b) const
    {
        a = wrap_angle(a);
        b = wrap_angle(b);
        if (a <= b) return upto(b) - below(a);
        return prefix.back() - below(a) + upto(b);
    }
};

struct CircleCap {
    double center_angle;
    double half_width;  // >= pi means the whole circle
};

std::vector<CircleCap> residual_caps_2d(const SchottkySystem& G)
{
    std::vector<CircleCap> caps;
    const CapFamily fam = test_caps(2);
    for (const auto& c : fam.centers)
        for (double r : fam.radii) caps.push_back({c.angle(), r >= 2.0 ? 10.0 : 2.0 * std::asin(0.5 * r)});
    const TentFamily tents = test_tents(G);
    for (std::size_t t = 0; t < tents.centers.size(); ++t)
        for (int k = 0; k < kTentSteps; ++k) {
            const double r = (k + 0.5) * tents.widths[t] / kTentSteps;
            caps.push_back({tents.centers[t].angle(), r >= 2.0 ? 10.0 : 2.0 * std::asin(0.5 * r)});
        }
    return caps;
}

std::vector<ResidualReport> residuals_2d(const NuMeasure& nu, const std::vector<std::vector<double>>& weight_sets,
                                         const DiscreteBoundaryMeasure& mu, const SchottkySystem& G)
{
    const ArcIndex index(mu);
    const double mass = index.prefix.back();
    const auto caps = residual_caps_2d(G);
    const std::size_t n_caps = test_caps(2).centers.size() * test_caps(2).radii.size();
    const std::size_t K = weight_sets.size();
    std::vector<double> totals(K, 0.0);
    for (std::size_t k = 0; k < K; ++k)
        for (double w : weight_sets[k]) totals[k] += w;
    // conv[k][c] = sum_gamma w_k(gamma) mu(gamma^{-1} cap_c)
    std::vector<std::vector<double>> conv(K, std::vector<double>(caps.size(), 0.0));
    std::vector<double> masses(caps.size());
    for (std::size_t e = 0; e < nu.entries.size(); ++e) {
        bool used = false;
        for (std::size_t k = 0; k < K; ++k) used = used || weight_sets[k][e] != 0.0;
        if (!used) continue;
        const MoebiusMap back = G.word_map(SchottkySystem::inverse_word(nu.entries[e].word));
        for (std::size_t c = 0; c < caps.size(); ++c) {
            const auto& cap = caps[c];
            if (cap.half_width >= std::numbers::pi) {
                masses[c] = mass;
                continue;
            }
            const double a = back.apply(BoundaryPoint::from_angle(cap.center_angle - cap.half_width)).angle();
            const double b = back.apply(BoundaryPoint::from_angle(cap.center_angle + cap.half_width)).angle();
            masses[c] = index.arc(a, b);
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double w = weight_sets[k][e];
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < caps.size(); ++c) conv[k][c] += w * masses[c];
        }
    }
    std::vector<double> base(caps.size());
    for (std::size_t c = 0; c < caps.size(); ++c) {
        const auto& cap = caps[c];
        base[c] = cap.half_width >= std::numbers::pi ? mass
                                                       : index.arc(cap.center_angle - cap.half_width,
                                                                   cap.center_angle + cap.half_width);
    }
    std::vector<ResidualReport> out;
    for (std::size_t k = 0; k < K; ++k) {
        if (!(totals[k] > 0.0)) throw PreconditionError("weight set has no mass");
        ResidualReport r{0.0, 0.0, 0.0};
        for (std::size_t c = 0; c < n_caps; ++c)
            r.cap_distance = std::max(r.cap_distance, std::abs(conv[k][c] / totals[k] - base[c]));
        for (std::size_t c = n_caps; c < caps.size(); c += kTentSteps) {
            double diff = 0.0;
            for (int s = 0; s < kTentSteps; ++s) diff += conv[k][c + s] / totals[k] - base[c + s];
            r.tent_distance = std::max(r.tent_distance, std::abs(diff) / kTentSteps);
        }
        r.value = std::max(r.cap_distance, r.tent_distance);
        out.push_back(r);
    }
    return out;
}

ResidualReport residual_explicit(const NuMeasure& nu, const std::vector<double>& weights, const DiscreteBoundaryMeasure& mu,
                                 const SchottkySystem& G)
{
    NuMeasure w = nu;
    for (std::size_t e = 0; e < w.entries.size(); ++e) w.entries[e].weight = weights[e];
    const auto conv = convolve(w, mu, G);
    ResidualReport r{cap_mass_distance(conv, mu), 0.0, 0.0};
    const TentFamily tents = test_tents(G);
    for (std::size_t t = 0; t < tents.centers.size(); ++t) {
        double diff = 0.0;
        for (std::size_t i = 0; i < conv.size(); ++i) diff += conv.weights[i] * tent(conv.atoms[i], tents.centers[t], tents.widths[t]);
        for (std::size_t i = 0; i < mu.size(); ++i) diff -= mu.weights[i] * tent(mu.atoms[i], tents.centers[t], tents.widths[t]);
        r.tent_distance = std::max(r.tent_distance, std::abs(diff));
    }
    r.value = std::max(r.cap_distance, r.tent_distance);
    return r;
}

}  // namespace

std::vector<ResidualReport> stationarity_residuals(const NuMeasure& nu, const std::vector<std::vector<double>>& weight_sets,
                                                   const DiscreteBoundaryMeasure& mu, const SchottkySystem& G)
{
    for (const auto& w : weight_sets)
        if (w.size() != nu.entries.size()) throw PreconditionError("weight set does not match the support");
    if (mu.dim() == 2) return residuals_2d(nu, weight_sets, mu, G);
    std::vector<ResidualReport> out;
    for (const auto& w : weight_sets) out.push_back(residual_explicit(nu, w, mu, G));
    return out;
}

ResidualReport stationarity_residual(const NuMeasure& nu, const DiscreteBoundaryMeasure& mu, const SchottkySystem& G)
{
    return stationarity_residuals(nu, {nu.weights()}, mu, G).front();
}

std::vector<NuMeasure> shuffled_controls(const NuMeasure& nu, int count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<NuMeasure> out;
    auto w = nu.weights();
    for (int k = 0; k < count; ++k) {
        std::shuffle(w.begin(), w.end(), rng);
        NuMeasure c = nu;
        for (std::size_t e = 0; e < c.entries.size(); ++e) c.entries[e].weight = w[e];
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------- moment, generation

MomentReport exponential_moment(const NuMeasure& nu, double eps)
{
    if (!(eps >= 0.0)) throw PreconditionError("moment exponent must be nonnegative");
    MomentReport r;
    r.eps = eps;
    int n_hi = 0;
    for (const auto& e : nu.entries) n_hi = std::max(n_hi, e.n);
    r.annulus_sums.assign(n_hi, 0.0);
    r.total = 0.0;
    for (const auto& e : nu.entries) {
        const double ch = std::cosh(e.kappa), sh = std::sinh(e.kappa);
        const double norm = std::sqrt(2.0 * ch * ch + 2.0 * sh * sh + nu.dim - 1);
        const double v = std::pow(norm, eps) * e.weight;
        r.total += v;
        if (e.n >= 1) r.annulus_sums[e.n - 1] += v;
    }
    const double shrink = 1.0 - nu.beta / (nu.A * nu.A);
    if (!(shrink > 0.0 && shrink < 1.0)) throw PreconditionError("beta / A^2 must lie in (0,1)");
    r.ratio = shrink * std::exp(4.0 * nu.c_gamma * eps);
    r.eps_star = -std::log(shrink) / (4.0 * nu.c_gamma);
    r.converges = r.ratio < 1.0;
    r.monotone = true;
    for (std::size_t n = 1; n < r.annulus_sums.size(); ++n) r.monotone = r.monotone && r.annulus_sums[n] < r.annulus_sums[n - 1];
    return r;
}

namespace {

// Core graph of a subgroup of the free group: fold the bouquet of support loops.
int folded_vertex_count(const SchottkySystem& G, const std::vector<std::string>& words, bool& all_loops)
{
    const int ng = G.generator_count();
    struct Edge {
        int u, gen, v;
    };
    std::vector<Edge> edges;
    int nv = 1;
    for (const auto& w : words) {
        if (w.empty()) continue;
        int cur = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const int l = G.letter_index(w[i]);
            const int next = i + 1 == w.size() ? 0 : nv++;
            if (l < ng) edges.push_back({cur, l, next});
            else edges.push_back({next, l - ng, cur});
            cur = next;
        }
    }
    std::vector<int> parent(nv);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    bool changed = true;
    while (changed) {
        changed = false;
        std::map<std::pair<int, int>, int> out, in;
        for (const auto& e : edges) {
            const int u = find(e.u), v = find(e.v);
            auto [it, fresh] = out.emplace(std::make_pair(u, e.gen), v);
            if (!fresh && find(it->second) != v) {
                parent[find(it->second)] = v;
                changed = true;
            }
            auto [jt, fresh2] = in.emplace(std::make_pair(find(e.v), e.gen), find(e.u));
            if (!fresh2 && find(jt->second) != find(e.u)) {
                parent[find(jt->second)] = find(e.u);
                changed = true;
            }
        }
    }
    std::set<int> roots;
    std::vector<bool> loop(ng, false);
    for (const auto& e : edges) {
        roots.insert(find(e.u));
        roots.insert(find(e.v));
        if (find(e.u) == find(e.v)) loop[e.gen] = true;
    }
    all_loops = std::all_of(loop.begin(), loop.end(), [](bool b) { return b; });
    return static_cast<int>(roots.size());
}

}  // namespace

GenerationReport support_generates(const NuMeasure& nu, const SchottkySystem& G)
{
    GenerationReport r{false, true, {}, {}, 0};
    std::unordered_set<std::string> supp;
    std::vector<std::string> words;
    for (const auto& e : nu.entries)
        if (e.weight > 0.0 && !e.word.empty()) {
            supp.insert(e.word);
            words.push_back(e.word);
        }
    for (const auto& L : G.letters) {
        const std::string l(1, L.name);
        const std::string li = SchottkySystem::inverse_word(l);
        std::string wit;
        if (supp.count(l)) wit = l;
        else if (supp.count(li)) wit = "(" + li + ")^-1";
        for (auto it = words.begin(); wit.empty() && it != words.end(); ++it) {
            const std::string& s1 = *it;
            const std::string s1i = SchottkySystem::inverse_word(s1);
            // l = s1 s2, s1^-1 s2, s1 s2^-1, s1^-1 s2^-1
            const std::string a = reduce_word(G, s1i + l), b = reduce_word(G, s1 + l);
            const std::string c = reduce_word(G, li + s1), d = SchottkySystem::inverse_word(b);
            if (supp.count(a)) wit = s1 + " " + a;
            else if (supp.count(b)) wit = "(" + s1 + ")^-1 " + b;
            else if (supp.count(c)) wit = s1 + " (" + c + ")^-1";
            else if (supp.count(d)) wit = "(" + s1 + ")^-1 (" + d + ")^-1";
        }
        r.letters.push_back(l);
        r.witnesses.push_back(wit);
        r.witnessed = r.witnessed && !wit.empty();
    }
    if (words.empty()) {
        r.witnessed = false;
        return r;
    }
    bool loops = false;
    r.folded_vertices = folded_vertex_count(G, words, loops);
    r.generates = r.folded_vertices == 1 && loops;
    return r;
}

// ---------------------------------------------------------------- constants, search

StationaryConstants choose_constants(double c_gamma, double alpha, double delta_reg, double eps0_fraction)
{
    if (!(c_gamma > 0.0)) throw PreconditionError("C_Gamma must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw PreconditionError("alpha must lie in (0,1]");
    if (!(delta_reg > 0.0)) throw PreconditionError("regularity exponent must be positive");
    StationaryConstants k{alpha, delta_reg, eps0_fraction * delta_reg, 0.0, false};
    k.beta = 1.0 - std::exp(-4.0 * c_gamma * k.eps0);
    const double cap = 0.5 * (1.0 - std::exp(-4.0 * c_gamma * alpha));
    if (k.beta > cap) {
        k.beta = cap;
        k.beta_capped = true;
        k.eps0 = -std::log(1.0 - k.beta) / (4.0 * c_gamma);
    }
    return k;
}

CGammaSearch search_c_gamma(const CocycleTables& tables, int n_max, double start, double step, double stop,
                            double a_spread)
{
    if (!(start > 0.0)) throw PreconditionError("C_Gamma must be positive");
    if (!(step > 0.0)) throw PreconditionError("C_Gamma search step must be positive");
    const SchottkySystem& G = tables.group();
    CGammaSearch s;
    for (int k = 0;; ++k) {
        const double c = start + k * step;
        if (c > stop + 1e-12) break;
        s.tried.push_back(c);
        LimitGrid grid = make_limit_grid(G, grid_depth_for(G, c, n_max));
        const Enumeration E = enumerate_elements(G, 4.0 * c * n_max + 2.0 * c + 1e-9);
        const Annuli an = stratify_annuli(E, c, n_max);
        const CoveringReport cov = covering_report(E, an, grid.points);
        if (!cov.covered) {
            std::string why;
            for (const auto& lv : cov.levels)
                if (lv.uncovered > 0)
                    why += (why.empty() ? "" : ", ") + std::to_string(lv.uncovered) + " grid points uncovered by S_" +
                           std::to_string(lv.n);
            s.reasons.push_back(why);
            continue;
        }
        StationaryContext ctx = make_context(tables, c, n_max, std::move(grid));
        AMeasurement A = measure_A(ctx, 1, n_max);
        if (A.spread() > a_spread) {
            s.reasons.push_back("A_n spread " + std::to_string(A.spread()));
            continue;
        }
        s.reasons.push_back("accepted");
        s.c_gamma = c;
        s.context = std::move(ctx);
        s.A = A;
        return s;
    }
    throw ValidationError("no C_Gamma up to " + std::to_string(stop) + " passes covering and A stability");
}

// ---------------------------------------------------------------- io

nlohmann::json to_json(const NuMeasure& nu)
{
    nlohmann::json j;
    j["beta"] = nu.beta;
    j["A"] = nu.A;
    j["c_gamma"] = nu.c_gamma;
    j["alpha"] = nu.alpha;
    j["eps0"] = nu.eps0;
    j["truncation_defect"] = nu.truncation_defect;
    j["n_max"] = nu.n_max;
    j["dim"] = nu.dim;
    j["total"] = nu.total();
    auto& arr = j["entries"] = nlohmann::json::array();
    for (const auto& e : nu.entries) arr.push_back({{"word", e.word}, {"weight", e.weight}, {"n", e.n}, {"kappa", e.kappa}});
    return j;
}

NuMeasure nu_from_json(const nlohmann::json& j)
{
    try {
        NuMeasure nu;
        nu.beta = j.at("beta").get<double>();
        nu.A = j.at("A").get<double>();
        nu.c_gamma = j.at("c_gamma").get<double>();
        nu.alpha = j.value("alpha", 0.0);
        nu.eps0 = j.value("eps0", 0.0);
        nu.truncation_defect = j.value("truncation_defect", 0.0);
        nu.n_max = j.value("n_max", 0);
        nu.dim = j.value("dim", 2);
        for (const auto& e : j.at("entries"))
            nu.entries.push_back({e.at("word").get<std::string>(), e.at("weight").get<double>(), e.at("n").get<int>(),
                                  e.at("kappa").get<double>()});
        return nu;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed nu: ") + e.what());
    }
}

void write_history_csv(const std::vector<ApproxState>& history, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f.precision(17);
    f << "n,sup_R,min_R\n";
    for (const auto& s : history) f << s.n << ',' << s.sup_norm << ',' << s.min_value << '\n';
}

}  // namespace pslab
