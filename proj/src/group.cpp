#include "pslab/group.hpp"

#include "pslab/errors.hpp"
#include "pslab/fit.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace pslab {

double Cap::half_angle() const
{
    return 2.0 * std::asin(std::min(1.0, radius / 2.0));
}

double cap_gap(const Cap& a, const Cap& b)
{
    double between = std::acos(std::clamp(a.center.coords().dot(b.center.coords()), -1.0, 1.0));
    return between - a.half_angle() - b.half_angle();
}

int SchottkySystem::letter_index(char name) const
{
    for (std::size_t i = 0; i < letters.size(); ++i)
        if (letters[i].name == name) return static_cast<int>(i);
    throw DomainError(std::string("unknown letter '") + name + "'");
}

MoebiusMap SchottkySystem::word_map(const std::string& word) const
{
    MoebiusMap g = MoebiusMap::identity(dim);
    for (char c : word) g = compose(g, letters[letter_index(c)].map);
    return g;
}

BoundaryPoint SchottkySystem::apply_word(const std::string& word, const BoundaryPoint& xi) const
{
    BoundaryPoint p = xi;
    for (auto it = word.rbegin(); it != word.rend(); ++it) p = letters[letter_index(*it)].map.apply(p);
    return p;
}

std::string SchottkySystem::inverse_word(const std::string& word)
{
    std::string out(word.rbegin(), word.rend());
    for (char& c : out) c = std::islower(static_cast<unsigned char>(c)) ? std::toupper(c) : std::tolower(c);
    return out;
}

namespace {

Vec json_vec(const nlohmann::json& j)
{
    auto v = j.get<std::vector<double>>();
    Vec out(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
    return out;
}

nlohmann::json vec_json(const Vec& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

// Rotation of S^{d-1} taking p to q.
MoebiusMap rotation_taking(const Vec& p, const Vec& q)
{
    const int d = static_cast<int>(p.size());
    if (d == 2) return rotation_2d(std::atan2(q[1], q[0]) - std::atan2(p[1], p[0]));
    Eigen::Vector3d a = p.head<3>(), b = q.head<3>();
    Eigen::Vector3d axis = a.cross(b);
    double s = axis.norm(), c = a.dot(b);
    Eigen::Matrix3d R;
    if (s < 1e-14) {
        if (c > 0) {
            R.setIdentity();
        } else {
            Eigen::Vector3d perp = std::abs(a[0]) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
            perp = (perp - perp.dot(a) * a).normalized();
            R = 2.0 * perp * perp.transpose() - Eigen::Matrix3d::Identity();
        }
    } else {
        R = Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
    }
    return rotation(Eigen::MatrixXd(R));
}

Cap attracting_cap(const MoebiusMap& g)
{
    return {BoundaryPoint(g.image_of_origin().coords()), std::sqrt(2.0 * g.epsilon())};
}

}  // namespace

SchottkySpec parse_schottky_spec(const nlohmann::json& j)
{
    SchottkySpec s;
    try {
        s.dim = j.value("dimension", 2);
        if (s.dim != 2 && s.dim != 3) throw ConfigError("dimension must be 2 or 3");
        for (const auto& g : j.value("generators", nlohmann::json::array())) {
            TranslationGenerator t{json_vec(g.at("axis")), g.at("radius").get<double>(), g.value("rotation", 0.0)};
            if (t.axis.size() != s.dim) throw ConfigError("generator axis has wrong dimension");
            s.translations.push_back(t);
        }
        for (const auto& c : j.value("cap_pairs", nlohmann::json::array())) {
            s.cap_pairs.push_back({BoundaryPoint(json_vec(c.at("repelling"))), BoundaryPoint(json_vec(c.at("attracting"))),
                                   c.at("radius").get<double>()});
        }
        s.min_gap = j.value("gap", s.min_gap);
        s.check_samples = j.value("check_samples", s.check_samples);
        s.budget = j.value("budget", s.budget);
        if (j.contains("C_Gamma") && !j["C_Gamma"].is_null()) {
            double c = j["C_Gamma"].get<double>();
            if (!(c > 0)) throw ConfigError("C_Gamma must be positive");
            s.c_gamma = c;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid group spec: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("invalid group spec: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const SchottkySpec& s)
{
    nlohmann::json j;
    j["dimension"] = s.dim;
    j["generators"] = nlohmann::json::array();
    for (const auto& t : s.translations)
        j["generators"].push_back({{"axis", vec_json(t.axis)}, {"radius", t.radius}, {"rotation", t.rotation_angle}});
    j["cap_pairs"] = nlohmann::json::array();
    for (const auto& c : s.cap_pairs)
        j["cap_pairs"].push_back({{"repelling", vec_json(c.repelling.coords())},
                                  {"attracting", vec_json(c.attracting.coords())},
                                  {"radius", c.radius}});
    j["gap"] = s.min_gap;
    j["check_samples"] = s.check_samples;
    j["budget"] = s.budget;
    j["C_Gamma"] = s.c_gamma ? nlohmann::json(*s.c_gamma) : nlohmann::json(nullptr);
    return j;
}

SchottkySpec reference_spec()
{
    SchottkySpec s;
    Vec e1(2), e2(2);
    e1 << 1, 0;
    e2 << 0, 1;
    s.translations = {{e1, 0.9, 0.0}, {e2, 0.9, 0.0}};
    return s;
}

SchottkySystem build_schottky(const SchottkySpec& spec)
{
    std::vector<MoebiusMap> gens;
    for (const auto& t : spec.translations) {
        if (t.axis.size() != spec.dim) throw ConfigError("generator axis has wrong dimension");
        if (!(t.radius > 0 && t.radius < 1)) throw ConfigError("generator radius must lie in (0,1)");
        MoebiusMap g = hyperbolic_translation(t.axis, t.radius);
        if (t.rotation_angle != 0.0) {
            if (spec.dim != 2) throw ConfigError("rotation angles are only supported in dimension 2");
            g = compose(g, rotation_2d(t.rotation_angle));
        }
        gens.push_back(g);
    }
    for (const auto& c : spec.cap_pairs) {
        if (c.repelling.dim() != spec.dim || c.attracting.dim() != spec.dim)
            throw ConfigError("cap center has wrong dimension");
        if (!(c.radius > 0 && c.radius < std::sqrt(2.0))) throw ConfigError("cap radius must lie in (0, sqrt 2)");
        const double beta = 1.0 - c.radius * c.radius / 2.0;
        MoebiusMap omega = rotation_taking(c.repelling.coords(), -c.attracting.coords());
        gens.push_back(compose(hyperbolic_translation(c.attracting.coords(), beta), omega));
    }
    if (gens.size() < 2) throw ConfigError("a non-elementary Schottky group needs at least two generators");
    if (gens.size() > 26) throw ConfigError("at most 26 generators are supported");

    SchottkySystem G;
    G.dim = spec.dim;
    const int n = static_cast<int>(gens.size());
    for (int i = 0; i < n; ++i) G.letters.push_back({static_cast<char>('a' + i), gens[i], attracting_cap(gens[i]), i + n});
    for (int i = 0; i < n; ++i) {
        MoebiusMap inv = inverse(gens[i]);
        G.letters.push_back({static_cast<char>('A' + i), inv, attracting_cap(inv), i});
    }

    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < G.letters.size(); ++i) {
        for (std::size_t j = i + 1; j < G.letters.size(); ++j) {
            double g = cap_gap(G.letters[i].cap, G.letters[j].cap);
            if (g <= spec.min_gap || g <= 0.0) {
                std::ostringstream os;
                os << "caps of letters '" << G.letters[i].name << "' and '" << G.letters[j].name
                   << "' are not separated (angular gap " << g << ", required > " << spec.min_gap << ")";
                throw ConfigError(os.str());
            }
            gap = std::min(gap, g);
        }
    }
    G.gap = gap;

    auto grid = boundary_grid(G.dim, spec.check_samples);
    for (const auto& L : G.letters) {
        const Cap& rep = G.letters[L.inverse].cap;
        for (const auto& xi : grid) {
            if (rep.contains(xi)) continue;
            BoundaryPoint img = L.map.apply(xi);
            if (!L.cap.contains(img, 1e-9)) {
                std::ostringstream os;
                os << "letter '" << L.name << "' maps sample (" << xi.coords().transpose() << ") to ("
                   << img.coords().transpose() << ") outside its cap";
                throw ValidationError(os.str());
            }
        }
    }
    return G;
}

GroupElement make_element(const SchottkySystem& G, const std::string& word)
{
    MoebiusMap m = G.word_map(word);
    double k = m.displacement();
    GroupElement e{word, m, k, std::exp(-k)};
    if (!word.empty()) e.last_letter = G.letter_index(word.back());
    return e;
}

namespace {

struct Node {
    std::string word;
    MoebiusMap map;
    int last;
    int index;  // position in output, -1 when not emitted
};

Enumeration enumerate_impl(const SchottkySystem& G, double kappa_max, int max_length, std::size_t budget)
{
    Enumeration E;
    E.kappa_max = kappa_max;
    double slack = 0.0;
    for (const auto& L : G.letters) slack = std::max(slack, L.map.displacement());
    const bool by_kappa = max_length <= 0;
    std::vector<Node> frontier;
    frontier.push_back({"", MoebiusMap::identity(G.dim), -1, -1});
    std::size_t visited = 0;
    const int nl = static_cast<int>(G.letters.size());
    for (int len = 1; !frontier.empty(); ++len) {
        if (!by_kappa && len > max_length) break;
        std::vector<Node> next;
        for (const auto& node : frontier) {
            for (int l = 0; l < nl; ++l) {
                if (node.last >= 0 && G.letters[node.last].inverse == l) continue;
                MoebiusMap m = compose(node.map, G.letters[l].map);
                const double k = m.displacement();
                if (by_kappa && k > kappa_max + slack) continue;
                if (++visited > budget) {
                    std::ostringstream os;
                    os << "enumeration exceeded the element budget of " << budget;
                    throw ResourceError(os.str());
                }
                Node child{node.word + G.letters[l].name, m, l, -1};
                if (!by_kappa || k <= kappa_max) {
                    child.index = static_cast<int>(E.elements.size());
                    GroupElement e{child.word, m, k, std::exp(-k)};
                    e.parent = node.index;
                    e.last_letter = l;
                    E.elements.push_back(std::move(e));
                    E.max_length = len;
                }
                next.push_back(std::move(child));
            }
        }
        frontier = std::move(next);
    }
    if (!by_kappa) {
        E.kappa_max = 0;
        for (const auto& e : E.elements) E.kappa_max = std::max(E.kappa_max, e.kappa);
    }
    return E;
}

}  // namespace

Enumeration enumerate_elements(const SchottkySystem& G, double kappa_max, std::size_t budget)
{
    if (!(kappa_max > 0)) throw PreconditionError("kappa_max must be positive");
    return enumerate_impl(G, kappa_max, 0, budget);
}

Enumeration enumerate_words(const SchottkySystem& G, int max_length, std::size_t budget)
{
    if (max_length < 1) throw PreconditionError("word length must be positive");
    return enumerate_impl(G, 0.0, max_length, budget);
}

Annuli stratify_annuli(const Enumeration& E, double c_gamma, int n_max)
{
    if (!(c_gamma > 0)) throw PreconditionError("C_Gamma must be positive");
    if (n_max < 1) throw PreconditionError("n_max must be at least 1");
    const double needed = 4.0 * c_gamma * n_max + 2.0 * c_gamma;
    if (E.kappa_max < needed) {
        std::ostringstream os;
        os << "enumeration to kappa " << E.kappa_max << " does not reach S_" << n_max << " (needs " << needed << ")";
        throw InsufficientDataError(os.str());
    }
    Annuli A;
    A.c_gamma = c_gamma;
    for (int n = 1; n <= n_max; ++n) A.annuli.push_back({n, std::exp(-4.0 * c_gamma * n), {}});
    for (int i = 0; i < static_cast<int>(E.elements.size()); ++i) {
        // r_gamma < r_n  <=>  kappa > 4Cn ;  r_gamma >= e^{-2C} r_n  <=>  kappa <= 4Cn + 2C
        const double k = E.elements[i].kappa;
        const double u = k / (4.0 * c_gamma);
        if (k <= 4.0 * c_gamma) {
            A.shallow.push_back(i);
            continue;
        }
        int n = static_cast<int>(std::ceil(u)) - 1;
        if (n < 1) n = 1;
        if (k > 4.0 * c_gamma * n && k <= 4.0 * c_gamma * n + 2.0 * c_gamma) {
            if (n <= n_max)
                A.annuli[n - 1].members.push_back(i);
            else
                A.deeper.push_back(i);
        } else if (n >= n_max) {
            A.deeper.push_back(i);
        } else {
            A.between.push_back(i);
        }
    }
    return A;
}

BoundaryPoint base_boundary_point(const SchottkySystem& G)
{
    auto grid = boundary_grid(G.dim, 4096);
    double best = -1e300;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double m = 1e300;
        for (const auto& L : G.letters) {
            double a = std::acos(std::clamp(grid[i].coords().dot(L.cap.center.coords()), -1.0, 1.0));
            m = std::min(m, a - L.cap.half_angle());
        }
        if (m > best) {
            best = m;
            arg = i;
        }
    }
    return grid[arg];
}

std::vector<std::string> words_of_length(const SchottkySystem& G, int length)
{
    std::vector<std::string> out{""};
    std::vector<int> last{-1};
    const int nl = static_cast<int>(G.letters.size());
    for (int len = 0; len < length; ++len) {
        std::vector<std::string> next;
        std::vector<int> nlast;
        for (std::size_t i = 0; i < out.size(); ++i) {
            for (int l = 0; l < nl; ++l) {
                if (last[i] >= 0 && G.letters[last[i]].inverse == l) continue;
                next.push_back(out[i] + G.letters[l].name);
                nlast.push_back(l);
            }
        }
        out = std::move(next);
        last = std::move(nlast);
    }
    return out;
}

std::vector<BoundaryPoint> sample_limit_set(const SchottkySystem& G, int depth, std::size_t count)
{
    if (depth < 1) throw PreconditionError("limit-set depth must be at least 1");
    auto words = words_of_length(G, depth);
    BoundaryPoint xi0 = base_boundary_point(G);
    std::vector<BoundaryPoint> out;
    const std::size_t total = words.size();
    const std::size_t take = std::min(count, total);
    out.reserve(take);
    for (std::size_t k = 0; k < take; ++k) {
        std::size_t i = take == total ? k : (k * total) / take;
        out.push_back(G.apply_word(words[i], xi0));
    }
    return out;
}

std::vector<BallPoint> sample_hull(const std::vector<BoundaryPoint>& limit_samples, std::size_t count,
                                   std::uint64_t seed, double spread)
{
    if (limit_samples.size() < 2) throw PreconditionError("hull sampling needs at least two limit samples");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, limit_samples.size() - 1);
    std::uniform_real_distribution<double> ut(-spread, spread);
    std::vector<BallPoint> out;
    out.reserve(count);
    while (out.size() < count) {
        std::size_t i = pick(rng), j = pick(rng);
        if (chord(limit_samples[i], limit_samples[j]) < 1e-9) continue;
        GeodesicFrame f = geodesic_between(limit_samples[j], limit_samples[i]);
        out.push_back(project(geodesic_point(f.point, f.tangent, ut(rng))));
    }
    return out;
}

CriticalExponent critical_exponent(const Enumeration& E, const std::vector<double>& log_weights, double window_c)
{
    if (!(window_c > 0)) throw PreconditionError("window width must be positive");
    if (log_weights.size() != E.elements.size()) throw PreconditionError("one log weight per element required");
    const int n_hi = static_cast<int>(std::floor(E.kappa_max));
    const int n_lo = std::max(static_cast<int>(std::ceil(window_c)), static_cast<int>(std::floor(E.kappa_max / 3.0)));
    CriticalExponent out{};
    // log-sum-exp per window
    for (int n = n_lo; n <= n_hi; ++n) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < E.elements.size(); ++i) {
            double k = E.elements[i].kappa;
            if (k > n - window_c && k <= n) mx = std::max(mx, log_weights[i]);
        }
        if (!std::isfinite(mx)) continue;
        double s = 0;
        for (std::size_t i = 0; i < E.elements.size(); ++i) {
            double k = E.elements[i].kappa;
            if (k > n - window_c && k <= n) s += std::exp(log_weights[i] - mx);
        }
        out.window_ends.push_back(n);
        out.log_sums.push_back(mx + std::log(s));
    }
    if (out.window_ends.size() < 3) throw InsufficientDataError("fewer than 3 populated windows for the critical exponent");
    LinearFit f = linear_fit(out.window_ends, out.log_sums);
    out.delta = f.slope;
    // Variation between the slopes of the two halves of the window range.
    const std::size_t m = out.window_ends.size();
    double spread = 0;
    if (m >= 6) {
        std::span<const double> x(out.window_ends), y(out.log_sums);
        LinearFit a = linear_fit(x.first(m / 2), y.first(m / 2));
        LinearFit b = linear_fit(x.subspan(m / 2), y.subspan(m / 2));
        spread = std::abs(a.slope - b.slope) / 2.0;
    }
    out.ci = std::max(2.0 * f.slope_stderr, spread);
    return out;
}

CriticalExponent critical_exponent(const Enumeration& E, double window_c)
{
    return critical_exponent(E, std::vector<double>(E.elements.size(), 0.0), window_c);
}

BoxCounting box_counting_dimension(const std::vector<BoundaryPoint>& points, double eps_max, double eps_min)
{
    if (points.empty()) throw InsufficientDataError("box counting needs points");
    BoxCounting out{};
    std::vector<double> logx, logy;
    for (double eps = eps_max; eps >= eps_min * (1 - 1e-12); eps /= 2.0) {
        std::set<std::array<long long, 3>> boxes;
        for (const auto& p : points) {
            std::array<long long, 3> key{0, 0, 0};
            if (p.dim() == 2) {
                key[0] = static_cast<long long>(std::floor((p.angle() + std::numbers::pi) / eps));
            } else {
                for (int i = 0; i < 3; ++i) key[i] = static_cast<long long>(std::floor(p[i] / eps));
            }
            boxes.insert(key);
        }
        out.scales.push_back(eps);
        out.counts.push_back(static_cast<double>(boxes.size()));
        logx.push_back(std::log(1.0 / eps));
        logy.push_back(std::log(static_cast<double>(boxes.size())));
    }
    if (logx.size() < 3) throw InsufficientDataError("box counting needs at least 3 scales");
    LinearFit f = linear_fit(logx, logy);
    out.dimension = f.slope;
    out.residual = f.residual;
    return out;
}

ConditionR check_condition_R(double sup_F_on_hull, double delta_hat, double slack)
{
    double margin = delta_hat - sup_F_on_hull;
    return {sup_F_on_hull, delta_hat, margin, slack, margin > slack};
}

}  // namespace pslab
