#pragma once
// Flat "key = value" scenario files: parsing with line/key diagnostics,
// typed access with defaults, construction of the model objects, and the
// diagnostics-list validator the batch runner consults before running.
//
// Format: one key per line, '#' starts a comment, blank lines are ignored.
// Keys are dotted and drawn from a strict whitelist; unknown or duplicate
// keys are diagnostics, not silent no-ops. Vector values are comma lists and
// are padded with zeros up to the scenario dimension, so "target.center = 3"
// places the center at 3 e_1 in any dimension.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hilbert_diffuse/drift.hpp"
#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/kolmogorov_oracle.hpp"
#include "hilbert_diffuse/positivity_lab.hpp"
#include "hilbert_diffuse/spectral_space.hpp"

namespace hd {

inline const std::set<std::string>& scenario_keys() {
    static const std::set<std::string> keys = {
        "model",          "dim",           "spectrum",       "spectrum.q",
        "drift",          "drift.value",   "operator",       "operator.gap",
        "initial",        "initial.center", "initial.variance", "initial.n",
        "initial.delta",  "target.center", "target.radius",  "T",
        "h",              "N",             "seed",           "jobs",
        "probes",         "M",             "oracle.cells",   "oracle.dt",
        "oracle.t",       "phi.center",    "phi.width",      "phi.scale"};
    return keys;
}

struct parsed_scenario {
    std::map<std::string, std::string> values;
    std::map<std::string, std::size_t> lines;     // 1-based, for diagnostics
    std::vector<std::string> diagnostics;         // structural problems
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline parsed_scenario parse_scenario_text(const std::string& text) {
    parsed_scenario out;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            out.diagnostics.push_back("line " + std::to_string(line_no) +
                                      ": expected 'key = value'");
            continue;
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            out.diagnostics.push_back("line " + std::to_string(line_no) + ": empty " +
                                      (key.empty() ? "key" : "value for '" + key + "'"));
            continue;
        }
        if (!scenario_keys().count(key)) {
            out.diagnostics.push_back("line " + std::to_string(line_no) + ": unknown key '" + key +
                                      "'");
            continue;
        }
        if (out.values.count(key)) {
            out.diagnostics.push_back("line " + std::to_string(line_no) + ": duplicate key '" +
                                      key + "' (first set on line " +
                                      std::to_string(out.lines[key]) + ")");
            continue;
        }
        out.values[key] = value;
        out.lines[key] = line_no;
    }
    return out;
}

inline parsed_scenario parse_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("scenario: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str());
}

// Typed access with defaults; every failure names the offending key.
class scenario_view {
  public:
    explicit scenario_view(const parsed_scenario& p) : p_(p) {}

    bool has(const std::string& key) const { return p_.values.count(key) != 0; }

    std::string word(const std::string& key, const std::string& def) const {
        const auto it = p_.values.find(key);
        return it == p_.values.end() ? def : it->second;
    }

    double number(const std::string& key, double def) const {
        const auto it = p_.values.find(key);
        return it == p_.values.end() ? def : parse_one(key, it->second);
    }

    std::uint64_t integer(const std::string& key, std::uint64_t def) const {
        const auto it = p_.values.find(key);
        if (it == p_.values.end()) return def;
        std::uint64_t v = 0;
        const std::string& s = it->second;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw config_error("scenario: key '" + key + "': bad unsigned integer '" + s + "'");
        return v;
    }

    std::vector<double> list(const std::string& key, std::vector<double> def = {}) const {
        const auto it = p_.values.find(key);
        if (it == p_.values.end()) return def;
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_one(key, detail::trim(item)));
        if (out.empty()) throw config_error("scenario: key '" + key + "': empty list");
        return out;
    }

    // Comma list padded with zeros to the scenario dimension.
    vec list_padded(const std::string& key, std::size_t dim) const {
        vec out = list(key, vec{});
        if (out.size() > dim)
            throw config_error("scenario: key '" + key + "' lists " +
                               std::to_string(out.size()) + " entries for dimension " +
                               std::to_string(dim));
        out.resize(dim, 0.0);
        return out;
    }

  private:
    static double parse_one(const std::string& key, const std::string& s) {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw config_error("scenario: key '" + key + "': bad number '" + s + "'");
        return v;
    }

    const parsed_scenario& p_;
};

inline covariance_spectrum build_spectrum(const scenario_view& v) {
    const std::string name = v.word("spectrum", "poly2");
    if (name == "custom") {
        if (!v.has("spectrum.q"))
            throw config_error("scenario: spectrum = custom requires spectrum.q");
        const vec q = v.list("spectrum.q");
        if (v.has("dim") && v.integer("dim", 0) != q.size())
            throw config_error("scenario: dim disagrees with the spectrum.q list length");
        return covariance_spectrum(q);
    }
    if (!v.has("dim")) throw config_error("scenario: dim is required");
    const auto d = static_cast<std::size_t>(v.integer("dim", 0));
    if (d == 0) throw config_error("scenario: dim must be positive");
    if (name == "poly2") return covariance_spectrum::poly2(d);
    if (name == "geom2") return covariance_spectrum::geom2(d);
    throw config_error("scenario: unknown spectrum preset '" + name + "'");
}

inline drift_model build_drift(const scenario_view& v, const covariance_spectrum& Q) {
    const std::string name = v.word("drift", "zero");
    if (name == "zero") return drift_model::zero(Q.dim);
    if (name == "constant") return drift_model::constant(v.number("drift.value", 1.0), Q.dim);
    if (name == "tanh") return drift_model::tanh_drift(Q);
    if (name == "sinstep") return drift_model::sinstep(Q);
    throw config_error("scenario: unknown drift preset '" + name + "'");
}

inline std::optional<linear_operator> build_operator(const scenario_view& v,
                                                     const covariance_spectrum& Q) {
    const std::string model = v.word("model", "bounded");
    if (model == "bounded") {
        if (v.has("operator"))
            throw config_error("scenario: the bounded model takes no operator key");
        return std::nullopt;
    }
    if (model != "linear")
        throw config_error("scenario: unknown model '" + model + "' (bounded | linear)");
    const std::string name = v.word("operator", "heat");
    if (name == "heat") return linear_operator::heat(Q.dim);
    if (name == "shifted_gap")
        return linear_operator::shifted_gap(Q.dim, v.number("operator.gap", 1.0));
    throw config_error("scenario: unknown operator preset '" + name + "'");
}

inline initial_law build_initial(const scenario_view& v, const covariance_spectrum& Q) {
    const std::string name = v.word("initial", "dirac");
    if (name == "dirac") return initial_law::dirac(v.list_padded("initial.center", Q.dim));
    if (name == "gaussian") {
        const vec mean = v.list_padded("initial.center", Q.dim);
        vec var = v.list("initial.variance", vec{1.0});
        if (var.size() == 1) var.assign(Q.dim, var[0]);
        if (var.size() != Q.dim)
            throw config_error("scenario: initial.variance must be scalar or one entry per mode");
        return initial_law::gaussian(mean, var);
    }
    if (name == "shell") {
        if (!v.has("initial.n") || !v.has("initial.delta"))
            throw config_error("scenario: shell initial requires initial.n and initial.delta");
        return initial_law::shell(v.number("initial.n", 0.0), v.number("initial.delta", 0.0), Q);
    }
    throw config_error("scenario: unknown initial law '" + name + "'");
}

inline scenario build_scenario(const scenario_view& v) {
    covariance_spectrum Q = build_spectrum(v);
    auto op = build_operator(v, Q);
    auto F = build_drift(v, Q);
    auto init = build_initial(v, Q);
    const double T = v.number("T", 1.0);
    ellipsoid target{v.list_padded("target.center", Q.dim), v.number("target.radius", 1.0), Q};
    scenario sc{std::move(Q),
                std::move(op),
                std::move(F),
                std::move(init),
                std::move(target),
                T,
                v.number("h", 1e-2),
                v.list("probes", {T}),
                static_cast<std::size_t>(v.integer("N", 1000)),
                v.integer("seed", 0),
                static_cast<unsigned>(v.integer("jobs", 1))};
    return sc;
}

// Builds the weak-identity test function from its scenario keys.
inline cylindrical_bump build_bump(const scenario_view& v) {
    const vec center = v.list("phi.center", {0.0});
    vec width = v.list("phi.width", vec(center.size(), 1.5));
    if (width.size() == 1 && center.size() > 1) width.assign(center.size(), width[0]);
    return cylindrical_bump(center, width, v.number("phi.scale", 1.0));
}

// Box half-width for the oracle commands: shared by the pre-flight check and
// the run so the two can never disagree. The offset term covers the initial
// mean plus three units of initial spread.
inline double oracle_box_halfwidth(const scenario& sc, const scenario_view& v, double t) {
    return fp_box_halfwidth(sc.spectrum.q, t,
                            h_norm(v.list_padded("initial.center", sc.spectrum.dim)) + 3.0,
                            sc.drift.sup_h);
}

// Every problem that would keep the command from running, as one list;
// empty iff runnable. Construction errors become diagnostics, not throws.
inline std::vector<std::string> validate_scenario(const parsed_scenario& parsed,
                                                  const std::string& command) {
    std::vector<std::string> out = parsed.diagnostics;
    const scenario_view v(parsed);
    auto guard = [&](auto&& fn) {
        try {
            fn();
            return true;
        } catch (const error& e) {
            out.push_back(e.what());
            return false;
        }
    };

    std::optional<scenario> sc;
    guard([&] { sc.emplace(build_scenario(v)); });
    if (!sc) return out;
    guard([&] { sc->validate(); });

    if (command == "lemma-tau") {
        guard([&] {
            const double tau = tau_of_r(sc->target.radius, sc->drift, tau_variant::h_norm);
            for (double p : sc->probes)
                if (p > tau + 1e-12)
                    throw config_error("lemma-tau: probe " + std::to_string(p) +
                                       " lies beyond the staying horizon tau_h = " +
                                       std::to_string(tau));
        });
    } else if (command == "chain") {
        guard([&] {
            const double tau = tau_of_r(sc->target.radius, sc->drift, tau_variant::h_norm);
            const double M = v.number("M", 3.0 * tau);
            if (!(M > tau))
                throw config_error("chain: total horizon M = " + std::to_string(M) +
                                   " must exceed tau = " + std::to_string(tau));
        });
    } else if (command == "novikov") {
        guard([&] {
            if (sc->h > 1e-4 + 1e-15)
                throw config_error(
                    "novikov: h must be <= 1e-4 for the pinned residual budgets to apply");
        });
    } else if (command == "observables") {
        guard([&] {
            if (sc->op)
                throw config_error(
                    "observables: the unit-clock diagnostics need the bounded model");
        });
    } else if (command == "oracle-compare") {
        guard([&] {
            if (sc->spectrum.dim > 2)
                throw config_error("oracle-compare: the grid oracle is capped at dimension 2");
            if (sc->op) throw config_error("oracle-compare: bounded model only");
            const std::string init = v.word("initial", "dirac");
            if (init != "dirac" && init != "gaussian")
                throw config_error("oracle-compare: initial law must be dirac or gaussian");
            const double t = v.number("oracle.t", sc->T);
            if (!(t > 0.0) || t > sc->T + 1e-12)
                throw config_error("oracle-compare: oracle.t must lie in (0, T]");
            const double k = t / sc->h;
            if (std::fabs(k - std::llround(k)) > 1e-9)
                throw config_error("oracle-compare: oracle.t is off the step grid");
            const auto cells = static_cast<std::size_t>(v.integer("oracle.cells", 200));
            if (cells < 4) throw config_error("oracle-compare: need at least 4 cells");
            if (v.has("oracle.dt")) {
                // CFL pre-check on the requested step, same geometry as the run.
                const double L = oracle_box_halfwidth(*sc, v, t);
                grid_density probe(sc->spectrum.dim, L, cells);
                const double stable = fp_stable_dt(probe, sc->drift, sc->spectrum.q);
                const double dt = v.number("oracle.dt", 0.0);
                if (!(dt > 0.0) || dt > stable * (1.0 + 1e-12))
                    throw config_error("oracle-compare: oracle.dt is unstable; use dt <= " +
                                       std::to_string(stable));
            }
        });
    } else if (command == "weak-identity") {
        guard([&] {
            const auto steps = detail::grid_steps(sc->T, sc->h);
            const double bytes =
                double(sc->n_paths) * double(steps + 1) * double(sc->spectrum.dim) * 8.0;
            if (bytes > double(std::size_t{1} << 30))
                throw config_error(
                    "weak-identity: the full record would need more than 1 GiB; reduce N or T/h");
        });
        guard([&] {
            const auto phi = build_bump(v);
            if (phi.active() > sc->spectrum.dim)
                throw config_error(
                    "weak-identity: test function uses more coordinates than simulated");
        });
    } else if (command == "wiener-check") {
        guard([&] {
            for (double p : sc->probes) {
                const double k = p / sc->h;
                if (std::fabs(k - std::llround(k)) > 1e-9)
                    throw config_error("wiener-check: probe " + std::to_string(p) +
                                       " is off the step grid");
            }
        });
    }
    return out;
}

}  // namespace hd
