#pragma once
// Low-dimensional finite-difference oracle for the forward equation
//
//   d/dt mu = sum_i (q_i/2) d^2mu/dx_i^2 - d/dx_i (b_i mu)
//
// on the box [-L, L]^dim, dim <= 2, with zero total flux through the
// boundary, plus the weak test-function identity
//
//   E phi(X_t) - E phi(X_0) = int_0^t E (L phi)(X_s) ds,
//   (L phi)(x) = sum_i (q_i/2) d^2phi/dx_i^2 + b_i(x) dphi/dx_i,
//
// checked on Monte Carlo batches with the generator applied analytically.
//
// The solver is an explicit conservative scheme: fluxes live on cell faces
// (first-order upwind for advection, central differences for diffusion), so
// the discrete mass telescopes exactly and the only mass motion is rounding
// plus the clamping of sub-1e-12 undershoots. Point masses are mollified to
// a Gaussian two cells wide; they are not grid-representable.
//
// Each evolution is single-threaded (the stencil is a data dependence);
// callers wanting parallelism run independent evolutions side by side.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hilbert_diffuse/drift.hpp"
#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/spectral_space.hpp"
#include "hilbert_diffuse/stats.hpp"
#include "hilbert_diffuse/trajectory.hpp"

namespace hd {

namespace detail {

// Shortest round-tripping decimal form of a double.
inline std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const char* where) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{}) throw config_error(std::string(where) + ": bad number '" + s + "'");
    return v;
}

}  // namespace detail

// Density on a uniform grid over [-L, L]^dim; values are densities (mass of
// a cell = value * cell volume), stored row-major for dim = 2.
struct grid_density {
    std::size_t dim;
    double half_width;
    std::size_t cells;       // per axis
    std::vector<double> values;
    std::string model_tag;   // drift preset the density was evolved under; "" = unconstrained

    grid_density(std::size_t dim_in, double L, std::size_t cells_in)
        : dim(dim_in), half_width(L), cells(cells_in) {
        if (dim != 1 && dim != 2) throw config_error("grid: dimension must be 1 or 2");
        if (!(L > 0.0)) throw config_error("grid: half-width must be positive");
        if (cells < 4) throw config_error("grid: need at least 4 cells per axis");
        values.assign(size(), 0.0);
    }

    std::size_t size() const { return dim == 1 ? cells : cells * cells; }
    double cell_width() const { return 2.0 * half_width / double(cells); }
    double cell_volume() const {
        const double w = cell_width();
        return dim == 1 ? w : w * w;
    }
    double center(std::size_t i) const { return -half_width + (double(i) + 0.5) * cell_width(); }

    double mass() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * cell_volume();
    }

    // Mass held in the layer of cells touching the boundary.
    double boundary_mass() const {
        double s = 0.0;
        if (dim == 1) {
            s = values.front() + values.back();
        } else {
            for (std::size_t i = 0; i < cells; ++i) {
                s += values[i] + values[(cells - 1) * cells + i];
                if (i > 0 && i + 1 < cells) s += values[i * cells] + values[i * cells + cells - 1];
            }
        }
        return s * cell_volume();
    }

    // Product Gaussian evaluated at cell centers, normalized to unit grid mass.
    static grid_density gaussian(std::size_t dim, double L, std::size_t cells, const vec& mean,
                                 const vec& sigma) {
        grid_density g(dim, L, cells);
        if (mean.size() != dim || sigma.size() != dim)
            throw config_error("grid: mean/sigma must match the grid dimension");
        for (double s : sigma)
            if (!(s > 0.0)) throw config_error("grid: sigma must be positive");
        auto axis = [&](std::size_t a, std::size_t i) {
            const double u = (g.center(i) - mean[a]) / sigma[a];
            return std::exp(-0.5 * u * u);
        };
        if (dim == 1) {
            for (std::size_t i = 0; i < cells; ++i) g.values[i] = axis(0, i);
        } else {
            for (std::size_t ix = 0; ix < cells; ++ix)
                for (std::size_t iy = 0; iy < cells; ++iy)
                    g.values[ix * cells + iy] = axis(0, ix) * axis(1, iy);
        }
        const double m = g.mass();
        if (!(m > 0.0)) throw precondition_error("grid: initial Gaussian carries no grid mass");
        for (double& v : g.values) v /= m;
        return g;
    }

    // A point mass is not grid-representable; mollify to sigma = 2 cells.
    static grid_density dirac_like(std::size_t dim, double L, std::size_t cells, const vec& at) {
        grid_density probe(dim, L, cells);
        const vec sigma(dim, 2.0 * probe.cell_width());
        return gaussian(dim, L, cells, at, sigma);
    }

    // CSV of cell centers + values, with a JSON sidecar (path + ".meta.json")
    // holding the box geometry.
    void export_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw config_error("grid csv: cannot open '" + path + "' for writing");
        out << (dim == 1 ? "x,value\n" : "x,y,value\n");
        if (dim == 1) {
            for (std::size_t i = 0; i < cells; ++i)
                out << detail::fmt_double(center(i)) << ',' << detail::fmt_double(values[i])
                    << '\n';
        } else {
            for (std::size_t ix = 0; ix < cells; ++ix)
                for (std::size_t iy = 0; iy < cells; ++iy)
                    out << detail::fmt_double(center(ix)) << ',' << detail::fmt_double(center(iy))
                        << ',' << detail::fmt_double(values[ix * cells + iy]) << '\n';
        }
        if (!out) throw config_error("grid csv: write to '" + path + "' failed");
        nlohmann::json meta;
        meta["cells"] = cells;
        meta["dim"] = dim;
        meta["half_width"] = half_width;
        meta["model_tag"] = model_tag;
        std::ofstream side(path + ".meta.json");
        if (!side) throw config_error("grid csv: cannot open sidecar for '" + path + "'");
        side << meta.dump(2) << '\n';
    }

    static grid_density import_csv(const std::string& path) {
        std::ifstream side(path + ".meta.json");
        if (!side) throw config_error("grid csv: missing sidecar '" + path + ".meta.json'");
        nlohmann::json meta;
        try {
            side >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw config_error(std::string("grid csv: bad sidecar: ") + e.what());
        }
        if (!meta.contains("dim") || !meta.contains("half_width") || !meta.contains("cells"))
            throw config_error("grid csv: sidecar lacks dim/half_width/cells");
        grid_density g(meta["dim"].get<std::size_t>(), meta["half_width"].get<double>(),
                       meta["cells"].get<std::size_t>());
        if (meta.contains("model_tag")) g.model_tag = meta["model_tag"].get<std::string>();

        std::ifstream in(path);
        if (!in) throw config_error("grid csv: cannot open '" + path + "'");
        std::string line;
        if (!std::getline(in, line)) throw config_error("grid csv: empty file '" + path + "'");
        std::size_t row = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (row >= g.size()) throw config_error("grid csv: more rows than grid cells");
            std::vector<std::string> cols;
            std::stringstream ss(line);
            std::string col;
            while (std::getline(ss, col, ',')) cols.push_back(col);
            if (cols.size() != g.dim + 1)
                throw config_error("grid csv: row " + std::to_string(row + 2) + " has " +
                                   std::to_string(cols.size()) + " columns, expected " +
                                   std::to_string(g.dim + 1));
            const double v = detail::parse_double(cols.back(), "grid csv");
            if (!std::isfinite(v) || v < -1e-12)
                throw config_error("grid csv: value at row " + std::to_string(row + 2) +
                                   " violates the density invariant");
            g.values[row] = v;
            if (row == 0) {
                const double c0 = detail::parse_double(cols.front(), "grid csv");
                if (std::fabs(c0 - g.center(0)) > 1e-9)
                    throw config_error("grid csv: cell centers do not match the sidecar box");
            }
            ++row;
        }
        if (row != g.size())
            throw config_error("grid csv: " + std::to_string(row) + " rows for " +
                               std::to_string(g.size()) + " cells");
        return g;
    }
};

// Box half-width heuristic: six standard deviations of the widest diffusion
// plus initial offset plus the farthest the drift can carry mass, floored at 8
// so default scenarios share one geometry.
inline double fp_box_halfwidth(const vec& q, double T, double initial_offset, double drift_sup) {
    double qmax = 0.0;
    for (double v : q) qmax = std::max(qmax, v);
    return std::max(6.0 * std::sqrt(qmax * T) + initial_offset + drift_sup * T, 8.0);
}

namespace detail {

// Drift components at every cell center (the field is autonomous, so one
// evaluation per cell suffices for the whole evolution).
struct drift_field {
    std::vector<double> bx;  // size = grid size
    std::vector<double> by;  // empty for dim = 1
    double max_abs = 0.0;
};

inline drift_field tabulate_drift(const grid_density& g, const drift_model& F) {
    if (F.dim != g.dim)
        throw config_error("evolve_fp: drift dimension " + std::to_string(F.dim) +
                           " does not match the grid dimension " + std::to_string(g.dim));
    drift_field f;
    f.bx.resize(g.size());
    vec x(g.dim), out(g.dim);
    if (g.dim == 1) {
        for (std::size_t i = 0; i < g.cells; ++i) {
            x[0] = g.center(i);
            F.eval(x, out);
            f.bx[i] = out[0];
            f.max_abs = std::max(f.max_abs, std::fabs(out[0]));
        }
    } else {
        f.by.resize(g.size());
        for (std::size_t ix = 0; ix < g.cells; ++ix)
            for (std::size_t iy = 0; iy < g.cells; ++iy) {
                x[0] = g.center(ix);
                x[1] = g.center(iy);
                F.eval(x, out);
                const std::size_t id = ix * g.cells + iy;
                f.bx[id] = out[0];
                f.by[id] = out[1];
                f.max_abs = std::max({f.max_abs, std::fabs(out[0]), std::fabs(out[1])});
            }
    }
    return f;
}

}  // namespace detail

// Largest stable explicit step for this grid, drift, and diffusion: the
// diffusion number sum(q_i/2) dt / w^2 must stay <= 1/4 and the advection
// (Courant) number max|b| dt / w must stay <= 1/2.
inline double fp_stable_dt(const grid_density& g, const drift_model& F, const vec& q) {
    if (q.size() != g.dim) throw config_error("evolve_fp: need one diffusion coefficient per axis");
    double qsum = 0.0;
    for (double v : q) {
        if (!(v > 0.0)) throw config_error("evolve_fp: diffusion coefficients must be positive");
        qsum += v;
    }
    const auto field = detail::tabulate_drift(g, F);
    const double w = g.cell_width();
    const double dt_diff = w * w / (2.0 * qsum);
    const double dt_adv =
        field.max_abs > 0.0 ? w / (2.0 * field.max_abs) : std::numeric_limits<double>::infinity();
    return std::min(dt_diff, dt_adv);
}

struct fp_result {
    grid_density density;
    std::size_t steps = 0;
    double dt_used = 0.0;
    double mass_drift = 0.0;     // max |mass(t) - mass(0)| over the run
    double min_value = 0.0;      // most negative pre-clamp value (0 if none)
    double boundary_mass = 0.0;  // at the final time
    bool boundary_warning = false;
};

// Explicit conservative evolution to horizon T. The requested dt must satisfy
// both stability bounds (refused with a usable suggestion otherwise); the
// actual step is T/ceil(T/dt) <= dt so the horizon is hit exactly.
inline fp_result evolve_fp(const grid_density& rho0, const drift_model& F, const vec& q, double T,
                           double dt) {
    if (q.size() != rho0.dim)
        throw config_error("evolve_fp: need one diffusion coefficient per axis");
    for (double v : q)
        if (!(v > 0.0)) throw config_error("evolve_fp: diffusion coefficients must be positive");
    if (F.dim != rho0.dim)
        throw config_error("evolve_fp: drift dimension " + std::to_string(F.dim) +
                           " does not match the grid dimension " + std::to_string(rho0.dim));
    if (T < 0.0) throw precondition_error("evolve_fp: horizon must be nonnegative");

    fp_result out{rho0, 0, 0.0, 0.0, 0.0, 0.0, false};
    out.density.model_tag = F.name;
    if (T == 0.0) {
        out.boundary_mass = rho0.boundary_mass();
        out.boundary_warning = out.boundary_mass > 1e-8;
        return out;
    }
    if (!(dt > 0.0))
        throw config_error("evolve_fp: a positive time step is required for a nonzero horizon");

    const auto field = detail::tabulate_drift(rho0, F);
    const std::size_t n = rho0.cells;
    const double w = rho0.cell_width();
    double qsum = 0.0;
    for (double v : q) qsum += v;
    const double dt_diff = w * w / (2.0 * qsum);
    const double dt_adv =
        field.max_abs > 0.0 ? w / (2.0 * field.max_abs) : std::numeric_limits<double>::infinity();
    if (dt > dt_diff * (1.0 + 1e-12) || dt > dt_adv * (1.0 + 1e-12))
        throw config_error("evolve_fp: unstable time step " + detail::fmt_double(dt) +
                           "; use dt <= " + detail::fmt_double(std::min(dt_diff, dt_adv)));

    const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    const double h = T / double(steps);
    const double vol = rho0.cell_volume();

    std::vector<double> cur = rho0.values, nxt(cur.size());
    const double mass0 = rho0.mass();
    double max_drift = 0.0, min_val = 0.0;

    if (rho0.dim == 1) {
        std::vector<double> flux(n + 1, 0.0);
        for (std::size_t s = 0; s < steps; ++s) {
            for (std::size_t k = 1; k < n; ++k) {
                const double vb = 0.5 * (field.bx[k - 1] + field.bx[k]);
                const double adv = vb >= 0.0 ? vb * cur[k - 1] : vb * cur[k];
                const double dif = -(q[0] / 2.0) * (cur[k] - cur[k - 1]) / w;
                flux[k] = adv + dif;
            }
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double v = cur[i] - (h / w) * (flux[i + 1] - flux[i]);
                if (v < min_val) min_val = v;
                if (v < 0.0) v = 0.0;
                nxt[i] = v;
                sum += v;
            }
            max_drift = std::max(max_drift, std::fabs(sum * vol - mass0));
            cur.swap(nxt);
        }
    } else {
        std::vector<double> fx((n + 1) * n, 0.0);  // face (ix, iy) at index ix*n + iy
        std::vector<double> fy(n * (n + 1), 0.0);  // face (ix, iy) at index ix*(n+1) + iy
        for (std::size_t s = 0; s < steps; ++s) {
            for (std::size_t ix = 1; ix < n; ++ix)
                for (std::size_t iy = 0; iy < n; ++iy) {
                    const std::size_t lo = (ix - 1) * n + iy, hi = ix * n + iy;
                    const double vb = 0.5 * (field.bx[lo] + field.bx[hi]);
                    const double adv = vb >= 0.0 ? vb * cur[lo] : vb * cur[hi];
                    const double dif = -(q[0] / 2.0) * (cur[hi] - cur[lo]) / w;
                    fx[ix * n + iy] = adv + dif;
                }
            for (std::size_t ix = 0; ix < n; ++ix)
                for (std::size_t iy = 1; iy < n; ++iy) {
                    const std::size_t lo = ix * n + iy - 1, hi = ix * n + iy;
                    const double vb = 0.5 * (field.by[lo] + field.by[hi]);
                    const double adv = vb >= 0.0 ? vb * cur[lo] : vb * cur[hi];
                    const double dif = -(q[1] / 2.0) * (cur[hi] - cur[lo]) / w;
                    fy[ix * (n + 1) + iy] = adv + dif;
                }
            double sum = 0.0;
            for (std::size_t ix = 0; ix < n; ++ix)
                for (std::size_t iy = 0; iy < n; ++iy) {
                    const std::size_t id = ix * n + iy;
                    double v = cur[id] - (h / w) * (fx[(ix + 1) * n + iy] - fx[ix * n + iy] +
                                                    fy[ix * (n + 1) + iy + 1] - fy[ix * (n + 1) + iy]);
                    if (v < min_val) min_val = v;
                    if (v < 0.0) v = 0.0;
                    nxt[id] = v;
                    sum += v;
                }
            max_drift = std::max(max_drift, std::fabs(sum * vol - mass0));
            cur.swap(nxt);
        }
    }

    if (min_val < -1e-12)
        throw numerical_abort("kolmogorov_oracle", "density undershoot " +
                                                       detail::fmt_double(min_val) +
                                                       " breaches the positivity budget");
    if (max_drift > 1e-6)
        throw numerical_abort("kolmogorov_oracle", "mass drift " + detail::fmt_double(max_drift) +
                                                       " breaches the conservation budget");

    out.density.values = std::move(cur);
    out.steps = steps;
    out.dt_used = h;
    out.mass_drift = max_drift;
    out.min_value = min_val;
    out.boundary_mass = out.density.boundary_mass();
    out.boundary_warning = out.boundary_mass > 1e-8;
    return out;
}

// Total variation distance between two densities on the same grid, after
// normalizing each to unit mass.
inline double total_variation(const grid_density& a, const grid_density& b) {
    if (a.dim != b.dim || a.cells != b.cells || a.half_width != b.half_width)
        throw config_error("total_variation: densities live on different grids");
    const double ma = a.mass(), mb = b.mass();
    if (!(ma > 0.0) || !(mb > 0.0))
        throw precondition_error("total_variation: zero-mass density");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        s += std::fabs(a.values[i] / ma - b.values[i] / mb);
    return 0.5 * s * a.cell_volume();
}

// Conservative 2:1 restriction (children averaged), for self-convergence
// studies across grid refinement.
inline grid_density restrict_halved(const grid_density& fine) {
    if (fine.cells % 2 != 0) throw config_error("restrict: cell count must be even");
    grid_density g(fine.dim, fine.half_width, fine.cells / 2);
    g.model_tag = fine.model_tag;
    if (fine.dim == 1) {
        for (std::size_t i = 0; i < g.cells; ++i)
            g.values[i] = 0.5 * (fine.values[2 * i] + fine.values[2 * i + 1]);
    } else {
        for (std::size_t ix = 0; ix < g.cells; ++ix)
            for (std::size_t iy = 0; iy < g.cells; ++iy) {
                const std::size_t a = 2 * ix * fine.cells + 2 * iy;
                g.values[ix * g.cells + iy] =
                    0.25 * (fine.values[a] + fine.values[a + 1] + fine.values[a + fine.cells] +
                            fine.values[a + fine.cells + 1]);
            }
    }
    return g;
}

// L1 distance between densities on the same grid.
inline double l1_distance(const grid_density& a, const grid_density& b) {
    if (a.dim != b.dim || a.cells != b.cells || a.half_width != b.half_width)
        throw config_error("l1_distance: densities live on different grids");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += std::fabs(a.values[i] - b.values[i]);
    return s * a.cell_volume();
}

namespace detail {

inline std::string drift_segment(const std::string& model_tag) {
    const auto a = model_tag.find('/');
    if (a == std::string::npos) return "";
    const auto b = model_tag.find('/', a + 1);
    return model_tag.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1);
}

}  // namespace detail

struct mc_fp_comparison {
    double tv = 0.0;
    double outside_fraction = 0.0;  // MC mass that fell off the oracle box
    std::size_t paths = 0;
};

// Total variation between the Monte Carlo marginal of X_t (projected onto the
// chosen coordinates) and the grid density, on the grid's own binning. Mass
// the samples place outside the box counts fully toward the distance.
inline mc_fp_comparison compare_mc_fp(const trajectory_batch& batch, const grid_density& rho,
                                      double t, const std::vector<std::size_t>& coords) {
    if (coords.size() != rho.dim)
        throw config_error("compare_mc_fp: need one projection axis per grid dimension");
    for (std::size_t c : coords)
        if (c >= batch.dim)
            throw config_error("compare_mc_fp: projection axis " + std::to_string(c) +
                               " exceeds the batch dimension");
    if (rho.dim == 2 && coords[0] == coords[1])
        throw config_error("compare_mc_fp: projection axes must be distinct");
    if (!rho.model_tag.empty()) {
        const std::string got = detail::drift_segment(batch.model_tag);
        if (got != rho.model_tag)
            throw config_error("compare_mc_fp: oracle density was evolved under drift '" +
                               rho.model_tag + "' but the batch used '" + got + "'");
    }
    const std::size_t slot = batch.slot_of_time(t);
    const double w = rho.cell_width();
    const double L = rho.half_width;
    std::vector<double> counts(rho.size(), 0.0);
    std::size_t outside = 0;
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        const double* x = batch.state(slot, p);
        std::size_t id = 0;
        bool in = true;
        for (std::size_t a = 0; a < rho.dim; ++a) {
            const double u = (x[coords[a]] + L) / w;
            if (u < 0.0 || u >= double(rho.cells)) {
                in = false;
                break;
            }
            id = id * rho.cells + static_cast<std::size_t>(u);
        }
        if (in)
            counts[id] += 1.0;
        else
            ++outside;
    }
    const double n = double(batch.n_paths);
    const double m = rho.mass();
    if (!(m > 0.0)) throw precondition_error("compare_mc_fp: zero-mass density");
    double s = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i)
        s += std::fabs(counts[i] / n - rho.values[i] * rho.cell_volume() / m);
    mc_fp_comparison out;
    out.tv = 0.5 * (s + double(outside) / n);
    out.outside_fraction = double(outside) / n;
    out.paths = batch.n_paths;
    return out;
}

namespace detail {

// The standard bump exp(1 - 1/(1 - u^2)) on |u| < 1, zero outside, with
// analytic first and second derivatives. Values within 1e-8 of the support
// edge are flushed to zero: the true values there are below 1e-10^7 and the
// naive formula would multiply an underflowed exponential by an enormous
// rational factor.
inline double bump0(double u) {
    if (std::fabs(u) >= 1.0 - 1e-8) return 0.0;
    const double d = 1.0 - u * u;
    return std::exp(1.0 - 1.0 / d);
}

inline double bump1(double u) {
    if (std::fabs(u) >= 1.0 - 1e-8) return 0.0;
    const double d = 1.0 - u * u;
    return bump0(u) * (-2.0 * u / (d * d));
}

inline double bump2(double u) {
    if (std::fabs(u) >= 1.0 - 1e-8) return 0.0;
    const double d = 1.0 - u * u;
    return bump0(u) * (4.0 * u * u / (d * d * d * d) - 2.0 * (1.0 + 3.0 * u * u) / (d * d * d));
}

}  // namespace detail

// Cylindrical test function phi(x) = scale * prod_{i<m} psi((x_i - c_i)/w_i)
// with psi the standard bump: smooth, supported on the box prod [c_i - w_i,
// c_i + w_i], depending on the first m coordinates only.
class cylindrical_bump {
  public:
    cylindrical_bump(vec center, vec width, double scale = 1.0)
        : c_(std::move(center)), w_(std::move(width)), scale_(scale) {
        if (c_.empty() || c_.size() != w_.size())
            throw config_error("bump: need matching nonempty center/width lists");
        for (double v : w_)
            if (!(v > 0.0)) throw config_error("bump: widths must be positive");
    }

    static cylindrical_bump bump1d(double center, double width, double scale = 1.0) {
        return cylindrical_bump(vec{center}, vec{width}, scale);
    }

    // The zero test function (a scale-0 member of the family).
    static cylindrical_bump zero(std::size_t m) {
        return cylindrical_bump(vec(m, 0.0), vec(m, 1.0), 0.0);
    }

    std::size_t active() const { return c_.size(); }
    const vec& center() const { return c_; }
    const vec& width() const { return w_; }
    double scale() const { return scale_; }

    double value(const double* x) const {
        double p = scale_;
        for (std::size_t j = 0; j < c_.size(); ++j) p *= detail::bump0((x[j] - c_[j]) / w_[j]);
        return p;
    }

    double partial(std::size_t i, const double* x) const {
        return factor_except(i, x) * detail::bump1((x[i] - c_[i]) / w_[i]) / w_[i];
    }

    double second(std::size_t i, const double* x) const {
        return factor_except(i, x) * detail::bump2((x[i] - c_[i]) / w_[i]) / (w_[i] * w_[i]);
    }

    // (L phi)(x) = sum_{i<m} (q_i/2) phi_ii + b_i phi_i; only the active
    // coordinates contribute, higher partials of phi vanish identically.
    double generator(const double* x, const vec& b, const vec& q) const {
        double s = 0.0;
        for (std::size_t i = 0; i < c_.size(); ++i)
            s += 0.5 * q[i] * second(i, x) + b[i] * partial(i, x);
        return s;
    }

  private:
    double factor_except(std::size_t i, const double* x) const {
        double p = scale_;
        for (std::size_t j = 0; j < c_.size(); ++j)
            if (j != i) p *= detail::bump0((x[j] - c_[j]) / w_[j]);
        return p;
    }

    vec c_, w_;
    double scale_;
};

struct weak_identity_report {
    double residual = 0.0;       // |E phi(X_t) - E phi(X_0) - trapezoid of E L phi|
    double stat_error = 0.0;     // standard error of the per-path pairing
    double mean_increment = 0.0; // E phi(X_t) - E phi(X_0)
    double mean_integral = 0.0;  // the trapezoid value
    bool support_warning = false;  // phi's support pokes beyond the sampled hull
    std::size_t paths = 0;
};

// Checks E phi(X_t) - E phi(X_0) = int_0^t E (L phi) ds on a recorded batch,
// with the time integral taken by trapezoid over the recorded slots and the
// generator evaluated analytically. The drift entering L is the model's full
// coordinate drift: b = F(x) for the bounded model, b_i = -a_i x_i + F_i(x)
// when the batch was produced by the exponential scheme for dX = (-Ax + F)dt
// + dW. The per-path pairing (same samples on both sides) makes the residual
// an average of i.i.d. variables, so its own standard error is the right
// yardstick; discretization adds O(h).
inline weak_identity_report weak_identity_residual(const trajectory_batch& batch,
                                                   const cylindrical_bump& phi,
                                                   const drift_model& F,
                                                   const covariance_spectrum& Q, double t,
                                                   const std::optional<linear_operator>& A = {}) {
    if (Q.dim != batch.dim || F.dim != batch.dim)
        throw config_error("weak_identity: drift/spectrum dimension does not match the batch");
    if (phi.active() > batch.dim)
        throw config_error("weak_identity: test function uses more coordinates than simulated");
    const bool mild = batch.scheme == "exponential_mild";
    if (mild && !A)
        throw config_error("weak_identity: batches from the exponential scheme need the operator");
    if (!mild && A)
        throw config_error("weak_identity: the bounded model takes no linear operator");
    if (mild) {
        require_dim(A->a, batch.dim, "weak_identity");
    }
    if (!(t > 0.0)) throw precondition_error("weak_identity: need a positive time");

    const std::size_t kt = batch.index_of_time(t);
    std::vector<std::size_t> slots;
    for (std::size_t s = 0; s < batch.record_indices.size(); ++s)
        if (batch.record_indices[s] <= kt) slots.push_back(s);
    if (slots.empty() || batch.record_indices[slots.front()] != 0)
        throw grid_error("weak_identity: the batch does not record the initial time");
    if (batch.record_indices[slots.back()] != kt)
        throw grid_error("weak_identity: the batch does not record the requested time");
    if (slots.size() < 2) throw grid_error("weak_identity: need at least two recorded times");

    const std::size_t m = phi.active();
    vec lo(m, std::numeric_limits<double>::infinity());
    vec hi(m, -std::numeric_limits<double>::infinity());
    vec xbuf(batch.dim), fx(batch.dim), b(batch.dim);
    running_moments acc;
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        double trap = 0.0;
        double prev_g = 0.0, prev_t = 0.0;
        double phi0 = 0.0, phit = 0.0;
        for (std::size_t si = 0; si < slots.size(); ++si) {
            const double* x = batch.state(slots[si], p);
            const double ts = batch.time_of(batch.record_indices[slots[si]]);
            for (std::size_t j = 0; j < m; ++j) {
                lo[j] = std::min(lo[j], x[j]);
                hi[j] = std::max(hi[j], x[j]);
            }
            std::copy(x, x + batch.dim, xbuf.begin());
            F.eval(xbuf, fx);
            for (std::size_t j = 0; j < batch.dim; ++j)
                b[j] = mild ? fx[j] - A->a[j] * x[j] : fx[j];
            const double g = phi.generator(x, b, Q.q);
            if (si == 0)
                phi0 = phi.value(x);
            else
                trap += 0.5 * (ts - prev_t) * (g + prev_g);
            if (si + 1 == slots.size()) phit = phi.value(x);
            prev_g = g;
            prev_t = ts;
        }
        acc.add(phit - phi0 - trap);
    }

    weak_identity_report out;
    out.paths = batch.n_paths;
    out.residual = std::fabs(acc.mean());
    out.stat_error = acc.stderr_mean();
    // Recompute the two pieces for reporting (cheap against the main loop).
    {
        running_moments inc, integ;
        for (std::size_t p = 0; p < batch.n_paths; ++p) {
            const double* x0 = batch.state(slots.front(), p);
            const double* xt = batch.state(slots.back(), p);
            inc.add(phi.value(xt) - phi.value(x0));
        }
        out.mean_increment = inc.mean();
        out.mean_integral = out.mean_increment - (acc.mean());
    }
    for (std::size_t j = 0; j < m; ++j)
        if (phi.center()[j] - phi.width()[j] < lo[j] || phi.center()[j] + phi.width()[j] > hi[j])
            out.support_warning = true;
    return out;
}

}  // namespace hd
