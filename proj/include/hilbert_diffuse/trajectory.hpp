// Sample-path storage. Paths live on a uniform grid {0, h, ..., T}; to keep
// large runs inside memory, states are recorded only at a chosen subset of
// grid indices (always including 0 and the final step). Everything else
// about a run is recoverable from its noise provenance: the per-step
// Gaussian draws are pure functions of (seed, stream, index), and the batch
// stores the per-coordinate scale of each draw.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/rng.hpp"
#include "hilbert_diffuse/spectral_space.hpp"

namespace hd {

struct trajectory_batch {
    // Grid.
    double h = 0.0;
    std::size_t steps = 0;
    std::size_t n_paths = 0;
    std::size_t dim = 0;

    // Recorded snapshots: record_indices is sorted and unique; states[slot]
    // holds n_paths * dim doubles, path-major.
    std::vector<std::size_t> record_indices;
    std::vector<std::vector<double>> states;

    // Noise provenance.
    std::uint64_t seed = 0;
    std::uint64_t stream_base = 0;
    int substeps = 1;
    vec noise_scale;  // per-coordinate std of one sub-draw
    std::string scheme;     // "euler_maruyama" | "exponential_mild"
    std::string model_tag;  // drift / operator / spectrum provenance

    double duration() const { return h * double(steps); }
    double time_of(std::size_t k) const { return h * double(k); }

    // Exact grid lookup: t must sit on the grid up to rounding slack.
    std::size_t index_of_time(double t) const {
        const double k = t / h;
        const auto ki = static_cast<std::size_t>(std::llround(k));
        if (ki > steps || std::fabs(time_of(ki) - t) > 1e-9 * std::max(1.0, std::fabs(t)))
            throw grid_error("time " + std::to_string(t) + " is off the step-" +
                             std::to_string(h) + " grid");
        return ki;
    }

    std::size_t slot_of_index(std::size_t k) const {
        const auto it = std::lower_bound(record_indices.begin(), record_indices.end(), k);
        if (it == record_indices.end() || *it != k)
            throw grid_error("grid index " + std::to_string(k) + " was not recorded");
        return static_cast<std::size_t>(it - record_indices.begin());
    }

    std::size_t slot_of_time(double t) const { return slot_of_index(index_of_time(t)); }

    const double* state(std::size_t slot, std::size_t path) const {
        return states[slot].data() + path * dim;
    }

    vec state_vec(std::size_t slot, std::size_t path) const {
        const double* p = state(slot, path);
        return vec(p, p + dim);
    }

    // Regenerate the total stochastic increment applied at step k of path p
    // (the sum of the sub-draws), bit-identically to what the integrator
    // consumed.
    vec noise_increment(std::size_t path, std::size_t step) const {
        const noise_stream s(seed, increment_stream(stream_base, path));
        vec dw(dim, 0.0);
        for (int sub = 0; sub < substeps; ++sub) {
            const std::uint64_t base =
                (static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(substeps) +
                 static_cast<std::uint64_t>(sub)) *
                dim;
            for (std::size_t j = 0; j < dim; ++j)
                dw[j] += noise_scale[j] * s.normal(base + j);
        }
        return dw;
    }

    // One row per (path, recorded time): path,t,x_1,...,x_d.
    void export_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw error("cannot open " + path + " for writing");
        out << "path,t";
        for (std::size_t j = 0; j < dim; ++j) out << ",x" << (j + 1);
        out << "\n";
        out.precision(17);
        for (std::size_t p = 0; p < n_paths; ++p)
            for (std::size_t slot = 0; slot < record_indices.size(); ++slot) {
                out << p << ',' << time_of(record_indices[slot]);
                const double* x = state(slot, p);
                for (std::size_t j = 0; j < dim; ++j) out << ',' << x[j];
                out << "\n";
            }
    }
};

}  // namespace hd
