#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vecjoin/dataset.hpp"
#include "vecjoin/executor.hpp"

namespace vecjoin {

/// Canonical pair set: sorted by (id_a, id_b), duplicate-free, id_a < id_b.
struct PairSet {
    std::vector<ResultPair> pairs;

    static PairSet canonicalize(std::vector<ResultPair> raw);
    static PairSet from_file(const std::string& path);
    size_t size() const { return pairs.size(); }
    bool contains(uint64_t a, uint64_t b) const;
};

// Exact self-join oracle, O(N^2) distance computations evaluated blockwise.
// Deliberately simple; refuses datasets beyond max_n.
PairSet brute_force_join(const DatasetHandle& handle, double epsilon, uint64_t max_n = 200000,
                         uint64_t block_bytes = 64ull << 20);

// |engine intersect oracle| / |oracle|; 1.0 when the oracle set is empty.
double recall(const PairSet& engine, const PairSet& oracle);

struct PrecisionReport {
    uint64_t checked = 0;
    uint64_t violations = 0;     // recomputed distance > epsilon
    uint64_t dist_warnings = 0;  // stored vs recomputed differ > 1e-4 relative
    double precision() const {
        return checked ? double(checked - violations) / double(checked) : 1.0;
    }
};

// Re-verifies every engine pair against the raw vectors. Exact, not
// statistical: any violation breaks the precision-1.0 contract.
PrecisionReport check_precision(const DatasetHandle& handle, const PairSet& engine,
                                double epsilon);

struct CalibrationResult {
    double epsilon = 0;
    double achieved_avg = 0;  // neighbors per sampled vector at that epsilon
    uint64_t samples = 0;
};

// Estimates the distance threshold at which each vector has `target` similar
// vectors on average: samples query vectors, computes their exact distances
// to the whole dataset, and inverts the aggregate count-vs-distance curve.
CalibrationResult calibrate_epsilon(const DatasetHandle& handle, double target_avg_neighbors,
                                    uint64_t sample_size, uint64_t seed = 42);

// Exact average neighbor count at `epsilon` over a fresh sample of queries.
double measure_avg_neighbors(const DatasetHandle& handle, double epsilon, uint64_t sample_size,
                             uint64_t seed = 43);

}  // namespace vecjoin
