#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vecjoin/common.hpp"

namespace vecjoin {

struct CenterIndexParams {
    uint32_t graph_degree = 16;
    uint32_t ef_construction = 200;
    uint64_t seed = 42;
};

/// Hierarchical proximity graph over the bucket centers. Built once per
/// bucket layout, immutable afterwards; concurrent searches are safe.
/// Layer-0 is repaired to a single connected component after construction,
/// which makes search with ef = M degenerate to exact k-NN.
class CenterIndex {
  public:
    struct Result {
        uint32_t id;
        float dist;  // true L2, not squared
    };

    CenterIndex() = default;

    static CenterIndex build(std::vector<float> centers, uint32_t dim, CenterIndexParams params);

    // Returns min(k, M) results sorted by ascending (distance, id). ef is
    // clamped up to k internally.
    std::vector<Result> search(const float* query, uint32_t k, uint32_t ef) const;

    uint32_t size() const { return m_; }
    uint32_t dim() const { return dim_; }
    const float* center(uint32_t i) const { return centers_.data() + size_t(i) * dim_; }
    const CenterIndexParams& params() const { return params_; }
    uint64_t memory_bytes() const;

    void save(const std::string& path) const;
    static CenterIndex load(const std::string& path);

    // Introspection (tests, invariant checks)
    uint32_t top_level() const { return top_level_; }
    uint32_t entry_point() const { return entry_; }
    uint32_t node_level(uint32_t node) const { return levels_[node]; }
    const std::vector<uint32_t>& neighbors(uint32_t level, uint32_t node) const {
        return adjacency_[level][node];
    }
    uint32_t degree_cap(uint32_t level) const {
        return level == 0 ? 2 * params_.graph_degree : params_.graph_degree;
    }

  private:
    float dist_sq(const float* a, const float* b) const;
    float dist_sq_to(uint32_t node, const float* q) const;
    // Beam search over one layer; returns up to ef (dist_sq, id) pairs, ascending.
    void search_layer(const float* q, uint32_t entry, uint32_t ef, uint32_t level,
                      std::vector<std::pair<float, uint32_t>>& out) const;
    std::vector<uint32_t> select_neighbors(const std::vector<std::pair<float, uint32_t>>& candidates,
                                           uint32_t max_degree) const;
    void repair();

    uint32_t m_ = 0;
    uint32_t dim_ = 0;
    CenterIndexParams params_;
    std::vector<float> centers_;
    std::vector<uint32_t> levels_;
    // adjacency_[level][node] -> neighbor ids; nodes below `level` have empty lists
    std::vector<std::vector<std::vector<uint32_t>>> adjacency_;
    uint32_t entry_ = 0;
    uint32_t top_level_ = 0;
};

}  // namespace vecjoin
