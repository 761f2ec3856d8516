#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vecjoin/bucketizer.hpp"
#include "vecjoin/center_index.hpp"

namespace vecjoin {

/// Error budget for candidate-bucket pruning. mu is the dimension constant
/// pi^(-1/2) * Gamma((d-1)/2) / Gamma(d/2), computed via log-gamma.
struct PruneBudget {
    double lambda = 0.9;  // target recall, in (0, 1]
    double mu = 1.0;
    bool apply_mu = true;

    static PruneBudget make(double lambda, uint32_t dim, bool apply_mu = true);
};

struct CandidateBucket {
    uint32_t id;        // physical bucket id
    float center_dist;  // exact L2 between group centers
};

struct GraphBuildStats {
    std::vector<uint64_t> candidates;      // per source bucket, before filtering
    std::vector<uint64_t> after_triangle;  // survivors of the triangle filter
    std::vector<uint64_t> after_prune;     // survivors of probabilistic pruning
    uint32_t truncation_warnings = 0;      // candidate list may have been cut at L
    double build_seconds = 0;

    void write_csv(const std::string& path) const;
};

/// Directed bucket dependency graph: edge (i, j) with i < j means "verify the
/// vector pairs across buckets i and j". Self pairs are implied by self_check.
class BucketGraph {
  public:
    uint32_t num_nodes() const { return static_cast<uint32_t>(offsets_.size()) - 1; }
    uint64_t num_edges() const { return neighbors_.size(); }
    bool self_check() const { return self_check_; }
    double epsilon() const { return epsilon_; }
    double lambda() const { return lambda_; }
    bool apply_mu() const { return apply_mu_; }
    uint64_t store_hash() const { return store_hash_; }
    uint64_t graph_hash() const { return graph_hash_; }

    // out-neighbors of i: sorted ids j with j > i
    std::vector<uint32_t> neighbors(uint32_t i) const {
        return {neighbors_.begin() + offsets_[i], neighbors_.begin() + offsets_[i + 1]};
    }
    size_t out_degree(uint32_t i) const { return offsets_[i + 1] - offsets_[i]; }
    const uint32_t* neighbors_begin(uint32_t i) const { return neighbors_.data() + offsets_[i]; }
    const uint32_t* neighbors_end(uint32_t i) const { return neighbors_.data() + offsets_[i + 1]; }

    static BucketGraph from_edges(uint32_t num_nodes, std::vector<std::pair<uint32_t, uint32_t>> edges,
                                  bool self_check = true);

    void save(const std::string& path) const;
    static BucketGraph load(const std::string& path);

    friend BucketGraph build_graph(const BucketStore&, const CenterIndex&, double,
                                   const PruneBudget&, uint32_t, bool, GraphBuildStats*);

  private:
    void finalize_hash();

    std::vector<uint64_t> offsets_;   // size num_nodes + 1
    std::vector<uint32_t> neighbors_;
    bool self_check_ = true;
    bool apply_mu_ = true;
    double epsilon_ = 0;
    double lambda_ = 1;
    uint64_t store_hash_ = 0;
    uint64_t graph_hash_ = 0;
};

// Up to L nearest candidate buckets of b (other groups only; sibling
// sub-buckets are handled by build_graph directly), ascending center distance.
std::vector<CandidateBucket> candidate_buckets(const BucketStore& store, uint32_t b,
                                               const CenterIndex& index, uint32_t L);

// Keeps exactly the candidates that may contain eps-neighbors of b:
// ||c_b - c_j|| - r_b - r_j <= eps.
std::vector<CandidateBucket> triangle_filter(const BucketStore& store, uint32_t b,
                                             std::vector<CandidateBucket> candidates,
                                             double epsilon);

// Drops far candidates while the estimated missed-neighbor fraction stays
// under 1 - lambda. Candidates whose bisector lies outside the
// (r_b + eps)-ball around c_b are geometrically empty (given nearest-center
// assignment) and are dropped for free; when `certified` is given, their ids
// are appended to it. lambda = 1 disables pruning entirely.
std::vector<CandidateBucket> probabilistic_prune(const BucketStore& store, uint32_t b,
                                                 std::vector<CandidateBucket> survivors,
                                                 const PruneBudget& budget, double epsilon,
                                                 std::vector<uint32_t>* certified = nullptr);

// candidates -> triangle filter -> probabilistic prune, per bucket in
// parallel; surviving candidates merge into edges, except that an edge one
// side certified as empty (bisector outside the other's reach) is dropped
// even when the larger-radius side kept it. Sibling sub-buckets are always
// connected. When adaptive_L is set the candidate width doubles (up to all
// buckets) while the farthest candidate still passes the triangle filter.
BucketGraph build_graph(const BucketStore& store, const CenterIndex& index, double epsilon,
                        const PruneBudget& budget, uint32_t L, bool adaptive_L = true,
                        GraphBuildStats* stats = nullptr);

// Total vector pairs implied by the graph: sum over edges of |b_i| * |b_j|,
// plus the intra-bucket pairs when self_check.
uint64_t candidate_vector_pairs(const BucketStore& store, const BucketGraph& graph);

}  // namespace vecjoin
