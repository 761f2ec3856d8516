#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vecjoin/bucket_graph.hpp"
#include "vecjoin/common.hpp"

namespace vecjoin {

/// Node permutation plus the task and bucket access order it induces.
/// perm[p] is the bucket processed at position p. Each node's self pair (when
/// self_check) comes first, followed by its out-edges ordered by the
/// neighbor's position, so one operand of every task is already resident.
struct TaskSchedule {
    std::vector<uint32_t> perm;
    std::vector<std::pair<uint32_t, uint32_t>> tasks;
    std::vector<uint32_t> access_seq;  // 2 entries per task
    uint32_t window = 1;
};

struct PlanStep {
    uint32_t bucket;
    uint8_t hit;     // 1 = already resident
    uint32_t evict;  // bucket evicted to make room, or kNoEvict
};
constexpr uint32_t kNoEvict = UINT32_MAX;

struct EvictionPlan {
    uint32_t capacity = 0;  // buckets resident at once
    uint64_t misses = 0;
    std::vector<PlanStep> steps;  // one per access
};

// Greedy sliding-window reordering. Window w = max(1, floor(C / d_avg)).
// Starts from the max-out-degree node; every step picks the unplaced node
// sharing the most out-neighbors with the current window, ties to the lowest
// id. Scores are maintained incrementally; `trace`, when given, records the
// selected node and its score at every step for oracle comparison.
std::vector<uint32_t> reorder(const BucketGraph& graph, uint32_t capacity,
                              std::vector<std::pair<uint32_t, uint64_t>>* trace = nullptr);

TaskSchedule make_schedule(const BucketGraph& graph, const std::vector<uint32_t>& perm);

// Offline-optimal eviction over a known access sequence. Two passes: collect
// per-bucket access positions, then replay with a farthest-next-use eviction
// keyed on those positions. Requires capacity >= 2 (a task touches 2 buckets).
EvictionPlan belady_plan(const std::vector<uint32_t>& access_seq, uint32_t num_buckets,
                         uint32_t capacity);

// Same replay, but accesses are task operand pairs: while the second operand
// of a task loads, the first is pinned. Execution plans need this so that
// every task finds both buckets resident; miss counts can exceed the
// unconstrained belady_plan by at most one per pinned step.
EvictionPlan belady_plan_paired(const std::vector<uint32_t>& access_seq, uint32_t num_buckets,
                                uint32_t capacity);

enum class CachePolicy { LRU, FIFO, Belady };

struct SimResult {
    uint64_t misses = 0;
    double hit_rate = 1.0;  // hits / |seq|; 1.0 for an empty sequence
};

SimResult simulate_policy(const std::vector<uint32_t>& access_seq, uint32_t capacity,
                          CachePolicy policy);

// Exact minimum load-sequence length covering all edges with cache size C.
// Exhaustive search over (resident set, covered edges) states; only usable as
// a test oracle on tiny graphs.
uint64_t mecc_optimal(const BucketGraph& graph, uint32_t capacity, uint32_t max_nodes = 8);

/// Schedule + eviction plan, tied to the graph/store they were built from.
struct Plan {
    uint32_t num_buckets = 0;
    uint32_t capacity = 0;
    uint64_t graph_hash = 0;
    uint64_t store_hash = 0;
    TaskSchedule schedule;
    EvictionPlan eviction;

    void save(const std::string& path) const;
    static Plan load(const std::string& path);
};

// reorder + make_schedule + belady_plan in one step.
Plan orchestrate(const BucketGraph& graph, uint32_t capacity);

}  // namespace vecjoin
