#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vecjoin/bucketizer.hpp"
#include "vecjoin/orchestrator.hpp"

namespace vecjoin {

struct ResultPair {
    uint64_t id_a;  // id_a < id_b, original dataset ids
    uint64_t id_b;
    float dist;  // true L2, <= epsilon
};

struct RunStats {
    uint64_t bytes_total = 0;   // bytes read from disk (padded extents)
    uint64_t bytes_useful = 0;  // record payload consumed by computation
    uint64_t cache_hits = 0;
    uint64_t cache_misses = 0;
    uint64_t distance_computations = 0;  // pair verifications
    uint64_t result_pairs = 0;
    uint64_t peak_cache_bytes = 0;
    bool direct_io = false;
    double bucketize_seconds = 0;
    double graph_seconds = 0;
    double orchestrate_seconds = 0;
    double execute_seconds = 0;

    double amp() const { return bytes_useful ? double(bytes_total) / double(bytes_useful) : 1.0; }
    double hit_rate() const {
        uint64_t total = cache_hits + cache_misses;
        return total ? double(cache_hits) / double(total) : 1.0;
    }

    std::string to_kv_text() const;
    static std::string csv_header();
    std::string csv_row() const;
};

// Exact pairwise verification of one task. Intra-bucket when a and b are the
// same bucket (unordered pairs once), full cross product otherwise.
// Comparisons run on squared distances; emitted distances are true L2.
// Returns the number of distance computations.
uint64_t verify_pair(const BucketPayload& a, const BucketPayload& b, double epsilon,
                     bool same_bucket, std::vector<ResultPair>& out);

/// Streaming writer for the .pairs result file:
/// [magic u32][version u32][epsilon f64][N u64] then 20-byte records
/// [u64 id_a][u64 id_b][f32 dist]. Buffered, flushed at >= 1 MiB.
class PairWriter {
  public:
    PairWriter(const std::string& path, double epsilon, uint64_t n);
    void write(const std::vector<ResultPair>& pairs);
    uint64_t pairs_written() const { return pairs_written_; }
    uint64_t bytes_written() const;
    void close();

  private:
    FileWriter out_;
    uint64_t pairs_written_ = 0;
};

struct PairFile {
    double epsilon = 0;
    uint64_t n = 0;
    std::vector<ResultPair> pairs;
};

PairFile read_pairs(const std::string& path);

struct ExecParams {
    uint64_t cache_bytes = 0;
    uint32_t prefetch_depth = 2;
    uint32_t verify_threads = 0;  // 0 = hardware concurrency
    bool deterministic = true;    // results always stream in task order
};

// Runs the join: plan-ordered loads through a prefetching loader thread,
// exact verification of every task, results streamed to `out_path`. Misses,
// evictions, and the resident set follow the plan exactly.
RunStats run_join(const BucketStore& store, const Plan& plan, double epsilon,
                  const std::string& out_path, const ExecParams& params);

}  // namespace vecjoin
