#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "vecjoin/executor.hpp"

namespace vecjoin {

/// Effective configuration of a join run. Serializes to flat key=value text;
/// round-trips exactly.
struct JoinConfig {
    double epsilon = 0;             // 0 = calibrate from target_neighbors
    double target_neighbors = 100;  // used only when epsilon == 0
    double lambda = 0.9;
    std::string memory_budget = "10%";  // absolute bytes or % of dataset size
    uint32_t num_buckets = 0;           // 0 = max(1, round(N / 1000))
    uint32_t candidate_width = 256;     // L
    bool apply_mu = true;
    bool adaptive_l = true;
    uint64_t seed = 42;
    uint32_t page_size = 4096;
    uint32_t prefetch_depth = 2;
    uint32_t graph_degree = 16;
    uint32_t ef_construction = 200;
    uint32_t assign_ef = 64;
    uint64_t calibrate_samples = 1000;

    std::string to_kv() const;
    static JoinConfig from_kv(const std::string& text);

    // budget string resolved against the dataset payload size
    uint64_t resolve_budget_bytes(uint64_t dataset_bytes) const;
};

uint64_t parse_budget(const std::string& spec, uint64_t dataset_bytes);

struct PipelineResult {
    RunStats stats;
    double epsilon = 0;
    uint64_t capacity = 0;  // buckets resident
    std::string pairs_path;
    std::string stats_csv_path;
    double recall_value = -1;    // filled when eval runs
    double precision_value = -1;
    bool skipped_bucketize = false;
    bool skipped_graph = false;
    bool skipped_orchestrate = false;
};

// bucketize -> graph -> orchestrate -> join (-> eval). Phase artifacts are
// content-addressed through a manifest in out_dir, so reruns with unchanged
// inputs skip straight to the join; epsilon/lambda changes reuse the bucket
// store. Artifacts are written to temp names and renamed on completion, so a
// failed run leaves no partial artifacts behind.
PipelineResult run_pipeline(const std::string& data_path, const std::string& out_dir,
                            const JoinConfig& config, bool do_eval);

}  // namespace vecjoin
