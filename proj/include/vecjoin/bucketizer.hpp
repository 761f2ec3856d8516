#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vecjoin/center_index.hpp"
#include "vecjoin/common.hpp"
#include "vecjoin/dataset.hpp"
#include "vecjoin/io.hpp"

namespace vecjoin {

/// One physical bucket: a contiguous page-aligned extent of
/// [u64 original_id][f32 x dim] records in the bucket-store data file.
/// Buckets that were split out of one oversized assignment share a `group`
/// (and its center/radius).
struct Bucket {
    uint32_t id = 0;
    uint32_t group = 0;
    uint64_t count = 0;
    uint64_t byte_offset = 0;
    uint64_t byte_length = 0;  // page multiple
    float radius = 0.f;
    uint32_t reserved = 0;  // keeps the struct free of implicit padding
};
static_assert(sizeof(Bucket) == 40);

struct BucketPayload {
    uint32_t bucket_id = 0;
    uint32_t dim = 0;
    uint64_t padded_bytes = 0;
    std::vector<uint64_t> ids;
    std::vector<float> vectors;  // count x dim, row-major

    size_t count() const { return ids.size(); }
    const float* row(size_t i) const { return vectors.data() + i * dim; }
};

struct BucketizeParams {
    uint32_t num_buckets = 0;  // M; 0 = max(1, round(N/1000))
    uint64_t seed = 42;
    uint64_t memory_budget_bytes = 0;       // 0 = unchecked
    uint64_t split_threshold_bytes = 0;     // max padded extent; 0 = no splitting
    uint64_t block_bytes = 64ull << 20;     // clipped to the budget
    uint32_t assign_ef = 64;
    CenterIndexParams index_params;
};

struct BucketizeStats {
    uint64_t data_bytes_written = 0;     // records + page padding
    uint64_t sidecar_bytes_written = 0;  // assignment spill
    uint64_t padding_bytes = 0;
    uint64_t peak_memory_bytes = 0;
    uint32_t buckets_split = 0;
    double assign_seconds = 0;
    double layout_seconds = 0;
};

class BucketStore {
  public:
    uint32_t num_buckets() const { return static_cast<uint32_t>(buckets_.size()); }
    uint32_t num_groups() const { return num_groups_; }
    uint32_t dim() const { return dim_; }
    uint64_t total_vectors() const { return total_vectors_; }
    uint64_t record_bytes() const { return 8 + 4ull * dim_; }
    const Bucket& bucket(uint32_t i) const { return buckets_[i]; }
    const std::vector<Bucket>& buckets() const { return buckets_; }
    const float* center(uint32_t i) const { return centers_.data() + size_t(i) * dim_; }
    const std::vector<uint32_t>& group_members(uint32_t group) const {
        return group_members_[group];
    }
    uint64_t max_extent_bytes() const;
    uint64_t store_hash() const { return hash_; }
    const std::string& data_path() const { return data_path_; }

    // One aligned sequential read of the bucket's whole extent.
    BucketPayload read_bucket(uint32_t id) const;
    // Per-slot original vector id, concatenated in bucket order. Materialized
    // from the self-describing records in the data file.
    std::vector<uint64_t> id_map() const;

    bool direct_io_active() const { return reader_.direct_active(); }

    void save_meta(const std::string& meta_path) const;
    static BucketStore open(const std::string& prefix, bool direct_io = false);

    friend BucketStore assign_and_layout(const DatasetHandle&, const CenterIndex&,
                                         const BucketizeParams&, const std::string&,
                                         BucketizeStats*);

  private:
    void finalize_hash();

    std::string data_path_;
    uint32_t dim_ = 0;
    uint32_t num_groups_ = 0;
    uint64_t total_vectors_ = 0;
    uint64_t hash_ = 0;
    std::vector<Bucket> buckets_;
    std::vector<float> centers_;  // per physical bucket (shared within group)
    std::vector<std::vector<uint32_t>> group_members_;
    FileReader reader_;
};

// Pass 1 of bucketization: gather the rows at sample_ids positions in one
// sequential streaming pass. Returns M x dim floats in sampled-id order.
std::vector<float> select_centers(const DatasetHandle& handle, uint32_t m, uint64_t seed,
                                  uint64_t block_bytes = 64ull << 20);

// Passes 2+3: assign every vector to its nearest center through the index,
// then lay the records out bucket-major with page-aligned extents. Writes
// <prefix>.bks (data) and <prefix>.bkm (metadata).
BucketStore assign_and_layout(const DatasetHandle& handle, const CenterIndex& index,
                              const BucketizeParams& params, const std::string& prefix,
                              BucketizeStats* stats = nullptr);

// All three passes: select centers, build the center index, assign + lay out.
// The index is saved to <prefix>.cidx.
BucketStore bucketize(const DatasetHandle& handle, const BucketizeParams& params,
                      const std::string& prefix, BucketizeStats* stats = nullptr);

}  // namespace vecjoin
