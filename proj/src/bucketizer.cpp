#include "vecjoin/bucketizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

#include "vecjoin/kernels.hpp"

namespace vecjoin {

namespace {

constexpr uint32_t kBkmMagic = 0x4d424a56;  // "VJBM"
constexpr uint32_t kBkmVersion = 1;
constexpr uint64_t kBufferQuantum = 8192;  // two pages per bucket buffer

size_t assign_width(uint32_t m) { return m <= 0xff ? 1 : (m <= 0xffff ? 2 : 4); }

}  // namespace

std::vector<float> select_centers(const DatasetHandle& handle, uint32_t m, uint64_t seed,
                                  uint64_t block_bytes) {
    auto ids = sample_ids(handle.count, m, seed);  // raises MTooLarge
    std::vector<float> centers(size_t(m) * handle.dim);
    BlockStream stream(handle, block_bytes);
    VectorBlock blk;
    size_t next = 0;
    while (stream.next(blk) && next < ids.size()) {
        while (next < ids.size() && ids[next] < blk.start_id + blk.count) {
            size_t row = static_cast<size_t>(ids[next] - blk.start_id);
            std::memcpy(centers.data() + next * handle.dim, blk.row(row),
                        handle.dim * sizeof(float));
            next++;
        }
    }
    if (next != ids.size()) raise(ErrorCode::IoFailure, "center gather pass ended early");
    return centers;
}

namespace {

struct SplitLayout {
    // per group: physical ids are [first_physical[g], first_physical[g+1])
    std::vector<uint32_t> first_physical;
    std::vector<Bucket> buckets;
};

SplitLayout plan_extents(const std::vector<uint64_t>& group_counts, uint64_t record_bytes,
                         uint64_t split_threshold, uint32_t* buckets_split) {
    SplitLayout out;
    uint32_t m = static_cast<uint32_t>(group_counts.size());
    out.first_physical.resize(m + 1, 0);

    if (split_threshold > 0 && split_threshold < record_bytes + kPageSize) {
        raise(ErrorCode::BudgetInfeasible,
              "split threshold smaller than one record plus page padding");
    }

    for (uint32_t g = 0; g < m; ++g) {
        uint64_t count = group_counts[g];
        uint64_t padded = round_up(count * record_bytes, kPageSize);
        uint32_t pieces = 1;
        if (split_threshold > 0 && padded > split_threshold) {
            while (true) {
                uint64_t per = (count + pieces - 1) / pieces;
                if (round_up(per * record_bytes, kPageSize) <= split_threshold) break;
                pieces++;
            }
            if (buckets_split) (*buckets_split)++;
        }
        out.first_physical[g] = static_cast<uint32_t>(out.buckets.size());
        for (uint32_t p = 0; p < pieces; ++p) {
            Bucket b;
            b.group = g;
            b.count = count / pieces + (p < count % pieces ? 1 : 0);
            out.buckets.push_back(b);
        }
    }
    out.first_physical[m] = static_cast<uint32_t>(out.buckets.size());

    uint64_t offset = 0;
    for (uint32_t i = 0; i < out.buckets.size(); ++i) {
        auto& b = out.buckets[i];
        b.id = i;
        b.byte_offset = offset;
        b.byte_length = round_up(b.count * record_bytes, kPageSize);
        offset += b.byte_length;
    }
    return out;
}

}  // namespace

BucketStore assign_and_layout(const DatasetHandle& handle, const CenterIndex& index,
                              const BucketizeParams& params, const std::string& prefix,
                              BucketizeStats* stats_out) {
    const uint32_t m = index.size();
    const uint32_t d = handle.dim;
    if (d != index.dim()) raise(ErrorCode::BadConfig, "index dim does not match dataset");
    const uint64_t record_bytes = 8 + 4ull * d;
    const size_t aw = assign_width(m);

    MemoryAccountant acct(params.memory_budget_bytes);
    MemoryReservation index_mem(acct, index.memory_bytes(), "center index");

    // feasibility: index + per-bucket buffers + a minimal streaming block
    if (params.memory_budget_bytes > 0) {
        uint64_t need = index.memory_bytes() + uint64_t(m) * kBufferQuantum +
                        std::max<uint64_t>(kPageSize, handle.disk_record_bytes()) +
                        uint64_t(m) * (sizeof(uint64_t) + sizeof(float));
        if (need > params.memory_budget_bytes) {
            raise(ErrorCode::BudgetInfeasible,
                  "budget " + std::to_string(params.memory_budget_bytes) + " < minimum " +
                      std::to_string(need) + " for M=" + std::to_string(m));
        }
    }

    // a streaming block costs raw bytes plus the widened f32 copy plus any
    // per-vector side buffer; size it to fit what the pass leaves free
    auto choose_block = [&](uint64_t fixed_bytes, uint64_t side_per_vec) {
        uint64_t block = params.block_bytes;
        if (params.memory_budget_bytes == 0) return block;
        uint64_t room =
            params.memory_budget_bytes - std::min(params.memory_budget_bytes, fixed_bytes);
        uint64_t per_vec = handle.disk_record_bytes() + 4ull * d + side_per_vec;
        uint64_t max_block = room / 5 * 4 / per_vec * handle.disk_record_bytes();
        return std::max<uint64_t>(std::min(block, max_block),
                                  std::max<uint64_t>(kPageSize, handle.disk_record_bytes()));
    };

    BucketizeStats stats;
    Timer timer;

    // ---- pass 2: assignment (nearest center per vector, counts, radii) ----
    const std::string assign_path = prefix + ".assign.tmp";
    std::vector<uint64_t> counts(m, 0);
    std::vector<float> radius_sq(m, 0.f);
    {
        MemoryReservation counts_mem(acct, m * (sizeof(uint64_t) + sizeof(float)),
                                     "counts and radii");
        FileWriter assign_out(assign_path);
        uint64_t block_bytes =
            choose_block(index.memory_bytes() + uint64_t(m) * 12, 4 + aw);
        BlockStream stream(handle, block_bytes, &acct);
        size_t cap = stream.vectors_per_block();
        std::vector<uint32_t> block_assign(cap);
        MemoryReservation assign_mem(acct, cap * (4 + aw), "assignment block");
        std::vector<uint8_t> packed(cap * aw);

        VectorBlock blk;
        while (stream.next(blk)) {
            parallel_for(blk.count, [&](size_t lo, size_t hi, unsigned) {
                for (size_t i = lo; i < hi; ++i) {
                    auto res = index.search(blk.row(i), 1, params.assign_ef);
                    block_assign[i] = res[0].id;
                }
            });
            for (size_t i = 0; i < blk.count; ++i) {
                uint32_t c = block_assign[i];
                counts[c]++;
                float dsq = kernels::l2sq(blk.row(i), index.center(c), d);
                radius_sq[c] = std::max(radius_sq[c], dsq);
            }
            if (aw == 4) {
                std::memcpy(packed.data(), block_assign.data(), blk.count * 4);
            } else {
                for (size_t i = 0; i < blk.count; ++i) {
                    if (aw == 1) {
                        packed[i] = static_cast<uint8_t>(block_assign[i]);
                    } else {
                        uint16_t v = static_cast<uint16_t>(block_assign[i]);
                        std::memcpy(packed.data() + i * 2, &v, 2);
                    }
                }
            }
            assign_out.append(packed.data(), blk.count * aw);
        }
        assign_out.close();
        stats.sidecar_bytes_written = assign_out.bytes_written();
    }
    stats.assign_seconds = timer.seconds();
    timer.reset();

    // ---- plan extents (with oversized-bucket splitting) ----
    SplitLayout layout =
        plan_extents(counts, record_bytes, params.split_threshold_bytes, &stats.buckets_split);
    const uint32_t m_phys = static_cast<uint32_t>(layout.buckets.size());

    // ---- pass 3: bucket-major layout ----
    // Splitting can multiply the physical bucket count; shrink the per-bucket
    // buffer quantum (page-aligned) so the buffers stay inside the budget.
    uint64_t quantum = kBufferQuantum;
    if (params.memory_budget_bytes > 0) {
        uint64_t base = index.memory_bytes();
        uint64_t cap = (params.memory_budget_bytes - std::min(params.memory_budget_bytes, base)) /
                       2 / std::max(1u, m_phys);
        cap = cap / kPageSize * kPageSize;
        quantum = std::clamp<uint64_t>(cap, kPageSize, kBufferQuantum);
        if (base + uint64_t(m_phys) * quantum >= params.memory_budget_bytes) {
            raise(ErrorCode::BudgetInfeasible,
                  "budget cannot hold one page per physical bucket after splitting (" +
                      std::to_string(m_phys) + " buckets)");
        }
    }
    const std::string data_path = prefix + ".bks";
    {
        FileWriter data_out(data_path, 0);  // positioned writes only
        MemoryReservation buffers_mem(acct, uint64_t(m_phys) * quantum, "bucket buffers");
        std::vector<std::vector<uint8_t>> buffers(m_phys);
        std::vector<uint64_t> flushed(m_phys, 0);  // bytes already written per bucket
        // per-group cursor: current physical bucket + records left in it
        std::vector<uint32_t> cur_phys(m);
        std::vector<uint64_t> cur_left(m);
        for (uint32_t g = 0; g < m; ++g) {
            cur_phys[g] = layout.first_physical[g];
            cur_left[g] = m_phys ? layout.buckets[cur_phys[g]].count : 0;
        }

        auto flush = [&](uint32_t p) {
            auto& buf = buffers[p];
            if (buf.empty()) return;
            data_out.pwrite_exact(buf.data(), buf.size(),
                                  layout.buckets[p].byte_offset + flushed[p]);
            flushed[p] += buf.size();
            buf.clear();
        };

        FileReader assign_in(assign_path, false);
        std::vector<uint8_t> assign_buf;
        uint64_t block_bytes =
            choose_block(index.memory_bytes() + uint64_t(m_phys) * quantum, aw);
        BlockStream stream(handle, block_bytes, &acct);
        assign_buf.resize(stream.vectors_per_block() * aw);
        MemoryReservation assign_mem(acct, assign_buf.size(), "assignment block");

        VectorBlock blk;
        uint8_t record[8 + 4096 * 4];  // id + row staging; dim is validated elsewhere
        if (record_bytes > sizeof(record)) raise(ErrorCode::BadConfig, "dim too large");
        while (stream.next(blk)) {
            assign_in.pread_exact(assign_buf.data(), blk.count * aw, blk.start_id * aw);
            for (size_t i = 0; i < blk.count; ++i) {
                uint32_t g;
                if (aw == 1) {
                    g = assign_buf[i];
                } else if (aw == 2) {
                    uint16_t v;
                    std::memcpy(&v, assign_buf.data() + i * 2, 2);
                    g = v;
                } else {
                    std::memcpy(&g, assign_buf.data() + i * 4, 4);
                }
                while (cur_left[g] == 0) {
                    cur_phys[g]++;
                    cur_left[g] = layout.buckets[cur_phys[g]].count;
                }
                uint32_t p = cur_phys[g];
                cur_left[g]--;

                uint64_t id = blk.start_id + i;
                std::memcpy(record, &id, 8);
                std::memcpy(record + 8, blk.row(i), 4ull * d);
                auto& buf = buffers[p];
                if (!buf.empty() && buf.size() + record_bytes > quantum) flush(p);
                buf.insert(buf.end(), record, record + record_bytes);
            }
        }
        // final flush + zero padding up to each extent boundary
        std::vector<uint8_t> zeros(kPageSize, 0);
        for (uint32_t p = 0; p < m_phys; ++p) {
            flush(p);
            const Bucket& b = layout.buckets[p];
            uint64_t data_end = b.count * record_bytes;
            if (flushed[p] != data_end) {
                raise(ErrorCode::IoFailure, "bucket " + std::to_string(p) +
                                                " wrote " + std::to_string(flushed[p]) +
                                                " of " + std::to_string(data_end) + " bytes");
            }
            uint64_t pad = b.byte_length - data_end;
            stats.padding_bytes += pad;
            if (pad > 0) data_out.pwrite_exact(zeros.data(), pad, b.byte_offset + data_end);
        }
        data_out.close();
        stats.data_bytes_written = data_out.bytes_written();
    }
    remove_file_if_exists(assign_path);
    stats.layout_seconds = timer.seconds();
    stats.peak_memory_bytes = acct.peak();

    // ---- store object + metadata ----
    BucketStore store;
    store.data_path_ = data_path;
    store.dim_ = d;
    store.num_groups_ = m;
    store.total_vectors_ = handle.count;
    store.buckets_ = std::move(layout.buckets);
    store.centers_.resize(size_t(m_phys) * d);
    store.group_members_.resize(m);
    for (uint32_t p = 0; p < m_phys; ++p) {
        uint32_t g = store.buckets_[p].group;
        store.buckets_[p].radius = std::sqrt(radius_sq[g]);
        std::memcpy(store.centers_.data() + size_t(p) * d, index.center(g), 4ull * d);
        store.group_members_[g].push_back(p);
    }
    store.finalize_hash();
    store.save_meta(prefix + ".bkm");
    store.reader_.open(data_path, false);

    if (stats_out) *stats_out = stats;
    VJ_INFO("bucketize: %u groups, %u physical buckets, %zu split, peak mem %.1f MiB",
            m, m_phys, size_t(stats.buckets_split), acct.peak() / 1048576.0);
    return store;
}

BucketStore bucketize(const DatasetHandle& handle, const BucketizeParams& params,
                      const std::string& prefix, BucketizeStats* stats) {
    uint32_t m = params.num_buckets;
    if (m == 0) {
        m = static_cast<uint32_t>(std::max<uint64_t>(
            1, (handle.count + 500) / 1000));  // ~1 per mille of the dataset
        m = static_cast<uint32_t>(std::min<uint64_t>(m, handle.count));
    }
    auto centers = select_centers(handle, m, params.seed, params.block_bytes);
    auto index = CenterIndex::build(std::move(centers), handle.dim, params.index_params);
    index.save(prefix + ".cidx");
    return assign_and_layout(handle, index, params, prefix, stats);
}

uint64_t BucketStore::max_extent_bytes() const {
    uint64_t mx = 0;
    for (const auto& b : buckets_) mx = std::max(mx, b.byte_length);
    return mx;
}

BucketPayload BucketStore::read_bucket(uint32_t id) const {
    if (id >= buckets_.size()) raise(ErrorCode::BadConfig, "bucket id out of range");
    const Bucket& b = buckets_[id];
    const uint64_t record_bytes_ = record_bytes();

    BucketPayload out;
    out.bucket_id = id;
    out.dim = dim_;
    out.padded_bytes = b.byte_length;
    out.ids.resize(b.count);
    out.vectors.resize(b.count * dim_);
    if (b.byte_length == 0) return out;

    if (b.byte_length != round_up(b.count * record_bytes_, kPageSize)) {
        raise(ErrorCode::CorruptExtent, "extent length disagrees with record count");
    }
    AlignedBuffer buf(b.byte_length);
    reader_.pread_exact(buf.data(), b.byte_length, b.byte_offset);
    for (uint64_t i = 0; i < b.count; ++i) {
        const uint8_t* rec = buf.data() + i * record_bytes_;
        std::memcpy(&out.ids[i], rec, 8);
        if (out.ids[i] >= total_vectors_) {
            raise(ErrorCode::CorruptExtent, "record id out of range in bucket extent");
        }
        std::memcpy(out.vectors.data() + i * dim_, rec + 8, 4ull * dim_);
    }
    return out;
}

std::vector<uint64_t> BucketStore::id_map() const {
    std::vector<uint64_t> map;
    map.reserve(total_vectors_);
    for (uint32_t p = 0; p < num_buckets(); ++p) {
        auto payload = read_bucket(p);
        map.insert(map.end(), payload.ids.begin(), payload.ids.end());
    }
    return map;
}

void BucketStore::finalize_hash() {
    uint64_t h = kFnvOffset;
    h = fnv1a64(&dim_, 4, h);
    h = fnv1a64(&num_groups_, 4, h);
    h = fnv1a64(&total_vectors_, 8, h);
    h = fnv1a64(buckets_.data(), buckets_.size() * sizeof(Bucket), h);
    h = fnv1a64(centers_.data(), centers_.size() * sizeof(float), h);
    hash_ = h;
}

void BucketStore::save_meta(const std::string& meta_path) const {
    FileWriter w(meta_path);
    uint32_t m_phys = num_buckets();
    uint32_t head[4] = {kBkmMagic, kBkmVersion, m_phys, num_groups_};
    w.append(head, sizeof(head));
    w.append(&total_vectors_, 8);
    w.append(&dim_, 4);
    uint32_t pad = 0;
    w.append(&pad, 4);
    w.append(&hash_, 8);
    w.append(buckets_.data(), buckets_.size() * sizeof(Bucket));
    w.append(centers_.data(), centers_.size() * sizeof(float));
    w.close();
}

BucketStore BucketStore::open(const std::string& prefix, bool direct_io) {
    FileReader r(prefix + ".bkm", false);
    uint64_t off = 0;
    auto take = [&](void* dst, uint64_t n) {
        r.pread_exact(dst, n, off);
        off += n;
    };
    uint32_t head[4];
    take(head, sizeof(head));
    if (head[0] != kBkmMagic || head[1] != kBkmVersion) {
        raise(ErrorCode::IoFailure, prefix + ".bkm is not a bucket store (bad magic/version)");
    }
    BucketStore s;
    uint32_t m_phys = head[2];
    s.num_groups_ = head[3];
    take(&s.total_vectors_, 8);
    take(&s.dim_, 4);
    uint32_t pad;
    take(&pad, 4);
    take(&s.hash_, 8);
    s.buckets_.resize(m_phys);
    take(s.buckets_.data(), m_phys * sizeof(Bucket));
    s.centers_.resize(size_t(m_phys) * s.dim_);
    take(s.centers_.data(), s.centers_.size() * sizeof(float));
    s.group_members_.resize(s.num_groups_);
    for (uint32_t p = 0; p < m_phys; ++p) s.group_members_[s.buckets_[p].group].push_back(p);
    s.data_path_ = prefix + ".bks";
    s.reader_.open(s.data_path_, direct_io);
    return s;
}

}  // namespace vecjoin
