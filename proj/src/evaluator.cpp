#include "vecjoin/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "vecjoin/kernels.hpp"

namespace vecjoin {

namespace {

bool pair_less(const ResultPair& a, const ResultPair& b) {
    if (a.id_a != b.id_a) return a.id_a < b.id_a;
    return a.id_b < b.id_b;
}
bool pair_eq(const ResultPair& a, const ResultPair& b) {
    return a.id_a == b.id_a && a.id_b == b.id_b;
}

}  // namespace

PairSet PairSet::canonicalize(std::vector<ResultPair> raw) {
    for (auto& p : raw) {
        if (p.id_a > p.id_b) std::swap(p.id_a, p.id_b);
        if (!std::isfinite(p.dist)) raise(ErrorCode::BadConfig, "non-finite pair distance");
    }
    std::sort(raw.begin(), raw.end(), pair_less);
    raw.erase(std::unique(raw.begin(), raw.end(), pair_eq), raw.end());
    PairSet s;
    s.pairs = std::move(raw);
    return s;
}

PairSet PairSet::from_file(const std::string& path) {
    return canonicalize(std::move(read_pairs(path).pairs));
}

bool PairSet::contains(uint64_t a, uint64_t b) const {
    ResultPair probe{std::min(a, b), std::max(a, b), 0.f};
    auto it = std::lower_bound(pairs.begin(), pairs.end(), probe, pair_less);
    return it != pairs.end() && pair_eq(*it, probe);
}

PairSet brute_force_join(const DatasetHandle& handle, double epsilon, uint64_t max_n,
                         uint64_t block_bytes) {
    if (handle.count > max_n) {
        raise(ErrorCode::TooLarge, "brute-force join refuses N=" + std::to_string(handle.count) +
                                       " > " + std::to_string(max_n));
    }
    const uint32_t d = handle.dim;
    const float eps_sq = float(epsilon * epsilon);

    std::vector<ResultPair> found;
    BlockStream outer(handle, block_bytes);
    VectorBlock oblk;
    std::vector<float> orows;
    while (outer.next(oblk)) {
        orows.assign(oblk.data, oblk.data + oblk.count * d);
        uint64_t ostart = oblk.start_id;
        size_t ocount = oblk.count;

        BlockStream inner(handle, block_bytes);
        VectorBlock iblk;
        while (inner.next(iblk)) {
            if (iblk.start_id + iblk.count <= ostart) continue;  // j-blocks from the diagonal on

            unsigned nthreads = default_thread_count();
            std::vector<std::vector<ResultPair>> parts(nthreads);
            parallel_for(
                ocount,
                [&](size_t lo, size_t hi, unsigned w) {
                    for (size_t i = lo; i < hi; ++i) {
                        uint64_t gi = ostart + i;
                        const float* ri = orows.data() + i * d;
                        size_t jstart = gi + 1 > iblk.start_id ? size_t(gi + 1 - iblk.start_id) : 0;
                        for (size_t j = jstart; j < iblk.count; ++j) {
                            float dist_sq = kernels::l2sq(ri, iblk.row(j), d);
                            if (dist_sq <= eps_sq) {
                                parts[w].push_back({gi, iblk.start_id + j, std::sqrt(dist_sq)});
                            }
                        }
                    }
                },
                nthreads);
            for (auto& part : parts) {
                found.insert(found.end(), part.begin(), part.end());
            }
        }
    }
    return PairSet::canonicalize(std::move(found));
}

double recall(const PairSet& engine, const PairSet& oracle) {
    if (oracle.pairs.empty()) return 1.0;
    size_t hits = 0;
    auto it = engine.pairs.begin();
    for (const auto& p : oracle.pairs) {
        while (it != engine.pairs.end() && pair_less(*it, p)) ++it;
        if (it != engine.pairs.end() && pair_eq(*it, p)) hits++;
    }
    return double(hits) / double(oracle.pairs.size());
}

PrecisionReport check_precision(const DatasetHandle& handle, const PairSet& engine,
                                double epsilon) {
    const uint32_t d = handle.dim;
    if (handle.count * uint64_t(d) * 4 > (1ull << 29)) {
        raise(ErrorCode::TooLarge, "precision check loads the whole dataset; too large");
    }
    std::vector<uint64_t> all(handle.count);
    for (uint64_t i = 0; i < handle.count; ++i) all[i] = i;
    auto rows = read_rows(handle, all);

    const float eps_sq = float(epsilon * epsilon);
    PrecisionReport rep;
    for (const auto& p : engine.pairs) {
        rep.checked++;
        if (p.id_a >= handle.count || p.id_b >= handle.count || p.id_a == p.id_b) {
            rep.violations++;
            continue;
        }
        // scalar route, independent of whatever kernel produced the result
        float dist_sq =
            kernels::l2sq_scalar(rows.data() + p.id_a * d, rows.data() + p.id_b * d, d);
        if (dist_sq > eps_sq) {
            rep.violations++;
            continue;
        }
        float dist = std::sqrt(dist_sq);
        float denom = std::max(dist, 1e-20f);
        if (std::abs(dist - p.dist) / denom > 1e-4f && std::abs(dist - p.dist) > 1e-6f) {
            rep.dist_warnings++;
        }
    }
    return rep;
}

double measure_avg_neighbors(const DatasetHandle& handle, double epsilon, uint64_t sample_size,
                             uint64_t seed) {
    const uint32_t d = handle.dim;
    auto qids = sample_ids(handle.count, sample_size, seed);
    auto qrows = read_rows(handle, qids);
    const float eps_sq = float(epsilon * epsilon);

    unsigned nthreads = default_thread_count();
    std::vector<uint64_t> counts(nthreads, 0);
    BlockStream stream(handle, 64ull << 20);
    VectorBlock blk;
    while (stream.next(blk)) {
        parallel_for(
            qids.size(),
            [&](size_t lo, size_t hi, unsigned w) {
                for (size_t q = lo; q < hi; ++q) {
                    const float* qp = qrows.data() + q * d;
                    for (size_t j = 0; j < blk.count; ++j) {
                        if (blk.start_id + j == qids[q]) continue;
                        if (kernels::l2sq(qp, blk.row(j), d) <= eps_sq) counts[w]++;
                    }
                }
            },
            nthreads);
    }
    uint64_t total = 0;
    for (auto c : counts) total += c;
    return double(total) / double(sample_size);
}

CalibrationResult calibrate_epsilon(const DatasetHandle& handle, double target_avg_neighbors,
                                    uint64_t sample_size, uint64_t seed) {
    if (sample_size < 1 || sample_size > handle.count) {
        raise(ErrorCode::TooLarge, "sample_size out of range");
    }
    if (target_avg_neighbors < 0) raise(ErrorCode::BadConfig, "target must be >= 0");
    const uint32_t d = handle.dim;
    auto qids = sample_ids(handle.count, sample_size, seed);
    auto qrows = read_rows(handle, qids);

    const uint64_t want = uint64_t(std::llround(target_avg_neighbors * double(sample_size)));
    const uint64_t total_pairs = sample_size * (handle.count - 1);
    const uint64_t k = std::min(want, total_pairs);

    // Invert the aggregate curve: the distance at which the sampled queries
    // hold k neighbors in total is the k-th smallest of all query-to-dataset
    // distances. Per-thread bounded max-heaps keep only the k smallest each.
    unsigned nthreads = default_thread_count();
    std::vector<std::priority_queue<float>> heaps(nthreads);
    std::vector<float> min_pos(nthreads, std::numeric_limits<float>::max());

    BlockStream stream(handle, 64ull << 20);
    VectorBlock blk;
    while (stream.next(blk)) {
        parallel_for(
            qids.size(),
            [&](size_t lo, size_t hi, unsigned w) {
                auto& heap = heaps[w];
                for (size_t q = lo; q < hi; ++q) {
                    const float* qp = qrows.data() + q * d;
                    for (size_t j = 0; j < blk.count; ++j) {
                        if (blk.start_id + j == qids[q]) continue;
                        float dist_sq = kernels::l2sq(qp, blk.row(j), d);
                        if (dist_sq > 0 && dist_sq < min_pos[w]) min_pos[w] = dist_sq;
                        if (heap.size() < k) {
                            heap.push(dist_sq);
                        } else if (k > 0 && dist_sq < heap.top()) {
                            heap.pop();
                            heap.push(dist_sq);
                        }
                    }
                }
            },
            nthreads);
    }

    CalibrationResult res;
    res.samples = sample_size;
    if (k == 0) {
        float mp = std::numeric_limits<float>::max();
        for (float v : min_pos) mp = std::min(mp, v);
        res.epsilon = mp == std::numeric_limits<float>::max() ? 0.0 : 0.5 * std::sqrt(mp);
        res.achieved_avg = 0.0;
        return res;
    }
    std::vector<float> merged;
    for (auto& h : heaps) {
        while (!h.empty()) {
            merged.push_back(h.top());
            h.pop();
        }
    }
    std::sort(merged.begin(), merged.end());
    res.epsilon = std::sqrt(double(merged[std::min<size_t>(k, merged.size()) - 1]));
    res.achieved_avg = measure_avg_neighbors(handle, res.epsilon, sample_size, seed);
    return res;
}

}  // namespace vecjoin
