#include "vecjoin/executor.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "vecjoin/kernels.hpp"

namespace vecjoin {

uint64_t verify_pair(const BucketPayload& a, const BucketPayload& b, double epsilon,
                     bool same_bucket, std::vector<ResultPair>& out) {
    const uint32_t d = a.dim;
    const float eps_sq = float(epsilon * epsilon);
    uint64_t dc = 0;
    if (same_bucket) {
        for (size_t i = 0; i < a.count(); ++i) {
            const float* ri = a.row(i);
            for (size_t j = i + 1; j < a.count(); ++j) {
                float dist_sq = kernels::l2sq(ri, a.row(j), d);
                dc++;
                if (dist_sq <= eps_sq) {
                    uint64_t ia = a.ids[i], ib = a.ids[j];
                    out.push_back({std::min(ia, ib), std::max(ia, ib), std::sqrt(dist_sq)});
                }
            }
        }
    } else {
        for (size_t i = 0; i < a.count(); ++i) {
            const float* ri = a.row(i);
            for (size_t j = 0; j < b.count(); ++j) {
                float dist_sq = kernels::l2sq(ri, b.row(j), d);
                dc++;
                if (dist_sq <= eps_sq) {
                    uint64_t ia = a.ids[i], ib = b.ids[j];
                    out.push_back({std::min(ia, ib), std::max(ia, ib), std::sqrt(dist_sq)});
                }
            }
        }
    }
    return dc;
}

// --- result file --------------------------------------------------------

static constexpr uint32_t kPairMagic = 0x52504a56;  // "VJPR"
static constexpr uint32_t kPairVersion = 1;

PairWriter::PairWriter(const std::string& path, double epsilon, uint64_t n) : out_(path) {
    uint32_t head[2] = {kPairMagic, kPairVersion};
    out_.append(head, 8);
    out_.append(&epsilon, 8);
    out_.append(&n, 8);
}

void PairWriter::write(const std::vector<ResultPair>& pairs) {
    for (const auto& p : pairs) {
        out_.append(&p.id_a, 8);
        out_.append(&p.id_b, 8);
        out_.append(&p.dist, 4);
    }
    pairs_written_ += pairs.size();
}

uint64_t PairWriter::bytes_written() const { return out_.append_offset(); }

void PairWriter::close() { out_.close(); }

PairFile read_pairs(const std::string& path) {
    FileReader r(path, false);
    if (r.size() < 24) raise(ErrorCode::IoFailure, path + ": truncated pair file");
    uint32_t head[2];
    r.pread_exact(head, 8, 0);
    if (head[0] != kPairMagic || head[1] != kPairVersion) {
        raise(ErrorCode::IoFailure, path + " is not a pair file (bad magic/version)");
    }
    PairFile f;
    r.pread_exact(&f.epsilon, 8, 8);
    r.pread_exact(&f.n, 8, 16);
    uint64_t body = r.size() - 24;
    if (body % 20 != 0) raise(ErrorCode::IoFailure, path + ": pair records truncated");
    uint64_t count = body / 20;
    f.pairs.resize(count);
    std::vector<uint8_t> buf(std::min<uint64_t>(body, 1 << 20));
    uint64_t done = 0;
    size_t idx = 0;
    while (done < body) {
        uint64_t take = std::min<uint64_t>(buf.size() / 20 * 20, body - done);
        r.pread_exact(buf.data(), take, 24 + done);
        for (uint64_t o = 0; o < take; o += 20) {
            ResultPair& p = f.pairs[idx++];
            std::memcpy(&p.id_a, buf.data() + o, 8);
            std::memcpy(&p.id_b, buf.data() + o + 8, 8);
            std::memcpy(&p.dist, buf.data() + o + 16, 4);
        }
        done += take;
    }
    return f;
}

// --- join execution -------------------------------------------------------

namespace {

/// Shared state between the loader thread and the verification loop. The
/// loader applies plan steps in order (evict, then read); it may run ahead of
/// the compute position by up to prefetch_depth tasks, and an eviction waits
/// until the victim's last-using task has completed.
struct CacheRuntime {
    std::mutex mu;
    std::condition_variable cv;
    std::unordered_map<uint32_t, std::shared_ptr<BucketPayload>> resident;
    uint64_t applied_steps = 0;    // plan steps fully applied by the loader
    uint64_t completed_tasks = 0;  // tasks verified by the compute loop
    uint64_t bytes_resident = 0;
    uint64_t peak_bytes = 0;
    std::string loader_error;
};

}  // namespace

std::string RunStats::to_kv_text() const {
    std::ostringstream ss;
    ss << "bytes_total=" << bytes_total << "\n"
       << "bytes_useful=" << bytes_useful << "\n"
       << "amp=" << amp() << "\n"
       << "cache_hits=" << cache_hits << "\n"
       << "cache_misses=" << cache_misses << "\n"
       << "hit_rate=" << hit_rate() << "\n"
       << "distance_computations=" << distance_computations << "\n"
       << "result_pairs=" << result_pairs << "\n"
       << "peak_cache_bytes=" << peak_cache_bytes << "\n"
       << "direct_io=" << (direct_io ? 1 : 0) << "\n"
       << "bucketize_seconds=" << bucketize_seconds << "\n"
       << "graph_seconds=" << graph_seconds << "\n"
       << "orchestrate_seconds=" << orchestrate_seconds << "\n"
       << "execute_seconds=" << execute_seconds << "\n";
    return ss.str();
}

std::string RunStats::csv_header() {
    return "schema_version,bytes_total,bytes_useful,amp,cache_hits,cache_misses,hit_rate,"
           "distance_computations,result_pairs,peak_cache_bytes,direct_io,"
           "bucketize_seconds,graph_seconds,orchestrate_seconds,execute_seconds";
}

std::string RunStats::csv_row() const {
    std::ostringstream ss;
    ss << 1 << ',' << bytes_total << ',' << bytes_useful << ',' << amp() << ',' << cache_hits
       << ',' << cache_misses << ',' << hit_rate() << ',' << distance_computations << ','
       << result_pairs << ',' << peak_cache_bytes << ',' << (direct_io ? 1 : 0) << ','
       << bucketize_seconds << ',' << graph_seconds << ',' << orchestrate_seconds << ','
       << execute_seconds;
    return ss.str();
}

RunStats run_join(const BucketStore& store, const Plan& plan, double epsilon,
                  const std::string& out_path, const ExecParams& params) {
    Timer timer;
    if (!(epsilon > 0)) raise(ErrorCode::BadConfig, "epsilon must be positive");
    if (plan.num_buckets != store.num_buckets() || plan.store_hash != store.store_hash()) {
        raise(ErrorCode::PlanMismatch, "plan was built for a different bucket store");
    }
    if (params.cache_bytes > 0 &&
        uint64_t(plan.capacity) * store.max_extent_bytes() > params.cache_bytes) {
        raise(ErrorCode::PlanMismatch,
              "plan capacity " + std::to_string(plan.capacity) + " x max bucket " +
                  std::to_string(store.max_extent_bytes()) + " exceeds the cache budget");
    }
    const auto& steps = plan.eviction.steps;
    const auto& seq = plan.schedule.access_seq;
    if (steps.size() != seq.size() || seq.size() != 2 * plan.schedule.tasks.size()) {
        raise(ErrorCode::PlanMismatch, "plan steps and schedule disagree");
    }

    // an eviction at step s is safe once the victim's last prior use is done
    std::vector<uint64_t> evict_gate(steps.size(), 0);  // completed_tasks required
    {
        std::vector<uint64_t> last_access(plan.num_buckets, 0);
        for (size_t s = 0; s < steps.size(); ++s) {
            if (steps[s].evict != kNoEvict) {
                evict_gate[s] = last_access[steps[s].evict] / 2 + 1;
            }
            last_access[seq[s]] = s;
        }
    }

    RunStats stats;
    stats.direct_io = store.direct_io_active();
    CacheRuntime rt;
    const uint64_t total_tasks = plan.schedule.tasks.size();
    const uint64_t prefetch_tasks = std::max<uint32_t>(1, params.prefetch_depth);

    std::thread loader([&] {
        try {
            for (size_t s = 0; s < steps.size(); ++s) {
                const PlanStep& st = steps[s];
                {
                    std::unique_lock<std::mutex> lk(rt.mu);
                    rt.cv.wait(lk, [&] {
                        return s / 2 < rt.completed_tasks + prefetch_tasks + 1 ||
                               !rt.loader_error.empty();
                    });
                    if (!rt.loader_error.empty()) return;
                }
                if (st.hit) {
                    std::unique_lock<std::mutex> lk(rt.mu);
                    if (!rt.resident.count(st.bucket)) {
                        rt.loader_error = "plan expects bucket resident but it is not";
                        rt.cv.notify_all();
                        return;
                    }
                    stats.cache_hits++;
                    rt.applied_steps = s + 1;
                    rt.cv.notify_all();
                    continue;
                }
                if (st.evict != kNoEvict) {
                    std::unique_lock<std::mutex> lk(rt.mu);
                    rt.cv.wait(lk, [&] { return rt.completed_tasks >= evict_gate[s]; });
                    auto it = rt.resident.find(st.evict);
                    if (it == rt.resident.end()) {
                        rt.loader_error = "plan evicts a bucket that is not resident";
                        rt.cv.notify_all();
                        return;
                    }
                    rt.bytes_resident -= it->second->padded_bytes;
                    rt.resident.erase(it);
                }
                // read outside the lock: single-extent aligned sequential read
                auto payload = std::make_shared<BucketPayload>(store.read_bucket(st.bucket));
                stats.cache_misses++;
                stats.bytes_total += payload->padded_bytes;
                stats.bytes_useful += payload->count() * store.record_bytes();
                {
                    std::unique_lock<std::mutex> lk(rt.mu);
                    rt.bytes_resident += payload->padded_bytes;
                    rt.peak_bytes = std::max(rt.peak_bytes, rt.bytes_resident);
                    if (params.cache_bytes > 0 && rt.bytes_resident > params.cache_bytes) {
                        rt.loader_error = "resident bytes exceeded the cache budget";
                        rt.cv.notify_all();
                        return;
                    }
                    rt.resident.emplace(st.bucket, std::move(payload));
                    rt.applied_steps = s + 1;
                    rt.cv.notify_all();
                }
            }
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lk(rt.mu);
            rt.loader_error = e.what();
            rt.cv.notify_all();
        }
    });

    PairWriter writer(out_path, epsilon, store.total_vectors());
    const unsigned threads =
        params.verify_threads ? params.verify_threads : default_thread_count();

    std::vector<ResultPair> results;
    std::exception_ptr compute_error;
    try {
    for (uint64_t t = 0; t < total_tasks; ++t) {
        std::shared_ptr<BucketPayload> pa, pb;
        auto [a, b] = plan.schedule.tasks[t];
        {
            std::unique_lock<std::mutex> lk(rt.mu);
            rt.cv.wait(lk,
                       [&] { return rt.applied_steps >= 2 * t + 2 || !rt.loader_error.empty(); });
            if (!rt.loader_error.empty()) break;
            pa = rt.resident.at(a);
            pb = rt.resident.at(b);
        }
        results.clear();
        if (a == b || pa->count() * pb->count() < 4096 || threads <= 1) {
            stats.distance_computations += verify_pair(*pa, *pb, epsilon, a == b, results);
        } else {
            // split the left bucket's rows across the verifier pool
            std::vector<std::vector<ResultPair>> parts(threads);
            std::vector<uint64_t> dcs(threads, 0);
            parallel_for(
                pa->count(),
                [&](size_t lo, size_t hi, unsigned w) {
                    BucketPayload slice;
                    slice.dim = pa->dim;
                    slice.ids.assign(pa->ids.begin() + lo, pa->ids.begin() + hi);
                    slice.vectors.assign(pa->vectors.begin() + lo * pa->dim,
                                         pa->vectors.begin() + hi * pa->dim);
                    dcs[w] += verify_pair(slice, *pb, epsilon, false, parts[w]);
                },
                threads);
            for (unsigned w = 0; w < threads; ++w) {
                stats.distance_computations += dcs[w];
                results.insert(results.end(), parts[w].begin(), parts[w].end());
            }
        }
        writer.write(results);
        {
            std::lock_guard<std::mutex> lk(rt.mu);
            rt.completed_tasks = t + 1;
        }
        rt.cv.notify_all();
    }
    } catch (...) {
        compute_error = std::current_exception();
        std::lock_guard<std::mutex> lk(rt.mu);
        if (rt.loader_error.empty()) rt.loader_error = "compute stage failed";
        rt.cv.notify_all();
    }
    loader.join();
    if (compute_error) std::rethrow_exception(compute_error);
    if (!rt.loader_error.empty()) {
        raise(ErrorCode::PlanMismatch, "execution aborted: " + rt.loader_error);
    }
    writer.close();
    stats.result_pairs = writer.pairs_written();
    stats.peak_cache_bytes = rt.peak_bytes;
    stats.execute_seconds = timer.seconds();

    if (stats.cache_misses != plan.eviction.misses) {
        raise(ErrorCode::PlanMismatch,
              "executed misses " + std::to_string(stats.cache_misses) +
                  " != planned misses " + std::to_string(plan.eviction.misses));
    }
    VJ_INFO("join: %llu tasks, %llu pairs, %llu DC, hit rate %.3f, amp %.4f (%.2fs)",
            (unsigned long long)total_tasks, (unsigned long long)stats.result_pairs,
            (unsigned long long)stats.distance_computations, stats.hit_rate(), stats.amp(),
            stats.execute_seconds);
    return stats;
}

}  // namespace vecjoin
