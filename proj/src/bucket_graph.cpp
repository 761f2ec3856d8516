#include "vecjoin/bucket_graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <sstream>

namespace vecjoin {

PruneBudget PruneBudget::make(double lambda, uint32_t dim, bool apply_mu) {
    if (!(lambda > 0.0 && lambda <= 1.0)) {
        raise(ErrorCode::BadConfig, "lambda must be in (0, 1]");
    }
    PruneBudget b;
    b.lambda = lambda;
    b.apply_mu = apply_mu;
    // finite for d >= 2; d = 1 yields +inf, which simply disables budgeted pruning
    double log_mu = -0.5 * std::log(M_PI) + std::lgamma((double(dim) - 1.0) / 2.0) -
                    std::lgamma(double(dim) / 2.0);
    b.mu = std::exp(log_mu);
    return b;
}

std::vector<CandidateBucket> candidate_buckets(const BucketStore& store, uint32_t b,
                                               const CenterIndex& index, uint32_t L) {
    if (L < 1) raise(ErrorCode::BadConfig, "L must be >= 1");
    const uint32_t groups = store.num_groups();
    const uint32_t own_group = store.bucket(b).group;
    uint32_t k = static_cast<uint32_t>(std::min<uint64_t>(uint64_t(L) + 1, groups));
    uint32_t ef = std::max(k, 128u);
    auto found = index.search(store.center(b), k, ef);

    std::vector<CandidateBucket> out;
    out.reserve(found.size());
    for (const auto& r : found) {
        if (r.id == own_group) continue;
        for (uint32_t p : store.group_members(r.id)) {
            out.push_back({p, r.dist});
        }
        if (out.size() >= L) break;
    }
    if (out.size() > L) out.resize(L);
    return out;
}

std::vector<CandidateBucket> triangle_filter(const BucketStore& store, uint32_t b,
                                             std::vector<CandidateBucket> candidates,
                                             double epsilon) {
    const double r_b = store.bucket(b).radius;
    auto keep = [&](const CandidateBucket& c) {
        return double(c.center_dist) - r_b - double(store.bucket(c.id).radius) <= epsilon;
    };
    candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                    [&](const CandidateBucket& c) { return !keep(c); }),
                     candidates.end());
    return candidates;
}

std::vector<CandidateBucket> probabilistic_prune(const BucketStore& store, uint32_t b,
                                                 std::vector<CandidateBucket> survivors,
                                                 const PruneBudget& budget, double epsilon,
                                                 std::vector<uint32_t>* certified) {
    if (budget.lambda >= 1.0) return survivors;  // zero error budget: prune nothing
    const double r = double(store.bucket(b).radius) + epsilon;
    const double max_err = 1.0 - budget.lambda;
    const double scale = budget.apply_mu ? budget.mu : 1.0;

    // survivors arrive sorted ascending; walk from the farthest inward
    size_t keep_count = survivors.size();
    double sum = 0.0;
    for (size_t i = survivors.size(); i-- > 0;) {
        double dist = survivors[i].center_dist;
        double x = r > 0.0 ? (dist / 2.0) / r : (dist > 0.0 ? 2.0 : 0.0);
        if (x >= 1.0) {
            // bisector outside the reach of b's members: no neighbor possible
            if (certified) certified->push_back(survivors[i].id);
            keep_count = i;
            continue;
        }
        double term = scale * std::acos(x);
        if (sum + term >= max_err) break;
        sum += term;
        keep_count = i;
    }
    survivors.resize(keep_count);
    return survivors;
}

BucketGraph build_graph(const BucketStore& store, const CenterIndex& index, double epsilon,
                        const PruneBudget& budget, uint32_t L, bool adaptive_L,
                        GraphBuildStats* stats_out) {
    Timer timer;
    const uint32_t m_phys = store.num_buckets();
    const uint32_t groups = store.num_groups();

    GraphBuildStats stats;
    stats.candidates.assign(m_phys, 0);
    stats.after_triangle.assign(m_phys, 0);
    stats.after_prune.assign(m_phys, 0);
    std::atomic<uint32_t> truncations{0};

    std::vector<std::vector<uint32_t>> kept_per_bucket(m_phys);
    std::vector<std::vector<uint32_t>> certified_per_bucket(m_phys);
    parallel_for(m_phys, [&](size_t lo, size_t hi, unsigned) {
        for (size_t b = lo; b < hi; ++b) {
            uint32_t width = groups > 1 ? std::min(L, groups - 1) : 1;
            std::vector<CandidateBucket> cands, filtered;
            while (true) {
                cands = candidate_buckets(store, static_cast<uint32_t>(b), index, width);
                filtered = triangle_filter(store, static_cast<uint32_t>(b), cands, epsilon);
                bool list_full = !cands.empty() && cands.size() >= width;
                bool farthest_passes =
                    !cands.empty() &&
                    double(cands.back().center_dist) - store.bucket(b).radius -
                            store.bucket(cands.back().id).radius <=
                        epsilon;
                if (!list_full || !farthest_passes) break;
                if (width >= groups - 1) break;  // complete list, nothing truncated
                if (!adaptive_L) {
                    // the L-th candidate still passes: candidates may be truncated
                    truncations.fetch_add(1, std::memory_order_relaxed);
                    break;
                }
                width = std::min(width * 2, groups - 1);
            }
            auto pruned = probabilistic_prune(store, static_cast<uint32_t>(b), filtered, budget,
                                              epsilon, &certified_per_bucket[b]);
            stats.candidates[b] = cands.size();
            stats.after_triangle[b] = filtered.size();
            stats.after_prune[b] = pruned.size();
            auto& kept = kept_per_bucket[b];
            kept.reserve(pruned.size());
            for (const auto& c : pruned) kept.push_back(c.id);
        }
    });
    stats.truncation_warnings = truncations.load();
    if (stats.truncation_warnings > 0) {
        VJ_WARN("candidate search width L=%u may truncate lists for %u buckets", L,
                stats.truncation_warnings);
    }

    // a certified-empty verdict from either endpoint vetoes the edge: it is a
    // geometric proof, unlike the budgeted prunes which merge conservatively
    std::vector<std::set<uint32_t>> vetoed(m_phys);
    for (uint32_t b = 0; b < m_phys; ++b) {
        for (uint32_t j : certified_per_bucket[b]) vetoed[b].insert(j);
    }
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t b = 0; b < m_phys; ++b) {
        for (uint32_t j : kept_per_bucket[b]) {
            if (vetoed[j].count(b)) continue;
            edges.emplace_back(std::min(b, j), std::max(b, j));
        }
    }
    // sibling sub-buckets hold one logical bucket's vectors: always verified
    for (uint32_t g = 0; g < groups; ++g) {
        const auto& members = store.group_members(g);
        for (size_t a = 0; a < members.size(); ++a) {
            for (size_t c = a + 1; c < members.size(); ++c) {
                edges.emplace_back(members[a], members[c]);
            }
        }
    }

    BucketGraph graph = BucketGraph::from_edges(m_phys, std::move(edges), true);
    graph.epsilon_ = epsilon;
    graph.lambda_ = budget.lambda;
    graph.apply_mu_ = budget.apply_mu;
    graph.store_hash_ = store.store_hash();
    graph.finalize_hash();

    stats.build_seconds = timer.seconds();
    if (stats_out) *stats_out = stats;
    VJ_INFO("bucket graph: %u nodes, %zu edges (%.2fs)", m_phys, size_t(graph.num_edges()),
            stats.build_seconds);
    return graph;
}

BucketGraph BucketGraph::from_edges(uint32_t num_nodes,
                                    std::vector<std::pair<uint32_t, uint32_t>> edges,
                                    bool self_check) {
    for (auto& [i, j] : edges) {
        if (i >= j || j >= num_nodes) {
            raise(ErrorCode::BadConfig, "edge endpoints must satisfy i < j < M");
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    BucketGraph g;
    g.self_check_ = self_check;
    g.offsets_.assign(num_nodes + 1, 0);
    g.neighbors_.reserve(edges.size());
    for (const auto& [i, j] : edges) g.offsets_[i + 1]++;
    for (uint32_t i = 0; i < num_nodes; ++i) g.offsets_[i + 1] += g.offsets_[i];
    for (const auto& [i, j] : edges) g.neighbors_.push_back(j);
    g.finalize_hash();
    return g;
}

void BucketGraph::finalize_hash() {
    uint64_t h = kFnvOffset;
    uint32_t m = num_nodes();
    h = fnv1a64(&m, 4, h);
    h = fnv1a64(&epsilon_, 8, h);
    h = fnv1a64(&lambda_, 8, h);
    uint8_t flags = uint8_t(self_check_) | (uint8_t(apply_mu_) << 1);
    h = fnv1a64(&flags, 1, h);
    h = fnv1a64(&store_hash_, 8, h);
    h = fnv1a64(offsets_.data(), offsets_.size() * 8, h);
    h = fnv1a64(neighbors_.data(), neighbors_.size() * 4, h);
    graph_hash_ = h;
}

static constexpr uint32_t kBdgMagic = 0x47424a56;  // "VJBG"
static constexpr uint32_t kBdgVersion = 1;

void BucketGraph::save(const std::string& path) const {
    FileWriter w(path);
    uint32_t m = num_nodes();
    uint32_t head[4] = {kBdgMagic, kBdgVersion, m,
                        uint32_t(self_check_) | (uint32_t(apply_mu_) << 1)};
    w.append(head, sizeof(head));
    w.append(&epsilon_, 8);
    w.append(&lambda_, 8);
    w.append(&store_hash_, 8);
    w.append(&graph_hash_, 8);
    w.append(offsets_.data(), offsets_.size() * 8);
    w.append(neighbors_.data(), neighbors_.size() * 4);
    w.close();
}

BucketGraph BucketGraph::load(const std::string& path) {
    FileReader r(path, false);
    uint64_t off = 0;
    auto take = [&](void* dst, uint64_t n) {
        r.pread_exact(dst, n, off);
        off += n;
    };
    uint32_t head[4];
    take(head, sizeof(head));
    if (head[0] != kBdgMagic || head[1] != kBdgVersion) {
        raise(ErrorCode::IoFailure, path + " is not a bucket graph (bad magic/version)");
    }
    BucketGraph g;
    uint32_t m = head[2];
    g.self_check_ = head[3] & 1;
    g.apply_mu_ = (head[3] >> 1) & 1;
    take(&g.epsilon_, 8);
    take(&g.lambda_, 8);
    take(&g.store_hash_, 8);
    uint64_t stored_hash;
    take(&stored_hash, 8);
    g.offsets_.resize(m + 1);
    take(g.offsets_.data(), g.offsets_.size() * 8);
    g.neighbors_.resize(g.offsets_[m]);
    take(g.neighbors_.data(), g.neighbors_.size() * 4);
    g.finalize_hash();
    if (g.graph_hash_ != stored_hash) {
        raise(ErrorCode::IoFailure, path + ": stored graph hash mismatch");
    }
    return g;
}

void GraphBuildStats::write_csv(const std::string& path) const {
    std::ostringstream ss;
    ss << "bucket,candidates,after_triangle,after_prune\n";
    for (size_t b = 0; b < candidates.size(); ++b) {
        ss << b << ',' << candidates[b] << ',' << after_triangle[b] << ',' << after_prune[b]
           << '\n';
    }
    write_text_file(path, ss.str());
}

uint64_t candidate_vector_pairs(const BucketStore& store, const BucketGraph& graph) {
    uint64_t pairs = 0;
    for (uint32_t i = 0; i < graph.num_nodes(); ++i) {
        uint64_t n_i = store.bucket(i).count;
        if (graph.self_check()) pairs += n_i * (n_i - 1) / 2;
        for (auto it = graph.neighbors_begin(i); it != graph.neighbors_end(i); ++it) {
            pairs += n_i * store.bucket(*it).count;
        }
    }
    return pairs;
}

}  // namespace vecjoin
