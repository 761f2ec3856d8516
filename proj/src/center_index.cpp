#include "vecjoin/center_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>

#include "vecjoin/dataset.hpp"
#include "vecjoin/io.hpp"
#include "vecjoin/kernels.hpp"

namespace vecjoin {

namespace {

// (dist_sq, id) ordering with id tie-break keeps every heap operation
// deterministic across runs and platforms.
struct NearFirst {
    bool operator()(const std::pair<float, uint32_t>& a, const std::pair<float, uint32_t>& b) const {
        if (a.first != b.first) return a.first > b.first;
        return a.second > b.second;
    }
};
struct FarFirst {
    bool operator()(const std::pair<float, uint32_t>& a, const std::pair<float, uint32_t>& b) const {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    }
};

thread_local std::vector<uint8_t> t_visited;

}  // namespace

float CenterIndex::dist_sq(const float* a, const float* b) const {
    return kernels::l2sq(a, b, dim_);
}

float CenterIndex::dist_sq_to(uint32_t node, const float* q) const {
    return kernels::l2sq(center(node), q, dim_);
}

CenterIndex CenterIndex::build(std::vector<float> centers, uint32_t dim,
                               CenterIndexParams params) {
    if (dim == 0 || centers.size() % dim != 0 || centers.empty()) {
        raise(ErrorCode::BadConfig, "centers array does not match dim");
    }
    for (float v : centers) {
        if (!std::isfinite(v)) raise(ErrorCode::NonFiniteInput, "non-finite center coordinate");
    }
    if (params.graph_degree < 2) raise(ErrorCode::BadConfig, "graph_degree must be >= 2");

    CenterIndex idx;
    idx.m_ = static_cast<uint32_t>(centers.size() / dim);
    idx.dim_ = dim;
    idx.params_ = params;
    idx.centers_ = std::move(centers);

    // geometric level assignment, normalization 1/ln(graph_degree)
    const double ml = 1.0 / std::log(double(params.graph_degree));
    SplitMix64 rng(params.seed);
    idx.levels_.resize(idx.m_);
    uint32_t top = 0;
    for (uint32_t i = 0; i < idx.m_; ++i) {
        double u;
        do {
            u = rng.next_double();
        } while (u <= 0.0);
        idx.levels_[i] = static_cast<uint32_t>(-std::log(u) * ml);
        top = std::max(top, idx.levels_[i]);
    }
    idx.adjacency_.assign(top + 1, std::vector<std::vector<uint32_t>>(idx.m_));
    idx.top_level_ = idx.levels_[0];
    idx.entry_ = 0;

    std::vector<std::pair<float, uint32_t>> candidates;
    for (uint32_t node = 1; node < idx.m_; ++node) {
        const float* q = idx.center(node);
        uint32_t node_level = idx.levels_[node];
        uint32_t ep = idx.entry_;

        // greedy descent through layers above the node's level
        for (uint32_t lc = idx.top_level_; lc > node_level && lc > 0; --lc) {
            idx.search_layer(q, ep, 1, lc, candidates);
            ep = candidates.front().second;
        }

        for (int lc = int(std::min(node_level, idx.top_level_)); lc >= 0; --lc) {
            idx.search_layer(q, ep, params.ef_construction, uint32_t(lc), candidates);
            ep = candidates.front().second;
            uint32_t cap = idx.degree_cap(uint32_t(lc));
            auto selected = idx.select_neighbors(candidates, params.graph_degree);
            auto& own = idx.adjacency_[lc][node];
            own = selected;
            for (uint32_t nb : selected) {
                auto& list = idx.adjacency_[lc][nb];
                list.push_back(node);
                if (list.size() > cap) {
                    // re-select the neighbor's list around its own center
                    std::vector<std::pair<float, uint32_t>> pool;
                    pool.reserve(list.size());
                    for (uint32_t x : list) {
                        pool.emplace_back(idx.dist_sq(idx.center(nb), idx.center(x)), x);
                    }
                    std::sort(pool.begin(), pool.end());
                    list = idx.select_neighbors(pool, cap);
                }
            }
        }
        if (node_level > idx.top_level_) {
            idx.top_level_ = node_level;
            idx.entry_ = node;
        }
    }

    idx.repair();
    return idx;
}

void CenterIndex::search_layer(const float* q, uint32_t entry, uint32_t ef, uint32_t level,
                               std::vector<std::pair<float, uint32_t>>& out) const {
    if (t_visited.size() < m_) t_visited.assign(m_, 0);
    std::fill(t_visited.begin(), t_visited.begin() + m_, 0);

    std::priority_queue<std::pair<float, uint32_t>, std::vector<std::pair<float, uint32_t>>,
                        NearFirst>
        frontier;
    std::priority_queue<std::pair<float, uint32_t>, std::vector<std::pair<float, uint32_t>>,
                        FarFirst>
        best;

    float d0 = dist_sq_to(entry, q);
    frontier.emplace(d0, entry);
    best.emplace(d0, entry);
    t_visited[entry] = 1;

    while (!frontier.empty()) {
        auto [dist, node] = frontier.top();
        if (dist > best.top().first && best.size() >= ef) break;
        frontier.pop();
        for (uint32_t nb : adjacency_[level][node]) {
            if (t_visited[nb]) continue;
            t_visited[nb] = 1;
            float d = dist_sq_to(nb, q);
            if (best.size() < ef || d < best.top().first ||
                (d == best.top().first && nb < best.top().second)) {
                frontier.emplace(d, nb);
                best.emplace(d, nb);
                if (best.size() > ef) best.pop();
            }
        }
    }

    out.resize(best.size());
    for (size_t i = best.size(); i-- > 0;) {
        out[i] = best.top();
        best.pop();
    }
}

std::vector<uint32_t> CenterIndex::select_neighbors(
    const std::vector<std::pair<float, uint32_t>>& candidates, uint32_t max_degree) const {
    // Keep a candidate only if it is closer to q than to every neighbor kept
    // so far; falls back to closest-first when that starves the list.
    std::vector<uint32_t> selected;
    selected.reserve(max_degree);
    for (const auto& [d_q, cand] : candidates) {
        if (selected.size() >= max_degree) break;
        bool ok = true;
        for (uint32_t s : selected) {
            float d_cs = dist_sq(center(cand), center(s));
            if (d_cs < d_q) {
                ok = false;
                break;
            }
        }
        if (ok) selected.push_back(cand);
    }
    if (selected.size() < max_degree) {
        for (const auto& [d_q, cand] : candidates) {
            if (selected.size() >= max_degree) break;
            if (std::find(selected.begin(), selected.end(), cand) == selected.end()) {
                selected.push_back(cand);
            }
        }
    }
    return selected;
}

void CenterIndex::repair() {
    // Symmetrize within each layer, enforce degree caps, then reconnect
    // layer 0 into a single component.
    for (uint32_t lv = 0; lv < adjacency_.size(); ++lv) {
        auto& layer = adjacency_[lv];
        for (uint32_t u = 0; u < m_; ++u) {
            for (uint32_t v : layer[u]) {
                auto& back = layer[v];
                if (std::find(back.begin(), back.end(), u) == back.end()) back.push_back(u);
            }
        }
        uint32_t cap = degree_cap(lv);
        for (uint32_t u = 0; u < m_; ++u) {
            auto& list = layer[u];
            std::sort(list.begin(), list.end());
            list.erase(std::unique(list.begin(), list.end()), list.end());
            while (list.size() > cap) {
                // drop the farthest neighbor, mutually
                uint32_t worst = list[0];
                float worst_d = -1.f;
                for (uint32_t v : list) {
                    float d = dist_sq(center(u), center(v));
                    if (d > worst_d || (d == worst_d && v > worst)) {
                        worst_d = d;
                        worst = v;
                    }
                }
                list.erase(std::remove(list.begin(), list.end(), worst), list.end());
                auto& other = layer[worst];
                other.erase(std::remove(other.begin(), other.end(), u), other.end());
            }
        }
    }

    // connectivity on layer 0
    auto& base = adjacency_[0];
    std::vector<uint8_t> reached(m_, 0);
    for (uint32_t round = 0; round < m_; ++round) {
        std::fill(reached.begin(), reached.end(), 0);
        std::vector<uint32_t> stack = {entry_};
        reached[entry_] = 1;
        uint32_t n_reached = 1;
        while (!stack.empty()) {
            uint32_t u = stack.back();
            stack.pop_back();
            for (uint32_t v : base[u]) {
                if (!reached[v]) {
                    reached[v] = 1;
                    n_reached++;
                    stack.push_back(v);
                }
            }
        }
        if (n_reached == m_) return;

        // closest (reached, unreached) pair gets a bridge edge
        float best_d = std::numeric_limits<float>::max();
        uint32_t best_u = 0, best_v = 0;
        for (uint32_t v = 0; v < m_; ++v) {
            if (reached[v]) continue;
            for (uint32_t u = 0; u < m_; ++u) {
                if (!reached[u]) continue;
                float d = dist_sq(center(u), center(v));
                if (d < best_d || (d == best_d && (u < best_u || (u == best_u && v < best_v)))) {
                    best_d = d;
                    best_u = u;
                    best_v = v;
                }
            }
        }
        base[best_u].push_back(best_v);
        base[best_v].push_back(best_u);
        VJ_DEBUG("layer-0 repair: bridged %u <-> %u", best_u, best_v);
    }
}

std::vector<CenterIndex::Result> CenterIndex::search(const float* query, uint32_t k,
                                                     uint32_t ef) const {
    if (k < 1) raise(ErrorCode::BadConfig, "k must be >= 1");
    ef = std::max(ef, k);
    uint32_t ep = entry_;
    std::vector<std::pair<float, uint32_t>> scratch;
    for (uint32_t lc = top_level_; lc > 0; --lc) {
        search_layer(query, ep, 1, lc, scratch);
        ep = scratch.front().second;
    }
    search_layer(query, ep, std::min(ef, m_), 0, scratch);

    size_t n = std::min<size_t>(k, scratch.size());
    std::vector<Result> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = {scratch[i].second, std::sqrt(scratch[i].first)};
    }
    return out;
}

uint64_t CenterIndex::memory_bytes() const {
    uint64_t b = centers_.size() * sizeof(float) + levels_.size() * sizeof(uint32_t);
    for (const auto& layer : adjacency_) {
        for (const auto& list : layer) b += list.size() * sizeof(uint32_t) + sizeof(list);
    }
    return b;
}

// --- serialization ----------------------------------------------------------

static constexpr uint32_t kCidxMagic = 0x58444a56;  // "VJDX"
static constexpr uint32_t kCidxVersion = 1;

void CenterIndex::save(const std::string& path) const {
    FileWriter w(path);
    uint32_t head[8] = {kCidxMagic, kCidxVersion,        m_,    dim_,
                        params_.graph_degree, params_.ef_construction, top_level_, entry_};
    w.append(head, sizeof(head));
    w.append(&params_.seed, 8);
    w.append(centers_.data(), centers_.size() * sizeof(float));
    w.append(levels_.data(), levels_.size() * sizeof(uint32_t));
    for (const auto& layer : adjacency_) {
        for (const auto& list : layer) {
            uint32_t n = static_cast<uint32_t>(list.size());
            w.append(&n, 4);
            w.append(list.data(), n * sizeof(uint32_t));
        }
    }
    w.close();
}

CenterIndex CenterIndex::load(const std::string& path) {
    FileReader r(path, false);
    uint64_t off = 0;
    auto take = [&](void* dst, uint64_t n) {
        r.pread_exact(dst, n, off);
        off += n;
    };
    uint32_t head[8];
    take(head, sizeof(head));
    if (head[0] != kCidxMagic || head[1] != kCidxVersion) {
        raise(ErrorCode::IoFailure, path + " is not a center index file (bad magic/version)");
    }
    CenterIndex idx;
    idx.m_ = head[2];
    idx.dim_ = head[3];
    idx.params_.graph_degree = head[4];
    idx.params_.ef_construction = head[5];
    idx.top_level_ = head[6];
    idx.entry_ = head[7];
    take(&idx.params_.seed, 8);
    idx.centers_.resize(size_t(idx.m_) * idx.dim_);
    take(idx.centers_.data(), idx.centers_.size() * sizeof(float));
    idx.levels_.resize(idx.m_);
    take(idx.levels_.data(), idx.levels_.size() * sizeof(uint32_t));
    idx.adjacency_.assign(idx.top_level_ + 1, std::vector<std::vector<uint32_t>>(idx.m_));
    for (auto& layer : idx.adjacency_) {
        for (auto& list : layer) {
            uint32_t n;
            take(&n, 4);
            list.resize(n);
            take(list.data(), n * sizeof(uint32_t));
        }
    }
    return idx;
}

}  // namespace vecjoin
