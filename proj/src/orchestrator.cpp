#include "vecjoin/orchestrator.hpp"

#include <algorithm>
#include <deque>
#include <list>
#include <queue>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "vecjoin/io.hpp"

namespace vecjoin {

namespace {

// higher score wins, ties to the lower id
struct ScoreEntry {
    uint64_t score;
    uint32_t id;
    bool operator<(const ScoreEntry& o) const {
        if (score != o.score) return score < o.score;
        return id > o.id;
    }
};

}  // namespace

std::vector<uint32_t> reorder(const BucketGraph& graph, uint32_t capacity,
                              std::vector<std::pair<uint32_t, uint64_t>>* trace) {
    const uint32_t m = graph.num_nodes();
    if (m == 0) raise(ErrorCode::BadConfig, "cannot reorder an empty graph");

    const double d_avg = double(graph.num_edges()) / double(std::max(1u, m));
    const uint32_t w =
        d_avg > 0 ? std::max<uint32_t>(1, uint32_t(double(capacity) / d_avg)) : 1;

    // reverse index: sources[x] = all v with x in N(v)
    std::vector<std::vector<uint32_t>> sources(m);
    for (uint32_t v = 0; v < m; ++v) {
        for (auto it = graph.neighbors_begin(v); it != graph.neighbors_end(v); ++it) {
            sources[*it].push_back(v);
        }
    }

    std::vector<uint64_t> score(m, 0);
    std::vector<uint8_t> placed(m, 0);
    std::priority_queue<ScoreEntry> pq;

    // a window slide touches every co-source of the moved node's out-neighbors
    auto bump = [&](uint32_t moved, int64_t delta) {
        for (auto it = graph.neighbors_begin(moved); it != graph.neighbors_end(moved); ++it) {
            for (uint32_t v : sources[*it]) {
                if (placed[v]) continue;
                score[v] = uint64_t(int64_t(score[v]) + delta);
                if (delta > 0) pq.push({score[v], v});
            }
        }
    };

    // start node: largest out-degree, ties to the lowest id
    uint32_t start = 0;
    size_t best_deg = graph.out_degree(0);
    for (uint32_t v = 1; v < m; ++v) {
        if (graph.out_degree(v) > best_deg) {
            best_deg = graph.out_degree(v);
            start = v;
        }
    }

    std::vector<uint32_t> perm;
    perm.reserve(m);
    perm.push_back(start);
    placed[start] = 1;
    if (trace) trace->push_back({start, 0});

    uint32_t next_min = 0;  // lowest unplaced id, for zero-score ties
    for (uint32_t i = 1; i < m; ++i) {
        bump(perm[i - 1], +1);                      // P[i-1] enters the window
        if (i >= w + 1) bump(perm[i - 1 - w], -1);  // P[i-1-w] leaves it

        while (next_min < m && placed[next_min]) next_min++;

        uint32_t pick = next_min;  // all-zero scores tie-break to the lowest id
        uint64_t pick_score = 0;
        while (!pq.empty()) {
            ScoreEntry top = pq.top();
            if (placed[top.id]) {
                pq.pop();
                continue;
            }
            if (top.score != score[top.id]) {  // stale after a window exit
                pq.pop();
                pq.push({score[top.id], top.id});
                continue;
            }
            if (top.score > 0) {
                pick = top.id;
                pick_score = top.score;
            }
            break;  // top of the heap is the true maximum
        }
        perm.push_back(pick);
        placed[pick] = 1;
        if (trace) trace->push_back({pick, pick_score});
    }
    return perm;
}

TaskSchedule make_schedule(const BucketGraph& graph, const std::vector<uint32_t>& perm) {
    const uint32_t m = graph.num_nodes();
    if (perm.size() != m) raise(ErrorCode::BadConfig, "perm size does not match the graph");
    std::vector<uint32_t> position(m, UINT32_MAX);
    for (uint32_t p = 0; p < m; ++p) {
        if (perm[p] >= m || position[perm[p]] != UINT32_MAX) {
            raise(ErrorCode::BadConfig, "perm is not a bijection on [0, M)");
        }
        position[perm[p]] = p;
    }

    TaskSchedule s;
    s.perm = perm;
    s.tasks.reserve(graph.num_edges() + (graph.self_check() ? m : 0));
    for (uint32_t p = 0; p < m; ++p) {
        uint32_t v = perm[p];
        if (graph.self_check()) s.tasks.emplace_back(v, v);
        std::vector<uint32_t> nb = graph.neighbors(v);
        std::sort(nb.begin(), nb.end(),
                  [&](uint32_t a, uint32_t b) { return position[a] < position[b]; });
        for (uint32_t u : nb) s.tasks.emplace_back(v, u);
    }
    s.access_seq.reserve(2 * s.tasks.size());
    for (const auto& [a, b] : s.tasks) {
        s.access_seq.push_back(a);
        s.access_seq.push_back(b);
    }
    return s;
}

namespace {

// Belady replay shared by the planner (C >= 2) and the simulator (C >= 1).
// With `paired` set, accesses are treated as task operand pairs (2t, 2t+1)
// and the first operand is never evicted while its task's second operand
// loads; a task must find both buckets resident.
EvictionPlan belady_replay(const std::vector<uint32_t>& seq, uint32_t num_buckets,
                           uint32_t capacity, bool paired) {
    constexpr uint64_t kNever = UINT64_MAX;
    // pass 1: per-bucket access positions
    std::vector<std::vector<uint32_t>> positions(num_buckets);
    for (uint32_t i = 0; i < seq.size(); ++i) {
        if (seq[i] >= num_buckets) raise(ErrorCode::BadConfig, "access to unknown bucket id");
        positions[seq[i]].push_back(i);
    }

    // resident buckets keyed by next access; on ties (only possible for
    // never-again buckets) the lowest id goes first
    struct FarthestLast {
        bool operator()(const std::pair<uint64_t, uint32_t>& a,
                        const std::pair<uint64_t, uint32_t>& b) const {
            if (a.first != b.first) return a.first < b.first;
            return a.second > b.second;
        }
    };
    std::set<std::pair<uint64_t, uint32_t>, FarthestLast> resident;
    std::vector<uint64_t> key_of(num_buckets, 0);
    std::vector<uint8_t> in_cache(num_buckets, 0);
    std::vector<uint32_t> cursor(num_buckets, 0);  // accesses of b seen so far

    EvictionPlan plan;
    plan.capacity = capacity;
    plan.steps.reserve(seq.size());

    // pass 2: replay
    for (uint32_t i = 0; i < seq.size(); ++i) {
        uint32_t b = seq[i];
        uint32_t c = cursor[b]++;
        uint64_t next = c + 1 < positions[b].size() ? positions[b][c + 1] : kNever;
        PlanStep step{b, 0, kNoEvict};
        if (in_cache[b]) {
            step.hit = 1;
            resident.erase({key_of[b], b});
            resident.emplace(next, b);
            key_of[b] = next;
        } else {
            plan.misses++;
            if (resident.size() == capacity) {
                auto victim = std::prev(resident.end());
                if (paired && i % 2 == 1 && victim->second == seq[i - 1]) {
                    victim = std::prev(victim);  // keep the task's first operand
                }
                step.evict = victim->second;
                in_cache[victim->second] = 0;
                resident.erase(victim);
            }
            resident.emplace(next, b);
            key_of[b] = next;
            in_cache[b] = 1;
        }
        plan.steps.push_back(step);
    }
    return plan;
}

}  // namespace

EvictionPlan belady_plan(const std::vector<uint32_t>& access_seq, uint32_t num_buckets,
                         uint32_t capacity) {
    if (capacity < 2) {
        raise(ErrorCode::CapacityTooSmall, "a task needs two resident buckets; C >= 2 required");
    }
    return belady_replay(access_seq, num_buckets, capacity, false);
}

EvictionPlan belady_plan_paired(const std::vector<uint32_t>& access_seq, uint32_t num_buckets,
                                uint32_t capacity) {
    if (capacity < 2) {
        raise(ErrorCode::CapacityTooSmall, "a task needs two resident buckets; C >= 2 required");
    }
    return belady_replay(access_seq, num_buckets, capacity, true);
}

SimResult simulate_policy(const std::vector<uint32_t>& access_seq, uint32_t capacity,
                          CachePolicy policy) {
    if (capacity < 1) raise(ErrorCode::CapacityTooSmall, "capacity must be >= 1");
    SimResult res;
    if (access_seq.empty()) return res;  // 0 misses, hit rate 1.0 by convention

    uint64_t misses = 0;
    if (policy == CachePolicy::Belady) {
        uint32_t m = *std::max_element(access_seq.begin(), access_seq.end()) + 1;
        misses = belady_replay(access_seq, m, capacity, false).misses;
    } else if (policy == CachePolicy::LRU) {
        std::list<uint32_t> order;  // front = most recent
        std::unordered_map<uint32_t, std::list<uint32_t>::iterator> where;
        for (uint32_t b : access_seq) {
            auto it = where.find(b);
            if (it != where.end()) {
                order.erase(it->second);
            } else {
                misses++;
                if (where.size() == capacity) {
                    where.erase(order.back());
                    order.pop_back();
                }
            }
            order.push_front(b);
            where[b] = order.begin();
        }
    } else {  // FIFO
        std::deque<uint32_t> order;
        std::unordered_set<uint32_t> resident;
        for (uint32_t b : access_seq) {
            if (resident.count(b)) continue;
            misses++;
            if (resident.size() == capacity) {
                resident.erase(order.front());
                order.pop_front();
            }
            order.push_back(b);
            resident.insert(b);
        }
    }
    res.misses = misses;
    res.hit_rate = double(access_seq.size() - misses) / double(access_seq.size());
    return res;
}

uint64_t mecc_optimal(const BucketGraph& graph, uint32_t capacity, uint32_t max_nodes) {
    const uint32_t m = graph.num_nodes();
    if (m > max_nodes || m > 16) {
        raise(ErrorCode::TooLarge, "mecc_optimal is an exhaustive oracle for tiny graphs only");
    }
    // collect undirected edges as bit positions
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t i = 0; i < m; ++i) {
        for (auto it = graph.neighbors_begin(i); it != graph.neighbors_end(i); ++it) {
            edges.emplace_back(i, *it);
        }
    }
    if (edges.empty()) return 0;
    if (capacity < 2) {
        raise(ErrorCode::CapacityTooSmall, "no edge can be covered with capacity < 2");
    }
    if (edges.size() > 32) raise(ErrorCode::TooLarge, "too many edges for the state encoding");

    // per node: bitmask of incident edges and the other endpoint per edge
    std::vector<uint32_t> incident(m, 0);
    for (uint32_t e = 0; e < edges.size(); ++e) {
        incident[edges[e].first] |= 1u << e;
        incident[edges[e].second] |= 1u << e;
    }
    auto covers = [&](uint32_t node, uint32_t resident_mask) {
        uint32_t got = 0;
        for (uint32_t e = 0; e < edges.size(); ++e) {
            uint32_t a = edges[e].first, b = edges[e].second;
            uint32_t other = a == node ? b : a;
            if ((incident[node] >> e & 1) && (resident_mask >> other & 1)) got |= 1u << e;
        }
        return got;
    };

    const uint32_t full = edges.size() == 32 ? 0xffffffffu : (1u << edges.size()) - 1;
    // BFS over (resident nodes, covered edges); depth = loads
    auto key = [&](uint32_t resident, uint32_t covered) {
        return (uint64_t(resident) << 32) | covered;
    };
    std::unordered_set<uint64_t> seen;
    std::vector<std::pair<uint32_t, uint32_t>> frontier = {{0u, 0u}};
    seen.insert(key(0, 0));
    for (uint64_t loads = 1;; ++loads) {
        std::vector<std::pair<uint32_t, uint32_t>> next;
        for (auto [resident, covered] : frontier) {
            for (uint32_t v = 0; v < m; ++v) {
                if (resident >> v & 1) continue;
                std::vector<uint32_t> options;
                if (uint32_t(__builtin_popcount(resident)) < capacity) {
                    options.push_back(resident | (1u << v));
                } else {
                    for (uint32_t u = 0; u < m; ++u) {
                        if (resident >> u & 1) options.push_back((resident & ~(1u << u)) | (1u << v));
                    }
                }
                for (uint32_t nr : options) {
                    uint32_t nc = covered | covers(v, nr & ~(1u << v));
                    if (nc == full) return loads;
                    if (seen.insert(key(nr, nc)).second) next.emplace_back(nr, nc);
                }
            }
        }
        if (next.empty()) {
            raise(ErrorCode::TooLarge, "mecc search exhausted without covering all edges");
        }
        frontier = std::move(next);
    }
}

Plan orchestrate(const BucketGraph& graph, uint32_t capacity) {
    Plan plan;
    plan.num_buckets = graph.num_nodes();
    plan.capacity = capacity;
    plan.graph_hash = graph.graph_hash();
    plan.store_hash = graph.store_hash();
    auto perm = reorder(graph, capacity);
    plan.schedule = make_schedule(graph, perm);
    plan.schedule.window = [&] {
        double d_avg = double(graph.num_edges()) / double(std::max(1u, graph.num_nodes()));
        return d_avg > 0 ? std::max<uint32_t>(1, uint32_t(double(capacity) / d_avg)) : 1u;
    }();
    plan.eviction = belady_plan_paired(plan.schedule.access_seq, graph.num_nodes(), capacity);
    return plan;
}

static constexpr uint32_t kPlanMagic = 0x4c504a56;  // "VJPL"
static constexpr uint32_t kPlanVersion = 1;

void Plan::save(const std::string& path) const {
    FileWriter w(path);
    uint32_t head[4] = {kPlanMagic, kPlanVersion, num_buckets, capacity};
    w.append(head, sizeof(head));
    w.append(&graph_hash, 8);
    w.append(&store_hash, 8);
    uint64_t counts[3] = {schedule.perm.size(), schedule.tasks.size(), eviction.steps.size()};
    w.append(counts, sizeof(counts));
    uint32_t window = schedule.window;
    w.append(&window, 4);
    w.append(&eviction.misses, 8);
    w.append(schedule.perm.data(), schedule.perm.size() * 4);
    for (const auto& [a, b] : schedule.tasks) {
        uint32_t pair[2] = {a, b};
        w.append(pair, 8);
    }
    for (const auto& s : eviction.steps) {
        uint32_t rec[3] = {s.bucket, s.hit, s.evict};
        w.append(rec, 12);
    }
    w.close();
}

Plan Plan::load(const std::string& path) {
    FileReader r(path, false);
    uint64_t off = 0;
    auto take = [&](void* dst, uint64_t n) {
        r.pread_exact(dst, n, off);
        off += n;
    };
    uint32_t head[4];
    take(head, sizeof(head));
    if (head[0] != kPlanMagic || head[1] != kPlanVersion) {
        raise(ErrorCode::IoFailure, path + " is not a plan file (bad magic/version)");
    }
    Plan p;
    p.num_buckets = head[2];
    p.capacity = head[3];
    take(&p.graph_hash, 8);
    take(&p.store_hash, 8);
    uint64_t counts[3];
    take(counts, sizeof(counts));
    uint32_t window;
    take(&window, 4);
    p.schedule.window = window;
    take(&p.eviction.misses, 8);
    p.eviction.capacity = p.capacity;
    p.schedule.perm.resize(counts[0]);
    take(p.schedule.perm.data(), counts[0] * 4);
    p.schedule.tasks.resize(counts[1]);
    for (auto& [a, b] : p.schedule.tasks) {
        uint32_t pair[2];
        take(pair, 8);
        a = pair[0];
        b = pair[1];
    }
    p.schedule.access_seq.reserve(counts[1] * 2);
    for (const auto& [a, b] : p.schedule.tasks) {
        p.schedule.access_seq.push_back(a);
        p.schedule.access_seq.push_back(b);
    }
    p.eviction.steps.resize(counts[2]);
    for (auto& s : p.eviction.steps) {
        uint32_t rec[3];
        take(rec, 12);
        s.bucket = rec[0];
        s.hit = uint8_t(rec[1]);
        s.evict = rec[2];
    }
    return p;
}

}  // namespace vecjoin
