#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "test_helpers.hpp"
#include "vecjoin/orchestrator.hpp"

using namespace vecjoin;

TEST_SUITE_BEGIN("orchestrator");

namespace {

BucketGraph make_graph(uint32_t m, std::vector<std::pair<uint32_t, uint32_t>> edges) {
    return BucketGraph::from_edges(m, std::move(edges));
}

BucketGraph random_graph(uint32_t m, double edge_prob, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t i = 0; i < m; ++i) {
        for (uint32_t j = i + 1; j < m; ++j) {
            if (u(rng) < edge_prob) edges.emplace_back(i, j);
        }
    }
    return make_graph(m, std::move(edges));
}

// Naive window-score recomputation from the definition:
// k_v = sum over the previous w placed nodes of |N(P[j]) intersect N(v)|.
uint64_t naive_score(const BucketGraph& g, const std::vector<uint32_t>& placed_so_far,
                     uint32_t w, uint32_t v) {
    size_t i = placed_so_far.size();
    size_t lo = i > w ? i - w : 0;
    uint64_t total = 0;
    auto nv = g.neighbors(v);
    for (size_t j = lo; j < i; ++j) {
        auto nu = g.neighbors(placed_so_far[j]);
        std::vector<uint32_t> inter;
        std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(),
                              std::back_inserter(inter));
        total += inter.size();
    }
    return total;
}

// Full naive reorder: recompute-and-argmax at every step. O(w d n^2).
std::vector<std::pair<uint32_t, uint64_t>> naive_reorder(const BucketGraph& g, uint32_t capacity) {
    const uint32_t m = g.num_nodes();
    double d_avg = double(g.num_edges()) / double(std::max(1u, m));
    uint32_t w = d_avg > 0 ? std::max<uint32_t>(1, uint32_t(double(capacity) / d_avg)) : 1;

    uint32_t start = 0;
    size_t best = g.out_degree(0);
    for (uint32_t v = 1; v < m; ++v) {
        if (g.out_degree(v) > best) {
            best = g.out_degree(v);
            start = v;
        }
    }
    std::vector<uint8_t> placed(m, 0);
    std::vector<uint32_t> order = {start};
    std::vector<std::pair<uint32_t, uint64_t>> trace = {{start, 0}};
    placed[start] = 1;
    for (uint32_t i = 1; i < m; ++i) {
        uint32_t pick = UINT32_MAX;
        uint64_t pick_score = 0;
        for (uint32_t v = 0; v < m; ++v) {
            if (placed[v]) continue;
            uint64_t s = naive_score(g, order, w, v);
            if (pick == UINT32_MAX || s > pick_score) {
                pick = v;
                pick_score = s;
            }
        }
        order.push_back(pick);
        placed[pick] = 1;
        trace.push_back({pick, pick_score});
    }
    return trace;
}

// Exhaustive optimal eviction for a fixed access sequence: DP over
// (position, resident set) minimizing misses. Small alphabets only.
uint64_t optimal_misses(const std::vector<uint32_t>& seq, uint32_t m, uint32_t capacity) {
    REQUIRE(m <= 16);
    const uint32_t nmask = 1u << m;
    std::vector<uint64_t> cur(nmask, UINT64_MAX);
    cur[0] = 0;
    for (uint32_t b : seq) {
        std::vector<uint64_t> next(nmask, UINT64_MAX);
        for (uint32_t mask = 0; mask < nmask; ++mask) {
            if (cur[mask] == UINT64_MAX) continue;
            if (mask >> b & 1) {
                next[mask] = std::min(next[mask], cur[mask]);  // hit
                continue;
            }
            uint64_t cost = cur[mask] + 1;
            if (uint32_t(__builtin_popcount(mask)) < capacity) {
                uint32_t nm = mask | (1u << b);
                next[nm] = std::min(next[nm], cost);
            } else {
                for (uint32_t u = 0; u < m; ++u) {
                    if (!(mask >> u & 1)) continue;
                    uint32_t nm = (mask & ~(1u << u)) | (1u << b);
                    next[nm] = std::min(next[nm], cost);
                }
            }
        }
        cur = std::move(next);
    }
    return *std::min_element(cur.begin(), cur.end());
}

}  // namespace

TEST_CASE("reorder of an edgeless graph is the identity") {
    auto g = make_graph(6, {});
    auto perm = reorder(g, 4);
    for (uint32_t i = 0; i < 6; ++i) CHECK(perm[i] == i);
}

TEST_CASE("reorder starts at the max out-degree node") {
    // star with center 3: edges (3,4), (3,5), (3,6) plus a stray edge
    auto g = make_graph(7, {{3, 4}, {3, 5}, {3, 6}, {0, 1}});
    auto perm = reorder(g, 4);
    CHECK(perm[0] == 3);
    // bijection
    std::set<uint32_t> ids(perm.begin(), perm.end());
    CHECK(ids.size() == 7);
}

TEST_CASE("reorder is deterministic") {
    auto g = random_graph(80, 0.1, 17);
    auto a = reorder(g, 8);
    auto b = reorder(g, 8);
    CHECK(a == b);
}

TEST_CASE("incremental scores equal naive recomputation at every step") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        auto g = random_graph(200, 0.05, seed);
        for (uint32_t capacity : {4u, 16u, 64u}) {
            std::vector<std::pair<uint32_t, uint64_t>> trace;
            reorder(g, capacity, &trace);
            auto expect = naive_reorder(g, capacity);
            REQUIRE(trace.size() == expect.size());
            for (size_t i = 0; i < trace.size(); ++i) {
                CHECK(trace[i].first == expect[i].first);
                CHECK(trace[i].second == expect[i].second);
            }
        }
    }
}

TEST_CASE("make_schedule puts each node's self pair before its out-edges") {
    auto g = make_graph(2, {{0, 1}});
    auto s = make_schedule(g, {0, 1});
    REQUIRE(s.tasks.size() == 3);  // |E| + M with self_check
    CHECK(s.tasks[0] == std::pair<uint32_t, uint32_t>{0, 0});
    CHECK(s.tasks[1] == std::pair<uint32_t, uint32_t>{0, 1});
    CHECK(s.tasks[2] == std::pair<uint32_t, uint32_t>{1, 1});
    CHECK(s.access_seq == std::vector<uint32_t>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("make_schedule orders out-edges by neighbor position and covers all edges") {
    auto g = make_graph(5, {{0, 2}, {0, 3}, {0, 4}, {1, 2}, {2, 3}});
    std::vector<uint32_t> perm = {4, 0, 3, 2, 1};  // position of 4 is 0, etc.
    auto s = make_schedule(g, perm);
    CHECK(s.tasks.size() == 5 + 5);
    // node 4 (position 0) has no out-edges, so its only task is (4,4); node 0
    // follows at position 1 with out-edges ordered by neighbor position:
    // 4 (pos 0), 3 (pos 2), 2 (pos 3)
    CHECK(s.tasks[0] == std::pair<uint32_t, uint32_t>{4, 4});
    std::vector<std::pair<uint32_t, uint32_t>> node0(s.tasks.begin() + 1, s.tasks.begin() + 5);
    CHECK(node0[0] == std::pair<uint32_t, uint32_t>{0, 0});
    CHECK(node0[1] == std::pair<uint32_t, uint32_t>{0, 4});
    CHECK(node0[2] == std::pair<uint32_t, uint32_t>{0, 3});
    CHECK(node0[3] == std::pair<uint32_t, uint32_t>{0, 2});

    // multiset of non-self tasks equals the edge set
    std::set<std::pair<uint32_t, uint32_t>> edges;
    for (const auto& t : s.tasks) {
        if (t.first != t.second) CHECK(edges.insert(t).second);
    }
    CHECK(edges.size() == g.num_edges());
    CHECK(s.access_seq.size() == 2 * s.tasks.size());

    CHECK_THROWS_AS(make_schedule(g, std::vector<uint32_t>{0, 0, 1, 2, 3}), Error);
}

TEST_CASE("belady textbook example") {
    std::vector<uint32_t> seq = {1, 2, 3, 1, 2, 3};
    auto plan = belady_plan(seq, 4, 2);
    CHECK(plan.misses == 4);
    CHECK(simulate_policy(seq, 2, CachePolicy::LRU).misses == 6);
    CHECK(simulate_policy(seq, 2, CachePolicy::Belady).misses == 4);
}

TEST_CASE("belady degenerate cases") {
    SUBCASE("capacity above distinct count leaves only compulsory misses") {
        std::vector<uint32_t> seq = {0, 3, 1, 0, 3, 2, 1, 0};
        auto plan = belady_plan(seq, 4, 8);
        CHECK(plan.misses == 4);
    }
    SUBCASE("capacity below 2 is rejected") {
        try {
            belady_plan({0, 1}, 2, 1);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::CapacityTooSmall);
        }
    }
    SUBCASE("empty sequence") {
        auto r = simulate_policy({}, 3, CachePolicy::LRU);
        CHECK(r.misses == 0);
        CHECK(r.hit_rate == 1.0);
    }
    SUBCASE("constant sequence") {
        std::vector<uint32_t> seq(10, 5);
        auto r = simulate_policy(seq, 1, CachePolicy::FIFO);
        CHECK(r.misses == 1);
        CHECK(r.hit_rate == doctest::Approx(0.9));
    }
}

TEST_CASE("belady plan replay never exceeds capacity and tasks find operands resident") {
    auto g = random_graph(40, 0.15, 7);
    auto plan = orchestrate(g, 5);
    std::set<uint32_t> resident;
    uint64_t misses = 0;
    for (size_t i = 0; i < plan.eviction.steps.size(); ++i) {
        const auto& st = plan.eviction.steps[i];
        CHECK(st.bucket == plan.schedule.access_seq[i]);
        if (st.hit) {
            CHECK(resident.count(st.bucket) == 1);
        } else {
            misses++;
            if (st.evict != kNoEvict) {
                CHECK(resident.erase(st.evict) == 1);
            }
            CHECK(resident.insert(st.bucket).second);
            CHECK(resident.size() <= plan.capacity);
        }
        // at the end of each task (odd index) both operands are resident
        if (i % 2 == 1) {
            CHECK(resident.count(plan.schedule.access_seq[i - 1]) == 1);
            CHECK(resident.count(plan.schedule.access_seq[i]) == 1);
        }
    }
    CHECK(misses == plan.eviction.misses);
}

TEST_CASE("belady equals the exhaustive optimum on random small sequences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 300; ++trial) {
        uint32_t m = 2 + uint32_t(rng() % 5);           // up to 6 buckets
        uint32_t len = 1 + uint32_t(rng() % 12);        // up to 12 accesses
        uint32_t capacity = 2 + uint32_t(rng() % 2);    // 2..3
        std::vector<uint32_t> seq(len);
        for (auto& s : seq) s = uint32_t(rng() % m);
        auto plan = belady_plan(seq, m, capacity);
        CHECK(plan.misses == optimal_misses(seq, m, capacity));
    }
}

TEST_CASE("belady is never worse than LRU or FIFO on random sequences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        uint32_t m = 2 + uint32_t(rng() % 15);
        uint32_t len = 20 + uint32_t(rng() % 200);
        uint32_t capacity = 2 + uint32_t(rng() % 7);  // 2..8
        std::vector<uint32_t> seq(len);
        for (auto& s : seq) s = uint32_t(rng() % m);
        auto b = simulate_policy(seq, capacity, CachePolicy::Belady);
        auto l = simulate_policy(seq, capacity, CachePolicy::LRU);
        auto f = simulate_policy(seq, capacity, CachePolicy::FIFO);
        CHECK(b.misses <= l.misses);
        CHECK(b.misses <= f.misses);
    }
}

TEST_CASE("worst-case miss bound: misses <= M + |E| for any schedule, C >= 2") {
    for (uint64_t seed : {5ull, 6ull, 7ull, 8ull}) {
        auto g = random_graph(30, 0.2, seed);
        for (uint32_t capacity : {2u, 3u, 6u}) {
            auto plan = orchestrate(g, capacity);
            CHECK(plan.eviction.misses <= uint64_t(g.num_nodes()) + g.num_edges());
        }
    }
}

TEST_CASE("mecc oracle on hand-checkable graphs") {
    SUBCASE("path 0-1-2 with capacity 2 loads each node once") {
        auto g = make_graph(3, {{0, 1}, {1, 2}});
        CHECK(mecc_optimal(g, 2) == 3);
    }
    SUBCASE("complete graph K4 with capacity 2 needs 7 loads") {
        auto g = make_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
        CHECK(mecc_optimal(g, 2) == 7);
    }
    SUBCASE("K4 with capacity 4 needs only 4 loads") {
        auto g = make_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
        CHECK(mecc_optimal(g, 4) == 4);
    }
    SUBCASE("connected graphs need at least one load per node") {
        for (uint64_t seed : {21ull, 22ull, 23ull}) {
            std::mt19937_64 rng(seed);
            // random connected graph on 6 nodes: spanning path + extras
            std::vector<std::pair<uint32_t, uint32_t>> edges;
            for (uint32_t i = 0; i + 1 < 6; ++i) edges.emplace_back(i, i + 1);
            for (int extra = 0; extra < 3; ++extra) {
                uint32_t a = uint32_t(rng() % 6), b = uint32_t(rng() % 6);
                if (a != b) edges.emplace_back(std::min(a, b), std::max(a, b));
            }
            auto g = make_graph(6, std::move(edges));
            CHECK(mecc_optimal(g, 3) >= 6);
        }
    }
    SUBCASE("too many nodes is an error") {
        auto g = make_graph(9, {{0, 1}});
        try {
            mecc_optimal(g, 2, 8);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::TooLarge);
        }
    }
}

TEST_CASE("plan file round trip") {
    vjtest::TempDir dir;
    auto g = random_graph(25, 0.2, 12);
    auto plan = orchestrate(g, 4);
    plan.save(dir.file("p.plan"));
    auto loaded = Plan::load(dir.file("p.plan"));
    CHECK(loaded.num_buckets == plan.num_buckets);
    CHECK(loaded.capacity == plan.capacity);
    CHECK(loaded.graph_hash == plan.graph_hash);
    CHECK(loaded.store_hash == plan.store_hash);
    CHECK(loaded.schedule.perm == plan.schedule.perm);
    CHECK(loaded.schedule.tasks == plan.schedule.tasks);
    CHECK(loaded.schedule.access_seq == plan.schedule.access_seq);
    CHECK(loaded.eviction.misses == plan.eviction.misses);
    REQUIRE(loaded.eviction.steps.size() == plan.eviction.steps.size());
    for (size_t i = 0; i < plan.eviction.steps.size(); ++i) {
        CHECK(loaded.eviction.steps[i].bucket == plan.eviction.steps[i].bucket);
        CHECK(loaded.eviction.steps[i].hit == plan.eviction.steps[i].hit);
        CHECK(loaded.eviction.steps[i].evict == plan.eviction.steps[i].evict);
    }
}

TEST_SUITE_END();
