#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_helpers.hpp"
#include "vecjoin/executor.hpp"

using namespace vecjoin;

TEST_SUITE_BEGIN("executor");

namespace {

BucketPayload make_payload(const std::vector<float>& rows, uint32_t dim, uint64_t first_id) {
    BucketPayload p;
    p.dim = dim;
    p.vectors = rows;
    size_t n = rows.size() / dim;
    for (size_t i = 0; i < n; ++i) p.ids.push_back(first_id + i);
    return p;
}

struct JoinFixture {
    vjtest::TempDir dir;
    DatasetHandle handle;
    BucketStore store;
    BucketGraph graph;
    Plan plan;
    double epsilon;

    JoinFixture(uint64_t n, uint32_t d, uint32_t clusters, uint32_t m, double eps,
                uint32_t capacity, uint64_t seed = 3)
        : epsilon(eps) {
        handle = gen_synthetic(n, d, clusters, 0.08f, seed, dir.file("d.fbin"));
        BucketizeParams params;
        params.num_buckets = m;
        params.seed = seed + 1;
        store = bucketize(handle, params, dir.file("s"));
        auto index = CenterIndex::load(dir.file("s") + ".cidx");
        graph = build_graph(store, index, eps, PruneBudget::make(0.95, d), 16);
        plan = orchestrate(graph, capacity);
    }

    // brute-force oracle over the raw dataset
    std::set<std::pair<uint64_t, uint64_t>> oracle() const {
        std::vector<uint64_t> all(handle.count);
        for (uint64_t i = 0; i < handle.count; ++i) all[i] = i;
        auto rows = read_rows(handle, all);
        std::set<std::pair<uint64_t, uint64_t>> out;
        for (uint64_t i = 0; i < handle.count; ++i) {
            for (uint64_t j = i + 1; j < handle.count; ++j) {
                double dsq = vjtest::l2sq_ref(rows.data() + i * handle.dim,
                                              rows.data() + j * handle.dim, handle.dim);
                if (dsq <= epsilon * epsilon) out.insert({i, j});
            }
        }
        return out;
    }
};

}  // namespace

TEST_CASE("verify_pair emits duplicate vectors at distance zero") {
    auto p = make_payload({1.f, 2.f, 1.f, 2.f}, 2, 10);
    std::vector<ResultPair> out;
    uint64_t dc = verify_pair(p, p, 0.5, true, out);
    CHECK(dc == 1);
    REQUIRE(out.size() == 1);
    CHECK(out[0].id_a == 10);
    CHECK(out[0].id_b == 11);
    CHECK(out[0].dist == 0.0f);
}

TEST_CASE("verify_pair cross product counts every comparison") {
    auto a = make_payload(vjtest::random_vectors(8, 4, 1, 0.f, 1.f), 4, 0);
    auto b = make_payload(vjtest::random_vectors(5, 4, 2, 50.f, 51.f), 4, 8);
    std::vector<ResultPair> out;
    uint64_t dc = verify_pair(a, b, 0.25, false, out);
    CHECK(dc == 40);
    CHECK(out.empty());
}

TEST_CASE("verify_pair equals a brute-force double loop on random buckets") {
    const uint32_t d = 12;
    auto a = make_payload(vjtest::random_vectors(200, d, 5), d, 0);
    auto b = make_payload(vjtest::random_vectors(200, d, 6), d, 200);
    const double eps = 0.55;
    std::vector<ResultPair> out;
    verify_pair(a, b, eps, false, out);

    std::set<std::pair<uint64_t, uint64_t>> got;
    for (const auto& p : out) {
        CHECK(p.id_a < p.id_b);
        CHECK(p.dist <= eps);
        CHECK(got.insert({p.id_a, p.id_b}).second);
    }
    std::set<std::pair<uint64_t, uint64_t>> want;
    for (size_t i = 0; i < 200; ++i) {
        for (size_t j = 0; j < 200; ++j) {
            if (vjtest::l2sq_ref(a.row(i), b.row(j), d) <= eps * eps) {
                want.insert({a.ids[i], b.ids[j]});
            }
        }
    }
    CHECK(got == want);

    // intra-bucket: unordered pairs once
    out.clear();
    uint64_t dc = verify_pair(a, a, eps, true, out);
    CHECK(dc == 200 * 199 / 2);
    got.clear();
    for (const auto& p : out) CHECK(got.insert({p.id_a, p.id_b}).second);
}

TEST_CASE("pair file round trip and record width") {
    vjtest::TempDir dir;
    std::vector<ResultPair> pairs;
    for (uint64_t i = 0; i < 1000; ++i) pairs.push_back({i, i + 1, float(i) * 0.5f});

    PairWriter w(dir.file("r.pairs"), 0.75, 5000);
    w.write(pairs);
    w.close();
    CHECK(file_size(dir.file("r.pairs")) == 24 + 20 * 1000);

    auto f = read_pairs(dir.file("r.pairs"));
    CHECK(f.epsilon == 0.75);
    CHECK(f.n == 5000);
    REQUIRE(f.pairs.size() == 1000);
    for (uint64_t i = 0; i < 1000; ++i) {
        CHECK(f.pairs[i].id_a == pairs[i].id_a);
        CHECK(f.pairs[i].id_b == pairs[i].id_b);
        CHECK(f.pairs[i].dist == pairs[i].dist);
    }

    PairWriter w0(dir.file("empty.pairs"), 0.1, 10);
    w0.close();
    CHECK(file_size(dir.file("empty.pairs")) == 24);
    CHECK(read_pairs(dir.file("empty.pairs")).pairs.empty());
}

TEST_CASE("single-bucket join reads one padded extent and finds intra pairs") {
    vjtest::TempDir dir;
    auto handle = gen_synthetic(500, 8, 1, 0.05f, 7, dir.file("d.fbin"));
    BucketizeParams params;
    params.num_buckets = 1;
    auto store = bucketize(handle, params, dir.file("s"));
    auto index = CenterIndex::load(dir.file("s") + ".cidx");
    const double eps = 0.3;
    auto graph = build_graph(store, index, eps, PruneBudget::make(1.0, 8), 1);
    auto plan = orchestrate(graph, 2);

    ExecParams ep;
    auto stats = run_join(store, plan, eps, dir.file("out.pairs"), ep);
    CHECK(stats.bytes_total == store.bucket(0).byte_length);
    CHECK(stats.cache_misses == 1);

    auto got = read_pairs(dir.file("out.pairs"));
    std::vector<uint64_t> all(500);
    for (uint64_t i = 0; i < 500; ++i) all[i] = i;
    auto rows = read_rows(handle, all);
    uint64_t want = 0;
    for (uint64_t i = 0; i < 500; ++i) {
        for (uint64_t j = i + 1; j < 500; ++j) {
            if (vjtest::l2sq_ref(rows.data() + i * 8, rows.data() + j * 8, 8) <= eps * eps) want++;
        }
    }
    CHECK(got.pairs.size() == want);
}

TEST_CASE("join results match the brute-force oracle at lambda near 1") {
    JoinFixture fx(3000, 8, 6, 10, 0.35, 4);
    ExecParams params;
    auto stats = run_join(fx.store, fx.plan, fx.epsilon, fx.dir.file("out.pairs"), params);
    auto got_file = read_pairs(fx.dir.file("out.pairs"));

    std::set<std::pair<uint64_t, uint64_t>> got;
    for (const auto& p : got_file.pairs) {
        CHECK(p.id_a < p.id_b);
        CHECK(p.dist <= fx.epsilon + 1e-6);
        CHECK(got.insert({p.id_a, p.id_b}).second);  // no duplicates across the run
    }
    auto want = fx.oracle();
    // lambda = 0.95 may prune a few pairs but precision must be perfect
    for (const auto& pr : got) CHECK(want.count(pr) == 1);
    CHECK(double(got.size()) >= 0.95 * double(want.size()));
    CHECK(stats.result_pairs == got_file.pairs.size());
    CHECK(stats.cache_misses == fx.plan.eviction.misses);
}

TEST_CASE("plan fidelity: executed counters equal the plan, replays identical") {
    JoinFixture fx(4000, 8, 8, 12, 0.3, 4);
    ExecParams params;
    params.cache_bytes = uint64_t(fx.plan.capacity) * fx.store.max_extent_bytes();
    auto s1 = run_join(fx.store, fx.plan, fx.epsilon, fx.dir.file("o1.pairs"), params);
    auto s2 = run_join(fx.store, fx.plan, fx.epsilon, fx.dir.file("o2.pairs"), params);

    CHECK(s1.cache_misses == fx.plan.eviction.misses);
    CHECK(s1.cache_hits + s1.cache_misses == fx.plan.schedule.access_seq.size());
    CHECK(s1.bytes_total == s2.bytes_total);
    CHECK(s1.bytes_useful == s2.bytes_useful);
    CHECK(s1.cache_hits == s2.cache_hits);
    CHECK(s1.cache_misses == s2.cache_misses);
    CHECK(s1.distance_computations == s2.distance_computations);
    CHECK(s1.result_pairs == s2.result_pairs);
    CHECK(s1.peak_cache_bytes <= params.cache_bytes);
    CHECK(fnv1a64_file(fx.dir.file("o1.pairs")) == fnv1a64_file(fx.dir.file("o2.pairs")));
    CHECK(s1.amp() >= 1.0);
}

TEST_CASE("mismatched plan or store is rejected") {
    JoinFixture fx(1000, 8, 4, 6, 0.3, 4);
    JoinFixture other(1000, 8, 4, 6, 0.3, 4, /*seed=*/99);
    ExecParams params;
    try {
        run_join(other.store, fx.plan, fx.epsilon, fx.dir.file("x.pairs"), params);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::PlanMismatch);
    }
    SUBCASE("cache budget too small for the plan") {
        params.cache_bytes = fx.store.max_extent_bytes();  // < capacity * max extent
        try {
            run_join(fx.store, fx.plan, fx.epsilon, fx.dir.file("y.pairs"), params);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::PlanMismatch);
        }
    }
}

TEST_CASE("stats text and csv emission") {
    RunStats s;
    s.bytes_total = 1050;
    s.bytes_useful = 1000;
    s.cache_hits = 30;
    s.cache_misses = 10;
    CHECK(s.amp() == doctest::Approx(1.05));
    CHECK(s.hit_rate() == doctest::Approx(0.75));
    auto kv = s.to_kv_text();
    CHECK(kv.find("amp=1.05") != std::string::npos);
    CHECK(kv.find("bytes_total=1050") != std::string::npos);
    auto header = RunStats::csv_header();
    auto row = s.csv_row();
    CHECK(std::count(header.begin(), header.end(), ',') ==
          std::count(row.begin(), row.end(), ','));
    CHECK(row.substr(0, 2) == "1,");  // schema version
}

TEST_SUITE_END();
