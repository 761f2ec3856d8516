// Disk-based vector similarity self-join: finds all vector pairs within L2
// distance epsilon in an SSD-resident dataset under a memory budget.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>

#include "vecjoin/bucket_graph.hpp"
#include "vecjoin/evaluator.hpp"
#include "vecjoin/pipeline.hpp"

using namespace vecjoin;

namespace {

std::vector<uint32_t> read_sequence_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
    std::vector<uint32_t> seq;
    uint64_t v;
    while (in >> v) seq.push_back(uint32_t(v));
    return seq;
}

void apply_config_file(JoinConfig& cfg, const std::string& path) {
    cfg = JoinConfig::from_kv(read_text_file(path));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vecjoin: disk-based vector similarity self-join"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic clustered dataset (fbin)");
    uint64_t g_n = 100000;
    uint32_t g_dim = 32, g_clusters = 100;
    double g_spread = 0.05;
    uint64_t g_seed = 42;
    std::string g_out, g_labels;
    gen->add_option("--n", g_n, "vector count");
    gen->add_option("--dim", g_dim, "dimensions");
    gen->add_option("--clusters", g_clusters, "cluster count");
    gen->add_option("--spread", g_spread, "per-dimension Gaussian noise");
    gen->add_option("--seed", g_seed, "RNG seed");
    gen->add_option("--out", g_out, "output .fbin path")->required();
    gen->add_option("--labels-out", g_labels, "optional cluster-label sidecar");

    // ---- bucketize ----
    auto* buck = app.add_subcommand("bucketize", "partition the dataset into on-disk buckets");
    std::string b_data, b_out, b_budget = "10%";
    uint32_t b_m = 0;
    uint64_t b_seed = 42, b_split = 0;
    buck->add_option("--data", b_data)->required();
    buck->add_option("--out", b_out, "output prefix (.bks/.bkm/.cidx)")->required();
    buck->add_option("--m", b_m, "bucket count (0 = N/1000)");
    buck->add_option("--seed", b_seed);
    buck->add_option("--budget", b_budget, "memory budget: bytes or % of dataset");
    buck->add_option("--split-threshold", b_split, "max bucket extent bytes (0 = budget/4)");

    // ---- graph ----
    auto* gr = app.add_subcommand("graph", "build the bucket dependency graph");
    std::string gr_store, gr_out, gr_stats;
    double gr_eps = 0, gr_lambda = 0.9;
    uint32_t gr_l = 256;
    bool gr_no_mu = false, gr_no_adaptive = false;
    gr->add_option("--store", gr_store, "bucket store prefix")->required();
    gr->add_option("--epsilon", gr_eps)->required();
    gr->add_option("--lambda", gr_lambda, "target recall in (0,1]");
    gr->add_option("--l", gr_l, "candidate search width");
    gr->add_flag("--no-mu", gr_no_mu, "drop the dimension constant from the prune bound");
    gr->add_flag("--no-adaptive-l", gr_no_adaptive, "disable candidate width doubling");
    gr->add_option("--out", gr_out, "output .bdg (default <store>.bdg)");
    gr->add_option("--stats-csv", gr_stats, "per-bucket filter-stage counts");

    // ---- orchestrate ----
    auto* orch = app.add_subcommand("orchestrate", "order tasks and plan cache eviction");
    std::string o_graph, o_store, o_cache = "10%", o_out;
    orch->add_option("--graph", o_graph)->required();
    orch->add_option("--store", o_store)->required();
    orch->add_option("--cache", o_cache, "cache budget: bytes or % of dataset");
    orch->add_option("--out", o_out, "output .plan (default <graph>.plan)");

    // ---- simulate-cache ----
    auto* sim = app.add_subcommand("simulate-cache", "replay an access sequence per policy");
    std::string s_plan, s_seq;
    uint32_t s_capacity = 0;
    sim->add_option("--plan", s_plan, "read the access sequence from a .plan file");
    sim->add_option("--seq", s_seq, "text file, one bucket id per line");
    sim->add_option("--capacity", s_capacity, "cache capacity in buckets (0 = plan's)");

    // ---- join ----
    auto* join = app.add_subcommand("join", "execute the planned join");
    std::string j_data, j_store, j_graph, j_plan, j_out;
    double j_eps = 0, j_lambda = 0;
    uint64_t j_cache = 0;
    uint32_t j_prefetch = 2;
    bool j_det = false;
    join->add_option("--data", j_data, "original dataset (validated against the store)");
    join->add_option("--store", j_store)->required();
    join->add_option("--graph", j_graph)->required();
    join->add_option("--plan", j_plan)->required();
    join->add_option("--epsilon", j_eps, "default: the graph's epsilon");
    join->add_option("--lambda", j_lambda, "informational; must match the graph when set");
    join->add_option("--cache-bytes", j_cache, "0 = plan capacity x max bucket");
    join->add_option("--out", j_out)->required();
    join->add_flag("--deterministic", j_det, "results stream in task order (always on)");
    join->add_option("--prefetch", j_prefetch, "loader lookahead in tasks");

    // ---- oracle ----
    auto* orc = app.add_subcommand("oracle", "exact brute-force self-join (desk scale)");
    std::string or_data, or_out;
    double or_eps = 0;
    uint64_t or_maxn = 200000;
    orc->add_option("--data", or_data)->required();
    orc->add_option("--epsilon", or_eps)->required();
    orc->add_option("--out", or_out)->required();
    orc->add_option("--max-n", or_maxn);

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "recall/precision of engine pairs vs oracle pairs");
    std::string e_engine, e_oracle, e_data;
    ev->add_option("--engine", e_engine)->required();
    ev->add_option("--oracle", e_oracle)->required();
    ev->add_option("--data", e_data, "enables the exact precision re-check");

    // ---- calibrate ----
    auto* cal = app.add_subcommand("calibrate", "estimate epsilon for a target neighbor count");
    std::string c_data;
    double c_target = 100;
    uint64_t c_sample = 1000, c_seed = 42;
    cal->add_option("--data", c_data)->required();
    cal->add_option("--target-neighbors", c_target);
    cal->add_option("--sample", c_sample);
    cal->add_option("--seed", c_seed);

    // ---- pipeline ----
    auto* pipe = app.add_subcommand("pipeline", "bucketize, graph, orchestrate, join, eval");
    std::string p_data, p_outdir, p_config;
    JoinConfig pcfg;
    bool p_eval = false, p_no_mu = false;
    double p_eps = -1, p_lambda = -1, p_target = -1;
    std::string p_cache;
    uint32_t p_m = UINT32_MAX, p_l = UINT32_MAX;
    int64_t p_seed = -1;
    pipe->add_option("--data", p_data)->required();
    pipe->add_option("--out-dir", p_outdir)->required();
    pipe->add_option("--config", p_config, "key=value config file; flags override");
    pipe->add_option("--epsilon", p_eps, "fixed distance threshold (otherwise calibrated)");
    pipe->add_option("--target-neighbors", p_target, "calibration target when epsilon unset");
    pipe->add_option("--lambda", p_lambda, "target recall");
    pipe->add_option("--cache", p_cache, "memory budget: bytes or % of dataset size");
    pipe->add_option("--m", p_m, "bucket count (0 = N/1000)");
    pipe->add_option("--l", p_l, "candidate search width");
    pipe->add_option("--seed", p_seed);
    pipe->add_flag("--no-mu", p_no_mu);
    pipe->add_flag("--eval", p_eval, "run the exact oracle and report recall");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            auto h = gen_synthetic(g_n, g_dim, g_clusters, float(g_spread), g_seed, g_out,
                                   g_labels);
            std::printf("wrote %s: N=%llu dim=%u\n", g_out.c_str(),
                        (unsigned long long)h.count, h.dim);
        } else if (*buck) {
            auto handle = open_dataset(b_data);
            BucketizeParams params;
            params.num_buckets = b_m;
            params.seed = b_seed;
            params.memory_budget_bytes = parse_budget(b_budget, handle.data_bytes());
            params.split_threshold_bytes =
                b_split ? b_split : std::max<uint64_t>(params.memory_budget_bytes / 4, 2 * kPageSize);
            BucketizeStats stats;
            auto store = bucketize(handle, params, b_out, &stats);
            std::printf("buckets=%u groups=%u data_bytes=%llu peak_mem=%llu\n",
                        store.num_buckets(), store.num_groups(),
                        (unsigned long long)stats.data_bytes_written,
                        (unsigned long long)stats.peak_memory_bytes);
        } else if (*gr) {
            auto store = BucketStore::open(gr_store);
            auto index = CenterIndex::load(gr_store + ".cidx");
            auto budget = PruneBudget::make(gr_lambda, store.dim(), !gr_no_mu);
            GraphBuildStats stats;
            auto graph =
                build_graph(store, index, gr_eps, budget, gr_l, !gr_no_adaptive, &stats);
            std::string out = gr_out.empty() ? gr_store + ".bdg" : gr_out;
            graph.save(out);
            if (!gr_stats.empty()) stats.write_csv(gr_stats);
            std::printf("graph: nodes=%u edges=%llu -> %s\n", graph.num_nodes(),
                        (unsigned long long)graph.num_edges(), out.c_str());
        } else if (*orch) {
            auto store = BucketStore::open(o_store);
            auto graph = BucketGraph::load(o_graph);
            if (graph.store_hash() != store.store_hash()) {
                raise(ErrorCode::PlanMismatch, "graph was built for a different store");
            }
            uint64_t cache_bytes = parse_budget(
                o_cache, store.total_vectors() * uint64_t(store.dim()) * 4);
            uint64_t max_bucket = store.max_extent_bytes();
            uint32_t capacity =
                uint32_t(std::max<uint64_t>(max_bucket ? cache_bytes / max_bucket : 2, 2));
            auto plan = orchestrate(graph, capacity);
            std::string out = o_out.empty() ? o_graph + ".plan" : o_out;
            plan.save(out);
            std::printf("plan: capacity=%u tasks=%zu planned_misses=%llu window=%u -> %s\n",
                        capacity, plan.schedule.tasks.size(),
                        (unsigned long long)plan.eviction.misses, plan.schedule.window,
                        out.c_str());
        } else if (*sim) {
            std::vector<uint32_t> seq;
            uint32_t capacity = s_capacity;
            if (!s_plan.empty()) {
                auto plan = Plan::load(s_plan);
                seq = plan.schedule.access_seq;
                if (capacity == 0) capacity = plan.capacity;
            } else if (!s_seq.empty()) {
                seq = read_sequence_file(s_seq);
            } else {
                raise(ErrorCode::BadConfig, "simulate-cache needs --plan or --seq");
            }
            if (capacity == 0) raise(ErrorCode::BadConfig, "capacity must be set");
            std::printf("policy,capacity,accesses,misses,hit_rate\n");
            for (auto [name, policy] :
                 {std::pair<const char*, CachePolicy>{"lru", CachePolicy::LRU},
                  {"fifo", CachePolicy::FIFO},
                  {"belady", CachePolicy::Belady}}) {
                auto r = simulate_policy(seq, capacity, policy);
                std::printf("%s,%u,%zu,%llu,%.6f\n", name, capacity, seq.size(),
                            (unsigned long long)r.misses, r.hit_rate);
            }
        } else if (*join) {
            auto store = BucketStore::open(j_store, /*direct_io=*/true);
            auto graph = BucketGraph::load(j_graph);
            auto plan = Plan::load(j_plan);
            if (graph.store_hash() != store.store_hash() ||
                plan.graph_hash != graph.graph_hash()) {
                raise(ErrorCode::PlanMismatch, "store, graph, and plan do not belong together");
            }
            if (!j_data.empty()) {
                auto handle = open_dataset(j_data);
                if (handle.count != store.total_vectors() || handle.dim != store.dim()) {
                    raise(ErrorCode::PlanMismatch, "dataset does not match the bucket store");
                }
            }
            if (j_lambda > 0 && j_lambda != graph.lambda()) {
                raise(ErrorCode::PlanMismatch, "lambda differs from the graph's lambda");
            }
            double eps = j_eps > 0 ? j_eps : graph.epsilon();
            ExecParams params;
            params.cache_bytes =
                j_cache ? j_cache : uint64_t(plan.capacity) * store.max_extent_bytes();
            params.prefetch_depth = j_prefetch;
            params.deterministic = j_det || true;
            auto stats = run_join(store, plan, eps, j_out, params);
            std::fputs(stats.to_kv_text().c_str(), stdout);
        } else if (*orc) {
            auto handle = open_dataset(or_data);
            auto pairs = brute_force_join(handle, or_eps, or_maxn);
            PairWriter w(or_out, or_eps, handle.count);
            w.write(pairs.pairs);
            w.close();
            std::printf("oracle pairs=%zu -> %s\n", pairs.size(), or_out.c_str());
        } else if (*ev) {
            auto engine = PairSet::from_file(e_engine);
            auto oracle = PairSet::from_file(e_oracle);
            double r = recall(engine, oracle);
            std::printf("engine_pairs=%zu\noracle_pairs=%zu\nrecall=%.6f\n", engine.size(),
                        oracle.size(), r);
            if (!e_data.empty()) {
                auto handle = open_dataset(e_data);
                double eps = read_pairs(e_engine).epsilon;
                auto rep = check_precision(handle, engine, eps);
                std::printf("precision=%.6f\nviolations=%llu\ndist_warnings=%llu\n",
                            rep.precision(), (unsigned long long)rep.violations,
                            (unsigned long long)rep.dist_warnings);
            }
        } else if (*cal) {
            auto handle = open_dataset(c_data);
            uint64_t n = std::min<uint64_t>(c_sample, handle.count);
            auto res = calibrate_epsilon(handle, c_target, n, c_seed);
            std::printf("epsilon=%.9g\nachieved_avg=%.3f\nsamples=%llu\n", res.epsilon,
                        res.achieved_avg, (unsigned long long)res.samples);
        } else if (*pipe) {
            if (!p_config.empty()) apply_config_file(pcfg, p_config);
            if (p_eps >= 0) pcfg.epsilon = p_eps;
            if (p_target >= 0) pcfg.target_neighbors = p_target;
            if (p_lambda >= 0) pcfg.lambda = p_lambda;
            if (!p_cache.empty()) pcfg.memory_budget = p_cache;
            if (p_m != UINT32_MAX) pcfg.num_buckets = p_m;
            if (p_l != UINT32_MAX) pcfg.candidate_width = p_l;
            if (p_seed >= 0) pcfg.seed = uint64_t(p_seed);
            if (p_no_mu) pcfg.apply_mu = false;
            auto result = run_pipeline(p_data, p_outdir, pcfg, p_eval);
            std::printf("epsilon=%.9g\ncapacity=%llu\n", result.epsilon,
                        (unsigned long long)result.capacity);
            std::fputs(result.stats.to_kv_text().c_str(), stdout);
            if (p_eval) {
                std::printf("recall=%.6f\nprecision=%.6f\n", result.recall_value,
                            result.precision_value);
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", error_code_name(e.code()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
