#include "vecjoin/pipeline.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vecjoin/bucket_graph.hpp"
#include "vecjoin/evaluator.hpp"

namespace vecjoin {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

void ensure_dir(const std::string& path) {
    if (mkdir(path.c_str(), 0755) != 0 && errno != EEXIST) {
        raise(ErrorCode::IoFailure, "cannot create directory " + path);
    }
}

}  // namespace

std::string JoinConfig::to_kv() const {
    std::ostringstream ss;
    ss << "epsilon=" << fmt_double(epsilon) << "\n"
       << "target_neighbors=" << fmt_double(target_neighbors) << "\n"
       << "lambda=" << fmt_double(lambda) << "\n"
       << "memory_budget=" << memory_budget << "\n"
       << "num_buckets=" << num_buckets << "\n"
       << "candidate_width=" << candidate_width << "\n"
       << "apply_mu=" << (apply_mu ? 1 : 0) << "\n"
       << "adaptive_l=" << (adaptive_l ? 1 : 0) << "\n"
       << "seed=" << seed << "\n"
       << "page_size=" << page_size << "\n"
       << "prefetch_depth=" << prefetch_depth << "\n"
       << "graph_degree=" << graph_degree << "\n"
       << "ef_construction=" << ef_construction << "\n"
       << "assign_ef=" << assign_ef << "\n"
       << "calibrate_samples=" << calibrate_samples << "\n";
    return ss.str();
}

JoinConfig JoinConfig::from_kv(const std::string& text) {
    auto kv = parse_kv(text);
    JoinConfig c;
    auto get = [&](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };
    if (auto v = get("epsilon")) c.epsilon = std::stod(*v);
    if (auto v = get("target_neighbors")) c.target_neighbors = std::stod(*v);
    if (auto v = get("lambda")) c.lambda = std::stod(*v);
    if (auto v = get("memory_budget")) c.memory_budget = *v;
    if (auto v = get("num_buckets")) c.num_buckets = uint32_t(std::stoul(*v));
    if (auto v = get("candidate_width")) c.candidate_width = uint32_t(std::stoul(*v));
    if (auto v = get("apply_mu")) c.apply_mu = *v != "0";
    if (auto v = get("adaptive_l")) c.adaptive_l = *v != "0";
    if (auto v = get("seed")) c.seed = std::stoull(*v);
    if (auto v = get("page_size")) c.page_size = uint32_t(std::stoul(*v));
    if (auto v = get("prefetch_depth")) c.prefetch_depth = uint32_t(std::stoul(*v));
    if (auto v = get("graph_degree")) c.graph_degree = uint32_t(std::stoul(*v));
    if (auto v = get("ef_construction")) c.ef_construction = uint32_t(std::stoul(*v));
    if (auto v = get("assign_ef")) c.assign_ef = uint32_t(std::stoul(*v));
    if (auto v = get("calibrate_samples")) c.calibrate_samples = std::stoull(*v);
    return c;
}

uint64_t parse_budget(const std::string& spec, uint64_t dataset_bytes) {
    if (spec.empty()) raise(ErrorCode::BadConfig, "empty memory budget");
    if (spec.back() == '%') {
        double pct = std::stod(spec.substr(0, spec.size() - 1));
        if (pct <= 0) raise(ErrorCode::BadConfig, "budget percentage must be positive");
        return uint64_t(double(dataset_bytes) * pct / 100.0);
    }
    return std::stoull(spec);
}

uint64_t JoinConfig::resolve_budget_bytes(uint64_t dataset_bytes) const {
    return parse_budget(memory_budget, dataset_bytes);
}

namespace {

// manifest: a key=value file recording the content key each artifact was
// built from, so reruns can skip phases whose inputs did not change
struct Manifest {
    std::string path;
    std::map<std::string, std::string> kv;

    static Manifest open(const std::string& path) {
        Manifest m;
        m.path = path;
        if (file_exists(path)) m.kv = parse_kv(read_text_file(path));
        return m;
    }
    bool matches(const std::string& key, uint64_t value) const {
        auto it = kv.find(key);
        return it != kv.end() && it->second == std::to_string(value);
    }
    void put(const std::string& key, uint64_t value) {
        kv[key] = std::to_string(value);
        std::ostringstream ss;
        for (const auto& [k, v] : kv) ss << k << '=' << v << '\n';
        write_text_file(path + ".tmp", ss.str());
        rename_file(path + ".tmp", path);
    }
};

uint64_t hash_mix(std::initializer_list<uint64_t> values) {
    uint64_t h = kFnvOffset;
    for (uint64_t v : values) h = fnv1a64(&v, 8, h);
    return h;
}

uint64_t double_bits(double v) {
    uint64_t b;
    std::memcpy(&b, &v, 8);
    return b;
}

}  // namespace

PipelineResult run_pipeline(const std::string& data_path, const std::string& out_dir,
                            const JoinConfig& config, bool do_eval) {
    // validate the dataset before creating anything in out_dir
    auto handle = open_dataset(data_path);
    ensure_dir(out_dir);

    PipelineResult result;
    RunStats& stats = result.stats;
    Timer phase_timer;

    const uint64_t dataset_bytes = handle.data_bytes();
    const uint64_t budget = config.resolve_budget_bytes(dataset_bytes);
    const uint64_t dataset_hash = fnv1a64_file(data_path);
    Manifest manifest = Manifest::open(out_dir + "/manifest.kv");

    uint32_t m = config.num_buckets;
    if (m == 0) {
        m = uint32_t(std::max<uint64_t>(1, (handle.count + 500) / 1000));
        m = uint32_t(std::min<uint64_t>(m, handle.count));
    }
    const uint64_t split_threshold = std::max<uint64_t>(budget / 4, 2 * kPageSize);

    // ---- epsilon ----
    double epsilon = config.epsilon;
    if (epsilon <= 0) {
        uint64_t cal_key = hash_mix({dataset_hash, double_bits(config.target_neighbors),
                                     config.calibrate_samples, config.seed});
        std::string cal_path = out_dir + "/calibration.kv";
        if (manifest.matches("calibrate", cal_key) && file_exists(cal_path)) {
            epsilon = std::stod(parse_kv(read_text_file(cal_path)).at("epsilon"));
            VJ_INFO("calibration reused: epsilon=%.6g", epsilon);
        } else {
            uint64_t samples = std::min<uint64_t>(config.calibrate_samples, handle.count);
            auto cal = calibrate_epsilon(handle, config.target_neighbors, samples, config.seed);
            epsilon = cal.epsilon;
            write_text_file(cal_path + ".tmp", "epsilon=" + fmt_double(epsilon) +
                                                   "\nachieved_avg=" + fmt_double(cal.achieved_avg) +
                                                   "\n");
            rename_file(cal_path + ".tmp", cal_path);
            manifest.put("calibrate", cal_key);
            VJ_INFO("calibrated epsilon=%.6g (achieved avg %.1f neighbors)", epsilon,
                    cal.achieved_avg);
        }
    }
    result.epsilon = epsilon;

    // ---- bucketize ----
    phase_timer.reset();
    const std::string store_prefix = out_dir + "/buckets";
    BucketizeParams bparams;
    bparams.num_buckets = m;
    bparams.seed = config.seed;
    bparams.memory_budget_bytes = budget;
    bparams.split_threshold_bytes = split_threshold;
    bparams.assign_ef = config.assign_ef;
    bparams.index_params.graph_degree = config.graph_degree;
    bparams.index_params.ef_construction = config.ef_construction;
    bparams.index_params.seed = config.seed;

    uint64_t bucketize_key = hash_mix({dataset_hash, uint64_t(m), config.seed, split_threshold,
                                       uint64_t(config.graph_degree),
                                       uint64_t(config.ef_construction),
                                       uint64_t(config.assign_ef)});
    BucketStore store;
    if (manifest.matches("bucketize", bucketize_key) && file_exists(store_prefix + ".bkm") &&
        file_exists(store_prefix + ".bks") && file_exists(store_prefix + ".cidx")) {
        store = BucketStore::open(store_prefix);
        result.skipped_bucketize = true;
        VJ_INFO("bucketize skipped (artifacts match)");
    } else {
        const std::string tmp_prefix = out_dir + "/.tmp_buckets";
        store = bucketize(handle, bparams, tmp_prefix, nullptr);
        rename_file(tmp_prefix + ".bks", store_prefix + ".bks");
        rename_file(tmp_prefix + ".bkm", store_prefix + ".bkm");
        rename_file(tmp_prefix + ".cidx", store_prefix + ".cidx");
        store = BucketStore::open(store_prefix);
        manifest.put("bucketize", bucketize_key);
    }
    stats.bucketize_seconds = phase_timer.seconds();

    // ---- graph ----
    phase_timer.reset();
    const std::string graph_path = out_dir + "/graph.bdg";
    auto prune = PruneBudget::make(config.lambda, handle.dim, config.apply_mu);
    uint64_t graph_key = hash_mix({store.store_hash(), double_bits(epsilon),
                                   double_bits(config.lambda), uint64_t(config.apply_mu),
                                   uint64_t(config.candidate_width),
                                   uint64_t(config.adaptive_l)});
    BucketGraph graph;
    if (manifest.matches("graph", graph_key) && file_exists(graph_path)) {
        graph = BucketGraph::load(graph_path);
        result.skipped_graph = graph.store_hash() == store.store_hash();
        if (!result.skipped_graph) raise(ErrorCode::PlanMismatch, "stale graph artifact");
        VJ_INFO("graph skipped (artifacts match)");
    } else {
        auto index = CenterIndex::load(store_prefix + ".cidx");
        GraphBuildStats gstats;
        graph = build_graph(store, index, epsilon, prune, config.candidate_width,
                            config.adaptive_l, &gstats);
        graph.save(graph_path + ".tmp");
        rename_file(graph_path + ".tmp", graph_path);
        gstats.write_csv(out_dir + "/graph_stats.csv");
        manifest.put("graph", graph_key);
    }
    stats.graph_seconds = phase_timer.seconds();

    // ---- orchestrate ----
    phase_timer.reset();
    const std::string plan_path = out_dir + "/schedule.plan";
    uint64_t max_bucket = store.max_extent_bytes();
    uint32_t capacity = uint32_t(std::max<uint64_t>(max_bucket ? budget / max_bucket : 2, 2));
    capacity = uint32_t(std::min<uint64_t>(capacity, std::max<uint32_t>(store.num_buckets(), 2)));
    result.capacity = capacity;

    uint64_t plan_key = hash_mix({graph.graph_hash(), uint64_t(capacity)});
    Plan plan;
    if (manifest.matches("orchestrate", plan_key) && file_exists(plan_path)) {
        plan = Plan::load(plan_path);
        result.skipped_orchestrate =
            plan.graph_hash == graph.graph_hash() && plan.capacity == capacity;
        if (!result.skipped_orchestrate) raise(ErrorCode::PlanMismatch, "stale plan artifact");
        VJ_INFO("orchestrate skipped (artifacts match)");
    } else {
        plan = orchestrate(graph, capacity);
        plan.save(plan_path + ".tmp");
        rename_file(plan_path + ".tmp", plan_path);
        manifest.put("orchestrate", plan_key);
    }
    stats.orchestrate_seconds = phase_timer.seconds();

    // ---- join (always executed) ----
    auto direct_store = BucketStore::open(store_prefix, /*direct_io=*/true);
    ExecParams eparams;
    eparams.cache_bytes = budget;
    eparams.prefetch_depth = config.prefetch_depth;
    result.pairs_path = out_dir + "/result.pairs";
    RunStats jstats =
        run_join(direct_store, plan, epsilon, result.pairs_path + ".tmp", eparams);
    rename_file(result.pairs_path + ".tmp", result.pairs_path);
    stats.bytes_total = jstats.bytes_total;
    stats.bytes_useful = jstats.bytes_useful;
    stats.cache_hits = jstats.cache_hits;
    stats.cache_misses = jstats.cache_misses;
    stats.distance_computations = jstats.distance_computations;
    stats.result_pairs = jstats.result_pairs;
    stats.peak_cache_bytes = jstats.peak_cache_bytes;
    stats.direct_io = jstats.direct_io;
    stats.execute_seconds = jstats.execute_seconds;

    // ---- persist effective config and stats ----
    JoinConfig effective = config;
    effective.epsilon = epsilon;
    effective.num_buckets = m;
    write_text_file(out_dir + "/config.effective", effective.to_kv());
    write_text_file(out_dir + "/stats.kv", stats.to_kv_text());
    result.stats_csv_path = out_dir + "/stats.csv";
    {
        std::string row = stats.csv_row() + "\n";
        if (!file_exists(result.stats_csv_path)) {
            write_text_file(result.stats_csv_path, RunStats::csv_header() + "\n" + row);
        } else {
            auto existing = read_text_file(result.stats_csv_path);
            write_text_file(result.stats_csv_path, existing + row);
        }
    }

    // ---- optional evaluation against the exact oracle ----
    if (do_eval) {
        auto oracle = brute_force_join(handle, epsilon);
        auto engine = PairSet::from_file(result.pairs_path);
        result.recall_value = recall(engine, oracle);
        auto prec = check_precision(handle, engine, epsilon);
        result.precision_value = prec.precision();
        VJ_INFO("eval: recall=%.4f precision=%.4f (%zu engine pairs, %zu oracle pairs)",
                result.recall_value, result.precision_value, engine.size(), oracle.size());
    }
    return result;
}

}  // namespace vecjoin
