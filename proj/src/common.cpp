#include "vecjoin/common.hpp"

#include <atomic>
#include <cstdio>

namespace vecjoin {

static LogLevel parse_log_level() {
    const char* env = std::getenv("VECJOIN_LOG");
    if (!env) return LogLevel::Info;
    std::string v(env);
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    if (v == "warn") return LogLevel::Warn;
    if (v == "error") return LogLevel::Error;
    return LogLevel::Info;
}

LogLevel log_level() {
    static LogLevel level = parse_log_level();
    return level;
}

void log_msg(LogLevel level, const char* fmt, ...) {
    if (static_cast<int>(level) < static_cast<int>(log_level())) return;
    static const char* names[] = {"DEBUG", "INFO", "WARN", "ERROR"};
    static std::mutex mu;
    std::lock_guard<std::mutex> lk(mu);
    std::fprintf(stderr, "[%s] ", names[static_cast<int>(level)]);
    va_list args;
    va_start(args, fmt);
    std::vfprintf(stderr, fmt, args);
    va_end(args);
    std::fputc('\n', stderr);
}

uint64_t fnv1a64_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) raise(ErrorCode::IoFailure, "cannot open for hashing: " + path);
    uint64_t h = kFnvOffset;
    std::vector<unsigned char> buf(1 << 20);
    size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), f)) > 0) {
        h = fnv1a64(buf.data(), n, h);
    }
    bool bad = std::ferror(f);
    std::fclose(f);
    if (bad) raise(ErrorCode::IoFailure, "read error while hashing: " + path);
    return h;
}

unsigned default_thread_count() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void parallel_for(size_t n, const std::function<void(size_t, size_t, unsigned)>& fn,
                  unsigned num_threads) {
    if (n == 0) return;
    unsigned t = num_threads == 0 ? default_thread_count() : num_threads;
    if (t > n) t = static_cast<unsigned>(n);
    if (t <= 1) {
        fn(0, n, 0);
        return;
    }
    size_t chunk = (n + t - 1) / t;
    std::vector<std::thread> threads;
    threads.reserve(t);
    std::exception_ptr first_error;
    std::mutex err_mu;
    for (unsigned i = 0; i < t; ++i) {
        size_t begin = i * chunk;
        size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&, begin, end, i] {
            try {
                fn(begin, end, i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace vecjoin
