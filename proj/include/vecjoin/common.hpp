#pragma once

#include <chrono>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vecjoin {

constexpr size_t kPageSize = 4096;

enum class ErrorCode {
    IoFailure,
    SizeMismatch,
    InconsistentDim,
    UnsupportedElem,
    MTooLarge,
    TooLarge,
    NonFiniteInput,
    BudgetInfeasible,
    BudgetExceeded,
    CorruptExtent,
    CapacityTooSmall,
    PlanMismatch,
    BadConfig,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::SizeMismatch: return "SizeMismatch";
        case ErrorCode::InconsistentDim: return "InconsistentDim";
        case ErrorCode::UnsupportedElem: return "UnsupportedElem";
        case ErrorCode::MTooLarge: return "MTooLarge";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::BudgetInfeasible: return "BudgetInfeasible";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::CorruptExtent: return "CorruptExtent";
        case ErrorCode::CapacityTooSmall: return "CapacityTooSmall";
        case ErrorCode::PlanMismatch: return "PlanMismatch";
        case ErrorCode::BadConfig: return "BadConfig";
    }
    return "Unknown";
}

// ---------------------------------------------------------------------------
// Logging. Level comes from VECJOIN_LOG (debug|info|warn|error), default info.

enum class LogLevel : int { Debug = 0, Info = 1, Warn = 2, Error = 3 };

LogLevel log_level();
void log_msg(LogLevel level, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

#define VJ_DEBUG(...) ::vecjoin::log_msg(::vecjoin::LogLevel::Debug, __VA_ARGS__)
#define VJ_INFO(...) ::vecjoin::log_msg(::vecjoin::LogLevel::Info, __VA_ARGS__)
#define VJ_WARN(...) ::vecjoin::log_msg(::vecjoin::LogLevel::Warn, __VA_ARGS__)
#define VJ_ERROR(...) ::vecjoin::log_msg(::vecjoin::LogLevel::Error, __VA_ARGS__)

// ---------------------------------------------------------------------------

class Timer {
  public:
    Timer() : start_(clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(clock::now() - start_).count();
    }
    void reset() { start_ = clock::now(); }

  private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_;
};

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path);

template <typename T>
uint64_t fnv1a64_value(const T& v, uint64_t h = kFnvOffset) {
    static_assert(std::is_trivially_copyable_v<T>);
    return fnv1a64(&v, sizeof(T), h);
}

inline constexpr uint64_t round_up(uint64_t v, uint64_t align) {
    return (v + align - 1) / align * align;
}

// ---------------------------------------------------------------------------
// Bookkeeping for large allocations so phases can prove they stayed within the
// configured memory budget. Not an allocator; callers register the buffers
// that matter (streaming blocks, bucket buffers, cache payloads, indexes).

class MemoryAccountant {
  public:
    explicit MemoryAccountant(uint64_t budget_bytes = 0) : budget_(budget_bytes) {}

    void set_budget(uint64_t bytes) { budget_ = bytes; }
    uint64_t budget() const { return budget_; }

    void acquire(uint64_t bytes, const char* what) {
        std::lock_guard<std::mutex> lk(mu_);
        current_ += bytes;
        if (current_ > peak_) peak_ = current_;
        if (budget_ > 0 && current_ > budget_) {
            raise(ErrorCode::BudgetExceeded,
                  std::string("memory budget exceeded acquiring ") + what + ": " +
                      std::to_string(current_) + " > " + std::to_string(budget_) + " bytes");
        }
    }
    void release(uint64_t bytes) {
        std::lock_guard<std::mutex> lk(mu_);
        current_ = current_ >= bytes ? current_ - bytes : 0;
    }
    uint64_t current() const {
        std::lock_guard<std::mutex> lk(mu_);
        return current_;
    }
    uint64_t peak() const {
        std::lock_guard<std::mutex> lk(mu_);
        return peak_;
    }

  private:
    mutable std::mutex mu_;
    uint64_t budget_ = 0;
    uint64_t current_ = 0;
    uint64_t peak_ = 0;
};

class MemoryReservation {
  public:
    MemoryReservation() = default;
    MemoryReservation(MemoryAccountant& acct, uint64_t bytes, const char* what)
        : acct_(&acct), bytes_(bytes) {
        acct_->acquire(bytes_, what);
    }
    MemoryReservation(MemoryReservation&& o) noexcept : acct_(o.acct_), bytes_(o.bytes_) {
        o.acct_ = nullptr;
        o.bytes_ = 0;
    }
    MemoryReservation& operator=(MemoryReservation&& o) noexcept {
        if (this != &o) {
            reset();
            acct_ = o.acct_;
            bytes_ = o.bytes_;
            o.acct_ = nullptr;
            o.bytes_ = 0;
        }
        return *this;
    }
    MemoryReservation(const MemoryReservation&) = delete;
    MemoryReservation& operator=(const MemoryReservation&) = delete;
    ~MemoryReservation() { reset(); }

    void reset() {
        if (acct_) acct_->release(bytes_);
        acct_ = nullptr;
        bytes_ = 0;
    }

  private:
    MemoryAccountant* acct_ = nullptr;
    uint64_t bytes_ = 0;
};

// ---------------------------------------------------------------------------
// Chunked parallel-for. Results that are merged in chunk order stay
// deterministic regardless of thread scheduling.

unsigned default_thread_count();

void parallel_for(size_t n, const std::function<void(size_t begin, size_t end, unsigned thread)>& fn,
                  unsigned num_threads = 0);

}  // namespace vecjoin
