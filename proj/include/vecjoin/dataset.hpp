#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vecjoin/common.hpp"
#include "vecjoin/io.hpp"

namespace vecjoin {

enum class ElemKind : uint8_t { F32, U8 };
enum class FileFormat : uint8_t { Fbin, Fvecs };

inline size_t elem_bytes(ElemKind e) { return e == ElemKind::F32 ? 4 : 1; }

/// Validated metadata for an on-disk flat vector file. uint8 payloads are
/// widened to float32 at load; all downstream arithmetic is float32.
struct DatasetHandle {
    std::string path;
    uint64_t count = 0;
    uint32_t dim = 0;
    ElemKind elem = ElemKind::F32;
    FileFormat format = FileFormat::Fbin;

    uint64_t payload_offset() const { return format == FileFormat::Fbin ? 8 : 0; }
    // On-disk bytes per record, including the per-record dim header for fvecs.
    uint64_t disk_record_bytes() const {
        uint64_t payload = uint64_t(dim) * elem_bytes(elem);
        return format == FileFormat::Fvecs ? payload + 4 : payload;
    }
    uint64_t data_bytes() const { return count * uint64_t(dim) * elem_bytes(elem); }
};

// format: "fbin" (float32), "u8bin" (fbin layout, uint8 payload), "fvecs".
DatasetHandle open_dataset(const std::string& path, const std::string& format);

// Guess the format from the file extension (.fbin/.u8bin/.fvecs).
DatasetHandle open_dataset(const std::string& path);

struct VectorBlock {
    uint64_t start_id = 0;
    size_t count = 0;
    uint32_t dim = 0;
    const float* data = nullptr;  // count x dim, row-major

    const float* row(size_t i) const { return data + i * dim; }
};

/// Single-consumer sequential block iterator. Each block holds at most
/// `block_bytes` of on-disk payload; ids are consecutive and the
/// concatenation of all blocks reproduces the dataset in id order.
class BlockStream {
  public:
    BlockStream(const DatasetHandle& handle, uint64_t block_bytes,
                MemoryAccountant* acct = nullptr);

    bool next(VectorBlock& out);
    size_t vectors_per_block() const { return vectors_per_block_; }

  private:
    DatasetHandle handle_;
    FileReader reader_;
    size_t vectors_per_block_ = 0;
    uint64_t next_id_ = 0;
    std::vector<uint8_t> raw_;
    std::vector<float> widened_;
    MemoryReservation reservation_;
};

// Gather specific rows by id (random access; used for center gathering checks
// and small oracles, not for bulk scans).
std::vector<float> read_rows(const DatasetHandle& handle, const std::vector<uint64_t>& ids);

// M distinct uniform ids from [0, N), sorted ascending. Floyd's sampling, so
// memory is O(M) regardless of N. Deterministic per seed.
std::vector<uint64_t> sample_ids(uint64_t n, uint64_t m, uint64_t seed);

/// Gaussian-mixture generator: `clusters` centers uniform in the unit
/// hypercube, isotropic per-dimension noise `spread`. Writes fbin.
/// labels_path, when non-empty, gets one u32 cluster id per vector.
DatasetHandle gen_synthetic(uint64_t n, uint32_t dim, uint32_t clusters, float spread,
                            uint64_t seed, const std::string& path,
                            const std::string& labels_path = "");

// Deterministic bounded uniform draw (rejection sampling on a 64-bit PRNG).
uint64_t uniform_below(uint64_t bound, class SplitMix64& rng);

/// Small deterministic PRNG used wherever reproducibility across platforms
/// matters more than statistical heft.
class SplitMix64 {
  public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}
    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // uniform in [0, 1)
    double next_double() { return double(next() >> 11) * 0x1.0p-53; }
    // standard normal via Box-Muller
    double next_normal();

  private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace vecjoin
