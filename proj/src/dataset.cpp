#include "vecjoin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace vecjoin {

namespace {

std::string format_name(FileFormat f, ElemKind e) {
    if (f == FileFormat::Fvecs) return "fvecs";
    return e == ElemKind::U8 ? "u8bin" : "fbin";
}

DatasetHandle open_fbin(const std::string& path, ElemKind elem) {
    FileReader r(path, false);
    if (r.size() < 8) raise(ErrorCode::SizeMismatch, path + ": shorter than the fbin header");
    uint32_t header[2];
    r.pread_exact(header, 8, 0);
    DatasetHandle h;
    h.path = path;
    h.count = header[0];
    h.dim = header[1];
    h.elem = elem;
    h.format = FileFormat::Fbin;
    if (h.count < 1 || h.dim < 1) {
        raise(ErrorCode::SizeMismatch, path + ": fbin header with zero count or dim");
    }
    uint64_t expect = 8 + h.count * uint64_t(h.dim) * elem_bytes(elem);
    if (r.size() != expect) {
        raise(ErrorCode::SizeMismatch, path + ": file is " + std::to_string(r.size()) +
                                           " bytes, header implies " + std::to_string(expect));
    }
    return h;
}

DatasetHandle open_fvecs(const std::string& path) {
    FileReader r(path, false);
    if (r.size() < 4) raise(ErrorCode::SizeMismatch, path + ": shorter than one fvecs header");
    int32_t d0 = 0;
    r.pread_exact(&d0, 4, 0);
    if (d0 < 1) raise(ErrorCode::InconsistentDim, path + ": first record dim " + std::to_string(d0));
    uint64_t stride = 4 + 4 * uint64_t(d0);
    if (r.size() % stride != 0) {
        raise(ErrorCode::SizeMismatch, path + ": size " + std::to_string(r.size()) +
                                           " is not a multiple of the record stride " +
                                           std::to_string(stride));
    }
    uint64_t count = r.size() / stride;
    // every per-record dim header must agree
    const uint64_t chunk_records = 4096;
    std::vector<uint8_t> buf(chunk_records * stride);
    for (uint64_t i = 0; i < count; i += chunk_records) {
        uint64_t take = std::min(chunk_records, count - i);
        r.pread_exact(buf.data(), take * stride, i * stride);
        for (uint64_t j = 0; j < take; ++j) {
            int32_t dj;
            std::memcpy(&dj, buf.data() + j * stride, 4);
            if (dj != d0) {
                raise(ErrorCode::InconsistentDim,
                      path + ": record " + std::to_string(i + j) + " has dim " +
                          std::to_string(dj) + ", expected " + std::to_string(d0));
            }
        }
    }
    DatasetHandle h;
    h.path = path;
    h.count = count;
    h.dim = static_cast<uint32_t>(d0);
    h.elem = ElemKind::F32;
    h.format = FileFormat::Fvecs;
    return h;
}

}  // namespace

DatasetHandle open_dataset(const std::string& path, const std::string& format) {
    if (format == "fbin") return open_fbin(path, ElemKind::F32);
    if (format == "u8bin") return open_fbin(path, ElemKind::U8);
    if (format == "fvecs") return open_fvecs(path);
    raise(ErrorCode::UnsupportedElem, "unsupported dataset format: " + format);
}

DatasetHandle open_dataset(const std::string& path) {
    auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "fbin" || ext == "u8bin" || ext == "fvecs") return open_dataset(path, ext);
    raise(ErrorCode::UnsupportedElem, "cannot infer dataset format from extension: " + path);
}

BlockStream::BlockStream(const DatasetHandle& handle, uint64_t block_bytes, MemoryAccountant* acct)
    : handle_(handle), reader_(handle.path, false) {
    uint64_t rec = handle.disk_record_bytes();
    if (block_bytes < kPageSize || block_bytes < rec) {
        raise(ErrorCode::BadConfig, "block_bytes must be at least one page and one vector");
    }
    vectors_per_block_ = static_cast<size_t>(std::min<uint64_t>(block_bytes / rec, handle.count));
    raw_.resize(vectors_per_block_ * rec);
    widened_.resize(vectors_per_block_ * size_t(handle.dim));
    if (acct) {
        reservation_ = MemoryReservation(
            *acct, raw_.size() + widened_.size() * sizeof(float), "stream block");
    }
}

bool BlockStream::next(VectorBlock& out) {
    if (next_id_ >= handle_.count) return false;
    uint64_t take = std::min<uint64_t>(vectors_per_block_, handle_.count - next_id_);
    uint64_t rec = handle_.disk_record_bytes();
    reader_.pread_exact(raw_.data(), take * rec, handle_.payload_offset() + next_id_ * rec);

    const uint32_t d = handle_.dim;
    if (handle_.format == FileFormat::Fvecs) {
        for (uint64_t i = 0; i < take; ++i) {
            std::memcpy(widened_.data() + i * d, raw_.data() + i * rec + 4, 4 * size_t(d));
        }
    } else if (handle_.elem == ElemKind::F32) {
        std::memcpy(widened_.data(), raw_.data(), take * rec);
    } else {
        const uint8_t* src = raw_.data();
        for (uint64_t i = 0; i < take * d; ++i) widened_[i] = float(src[i]);
    }

    out.start_id = next_id_;
    out.count = static_cast<size_t>(take);
    out.dim = d;
    out.data = widened_.data();
    next_id_ += take;
    return true;
}

std::vector<float> read_rows(const DatasetHandle& handle, const std::vector<uint64_t>& ids) {
    FileReader r(handle.path, false);
    uint64_t rec = handle.disk_record_bytes();
    uint32_t d = handle.dim;
    std::vector<float> out(ids.size() * size_t(d));
    std::vector<uint8_t> raw(rec);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= handle.count) raise(ErrorCode::IoFailure, "row id out of range");
        r.pread_exact(raw.data(), rec, handle.payload_offset() + ids[i] * rec);
        const uint8_t* payload = raw.data() + (handle.format == FileFormat::Fvecs ? 4 : 0);
        if (handle.elem == ElemKind::F32) {
            std::memcpy(out.data() + i * d, payload, 4 * size_t(d));
        } else {
            for (uint32_t j = 0; j < d; ++j) out[i * d + j] = float(payload[j]);
        }
    }
    return out;
}

double SplitMix64::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
}

uint64_t uniform_below(uint64_t bound, SplitMix64& rng) {
    // rejection sampling to kill modulo bias
    uint64_t limit = bound == 0 ? 0 : (~uint64_t(0) - (~uint64_t(0) % bound));
    uint64_t v;
    do {
        v = rng.next();
    } while (v >= limit);
    return v % bound;
}

std::vector<uint64_t> sample_ids(uint64_t n, uint64_t m, uint64_t seed) {
    if (m < 1 || m > n) {
        raise(ErrorCode::MTooLarge,
              "sample size " + std::to_string(m) + " out of range for N=" + std::to_string(n));
    }
    SplitMix64 rng(seed);
    std::unordered_set<uint64_t> chosen;
    chosen.reserve(static_cast<size_t>(m) * 2);
    // Floyd's algorithm: uniform M-subset without materializing [0, N)
    for (uint64_t j = n - m; j < n; ++j) {
        uint64_t t = uniform_below(j + 1, rng);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<uint64_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

DatasetHandle gen_synthetic(uint64_t n, uint32_t dim, uint32_t clusters, float spread,
                            uint64_t seed, const std::string& path,
                            const std::string& labels_path) {
    if (n < 1 || dim < 1 || clusters < 1) {
        raise(ErrorCode::BadConfig, "gen_synthetic needs n, dim, clusters all >= 1");
    }
    SplitMix64 rng(seed);
    std::vector<float> centers(size_t(clusters) * dim);
    for (auto& c : centers) c = float(rng.next_double());

    FileWriter w(path);
    uint32_t header[2] = {static_cast<uint32_t>(n), dim};
    w.append(header, 8);

    FileWriter labels;
    if (!labels_path.empty()) labels.open(labels_path);

    std::vector<float> row(dim);
    for (uint64_t i = 0; i < n; ++i) {
        uint32_t c = static_cast<uint32_t>(uniform_below(clusters, rng));
        const float* center = centers.data() + size_t(c) * dim;
        if (spread == 0.0f) {
            std::memcpy(row.data(), center, dim * sizeof(float));
        } else {
            for (uint32_t j = 0; j < dim; ++j) {
                row[j] = center[j] + spread * float(rng.next_normal());
            }
        }
        w.append(row.data(), dim * sizeof(float));
        if (labels.is_open()) labels.append(&c, 4);
    }
    w.close();
    if (labels.is_open()) labels.close();
    return open_dataset(path, "fbin");
}

}  // namespace vecjoin
