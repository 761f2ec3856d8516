#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vecjoin/common.hpp"

namespace vecjoin {

/// Buffer aligned for direct I/O (4096-byte boundary, length rounded up).
class AlignedBuffer {
  public:
    AlignedBuffer() = default;
    explicit AlignedBuffer(size_t bytes) { allocate(bytes); }
    AlignedBuffer(AlignedBuffer&& o) noexcept : data_(o.data_), size_(o.size_) {
        o.data_ = nullptr;
        o.size_ = 0;
    }
    AlignedBuffer& operator=(AlignedBuffer&& o) noexcept;
    AlignedBuffer(const AlignedBuffer&) = delete;
    AlignedBuffer& operator=(const AlignedBuffer&) = delete;
    ~AlignedBuffer();

    void allocate(size_t bytes);
    void reset();

    uint8_t* data() { return data_; }
    const uint8_t* data() const { return data_; }
    size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

  private:
    uint8_t* data_ = nullptr;
    size_t size_ = 0;
};

/// Read-only file handle. When `direct` is requested the file is opened with
/// O_DIRECT so the OS page cache cannot mask I/O accounting; if the filesystem
/// refuses, falls back to buffered reads and records that it did.
class FileReader {
  public:
    FileReader() = default;
    FileReader(const std::string& path, bool direct);
    FileReader(FileReader&& o) noexcept;
    FileReader& operator=(FileReader&& o) noexcept;
    FileReader(const FileReader&) = delete;
    FileReader& operator=(const FileReader&) = delete;
    ~FileReader();

    void open(const std::string& path, bool direct);
    void close();
    bool is_open() const { return fd_ >= 0; }
    bool direct_active() const { return direct_; }
    uint64_t size() const { return size_; }
    const std::string& path() const { return path_; }

    // Reads exactly `len` bytes at `offset`. With direct I/O active, offset,
    // len, and the buffer address must be page-aligned.
    void pread_exact(void* buf, uint64_t len, uint64_t offset) const;

  private:
    int fd_ = -1;
    bool direct_ = false;
    uint64_t size_ = 0;
    std::string path_;
};

/// Append-oriented writer with an internal buffer, plus positioned writes for
/// laying out data at precomputed offsets. Tracks total bytes written.
class FileWriter {
  public:
    FileWriter() = default;
    FileWriter(const std::string& path, size_t buffer_bytes = 1 << 20) {
        open(path, buffer_bytes);
    }
    FileWriter(FileWriter&&) = delete;
    FileWriter(const FileWriter&) = delete;
    ~FileWriter();

    void open(const std::string& path, size_t buffer_bytes = 1 << 20);
    void append(const void* data, size_t len);
    void pwrite_exact(const void* data, size_t len, uint64_t offset);
    void flush();
    void close();
    bool is_open() const { return fd_ >= 0; }
    uint64_t bytes_written() const { return bytes_written_; }
    uint64_t append_offset() const { return append_offset_; }

  private:
    int fd_ = -1;
    std::string path_;
    std::vector<uint8_t> buf_;
    size_t buf_used_ = 0;
    uint64_t append_offset_ = 0;
    uint64_t bytes_written_ = 0;
};

bool file_exists(const std::string& path);
uint64_t file_size(const std::string& path);
void remove_file_if_exists(const std::string& path);
// Rename, replacing any existing target. Used for atomic artifact publication.
void rename_file(const std::string& from, const std::string& to);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace vecjoin
