#include "vecjoin/io.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vecjoin {

AlignedBuffer& AlignedBuffer::operator=(AlignedBuffer&& o) noexcept {
    if (this != &o) {
        reset();
        data_ = o.data_;
        size_ = o.size_;
        o.data_ = nullptr;
        o.size_ = 0;
    }
    return *this;
}

AlignedBuffer::~AlignedBuffer() { reset(); }

void AlignedBuffer::allocate(size_t bytes) {
    reset();
    size_ = round_up(bytes, kPageSize);
    void* p = nullptr;
    if (posix_memalign(&p, kPageSize, size_) != 0) {
        raise(ErrorCode::IoFailure, "posix_memalign failed for " + std::to_string(size_) + " bytes");
    }
    data_ = static_cast<uint8_t*>(p);
}

void AlignedBuffer::reset() {
    std::free(data_);
    data_ = nullptr;
    size_ = 0;
}

FileReader::FileReader(const std::string& path, bool direct) { open(path, direct); }

FileReader::FileReader(FileReader&& o) noexcept
    : fd_(o.fd_), direct_(o.direct_), size_(o.size_), path_(std::move(o.path_)) {
    o.fd_ = -1;
}

FileReader& FileReader::operator=(FileReader&& o) noexcept {
    if (this != &o) {
        close();
        fd_ = o.fd_;
        direct_ = o.direct_;
        size_ = o.size_;
        path_ = std::move(o.path_);
        o.fd_ = -1;
    }
    return *this;
}

FileReader::~FileReader() { close(); }

void FileReader::open(const std::string& path, bool direct) {
    close();
    path_ = path;
    direct_ = false;
    if (direct) {
        fd_ = ::open(path.c_str(), O_RDONLY | O_DIRECT);
        if (fd_ >= 0) {
            direct_ = true;
        } else {
            VJ_WARN("O_DIRECT unavailable for %s (%s), using buffered reads", path.c_str(),
                    std::strerror(errno));
        }
    }
    if (fd_ < 0) fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ < 0) raise(ErrorCode::IoFailure, "cannot open " + path + ": " + std::strerror(errno));
    struct stat st {};
    if (fstat(fd_, &st) != 0) raise(ErrorCode::IoFailure, "fstat failed: " + path);
    size_ = static_cast<uint64_t>(st.st_size);
}

void FileReader::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void FileReader::pread_exact(void* buf, uint64_t len, uint64_t offset) const {
    auto* p = static_cast<uint8_t*>(buf);
    uint64_t done = 0;
    while (done < len) {
        ssize_t r = ::pread(fd_, p + done, len - done, static_cast<off_t>(offset + done));
        if (r < 0) {
            if (errno == EINTR) continue;
            raise(ErrorCode::IoFailure,
                  "pread failed on " + path_ + ": " + std::strerror(errno));
        }
        if (r == 0) {
            raise(ErrorCode::IoFailure, "unexpected EOF on " + path_ + " at offset " +
                                            std::to_string(offset + done));
        }
        done += static_cast<uint64_t>(r);
    }
}

FileWriter::~FileWriter() {
    try {
        close();
    } catch (...) {
        // destructor must not throw; close() explicitly to observe errors
    }
}

void FileWriter::open(const std::string& path, size_t buffer_bytes) {
    close();
    path_ = path;
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd_ < 0) raise(ErrorCode::IoFailure, "cannot create " + path + ": " + std::strerror(errno));
    buf_.resize(buffer_bytes);
    buf_used_ = 0;
    append_offset_ = 0;
    bytes_written_ = 0;
}

void FileWriter::append(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    while (len > 0) {
        size_t space = buf_.size() - buf_used_;
        size_t take = std::min(space, len);
        std::memcpy(buf_.data() + buf_used_, p, take);
        buf_used_ += take;
        p += take;
        len -= take;
        append_offset_ += take;
        if (buf_used_ == buf_.size()) flush();
    }
}

void FileWriter::pwrite_exact(const void* data, size_t len, uint64_t offset) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t done = 0;
    while (done < len) {
        ssize_t w = ::pwrite(fd_, p + done, len - done, static_cast<off_t>(offset + done));
        if (w < 0) {
            if (errno == EINTR) continue;
            raise(ErrorCode::IoFailure, "pwrite failed on " + path_ + ": " + std::strerror(errno));
        }
        done += static_cast<uint64_t>(w);
    }
    bytes_written_ += len;
}

void FileWriter::flush() {
    if (buf_used_ == 0) return;
    uint64_t off = append_offset_ - buf_used_;
    size_t len = buf_used_;
    buf_used_ = 0;
    pwrite_exact(buf_.data(), len, off);
}

void FileWriter::close() {
    if (fd_ < 0) return;
    flush();
    int fd = fd_;
    fd_ = -1;
    if (::close(fd) != 0) raise(ErrorCode::IoFailure, "close failed on " + path_);
}

bool file_exists(const std::string& path) {
    struct stat st {};
    return stat(path.c_str(), &st) == 0;
}

uint64_t file_size(const std::string& path) {
    struct stat st {};
    if (stat(path.c_str(), &st) != 0) raise(ErrorCode::IoFailure, "stat failed: " + path);
    return static_cast<uint64_t>(st.st_size);
}

void remove_file_if_exists(const std::string& path) {
    if (::unlink(path.c_str()) != 0 && errno != ENOENT) {
        raise(ErrorCode::IoFailure, "unlink failed: " + path);
    }
}

void rename_file(const std::string& from, const std::string& to) {
    if (::rename(from.c_str(), to.c_str()) != 0) {
        raise(ErrorCode::IoFailure, "rename " + from + " -> " + to + ": " + std::strerror(errno));
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IoFailure, "cannot create " + path);
    out << content;
    if (!out) raise(ErrorCode::IoFailure, "write failed: " + path);
}

}  // namespace vecjoin
