#include "lire/block_device.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace lire {

MemBlockDevice::MemBlockDevice(std::uint32_t block_size, std::uint64_t block_count)
    : BlockDevice(block_size, block_count), data_(std::size_t(block_size) * block_count, 0) {}

void MemBlockDevice::read_block(std::uint64_t offset, std::span<std::uint8_t> out) {
    check(offset, out.size());
    std::memcpy(out.data(), data_.data() + offset * block_size_, block_size_);
    reads_.fetch_add(1, std::memory_order_relaxed);
}

void MemBlockDevice::write_block(std::uint64_t offset, std::span<const std::uint8_t> in) {
    check(offset, in.size());
    if (write_hook_) write_hook_(offset);
    std::memcpy(data_.data() + offset * block_size_, in.data(), block_size_);
    writes_.fetch_add(1, std::memory_order_relaxed);
}

FileBlockDevice::FileBlockDevice(const std::string& path, std::uint32_t block_size,
                                 std::uint64_t block_count)
    : BlockDevice(block_size, block_count) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) raise(ErrorCode::io_error, "open " + path + ": " + std::strerror(errno));
    off_t want = off_t(block_size) * off_t(block_count);
    struct stat st{};
    if (::fstat(fd_, &st) != 0) raise(ErrorCode::io_error, "fstat " + path);
    if (st.st_size == 0) {
        if (::ftruncate(fd_, want) != 0) raise(ErrorCode::io_error, "ftruncate " + path);
    } else if (st.st_size != want) {
        raise(ErrorCode::invalid_argument, "device file size mismatch: " + path);
    }
}

FileBlockDevice::~FileBlockDevice() {
    if (fd_ >= 0) ::close(fd_);
}

void FileBlockDevice::read_block(std::uint64_t offset, std::span<std::uint8_t> out) {
    check(offset, out.size());
    ssize_t n = ::pread(fd_, out.data(), block_size_, off_t(offset) * block_size_);
    if (n != ssize_t(block_size_)) raise(ErrorCode::io_error, "short block read");
    reads_.fetch_add(1, std::memory_order_relaxed);
}

void FileBlockDevice::write_block(std::uint64_t offset, std::span<const std::uint8_t> in) {
    check(offset, in.size());
    ssize_t n = ::pwrite(fd_, in.data(), block_size_, off_t(offset) * block_size_);
    if (n != ssize_t(block_size_)) raise(ErrorCode::io_error, "short block write");
    writes_.fetch_add(1, std::memory_order_relaxed);
}

void FileBlockDevice::flush() {
    if (::fdatasync(fd_) != 0) raise(ErrorCode::io_error, "fdatasync failed");
}

}  // namespace lire
