#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lire/common.hpp"

namespace lire {

// Fixed-size-block device emulation. Reads and writes are whole-block and a
// block write is atomic at block granularity. The file backing stands in for
// a raw NVMe namespace; reads from distinct offsets may be issued
// concurrently from any thread.
class BlockDevice {
  public:
    virtual ~BlockDevice() = default;

    virtual void read_block(std::uint64_t offset, std::span<std::uint8_t> out) = 0;
    virtual void write_block(std::uint64_t offset, std::span<const std::uint8_t> in) = 0;
    virtual void flush() {}
    // Whether overlapping reads from multiple threads can actually help;
    // memcpy-backed devices say no, real I/O says yes.
    virtual bool concurrent_reads_help() const { return false; }

    std::uint32_t block_size() const { return block_size_; }
    std::uint64_t block_count() const { return block_count_; }

    std::uint64_t reads() const { return reads_.load(std::memory_order_relaxed); }
    std::uint64_t writes() const { return writes_.load(std::memory_order_relaxed); }

  protected:
    BlockDevice(std::uint32_t block_size, std::uint64_t block_count)
        : block_size_(block_size), block_count_(block_count) {}

    void check(std::uint64_t offset, std::size_t len) const {
        if (offset >= block_count_) raise(ErrorCode::invalid_argument, "block offset out of range");
        if (len != block_size_) raise(ErrorCode::invalid_argument, "partial-block access");
    }

    std::uint32_t block_size_;
    std::uint64_t block_count_;
    std::atomic<std::uint64_t> reads_{0};
    std::atomic<std::uint64_t> writes_{0};
};

class MemBlockDevice final : public BlockDevice {
  public:
    MemBlockDevice(std::uint32_t block_size, std::uint64_t block_count);

    void read_block(std::uint64_t offset, std::span<std::uint8_t> out) override;
    void write_block(std::uint64_t offset, std::span<const std::uint8_t> in) override;

    // Observation hook invoked before each block write, for locality checks.
    void set_write_hook(std::function<void(std::uint64_t)> hook) { write_hook_ = std::move(hook); }

  private:
    std::vector<std::uint8_t> data_;
    std::function<void(std::uint64_t)> write_hook_;
};

// Single flat file of block_count blocks. Opens existing files when present
// (size must match), otherwise creates and pre-sizes the file.
class FileBlockDevice final : public BlockDevice {
  public:
    FileBlockDevice(const std::string& path, std::uint32_t block_size, std::uint64_t block_count);
    ~FileBlockDevice() override;

    void read_block(std::uint64_t offset, std::span<std::uint8_t> out) override;
    void write_block(std::uint64_t offset, std::span<const std::uint8_t> in) override;
    void flush() override;
    bool concurrent_reads_help() const override { return true; }

  private:
    int fd_ = -1;
};

}  // namespace lire
