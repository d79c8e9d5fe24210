#include "lire/wal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>

namespace lire {

WalWriter::WalWriter(std::string path, IndexConfig cfg, std::uint64_t next_sequence, bool sync_each)
    : path_(std::move(path)), cfg_(cfg), next_seq_(next_sequence), sync_each_(sync_each) {
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) raise(ErrorCode::io_error, "open wal " + path_ + ": " + std::strerror(errno));
}

WalWriter::~WalWriter() {
    if (fd_ >= 0) ::close(fd_);
}

void WalWriter::write_record(const WalRecord& rec) {
    std::vector<std::uint8_t> buf;
    put_u64(buf, rec.sequence);
    put_u8(buf, static_cast<std::uint8_t>(rec.op));
    put_u64(buf, rec.vector_id);
    if (rec.op == WalRecord::Op::insert) {
        put_u32(buf, std::uint32_t(rec.payload.size()));
        if (cfg_.element_type == ElementType::float32) {
            for (float f : rec.payload) put_f32(buf, f);
        } else {
            for (float f : rec.payload) put_u8(buf, static_cast<std::uint8_t>(std::lround(f)));
        }
    } else {
        put_u32(buf, 0);
    }
    put_u32(buf, crc32(buf.data(), buf.size()));

    ssize_t n = ::write(fd_, buf.data(), buf.size());
    if (n != ssize_t(buf.size())) raise(ErrorCode::io_error, "short wal write");
    if (sync_each_ && ::fdatasync(fd_) != 0) raise(ErrorCode::io_error, "wal fdatasync failed");
}

void WalWriter::append(const WalRecord& rec) {
    std::lock_guard lk(mu_);
    if (rec.sequence != next_seq_)
        raise(ErrorCode::invalid_state, "wal sequence gap: expected " + std::to_string(next_seq_) +
                                            ", got " + std::to_string(rec.sequence));
    write_record(rec);
    ++next_seq_;
}

void WalWriter::log_insert(VectorId id, const Vector& v) {
    std::lock_guard lk(mu_);
    WalRecord rec{next_seq_, WalRecord::Op::insert, id, v};
    write_record(rec);
    ++next_seq_;
}

void WalWriter::log_delete(VectorId id) {
    std::lock_guard lk(mu_);
    WalRecord rec{next_seq_, WalRecord::Op::erase, id, {}};
    write_record(rec);
    ++next_seq_;
}

std::uint64_t WalWriter::next_sequence() const {
    std::lock_guard lk(mu_);
    return next_seq_;
}

void WalWriter::truncate_below(std::uint64_t watermark) {
    std::lock_guard lk(mu_);
    if (watermark < next_seq_)
        raise(ErrorCode::invalid_state, "watermark would keep live records in a reset file");
    if (::ftruncate(fd_, 0) != 0) raise(ErrorCode::io_error, "wal truncate failed");
}

WalReadResult read_wal(const std::string& path, const IndexConfig& cfg) {
    WalReadResult out;
    if (!std::filesystem::exists(path)) return out;

    std::vector<std::uint8_t> bytes;
    {
        int fd = ::open(path.c_str(), O_RDONLY);
        if (fd < 0) raise(ErrorCode::io_error, "open wal " + path);
        auto size = std::filesystem::file_size(path);
        bytes.resize(size);
        std::size_t got = 0;
        while (got < size) {
            ssize_t n = ::read(fd, bytes.data() + got, size - got);
            if (n <= 0) {
                ::close(fd);
                raise(ErrorCode::io_error, "wal read failed");
            }
            got += std::size_t(n);
        }
        ::close(fd);
    }

    const std::size_t header = 8 + 1 + 8 + 4;
    const std::size_t elem = element_width(cfg.element_type);
    std::size_t pos = 0;
    std::uint64_t prev_seq = 0;
    bool first = true;
    while (pos + header + 4 <= bytes.size()) {
        ByteReader r(bytes.data() + pos, bytes.size() - pos);
        WalRecord rec;
        rec.sequence = r.u64();
        rec.op = static_cast<WalRecord::Op>(r.u8());
        rec.vector_id = r.u64();
        std::uint32_t dim = r.u32();
        if (rec.op == WalRecord::Op::insert && dim != cfg.dim) {
            out.tail_discarded = true;
            break;
        }
        if (rec.op == WalRecord::Op::erase && dim != 0) {
            out.tail_discarded = true;
            break;
        }
        std::size_t body = header + std::size_t(dim) * elem;
        if (pos + body + 4 > bytes.size()) {
            out.tail_discarded = true;  // torn tail
            break;
        }
        rec.payload.resize(dim);
        if (cfg.element_type == ElementType::float32) {
            for (std::uint32_t d = 0; d < dim; ++d) rec.payload[d] = r.f32();
        } else {
            for (std::uint32_t d = 0; d < dim; ++d) rec.payload[d] = float(r.u8());
        }
        std::uint32_t stored = r.u32();
        if (stored != crc32(bytes.data() + pos, body)) {
            out.tail_discarded = true;
            break;
        }
        if (!first && rec.sequence != prev_seq + 1) {
            out.tail_discarded = true;
            break;
        }
        first = false;
        prev_seq = rec.sequence;
        out.records.push_back(std::move(rec));
        pos += body + 4;
    }
    if (pos < bytes.size() && !out.tail_discarded) out.tail_discarded = true;
    return out;
}

}  // namespace lire
