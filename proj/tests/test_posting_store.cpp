#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "lire/posting_store.hpp"
#include "lire/workload.hpp"

using namespace lire;

namespace {

struct Fixture {
    IndexConfig cfg;
    std::shared_ptr<MemBlockDevice> device;
    PostingStore store;

    explicit Fixture(std::uint64_t blocks = 256, std::uint32_t dim = 16)
        : cfg(make_cfg(dim)), device(std::make_shared<MemBlockDevice>(cfg.block_size, blocks)),
          store(device, cfg) {}

    static IndexConfig make_cfg(std::uint32_t dim) {
        IndexConfig c;
        c.dim = dim;
        return c;
    }

    PostingEntry entry(VectorId id, std::uint8_t version = 0) const {
        Vector v(cfg.dim);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(id * 10 + i);
        return PostingEntry{id, version, v};
    }

    std::vector<PostingEntry> entries(VectorId first, std::size_t n) const {
        std::vector<PostingEntry> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(entry(first + i));
        return out;
    }
};

}  // namespace

TEST_CASE("put/get round trip") {
    Fixture f;
    auto es = f.entries(1, 3);
    f.store.put(5, es);
    CHECK(f.store.get(5) == es);
    CHECK_THROWS_AS(f.store.get(99), Error);
}

TEST_CASE("multi-block posting preserves append order") {
    Fixture f;
    auto es = f.entries(1, 250);  // 250 * 73 bytes spans 4+ blocks
    f.store.put(7, es);
    CHECK(f.store.block_count_of(7) >= 4);
    CHECK(f.store.get(7) == es);
}

TEST_CASE("append after an exactly full tail block reads nothing") {
    // uint8 dim 7 gives a 16-byte entry: 256 entries fill a 4096 block exactly
    IndexConfig cfg;
    cfg.dim = 7;
    cfg.element_type = ElementType::uint8;
    REQUIRE(cfg.block_size % cfg.entry_width() == 0);
    auto device = std::make_shared<MemBlockDevice>(cfg.block_size, 64);
    PostingStore store(device, cfg);

    std::vector<PostingEntry> full;
    for (VectorId id = 1; id <= 256; ++id) full.push_back({id, 0, Vector(7, float(id % 250))});
    store.put(1, full);
    CHECK(store.block_count_of(1) == 1);

    auto io = store.append(1, {{999, 0, Vector(7, 3.0f)}});
    CHECK(io.existing_block_reads == 0);
    CHECK(io.blocks_written == 1);
    CHECK(io.blocks_released == 0);
    CHECK(store.get(1).size() == 257);
    CHECK(store.block_count_of(1) == 2);
}

TEST_CASE("parallel_get equals per-id gets, misses named") {
    Fixture f(1024);
    Rng rng(1);
    std::vector<PostingId> pids;
    for (PostingId p = 0; p < 64; ++p) {
        f.store.put(p, f.entries(p * 100 + 1, 1 + rng.below(6)));
        pids.push_back(p);
    }
    auto res = f.store.parallel_get(pids);
    REQUIRE(res.missing.empty());
    for (std::size_t i = 0; i < pids.size(); ++i) {
        REQUIRE(res.postings[i].has_value());
        CHECK(*res.postings[i] == f.store.get(pids[i]));
    }

    CHECK(f.store.parallel_get({}).postings.empty());

    auto mixed = f.store.parallel_get({1, 999, 2});
    CHECK(mixed.postings[0].has_value());
    CHECK(!mixed.postings[1].has_value());
    CHECK(mixed.postings[2].has_value());
    REQUIRE(mixed.missing.size() == 1);
    CHECK(mixed.missing[0].posting_id == 999);
}

TEST_CASE("append to a full last block reads nothing") {
    Fixture f;
    // 56 entries of 73 bytes fill a 4096 block exactly? 56*73=4088 < 4096, so
    // force a full block with a crafted count: use dim so entry width divides
    // the block. dim=14 gives width 65... simpler: fill until block boundary
    // is crossed and measure the boundary case explicitly below.
    const std::size_t per_block = f.cfg.block_size / f.cfg.entry_width();
    (void)per_block;

    // empty append is a no-op with zero I/O
    f.store.put(1, f.entries(1, 4));
    auto before_reads = f.device->reads();
    auto before_writes = f.device->writes();
    auto io = f.store.append(1, {});
    CHECK(io.blocks_written == 0);
    CHECK(f.device->reads() == before_reads);
    CHECK(f.device->writes() == before_writes);
}

TEST_CASE("append locality: at most one existing-block read, no rewrites") {
    // dim chosen so the entry width (8+1+8*4 = 41) never divides the block;
    // tail blocks are usually partial.
    Fixture f(2048, 8);
    f.store.put(3, f.entries(1, 10));

    // Writes must only land on blocks not referenced by any live map entry.
    f.device->set_write_hook([&](std::uint64_t offset) {
        CHECK(!f.store.block_referenced(offset));
    });

    Rng rng(2);
    VectorId next = 100;
    for (int i = 0; i < 200; ++i) {
        auto before = f.store.blocks_of(3);
        auto io = f.store.append(3, f.entries(next, 1 + rng.below(3)));
        next += 3;
        CHECK(io.existing_block_reads <= 1);
        auto after = f.store.blocks_of(3);
        // all blocks except the replaced tail keep their offsets
        std::size_t kept = before.size() - (io.blocks_released ? 1 : 0);
        REQUIRE(after.size() >= kept);
        for (std::size_t b = 0; b < kept; ++b) CHECK(after[b] == before[b]);
    }
    f.device->set_write_hook(nullptr);
    f.store.verify_conservation();
}

TEST_CASE("append on a partially filled tail releases the old tail block") {
    Fixture f;
    f.store.put(2, f.entries(1, 4));  // partial single block
    auto pre_before = f.store.pre_release_blocks();
    auto io = f.store.append(2, f.entries(50, 1));
    CHECK(io.existing_block_reads == 1);
    CHECK(io.blocks_written == 1);
    CHECK(io.blocks_released == 1);
    CHECK(f.store.pre_release_blocks() == pre_before + 1);
    CHECK(io.resulting_entry_count == 5);
    CHECK(f.store.get(2).size() == 5);
}

TEST_CASE("put over an existing posting replaces contents and releases blocks") {
    Fixture f;
    f.store.put(9, f.entries(1, 40));
    auto old_blocks = f.store.block_count_of(9);
    auto pre_before = f.store.pre_release_blocks();
    auto fresh = f.entries(500, 2);
    f.store.put(9, fresh);
    CHECK(f.store.get(9) == fresh);
    CHECK(f.store.pre_release_blocks() == pre_before + old_blocks);
}

TEST_CASE("out of space leaves prior contents intact") {
    Fixture f(4);  // tiny device
    auto small = f.entries(1, 2);
    f.store.put(1, small);
    CHECK_THROWS_AS(f.store.put(2, f.entries(10, 500)), Error);
    CHECK(f.store.get(1) == small);
    CHECK_THROWS_AS(f.store.get(2), Error);
    f.store.verify_conservation();
}

TEST_CASE("delete moves blocks to pre-release") {
    Fixture f;
    f.store.put(4, f.entries(1, 100));
    auto blocks = f.store.block_count_of(4);
    auto pre_before = f.store.pre_release_blocks();
    f.store.delete_posting(4);
    CHECK_THROWS_AS(f.store.get(4), Error);
    CHECK(f.store.pre_release_blocks() == pre_before + blocks);
    CHECK_THROWS_AS(f.store.delete_posting(4), Error);

    // same id behaves as a fresh posting afterwards
    auto fresh = f.entries(900, 1);
    f.store.put(4, fresh);
    CHECK(f.store.get(4) == fresh);
}

TEST_CASE("snapshot round trip restores identical reads") {
    Fixture f;
    Rng rng(3);
    for (PostingId p = 0; p < 20; ++p) f.store.put(p, f.entries(p * 50 + 1, 1 + rng.below(8)));
    auto bytes = f.store.snapshot();

    PostingStore back(f.device, f.cfg);
    back.restore(bytes);
    for (PostingId p = 0; p < 20; ++p) CHECK(back.get(p) == f.store.get(p));
    back.verify_conservation();
}

TEST_CASE("blocks released after a snapshot stay intact for that snapshot") {
    Fixture f;
    auto original = f.entries(1, 30);
    f.store.put(1, original);
    auto snap = f.store.snapshot();

    // Overwrites and appends after the snapshot must not recycle the old
    // blocks until promote_pre_release runs.
    f.store.put(1, f.entries(200, 30));
    for (int i = 0; i < 10; ++i) f.store.put(PostingId(50 + i), f.entries(400 + i * 10, 8));

    PostingStore back(f.device, f.cfg);
    back.restore(snap);
    CHECK(back.get(1) == original);
}

TEST_CASE("promote_pre_release is a no-op when empty and recycles otherwise") {
    Fixture f;
    auto free0 = f.store.free_blocks();
    f.store.promote_pre_release();
    CHECK(f.store.free_blocks() == free0);

    f.store.put(1, f.entries(1, 10));
    f.store.delete_posting(1);
    auto pre = f.store.pre_release_blocks();
    CHECK(pre > 0);
    auto free1 = f.store.free_blocks();
    f.store.promote_pre_release();
    CHECK(f.store.pre_release_blocks() == 0);
    CHECK(f.store.free_blocks() == free1 + pre);
    f.store.verify_conservation();
}

TEST_CASE("block conservation holds under random op sequences") {
    Fixture f(512);
    Rng rng(4);
    VectorId next = 1;
    for (int step = 0; step < 300; ++step) {
        PostingId pid = rng.below(12);
        switch (rng.below(4)) {
            case 0:
                f.store.put(pid, f.entries(next, 1 + rng.below(10)));
                next += 10;
                break;
            case 1:
                if (f.store.exists(pid)) {
                    f.store.append(pid, f.entries(next, 1 + rng.below(4)));
                    next += 4;
                }
                break;
            case 2:
                if (f.store.exists(pid)) f.store.delete_posting(pid);
                break;
            case 3:
                if (rng.below(4) == 0) f.store.promote_pre_release();
                break;
        }
        f.store.verify_conservation();
    }
}
