#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "lire/config.hpp"
#include "lire/distance.hpp"
#include "lire/workload.hpp"

using namespace lire;

namespace {

// Independent exhaustive-scan oracle: full sort, no heap, separate code path
// from the library's TopK selection.
std::vector<VectorId> naive_knn(const std::map<VectorId, Vector>& data, const Vector& q,
                                std::size_t k) {
    std::vector<std::pair<float, VectorId>> all;
    for (const auto& [id, v] : data) {
        float d = 0.0f;
        for (std::size_t i = 0; i < q.size(); ++i) d += (q[i] - v[i]) * (q[i] - v[i]);
        all.emplace_back(d, id);
    }
    std::sort(all.begin(), all.end());
    std::vector<VectorId> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
    return out;
}

Vector rand_vec(Rng& rng, std::size_t dim) {
    Vector v(dim);
    for (float& f : v) f = float(rng.uniform(0.0, 100.0));
    return v;
}

}  // namespace

TEST_CASE("squared distance basics") {
    CHECK(squared_l2(Vector{0, 0}, Vector{0, 0}) == 0.0f);
    CHECK(squared_l2(Vector{0, 0}, Vector{3, 4}) == 25.0f);
    CHECK(squared_l2(Vector{1, 2, 3}, Vector{4, 6, 3}) == 25.0f);  // 9 + 16 + 0
    CHECK_THROWS_AS(squared_l2(Vector{1, 2}, Vector{1, 2, 3}), Error);
}

TEST_CASE("squared distance is a symmetric positive form") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        Vector a = rand_vec(rng, 8), b = rand_vec(rng, 8);
        CHECK(squared_l2(a, b) == squared_l2(b, a));
        CHECK(squared_l2(a, a) == 0.0f);
        if (a != b) CHECK(squared_l2(a, b) > 0.0f);
    }
}

TEST_CASE("recall_at_k") {
    CHECK(recall_at_k({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(recall_at_k({4, 5, 6}, {1, 2, 3}) == 0.0);
    CHECK(recall_at_k({1, 2, 9, 10}, {1, 2, 3, 4}) == 0.5);
    CHECK_THROWS_AS(recall_at_k({1}, {}), Error);
}

TEST_CASE("recall is monotone in added ground-truth hits") {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        std::vector<VectorId> truth{1, 2, 3, 4, 5};
        std::vector<VectorId> result;
        for (VectorId id = 6; id < 6 + rng.below(4); ++id) result.push_back(id);
        double before = recall_at_k(result, truth);
        result.push_back(truth[std::size_t(rng.below(truth.size()))]);
        CHECK(recall_at_k(result, truth) >= before);
    }
}

TEST_CASE("brute force knn basics") {
    std::map<VectorId, Vector> data{{1, {0, 0}}, {2, {5, 5}}};
    CHECK(brute_force_knn(data, {1, 0}, 1) == std::vector<VectorId>{1});

    std::map<VectorId, Vector> tie{{1, {0, 0}}, {2, {0, 2}}};
    CHECK(brute_force_knn(tie, {0, 1}, 2) == std::vector<VectorId>{1, 2});  // tie -> lower id

    CHECK_THROWS_AS(brute_force_knn(tie, {0, 1}, 3), Error);
}

TEST_CASE("brute force knn matches an independent exhaustive scan") {
    Rng rng(3);
    std::map<VectorId, Vector> data;
    for (VectorId id = 1; id <= 100; ++id) data[id] = rand_vec(rng, 8);
    for (int i = 0; i < 50; ++i) {
        Vector q = rand_vec(rng, 8);
        CHECK(brute_force_knn(data, q, 10) == naive_knn(data, q, 10));
    }
}

TEST_CASE("batch knn kernels agree with the single-query path") {
    Rng rng(4);
    const std::size_t n = 500, dim = 8;
    std::vector<VectorId> ids(n);
    std::vector<float> flat(n * dim);
    std::map<VectorId, Vector> data;
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = VectorId(i + 1);
        Vector v = rand_vec(rng, dim);
        std::copy(v.begin(), v.end(), flat.begin() + i * dim);
        data[ids[i]] = v;
    }
    std::vector<Vector> queries;
    for (int i = 0; i < 32; ++i) queries.push_back(rand_vec(rng, dim));

    auto parallel = exact_knn_batch(ids, flat, dim, queries, 5);
    auto serial = exact_knn_batch_serial(ids, flat, dim, queries, 5);
    REQUIRE(parallel == serial);
    for (std::size_t i = 0; i < queries.size(); ++i)
        CHECK(parallel[i] == brute_force_knn(data, queries[i], 5));
}

TEST_CASE("version entry semantics") {
    VersionEntry e;
    CHECK(e.version() == 0);
    CHECK(!e.deleted());
    e.raw = 0x80 | 5;
    CHECK(e.version() == 5);
    CHECK(e.deleted());

    CHECK(VersionEntry::next_version(0) == 1);
    CHECK(VersionEntry::next_version(127) == 0);  // 7-bit wrap

    // v_new newer than v_old iff modular distance in [1, 64]
    CHECK(VersionEntry::newer(1, 0));
    CHECK(VersionEntry::newer(0, 127));
    CHECK(VersionEntry::newer(64, 0));
    CHECK(!VersionEntry::newer(65, 0));
    CHECK(!VersionEntry::newer(0, 0));
    CHECK(!VersionEntry::newer(0, 1));
}

TEST_CASE("config validation") {
    IndexConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.entry_width() == 8 + 1 + 16 * 4);

    IndexConfig bad = cfg;
    bad.merge_threshold = bad.split_limit;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = cfg;
    bad.replica_count = bad.nprobe + 1;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = cfg;
    bad.block_size = 1000;  // not a power of two
    CHECK_THROWS_AS(bad.validate(), Error);

    IndexConfig u8 = cfg;
    u8.element_type = ElementType::uint8;
    CHECK(u8.entry_width() == 8 + 1 + 16);
}

TEST_CASE("rng streams are reproducible") {
    Rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) CHECK(a.next() == b.next());
}
