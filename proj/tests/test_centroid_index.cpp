#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "lire/centroid_index.hpp"
#include "lire/workload.hpp"

using namespace lire;

namespace {

Vector rand_vec(Rng& rng, std::size_t dim) {
    Vector v(dim);
    for (float& f : v) f = float(rng.uniform(0.0, 100.0));
    return v;
}

std::vector<PostingId> ids_of(const std::vector<std::pair<PostingId, float>>& hits) {
    std::vector<PostingId> out;
    for (auto& [pid, d] : hits) out.push_back(pid);
    return out;
}

}  // namespace

TEST_CASE("add and search a single centroid") {
    CentroidIndex idx;
    idx.add(7, {1, 1});
    auto hits = idx.search({1, 1}, 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].first == 7);
    CHECK(hits[0].second == 0.0f);
    CHECK_THROWS_AS(idx.add(7, {2, 2}), Error);
}

TEST_CASE("remove semantics") {
    CentroidIndex idx;
    idx.add(7, {1, 1});
    idx.remove(7);
    CHECK(idx.search({1, 1}, 1).empty());
    CHECK_THROWS_AS(idx.remove(9), Error);
    CHECK_THROWS_AS(idx.remove(7), Error);

    // a removed id may be re-added; the tombstone stays untouched
    idx.add(7, {3, 3});
    CHECK(idx.is_live(7));

    CentroidIndex ten;
    for (PostingId p = 1; p <= 10; ++p) ten.add(p, {float(p), 0});
    ten.remove(2);
    ten.remove(4);
    auto hits = ids_of(ten.search({0, 0}, 10));
    CHECK(hits.size() == 8);
    for (PostingId p : hits) {
        CHECK(p != 2);
        CHECK(p != 4);
    }
}

TEST_CASE("search equals brute force over the live set") {
    Rng rng(5);
    CentroidIndex idx;
    std::map<VectorId, Vector> live;
    for (PostingId p = 1; p <= 500; ++p) {
        Vector c = rand_vec(rng, 8);
        idx.add(p, c);
        live[p] = c;
    }
    for (int i = 0; i < 30; ++i) {
        Vector q = rand_vec(rng, 8);
        CHECK(ids_of(idx.search(q, 64)) == brute_force_knn(live, q, 64));
    }
}

TEST_CASE("equidistant centroids break ties by posting id") {
    CentroidIndex idx;
    idx.add(9, {2, 0});
    idx.add(4, {-2, 0});
    auto hits = idx.search({0, 0}, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].first == 4);
    CHECK(hits[1].first == 9);
}

TEST_CASE("search over empty index returns empty") {
    CentroidIndex idx;
    CHECK(idx.search({0, 0}, 5).empty());
}

TEST_CASE("replace publishes removals and additions together") {
    CentroidIndex idx;
    idx.add(1, {0, 0});
    idx.replace({1}, {{2, {1, 0}}, {3, {-1, 0}}});
    CHECK(!idx.is_live(1));
    CHECK(idx.is_live(2));
    CHECK(idx.is_live(3));
    CHECK(idx.live_count() == 2);
}

TEST_CASE("snapshot round trip") {
    CentroidIndex empty;
    auto bytes = empty.snapshot();
    CentroidIndex restored;
    restored.restore(bytes);
    CHECK(restored.live_count() == 0);

    Rng rng(6);
    CentroidIndex idx;
    for (PostingId p = 1; p <= 100; ++p) idx.add(p, rand_vec(rng, 8));
    for (PostingId p = 10; p <= 30; p += 5) idx.remove(p);

    CentroidIndex back;
    back.restore(idx.snapshot());
    CHECK(back.live_count() == idx.live_count());
    for (int i = 0; i < 100; ++i) {
        Vector q = rand_vec(rng, 8);
        CHECK(back.search(q, 10) == idx.search(q, 10));
    }
}

TEST_CASE("corrupt snapshot bytes are rejected") {
    CentroidIndex idx;
    idx.add(1, {1, 2});
    auto bytes = idx.snapshot();

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CentroidIndex t;
    CHECK_THROWS_AS(t.restore(truncated), Error);

    auto flipped = bytes;
    flipped[10] ^= 0xFF;
    CHECK_THROWS_AS(t.restore(flipped), Error);
}
