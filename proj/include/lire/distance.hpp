#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "lire/common.hpp"

namespace lire {

// Squared Euclidean distance. Ordering-equivalent to L2 and cheaper; every
// distance in this codebase is the squared form.
float squared_l2(std::span<const float> a, std::span<const float> b);

inline float squared_l2(const Vector& a, const Vector& b) {
    return squared_l2(std::span<const float>(a), std::span<const float>(b));
}

// |result ∩ ground_truth| / |ground_truth|. Throws on empty ground truth.
double recall_at_k(const std::vector<VectorId>& result, const std::vector<VectorId>& ground_truth);

// The k ids nearest to q, ascending by (distance, id). Ground-truth oracle
// for every recall measurement. Throws when k exceeds the dataset size.
std::vector<VectorId> brute_force_knn(const std::map<VectorId, Vector>& dataset, const Vector& q,
                                      std::size_t k);

// Flat-layout variant used by the hot paths: ids[i] owns row i of data
// (n rows of dim floats).
std::vector<VectorId> exact_knn(std::span<const VectorId> ids, std::span<const float> data,
                                std::size_t dim, std::span<const float> q, std::size_t k);

// Batch form answering many queries over one dataset. The parallel kernel
// splits queries across OpenMP threads; each query's scan stays sequential so
// results are bit-identical to the serial kernel, which is kept as the
// reference for tests and the kernel benchmark.
std::vector<std::vector<VectorId>> exact_knn_batch(std::span<const VectorId> ids,
                                                   std::span<const float> data, std::size_t dim,
                                                   const std::vector<Vector>& queries, std::size_t k);
std::vector<std::vector<VectorId>> exact_knn_batch_serial(std::span<const VectorId> ids,
                                                          std::span<const float> data, std::size_t dim,
                                                          const std::vector<Vector>& queries,
                                                          std::size_t k);

// Bounded top-k accumulator ordered by (distance, id).
class TopK {
  public:
    explicit TopK(std::size_t k) : k_(k) {}

    void offer(float dist, VectorId id);
    // Sorted ascending by (distance, id).
    std::vector<std::pair<float, VectorId>> take();
    std::size_t size() const { return heap_.size(); }
    bool would_accept(float dist, VectorId id) const;

  private:
    std::size_t k_;
    std::vector<std::pair<float, VectorId>> heap_;  // max-heap on (dist, id)
};

}  // namespace lire
