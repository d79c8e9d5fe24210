#include "lire/distance.hpp"

#include <algorithm>
#include <unordered_set>

namespace lire {

float squared_l2(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) raise(ErrorCode::invalid_argument, "dimension mismatch");
    float acc = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) {
        float d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double recall_at_k(const std::vector<VectorId>& result, const std::vector<VectorId>& ground_truth) {
    if (ground_truth.empty()) raise(ErrorCode::invalid_argument, "empty ground truth");
    std::unordered_set<VectorId> truth(ground_truth.begin(), ground_truth.end());
    std::size_t hits = 0;
    for (VectorId id : result) hits += truth.count(id);
    return double(hits) / double(truth.size());
}

void TopK::offer(float dist, VectorId id) {
    auto cmp = std::less<std::pair<float, VectorId>>{};
    if (heap_.size() < k_) {
        heap_.emplace_back(dist, id);
        std::push_heap(heap_.begin(), heap_.end(), cmp);
        return;
    }
    if (std::make_pair(dist, id) < heap_.front()) {
        std::pop_heap(heap_.begin(), heap_.end(), cmp);
        heap_.back() = {dist, id};
        std::push_heap(heap_.begin(), heap_.end(), cmp);
    }
}

bool TopK::would_accept(float dist, VectorId id) const {
    return heap_.size() < k_ || std::make_pair(dist, id) < heap_.front();
}

std::vector<std::pair<float, VectorId>> TopK::take() {
    std::sort(heap_.begin(), heap_.end());
    return std::move(heap_);
}

std::vector<VectorId> brute_force_knn(const std::map<VectorId, Vector>& dataset, const Vector& q,
                                      std::size_t k) {
    if (k > dataset.size()) raise(ErrorCode::invalid_argument, "k exceeds dataset size");
    TopK top(k);
    for (const auto& [id, v] : dataset) top.offer(squared_l2(q, v), id);
    auto pairs = top.take();
    std::vector<VectorId> out;
    out.reserve(pairs.size());
    for (auto& [d, id] : pairs) out.push_back(id);
    return out;
}

std::vector<VectorId> exact_knn(std::span<const VectorId> ids, std::span<const float> data,
                                std::size_t dim, std::span<const float> q, std::size_t k) {
    if (k > ids.size()) raise(ErrorCode::invalid_argument, "k exceeds dataset size");
    TopK top(k);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        float d = squared_l2(q, data.subspan(i * dim, dim));
        top.offer(d, ids[i]);
    }
    auto pairs = top.take();
    std::vector<VectorId> out;
    out.reserve(pairs.size());
    for (auto& [d, id] : pairs) out.push_back(id);
    return out;
}

std::vector<std::vector<VectorId>> exact_knn_batch(std::span<const VectorId> ids,
                                                   std::span<const float> data, std::size_t dim,
                                                   const std::vector<Vector>& queries,
                                                   std::size_t k) {
    std::vector<std::vector<VectorId>> out(queries.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (long i = 0; i < long(queries.size()); ++i) {
        out[i] = exact_knn(ids, data, dim, queries[i], k);
    }
    return out;
}

std::vector<std::vector<VectorId>> exact_knn_batch_serial(std::span<const VectorId> ids,
                                                          std::span<const float> data,
                                                          std::size_t dim,
                                                          const std::vector<Vector>& queries,
                                                          std::size_t k) {
    std::vector<std::vector<VectorId>> out(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) out[i] = exact_knn(ids, data, dim, queries[i], k);
    return out;
}

}  // namespace lire
