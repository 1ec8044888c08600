#pragma once

#include <span>

#include "core/tensor.hpp"

namespace metalora {

// K-nearest-neighbor vote over Euclidean distance.  Deterministic total
// order: neighbors rank by (distance, train index); a vote tie goes to the
// class with the smallest summed distance among the K, then to the smallest
// class index.
std::size_t knn_predict(std::span<const DenseTensor> train, std::span<const std::size_t> labels,
                        const DenseTensor& query, std::size_t k);

double knn_accuracy(std::span<const DenseTensor> train, std::span<const std::size_t> train_labels,
                    std::span<const DenseTensor> test, std::span<const std::size_t> test_labels,
                    std::size_t k);

}  // namespace metalora
