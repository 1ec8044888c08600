#include "core/knn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace metalora {
namespace {

double euclidean(const DenseTensor& a, const DenseTensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(strf("knn: embedding shapes differ, ", shape_str(a.shape()), " vs ",
                          shape_str(b.shape())));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

std::size_t knn_predict(std::span<const DenseTensor> train, std::span<const std::size_t> labels,
                        const DenseTensor& query, std::size_t k) {
  if (train.empty()) throw ArgError("knn: empty train set");
  if (labels.size() != train.size()) throw ArgError("knn: train/label length mismatch");
  if (k == 0 || k > train.size()) {
    throw ArgError(strf("knn: k=", k, " outside [1, ", train.size(), "]"));
  }
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) dist.emplace_back(euclidean(train[i], query), i);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

  // class -> (votes, summed distance); std::map keeps class order for the
  // final tie-break.
  std::map<std::size_t, std::pair<std::size_t, double>> tally;
  for (std::size_t i = 0; i < k; ++i) {
    auto& [votes, total] = tally[labels[dist[i].second]];
    ++votes;
    total += dist[i].first;
  }
  std::size_t best_label = 0;
  std::size_t best_votes = 0;
  double best_total = 0.0;
  bool first = true;
  for (const auto& [label, vt] : tally) {
    const auto& [votes, total] = vt;
    const bool wins = first || votes > best_votes ||
                      (votes == best_votes && total < best_total);
    if (wins) {
      best_label = label;
      best_votes = votes;
      best_total = total;
      first = false;
    }
  }
  return best_label;
}

double knn_accuracy(std::span<const DenseTensor> train, std::span<const std::size_t> train_labels,
                    std::span<const DenseTensor> test, std::span<const std::size_t> test_labels,
                    std::size_t k) {
  if (test.empty()) throw ArgError("knn: empty test set");
  if (test_labels.size() != test.size()) throw ArgError("knn: test/label length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (knn_predict(train, train_labels, test[i], k) == test_labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace metalora
