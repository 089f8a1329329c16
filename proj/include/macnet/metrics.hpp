#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace macnet {

// K x K integer counts; rows index the true class, columns the
// predicted class.
struct ConfusionMatrix {
  std::int64_t k = 0;
  std::vector<std::int64_t> counts;  // row-major k*k

  explicit ConfusionMatrix(std::int64_t num_classes = 0)
      : k(num_classes), counts(static_cast<std::size_t>(num_classes * num_classes), 0) {}

  std::int64_t& at(std::int64_t true_class, std::int64_t pred_class) {
    return counts[static_cast<std::size_t>(true_class * k + pred_class)];
  }
  std::int64_t at(std::int64_t true_class, std::int64_t pred_class) const {
    return counts[static_cast<std::size_t>(true_class * k + pred_class)];
  }

  std::int64_t total() const;
  std::int64_t row_sum(std::int64_t true_class) const;
  std::int64_t col_sum(std::int64_t pred_class) const;

  // Elementwise addition; shard-merged results equal a single-threaded
  // accumulation exactly.
  void merge(const ConfusionMatrix& other);
};

// Per-class and macro-averaged evaluation statistics.
struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<std::int64_t> support;   // true instances per class
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double top1_accuracy = 0.0;
  double top5_accuracy = 0.0;
  ConfusionMatrix confusion;
};

// Fraction of samples whose true label is among the k most probable
// classes (ties broken by ascending class index).
double top_k_accuracy(const std::vector<std::vector<double>>& probabilities,
                      const std::vector<int>& labels, int k);

// Builds the full report from per-sample probability rows. Predicted
// label is the argmax (ties by ascending index). Classes with a zero
// denominator score 0 and still enter the macro averages. The top-5
// figure uses k = min(5, num_classes).
EvalReport compute_report(const std::vector<std::vector<double>>& probabilities,
                          const std::vector<int>& labels,
                          const std::vector<std::string>& class_names);

// Report serialization: per-class CSV, confusion CSV with class-name
// header row/column, and a summary text block.
void write_report_files(const EvalReport& report, const std::filesystem::path& dir);
std::string report_summary_text(const EvalReport& report);

}  // namespace macnet
