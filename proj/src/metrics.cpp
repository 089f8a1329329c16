#include "macnet/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "macnet/error.hpp"
#include "macnet/model.hpp"

namespace macnet {

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::row_sum(std::int64_t true_class) const {
  std::int64_t acc = 0;
  for (std::int64_t j = 0; j < k; ++j) acc += at(true_class, j);
  return acc;
}

std::int64_t ConfusionMatrix::col_sum(std::int64_t pred_class) const {
  std::int64_t acc = 0;
  for (std::int64_t i = 0; i < k; ++i) acc += at(i, pred_class);
  return acc;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k != k) throw ShapeError("confusion merge: class counts disagree");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

namespace {

void validate_predictions(const std::vector<std::vector<double>>& probabilities,
                          const std::vector<int>& labels) {
  if (probabilities.empty()) throw ContractError("metrics: empty prediction list");
  if (probabilities.size() != labels.size()) {
    throw ContractError("metrics: " + std::to_string(probabilities.size()) +
                        " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = probabilities[0].size();
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i].size() != k) {
      throw ContractError("metrics: ragged probability rows");
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ContractError("metrics: label " + std::to_string(labels[i]) + " outside [0," +
                          std::to_string(k) + ")");
    }
  }
}

}  // namespace

double top_k_accuracy(const std::vector<std::vector<double>>& probabilities,
                      const std::vector<int>& labels, int k) {
  validate_predictions(probabilities, labels);
  const int num_classes = static_cast<int>(probabilities[0].size());
  if (k < 1 || k > num_classes) {
    throw ContractError("top_k_accuracy: k=" + std::to_string(k) + " outside [1," +
                        std::to_string(num_classes) + "]");
  }
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const auto top = topk_indices(probabilities[i], k);
    if (std::find(top.begin(), top.end(), labels[i]) != top.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probabilities.size());
}

EvalReport compute_report(const std::vector<std::vector<double>>& probabilities,
                          const std::vector<int>& labels,
                          const std::vector<std::string>& class_names) {
  validate_predictions(probabilities, labels);
  const std::int64_t k = static_cast<std::int64_t>(class_names.size());
  if (static_cast<std::size_t>(k) != probabilities[0].size()) {
    throw ContractError("compute_report: " + std::to_string(class_names.size()) +
                        " class names for " + std::to_string(probabilities[0].size()) +
                        "-wide probability rows");
  }

  EvalReport report;
  report.class_names = class_names;
  report.confusion = ConfusionMatrix(k);
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const int pred = topk_indices(probabilities[i], 1)[0];
    ++report.confusion.at(labels[i], pred);
  }

  report.support.resize(static_cast<std::size_t>(k));
  report.precision.resize(static_cast<std::size_t>(k));
  report.recall.resize(static_cast<std::size_t>(k));
  report.f1.resize(static_cast<std::size_t>(k));
  for (std::int64_t c = 0; c < k; ++c) {
    const std::int64_t tp = report.confusion.at(c, c);
    const std::int64_t fp = report.confusion.col_sum(c) - tp;
    const std::int64_t fn = report.confusion.row_sum(c) - tp;
    report.support[static_cast<std::size_t>(c)] = tp + fn;
    const double p = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    report.precision[static_cast<std::size_t>(c)] = p;
    report.recall[static_cast<std::size_t>(c)] = r;
    report.f1[static_cast<std::size_t>(c)] = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  // Macro averages are unweighted means over all classes, including
  // zero-scored ones.
  report.macro_precision = std::accumulate(report.precision.begin(), report.precision.end(), 0.0) /
                           static_cast<double>(k);
  report.macro_recall =
      std::accumulate(report.recall.begin(), report.recall.end(), 0.0) / static_cast<double>(k);
  report.macro_f1 =
      std::accumulate(report.f1.begin(), report.f1.end(), 0.0) / static_cast<double>(k);
  report.top1_accuracy = top_k_accuracy(probabilities, labels, 1);
  report.top5_accuracy = top_k_accuracy(probabilities, labels, std::min<int>(5, static_cast<int>(k)));
  return report;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::string report_summary_text(const EvalReport& report) {
  std::ostringstream os;
  os << "top1 " << fmt(report.top1_accuracy) << '\n';
  os << "top5 " << fmt(report.top5_accuracy) << '\n';
  os << "macro_precision " << fmt(report.macro_precision) << '\n';
  os << "macro_recall " << fmt(report.macro_recall) << '\n';
  os << "macro_f1 " << fmt(report.macro_f1) << '\n';
  return os.str();
}

void write_report_files(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "per_class.csv");
    if (!os) throw IoError("cannot write " + (dir / "per_class.csv").string());
    os << "class,support,precision,recall,f1\n";
    for (std::size_t c = 0; c < report.class_names.size(); ++c) {
      os << report.class_names[c] << ',' << report.support[c] << ',' << fmt(report.precision[c])
         << ',' << fmt(report.recall[c]) << ',' << fmt(report.f1[c]) << '\n';
    }
  }
  {
    std::ofstream os(dir / "confusion.csv");
    if (!os) throw IoError("cannot write " + (dir / "confusion.csv").string());
    os << "true\\pred";
    for (const auto& name : report.class_names) os << ',' << name;
    os << '\n';
    for (std::int64_t i = 0; i < report.confusion.k; ++i) {
      os << report.class_names[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < report.confusion.k; ++j) os << ',' << report.confusion.at(i, j);
      os << '\n';
    }
  }
  {
    std::ofstream os(dir / "summary.txt");
    if (!os) throw IoError("cannot write " + (dir / "summary.txt").string());
    os << report_summary_text(report);
  }
}

}  // namespace macnet
