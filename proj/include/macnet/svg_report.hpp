#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace macnet {

struct PerClassRow {
  std::string name;
  std::int64_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ConfusionTable {
  std::vector<std::string> class_names;
  std::vector<std::int64_t> counts;  // row-major K*K, rows = true class

  std::int64_t at(std::size_t i, std::size_t j) const {
    return counts[i * class_names.size() + j];
  }
};

// CSV readers for the files write_report_files emits. Parse failures
// throw ParseError naming the line number.
std::vector<PerClassRow> read_per_class_csv(const std::filesystem::path& path);
ConfusionTable read_confusion_csv(const std::filesystem::path& path);

// One bar per class in CSV row order; zero-valued classes keep their
// (zero-height) bar. Bars carry class="bar" for counting.
std::string render_f1_bars_svg(const std::vector<PerClassRow>& rows);

// Row-normalized heat map with numeric annotations; cells carry
// class="cell".
std::string render_confusion_svg(const ConfusionTable& table);

}  // namespace macnet
