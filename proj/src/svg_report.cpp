#include "macnet/svg_report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "macnet/error.hpp"

namespace macnet {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_double(const std::string& s, const std::filesystem::path& path, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                     ": expected a number, got '" + s + "'");
  }
}

std::int64_t parse_int(const std::string& s, const std::filesystem::path& path, int line_no) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                     ": expected an integer, got '" + s + "'");
  }
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::vector<PerClassRow> read_per_class_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("per-class CSV not found: " + path.string());
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line)) {
    throw ParseError(path.string() + ": line 1: empty file");
  }
  ++line_no;
  if (split_fields(line) !=
      std::vector<std::string>{"class", "support", "precision", "recall", "f1"}) {
    throw ParseError(path.string() + ": line 1: bad header, expected "
                     "class,support,precision,recall,f1");
  }
  std::vector<PerClassRow> rows;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 5) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": expected 5 fields, got " + std::to_string(fields.size()));
    }
    PerClassRow row;
    row.name = fields[0];
    row.support = parse_int(fields[1], path, line_no);
    row.precision = parse_double(fields[2], path, line_no);
    row.recall = parse_double(fields[3], path, line_no);
    row.f1 = parse_double(fields[4], path, line_no);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": no data rows");
  }
  return rows;
}

ConfusionTable read_confusion_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("confusion CSV not found: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path.string() + ": line 1: empty file");
  auto header = split_fields(line);
  if (header.size() < 2) {
    throw ParseError(path.string() + ": line 1: header needs at least one class column");
  }
  ConfusionTable table;
  table.class_names.assign(header.begin() + 1, header.end());
  const std::size_t k = table.class_names.size();
  table.counts.assign(k * k, 0);
  int line_no = 1;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (row >= k) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": more rows than classes");
    }
    const auto fields = split_fields(line);
    if (fields.size() != k + 1) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(k + 1) + " fields, got " + std::to_string(fields.size()));
    }
    if (fields[0] != table.class_names[row]) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                       ": row label '" + fields[0] + "' does not match header order");
    }
    for (std::size_t j = 0; j < k; ++j) {
      table.counts[row * k + j] = parse_int(fields[j + 1], path, line_no);
    }
    ++row;
  }
  if (row != k) {
    throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                     std::to_string(k) + " data rows, got " + std::to_string(row));
  }
  return table;
}

std::string render_f1_bars_svg(const std::vector<PerClassRow>& rows) {
  const int bar_w = 26, gap = 10;
  const int plot_h = 240;
  const int margin_left = 48, margin_top = 28, margin_bottom = 96;
  const int plot_w = static_cast<int>(rows.size()) * (bar_w + gap) + gap;
  const int width = margin_left + plot_w + 16;
  const int height = margin_top + plot_h + margin_bottom;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<text x=\"" << margin_left << "\" y=\"18\" font-size=\"13\">Per-class F1</text>\n";
  // Gridlines and axis labels at 0, 0.25, ..., 1.
  for (int i = 0; i <= 4; ++i) {
    const double frac = static_cast<double>(i) / 4.0;
    const int y = margin_top + plot_h - static_cast<int>(frac * plot_h);
    os << "<line x1=\"" << margin_left << "\" y1=\"" << y << "\" x2=\"" << margin_left + plot_w
       << "\" y2=\"" << y << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << margin_left - 40 << "\" y=\"" << y + 4 << "\" font-size=\"10\">"
       << num(frac) << "</text>\n";
  }
  int x = margin_left + gap;
  for (const auto& row : rows) {
    const double f1 = std::min(1.0, std::max(0.0, row.f1));
    const int bar_h = static_cast<int>(std::lround(f1 * plot_h));
    const int y = margin_top + plot_h - bar_h;
    os << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w
       << "\" height=\"" << bar_h << "\" fill=\"#4878a8\"/>\n";
    os << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << margin_top + plot_h + 12
       << "\" font-size=\"9\" transform=\"rotate(60 " << x + bar_w / 2 << ' '
       << margin_top + plot_h + 12 << ")\">" << xml_escape(row.name) << "</text>\n";
    os << "<text x=\"" << x << "\" y=\"" << y - 3 << "\" font-size=\"8\">" << num(row.f1)
       << "</text>\n";
    x += bar_w + gap;
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_confusion_svg(const ConfusionTable& table) {
  const std::size_t k = table.class_names.size();
  const int cell = 34;
  const int margin_left = 110, margin_top = 110;
  const int width = margin_left + static_cast<int>(k) * cell + 16;
  const int height = margin_top + static_cast<int>(k) * cell + 16;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<text x=\"8\" y=\"18\" font-size=\"13\">Confusion matrix (row-normalized)</text>\n";
  for (std::size_t j = 0; j < k; ++j) {
    const int cx = margin_left + static_cast<int>(j) * cell + cell / 2;
    os << "<text x=\"" << cx << "\" y=\"" << margin_top - 8 << "\" font-size=\"9\" "
       << "transform=\"rotate(-60 " << cx << ' ' << margin_top - 8 << ")\">"
       << xml_escape(table.class_names[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::int64_t row_sum = 0;
    for (std::size_t j = 0; j < k; ++j) row_sum += table.at(i, j);
    const int cy = margin_top + static_cast<int>(i) * cell;
    os << "<text x=\"4\" y=\"" << cy + cell / 2 + 3 << "\" font-size=\"9\">"
       << xml_escape(table.class_names[i]) << "</text>\n";
    for (std::size_t j = 0; j < k; ++j) {
      const double v =
          row_sum > 0 ? static_cast<double>(table.at(i, j)) / static_cast<double>(row_sum) : 0.0;
      const int shade = static_cast<int>(std::lround(255.0 - v * 180.0));
      os << "<rect class=\"cell\" x=\"" << margin_left + static_cast<int>(j) * cell << "\" y=\""
         << cy << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade
         << ',' << shade << ",255)\" stroke=\"#888888\" stroke-width=\"0.5\"/>\n";
      os << "<text x=\"" << margin_left + static_cast<int>(j) * cell + 4 << "\" y=\""
         << cy + cell / 2 + 3 << "\" font-size=\"8\">" << num(v).substr(0, 4) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace macnet
