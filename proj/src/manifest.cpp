#include "macnet/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "macnet/error.hpp"
#include "macnet/rng.hpp"

namespace macnet {

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kUnassigned: return "unassigned";
  }
  return "unassigned";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "unassigned") return Split::kUnassigned;
  throw ParseError("unknown split name '" + name + "'");
}

int DatasetManifest::class_index(const std::string& name) const {
  const auto it = std::find(class_names.begin(), class_names.end(), name);
  if (it == class_names.end()) throw ManifestError("unknown class '" + name + "'");
  return static_cast<int>(it - class_names.begin());
}

std::int64_t DatasetManifest::images_in(Split split) const {
  std::int64_t acc = 0;
  for (const auto& e : events) {
    if (e.split == split) acc += static_cast<std::int64_t>(e.image_paths.size());
  }
  return acc;
}

std::int64_t DatasetManifest::events_in(Split split) const {
  std::int64_t acc = 0;
  for (const auto& e : events) {
    if (e.split == split) ++acc;
  }
  return acc;
}

std::vector<std::array<SplitCounts, 3>> DatasetManifest::per_class_counts() const {
  std::vector<std::array<SplitCounts, 3>> counts(class_names.size());
  for (const auto& e : events) {
    if (e.split == Split::kUnassigned) continue;
    auto& slot = counts[static_cast<std::size_t>(class_index(e.class_name))]
                       [static_cast<std::size_t>(e.split)];
    slot.images += static_cast<std::int64_t>(e.image_paths.size());
    slot.events += 1;
  }
  return counts;
}

std::vector<std::int64_t> DatasetManifest::train_image_counts_per_class() const {
  std::vector<std::int64_t> counts(class_names.size(), 0);
  for (const auto& e : events) {
    if (e.split == Split::kTrain) {
      counts[static_cast<std::size_t>(class_index(e.class_name))] +=
          static_cast<std::int64_t>(e.image_paths.size());
    }
  }
  return counts;
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : events) {
    if (e.image_paths.empty()) {
      throw ManifestError("event '" + e.event_id + "' has no images");
    }
    if (!ids.insert(e.event_id).second) {
      throw ManifestError("duplicate event id '" + e.event_id + "'");
    }
    class_index(e.class_name);  // throws on unknown class
  }
}

void event_split(DatasetManifest& manifest, double train_ratio, double val_ratio,
                 double test_ratio, std::uint64_t seed) {
  if (train_ratio <= 0.0 || val_ratio <= 0.0 || test_ratio <= 0.0) {
    throw ContractError("event_split: ratios must be positive");
  }
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw ContractError("event_split: ratios must sum to 1");
  }
  manifest.validate();

  for (std::size_t ci = 0; ci < manifest.class_names.size(); ++ci) {
    const auto& cls = manifest.class_names[ci];
    std::vector<EventRecord*> events;
    std::int64_t class_images = 0;
    for (auto& e : manifest.events) {
      if (e.class_name == cls) {
        events.push_back(&e);
        class_images += static_cast<std::int64_t>(e.image_paths.size());
      }
    }
    if (events.empty()) {
      throw ManifestError("event_split: class '" + cls + "' has no events");
    }

    // Seeded shuffle then stable sort: equal-size events keep seeded
    // order, so the assignment is deterministic given the seed.
    Rng rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(ci)));
    for (std::size_t i = events.size(); i > 1; --i) {
      std::swap(events[i - 1], events[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
    }
    std::stable_sort(events.begin(), events.end(), [](const EventRecord* a, const EventRecord* b) {
      return a->image_paths.size() > b->image_paths.size();
    });

    const double targets[3] = {train_ratio * static_cast<double>(class_images),
                               val_ratio * static_cast<double>(class_images),
                               test_ratio * static_cast<double>(class_images)};
    double assigned[3] = {0.0, 0.0, 0.0};
    auto most_underfilled = [&]() {
      int best = 0;
      double best_deficit = targets[0] - assigned[0];
      for (int s = 1; s < 3; ++s) {
        const double deficit = targets[s] - assigned[s];
        if (deficit > best_deficit) {
          best = s;
          best_deficit = deficit;
        }
      }
      return best;
    };

    for (std::size_t i = 0; i < events.size(); ++i) {
      int dest;
      if (i == 0 && events.size() < 3) {
        dest = 0;  // largest event of a small class always trains
      } else {
        dest = most_underfilled();
      }
      events[i]->split = static_cast<Split>(dest);
      assigned[dest] += static_cast<double>(events[i]->image_paths.size());
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  os << "image_path,class_name,event_id,split\n";
  for (const auto& e : manifest.events) {
    for (const auto& img : e.image_paths) {
      os << img << ',' << e.class_name << ',' << e.event_id << ',' << split_name(e.split) << '\n';
    }
  }
  if (!os) throw IoError("short write: " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("manifest not found: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError("manifest is empty: " + path.string());
  if (split_csv_line(line) != std::vector<std::string>{"image_path", "class_name", "event_id", "split"}) {
    throw ParseError("manifest header line invalid: " + path.string());
  }

  DatasetManifest manifest;
  std::map<std::string, std::size_t> event_index;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    const auto& [img, cls, event_id, split_str] = std::tie(fields[0], fields[1], fields[2], fields[3]);
    const Split split = split_from_name(split_str);
    if (std::find(manifest.class_names.begin(), manifest.class_names.end(), cls) ==
        manifest.class_names.end()) {
      manifest.class_names.push_back(cls);
    }
    const auto it = event_index.find(event_id);
    if (it == event_index.end()) {
      event_index[event_id] = manifest.events.size();
      EventRecord rec;
      rec.event_id = event_id;
      rec.class_name = cls;
      rec.split = split;
      rec.image_paths.push_back(img);
      manifest.events.push_back(std::move(rec));
    } else {
      auto& rec = manifest.events[it->second];
      if (rec.class_name != cls) {
        throw ManifestError("manifest line " + std::to_string(line_no) + ": event '" + event_id +
                            "' spans classes '" + rec.class_name + "' and '" + cls + "'");
      }
      if (rec.split != split) {
        throw ManifestError("manifest line " + std::to_string(line_no) + ": event '" + event_id +
                            "' straddles splits");
      }
      rec.image_paths.push_back(img);
    }
  }
  manifest.validate();
  return manifest;
}

void write_stats_csv(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write stats: " + path.string());
  const auto counts = manifest.per_class_counts();
  os << "class,train_images,train_events,val_images,val_events,test_images,test_events\n";
  for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
    os << manifest.class_names[c];
    for (int s = 0; s < 3; ++s) {
      os << ',' << counts[c][static_cast<std::size_t>(s)].images << ','
         << counts[c][static_cast<std::size_t>(s)].events;
    }
    os << '\n';
  }
}

}  // namespace macnet
