// Acceptance suite: runs every release criterion at its stated
// tolerance and prints one pass/fail line per criterion. Exits nonzero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <unistd.h>
#include <vector>

#include "macnet/checkpoint.hpp"
#include "macnet/loss.hpp"
#include "macnet/manifest.hpp"
#include "macnet/metrics.hpp"
#include "macnet/model.hpp"
#include "macnet/ops.hpp"
#include "macnet/svg_report.hpp"
#include "macnet/synth.hpp"
#include "macnet/trainer.hpp"

using namespace macnet;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string label;
  std::function<void(std::ostream&)> body;  // throws on failure
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

TensorPtr<double> random_tensor(Shape shape, Rng& rng, bool grad = false, double lo = -1.0,
                                double hi = 1.0) {
  auto t = make_tensor<double>(std::move(shape), grad);
  for (auto& v : t->data) v = uniform_range(rng, lo, hi);
  return t;
}

// Direct gathered-loop convolution written from the definition.
std::vector<double> conv_oracle(const std::vector<double>& x, std::int64_t n, std::int64_t c,
                                std::int64_t h, std::int64_t w, const std::vector<double>& wt,
                                const std::vector<double>& bias, const Conv2dSpec& spec) {
  const std::int64_t oh = spec.out_h(h), ow = spec.out_w(w), f = spec.out_channels;
  std::vector<double> y(static_cast<std::size_t>(n * f * oh * ow), 0.0);
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t fo = 0; fo < f; ++fo)
      for (std::int64_t i = 0; i < oh; ++i)
        for (std::int64_t j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(fo)];
          for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t ki = 0; ki < spec.kernel_h; ++ki)
              for (std::int64_t kj = 0; kj < spec.kernel_w; ++kj) {
                const std::int64_t iy = i * spec.stride_h - spec.pad_h + ki * spec.rate_h;
                const std::int64_t ix = j * spec.stride_w - spec.pad_w + kj * spec.rate_w;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += x[static_cast<std::size_t>(((s * c + ci) * h + iy) * w + ix)] *
                       wt[static_cast<std::size_t>(((fo * c + ci) * spec.kernel_h + ki) *
                                                   spec.kernel_w + kj)];
              }
          y[static_cast<std::size_t>(((s * f + fo) * oh + i) * ow + j)] = acc;
        }
  return y;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Central-difference check of d(loss)/d(param[i]) for a whole tensor.
double fd_max_rel_error(const TensorPtr<double>& param, const std::function<double()>& forward,
                        const std::vector<double>& analytic, double step = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param->data.size(); ++i) {
    const double saved = param->data[i];
    param->data[i] = saved + step;
    const double fp = forward();
    param->data[i] = saved - step;
    const double fm = forward();
    param->data[i] = saved;
    worst = std::max(worst, rel_err(analytic[i], (fp - fm) / (2.0 * step)));
  }
  return worst;
}

// The 22 train-column image counts; the weight oracle sums these here,
// independently of the library.
const std::vector<std::pair<const char*, std::int64_t>> kTrainColumn = {
    {"bakery_shop", 96},      {"banquet_hall", 203}, {"bar", 1121},
    {"beer_hall", 296},       {"butchers_shop", 251}, {"cafeteria", 1238},
    {"candy_store", 172},     {"coffee_shop", 1662},  {"delicatessen", 652},
    {"dining_room", 2481},    {"fastfood_restaurant", 858}, {"food_court", 161},
    {"ice_cream_parlor", 70}, {"kitchen", 2701},      {"market_indoor", 644},
    {"market_outdoor", 1271}, {"picnic_area", 659},   {"pizzeria", 1022},
    {"pub_indoor", 342},      {"restaurant", 4198},   {"supermarket", 3019},
    {"sushi_bar", 1151}};

fs::path g_work_dir;
fs::path g_data_dir;
DatasetManifest g_manifest;

void setup_dataset() {
  g_work_dir = fs::temp_directory_path() / ("macnet_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(g_work_dir);
  g_data_dir = g_work_dir / "data";
  SynthSpec spec;  // default generator settings: 4 classes, 64x64
  g_manifest = generate_synthetic_dataset(spec, g_data_dir);
  event_split(g_manifest, 0.77, 0.09, 0.14, /*seed=*/42);
  save_manifest(g_manifest, g_data_dir / "manifest.csv");
}

// ---------------------------------------------------------------- 1 --
void criterion_gradient_suite(std::ostream& os) {
  Rng rng = make_rng(101);
  double worst_op = 0.0;

  auto check = [&](const char* name, const TensorPtr<double>& param,
                   const std::function<TensorPtr<double>(Tape<double>*)>& build) {
    auto forward = [&]() {
      Tape<double> tape;
      return build(&tape)->data[0];
    };
    Tape<double> tape;
    auto loss = build(&tape);
    param->clear_grad();
    tape.backward(loss);
    param->ensure_grad();
    const double err = fd_max_rel_error(param, forward, param->grad);
    require(err < 1e-4, std::string(name) + " gradient error " + std::to_string(err));
    worst_op = std::max(worst_op, err);
  };

  {  // conv2d, dilated
    auto x = random_tensor({2, 2, 6, 6}, rng, true);
    auto w = random_tensor({3, 2, 3, 3}, rng, true);
    auto b = random_tensor({3}, rng, true);
    auto r = random_tensor({2, 3, 6, 6}, rng);
    Conv2dSpec spec;
    spec.in_channels = 2;
    spec.out_channels = 3;
    spec.kernel_h = spec.kernel_w = 3;
    spec.rate_h = spec.rate_w = 2;
    spec.pad_h = spec.pad_w = 2;
    auto build = [&](Tape<double>* t) { return sum_all(mul(conv2d(x, w, b, spec, t), r, t), t); };
    check("conv2d/x", x, build);
    check("conv2d/w", w, build);
    check("conv2d/b", b, build);
  }
  {  // pointwise
    auto x = random_tensor({2, 3, 4, 4}, rng, true);
    auto w = random_tensor({2, 3, 1, 1}, rng, true);
    auto b = random_tensor({2}, rng, true);
    auto r = random_tensor({2, 2, 4, 4}, rng);
    auto build = [&](Tape<double>* t) { return sum_all(mul(pointwise_conv(x, w, b, t), r, t), t); };
    check("pointwise/x", x, build);
    check("pointwise/w", w, build);
  }
  {  // linear
    auto x = random_tensor({3, 5}, rng, true);
    auto w = random_tensor({5, 4}, rng, true);
    auto b = random_tensor({4}, rng, true);
    auto r = random_tensor({3, 4}, rng);
    auto build = [&](Tape<double>* t) { return sum_all(mul(linear(x, w, b, t), r, t), t); };
    check("linear/x", x, build);
    check("linear/w", w, build);
    check("linear/b", b, build);
  }
  {  // relu, perturbed off the kink
    auto x = random_tensor({40}, rng, true);
    for (auto& v : x->data) {
      if (std::abs(v) < 0.05) v += v >= 0 ? 0.1 : -0.1;
    }
    auto r = random_tensor({40}, rng);
    check("relu/x", x, [&](Tape<double>* t) { return sum_all(mul(relu(x, t), r, t), t); });
  }
  {  // batch norm (train mode)
    auto x = random_tensor({3, 2, 4, 4}, rng, true);
    auto gamma = random_tensor({2}, rng, true, 0.5, 1.5);
    auto beta = random_tensor({2}, rng, true);
    auto state = BnState<double>::make(2);
    auto r = random_tensor({3, 2, 4, 4}, rng);
    auto build = [&](Tape<double>* t) {
      return sum_all(mul(batch_norm(x, gamma, beta, state, Mode::kTrain, t), r, t), t);
    };
    check("batch_norm/x", x, build);
    check("batch_norm/gamma", gamma, build);
    check("batch_norm/beta", beta, build);
  }
  {  // dropout with a fixed mask (deterministic stream)
    auto x = random_tensor({50}, rng, true);
    auto r = random_tensor({50}, rng);
    auto build = [&](Tape<double>* t) {
      Rng stream = make_rng(7);  // same mask on every evaluation
      return sum_all(mul(dropout(x, 0.5, Mode::kTrain, stream, t), r, t), t);
    };
    check("dropout/x", x, build);
  }
  {  // softmax
    auto x = random_tensor({3, 6}, rng, true);
    auto r = random_tensor({3, 6}, rng);
    check("softmax/x", x, [&](Tape<double>* t) { return sum_all(mul(softmax(x, t), r, t), t); });
  }
  {  // downsample_avg
    auto x = random_tensor({1, 2, 6, 6}, rng, true);
    auto r = random_tensor({1, 2, 3, 3}, rng);
    check("downsample/x", x,
          [&](Tape<double>* t) { return sum_all(mul(downsample_avg(x, 2, t), r, t), t); });
  }
  {  // global_avg_pool
    auto x = random_tensor({2, 3, 4, 4}, rng, true);
    auto r = random_tensor({2, 3}, rng);
    check("gap/x", x,
          [&](Tape<double>* t) { return sum_all(mul(global_avg_pool(x, t), r, t), t); });
  }
  {  // weighted cross-entropy through softmax
    auto x = random_tensor({4, 5}, rng, true);
    const auto cw = compute_class_weights({3, 5, 7, 9, 11});
    const std::vector<int> labels = {0, 2, 4, 1};
    check("wce/logits", x, [&](Tape<double>* t) {
      return weighted_cross_entropy(softmax(x, t), labels, cw, t);
    });
  }

  // Full desk-config model end to end, 20 sampled parameter coordinates.
  auto model = MacNetModel<double>::init(MacNetConfig::desk(), 2024);
  model.set_mode(Mode::kTrain);
  Rng img_rng = make_rng(102);
  auto images = make_tensor<double>({2, 3, 64, 64});
  for (auto& v : images->data) v = uniform01(img_rng);
  const std::vector<int> labels = {1, 3};
  const auto cw = compute_class_weights({20, 20, 20, 20});
  auto model_loss = [&]() {
    Tape<double> tape;
    auto probs = softmax(model.forward(images, &tape, /*dropout_seed=*/5), &tape);
    return weighted_cross_entropy(probs, labels, cw, &tape)->data[0];
  };
  model.params().zero_grads();
  {
    Tape<double> tape;
    auto probs = softmax(model.forward(images, &tape, 5), &tape);
    auto loss = weighted_cross_entropy(probs, labels, cw, &tape);
    tape.backward(loss);
  }
  Rng pick = make_rng(103);
  double worst_model = 0.0;
  const auto& params = model.params().params;
  for (int k = 0; k < 20; ++k) {
    auto& [name, t] =
        params[static_cast<std::size_t>(uniform_int(pick, 0, static_cast<std::int64_t>(params.size()) - 1))];
    const std::size_t i = static_cast<std::size_t>(uniform_int(pick, 0, t->size() - 1));
    const double analytic = t->grad[i];
    const double saved = t->data[i];
    t->data[i] = saved + 1e-5;
    const double fp = model_loss();
    t->data[i] = saved - 1e-5;
    const double fm = model_loss();
    t->data[i] = saved;
    worst_model = std::max(worst_model, rel_err(analytic, (fp - fm) / 2e-5));
  }
  require(worst_model < 1e-3, "end-to-end gradient error " + std::to_string(worst_model));
  os << "worst per-op rel err " << worst_op << ", end-to-end " << worst_model;
}

// ---------------------------------------------------------------- 2 --
void criterion_conv_oracle(std::ostream& os) {
  Rng rng = make_rng(104);
  double worst = 0.0;
  int compared = 0;
  for (int shape_trial = 0; shape_trial < 200; ++shape_trial) {
    const std::int64_t n = uniform_int(rng, 1, 2);
    const std::int64_t c = uniform_int(rng, 1, 4);
    const std::int64_t f = uniform_int(rng, 1, 4);
    const std::int64_t h = uniform_int(rng, 3, 14);
    const std::int64_t w = uniform_int(rng, 3, 14);
    auto x = random_tensor({n, c, h, w}, rng);
    auto wt = random_tensor({f, c, 3, 3}, rng);
    auto b = random_tensor({f}, rng);
    for (const std::int64_t rate : {1, 2, 3}) {
      for (const std::int64_t stride : {1, 2}) {
        Conv2dSpec spec;
        spec.in_channels = c;
        spec.out_channels = f;
        spec.kernel_h = spec.kernel_w = 3;
        spec.rate_h = spec.rate_w = rate;
        spec.stride_h = spec.stride_w = stride;
        spec.pad_h = spec.pad_w = rate;
        if (spec.out_h(h) < 1 || spec.out_w(w) < 1) continue;
        auto y = conv2d(x, wt, b, spec);
        const auto expect = conv_oracle(x->data, n, c, h, w, wt->data, b->data, spec);
        for (std::size_t i = 0; i < expect.size(); ++i) {
          worst = std::max(worst, std::abs(y->data[i] - expect[i]));
        }
        ++compared;
      }
    }
  }
  require(worst < 1e-12, "conv oracle deviation " + std::to_string(worst));
  os << compared << " shape/rate/stride cases, max abs deviation " << worst;
}

// ---------------------------------------------------------------- 3 --
void criterion_shape_claim(std::ostream& os) {
  MacNetConfig cfg = MacNetConfig::paper_faithful();
  cfg.num_classes = 22;
  std::ostringstream detail;
  for (const std::int64_t extent : {64, 96, 128}) {
    cfg.input_h = cfg.input_w = extent;
    auto model = MacNetModel<float>::init(cfg, 1);
    model.set_mode(Mode::kEval);
    auto img = make_tensor<float>({1, 3, extent, extent});
    Rng rng = make_rng(105);
    for (auto& v : img->data) v = static_cast<float>(uniform01(rng));
    model.forward(img, nullptr);
    const auto& shapes = model.last_stage_shapes();
    require(shapes.size() == 4, "expected four stage outputs");
    const std::int64_t expected_channels[4] = {256, 512, 1024, 2048};
    for (int i = 0; i < 4; ++i) {
      const std::int64_t scale = std::int64_t{1} << (i + 1);
      const Shape expect{1, expected_channels[i], extent / scale, extent / scale};
      require(shapes[static_cast<std::size_t>(i)] == expect,
              "stage " + std::to_string(i + 1) + " shape mismatch at input " +
                  std::to_string(extent));
    }
    require(shapes[3][2] == extent / 16 && shapes[3][3] == extent / 16,
            "stage-4 map is not 1/16 of the input");
    detail << extent << "->" << shapes[3][2] << "x" << shapes[3][3] << " ";
  }
  os << "stage-4 extents " << detail.str() << "with channels 256/512/1024/2048";
}

// ---------------------------------------------------------------- 4 --
void criterion_weight_formula(std::ostream& os) {
  const auto two = compute_class_weights({4, 6});
  require(std::abs(two.weights[0] - 0.6) < 1e-15 && std::abs(two.weights[1] - 0.4) < 1e-15,
          "counts {4,6} must weigh {0.6,0.4}");

  std::vector<std::int64_t> counts;
  std::int64_t total = 0;
  int restaurant = -1;
  for (const auto& [name, count] : kTrainColumn) {
    if (std::string(name) == "restaurant") restaurant = static_cast<int>(counts.size());
    counts.push_back(count);
    total += count;
  }
  const auto cw = compute_class_weights(counts);
  const double expect = 1.0 - 4198.0 / static_cast<double>(total);
  require(std::abs(cw.weights[static_cast<std::size_t>(restaurant)] - expect) < 1e-15,
          "restaurant weight mismatch");

  const auto balanced = compute_class_weights(std::vector<std::int64_t>(22, 100));
  for (const double w : balanced.weights) {
    require(w == balanced.weights[0], "balanced weights must all be equal");
  }
  os << "N_total " << total << ", restaurant weight " << expect;
}

// ---------------------------------------------------------------- 5 --
void criterion_loss_formula(std::ostream& os) {
  std::vector<std::int64_t> counts;
  for (const auto& [name, count] : kTrainColumn) counts.push_back(count);
  const auto cw = compute_class_weights(counts);
  auto uniform = full_tensor<double>({1, 22}, 1.0 / 22.0);
  double worst = 0.0;
  for (int y = 0; y < 22; ++y) {
    const double loss = weighted_cross_entropy(uniform, {y}, cw)->data[0];
    worst = std::max(worst,
                     std::abs(loss - cw.weights[static_cast<std::size_t>(y)] * std::log(22.0)));
  }
  require(worst < 1e-10, "uniform-prediction loss deviates " + std::to_string(worst));

  Rng rng = make_rng(106);
  auto logits = random_tensor({6, 22}, rng, true, -3.0, 3.0);
  std::vector<int> labels;
  for (int i = 0; i < 6; ++i) labels.push_back(static_cast<int>(uniform_int(rng, 0, 21)));
  Tape<double> tape;
  auto probs = softmax(logits, &tape);
  auto loss = weighted_cross_entropy(probs, labels, cw, &tape);
  tape.backward(loss);
  double worst_grad = 0.0;
  for (std::int64_t i = 0; i < 6; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < 22; ++j) {
      const double expect = cw.weights[static_cast<std::size_t>(y)] *
                            (probs->data[i * 22 + j] - (j == y ? 1.0 : 0.0));
      worst_grad = std::max(worst_grad, std::abs(logits->grad[i * 22 + j] - expect));
    }
  }
  require(worst_grad < 1e-10, "logit gradient deviates " + std::to_string(worst_grad));
  os << "loss dev " << worst << ", gradient dev " << worst_grad;
}

// ---------------------------------------------------------------- 6 --
void criterion_metrics_fixtures(std::ostream& os) {
  // Hand-computed 3-class fixture, confusion rows (2,1,0 / 0,3,0 / 1,0,3).
  std::vector<std::vector<double>> probs;
  std::vector<int> labels;
  auto emit = [&](int true_c, int pred_c, int count) {
    for (int i = 0; i < count; ++i) {
      std::vector<double> row(3, 0.1);
      row[static_cast<std::size_t>(pred_c)] = 0.8;
      probs.push_back(row);
      labels.push_back(true_c);
    }
  };
  emit(0, 0, 2);
  emit(0, 1, 1);
  emit(1, 1, 3);
  emit(2, 0, 1);
  emit(2, 2, 3);
  const auto report = compute_report(probs, labels, {"a", "b", "c"});
  const double expect_p[3] = {2.0 / 3.0, 3.0 / 4.0, 1.0};
  const double expect_r[3] = {2.0 / 3.0, 1.0, 3.0 / 4.0};
  const double expect_f[3] = {2.0 / 3.0, 6.0 / 7.0, 6.0 / 7.0};
  for (int c = 0; c < 3; ++c) {
    require(report.precision[static_cast<std::size_t>(c)] == expect_p[c], "precision mismatch");
    require(report.recall[static_cast<std::size_t>(c)] == expect_r[c], "recall mismatch");
    require(std::abs(report.f1[static_cast<std::size_t>(c)] - expect_f[c]) < 1e-15,
            "f1 mismatch");
  }

  // 1000 random prediction sets: top5 >= top1, and top-k monotone in k.
  Rng rng = make_rng(107);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t k = uniform_int(rng, 5, 12);
    const std::int64_t n = uniform_int(rng, 1, 12);
    std::vector<std::vector<double>> p;
    std::vector<int> l;
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<double> row(static_cast<std::size_t>(k));
      for (auto& v : row) v = uniform01(rng);
      p.push_back(row);
      l.push_back(static_cast<int>(uniform_int(rng, 0, k - 1)));
    }
    const double top1 = top_k_accuracy(p, l, 1);
    const double top5 = top_k_accuracy(p, l, 5);
    require(top5 >= top1, "top5 < top1");
    double prev = 0.0;
    for (int kk = 1; kk <= k; ++kk) {
      const double acc = top_k_accuracy(p, l, kk);
      require(acc >= prev, "top-k not monotone");
      prev = acc;
    }
    require(std::abs(prev - 1.0) < 1e-15, "top-K must be 1");
  }
  os << "fixture exact, 1000 random sets monotone with top5 >= top1";
}

// ---------------------------------------------------------------- 7 --
void criterion_event_split(std::ostream& os) {
  Rng rng = make_rng(108);
  const double ratios[3] = {0.77, 0.09, 0.14};
  int brute_checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int classes = static_cast<int>(uniform_int(rng, 1, 4));
    DatasetManifest m;
    for (int c = 0; c < classes; ++c) m.class_names.push_back("c" + std::to_string(c));
    int event_counter = 0;
    std::vector<std::vector<std::int64_t>> sizes(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
      const int events = static_cast<int>(uniform_int(rng, 1, 10));
      for (int e = 0; e < events; ++e) {
        EventRecord rec;
        rec.event_id = "ev" + std::to_string(event_counter++);
        rec.class_name = m.class_names[static_cast<std::size_t>(c)];
        const std::int64_t size = uniform_int(rng, 1, 50);
        sizes[static_cast<std::size_t>(c)].push_back(size);
        for (std::int64_t i = 0; i < size; ++i) {
          rec.image_paths.push_back(rec.event_id + "_" + std::to_string(i));
        }
        m.events.push_back(std::move(rec));
      }
    }
    event_split(m, ratios[0], ratios[1], ratios[2], static_cast<std::uint64_t>(trial));

    // No event straddles splits (events are atomic by construction;
    // verify every event got exactly one split).
    for (const auto& e : m.events) {
      require(e.split == Split::kTrain || e.split == Split::kVal || e.split == Split::kTest,
              "event left unassigned");
    }

    for (int c = 0; c < classes; ++c) {
      std::int64_t img[3] = {0, 0, 0};
      std::int64_t total = 0, max_event = 0;
      for (const auto& e : m.events) {
        if (e.class_name != m.class_names[static_cast<std::size_t>(c)]) continue;
        const auto sz = static_cast<std::int64_t>(e.image_paths.size());
        img[static_cast<int>(e.split)] += sz;
        total += sz;
        max_event = std::max(max_event, sz);
      }
      const bool small_class = sizes[static_cast<std::size_t>(c)].size() < 3;
      if (!small_class) {
        for (int s = 0; s < 3; ++s) {
          const double target = ratios[s] * static_cast<double>(total);
          require(std::abs(static_cast<double>(img[s]) - target) <=
                      static_cast<double>(max_event) + 1e-9,
                  "image-ratio deviation beyond one largest event");
        }
      }

      // Brute-force agreement for small event counts.
      if (sizes[static_cast<std::size_t>(c)].size() <= 8) {
        const auto& ev = sizes[static_cast<std::size_t>(c)];
        double best = 1e300;
        std::vector<int> assign(ev.size(), 0);
        while (true) {
          double s_img[3] = {0, 0, 0};
          for (std::size_t i = 0; i < ev.size(); ++i) {
            s_img[assign[i]] += static_cast<double>(ev[i]);
          }
          double dev = 0;
          for (int s = 0; s < 3; ++s) {
            dev += std::abs(s_img[s] - ratios[s] * static_cast<double>(total));
          }
          best = std::min(best, dev);
          std::size_t i = 0;
          while (i < ev.size() && assign[i] == 2) assign[i++] = 0;
          if (i == ev.size()) break;
          ++assign[i];
        }
        double greedy_dev = 0;
        for (int s = 0; s < 3; ++s) {
          greedy_dev += std::abs(static_cast<double>(img[s]) -
                                 ratios[s] * static_cast<double>(total));
        }
        require(greedy_dev <= best + 2.0 * static_cast<double>(max_event) + 1e-9,
                "greedy deviates from brute-force optimum by more than one event move");
        ++brute_checked;
      }
    }
  }
  os << "500 manifests, " << brute_checked << " classes brute-force checked";
}

// ---------------------------------------------------------------- 8 --
void criterion_overfit(std::ostream& os) {
  const double t0 = now_seconds();
  TrainRunConfig run_cfg;
  run_cfg.epochs = 200;
  run_cfg.batch_size = 32;
  run_cfg.augment = false;
  run_cfg.stop_at_train_top1 = 1.0;

  MacNetConfig cfg = MacNetConfig::desk();  // 4 classes, 64x64

  // Overfit: 100% train top-1 within 200 epochs.
  run_cfg.seed = 1;
  auto model = MacNetModel<float>::init(cfg, 1);
  const auto result = train(model, g_manifest, g_data_dir, run_cfg);
  require(!result.history.empty(), "no training history");
  const auto& last = result.history.back();
  require(last.train_top1 == 1.0,
          "train top-1 is " + std::to_string(last.train_top1) + " after " +
              std::to_string(last.epoch + 1) + " epochs");
  require(last.epoch < 200, "needed more than 200 epochs");
  const double overfit_minutes = (now_seconds() - t0) / 60.0;
  require(overfit_minutes < 30.0, "overfit run exceeded 30 minutes");

  // Held-out generalization (test top-1 > 0.75 in >= 8 of 10 seeds) and
  // early progress (epoch-5 loss below the initial loss in >= 9 of 10).
  int wins = 0, improved = 0;
  std::ostringstream seeds_detail;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = MacNetModel<float>::init(cfg, seed);
    TrainRunConfig rc = run_cfg;
    rc.seed = seed;
    rc.epochs = 6;
    rc.stop_at_train_top1 = -1.0;
    rc.track_train_top1 = false;
    const auto seed_result = train(m, g_manifest, g_data_dir, rc);
    if (seed_result.history.back().train_loss < seed_result.history.front().train_loss) {
      ++improved;
    }
    const auto report = evaluate(m, g_manifest, g_data_dir, Split::kTest);
    seeds_detail << report.top1_accuracy << " ";
    if (report.top1_accuracy > 0.75) ++wins;
  }
  require(wins >= 8, "test top-1 exceeded 0.75 in only " + std::to_string(wins) + "/10 seeds");
  require(improved >= 9,
          "loss fell below its initial value by epoch 5 in only " + std::to_string(improved) +
              "/10 seeds");
  os << "overfit at epoch " << last.epoch << " in " << overfit_minutes * 60.0
     << " s; test top-1 per seed: " << seeds_detail.str() << "(" << wins << "/10 > 0.75, loss down "
     << improved << "/10)";
}

// ---------------------------------------------------------------- 9 --
void criterion_determinism(std::ostream& os) {
  // Same-seed 64-bit training gives identical loss traces.
  auto run_once = [&]() {
    auto model = MacNetModel<double>::init(MacNetConfig::desk(), 11);
    TrainRunConfig rc;
    rc.epochs = 2;
    rc.batch_size = 32;
    rc.seed = 3;
    rc.augment = false;
    rc.track_train_top1 = false;
    return train(model, g_manifest, g_data_dir, rc).history;
  };
  const auto a = run_once();
  const auto b = run_once();
  require(a.size() == b.size(), "history lengths differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i].train_loss == b[i].train_loss, "loss traces differ at epoch " + std::to_string(i));
    require(a[i].val_top1 == b[i].val_top1, "val traces differ");
  }

  // Checkpoint save/load/evaluate round-trips exactly.
  auto model = MacNetModel<float>::init(MacNetConfig::desk(), 12);
  TrainRunConfig rc;
  rc.epochs = 2;
  rc.batch_size = 32;
  rc.seed = 4;
  rc.augment = false;
  rc.track_train_top1 = false;
  train(model, g_manifest, g_data_dir, rc);
  const auto before = evaluate(model, g_manifest, g_data_dir, Split::kVal);
  const auto ckpt = g_work_dir / "determinism.ckpt";
  save_checkpoint<float>(ckpt, model, nullptr, 1, rc.seed);
  auto loaded = load_checkpoint<float>(ckpt);
  const auto after = evaluate(loaded.model, g_manifest, g_data_dir, Split::kVal);
  require(before.top1_accuracy == after.top1_accuracy &&
              before.top5_accuracy == after.top5_accuracy &&
              before.macro_f1 == after.macro_f1 &&
              before.confusion.counts == after.confusion.counts,
          "checkpoint round-trip changed the evaluation report");

  // The default schedule holds exactly 5 distinct values over 100 epochs.
  LrSchedule lr;
  std::set<double> distinct;
  for (int e = 0; e < 100; ++e) distinct.insert(lr.at(e));
  require(distinct.size() == 5, "expected 5 distinct learning rates, got " +
                                    std::to_string(distinct.size()));
  os << "identical traces over " << a.size() << " epochs, exact round-trip, 5 LR plateaus";
}

// --------------------------------------------------------------- 10 --
void criterion_report_artifacts(std::ostream& os) {
  // Build an evaluation report with a zero-scored class, write the CSVs,
  // then regenerate the charts from the files alone.
  std::vector<std::vector<double>> probs;
  std::vector<int> labels;
  auto emit = [&](int true_c, int pred_c, int count) {
    for (int i = 0; i < count; ++i) {
      std::vector<double> row(4, 0.05);
      row[static_cast<std::size_t>(pred_c)] = 0.85;
      probs.push_back(row);
      labels.push_back(true_c);
    }
  };
  emit(0, 0, 6);
  emit(1, 1, 4);
  emit(1, 0, 2);
  emit(2, 0, 3);  // class 2 never predicted correctly -> zero bar
  const auto report =
      compute_report(probs, labels, {"alpha", "beta", "gamma", "delta"});  // delta: zero support
  const auto report_dir = g_work_dir / "reports";
  write_report_files(report, report_dir);

  const auto rows = read_per_class_csv(report_dir / "per_class.csv");
  require(rows.size() == 4, "per-class CSV row count");
  const std::string bars = render_f1_bars_svg(rows);
  const auto confusion = read_confusion_csv(report_dir / "confusion.csv");
  const std::string heat = render_confusion_svg(confusion);

  auto count_marker = [](const std::string& text, const std::string& marker) {
    int count = 0;
    std::size_t pos = 0;
    while ((pos = text.find(marker, pos)) != std::string::npos) {
      ++count;
      pos += marker.size();
    }
    return count;
  };
  require(count_marker(bars, "class=\"bar\"") == 4, "expected one bar per class");
  require(count_marker(heat, "class=\"cell\"") == 16, "expected a 4x4 heat map");

  // Minimal structural XML validation: every opened tag closes.
  for (const std::string* svg : {&bars, &heat}) {
    require(svg->rfind("<?xml", 0) == 0, "missing XML declaration");
    require(count_marker(*svg, "<svg") == 1 && count_marker(*svg, "</svg>") == 1,
            "svg root malformed");
    require(count_marker(*svg, "<rect") == count_marker(*svg, "/>") -
                (count_marker(*svg, "<line") + count_marker(*svg, "<circle")),
            "unclosed rect elements");
    require(count_marker(*svg, "<text") == count_marker(*svg, "</text>"),
            "unclosed text elements");
  }
  {
    std::ofstream osvg(report_dir / "f1_bars.svg");
    osvg << bars;
    std::ofstream hsvg(report_dir / "confusion.svg");
    hsvg << heat;
  }
  os << "4 bars (one zero), 16 annotated cells, artifacts in " << report_dir.string();
}

}  // namespace

int main() {
  setup_dataset();

  std::vector<Criterion> criteria = {
      {1, "gradient suite (finite differences, 64-bit)", criterion_gradient_suite},
      {2, "dilated-convolution brute-force oracle", criterion_conv_oracle},
      {3, "1/16 shape claim and 256/512/1024/2048 channels", criterion_shape_claim},
      {4, "class-weight formula w = 1 - N_y/N", criterion_weight_formula},
      {5, "weighted cross-entropy value and gradient", criterion_loss_formula},
      {6, "metrics fixtures and top-k properties", criterion_metrics_fixtures},
      {7, "event-split integrity vs brute force", criterion_event_split},
      {8, "overfit sanity and held-out generalization", criterion_overfit},
      {9, "determinism, checkpoint round-trip, LR trace", criterion_determinism},
      {10, "report artifacts (F1 bars, confusion heat map)", criterion_report_artifacts},
  };

  int failures = 0;
  const double suite_start = now_seconds();
  for (const auto& criterion : criteria) {
    const double t0 = now_seconds();
    std::ostringstream detail;
    try {
      criterion.body(detail);
      std::printf("[PASS] criterion %2d: %s (%.1f s) — %s\n", criterion.id,
                  criterion.label.c_str(), now_seconds() - t0, detail.str().c_str());
    } catch (const std::exception& e) {
      ++failures;
      std::printf("[FAIL] criterion %2d: %s (%.1f s) — %s\n", criterion.id,
                  criterion.label.c_str(), now_seconds() - t0, e.what());
    }
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failures,
              criteria.size(), now_seconds() - suite_start);

  std::error_code ec;
  fs::remove_all(g_work_dir, ec);
  return failures == 0 ? 0 : 1;
}
