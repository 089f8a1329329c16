#include <cmath>
#include <set>

#include "doctest.h"
#include "macnet/loss.hpp"
#include "macnet/model.hpp"
#include "macnet/ops.hpp"
#include "oracles.hpp"

using namespace macnet;

namespace {

// Independent parameter enumeration from the config, written from the
// layer formulas rather than the model's registry.
std::int64_t closed_form_parameter_count(const MacNetConfig& cfg) {
  const std::int64_t bn2 = cfg.bn_enabled ? 2 : 0;
  auto conv = [&](std::int64_t in, std::int64_t out, std::int64_t k, bool bias) {
    return in * out * k * k + (bias ? out : 0);
  };
  // Stem: 3x3 with bias (no batch norm follows it).
  std::int64_t total = conv(3, cfg.stem_channels, 3, true);
  // Five atrous blocks + adapters.
  const std::int64_t rates = static_cast<std::int64_t>(cfg.atrous_rates.size());
  for (int level = 0; level < 5; ++level) {
    total += rates * (conv(3, cfg.atrous_branch_width, 3, !cfg.bn_enabled) +
                      bn2 * cfg.atrous_branch_width);
    const std::int64_t target =
        level == 0 ? cfg.stem_channels : cfg.stage_channels[static_cast<std::size_t>(level - 1)];
    total += conv(rates * cfg.atrous_branch_width, target, 1, true);
  }
  // Four bottleneck stages.
  std::int64_t in = cfg.stem_channels;
  for (int s = 0; s < 4; ++s) {
    const std::int64_t out = cfg.stage_channels[static_cast<std::size_t>(s)];
    const std::int64_t mid = std::max<std::int64_t>(1, out / 4);
    for (std::int64_t d = 0; d < cfg.stage_depths[static_cast<std::size_t>(s)]; ++d) {
      const std::int64_t block_in = d == 0 ? in : out;
      total += conv(block_in, mid, 1, !cfg.bn_enabled) + bn2 * mid;
      total += conv(mid, mid, 3, !cfg.bn_enabled) + bn2 * mid;
      total += conv(mid, out, 1, !cfg.bn_enabled) + bn2 * out;
      if (block_in != out || d == 0) {
        total += conv(block_in, out, 1, !cfg.bn_enabled) + bn2 * out;
      }
    }
    in = out;
  }
  // Head.
  total += cfg.stage_channels[3] * cfg.fc_widths[0] + cfg.fc_widths[0];
  total += cfg.fc_widths[0] * cfg.fc_widths[1] + cfg.fc_widths[1];
  total += cfg.fc_widths[1] * cfg.num_classes + cfg.num_classes;
  return total;
}

MacNetConfig small_desk() {
  MacNetConfig cfg = MacNetConfig::desk();
  cfg.input_h = cfg.input_w = 32;
  return cfg;
}

TensorPtr<double> random_images(std::int64_t n, std::int64_t hw, Rng& rng) {
  auto t = make_tensor<double>({n, 3, hw, hw});
  for (auto& v : t->data) v = uniform01(rng);
  return t;
}

}  // namespace

TEST_CASE("config validation enforces the doubling ladder and 16-divisibility") {
  MacNetConfig cfg = MacNetConfig::desk();
  CHECK_NOTHROW(cfg.validate());
  cfg.stage_channels = {32, 64, 100, 200};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MacNetConfig::desk();
  cfg.input_h = 60;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("divisible by 16"), ConfigError);
}

TEST_CASE("desk profile scales the paper widths by one eighth") {
  const MacNetConfig cfg = MacNetConfig::desk();
  CHECK(cfg.stage_channels == std::array<std::int64_t, 4>{32, 64, 128, 256});
  CHECK(cfg.stem_channels == 8);
  CHECK(cfg.fc_widths == std::array<std::int64_t, 2>{128, 64});
  CHECK(cfg.atrous_branch_width == 8);
  CHECK(cfg.stage_depths == std::array<std::int64_t, 4>{1, 1, 1, 1});
  const MacNetConfig paper = MacNetConfig::paper_faithful();
  CHECK(paper.stage_channels == std::array<std::int64_t, 4>{256, 512, 1024, 2048});
  CHECK(paper.stage_depths == std::array<std::int64_t, 4>{3, 4, 23, 3});
  CHECK(paper.fc_widths == std::array<std::int64_t, 2>{1024, 512});
}

TEST_CASE("pyramid level zero is the input itself with halving extents") {
  Rng rng = make_rng(50);
  auto img = random_images(1, 64, rng);
  const auto levels = MacNetModel<double>::build_pyramid(img);
  REQUIRE(levels.size() == 5);
  CHECK(levels[0].get() == img.get());  // bitwise: same tensor
  const std::int64_t extents[5] = {64, 32, 16, 8, 4};
  for (int i = 0; i < 5; ++i) {
    CHECK(levels[static_cast<std::size_t>(i)]->shape ==
          Shape{1, 3, extents[i], extents[i]});
  }
}

TEST_CASE("pyramid of a constant image is constant at every level") {
  auto img = full_tensor<double>({1, 3, 32, 32}, 0.37);
  const auto levels = MacNetModel<double>::build_pyramid(img);
  for (const auto& level : levels) {
    for (const double v : level->data) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
  }
}

TEST_CASE("pyramid rejects extents not divisible by 16 with a padding hint") {
  auto img = make_tensor<double>({1, 3, 48, 32});
  CHECK_NOTHROW(MacNetModel<double>::build_pyramid(img));
  auto bad = make_tensor<double>({1, 3, 50, 32});
  CHECK_THROWS_WITH_AS(MacNetModel<double>::build_pyramid(bad), doctest::Contains("pad"),
                       ShapeError);
}

TEST_CASE("atrous block concatenates rate branches with same padding") {
  ParamSet<double> ps;
  arch_detail::Initializer<double> init(3);
  auto block = arch_detail::AtrousBlock<double>::make("blk", 3, 8, {1, 2, 3}, true, ps, init);
  Rng rng = make_rng(51);
  auto x = random_images(2, 32, rng);
  auto y = block.forward(x, Mode::kTrain, nullptr);
  CHECK(y->shape == Shape{2, 24, 32, 32});  // 3 rates x width 8
}

TEST_CASE("atrous block with zeroed parameters maps everything to zero") {
  ParamSet<double> ps;
  arch_detail::Initializer<double> init(4);
  auto block = arch_detail::AtrousBlock<double>::make("blk", 3, 4, {1, 2, 3}, false, ps, init);
  for (auto& [name, t] : ps.params) std::fill(t->data.begin(), t->data.end(), 0.0);
  Rng rng = make_rng(52);
  auto x = random_images(1, 16, rng);
  auto y = block.forward(x, Mode::kTrain, nullptr);
  for (const double v : y->data) CHECK(v == 0.0);
}

TEST_CASE("stage outputs walk the 1/2^i shape ladder down to 1/16") {
  auto model = MacNetModel<double>::init(small_desk(), 7);
  model.set_mode(Mode::kEval);
  Rng rng = make_rng(53);
  auto img = random_images(1, 64, rng);
  auto logits = model.forward(img, nullptr);
  CHECK(logits->shape == Shape{1, 4});
  const auto& shapes = model.last_stage_shapes();
  REQUIRE(shapes.size() == 4);
  const auto cfg = model.config();
  for (int i = 0; i < 4; ++i) {
    const std::int64_t scale = std::int64_t{1} << (i + 1);
    CHECK(shapes[static_cast<std::size_t>(i)] ==
          Shape{1, cfg.stage_channels[static_cast<std::size_t>(i)], 64 / scale, 64 / scale});
  }
}

TEST_CASE("forward preserves the batch dimension") {
  auto model = MacNetModel<double>::init(small_desk(), 8);
  model.set_mode(Mode::kEval);
  Rng rng = make_rng(54);
  auto img = random_images(7, 32, rng);
  auto logits = model.forward(img, nullptr);
  CHECK(logits->shape == Shape{7, 4});
}

TEST_CASE("desk parameter count equals the closed-form enumeration") {
  const MacNetConfig cfg = MacNetConfig::desk();
  auto model = MacNetModel<double>::init(cfg, 1);
  CHECK(model.parameter_count() == closed_form_parameter_count(cfg));

  MacNetConfig no_bn = cfg;
  no_bn.bn_enabled = false;
  auto model2 = MacNetModel<double>::init(no_bn, 1);
  CHECK(model2.parameter_count() == closed_form_parameter_count(no_bn));

  MacNetConfig deeper = cfg;
  deeper.stage_depths = {2, 2, 2, 2};
  auto model3 = MacNetModel<double>::init(deeper, 1);
  CHECK(model3.parameter_count() == closed_form_parameter_count(deeper));
}

TEST_CASE("same seed builds bitwise identical parameters, different seeds differ") {
  const MacNetConfig cfg = small_desk();
  auto a = MacNetModel<double>::init(cfg, 42);
  auto b = MacNetModel<double>::init(cfg, 42);
  auto c = MacNetModel<double>::init(cfg, 43);
  REQUIRE(a.params().params.size() == b.params().params.size());
  bool any_diff_c = false;
  for (std::size_t i = 0; i < a.params().params.size(); ++i) {
    CHECK(a.params().params[i].second->data == b.params().params[i].second->data);
    if (a.params().params[i].second->data != c.params().params[i].second->data) any_diff_c = true;
  }
  CHECK(any_diff_c);
}

TEST_CASE("He initialization hits the expected standard deviation") {
  ParamSet<double> ps;
  arch_detail::Initializer<double> init(123);
  Conv2dSpec spec;
  spec.in_channels = 64;
  spec.out_channels = 64;
  spec.kernel_h = spec.kernel_w = 3;
  spec.pad_h = spec.pad_w = 1;
  auto layer = arch_detail::Conv2dLayer<double>::make("probe", spec, false, ps, init);
  double mean = 0.0;
  for (const double v : layer.w->data) mean += v;
  mean /= static_cast<double>(layer.w->data.size());
  double var = 0.0;
  for (const double v : layer.w->data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(layer.w->data.size());
  const double expect = std::sqrt(2.0 / 576.0);
  CHECK(std::abs(std::sqrt(var) - expect) / expect < 0.1);
}

TEST_CASE("predict returns sorted top-k lists with the argmax first") {
  auto model = MacNetModel<double>::init(small_desk(), 9);
  model.set_mode(Mode::kEval);
  Rng rng = make_rng(55);
  auto img = random_images(3, 32, rng);
  const auto pred = model.predict(img, 4);
  REQUIRE(pred.topk.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    // k = num_classes: every class exactly once.
    std::set<int> seen(pred.topk[i].begin(), pred.topk[i].end());
    CHECK(seen.size() == 4);
    // argmax first, probabilities descending.
    for (std::size_t j = 1; j < pred.topk[i].size(); ++j) {
      CHECK(pred.probabilities->data[i * 4 + pred.topk[i][j - 1]] >=
            pred.probabilities->data[i * 4 + pred.topk[i][j]]);
    }
    double sum = 0.0;
    for (int c = 0; c < 4; ++c) sum += pred.probabilities->data[i * 4 + c];
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("zeroing the final layer yields uniform probabilities") {
  auto model = MacNetModel<double>::init(small_desk(), 10);
  model.set_mode(Mode::kEval);
  for (auto& [name, t] : model.params().params) {
    if (name.rfind("head.fc3", 0) == 0) std::fill(t->data.begin(), t->data.end(), 0.0);
  }
  Rng rng = make_rng(56);
  auto img = random_images(2, 32, rng);
  const auto pred = model.predict(img, 1);
  for (const double v : pred.probabilities->data) {
    CHECK(v == doctest::Approx(0.25).epsilon(1e-9));
  }
}

TEST_CASE("predict refuses train mode") {
  auto model = MacNetModel<double>::init(small_desk(), 11);
  Rng rng = make_rng(57);
  auto img = random_images(1, 32, rng);
  CHECK_THROWS_AS(model.predict(img), ModeError);
}

TEST_CASE("eval forward is deterministic and free of cross-sample leakage") {
  auto model = MacNetModel<double>::init(small_desk(), 12);
  model.set_mode(Mode::kEval);
  Rng rng = make_rng(58);
  auto img = random_images(4, 32, rng);
  auto a = model.forward(img, nullptr);
  auto b = model.forward(img, nullptr);
  CHECK(a->data == b->data);

  // Reverse the batch; logits must permute identically.
  auto rev = make_tensor<double>(img->shape);
  const std::int64_t stride = 3 * 32 * 32;
  for (std::int64_t i = 0; i < 4; ++i) {
    std::copy(img->data.begin() + i * stride, img->data.begin() + (i + 1) * stride,
              rev->data.begin() + (3 - i) * stride);
  }
  auto c = model.forward(rev, nullptr);
  for (std::int64_t i = 0; i < 4; ++i) {
    for (std::int64_t j = 0; j < 4; ++j) {
      CHECK(c->data[(3 - i) * 4 + j] == a->data[i * 4 + j]);
    }
  }
}

TEST_CASE("every parameter receives gradient signal after one backward pass") {
  auto model = MacNetModel<double>::init(small_desk(), 13);
  model.set_mode(Mode::kTrain);
  Rng rng = make_rng(59);
  auto img = random_images(2, 32, rng);
  Tape<double> tape;
  auto logits = model.forward(img, &tape, /*dropout_seed=*/77);
  auto probs = softmax(logits, &tape);
  const auto cw = compute_class_weights({10, 10, 10, 10});
  auto loss = weighted_cross_entropy(probs, {0, 2}, cw, &tape);
  tape.backward(loss);
  for (const auto& [name, t] : model.params().params) {
    REQUIRE_MESSAGE(t->has_grad(), name);
    bool any_nonzero = false;
    for (const double g : t->grad) {
      if (g != 0.0) {
        any_nonzero = true;
        break;
      }
    }
    CHECK_MESSAGE(any_nonzero, name);
  }
}

TEST_CASE("train-mode forward with a fixed dropout seed is repeatable") {
  auto model = MacNetModel<double>::init(small_desk(), 14);
  model.set_mode(Mode::kTrain);
  Rng rng = make_rng(60);
  auto img = random_images(2, 32, rng);
  auto a = model.forward(img, nullptr, 5);
  auto b = model.forward(img, nullptr, 5);
  auto c = model.forward(img, nullptr, 6);
  CHECK(a->data == b->data);
  bool differs = false;
  for (std::size_t i = 0; i < a->data.size(); ++i) {
    if (a->data[i] != c->data[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("full desk model gradients match finite differences") {
  MacNetConfig cfg = small_desk();
  auto model = MacNetModel<double>::init(cfg, 15);
  model.set_mode(Mode::kTrain);
  Rng rng = make_rng(61);
  auto img = random_images(2, 32, rng);
  const std::vector<int> labels = {1, 3};
  const auto cw = compute_class_weights({5, 9, 7, 11});

  auto loss_value = [&]() {
    Tape<double> tape;
    auto logits = model.forward(img, &tape, /*dropout_seed=*/17);
    auto probs = softmax(logits, &tape);
    return weighted_cross_entropy(probs, labels, cw, &tape)->data[0];
  };

  // Analytic gradients once.
  model.params().zero_grads();
  {
    Tape<double> tape;
    auto logits = model.forward(img, &tape, 17);
    auto probs = softmax(logits, &tape);
    auto loss = weighted_cross_entropy(probs, labels, cw, &tape);
    tape.backward(loss);
  }

  // Spot-check coordinates spread across all parameter tensors.
  Rng pick = make_rng(62);
  const auto& params = model.params().params;
  int checked = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    auto& [name, t] =
        params[static_cast<std::size_t>(uniform_int(pick, 0, static_cast<std::int64_t>(params.size()) - 1))];
    const std::size_t i =
        static_cast<std::size_t>(uniform_int(pick, 0, t->size() - 1));
    const double analytic = t->grad[i];
    const double saved = t->data[i];
    const double h = 1e-5;
    t->data[i] = saved + h;
    const double fp = loss_value();
    t->data[i] = saved - h;
    const double fm = loss_value();
    t->data[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, oracles::rel_error(analytic, numeric));
    ++checked;
  }
  CHECK(checked == 8);
  CHECK(worst < 1e-3);
}

TEST_CASE("a NaN parameter surfaces as a numeric fault naming the layer") {
  auto model = MacNetModel<double>::init(small_desk(), 16);
  model.set_mode(Mode::kEval);
  for (auto& [name, t] : model.params().params) {
    if (name == "stem.w") t->data[0] = std::numeric_limits<double>::quiet_NaN();
  }
  Rng rng = make_rng(63);
  auto img = random_images(1, 32, rng);
  CHECK_THROWS_WITH_AS(model.forward(img, nullptr), doctest::Contains("stem"), NumericFault);
}

TEST_CASE("config key-value block round-trips") {
  MacNetConfig cfg = MacNetConfig::desk();
  cfg.num_classes = 9;
  cfg.dropout_p = 0.25;
  cfg.bn_enabled = false;
  const auto parsed = MacNetConfig::from_key_values(cfg.to_key_values());
  CHECK(parsed.num_classes == 9);
  CHECK(parsed.dropout_p == doctest::Approx(0.25));
  CHECK(parsed.bn_enabled == false);
  CHECK(parsed.stage_channels == cfg.stage_channels);
  CHECK(parsed.atrous_rates == cfg.atrous_rates);
  CHECK_THROWS_AS(MacNetConfig::from_key_values("nonsense=1\n"), ParseError);
}
