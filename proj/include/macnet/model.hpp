#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "macnet/error.hpp"
#include "macnet/ops.hpp"
#include "macnet/rng.hpp"
#include "macnet/tensor.hpp"

namespace macnet {

// Architecture hyperparameters. The paper-faithful profile keeps the
// published widths; the desk profile shrinks widths by 1/8 and stage
// depths to one block each so the full test suite runs in minutes.
struct MacNetConfig {
  std::int64_t num_classes = 22;
  std::int64_t input_h = 224;
  std::int64_t input_w = 224;
  static constexpr int kPyramidLevels = 5;
  std::vector<std::int64_t> atrous_rates{1, 2, 3};
  std::int64_t atrous_branch_width = 32;
  std::array<std::int64_t, 4> stage_channels{256, 512, 1024, 2048};
  std::array<std::int64_t, 4> stage_depths{3, 4, 23, 3};
  std::int64_t stem_channels = 64;
  std::array<std::int64_t, 2> fc_widths{1024, 512};
  double dropout_p = 0.5;
  bool bn_enabled = true;

  static MacNetConfig paper_faithful() { return MacNetConfig{}; }

  static MacNetConfig desk() {
    MacNetConfig cfg = paper_faithful().with_width_multiplier(1.0 / 8.0);
    cfg.stage_depths = {1, 1, 1, 1};
    cfg.atrous_branch_width = 8;
    cfg.num_classes = 4;
    cfg.input_h = 64;
    cfg.input_w = 64;
    return cfg;
  }

  // Scales stage, stem and FC widths; atrous branch width is its own knob.
  MacNetConfig with_width_multiplier(double m) const {
    if (m <= 0.0) throw ConfigError("width multiplier must be positive");
    MacNetConfig cfg = *this;
    auto scale = [m](std::int64_t v) {
      return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(v * m)));
    };
    for (auto& c : cfg.stage_channels) c = scale(c);
    cfg.stem_channels = scale(cfg.stem_channels);
    for (auto& c : cfg.fc_widths) c = scale(c);
    return cfg;
  }

  void validate() const {
    if (num_classes < 1) throw ConfigError("num_classes must be positive");
    if (input_h % 16 != 0 || input_w % 16 != 0) {
      throw ConfigError("input extents must be divisible by 16, got " + std::to_string(input_h) +
                        "x" + std::to_string(input_w) + "; pad to " +
                        std::to_string(((input_h + 15) / 16) * 16) + "x" +
                        std::to_string(((input_w + 15) / 16) * 16));
    }
    if (atrous_rates.empty()) throw ConfigError("atrous_rates must be non-empty");
    for (const auto r : atrous_rates) {
      if (r < 1) throw ConfigError("atrous rates must be positive");
    }
    if (atrous_branch_width < 1) throw ConfigError("atrous_branch_width must be positive");
    for (std::size_t i = 1; i < stage_channels.size(); ++i) {
      if (stage_channels[i] != 2 * stage_channels[i - 1]) {
        throw ConfigError("stage_channels must double at each stage, got " +
                          std::to_string(stage_channels[i - 1]) + " -> " +
                          std::to_string(stage_channels[i]));
      }
    }
    for (const auto d : stage_depths) {
      if (d < 1) throw ConfigError("stage_depths must be >= 1");
    }
    if (stem_channels < 1) throw ConfigError("stem_channels must be positive");
    if (fc_widths[0] < 1 || fc_widths[1] < 1) throw ConfigError("fc_widths must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0,1)");
  }

  std::string to_key_values() const {
    std::ostringstream os;
    os << "num_classes=" << num_classes << '\n';
    os << "input_h=" << input_h << '\n';
    os << "input_w=" << input_w << '\n';
    os << "pyramid_levels=" << kPyramidLevels << '\n';
    os << "atrous_rates=";
    for (std::size_t i = 0; i < atrous_rates.size(); ++i) os << (i ? "," : "") << atrous_rates[i];
    os << '\n';
    os << "atrous_branch_width=" << atrous_branch_width << '\n';
    os << "stage_channels=" << stage_channels[0] << ',' << stage_channels[1] << ','
       << stage_channels[2] << ',' << stage_channels[3] << '\n';
    os << "stage_depths=" << stage_depths[0] << ',' << stage_depths[1] << ',' << stage_depths[2]
       << ',' << stage_depths[3] << '\n';
    os << "stem_channels=" << stem_channels << '\n';
    os << "fc_widths=" << fc_widths[0] << ',' << fc_widths[1] << '\n';
    os << "dropout_p=" << dropout_p << '\n';
    os << "bn_enabled=" << (bn_enabled ? 1 : 0) << '\n';
    return os.str();
  }

  static MacNetConfig from_key_values(const std::string& text) {
    MacNetConfig cfg;
    std::istringstream is(text);
    std::string line;
    auto parse_list = [](const std::string& v) {
      std::vector<std::int64_t> out;
      std::istringstream ls(v);
      std::string item;
      while (std::getline(ls, item, ',')) out.push_back(std::stoll(item));
      return out;
    };
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("config block: missing '=' in line: " + line);
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "num_classes") cfg.num_classes = std::stoll(value);
      else if (key == "input_h") cfg.input_h = std::stoll(value);
      else if (key == "input_w") cfg.input_w = std::stoll(value);
      else if (key == "pyramid_levels") {
        if (std::stoll(value) != kPyramidLevels)
          throw ParseError("config block: pyramid_levels must be 5");
      } else if (key == "atrous_rates") cfg.atrous_rates = parse_list(value);
      else if (key == "atrous_branch_width") cfg.atrous_branch_width = std::stoll(value);
      else if (key == "stage_channels") {
        const auto v = parse_list(value);
        if (v.size() != 4) throw ParseError("config block: stage_channels needs 4 entries");
        std::copy(v.begin(), v.end(), cfg.stage_channels.begin());
      } else if (key == "stage_depths") {
        const auto v = parse_list(value);
        if (v.size() != 4) throw ParseError("config block: stage_depths needs 4 entries");
        std::copy(v.begin(), v.end(), cfg.stage_depths.begin());
      } else if (key == "stem_channels") cfg.stem_channels = std::stoll(value);
      else if (key == "fc_widths") {
        const auto v = parse_list(value);
        if (v.size() != 2) throw ParseError("config block: fc_widths needs 2 entries");
        cfg.fc_widths = {v[0], v[1]};
      } else if (key == "dropout_p") cfg.dropout_p = std::stod(value);
      else if (key == "bn_enabled") cfg.bn_enabled = std::stoll(value) != 0;
      else throw ParseError("config block: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
  }
};

// Named parameter/buffer registry in construction order. Parameters are
// trainable; buffers (batch-norm running moments) are serialized but
// never stepped by the optimizer.
template <class S>
struct ParamSet {
  std::vector<std::pair<std::string, TensorPtr<S>>> params;
  std::vector<std::pair<std::string, TensorPtr<S>>> buffers;

  void add_param(std::string name, TensorPtr<S> t) {
    params.emplace_back(std::move(name), std::move(t));
  }
  void add_buffer(std::string name, TensorPtr<S> t) {
    buffers.emplace_back(std::move(name), std::move(t));
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params) n += t->size();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : params) t->clear_grad();
  }
};

namespace arch_detail {

template <class S>
struct Initializer {
  Rng rng;
  NormalSampler normal;

  explicit Initializer(std::uint64_t seed) : rng(make_rng(seed)) {}

  // He-normal fan-in initialization for conv / linear weights.
  void fill_he(Tensor<S>& t, std::int64_t fan_in) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<S>(normal(rng, 0.0, stddev));
  }
};

template <class S>
struct Conv2dLayer {
  Conv2dSpec spec;
  TensorPtr<S> w;
  TensorPtr<S> b;  // null when the conv feeds a batch norm

  static Conv2dLayer make(const std::string& name, Conv2dSpec spec, bool with_bias,
                          ParamSet<S>& ps, Initializer<S>& init) {
    Conv2dLayer layer;
    layer.spec = spec;
    layer.w = make_tensor<S>({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w},
                             /*requires_grad=*/true);
    init.fill_he(*layer.w, spec.in_channels * spec.kernel_h * spec.kernel_w);
    ps.add_param(name + ".w", layer.w);
    if (with_bias) {
      layer.b = make_tensor<S>({spec.out_channels}, /*requires_grad=*/true);
      ps.add_param(name + ".b", layer.b);
    }
    return layer;
  }

  TensorPtr<S> forward(const TensorPtr<S>& x, Tape<S>* tape) const {
    return conv2d(x, w, b, spec, tape);
  }
};

template <class S>
struct PointwiseLayer {
  TensorPtr<S> w;
  TensorPtr<S> b;

  static PointwiseLayer make(const std::string& name, std::int64_t in_ch, std::int64_t out_ch,
                             ParamSet<S>& ps, Initializer<S>& init) {
    PointwiseLayer layer;
    layer.w = make_tensor<S>({out_ch, in_ch, 1, 1}, /*requires_grad=*/true);
    init.fill_he(*layer.w, in_ch);
    layer.b = make_tensor<S>({out_ch}, /*requires_grad=*/true);
    ps.add_param(name + ".w", layer.w);
    ps.add_param(name + ".b", layer.b);
    return layer;
  }

  TensorPtr<S> forward(const TensorPtr<S>& x, Tape<S>* tape) const {
    return pointwise_conv(x, w, b, tape);
  }
};

template <class S>
struct BatchNormLayer {
  TensorPtr<S> gamma;
  TensorPtr<S> beta;
  BnState<S> state;

  static BatchNormLayer make(const std::string& name, std::int64_t channels, ParamSet<S>& ps) {
    BatchNormLayer layer;
    layer.gamma = full_tensor<S>({channels}, S(1), /*requires_grad=*/true);
    layer.beta = make_tensor<S>({channels}, /*requires_grad=*/true);
    layer.state = BnState<S>::make(channels);
    ps.add_param(name + ".gamma", layer.gamma);
    ps.add_param(name + ".beta", layer.beta);
    ps.add_buffer(name + ".running_mean", layer.state.running_mean);
    ps.add_buffer(name + ".running_var", layer.state.running_var);
    return layer;
  }

  TensorPtr<S> forward(const TensorPtr<S>& x, Mode mode, Tape<S>* tape) {
    return batch_norm(x, gamma, beta, state, mode, tape);
  }
};

template <class S>
struct LinearLayer {
  TensorPtr<S> w;
  TensorPtr<S> b;

  static LinearLayer make(const std::string& name, std::int64_t in_d, std::int64_t out_d,
                          ParamSet<S>& ps, Initializer<S>& init) {
    LinearLayer layer;
    layer.w = make_tensor<S>({in_d, out_d}, /*requires_grad=*/true);
    init.fill_he(*layer.w, in_d);
    layer.b = make_tensor<S>({out_d}, /*requires_grad=*/true);
    ps.add_param(name + ".w", layer.w);
    ps.add_param(name + ".b", layer.b);
    return layer;
  }

  TensorPtr<S> forward(const TensorPtr<S>& x, Tape<S>* tape) const { return linear(x, w, b, tape); }
};

// Parallel 3x3 dilated branches, one per rate, each padded to preserve
// the spatial extents, concatenated along channels.
template <class S>
struct AtrousBlock {
  std::vector<Conv2dLayer<S>> convs;
  std::vector<BatchNormLayer<S>> bns;
  bool bn_enabled = true;

  static AtrousBlock make(const std::string& name, std::int64_t in_ch, std::int64_t branch_width,
                          const std::vector<std::int64_t>& rates, bool bn_enabled, ParamSet<S>& ps,
                          Initializer<S>& init) {
    AtrousBlock block;
    block.bn_enabled = bn_enabled;
    for (const auto rate : rates) {
      Conv2dSpec spec;
      spec.in_channels = in_ch;
      spec.out_channels = branch_width;
      spec.kernel_h = spec.kernel_w = 3;
      spec.rate_h = spec.rate_w = rate;
      spec.pad_h = spec.pad_w = rate;  // same padding for a 3x3 kernel
      const std::string branch = name + ".rate" + std::to_string(rate);
      block.convs.push_back(Conv2dLayer<S>::make(branch, spec, /*with_bias=*/!bn_enabled, ps, init));
      if (bn_enabled) block.bns.push_back(BatchNormLayer<S>::make(branch + ".bn", branch_width, ps));
    }
    return block;
  }

  TensorPtr<S> forward(const TensorPtr<S>& x, Mode mode, Tape<S>* tape) {
    std::vector<TensorPtr<S>> branches;
    branches.reserve(convs.size());
    for (std::size_t i = 0; i < convs.size(); ++i) {
      auto h = convs[i].forward(x, tape);
      if (bn_enabled) h = bns[i].forward(h, mode, tape);
      branches.push_back(relu(h, tape));
    }
    return concat_channels(branches, tape);
  }
};

// Standard bottleneck: 1x1 reduce -> 3x3 (stride s) -> 1x1 expand with
// an identity or projection shortcut.
template <class S>
struct Bottleneck {
  Conv2dLayer<S> conv1, conv2, conv3;
  std::optional<BatchNormLayer<S>> bn1, bn2, bn3;
  std::optional<Conv2dLayer<S>> proj;
  std::optional<BatchNormLayer<S>> bn_proj;

  static Bottleneck make(const std::string& name, std::int64_t in_ch, std::int64_t out_ch,
                         std::int64_t stride, bool bn_enabled, ParamSet<S>& ps,
                         Initializer<S>& init) {
    Bottleneck block;
    const std::int64_t mid = std::max<std::int64_t>(1, out_ch / 4);
    auto conv_spec = [](std::int64_t ic, std::int64_t oc, std::int64_t k, std::int64_t s,
                        std::int64_t pad) {
      Conv2dSpec spec;
      spec.in_channels = ic;
      spec.out_channels = oc;
      spec.kernel_h = spec.kernel_w = k;
      spec.stride_h = spec.stride_w = s;
      spec.pad_h = spec.pad_w = pad;
      return spec;
    };
    const bool bias = !bn_enabled;
    block.conv1 = Conv2dLayer<S>::make(name + ".conv1", conv_spec(in_ch, mid, 1, 1, 0), bias, ps, init);
    if (bn_enabled) block.bn1 = BatchNormLayer<S>::make(name + ".bn1", mid, ps);
    block.conv2 = Conv2dLayer<S>::make(name + ".conv2", conv_spec(mid, mid, 3, stride, 1), bias, ps, init);
    if (bn_enabled) block.bn2 = BatchNormLayer<S>::make(name + ".bn2", mid, ps);
    block.conv3 = Conv2dLayer<S>::make(name + ".conv3", conv_spec(mid, out_ch, 1, 1, 0), bias, ps, init);
    if (bn_enabled) block.bn3 = BatchNormLayer<S>::make(name + ".bn3", out_ch, ps);
    if (in_ch != out_ch || stride != 1) {
      block.proj = Conv2dLayer<S>::make(name + ".proj", conv_spec(in_ch, out_ch, 1, stride, 0), bias,
                                        ps, init);
      if (bn_enabled) block.bn_proj = BatchNormLayer<S>::make(name + ".proj.bn", out_ch, ps);
    }
    return block;
  }

  TensorPtr<S> forward(const TensorPtr<S>& x, Mode mode, Tape<S>* tape) {
    auto h = conv1.forward(x, tape);
    if (bn1) h = bn1->forward(h, mode, tape);
    h = relu(h, tape);
    h = conv2.forward(h, tape);
    if (bn2) h = bn2->forward(h, mode, tape);
    h = relu(h, tape);
    h = conv3.forward(h, tape);
    if (bn3) h = bn3->forward(h, mode, tape);
    TensorPtr<S> shortcut = x;
    if (proj) {
      shortcut = proj->forward(x, tape);
      if (bn_proj) shortcut = bn_proj->forward(shortcut, mode, tape);
    }
    return relu(add(h, shortcut, tape), tape);
  }
};

}  // namespace arch_detail

// Per-sample class probabilities plus top-k label lists (descending
// probability, ties broken by ascending class index).
template <class S>
struct Prediction {
  TensorPtr<S> probabilities;               // [N, num_classes]
  std::vector<std::vector<int>> topk;       // one list per sample
};

// Returns the indices of the k largest entries, descending, ties by
// ascending index.
inline std::vector<int> topk_indices(const std::vector<double>& row, int k) {
  std::vector<int> idx(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) idx[i] = static_cast<int>(i);
  std::stable_sort(idx.begin(), idx.end(),
                   [&row](int a, int b) { return row[a] > row[b]; });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

// The assembled network of: five-level image pyramid, five multi-rate
// atrous blocks with pointwise channel adapters, four stride-2
// bottleneck stages, and the fully connected head.
template <class S>
class MacNetModel {
 public:
  static MacNetModel init(const MacNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    MacNetModel model;
    model.cfg_ = cfg;
    model.seed_ = seed;
    arch_detail::Initializer<S> init(seed);
    auto& ps = model.params_;

    Conv2dSpec stem_spec;
    stem_spec.in_channels = 3;
    stem_spec.out_channels = cfg.stem_channels;
    stem_spec.kernel_h = stem_spec.kernel_w = 3;
    stem_spec.pad_h = stem_spec.pad_w = 1;
    model.stem_ = arch_detail::Conv2dLayer<S>::make("stem", stem_spec, /*with_bias=*/true, ps, init);

    for (int level = 0; level < MacNetConfig::kPyramidLevels; ++level) {
      const std::int64_t target =
          level == 0 ? cfg.stem_channels : cfg.stage_channels[static_cast<std::size_t>(level - 1)];
      model.atrous_.push_back(arch_detail::AtrousBlock<S>::make(
          "atrous" + std::to_string(level), 3, cfg.atrous_branch_width, cfg.atrous_rates,
          cfg.bn_enabled, ps, init));
      model.adapters_.push_back(arch_detail::PointwiseLayer<S>::make(
          "adapter" + std::to_string(level),
          cfg.atrous_branch_width * static_cast<std::int64_t>(cfg.atrous_rates.size()), target, ps,
          init));
    }

    std::int64_t in_ch = cfg.stem_channels;
    for (int stage = 0; stage < 4; ++stage) {
      std::vector<arch_detail::Bottleneck<S>> blocks;
      const std::int64_t out_ch = cfg.stage_channels[static_cast<std::size_t>(stage)];
      for (std::int64_t d = 0; d < cfg.stage_depths[static_cast<std::size_t>(stage)]; ++d) {
        const std::string name =
            "stage" + std::to_string(stage + 1) + ".block" + std::to_string(d);
        blocks.push_back(arch_detail::Bottleneck<S>::make(name, d == 0 ? in_ch : out_ch, out_ch,
                                                          d == 0 ? 2 : 1, cfg.bn_enabled, ps, init));
      }
      model.stages_.push_back(std::move(blocks));
      in_ch = out_ch;
    }

    model.fc1_ = arch_detail::LinearLayer<S>::make("head.fc1", cfg.stage_channels[3],
                                                   cfg.fc_widths[0], ps, init);
    model.fc2_ = arch_detail::LinearLayer<S>::make("head.fc2", cfg.fc_widths[0], cfg.fc_widths[1],
                                                   ps, init);
    model.fc3_ = arch_detail::LinearLayer<S>::make("head.fc3", cfg.fc_widths[1], cfg.num_classes,
                                                   ps, init);
    return model;
  }

  const MacNetConfig& config() const { return cfg_; }
  std::uint64_t init_seed() const { return seed_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }
  std::int64_t parameter_count() const { return params_.parameter_count(); }

  // Shapes of the four stage outputs observed by the latest forward.
  const std::vector<Shape>& last_stage_shapes() const { return stage_shapes_; }

  // Image pyramid at scales 1, 1/2, 1/4, 1/8, 1/16; level 0 is the
  // input itself.
  static std::vector<TensorPtr<S>> build_pyramid(const TensorPtr<S>& image) {
    detail::require_rank(image, 4, "build_pyramid input");
    const std::int64_t h = image->shape[2], w = image->shape[3];
    if (h % 16 != 0 || w % 16 != 0) {
      throw ShapeError("build_pyramid: extents " + std::to_string(h) + "x" + std::to_string(w) +
                       " must be divisible by 16; pad input to " +
                       std::to_string(((h + 15) / 16) * 16) + "x" +
                       std::to_string(((w + 15) / 16) * 16));
    }
    std::vector<TensorPtr<S>> levels;
    levels.push_back(image);
    for (int i = 1; i < MacNetConfig::kPyramidLevels; ++i) {
      levels.push_back(downsample_avg(image, std::int64_t{1} << i));
    }
    return levels;
  }

  // Forward pass to logits [N, num_classes]. The dropout seed selects
  // the train-mode dropout masks; eval mode ignores it.
  TensorPtr<S> forward(const TensorPtr<S>& images, Tape<S>* tape, std::uint64_t dropout_seed = 0) {
    detail::require_rank(images, 4, "macnet forward input");
    if (images->shape[1] != 3) {
      throw ShapeError("macnet forward: expected 3 input channels, got " +
                       std::to_string(images->shape[1]));
    }
    auto pyramid = build_pyramid(images);
    check_finite(images, "input");

    auto x = stem_.forward(pyramid[0], tape);
    check_finite(x, "stem");
    {
      auto a = atrous_[0].forward(pyramid[0], mode_, tape);
      a = adapters_[0].forward(a, tape);
      check_finite(a, "adapter0");
      x = add(x, a, tape);
    }
    stage_shapes_.clear();
    for (int stage = 0; stage < 4; ++stage) {
      for (auto& block : stages_[static_cast<std::size_t>(stage)]) {
        x = block.forward(x, mode_, tape);
      }
      stage_shapes_.push_back(x->shape);
      check_finite(x, "stage" + std::to_string(stage + 1));
      auto a = atrous_[static_cast<std::size_t>(stage + 1)].forward(
          pyramid[static_cast<std::size_t>(stage + 1)], mode_, tape);
      a = adapters_[static_cast<std::size_t>(stage + 1)].forward(a, tape);
      check_finite(a, "adapter" + std::to_string(stage + 1));
      x = add(x, a, tape);
    }

    auto feat = global_avg_pool(x, tape);
    auto h = relu(fc1_.forward(feat, tape), tape);
    h = apply_dropout(h, tape, dropout_seed, 1);
    h = fc2_.forward(h, tape);
    h = apply_dropout(h, tape, dropout_seed, 2);
    auto logits = fc3_.forward(h, tape);
    check_finite(logits, "head");
    return logits;
  }

  // Eval-mode probabilities and top-k lists.
  Prediction<S> predict(const TensorPtr<S>& images, int top_k = 5) {
    if (mode_ != Mode::kEval) {
      throw ModeError("predict requires eval mode (train-mode dropout is stochastic)");
    }
    if (top_k < 1 || top_k > cfg_.num_classes) {
      throw ConfigError("predict: top_k must be in [1, num_classes]");
    }
    auto logits = forward(images, nullptr);
    auto probs = softmax<S>(logits, nullptr);
    Prediction<S> pred;
    pred.probabilities = probs;
    const std::int64_t n = probs->shape[0], k = probs->shape[1];
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<double> row(static_cast<std::size_t>(k));
      for (std::int64_t j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] =
          static_cast<double>(probs->data[i * k + j]);
      pred.topk.push_back(topk_indices(row, top_k));
    }
    return pred;
  }

 private:
  TensorPtr<S> apply_dropout(const TensorPtr<S>& x, Tape<S>* tape, std::uint64_t seed, int layer) {
    if (mode_ == Mode::kEval || cfg_.dropout_p == 0.0) return x;
    Rng rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(layer)));
    return dropout(x, cfg_.dropout_p, mode_, rng, tape);
  }

  static void check_finite(const TensorPtr<S>& t, const std::string& where) {
    if (!t->all_finite()) {
      throw NumericFault("non-finite activation after " + where);
    }
  }

  MacNetConfig cfg_;
  std::uint64_t seed_ = 0;
  Mode mode_ = Mode::kTrain;
  std::vector<Shape> stage_shapes_;
  ParamSet<S> params_;
  arch_detail::Conv2dLayer<S> stem_;
  std::vector<arch_detail::AtrousBlock<S>> atrous_;
  std::vector<arch_detail::PointwiseLayer<S>> adapters_;
  std::vector<std::vector<arch_detail::Bottleneck<S>>> stages_;
  arch_detail::LinearLayer<S> fc1_, fc2_, fc3_;
};

}  // namespace macnet
