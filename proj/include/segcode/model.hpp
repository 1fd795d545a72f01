#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segcode/image.hpp"
#include "segcode/ops.hpp"
#include "segcode/rng.hpp"
#include "segcode/tensor.hpp"

namespace segcode {

// ---------------------------------------------------------------------------
// Configuration

struct EncoderStageSpec {
  Index filters = 0;
  Index kernel = 3;
  Index stride = 1;
};

struct ModelConfig {
  Index resolution = 32;   // square input side
  Index k = 8;             // frames per clip after sub-sampling
  Index d = 32;            // per-stream feature size (= last stage filters)
  Index u = 32;            // LSTM hidden size per direction
  Index num_classes = 0;
  bool single_stream = false;
  std::vector<EncoderStageSpec> stages;  // empty -> ladder derived from d

  std::vector<EncoderStageSpec> effective_stages() const {
    if (!stages.empty()) return stages;
    return {{std::max<Index>(1, d / 4), 3, 1}, {std::max<Index>(1, d / 2), 3, 1}, {d, 3, 1}};
  }

  Index lstm_input_width() const { return single_stream ? d : 2 * d; }

  /// Checks extents: every pool input must be at least 2x2 and the final
  /// spatial extent at least 1 for the configured resolution.
  void validate() const {
    if (resolution < 8 || resolution > 512)
      throw ConfigError("model: resolution " + std::to_string(resolution) + " outside supported [8, 512]");
    if (k < 1 || u < 1 || d < 1 || num_classes < 2)
      throw ConfigError("model: need k >= 1, d >= 1, u >= 1 and at least 2 classes");
    const auto st = effective_stages();
    if (st.empty()) throw ConfigError("model: encoder needs at least one stage");
    if (st.back().filters != d)
      throw ConfigError("model: last stage filters " + std::to_string(st.back().filters) +
                        " must equal feature size d = " + std::to_string(d));
    Index e = resolution;
    for (const auto& s : st) {
      if (s.filters < 1 || s.kernel < 1 || s.stride < 1)
        throw ConfigError("model: encoder stage extents must be positive");
      const Index pad = s.kernel / 2;
      e = (e + 2 * pad - s.kernel) / s.stride + 1;
      if (e < 2)
        throw ConfigError("model: spatial extent collapses below 2x2 before a pool at resolution " +
                          std::to_string(resolution));
      e /= 2;  // 2x2 max pool
    }
    if (e < 1) throw ConfigError("model: final spatial extent below 1");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["resolution"] = resolution;
    j["k"] = k;
    j["d"] = d;
    j["u"] = u;
    j["classes"] = num_classes;
    j["single_stream"] = single_stream;
    if (!stages.empty()) {
      nlohmann::json js = nlohmann::json::array();
      for (const auto& s : stages) js.push_back({s.filters, s.kernel, s.stride});
      j["encoder_stages"] = std::move(js);
    }
    return j;
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.resolution = j.at("resolution").get<Index>();
    c.k = j.at("k").get<Index>();
    c.d = j.at("d").get<Index>();
    c.u = j.at("u").get<Index>();
    c.num_classes = j.at("classes").get<Index>();
    c.single_stream = j.value("single_stream", false);
    if (j.contains("encoder_stages"))
      for (const auto& js : j["encoder_stages"])
        c.stages.push_back({js.at(0).get<Index>(), js.at(1).get<Index>(), js.at(2).get<Index>()});
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Parameters

template <typename S>
struct ConvStage {
  Tensor<S> kernel;  // [f, c, kh, kw]
  Tensor<S> bias;    // [f]
  Index stride = 1;
  Index padding = 0;
};

/// Per-frame feature extractor: conv stages (each ReLU + 2x2 max-pool) and a
/// global average pool down to [k, d].
template <typename S>
struct Encoder {
  std::vector<ConvStage<S>> stages;
  Index input_resolution = 0;

  Index feature_dim() const { return stages.back().kernel.dim(0); }
};

/// Stream-wise attention: independently learned scalar gates, mapped through
/// a sigmoid so eta stays strictly inside (0, 1).
template <typename S>
struct StreamGate {
  Tensor<S> theta_rgb;   // [1]
  Tensor<S> theta_mask;  // [1]

  S eta_rgb() const { return detail::stable_sigmoid(theta_rgb.item()); }
  S eta_mask() const { return detail::stable_sigmoid(theta_mask.item()); }
};

/// Frame-wise attention: a[n] = sigmoid(v . h[n] + bias).
template <typename S>
struct FrameAttention {
  Tensor<S> v;     // [2u, 1]
  Tensor<S> bias;  // [1]
};

template <typename S>
struct TwoStreamParams {
  ModelConfig config;
  Encoder<S> rgb_encoder;
  Encoder<S> mask_encoder;  // unused in single-stream mode
  StreamGate<S> gate;       // unused in single-stream mode
  LstmParams<S> lstm_fwd;
  LstmParams<S> lstm_bwd;
  FrameAttention<S> attn;
  Tensor<S> classifier_w;  // [2u, C]
  Tensor<S> classifier_b;  // [C]

  static TwoStreamParams init(const ModelConfig& config, std::uint64_t seed);

  /// Stable name -> tensor listing; the order is the checkpoint order.
  std::vector<std::pair<std::string, Tensor<S>>> named() const;

  void set_requires_grad_all(bool b) {
    for (auto& [name, t] : named()) t.set_requires_grad(b);
  }
  void zero_grad_all() {
    for (auto& [name, t] : named()) t.zero_grad();
  }
};

namespace detail {

template <typename S>
void init_uniform(Tensor<S>& t, SplitMix64& rng, double bound) {
  S* v = t.data();
  for (Index i = 0; i < t.numel(); ++i)
    v[i] = static_cast<S>(rng.next_range(-bound, bound));
}

template <typename S>
Encoder<S> init_encoder(const ModelConfig& config, Index in_channels, SplitMix64& rng) {
  Encoder<S> enc;
  enc.input_resolution = config.resolution;
  Index c = in_channels;
  for (const auto& spec : config.effective_stages()) {
    ConvStage<S> st;
    st.stride = spec.stride;
    st.padding = spec.kernel / 2;
    st.kernel = Tensor<S>::zeros({spec.filters, c, spec.kernel, spec.kernel});
    st.bias = Tensor<S>::zeros({spec.filters});
    const double fan_in = static_cast<double>(c * spec.kernel * spec.kernel);
    init_uniform(st.kernel, rng, std::sqrt(1.0 / fan_in));
    enc.stages.push_back(std::move(st));
    c = spec.filters;
  }
  return enc;
}

template <typename S>
LstmParams<S> init_lstm(Index input, Index u, SplitMix64& rng) {
  LstmParams<S> p;
  p.w_ih = Tensor<S>::zeros({input, 4 * u});
  p.w_hh = Tensor<S>::zeros({u, 4 * u});
  p.bias = Tensor<S>::zeros({4 * u});
  init_uniform(p.w_ih, rng, std::sqrt(1.0 / static_cast<double>(input)));
  init_uniform(p.w_hh, rng, std::sqrt(1.0 / static_cast<double>(u)));
  for (Index i = u; i < 2 * u; ++i) p.bias.data()[i] = S(1);  // forget gate open at start
  return p;
}

}  // namespace detail

template <typename S>
TwoStreamParams<S> TwoStreamParams<S>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  SplitMix64 rng(seed);
  TwoStreamParams<S> p;
  p.config = config;
  p.rgb_encoder = detail::init_encoder<S>(config, 3, rng);
  if (!config.single_stream) {
    p.mask_encoder = detail::init_encoder<S>(config, 3, rng);
    p.gate.theta_rgb = Tensor<S>::zeros({1});   // eta = 0.5, neutral
    p.gate.theta_mask = Tensor<S>::zeros({1});
  }
  const Index m = config.lstm_input_width();
  p.lstm_fwd = detail::init_lstm<S>(m, config.u, rng);
  p.lstm_bwd = detail::init_lstm<S>(m, config.u, rng);
  p.attn.v = Tensor<S>::zeros({2 * config.u, 1});
  detail::init_uniform(p.attn.v, rng, std::sqrt(1.0 / static_cast<double>(2 * config.u)));
  p.attn.bias = Tensor<S>::zeros({1});
  p.classifier_w = Tensor<S>::zeros({2 * config.u, config.num_classes});
  detail::init_uniform(p.classifier_w, rng, std::sqrt(1.0 / static_cast<double>(2 * config.u)));
  p.classifier_b = Tensor<S>::zeros({config.num_classes});
  return p;
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>>> TwoStreamParams<S>::named() const {
  std::vector<std::pair<std::string, Tensor<S>>> out;
  auto add_encoder = [&out](const std::string& prefix, const Encoder<S>& enc) {
    for (std::size_t i = 0; i < enc.stages.size(); ++i) {
      out.emplace_back(prefix + ".stage" + std::to_string(i) + ".kernel", enc.stages[i].kernel);
      out.emplace_back(prefix + ".stage" + std::to_string(i) + ".bias", enc.stages[i].bias);
    }
  };
  add_encoder("rgb_encoder", rgb_encoder);
  if (!config.single_stream) {
    add_encoder("mask_encoder", mask_encoder);
    out.emplace_back("gate.theta_rgb", gate.theta_rgb);
    out.emplace_back("gate.theta_mask", gate.theta_mask);
  }
  out.emplace_back("lstm.fwd.w_ih", lstm_fwd.w_ih);
  out.emplace_back("lstm.fwd.w_hh", lstm_fwd.w_hh);
  out.emplace_back("lstm.fwd.bias", lstm_fwd.bias);
  out.emplace_back("lstm.bwd.w_ih", lstm_bwd.w_ih);
  out.emplace_back("lstm.bwd.w_hh", lstm_bwd.w_hh);
  out.emplace_back("lstm.bwd.bias", lstm_bwd.bias);
  out.emplace_back("frame_attn.v", attn.v);
  out.emplace_back("frame_attn.bias", attn.bias);
  out.emplace_back("classifier.weight", classifier_w);
  out.emplace_back("classifier.bias", classifier_b);
  return out;
}

// ---------------------------------------------------------------------------
// Forward pieces

/// Packs k equally sized frames into a [k, 3, r, r] tensor scaled to [0, 1].
template <typename S>
Tensor<S> frames_to_tensor(const std::vector<Frame>& frames) {
  if (frames.empty()) throw DimensionError("frames_to_tensor: empty clip");
  const Index k = static_cast<Index>(frames.size());
  const Index h = frames[0].height, w = frames[0].width;
  Tensor<S> t = Tensor<S>::zeros({k, 3, h, w});
  S* out = t.data();
  for (Index n = 0; n < k; ++n) {
    const Frame& f = frames[static_cast<std::size_t>(n)];
    if (f.height != h || f.width != w)
      throw DimensionError("frames_to_tensor: frame " + std::to_string(n) + " is " +
                           std::to_string(f.height) + "x" + std::to_string(f.width) + ", expected " +
                           std::to_string(h) + "x" + std::to_string(w));
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          out[((n * 3 + c) * h + y) * w + x] =
              static_cast<S>(f.pixels[3 * (static_cast<std::size_t>(y) * w + x) + c]) / S(255);
  }
  return t;
}

/// Runs the conv stack over a clip tensor [k, 3, r, r] -> per-frame features
/// [k, d]. Row n is the feature vector of frame n.
template <typename S>
Tensor<S> encode_frames(const Tensor<S>& clip, const Encoder<S>& encoder) {
  if (clip.rank() != 4 || clip.dim(1) != encoder.stages.front().kernel.dim(1) ||
      clip.dim(2) != encoder.input_resolution || clip.dim(3) != encoder.input_resolution)
    throw DimensionError("encode_frames: clip " + shape_str(clip.shape()) + " does not match encoder input " +
                         std::to_string(encoder.input_resolution) + "x" +
                         std::to_string(encoder.input_resolution));
  Tensor<S> x = clip;
  for (const auto& st : encoder.stages) {
    x = conv2d(x, st.kernel, st.bias, st.stride, st.padding);
    x = relu(x);
    x = maxpool2x2(x);
  }
  return global_avg_pool(x);
}

/// Row n = (eta_rgb * f_rgb[n]) || (eta_mask * f_mask[n]); RGB half first.
template <typename S>
Tensor<S> gate_and_concat(const Tensor<S>& f_rgb, const Tensor<S>& f_mask, const StreamGate<S>& gate) {
  detail::check_same_shape("gate_and_concat", f_rgb, f_mask);
  Tensor<S> eta_rgb = sigmoid(gate.theta_rgb);
  Tensor<S> eta_mask = sigmoid(gate.theta_mask);
  return concat_last(scale(f_rgb, eta_rgb), scale(f_mask, eta_mask));
}

/// Single-layer bidirectional LSTM over [k, m] -> [k, 2u]; row n is the
/// forward hidden state at step n followed by the backward hidden state.
template <typename S>
Tensor<S> bilstm(const Tensor<S>& seq, const LstmParams<S>& fwd, const LstmParams<S>& bwd) {
  if (seq.rank() != 2 || seq.dim(1) != fwd.w_ih.dim(0))
    throw DimensionError("bilstm: sequence " + shape_str(seq.shape()) + " vs input width " +
                         std::to_string(fwd.w_ih.dim(0)));
  const Index k = seq.dim(0), u = fwd.hidden_size();
  std::vector<Tensor<S>> h_fwd(static_cast<std::size_t>(k)), h_bwd(static_cast<std::size_t>(k));
  Tensor<S> h = Tensor<S>::zeros({1, u}), c = Tensor<S>::zeros({1, u});
  for (Index t = 0; t < k; ++t) {
    auto [nh, nc] = lstm_cell(row(seq, t), h, c, fwd);
    h = nh;
    c = nc;
    h_fwd[static_cast<std::size_t>(t)] = h;
  }
  h = Tensor<S>::zeros({1, u});
  c = Tensor<S>::zeros({1, u});
  for (Index t = k - 1; t >= 0; --t) {
    auto [nh, nc] = lstm_cell(row(seq, t), h, c, bwd);
    h = nh;
    c = nc;
    h_bwd[static_cast<std::size_t>(t)] = h;
  }
  std::vector<Tensor<S>> rows;
  rows.reserve(static_cast<std::size_t>(k));
  for (Index t = 0; t < k; ++t)
    rows.push_back(concat_last(h_fwd[static_cast<std::size_t>(t)], h_bwd[static_cast<std::size_t>(t)]));
  return stack_rows(rows);
}

/// Frame-wise attention pooling: a[n] = sigmoid(v . h[n] + bias),
/// pooled = sum_n a[n] h[n] / sum_n a[n]. Returns (pooled [1, 2u], a [k, 1]).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> attend_and_pool(const Tensor<S>& h_seq, const FrameAttention<S>& attn) {
  Tensor<S> scores = linear(h_seq, attn.v, attn.bias);  // [k, 1]
  Tensor<S> a = sigmoid(scores);
  Tensor<S> weighted = mul_rows(h_seq, a);
  Tensor<S> pooled = div_scalar(sum_rows(weighted), sum_all(a));
  return {pooled, a};
}

template <typename S>
struct ForwardResult {
  Tensor<S> logits;         // [1, C]
  Tensor<S> probs;          // [1, C]
  Tensor<S> frame_weights;  // [k, 1]
};

/// Full clip forward: per-frame encoders, stream gating and concatenation
/// (two-stream mode), BiLSTM, frame-wise attention pooling, classifier.
/// `mask_clip` must be undefined in single-stream mode and defined otherwise.
template <typename S>
ForwardResult<S> forward_clip(const Tensor<S>& rgb_clip, const Tensor<S>& mask_clip,
                              const TwoStreamParams<S>& params) {
  Tensor<S> seq;
  if (params.config.single_stream) {
    seq = encode_frames(rgb_clip, params.rgb_encoder);
  } else {
    if (!mask_clip.defined())
      throw DimensionError("forward: mask stream missing in two-stream mode");
    Tensor<S> f_rgb = encode_frames(rgb_clip, params.rgb_encoder);
    Tensor<S> f_mask = encode_frames(mask_clip, params.mask_encoder);
    seq = gate_and_concat(f_rgb, f_mask, params.gate);
  }
  Tensor<S> h_seq = bilstm(seq, params.lstm_fwd, params.lstm_bwd);
  auto [pooled, weights] = attend_and_pool(h_seq, params.attn);
  ForwardResult<S> out;
  out.logits = linear(pooled, params.classifier_w, params.classifier_b);
  out.probs = softmax(out.logits);
  out.frame_weights = weights;
  return out;
}

/// Deep value snapshot in named() order, for best-epoch bookkeeping.
template <typename S>
std::vector<std::vector<S>> snapshot_values(const TwoStreamParams<S>& params) {
  std::vector<std::vector<S>> out;
  for (const auto& [name, t] : params.named()) out.push_back(t.values());
  return out;
}

template <typename S>
void restore_values(TwoStreamParams<S>& params, const std::vector<std::vector<S>>& snapshot) {
  auto named = params.named();
  if (named.size() != snapshot.size())
    throw DimensionError("restore_values: snapshot size mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor<S> t = named[i].second;
    if (t.values().size() != snapshot[i].size())
      throw DimensionError("restore_values: tensor " + named[i].first + " size mismatch");
    t.values() = snapshot[i];
  }
}

}  // namespace segcode
