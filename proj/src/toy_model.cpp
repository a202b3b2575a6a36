#include "jrt/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "jrt/kernels.hpp"

namespace jrt {
namespace {

struct Slot {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in;
  bool decay;
};

// Parameter order shared by construction, build() and checkpoints.
std::vector<Slot> layout(const ToyConfig& cfg) {
  const std::size_t d = cfg.d_model, h = cfg.mlp_hidden(), hf = cfg.n_heads * cfg.feature_dim;
  const auto V = static_cast<std::size_t>(cfg.vocab);
  std::vector<Slot> slots;
  // An embedding row reads a single one-hot input.
  slots.push_back({"embed", {V, d}, 1, true});
  auto mlp = [&](const std::string& p) {
    slots.push_back({p + ".w1", {d, h}, d, true});
    slots.push_back({p + ".b1", {h}, d, false});
    slots.push_back({p + ".w2", {h, d}, h, true});
    slots.push_back({p + ".b2", {d}, h, false});
  };
  for (std::size_t b = 0; b < cfg.blocks(); ++b) {
    const std::string conv = "conv" + std::to_string(b);
    slots.push_back({conv + ".proj", {d, d}, d, true});
    slots.push_back({conv + ".proj_bias", {d}, d, false});
    slots.push_back({conv + ".filter", {cfg.conv_filter, d}, cfg.conv_filter, false});
    slots.push_back({conv + ".filter_bias", {d}, cfg.conv_filter, false});
    mlp("mlp" + std::to_string(2 * b));
    const std::string attn = "attn" + std::to_string(b);
    slots.push_back({attn + ".wq", {d, hf}, d, true});
    slots.push_back({attn + ".wk", {d, hf}, d, true});
    slots.push_back({attn + ".wv", {d, d}, d, true});
    slots.push_back({attn + ".wo", {d, d}, d, true});
    mlp("mlp" + std::to_string(2 * b + 1));
  }
  slots.push_back({"unembed", {d, V}, d, true});
  return slots;
}

double lr_at(const TrainOptions& o, std::size_t step, std::size_t total) {
  const auto warmup = static_cast<std::size_t>(std::ceil(o.warmup_fraction * total));
  if (step < warmup) return o.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double span = static_cast<double>(std::max<std::size_t>(total - warmup, 1));
  const double progress = static_cast<double>(step - warmup) / span;
  const double pi = std::acos(-1.0);
  const double floor = o.final_lr_fraction;
  return o.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(pi * progress)));
}

// Indices grouped into same-length batches.
std::vector<std::vector<std::size_t>> length_batches(const std::vector<SDInstance>& data,
                                                     std::size_t batch_size,
                                                     std::mt19937_64* shuffle) {
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < data.size(); ++i) by_length[data[i].input_ids.size()].push_back(i);
  std::vector<std::vector<std::size_t>> batches;
  for (auto& [len, idx] : by_length) {
    if (shuffle != nullptr) std::shuffle(idx.begin(), idx.end(), *shuffle);
    for (std::size_t s = 0; s < idx.size(); s += batch_size) {
      batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s),
                           idx.begin() + static_cast<std::ptrdiff_t>(std::min(s + batch_size, idx.size())));
    }
  }
  if (shuffle != nullptr) std::shuffle(batches.begin(), batches.end(), *shuffle);
  return batches;
}

struct Stacked {
  std::vector<int> tokens;
  std::vector<std::size_t> answer_rows;
  std::vector<int> labels;
  std::size_t seq_len = 0;
};

Stacked stack(const std::vector<SDInstance>& data, const std::vector<std::size_t>& batch) {
  Stacked s;
  s.seq_len = data[batch.front()].input_ids.size();
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const SDInstance& inst = data[batch[j]];
    s.tokens.insert(s.tokens.end(), inst.input_ids.begin(), inst.input_ids.end());
    s.answer_rows.push_back(j * s.seq_len + inst.answer_position());
    s.labels.push_back(inst.target);
  }
  return s;
}

}  // namespace

std::size_t bytes_per_element(Precision p) { return p == Precision::fp32 ? 4 : 8; }

Precision parse_precision(const std::string& name) {
  if (name == "fp32" || name == "float32") return Precision::fp32;
  if (name == "fp64" || name == "float64") return Precision::fp64;
  throw std::invalid_argument("unknown precision: " + name);
}

std::size_t ToyConfig::state_feature_dim() const { return kernels::taylor2_dim(feature_dim); }

void ToyConfig::validate() const {
  if (n_layers == 0 || n_layers % 2 != 0) {
    throw std::invalid_argument("toy config: layer count must be a positive even number");
  }
  if (d_model == 0 || feature_dim == 0 || n_heads == 0 || conv_filter == 0) {
    throw std::invalid_argument("toy config: dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("toy config: d_model " + std::to_string(d_model) +
                                " does not split into " + std::to_string(n_heads) + " heads");
  }
  if (vocab < 2) throw std::invalid_argument("toy config: vocabulary too small");
}

std::size_t state_size_bytes(const ToyConfig& cfg) {
  cfg.validate();
  const std::size_t bpe = bytes_per_element(cfg.precision);
  const std::size_t D = cfg.state_feature_dim();
  const std::size_t attn = cfg.n_heads * (D * cfg.head_dim() + D) * bpe;
  const std::size_t conv = (cfg.conv_filter - 1) * cfg.d_model * bpe;
  return cfg.blocks() * (attn + conv);
}

template <typename T>
ToyModel<T>::ToyModel(const ToyConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 gen(seed);
  for (const Slot& slot : layout(cfg_)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(slot.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> value(slot.shape);
    for (T& x : value.data()) x = static_cast<T>(dist(gen));
    params_.push_back({slot.name, std::move(value), slot.decay});
  }
}

template <typename T>
ToyModel<T>::ToyModel(const ToyConfig& cfg, std::vector<NamedTensor<T>> params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  const auto slots = layout(cfg_);
  if (slots.size() != params_.size()) {
    throw std::invalid_argument("toy model: expected " + std::to_string(slots.size()) +
                                " tensors, got " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].name != params_[i].name || slots[i].shape != params_[i].value.shape()) {
      throw std::invalid_argument("toy model: tensor " + std::to_string(i) + " is " +
                                  params_[i].name + " " + shape_string(params_[i].value.shape()) +
                                  ", expected " + slots[i].name + " " +
                                  shape_string(slots[i].shape));
    }
    params_[i].decay = slots[i].decay;
  }
}

template <typename T>
std::size_t ToyModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
typename ToyModel<T>::Graph ToyModel<T>::build(Tape<T>& tape, std::span<const int> tokens,
                                               std::size_t seq_len,
                                               std::span<const std::size_t> rows,
                                               bool trainable) const {
  if (seq_len == 0 || tokens.size() % seq_len != 0) {
    throw ShapeError("toy model: " + std::to_string(tokens.size()) +
                     " tokens do not split into sequences of " + std::to_string(seq_len));
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg_.vocab) {
      throw std::out_of_range("toy model: token id " + std::to_string(id) + " outside [0, " +
                              std::to_string(cfg_.vocab) + ")");
    }
  }
  Graph g;
  g.params.reserve(params_.size());
  for (const auto& p : params_)
    g.params.push_back(trainable ? tape.parameter(p.value) : tape.leaf(p.value));

  std::size_t cursor = 0;
  auto next = [&]() { return g.params[cursor++]; };
  auto mlp = [&](Var x) {
    const Var w1 = next(), b1 = next(), w2 = next(), b2 = next();
    const Var hidden = tape.gelu(tape.add_bias(tape.matmul(x, w1), b1));
    return tape.add_bias(tape.matmul(hidden, w2), b2);
  };

  Var x = tape.embedding(next(), tokens);
  for (std::size_t b = 0; b < cfg_.blocks(); ++b) {
    // Gated convolution: (uW + B) * (K conv u + B_K).
    const Var proj = next(), proj_bias = next(), filter = next(), filter_bias = next();
    const Var gate = tape.add_bias(tape.matmul(x, proj), proj_bias);
    const Var conv = tape.add_bias(tape.conv1d(x, filter, seq_len, cfg_.causal), filter_bias);
    x = tape.add(x, tape.mul(gate, conv));
    g.hidden.push_back(x);
    x = tape.add(x, mlp(x));
    g.hidden.push_back(x);

    const Var wq = next(), wk = next(), wv = next(), wo = next();
    const Var phi_q = tape.taylor2(tape.matmul(x, wq), cfg_.n_heads);
    const Var phi_k = tape.taylor2(tape.matmul(x, wk), cfg_.n_heads);
    const Var attn = tape.linear_attention(phi_q, phi_k, tape.matmul(x, wv), cfg_.n_heads, seq_len,
                                           cfg_.causal);
    x = tape.add(x, tape.matmul(attn, wo));
    g.hidden.push_back(x);
    x = tape.add(x, mlp(x));
    g.hidden.push_back(x);
  }
  if (!rows.empty()) x = tape.gather_rows(x, rows);
  g.logits = tape.matmul(x, next());
  return g;
}

template <typename T>
Tensor<T> ToyModel<T>::forward(std::span<const int> tokens) const {
  Tape<T> tape;
  const Graph g = build(tape, tokens, tokens.size());
  return tape.value(g.logits);
}

template <typename T>
std::vector<int> predict_answers(const ToyModel<T>& model, const std::vector<SDInstance>& data,
                                 std::size_t batch_size) {
  std::vector<int> out(data.size(), -1);
  for (const auto& batch : length_batches(data, std::max<std::size_t>(batch_size, 1), nullptr)) {
    const Stacked s = stack(data, batch);
    Tape<T> tape;
    const auto g = model.build(tape, s.tokens, s.seq_len, s.answer_rows);
    const auto best = argmax_rows(tape.value(g.logits));
    for (std::size_t j = 0; j < batch.size(); ++j) out[batch[j]] = static_cast<int>(best[j]);
  }
  return out;
}

template <typename T>
TrainResult train(ToyModel<T>& model, const std::vector<SDInstance>& data,
                  const TrainOptions& opts) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (opts.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  auto& params = model.params();
  std::vector<Tensor<T>> m, v;
  for (const auto& p : params) {
    m.emplace_back(p.value.shape());
    v.emplace_back(p.value.shape());
  }
  std::mt19937_64 order(opts.seed);
  const std::size_t per_epoch = length_batches(data, opts.batch_size, nullptr).size();
  const std::size_t total = per_epoch * opts.epochs;
  TrainResult result;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = length_batches(data, opts.batch_size, &order);
    for (const auto& batch : batches) {
      const Stacked s = stack(data, batch);
      Tape<T> tape;
      double loss_value = 0.0;
      typename ToyModel<T>::Graph g;
      try {
        g = model.build(tape, s.tokens, s.seq_len, s.answer_rows, true);
        const Var loss = tape.softmax_cross_entropy(g.logits, s.labels);
        loss_value = static_cast<double>(tape.value(loss).item());
        if (!std::isfinite(loss_value)) throw NumericError("non-finite loss");
        tape.backward(loss);
      } catch (const NumericError&) {
        result.diverged = true;
        return result;
      }
      loss_sum += loss_value;

      double norm2 = 0.0;
      for (const Var p : g.params)
        for (T x : tape.grad(p).data()) norm2 += static_cast<double>(x) * static_cast<double>(x);
      if (!std::isfinite(norm2)) {
        result.diverged = true;
        return result;
      }
      const double norm = std::sqrt(norm2);
      const double clip = opts.grad_clip > 0.0 && norm > opts.grad_clip ? opts.grad_clip / norm : 1.0;

      ++result.steps;
      const double lr = lr_at(opts, result.steps - 1, total);
      const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(result.steps));
      const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(result.steps));
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].value.data();
        auto grad = tape.grad(g.params[i]).data();
        auto mi = m[i].data();
        auto vi = v[i].data();
        const double decay = params[i].decay ? opts.weight_decay : 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double gk = static_cast<double>(grad[k]) * clip;
          mi[k] = static_cast<T>(opts.beta1 * mi[k] + (1.0 - opts.beta1) * gk);
          vi[k] = static_cast<T>(opts.beta2 * vi[k] + (1.0 - opts.beta2) * gk * gk);
          const double step = (mi[k] / c1) / (std::sqrt(vi[k] / c2) + opts.adam_eps);
          w[k] = static_cast<T>(w[k] - lr * (step + decay * w[k]));
        }
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches.size()));
  }
  return result;
}

SlicedAccuracy eval_sliced(const std::vector<SDInstance>& data, std::span<const int> predictions) {
  if (predictions.size() != data.size()) {
    throw std::invalid_argument("eval_sliced: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(data.size()) + " instances");
  }
  std::size_t hit = 0, hit_a = 0, hit_b = 0;
  SlicedAccuracy acc;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool ok = predictions[i] == data[i].target;
    ++acc.n_overall;
    hit += ok;
    if (data[i].len_a < data[i].len_b) {
      ++acc.n_a_smaller;
      hit_a += ok;
    } else if (data[i].len_b < data[i].len_a) {
      ++acc.n_b_smaller;
      hit_b += ok;
    }
  }
  if (acc.n_a_smaller == 0 || acc.n_b_smaller == 0) {
    throw std::invalid_argument("eval_sliced: both |A|<|B| and |B|<|A| slices must be non-empty");
  }
  acc.overall = static_cast<double>(hit) / static_cast<double>(acc.n_overall);
  acc.a_smaller = static_cast<double>(hit_a) / static_cast<double>(acc.n_a_smaller);
  acc.b_smaller = static_cast<double>(hit_b) / static_cast<double>(acc.n_b_smaller);
  return acc;
}

template <typename T>
SlicedAccuracy eval_sliced(const ToyModel<T>& model, const std::vector<SDInstance>& data) {
  const auto predictions = predict_answers(model, data);
  return eval_sliced(data, predictions);
}

#define JRT_INSTANTIATE_TOY(T)                                                              \
  template class ToyModel<T>;                                                               \
  template std::vector<int> predict_answers<T>(const ToyModel<T>&,                          \
                                               const std::vector<SDInstance>&, std::size_t); \
  template TrainResult train<T>(ToyModel<T>&, const std::vector<SDInstance>&,               \
                                const TrainOptions&);                                       \
  template SlicedAccuracy eval_sliced<T>(const ToyModel<T>&, const std::vector<SDInstance>&);

JRT_INSTANTIATE_TOY(float)
JRT_INSTANTIATE_TOY(double)

#undef JRT_INSTANTIATE_TOY

}  // namespace jrt
