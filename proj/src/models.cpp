#include "lmac/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lmac/error.hpp"
#include "lmac/ops.hpp"
#include "lmac/optim.hpp"
#include "lmac/tensor_io.hpp"

namespace lmac {

namespace {

constexpr std::int64_t kMinFrames = 64;

template <typename T>
BasicTensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return BasicTensor<T>(std::move(shape), std::move(data), true);
}

template <typename T>
BasicTensor<T> copy_param(const BasicTensor<T>& t) {
  auto c = t.detach();
  c.set_requires_grad(t.requires_grad());
  return c;
}

template <typename T, typename U>
BasicTensor<U> cast_param(const BasicTensor<T>& t) {
  auto c = t.template cast<U>();
  c.set_requires_grad(t.requires_grad());
  return c;
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

nlohmann::json read_json_if_present(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <typename T>
void assign_checked(BasicTensor<T>& dst, const Tensor& src, const std::string& name) {
  if (src.shape() != dst.shape()) {
    throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) +
                      ", expected " + shape_str(dst.shape()));
  }
  auto d = dst.mutable_data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(s[i]);
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : p) v /= total;
  return p;
}

int argmax(std::span<const double> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

// Architectures -------------------------------------------------------------

void ClassifierArch::validate() const {
  if (channels.empty()) throw ConfigError("classifier needs at least one block");
  if (num_classes < 2) throw ConfigError("classifier needs at least two classes");
  if (num_latents < 1 || num_latents > static_cast<int>(channels.size())) {
    throw ConfigError("num_latents out of range");
  }
  for (int c : channels) {
    if (c < 1) throw ConfigError("channel counts must be positive");
  }
}

nlohmann::json ClassifierArch::to_json() const {
  return {{"type", "classifier"},
          {"channels", channels},
          {"num_classes", num_classes},
          {"n_mels", n_mels},
          {"num_latents", num_latents}};
}

ClassifierArch ClassifierArch::from_json(const nlohmann::json& j) {
  ClassifierArch a;
  a.channels = j.value("channels", a.channels);
  a.num_classes = j.value("num_classes", a.num_classes);
  a.n_mels = j.value("n_mels", a.n_mels);
  a.num_latents = j.value("num_latents", a.num_latents);
  a.validate();
  return a;
}

DecoderArch DecoderArch::for_classifier(const ClassifierArch& arch, int out_bins) {
  DecoderArch d;
  d.latent_channels.assign(arch.channels.end() - arch.num_latents, arch.channels.end());
  d.out_bins = out_bins;
  if (static_cast<int>(d.stage_channels.size()) != arch.num_latents) {
    d.stage_channels.assign(static_cast<std::size_t>(arch.num_latents), 32);
  }
  return d;
}

void DecoderArch::validate() const {
  if (latent_channels.empty() || latent_channels.size() != stage_channels.size()) {
    throw ConfigError("decoder needs one stage per latent");
  }
  if (kernel < 1 || stride < 1 || padding < 0 || out_bins < 1) {
    throw ConfigError("invalid decoder geometry");
  }
}

nlohmann::json DecoderArch::to_json() const {
  return {{"type", "decoder"},
          {"latent_channels", latent_channels},
          {"stage_channels", stage_channels},
          {"kernel", kernel},
          {"stride", stride},
          {"padding", padding},
          {"out_bins", out_bins}};
}

DecoderArch DecoderArch::from_json(const nlohmann::json& j) {
  DecoderArch a;
  a.latent_channels = j.value("latent_channels", a.latent_channels);
  a.stage_channels = j.value("stage_channels", a.stage_channels);
  a.kernel = j.value("kernel", a.kernel);
  a.stride = j.value("stride", a.stride);
  a.padding = j.value("padding", a.padding);
  a.out_bins = j.value("out_bins", a.out_bins);
  a.validate();
  return a;
}

// Classifier ----------------------------------------------------------------

template <typename T>
BasicClassifier<T>::BasicClassifier(ClassifierArch arch, std::uint64_t seed)
    : arch_(std::move(arch)) {
  arch_.validate();
  Rng rng(seed);
  blocks_.resize(arch_.channels.size());
  for (int i = 0; i < num_blocks(); ++i) reinitialize_block(i, rng);
  reinitialize_head(rng);
}

template <typename T>
void BasicClassifier<T>::reinitialize_block(int index, Rng& rng) {
  if (index < 0 || index >= num_blocks()) throw ConfigError("block index out of range");
  const int in = index == 0 ? 1 : arch_.channels[index - 1];
  const int out = arch_.channels[index];
  const double fan_in = in * 9.0;
  blocks_[index].weight = uniform_tensor<T>({out, in, 3, 3}, std::sqrt(6.0 / fan_in), rng);
  blocks_[index].bias = uniform_tensor<T>({out}, 1.0 / std::sqrt(fan_in), rng);
}

template <typename T>
void BasicClassifier<T>::reinitialize_head(Rng& rng) {
  const int in = arch_.channels.back();
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  head_weight_ = uniform_tensor<T>({in, arch_.num_classes}, bound, rng);
  head_bias_ = uniform_tensor<T>({arch_.num_classes}, bound, rng);
}

template <typename T>
void BasicClassifier<T>::set_normalization(double mean, double stddev) {
  if (!std::isfinite(mean) || !(stddev > 0.0) || !std::isfinite(stddev)) {
    throw ConfigError("invalid input normalization");
  }
  input_mean_ = mean;
  input_std_ = stddev;
}

template <typename T>
BasicTensor<T> BasicClassifier<T>::features_in(const BasicTensor<T>& features) const {
  BasicTensor<T> x = features;
  if (x.rank() == 2) x = reshape(x, {1, x.dim(0), x.dim(1)});
  if (x.rank() != 3 || x.dim(1) != arch_.n_mels) {
    throw ShapeError("classifier expects [" + std::to_string(arch_.n_mels) + ", T] or [B, " +
                     std::to_string(arch_.n_mels) + ", T] features, got " +
                     shape_str(features.shape()));
  }
  if (x.dim(2) < kMinFrames) {
    throw ShapeError("classifier needs at least " + std::to_string(kMinFrames) + " frames, got " +
                     std::to_string(x.dim(2)));
  }
  x = reshape(x, {x.dim(0), 1, x.dim(1), x.dim(2)});
  return scale(shift(x, static_cast<T>(-input_mean_)), static_cast<T>(1.0 / input_std_));
}

template <typename T>
BasicClassifierOutput<T> BasicClassifier<T>::forward(const BasicTensor<T>& features) const {
  BasicClassifierOutput<T> out;
  BasicTensor<T> h = features_in(features);
  const int first_latent = num_blocks() - arch_.num_latents;
  for (int i = 0; i < num_blocks(); ++i) {
    h = relu(conv2d(h, blocks_[i].weight, blocks_[i].bias, {1, 1}));
    const int kh = static_cast<int>(std::min<std::int64_t>(2, h.dim(2)));
    h = pool2d(PoolKind::avg, h, {kh, 2, kh, 2});
    if (i >= first_latent) out.latents.push_back(h);
  }
  out.logits = linear(mean_spatial(h), head_weight_, head_bias_);
  const auto batch = out.logits.dim(0);
  const auto classes = out.logits.dim(1);
  auto ld = out.logits.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    std::vector<double> row(ld.begin() + b * classes, ld.begin() + (b + 1) * classes);
    out.predicted.push_back(argmax(row));
    out.probs.push_back(softmax(row));
  }
  return out;
}

template <typename T>
BasicTensor<T> BasicClassifier<T>::logits(const BasicTensor<T>& features) const {
  BasicTensor<T> h = features_in(features);
  for (int i = 0; i < num_blocks(); ++i) {
    h = relu(conv2d(h, blocks_[i].weight, blocks_[i].bias, {1, 1}));
    const int kh = static_cast<int>(std::min<std::int64_t>(2, h.dim(2)));
    h = pool2d(PoolKind::avg, h, {kh, 2, kh, 2});
  }
  return linear(mean_spatial(h), head_weight_, head_bias_);
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> BasicClassifier<T>::named_parameters() const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  for (int i = 0; i < num_blocks(); ++i) {
    out.emplace_back("block" + std::to_string(i + 1) + ".weight", blocks_[i].weight);
    out.emplace_back("block" + std::to_string(i + 1) + ".bias", blocks_[i].bias);
  }
  out.emplace_back("head.weight", head_weight_);
  out.emplace_back("head.bias", head_bias_);
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> BasicClassifier<T>::parameters() const {
  std::vector<BasicTensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
std::int64_t BasicClassifier<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

template <typename T>
void BasicClassifier<T>::set_trainable(bool trainable) {
  for (auto& p : parameters()) {
    p.zero_grad();
    p.set_requires_grad(trainable);
  }
}

template <typename T>
BasicClassifier<T> BasicClassifier<T>::clone() const {
  BasicClassifier<T> c = *this;
  for (auto& b : c.blocks_) {
    b.weight = copy_param(b.weight);
    b.bias = copy_param(b.bias);
  }
  c.head_weight_ = copy_param(head_weight_);
  c.head_bias_ = copy_param(head_bias_);
  return c;
}

template <typename T>
template <typename U>
BasicClassifier<U> BasicClassifier<T>::cast() const {
  BasicClassifier<U> c(arch_);
  for (int i = 0; i < num_blocks(); ++i) {
    c.blocks_[i].weight = cast_param<T, U>(blocks_[i].weight);
    c.blocks_[i].bias = cast_param<T, U>(blocks_[i].bias);
  }
  c.head_weight_ = cast_param<T, U>(head_weight_);
  c.head_bias_ = cast_param<T, U>(head_bias_);
  c.input_mean_ = input_mean_;
  c.input_std_ = input_std_;
  return c;
}

template <typename T>
void BasicClassifier<T>::save(const std::filesystem::path& path) const {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, t] : named_parameters()) tensors.push_back({name, t.template cast<float>()});
  tensors.push_back({"input_mean", Tensor({1}, {static_cast<float>(input_mean_)})});
  tensors.push_back({"input_std", Tensor({1}, {static_cast<float>(input_std_)})});
  save_tensors(path, tensors);
  auto meta = arch_.to_json();
  meta["input_mean"] = input_mean_;
  meta["input_std"] = input_std_;
  write_json(sidecar(path), meta);
}

template <typename T>
BasicClassifier<T> BasicClassifier<T>::load(const std::filesystem::path& path) {
  const auto tensors = load_tensors(path);
  const auto meta = read_json_if_present(sidecar(path));
  if (meta.contains("type") && meta["type"] != "classifier") {
    throw FormatError(path.string() + " is not a classifier checkpoint");
  }
  BasicClassifier<T> c(ClassifierArch::from_json(meta));
  for (auto& [name, t] : c.named_parameters()) {
    auto dst = t;
    assign_checked(dst, find_tensor(tensors, name), name);
  }
  const double mean = meta.contains("input_mean") ? meta["input_mean"].get<double>()
                                                  : find_tensor(tensors, "input_mean").at(0);
  const double stddev = meta.contains("input_std") ? meta["input_std"].get<double>()
                                                   : find_tensor(tensors, "input_std").at(0);
  c.set_normalization(mean, stddev);
  c.set_trainable(false);
  return c;
}

// Decoder -------------------------------------------------------------------

template <typename T>
BasicDecoder<T>::BasicDecoder(DecoderArch arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  Rng rng(seed);
  const int n = static_cast<int>(arch_.latent_channels.size());
  const int k = arch_.kernel;
  int prev = 0;
  for (int i = 0; i < n; ++i) {
    const int in = prev + arch_.latent_channels[n - 1 - i];
    const int out = arch_.stage_channels[i];
    const double fan_in = static_cast<double>(in) * k * k / (arch_.stride * arch_.stride);
    Stage s;
    s.weight = uniform_tensor<T>({in, out, k, k}, std::sqrt(6.0 / fan_in), rng);
    s.bias = uniform_tensor<T>({out}, 1.0 / std::sqrt(fan_in), rng);
    stages_.push_back(std::move(s));
    prev = out;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(prev));
  proj_weight_ = uniform_tensor<T>({1, prev, 1, 1}, bound, rng);
  proj_bias_ = BasicTensor<T>::zeros({1}, true);
}

template <typename T>
BasicTensor<T> BasicDecoder<T>::forward(const std::vector<BasicTensor<T>>& latents,
                                        std::int64_t frames) const {
  const int n = static_cast<int>(stages_.size());
  if (static_cast<int>(latents.size()) != n) {
    throw ShapeError("decoder expects " + std::to_string(n) + " latents, got " +
                     std::to_string(latents.size()));
  }
  const auto batch = latents[0].dim(0);
  for (int i = 0; i < n; ++i) {
    const auto& h = latents[i];
    if (h.rank() != 4 || h.dim(0) != batch || h.dim(1) != arch_.latent_channels[i]) {
      throw ShapeError("latent " + std::to_string(i) + " has shape " + shape_str(h.shape()) +
                       ", expected [" + std::to_string(batch) + ", " +
                       std::to_string(arch_.latent_channels[i]) + ", H, W]");
    }
  }
  if (frames < 1) throw ShapeError("decoder output frames must be positive");
  const ConvOptions opt{arch_.stride, arch_.padding};
  BasicTensor<T> x;
  for (int i = 0; i < n; ++i) {
    const auto& skip = latents[n - 1 - i];
    BasicTensor<T> in = i == 0 ? skip : concat(std::vector<BasicTensor<T>>{x, skip}, 1);
    x = relu(conv_transpose2d(in, stages_[i].weight, stages_[i].bias, opt));
    if (i + 1 < n) {
      const auto& next = latents[n - 2 - i];
      x = resize_bilinear(x, next.dim(2), next.dim(3));
    }
  }
  x = conv2d(x, proj_weight_, proj_bias_);
  x = resize_bilinear(x, arch_.out_bins, frames);
  x = reshape(x, {batch, arch_.out_bins, frames});
  // Keeps float outputs strictly inside (0, 1) where a bare sigmoid would round to 1.
  constexpr double kEps = 1e-6;
  return shift(scale(sigmoid(x), static_cast<T>(1.0 - 2.0 * kEps)), static_cast<T>(kEps));
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> BasicDecoder<T>::named_parameters() const {
  std::vector<std::pair<std::string, BasicTensor<T>>> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    out.emplace_back("stage" + std::to_string(i + 1) + ".weight", stages_[i].weight);
    out.emplace_back("stage" + std::to_string(i + 1) + ".bias", stages_[i].bias);
  }
  out.emplace_back("proj.weight", proj_weight_);
  out.emplace_back("proj.bias", proj_bias_);
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> BasicDecoder<T>::parameters() const {
  std::vector<BasicTensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
void BasicDecoder<T>::set_trainable(bool trainable) {
  for (auto& p : parameters()) {
    p.zero_grad();
    p.set_requires_grad(trainable);
  }
}

template <typename T>
BasicDecoder<T> BasicDecoder<T>::clone() const {
  BasicDecoder<T> c = *this;
  for (auto& s : c.stages_) {
    s.weight = copy_param(s.weight);
    s.bias = copy_param(s.bias);
  }
  c.proj_weight_ = copy_param(proj_weight_);
  c.proj_bias_ = copy_param(proj_bias_);
  return c;
}

template <typename T>
template <typename U>
BasicDecoder<U> BasicDecoder<T>::cast() const {
  BasicDecoder<U> c(arch_);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    c.stages_[i].weight = cast_param<T, U>(stages_[i].weight);
    c.stages_[i].bias = cast_param<T, U>(stages_[i].bias);
  }
  c.proj_weight_ = cast_param<T, U>(proj_weight_);
  c.proj_bias_ = cast_param<T, U>(proj_bias_);
  return c;
}

template <typename T>
void BasicDecoder<T>::save(const std::filesystem::path& path) const {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, t] : named_parameters()) tensors.push_back({name, t.template cast<float>()});
  save_tensors(path, tensors);
  write_json(sidecar(path), arch_.to_json());
}

template <typename T>
BasicDecoder<T> BasicDecoder<T>::load(const std::filesystem::path& path) {
  const auto tensors = load_tensors(path);
  const auto meta = read_json_if_present(sidecar(path));
  if (meta.contains("type") && meta["type"] != "decoder") {
    throw FormatError(path.string() + " is not a decoder checkpoint");
  }
  BasicDecoder<T> d(DecoderArch::from_json(meta));
  for (auto& [name, t] : d.named_parameters()) {
    auto dst = t;
    assign_checked(dst, find_tensor(tensors, name), name);
  }
  return d;
}

template class BasicClassifier<float>;
template class BasicClassifier<double>;
template BasicClassifier<double> BasicClassifier<float>::cast<double>() const;
template BasicClassifier<float> BasicClassifier<double>::cast<float>() const;
template class BasicDecoder<float>;
template class BasicDecoder<double>;
template BasicDecoder<double> BasicDecoder<float>::cast<double>() const;
template BasicDecoder<float> BasicDecoder<double>::cast<float>() const;

// Training ------------------------------------------------------------------

LabeledFeatures featurize(const DatasetSplit& split, const MelFilterbank& fb,
                          const StftParams& stft_params) {
  NoGradGuard guard;
  LabeledFeatures out;
  out.features.reserve(split.clips.size());
  for (const auto& clip : split.clips) {
    if (!clip.label) throw ConfigError("featurize: unlabeled clip");
    out.features.push_back(fb.log_mel(stft(clip, stft_params).magnitude));
    out.labels.push_back(*clip.label);
  }
  return out;
}

Tensor make_batch(const std::vector<Tensor>& items, std::span<const std::size_t> order,
                  std::size_t begin, std::size_t end) {
  if (begin >= end || end > items.size()) throw ShapeError("make_batch: empty or invalid range");
  const Shape& item_shape = items[order.empty() ? begin : order[begin]].shape();
  const auto n = shape_numel(item_shape);
  Shape shape = item_shape;
  shape.insert(shape.begin(), static_cast<std::int64_t>(end - begin));
  std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
  for (std::size_t i = begin; i < end; ++i) {
    const Tensor& t = items[order.empty() ? i : order[i]];
    if (t.shape() != item_shape) throw ShapeError("make_batch: items differ in shape");
    std::copy(t.data().begin(), t.data().end(), data.begin() + static_cast<std::ptrdiff_t>((i - begin) * n));
  }
  return Tensor(std::move(shape), std::move(data));
}

void ClassifierTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
}

Classifier train_classifier(const LabeledFeatures& train, const ClassifierTrainConfig& config,
                            const ClassifierArch& arch,
                            const std::function<void(const ClassifierTrainLog&)>& on_epoch) {
  config.validate();
  if (train.size() == 0) throw ConfigError("train_classifier: empty training set");
  Classifier model(arch, child_seed(config.seed, 0));

  double total = 0.0, total_sq = 0.0, count = 0.0;
  for (const auto& f : train.features) {
    for (float v : f.data()) {
      total += v;
      total_sq += static_cast<double>(v) * v;
    }
    count += static_cast<double>(f.numel());
  }
  const double mean = total / count;
  const double var = std::max(total_sq / count - mean * mean, 1e-12);
  model.set_normalization(mean, std::sqrt(var));

  Adam opt(model.parameters(), {config.lr});
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(child_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) y.push_back(train.labels[order[i]]);
      opt.zero_grad();
      const Tensor logits = model.logits(make_batch(train.features, order, start, end));
      const Tensor loss = nll_loss(log_softmax(logits), y);
      if (!std::isfinite(loss.item())) throw NumericError("classifier loss is not finite");
      loss.backward();
      opt.step();
      loss_sum += loss.item() * static_cast<double>(end - start);
      const auto ld = logits.data();
      const auto classes = logits.dim(1);
      for (std::size_t b = 0; b < y.size(); ++b) {
        auto row = ld.subspan(b * classes, static_cast<std::size_t>(classes));
        if (std::max_element(row.begin(), row.end()) - row.begin() == y[b]) ++correct;
      }
    }
    if (on_epoch) {
      on_epoch({epoch, loss_sum / static_cast<double>(order.size()),
                static_cast<double>(correct) / static_cast<double>(order.size())});
    }
  }
  model.set_trainable(false);
  return model;
}

double accuracy(const Classifier& model, const LabeledFeatures& data, int batch_size) {
  if (data.size() == 0) throw ConfigError("accuracy of an empty set");
  NoGradGuard guard;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    const auto out = model.forward(make_batch(data.features, {}, start, end));
    for (std::size_t i = start; i < end; ++i) {
      if (out.predicted[i - start] == data.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Classifier randomize_from_top(const Classifier& model, int k_blocks, Rng& rng) {
  if (k_blocks < 0 || k_blocks > model.num_blocks() + 1) {
    throw ConfigError("randomize_from_top: k must be in [0, " +
                      std::to_string(model.num_blocks() + 1) + "]");
  }
  Classifier out = model.clone();
  if (k_blocks >= 1) out.reinitialize_head(rng);
  for (int j = 1; j < k_blocks; ++j) out.reinitialize_block(model.num_blocks() - j, rng);
  out.set_trainable(false);
  return out;
}

}  // namespace lmac
