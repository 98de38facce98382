#include "exifcons/consistency_net.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "exifcons/errors.hpp"

namespace exifcons {

using nn::Matrix;
using json = nlohmann::ordered_json;

namespace {

constexpr Eigen::Index kInferChunk = 64;
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kEvalStream = 7;

}  // namespace

std::string to_string(Backbone b) { return b == Backbone::kSmall ? "small" : "full"; }

std::string to_string(Objective o) {
  switch (o) {
    case Objective::kExif: return "exif";
    case Objective::kImage: return "image";
    case Objective::kCamera: return "camera";
    case Objective::kX: return "x";
    case Objective::kY: return "y";
  }
  return "?";
}

Backbone parse_backbone(const std::string& s) {
  if (s == "small") return Backbone::kSmall;
  if (s == "full") return Backbone::kFull;
  throw InputError("unknown backbone '" + s + "' (expected small or full)");
}

Objective parse_objective(const std::string& s) {
  for (auto o : {Objective::kExif, Objective::kImage, Objective::kCamera, Objective::kX,
                 Objective::kY}) {
    if (to_string(o) == s) return o;
  }
  throw InputError("unknown objective '" + s + "' (expected exif, image, camera, x or y)");
}

ModelConfig ModelConfig::full_scale(int output_dim) {
  ModelConfig c;
  c.backbone = Backbone::kFull;
  c.conv_channels.clear();
  c.conv_strides.clear();
  c.embedding_dim = 4096;
  c.head_widths = {4096, 2048, 1024};
  c.input_highpass = 0.0;
  c.output_dim = output_dim;
  return c;
}

void ModelConfig::validate() const {
  if (embedding_dim <= 0) throw InputError("embedding_dim must be positive");
  if (output_dim <= 0) throw InputError("output_dim must be positive");
  if ((objective == Objective::kImage || objective == Objective::kX ||
       objective == Objective::kY) &&
      output_dim != 1) {
    throw InputError("objective " + to_string(objective) + " needs output_dim 1");
  }
  if (objective == Objective::kCamera && output_dim < 2) {
    throw InputError("camera objective needs at least two classes");
  }
  if (backbone == Backbone::kSmall) {
    if (conv_channels.empty() || conv_channels.size() != conv_strides.size()) {
      throw InputError("conv_channels and conv_strides must be non-empty and equal length");
    }
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
      if (conv_channels[i] <= 0 || conv_strides[i] <= 0) {
        throw InputError("conv widths and strides must be positive");
      }
    }
  }
  for (int w : head_widths) {
    if (w <= 0) throw InputError("head widths must be positive");
  }
  if (!(input_highpass >= 0)) throw InputError("input_highpass must be >= 0");
}

std::string ModelConfig::to_json() const {
  json j;
  j["backbone"] = to_string(backbone);
  j["conv_channels"] = conv_channels;
  j["conv_strides"] = conv_strides;
  j["input_highpass"] = input_highpass;
  j["embedding_dim"] = embedding_dim;
  j["head_widths"] = head_widths;
  j["output_dim"] = output_dim;
  j["objective"] = to_string(objective);
  j["output_init_gain"] = output_init_gain;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("model config: ") + e.what());
  }
  ModelConfig c;
  try {
    if (j.contains("backbone")) c.backbone = parse_backbone(j["backbone"].get<std::string>());
    if (c.backbone == Backbone::kFull) c = full_scale(c.output_dim);
    if (j.contains("conv_channels")) c.conv_channels = j["conv_channels"].get<std::vector<int>>();
    if (j.contains("conv_strides")) c.conv_strides = j["conv_strides"].get<std::vector<int>>();
    if (j.contains("input_highpass")) c.input_highpass = j["input_highpass"].get<double>();
    if (j.contains("embedding_dim")) c.embedding_dim = j["embedding_dim"].get<int>();
    if (j.contains("head_widths")) c.head_widths = j["head_widths"].get<std::vector<int>>();
    if (j.contains("output_dim")) c.output_dim = j["output_dim"].get<int>();
    if (j.contains("objective")) c.objective = parse_objective(j["objective"].get<std::string>());
    if (j.contains("output_init_gain")) c.output_init_gain = j["output_init_gain"].get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("model config: ") + e.what());
  }
  return c;
}

// ---- batch helpers ----------------------------------------------------------

template <typename T>
Matrix<T> patches_to_matrix(std::span<const Patch* const> patches) {
  Matrix<T> m(Eigen::Index(patches.size()), Eigen::Index(Patch::kValues));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& px = patches[i]->pixels;
    if (px.size() != Patch::kValues) throw InputError("patch must be 3x128x128");
    T* row = m.data() + Eigen::Index(i) * m.cols();
    for (std::size_t k = 0; k < px.size(); ++k) row[k] = T(px[k]) - T(0.5);
  }
  return m;
}

template <typename T>
Matrix<T> patches_to_matrix(std::span<const Patch> patches) {
  std::vector<const Patch*> ptrs;
  ptrs.reserve(patches.size());
  for (const auto& p : patches) ptrs.push_back(&p);
  return patches_to_matrix<T>(std::span<const Patch* const>(ptrs));
}

template <typename T>
LabelMatrices<T> labels_to_matrices(std::span<const PairLabel> labels) {
  LabelMatrices<T> out;
  const Eigen::Index n = Eigen::Index(labels.size());
  const Eigen::Index d = labels.empty() ? 0 : Eigen::Index(labels[0].y.size());
  out.y.resize(n, d);
  out.mask.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& l = labels[std::size_t(i)];
    if (Eigen::Index(l.y.size()) != d || Eigen::Index(l.mask.size()) != d) {
      throw InputError("labels in one batch must have equal length");
    }
    for (Eigen::Index k = 0; k < d; ++k) {
      out.y(i, k) = T(l.y[std::size_t(k)]);
      out.mask(i, k) = T(l.mask[std::size_t(k)]);
    }
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename T>
LossResult masked_bce(const Matrix<T>& logits, const Matrix<T>& y, const Matrix<T>& mask) {
  if (logits.rows() != y.rows() || logits.cols() != y.cols() || y.rows() != mask.rows() ||
      y.cols() != mask.cols()) {
    throw InputError("logits, labels and mask must have equal shape");
  }
  LossResult r;
  r.grad = Matrix<double>::Zero(logits.rows(), logits.cols());
  double valid = 0.0, total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      const double m = double(mask(i, k));
      if (m == 0.0) continue;
      const double p = sigmoid(double(logits(i, k)));
      const double t = double(y(i, k));
      const double pc = std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip);
      total += m * -(t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc));
      valid += m;
      if (pc == p) r.grad(i, k) = m * (p - t);
    }
  }
  if (valid == 0.0) throw DegenerateBatchError();
  r.loss = total / valid;
  r.grad /= valid;
  return r;
}

template <typename T>
LossResult softmax_cross_entropy(const Matrix<T>& logits, std::span<const int> classes) {
  if (std::size_t(logits.rows()) != classes.size() || logits.rows() == 0) {
    throw InputError("one class per logit row required");
  }
  LossResult r;
  r.grad.resize(logits.rows(), logits.cols());
  const double n = double(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int c = classes[std::size_t(i)];
    if (c < 0 || c >= logits.cols()) throw InputError("class index out of range");
    const double mx = double(logits.row(i).maxCoeff());
    double z = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) z += std::exp(double(logits(i, k)) - mx);
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      r.grad(i, k) = std::exp(double(logits(i, k)) - mx) / z / n;
    }
    r.grad(i, c) -= 1.0 / n;
    r.loss -= (double(logits(i, c)) - mx - std::log(z)) / n;
  }
  return r;
}

// ---- network ----------------------------------------------------------------

template <typename T>
ConsistencyNet<T>::ConsistencyNet(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      encoder_(nn::Shape{3, kPatchSize, kPatchSize}),
      head_(nn::Shape{0, 1, 1}) {
  config_.validate();
  Rng rng(derive_seed(seed, 0, 0));
  nn::Shape s{3, kPatchSize, kPatchSize};
  if (config_.input_highpass > 0) {
    encoder_.add(std::make_unique<nn::HighPass<T>>(s, T(config_.input_highpass)));
  }
  if (config_.backbone == Backbone::kSmall) {
    for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
      auto& conv = encoder_.add(std::make_unique<nn::Conv2d<T>>(
          "encoder.conv" + std::to_string(i), s, config_.conv_channels[i], 3,
          config_.conv_strides[i], 1));
      conv.init_he(rng);
      s = conv.output_shape();
      encoder_.add(std::make_unique<nn::ReLU<T>>(s));
    }
  } else {
    auto& stem = encoder_.add(std::make_unique<nn::Conv2d<T>>("encoder.stem", s, 64, 7, 2, 3));
    stem.init_he(rng);
    s = stem.output_shape();
    encoder_.add(std::make_unique<nn::ReLU<T>>(s));
    auto& pool = encoder_.add(std::make_unique<nn::MaxPool2d<T>>(s, 3, 2, 1));
    s = pool.output_shape();
    const int blocks[4] = {3, 4, 6, 3};
    const int mids[4] = {64, 128, 256, 512};
    for (int stage = 0; stage < 4; ++stage) {
      for (int b = 0; b < blocks[stage]; ++b) {
        const int stride = (stage > 0 && b == 0) ? 2 : 1;
        auto& block = encoder_.add(std::make_unique<nn::Bottleneck<T>>(
            "encoder.layer" + std::to_string(stage + 1) + "." + std::to_string(b), s,
            mids[stage], mids[stage] * 4, stride, rng));
        s = block.output_shape();
      }
    }
  }
  encoder_.add(std::make_unique<nn::GlobalAvgPool<T>>(s));
  if (s.channels != config_.embedding_dim) {
    auto& proj = encoder_.add(
        std::make_unique<nn::Linear<T>>("encoder.proj", s.channels, config_.embedding_dim));
    proj.init_he(rng);
    encoder_.add(std::make_unique<nn::ReLU<T>>(nn::Shape{config_.embedding_dim, 1, 1}));
  }

  int width = config_.pair_input() ? 2 * config_.embedding_dim : config_.embedding_dim;
  head_ = nn::Sequential<T>(nn::Shape{width, 1, 1});
  for (std::size_t i = 0; i < config_.head_widths.size(); ++i) {
    auto& fc = head_.add(
        std::make_unique<nn::Linear<T>>("head.fc" + std::to_string(i), width,
                                        config_.head_widths[i]));
    fc.init_he(rng);
    head_linears_.push_back(&fc);
    width = config_.head_widths[i];
    head_.add(std::make_unique<nn::ReLU<T>>(nn::Shape{width, 1, 1}));
  }
  auto& out = head_.add(std::make_unique<nn::Linear<T>>("head.out", width, config_.output_dim));
  out.init_he(rng, T(config_.output_init_gain));
  head_linears_.push_back(&out);
}

template <typename T>
std::vector<nn::Param<T>*> ConsistencyNet<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  encoder_.collect(out);
  head_.collect(out);
  return out;
}

template <typename T>
std::vector<const nn::Param<T>*> ConsistencyNet<T>::parameters() const {
  auto ps = const_cast<ConsistencyNet<T>*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

template <typename T>
void ConsistencyNet<T>::zero_output_layer() {
  head_linears_.back()->weight.value.setZero();
  head_linears_.back()->bias.value.setZero();
}

template <typename T>
Matrix<T> ConsistencyNet<T>::embed(const Matrix<T>& x) const {
  if (x.cols() != Eigen::Index(Patch::kValues)) {
    throw InputError("input rows must hold 3x128x128 patches");
  }
  Matrix<T> out(x.rows(), config_.embedding_dim);
  Matrix<T> chunk, e;
  for (Eigen::Index r = 0; r < x.rows(); r += kInferChunk) {
    const Eigen::Index n = std::min(kInferChunk, x.rows() - r);
    chunk = x.middleRows(r, n);
    encoder_.infer(chunk, e);
    out.middleRows(r, n) = e;
  }
  return out;
}

template <typename T>
Matrix<T> ConsistencyNet<T>::head_logits(const Matrix<T>& head_input) const {
  Matrix<T> out;
  head_.infer(head_input, out);
  return out;
}

template <typename T>
Matrix<T> ConsistencyNet<T>::pair_logits(const Matrix<T>& ea, const Matrix<T>& eb) const {
  if (!config_.pair_input()) throw InputError("camera objective takes single patches");
  if (ea.rows() != eb.rows() || ea.cols() != config_.embedding_dim ||
      eb.cols() != config_.embedding_dim) {
    throw InputError("embedding shapes do not match the model");
  }
  Matrix<T> h(ea.rows(), 2 * config_.embedding_dim);
  h << ea, eb;
  return head_logits(h);
}

template <typename T>
Matrix<T> ConsistencyNet<T>::pair_logits_indexed(
    const Matrix<T>& embeddings, std::span<const std::pair<int, int>> pairs) const {
  if (!config_.pair_input()) throw InputError("camera objective takes single patches");
  const Eigen::Index d = config_.embedding_dim;
  if (embeddings.cols() != d) throw InputError("embedding width does not match the model");
  const auto& first = *head_linears_.front();
  const Matrix<T> u = embeddings * first.weight.value.leftCols(d).transpose();
  const Matrix<T> v = embeddings * first.weight.value.rightCols(d).transpose();

  Matrix<T> out(Eigen::Index(pairs.size()), config_.output_dim);
  constexpr std::size_t kChunk = 4096;
  Matrix<T> a, b;
  for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, pairs.size() - start);
    a.resize(Eigen::Index(n), u.cols());
    for (std::size_t k = 0; k < n; ++k) {
      const auto [i, j] = pairs[start + k];
      if (i < 0 || j < 0 || i >= embeddings.rows() || j >= embeddings.rows()) {
        throw InputError("pair index out of range");
      }
      a.row(Eigen::Index(k)) = u.row(i) + v.row(j) + first.bias.value.row(0);
    }
    // a holds the first Linear's output; run the remaining layers.
    for (std::size_t l = 1; l < head_.size(); ++l) {
      head_.at(l).infer(a, b);
      a.swap(b);
    }
    out.middleRows(Eigen::Index(start), Eigen::Index(n)) = a;
  }
  return out;
}

template <typename T>
Matrix<T> ConsistencyNet<T>::train_forward(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> e, logits;
  batch_ = a.rows();
  if (config_.pair_input()) {
    if (a.rows() != b.rows()) throw InputError("pair sides must have equal batch size");
    Matrix<T> stacked(2 * a.rows(), a.cols());
    stacked << a, b;
    encoder_.forward(stacked, e);
    Matrix<T> h(a.rows(), 2 * config_.embedding_dim);
    h << e.topRows(a.rows()), e.bottomRows(a.rows());
    head_.forward(h, logits);
  } else {
    encoder_.forward(a, e);
    head_.forward(e, logits);
  }
  return logits;
}

template <typename T>
void ConsistencyNet<T>::train_backward(const Matrix<T>& grad_logits) {
  Matrix<T> dh;
  head_.backward(grad_logits, &dh);
  if (config_.pair_input()) {
    const Eigen::Index d = config_.embedding_dim;
    Matrix<T> de(2 * batch_, d);
    de << dh.leftCols(d), dh.rightCols(d);
    encoder_.backward(de, nullptr);
  } else {
    encoder_.backward(dh, nullptr);
  }
}

template class ConsistencyNet<float>;
template class ConsistencyNet<double>;
template Matrix<float> patches_to_matrix<float>(std::span<const Patch* const>);
template Matrix<double> patches_to_matrix<double>(std::span<const Patch* const>);
template Matrix<float> patches_to_matrix<float>(std::span<const Patch>);
template Matrix<double> patches_to_matrix<double>(std::span<const Patch>);
template LabelMatrices<float> labels_to_matrices<float>(std::span<const PairLabel>);
template LabelMatrices<double> labels_to_matrices<double>(std::span<const PairLabel>);
template LossResult masked_bce<float>(const Matrix<float>&, const Matrix<float>&,
                                      const Matrix<float>&);
template LossResult masked_bce<double>(const Matrix<double>&, const Matrix<double>&,
                                       const Matrix<double>&);
template LossResult softmax_cross_entropy<float>(const Matrix<float>&, std::span<const int>);
template LossResult softmax_cross_entropy<double>(const Matrix<double>&, std::span<const int>);

// ---- inference entry points -------------------------------------------------

std::vector<float> forward(const ConsistencyNet<float>& net, const Patch& a, const Patch& b) {
  if (net.config().objective != Objective::kExif) {
    throw InputError("forward expects an exif-objective model");
  }
  const Patch* ptrs[2] = {&a, &b};
  const auto x = patches_to_matrix<float>(std::span<const Patch* const>(ptrs, 2));
  const auto e = net.embed(x);
  const auto logits = net.pair_logits(e.topRows(1), e.bottomRows(1));
  std::vector<float> out(std::size_t(logits.cols()));
  for (Eigen::Index k = 0; k < logits.cols(); ++k) out[std::size_t(k)] = float(sigmoid(logits(0, k)));
  return out;
}

std::vector<double> forward_variant(const ConsistencyNet<float>& net,
                                    std::span<const Patch* const> inputs) {
  const auto obj = net.config().objective;
  const std::size_t arity = obj == Objective::kCamera ? 1 : 2;
  if (inputs.size() != arity) {
    throw InputError("objective " + to_string(obj) + " takes " + std::to_string(arity) +
                     " patch(es), got " + std::to_string(inputs.size()));
  }
  const auto x = patches_to_matrix<float>(inputs);
  const auto e = net.embed(x);
  std::vector<double> out;
  if (obj == Objective::kCamera) {
    const auto logits = net.head_logits(e);
    const double mx = double(logits.row(0).maxCoeff());
    double z = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      out.push_back(std::exp(double(logits(0, k)) - mx));
      z += out.back();
    }
    for (auto& p : out) p /= z;
  } else {
    const auto logits = net.pair_logits(e.topRows(1), e.bottomRows(1));
    for (Eigen::Index k = 0; k < logits.cols(); ++k) out.push_back(sigmoid(logits(0, k)));
  }
  return out;
}

// ---- training ---------------------------------------------------------------

namespace {

template <typename Pairs>
std::pair<Matrix<float>, Matrix<float>> split_pairs(const Pairs& pairs) {
  std::vector<const Patch*> a, b;
  for (const auto& [pa, pb] : pairs) {
    a.push_back(&pa);
    b.push_back(&pb);
  }
  return {patches_to_matrix<float>(std::span<const Patch* const>(a)),
          patches_to_matrix<float>(std::span<const Patch* const>(b))};
}

double apply_gradient(ConsistencyNet<float>& net, nn::Adam<float>& optimizer,
                      const LossResult& loss) {
  optimizer.zero_grad();
  net.train_backward(loss.grad.cast<float>());
  optimizer.step();
  return loss.loss;
}

}  // namespace

double train_step(ConsistencyNet<float>& net, const PairBatch& batch,
                  nn::Adam<float>& optimizer) {
  const auto [a, b] = split_pairs(batch.pairs);
  const auto labels = labels_to_matrices<float>(batch.labels);
  if (labels.y.cols() != net.config().output_dim) {
    throw InputError("label width " + std::to_string(labels.y.cols()) +
                     " does not match model output " +
                     std::to_string(net.config().output_dim));
  }
  const auto logits = net.train_forward(a, b);
  return apply_gradient(net, optimizer, masked_bce(logits, labels.y, labels.mask));
}

TrainState train(ConsistencyNet<float>& net, const TrainOptions& options,
                 const CorpusIndex& index, const AttributeVocabulary& vocab,
                 PhotoStore& store) {
  const auto& cfg = net.config();
  if (cfg.objective == Objective::kExif && int(label_dim(vocab)) != cfg.output_dim) {
    throw InputError("model output_dim " + std::to_string(cfg.output_dim) +
                     " does not match label dimension " + std::to_string(label_dim(vocab)));
  }
  if (cfg.objective == Objective::kCamera) {
    auto attr = vocab.attribute_index(options.camera_attribute);
    if (!attr || int(vocab.values[*attr].size()) != cfg.output_dim) {
      throw InputError("camera objective needs output_dim equal to the number of '" +
                       options.camera_attribute + "' values");
    }
  }
  nn::Adam<float> optimizer(net.parameters(), options.learning_rate);
  TrainState state;
  for (int it = 0; it < options.iterations; ++it) {
    Rng rng = make_rng(options.seed, kTrainStream, std::uint64_t(it));
    double loss = 0.0;
    switch (cfg.objective) {
      case Objective::kExif: {
        auto batch = make_pair_batch(index, vocab, options.batch_size, store,
                                     options.augmentation, rng, options.workers);
        loss = train_step(net, batch, optimizer);
        break;
      }
      case Objective::kImage:
      case Objective::kX:
      case Objective::kY: {
        auto batch = cfg.objective == Objective::kImage
                         ? make_image_batch(index, store, options.batch_size,
                                            options.augmentation, rng)
                         : make_order_batch(index, store, options.batch_size,
                                            cfg.objective == Objective::kX ? Axis::kX : Axis::kY,
                                            options.augmentation, rng);
        const auto [a, b] = split_pairs(batch.pairs);
        Matrix<float> y(Eigen::Index(batch.targets.size()), 1);
        for (std::size_t i = 0; i < batch.targets.size(); ++i) y(Eigen::Index(i), 0) = batch.targets[i];
        const Matrix<float> mask = Matrix<float>::Ones(y.rows(), 1);
        const auto logits = net.train_forward(a, b);
        loss = apply_gradient(net, optimizer, masked_bce(logits, y, mask));
        break;
      }
      case Objective::kCamera: {
        auto batch = make_camera_batch(index, vocab, options.camera_attribute, store,
                                       options.batch_size, options.augmentation, rng);
        const auto x = patches_to_matrix<float>(std::span<const Patch>(batch.patches));
        const auto logits = net.train_forward(x, x);
        loss = apply_gradient(net, optimizer, softmax_cross_entropy(logits, std::span<const int>(batch.classes)));
        break;
      }
    }
    state.step = it + 1;
    state.last_loss = loss;
    if (options.on_step) options.on_step(state.step, loss);
  }
  return state;
}

std::vector<AttributeAccuracy> evaluate_attribute_accuracy(
    const ConsistencyNet<float>& net, const CorpusIndex& heldout,
    const AttributeVocabulary& vocab, PhotoStore& store, int pairs_per_attribute,
    std::uint64_t seed, int workers) {
  if (net.config().objective != Objective::kExif) {
    throw InputError("attribute accuracy needs an exif-objective model");
  }
  if (pairs_per_attribute < 2) throw InputError("need at least two pairs per attribute");
  const auto eligible = eligible_attributes(heldout, vocab);
  AugmentationParams no_aug;
  no_aug.enabled = false;

  std::vector<AttributeAccuracy> table;
  for (std::size_t a = 0; a < vocab.size(); ++a) {
    AttributeAccuracy row;
    row.attribute = vocab.attributes[a];
    if (std::find(eligible.begin(), eligible.end(), a) == eligible.end()) {
      table.push_back(row);
      continue;
    }
    Rng rng = make_rng(seed, kEvalStream, a);
    auto plan = plan_pair_batch(heldout, vocab, pairs_per_attribute, rng, a);
    auto batch = materialize(plan, heldout, vocab, store, no_aug, rng, workers);
    const auto [xa, xb] = split_pairs(batch.pairs);
    const auto logits = net.pair_logits(net.embed(xa), net.embed(xb));
    int correct = 0;
    for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
      const bool predicted = sigmoid(logits(Eigen::Index(i), Eigen::Index(a))) >= 0.5;
      correct += predicted == bool(batch.labels[i].y[a]);
    }
    row.pairs = int(batch.pairs.size());
    row.accuracy = double(correct) / double(row.pairs);
    table.push_back(row);
  }
  return table;
}

}  // namespace exifcons
