#include "exifcons/pair_sampler.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <sstream>
#include <thread>

#include "exifcons/errors.hpp"

namespace exifcons {

void PhotoStore::add(const std::string& photo_id, ImageU8 image) {
  std::lock_guard lock(mu_);
  cache_[photo_id] = std::make_shared<const ImageU8>(std::move(image));
}

std::shared_ptr<const ImageU8> PhotoStore::get(const PhotoRecord& record) {
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(record.photo_id);
    if (it != cache_.end()) return it->second;
  }
  if (record.path.empty()) {
    throw InputError("no pixels registered for photo " + record.photo_id);
  }
  auto img = std::make_shared<const ImageU8>(load_image(record.path));
  std::lock_guard lock(mu_);
  return cache_.emplace(record.photo_id, std::move(img)).first->second;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> threads;
  const int count = int(std::min<std::size_t>(std::size_t(workers), n));
  for (int t = 0; t < count; ++t) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

Patch sample_patch(const ImageU8& image, const std::string& photo_id, Rng& rng) {
  if (image.width < kPatchSize || image.height < kPatchSize) {
    throw TooSmallError(image.width, image.height, kPatchSize);
  }
  const int x = uniform_int(rng, 0, image.width - kPatchSize);
  const int y = uniform_int(rng, 0, image.height - kPatchSize);
  Patch p = crop_patch(image, x, y);
  p.source_photo_id = photo_id;
  return p;
}

PairLabel label_pair(const PhotoRecord& a, const PhotoRecord& b,
                     const AttributeVocabulary& vocab) {
  PairLabel out;
  out.y.assign(vocab.size(), 0);
  out.mask.assign(vocab.size(), 0);
  for (std::size_t k = 0; k < vocab.size(); ++k) {
    const auto* va = a.value(vocab.attributes[k]);
    const auto* vb = b.value(vocab.attributes[k]);
    if (!va || !vb || !vocab.admissible(k, *va) || !vocab.admissible(k, *vb)) continue;
    out.mask[k] = 1;
    out.y[k] = *va == *vb ? 1 : 0;
  }
  return out;
}

namespace {

struct AttributeSlice {
  std::vector<std::string> values;  // eligible values
  std::size_t photos_with_any = 0;
};

AttributeSlice slice(const CorpusIndex& index, const AttributeVocabulary& vocab,
                     std::size_t attr) {
  AttributeSlice s;
  for (const auto& v : vocab.values[attr]) {
    s.photos_with_any += index.photos_with(vocab.attributes[attr], v).size();
  }
  for (const auto& v : vocab.values[attr]) {
    const auto n = index.photos_with(vocab.attributes[attr], v).size();
    if (n >= 2 && s.photos_with_any - n >= 1) s.values.push_back(v);
  }
  return s;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::size_t(uniform_int(rng, 0, int(v.size()) - 1))];
}

}  // namespace

std::vector<std::size_t> eligible_attributes(const CorpusIndex& index,
                                             const AttributeVocabulary& vocab) {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < vocab.size(); ++a) {
    if (!slice(index, vocab, a).values.empty()) out.push_back(a);
  }
  return out;
}

PairPlan plan_pair_batch(const CorpusIndex& index, const AttributeVocabulary& vocab,
                         int batch_size, Rng& rng,
                         std::optional<std::size_t> force_attribute) {
  if (batch_size < 2) throw InputError("batch size must be at least 2");
  std::size_t attr;
  if (force_attribute) {
    attr = *force_attribute;
    if (attr >= vocab.size() || slice(index, vocab, attr).values.empty()) {
      throw UnsatisfiableError("attribute cannot be balanced",
                               {attr < vocab.size() ? vocab.attributes[attr] : "?"});
    }
  } else {
    auto eligible = eligible_attributes(index, vocab);
    if (eligible.empty()) {
      std::ostringstream os;
      os << "no attribute has two photos sharing a value and one photo differing;"
         << " deficient attributes:";
      for (const auto& a : vocab.attributes) os << " '" << a << "'";
      if (vocab.size() == 0) os << " (vocabulary is empty)";
      throw UnsatisfiableError(os.str(), vocab.attributes);
    }
    attr = pick(eligible, rng);
  }
  const auto s = slice(index, vocab, attr);
  const std::string& name = vocab.attributes[attr];

  PairPlan plan;
  plan.attribute = attr;
  plan.value = pick(s.values, rng);
  const auto& sharing = index.photos_with(name, plan.value);
  std::vector<std::string> others;
  for (const auto& v : vocab.values[attr]) {
    if (v == plan.value) continue;
    const auto& ids = index.photos_with(name, v);
    others.insert(others.end(), ids.begin(), ids.end());
  }

  const int positives = (batch_size + 1) / 2;
  const int negatives = batch_size / 2;
  for (int i = 0; i < positives; ++i) {
    const int n = int(sharing.size());
    const int a = uniform_int(rng, 0, n - 1);
    int b = uniform_int(rng, 0, n - 2);
    if (b >= a) ++b;
    plan.pairs.emplace_back(sharing[std::size_t(a)], sharing[std::size_t(b)]);
    plan.shares_value.push_back(1);
  }
  for (int i = 0; i < negatives; ++i) {
    const auto& a = pick(sharing, rng);
    const auto& b = pick(others, rng);
    if (coin(rng)) {
      plan.pairs.emplace_back(a, b);
    } else {
      plan.pairs.emplace_back(b, a);
    }
    plan.shares_value.push_back(0);
  }
  return plan;
}

PairBatch materialize(const PairPlan& plan, const CorpusIndex& index,
                      const AttributeVocabulary& vocab, PhotoStore& store,
                      const AugmentationParams& aug, Rng& rng, int workers) {
  const std::size_t n = plan.pairs.size();
  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng();

  PairBatch batch;
  batch.balanced_attribute = vocab.attributes.at(plan.attribute);
  batch.balanced_value = plan.value;
  batch.shares_value = plan.shares_value;
  batch.pairs.resize(n);
  batch.labels.resize(n);
  const std::size_t meta = vocab.size();
  parallel_for(n, workers, [&](std::size_t i) {
    Rng local(seeds[i]);
    const auto& ra = index.record(plan.pairs[i].first);
    const auto& rb = index.record(plan.pairs[i].second);
    Patch a = sample_patch(*store.get(ra), ra.photo_id, local);
    Patch b = sample_patch(*store.get(rb), rb.photo_id, local);
    PairLabel label = label_pair(ra, rb, vocab);
    std::array<std::uint8_t, 3> post{1, 1, 1};
    if (aug.enabled) post = apply_postprocessing(a, b, aug, local).labels;
    label.y.resize(meta + 3);
    label.mask.resize(meta + 3);
    for (int k = 0; k < 3; ++k) {
      label.y[meta + k] = post[k];
      label.mask[meta + k] = 1;
    }
    batch.pairs[i] = {std::move(a), std::move(b)};
    batch.labels[i] = std::move(label);
  });
  return batch;
}

PairBatch make_pair_batch(const CorpusIndex& index, const AttributeVocabulary& vocab,
                          int batch_size, PhotoStore& store,
                          const AugmentationParams& aug, Rng& rng, int workers) {
  auto plan = plan_pair_batch(index, vocab, batch_size, rng);
  return materialize(plan, index, vocab, store, aug, rng, workers);
}

namespace {

void augment_independently(Patch& a, Patch& b, const AugmentationParams& aug, Rng& rng) {
  if (aug.enabled) apply_postprocessing(a, b, aug, rng);
}

const std::vector<std::string>& require_photos(const CorpusIndex& index, std::size_t n) {
  if (index.photo_ids.size() < n) {
    throw UnsatisfiableError("need at least " + std::to_string(n) + " photos, corpus has " +
                             std::to_string(index.photo_ids.size()));
  }
  return index.photo_ids;
}

}  // namespace

TargetBatch make_image_batch(const CorpusIndex& index, PhotoStore& store,
                             int batch_size, const AugmentationParams& aug, Rng& rng) {
  const auto& ids = require_photos(index, 2);
  TargetBatch out;
  for (int i = 0; i < batch_size; ++i) {
    const bool same = i < (batch_size + 1) / 2;
    const auto& ra = index.record(pick(ids, rng));
    auto img_a = store.get(ra);
    Patch a = sample_patch(*img_a, ra.photo_id, rng);
    Patch b;
    if (same) {
      if (img_a->width == kPatchSize && img_a->height == kPatchSize) {
        throw UnsatisfiableError("photo " + ra.photo_id + " admits a single crop");
      }
      do {
        b = sample_patch(*img_a, ra.photo_id, rng);
      } while (b.x == a.x && b.y == a.y);
    } else {
      std::string other;
      do {
        other = pick(ids, rng);
      } while (other == ra.photo_id);
      const auto& rb = index.record(other);
      b = sample_patch(*store.get(rb), rb.photo_id, rng);
    }
    augment_independently(a, b, aug, rng);
    out.pairs.emplace_back(std::move(a), std::move(b));
    out.targets.push_back(same ? 1.0f : 0.0f);
  }
  return out;
}

TargetBatch make_order_batch(const CorpusIndex& index, PhotoStore& store,
                             int batch_size, Axis axis, const AugmentationParams& aug,
                             Rng& rng) {
  const auto& ids = require_photos(index, 1);
  TargetBatch out;
  for (int i = 0; i < batch_size; ++i) {
    const bool in_order = i < (batch_size + 1) / 2;
    const auto& r = index.record(pick(ids, rng));
    auto img = store.get(r);
    const int span = axis == Axis::kX ? img->width : img->height;
    if (span <= kPatchSize) {
      throw UnsatisfiableError("photo " + r.photo_id + " has a single position along axis");
    }
    Patch a, b;
    do {
      a = sample_patch(*img, r.photo_id, rng);
      b = sample_patch(*img, r.photo_id, rng);
    } while ((axis == Axis::kX ? a.x == b.x : a.y == b.y));
    const bool a_first = axis == Axis::kX ? a.x < b.x : a.y < b.y;
    if (a_first != in_order) std::swap(a, b);
    augment_independently(a, b, aug, rng);
    out.pairs.emplace_back(std::move(a), std::move(b));
    out.targets.push_back(in_order ? 1.0f : 0.0f);
  }
  return out;
}

ClassBatch make_camera_batch(const CorpusIndex& index, const AttributeVocabulary& vocab,
                             const std::string& camera_attribute, PhotoStore& store,
                             int batch_size, const AugmentationParams& aug, Rng& rng) {
  auto attr = vocab.attribute_index(camera_attribute);
  if (!attr) throw UnsatisfiableError("vocabulary lacks " + camera_attribute);
  std::vector<int> usable;
  for (std::size_t v = 0; v < vocab.values[*attr].size(); ++v) {
    if (!index.photos_with(camera_attribute, vocab.values[*attr][v]).empty()) {
      usable.push_back(int(v));
    }
  }
  if (usable.empty()) throw UnsatisfiableError("no photos carry " + camera_attribute);
  ClassBatch out;
  for (int i = 0; i < batch_size; ++i) {
    const int cls = pick(usable, rng);
    const auto& ids = index.photos_with(camera_attribute, vocab.values[*attr][std::size_t(cls)]);
    const auto& r = index.record(pick(ids, rng));
    Patch p = sample_patch(*store.get(r), r.photo_id, rng);
    if (aug.enabled) apply_spec(p, draw_spec(aug, rng));
    out.patches.push_back(std::move(p));
    out.classes.push_back(cls);
  }
  return out;
}

}  // namespace exifcons
