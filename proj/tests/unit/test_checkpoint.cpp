#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "exifcons/checkpoint.hpp"
#include "exifcons/errors.hpp"
#include "unit/test_util.hpp"

using namespace exifcons;

namespace {

AttributeVocabulary small_vocab() {
  std::vector<PhotoRecord> recs;
  for (int i = 0; i < 6; ++i) {
    PhotoRecord r;
    r.photo_id = std::to_string(i);
    r.attributes["Image Model"] = i % 2 ? "A" : "B";
    r.attributes["EXIF Flash"] = i % 3 ? "16" : "24";
    recs.push_back(r);
  }
  return build_vocabulary(recs, 1, 1);
}

ModelConfig tiny(int output_dim) {
  ModelConfig c;
  c.conv_channels = {4, 8};
  c.conv_strides = {4, 4};
  c.embedding_dim = 16;
  c.head_widths = {16};
  c.output_dim = output_dim;
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
  testutil::TempDir dir;
  const auto vocab = small_vocab();
  ConsistencyNet<float> net(tiny(int(label_dim(vocab))), 5);
  auto ckpt = make_checkpoint(net, vocab, 42, R"({"seed":3})");
  Combiner comb(int(label_dim(vocab)), 8, 6);
  attach_combiner(ckpt, comb, 17);

  const auto path = dir / "m.ckpt";
  write_checkpoint(path, ckpt);
  const auto back = read_checkpoint(path);
  EXPECT_EQ(back.model, ckpt.model);
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.vocab, vocab);
  EXPECT_EQ(back.vocab_fingerprint, vocab.fingerprint());
  EXPECT_EQ(back.tensors, ckpt.tensors);
  ASSERT_TRUE(back.combiner.has_value());
  EXPECT_EQ(back.combiner->iterations, 17);

  const auto restored = restore_model(back);
  const auto pa = net.parameters();
  const auto pb = static_cast<const ConsistencyNet<float>&>(*restored).parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i]->value.size(), pb[i]->value.size());
    EXPECT_EQ(0, std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                             sizeof(float) * std::size_t(pa[i]->value.size())));
  }
  const auto rc = restore_combiner(back);
  const std::vector<float> probs(label_dim(vocab), 0.7f);
  EXPECT_EQ(rc->overall_consistency(probs), comb.overall_consistency(probs));

  // Writing the restored checkpoint again gives the same bytes.
  write_checkpoint(dir / "again.ckpt", back);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(path), slurp(dir / "again.ckpt"));
}

TEST(Checkpoint, DirectoryResolvesToModelFile) {
  testutil::TempDir dir;
  EXPECT_EQ(resolve_checkpoint_path(dir.path()), dir.path() / kCheckpointFile);
  EXPECT_EQ(resolve_checkpoint_path(dir / "x.ckpt"), dir / "x.ckpt");
}

TEST(Checkpoint, VocabularyMismatch) {
  const auto vocab = small_vocab();
  ConsistencyNet<float> net(tiny(int(label_dim(vocab))), 5);
  const auto ckpt = make_checkpoint(net, vocab, 0, "{}");
  EXPECT_NO_THROW(check_vocabulary(ckpt, vocab));
  auto other = vocab;
  other.values[0].pop_back();
  EXPECT_THROW(check_vocabulary(ckpt, other), InputError);
}

TEST(Checkpoint, MissingCombiner) {
  const auto vocab = small_vocab();
  ConsistencyNet<float> net(tiny(int(label_dim(vocab))), 5);
  EXPECT_THROW(restore_combiner(make_checkpoint(net, vocab, 0, "{}")), InputError);
}

TEST(Checkpoint, CorruptFile) {
  testutil::TempDir dir;
  {
    std::ofstream out(dir / "bad.ckpt", std::ios::binary);
    out << "EXCKgarbage";
  }
  EXPECT_THROW(read_checkpoint(dir / "bad.ckpt"), Error);
  EXPECT_THROW(read_checkpoint(dir / "absent.ckpt"), IoError);
}
