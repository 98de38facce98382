#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "exifcons/combiner.hpp"
#include "exifcons/consistency_net.hpp"
#include "exifcons/metadata.hpp"

namespace exifcons {

/// Row-major float tensor as stored on disk.
struct Tensor {
  std::vector<std::int64_t> dims;
  std::vector<float> data;
  bool operator==(const Tensor&) const = default;
};

/// Everything a checkpoint file carries. On disk: magic "EXCK", u32
/// version, then named sections (u32 name length, name, u64 payload length,
/// payload), all little-endian. Sections: "config" (JSON), "vocab" (the
/// vocabulary JSON), "tensors", and optionally "combiner" and
/// "combiner.tensors".
struct Checkpoint {
  ModelConfig model;
  std::string experiment_json = "{}";
  std::int64_t step = 0;
  std::uint64_t vocab_fingerprint = 0;
  std::string tool_version;
  AttributeVocabulary vocab;
  std::map<std::string, Tensor> tensors;

  struct CombinerPart {
    int input_dim = 0;
    int hidden = 0;
    std::int64_t iterations = 0;
    std::map<std::string, Tensor> tensors;
  };
  std::optional<CombinerPart> combiner;
};

inline constexpr const char* kCheckpointFile = "model.ckpt";

/// A directory argument means "<dir>/model.ckpt".
std::filesystem::path resolve_checkpoint_path(const std::filesystem::path& p);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const ConsistencyNet<float>& net, const AttributeVocabulary& vocab,
                           std::int64_t step, const std::string& experiment_json);
void attach_combiner(Checkpoint& ckpt, const Combiner& combiner, std::int64_t iterations);

/// Throws InputError when `vocab` differs from the one the model was trained on.
void check_vocabulary(const Checkpoint& ckpt, const AttributeVocabulary& vocab);

std::unique_ptr<ConsistencyNet<float>> restore_model(const Checkpoint& ckpt);
/// Throws InputError when the checkpoint has no combiner section.
std::unique_ptr<Combiner> restore_combiner(const Checkpoint& ckpt);

std::string fingerprint_hex(std::uint64_t fp);

}  // namespace exifcons
