#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgb/encoders.hpp"
#include "lgb/text_pipeline.hpp"

namespace lgb {

struct ModelConfig {
  std::int64_t text_dim = 64;
  int text_mixing_layers = 1;
  bool text_attention = false;
  std::size_t max_len = 256;
  SegmentLimits limits;

  GnnVariant gnn_variant = GnnVariant::gin;
  std::int64_t gnn_hidden = 64;
  std::int64_t gnn_output = 64;
  int gnn_layers = 2;
  double gin_epsilon = 0.0;
  double gat_negative_slope = 0.2;

  std::int64_t lm_head_hidden = 64;
  std::int64_t fusion_head_hidden = 64;
  FusionMode fusion = FusionMode::concat;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  /// Hash of the canonical (key-sorted) JSON form.
  std::string hash() const;
};

struct StageRecord {
  std::string stage;
  std::string config_hash;
  int epochs_run = 0;
  int best_epoch = 0;

  bool operator==(const StageRecord&) const = default;
};

/// Everything needed for inference plus the append-only training history.
struct ModelBundle {
  ModelConfig config;
  Vocabulary vocab;
  TextEncoderParams text;
  HeadParams lm_head;
  GraphEncoderParams graph;
  HeadParams fusion_head;
  std::vector<StageRecord> provenance;

  /// Fresh parameters for the given vocabulary.
  static ModelBundle init(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed);

  /// Hash over config, vocabulary, and every parameter value.
  std::string version() const;

  /// Flat ids for a user record: sequence construction then vocabulary lookup.
  std::vector<std::int32_t> encode_ids(const UserRecord& user) const;
  std::vector<std::int32_t> encode_ids(const TextSequence& seq) const;
};

/// Hash over the text encoder parameters (used to assert they stay frozen).
std::string parameter_hash(const TextEncoderParams& p);
std::string parameter_hash(const GraphEncoderParams& p);

inline constexpr int kCheckpointVersion = 1;

nlohmann::json bundle_to_json(const ModelBundle& bundle);
/// Throws ValidationError if the stored config hash does not match the
/// stored config, or (when given) the expected hash.
ModelBundle bundle_from_json(const nlohmann::json& j, const std::string& expected_config_hash = "");

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path,
                            const std::string& expected_config_hash = "");

}  // namespace lgb
