#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pss/autoencoder.hpp"
#include "pss/dataset.hpp"
#include "pss/experiments.hpp"
#include "pss/registry.hpp"
#include "pss/segmenter.hpp"

namespace pss {

/// Malformed or inconsistent file content (CLI exit code 3).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented invariant did not hold at run time (CLI exit code 4).
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// ---- PSSM1 checkpoint ------------------------------------------------------
//   "PSSM1" | u32 count | per entry: u16 name_len, name, u8 ndims,
//   ndims x u32 dims, f32 payload (all little endian)

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into the model's parameters by name. Every
/// parameter must be present with the same shape; extra names are an error.
void assign_parameters(const NamedTensors& src, const NamedTensors& dst);

// ---- PSSD1 dataset ---------------------------------------------------------
//   "PSSD1" | u32 header_len | JSON header | u32 count | per sample:
//   3*h*w f32 image (omitted when header.images is false), h*w u8 mask

std::vector<std::uint8_t> encode_dataset(const DatasetShard& shard);
DatasetShard decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const DatasetShard& shard);
DatasetShard load_dataset(const std::filesystem::path& path);

/// Mask-only container: one PSSD1 sample whose image payload is omitted.
void save_mask(const std::filesystem::path& path, const ShardManifest& manifest, const std::vector<std::uint8_t>& mask);
/// Loaded mask files carry empty image tensors.
struct MaskFile {
  ShardManifest manifest;
  std::vector<std::vector<std::uint8_t>> masks;
};
MaskFile load_masks(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t v);

// ---- JSON forms ------------------------------------------------------------

void to_json(nlohmann::json& j, const LabelSpace& ls);
void from_json(const nlohmann::json& j, LabelSpace& ls);
void to_json(nlohmann::json& j, const AutoencoderSpec& spec);
void from_json(const nlohmann::json& j, AutoencoderSpec& spec);
void to_json(nlohmann::json& j, const SegmenterSpec& spec);
void from_json(const nlohmann::json& j, SegmenterSpec& spec);

// ---- registry directory ----------------------------------------------------
//   manifest.json + <index>_<domain>.ae.pssm + <index>_<domain>.seg.pssm

/// Writes every entry. Files of existing entries are rewritten with
/// identical bytes, so prior checkpoints keep their checksums.
void save_registry(const std::filesystem::path& dir, const ExpertRegistry& registry);
ExpertRegistry load_registry(const std::filesystem::path& dir);

// ---- experiment configuration ----------------------------------------------

struct OverheadConfig {
  int max_k = 8;
  int samples = 100;
  int images = 10;
};

struct ExperimentConfig {
  std::uint64_t data_seed = 7;
  std::uint64_t train_seed = 7;
  std::vector<std::string> curriculum{"day", "night"};
  std::vector<Method> methods = all_methods();
  int train_size = 500;
  int val_size = 100;
  AutoencoderSpec ae_spec;
  SegmenterSpec seg_spec;
  std::vector<std::string> unseen;          // held-out domains scored after the run
  std::vector<std::string> hybrid;          // second curriculum scored with per-entry label spaces
  std::optional<OverheadConfig> overhead;
  bool parallel_routing = false;

  /// Non-empty curriculum, unique known domains, positive sizes, valid specs.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
/// Unknown keys are rejected so typos do not silently fall back to defaults.
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// ---- reports ---------------------------------------------------------------

nlohmann::json iou_json(const IoUReport& r, const LabelSpace& ls);
/// method,domain,miou,delta_vs_st,category (mIoU in points, 4 decimals)
std::string continual_csv(const ContinualReport& report);
nlohmann::json continual_json(const ContinualReport& report, const std::vector<LabelSpace>& label_spaces);
/// truth,<predicted domains...> rows of counts
std::string confusion_csv(const ConfusionMatrix& m);
nlohmann::json confusion_json(const ConfusionMatrix& m);
nlohmann::json unseen_json(const UnseenReport& r, const LabelSpace& ls);
std::string overhead_csv(const OverheadReport& r);
nlohmann::json overhead_json(const OverheadReport& r);
nlohmann::json routing_json(const RoutingDecision& d, const ExpertRegistry& registry);
nlohmann::json train_json(const TrainResult& r);

}  // namespace pss
