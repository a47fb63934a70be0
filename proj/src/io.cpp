#include "pss/io.hpp"

#include <algorithm>
#include <cctype>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "pss/synth.hpp"

namespace pss {

using nlohmann::json;

namespace {

constexpr char kModelMagic[5] = {'P', 'S', 'S', 'M', '1'};
constexpr char kDataMagic[5] = {'P', 'S', 'S', 'D', '1'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32s(std::span<const float> v) {
    out.reserve(out.size() + v.size() * 4);
    for (float f : v) u32(std::bit_cast<std::uint32_t>(f));
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* what) : b_(bytes), what_(what) {}

  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw FormatError(std::string(what_) + ": truncated at byte " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " more)");
    }
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto s = take(2);
    return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
  }
  std::uint32_t u32() {
    auto s = take(4);
    return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
           (static_cast<std::uint32_t>(s[2]) << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
  }
  void f32s(std::span<float> dst) {
    auto s = take(dst.size() * 4);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const std::uint32_t v = static_cast<std::uint32_t>(s[4 * i]) | (static_cast<std::uint32_t>(s[4 * i + 1]) << 8) |
                              (static_cast<std::uint32_t>(s[4 * i + 2]) << 16) |
                              (static_cast<std::uint32_t>(s[4 * i + 3]) << 24);
      dst[i] = std::bit_cast<float>(v);
    }
  }
  void magic(const char (&m)[5]) {
    auto s = take(5);
    if (std::memcmp(s.data(), m, 5) != 0) {
      throw FormatError(std::string(what_) + ": bad magic, expected " + std::string(m, 5));
    }
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  const char* what_;
};

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      throw FormatError(std::string(what) + ": unknown key '" + it.key() + "'");
    }
  }
}

json manifest_json(const ShardManifest& m, bool images) {
  json j;
  j["domain"] = m.domain;
  j["seed"] = m.seed;
  j["split"] = m.split;
  j["resolution"] = {m.height, m.width};
  j["label_space"] = m.label_space;
  if (!images) j["images"] = false;
  return j;
}

ShardManifest parse_manifest(const json& j, bool* images) {
  ShardManifest m;
  try {
    m.domain = j.at("domain").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.split = j.at("split").get<std::string>();
    const auto& r = j.at("resolution");
    if (!r.is_array() || r.size() != 2) throw FormatError("resolution must be [h, w]");
    m.height = r[0].get<int>();
    m.width = r[1].get<int>();
    m.label_space = j.at("label_space").get<LabelSpace>();
    *images = get_or(j, "images", true);
  } catch (const json::exception& e) {
    throw FormatError(std::string("PSSD1 header: ") + e.what());
  }
  if (m.height <= 0 || m.width <= 0) throw FormatError("PSSD1 header: non-positive resolution");
  return m;
}

std::vector<std::uint8_t> encode_data(const ShardManifest& manifest, std::span<const Sample> samples, bool images) {
  Writer w;
  w.raw(kDataMagic, 5);
  const std::string header = manifest_json(manifest, images).dump();
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.raw(header.data(), header.size());
  w.u32(static_cast<std::uint32_t>(samples.size()));
  const std::size_t hw = static_cast<std::size_t>(manifest.height) * manifest.width;
  for (const auto& s : samples) {
    if (s.mask.size() != hw) throw DimensionError("sample mask has " + std::to_string(s.mask.size()) + " pixels");
    if (images) {
      if (s.image.numel() != 3 * hw) throw DimensionError("sample image shape " + shape_str(s.image.shape()));
      w.f32s(s.image.data());
    }
    w.raw(s.mask.data(), hw);
  }
  return w.out;
}

}  // namespace

// ---- checkpoint ------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors) {
  Writer w;
  w.raw(kModelMagic, 5);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw std::invalid_argument("tensor name too long");
    if (t.ndim() > 255) throw std::invalid_argument("tensor rank too large");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.ndim()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(t.data());
  }
  return w.out;
}

NamedTensors decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "PSSM1");
  r.magic(kModelMagic);
  const std::uint32_t count = r.u32();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    auto nb = r.take(len);
    std::string name(nb.begin(), nb.end());
    const int nd = r.u8();
    Shape shape;
    std::size_t numel = 1;
    for (int d = 0; d < nd; ++d) {
      const std::uint32_t v = r.u32();
      if (v == 0 || v > (1u << 28)) throw FormatError("PSSM1: tensor '" + name + "' has dimension " + std::to_string(v));
      shape.push_back(static_cast<int>(v));
      numel *= v;
      if (numel > r.remaining()) throw FormatError("PSSM1: tensor '" + name + "' exceeds the file size");
    }
    std::vector<float> data(numel);
    r.f32s(data);
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw FormatError("PSSM1: trailing bytes after the last tensor");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  write_file(path, encode_checkpoint(tensors));
}

NamedTensors load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void assign_parameters(const NamedTensors& src, const NamedTensors& dst) {
  if (src.size() != dst.size()) {
    throw FormatError("checkpoint has " + std::to_string(src.size()) + " tensors, model expects " +
                      std::to_string(dst.size()));
  }
  for (const auto& [name, target] : dst) {
    auto it = std::find_if(src.begin(), src.end(), [&](const auto& p) { return p.first == name; });
    if (it == src.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != target.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(it->second.shape()) + ", model expects " +
                        shape_str(target.shape()));
    }
    auto s = it->second.data();
    Tensor t = target;
    std::copy(s.begin(), s.end(), t.data().begin());
  }
}

// ---- dataset ---------------------------------------------------------------

std::vector<std::uint8_t> encode_dataset(const DatasetShard& shard) {
  return encode_data(shard.manifest, shard.samples, true);
}

namespace {

struct DecodedData {
  ShardManifest manifest;
  bool images = true;
  std::vector<Sample> samples;
};

DecodedData decode_data(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "PSSD1");
  r.magic(kDataMagic);
  const std::uint32_t hlen = r.u32();
  auto hb = r.take(hlen);
  json header;
  try {
    header = json::parse(hb.begin(), hb.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("PSSD1 header is not JSON: ") + e.what());
  }
  DecodedData d;
  d.manifest = parse_manifest(header, &d.images);
  const std::uint32_t count = r.u32();
  const std::size_t hw = static_cast<std::size_t>(d.manifest.height) * d.manifest.width;
  const std::size_t per = hw + (d.images ? 12 * hw : 0);
  if (static_cast<std::uint64_t>(count) * per != r.remaining()) {
    throw FormatError("PSSD1: payload size does not match " + std::to_string(count) + " samples at " +
                      std::to_string(d.manifest.height) + "x" + std::to_string(d.manifest.width));
  }
  const int classes = d.manifest.label_space.num_classes();
  d.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample s;
    s.domain_id = d.manifest.domain;
    if (d.images) {
      s.image = Tensor({3, d.manifest.height, d.manifest.width});
      r.f32s(s.image.data());
    }
    auto mb = r.take(hw);
    s.mask.assign(mb.begin(), mb.end());
    for (auto v : s.mask) {
      if (v >= classes && v != d.manifest.label_space.ignore_label) {
        throw FormatError("PSSD1: sample " + std::to_string(i) + " has label " + std::to_string(v) +
                          " outside label space '" + d.manifest.label_space.name + "'");
      }
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace

DatasetShard decode_dataset(std::span<const std::uint8_t> bytes) {
  DecodedData d = decode_data(bytes);
  if (!d.images) throw FormatError("PSSD1: file holds masks only, not a dataset");
  return {std::move(d.manifest), std::move(d.samples)};
}

void save_dataset(const std::filesystem::path& path, const DatasetShard& shard) {
  write_file(path, encode_dataset(shard));
}

DatasetShard load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

void save_mask(const std::filesystem::path& path, const ShardManifest& manifest, const std::vector<std::uint8_t>& mask) {
  Sample s;
  s.mask = mask;
  write_file(path, encode_data(manifest, std::span<const Sample>(&s, 1), false));
}

MaskFile load_masks(const std::filesystem::path& path) {
  DecodedData d = decode_data(read_file(path));
  MaskFile m;
  m.manifest = std::move(d.manifest);
  for (auto& s : d.samples) m.masks.push_back(std::move(s.mask));
  return m;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- JSON forms ------------------------------------------------------------

void to_json(json& j, const LabelSpace& ls) {
  j = json{{"name", ls.name}, {"classes", ls.class_names}, {"ignore_label", ls.ignore_label}};
}

void from_json(const json& j, LabelSpace& ls) {
  ls.name = j.at("name").get<std::string>();
  ls.class_names = j.at("classes").get<std::vector<std::string>>();
  ls.ignore_label = get_or(j, "ignore_label", kIgnoreLabel);
  try {
    ls.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

void to_json(json& j, const AutoencoderSpec& s) {
  j = json{{"resolution", {s.height, s.width}},
           {"in_channels", s.in_channels},
           {"channels", s.channels},
           {"loss_threshold", s.loss_threshold},
           {"max_epochs", s.max_epochs},
           {"batch_size", s.batch_size},
           {"lr", s.lr}};
}

void from_json(const json& j, AutoencoderSpec& s) {
  reject_unknown(j, {"resolution", "in_channels", "channels", "loss_threshold", "max_epochs", "batch_size", "lr"},
                 "ae_spec");
  if (j.contains("resolution")) {
    const auto& r = j.at("resolution");
    if (!r.is_array() || r.size() != 2) throw FormatError("ae_spec.resolution must be [h, w]");
    s.height = r[0].get<int>();
    s.width = r[1].get<int>();
  }
  s.in_channels = get_or(j, "in_channels", s.in_channels);
  s.channels = get_or(j, "channels", s.channels);
  s.loss_threshold = get_or(j, "loss_threshold", s.loss_threshold);
  s.max_epochs = get_or(j, "max_epochs", s.max_epochs);
  s.batch_size = get_or(j, "batch_size", s.batch_size);
  s.lr = get_or(j, "lr", s.lr);
}

void to_json(json& j, const SegmenterSpec& s) {
  j = json{{"resolution", {s.height, s.width}}, {"base_width", s.base_width}, {"num_classes", s.num_classes},
           {"epochs", s.epochs},                {"batch_size", s.batch_size}, {"lr", s.lr}};
}

void from_json(const json& j, SegmenterSpec& s) {
  reject_unknown(j, {"resolution", "base_width", "num_classes", "epochs", "batch_size", "lr"}, "seg_spec");
  if (j.contains("resolution")) {
    const auto& r = j.at("resolution");
    if (!r.is_array() || r.size() != 2) throw FormatError("seg_spec.resolution must be [h, w]");
    s.height = r[0].get<int>();
    s.width = r[1].get<int>();
  }
  s.base_width = get_or(j, "base_width", s.base_width);
  s.num_classes = get_or(j, "num_classes", s.num_classes);
  s.epochs = get_or(j, "epochs", s.epochs);
  s.batch_size = get_or(j, "batch_size", s.batch_size);
  s.lr = get_or(j, "lr", s.lr);
}

// ---- registry directory ----------------------------------------------------

namespace {

std::string entry_stem(std::size_t index, const std::string& domain) {
  std::ostringstream os;
  os << std::setw(3) << std::setfill('0') << index << '_';
  for (char c : domain) os << (std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return os.str();
}

}  // namespace

void save_registry(const std::filesystem::path& dir, const ExpertRegistry& registry) {
  std::filesystem::create_directories(dir);
  json entries = json::array();
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const RegistryEntry& e = registry.at(i);
    const std::string stem = entry_stem(i, e.domain_id);
    const std::string ae_file = stem + ".ae.pssm";
    const std::string seg_file = stem + ".seg.pssm";
    save_checkpoint(dir / ae_file, e.task_expert.named_parameters());
    save_checkpoint(dir / seg_file, e.domain_expert.named_parameters());
    entries.push_back({{"domain_id", e.domain_id},
                       {"task_expert", ae_file},
                       {"domain_expert", seg_file},
                       {"label_space", e.label_space},
                       {"ae_spec", e.task_expert.spec},
                       {"seg_spec", e.domain_expert.spec},
                       {"checksum", hex64(entry_checksum(e))}});
  }
  json manifest{{"format", "pss-registry-1"}, {"entries", entries}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

ExpertRegistry load_registry(const std::filesystem::path& dir) {
  json manifest;
  try {
    const auto bytes = read_file(dir / "manifest.json");
    manifest = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError("registry manifest: " + std::string(e.what()));
  }
  ExpertRegistry registry;
  try {
    if (manifest.at("format").get<std::string>() != "pss-registry-1") throw FormatError("unknown registry format");
    for (const auto& je : manifest.at("entries")) {
      RegistryEntry e;
      e.domain_id = je.at("domain_id").get<std::string>();
      e.label_space = je.at("label_space").get<LabelSpace>();
      const AutoencoderSpec ae_spec = je.at("ae_spec").get<AutoencoderSpec>();
      const SegmenterSpec seg_spec = je.at("seg_spec").get<SegmenterSpec>();
      ae_spec.validate();
      seg_spec.validate();
      e.task_expert = build_autoencoder(ae_spec, 0);
      e.task_expert.domain_id = e.domain_id;
      e.domain_expert = build_segmenter(seg_spec, e.label_space, 0);
      assign_parameters(load_checkpoint(dir / je.at("task_expert").get<std::string>()),
                        e.task_expert.named_parameters());
      assign_parameters(load_checkpoint(dir / je.at("domain_expert").get<std::string>()),
                        e.domain_expert.named_parameters());
      if (je.contains("checksum") && je.at("checksum").get<std::string>() != hex64(entry_checksum(e))) {
        throw FormatError("registry entry '" + e.domain_id + "' does not match its recorded checksum");
      }
      registry.append(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError("registry manifest: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw FormatError("registry manifest: " + std::string(e.what()));
  }
  return registry;
}

// ---- experiment configuration ----------------------------------------------

void ExperimentConfig::validate() const {
  auto check_domains = [](const std::vector<std::string>& names, const char* what, bool allow_empty) {
    if (names.empty() && !allow_empty) throw FormatError(std::string(what) + " is empty");
    std::set<std::string> seen;
    for (const auto& n : names) {
      try {
        (void)parse_domain(n);
      } catch (const std::invalid_argument& e) {
        throw FormatError(std::string(what) + ": " + e.what());
      }
      if (!seen.insert(n).second) throw FormatError(std::string(what) + ": duplicate domain '" + n + "'");
    }
  };
  check_domains(curriculum, "curriculum", false);
  check_domains(unseen, "unseen", true);
  check_domains(hybrid, "hybrid", true);
  if (methods.empty()) throw FormatError("methods is empty");
  if (curriculum.size() < 2 && methods != std::vector<Method>{Method::pss}) {
    throw FormatError("baselines need a curriculum of at least 2 domains");
  }
  if (!hybrid.empty() && hybrid.size() < 2) throw FormatError("hybrid needs at least 2 domains");
  if (train_size <= 0 || val_size <= 0) throw FormatError("train_size and val_size must be positive");
  try {
    ae_spec.validate();
    seg_spec.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  if (ae_spec.height != seg_spec.height || ae_spec.width != seg_spec.width) {
    throw FormatError("ae_spec and seg_spec resolutions differ");
  }
  if (overhead && (overhead->max_k < 2 || overhead->samples < 1 || overhead->images < 1)) {
    throw FormatError("overhead needs max_k >= 2, samples >= 1, images >= 1");
  }
}

void to_json(json& j, const ExperimentConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.emplace_back(method_label(m));
  j = json{{"seeds", {{"data", c.data_seed}, {"train", c.train_seed}}},
           {"curriculum", c.curriculum},
           {"methods", methods},
           {"train_size", c.train_size},
           {"val_size", c.val_size},
           {"ae_spec", c.ae_spec},
           {"seg_spec", c.seg_spec},
           {"unseen", c.unseen},
           {"hybrid", c.hybrid},
           {"parallel_routing", c.parallel_routing}};
  if (c.overhead) {
    j["overhead"] = {{"max_k", c.overhead->max_k}, {"samples", c.overhead->samples}, {"images", c.overhead->images}};
  }
}

void from_json(const json& j, ExperimentConfig& c) {
  reject_unknown(j, {"seeds", "curriculum", "methods", "train_size", "val_size", "ae_spec", "seg_spec", "unseen",
                     "hybrid", "overhead", "parallel_routing"},
                 "config");
  try {
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      reject_unknown(s, {"data", "train"}, "seeds");
      c.data_seed = get_or(s, "data", c.data_seed);
      c.train_seed = get_or(s, "train", c.train_seed);
    }
    c.curriculum = get_or(j, "curriculum", c.curriculum);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    c.train_size = get_or(j, "train_size", c.train_size);
    c.val_size = get_or(j, "val_size", c.val_size);
    if (j.contains("ae_spec")) c.ae_spec = j.at("ae_spec").get<AutoencoderSpec>();
    if (j.contains("seg_spec")) c.seg_spec = j.at("seg_spec").get<SegmenterSpec>();
    c.unseen = get_or(j, "unseen", c.unseen);
    c.hybrid = get_or(j, "hybrid", c.hybrid);
    if (j.contains("overhead") && !j.at("overhead").is_null()) {
      const auto& o = j.at("overhead");
      reject_unknown(o, {"max_k", "samples", "images"}, "overhead");
      OverheadConfig oc;
      oc.max_k = get_or(o, "max_k", oc.max_k);
      oc.samples = get_or(o, "samples", oc.samples);
      oc.images = get_or(o, "images", oc.images);
      c.overhead = oc;
    }
    c.parallel_routing = get_or(j, "parallel_routing", c.parallel_routing);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ExperimentConfig c;
  try {
    c = json::parse(bytes.begin(), bytes.end()).get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw FormatError("config '" + path.string() + "': " + e.what());
  }
  c.validate();
  return c;
}

// ---- reports ---------------------------------------------------------------

json iou_json(const IoUReport& r, const LabelSpace& ls) {
  json per = json::object();
  for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) {
    const std::string name = c < ls.class_names.size() ? ls.class_names[c] : std::to_string(c);
    per[name] = r.per_class_iou[c] ? json(*r.per_class_iou[c]) : json(nullptr);
  }
  return {{"domain", r.domain_id}, {"miou", r.miou}, {"num_eval_pixels", r.num_eval_pixels}, {"per_class_iou", per}};
}

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string continual_csv(const ContinualReport& report) {
  std::ostringstream os;
  os << "method,domain,miou,delta_vs_st,category\n";
  const bool st = report.has(Method::single_task);
  for (const auto& row : report.rows) {
    for (std::size_t d = 0; d < report.domains.size(); ++d) {
      os << method_label(row.method) << ',' << report.domains[d] << ',' << fixed4(report.miou(row.method, d)) << ',';
      if (st) {
        os << fixed4(report.delta(row.method, d)) << ',' << category_name(report.category(row.method, d));
      } else {
        os << ',';
      }
      os << '\n';
    }
    os << method_label(row.method) << ",avg," << fixed4(report.average(row.method)) << ',';
    if (st) os << fixed4(report.average(row.method) - report.average(Method::single_task));
    os << ",\n";
  }
  return os.str();
}

json continual_json(const ContinualReport& report, const std::vector<LabelSpace>& label_spaces) {
  const bool st = report.has(Method::single_task);
  json rows = json::array();
  for (const auto& row : report.rows) {
    json cells = json::array();
    for (std::size_t d = 0; d < report.domains.size(); ++d) {
      json c = iou_json(row.cells[d], label_spaces.at(d));
      c["miou_points"] = report.miou(row.method, d);
      if (st) {
        c["delta_vs_st"] = report.delta(row.method, d);
        c["category"] = category_name(report.category(row.method, d));
      }
      cells.push_back(std::move(c));
    }
    rows.push_back({{"method", method_label(row.method)}, {"average", report.average(row.method)}, {"cells", cells}});
  }
  return {{"domains", report.domains}, {"rows", rows}};
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream os;
  os << "truth";
  for (const auto& d : m.domains) os << ',' << d;
  os << '\n';
  for (std::size_t i = 0; i < m.domains.size(); ++i) {
    os << m.domains[i];
    for (auto v : m.counts[i]) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

json confusion_json(const ConfusionMatrix& m) {
  return {{"domains", m.domains}, {"counts", m.counts}, {"total", m.total()}, {"accuracy", m.accuracy()}};
}

json unseen_json(const UnseenReport& r, const LabelSpace& ls) {
  json fixed = json::array();
  for (std::size_t i = 0; i < r.fixed.size(); ++i) {
    fixed.push_back({{"expert", r.expert_domains[i]}, {"iou", iou_json(r.fixed[i], ls)}});
  }
  json hist = json::object();
  for (std::size_t i = 0; i < r.expert_domains.size(); ++i) hist[r.expert_domains[i]] = r.routing_counts[i];
  return {{"domain", r.domain},
          {"samples", r.samples()},
          {"routing", hist},
          {"routed", iou_json(r.routed, ls)},
          {"fixed", fixed},
          {"best_fixed", r.expert_domains.at(r.best_fixed())},
          {"worst_fixed", r.expert_domains.at(r.worst_fixed())}};
}

namespace {

json timing_json(const TimingStats& t) {
  return {{"median_ms", t.median_ms}, {"mean_ms", t.mean_ms}, {"stddev_ms", t.stddev_ms}, {"samples", t.samples}};
}

}  // namespace

std::string overhead_csv(const OverheadReport& r) {
  std::ostringstream os;
  os << "k,median_ms,mean_ms,stddev_ms,samples\n";
  for (const auto& p : r.points) {
    os << p.k << ',' << fixed4(p.routing.median_ms) << ',' << fixed4(p.routing.mean_ms) << ','
       << fixed4(p.routing.stddev_ms) << ',' << p.routing.samples << '\n';
  }
  os << "direct," << fixed4(r.direct.median_ms) << ',' << fixed4(r.direct.mean_ms) << ',' << fixed4(r.direct.stddev_ms)
     << ',' << r.direct.samples << '\n';
  return os.str();
}

json overhead_json(const OverheadReport& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    json j = timing_json(p.routing);
    j["k"] = p.k;
    points.push_back(std::move(j));
  }
  return {{"routing", points},
          {"direct", timing_json(r.direct)},
          {"fit", {{"slope_ms", r.slope_ms}, {"intercept_ms", r.intercept_ms}, {"r_squared", r.r_squared}}}};
}

json routing_json(const RoutingDecision& d, const ExpertRegistry& registry) {
  json domains = json::array();
  for (const auto& e : registry.entries()) domains.push_back(e.domain_id);
  return {{"chosen_index", d.chosen_index},
          {"chosen_domain_id", d.chosen_domain_id},
          {"losses", d.losses},
          {"domains", domains},
          {"winning_loss", d.winning_loss()}};
}

json train_json(const TrainResult& r) {
  return {{"loss_history", r.loss_history},
          {"epochs_run", r.epochs_run()},
          {"converged", r.converged},
          {"final_loss", r.final_loss},
          {"warnings", r.warnings}};
}

}  // namespace pss
