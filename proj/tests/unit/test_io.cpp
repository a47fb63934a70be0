#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "../common/tiny.hpp"
#include "pss/io.hpp"
#include "pss/synth.hpp"

using namespace pss;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("pss_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_tensor(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0;
}

ExperimentConfig parse(const std::string& text) { return nlohmann::json::parse(text).get<ExperimentConfig>(); }

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("checkpoints round trip bit for bit") {
    auto m = build_autoencoder({}, 17);
    const auto bytes = encode_checkpoint(m.named_parameters());
    CHECK(std::string(bytes.begin(), bytes.begin() + 5) == "PSSM1");
    const auto back = decode_checkpoint(bytes);
    const auto orig = m.named_parameters();
    REQUIRE(back.size() == orig.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
      CHECK(back[i].first == orig[i].first);
      CHECK(same_tensor(back[i].second, orig[i].second));
    }
    CHECK(encode_checkpoint(back) == bytes);

    auto other = build_autoencoder({}, 18);
    assign_parameters(back, other.named_parameters());
    CHECK(encode_checkpoint(other.named_parameters()) == bytes);

    const auto dir = scratch("ckpt");
    save_checkpoint(dir / "m.pssm", orig);
    CHECK(read_file(dir / "m.pssm") == bytes);
    CHECK(load_checkpoint(dir / "m.pssm").size() == orig.size());
  }

  TEST_CASE("malformed checkpoints are format errors") {
    auto m = build_autoencoder(tiny::ae_spec(), 1);
    auto bytes = encode_checkpoint(m.named_parameters());
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    for (std::size_t cut : {std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
      std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
      CHECK_THROWS_AS(decode_checkpoint(part), FormatError);
    }
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(longer), FormatError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.pssm"), FormatError);

    auto big = build_autoencoder({}, 1);
    CHECK_THROWS_AS(assign_parameters(decode_checkpoint(bytes), big.named_parameters()), FormatError);
  }

  TEST_CASE("datasets round trip") {
    auto shard = generate_dataset("rain", 5, 3, "val", 32, 48);
    const auto bytes = encode_dataset(shard);
    CHECK(std::string(bytes.begin(), bytes.begin() + 5) == "PSSD1");
    const auto back = decode_dataset(bytes);
    CHECK(back.manifest == shard.manifest);
    CHECK(shard_checksum(back) == shard_checksum(shard));
    CHECK(back.samples[2].domain_id == "rain");
    CHECK(encode_dataset(back) == bytes);
    auto cut = bytes;
    cut.pop_back();
    CHECK_THROWS_AS(decode_dataset(cut), FormatError);
    auto bad_label = bytes;
    bad_label.back() = 9;
    CHECK_THROWS_AS(decode_dataset(bad_label), FormatError);

    const auto dir = scratch("data");
    save_dataset(dir / "d.pssd", shard);
    CHECK(shard_checksum(load_dataset(dir / "d.pssd")) == shard_checksum(shard));
  }

  TEST_CASE("mask files") {
    auto shard = generate_dataset("day", 1, 3, "val", 32, 32);
    const auto dir = scratch("mask");
    save_mask(dir / "mask.pssd", shard.manifest, shard.samples[0].mask);
    const auto mf = load_masks(dir / "mask.pssd");
    CHECK(mf.manifest == shard.manifest);
    REQUIRE(mf.masks.size() == 1);
    CHECK(mf.masks[0] == shard.samples[0].mask);
    CHECK_THROWS_AS(load_dataset(dir / "mask.pssd"), FormatError);
  }

  TEST_CASE("registry directories round trip and stay append-only on disk") {
    auto tasks = tiny::tasks({"day", "unstructured"}, 6, 2);
    ExpertRegistry reg;
    learn_task(reg, "day", tasks[0].train, tiny::ae_spec(), tiny::seg_spec(), 1);
    const auto dir = scratch("registry");
    save_registry(dir, reg);
    const auto ae0 = read_file(dir / "000_day.ae.pssm");
    const auto seg0 = read_file(dir / "000_day.seg.pssm");

    learn_task(reg, "unstructured", tasks[1].train, tiny::ae_spec(), tiny::seg_spec(), 1);
    save_registry(dir, reg);
    CHECK(read_file(dir / "000_day.ae.pssm") == ae0);
    CHECK(read_file(dir / "000_day.seg.pssm") == seg0);
    CHECK(fs::exists(dir / "001_unstructured.seg.pssm"));

    const auto back = load_registry(dir);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back.at(i).domain_id == reg.at(i).domain_id);
      CHECK(back.at(i).label_space == reg.at(i).label_space);
      CHECK(back.at(i).task_expert.spec == reg.at(i).task_expert.spec);
      CHECK(back.at(i).domain_expert.spec == reg.at(i).domain_expert.spec);
      CHECK(entry_checksum(back.at(i)) == entry_checksum(reg.at(i)));
    }
    const auto& img = tasks[1].val.samples[0].image;
    CHECK(infer_domain(back, img).losses == infer_domain(reg, img).losses);

    SUBCASE("tampering is detected") {
      auto bytes = read_file(dir / "000_day.seg.pssm");
      bytes[bytes.size() - 2] ^= 0x40;
      write_file(dir / "000_day.seg.pssm", bytes);
      CHECK_THROWS_AS(load_registry(dir), FormatError);
    }
    SUBCASE("a missing manifest is a format error") {
      fs::remove(dir / "manifest.json");
      CHECK_THROWS_AS(load_registry(dir), FormatError);
    }
  }

  TEST_CASE("configs round trip") {
    ExperimentConfig c;
    c.curriculum = {"day", "night", "fog"};
    c.methods = {Method::single_task, Method::pss};
    c.train_size = 40;
    c.overhead = OverheadConfig{4, 5, 2};
    c.unseen = {"dusk"};
    c.ae_spec.max_epochs = 9;
    const nlohmann::json j = c;
    const ExperimentConfig back = j.get<ExperimentConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(back.curriculum == c.curriculum);
    CHECK(back.methods == c.methods);
    CHECK(back.overhead->max_k == 4);
    CHECK(back.ae_spec == c.ae_spec);

    const auto defaults = parse("{}");
    CHECK(defaults.data_seed == 7);
    CHECK(defaults.curriculum == std::vector<std::string>{"day", "night"});
    CHECK(defaults.methods == all_methods());
    CHECK(defaults.train_size == 500);
    CHECK(defaults.val_size == 100);
    CHECK_FALSE(defaults.overhead);
    CHECK_NOTHROW(defaults.validate());
  }

  TEST_CASE("bad configs are format errors") {
    CHECK_THROWS_AS(parse(R"({"curiculum": ["day"]})"), FormatError);
    CHECK_THROWS_AS(parse(R"({"seeds": {"data": 1, "model": 2}})"), FormatError);
    CHECK_THROWS_AS(parse(R"({"ae_spec": {"depth": 3}})"), FormatError);
    CHECK_THROWS_AS(parse(R"({"methods": ["ST", "EWC"]})"), FormatError);
    CHECK_THROWS_AS(parse(R"({"train_size": "many"})"), FormatError);
    CHECK_THROWS_AS(parse(R"({"curriculum": ["day", "day"]})").validate(), FormatError);
    CHECK_THROWS_AS(parse(R"({"curriculum": []})").validate(), FormatError);
    CHECK_THROWS_AS(parse(R"({"curriculum": ["day", "snow"]})").validate(), FormatError);
    CHECK_THROWS_AS(parse(R"({"curriculum": ["day"]})").validate(), FormatError);
    CHECK_THROWS_AS(parse(R"({"val_size": 0})").validate(), FormatError);
    CHECK_THROWS_AS(parse(R"({"ae_spec": {"resolution": [32, 32]}})").validate(), FormatError);
    CHECK_THROWS_AS(parse(R"({"overhead": {"max_k": 1}})").validate(), FormatError);

    const auto dir = scratch("config");
    write_text(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), FormatError);
    write_text(dir / "ok.json", R"({"curriculum": ["day", "fog"], "train_size": 10})");
    CHECK(load_config(dir / "ok.json").curriculum[1] == "fog");
  }

  TEST_CASE("report writers") {
    ContinualReport r;
    r.domains = {"day", "night"};
    r.rows.push_back({Method::single_task, {IoUReport{"day", {0.5, std::nullopt}, 0.5, 10}, IoUReport{"night", {}, 0.25, 10}}});
    r.rows.push_back({Method::pss, {IoUReport{"day", {}, 0.5, 10}, IoUReport{"night", {}, 0.2, 10}}});
    const std::string csv = continual_csv(r);
    CHECK(csv.rfind("method,domain,miou,delta_vs_st,category\n", 0) == 0);
    CHECK(csv.find("ST,day,50.0000,0.0000,reference") != std::string::npos);
    CHECK(csv.find("PSS,day,50.0000,0.0000,unchanged") != std::string::npos);
    CHECK(csv.find("PSS,night,20.0000,-5.0000,not_learned") != std::string::npos);
    CHECK(csv.find("PSS,avg,35.0000") != std::string::npos);

    ConfusionMatrix m({"day", "night"});
    m.add(0, 0);
    m.add(1, 0);
    CHECK(confusion_csv(m) == "truth,day,night\nday,1,0\nnight,1,0\n");
    const auto cj = confusion_json(m);
    CHECK(cj["accuracy"].get<double>() == 0.5);
    CHECK(cj["counts"][1][0].get<int>() == 1);

    const auto ij = iou_json(r.rows[0].cells[0], base_label_space());
    CHECK(ij["per_class_iou"]["sky"].get<double>() == 0.5);
    CHECK(ij["per_class_iou"]["building"].is_null());
  }

  TEST_CASE("file helpers") {
    CHECK(fnv1a64(std::vector<std::uint8_t>{}) == 0xcbf29ce484222325ULL);
    const std::string a = "a";
    CHECK(fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(a.data()), 1)) == 0xaf63dc4c8601ec8cULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
  }
}
