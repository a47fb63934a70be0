#include <doctest.h>

#include <algorithm>
#include <cstring>

#include "../common/oracles.hpp"
#include "pss/autoencoder.hpp"
#include "pss/io.hpp"
#include "pss/metrics.hpp"
#include "pss/segmenter.hpp"
#include "pss/synth.hpp"

using namespace pss;

namespace {

std::vector<Tensor> images_of(const DatasetShard& s) {
  std::vector<Tensor> v;
  for (const auto& x : s.samples) v.push_back(x.image);
  return v;
}

double mean_loss(const AutoencoderModel& m, const DatasetShard& s) {
  double acc = 0.0;
  for (const auto& x : s.samples) acc += reconstruction_loss(m, x.image);
  return acc / static_cast<double>(s.size());
}

}  // namespace

TEST_SUITE("task_experts") {
  TEST_CASE("default parameter count") {
    AutoencoderSpec spec;
    auto m = build_autoencoder(spec, 1);
    CHECK(param_count(m) == 34099);
    CHECK(oracle::ae_param_count(3, {16, 32, 32, 32}) == 34099);
    CHECK(spec.expected_param_count() == 34099);
  }

  TEST_CASE("tiny channel widths") {
    AutoencoderSpec spec;
    spec.channels = {1, 1, 1, 1};
    // 28 (3->1 conv) + 3 * 10 (1->1 convs) + 3 * 5 (1->1 tconvs) + 15 (1->3 tconv)
    CHECK(oracle::ae_param_count(3, spec.channels) == 88);
    CHECK(param_count(build_autoencoder(spec, 1)) == 88);
  }

  TEST_CASE("count grows with width and matches the formula") {
    for (std::array<int, 4> ch : {std::array<int, 4>{2, 3, 4, 5}, std::array<int, 4>{8, 8, 16, 16}}) {
      AutoencoderSpec spec;
      spec.channels = ch;
      const std::size_t small = param_count(build_autoencoder(spec, 1));
      CHECK(small == static_cast<std::size_t>(oracle::ae_param_count(3, ch)));
      for (auto& c : spec.channels) c *= 2;
      CHECK(param_count(build_autoencoder(spec, 1)) > small);
    }
  }

  TEST_CASE("serialized payload is about 133 KiB") {
    auto m = build_autoencoder({}, 1);
    const auto bytes = encode_checkpoint(m.named_parameters());
    const std::size_t payload = 34099 * 4;
    CHECK(payload == 136396);
    CHECK(static_cast<double>(payload) / 1024.0 == doctest::Approx(133.2).epsilon(0.001));
    CHECK(bytes.size() > payload);
    CHECK(bytes.size() < 142 * 1024);
  }

  TEST_CASE("forward keeps shape and the open unit interval") {
    auto m = build_autoencoder({}, 3);
    Rng rng(4);
    std::vector<float> v(3 * 64 * 64);
    for (auto& x : v) x = rng.uniform();
    Tensor y = m.forward(Tensor({1, 3, 64, 64}, v));
    CHECK(y.shape() == Shape{1, 3, 64, 64});
    for (float x : y.data()) {
      CHECK(x > 0.0f);
      CHECK(x < 1.0f);
    }
  }

  TEST_CASE("resolution must be divisible by 16") {
    AutoencoderSpec spec;
    spec.height = 60;
    CHECK_THROWS_AS(build_autoencoder(spec, 1), std::invalid_argument);
    auto m = build_autoencoder({}, 1);
    CHECK_THROWS(reconstruction_loss(m, Tensor({3, 32, 32}, 0.5f)));
  }

  TEST_CASE("constant gray data converges within two epochs") {
    std::vector<Tensor> mid(16, Tensor({3, 64, 64}, 0.5f));
    auto a = build_autoencoder({}, 1);
    auto ra = train_autoencoder(a, mid, 2);
    CHECK(ra.converged);
    CHECK(ra.epochs_run() <= 2);

    std::vector<Tensor> dark(400, Tensor({3, 64, 64}, 0.3f));
    auto b = build_autoencoder({}, 1);
    auto rb = train_autoencoder(b, dark, 2);
    CHECK(rb.converged);
    CHECK(rb.epochs_run() <= 2);
    CHECK(rb.final_loss < 0.002f);
  }

  TEST_CASE("training is deterministic and rejects empty data") {
    auto ds = generate_dataset("day", 24, 5, "train");
    AutoencoderSpec spec;
    spec.max_epochs = 3;
    auto a = build_autoencoder(spec, 9), b = build_autoencoder(spec, 9);
    auto ra = train_autoencoder(a, images_of(ds), 10);
    auto rb = train_autoencoder(b, images_of(ds), 10);
    CHECK(ra.loss_history == rb.loss_history);
    CHECK(std::memcmp(a.encoder[0].weight.ptr(), b.encoder[0].weight.ptr(), a.encoder[0].weight.numel() * 4) == 0);
    std::vector<Tensor> none;
    CHECK_THROWS_AS(train_autoencoder(a, none, 1), std::invalid_argument);
  }

  TEST_CASE("non-convergence is reported, not raised") {
    auto ds = generate_dataset("night", 8, 5, "train");
    AutoencoderSpec spec;
    spec.max_epochs = 1;
    auto m = build_autoencoder(spec, 1);
    auto r = train_autoencoder(m, images_of(ds), 2);
    CHECK_FALSE(r.converged);
    CHECK(r.epochs_run() == 1);
    CHECK(r.final_loss == r.loss_history.back());
    CHECK(r.final_loss >= spec.loss_threshold);
    REQUIRE_FALSE(r.warnings.empty());
    CHECK(r.warnings.front().find("threshold not reached") != std::string::npos);
  }

  TEST_CASE("reconstruction loss is positive and pure") {
    auto m = build_autoencoder({}, 2);
    auto ds = generate_dataset("fog", 2, 1, "val");
    const float a = reconstruction_loss(m, ds.samples[0].image);
    const float b = reconstruction_loss(m, ds.samples[0].image);
    CHECK(a > 0.0f);
    CHECK(a == b);
  }

  TEST_CASE("clone is independent") {
    auto m = build_autoencoder({}, 2);
    auto c = m.clone();
    c.decoder[3].bias.data()[0] += 1.0f;
    CHECK(m.decoder[3].bias.data()[0] != c.decoder[3].bias.data()[0]);
  }
}

TEST_SUITE("task_experts_slow") {
  TEST_CASE("day autoencoder reaches the threshold and separates day from night") {
    auto train = generate_dataset("day", 200, 7, "train");
    auto m = build_autoencoder({}, 1);
    auto r = train_autoencoder(m, images_of(train), 2);
    MESSAGE("day AE epochs " << r.epochs_run() << " final loss " << r.final_loss);
    CHECK(r.converged);
    CHECK(r.final_loss < 0.002f);

    auto day = generate_dataset("day", 100, 7, "val");
    auto night = generate_dataset("night", 100, 7, "val");
    int wins = 0;
    for (int i = 0; i < 100; ++i) {
      wins += reconstruction_loss(m, day.samples[i].image) < reconstruction_loss(m, night.samples[i].image);
    }
    CHECK(wins >= 95);
    const double in = mean_loss(m, day), out = mean_loss(m, night);
    MESSAGE("day AE: in-domain " << in << " out-of-domain " << out);
    CHECK(out >= 2.0 * in);

    AutoencoderSpec ns;
    ns.max_epochs = 30;
    auto nm = build_autoencoder(ns, 3);
    train_autoencoder(nm, images_of(generate_dataset("night", 200, 7, "train")), 4);
    const double nin = mean_loss(nm, night), nout = mean_loss(nm, day);
    MESSAGE("night AE: in-domain " << nin << " out-of-domain " << nout);
    CHECK(nout >= 2.0 * nin);
  }
}

TEST_SUITE("domain_experts") {
  TEST_CASE("logits shape, determinism and size budget") {
    SegmenterSpec spec;
    auto a = build_segmenter(spec, base_label_space(), 5);
    auto b = build_segmenter(spec, base_label_space(), 5);
    Tensor x({1, 3, 64, 64}, 0.4f);
    CHECK(a.forward(x).shape() == Shape{1, 6, 64, 64});
    auto pa = a.named_parameters(), pb = b.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].first == pb[i].first);
      CHECK(std::memcmp(pa[i].second.ptr(), pb[i].second.ptr(), pa[i].second.numel() * 4) == 0);
    }
    MESSAGE("segmenter params " << a.param_count());
    CHECK(a.param_count() > 0);
    CHECK(a.param_count() < 10 * 34099);
  }

  TEST_CASE("class count must match the label space") {
    SegmenterSpec spec;
    spec.num_classes = 8;
    CHECK_THROWS_AS(build_segmenter(spec, base_label_space(), 1), std::invalid_argument);
    CHECK(build_segmenter(spec, extended_label_space(), 1).forward(Tensor({1, 3, 64, 64})).dim(1) == 8);
    spec.height = 62;
    CHECK_THROWS(spec.validate());
  }

  TEST_CASE("a single sample is memorised") {
    auto ds = generate_dataset("day", 1, 3, "train");
    SegmenterSpec spec;
    spec.epochs = 200;
    auto seg = build_segmenter(spec, ds.manifest.label_space, 5);
    auto r = train_segmenter(seg, ds, 6);
    CHECK(r.loss_history.front() > 1.0f);
    CHECK(r.final_loss < 0.01f);
  }

  TEST_CASE("training is deterministic") {
    auto ds = generate_dataset("rain", 16, 3, "train");
    SegmenterSpec spec;
    spec.epochs = 2;
    auto a = build_segmenter(spec, ds.manifest.label_space, 5);
    auto b = build_segmenter(spec, ds.manifest.label_space, 5);
    CHECK(train_segmenter(a, ds, 6).loss_history == train_segmenter(b, ds, 6).loss_history);
    CHECK(predict_mask(a, ds.samples[0].image) == predict_mask(b, ds.samples[0].image));
  }

  TEST_CASE("bad masks and empty data are rejected") {
    auto ds = generate_dataset("day", 2, 3, "train");
    SegmenterSpec spec;
    spec.epochs = 1;
    auto seg = build_segmenter(spec, ds.manifest.label_space, 5);
    auto bad = ds;
    bad.samples[1].mask = std::vector<std::uint8_t>(bad.samples[1].mask.size(), 6);
    CHECK_THROWS_AS(train_segmenter(seg, bad, 1), std::invalid_argument);
    DatasetShard empty;
    empty.manifest = ds.manifest;
    CHECK_THROWS_AS(train_segmenter(seg, empty, 1), std::invalid_argument);
    auto ignored = ds;
    std::fill(ignored.samples[0].mask.begin(), ignored.samples[0].mask.begin() + 100, kIgnoreLabel);
    CHECK_NOTHROW(train_segmenter(seg, ignored, 1));
  }

  TEST_CASE("predict_mask is the argmax of the logits") {
    SegmenterSpec spec;
    auto seg = build_segmenter(spec, base_label_space(), 8);
    auto ds = generate_dataset("overcast", 1, 3, "val");
    const auto mask = predict_mask(seg, ds.samples[0].image);
    Tensor logits = seg.forward(as_batch(ds.samples[0].image));
    CHECK(mask == oracle::argmax(oracle::to_double(logits.data()), 1, 6, 64 * 64));
    for (auto v : mask) CHECK(v < 6);
    CHECK_THROWS(predict_mask(seg, Tensor({3, 32, 32})));

    // A head that only produces a large class-0 bias.
    std::fill(seg.head.weight.data().begin(), seg.head.weight.data().end(), 0.0f);
    std::fill(seg.head.bias.data().begin(), seg.head.bias.data().end(), 0.0f);
    seg.head.bias.data()[0] = 10.0f;
    for (auto v : predict_mask(seg, ds.samples[0].image)) CHECK(v == 0);
  }
}

TEST_SUITE("domain_experts_slow") {
  TEST_CASE("train mIoU on 500 day samples and expert specialisation") {
    auto day = generate_dataset("day", 500, 7, "train");
    SegmenterSpec spec;  // 30 epochs
    auto seg = build_segmenter(spec, day.manifest.label_space, 1);
    auto r = train_segmenter(seg, day, 2);
    IoUAccumulator acc(day.manifest.label_space);
    for (const auto& s : day.samples) acc.add(predict_mask(seg, s.image), s.mask);
    const double train_miou = acc.report().miou;
    MESSAGE("day expert train mIoU " << train_miou);
    CHECK(train_miou > 0.85);
    for (const auto& w : r.warnings) MESSAGE("warning: " << w);

    auto night_train = generate_dataset("night", 300, 7, "train");
    SegmenterSpec ns;
    ns.epochs = 10;
    auto night = build_segmenter(ns, night_train.manifest.label_space, 3);
    train_segmenter(night, night_train, 4);
    auto night_val = generate_dataset("night", 100, 7, "val");
    IoUAccumulator a_night(night_val.manifest.label_space), a_day(night_val.manifest.label_space);
    for (const auto& s : night_val.samples) {
      a_night.add(predict_mask(night, s.image), s.mask);
      a_day.add(predict_mask(seg, s.image), s.mask);
    }
    MESSAGE("night val: night expert " << a_night.report().miou << ", day expert " << a_day.report().miou);
    CHECK(a_night.report().miou > a_day.report().miou);
  }
}
