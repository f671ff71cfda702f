#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cardiofuse/error.hpp"
#include "cardiofuse/models.hpp"
#include "support/temp_dir.hpp"

#include <algorithm>
#include <cstring>

using namespace cardiofuse;
using namespace cardiofuse::models;

namespace {

const nn::Shape kFull{1, 64, 128};
const nn::Shape kSmall{1, 16, 16};

ArchOptions small_options() {
    ArchOptions o;
    o.block_channels = {4, 4, 4};
    o.final_channels = 4;
    return o;
}

bool same_tensor(const nn::Tensor& a, const nn::Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool same_params(const ModelGraph& a, const ModelGraph& b) {
    const auto pa = a.named_params(), pb = b.named_params();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].first != pb[i].first || pa[i].second->shape() != pb[i].second->shape()) return false;
        if (std::memcmp(pa[i].second->data(), pb[i].second->data(), pa[i].second->size() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

nn::Tensor random_input(const nn::Shape& chw, std::size_t batch, Rng& rng) {
    nn::Shape s{batch};
    s.insert(s.end(), chw.begin(), chw.end());
    nn::Tensor t(s);
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
    return t;
}

/// Abnormal samples are bright in the top half, normal ones in the bottom.
std::vector<dataset::LoadedSample> separable(std::size_t n, std::size_t rows, std::size_t cols, bool ecg, Rng& rng) {
    std::vector<dataset::LoadedSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        dataset::LoadedSample s;
        s.sample_id = "s" + std::to_string(i);
        s.record_id = "r" + std::to_string(i);
        s.label = static_cast<int>(i % 2);
        s.rows = rows;
        s.cols = cols;
        std::vector<float> img(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const bool bright = (r < rows / 2) == (s.label == 1);
            for (std::size_t c = 0; c < cols; ++c) {
                img[r * cols + c] = static_cast<float>((bright ? 0.6 : 0.1) + 0.2 * rng.uniform());
            }
        }
        s.pcg = img;
        if (ecg) s.ecg = img;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

TEST_CASE("build_single geometry") {
    const auto m = build_single(Modality::Pcg, kFull, 1);
    CHECK(m.arch.kind == ModelKind::PcgOnly);
    CHECK(m.feature_width(Modality::Pcg) == 8192);
    CHECK(m.has(Modality::Pcg));
    CHECK_FALSE(m.has(Modality::Ecg));
    Rng rng(1, "in");
    const auto x = random_input(kFull, 3, rng);
    CHECK(path_features(m, Modality::Pcg, x).shape() == nn::Shape{3, 8192});
    const auto p = forward(m, &x, nullptr);
    CHECK(p.shape() == nn::Shape{3, 2});
    for (std::size_t b = 0; b < 3; ++b) CHECK(p[b * 2] + p[b * 2 + 1] == doctest::Approx(1.0).epsilon(1e-6));

    CHECK(same_params(build_single(Modality::Pcg, kFull, 1), m));
    CHECK_FALSE(same_params(build_single(Modality::Pcg, kFull, 2), m));
    CHECK_THROWS_AS(build_single(Modality::Pcg, {64, 128}, 1), ModelError);
    CHECK_THROWS_AS(path_features(m, Modality::Ecg, x), ModelError);
    CHECK_THROWS_AS(forward(m, nullptr, &x), ModelError);
}

TEST_CASE("build_hybrid geometry and names") {
    const auto h = build_hybrid(kFull, kFull, 3);
    CHECK(h.arch.kind == ModelKind::Hybrid);
    CHECK(h.feature_width(Modality::Pcg) + h.feature_width(Modality::Ecg) == 16384);
    CHECK(h.arch.head_widths == std::vector<std::size_t>{256, 64, 2});

    const nn::Tensor zeros({2, 1, 64, 128});
    const auto p = forward(h, &zeros, &zeros);
    CHECK(p.shape() == nn::Shape{2, 2});
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-6));

    std::size_t pcg = 0, ecg = 0, head = 0;
    std::vector<std::string> names;
    for (const auto& [name, t] : h.named_params()) {
        names.push_back(name);
        if (name.rfind("path.pcg.", 0) == 0) ++pcg;
        else if (name.rfind("path.ecg.", 0) == 0) ++ecg;
        else if (name.rfind("head.", 0) == 0) ++head;
    }
    CHECK(pcg + ecg + head == names.size());
    CHECK(pcg == ecg);
    CHECK(pcg > 0);
    CHECK(head == 6);
    std::sort(names.begin(), names.end());
    CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());

    const auto j = to_json(h.arch);
    CHECK(to_json(architecture_from_json(j)) == j);
    CHECK(same_params(build(h.arch, 3), h));
    CHECK(parse_model_kind("hybrid") == ModelKind::Hybrid);
    CHECK_THROWS_AS(parse_model_kind("cnn"), ConfigError);
}

TEST_CASE("transplant") {
    const auto pcg = build_single(Modality::Pcg, kFull, 11);
    const auto ecg = build_single(Modality::Ecg, kFull, 12);
    auto h = build_hybrid(kFull, kFull, 13);
    const auto head_before = h.head.params;
    const std::size_t n = transplant(h, &pcg, &ecg);
    CHECK(n == 16);

    Rng rng(5, "scalograms");
    const auto x = random_input(kFull, 4, rng);
    const auto fp = path_features(pcg, Modality::Pcg, x), hp = path_features(h, Modality::Pcg, x);
    const auto fe = path_features(ecg, Modality::Ecg, x), he = path_features(h, Modality::Ecg, x);
    CHECK(std::memcmp(fp.data(), hp.data(), fp.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(fe.data(), he.data(), fe.size() * sizeof(float)) == 0);
    for (std::size_t l = 0; l < h.head.params.size(); ++l) {
        for (std::size_t k = 0; k < h.head.params[l].size(); ++k) {
            CHECK(same_tensor(h.head.params[l][k], head_before[l][k]));
        }
    }

    SUBCASE("one side only") {
        auto h2 = build_hybrid(kFull, kFull, 14);
        const auto ecg_before = h2.ecg_path.params;
        CHECK(transplant(h2, &pcg, nullptr) == 8);
        CHECK(h2.ecg_path.params.back().empty());
        for (std::size_t l = 0; l < ecg_before.size(); ++l) {
            for (std::size_t k = 0; k < ecg_before[l].size(); ++k) {
                CHECK(same_tensor(h2.ecg_path.params[l][k], ecg_before[l][k]));
            }
        }
    }
    SUBCASE("geometry mismatch names the tensor and changes nothing") {
        ArchOptions wide;
        wide.block_channels = {8, 32, 64};
        const auto bad = build_single(Modality::Pcg, kFull, 15, wide);
        auto h3 = build_hybrid(kFull, kFull, 16);
        const auto before = h3;
        CHECK_THROWS_WITH_AS(transplant(h3, &bad, nullptr), doctest::Contains("path.pcg.0.w"), ModelError);
        CHECK(same_params(h3, before));
        // a valid PCG side followed by a bad ECG side is rolled back too
        CHECK_THROWS_AS(transplant(h3, &pcg, &pcg), ModelError);
        CHECK(same_params(h3, before));
    }
}

TEST_CASE("predict") {
    auto m = build_single(Modality::Pcg, kSmall, 21, small_options());
    Rng rng(6, "pred");
    auto samples = separable(9, 16, 16, false, rng);

    SUBCASE("zero weights give one half") {
        auto z = m;
        for (auto& [name, t] : z.named_params()) t->fill(0.0f);
        for (double s : predict(z, samples)) CHECK(s == doctest::Approx(0.5).epsilon(1e-7));
    }
    SUBCASE("batched equals per-sample") {
        const auto batched = predict(m, samples, 4);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            CHECK(std::abs(batched[i] - predict_one(m, samples[i])) <= 1e-6);
            CHECK(batched[i] >= 0.0);
            CHECK(batched[i] <= 1.0);
        }
    }
    SUBCASE("monotone in the abnormal bias") {
        nn::Tensor* bias = nullptr;
        for (auto& [name, t] : m.named_params()) {
            if (name.rfind("head.", 0) == 0 && t->size() == 2) bias = t;
        }
        REQUIRE(bias != nullptr);
        double prev = -1.0;
        for (int step = 0; step < 6; ++step) {
            (*bias)[1] = -2.0f + static_cast<float>(step);
            const double s = predict_one(m, samples[0]);
            CHECK(s > prev);
            prev = s;
        }
    }
    SUBCASE("missing modality") {
        auto h = build_hybrid(kSmall, kSmall, 1, small_options());
        CHECK_THROWS_AS(predict(h, samples), ModelError);
    }
}

TEST_CASE("train") {
    Rng rng(7, "train");
    const auto data = separable(10, 16, 16, false, rng);
    const auto m0 = build_single(Modality::Pcg, kSmall, 31, small_options());

    SUBCASE("zero epochs leave the model untouched") {
        TrainConfig cfg;
        cfg.epochs = 0;
        const auto r = train(m0, data, data, cfg);
        CHECK(same_params(r.model, m0));
        CHECK(r.best_epoch == 0);
        CHECK(r.history.empty());
    }
    SUBCASE("fits a separable set, deterministically") {
        TrainConfig cfg;
        cfg.epochs = 200;
        cfg.batch_size = 5;
        cfg.seed = 4;
        cfg.patience = 40;
        std::vector<std::string> lines;
        const auto r = train(m0, data, data, cfg, [&](const std::string& l) { lines.push_back(l); });
        std::size_t correct = 0;
        const auto scores = predict(r.model, data);
        for (std::size_t i = 0; i < data.size(); ++i) correct += (scores[i] >= 0.5) == (data[i].label == 1);
        CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.99);
        CHECK(r.best_val_gmean == 1.0);
        CHECK(r.best_epoch >= 1);
        CHECK(r.history.size() <= 200);
        CHECK(lines.size() >= r.history.size());

        const auto again = train(m0, data, data, cfg);
        CHECK(history_json(again).dump() == history_json(r).dump());
        CHECK(same_params(again.model, r.model));
    }
    SUBCASE("hybrid trains on both inputs") {
        const auto hd = separable(6, 16, 16, true, rng);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 3;
        const auto r = train(build_hybrid(kSmall, kSmall, 1, small_options()), hd, hd, cfg);
        CHECK(r.history.size() == 2);
        CHECK_THROWS_AS(train(build_hybrid(kSmall, kSmall, 1, small_options()), data, data, cfg), ModelError);
    }
    SUBCASE("errors") {
        TrainConfig cfg;
        CHECK_THROWS_AS(train(m0, {}, data, cfg), DataError);
        cfg.batch_size = 0;
        CHECK_THROWS_AS(train(m0, data, data, cfg), ConfigError);
    }
}

TEST_CASE("checkpoints") {
    const auto h = build_hybrid(kSmall, kSmall, 41, small_options());
    const auto bytes = encode_checkpoint(h);
    REQUIRE(bytes.size() > 8);
    CHECK(std::memcmp(bytes.data(), "CFCK", 4) == 0);
    const auto back = decode_checkpoint(bytes);
    CHECK(same_params(back, h));
    CHECK(to_json(back.arch) == to_json(h.arch));
    CHECK(encode_checkpoint(back) == bytes);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("bad magic"), ModelError);
    for (std::size_t cut : {std::size_t{3}, std::size_t{7}, bytes.size() / 2, bytes.size() - 1}) {
        CHECK_THROWS_AS(decode_checkpoint(std::span<const std::uint8_t>(bytes.data(), cut)), ModelError);
    }
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(longer), ModelError);

    cftest::TempDir dir("cf-ck");
    const auto pcg = build_single(Modality::Pcg, kSmall, 42, small_options());
    save_checkpoint(pcg, dir / "pcg.cfck");
    const auto loaded = load_checkpoint(dir / "pcg.cfck");
    CHECK(loaded.arch.kind == ModelKind::PcgOnly);
    auto target = h;
    CHECK(transplant(target, &loaded, nullptr) == 8);
    CHECK(same_tensor(target.pcg_path.params[0][0], pcg.pcg_path.params[0][0]));
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.cfck"), ModelError);
}
