#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cardiofuse/dataset.hpp"
#include "cardiofuse/error.hpp"
#include "cardiofuse/rng.hpp"
#include "support/temp_dir.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

using namespace cardiofuse;
using namespace cardiofuse::dataset;
using cftest::TempDir;

namespace {

std::vector<RecordLabel> records(std::size_t normal, std::size_t abnormal) {
    std::vector<RecordLabel> out;
    for (std::size_t i = 0; i < normal + abnormal; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "r%04zu", i);
        out.push_back({id, i < normal ? Label::Normal : Label::Abnormal});
    }
    return out;
}

std::vector<SampleEntry> entries(std::size_t normal, std::size_t abnormal, std::size_t per_record = 1) {
    std::vector<SampleEntry> out;
    for (const auto& r : records(normal, abnormal)) {
        for (std::size_t k = 0; k < per_record; ++k) {
            SampleEntry e;
            e.record_id = r.record_id;
            e.sample_id = r.record_id + "_w" + std::to_string(k);
            e.label = r.label;
            e.pcg_sgm = "sgm/" + e.sample_id + "_pcg.sgm";
            out.push_back(e);
        }
    }
    return out;
}

std::multiset<std::string> ids(const std::vector<SampleEntry>& v) {
    std::multiset<std::string> s;
    for (const auto& e : v) s.insert(e.sample_id);
    return s;
}

std::size_t count_label(const std::vector<SampleEntry>& v, Label l) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](const auto& e) { return e.label == l; }));
}

/// PCG at 1000 Hz with 50 Hz bursts at the given times.
Waveform pcg_bursts(double seconds, const std::vector<double>& centers) {
    Waveform w;
    w.fs = 1000;
    w.samples.assign(static_cast<std::size_t>(seconds * 1000), 0.0f);
    for (double c : centers) {
        for (std::size_t i = 0; i < w.samples.size(); ++i) {
            const double t = static_cast<double>(i) / 1000 - c;
            if (std::abs(t) < 0.12) {
                w.samples[i] += static_cast<float>(0.8 * std::exp(-0.5 * t * t / 4e-4) * std::sin(2 * std::numbers::pi * 50 * t));
            }
        }
    }
    return w;
}

/// ECG at 300 Hz with Gaussian R waves at 1 Hz.
Waveform ecg_beats(double seconds, bool flat = false) {
    Waveform w;
    w.fs = 300;
    w.samples.assign(static_cast<std::size_t>(seconds * 300), 0.0f);
    if (flat) return w;
    for (double r = 0.4; r < seconds; r += 1.0) {
        for (std::size_t i = 0; i < w.samples.size(); ++i) {
            const double t = static_cast<double>(i) / 300 - r;
            w.samples[i] += static_cast<float>(std::exp(-0.5 * t * t / 1e-4) + 0.3 * std::exp(-0.5 * (t - 0.25) * (t - 0.25) / 0.0016));
        }
    }
    return w;
}

struct Corpus {
    std::vector<RecordDescriptor> manifest;
};

RecordDescriptor write_record(const std::filesystem::path& dir, const std::string& id, Label label, const Waveform* pcg,
                              const Waveform* ecg) {
    RecordDescriptor d;
    d.record_id = id;
    d.label = label;
    if (pcg) {
        d.pcg_path = dir / (id + ".wav");
        signal_io::write_wav_pcm16(*d.pcg_path, *pcg);
        d.fs_pcg = pcg->fs;
    }
    if (ecg) {
        d.ecg_path = dir / (id + ".csv");
        signal_io::write_csv_signal(*d.ecg_path, *ecg);
        d.fs_ecg = ecg->fs;
    }
    return d;
}

BuildConfig config_for(const std::filesystem::path& out) {
    BuildConfig c;
    c.out_dir = out;
    c.seed = 99;
    return c;
}

} // namespace

TEST_CASE("split_counts") {
    const auto a = split_counts(10, {});
    CHECK(a.train == 7);
    CHECK(a.val == 1);
    CHECK(a.test == 2);
    const auto b = split_counts(407, {});
    CHECK(b.train == 285);
    CHECK(b.val == 40);
    CHECK(b.test == 82);
    CHECK_THROWS_AS(split_counts(10, {0.5, 0.5, 0.5}), ConfigError);
}

TEST_CASE("split_by_record") {
    SUBCASE("10 balanced records") {
        const auto s = split_by_record(records(5, 5), {}, 1);
        CHECK(s.count(Split::Train) == 7);
        CHECK(s.count(Split::Val) == 1);
        CHECK(s.count(Split::Test) == 2);
    }
    SUBCASE("determinism and seed dependence") {
        const auto r = records(117, 290);
        const auto a = split_by_record(r, {}, 42), b = split_by_record(r, {}, 42), c = split_by_record(r, {}, 43);
        CHECK(a.splits == b.splits);
        CHECK(a.splits != c.splits);
    }
    SUBCASE("407 records, stratified") {
        const auto r = records(117, 290);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto s = split_by_record(r, {}, seed);
            CHECK(s.splits.size() == 407);
            CHECK(s.count(Split::Train) == 285);
            CHECK(s.count(Split::Val) == 40);
            CHECK(s.count(Split::Test) == 82);
            std::map<Split, std::size_t> normal;
            for (const auto& x : r) {
                if (x.label == Label::Normal) ++normal[s.of(x.record_id)];
            }
            // per-class shares within one record of the ideal
            CHECK(std::abs(static_cast<double>(normal[Split::Train]) - 117.0 * 285 / 407) <= 1.0);
            CHECK(std::abs(static_cast<double>(normal[Split::Val]) - 117.0 * 40 / 407) <= 1.0);
            CHECK(std::abs(static_cast<double>(normal[Split::Test]) - 117.0 * 82 / 407) <= 1.0);
            CHECK(s.warnings.empty());
        }
    }
    SUBCASE("impossible stratification warns") {
        const auto s = split_by_record(records(1, 9), {}, 3);
        CHECK_FALSE(s.warnings.empty());
        CHECK(s.splits.size() == 10);
    }
    SUBCASE("errors") {
        auto r = records(3, 3);
        r.push_back(r[0]);
        CHECK_THROWS_WITH_AS(split_by_record(r, {}, 0), doctest::Contains("duplicate"), DataError);
        CHECK_THROWS_AS(split_by_record({{"x", Label::Unlabeled}, {"y", Label::Normal}, {"z", Label::Abnormal}}, {}, 0),
                        DataError);
    }
    SUBCASE("json round trip") {
        const auto s = split_by_record(records(6, 8), {}, 5);
        const auto back = split_from_json(to_json(s));
        CHECK(back.splits == s.splits);
        CHECK(back.seed == 5);
        CHECK_THROWS_AS(back.of("nope"), DataError);
    }
}

TEST_CASE("balance") {
    SUBCASE("already balanced keeps the multiset") {
        const auto e = entries(20, 20);
        CHECK(ids(balance(e, 1)) == ids(e));
    }
    SUBCASE("290 abnormal / 117 normal") {
        const auto e = entries(117, 290);
        const auto b = balance(e, 7);
        CHECK(count_label(b, Label::Normal) == 117);
        CHECK(count_label(b, Label::Abnormal) == 117);
        const auto all = ids(e);
        for (const auto& x : b) CHECK(all.count(x.sample_id) == 1);
        CHECK(ids(balance(e, 7)) == ids(b));
        std::vector<std::string> order_a, order_b;
        for (const auto& x : b) order_a.push_back(x.sample_id);
        for (const auto& x : balance(e, 7)) order_b.push_back(x.sample_id);
        CHECK(order_a == order_b);
    }
    SUBCASE("empty class") {
        CHECK_THROWS_AS(balance(entries(0, 5), 1), DataError);
        CHECK_THROWS_AS(balance_records(entries(4, 0), 1), DataError);
    }
    SUBCASE("record-level balance keeps whole records") {
        auto e = entries(10, 25, 3);
        e.resize(e.size() - 1); // one record with two samples
        const auto b = balance_records(e, 3);
        std::map<std::string, std::size_t> per_record, original;
        std::set<std::string> normal_recs, abnormal_recs;
        for (const auto& x : e) ++original[x.record_id];
        for (const auto& x : b) {
            ++per_record[x.record_id];
            (x.label == Label::Normal ? normal_recs : abnormal_recs).insert(x.record_id);
        }
        CHECK(normal_recs.size() == 10);
        CHECK(abnormal_recs.size() == 10);
        for (const auto& [rec, n] : per_record) CHECK(n == original[rec]);
    }
}

TEST_CASE("select and samples.csv") {
    auto e = entries(3, 3);
    e[0].split = Split::Val;
    e[1].split = Split::Test;
    e[2].ecg_sgm = "sgm/x_ecg.sgm";
    CHECK(select(e, Split::Val).size() == 1);
    CHECK(select(e, Split::Train).size() == 4);
    const auto text = samples_csv(e);
    CHECK(text.rfind("sample_id,record_id,label,split,pcg_sgm,ecg_sgm\n", 0) == 0);
    const auto back = parse_samples_csv(text);
    REQUIRE(back.size() == e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        CHECK(back[i].sample_id == e[i].sample_id);
        CHECK(back[i].label == e[i].label);
        CHECK(back[i].split == e[i].split);
        CHECK(back[i].ecg_sgm == e[i].ecg_sgm);
    }
    CHECK(samples_csv(back) == text);
}

TEST_CASE("batches") {
    std::vector<LoadedSample> s(45);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i].sample_id = "s" + std::to_string(i);
        s[i].label = static_cast<int>(i % 2);
        s[i].rows = 2;
        s[i].cols = 3;
        s[i].pcg.assign(6, static_cast<float>(i));
    }
    const auto b = batches(s, 20, 5, 0);
    REQUIRE(b.size() == 3);
    CHECK(b[0].pcg.shape() == nn::Shape{20, 1, 2, 3});
    CHECK(b[2].pcg.dim(0) == 5);
    CHECK(b[0].ecg.empty());
    std::set<std::size_t> seen;
    for (const auto& batch : b) {
        for (std::size_t k = 0; k < batch.indices.size(); ++k) {
            const auto idx = batch.indices[k];
            seen.insert(idx);
            CHECK(batch.pcg[k * 6] == static_cast<float>(idx));
            const bool abnormal = s[idx].label == 1;
            CHECK(batch.labels[k * 2] == (abnormal ? 0.0f : 1.0f));
            CHECK(batch.labels[k * 2 + 1] == (abnormal ? 1.0f : 0.0f));
        }
    }
    CHECK(seen.size() == 45);
    CHECK(batch_order(45, 20, 5, 0) == batch_order(45, 20, 5, 0));
    CHECK(batch_order(45, 20, 5, 0) != batch_order(45, 20, 5, 1));
    CHECK_THROWS_AS(batch_order(4, 0, 1, 0), ConfigError);
}

TEST_CASE("build_setting3: two records, one peak each") {
    TempDir dir("cf-ds3");
    std::vector<RecordDescriptor> m;
    const auto p1 = pcg_bursts(5, {1.0}), p2 = pcg_bursts(5, {0.6});
    const auto e = ecg_beats(5);
    m.push_back(write_record(dir.path(), "a", Label::Normal, &p1, &e));
    m.push_back(write_record(dir.path(), "b", Label::Abnormal, &p2, &e));
    const auto idx = build_setting3(m, config_for(dir / "out"));
    REQUIRE(idx.samples.size() == 2);
    std::size_t sgm_files = 0;
    for (const auto& f : std::filesystem::directory_iterator(dir / "out/sgm")) sgm_files += f.path().extension() == ".sgm";
    CHECK(sgm_files == 4);
    for (const auto& s : idx.samples) {
        CHECK(s.has_pcg());
        CHECK(s.has_ecg());
        const auto pcg = dsp::read_sgm(dir / "out" / s.pcg_sgm);
        CHECK(pcg.rows == 64);
        CHECK(pcg.cols == 128);
        CHECK(pcg.meta.modality == "pcg");
        CHECK(idx.split.of(s.record_id) == s.split);
    }
    CHECK_FALSE(idx.cache_hit);

    const auto csv = cftest::read_bytes(dir / "out/samples.csv");
    const auto again = build_setting3(m, config_for(dir / "out"));
    CHECK(again.cache_hit);
    CHECK(cftest::read_bytes(dir / "out/samples.csv") == csv);

    // forced rebuild in a fresh directory is byte-identical
    build_setting3(m, config_for(dir / "out2"));
    CHECK(cftest::read_bytes(dir / "out2/samples.csv") == csv);
    CHECK(cftest::read_bytes(dir / "out2" / idx.samples[0].ecg_sgm) == cftest::read_bytes(dir / "out" / idx.samples[0].ecg_sgm));

    const auto loaded = load_dataset(dir / "out");
    CHECK(loaded.setting == 3);
    CHECK(loaded.samples.size() == 2);
    const auto ls = load_samples(loaded.root, loaded.samples);
    CHECK(ls[0].pcg.size() == 64 * 128);
    CHECK(ls[0].ecg.size() == 64 * 128);
    const std::size_t both[] = {0, 1};
    const auto batch = make_batch(ls, both);
    CHECK(batch.ecg.shape() == nn::Shape{2, 1, 64, 128});
}

TEST_CASE("build_setting3: missing ECG names the record") {
    TempDir dir("cf-ds3e");
    const auto p = pcg_bursts(5, {1.0});
    const auto e = ecg_beats(5);
    std::vector<RecordDescriptor> m{write_record(dir.path(), "ok1", Label::Normal, &p, &e),
                                    write_record(dir.path(), "ok2", Label::Normal, &p, &e),
                                    write_record(dir.path(), "lonely", Label::Abnormal, &p, nullptr)};
    CHECK_THROWS_WITH_AS(build_setting3(m, config_for(dir / "out")), doctest::Contains("lonely"), DataError);
}

TEST_CASE("build_setting1 and build_setting2") {
    TempDir dir("cf-ds12");
    std::vector<double> every_second;
    for (int k = 0; k < 10; ++k) every_second.push_back(0.5 + k);
    const auto p_regular = pcg_bursts(10, every_second);
    const auto p_silent = pcg_bursts(10, {});
    const auto e = ecg_beats(10), e_flat = ecg_beats(10, true);
    std::vector<RecordDescriptor> m{write_record(dir.path(), "reg", Label::Normal, &p_regular, &e),
                                    write_record(dir.path(), "quiet", Label::Abnormal, &p_silent, &e_flat),
                                    write_record(dir.path(), "reg2", Label::Abnormal, &p_regular, &e)};

    const auto s1 = build_setting1(m, config_for(dir / "s1"));
    std::map<std::string, std::size_t> per_record;
    for (const auto& x : s1.samples) {
        ++per_record[x.record_id];
        CHECK(x.has_pcg());
        CHECK_FALSE(x.has_ecg());
    }
    CHECK(per_record["reg"] == 2);
    CHECK(per_record["reg"] <= static_cast<std::size_t>(std::floor(10 / 3.5)) + 1);
    CHECK(per_record.count("quiet") == 0);
    CHECK(std::any_of(s1.log.begin(), s1.log.end(), [](const std::string& l) { return l.find("quiet") != std::string::npos; }));

    const auto s2 = build_setting2(m, config_for(dir / "s2"));
    per_record.clear();
    for (const auto& x : s2.samples) {
        ++per_record[x.record_id];
        CHECK(x.has_ecg());
        CHECK_FALSE(x.has_pcg());
    }
    CHECK(per_record["reg"] == 1);
    CHECK(per_record["reg2"] == 1);
    CHECK(per_record.count("quiet") == 0);
    CHECK(std::any_of(s2.log.begin(), s2.log.end(), [](const std::string& l) { return l.find("quiet") != std::string::npos; }));
}

TEST_CASE("load_dataset without a build") {
    TempDir dir("cf-empty");
    CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
}
