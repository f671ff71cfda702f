#include "cardiofuse/dataset.hpp"

#include "cardiofuse/error.hpp"
#include "cardiofuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cardiofuse::dataset {
namespace {

constexpr std::size_t kSplits = 3;

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

void check_csv_field(const std::string& s, const char* what) {
    if (s.find_first_of(",\r\n") != std::string::npos) {
        throw DataError(std::string(what) + " '" + s + "' cannot contain commas or newlines");
    }
}

} // namespace

std::string_view to_string(Split s) {
    switch (s) {
    case Split::Train:
        return "train";
    case Split::Val:
        return "val";
    case Split::Test:
        return "test";
    }
    return "train";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw DataError("unknown split '" + std::string(s) + "'");
}

Split SplitAssignment::of(const std::string& record_id) const {
    const auto it = splits.find(record_id);
    if (it == splits.end()) throw DataError("record '" + record_id + "' has no split assignment");
    return it->second;
}

std::size_t SplitAssignment::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(splits.begin(), splits.end(), [&](const auto& kv) { return kv.second == s; }));
}

SplitCounts split_counts(std::size_t n, const SplitRatios& r) {
    if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-6) {
        throw ConfigError("split ratios must be non-negative and sum to 1");
    }
    const double nd = static_cast<double>(n);
    SplitCounts c;
    c.train = std::min(n, static_cast<std::size_t>(std::llround(r.train * nd)));
    c.val = std::min(n - c.train, static_cast<std::size_t>(std::floor(r.val * nd + 1e-9)));
    c.test = n - c.train - c.val;
    return c;
}

SplitAssignment split_by_record(const std::vector<RecordLabel>& records, const SplitRatios& ratios,
                                std::uint64_t seed) {
    if (records.empty()) throw DataError("split_by_record: no records");
    std::set<std::string> seen;
    std::vector<std::vector<std::string>> by_class(2);
    for (const auto& r : records) {
        if (r.label == Label::Unlabeled) {
            throw DataError("record '" + r.record_id + "' is unlabeled and cannot be split");
        }
        if (!seen.insert(r.record_id).second) {
            throw DataError("duplicate record_id '" + r.record_id + "'");
        }
        by_class[r.label == Label::Abnormal ? 1 : 0].push_back(r.record_id);
    }
    const auto totals = split_counts(records.size(), ratios);
    const std::size_t want[kSplits] = {totals.train, totals.val, totals.test};
    const double n = static_cast<double>(records.size());

    // Matrix rounding: floor every class x split share, then hand out the
    // missing units by largest fractional part while row and column deficits remain.
    std::size_t alloc[2][kSplits] = {};
    struct Frac {
        double frac;
        std::size_t c, s;
    };
    std::vector<Frac> fracs;
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t s = 0; s < kSplits; ++s) {
            const double ideal = static_cast<double>(by_class[c].size()) * static_cast<double>(want[s]) / n;
            alloc[c][s] = static_cast<std::size_t>(std::floor(ideal + 1e-9));
            fracs.push_back({ideal - std::floor(ideal + 1e-9), c, s});
        }
    }
    std::stable_sort(fracs.begin(), fracs.end(), [](const Frac& a, const Frac& b) { return a.frac > b.frac; });
    auto row_deficit = [&](std::size_t c) {
        std::size_t sum = 0;
        for (std::size_t s = 0; s < kSplits; ++s) sum += alloc[c][s];
        return by_class[c].size() - sum;
    };
    auto col_deficit = [&](std::size_t s) { return want[s] - alloc[0][s] - alloc[1][s]; };
    for (const auto& f : fracs) {
        if (row_deficit(f.c) > 0 && col_deficit(f.s) > 0) ++alloc[f.c][f.s];
    }
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t s = 0; s < kSplits; ++s) {
            while (row_deficit(c) > 0 && col_deficit(s) > 0) ++alloc[c][s];
        }
    }

    SplitAssignment out;
    out.seed = seed;
    if (records.size() < 3) {
        out.warnings.push_back("only " + std::to_string(records.size()) +
                               " records; at least one split is empty");
    }
    for (std::size_t c = 0; c < 2; ++c) {
        auto ids = by_class[c];
        std::sort(ids.begin(), ids.end());
        Rng rng(seed, c == 0 ? "split.normal" : "split.abnormal");
        shuffle(std::span<std::string>(ids), rng);
        std::size_t at = 0;
        for (std::size_t s = 0; s < kSplits; ++s) {
            for (std::size_t k = 0; k < alloc[c][s]; ++k) out.splits[ids[at++]] = static_cast<Split>(s);
            if (alloc[c][s] == 0 && want[s] > 0) {
                out.warnings.push_back(std::string("split '") + std::string(to_string(static_cast<Split>(s))) +
                                       "' has no " + (c == 0 ? "normal" : "abnormal") + " records");
            }
        }
    }
    return out;
}

nlohmann::json to_json(const SplitAssignment& a) {
    nlohmann::json records = nlohmann::json::object();
    for (const auto& [id, s] : a.splits) records[id] = std::string(to_string(s));
    return {{"seed", a.seed},
            {"counts",
             {{"train", a.count(Split::Train)}, {"val", a.count(Split::Val)}, {"test", a.count(Split::Test)}}},
            {"warnings", a.warnings},
            {"records", records}};
}

SplitAssignment split_from_json(const nlohmann::json& j) {
    try {
        SplitAssignment a;
        a.seed = j.at("seed").get<std::uint64_t>();
        a.warnings = j.value("warnings", std::vector<std::string>{});
        for (const auto& [id, s] : j.at("records").items()) a.splits[id] = parse_split(s.get<std::string>());
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("split.json: ") + e.what());
    }
}

std::vector<SampleEntry> balance(const std::vector<SampleEntry>& entries, std::uint64_t seed) {
    std::vector<std::size_t> cls[2];
    for (std::size_t i = 0; i < entries.size(); ++i) cls[entries[i].label_index()].push_back(i);
    if (cls[0].empty() || cls[1].empty()) {
        throw DataError("balance: both classes must be non-empty (normal " + std::to_string(cls[0].size()) +
                        ", abnormal " + std::to_string(cls[1].size()) + ")");
    }
    const std::size_t major = cls[1].size() > cls[0].size() ? 1 : 0;
    const std::size_t keep = cls[1 - major].size();
    Rng pick(seed, "balance.undersample");
    shuffle(std::span<std::size_t>(cls[major]), pick);
    cls[major].resize(keep);
    std::vector<std::size_t> chosen = cls[0];
    chosen.insert(chosen.end(), cls[1].begin(), cls[1].end());
    std::sort(chosen.begin(), chosen.end());
    Rng order(seed, "balance.order");
    shuffle(std::span<std::size_t>(chosen), order);
    std::vector<SampleEntry> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(entries[i]);
    return out;
}

std::vector<SampleEntry> balance_records(const std::vector<SampleEntry>& entries, std::uint64_t seed) {
    std::vector<SampleEntry> records;
    std::unordered_map<std::string, std::size_t> first;
    for (const auto& e : entries) {
        if (first.try_emplace(e.record_id, records.size()).second) records.push_back(e);
    }
    const auto kept = balance(records, seed);
    std::set<std::string> keep_ids;
    for (const auto& r : kept) keep_ids.insert(r.record_id);
    std::vector<SampleEntry> out;
    for (const auto& e : entries) {
        if (keep_ids.count(e.record_id)) out.push_back(e);
    }
    return out;
}

std::vector<SampleEntry> select(const std::vector<SampleEntry>& entries, Split split) {
    std::vector<SampleEntry> out;
    for (const auto& e : entries) {
        if (e.split == split) out.push_back(e);
    }
    return out;
}

std::string samples_csv(const std::vector<SampleEntry>& entries) {
    std::string out = "sample_id,record_id,label,split,pcg_sgm,ecg_sgm\n";
    for (const auto& e : entries) {
        check_csv_field(e.sample_id, "sample_id");
        check_csv_field(e.record_id, "record_id");
        check_csv_field(e.pcg_sgm, "pcg_sgm");
        check_csv_field(e.ecg_sgm, "ecg_sgm");
        out += e.sample_id + ',' + e.record_id + ',' + std::to_string(e.label_index()) + ',' +
               std::string(to_string(e.split)) + ',' + e.pcg_sgm + ',' + e.ecg_sgm + '\n';
    }
    return out;
}

std::vector<SampleEntry> parse_samples_csv(std::string_view text) {
    std::vector<SampleEntry> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != "sample_id,record_id,label,split,pcg_sgm,ecg_sgm") {
                throw FormatError("samples.csv: unexpected header '" + std::string(line) + "'");
            }
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 6) {
            throw FormatError("samples.csv line " + std::to_string(line_no) + ": expected 6 fields");
        }
        SampleEntry e;
        e.sample_id = f[0];
        e.record_id = f[1];
        if (f[2] == "0" || f[2] == "1") {
            e.label = f[2] == "1" ? Label::Abnormal : Label::Normal;
        } else {
            const auto l = parse_label(f[2]);
            if (!l || *l == Label::Unlabeled) {
                throw FormatError("samples.csv line " + std::to_string(line_no) + ": bad label");
            }
            e.label = *l;
        }
        e.split = parse_split(f[3]);
        e.pcg_sgm = f[4];
        e.ecg_sgm = f[5];
        if (!e.has_pcg() && !e.has_ecg()) {
            throw FormatError("samples.csv line " + std::to_string(line_no) + ": no scalogram reference");
        }
        out.push_back(std::move(e));
    }
    if (line_no == 0) throw FormatError("samples.csv: empty file");
    return out;
}

std::vector<LoadedSample> load_samples(const std::filesystem::path& root,
                                       const std::vector<SampleEntry>& entries) {
    std::vector<LoadedSample> out(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        auto& s = out[i];
        s.sample_id = e.sample_id;
        s.record_id = e.record_id;
        s.label = e.label_index();
        auto load = [&](const std::string& ref, std::vector<float>& dst) {
            if (ref.empty()) return;
            auto sg = dsp::read_sgm(root / ref);
            if (s.rows == 0) {
                s.rows = sg.rows;
                s.cols = sg.cols;
            } else if (s.rows != sg.rows || s.cols != sg.cols) {
                throw DataError("sample '" + e.sample_id + "': PCG and ECG scalograms differ in size");
            }
            dst = std::move(sg.data);
        };
        load(e.pcg_sgm, s.pcg);
        load(e.ecg_sgm, s.ecg);
    }
    return out;
}

Batch make_batch(const std::vector<LoadedSample>& samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw DataError("make_batch: no samples");
    const auto& first = samples.at(indices[0]);
    const std::size_t b = indices.size(), hw = first.rows * first.cols;
    Batch out;
    out.indices.assign(indices.begin(), indices.end());
    out.labels = nn::Tensor({b, 2});
    if (!first.pcg.empty()) out.pcg = nn::Tensor({b, 1, first.rows, first.cols});
    if (!first.ecg.empty()) out.ecg = nn::Tensor({b, 1, first.rows, first.cols});
    for (std::size_t k = 0; k < b; ++k) {
        const auto& s = samples.at(indices[k]);
        out.labels[k * 2 + static_cast<std::size_t>(s.label)] = 1.0f;
        auto put = [&](nn::Tensor& t, const std::vector<float>& src) {
            if (t.empty()) return;
            if (src.size() != hw) {
                throw DataError("make_batch: sample '" + s.sample_id + "' has a missing or mis-sized scalogram");
            }
            std::copy(src.begin(), src.end(), t.data() + k * hw);
        };
        put(out.pcg, s.pcg);
        put(out.ecg, s.ecg);
    }
    return out;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng = Rng(seed, "batches").split(epoch);
    shuffle(std::span<std::size_t>(idx), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t at = 0; at < n; at += batch_size) {
        out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(at),
                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, at + batch_size)));
    }
    return out;
}

std::vector<Batch> batches(const std::vector<LoadedSample>& samples, std::size_t batch_size,
                           std::uint64_t seed, std::uint64_t epoch) {
    std::vector<Batch> out;
    for (const auto& chunk : batch_order(samples.size(), batch_size, seed, epoch)) {
        out.push_back(make_batch(samples, chunk));
    }
    return out;
}

} // namespace cardiofuse::dataset
