#pragma once

#include "cardiofuse/dsp.hpp"
#include "cardiofuse/nn/tensor.hpp"
#include "cardiofuse/signal_io.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cardiofuse::dataset {

enum class Split : std::uint8_t { Train, Val, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

/// One windowed sample. Scalogram refs are paths relative to the dataset
/// root; an empty string means the modality is absent.
struct SampleEntry {
    std::string sample_id;
    std::string record_id;
    Label label = Label::Normal;
    std::string pcg_sgm;
    std::string ecg_sgm;
    Split split = Split::Train;

    bool has_pcg() const { return !pcg_sgm.empty(); }
    bool has_ecg() const { return !ecg_sgm.empty(); }
    int label_index() const { return label == Label::Abnormal ? 1 : 0; }
};

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct RecordLabel {
    std::string record_id;
    Label label = Label::Normal;
};

struct SplitAssignment {
    std::map<std::string, Split> splits;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    Split of(const std::string& record_id) const;
    std::size_t count(Split s) const;
};

/// Per-split record totals for n records: train = round(0.7 n),
/// val = floor(0.1 n), test = the rest (generalized to any ratios).
struct SplitCounts {
    std::size_t train = 0, val = 0, test = 0;
};
SplitCounts split_counts(std::size_t n, const SplitRatios& ratios);

/// Stratified by label: each class is shuffled (records first sorted by id)
/// and cut into contiguous train/val/test runs whose sizes add up to the
/// split_counts totals.
SplitAssignment split_by_record(const std::vector<RecordLabel>& records,
                                const SplitRatios& ratios, std::uint64_t seed);

nlohmann::json to_json(const SplitAssignment& a);
SplitAssignment split_from_json(const nlohmann::json& j);

/// Undersamples the majority class to the minority count, then shuffles.
std::vector<SampleEntry> balance(const std::vector<SampleEntry>& entries, std::uint64_t seed);

/// Same, with whole records as the unit: every sample of a kept record stays.
std::vector<SampleEntry> balance_records(const std::vector<SampleEntry>& entries,
                                         std::uint64_t seed);

std::vector<SampleEntry> select(const std::vector<SampleEntry>& entries, Split split);

struct ScalogramConfig {
    std::size_t rows = 64;
    std::size_t cols = 128;
    std::size_t n_scales = 96;
    double pcg_scale_min = 7.0;
    double pcg_scale_max = 130.0;
    double ecg_scale_min = 20.0;
    double ecg_scale_max = 500.0;
    dsp::WaveletSpec pcg_wavelet = dsp::WaveletSpec::morlet();
    dsp::WaveletSpec ecg_wavelet = dsp::WaveletSpec::complex_morlet(1.5, 1.0);
};

struct BuildConfig {
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    int fs_pcg = 1000;
    int fs_ecg = 300;
    double pcg_window = 3.5;
    double ecg_window = 3.3;
    SplitRatios ratios;
    ScalogramConfig scalogram;
};

nlohmann::json to_json(const BuildConfig& c);

struct DatasetIndex {
    std::filesystem::path root;
    int setting = 0;
    std::vector<SampleEntry> samples;
    SplitAssignment split;
    std::vector<std::string> log;
    bool cache_hit = false;
};

/// PCG only: 3.5 s non-overlapping windows starting at heart-sound peaks.
DatasetIndex build_setting1(const std::vector<RecordDescriptor>& manifest, const BuildConfig& cfg);
/// ECG only: one 3.3 s window centered on the median R peak.
DatasetIndex build_setting2(const std::vector<RecordDescriptor>& manifest, const BuildConfig& cfg);
/// Simultaneous PCG + ECG windows aligned in time.
DatasetIndex build_setting3(const std::vector<RecordDescriptor>& manifest, const BuildConfig& cfg);
DatasetIndex build_setting(int setting, const std::vector<RecordDescriptor>& manifest,
                           const BuildConfig& cfg);

/// Reads samples.csv, split.json and the setting from a built dataset directory.
DatasetIndex load_dataset(const std::filesystem::path& root);

/// Header: sample_id,record_id,label,split,pcg_sgm,ecg_sgm
std::string samples_csv(const std::vector<SampleEntry>& entries);
std::vector<SampleEntry> parse_samples_csv(std::string_view text);

/// Scalogram payloads of one sample, decoded and ready for the network.
struct LoadedSample {
    std::string sample_id;
    std::string record_id;
    int label = 0;
    std::vector<float> pcg; ///< rows*cols, empty when absent
    std::vector<float> ecg;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

std::vector<LoadedSample> load_samples(const std::filesystem::path& root,
                                       const std::vector<SampleEntry>& entries);

struct Batch {
    nn::Tensor pcg;    ///< (B, 1, rows, cols) or empty
    nn::Tensor ecg;    ///< (B, 1, rows, cols) or empty
    nn::Tensor labels; ///< (B, 2) one-hot, Abnormal = [0, 1]
    std::vector<std::size_t> indices;
};

/// Stacks the given samples. Modalities absent from the first sample are skipped.
Batch make_batch(const std::vector<LoadedSample>& samples, std::span<const std::size_t> indices);

/// Order for one epoch: a shuffle keyed by (seed, epoch), cut into
/// batch_size chunks with the remainder last.
std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size,
                                                  std::uint64_t seed, std::uint64_t epoch);

std::vector<Batch> batches(const std::vector<LoadedSample>& samples, std::size_t batch_size,
                           std::uint64_t seed, std::uint64_t epoch);

} // namespace cardiofuse::dataset
