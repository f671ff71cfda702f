#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cardiofuse {

enum class Label : std::uint8_t { Normal = 0, Abnormal = 1, Unlabeled = 2 };

std::string_view to_string(Label label);
/// Case-insensitive parse of normal/abnormal/unlabeled.
std::optional<Label> parse_label(std::string_view token);

enum class Modality : std::uint8_t { Pcg, Ecg };

std::string_view to_string(Modality m);

/// Single-channel signal. Amplitudes are dimensionless, nominally in [-1, 1].
struct Waveform {
    std::vector<float> samples;
    int fs = 0;

    double duration() const { return fs > 0 ? static_cast<double>(samples.size()) / fs : 0.0; }
};

struct WaveformRecord {
    std::string record_id;
    Label label = Label::Unlabeled;
    std::optional<Waveform> pcg;
    std::optional<Waveform> ecg;
    std::string source;
};

/// One manifest row; paths are resolved against the manifest's directory.
struct RecordDescriptor {
    std::string record_id;
    Label label = Label::Unlabeled;
    std::optional<std::filesystem::path> pcg_path;
    std::optional<std::filesystem::path> ecg_path;
    int fs_pcg = 0;
    int fs_ecg = 0;
};

namespace signal_io {

/// Reads a RIFF/WAVE PCM16 mono file. Samples are scaled by 1/32768.
Waveform read_wav_pcm16(const std::filesystem::path& path);
Waveform parse_wav_pcm16(std::span<const std::uint8_t> bytes);

/// Writes PCM16 mono; samples are clamped to [-1, 32767/32768] and rounded.
void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w);
std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w);

/// One decimal value per line (LF or CRLF); blank trailing lines ignored.
Waveform read_csv_signal(const std::filesystem::path& path, int fs);
Waveform parse_csv_signal(std::string_view text, int fs);

/// Shortest round-trip float formatting, one value per line.
void write_csv_signal(const std::filesystem::path& path, const Waveform& w);

/// Header: record_id,label,pcg_path,ecg_path,fs_pcg,fs_ecg
std::vector<RecordDescriptor> read_manifest(const std::filesystem::path& path);
std::vector<RecordDescriptor> parse_manifest(std::string_view text,
                                             const std::filesystem::path& base_dir = {});

/// Loads the modalities a descriptor names.
WaveformRecord load_record(const RecordDescriptor& d, std::string source = {});

/// Polyphase windowed-sinc rate conversion (Kaiser beta 8.6, 64 taps per
/// phase at the coarser of the two rates). Edges are mirror-extended so DC is
/// preserved up to the boundary.
Waveform resample(const Waveform& w, int target_fs);

void validate(const Waveform& w);

} // namespace signal_io
} // namespace cardiofuse
