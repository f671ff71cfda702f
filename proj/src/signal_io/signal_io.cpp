#include "cardiofuse/signal_io.hpp"

#include "cardiofuse/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

namespace cardiofuse {

std::string_view to_string(Label label) {
    switch (label) {
    case Label::Normal:
        return "normal";
    case Label::Abnormal:
        return "abnormal";
    case Label::Unlabeled:
        return "unlabeled";
    }
    return "unlabeled";
}

std::optional<Label> parse_label(std::string_view token) {
    std::string lower(token);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "normal") return Label::Normal;
    if (lower == "abnormal") return Label::Abnormal;
    if (lower == "unlabeled") return Label::Unlabeled;
    return std::nullopt;
}

std::string_view to_string(Modality m) { return m == Modality::Pcg ? "pcg" : "ecg"; }

namespace signal_io {
namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint32_t le_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) |
           (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t le_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto c = line.find(',', pos);
        if (c == std::string_view::npos) {
            out.push_back(trim(line.substr(pos)));
            return out;
        }
        out.push_back(trim(line.substr(pos, c - pos)));
        pos = c + 1;
    }
}

int parse_rate(std::string_view field, std::size_t line_no, const char* name) {
    if (field.empty()) return 0;
    int v = 0;
    const auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || p != field.data() + field.size() || v <= 0) {
        throw DataError("manifest line " + std::to_string(line_no) + ": bad " + name + " '" +
                        std::string(field) + "'");
    }
    return v;
}

} // namespace

void validate(const Waveform& w) {
    if (w.fs <= 0) throw DataError("waveform sampling rate must be positive");
    if (w.samples.empty()) throw DataError("empty signal");
    for (float v : w.samples) {
        if (!std::isfinite(v)) throw DataError("waveform contains non-finite samples");
    }
}

Waveform parse_wav_pcm16(std::span<const std::uint8_t> b) {
    if (b.size() < 12 || std::string_view(reinterpret_cast<const char*>(b.data()), 4) != "RIFF") {
        throw FormatError("wav: missing RIFF chunk id");
    }
    if (std::string_view(reinterpret_cast<const char*>(b.data() + 8), 4) != "WAVE") {
        throw FormatError("wav: RIFF form type is not WAVE");
    }
    std::size_t pos = 12;
    bool have_fmt = false;
    int fs = 0;
    Waveform w;
    while (pos + 8 <= b.size()) {
        const std::string_view id(reinterpret_cast<const char*>(b.data() + pos), 4);
        const std::uint32_t size = le_u32(b, pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > b.size() && id != "data") {
            throw FormatError("wav: chunk '" + std::string(id) + "' is truncated");
        }
        if (id == "fmt ") {
            if (size < 16) throw FormatError("wav: fmt chunk too short");
            const auto format = le_u16(b, body);
            const auto channels = le_u16(b, body + 2);
            const auto rate = le_u32(b, body + 4);
            const auto bits = le_u16(b, body + 14);
            if (format != 1) {
                throw FormatError("wav: audio_format " + std::to_string(format) +
                                  " unsupported (PCM=1 required)");
            }
            if (channels != 1) {
                throw FormatError("wav: num_channels " + std::to_string(channels) +
                                  " unsupported (mono required)");
            }
            if (bits != 16) {
                throw FormatError("wav: bits_per_sample " + std::to_string(bits) +
                                  " unsupported (16 required)");
            }
            if (rate == 0) throw FormatError("wav: sample_rate is zero");
            fs = static_cast<int>(rate);
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw FormatError("wav: data chunk precedes fmt chunk");
            const std::size_t avail = std::min<std::size_t>(size, b.size() - body);
            if (avail % 2 != 0) throw FormatError("wav: data chunk has odd byte count");
            w.samples.resize(avail / 2);
            for (std::size_t i = 0; i < w.samples.size(); ++i) {
                const auto raw = static_cast<std::int16_t>(le_u16(b, body + 2 * i));
                w.samples[i] = static_cast<float>(raw) / 32768.0f;
            }
            w.fs = fs;
            return w;
        }
        pos = body + size + (size & 1u);
    }
    throw FormatError(have_fmt ? "wav: missing data chunk" : "wav: missing fmt chunk");
}

Waveform read_wav_pcm16(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    try {
        return parse_wav_pcm16(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& w) {
    const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(w.fs));
    put_u32(out, static_cast<std::uint32_t>(w.fs) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, data_bytes);
    for (float v : w.samples) {
        const double scaled = std::nearbyint(static_cast<double>(v) * 32768.0);
        const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
    }
    return out;
}

void write_wav_pcm16(const std::filesystem::path& path, const Waveform& w) {
    const auto bytes = encode_wav_pcm16(w);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

Waveform parse_csv_signal(std::string_view text, int fs) {
    if (fs <= 0) throw ConfigError("csv signal: sampling rate must be positive");
    const auto lines = split_lines(text);
    if (lines.empty()) throw DataError("empty signal");
    Waveform w;
    w.fs = fs;
    w.samples.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto field = trim(lines[i]);
        float v = 0.0f;
        const auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (field.empty() || ec != std::errc() || p != field.data() + field.size() ||
            !std::isfinite(v)) {
            throw DataError("csv signal line " + std::to_string(i + 1) + ": not a number '" +
                            std::string(field) + "'");
        }
        w.samples.push_back(v);
    }
    return w;
}

Waveform read_csv_signal(const std::filesystem::path& path, int fs) {
    try {
        return parse_csv_signal(read_text(path), fs);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_csv_signal(const std::filesystem::path& path, const Waveform& w) {
    std::string text;
    text.reserve(w.samples.size() * 12);
    char buf[32];
    for (float v : w.samples) {
        const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        text.append(buf, p);
        text.push_back('\n');
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::vector<RecordDescriptor> parse_manifest(std::string_view text,
                                             const std::filesystem::path& base_dir) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw DataError("manifest is empty");
    const auto header = split_fields(lines[0]);
    const std::vector<std::string_view> expected = {"record_id", "label",  "pcg_path",
                                                    "ecg_path",  "fs_pcg", "fs_ecg"};
    if (header != expected) {
        throw DataError("manifest header must be record_id,label,pcg_path,ecg_path,fs_pcg,fs_ecg");
    }
    std::vector<RecordDescriptor> out;
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line_no = i + 1;
        if (trim(lines[i]).empty()) continue;
        const auto f = split_fields(lines[i]);
        if (f.size() != expected.size()) {
            throw DataError("manifest line " + std::to_string(line_no) + ": expected 6 fields, got " +
                            std::to_string(f.size()));
        }
        RecordDescriptor d;
        d.record_id = std::string(f[0]);
        if (d.record_id.empty()) {
            throw DataError("manifest line " + std::to_string(line_no) + ": empty record_id");
        }
        if (!seen.insert(d.record_id).second) {
            throw DataError("manifest line " + std::to_string(line_no) + ": duplicate record_id '" +
                            d.record_id + "'");
        }
        const auto label = parse_label(f[1]);
        if (!label) {
            throw DataError("manifest line " + std::to_string(line_no) + ": unknown label '" +
                            std::string(f[1]) + "'");
        }
        d.label = *label;
        if (f[2].empty() && f[3].empty()) {
            throw DataError("manifest line " + std::to_string(line_no) + ": record '" +
                            d.record_id + "' has neither pcg_path nor ecg_path");
        }
        if (!f[2].empty()) d.pcg_path = base_dir / std::string(f[2]);
        if (!f[3].empty()) d.ecg_path = base_dir / std::string(f[3]);
        d.fs_pcg = parse_rate(f[4], line_no, "fs_pcg");
        d.fs_ecg = parse_rate(f[5], line_no, "fs_ecg");
        if (d.pcg_path && d.fs_pcg == 0) {
            throw DataError("manifest line " + std::to_string(line_no) + ": fs_pcg missing");
        }
        if (d.ecg_path && d.fs_ecg == 0) {
            throw DataError("manifest line " + std::to_string(line_no) + ": fs_ecg missing");
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<RecordDescriptor> read_manifest(const std::filesystem::path& path) {
    return parse_manifest(read_text(path), path.parent_path());
}

WaveformRecord load_record(const RecordDescriptor& d, std::string source) {
    WaveformRecord r;
    r.record_id = d.record_id;
    r.label = d.label;
    r.source = std::move(source);
    try {
        if (d.pcg_path) {
            r.pcg = read_wav_pcm16(*d.pcg_path);
            if (r.pcg->fs != d.fs_pcg) {
                throw DataError("wav header rate " + std::to_string(r.pcg->fs) +
                                " disagrees with manifest fs_pcg " + std::to_string(d.fs_pcg));
            }
            validate(*r.pcg);
        }
        if (d.ecg_path) {
            r.ecg = read_csv_signal(*d.ecg_path, d.fs_ecg);
            validate(*r.ecg);
        }
    } catch (const DataError& e) {
        throw DataError("record " + d.record_id + ": " + e.what());
    }
    return r;
}

namespace {

double kaiser(double x, double beta) {
    // x in [-1, 1]
    const double t = 1.0 - x * x;
    if (t <= 0.0) return t == 0.0 ? 1.0 / std::cyl_bessel_i(0.0, beta) : 0.0;
    return std::cyl_bessel_i(0.0, beta * std::sqrt(t)) / std::cyl_bessel_i(0.0, beta);
}

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = 3.141592653589793 * x;
    return std::sin(px) / px;
}

} // namespace

Waveform resample(const Waveform& w, int target_fs) {
    if (target_fs <= 0) throw ConfigError("resample: target rate must be positive");
    if (w.fs <= 0) throw DataError("resample: source rate must be positive");
    if (target_fs == w.fs || w.samples.empty()) {
        Waveform same = w;
        same.fs = w.fs == target_fs ? w.fs : target_fs;
        return same;
    }
    constexpr double kBeta = 8.6;
    constexpr int kHalfTaps = 32;

    const long g = std::gcd(static_cast<long>(target_fs), static_cast<long>(w.fs));
    const long up = target_fs / g;
    const long down = w.fs / g;
    // cutoff as a fraction of the input Nyquist rate
    const double rho = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
    const long half = static_cast<long>(std::ceil(kHalfTaps / rho));
    const long taps = 2 * half;

    const auto phase_taps = [&](long phase, std::vector<double>& h) {
        const double frac = static_cast<double>(phase) / static_cast<double>(up);
        h.resize(static_cast<std::size_t>(taps));
        double sum = 0.0;
        for (long k = 0; k < taps; ++k) {
            const double tau = static_cast<double>(k - half + 1) - frac;
            const double v = rho * sinc(rho * tau) * kaiser(tau / static_cast<double>(half), kBeta);
            h[static_cast<std::size_t>(k)] = v;
            sum += v;
        }
        for (auto& v : h) v /= sum;
    };

    const long n = static_cast<long>(w.samples.size());
    const long n_out = std::max<long>(1, (n * up + down / 2) / down);
    const auto mirror = [n](long i) {
        if (n == 1) return 0L;
        const long period = 2 * (n - 1);
        i %= period;
        if (i < 0) i += period;
        return i < n ? i : period - i;
    };

    const bool tabulate = up <= 4096;
    std::vector<std::vector<double>> table;
    if (tabulate) {
        table.resize(static_cast<std::size_t>(up));
        for (long p = 0; p < up; ++p) phase_taps(p, table[static_cast<std::size_t>(p)]);
    }
    std::vector<double> scratch;

    Waveform out;
    out.fs = target_fs;
    out.samples.resize(static_cast<std::size_t>(n_out));
    for (long j = 0; j < n_out; ++j) {
        const long pos = j * down;
        const long base = pos / up;
        const long phase = pos % up;
        const std::vector<double>* h = nullptr;
        if (tabulate) {
            h = &table[static_cast<std::size_t>(phase)];
        } else {
            phase_taps(phase, scratch);
            h = &scratch;
        }
        double acc = 0.0;
        const long first = base - half + 1;
        if (first >= 0 && first + taps <= n) {
            for (long k = 0; k < taps; ++k) {
                acc += (*h)[static_cast<std::size_t>(k)] *
                       static_cast<double>(w.samples[static_cast<std::size_t>(first + k)]);
            }
        } else {
            for (long k = 0; k < taps; ++k) {
                acc += (*h)[static_cast<std::size_t>(k)] *
                       static_cast<double>(w.samples[static_cast<std::size_t>(mirror(first + k))]);
            }
        }
        out.samples[static_cast<std::size_t>(j)] = static_cast<float>(acc);
    }
    return out;
}

} // namespace signal_io
} // namespace cardiofuse
