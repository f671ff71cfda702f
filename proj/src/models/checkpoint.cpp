#include "cardiofuse/models.hpp"

#include "cardiofuse/error.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace cardiofuse::models {
namespace {

constexpr std::uint32_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& o, std::uint16_t v) {
    o.push_back(static_cast<std::uint8_t>(v));
    o.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& o, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) o.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (b_.size() - at_ < n) throw ModelError(std::string("checkpoint truncated while reading ") + what);
        auto s = b_.subspan(at_, n);
        at_ += n;
        return s;
    }
    std::uint8_t u8(const char* what) { return take(1, what)[0]; }
    std::uint16_t u16(const char* what) {
        auto s = take(2, what);
        return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
    }
    std::uint32_t u32(const char* what) {
        auto s = take(4, what);
        return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
               (static_cast<std::uint32_t>(s[2]) << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
    }
    bool done() const { return at_ == b_.size(); }

private:
    std::span<const std::uint8_t> b_;
    std::size_t at_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelGraph& model) {
    std::vector<std::uint8_t> out{'C', 'F', 'C', 'K'};
    put_u32(out, kVersion);
    const std::string arch = to_json(model.arch).dump();
    put_u32(out, static_cast<std::uint32_t>(arch.size()));
    out.insert(out.end(), arch.begin(), arch.end());
    const auto params = model.named_params();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<std::uint8_t>(t->rank()));
        for (auto d : t->shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : t->values()) {
            std::uint32_t bits = 0;
            std::memcpy(&bits, &v, sizeof bits);
            put_u32(out, bits);
        }
    }
    return out;
}

ModelGraph decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "CFCK", 4) != 0) throw ModelError("bad magic");
    r.take(4, "magic");
    const auto version = r.u32("version");
    if (version != kVersion) throw ModelError("unsupported checkpoint version " + std::to_string(version));
    const auto arch_len = r.u32("architecture length");
    const auto arch_bytes = r.take(arch_len, "architecture");
    nlohmann::json arch_json;
    try {
        arch_json = nlohmann::json::parse(arch_bytes.begin(), arch_bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("checkpoint architecture: ") + e.what());
    }
    ModelGraph model = build(architecture_from_json(arch_json), 0);
    std::map<std::string, nn::Tensor*> slots;
    for (auto& [name, t] : model.named_params()) slots[name] = t;

    const auto count = r.u32("tensor count");
    if (count != slots.size()) {
        throw ModelError("checkpoint holds " + std::to_string(count) + " tensors, architecture needs " +
                         std::to_string(slots.size()));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.u16("tensor name length");
        const auto nb = r.take(name_len, "tensor name");
        const std::string name(nb.begin(), nb.end());
        const auto it = slots.find(name);
        if (it == slots.end() || it->second == nullptr) {
            throw ModelError("checkpoint tensor '" + name + "' is unknown or repeated");
        }
        const auto rank = r.u8("tensor rank");
        nn::Shape shape(rank);
        for (auto& d : shape) d = r.u32("tensor dims");
        if (shape != it->second->shape()) {
            throw ModelError("checkpoint tensor '" + name + "' has shape " + nn::shape_string(shape) +
                             ", architecture expects " + nn::shape_string(it->second->shape()));
        }
        const auto payload = r.take(4 * it->second->size(), "tensor payload");
        std::memcpy(it->second->data(), payload.data(), payload.size());
        it->second = nullptr;
    }
    if (!r.done()) throw ModelError("checkpoint has trailing bytes");
    return model;
}

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(model);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ModelError("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ModelError("short write to " + path.string());
}

ModelGraph load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ModelError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes);
}

} // namespace cardiofuse::models
