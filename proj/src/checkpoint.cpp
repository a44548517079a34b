#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fedids/nn.hpp"

namespace fedids::nn {
namespace {

constexpr std::array<char, 8> kMagic{'F', 'E', 'D', 'I', 'D', 'S', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <class T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&value, bytes, sizeof(T));
    }
    return value;
}

template <class T>
void write(std::ofstream& out, T value) {
    value = to_little(value);
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read(std::ifstream& in, const std::filesystem::path& path) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
        throw Error(path.string() + ": truncated checkpoint");
    }
    return to_little(value);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    const auto arch = params.architecture();
    arch.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(path.string() + ": cannot open checkpoint for writing");
    out.write(kMagic.data(), kMagic.size());
    write<std::uint32_t>(out, kVersion);
    write<std::uint32_t>(out, static_cast<std::uint32_t>(arch.input_dim));
    write<std::uint32_t>(out, static_cast<std::uint32_t>(arch.hidden_units.size()));
    for (auto u : arch.hidden_units) write<std::uint32_t>(out, static_cast<std::uint32_t>(u));
    for (const auto& layer : params.layers) {
        for (double w : layer.weights.values) write<double>(out, w);
        for (double b : layer.bias) write<double>(out, b);
    }
    if (!out) throw Error(path.string() + ": failed writing checkpoint");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(path.string() + ": checkpoint not found or unreadable");
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw Error(path.string() + ": not a model checkpoint");
    }
    const auto version = read<std::uint32_t>(in, path);
    if (version != kVersion) throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    Architecture arch;
    arch.input_dim = read<std::uint32_t>(in, path);
    const auto hidden = read<std::uint32_t>(in, path);
    if (hidden > 4096) throw Error(path.string() + ": implausible layer count");
    for (std::uint32_t i = 0; i < hidden; ++i) arch.hidden_units.push_back(read<std::uint32_t>(in, path));
    arch.validate();

    ModelParams params;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        LayerParams layer{Matrix(arch.fan_in(l), arch.fan_out(l)), std::vector<double>(arch.fan_out(l))};
        for (auto& w : layer.weights.values) w = read<double>(in, path);
        for (auto& b : layer.bias) b = read<double>(in, path);
        for (double v : layer.weights.values) {
            if (!std::isfinite(v)) throw Error(path.string() + ": non-finite weight in checkpoint");
        }
        params.layers.push_back(std::move(layer));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw Error(path.string() + ": trailing bytes in checkpoint");
    return params;
}

}  // namespace fedids::nn
