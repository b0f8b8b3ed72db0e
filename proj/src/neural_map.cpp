#include "nsm/net/neural_map.hpp"

#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

namespace nsm::net {

using nlohmann::json;

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::softplus: return "softplus";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
    }
    return "softplus";
}

Activation activation_from_name(const std::string& name) {
    if (name == "softplus") return Activation::softplus;
    if (name == "relu") return Activation::relu;
    if (name == "leaky_relu") return Activation::leaky_relu;
    throw ConfigError("unknown activation: " + name);
}

void validate(const Architecture& a) {
    if (a.depth < 1 || a.width < 1) throw ConfigError("architecture: depth and width must be >= 1");
    if (a.width > kMaxWidth) throw ConfigError("architecture: width exceeds supported maximum");
    if (a.in_dim != 2) throw ConfigError("architecture: in_dim must be 2");
    if (a.out_dim != 2 && a.out_dim != 3) throw ConfigError("architecture: out_dim must be 2 or 3");
    if (a.identity_skip && a.out_dim < a.in_dim) {
        throw ConfigError("architecture: identity_skip requires out_dim >= in_dim");
    }
}

NeuralMap build(const Architecture& arch, std::uint64_t seed) {
    validate(arch);
    NeuralMap m;
    m.arch = arch;
    m.params.resize(param_count(arch));
    std::mt19937_64 rng(seed);

    auto fill_layer = [&](std::size_t off, int rows, int cols, double scale) {
        const double bound = scale * std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        const std::size_t n = static_cast<std::size_t>(rows) * cols + rows; // weights + bias
        for (std::size_t i = 0; i < n; ++i) m.params[off + i] = dist(rng);
        return off + n;
    };

    std::size_t off = fill_layer(0, arch.width, arch.in_dim, 1.0);
    for (int i = 0; i < arch.depth; ++i) off = fill_layer(off, arch.width, arch.width, 1.0);
    fill_layer(off, arch.out_dim, arch.width, arch.final_init_scale);
    return m;
}

std::vector<std::array<double, 3>> evaluate(const NeuralMap& m,
                                            std::span<const std::array<double, 2>> points) {
    std::vector<std::array<double, 3>> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(forward<double>(m, p));
    return out;
}

namespace {

json arch_to_json(const Architecture& a) {
    return json{{"depth", a.depth},
                {"width", a.width},
                {"in_dim", a.in_dim},
                {"out_dim", a.out_dim},
                {"residual", a.residual},
                {"identity_skip", a.identity_skip},
                {"activation", activation_name(a.activation)}};
}

Architecture arch_from_json(const json& j) {
    Architecture a;
    a.depth = j.at("depth").get<int>();
    a.width = j.at("width").get<int>();
    a.in_dim = j.at("in_dim").get<int>();
    a.out_dim = j.at("out_dim").get<int>();
    a.residual = j.at("residual").get<bool>();
    a.identity_skip = j.at("identity_skip").get<bool>();
    a.activation = activation_from_name(j.at("activation").get<std::string>());
    return a;
}

constexpr char kMagic[4] = {'N', 'S', 'M', '1'};
constexpr std::uint32_t kFormatVersion = 1;

} // namespace

void save_checkpoint(const NeuralMap& m, const std::string& path, const CheckpointMeta& meta) {
    json header = {{"version", kFormatVersion},
                   {"arch", arch_to_json(m.arch)},
                   {"meta", {{"name", meta.name},
                             {"creation_info", meta.creation_info},
                             {"train_loss", meta.train_loss}}}};
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 4);
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    f.write(reinterpret_cast<const char*>(m.params.data()),
            static_cast<std::streamsize>(m.params.size() * sizeof(double)));
    if (!f) throw IOError("failed writing checkpoint: " + path);
}

NeuralMap load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open checkpoint: " + path);

    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) {
        throw CheckpointCorruptError("not an NSM1 checkpoint: " + path);
    }
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f || hlen == 0 || hlen > (1u << 20)) {
        throw CheckpointCorruptError("corrupt checkpoint header: " + path);
    }
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw CheckpointCorruptError("truncated checkpoint header: " + path);

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception&) {
        throw CheckpointCorruptError("unparseable checkpoint header: " + path);
    }
    const auto version = header.at("version").get<std::uint32_t>();
    if (version != kFormatVersion) {
        throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
    }

    NeuralMap m;
    try {
        m.arch = arch_from_json(header.at("arch"));
    } catch (const json::exception&) {
        throw CheckpointCorruptError("malformed architecture descriptor: " + path);
    }
    validate(m.arch);
    m.params.resize(param_count(m.arch));
    f.read(reinterpret_cast<char*>(m.params.data()),
           static_cast<std::streamsize>(m.params.size() * sizeof(double)));
    if (f.gcount() != static_cast<std::streamsize>(m.params.size() * sizeof(double))) {
        throw CheckpointCorruptError("truncated parameter payload: " + path);
    }
    return m;
}

NeuralMap load_checkpoint(const std::string& path, int expected_in_dim, int expected_out_dim) {
    NeuralMap m = load_checkpoint(path);
    if (m.arch.in_dim != expected_in_dim || m.arch.out_dim != expected_out_dim) {
        throw CheckpointShapeError("checkpoint is a " + std::to_string(m.arch.in_dim) + "->" +
                                   std::to_string(m.arch.out_dim) + " map, expected " +
                                   std::to_string(expected_in_dim) + "->" +
                                   std::to_string(expected_out_dim) + ": " + path);
    }
    return m;
}

} // namespace nsm::net
