#include "mipo/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "mipo/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace mipo::lm {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'P', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TinyLm& model) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint file for writing: " + path.string());
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    const auto& cfg = model.config();
    write_pod<std::int32_t>(os, cfg.d_model);
    write_pod<std::int32_t>(os, cfg.n_layers);
    write_pod<std::int32_t>(os, cfg.context_len);
    write_pod<std::int32_t>(os, cfg.vocab_size);
    write_pod<std::uint64_t>(os, cfg.seed);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.params().size()));
    for (const auto& [name, t] : model.params()) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
        for (auto d : t.shape()) write_pod<std::int64_t>(os, d);
        auto vals = t.values();
        os.write(reinterpret_cast<const char*>(vals.data()),
                 static_cast<std::streamsize>(vals.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

TinyLm load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint file: " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    ModelConfig cfg;
    cfg.d_model = read_pod<std::int32_t>(is);
    cfg.n_layers = read_pod<std::int32_t>(is);
    cfg.context_len = read_pod<std::int32_t>(is);
    cfg.vocab_size = read_pod<std::int32_t>(is);
    cfg.seed = read_pod<std::uint64_t>(is);
    const auto n_params = read_pod<std::uint32_t>(is);

    std::map<std::string, diff::Tensor> params;
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("truncated checkpoint");
        const auto ndim = read_pod<std::uint32_t>(is);
        if (ndim < 1 || ndim > 2)
            throw std::runtime_error("checkpoint parameter " + name + " has unexpected rank " +
                                     std::to_string(ndim));
        std::vector<std::int64_t> shape(ndim);
        std::int64_t numel = 1;
        for (auto& d : shape) {
            d = read_pod<std::int64_t>(is);
            if (d <= 0 || d > (1 << 24))
                throw std::runtime_error("checkpoint parameter " + name +
                                         " has unexpected shape");
            numel *= d;
        }
        std::vector<double> vals(static_cast<std::size_t>(numel));
        is.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(double)));
        if (!is) throw std::runtime_error("truncated checkpoint");
        if (params.count(name))
            throw std::runtime_error("checkpoint contains duplicate parameter " + name);
        params[name] = diff::Tensor::from(std::move(shape), std::move(vals), true);
    }
    // Verify against the architecture implied by the stored config.
    TinyLm reference(cfg);
    for (const auto& [name, t] : reference.params()) {
        auto it = params.find(name);
        if (it == params.end())
            throw std::runtime_error("checkpoint is missing parameter " + name);
        if (it->second.shape() != t.shape())
            throw std::runtime_error("checkpoint parameter " + name + " has unexpected shape");
    }
    if (params.size() != reference.params().size())
        throw std::runtime_error("checkpoint contains unknown extra parameters");
    return TinyLm(cfg, std::move(params));
}

std::string checkpoint_hash(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint file: " + path.string());
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        const auto got = is.gcount();
        if (got > 0) h = mipo::fnv1a64(buf, static_cast<std::size_t>(got), h);
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return std::string(hex);
}

}  // namespace mipo::lm
