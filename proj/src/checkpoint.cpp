#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "json.hpp"
#include "model_internal.hpp"
#include "pixeldoc/common.hpp"
#include "pixeldoc/model.hpp"

namespace pixeldoc {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'F', 'G'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxDims = 8;

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f64(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void require(std::size_t n) const {
        if (pos + n > buf.size()) throw_data("truncated checkpoint");
    }
    std::uint32_t u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        require(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
                    << (8 * i);
        pos += 8;
        return std::bit_cast<double>(bits);
    }
    std::string bytes(std::size_t n) {
        require(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

int require_int(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw_data(std::string("config missing field: ") + key);
    if (!j.at(key).is_number_integer()) throw_data(std::string("config field must be an integer: ") + key);
    return j.at(key).get<int>();
}

double require_double(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw_data(std::string("config missing field: ") + key);
    if (!j.at(key).is_number()) throw_data(std::string("config field must be a number: ") + key);
    return j.at(key).get<double>();
}

std::uint64_t require_u64(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw_data(std::string("config missing field: ") + key);
    const auto& v = j.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw_data(std::string("config field must be a non-negative integer: ") + key);
    return v.get<std::uint64_t>();
}

}  // namespace

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["d_model"] = d_model;
    j["n_heads"] = n_heads;
    j["n_encoder_layers"] = n_encoder_layers;
    j["n_decoder_layers"] = n_decoder_layers;
    j["n_mae_decoder_layers"] = n_mae_decoder_layers;
    j["d_ff"] = d_ff;
    j["patch_px"] = patch_px;
    j["vocab_size"] = vocab_size;
    j["max_patches"] = max_patches;
    j["max_text_len"] = max_text_len;
    j["variance_floor"] = variance_floor;
    j["seed"] = seed;
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) throw_data("invalid config JSON");
    ModelConfig cfg;
    cfg.d_model = require_int(j, "d_model");
    cfg.n_heads = require_int(j, "n_heads");
    cfg.n_encoder_layers = require_int(j, "n_encoder_layers");
    cfg.n_decoder_layers = require_int(j, "n_decoder_layers");
    cfg.n_mae_decoder_layers = require_int(j, "n_mae_decoder_layers");
    cfg.d_ff = require_int(j, "d_ff");
    cfg.patch_px = require_int(j, "patch_px");
    cfg.vocab_size = require_int(j, "vocab_size");
    cfg.max_patches = require_int(j, "max_patches");
    cfg.max_text_len = require_int(j, "max_text_len");
    cfg.variance_floor = require_double(j, "variance_floor");
    cfg.seed = require_u64(j, "seed");
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const Parameters& params) {
    config.validate();
    detail::validate_params_structure(config, params);

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    const std::string cfg_json = config.to_json();
    put_u32(out, static_cast<std::uint32_t>(cfg_json.size()));
    out.append(cfg_json);
    put_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& t : params.tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.append(t.name);
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int dim : t.shape) put_u32(out, static_cast<std::uint32_t>(dim));
        for (double v : t.data) put_f64(out, v);
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw_data("cannot write checkpoint: " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw_data("cannot write checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw_data("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    ByteReader r{buf};
    if (r.bytes(4) != std::string(kMagic, sizeof(kMagic))) throw_data("not a checkpoint file");
    if (r.u32() != kVersion) throw_data("unsupported checkpoint version");

    Checkpoint ckpt;
    const std::uint32_t cfg_len = r.u32();
    ckpt.config = ModelConfig::from_json(r.bytes(cfg_len));

    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t ti = 0; ti < n_tensors; ++ti) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        const std::uint32_t n_dims = r.u32();
        if (n_dims == 0 || n_dims > kMaxDims) throw_data("corrupt checkpoint tensor shape");
        std::vector<int> shape;
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < n_dims; ++i) {
            const std::uint32_t dim = r.u32();
            if (dim == 0 || dim > (1u << 24)) throw_data("corrupt checkpoint tensor shape");
            shape.push_back(static_cast<int>(dim));
            count *= dim;
            if (count > (1ull << 30)) throw_data("corrupt checkpoint tensor shape");
        }
        Tensor& t = ckpt.params.add(std::move(name), std::move(shape));
        for (std::size_t i = 0; i < count; ++i) t.data[i] = r.f64();
    }
    if (r.pos != buf.size()) throw_data("trailing bytes after checkpoint payload");

    detail::validate_params_structure(ckpt.config, ckpt.params);
    return ckpt;
}

}  // namespace pixeldoc
