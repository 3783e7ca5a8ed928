#include "segreg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace segreg {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'E', 'G', 'R', 'E', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f64_array(std::ostream& os, const std::vector<double>& data) {
    for (double d : data) {
        const std::uint64_t u = std::bit_cast<std::uint64_t>(d);
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
        os.write(b, 8);
    }
}

void get_f64_array(std::istream& is, std::vector<double>& data) {
    for (double& d : data) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        d = std::bit_cast<double>(u);
    }
}

struct NormRef {
    BatchNormState* state;
};

void collect_block_norms(ConvBlock& b, std::vector<NormRef>& out) {
    out.push_back({&b.bn1.state});
    out.push_back({&b.bn2.state});
}

std::vector<NormRef> unet_norms(UNet& net) {
    std::vector<NormRef> out;
    for (auto& b : net.encoder_blocks()) collect_block_norms(b, out);
    collect_block_norms(net.bottleneck_block(), out);
    for (auto& b : net.decoder_blocks()) collect_block_norms(b, out);
    return out;
}

std::vector<NormRef> layer_norms(std::vector<NormLayer>& norms) {
    std::vector<NormRef> out;
    for (auto& n : norms) out.push_back({&n.state});
    return out;
}

void write_container(const std::string& path, const json& header,
                     const std::vector<Tensor>& params, const std::vector<NormRef>& norms) {
    json h = header;
    json shapes = json::array();
    for (const auto& p : params) shapes.push_back(p.shape());
    h["param_shapes"] = shapes;
    json bn = json::array();
    for (const auto& n : norms) {
        bn.push_back({{"initialized", n.state->initialized},
                      {"channels", n.state->running_mean.size()}});
    }
    h["norm_states"] = bn;
    const std::string text = h.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) put_f64_array(os, p.data());
    for (const auto& n : norms) {
        put_f64_array(os, n.state->running_mean);
        put_f64_array(os, n.state->running_var);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

json read_header(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || !std::equal(magic, magic + 8, kMagic)) {
        throw std::runtime_error("checkpoint: " + path + " is not a model container");
    }
    const std::uint32_t version = get_u32(is);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint32_t len = get_u32(is);
    std::string text(len, '\0');
    is.read(text.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated header in " + path);
    return json::parse(text);
}

void read_arrays(std::istream& is, const json& header, const std::string& path,
                 std::vector<Tensor>& params, const std::vector<NormRef>& norms) {
    const auto& shapes = header.at("param_shapes");
    if (shapes.size() != params.size()) {
        throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto stored = shapes[i].get<std::vector<int>>();
        if (stored != params[i].shape()) {
            throw std::runtime_error("checkpoint: parameter shape mismatch at index " +
                                     std::to_string(i) + " in " + path);
        }
        get_f64_array(is, params[i].data());
    }
    const auto& bn = header.at("norm_states");
    if (bn.size() != norms.size()) {
        throw std::runtime_error("checkpoint: norm state count mismatch in " + path);
    }
    for (std::size_t i = 0; i < norms.size(); ++i) {
        const std::size_t ch = bn[i].at("channels").get<std::size_t>();
        norms[i].state->running_mean.assign(ch, 0.0);
        norms[i].state->running_var.assign(ch, 0.0);
        get_f64_array(is, norms[i].state->running_mean);
        get_f64_array(is, norms[i].state->running_var);
        norms[i].state->initialized = bn[i].at("initialized").get<bool>();
    }
    if (!is) throw std::runtime_error("checkpoint: truncated payload in " + path);
}

}  // namespace

void save_unet(const std::string& path, UNet& net) {
    const auto& c = net.config();
    json header = {{"kind", "unet"},
                   {"config",
                    {{"in_channels", c.in_channels},
                     {"num_classes", c.num_classes},
                     {"depth", c.depth},
                     {"base_channels", c.base_channels},
                     {"multi_head", c.multi_head}}}};
    auto params = net.parameters();
    write_container(path, header, params, unet_norms(net));
}

UNet load_unet(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    json header = read_header(is, path);
    if (header.at("kind") != "unet") throw std::runtime_error("checkpoint: " + path + " is not a unet");
    const auto& c = header.at("config");
    SegNetConfig cfg;
    cfg.in_channels = c.at("in_channels");
    cfg.num_classes = c.at("num_classes");
    cfg.depth = c.at("depth");
    cfg.base_channels = c.at("base_channels");
    cfg.multi_head = c.at("multi_head");
    UNet net(cfg, 0);
    auto params = net.parameters();
    read_arrays(is, header, path, params, unet_norms(net));
    return net;
}

void save_autoencoder(const std::string& path, ShapeEncoder& encoder, ShapeDecoder& decoder) {
    const auto& c = encoder.config();
    json header = {{"kind", "autoencoder"},
                   {"config",
                    {{"in_channels", c.in_channels},
                     {"depth", c.depth},
                     {"base_channels", c.base_channels},
                     {"code_channels", c.code_channels}}}};
    auto params = encoder.parameters();
    auto dec_params = decoder.parameters();
    params.insert(params.end(), dec_params.begin(), dec_params.end());
    auto norms = layer_norms(encoder.norm_layers());
    auto dec_norms = layer_norms(decoder.norm_layers());
    norms.insert(norms.end(), dec_norms.begin(), dec_norms.end());
    write_container(path, header, params, norms);
}

std::pair<ShapeEncoder, ShapeDecoder> load_autoencoder(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    json header = read_header(is, path);
    if (header.at("kind") != "autoencoder") {
        throw std::runtime_error("checkpoint: " + path + " is not an autoencoder");
    }
    const auto& c = header.at("config");
    AutoEncoderConfig cfg;
    cfg.in_channels = c.at("in_channels");
    cfg.depth = c.at("depth");
    cfg.base_channels = c.at("base_channels");
    cfg.code_channels = c.at("code_channels");
    auto pair = build_autoencoder(cfg, 0);
    auto params = pair.first.parameters();
    auto dec_params = pair.second.parameters();
    params.insert(params.end(), dec_params.begin(), dec_params.end());
    auto norms = layer_norms(pair.first.norm_layers());
    auto dec_norms = layer_norms(pair.second.norm_layers());
    norms.insert(norms.end(), dec_norms.begin(), dec_norms.end());
    read_arrays(is, header, path, params, norms);
    return pair;
}

void save_discriminator(const std::string& path, Discriminator& net) {
    const auto& c = net.config();
    json header = {{"kind", "discriminator"},
                   {"config",
                    {{"in_channels", c.in_channels},
                     {"depth", c.depth},
                     {"base_channels", c.base_channels}}}};
    auto params = net.parameters();
    write_container(path, header, params, {});
}

Discriminator load_discriminator(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    json header = read_header(is, path);
    if (header.at("kind") != "discriminator") {
        throw std::runtime_error("checkpoint: " + path + " is not a discriminator");
    }
    const auto& c = header.at("config");
    DiscriminatorConfig cfg;
    cfg.in_channels = c.at("in_channels");
    cfg.depth = c.at("depth");
    cfg.base_channels = c.at("base_channels");
    Discriminator net(cfg, 0);
    auto params = net.parameters();
    read_arrays(is, header, path, params, {});
    return net;
}

std::string checkpoint_kind(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    return read_header(is, path).at("kind").get<std::string>();
}

}  // namespace segreg
