#include "vesseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vesseg {

namespace {
constexpr char kMagic[8] = {'V', 'S', 'E', 'G', 'C', 'K', 'P', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}
void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}
void put_f32(std::ostream& os, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
float get_f32(std::istream& is) {
    std::uint32_t v = get_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}
}  // namespace

Checkpoint Checkpoint::snapshot(const std::string& kind, const ModelConfig& model,
                                const NetworkParams& params, std::int64_t epoch, double val_metric,
                                const std::string& config_hash) {
    Checkpoint c;
    c.kind = kind;
    c.model = model;
    c.epoch = epoch;
    // the metric itself is stored as f32 in the header; keep it consistent
    c.val_metric = static_cast<double>(static_cast<float>(val_metric));
    c.config_hash = config_hash;
    for (const auto& [path, p] : params.items()) c.params.add(path, p.value, p.trainable);
    c.params.quantize_f32();
    return c;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);

    KeyValueConfig header;
    header.set("kind", kind);
    model.to_config(header);
    header.set("epoch", std::to_string(epoch));
    char vm[32];
    std::snprintf(vm, sizeof(vm), "%.9g", val_metric);
    header.set("val_metric", vm);
    header.set("config_hash", config_hash);
    const std::string text = header.canonical_text();
    put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));

    put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [ppath, p] : params.items()) {
        put_u16(os, static_cast<std::uint16_t>(ppath.size()));
        os.write(ppath.data(), static_cast<std::streamsize>(ppath.size()));
        os.put(p.trainable ? 1 : 0);
        os.put(static_cast<char>(p.value.ndim()));
        for (index_t d : p.value.shape) put_u32(os, static_cast<std::uint32_t>(d));
        for (double v : p.value.data) put_f32(os, static_cast<float>(v));
    }
    if (!os) throw CheckpointError("write failed for checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointError("not a vesseg checkpoint: " + path);

    const std::uint32_t hlen = get_u32(is);
    std::string text(hlen, '\0');
    is.read(text.data(), hlen);
    if (!is) throw CheckpointError("truncated checkpoint header: " + path);
    KeyValueConfig header = KeyValueConfig::parse_text(text);

    Checkpoint c;
    c.kind = header.get("kind");
    c.model = ModelConfig::from_config(header);
    c.epoch = header.get_int("epoch");
    c.val_metric = header.get_real("val_metric");
    c.config_hash = header.get_or("config_hash", "");

    const std::uint32_t count = get_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t plen = get_u16(is);
        std::string ppath(plen, '\0');
        is.read(ppath.data(), plen);
        const bool trainable = is.get() != 0;
        const int ndim = is.get();
        if (!is || ndim < 0 || ndim > 8) throw CheckpointError("corrupt entry in checkpoint: " + path);
        std::vector<index_t> shape(static_cast<size_t>(ndim));
        for (int d = 0; d < ndim; ++d) shape[static_cast<size_t>(d)] = get_u32(is);
        Tensor t(shape);
        for (double& v : t.data) v = static_cast<double>(get_f32(is));
        if (!is) throw CheckpointError("truncated checkpoint data: " + path);
        c.params.add(ppath, std::move(t), trainable);
    }
    return c;
}

namespace {
void fill_params(NetworkParams& dst, const NetworkParams& src, const std::string& what) {
    if (dst.size() != src.size())
        throw CheckpointError(what + ": checkpoint has " + std::to_string(src.size()) +
                              " parameters, network expects " + std::to_string(dst.size()));
    for (auto& [path, p] : dst.items()) {
        if (!src.has(path)) throw CheckpointError(what + ": checkpoint is missing parameter " + path);
        const Param& s = src.at(path);
        if (s.value.shape != p.value.shape)
            throw CheckpointError(what + ": shape mismatch for " + path + " (" + s.value.shape_str() +
                                  " vs " + p.value.shape_str() + ")");
        p.value = s.value;
    }
}
}  // namespace

UNet restore_unet(const Checkpoint& ckpt) {
    if (ckpt.kind != "unet") throw CheckpointError("checkpoint kind is '" + ckpt.kind + "', expected unet");
    UNet net = UNet::build(ckpt.model, 0);
    fill_params(net.params, ckpt.params, "restore_unet");
    return net;
}

std::unique_ptr<AutoEncoder> restore_autoencoder(const Checkpoint& ckpt) {
    std::unique_ptr<AutoEncoder> net = build_autoencoder(ckpt.kind, ckpt.model, 0);
    fill_params(net->params(), ckpt.params, "restore_autoencoder");
    return net;
}

}  // namespace vesseg
