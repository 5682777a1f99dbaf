#include "flowedge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <zlib.h>

#include "flowedge/errors.hpp"
#include "flowedge/netpbm.hpp"

namespace flowedge {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
}

std::uint32_t to_u32(std::size_t v, const char* what) {
    if (v > 0xffffffffu) throw DataError(std::string(what) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

std::uint32_t crc(std::string_view bytes) {
    uLong c = crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < bytes.size()) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
        c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + done), chunk);
        done += chunk;
    }
    return static_cast<std::uint32_t>(c);
}

class Reader {
public:
    explicit Reader(std::string_view b) : b_(b) {}
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, b_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v;
        std::memcpy(&v, b_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }
    std::string_view bytes(std::size_t n, const char* what) {
        need(n, what);
        const std::string_view v = b_.substr(pos_, n);
        pos_ += n;
        return v;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (b_.size() - pos_ < n) throw ParseError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
    std::string_view b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const VelocityNet& net) {
    const NetConfig& c = net.config();
    std::string out = "ECE1";
    put_u32(out, kCheckpointVersion);
    for (std::size_t v : {c.d_model, c.blocks, c.heads, c.rank, c.patch, c.canvas}) put_u32(out, to_u32(v, "header field"));
    put_u64(out, c.codec_seed);
    put_u32(out, to_u32(net.params().size(), "parameter count"));
    for (const Param& p : net.params().params()) {
        put_u32(out, to_u32(p.name.size(), "name length"));
        out += p.name;
        put_u32(out, to_u32(p.value.shape().size(), "rank"));
        for (std::size_t d : p.value.shape()) put_u32(out, to_u32(d, "dimension"));
        for (double v : p.value.data()) {
            const float f = static_cast<float>(v);
            char b[4];
            std::memcpy(b, &f, 4);
            out.append(b, 4);
        }
    }
    put_u32(out, crc(out));
    return out;
}

VelocityNet decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < 8 || bytes.substr(0, 4) != "ECE1") throw ParseError("not a checkpoint (bad magic)", 0);
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, 4);
    if (crc(bytes.substr(0, body)) != stored) throw DataError("checkpoint CRC mismatch (file is corrupt)");

    Reader r(bytes.substr(0, body));
    r.bytes(4, "magic");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    NetConfig cfg;
    cfg.d_model = r.u32("d_model");
    cfg.blocks = r.u32("blocks");
    cfg.heads = r.u32("heads");
    cfg.rank = r.u32("rank");
    cfg.patch = r.u32("patch");
    cfg.canvas = r.u32("canvas");
    cfg.codec_seed = r.u64("codec seed");

    const std::uint32_t count = r.u32("parameter count");
    std::map<std::string, Tensor> table;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32("name length");
        const std::string name(r.bytes(len, "name"));
        const std::uint32_t ndim = r.u32("rank");
        Shape shape;
        std::size_t n = 1;
        for (std::uint32_t k = 0; k < ndim; ++k) {
            shape.push_back(r.u32("dimension"));
            n *= shape.back();
        }
        const std::string_view payload = r.bytes(n * 4, "values");
        Tensor t(shape);
        for (std::size_t k = 0; k < n; ++k) {
            float f;
            std::memcpy(&f, payload.data() + 4 * k, 4);
            t[k] = f;
        }
        if (!table.emplace(name, std::move(t)).second) throw DataError("duplicate parameter '" + name + "' in checkpoint");
    }
    if (r.pos() != body) throw ParseError("trailing bytes after parameter table", r.pos());

    const auto prompt = table.find("prompt.tokens");
    const auto w1 = table.find("block0.mlp.w1");
    if (prompt == table.end() || w1 == table.end() || prompt->second.shape().size() != 2 || w1->second.shape().size() != 2 ||
        cfg.d_model == 0)
        throw DataError("checkpoint lacks the prompt or MLP tables needed to rebuild the model");
    cfg.prompt_tokens = prompt->second.shape()[0];
    cfg.mlp_ratio = w1->second.shape()[1] / cfg.d_model;

    VelocityNet net(cfg, 0);
    if (table.size() != net.params().size())
        throw DataError("checkpoint has " + std::to_string(table.size()) + " parameters, model expects " +
                        std::to_string(net.params().size()));
    for (Param& p : net.params().params()) {
        const auto it = table.find(p.name);
        if (it == table.end()) throw DataError("checkpoint is missing parameter '" + p.name + "'");
        if (it->second.shape() != p.value.shape())
            throw DataError("parameter '" + p.name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                            shape_str(p.value.shape()));
        p.value = it->second;
    }
    return net;
}

void save_checkpoint(const std::filesystem::path& path, const VelocityNet& net) { write_file(path, encode_checkpoint(net)); }

VelocityNet load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.message(), e.offset());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void require_architecture(const NetConfig& expected, const NetConfig& found) {
    std::string diff;
    auto check = [&](const char* name, auto a, auto b) {
        if (a == b) return;
        if (!diff.empty()) diff += "; ";
        diff += std::string(name) + ": expected " + std::to_string(a) + ", found " + std::to_string(b);
    };
    check("d_model", expected.d_model, found.d_model);
    check("blocks", expected.blocks, found.blocks);
    check("heads", expected.heads, found.heads);
    check("rank", expected.rank, found.rank);
    check("prompt_tokens", expected.prompt_tokens, found.prompt_tokens);
    check("mlp_ratio", expected.mlp_ratio, found.mlp_ratio);
    check("patch", expected.patch, found.patch);
    check("canvas", expected.canvas, found.canvas);
    check("codec_seed", expected.codec_seed, found.codec_seed);
    if (!diff.empty()) throw ConfigError("checkpoint architecture mismatch: " + diff);
}

}  // namespace flowedge
