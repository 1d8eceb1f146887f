#include "clonescope/mil.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

using nlohmann::json;

namespace clonescope {

namespace {

void write_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {char(v & 0xff), char(v >> 8)};
    out.write(b, 2);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw std::runtime_error("truncated EMB1 file");
    return std::uint16_t(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("truncated EMB1 file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(const std::vector<double>& v) {
    const auto* data = reinterpret_cast<const unsigned char*>(v.data());
    std::size_t n = v.size() * sizeof(double);
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        std::uint32_t chunk = std::uint32_t(data[i]) << 16;
        if (i + 1 < n) chunk |= std::uint32_t(data[i + 1]) << 8;
        if (i + 2 < n) chunk |= data[i + 2];
        out += kB64[(chunk >> 18) & 63];
        out += kB64[(chunk >> 12) & 63];
        out += i + 1 < n ? kB64[(chunk >> 6) & 63] : '=';
        out += i + 2 < n ? kB64[chunk & 63] : '=';
    }
    return out;
}

std::vector<double> b64_decode(const std::string& s) {
    static const auto lut = [] {
        std::array<int, 256> t;
        t.fill(-1);
        for (int i = 0; i < 64; ++i) t[(unsigned char)kB64[i]] = i;
        return t;
    }();
    std::vector<unsigned char> bytes;
    std::uint32_t chunk = 0;
    int bits = 0;
    for (char c : s) {
        if (c == '=' || c == '\n') continue;
        int v = lut[(unsigned char)c];
        if (v < 0) throw std::runtime_error("invalid base64");
        chunk = (chunk << 6) | std::uint32_t(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            bytes.push_back((chunk >> bits) & 0xff);
        }
    }
    if (bytes.size() % sizeof(double) != 0) throw std::runtime_error("base64 block is not f64-aligned");
    std::vector<double> out(bytes.size() / sizeof(double));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

} // namespace

void write_embeddings(const std::vector<MilBag>& bags, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::uint32_t records = 0;
    std::uint32_t dim = 0;
    for (const auto& b : bags) {
        records += std::uint32_t(b.instances.size());
        if (dim == 0 && !b.instances.empty()) dim = std::uint32_t(b.instances.front().v.size());
    }
    out.write("EMB1", 4);
    write_u32(out, records);
    write_u32(out, dim);
    for (const auto& b : bags) {
        for (const auto& e : b.instances) {
            write_u16(out, std::uint16_t(b.image_id.size()));
            out.write(b.image_id.data(), std::streamsize(b.image_id.size()));
            write_u16(out, std::uint16_t(e.patch_id.size()));
            out.write(e.patch_id.data(), std::streamsize(e.patch_id.size()));
            for (double d : e.v) {
                float f = float(d);
                char buf[4];
                std::memcpy(buf, &f, 4);
                out.write(buf, 4);
            }
        }
    }
}

std::vector<MilBag> import_embeddings(const std::string& path, const std::vector<ManifestEntry>& manifest,
                                      const std::vector<std::string>& clone_order) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "EMB1", 4) != 0) throw std::runtime_error("not an EMB1 archive");
    std::uint32_t records = read_u32(in);
    std::uint32_t dim = read_u32(in);
    if (records == 0) throw std::runtime_error("no bags");

    std::map<std::string, const ManifestEntry*> by_id;
    for (const auto& e : manifest) by_id[e.image_id] = &e;
    std::map<std::string, int> clone_idx;
    for (std::size_t i = 0; i < clone_order.size(); ++i) clone_idx[clone_order[i]] = int(i);

    std::map<std::string, MilBag> bags;
    std::vector<std::string> order;
    for (std::uint32_t r = 0; r < records; ++r) {
        std::uint16_t ilen = read_u16(in);
        std::string image_id(ilen, '\0');
        in.read(image_id.data(), ilen);
        std::uint16_t plen = read_u16(in);
        std::string patch_id(plen, '\0');
        in.read(patch_id.data(), plen);
        if (!in) throw std::runtime_error("truncated EMB1 file");

        Embedding e;
        e.patch_id = patch_id;
        e.v.resize(dim);
        for (std::uint32_t i = 0; i < dim; ++i) {
            char buf[4];
            in.read(buf, 4);
            if (!in) throw std::runtime_error("truncated EMB1 file");
            float f;
            std::memcpy(&f, buf, 4);
            e.v[i] = double(f);
        }

        auto it = by_id.find(image_id);
        if (it == by_id.end()) throw std::runtime_error("unknown image id: " + image_id);
        auto [bit, inserted] = bags.try_emplace(image_id);
        if (inserted) {
            order.push_back(image_id);
            const ManifestEntry& m = *it->second;
            bit->second.image_id = image_id;
            bit->second.clone = m.clone;
            bit->second.isolate = m.isolate;
            bit->second.preparation = m.preparation;
            auto ci = clone_idx.find(m.clone);
            bit->second.label = ci == clone_idx.end() ? -1 : ci->second;
        }
        bit->second.instances.push_back(std::move(e));
    }

    std::vector<MilBag> out;
    out.reserve(order.size());
    for (const auto& id : order) out.push_back(std::move(bags[id]));
    return out;
}

void save_checkpoint(const MilModel& model, const std::string& path) {
    json j;
    j["input_dim"] = model.input_dim;
    j["attention_dim"] = model.attention_dim;
    j["heads"] = model.heads;
    j["hyper"] = {{"lr", model.hyper.lr},
                  {"weight_decay", model.hyper.weight_decay},
                  {"steps", model.hyper.steps},
                  {"lr_decay_every", model.hyper.lr_decay_every},
                  {"lr_decay", model.hyper.lr_decay},
                  {"attention_dim", model.hyper.attention_dim},
                  {"heads", model.hyper.heads},
                  {"seed", model.hyper.seed}};
    json V = json::array(), w = json::array();
    for (int k = 0; k < model.heads; ++k) {
        V.push_back(b64_encode(model.V[k]));
        w.push_back(b64_encode(model.w[k]));
    }
    j["V"] = V;
    j["w"] = w;
    j["head_W"] = b64_encode(model.head_W);
    j["head_b"] = b64_encode({model.head_b.begin(), model.head_b.end()});
    j["patch_W"] = b64_encode(model.patch_W);
    j["patch_b"] = b64_encode({model.patch_b.begin(), model.patch_b.end()});

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

MilModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j = json::parse(in);

    MilModel m;
    m.input_dim = j.at("input_dim").get<int>();
    m.attention_dim = j.at("attention_dim").get<int>();
    m.heads = j.at("heads").get<int>();
    const json& h = j.at("hyper");
    m.hyper.lr = h.at("lr").get<double>();
    m.hyper.weight_decay = h.at("weight_decay").get<double>();
    m.hyper.steps = h.at("steps").get<int>();
    m.hyper.lr_decay_every = h.at("lr_decay_every").get<int>();
    m.hyper.lr_decay = h.at("lr_decay").get<double>();
    m.hyper.attention_dim = h.at("attention_dim").get<int>();
    m.hyper.heads = h.at("heads").get<int>();
    m.hyper.seed = h.at("seed").get<std::uint64_t>();

    for (const auto& blk : j.at("V")) m.V.push_back(b64_decode(blk.get<std::string>()));
    for (const auto& blk : j.at("w")) m.w.push_back(b64_decode(blk.get<std::string>()));
    m.head_W = b64_decode(j.at("head_W").get<std::string>());
    auto hb = b64_decode(j.at("head_b").get<std::string>());
    std::copy(hb.begin(), hb.end(), m.head_b.begin());
    m.patch_W = b64_decode(j.at("patch_W").get<std::string>());
    auto pb = b64_decode(j.at("patch_b").get<std::string>());
    std::copy(pb.begin(), pb.end(), m.patch_b.begin());

    if (int(m.V.size()) != m.heads || int(m.w.size()) != m.heads)
        throw std::runtime_error("checkpoint dimension mismatch");
    for (int k = 0; k < m.heads; ++k)
        if (m.V[k].size() != std::size_t(m.attention_dim) * m.input_dim ||
            m.w[k].size() != std::size_t(m.attention_dim))
            throw std::runtime_error("checkpoint dimension mismatch");
    return m;
}

} // namespace clonescope
