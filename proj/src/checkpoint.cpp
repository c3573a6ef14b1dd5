#include "fd2cl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include <json.hpp>

namespace fd2cl::model {

using num::Tensor;
using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'D', '2', 'C', 'L', '\0', '\0', '\1'};

// Stable name -> tensor listing covering the whole model state.
std::vector<std::pair<std::string, Tensor*>> named_tensors(ModelState& m) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& p : trainable_params(m)) out.emplace_back(p.name, p.tensor);
    out.emplace_back("enc.w1", &m.enc_w1);
    out.emplace_back("enc.b1", &m.enc_b1);
    out.emplace_back("enc.w2", &m.enc_w2);
    out.emplace_back("enc.b2", &m.enc_b2);
    out.emplace_back("anchor.real", &m.anchor_real);
    out.emplace_back("anchor.fake", &m.anchor_fake);
    return out;
}

void put_u64_le(std::vector<std::uint8_t>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const ModelState& m, const std::filesystem::path& path) {
    auto& mm = const_cast<ModelState&>(m);
    auto tensors = named_tensors(mm);

    json header;
    header["dims"] = {{"c", m.dims.c},       {"h", m.dims.h},   {"w", m.dims.w},
                      {"d", m.dims.d},       {"h1", m.dims.h1}, {"h2", m.dims.h2},
                      {"rank", m.dims.rank}, {"alpha", m.dims.alpha}};
    json list = json::array();
    for (const auto& [name, t] : tensors)
        list.push_back({{"name", name}, {"shape", t->shape()}, {"dtype", "f64"}});
    header["tensors"] = list;
    const std::string header_str = header.dump();

    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), kMagic, kMagic + 8);
    put_u64_le(buf, header_str.size());
    buf.insert(buf.end(), header_str.begin(), header_str.end());
    for (const auto& [name, t] : tensors) {
        for (std::int64_t i = 0; i < t->size(); ++i) {
            std::uint64_t bits;
            const double v = (*t)[i];
            std::memcpy(&bits, &v, 8);
            put_u64_le(buf, bits);
        }
    }

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("save_checkpoint: cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_checkpoint: cannot open " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw FormatError("load_checkpoint: bad magic", 0);
    const std::uint64_t hlen = get_u64_le(buf.data() + 8);
    if (buf.size() < 16 + hlen) throw FormatError("load_checkpoint: truncated header", 8);

    json header;
    try {
        header = json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const json::exception&) {
        throw FormatError("load_checkpoint: header is not valid JSON", 16);
    }

    ModelDims dims;
    const json& d = header.at("dims");
    dims.c = d.at("c").get<int>();
    dims.h = d.at("h").get<int>();
    dims.w = d.at("w").get<int>();
    dims.d = d.at("d").get<int>();
    dims.h1 = d.at("h1").get<int>();
    dims.h2 = d.at("h2").get<int>();
    dims.rank = d.at("rank").get<int>();
    dims.alpha = d.at("alpha").get<double>();

    ModelState m = ModelState::init(dims, 0);
    auto tensors = named_tensors(m);
    std::map<std::string, Tensor*> by_name;
    for (auto& [name, t] : tensors) by_name[name] = t;

    std::size_t off = 16 + hlen;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        if (entry.at("dtype").get<std::string>() != "f64")
            throw FormatError("load_checkpoint: unsupported dtype for " + name, off);
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw FormatError("load_checkpoint: unknown tensor " + name, off);
        Tensor t(shape);
        if (buf.size() < off + static_cast<std::size_t>(t.size()) * 8)
            throw FormatError("load_checkpoint: truncated payload for " + name, off);
        for (std::int64_t i = 0; i < t.size(); ++i) {
            const std::uint64_t bits = get_u64_le(buf.data() + off);
            double v;
            std::memcpy(&v, &bits, 8);
            t[i] = v;
            off += 8;
        }
        if (!it->second->same_shape(t))
            throw FormatError("load_checkpoint: shape mismatch for " + name, off);
        *it->second = std::move(t);
    }
    if (off != buf.size())
        throw FormatError("load_checkpoint: trailing bytes after payload", off);
    return m;
}

}  // namespace fd2cl::model
