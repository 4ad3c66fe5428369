#include "stainlab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "stainlab/error.hpp"

namespace stainlab::ckpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'I', 'N', 'L', 'A', 'B'};

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace

void write(const fs::path& path, const Checkpoint& ckpt) {
    json header;
    header["meta"] = ckpt.meta;
    header["tensors"] = json::array();
    header["blobs"] = json::array();

    std::vector<torch::Tensor> payload_tensors;
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        torch::Tensor c = t.detach().to(torch::kCPU).to(torch::kFloat32).contiguous();
        const std::uint64_t nbytes = std::uint64_t(c.numel()) * sizeof(float);
        header["tensors"].push_back({{"name", name}, {"dtype", "f32"}, {"shape", c.sizes().vec()},
                                     {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
        payload_tensors.push_back(std::move(c));
    }
    for (const auto& [name, blob] : ckpt.blobs) {
        header["blobs"].push_back({{"name", name}, {"offset", offset}, {"nbytes", blob.size()}});
        offset += blob.size();
    }

    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
        const std::string h = header.dump();
        out.write(kMagic, sizeof kMagic);
        put<std::uint32_t>(out, Checkpoint::kVersion);
        put<std::uint64_t>(out, h.size());
        out.write(h.data(), std::streamsize(h.size()));
        for (const auto& c : payload_tensors)
            out.write(reinterpret_cast<const char*>(c.data_ptr<float>()), std::streamsize(c.numel() * sizeof(float)));
        for (const auto& [name, blob] : ckpt.blobs) out.write(blob.data(), std::streamsize(blob.size()));
        if (!out) throw IoError("checkpoint write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint read(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError(path.string() + " is not a checkpoint");
    const auto version = get<std::uint32_t>(in);
    if (version != Checkpoint::kVersion)
        throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    const auto header_len = get<std::uint64_t>(in);
    std::string h(header_len, '\0');
    in.read(h.data(), std::streamsize(header_len));
    if (!in) throw IoError(path.string() + ": truncated header");
    const json header = json::parse(h);
    const std::streamoff payload_start = in.tellg();

    Checkpoint ckpt;
    ckpt.meta = header.at("meta");
    for (const auto& e : header.at("tensors")) {
        const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
        torch::Tensor t = torch::empty(shape, torch::kFloat32);
        const auto nbytes = e.at("nbytes").get<std::uint64_t>();
        if (nbytes != std::uint64_t(t.numel()) * sizeof(float)) throw IoError(path.string() + ": inconsistent tensor size");
        in.seekg(payload_start + std::streamoff(e.at("offset").get<std::uint64_t>()));
        in.read(reinterpret_cast<char*>(t.data_ptr<float>()), std::streamsize(nbytes));
        if (!in) throw IoError(path.string() + ": truncated tensor " + e.at("name").get<std::string>());
        ckpt.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
    for (const auto& e : header.at("blobs")) {
        std::string blob(e.at("nbytes").get<std::uint64_t>(), '\0');
        in.seekg(payload_start + std::streamoff(e.at("offset").get<std::uint64_t>()));
        in.read(blob.data(), std::streamsize(blob.size()));
        if (!in) throw IoError(path.string() + ": truncated blob " + e.at("name").get<std::string>());
        ckpt.blobs.emplace(e.at("name").get<std::string>(), std::move(blob));
    }
    return ckpt;
}

void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module) {
    for (const auto& p : module.named_parameters(true)) ckpt.tensors[prefix + p.key()] = p.value().detach().clone();
    for (const auto& b : module.named_buffers(true)) ckpt.tensors[prefix + b.key()] = b.value().detach().clone();
}

void load_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    auto assign = [&](const std::string& name, torch::Tensor& dst) {
        auto it = ckpt.tensors.find(prefix + name);
        if (it == ckpt.tensors.end()) throw IoError("checkpoint lacks tensor '" + prefix + name + "'");
        if (it->second.sizes() != dst.sizes()) throw IoError("checkpoint tensor '" + prefix + name + "' has wrong shape");
        dst.copy_(it->second);
    };
    for (auto& p : module.named_parameters(true)) assign(p.key(), p.value());
    for (auto& b : module.named_buffers(true)) assign(b.key(), b.value());
}

}  // namespace stainlab::ckpt
