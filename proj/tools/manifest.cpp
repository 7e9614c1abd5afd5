#include "manifest.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

#ifndef SIMECK_LAB_VERSION
#define SIMECK_LAB_VERSION "dev"
#endif

namespace simeck::cli {

std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string() + " for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 init failed");
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0)
            EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream o;
    for (unsigned i = 0; i < len; ++i)
        o << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return o.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& text)
{
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out)
            throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Manifest::Manifest(std::vector<std::string> argv, std::string command)
    : argv_(std::move(argv)), command_(std::move(command))
{
}

nlohmann::json Manifest::finish() const
{
    auto files = [](const std::vector<std::filesystem::path>& ps) {
        auto a = nlohmann::json::array();
        for (const auto& p : ps)
            a.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
        return a;
    };
    nlohmann::json j;
    j["command"] = command_;
    j["argv"] = argv_;
    j["config"] = config_;
    j["seeds"] = seeds_;
    j["inputs"] = files(inputs_);
    j["outputs"] = files(outputs_);
    j["tool_version"] = SIMECK_LAB_VERSION;
    j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return j;
}

void Manifest::write(const std::filesystem::path& path) const
{
    write_atomic(path, finish().dump(2) + "\n");
}

}  // namespace simeck::cli
