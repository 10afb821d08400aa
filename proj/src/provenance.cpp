#include "endoshift/provenance.hpp"

#include <fstream>
#include <iterator>
#include <memory>
#include <vector>

#include <openssl/evp.h>

#include "endoshift/error.hpp"

namespace endoshift {

namespace {

struct DigestCtx {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

    DigestCtx()
    {
        if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
            throw Error("sha256 initialisation failed");
    }
    void update(const void* data, std::size_t n)
    {
        if (n && EVP_DigestUpdate(ctx.get(), data, n) != 1)
            throw Error("sha256 update failed");
    }
    std::string hex()
    {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
            throw Error("sha256 finalisation failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 0xF]);
        }
        return out;
    }
};

std::vector<char> read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

std::string sha256_hex(std::span<const unsigned char> bytes)
{
    DigestCtx d;
    d.update(bytes.data(), bytes.size());
    return d.hex();
}

std::string sha256_hex(std::string_view text)
{
    DigestCtx d;
    d.update(text.data(), text.size());
    return d.hex();
}

std::string sha256_file(const std::filesystem::path& path)
{
    const auto bytes = read_bytes(path);
    DigestCtx d;
    d.update(bytes.data(), bytes.size());
    return d.hex();
}

std::string Provenance::stamp() const
{
    return std::string(kToolName) + " " + tool_version + " sha256:" + config_hash;
}

std::map<std::string, std::string> Provenance::fields() const
{
    std::map<std::string, std::string> f{{"tool_version", tool_version}, {"config_sha256", config_hash},
                                         {"provenance", stamp()}};
    if (!reference_hash.empty())
        f["reference_sha256"] = reference_hash;
    return f;
}

Provenance version_stamp(std::string_view canonical_config, const std::filesystem::path& reference)
{
    Provenance p;
    p.tool_version = std::string(kToolVersion);
    DigestCtx d;
    d.update(canonical_config.data(), canonical_config.size());
    if (!reference.empty()) {
        const auto bytes = read_bytes(reference);
        d.update(bytes.data(), bytes.size());
        p.reference_hash = sha256_hex(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
    }
    p.config_hash = d.hex();
    return p;
}

} // namespace endoshift
