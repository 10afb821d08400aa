#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace endoshift {

inline constexpr std::string_view kToolName = "endoshift";
inline constexpr std::string_view kToolVersion = "0.1.0";

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

struct Provenance {
    std::string tool_version;
    /// SHA-256 over the canonical config text followed by the reference
    /// image bytes (when there is one); 64 lowercase hex characters.
    std::string config_hash;
    std::string reference_hash;

    /// "endoshift 0.1.0 sha256:<config_hash>"
    std::string stamp() const;
    /// Key/value form used for PNG text chunks and manifest headers.
    std::map<std::string, std::string> fields() const;
};

Provenance version_stamp(std::string_view canonical_config, const std::filesystem::path& reference = {});

} // namespace endoshift
