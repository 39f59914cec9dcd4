#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace relcot {

/// FNV-1a over raw bytes; cheap, stable, good enough for change detection.
std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

/// Hex digest of a file's contents. Throws when the file cannot be read.
std::string file_digest(const std::string& path);

/// Reproducibility sidecar a command writes next to its outputs: what ran,
/// with which seed and config, over which inputs. Deliberately carries no
/// timestamps so reruns produce identical manifests.
struct Manifest {
    std::string command;
    std::uint64_t seed = 0;
    std::string config_json;                    // command config, serialized
    std::map<std::string, std::string> inputs;  // path -> content digest

    std::string to_json() const;
    static Manifest from_json(const std::string& text);

    bool operator==(const Manifest&) const = default;
};

void write_manifest(const Manifest& manifest, const std::string& path);
Manifest load_manifest(const std::string& path);

}  // namespace relcot
