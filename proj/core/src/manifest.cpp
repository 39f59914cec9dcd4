#include "relcot/manifest.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "relcot/version.hpp"

namespace relcot {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string fnv1a64_hex(std::string_view bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t hash = fnv1a64(bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[hash & 0xF];
        hash >>= 4;
    }
    return out;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return fnv1a64_hex(buffer.str());
}

std::string Manifest::to_json() const {
    json j;
    j["tool_version"] = kVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config_json.empty() ? json::object() : json::parse(config_json);
    j["inputs"] = inputs;
    return j.dump(2);
}

Manifest Manifest::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad manifest JSON: ") + e.what());
    }
    Manifest m;
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_json = j.at("config").dump();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    return m;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << manifest.to_json() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return Manifest::from_json(buffer.str());
}

}  // namespace relcot
