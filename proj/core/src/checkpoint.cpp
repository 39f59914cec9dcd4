#include "relcot/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace relcot::nn {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'C', 'O', 'T', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& values) {
    for (double d : values) write_u64(out, std::bit_cast<std::uint64_t>(d));
}

void read_doubles(std::istream& in, std::vector<double>& values) {
    for (double& d : values) d = std::bit_cast<double>(read_u64(in));
}

json config_to_json(const ToyTransformerConfig& cfg) { return json::parse(cfg.to_json()); }

struct TensorEntry {
    std::string name;
    const Tensor* tensor;
};

json header_tensors(const std::vector<TensorEntry>& entries) {
    json arr = json::array();
    for (const auto& e : entries) {
        json item;
        item["name"] = e.name;
        item["shape"] = e.tensor->shape;
        arr.push_back(item);
    }
    return arr;
}

json adapter_list(const ToyTransformer& model) {
    json arr = json::array();
    for (const auto& [name, lin] : model.projections()) {
        if (!lin->adapter.has_value()) continue;
        json item;
        item["name"] = name;
        item["r"] = lin->adapter->r;
        item["alpha"] = lin->adapter->alpha;
        item["dropout_p"] = lin->adapter->dropout_p;
        arr.push_back(item);
    }
    return arr;
}

void append_adapter_tensors(const ToyTransformer& model, std::vector<TensorEntry>& entries) {
    for (const auto& [name, lin] : model.projections()) {
        if (!lin->adapter.has_value()) continue;
        entries.push_back({name + ".A", &lin->adapter->A});
        entries.push_back({name + ".B", &lin->adapter->B});
    }
}

void write_checkpoint(const std::string& path, const json& header,
                      const std::vector<TensorEntry>& entries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kFormatVersion);
    const std::string header_text = header.dump();
    write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& e : entries) write_doubles(out, e.tensor->data);
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
}

struct ReadCheckpoint {
    json header;
    std::ifstream stream;
};

ReadCheckpoint open_checkpoint(const std::string& path) {
    ReadCheckpoint ck;
    ck.stream.open(path, std::ios::binary);
    if (!ck.stream) throw std::runtime_error("cannot open " + path);
    char magic[8];
    ck.stream.read(magic, sizeof(magic));
    if (!ck.stream || !std::equal(magic, magic + 8, kMagic)) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    const std::uint32_t version = read_u32(ck.stream);
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                                 " in " + path);
    }
    const std::uint64_t header_len = read_u64(ck.stream);
    std::string header_text(header_len, '\0');
    ck.stream.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!ck.stream) throw std::runtime_error("truncated checkpoint header: " + path);
    try {
        ck.header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw std::runtime_error("bad checkpoint header in " + path + ": " + e.what());
    }
    return ck;
}

std::vector<std::size_t> shape_from_json(const json& j) {
    std::vector<std::size_t> shape;
    for (const auto& dim : j) shape.push_back(dim.get<std::size_t>());
    return shape;
}

Tensor read_tensor(std::istream& in, const std::vector<std::size_t>& shape,
                   const std::string& name, const std::string& path) {
    Tensor t = Tensor::zeros(shape);
    read_doubles(in, t.data);
    if (!in) throw std::runtime_error("truncated payload reading \"" + name + "\" from " + path);
    return t;
}

// Every tensor a full-model checkpoint must carry, in write order.
std::vector<TensorEntry> model_tensor_entries(const ToyTransformer& model) {
    std::vector<TensorEntry> entries;
    entries.push_back({"embedding", &model.embedding});
    entries.push_back({"lm_head", &model.lm_head});
    entries.push_back({"final_norm_gain", &model.final_norm_gain});
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const std::string prefix = "layers." + std::to_string(i) + ".";
        entries.push_back({prefix + "attn_norm_gain", &model.layers[i].attn_norm_gain});
        entries.push_back({prefix + "ffn_norm_gain", &model.layers[i].ffn_norm_gain});
    }
    for (const auto& [name, lin] : model.projections()) {
        entries.push_back({name + ".weight", &lin->weight});
    }
    append_adapter_tensors(model, entries);
    return entries;
}

// Zero-filled model with the layout init() would produce, used as the
// loading destination.
ToyTransformer model_skeleton(const ToyTransformerConfig& cfg) {
    ToyTransformer model;
    model.config = cfg;
    const std::size_t d = cfg.d_model;
    const std::size_t f = cfg.d_ff;
    model.embedding = Tensor::zeros({cfg.vocab_size, d});
    model.lm_head = Tensor::zeros({cfg.vocab_size, d});
    model.final_norm_gain = Tensor::zeros({d});
    model.layers.resize(cfg.n_layers);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        TransformerLayer& layer = model.layers[i];
        const std::string prefix = "layers." + std::to_string(i) + ".";
        auto shape_linear = [&prefix](LoraLinear& lin, const char* name, std::size_t out,
                                      std::size_t in) {
            lin.name = prefix + name;
            lin.weight = Tensor::zeros({out, in});
        };
        shape_linear(layer.q_proj, "q_proj", d, d);
        shape_linear(layer.k_proj, "k_proj", d, d);
        shape_linear(layer.v_proj, "v_proj", d, d);
        shape_linear(layer.o_proj, "o_proj", d, d);
        shape_linear(layer.gate_proj, "gate_proj", f, d);
        shape_linear(layer.up_proj, "up_proj", f, d);
        shape_linear(layer.down_proj, "down_proj", d, f);
        layer.attn_norm_gain = Tensor::zeros({d});
        layer.ffn_norm_gain = Tensor::zeros({d});
    }
    return model;
}

struct AdapterSpec {
    std::size_t r = 0;
    double alpha = 0.0;
    double dropout_p = 0.0;
};

std::map<std::string, AdapterSpec> parse_adapter_list(const json& header,
                                                      const std::string& path) {
    std::map<std::string, AdapterSpec> specs;
    if (!header.contains("adapters")) return specs;
    for (const auto& item : header.at("adapters")) {
        AdapterSpec spec;
        spec.r = item.at("r").get<std::size_t>();
        spec.alpha = item.at("alpha").get<double>();
        spec.dropout_p = item.at("dropout_p").get<double>();
        const std::string name = item.at("name").get<std::string>();
        if (!specs.emplace(name, spec).second) {
            throw std::runtime_error("duplicate adapter \"" + name + "\" in " + path);
        }
    }
    return specs;
}

ToyTransformerConfig config_from_header(const json& header, const std::string& path) {
    if (!header.contains("config")) {
        throw std::runtime_error("checkpoint header lacks a config: " + path);
    }
    return ToyTransformerConfig::from_json(header.at("config").dump());
}

}  // namespace

void save_model(const ToyTransformer& model, const std::string& path) {
    json header;
    header["format"] = "model";
    header["config"] = config_to_json(model.config);
    header["adapters"] = adapter_list(model);
    const auto entries = model_tensor_entries(model);
    header["tensors"] = header_tensors(entries);
    write_checkpoint(path, header, entries);
}

ToyTransformer load_model(const std::string& path) {
    ReadCheckpoint ck = open_checkpoint(path);
    if (ck.header.value("format", "") != "model") {
        throw std::runtime_error("not a model checkpoint: " + path);
    }
    const ToyTransformerConfig cfg = config_from_header(ck.header, path);
    ToyTransformer model = model_skeleton(cfg);
    const auto adapter_specs = parse_adapter_list(ck.header, path);

    // Destination lookup by tensor name.
    std::map<std::string, Tensor*> dest;
    dest["embedding"] = &model.embedding;
    dest["lm_head"] = &model.lm_head;
    dest["final_norm_gain"] = &model.final_norm_gain;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const std::string prefix = "layers." + std::to_string(i) + ".";
        dest[prefix + "attn_norm_gain"] = &model.layers[i].attn_norm_gain;
        dest[prefix + "ffn_norm_gain"] = &model.layers[i].ffn_norm_gain;
    }
    for (auto& [name, lin] : model.projections()) {
        dest[name + ".weight"] = &lin->weight;
        auto spec = adapter_specs.find(name);
        if (spec != adapter_specs.end()) {
            LoraAdapter adapter;
            adapter.r = spec->second.r;
            adapter.alpha = spec->second.alpha;
            adapter.dropout_p = spec->second.dropout_p;
            adapter.A = Tensor::zeros({adapter.r, lin->in_features()});
            adapter.B = Tensor::zeros({lin->out_features(), adapter.r});
            lin->adapter = std::move(adapter);
            dest[name + ".A"] = &lin->adapter->A;
            dest[name + ".B"] = &lin->adapter->B;
        }
    }

    std::size_t filled = 0;
    for (const auto& item : ck.header.at("tensors")) {
        const std::string name = item.at("name").get<std::string>();
        const auto shape = shape_from_json(item.at("shape"));
        auto it = dest.find(name);
        if (it == dest.end()) {
            throw std::runtime_error("unexpected tensor \"" + name + "\" in " + path);
        }
        if (it->second->shape != shape) {
            throw std::runtime_error("shape mismatch for \"" + name + "\" in " + path);
        }
        *it->second = read_tensor(ck.stream, shape, name, path);
        ++filled;
    }
    if (filled != dest.size()) {
        throw std::runtime_error("checkpoint " + path + " is missing tensors (" +
                                 std::to_string(filled) + " of " + std::to_string(dest.size()) +
                                 ")");
    }
    return model;
}

void save_adapters(const ToyTransformer& model, const std::string& path) {
    if (!model.any_adapter()) {
        throw std::invalid_argument("model has no adapters to save");
    }
    json header;
    header["format"] = "adapter";
    header["config"] = config_to_json(model.config);
    header["adapters"] = adapter_list(model);
    std::vector<TensorEntry> entries;
    append_adapter_tensors(model, entries);
    header["tensors"] = header_tensors(entries);
    write_checkpoint(path, header, entries);
}

void load_adapters(ToyTransformer& model, const std::string& path) {
    ReadCheckpoint ck = open_checkpoint(path);
    if (ck.header.value("format", "") != "adapter") {
        throw std::runtime_error("not an adapter checkpoint: " + path);
    }
    const ToyTransformerConfig cfg = config_from_header(ck.header, path);
    if (cfg != model.config) {
        throw std::runtime_error("adapter checkpoint " + path +
                                 " was trained for a different model config");
    }
    const auto adapter_specs = parse_adapter_list(ck.header, path);
    if (adapter_specs.empty()) {
        throw std::runtime_error("adapter checkpoint " + path + " lists no adapters");
    }

    std::map<std::string, LoraLinear*> by_name;
    for (auto& [name, lin] : model.projections()) by_name[name] = lin;

    std::map<std::string, Tensor*> dest;
    for (const auto& [name, spec] : adapter_specs) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw std::runtime_error("adapter target \"" + name + "\" does not exist in the model");
        }
        LoraLinear& lin = *it->second;
        if (lin.adapter.has_value() && lin.adapter->r != spec.r) {
            throw std::runtime_error("adapter rank mismatch on \"" + name + "\"");
        }
        LoraAdapter adapter;
        adapter.r = spec.r;
        adapter.alpha = spec.alpha;
        adapter.dropout_p = spec.dropout_p;
        adapter.A = Tensor::zeros({spec.r, lin.in_features()});
        adapter.B = Tensor::zeros({lin.out_features(), spec.r});
        lin.adapter = std::move(adapter);
        dest[name + ".A"] = &lin.adapter->A;
        dest[name + ".B"] = &lin.adapter->B;
    }

    std::size_t filled = 0;
    for (const auto& item : ck.header.at("tensors")) {
        const std::string name = item.at("name").get<std::string>();
        const auto shape = shape_from_json(item.at("shape"));
        auto it = dest.find(name);
        if (it == dest.end()) {
            throw std::runtime_error("unexpected tensor \"" + name + "\" in " + path);
        }
        if (it->second->shape != shape) {
            throw std::runtime_error("shape mismatch for \"" + name + "\" in " + path);
        }
        *it->second = read_tensor(ck.stream, shape, name, path);
        ++filled;
    }
    if (filled != dest.size()) {
        throw std::runtime_error("checkpoint " + path + " is missing tensors (" +
                                 std::to_string(filled) + " of " + std::to_string(dest.size()) +
                                 ")");
    }
}

}  // namespace relcot::nn
