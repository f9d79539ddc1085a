#include "lad/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace lad {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'A', 'D', 'M', 'O', 'D', 'L', '1'};

void write_u64(std::ofstream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_u8(std::ofstream& out, uint8_t v) { out.write(reinterpret_cast<const char*>(&v), 1); }

void write_string(std::ofstream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_tensor(std::ofstream& out, const Tensor& t) {
    write_u64(out, t.shape.size());
    for (int64_t d : t.shape) write_u64(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(Real)));
}

uint64_t read_u64(std::ifstream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

uint8_t read_u8(std::ifstream& in) {
    uint8_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 1);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

std::string read_string(std::ifstream& in) {
    const uint64_t n = read_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

Tensor read_tensor(std::ifstream& in) {
    const uint64_t ndim = read_u64(in);
    std::vector<int64_t> shape(ndim);
    for (uint64_t i = 0; i < ndim; ++i) shape[i] = static_cast<int64_t>(read_u64(in));
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(Real)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
    return t;
}

}  // namespace

std::string encoder_config_to_json(const EncoderConfig& c) {
    json j{{"vocab_size", c.vocab_size},
           {"max_sequence_length", c.max_sequence_length},
           {"num_layers", c.num_layers},
           {"hidden_dim", c.hidden_dim},
           {"num_heads", c.num_heads},
           {"ffn_dim", c.ffn_dim},
           {"dropout_rate", c.dropout_rate},
           {"num_classes", c.num_classes},
           {"seed", c.seed}};
    return j.dump();
}

EncoderConfig encoder_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_sequence_length = j.at("max_sequence_length").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<Real>();
    c.num_classes = j.at("num_classes").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

void save_checkpoint(const LayeredModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    write_string(out, encoder_config_to_json(model.config()));

    const ParameterSet& params = model.params();
    write_u64(out, params.names().size());
    for (const auto& name : params.names()) {
        write_string(out, name);
        write_string(out, params.group(name));
        write_u8(out, params.trainable(name) ? 1 : 0);
        write_tensor(out, params.value(name));
    }

    const WeightSnapshot& snap = model.init_snapshot();
    write_u64(out, snap.tensors.size());
    for (const auto& [name, tensor] : snap.tensors) {
        write_string(out, name);
        write_tensor(out, tensor);
    }
    write_u64(out, snap.init_seed);
    write_string(out, snap.init_rng_state);
    write_string(out, model.dropout_rng().state());
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

LayeredModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("load_checkpoint: not a model checkpoint: " + path);
    const EncoderConfig cfg = encoder_config_from_json(read_string(in));
    LayeredModel model(cfg);

    const uint64_t n_params = read_u64(in);
    if (n_params != model.params().names().size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch");
    for (uint64_t i = 0; i < n_params; ++i) {
        const std::string name = read_string(in);
        const std::string group = read_string(in);
        const bool trainable = read_u8(in) != 0;
        Tensor t = read_tensor(in);
        if (!model.params().has(name))
            throw std::runtime_error("load_checkpoint: unknown parameter " + name);
        if (model.params().group(name) != group)
            throw std::runtime_error("load_checkpoint: group mismatch for " + name);
        if (!model.params().value(name).same_shape(t))
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        model.params().value(name).data = std::move(t.data);
        model.params().set_trainable(name, trainable);
    }

    WeightSnapshot snap;
    const uint64_t n_snap = read_u64(in);
    snap.tensors.reserve(n_snap);
    for (uint64_t i = 0; i < n_snap; ++i) {
        std::string name = read_string(in);
        snap.tensors.emplace_back(std::move(name), read_tensor(in));
    }
    snap.init_seed = read_u64(in);
    snap.init_rng_state = read_string(in);
    model.set_init_snapshot(std::move(snap));
    model.dropout_rng().set_state(read_string(in));
    return model;
}

}  // namespace lad
