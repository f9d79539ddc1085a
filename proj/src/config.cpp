#include "lad/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lad {

using nlohmann::json;

namespace {

// Applies known keys and rejects unknown ones so typos fail loudly.
class Section {
public:
    Section(const json& j, std::string name) : name_(std::move(name)) {
        if (!j.is_object()) throw std::invalid_argument("config: section '" + name_ + "' must be an object");
        obj_ = &j;
    }

    template <class T>
    void get(const char* key, T& out) {
        known_.insert(key);
        if (obj_->contains(key)) {
            try {
                out = obj_->at(key).get<T>();
            } catch (const json::exception&) {
                throw std::invalid_argument("config: bad value for field '" + name_ + "." + key + "'");
            }
        }
    }

    void finish() const {
        for (const auto& [key, _] : obj_->items())
            if (!known_.count(key))
                throw std::invalid_argument("config: unknown field '" + name_ + "." + key + "'");
    }

private:
    const json* obj_;
    std::string name_;
    std::set<std::string> known_;
};

}  // namespace

void RunConfig::resolve() {
    corpus.seed = seed;
    encoder.seed = seed;
    // encoder dims follow the corpus unless explicitly overridden
    if (encoder.vocab_size == 0) encoder.vocab_size = corpus.vocab_size;
    if (encoder.num_classes == 0) encoder.num_classes = corpus.num_classes;
    if (encoder.max_sequence_length == 0) encoder.max_sequence_length = corpus.sequence_length;
    corpus.validate();
    encoder.validate();
    warmup.validate();
    distill.validate();
    if (encoder.vocab_size < corpus.vocab_size)
        throw std::invalid_argument("config: encoder.vocab_size smaller than corpus.vocab_size");
    if (encoder.num_classes != corpus.num_classes)
        throw std::invalid_argument("config: encoder.num_classes must match corpus.num_classes");
    if (encoder.max_sequence_length < corpus.sequence_length)
        throw std::invalid_argument("config: encoder.max_sequence_length below corpus.sequence_length");
    if (baseline.ls_alpha <= 0.0 || baseline.ls_alpha >= 1.0)
        throw std::invalid_argument("config: baseline.ls_alpha must be in (0,1)");
    if (baseline.mc_passes < 1)
        throw std::invalid_argument("config: baseline.mc_passes must be >= 1");
    baseline.ts_grid.values();  // validates the grid
}

RunConfig default_run_config() {
    RunConfig cfg;
    // encoder dims derived from the corpus during resolve()
    cfg.encoder.vocab_size = 0;
    cfg.encoder.num_classes = 0;
    cfg.encoder.max_sequence_length = 0;
    cfg.resolve();
    return cfg;
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

    RunConfig cfg;
    cfg.encoder.vocab_size = 0;
    cfg.encoder.num_classes = 0;
    cfg.encoder.max_sequence_length = 0;

    std::set<std::string> known{"corpus", "encoder", "warmup",   "distill",
                                "baseline", "optimizer", "seed", "output_dir"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw std::invalid_argument("config: unknown field '" + key + "'");

    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            throw std::invalid_argument("config: bad value for field 'seed'");
        cfg.seed = j.at("seed").get<uint64_t>();
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string())
            throw std::invalid_argument("config: bad value for field 'output_dir'");
        cfg.output_dir = j.at("output_dir").get<std::string>();
    }

    if (j.contains("corpus")) {
        Section s(j.at("corpus"), "corpus");
        s.get("num_classes", cfg.corpus.num_classes);
        s.get("vocab_size", cfg.corpus.vocab_size);
        s.get("sequence_length", cfg.corpus.sequence_length);
        s.get("train_size", cfg.corpus.train_size);
        s.get("validation_size", cfg.corpus.validation_size);
        s.get("eval_size", cfg.corpus.eval_size);
        s.get("ambiguous_fraction", cfg.corpus.ambiguous_fraction);
        s.get("annotators_per_sample", cfg.corpus.annotators_per_sample);
        s.get("mixing_concentration", cfg.corpus.mixing_concentration);
        s.finish();
    }
    if (j.contains("encoder")) {
        Section s(j.at("encoder"), "encoder");
        s.get("vocab_size", cfg.encoder.vocab_size);
        s.get("max_sequence_length", cfg.encoder.max_sequence_length);
        s.get("num_layers", cfg.encoder.num_layers);
        s.get("hidden_dim", cfg.encoder.hidden_dim);
        s.get("num_heads", cfg.encoder.num_heads);
        s.get("ffn_dim", cfg.encoder.ffn_dim);
        s.get("dropout_rate", cfg.encoder.dropout_rate);
        s.get("num_classes", cfg.encoder.num_classes);
        s.finish();
    }
    if (j.contains("warmup")) {
        Section s(j.at("warmup"), "warmup");
        s.get("max_warmup_epochs", cfg.warmup.max_warmup_epochs);
        s.get("ambiguous_fraction", cfg.warmup.ambiguous_fraction);
        s.get("batch_size", cfg.warmup.batch_size);
        s.get("learning_rate", cfg.warmup.learning_rate);
        s.get("freeze_backbone", cfg.warmup.freeze_backbone);
        s.finish();
    }
    if (j.contains("distill")) {
        Section s(j.at("distill"), "distill");
        s.get("lambda", cfg.distill.lambda);
        s.get("epochs", cfg.distill.epochs);
        s.get("batch_size", cfg.distill.batch_size);
        s.get("learning_rate", cfg.distill.learning_rate);
        s.get("recalibration_epochs", cfg.distill.recalibration_epochs);
        s.finish();
    }
    if (j.contains("baseline")) {
        Section s(j.at("baseline"), "baseline");
        s.get("ls_alpha", cfg.baseline.ls_alpha);
        s.get("mc_passes", cfg.baseline.mc_passes);
        s.get("ts_grid_min", cfg.baseline.ts_grid.min);
        s.get("ts_grid_max", cfg.baseline.ts_grid.max);
        s.get("ts_grid_step", cfg.baseline.ts_grid.step);
        s.get("epochs", cfg.baseline.hyper.epochs);
        s.get("batch_size", cfg.baseline.hyper.batch_size);
        s.get("learning_rate", cfg.baseline.hyper.learning_rate);
        s.finish();
    }
    if (j.contains("optimizer")) {
        Section s(j.at("optimizer"), "optimizer");
        s.get("weight_decay", cfg.optimizer.weight_decay);
        s.get("beta1", cfg.optimizer.beta1);
        s.get("beta2", cfg.optimizer.beta2);
        s.get("epsilon", cfg.optimizer.epsilon);
        s.finish();
    }
    cfg.baseline.hyper.optimizer = cfg.optimizer;
    cfg.resolve();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["corpus"] = {{"num_classes", corpus.num_classes},
                   {"vocab_size", corpus.vocab_size},
                   {"sequence_length", corpus.sequence_length},
                   {"train_size", corpus.train_size},
                   {"validation_size", corpus.validation_size},
                   {"eval_size", corpus.eval_size},
                   {"ambiguous_fraction", corpus.ambiguous_fraction},
                   {"annotators_per_sample", corpus.annotators_per_sample},
                   {"mixing_concentration", corpus.mixing_concentration},
                   {"seed", corpus.seed}};
    j["encoder"] = {{"vocab_size", encoder.vocab_size},
                    {"max_sequence_length", encoder.max_sequence_length},
                    {"num_layers", encoder.num_layers},
                    {"hidden_dim", encoder.hidden_dim},
                    {"num_heads", encoder.num_heads},
                    {"ffn_dim", encoder.ffn_dim},
                    {"dropout_rate", encoder.dropout_rate},
                    {"num_classes", encoder.num_classes},
                    {"seed", encoder.seed}};
    j["warmup"] = {{"max_warmup_epochs", warmup.max_warmup_epochs},
                   {"ambiguous_fraction", warmup.ambiguous_fraction},
                   {"batch_size", warmup.batch_size},
                   {"learning_rate", warmup.learning_rate},
                   {"freeze_backbone", warmup.freeze_backbone}};
    j["distill"] = {{"lambda", distill.lambda},
                    {"epochs", distill.epochs},
                    {"batch_size", distill.batch_size},
                    {"learning_rate", distill.learning_rate},
                    {"recalibration_epochs", distill.recalibration_epochs}};
    j["baseline"] = {{"ls_alpha", baseline.ls_alpha},
                     {"mc_passes", baseline.mc_passes},
                     {"ts_grid_min", baseline.ts_grid.min},
                     {"ts_grid_max", baseline.ts_grid.max},
                     {"ts_grid_step", baseline.ts_grid.step},
                     {"epochs", baseline.hyper.epochs},
                     {"batch_size", baseline.hyper.batch_size},
                     {"learning_rate", baseline.hyper.learning_rate}};
    j["optimizer"] = {{"weight_decay", optimizer.weight_decay},
                      {"beta1", optimizer.beta1},
                      {"beta2", optimizer.beta2},
                      {"epsilon", optimizer.epsilon}};
    return j.dump(2) + "\n";
}

}  // namespace lad
