#include "lad/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lad/params.hpp"

namespace lad {

namespace fs = std::filesystem;
using nlohmann::json;

void CorpusConfig::validate() const {
    if (num_classes < 2) throw std::invalid_argument("CorpusConfig: num_classes must be >= 2");
    if (vocab_size < num_classes)
        throw std::invalid_argument("CorpusConfig: vocab too small for " + std::to_string(num_classes) +
                                    " class prototypes");
    if (sequence_length < 1) throw std::invalid_argument("CorpusConfig: sequence_length must be >= 1");
    if (train_size < 1 || validation_size < 1 || eval_size < 1)
        throw std::invalid_argument("CorpusConfig: split sizes must be >= 1");
    if (ambiguous_fraction < 0.0 || ambiguous_fraction > 1.0)
        throw std::invalid_argument("CorpusConfig: ambiguous_fraction must be in [0,1]");
    if (annotators_per_sample < 1)
        throw std::invalid_argument("CorpusConfig: annotators_per_sample must be >= 1");
    if (mixing_concentration <= 0.0)
        throw std::invalid_argument("CorpusConfig: mixing_concentration must be > 0");
}

bool Split::all_have_distributions() const {
    for (const auto& s : samples)
        if (!s.has_distribution()) return false;
    return true;
}

int argmax_lowest(const std::vector<Real>& v) {
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
}

namespace {

// cumulative distribution for fast inverse-CDF sampling
std::vector<Real> cumulative(const std::vector<Real>& p) {
    std::vector<Real> c(p.size());
    Real acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        c[i] = acc;
    }
    c.back() = 1.0;
    return c;
}

int sample_index(const std::vector<Real>& cum, Rng& rng) {
    const Real u = rng.uniform();
    for (size_t i = 0; i < cum.size(); ++i)
        if (u < cum[i]) return static_cast<int>(i);
    return static_cast<int>(cum.size()) - 1;
}

struct Prototypes {
    std::vector<std::vector<Real>> token_dist;  // per class, over vocab
    std::vector<std::vector<Real>> cum;
};

// Each class owns a contiguous token block holding 90% of its mass; the
// remaining 10% is spread over the whole vocabulary so classes share tokens.
Prototypes build_prototypes(const CorpusConfig& cfg) {
    Prototypes proto;
    const int v = cfg.vocab_size, c = cfg.num_classes;
    const int block = v / c;
    const Real shared = 0.1 / static_cast<Real>(v);
    for (int cls = 0; cls < c; ++cls) {
        std::vector<Real> p(static_cast<size_t>(v), shared);
        const int lo = cls * block;
        const int hi = (cls == c - 1) ? v : lo + block;
        const Real in_block = 0.9 / static_cast<Real>(hi - lo);
        for (int t = lo; t < hi; ++t) p[static_cast<size_t>(t)] += in_block;
        proto.token_dist.push_back(p);
        proto.cum.push_back(cumulative(p));
    }
    return proto;
}

Sample make_sample(int64_t id, const CorpusConfig& cfg, const Prototypes& proto, Rng& rng) {
    Sample s;
    s.id = id;
    const int c = cfg.num_classes;
    std::vector<Real> posterior(static_cast<size_t>(c), 0.0);
    s.ambiguous = rng.uniform() < cfg.ambiguous_fraction;
    if (s.ambiguous) {
        // two-class mixture, weight away from the extremes
        const int c1 = static_cast<int>(rng.integer(static_cast<uint64_t>(c)));
        int c2 = static_cast<int>(rng.integer(static_cast<uint64_t>(c - 1)));
        if (c2 >= c1) ++c2;
        const Real w = rng.uniform(0.3, 0.7);
        posterior[static_cast<size_t>(c1)] = w;
        posterior[static_cast<size_t>(c2)] = 1.0 - w;
        s.tokens.reserve(static_cast<size_t>(cfg.sequence_length));
        for (int t = 0; t < cfg.sequence_length; ++t) {
            const int src = rng.uniform() < w ? c1 : c2;
            s.tokens.push_back(sample_index(proto.cum[static_cast<size_t>(src)], rng));
        }
    } else {
        const int cls = static_cast<int>(rng.integer(static_cast<uint64_t>(c)));
        const Real peak = std::exp(cfg.mixing_concentration);
        const Real denom = peak + static_cast<Real>(c - 1);
        for (int j = 0; j < c; ++j)
            posterior[static_cast<size_t>(j)] = (j == cls ? peak : 1.0) / denom;
        s.tokens.reserve(static_cast<size_t>(cfg.sequence_length));
        for (int t = 0; t < cfg.sequence_length; ++t)
            s.tokens.push_back(sample_index(proto.cum[static_cast<size_t>(cls)], rng));
    }
    // simulated annotators vote by the class posterior
    const auto cum_post = cumulative(posterior);
    std::vector<int> votes(static_cast<size_t>(c), 0);
    for (int a = 0; a < cfg.annotators_per_sample; ++a)
        ++votes[static_cast<size_t>(sample_index(cum_post, rng))];
    s.gold_distribution.resize(static_cast<size_t>(c));
    for (int j = 0; j < c; ++j)
        s.gold_distribution[static_cast<size_t>(j)] =
            static_cast<Real>(votes[static_cast<size_t>(j)]) / static_cast<Real>(cfg.annotators_per_sample);
    s.gold_label = argmax_lowest(s.gold_distribution);
    return s;
}

}  // namespace

DatasetBundle generate_corpus(const CorpusConfig& cfg) {
    cfg.validate();
    DatasetBundle bundle;
    bundle.config = cfg;
    Rng rng(cfg.seed);
    const Prototypes proto = build_prototypes(cfg);
    int64_t next_id = 0;
    auto fill = [&](Split& split, int n) {
        split.samples.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) split.samples.push_back(make_sample(next_id++, cfg, proto, rng));
    };
    fill(bundle.train, cfg.train_size);
    fill(bundle.validation, cfg.validation_size);
    fill(bundle.eval, cfg.eval_size);
    return bundle;
}

// ---------------------------------------------------------------------------
// file format
// ---------------------------------------------------------------------------

void write_dataset(const Split& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
    char buf[32];
    for (const auto& s : split.samples) {
        out << s.id << '\t';
        for (size_t i = 0; i < s.tokens.size(); ++i) {
            if (i) out << ' ';
            out << s.tokens[i];
        }
        out << '\t' << s.gold_label;
        if (s.has_distribution()) {
            out << '\t';
            for (size_t i = 0; i < s.gold_distribution.size(); ++i) {
                if (i) out << ' ';
                std::snprintf(buf, sizeof(buf), "%.6f", s.gold_distribution[i]);
                out << buf;
            }
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write_dataset: write failed for " + path);
}

Split read_dataset(const std::string& path, bool require_distribution) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_dataset: cannot open " + path);
    Split split;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            const size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 3 || fields.size() > 4) fail("expected 3 or 4 tab-separated fields");
        Sample s;
        try {
            s.id = std::stoll(fields[0]);
        } catch (...) {
            fail("bad id field");
        }
        std::istringstream toks(fields[1]);
        int t;
        while (toks >> t) {
            if (t < 0) fail("negative token id");
            s.tokens.push_back(t);
        }
        if (s.tokens.empty()) fail("empty token list");
        try {
            s.gold_label = std::stoi(fields[2]);
        } catch (...) {
            fail("bad gold label field");
        }
        if (s.gold_label < 0) fail("negative gold label");
        if (fields.size() == 4) {
            std::istringstream ds(fields[3]);
            Real v;
            while (ds >> v) s.gold_distribution.push_back(v);
            if (s.gold_distribution.empty()) fail("empty gold_distribution field");
            Real sum = 0.0;
            for (Real p : s.gold_distribution) {
                if (p < 0.0) fail("gold_distribution has a negative entry");
                sum += p;
            }
            if (std::fabs(sum - 1.0) > 1e-3)
                fail("gold_distribution fails simplex check (sum " + std::to_string(sum) + ")");
            if (s.gold_label >= static_cast<int>(s.gold_distribution.size()))
                fail("gold label outside gold_distribution range");
        } else if (require_distribution) {
            fail("record missing gold distribution");
        }
        split.samples.push_back(std::move(s));
    }
    return split;
}

uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_checksum: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    return fnv1a64(bytes.data(), bytes.size());
}

std::string checksum_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

static json corpus_to_json(const CorpusConfig& c) {
    return json{{"num_classes", c.num_classes},
                {"vocab_size", c.vocab_size},
                {"sequence_length", c.sequence_length},
                {"train_size", c.train_size},
                {"validation_size", c.validation_size},
                {"eval_size", c.eval_size},
                {"ambiguous_fraction", c.ambiguous_fraction},
                {"annotators_per_sample", c.annotators_per_sample},
                {"mixing_concentration", c.mixing_concentration},
                {"seed", c.seed}};
}

static CorpusConfig corpus_from_json(const json& j) {
    CorpusConfig c;
    c.num_classes = j.at("num_classes").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.sequence_length = j.at("sequence_length").get<int>();
    c.train_size = j.at("train_size").get<int>();
    c.validation_size = j.at("validation_size").get<int>();
    c.eval_size = j.at("eval_size").get<int>();
    c.ambiguous_fraction = j.at("ambiguous_fraction").get<Real>();
    c.annotators_per_sample = j.at("annotators_per_sample").get<int>();
    c.mixing_concentration = j.at("mixing_concentration").get<Real>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

void write_manifest(const DatasetBundle& bundle, const std::string& dir) {
    json j;
    j["config"] = corpus_to_json(bundle.config);
    j["splits"] = {
        {"train", {{"file", "train.tsv"}, {"count", bundle.train.size()},
                   {"checksum", checksum_hex(file_checksum(dir + "/train.tsv"))}}},
        {"validation", {{"file", "validation.tsv"}, {"count", bundle.validation.size()},
                        {"checksum", checksum_hex(file_checksum(dir + "/validation.tsv"))}}},
        {"eval", {{"file", "eval.tsv"}, {"count", bundle.eval.size()},
                  {"checksum", checksum_hex(file_checksum(dir + "/eval.tsv"))}}}};
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw std::runtime_error("write_manifest: cannot open " + dir + "/manifest.json");
    out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("read_manifest: cannot open " + dir + "/manifest.json");
    json j = json::parse(in);
    Manifest m;
    m.config = corpus_from_json(j.at("config"));
    m.train_checksum = j.at("splits").at("train").at("checksum").get<std::string>();
    m.validation_checksum = j.at("splits").at("validation").at("checksum").get<std::string>();
    m.eval_checksum = j.at("splits").at("eval").at("checksum").get<std::string>();
    return m;
}

void write_bundle(const DatasetBundle& bundle, const std::string& dir) {
    fs::create_directories(dir);
    write_dataset(bundle.train, dir + "/train.tsv");
    write_dataset(bundle.validation, dir + "/validation.tsv");
    write_dataset(bundle.eval, dir + "/eval.tsv");
    write_manifest(bundle, dir);
}

DatasetBundle read_bundle(const std::string& dir) {
    const Manifest m = read_manifest(dir);
    DatasetBundle bundle;
    bundle.config = m.config;
    bundle.train = read_dataset(dir + "/train.tsv", false);
    bundle.validation = read_dataset(dir + "/validation.tsv", true);
    bundle.eval = read_dataset(dir + "/eval.tsv", true);
    return bundle;
}

}  // namespace lad
