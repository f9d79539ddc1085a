#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lad/rng.hpp"
#include "lad/tensor.hpp"

namespace lad {

struct CorpusConfig {
    int num_classes = 3;
    int vocab_size = 500;
    int sequence_length = 24;
    int train_size = 2000;
    int validation_size = 500;
    int eval_size = 500;
    Real ambiguous_fraction = 0.3;
    int annotators_per_sample = 100;
    Real mixing_concentration = 8.0;  // how peaked unambiguous gold distributions are
    uint64_t seed = 1;

    void validate() const;
};

struct Sample {
    int64_t id = 0;
    std::vector<int> tokens;
    int gold_label = 0;
    std::vector<Real> gold_distribution;  // empty = absent
    bool ambiguous = false;               // generation metadata, not serialized

    bool has_distribution() const { return !gold_distribution.empty(); }
};

struct Split {
    std::vector<Sample> samples;

    size_t size() const { return samples.size(); }
    bool all_have_distributions() const;
};

struct DatasetBundle {
    CorpusConfig config;
    Split train;
    Split validation;
    Split eval;
};

// Synthetic token-classification corpus. Each class owns a token-unigram
// prototype; ambiguous samples mix two prototypes with weight w ~ U(0.3,0.7)
// and the gold distribution is the empirical histogram of simulated
// annotators who each label by the sample's class posterior. The gold label
// is the distribution argmax (lowest index on ties).
DatasetBundle generate_corpus(const CorpusConfig& cfg);

// Line-delimited dataset file: id, tokens, gold label, optional gold
// distribution at 6-decimal precision, tab-separated.
void write_dataset(const Split& split, const std::string& path);
Split read_dataset(const std::string& path, bool require_distribution);

// Manifest with config, seed and per-split file checksums.
void write_manifest(const DatasetBundle& bundle, const std::string& dir);
struct Manifest {
    CorpusConfig config;
    std::string train_checksum, validation_checksum, eval_checksum;
};
Manifest read_manifest(const std::string& dir);

void write_bundle(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle read_bundle(const std::string& dir);

uint64_t file_checksum(const std::string& path);
std::string checksum_hex(uint64_t h);

int argmax_lowest(const std::vector<Real>& v);

}  // namespace lad
