#pragma once

#include <string>

#include "lad/baselines.hpp"
#include "lad/datagen.hpp"
#include "lad/model.hpp"
#include "lad/pipeline.hpp"

namespace lad {

// Declarative run configuration. Every field has a default; a config file
// overrides them and the resolved result is echoed verbatim into the run
// directory. The top-level seed drives corpus and model seeds unless a
// section pins its own.
struct RunConfig {
    CorpusConfig corpus;
    EncoderConfig encoder;
    WarmupConfig warmup;
    DistillConfig distill;
    BaselineConfig baseline;
    OptimizerHyper optimizer;
    uint64_t seed = 1;
    std::string output_dir = "runs";

    // Propagates the seed and corpus-derived encoder dims, then validates.
    void resolve();
    std::string to_json() const;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::string& path);   // throws naming the offending field
RunConfig parse_run_config(const std::string& text);  // same, from a JSON string

}  // namespace lad
