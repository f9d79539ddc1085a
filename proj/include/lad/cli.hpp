#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lad/config.hpp"
#include "lad/metrics.hpp"

namespace lad::cli {

// Library entry points behind the lad binary's subcommands. Each returns a
// process exit code and reports errors on stderr.

struct GenerateArgs {
    std::string config_path;  // empty = built-in defaults
    std::string out_dir;      // data directory to create
    std::optional<uint64_t> seed;
};
int cmd_generate(const GenerateArgs& args);

struct TrainArgs {
    std::string method;       // lad | lad-rc | ord | ls | mc | ts | ldl
    std::string config_path;  // empty = built-in defaults
    std::string data_dir;
    std::string out_root;     // empty = config output_dir (LAD_OUTPUT_ROOT overrides)
    std::optional<uint64_t> seed;
    bool quiet = false;
};
int cmd_train(const TrainArgs& args);
// Resolved run directory for a train invocation: <root>/<method>-seed<seed>
std::string train_run_dir(const TrainArgs& args);

struct EvaluateArgs {
    std::string run_dir;
    std::string data_dir;
};
int cmd_evaluate(const EvaluateArgs& args);

struct CompareArgs {
    std::vector<std::string> run_dirs;
    std::string out_prefix;  // writes <prefix>.txt and <prefix>.csv when set
};
int cmd_compare(const CompareArgs& args);

// Aligned comparison table with best-per-column markers; throws on eval
// checksum mismatch.
std::string comparison_table(const std::vector<MetricsReport>& reports);
std::string comparison_csv(const std::vector<MetricsReport>& reports);

const std::vector<std::string>& valid_methods();

}  // namespace lad::cli
