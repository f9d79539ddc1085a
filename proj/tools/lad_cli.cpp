#include <CLI11.hpp>

#include "lad/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Self-knowledge distillation for learning label ambiguity distributions"};
    app.require_subcommand(1);

    lad::cli::GenerateArgs gen;
    uint64_t seed_flag = 0;
    auto* generate = app.add_subcommand("generate", "Generate a synthetic corpus");
    generate->add_option("--config", gen.config_path, "Run config JSON (defaults used when omitted)");
    generate->add_option("--out", gen.out_dir, "Output data directory")->required();
    auto* gen_seed = generate->add_option("--seed", seed_flag, "Override the config seed");

    lad::cli::TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train one method and write a run directory");
    train_cmd->add_option("--method", train.method, "lad | lad-rc | ord | ls | mc | ts | ldl")->required();
    train_cmd->add_option("--config", train.config_path, "Run config JSON");
    train_cmd->add_option("--data", train.data_dir, "Data directory from generate")->required();
    train_cmd->add_option("--out", train.out_root, "Output root (overrides config and LAD_OUTPUT_ROOT)");
    auto* train_seed = train_cmd->add_option("--seed", seed_flag, "Override the config seed");
    train_cmd->add_flag("--quiet", train.quiet, "Suppress progress output");

    lad::cli::EvaluateArgs eval;
    auto* eval_cmd = app.add_subcommand("evaluate", "Re-evaluate a run's final checkpoint");
    eval_cmd->add_option("--run", eval.run_dir, "Run directory")->required();
    eval_cmd->add_option("--data", eval.data_dir, "Data directory")->required();

    lad::cli::CompareArgs cmp;
    auto* cmp_cmd = app.add_subcommand("compare", "Assemble a comparison table from run directories");
    cmp_cmd->add_option("dirs", cmp.run_dirs, "Run directories")->required();
    cmp_cmd->add_option("--out", cmp.out_prefix, "Write <prefix>.txt and <prefix>.csv");

    CLI11_PARSE(app, argc, argv);

    if (generate->parsed()) {
        if (gen_seed->count()) gen.seed = seed_flag;
        return lad::cli::cmd_generate(gen);
    }
    if (train_cmd->parsed()) {
        if (train_seed->count()) train.seed = seed_flag;
        return lad::cli::cmd_train(train);
    }
    if (eval_cmd->parsed()) return lad::cli::cmd_evaluate(eval);
    if (cmp_cmd->parsed()) return lad::cli::cmd_compare(cmp);
    return 1;
}
