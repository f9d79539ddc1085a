#include "lad/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lad/baselines.hpp"
#include "lad/checkpoint.hpp"
#include "lad/pipeline.hpp"

namespace lad::cli {

namespace fs = std::filesystem;

const std::vector<std::string>& valid_methods() {
    static const std::vector<std::string> methods{"lad", "lad-rc", "ord", "ls", "mc", "ts", "ldl"};
    return methods;
}

namespace {

std::string display_tag(const std::string& method) {
    if (method == "lad") return "LAD";
    if (method == "lad-rc") return "LAD + RC";
    if (method == "ord") return "ORD";
    if (method == "ls") return "LS";
    if (method == "mc") return "MC";
    if (method == "ts") return "TS";
    if (method == "ldl") return "LDL";
    return method;
}

RunConfig load_config_or_default(const std::string& path, std::optional<uint64_t> seed) {
    RunConfig cfg = path.empty() ? default_run_config() : load_run_config(path);
    if (seed) {
        cfg.seed = *seed;
        cfg.resolve();
    }
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

void write_entropy_profile_csv(const EntropyProfile& profile, const std::string& path) {
    std::ostringstream os;
    const size_t layers = profile.mean_entropy.empty() ? 0 : profile.mean_entropy[0].size();
    os << "epoch";
    for (size_t l = 1; l <= layers; ++l) os << ",layer" << l;
    os << ",selected_source\n";
    char buf[32];
    for (size_t e = 0; e < profile.mean_entropy.size(); ++e) {
        os << (e + 1);
        for (Real v : profile.mean_entropy[e]) {
            std::snprintf(buf, sizeof(buf), "%.10f", v);
            os << ',' << buf;
        }
        os << ',' << profile.selected_source[e] << '\n';
    }
    write_text(path, os.str());
}

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::string& path) {
    std::ostringstream os;
    os << "phase,epoch,loss_main,loss_src\n";
    char buf[32];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf), "%.10f", row.loss_main);
        os << row.phase << ',' << row.epoch << ',' << buf;
        std::snprintf(buf, sizeof(buf), "%.10f", row.loss_src);
        os << ',' << buf << '\n';
    }
    write_text(path, os.str());
}

std::string resolve_out_root(const RunConfig& cfg, const std::string& cli_out) {
    if (!cli_out.empty()) return cli_out;
    if (const char* env = std::getenv("LAD_OUTPUT_ROOT"); env && *env) return env;
    return cfg.output_dir;
}

}  // namespace

int cmd_generate(const GenerateArgs& args) {
    try {
        RunConfig cfg = load_config_or_default(args.config_path, args.seed);
        if (args.out_dir.empty()) throw std::invalid_argument("generate: --out directory required");
        const DatasetBundle bundle = generate_corpus(cfg.corpus);
        write_bundle(bundle, args.out_dir);
        write_text(args.out_dir + "/config.json", cfg.to_json());
        std::cout << "wrote " << bundle.train.size() << "/" << bundle.validation.size() << "/"
                  << bundle.eval.size() << " train/validation/eval samples to " << args.out_dir
                  << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "generate: " << e.what() << "\n";
        return 1;
    }
}

std::string train_run_dir(const TrainArgs& args) {
    RunConfig cfg = load_config_or_default(args.config_path, args.seed);
    return resolve_out_root(cfg, args.out_root) + "/" + args.method + "-seed" +
           std::to_string(cfg.seed);
}

int cmd_train(const TrainArgs& args) {
    try {
        bool known = false;
        for (const auto& m : valid_methods()) known |= (m == args.method);
        if (!known) {
            std::ostringstream os;
            os << "unknown method '" << args.method << "'; valid methods:";
            for (const auto& m : valid_methods()) os << ' ' << m;
            throw std::invalid_argument(os.str());
        }
        RunConfig cfg = load_config_or_default(args.config_path, args.seed);
        if (args.data_dir.empty()) throw std::invalid_argument("train: --data directory required");
        const DatasetBundle bundle = read_bundle(args.data_dir);
        const Manifest manifest = read_manifest(args.data_dir);

        const std::string run_dir =
            resolve_out_root(cfg, args.out_root) + "/" + args.method + "-seed" + std::to_string(cfg.seed);
        fs::create_directories(run_dir);
        write_text(run_dir + "/config.json", cfg.to_json());
        std::ostream* progress = args.quiet ? nullptr : &std::cout;

        MetricsReport report;
        if (args.method == "lad" || args.method == "lad-rc") {
            PipelineRunConfig pcfg;
            pcfg.encoder = cfg.encoder;
            pcfg.warmup = cfg.warmup;
            pcfg.distill = cfg.distill;
            pcfg.optimizer = cfg.optimizer;
            pcfg.enable_recalibration = (args.method == "lad-rc");
            pcfg.seed = cfg.seed;
            PipelineResult result = run_pipeline(bundle, pcfg, nullptr, progress);

            write_entropy_profile_csv(result.profile, run_dir + "/entropy_profile.csv");
            {
                std::ostringstream os;
                os << "source_idx = " << result.selection.source_idx << '\n'
                   << "warmup_epochs = " << result.selection.warmup_epochs << '\n'
                   << "stabilized = " << (result.selection.stabilized ? 1 : 0) << '\n';
                write_text(run_dir + "/source_selection.txt", os.str());
            }
            {
                std::ostringstream os;
                for (int64_t id : result.ambiguity.ambiguous_ids) os << id << '\n';
                write_text(run_dir + "/ambiguous_ids.txt", os.str());
            }
            write_train_log_csv(result.train_log, run_dir + "/training_log.csv");

            // per-phase checkpoints: rebuild phase weights on scratch models
            {
                LayeredModel warm(result.model.config());
                warm.params().restore(result.warmup_weights);
                save_checkpoint(warm, run_dir + "/checkpoint_warmup.bin");
                LayeredModel lad_model(result.model.config());
                lad_model.params().restore(result.lad_weights);
                save_checkpoint(lad_model, run_dir + "/checkpoint_lad.bin");
            }
            save_checkpoint(result.model, run_dir + "/checkpoint_final.bin");

            if (args.method == "lad-rc") {
                result.report_pre_rc.eval_checksum = manifest.eval_checksum;
                write_text(run_dir + "/metrics_pre_rc.txt", result.report_pre_rc.to_text());
                std::ostringstream os;
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.10f", result.ambiguous_entropy_lad);
                os << "ambiguous_train_entropy_lad = " << buf << '\n';
                std::snprintf(buf, sizeof(buf), "%.10f", result.ambiguous_entropy_final);
                os << "ambiguous_train_entropy_final = " << buf << '\n';
                write_text(run_dir + "/recalibration_effect.txt", os.str());
            }
            report = result.report;
        } else {
            EncoderConfig enc = cfg.encoder;
            enc.seed = cfg.seed;
            LayeredModel model(enc);
            Rng shuffle_rng(cfg.seed ^ 0x7f4a7c15ull);
            std::vector<TrainLogRow> log;
            BaselineConfig bcfg = cfg.baseline;
            bcfg.hyper.optimizer = cfg.optimizer;

            EvalMode mode = EvalMode::deterministic_mode();
            if (args.method == "ord") {
                train_ord(model, bundle.train, bcfg, shuffle_rng, &log);
            } else if (args.method == "ls") {
                train_ls(model, bundle.train, bcfg, shuffle_rng, &log);
            } else if (args.method == "ldl") {
                if (!bundle.train.all_have_distributions())
                    throw std::invalid_argument("ldl: train split is missing gold distributions");
                train_ldl(model, bundle.train, bcfg, shuffle_rng, &log);
            } else if (args.method == "mc") {
                train_ord(model, bundle.train, bcfg, shuffle_rng, &log);
                mode = EvalMode::mc_mode(bcfg.mc_passes, cfg.seed ^ 0x6d635f65ull);
            } else if (args.method == "ts") {
                train_ord(model, bundle.train, bcfg, shuffle_rng, &log);
                const TemperatureFit fit = fit_temperature(model, bundle.validation, bcfg.ts_grid);
                mode = EvalMode::temperature_mode(fit.t_star);
                if (progress)
                    *progress << "[ts] fitted T* = " << fit.t_star << " (validation KL "
                              << fit.validation_kl << ")\n";
            }
            write_train_log_csv(log, run_dir + "/training_log.csv");
            save_checkpoint(model, run_dir + "/checkpoint_final.bin");
            report = evaluate(model, bundle.eval, mode);
            report.seed = cfg.seed;
        }
        report.method = display_tag(args.method);
        report.eval_checksum = manifest.eval_checksum;
        write_text(run_dir + "/metrics.txt", report.to_text());
        if (progress) {
            *progress << "run directory: " << run_dir << "\n" << report.to_text();
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "train: " << e.what() << "\n";
        return 1;
    }
}

int cmd_evaluate(const EvaluateArgs& args) {
    try {
        if (args.run_dir.empty() || args.data_dir.empty())
            throw std::invalid_argument("evaluate: --run and --data required");
        std::ifstream mf(args.run_dir + "/metrics.txt");
        if (!mf) throw std::runtime_error("evaluate: missing " + args.run_dir + "/metrics.txt");
        std::ostringstream ss;
        ss << mf.rdbuf();
        const MetricsReport prior = MetricsReport::from_text(ss.str());

        const DatasetBundle bundle = read_bundle(args.data_dir);
        const Manifest manifest = read_manifest(args.data_dir);
        LayeredModel model = load_checkpoint(args.run_dir + "/checkpoint_final.bin");

        EvalMode mode = EvalMode::deterministic_mode();
        if (prior.method == "MC") {
            RunConfig cfg = load_run_config(args.run_dir + "/config.json");
            mode = EvalMode::mc_mode(cfg.baseline.mc_passes, cfg.seed ^ 0x6d635f65ull);
        } else if (prior.method == "TS") {
            mode = EvalMode::temperature_mode(prior.fitted_temperature);
        }
        MetricsReport report = evaluate(model, bundle.eval, mode);
        report.method = prior.method;
        report.seed = prior.seed;
        report.eval_checksum = manifest.eval_checksum;
        std::cout << report.to_text();
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "evaluate: " << e.what() << "\n";
        return 1;
    }
}

std::string comparison_table(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("compare: no reports");
    for (const auto& r : reports)
        if (r.eval_checksum != reports[0].eval_checksum)
            throw std::runtime_error("compare: eval split checksum mismatch between runs (" +
                                     reports[0].method + " vs " + r.method + ")");
    Real best_jsd = reports[0].mean_jsd, best_kl = reports[0].mean_kl;
    Real best_acc = reports[0].accuracy, best_diff = reports[0].diff;
    for (const auto& r : reports) {
        best_jsd = std::min(best_jsd, r.mean_jsd);
        best_kl = std::min(best_kl, r.mean_kl);
        best_acc = std::max(best_acc, r.accuracy);
        best_diff = std::min(best_diff, r.diff);
    }
    std::ostringstream os;
    char buf[64];
    os << "method        JSD       KL        Acc       Diff\n";
    for (const auto& r : reports) {
        auto cell = [&](Real v, Real best) {
            std::snprintf(buf, sizeof(buf), "%c%.4f", v == best ? '*' : ' ', v);
            return std::string(buf);
        };
        std::snprintf(buf, sizeof(buf), "%-12s", r.method.c_str());
        os << buf << ' ' << cell(r.mean_jsd, best_jsd) << "   " << cell(r.mean_kl, best_kl) << "   "
           << cell(r.accuracy, best_acc) << "   " << cell(r.diff, best_diff) << '\n';
    }
    return os.str();
}

std::string comparison_csv(const std::vector<MetricsReport>& reports) {
    std::ostringstream os;
    os << "method,jsd,kl,acc,diff,seed,sample_count,eval_checksum\n";
    char buf[64];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%.10f,%.10f,%.10f,%.10f", r.mean_jsd, r.mean_kl,
                      r.accuracy, r.diff);
        os << r.method << ',' << buf << ',' << r.seed << ',' << r.sample_count << ','
           << r.eval_checksum << '\n';
    }
    return os.str();
}

int cmd_compare(const CompareArgs& args) {
    try {
        if (args.run_dirs.empty()) throw std::invalid_argument("compare: need at least one run directory");
        std::vector<MetricsReport> reports;
        for (const auto& dir : args.run_dirs) {
            std::ifstream in(dir + "/metrics.txt");
            if (!in) throw std::runtime_error("compare: missing " + dir + "/metrics.txt");
            std::ostringstream ss;
            ss << in.rdbuf();
            reports.push_back(MetricsReport::from_text(ss.str()));
        }
        const std::string table = comparison_table(reports);
        std::cout << table;
        if (!args.out_prefix.empty()) {
            write_text(args.out_prefix + ".txt", table);
            write_text(args.out_prefix + ".csv", comparison_csv(reports));
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "compare: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace lad::cli
