// Command-line front end: ingest -> split -> featurize -> train -> predict ->
// fuse -> evaluate -> report.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ercfuse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ercfuse;

namespace {

std::vector<double> parse_weights(const std::string& text) {
    std::vector<double> weights;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            weights.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw ValidationError("cannot parse weight '" + item + "'");
        }
    }
    return weights;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ercfuse: multimodal emotion recognition with late fusion"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::size_t jobs = 0;
    app.add_option("--config", config_path, "Run configuration JSON");
    app.add_option("--seed", seed, "Override split and training seeds");
    app.add_option("--out", out_dir, "Output directory (overrides config)");
    app.add_option("--jobs", jobs, "Worker threads for feature extraction");

    auto* validate = app.add_subcommand("validate", "Check manifest alignment and label balance");
    std::string manifest_path;
    validate->add_option("--manifest", manifest_path, "Manifest to check (when no --config is given)");

    auto* split = app.add_subcommand("split", "Write the stratified train/test split");
    auto* featurize = app.add_subcommand("featurize", "Extract and cache text and audio features");
    auto* train = app.add_subcommand("train", "Train the unimodal softmax models");
    auto* run = app.add_subcommand("run", "Run the whole pipeline");

    auto* predict = app.add_subcommand("predict", "Predict with a saved model over a feature cache");
    PredictArgs pargs;
    std::string psplit;
    std::string poutput;
    predict->add_option("--model", pargs.model, "Model JSON")->required();
    predict->add_option("--features", pargs.features, "Feature cache (.jsonl)")->required();
    predict->add_option("--split", psplit, "Restrict to the test ids of this split file");
    predict->add_option("--name", pargs.name, "Model name for the prediction table");
    predict->add_option("-o,--output", poutput, "Prediction CSV to write")->required();

    auto* fuse = app.add_subcommand("fuse", "Late-fuse two or more prediction files");
    FuseArgs fargs;
    std::vector<std::string> fpreds;
    std::string fweights;
    std::string fmanifest;
    std::string fsplit;
    std::string foutput;
    std::string freport;
    fuse->add_option("--pred", fpreds, "Prediction CSV (repeat per member)")->required();
    fuse->add_option("--method", fargs.method, "weighted_average | vote | search")
        ->check(CLI::IsMember({"weighted_average", "vote", "search"}));
    fuse->add_option("--weights", fweights, "Comma-separated member weights summing to 1");
    fuse->add_option("--step", fargs.step, "Grid resolution for --method search");
    fuse->add_option("--manifest", fmanifest, "Manifest with gold labels (enables the report)");
    fuse->add_option("--split", fsplit, "Score only the test ids of this split file");
    fuse->add_option("-o,--output", foutput, "Fused prediction CSV")->required();
    fuse->add_option("--report", freport, "Evaluation report JSON to write");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a prediction file against gold labels");
    EvaluateArgs eargs;
    std::string esplit;
    std::string epred;
    std::string emanifest;
    std::string eoutput;
    evaluate_cmd->add_option("--pred", epred, "Prediction CSV")->required();
    evaluate_cmd->add_option("--manifest", emanifest, "Manifest with gold labels")->required();
    evaluate_cmd->add_option("--split", esplit, "Score only the test ids of this split file");
    evaluate_cmd->add_option("-o,--output", eoutput, "Report JSON to write")->required();

    auto* report = app.add_subcommand("report", "Print summary tables for saved reports");
    std::vector<std::string> report_paths;
    report->add_option("reports", report_paths, "Report JSON files (default: <out>/reports/*.json)");

    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    auto load_config = [&]() -> RunConfig {
        if (config_path.empty()) {
            throw ValidationError("this subcommand needs --config");
        }
        RunConfig cfg = RunConfig::load(config_path);
        if (seed) {
            cfg.override_seed(*seed);
        }
        if (!out_dir.empty()) {
            cfg.out_dir = out_dir;
        }
        if (jobs > 0) {
            cfg.jobs = jobs;
        }
        return cfg;
    };

    try {
        if (*validate) {
            RunConfig cfg;
            if (!config_path.empty()) {
                cfg = load_config();
            } else if (!manifest_path.empty()) {
                cfg.manifest = manifest_path;
                cfg.audio_enabled = false;
            } else {
                throw ValidationError("validate needs --config or --manifest");
            }
            return cmd_validate(cfg, std::cout);
        }
        if (*split) {
            cmd_split(load_config(), std::cout);
        } else if (*featurize) {
            cmd_featurize(load_config(), std::cout);
        } else if (*train) {
            cmd_train(load_config(), std::cout);
        } else if (*run) {
            const auto cfg = load_config();
            const auto result = cmd_run(cfg, std::cout);
            std::cout << "config_hash " << result.config_hash << ", " << result.artifacts.size()
                      << " artifacts in " << cfg.out_dir.string() << "\n";
        } else if (*predict) {
            if (!psplit.empty()) {
                pargs.split = psplit;
            }
            pargs.out = poutput;
            cmd_predict(pargs, std::cout);
        } else if (*fuse) {
            for (const auto& p : fpreds) {
                fargs.predictions.emplace_back(p);
            }
            if (!fweights.empty()) {
                fargs.weights = parse_weights(fweights);
            }
            if (!fmanifest.empty()) {
                fargs.manifest = fmanifest;
            }
            if (!fsplit.empty()) {
                fargs.split = fsplit;
            }
            if (!freport.empty()) {
                fargs.report = freport;
            }
            fargs.out = foutput;
            cmd_fuse(fargs, std::cout);
        } else if (*evaluate_cmd) {
            eargs.predictions = epred;
            eargs.manifest = emanifest;
            eargs.out = eoutput;
            if (!esplit.empty()) {
                eargs.split = esplit;
            }
            if (!config_path.empty()) {
                const auto cfg = load_config();
                eargs.config_hash = cfg.hash();
                eargs.seed = cfg.split_seed;
            } else if (seed) {
                eargs.seed = *seed;
            }
            cmd_evaluate(eargs, std::cout);
        } else if (*report) {
            std::vector<fs::path> paths(report_paths.begin(), report_paths.end());
            if (paths.empty()) {
                const fs::path dir = fs::path(out_dir.empty() ? load_config().out_dir : fs::path(out_dir)) / "reports";
                if (fs::is_directory(dir)) {
                    for (const auto& entry : fs::directory_iterator(dir)) {
                        if (entry.path().extension() == ".json") {
                            paths.push_back(entry.path());
                        }
                    }
                }
                std::sort(paths.begin(), paths.end());
                if (paths.empty()) {
                    throw ValidationError("no reports found in " + dir.string());
                }
            }
            cmd_report(paths, std::cout);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return kExitOk;
}
