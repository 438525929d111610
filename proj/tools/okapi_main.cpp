// Command-line front end for the synthetic-world training pipeline. Every
// subcommand is one pipeline stage (plus `run` for the whole plan); stages
// read and write artifacts under --out-dir, so any stage can be rerun alone
// once its inputs exist.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "okapi/config.hpp"
#include "okapi/errors.hpp"
#include "okapi/pipeline.hpp"
#include "okapi/util.hpp"

namespace {

struct CliOptions {
    std::string out_dir = "out";
    uint64_t seed = 0;
    std::string config_path;
    bool fresh = false;

    std::string teacher = "synthetic";
    std::string endpoint;
    std::string model;
    int timeout_ms = 30000;
    int max_retries = 3;
};

okapi::RunPlan build_plan(const CliOptions& opt, std::vector<std::string> stages) {
    okapi::RunPlan plan;
    plan.out_dir = opt.out_dir;
    plan.seed = opt.seed;
    plan.stages = std::move(stages);
    plan.resume = !opt.fresh;
    if (!opt.config_path.empty()) plan.config = okapi::load_config_file(opt.config_path);
    plan.config.set("teacher.kind", opt.teacher);
    if (!opt.endpoint.empty()) plan.config.set("teacher.endpoint", opt.endpoint);
    if (!opt.model.empty()) plan.config.set("teacher.model", opt.model);
    plan.config.set("teacher.timeout_ms", std::to_string(opt.timeout_ms));
    plan.config.set("teacher.max_retries", std::to_string(opt.max_retries));
    return plan;
}

int execute(const CliOptions& opt, const std::vector<std::string>& stages) {
    okapi::RunOutcome outcome = okapi::run_plan(build_plan(opt, stages));
    for (const okapi::StageRun& sr : outcome.stages) {
        std::string note = sr.executed ? "ran (" + okapi::format_double(sr.seconds) + "s)"
                                       : "cached";
        std::printf("%-12s %s\n", sr.stage.c_str(), note.c_str());
    }
    for (const auto& [key, value] : outcome.metrics)
        std::printf("%s=%s\n", key.c_str(), okapi::format_double(value).c_str());
    if (!outcome.metrics.empty())
        std::printf("report: %s\n", outcome.report_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Byte-level instruction-tuning pipeline on synthetic languages"};
    app.require_subcommand(1);
    CliOptions opt;
    app.add_option("--out-dir", opt.out_dir, "Run directory for artifacts")->capture_default_str();
    app.add_option("--seed", opt.seed, "Master seed")->capture_default_str();
    app.add_option("--config", opt.config_path, "Flat key=value config file");
    app.add_flag("--fresh", opt.fresh, "Ignore cached artifacts and rerun everything");
    app.add_option("--teacher", opt.teacher, "Teacher backend: synthetic or external")
        ->check(CLI::IsMember({"synthetic", "external"}))
        ->capture_default_str();
    app.add_option("--endpoint", opt.endpoint, "External teacher URL");
    app.add_option("--model", opt.model, "External teacher model name");
    app.add_option("--timeout-ms", opt.timeout_ms, "External teacher request timeout")
        ->capture_default_str();
    app.add_option("--max-retries", opt.max_retries, "External teacher retry budget")
        ->capture_default_str();
    app.fallthrough();

    // stage subcommands, in pipeline order; "sample-rank" is the CLI spelling
    // of the sample_rank stage
    std::vector<std::pair<std::string, std::string>> stage_cmds = {
        {"world", "Build the synthetic language world"},
        {"generate", "Self-instruct generation from seed tasks"},
        {"translate", "Remap the generated corpus into every language"},
        {"sft", "Supervised fine-tuning (full-data and RL-arm models)"},
        {"sample-rank", "Sample responses and collect teacher rankings"},
        {"reward", "Train the reward model on ranked responses"},
        {"ppo", "PPO against the reward model"},
        {"eval", "Multiple-choice eval plus oracle-reward sampling"},
        {"report", "Render report.md from the eval summary"},
    };
    for (const auto& [cmd, help] : stage_cmds) app.add_subcommand(cmd, help);
    app.add_subcommand("run", "Run every stage in order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "run") return execute(opt, {});
        std::string stage = cmd == "sample-rank" ? "sample_rank" : cmd;
        return execute(opt, {stage});
    } catch (const okapi::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
