// dcl: synth | ingest | train | eval

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcl/commands.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> sets;

    void attach(CLI::App* app, bool out_required = true) {
        app->add_option("--config", config, "flat key = value configuration file")->check(CLI::ExistingFile);
        app->add_option("--seed", seed, "root seed (overrides the config)");
        auto* o = app->add_option("--out", out, "output directory");
        if (out_required) o->required();
        app->add_option("--set", sets, "override one key, as key=value (repeatable)");
    }

    dcl::RunConfig resolve() const {
        dcl::RunConfig rc;
        if (!config.empty()) rc.load_file(config);
        for (const auto& kv : sets) rc.set_assignment(kv);
        if (seed) rc.set("seed", std::to_string(*seed));
        return rc;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep curiosity loop: synthetic data, ingestion, training and evaluation"};
    app.require_subcommand(0, 1);
    bool print_config = false;
    app.add_flag("--print-config", print_config, "print every configuration key with its default and exit");

    Common synth_opts, ingest_opts, train_opts, eval_opts;

    auto* synth = app.add_subcommand("synth", "generate a synthetic moving-blob corpus with motion masks");
    synth_opts.attach(synth);

    auto* ingest = app.add_subcommand("ingest", "segment frame directories into shots and write a manifest");
    std::vector<std::string> sources;
    ingest->add_option("sources", sources, "frame directories (frame_%06d.ppm), in chronological order")
        ->required()
        ->check(CLI::ExistingDirectory);
    ingest_opts.attach(ingest);

    auto* train = app.add_subcommand("train", "run the curiosity loop over a manifest");
    std::string manifest, resume;
    train->add_option("--manifest", manifest, "manifest.json from synth or ingest")->required();
    train->add_option("--resume", resume, "checkpoint directory of an earlier run")->check(CLI::ExistingDirectory);
    train_opts.attach(train);

    auto* eval = app.add_subcommand("eval", "value maps, masks, ROC, boxes and flow from a checkpoint");
    std::string checkpoint, frames, masks;
    eval->add_option("--checkpoint", checkpoint, "acdqn.ckpt, or the training output directory")->required();
    eval->add_option("--frames", frames, "manifest.json or a frame directory")->required();
    eval->add_option("--masks", masks, "directory of mask_%06d.pgm ground truth")->check(CLI::ExistingDirectory);
    eval_opts.attach(eval);

    CLI11_PARSE(app, argc, argv);

    if (print_config) {
        std::cout << dcl::config_reference();
        return 0;
    }
    try {
        if (synth->parsed()) {
            const auto m = dcl::cmd_synth(synth_opts.resolve(), synth_opts.out);
            std::cout << "wrote " << m.sources.size() << " scene(s), " << m.shots.size() << " shot(s) to "
                      << synth_opts.out << '\n';
        } else if (ingest->parsed()) {
            std::vector<std::filesystem::path> dirs(sources.begin(), sources.end());
            const auto m = dcl::cmd_ingest(dirs, ingest_opts.resolve(), ingest_opts.out);
            std::cout << "wrote " << m.shots.size() << " shot(s), " << m.frame_count() << " frame(s) to "
                      << ingest_opts.out << "/manifest.json\n";
        } else if (train->parsed()) {
            std::optional<std::filesystem::path> from;
            if (!resume.empty()) from = resume;
            if (!std::filesystem::exists(manifest)) throw dcl::IoError(manifest + ": manifest not found");
            const auto r = dcl::cmd_train(manifest, train_opts.resolve(), train_opts.out, from);
            std::cout << "trained " << r.steps << " step(s), " << r.acdqn_updates << " AC-DQN update(s), "
                      << r.syncs << " target sync(s)\n";
        } else if (eval->parsed()) {
            std::optional<std::filesystem::path> m;
            if (!masks.empty()) m = masks;
            const auto s = dcl::cmd_eval(checkpoint, frames, m, eval_opts.resolve(), eval_opts.out);
            std::cout << "evaluated " << s.frames << " frame(s)";
            if (s.auc) std::cout << ", AUC " << *s.auc;
            std::cout << ", mask threshold " << s.mask_threshold << '\n';
        } else {
            std::cout << app.help();
            return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "dcl: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
