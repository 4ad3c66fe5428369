#include "stainlab/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "stainlab/checkpoint.hpp"
#include "stainlab/error.hpp"
#include "stainlab/log.hpp"
#include "stainlab/metrics.hpp"
#include "stainlab/patch_pipeline.hpp"
#include "stainlab/png_io.hpp"
#include "stainlab/run_record.hpp"
#include "stainlab/synth_bench.hpp"
#include "stainlab/trainer.hpp"
#include "stainlab/wsi_inference.hpp"

#ifndef STAINLAB_VERSION
#define STAINLAB_VERSION "dev"
#endif

namespace stainlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void configure_logging_from_env() {
    const char* env = std::getenv("STAINLAB_LOG");
    log::set_level_from_string(env ? env : "");
}

namespace {

struct SynthOpts {
    std::uint64_t seed = 0;
    int slides = 4;
    int slide_size = 512;
    int train_count = -1;
    int glands = synth::SynthConfig{}.n_glands;
    int nuclei = synth::SynthConfig{}.n_nuclei_per_gland;
    int fibers = synth::SynthConfig{}.n_stroma_fibers;
    std::string out;
};

struct ExtractOpts {
    std::string manifest;
    int patch_size = 1024;
    int stride = 256;
    double tissue_threshold = 0.2;
    std::string out;
};

struct SplitOpts {
    std::string manifest;
    int train_count = 0;
    std::uint64_t seed = 0;
    std::string out;
};

struct TrainOpts {
    std::string direction;
    std::string config;
    std::string patches;
    std::string out;
    std::string resume;
    std::string destainer;
    std::vector<std::string> set;
    int epochs = 0;
    std::int64_t seed = -1;
};

struct InferOpts {
    std::string checkpoint;
    std::string slide;
    std::string patches;
    std::string split = "val";
    int tile = 1024;
    int stride = 512;
    std::string blend = "average";
    std::string out;
};

struct EvaluateOpts {
    std::string generated;
    std::string target;
    std::string column = "stained";
    std::string split = "all";
    std::string out;
};

struct CycleOpts {
    std::string stainer;
    std::string destainer;
    std::string secondary;
    std::string patches;
    std::string split = "val";
    bool slides = false;
    int tile = 0;
    int stride = 0;
    std::string out;
};

struct Run {
    RunRecord record;
    fs::path record_path;
};

config::KeyValues parse_sets(const std::vector<std::string>& sets) {
    config::KeyValues kv;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
        kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return kv;
}

// Defaults < config file < --set < dedicated flags.
train::TrainConfig resolve_train_config(const TrainOpts& o) {
    train::TrainConfig cfg;
    if (!o.config.empty()) cfg.apply(config::read_key_values(o.config));
    cfg.apply(parse_sets(o.set));
    config::KeyValues flags;
    if (!o.direction.empty()) flags["direction"] = o.direction;
    if (o.epochs > 0) flags["epochs"] = std::to_string(o.epochs);
    if (o.seed >= 0) flags["seed"] = std::to_string(o.seed);
    cfg.apply(flags);
    cfg.validate();
    return cfg;
}

// The model input size must match the extracted patch size.
void check_patch_size(const patch::PatchDataset& data, const train::TrainConfig& cfg) {
    if (data.entries.empty()) throw DataError("patch index in " + data.root.string() + " is empty");
    const auto dims = png::probe(data.root / data.entries.front().nonstained_png);
    if (dims.width != cfg.generator.input_size)
        throw ConfigError("patches are " + std::to_string(dims.width) + "px but input_size is " +
                          std::to_string(cfg.generator.input_size) + " (set input_size in the config)");
}

json kv_json(const config::KeyValues& kv) {
    json j = json::object();
    for (const auto& [k, v] : kv) j[k] = v;
    return j;
}

std::optional<patch::Split> parse_split_filter(const std::string& s) {
    if (s == "all") return std::nullopt;
    return patch::parse_split(s);
}

std::vector<patch::IndexEntry> filter_entries(const patch::PatchDataset& data, const std::string& split) {
    const auto filter = parse_split_filter(split);
    return filter ? data.entries_in(*filter) : data.entries;
}

wsi::Blend parse_blend(const std::string& s) {
    if (s == "average") return wsi::Blend::average;
    if (s == "center_crop") return wsi::Blend::center_crop;
    throw ConfigError("unknown blend '" + s + "' (expected average|center_crop)");
}

train::Direction checkpoint_direction(const fs::path& ckpt_path) {
    const auto c = ckpt::read(ckpt_path);
    if (c.meta.contains("config") && c.meta["config"].contains("direction"))
        return train::parse_direction(c.meta["config"]["direction"].get<std::string>());
    return train::Direction::stain;
}

int run_synth(const SynthOpts& o, Run& run) {
    synth::SynthConfig cfg;
    cfg.seed = o.seed;
    cfg.slide_size = o.slide_size;
    cfg.n_glands = o.glands;
    cfg.n_nuclei_per_gland = o.nuclei;
    cfg.n_stroma_fibers = o.fibers;
    const std::size_t train_count = o.train_count >= 0 ? std::size_t(o.train_count)
                                                       : std::size_t(std::max(1, o.slides - std::max(1, o.slides / 4)));
    const auto records = synth::write_corpus(o.out, cfg, o.slides, train_count);
    run.record.seed = o.seed;
    for (const auto& r : records) {
        run.record.outputs.push_back(r.nonstained_path.string());
        run.record.outputs.push_back(r.stained_path.string());
    }
    run.record.outputs.push_back((fs::path(o.out) / "manifest.jsonl").string());
    run.record_path = fs::path(o.out) / "run_record.json";
    std::cout << "wrote " << records.size() << " synthetic slide pairs to " << o.out << "\n";
    return 0;
}

int run_extract(const ExtractOpts& o, Run& run) {
    patch::ExtractionConfig cfg;
    cfg.patch_size = o.patch_size;
    cfg.stride = o.stride;
    cfg.tissue_threshold = o.tissue_threshold;
    cfg.validate();
    const auto records = patch::read_manifest(o.manifest);
    const auto summary = patch::write_patch_dataset(records, cfg, o.out);
    run.record.outputs = {(fs::path(o.out) / "index.jsonl").string(), (fs::path(o.out) / "manifest.jsonl").string(),
                          (fs::path(o.out) / "patches").string()};
    run.record_path = fs::path(o.out) / "run_record.json";
    std::cout << "extracted " << summary.pairs << " patch pairs from " << records.size() << " slides\n";
    return 0;
}

int run_split(const SplitOpts& o, Run& run) {
    auto records = patch::split_manifest(patch::read_manifest(o.manifest), std::size_t(o.train_count), o.seed);
    // keep paths as given relative to the new manifest's location
    const fs::path out = o.out;
    for (auto& r : records) {
        r.nonstained_path = fs::absolute(r.nonstained_path);
        r.stained_path = fs::absolute(r.stained_path);
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    patch::write_manifest(out, records);
    run.record.seed = o.seed;
    run.record.outputs = {out.string()};
    run.record_path = out.string() + ".run_record.json";
    return 0;
}

int run_train(const TrainOpts& o, Run& run) {
    const auto data = patch::PatchDataset::open(o.patches);
    if (!o.resume.empty()) {
        auto trainer = train::Trainer::resume(o.resume);
        check_patch_size(data, trainer.config());
        run.record.config["train_config"] = kv_json(trainer.config().to_key_values());
        run.record.seed = trainer.config().seed;
        train::train(data, trainer.config(), o.out, fs::path(o.resume));
    } else {
        const auto cfg = resolve_train_config(o);
        check_patch_size(data, cfg);
        run.record.config["train_config"] = kv_json(cfg.to_key_values());
        run.record.seed = cfg.seed;
        train::train(data, cfg, o.out);
    }
    run.record.outputs = {(fs::path(o.out) / "final.ckpt").string(), (fs::path(o.out) / "loss_log.jsonl").string(),
                          (fs::path(o.out) / "val_metrics.jsonl").string()};
    run.record_path = fs::path(o.out) / "run_record.json";
    return 0;
}

int run_train_secondary(const TrainOpts& o, Run& run) {
    const auto data = patch::PatchDataset::open(o.patches);
    auto cfg = resolve_train_config(o);
    cfg.direction = train::Direction::stain;
    check_patch_size(data, cfg);
    auto destainer = train::load_generator(o.destainer);
    run.record.config["train_config"] = kv_json(cfg.to_key_values());
    run.record.seed = cfg.seed;
    train::train_secondary_stainer(destainer, data, cfg, o.out);
    run.record.outputs = {(fs::path(o.out) / "final.ckpt").string(), (fs::path(o.out) / "loss_log.jsonl").string(),
                          (fs::path(o.out) / "destained").string()};
    run.record_path = fs::path(o.out) / "run_record.json";
    return 0;
}

int run_infer(const InferOpts& o, Run& run) {
    auto model = train::load_generator(o.checkpoint);
    if (!o.slide.empty() == !o.patches.empty()) throw ConfigError("infer needs exactly one of --slide or --patches");
    if (!o.slide.empty()) {
        wsi::StitchPlan plan{o.tile, o.stride, parse_blend(o.blend)};
        plan.validate();
        if (plan.tile_size != model->spec().input_size)
            throw ConfigError("--tile must equal the model input size " + std::to_string(model->spec().input_size));
        const Image slide = png::read(o.slide);
        const Image out = wsi::infer_slide(train::make_translator(model), slide, plan);
        const fs::path out_path = o.out;
        if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
        png::write(out_path, out);
        run.record.outputs = {out_path.string()};
        run.record_path = out_path.string() + ".run_record.json";
        return 0;
    }
    // Patch mode: generated images are named after the target column so `evaluate` can pair them.
    const auto data = patch::PatchDataset::open(o.patches);
    const auto direction = checkpoint_direction(o.checkpoint);
    std::size_t n = 0;
    for (const auto& e : filter_entries(data, o.split)) {
        const auto& in_rel = direction == train::Direction::stain ? e.nonstained_png : e.stained_png;
        const auto& out_rel = direction == train::Direction::stain ? e.stained_png : e.nonstained_png;
        const fs::path dst = fs::path(o.out) / out_rel;
        fs::create_directories(dst.parent_path());
        png::write(dst, train::translate(model, png::read(data.root / in_rel), false));
        ++n;
    }
    run.record.outputs = {o.out};
    run.record_path = fs::path(o.out) / "run_record.json";
    std::cout << "translated " << n << " patches into " << o.out << "\n";
    return 0;
}

int run_evaluate(const EvaluateOpts& o, Run& run) {
    const auto data = patch::PatchDataset::open(o.target);
    const auto column = o.column == "stained"      ? metrics::TargetColumn::stained
                        : o.column == "nonstained" ? metrics::TargetColumn::nonstained
                                                   : throw ConfigError("--column must be stained|nonstained");
    const auto report = metrics::evaluate(o.generated, o.target, filter_entries(data, o.split), column);
    const fs::path out = o.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream(out) << report.to_json().dump(2) << '\n';
    run.record.outputs = {out.string()};
    run.record_path = out.string() + ".run_record.json";
    std::cout << "mean_ssim " << report.aggregate.mean_ssim << " mean_cc " << report.aggregate.mean_cc << " over "
              << report.aggregate.count << " patches\n";
    if (!report.missing.empty())
        throw DataError("missing counterpart for " + std::to_string(report.missing.size()) +
                        " patches (listed in " + out.string() + ")");
    return 0;
}

int run_cycle(const CycleOpts& o, Run& run) {
    const auto data = patch::PatchDataset::open(o.patches);
    synth::CycleModels models{train::make_translator(train::load_generator(o.stainer)),
                              train::make_translator(train::load_generator(o.destainer)),
                              train::make_translator(train::load_generator(o.secondary))};
    std::optional<wsi::StitchPlan> plan;
    if (o.slides) {
        const int tile = o.tile > 0 ? o.tile : train::load_generator(o.stainer)->spec().input_size;
        plan = wsi::StitchPlan{tile, o.stride > 0 ? o.stride : tile / 2, wsi::Blend::average};
    }
    const auto report = synth::run_cycle_benchmark(data, models, patch::parse_split(o.split), plan);
    fs::create_directories(o.out);
    const fs::path out = fs::path(o.out) / "cycle_report.json";
    std::ofstream(out) << report.to_json().dump(2) << '\n';
    run.record.outputs = {out.string()};
    run.record_path = fs::path(o.out) / "run_record.json";
    std::cout << "staining ssim " << report.staining.aggregate.mean_ssim << " cc " << report.staining.aggregate.mean_cc
              << " | destain-restain ssim " << report.cycle.aggregate.mean_ssim << " cc "
              << report.cycle.aggregate.mean_cc << "\n";
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"stainlab: computational H&E staining and destaining with conditional GANs", "stainlab"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", std::string(STAINLAB_VERSION));

    SynthOpts synth_o;
    auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic registered slide corpus");
    synth_cmd->add_option("--seed", synth_o.seed, "Seed for all randomness")->required();
    synth_cmd->add_option("--slides", synth_o.slides, "Number of slide pairs")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--slide-size", synth_o.slide_size, "Slide side in pixels")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--train-count", synth_o.train_count, "Slides assigned to the train split");
    synth_cmd->add_option("--glands", synth_o.glands, "Glands per slide")->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--nuclei", synth_o.nuclei, "Nuclei per gland")->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--fibers", synth_o.fibers, "Stroma fibres per slide")->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--out", synth_o.out, "Output directory")->required();

    ExtractOpts extract_o;
    auto* extract_cmd = app.add_subcommand("extract", "Cut registered patch pairs from a slide manifest");
    extract_cmd->add_option("--manifest", extract_o.manifest, "JSON-lines slide manifest")->required();
    extract_cmd->add_option("--patch-size", extract_o.patch_size, "Patch side in pixels");
    extract_cmd->add_option("--stride", extract_o.stride, "Sliding-window stride");
    extract_cmd->add_option("--tissue-threshold", extract_o.tissue_threshold, "Minimum stained tissue fraction");
    extract_cmd->add_option("--out", extract_o.out, "Output directory")->required();

    SplitOpts split_o;
    auto* split_cmd = app.add_subcommand("split", "Assign train/val splits per slide");
    split_cmd->add_option("--manifest", split_o.manifest, "Input manifest")->required();
    split_cmd->add_option("--train-count", split_o.train_count, "Slides in the train split")->required();
    split_cmd->add_option("--seed", split_o.seed, "Shuffle seed");
    split_cmd->add_option("--out", split_o.out, "Output manifest path")->required();

    TrainOpts train_o;
    auto* train_cmd = app.add_subcommand("train", "Train a staining or destaining model");
    train_cmd->add_option("--direction", train_o.direction, "stain | destain");
    train_cmd->add_option("--config", train_o.config, "Flat key = value training config");
    train_cmd->add_option("--set", train_o.set, "Override a config key (key=value), repeatable");
    train_cmd->add_option("--epochs", train_o.epochs, "Override epochs");
    train_cmd->add_option("--seed", train_o.seed, "Override seed");
    train_cmd->add_option("--resume", train_o.resume, "Continue from a training checkpoint");
    train_cmd->add_option("--patches", train_o.patches, "Patch dataset directory")->required();
    train_cmd->add_option("--out", train_o.out, "Output directory")->required();

    TrainOpts secondary_o;
    auto* secondary_cmd = app.add_subcommand("train-secondary", "Train a restainer on a destainer's outputs");
    secondary_cmd->add_option("--destainer", secondary_o.destainer, "Destaining checkpoint")->required();
    secondary_cmd->add_option("--config", secondary_o.config, "Flat key = value training config");
    secondary_cmd->add_option("--set", secondary_o.set, "Override a config key (key=value), repeatable");
    secondary_cmd->add_option("--epochs", secondary_o.epochs, "Override epochs");
    secondary_cmd->add_option("--seed", secondary_o.seed, "Override seed");
    secondary_cmd->add_option("--patches", secondary_o.patches, "Patch dataset directory")->required();
    secondary_cmd->add_option("--out", secondary_o.out, "Output directory")->required();

    InferOpts infer_o;
    auto* infer_cmd = app.add_subcommand("infer", "Translate a whole slide (tiled) or a patch set");
    infer_cmd->add_option("--checkpoint", infer_o.checkpoint, "Model checkpoint")->required();
    infer_cmd->add_option("--slide", infer_o.slide, "Slide PNG to translate");
    infer_cmd->add_option("--patches", infer_o.patches, "Patch dataset to translate");
    infer_cmd->add_option("--split", infer_o.split, "train | val | all (patch mode)");
    infer_cmd->add_option("--tile", infer_o.tile, "Tile size (must equal the model input size)");
    infer_cmd->add_option("--stride", infer_o.stride, "Tile stride");
    infer_cmd->add_option("--blend", infer_o.blend, "average | center_crop");
    infer_cmd->add_option("--out", infer_o.out, "Output PNG (slide mode) or directory (patch mode)")->required();

    EvaluateOpts eval_o;
    auto* eval_cmd = app.add_subcommand("evaluate", "SSIM and Pearson CC of generated patches against targets");
    eval_cmd->add_option("--generated", eval_o.generated, "Directory of generated patches")->required();
    eval_cmd->add_option("--target", eval_o.target, "Patch dataset directory holding the targets")->required();
    eval_cmd->add_option("--column", eval_o.column, "stained | nonstained");
    eval_cmd->add_option("--split", eval_o.split, "train | val | all");
    eval_cmd->add_option("--out", eval_o.out, "Report JSON path")->required();

    CycleOpts cycle_o;
    auto* cycle_cmd = app.add_subcommand("cycle", "Staining and destain-restain benchmark");
    cycle_cmd->add_option("--stainer", cycle_o.stainer, "Staining checkpoint")->required();
    cycle_cmd->add_option("--destainer", cycle_o.destainer, "Destaining checkpoint")->required();
    cycle_cmd->add_option("--secondary", cycle_o.secondary, "Secondary staining checkpoint")->required();
    cycle_cmd->add_option("--patches", cycle_o.patches, "Patch dataset directory")->required();
    cycle_cmd->add_option("--split", cycle_o.split, "train | val");
    cycle_cmd->add_flag("--slides", cycle_o.slides, "Also stitch and score whole held-out slides");
    cycle_cmd->add_option("--tile", cycle_o.tile, "Stitching tile size (default: model input size)");
    cycle_cmd->add_option("--stride", cycle_o.stride, "Stitching stride (default: tile/2)");
    cycle_cmd->add_option("--out", cycle_o.out, "Output directory")->required();

    std::vector<std::string> argv_rev(args.rbegin(), args.rend() - 1);
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    Run run;
    run.record.argv = args;
    run.record.code_version = STAINLAB_VERSION;
    run.record.start = std::chrono::system_clock::now();
    auto* sub = app.get_subcommands().front();
    run.record.command = sub->get_name();
    run.record.config["options"] = json::parse("{}");
    for (const auto* opt : sub->get_options()) {
        if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
        const auto results = opt->results();
        if (results.empty()) continue;
        run.record.config["options"][opt->get_name()] = results.size() == 1 ? json(results.front()) : json(results);
    }

    try {
        int rc = 0;
        if (sub == synth_cmd) rc = run_synth(synth_o, run);
        else if (sub == extract_cmd) rc = run_extract(extract_o, run);
        else if (sub == split_cmd) rc = run_split(split_o, run);
        else if (sub == train_cmd) rc = run_train(train_o, run);
        else if (sub == secondary_cmd) rc = run_train_secondary(secondary_o, run);
        else if (sub == infer_cmd) rc = run_infer(infer_o, run);
        else if (sub == eval_cmd) rc = run_evaluate(eval_o, run);
        else if (sub == cycle_cmd) rc = run_cycle(cycle_o, run);
        run.record.end = std::chrono::system_clock::now();
        if (!run.record_path.empty()) run.record.write(run.record_path);
        return rc;
    } catch (const Error& e) {
        run.record.end = std::chrono::system_clock::now();
        if (!run.record_path.empty()) run.record.write(run.record_path);
        log::error(std::string(category_name(e.category())) + " error: " + e.what());
        return int(e.category());
    } catch (const std::exception& e) {
        log::error(e.what());
        return 1;
    }
}

}  // namespace stainlab::cli
