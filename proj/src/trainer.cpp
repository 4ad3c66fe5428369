#include "stainlab/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <cstring>

#include <cmath>
#include <fstream>
#include <sstream>

#include "stainlab/checkpoint.hpp"
#include "stainlab/error.hpp"
#include "stainlab/log.hpp"
#include "stainlab/png_io.hpp"

namespace stainlab::train {

namespace fs = std::filesystem;
using nlohmann::json;
using torch::Tensor;

std::string to_string(Direction d) { return d == Direction::stain ? "stain" : "destain"; }

Direction parse_direction(const std::string& s) {
    if (s == "stain") return Direction::stain;
    if (s == "destain") return Direction::destain;
    throw ConfigError("unknown direction '" + s + "' (expected stain|destain)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw ConfigError("Adam betas must lie in [0,1)");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (val_max_patches < 0) throw ConfigError("val_max_patches must be >= 0");
    weights.validate();
    generator.validate();
    discriminator.validate();
    if (generator.input_size != discriminator.input_size)
        throw ConfigError("generator and discriminator input sizes differ");
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

config::KeyValues TrainConfig::to_key_values() const {
    return {
        {"direction", to_string(direction)},
        {"epochs", std::to_string(epochs)},
        {"batch_size", std::to_string(batch_size)},
        {"lr", fmt_double(adam.lr)},
        {"beta1", fmt_double(adam.beta1)},
        {"beta2", fmt_double(adam.beta2)},
        {"alpha", fmt_double(weights.alpha)},
        {"lambda_l1", fmt_double(weights.lambda_l1)},
        {"gamma_cc", fmt_double(weights.gamma_cc)},
        {"flip_augment", flip_augment ? "true" : "false"},
        {"seed", std::to_string(seed)},
        {"checkpoint_every", std::to_string(checkpoint_every)},
        {"val_max_patches", std::to_string(val_max_patches)},
        {"input_size", std::to_string(generator.input_size)},
        {"base_channels", std::to_string(generator.base_channels)},
        {"max_channels", std::to_string(generator.max_channels)},
        {"dropout_rate", fmt_double(generator.dropout_rate)},
        {"dropout_decoder_layers", std::to_string(generator.dropout_decoder_layers)},
        {"disc_conv_layers", std::to_string(discriminator.conv_layers)},
        {"disc_base_channels", std::to_string(discriminator.base_channels)},
        {"disc_max_channels", std::to_string(discriminator.max_channels)},
    };
}

void TrainConfig::apply(const config::KeyValues& kv) {
    using config::to_bool;
    using config::to_double;
    using config::to_int;
    // input_size first so width keys apply to the resized spec
    if (auto it = kv.find("input_size"); it != kv.end()) {
        const auto resized = nets::GeneratorSpec::for_size(to_int(it->first, it->second));
        generator.input_size = resized.input_size;
        generator.depth = resized.depth;
        discriminator.input_size = resized.input_size;
    }
    for (const auto& [k, v] : kv) {
        if (k == "input_size") continue;
        else if (k == "direction") direction = parse_direction(v);
        else if (k == "epochs") epochs = to_int(k, v);
        else if (k == "batch_size") batch_size = to_int(k, v);
        else if (k == "lr") adam.lr = to_double(k, v);
        else if (k == "beta1") adam.beta1 = to_double(k, v);
        else if (k == "beta2") adam.beta2 = to_double(k, v);
        else if (k == "alpha") weights.alpha = to_double(k, v);
        else if (k == "lambda_l1") weights.lambda_l1 = to_double(k, v);
        else if (k == "gamma_cc") weights.gamma_cc = to_double(k, v);
        else if (k == "flip_augment") flip_augment = to_bool(k, v);
        else if (k == "seed") seed = std::uint64_t(std::stoull(v));
        else if (k == "checkpoint_every") checkpoint_every = to_int(k, v);
        else if (k == "val_max_patches") val_max_patches = to_int(k, v);
        else if (k == "base_channels") generator.base_channels = to_int(k, v);
        else if (k == "max_channels") generator.max_channels = to_int(k, v);
        else if (k == "dropout_rate") generator.dropout_rate = to_double(k, v);
        else if (k == "dropout_decoder_layers") generator.dropout_decoder_layers = to_int(k, v);
        else if (k == "disc_conv_layers") discriminator.conv_layers = to_int(k, v);
        else if (k == "disc_base_channels") discriminator.base_channels = to_int(k, v);
        else if (k == "disc_max_channels") discriminator.max_channels = to_int(k, v);
        else throw ConfigError("unknown training config key '" + k + "'");
    }
}

Example orient(const patch::PatchPair& pair, Direction direction) {
    Example ex{pair.slide_id, pair.x0, pair.y0, pair.nonstained, pair.stained};
    if (direction == Direction::destain) std::swap(ex.input, ex.target);
    return ex;
}

namespace {

Image flip(const Image& img, FlipChoice f) {
    Image out = f.horizontal ? img.flipped_horizontal() : img;
    return f.vertical ? out.flipped_vertical() : out;
}

}  // namespace

patch::PatchPair apply_flips(patch::PatchPair pair, FlipChoice flips) {
    pair.nonstained = flip(pair.nonstained, flips);
    pair.stained = flip(pair.stained, flips);
    return pair;
}

Example apply_flips(Example ex, FlipChoice flips) {
    ex.input = flip(ex.input, flips);
    ex.target = flip(ex.target, flips);
    return ex;
}

FlipChoice draw_flips(rng::Engine& engine) {
    FlipChoice f;
    f.horizontal = rng::coin(engine);
    f.vertical = rng::coin(engine);
    return f;
}

patch::PatchPair augment(patch::PatchPair pair, rng::Engine& engine) {
    return apply_flips(std::move(pair), draw_flips(engine));
}

PatchSource::PatchSource(const patch::PatchDataset& data, patch::Split split, Direction direction)
    : data_(&data), entries_(data.entries_in(split)), direction_(direction) {}

Example PatchSource::get(std::size_t i) const { return orient(data_->load(entries_.at(i)), direction_); }

namespace {

// Seed streams
constexpr std::uint64_t kDropoutStream = 0xD50;
constexpr std::uint64_t kShuffleStream = 0x5F1E;
constexpr std::uint64_t kFlipStream = 0xF11B;

// Installs a trainer's private RNG state into the global generator for the duration of a scope.
class RngScope {
public:
    explicit RngScope(Tensor& state) : state_(state) {
        auto gen = at::detail::getDefaultCPUGenerator();
        std::lock_guard<std::mutex> lock(gen.mutex());
        saved_ = gen.get_state();
        gen.set_state(state_);
    }
    ~RngScope() {
        auto gen = at::detail::getDefaultCPUGenerator();
        std::lock_guard<std::mutex> lock(gen.mutex());
        state_ = gen.get_state();
        gen.set_state(saved_);
    }

private:
    Tensor& state_;
    Tensor saved_;
};

Tensor batch_tensor(const std::vector<Example>& batch, bool inputs) {
    std::vector<Tensor> ts;
    ts.reserve(batch.size());
    for (const auto& ex : batch) ts.push_back(nets::to_model_input(inputs ? ex.input : ex.target));
    return torch::cat(ts, 0);
}

std::string batch_refs(const std::vector<Example>& batch) {
    std::string s;
    for (const auto& ex : batch) {
        if (!s.empty()) s += ", ";
        s += ex.slide_id + "@(" + std::to_string(ex.x0) + "," + std::to_string(ex.y0) + ")";
    }
    return s;
}

void set_requires_grad(torch::nn::Module& m, bool on) {
    for (auto& p : m.parameters()) p.requires_grad_(on);
}

std::string serialize_optimizer(const torch::optim::Optimizer& opt) {
    torch::serialize::OutputArchive archive;
    opt.save(archive);
    std::ostringstream os;
    archive.save_to(os);
    return os.str();
}

void deserialize_optimizer(torch::optim::Optimizer& opt, const std::string& blob) {
    torch::serialize::InputArchive archive;
    std::istringstream is(blob);
    archive.load_from(is);
    opt.load(archive);
}

}  // namespace

Trainer::Trainer(TrainConfig cfg) : Trainer(std::move(cfg), true) {}

Trainer::Trainer(TrainConfig cfg, bool seed_models) : cfg_(std::move(cfg)) {
    cfg_.validate();
    {
        Tensor init_state = [&] {
            auto g = at::detail::getDefaultCPUGenerator();
            std::lock_guard<std::mutex> lock(g.mutex());
            g.set_current_seed(seed_models ? cfg_.seed : rng::derive(cfg_.seed, 0xBAD));
            return g.get_state();
        }();
        RngScope scope(init_state);
        generator_ = nets::build_generator(cfg_.generator);
        discriminator_ = nets::build_discriminator(cfg_.discriminator);
    }
    {
        auto g = at::detail::getDefaultCPUGenerator();
        std::lock_guard<std::mutex> lock(g.mutex());
        Tensor saved = g.get_state();
        g.set_current_seed(rng::derive(cfg_.seed, kDropoutStream));
        rng_state_ = g.get_state();
        g.set_state(saved);
    }
    auto adam = [&](auto params) {
        return std::make_unique<torch::optim::Adam>(
            params, torch::optim::AdamOptions(cfg_.adam.lr).betas({cfg_.adam.beta1, cfg_.adam.beta2}));
    };
    g_opt_ = adam(generator_->parameters());
    d_opt_ = adam(discriminator_->parameters());
}

losses::LossBreakdown Trainer::step(const std::vector<Example>& batch) {
    if (batch.empty()) throw ContractError("empty batch");
    for (const auto& ex : batch) {
        if (holdout_.count(ex.slide_id))
            throw DataError("refusing training patch from held-out slide '" + ex.slide_id + "'");
        const int s = cfg_.generator.input_size;
        if (ex.input.width() != s || ex.input.height() != s || ex.target.width() != s || ex.target.height() != s)
            throw ContractError("patch size does not match the model input size " + std::to_string(s));
    }
    const Tensor x = batch_tensor(batch, true);
    const Tensor y = batch_tensor(batch, false);

    losses::LossBreakdown out;
    {
        RngScope scope(rng_state_);
        const Tensor fake = generator_->forward(x, true);

        // discriminator: real (x,y) vs fake (x,G(x,z)) with G frozen
        const Tensor d_loss =
            losses::discriminator_loss(discriminator_->forward(x, y), discriminator_->forward(x, fake.detach()),
                                       cfg_.weights.alpha);
        out.d_loss = d_loss.item<double>();
        if (!std::isfinite(out.d_loss))
            throw NumericError("non-finite discriminator loss at step " + std::to_string(state_.global_step + 1) +
                               " on batch [" + batch_refs(batch) + "]");
        d_opt_->zero_grad();
        d_loss.backward();
        d_opt_->step();
        ++state_.d_updates;

        // generator: combined objective with D frozen
        set_requires_grad(*discriminator_, false);
        const auto objective =
            losses::combined_generator_loss(discriminator_->forward(x, fake), fake, y, cfg_.weights);
        if (!std::isfinite(objective.breakdown.g_total)) {
            set_requires_grad(*discriminator_, true);
            throw NumericError("non-finite generator loss at step " + std::to_string(state_.global_step + 1) +
                               " on batch [" + batch_refs(batch) + "]");
        }
        g_opt_->zero_grad();
        objective.total.backward();
        g_opt_->step();
        set_requires_grad(*discriminator_, true);
        ++state_.g_updates;

        out.g_adv = objective.breakdown.g_adv;
        out.g_l1 = objective.breakdown.g_l1;
        out.g_cc_penalty = objective.breakdown.g_cc_penalty;
        out.g_total = objective.breakdown.g_total;
    }
    ++state_.global_step;
    state_.history.push_back(out);
    while (state_.history.size() > TrainState::kHistory) state_.history.pop_front();
    return out;
}

metrics::Aggregate Trainer::validate(const ExampleSource& source, std::size_t limit) {
    metrics::MetricsReport report;
    const std::size_t n = limit ? std::min(limit, source.size()) : source.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto ex = source.get(i);
        const Image gen = translate(generator_, ex.input, false);
        report.per_patch.push_back({ex.slide_id, ex.x0, ex.y0, metrics::ssim(gen, ex.target), metrics::image_cc(gen, ex.target)});
    }
    report.recompute_aggregate();
    return report.aggregate;
}

namespace {

// Keeps the JSON-lines rows whose `key` is at most `limit`.
void trim_log(const fs::path& path, const char* key, std::int64_t limit) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::vector<std::string> kept;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto row = json::parse(line, nullptr, false);
        if (!row.is_discarded() && row.contains(key) && row[key].get<std::int64_t>() <= limit) kept.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& line : kept) out << line << '\n';
    if (!out) throw IoError("cannot rewrite " + path.string());
}

}  // namespace

std::vector<EpochMetrics> Trainer::fit(const ExampleSource& train, const ExampleSource* val, const fs::path& out_dir) {
    const std::size_t n = train.size();
    if (n == 0) throw DataError("empty train split");
    const std::size_t bs = std::size_t(cfg_.batch_size);
    const std::int64_t steps_per_epoch = std::int64_t((n + bs - 1) / bs);

    std::error_code ec;
    fs::create_directories(out_dir / "checkpoints", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "checkpoints").string() + ": " + ec.message());
    if (state_.global_step > 0) {
        // rows written after the checkpoint was taken belong to the run being replaced
        trim_log(out_dir / "loss_log.jsonl", "step", state_.global_step);
        trim_log(out_dir / "val_metrics.jsonl", "epoch", state_.epoch);
    }
    const auto mode = state_.global_step > 0 ? std::ios::app : std::ios::trunc;
    std::ofstream loss_log(out_dir / "loss_log.jsonl", std::ios::out | mode);
    std::ofstream val_log(out_dir / "val_metrics.jsonl", std::ios::out | mode);
    if (!loss_log || !val_log) throw IoError("cannot open logs in " + out_dir.string());

    std::vector<EpochMetrics> history;
    while (state_.epoch < cfg_.epochs) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng::Engine shuffle_rng(rng::derive(cfg_.seed, kShuffleStream, std::uint64_t(state_.epoch)));
        rng::shuffle(std::span<std::size_t>(order), shuffle_rng);

        for (std::int64_t b = state_.global_step - state_.epoch * steps_per_epoch; b < steps_per_epoch; ++b) {
            std::vector<Example> batch;
            for (std::size_t i = std::size_t(b) * bs; i < std::min(n, std::size_t(b + 1) * bs); ++i) {
                Example ex = train.get(order[i]);
                if (cfg_.flip_augment) {
                    rng::Engine flip_rng(rng::derive(cfg_.seed, kFlipStream, std::uint64_t(state_.global_step) * bs + i % bs));
                    ex = apply_flips(std::move(ex), draw_flips(flip_rng));
                }
                batch.push_back(std::move(ex));
            }
            const auto losses = step(batch);
            loss_log << losses.to_json(state_.global_step).dump() << '\n';
            if (cfg_.checkpoint_every > 0 && state_.global_step % cfg_.checkpoint_every == 0) {
                char name[64];
                std::snprintf(name, sizeof name, "step_%08lld.ckpt", static_cast<long long>(state_.global_step));
                loss_log.flush();
                save(out_dir / "checkpoints" / name);
            }
            if (state_.global_step % 100 == 0 && log::enabled(log::Level::debug))
                log::debug("step " + std::to_string(state_.global_step) + " d " + log::fixed(losses.d_loss) +
                           " g " + log::fixed(losses.g_total) + " (adv " + log::fixed(losses.g_adv) + " l1 " +
                           log::fixed(losses.g_l1) + " cc " + log::fixed(losses.g_cc_penalty) + ")");
        }
        ++state_.epoch;

        EpochMetrics em{state_.epoch, {}};
        if (val && val->size() > 0) em.val = validate(*val, std::size_t(cfg_.val_max_patches));
        val_log << json{{"epoch", em.epoch},
                        {"mean_ssim", em.val.mean_ssim},
                        {"mean_cc", em.val.mean_cc},
                        {"count", em.val.count}}
                       .dump()
                << '\n';
        val_log.flush();
        loss_log.flush();
        log::info(to_string(cfg_.direction) + " epoch " + std::to_string(em.epoch) + "/" + std::to_string(cfg_.epochs) +
                  ": step " + std::to_string(state_.global_step) + " val ssim " + log::fixed(em.val.mean_ssim) +
                  " cc " + log::fixed(em.val.mean_cc) + " (n=" + std::to_string(em.val.count) + ")");
        history.push_back(em);
    }
    if (!loss_log) throw IoError("loss log write failed in " + out_dir.string());
    save(out_dir / "final.ckpt");
    return history;
}

void Trainer::save(const fs::path& path) const {
    ckpt::Checkpoint c;
    json hist = json::array();
    for (const auto& h : state_.history)
        hist.push_back({h.d_loss, h.g_adv, h.g_l1, h.g_cc_penalty, h.g_total});
    json cfg_json = json::object();
    for (const auto& [k, v] : cfg_.to_key_values()) cfg_json[k] = v;
    c.meta = {{"kind", "stainlab-train"},
              {"generator_spec", cfg_.generator.to_json()},
              {"discriminator_spec", cfg_.discriminator.to_json()},
              {"config", cfg_json},
              {"state",
               {{"epoch", state_.epoch},
                {"global_step", state_.global_step},
                {"d_updates", state_.d_updates},
                {"g_updates", state_.g_updates}}},
              {"history", hist}};
    ckpt::store_module(c, "generator.", *generator_);
    ckpt::store_module(c, "discriminator.", *discriminator_);
    c.blobs["optimizer.generator"] = serialize_optimizer(*g_opt_);
    c.blobs["optimizer.discriminator"] = serialize_optimizer(*d_opt_);
    const Tensor rng = rng_state_.contiguous();
    c.blobs["rng.dropout"] = std::string(reinterpret_cast<const char*>(rng.data_ptr<std::uint8_t>()), std::size_t(rng.numel()));
    ckpt::write(path, c);
}

Trainer Trainer::resume(const fs::path& checkpoint) {
    const auto c = ckpt::read(checkpoint);
    if (c.meta.value("kind", "") != "stainlab-train") throw IoError(checkpoint.string() + " is not a training checkpoint");
    TrainConfig cfg;
    config::KeyValues kv;
    for (const auto& [k, v] : c.meta.at("config").items()) kv[k] = v.get<std::string>();
    cfg.apply(kv);

    Trainer t(cfg, false);
    ckpt::load_module(c, "generator.", *t.generator_);
    ckpt::load_module(c, "discriminator.", *t.discriminator_);
    deserialize_optimizer(*t.g_opt_, c.blobs.at("optimizer.generator"));
    deserialize_optimizer(*t.d_opt_, c.blobs.at("optimizer.discriminator"));
    const std::string& rng = c.blobs.at("rng.dropout");
    t.rng_state_ = torch::empty({std::int64_t(rng.size())}, torch::kUInt8);
    std::memcpy(t.rng_state_.data_ptr<std::uint8_t>(), rng.data(), rng.size());

    const auto& st = c.meta.at("state");
    t.state_.epoch = st.at("epoch").get<std::int64_t>();
    t.state_.global_step = st.at("global_step").get<std::int64_t>();
    t.state_.d_updates = st.at("d_updates").get<std::int64_t>();
    t.state_.g_updates = st.at("g_updates").get<std::int64_t>();
    for (const auto& h : c.meta.at("history"))
        t.state_.history.push_back({h[0].get<double>(), h[1].get<double>(), h[2].get<double>(), h[3].get<double>(),
                                    h[4].get<double>()});
    return t;
}

Image translate(nets::UNetGenerator& model, const Image& input, bool stochastic) {
    torch::NoGradGuard no_grad;
    return nets::from_model_output(nets::generator_forward(model, nets::to_model_input(input), stochastic));
}

wsi::TileTranslator make_translator(nets::UNetGenerator model) {
    return [model](const Image& tile) mutable { return translate(model, tile, false); };
}

nets::UNetGenerator load_generator(const fs::path& checkpoint) {
    const auto c = ckpt::read(checkpoint);
    if (!c.meta.contains("generator_spec")) throw IoError(checkpoint.string() + " holds no generator");
    auto g = nets::build_generator(nets::GeneratorSpec::from_json(c.meta.at("generator_spec")));
    ckpt::load_module(c, "generator.", *g);
    return g;
}

namespace {

// Examples whose inputs were produced by another model and stored as PNGs under `input_root`,
// mirroring the dataset's stained paths.
class TranslatedSource : public ExampleSource {
public:
    TranslatedSource(const patch::PatchDataset& data, patch::Split split, fs::path input_root)
        : data_(&data), entries_(data.entries_in(split)), input_root_(std::move(input_root)) {}

    std::size_t size() const override { return entries_.size(); }

    Example get(std::size_t i) const override {
        const auto& e = entries_.at(i);
        const fs::path in = input_root_ / e.stained_png;
        if (!fs::exists(in)) throw IoError("missing destained input " + in.string());
        return {e.slide_id, e.x0, e.y0, png::read(in), png::read(data_->root / e.stained_png)};
    }

private:
    const patch::PatchDataset* data_;
    std::vector<patch::IndexEntry> entries_;
    fs::path input_root_;
};

std::set<std::string> slides_in(const patch::PatchDataset& data, patch::Split split) {
    std::set<std::string> out;
    for (const auto& r : data.manifest)
        if (r.split == split) out.insert(r.slide_id);
    return out;
}

}  // namespace

std::vector<EpochMetrics> train_secondary_stainer(nets::UNetGenerator& destainer, const patch::PatchDataset& data,
                                                  TrainConfig cfg, const fs::path& out_dir) {
    cfg.direction = Direction::stain;
    const fs::path destained_root = out_dir / "destained";
    std::size_t materialized = 0;
    for (auto split : {patch::Split::train, patch::Split::val}) {
        auto entries = data.entries_in(split);
        if (split == patch::Split::val && cfg.val_max_patches > 0 && entries.size() > std::size_t(cfg.val_max_patches))
            entries.resize(std::size_t(cfg.val_max_patches));
        for (const auto& e : entries) {
            const fs::path dst = destained_root / e.stained_png;
            fs::create_directories(dst.parent_path());
            png::write(dst, translate(destainer, png::read(data.root / e.stained_png), false));
            if (split == patch::Split::train) ++materialized;
        }
    }
    if (materialized == 0) throw DataError("no destained training inputs: the train split is empty");
    log::info("materialized " + std::to_string(materialized) + " destained training inputs under " +
              destained_root.string());

    TranslatedSource train_src(data, patch::Split::train, destained_root);
    TranslatedSource val_src(data, patch::Split::val, destained_root);
    Trainer trainer(cfg);
    trainer.set_holdout_slides(slides_in(data, patch::Split::val));
    return trainer.fit(train_src, val_src.size() ? &val_src : nullptr, out_dir);
}

std::vector<EpochMetrics> train(const patch::PatchDataset& data, const TrainConfig& cfg, const fs::path& out_dir,
                                const std::optional<fs::path>& resume_from) {
    PatchSource train_src(data, patch::Split::train, cfg.direction);
    PatchSource val_src(data, patch::Split::val, cfg.direction);
    Trainer trainer = resume_from ? Trainer::resume(*resume_from) : Trainer(cfg);
    trainer.set_holdout_slides(slides_in(data, patch::Split::val));
    return trainer.fit(train_src, val_src.size() ? &val_src : nullptr, out_dir);
}

}  // namespace stainlab::train
