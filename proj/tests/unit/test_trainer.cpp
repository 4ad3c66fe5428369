#include "doctest_torch.hpp"

#include <fstream>
#include <sstream>

#include "stainlab/checkpoint.hpp"
#include "stainlab/error.hpp"
#include "stainlab/synth_bench.hpp"
#include "stainlab/trainer.hpp"
#include "support.hpp"

using namespace stainlab;
using namespace stainlab::train;
using torch::Tensor;

namespace {

TrainConfig tiny_config(std::uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.apply({{"input_size", "32"},
               {"base_channels", "8"},
               {"max_channels", "32"},
               {"disc_base_channels", "8"},
               {"disc_max_channels", "32"},
               {"epochs", "2"}});
    cfg.seed = seed;
    return cfg;
}

std::vector<Example> synth_examples(int count, int size = 32, const std::string& slide = "synth") {
    synth::SynthConfig sc;
    sc.seed = 3;
    sc.slide_size = 128;
    sc.n_glands = 4;
    const auto pair = synth::generate_pair(sc);
    std::vector<Example> out;
    for (int i = 0; i < count; ++i) {
        const int x0 = (i * 16) % (128 - size), y0 = ((i * 16) / (128 - size)) * 16 % (128 - size);
        out.push_back({slide, x0, y0, pair.nonstained.crop(x0, y0, size, size), pair.stained.crop(x0, y0, size, size)});
    }
    return out;
}

std::vector<Tensor> snapshot(torch::nn::Module& m) {
    std::vector<Tensor> out;
    for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
    return out;
}

std::vector<Tensor> deltas(const std::vector<Tensor>& before, torch::nn::Module& m) {
    std::vector<Tensor> out;
    const auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back(params[i].detach() - before[i]);
    return out;
}

bool all_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!torch::equal(a[i], b[i])) return false;
    return true;
}

double total_abs(const std::vector<Tensor>& ts) {
    double s = 0;
    for (const auto& t : ts) s += t.abs().sum().item<double>();
    return s;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("config defaults, key-value round trip and overrides") {
    const TrainConfig d;
    CHECK(d.epochs == 10);
    CHECK(d.batch_size == 1);
    CHECK(d.adam.lr == 2e-4);
    CHECK(d.adam.beta1 == 0.5);
    CHECK(d.adam.beta2 == 0.999);
    CHECK(d.weights.lambda_l1 == 100.0);
    CHECK(d.weights.gamma_cc == 10.0);
    CHECK(d.flip_augment);
    CHECK(d.generator.input_size == 1024);
    CHECK(d.discriminator.input_size == 1024);

    auto cfg = tiny_config(9);
    cfg.direction = Direction::destain;
    cfg.weights.gamma_cc = 0.0;
    TrainConfig back;
    back.apply(cfg.to_key_values());
    CHECK(back.to_key_values() == cfg.to_key_values());
    CHECK(back.generator == cfg.generator);
    CHECK(back.discriminator == cfg.discriminator);
    CHECK(back.direction == Direction::destain);
    CHECK(back.generator.depth == 5);

    CHECK_THROWS_AS(back.apply({{"no_such_key", "1"}}), ConfigError);
    CHECK_THROWS_AS(back.apply({{"epochs", "ten"}}), ConfigError);
    TrainConfig bad;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.adam.lr = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("orientation per direction") {
    rng::Engine e(1);
    patch::PatchPair p{"s", 4, 8, 8, testing::random_image(e, 8, 8), testing::random_image(e, 8, 8)};
    const auto s = orient(p, Direction::stain);
    CHECK(s.input == p.nonstained);
    CHECK(s.target == p.stained);
    const auto d = orient(p, Direction::destain);
    CHECK(d.input == p.stained);
    CHECK(d.target == p.nonstained);
}

TEST_CASE("flip augmentation") {
    rng::Engine e(2);
    const patch::PatchPair p{"s", 0, 0, 8, testing::random_image(e, 8, 8), testing::random_image(e, 8, 8)};
    const auto none = apply_flips(p, {false, false});
    CHECK(none.nonstained == p.nonstained);
    CHECK(none.stained == p.stained);
    const auto h = apply_flips(p, {true, false});
    CHECK(h.nonstained == p.nonstained.flipped_horizontal());
    CHECK(h.stained == p.stained.flipped_horizontal());
    const auto hh = apply_flips(h, {true, false});
    CHECK(hh.nonstained == p.nonstained);
    CHECK(hh.stained == p.stained);
    const auto hv = apply_flips(p, {true, true});
    CHECK(hv.stained == p.stained.flipped_horizontal().flipped_vertical());

    int hcount = 0, vcount = 0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        const auto f = draw_flips(e);
        hcount += f.horizontal;
        vcount += f.vertical;
        const auto a = augment(p, e);
        // whatever was drawn, both patches received the same transform
        bool ok = false;
        for (FlipChoice c : {FlipChoice{false, false}, FlipChoice{true, false}, FlipChoice{false, true},
                             FlipChoice{true, true}}) {
            const auto ref = apply_flips(p, c);
            ok |= ref.nonstained == a.nonstained && ref.stained == a.stained;
        }
        CHECK(ok);
    }
    // 0.5 +- ~5 standard deviations
    CHECK(std::abs(hcount - n / 2) < 160);
    CHECK(std::abs(vcount - n / 2) < 160);
}

TEST_CASE("one step updates both players exactly once") {
    Trainer t(tiny_config());
    const auto g0 = snapshot(*t.generator());
    const auto d0 = snapshot(*t.discriminator());
    const auto b = t.step({synth_examples(1)});
    CHECK(total_abs(deltas(g0, *t.generator())) > 0.0);
    CHECK(total_abs(deltas(d0, *t.discriminator())) > 0.0);
    CHECK(t.state().global_step == 1);
    CHECK(t.state().d_updates == 1);
    CHECK(t.state().g_updates == 1);
    CHECK(std::abs(b.g_total - (b.g_adv + 100 * b.g_l1 + 10 * b.g_cc_penalty)) <= 1e-6 * b.g_total);
    for (const auto& p : t.discriminator()->parameters()) CHECK(p.requires_grad());
}

TEST_CASE("regularisers change the generator update but not the discriminator update") {
    auto with = tiny_config(4);
    auto without = with;
    without.weights.lambda_l1 = 0.0;
    without.weights.gamma_cc = 0.0;
    Trainer a(with), b(without);
    const auto ga = snapshot(*a.generator()), gb = snapshot(*b.generator());
    const auto da = snapshot(*a.discriminator()), db = snapshot(*b.discriminator());
    CHECK(all_equal(ga, gb));
    const auto batch = synth_examples(1);
    a.step(batch);
    b.step(batch);
    CHECK_FALSE(all_equal(deltas(ga, *a.generator()), deltas(gb, *b.generator())));
    CHECK(all_equal(deltas(da, *a.discriminator()), deltas(db, *b.discriminator())));
}

TEST_CASE("identical seeds give identical traces") {
    const auto data = synth_examples(6);
    auto run = [&] {
        Trainer t(tiny_config(7));
        std::vector<double> trace;
        for (int i = 0; i < 6; ++i) trace.push_back(t.step({data[std::size_t(i)]}).g_total);
        return trace;
    };
    CHECK(run() == run());
    Trainer other(tiny_config(8));
    CHECK(other.step({data[0]}).g_total != run().front());
}

TEST_CASE("save, load, step equals step") {
    testing::TempDir dir("ckptstep");
    const auto data = synth_examples(3);
    Trainer a(tiny_config(5));
    a.step({data[0]});
    a.save(dir / "mid.ckpt");
    const auto direct = a.step({data[1]});
    auto b = Trainer::resume(dir / "mid.ckpt");
    CHECK(b.state().global_step == 1);
    CHECK(b.state().history.size() == 1);
    const auto resumed = b.step({data[1]});
    CHECK(resumed.g_total == direct.g_total);
    CHECK(resumed.d_loss == direct.d_loss);
    CHECK(all_equal(snapshot(*a.generator()), snapshot(*b.generator())));
    CHECK(all_equal(snapshot(*a.discriminator()), snapshot(*b.discriminator())));
}

TEST_CASE("fit writes logs and resume continues the uninterrupted trace") {
    testing::TempDir dir("fitresume");
    MemorySource train_src(synth_examples(5));
    MemorySource val_src(synth_examples(2, 32, "held"));
    auto cfg = tiny_config(11);
    cfg.epochs = 3;
    cfg.checkpoint_every = 4;
    Trainer full(cfg);
    const auto hist = full.fit(train_src, &val_src, dir / "full");
    CHECK(hist.size() == 3);
    CHECK(full.state().global_step == 15);
    CHECK(full.state().d_updates == 15);
    CHECK(full.state().g_updates == 15);
    CHECK(std::filesystem::exists(dir / "full/final.ckpt"));
    CHECK(std::filesystem::exists(dir / "full/checkpoints/step_00000008.ckpt"));
    const std::string log = slurp(dir / "full/loss_log.jsonl");
    CHECK(std::count(log.begin(), log.end(), '\n') == 15);

    // resume mid-epoch from step 8 into a copy of the interrupted directory
    std::filesystem::create_directories(dir / "resumed");
    std::filesystem::copy_file(dir / "full/loss_log.jsonl", dir / "resumed/loss_log.jsonl");
    std::filesystem::copy_file(dir / "full/val_metrics.jsonl", dir / "resumed/val_metrics.jsonl");
    auto again = Trainer::resume(dir / "full/checkpoints/step_00000008.ckpt");
    again.fit(train_src, &val_src, dir / "resumed");
    CHECK(slurp(dir / "resumed/loss_log.jsonl") == log);
    CHECK(slurp(dir / "resumed/val_metrics.jsonl") == slurp(dir / "full/val_metrics.jsonl"));
    CHECK(all_equal(snapshot(*again.generator()), snapshot(*full.generator())));
}

TEST_CASE("held-out slides are refused") {
    Trainer t(tiny_config());
    t.set_holdout_slides({"held"});
    CHECK_THROWS_AS(t.step(synth_examples(1, 32, "held")), DataError);
    CHECK(t.state().global_step == 0);
    CHECK_NOTHROW(t.step(synth_examples(1, 32, "train")));
}

TEST_CASE("patch size must match the model") {
    Trainer t(tiny_config());
    CHECK_THROWS_AS(t.step(synth_examples(1, 16)), ContractError);
    MemorySource empty({});
    testing::TempDir dir("empty");
    CHECK_THROWS_AS(t.fit(empty, nullptr, dir.path()), DataError);
}

TEST_CASE("non-finite losses abort with the batch reference") {
    Trainer t(tiny_config());
    auto batch = synth_examples(1, 32, "nanslide");
    batch[0].input.at(3, 3, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_WITH_AS(t.step(batch), doctest::Contains("nanslide"), NumericError);
}

TEST_CASE("generator loading and translation") {
    testing::TempDir dir("loadgen");
    Trainer t(tiny_config());
    t.save(dir / "t.ckpt");
    auto g = load_generator(dir / "t.ckpt");
    const auto ex = synth_examples(1)[0];
    const Image a = translate(g, ex.input), b = translate(t.generator(), ex.input);
    CHECK(a == b);
    CHECK(a.width() == 32);
    CHECK(make_translator(g)(ex.input) == a);
}

TEST_CASE("secondary stainer trains on destained inputs") {
    testing::TempDir dir("secondary");
    const auto recs = synth::write_corpus(dir / "corpus", [] {
        synth::SynthConfig c;
        c.slide_size = 96;
        c.n_glands = 3;
        return c;
    }(), 2, 1);
    patch::ExtractionConfig ec;
    ec.patch_size = 32;
    ec.stride = 32;
    ec.tissue_threshold = 0.0;
    patch::write_patch_dataset(recs, ec, dir / "patches");
    const auto data = patch::PatchDataset::open(dir / "patches");
    auto cfg = tiny_config(3);
    cfg.epochs = 1;
    Trainer destainer_trainer(cfg);
    auto destainer = destainer_trainer.generator();
    train_secondary_stainer(destainer, data, cfg, dir / "secondary");
    CHECK(std::filesystem::exists(dir / "secondary/final.ckpt"));
    for (const auto& e : data.entries_in(patch::Split::train))
        CHECK(std::filesystem::exists(dir / "secondary/destained" / e.stained_png));
    CHECK_NOTHROW(load_generator(dir / "secondary/final.ckpt"));
}

}  // TEST_SUITE
