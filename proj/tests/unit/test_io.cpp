#include "doctest_torch.hpp"

#include <fstream>

#include "stainlab/checkpoint.hpp"
#include "stainlab/config.hpp"
#include "stainlab/error.hpp"
#include "stainlab/png_io.hpp"
#include "stainlab/run_record.hpp"
#include "support.hpp"

using namespace stainlab;

TEST_SUITE("io") {

TEST_CASE("image crop and flips") {
    rng::Engine e(1);
    const Image img = testing::random_image(e, 7, 5);
    const Image c = img.crop(2, 1, 3, 2);
    CHECK(c.at(0, 0, 1) == img.at(2, 1, 1));
    CHECK(c.at(2, 1, 2) == img.at(4, 2, 2));
    CHECK_THROWS_AS(img.crop(5, 0, 3, 2), ContractError);
    CHECK(img.flipped_horizontal().at(0, 0, 0) == img.at(6, 0, 0));
    CHECK(img.flipped_vertical().at(0, 0, 0) == img.at(0, 4, 0));
    CHECK(img.flipped_horizontal().flipped_horizontal() == img);
    CHECK(to_u8(-0.5f) == 0);
    CHECK(to_u8(2.0f) == 255);
    CHECK(to_u8(0.5f) == 128);
}

TEST_CASE("png round trip and streaming reader") {
    testing::TempDir dir("png");
    rng::Engine e(2);
    const Image img = testing::random_u8_image(e, 13, 9);
    png::write(dir / "a.png", img);
    CHECK(png::read(dir / "a.png") == img);
    const auto dims = png::probe(dir / "a.png");
    CHECK(dims.width == 13);
    CHECK(dims.height == 9);
    png::RowReader reader(dir / "a.png");
    std::vector<float> row(13 * 3);
    for (int y = 0; y < 9; ++y) {
        reader.read_row(std::span<float>(row));
        for (int x = 0; x < 13; ++x) CHECK(row[std::size_t(x) * 3 + 1] == img.at(x, y, 1));
    }
    CHECK(reader.rows_read() == 9);
    CHECK_THROWS_AS(png::read(dir / "missing.png"), IoError);
    std::ofstream(dir / "junk.png") << "not a png";
    CHECK_THROWS(png::read(dir / "junk.png"));
}

TEST_CASE("checkpoint container round trip") {
    testing::TempDir dir("ckpt");
    ckpt::Checkpoint c;
    c.meta["answer"] = 42;
    c.tensors["w"] = torch::randn({3, 4});
    c.tensors["b"] = torch::randn({5});
    c.blobs["raw"] = std::string("\0\1\2binary", 9);
    ckpt::write(dir / "x.ckpt", c);
    CHECK_FALSE(std::filesystem::exists(dir / "x.ckpt.tmp"));
    const auto back = ckpt::read(dir / "x.ckpt");
    CHECK(back.meta["answer"] == 42);
    CHECK(torch::equal(back.tensors.at("w"), c.tensors.at("w")));
    CHECK(torch::equal(back.tensors.at("b"), c.tensors.at("b")));
    CHECK(back.blobs.at("raw") == c.blobs.at("raw"));
    std::ofstream(dir / "bad.ckpt") << "STAINLAX";
    CHECK_THROWS_AS(ckpt::read(dir / "bad.ckpt"), IoError);
    CHECK_THROWS_AS(ckpt::read(dir / "nope.ckpt"), IoError);
}

TEST_CASE("key-value config files") {
    testing::TempDir dir("cfg");
    std::ofstream(dir / "c.cfg") << "# comment\n\nepochs = 3\n  lr=0.001  \nflag = true\n";
    const auto kv = config::read_key_values(dir / "c.cfg");
    CHECK(kv.at("epochs") == "3");
    CHECK(kv.at("lr") == "0.001");
    CHECK(config::to_int("epochs", kv.at("epochs")) == 3);
    CHECK(config::to_double("lr", kv.at("lr")) == 0.001);
    CHECK(config::to_bool("flag", kv.at("flag")));
    CHECK_THROWS_AS(config::to_int("epochs", "3.5"), ConfigError);
    CHECK_THROWS_AS(config::to_bool("flag", "maybe"), ConfigError);
    std::ofstream(dir / "bad.cfg") << "no equals sign\n";
    CHECK_THROWS_AS(config::read_key_values(dir / "bad.cfg"), ConfigError);
    CHECK_THROWS_AS(config::read_key_values(dir / "none.cfg"), IoError);
}

TEST_CASE("run record round trip") {
    testing::TempDir dir("rr");
    RunRecord r;
    r.command = "synth";
    r.argv = {"stainlab", "synth", "--seed", "3"};
    r.config["options"]["--seed"] = "3";
    r.seed = 3;
    r.code_version = "0.1.0";
    r.start = std::chrono::system_clock::now();
    r.end = r.start + std::chrono::milliseconds(1500);
    r.outputs = {"a", "b"};
    r.write(dir / "run_record.json");
    const auto back = RunRecord::read(dir / "run_record.json");
    CHECK(back.command == "synth");
    CHECK(back.argv == r.argv);
    CHECK(back.seed == 3);
    CHECK(back.outputs == r.outputs);
    CHECK(back.config == r.config);
    CHECK(iso8601(back.start) == iso8601(r.start));
}

TEST_CASE("error categories") {
    CHECK(ConfigError("x").category() == Error::Category::config);
    CHECK(std::string(category_name(Error::Category::io)) == "io");
    CHECK(int(DataError("x").category()) != int(IoError("x").category()));
}

}  // TEST_SUITE
