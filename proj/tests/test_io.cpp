#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <attrirob/dataset.hpp>
#include <attrirob/errors.hpp>
#include <attrirob/io.hpp>
#include <attrirob/mlp.hpp>
#include <attrirob/rng.hpp>

using namespace attrirob;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "attrirob_io_test";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::filesystem::path source_dir() {
    const char* env = std::getenv("ATTRIROB_SOURCE_DIR");
    return env && *env ? std::filesystem::path(env) : std::filesystem::current_path();
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(31);
    MlpModel m = make_mlp({5, 7, 3}, rng);
    for (auto& l : m.layers)
        for (auto& b : l.b) b = rng.uniform(-1, 1);
    const auto path = (temp_dir() / "model.json").string();
    save_checkpoint(m, path, json{{"loss", "AT"}, {"seed", 9}});

    json meta;
    const MlpModel back = load_checkpoint(path, &meta);
    ASSERT_EQ(back.layers.size(), m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        EXPECT_EQ(back.layers[l].w.data, m.layers[l].w.data);
        EXPECT_EQ(back.layers[l].b, m.layers[l].b);
    }
    EXPECT_EQ(meta["loss"], "AT");
    EXPECT_EQ(meta["seed"], 9);
}

TEST(Checkpoint, LoadRejectsMalformedFiles) {
    const auto dir = temp_dir();
    EXPECT_THROW(load_checkpoint((dir / "nope.json").string()), io_error);

    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream out(dir / name);
        out << text;
        return (dir / name).string();
    };
    EXPECT_THROW(load_checkpoint(write("garbage.json", "{not json")), config_error);
    EXPECT_THROW(load_checkpoint(write("nolayers.json", R"({"meta":{}})")), config_error);
    EXPECT_THROW(load_checkpoint(write("now.json", R"({"layers":[{"b":[0]}]})")), config_error);
    EXPECT_THROW(load_checkpoint(write("emptyw.json", R"({"layers":[{"w":[],"b":[]}]})")),
                 config_error);
    EXPECT_THROW(
        load_checkpoint(write("ragged.json", R"({"layers":[{"w":[[1,2],[3]],"b":[0,0]}]})")),
        config_error);
    // layer dimension chain mismatch trips model validation
    EXPECT_THROW(load_checkpoint(write(
                     "chain.json",
                     R"({"layers":[{"w":[[1,2]],"b":[0]},{"w":[[1,2,3]],"b":[0]}]})")),
                 shape_error);
}

TEST(CsvFormat, ShortestRoundTripDoubles) {
    EXPECT_EQ(CsvWriter::cell(0.1), "0.1");
    EXPECT_EQ(CsvWriter::cell(2.0), "2");
    EXPECT_EQ(CsvWriter::cell(-0.25), "-0.25");
    EXPECT_EQ(CsvWriter::cell(std::size_t{42}), "42");
    EXPECT_EQ(CsvWriter::cell(true), "1");
    EXPECT_EQ(CsvWriter::cell(false), "0");
    Rng rng(7);
    for (int t = 0; t < 2000; ++t) {
        double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
        if (t % 7 == 0) v = rng.uniform();
        const std::string s = CsvWriter::cell(v);
        EXPECT_EQ(std::stod(s), v) << s;
    }
}

TEST(CsvFormat, WriterShapeAndContent) {
    const auto path = temp_dir() / "t.csv";
    {
        CsvWriter csv(path.string(), {"a", "b"});
        csv.row({CsvWriter::cell(1.5), CsvWriter::cell(std::size_t{2})});
        EXPECT_THROW(csv.row({"only-one"}), argument_error);
    }
    EXPECT_EQ(slurp(path), "a,b\n1.5,2\n");
    EXPECT_THROW(CsvWriter("/nonexistent-dir/x.csv", {"a"}), io_error);
}

TEST(Idx, RoundTripQuantizesToBytes) {
    Dataset ds;
    ds.class_count = 4;
    ds.inputs = {Vec{0.0, 0.5, 1.0, 0.2509803921568627, 0.9, 0.3},
                 Vec{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}};
    ds.labels = {3, 0};
    const auto dir = temp_dir();
    const auto img = (dir / "img.idx").string();
    const auto lab = (dir / "lab.idx").string();
    save_idx(ds, img, lab, 2, 3);

    const Dataset back = load_idx(img, lab, 100, 4);
    ASSERT_EQ(back.size(), 2u);
    ASSERT_EQ(back.dim(), 6u);
    EXPECT_EQ(back.labels, ds.labels);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            EXPECT_DOUBLE_EQ(back.inputs[i][j],
                             std::lround(ds.inputs[i][j] * 255.0) / 255.0);
    back.validate();

    const Dataset limited = load_idx(img, lab, 1, 4);
    EXPECT_EQ(limited.size(), 1u);
    EXPECT_THROW(save_idx(ds, img, lab, 2, 2), argument_error);
}

TEST(Idx, RejectsCorruptFiles) {
    Dataset ds;
    ds.inputs = {Vec{0.5}, Vec{0.25}};
    ds.labels = {1, 0};
    const auto dir = temp_dir();
    const auto img = (dir / "c_img.idx").string();
    const auto lab = (dir / "c_lab.idx").string();
    save_idx(ds, img, lab, 1, 1);

    auto corrupt = [&](const std::string& src, std::size_t offset, unsigned char value) {
        std::vector<char> bytes;
        {
            std::ifstream in(src, std::ios::binary);
            bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        bytes.at(offset) = static_cast<char>(value);
        const std::string dst = src + ".bad";
        std::ofstream out(dst, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        return dst;
    };

    // wrong magic: the message names the offset and the file
    try {
        load_idx(corrupt(img, 3, 0x99), lab);
        FAIL() << "expected io_error";
    } catch (const io_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("offset 0"), std::string::npos) << msg;
        EXPECT_NE(msg.find("c_img.idx.bad"), std::string::npos) << msg;
    }
    EXPECT_THROW(load_idx(img, corrupt(lab, 3, 0x99)), io_error);
    // image/label count mismatch
    EXPECT_THROW(load_idx(corrupt(img, 7, 9), lab), io_error);
    // label exceeding class count
    EXPECT_THROW(load_idx(img, lab, 100, 1), io_error);
    // truncation
    {
        std::ofstream out(dir / "trunc.idx", std::ios::binary);
        out << "\x00\x00\x08";
    }
    EXPECT_THROW(load_idx((dir / "trunc.idx").string(), lab), io_error);
}

TEST(DigitsFixture, ChecksumsAreFrozen) {
    const auto img = source_dir() / "data" / "digits-images-idx3-ubyte";
    const auto lab = source_dir() / "data" / "digits-labels-idx1-ubyte";
    ASSERT_TRUE(std::filesystem::exists(img)) << img;
    ASSERT_TRUE(std::filesystem::exists(lab)) << lab;
    EXPECT_EQ(fnv1a64_file(img.string()), 0x027a71fbf0e2d047ULL);
    EXPECT_EQ(fnv1a64_file(lab.string()), 0x05e4f90c8a44f328ULL);

    const Dataset ds = load_idx(img.string(), lab.string(), 1000, 10);
    EXPECT_EQ(ds.size(), 1000u);
    EXPECT_EQ(ds.dim(), 64u);
    ds.validate();
    // all ten classes present in the subset
    std::vector<int> seen(10, 0);
    for (std::size_t y : ds.labels) seen[y] = 1;
    for (int c = 0; c < 10; ++c) EXPECT_TRUE(seen[c]) << c;
}

TEST(JsonFiles, RoundTripAndErrors) {
    const auto path = (temp_dir() / "j.json").string();
    const json j{{"k", 1}, {"nested", {{"x", 0.5}}}};
    json_to_file(j, path);
    EXPECT_EQ(json_from_file(path), j);
    EXPECT_THROW(json_from_file("/no/such/file.json"), io_error);
    EXPECT_THROW(json_to_file(j, "/no/such/dir/out.json"), io_error);
}
