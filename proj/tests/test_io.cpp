#include "doctest.h"

#include "pyramid/io.hpp"
#include "pyramid/rng.hpp"

#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace pyramid;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("pyramid_io_" + std::to_string(::getpid())) / name;
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("number formatting") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(1e-300) == "1e-300");
    CHECK(format_number(2.0 / 3.0) == "0.666666666667");
    CHECK(format_number(NAN) == "nan");
    CHECK(format_number(-INFINITY) == "-inf");
}

TEST_CASE("CSV quoting follows RFC 4180") {
    CHECK(CsvTable::escape("plain") == "plain");
    CHECK(CsvTable::escape("a,b") == "\"a,b\"");
    CHECK(CsvTable::escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(CsvTable::escape("two\nlines") == "\"two\nlines\"");
    CsvTable t({"x", "y"});
    t.add_row({"1", "a,b"});
    CHECK(t.str() == "x,y\r\n1,\"a,b\"\r\n");
    CHECK_THROWS(t.add_row({"1"}));
    CHECK_THROWS(CsvTable({}));
}

TEST_CASE("CSV round trip") {
    RngStream rng(3);
    const std::string alphabet = "ab,\"\r\n 1";
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t cols = 1 + rng.below(4);
        std::vector<std::string> head;
        for (std::size_t k = 0; k < cols; ++k) head.push_back("h" + std::to_string(k));
        CsvTable t(head);
        std::vector<std::vector<std::string>> rows{head};
        for (std::uint64_t r = rng.below(5); r > 0; --r) {
            std::vector<std::string> row;
            for (std::size_t k = 0; k < cols; ++k) {
                std::string f;
                for (std::uint64_t n = rng.below(6); n > 0; --n) f += alphabet[rng.below(alphabet.size())];
                row.push_back(f);
            }
            t.add_row(row);
            rows.push_back(row);
        }
        // A single empty field per line is indistinguishable from a blank line.
        if (cols == 1) continue;
        CHECK(parse_csv(t.str()) == rows);
    }
    CHECK_THROWS(parse_csv("\"open"));
}

TEST_CASE("SHA-256 test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("PPM heatmap") {
    Matrix m(2, 3);
    m << 1, 0, -1, 0.5, 0, -0.5;
    const std::string img = ppm_heatmap(m);
    const std::string head = "P6\n3 2\n255\n";
    REQUIRE(img.size() == head.size() + 18);
    CHECK(img.substr(0, head.size()) == head);
    auto px = [&](int i, int j) {
        const std::size_t o = head.size() + 3 * static_cast<std::size_t>(i * 3 + j);
        return std::array<int, 3>{static_cast<unsigned char>(img[o]), static_cast<unsigned char>(img[o + 1]),
                                  static_cast<unsigned char>(img[o + 2])};
    };
    CHECK(px(0, 0) == std::array<int, 3>{255, 0, 0});
    CHECK(px(0, 1) == std::array<int, 3>{255, 255, 255});
    CHECK(px(0, 2) == std::array<int, 3>{0, 0, 255});
    CHECK(px(1, 0) == std::array<int, 3>{255, 128, 128});
    CHECK_THROWS(ppm_heatmap(Matrix()));
}

TEST_CASE("SVG line plot") {
    const std::string svg =
        svg_line_plot({{"a<b", {0, 1, 2}, {1, 10, 100}}, {"c", {0, 2}, {0, 5}}}, {"t & u", "x", "y", true});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("t &amp; u") != std::string::npos);
    CHECK(svg.find("a&lt;b") != std::string::npos);
    // Two series, one polyline each; the zero is dropped on the log axis.
    std::size_t count = 0;
    for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++count;
    CHECK(count == 2);
    CHECK(svg == svg_line_plot({{"a<b", {0, 1, 2}, {1, 10, 100}}, {"c", {0, 2}, {0, 5}}}, {"t & u", "x", "y", true}));
    CHECK_THROWS(svg_line_plot({{"bad", {0, 1}, {1}}}, {}));
}

TEST_CASE("run output manifest") {
    const auto dir = scratch("manifest");
    RunOutput o(dir);
    o.write("a.csv", "x\r\n1\r\n");
    o.write_json("b.json", {{"k", 1}});
    o.finish("test", {{"seed", 5}}, 5);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m["command"] == "test");
    CHECK(m["seed"] == 5);
    CHECK(m["build"] == build_id());
    REQUIRE(m["outputs"].size() == 2);
    for (const auto& f : m["outputs"]) {
        const std::string body = slurp(dir / f["file"].get<std::string>());
        CHECK(f["sha256"] == sha256_hex(body));
        CHECK(f["bytes"] == body.size());
    }
    std::filesystem::remove_all(dir.parent_path());
}
