#pragma once

// Report writers: RFC-4180 CSV, SVG line plots, PPM heatmaps, SHA-256 and a
// run manifest. Every writer is a pure function of its input so repeated runs
// give byte-identical files.

#include "pyramid/core.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace pyramid {

// Fixed-precision decimal for reports (%.12g; "nan", "inf", "-inf").
std::string format_number(double v);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(std::vector<std::string> fields);
    [[nodiscard]] std::size_t rows() const { return rows_.size(); }
    // Header first, CRLF line endings, fields quoted only when needed.
    [[nodiscard]] std::string str() const;
    static std::string escape(const std::string& field);

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// Parses RFC-4180 text back into rows (header included); used in tests and
// for reading tables back.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    int width = 640;
    int height = 400;
};

std::string svg_line_plot(const std::vector<PlotSeries>& series, const PlotOptions& opt);

// Binary P6 image, one pixel per matrix entry (row i is image row i),
// blue-white-red diverging map symmetric around zero.
std::string ppm_heatmap(const Matrix& m);

std::string sha256_hex(const std::string& bytes);

// Collects files written under one output directory and produces the
// manifest: command, effective config, seed, build id and output hashes.
class RunOutput {
public:
    explicit RunOutput(std::filesystem::path dir);

    void write(const std::string& name, const std::string& content);
    void write_json(const std::string& name, const nlohmann::json& j);
    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }
    // Writes manifest.json; the manifest itself is not listed.
    void finish(const std::string& command, const nlohmann::json& config, std::uint64_t seed);

private:
    std::filesystem::path dir_;
    nlohmann::json files_ = nlohmann::json::array();
};

// git describe of the tree the binary was built from.
std::string build_id();

}  // namespace pyramid
