#include "pyramid/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifndef PYRAMID_GIT_DESCRIBE
#define PYRAMID_GIT_DESCRIBE "unknown"
#endif

namespace pyramid {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);  // no "-0"
    return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    if (header_.empty()) throw std::invalid_argument("CSV table needs a header");
}

void CsvTable::add_row(std::vector<std::string> fields) {
    if (fields.size() != header_.size())
        throw std::invalid_argument("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                                    std::to_string(header_.size()));
    rows_.push_back(std::move(fields));
}

std::string CsvTable::escape(const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string CsvTable::str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& r) {
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (k) out += ',';
            out += escape(r[k]);
        }
        out += "\r\n";
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw std::invalid_argument("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string svg_line_plot(const std::vector<PlotSeries>& series, const PlotOptions& opt) {
    const double ml = 70, mr = 20, mt = 36, mb = 50;
    const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    auto ty = [&](double y) { return opt.log_y ? std::log10(y) : y; };
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("plot series '" + s.name + "' has ragged data");
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (opt.log_y && !(s.y[k] > 0.0)) continue;
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    }
    if (!(x1 >= x0)) x0 = 0, x1 = 1;
    if (!(y1 >= y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return mt + ph - (ty(y) - y0) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << opt.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(opt.title) << "</text>\n";
    o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
        const double gx = ml + pw * k / 4.0, gy = mt + ph - ph * k / 4.0;
        o << "<text x=\"" << gx << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">" << format_number(fx)
          << "</text>\n";
        o << "<text x=\"" << ml - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">"
          << format_number(opt.log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    }
    o << "<text x=\"" << ml + pw / 2 << "\" y=\"" << opt.height - 10 << "\" text-anchor=\"middle\">"
      << xml_escape(opt.x_label) << "</text>\n";
    o << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(opt.y_label) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* col = kPalette[s % (sizeof kPalette / sizeof *kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t k = 0; k < series[s].x.size(); ++k) {
            if (opt.log_y && !(series[s].y[k] > 0.0)) continue;
            if (!first) o << ' ';
            first = false;
            o << format_number(px(series[s].x[k])) << ',' << format_number(py(series[s].y[k]));
        }
        o << "\"/>\n";
        o << "<text x=\"" << ml + pw - 4 << "\" y=\"" << mt + 16 + 14 * s << "\" text-anchor=\"end\" fill=\"" << col
          << "\">" << xml_escape(series[s].name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string ppm_heatmap(const Matrix& m) {
    if (m.size() == 0) throw std::invalid_argument("heatmap of an empty matrix");
    const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
    std::string out = "P6\n" + std::to_string(m.cols()) + " " + std::to_string(m.rows()) + "\n255\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = std::clamp(m(i, j) / scale, -1.0, 1.0);
            const auto fade = static_cast<unsigned char>(std::lround(255.0 * (1.0 - std::abs(v))));
            const unsigned char r = v >= 0 ? 255 : fade, b = v <= 0 ? 255 : fade;
            out += static_cast<char>(r);
            out += static_cast<char>(fade);
            out += static_cast<char>(b);
        }
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned int k = 0; k < len; ++k) {
        s += hex[md[k] >> 4];
        s += hex[md[k] & 15];
    }
    return s;
}

std::string build_id() { return PYRAMID_GIT_DESCRIBE; }

RunOutput::RunOutput(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

void RunOutput::write(const std::string& name, const std::string& content) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << content;
    if (!f) throw std::runtime_error("short write to " + (dir_ / name).string());
    files_.push_back({{"file", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
}

void RunOutput::write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

void RunOutput::finish(const std::string& command, const nlohmann::json& config, std::uint64_t seed) {
    const nlohmann::json m = {
        {"command", command}, {"seed", seed}, {"build", build_id()}, {"config", config}, {"outputs", files_}};
    std::ofstream f(dir_ / "manifest.json", std::ios::binary);
    f << m.dump(2) << "\n";
    if (!f) throw std::runtime_error("cannot write manifest");
}

}  // namespace pyramid
