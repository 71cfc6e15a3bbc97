#pragma once

// Report tables and raster plots for grid results.
//
// Output layout under a directory:
//   report.csv        variant,fraction,K,seed,mse,mae,wall_time_s (normalized-space metrics)
//   report_raw.csv    same columns, metrics in raw target units
//   failures.csv      variant,fraction,K,seed,reason (only when a cell failed)
//   traces.csv        K,seed,variant,step,truth,pred for the plotted test windows
//   plots/horizon_<K>_seed_<s>.<ext>, plots/scarcity.<ext>

#include "hyperload/dataset.hpp"
#include "hyperload/errors.hpp"
#include "hyperload/evalbench.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace hyperload {

inline constexpr const char* kReportHeader = "variant,fraction,K,seed,mse,mae,wall_time_s";

namespace detail {

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create directory '" + dir + "'");
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    return out;
}

inline std::string csv_line(const ReportRow& r, double mse, double mae) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%g,%zu,%llu,%.17g,%.17g,%.9f", r.variant.c_str(), r.fraction, r.horizon,
                  static_cast<unsigned long long>(r.seed), mse, mae, r.wall_time_s);
    return buf;
}

} // namespace detail

/// Writes report.csv, report_raw.csv and, if any cell failed, failures.csv.
inline void emit_report(const std::vector<ReportRow>& rows, const std::string& dir) {
    if (rows.empty()) {
        throw ConfigError("emit_report: no rows");
    }
    detail::ensure_dir(dir);
    auto report = detail::open_out(dir + "/report.csv");
    auto raw = detail::open_out(dir + "/report_raw.csv");
    report << kReportHeader << '\n';
    raw << kReportHeader << '\n';
    std::vector<const ReportRow*> failed;
    for (const auto& r : rows) {
        if (!r.ok) {
            failed.push_back(&r);
            continue;
        }
        report << detail::csv_line(r, r.mse, r.mae) << '\n';
        raw << detail::csv_line(r, r.raw_mse, r.raw_mae) << '\n';
    }
    const std::string failures = dir + "/failures.csv";
    if (!failed.empty()) {
        auto f = detail::open_out(failures);
        f << "variant,fraction,K,seed,reason\n";
        for (const auto* r : failed) {
            std::string reason = r->reason;
            std::replace(reason.begin(), reason.end(), ',', ';');
            std::replace(reason.begin(), reason.end(), '\n', ' ');
            f << r->variant << ',' << r->fraction << ',' << r->horizon << ',' << r->seed << ',' << reason << '\n';
        }
    } else {
        std::filesystem::remove(failures);
    }
    if (!report || !raw) {
        throw IoError("failed writing report files in '" + dir + "'");
    }
}

inline std::vector<ReportRow> read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::string line;
    std::getline(in, line);
    if (detail::trim(line) != kReportHeader) {
        throw SchemaError("'" + path + "': unexpected header");
    }
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 7) {
            throw SchemaError("'" + path + "': expected 7 columns");
        }
        ReportRow r;
        r.variant = std::string(cells[0]);
        const auto f = detail::parse_double(cells[1]);
        const auto k = detail::parse_double(cells[2]);
        const auto s = detail::parse_double(cells[3]);
        const auto mse = detail::parse_double(cells[4]);
        const auto mae = detail::parse_double(cells[5]);
        const auto wt = detail::parse_double(cells[6]);
        if (!f || !k || !s || !mse || !mae || !wt) {
            throw SchemaError("'" + path + "': non-numeric field in row: " + line);
        }
        r.fraction = *f;
        r.horizon = static_cast<std::size_t>(*k);
        r.seed = static_cast<std::uint64_t>(*s);
        r.mse = *mse;
        r.mae = *mae;
        r.wall_time_s = *wt;
        rows.push_back(r);
    }
    return rows;
}

inline void emit_traces(const std::vector<ForecastTrace>& traces, const std::string& dir) {
    detail::ensure_dir(dir);
    auto out = detail::open_out(dir + "/traces.csv");
    out << "K,seed,variant,step,truth,pred\n";
    char buf[160];
    for (const auto& t : traces) {
        for (Eigen::Index i = 0; i < t.truth.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%llu,%s,%ld,%.17g,%.17g\n", t.horizon,
                          static_cast<unsigned long long>(t.seed), t.variant.c_str(), static_cast<long>(i), t.truth(i),
                          t.pred(i));
            out << buf;
        }
    }
}

inline std::vector<ForecastTrace> read_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::string line;
    std::getline(in, line);
    std::map<std::tuple<std::size_t, std::uint64_t, std::string>, std::vector<std::pair<double, double>>> acc;
    std::vector<std::tuple<std::size_t, std::uint64_t, std::string>> order;
    while (std::getline(in, line)) {
        const auto c = detail::split_csv_line(line);
        if (c.size() != 6) {
            continue;
        }
        const auto key = std::make_tuple(static_cast<std::size_t>(*detail::parse_double(c[0])),
                                         static_cast<std::uint64_t>(*detail::parse_double(c[1])), std::string(c[2]));
        if (!acc.count(key)) {
            order.push_back(key);
        }
        acc[key].emplace_back(*detail::parse_double(c[4]), *detail::parse_double(c[5]));
    }
    std::vector<ForecastTrace> out;
    for (const auto& key : order) {
        const auto& pts = acc[key];
        ForecastTrace t{std::get<0>(key), std::get<1>(key), std::get<2>(key), Vector(pts.size()), Vector(pts.size())};
        for (std::size_t i = 0; i < pts.size(); ++i) {
            t.truth(static_cast<Eigen::Index>(i)) = pts[i].first;
            t.pred(static_cast<Eigen::Index>(i)) = pts[i].second;
        }
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raster output

enum class ImageFormat { png, ppm };

inline ImageFormat parse_image_format(const std::string& s) {
    if (s == "png") return ImageFormat::png;
    if (s == "ppm") return ImageFormat::ppm;
    throw ConfigError("image format must be 'png' or 'ppm', got '" + s + "'");
}

inline const char* extension(ImageFormat f) { return f == ImageFormat::png ? "png" : "ppm"; }

using Rgb = std::array<std::uint8_t, 3>;

/** An RGB canvas with just enough drawing for line and bar charts. */
class Canvas {
public:
    Canvas(int width, int height, Rgb background = {255, 255, 255})
        : width_(width), height_(height), pixels_(static_cast<std::size_t>(width * height), background) {}

    int width() const { return width_; }
    int height() const { return height_; }

    void set(int x, int y, Rgb c) {
        if (x >= 0 && y >= 0 && x < width_ && y < height_) {
            pixels_[static_cast<std::size_t>(y * width_ + x)] = c;
        }
    }

    Rgb at(int x, int y) const { return pixels_[static_cast<std::size_t>(y * width_ + x)]; }

    void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
        for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
            for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) {
                set(x, y, c);
            }
        }
    }

    /// Bresenham line, drawn `thickness` pixels wide.
    void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
        const int dx = std::abs(x1 - x0);
        const int dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1;
        const int sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        const int r = thickness / 2;
        while (true) {
            fill_rect(x0 - r, y0 - r, x0 + r, y0 + r, c);
            if (x0 == x1 && y0 == y1) {
                break;
            }
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void write(const std::string& path, ImageFormat format) const {
        auto out = detail::open_out(path);
        if (format == ImageFormat::ppm) {
            out << "P6\n" << width_ << ' ' << height_ << "\n255\n";
            for (const auto& p : pixels_) {
                out.write(reinterpret_cast<const char*>(p.data()), 3);
            }
        } else {
            const auto png = encode_png();
            out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
        }
        if (!out) {
            throw IoError("failed writing '" + path + "'");
        }
    }

    std::vector<std::uint8_t> encode_png() const {
        std::vector<std::uint8_t> raw;
        raw.reserve(static_cast<std::size_t>(height_ * (1 + 3 * width_)));
        for (int y = 0; y < height_; ++y) {
            raw.push_back(0);  // filter: none
            for (int x = 0; x < width_; ++x) {
                const Rgb& p = pixels_[static_cast<std::size_t>(y * width_ + x)];
                raw.insert(raw.end(), p.begin(), p.end());
            }
        }
        uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
        std::vector<std::uint8_t> z(zlen);
        if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
            throw IoError("PNG compression failed");
        }
        z.resize(zlen);

        std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
        auto be32 = [](std::vector<std::uint8_t>& v, std::uint32_t x) {
            v.push_back(static_cast<std::uint8_t>(x >> 24));
            v.push_back(static_cast<std::uint8_t>(x >> 16));
            v.push_back(static_cast<std::uint8_t>(x >> 8));
            v.push_back(static_cast<std::uint8_t>(x));
        };
        auto chunk = [&](const char* type, const std::vector<std::uint8_t>& data) {
            be32(png, static_cast<std::uint32_t>(data.size()));
            std::vector<std::uint8_t> body(type, type + 4);
            body.insert(body.end(), data.begin(), data.end());
            png.insert(png.end(), body.begin(), body.end());
            be32(png, static_cast<std::uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size()))));
        };
        std::vector<std::uint8_t> ihdr;
        be32(ihdr, static_cast<std::uint32_t>(width_));
        be32(ihdr, static_cast<std::uint32_t>(height_));
        ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
        chunk("IHDR", ihdr);
        chunk("IDAT", z);
        chunk("IEND", {});
        return png;
    }

private:
    int width_;
    int height_;
    std::vector<Rgb> pixels_;
};

inline const std::vector<Rgb>& palette() {
    static const std::vector<Rgb> p{{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                    {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127}};
    return p;
}

namespace detail {

struct PlotFrame {
    int left = 50, right = 20, top = 20, bottom = 40;
    int width = 800, height = 400;
    int x0() const { return left; }
    int x1() const { return width - right; }
    int y0() const { return top; }
    int y1() const { return height - bottom; }
};

inline void draw_axes(Canvas& c, const PlotFrame& f) {
    const Rgb axis{0, 0, 0};
    const Rgb grid{225, 225, 225};
    for (int i = 1; i < 5; ++i) {
        const int y = f.y0() + (f.y1() - f.y0()) * i / 5;
        c.line(f.x0(), y, f.x1(), y, grid);
    }
    c.line(f.x0(), f.y1(), f.x1(), f.y1(), axis, 2);
    c.line(f.x0(), f.y0(), f.x0(), f.y1(), axis, 2);
}

} // namespace detail

/// Truth (black) and each variant's forecast (palette colours) for one horizon and seed.
inline void plot_forecasts(const std::vector<const ForecastTrace*>& traces, const std::string& path, ImageFormat format) {
    if (traces.empty()) {
        throw ConfigError("plot_forecasts: no traces");
    }
    detail::PlotFrame f;
    Canvas c(f.width, f.height);
    double lo = traces.front()->truth.minCoeff();
    double hi = traces.front()->truth.maxCoeff();
    for (const auto* t : traces) {
        lo = std::min({lo, t->pred.minCoeff(), t->truth.minCoeff()});
        hi = std::max({hi, t->pred.maxCoeff(), t->truth.maxCoeff()});
    }
    if (!(hi > lo)) {
        hi = lo + 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    detail::draw_axes(c, f);
    const Eigen::Index n = traces.front()->truth.size();
    auto px = [&](Eigen::Index i) {
        return n <= 1 ? f.x0() : f.x0() + static_cast<int>(std::lround(static_cast<double>(i) * (f.x1() - f.x0()) /
                                                                       static_cast<double>(n - 1)));
    };
    auto py = [&](double v) { return f.y1() - static_cast<int>(std::lround((v - lo) / (hi - lo) * (f.y1() - f.y0()))); };
    auto series = [&](const Vector& v, Rgb col, int thick) {
        for (Eigen::Index i = 1; i < v.size(); ++i) {
            c.line(px(i - 1), py(v(i - 1)), px(i), py(v(i)), col, thick);
        }
        if (v.size() == 1) {
            c.fill_rect(px(0) - 2, py(v(0)) - 2, px(0) + 2, py(v(0)) + 2, col);
        }
    };
    for (std::size_t k = 0; k < traces.size(); ++k) {
        series(traces[k]->pred, palette()[k % palette().size()], 2);
    }
    series(traces.front()->truth, Rgb{0, 0, 0}, 3);
    // legend swatches, one per variant in trace order
    for (std::size_t k = 0; k < traces.size(); ++k) {
        const int x = f.x0() + 10 + static_cast<int>(k) * 30;
        c.fill_rect(x, f.height - 25, x + 20, f.height - 15, palette()[k % palette().size()]);
    }
    c.write(path, format);
}

/// Mean test MSE per variant and training fraction as grouped bars (fractions descending within each group).
inline void plot_scarcity(const std::vector<ReportRow>& rows, const std::string& path, ImageFormat format) {
    std::vector<std::string> variants;
    std::set<double, std::greater<>> fractions;
    std::map<std::pair<std::string, double>, std::pair<double, int>> acc;
    for (const auto& r : rows) {
        if (!r.ok) {
            continue;
        }
        if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) {
            variants.push_back(r.variant);
        }
        fractions.insert(r.fraction);
        auto& a = acc[{r.variant, r.fraction}];
        a.first += r.mse;
        a.second += 1;
    }
    if (variants.empty()) {
        throw ConfigError("plot_scarcity: no successful rows");
    }
    double hi = 0.0;
    for (const auto& [key, a] : acc) {
        hi = std::max(hi, a.first / a.second);
    }
    if (!(hi > 0.0)) {
        hi = 1.0;
    }
    detail::PlotFrame f;
    Canvas c(f.width, f.height);
    detail::draw_axes(c, f);
    const int groups = static_cast<int>(variants.size());
    const int per = static_cast<int>(fractions.size());
    const int group_w = (f.x1() - f.x0()) / groups;
    const int bar_w = std::max(2, (group_w - 10) / per);
    for (int g = 0; g < groups; ++g) {
        int b = 0;
        for (double fr : fractions) {
            auto it = acc.find({variants[static_cast<std::size_t>(g)], fr});
            if (it != acc.end()) {
                const double v = it->second.first / it->second.second;
                const int x = f.x0() + g * group_w + 5 + b * bar_w;
                const int y = f.y1() - static_cast<int>(std::lround(v / (hi * 1.05) * (f.y1() - f.y0())));
                c.fill_rect(x, y, x + bar_w - 2, f.y1() - 1, palette()[static_cast<std::size_t>(b) % palette().size()]);
            }
            ++b;
        }
    }
    c.write(path, format);
}

/// Writes plots/horizon_<K>_seed_<s>.<ext> for each traced (K, seed) and plots/scarcity.<ext>.
inline std::vector<std::string> emit_plots(const std::vector<ReportRow>& rows, const std::vector<ForecastTrace>& traces,
                                           const std::string& dir, ImageFormat format = ImageFormat::png) {
    if (rows.empty()) {
        throw ConfigError("emit_plots: no rows");
    }
    const std::string plots = dir + "/plots";
    detail::ensure_dir(plots);
    std::vector<std::string> written;
    std::map<std::pair<std::size_t, std::uint64_t>, std::vector<const ForecastTrace*>> groups;
    for (const auto& t : traces) {
        groups[{t.horizon, t.seed}].push_back(&t);
    }
    for (const auto& [key, group] : groups) {
        const std::string p = plots + "/horizon_" + std::to_string(key.first) + "_seed_" + std::to_string(key.second) +
                              "." + extension(format);
        plot_forecasts(group, p, format);
        written.push_back(p);
    }
    const std::string s = plots + "/scarcity." + std::string(extension(format));
    plot_scarcity(rows, s, format);
    written.push_back(s);
    return written;
}

} // namespace hyperload
