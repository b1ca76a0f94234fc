#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "igdm/errors.hpp"
#include "igdm/trainer.hpp"

namespace igdm {

// All numbers in the CSV artifacts are printed with %.17g so that reading a
// file back reproduces every double bit-for-bit.  NaN round-trips as "nan".
inline std::string format_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

inline double parse_full(const std::string& s, const std::string& context) {
    const char* c = s.c_str();
    char* end = nullptr;
    double v = std::strtod(c, &end);
    if (end == c || (end != nullptr && *end != '\0')) {
        throw format_error("metrics: bad number '" + s + "' in " + context);
    }
    return v;
}

inline const char* metrics_header() {
    return "epoch,loss_total,loss_ad,loss_igdm,clean_acc,pgd_acc,gd,gc,remainder,lr";
}

inline void write_metrics(const std::string& path, const std::vector<metric_record>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("metrics: cannot write " + path);
    out << metrics_header() << '\n';
    for (const metric_record& r : records) {
        out << r.epoch << ',' << format_full(r.loss_total) << ',' << format_full(r.loss_ad) << ','
            << format_full(r.loss_igdm) << ',' << format_full(r.clean_acc) << ','
            << format_full(r.pgd_acc) << ',' << format_full(r.gd) << ',' << format_full(r.gc)
            << ',' << format_full(r.remainder) << ',' << format_full(r.lr) << '\n';
    }
    if (!out) throw io_error("metrics: short write to " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

inline std::vector<metric_record> read_metrics(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("metrics: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw format_error("metrics: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != metrics_header()) {
        throw format_error("metrics: unexpected header in " + path);
    }
    std::vector<metric_record> records;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 10) {
            throw format_error("metrics: expected 10 columns in " + path);
        }
        metric_record r;
        r.epoch = static_cast<std::size_t>(std::strtoull(cells[0].c_str(), nullptr, 10));
        r.loss_total = parse_full(cells[1], path);
        r.loss_ad = parse_full(cells[2], path);
        r.loss_igdm = parse_full(cells[3], path);
        r.clean_acc = parse_full(cells[4], path);
        r.pgd_acc = parse_full(cells[5], path);
        r.gd = parse_full(cells[6], path);
        r.gc = parse_full(cells[7], path);
        r.remainder = parse_full(cells[8], path);
        r.lr = parse_full(cells[9], path);
        records.push_back(r);
    }
    return records;
}

inline void write_alignment_csv(const std::string& path, const alignment_report& rep) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("metrics: cannot write " + path);
    out << "gd,gc,pw_uniform,pw_adv,remainder\n";
    out << format_full(rep.gd) << ',' << format_full(rep.gc) << ',' << format_full(rep.pw_uniform)
        << ',' << format_full(rep.pw_adv) << ',' << format_full(rep.remainder) << '\n';
    if (!out) throw io_error("metrics: short write to " + path);
}

// ---- SVG line charts ----
// Plain handwritten SVG: fixed canvas, axes, one polyline per series, a small
// legend.  Output depends only on the numbers passed in, so chart files are
// stable artifacts that can be diffed across runs.

struct chart_series {
    std::string label;
    std::string color;
    std::vector<double> values;  // x is the index (epoch)
};

namespace detail {

struct chart_range {
    double lo = 0.0;
    double hi = 1.0;
};

inline chart_range series_range(const std::vector<chart_series>& series) {
    chart_range r;
    bool any = false;
    for (const chart_series& s : series) {
        for (double v : s.values) {
            if (!std::isfinite(v)) continue;
            if (!any) {
                r.lo = r.hi = v;
                any = true;
            } else {
                r.lo = std::min(r.lo, v);
                r.hi = std::max(r.hi, v);
            }
        }
    }
    if (!any) {
        r.lo = 0.0;
        r.hi = 1.0;
    }
    if (r.hi - r.lo < 1e-12) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    return r;
}

inline std::string chart_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
}

}  // namespace detail

inline std::string render_line_chart(const std::string& title,
                                     const std::vector<chart_series>& series) {
    if (series.empty()) throw std::invalid_argument("render_line_chart: no series");
    std::size_t n = 0;
    for (const chart_series& s : series) n = std::max(n, s.values.size());
    if (n == 0) throw std::invalid_argument("render_line_chart: empty series");

    const double width = 640.0, height = 400.0;
    const double left = 60.0, right = 20.0, top = 40.0, bottom = 40.0;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    detail::chart_range r = detail::series_range(series);

    auto x_of = [&](std::size_t i) {
        if (n == 1) return left + plot_w / 2.0;
        return left + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    auto y_of = [&](double v) { return top + plot_h * (1.0 - (v - r.lo) / (r.hi - r.lo)); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    svg << "  <text x=\"" << width / 2.0
        << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">"
        << title << "</text>\n";
    // axes
    svg << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n";
    svg << "  <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
    // y tick labels at lo/mid/hi
    for (int t = 0; t <= 2; ++t) {
        double v = r.lo + (r.hi - r.lo) * t / 2.0;
        svg << "  <text x=\"" << left - 6.0 << "\" y=\"" << y_of(v) + 4.0
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
            << detail::chart_num(v) << "</text>\n";
    }
    // x tick labels at first/last epoch
    svg << "  <text x=\"" << x_of(0) << "\" y=\"" << top + plot_h + 16.0
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">0</text>\n";
    if (n > 1) {
        svg << "  <text x=\"" << x_of(n - 1) << "\" y=\"" << top + plot_h + 16.0
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << n - 1
            << "</text>\n";
    }
    // series
    double legend_y = top + 4.0;
    for (const chart_series& s : series) {
        std::ostringstream pts;
        bool first = true;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            if (!std::isfinite(s.values[i])) continue;
            if (!first) pts << ' ';
            pts << detail::chart_num(x_of(i)) << ',' << detail::chart_num(y_of(s.values[i]));
            first = false;
        }
        if (!first) {
            svg << "  <polyline fill=\"none\" stroke=\"" << s.color
                << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
        }
        svg << "  <text x=\"" << left + plot_w - 4.0 << "\" y=\"" << legend_y + 8.0
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" fill=\""
            << s.color << "\">" << s.label << "</text>\n";
        legend_y += 14.0;
    }
    svg << "</svg>\n";
    return svg.str();
}

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + path);
    out << body;
    if (!out) throw io_error("short write to " + path);
}

inline void write_training_charts(const std::string& dir,
                                  const std::vector<metric_record>& records) {
    std::vector<double> rem, gd, gc, pgd, clean;
    for (const metric_record& r : records) {
        rem.push_back(r.remainder);
        gd.push_back(r.gd);
        gc.push_back(r.gc);
        pgd.push_back(r.pgd_acc);
        clean.push_back(r.clean_acc);
    }
    write_text_file(dir + "/remainder_vs_epoch.svg",
                    render_line_chart("remainder proportion vs epoch",
                                      {{"remainder", "#1f77b4", rem}}));
    write_text_file(dir + "/gradient_alignment_vs_epoch.svg",
                    render_line_chart("gradient distance / cosine vs epoch",
                                      {{"gd", "#d62728", gd}, {"gc", "#2ca02c", gc}}));
    write_text_file(dir + "/accuracy_vs_epoch.svg",
                    render_line_chart("held-out accuracy vs epoch",
                                      {{"robust", "#d62728", pgd}, {"clean", "#1f77b4", clean}}));
}

}  // namespace igdm
