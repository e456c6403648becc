#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mtkd/trainer.hpp"

namespace mtkd {

/// Read a metrics CSV written by metrics_to_csv back into memory.
inline RunMetrics parse_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("metrics: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw FormatError("metrics: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    // teacher count from the number of w_l_* columns
    std::size_t m_count = 0;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ','))
            if (col.rfind("w_l_", 0) == 0) ++m_count;
    }
    if (line != metrics_csv_header(m_count))
        throw FormatError("metrics: unexpected header in " + path);

    RunMetrics rm;
    rm.teacher_count = m_count;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7 + 3 * m_count)
            throw FormatError("metrics: row " + std::to_string(lineno) + " in " + path +
                              " has " + std::to_string(fields.size()) + " fields");
        EpochRow row;
        row.epoch = static_cast<std::size_t>(std::stoull(fields[0]));
        row.strategy = fields[1];
        row.total_loss = std::stod(fields[2]);
        row.task_loss = std::stod(fields[3]);
        row.logit_kd = std::stod(fields[4]);
        row.feature_kd = std::stod(fields[5]);
        row.acc = std::stod(fields[6]);
        for (std::size_t m = 0; m < m_count; ++m)
            row.mean_w_logit.push_back(std::stod(fields[7 + m]));
        for (std::size_t m = 0; m < m_count; ++m)
            row.mean_w_feature.push_back(std::stod(fields[7 + m_count + m]));
        for (std::size_t m = 0; m < m_count; ++m)
            row.mean_reward.push_back(std::stod(fields[7 + 2 * m_count + m]));
        rm.rows.push_back(std::move(row));
        if (rm.strategy.empty()) rm.strategy = rm.rows.back().strategy;
    }
    return rm;
}

struct StrategySummary {
    std::string strategy;
    std::size_t runs = 0;
    double mean_final_acc = 0.0;
    double std_final_acc = 0.0;
};

/// Group runs by strategy tag and summarize final accuracy, sorted best
/// first.
inline std::vector<StrategySummary> summarize_runs(const std::vector<RunMetrics>& runs) {
    std::map<std::string, std::vector<double>> by_strategy;
    for (const RunMetrics& rm : runs)
        if (!rm.rows.empty()) by_strategy[rm.strategy].push_back(rm.rows.back().acc);
    std::vector<StrategySummary> out;
    for (const auto& [name, accs] : by_strategy) {
        StrategySummary s;
        s.strategy = name;
        s.runs = accs.size();
        s.mean_final_acc = mean(accs);
        double var = 0.0;
        for (double a : accs) var += (a - s.mean_final_acc) * (a - s.mean_final_acc);
        s.std_final_acc = std::sqrt(var / static_cast<double>(accs.size()));
        out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.mean_final_acc > b.mean_final_acc ||
               (a.mean_final_acc == b.mean_final_acc && a.strategy < b.strategy);
    });
    return out;
}

inline std::string summary_table_text(const std::vector<StrategySummary>& rows) {
    std::ostringstream out;
    out << "strategy    runs  mean_acc   std_acc\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-10s %5zu  %8.4f  %8.4f\n", r.strategy.c_str(),
                      r.runs, r.mean_final_acc, r.std_final_acc);
        out << buf;
    }
    return out.str();
}

inline std::string summary_table_csv(const std::vector<StrategySummary>& rows) {
    std::string out = "strategy,runs,mean_acc,std_acc\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%.10g,%.10g\n", r.strategy.c_str(), r.runs,
                      r.mean_final_acc, r.std_final_acc);
        out += buf;
    }
    return out;
}

struct Series {
    std::string name;
    std::vector<double> values;  // x is the index
};

/// Self-contained SVG line chart, one polyline per series. No external
/// renderer involved; the output is deterministic and diffable.
inline std::string svg_line_chart(const std::vector<Series>& series,
                                  const std::string& title, const std::string& y_label) {
    const double width = 720, height = 440;
    const double ml = 60, mr = 160, mt = 40, mb = 40;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double lo = 0.0, hi = 1.0;
    std::size_t n = 1;
    bool first = true;
    for (const Series& s : series)
        for (double v : s.values) {
            if (first) {
                lo = hi = v;
                first = false;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (const Series& s : series) n = std::max(n, s.values.size());
    if (hi == lo) hi = lo + 1.0;

    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                    "#bcbd22", "#17becf"};
    char buf[256];
    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
        << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" "
           "font-size=\"16\">"
        << title << "</text>\n";
    // axes
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"black\"/>\n",
                  ml, mt + ph, ml + pw, mt + ph);
    svg << buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"black\"/>\n",
                  ml, mt, ml, mt + ph);
    svg << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"8\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\">"
                  "%.3g</text>\n",
                  mt + 6, hi);
    svg << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"8\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\">"
                  "%.3g</text>\n",
                  mt + ph, lo);
    svg << buf;
    svg << "<text x=\"8\" y=\"" << mt - 8
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << y_label << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = palette[si % 10];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" "
            << "points=\"";
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            double x = ml + (n > 1 ? pw * static_cast<double>(i) /
                                         static_cast<double>(n - 1)
                                   : 0.0);
            double y = mt + ph - ph * (s.values[i] - lo) / (hi - lo);
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
            svg << buf;
        }
        svg << "\"/>\n";
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" "
                      "font-size=\"12\" fill=\"%s\">%s</text>\n",
                      ml + pw + 10, mt + 16 + 16 * static_cast<double>(si), color,
                      s.name.c_str());
        svg << buf;
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace mtkd
