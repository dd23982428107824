#include "sift/cli/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "sift/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sift::cli {

namespace {

json rate(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
json percent(double v) { return std::isfinite(v) ? json(std::round(v * 1e6) / 1e4) : json(nullptr); }

std::string format(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

json to_json(const MetricReport& r) {
    const std::pair<const char*, double> rates[] = {{"auc", r.auc},
                                                    {"npv", r.npv},
                                                    {"normal_recall", r.normal_recall},
                                                    {"abnormal_recall", r.abnormal_recall},
                                                    {"spec_at_87", r.spec_at_87},
                                                    {"spec_at_80", r.spec_at_80}};
    json fraction = json::object(), pct = json::object();
    for (const auto& [name, value] : rates) {
        fraction[name] = rate(value);
        pct[name] = percent(value);
    }
    return {{"fraction", fraction},
            {"percent", pct},
            {"npv_defined", r.npv_defined},
            {"threshold_used", rate(r.threshold_used)},
            {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}}};
}

void write_roc_csv(std::span<const RocPoint> curve, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "fpr,tpr,threshold\n";
    for (const auto& p : curve) out << format(p.fpr) << ',' << format(p.tpr) << ',' << format(p.threshold) << '\n';
    if (!out) throw Error("failed writing " + path.string());
}

std::vector<RocPoint> read_roc_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "fpr,tpr,threshold") throw Error(path.string() + ": expected header fpr,tpr,threshold");
    std::vector<RocPoint> curve;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string f, t, th;
        if (!std::getline(fields, f, ',') || !std::getline(fields, t, ',') || !std::getline(fields, th))
            throw ManifestError("expected 3 columns", row);
        try {
            RocPoint p;
            p.fpr = std::stod(f);
            p.tpr = std::stod(t);
            p.threshold = th == "inf" ? std::numeric_limits<double>::infinity() : std::stod(th);
            curve.push_back(p);
        } catch (const std::exception&) {
            throw ManifestError("non-numeric ROC value", row);
        }
    }
    if (curve.size() < 2) throw Error(path.string() + ": ROC needs at least two points");
    return curve;
}

std::string render_roc_svg(std::span<const RocPoint> curve, const std::string& title) {
    constexpr double size = 400, margin = 50;
    auto px = [&](double fpr) { return margin + fpr * size; };
    auto py = [&](double tpr) { return margin + (1.0 - tpr) * size; };
    const double area = trapezoid_area(curve);

    std::ostringstream svg;
    svg.setf(std::ios::fixed);
    svg.precision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\""
        << size + 2 * margin << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
        << "\" fill=\"white\" stroke=\"black\"/>\n";
    for (int i = 1; i < 5; ++i) {
        const double v = i / 5.0;
        svg << "<line x1=\"" << px(v) << "\" y1=\"" << py(0) << "\" x2=\"" << px(v) << "\" y2=\"" << py(1)
            << "\" stroke=\"#ddd\"/>\n";
        svg << "<line x1=\"" << px(0) << "\" y1=\"" << py(v) << "\" x2=\"" << px(1) << "\" y2=\"" << py(v)
            << "\" stroke=\"#ddd\"/>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        svg << "<text x=\"" << px(v) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\">" << v << "</text>\n";
        svg << "<text x=\"" << px(0) - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
    }
    svg << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
        << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
    svg << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
    for (const auto& p : curve) svg << px(p.fpr) << ',' << py(p.tpr) << ' ';
    svg << "\"/>\n";
    svg << "<text x=\"" << px(0.5) << "\" y=\"" << margin - 18 << "\" text-anchor=\"middle\" font-size=\"14\">"
        << title << "</text>\n";
    svg << "<text x=\"" << px(0.5) << "\" y=\"" << py(0) + 36 << "\" text-anchor=\"middle\">False positive rate</text>\n";
    svg << "<text transform=\"translate(" << margin - 36 << "," << py(0.5)
        << ") rotate(-90)\" text-anchor=\"middle\">True positive rate</text>\n";
    svg.precision(4);
    svg << "<text x=\"" << px(0.95) << "\" y=\"" << py(0.05) << "\" text-anchor=\"end\">AUC = " << area << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace sift::cli
