#include "cardiofuse/evalx.hpp"

#include "cardiofuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace cardiofuse::evalx {
namespace {

void check_scores(const std::vector<ScoredSample>& scored, const char* op) {
    if (scored.empty()) throw EvalError(std::string(op) + ": empty input");
    for (const auto& s : scored) {
        if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
            throw EvalError(std::string(op) + ": score of sample '" + s.sample_id +
                            "' is not a finite value in [0,1]");
        }
        if (s.label != 0 && s.label != 1) {
            throw EvalError(std::string(op) + ": label of sample '" + s.sample_id + "' must be 0 or 1");
        }
    }
}

std::pair<std::size_t, std::size_t> class_counts(const std::vector<ScoredSample>& scored) {
    std::size_t pos = 0;
    for (const auto& s : scored) pos += s.label == 1;
    return {pos, scored.size() - pos};
}

void require_both_classes(const std::vector<ScoredSample>& scored, const char* op) {
    const auto [pos, neg] = class_counts(scored);
    if (pos == 0 || neg == 0) {
        throw EvalError(std::string(op) + ": needs both classes, got " + std::to_string(pos) +
                        " abnormal and " + std::to_string(neg) + " normal");
    }
}

std::string fmt_threshold(double t) {
    if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(17);
    os << t;
    return os.str();
}

double parse_threshold(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        return std::stod(s);
    }
    return j.get<double>();
}

} // namespace

std::string to_string(EvalMode mode) {
    return mode == EvalMode::SampleWise ? "sample_wise" : "record_wise";
}

EvalMode parse_eval_mode(const std::string& s) {
    if (s == "sample_wise") return EvalMode::SampleWise;
    if (s == "record_wise") return EvalMode::RecordWise;
    throw ConfigError("unknown evaluation mode '" + s + "' (expected sample_wise or record_wise)");
}

double Confusion::sensitivity() const {
    return positives() ? static_cast<double>(tp) / static_cast<double>(positives()) : 0.0;
}

double Confusion::specificity() const {
    return negatives() ? static_cast<double>(tn) / static_cast<double>(negatives()) : 0.0;
}

double Confusion::accuracy() const {
    return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0;
}

Confusion confusion(const std::vector<ScoredSample>& scored, double threshold) {
    check_scores(scored, "confusion");
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw EvalError("confusion: threshold must lie in [0,1]");
    }
    Confusion c;
    for (const auto& s : scored) {
        const bool predicted = s.score >= threshold;
        if (s.label == 1) {
            predicted ? ++c.tp : ++c.fn;
        } else {
            predicted ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

double gmean(double sensitivity, double specificity) { return std::sqrt(sensitivity * specificity); }

double optimal_threshold(const std::vector<ScoredSample>& val) {
    check_scores(val, "optimal_threshold");
    require_both_classes(val, "optimal_threshold");
    std::vector<double> scores;
    scores.reserve(val.size());
    for (const auto& s : val) scores.push_back(s.score);
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

    std::vector<double> candidates{0.0};
    for (std::size_t i = 1; i < scores.size(); ++i) candidates.push_back(0.5 * (scores[i - 1] + scores[i]));
    candidates.push_back(1.0);

    // G-mean^2 = tp*tn / (P*N) with P, N fixed, so comparing tp*tn is exact.
    double best_t = candidates.front();
    long double best = -1.0L;
    for (double t : candidates) {
        const auto c = confusion(val, t);
        const long double key = static_cast<long double>(c.tp) * static_cast<long double>(c.tn);
        if (key > best) {
            best = key;
            best_t = t;
        }
    }
    return best_t;
}

RocCurve roc_auc(const std::vector<ScoredSample>& scored) {
    check_scores(scored, "roc_auc");
    require_both_classes(scored, "roc_auc");
    const auto [pos, neg] = class_counts(scored);
    std::vector<std::pair<double, int>> sorted;
    sorted.reserve(scored.size());
    for (const auto& s : scored) sorted.emplace_back(s.score, s.label);
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    RocCurve roc;
    const double inf = std::numeric_limits<double>::infinity();
    roc.points.push_back({0.0, 0.0, inf});
    std::uint64_t tp = 0, fp = 0, twice_area = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        const double s = sorted[i].first;
        const std::uint64_t tp0 = tp, fp0 = fp;
        for (; i < sorted.size() && sorted[i].first == s; ++i) {
            sorted[i].second == 1 ? ++tp : ++fp;
        }
        twice_area += (fp - fp0) * (tp + tp0);
        roc.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                              static_cast<double>(tp) / static_cast<double>(pos), s});
    }
    roc.points.push_back({1.0, 1.0, -inf});
    roc.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return roc;
}

std::vector<ScoredSample> aggregate_records(const std::vector<ScoredSample>& samples) {
    check_scores(samples, "aggregate_records");
    struct Acc {
        std::size_t order;
        int label;
        double sum;
        std::size_t count;
    };
    std::unordered_map<std::string, Acc> acc;
    std::vector<std::string> order;
    for (const auto& s : samples) {
        if (s.record_id.empty()) {
            throw EvalError("aggregate_records: sample '" + s.sample_id + "' has no record_id");
        }
        auto [it, inserted] = acc.try_emplace(s.record_id, Acc{order.size(), s.label, 0.0, 0});
        if (inserted) order.push_back(s.record_id);
        if (it->second.label != s.label) {
            throw EvalError("aggregate_records: record '" + s.record_id + "' has conflicting labels");
        }
        it->second.sum += s.score;
        ++it->second.count;
    }
    std::vector<ScoredSample> out;
    out.reserve(order.size());
    for (const auto& id : order) {
        const auto& a = acc.at(id);
        out.push_back({id, id, a.label, a.sum / static_cast<double>(a.count)});
    }
    return out;
}

MetricsReport evaluate(const std::vector<ScoredSample>& scored, double threshold, EvalMode mode) {
    const auto rows = mode == EvalMode::RecordWise ? aggregate_records(scored) : scored;
    MetricsReport r;
    r.mode = mode;
    r.threshold = threshold;
    r.counts = confusion(rows, threshold);
    r.sensitivity = r.counts.sensitivity();
    r.specificity = r.counts.specificity();
    r.accuracy = r.counts.accuracy();
    r.gmean = gmean(r.sensitivity, r.specificity);
    auto roc = roc_auc(rows);
    r.auc = roc.auc;
    r.roc = std::move(roc.points);
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json roc = nlohmann::json::array();
    for (const auto& p : r.roc) {
        nlohmann::json t = std::isinf(p.threshold) ? nlohmann::json(fmt_threshold(p.threshold))
                                                   : nlohmann::json(p.threshold);
        roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", t}});
    }
    return {{"mode", to_string(r.mode)},
            {"threshold", r.threshold},
            {"tp", r.counts.tp},
            {"tn", r.counts.tn},
            {"fp", r.counts.fp},
            {"fn", r.counts.fn},
            {"sensitivity", r.sensitivity},
            {"specificity", r.specificity},
            {"accuracy", r.accuracy},
            {"gmean", r.gmean},
            {"auc", r.auc},
            {"roc", roc}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
    try {
        MetricsReport r;
        r.mode = parse_eval_mode(j.at("mode").get<std::string>());
        r.threshold = j.at("threshold").get<double>();
        r.counts.tp = j.at("tp").get<std::size_t>();
        r.counts.tn = j.at("tn").get<std::size_t>();
        r.counts.fp = j.at("fp").get<std::size_t>();
        r.counts.fn = j.at("fn").get<std::size_t>();
        r.sensitivity = j.at("sensitivity").get<double>();
        r.specificity = j.at("specificity").get<double>();
        r.accuracy = j.at("accuracy").get<double>();
        r.gmean = j.at("gmean").get<double>();
        r.auc = j.at("auc").get<double>();
        for (const auto& p : j.at("roc")) {
            r.roc.push_back({p.at("fpr").get<double>(), p.at("tpr").get<double>(),
                             parse_threshold(p.at("threshold"))});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw EvalError(std::string("metrics report: ") + e.what());
    }
}

std::string roc_csv(const std::vector<RocPoint>& roc) {
    std::ostringstream os;
    os.precision(17);
    os << "fpr,tpr,threshold\n";
    for (const auto& p : roc) os << p.fpr << ',' << p.tpr << ',' << fmt_threshold(p.threshold) << '\n';
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw EvalError("cannot write " + path.string());
    f << text;
    if (!f) throw EvalError("short write to " + path.string());
}

void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& roc) {
    write_text(path, roc_csv(roc));
}

std::string roc_svg(const std::vector<RocSeries>& series, const std::string& title) {
    constexpr double size = 360.0, margin = 48.0;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    auto px = [&](double fpr) { return margin + fpr * size; };
    auto py = [&](double tpr) { return margin + (1.0 - tpr) * size; };
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    const double w = size + 2 * margin + 160;
    const double h = size + 2 * margin;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << margin << "\" y=\"" << margin / 2 << "\" font-size=\"14\">" << title << "</text>\n";
    os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
       << "\" stroke=\"#aaa\" stroke-dasharray=\"4 4\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = i / 4.0;
        os << "<text x=\"" << px(v) - 8 << "\" y=\"" << margin + size + 16 << "\">" << v << "</text>\n";
        os << "<text x=\"" << margin - 34 << "\" y=\"" << py(v) + 4 << "\">" << v << "</text>\n";
    }
    os << "<text x=\"" << margin + size / 2 - 60 << "\" y=\"" << h - 8
       << "\">False positive rate</text>\n";
    os << "<text transform=\"translate(12," << margin + size / 2 + 50
       << ") rotate(-90)\">True positive rate</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % std::size(colors)];
        os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << color << "\" points=\"";
        for (const auto& p : series[s].roc) os << px(p.fpr) << ',' << py(p.tpr) << ' ';
        os << "\"/>\n";
        const double ly = margin + 16 + 18 * static_cast<double>(s);
        os << "<line x1=\"" << margin + size + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << margin + size + 32
           << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os.precision(3);
        os << "<text x=\"" << margin + size + 36 << "\" y=\"" << ly << "\">" << series[s].label
           << " (AUC " << series[s].auc << ")</text>\n";
        os.precision(2);
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace cardiofuse::evalx
