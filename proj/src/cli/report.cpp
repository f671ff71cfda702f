#include "cardiofuse/cli.hpp"

#include <cmath>
#include <cstdio>

namespace cardiofuse::cli {
namespace {

double pct(double v) { return std::round(v * 10000.0) / 100.0; }

std::string pct_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", pct(v));
    return buf;
}

} // namespace

nlohmann::json table_row(const evalx::MetricsReport& r) {
    return {{"Sen", pct_str(r.sensitivity)},
            {"Spe", pct_str(r.specificity)},
            {"Acc", pct_str(r.accuracy)},
            {"AUC", pct_str(r.auc)},
            {"G-mean", pct_str(r.gmean)}};
}

std::string format_report(const std::string& title, const evalx::MetricsReport& r) {
    char thr[32];
    std::snprintf(thr, sizeof thr, "%.4f", r.threshold);
    std::string s = title + " [" + evalx::to_string(r.mode) + ", threshold " + thr + "]\n";
    s += "  Sen " + pct_str(r.sensitivity) + "  Spe " + pct_str(r.specificity) + "  Acc " + pct_str(r.accuracy) +
         "  AUC " + pct_str(r.auc) + "  G-mean " + pct_str(r.gmean) + "\n";
    s += "  tp " + std::to_string(r.counts.tp) + "  tn " + std::to_string(r.counts.tn) + "  fp " +
         std::to_string(r.counts.fp) + "  fn " + std::to_string(r.counts.fn) + "\n";
    return s;
}

} // namespace cardiofuse::cli
