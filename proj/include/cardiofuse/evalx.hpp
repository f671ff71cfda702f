#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

namespace cardiofuse::evalx {

/// label: 1 = Abnormal (positive), 0 = Normal.
struct ScoredSample {
    std::string sample_id;
    std::string record_id;
    int label = 0;
    double score = 0.0;
};

enum class EvalMode { SampleWise, RecordWise };

std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& s);

struct Confusion {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::size_t positives() const { return tp + fn; }
    std::size_t negatives() const { return tn + fp; }
    std::size_t total() const { return tp + tn + fp + fn; }
    /// 0 when the class is absent.
    double sensitivity() const;
    double specificity() const;
    double accuracy() const;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0; ///< +inf for the (0,0) endpoint, -inf for (1,1)
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

struct MetricsReport {
    Confusion counts;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double accuracy = 0.0;
    double gmean = 0.0;
    double auc = 0.0;
    double threshold = 0.5;
    EvalMode mode = EvalMode::SampleWise;
    std::vector<RocPoint> roc;
};

/// Positive iff score >= threshold.
Confusion confusion(const std::vector<ScoredSample>& scored, double threshold);

double gmean(double sensitivity, double specificity);

/// Candidates 0, 1 and midpoints of adjacent distinct scores; maximizes
/// G-mean, lowest threshold on ties.
double optimal_threshold(const std::vector<ScoredSample>& val);

/// Sweeps distinct scores high to low with +/-inf endpoints. AUC is the
/// trapezoid area, equal to the Mann-Whitney statistic with half credit for ties.
RocCurve roc_auc(const std::vector<ScoredSample>& scored);

/// One entry per record (first-appearance order) scored by the mean of its samples.
std::vector<ScoredSample> aggregate_records(const std::vector<ScoredSample>& samples);

MetricsReport evaluate(const std::vector<ScoredSample>& scored, double threshold, EvalMode mode);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

/// fpr,tpr,threshold rows; infinite thresholds written as inf / -inf.
std::string roc_csv(const std::vector<RocPoint>& roc);
void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& roc);

struct RocSeries {
    std::string label;
    std::vector<RocPoint> roc;
    double auc = 0.0;
};

/// Self-contained SVG line plot of one or more ROC curves.
std::string roc_svg(const std::vector<RocSeries>& series, const std::string& title = "ROC");
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace cardiofuse::evalx
