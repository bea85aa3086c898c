#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aupt {

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
    explicit ConfusionMatrix(std::size_t classes);

    void add(std::size_t truth, std::size_t predicted);
    std::size_t classes() const { return classes_; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const;
    std::uint64_t total() const { return total_; }

 private:
    std::size_t classes_;
    std::uint64_t total_ = 0;
    std::vector<std::uint64_t> counts_;
};

/// Overall accuracy, percent.
double war(const ConfusionMatrix& cm);
/// Mean per-class recall, percent; classes without true instances are
/// excluded from the mean.
double uar(const ConfusionMatrix& cm);
/// Unweighted mean of per-class F1, percent. Classes absent from both truth
/// and predictions are skipped; zero precision+recall counts as F1 = 0.
double macro_f1(const ConfusionMatrix& cm);

/// One decimal, half-up; the reporting precision of all emitted tables.
double round1(double percent);

/// round1 rendered with a fixed single decimal ("73.3").
std::string format_percent(double percent);

struct PredictionRecord {
    std::string subject;
    std::size_t label = 0;
    std::size_t predicted = 0;
};

struct SubjectMetrics {
    std::string subject; // "Avg" for the mean-over-subjects row
    std::size_t count = 0;
    double war = 0.0;
    double uar = 0.0;
    double macro_f1 = 0.0;
};

struct MetricsBundle {
    double war = 0.0;
    double uar = 0.0;
    double macro_f1 = 0.0;
    std::vector<SubjectMetrics> per_subject; // subject order of first appearance + Avg row
};

MetricsBundle subject_report(const std::vector<PredictionRecord>& preds, std::size_t classes);

/// Fixed column order: subject,n,war,uar,macro_f1 (one decimal).
std::string metrics_csv(const MetricsBundle& b);
std::string metrics_json(const MetricsBundle& b);

} // namespace aupt
