#include "aupt/metrics.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "aupt/errors.hpp"

namespace aupt {

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw DomainError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
    if (truth >= classes_ || predicted >= classes_) {
        throw LabelError("confusion matrix: class index out of range");
    }
    ++counts_[truth * classes_ + predicted];
    ++total_;
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
}

double war(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DomainError("war: empty confusion matrix");
    std::uint64_t diag = 0;
    for (std::size_t c = 0; c < cm.classes(); ++c) diag += cm.at(c, c);
    return 100.0 * static_cast<double>(diag) / static_cast<double>(cm.total());
}

double uar(const ConfusionMatrix& cm) {
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        std::uint64_t row = 0;
        for (std::size_t p = 0; p < cm.classes(); ++p) row += cm.at(c, p);
        if (row == 0) continue;
        sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
        ++present;
    }
    if (present == 0) throw DomainError("uar: no class has true instances");
    return 100.0 * sum / static_cast<double>(present);
}

double macro_f1(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DomainError("macro_f1: empty confusion matrix");
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        std::uint64_t tp = cm.at(c, c);
        std::uint64_t truth = 0, pred = 0;
        for (std::size_t k = 0; k < cm.classes(); ++k) {
            truth += cm.at(c, k);
            pred += cm.at(k, c);
        }
        if (truth == 0 && pred == 0) continue; // class absent everywhere
        double f1 = 0.0;
        if (tp > 0) {
            double precision = static_cast<double>(tp) / static_cast<double>(pred);
            double recall = static_cast<double>(tp) / static_cast<double>(truth);
            f1 = 2.0 * precision * recall / (precision + recall);
        }
        sum += f1;
        ++counted;
    }
    return 100.0 * sum / static_cast<double>(counted);
}

double round1(double percent) {
    return std::floor(percent * 10.0 + 0.5) / 10.0;
}

namespace {

void fill_overall(const std::vector<PredictionRecord>& preds, std::size_t classes,
                  double& w, double& u, double& f) {
    ConfusionMatrix cm(classes);
    for (const auto& p : preds) cm.add(p.label, p.predicted);
    w = war(cm);
    u = uar(cm);
    f = macro_f1(cm);
}

} // namespace

MetricsBundle subject_report(const std::vector<PredictionRecord>& preds, std::size_t classes) {
    MetricsBundle b;
    if (preds.empty()) return b;
    fill_overall(preds, classes, b.war, b.uar, b.macro_f1);

    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<PredictionRecord>> by_subject;
    for (const auto& p : preds) {
        if (!by_subject.count(p.subject)) order.push_back(p.subject);
        by_subject[p.subject].push_back(p);
    }
    double avg_w = 0.0, avg_u = 0.0, avg_f = 0.0;
    for (const auto& sid : order) {
        SubjectMetrics sm;
        sm.subject = sid;
        sm.count = by_subject[sid].size();
        fill_overall(by_subject[sid], classes, sm.war, sm.uar, sm.macro_f1);
        avg_w += sm.war;
        avg_u += sm.uar;
        avg_f += sm.macro_f1;
        b.per_subject.push_back(std::move(sm));
    }
    double n = static_cast<double>(order.size());
    b.per_subject.push_back(SubjectMetrics{"Avg", preds.size(), avg_w / n, avg_u / n, avg_f / n});
    return b;
}

namespace {

std::string fmt1(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << round1(v);
    return os.str();
}

} // namespace

std::string metrics_csv(const MetricsBundle& b) {
    std::ostringstream os;
    os << "subject,n,war,uar,macro_f1\n";
    for (const auto& s : b.per_subject) {
        os << s.subject << "," << s.count << "," << fmt1(s.war) << "," << fmt1(s.uar) << ","
           << fmt1(s.macro_f1) << "\n";
    }
    return os.str();
}

std::string metrics_json(const MetricsBundle& b) {
    nlohmann::json j;
    j["war"] = b.war;
    j["uar"] = b.uar;
    j["macro_f1"] = b.macro_f1;
    j["per_subject"] = nlohmann::json::array();
    for (const auto& s : b.per_subject) {
        j["per_subject"].push_back({{"subject", s.subject}, {"n", s.count},
                                    {"war", round1(s.war)}, {"uar", round1(s.uar)},
                                    {"macro_f1", round1(s.macro_f1)}});
    }
    return j.dump(2) + "\n";
}

} // namespace aupt
