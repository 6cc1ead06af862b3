#include "medintake/metrics.hpp"

#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace medintake {

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion_counts(const std::vector<int>& gold, const std::vector<int>& pred) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("confusion_counts: gold and pred lengths differ");
  ConfusionCounts c;
  c.total = static_cast<std::int64_t>(gold.size());
  for (std::size_t k = 0; k < gold.size(); ++k) {
    const int g = gold[k], p = pred[k];
    if (g < 1 || g > kNumClasses || p < 1 || p > kNumClasses)
      throw std::invalid_argument("confusion_counts: label outside {1,2,3} at position " +
                                  std::to_string(k));
    for (int i = 0; i < kNumClasses; ++i) {
      const bool is_gold = (g == i + 1);
      const bool is_pred = (p == i + 1);
      if (is_gold && is_pred) ++c.tp[i];
      else if (!is_gold && is_pred) ++c.fp[i];
      else if (is_gold && !is_pred) ++c.fn[i];
      else ++c.tn[i];
    }
  }
  return c;
}

double harmonic_f(double precision, double recall) {
  const double den = precision + recall;
  return den > 0.0 ? 2.0 * precision * recall / den : 0.0;
}

ClassPrf micro_prf_12(const ConfusionCounts& c) {
  ClassPrf out;
  out.precision = ratio(c.tp[0] + c.tp[1], c.tp[0] + c.fp[0] + c.tp[1] + c.fp[1]);
  out.recall = ratio(c.tp[0] + c.tp[1], c.tp[0] + c.fn[0] + c.tp[1] + c.fn[1]);
  out.f1 = harmonic_f(out.precision, out.recall);
  return out;
}

std::array<ClassPrf, kNumClasses> per_class_prf(const ConfusionCounts& c) {
  std::array<ClassPrf, kNumClasses> out{};
  for (int i = 0; i < kNumClasses; ++i) {
    out[i].precision = ratio(c.tp[i], c.tp[i] + c.fp[i]);
    out[i].recall = ratio(c.tp[i], c.tp[i] + c.fn[i]);
    out[i].f1 = harmonic_f(out[i].precision, out[i].recall);
  }
  return out;
}

MetricReport metric_report(const std::vector<int>& gold, const std::vector<int>& pred) {
  const ConfusionCounts c = confusion_counts(gold, pred);
  MetricReport r;
  r.per_class = per_class_prf(c);
  r.micro_12 = micro_prf_12(c);
  r.total = c.total;
  for (int i = 0; i < kNumClasses; ++i) r.support[i] = c.tp[i] + c.fn[i];
  return r;
}

std::string metric_report_json(const MetricReport& r) {
  nlohmann::json j;
  for (int i = 0; i < kNumClasses; ++i) {
    nlohmann::json cls;
    cls["precision"] = r.per_class[i].precision;
    cls["recall"] = r.per_class[i].recall;
    cls["f1"] = r.per_class[i].f1;
    cls["support"] = r.support[i];
    j["per_class"][std::to_string(i + 1)] = cls;
  }
  j["micro_12"]["precision"] = r.micro_12.precision;
  j["micro_12"]["recall"] = r.micro_12.recall;
  j["micro_12"]["f1"] = r.micro_12.f1;
  j["total"] = r.total;
  return j.dump(2) + "\n";
}

std::string metric_report_text(const MetricReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "class  precision  recall     f1         support\n";
  for (int i = 0; i < kNumClasses; ++i) {
    os << i + 1 << "      " << r.per_class[i].precision << "      " << r.per_class[i].recall
       << "      " << r.per_class[i].f1 << "      " << r.support[i] << "\n";
  }
  os << "micro(1+2)  P=" << r.micro_12.precision << "  R=" << r.micro_12.recall
     << "  F=" << r.micro_12.f1 << "  (n=" << r.total << ")\n";
  return os.str();
}

}  // namespace medintake
