#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace medintake {

inline constexpr int kNumClasses = 3;

// One-vs-rest confusion tallies; slot i holds class i+1.
struct ConfusionCounts {
  std::array<std::int64_t, kNumClasses> tp{}, fp{}, fn{}, tn{};
  std::int64_t total = 0;
};

struct ClassPrf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  std::array<ClassPrf, kNumClasses> per_class{};
  std::array<std::int64_t, kNumClasses> support{};
  ClassPrf micro_12;
  std::int64_t total = 0;
};

ConfusionCounts confusion_counts(const std::vector<int>& gold, const std::vector<int>& pred);

// 2PR/(P+R); 0 when the denominator vanishes.
double harmonic_f(double precision, double recall);

// Micro-averaged precision/recall/F over classes 1 and 2 pooled.
ClassPrf micro_prf_12(const ConfusionCounts& counts);

std::array<ClassPrf, kNumClasses> per_class_prf(const ConfusionCounts& counts);

MetricReport metric_report(const std::vector<int>& gold, const std::vector<int>& pred);

std::string metric_report_json(const MetricReport& report);
std::string metric_report_text(const MetricReport& report);

}  // namespace medintake
