#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kinhmd/session/trials.hpp"

namespace kinhmd::session {

/// Five-number summary. Quartiles use linear interpolation between order
/// statistics at position p * (n - 1).
struct FiveNumber {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

FiveNumber five_number(std::vector<double> values);

struct ConditionSummary {
  Condition condition = Condition::H_NONE;
  std::size_t rated = 0;
  std::size_t cancelled = 0;
  /// Indexed like kRatingScales.
  std::array<FiveNumber, 3> ratings{};
  FiveNumber lean_peak_m{};
};

struct Summary {
  std::vector<ConditionSummary> conditions;
};

/// Per-condition descriptive statistics over rated, non-cancelled records.
/// Throws DomainError if nothing was rated.
Summary summarize(const std::vector<TrialRecord>& records);

std::string format_summary(const Summary& s);
/// Machine-readable quartiles: condition,dimension,n,min,q1,median,q3,max.
std::string format_quartiles_csv(const Summary& s);

/// Writes `<stem>.txt` and `<stem>.csv`.
void write_report(const Summary& s, const std::filesystem::path& stem);

/// Trial records as CSV, one row per trial, ratings empty when unrated.
void write_trial_records(const std::vector<TrialRecord>& records, const std::filesystem::path& path);

}  // namespace kinhmd::session
