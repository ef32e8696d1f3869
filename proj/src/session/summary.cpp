#include "kinhmd/session/summary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace kinhmd::session {

namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

FiveNumber five_number(std::vector<double> values) {
  if (values.empty()) throw DomainError("five-number summary of no values");
  std::sort(values.begin(), values.end());
  return {values.front(), quantile_sorted(values, 0.25), quantile_sorted(values, 0.5), quantile_sorted(values, 0.75),
          values.back()};
}

Summary summarize(const std::vector<TrialRecord>& records) {
  Summary out;
  for (auto c : kAllConditions) {
    ConditionSummary cs;
    cs.condition = c;
    std::array<std::vector<double>, 3> dims;
    std::vector<double> lean;
    for (const auto& r : records) {
      if (r.condition != c) continue;
      if (r.cancelled) {
        ++cs.cancelled;
        continue;
      }
      if (!r.ratings) continue;
      ++cs.rated;
      const auto v = r.ratings->values();
      for (std::size_t i = 0; i < v.size(); ++i) dims[i].push_back(v[i]);
      lean.push_back(r.lean_peak);
    }
    if (cs.rated == 0) continue;
    for (std::size_t i = 0; i < dims.size(); ++i) cs.ratings[i] = five_number(dims[i]);
    cs.lean_peak_m = five_number(lean);
    out.conditions.push_back(cs);
  }
  if (out.conditions.empty()) throw DomainError("no rated trials to summarize");
  return out;
}

std::string format_summary(const Summary& s) {
  std::string out;
  for (const auto& c : s.conditions) {
    out += fmt::format("{}  rated={} cancelled={}\n", to_string(c.condition), c.rated, c.cancelled);
    for (std::size_t i = 0; i < kRatingScales.size(); ++i) {
      const auto& f = c.ratings[i];
      out += fmt::format("  {:<16} [{:+d}..{:+d}]  min={:g} q1={:g} median={:g} q3={:g} max={:g}\n",
                         kRatingScales[i].name, kRatingScales[i].min, kRatingScales[i].max, f.min, f.q1, f.median,
                         f.q3, f.max);
    }
    const auto& l = c.lean_peak_m;
    out += fmt::format("  {:<16} median={:.4f} m  max={:.4f} m\n", "lean_peak", l.median, l.max);
  }
  return out;
}

std::string format_quartiles_csv(const Summary& s) {
  std::string out = "condition,dimension,n,min,q1,median,q3,max\n";
  for (const auto& c : s.conditions) {
    for (std::size_t i = 0; i < kRatingScales.size(); ++i) {
      const auto& f = c.ratings[i];
      out += fmt::format("{},{},{},{},{},{},{},{}\n", to_string(c.condition), kRatingScales[i].name, c.rated, f.min,
                         f.q1, f.median, f.q3, f.max);
    }
    const auto& l = c.lean_peak_m;
    out += fmt::format("{},lean_peak_m,{},{},{},{},{},{}\n", to_string(c.condition), c.rated, l.min, l.q1, l.median,
                       l.q3, l.max);
  }
  return out;
}

void write_report(const Summary& s, const std::filesystem::path& stem) {
  auto txt = stem;
  txt += ".txt";
  auto csv = stem;
  csv += ".csv";
  std::ofstream(txt, std::ios::binary) << format_summary(s);
  std::ofstream(csv, std::ios::binary) << format_quartiles_csv(s);
}

void write_trial_records(const std::vector<TrialRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "trial,condition,cancelled,relative_motion,acceleration,comfort,lean_peak_m,peak_force_n,t_launch,"
         "t_stimulus_start,t_stimulus_end\n";
  for (const auto& r : records) {
    std::string ratings = ",,";
    if (r.ratings) ratings = fmt::format("{},{},{}", r.ratings->relative_motion, r.ratings->acceleration, r.ratings->comfort);
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", r.trial_index, to_string(r.condition), r.cancelled ? 1 : 0,
                       ratings, r.lean_peak, r.peak_force, r.t_launch, r.t_stimulus_start, r.t_stimulus_end);
  }
}

}  // namespace kinhmd::session
