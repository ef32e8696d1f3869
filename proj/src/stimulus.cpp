#include "kinhmd/stimulus.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

namespace kinhmd::stimulus {

namespace {

// Raised-cosine ease from 0 to amplitude over `ease` seconds.
double ease_in(double amplitude, double ease, double t) {
  return amplitude * (1.0 - std::cos(std::numbers::pi * t / ease)) / 2.0;
}

double single_step(const StimulusPattern& p, double t) {
  const double tau = p.ease_duration;
  const double step = p.step_duration();
  if (t < tau) return ease_in(p.step_amplitude, tau, t);
  if (t <= tau + p.plateau_duration) return p.step_amplitude;
  return ease_in(p.step_amplitude, tau, std::max(0.0, step - t));
}

bool parse_double(const std::string& field, double& out) {
  const char* begin = field.c_str();
  char* end = nullptr;
  errno = 0;
  out = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

}  // namespace

void StimulusPattern::validate() const {
  if (!(step_amplitude > 0.0) || !std::isfinite(step_amplitude))
    throw ConfigError("stimulus amplitude must be positive");
  if (!(ease_duration > 0.0) || !std::isfinite(ease_duration))
    throw ConfigError("stimulus ease duration must be positive");
  if (!(plateau_duration >= 0.0) || !std::isfinite(plateau_duration))
    throw ConfigError("stimulus plateau duration must be non-negative");
}

double eval_pattern(const StimulusPattern& p, double t) {
  const double total = p.total_duration();
  if (!(t >= 0.0 && t <= total)) {
    throw DomainError(fmt::format("t = {} outside stimulus window [0, {}]", t, total));
  }
  const double step = p.step_duration();
  if (t <= step) return single_step(p, t);
  return -single_step(p, t - step);
}

Trace synthesize_trace(const StimulusPattern& p, double rate) {
  p.validate();
  if (!(rate >= kMinSynthesisRate) || !std::isfinite(rate)) {
    throw ConfigError(fmt::format("synthesis rate {} Hz below minimum {} Hz", rate, kMinSynthesisRate));
  }
  const double total = p.total_duration();
  const auto count = static_cast<std::size_t>(std::ceil(total * rate)) + 1;

  Trace trace;
  trace.sample_rate = rate;
  trace.source = TraceSource::synthetic;
  trace.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = std::min(static_cast<double>(i) / rate, total);
    trace.samples.push_back({t, Vec3(eval_pattern(p, t), 0.0, 0.0)});
  }
  return trace;
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file " + path.string());

  Trace trace;
  trace.source = TraceSource::recorded;

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line == "t,ax,ay,az") continue;
      throw ParseError("expected header 't,ax,ay,az'", line_no);
    }

    std::array<double, 4> v{};
    std::stringstream ss(line);
    std::string field;
    std::size_t n = 0;
    while (std::getline(ss, field, ',')) {
      if (n == v.size()) throw ParseError("too many fields", line_no);
      if (!parse_double(field, v[n])) throw ParseError("not a number: '" + field + "'", line_no);
      if (!std::isfinite(v[n])) throw ParseError("non-finite value", line_no);
      ++n;
    }
    if (n != v.size()) throw ParseError("expected 4 fields, got " + std::to_string(n), line_no);
    if (!trace.samples.empty() && v[0] < trace.samples.back().timestamp) {
      throw ParseError("timestamp decreases", line_no);
    }
    trace.samples.push_back({v[0], Vec3(v[1], v[2], v[3])});
  }
  if (trace.samples.empty()) throw Error("empty trace: " + path.string());

  const double t0 = trace.samples.front().timestamp;
  for (auto& s : trace.samples) s.timestamp -= t0;
  if (trace.samples.size() > 1 && trace.duration() > 0.0) {
    trace.sample_rate = static_cast<double>(trace.samples.size() - 1) / trace.duration();
  }
  return trace;
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace file " + path.string());
  out << "t,ax,ay,az\n";
  for (const auto& s : trace.samples) {
    out << fmt::format("{},{},{},{}\n", s.timestamp, s.accel.x(), s.accel.y(), s.accel.z());
  }
}

Vec3 interpolate(const Trace& trace, double t) {
  const auto& s = trace.samples;
  if (s.empty() || t > s.back().timestamp) return Vec3::Zero();
  if (t <= s.front().timestamp) return s.front().accel;

  auto hi = std::upper_bound(s.begin(), s.end(), t,
                             [](double value, const AccelerationSample& a) { return value < a.timestamp; });
  auto lo = std::prev(hi);
  if (hi == s.end() || lo->timestamp == t) return lo->accel;
  const double frac = (t - lo->timestamp) / (hi->timestamp - lo->timestamp);
  return lo->accel + frac * (hi->accel - lo->accel);
}

}  // namespace kinhmd::stimulus
