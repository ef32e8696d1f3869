#include "oracles.hpp"

#include <cmath>
#include <cstring>

namespace oracle {

namespace {
constexpr double kPi = 3.14159265358979323846;

double ramp(double u, double ease) { return 0.5 * (1.0 - std::cos(kPi * u / ease)); }
}  // namespace

double double_step(double t, double amp, double plateau, double ease) {
  const double step = 2 * ease + plateau;
  auto one = [&](double u) {
    if (u < 0 || u > step) return 0.0;
    if (u < ease) return ramp(u, ease);
    if (u <= ease + plateau) return 1.0;
    return ramp(step - u, ease);
  };
  if (t < step) return amp * one(t);
  return -amp * one(t - step);
}

std::vector<double> cumtrapz(const std::vector<double>& y, double h) {
  std::vector<double> out(y.size(), 0.0);
  for (std::size_t i = 1; i < y.size(); ++i) out[i] = out[i - 1] + 0.5 * h * (y[i - 1] + y[i]);
  return out;
}

std::vector<std::uint8_t> encode_data(const std::vector<Record>& records) {
  std::vector<std::uint8_t> out{'D', 'A', 'T', 'A', 0};
  auto put32 = [&](std::uint32_t w) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((w >> (8 * i)) & 0xff));
  };
  for (const auto& r : records) {
    put32(r.index);
    for (float f : r.values) {
      std::uint32_t w;
      std::memcpy(&w, &f, 4);
      put32(w);
    }
  }
  return out;
}

std::vector<double> rk4_response(const Oscillator& o, const std::function<double(double)>& force, double h,
                                 double t_end) {
  auto f = [&](double t, double x, double v, double& dx, double& dv) {
    dx = v;
    dv = (force(t) - o.k * x - o.c * v) / o.m;
  };
  std::vector<double> xs{0.0};
  double x = 0, v = 0, t = 0;
  const auto n = static_cast<long>(std::llround(t_end / h));
  for (long i = 0; i < n; ++i) {
    double k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v;
    f(t, x, v, k1x, k1v);
    f(t + h / 2, x + h / 2 * k1x, v + h / 2 * k1v, k2x, k2v);
    f(t + h / 2, x + h / 2 * k2x, v + h / 2 * k2v, k3x, k3v);
    f(t + h, x + h * k3x, v + h * k3v, k4x, k4v);
    x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    t = (i + 1) * h;
    xs.push_back(x);
  }
  return xs;
}

double critical_step(const Oscillator& o, double force, double t) {
  const double wn = std::sqrt(o.k / o.m);
  return force / o.k * (1.0 - (1.0 + wn * t) * std::exp(-wn * t));
}

}  // namespace oracle
