#include <cmath>
#include <cstring>

#include "kinhmd/cueing.hpp"
#include "kinhmd/device.hpp"
#include "kinhmd/safety.hpp"
#include "kinhmd/telemetry.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kinhmd;

TEST_SUITE("properties") {

TEST_CASE("direct and indirect are exact negations") {
  std::mt19937_64 rng(1);
  cueing::CueingConfig d, i;
  d.mode = cueing::Mode::direct;
  i.mode = cueing::Mode::indirect;
  std::uniform_real_distribution<double> g(0.0, 5.0);
  for (int n = 0; n < 20000; ++n) {
    d.gain = i.gain = g(rng);
    const AccelerationSample a{0, testutil::random_vec(rng, 100)};
    const Vec3 fd = cueing::render_force(d, a);
    const Vec3 fi = cueing::render_force(i, a);
    REQUIRE(fd == -fi);
    REQUIRE(fd.norm() == doctest::Approx(d.gain * a.accel.norm()).epsilon(1e-14));
  }
}

TEST_CASE("clamp is bounded, direction preserving and non-expansive") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> mag(-8, 3);
  auto draw = [&] { return Vec3(testutil::random_vec(rng, 1.0) * std::pow(10.0, mag(rng))); };
  for (int n = 0; n < 20000; ++n) {
    const Vec3 a = draw(), b = draw();
    const Vec3 ca = safety::clamp_force(a, 10.0), cb = safety::clamp_force(b, 10.0);
    REQUIRE(ca.norm() <= 10.0);
    if (a.norm() > 0) REQUIRE(ca.normalized().dot(a.normalized()) == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE((ca - cb).norm() <= (a - b).norm() * (1 + 1e-12) + 1e-12);
  }
}

TEST_CASE("jerk limiter never exceeds its step") {
  std::mt19937_64 rng(3);
  Vec3 prev = Vec3::Zero();
  for (int n = 0; n < 20000; ++n) {
    const Vec3 next = safety::limit_jerk(prev, testutil::random_vec(rng, 10), 200, 1e-3);
    REQUIRE((next - prev).norm() <= 0.2 * (1 + 1e-12));
    prev = next;
  }
}

TEST_CASE("torque policy iff deadband") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> mag(0, 3);
  for (int n = 0; n < 20000; ++n) {
    Vec3 f = testutil::random_vec(rng, 1).normalized() * mag(rng);
    const auto t = cueing::torque_policy(f, 1.0);
    if (f.norm() <= 1.0) {
      REQUIRE(t.kind == cueing::TorqueKind::free);
    } else {
      REQUIRE(t.kind == cueing::TorqueKind::cylinder_joint);
      REQUIRE(std::abs(t.axis.norm() - 1.0) <= 1e-9);
      REQUIRE(t.axis.cross(f).norm() <= 1e-9 * f.norm());
      REQUIRE(t.axis.dot(f) > 0);
    }
  }
}

TEST_CASE("kill switch: every event sequence up to depth 8") {
  using safety::KillEvent;
  using safety::KillState;
  const std::array<KillEvent, 5> events{KillEvent::arm, KillEvent::engage, KillEvent::release, KillEvent::kill,
                                        KillEvent::rearm};
  std::size_t sequences = 0;
  std::vector<int> idx(8, 0);
  for (;;) {
    safety::SafetyChain chain({});
    Vec3 out;
    double t = 0.0;
    // Drive at full force for a while so every state starts from a live output.
    chain.apply(KillEvent::arm, t);
    chain.apply(KillEvent::engage, t);
    for (int i = 0; i < 60; ++i) out = chain.process(Vec3(10, 0, 0), true, t += 1e-3, 1e-3);

    KillState model = KillState::ENGAGED;
    for (int d = 0; d < 8; ++d) {
      const auto ev = events[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
      const Vec3 before = chain.last_output();
      chain.apply(ev, t);
      if (ev == KillEvent::kill) model = KillState::KILLED;
      else if (model == KillState::KILLED) model = ev == KillEvent::rearm ? KillState::DISARMED : model;
      else if (model == KillState::DISARMED && ev == KillEvent::arm) model = KillState::ARMED;
      else if (model == KillState::ARMED && ev == KillEvent::engage) model = KillState::ENGAGED;
      else if (model == KillState::ENGAGED && ev == KillEvent::release) model = KillState::ARMED;
      REQUIRE(chain.kill_switch().state == model);

      out = chain.process(Vec3(10, 0, 0), true, t += 1e-3, 1e-3);
      if (model == KillState::KILLED) REQUIRE(out.isZero());
      if (model != KillState::ENGAGED) REQUIRE(out.norm() <= before.norm());
      REQUIRE(out.norm() <= 10.0);
    }
    ++sequences;
    int d = 7;
    while (d >= 0 && ++idx[static_cast<std::size_t>(d)] == 5) idx[static_cast<std::size_t>(d--)] = 0;
    if (d < 0) break;
  }
  CHECK(sequences == 390625);
}

TEST_CASE("outside ENGAGED the output decays to exactly zero within the fade") {
  using safety::KillEvent;
  for (auto ev : {KillEvent::release, KillEvent::kill}) {
    safety::SafetyChain chain({});
    chain.apply(KillEvent::arm, 0);
    chain.apply(KillEvent::engage, 0);
    for (int i = 0; i < 100; ++i) chain.process(Vec3(0, 10, 0), true, 0, 1e-3);
    chain.apply(ev, 0.1);
    Vec3 out;
    for (int i = 0; i < 251; ++i) out = chain.process(Vec3(0, 10, 0), true, 0.1, 1e-3);
    CHECK(out.isZero());
  }
}

TEST_CASE("parser is total on random bytes") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> len(0, 200);
  std::size_t ok = 0, typed = 0;
  for (int n = 0; n < 50000; ++n) {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(len(rng)));
    for (auto& b : buf) b = static_cast<std::uint8_t>(byte(rng));
    if (n % 2 && buf.size() >= 5) std::memcpy(buf.data(), "DATA", 5);
    try {
      telemetry::parse_packet(buf);
      ++ok;
    } catch (const telemetry::PacketError&) {
      ++typed;
    }
  }
  CHECK(ok + typed == 50000);
  CHECK(ok > 0);
}

TEST_CASE("encode and parse are inverse") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::uint32_t> word;
  std::uniform_int_distribution<int> count(0, 12);
  for (int n = 0; n < 2000; ++n) {
    telemetry::DataPacket pkt;
    std::vector<oracle::Record> ref;
    pkt.records.resize(static_cast<std::size_t>(count(rng)));
    for (auto& r : pkt.records) {
      r.index = word(rng) % 140;
      oracle::Record o{r.index, {}};
      for (std::size_t i = 0; i < 8; ++i) {
        float f;
        do {
          const std::uint32_t w = word(rng);
          std::memcpy(&f, &w, 4);
        } while (std::isnan(f));
        r.values[i] = f;
        o.values[i] = f;
      }
      ref.push_back(o);
    }
    const auto bytes = telemetry::encode_packet(pkt);
    REQUIRE(bytes == oracle::encode_data(ref));
    REQUIRE(telemetry::parse_packet(bytes).records == pkt.records);
  }
}

TEST_CASE("plant is passive at zero force") {
  device::PlantConfig cfg;
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    HeadState s;
    s.position = testutil::random_vec(rng, 0.2);
    s.velocity = testutil::random_vec(rng, 1.0);
    s.orientation = device::from_rotation_vector(testutil::random_vec(rng, 0.5));
    s.angular_velocity = testutil::random_vec(rng, 2.0);
    double e = device::mechanical_energy(cfg, s);
    for (int i = 0; i < 5000; ++i) {
      s = device::plant_step(cfg, s, {}, 1e-3);
      const double next = device::mechanical_energy(cfg, s);
      REQUIRE(next <= e * (1 + 1e-12) + 1e-300);
      e = next;
    }
  }
}

TEST_CASE("workspace containment under random commands") {
  device::PlantConfig cfg;
  std::mt19937_64 rng(8);
  std::bernoulli_distribution cyl(0.5);
  HeadState s;
  for (int i = 0; i < 200000; ++i) {
    cueing::WrenchCommand c;
    c.force = testutil::random_vec(rng, i % 1000 < 500 ? 10.0 : 2000.0);
    if (cyl(rng) && c.force.norm() > 0) c.torque = cueing::TorqueMode::cylinder(c.force.normalized());
    s = device::plant_step(cfg, s, c, 1e-3);
    for (int k = 0; k < 3; ++k) REQUIRE(std::abs(s.position[k]) <= cfg.workspace_halfextents[k]);
    REQUIRE(std::abs(s.orientation.norm() - 1.0) <= 1e-6);
  }
}

}
