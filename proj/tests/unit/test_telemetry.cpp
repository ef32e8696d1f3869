#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <thread>

#include "kinhmd/telemetry.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kinhmd;
using namespace kinhmd::telemetry;

TEST_SUITE("telemetry") {

TEST_CASE("parse matches the byte-level encoder") {
  oracle::Record r{4, {1.5f, -2.25f, 0.125f, 3.0f, -0.0f, 1e-3f, 7.0f, 65504.0f}};
  const auto bytes = oracle::encode_data({r});
  REQUIRE(bytes.size() == 5 + 36);
  const auto pkt = parse_packet(bytes);
  REQUIRE(pkt.records.size() == 1);
  CHECK(pkt.records[0].index == 4);
  for (int i = 0; i < 8; ++i) CHECK(std::memcmp(&pkt.records[0].values[i], &r.values[i], 4) == 0);

  DataPacket mine;
  mine.records.push_back({4, {1.5f, -2.25f, 0.125f, 3.0f, -0.0f, 1e-3f, 7.0f, 65504.0f}});
  CHECK(encode_packet(mine) == bytes);
}

TEST_CASE("header only is an empty packet") {
  const std::vector<std::uint8_t> bytes{'D', 'A', 'T', 'A', 0};
  CHECK(parse_packet(bytes).records.empty());
}

TEST_CASE("wrong header") {
  std::vector<std::uint8_t> bytes{'X', 'A', 'T', 'A', 0};
  try {
    parse_packet(bytes);
    FAIL("expected PacketError");
  } catch (const PacketError& e) {
    CHECK(e.kind() == PacketErrorKind::not_a_data_packet);
  }
  CHECK_THROWS_AS(parse_packet(std::vector<std::uint8_t>{'D', 'A'}), PacketError);
}

TEST_CASE("truncated record reports its offset") {
  auto bytes = oracle::encode_data({{1, {}}, {2, {}}});
  bytes.resize(bytes.size() - 3);
  try {
    parse_packet(bytes);
    FAIL("expected PacketError");
  } catch (const PacketError& e) {
    CHECK(e.kind() == PacketErrorKind::malformed_packet);
    CHECK(e.offset() == 5 + 36);
  }
}

TEST_CASE("channel extraction") {
  DataPacket pkt;
  pkt.records.push_back({4, {1, 2, 3, 4, 5, 6, 7, 8}});
  ChannelMap map;
  map.scale = 1.0;
  auto s = extract_sample(pkt, map, 0.5);
  REQUIRE(s);
  CHECK(s->accel == Vec3(1, 2, 3));
  CHECK(s->timestamp == 0.5);

  map.record_index = 9;
  CHECK_FALSE(extract_sample(pkt, map, 0.0));

  DataPacket g;
  g.records.push_back({4, {0.5f, 0, 0, 0, 0, 0, 0, 0}});
  ChannelMap gmap;
  gmap.scale = 9.81;
  CHECK(extract_sample(g, gmap, 0.0)->accel.x() == doctest::Approx(4.905).epsilon(1e-12));

  map = {};
  map.slots = {2, 0, 1};
  map.scale = 1.0;
  CHECK(extract_sample(pkt, map, 0)->accel == Vec3(3, 1, 2));
}

TEST_CASE("last matching record wins") {
  DataPacket pkt;
  pkt.records.push_back({4, {1, 1, 1, 0, 0, 0, 0, 0}});
  pkt.records.push_back({4, {2, 2, 2, 0, 0, 0, 0, 0}});
  ChannelMap map;
  map.scale = 1.0;
  CHECK(extract_sample(pkt, map, 0)->accel == Vec3(2, 2, 2));
}

TEST_CASE("non-finite values are dropped") {
  DataPacket pkt;
  pkt.records.push_back({4, {std::numeric_limits<float>::quiet_NaN(), 0, 0, 0, 0, 0, 0, 0}});
  CHECK_FALSE(extract_sample(pkt, ChannelMap{}, 0));
}

TEST_CASE("channel map validation") {
  ChannelMap m;
  m.slots = {0, 0, 1};
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.slots = {0, 1, 8};
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.scale = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("staleness") {
  FeedStatus st;
  CHECK(check_staleness(st, 123.0).state == FeedState::never_received);
  st = record_sample(st, 0.0);
  CHECK(check_staleness(st, 0.1).state == FeedState::live);
  const auto stale = check_staleness(st, 0.3);
  CHECK(stale.state == FeedState::stale);
  CHECK(record_sample(stale, 0.0).state == FeedState::stale);
  CHECK(check_staleness(stale, 0.0).state == FeedState::stale);
  CHECK(record_sample(stale, 0.31).state == FeedState::live);
}

TEST_CASE("mailbox keeps the latest sample") {
  LatestSampleMailbox mb;
  CHECK_FALSE(mb.read());
  mb.publish({1.0, Vec3(1, 2, 3)});
  mb.publish({2.0, Vec3(4, 5, 6)});
  const auto s = mb.read();
  REQUIRE(s);
  CHECK(s->timestamp == 2.0);
  CHECK(s->accel == Vec3(4, 5, 6));
  CHECK(mb.publish_count() == 2);
}

TEST_CASE("mailbox readers never see torn samples") {
  LatestSampleMailbox mb;
  std::atomic<bool> done{false};
  std::thread writer([&] {
    for (int i = 1; i <= 200000; ++i) mb.publish({double(i), Vec3(i, i, i)});
    done = true;
  });
  std::size_t torn = 0;
  while (!done) {
    if (auto s = mb.read()) {
      if (s->accel.x() != s->timestamp || s->accel.y() != s->timestamp || s->accel.z() != s->timestamp) ++torn;
    }
  }
  writer.join();
  CHECK(torn == 0);
}

TEST_CASE("udp receiver publishes mapped samples") {
  LatestSampleMailbox mb;
  ChannelMap map;
  map.scale = 1.0;
  UdpReceiver rx(0, map, mb, [] { return 42.0; });
  REQUIRE(rx.port() != 0);

  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  REQUIRE(fd >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(rx.port());
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  const auto good = oracle::encode_data({{4, {1, 2, 3, 0, 0, 0, 0, 0}}});
  const std::uint8_t junk[] = {1, 2, 3};
  ::sendto(fd, junk, sizeof junk, 0, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  ::sendto(fd, good.data(), good.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof addr);

  for (int i = 0; i < 200 && mb.publish_count() == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  ::close(fd);
  rx.stop();
  const auto s = mb.read();
  REQUIRE(s);
  CHECK(s->accel == Vec3(1, 2, 3));
  CHECK(s->timestamp == 42.0);
  CHECK(rx.rejected() >= 1);
}

}
