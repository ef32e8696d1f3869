#include "kinhmd/telemetry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

namespace kinhmd::telemetry {

namespace {

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

DataPacket parse_packet(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize || !std::equal(kHeader.begin(), kHeader.end(), bytes.begin())) {
    throw PacketError(PacketErrorKind::not_a_data_packet, 0, "not a DATA packet");
  }
  const std::size_t payload = bytes.size() - kHeaderSize;
  const std::size_t full = payload / kRecordSize;
  if (payload % kRecordSize != 0) {
    const std::size_t offset = kHeaderSize + full * kRecordSize;
    throw PacketError(PacketErrorKind::malformed_packet, offset,
                      fmt::format("truncated record at byte {} ({} of {} bytes)", offset,
                                  payload % kRecordSize, kRecordSize));
  }

  DataPacket pkt;
  pkt.records.resize(full);
  const std::uint8_t* p = bytes.data() + kHeaderSize;
  for (auto& rec : pkt.records) {
    rec.index = read_u32_le(p);
    for (std::size_t i = 0; i < rec.values.size(); ++i) {
      rec.values[i] = std::bit_cast<float>(read_u32_le(p + 4 + 4 * i));
    }
    p += kRecordSize;
  }
  return pkt;
}

std::vector<std::uint8_t> encode_packet(const DataPacket& packet) {
  std::vector<std::uint8_t> out(kHeader.begin(), kHeader.end());
  out.reserve(kHeaderSize + packet.records.size() * kRecordSize);
  for (const auto& rec : packet.records) {
    write_u32_le(out, rec.index);
    for (float v : rec.values) write_u32_le(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

void ChannelMap::validate() const {
  for (int s : slots) {
    if (s < 0 || s > 7) throw ConfigError(fmt::format("telemetry slot {} outside 0..7", s));
  }
  if (slots[0] == slots[1] || slots[0] == slots[2] || slots[1] == slots[2]) {
    throw ConfigError("telemetry slots must be distinct");
  }
  if (!std::isfinite(scale) || scale == 0.0) throw ConfigError("telemetry scale must be finite and nonzero");
}

std::optional<AccelerationSample> extract_sample(const DataPacket& pkt, const ChannelMap& map, double now) {
  auto it = std::find_if(pkt.records.rbegin(), pkt.records.rend(),
                         [&](const DataRecord& r) { return r.index == map.record_index; });
  if (it == pkt.records.rend()) return std::nullopt;

  AccelerationSample s;
  s.timestamp = now;
  for (int axis = 0; axis < 3; ++axis) {
    s.accel[axis] = static_cast<double>(it->values[static_cast<std::size_t>(map.slots[axis])]) * map.scale;
  }
  if (!s.accel.allFinite()) return std::nullopt;
  return s;
}

FeedStatus check_staleness(FeedStatus status, double now) {
  if (status.state == FeedState::never_received) return status;
  // A stale feed only comes back through record_sample().
  if (now - status.last_sample_time > status.staleness_timeout) status.state = FeedState::stale;
  return status;
}

FeedStatus record_sample(FeedStatus status, double sample_time) {
  if (status.state == FeedState::never_received || sample_time > status.last_sample_time) {
    status.last_sample_time = sample_time;
    status.state = FeedState::live;
  }
  return status;
}

void LatestSampleMailbox::publish(const AccelerationSample& s) {
  const auto seq = seq_.load(std::memory_order_relaxed);
  seq_.store(seq + 1, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_release);
  t_.store(s.timestamp, std::memory_order_relaxed);
  x_.store(s.accel.x(), std::memory_order_relaxed);
  y_.store(s.accel.y(), std::memory_order_relaxed);
  z_.store(s.accel.z(), std::memory_order_relaxed);
  seq_.store(seq + 2, std::memory_order_release);
  published_.fetch_add(1, std::memory_order_release);
}

std::optional<AccelerationSample> LatestSampleMailbox::read() const {
  if (published_.load(std::memory_order_acquire) == 0) return std::nullopt;
  AccelerationSample s;
  for (;;) {
    const auto before = seq_.load(std::memory_order_acquire);
    if (before & 1U) continue;
    s.timestamp = t_.load(std::memory_order_relaxed);
    s.accel = Vec3(x_.load(std::memory_order_relaxed), y_.load(std::memory_order_relaxed),
                   z_.load(std::memory_order_relaxed));
    std::atomic_thread_fence(std::memory_order_acquire);
    if (seq_.load(std::memory_order_relaxed) == before) return s;
  }
}

UdpReceiver::UdpReceiver(std::uint16_t port, ChannelMap map, LatestSampleMailbox& mailbox, Clock clock)
    : map_(map), mailbox_(mailbox), clock_(std::move(clock)) {
  map_.validate();
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error("cannot create UDP socket");

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw Error(fmt::format("cannot bind UDP port {}: {}", port, std::strerror(errno)));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  // Short receive timeout so stop() is honored promptly.
  timeval tv{0, 50'000};
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));

  thread_ = std::thread([this] { run(); });
}

UdpReceiver::~UdpReceiver() { stop(); }

void UdpReceiver::stop() {
  running_ = false;
  if (thread_.joinable()) thread_.join();
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void UdpReceiver::run() {
  std::array<std::uint8_t, 65536> buf{};
  while (running_) {
    const auto n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n <= 0) continue;
    ++datagrams_;
    try {
      const auto pkt = parse_packet(std::span(buf.data(), static_cast<std::size_t>(n)));
      if (auto s = extract_sample(pkt, map_, clock_())) mailbox_.publish(*s);
    } catch (const PacketError&) {
      ++rejected_;
    }
  }
}

}  // namespace kinhmd::telemetry
