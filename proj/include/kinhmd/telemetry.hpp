#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "kinhmd/types.hpp"

namespace kinhmd::telemetry {

// X-Plane style "DATA" datagrams: 5-byte header then 36-byte records of a
// little-endian u32 index and eight little-endian binary32 values.
inline constexpr std::array<std::uint8_t, 5> kHeader{0x44, 0x41, 0x54, 0x41, 0x00};
inline constexpr std::size_t kHeaderSize = kHeader.size();
inline constexpr std::size_t kRecordSize = 36;
inline constexpr std::uint16_t kDefaultPort = 49005;

struct DataRecord {
  std::uint32_t index = 0;
  std::array<float, 8> values{};

  friend bool operator==(const DataRecord&, const DataRecord&) = default;
};

struct DataPacket {
  std::vector<DataRecord> records;
};

enum class PacketErrorKind { not_a_data_packet, malformed_packet };

class PacketError : public Error {
 public:
  PacketError(PacketErrorKind kind, std::size_t offset, const std::string& what)
      : Error(what), kind_(kind), offset_(offset) {}

  PacketErrorKind kind() const { return kind_; }
  /// Byte offset where the problem starts.
  std::size_t offset() const { return offset_; }

 private:
  PacketErrorKind kind_;
  std::size_t offset_;
};

/// Parses one datagram. Unknown record indices are kept. Throws PacketError.
DataPacket parse_packet(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_packet(const DataPacket& packet);

/// Which record and which of its eight slots feed the x/y/z axes. The
/// defaults are an example configuration only; the record index carrying
/// accelerations depends on the simulator version and its output settings.
struct ChannelMap {
  std::uint32_t record_index = 4;
  std::array<int, 3> slots{0, 1, 2};
  double scale = 9.80665;  // source in g, output in m/s^2

  void validate() const;
};

/// Sample from the last record matching `map.record_index`, stamped with
/// the receive time `now`. Returns nothing when no record matches or when a
/// mapped value is not finite.
std::optional<AccelerationSample> extract_sample(const DataPacket& pkt, const ChannelMap& map, double now);

enum class FeedState { never_received, live, stale };

struct FeedStatus {
  double last_sample_time = 0.0;
  double staleness_timeout = 0.2;
  FeedState state = FeedState::never_received;
};

FeedStatus check_staleness(FeedStatus status, double now);

/// Registers a sample received at `sample_time`. Samples not newer than the
/// last one do not revive a stale feed.
FeedStatus record_sample(FeedStatus status, double sample_time);

/// Single-slot mailbox with replace-on-write semantics. One writer (the
/// receiver), any number of readers; neither side blocks. Seqlock over
/// atomic fields.
class LatestSampleMailbox {
 public:
  void publish(const AccelerationSample& s);
  /// Latest sample, or nothing if none was published yet.
  std::optional<AccelerationSample> read() const;
  std::uint64_t publish_count() const { return published_.load(std::memory_order_acquire); }

 private:
  std::atomic<std::uint64_t> seq_{0};
  std::atomic<std::uint64_t> published_{0};
  std::atomic<double> t_{0.0};
  std::atomic<double> x_{0.0};
  std::atomic<double> y_{0.0};
  std::atomic<double> z_{0.0};
};

/// Background UDP receiver publishing mapped samples into a mailbox.
/// Timestamps come from the supplied clock (receiver side); the wire format
/// carries none.
class UdpReceiver {
 public:
  using Clock = std::function<double()>;

  UdpReceiver(std::uint16_t port, ChannelMap map, LatestSampleMailbox& mailbox, Clock clock);
  ~UdpReceiver();

  UdpReceiver(const UdpReceiver&) = delete;
  UdpReceiver& operator=(const UdpReceiver&) = delete;

  /// Port actually bound (useful when constructed with port 0).
  std::uint16_t port() const { return port_; }
  std::uint64_t datagrams() const { return datagrams_.load(); }
  std::uint64_t rejected() const { return rejected_.load(); }

  void stop();

 private:
  void run();

  int fd_ = -1;
  std::uint16_t port_ = 0;
  ChannelMap map_;
  LatestSampleMailbox& mailbox_;
  Clock clock_;
  std::atomic<bool> running_{true};
  std::atomic<std::uint64_t> datagrams_{0};
  std::atomic<std::uint64_t> rejected_{0};
  std::thread thread_;
};

}  // namespace kinhmd::telemetry
