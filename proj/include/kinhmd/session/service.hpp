#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinhmd/session/config.hpp"
#include "kinhmd/session/control_loop.hpp"
#include "kinhmd/session/trials.hpp"

namespace kinhmd::session {

struct ServiceOptions {
  std::uint16_t port = 8765;  // 0 picks a free port
  double frame_rate = 30.0;   // Hz, state frames
  int reps = 10;
  std::uint64_t seed = 1;
  Pacing pacing = Pacing::realtime;
};

/// JSON encoding of a state frame:
/// {"type":"state","t":..,"force":[x,y,z],"head":{"pos":[..],"quat":[x,y,z,w]},
///  "safety":"ENGAGED","trial":{"index":..,"phase":".."},"gain":..,"mode":"..","tick_us":..}
nlohmann::json state_frame(const Snapshot& s);

/// Parses a client `{"type":"cmd",...}` message. `kill` is only flagged:
/// it goes through the latch and is never queued. Throws DomainError on a
/// malformed or unknown command.
struct ParsedCommand {
  bool kill = false;
  Command command;
};
ParsedCommand parse_client_command(const nlohmann::json& msg);

/// Console back end: runs the control loop in real time on its own thread
/// and serves the WebSocket JSON protocol. The first client is the
/// operator; later clients are spectators whose commands are refused,
/// except `kill`, which is honored from anyone.
class SessionService {
 public:
  SessionService(SessionConfig cfg, ServiceOptions opts);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  void start();
  void stop();
  std::uint16_t port() const;

  /// Completed trial records so far (copy).
  std::vector<TrialRecord> records() const;
  std::uint64_t ticks() const { return ticks_.load(); }

 private:
  friend class WsSession;
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<std::uint64_t> ticks_{0};
};

}  // namespace kinhmd::session
