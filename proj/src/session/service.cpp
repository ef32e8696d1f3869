#include "kinhmd/session/service.hpp"

#include <deque>
#include <map>
#include <mutex>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>

namespace kinhmd::session {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json scales_json() {
  json out = json::array();
  for (const auto& s : kRatingScales) out.push_back({{"name", s.name}, {"min", s.min}, {"max", s.max}});
  return out;
}

}  // namespace

json state_frame(const Snapshot& s) {
  const Quat& q = s.head.orientation;
  return json{
      {"type", "state"},
      {"t", s.t},
      {"force", vec_json(s.force)},
      {"head", {{"pos", vec_json(s.head.position)}, {"quat", json::array({q.x(), q.y(), q.z(), q.w()})}}},
      {"safety", safety::to_string(s.safety)},
      {"trial", {{"index", s.trial_index}, {"phase", s.trial_phase}}},
      {"gain", s.gain},
      {"mode", cueing::to_string(s.mode)},
      {"tick_us", s.mean_tick_us},
  };
}

ParsedCommand parse_client_command(const json& msg) {
  if (!msg.is_object() || msg.value("type", "") != "cmd" || !msg.contains("cmd") || !msg.at("cmd").is_string()) {
    throw DomainError("expected {\"type\":\"cmd\",\"cmd\":...}");
  }
  const auto name = msg.at("cmd").get<std::string>();
  ParsedCommand out;
  try {
    if (name == "kill") {
      out.kill = true;
    } else if (auto ev = safety::kill_event_from_string(name)) {
      out.command.type = Command::Type::safety_event;
      out.command.event = *ev;
    } else if (name == "set_gain") {
      out.command.type = Command::Type::set_gain;
      out.command.value = msg.at("value").get<double>();
    } else if (name == "set_mode") {
      auto m = cueing::mode_from_string(msg.at("value").get<std::string>());
      if (!m) throw DomainError("unknown mode");
      out.command.type = Command::Type::set_mode;
      out.command.mode = *m;
    } else if (name == "start_trial") {
      out.command.type = Command::Type::start_trial;
      out.command.trial_index = msg.value("index", -1);
    } else if (name == "rate") {
      const auto& r = msg.at("ratings");
      out.command.type = Command::Type::rate;
      out.command.ratings = {r.at("relative_motion").get<int>(), r.at("acceleration").get<int>(),
                             r.at("comfort").get<int>()};
    } else {
      throw DomainError("unknown command '" + name + "'");
    }
  } catch (const json::exception& e) {
    throw DomainError(fmt::format("command '{}': {}", name, e.what()));
  }
  return out;
}

class WsSession;

struct SessionService::Impl {
  Impl(SessionConfig c, ServiceOptions o)
      : cfg(std::move(c)),
        opts(o),
        acceptor(ioc),
        loop(cfg),
        seq(cfg.stimulus, cfg.tick_rate),
        plan(plan_trials({kAllConditions.begin(), kAllConditions.end()}, o.reps, o.seed)),
        base_mode(cfg.cueing.mode) {}

  SessionConfig cfg;
  ServiceOptions opts;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::thread io_thread;
  std::thread loop_thread;
  std::atomic<bool> running{false};

  // Loop-thread state.
  ControlLoop loop;
  TrialSequencer seq;
  TrialPlan plan;
  int next_trial = 0;
  cueing::Mode base_mode;
  std::optional<telemetry::LatestSampleMailbox> mailbox;
  std::unique_ptr<telemetry::UdpReceiver> receiver;
  std::unique_ptr<MailboxSource> live;

  mutable std::mutex records_mu;
  std::vector<TrialRecord> records;

  // IO-thread state.
  std::map<std::uint64_t, std::shared_ptr<WsSession>> clients;
  std::uint64_t next_client = 1;
  std::uint64_t operator_id = 0;

  void accept();
  void join(const std::shared_ptr<WsSession>& s);
  void leave(std::uint64_t id);
  void on_message(std::uint64_t id, const std::string& text);
  void send_to(std::uint64_t id, std::string text);
  void broadcast(std::string text);
  /// Thread-safe: hands a message to the IO thread.
  void post_reply(std::uint64_t id, json msg);
  void post_broadcast(json msg);

  void run_loop();
  void handle_loop_command(const Command& c);
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, SessionService::Impl& svc, std::uint64_t id)
      : ws_(std::move(socket)), svc_(svc), id_(id) {}

  std::uint64_t id() const { return id_; }

  void run() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->svc_.join(self);
      self->read();
    });
  }

  void send(std::string text) {
    // Slow clients lose state frames rather than growing the queue.
    if (queue_.size() >= 64) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write();
  }

  void close() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->svc_.leave(self->id_);
        return;
      }
      self->svc_.on_message(self->id_, beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  SessionService::Impl& svc_;
  std::uint64_t id_;
};

void SessionService::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (!running) return;
    if (!ec) std::make_shared<WsSession>(std::move(socket), *this, next_client++)->run();
    accept();
  });
}

void SessionService::Impl::join(const std::shared_ptr<WsSession>& s) {
  clients[s->id()] = s;
  if (operator_id == 0) operator_id = s->id();
  s->send(json{{"type", "hello"},
               {"role", operator_id == s->id() ? "operator" : "spectator"},
               {"scales", scales_json()},
               {"force_limit", cfg.safety.force_limit},
               {"max_gain", cfg.safety.force_limit / cfg.gain_reference_accel},
               {"trials", plan.order.size()}}
              .dump());
}

void SessionService::Impl::leave(std::uint64_t id) {
  clients.erase(id);
  if (operator_id == id) operator_id = 0;
}

void SessionService::Impl::send_to(std::uint64_t id, std::string text) {
  if (auto it = clients.find(id); it != clients.end()) it->second->send(std::move(text));
}

void SessionService::Impl::broadcast(std::string text) {
  for (auto& [_, c] : clients) c->send(text);
}

void SessionService::Impl::post_reply(std::uint64_t id, json msg) {
  asio::post(ioc, [this, id, text = msg.dump()]() mutable { send_to(id, std::move(text)); });
}

void SessionService::Impl::post_broadcast(json msg) {
  asio::post(ioc, [this, text = msg.dump()]() mutable { broadcast(std::move(text)); });
}

void SessionService::Impl::on_message(std::uint64_t id, const std::string& text) {
  json reply{{"type", "ack"}};
  try {
    const auto msg = json::parse(text);
    const auto parsed = parse_client_command(msg);
    reply["cmd"] = msg.at("cmd");
    if (parsed.kill) {
      loop.kill_latch().trigger();
      reply["ok"] = true;
    } else if (id != operator_id) {
      reply["ok"] = false;
      reply["reason"] = "spectator clients are read-only";
    } else {
      Command c = parsed.command;
      c.origin = id;
      if (!loop.commands().push(c)) {
        reply["ok"] = false;
        reply["reason"] = "command queue full";
      } else if (c.type == Command::Type::start_trial || c.type == Command::Type::rate ||
                 c.type == Command::Type::set_mode) {
        return;  // acknowledged by the loop thread once checked
      } else {
        reply["ok"] = true;
      }
    }
  } catch (const std::exception& e) {
    reply["ok"] = false;
    reply["reason"] = e.what();
  }
  send_to(id, reply.dump());
}

void SessionService::Impl::handle_loop_command(const Command& c) {
  const char* name = c.type == Command::Type::start_trial ? "start_trial"
                     : c.type == Command::Type::set_mode  ? "set_mode"
                                                          : "rate";
  auto reject = [&](const std::string& reason) {
    post_reply(c.origin, json{{"type", "ack"}, {"cmd", name}, {"ok", false}, {"reason", reason}});
  };

  if (c.type == Command::Type::set_mode) {
    if (seq.active()) return reject("mode is fixed by the running trial");
    base_mode = c.mode;
    post_reply(c.origin, json{{"type", "ack"}, {"cmd", name}, {"ok", true}});
    return;
  }

  if (c.type == Command::Type::start_trial) {
    if (seq.active() || seq.phase() == TrialPhase::rating) return reject("a trial is already active");
    if (loop.safety().kill_switch().state != safety::KillState::ENGAGED) {
      return reject("kill switch must be ENGAGED to start a trial");
    }
    const int index = c.trial_index >= 0 ? c.trial_index : next_trial;
    if (index >= static_cast<int>(plan.order.size())) return reject("no trials left in the plan");
    seq.reset();
    seq.start(index, plan.order[static_cast<std::size_t>(index)], loop.now());
    next_trial = index + 1;
    post_reply(c.origin, json{{"type", "ack"}, {"cmd", name}, {"ok", true}, {"index", index},
                              {"condition", to_string(plan.order[static_cast<std::size_t>(index)])}});
    return;
  }

  if (seq.phase() != TrialPhase::rating) return reject("no trial is waiting for ratings");
  try {
    const auto rec = seq.rate(Ratings::from(c.ratings));
    {
      std::lock_guard lock(records_mu);
      records.push_back(rec);
    }
    seq.reset();
    post_reply(c.origin, json{{"type", "ack"}, {"cmd", name}, {"ok", true}, {"index", rec.trial_index}});
  } catch (const DomainError& e) {
    reject(e.what());
  }
}

void SessionService::Impl::run_loop() {
  std::optional<Pacer> pacer;
  if (opts.pacing == Pacing::realtime) pacer.emplace(loop.dt());
  TrialPhase last_phase = seq.phase();
  while (running) {
    if (pacer) pacer->wait_next();
    const double now = loop.now();
    TickInput input;
    input.sample.timestamp = now;
    if (seq.active()) {
      input = seq.input(now);
      loop.set_mode(seq.mode());
    } else {
      loop.set_mode(base_mode);
      if (live) input = live->sample(now);
    }
    cueing::WrenchCommand cmd;
    try {
      cmd = loop.tick(input);
    } catch (const HardFault&) {
    }
    if (pacer && pacer->finished_late()) loop.timing().overruns += 1;

    seq.observe(now, loop.device().head(), cmd.force, loop.safety().kill_switch().state);
    loop.set_trial_status(seq.phase() == TrialPhase::idle ? -1 : seq.record().trial_index,
                          std::string(to_string(seq.phase())));
    if (seq.phase() != last_phase) {
      last_phase = seq.phase();
      json ev{{"type", "trial"}, {"index", seq.record().trial_index}, {"phase", to_string(last_phase)},
              {"condition", to_string(seq.record().condition)}};
      if (last_phase == TrialPhase::rating) ev["scales"] = scales_json();
      post_broadcast(ev);
      if (last_phase == TrialPhase::cancelled) {
        std::lock_guard lock(records_mu);
        records.push_back(seq.record());
      }
    }
  }
}

SessionService::SessionService(SessionConfig cfg, ServiceOptions opts)
    : impl_(std::make_unique<Impl>(std::move(cfg), opts)) {}

SessionService::~SessionService() { stop(); }

void SessionService::start() {
  auto& s = *impl_;
  if (s.running) return;

  tcp::endpoint ep(asio::ip::make_address("127.0.0.1"), s.opts.port);
  s.acceptor.open(ep.protocol());
  s.acceptor.set_option(asio::socket_base::reuse_address(true));
  s.acceptor.bind(ep);
  s.acceptor.listen();

  if (s.cfg.source == SourceKind::live_udp) {
    s.mailbox.emplace();
    const auto epoch = std::chrono::steady_clock::now();
    s.receiver = std::make_unique<telemetry::UdpReceiver>(
        s.cfg.telemetry.port, s.cfg.telemetry.channels, *s.mailbox,
        [epoch] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch).count(); });
    s.live = std::make_unique<MailboxSource>(*s.mailbox, s.cfg.telemetry.staleness_timeout);
  }

  const auto every = static_cast<std::uint64_t>(std::max(1.0, std::round(s.cfg.tick_rate / s.opts.frame_rate)));
  s.loop.set_snapshot_sink(
      [this](const Snapshot& snap) {
        ticks_.store(static_cast<std::uint64_t>(std::llround(snap.t * impl_->cfg.tick_rate)));
        impl_->post_broadcast(state_frame(snap));
      },
      every);
  s.loop.set_command_handler([&s](const Command& c) { s.handle_loop_command(c); });

  s.running = true;
  s.accept();
  s.io_thread = std::thread([&s] {
    auto guard = asio::make_work_guard(s.ioc);
    s.ioc.run();
  });
  s.loop_thread = std::thread([&s] { s.run_loop(); });
}

void SessionService::stop() {
  if (!impl_) return;
  auto& s = *impl_;
  if (!s.running.exchange(false)) return;
  if (s.loop_thread.joinable()) s.loop_thread.join();
  if (s.receiver) s.receiver->stop();
  asio::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    for (auto& [_, c] : s.clients) c->close();
    s.clients.clear();
  });
  s.ioc.stop();
  if (s.io_thread.joinable()) s.io_thread.join();
}

std::uint16_t SessionService::port() const { return impl_->acceptor.local_endpoint().port(); }

std::vector<TrialRecord> SessionService::records() const {
  std::lock_guard lock(impl_->records_mu);
  return impl_->records;
}

}  // namespace kinhmd::session
