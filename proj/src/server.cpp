#include "multiarm/server.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "multiarm/errors.hpp"
#include "multiarm/recorder.hpp"
#include "multiarm/simulation.hpp"

namespace multiarm {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;
using Frame = std::shared_ptr<const std::string>;

unsigned short resolve_port(std::optional<int> cli_port, const char* env_value) {
  auto check = [](long long p, const std::string& what) {
    if (p < 0 || p > 65535) throw ConfigError(what + ": port out of range");
    return static_cast<unsigned short>(p);
  };
  if (cli_port) return check(*cli_port, "--port");
  if (env_value && *env_value) {
    std::size_t used = 0;
    long long p = 0;
    try {
      p = std::stoll(env_value, &used);
    } catch (const std::exception&) {
      throw ConfigError("MULTIARM_PORT: not a number");
    }
    if (used != std::string(env_value).size()) throw ConfigError("MULTIARM_PORT: not a number");
    return check(p, "MULTIARM_PORT");
  }
  return kDefaultPort;
}

nlohmann::json hello_body(const Scenario& scenario) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : scenario.arms) {
    nlohmann::json dh = nlohmann::json::array();
    for (const auto& j : a.model.joints) {
      dh.push_back({{"a", j.a}, {"d", j.d}, {"alpha", j.alpha}, {"theta_offset", j.theta_offset}});
    }
    arms.push_back({{"id", a.id},
                    {"base", pose_to_json(a.model.base_pose)},
                    {"dh", dh},
                    {"flange", pose_to_json(a.model.flange)},
                    {"q0", to_json_array(a.q0)}});
  }
  return arms;
}

namespace {

class ClientSession;

// What the IO thread hands to the control loop.
struct Inbound {
  std::shared_ptr<ClientSession> client;
  std::optional<WireMessage> message;
  std::vector<std::string> warnings;
  std::string error;  // rejected before reaching the loop
  std::optional<std::uint64_t> seq;
};

struct Shared {
  std::mutex mutex;
  std::vector<Inbound> inbox;
  std::map<std::uint64_t, std::weak_ptr<ClientSession>> clients;
  std::atomic<std::uint64_t> dropped{0};
  std::size_t queue_limit = 64;
};

class ClientSession : public std::enable_shared_from_this<ClientSession> {
 public:
  ClientSession(tcp::socket socket, Shared& shared, std::uint64_t id, Frame hello)
      : ws_(std::move(socket)), shared_(shared), id_(id), hello_(std::move(hello)) {}

  void run() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] {
      self->ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      self->ws_.async_accept(
          [self](beast::error_code ec) { self->on_accept(ec); });
    });
  }

  /// Thread-safe; never blocks the caller.
  void send(Frame frame) {
    net::post(ws_.get_executor(), [self = shared_from_this(), f = std::move(frame)]() mutable {
      self->enqueue(std::move(f));
    });
  }

  std::uint64_t id() const { return id_; }

  /// Drops the connection without a close handshake.
  void terminate() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      self->close();
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return close();
    {
      std::lock_guard lock(shared_.mutex);
      shared_.clients[id_] = weak_from_this();
    }
    ws_.text(true);
    enqueue(hello_);
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec) return close();
    Inbound in;
    in.client = shared_from_this();
    try {
      const std::string text = beast::buffers_to_string(buffer_.data());
      ParseResult r = parse_message(std::string_view(text));
      in.seq = r.message.seq;
      if (!std::holds_alternative<HandPoseMsg>(r.message.payload) &&
          !std::holds_alternative<ButtonMsg>(r.message.payload)) {
        in.error = "only hand_pose and button messages are accepted";
      } else if (last_seq_ && r.message.seq <= *last_seq_) {
        in.error = "seq " + std::to_string(r.message.seq) + " not above " +
                   std::to_string(*last_seq_);
      } else {
        last_seq_ = r.message.seq;
        in.message = std::move(r.message);
        in.warnings = std::move(r.warnings);
      }
    } catch (const ProtocolError& e) {
      in.error = e.what();
    }
    buffer_.consume(buffer_.size());
    {
      std::lock_guard lock(shared_.mutex);
      shared_.inbox.push_back(std::move(in));
    }
    do_read();
  }

  void enqueue(Frame f) {
    if (closed_) return;
    if (queue_.size() >= shared_.queue_limit) {
      // Keep the frame in flight; drop the oldest waiting one.
      auto victim = writing_ ? std::next(queue_.begin()) : queue_.begin();
      if (victim != queue_.end()) {
        queue_.erase(victim);
        shared_.dropped.fetch_add(1, std::memory_order_relaxed);
      }
    }
    queue_.push_back(std::move(f));
    if (!writing_) do_write();
  }

  void do_write() {
    writing_ = true;
    ws_.async_write(net::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->on_write(ec);
                    });
  }

  void on_write(beast::error_code ec) {
    writing_ = false;
    if (ec) return close();
    queue_.pop_front();
    if (!queue_.empty()) do_write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    std::lock_guard lock(shared_.mutex);
    shared_.clients.erase(id_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<Frame> queue_;
  bool writing_ = false;
  bool closed_ = false;
  std::optional<std::uint64_t> last_seq_;
  Shared& shared_;
  std::uint64_t id_;
  Frame hello_;
};

}  // namespace

struct TeleopServer::Impl {
  Impl(Scenario s, ServeOptions o)
      : scenario(std::move(s)), options(std::move(o)), acceptor(ioc) {
    shared.queue_limit = std::max<std::size_t>(options.client_queue, 2);
  }

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<ClientSession>(std::move(socket), shared, next_client++, hello)->run();
      accept();
    });
  }

  Frame frame(const Payload& payload, double t) {
    return std::make_shared<const std::string>(serialize({next_seq++, t, payload}));
  }

  void broadcast(const Frame& f) {
    std::vector<std::shared_ptr<ClientSession>> targets;
    {
      std::lock_guard lock(shared.mutex);
      for (auto& [id, w] : shared.clients) {
        if (auto c = w.lock()) targets.push_back(std::move(c));
      }
    }
    for (auto& c : targets) c->send(f);
  }

  void loop();

  Scenario scenario;
  ServeOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor;
  Shared shared;
  Frame hello;
  std::uint64_t next_client = 1;
  std::uint64_t next_seq = 1;  // control thread only
  std::thread io_thread;
  std::thread loop_thread;
  std::atomic<bool> stop_requested{false};

  mutable std::mutex status_mutex;
  std::condition_variable done_cv;
  bool done = false;
  LoopStats stats;
  std::optional<StateSnapshot> last;
  std::optional<std::string> fault;
};

void TeleopServer::Impl::loop() {
  Simulation sim(scenario);
  const double dt = scenario.dt;
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(dt));
  const auto snapshot_every = static_cast<std::uint64_t>(
      std::max(1.0, std::round(1.0 / (options.snapshot_rate * dt))));
  const auto record_every = static_cast<std::uint64_t>(
      std::max(1.0, std::round(options.record_snapshot_period / dt)));
  const std::uint64_t tick_limit =
      options.duration ? static_cast<std::uint64_t>(std::llround(*options.duration / dt))
                       : std::numeric_limits<std::uint64_t>::max();

  std::ofstream log_file;
  std::optional<Recorder> recorder;
  if (options.record) {
    log_file.open(*options.record);
    if (!log_file) throw ConfigError("cannot open record file " + options.record->string());
    recorder.emplace(log_file, scenario);
  }

  TelemetryHash hash;
  std::size_t script_next = 0;
  double jitter_sum = 0.0;
  double busy_sum = 0.0;
  auto deadline = Clock::now();
  std::optional<Clock::time_point> previous_start;
  std::vector<Inbound> batch;

  auto publish_snapshot = [&] {
    StateSnapshot snap = sim.snapshot();
    broadcast(frame(snap, snap.clock));
    std::lock_guard lock(status_mutex);
    ++stats.snapshots_sent;
    last = std::move(snap);
  };

  publish_snapshot();
  if (recorder) recorder->snapshot(0, *last);

  while (!stop_requested.load() && sim.tick_count() < tick_limit) {
    std::this_thread::sleep_until(deadline);
    const auto start = Clock::now();
    if (previous_start) {
      const double p = std::chrono::duration<double>(start - *previous_start).count();
      const double j = std::abs(p - dt);
      jitter_sum += j;
      std::lock_guard lock(status_mutex);
      stats.max_abs_jitter = std::max(stats.max_abs_jitter, j);
    }
    previous_start = start;
    const std::uint64_t k = sim.tick_count();

    batch.clear();
    {
      std::lock_guard lock(shared.mutex);
      batch.swap(shared.inbox);
    }
    while (script_next < scenario.script.size() &&
           apply_tick(scenario.script[script_next].t, dt) <= k) {
      const WireMessage& m = scenario.script[script_next++].message;
      sim.apply(m);
      if (recorder) recorder->input(k, m);
    }
    std::uint64_t rejected = 0;
    for (Inbound& in : batch) {
      auto reply_error = [&](const std::string& msg) {
        ++rejected;
        in.client->send(frame(ErrorMsg{in.seq, msg}, sim.clock()));
      };
      if (!in.message) {
        reply_error(in.error);
        continue;
      }
      try {
        sim.apply(*in.message);
      } catch (const ValidationError& e) {
        reply_error(e.what());
        continue;
      }
      if (recorder) recorder->input(k, *in.message);
      for (const auto& w : in.warnings) in.client->send(frame(ErrorMsg{in.seq, "warning: " + w}, sim.clock()));
      if (std::holds_alternative<ButtonMsg>(in.message->payload)) {
        in.client->send(frame(AckMsg{in.message->seq, sim.gui()}, sim.clock()));
      }
    }

    try {
      emit_telemetry(sim.tick(), scenario.telemetry_decimation, hash, nullptr);
    } catch (const SimulationFault& e) {
      std::lock_guard lock(status_mutex);
      fault = e.what();
      break;
    }
    if (sim.tick_count() % snapshot_every == 0) publish_snapshot();
    if (recorder && sim.tick_count() % record_every == 0) {
      recorder->snapshot(sim.tick_count(), sim.snapshot());
    }

    const auto end = Clock::now();
    busy_sum += std::chrono::duration<double>(end - start).count();
    {
      std::lock_guard lock(status_mutex);
      stats.ticks = sim.tick_count();
      stats.messages_in += batch.size();
      stats.messages_rejected += rejected;
      if (stats.ticks > 1) stats.mean_abs_jitter = jitter_sum / static_cast<double>(stats.ticks - 1);
      stats.mean_busy = busy_sum / static_cast<double>(stats.ticks);
    }
    deadline += period;
    // After a long stall, resynchronize rather than burst through missed ticks.
    if (end - deadline > 50 * period) deadline = end;
  }

  publish_snapshot();
  if (recorder) {
    if (sim.tick_count() % record_every != 0) recorder->snapshot(sim.tick_count(), *last);
    if (!fault) recorder->finish(sim.tick_count(), hash.hex());
  }
}

TeleopServer::TeleopServer(Scenario scenario, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(scenario), std::move(options))) {
  impl_->hello = std::make_shared<const std::string>(
      serialize({0, 0.0, HelloMsg{hello_body(impl_->scenario)}}));
}

TeleopServer::~TeleopServer() { stop(); }

void TeleopServer::start() {
  Impl& m = *impl_;
  const tcp::endpoint ep(net::ip::make_address(m.options.host), m.options.port);
  m.acceptor.open(ep.protocol());
  m.acceptor.set_option(net::socket_base::reuse_address(true));
  m.acceptor.bind(ep);
  m.acceptor.listen();
  m.accept();
  m.io_thread = std::thread([&m] { m.ioc.run(); });
  m.loop_thread = std::thread([&m] {
    try {
      m.loop();
    } catch (const std::exception& e) {
      std::lock_guard lock(m.status_mutex);
      m.fault = e.what();
    }
    std::lock_guard lock(m.status_mutex);
    m.done = true;
    m.done_cv.notify_all();
  });
}

unsigned short TeleopServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void TeleopServer::wait() {
  std::unique_lock lock(impl_->status_mutex);
  impl_->done_cv.wait(lock, [&] { return impl_->done; });
}

bool TeleopServer::wait_for(double seconds) {
  std::unique_lock lock(impl_->status_mutex);
  return impl_->done_cv.wait_for(lock, std::chrono::duration<double>(seconds),
                                 [&] { return impl_->done; });
}

void TeleopServer::stop() {
  Impl& m = *impl_;
  m.stop_requested = true;
  if (m.loop_thread.joinable()) m.loop_thread.join();
  // Give queued final frames a moment to leave before tearing down sockets.
  if (m.io_thread.joinable()) {
    net::post(m.ioc, [&m] {
      beast::error_code ec;
      m.acceptor.close(ec);
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    std::vector<std::shared_ptr<ClientSession>> sessions;
    {
      std::lock_guard lock(m.shared.mutex);
      for (auto& [id, w] : m.shared.clients) {
        if (auto c = w.lock()) sessions.push_back(std::move(c));
      }
    }
    for (auto& c : sessions) c->terminate();
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    m.ioc.stop();
    m.io_thread.join();
  }
}

LoopStats TeleopServer::stats() const {
  std::lock_guard lock(impl_->status_mutex);
  LoopStats s = impl_->stats;
  s.frames_dropped = impl_->shared.dropped.load();
  return s;
}

std::optional<StateSnapshot> TeleopServer::last_snapshot() const {
  std::lock_guard lock(impl_->status_mutex);
  return impl_->last;
}

std::optional<std::string> TeleopServer::fault() const {
  std::lock_guard lock(impl_->status_mutex);
  return impl_->fault;
}

}  // namespace multiarm
