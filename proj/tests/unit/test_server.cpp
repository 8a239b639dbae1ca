#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "multiarm/errors.hpp"
#include "multiarm/recorder.hpp"
#include "multiarm/server.hpp"

using namespace multiarm;
using nlohmann::json;
namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

class Client {
 public:
  explicit Client(unsigned short port, int receive_buffer = 0) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    if (receive_buffer > 0) {
      ws_.next_layer().open(tcp::v4());
      ws_.next_layer().set_option(net::socket_base::receive_buffer_size(receive_buffer));
    }
    ws_.next_layer().connect(*resolver.resolve("127.0.0.1", std::to_string(port)).begin());
    ws_.handshake("127.0.0.1", "/");
  }

  ~Client() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  json read() {
    beast::flat_buffer b;
    ws_.read(b);
    return json::parse(beast::buffers_to_string(b.data()));
  }

  /// Reads until a frame of `type` arrives.
  json read_until(const std::string& type) {
    for (int i = 0; i < 10000; ++i) {
      json j = read();
      if (j["type"] == type) return j;
    }
    FAIL("no frame of type " << type);
    return {};
  }

  void send(const std::string& text) { ws_.write(net::buffer(text)); }
  void send(const WireMessage& m) { send(serialize(m)); }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

ServeOptions ephemeral() {
  ServeOptions o;
  o.port = 0;
  return o;
}

WireMessage press(std::uint64_t seq, Hand h, ButtonKind b, RobotId id = 0) {
  return {seq, 0.0, ButtonMsg{{h, b, id, Edge::Press}}};
}

WireMessage release(std::uint64_t seq, Hand h, ButtonKind b, RobotId id = 0) {
  return {seq, 0.0, ButtonMsg{{h, b, id, Edge::Release}}};
}

}  // namespace

TEST_CASE("port precedence: flag, then environment, then default") {
  CHECK(resolve_port(9000, "9100") == 9000);
  CHECK(resolve_port(std::nullopt, "9100") == 9100);
  CHECK(resolve_port(std::nullopt, nullptr) == kDefaultPort);
  CHECK(resolve_port(std::nullopt, "") == kDefaultPort);
  CHECK_THROWS_AS(resolve_port(std::nullopt, "12ab"), ConfigError);
  CHECK_THROWS_AS(resolve_port(70000, nullptr), ConfigError);
}

TEST_CASE("handshake, snapshots, acks and error frames") {
  TeleopServer server(parse_scenario(default_scenario_json()), ephemeral());
  server.start();
  Client c(server.port());

  const json hello = c.read();
  CHECK(hello["type"] == "hello");
  CHECK(hello["v"] == kProtocolVersion);
  REQUIRE(hello["body"]["arms"].size() == 4);
  CHECK(hello["body"]["arms"][0]["dh"].size() == 7);

  const json snap = c.read_until("snapshot");
  CHECK(snap["body"]["robots"].size() == 4);
  CHECK(snap["body"]["groups"].empty());

  HandPoseMsg hp;
  hp.hand = Hand::Right;
  hp.position = Vector3(0.0, 0.0, 1.0);
  c.send({1, 0.0, hp});
  c.send(press(2, Hand::Right, ButtonKind::S));
  json ack = c.read_until("ack");
  CHECK(ack["body"]["ack_seq"] == 2);
  CHECK(ack["body"]["gui"]["selecting"]["right"] == true);
  c.send(press(3, Hand::Right, ButtonKind::RB, 2));
  c.send(release(4, Hand::Right, ButtonKind::S));
  c.read_until("ack");
  ack = c.read_until("ack");
  CHECK(ack["body"]["ack_seq"] == 4);
  CHECK(ack["body"]["gui"]["right"][0]["id"] == 2);

  c.send("{this is not json");
  json err = c.read_until("error");
  CHECK(err["body"]["ack_seq"].is_null());
  c.send(press(4, Hand::Left, ButtonKind::F));  // repeated seq
  err = c.read_until("error");
  CHECK(err["body"]["ack_seq"] == 4);
  c.send(R"({"v":1,"type":"snapshot","seq":10,"body":{}})");
  c.read_until("error");
  // Still connected and served.
  c.send(press(11, Hand::Left, ButtonKind::F));
  ack = c.read_until("ack");
  CHECK(ack["body"]["ack_seq"] == 11);

  const json later = c.read_until("snapshot");
  CHECK(later["body"]["robots"][1]["owner"] == "right");
  CHECK(later["body"]["robots"][1]["modality"] == "IC");
  server.stop();
  CHECK_FALSE(server.fault());
  CHECK(server.stats().messages_rejected == 3);
}

TEST_CASE("observers see the same snapshots as the streaming client") {
  TeleopServer server(parse_scenario(default_scenario_json()), ephemeral());
  server.start();
  Client streamer(server.port());
  Client observer(server.port());
  streamer.read();
  observer.read();
  HandPoseMsg hp;
  hp.position = Vector3(0.1, 0.0, 1.0);
  streamer.send({1, 0.0, hp});
  streamer.send(press(2, Hand::Left, ButtonKind::S));
  streamer.send(press(3, Hand::Left, ButtonKind::RB, 1));
  streamer.send(release(4, Hand::Left, ButtonKind::S));

  std::map<std::uint64_t, json> seen;
  for (int i = 0; i < 20;) {
    const json j = streamer.read();
    if (j["type"] != "snapshot") continue;
    seen[j["body"]["tick"]] = j;
    ++i;
  }
  int compared = 0;
  for (int i = 0; i < 40 && compared < 5; ++i) {
    const json j = observer.read_until("snapshot");
    if (auto it = seen.find(j["body"]["tick"]); it != seen.end()) {
      CHECK(it->second == j);
      ++compared;
    }
  }
  CHECK(compared >= 5);
  server.stop();
}

TEST_CASE("a blocked client does not disturb the control loop") {
  ServeOptions o = ephemeral();
  o.snapshot_rate = 1000.0;
  o.client_queue = 8;
  json doc = default_scenario_json();
  TeleopServer server(parse_scenario(doc), o);
  server.start();
  Client stuck(server.port(), 4096);  // never reads
  std::this_thread::sleep_for(std::chrono::milliseconds(2000));
  server.stop();
  const LoopStats s = server.stats();
  MESSAGE("mean |jitter| " << s.mean_abs_jitter * 1e6 << " us, max " << s.max_abs_jitter * 1e6
                            << " us, busy " << s.mean_busy * 1e6 << " us, dropped " << s.frames_dropped);
  CHECK(s.ticks > 1500);
  CHECK(s.frames_dropped > 0);
  CHECK(s.mean_abs_jitter < 0.1 * 1e-3);
}

TEST_CASE("a recorded live session replays to the served final state") {
  const auto path = std::filesystem::temp_directory_path() / "multiarm_server_record.jsonl";
  ServeOptions o = ephemeral();
  o.record = path;
  o.duration = 1.5;
  o.record_snapshot_period = 0.25;
  TeleopServer server(parse_scenario(default_scenario_json()), o);
  server.start();
  {
    Client c(server.port());
    c.read();
    std::uint64_t seq = 1;
    HandPoseMsg hp;
    hp.hand = Hand::Right;
    hp.s_a = 0.7;
    for (int i = 0; i < 30; ++i) {
      hp.position = Vector3(0.002 * i, 0.0, 1.0);
      c.send({seq++, 0.0, hp});
      if (i == 2) {
        c.send(press(seq++, Hand::Right, ButtonKind::S));
        c.send(press(seq++, Hand::Right, ButtonKind::RB, 1));
        c.send(press(seq++, Hand::Right, ButtonKind::RB, 3));
        c.send(release(seq++, Hand::Right, ButtonKind::S));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  server.wait();
  server.stop();
  REQUIRE_FALSE(server.fault());
  std::ifstream in(path);
  const ReplayLog log = read_log(in);
  CHECK_FALSE(log.truncated);
  CHECK(log.inputs.size() == 34);
  const ReplayResult r = replay(log);
  CHECK(r.clean());
  REQUIRE(server.last_snapshot());
  CHECK(snapshot_to_json(r.final_snapshot) == snapshot_to_json(*server.last_snapshot()));
  CHECK(r.final_snapshot.robots[0].owner == Hand::Right);
  std::filesystem::remove(path);
}
