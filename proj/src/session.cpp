#include "explicable/session.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <cstdio>
#include <deque>
#include <iostream>
#include <optional>
#include <thread>

namespace explicable::session {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using asio::awaitable;
using asio::use_awaitable;
using Clock = std::chrono::steady_clock;

std::string_view to_string(MessageType t) {
  switch (t) {
    case MessageType::Hello: return "HELLO";
    case MessageType::State: return "STATE";
    case MessageType::Command: return "COMMAND";
    case MessageType::LabelRequest: return "LABEL_REQUEST";
    case MessageType::LabelResponse: return "LABEL_RESPONSE";
    case MessageType::EpisodeEnd: return "EPISODE_END";
    case MessageType::Error: return "ERROR";
  }
  return "?";
}

namespace {

std::optional<MessageType> type_from_string(std::string_view s) {
  for (MessageType t : {MessageType::Hello, MessageType::State, MessageType::Command,
                        MessageType::LabelRequest, MessageType::LabelResponse,
                        MessageType::EpisodeEnd, MessageType::Error}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

}  // namespace

SessionMessage validate_message(std::string_view raw) {
  Json j = Json::parse(raw.begin(), raw.end(), nullptr, false);
  if (j.is_discarded()) throw MalformedMessage("parse");
  if (!j.is_object()) throw MalformedMessage("message must be an object");
  if (!j.contains("type") || !j["type"].is_string()) throw MalformedMessage("type required");
  auto type = type_from_string(j["type"].get<std::string>());
  if (!type) throw MalformedMessage("unknown type " + j["type"].get<std::string>());
  if (!j.contains("seq")) throw MalformedMessage("seq required");
  if (!j["seq"].is_number_integer() || j["seq"].get<std::int64_t>() < 1) {
    throw MalformedMessage("seq must be a positive integer");
  }
  if (!j.contains("payload") || !j["payload"].is_object()) throw MalformedMessage("payload required");

  SessionMessage m{*type, j["payload"], j["seq"].get<std::int64_t>()};
  const Json& p = m.payload;
  switch (m.type) {
    case MessageType::Hello:
      if (!p.contains("problem_id") || !p["problem_id"].is_string()) {
        throw MalformedMessage("problem_id required");
      }
      if (!p.contains("mode") || !p["mode"].is_string() ||
          (p["mode"] != "train" && p["mode"] != "play")) {
        throw MalformedMessage("mode must be train or play");
      }
      break;
    case MessageType::Command:
      if (!p.contains("room") || !p["room"].is_number_integer()) throw MalformedMessage("room required");
      break;
    case MessageType::LabelResponse:
      if (!p.contains("event_id") || !p["event_id"].is_number_integer()) {
        throw MalformedMessage("event_id required");
      }
      if (!p.contains("explicable") || !p["explicable"].is_boolean()) {
        throw MalformedMessage("explicable required");
      }
      break;
    default:
      break;
  }
  return m;
}

std::string encode(const SessionMessage& m) {
  Json j = {{"type", std::string(to_string(m.type))}, {"payload", m.payload}, {"seq", m.seq}};
  return j.dump();
}

TraceSink::TraceSink(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string TraceSink::append(Trace trace) {
  std::lock_guard lock(mutex_);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", traces_.size() + 1);
  trace.trace_id = "live-" + trace.problem_ref + "-" + buf;
  if (!dir_.empty()) save_trace(dir_ / (trace.trace_id + ".jsonl"), trace);
  traces_.push_back(trace);
  return trace.trace_id;
}

std::vector<Trace> TraceSink::traces() const {
  std::lock_guard lock(mutex_);
  return traces_;
}

// ---------------------------------------------------------------------------

namespace {

Json cell_json(Cell c) { return Json::array({c.row, c.col}); }

Json state_payload(const TeamState& s, const Json& action, const Json& delta) {
  Json visited = Json::array();
  for (int id : s.visited.ids()) visited.push_back(id);
  return {{"tick", s.tick},
          {"robot_pos", cell_json(s.robot_pos)},
          {"visited", visited},
          {"current_command", s.current_command ? Json(*s.current_command) : Json(nullptr)},
          {"action", action},
          {"grid_delta", delta}};
}

// Only what the human knows: hidden obstacles are never sent.
Json hello_payload(const Problem& p, const std::string& mode) {
  GridMap view = human_view(p.map);
  Json visible = Json::array();
  for (Cell c : view.visible_obstacles) visible.push_back(cell_json(c));
  Json rooms = Json::array();
  for (const Room& r : view.rooms) rooms.push_back({{"id", r.id}, {"cell", cell_json(r.cell)}});
  return {{"problem_id", p.id},     {"mode", mode},       {"width", view.width},
          {"height", view.height},  {"visible", visible}, {"rooms", rooms},
          {"robot_start", cell_json(view.robot_start)}};
}

struct Connection {
  explicit Connection(beast::tcp_stream stream)
      : ws(std::move(stream)), wake(ws.get_executor()) {}

  websocket::stream<beast::tcp_stream> ws;
  asio::steady_timer wake;
  std::deque<std::string> inbox;
  bool closed = false;
};

awaitable<void> read_loop(std::shared_ptr<Connection> conn) {
  try {
    for (;;) {
      beast::flat_buffer buffer;
      co_await conn->ws.async_read(buffer, use_awaitable);
      conn->inbox.push_back(beast::buffers_to_string(buffer.data()));
      conn->wake.cancel();
    }
  } catch (const std::exception&) {
  }
  conn->closed = true;
  conn->wake.cancel();
}

class LiveSession {
 public:
  LiveSession(std::shared_ptr<Connection> conn, const ProblemSet& problems,
              const ServeOptions& options, TraceSink& sink)
      : conn_(std::move(conn)), problems_(problems), options_(options), sink_(sink) {}

  awaitable<void> run() {
    try {
      co_await run_protocol();
    } catch (const std::exception&) {
      // Write failures mean the peer went away.
      conn_->closed = true;
    }
    if (episode_ && !persisted_) persist(Outcome::Aborted);
    if (!conn_->closed && conn_->ws.is_open()) {
      beast::error_code ec;
      co_await conn_->ws.async_close(websocket::close_code::normal,
                                     asio::redirect_error(use_awaitable, ec));
    }
  }

 private:
  awaitable<void> send(MessageType type, Json payload) {
    SessionMessage m{type, std::move(payload), ++out_seq_};
    std::string text = encode(m);
    co_await conn_->ws.async_write(asio::buffer(text), use_awaitable);
  }

  awaitable<void> error(const std::string& reason) {
    Json payload = {{"reason", reason}};
    co_await send(MessageType::Error, std::move(payload));
  }

  std::string persist(Outcome outcome) {
    persisted_ = true;
    return sink_.append(episode_->finish(outcome));
  }

  awaitable<void> end(Outcome outcome) {
    std::string id = persist(outcome);
    Json payload = {{"outcome", std::string(to_string(outcome))}, {"trace_id", id}};
    co_await send(MessageType::EpisodeEnd, std::move(payload));
  }

  // Waits until a message arrives, the connection closes or `deadline` passes.
  awaitable<void> wait_until(Clock::time_point deadline) {
    if (!conn_->inbox.empty() || conn_->closed) co_return;
    conn_->wake.expires_at(deadline);
    beast::error_code ec;
    co_await conn_->wake.async_wait(asio::redirect_error(use_awaitable, ec));
  }

  // Returns false when the session must end.
  awaitable<bool> handle(const std::string& raw) {
    last_inbound_ = Clock::now();
    SessionMessage m;
    try {
      m = validate_message(raw);
    } catch (const MalformedMessage& e) {
      co_await error(std::string("malformed message: ") + e.what());
      co_return false;
    }
    if (m.seq != in_seq_ + 1) {
      co_await error("seq out of order: expected " + std::to_string(in_seq_ + 1));
      co_return false;
    }
    in_seq_ = m.seq;

    if (!episode_) {
      if (m.type != MessageType::Hello) {
        co_await error("expected HELLO");
        co_return false;
      }
      const std::string id = m.payload["problem_id"].get<std::string>();
      const Problem* problem = nullptr;
      for (const Problem& p : problems_.problems) {
        if (p.id == id) problem = &p;
      }
      if (!problem) {
        co_await error("unknown problem " + id);
        co_return false;
      }
      mode_ = m.payload["mode"].get<std::string>();
      EpisodeOptions eo;
      eo.collect_labels = mode_ == "train";
      eo.action_delay = options_.action_delay;
      eo.source = TraceSource::HumanLive;
      episode_.emplace(*problem, nullptr, eo);
      co_await send(MessageType::Hello, hello_payload(*problem, mode_));
      Json initial = state_payload(episode_->state(), nullptr, Json::array());
      co_await send(MessageType::State, std::move(initial));
      last_action_ = Clock::now();
      co_return true;
    }

    switch (m.type) {
      case MessageType::Command: {
        const int room = m.payload["room"].get<int>();
        const GridMap& map = episode_->problem().map;
        if (room < 0 || room >= map.room_count()) {
          co_await error("unknown room " + std::to_string(room));
          co_return true;
        }
        if (episode_->state().visited.contains(room)) {
          co_await error("room already visited");
          co_return true;
        }
        if (episode_->state().current_command == room) {
          co_await error("room already commanded");
          co_return true;
        }
        const TraceEvent& e = episode_->command(room);
        Json delta = Json::array({{{"cell", cell_json(map.room(room).cell)}, {"kind", "commanded"}}});
        if (e.state_after.visited.contains(room)) {
          delta.push_back({{"cell", cell_json(map.room(room).cell)}, {"kind", "visited"}});
        }
        co_await send(MessageType::State, state_payload(e.state_after, to_json(e.action), delta));
        last_action_ = Clock::now();
        co_return true;
      }
      case MessageType::LabelResponse: {
        auto event_id = m.payload["event_id"].get<std::int64_t>();
        if (!pending_label_ || static_cast<std::int64_t>(*pending_label_) != event_id) {
          co_await error("no label request pending for event " + std::to_string(event_id));
          co_return false;
        }
        episode_->set_label(*pending_label_, m.payload["explicable"].get<bool>()
                                                 ? Label::Explicable
                                                 : Label::Inexplicable);
        pending_label_.reset();
        co_return true;
      }
      default:
        co_await error("unexpected " + std::string(to_string(m.type)));
        co_return false;
    }
  }

  awaitable<void> robot_step() {
    const Cell from = episode_->state().robot_pos;
    const TraceEvent& e = episode_->robot_step();
    const std::size_t index = episode_->events().size() - 1;
    Json delta = Json::array({{{"cell", cell_json(from)}, {"kind", "free"}},
                              {{"cell", cell_json(e.state_after.robot_pos)}, {"kind", "robot"}}});
    auto room = episode_->problem().map.room_at(e.state_after.robot_pos);
    if (room && e.state_after.visited.contains(*room) && !e.state_after.current_command) {
      delta.push_back({{"cell", cell_json(e.state_after.robot_pos)}, {"kind", "visited"}});
    }
    Json action = to_json(e.action);
    co_await send(MessageType::State, state_payload(e.state_after, action, delta));
    if (mode_ == "train") {
      pending_label_ = index;
      Json request = {{"event_id", static_cast<std::int64_t>(index)}, {"action", action}};
      co_await send(MessageType::LabelRequest, std::move(request));
    }
    last_action_ = Clock::now();
  }

  awaitable<void> run_protocol() {
    last_inbound_ = Clock::now();
    for (;;) {
      while (!conn_->inbox.empty()) {
        std::string raw = std::move(conn_->inbox.front());
        conn_->inbox.pop_front();
        if (!co_await handle(raw)) co_return;
      }
      if (conn_->closed) co_return;

      if (episode_ && episode_->done() && !pending_label_) {
        co_await end(Outcome::Completed);
        co_return;
      }
      const auto now = Clock::now();
      const bool robot_ready = episode_ && episode_->state().current_command && !pending_label_;
      if (robot_ready) {
        const auto due = last_action_ + options_.action_delay;
        if (now >= due) {
          co_await robot_step();
          continue;
        }
        co_await wait_until(due);
        continue;
      }
      // The client is only idle once the robot has nothing left to do.
      const auto deadline = std::max(last_inbound_, last_action_) + options_.idle_timeout;
      if (now >= deadline) {
        if (episode_) {
          co_await end(Outcome::Aborted);
        } else {
          co_await error("timed out waiting for HELLO");
        }
        co_return;
      }
      co_await wait_until(deadline);
    }
  }

  std::shared_ptr<Connection> conn_;
  const ProblemSet& problems_;
  const ServeOptions& options_;
  TraceSink& sink_;
  std::optional<Episode> episode_;
  std::string mode_;
  std::int64_t out_seq_ = 0;
  std::int64_t in_seq_ = 0;
  std::optional<std::size_t> pending_label_;
  bool persisted_ = false;
  Clock::time_point last_inbound_;
  Clock::time_point last_action_;
};

http::response<http::string_body> http_reply(const http::request<http::string_body>& req,
                                              const ProblemSet& problems) {
  http::response<http::string_body> res;
  res.version(req.version());
  res.keep_alive(false);
  if (req.method() == http::verb::get && req.target() == "/health") {
    res.result(http::status::ok);
    res.set(http::field::content_type, "text/plain");
    res.body() = "ok\n";
  } else if (req.method() == http::verb::get && req.target() == "/problems") {
    Json list = Json::array();
    for (const Problem& p : problems.problems) {
      list.push_back({{"id", p.id},
                      {"width", p.map.width},
                      {"height", p.map.height},
                      {"rooms", p.map.room_count()}});
    }
    res.result(http::status::ok);
    res.set(http::field::content_type, "application/json");
    res.body() = list.dump();
  } else {
    res.result(http::status::not_found);
    res.set(http::field::content_type, "text/plain");
    res.body() = "not found\n";
  }
  res.prepare_payload();
  return res;
}

awaitable<void> handle_connection(tcp::socket socket, const ProblemSet& problems,
                                  const ServeOptions& options, TraceSink& sink) {
  try {
    beast::tcp_stream stream(std::move(socket));
    beast::flat_buffer buffer;
    http::request<http::string_body> req;
    stream.expires_after(std::chrono::seconds(30));
    co_await http::async_read(stream, buffer, req, use_awaitable);
    if (!websocket::is_upgrade(req)) {
      auto res = http_reply(req, problems);
      co_await http::async_write(stream, res, use_awaitable);
      beast::error_code ec;
      stream.socket().shutdown(tcp::socket::shutdown_send, ec);
      co_return;
    }
    stream.expires_never();
    auto conn = std::make_shared<Connection>(std::move(stream));
    conn->ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    co_await conn->ws.async_accept(req, use_awaitable);
    asio::co_spawn(conn->ws.get_executor(), read_loop(conn), asio::detached);
    LiveSession session(conn, problems, options, sink);
    co_await session.run();
  } catch (const std::exception&) {
  }
}

awaitable<void> accept_loop(tcp::acceptor& acceptor, const ProblemSet& problems,
                            const ServeOptions& options, TraceSink& sink) {
  for (;;) {
    tcp::socket socket = co_await acceptor.async_accept(use_awaitable);
    asio::co_spawn(acceptor.get_executor(), handle_connection(std::move(socket), problems, options, sink),
                   asio::detached);
  }
}

}  // namespace

struct Server::Impl {
  Impl(ProblemSet p, ServeOptions o)
      : problems(std::move(p)), options(std::move(o)), sink(options.trace_dir), acceptor(io) {}

  ProblemSet problems;
  ServeOptions options;
  TraceSink sink;
  asio::io_context io;
  tcp::acceptor acceptor;
  std::thread thread;
};

Server::Server(ProblemSet problems, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(problems), std::move(options))) {}

Server::~Server() { stop(); }

std::uint16_t Server::start(std::uint16_t port) {
  tcp::endpoint endpoint(asio::ip::make_address(impl_->options.address), port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint);
  impl_->acceptor.listen();
  asio::co_spawn(impl_->io, accept_loop(impl_->acceptor, impl_->problems, impl_->options, impl_->sink),
                 asio::detached);
  impl_->thread = std::thread([this] { impl_->io.run(); });
  return impl_->acceptor.local_endpoint().port();
}

void Server::stop() {
  if (!impl_) return;
  impl_->io.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Server::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

TraceSink& Server::sink() { return impl_->sink; }

void serve(std::uint16_t port, ProblemSet problems, ServeOptions options) {
  Server server(std::move(problems), std::move(options));
  std::uint16_t bound = server.start(port);
  std::cerr << "serving on port " << bound << "\n";
  asio::io_context signals_io;
  asio::signal_set signals(signals_io, SIGINT, SIGTERM);
  signals.async_wait([&](const beast::error_code&, int) { server.stop(); });
  signals_io.run();
}

}  // namespace explicable::session
