#pragma once

// Live episode hosting. Each WebSocket connection binds to one episode; the
// server is authoritative for all state and streams it to the client, which
// only sends commands and judgments. Plain HTTP on the same port answers
// GET /health and GET /problems.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "explicable/datakit.hpp"
#include "explicable/episode.hpp"
#include "explicable/io.hpp"

namespace explicable::session {

enum class MessageType { Hello, State, Command, LabelRequest, LabelResponse, EpisodeEnd, Error };

std::string_view to_string(MessageType t);

struct SessionMessage {
  MessageType type = MessageType::Error;
  Json payload = Json::object();
  std::int64_t seq = 0;
};

class MalformedMessage : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses and schema-checks one wire message. Throws MalformedMessage whose
/// what() is the reason ("parse", "seq required", ...).
SessionMessage validate_message(std::string_view raw);
std::string encode(const SessionMessage& m);

/// Append-only store for finished traces; appends are serialized.
class TraceSink {
 public:
  /// An empty directory keeps traces in memory only.
  explicit TraceSink(std::filesystem::path dir = {});

  /// Assigns the trace id, writes `<dir>/<id>.jsonl`, returns the id.
  std::string append(Trace trace);
  std::vector<Trace> traces() const;

 private:
  mutable std::mutex mutex_;
  std::filesystem::path dir_;
  std::vector<Trace> traces_;
};

struct ServeOptions {
  std::string address = "127.0.0.1";
  std::chrono::milliseconds action_delay{1000};
  std::chrono::milliseconds idle_timeout{120'000};
  std::filesystem::path trace_dir;
};

class Server {
 public:
  Server(ProblemSet problems, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds (0 picks a free port) and serves on a background thread.
  std::uint16_t start(std::uint16_t port);
  void stop();
  /// Blocks until stop() is called from another thread or a signal arrives.
  void wait();

  TraceSink& sink();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serves until interrupted.
void serve(std::uint16_t port, ProblemSet problems, ServeOptions options);

}  // namespace explicable::session
