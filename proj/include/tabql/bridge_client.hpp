#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tabql {

// Line protocol shared with the external model bridge. UTF-8, '\n'-terminated
// lines, tab-separated data fields, floats as shortest round-trip decimals.
//
//   client: CTX <n_rows> <n_feat>, then n_rows lines of n_feat features + label
//           QRY <m_rows>, then m_rows lines of n_feat features
//           PING | QUIT
//   server: OK <m> then m lines of one float (OK 0 acknowledges a CTX)
//           PONG | ERR <code> <message>   (codes: BADDIM, BADNUM, INTERNAL)

std::string format_double(double value);
std::optional<double> parse_double(std::string_view text);
std::vector<std::string_view> split(std::string_view line, char sep);

enum class BridgeErrorKind { kUnreachable, kMalformedReply, kDimensionMismatch, kServerError };

class BridgeError : public std::runtime_error {
 public:
  BridgeError(BridgeErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  BridgeErrorKind kind() const { return kind_; }

 private:
  BridgeErrorKind kind_;
};

/// One connection to a bridge. Endpoints: "tcp:HOST:PORT", "HOST:PORT", or
/// "stdio:COMMAND" (spawns COMMAND via /bin/sh and talks over its pipes).
/// Not thread-safe; one request in flight.
class BridgeClient {
 public:
  explicit BridgeClient(const std::string& endpoint);
  ~BridgeClient();
  BridgeClient(const BridgeClient&) = delete;
  BridgeClient& operator=(const BridgeClient&) = delete;

  void ping();
  /// rows are n_rows x n_feat; labels has n_rows entries.
  void set_context(std::span<const double> rows, std::size_t n_feat, std::span<const double> labels);
  std::vector<double> query(std::span<const double> rows, std::size_t n_feat);
  void quit();

 private:
  void send(const std::string& text);
  std::string read_line();
  [[noreturn]] void raise_server_error(std::string_view line);

  int read_fd_ = -1;
  int write_fd_ = -1;
  int child_pid_ = -1;
  std::string pending_;
};

}  // namespace tabql
