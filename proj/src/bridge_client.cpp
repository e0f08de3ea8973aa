#include "tabql/bridge_client.hpp"

#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>

namespace tabql {

namespace {

int connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (getaddrinfo(host.c_str(), port.c_str(), &hints, &result) != 0) {
    throw BridgeError(BridgeErrorKind::kUnreachable, "bridge: cannot resolve " + host);
  }
  int fd = -1;
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(result);
  if (fd < 0) throw BridgeError(BridgeErrorKind::kUnreachable, "bridge: cannot connect to " + host + ":" + port);
  return fd;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      return parts;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

BridgeClient::BridgeClient(const std::string& endpoint) {
  ::signal(SIGPIPE, SIG_IGN);
  if (endpoint.rfind("stdio:", 0) == 0) {
    const std::string command = endpoint.substr(6);
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
      throw BridgeError(BridgeErrorKind::kUnreachable, "bridge: pipe failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw BridgeError(BridgeErrorKind::kUnreachable, "bridge: fork failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    child_pid_ = pid;
    return;
  }
  std::string rest = endpoint.rfind("tcp:", 0) == 0 ? endpoint.substr(4) : endpoint;
  const std::size_t colon = rest.rfind(':');
  if (colon == std::string::npos) {
    throw BridgeError(BridgeErrorKind::kUnreachable, "bridge: endpoint must be HOST:PORT or stdio:CMD");
  }
  const int fd = connect_tcp(rest.substr(0, colon), rest.substr(colon + 1));
  read_fd_ = fd;
  write_fd_ = fd;
}

BridgeClient::~BridgeClient() {
  try {
    quit();
  } catch (...) {
  }
  if (child_pid_ > 0) {
    int status = 0;
    ::waitpid(child_pid_, &status, 0);
  }
}

void BridgeClient::send(const std::string& text) {
  std::size_t off = 0;
  while (off < text.size()) {
    const ssize_t n = ::write(write_fd_, text.data() + off, text.size() - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw BridgeError(BridgeErrorKind::kUnreachable, "bridge: write failed");
    off += static_cast<std::size_t>(n);
  }
}

std::string BridgeClient::read_line() {
  while (true) {
    const std::size_t nl = pending_.find('\n');
    if (nl != std::string::npos) {
      std::string line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    char buf[4096];
    const ssize_t n = ::read(read_fd_, buf, sizeof(buf));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw BridgeError(BridgeErrorKind::kUnreachable, "bridge: connection closed");
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

void BridgeClient::raise_server_error(std::string_view line) {
  const auto parts = split(line, ' ');
  if (parts.size() >= 2 && parts[0] == "ERR") {
    const auto kind = parts[1] == "BADDIM" ? BridgeErrorKind::kDimensionMismatch
                                           : BridgeErrorKind::kServerError;
    throw BridgeError(kind, "bridge: " + std::string(line));
  }
  throw BridgeError(BridgeErrorKind::kMalformedReply, "bridge: unexpected reply '" + std::string(line) + "'");
}

void BridgeClient::ping() {
  send("PING\n");
  const std::string line = read_line();
  if (line != "PONG") raise_server_error(line);
}

void BridgeClient::set_context(std::span<const double> rows, std::size_t n_feat,
                               std::span<const double> labels) {
  if (n_feat == 0 || rows.size() != labels.size() * n_feat) {
    throw BridgeError(BridgeErrorKind::kDimensionMismatch, "bridge: context shape mismatch");
  }
  std::string msg = "CTX " + std::to_string(labels.size()) + " " + std::to_string(n_feat) + "\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < n_feat; ++j) {
      msg += format_double(rows[i * n_feat + j]);
      msg += '\t';
    }
    msg += format_double(labels[i]);
    msg += '\n';
  }
  send(msg);
  const std::string line = read_line();
  if (line != "OK 0") raise_server_error(line);
}

std::vector<double> BridgeClient::query(std::span<const double> rows, std::size_t n_feat) {
  if (n_feat == 0 || rows.size() % n_feat != 0) {
    throw BridgeError(BridgeErrorKind::kDimensionMismatch, "bridge: query shape mismatch");
  }
  const std::size_t m = rows.size() / n_feat;
  std::string msg = "QRY " + std::to_string(m) + "\n";
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n_feat; ++j) {
      if (j > 0) msg += '\t';
      msg += format_double(rows[i * n_feat + j]);
    }
    msg += '\n';
  }
  send(msg);
  const std::string header = read_line();
  const auto parts = split(header, ' ');
  if (parts.size() != 2 || parts[0] != "OK") raise_server_error(header);
  const auto count = parse_double(parts[1]);
  if (!count || *count != static_cast<double>(m)) {
    throw BridgeError(BridgeErrorKind::kMalformedReply, "bridge: reply row count mismatch: " + header);
  }
  std::vector<double> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::string line = read_line();
    const auto v = parse_double(line);
    if (!v) throw BridgeError(BridgeErrorKind::kMalformedReply, "bridge: bad float '" + line + "'");
    out.push_back(*v);
  }
  return out;
}

void BridgeClient::quit() {
  if (write_fd_ < 0) return;
  try {
    send("QUIT\n");
  } catch (const BridgeError&) {
  }
  if (read_fd_ != write_fd_) ::close(read_fd_);
  ::close(write_fd_);
  read_fd_ = -1;
  write_fd_ = -1;
}

}  // namespace tabql
