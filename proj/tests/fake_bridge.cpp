#include "fake_bridge.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <charconv>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace fake_bridge {

namespace {

class LineIo {
 public:
  LineIo(int in_fd, int out_fd) : in_(in_fd), out_(out_fd) {}

  bool read_line(std::string& line) {
    while (true) {
      const auto pos = buf_.find('\n');
      if (pos != std::string::npos) {
        line = buf_.substr(0, pos);
        buf_.erase(0, pos + 1);
        return true;
      }
      char chunk[4096];
      const ssize_t n = ::read(in_, chunk, sizeof(chunk));
      if (n <= 0) return false;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void write(const std::string& text) {
    std::size_t off = 0;
    while (off < text.size()) {
      const ssize_t n = ::write(out_, text.data() + off, text.size() - off);
      if (n <= 0) return;
      off += static_cast<std::size_t>(n);
    }
  }

 private:
  int in_;
  int out_;
  std::string buf_;
};

std::vector<std::string> fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool to_double(const std::string& s, double& v) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool to_count(const std::string& s, std::size_t& v) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void serve(int in_fd, int out_fd, Mode mode) {
  LineIo io(in_fd, out_fd);
  std::vector<std::vector<double>> ctx_rows;
  std::vector<double> ctx_labels;
  std::size_t n_feat = 0;
  bool have_ctx = false;
  std::string line;
  while (io.read_line(line)) {
    const auto head = fields(line, ' ');
    if (head.empty()) {
      io.write("ERR BADDIM empty command\n");
      continue;
    }
    if (head[0] == "PING" && head.size() == 1) {
      io.write("PONG\n");
    } else if (head[0] == "QUIT") {
      return;
    } else if (head[0] == "CTX" && head.size() == 3) {
      std::size_t n = 0;
      std::size_t f = 0;
      if (!to_count(head[1], n) || !to_count(head[2], f)) {
        io.write("ERR BADNUM bad CTX header\n");
        continue;
      }
      std::vector<std::vector<double>> rows;
      std::vector<double> labels;
      std::string err;
      for (std::size_t i = 0; i < n; ++i) {
        if (!io.read_line(line)) return;
        const auto cells = fields(line, '\t');
        if (cells.size() != f + 1) {
          if (err.empty()) err = "ERR BADDIM row width\n";
          continue;
        }
        std::vector<double> row(f);
        double label = 0.0;
        bool ok = to_double(cells[f], label);
        for (std::size_t j = 0; j < f && ok; ++j) ok = to_double(cells[j], row[j]);
        if (!ok && err.empty()) err = "ERR BADNUM unparseable float\n";
        rows.push_back(std::move(row));
        labels.push_back(label);
      }
      if (!err.empty()) {
        io.write(err);
        continue;
      }
      ctx_rows = std::move(rows);
      ctx_labels = std::move(labels);
      n_feat = f;
      have_ctx = n > 0;
      io.write("OK 0\n");
    } else if (head[0] == "QRY" && head.size() == 2) {
      std::size_t m = 0;
      if (!to_count(head[1], m)) {
        io.write("ERR BADNUM bad QRY header\n");
        continue;
      }
      std::vector<std::vector<double>> queries;
      std::string err;
      for (std::size_t i = 0; i < m; ++i) {
        if (!io.read_line(line)) return;
        const auto cells = fields(line, '\t');
        if (!have_ctx || cells.size() != n_feat) {
          if (err.empty()) err = "ERR BADDIM query width\n";
          continue;
        }
        std::vector<double> q(n_feat);
        bool ok = true;
        for (std::size_t j = 0; j < n_feat && ok; ++j) ok = to_double(cells[j], q[j]);
        if (!ok && err.empty()) err = "ERR BADNUM unparseable float\n";
        queries.push_back(std::move(q));
      }
      if (!have_ctx) err = "ERR BADDIM no context\n";
      if (!err.empty()) {
        io.write(err);
        continue;
      }
      std::string reply = "OK " + std::to_string(mode == Mode::kShortReply && m > 0 ? m - 1 : m) + "\n";
      const std::size_t emit = mode == Mode::kShortReply && m > 0 ? m - 1 : m;
      for (std::size_t i = 0; i < emit; ++i) {
        if (mode == Mode::kGarbage) {
          reply += "not-a-number\n";
          continue;
        }
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < ctx_rows.size(); ++r) {
          double d = 0.0;
          for (std::size_t j = 0; j < n_feat; ++j) {
            const double diff = ctx_rows[r][j] - queries[i][j];
            d += diff * diff;
          }
          if (d < best_d) {
            best_d = d;
            best = r;
          }
        }
        reply += shortest(ctx_labels[best]) + "\n";
      }
      io.write(reply);
    } else {
      io.write("ERR BADDIM unknown command\n");
    }
  }
}

struct TcpServer::Impl {
  int listen_fd = -1;
  int port = 0;
  std::thread worker;
};

TcpServer::TcpServer(Mode mode, int sessions) : impl_(new Impl) {
  impl_->listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (impl_->listen_fd < 0) throw std::runtime_error("fake bridge: socket failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(impl_->listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(impl_->listen_fd, 4) != 0) {
    throw std::runtime_error("fake bridge: bind/listen failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(impl_->listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
  impl_->port = ntohs(addr.sin_port);
  const int fd = impl_->listen_fd;
  impl_->worker = std::thread([fd, mode, sessions] {
    for (int i = 0; i < sessions; ++i) {
      const int conn = ::accept(fd, nullptr, nullptr);
      if (conn < 0) return;
      serve(conn, conn, mode);
      ::close(conn);
    }
  });
}

TcpServer::~TcpServer() {
  ::shutdown(impl_->listen_fd, SHUT_RDWR);
  ::close(impl_->listen_fd);
  if (impl_->worker.joinable()) impl_->worker.join();
  delete impl_;
}

std::string TcpServer::endpoint() const { return "tcp:127.0.0.1:" + std::to_string(impl_->port); }

}  // namespace fake_bridge
