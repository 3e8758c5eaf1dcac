#pragma once

// Client side of the stdio generator protocol (version 1).
//
// Every message is one line holding one JSON object with a "type" field.
//   -> {"type":"hello","vocab":[...symbols...],"protocol":1}
//   <- {"type":"ready","capabilities":["sample","dist"]}        ("vocab" optional)
//   -> {"type":"sample","id":7,"prefix":[0,1],"count":3,"seed":42}
//   <- {"type":"samples","id":7,"tokens":[4,4,0]}
//   -> {"type":"dist","id":8,"prefix":[0]}
//   <- {"type":"distribution","id":8,"probs":[...]}
//   <- {"type":"error","id":8,"message":"..."}
//
// Token i of a sample reply must be draw i of the SplitMix64 stream for the
// request seed (seeding.hpp). Large requests are split into chunks of at most
// batch_limit tokens; chunk starting at offset o carries seed offset_seed(seed, o).

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmapprox/generators.hpp"
#include "lmapprox/seeding.hpp"

extern char** environ;

namespace lmapprox {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxLineBytes = 10u << 20;

struct BridgeOptions {
  std::size_t batch_limit = 1024;
  /// Peer processes to spawn; each serves one request at a time.
  std::size_t processes = 1;
  /// Upper bound on the wait for any single reply line.
  std::chrono::milliseconds reply_timeout{30'000};
};

namespace detail {

inline void ignore_sigpipe_once() {
  static const bool done = [] {
    struct sigaction current {};
    if (sigaction(SIGPIPE, nullptr, &current) == 0 && current.sa_handler == SIG_DFL) {
      struct sigaction ignore {};
      ignore.sa_handler = SIG_IGN;
      sigaction(SIGPIPE, &ignore, nullptr);
    }
    return true;
  }();
  (void)done;
}

/// One child process running `/bin/sh -c command` in its own process group,
/// with its stdin and stdout connected to us. stderr is inherited. The whole
/// group is killed if it has not exited 0.5 s after our pipes close.
class PeerProcess {
 public:
  PeerProcess(const std::string& command, std::chrono::milliseconds timeout) : timeout_(timeout) {
    ignore_sigpipe_once();
    int to_child[2];
    int from_child[2];
    if (pipe2(to_child, O_CLOEXEC) != 0) throw BridgeProtocolError(std::string("pipe: ") + std::strerror(errno));
    if (pipe2(from_child, O_CLOEXEC) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw BridgeProtocolError(std::string("pipe: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);
    std::string sh = "/bin/sh", dash_c = "-c", cmd = command;
    char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
    const int rc = posix_spawn(&pid_, "/bin/sh", &actions, &attr, argv, environ);
    posix_spawnattr_destroy(&attr);
    posix_spawn_file_actions_destroy(&actions);
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    if (rc != 0) {
      close_fds();
      pid_ = -1;
      throw BridgeProtocolError("cannot start generator process: " + std::string(std::strerror(rc)));
    }
  }

  PeerProcess(const PeerProcess&) = delete;
  PeerProcess& operator=(const PeerProcess&) = delete;

  ~PeerProcess() {
    close_fds();
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (waitpid(pid_, &status, WNOHANG) != 0) return;
        usleep(10'000);
      }
      kill(-pid_, SIGKILL);
      waitpid(pid_, &status, 0);
    }
  }

  void send_line(const std::string& line) {
    std::string data = line;
    data.push_back('\n');
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BridgeProtocolError("generator process closed its input: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      if (buffer_.size() > kMaxLineBytes) throw BridgeProtocolError("reply line exceeds 10 MiB");
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw BridgeProtocolError("timed out waiting for generator reply", buffer_);
      pollfd pfd{read_fd_, POLLIN, 0};
      const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw BridgeProtocolError(std::string("poll: ") + std::strerror(errno));
      }
      if (ready == 0) continue;
      char chunk[65536];
      const ssize_t n = read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BridgeProtocolError(std::string("read: ") + std::strerror(errno));
      }
      if (n == 0) throw BridgeProtocolError("generator process exited", buffer_);
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  void close_fds() {
    if (write_fd_ >= 0) close(write_fd_);
    if (read_fd_ >= 0) close(read_fd_);
    write_fd_ = read_fd_ = -1;
  }

  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
  std::chrono::milliseconds timeout_;
};

/// A peer plus its request counter. Once a protocol violation happens the
/// stream position is unknown and the peer refuses further requests.
struct PeerSession {
  std::unique_ptr<PeerProcess> process;
  std::uint64_t next_id = 1;
  bool broken = false;
};

}  // namespace detail

/// Generator backed by external processes speaking the stdio protocol.
class ExternalGenerator final : public Generator {
 public:
  ExternalGenerator(std::string command, Vocabulary vocab, BridgeOptions options = {})
      : command_(std::move(command)), vocab_(std::move(vocab)), options_(options) {
    if (options_.batch_limit < 1) throw Error(ErrorKind::InvalidArgument, "batch_limit must be at least 1");
    options_.processes = std::max<std::size_t>(options_.processes, 1);
    for (std::size_t i = 0; i < options_.processes; ++i) {
      auto session = std::make_unique<detail::PeerSession>();
      session->process = std::make_unique<detail::PeerProcess>(command_, options_.reply_timeout);
      handshake(*session, i == 0);
      idle_.push_back(session.get());
      sessions_.push_back(std::move(session));
    }
  }

  const Vocabulary& vocabulary() const override { return vocab_; }

  bool has_true_next_dist() const override { return supports_dist_; }
  bool concurrent_sampling() const override { return sessions_.size() > 1; }

  std::vector<OneHotSample> sample_next(TokenView prefix, std::size_t count, std::uint64_t seed) const override {
    Lease lease(*this);
    auto& s = lease.session();
    std::vector<OneHotSample> out;
    out.reserve(count);
    for (std::size_t offset = 0; offset < count; offset += options_.batch_limit) {
      const std::size_t chunk = std::min(options_.batch_limit, count - offset);
      const std::uint64_t id = s.next_id++;
      nlohmann::json request = {{"type", "sample"},
                                {"id", id},
                                {"prefix", std::vector<TokenId>(prefix.begin(), prefix.end())},
                                {"count", chunk},
                                {"seed", offset_seed(seed, offset)}};
      const auto reply = exchange(s, request, id, "samples");
      const auto& tokens = reply.contains("tokens") ? reply["tokens"] : nlohmann::json();
      if (!tokens.is_array() || tokens.size() != chunk) {
        s.broken = true;
        throw BridgeProtocolError("expected " + std::to_string(chunk) + " tokens", reply.dump());
      }
      for (const auto& t : tokens) {
        if (!t.is_number_unsigned() || t.get<std::uint64_t>() >= vocab_.size()) {
          s.broken = true;
          throw BridgeProtocolError("token id outside vocabulary", reply.dump());
        }
        out.push_back(OneHotSample{static_cast<TokenId>(t.get<std::uint64_t>())});
      }
      ++requests_sent_;
    }
    return out;
  }

  CategoricalDistribution true_next_dist(TokenView prefix) const override {
    if (!supports_dist_) return Generator::true_next_dist(prefix);
    Lease lease(*this);
    auto& s = lease.session();
    const std::uint64_t id = s.next_id++;
    nlohmann::json request = {
        {"type", "dist"}, {"id", id}, {"prefix", std::vector<TokenId>(prefix.begin(), prefix.end())}};
    const auto reply = exchange(s, request, id, "distribution");
    try {
      auto probs = reply.at("probs").get<std::vector<double>>();
      if (probs.size() != vocab_.size()) throw Error(ErrorKind::VocabMismatch, "probs has wrong length");
      return CategoricalDistribution(std::move(probs));
    } catch (const std::exception& e) {
      s.broken = true;
      throw BridgeProtocolError(std::string("invalid distribution reply: ") + e.what(), reply.dump());
    }
  }

  /// Number of sample request messages answered so far.
  std::uint64_t requests_sent() const noexcept { return requests_sent_.load(); }

 private:
  class Lease {
   public:
    explicit Lease(const ExternalGenerator& gen) : gen_(gen) {
      std::unique_lock lock(gen_.mutex_);
      gen_.available_.wait(lock, [&] { return !gen_.idle_.empty(); });
      session_ = gen_.idle_.back();
      gen_.idle_.pop_back();
    }
    ~Lease() {
      {
        std::lock_guard lock(gen_.mutex_);
        gen_.idle_.push_back(session_);
      }
      gen_.available_.notify_one();
    }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;

    detail::PeerSession& session() const {
      if (session_->broken) throw BridgeProtocolError("generator process is in a failed state");
      return *session_;
    }

   private:
    const ExternalGenerator& gen_;
    detail::PeerSession* session_ = nullptr;
  };

  static nlohmann::json parse_line(detail::PeerSession& s, const std::string& line) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string()) {
      s.broken = true;
      throw BridgeProtocolError("malformed reply", line);
    }
    return j;
  }

  nlohmann::json exchange(detail::PeerSession& s, const nlohmann::json& request, std::uint64_t id,
                          const std::string& expected_type) const {
    try {
      s.process->send_line(request.dump());
      const std::string line = s.process->read_line();
      auto reply = parse_line(s, line);
      const auto type = reply["type"].get<std::string>();
      if (type == "error") {
        s.broken = true;
        throw BridgeProtocolError("generator reported error: " + reply.value("message", std::string{}), line);
      }
      if (type != expected_type) {
        s.broken = true;
        throw BridgeProtocolError("expected '" + expected_type + "' reply, got '" + type + "'", line);
      }
      if (!reply.contains("id") || !reply["id"].is_number_unsigned() || reply["id"].get<std::uint64_t>() != id) {
        s.broken = true;
        throw BridgeProtocolError("reply id does not match request id " + std::to_string(id), line);
      }
      return reply;
    } catch (const BridgeProtocolError&) {
      s.broken = true;
      throw;
    } catch (const nlohmann::json::exception& e) {
      s.broken = true;
      throw BridgeProtocolError(std::string("invalid reply: ") + e.what());
    }
  }

  void handshake(detail::PeerSession& s, bool first) {
    nlohmann::json hello = {{"type", "hello"}, {"vocab", vocab_.symbols()}, {"protocol", kProtocolVersion}};
    s.process->send_line(hello.dump());
    const std::string line = s.process->read_line();
    auto reply = parse_line(s, line);
    if (reply["type"] != "ready") throw BridgeProtocolError("expected 'ready' handshake reply", line);
    if (reply.contains("vocab") && reply["vocab"] != nlohmann::json(vocab_.symbols())) {
      throw Error(ErrorKind::VocabMismatch, "generator vocabulary differs from evaluation vocabulary");
    }
    const auto caps = reply.value("capabilities", nlohmann::json::array());
    if (!caps.is_array()) throw BridgeProtocolError("capabilities must be an array", line);
    const bool has_sample = std::find(caps.begin(), caps.end(), "sample") != caps.end();
    const bool has_dist = std::find(caps.begin(), caps.end(), "dist") != caps.end();
    if (!has_sample) throw BridgeProtocolError("generator does not advertise 'sample'", line);
    if (first) {
      supports_dist_ = has_dist;
    } else if (supports_dist_ != has_dist) {
      throw BridgeProtocolError("generator processes advertise different capabilities", line);
    }
  }

  std::string command_;
  Vocabulary vocab_;
  BridgeOptions options_;
  bool supports_dist_ = false;
  std::vector<std::unique_ptr<detail::PeerSession>> sessions_;
  mutable std::mutex mutex_;
  mutable std::condition_variable available_;
  mutable std::vector<detail::PeerSession*> idle_;
  mutable std::atomic<std::uint64_t> requests_sent_{0};
};

inline std::shared_ptr<ExternalGenerator> make_external_generator(const std::string& command, const Vocabulary& vocab,
                                                                  BridgeOptions options = {}) {
  return std::make_shared<ExternalGenerator>(command, vocab, options);
}

}  // namespace lmapprox
