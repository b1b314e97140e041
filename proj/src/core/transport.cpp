#include "transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <limits>

#include <json.hpp>

namespace mhng::wire {

using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::MalformedFrame, why); }

void expect_fields(const ordered_json& j, std::initializer_list<const char*> fields) {
  if (j.size() != fields.size()) malformed("unexpected field count for " + j.at("k").get<std::string>());
  for (const char* f : fields) {
    if (!j.contains(f)) malformed(std::string("missing field ") + f);
  }
}

template <typename T>
T get_uint(const ordered_json& j, const char* field) {
  const auto& v = j.at(field);
  if (!v.is_number_unsigned()) {
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<T>(v.get<std::int64_t>());
    malformed(std::string(field) + " must be a non-negative integer");
  }
  const auto u = v.get<std::uint64_t>();
  if (u > std::numeric_limits<T>::max()) malformed(std::string(field) + " out of range");
  return static_cast<T>(u);
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

std::string_view kind_name(const Message& m) noexcept {
  switch (m.index()) {
    case 0: return "HELLO";
    case 1: return "PROPOSE";
    case 2: return "TURN_END";
    default: return "GAME_END";
  }
}

std::string encode(const Message& m) {
  ordered_json j;
  j["k"] = std::string(kind_name(m));
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Hello>) {
          j["protocol_version"] = msg.protocol_version;
          j["K"] = msg.k;
          j["D"] = msg.d;
          j["seed_echo"] = msg.seed_echo;
        } else if constexpr (std::is_same_v<T, Propose>) {
          j["d"] = msg.d;
          j["w"] = msg.w;
        } else if constexpr (std::is_same_v<T, TurnEnd>) {
          j["t"] = msg.t;
        }
      },
      m);
  std::string out = j.dump();
  out.push_back('\n');
  if (out.size() > kMaxFrameBytes) throw Error(ErrorCode::OversizeFrame, "encoded frame exceeds 4096 bytes");
  return out;
}

Message decode(std::string_view frame) {
  if (!frame.empty() && frame.back() == '\n') frame.remove_suffix(1);
  if (frame.size() > kMaxFrameBytes) throw Error(ErrorCode::OversizeFrame, "frame exceeds 4096 bytes");
  if (frame.find('\n') != std::string_view::npos) malformed("embedded newline");
  ordered_json j;
  try {
    j = ordered_json::parse(frame);
  } catch (const nlohmann::json::exception& e) {
    malformed(e.what());
  }
  if (!j.is_object() || !j.contains("k") || !j["k"].is_string()) malformed("frame is not an object with a string k");
  const auto kind = j["k"].get<std::string>();
  if (kind == "HELLO") {
    expect_fields(j, {"k", "protocol_version", "K", "D", "seed_echo"});
    return Hello{get_uint<int>(j, "protocol_version"), get_uint<std::uint64_t>(j, "K"), get_uint<std::uint64_t>(j, "D"),
                 get_uint<std::uint64_t>(j, "seed_echo")};
  }
  if (kind == "PROPOSE") {
    expect_fields(j, {"k", "d", "w"});
    return Propose{get_uint<std::uint64_t>(j, "d"), get_uint<Sign>(j, "w")};
  }
  if (kind == "TURN_END") {
    expect_fields(j, {"k", "t"});
    if (!j["t"].is_number_integer()) malformed("t must be an integer");
    return TurnEnd{j["t"].get<std::int64_t>()};
  }
  if (kind == "GAME_END") {
    expect_fields(j, {"k"});
    return GameEnd{};
  }
  throw Error(ErrorCode::UnknownKind, kind);
}

Stream::Stream(int fd, std::chrono::milliseconds timeout) : fd_(fd), timeout_(timeout) {}

Stream::Stream(Stream&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), timeout_(other.timeout_), buffer_(std::move(other.buffer_)) {}

Stream& Stream::operator=(Stream&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    timeout_ = other.timeout_;
    buffer_ = std::move(other.buffer_);
  }
  return *this;
}

Stream::~Stream() { close(); }

void Stream::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Stream::write_frame(std::string_view frame) {
  if (fd_ < 0) throw Error(ErrorCode::PeerDisconnected, "stream closed");
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::PeerDisconnected, "send: " + errno_text());
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::string Stream::read_frame() {
  if (fd_ < 0) throw Error(ErrorCode::PeerDisconnected, "stream closed");
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      if (nl > kMaxFrameBytes) throw Error(ErrorCode::OversizeFrame, "frame exceeds 4096 bytes");
      std::string frame = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return frame;
    }
    if (buffer_.size() >= kMaxFrameBytes) throw Error(ErrorCode::OversizeFrame, "no newline within 4096 bytes");
    pollfd p{fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(timeout_.count()));
    if (ready == 0) throw Error(ErrorCode::Timeout, "no frame within " + std::to_string(timeout_.count()) + " ms");
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::PeerDisconnected, "poll: " + errno_text());
    }
    char chunk[1024];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n == 0) throw Error(ErrorCode::PeerDisconnected, "peer closed the stream");
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::PeerDisconnected, "recv: " + errno_text());
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Address Address::parse(std::string_view text) {
  Address a;
  if (text.starts_with("unix:")) {
    a.family = Family::Unix;
    a.path = std::string(text.substr(5));
    if (a.path.empty() || a.path.size() >= sizeof(sockaddr_un::sun_path)) {
      throw Error(ErrorCode::InvalidConfig, "bad unix socket path");
    }
    return a;
  }
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw Error(ErrorCode::InvalidConfig, "address must be host:port");
  a.host = std::string(text.substr(0, colon));
  const auto port_text = text.substr(colon + 1);
  int port = 0;
  for (const char c : port_text) {
    if (c < '0' || c > '9') throw Error(ErrorCode::InvalidConfig, "bad port in address");
    port = port * 10 + (c - '0');
    if (port > 65535) throw Error(ErrorCode::InvalidConfig, "port out of range");
  }
  if (port_text.empty()) throw Error(ErrorCode::InvalidConfig, "missing port");
  a.port = static_cast<std::uint16_t>(port);
  return a;
}

namespace {

sockaddr_in tcp_address(const Address& addr) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(addr.port);
  const std::string host = addr.host == "localhost" ? "127.0.0.1" : addr.host;
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_INET;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw Error(ErrorCode::InvalidConfig, "cannot resolve host " + addr.host);
    }
    sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  return sa;
}

sockaddr_un unix_address(const Address& addr) {
  sockaddr_un sa{};
  sa.sun_family = AF_UNIX;
  std::strncpy(sa.sun_path, addr.path.c_str(), sizeof(sa.sun_path) - 1);
  return sa;
}

}  // namespace

Listener::Listener(const Address& addr) {
  const int family = addr.family == Address::Family::Tcp ? AF_INET : AF_UNIX;
  fd_ = ::socket(family, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw Error(ErrorCode::Io, "socket: " + errno_text());
  int rc;
  if (addr.family == Address::Family::Tcp) {
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    auto sa = tcp_address(addr);
    rc = ::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa);
  } else {
    ::unlink(addr.path.c_str());
    auto sa = unix_address(addr);
    rc = ::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa);
    unix_path_ = addr.path;
  }
  if (rc != 0 || ::listen(fd_, 4) != 0) {
    const std::string why = errno_text();
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::Io, "bind/listen: " + why);
  }
  if (addr.family == Address::Family::Tcp) {
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }
}

Listener::Listener(Listener&& o) noexcept
    : fd_(std::exchange(o.fd_, -1)), port_(o.port_), unix_path_(std::move(o.unix_path_)) {}

Listener& Listener::operator=(Listener&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(o.fd_, -1);
    port_ = o.port_;
    unix_path_ = std::move(o.unix_path_);
  }
  return *this;
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
  if (!unix_path_.empty()) ::unlink(unix_path_.c_str());
}

Stream Listener::accept(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (ready == 0) throw Error(ErrorCode::Timeout, "no peer connected");
  if (ready < 0) throw Error(ErrorCode::Io, "poll: " + errno_text());
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) throw Error(ErrorCode::Io, "accept: " + errno_text());
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Stream(fd);
}

Stream connect(const Address& addr, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const int family = addr.family == Address::Family::Tcp ? AF_INET : AF_UNIX;
    const int fd = ::socket(family, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw Error(ErrorCode::Io, "socket: " + errno_text());
    int rc;
    if (addr.family == Address::Family::Tcp) {
      auto sa = tcp_address(addr);
      rc = ::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa);
    } else {
      auto sa = unix_address(addr);
      rc = ::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa);
    }
    if (rc == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Stream(fd);
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw Error(ErrorCode::Timeout, "could not connect: " + errno_text());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

Hello handshake(Endpoint& ep, const Hello& mine) {
  ep.stream.send(mine);
  const Message reply = ep.stream.receive();
  const auto* peer = std::get_if<Hello>(&reply);
  if (peer == nullptr) {
    throw Error(ErrorCode::HandshakeMismatch, "expected HELLO, got " + std::string(kind_name(reply)));
  }
  if (peer->protocol_version != mine.protocol_version) {
    throw Error(ErrorCode::HandshakeMismatch, "protocol_version " + std::to_string(peer->protocol_version) +
                                                  " != " + std::to_string(mine.protocol_version));
  }
  if (peer->k != mine.k) {
    throw Error(ErrorCode::HandshakeMismatch, "K " + std::to_string(peer->k) + " != " + std::to_string(mine.k));
  }
  if (peer->d != mine.d) {
    throw Error(ErrorCode::HandshakeMismatch, "D " + std::to_string(peer->d) + " != " + std::to_string(mine.d));
  }
  ep.protocol_version = peer->protocol_version;
  return *peer;
}

namespace {

/// Speaks every object in visit order, then closes the turn.
void speak_turn(const GameConfig& cfg, int t, Agent& agent, Stream& s) {
  for (const std::size_t d : visit_order(cfg, t)) s.send(Propose{d, agent.utter(d)});
  s.send(TurnEnd{t});
}

/// Judges incoming proposals until the peer's TURN_END for t.
std::size_t listen_turn(const GameConfig& cfg, int t, Agent& agent, Stream& s) {
  const auto rule = cfg.condition == Condition::AllAccept ? AcceptRule::Always : AcceptRule::MetropolisHastings;
  std::size_t accepted = 0;
  for (;;) {
    const Message m = s.receive();
    if (const auto* p = std::get_if<Propose>(&m)) {
      if (p->d >= agent.num_objects()) throw Error(ErrorCode::MalformedFrame, "PROPOSE for unknown object");
      if (agent.judge(p->d, p->w, rule) == p->w) ++accepted;
    } else if (const auto* e = std::get_if<TurnEnd>(&m)) {
      if (e->t != t) throw Error(ErrorCode::MalformedFrame, "TURN_END for iteration " + std::to_string(e->t));
      return accepted;
    } else {
      throw Error(ErrorCode::MalformedFrame, "unexpected " + std::string(kind_name(m)) + " during turn");
    }
  }
}

void expect_turn_end(Stream& s, int t) {
  const Message m = s.receive();
  const auto* e = std::get_if<TurnEnd>(&m);
  if (e == nullptr || e->t != t) throw Error(ErrorCode::MalformedFrame, "expected TURN_END");
}

}  // namespace

GameTrace run_remote_game(const GameConfig& cfg, Endpoint& ep, Agent& agent, const Matrix& observations,
                          const LabelVector& truth) {
  cfg.validate();
  if (cfg.condition == Condition::GibbsTopline) {
    throw Error(ErrorCode::InvalidConfig, "the centralised topline cannot run across processes");
  }
  const bool is_a = ep.role == Role::SpeakerFirst;
  if ((agent.id() == AgentId::A) != is_a) throw Error(ErrorCode::InvalidConfig, "speaker-first endpoint holds agent A");
  if (agent.num_objects() != cfg.d) throw Error(ErrorCode::LengthMismatch, "agent must hold D objects");

  GameTrace trace;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    for (int t = 1; t <= cfg.iterations; ++t) {
      const auto start = std::chrono::steady_clock::now();
      IterationRecord rec;
      rec.t = t;
      auto& s = ep.stream;
      switch (cfg.condition) {
        case Condition::Mh:
        case Condition::AllAccept:
          if (is_a) {
            speak_turn(cfg, t, agent, s);
            rec.signs_exchanged += cfg.d;
            rec.acc_ba = listen_turn(cfg, t, agent, s);
            agent.learn(observations, cfg.schedule);
          } else {
            rec.acc_ab = listen_turn(cfg, t, agent, s);
            agent.learn(observations, cfg.schedule);
            speak_turn(cfg, t, agent, s);
            rec.signs_exchanged += cfg.d;
          }
          break;
        case Condition::MhOneWay:
          if (is_a) {
            speak_turn(cfg, t, agent, s);
            rec.signs_exchanged += cfg.d;
            agent.resample_signs();
            agent.learn(observations, cfg.schedule);
          } else {
            rec.acc_ab = listen_turn(cfg, t, agent, s);
            agent.learn(observations, cfg.schedule);
          }
          break;
        case Condition::NoComm:
          agent.resample_signs();
          agent.learn(observations, cfg.schedule);
          s.send(TurnEnd{t});
          expect_turn_end(s, t);
          break;
        case Condition::GibbsTopline:
          break;
      }
      (is_a ? rec.w_a : rec.w_b) = agent.signs();
      const double ari = truth.size() >= 2 ? adjusted_rand_index(truth, agent.signs()) : nan;
      rec.ari_a = is_a ? ari : nan;
      rec.ari_b = is_a ? nan : ari;
      rec.kappa = nan;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      trace.iterations.push_back(std::move(rec));
    }
    if (is_a) {
      ep.stream.send(GameEnd{});
      const Message m = ep.stream.receive();
      if (!std::holds_alternative<GameEnd>(m)) throw Error(ErrorCode::MalformedFrame, "expected GAME_END");
    } else {
      const Message m = ep.stream.receive();
      if (!std::holds_alternative<GameEnd>(m)) throw Error(ErrorCode::MalformedFrame, "expected GAME_END");
      ep.stream.send(GameEnd{});
    }
  } catch (const RemoteGameError&) {
    throw;
  } catch (const Error& e) {
    throw RemoteGameError(e.code(), e.detail(), std::move(trace));
  }
  return trace;
}

RecordingProxy::RecordingProxy(const Address& listen, const Address& upstream)
    : listener_(listen), upstream_(upstream), port_(listener_.port()) {
  main_ = std::thread([this] {
    try {
      Stream client = listener_.accept(std::chrono::minutes(10));
      Stream server = connect(upstream_, std::chrono::seconds(60));
      client.set_timeout(std::chrono::minutes(30));
      server.set_timeout(std::chrono::minutes(30));
      std::thread back([&] { relay(server, client, false); });
      relay(client, server, true);
      back.join();
    } catch (const Error&) {
    }
  });
}

RecordingProxy::~RecordingProxy() { join(); }

void RecordingProxy::join() {
  if (main_.joinable()) main_.join();
}

std::vector<RecordingProxy::Frame> RecordingProxy::frames() const {
  std::lock_guard lock(mu_);
  return frames_;
}

void RecordingProxy::relay(Stream& from, Stream& to, bool from_client) {
  try {
    for (;;) {
      std::string frame = from.read_frame();
      {
        std::lock_guard lock(mu_);
        frames_.push_back({from_client, frame});
      }
      frame.push_back('\n');
      to.write_frame(frame);
    }
  } catch (const Error&) {
  }
}

}  // namespace mhng::wire
