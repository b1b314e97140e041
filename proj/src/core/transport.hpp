#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "error.hpp"
#include "game.hpp"

namespace mhng::wire {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 4096;

struct Hello {
  int protocol_version = kProtocolVersion;
  std::uint64_t k = 0;
  std::uint64_t d = 0;
  std::uint64_t seed_echo = 0;
  bool operator==(const Hello&) const = default;
};

struct Propose {
  std::uint64_t d = 0;
  Sign w = 0;
  bool operator==(const Propose&) const = default;
};

struct TurnEnd {
  std::int64_t t = 0;
  bool operator==(const TurnEnd&) const = default;
};

struct GameEnd {
  bool operator==(const GameEnd&) const = default;
};

/// The only things that ever cross between agent processes. None of the
/// kinds has room for latents, parameters or gradients, and there is no
/// accept/reject reply.
using Message = std::variant<Hello, Propose, TurnEnd, GameEnd>;

std::string_view kind_name(const Message& m) noexcept;

/// Newline-terminated JSON object whose "k" field names the kind.
std::string encode(const Message& m);
/// Accepts one frame with or without its trailing newline.
Message decode(std::string_view frame);

/// Blocking line-framed byte stream over a socket.
class Stream {
 public:
  Stream() = default;
  explicit Stream(int fd, std::chrono::milliseconds timeout = std::chrono::seconds(60));
  Stream(Stream&& other) noexcept;
  Stream& operator=(Stream&& other) noexcept;
  Stream(const Stream&) = delete;
  Stream& operator=(const Stream&) = delete;
  ~Stream();

  bool is_open() const noexcept { return fd_ >= 0; }
  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }
  void write_frame(std::string_view frame);
  /// Next frame without its newline.
  std::string read_frame();
  void send(const Message& m) { write_frame(encode(m)); }
  Message receive() { return decode(read_frame()); }
  void close();

 private:
  int fd_ = -1;
  std::chrono::milliseconds timeout_{60000};
  std::string buffer_;
};

/// "host:port" for TCP, "unix:/path" for a local-domain socket.
struct Address {
  enum class Family { Tcp, Unix } family = Family::Tcp;
  std::string host;
  std::uint16_t port = 0;
  std::string path;

  static Address parse(std::string_view text);
};

class Listener {
 public:
  explicit Listener(const Address& addr);
  Listener(Listener&&) noexcept;
  Listener& operator=(Listener&&) noexcept;
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  ~Listener();

  /// Actual port after binding port 0.
  std::uint16_t port() const noexcept { return port_; }
  Stream accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::string unix_path_;
};

/// Retries until the peer is listening or the timeout elapses.
Stream connect(const Address& addr, std::chrono::milliseconds timeout);

enum class Role { SpeakerFirst, ListenerFirst };

struct Endpoint {
  Role role = Role::SpeakerFirst;
  Stream stream;
  int protocol_version = 0;
};

/// Exchanges HELLO frames; throws HandshakeMismatch on version, K or D mismatch.
Hello handshake(Endpoint& ep, const Hello& mine);

/// Thrown when a remote game stops early; carries iterations completed up
/// to the last TURN_END.
class RemoteGameError : public Error {
 public:
  RemoteGameError(ErrorCode code, const std::string& what, GameTrace partial)
      : Error(code, what), partial_(std::move(partial)) {}
  const GameTrace& partial() const noexcept { return partial_; }

 private:
  GameTrace partial_;
};

/// Plays this process's half of the game. The speaker-first endpoint holds
/// agent A. Only this agent's signs are recorded; kappa is NaN because the
/// peer's signs are never seen.
GameTrace run_remote_game(const GameConfig& cfg, Endpoint& ep, Agent& agent, const Matrix& observations,
                          const LabelVector& truth);

/// TCP/Unix forwarder that records every frame it relays.
class RecordingProxy {
 public:
  struct Frame {
    bool from_client = false;
    std::string text;
  };

  RecordingProxy(const Address& listen, const Address& upstream);
  ~RecordingProxy();
  RecordingProxy(const RecordingProxy&) = delete;
  RecordingProxy& operator=(const RecordingProxy&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  /// Waits for both relay directions to finish.
  void join();
  std::vector<Frame> frames() const;

 private:
  void relay(Stream& from, Stream& to, bool from_client);

  Listener listener_;
  Address upstream_;
  std::uint16_t port_ = 0;
  std::thread main_;
  mutable std::mutex mu_;
  std::vector<Frame> frames_;
};

}  // namespace mhng::wire
