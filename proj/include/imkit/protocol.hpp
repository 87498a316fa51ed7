// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "imkit/algorithm.hpp"

namespace imkit::protocol {

enum class MsgKind : std::uint8_t {
    Hello = 0,
    SchemeAck = 1,
    Input = 2,
    Utility = 3,
    Done = 4,
    Error = 5,
};

enum ErrorCode : std::uint32_t {
    kErrBadFrame = 1,
    kErrUnknownAlgorithm = 2,
    kErrUnknownSession = 3,
    kErrOutOfOrder = 4,
    kErrNumeric = 5,
    kErrState = 6,
};

struct SessionId {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;
    bool operator==(const SessionId&) const = default;
    bool operator<(const SessionId& o) const { return hi != o.hi ? hi < o.hi : lo < o.lo; }
};

struct WireMessage {
    MsgKind kind = MsgKind::Hello;
    SessionId session;
    std::uint64_t step = 0;
    std::string algo_name;  // Hello
    Vec ytilde;             // Input
    Vec w;                  // Input (travels in clear)
    Vec utilde;             // Utility
    std::uint32_t error_code = 0;  // Error
    std::string error_text;        // Error
};

// Payload bytes (no frame header). Little-endian throughout.
std::vector<std::uint8_t> encode_message(const WireMessage& msg);
WireMessage decode_message(const std::vector<std::uint8_t>& payload);

// Ordered, reliable, bidirectional frame stream; framing = u32 length + payload.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual void send_frame(const std::vector<std::uint8_t>& payload) = 0;
    // nullopt on clean end-of-stream.
    virtual std::optional<std::vector<std::uint8_t>> recv_frame() = 0;
};

// In-process queue pair for simulations and tests.
class LoopbackTransport : public Transport {
  public:
    // Two connected endpoints.
    static std::pair<std::unique_ptr<LoopbackTransport>, std::unique_ptr<LoopbackTransport>>
    make_pair_();

    void send_frame(const std::vector<std::uint8_t>& payload) override;
    std::optional<std::vector<std::uint8_t>> recv_frame() override;
    void close();

    struct Shared;

  private:
    LoopbackTransport(std::shared_ptr<Shared> shared, bool first);
    std::shared_ptr<Shared> shared_;
    bool first_;
};

// Blocking TCP transport with the same framing.
class SocketTransport : public Transport {
  public:
    static SocketTransport connect_to(const std::string& host, std::uint16_t port);
    explicit SocketTransport(int fd);
    SocketTransport(SocketTransport&& other) noexcept;
    ~SocketTransport() override;

    void send_frame(const std::vector<std::uint8_t>& payload) override;
    std::optional<std::vector<std::uint8_t>> recv_frame() override;

  private:
    int fd_ = -1;
};

class TcpListener {
  public:
    explicit TcpListener(std::uint16_t port);  // 0 picks an ephemeral port
    ~TcpListener();
    std::uint16_t port() const { return port_; }
    SocketTransport accept_one();
    void close();

  private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

// Ordered record of one session's wire messages; replayable and bit-exact.
class Transcript {
  public:
    enum Direction : std::uint8_t { kClientToCloud = 0, kCloudToClient = 1 };

    void append(Direction dir, const std::vector<std::uint8_t>& payload);
    std::vector<std::uint8_t> bytes() const;  // serialized file image
    void save(const std::string& path) const;
    static Transcript load(const std::string& path);

    std::size_t size() const { return entries_.size(); }
    Direction direction(std::size_t i) const { return entries_[i].dir; }
    WireMessage message(std::size_t i) const;

    // Strict alternation and step monotonicity; throws ProtocolError.
    void validate() const;

  private:
    struct Entry {
        Direction dir;
        std::vector<std::uint8_t> payload;
    };
    std::vector<Entry> entries_;
};

// User-side session: encodes inputs, retains ytilde per outstanding step
// (the decoder needs it), decodes returned utilities.
class ClientSession {
  public:
    ClientSession(std::shared_ptr<const EncodingScheme> scheme, std::string algo_name,
                  std::uint64_t seed);

    WireMessage make_hello() const;
    void on_ack(const WireMessage& msg);

    // Throws ProtocolError if a step is already outstanding.
    WireMessage send_input(const Vec& y, const Vec& w);

    // Decodes against the retained input of the same step and releases it.
    Vec receive_utility(const WireMessage& msg);

    WireMessage make_done() const;
    const SessionId& id() const { return id_; }
    bool acked() const { return acked_; }
    std::uint64_t next_step() const { return next_step_; }

  private:
    std::shared_ptr<const EncodingScheme> scheme_;
    std::string algo_name_;
    Rng rng_;
    SessionId id_;
    bool acked_ = false;
    std::uint64_t next_step_ = 0;
    std::map<std::uint64_t, EncodedInput> outstanding_;
};

struct AlgorithmSpec {
    DynamicAlgorithm alg;
    int local_steps = 1;
};

using AlgorithmResolver = std::function<std::optional<AlgorithmSpec>(const std::string&)>;

// Cloud-side dispatcher. One target-algorithm instance per session; sessions
// are independent and may be served concurrently (the map is locked, each
// session is driven by one handler at a time).
class CloudServer {
  public:
    CloudServer(std::shared_ptr<const EncodingScheme> scheme, AlgorithmResolver resolver);

    // Full state machine; never throws on protocol violations, returns Error
    // messages instead (the offending session is poisoned).
    WireMessage handle(const WireMessage& msg);

    // recv/handle/send loop until Done, Error, or end-of-stream.
    void serve_connection(Transport& transport);

  private:
    struct Session {
        std::unique_ptr<TargetAlgorithm> target;
        std::uint64_t expected_step = 0;
        bool poisoned = false;
        bool done = false;
    };

    WireMessage make_error(const SessionId& sid, std::uint32_t code, const std::string& text);

    std::shared_ptr<const EncodingScheme> scheme_;
    AlgorithmResolver resolver_;
    std::mutex mutex_;
    std::map<SessionId, Session> sessions_;
};

// Drives a full session over a transport: hello/ack, one input per step with
// its utility decoded as it returns, then done. Records every frame in the
// transcript when one is supplied. Returns the decoded utilities.
std::vector<Vec> run_client_session(Transport& transport, ClientSession& session,
                                    const std::vector<StepInput>& inputs,
                                    Transcript* transcript);

}  // namespace imkit::protocol
