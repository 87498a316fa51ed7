// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#include "imkit/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <deque>
#include <fstream>
#include <sstream>

#include "imkit/serial.hpp"

namespace imkit::protocol {

namespace {

constexpr char kTranscriptMagic[4] = {'I', 'M', 'T', 'R'};
constexpr std::uint16_t kTranscriptVersion = 1;
constexpr std::uint32_t kMaxFrame = 1u << 28;

void put_vec(std::ostream& os, const Vec& v) { linalg::write_vec(os, v); }

}  // namespace

std::vector<std::uint8_t> encode_message(const WireMessage& msg) {
    std::ostringstream os(std::ios::binary);
    os.put(static_cast<char>(msg.kind));
    serial::put_u64(os, msg.session.hi);
    serial::put_u64(os, msg.session.lo);
    serial::put_u64(os, msg.step);
    switch (msg.kind) {
        case MsgKind::Hello:
            serial::put_u32(os, static_cast<std::uint32_t>(msg.algo_name.size()));
            os.write(msg.algo_name.data(), static_cast<std::streamsize>(msg.algo_name.size()));
            break;
        case MsgKind::SchemeAck:
        case MsgKind::Done:
            break;
        case MsgKind::Input:
            put_vec(os, msg.ytilde);
            put_vec(os, msg.w);
            break;
        case MsgKind::Utility:
            put_vec(os, msg.utilde);
            break;
        case MsgKind::Error:
            serial::put_u32(os, msg.error_code);
            serial::put_u32(os, static_cast<std::uint32_t>(msg.error_text.size()));
            os.write(msg.error_text.data(), static_cast<std::streamsize>(msg.error_text.size()));
            break;
    }
    const std::string s = os.str();
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

WireMessage decode_message(const std::vector<std::uint8_t>& payload) {
    std::istringstream is(std::string(payload.begin(), payload.end()), std::ios::binary);
    WireMessage msg;
    const int kind = is.get();
    if (kind < 0 || kind > static_cast<int>(MsgKind::Error))
        throw ProtocolError("decode_message: bad message kind");
    msg.kind = static_cast<MsgKind>(kind);
    msg.session.hi = serial::get_u64(is);
    msg.session.lo = serial::get_u64(is);
    msg.step = serial::get_u64(is);
    switch (msg.kind) {
        case MsgKind::Hello: {
            const std::uint32_t len = serial::get_u32(is);
            if (len > 4096) throw ProtocolError("decode_message: algorithm name too long");
            msg.algo_name.resize(len);
            if (!is.read(msg.algo_name.data(), len))
                throw IoError("decode_message: truncated Hello");
            break;
        }
        case MsgKind::SchemeAck:
        case MsgKind::Done:
            break;
        case MsgKind::Input:
            msg.ytilde = linalg::read_vec(is);
            msg.w = linalg::read_vec(is);
            break;
        case MsgKind::Utility:
            msg.utilde = linalg::read_vec(is);
            break;
        case MsgKind::Error: {
            msg.error_code = serial::get_u32(is);
            const std::uint32_t len = serial::get_u32(is);
            if (len > 65536) throw ProtocolError("decode_message: error text too long");
            msg.error_text.resize(len);
            if (!is.read(msg.error_text.data(), len))
                throw IoError("decode_message: truncated Error");
            break;
        }
    }
    return msg;
}

// ---------------------------------------------------------------------------
// Loopback transport

struct LoopbackTransport::Shared {
    std::mutex m;
    std::condition_variable cv;
    std::deque<std::vector<std::uint8_t>> q_a_to_b, q_b_to_a;
    bool closed = false;
};

LoopbackTransport::LoopbackTransport(std::shared_ptr<Shared> shared, bool first)
    : shared_(std::move(shared)), first_(first) {}

std::pair<std::unique_ptr<LoopbackTransport>, std::unique_ptr<LoopbackTransport>>
LoopbackTransport::make_pair_() {
    auto shared = std::make_shared<Shared>();
    auto a = std::unique_ptr<LoopbackTransport>(new LoopbackTransport(shared, true));
    auto b = std::unique_ptr<LoopbackTransport>(new LoopbackTransport(shared, false));
    return {std::move(a), std::move(b)};
}

void LoopbackTransport::send_frame(const std::vector<std::uint8_t>& payload) {
    {
        std::lock_guard<std::mutex> lock(shared_->m);
        auto& q = first_ ? shared_->q_a_to_b : shared_->q_b_to_a;
        q.push_back(payload);
    }
    shared_->cv.notify_all();
}

std::optional<std::vector<std::uint8_t>> LoopbackTransport::recv_frame() {
    std::unique_lock<std::mutex> lock(shared_->m);
    auto& q = first_ ? shared_->q_b_to_a : shared_->q_a_to_b;
    shared_->cv.wait(lock, [&] { return !q.empty() || shared_->closed; });
    if (q.empty()) return std::nullopt;
    auto frame = std::move(q.front());
    q.pop_front();
    return frame;
}

void LoopbackTransport::close() {
    {
        std::lock_guard<std::mutex> lock(shared_->m);
        shared_->closed = true;
    }
    shared_->cv.notify_all();
}

// ---------------------------------------------------------------------------
// Socket transport

SocketTransport::SocketTransport(int fd) : fd_(fd) {}

SocketTransport::SocketTransport(SocketTransport&& other) noexcept : fd_(other.fd_) {
    other.fd_ = -1;
}

SocketTransport::~SocketTransport() {
    if (fd_ >= 0) ::close(fd_);
}

SocketTransport SocketTransport::connect_to(const std::string& host, std::uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw IoError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw ConfigError("connect_to: bad host address " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw IoError("connect_to: connect failed to " + host + ":" + std::to_string(port));
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return SocketTransport(fd);
}

void SocketTransport::send_frame(const std::vector<std::uint8_t>& payload) {
    if (payload.size() > kMaxFrame) throw ProtocolError("send_frame: frame too large");
    std::uint8_t header[4];
    const auto len = static_cast<std::uint32_t>(payload.size());
    for (int i = 0; i < 4; ++i) header[i] = static_cast<std::uint8_t>((len >> (8 * i)) & 0xff);
    auto send_all = [&](const std::uint8_t* data, std::size_t n) {
        std::size_t sent = 0;
        while (sent < n) {
            const ssize_t r = ::send(fd_, data + sent, n - sent, MSG_NOSIGNAL);
            if (r <= 0) throw IoError("send_frame: connection lost");
            sent += static_cast<std::size_t>(r);
        }
    };
    send_all(header, 4);
    if (!payload.empty()) send_all(payload.data(), payload.size());
}

std::optional<std::vector<std::uint8_t>> SocketTransport::recv_frame() {
    auto recv_all = [&](std::uint8_t* data, std::size_t n) -> bool {
        std::size_t got = 0;
        while (got < n) {
            const ssize_t r = ::recv(fd_, data + got, n - got, 0);
            if (r == 0) {
                if (got == 0) return false;
                throw IoError("recv_frame: truncated frame");
            }
            if (r < 0) throw IoError("recv_frame: connection error");
            got += static_cast<std::size_t>(r);
        }
        return true;
    };
    std::uint8_t header[4];
    if (!recv_all(header, 4)) return std::nullopt;
    std::uint32_t len = 0;
    for (int i = 3; i >= 0; --i) len = (len << 8) | header[i];
    if (len > kMaxFrame) throw ProtocolError("recv_frame: frame too large");
    std::vector<std::uint8_t> payload(len);
    if (len > 0 && !recv_all(payload.data(), len)) throw IoError("recv_frame: truncated frame");
    return payload;
}

TcpListener::TcpListener(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw IoError("listener: socket() failed");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd_);
        throw IoError("listener: bind failed on port " + std::to_string(port));
    }
    if (::listen(fd_, 16) != 0) {
        ::close(fd_);
        throw IoError("listener: listen failed");
    }
    socklen_t len = sizeof(addr);
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        ::close(fd_);
        throw IoError("listener: getsockname failed");
    }
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

SocketTransport TcpListener::accept_one() {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) throw IoError("listener: accept failed");
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return SocketTransport(fd);
}

// ---------------------------------------------------------------------------
// Transcript

void Transcript::append(Direction dir, const std::vector<std::uint8_t>& payload) {
    entries_.push_back({dir, payload});
}

std::vector<std::uint8_t> Transcript::bytes() const {
    std::ostringstream os(std::ios::binary);
    os.write(kTranscriptMagic, 4);
    serial::put_u16(os, kTranscriptVersion);
    for (const auto& e : entries_) {
        os.put(static_cast<char>(e.dir));
        serial::put_u32(os, static_cast<std::uint32_t>(e.payload.size()));
        os.write(reinterpret_cast<const char*>(e.payload.data()),
                 static_cast<std::streamsize>(e.payload.size()));
    }
    const std::string s = os.str();
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

void Transcript::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("transcript save: cannot open " + path);
    const auto b = bytes();
    os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!os) throw IoError("transcript save: write failure");
}

Transcript Transcript::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("transcript load: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kTranscriptMagic, 4) != 0)
        throw IoError("transcript load: bad magic");
    if (serial::get_u16(is) != kTranscriptVersion)
        throw IoError("transcript load: unsupported version");
    Transcript t;
    while (true) {
        const int dir = is.get();
        if (dir == EOF) break;
        if (dir != kClientToCloud && dir != kCloudToClient)
            throw IoError("transcript load: bad direction byte");
        const std::uint32_t len = serial::get_u32(is);
        if (len > kMaxFrame) throw IoError("transcript load: frame too large");
        std::vector<std::uint8_t> payload(len);
        if (len > 0 && !is.read(reinterpret_cast<char*>(payload.data()), len))
            throw IoError("transcript load: truncated frame");
        t.entries_.push_back({static_cast<Direction>(dir), std::move(payload)});
    }
    return t;
}

WireMessage Transcript::message(std::size_t i) const {
    return decode_message(entries_.at(i).payload);
}

void Transcript::validate() const {
    // Expected shape: Hello, SchemeAck, (Input, Utility)*, [Done].
    bool saw_hello = false, saw_ack = false, saw_done = false;
    bool input_pending = false;
    std::uint64_t expected_step = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const WireMessage msg = message(i);
        const Direction dir = entries_[i].dir;
        if (saw_done) throw ProtocolError("transcript: message after Done");
        switch (msg.kind) {
            case MsgKind::Hello:
                if (saw_hello || dir != kClientToCloud)
                    throw ProtocolError("transcript: misplaced Hello");
                saw_hello = true;
                break;
            case MsgKind::SchemeAck:
                if (!saw_hello || saw_ack || dir != kCloudToClient)
                    throw ProtocolError("transcript: misplaced SchemeAck");
                saw_ack = true;
                break;
            case MsgKind::Input:
                if (!saw_ack || dir != kClientToCloud)
                    throw ProtocolError("transcript: Input before handshake");
                if (input_pending)
                    throw ProtocolError("transcript: two Inputs without a Utility");
                if (msg.step != expected_step)
                    throw ProtocolError("transcript: non-monotone Input step");
                input_pending = true;
                break;
            case MsgKind::Utility:
                if (!input_pending || dir != kCloudToClient)
                    throw ProtocolError("transcript: Utility without pending Input");
                if (msg.step != expected_step)
                    throw ProtocolError("transcript: Utility step mismatch");
                input_pending = false;
                ++expected_step;
                break;
            case MsgKind::Done:
                if (dir != kClientToCloud || input_pending)
                    throw ProtocolError("transcript: misplaced Done");
                saw_done = true;
                break;
            case MsgKind::Error:
                // An Error terminates the session; nothing may follow.
                saw_done = true;
                break;
        }
    }
    if (input_pending) throw ProtocolError("transcript: dangling Input");
}

// ---------------------------------------------------------------------------
// Client session

ClientSession::ClientSession(std::shared_ptr<const EncodingScheme> scheme,
                             std::string algo_name, std::uint64_t seed)
    : scheme_(std::move(scheme)), algo_name_(std::move(algo_name)), rng_(seed) {
    id_.hi = rng_.next_u64();
    id_.lo = rng_.next_u64();
}

WireMessage ClientSession::make_hello() const {
    WireMessage msg;
    msg.kind = MsgKind::Hello;
    msg.session = id_;
    msg.algo_name = algo_name_;
    return msg;
}

void ClientSession::on_ack(const WireMessage& msg) {
    if (msg.kind == MsgKind::Error)
        throw ProtocolError("cloud rejected session: " + msg.error_text);
    if (msg.kind != MsgKind::SchemeAck || !(msg.session == id_))
        throw ProtocolError("expected SchemeAck for this session");
    acked_ = true;
}

WireMessage ClientSession::send_input(const Vec& y, const Vec& w) {
    if (!acked_) throw ProtocolError("send_input: session not acknowledged");
    if (!outstanding_.empty())
        throw ProtocolError("send_input: step " + std::to_string(outstanding_.begin()->first) +
                            " still outstanding");
    EncodedInput e = scheme_->encode_input(y, next_step_, rng_);
    WireMessage msg;
    msg.kind = MsgKind::Input;
    msg.session = id_;
    msg.step = next_step_;
    msg.ytilde = e.ytilde;
    msg.w = w;
    outstanding_.emplace(next_step_, std::move(e));
    ++next_step_;
    return msg;
}

Vec ClientSession::receive_utility(const WireMessage& msg) {
    if (msg.kind == MsgKind::Error)
        throw ProtocolError("cloud error (code " + std::to_string(msg.error_code) +
                            "): " + msg.error_text);
    if (msg.kind != MsgKind::Utility || !(msg.session == id_))
        throw ProtocolError("receive_utility: not a Utility for this session");
    auto it = outstanding_.find(msg.step);
    if (it == outstanding_.end())
        throw ProtocolError("receive_utility: no retained input for step " +
                            std::to_string(msg.step));
    EncodedUtility eu;
    eu.utilde = msg.utilde;
    eu.step = msg.step;
    Vec u = scheme_->decode_utility(eu, it->second);
    outstanding_.erase(it);
    return u;
}

WireMessage ClientSession::make_done() const {
    WireMessage msg;
    msg.kind = MsgKind::Done;
    msg.session = id_;
    msg.step = next_step_;
    return msg;
}

// ---------------------------------------------------------------------------
// Cloud server

CloudServer::CloudServer(std::shared_ptr<const EncodingScheme> scheme, AlgorithmResolver resolver)
    : scheme_(std::move(scheme)), resolver_(std::move(resolver)) {}

WireMessage CloudServer::make_error(const SessionId& sid, std::uint32_t code,
                                    const std::string& text) {
    WireMessage msg;
    msg.kind = MsgKind::Error;
    msg.session = sid;
    msg.error_code = code;
    msg.error_text = text;
    return msg;
}

WireMessage CloudServer::handle(const WireMessage& msg) {
    std::lock_guard<std::mutex> lock(mutex_);
    switch (msg.kind) {
        case MsgKind::Hello: {
            if (sessions_.count(msg.session))
                return make_error(msg.session, kErrState, "session already exists");
            auto spec = resolver_(msg.algo_name);
            if (!spec)
                return make_error(msg.session, kErrUnknownAlgorithm,
                                  "unknown algorithm: " + msg.algo_name);
            Session s;
            s.target = std::make_unique<TargetAlgorithm>(std::move(spec->alg), scheme_,
                                                         spec->local_steps);
            sessions_.emplace(msg.session, std::move(s));
            WireMessage ack;
            ack.kind = MsgKind::SchemeAck;
            ack.session = msg.session;
            return ack;
        }
        case MsgKind::Input: {
            auto it = sessions_.find(msg.session);
            if (it == sessions_.end())
                return make_error(msg.session, kErrUnknownSession, "unknown session");
            Session& s = it->second;
            if (s.poisoned || s.done)
                return make_error(msg.session, kErrState, "session closed");
            if (msg.step != s.expected_step) {
                s.poisoned = true;
                return make_error(msg.session, kErrOutOfOrder,
                                  "expected step " + std::to_string(s.expected_step));
            }
            EncodedInput in;
            in.ytilde = msg.ytilde;
            in.step = msg.step;
            try {
                EncodedUtility out = s.target->step(in, msg.w);
                ++s.expected_step;
                WireMessage reply;
                reply.kind = MsgKind::Utility;
                reply.session = msg.session;
                reply.step = out.step;
                reply.utilde = std::move(out.utilde);
                return reply;
            } catch (const NumericError& e) {
                s.poisoned = true;
                return make_error(msg.session, kErrNumeric, e.what());
            } catch (const std::exception& e) {
                s.poisoned = true;
                return make_error(msg.session, kErrState, e.what());
            }
        }
        case MsgKind::Done: {
            auto it = sessions_.find(msg.session);
            if (it != sessions_.end()) it->second.done = true;
            WireMessage reply;
            reply.kind = MsgKind::Done;
            reply.session = msg.session;
            reply.step = msg.step;
            return reply;
        }
        default:
            return make_error(msg.session, kErrBadFrame, "unexpected message kind");
    }
}

void CloudServer::serve_connection(Transport& transport) {
    while (true) {
        auto frame = transport.recv_frame();
        if (!frame) return;
        WireMessage msg;
        try {
            msg = decode_message(*frame);
        } catch (const std::exception& e) {
            transport.send_frame(encode_message(make_error({}, kErrBadFrame, e.what())));
            return;
        }
        const WireMessage reply = handle(msg);
        if (msg.kind == MsgKind::Done) {
            // Acknowledge nothing on the wire: Done terminates the stream.
            return;
        }
        transport.send_frame(encode_message(reply));
        if (reply.kind == MsgKind::Error) return;
    }
}

std::vector<Vec> run_client_session(Transport& transport, ClientSession& session,
                                    const std::vector<StepInput>& inputs,
                                    Transcript* transcript) {
    auto send = [&](const WireMessage& msg) {
        const auto payload = encode_message(msg);
        if (transcript) transcript->append(Transcript::kClientToCloud, payload);
        transport.send_frame(payload);
    };
    auto recv = [&]() {
        auto frame = transport.recv_frame();
        if (!frame) throw ProtocolError("connection closed mid-session");
        if (transcript) transcript->append(Transcript::kCloudToClient, *frame);
        return decode_message(*frame);
    };

    send(session.make_hello());
    session.on_ack(recv());

    std::vector<Vec> utilities;
    utilities.reserve(inputs.size());
    for (const auto& in : inputs) {
        send(session.send_input(in.y, in.w));
        utilities.push_back(session.receive_utility(recv()));
    }
    send(session.make_done());
    return utilities;
}

}  // namespace imkit::protocol
