#pragma once

// Blocking TCP helpers with poll()-based deadlines.

#include <pedvit/errors.hpp>
#include <pedvit/wire.hpp>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <utility>

namespace pedvit::net {

using Clock = std::chrono::steady_clock;

class NetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TimeoutError : public NetError {
public:
    using NetError::NetError;
};

class ClosedError : public NetError {
public:
    using NetError::NetError;
};

class AddressInUse : public NetError {
public:
    using NetError::NetError;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = wire::kDefaultPort;

    std::string to_string() const { return host + ":" + std::to_string(port); }
    friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

inline Endpoint parse_endpoint(const std::string& text) {
    Endpoint e;
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) {
        e.host = text;
        return e;
    }
    e.host = text.substr(0, colon);
    if (e.host.empty()) e.host = "0.0.0.0";
    const std::string port = text.substr(colon + 1);
    try {
        std::size_t used = 0;
        const unsigned long v = std::stoul(port, &used);
        if (used != port.size() || v > 65535) throw std::out_of_range("port");
        e.port = static_cast<std::uint16_t>(v);
    } catch (const std::exception&) {
        throw InputError("bad endpoint '" + text + "'");
    }
    return e;
}

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    void close() noexcept {
        if (fd_ >= 0) ::close(std::exchange(fd_, -1));
    }
    void shutdown() noexcept {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

private:
    int fd_ = -1;
};

namespace detail {

inline sockaddr_in resolve(const Endpoint& ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw NetError("cannot resolve " + ep.host);
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

inline int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

inline void wait_ready(int fd, short events, Clock::time_point deadline) {
    for (;;) {
        pollfd p{fd, events, 0};
        const int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc > 0) return;
        if (rc == 0) throw TimeoutError("deadline exceeded");
        if (errno != EINTR) throw NetError(std::string("poll: ") + std::strerror(errno));
    }
}

} // namespace detail

inline Socket connect_tcp(const Endpoint& ep, Clock::time_point deadline) {
    const sockaddr_in addr = detail::resolve(ep);
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) throw NetError(std::string("socket: ") + std::strerror(errno));
    const int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        if (errno != EINPROGRESS) throw NetError("connect " + ep.to_string() + ": " + std::strerror(errno));
        detail::wait_ready(s.fd(), POLLOUT, deadline);
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) throw NetError("connect " + ep.to_string() + ": " + std::strerror(err));
    }
    ::fcntl(s.fd(), F_SETFL, flags);
    const int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

// Port 0 binds an ephemeral port; see bound_port().
inline Socket listen_tcp(const Endpoint& ep, int backlog = 64) {
    const sockaddr_in addr = detail::resolve(ep);
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) throw NetError(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        if (errno == EADDRINUSE) throw AddressInUse("address in use: " + ep.to_string());
        throw NetError("bind " + ep.to_string() + ": " + std::strerror(errno));
    }
    if (::listen(s.fd(), backlog) != 0) throw NetError(std::string("listen: ") + std::strerror(errno));
    return s;
}

inline std::uint16_t bound_port(const Socket& s) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
}

inline void send_all(const Socket& s, std::span<const std::uint8_t> bytes, Clock::time_point deadline) {
    std::size_t off = 0;
    while (off < bytes.size()) {
        detail::wait_ready(s.fd(), POLLOUT, deadline);
        const ssize_t n = ::send(s.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw ClosedError(std::string("send: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

// Returns false on orderly EOF before the first byte.
inline bool recv_exact(const Socket& s, std::span<std::uint8_t> out, Clock::time_point deadline) {
    std::size_t off = 0;
    while (off < out.size()) {
        detail::wait_ready(s.fd(), POLLIN, deadline);
        const ssize_t n = ::recv(s.fd(), out.data() + off, out.size() - off, 0);
        if (n == 0) {
            if (off == 0) return false;
            throw wire::FramingError("connection closed mid-frame");
        }
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw ClosedError(std::string("recv: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

inline void write_message(const Socket& s, const wire::Message& m, Clock::time_point deadline) {
    send_all(s, wire::encode_frame(m), deadline);
}

// nullopt on clean EOF at a frame boundary.
inline std::optional<wire::Message> read_message(const Socket& s, Clock::time_point deadline) {
    std::uint8_t head[4];
    if (!recv_exact(s, head, deadline)) return std::nullopt;
    std::uint32_t len = 0;
    std::memcpy(&len, head, 4);
    if (len > wire::kMaxFrameBytes) throw wire::LimitError("frame length exceeds 64 MiB");
    std::vector<std::uint8_t> payload(len);
    if (len > 0 && !recv_exact(s, payload, deadline)) throw wire::FramingError("connection closed mid-frame");
    return wire::decode_payload(payload);
}

inline Clock::time_point far_future() { return Clock::now() + std::chrono::hours(24 * 365); }

} // namespace pedvit::net
